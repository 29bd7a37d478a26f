//! Command-line front end: analyze, compose, perturb, evolve, figure1.
//!
//! JSON reports go to stdout unless `--out` is given; plot traces go to
//! CSV files. Exit codes: 0 success, 2 invalid input, 3 numerical
//! failure, 4 violated structural assumption.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::composite::{predict, verify_composite, CompositePrediction, SubsystemSpec};
use crate::dynamics::{
    bell_states, coupled_pair_composite, evolve, first_recovery_time, uniform_grid,
    EvolutionTrace, PropagatorPolicy,
};
use crate::error::{Error, Result};
use crate::io::{
    self, load_config, load_matrix_file, write_csv, write_text_atomic, ExperimentConfig,
    ToleranceOverrides, FORMAT_TAG,
};
use crate::linalg::{require_square, CMatrix, ToleranceConfig, C64};
use crate::perturbation::{
    locality_experiment, perturb_and_split, PerturbationReport, PerturbationSpec,
};
use crate::spectral::{cluster_spectrum, ep_signature, DegeneracyCluster, EPSignature};
use crate::synth::random_dense;

#[derive(Debug, Parser)]
#[command(name = "epkit", version, about = "Spectral analysis of defective matrices and their Kronecker-sum composites")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
struct ToleranceFlags {
    /// Relative threshold for rank decisions.
    #[arg(long)]
    rank_rtol: Option<f64>,
    /// Absolute eigenvalue clustering distance (scaled by matrix norm).
    #[arg(long)]
    cluster_atol: Option<f64>,
}

impl ToleranceFlags {
    fn apply(&self, base: ToleranceConfig) -> Result<ToleranceConfig> {
        io::ToleranceOverrides {
            rank_rtol: self.rank_rtol,
            cluster_atol: self.cluster_atol,
            nilpotency_rtol: None,
        }
        .apply(base)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report eigenvalue clusters and the degeneracy signature of each.
    Analyze {
        /// Matrix file (versioned JSON).
        matrix: PathBuf,
        #[command(flatten)]
        tol: ToleranceFlags,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the signature of a Kronecker-sum composite from its parts.
    Compose {
        /// Subsystem matrix files, one per part.
        #[arg(required = true)]
        subsystems: Vec<PathBuf>,
        /// Also build the composite and check the prediction against it.
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        tol: ToleranceFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep perturbation strengths and report eigenvalue splittings.
    Perturb {
        /// Experiment config (kind = "perturb").
        config: PathBuf,
        /// Replace the config's epsilon values.
        #[arg(long = "epsilon", num_args = 1..)]
        epsilons: Vec<f64>,
        /// RNG seed for randomly drawn perturbations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads for the sweep (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propagate an initial state and record norm growth and concurrence.
    Evolve {
        /// Experiment config (kind = "evolve").
        config: PathBuf,
        /// Override the config's time horizon.
        #[arg(long)]
        t_max: Option<f64>,
        /// Override the config's sample count.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Concurrence traces of the four maximally entangled states on a
    /// pair of coupled two-level systems.
    Figure1 {
        /// Experiment config (kind = "figure1") supplying defaults.
        config: Option<PathBuf>,
        /// Back-coupling strength of each two-level factor.
        #[arg(long, allow_hyphen_values = true)]
        epsilon: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// CSV output path (default: figure1.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Analyze { matrix, tol, out } => cmd_analyze(&matrix, &tol, out.as_deref()),
        Command::Compose {
            subsystems,
            verify,
            tol,
            out,
        } => cmd_compose(&subsystems, verify, &tol, out.as_deref()),
        Command::Perturb {
            config,
            epsilons,
            seed,
            jobs,
            out,
        } => {
            configure_jobs(jobs);
            cmd_perturb(&config, &epsilons, seed, out.as_deref())
        }
        Command::Evolve {
            config,
            t_max,
            samples,
            out,
        } => cmd_evolve(&config, t_max, samples, out.as_deref()),
        Command::Figure1 {
            config,
            epsilon,
            t_max,
            samples,
            out,
            jobs,
        } => {
            configure_jobs(jobs);
            cmd_figure1(config.as_deref(), epsilon, t_max, samples, out.as_deref())
        }
    }
}

fn configure_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Ignores failure when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn emit_json<T: Serialize>(report: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    match out {
        Some(path) => write_text_atomic(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_sibling(out: Option<&Path>, default_name: &str) -> PathBuf {
    match out {
        Some(p) => p.with_extension("csv"),
        None => PathBuf::from(default_name),
    }
}

fn spectral_mean(h: &CMatrix) -> C64 {
    let dim = h.nrows();
    (0..dim).map(|i| h[(i, i)]).sum::<C64>() / C64::new(dim as f64, 0.0)
}

fn time_grid(t_max: f64, samples: usize) -> Result<Vec<f64>> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::InvalidInput("t_max must be positive and finite".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("samples must be at least 2".into()));
    }
    Ok(uniform_grid(t_max, samples))
}

#[derive(Serialize)]
struct ClusterReport {
    eigenvalue: [f64; 2],
    algebraic_multiplicity: usize,
    geometric_multiplicity: usize,
    order: usize,
    xi: f64,
    jordan_block_sizes: Vec<usize>,
}

impl ClusterReport {
    fn from_signature(sig: &EPSignature) -> Self {
        Self {
            eigenvalue: io::pair(sig.eigenvalue),
            algebraic_multiplicity: sig.algebraic_multiplicity,
            geometric_multiplicity: sig.geometric_multiplicity,
            order: sig.order,
            xi: sig.xi,
            jordan_block_sizes: sig.jordan_block_sizes.clone(),
        }
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    format: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    dim: usize,
    cluster_count: usize,
    clusters: Vec<ClusterReport>,
}

fn cmd_analyze(matrix: &Path, tol_flags: &ToleranceFlags, out: Option<&Path>) -> Result<()> {
    let file = load_matrix_file(matrix)?;
    let h = file.to_matrix()?;
    require_square(&h, "analyze input")?;
    let tol = tol_flags.apply(ToleranceConfig::scaled_to(&h))?;
    let clusters = cluster_spectrum(&h, &tol)?;
    let mut reports = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let sig = ep_signature(&h, cluster, &tol)?;
        reports.push(ClusterReport::from_signature(&sig));
    }
    let report = AnalyzeReport {
        format: FORMAT_TAG,
        command: "analyze",
        label: file.label.clone(),
        dim: h.nrows(),
        cluster_count: reports.len(),
        clusters: reports,
    };
    emit_json(&report, out)
}

#[derive(Serialize)]
struct PredictionReport {
    ep_eigenvalue: [f64; 2],
    ep_order: usize,
    xi: f64,
    max_geometric_multiplicity: usize,
    separable_state_count: usize,
    ep_state: Vec<[f64; 2]>,
}

impl PredictionReport {
    fn from_prediction(p: &CompositePrediction) -> Self {
        Self {
            ep_eigenvalue: io::pair(p.ep_eigenvalue),
            ep_order: p.ep_order,
            xi: p.xi,
            max_geometric_multiplicity: p.max_geometric_multiplicity,
            separable_state_count: p.separable_state_count,
            ep_state: (0..p.ep_state.nrows()).map(|i| io::pair(p.ep_state[i])).collect(),
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    name: String,
    passed: bool,
    residual: f64,
    detail: String,
}

#[derive(Serialize)]
struct VerificationJson {
    observed_order: usize,
    observed_geometric_multiplicity: usize,
    observed_block_sizes: Vec<usize>,
    extra_state_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra_state_concurrences: Option<Vec<f64>>,
    checks: Vec<CheckReport>,
}

#[derive(Serialize)]
struct ComposeReport {
    format: &'static str,
    command: &'static str,
    subsystem_count: usize,
    subsystem_orders: Vec<usize>,
    composite_dim: usize,
    prediction: PredictionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    verified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<VerificationJson>,
}

fn cmd_compose(
    subsystems: &[PathBuf],
    verify: bool,
    tol_flags: &ToleranceFlags,
    out: Option<&Path>,
) -> Result<()> {
    let mut parts = Vec::with_capacity(subsystems.len());
    for path in subsystems {
        let file = load_matrix_file(path)?;
        let h = file.to_matrix()?;
        require_square(&h, "subsystem")?;
        let tol = tol_flags.apply(ToleranceConfig::scaled_to(&h))?;
        let eigenvalue = spectral_mean(&h);
        let label = file
            .label
            .clone()
            .unwrap_or_else(|| path.display().to_string());
        parts.push(SubsystemSpec::new(h, eigenvalue, label, &tol)?);
    }
    let mut sigs = Vec::with_capacity(parts.len());
    for part in &parts {
        let tol = tol_flags.apply(ToleranceConfig::scaled_to(&part.hamiltonian))?;
        sigs.push(part.signature(&tol)?);
    }
    let prediction = predict(&parts, &sigs)?;
    let composite_dim = parts.iter().map(|p| p.hamiltonian.nrows()).product();
    let mut report = ComposeReport {
        format: FORMAT_TAG,
        command: "compose",
        subsystem_count: parts.len(),
        subsystem_orders: sigs.iter().map(|s| s.order).collect(),
        composite_dim,
        prediction: PredictionReport::from_prediction(&prediction),
        verified: None,
        verification: None,
    };
    if verify {
        let h = crate::composite::compose(&parts)?;
        let tol = tol_flags.apply(ToleranceConfig::scaled_to(&h))?;
        let verification = verify_composite(&parts, &prediction, &tol)?;
        report.verified = Some(verification.checks.iter().all(|c| c.passed));
        report.verification = Some(VerificationJson {
            observed_order: verification.observed_order,
            observed_geometric_multiplicity: verification.observed_geometric_multiplicity,
            observed_block_sizes: verification.observed_block_sizes.clone(),
            extra_state_count: verification.extra_states.len(),
            extra_state_concurrences: verification.extra_state_concurrences.clone(),
            checks: verification
                .checks
                .iter()
                .map(|c| CheckReport {
                    name: c.name.to_string(),
                    passed: c.passed,
                    residual: c.residual,
                    detail: c.detail.clone(),
                })
                .collect(),
        });
    }
    emit_json(&report, out)
}

#[derive(Serialize)]
struct SampleJson {
    epsilon: f64,
    max_splitting: f64,
    spread: f64,
    bound_rhs: f64,
    slack: f64,
    bound_satisfied: bool,
    split_eigenvalues: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct FitJson {
    exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    half_width: Option<f64>,
    points_used: usize,
}

#[derive(Serialize)]
struct PerturbJson {
    order: usize,
    xi: f64,
    hp_norm: f64,
    all_bounds_satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    fitted_exponent: Option<FitJson>,
    samples: Vec<SampleJson>,
}

impl PerturbJson {
    fn from_report(r: &PerturbationReport) -> Self {
        Self {
            order: r.order,
            xi: r.xi,
            hp_norm: r.hp_norm,
            all_bounds_satisfied: r.all_bounds_satisfied(),
            fitted_exponent: r.fitted_exponent.as_ref().map(|f| FitJson {
                exponent: f.exponent,
                half_width: f.half_width,
                points_used: f.points_used,
            }),
            samples: r
                .samples
                .iter()
                .map(|s| SampleJson {
                    epsilon: s.epsilon,
                    max_splitting: s.max_splitting,
                    spread: s.spread,
                    bound_rhs: s.bound_rhs,
                    slack: s.slack,
                    bound_satisfied: s.bound_satisfied,
                    split_eigenvalues: s.split_eigenvalues.iter().map(|&z| io::pair(z)).collect(),
                })
                .collect(),
        }
    }

    fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| vec![s.epsilon, s.max_splitting, s.bound_rhs, s.slack])
            .collect()
    }
}

#[derive(Serialize)]
struct PerturbReport {
    format: &'static str,
    command: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<PerturbJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    local: Option<PerturbJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    global: Option<PerturbJson>,
    csv: Vec<String>,
}

const PERTURB_CSV_HEADER: [&str; 4] = ["epsilon", "max_splitting", "bound_rhs", "slack"];

fn cmd_perturb(
    config_path: &Path,
    epsilon_override: &[f64],
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let (config, base) = load_config(config_path)?;
    let ExperimentConfig::Perturb {
        matrix,
        epsilons,
        perturbation,
        random_global,
        local,
        compare_locality,
        eigenvalue,
        tolerances,
    } = config
    else {
        return Err(Error::InvalidInput(
            "config kind must be \"perturb\" for this command".into(),
        ));
    };
    let eps = if epsilon_override.is_empty() {
        epsilons.values()?
    } else {
        epsilon_override.to_vec()
    };

    if let Some(cmp) = compare_locality {
        if matrix.is_some() || perturbation.is_some() || random_global || local.is_some() {
            return Err(Error::InvalidInput(
                "compare_locality excludes the other perturbation modes".into(),
            ));
        }
        return run_locality_comparison(&cmp, &base, &eps, seed, &tolerances, out);
    }

    let source = matrix.ok_or_else(|| {
        Error::InvalidInput("perturb config needs a \"matrix\" unless compare_locality is set".into())
    })?;
    let h = source.load(&base)?.to_matrix()?;
    require_square(&h, "perturb input")?;
    let tol = tolerances.apply(ToleranceConfig::scaled_to(&h))?;
    let level = eigenvalue.map(io::from_pair).unwrap_or_else(|| spectral_mean(&h));
    let sig = ep_signature(&h, &DegeneracyCluster::spanning(h.nrows(), level), &tol)?;

    let modes = [
        perturbation.is_some(),
        random_global,
        local.is_some(),
    ]
    .iter()
    .filter(|&&m| m)
    .count();
    if modes != 1 {
        return Err(Error::InvalidInput(
            "set exactly one of: perturbation, random_global, local".into(),
        ));
    }

    let spec = if let Some(src) = perturbation {
        let hp = src.load(&base)?.to_matrix()?;
        PerturbationSpec::global(hp, eps)?
    } else if random_global {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = random_dense(h.nrows(), &mut rng);
        let norm = crate::linalg::spectral_norm(&raw);
        PerturbationSpec::global(crate::linalg::scale(C64::new(1.0 / norm, 0.0), &raw), eps)?
    } else {
        let cfg = local.expect("mode check guarantees presence");
        let factor = cfg.factor.load(&base)?.to_matrix()?;
        let expected: usize = cfg.dims.iter().product();
        if expected != h.nrows() {
            return Err(Error::InvalidInput(format!(
                "subsystem dims {:?} imply dimension {expected}, matrix has {}",
                cfg.dims,
                h.nrows()
            )));
        }
        PerturbationSpec::local_embedded(&cfg.dims, cfg.subsystem, &factor, eps)?
    };

    let report = perturb_and_split(&h, &sig, &spec)?;
    let json = PerturbJson::from_report(&report);
    let csv_path = csv_sibling(out, "perturb.csv");
    write_csv(&csv_path, &PERTURB_CSV_HEADER, &json.csv_rows())?;
    let wrapper = PerturbReport {
        format: FORMAT_TAG,
        command: "perturb",
        seed,
        report: Some(json),
        local: None,
        global: None,
        csv: vec![csv_path.display().to_string()],
    };
    emit_json(&wrapper, out)
}

fn run_locality_comparison(
    cmp: &io::CompareLocalityConfig,
    base: &Path,
    eps: &[f64],
    seed: u64,
    tolerances: &ToleranceOverrides,
    out: Option<&Path>,
) -> Result<()> {
    let mut parts = Vec::with_capacity(cmp.subsystems.len());
    for (idx, src) in cmp.subsystems.iter().enumerate() {
        let h = src.load(base)?.to_matrix()?;
        require_square(&h, "subsystem")?;
        let tol = tolerances.apply(ToleranceConfig::scaled_to(&h))?;
        let eigenvalue = spectral_mean(&h);
        parts.push(SubsystemSpec::new(h, eigenvalue, format!("part {idx}"), &tol)?);
    }
    let factor = cmp.factor.load(base)?.to_matrix()?;
    let (local_report, global_report) =
        locality_experiment(&parts, cmp.subsystem, &factor, eps, seed)?;
    let local_json = PerturbJson::from_report(&local_report);
    let global_json = PerturbJson::from_report(&global_report);
    let stem = out
        .map(|p| p.with_extension(""))
        .unwrap_or_else(|| PathBuf::from("perturb"));
    let local_csv = stem.with_file_name(format!(
        "{}_local.csv",
        stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "perturb".into())
    ));
    let global_csv = stem.with_file_name(format!(
        "{}_global.csv",
        stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "perturb".into())
    ));
    write_csv(&local_csv, &PERTURB_CSV_HEADER, &local_json.csv_rows())?;
    write_csv(&global_csv, &PERTURB_CSV_HEADER, &global_json.csv_rows())?;
    let wrapper = PerturbReport {
        format: FORMAT_TAG,
        command: "perturb",
        seed,
        report: None,
        local: Some(local_json),
        global: Some(global_json),
        csv: vec![local_csv.display().to_string(), global_csv.display().to_string()],
    };
    emit_json(&wrapper, out)
}

#[derive(Serialize)]
struct EvolveReport {
    format: &'static str,
    command: &'static str,
    method: &'static str,
    dim: usize,
    times: Vec<f64>,
    growth_factors: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    concurrence: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ep_overlap: Option<Vec<f64>>,
    csv: String,
}

fn cmd_evolve(
    config_path: &Path,
    t_max_flag: Option<f64>,
    samples_flag: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let (config, base) = load_config(config_path)?;
    let ExperimentConfig::Evolve {
        matrix,
        initial,
        t_max,
        samples,
        method,
        reference,
        tolerances: _,
    } = config
    else {
        return Err(Error::InvalidInput(
            "config kind must be \"evolve\" for this command".into(),
        ));
    };
    let h = matrix.load(&base)?.to_matrix()?;
    require_square(&h, "evolve input")?;
    let dim = h.nrows();
    let (policy, method_name) = match method.as_deref() {
        None | Some("dense_expm") => (PropagatorPolicy::dense(), "dense_expm"),
        Some("truncated_nilpotent") => (PropagatorPolicy::truncated(), "truncated_nilpotent"),
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?}; expected dense_expm or truncated_nilpotent"
            )))
        }
    };
    let times = time_grid(t_max_flag.unwrap_or(t_max), samples_flag.unwrap_or(samples))?;
    let psi0 = initial.build(dim)?;
    let reference = reference.map(|r| r.build(dim)).transpose()?;
    let trace = evolve(&h, &policy, &psi0, &times, reference.as_ref())?;
    let csv_path = csv_sibling(out, "evolve.csv");
    write_evolution_csv(&csv_path, &trace)?;
    let report = EvolveReport {
        format: FORMAT_TAG,
        command: "evolve",
        method: method_name,
        dim,
        times: trace.times.clone(),
        growth_factors: trace.growth_factors.clone(),
        concurrence: trace.concurrence.clone(),
        ep_overlap: trace.ep_overlap.clone(),
        csv: csv_path.display().to_string(),
    };
    emit_json(&report, out)
}

fn write_evolution_csv(path: &Path, trace: &EvolutionTrace) -> Result<()> {
    let mut header = vec!["t", "growth"];
    if trace.concurrence.is_some() {
        header.push("concurrence");
    }
    if trace.ep_overlap.is_some() {
        header.push("ep_overlap");
    }
    let rows: Vec<Vec<f64>> = trace
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![t, trace.growth_factors[i]];
            if let Some(c) = &trace.concurrence {
                row.push(c[i]);
            }
            if let Some(o) = &trace.ep_overlap {
                row.push(o[i]);
            }
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Serialize)]
struct Figure1Summary {
    format: &'static str,
    command: &'static str,
    epsilon: f64,
    t_max: f64,
    samples: usize,
    csv: String,
    final_concurrence: [f64; 4],
    min_concurrence: [f64; 4],
    max_concurrence: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    e3_recovery_time: Option<f64>,
}

fn cmd_figure1(
    config: Option<&Path>,
    epsilon_flag: Option<f64>,
    t_max_flag: Option<f64>,
    samples_flag: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let (mut epsilon, mut t_max, mut samples) = (None, 50.0, 500);
    if let Some(path) = config {
        let (cfg, _) = load_config(path)?;
        let ExperimentConfig::Figure1 {
            epsilon: e,
            t_max: t,
            samples: s,
        } = cfg
        else {
            return Err(Error::InvalidInput(
                "config kind must be \"figure1\" for this command".into(),
            ));
        };
        epsilon = Some(e);
        if let Some(t) = t {
            t_max = t;
        }
        if let Some(s) = s {
            samples = s;
        }
    }
    if let Some(e) = epsilon_flag {
        epsilon = Some(e);
    }
    if let Some(t) = t_max_flag {
        t_max = t;
    }
    if let Some(s) = samples_flag {
        samples = s;
    }
    let epsilon = epsilon.ok_or_else(|| {
        Error::InvalidInput("figure1 needs --epsilon or a config that sets it".into())
    })?;
    if !epsilon.is_finite() {
        return Err(Error::InvalidInput("epsilon must be finite".into()));
    }

    let h = coupled_pair_composite(epsilon)?;
    // With zero back-coupling the composite spectrum collapses to one
    // level and the propagator is an exact cubic polynomial in t.
    let policy = if epsilon == 0.0 {
        PropagatorPolicy::truncated()
    } else {
        PropagatorPolicy::dense()
    };
    let times = time_grid(t_max, samples)?;
    let mut traces = Vec::with_capacity(4);
    for state in bell_states() {
        traces.push(evolve(&h, &policy, &state, &times, None)?);
    }
    let concurrences: Vec<&Vec<f64>> = traces
        .iter()
        .map(|t| t.concurrence.as_ref().expect("dimension 4 always reports concurrence"))
        .collect();

    let csv_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("figure1.csv"));
    let rows: Vec<Vec<f64>> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            vec![
                t,
                concurrences[0][i],
                concurrences[1][i],
                concurrences[2][i],
                concurrences[3][i],
            ]
        })
        .collect();
    write_csv(&csv_path, &["t", "C_e1", "C_e2", "C_e3", "C_e4"], &rows)?;

    let stat = |f: fn(&[f64]) -> f64| -> [f64; 4] {
        [
            f(concurrences[0]),
            f(concurrences[1]),
            f(concurrences[2]),
            f(concurrences[3]),
        ]
    };
    let summary = Figure1Summary {
        format: FORMAT_TAG,
        command: "figure1",
        epsilon,
        t_max,
        samples,
        csv: csv_path.display().to_string(),
        final_concurrence: stat(|c| *c.last().expect("grid is nonempty")),
        min_concurrence: stat(|c| c.iter().copied().fold(f64::INFINITY, f64::min)),
        max_concurrence: stat(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        e3_recovery_time: if epsilon > 0.0 {
            first_recovery_time(&times, concurrences[2], 0.5, 0.99)
        } else {
            None
        },
    };
    emit_json(&summary, None)
}
