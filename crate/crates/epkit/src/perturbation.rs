//! Eigenvalue splitting under small perturbations of a degenerate level:
//! tracked clusters, the n-th power splitting bound, log-log exponent
//! fits, and the local-versus-global comparison experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::composite::{compose, SubsystemSpec};
use crate::error::{Error, Result};
use crate::fitting::line_fit;
use crate::linalg::{
    eigenvalues, ensure_finite, identity, kron, require_square, scale, spectral_norm, CMatrix,
    ToleranceConfig, C64,
};
use crate::spectral::{ep_signature, DegeneracyCluster, EPSignature};
use crate::synth;

/// Splittings below this magnitude are treated as eigensolver noise and
/// excluded from exponent fits.
pub const SPLITTING_NOISE_FLOOR: f64 = 1e-12;

/// Multiplicative headroom granted to the splitting bound before a sample
/// is declared in violation.
pub const BOUND_HEADROOM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Locality {
    Global,
    /// Perturbation acts nontrivially only on the listed subsystems.
    Local(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub hp: CMatrix,
    pub epsilons: Vec<f64>,
    pub locality: Locality,
}

fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::InvalidInput("epsilon list is empty".into()));
    }
    for w in epsilons.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput(
                "epsilons must be strictly increasing".into(),
            ));
        }
    }
    if epsilons.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(Error::InvalidInput(
            "epsilons must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Embeds a single-subsystem operator into the full product space.
pub fn embed_local(dims: &[usize], subsystem: usize, factor: &CMatrix) -> Result<CMatrix> {
    if subsystem >= dims.len() {
        return Err(Error::InvalidInput(format!(
            "subsystem index {subsystem} out of range for {} parts",
            dims.len()
        )));
    }
    require_square(factor, "local factor")?;
    if factor.nrows() != dims[subsystem] {
        return Err(Error::InvalidInput(format!(
            "local factor dimension {} does not match subsystem dimension {}",
            factor.nrows(),
            dims[subsystem]
        )));
    }
    let mut acc = CMatrix::from_fn(1, 1, |_, _| C64::new(1.0, 0.0));
    for (k, d) in dims.iter().enumerate() {
        let block = if k == subsystem {
            factor.clone()
        } else {
            identity(*d)
        };
        acc = kron(&acc, &block)?;
    }
    Ok(acc)
}

/// Blends of composite row/column indices into per-subsystem digits.
fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
    out
}

/// Checks that `hp` factorizes as (operator on S) tensor (identity on the
/// complement of S), up to a relative residual of 1e-10.
fn check_local_structure(hp: &CMatrix, dims: &[usize], subsystems: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if hp.nrows() != total {
        return Err(Error::InvalidInput(format!(
            "perturbation dimension {} does not match the product space {}",
            hp.nrows(),
            total
        )));
    }
    let mut seen = vec![false; dims.len()];
    for &s in subsystems {
        if s >= dims.len() || seen[s] {
            return Err(Error::InvalidInput(
                "locality lists an invalid or repeated subsystem".into(),
            ));
        }
        seen[s] = true;
    }
    // reorder subsystem axes so the S factors lead
    let order: Vec<usize> = subsystems
        .iter()
        .copied()
        .chain((0..dims.len()).filter(|k| !subsystems.contains(k)))
        .collect();
    let perm_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut map = vec![0usize; total];
    for (new_index, slot) in map.iter_mut().enumerate() {
        let d_new = digits(new_index, &perm_dims);
        let mut old = 0usize;
        for (k, d) in dims.iter().enumerate() {
            let pos = order.iter().position(|&o| o == k).unwrap();
            old = old * d + d_new[pos];
        }
        *slot = old;
    }
    let permuted = CMatrix::from_fn(total, total, |i, j| hp[(map[i], map[j])]);
    let d_s: usize = subsystems.iter().map(|&k| dims[k]).product();
    let d_c = total / d_s;
    // average over the complement diagonal to recover the S-factor
    let factor = CMatrix::from_fn(d_s, d_s, |a, b| {
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..d_c {
            acc += permuted[(a * d_c + c, b * d_c + c)];
        }
        acc / C64::new(d_c as f64, 0.0)
    });
    let rebuilt = kron(&factor, &identity(d_c))?;
    let scale_ref = spectral_norm(hp).max(f64::MIN_POSITIVE);
    if spectral_norm(&(&permuted - &rebuilt)) > 1e-10 * scale_ref {
        return Err(Error::Assumption(format!(
            "perturbation is not local to subsystems {subsystems:?}"
        )));
    }
    Ok(())
}

impl PerturbationSpec {
    pub fn global(hp: CMatrix, epsilons: Vec<f64>) -> Result<Self> {
        require_square(&hp, "perturbation")?;
        ensure_finite(&hp, "perturbation")?;
        validate_epsilons(&epsilons)?;
        Ok(Self {
            hp,
            epsilons,
            locality: Locality::Global,
        })
    }

    /// Builds a perturbation from a single-subsystem factor; locality
    /// holds by construction.
    pub fn local_embedded(
        dims: &[usize],
        subsystem: usize,
        factor: &CMatrix,
        epsilons: Vec<f64>,
    ) -> Result<Self> {
        ensure_finite(factor, "local factor")?;
        validate_epsilons(&epsilons)?;
        let hp = embed_local(dims, subsystem, factor)?;
        Ok(Self {
            hp,
            epsilons,
            locality: Locality::Local(vec![subsystem]),
        })
    }

    /// Accepts a full-space perturbation claimed local to `subsystems`,
    /// verifying the claim structurally.
    pub fn local_validated(
        dims: &[usize],
        subsystems: Vec<usize>,
        hp: CMatrix,
        epsilons: Vec<f64>,
    ) -> Result<Self> {
        require_square(&hp, "perturbation")?;
        ensure_finite(&hp, "perturbation")?;
        validate_epsilons(&epsilons)?;
        check_local_structure(&hp, dims, &subsystems)?;
        Ok(Self {
            hp,
            epsilons,
            locality: Locality::Local(subsystems),
        })
    }
}

/// Eigenvalue splitting observed at one perturbation strength.
#[derive(Debug, Clone)]
pub struct EpsilonSample {
    pub epsilon: f64,
    /// Perturbed eigenvalues tracked back to the degenerate level.
    pub split_eigenvalues: Vec<C64>,
    /// Largest distance from the unperturbed level.
    pub max_splitting: f64,
    /// Largest distance from the tracked cluster's own mean; zero for a
    /// pure shift.
    pub spread: f64,
    /// Right-hand side of the bound: epsilon * |hp| * xi.
    pub bound_rhs: f64,
    /// bound_rhs - max_splitting^n; negative means violation.
    pub slack: f64,
    pub bound_satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct ExponentFit {
    pub exponent: f64,
    /// 95% half-width; absent when only two points survive the noise
    /// floor.
    pub half_width: Option<f64>,
    pub points_used: usize,
}

#[derive(Debug, Clone)]
pub struct PerturbationReport {
    pub order: usize,
    pub xi: f64,
    pub hp_norm: f64,
    pub samples: Vec<EpsilonSample>,
    /// Log-log slope of max splitting against epsilon; absent when fewer
    /// than two samples rise above the noise floor.
    pub fitted_exponent: Option<ExponentFit>,
}

impl PerturbationReport {
    pub fn all_bounds_satisfied(&self) -> bool {
        self.samples.iter().all(|s| s.bound_satisfied)
    }
}

/// Perturbs `h` along `spec.hp` at each epsilon and reports the tracked
/// splitting of the level described by `sig`.
pub fn perturb_and_split(
    h: &CMatrix,
    sig: &EPSignature,
    spec: &PerturbationSpec,
) -> Result<PerturbationReport> {
    require_square(h, "hamiltonian")?;
    ensure_finite(h, "hamiltonian")?;
    if spec.hp.nrows() != h.nrows() {
        return Err(Error::InvalidInput(
            "perturbation dimension does not match the hamiltonian".into(),
        ));
    }
    validate_epsilons(&spec.epsilons)?;
    if sig.order < 2 {
        return Err(Error::Assumption(
            "splitting analysis needs a defective level (order >= 2); the level is semisimple".into(),
        ));
    }
    let hp_norm = spectral_norm(&spec.hp);
    if hp_norm == 0.0 {
        return Err(Error::InvalidInput("perturbation is identically zero".into()));
    }
    let n = sig.order;
    let e0 = sig.eigenvalue;
    let samples: Vec<Result<EpsilonSample>> = spec
        .epsilons
        .par_iter()
        .map(|&eps| {
            let m = h + &scale(C64::new(eps, 0.0), &spec.hp);
            let vals = eigenvalues(&m)?;
            let radius = 2.0 * (eps * hp_norm * sig.xi).powf(1.0 / n as f64);
            let tracked: Vec<C64> = vals
                .into_iter()
                .filter(|v| (v - e0).norm() <= radius)
                .collect();
            if tracked.is_empty() {
                return Err(Error::TrackingFailure(format!(
                    "no eigenvalue within radius {radius} of the level at epsilon {eps}"
                )));
            }
            let max_splitting = tracked
                .iter()
                .map(|v| (v - e0).norm())
                .fold(0.0f64, f64::max);
            let mean = tracked.iter().sum::<C64>() / C64::new(tracked.len() as f64, 0.0);
            let spread = tracked
                .iter()
                .map(|v| (v - mean).norm())
                .fold(0.0f64, f64::max);
            let bound_rhs = eps * hp_norm * sig.xi;
            let lhs = max_splitting.powi(n as i32);
            Ok(EpsilonSample {
                epsilon: eps,
                split_eigenvalues: tracked,
                max_splitting,
                spread,
                bound_rhs,
                slack: bound_rhs - lhs,
                bound_satisfied: lhs <= bound_rhs * (1.0 + BOUND_HEADROOM),
            })
        })
        .collect();
    let samples: Vec<EpsilonSample> = samples.into_iter().collect::<Result<_>>()?;
    let usable: Vec<&EpsilonSample> = samples
        .iter()
        .filter(|s| s.max_splitting > SPLITTING_NOISE_FLOOR)
        .collect();
    let fitted_exponent = if usable.len() >= 2 {
        let xs: Vec<f64> = usable.iter().map(|s| s.epsilon.ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|s| s.max_splitting.ln()).collect();
        let (slope, _, half_width) = line_fit(&xs, &ys);
        Some(ExponentFit {
            exponent: slope,
            half_width,
            points_used: usable.len(),
        })
    } else {
        None
    };
    Ok(PerturbationReport {
        order: n,
        xi: sig.xi,
        hp_norm,
        samples,
        fitted_exponent,
    })
}

/// Runs the same epsilon sweep twice on a composite: once with a
/// perturbation confined to one subsystem, once with a dense seeded
/// perturbation of equal spectral norm.
pub fn locality_experiment(
    parts: &[SubsystemSpec],
    subsystem: usize,
    factor: &CMatrix,
    epsilons: &[f64],
    seed: u64,
) -> Result<(PerturbationReport, PerturbationReport)> {
    let h = compose(parts)?;
    let tol = ToleranceConfig::scaled_to(&h);
    let level: C64 = parts.iter().map(|p| p.eigenvalue).sum();
    let cluster = DegeneracyCluster::spanning(h.nrows(), level);
    let sig = ep_signature(&h, &cluster, &tol)?;
    let dims: Vec<usize> = parts.iter().map(|p| p.dim()).collect();
    let local = PerturbationSpec::local_embedded(&dims, subsystem, factor, epsilons.to_vec())?;
    let local_norm = spectral_norm(&local.hp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = synth::random_dense(h.nrows(), &mut rng);
    let dense_norm = spectral_norm(&dense);
    if dense_norm == 0.0 {
        return Err(Error::Numerical("degenerate random draw".into()));
    }
    let global = PerturbationSpec::global(
        scale(C64::new(local_norm / dense_norm, 0.0), &dense),
        epsilons.to_vec(),
    )?;
    let local_report = perturb_and_split(&h, &sig, &local)?;
    let global_report = perturb_and_split(&h, &sig, &global)?;
    Ok((local_report, global_report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron_sum, numerical_rank};
    use crate::spectral::traceless_part;
    use rand::Rng;

    fn n2() -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| {
            C64::new(if j == i + 1 { 1.0 } else { 0.0 }, 0.0)
        })
    }

    fn lower() -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| {
            C64::new(if i == 1 && j == 0 { 1.0 } else { 0.0 }, 0.0)
        })
    }

    fn composite_sig(h: &CMatrix) -> EPSignature {
        let tol = ToleranceConfig::scaled_to(h);
        let dim = h.nrows();
        let mean = (0..dim).map(|i| h[(i, i)]).sum::<C64>() / C64::new(dim as f64, 0.0);
        ep_signature(h, &DegeneracyCluster::spanning(dim, mean), &tol).unwrap()
    }

    fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                lo * (hi / lo).powf(t)
            })
            .collect()
    }

    #[test]
    fn epsilon_validation() {
        assert!(PerturbationSpec::global(n2(), vec![]).is_err());
        assert!(PerturbationSpec::global(n2(), vec![1e-3, 1e-4]).is_err());
        assert!(PerturbationSpec::global(n2(), vec![-1e-3, 1e-2]).is_err());
        assert!(PerturbationSpec::global(n2(), vec![1e-4, 1e-3]).is_ok());
    }

    #[test]
    fn embed_places_factor_on_named_subsystem() {
        let hp = embed_local(&[2, 2], 1, &lower()).unwrap();
        // 1 (x) lower has entries at (1,0) and (3,2)
        assert!((hp[(1, 0)] - C64::new(1.0, 0.0)).norm() <= 1e-15);
        assert!((hp[(3, 2)] - C64::new(1.0, 0.0)).norm() <= 1e-15);
        assert!(hp[(2, 0)].norm() <= 1e-15);
        let total: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| hp[(i, j)].norm())
            .sum();
        assert!((total - 2.0).abs() <= 1e-15);
    }

    #[test]
    fn structural_locality_accepts_embedded_and_rejects_dense() {
        let dims = [2usize, 2];
        let eps = vec![1e-4, 1e-3];
        let hp = embed_local(&dims, 0, &lower()).unwrap();
        assert!(
            PerturbationSpec::local_validated(&dims, vec![0], hp, eps.clone()).is_ok()
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dense = synth::random_dense(4, &mut rng);
        assert!(matches!(
            PerturbationSpec::local_validated(&dims, vec![0], dense, eps),
            Err(Error::Assumption(_))
        ));
    }

    #[test]
    fn rejects_semisimple_level() {
        let h = identity(3);
        let sig = composite_sig(&h);
        let spec = PerturbationSpec::global(identity(3), vec![1e-3]).unwrap();
        assert!(matches!(
            perturb_and_split(&h, &sig, &spec),
            Err(Error::Assumption(_))
        ));
    }

    #[test]
    fn second_order_global_exponent_is_one_half() {
        let h = n2();
        let sig = composite_sig(&h);
        let spec = PerturbationSpec::global(lower(), log_grid(1e-8, 1e-4, 9)).unwrap();
        let report = perturb_and_split(&h, &sig, &spec).unwrap();
        assert!(report.all_bounds_satisfied());
        let fit = report.fitted_exponent.unwrap();
        assert!((fit.exponent - 0.5).abs() <= 1e-6, "slope {}", fit.exponent);
        assert!(fit.half_width.unwrap() <= 1e-6);
    }

    #[test]
    fn bound_saturates_for_aligned_rank_one_perturbation() {
        // perturbed matrix [[0,1],[eps,0]] has eigenvalues exactly
        // +-sqrt(eps), so splitting^2 equals eps * |hp| * xi with zero slack
        let h = n2();
        let sig = composite_sig(&h);
        let spec = PerturbationSpec::global(lower(), vec![1e-6, 1e-4, 1e-2]).unwrap();
        let report = perturb_and_split(&h, &sig, &spec).unwrap();
        for s in &report.samples {
            assert!(s.bound_satisfied);
            assert!(s.slack.abs() <= 1e-10, "slack {}", s.slack);
            assert!((s.max_splitting - s.epsilon.sqrt()).abs() <= 1e-10);
        }
    }

    #[test]
    fn composite_local_exponent_tracks_subsystem_order() {
        let h = kron_sum(&n2(), &n2()).unwrap();
        let sig = composite_sig(&h);
        assert_eq!(sig.order, 3);
        let spec =
            PerturbationSpec::local_embedded(&[2, 2], 0, &lower(), log_grid(1e-6, 1e-3, 7))
                .unwrap();
        let report = perturb_and_split(&h, &sig, &spec).unwrap();
        assert!(report.all_bounds_satisfied());
        // splitting follows sqrt(eps): the local perturbation closes the
        // subsystem EP2, not the composite EP3
        let fit = report.fitted_exponent.unwrap();
        assert!((fit.exponent - 0.5).abs() <= 1e-3, "slope {}", fit.exponent);
        // every perturbed eigenvalue sits at distance sqrt(eps) from zero
        for s in &report.samples {
            assert_eq!(s.split_eigenvalues.len(), 4);
            for v in &s.split_eigenvalues {
                assert!((v.norm() - s.epsilon.sqrt()).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn detuning_both_subsystems_gives_split_and_pinned_levels() {
        // both pairs back-coupled at strength eps: two levels stay pinned
        // at zero and two move to +-2 sqrt(eps)
        for eps in [1e-4, 1e-2] {
            let h = kron_sum(&n2(), &n2()).unwrap();
            let hp = &embed_local(&[2, 2], 0, &lower()).unwrap()
                + &embed_local(&[2, 2], 1, &lower()).unwrap();
            let m = &h + &scale(C64::new(eps, 0.0), &hp);
            let mut vals = eigenvalues(&m).unwrap();
            vals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
            let s = 2.0 * eps.sqrt();
            assert!((vals[0] - C64::new(-s, 0.0)).norm() <= 1e-10);
            assert!(vals[1].norm() <= 1e-10);
            assert!(vals[2].norm() <= 1e-10);
            assert!((vals[3] - C64::new(s, 0.0)).norm() <= 1e-10);
        }
    }

    #[test]
    fn global_dense_exponent_is_one_over_order() {
        let h = kron_sum(&n2(), &n2()).unwrap();
        let sig = composite_sig(&h);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let dense = synth::random_dense(4, &mut rng);
        let spec = PerturbationSpec::global(dense, log_grid(1e-6, 1e-3, 7)).unwrap();
        let report = perturb_and_split(&h, &sig, &spec).unwrap();
        assert!(report.all_bounds_satisfied());
        let fit = report.fitted_exponent.unwrap();
        assert!(
            (fit.exponent - 1.0 / 3.0).abs() <= 0.02,
            "slope {}",
            fit.exponent
        );
    }

    #[test]
    fn identity_perturbation_shifts_without_spread() {
        let h = n2();
        let sig = composite_sig(&h);
        let spec = PerturbationSpec::global(identity(2), vec![1e-5, 1e-4, 1e-3]).unwrap();
        let report = perturb_and_split(&h, &sig, &spec).unwrap();
        for s in &report.samples {
            assert!((s.max_splitting - s.epsilon).abs() <= 1e-12);
            assert!(s.spread <= 1e-12, "spread {}", s.spread);
            assert!(s.bound_satisfied);
        }
    }

    #[test]
    fn locality_experiment_separates_exponents() {
        let tol = ToleranceConfig::default();
        let parts = vec![
            SubsystemSpec::new(n2(), C64::new(0.0, 0.0), "a", &tol).unwrap(),
            SubsystemSpec::new(n2(), C64::new(0.0, 0.0), "b", &tol).unwrap(),
        ];
        let grid = log_grid(1e-6, 1e-3, 7);
        let (local, global) = locality_experiment(&parts, 1, &lower(), &grid, 0).unwrap();
        assert!((local.hp_norm - global.hp_norm).abs() <= 1e-12);
        let lf = local.fitted_exponent.unwrap();
        let gf = global.fitted_exponent.unwrap();
        assert!((lf.exponent - 0.5).abs() <= 0.02, "local {}", lf.exponent);
        assert!((gf.exponent - 1.0 / 3.0).abs() <= 0.02, "global {}", gf.exponent);
    }

    #[test]
    fn fuzzed_bound_holds_across_orders_and_strengths() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_0006);
        for _ in 0..60 {
            let order = rng.gen_range(2..=4usize);
            let sys = synth::random_jordan_system_with_blocks(&mut rng, &[order], 5.0);
            let tol = ToleranceConfig::scaled_to(&sys.matrix);
            let cluster = DegeneracyCluster::spanning(order, sys.eigenvalue);
            let sig = ep_signature(&sys.matrix, &cluster, &tol).unwrap();
            let dense = synth::random_dense(order, &mut rng);
            let nrm = spectral_norm(&dense);
            let hp = scale(C64::new(1.0 / nrm, 0.0), &dense);
            let exponent = rng.gen_range(-8.0..-2.0f64);
            let eps = 10f64.powf(exponent);
            let spec = PerturbationSpec::global(hp, vec![eps]).unwrap();
            let report = perturb_and_split(&sys.matrix, &sig, &spec).unwrap();
            assert!(
                report.all_bounds_satisfied(),
                "violation at order {order} eps {eps}: slack {}",
                report.samples[0].slack
            );
        }
    }

    #[test]
    fn tracked_cluster_has_full_multiplicity_for_small_eps() {
        let h = kron_sum(&n2(), &n2()).unwrap();
        let sig = composite_sig(&h);
        let hp4 = embed_local(&[2, 2], 0, &lower()).unwrap();
        let spec = PerturbationSpec::global(hp4, vec![1e-6]).unwrap();
        let report = perturb_and_split(&h, &sig, &spec).unwrap();
        assert_eq!(report.samples[0].split_eigenvalues.len(), 4);
    }

    #[test]
    fn local_factor_keeps_subsystem_rank() {
        let hp = embed_local(&[2, 3], 0, &lower()).unwrap();
        assert_eq!(numerical_rank(&hp, &ToleranceConfig::default()), 3);
        assert_eq!(spectral_norm(&hp), 1.0);
        let np = traceless_part(&hp, C64::new(0.0, 0.0));
        assert_eq!(np.nrows(), 6);
    }
}
