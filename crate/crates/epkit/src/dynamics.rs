//! Non-unitary time evolution near a defective level. The propagator of a
//! fully degenerate system truncates to finitely many nilpotent terms;
//! a scaling-and-squaring matrix exponential serves as the dense oracle.

use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};
use crate::fitting::line_fit;
use crate::linalg::{
    ensure_finite, identity, inner, kron, kron_sum, require_square, scale, spectral_norm, CMatrix,
    CVector, ToleranceConfig, C64,
};
use crate::spectral::{nilpotency_index, traceless_part};
use crate::synth;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Time is dimensionless throughout.
pub const HBAR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorMethod {
    /// Exact finite polynomial in the traceless part; valid only when the
    /// spectrum is a single degenerate cluster.
    TruncatedNilpotent,
    /// Scaling-and-squaring exponential of -iHt.
    DenseExpm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagatorPolicy {
    pub method: PropagatorMethod,
}

impl PropagatorPolicy {
    pub fn truncated() -> Self {
        Self {
            method: PropagatorMethod::TruncatedNilpotent,
        }
    }

    pub fn dense() -> Self {
        Self {
            method: PropagatorMethod::DenseExpm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// Unit-norm state at each sample.
    pub states: Vec<CVector>,
    /// Norm of the un-normalized propagated state, per sample.
    pub growth_factors: Vec<f64>,
    /// Present only for 4-dimensional states.
    pub concurrence: Option<Vec<f64>>,
    /// Present only when a reference state was supplied.
    pub ep_overlap: Option<Vec<f64>>,
}

/// Two modes with unit forward coupling and a weak back-coupling.
pub fn coupled_pair(back_coupling: f64) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| {
        C64::new(
            match (i, j) {
                (0, 1) => 1.0,
                (1, 0) => back_coupling,
                _ => 0.0,
            },
            0.0,
        )
    })
}

/// Kronecker sum of two identical coupled pairs; the standard 4-mode
/// testbed for entanglement dynamics.
pub fn coupled_pair_composite(back_coupling: f64) -> Result<CMatrix> {
    let a = coupled_pair(back_coupling);
    kron_sum(&a, &a)
}

fn one_norm(m: &CMatrix) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let mut acc = 0.0;
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm();
        }
        best = best.max(acc);
    }
    best
}

const PADE13_THETA: f64 = 5.371920351148152;
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Matrix exponential via 13th-degree diagonal Pade approximation with
/// norm scaling and repeated squaring.
fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let nrm = one_norm(a);
    if !nrm.is_finite() {
        return Err(Error::Numerical("exponential of a non-finite matrix".into()));
    }
    let squarings = if nrm > PADE13_THETA {
        (nrm / PADE13_THETA).log2().ceil() as u32
    } else {
        0
    };
    let a1 = scale(real(0.5f64.powi(squarings as i32)), a);
    let b = &PADE13;
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let eye = identity(n);
    let u_high = &(&scale(real(b[13]), &a6) + &scale(real(b[11]), &a4)) + &scale(real(b[9]), &a2);
    let u_low = &(&scale(real(b[7]), &a6) + &scale(real(b[5]), &a4))
        + &(&scale(real(b[3]), &a2) + &scale(real(b[1]), &eye));
    let u = &a1 * &(&(&a6 * &u_high) + &u_low);
    let v_high = &(&scale(real(b[12]), &a6) + &scale(real(b[10]), &a4)) + &scale(real(b[8]), &a2);
    let v_low = &(&scale(real(b[6]), &a6) + &scale(real(b[4]), &a4))
        + &(&scale(real(b[2]), &a2) + &scale(real(b[0]), &eye));
    let v = &(&a6 * &v_high) + &v_low;
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom.partial_piv_lu().solve(&numer);
    ensure_finite(&r, "matrix exponential")?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Time-evolution operator for `h` at time `t`. For the truncated method,
/// `e_ep` and `order` describe the degenerate level: the traceless part
/// must vanish at the `order`-th power.
pub fn propagator(
    h: &CMatrix,
    e_ep: C64,
    order: usize,
    t: f64,
    policy: &PropagatorPolicy,
) -> Result<CMatrix> {
    require_square(h, "hamiltonian")?;
    ensure_finite(h, "hamiltonian")?;
    if !t.is_finite() {
        return Err(Error::InvalidInput("time must be finite".into()));
    }
    match policy.method {
        PropagatorMethod::DenseExpm => expm(&scale(C64::new(0.0, -t / HBAR), h)),
        PropagatorMethod::TruncatedNilpotent => {
            if order == 0 {
                return Err(Error::InvalidInput("order must be at least 1".into()));
            }
            let np = traceless_part(h, e_ep);
            let np_norm = spectral_norm(&np);
            let tol = ToleranceConfig::default();
            let mut terms = vec![identity(h.nrows())];
            for j in 1..order {
                let next = &terms[j - 1] * &np;
                terms.push(next);
            }
            let top = terms.last().unwrap() * &np;
            let cutoff = tol.nilpotency_rtol * np_norm.powi(order as i32).max(f64::MIN_POSITIVE);
            if np_norm > tol.nilpotency_rtol && spectral_norm(&top) > cutoff {
                return Err(Error::NotNilpotent(format!(
                    "traceless part does not vanish at power {order}; the truncated propagator does not apply"
                )));
            }
            let phase = (C64::new(0.0, -t / HBAR) * e_ep).exp();
            let mut acc = CMatrix::zeros(h.nrows(), h.nrows());
            let mut coeff = C64::new(1.0, 0.0);
            for (j, term) in terms.iter().enumerate() {
                if j > 0 {
                    coeff *= C64::new(0.0, -t / HBAR) / real(j as f64);
                }
                acc = &acc + &scale(phase * coeff, term);
            }
            Ok(acc)
        }
    }
}

/// Entanglement of a two-mode pure state written in the product basis
/// (00, 01, 10, 11): twice the magnitude of the 2x2 coefficient
/// determinant after normalization.
pub fn concurrence(state: &CVector) -> Result<f64> {
    if state.nrows() != 4 {
        return Err(Error::InvalidInput(format!(
            "concurrence is defined for dimension 4, got {}",
            state.nrows()
        )));
    }
    let norm = state.norm_l2();
    if norm < f64::MIN_POSITIVE.sqrt() {
        return Err(Error::InvalidInput("zero-norm state".into()));
    }
    let det = state[0] * state[3] - state[1] * state[2];
    Ok(2.0 * det.norm() / (norm * norm))
}

/// The four maximally entangled two-mode basis states.
pub fn bell_states() -> [CVector; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mk = |vals: [f64; 4]| CVector::from_fn(4, |i| C64::new(vals[i] * s, 0.0));
    [
        mk([1.0, 0.0, 0.0, 1.0]),
        mk([1.0, 0.0, 0.0, -1.0]),
        mk([0.0, 1.0, 1.0, 0.0]),
        mk([0.0, 1.0, -1.0, 0.0]),
    ]
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if !times[0].is_finite() || times[0] < 0.0 {
        return Err(Error::InvalidInput(
            "times must start at a nonnegative value".into(),
        ));
    }
    for w in times.windows(2) {
        if !w[1].is_finite() || w[1] <= w[0] {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
    }
    Ok(())
}

/// Uniform grid of `samples` points on [0, t_max].
pub fn uniform_grid(t_max: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| t_max * i as f64 / (samples - 1) as f64)
        .collect()
}

/// Propagates `initial` across `times` and records normalized states,
/// raw growth, entanglement (dimension 4 only), and overlap with a
/// reference state when one is given.
pub fn evolve(
    h: &CMatrix,
    policy: &PropagatorPolicy,
    initial: &CVector,
    times: &[f64],
    reference: Option<&CVector>,
) -> Result<EvolutionTrace> {
    require_square(h, "hamiltonian")?;
    ensure_finite(h, "hamiltonian")?;
    validate_times(times)?;
    let dim = h.nrows();
    if initial.nrows() != dim {
        return Err(Error::InvalidInput(
            "initial state dimension does not match the hamiltonian".into(),
        ));
    }
    let norm0 = initial.norm_l2();
    if norm0 < f64::MIN_POSITIVE.sqrt() {
        return Err(Error::InvalidInput("zero-norm initial state".into()));
    }
    let psi0 = CVector::from_fn(dim, |i| initial[i] / real(norm0));
    let reference = match reference {
        Some(r) => {
            if r.nrows() != dim {
                return Err(Error::InvalidInput(
                    "reference state dimension does not match".into(),
                ));
            }
            let rn = r.norm_l2();
            if rn < f64::MIN_POSITIVE.sqrt() {
                return Err(Error::InvalidInput("zero-norm reference state".into()));
            }
            Some(CVector::from_fn(dim, |i| r[i] / real(rn)))
        }
        None => None,
    };

    // for the truncated method, precompute the chain psi, N psi, N^2 psi, ...
    let chain: Option<(C64, Vec<CVector>)> = match policy.method {
        PropagatorMethod::TruncatedNilpotent => {
            let tol = ToleranceConfig::scaled_to(h);
            // a fully degenerate level equals the spectral mean, which the
            // trace yields without an eigensolve
            let e = (0..dim).map(|i| h[(i, i)]).sum::<C64>() / real(dim as f64);
            let np = traceless_part(h, e);
            let order = if spectral_norm(&np) <= tol.nilpotency_rtol * spectral_norm(h).max(1.0) {
                1
            } else {
                nilpotency_index(&np, &tol).map_err(|_| {
                    Error::NotNilpotent(
                        "truncated propagation needs a fully degenerate spectrum".into(),
                    )
                })?
            };
            let mut vs = vec![psi0.clone()];
            for j in 1..order {
                let prev = &vs[j - 1];
                let next = CVector::from_fn(dim, |i| {
                    (0..dim).map(|k| np[(i, k)] * prev[k]).sum::<C64>()
                });
                vs.push(next);
            }
            Some((e, vs))
        }
        PropagatorMethod::DenseExpm => None,
    };

    let mut states = Vec::with_capacity(times.len());
    let mut growth = Vec::with_capacity(times.len());
    for &t in times {
        let raw: CVector = match &chain {
            Some((e, vs)) => {
                let phase = (C64::new(0.0, -t / HBAR) * e).exp();
                let mut acc = CVector::from_fn(dim, |_| C64::new(0.0, 0.0));
                let mut coeff = C64::new(1.0, 0.0);
                for (j, v) in vs.iter().enumerate() {
                    if j > 0 {
                        coeff *= C64::new(0.0, -t / HBAR) / real(j as f64);
                    }
                    for i in 0..dim {
                        acc[i] += phase * coeff * v[i];
                    }
                }
                acc
            }
            None => {
                let k = expm(&scale(C64::new(0.0, -t / HBAR), h))?;
                CVector::from_fn(dim, |i| (0..dim).map(|c| k[(i, c)] * psi0[c]).sum::<C64>())
            }
        };
        let norm = raw.norm_l2();
        if norm < f64::MIN_POSITIVE.sqrt() || !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "propagated state norm {norm} at t = {t} is unusable"
            )));
        }
        growth.push(norm);
        states.push(CVector::from_fn(dim, |i| raw[i] / real(norm)));
    }

    let concurrence_trace = if dim == 4 {
        let mut cs = Vec::with_capacity(states.len());
        for s in &states {
            cs.push(concurrence(s)?);
        }
        Some(cs)
    } else {
        None
    };
    let overlap_trace = reference.map(|r| {
        states
            .iter()
            .map(|s| inner(&r, s).norm())
            .collect::<Vec<f64>>()
    });

    Ok(EvolutionTrace {
        times: times.to_vec(),
        states,
        growth_factors: growth,
        concurrence: concurrence_trace,
        ep_overlap: overlap_trace,
    })
}

/// Confirms that the propagator of a Kronecker sum factorizes into the
/// product of subsystem propagators. Returns the pass flag and the
/// relative residual.
pub fn kron_factorization_check(
    h_a: &CMatrix,
    h_b: &CMatrix,
    t: f64,
    tol: f64,
) -> Result<(bool, f64)> {
    require_square(h_a, "first factor")?;
    require_square(h_b, "second factor")?;
    ensure_finite(h_a, "first factor")?;
    ensure_finite(h_b, "second factor")?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let sum = kron_sum(h_a, h_b)?;
    let k_sum = expm(&scale(C64::new(0.0, -t / HBAR), &sum))?;
    let k_a = expm(&scale(C64::new(0.0, -t / HBAR), h_a))?;
    let k_b = expm(&scale(C64::new(0.0, -t / HBAR), h_b))?;
    let product = kron(&k_a, &k_b)?;
    let reference = spectral_norm(&product);
    let residual = spectral_norm(&(&k_sum - &product)) / reference.max(f64::MIN_POSITIVE);
    Ok((residual <= tol, residual))
}

/// Fits the polynomial growth degree of the phase-stripped propagator
/// applied to a probe state, over the final decade of `times`. A healthy
/// defective level of order n grows like t^(n-1).
pub fn asymptotic_order_probe(
    h: &CMatrix,
    e_ep: C64,
    times: &[f64],
    probe: Option<&CVector>,
    seed: u64,
) -> Result<f64> {
    require_square(h, "hamiltonian")?;
    ensure_finite(h, "hamiltonian")?;
    validate_times(times)?;
    let dim = h.nrows();
    let tol = ToleranceConfig::scaled_to(h);
    let np = traceless_part(h, e_ep);
    let order = if spectral_norm(&np) <= tol.nilpotency_rtol * spectral_norm(h).max(1.0) {
        1
    } else {
        nilpotency_index(&np, &tol)?
    };
    let v = match probe {
        Some(p) => {
            if p.nrows() != dim {
                return Err(Error::InvalidInput("probe dimension mismatch".into()));
            }
            let n = p.norm_l2();
            if n < f64::MIN_POSITIVE.sqrt() {
                return Err(Error::InvalidInput("zero-norm probe".into()));
            }
            CVector::from_fn(dim, |i| p[i] / real(n))
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            synth::random_state(dim, &mut rng)
        }
    };
    let mut vs = vec![v];
    for j in 1..order {
        let prev = &vs[j - 1];
        let next = CVector::from_fn(dim, |i| (0..dim).map(|k| np[(i, k)] * prev[k]).sum::<C64>());
        vs.push(next);
    }
    let t_last = *times.last().unwrap();
    let window: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t >= t_last / 10.0)
        .collect();
    if window.len() < 3 {
        return Err(Error::InvalidInput(
            "need at least 3 positive samples in the final decade".into(),
        ));
    }
    let mut xs = Vec::with_capacity(window.len());
    let mut ys = Vec::with_capacity(window.len());
    for &t in &window {
        // phase factor omitted: only the polynomial envelope matters
        let mut acc = CVector::from_fn(dim, |_| C64::new(0.0, 0.0));
        let mut coeff = C64::new(1.0, 0.0);
        for (j, w) in vs.iter().enumerate() {
            if j > 0 {
                coeff *= C64::new(0.0, -t / HBAR) / real(j as f64);
            }
            for i in 0..dim {
                acc[i] += coeff * w[i];
            }
        }
        xs.push(t.ln());
        ys.push(acc.norm_l2().ln());
    }
    let span = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    if span < 1.5f64.ln() {
        return Err(Error::DegenerateFit(
            "growth over the fit window is flat; the probe is aligned with the stationary state".into(),
        ));
    }
    let (slope, _, _) = line_fit(&xs, &ys);
    Ok(slope)
}

/// First time at which `values` climbs back to `high` after first dipping
/// to `low` or below.
pub fn first_recovery_time(times: &[f64], values: &[f64], low: f64, high: f64) -> Option<f64> {
    let mut dipped = false;
    for (&t, &v) in times.iter().zip(values) {
        if !dipped {
            if v <= low {
                dipped = true;
            }
        } else if v >= high {
            return Some(t);
        }
    }
    None
}
