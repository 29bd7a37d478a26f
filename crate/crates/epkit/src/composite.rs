//! N-partite composites built as Kronecker sums of fully degenerate
//! subsystems: predicts the composite EP (eigenvalue, order, response
//! strength, eigenstate) from the parts and cross-checks every claim
//! against direct analysis of the composite matrix.

use crate::dynamics::concurrence;
use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite, inner, kron_sum, kron_vec, mat_power, normalize_phase, numerical_rank,
    require_square, singular_values, spectral_norm, CMatrix, CVector, ToleranceConfig, C64,
};
use crate::spectral::{
    ep_signature, nilpotency_index, traceless_part, DegeneracyCluster, EPSignature,
};

/// Default cap on the composite dimension; rank-sequence analysis cost
/// grows as the fourth power of dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 256;

/// One completely degenerate subsystem.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub hamiltonian: CMatrix,
    pub eigenvalue: C64,
    pub label: String,
}

impl SubsystemSpec {
    /// Validates full degeneracy at `eigenvalue`: the spectrum is a single
    /// point iff the shifted operator is nilpotent, and the rank-based
    /// nilpotency test stays sharp where eigensolver output smears.
    pub fn new(
        hamiltonian: CMatrix,
        eigenvalue: C64,
        label: impl Into<String>,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        require_square(&hamiltonian, "subsystem hamiltonian")?;
        ensure_finite(&hamiltonian, "subsystem hamiltonian")?;
        tol.validate()?;
        if hamiltonian.nrows() == 0 {
            return Err(Error::InvalidInput("subsystem must be nonempty".into()));
        }
        let np = traceless_part(&hamiltonian, eigenvalue);
        let scale_ref = spectral_norm(&hamiltonian).max(1.0);
        if spectral_norm(&np) > tol.nilpotency_rtol * scale_ref
            && nilpotency_index(&np, tol).is_err()
        {
            return Err(Error::Assumption(format!(
                "subsystem spectrum is not fully degenerate at {eigenvalue}"
            )));
        }
        Ok(Self {
            hamiltonian,
            eigenvalue,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Degeneracy signature of the (fully degenerate) subsystem.
    pub fn signature(&self, tol: &ToleranceConfig) -> Result<EPSignature> {
        let cluster = DegeneracyCluster::spanning(self.dim(), self.eigenvalue);
        ep_signature(&self.hamiltonian, &cluster, tol)
    }
}

/// Composite EP facts derived from subsystem signatures alone.
#[derive(Debug, Clone)]
pub struct CompositePrediction {
    pub ep_eigenvalue: C64,
    pub ep_order: usize,
    pub xi: f64,
    pub ep_state: CVector,
    /// Upper bound alpha - n + 1 on the geometric multiplicity.
    pub max_geometric_multiplicity: usize,
    /// Product of subsystem geometric multiplicities: how many composite
    /// eigenstates factorize.
    pub separable_state_count: usize,
}

#[derive(Debug, Clone)]
pub struct VerificationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub checks: Vec<VerificationCheck>,
    pub observed_order: usize,
    pub observed_geometric_multiplicity: usize,
    pub observed_block_sizes: Vec<usize>,
    /// Eigenstates of the composite kernel orthogonal to every product of
    /// subsystem eigenstates. Nonempty only when the geometric
    /// multiplicity exceeds the separable count.
    pub extra_states: Vec<CVector>,
    /// Concurrence of each extra state; present only for 4-dimensional
    /// composites.
    pub extra_state_concurrences: Option<Vec<f64>>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Kronecker sum of all parts, folded left-associatively, with the
/// default dimension cap.
pub fn compose(parts: &[SubsystemSpec]) -> Result<CMatrix> {
    compose_capped(parts, DEFAULT_DIMENSION_CAP)
}

pub fn compose_capped(parts: &[SubsystemSpec], cap: usize) -> Result<CMatrix> {
    if parts.is_empty() {
        return Err(Error::InvalidInput("compose needs at least one part".into()));
    }
    let mut dim = 1usize;
    for p in parts {
        dim = dim
            .checked_mul(p.dim())
            .ok_or_else(|| Error::CapacityExceeded("composite dimension overflows".into()))?;
    }
    if dim > cap {
        return Err(Error::CapacityExceeded(format!(
            "composite dimension {dim} exceeds the cap of {cap}"
        )));
    }
    let mut acc = parts[0].hamiltonian.clone();
    for p in &parts[1..] {
        acc = kron_sum(&acc, &p.hamiltonian)?;
    }
    Ok(acc)
}

fn factorial(n: usize) -> f64 {
    (2..=n).fold(1.0f64, |acc, k| acc * k as f64)
}

/// Unit vector spanning the image of N^(order-1), the subsystem EP
/// eigenstate direction. When several maximal blocks tie, the dominant
/// singular direction serves as the representative.
fn image_direction(nilpotent_power: &CMatrix) -> Result<CVector> {
    let svd = nilpotent_power
        .svd()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let u = svd.U();
    let v = CVector::from_fn(nilpotent_power.nrows(), |i| u[(i, 0)]);
    normalize_phase(&v)
}

/// Composite EP prediction from per-subsystem signatures.
pub fn predict(parts: &[SubsystemSpec], sigs: &[EPSignature]) -> Result<CompositePrediction> {
    if parts.is_empty() || parts.len() != sigs.len() {
        return Err(Error::InvalidInput(
            "predict needs one signature per part".into(),
        ));
    }
    let mut ep_eigenvalue = C64::new(0.0, 0.0);
    let mut ep_order = 1usize;
    let mut alpha = 1usize;
    let mut separable = 1usize;
    let mut xi_product = 1.0f64;
    let mut ep_state = CVector::from_fn(1, |_| C64::new(1.0, 0.0));
    for (part, sig) in parts.iter().zip(sigs) {
        if sig.nilpotent_power.nrows() != part.dim() {
            return Err(Error::InvalidInput(format!(
                "signature dimension {} does not match part {}",
                sig.nilpotent_power.nrows(),
                part.label
            )));
        }
        if sig.algebraic_multiplicity != part.dim() {
            return Err(Error::Assumption(format!(
                "subsystem {} is not fully degenerate",
                part.label
            )));
        }
        if sig.order < 2 {
            return Err(Error::Unsupported(format!(
                "subsystem {} is semisimple (order 1); a dominant EP needs order >= 2",
                part.label
            )));
        }
        ep_eigenvalue += sig.eigenvalue;
        ep_order += sig.order - 1;
        alpha = alpha
            .checked_mul(part.dim())
            .ok_or_else(|| Error::CapacityExceeded("composite dimension overflows".into()))?;
        separable *= sig.geometric_multiplicity;
        xi_product *= sig.xi / factorial(sig.order - 1);
        ep_state = kron_vec(&ep_state, &image_direction(&sig.nilpotent_power)?);
    }
    let xi = factorial(ep_order - 1) * xi_product;
    if !xi.is_finite() {
        return Err(Error::CapacityExceeded(
            "response strength overflows for this composite order".into(),
        ));
    }
    Ok(CompositePrediction {
        ep_eigenvalue,
        ep_order,
        xi,
        ep_state,
        max_geometric_multiplicity: alpha + 1 - ep_order,
        separable_state_count: separable,
    })
}

/// Orthonormal kernel basis of `m` (right singular vectors at numerically
/// zero singular values).
fn kernel_basis(m: &CMatrix, tol: &ToleranceConfig) -> Result<Vec<CVector>> {
    let dim = m.nrows();
    let rank = numerical_rank(m, tol);
    let svd = m
        .svd()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let v = svd.V();
    Ok((rank..dim)
        .map(|k| CVector::from_fn(dim, |i| v[(i, k)]))
        .collect())
}

/// Cross-checks a prediction against direct analysis of the composite.
pub fn verify_composite(
    parts: &[SubsystemSpec],
    prediction: &CompositePrediction,
    tol: &ToleranceConfig,
) -> Result<VerificationReport> {
    let h = compose(parts)?;
    let dim = h.nrows();
    // for a fully degenerate operator the mean of the spectrum is exactly
    // the level, and the trace is immune to eigensolver smearing
    let mean = (0..dim).map(|i| h[(i, i)]).sum::<C64>() / C64::new(dim as f64, 0.0);
    if (mean - prediction.ep_eigenvalue).norm() > 10.0 * tol.cluster_atol {
        return Err(Error::Assumption(format!(
            "composite spectral mean {mean} is far from the predicted level {}",
            prediction.ep_eigenvalue
        )));
    }
    let cluster = DegeneracyCluster::spanning(dim, prediction.ep_eigenvalue);
    let sig = ep_signature(&h, &cluster, tol)?;
    let np = traceless_part(&h, prediction.ep_eigenvalue);
    let n = prediction.ep_order;
    let mut checks = Vec::new();

    let order_ok = sig.order == n;
    checks.push(VerificationCheck {
        name: "order",
        passed: order_ok,
        residual: (sig.order as f64 - n as f64).abs(),
        detail: format!("nilpotency index {} vs predicted {}", sig.order, n),
    });

    let top_power = mat_power(&np, n - 1);
    let direct_xi = spectral_norm(&top_power);
    let xi_residual = (direct_xi - prediction.xi).abs() / prediction.xi.max(f64::MIN_POSITIVE);
    checks.push(VerificationCheck {
        name: "response_strength",
        passed: xi_residual <= 1e-8,
        residual: xi_residual,
        detail: format!("direct {} vs formula {}", direct_xi, prediction.xi),
    });

    let sv = singular_values(&top_power);
    let rank_ratio = if sv.len() > 1 && sv[0] > 0.0 {
        sv[1] / sv[0]
    } else {
        0.0
    };
    checks.push(VerificationCheck {
        name: "top_power_rank",
        passed: numerical_rank(&top_power, tol) == 1,
        residual: rank_ratio,
        detail: "top nilpotent power must have rank 1".into(),
    });

    let direction = image_direction(&top_power)?;
    let overlap = inner(&direction, &prediction.ep_state).norm();
    checks.push(VerificationCheck {
        name: "ep_state_overlap",
        passed: overlap > 1.0 - 1e-8,
        residual: 1.0 - overlap,
        detail: format!("overlap {overlap}"),
    });

    let gamma = sig.geometric_multiplicity;
    let bound = prediction.max_geometric_multiplicity;
    checks.push(VerificationCheck {
        name: "geometric_multiplicity_bound",
        passed: gamma <= bound,
        residual: gamma as f64 - bound as f64,
        detail: format!("gamma {gamma} vs bound {bound}"),
    });

    // kernel states beyond the separable products must be entangled
    let separable = prediction.separable_state_count;
    let mut extra_states = Vec::new();
    if gamma > separable {
        let kernel = kernel_basis(&np, tol)?;
        let mut products: Vec<CVector> = vec![CVector::from_fn(1, |_| C64::new(1.0, 0.0))];
        for part in parts {
            let part_np = traceless_part(&part.hamiltonian, part.eigenvalue);
            let part_kernel = kernel_basis(&part_np, tol)?;
            let mut next = Vec::with_capacity(products.len() * part_kernel.len());
            for p in &products {
                for k in &part_kernel {
                    next.push(kron_vec(p, k));
                }
            }
            products = next;
        }
        for k in &kernel {
            let mut residual = k.clone();
            for p in &products {
                let coeff = inner(p, &residual);
                residual = CVector::from_fn(dim, |i| residual[i] - coeff * p[i]);
            }
            if residual.norm_l2() > 0.5 {
                extra_states.push(normalize_phase(&residual)?);
            }
        }
        // orthogonalize the survivors among themselves
        let mut ortho: Vec<CVector> = Vec::new();
        for s in extra_states {
            let mut r = s;
            for q in &ortho {
                let coeff = inner(q, &r);
                r = CVector::from_fn(dim, |i| r[i] - coeff * q[i]);
            }
            if r.norm_l2() > 0.5 {
                ortho.push(normalize_phase(&r)?);
            }
        }
        extra_states = ortho;
    }
    let expected_extras = gamma.saturating_sub(separable);
    checks.push(VerificationCheck {
        name: "entangled_extra_states",
        passed: extra_states.len() == expected_extras,
        residual: extra_states.len() as f64 - expected_extras as f64,
        detail: if expected_extras > 0 {
            format!(
                "{expected_extras} kernel state(s) beyond the separable products; these must be entangled"
            )
        } else {
            "every kernel state factorizes".into()
        },
    });

    let extra_state_concurrences = if dim == 4 && !extra_states.is_empty() {
        let mut cs = Vec::with_capacity(extra_states.len());
        for s in &extra_states {
            cs.push(concurrence(s)?);
        }
        Some(cs)
    } else {
        None
    };

    Ok(VerificationReport {
        checks,
        observed_order: sig.order,
        observed_geometric_multiplicity: gamma,
        observed_block_sizes: sig.jordan_block_sizes.clone(),
        extra_states,
        extra_state_concurrences,
    })
}
