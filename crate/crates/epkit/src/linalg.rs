//! Dense complex linear algebra primitives shared by every other module:
//! Kronecker products and sums, spectral norm, numerical rank, and a dense
//! nonsymmetric eigensolver with deterministic eigenvector phases.

use std::cmp::Ordering;

use faer::linalg::solvers::DenseSolveCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = num_complex::Complex<f64>;
pub type CMatrix = faer::Mat<C64>;
pub type CVector = faer::Col<C64>;

/// Largest element count a Kronecker product is allowed to produce.
pub const MAX_KRON_CELLS: usize = 1 << 26;

/// Tolerances controlling rank decisions, eigenvalue clustering and
/// nilpotency cutoffs. `rank_rtol` is relative to the largest singular
/// value, `cluster_atol` is an absolute radius in the complex plane
/// (energy units), and `nilpotency_rtol` bounds the dimensionless ratio
/// |N^k| / |N|^k when declaring a matrix power zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub rank_rtol: f64,
    pub cluster_atol: f64,
    pub nilpotency_rtol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-10,
            cluster_atol: 1e-8,
            nilpotency_rtol: 1e-10,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rank_rtol", self.rank_rtol),
            ("cluster_atol", self.cluster_atol),
            ("nilpotency_rtol", self.nilpotency_rtol),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "tolerance {name} must lie strictly inside (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Defaults with the clustering radius scaled to the operator:
    /// `cluster_atol = 1e-8 * max(1, |h|)`.
    pub fn scaled_to(h: &CMatrix) -> Self {
        let scale = spectral_norm(h).max(1.0);
        Self {
            cluster_atol: 1e-8 * scale,
            ..Self::default()
        }
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn ensure_finite(m: &CMatrix, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{what} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn require_square(m: &CMatrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn require_nonempty(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{what} must be nonempty")));
    }
    Ok(())
}

/// Dimensions of `kron(a, b)` with overflow and capacity checking.
pub fn kron_dims(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let rows = a
        .0
        .checked_mul(b.0)
        .ok_or_else(|| Error::CapacityExceeded("kron row count overflows".into()))?;
    let cols = a
        .1
        .checked_mul(b.1)
        .ok_or_else(|| Error::CapacityExceeded("kron column count overflows".into()))?;
    let cells = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::CapacityExceeded("kron cell count overflows".into()))?;
    if cells > MAX_KRON_CELLS {
        return Err(Error::CapacityExceeded(format!(
            "kron result would hold {cells} entries, cap is {MAX_KRON_CELLS}"
        )));
    }
    Ok((rows, cols))
}

/// Kronecker product; block (i, j) equals a[i,j] * b.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    require_nonempty(a, "kron lhs")?;
    require_nonempty(b, "kron rhs")?;
    let (rows, cols) = kron_dims((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))?;
    let mut out = CMatrix::zeros(rows, cols);
    faer::linalg::kron::kron(out.as_mut(), a.as_ref(), b.as_ref());
    Ok(out)
}

/// Tensor product of vectors, consistent with [`kron`] ordering.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let (na, nb) = (a.nrows(), b.nrows());
    CVector::from_fn(na * nb, |i| a[i / nb] * b[i % nb])
}

/// Kronecker sum a (x) 1 + 1 (x) b of two square matrices.
pub fn kron_sum(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let na = require_square(a, "kron_sum lhs")?;
    let nb = require_square(b, "kron_sum rhs")?;
    let left = kron(a, &identity(nb))?;
    let right = kron(&identity(na), b)?;
    Ok(&left + &right)
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.svd().expect("svd of a finite matrix");
    (0..m.nrows().min(m.ncols())).map(|i| svd.S()[i].re).collect()
}

/// Largest singular value; 0 for an empty matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Count of singular values above `rank_rtol * sigma_max`; 0 for the zero
/// matrix.
pub fn numerical_rank(m: &CMatrix, tol: &ToleranceConfig) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        None | Some(&0.0) => 0,
        Some(&smax) => sv.iter().filter(|&&s| s > tol.rank_rtol * smax).count(),
    }
}

pub(crate) fn cmp_c64(a: &C64, b: &C64) -> Ordering {
    a.re.partial_cmp(&b.re)
        .unwrap_or(Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
}

/// All eigenvalues with multiplicity, sorted by (Re, Im).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    require_square(m, "eigenvalues input")?;
    ensure_finite(m, "eigenvalues input")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut vals: Vec<C64> = m
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    vals.sort_by(cmp_c64);
    Ok(vals)
}

/// Eigenvalues paired with unit-norm right eigenvectors, sorted by
/// (Re, Im) of the eigenvalue. Phases are fixed by rotating the
/// largest-magnitude component onto the positive real axis.
pub fn eigen_decompose(m: &CMatrix) -> Result<Vec<(C64, CVector)>> {
    let n = require_square(m, "eigen_decompose input")?;
    ensure_finite(m, "eigen_decompose input")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let eig = m
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    let mut out: Vec<(C64, CVector)> = Vec::with_capacity(n);
    for k in 0..n {
        let v = CVector::from_fn(n, |i| eig.U()[(i, k)]);
        out.push((eig.S()[k], normalize_phase(&v)?));
    }
    out.sort_by(|a, b| cmp_c64(&a.0, &b.0));
    Ok(out)
}

/// Unit-norm copy of `v` with its largest-magnitude component rotated to
/// the positive real axis; ties pick the lowest index.
pub fn normalize_phase(v: &CVector) -> Result<CVector> {
    let nrm = v.norm_l2();
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::InvalidInput(
            "cannot normalize a zero or non-finite vector".into(),
        ));
    }
    let mut idx = 0;
    let mut best = 0.0f64;
    for i in 0..v.nrows() {
        let a = v[i].norm();
        if a > best {
            best = a;
            idx = i;
        }
    }
    let phase = v[idx] / v[idx].norm();
    let scale = phase.conj() / nrm;
    Ok(CVector::from_fn(v.nrows(), |i| v[i] * scale))
}

/// m^k by repeated multiplication; k = 0 gives the identity.
pub fn mat_power(m: &CMatrix, k: usize) -> CMatrix {
    let n = m.nrows();
    let mut acc = identity(n);
    for _ in 0..k {
        acc = &acc * m;
    }
    acc
}

/// Dense inverse via partial-pivoting LU.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    require_square(m, "inverse input")?;
    ensure_finite(m, "inverse input")?;
    let inv = m.partial_piv_lu().inverse();
    ensure_finite(&inv, "inverse result")
        .map_err(|_| Error::Numerical("matrix is numerically singular".into()))?;
    Ok(inv)
}

/// Conjugate transpose.
pub fn dagger(m: &CMatrix) -> CMatrix {
    CMatrix::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

/// <a, b> with conjugation on the first argument.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    (0..a.nrows().min(b.nrows())).map(|i| a[i].conj() * b[i]).sum()
}

pub fn scale(z: C64, m: &CMatrix) -> CMatrix {
    faer::Scale(z) * m
}
