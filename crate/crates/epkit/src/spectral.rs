//! Degeneracy structure of a single non-Hermitian operator: eigenvalue
//! clustering, nilpotency-based EP order, Jordan block multisets via rank
//! sequences, spectral response strength, and the projector expansion
//! H = sum_l (E_l P_l + N_l) with its Green's function.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{
    cmp_c64, ensure_finite, eigenvalues, identity, inverse, mat_power, numerical_rank,
    require_square, scale, spectral_norm, CMatrix, ToleranceConfig, C64,
};

/// Absolute residual allowed on projector identities and reconstruction
/// (relative to max(1, |H|) where a scale applies).
const EXPANSION_ABS_TOL: f64 = 1e-8;

/// Quadrature nodes for the resolvent contour integral behind each
/// spectral projector.
const CONTOUR_NODES: usize = 96;

/// spectral_expansion refuses above these sizes.
pub const MAX_EXPANSION_DIM: usize = 64;
pub const MAX_EXPANSION_CLUSTERS: usize = 4;

/// A group of eigenvalues treated as one degenerate level.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyCluster {
    /// Cluster centroid.
    pub eigenvalue: C64,
    pub algebraic_multiplicity: usize,
    /// Indices into the sorted eigenvalue list of the analyzed operator.
    pub member_indices: Vec<usize>,
}

impl DegeneracyCluster {
    /// The whole spectrum as one cluster. This is the honest attribution
    /// for a fully degenerate operator: an eigensolver smears a defective
    /// level of order n across a radius of roughly (machine eps)^(1/n),
    /// which distance-based clustering cannot regroup at tight radii.
    pub fn spanning(dim: usize, eigenvalue: C64) -> Self {
        Self {
            eigenvalue,
            algebraic_multiplicity: dim,
            member_indices: (0..dim).collect(),
        }
    }
}

/// Per-cluster degeneracy report.
#[derive(Debug, Clone)]
pub struct EPSignature {
    pub eigenvalue: C64,
    pub algebraic_multiplicity: usize,
    pub geometric_multiplicity: usize,
    /// Largest Jordan block; 1 means semisimple (no EP).
    pub order: usize,
    /// Spectral response strength |N^(order-1)|; 0 when order is 1.
    pub xi: f64,
    /// Descending multiset of Jordan block sizes.
    pub jordan_block_sizes: Vec<usize>,
    /// N^(order-1); the zero matrix when order is 1.
    pub nilpotent_power: CMatrix,
}

#[derive(Debug, Clone)]
pub struct SpectralTerm {
    pub eigenvalue: C64,
    pub projector: CMatrix,
    pub nilpotent: CMatrix,
    pub order: usize,
    pub algebraic_multiplicity: usize,
}

/// H = sum_l (E_l P_l + N_l) with mutually annihilating projectors.
#[derive(Debug, Clone)]
pub struct SpectralExpansion {
    pub dim: usize,
    /// Clustering radius used during construction; reused as the pole
    /// guard in [`greens_function`].
    pub cluster_atol: f64,
    pub terms: Vec<SpectralTerm>,
}

/// Single-linkage clustering of the spectrum with radius `cluster_atol`,
/// ordered by (Re, Im) of the centroid.
pub fn cluster_spectrum(h: &CMatrix, tol: &ToleranceConfig) -> Result<Vec<DegeneracyCluster>> {
    tol.validate()?;
    let vals = eigenvalues(h)?;
    Ok(cluster_values(&vals, tol.cluster_atol))
}

/// Clustering on an explicit eigenvalue list (assumed sorted by (Re, Im)).
pub fn cluster_values(vals: &[C64], atol: f64) -> Vec<DegeneracyCluster> {
    let n = vals.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (vals[i] - vals[j]).norm() <= atol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of_group: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of_group.iter().position(|&g| g == r) {
            Some(k) => groups[k].push(i),
            None => {
                root_of_group.push(r);
                groups.push(vec![i]);
            }
        }
    }
    let mut clusters: Vec<DegeneracyCluster> = groups
        .into_iter()
        .map(|members| {
            let centroid = members.iter().map(|&i| vals[i]).sum::<C64>()
                / Complex::new(members.len() as f64, 0.0);
            DegeneracyCluster {
                eigenvalue: centroid,
                algebraic_multiplicity: members.len(),
                member_indices: members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| cmp_c64(&a.eigenvalue, &b.eigenvalue));
    clusters
}

/// h - e * identity.
pub fn traceless_part(h: &CMatrix, e: C64) -> CMatrix {
    h - scale(e, &identity(h.nrows()))
}

/// Smallest k >= 1 with |np^k| <= nilpotency_rtol * |np|^k. A matrix with
/// |np| <= nilpotency_rtol counts as zero and gets index 1 (inputs are
/// order-unity energy operators; rescale before calling otherwise).
pub fn nilpotency_index(np: &CMatrix, tol: &ToleranceConfig) -> Result<usize> {
    let dim = require_square(np, "nilpotency_index input")?;
    ensure_finite(np, "nilpotency_index input")?;
    tol.validate()?;
    let nrm = spectral_norm(np);
    if nrm <= tol.nilpotency_rtol {
        return Ok(1);
    }
    let mut p = np.clone();
    for k in 2..=dim {
        p = &p * np;
        if spectral_norm(&p) <= tol.nilpotency_rtol * nrm.powi(k as i32) {
            return Ok(k);
        }
    }
    Err(Error::NotNilpotent(format!(
        "no power up to {dim} is numerically zero; the degeneracy assumption failed"
    )))
}

/// Jordan block multiset from the rank sequence r_k = rank(np^k): the
/// number of blocks of size >= k equals r_(k-1) - r_k, with r_0 the
/// dimension.
pub fn jordan_block_sizes(np: &CMatrix, tol: &ToleranceConfig) -> Result<Vec<usize>> {
    let dim = require_square(np, "jordan_block_sizes input")?;
    let order = nilpotency_index(np, tol)?;
    block_sizes_from_powers(np, dim, order, tol)
}

/// Rank-sequence construction with an explicit subspace dimension r_0,
/// so restricted nilpotents N_l do not count the complement as 1-blocks.
fn block_sizes_from_powers(
    np: &CMatrix,
    r0: usize,
    order: usize,
    tol: &ToleranceConfig,
) -> Result<Vec<usize>> {
    if order == 1 {
        return Ok(vec![1; r0]);
    }
    let mut ranks = Vec::with_capacity(order + 1);
    ranks.push(r0);
    let mut p = np.clone();
    for k in 1..=order {
        // rank(np^order) is 0 by the definition of the nilpotency index
        let r = if k == order {
            0
        } else {
            numerical_rank(&p, tol)
        };
        ranks.push(r);
        if k < order {
            p = &p * np;
        }
    }
    let mut blocks_ge = vec![0usize; order + 2];
    for k in 1..=order {
        if ranks[k] > ranks[k - 1] {
            return Err(Error::Numerical(
                "rank sequence is not monotone; tolerances cannot resolve the block structure"
                    .into(),
            ));
        }
        blocks_ge[k] = ranks[k - 1] - ranks[k];
    }
    for k in 1..order {
        if blocks_ge[k + 1] > blocks_ge[k] {
            return Err(Error::Numerical(
                "inconsistent rank sequence; tolerances cannot resolve the block structure".into(),
            ));
        }
    }
    let mut sizes = Vec::new();
    for k in (1..=order).rev() {
        for _ in 0..(blocks_ge[k] - blocks_ge[k + 1]) {
            sizes.push(k);
        }
    }
    Ok(sizes)
}

/// Degeneracy signature of one cluster. With a cluster spanning the whole
/// spectrum this analyzes the traceless part directly; otherwise the
/// operator is first confined to the cluster's invariant subspace via its
/// spectral projector.
pub fn ep_signature(
    h: &CMatrix,
    cluster: &DegeneracyCluster,
    tol: &ToleranceConfig,
) -> Result<EPSignature> {
    let dim = require_square(h, "ep_signature input")?;
    ensure_finite(h, "ep_signature input")?;
    tol.validate()?;
    let alpha = cluster.algebraic_multiplicity;
    if alpha == 0 || alpha > dim {
        return Err(Error::InvalidInput(format!(
            "cluster multiplicity {alpha} does not fit dimension {dim}"
        )));
    }
    let hscale = spectral_norm(h).max(1.0);
    let (level, np) = if alpha == dim {
        (cluster.eigenvalue, traceless_part(h, cluster.eigenvalue))
    } else {
        let clusters = cluster_spectrum(h, tol)?;
        let matched = clusters
            .iter()
            .find(|c| {
                c.algebraic_multiplicity == alpha
                    && (c.eigenvalue - cluster.eigenvalue).norm() <= tol.cluster_atol
            })
            .ok_or_else(|| {
                Error::InvalidInput(
                    "cluster does not match the spectrum of the supplied operator".into(),
                )
            })?;
        let vals = eigenvalues(h)?;
        let p = cluster_projector(h, &vals, &clusters, matched, tol)?;
        // tr(P h)/alpha recovers the level exactly, unlike the centroid
        // of the smeared eigenvalues
        let refined = projected_eigenvalue(h, &p, alpha);
        let shifted = traceless_part(h, refined);
        (refined, &(&p * &shifted) * &p)
    };

    let (order, gamma, blocks, nilpotent_power, xi);
    if spectral_norm(&np) <= tol.nilpotency_rtol * hscale {
        // semisimple at the problem scale
        order = 1;
        gamma = alpha;
        blocks = vec![1; alpha];
        nilpotent_power = CMatrix::zeros(dim, dim);
        xi = 0.0;
    } else {
        order = nilpotency_index(&np, tol)?;
        gamma = alpha
            .checked_sub(numerical_rank(&np, tol))
            .ok_or_else(|| Error::Numerical("rank exceeds cluster multiplicity".into()))?;
        blocks = block_sizes_from_powers(&np, alpha, order, tol)?;
        nilpotent_power = mat_power(&np, order - 1);
        xi = if order >= 2 {
            spectral_norm(&nilpotent_power)
        } else {
            0.0
        };
    }

    let sig = EPSignature {
        eigenvalue: level,
        algebraic_multiplicity: alpha,
        geometric_multiplicity: gamma,
        order,
        xi,
        jordan_block_sizes: blocks,
        nilpotent_power,
    };
    validate_signature(&sig)?;
    Ok(sig)
}

fn validate_signature(sig: &EPSignature) -> Result<()> {
    let total: usize = sig.jordan_block_sizes.iter().sum();
    if total != sig.algebraic_multiplicity {
        return Err(Error::Numerical(format!(
            "block sizes sum to {total}, algebraic multiplicity is {}",
            sig.algebraic_multiplicity
        )));
    }
    let max = sig.jordan_block_sizes.iter().copied().max().unwrap_or(1);
    if max != sig.order {
        return Err(Error::Numerical(format!(
            "largest block {max} disagrees with order {}",
            sig.order
        )));
    }
    if sig.jordan_block_sizes.len() != sig.geometric_multiplicity {
        return Err(Error::Numerical(format!(
            "block count {} disagrees with geometric multiplicity {}",
            sig.jordan_block_sizes.len(),
            sig.geometric_multiplicity
        )));
    }
    if sig.order >= 2
        && sig.geometric_multiplicity > sig.algebraic_multiplicity - sig.order + 1
    {
        return Err(Error::Numerical(
            "geometric multiplicity exceeds alpha - order + 1".into(),
        ));
    }
    Ok(())
}

/// Mean of the spectrum confined to the projector's invariant subspace.
fn projected_eigenvalue(h: &CMatrix, p: &CMatrix, alpha: usize) -> C64 {
    let ph = p * h;
    (0..h.nrows()).map(|i| ph[(i, i)]).sum::<C64>() / C64::new(alpha as f64, 0.0)
}

/// Spectral projector via a resolvent contour integral around the cluster.
fn cluster_projector(
    h: &CMatrix,
    vals: &[C64],
    clusters: &[DegeneracyCluster],
    target: &DegeneracyCluster,
    tol: &ToleranceConfig,
) -> Result<CMatrix> {
    let dim = h.nrows();
    let mut min_other = f64::INFINITY;
    for c in clusters {
        if std::ptr::eq(c, target) {
            continue;
        }
        for &i in &c.member_indices {
            min_other = min_other.min((vals[i] - target.eigenvalue).norm());
        }
    }
    if !min_other.is_finite() {
        return Ok(identity(dim));
    }
    if min_other <= 10.0 * tol.cluster_atol {
        return Err(Error::IllSeparated(format!(
            "nearest foreign eigenvalue at distance {min_other:.3e} from the cluster centroid"
        )));
    }
    let radius = 0.5 * min_other;
    let spread = target
        .member_indices
        .iter()
        .map(|&i| (vals[i] - target.eigenvalue).norm())
        .fold(0.0f64, f64::max);
    if spread >= 0.5 * radius {
        return Err(Error::IllSeparated(
            "cluster width is comparable to its separation".into(),
        ));
    }
    let mut p = CMatrix::zeros(dim, dim);
    let nodes = CONTOUR_NODES;
    for j in 0..nodes {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64;
        let w = C64::from_polar(radius, theta);
        let z = target.eigenvalue + w;
        let resolvent = inverse(&traceless_part(h, z))
            .map_err(|_| Error::Numerical("resolvent is singular on the contour".into()))?;
        // (z - h)^-1 = -(h - z)^-1
        p = &p - &scale(w / C64::new(nodes as f64, 0.0), &resolvent);
    }
    let idem = (&(&p * &p) - &p).norm_max();
    let tr: C64 = (0..dim).map(|i| p[(i, i)]).sum();
    if idem > EXPANSION_ABS_TOL
        || (tr - C64::new(target.algebraic_multiplicity as f64, 0.0)).norm() > 1e-6
    {
        return Err(Error::Numerical(format!(
            "spectral projector failed validation (idempotency residual {idem:.3e}, trace {tr})"
        )));
    }
    Ok(p)
}

/// Projector expansion of `h` over its eigenvalue clusters. Refuses more
/// than [`MAX_EXPANSION_CLUSTERS`] clusters or dimension beyond
/// [`MAX_EXPANSION_DIM`].
pub fn spectral_expansion(h: &CMatrix, tol: &ToleranceConfig) -> Result<SpectralExpansion> {
    let dim = require_square(h, "spectral_expansion input")?;
    ensure_finite(h, "spectral_expansion input")?;
    tol.validate()?;
    if dim > MAX_EXPANSION_DIM {
        return Err(Error::CapacityExceeded(format!(
            "spectral_expansion supports dimension <= {MAX_EXPANSION_DIM}, got {dim}"
        )));
    }
    let vals = eigenvalues(h)?;
    let clusters = cluster_values(&vals, tol.cluster_atol);
    if clusters.len() > MAX_EXPANSION_CLUSTERS {
        return Err(Error::CapacityExceeded(format!(
            "spectral_expansion supports <= {MAX_EXPANSION_CLUSTERS} clusters, found {}",
            clusters.len()
        )));
    }
    let hscale = spectral_norm(h).max(1.0);

    // pairwise member gap must clear the clustering radius comfortably
    for (i, a) in clusters.iter().enumerate() {
        for b in clusters.iter().skip(i + 1) {
            let mut gap = f64::INFINITY;
            for &ia in &a.member_indices {
                for &ib in &b.member_indices {
                    gap = gap.min((vals[ia] - vals[ib]).norm());
                }
            }
            if gap <= 10.0 * tol.cluster_atol {
                return Err(Error::IllSeparated(format!(
                    "clusters at {} and {} are separated by only {gap:.3e}",
                    a.eigenvalue, b.eigenvalue
                )));
            }
        }
    }

    let mut terms = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let projector = if clusters.len() == 1 {
            identity(dim)
        } else {
            cluster_projector(h, &vals, &clusters, cluster, tol)?
        };
        let level = projected_eigenvalue(h, &projector, cluster.algebraic_multiplicity);
        let shifted = traceless_part(h, level);
        let nilpotent = &(&projector * &shifted) * &projector;
        let order = if spectral_norm(&nilpotent) <= tol.nilpotency_rtol * hscale {
            1
        } else {
            nilpotency_index(&nilpotent, tol)?
        };
        terms.push(SpectralTerm {
            eigenvalue: level,
            projector,
            nilpotent,
            order,
            algebraic_multiplicity: cluster.algebraic_multiplicity,
        });
    }

    let expansion = SpectralExpansion {
        dim,
        cluster_atol: tol.cluster_atol,
        terms,
    };
    validate_expansion(&expansion, h, hscale)?;
    Ok(expansion)
}

fn validate_expansion(exp: &SpectralExpansion, h: &CMatrix, hscale: f64) -> Result<()> {
    let dim = exp.dim;
    let mut completeness = CMatrix::zeros(dim, dim);
    let mut reconstruction = CMatrix::zeros(dim, dim);
    for term in &exp.terms {
        completeness = &completeness + &term.projector;
        reconstruction =
            &reconstruction + &(&scale(term.eigenvalue, &term.projector) + &term.nilpotent);
    }
    let mut worst = (&completeness - &identity(dim)).norm_max();
    for (i, a) in exp.terms.iter().enumerate() {
        for (j, b) in exp.terms.iter().enumerate() {
            let pp = &a.projector * &b.projector;
            let residual = if i == j {
                (&pp - &a.projector).norm_max()
            } else {
                pp.norm_max()
            };
            worst = worst.max(residual);
            if i != j {
                worst = worst.max((&a.nilpotent * &b.nilpotent).norm_max());
            }
        }
        worst = worst.max((&(&a.projector * &a.nilpotent) - &a.nilpotent).norm_max());
        worst = worst.max((&(&a.nilpotent * &a.projector) - &a.nilpotent).norm_max());
    }
    if worst > EXPANSION_ABS_TOL {
        return Err(Error::Numerical(format!(
            "projector identities violated with residual {worst:.3e}"
        )));
    }
    let recon = (&reconstruction - h).norm_max();
    if recon > EXPANSION_ABS_TOL * hscale {
        return Err(Error::Numerical(format!(
            "expansion reconstruction residual {recon:.3e} exceeds tolerance"
        )));
    }
    Ok(())
}

/// Resolvent from the expansion:
/// G(e) = sum_l [P_l/(e-E_l) + sum_k N_l^(k-1)/(e-E_l)^k].
pub fn greens_function(exp: &SpectralExpansion, e: C64) -> Result<CMatrix> {
    for term in &exp.terms {
        if (e - term.eigenvalue).norm() <= exp.cluster_atol {
            return Err(Error::SingularEvaluation(format!(
                "probe energy {e} is within the clustering radius of eigenvalue {}",
                term.eigenvalue
            )));
        }
    }
    let dim = exp.dim;
    let mut g = CMatrix::zeros(dim, dim);
    for term in &exp.terms {
        let delta = e - term.eigenvalue;
        g = &g + &scale(delta.inv(), &term.projector);
        let mut numerator = term.nilpotent.clone();
        let mut denominator = delta * delta;
        for _ in 2..=term.order {
            g = &g + &scale(denominator.inv(), &numerator);
            numerator = &numerator * &term.nilpotent;
            denominator *= delta;
        }
    }
    Ok(g)
}
