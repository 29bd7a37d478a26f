//! Randomized Jordan-structured systems with controlled conditioning,
//! used by the fuzz campaigns. Exact structure metadata rides along so
//! analysis results can be checked against ground truth.

use rand::Rng;

use crate::linalg::{dagger, CMatrix, CVector, C64};

/// A matrix with known Jordan data: `matrix = E + V J V^-1` where J is
/// nilpotent with the recorded block sizes.
#[derive(Debug, Clone)]
pub struct SynthSystem {
    pub matrix: CMatrix,
    pub eigenvalue: C64,
    pub block_sizes: Vec<usize>,
    pub order: usize,
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().max(1e-300);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

pub fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(gaussian(rng), gaussian(rng))
}

/// Dense matrix with independent standard complex Gaussian entries.
pub fn random_dense(dim: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng))
}

/// Unit-norm random state.
pub fn random_state(dim: usize, rng: &mut impl Rng) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_| complex_gaussian(rng));
        let nrm = v.norm_l2();
        if nrm > 1e-6 {
            return CVector::from_fn(dim, |i| v[i] / C64::new(nrm, 0.0));
        }
    }
}

/// Haar-ish random unitary from the QR factorization of a Gaussian matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let a = random_dense(dim, rng);
    let qr = a.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    // absorb R's diagonal phases so the distribution is rotation invariant
    CMatrix::from_fn(dim, dim, |i, j| {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        q[(i, j)] * phase
    })
}

/// Similarity transform with prescribed condition number: V = Q D P^H
/// with unitary Q, P and log-spaced singular values. Returns (V, V^-1)
/// built from the same factors so the inverse is accurate to rounding.
pub fn random_similarity(dim: usize, cond: f64, rng: &mut impl Rng) -> (CMatrix, CMatrix) {
    let q = random_unitary(dim, rng);
    let p = random_unitary(dim, rng);
    let lo = cond.sqrt().recip();
    let hi = cond.sqrt();
    let sigma: Vec<f64> = (0..dim)
        .map(|i| {
            if dim == 1 {
                1.0
            } else {
                lo * (hi / lo).powf(i as f64 / (dim - 1) as f64)
            }
        })
        .collect();
    let ph = dagger(&p);
    let v = CMatrix::from_fn(dim, dim, |i, j| {
        (0..dim).map(|k| q[(i, k)] * sigma[k] * ph[(k, j)]).sum()
    });
    let qh = dagger(&q);
    let vinv = CMatrix::from_fn(dim, dim, |i, j| {
        (0..dim).map(|k| p[(i, k)] * qh[(k, j)] / sigma[k]).sum()
    });
    (v, vinv)
}

/// Block-diagonal nilpotent with the given block sizes and superdiagonal
/// couplings (one scale per block).
pub fn nilpotent_from_blocks(sizes: &[usize], couplings: &[f64]) -> CMatrix {
    let dim: usize = sizes.iter().sum();
    let mut m = CMatrix::zeros(dim, dim);
    let mut offset = 0;
    for (b, &size) in sizes.iter().enumerate() {
        for i in 0..size.saturating_sub(1) {
            m[(offset + i, offset + i + 1)] = C64::new(couplings[b], 0.0);
        }
        offset += size;
    }
    m
}

/// Random partition of `dim` with at least one part >= 2 (so the system
/// has a genuine EP), parts in descending order.
fn random_blocks(dim: usize, rng: &mut impl Rng) -> Vec<usize> {
    loop {
        let mut remaining = dim;
        let mut sizes = Vec::new();
        while remaining > 0 {
            let s = rng.gen_range(1..=remaining);
            sizes.push(s);
            remaining -= s;
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        if sizes[0] >= 2 {
            return sizes;
        }
    }
}

/// Fully degenerate system E + V J V^-1 with random blocks, eigenvalue in
/// the unit box, couplings in [0.5, 2] and condition number in
/// [1.2, cond_max].
pub fn random_jordan_system(
    rng: &mut impl Rng,
    dims: std::ops::RangeInclusive<usize>,
    cond_max: f64,
) -> SynthSystem {
    let dim = rng.gen_range(dims);
    let blocks = random_blocks(dim.max(2), rng);
    random_jordan_system_with_blocks(rng, &blocks, cond_max)
}

pub fn random_jordan_system_with_blocks(
    rng: &mut impl Rng,
    blocks: &[usize],
    cond_max: f64,
) -> SynthSystem {
    let dim: usize = blocks.iter().sum();
    let couplings: Vec<f64> = blocks.iter().map(|_| rng.gen_range(0.5..2.0)).collect();
    let j = nilpotent_from_blocks(blocks, &couplings);
    let cond = rng.gen_range(1.2..cond_max.max(1.3));
    let (v, vinv) = random_similarity(dim, cond, rng);
    let eigenvalue = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let mut matrix = &(&v * &j) * &vinv;
    for i in 0..dim {
        matrix[(i, i)] += eigenvalue;
    }
    let order = *blocks.iter().max().unwrap();
    SynthSystem {
        matrix,
        eigenvalue,
        block_sizes: blocks.to_vec(),
        order,
    }
}

/// Matrix with several well-separated degenerate clusters, each carrying
/// its own Jordan structure. Returns the matrix and per-cluster
/// (eigenvalue, block sizes) ground truth.
pub fn random_clustered_system(
    rng: &mut impl Rng,
    max_clusters: usize,
) -> (CMatrix, Vec<(C64, Vec<usize>)>) {
    let k = rng.gen_range(2..=max_clusters.max(2));
    let mut truth = Vec::with_capacity(k);
    let mut blocks_all: Vec<usize> = Vec::new();
    let mut couplings: Vec<f64> = Vec::new();
    let mut diag: Vec<C64> = Vec::new();
    for c in 0..k {
        // centers on a coarse grid so clusters stay >= 1 apart
        let center = C64::new(2.0 * c as f64, rng.gen_range(-0.3..0.3));
        let dim = rng.gen_range(1..=3usize);
        let blocks = if dim == 1 {
            vec![1]
        } else {
            random_blocks(dim, rng)
        };
        for &b in &blocks {
            blocks_all.push(b);
            couplings.push(rng.gen_range(0.5..2.0));
            for _ in 0..b {
                diag.push(center);
            }
        }
        truth.push((center, blocks));
    }
    let dim: usize = blocks_all.iter().sum();
    let mut j = nilpotent_from_blocks(&blocks_all, &couplings);
    for i in 0..dim {
        j[(i, i)] = diag[i];
    }
    let cond = rng.gen_range(1.2..3.0);
    let (v, vinv) = random_similarity(dim, cond, rng);
    ((&(&v * &j) * &vinv), truth)
}
