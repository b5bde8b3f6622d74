//! Minimal sparse linear algebra: CSR matrices, conjugate gradients for SPD
//! systems, and power iteration for operator norm estimates.

use crate::error::{Error, Result};
use crate::mesh::FeSpaceP1;

/// Row-compressed sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    ncols: usize,
}

impl SparseMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut vals = Vec::with_capacity(trips.len());
        let mut i = 0;
        for r in 0..nrows {
            // trips are sorted, so each row is a contiguous run
            while i < trips.len() && trips[i].0 == r {
                let c = trips[i].1;
                debug_assert!(c < ncols);
                let mut v = trips[i].2;
                i += 1;
                while i < trips.len() && trips[i].0 == r && trips[i].1 == c {
                    v += trips[i].2;
                    i += 1;
                }
                col_idx.push(c);
                vals.push(v);
            }
            row_ptr[r + 1] = col_idx.len();
        }
        debug_assert_eq!(i, trips.len(), "triplet row index out of range");
        SparseMatrix { row_ptr, col_idx, vals, ncols }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entries of row `r` as (column, value) pairs, sorted by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows());
        for r in 0..self.nrows() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.matvec(x, &mut y);
        y
    }

    /// Principal submatrix on the given global indices (result is square,
    /// ordered as `idx`). This realizes the local operator obtained by
    /// restricting a global bilinear form to an extension-by-zero subspace.
    pub fn principal_submatrix(&self, idx: &[usize]) -> SparseMatrix {
        let mut global_to_local = vec![usize::MAX; self.ncols];
        for (l, &g) in idx.iter().enumerate() {
            global_to_local[g] = l;
        }
        let mut trips = Vec::new();
        for (l, &g) in idx.iter().enumerate() {
            for (c, v) in self.row(g) {
                let lc = global_to_local[c];
                if lc != usize::MAX {
                    trips.push((l, lc, v));
                }
            }
        }
        SparseMatrix::from_triplets(idx.len(), idx.len(), trips)
    }
}

// ---- small vector helpers used throughout the crate ----

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Assembles the Dirichlet-energy stiffness matrix over interior DOFs.
pub fn assemble_stiffness(space: &FeSpaceP1) -> SparseMatrix {
    let n = space.dof_count();
    let mut trips = Vec::new();
    for tri in space.triangles() {
        for i in 0..3 {
            let Some(di) = space.node_dof(tri.nodes[i]) else { continue };
            for j in 0..3 {
                let Some(dj) = space.node_dof(tri.nodes[j]) else { continue };
                let gij = tri.grads[i][0] * tri.grads[j][0] + tri.grads[i][1] * tri.grads[j][1];
                trips.push((di, dj, tri.area * gij));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, trips)
}

/// Conjugate gradients on an abstract SPD operator. Stops when
/// `||Ax - b|| <= tol * ||b||` or errors after `max_iter` iterations.
pub fn cg_operator<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = b.len();
    let mut x = vec![0.0; dim];
    let mut r = b.to_vec();
    let bnorm = norm_sq(b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut q = vec![0.0; dim];
    let mut rr = norm_sq(&r);
    let target = tol * bnorm;
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::NotSpd);
        }
        let alpha = rr / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        let rr_new = norm_sq(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..dim {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        Ok(x)
    } else {
        Err(Error::SolverDivergence(format!(
            "cg stalled: residual {:.3e} > target {:.3e}",
            rr.sqrt(),
            target
        )))
    }
}

/// Solves A x = b for SPD A with unpreconditioned conjugate gradients.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    if b.len() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.len() });
    }
    let cap = (10 * a.nrows()).max(100);
    cg_operator(|x, y| a.matvec(x, y), b, tol, cap)
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric
/// positive semidefinite map.
pub fn op_norm_sq<F>(apply: F, dim: usize, iters: usize) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    // deterministic pseudo-random start vector
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let nrm = norm_sq(&v).sqrt();
    if nrm == 0.0 || dim == 0 {
        return 0.0;
    }
    for vi in v.iter_mut() {
        *vi /= nrm;
    }
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..iters {
        apply(&v, &mut w);
        lambda = dot(&v, &w);
        let wn = norm_sq(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    lambda
}
