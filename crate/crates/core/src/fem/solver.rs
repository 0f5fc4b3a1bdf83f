//! Sparse symmetric positive definite systems: compressed-row storage,
//! envelope (skyline) Cholesky, and Jacobi-preconditioned conjugate gradients.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Envelope sizes above this many entries fall back to conjugate gradients.
pub const DIRECT_ENTRY_LIMIT: usize = 50_000_000;

/// Symbolic structure shared by every matrix assembled on one mesh.
#[derive(Debug)]
pub struct Pattern {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    // envelope of the lower triangle: row i stores columns first_col[i]..=i
    first_col: Vec<usize>,
    env_ptr: Vec<usize>,
}

impl Pattern {
    /// Builds the pattern from per-row column lists (need not be sorted or unique).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut first_col = Vec::with_capacity(dim);
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(i);
            row.sort_unstable();
            row.dedup();
            first_col.push(row[0].min(i));
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let mut env_ptr = Vec::with_capacity(dim + 1);
        env_ptr.push(0);
        for (i, &f) in first_col.iter().enumerate() {
            env_ptr.push(env_ptr[i] + (i - f + 1));
        }
        Pattern {
            dim,
            row_ptr,
            cols,
            first_col,
            env_ptr,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn envelope_size(&self) -> usize {
        self.env_ptr[self.dim]
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn row(&self, i: usize) -> (&[usize], std::ops::Range<usize>) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], r)
    }
}

/// Matrix and right-hand side of a symmetric positive definite system.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    pattern: Arc<Pattern>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl SparseSpd {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let (nnz, dim) = (pattern.nnz(), pattern.dim());
        SparseSpd {
            pattern,
            values: vec![0.0; nnz],
            rhs: vec![0.0; dim],
        }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.dim)
            .map(|i| {
                let (cols, range) = p.row(i);
                cols.iter()
                    .zip(&self.values[range])
                    .map(|(&j, a)| a * x[j])
                    .sum()
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            let (cols, range) = self.pattern.row(i);
            for (&j, &a) in cols.iter().zip(&self.values[range]) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        let r = norm(&ax.iter().zip(&self.rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
        let b = norm(&self.rhs);
        if b == 0.0 {
            r
        } else {
            r / b
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Envelope Cholesky, or CG when the envelope exceeds [`DIRECT_ENTRY_LIMIT`].
    Auto,
    Cholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub tolerance: f64,
    /// CG iteration cap; `0` means ten times the system size.
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Auto,
            tolerance: 1e-10,
            max_iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Solves `A x = b`, checking the achieved relative residual.
pub fn solve_system(system: &SparseSpd, opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let direct = match opts.kind {
        SolverKind::Auto => system.pattern.envelope_size() <= DIRECT_ENTRY_LIMIT,
        SolverKind::Cholesky => true,
        SolverKind::ConjugateGradient => false,
    };
    if norm(&system.rhs) == 0.0 {
        return Ok((
            vec![0.0; system.dim()],
            SolveStats {
                relative_residual: 0.0,
                iterations: 0,
            },
        ));
    }
    if direct {
        let factor = EnvelopeCholesky::factor(system)?;
        let mut x = factor.solve(&system.rhs);
        let mut res = system.relative_residual(&x);
        let mut iterations = 0;
        // one step of iterative refinement if round-off left us short
        if res > opts.tolerance {
            let ax = system.mul_vec(&x);
            let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = factor.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            res = system.relative_residual(&x);
            iterations = 1;
        }
        if res > opts.tolerance {
            return Err(Error::Solver {
                iterations,
                residual: res,
            });
        }
        Ok((
            x,
            SolveStats {
                relative_residual: res,
                iterations,
            },
        ))
    } else {
        conjugate_gradient(system, opts)
    }
}

/// Lower-triangular envelope factor `L` with `A = L L^T`.
pub struct EnvelopeCholesky {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(system: &SparseSpd) -> Result<Self> {
        let p = Arc::clone(&system.pattern);
        let mut l = vec![0.0; p.envelope_size()];
        for i in 0..p.dim {
            let (cols, range) = p.row(i);
            for (&j, &a) in cols.iter().zip(&system.values[range]) {
                if j <= i {
                    l[p.env_ptr[i] + (j - p.first_col[i])] = a;
                }
            }
        }
        for i in 0..p.dim {
            let fi = p.first_col[i];
            let row_i = p.env_ptr[i];
            for j in fi..i {
                let fj = p.first_col[j];
                let k0 = fi.max(fj);
                let row_j = p.env_ptr[j];
                let s = dot(
                    &l[row_i + (k0 - fi)..row_i + (j - fi)],
                    &l[row_j + (k0 - fj)..row_j + (j - fj)],
                );
                let diag_j = l[row_j + (j - fj)];
                l[row_i + (j - fi)] = (l[row_i + (j - fi)] - s) / diag_j;
            }
            let off = &l[row_i..row_i + (i - fi)];
            let d = l[row_i + (i - fi)] - dot(off, off);
            if !(d > 0.0) {
                return Err(Error::Solver {
                    iterations: i,
                    residual: f64::NAN,
                });
            }
            l[row_i + (i - fi)] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            pattern: p,
            values: l,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        let mut x = b.to_vec();
        for i in 0..p.dim {
            let fi = p.first_col[i];
            let row = &self.values[p.env_ptr[i]..p.env_ptr[i + 1]];
            let s = dot(&row[..i - fi], &x[fi..i]);
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..p.dim).rev() {
            let fi = p.first_col[i];
            let row = &self.values[p.env_ptr[i]..p.env_ptr[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (xk, lik) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= lik * xi;
            }
        }
        x
    }
}

fn conjugate_gradient(system: &SparseSpd, opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let n = system.dim();
    let max_it = if opts.max_iterations == 0 { 10 * n } else { opts.max_iterations };
    let inv_diag: Vec<f64> = system.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = norm(&system.rhs);
    let mut x = vec![0.0; n];
    let mut r = system.rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_it {
        let ap = system.mul_vec(&p);
        let alpha = rz / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        if norm(&r) / b_norm <= opts.tolerance {
            // recompute against the true residual
            let res = system.relative_residual(&x);
            if res <= opts.tolerance {
                return Ok((
                    x,
                    SolveStats {
                        relative_residual: res,
                        iterations: it,
                    },
                ));
            }
        }
        z.iter_mut()
            .zip(r.iter().zip(&inv_diag))
            .for_each(|(z, (r, d))| *z = r * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::Solver {
        iterations: max_it,
        residual: system.relative_residual(&x),
    })
}
