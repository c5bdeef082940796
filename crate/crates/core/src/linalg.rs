//! Dense symmetric eigen/singular helpers and a matrix-free Lanczos solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let v = sym_eigenvalues(m);
    v[v.len() - 1]
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Largest singular value, as the square root of `lambda_max(MᵀM)`.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    lambda_max(&(m.transpose() * m)).max(0.0).sqrt()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::SingularSystem(what.to_string()))?;
    Ok(chol.inverse())
}

pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::SingularSystem(what.to_string()))?;
    Ok(chol.solve(b))
}

/// Relative Frobenius distance `‖a - b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Largest subspace kept before a thick restart.
    pub basis: usize,
    /// Ritz vectors retained across a restart.
    pub keep: usize,
    pub max_matvecs: usize,
    /// Residual target `‖A y - θ y‖ <= tol · |θ|`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            basis: 40,
            keep: 12,
            max_matvecs: 20_000,
            tol: 1e-11,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub residual: f64,
}

/// Largest algebraic eigenpair of a symmetric operator given as a matvec.
///
/// Thick-restarted Lanczos: the subspace grows by the orthogonalized
/// residual of the leading Ritz pair (which spans the same Krylov space as
/// plain Lanczos) and is compressed to its top `keep` Ritz vectors when it
/// reaches `basis` columns. Products `A V` are stored, so a restart costs no
/// extra matvecs.
pub fn lanczos_largest<F>(n: usize, apply: F, opts: LanczosOptions) -> Result<EigenPair>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let m = opts.basis.clamp(2, n.max(2));
    let keep = opts.keep.clamp(1, m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut next = DVector::from_fn(n, |_, _| rng.gen::<f64>() + 0.5);
    next.normalize_mut();

    let mut v: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut av: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut h = DMatrix::<f64>::zeros(0, 0);
    let mut matvecs = 0usize;

    loop {
        let w = apply(&next);
        matvecs += 1;
        let k = v.len();
        let mut grown = DMatrix::zeros(k + 1, k + 1);
        grown.view_mut((0, 0), (k, k)).copy_from(&h);
        for (i, vi) in v.iter().enumerate() {
            let c = vi.dot(&w);
            grown[(i, k)] = c;
            grown[(k, i)] = c;
        }
        grown[(k, k)] = next.dot(&w);
        h = grown;
        v.push(next.clone());
        av.push(w);

        let (vals, vecs) = sym_eigen(&h);
        let top = vals.len() - 1;
        let theta = vals[top];
        let s = vecs.column(top);
        let y = combine(&v, s.as_slice());
        let ay = combine(&av, s.as_slice());
        let r = &ay - &y * theta;
        let residual = r.norm();
        let scale = theta.abs().max(f64::MIN_POSITIVE);
        if residual <= opts.tol * scale || v.len() == n {
            return Ok(EigenPair {
                value: theta,
                vector: y,
                residual,
            });
        }
        if matvecs >= opts.max_matvecs {
            return Err(Error::NoConvergence {
                iterations: matvecs,
                residual,
            });
        }

        if v.len() == m {
            let idx: Vec<usize> = (0..keep).map(|j| top - j).collect();
            let nv: Vec<_> = idx
                .iter()
                .map(|&c| combine(&v, vecs.column(c).as_slice()))
                .collect();
            let nav: Vec<_> = idx
                .iter()
                .map(|&c| combine(&av, vecs.column(c).as_slice()))
                .collect();
            v = nv;
            av = nav;
            h = DMatrix::from_diagonal(&DVector::from_iterator(keep, idx.iter().map(|&c| vals[c])));
        }

        let mut t = r;
        for _ in 0..2 {
            for vi in &v {
                let c = t.dot(vi);
                t.axpy(-c, vi, 1.0);
            }
        }
        let norm = t.norm();
        if norm <= 1e-14 * residual.max(f64::MIN_POSITIVE) {
            // Invariant subspace: the Ritz pair is as good as it gets.
            return Ok(EigenPair {
                value: theta,
                vector: y,
                residual,
            });
        }
        next = t / norm;
    }
}

/// `Σ_k c_k b_k`.
fn combine(basis: &[DVector<f64>], coeffs: &[f64]) -> DVector<f64> {
    let mut y = DVector::zeros(basis[0].len());
    for (b, &c) in basis.iter().zip(coeffs) {
        y.axpy(c, b, 1.0);
    }
    y
}
