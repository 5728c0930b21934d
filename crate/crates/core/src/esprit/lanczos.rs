// SPDX-License-Identifier: Apache-2.0

//! Hermitian Lanczos iteration with full reorthogonalization, used to pull
//! the few largest-magnitude eigenpairs of a Toeplitz covariance through
//! FFT-based matrix-vector products.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A Hermitian linear operator `y = A x`.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosConfig {
    /// Upper bound on Krylov dimension (capped at the operator size).
    pub max_iter: usize,
    /// Relative residual `‖Ax − λx‖ / |λ_max|` at which a Ritz pair counts as converged.
    pub tol: f64,
    /// Iterations between convergence checks.
    pub check_every: usize,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol: 1e-10,
            check_every: 8,
        }
    }
}

/// Ritz approximations, sorted by decreasing `|λ|`.
#[derive(Debug, Clone)]
pub struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<Complex64>]) -> Option<Vec<Complex64>> {
    for _ in 0..4 {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        orthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Computes the `wanted` eigenpairs of largest magnitude, returning vectors
/// for the first `with_vectors` of them.
pub fn top_eigenpairs<A: HermitianOperator>(
    op: &A,
    wanted: usize,
    with_vectors: usize,
    cfg: &LanczosConfig,
) -> RitzPairs {
    let n = op.dim();
    let wanted = wanted.min(n);
    let with_vectors = with_vectors.min(wanted);
    let max_iter = cfg.max_iter.max(wanted).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_iter);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_iter);
    // betas[j] couples basis[j] and basis[j+1]; zero marks a restart.
    let mut betas: Vec<f64> = Vec::with_capacity(max_iter);
    let mut w = vec![Complex64::new(0.0, 0.0); n];

    let mut current = random_unit(n, &mut rng, &basis).expect("nonzero dimension");
    let mut last_check = 0usize;
    let mut scale = 0.0f64;
    let mut converged = false;
    let mut residual_beta;

    loop {
        op.apply(&current, &mut w);
        let alpha = dot(&current, &w).re;
        basis.push(current);
        alphas.push(alpha);
        orthogonalize(&mut w, &basis);
        let beta = norm(&w);
        residual_beta = beta;
        scale = scale.max(alpha.abs()).max(beta);
        let m = basis.len();

        let breakdown = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE);
        let at_limit = m >= max_iter;
        if breakdown || at_limit || m - last_check >= cfg.check_every {
            last_check = m;
            if m >= wanted {
                let (vals, order, resid) =
                    ritz(&alphas, &betas, if breakdown { 0.0 } else { beta });
                let top = vals[order[0]].abs().max(f64::MIN_POSITIVE);
                if order
                    .iter()
                    .take(wanted)
                    .all(|&i| resid[i] <= cfg.tol * top)
                {
                    converged = true;
                    break;
                }
            }
            if at_limit {
                break;
            }
        }
        if breakdown {
            match random_unit(n, &mut rng, &basis) {
                Some(v) => {
                    betas.push(0.0);
                    current = v;
                }
                None => {
                    converged = true;
                    break;
                }
            }
        } else {
            betas.push(beta);
            current = w.iter().map(|x| x / beta).collect();
        }
    }

    let (vals, order, _) = ritz_with_vectors(&alphas, &betas, residual_beta);
    let values: Vec<f64> = order.iter().take(wanted).map(|&i| vals.0[i]).collect();
    let vectors = order
        .iter()
        .take(with_vectors)
        .map(|&i| {
            let s = vals.1.column(i);
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            for (j, v) in basis.iter().enumerate() {
                let c = s[j];
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += vi * c;
                }
            }
            x
        })
        .collect();
    RitzPairs {
        values,
        vectors,
        iterations: basis.len(),
        converged,
    }
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

type Ritz = (Vec<f64>, Vec<usize>, Vec<f64>);

fn ritz(alphas: &[f64], betas: &[f64], beta_next: f64) -> Ritz {
    let ((vals, _), order, resid) = ritz_with_vectors(alphas, betas, beta_next);
    (vals, order, resid)
}

/// ((values, vectors), converged indices, residual bounds)
type TridiagRitz = ((Vec<f64>, DMatrix<f64>), Vec<usize>, Vec<f64>);

fn ritz_with_vectors(alphas: &[f64], betas: &[f64], beta_next: f64) -> TridiagRitz {
    let m = alphas.len();
    let eig = SymmetricEigen::new(tridiagonal(alphas, &betas[..m - 1]));
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let resid: Vec<f64> = (0..m)
        .map(|i| (beta_next * eig.eigenvectors[(m - 1, i)]).abs())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()).then(a.cmp(&b)));
    ((vals, eig.eigenvectors), order, resid)
}
