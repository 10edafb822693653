//! Lanczos eigensolver for real symmetric operators given as closures.

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Largest Krylov basis before a restart.
    pub krylov_dim: usize,
    /// Cap on operator applications.
    pub max_matvecs: usize,
    /// Stop once `||H v - theta v|| <= tol * max(1, |theta|)`.
    pub tol: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            krylov_dim: 60,
            max_matvecs: 100,
            tol: 1e-14,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub matvecs: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    // twice is enough
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
}

/// Lowest eigenpair of the operator restricted to the orthogonal complement
/// of `deflate` (orthonormal vectors), started from `v0`.
pub fn lanczos_lowest<F>(mut apply: F, v0: &[f64], deflate: &[Vec<f64>], opts: LanczosOptions) -> LanczosResult
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = v0.len();
    let mut start = v0.to_vec();
    project_out(&mut start, deflate);
    if normalize(&mut start) < 1e-300 {
        // fall back to a deterministic vector
        start.iter_mut().enumerate().for_each(|(k, x)| *x = 1.0 + (k as f64 * 0.37).sin());
        project_out(&mut start, deflate);
        normalize(&mut start);
    }
    let kmax = opts.krylov_dim.max(2).min(dim.saturating_sub(deflate.len()).max(1));
    let mut matvecs = 0;
    let mut w = vec![0.0; dim];
    loop {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let exhausted;
        loop {
            let v = basis.last().unwrap();
            apply(v, &mut w);
            matvecs += 1;
            project_out(&mut w, deflate);
            let a = dot(&w, v);
            alpha.push(a);
            // full reorthogonalisation against the Krylov basis
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    axpy(-c, b, &mut w);
                }
            }
            let nb = dot(&w, &w).sqrt();
            let k = alpha.len();
            if nb < 1e-14 * a.abs().max(1.0) || k >= kmax || matvecs >= opts.max_matvecs {
                exhausted = nb < 1e-14 * a.abs().max(1.0) || k >= dim - deflate.len();
                beta.push(nb);
                break;
            }
            beta.push(nb);
            let mut next = w.clone();
            next.iter_mut().for_each(|x| *x /= nb);
            basis.push(next);
        }
        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let s = eig.eigenvectors.column(imin);
        let mut x = vec![0.0; dim];
        for (i, b) in basis.iter().enumerate() {
            axpy(s[i], b, &mut x);
        }
        project_out(&mut x, deflate);
        normalize(&mut x);
        // true residual
        apply(&x, &mut w);
        matvecs += 1;
        project_out(&mut w, deflate);
        let rq = dot(&x, &w);
        axpy(-rq, &x, &mut w);
        let residual = dot(&w, &w).sqrt();
        let converged = exhausted || residual <= opts.tol * rq.abs().max(1.0);
        if converged || matvecs >= opts.max_matvecs {
            return LanczosResult {
                value: rq,
                vector: x,
                residual,
                matvecs,
                converged,
            };
        }
        start = x;
    }
}
