//! Integrability data of the open XXX chain: R- and K-matrices, the scalar
//! functions a(u) and d(u), the Hamiltonian, and the transfer matrix in both
//! dense (oracle) and MPO form.
//!
//! Basis conventions: site 1 is the most significant bit of a basis index and
//! `|0>` is spin up (`sigma^z = +1`). MPO site tensors are indexed
//! `W[wl, wr, s_out, s_in]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::ComplexPoint;
use crate::tensor::Tensor;

/// Largest N for which dense 2^N x 2^N operators are built.
pub const DENSE_CAP: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("N = {n} exceeds the dense cap {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("boundary parameter {0} is zero")]
    DivisionByZero(&'static str),

    #[error("a(u) has a pole at u = {0}")]
    PoleAt(ComplexPoint),

    #[error("invalid parameters: {0}")]
    Invalid(String),
}

pub type ModelResult<T> = Result<T, ModelError>;

/// Physical parameters of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub eta: f64,
    pub p: f64,
    pub q: f64,
    pub xi: f64,
    #[serde(default)]
    pub thetas: Vec<f64>,
}

impl ModelParams {
    pub fn new(n: usize, eta: f64, p: f64, q: f64, xi: f64) -> ModelResult<Self> {
        let params = ModelParams {
            n,
            eta,
            p,
            q,
            xi,
            thetas: Vec::new(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn homogeneous(n: usize, p: f64, q: f64, xi: f64) -> ModelResult<Self> {
        Self::new(n, 1.0, p, q, xi)
    }

    pub fn with_thetas(mut self, thetas: Vec<f64>) -> ModelResult<Self> {
        self.thetas = thetas;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> ModelResult<()> {
        if self.n < 2 {
            return Err(ModelError::Invalid(format!("N = {} < 2", self.n)));
        }
        for (name, v) in [("eta", self.eta), ("p", self.p), ("q", self.q), ("xi", self.xi)] {
            if !v.is_finite() {
                return Err(ModelError::Invalid(format!("{name} is not finite")));
            }
        }
        if self.eta == 0.0 {
            return Err(ModelError::Invalid("eta = 0".into()));
        }
        if !self.thetas.is_empty() && self.thetas.len() != self.n {
            return Err(ModelError::Invalid(format!(
                "{} inhomogeneities for N = {}",
                self.thetas.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Inhomogeneity of site `j` (1-based).
    pub fn theta(&self, j: usize) -> f64 {
        self.thetas.get(j - 1).copied().unwrap_or(0.0)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.thetas.iter().all(|&t| t == 0.0)
    }

    /// `sqrt(1 + xi^2)`.
    pub fn s(&self) -> f64 {
        (1.0 + self.xi * self.xi).sqrt()
    }

    pub fn q_bar(&self) -> f64 {
        self.q / self.s()
    }

    pub fn p_hat(&self) -> f64 {
        self.p - self.eta / 2.0
    }

    pub fn q_hat(&self) -> f64 {
        self.q - self.eta / 2.0
    }

    pub fn require_fields(&self) -> ModelResult<()> {
        if self.p == 0.0 {
            return Err(ModelError::DivisionByZero("p"));
        }
        if self.q == 0.0 {
            return Err(ModelError::DivisionByZero("q"));
        }
        Ok(())
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity2() -> DMatrix<Complex64> {
    DMatrix::identity(2, 2)
}

pub fn sigma_x() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn sigma_y() -> DMatrix<Complex64> {
    let i = Complex64::i();
    DMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
}

pub fn sigma_z() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// Two-site permutation operator.
pub fn permutation() -> DMatrix<Complex64> {
    let mut p = DMatrix::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            p[(2 * a + b, 2 * b + a)] = c(1.0);
        }
    }
    p
}

pub fn r_matrix(u: ComplexPoint, eta: f64) -> DMatrix<Complex64> {
    let e = c(eta);
    let z = c(0.0);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            u + e, z, z, z, //
            z, u, e, z, //
            z, e, u, z, //
            z, z, z, u + e,
        ],
    )
}

/// The 2x2 quantum-space block `R^{ab}` of `R_{0j}(u)` for auxiliary indices
/// `a` (row) and `b` (column).
pub fn r_block(u: ComplexPoint, eta: f64, a: usize, b: usize) -> [[Complex64; 2]; 2] {
    let e = c(eta);
    let z = c(0.0);
    match (a, b) {
        (0, 0) => [[u + e, z], [z, u]],
        (0, 1) => [[z, z], [e, z]],
        (1, 0) => [[z, e], [z, z]],
        _ => [[u, z], [z, u + e]],
    }
}

pub fn k_minus(u: ComplexPoint, params: &ModelParams) -> DMatrix<Complex64> {
    let p = c(params.p);
    DMatrix::from_row_slice(2, 2, &[p + u, c(0.0), c(0.0), p - u])
}

pub fn k_plus(u: ComplexPoint, params: &ModelParams) -> DMatrix<Complex64> {
    let q = c(params.q);
    let e = c(params.eta);
    let off = (u + e) * params.xi;
    DMatrix::from_row_slice(2, 2, &[q + u + e, off, off, q - u - e])
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == c(0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Embeds a single-site operator at `site` (0-based) of an `n`-site space.
pub fn embed_one(op: &DMatrix<Complex64>, site: usize, n: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::identity(1, 1);
    for k in 0..n {
        out = if k == site {
            kron(&out, op)
        } else {
            kron(&out, &identity2())
        };
    }
    out
}

/// Embeds a two-site operator acting on spaces `i` and `j` (0-based, any
/// order; the operator's first factor acts on `i`).
pub fn embed_two(op: &DMatrix<Complex64>, i: usize, j: usize, n: usize) -> DMatrix<Complex64> {
    assert!(i != j && i < n && j < n);
    let dim = 1usize << n;
    let bi = n - 1 - i;
    let bj = n - 1 - j;
    let mut out = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let si = (col >> bi) & 1;
        let sj = (col >> bj) & 1;
        let rest = col & !(1 << bi) & !(1 << bj);
        for ti in 0..2 {
            for tj in 0..2 {
                let v = op[(2 * ti + tj, 2 * si + sj)];
                if v != c(0.0) {
                    let row = rest | (ti << bi) | (tj << bj);
                    out[(row, col)] += v;
                }
            }
        }
    }
    out
}

/// `a(u)`; `d(u)` is always obtained from it by reflection.
pub fn scalar_a(u: ComplexPoint, params: &ModelParams) -> ModelResult<ComplexPoint> {
    let eta = params.eta;
    if (2.0 * u + eta).norm() < 2e-12 {
        return Err(ModelError::PoleAt(u));
    }
    let mut prod = (2.0 * u + 2.0 * eta) / (2.0 * u + eta) * (u + params.p) * (params.s() * u + params.q);
    for j in 1..=params.n {
        let t = params.theta(j);
        prod *= (u + t + eta) * (u - t + eta);
    }
    Ok(prod)
}

pub fn scalar_d(u: ComplexPoint, params: &ModelParams) -> ModelResult<ComplexPoint> {
    scalar_a(-u - params.eta, params)
}

pub fn phi(u: ComplexPoint, eta: f64) -> ComplexPoint {
    c(eta * eta) - u * u
}

/// Closures bundling `a`, `d` and `phi` for one parameter set.
pub struct ScalarFunctions<'a> {
    params: &'a ModelParams,
}

impl<'a> ScalarFunctions<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        ScalarFunctions { params }
    }

    pub fn a(&self, u: ComplexPoint) -> ModelResult<ComplexPoint> {
        scalar_a(u, self.params)
    }

    pub fn d(&self, u: ComplexPoint) -> ModelResult<ComplexPoint> {
        scalar_d(u, self.params)
    }

    pub fn phi(&self, u: ComplexPoint) -> ComplexPoint {
        phi(u, self.params.eta)
    }
}

fn check_dense(params: &ModelParams) -> ModelResult<()> {
    if params.n > DENSE_CAP {
        return Err(ModelError::SizeCap {
            n: params.n,
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

/// Boundary-field coefficients `(eta/p, eta/q, xi * eta/q)`.
fn field_terms(params: &ModelParams) -> ModelResult<(f64, f64, f64)> {
    params.require_fields()?;
    let hz1 = params.eta / params.p;
    let hzn = params.eta / params.q;
    Ok((hz1, hzn, hzn * params.xi))
}

/// Dense Hamiltonian as a real symmetric matrix.
pub fn build_hamiltonian(params: &ModelParams) -> ModelResult<DMatrix<f64>> {
    check_dense(params)?;
    let dim = 1usize << params.n;
    let mut h = DMatrix::zeros(dim, dim);
    let mut col = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    for k in 0..dim {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[k] = 1.0;
        apply_hamiltonian(params, &col, &mut out)?;
        for (r, &v) in out.iter().enumerate() {
            h[(r, k)] = v;
        }
    }
    Ok(h)
}

/// Complex dense Hamiltonian built from Pauli tensor products; oracle for
/// [`build_hamiltonian`].
pub fn build_hamiltonian_pauli(params: &ModelParams) -> ModelResult<DMatrix<Complex64>> {
    check_dense(params)?;
    let (hz1, hzn, hxn) = field_terms(params)?;
    let n = params.n;
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for s in [sigma_x(), sigma_y(), sigma_z()] {
        let ss = kron(&s, &s);
        for j in 0..n - 1 {
            h += embed_two(&ss, j, j + 1, n);
        }
    }
    h += embed_one(&sigma_z(), 0, n) * c(hz1);
    h += embed_one(&sigma_z(), n - 1, n) * c(hzn);
    h += embed_one(&sigma_x(), n - 1, n) * c(hxn);
    Ok(h)
}

/// Matrix-free `out = H v` for real vectors of length 2^N.
pub fn apply_hamiltonian(params: &ModelParams, v: &[f64], out: &mut [f64]) -> ModelResult<()> {
    let (hz1, hzn, hxn) = field_terms(params)?;
    let n = params.n;
    let dim = 1usize << n;
    assert_eq!(v.len(), dim);
    assert_eq!(out.len(), dim);
    let b1 = n - 1;
    for (k, o) in out.iter_mut().enumerate() {
        let mut diag = 0.0;
        for j in 0..n - 1 {
            let a = (k >> (n - 1 - j)) & 1;
            let b = (k >> (n - 2 - j)) & 1;
            diag += if a == b { 1.0 } else { -1.0 };
        }
        let z1 = if (k >> b1) & 1 == 0 { 1.0 } else { -1.0 };
        let zn = if k & 1 == 0 { 1.0 } else { -1.0 };
        diag += hz1 * z1 + hzn * zn;
        *o = diag * v[k] + hxn * v[k ^ 1];
    }
    // XX + YY flips antiparallel neighbours with amplitude 2
    for k in 0..dim {
        if v[k] == 0.0 {
            continue;
        }
        for j in 0..n - 1 {
            let ma = 1usize << (n - 1 - j);
            let mb = 1usize << (n - 2 - j);
            if ((k & ma) != 0) != ((k & mb) != 0) {
                out[k ^ ma ^ mb] += 2.0 * v[k];
            }
        }
    }
    Ok(())
}

/// Applies `R_{0j}(u)` in place to a vector over auxiliary (most significant
/// bit) plus `n` quantum sites; `site` is 1-based.
fn apply_r0j(vec: &mut [Complex64], u: ComplexPoint, eta: f64, site: usize, n: usize) {
    let aux = 1usize << n;
    let bit = 1usize << (n - site);
    let e = c(eta);
    for k in 0..vec.len() {
        if k & aux != 0 || k & bit != 0 {
            continue;
        }
        // (a, s) = (0,0), (0,1), (1,0), (1,1)
        let i00 = k;
        let i01 = k | bit;
        let i10 = k | aux;
        let i11 = k | aux | bit;
        let (v00, v01, v10, v11) = (vec[i00], vec[i01], vec[i10], vec[i11]);
        vec[i00] = (u + e) * v00;
        vec[i01] = u * v01 + e * v10;
        vec[i10] = e * v01 + u * v10;
        vec[i11] = (u + e) * v11;
    }
}

fn apply_aux(vec: &mut [Complex64], k: &DMatrix<Complex64>, n: usize) {
    let dim = 1usize << n;
    let (lo, hi) = vec.split_at_mut(dim);
    for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = k[(0, 0)] * a + k[(0, 1)] * b;
        *y = k[(1, 0)] * a + k[(1, 1)] * b;
    }
}

/// Matrix-free `t(u) v` by explicit contraction over the auxiliary space.
pub fn apply_transfer(params: &ModelParams, u: ComplexPoint, v: &[Complex64]) -> Vec<Complex64> {
    let n = params.n;
    let dim = 1usize << n;
    assert_eq!(v.len(), dim);
    let eta = params.eta;
    let km = k_minus(u, params);
    let kp = k_plus(u, params);
    let mut out = vec![c(0.0); dim];
    let mut work = vec![c(0.0); 2 * dim];
    for y in 0..2 {
        work.iter_mut().for_each(|x| *x = c(0.0));
        work[y * dim..(y + 1) * dim].copy_from_slice(v);
        // T-hat = R_{10}(u+th_1) ... R_{N0}(u+th_N): rightmost first
        for j in (1..=n).rev() {
            apply_r0j(&mut work, u + params.theta(j), eta, j, n);
        }
        apply_aux(&mut work, &km, n);
        // T = R_{0N}(u-th_N) ... R_{01}(u-th_1): rightmost first
        for j in 1..=n {
            apply_r0j(&mut work, u - params.theta(j), eta, j, n);
        }
        apply_aux(&mut work, &kp, n);
        for (o, w) in out.iter_mut().zip(&work[y * dim..(y + 1) * dim]) {
            *o += w;
        }
    }
    out
}

/// Dense transfer matrix, column by column from [`apply_transfer`].
pub fn build_transfer_dense(params: &ModelParams, u: ComplexPoint) -> ModelResult<DMatrix<Complex64>> {
    check_dense(params)?;
    let dim = 1usize << params.n;
    let mut t = DMatrix::zeros(dim, dim);
    let mut e = vec![c(0.0); dim];
    for k in 0..dim {
        e[k] = c(1.0);
        let col = apply_transfer(params, u, &e);
        e[k] = c(0.0);
        for (r, v) in col.into_iter().enumerate() {
            t[(r, k)] = v;
        }
    }
    Ok(t)
}

/// Transfer matrix `t(u)` as a matrix product operator.
///
/// The bond between sites `j` and `j+1` carries the pair `(x, y)` of
/// auxiliary indices of the upper (`T`) and lower (`T-hat`) rows, flattened as
/// `2x + y`. Site `j` holds `R^{x_j x_{j-1}}(u - th_j) R^{y_{j-1} y_j}(u + th_j)`;
/// `K^-` closes the left end and `K^+` the right end.
#[derive(Clone, Debug)]
pub struct TransferMpo {
    /// `W[wl, wr, s_out, s_in]`; the first has `wl = 1`, the last `wr = 1`.
    pub site_tensors: Vec<Tensor<Complex64>>,
    pub spectral_point: ComplexPoint,
}

impl TransferMpo {
    pub fn len(&self) -> usize {
        self.site_tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_tensors.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.site_tensors.iter().skip(1).map(|w| w.shape()[0]).collect()
    }

    /// Contracts the whole MPO to a dense matrix (small N only).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        mpo_to_dense(&self.site_tensors)
    }
}

fn bulk_tensor(u: ComplexPoint, params: &ModelParams, j: usize) -> Tensor<Complex64> {
    let eta = params.eta;
    let t = params.theta(j);
    let mut w = Tensor::zeros(vec![4, 4, 2, 2]);
    for xl in 0..2 {
        for yl in 0..2 {
            for xr in 0..2 {
                for yr in 0..2 {
                    let up = r_block(u - t, eta, xr, xl);
                    let dn = r_block(u + t, eta, yl, yr);
                    for so in 0..2 {
                        for si in 0..2 {
                            let v = up[so][0] * dn[0][si] + up[so][1] * dn[1][si];
                            *w.get_mut(&[2 * xl + yl, 2 * xr + yr, so, si]) = v;
                        }
                    }
                }
            }
        }
    }
    w
}

pub fn build_transfer_mpo(params: &ModelParams, u: ComplexPoint) -> TransferMpo {
    let n = params.n;
    let km = k_minus(u, params);
    let kp = k_plus(u, params);
    let mut sites: Vec<Tensor<Complex64>> = (1..=n).map(|j| bulk_tensor(u, params, j)).collect();

    // left edge: contract with K^-_{x0 y0}
    let w1 = &sites[0];
    let mut first = Tensor::zeros(vec![1, 4, 2, 2]);
    for x0 in 0..2 {
        for y0 in 0..2 {
            let k = km[(x0, y0)];
            if k == c(0.0) {
                continue;
            }
            for wr in 0..4 {
                for so in 0..2 {
                    for si in 0..2 {
                        *first.get_mut(&[0, wr, so, si]) += k * w1.get(&[2 * x0 + y0, wr, so, si]);
                    }
                }
            }
        }
    }
    sites[0] = first;

    // right edge: trace with K^+_{y_N x_N}
    let wn = &sites[n - 1];
    let mut last = Tensor::zeros(vec![wn.shape()[0], 1, 2, 2]);
    for wl in 0..wn.shape()[0] {
        for xn in 0..2 {
            for yn in 0..2 {
                let k = kp[(yn, xn)];
                for so in 0..2 {
                    for si in 0..2 {
                        *last.get_mut(&[wl, 0, so, si]) += k * wn.get(&[wl, 2 * xn + yn, so, si]);
                    }
                }
            }
        }
    }
    sites[n - 1] = last;

    TransferMpo {
        site_tensors: sites,
        spectral_point: u,
    }
}

/// Contracts a chain of `W[wl, wr, s_out, s_in]` tensors to a dense operator.
pub fn mpo_to_dense<T>(sites: &[Tensor<T>]) -> DMatrix<T>
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    // acc[(out, in), w] with out/in multi-indices over the sites seen so far
    let mut dim = 1usize;
    let w0 = sites[0].shape()[0];
    assert_eq!(w0, 1);
    let mut acc: Vec<T> = vec![T::one()];
    let mut wdim = 1usize;
    for w in sites {
        let sh = w.shape();
        let (wl, wr, d) = (sh[0], sh[1], sh[2]);
        assert_eq!(wl, wdim);
        let nd = dim * d;
        let mut next = vec![T::zero(); nd * nd * wr];
        for o in 0..dim {
            for i in 0..dim {
                for a in 0..wl {
                    let x = acc[(o * dim + i) * wl + a];
                    if x == T::zero() {
                        continue;
                    }
                    for b in 0..wr {
                        for so in 0..d {
                            for si in 0..d {
                                let v = w.get(&[a, b, so, si]);
                                let oo = o * d + so;
                                let ii = i * d + si;
                                next[(oo * nd + ii) * wr + b] += x * v;
                            }
                        }
                    }
                }
            }
        }
        acc = next;
        dim = nd;
        wdim = wr;
    }
    assert_eq!(wdim, 1);
    DMatrix::from_fn(dim, dim, |r, k| acc[r * dim + k])
}

/// `eta * d ln Lambda / du |_{u=0} - N` by central differences of `Lambda`.
pub fn energy_from_transfer<F>(lambda: F, params: &ModelParams, h: f64) -> ComplexPoint
where
    F: Fn(ComplexPoint) -> ComplexPoint,
{
    let l0 = lambda(c(0.0));
    let dl = (lambda(c(h)) - lambda(c(-h))) / (2.0 * h);
    params.eta * dl / l0 - params.n as f64
}

/// Expectation `<v|t(u)|v> / <v|v>` for a real vector.
pub fn transfer_expectation(params: &ModelParams, u: ComplexPoint, v: &DVector<f64>) -> ComplexPoint {
    let vc: Vec<Complex64> = v.iter().map(|&x| c(x)).collect();
    let tv = apply_transfer(params, u, &vc);
    let num: Complex64 = vc.iter().zip(&tv).map(|(a, b)| a * b).sum();
    num / v.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(n, 1.0, 0.7, 0.6, 1.2).unwrap()
    }

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn r_initial_condition() {
        let d = r_matrix(c(0.0), 1.3) - permutation() * c(1.3);
        assert!(max_abs(&d) < 1e-15);
    }

    #[test]
    fn r_unitarity() {
        let u = Complex64::new(0.0, 0.7);
        let d = r_matrix(u, 1.0) * r_matrix(-u, 1.0) - DMatrix::identity(4, 4) * phi(u, 1.0);
        assert!(max_abs(&d) < 1e-13);
    }

    #[test]
    fn r_fusion_projector() {
        let p_plus = (DMatrix::identity(4, 4) + permutation()) * c(0.5);
        let d = r_matrix(c(1.0), 1.0) - p_plus * c(2.0);
        assert!(max_abs(&d) < 1e-15);
    }

    #[test]
    fn k_matrices_read_off() {
        let pr = params(4);
        assert!(max_abs(&(k_minus(c(0.0), &pr) - identity2() * c(0.7))) < 1e-15);
        let flat = ModelParams::new(4, 1.0, 0.7, 0.6, 0.0).unwrap();
        let k = k_plus(Complex64::new(0.3, 0.2), &flat);
        assert_eq!(k[(0, 1)], c(0.0));
        assert_eq!(k[(1, 0)], c(0.0));
    }

    #[test]
    fn scalar_a_at_origin() {
        let pr = ModelParams::new(5, 1.0, 0.7, 0.6, 0.0).unwrap();
        assert!((scalar_a(c(0.0), &pr).unwrap() - c(2.0 * 0.7 * 0.6)).norm() < 1e-14);
        let pr = ModelParams::new(5, 1.7, 0.7, 0.6, 0.4).unwrap();
        let want = 2.0 * 0.7 * 0.6 * 1.7f64.powi(10);
        assert!((scalar_a(c(0.0), &pr).unwrap() - c(want)).norm() < 1e-12 * want);
        assert!(matches!(scalar_a(c(-0.85), &pr), Err(ModelError::PoleAt(_))));
    }

    #[test]
    fn scalar_d_is_reflected_a() {
        let pr = params(3);
        let u = Complex64::new(0.4, -0.3);
        assert_eq!(scalar_d(u, &pr).unwrap(), scalar_a(-u - 1.0, &pr).unwrap());
    }

    #[test]
    fn two_site_hamiltonian_by_hand() {
        // sum sigma.sigma on two sites: diag(1,-1,-1,1) + 2 on the flip block
        let pr = ModelParams::new(2, 1.0, 1.0, 1.0, 0.0).unwrap();
        let h = build_hamiltonian(&pr).unwrap();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[
                3.0, 0.0, 0.0, 0.0, //
                0.0, -1.0 + 1.0 - 1.0, 2.0, 0.0, //
                0.0, 2.0, -1.0 - 1.0 + 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0 - 1.0 - 1.0,
            ],
        );
        assert!((h - want).abs().max() < 1e-15);
    }

    #[test]
    fn matrix_free_hamiltonian_matches_pauli_sum() {
        let pr = params(5);
        let h = build_hamiltonian(&pr).unwrap();
        let hp = build_hamiltonian_pauli(&pr).unwrap();
        let d = hp - h.map(c);
        assert!(max_abs(&d) < 1e-13);
    }

    #[test]
    fn hamiltonian_traceless_and_symmetric() {
        let pr = params(4);
        let h = build_hamiltonian(&pr).unwrap();
        assert!(h.trace().abs() < 1e-12);
        assert!((&h - h.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn size_cap_and_zero_fields() {
        let pr = ModelParams::new(DENSE_CAP + 1, 1.0, 0.7, 0.6, 0.0).unwrap();
        assert!(matches!(build_hamiltonian(&pr), Err(ModelError::SizeCap { .. })));
        let pr = ModelParams::new(3, 1.0, 0.0, 0.6, 0.0).unwrap();
        assert!(matches!(build_hamiltonian(&pr), Err(ModelError::DivisionByZero("p"))));
    }

    #[test]
    fn transfer_at_zero_is_scalar() {
        let pr = params(4);
        let t = build_transfer_dense(&pr, c(0.0)).unwrap();
        let a0 = scalar_a(c(0.0), &pr).unwrap();
        let d = t - DMatrix::identity(16, 16) * a0;
        assert!(max_abs(&d) < 1e-12 * a0.norm());
    }

    #[test]
    fn mpo_interior_bond_is_four() {
        let mpo = build_transfer_mpo(&params(5), Complex64::new(0.2, 0.1));
        assert_eq!(mpo.bond_dims(), vec![4, 4, 4, 4]);
    }

    #[test]
    fn mpo_matches_dense_n3() {
        let pr = params(3);
        for u in [Complex64::new(0.3, 0.2), Complex64::new(-1.1, 0.7), Complex64::new(2.0, -0.4)] {
            let dense = build_transfer_dense(&pr, u).unwrap();
            let mpo = build_transfer_mpo(&pr, u).to_dense();
            assert!(max_abs(&(dense.clone() - mpo)) <= 1e-12 * max_abs(&dense));
        }
    }

    #[test]
    fn inhomogeneous_mpo_matches_dense() {
        let pr = params(3).with_thetas(vec![0.1, -0.3, 0.25]).unwrap();
        let u = Complex64::new(0.3, 0.2);
        let dense = build_transfer_dense(&pr, u).unwrap();
        let mpo = build_transfer_mpo(&pr, u).to_dense();
        assert!(max_abs(&(dense.clone() - mpo)) <= 1e-12 * max_abs(&dense));
    }
}
