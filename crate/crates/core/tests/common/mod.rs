#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rootlab::model::{
    build_transfer_dense, embed_one, embed_two, identity2, k_minus, k_plus, kron, permutation, r_matrix, sigma_x,
    sigma_y, sigma_z,
};
use rootlab::ModelParams;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Frobenius norm of `a - b` relative to `max(1, |a|, |b|)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    let scale = a.norm().max(b.norm()).max(1.0);
    (a - b).norm() / scale
}

pub fn random_complex<R: Rng>(rng: &mut R, r: f64) -> Complex64 {
    c(rng.random_range(-r..r), rng.random_range(-r..r))
}

/// Random boundary fields, kept away from zero; every other draw also gets
/// random inhomogeneities.
pub fn random_params<R: Rng>(rng: &mut R, n: usize) -> ModelParams {
    let field = |rng: &mut R| {
        let x: f64 = rng.random_range(0.2..1.8);
        if rng.random_bool(0.5) {
            x
        } else {
            -x
        }
    };
    let p = field(rng);
    let q = field(rng);
    let xi = rng.random_range(-2.0..2.0);
    let params = ModelParams::new(n, 1.0, p, q, xi).unwrap();
    if rng.random_bool(0.5) {
        let thetas = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        params.with_thetas(thetas).unwrap()
    } else {
        params
    }
}

/// Transposition in the first factor of a two-site operator.
pub fn transpose_first(m: &CMat) -> CMat {
    CMat::from_fn(4, 4, |r, k| {
        let (a, j) = (r / 2, r % 2);
        let (b, l) = (k / 2, k % 2);
        m[(2 * b + j, 2 * a + l)]
    })
}

pub fn qybe_residual(u1: Complex64, u2: Complex64, u3: Complex64, eta: f64) -> f64 {
    let r = |u: Complex64, i: usize, j: usize| embed_two(&r_matrix(u, eta), i, j, 3);
    let lhs = r(u1 - u2, 0, 1) * r(u1 - u3, 0, 2) * r(u2 - u3, 1, 2);
    let rhs = r(u2 - u3, 1, 2) * r(u1 - u3, 0, 2) * r(u1 - u2, 0, 1);
    rel_diff(&lhs, &rhs)
}

/// R12(l-u) K1(l) R21(l+u) K2(u) = K2(u) R12(l+u) K1(l) R21(l-u).
pub fn reflection_residual(l: Complex64, u: Complex64, params: &ModelParams) -> f64 {
    let eta = params.eta;
    let r12 = |x: Complex64| embed_two(&r_matrix(x, eta), 0, 1, 2);
    let r21 = |x: Complex64| embed_two(&r_matrix(x, eta), 1, 0, 2);
    let k1 = embed_one(&k_minus(l, params), 0, 2);
    let k2 = embed_one(&k_minus(u, params), 1, 2);
    let lhs = r12(l - u) * &k1 * r21(l + u) * &k2;
    let rhs = &k2 * r12(l + u) * &k1 * r21(l - u);
    rel_diff(&lhs, &rhs)
}

/// R12(u-l) K1+(l) R21(-l-u-2eta) K2+(u) = K2+(u) R12(-l-u-2eta) K1+(l) R21(u-l).
pub fn dual_reflection_residual(l: Complex64, u: Complex64, params: &ModelParams) -> f64 {
    let eta = params.eta;
    let r12 = |x: Complex64| embed_two(&r_matrix(x, eta), 0, 1, 2);
    let r21 = |x: Complex64| embed_two(&r_matrix(x, eta), 1, 0, 2);
    let k1 = embed_one(&k_plus(l, params), 0, 2);
    let k2 = embed_one(&k_plus(u, params), 1, 2);
    let s = -l - u - 2.0 * eta;
    let lhs = r12(u - l) * &k1 * r21(s) * &k2;
    let rhs = &k2 * r12(s) * &k1 * r21(u - l);
    rel_diff(&lhs, &rhs)
}

/// Residuals of initial condition, unitarity, crossing, PT symmetry,
/// Z2 symmetry and fusion, in that order.
pub fn r_property_residuals(u: Complex64, eta: f64) -> [f64; 6] {
    let e = c(eta, 0.0);
    let p = permutation();
    let id4 = CMat::identity(4, 4);
    let r = r_matrix(u, eta);

    let initial = rel_diff(&r_matrix(c(0.0, 0.0), eta), &(&p * e));

    let r21m = &p * r_matrix(-u, eta) * &p;
    let phi = e * e - u * u;
    let unitarity = rel_diff(&(&r * r21m), &(&id4 * phi));

    let sy0 = kron(&sigma_y(), &identity2());
    let crossed = -(&sy0 * transpose_first(&r_matrix(-u - e, eta)) * &sy0);
    let crossing = rel_diff(&r, &crossed);

    let r21 = &p * &r * &p;
    let pt = rel_diff(&r, &r21).max(rel_diff(&r, &r.transpose()));

    let z2 = [sigma_x(), sigma_y(), sigma_z()]
        .iter()
        .map(|s| {
            let ss = kron(s, s);
            rel_diff(&(&ss * &r), &(&r * &ss))
        })
        .fold(0.0, f64::max);

    let plus = (&id4 + &p) * c(0.5, 0.0);
    let minus = (&id4 - &p) * c(0.5, 0.0);
    let fusion = rel_diff(&r_matrix(e, eta), &(plus * (e * 2.0)))
        .max(rel_diff(&r_matrix(-e, eta), &(minus * (-e * 2.0))));

    [initial, unitarity, crossing, pt, z2, fusion]
}

/// t(u) as an explicit product on the auxiliary space (site 0) and the
/// chain (sites 1..=N), traced over the auxiliary space.
pub fn reference_transfer(params: &ModelParams, u: Complex64) -> CMat {
    let n = params.n;
    let eta = params.eta;
    let m = n + 1;
    let r0 = |x: Complex64, j: usize| embed_two(&r_matrix(x, eta), 0, j, m);
    let r_0 = |x: Complex64, j: usize| embed_two(&r_matrix(x, eta), j, 0, m);
    let mut t = embed_one(&k_plus(u, params), 0, m);
    for j in (1..=n).rev() {
        t = t * r0(u - params.theta(j), j);
    }
    t = t * embed_one(&k_minus(u, params), 0, m);
    for j in 1..=n {
        t = t * r_0(u + params.theta(j), j);
    }
    let dim = 1usize << n;
    t.view((0, 0), (dim, dim)) + t.view((dim, dim), (dim, dim))
}

pub fn crossing_residual(params: &ModelParams, u: Complex64) -> f64 {
    let a = build_transfer_dense(params, u).unwrap();
    let b = build_transfer_dense(params, -u - params.eta).unwrap();
    rel_diff(&a, &b)
}

pub fn commutator_residual(params: &ModelParams, u: Complex64, v: Complex64) -> f64 {
    let a = build_transfer_dense(params, u).unwrap();
    let b = build_transfer_dense(params, v).unwrap();
    rel_diff(&(&a * &b), &(&b * &a))
}

/// Largest distance in a greedy nearest-neighbour matching of two point sets
/// of equal size.
pub fn match_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for z in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}
