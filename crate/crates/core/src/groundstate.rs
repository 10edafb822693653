//! Ground-state solvers: dense or Lanczos exact diagonalisation for small
//! chains and two-site DMRG over matrix product states for large ones, plus
//! MPS/MPO expectation values and a binary MPS checkpoint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{lanczos_lowest, LanczosOptions};
use crate::model::{apply_hamiltonian, build_hamiltonian, ModelError, ModelParams, TransferMpo};
use crate::tensor::Tensor;

/// Gap below which a ground state is reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Gap below which a DMRG run flags a possible degeneracy.
pub const DMRG_GAP_FLAG: f64 = 1e-8;
/// Largest Hilbert-space dimension handled by full dense diagonalisation.
pub const DENSE_DIAG_MAX_DIM: usize = 1 << 10;

#[derive(Debug, Error)]
pub enum GroundStateError {
    #[error("operator is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("DMRG needs N >= 4, got {0}")]
    TooShort(usize),

    #[error("invalid DMRG options: {0}")]
    InvalidOptions(String),

    #[error("DMRG did not converge in {} sweeps (last dE = {:e})", .0.sweep_energies.len(), .0.last_delta())]
    NoConvergence(Box<DmrgResult>),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

pub type GroundStateResult<T> = Result<T, GroundStateError>;

/// Matrix product state with site tensors `A[left, physical, right]`.
#[derive(Clone, Debug)]
pub struct Mps {
    pub tensors: Vec<Tensor<f64>>,
    pub center: usize,
    pub max_bond: usize,
    pub discarded_weight_log: Vec<f64>,
}

impl Mps {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors.iter().skip(1).map(|a| a.shape()[0]).collect()
    }

    /// Random product state from a seeded generator; every site tensor has
    /// unit norm, so the state is canonical about any site.
    pub fn random_product(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let norm = (a * a + b * b).sqrt().max(1e-3);
                Tensor::from_data(vec![1, 2, 1], vec![a / norm, b / norm])
            })
            .collect();
        Mps {
            tensors,
            center: 0,
            max_bond: 1,
            discarded_weight_log: Vec::new(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        overlap(self, self)
    }

    /// Dense state vector (small N only).
    pub fn to_dense(&self) -> DVector<f64> {
        let mut acc = Tensor::from_data(vec![1, 1], vec![1.0]);
        for a in &self.tensors {
            let rows = acc.shape()[0];
            acc = acc.tensordot(a, &[1], &[0]);
            let r = acc.shape()[2];
            acc = acc.reshape(vec![rows * 2, r]);
        }
        DVector::from_vec(acc.into_data())
    }

    /// Largest deviation from the isometry conditions implied by `center`.
    pub fn isometry_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.tensors.iter().enumerate() {
            let sh = a.shape();
            if j < self.center {
                let m = a.to_matrix(sh[0] * sh[1]);
                let g = m.transpose() * &m;
                worst = worst.max((g - DMatrix::identity(sh[2], sh[2])).abs().max());
            } else if j > self.center {
                let m = a.to_matrix(sh[0]);
                let g = &m * m.transpose();
                worst = worst.max((g - DMatrix::identity(sh[0], sh[0])).abs().max());
            }
        }
        worst
    }

    pub fn to_complex(&self) -> Vec<Tensor<Complex64>> {
        self.tensors.iter().map(|a| a.map(|x| Complex64::new(x, 0.0))).collect()
    }
}

/// `<a|b>` for real MPS of equal length.
pub fn overlap(a: &Mps, b: &Mps) -> f64 {
    let mut env = Tensor::from_data(vec![1, 1], vec![1.0]);
    for (x, y) in a.tensors.iter().zip(&b.tensors) {
        // env[l, l'] x[l, s, r] y[l', s, r']
        let t = env.tensordot(y, &[1], &[0]); // [l, s, r']
        env = x.tensordot(&t, &[0, 1], &[0, 1]); // [r, r']
    }
    env.get(&[0, 0])
}

/// Hamiltonian as a real MPO with interior bond dimension 5.
#[derive(Clone, Debug)]
pub struct HamiltonianMpo {
    /// `W[wl, wr, s_out, s_in]`
    pub tensors: Vec<Tensor<f64>>,
}

impl HamiltonianMpo {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        crate::model::mpo_to_dense(&self.tensors)
    }
}

/// Lower-triangular transition form. Channel 4 is "nothing placed yet",
/// channel 0 is "done"; channels 1..3 carry `X`, `iY` and `Z`. The
/// `sigma^y sigma^y` term is written as `-(iY)(iY)` to stay real.
pub fn build_hamiltonian_mpo(params: &ModelParams) -> GroundStateResult<HamiltonianMpo> {
    params.require_fields()?;
    let n = params.n;
    let id = [[1.0, 0.0], [0.0, 1.0]];
    let x = [[0.0, 1.0], [1.0, 0.0]];
    let iy = [[0.0, 1.0], [-1.0, 0.0]];
    let z = [[1.0, 0.0], [0.0, -1.0]];
    let hz1 = params.eta / params.p;
    let hzn = params.eta / params.q;
    let hxn = hzn * params.xi;

    let bulk = |field: [[f64; 2]; 2]| {
        let mut w = Tensor::zeros(vec![5, 5, 2, 2]);
        let mut put = |wl: usize, wr: usize, op: [[f64; 2]; 2], s: f64| {
            for a in 0..2 {
                for b in 0..2 {
                    *w.get_mut(&[wl, wr, a, b]) += s * op[a][b];
                }
            }
        };
        put(4, 4, id, 1.0);
        put(0, 0, id, 1.0);
        put(4, 1, x, 1.0);
        put(1, 0, x, 1.0);
        put(4, 2, iy, 1.0);
        put(2, 0, iy, -1.0);
        put(4, 3, z, 1.0);
        put(3, 0, z, 1.0);
        put(4, 0, field, 1.0);
        w
    };
    let mut tensors = Vec::with_capacity(n);
    for j in 0..n {
        let mut field = [[0.0; 2]; 2];
        if j == 0 {
            field[0][0] += hz1;
            field[1][1] -= hz1;
        }
        if j == n - 1 {
            field = [[field[0][0] + hzn, hxn], [hxn, field[1][1] - hzn]];
        }
        let w = bulk(field);
        let w = if j == 0 {
            slice_rows(&w, 4)
        } else {
            w
        };
        let w = if j == n - 1 { slice_cols(&w, 0) } else { w };
        tensors.push(w);
    }
    Ok(HamiltonianMpo { tensors })
}

fn slice_rows(w: &Tensor<f64>, row: usize) -> Tensor<f64> {
    let sh = w.shape();
    let mut out = Tensor::zeros(vec![1, sh[1], sh[2], sh[3]]);
    for b in 0..sh[1] {
        for s in 0..sh[2] {
            for t in 0..sh[3] {
                *out.get_mut(&[0, b, s, t]) = w.get(&[row, b, s, t]);
            }
        }
    }
    out
}

fn slice_cols(w: &Tensor<f64>, col: usize) -> Tensor<f64> {
    let sh = w.shape();
    let mut out = Tensor::zeros(vec![sh[0], 1, sh[2], sh[3]]);
    for a in 0..sh[0] {
        for s in 0..sh[2] {
            for t in 0..sh[3] {
                *out.get_mut(&[a, 0, s, t]) = w.get(&[a, col, s, t]);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DmrgOptions {
    pub max_bond: usize,
    pub truncation_error: f64,
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    /// Convergence when `|dE| <= energy_tolerance * max(1, |E|)`.
    pub energy_tolerance: f64,
    pub seed: u64,
    pub lanczos_max_iter: usize,
    pub lanczos_tol: f64,
    /// Run an excited-state pass with an orthogonality penalty afterwards.
    pub estimate_gap: bool,
    pub gap_sweeps: usize,
}

impl Default for DmrgOptions {
    fn default() -> Self {
        DmrgOptions {
            max_bond: 200,
            truncation_error: 1e-12,
            min_sweeps: 30,
            max_sweeps: 80,
            energy_tolerance: 1e-14,
            seed: 1,
            lanczos_max_iter: 100,
            lanczos_tol: 1e-14,
            estimate_gap: true,
            gap_sweeps: 6,
        }
    }
}

impl DmrgOptions {
    pub fn validate(&self) -> GroundStateResult<()> {
        if self.max_bond < 2 {
            return Err(GroundStateError::InvalidOptions("max_bond < 2".into()));
        }
        if !(self.truncation_error > 0.0 && self.energy_tolerance > 0.0 && self.lanczos_tol > 0.0) {
            return Err(GroundStateError::InvalidOptions("tolerances must be positive".into()));
        }
        if self.min_sweeps == 0 || self.max_sweeps < self.min_sweeps || self.lanczos_max_iter == 0 {
            return Err(GroundStateError::InvalidOptions("sweep/iteration counts".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DmrgResult {
    pub energy: f64,
    pub psi: Mps,
    /// Energy at the end of each full (right + left) sweep.
    pub sweep_energies: Vec<f64>,
    /// Largest discarded weight of each sweep.
    pub sweep_truncation: Vec<f64>,
    pub converged: bool,
    /// Sweeps in which the energy rose by more than round-off.
    pub energy_increases: usize,
    pub gap: Option<f64>,
    pub gap_flagged: bool,
}

impl DmrgResult {
    pub fn last_delta(&self) -> f64 {
        let e = &self.sweep_energies;
        if e.len() < 2 {
            f64::INFINITY
        } else {
            (e[e.len() - 1] - e[e.len() - 2]).abs()
        }
    }
}

/// Environment contractions shared by DMRG and expectation values.
/// Environments are indexed `[bra, mpo, ket]`.
fn extend_left<T>(env: &Tensor<T>, a_bra: &Tensor<T>, w: &Tensor<T>, a_ket: &Tensor<T>) -> Tensor<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let x = env.tensordot(a_ket, &[2], &[0]); // [l, w, t, r']
    let y = x.tensordot(w, &[1, 2], &[0, 3]); // [l, r', w', s]
    let z = a_bra.conj().tensordot(&y, &[0, 1], &[0, 3]); // [r, r', w']
    z.permute(&[0, 2, 1])
}

fn extend_right<T>(env: &Tensor<T>, a_bra: &Tensor<T>, w: &Tensor<T>, a_ket: &Tensor<T>) -> Tensor<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let x = a_ket.tensordot(env, &[2], &[2]); // [l', t, r, w']
    let y = w.tensordot(&x, &[1, 3], &[3, 1]); // [w, s, l', r]
    a_bra.conj().tensordot(&y, &[1, 2], &[1, 3]) // [l, w, l']
}

fn unit_env<T>(w: usize) -> Tensor<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let mut e = Tensor::zeros(vec![1, w, 1]);
    for k in 0..w {
        *e.get_mut(&[0, k, 0]) = T::one();
    }
    e
}

/// `<psi|O|psi> / <psi|psi>` for an MPO given as site tensors.
pub fn expectation_mpo<T>(psi: &[Tensor<T>], op: &[Tensor<T>]) -> GroundStateResult<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    if psi.len() != op.len() {
        return Err(GroundStateError::ShapeMismatch(format!(
            "MPS has {} sites, MPO {}",
            psi.len(),
            op.len()
        )));
    }
    for (j, (a, w)) in psi.iter().zip(op).enumerate() {
        if a.shape()[1] != w.shape()[3] || w.shape()[2] != w.shape()[3] {
            return Err(GroundStateError::ShapeMismatch(format!("physical dimension at site {j}")));
        }
    }
    if op[0].shape()[0] != 1 || op[op.len() - 1].shape()[1] != 1 {
        return Err(GroundStateError::ShapeMismatch("MPO edges must have bond 1".into()));
    }
    let mut env: Tensor<T> = unit_env(1);
    let mut norm: Tensor<T> = Tensor::from_data(vec![1, 1], vec![T::one()]);
    for (a, w) in psi.iter().zip(op) {
        env = extend_left(&env, a, w, a);
        let t = norm.tensordot(a, &[1], &[0]);
        norm = a.conj().tensordot(&t, &[0, 1], &[0, 1]);
    }
    Ok(env.get(&[0, 0, 0]) / norm.get(&[0, 0]))
}

pub fn expectation_transfer(psi: &Mps, op: &TransferMpo) -> GroundStateResult<Complex64> {
    expectation_mpo(&psi.to_complex(), &op.site_tensors)
}

pub fn expectation_hamiltonian(psi: &Mps, op: &HamiltonianMpo) -> GroundStateResult<f64> {
    expectation_mpo(&psi.tensors, &op.tensors)
}

struct Truncated {
    u: DMatrix<f64>,
    s: Vec<f64>,
    vt: DMatrix<f64>,
    discarded: f64,
}

fn truncated_svd(m: DMatrix<f64>, max_bond: usize, cutoff: f64) -> Truncated {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let total: f64 = sv.iter().map(|s| s * s).sum();
    // smallest kept count whose discarded weight is within the cutoff
    let mut keep = sv.len();
    let mut tail = 0.0;
    while keep > 1 {
        let w = sv[keep - 1] * sv[keep - 1];
        if (tail + w) / total > cutoff {
            break;
        }
        tail += w;
        keep -= 1;
    }
    let keep = keep.min(max_bond).max(1);
    let discarded = sv[keep..].iter().map(|s| s * s).sum::<f64>() / total;
    let cols: Vec<usize> = order[..keep].to_vec();
    let u = u.select_columns(&cols);
    let vt = vt.select_rows(&cols);
    let kept_norm = sv[..keep].iter().map(|s| s * s).sum::<f64>().sqrt();
    let s = sv[..keep].iter().map(|x| x / kept_norm).collect();
    Truncated { u, s, vt, discarded }
}

/// Local effective Hamiltonian `L W1 W2 R` acting on `theta[a, s1, s2, b]`.
fn apply_two_site(
    l: &Tensor<f64>,
    w1: &Tensor<f64>,
    w2: &Tensor<f64>,
    r: &Tensor<f64>,
    theta: &Tensor<f64>,
) -> Tensor<f64> {
    let x = l.tensordot(theta, &[2], &[0]); // [a, w1, t1, t2, b']
    let y = x.tensordot(w1, &[1, 2], &[0, 3]); // [a, t2, b', w2, s1]
    let z = y.tensordot(w2, &[3, 1], &[0, 3]); // [a, b', s1, w3, s2]
    let out = z.tensordot(r, &[1, 3], &[2, 1]); // [a, s1, s2, b]
    out
}

struct Penalty<'a> {
    reference: &'a Mps,
    weight: f64,
    // overlap environments [ref, cur]
    left: Vec<Tensor<f64>>,
    right: Vec<Tensor<f64>>,
}

impl Penalty<'_> {
    /// Projection of the reference state onto the current two-site basis.
    fn local(&self, i: usize) -> Tensor<f64> {
        let b0 = &self.reference.tensors[i];
        let b1 = &self.reference.tensors[i + 1];
        let t = b0.tensordot(b1, &[2], &[0]); // [a0, s1, s2, c0]
        let t = self.left[i].tensordot(&t, &[0], &[0]); // [a1, s1, s2, c0]
        t.tensordot(&self.right[i + 2], &[3], &[0]) // [a1, s1, s2, b1]
    }
}

fn overlap_left(env: &Tensor<f64>, r: &Tensor<f64>, a: &Tensor<f64>) -> Tensor<f64> {
    let t = env.tensordot(a, &[1], &[0]); // [l0, s, r1]
    r.tensordot(&t, &[0, 1], &[0, 1]) // [r0, r1]
}

fn overlap_right(env: &Tensor<f64>, r: &Tensor<f64>, a: &Tensor<f64>) -> Tensor<f64> {
    let t = a.tensordot(env, &[2], &[1]); // [l1, s, r0]
    r.tensordot(&t, &[1, 2], &[1, 2]) // [l0, l1]
}

struct Engine<'a> {
    h: &'a HamiltonianMpo,
    psi: Mps,
    left: Vec<Tensor<f64>>,
    right: Vec<Tensor<f64>>,
    penalty: Option<Penalty<'a>>,
    lanczos: LanczosOptions,
    cutoff: f64,
}

impl<'a> Engine<'a> {
    fn new(h: &'a HamiltonianMpo, psi: Mps, penalty: Option<(&'a Mps, f64)>, opts: &DmrgOptions) -> Self {
        let n = psi.len();
        let mut left = vec![unit_env(1); n + 1];
        let mut right = vec![unit_env(1); n + 1];
        left[0] = unit_env(1);
        right[n] = unit_env(1);
        for j in (0..n).rev() {
            right[j] = extend_right(&right[j + 1], &psi.tensors[j], &h.tensors[j], &psi.tensors[j]);
        }
        let penalty = penalty.map(|(reference, weight)| {
            let one = Tensor::from_data(vec![1, 1], vec![1.0]);
            let mut pl = vec![one.clone(); n + 1];
            let mut pr = vec![one; n + 1];
            for j in (0..n).rev() {
                pr[j] = overlap_right(&pr[j + 1], &reference.tensors[j], &psi.tensors[j]);
            }
            pl[0] = Tensor::from_data(vec![1, 1], vec![1.0]);
            Penalty {
                reference,
                weight,
                left: pl,
                right: pr,
            }
        });
        Engine {
            h,
            psi,
            left,
            right,
            penalty,
            lanczos: LanczosOptions {
                krylov_dim: opts.lanczos_max_iter.min(40),
                max_matvecs: opts.lanczos_max_iter,
                tol: opts.lanczos_tol,
            },
            cutoff: opts.truncation_error,
        }
    }

    fn optimize(&mut self, i: usize, max_bond: usize, moving_right: bool) -> (f64, f64) {
        let a = &self.psi.tensors[i];
        let b = &self.psi.tensors[i + 1];
        let theta = a.tensordot(b, &[2], &[0]);
        let shape = theta.shape().to_vec();
        let (l, w1, w2, r) = (&self.left[i], &self.h.tensors[i], &self.h.tensors[i + 1], &self.right[i + 2]);
        let phi = self.penalty.as_ref().map(|p| (p.local(i), p.weight));
        let res = lanczos_lowest(
            |x, y| {
                let t = Tensor::from_data(shape.clone(), x.to_vec());
                let out = apply_two_site(l, w1, w2, r, &t);
                y.copy_from_slice(out.data());
                if let Some((ph, wgt)) = &phi {
                    let c: f64 = ph.data().iter().zip(x).map(|(p, v)| p * v).sum();
                    y.iter_mut().zip(ph.data()).for_each(|(yi, pi)| *yi += wgt * c * pi);
                }
            },
            theta.data(),
            &[],
            self.lanczos,
        );
        let (dl, dr) = (shape[0], shape[3]);
        let m = DMatrix::from_row_slice(dl * 2, 2 * dr, &res.vector);
        let t = truncated_svd(m, max_bond, self.cutoff);
        let k = t.s.len();
        if moving_right {
            let a_new = Tensor::from_matrix(&t.u, vec![dl, 2, k]);
            let mut svt = t.vt.clone();
            for (row, &s) in t.s.iter().enumerate() {
                svt.row_mut(row).scale_mut(s);
            }
            let b_new = Tensor::from_matrix(&svt, vec![k, 2, dr]);
            self.psi.tensors[i] = a_new;
            self.psi.tensors[i + 1] = b_new;
            self.left[i + 1] = extend_left(&self.left[i], &self.psi.tensors[i], &self.h.tensors[i], &self.psi.tensors[i]);
            if let Some(p) = self.penalty.as_mut() {
                p.left[i + 1] = overlap_left(&p.left[i], &p.reference.tensors[i], &self.psi.tensors[i]);
            }
            self.psi.center = i + 1;
        } else {
            let mut us = t.u.clone();
            for (col, &s) in t.s.iter().enumerate() {
                us.column_mut(col).scale_mut(s);
            }
            self.psi.tensors[i] = Tensor::from_matrix(&us, vec![dl, 2, k]);
            self.psi.tensors[i + 1] = Tensor::from_matrix(&t.vt, vec![k, 2, dr]);
            self.right[i + 1] = extend_right(
                &self.right[i + 2],
                &self.psi.tensors[i + 1],
                &self.h.tensors[i + 1],
                &self.psi.tensors[i + 1],
            );
            if let Some(p) = self.penalty.as_mut() {
                p.right[i + 1] = overlap_right(&p.right[i + 2], &p.reference.tensors[i + 1], &self.psi.tensors[i + 1]);
            }
            self.psi.center = i;
        }
        self.psi.max_bond = self.psi.max_bond.max(k);
        (res.value, t.discarded)
    }

    /// One right pass followed by one left pass; returns the final local
    /// energy and the largest discarded weight.
    fn sweep(&mut self, max_bond: usize) -> (f64, f64) {
        let n = self.psi.len();
        let mut worst: f64 = 0.0;
        let mut e = 0.0;
        for i in 0..n - 1 {
            let (ei, d) = self.optimize(i, max_bond, true);
            worst = worst.max(d);
            e = ei;
        }
        for i in (0..n - 1).rev() {
            let (ei, d) = self.optimize(i, max_bond, false);
            worst = worst.max(d);
            e = ei;
        }
        self.psi.discarded_weight_log.push(worst);
        (e, worst)
    }
}

fn bond_for_sweep(sweep: usize, max_bond: usize) -> usize {
    let ramp = 16usize.saturating_mul(1usize << sweep.min(20));
    ramp.min(max_bond)
}

/// Two-site DMRG ground state of `h`.
pub fn dmrg_ground_state(h: &HamiltonianMpo, opts: &DmrgOptions) -> GroundStateResult<DmrgResult> {
    opts.validate()?;
    let n = h.len();
    if n < 4 {
        return Err(GroundStateError::TooShort(n));
    }
    let start = Mps::random_product(n, opts.seed);
    let mut engine = Engine::new(h, start, None, opts);
    let mut energies = Vec::new();
    let mut truncs = Vec::new();
    let mut increases = 0;
    let mut converged = false;
    for sweep in 0..opts.max_sweeps {
        let d = bond_for_sweep(sweep, opts.max_bond);
        let (e, tr) = engine.sweep(d);
        if let Some(&prev) = energies.last() {
            let prev: f64 = prev;
            if e > prev + 1e-12 * prev.abs().max(1.0) && d == opts.max_bond {
                increases += 1;
            }
        }
        energies.push(e);
        truncs.push(tr);
        let n_s = energies.len();
        if n_s >= opts.min_sweeps && n_s >= 2 && d == opts.max_bond {
            let de = (energies[n_s - 1] - energies[n_s - 2]).abs();
            if de <= opts.energy_tolerance * e.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    let psi = engine.psi;
    let energy = expectation_hamiltonian(&psi, h)?;
    let mut result = DmrgResult {
        energy,
        psi,
        sweep_energies: energies,
        sweep_truncation: truncs,
        converged,
        energy_increases: increases,
        gap: None,
        gap_flagged: false,
    };
    if opts.estimate_gap {
        let gap = excited_gap(h, &result.psi, energy, opts)?;
        result.gap = Some(gap);
        result.gap_flagged = gap < DMRG_GAP_FLAG;
    }
    if converged {
        Ok(result)
    } else {
        Err(GroundStateError::NoConvergence(Box::new(result)))
    }
}

/// Upper estimate of the gap from a short penalised excited-state run.
fn excited_gap(h: &HamiltonianMpo, ground: &Mps, e0: f64, opts: &DmrgOptions) -> GroundStateResult<f64> {
    let n = h.len();
    let weight = 10.0 * (e0.abs() + n as f64);
    let start = Mps::random_product(n, opts.seed.wrapping_add(0x9e37_79b9));
    let mut engine = Engine::new(h, start, Some((ground, weight)), opts);
    for sweep in 0..opts.gap_sweeps.max(1) {
        engine.sweep(bond_for_sweep(sweep, opts.max_bond));
    }
    let e1 = expectation_hamiltonian(&engine.psi, h)?;
    let ov = overlap(&engine.psi, ground);
    // remove the residual ground-state admixture from the Rayleigh quotient
    let w = ov * ov / engine.psi.norm_squared();
    let e1 = if w < 1.0 - 1e-12 { (e1 - w * e0) / (1.0 - w) } else { e1 };
    Ok((e1 - e0).max(0.0))
}

#[derive(Clone, Debug)]
pub struct ExactGroundState {
    pub energy: f64,
    pub state: DVector<f64>,
    pub gap: f64,
    pub degenerate: bool,
}

/// Full diagonalisation of a dense real symmetric operator.
pub fn exact_ground_state(h: &DMatrix<f64>) -> GroundStateResult<ExactGroundState> {
    let (r, c) = h.shape();
    if r != c {
        return Err(GroundStateError::ShapeMismatch(format!("{r} x {c} operator")));
    }
    let scale = h.abs().max().max(1.0);
    let asym = (h - h.transpose()).abs().max();
    if asym > 1e-12 * scale {
        return Err(GroundStateError::NotHermitian(asym));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let energy = eig.eigenvalues[order[0]];
    let gap = if r > 1 { eig.eigenvalues[order[1]] - energy } else { f64::INFINITY };
    let mut state = eig.eigenvectors.column(order[0]).into_owned();
    fix_sign(&mut state);
    Ok(ExactGroundState {
        energy,
        state,
        gap,
        degenerate: gap < DEGENERACY_GAP,
    })
}

fn fix_sign(v: &mut DVector<f64>) {
    let (k, _) = v.iamax_full();
    if v[k] < 0.0 {
        *v *= -1.0;
    }
}

/// Exact ground state for a parameter set: dense diagonalisation up to
/// `DENSE_DIAG_MAX_DIM`, matrix-free Lanczos beyond.
pub fn exact_ground_state_for(params: &ModelParams) -> GroundStateResult<ExactGroundState> {
    let dim = 1usize << params.n;
    if dim <= DENSE_DIAG_MAX_DIM {
        return exact_ground_state(&build_hamiltonian(params)?);
    }
    params.require_fields()?;
    let apply = |x: &[f64], y: &mut [f64]| {
        apply_hamiltonian(params, x, y).expect("fields checked");
    };
    let opts = LanczosOptions {
        krylov_dim: 150,
        max_matvecs: 6000,
        tol: 1e-13,
    };
    let v0: Vec<f64> = (0..dim).map(|k| 1.0 + 0.5 * ((k as f64) * 0.7321).sin()).collect();
    let g = lanczos_lowest(apply, &v0, &[], opts);
    let e1 = lanczos_lowest(apply, &v0, std::slice::from_ref(&g.vector), opts);
    let mut state = DVector::from_vec(g.vector);
    fix_sign(&mut state);
    let gap = e1.value - g.value;
    Ok(ExactGroundState {
        energy: g.value,
        state,
        gap,
        degenerate: gap < DEGENERACY_GAP,
    })
}

const MAGIC: &[u8; 8] = b"RLABMPS\0";
const VERSION: u32 = 1;

/// Metadata block stored after the tensor payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub params: Option<ModelParams>,
    pub seed: u64,
    pub energy: f64,
    pub sweep_energies: Vec<f64>,
    #[serde(default)]
    pub discarded_weight_log: Vec<f64>,
}

/// Writes an MPS checkpoint; the layout is described in `docs/checkpoint.md`.
pub fn save_checkpoint(path: &Path, psi: &Mps, meta: &CheckpointMeta) -> GroundStateResult<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        for v in [VERSION, psi.len() as u32, psi.center as u32, psi.max_bond as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for a in &psi.tensors {
            for &d in a.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        for a in &psi.tensors {
            for &x in a.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        let json = serde_json::to_vec(meta).map_err(|e| GroundStateError::Checkpoint(e.to_string()))?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> GroundStateResult<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_checkpoint(path: &Path) -> GroundStateResult<(Mps, CheckpointMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GroundStateError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(GroundStateError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let center = read_u32(&mut r)? as usize;
    let max_bond = read_u32(&mut r)? as usize;
    if n == 0 || center >= n {
        return Err(GroundStateError::Checkpoint("bad header".into()));
    }
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let dl = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let dr = read_u32(&mut r)? as usize;
        shapes.push(vec![dl, d, dr]);
    }
    let mut tensors = Vec::with_capacity(n);
    for sh in shapes {
        let len: usize = sh.iter().product();
        let mut buf = vec![0u8; 8 * len];
        r.read_exact(&mut buf)?;
        let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor::from_data(sh, data));
    }
    let mut lb = [0u8; 8];
    r.read_exact(&mut lb)?;
    let len = u64::from_le_bytes(lb) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let meta: CheckpointMeta = serde_json::from_slice(&json).map_err(|e| GroundStateError::Checkpoint(e.to_string()))?;
    let psi = Mps {
        tensors,
        center,
        max_bond,
        discarded_weight_log: meta.discarded_weight_log.clone(),
    };
    Ok((psi, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(max_bond: usize) -> DmrgOptions {
        DmrgOptions {
            max_bond,
            min_sweeps: 4,
            max_sweeps: 30,
            energy_tolerance: 1e-13,
            estimate_gap: false,
            ..Default::default()
        }
    }

    #[test]
    fn hamiltonian_mpo_matches_dense() {
        for (n, xi) in [(2, 0.0), (4, 1.2), (6, -0.4)] {
            let pr = ModelParams::new(n, 1.0, 0.7, -0.6, xi).unwrap();
            let h = build_hamiltonian(&pr).unwrap();
            let mpo = build_hamiltonian_mpo(&pr).unwrap().to_dense();
            assert!((h - mpo).abs().max() < 1e-12);
        }
    }

    #[test]
    fn two_site_singlet() {
        // fields -> 0 by sending p, q to infinity
        let pr = ModelParams::new(2, 1.0, 1e300, 1e300, 0.0).unwrap();
        let g = exact_ground_state(&build_hamiltonian(&pr).unwrap()).unwrap();
        assert!((g.energy + 3.0).abs() < 1e-12);
    }

    #[test]
    fn not_hermitian_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(exact_ground_state(&m), Err(GroundStateError::NotHermitian(_))));
    }

    #[test]
    fn lanczos_exact_matches_dense() {
        let pr = ModelParams::new(11, 1.0, -0.6, -0.3, 1.2).unwrap();
        let g = exact_ground_state_for(&pr).unwrap();
        let mut hv = vec![0.0; g.state.len()];
        apply_hamiltonian(&pr, g.state.as_slice(), &mut hv).unwrap();
        let res: f64 = hv.iter().zip(g.state.iter()).map(|(a, b)| (a - g.energy * b).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-9, "residual {res}");
        assert!(g.gap > 0.0);
    }

    #[test]
    fn dmrg_small_chain() {
        let pr = ModelParams::new(6, 1.0, 0.7, 0.6, 1.2).unwrap();
        let exact = exact_ground_state(&build_hamiltonian(&pr).unwrap()).unwrap();
        let h = build_hamiltonian_mpo(&pr).unwrap();
        let r = dmrg_ground_state(&h, &quick(16)).unwrap();
        assert!((r.energy - exact.energy).abs() < 1e-10);
        assert!(r.energy >= exact.energy - 1e-12);
        assert!(r.psi.isometry_error() < 1e-12);
        assert!((r.psi.norm_squared() - 1.0).abs() < 1e-12);
        let ov = r.psi.to_dense().dot(&exact.state).abs();
        assert!((ov - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gap_estimate_is_positive() {
        let pr = ModelParams::new(6, 1.0, 0.7, 0.6, 0.0).unwrap();
        let exact = exact_ground_state(&build_hamiltonian(&pr).unwrap()).unwrap();
        let h = build_hamiltonian_mpo(&pr).unwrap();
        let mut o = quick(16);
        o.estimate_gap = true;
        let r = dmrg_ground_state(&h, &o).unwrap();
        let gap = r.gap.unwrap();
        assert!((gap - exact.gap).abs() < 1e-6, "{gap} vs {}", exact.gap);
        assert!(!r.gap_flagged);
    }

    #[test]
    fn too_short_and_bad_options() {
        let pr = ModelParams::new(3, 1.0, 0.7, 0.6, 0.0).unwrap();
        let h = build_hamiltonian_mpo(&pr).unwrap();
        assert!(matches!(dmrg_ground_state(&h, &quick(8)), Err(GroundStateError::TooShort(3))));
        let pr = ModelParams::new(4, 1.0, 0.7, 0.6, 0.0).unwrap();
        let h = build_hamiltonian_mpo(&pr).unwrap();
        assert!(matches!(dmrg_ground_state(&h, &quick(1)), Err(GroundStateError::InvalidOptions(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.mps");
        let psi = Mps::random_product(5, 7);
        let meta = CheckpointMeta {
            params: Some(ModelParams::new(5, 1.0, 0.7, 0.6, 0.0).unwrap()),
            seed: 7,
            energy: -1.5,
            sweep_energies: vec![-1.0, -1.5],
            discarded_weight_log: vec![],
        };
        save_checkpoint(&path, &psi, &meta).unwrap();
        let (back, m2) = load_checkpoint(&path).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(back.tensors, psi.tensors);
        assert_eq!(back.center, psi.center);
    }

    #[test]
    fn truncation_respects_both_caps() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 1e-5, 1e-9]));
        let t = truncated_svd(m.clone(), 10, 1e-12);
        assert_eq!(t.s.len(), 3);
        let t = truncated_svd(m, 2, 1e-12);
        assert_eq!(t.s.len(), 2);
    }
}
