//! Bethe roots: the logarithmic Bethe equations of the U(1)-symmetric chain,
//! the T–Q linear-system solver for generic boundaries, verification against
//! a reference Λ, the energy formula and root classification.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{find_roots_to_floor, node_product, pair_roots_with_tol, AlgebraError, ComplexPoint, LagrangePolynomial, LogComplex};
use crate::model::{ModelError, ModelParams};
use crate::spectral::{make_bethe_nodes, sample_lambda, BetheNodeVariant, LambdaSource, Normalization, SpectralError, SpectralSamples, DEFAULT_NODE_EXPONENT};
use crate::zeroroots::{canonical_representative, CLASSIFY_TOL, REAL_TOL};

/// Residual target of the logarithmic Bethe equations.
pub const LOG_BAE_TOL: f64 = 1e-13;
/// Without line roots, arcs start at this fraction of the outermost offset.
pub const ARC_FRACTION: f64 = 0.75;
/// Condition number above which a node set is rejected.
pub const MAX_CONDITION: f64 = 1e14;
/// Largest relative Aberth step still handed on to the node update.
pub const STALLED_STEP_ACCEPT: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum BetheError {
    #[error("quantum numbers must be strictly increasing")]
    NonMonotoneQuantumNumbers,

    #[error("Bethe equations did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("root iteration did not settle; max movement per iteration {trail:?}")]
    NoRootConvergence { trail: Vec<f64> },

    #[error("T-Q system is singular (condition estimate {0:e})")]
    SingularSystem(f64),

    #[error("{0} is a pole of the T-Q relation")]
    PoleAt(ComplexPoint),

    #[error("root {0} is not simple")]
    MultipleRoot(ComplexPoint),

    #[error("BAE ratio has a pole at {0}")]
    PoleInRatio(ComplexPoint),

    #[error("root {0} sits on a pole of the energy formula")]
    RootAtPole(ComplexPoint),

    #[error("unsupported parameters: {0}")]
    InvalidParams(String),

    #[error("{0}")]
    Spectral(#[from] SpectralError),

    #[error("{0}")]
    Algebra(#[from] AlgebraError),

    #[error("{0}")]
    Model(#[from] ModelError),
}

pub type BetheResult<T> = Result<T, BetheError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetheMode {
    /// U(1)-symmetric chain, `Q` of degree `2M`.
    Homogeneous,
    /// Generic boundaries, `Q` of degree `2N` and a third T–Q term.
    Inhomogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetheTag {
    RegularCentral,
    RegularBoundaryString,
    Line,
    Arc,
    PairedLine,
}

impl fmt::Display for BetheTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BetheTag::RegularCentral => "regular_central",
            BetheTag::RegularBoundaryString => "regular_boundary_string",
            BetheTag::Line => "line",
            BetheTag::Arc => "arc",
            BetheTag::PairedLine => "paired_line",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetheRootSet {
    pub params: ModelParams,
    pub mode: BetheMode,
    /// One representative per pair `{λ, -λ - eta}`.
    pub roots: Vec<ComplexPoint>,
    /// All roots of `Q`, sorted.
    pub full_roots: Vec<ComplexPoint>,
    /// Tags of `full_roots`.
    pub tags: Vec<BetheTag>,
    pub paired_line_pairs: usize,
    pub iterations: usize,
    pub movement: Vec<f64>,
    pub condition: Vec<f64>,
}

impl BetheRootSet {
    pub fn from_representatives(params: ModelParams, mode: BetheMode, reps: Vec<ComplexPoint>) -> Self {
        let eta = params.eta;
        let mut full_roots: Vec<ComplexPoint> = reps.iter().copied().chain(reps.iter().map(|&l| -l - eta)).collect();
        sort_points(&mut full_roots);
        BetheRootSet {
            params,
            mode,
            roots: reps,
            full_roots,
            tags: Vec::new(),
            paired_line_pairs: 0,
            iterations: 0,
            movement: Vec::new(),
            condition: Vec::new(),
        }
    }

    /// `Q(u) = prod (u - λ)(u + λ + eta)` with its derivative.
    pub fn q_with_derivative(&self, u: ComplexPoint) -> (ComplexPoint, ComplexPoint) {
        let q = q_dual(&self.roots, self.params.eta, Dual::var(u));
        (q.v, q.d)
    }

    pub fn q(&self, u: ComplexPoint) -> ComplexPoint {
        self.q_with_derivative(u).0
    }
}

fn sort_points(v: &mut [ComplexPoint]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Value and first derivative.
#[derive(Clone, Copy, Debug)]
struct Dual {
    v: Complex64,
    d: Complex64,
}

impl Dual {
    fn var(u: Complex64) -> Self {
        Dual {
            v: u,
            d: Complex64::new(1.0, 0.0),
        }
    }

    fn cst(c: Complex64) -> Self {
        Dual {
            v: c,
            d: Complex64::new(0.0, 0.0),
        }
    }

    fn re(x: f64) -> Self {
        Dual::cst(Complex64::new(x, 0.0))
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::re(1.0);
        }
        Dual {
            v: self.v.powi(n),
            d: self.d * self.v.powi(n - 1) * n as f64,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

fn q_dual(reps: &[ComplexPoint], eta: f64, u: Dual) -> Dual {
    reps.iter().fold(Dual::re(1.0), |acc, &l| acc * (u - Dual::cst(l)) * (u + Dual::cst(l + eta)))
}

fn check_homogeneous_sites(params: &ModelParams) -> BetheResult<()> {
    if !params.is_homogeneous() {
        return Err(BetheError::InvalidParams("T-Q relation implemented for theta_j = 0 only".into()));
    }
    Ok(())
}

fn mode_for(params: &ModelParams) -> BetheMode {
    if params.xi == 0.0 {
        BetheMode::Homogeneous
    } else {
        BetheMode::Inhomogeneous
    }
}

/// The three T–Q coefficient functions in dual form:
/// `F(u) = A(u) Q(u - eta) + D(u) Q(u + eta) + C(u)`.
fn tq_terms(params: &ModelParams, mode: BetheMode, u: Dual) -> (Dual, Dual, Dual) {
    let (eta, p, q, s) = (params.eta, params.p, params.q, params.s());
    let n = params.n as i32;
    let e = Dual::re(eta);
    let two = Dual::re(2.0);
    let den = two * u + e;
    let a = two * (u + e).powi(2 * n + 1) / den * (u + Dual::re(p)) * (Dual::re(s) * u + Dual::re(q));
    let d = two * u.powi(2 * n + 1) / den * (u - Dual::re(p) + e) * (Dual::re(s) * (u + e) - Dual::re(q));
    let c = match mode {
        BetheMode::Homogeneous => Dual::re(0.0),
        BetheMode::Inhomogeneous => Dual::re(2.0 * (1.0 - s)) * (u * (u + e)).powi(2 * n + 1),
    };
    (a, d, c)
}

/// Same coefficients in log form, for the linear system.
fn tq_terms_log(params: &ModelParams, mode: BetheMode, u: ComplexPoint) -> (LogComplex, LogComplex, LogComplex) {
    let (eta, p, q, s) = (params.eta, params.p, params.q, params.s());
    let n = params.n as i32;
    let l = LogComplex::from_complex;
    let two = l(Complex64::new(2.0, 0.0));
    let den = l(2.0 * u + eta);
    let a = two.mul(l(u + eta).powi(2 * n + 1)).div(den).mul(l(u + p)).mul(l(s * u + q));
    let d = two.mul(l(u).powi(2 * n + 1)).div(den).mul(l(u - p + eta)).mul(l(s * (u + eta) - q));
    let c = match mode {
        BetheMode::Homogeneous => LogComplex::ZERO,
        BetheMode::Inhomogeneous => l(Complex64::new(2.0 * (1.0 - s), 0.0)).mul(l(u * (u + eta)).powi(2 * n + 1)),
    };
    (a, d, c)
}

fn theta_n(x: f64, n: f64) -> f64 {
    2.0 * (2.0 * x / n).atan()
}

fn theta_n_prime(x: f64, n: f64) -> f64 {
    4.0 * n / (n * n + 4.0 * x * x)
}

/// Ground-state quantum numbers `I_j = j`, `j = 1..M`.
pub fn ground_state_quantum_numbers(m: usize) -> Vec<f64> {
    (1..=m).map(|j| j as f64).collect()
}

fn log_bae_residual(mu: &[f64], params: &ModelParams, numbers: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = mu.len();
    let n = params.n as f64;
    let ph = params.p / params.eta - 0.5;
    let qh = params.q / params.eta - 0.5;
    let mut f = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, m);
    for j in 0..m {
        let x = mu[j];
        let mut v = theta_n(x, 2.0 * ph) + theta_n(x, 2.0 * qh) + (2.0 * n + 1.0) * theta_n(x, 1.0)
            - 2.0 * std::f64::consts::PI * numbers[j];
        let mut dj = theta_n_prime(x, 2.0 * ph) + theta_n_prime(x, 2.0 * qh) + (2.0 * n + 1.0) * theta_n_prime(x, 1.0);
        for l in 0..m {
            let (a, b) = (x - mu[l], x + mu[l]);
            v -= theta_n(a, 2.0) + theta_n(b, 2.0);
            if l == j {
                dj -= 2.0 * theta_n_prime(2.0 * x, 2.0);
            } else {
                dj -= theta_n_prime(a, 2.0) + theta_n_prime(b, 2.0);
                jac[(j, l)] = theta_n_prime(a, 2.0) - theta_n_prime(b, 2.0);
            }
        }
        f[j] = v;
        jac[(j, j)] = dj;
    }
    (f, jac)
}

/// Solves the logarithmic Bethe equations of the U(1)-symmetric chain for
/// real rapidities `μ_j` (`λ_j = -eta/2 - i eta μ_j`) by damped Newton
/// iteration. Returns `μ` sorted ascending.
pub fn solve_log_bae(params: &ModelParams, m: usize, numbers: &[f64]) -> BetheResult<Vec<f64>> {
    if params.xi != 0.0 {
        return Err(BetheError::InvalidParams("logarithmic Bethe equations need xi = 0".into()));
    }
    check_homogeneous_sites(params)?;
    if numbers.len() != m {
        return Err(BetheError::InvalidParams(format!("{} quantum numbers for M = {m}", numbers.len())));
    }
    if numbers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BetheError::NonMonotoneQuantumNumbers);
    }
    let (ph, qh) = (params.p / params.eta - 0.5, params.q / params.eta - 0.5);
    if ph == 0.0 || qh == 0.0 {
        return Err(BetheError::InvalidParams("p or q equals eta/2".into()));
    }
    let n = params.n as f64;
    let mut mu: Vec<f64> = numbers
        .iter()
        .map(|&i| (std::f64::consts::PI * i / (2.0 * n + 1.0)).tan())
        .collect();
    let norm = |f: &DVector<f64>| f.amax();
    let (mut f, mut jac) = log_bae_residual(&mu, params, numbers);
    let max_iter = 200;
    for it in 0..max_iter {
        let r = norm(&f);
        if r <= LOG_BAE_TOL {
            mu.sort_by(f64::total_cmp);
            return Ok(mu);
        }
        let step = match jac.clone().lu().solve(&(-&f)) {
            Some(s) => s,
            None => return Err(BetheError::NoConvergence { residual: r, iterations: it }),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial: Vec<f64> = mu.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            let (ft, jt) = log_bae_residual(&trial, params, numbers);
            if norm(&ft) < r || norm(&ft) <= LOG_BAE_TOL {
                mu = trial;
                f = ft;
                jac = jt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(BetheError::NoConvergence { residual: r, iterations: it });
        }
    }
    Err(BetheError::NoConvergence {
        residual: norm(&f),
        iterations: max_iter,
    })
}

/// Bethe roots `λ_j = -eta/2 - i eta μ_j` as a homogeneous root set.
pub fn bethe_set_from_mu(params: &ModelParams, mu: &[f64]) -> BetheRootSet {
    let eta = params.eta;
    let reps = mu.iter().map(|&x| Complex64::new(-eta / 2.0, -eta * x)).collect();
    BetheRootSet::from_representatives(params.clone(), BetheMode::Homogeneous, reps)
}

/// Closer than this (in units of eta) to a root of `Q` or to `u = -eta/2`,
/// the T–Q quotient is replaced by a mean over a circle.
const QUOTIENT_CLEARANCE: f64 = 1e-4;
const MEAN_RADIUS: f64 = 0.05;

fn quotient_clearance(set: &BetheRootSet, u: ComplexPoint) -> f64 {
    let eta = set.params.eta;
    set.full_roots
        .iter()
        .map(|l| (u - l).norm())
        .fold((u + eta / 2.0).norm(), f64::min)
}

fn tq_quotient(set: &BetheRootSet, u: ComplexPoint) -> ComplexPoint {
    let eta = set.params.eta;
    let (a, d, c) = tq_terms(&set.params, set.mode, Dual::cst(u));
    (a.v * set.q(u - eta) + d.v * set.q(u + eta) + c.v) / set.q(u)
}

/// Λ(u) from the T–Q relation. At a root of `Q` the quotient is 0/0; there
/// Λ, a polynomial of degree 2N+2, is the mean of its values on 2N+4 points
/// of a small circle.
pub fn lambda_from_bethe(set: &BetheRootSet, u: ComplexPoint) -> BetheResult<ComplexPoint> {
    let eta = set.params.eta;
    let clear = QUOTIENT_CLEARANCE * eta;
    if quotient_clearance(set, u) > clear {
        return Ok(tq_quotient(set, u));
    }
    let k = 2 * set.params.n + 4;
    for scale in [1.0, 0.7, 1.3, 0.45] {
        let r = MEAN_RADIUS * eta * scale;
        let pts: Vec<ComplexPoint> = (0..k)
            .map(|j| u + Complex64::from_polar(r, 0.3 + 2.0 * std::f64::consts::PI * j as f64 / k as f64))
            .collect();
        if pts.iter().all(|&w| quotient_clearance(set, w) > clear) {
            let sum: ComplexPoint = pts.iter().map(|&w| tq_quotient(set, w)).sum();
            return Ok(sum / k as f64);
        }
    }
    Err(BetheError::PoleAt(u))
}

/// A Bethe root set viewed as a Λ evaluator.
pub struct BetheLambda<'a>(pub &'a BetheRootSet);

impl LambdaSource for BetheLambda<'_> {
    fn params(&self) -> &ModelParams {
        &self.0.params
    }

    fn lambda(&self, u: ComplexPoint) -> Result<ComplexPoint, SpectralError> {
        lambda_from_bethe(self.0, u).map_err(|_| SpectralError::NodeAtPole(u))
    }
}

/// Linear-system solution for the nodal values of `Q`.
#[derive(Clone, Debug)]
pub struct TqSolution {
    pub nodes: Vec<ComplexPoint>,
    pub q_values: Vec<ComplexPoint>,
    /// 1-norm condition number of the equilibrated system.
    pub condition: f64,
}

/// Cardinal functions `l_j(v)` of the node set in log form, with `ω(v)`.
fn cardinals(v: ComplexPoint, nodes: &[ComplexPoint], weights: &[LogComplex]) -> (Vec<LogComplex>, LogComplex) {
    if let Some(k) = nodes.iter().position(|&x| (v - x).norm() <= 1e-14 * (1.0 + x.norm())) {
        let mut l = vec![LogComplex::ZERO; nodes.len()];
        l[k] = LogComplex::ONE;
        return (l, LogComplex::ZERO);
    }
    let omega = node_product(v, nodes);
    let l = nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| omega.mul(w).div_complex(v - x))
        .collect();
    (l, omega)
}

fn barycentric_weights(nodes: &[ComplexPoint]) -> Vec<LogComplex> {
    (0..nodes.len())
        .map(|j| {
            let others: Vec<ComplexPoint> = nodes.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, &x)| x).collect();
            LogComplex::ONE.div(node_product(nodes[j], &others))
        })
        .collect()
}

/// Writes the T–Q relation at every node as a linear equation in the nodal
/// values of the monic `Q` and solves it.
pub fn solve_tq_system(samples: &SpectralSamples, mode: BetheMode) -> BetheResult<TqSolution> {
    let params = &samples.params;
    let eta = params.eta;
    let nodes = &samples.nodes;
    let dim = nodes.len();
    for &u in nodes {
        for pole in [0.0, -eta, -eta / 2.0] {
            if (u - pole).norm() < 1e-12 {
                return Err(BetheError::PoleAt(u));
            }
        }
    }
    let lambda = samples.raw_log_values();
    let weights = barycentric_weights(nodes);
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    for i in 0..dim {
        let u = nodes[i];
        let (a, d, c) = tq_terms_log(params, mode, u);
        let (lm, om) = cardinals(u - eta, nodes, &weights);
        let (lp, op) = cardinals(u + eta, nodes, &weights);
        let mut row: Vec<LogComplex> = (0..dim)
            .map(|j| {
                let mut terms = vec![a.mul(lm[j]).neg(), d.mul(lp[j]).neg()];
                if i == j {
                    terms.push(lambda[i]);
                }
                crate::algebra::sum_log(terms)
            })
            .collect();
        let b = crate::algebra::sum_log([a.mul(om), d.mul(op), c]);
        row.push(b);
        let shift = row.iter().map(|t| t.ln_abs).fold(f64::NEG_INFINITY, f64::max);
        for j in 0..dim {
            m[(i, j)] = row[j].scaled(shift);
        }
        rhs[i] = row[dim].scaled(shift);
    }
    // column equilibration; unknowns become Q_j / s_j
    let col_scale: Vec<f64> = (0..dim)
        .map(|j| m.column(j).iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300))
        .collect();
    for j in 0..dim {
        let s = col_scale[j];
        m.column_mut(j).iter_mut().for_each(|z| *z /= s);
    }
    let lu = m.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(BetheError::SingularSystem(f64::INFINITY))?;
    let r = &rhs - &m * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let condition = match lu.try_inverse() {
        Some(inv) => one_norm(&m) * one_norm(&inv),
        None => f64::INFINITY,
    };
    let q_values = (0..dim).map(|j| x[j] / col_scale[j]).collect();
    Ok(TqSolution {
        nodes: nodes.clone(),
        q_values,
        condition,
    })
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Roots of the monic `Q` defined by a T–Q solution.
pub fn q_roots(sol: &TqSolution) -> BetheResult<Vec<ComplexPoint>> {
    let poly = LagrangePolynomial::new(sol.nodes.clone(), sol.q_values.clone(), Some(Complex64::new(1.0, 0.0)))?;
    // a stalled iteration is refined by the next node update
    Ok(find_roots_to_floor(&poly, sol.nodes.len(), &sol.nodes, STALLED_STEP_ACCEPT)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetheOptions {
    pub node_exponent: f64,
    /// Offset `t` of the second node family; `None` means `N/8`.
    pub node_offset: Option<f64>,
    pub variant: BetheNodeVariant,
    pub max_iterations: usize,
    pub movement_tol: f64,
    pub max_condition: f64,
}

impl Default for BetheOptions {
    fn default() -> Self {
        BetheOptions {
            node_exponent: DEFAULT_NODE_EXPONENT,
            node_offset: None,
            variant: BetheNodeVariant::RealAxis,
            max_iterations: 20,
            movement_tol: 1e-10,
            max_condition: MAX_CONDITION,
        }
    }
}

fn symmetrize_pairs(roots: &[ComplexPoint], eta: f64) -> BetheResult<Vec<ComplexPoint>> {
    let tol = 1e-3 * (1.0 + roots.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let pairs = pair_roots_with_tol(roots, eta, tol)?;
    Ok(pairs
        .into_iter()
        .map(|(a, b)| canonical_representative(0.5 * (a - b - eta), eta))
        .collect())
}

fn max_movement(old: &[ComplexPoint], new: &[ComplexPoint]) -> f64 {
    let mut used = vec![false; old.len()];
    let mut worst: f64 = 0.0;
    for &z in new {
        let best = old
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, &o)| (k, (z - o).norm() / (1.0 + z.norm())))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((k, d)) => {
                used[k] = true;
                worst = worst.max(d);
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Bethe roots of the state behind `source` from the T–Q relation.
///
/// For `xi = 0` the U(1)-symmetric relation with `Q` of degree `N` is used
/// (M = N/2 finite roots); otherwise the full relation with `Q` of degree 2N.
/// Each iteration samples Λ, solves the linear system, finds the roots of
/// `Q` and moves the nodes onto them.
pub fn solve_inhomogeneous_bethe(source: &dyn LambdaSource, opts: &BetheOptions) -> BetheResult<BetheRootSet> {
    let params = source.params().clone();
    check_homogeneous_sites(&params)?;
    let n = params.n;
    let mode = mode_for(&params);
    let t = opts.node_offset.unwrap_or(n as f64 / 8.0);
    let first = match mode {
        BetheMode::Homogeneous => vec![BetheNodeVariant::Homogeneous],
        BetheMode::Inhomogeneous => {
            let other = match opts.variant {
                BetheNodeVariant::VerticalLine => BetheNodeVariant::RealAxis,
                _ => BetheNodeVariant::VerticalLine,
            };
            vec![opts.variant, other]
        }
    };
    // fall back to the other node family when one fails
    let mut last = None;
    for variant in first {
        match refine_from(source, &params, mode, variant, t, opts) {
            Ok(set) => return Ok(set),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one node family"))
}

fn refine_from(
    source: &dyn LambdaSource,
    params: &ModelParams,
    mode: BetheMode,
    variant: BetheNodeVariant,
    t: f64,
    opts: &BetheOptions,
) -> BetheResult<BetheRootSet> {
    let (n, eta) = (params.n, params.eta);
    let nodes = make_bethe_nodes(n, eta, opts.node_exponent, t, variant)?;
    let samples = sample_lambda(source, &nodes, Normalization::DividedByU2n)?;
    let mut sol = solve_tq_system(&samples, mode)?;
    if sol.condition > opts.max_condition {
        return Err(BetheError::SingularSystem(sol.condition));
    }
    let mut trail = Vec::new();
    let mut conds = Vec::new();
    let mut reps;
    loop {
        conds.push(sol.condition);
        let roots = q_roots(&sol)?;
        reps = symmetrize_pairs(&roots, eta)?;
        let full: Vec<ComplexPoint> = reps.iter().copied().chain(reps.iter().map(|&l| -l - eta)).collect();
        let moved = if trail.is_empty() { f64::INFINITY } else { max_movement(&sol.nodes, &full) };
        trail.push(moved);
        if moved <= opts.movement_tol {
            break;
        }
        if trail.len() >= opts.max_iterations.max(1) {
            return Err(BetheError::NoRootConvergence { trail });
        }
        let samples = sample_lambda(source, &full, Normalization::DividedByU2n)?;
        sol = solve_tq_system(&samples, mode)?;
    }
    sort_points(&mut reps);
    let mut set = BetheRootSet::from_representatives(params.clone(), mode, reps);
    set.iterations = trail.len();
    set.movement = trail;
    set.condition = conds;
    classify_bethe_roots(&mut set);
    Ok(set)
}

/// One-shot variant: a single linear solve on the given samples.
pub fn bethe_roots_from_samples(samples: &SpectralSamples) -> BetheResult<BetheRootSet> {
    let params = samples.params.clone();
    check_homogeneous_sites(&params)?;
    let mode = mode_for(&params);
    let sol = solve_tq_system(samples, mode)?;
    let roots = q_roots(&sol)?;
    let mut reps = symmetrize_pairs(&roots, params.eta)?;
    sort_points(&mut reps);
    let mut set = BetheRootSet::from_representatives(params, mode, reps);
    set.iterations = 1;
    set.condition = vec![sol.condition];
    classify_bethe_roots(&mut set);
    Ok(set)
}

/// `ε_j = |Λ_ref(λ_j) - F'(λ_j)/Q'(λ_j)| / |Λ_ref(λ_j)|` over all roots of `Q`.
pub fn verify_tq_at_roots<F>(set: &BetheRootSet, lambda_ref: F) -> BetheResult<Vec<f64>>
where
    F: Fn(ComplexPoint) -> ComplexPoint,
{
    let eta = set.params.eta;
    let deg = 2 * set.roots.len();
    set.full_roots
        .iter()
        .map(|&l| {
            let u = Dual::var(l);
            let q = q_dual(&set.roots, eta, u);
            let scale = l.norm().max(1.0).powi(deg as i32 - 1);
            if q.d.norm() < 1e-12 * scale {
                return Err(BetheError::MultipleRoot(l));
            }
            let (a, d, c) = tq_terms(&set.params, set.mode, u);
            let f = a * q_dual(&set.roots, eta, u - Dual::re(eta)) + d * q_dual(&set.roots, eta, u + Dual::re(eta)) + c;
            let bethe = f.d / q.d;
            let r = lambda_ref(l);
            Ok((r - bethe).norm() / r.norm())
        })
        .collect()
}

/// `G(λ_j) = (A + C) / (-B)` at every root of `Q`; equal to 1 when the Bethe
/// equations hold.
pub fn verify_bae_ratio(set: &BetheRootSet) -> BetheResult<Vec<ComplexPoint>> {
    let params = &set.params;
    let (eta, p, q) = (params.eta, params.p, params.q);
    let s = match set.mode {
        BetheMode::Homogeneous => 1.0,
        BetheMode::Inhomogeneous => params.s(),
    };
    let n = params.n as i32;
    set.full_roots
        .iter()
        .map(|&l| {
            let den = (l - p + eta) * (s * (l + eta) - q);
            let qm = set.q(l - eta);
            if l.norm() == 0.0 || den.norm() == 0.0 || qm.norm() == 0.0 {
                return Err(BetheError::PoleInRatio(l));
            }
            let a = ((l + eta) / l).powi(2 * n + 1) * (l + p) * (s * l + q) / den;
            let b = set.q(l + eta) / qm;
            let c = (1.0 - s) * (2.0 * l + eta) * (l + eta).powi(2 * n + 1) / (den * qm);
            if b.norm() == 0.0 {
                return Err(BetheError::PoleInRatio(l));
            }
            Ok((a + c) / (-b))
        })
        .collect()
}

/// False where a root sits on a zero of a boundary factor of `A` or `D`
/// (the exact p- and q̄-strings); `G` is 0/0 there and carries no information.
pub fn bae_ratio_applicable(set: &BetheRootSet) -> Vec<bool> {
    let params = &set.params;
    let (eta, p, q) = (params.eta, params.p, params.q);
    let s = match set.mode {
        BetheMode::Homogeneous => 1.0,
        BetheMode::Inhomogeneous => params.s(),
    };
    set.full_roots
        .iter()
        .map(|&l| {
            let scale = 1e-8 * (1.0 + l.norm());
            let zeros = [(l + p).norm(), (l - p + eta).norm(), (s * l + q).norm() / s, (s * (l + eta) - q).norm() / s];
            zeros.iter().all(|&d| d > scale)
        })
        .collect()
}

/// `E = sum 2 eta^2 / (λ (λ + eta)) + eta/p + eta s/q + N - 1` over
/// representatives. Returns the real energy and the imaginary remainder.
pub fn energy_from_bethe(set: &BetheRootSet) -> BetheResult<(f64, f64)> {
    let params = &set.params;
    let eta = params.eta;
    if params.p == 0.0 || params.q == 0.0 {
        return Err(BetheError::InvalidParams("p and q must be nonzero".into()));
    }
    let s = match set.mode {
        BetheMode::Homogeneous => 1.0,
        BetheMode::Inhomogeneous => params.s(),
    };
    let mut sum = Complex64::new(0.0, 0.0);
    for &l in &set.roots {
        let den = l * (l + eta);
        if den.norm() < 1e-300 {
            return Err(BetheError::RootAtPole(l));
        }
        sum += 2.0 * eta * eta / den;
    }
    let e = sum.re + eta / params.p + eta * s / params.q + params.n as f64 - 1.0;
    Ok((e, sum.im))
}

/// Tags every root of `Q` and counts paired-line pairs.
pub fn classify_bethe_roots(set: &mut BetheRootSet) {
    let (tags, pairs) = tag_bethe_roots(&set.full_roots, &set.params);
    set.tags = tags;
    set.paired_line_pairs = pairs;
}

/// Position-based tags for a full root set and the paired-line pair count.
pub fn tag_bethe_roots(roots: &[ComplexPoint], params: &ModelParams) -> (Vec<BetheTag>, usize) {
    let eta = params.eta;
    let tol = CLASSIFY_TOL * eta;
    let strings: Vec<f64> = [params.p, params.q_bar()]
        .iter()
        .flat_map(|&x| [(x - eta / 2.0) - eta / 2.0, -(x - eta / 2.0) - eta / 2.0])
        .collect();
    let mut tags: Vec<BetheTag> = roots
        .iter()
        .map(|z| {
            let real = z.im.abs() < REAL_TOL;
            if (z.re + eta / 2.0).abs() < tol && !real {
                BetheTag::RegularCentral
            } else if real && strings.iter().any(|&s| (z.re - s).abs() < tol) {
                BetheTag::RegularBoundaryString
            } else if real {
                BetheTag::Line
            } else {
                BetheTag::Arc
            }
        })
        .collect();
    let pairs = mark_paired_lines(roots, &mut tags, params.n, eta);
    (tags, pairs)
}

/// Marks paired-line pairs and returns their number.
///
/// Central roots beyond the `N` regular slots are taken from the outside in.
/// Off-central conjugate pairs count when they lie inside the span of the
/// line roots; with no line roots left, pairs beyond `ARC_FRACTION` of the
/// largest offset from the central line are arcs.
fn mark_paired_lines(roots: &[ComplexPoint], tags: &mut [BetheTag], n: usize, eta: f64) -> usize {
    let tol = CLASSIFY_TOL * eta;
    let offset = |z: ComplexPoint| (z.re + eta / 2.0).abs();
    let mut pairs = 0;

    let regular = tags
        .iter()
        .filter(|t| matches!(t, BetheTag::RegularCentral | BetheTag::RegularBoundaryString))
        .count();
    if regular > n {
        let mut upper: Vec<usize> = (0..roots.len())
            .filter(|&i| tags[i] == BetheTag::RegularCentral && roots[i].im > 0.0)
            .collect();
        upper.sort_by(|&a, &b| roots[b].im.total_cmp(&roots[a].im));
        for &i in upper.iter().take((regular - n) / 2) {
            if tag_with_conjugate(roots, tags, i, BetheTag::RegularCentral, tol) {
                pairs += 1;
            }
        }
    }

    let upper: Vec<usize> = (0..roots.len())
        .filter(|&i| tags[i] == BetheTag::Arc && roots[i].im > REAL_TOL)
        .collect();
    let reach = roots
        .iter()
        .zip(tags.iter())
        .filter(|(_, t)| **t == BetheTag::Line)
        .map(|(z, _)| offset(*z))
        .fold(f64::NEG_INFINITY, f64::max);
    let limit = if reach.is_finite() {
        reach
    } else {
        ARC_FRACTION * upper.iter().map(|&i| offset(roots[i])).fold(f64::NEG_INFINITY, f64::max)
    };
    for i in upper {
        if offset(roots[i]) < limit && tag_with_conjugate(roots, tags, i, BetheTag::Arc, tol) {
            pairs += 1;
        }
    }
    pairs
}

fn tag_with_conjugate(
    roots: &[ComplexPoint],
    tags: &mut [BetheTag],
    i: usize,
    from: BetheTag,
    tol: f64,
) -> bool {
    let target = roots[i].conj();
    let Some(j) = (0..roots.len()).find(|&j| j != i && tags[j] == from && (roots[j] - target).norm() < tol) else {
        return false;
    };
    tags[i] = BetheTag::PairedLine;
    tags[j] = BetheTag::PairedLine;
    true
}

/// Largest distance from the homogeneous `Q` roots (with `q' = q̄`, `xi = 0`)
/// to the nearest root of an inhomogeneous set.
pub fn central_root_distance(inhomogeneous: &BetheRootSet, homogeneous: &BetheRootSet) -> f64 {
    homogeneous
        .full_roots
        .iter()
        .map(|h| {
            inhomogeneous
                .full_roots
                .iter()
                .map(|z| (z - h).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// One entry of a U(1)-restoration scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationPoint {
    pub p: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationReport {
    pub points: Vec<RestorationPoint>,
    /// Distance at the largest `|p|`.
    pub final_distance: f64,
    /// Distances shrink along the sequence.
    pub monotone: bool,
}

/// Compares inhomogeneous roots with the U(1) solution of the effective
/// chain `(p, q̄, xi = 0)` along a sequence of growing `|p|`. The closures
/// supply root sets for a parameter set.
pub fn u1_restoration_check<I, H>(sequence: &[ModelParams], mut inhomogeneous: I, mut homogeneous: H) -> BetheResult<RestorationReport>
where
    I: FnMut(&ModelParams) -> BetheResult<BetheRootSet>,
    H: FnMut(&ModelParams) -> BetheResult<BetheRootSet>,
{
    let mut points = Vec::with_capacity(sequence.len());
    for params in sequence {
        let inh = inhomogeneous(params)?;
        let mut reduced = params.clone();
        reduced.q = params.q_bar();
        reduced.xi = 0.0;
        let hom = homogeneous(&reduced)?;
        points.push(RestorationPoint {
            p: params.p,
            distance: central_root_distance(&inh, &hom),
        });
    }
    let monotone = points.windows(2).all(|w| w[1].distance < w[0].distance);
    Ok(RestorationReport {
        final_distance: points.last().map(|p| p.distance).unwrap_or(f64::NAN),
        points,
        monotone,
    })
}

/// JSON export document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetheExport {
    pub params: ModelParams,
    pub mode: BetheMode,
    pub roots: Vec<ComplexPoint>,
    pub tags: Vec<BetheTag>,
    pub pair_count: usize,
    pub epsilons: Vec<f64>,
    #[serde(rename = "G_values")]
    pub g_values: Vec<ComplexPoint>,
    /// Whether `G` is meaningful at each root; see [`bae_ratio_applicable`].
    pub ratio_checked: Vec<bool>,
    pub census: BetheCensus,
    pub energy: f64,
}

/// Number of roots of `Q` in each of the four classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetheCensus {
    pub regular: usize,
    pub line: usize,
    pub arc: usize,
    pub paired_line: usize,
}

pub fn bethe_census(tags: &[BetheTag]) -> BetheCensus {
    let mut c = BetheCensus::default();
    for t in tags {
        match t {
            BetheTag::RegularCentral | BetheTag::RegularBoundaryString => c.regular += 1,
            BetheTag::Line => c.line += 1,
            BetheTag::Arc => c.arc += 1,
            BetheTag::PairedLine => c.paired_line += 1,
        }
    }
    c
}

/// Export with verification against `lambda_ref`.
pub fn export_bethe_roots<F>(set: &BetheRootSet, lambda_ref: F) -> BetheResult<BetheExport>
where
    F: Fn(ComplexPoint) -> ComplexPoint,
{
    Ok(BetheExport {
        params: set.params.clone(),
        mode: set.mode,
        roots: set.full_roots.clone(),
        tags: set.tags.clone(),
        pair_count: set.paired_line_pairs,
        epsilons: verify_tq_at_roots(set, lambda_ref)?,
        g_values: verify_bae_ratio(set)?,
        ratio_checked: bae_ratio_applicable(set),
        census: bethe_census(&set.tags),
        energy: energy_from_bethe(set)?.0,
    })
}

/// One row per root of `Q`: `re,im,tag,epsilon,G_re,G_im,ratio_checked`.
pub fn bethe_roots_csv(export: &BetheExport) -> String {
    let mut out = String::from("re,im,tag,epsilon,G_re,G_im,ratio_checked\n");
    for (k, z) in export.roots.iter().enumerate() {
        let tag = export.tags.get(k).map(|t| t.to_string()).unwrap_or_default();
        let eps = export.epsilons.get(k).map(|e| format!("{e:e}")).unwrap_or_default();
        let (gr, gi) = export
            .g_values
            .get(k)
            .map(|g| (format!("{:.17e}", g.re), format!("{:.17e}", g.im)))
            .unwrap_or_default();
        let checked = export.ratio_checked.get(k).map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!("{:.17e},{:.17e},{tag},{eps},{gr},{gi},{checked}\n", z.re, z.im));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexPoint {
        Complex64::new(re, im)
    }

    #[test]
    fn quantum_number_checks() {
        let params = ModelParams::new(4, 1.0, 0.7, 0.6, 0.0).unwrap();
        assert!(matches!(solve_log_bae(&params, 2, &[2.0, 1.0]), Err(BetheError::NonMonotoneQuantumNumbers)));
        let twisted = ModelParams::new(4, 1.0, 0.7, 0.6, 1.0).unwrap();
        assert!(solve_log_bae(&twisted, 2, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn log_bae_residual_small() {
        let params = ModelParams::new(4, 1.0, 0.7, 0.6, 0.0).unwrap();
        let numbers = ground_state_quantum_numbers(2);
        let mu = solve_log_bae(&params, 2, &numbers).unwrap();
        let (f, _) = log_bae_residual(&mu, &params, &numbers);
        assert!(f.amax() <= 1e-13);
        assert!(mu[0] < mu[1]);
    }

    #[test]
    fn jacobian_matches_differences() {
        let params = ModelParams::new(6, 1.0, 0.9, 1.3, 0.0).unwrap();
        let numbers = [1.0, 2.0, 3.0];
        let mu = [0.2, 0.7, 1.9];
        let (_, jac) = log_bae_residual(&mu, &params, &numbers);
        let h = 1e-6;
        for k in 0..3 {
            let (mut m1, mut m2) = (mu, mu);
            m1[k] -= h;
            m2[k] += h;
            let (f1, _) = log_bae_residual(&m1, &params, &numbers);
            let (f2, _) = log_bae_residual(&m2, &params, &numbers);
            for j in 0..3 {
                let fd = (f2[j] - f1[j]) / (2.0 * h);
                assert!((fd - jac[(j, k)]).abs() < 1e-5, "{j} {k} {fd} {}", jac[(j, k)]);
            }
        }
    }

    #[test]
    fn dual_arithmetic() {
        let u = Dual::var(c(0.3, 0.4));
        let f = (u * u + Dual::re(1.0)) / (u - Dual::re(2.0));
        let fd = {
            let x = c(0.3, 0.4);
            (2.0 * x * (x - 2.0) - (x * x + 1.0)) / ((x - 2.0) * (x - 2.0))
        };
        assert!((f.d - fd).norm() < 1e-14);
        assert!((u.powi(3).d - 3.0 * c(0.3, 0.4).powi(2)).norm() < 1e-14);
    }

    #[test]
    fn third_term_vanishes_without_twist() {
        let params = ModelParams::new(4, 1.0, 0.7, 0.6, 0.0).unwrap();
        let (_, _, cc) = tq_terms(&params, BetheMode::Inhomogeneous, Dual::var(c(0.3, 0.1)));
        assert_eq!(cc.v, c(0.0, 0.0));
    }

    #[test]
    fn root_at_infinity_contributes_nothing() {
        let params = ModelParams::new(4, 1.0, 0.7, 0.6, 0.0).unwrap();
        let a = BetheRootSet::from_representatives(params.clone(), BetheMode::Homogeneous, vec![c(-0.5, 0.3)]);
        let b = BetheRootSet::from_representatives(params, BetheMode::Homogeneous, vec![c(-0.5, 0.3), c(1e9, 0.0)]);
        let (ea, _) = energy_from_bethe(&a).unwrap();
        let (eb, _) = energy_from_bethe(&b).unwrap();
        assert!((ea - eb).abs() < 1e-15);
    }

    #[test]
    fn lambda_at_a_root_of_q_is_finite() {
        let params = ModelParams::new(6, 1.0, -0.6, -0.3, 1.2).unwrap();
        let ex = crate::groundstate::exact_ground_state_for(&params).unwrap();
        let src = crate::spectral::ExactLambda::new(params, &ex.state).unwrap();
        let set = solve_inhomogeneous_bethe(&src, &BetheOptions::default()).unwrap();
        for &l in set.full_roots.iter().chain([c(-0.5, 0.0)].iter()) {
            let got = lambda_from_bethe(&set, l).unwrap();
            let want = src.lambda(l).unwrap();
            assert!((got - want).norm() <= 1e-9 * (1.0 + want.norm()), "{l}: {got} vs {want}");
        }
    }
}
