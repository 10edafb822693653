//! Complex-arithmetic foundation shared by every pipeline stage.
//!
//! Polynomials of degree `2N + 2` with `N` in the hundreds overflow both the
//! monomial coefficient space and ordinary `f64` magnitudes, so everything
//! here works in nodal (Lagrange) form and carries magnitudes as logarithms
//! ([`LogComplex`]) until the caller asks for a plain value.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

/// A point of the complex spectral plane.
pub type ComplexPoint = Complex64;

/// Minimum admissible distance between two interpolation nodes.
pub const MIN_NODE_SEPARATION: f64 = 1e-13;

/// Largest natural log that still converts to a finite `f64`.
const LN_F64_MAX: f64 = 709.78;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("non-finite complex value {0}")]
    NonFinite(ComplexPoint),

    #[error("interpolation nodes {i} and {j} coincide (|x_i - x_j| = {separation:e})")]
    DuplicateNodes { i: usize, j: usize, separation: f64 },

    #[error("node and value lists differ in length ({nodes} vs {values})")]
    LengthMismatch { nodes: usize, values: usize },

    #[error("polynomial value overflows f64 (ln|P| = {ln_abs:.1}); use normalized samples")]
    Overflow { ln_abs: f64 },

    #[error("{given} initial guesses supplied for a degree-{degree} polynomial")]
    GuessCount { degree: usize, given: usize },

    #[error("initial guesses {i} and {j} coincide")]
    DegenerateGuesses { i: usize, j: usize },

    #[error("root iteration did not converge after {sweeps} sweeps (max step {max_step:e})")]
    NoConvergence {
        roots: Vec<ComplexPoint>,
        sweeps: usize,
        max_step: f64,
    },

    #[error("root {root} has no partner -z - eta within {tol:e}")]
    UnpairableRoot { root: ComplexPoint, tol: f64 },
}

pub type AlgebraResult<T> = Result<T, AlgebraError>;

pub fn ensure_finite(z: ComplexPoint) -> AlgebraResult<ComplexPoint> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(AlgebraError::NonFinite(z))
    }
}

/// A complex number stored as `exp(ln_abs) * phase` with `|phase| = 1`.
///
/// Zero is represented by `ln_abs = -inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogComplex {
    pub ln_abs: f64,
    pub phase: ComplexPoint,
}

impl LogComplex {
    pub const ZERO: LogComplex = LogComplex {
        ln_abs: f64::NEG_INFINITY,
        phase: Complex64 { re: 1.0, im: 0.0 },
    };

    pub const ONE: LogComplex = LogComplex {
        ln_abs: 0.0,
        phase: Complex64 { re: 1.0, im: 0.0 },
    };

    pub fn from_complex(z: ComplexPoint) -> Self {
        let r = z.norm();
        if r == 0.0 {
            Self::ZERO
        } else {
            LogComplex {
                ln_abs: r.ln(),
                phase: z / r,
            }
        }
    }

    pub fn from_parts(ln_abs: f64, phase: ComplexPoint) -> Self {
        LogComplex { ln_abs, phase }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    /// Converts back to an ordinary complex number, failing on overflow.
    pub fn to_complex(&self) -> AlgebraResult<ComplexPoint> {
        if self.is_zero() {
            return Ok(ComplexPoint::new(0.0, 0.0));
        }
        if self.ln_abs > LN_F64_MAX {
            return Err(AlgebraError::Overflow {
                ln_abs: self.ln_abs,
            });
        }
        Ok(self.phase * self.ln_abs.exp())
    }

    /// Value scaled by `exp(-shift)`; underflows quietly to zero.
    pub fn scaled(&self, shift: f64) -> ComplexPoint {
        if self.is_zero() {
            ComplexPoint::new(0.0, 0.0)
        } else {
            self.phase * (self.ln_abs - shift).exp()
        }
    }

    pub fn arg(&self) -> f64 {
        self.phase.arg()
    }

    pub fn mul(self, other: LogComplex) -> LogComplex {
        LogComplex {
            ln_abs: self.ln_abs + other.ln_abs,
            phase: self.phase * other.phase,
        }
    }

    pub fn div(self, other: LogComplex) -> LogComplex {
        LogComplex {
            ln_abs: self.ln_abs - other.ln_abs,
            phase: self.phase * other.phase.conj(),
        }
    }

    pub fn mul_complex(self, z: ComplexPoint) -> LogComplex {
        self.mul(LogComplex::from_complex(z))
    }

    pub fn div_complex(self, z: ComplexPoint) -> LogComplex {
        self.div(LogComplex::from_complex(z))
    }

    pub fn powi(self, n: i32) -> LogComplex {
        if self.is_zero() {
            return if n == 0 { Self::ONE } else { Self::ZERO };
        }
        LogComplex {
            ln_abs: self.ln_abs * n as f64,
            phase: self.phase.powi(n),
        }
    }

    pub fn neg(self) -> LogComplex {
        LogComplex {
            ln_abs: self.ln_abs,
            phase: -self.phase,
        }
    }
}

/// Sums log-form terms without leaving the representable range.
pub fn sum_log<I: IntoIterator<Item = LogComplex>>(terms: I) -> LogComplex {
    let terms: Vec<LogComplex> = terms.into_iter().collect();
    let shift = terms
        .iter()
        .map(|t| t.ln_abs)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return LogComplex::ZERO;
    }
    let s: ComplexPoint = terms.iter().map(|t| t.scaled(shift)).sum();
    let mut out = LogComplex::from_complex(s);
    out.ln_abs += shift;
    out
}

/// Product `prod_k (u - x_k)` in log form.
pub fn node_product(u: ComplexPoint, nodes: &[ComplexPoint]) -> LogComplex {
    let mut ln_abs = 0.0;
    let mut phase = ComplexPoint::new(1.0, 0.0);
    for &x in nodes {
        let d = u - x;
        let r = d.norm();
        if r == 0.0 {
            return LogComplex::ZERO;
        }
        ln_abs += r.ln();
        phase *= d / r;
        // keep |phase| = 1 against drift
        phase /= phase.norm();
    }
    LogComplex { ln_abs, phase }
}

/// Anything whose Newton correction `P(u) / P'(u)` can be evaluated.
pub trait RootTarget {
    fn degree(&self) -> usize;
    fn newton_ratio(&self, u: ComplexPoint) -> ComplexPoint;
}

/// A polynomial held by its values on distinct nodes, optionally with a known
/// leading coefficient.
///
/// With a leading coefficient `c` and `n` nodes the polynomial has degree `n`:
///
/// ```text
/// P(u) = c * prod_k (u - x_k) + sum_j P(x_j) * l_j(u)
/// ```
///
/// Evaluation uses the first barycentric form, with every product carried in
/// log-magnitude/phase form.
#[derive(Clone, Debug)]
pub struct LagrangePolynomial {
    nodes: Vec<ComplexPoint>,
    values: Vec<LogComplex>,
    // plain values when supplied, returned verbatim at the nodes
    raw: Option<Vec<ComplexPoint>>,
    leading: Option<ComplexPoint>,
    // w_j = 1 / prod_{k != j} (x_j - x_k)
    weights: Vec<LogComplex>,
    // v_j * w_j
    scaled: Vec<LogComplex>,
}

impl LagrangePolynomial {
    pub fn new(
        nodes: Vec<ComplexPoint>,
        values: Vec<ComplexPoint>,
        leading: Option<ComplexPoint>,
    ) -> AlgebraResult<Self> {
        for &v in &values {
            ensure_finite(v)?;
        }
        let logs = values.iter().map(|&v| LogComplex::from_complex(v)).collect();
        let mut poly = Self::from_log_values(nodes, logs, leading)?;
        poly.raw = Some(values);
        Ok(poly)
    }

    pub fn from_log_values(
        nodes: Vec<ComplexPoint>,
        values: Vec<LogComplex>,
        leading: Option<ComplexPoint>,
    ) -> AlgebraResult<Self> {
        if nodes.len() != values.len() {
            return Err(AlgebraError::LengthMismatch {
                nodes: nodes.len(),
                values: values.len(),
            });
        }
        for &x in &nodes {
            ensure_finite(x)?;
        }
        if let Some(c) = leading {
            ensure_finite(c)?;
        }
        check_distinct(&nodes)?;
        let weights: Vec<LogComplex> = (0..nodes.len())
            .map(|j| {
                let others: Vec<ComplexPoint> = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, &x)| x)
                    .collect();
                LogComplex::ONE.div(node_product(nodes[j], &others))
            })
            .collect();
        let scaled = values
            .iter()
            .zip(&weights)
            .map(|(v, w)| v.mul(*w))
            .collect();
        Ok(LagrangePolynomial {
            nodes,
            values,
            raw: None,
            leading,
            weights,
            scaled,
        })
    }

    pub fn nodes(&self) -> &[ComplexPoint] {
        &self.nodes
    }

    pub fn log_values(&self) -> &[LogComplex] {
        &self.values
    }

    pub fn leading_coefficient(&self) -> Option<ComplexPoint> {
        self.leading
    }

    pub fn degree(&self) -> usize {
        match self.leading {
            Some(_) => self.nodes.len(),
            None => self.nodes.len().saturating_sub(1),
        }
    }

    fn node_index(&self, u: ComplexPoint) -> Option<usize> {
        self.nodes.iter().position(|&x| x == u)
    }

    /// Terms of `g(u) = c + sum_j c_j / (u - x_j)`; `P = omega * g`.
    fn g_terms(&self, u: ComplexPoint) -> Vec<LogComplex> {
        let mut terms: Vec<LogComplex> = self
            .scaled
            .iter()
            .zip(&self.nodes)
            .map(|(c, &x)| c.div_complex(u - x))
            .collect();
        if let Some(c) = self.leading {
            terms.push(LogComplex::from_complex(c));
        }
        terms
    }

    pub fn eval_log(&self, u: ComplexPoint) -> LogComplex {
        if let Some(j) = self.node_index(u) {
            return self.values[j];
        }
        let omega = node_product(u, &self.nodes);
        sum_log(self.g_terms(u)).mul(omega)
    }

    pub fn eval(&self, u: ComplexPoint) -> AlgebraResult<ComplexPoint> {
        ensure_finite(u)?;
        if let (Some(raw), Some(j)) = (&self.raw, self.node_index(u)) {
            return Ok(raw[j]);
        }
        self.eval_log(u).to_complex()
    }

    /// `P(u)` and `P'(u)` in log form.
    pub fn eval_with_derivative_log(&self, u: ComplexPoint) -> (LogComplex, LogComplex) {
        if let Some(j) = self.node_index(u) {
            return (self.values[j], self.derivative_at_node(j));
        }
        let omega = node_product(u, &self.nodes);
        let g = sum_log(self.g_terms(u));
        let inv_sum: ComplexPoint = self.nodes.iter().map(|&x| (u - x).inv()).sum();
        // g' = -sum_j c_j / (u - x_j)^2
        let gp = sum_log(
            self.scaled
                .iter()
                .zip(&self.nodes)
                .map(|(c, &x)| c.div_complex((u - x) * (u - x)).neg()),
        );
        let dp = sum_log([g.mul_complex(inv_sum), gp]).mul(omega);
        (g.mul(omega), dp)
    }

    fn derivative_at_node(&self, j: usize) -> LogComplex {
        let xj = self.nodes[j];
        let s: ComplexPoint = self
            .nodes
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &x)| (xj - x).inv())
            .sum();
        let mut inner: Vec<LogComplex> = self
            .scaled
            .iter()
            .zip(&self.nodes)
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, (c, &x))| c.div_complex(xj - x))
            .collect();
        if let Some(c) = self.leading {
            inner.push(LogComplex::from_complex(c));
        }
        let tail = sum_log(inner).div(self.weights[j]);
        sum_log([self.values[j].mul_complex(s), tail])
    }

    pub fn derivative(&self, u: ComplexPoint) -> AlgebraResult<ComplexPoint> {
        self.eval_with_derivative_log(u).1.to_complex()
    }
}

impl RootTarget for LagrangePolynomial {
    fn degree(&self) -> usize {
        LagrangePolynomial::degree(self)
    }

    fn newton_ratio(&self, u: ComplexPoint) -> ComplexPoint {
        let (p, dp) = self.eval_with_derivative_log(u);
        if p.is_zero() {
            return ComplexPoint::new(0.0, 0.0);
        }
        p.div(dp).to_complex().unwrap_or(ComplexPoint::new(f64::INFINITY, 0.0))
    }
}

fn check_distinct(nodes: &[ComplexPoint]) -> AlgebraResult<()> {
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let separation = (nodes[i] - nodes[j]).norm();
            if separation <= MIN_NODE_SEPARATION {
                return Err(AlgebraError::DuplicateNodes { i, j, separation });
            }
        }
    }
    Ok(())
}

/// Evaluates the polynomial at `u`; thin wrapper matching the other free
/// operations of this module.
pub fn lagrange_eval(poly: &LagrangePolynomial, u: ComplexPoint) -> AlgebraResult<ComplexPoint> {
    poly.eval(u)
}

/// Root-finder settings. Defaults: relative step tolerance `1e-13`, 500 sweeps.
#[derive(Clone, Copy, Debug)]
pub struct RootOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tolerance: 1e-13,
            max_sweeps: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RootSolve {
    pub roots: Vec<ComplexPoint>,
    pub sweeps: usize,
    /// Largest relative Newton-Aberth correction of the final sweep.
    pub max_step: f64,
    /// Per-root `|P/P'|` at the returned roots.
    pub residuals: Vec<f64>,
}

/// Finds all roots simultaneously with the Aberth-Ehrlich iteration.
pub fn find_roots<P: RootTarget + ?Sized>(
    target: &P,
    degree: usize,
    guesses: &[ComplexPoint],
) -> AlgebraResult<RootSolve> {
    find_roots_with(target, degree, guesses, RootOptions::default())
}

pub fn find_roots_with<P: RootTarget + ?Sized>(
    target: &P,
    degree: usize,
    guesses: &[ComplexPoint],
    opts: RootOptions,
) -> AlgebraResult<RootSolve> {
    if degree == 0 || guesses.len() != degree {
        return Err(AlgebraError::GuessCount {
            degree,
            given: guesses.len(),
        });
    }
    for &g in guesses {
        ensure_finite(g)?;
    }
    for i in 0..guesses.len() {
        for j in i + 1..guesses.len() {
            if guesses[i] == guesses[j] {
                return Err(AlgebraError::DegenerateGuesses { i, j });
            }
        }
    }

    let mut z = guesses.to_vec();
    let mut max_step = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        max_step = 0.0;
        for k in 0..z.len() {
            let ratio = target.newton_ratio(z[k]);
            let repulsion: ComplexPoint = (0..z.len())
                .filter(|&m| m != k)
                .map(|m| (z[k] - z[m]).inv())
                .sum();
            let mut step = ratio / (ComplexPoint::new(1.0, 0.0) - ratio * repulsion);
            if !(step.re.is_finite() && step.im.is_finite()) {
                // fall back to a plain Newton step
                step = ratio;
            }
            if !(step.re.is_finite() && step.im.is_finite()) {
                continue;
            }
            z[k] -= step;
            max_step = f64::max(max_step, step.norm() / (1.0 + z[k].norm()));
        }
        if max_step <= opts.tolerance {
            let residuals = z.iter().map(|&r| target.newton_ratio(r).norm()).collect();
            return Ok(RootSolve {
                roots: z,
                sweeps: sweep,
                max_step,
                residuals,
            });
        }
    }
    Err(AlgebraError::NoConvergence {
        roots: z,
        sweeps: opts.max_sweeps,
        max_step,
    })
}

/// Like [`find_roots`], but accepts an unconverged iteration whose last
/// relative step fell below `floor` (values carrying rounding noise).
pub fn find_roots_to_floor<P: RootTarget + ?Sized>(
    target: &P,
    degree: usize,
    guesses: &[ComplexPoint],
    floor: f64,
) -> AlgebraResult<Vec<ComplexPoint>> {
    match find_roots(target, degree, guesses) {
        Ok(s) => Ok(s.roots),
        Err(AlgebraError::NoConvergence { roots, max_step, .. }) if max_step <= floor => Ok(roots),
        Err(e) => Err(e),
    }
}

/// Raw principal arguments together with their unwrapped continuation.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSequence {
    pub raw: Vec<f64>,
    pub unwrapped: Vec<f64>,
}

impl PhaseSequence {
    /// Net unwrapped change from the first to the last sample.
    pub fn net_change(&self) -> f64 {
        match (self.unwrapped.first(), self.unwrapped.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Shifts each phase by a multiple of `2π` so adjacent differences fall in
/// `(-π, π]`.
pub fn unwrap_phases(raw: &[f64]) -> PhaseSequence {
    let mut unwrapped = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    for (i, &phi) in raw.iter().enumerate() {
        if i > 0 {
            let mut d = phi + offset - unwrapped[i - 1];
            while d > PI {
                offset -= 2.0 * PI;
                d -= 2.0 * PI;
            }
            while d <= -PI {
                offset += 2.0 * PI;
                d += 2.0 * PI;
            }
        }
        unwrapped.push(phi + offset);
    }
    PhaseSequence {
        raw: raw.to_vec(),
        unwrapped,
    }
}

/// Default pairing tolerance for `z <-> -z - eta`.
pub const PAIR_TOLERANCE: f64 = 1e-6;

pub fn pair_roots(
    roots: &[ComplexPoint],
    eta: f64,
) -> AlgebraResult<Vec<(ComplexPoint, ComplexPoint)>> {
    pair_roots_with_tol(roots, eta, PAIR_TOLERANCE)
}

/// Greedy matching of roots into reflection pairs `(z, -z - eta)`.
///
/// Roots are visited in lexicographic `(re, im)` order; each takes the
/// nearest unmatched partner. A root on the fixed point `-eta/2` may pair with
/// itself when no other candidate is closer.
pub fn pair_roots_with_tol(
    roots: &[ComplexPoint],
    eta: f64,
    tol: f64,
) -> AlgebraResult<Vec<(ComplexPoint, ComplexPoint)>> {
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
    });
    let mut used = vec![false; sorted.len()];
    let mut pairs = Vec::with_capacity(sorted.len() / 2 + 1);
    for i in 0..sorted.len() {
        if used[i] {
            continue;
        }
        let z = sorted[i];
        let target = -z - eta;
        let best = (0..sorted.len())
            .filter(|&m| !used[m] && m != i)
            .map(|m| (m, (sorted[m] - target).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
        let self_dist = (z - target).norm();
        match best {
            Some((m, d)) if d <= tol && d <= self_dist.max(tol) => {
                used[i] = true;
                used[m] = true;
                pairs.push((z, sorted[m]));
            }
            _ if self_dist <= tol => {
                used[i] = true;
                pairs.push((z, z));
            }
            _ => return Err(AlgebraError::UnpairableRoot { root: z, tol }),
        }
    }
    Ok(pairs)
}
