//! Zero roots of Λ(u): iterative interpolation and root finding, contour
//! verification, constraint and energy checks, and pattern classification.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{find_roots_to_floor, pair_roots_with_tol, unwrap_phases, AlgebraError, ComplexPoint};
use crate::model::{scalar_a, ModelError, ModelParams};
use crate::spectral::{make_zero_nodes, reconstruct_lambda, sample_lambda, LambdaSource, Normalization, SpectralError, DEFAULT_NODE_EXPONENT};

/// Default start of the contour-offset ladder.
pub const LADDER_START: f64 = 1e-6;
/// Smallest offset tried by the ladder.
pub const LADDER_FLOOR: f64 = 1e-17;
/// Positional tolerance of the classifier, in units of eta.
pub const CLASSIFY_TOL: f64 = 1e-2;
/// Bulk strings drift off `Re z = eta/2` at small `N`; window in units of eta.
pub const BULK_TOL: f64 = 0.1;
/// `|Im z|` below this counts as real.
pub const REAL_TOL: f64 = 1e-8;
/// Stalled root iterations are accepted below this relative step.
pub const ROOT_STEP_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ZeroRootError {
    #[error("zero-root iteration did not converge; max movement per iteration {trail:?}")]
    NoConvergence { trail: Vec<f64> },

    #[error("contour point {0} hit a zero of the evaluator")]
    ZeroOnContour(ComplexPoint),

    #[error("no zero detected around {0} even at the ladder start")]
    NeverDetected(ComplexPoint),

    #[error("root {0} sits on a pole of the energy formula")]
    RootAtPole(ComplexPoint),

    #[error("zero pattern matches regions {0:?} equally well")]
    AmbiguousPattern(Vec<Region>),

    #[error("{0}")]
    Spectral(#[from] SpectralError),

    #[error("{0}")]
    Algebra(#[from] AlgebraError),

    #[error("{0}")]
    Model(#[from] ModelError),
}

pub type ZeroRootResult<T> = Result<T, ZeroRootError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroTag {
    BulkString,
    PBoundaryString,
    QBoundaryString,
    AdditionalZ0,
    AdditionalZx,
    Unclassified,
}

impl fmt::Display for ZeroTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ZeroTag::BulkString => "bulk_string",
            ZeroTag::PBoundaryString => "p_boundary_string",
            ZeroTag::QBoundaryString => "q_boundary_string",
            ZeroTag::AdditionalZ0 => "additional_z0",
            ZeroTag::AdditionalZx => "additional_zx",
            ZeroTag::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Region {
    pub const ALL: [Region; 6] = [Region::A, Region::B, Region::C, Region::D, Region::E, Region::F];

    /// Expected `(bulk, z0, zx, boundary strings)` counts among the N+1
    /// representatives.
    pub fn census(self, n: usize) -> [usize; 4] {
        let m = n.saturating_sub(2);
        match self {
            Region::A => [m, 1, 0, 2],
            Region::B => [m, 1, 1, 1],
            Region::C => [n, 1, 0, 0],
            Region::D => [m, 0, 1, 2],
            Region::E => [n, 0, 0, 1],
            Region::F => [n, 0, 1, 0],
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Five-point diamond contour around `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourProbe {
    pub center: ComplexPoint,
    pub delta: f64,
    pub points: [ComplexPoint; 5],
}

impl ContourProbe {
    pub fn new(center: ComplexPoint, delta: f64) -> Self {
        let d = delta;
        let i = Complex64::i();
        ContourProbe {
            center,
            delta,
            points: [center + i * d, center - d, center - i * d, center + d, center + i * d],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxModulusReport {
    pub center: ComplexPoint,
    pub radius: f64,
    pub center_abs: f64,
    pub boundary_min_abs: f64,
    pub passed: bool,
}

/// Per-root verification record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootVerification {
    pub root: ComplexPoint,
    pub max_modulus: MaxModulusReport,
    pub arg_count: i64,
    pub ladder_delta: Option<f64>,
}

impl RootVerification {
    pub fn passed(&self) -> bool {
        self.arg_count == 1 && self.max_modulus.passed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroRootSet {
    pub params: ModelParams,
    /// One representative per pair `{z, -z - eta}`.
    pub roots: Vec<ComplexPoint>,
    pub full_roots: Vec<ComplexPoint>,
    pub tags: Vec<ZeroTag>,
    pub region: Option<Region>,
    pub iterations: usize,
    /// Largest root movement of each iteration (the first is infinite).
    pub movement: Vec<f64>,
    pub verification: Vec<RootVerification>,
}

impl ZeroRootSet {
    /// Builds a set from representatives, filling in the reflected partners.
    pub fn from_representatives(params: ModelParams, reps: Vec<ComplexPoint>) -> Self {
        let eta = params.eta;
        let full_roots = reps.iter().copied().chain(reps.iter().map(|&z| -z - eta)).collect();
        let tags = vec![ZeroTag::Unclassified; reps.len()];
        ZeroRootSet {
            params,
            roots: reps,
            full_roots,
            tags,
            region: None,
            iterations: 0,
            movement: Vec::new(),
            verification: Vec::new(),
        }
    }

    pub fn verified(&self) -> bool {
        !self.verification.is_empty() && self.verification.iter().all(RootVerification::passed)
    }

    /// Λ(u) = 2 ∏ (u - z_j)(u + z_j + eta).
    pub fn lambda(&self, u: ComplexPoint) -> ComplexPoint {
        let eta = self.params.eta;
        self.roots.iter().fold(Complex64::new(2.0, 0.0), |acc, &z| acc * (u - z) * (u + z + eta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroRootOptions {
    pub node_exponent: f64,
    pub max_iterations: usize,
    /// Stop once roots move less than `movement_tol * (1 + |z|)`.
    pub movement_tol: f64,
    /// Contour offset for the argument-principle check.
    pub verify_delta: f64,
    /// Radius of the maximum-modulus circle.
    pub modulus_radius: f64,
    pub modulus_grid: usize,
    /// Also run the offset ladder for every root.
    pub ladder: bool,
    /// Skip the per-root checks when false; `verified()` then reports false.
    pub verify: bool,
}

impl Default for ZeroRootOptions {
    fn default() -> Self {
        ZeroRootOptions {
            node_exponent: DEFAULT_NODE_EXPONENT,
            max_iterations: 20,
            movement_tol: 1e-11,
            verify_delta: LADDER_START,
            modulus_radius: LADDER_START,
            modulus_grid: 64,
            ladder: false,
            verify: true,
        }
    }
}

/// The member of `{z, -z - eta}` right of `Re u = -eta/2`, or above the real
/// axis when both sit on that line.
pub fn canonical_representative(z: ComplexPoint, eta: f64) -> ComplexPoint {
    let w = z + eta / 2.0;
    let on_line = w.re.abs() <= 1e-9 * (1.0 + w.norm());
    if (on_line && w.im >= 0.0) || (!on_line && w.re > 0.0) {
        z
    } else {
        -z - eta
    }
}

/// Pairs the roots and replaces each pair by an exactly reflected one.
fn symmetrize(roots: &[ComplexPoint], eta: f64) -> ZeroRootResult<Vec<ComplexPoint>> {
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
        let (k, d) = old
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, &o)| (k, (z - o).norm() / (1.0 + z.norm())))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        if k == usize::MAX {
            return f64::INFINITY;
        }
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

fn source_eval(source: &dyn LambdaSource) -> impl Fn(ComplexPoint) -> ComplexPoint + Sync + '_ {
    move |u| source.lambda(u).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
}

/// Zero roots of Λ for the state behind `source`.
///
/// Samples Λ on the default node set, reconstructs it, finds its 2N+2 roots,
/// and repeats with the symmetrised roots as nodes until they stop moving.
/// Every representative is then checked against `source` directly.
pub fn solve_zero_roots(source: &dyn LambdaSource, opts: &ZeroRootOptions) -> ZeroRootResult<ZeroRootSet> {
    let params = source.params().clone();
    let (n, eta) = (params.n, params.eta);
    let mut nodes = make_zero_nodes(n, eta, opts.node_exponent)?;
    let mut trail = Vec::new();
    let mut reps: Vec<ComplexPoint> = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iterations.max(1) {
        let samples = sample_lambda(source, &nodes, Normalization::DividedByU2n)?;
        let poly = reconstruct_lambda(&samples)?;
        let roots = find_roots_to_floor(&poly, nodes.len(), &nodes, ROOT_STEP_FLOOR)?;
        reps = symmetrize(&roots, eta)?;
        let full: Vec<ComplexPoint> = reps.iter().copied().chain(reps.iter().map(|&z| -z - eta)).collect();
        let moved = if trail.is_empty() { f64::INFINITY } else { max_movement(&nodes, &full) };
        trail.push(moved);
        if moved <= opts.movement_tol {
            converged = true;
            break;
        }
        nodes = full;
    }
    if !converged {
        return Err(ZeroRootError::NoConvergence { trail });
    }
    reps.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut set = ZeroRootSet::from_representatives(params, reps);
    set.iterations = trail.len();
    set.movement = trail;
    if opts.verify {
        set.verification = verify_roots(source, &set.roots, opts)?;
    }
    let tags = tag_zero_roots(&set.roots, &set.params);
    set.tags = tags;
    set.region = region_from_tags(&set.tags, set.params.n).ok();
    Ok(set)
}

/// Argument-principle, maximum-modulus and optional ladder checks for every
/// root, run concurrently.
pub fn verify_roots(source: &dyn LambdaSource, roots: &[ComplexPoint], opts: &ZeroRootOptions) -> ZeroRootResult<Vec<RootVerification>> {
    let f = source_eval(source);
    roots
        .par_iter()
        .map(|&z| {
            let max_modulus = verify_max_modulus(&f, z, opts.modulus_radius, opts.modulus_grid);
            let arg_count = match verify_argument_principle(&f, z, opts.verify_delta) {
                Ok(k) => k,
                Err(ZeroRootError::ZeroOnContour(_)) => -1,
                Err(e) => return Err(e),
            };
            let ladder_delta = if opts.ladder { accuracy_ladder(&f, z).ok() } else { None };
            Ok(RootVerification {
                root: z,
                max_modulus,
                arg_count,
                ladder_delta,
            })
        })
        .collect()
}

/// Compares `|f(z)|` with the smallest `|f|` on a circle around `z`.
pub fn verify_max_modulus<F>(f: &F, z: ComplexPoint, radius: f64, grid: usize) -> MaxModulusReport
where
    F: Fn(ComplexPoint) -> ComplexPoint + ?Sized,
{
    let grid = grid.max(3);
    let center_abs = f(z).norm();
    let boundary_min_abs = (0..grid)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / grid as f64;
            f(z + Complex64::from_polar(radius, t)).norm()
        })
        .fold(f64::INFINITY, f64::min);
    MaxModulusReport {
        center: z,
        radius,
        center_abs,
        boundary_min_abs,
        passed: center_abs.is_finite() && boundary_min_abs > center_abs,
    }
}

/// Number of zeros enclosed by the diamond contour of offset `delta` around
/// `z`, from the unwrapped argument at its five points.
pub fn verify_argument_principle<F>(f: &F, z: ComplexPoint, delta: f64) -> ZeroRootResult<i64>
where
    F: Fn(ComplexPoint) -> ComplexPoint + ?Sized,
{
    let probe = ContourProbe::new(z, delta);
    let mut phases = Vec::with_capacity(5);
    for &u in &probe.points {
        let v = f(u);
        if !(v.norm() >= 1e-300) {
            return Err(ZeroRootError::ZeroOnContour(u));
        }
        phases.push(v.arg());
    }
    let seq = unwrap_phases(&phases);
    Ok((seq.net_change() / (2.0 * PI)).round() as i64)
}

/// Shrinks the contour offset by factors of ten from `LADDER_START` while a
/// zero is still enclosed; returns the last offset that detected one.
pub fn accuracy_ladder<F>(f: &F, z: ComplexPoint) -> ZeroRootResult<f64>
where
    F: Fn(ComplexPoint) -> ComplexPoint + ?Sized,
{
    let mut delta = LADDER_START;
    if !matches!(verify_argument_principle(f, z, delta), Ok(1)) {
        return Err(ZeroRootError::NeverDetected(z));
    }
    let mut last = delta;
    loop {
        delta /= 10.0;
        if delta < LADDER_FLOOR {
            return Ok(last);
        }
        match verify_argument_principle(f, z, delta) {
            Ok(1) => last = delta,
            _ => return Ok(last),
        }
    }
}

/// `E = -sum eta^2 / (z (z + eta)) - N` over representatives. Returns the
/// real energy and the imaginary remainder of the sum.
pub fn energy_from_zero_roots(set: &ZeroRootSet) -> ZeroRootResult<(f64, f64)> {
    let eta = set.params.eta;
    let mut sum = Complex64::new(0.0, 0.0);
    for &z in &set.roots {
        let den = z * (z + eta);
        if den.norm() < 1e-300 {
            return Err(ZeroRootError::RootAtPole(z));
        }
        sum += eta * eta / den;
    }
    Ok((-sum.re - set.params.n as f64, -sum.im))
}

/// Residuals of the constraints tying the zero roots to the boundary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `|prod (-z)(z + eta) - a(0)/2| / |a(0)/2|`.
    pub product: f64,
    /// Relative mismatch of the n-th derivative of `Λ(u)Λ(u-eta)` and
    /// `a(u)a(-u)` at 0, for n = 0, 1, ...; empty for inhomogeneous chains.
    pub derivatives: Vec<f64>,
}

impl ConstraintReport {
    pub fn max(&self) -> f64 {
        self.derivatives.iter().copied().fold(self.product, f64::max)
    }
}

/// Truncated power series in u.
#[derive(Clone, Debug)]
struct Series(Vec<Complex64>);

impl Series {
    fn constant(c: Complex64, order: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); order + 1];
        v[0] = c;
        Series(v)
    }

    /// Multiplies by `(a + b u)`.
    fn mul_linear(&mut self, a: Complex64, b: Complex64) {
        for k in (0..self.0.len()).rev() {
            let lower = if k > 0 { self.0[k - 1] } else { Complex64::new(0.0, 0.0) };
            self.0[k] = a * self.0[k] + b * lower;
        }
    }

    fn mul(&self, other: &Series) -> Series {
        let n = self.0.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n - i {
                out[i + j] += self.0[i] * other.0[j];
            }
        }
        Series(out)
    }

    fn reflect(&self) -> Series {
        Series(self.0.iter().enumerate().map(|(k, &c)| if k % 2 == 1 { -c } else { c }).collect())
    }
}

/// Product and derivative constraints at u = 0, with Taylor coefficients
/// computed exactly from the roots and from `a(u)`.
pub fn check_constraints(set: &ZeroRootSet) -> ZeroRootResult<ConstraintReport> {
    let params = &set.params;
    let eta = params.eta;
    let a0 = scalar_a(Complex64::new(0.0, 0.0), params)?;
    let prod: Complex64 = set.roots.iter().map(|&z| -z * (z + eta)).product();
    let half = a0 / 2.0;
    let product = (prod - half).norm() / half.norm();
    if !params.is_homogeneous() {
        return Ok(ConstraintReport {
            product,
            derivatives: Vec::new(),
        });
    }
    let order = params.n.saturating_sub(1).min(6);
    let one = Complex64::new(1.0, 0.0);
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut lam = Series::constant(c(2.0), order);
    let mut lam_shift = Series::constant(c(2.0), order);
    for &z in &set.roots {
        lam.mul_linear(-z, one);
        lam.mul_linear(z + eta, one);
        lam_shift.mul_linear(-eta - z, one);
        lam_shift.mul_linear(z, one);
    }
    let lhs = lam.mul(&lam_shift);
    // a(u) = 2 (u + eta) / (2u + eta) * (u + p)(s u + q)(u + eta)^{2N}
    let mut a = Series::constant(c(2.0), order);
    a.mul_linear(c(eta), one);
    a.mul_linear(c(params.p), one);
    a.mul_linear(c(params.q), c(params.s()));
    for _ in 0..2 * params.n {
        a.mul_linear(c(eta), one);
    }
    let geometric = Series((0..=order).map(|k| c((-2.0 / eta).powi(k as i32) / eta)).collect());
    let a = a.mul(&geometric);
    let rhs = a.mul(&a.reflect());
    let scale0 = rhs.0[0].norm();
    let derivatives = lhs
        .0
        .iter()
        .zip(&rhs.0)
        .map(|(l, r)| (l - r).norm() / r.norm().max(scale0))
        .collect();
    Ok(ConstraintReport { product, derivatives })
}

/// Tags representatives by position; see [`ZeroTag`].
pub fn tag_zero_roots(reps: &[ComplexPoint], params: &ModelParams) -> Vec<ZeroTag> {
    let eta = params.eta;
    let tol = CLASSIFY_TOL * eta;
    let (pa, qa) = (params.p.abs(), params.q_bar().abs());
    let is_bulk = |z: &ComplexPoint| (z.re - eta / 2.0).abs() < BULK_TOL * eta && z.im.abs() > REAL_TOL;
    let bulk_max = reps.iter().filter(|z| is_bulk(z)).map(|z| z.im.abs()).fold(0.0, f64::max);
    reps.iter()
        .map(|z| {
            let real = z.im.abs() < REAL_TOL;
            if is_bulk(z) {
                return ZeroTag::BulkString;
            }
            if real {
                // past eta/2 a root near |p| is the z_x that replaced the string
                if z.re > eta / 2.0 {
                    return ZeroTag::AdditionalZx;
                }
                let dp = (z.re - pa).abs();
                let dq = (z.re - qa).abs();
                if dp < tol || dq < tol {
                    return if dp <= dq { ZeroTag::PBoundaryString } else { ZeroTag::QBoundaryString };
                }
                return ZeroTag::Unclassified;
            }
            if (z.re + eta / 2.0).abs() < tol && z.im.abs() > bulk_max {
                return ZeroTag::AdditionalZ0;
            }
            ZeroTag::Unclassified
        })
        .collect()
}

/// `(bulk, z0, zx, boundary strings, unclassified)`.
pub fn tag_census(tags: &[ZeroTag]) -> [usize; 5] {
    let mut c = [0; 5];
    for t in tags {
        let k = match t {
            ZeroTag::BulkString => 0,
            ZeroTag::AdditionalZ0 => 1,
            ZeroTag::AdditionalZx => 2,
            ZeroTag::PBoundaryString | ZeroTag::QBoundaryString => 3,
            ZeroTag::Unclassified => 4,
        };
        c[k] += 1;
    }
    c
}

/// Region whose census is closest to the observed tags.
pub fn region_from_tags(tags: &[ZeroTag], n: usize) -> ZeroRootResult<Region> {
    let census = tag_census(tags);
    let scored: Vec<(Region, usize)> = Region::ALL
        .iter()
        .map(|&r| {
            let want = r.census(n);
            let miss: usize = (0..4).map(|k| want[k].abs_diff(census[k])).sum();
            (r, miss + census[4])
        })
        .collect();
    let best = scored.iter().map(|s| s.1).min().unwrap_or(0);
    let winners: Vec<Region> = scored.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
    if winners.len() == 1 {
        Ok(winners[0])
    } else {
        Err(ZeroRootError::AmbiguousPattern(winners))
    }
}

/// Tags the representatives and assigns a region.
pub fn classify_zero_pattern(set: &ZeroRootSet) -> ZeroRootResult<ZeroRootSet> {
    let mut out = set.clone();
    out.tags = tag_zero_roots(&out.roots, &out.params);
    out.region = Some(region_from_tags(&out.tags, out.params.n)?);
    Ok(out)
}

/// JSON export document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroRootExport {
    pub params: ModelParams,
    pub roots: Vec<ComplexPoint>,
    pub tags: Vec<ZeroTag>,
    pub region: Option<Region>,
    pub verification: Vec<RootVerification>,
    pub energy: f64,
    pub residuals: ZeroRootResiduals,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroRootResiduals {
    pub energy_imag: f64,
    pub movement: Vec<f64>,
    pub constraints: Option<ConstraintReport>,
}

pub fn export_zero_roots(set: &ZeroRootSet) -> ZeroRootResult<ZeroRootExport> {
    let (energy, energy_imag) = energy_from_zero_roots(set)?;
    Ok(ZeroRootExport {
        params: set.params.clone(),
        roots: set.roots.clone(),
        tags: set.tags.clone(),
        region: set.region,
        verification: set.verification.clone(),
        energy,
        residuals: ZeroRootResiduals {
            energy_imag,
            movement: set.movement.iter().map(|m| if m.is_finite() { *m } else { f64::MAX }).collect(),
            constraints: check_constraints(set).ok(),
        },
    })
}

/// One row per representative: `re,im,tag,arg_count,ladder_delta`.
pub fn zero_roots_csv(set: &ZeroRootSet) -> String {
    let mut out = String::from("re,im,tag,arg_count,ladder_delta\n");
    for (k, z) in set.roots.iter().enumerate() {
        let tag = set.tags.get(k).copied().unwrap_or(ZeroTag::Unclassified);
        let v = set.verification.get(k);
        let count = v.map(|v| v.arg_count.to_string()).unwrap_or_default();
        let ladder = v.and_then(|v| v.ladder_delta).map(|d| format!("{d:e}")).unwrap_or_default();
        out.push_str(&format!("{:.17e},{:.17e},{tag},{count},{ladder}\n", z.re, z.im));
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
    fn contour_points() {
        let p = ContourProbe::new(c(1.0, 2.0), 0.5);
        assert_eq!(p.points[0], c(1.0, 2.5));
        assert_eq!(p.points[1], c(0.5, 2.0));
        assert_eq!(p.points[2], c(1.0, 1.5));
        assert_eq!(p.points[3], c(1.5, 2.0));
        assert_eq!(p.points[4], p.points[0]);
    }

    #[test]
    fn simple_argument_count() {
        let f = |u: ComplexPoint| u * u - 1.0;
        assert_eq!(verify_argument_principle(&f, c(1.0, 0.0), 0.1).unwrap(), 1);
        assert_eq!(verify_argument_principle(&f, c(0.0, 0.0), 0.1).unwrap(), 0);
    }

    #[test]
    fn contour_on_zero_is_an_error() {
        let f = |u: ComplexPoint| u - c(0.0, 0.1);
        assert!(matches!(verify_argument_principle(&f, c(0.0, 0.0), 0.1), Err(ZeroRootError::ZeroOnContour(_))));
    }

    #[test]
    fn planted_root_modulus_valley() {
        let z0 = c(0.3, 0.2);
        let f = move |u: ComplexPoint| 2.0 * (u - z0) * (u + 1.3) * (u - c(2.0, -1.0));
        assert!(verify_max_modulus(&f, z0, 1e-3, 64).passed);
        assert!(!verify_max_modulus(&f, c(-0.5, 0.9), 1e-3, 64).passed);
    }

    #[test]
    fn ladder_on_perturbed_root() {
        let z0 = c(0.3, 0.2);
        let f = move |u: ComplexPoint| (u - z0) * (u + 1.3);
        let off = z0 + Complex64::from_polar(1e-9, PI / 6.0);
        let d = accuracy_ladder(&f, off).unwrap();
        assert!((1e-9..=1e-8).contains(&d), "{d}");
        assert!(matches!(accuracy_ladder(&f, c(5.0, 5.0)), Err(ZeroRootError::NeverDetected(_))));
    }

    #[test]
    fn energy_of_conjugate_roots_is_real() {
        let params = ModelParams::new(2, 1.0, 0.7, 0.6, 0.0).unwrap();
        let set = ZeroRootSet::from_representatives(params, vec![c(-0.5, 0.7), c(-0.5, -0.7), c(0.5, 1.3)]);
        let (_, im) = energy_from_zero_roots(&set).unwrap();
        assert!(im.abs() > 0.0);
        let set = ZeroRootSet::from_representatives(set.params.clone(), vec![c(-0.5, 0.7), c(-0.5, -0.7), c(0.5, 0.0)]);
        let (_, im) = energy_from_zero_roots(&set).unwrap();
        assert!(im.abs() < 1e-15);
    }

    #[test]
    fn canonical_representatives() {
        assert_eq!(canonical_representative(c(-1.5, 0.3), 1.0), c(0.5, -0.3));
        assert_eq!(canonical_representative(c(-0.5, -0.3), 1.0), c(-0.5, 0.3));
        assert_eq!(canonical_representative(c(0.2, 0.0), 1.0), c(0.2, 0.0));
    }

    #[test]
    fn census_rows_have_n_plus_one_roots() {
        for r in Region::ALL {
            assert_eq!(r.census(32).iter().sum::<usize>(), 33);
        }
    }

    #[test]
    fn all_bulk_pattern_is_ambiguous() {
        let tags = vec![ZeroTag::BulkString; 17];
        match region_from_tags(&tags, 16) {
            Err(ZeroRootError::AmbiguousPattern(r)) => {
                assert!(r.contains(&Region::C) && r.contains(&Region::F));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tagging_by_position() {
        let params = ModelParams::new(4, 1.0, 0.3, 0.4, 3f64.sqrt()).unwrap();
        let reps = vec![c(0.5, 0.2), c(0.5, -0.2), c(0.3, 0.0), c(0.2, 0.0), c(-0.5, 0.9)];
        let tags = tag_zero_roots(&reps, &params);
        assert_eq!(
            tags,
            vec![
                ZeroTag::BulkString,
                ZeroTag::BulkString,
                ZeroTag::PBoundaryString,
                ZeroTag::QBoundaryString,
                ZeroTag::AdditionalZ0
            ]
        );
        assert_eq!(region_from_tags(&tags, 4).unwrap(), Region::A);
    }

    #[test]
    fn real_root_past_half_eta_is_zx_even_near_p() {
        let params = ModelParams::new(4, 1.0, 0.51, 0.4, 3f64.sqrt()).unwrap();
        let tags = tag_zero_roots(&[c(0.502, 0.0), c(0.2, 0.0)], &params);
        assert_eq!(tags, vec![ZeroTag::AdditionalZx, ZeroTag::QBoundaryString]);
    }

    #[test]
    fn series_arithmetic() {
        let one = c(1.0, 0.0);
        let mut s = Series::constant(one, 3);
        s.mul_linear(c(1.0, 0.0), one);
        s.mul_linear(c(-2.0, 0.0), one);
        // (1 + u)(-2 + u) = -2 - u + u^2
        assert_eq!(s.0, vec![c(-2.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let r = s.reflect();
        assert_eq!(r.0[1], c(1.0, 0.0));
    }
}
