//! Sampling of the transfer-matrix eigenvalue Λ(u) on structured node sets,
//! normalisation by `u^{2N}`, and reconstruction of Λ as a nodal polynomial.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, ComplexPoint, LagrangePolynomial, LogComplex, MIN_NODE_SEPARATION};
use crate::groundstate::{expectation_mpo, GroundStateError, Mps};
use crate::model::{apply_transfer, build_transfer_mpo, ModelError, ModelParams};
use crate::tensor::Tensor;

/// Default exponent of the node spacing law.
pub const DEFAULT_NODE_EXPONENT: f64 = 1.05;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("interpolation nodes {i} and {j} coincide")]
    DuplicateNodes { i: usize, j: usize },

    #[error("node {0} sits on a pole or at u = 0")]
    NodeAtPole(ComplexPoint),

    #[error("invalid node request: {0}")]
    InvalidVariant(String),

    #[error("{0}")]
    Algebra(#[from] AlgebraError),

    #[error("{0}")]
    GroundState(#[from] GroundStateError),

    #[error("{0}")]
    Model(#[from] ModelError),
}

pub type SpectralResult<T> = Result<T, SpectralError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    /// Values divided by `u^{2N}`.
    DividedByU2n,
}

/// Samples of Λ on a node set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSamples {
    pub params: ModelParams,
    pub normalization: Normalization,
    pub nodes: Vec<ComplexPoint>,
    pub values: Vec<ComplexPoint>,
}

impl SpectralSamples {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn eta(&self) -> f64 {
        self.params.eta
    }

    /// Values in log form with the normalisation undone.
    pub fn raw_log_values(&self) -> Vec<LogComplex> {
        let two_n = 2 * self.params.n as i32;
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|(&u, &v)| {
                let l = LogComplex::from_complex(v);
                match self.normalization {
                    Normalization::Raw => l,
                    Normalization::DividedByU2n => l.mul(LogComplex::from_complex(u).powi(two_n)),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Anything that evaluates Λ(u) of a fixed eigenstate.
pub trait LambdaSource: Sync {
    fn params(&self) -> &ModelParams;

    fn lambda(&self, u: ComplexPoint) -> SpectralResult<ComplexPoint>;

    /// `Λ(u) / u^{2N}`.
    fn lambda_normalized(&self, u: ComplexPoint) -> SpectralResult<ComplexPoint> {
        if u.norm() == 0.0 {
            return Err(SpectralError::NodeAtPole(u));
        }
        let two_n = 2 * self.params().n as i32;
        let l = LogComplex::from_complex(self.lambda(u)?).div(LogComplex::from_complex(u).powi(two_n));
        Ok(l.to_complex()?)
    }
}

/// Λ from an MPS ground state contracted with the transfer-matrix MPO.
pub struct MpsLambda {
    params: ModelParams,
    psi: Vec<Tensor<Complex64>>,
}

impl MpsLambda {
    pub fn new(params: ModelParams, psi: &Mps) -> SpectralResult<Self> {
        if psi.len() != params.n {
            return Err(GroundStateError::ShapeMismatch(format!("MPS has {} sites, N = {}", psi.len(), params.n)).into());
        }
        Ok(MpsLambda {
            params,
            psi: psi.to_complex(),
        })
    }
}

impl LambdaSource for MpsLambda {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn lambda(&self, u: ComplexPoint) -> SpectralResult<ComplexPoint> {
        let mpo = build_transfer_mpo(&self.params, u);
        Ok(expectation_mpo(&self.psi, &mpo.site_tensors)?)
    }

    fn lambda_normalized(&self, u: ComplexPoint) -> SpectralResult<ComplexPoint> {
        if u.norm() == 0.0 {
            return Err(SpectralError::NodeAtPole(u));
        }
        // divide every site tensor by u^2 so nothing overflows in the sweep
        let mut mpo = build_transfer_mpo(&self.params, u);
        let s = (u * u).inv();
        for w in &mut mpo.site_tensors {
            w.scale(s);
        }
        Ok(expectation_mpo(&self.psi, &mpo.site_tensors)?)
    }
}

/// Λ as `<v|t(u)|v> / <v|v>` for an exact eigenvector.
pub struct ExactLambda {
    params: ModelParams,
    state: Vec<Complex64>,
    norm2: f64,
}

impl ExactLambda {
    pub fn new(params: ModelParams, state: &DVector<f64>) -> SpectralResult<Self> {
        if state.len() != 1usize << params.n {
            return Err(GroundStateError::ShapeMismatch(format!("state length {} for N = {}", state.len(), params.n)).into());
        }
        Ok(ExactLambda {
            norm2: state.norm_squared(),
            state: state.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            params,
        })
    }
}

impl LambdaSource for ExactLambda {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn lambda(&self, u: ComplexPoint) -> SpectralResult<ComplexPoint> {
        let tv = apply_transfer(&self.params, u, &self.state);
        let num: Complex64 = self.state.iter().zip(&tv).map(|(a, b)| a.conj() * b).sum();
        Ok(num / self.norm2)
    }
}

/// Λ given by a closure (synthetic and planted-root tests).
pub struct FnLambda<F> {
    params: ModelParams,
    f: F,
}

impl<F> FnLambda<F>
where
    F: Fn(ComplexPoint) -> ComplexPoint + Sync,
{
    pub fn new(params: ModelParams, f: F) -> Self {
        FnLambda { params, f }
    }
}

impl<F> LambdaSource for FnLambda<F>
where
    F: Fn(ComplexPoint) -> ComplexPoint + Sync,
{
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn lambda(&self, u: ComplexPoint) -> SpectralResult<ComplexPoint> {
        Ok((self.f)(u))
    }
}

fn check_nodes(nodes: &[ComplexPoint]) -> SpectralResult<()> {
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if (nodes[i] - nodes[j]).norm() <= MIN_NODE_SEPARATION {
                return Err(SpectralError::DuplicateNodes { i, j });
            }
        }
    }
    Ok(())
}

fn with_reflections(xs: &[ComplexPoint], eta: f64) -> Vec<ComplexPoint> {
    xs.iter().copied().chain(xs.iter().map(|&x| -x - eta)).collect()
}

fn check_even(n: usize) -> SpectralResult<()> {
    if n < 2 || n % 2 != 0 {
        return Err(SpectralError::InvalidVariant(format!("N = {n} must be even and >= 2")));
    }
    Ok(())
}

/// Zero-root nodes `x_j = eta/2 + (i/N) sgn(j - N/2) |j - N/2|^k` for
/// `j = 0..=N`, together with their reflections `-x_j - eta` (2N + 2 points).
pub fn make_zero_nodes(n: usize, eta: f64, k: f64) -> SpectralResult<Vec<ComplexPoint>> {
    check_even(n)?;
    if !(1.0..=1.1).contains(&k) {
        return Err(SpectralError::InvalidVariant(format!("exponent k = {k} outside [1, 1.1]")));
    }
    let half = (n / 2) as f64;
    let xs: Vec<ComplexPoint> = (0..=n)
        .map(|j| {
            let d = j as f64 - half;
            Complex64::new(eta / 2.0, d.signum() * d.abs().powf(k) / n as f64)
        })
        .collect();
    let nodes = with_reflections(&xs, eta);
    check_nodes(&nodes)?;
    Ok(nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetheNodeVariant {
    /// N nodes on the central line (U(1)-symmetric chain).
    Homogeneous,
    /// Half on the central line, half at `j + t` on the real axis.
    RealAxis,
    /// Half on the central line, half on the vertical line `Re u = t`.
    VerticalLine,
}

/// Bethe-root interpolation nodes with their reflections.
pub fn make_bethe_nodes(n: usize, eta: f64, k: f64, t: f64, variant: BetheNodeVariant) -> SpectralResult<Vec<ComplexPoint>> {
    check_even(n)?;
    let half = n / 2;
    let central: Vec<ComplexPoint> = (1..=half)
        .map(|j| Complex64::new(-eta / 2.0, (j as f64).powf(k) / n as f64))
        .collect();
    let xs: Vec<ComplexPoint> = match variant {
        BetheNodeVariant::Homogeneous => central,
        BetheNodeVariant::RealAxis => {
            if !(t > 0.0 && t < n as f64 / 4.0) {
                return Err(SpectralError::InvalidVariant(format!("t = {t} outside (0, N/4)")));
            }
            central
                .into_iter()
                .chain((half + 1..=n).map(|j| Complex64::new(j as f64 + t, 0.0)))
                .collect()
        }
        BetheNodeVariant::VerticalLine => {
            if !(t > 0.0) {
                return Err(SpectralError::InvalidVariant(format!("t = {t} must be positive")));
            }
            central
                .into_iter()
                .chain((half + 1..=n).map(|j| Complex64::new(t, j as f64 - half as f64 - n as f64 / 4.0)))
                .collect()
        }
    };
    let nodes = with_reflections(&xs, eta);
    for &u in &nodes {
        for pole in [0.0, -eta, -eta / 2.0] {
            if (u - pole).norm() < 1e-12 {
                return Err(SpectralError::NodeAtPole(u));
            }
        }
    }
    check_nodes(&nodes)?;
    Ok(nodes)
}

/// Evaluates Λ at every node, in parallel.
pub fn sample_lambda(source: &dyn LambdaSource, nodes: &[ComplexPoint], normalization: Normalization) -> SpectralResult<SpectralSamples> {
    check_nodes(nodes)?;
    let values = nodes
        .par_iter()
        .map(|&u| match normalization {
            Normalization::Raw => source.lambda(u),
            Normalization::DividedByU2n => source.lambda_normalized(u),
        })
        .collect::<SpectralResult<Vec<_>>>()?;
    Ok(SpectralSamples {
        params: source.params().clone(),
        normalization,
        nodes: nodes.to_vec(),
        values,
    })
}

pub fn normalize_samples(s: &SpectralSamples) -> SpectralResult<SpectralSamples> {
    if s.normalization == Normalization::DividedByU2n {
        return Ok(s.clone());
    }
    let two_n = 2 * s.n() as i32;
    let mut values = Vec::with_capacity(s.values.len());
    for (&u, &v) in s.nodes.iter().zip(&s.values) {
        if u.norm() == 0.0 {
            return Err(SpectralError::NodeAtPole(u));
        }
        let l = LogComplex::from_complex(v).div(LogComplex::from_complex(u).powi(two_n));
        values.push(l.to_complex()?);
    }
    Ok(SpectralSamples {
        normalization: Normalization::DividedByU2n,
        values,
        ..s.clone()
    })
}

pub fn denormalize_samples(s: &SpectralSamples) -> SpectralResult<SpectralSamples> {
    if s.normalization == Normalization::Raw {
        return Ok(s.clone());
    }
    let values = s
        .raw_log_values()
        .iter()
        .map(|l| l.to_complex())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpectralSamples {
        normalization: Normalization::Raw,
        values,
        ..s.clone()
    })
}

/// Λ as the degree-(2N+2) polynomial with leading coefficient 2 through the
/// samples.
pub fn reconstruct_lambda(s: &SpectralSamples) -> SpectralResult<LagrangePolynomial> {
    let lead = Some(Complex64::new(2.0, 0.0));
    let poly = match s.normalization {
        Normalization::Raw => LagrangePolynomial::new(s.nodes.clone(), s.values.clone(), lead),
        Normalization::DividedByU2n => LagrangePolynomial::from_log_values(s.nodes.clone(), s.raw_log_values(), lead),
    };
    poly.map_err(|e| match e {
        AlgebraError::DuplicateNodes { i, j, .. } => SpectralError::DuplicateNodes { i, j },
        other => other.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexPoint {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_nodes_layout() {
        let nodes = make_zero_nodes(4, 1.0, 1.0).unwrap();
        assert_eq!(nodes.len(), 10);
        for x in &nodes[..5] {
            assert_eq!(x.re, 0.5);
        }
        for (x, r) in nodes[..5].iter().zip(&nodes[5..]) {
            assert_eq!(*r, -x - 1.0);
        }
    }

    #[test]
    fn zero_nodes_denser_in_the_middle() {
        let nodes = make_zero_nodes(20, 1.0, 1.1).unwrap();
        let ims: Vec<f64> = nodes[..21].iter().map(|x| x.im).collect();
        let inner = ims[11] - ims[10];
        let outer = ims[20] - ims[19];
        assert!(outer > inner * 1.2);
    }

    #[test]
    fn bethe_nodes_formulas() {
        let h = make_bethe_nodes(4, 1.0, 1.0, 0.5, BetheNodeVariant::Homogeneous).unwrap();
        assert_eq!(h.len(), 4);
        assert!((h[0] - c(-0.5, 0.25)).norm() < 1e-15);
        let r = make_bethe_nodes(8, 1.0, 1.05, 1.5, BetheNodeVariant::RealAxis).unwrap();
        assert_eq!(r.len(), 16);
        assert_eq!(r[4], c(6.5, 0.0));
        assert!(make_bethe_nodes(8, 1.0, 1.05, 2.5, BetheNodeVariant::RealAxis).is_err());
        let v = make_bethe_nodes(8, 1.0, 1.05, 2.0, BetheNodeVariant::VerticalLine).unwrap();
        assert_eq!(v.len(), 16);
    }

    #[test]
    fn normalization_round_trip() {
        let params = ModelParams::new(6, 1.0, 0.7, 0.6, 0.0).unwrap();
        let nodes = vec![c(0.3, 0.4), c(1.0, 0.0), c(-2.0, 5.0)];
        let s = SpectralSamples {
            params,
            normalization: Normalization::Raw,
            nodes,
            values: vec![c(1.5, -2.0), c(3.0, 1.0), c(-7e5, 2e5)],
        };
        let n = normalize_samples(&s).unwrap();
        assert!((n.values[1].norm() - s.values[1].norm()).abs() < 1e-15);
        let back = denormalize_samples(&n).unwrap();
        for (a, b) in back.values.iter().zip(&s.values) {
            assert!((a - b).norm() <= 1e-13 * b.norm());
        }
    }

    #[test]
    fn node_at_origin_rejected() {
        let params = ModelParams::new(2, 1.0, 0.7, 0.6, 0.0).unwrap();
        let s = SpectralSamples {
            params,
            normalization: Normalization::Raw,
            nodes: vec![c(0.0, 0.0)],
            values: vec![c(1.0, 0.0)],
        };
        assert!(matches!(normalize_samples(&s), Err(SpectralError::NodeAtPole(_))));
    }

    #[test]
    fn json_shape() {
        let params = ModelParams::new(2, 1.0, 0.7, 0.6, 0.0).unwrap();
        let s = SpectralSamples {
            params,
            normalization: Normalization::DividedByU2n,
            nodes: vec![c(0.5, 1.0)],
            values: vec![c(1.0, -2.0)],
        };
        let j = s.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["normalization"], "divided_by_u2n");
        assert_eq!(v["nodes"][0][1], 1.0);
        assert_eq!(SpectralSamples::from_json(&j).unwrap(), s);
    }
}
