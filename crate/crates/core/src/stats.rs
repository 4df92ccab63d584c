//! Parametric null fit, the four test statistics and their asymptotic
//! normal calibration under conditional homoskedasticity.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::loss::Loss;
use crate::sample::{Regressors, Sample};
use crate::smoothing::SmoothFit;

/// SSR values at or below this fraction of `Σ y²` count as an exact fit.
pub const DEGENERATE_SSR_RATIO: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullFit {
    /// Intercept followed by slopes.
    pub theta_hat: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr0: f64,
}

/// Least-squares fit of `y` on `[1, X]`, factorized once per design.
#[derive(Debug, Clone)]
pub struct LinearNull {
    design: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LinearNull {
    pub fn new(x: &Regressors) -> Result<Self> {
        let n = x.n();
        let k = x.dim() + 1;
        if n < k {
            return Err(Error::RankDeficient);
        }
        let design = DMatrix::from_fn(n, k, |t, j| if j == 0 { 1.0 } else { x.row(t)[j - 1] });
        let qr = design.clone().qr();
        let r = qr.r();
        let scale = (0..k).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
        if (0..k).any(|j| r[(j, j)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient);
        }
        Ok(LinearNull {
            q: qr.q(),
            r,
            design,
        })
    }

    pub fn fit(&self, y: &[f64]) -> Result<NullFit> {
        if y.len() != self.design.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.design.nrows(),
                got: y.len(),
            });
        }
        let yv = DVector::from_column_slice(y);
        let qty = self.q.transpose() * &yv;
        let theta = self
            .r
            .solve_upper_triangular(&qty)
            .ok_or(Error::RankDeficient)?;
        let fitted = &self.design * &theta;
        let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        let ssr0 = residuals.iter().map(|e| e * e).sum();
        Ok(NullFit {
            theta_hat: theta.iter().copied().collect(),
            residuals,
            ssr0,
        })
    }

    /// `[1, X_t]'θ` for every row.
    pub fn fitted(&self, theta: &[f64]) -> Vec<f64> {
        let th = DVector::from_column_slice(theta);
        (&self.design * th).iter().copied().collect()
    }
}

/// Ordinary least squares of `Y` on `[1, X]`.
pub fn ols_fit(sample: &Sample) -> Result<NullFit> {
    LinearNull::new(&sample.x)?.fit(&sample.y)
}

/// Errors if `ssr` is an exact fit relative to `scale` (typically `Σ y²`).
pub fn check_nondegenerate(what: &str, ssr: f64, scale: f64) -> Result<()> {
    if !(ssr > DEGENERATE_SSR_RATIO * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate(format!(
            "{what} = {ssr:e} is numerically zero"
        )));
    }
    Ok(())
}

/// Which residual variance standardizes `Q̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    /// Nonparametric residuals; gives `q_n`.
    Ssr1,
    /// Null-model residuals; gives `q_n⁰`.
    Ssr0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossStatistic {
    pub q_hat: f64,
    pub q: f64,
}

/// `Q̂ = Σ d(m̂(X_t))` and `q = Q̂ / (SSR/n)`.
pub fn loss_statistic(
    fit: &SmoothFit,
    loss: &Loss,
    denominator: Denominator,
    ssr0: f64,
    n: usize,
) -> Result<LossStatistic> {
    let ssr = match denominator {
        Denominator::Ssr1 => fit.ssr1,
        Denominator::Ssr0 => ssr0,
    };
    if !(ssr > 0.0) {
        return Err(Error::Degenerate(format!(
            "{denominator:?} is zero; the sample is fitted exactly"
        )));
    }
    let q_hat = loss_sum(&fit.m_hat, loss);
    Ok(LossStatistic {
        q_hat,
        q: q_hat / (ssr / n as f64),
    })
}

pub(crate) fn loss_sum(m_hat: &[f64], loss: &Loss) -> f64 {
    m_hat.iter().map(|&m| loss.eval(m)).sum()
}

/// `λ_n = (n/2) ln(SSR₀/SSR₁)`; negative values are passed through.
pub fn glr_statistic(ssr0: f64, ssr1: f64, n: usize) -> Result<f64> {
    if !(ssr0 > 0.0 && ssr1 > 0.0) {
        return Err(Error::Degenerate(format!(
            "GLR needs positive sums of squares, got SSR0 = {ssr0:e}, SSR1 = {ssr1:e}"
        )));
    }
    // Difference of logs keeps λ exactly antisymmetric in (SSR₀, SSR₁).
    Ok(0.5 * n as f64 * (ssr0.ln() - ssr1.ln()))
}

/// `(SSR₀ − SSR₁)/SSR₁`.
pub fn f_statistic(ssr0: f64, ssr1: f64) -> Result<f64> {
    if !(ssr1 > 0.0) {
        return Err(Error::Degenerate(format!(
            "F statistic needs SSR1 > 0, got {ssr1:e}"
        )));
    }
    Ok((ssr0 - ssr1) / ssr1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LossQ,
    LossQ0,
    Glr,
    F,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LossQ => "q",
            Method::LossQ0 => "q0",
            Method::Glr => "glr",
            Method::F => "f",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "q" | "loss_q" => Ok(Method::LossQ),
            "q0" | "loss_q0" => Ok(Method::LossQ0),
            "glr" | "lambda" => Ok(Method::Glr),
            "f" => Ok(Method::F),
            other => Err(Error::InvalidArgument(format!("unknown test `{other}`"))),
        }
    }
}

/// An asymptotically calibrated test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    /// `s(K)` for the loss tests, `r(K)` for the GLR test.
    pub factor: f64,
    /// `ν_n` or `μ_n`.
    pub centering: f64,
    /// `√(2ν_n)` or `√(2μ_n)`.
    pub scaling: f64,
    pub z: f64,
    pub p_value: f64,
    pub omega_measure: f64,
}

/// `1 − Φ(z)`.
pub fn upper_tail(z: f64) -> f64 {
    Normal::standard().sf(z)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// Homoskedastic normal calibration of a loss statistic:
/// `s = a/(D b)`, `ν = Ω a²/(h^p b)`, `z = (s q − ν)/√(2ν)`.
pub fn asymptotic_calibration_q(
    method: Method,
    q: f64,
    constants: &KernelConstants,
    curvature: f64,
    h: f64,
    omega_measure: f64,
) -> Result<TestOutcome> {
    check_positive("bandwidth", h)?;
    check_positive("support measure", omega_measure)?;
    check_positive("curvature", curvature)?;
    let p = constants.dim as i32;
    let factor = constants.a / (curvature * constants.b);
    let centering = omega_measure * constants.a * constants.a / (h.powi(p) * constants.b);
    let scaling = (2.0 * centering).sqrt();
    let z = (factor * q - centering) / scaling;
    Ok(TestOutcome {
        method,
        statistic: q,
        factor,
        centering,
        scaling,
        z,
        p_value: upper_tail(z),
        omega_measure,
    })
}

/// Homoskedastic normal calibration of `λ_n`:
/// `r = c/d`, `μ = Ω c²/(h^p d)`, `z = (r λ − μ)/√(2μ)`.
pub fn asymptotic_calibration_glr(
    lambda: f64,
    constants: &KernelConstants,
    h: f64,
    omega_measure: f64,
) -> Result<TestOutcome> {
    check_positive("bandwidth", h)?;
    check_positive("support measure", omega_measure)?;
    let p = constants.dim as i32;
    let factor = constants.c / constants.d;
    let centering = omega_measure * constants.c * constants.c / (h.powi(p) * constants.d);
    let scaling = (2.0 * centering).sqrt();
    let z = (factor * lambda - centering) / scaling;
    Ok(TestOutcome {
        method: Method::Glr,
        statistic: lambda,
        factor,
        centering,
        scaling,
        z,
        p_value: upper_tail(z),
        omega_measure,
    })
}

/// Product of the column ranges, an estimate of the Lebesgue measure of
/// the regressor support.
pub fn estimate_omega(x: &Regressors) -> Result<f64> {
    if x.n() < 2 {
        return Err(Error::InvalidArgument(
            "support estimate needs at least 2 observations".into(),
        ));
    }
    let mut omega = 1.0;
    for j in 0..x.dim() {
        let (lo, hi) = x
            .column(j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        if !(range > 0.0) {
            return Err(Error::DegenerateColumn { column: j + 1 });
        }
        omega *= range;
    }
    Ok(omega)
}
