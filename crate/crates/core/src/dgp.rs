//! Simulation designs: a truncated AR(1) regressor, standardized error
//! laws, the linear null and three nonlinear alternatives, plus drifting
//! local alternatives.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, LogNormal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sample::{Regressors, Sample};
use crate::seed;

pub const AR_COEF: f64 = 0.5;
pub const BURN_IN: usize = 100;

/// Stationary standard deviation of `X_t = 0.5 X_{t−1} + v_t`.
pub fn sigma_x() -> f64 {
    (1.0 / (1.0 - AR_COEF * AR_COEF)).sqrt()
}

/// Regressors are kept within two stationary standard deviations.
pub fn clip_bound() -> f64 {
    2.0 * sigma_x()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Winsorize each `X_t` at `±2σ_X`; the recursion runs on unclipped values.
    #[default]
    Clip,
    /// Redraw the innovation until `X_t` falls inside `±2σ_X`.
    Reject,
}

impl FromStr for Truncation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clip" => Ok(Truncation::Clip),
            "reject" => Ok(Truncation::Reject),
            other => Err(Error::InvalidArgument(format!(
                "unknown truncation `{other}` (expected clip or reject)"
            ))),
        }
    }
}

fn ar1(n: usize, rng: &mut ChaCha8Rng, truncation: Truncation) -> Vec<f64> {
    let bound = clip_bound();
    let mut state = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for t in 0..BURN_IN + n {
        let kept = match truncation {
            Truncation::Clip => {
                let v: f64 = StandardNormal.sample(rng);
                state = AR_COEF * state + v;
                state.clamp(-bound, bound)
            }
            Truncation::Reject => {
                let prev = state;
                loop {
                    let v: f64 = StandardNormal.sample(rng);
                    state = AR_COEF * prev + v;
                    if state.abs() <= bound {
                        break state;
                    }
                }
            }
        };
        if t >= BURN_IN {
            out.push(kept);
        }
    }
    out
}

/// AR(1) regressor with 100 burn-in steps from zero, clipped to `±2σ_X`.
pub fn gen_regressor(n: usize, seed: u64) -> Vec<f64> {
    gen_regressor_with(n, seed, Truncation::Clip)
}

pub fn gen_regressor_with(n: usize, seed: u64, truncation: Truncation) -> Vec<f64> {
    ar1(n, &mut seed::rng(seed, 0), truncation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Normal,
    /// Student-t with 5 degrees of freedom, not rescaled (variance 5/3).
    StudentT5,
    Uniform01,
    LogNormal,
    ChiSq1,
}

impl ErrorLaw {
    pub const ALL: [ErrorLaw; 5] = [
        ErrorLaw::Normal,
        ErrorLaw::StudentT5,
        ErrorLaw::Uniform01,
        ErrorLaw::LogNormal,
        ErrorLaw::ChiSq1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorLaw::Normal => "normal",
            ErrorLaw::StudentT5 => "t5",
            ErrorLaw::Uniform01 => "uniform",
            ErrorLaw::LogNormal => "lognormal",
            ErrorLaw::ChiSq1 => "chisq1",
        }
    }

    /// Population variance of the generated errors.
    pub fn variance(self) -> f64 {
        match self {
            ErrorLaw::StudentT5 => 5.0 / 3.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "n" => Ok(ErrorLaw::Normal),
            "t5" | "student_t5" | "student" => Ok(ErrorLaw::StudentT5),
            "uniform" | "uniform01" | "u" => Ok(ErrorLaw::Uniform01),
            "lognormal" | "log_normal" => Ok(ErrorLaw::LogNormal),
            "chisq1" | "chisq" | "chi2" => Ok(ErrorLaw::ChiSq1),
            other => Err(Error::InvalidArgument(format!(
                "unknown error law `{other}` (expected normal, t5, uniform, lognormal or chisq1)"
            ))),
        }
    }
}

/// i.i.d. errors; uniform, log-normal and chi-square draws are shifted and
/// scaled to mean 0 and variance 1 with their exact population moments.
pub fn gen_errors(law: ErrorLaw, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed, 0);
    let e = std::f64::consts::E;
    match law {
        ErrorLaw::Normal => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        ErrorLaw::StudentT5 => {
            let t = StudentT::new(5.0).expect("valid degrees of freedom");
            (0..n).map(|_| t.sample(&mut rng)).collect()
        }
        ErrorLaw::Uniform01 => (0..n)
            .map(|_| (rng.random::<f64>() - 0.5) * 12f64.sqrt())
            .collect(),
        ErrorLaw::LogNormal => {
            let d = LogNormal::new(0.0, 1.0).expect("valid parameters");
            let (mean, sd) = (e.sqrt(), ((e - 1.0) * e).sqrt());
            (0..n).map(|_| (d.sample(&mut rng) - mean) / sd).collect()
        }
        ErrorLaw::ChiSq1 => {
            let d = ChiSquared::new(1.0).expect("valid degrees of freedom");
            (0..n)
                .map(|_| (d.sample(&mut rng) - 1.0) / 2f64.sqrt())
                .collect()
        }
    }
}

/// Departure shapes for local alternatives. Both are even functions,
/// centered under the clipped stationary regressor law, hence uncorrelated
/// with `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaShape {
    /// `x² − E[X²]`
    Quadratic,
    /// `|x| − E|X|`
    Abs,
}

impl DeltaShape {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            DeltaShape::Quadratic => x * x - clipped_second_moment(),
            DeltaShape::Abs => x.abs() - clipped_abs_moment(),
        }
    }
}

impl FromStr for DeltaShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quadratic" => Ok(DeltaShape::Quadratic),
            "abs" => Ok(DeltaShape::Abs),
            other => Err(Error::InvalidArgument(format!(
                "unknown local-alternative shape `{other}` (expected quadratic or abs)"
            ))),
        }
    }
}

/// `E[X²]` for `X ~ N(0, σ_X²)` winsorized at `±2σ_X`.
pub fn clipped_second_moment() -> f64 {
    let z = Normal::standard();
    let tail = z.sf(2.0);
    sigma_x().powi(2) * ((1.0 - 2.0 * tail) - 4.0 * z.pdf(2.0) + 8.0 * tail)
}

/// `E|X|` for the same winsorized law.
pub fn clipped_abs_moment() -> f64 {
    let z = Normal::standard();
    sigma_x() * (2.0 * (z.pdf(0.0) - z.pdf(2.0)) + 4.0 * z.sf(2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// `Y = 1 + X + ε`
    SNull,
    /// `Y = 1 + X + θX² + ε`
    P1Quadratic { theta: f64 },
    /// `Y = 1 + X·1(X>0) + (1+θ)X·1(X≤0) + ε`
    P2Threshold { theta: f64 },
    /// `Y = 1 + X + (1 − θF(X))X + ε`, `F` logistic
    P3SmoothTransition { theta: f64 },
    /// `Y = 1 + ΣX_j + n^{−1/2} h^{−p/4} Σδ(X_j) + ε` with `h = σ_X n^{−ω}`
    Local {
        shape: DeltaShape,
        dim: usize,
        omega: f64,
    },
}

impl Model {
    /// Builds a model from its short name (`s_null`, `p1`, `p2`, `p3`).
    pub fn from_name(name: &str, theta: f64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "s_null" | "null" | "s" | "s1" => Ok(Model::SNull),
            "p1" => Ok(Model::P1Quadratic { theta }),
            "p2" => Ok(Model::P2Threshold { theta }),
            "p3" => Ok(Model::P3SmoothTransition { theta }),
            other => Err(Error::InvalidArgument(format!(
                "unknown model `{other}` (expected s_null, p1, p2, p3 or local)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::SNull => "s_null",
            Model::P1Quadratic { .. } => "p1",
            Model::P2Threshold { .. } => "p2",
            Model::P3SmoothTransition { .. } => "p3",
            Model::Local { .. } => "local",
        }
    }

    pub fn theta(&self) -> f64 {
        match *self {
            Model::P1Quadratic { theta }
            | Model::P2Threshold { theta }
            | Model::P3SmoothTransition { theta } => theta,
            _ => 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Model::Local { dim, .. } => dim,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Model::Local { dim, omega, .. } = *self {
            if !(1..=crate::sample::MAX_DIM).contains(&dim) {
                return Err(Error::InvalidArgument(format!(
                    "local alternative dimension must be 1..=3, got {dim}"
                )));
            }
            if !(omega > 0.0 && omega < 1.0 / (2.0 * dim as f64)) {
                return Err(Error::InvalidArgument(format!(
                    "rate exponent {omega} outside (0, 1/(2p))"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: Model,
    pub errors: ErrorLaw,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub truncation: Truncation,
}

impl DgpSpec {
    pub fn new(model: Model, errors: ErrorLaw, n: usize, seed: u64) -> Self {
        DgpSpec {
            model,
            errors,
            n,
            seed,
            truncation: Truncation::Clip,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws one sample. Regressor column `j` uses seed `derive([seed, 0, j])`
/// and the errors `derive([seed, 1])`, so the regressor and error streams of
/// a given seed are shared by every model.
pub fn gen_sample(spec: &DgpSpec) -> Result<Sample> {
    spec.model.validate()?;
    let n = spec.n;
    let p = spec.model.dim();
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| gen_regressor_with(n, seed::derive(&[spec.seed, 0, j as u64]), spec.truncation))
        .collect();
    let eps = gen_errors(spec.errors, n, seed::derive(&[spec.seed, 1]));
    let x0 = &columns[0];
    let y: Vec<f64> = match spec.model {
        Model::SNull => x0.iter().zip(&eps).map(|(x, e)| 1.0 + x + e).collect(),
        Model::P1Quadratic { theta } => x0
            .iter()
            .zip(&eps)
            .map(|(x, e)| 1.0 + x + theta * x * x + e)
            .collect(),
        Model::P2Threshold { theta } => x0
            .iter()
            .zip(&eps)
            .map(|(&x, e)| {
                let slope = if x > 0.0 { 1.0 } else { 1.0 + theta };
                1.0 + slope * x + e
            })
            .collect(),
        Model::P3SmoothTransition { theta } => x0
            .iter()
            .zip(&eps)
            .map(|(&x, e)| 1.0 + x + (1.0 - theta * logistic(x)) * x + e)
            .collect(),
        Model::Local { shape, dim, omega } => {
            let h = sigma_x() * (n as f64).powf(-omega);
            let a_n = (n as f64).powf(-0.5) * h.powf(-(dim as f64) / 4.0);
            (0..n)
                .map(|t| {
                    let linear: f64 = columns.iter().map(|c| c[t]).sum();
                    let delta: f64 = columns.iter().map(|c| shape.eval(c[t])).sum();
                    1.0 + linear + a_n * delta + eps[t]
                })
                .collect()
        }
    };
    let x = Regressors::from_columns(&columns)?;
    Sample::new(y, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ols_fit;
    use proptest::prelude::*;

    #[test]
    fn regressor_stays_within_clip_bound() {
        let bound = clip_bound();
        assert!((bound - 2.309_401_076_758_503).abs() < 1e-12);
        for seed in 0..20 {
            let x = gen_regressor(500, seed);
            assert!(x.iter().all(|v| v.abs() <= bound));
            let r = gen_regressor_with(300, seed, Truncation::Reject);
            assert!(r.iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn regressor_is_deterministic_and_centered() {
        assert_eq!(gen_regressor(50, 7), gen_regressor(50, 7));
        let x = gen_regressor(100_000, 42);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn clipped_moments_match_monte_carlo() {
        let x = gen_regressor(200_000, 3);
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let m1 = x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64;
        // The AR(1) is positively autocorrelated, so allow ~4x the i.i.d. band.
        assert!((m2 - clipped_second_moment()).abs() < 0.02, "{m2}");
        assert!((m1 - clipped_abs_moment()).abs() < 0.01, "{m1}");
    }

    #[test]
    fn error_laws_are_standardized() {
        for law in ErrorLaw::ALL {
            let e = gen_errors(law, 100_000, 9);
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 0.03, "{law}: mean {mean}");
            let band = if law == ErrorLaw::LogNormal {
                0.15
            } else {
                0.05
            };
            assert!((var - law.variance()).abs() < band, "{law}: var {var}");
            assert_eq!(gen_errors(law, 10, 4), gen_errors(law, 10, 4));
        }
    }

    #[test]
    fn theta_zero_collapses_to_null() {
        for seed in 0..5 {
            let null = gen_sample(&DgpSpec::new(Model::SNull, ErrorLaw::Normal, 80, seed)).unwrap();
            for m in [
                Model::P1Quadratic { theta: 0.0 },
                Model::P2Threshold { theta: 0.0 },
            ] {
                let alt = gen_sample(&DgpSpec::new(m, ErrorLaw::Normal, 80, seed)).unwrap();
                assert_eq!(alt, null);
            }
            let p3 = gen_sample(&DgpSpec::new(
                Model::P3SmoothTransition { theta: 0.0 },
                ErrorLaw::Normal,
                80,
                seed,
            ))
            .unwrap();
            for t in 0..80 {
                let want = 1.0 + 2.0 * null.x.row(t)[0] + (null.y[t] - 1.0 - null.x.row(t)[0]);
                assert!((p3.y[t] - want).abs() < 1e-12);
            }
            let fit0 = ols_fit(&null).unwrap();
            let fit3 = ols_fit(&p3).unwrap();
            assert!((fit0.ssr0 - fit3.ssr0).abs() < 1e-9 * fit0.ssr0);
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_samples() {
        let firsts: Vec<f64> = (0..50)
            .map(|s| {
                gen_sample(&DgpSpec::new(Model::SNull, ErrorLaw::Normal, 5, s))
                    .unwrap()
                    .y[0]
            })
            .collect();
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                assert_ne!(firsts[i], firsts[j]);
            }
        }
    }

    #[test]
    fn local_alternative_shapes() {
        let spec = DgpSpec::new(
            Model::Local {
                shape: DeltaShape::Quadratic,
                dim: 2,
                omega: 0.2,
            },
            ErrorLaw::Normal,
            60,
            1,
        );
        let s = gen_sample(&spec).unwrap();
        assert_eq!(s.dim(), 2);
        let bad = DgpSpec::new(
            Model::Local {
                shape: DeltaShape::Abs,
                dim: 3,
                omega: 0.2,
            },
            ErrorLaw::Normal,
            60,
            1,
        );
        assert!(gen_sample(&bad).is_err());
        assert!("sine".parse::<DeltaShape>().is_err());
    }

    proptest! {
        #[test]
        fn clip_bound_never_exceeded(seed in any::<u64>(), n in 1usize..300) {
            let bound = clip_bound();
            prop_assert!(gen_regressor(n, seed).iter().all(|v| v.abs() <= bound));
        }
    }
}
