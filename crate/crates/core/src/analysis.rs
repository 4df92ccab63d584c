//! Glue between the null fit, the smoother and the test family for one
//! fixed regressor design.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, DEFAULT_TOL};
use crate::methods::{AsymptoticContext, Evaluation, SpecTest};
use crate::sample::{Regressors, Sample};
use crate::smoothing::{Bandwidth, BandwidthSelector, Smoother};
use crate::stats::{check_nondegenerate, estimate_omega, LinearNull, NullFit, TestOutcome};

/// Prepared smoother and null projection for a fixed `X`.
///
/// With more than one regressor, each column is divided by its sample
/// standard deviation before smoothing so a single scalar bandwidth applies
/// to all coordinates; the support measure is taken on the same scale.
#[derive(Debug, Clone)]
pub struct Analysis {
    kernel: Kernel,
    bandwidth: Bandwidth,
    smoothing_x: Regressors,
    smoother: Smoother,
    null: Option<LinearNull>,
}

/// Observed-sample quantities computed while preparing an [`Analysis`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub analysis: Analysis,
    pub null_fit: NullFit,
    pub evaluation: Evaluation,
}

fn smoothing_scale(x: &Regressors) -> Result<Regressors> {
    if x.dim() > 1 {
        x.standardized()
    } else {
        Ok(x.clone())
    }
}

impl Analysis {
    /// Fits the null on `sample`, resolves the bandwidth from the null
    /// residuals and evaluates the observed sample.
    pub fn prepare(
        sample: &Sample,
        kernel: Kernel,
        selector: &dyn BandwidthSelector,
    ) -> Result<Prepared> {
        let null = LinearNull::new(&sample.x)?;
        let null_fit = null.fit(&sample.y)?;
        let smoothing_x = smoothing_scale(&sample.x)?;
        let bandwidth = selector.select(&null_fit.residuals, &smoothing_x, kernel)?;
        let smoother = Smoother::new(&smoothing_x, kernel, bandwidth.h)?;
        let analysis = Analysis {
            kernel,
            bandwidth,
            smoothing_x,
            smoother,
            null: Some(null),
        };
        let evaluation = analysis.evaluate_fit(&sample.y, &null_fit)?;
        Ok(Prepared {
            analysis,
            null_fit,
            evaluation,
        })
    }

    /// Uses precomputed null residuals (user-defined null models). No null
    /// refit is available, so only asymptotic calibration applies.
    pub fn prepare_residuals(
        residuals: &[f64],
        x: &Regressors,
        kernel: Kernel,
        selector: &dyn BandwidthSelector,
    ) -> Result<(Analysis, Evaluation)> {
        if residuals.len() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                got: residuals.len(),
            });
        }
        let smoothing_x = smoothing_scale(x)?;
        let bandwidth = selector.select(residuals, &smoothing_x, kernel)?;
        let smoother = Smoother::new(&smoothing_x, kernel, bandwidth.h)?;
        let analysis = Analysis {
            kernel,
            bandwidth,
            smoothing_x,
            smoother,
            null: None,
        };
        let ev = analysis.evaluate_residuals(residuals)?;
        Ok((analysis, ev))
    }

    /// Builds an analysis for a known bandwidth (already on the smoothing scale).
    pub fn with_bandwidth(x: &Regressors, kernel: Kernel, bandwidth: Bandwidth) -> Result<Self> {
        let smoothing_x = smoothing_scale(x)?;
        let smoother = Smoother::new(&smoothing_x, kernel, bandwidth.h)?;
        Ok(Analysis {
            kernel,
            bandwidth,
            smoothing_x,
            smoother,
            null: Some(LinearNull::new(x)?),
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn smoother(&self) -> &Smoother {
        &self.smoother
    }

    pub fn null(&self) -> Option<&LinearNull> {
        self.null.as_ref()
    }

    pub fn n(&self) -> usize {
        self.smoother.n()
    }

    pub fn dim(&self) -> usize {
        self.smoothing_x.dim()
    }

    /// Refits the null on `y` and smooths its residuals.
    pub fn evaluate(&self, y: &[f64]) -> Result<Evaluation> {
        let null = self.null.as_ref().ok_or_else(|| {
            Error::Unsupported("no parametric null available for refitting".into())
        })?;
        let fit = null.fit(y)?;
        self.evaluate_fit(y, &fit)
    }

    fn evaluate_fit(&self, y: &[f64], fit: &NullFit) -> Result<Evaluation> {
        let scale: f64 = y.iter().map(|v| v * v).sum();
        check_nondegenerate("SSR0", fit.ssr0, scale)?;
        self.evaluate_residuals(&fit.residuals)
    }

    pub fn evaluate_residuals(&self, residuals: &[f64]) -> Result<Evaluation> {
        let ssr0: f64 = residuals.iter().map(|e| e * e).sum();
        if !(ssr0 > 0.0) {
            return Err(Error::Degenerate("SSR0 is zero".into()));
        }
        let smooth = self.smoother.fit(residuals)?;
        check_nondegenerate("SSR1", smooth.ssr1, ssr0)?;
        Ok(Evaluation {
            n: residuals.len(),
            residuals: residuals.to_vec(),
            ssr0,
            smooth,
        })
    }

    /// Range-product estimate of the support measure on the smoothing scale.
    pub fn estimated_omega(&self) -> Result<f64> {
        estimate_omega(&self.smoothing_x)
    }

    pub fn asymptotic_context(&self, omega_override: Option<f64>) -> Result<AsymptoticContext> {
        let omega_measure = match omega_override {
            Some(v) => v,
            None => self.estimated_omega()?,
        };
        Ok(AsymptoticContext {
            constants: self.kernel.constants(self.dim(), DEFAULT_TOL)?,
            h: self.bandwidth.h,
            omega_measure,
            n: self.n(),
        })
    }
}

/// One test's observed statistic and, when available, its asymptotic outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ObservedTest {
    pub test: String,
    pub statistic: f64,
    pub asymptotic: Option<TestOutcome>,
    /// Why the asymptotic calibration is absent, if it is.
    pub asymptotic_note: Option<String>,
}

/// Computes each test's statistic on `ev` and calibrates it asymptotically
/// where the test supports it.
pub fn observe(
    tests: &[std::sync::Arc<dyn SpecTest>],
    ev: &Evaluation,
    ctx: &AsymptoticContext,
) -> Result<Vec<ObservedTest>> {
    tests
        .iter()
        .map(|t| {
            let statistic = t.statistic(ev)?;
            let (asymptotic, asymptotic_note) = match t.asymptotic(statistic, ctx) {
                Ok(o) => (Some(o), None),
                Err(Error::Unsupported(why)) => (None, Some(why)),
                Err(e) => return Err(e),
            };
            Ok(ObservedTest {
                test: t.descriptor(),
                statistic,
                asymptotic,
                asymptotic_note,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::parse_test;
    use crate::smoothing::{FixedBandwidth, RuleOfThumb};

    #[test]
    fn exact_linear_data_is_degenerate() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
        let s = Sample::new(y, Regressors::from_column(x).unwrap()).unwrap();
        let err =
            Analysis::prepare(&s, Kernel::Uniform, &RuleOfThumb { omega: 2.0 / 9.0 }).unwrap_err();
        assert!(err.is_degenerate(), "{err}");
    }

    #[test]
    fn multivariate_design_is_standardized() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..30).map(|i| 100.0 * (i as f64 * 0.7).cos()).collect();
        let y: Vec<f64> = (0..30)
            .map(|i| a[i] + b[i] * 0.01 + (i % 3) as f64)
            .collect();
        let s = Sample::new(y, Regressors::from_columns(&[a, b]).unwrap()).unwrap();
        let prep =
            Analysis::prepare(&s, Kernel::Epanechnikov, &RuleOfThumb { omega: 0.2 }).unwrap();
        assert!((prep.analysis.bandwidth().h - 30f64.powf(-0.2)).abs() < 1e-12);
        let tests = vec![
            parse_test("q").unwrap(),
            parse_test("glr").unwrap(),
            parse_test("f").unwrap(),
        ];
        let ctx = prep.analysis.asymptotic_context(None).unwrap();
        let obs = observe(&tests, &prep.evaluation, &ctx).unwrap();
        assert!(obs[0].asymptotic.is_some() && obs[1].asymptotic.is_some());
        assert!(obs[2].asymptotic.is_none() && obs[2].asymptotic_note.is_some());
    }

    #[test]
    fn residual_mode_matches_refit_mode() {
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.41).sin() * 2.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 1.0 + v + ((i * 7) % 5) as f64 * 0.2)
            .collect();
        let s = Sample::new(y, Regressors::from_column(x.clone()).unwrap()).unwrap();
        let sel = FixedBandwidth(0.5);
        let prep = Analysis::prepare(&s, Kernel::Uniform, &sel).unwrap();
        let (an, ev) = Analysis::prepare_residuals(
            &prep.null_fit.residuals,
            &Regressors::from_column(x).unwrap(),
            Kernel::Uniform,
            &sel,
        )
        .unwrap();
        assert_eq!(ev.smooth, prep.evaluation.smooth);
        assert!(an.evaluate(&s.y).is_err());
    }
}
