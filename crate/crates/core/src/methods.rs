//! The family of specification tests behind one trait, registered by name.
//!
//! Descriptor grammar: `q[:<loss>]`, `q0[:<loss>]`, `glr`, `f`, where
//! `<loss>` follows the [`Loss`] grammar and defaults to `quadratic`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::loss::Loss;
use crate::smoothing::SmoothFit;
use crate::stats::{
    asymptotic_calibration_glr, asymptotic_calibration_q, f_statistic, glr_statistic,
    loss_statistic, Denominator, Method, TestOutcome,
};

/// Everything the statistics need from one fitted sample.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub n: usize,
    /// Null-model residuals `ε̂_t`.
    pub residuals: Vec<f64>,
    pub ssr0: f64,
    pub smooth: SmoothFit,
}

impl Evaluation {
    pub fn ssr1(&self) -> f64 {
        self.smooth.ssr1
    }
}

/// Inputs of the homoskedastic asymptotic calibration.
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticContext {
    pub constants: KernelConstants,
    pub h: f64,
    pub omega_measure: f64,
    pub n: usize,
}

pub trait SpecTest: Send + Sync + fmt::Debug {
    fn method(&self) -> Method;

    /// Canonical descriptor, parseable by [`TestRegistry::parse`].
    fn descriptor(&self) -> String;

    fn statistic(&self, ev: &Evaluation) -> Result<f64>;

    fn asymptotic(&self, statistic: f64, ctx: &AsymptoticContext) -> Result<TestOutcome>;
}

/// `q_n` (`Ssr1`) or `q_n⁰` (`Ssr0`) for a given loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTest {
    pub loss: Loss,
    pub denominator: Denominator,
}

impl SpecTest for LossTest {
    fn method(&self) -> Method {
        match self.denominator {
            Denominator::Ssr1 => Method::LossQ,
            Denominator::Ssr0 => Method::LossQ0,
        }
    }

    fn descriptor(&self) -> String {
        format!("{}:{}", self.method().name(), self.loss)
    }

    fn statistic(&self, ev: &Evaluation) -> Result<f64> {
        loss_statistic(&ev.smooth, &self.loss, self.denominator, ev.ssr0, ev.n).map(|s| s.q)
    }

    fn asymptotic(&self, statistic: f64, ctx: &AsymptoticContext) -> Result<TestOutcome> {
        asymptotic_calibration_q(
            self.method(),
            statistic,
            &ctx.constants,
            self.loss.curvature(),
            ctx.h,
            ctx.omega_measure,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlrTest;

impl SpecTest for GlrTest {
    fn method(&self) -> Method {
        Method::Glr
    }

    fn descriptor(&self) -> String {
        "glr".into()
    }

    fn statistic(&self, ev: &Evaluation) -> Result<f64> {
        glr_statistic(ev.ssr0, ev.ssr1(), ev.n)
    }

    fn asymptotic(&self, statistic: f64, ctx: &AsymptoticContext) -> Result<TestOutcome> {
        asymptotic_calibration_glr(statistic, &ctx.constants, ctx.h, ctx.omega_measure)
    }
}

/// `(SSR₀ − SSR₁)/SSR₁`; bootstrap calibration only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FTest;

impl SpecTest for FTest {
    fn method(&self) -> Method {
        Method::F
    }

    fn descriptor(&self) -> String {
        "f".into()
    }

    fn statistic(&self, ev: &Evaluation) -> Result<f64> {
        f_statistic(ev.ssr0, ev.ssr1())
    }

    fn asymptotic(&self, _: f64, _: &AsymptoticContext) -> Result<TestOutcome> {
        Err(Error::Unsupported(
            "the F statistic has no centering constants; use bootstrap calibration".into(),
        ))
    }
}

type TestFactory = fn(&str) -> Result<Arc<dyn SpecTest>>;

struct TestEntry {
    name: &'static str,
    usage: &'static str,
    factory: TestFactory,
}

pub struct TestRegistry {
    entries: Vec<TestEntry>,
}

fn loss_arg(arg: &str) -> Result<Loss> {
    if arg.trim().is_empty() {
        Ok(Loss::Quadratic)
    } else {
        arg.parse()
    }
}

fn no_arg(name: &str, arg: &str) -> Result<()> {
    if arg.trim().is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "test `{name}` takes no argument, got `{arg}`"
        )))
    }
}

impl Default for TestRegistry {
    fn default() -> Self {
        let mut reg = TestRegistry {
            entries: Vec::new(),
        };
        reg.register("q", "q[:<loss>]", |arg| {
            Ok(Arc::new(LossTest {
                loss: loss_arg(arg)?,
                denominator: Denominator::Ssr1,
            }))
        });
        reg.register("q0", "q0[:<loss>]", |arg| {
            Ok(Arc::new(LossTest {
                loss: loss_arg(arg)?,
                denominator: Denominator::Ssr0,
            }))
        });
        reg.register("glr", "glr", |arg| {
            no_arg("glr", arg)?;
            Ok(Arc::new(GlrTest))
        });
        reg.register("f", "f", |arg| {
            no_arg("f", arg)?;
            Ok(Arc::new(FTest))
        });
        reg
    }
}

impl TestRegistry {
    pub fn register(&mut self, name: &'static str, usage: &'static str, factory: TestFactory) {
        self.entries.retain(|e| e.name != name);
        self.entries.push(TestEntry {
            name,
            usage,
            factory,
        });
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|e| e.name)
    }

    pub fn usage(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.usage).collect()
    }

    pub fn parse(&self, descriptor: &str) -> Result<Arc<dyn SpecTest>> {
        let descriptor = descriptor.trim();
        let (name, arg) = descriptor.split_once(':').unwrap_or((descriptor, ""));
        let entry = self
            .entries
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown test `{name}`; expected one of: {}",
                    self.usage().join(", ")
                ))
            })?;
        (entry.factory)(arg)
    }
}

/// Parses a test descriptor with the default registry.
pub fn parse_test(descriptor: &str) -> Result<Arc<dyn SpecTest>> {
    TestRegistry::default().parse(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev() -> Evaluation {
        Evaluation {
            n: 2,
            residuals: vec![1.5, -1.5],
            ssr0: 4.5,
            smooth: SmoothFit {
                m_hat: vec![1.0, -1.0],
                ssr1: 0.5,
                sigma2_hat: 0.25,
            },
        }
    }

    #[test]
    fn registry_round_trips_descriptors() {
        let reg = TestRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["q", "q0", "glr", "f"]);
        for d in ["q:quadratic", "q0:linex:0.5,1", "q:tq:0.5", "glr", "f"] {
            let t = reg.parse(d).unwrap();
            assert_eq!(t.descriptor(), d);
        }
        assert_eq!(reg.parse("q").unwrap().descriptor(), "q:quadratic");
        for bad in ["glr:x", "wald", "q:huber"] {
            assert!(reg.parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn statistics_dispatch() {
        let e = ev();
        let q = parse_test("q").unwrap().statistic(&e).unwrap();
        assert_eq!(q, 2.0 / 0.25);
        let q0 = parse_test("q0").unwrap().statistic(&e).unwrap();
        assert_eq!(q0, 2.0 / 2.25);
        let glr = parse_test("glr").unwrap().statistic(&e).unwrap();
        assert!((glr - 9f64.ln()).abs() < 1e-14);
        assert_eq!(parse_test("f").unwrap().statistic(&e).unwrap(), 8.0);
    }

    #[test]
    fn f_has_no_asymptotic_calibration() {
        let ctx = AsymptoticContext {
            constants: crate::kernels::Kernel::Uniform.constants(1, 1e-10).unwrap(),
            h: 0.3,
            omega_measure: 1.0,
            n: 2,
        };
        assert!(matches!(
            FTest.asymptotic(1.0, &ctx),
            Err(Error::Unsupported(_))
        ));
        assert!(GlrTest.asymptotic(1.0, &ctx).is_ok());
    }
}
