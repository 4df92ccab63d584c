//! Loss functions `d(z)` applied to the smoothed null residuals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|αz|` the linex loss is evaluated through its series.
pub const LINEX_SERIES_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Loss {
    /// `z²`
    Quadratic,
    /// `z²/2` inside `[-c, c]`, linear with slope `c` outside. Only
    /// once differentiable at `|z| = c`; admissible because only the
    /// behaviour at zero matters.
    TruncatedQuadratic { c: f64 },
    /// `(β/α²)(exp(αz) − 1 − αz)`; `α = 0` is the quadratic limit `βz²/2`.
    Linex { alpha: f64, beta: f64 },
}

impl Loss {
    pub fn truncated_quadratic(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "truncation point must be positive, got {c}"
            )));
        }
        Ok(Loss::TruncatedQuadratic { c })
    }

    pub fn linex(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "linex needs finite alpha and positive beta, got ({alpha}, {beta})"
            )));
        }
        Ok(Loss::Linex { alpha, beta })
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.eval_flagged(z).0
    }

    /// Returns `(d(z), saturated)`; `saturated` is set when the linex
    /// exponential overflows and the value is `+inf`.
    pub fn eval_flagged(&self, z: f64) -> (f64, bool) {
        match *self {
            Loss::Quadratic => (z * z, false),
            Loss::TruncatedQuadratic { c } => {
                let az = z.abs();
                if az <= c {
                    (0.5 * z * z, false)
                } else {
                    (c * az - 0.5 * c * c, false)
                }
            }
            Loss::Linex { alpha, beta } => {
                let x = alpha * z;
                if x.abs() < LINEX_SERIES_THRESHOLD {
                    (0.5 * beta * z * z * (1.0 + x / 3.0 + x * x / 12.0), false)
                } else {
                    let e = x.exp_m1();
                    if e.is_infinite() {
                        (f64::INFINITY, true)
                    } else {
                        (beta / (alpha * alpha) * (e - x), false)
                    }
                }
            }
        }
    }

    /// `D = d''(0)/2`.
    pub fn curvature(&self) -> f64 {
        match *self {
            Loss::Quadratic => 1.0,
            Loss::TruncatedQuadratic { .. } => 0.5,
            Loss::Linex { beta, .. } => 0.5 * beta,
        }
    }

    /// Finite-difference checks of the admissibility conditions at zero and
    /// of monotonicity in `|z|`.
    pub fn validate(&self) -> LossValidation {
        let h = self.probe_step();
        let d0 = self.eval(0.0);
        let slope = (self.eval(h) - self.eval(-h)) / (2.0 * h);
        let second = (self.eval(h) - 2.0 * d0 + self.eval(-h)) / (h * h);

        let grid: Vec<f64> = (0..=400).map(|i| 5.0 * i as f64 / 400.0).collect();
        let monotone = grid
            .windows(2)
            .all(|w| self.eval(w[1]) >= self.eval(w[0]) && self.eval(-w[1]) >= self.eval(-w[0]))
            && grid
                .iter()
                .all(|&z| self.eval(z) >= 0.0 && self.eval(-z) >= 0.0);

        LossValidation {
            zero_at_origin: d0 == 0.0,
            flat_at_origin: slope.abs() <= 1e-8,
            positive_curvature: second > 0.0 && second.is_finite(),
            monotone_in_abs: monotone,
            second_derivative: second,
        }
    }

    fn probe_step(&self) -> f64 {
        match *self {
            Loss::TruncatedQuadratic { c } => (1e-5f64).min(c * 1e-3),
            _ => 1e-5,
        }
    }
}

/// Outcome of [`Loss::validate`]; failures are reported, never raised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossValidation {
    pub zero_at_origin: bool,
    pub flat_at_origin: bool,
    pub positive_curvature: bool,
    pub monotone_in_abs: bool,
    pub second_derivative: f64,
}

impl LossValidation {
    pub fn passed(&self) -> bool {
        self.zero_at_origin
            && self.flat_at_origin
            && self.positive_curvature
            && self.monotone_in_abs
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::Quadratic => f.write_str("quadratic"),
            Loss::TruncatedQuadratic { c } => write!(f, "tq:{c}"),
            Loss::Linex { alpha, beta } => write!(f, "linex:{alpha},{beta}"),
        }
    }
}

/// Grammar: `quadratic`, `tq:<c>`, `linex:<alpha>,<beta>`.
impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::InvalidArgument(format!("loss `{s}`: {why}"));
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("`{v}` is not a number")))
        };
        match s.split_once(':') {
            None if s.eq_ignore_ascii_case("quadratic") => Ok(Loss::Quadratic),
            Some(("tq", c)) => Loss::truncated_quadratic(num(c)?),
            Some(("linex", args)) => {
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| bad("expected linex:<alpha>,<beta>"))?;
                Loss::linex(num(a)?, num(b)?)
            }
            _ => Err(bad("expected quadratic, tq:<c> or linex:<alpha>,<beta>")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn eval_examples() {
        assert_eq!(Loss::Quadratic.eval(2.0), 4.0);
        let lx = Loss::linex(1.0, 1.0).unwrap();
        assert!((lx.eval(1.0) - (E - 2.0)).abs() < 1e-15);
        assert_eq!(Loss::truncated_quadratic(1.0).unwrap().eval(2.0), 1.5);
        assert_eq!(Loss::linex(0.0, 1.0).unwrap().eval(3.0), 4.5);
    }

    #[test]
    fn linex_direct_matches_series_oracle() {
        // exp(x) − 1 − x = Σ_{k≥2} x^k/k!
        let series = |alpha: f64, beta: f64, z: f64| {
            let x: f64 = alpha * z;
            let mut term = x * x / 2.0;
            let mut sum = 0.0;
            for k in 3..60 {
                sum += term;
                term *= x / k as f64;
            }
            beta / (alpha * alpha) * sum
        };
        for &(a, z) in &[
            (1.0, 1.0),
            (0.5, -2.0),
            (0.2, 3.0),
            (-1.0, 0.7),
            (1e-3, 0.05),
        ] {
            let got = Loss::linex(a, 1.0).unwrap().eval(z);
            let want = series(a, 1.0, z);
            assert!((got - want).abs() <= 1e-13 * want.max(1e-300), "{a} {z}");
        }
    }

    #[test]
    fn linex_overflow_saturates() {
        let (v, sat) = Loss::linex(10.0, 1.0).unwrap().eval_flagged(100.0);
        assert!(v.is_infinite() && sat);
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(Loss::Quadratic.curvature(), 1.0);
        assert_eq!(Loss::linex(0.5, 1.0).unwrap().curvature(), 0.5);
        assert_eq!(Loss::truncated_quadratic(1.0).unwrap().curvature(), 0.5);
    }

    #[test]
    fn curvature_matches_finite_differences() {
        let h = 1e-5;
        for loss in [
            Loss::Quadratic,
            Loss::truncated_quadratic(1.0).unwrap(),
            Loss::linex(0.5, 1.0).unwrap(),
            Loss::linex(1.0, 2.0).unwrap(),
            Loss::linex(0.0, 1.0).unwrap(),
        ] {
            let fd = (loss.eval(h) - 2.0 * loss.eval(0.0) + loss.eval(-h)) / (h * h) / 2.0;
            let d = loss.curvature();
            assert!(((fd - d) / d).abs() < 1e-4, "{loss}: {fd} vs {d}");
        }
    }

    #[test]
    fn validation_passes_for_builtins() {
        for loss in [
            Loss::Quadratic,
            Loss::linex(1.0, 1.0).unwrap(),
            Loss::truncated_quadratic(0.1).unwrap(),
            Loss::linex(-0.5, 3.0).unwrap(),
        ] {
            let v = loss.validate();
            assert!(v.passed(), "{loss}: {v:?}");
        }
    }

    #[test]
    fn grammar() {
        assert_eq!("quadratic".parse::<Loss>().unwrap(), Loss::Quadratic);
        assert_eq!(
            "tq:0.5".parse::<Loss>().unwrap(),
            Loss::TruncatedQuadratic { c: 0.5 }
        );
        assert_eq!(
            "linex:0.2,1".parse::<Loss>().unwrap(),
            Loss::Linex {
                alpha: 0.2,
                beta: 1.0
            }
        );
        for bad in ["", "tq:-1", "linex:1", "linex:1,0", "huber:1", "tq:x"] {
            assert!(bad.parse::<Loss>().is_err(), "{bad}");
        }
        let l = Loss::linex(0.5, 1.0).unwrap();
        assert_eq!(l.to_string().parse::<Loss>().unwrap(), l);
    }

    proptest! {
        #[test]
        fn linex_approaches_half_square(alpha in -0.05f64..0.05, z in -3.0f64..3.0) {
            let v = Loss::linex(alpha, 1.0).unwrap().eval(z);
            prop_assert!((v - z * z / 2.0).abs() <= 5.0 * alpha.abs() + 1e-15);
        }

        #[test]
        fn losses_are_nonnegative(z in -50.0f64..50.0, alpha in -2.0f64..2.0, c in 0.01f64..5.0) {
            prop_assert!(Loss::Quadratic.eval(z) >= 0.0);
            prop_assert!(Loss::linex(alpha, 1.0).unwrap().eval(z) >= 0.0);
            prop_assert!(Loss::truncated_quadratic(c).unwrap().eval(z) >= 0.0);
        }
    }
}
