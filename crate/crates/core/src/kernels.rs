//! Compactly supported kernels and the integral functionals that drive the
//! centering and scaling constants of both tests.
//!
//! With `K⋆K` the self-convolution `u ↦ ∫K(u+v)K(v)dv`:
//!
//! | symbol | definition                  |
//! |--------|-----------------------------|
//! | `a`    | `∫K²`                       |
//! | `b`    | `∫(K⋆K)²`                   |
//! | `c`    | `K(0) − a/2`                |
//! | `d`    | `∫(K − ½K⋆K)²`              |
//! | `t`    | `∫K·(K⋆K)`                  |
//!
//! Product kernels in `p` dimensions factorize, so every functional lifts
//! from its univariate value.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_pieces, DEFAULT_MAX_SUBDIVISIONS};

pub const DEFAULT_TOL: f64 = 1e-10;

/// The built-in symmetric kernels on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Uniform,
    Epanechnikov,
    Biweight,
    Triweight,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Uniform,
        Kernel::Epanechnikov,
        Kernel::Biweight,
        Kernel::Triweight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Biweight => "biweight",
            Kernel::Triweight => "triweight",
        }
    }

    pub fn support_halfwidth(self) -> f64 {
        1.0
    }

    /// `K(u)`, zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let au = u.abs();
        if au > 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Epanechnikov => 0.75 * s,
            Kernel::Biweight => 15.0 / 16.0 * s * s,
            Kernel::Triweight => 35.0 / 32.0 * s * s * s,
        }
    }

    /// `Π K(u_i)`.
    pub fn eval_product(self, u: &[f64]) -> Result<f64> {
        if u.is_empty() {
            return Err(Error::InvalidArgument(
                "product kernel needs dimension >= 1".into(),
            ));
        }
        Ok(u.iter().map(|&ui| self.eval(ui)).product())
    }

    /// `(K⋆K)(u)`, supported on `[-2, 2]`.
    ///
    /// Closed form for the uniform and Epanechnikov kernels, adaptive
    /// quadrature for the others.
    pub fn self_convolution(self, u: f64) -> f64 {
        let failed = Cell::new(None);
        let v = self.self_convolution_tracked(u, DEFAULT_TOL * 1e-3, &failed);
        match failed.into_inner() {
            // Integrand is a single polynomial piece; this branch is unreachable
            // for the built-in kernels but fall back to the best estimate.
            Some(estimate) => estimate,
            None => v,
        }
    }

    fn self_convolution_tracked(self, u: f64, tol: f64, failed: &Cell<Option<f64>>) -> f64 {
        let au = u.abs();
        if au >= 2.0 {
            return 0.0;
        }
        match self {
            Kernel::Uniform => (2.0 - au) / 4.0,
            Kernel::Epanechnikov => {
                let r = 2.0 - au;
                3.0 / 160.0 * r * r * r * (au * au + 6.0 * au + 4.0)
            }
            Kernel::Biweight | Kernel::Triweight => {
                let lo = (-1.0f64).max(-1.0 - u);
                let hi = 1.0f64.min(1.0 - u);
                match integrate_pieces(
                    |v| self.eval(u + v) * self.eval(v),
                    &[lo, hi],
                    tol,
                    DEFAULT_MAX_SUBDIVISIONS,
                ) {
                    Ok(r) => r.value,
                    Err(e) => {
                        failed.set(Some(e.estimate.value));
                        e.estimate.value
                    }
                }
            }
        }
    }

    /// The five univariate functionals, lifted to `dim` dimensions.
    ///
    /// Results are memoized per `(kernel, dim, tol)`.
    pub fn constants(self, dim: usize, tol: f64) -> Result<KernelConstants> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        type Cache = Mutex<HashMap<(Kernel, usize, u64), KernelConstants>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let key = (self, dim, tol.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(hit) = cache.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let one = self.univariate_constants(tol)?;
        let lifted = one.lift(dim);
        cache.lock().unwrap().insert(key, lifted);
        Ok(lifted)
    }

    fn integral<F: Fn(f64) -> f64>(
        functional: &'static str,
        f: F,
        points: &[f64],
        tol: f64,
    ) -> Result<f64> {
        integrate_pieces(f, points, tol, DEFAULT_MAX_SUBDIVISIONS)
            .map(|r| r.value)
            .map_err(|e| Error::Quadrature {
                functional,
                detail: e.to_string(),
            })
    }

    /// Convolution evaluated for use inside an outer integral; inner
    /// failures are reported against `functional`.
    fn with_convolution<T>(
        self,
        functional: &'static str,
        tol: f64,
        body: impl FnOnce(&dyn Fn(f64) -> f64) -> Result<T>,
    ) -> Result<T> {
        let failed = Cell::new(None);
        let inner_tol = tol * 1e-3;
        let conv = |u: f64| self.self_convolution_tracked(u, inner_tol, &failed);
        let out = body(&conv)?;
        if let Some(estimate) = failed.into_inner() {
            return Err(Error::Quadrature {
                functional,
                detail: format!("inner convolution integral failed near value {estimate:e}"),
            });
        }
        Ok(out)
    }

    fn univariate_constants(self, tol: f64) -> Result<KernelConstants> {
        const INNER: [f64; 3] = [-1.0, 0.0, 1.0];
        const OUTER: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

        let a = Self::integral("a", |u| self.eval(u).powi(2), &INNER, tol)?;
        let t = self.with_convolution("t", tol, |conv| {
            Self::integral("t", |u| self.eval(u) * conv(u), &INNER, tol)
        })?;
        let b = self.with_convolution("b", tol, |conv| {
            Self::integral("b", |u| conv(u).powi(2), &OUTER, tol)
        })?;
        let d = self.with_convolution("d", tol, |conv| {
            Self::integral("d", |u| (self.eval(u) - 0.5 * conv(u)).powi(2), &OUTER, tol)
        })?;
        let c = self.eval(0.0) - 0.5 * a;

        let out = KernelConstants {
            kernel: self,
            a,
            b,
            c,
            d,
            t,
            dim: 1,
            tol,
        };
        if self == Kernel::Uniform {
            let exact = KernelConstants::uniform_closed_form(tol);
            let worst = out.max_abs_diff(&exact);
            if worst > 10.0 * tol {
                return Err(Error::Quadrature {
                    functional: "uniform closed-form check",
                    detail: format!("quadrature deviates from closed form by {worst:e}"),
                });
            }
        }
        Ok(out)
    }

    /// `∫(2K − K⋆K)²` by direct quadrature; equals `4d` algebraically.
    pub fn efficiency_numerator(self, tol: f64) -> Result<f64> {
        self.with_convolution("efficiency numerator", tol, |conv| {
            Self::integral(
                "efficiency numerator",
                |u| (2.0 * self.eval(u) - conv(u)).powi(2),
                &[-2.0, -1.0, 0.0, 1.0, 2.0],
                tol,
            )
        })
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "rectangular" => Ok(Kernel::Uniform),
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            "triweight" => Ok(Kernel::Triweight),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel `{other}` (expected uniform, epanechnikov, biweight or triweight)"
            ))),
        }
    }
}

/// Kernel functionals for a product kernel in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub kernel: Kernel,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t: f64,
    pub dim: usize,
    pub tol: f64,
}

impl KernelConstants {
    /// Exact univariate values for the uniform kernel.
    pub fn uniform_closed_form(tol: f64) -> Self {
        KernelConstants {
            kernel: Kernel::Uniform,
            a: 0.5,
            b: 1.0 / 3.0,
            c: 0.25,
            d: 5.0 / 24.0,
            t: 3.0 / 8.0,
            dim: 1,
            tol,
        }
    }

    /// Lifts univariate constants to a `dim`-fold product kernel.
    pub fn lift(&self, dim: usize) -> Self {
        assert_eq!(self.dim, 1, "lift expects univariate constants");
        let p = dim as i32;
        let a = self.a.powi(p);
        let b = self.b.powi(p);
        let t = self.t.powi(p);
        KernelConstants {
            kernel: self.kernel,
            a,
            b,
            c: self.kernel.eval(0.0).powi(p) - 0.5 * a,
            d: if dim == 1 { self.d } else { a - t + 0.25 * b },
            t,
            dim,
            tol: self.tol,
        }
    }

    /// `4d / b`, the base of the relative-efficiency power.
    pub fn efficiency_ratio(&self) -> f64 {
        4.0 * self.d / self.b
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.a - other.a,
            self.b - other.b,
            self.c - other.c,
            self.d - other.d,
            self.t - other.t,
        ]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson with Richardson correction; independent of the
    /// Gauss–Kronrod path used by the implementation.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec<F: Fn(f64) -> f64>(
            f: &F,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    fn oracle_pieces<F: Fn(f64) -> f64>(f: &F, pts: &[f64], tol: f64) -> f64 {
        pts.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum()
    }

    fn oracle_conv(k: Kernel, u: f64) -> f64 {
        let lo = (-1.0f64).max(-1.0 - u);
        let hi = 1.0f64.min(1.0 - u);
        if hi <= lo {
            return 0.0;
        }
        simpson(&|v| k.eval(u + v) * k.eval(v), lo, hi, 1e-13)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Kernel::Uniform.eval(0.0), 0.5);
        assert_eq!(Kernel::Uniform.eval(1.5), 0.0);
        assert_eq!(Kernel::Epanechnikov.eval(0.0), 0.75);
        assert_eq!(Kernel::Uniform.eval_product(&[0.0, 0.0]).unwrap(), 0.25);
        assert_eq!(Kernel::Uniform.eval_product(&[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(Kernel::Epanechnikov.eval_product(&[0.0]).unwrap(), 0.75);
        assert!(Kernel::Uniform.eval_product(&[]).is_err());
    }

    #[test]
    fn kernels_are_symmetric_densities() {
        for k in Kernel::ALL {
            for i in 0..=400 {
                let u = -2.0 + 0.01 * i as f64;
                assert_eq!(k.eval(u), k.eval(-u));
                assert!(k.eval(u) >= 0.0);
            }
            assert!(k.eval(0.0) > 0.0);
            let mass = oracle_pieces(&|u| k.eval(u), &[-1.0, 0.0, 1.0], 1e-12);
            assert!((mass - 1.0).abs() <= 1e-8, "{k}: {mass}");
        }
    }

    #[test]
    fn self_convolution_examples() {
        assert_eq!(Kernel::Uniform.self_convolution(0.0), 0.5);
        assert_eq!(Kernel::Uniform.self_convolution(2.0), 0.0);
        assert!((Kernel::Epanechnikov.self_convolution(0.0) - 0.6).abs() < 1e-15);
        for k in Kernel::ALL {
            for i in 0..=40 {
                let u = -2.0 + 0.1 * i as f64;
                let got = k.self_convolution(u);
                let want = oracle_conv(k, u);
                assert!((got - want).abs() < 1e-11, "{k} at {u}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn uniform_constants_match_closed_form() {
        let c = Kernel::Uniform.constants(1, DEFAULT_TOL).unwrap();
        assert!((c.a - 0.5).abs() < 1e-12);
        assert!((c.t - 0.375).abs() < 1e-12);
        assert!((c.b - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.c - 0.25).abs() < 1e-12);
        assert!((c.d - 5.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn epanechnikov_constants_match_oracle() {
        let c = Kernel::Epanechnikov.constants(1, DEFAULT_TOL).unwrap();
        // Exact polynomial integration: t = 1269/2560, b = 167/385, d = 8387/39424.
        assert!((c.a - 0.6).abs() < 1e-12);
        assert!((c.c - 0.45).abs() < 1e-12);
        assert!((c.t - 1269.0 / 2560.0).abs() < 1e-10);
        assert!((c.b - 167.0 / 385.0).abs() < 1e-10);
        assert!((c.d - 8387.0 / 39424.0).abs() < 1e-10);
        assert!((c.efficiency_ratio() - 1.961_779_565_868_263).abs() < 1e-9);
        let b_oracle = oracle_pieces(
            &|u| oracle_conv(Kernel::Epanechnikov, u).powi(2),
            &[-2.0, 0.0, 2.0],
            1e-12,
        );
        assert!((c.b - b_oracle).abs() < 1e-9);
    }

    #[test]
    fn identity_and_inequalities_hold_for_all_kernels() {
        let tol = DEFAULT_TOL;
        for k in Kernel::ALL {
            let c = k.constants(1, tol).unwrap();
            assert!((c.d - (c.a - c.t + c.b / 4.0)).abs() <= 10.0 * tol, "{k}");
            assert!(c.a >= c.t - 10.0 * tol, "{k}");
            assert!(4.0 * c.d - c.b >= -10.0 * tol, "{k}");
            assert!(c.b <= c.a, "{k}");
            let num = k.efficiency_numerator(tol).unwrap();
            assert!((num - 4.0 * c.d).abs() <= 10.0 * tol, "{k}");
        }
    }

    #[test]
    fn product_lift_examples() {
        let c2 = Kernel::Uniform.constants(2, DEFAULT_TOL).unwrap();
        assert!((c2.a - 0.25).abs() < 1e-12);
        assert!((c2.b - 1.0 / 9.0).abs() < 1e-12);
        assert!((c2.c - 0.125).abs() < 1e-12);
        assert!((c2.d - 0.137_152_777_777_777_8).abs() < 1e-10);
    }

    /// Composite Gauss–Legendre on fixed panels; exact for the piecewise
    /// polynomials involved when panels align with the kernel breakpoints.
    fn gl_panels<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683_1,
            0.0,
            0.538_469_310_105_683_1,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189_08,
            0.478_628_670_499_366_47,
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_47,
            0.236_926_885_056_189_08,
        ];
        let width = (hi - lo) / panels as f64;
        (0..panels)
            .map(|i| {
                let a = lo + width * i as f64;
                let m = a + 0.5 * width;
                X.iter()
                    .zip(W)
                    .map(|(x, w)| w * f(m + 0.5 * width * x))
                    .sum::<f64>()
                    * 0.5
                    * width
            })
            .sum()
    }

    #[test]
    fn product_lift_matches_direct_two_dimensional_quadrature() {
        let k = Kernel::Uniform;
        let lifted = k.constants(2, DEFAULT_TOL).unwrap();
        let kk = |u: [f64; 2]| k.eval(u[0]) * k.eval(u[1]);
        // 2-D self-convolution of the product kernel, integrated over the
        // 2-D overlap box directly.
        let conv2 = |u: [f64; 2]| {
            let (lo0, hi0) = ((-1.0f64).max(-1.0 - u[0]), 1.0f64.min(1.0 - u[0]));
            let (lo1, hi1) = ((-1.0f64).max(-1.0 - u[1]), 1.0f64.min(1.0 - u[1]));
            if hi0 <= lo0 || hi1 <= lo1 {
                return 0.0;
            }
            gl_panels(
                |v0| gl_panels(|v1| kk([u[0] + v0, u[1] + v1]) * kk([v0, v1]), lo1, hi1, 1),
                lo0,
                hi0,
                1,
            )
        };
        let a2 = gl_panels(
            |u0| gl_panels(|u1| kk([u0, u1]).powi(2), -1.0, 1.0, 2),
            -1.0,
            1.0,
            2,
        );
        let b2 = gl_panels(
            |u0| gl_panels(|u1| conv2([u0, u1]).powi(2), -2.0, 2.0, 4),
            -2.0,
            2.0,
            4,
        );
        assert!((a2 - lifted.a).abs() < 100.0 * DEFAULT_TOL, "{a2}");
        assert!((b2 - lifted.b).abs() < 100.0 * DEFAULT_TOL, "{b2}");
    }

    #[test]
    fn parse_names() {
        assert_eq!("Uniform".parse::<Kernel>().unwrap(), Kernel::Uniform);
        assert_eq!("epa".parse::<Kernel>().unwrap(), Kernel::Epanechnikov);
        assert!("gaussian".parse::<Kernel>().is_err());
    }

    #[test]
    fn invalid_arguments() {
        assert!(Kernel::Uniform.constants(0, 1e-10).is_err());
        assert!(Kernel::Uniform.constants(1, 0.0).is_err());
    }
}
