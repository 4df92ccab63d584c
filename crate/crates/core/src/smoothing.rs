//! Nadaraya–Watson smoothing of null residuals and bandwidth rules.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::sample::Regressors;

/// Result of smoothing residuals at the sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub m_hat: Vec<f64>,
    /// `Σ (ε̂_t − m̂(X_t))²`
    pub ssr1: f64,
    pub sigma2_hat: f64,
}

/// Row-normalized Nadaraya–Watson weights at the sample points.
///
/// The weights depend only on `(X, K, h)`, so one smoother serves every
/// residual vector computed on the same regressors (bootstrap replicates
/// in particular). Each fitted value is summed over `s = 0..n` in order, so
/// results are independent of the thread count used to build the matrix.
#[derive(Debug, Clone)]
pub struct Smoother {
    n: usize,
    weights: Vec<f64>,
}

impl Smoother {
    pub fn new(x: &Regressors, kernel: Kernel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidBandwidth(h));
        }
        let n = x.n();
        let mut weights = vec![0.0; n * n];
        weights
            .par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(t, row)| {
                let xt = x.row(t);
                let mut total = 0.0;
                for (s, w) in row.iter_mut().enumerate() {
                    let k: f64 = xt
                        .iter()
                        .zip(x.row(s))
                        .map(|(a, b)| kernel.eval((a - b) / h))
                        .product();
                    *w = k;
                    total += k;
                }
                // total >= K(0)^p > 0: the own observation is always included.
                for w in row.iter_mut() {
                    *w /= total;
                }
            });
        Ok(Smoother { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight vector used for the fitted value at observation `t`.
    pub fn weights(&self, t: usize) -> &[f64] {
        &self.weights[t * self.n..(t + 1) * self.n]
    }

    pub fn smooth_into(&self, residuals: &[f64], out: &mut [f64]) {
        debug_assert_eq!(residuals.len(), self.n);
        for (t, o) in out.iter_mut().enumerate() {
            *o = self
                .weights(t)
                .iter()
                .zip(residuals)
                .map(|(w, e)| w * e)
                .sum();
        }
    }

    pub fn fit(&self, residuals: &[f64]) -> Result<SmoothFit> {
        if residuals.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: residuals.len(),
            });
        }
        let mut m_hat = vec![0.0; self.n];
        self.smooth_into(residuals, &mut m_hat);
        let ssr1: f64 = residuals
            .iter()
            .zip(&m_hat)
            .map(|(e, m)| (e - m) * (e - m))
            .sum();
        Ok(SmoothFit {
            sigma2_hat: ssr1 / self.n as f64,
            m_hat,
            ssr1,
        })
    }
}

/// Smooths `residuals` on `x` with product kernel `kernel` and bandwidth `h`.
pub fn nw_fit(residuals: &[f64], x: &Regressors, kernel: Kernel, h: f64) -> Result<SmoothFit> {
    if residuals.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            got: residuals.len(),
        });
    }
    Smoother::new(x, kernel, h)?.fit(residuals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed,
    Rot { omega: f64 },
    Cv { c1: f64, c2: f64, grid: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub h: f64,
    #[serde(flatten)]
    pub rule: BandwidthRule,
}

fn check_rate(omega: f64, p: usize) -> Result<()> {
    let upper = 1.0 / (2.0 * p as f64);
    if omega > 0.0 && omega < upper {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "bandwidth rate {omega} outside (0, {upper}) for p = {p}"
        )))
    }
}

/// `h = S_X · n^{−ω}`. With several columns the per-column bandwidths are
/// combined by their geometric mean.
pub fn rot_bandwidth(x: &Regressors, omega: f64) -> Result<Bandwidth> {
    let p = x.dim();
    check_rate(omega, p)?;
    let mut log_sum = 0.0;
    for j in 0..p {
        let sd = x.column_sd(j);
        if !(sd > 0.0) {
            return Err(Error::DegenerateColumn { column: j + 1 });
        }
        log_sum += sd.ln();
    }
    let scale = (log_sum / p as f64).exp();
    Ok(Bandwidth {
        h: scale * (x.n() as f64).powf(-omega),
        rule: BandwidthRule::Rot { omega },
    })
}

/// Leave-one-out criterion `Σ_t (ε̂_t − m̂_{h,−t}(X_t))²`. Returns `None`
/// when no observation has a neighbour within the bandwidth.
pub fn loo_criterion(residuals: &[f64], x: &Regressors, kernel: Kernel, h: f64) -> Option<f64> {
    let n = x.n();
    let terms: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let xt = x.row(t);
            let mut num = 0.0;
            let mut den = 0.0;
            for s in (0..n).filter(|&s| s != t) {
                let k: f64 = xt
                    .iter()
                    .zip(x.row(s))
                    .map(|(a, b)| kernel.eval((a - b) / h))
                    .product();
                num += k * residuals[s];
                den += k;
            }
            let pred = if den > 0.0 { num / den } else { 0.0 };
            let r = residuals[t] - pred;
            (r * r, den > 0.0)
        })
        .collect();
    if terms.iter().any(|&(_, ok)| ok) {
        Some(terms.iter().map(|&(v, _)| v).sum())
    } else {
        None
    }
}

/// Grid of `grid` equally spaced bandwidths on `[c1, c2] · n^{−1/(p+4)}`.
pub fn cv_grid(n: usize, p: usize, c1: f64, c2: f64, grid: usize) -> Vec<f64> {
    let rate = (n as f64).powf(-1.0 / (p as f64 + 4.0));
    let (lo, hi) = (c1 * rate, c2 * rate);
    (0..grid)
        .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
        .collect()
}

/// Leave-one-out cross-validated bandwidth over [`cv_grid`]. Ties keep the
/// smaller bandwidth.
pub fn cv_bandwidth(
    residuals: &[f64],
    x: &Regressors,
    kernel: Kernel,
    c1: f64,
    c2: f64,
    grid: usize,
) -> Result<Bandwidth> {
    if !(c1 > 0.0 && c2 > c1 && c2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs 0 < c1 < c2, got ({c1}, {c2})"
        )));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("cv grid needs >= 2 points".into()));
    }
    if residuals.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            got: residuals.len(),
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for h in cv_grid(x.n(), x.dim(), c1, c2, grid) {
        if let Some(score) = loo_criterion(residuals, x, kernel, h) {
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((h, score));
            }
        }
    }
    let (h, _) = best.ok_or_else(|| {
        Error::Degenerate("every cross-validation grid point has empty neighbourhoods".into())
    })?;
    Ok(Bandwidth {
        h,
        rule: BandwidthRule::Cv { c1, c2, grid },
    })
}

/// A bandwidth rule resolved against observed data.
pub trait BandwidthSelector: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Canonical descriptor string, parseable by [`BandwidthRegistry`].
    fn descriptor(&self) -> String;

    fn select(&self, residuals: &[f64], x: &Regressors, kernel: Kernel) -> Result<Bandwidth>;
}

#[derive(Debug, Clone, Copy)]
pub struct FixedBandwidth(pub f64);

impl BandwidthSelector for FixedBandwidth {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn descriptor(&self) -> String {
        format!("fixed:{}", self.0)
    }

    fn select(&self, _: &[f64], _: &Regressors, _: Kernel) -> Result<Bandwidth> {
        if !(self.0 > 0.0 && self.0.is_finite()) {
            return Err(Error::InvalidBandwidth(self.0));
        }
        Ok(Bandwidth {
            h: self.0,
            rule: BandwidthRule::Fixed,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RuleOfThumb {
    pub omega: f64,
}

impl BandwidthSelector for RuleOfThumb {
    fn name(&self) -> &'static str {
        "rot"
    }

    fn descriptor(&self) -> String {
        format!("rot:{}", self.omega)
    }

    fn select(&self, _: &[f64], x: &Regressors, _: Kernel) -> Result<Bandwidth> {
        rot_bandwidth(x, self.omega)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrossValidation {
    pub c1: f64,
    pub c2: f64,
    pub grid: usize,
}

impl Default for CrossValidation {
    fn default() -> Self {
        CrossValidation {
            c1: 0.5,
            c2: 2.0,
            grid: 20,
        }
    }
}

impl BandwidthSelector for CrossValidation {
    fn name(&self) -> &'static str {
        "cv"
    }

    fn descriptor(&self) -> String {
        format!("cv:{},{},{}", self.c1, self.c2, self.grid)
    }

    fn select(&self, residuals: &[f64], x: &Regressors, kernel: Kernel) -> Result<Bandwidth> {
        cv_bandwidth(residuals, x, kernel, self.c1, self.c2, self.grid)
    }
}

type SelectorFactory = fn(&str) -> Result<Box<dyn BandwidthSelector>>;

struct SelectorEntry {
    name: &'static str,
    usage: &'static str,
    factory: SelectorFactory,
}

/// Name-keyed registry of bandwidth rules.
///
/// Grammar: `fixed:<h>`, `rot:<omega>` (fractions such as `rot:2/9` are
/// accepted), `cv[:<c1>,<c2>,<grid>]`.
pub struct BandwidthRegistry {
    entries: Vec<SelectorEntry>,
}

/// Parses a decimal or a simple fraction `a/b`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("`{s}` is not a number"));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

impl Default for BandwidthRegistry {
    fn default() -> Self {
        let mut reg = BandwidthRegistry {
            entries: Vec::new(),
        };
        reg.register("fixed", "fixed:<h>", |arg| {
            let h = parse_number(arg)?;
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidBandwidth(h));
            }
            Ok(Box::new(FixedBandwidth(h)))
        });
        reg.register("rot", "rot:<omega> (e.g. rot:2/9)", |arg| {
            let omega = parse_number(arg)?;
            // Upper bound depends on p and is checked at selection time.
            if !(omega > 0.0 && omega < 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "rate exponent {omega} outside (0, 1/2)"
                )));
            }
            Ok(Box::new(RuleOfThumb { omega }))
        });
        reg.register("cv", "cv:<c1>,<c2>,<grid> (default cv:0.5,2,20)", |arg| {
            if arg.is_empty() {
                return Ok(Box::new(CrossValidation::default()));
            }
            let parts: Vec<&str> = arg.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidArgument(
                    "expected cv:<c1>,<c2>,<grid>".into(),
                ));
            }
            let c1 = parse_number(parts[0])?;
            let c2 = parse_number(parts[1])?;
            let grid: usize = parts[2].trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("grid size `{}` is not a count", parts[2]))
            })?;
            if !(c1 > 0.0 && c2 > c1) || grid < 2 {
                return Err(Error::InvalidArgument(
                    "cv needs 0 < c1 < c2 and grid >= 2".into(),
                ));
            }
            Ok(Box::new(CrossValidation { c1, c2, grid }))
        });
        reg
    }
}

impl BandwidthRegistry {
    pub fn register(&mut self, name: &'static str, usage: &'static str, factory: SelectorFactory) {
        self.entries.retain(|e| e.name != name);
        self.entries.push(SelectorEntry {
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

    pub fn parse(&self, descriptor: &str) -> Result<Box<dyn BandwidthSelector>> {
        let descriptor = descriptor.trim();
        let (name, arg) = descriptor.split_once(':').unwrap_or((descriptor, ""));
        let entry = self
            .entries
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown bandwidth rule `{name}`; expected one of: {}",
                    self.usage().join(", ")
                ))
            })?;
        (entry.factory)(arg)
    }
}

/// Parses a bandwidth descriptor with the default registry.
pub fn parse_bandwidth(descriptor: &str) -> Result<Box<dyn BandwidthSelector>> {
    BandwidthRegistry::default().parse(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Regressors {
        Regressors::from_column(v.to_vec()).unwrap()
    }

    #[test]
    fn isolated_points_reproduce_residuals() {
        let fit = nw_fit(&[2.0, 4.0], &col(&[0.0, 1.0]), Kernel::Uniform, 0.5).unwrap();
        assert_eq!(fit.m_hat, vec![2.0, 4.0]);
        assert_eq!(fit.ssr1, 0.0);
    }

    #[test]
    fn wide_bandwidth_gives_mean() {
        let fit = nw_fit(&[2.0, 4.0], &col(&[0.0, 1.0]), Kernel::Uniform, 2.0).unwrap();
        assert_eq!(fit.m_hat, vec![3.0, 3.0]);
        assert_eq!(fit.ssr1, 2.0);
        assert_eq!(fit.sigma2_hat, 1.0);
    }

    #[test]
    fn constant_residuals_are_reproduced() {
        let x = col(&[0.3, -1.2, 2.0, 0.1, 0.5]);
        let fit = nw_fit(&[1.5; 5], &x, Kernel::Epanechnikov, 0.7).unwrap();
        for m in &fit.m_hat {
            assert!((m - 1.5).abs() < 1e-14);
        }
        assert!(fit.ssr1 < 1e-26);
    }

    #[test]
    fn errors() {
        let x = col(&[0.0, 1.0]);
        assert!(nw_fit(&[1.0, 2.0], &x, Kernel::Uniform, 0.0).is_err());
        assert!(nw_fit(&[1.0, 2.0], &x, Kernel::Uniform, -1.0).is_err());
        assert!(nw_fit(&[1.0], &x, Kernel::Uniform, 1.0).is_err());
    }

    #[test]
    fn rule_of_thumb_examples() {
        // Two-point columns with sd 1 and 2 after scaling; n = 100.
        let unit: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let sd = col(&unit).column_sd(0);
        let scaled: Vec<f64> = unit.iter().map(|v| v / sd).collect();
        let h = rot_bandwidth(&col(&scaled), 2.0 / 9.0).unwrap().h;
        assert!((h - 0.359_381_366_380_462_6).abs() < 1e-12, "{h}");
        let doubled: Vec<f64> = scaled.iter().map(|v| 2.0 * v).collect();
        let h = rot_bandwidth(&col(&doubled), 0.2).unwrap().h;
        assert!((h - 0.796_214_341_106_994_9).abs() < 1e-12, "{h}");
        assert!(rot_bandwidth(&col(&[3.0; 10]), 0.2).is_err());
        assert!(rot_bandwidth(&col(&scaled), 0.5).is_err());
    }

    fn quadratic_design() -> (Vec<f64>, Regressors) {
        let x: Vec<f64> = (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect();
        let e: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v * v - 1.3 + 0.3 * ((i * 7919 % 13) as f64 / 13.0 - 0.5))
            .collect();
        (e, col(&x))
    }

    #[test]
    fn cv_attains_grid_minimum() {
        let (e, x) = quadratic_design();
        let bw = cv_bandwidth(&e, &x, Kernel::Uniform, 0.5, 2.0, 20).unwrap();
        let grid = cv_grid(50, 1, 0.5, 2.0, 20);
        let scores: Vec<f64> = grid
            .iter()
            .map(|&h| loo_criterion(&e, &x, Kernel::Uniform, h).unwrap())
            .collect();
        let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let at = loo_criterion(&e, &x, Kernel::Uniform, bw.h).unwrap();
        assert_eq!(at, best);
        assert!(at <= scores[0] && at <= scores[19]);
    }

    #[test]
    fn cv_two_point_grid_picks_better_endpoint() {
        let (e, x) = quadratic_design();
        let bw = cv_bandwidth(&e, &x, Kernel::Epanechnikov, 0.5, 2.0, 2).unwrap();
        let grid = cv_grid(50, 1, 0.5, 2.0, 2);
        let s0 = loo_criterion(&e, &x, Kernel::Epanechnikov, grid[0]).unwrap();
        let s1 = loo_criterion(&e, &x, Kernel::Epanechnikov, grid[1]).unwrap();
        assert_eq!(bw.h, if s1 < s0 { grid[1] } else { grid[0] });
    }

    #[test]
    fn cv_degenerate_grid_errors() {
        let x = col(&[0.0, 100.0, 200.0, 300.0]);
        let err = cv_bandwidth(&[1.0, 2.0, 3.0, 4.0], &x, Kernel::Uniform, 0.5, 1.0, 3);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn registry_grammar() {
        let reg = BandwidthRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["fixed", "rot", "cv"]);
        let x = col(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let e = [0.1, -0.2, 0.3, 0.0, -0.1, 0.2];
        assert_eq!(
            reg.parse("fixed:0.5")
                .unwrap()
                .select(&e, &x, Kernel::Uniform)
                .unwrap()
                .h,
            0.5
        );
        let rot = reg.parse("rot:2/9").unwrap();
        assert_eq!(rot.descriptor(), format!("rot:{}", 2.0 / 9.0));
        assert!(reg.parse("cv:0.5,2,20").is_ok());
        assert!(reg.parse("cv").is_ok());
        for bad in [
            "fixed:-1",
            "rot:0",
            "rot:1/0",
            "cv:2,1,5",
            "cv:1,2",
            "silverman",
        ] {
            assert!(reg.parse(bad).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_shift_equivariance(
            xs in prop::collection::vec(-3.0f64..3.0, 5..40),
            h in 0.05f64..3.0,
            shift in -10.0f64..10.0,
        ) {
            let n = xs.len();
            let x = col(&xs);
            let e: Vec<f64> = xs.iter().map(|v| (3.0 * v).sin()).collect();
            for k in Kernel::ALL {
                let ones = nw_fit(&vec![1.0; n], &x, k, h).unwrap();
                for m in &ones.m_hat {
                    prop_assert!((m - 1.0).abs() <= 1e-12);
                }
                let sm = Smoother::new(&x, k, h).unwrap();
                for t in 0..n {
                    prop_assert!(sm.weights(t).iter().all(|&w| w >= 0.0));
                }
                let base = sm.fit(&e).unwrap();
                let shifted: Vec<f64> = e.iter().map(|v| v + shift).collect();
                let moved = sm.fit(&shifted).unwrap();
                for (a, b) in base.m_hat.iter().zip(&moved.m_hat) {
                    prop_assert!((b - a - shift).abs() <= 1e-10 * (1.0 + shift.abs()));
                }
                prop_assert!((base.ssr1 - moved.ssr1).abs() <= 1e-9 * (1.0 + base.ssr1));
                let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for m in &base.m_hat {
                    prop_assert!(*m >= lo - 1e-12 && *m <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn permutation_equivariance(
            xs in prop::collection::vec(-3.0f64..3.0, 5..30),
            h in 0.1f64..2.0,
            rot in 1usize..29,
        ) {
            let n = xs.len();
            let e: Vec<f64> = xs.iter().map(|v| v * v - 1.0).collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let xp: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();
            let ep: Vec<f64> = perm.iter().map(|&i| e[i]).collect();
            let a = nw_fit(&e, &col(&xs), Kernel::Epanechnikov, h).unwrap();
            let b = nw_fit(&ep, &col(&xp), Kernel::Epanechnikov, h).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert!((b.m_hat[j] - a.m_hat[i]).abs() <= 1e-12);
            }
            prop_assert!((a.ssr1 - b.ssr1).abs() <= 1e-10 * (1.0 + a.ssr1));
        }
    }
}
