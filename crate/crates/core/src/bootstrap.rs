//! Conditional (residual) and wild bootstrap calibration.
//!
//! The resampling pool is the nonparametric residual vector
//! `ε̂_t = Y_t − [1, X_t]'θ̂₀ − m̂_h(X_t)`; bootstrap responses are
//! `Y*_t = [1, X_t]'θ̂₀ + ε*_t` with `X` held fixed, and every statistic is
//! recomputed on `(X, Y*)` with the kernel and bandwidth of the observed
//! sample. Replicate `l` draws from ChaCha8 seeded with `seed` on stream
//! `l`, so the replicate vector does not depend on scheduling.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Analysis, Prepared};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::methods::SpecTest;
use crate::sample::Sample;
use crate::seed;
use crate::smoothing::BandwidthSelector;

pub const DEFAULT_REPLICATIONS: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMode {
    /// i.i.d. draws from the centered residual distribution.
    Conditional,
    /// `ε̂_t · w_t` with Rademacher `w_t`.
    Wild,
}

impl fmt::Display for BootstrapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BootstrapMode::Conditional => "conditional",
            BootstrapMode::Wild => "wild",
        })
    }
}

impl FromStr for BootstrapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conditional" => Ok(BootstrapMode::Conditional),
            "wild" => Ok(BootstrapMode::Wild),
            other => Err(Error::InvalidArgument(format!(
                "unknown bootstrap mode `{other}` (expected conditional or wild)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub mode: BootstrapMode,
    pub seed: u64,
    pub kernel: Kernel,
    pub bandwidth: Arc<dyn BandwidthSelector>,
    pub test: Arc<dyn SpecTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub observed: f64,
    pub replicates: Vec<f64>,
    pub p_star: f64,
}

impl BootstrapOutcome {
    pub fn new(observed: f64, replicates: Vec<f64>) -> Self {
        let p_star = p_star(observed, &replicates);
        BootstrapOutcome {
            observed,
            replicates,
            p_star,
        }
    }
}

/// Fraction of replicates strictly above the observed statistic.
pub fn p_star(observed: f64, replicates: &[f64]) -> f64 {
    let above = replicates.iter().filter(|&&r| observed < r).count();
    above as f64 / replicates.len() as f64
}

/// Rejects when `p* < α`.
pub fn bootstrap_reject(outcome: &BootstrapOutcome, alpha: f64) -> bool {
    outcome.p_star < alpha
}

/// Generates bootstrap responses for one observed sample.
#[derive(Debug, Clone)]
pub struct Resampler {
    null_fitted: Vec<f64>,
    pool: Vec<f64>,
    mode: BootstrapMode,
}

impl Resampler {
    pub fn new(prepared: &Prepared, mode: BootstrapMode) -> Result<Self> {
        let null = prepared
            .analysis
            .null()
            .ok_or_else(|| Error::Unsupported("bootstrap needs a parametric null".into()))?;
        let null_fitted = null.fitted(&prepared.null_fit.theta_hat);
        let ev = &prepared.evaluation;
        let mut pool: Vec<f64> = ev
            .residuals
            .iter()
            .zip(&ev.smooth.m_hat)
            .map(|(e, m)| e - m)
            .collect();
        if mode == BootstrapMode::Conditional {
            let mean = pool.iter().sum::<f64>() / pool.len() as f64;
            pool.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(Resampler {
            null_fitted,
            pool,
            mode,
        })
    }

    pub fn pool(&self) -> &[f64] {
        &self.pool
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.pool.len();
        match self.mode {
            BootstrapMode::Conditional => self
                .null_fitted
                .iter()
                .map(|g| g + self.pool[rng.random_range(0..n)])
                .collect(),
            BootstrapMode::Wild => self
                .null_fitted
                .iter()
                .zip(&self.pool)
                .map(|(g, e)| if rng.random::<bool>() { g + e } else { g - e })
                .collect(),
        }
    }
}

fn replicate_statistics(
    analysis: &Analysis,
    resampler: &Resampler,
    tests: &[Arc<dyn SpecTest>],
    seed: u64,
    l: usize,
) -> Result<Vec<f64>> {
    let mut rng = seed::rng(seed, l as u64);
    let attempt = |rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        let y = resampler.draw(rng);
        let ev = analysis.evaluate(&y)?;
        tests.iter().map(|t| t.statistic(&ev)).collect()
    };
    match attempt(&mut rng) {
        Err(e) if e.is_degenerate() => attempt(&mut rng).map_err(|e2| {
            Error::Degenerate(format!("bootstrap replicate {l} degenerate twice: {e2}"))
        }),
        other => other,
    }
}

/// Bootstraps several statistics from one shared set of resamples.
pub fn bootstrap_tests(
    prepared: &Prepared,
    tests: &[Arc<dyn SpecTest>],
    mode: BootstrapMode,
    replications: usize,
    seed: u64,
) -> Result<Vec<BootstrapOutcome>> {
    if replications == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one replication".into(),
        ));
    }
    let observed: Vec<f64> = tests
        .iter()
        .map(|t| t.statistic(&prepared.evaluation))
        .collect::<Result<_>>()?;
    let resampler = Resampler::new(prepared, mode)?;
    let rows: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|l| replicate_statistics(&prepared.analysis, &resampler, tests, seed, l))
        .collect::<Result<_>>()?;
    Ok(observed
        .into_iter()
        .enumerate()
        .map(|(j, obs)| BootstrapOutcome::new(obs, rows.iter().map(|r| r[j]).collect()))
        .collect())
}

/// Single-statistic bootstrap of `sample` under `config`.
pub fn conditional_bootstrap(
    sample: &Sample,
    config: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    let prepared = Analysis::prepare(sample, config.kernel, config.bandwidth.as_ref())?;
    let mut out = bootstrap_tests(
        &prepared,
        std::slice::from_ref(&config.test),
        config.mode,
        config.replications,
        config.seed,
    )?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::parse_test;
    use crate::sample::Regressors;
    use crate::smoothing::RuleOfThumb;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn null_sample(n: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                1.0 + v + {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    e
                }
            })
            .collect();
        Sample::new(y, Regressors::from_column(x).unwrap()).unwrap()
    }

    fn config(test: &str, mode: BootstrapMode, b: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            replications: b,
            mode,
            seed,
            kernel: Kernel::Uniform,
            bandwidth: Arc::new(RuleOfThumb { omega: 2.0 / 9.0 }),
            test: parse_test(test).unwrap(),
        }
    }

    #[test]
    fn p_star_uses_strict_inequality() {
        assert_eq!(p_star(5.0, &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(p_star(2.0, &[1.0, 2.0, 3.0, 4.0]), 0.5);
        let o = BootstrapOutcome::new(2.0, vec![2.0, 2.0]);
        assert_eq!(o.p_star, 0.0);
    }

    #[test]
    fn reject_rule() {
        let mk = |p| BootstrapOutcome {
            observed: 0.0,
            replicates: vec![],
            p_star: p,
        };
        assert!(bootstrap_reject(&mk(0.04), 0.05));
        assert!(!bootstrap_reject(&mk(0.05), 0.05));
        assert!(!bootstrap_reject(&mk(1.0), 0.99));
    }

    #[test]
    fn deterministic_and_lattice_valued() {
        let s = null_sample(60, 3);
        for mode in [BootstrapMode::Conditional, BootstrapMode::Wild] {
            let cfg = config("q", mode, 19, 11);
            let a = conditional_bootstrap(&s, &cfg).unwrap();
            let b = conditional_bootstrap(&s, &cfg).unwrap();
            assert_eq!(a, b);
            let scaled = a.p_star * 19.0;
            assert_eq!(scaled, scaled.round());
            assert!((0.0..=1.0).contains(&a.p_star));
        }
    }

    #[test]
    fn thread_count_does_not_change_replicates() {
        let s = null_sample(50, 5);
        let cfg = config("glr", BootstrapMode::Conditional, 23, 99);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| conditional_bootstrap(&s, &cfg).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| conditional_bootstrap(&s, &cfg).unwrap());
        assert_eq!(serial.replicates, parallel.replicates);
    }

    #[test]
    fn replicate_depends_only_on_seed_and_index() {
        let s = null_sample(40, 8);
        let short = conditional_bootstrap(&s, &config("q0", BootstrapMode::Wild, 5, 4)).unwrap();
        let long = conditional_bootstrap(&s, &config("q0", BootstrapMode::Wild, 12, 4)).unwrap();
        assert_eq!(short.replicates[..], long.replicates[..5]);
    }

    #[test]
    fn conditional_pool_is_centered() {
        let s = null_sample(80, 21);
        let prep = Analysis::prepare(&s, Kernel::Uniform, &RuleOfThumb { omega: 0.2 }).unwrap();
        let r = Resampler::new(&prep, BootstrapMode::Conditional).unwrap();
        let scale = r.pool().iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mean = r.pool().iter().sum::<f64>() / r.pool().len() as f64;
        assert!(mean.abs() <= 1e-12 * scale);
    }

    #[test]
    fn shared_resamples_match_single_runs() {
        let s = null_sample(45, 13);
        let prep =
            Analysis::prepare(&s, Kernel::Uniform, &RuleOfThumb { omega: 2.0 / 9.0 }).unwrap();
        let tests = vec![parse_test("q").unwrap(), parse_test("glr").unwrap()];
        let both = bootstrap_tests(&prep, &tests, BootstrapMode::Conditional, 15, 77).unwrap();
        let glr_only =
            conditional_bootstrap(&s, &config("glr", BootstrapMode::Conditional, 15, 77)).unwrap();
        assert_eq!(both[1], glr_only);
    }

    #[test]
    fn standardization_preserves_bootstrap_ranking() {
        let s = null_sample(70, 17);
        let prep =
            Analysis::prepare(&s, Kernel::Uniform, &RuleOfThumb { omega: 2.0 / 9.0 }).unwrap();
        let ctx = prep.analysis.asymptotic_context(None).unwrap();
        let tests = vec![parse_test("q").unwrap(), parse_test("glr").unwrap()];
        let outs = bootstrap_tests(&prep, &tests, BootstrapMode::Conditional, 29, 5).unwrap();
        for (t, o) in tests.iter().zip(&outs) {
            let z = |v: f64| t.asymptotic(v, &ctx).unwrap().z;
            let zs: Vec<f64> = o.replicates.iter().map(|&v| z(v)).collect();
            assert!(zs.iter().all(|v| v.is_finite()));
            assert_eq!(p_star(z(o.observed), &zs), o.p_star);
        }
    }

    #[test]
    fn zero_replications_rejected() {
        let s = null_sample(30, 1);
        assert!(conditional_bootstrap(&s, &config("q", BootstrapMode::Conditional, 0, 1)).is_err());
    }
}
