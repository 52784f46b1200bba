//! Random hyperparameter search and single-regularizer sweeps.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ascent::{run_optimization, OptRunResult};
use super::RegParams;
use crate::error::{Error, Result};
use crate::net::{Network, UnitRef};

/// Sampling ranges for [`hyperparam_random_search`]. Bounds are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchRanges {
    /// Log-uniform.
    pub theta_decay: (f64, f64),
    pub theta_b_width: (f64, f64),
    /// Integer-uniform.
    pub theta_b_every: (u32, u32),
    pub theta_n_pct: (f64, f64),
    pub theta_c_pct: (f64, f64),
    /// Log-uniform.
    pub eta: (f64, f64),
    /// Chance that each regularizer is forced to its disabled value (0),
    /// so single-regularizer regions get explored. Not applied to a
    /// degenerate range, which pins its value.
    pub p_disable: f64,
}

impl Default for SearchRanges {
    fn default() -> Self {
        SearchRanges {
            theta_decay: (1e-5, 0.3),
            theta_b_width: (0.0, 2.0),
            theta_b_every: (0, 8),
            theta_n_pct: (0.0, 95.0),
            theta_c_pct: (0.0, 95.0),
            eta: (0.1, 10.0),
            p_disable: 0.3,
        }
    }
}

impl SearchRanges {
    /// Ranges that pin every field to the values in `p`.
    pub fn fixed(p: &RegParams) -> Self {
        SearchRanges {
            theta_decay: (p.theta_decay, p.theta_decay),
            theta_b_width: (p.theta_b_width, p.theta_b_width),
            theta_b_every: (p.theta_b_every, p.theta_b_every),
            theta_n_pct: (p.theta_n_pct, p.theta_n_pct),
            theta_c_pct: (p.theta_c_pct, p.theta_c_pct),
            eta: (p.eta, p.eta),
            p_disable: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64), min: f64, max: f64, max_open: bool| {
            let upper_ok = if max_open { hi < max } else { hi <= max };
            if !(lo <= hi && lo >= min && upper_ok && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "search range {name} = ({lo}, {hi}) is invalid"
                )));
            }
            Ok(())
        };
        check("theta_decay", self.theta_decay, 0.0, 1.0, true)?;
        check("theta_b_width", self.theta_b_width, 0.0, f64::MAX, false)?;
        check("theta_n_pct", self.theta_n_pct, 0.0, 100.0, false)?;
        check("theta_c_pct", self.theta_c_pct, 0.0, 100.0, false)?;
        check("eta", self.eta, f64::MIN_POSITIVE, f64::MAX, false)?;
        if self.theta_decay.0 == 0.0 && self.theta_decay.1 > 0.0 {
            return Err(Error::InvalidArgument(
                "log-uniform theta_decay range must start above 0".into(),
            ));
        }
        if self.theta_b_every.0 > self.theta_b_every.1 {
            return Err(Error::InvalidArgument("theta_b_every range is inverted".into()));
        }
        if !(0.0..=1.0).contains(&self.p_disable) {
            return Err(Error::InvalidArgument("p_disable must be in [0, 1]".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
    }
}

/// Draws `n` parameter sets. `base` supplies `steps`, `init_sigma` and
/// `grad_norm`; every sample gets its own seed from the stream.
pub fn sample_params(
    ranges: &SearchRanges,
    n: usize,
    seed: u64,
    base: &RegParams,
) -> Result<Vec<RegParams>> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let disabled = |rng: &mut ChaCha8Rng, degenerate: bool| {
            let coin = rng.random::<f64>();
            !degenerate && coin < ranges.p_disable
        };
        let mut p = base.clone();
        p.theta_decay = log_uniform(&mut rng, ranges.theta_decay);
        if disabled(&mut rng, ranges.theta_decay.0 == ranges.theta_decay.1) {
            p.theta_decay = 0.0;
        }
        p.theta_b_width = uniform(&mut rng, ranges.theta_b_width);
        if disabled(&mut rng, ranges.theta_b_width.0 == ranges.theta_b_width.1) {
            p.theta_b_width = 0.0;
        }
        let (lo, hi) = ranges.theta_b_every;
        p.theta_b_every = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        if disabled(&mut rng, lo == hi) {
            p.theta_b_every = 0;
        }
        p.theta_n_pct = uniform(&mut rng, ranges.theta_n_pct);
        if disabled(&mut rng, ranges.theta_n_pct.0 == ranges.theta_n_pct.1) {
            p.theta_n_pct = 0.0;
        }
        p.theta_c_pct = uniform(&mut rng, ranges.theta_c_pct);
        if disabled(&mut rng, ranges.theta_c_pct.0 == ranges.theta_c_pct.1) {
            p.theta_c_pct = 0.0;
        }
        p.eta = log_uniform(&mut rng, ranges.eta);
        p.seed = rng.random();
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

/// Runs `n` independently sampled configurations (in parallel) and returns
/// them sorted by final activation, highest first.
pub fn hyperparam_random_search(
    net: &Network,
    unit: &UnitRef,
    n: usize,
    ranges: &SearchRanges,
    seed: u64,
    base: &RegParams,
) -> Result<Vec<OptRunResult>> {
    if n == 0 {
        return Err(Error::InvalidArgument("search needs n >= 1".into()));
    }
    let samples = sample_params(ranges, n, seed, base)?;
    let mut results = samples
        .par_iter()
        .map(|p| run_optimization(net, unit, p))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| b.final_activation.total_cmp(&a.final_activation));
    Ok(results)
}

/// Which regularizer a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    Decay,
    Blur,
    Norm,
    Contribution,
}

impl Regularizer {
    pub const ALL: [Regularizer; 4] = [
        Regularizer::Decay,
        Regularizer::Blur,
        Regularizer::Norm,
        Regularizer::Contribution,
    ];

    /// Strongest value a sweep reaches.
    pub fn max_strength(self) -> f64 {
        match self {
            Regularizer::Decay => 0.3,
            Regularizer::Blur => 2.0,
            Regularizer::Norm => 95.0,
            Regularizer::Contribution => 95.0,
        }
    }

    /// `base` with every regularizer off except this one at `strength`.
    /// Blur sweeps run on a fixed cadence of every 4 steps.
    pub fn apply(self, base: &RegParams, strength: f64) -> RegParams {
        let mut p = base.unregularized();
        match self {
            Regularizer::Decay => p.theta_decay = strength,
            Regularizer::Blur => {
                p.theta_b_width = strength;
                p.theta_b_every = 4;
            }
            Regularizer::Norm => p.theta_n_pct = strength,
            Regularizer::Contribution => p.theta_c_pct = strength,
        }
        p
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::Decay => "decay",
            Regularizer::Blur => "blur",
            Regularizer::Norm => "norm",
            Regularizer::Contribution => "contribution",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" | "l2" => Ok(Regularizer::Decay),
            "blur" => Ok(Regularizer::Blur),
            "norm" | "clip-norm" => Ok(Regularizer::Norm),
            "contribution" | "contrib" | "clip-contribution" => Ok(Regularizer::Contribution),
            other => Err(Error::InvalidArgument(format!(
                "unknown regularizer `{other}` (decay|blur|norm|contribution)"
            ))),
        }
    }
}

/// `k` runs with one regularizer's strength spaced linearly from 0 to its
/// maximum, everything else off; ordered weakest to strongest.
pub fn regularization_sweep(
    net: &Network,
    unit: &UnitRef,
    which: Regularizer,
    k: usize,
    base: &RegParams,
) -> Result<Vec<OptRunResult>> {
    if k < 2 {
        return Err(Error::InvalidArgument("a sweep needs k >= 2".into()));
    }
    let max = which.max_strength();
    (0..k)
        .into_par_iter()
        .map(|i| {
            let strength = max * i as f64 / (k - 1) as f64;
            run_optimization(net, unit, &which.apply(base, strength))
        })
        .collect()
}
