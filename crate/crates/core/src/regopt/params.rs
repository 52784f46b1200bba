use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the raw gradient is scaled before the `eta` step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradNorm {
    /// Divide by the gradient's max-abs value: the largest pixel moves by `eta`.
    #[default]
    MaxAbs,
    /// Divide by the gradient's root-mean-square: a typical pixel moves by `eta`.
    Rms,
    /// Use `∂a_i/∂x` as is.
    Raw,
}

/// Regularization strengths and optimizer settings for one ascent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegParams {
    /// L2 decay, `x <- (1 - theta_decay) x`. In `[0, 1)`.
    pub theta_decay: f64,
    /// Gaussian blur sigma in pixels.
    pub theta_b_width: f64,
    /// Blur every this many steps; 0 never blurs.
    pub theta_b_every: u32,
    /// Zero pixels whose channel norm is at or below this percentile.
    pub theta_n_pct: f64,
    /// Zero pixels whose contribution `|sum_c x * grad|` is at or below this percentile.
    pub theta_c_pct: f64,
    pub eta: f64,
    pub steps: usize,
    pub seed: u64,
    /// Std of the zero-mean Gaussian initial image.
    pub init_sigma: f64,
    pub grad_norm: GradNorm,
}

impl Default for RegParams {
    fn default() -> Self {
        RegParams {
            theta_decay: 0.0,
            theta_b_width: 0.0,
            theta_b_every: 0,
            theta_n_pct: 0.0,
            theta_c_pct: 0.0,
            eta: 1.0,
            steps: 500,
            seed: 0,
            init_sigma: 10.0,
            grad_norm: GradNorm::MaxAbs,
        }
    }
}

impl RegParams {
    /// Default optimizer settings with the five regularization strengths set.
    pub fn with_thetas(decay: f64, b_width: f64, b_every: u32, n_pct: f64, c_pct: f64) -> Result<Self> {
        let p = RegParams {
            theta_decay: decay,
            theta_b_width: b_width,
            theta_b_every: b_every,
            theta_n_pct: n_pct,
            theta_c_pct: c_pct,
            ..RegParams::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn preset(preset: Preset) -> Self {
        let (d, w, e, n, c) = preset.thetas();
        RegParams::with_thetas(d, w, e, n, c).expect("presets are valid")
    }

    /// The five regularization strengths in table order.
    pub fn thetas(&self) -> (f64, f64, u32, f64, f64) {
        (
            self.theta_decay,
            self.theta_b_width,
            self.theta_b_every,
            self.theta_n_pct,
            self.theta_c_pct,
        )
    }

    /// Same settings with every regularizer disabled.
    pub fn unregularized(&self) -> Self {
        RegParams {
            theta_decay: 0.0,
            theta_b_width: 0.0,
            theta_b_every: 0,
            theta_n_pct: 0.0,
            theta_c_pct: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if !(0.0..1.0).contains(&self.theta_decay) {
            return bad(format!("theta_decay {} not in [0, 1)", self.theta_decay));
        }
        if !(self.theta_b_width >= 0.0 && self.theta_b_width.is_finite()) {
            return bad(format!("theta_b_width {} must be >= 0", self.theta_b_width));
        }
        for (name, v) in [("theta_n_pct", self.theta_n_pct), ("theta_c_pct", self.theta_c_pct)] {
            if !(0.0..=100.0).contains(&v) {
                return bad(format!("{name} {v} not in [0, 100]"));
            }
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be > 0", self.eta));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return bad(format!("init_sigma {} must be >= 0", self.init_sigma));
        }
        Ok(())
    }
}

/// The four named hyperparameter combinations, each a distinct style.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Preset {
    One,
    Two,
    Three,
    Four,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::One, Preset::Two, Preset::Three, Preset::Four];

    /// `(theta_decay, theta_b_width, theta_b_every, theta_n_pct, theta_c_pct)`.
    pub fn thetas(self) -> (f64, f64, u32, f64, f64) {
        match self {
            Preset::One => (0.0, 0.5, 4, 50.0, 0.0),
            Preset::Two => (0.3, 0.0, 0, 20.0, 0.0),
            Preset::Three => (0.0001, 1.0, 4, 0.0, 0.0),
            Preset::Four => (0.0, 0.5, 4, 0.0, 90.0),
        }
    }

    pub fn number(self) -> usize {
        match self {
            Preset::One => 1,
            Preset::Two => 2,
            Preset::Three => 3,
            Preset::Four => 4,
        }
    }

    pub fn params(self) -> RegParams {
        RegParams::preset(self)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "preset-{}", self.number())
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// Accepts `preset-N` or a bare `N`.
    fn from_str(s: &str) -> Result<Self> {
        let n = s.strip_prefix("preset-").unwrap_or(s);
        match n {
            "1" => Ok(Preset::One),
            "2" => Ok(Preset::Two),
            "3" => Ok(Preset::Three),
            "4" => Ok(Preset::Four),
            _ => Err(Error::InvalidArgument(format!(
                "unknown preset `{s}` (preset-1 .. preset-4)"
            ))),
        }
    }
}

impl TryFrom<String> for Preset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Preset> for String {
    fn from(p: Preset) -> String {
        p.to_string()
    }
}
