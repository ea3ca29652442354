//! Decay factor α(t), hardness ratio λ_h(t) and pruning rate P(t).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which member of the soft/hard pruning family a run implements.
///
/// The mode fixes how the hardness ratio behaves; the decay start `alpha0`
/// and the rate ramp are configured separately (see [`ScheduleConfig::for_mode`]
/// for the conventional pairings).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Zeroize, constant rate.
    Sfp,
    /// Decay by α, constant rate.
    Srfp,
    /// Zeroize, ramped rate.
    Asfp,
    /// Decay by α, ramped rate.
    Asrfp,
    /// Every pruned filter is hard.
    Hfp,
    /// Hardness ratio ramps from `lambda_i` to `lambda_f`.
    Ghfp,
    /// Constant hardness ratio.
    SoftAndHard(f64),
}

impl Mode {
    pub fn is_soft_only(self) -> bool {
        matches!(self, Mode::Sfp | Mode::Srfp | Mode::Asfp | Mode::Asrfp)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Sfp => f.write_str("SFP"),
            Mode::Srfp => f.write_str("SRFP"),
            Mode::Asfp => f.write_str("ASFP"),
            Mode::Asrfp => f.write_str("ASRFP"),
            Mode::Hfp => f.write_str("HFP"),
            Mode::Ghfp => f.write_str("GHFP"),
            Mode::SoftAndHard(l) => write!(f, "SoftAndHard({l})"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Ok(match upper.as_str() {
            "SFP" => Mode::Sfp,
            "SRFP" => Mode::Srfp,
            "ASFP" => Mode::Asfp,
            "ASRFP" => Mode::Asrfp,
            "HFP" => Mode::Hfp,
            "GHFP" => Mode::Ghfp,
            _ => {
                let inner = upper
                    .strip_prefix("SOFTANDHARD(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))?;
                let l: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad SoftAndHard ratio in `{s}`")))?;
                Mode::SoftAndHard(l)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateRamp {
    Cubic,
    Linear,
    Constant,
}

impl FromStr for RateRamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cubic" => Ok(RateRamp::Cubic),
            "linear" => Ok(RateRamp::Linear),
            "constant" => Ok(RateRamp::Constant),
            _ => Err(Error::Config(format!("unknown rate ramp `{s}`"))),
        }
    }
}

impl fmt::Display for RateRamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateRamp::Cubic => "cubic",
            RateRamp::Linear => "linear",
            RateRamp::Constant => "constant",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub mode: Mode,
    pub alpha0: f64,
    pub epsilon: f64,
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub t_max: usize,
    /// Goal rate for every prunable layer without an override.
    pub goal_rate: f64,
    pub layer_rates: BTreeMap<String, f64>,
    pub rate_ramp: RateRamp,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ghfp,
            alpha0: 0.0,
            epsilon: 1e-4,
            lambda_i: 0.0,
            lambda_f: 1.0,
            t_max: 200,
            goal_rate: 0.0,
            layer_rates: BTreeMap::new(),
            rate_ramp: RateRamp::Cubic,
        }
    }
}

/// `1 − ((t_max−1−t)/(t_max−1))³`, rising from 0 at t=0 to 1 at t=t_max−1.
fn cubic_progress(t: usize, t_max: usize) -> f64 {
    let last = (t_max - 1) as f64;
    let remaining = (last - t as f64) / last;
    1.0 - remaining * remaining * remaining
}

impl ScheduleConfig {
    /// Conventional settings for a mode: zeroizing modes and HFP use α₀ = 0,
    /// decaying modes α₀ = 1; SFP and SRFP prune at a constant rate, the rest ramp.
    pub fn for_mode(mode: Mode, goal_rate: f64, t_max: usize) -> Self {
        let alpha0 = match mode {
            Mode::Srfp | Mode::Asrfp => 1.0,
            _ => 0.0,
        };
        let rate_ramp = match mode {
            Mode::Sfp | Mode::Srfp => RateRamp::Constant,
            _ => RateRamp::Cubic,
        };
        Self {
            mode,
            alpha0,
            t_max,
            goal_rate,
            rate_ramp,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.t_max < 2 {
            return bad(format!("t_max must be at least 2, got {}", self.t_max));
        }
        if !(0.0..=1.0).contains(&self.alpha0) {
            return bad(format!("alpha0 must lie in [0, 1], got {}", self.alpha0));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.alpha0 > 0.0 && self.epsilon >= self.alpha0 {
            return bad(format!(
                "epsilon ({}) must be below alpha0 ({})",
                self.epsilon, self.alpha0
            ));
        }
        for (name, v) in [("lambda_i", self.lambda_i), ("lambda_f", self.lambda_f)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        // A decreasing ratio would try to re-soften hard filters.
        if self.lambda_i > self.lambda_f {
            return bad(format!(
                "lambda_i ({}) must not exceed lambda_f ({})",
                self.lambda_i, self.lambda_f
            ));
        }
        if let Mode::SoftAndHard(l) = self.mode {
            if !(0.0..=1.0).contains(&l) {
                return bad(format!("SoftAndHard ratio must lie in [0, 1], got {l}"));
            }
        }
        match self.mode {
            Mode::Sfp | Mode::Asfp | Mode::Hfp if self.alpha0 != 0.0 => {
                return bad(format!("mode {} zeroizes pruned filters; alpha0 must be 0", self.mode));
            }
            Mode::Srfp | Mode::Asrfp if self.alpha0 == 0.0 => {
                return bad(format!("mode {} decays pruned filters; alpha0 must be positive", self.mode));
            }
            _ => {}
        }
        for (layer, &rate) in std::iter::once((&String::from("*"), &self.goal_rate)).chain(&self.layer_rates) {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidRate {
                    layer: layer.clone(),
                    rate,
                    reason: "rate must lie in [0, 1)",
                });
            }
        }
        Ok(())
    }

    fn check_epoch(&self, t: usize) -> Result<()> {
        if t >= self.t_max {
            return Err(Error::EpochOutOfRange {
                epoch: t,
                t_max: self.t_max,
            });
        }
        Ok(())
    }

    /// Decay factor for softly pruned filters at epoch `t`:
    /// `α₀·(α₀/ε)^(−t/(t_max−1))`, snapped to 0 once it reaches ε and at the
    /// last epoch.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_epoch(t)?;
        if self.alpha0 == 0.0 || t == self.t_max - 1 {
            return Ok(0.0);
        }
        let exponent = -(t as f64) / (self.t_max - 1) as f64;
        let value = self.alpha0 * (self.alpha0 / self.epsilon).powf(exponent);
        Ok(if value <= self.epsilon { 0.0 } else { value })
    }

    /// Fraction of this epoch's pruned filters that are pruned hard.
    pub fn lambda_h(&self, t: usize) -> Result<f64> {
        self.check_epoch(t)?;
        Ok(match self.mode {
            Mode::Sfp | Mode::Srfp | Mode::Asfp | Mode::Asrfp => 0.0,
            Mode::Hfp => 1.0,
            Mode::SoftAndHard(l) => l,
            Mode::Ghfp if t == self.t_max - 1 => self.lambda_f,
            Mode::Ghfp => {
                self.lambda_i + (self.lambda_f - self.lambda_i) * cubic_progress(t, self.t_max)
            }
        })
    }

    pub fn goal_rate_of(&self, layer: &str) -> f64 {
        self.layer_rates.get(layer).copied().unwrap_or(self.goal_rate)
    }

    /// Pruning rate of `layer` at epoch `t`.
    pub fn rate(&self, layer: &str, t: usize) -> Result<f64> {
        self.check_epoch(t)?;
        let goal = self.goal_rate_of(layer);
        Ok(match self.rate_ramp {
            RateRamp::Constant => goal,
            _ if t == self.t_max - 1 => goal,
            RateRamp::Linear => goal * t as f64 / (self.t_max - 1) as f64,
            RateRamp::Cubic => goal * cubic_progress(t, self.t_max),
        })
    }

    /// CSV of `t,alpha,lambda_h,rate_<layer>...` over the full schedule.
    pub fn dump_csv(&self, layers: &[String]) -> Result<String> {
        use std::fmt::Write as _;
        self.validate()?;
        let mut s = String::from("t,alpha,lambda_h");
        if layers.is_empty() {
            s.push_str(",rate");
        }
        for l in layers {
            write!(s, ",rate_{l}").unwrap();
        }
        s.push('\n');
        for t in 0..self.t_max {
            write!(s, "{t},{},{}", self.alpha(t)?, self.lambda_h(t)?).unwrap();
            if layers.is_empty() {
                write!(s, ",{}", self.rate("", t)?).unwrap();
            }
            for l in layers {
                write!(s, ",{}", self.rate(l, t)?).unwrap();
            }
            s.push('\n');
        }
        Ok(s)
    }
}
