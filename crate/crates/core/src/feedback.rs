//! Feedback gain laws `λ(t)`, the local-oscillator phase law `Φ(t)`, and the
//! phase-variance integrals `∫_a^b λ²(s) ds` that the analytic module leans on.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modeshape::ModeShape;

/// Upper bound on any gain, in units of `w^{-1/2}`.
pub const DEFAULT_GAIN_CLAMP: f64 = 1e3;

/// Phase origin of the integral feedback law.
pub const ADAPTIVE_PHASE_ORIGIN: f64 = FRAC_PI_2;

/// Default heterodyne detuning, `400π / w`.
pub const DEFAULT_DETUNING: f64 = 400.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainLaw {
    /// `λ(t) = sqrt(u(t)/U(t))` for the bound shape.
    OptimalAdaptive(ModeShape),
    Constant(f64),
    /// `λ1` for `t <= t_l`, `λ2` afterwards.
    PiecewiseConstant {
        early: f64,
        late: f64,
        switch_time: f64,
    },
}

/// A gain law together with the ceiling that keeps it finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainStrategy {
    law: GainLaw,
    clamp: f64,
}

fn check_gain(name: &str, value: f64, clamp: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be a non-negative finite gain, got {value}"
        )));
    }
    if value > clamp {
        return Err(Error::InvalidParameter(format!(
            "{name} = {value} exceeds the gain clamp {clamp}"
        )));
    }
    Ok(())
}

fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let lo = a.max(lo);
    let hi = b.min(hi);
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

impl GainStrategy {
    pub fn optimal(shape: ModeShape) -> Self {
        GainStrategy {
            law: GainLaw::OptimalAdaptive(shape),
            clamp: DEFAULT_GAIN_CLAMP,
        }
    }

    pub fn constant(lambda: f64) -> Result<Self> {
        check_gain("constant gain", lambda, DEFAULT_GAIN_CLAMP)?;
        Ok(GainStrategy {
            law: GainLaw::Constant(lambda),
            clamp: DEFAULT_GAIN_CLAMP,
        })
    }

    pub fn piecewise(early: f64, late: f64, switch_time: f64) -> Result<Self> {
        check_gain("early gain", early, DEFAULT_GAIN_CLAMP)?;
        check_gain("late gain", late, DEFAULT_GAIN_CLAMP)?;
        if !switch_time.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "switch time must be finite, got {switch_time}"
            )));
        }
        Ok(GainStrategy {
            law: GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            },
            clamp: DEFAULT_GAIN_CLAMP,
        })
    }

    /// Replaces the gain ceiling. Fails if an existing constant level exceeds it.
    pub fn with_clamp(self, clamp: f64) -> Result<Self> {
        if !(clamp.is_finite() && clamp > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gain clamp must be positive, got {clamp}"
            )));
        }
        match self.law {
            GainLaw::Constant(l) => check_gain("constant gain", l, clamp)?,
            GainLaw::PiecewiseConstant { early, late, .. } => {
                check_gain("early gain", early, clamp)?;
                check_gain("late gain", late, clamp)?;
            }
            GainLaw::OptimalAdaptive(_) => {}
        }
        Ok(GainStrategy { clamp, ..self })
    }

    pub fn law(&self) -> &GainLaw {
        &self.law
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    /// `λ²(t)`.
    pub fn gain_sq(&self, t: f64) -> f64 {
        match self.law {
            GainLaw::Constant(l) => l * l,
            GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            } => {
                let l = if t <= switch_time { early } else { late };
                l * l
            }
            GainLaw::OptimalAdaptive(shape) => {
                shape.reverse_hazard(t).min(self.clamp * self.clamp)
            }
        }
    }

    /// `λ(t)`; the ideal adaptive gain is clamped where `u/U` diverges,
    /// including the leading edge where `U(t) = 0`.
    pub fn gain_value(&self, t: f64) -> f64 {
        match self.law {
            GainLaw::Constant(l) => l,
            GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            } => {
                if t <= switch_time {
                    early
                } else {
                    late
                }
            }
            GainLaw::OptimalAdaptive(_) => self.gain_sq(t).sqrt(),
        }
    }

    /// `∫_a^b λ²(s) ds`, in closed form for every law.
    pub fn phase_variance(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::InvalidInterval { a, b });
        }
        Ok(self.phase_variance_unchecked(a, b))
    }

    /// As [`phase_variance`](Self::phase_variance) without the interval check;
    /// callers guarantee `a <= b`.
    pub(crate) fn phase_variance_unchecked(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        match self.law {
            GainLaw::Constant(l) => l * l * (b - a),
            GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            } => {
                if early == late {
                    early * early * (b - a)
                } else {
                    early * early * overlap(a, b, f64::NEG_INFINITY, switch_time)
                        + late * late * overlap(a, b, switch_time, f64::INFINITY)
                }
            }
            GainLaw::OptimalAdaptive(shape) => {
                let support = shape.support();
                let lo = a.max(support.lo);
                let hi = b.min(support.hi);
                if !(hi > lo) {
                    return 0.0;
                }
                let c2 = self.clamp * self.clamp;
                let tc = shape.hazard_crossover(c2);
                let clamped = c2 * overlap(lo, hi, f64::NEG_INFINITY, tc);
                let free_lo = lo.max(tc);
                let free = if hi > free_lo {
                    shape.ln_cumulative(hi) - shape.ln_cumulative(free_lo)
                } else {
                    0.0
                };
                clamped + free
            }
        }
    }

    /// Upper bound of `λ²` on `[a, b]`.
    pub fn max_gain_sq_on(&self, a: f64, b: f64) -> f64 {
        match self.law {
            GainLaw::Constant(l) => l * l,
            GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            } => {
                let mut m: f64 = 0.0;
                if a <= switch_time {
                    m = m.max(early * early);
                }
                if b > switch_time {
                    m = m.max(late * late);
                }
                m
            }
            GainLaw::OptimalAdaptive(shape) => {
                // u/U is non-increasing on the support of every shape here
                let support = shape.support();
                let lo = a.max(support.lo);
                if lo > b.min(support.hi) {
                    0.0
                } else {
                    self.gain_sq(lo)
                }
            }
        }
    }

    /// Points where `λ(t)` is discontinuous or kinked.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.law {
            GainLaw::Constant(_) => Vec::new(),
            GainLaw::PiecewiseConstant { switch_time, .. } => vec![switch_time],
            GainLaw::OptimalAdaptive(shape) => {
                let mut pts = shape.breakpoints();
                let tc = shape.hazard_crossover(self.clamp * self.clamp);
                let support = shape.support();
                if tc.is_finite() && tc > support.lo && tc < support.hi {
                    pts.push(tc);
                }
                pts
            }
        }
    }

    /// The law seen by a pulse stretched by `a`: `λ → λ/√a`, `t_l → a t_l`.
    pub fn rescaled(&self, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rescaling factor must be positive, got {a}"
            )));
        }
        let s = a.sqrt();
        let law = match self.law {
            GainLaw::OptimalAdaptive(shape) => GainLaw::OptimalAdaptive(shape.rescaled(a)?),
            GainLaw::Constant(l) => GainLaw::Constant(l / s),
            GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            } => GainLaw::PiecewiseConstant {
                early: early / s,
                late: late / s,
                switch_time: switch_time * a,
            },
        };
        Ok(GainStrategy {
            law,
            clamp: self.clamp / s,
        })
    }
}

impl fmt::Display for GainStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.law {
            GainLaw::OptimalAdaptive(_) => f.write_str("opt"),
            GainLaw::Constant(l) => write!(f, "const:{l}"),
            GainLaw::PiecewiseConstant {
                early,
                late,
                switch_time,
            } => write!(f, "pw:{early},{late},{switch_time}"),
        }
    }
}

/// A gain law as written on the command line, before `opt` is bound to a shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrategySpec {
    Optimal,
    Constant(f64),
    Piecewise(f64, f64, f64),
}

impl StrategySpec {
    pub fn bind(&self, shape: ModeShape) -> Result<GainStrategy> {
        match *self {
            StrategySpec::Optimal => Ok(GainStrategy::optimal(shape)),
            StrategySpec::Constant(l) => GainStrategy::constant(l),
            StrategySpec::Piecewise(a, b, t) => GainStrategy::piecewise(a, b, t),
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
}

/// `opt`, `const:<λ>`, `pw:<λ1>,<λ2>,<t_l>`.
impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "opt" {
            return Ok(StrategySpec::Optimal);
        }
        if let Some(v) = s.strip_prefix("const:") {
            return Ok(StrategySpec::Constant(parse_f64(v, "gain")?));
        }
        if let Some(v) = s.strip_prefix("pw:") {
            let parts: Vec<&str> = v.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!(
                    "piecewise strategy needs pw:<l1>,<l2>,<t_l>, got '{s}'"
                )));
            }
            return Ok(StrategySpec::Piecewise(
                parse_f64(parts[0], "gain")?,
                parse_f64(parts[1], "gain")?,
                parse_f64(parts[2], "switch time")?,
            ));
        }
        Err(Error::Parse(format!(
            "unknown strategy '{s}' (expected opt, const:<l>, pw:<l1>,<l2>,<t_l>)"
        )))
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Optimal => f.write_str("opt"),
            StrategySpec::Constant(l) => write!(f, "const:{l}"),
            StrategySpec::Piecewise(a, b, t) => write!(f, "pw:{a},{b},{t}"),
        }
    }
}

/// How the local-oscillator phase `Φ(t)` evolves during the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoPhaseModel {
    Homodyne { phi0: f64 },
    Heterodyne { detuning: f64, phi0: f64 },
    /// `Φ(t) = π/2 + ∫_{-∞}^{t-τ} λ(s) dW(s)`.
    AdaptiveIntegral { strategy: GainStrategy, delay: f64 },
}

impl LoPhaseModel {
    pub fn homodyne() -> Self {
        LoPhaseModel::Homodyne {
            phi0: ADAPTIVE_PHASE_ORIGIN,
        }
    }

    pub fn heterodyne(detuning: f64) -> Self {
        LoPhaseModel::Heterodyne {
            detuning,
            phi0: 0.0,
        }
    }

    pub fn adaptive(strategy: GainStrategy, delay: f64) -> Result<Self> {
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "feedback delay must be non-negative, got {delay}"
            )));
        }
        Ok(LoPhaseModel::AdaptiveIntegral { strategy, delay })
    }

    pub fn initial_phase(&self) -> f64 {
        match self {
            LoPhaseModel::Homodyne { phi0 } => *phi0,
            LoPhaseModel::Heterodyne { phi0, .. } => *phi0,
            LoPhaseModel::AdaptiveIntegral { .. } => ADAPTIVE_PHASE_ORIGIN,
        }
    }

    pub fn delay(&self) -> f64 {
        match self {
            LoPhaseModel::AdaptiveIntegral { delay, .. } => *delay,
            _ => 0.0,
        }
    }

    /// Phase increment over one step `dt`. `delayed_time` and `delayed_dw`
    /// are the time `t - τ` and the record increment `dW(t - τ)`; the caller
    /// owns the delay line.
    pub fn phase_increment(&self, delayed_time: f64, delayed_dw: f64, dt: f64) -> f64 {
        match self {
            LoPhaseModel::Homodyne { .. } => 0.0,
            LoPhaseModel::Heterodyne { detuning, .. } => detuning * dt,
            LoPhaseModel::AdaptiveIntegral { strategy, .. } => {
                strategy.gain_value(delayed_time) * delayed_dw
            }
        }
    }

    /// Short label for CSV output.
    pub fn label(&self) -> String {
        match self {
            LoPhaseModel::Homodyne { phi0 } => format!("homodyne:{phi0}"),
            LoPhaseModel::Heterodyne { detuning, .. } => format!("heterodyne:{detuning}"),
            LoPhaseModel::AdaptiveIntegral { strategy, delay } => {
                format!("adaptive:{strategy}:tau={delay}")
            }
        }
    }
}

/// An LO model as written on the command line:
/// `homodyne[:phi0]`, `heterodyne[:delta]`, `adaptive:<strategy>[:tau=<τ>]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoSpec {
    Homodyne { phi0: f64 },
    Heterodyne { detuning: f64 },
    Adaptive { strategy: StrategySpec, delay: f64 },
}

impl LoSpec {
    pub fn bind(&self, shape: ModeShape) -> Result<LoPhaseModel> {
        match *self {
            LoSpec::Homodyne { phi0 } => Ok(LoPhaseModel::Homodyne { phi0 }),
            LoSpec::Heterodyne { detuning } => Ok(LoPhaseModel::heterodyne(detuning)),
            LoSpec::Adaptive { strategy, delay } => {
                LoPhaseModel::adaptive(strategy.bind(shape)?, delay)
            }
        }
    }

    pub fn with_delay(self, delay: f64) -> Self {
        match self {
            LoSpec::Adaptive { strategy, .. } => LoSpec::Adaptive { strategy, delay },
            other => other,
        }
    }
}

impl FromStr for LoSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "homodyne" {
            return Ok(LoSpec::Homodyne {
                phi0: ADAPTIVE_PHASE_ORIGIN,
            });
        }
        if let Some(v) = s.strip_prefix("homodyne:") {
            return Ok(LoSpec::Homodyne {
                phi0: parse_f64(v, "phase")?,
            });
        }
        if s == "heterodyne" {
            return Ok(LoSpec::Heterodyne {
                detuning: DEFAULT_DETUNING,
            });
        }
        if let Some(v) = s.strip_prefix("heterodyne:") {
            return Ok(LoSpec::Heterodyne {
                detuning: parse_f64(v, "detuning")?,
            });
        }
        if let Some(rest) = s.strip_prefix("adaptive:") {
            let (strategy, delay) = match rest.rsplit_once(":tau=") {
                Some((st, tau)) => (st, parse_f64(tau, "delay")?),
                None => (rest, 0.0),
            };
            return Ok(LoSpec::Adaptive {
                strategy: strategy.parse()?,
                delay,
            });
        }
        Err(Error::Parse(format!(
            "unknown LO model '{s}' (expected homodyne[:phi0], heterodyne[:delta], adaptive:<strategy>[:tau=<t>])"
        )))
    }
}
