//! Temporal mode-shapes of the single-photon wave-packet.
//!
//! Every shape is a normalized density `u(t) >= 0` with closed-form cumulative
//! `U(t)`, so nothing in here needs numerical integration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cumulative-mass cutoff for half-infinite supports.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeKind {
    Rectangular,
    BilateralExp,
    FallingExp,
    RisingExp,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Rectangular,
        ShapeKind::BilateralExp,
        ShapeKind::FallingExp,
        ShapeKind::RisingExp,
    ];

    /// Short name used on the command line and in CSV output.
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangular => "rect",
            ShapeKind::BilateralExp => "bilat",
            ShapeKind::FallingExp => "fallexp",
            ShapeKind::RisingExp => "riseexp",
        }
    }

    fn rate_key(self) -> &'static str {
        match self {
            ShapeKind::Rectangular => "T",
            ShapeKind::BilateralExp => "kappa",
            ShapeKind::FallingExp | ShapeKind::RisingExp => "k",
        }
    }

    /// Rate that gives unit characteristic width: T = 1, κ = 4, k = 2.
    pub fn normalized_rate(self) -> f64 {
        match self {
            ShapeKind::Rectangular => 1.0,
            ShapeKind::BilateralExp => 4.0,
            ShapeKind::FallingExp | ShapeKind::RisingExp => 2.0,
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" | "rectangular" => Ok(ShapeKind::Rectangular),
            "bilat" | "bilateral" => Ok(ShapeKind::BilateralExp),
            "fallexp" | "falling" => Ok(ShapeKind::FallingExp),
            "riseexp" | "rising" => Ok(ShapeKind::RisingExp),
            other => Err(Error::Parse(format!(
                "unknown shape '{other}' (expected rect, bilat, fallexp, riseexp)"
            ))),
        }
    }
}

/// Closed or half-infinite interval on the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A normalized single-photon mode-shape `u(t)`.
///
/// `rate` is the duration `T` for the rectangular pulse (density `1/T` on
/// `[0, T)`), `κ` for the bilateral exponential and `k` for the unilateral
/// exponentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeShape {
    kind: ShapeKind,
    rate: f64,
}

impl ModeShape {
    pub fn new(kind: ShapeKind, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{} rate must be positive and finite, got {rate}",
                kind.name()
            )));
        }
        Ok(ModeShape { kind, rate })
    }

    /// The shape with unit characteristic width.
    pub fn normalized(kind: ShapeKind) -> Self {
        ModeShape {
            kind,
            rate: kind.normalized_rate(),
        }
    }

    pub fn kind(&self) -> ShapeKind {
        self.kind
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Time-rescaled shape `u_a(t) = u(t/a) / a`.
    pub fn rescaled(&self, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rescaling factor must be positive, got {a}"
            )));
        }
        let rate = match self.kind {
            ShapeKind::Rectangular => self.rate * a,
            _ => self.rate / a,
        };
        ModeShape::new(self.kind, rate)
    }

    /// Exact support of the density (endpoints may be infinite).
    pub fn support(&self) -> Interval {
        match self.kind {
            ShapeKind::Rectangular => Interval::new(0.0, self.rate),
            ShapeKind::BilateralExp => Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            ShapeKind::FallingExp => Interval::new(0.0, f64::INFINITY),
            ShapeKind::RisingExp => Interval::new(f64::NEG_INFINITY, 0.0),
        }
    }

    /// Points where the density or its derivative is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ShapeKind::Rectangular => vec![0.0, self.rate],
            _ => vec![0.0],
        }
    }

    /// The density `u(t)`.
    pub fn density(&self, t: f64) -> f64 {
        let r = self.rate;
        match self.kind {
            // Half-open [0, T): right-continuous at the leading edge.
            ShapeKind::Rectangular => {
                if (0.0..r).contains(&t) {
                    1.0 / r
                } else {
                    0.0
                }
            }
            ShapeKind::BilateralExp => 0.5 * r * (-r * t.abs()).exp(),
            ShapeKind::FallingExp => {
                if t >= 0.0 {
                    r * (-r * t).exp()
                } else {
                    0.0
                }
            }
            ShapeKind::RisingExp => {
                if t <= 0.0 {
                    r * (r * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `sqrt(u(t))`, evaluated without squaring round-off for the exponentials.
    pub fn sqrt_density(&self, t: f64) -> f64 {
        let r = self.rate;
        match self.kind {
            ShapeKind::Rectangular => self.density(t).sqrt(),
            ShapeKind::BilateralExp => (0.5 * r).sqrt() * (-0.5 * r * t.abs()).exp(),
            ShapeKind::FallingExp => {
                if t >= 0.0 {
                    r.sqrt() * (-0.5 * r * t).exp()
                } else {
                    0.0
                }
            }
            ShapeKind::RisingExp => {
                if t <= 0.0 {
                    r.sqrt() * (0.5 * r * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Cumulative `U(t) = ∫_{-∞}^t u(s) ds` in closed form.
    pub fn cumulative(&self, t: f64) -> f64 {
        let r = self.rate;
        match self.kind {
            ShapeKind::Rectangular => (t / r).clamp(0.0, 1.0),
            ShapeKind::BilateralExp => {
                if t < 0.0 {
                    0.5 * (r * t).exp()
                } else {
                    1.0 - 0.5 * (-r * t).exp()
                }
            }
            ShapeKind::FallingExp => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-r * t).exp_m1()
                }
            }
            ShapeKind::RisingExp => {
                if t >= 0.0 {
                    1.0
                } else {
                    (r * t).exp()
                }
            }
        }
    }

    /// `ln U(t)`, accurate in both tails. `-∞` where `U(t) = 0`.
    pub fn ln_cumulative(&self, t: f64) -> f64 {
        let r = self.rate;
        match self.kind {
            ShapeKind::Rectangular => {
                if t <= 0.0 {
                    f64::NEG_INFINITY
                } else if t >= r {
                    0.0
                } else {
                    (t / r).ln()
                }
            }
            ShapeKind::BilateralExp => {
                if t < 0.0 {
                    r * t - std::f64::consts::LN_2
                } else {
                    (-0.5 * (-r * t).exp()).ln_1p()
                }
            }
            ShapeKind::FallingExp => {
                if t <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (-(-r * t).exp_m1()).ln()
                }
            }
            ShapeKind::RisingExp => r * t.min(0.0),
        }
    }

    /// Inverse cumulative: the time at which `U(t) = p`, for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        let r = self.rate;
        Ok(match self.kind {
            ShapeKind::Rectangular => p * r,
            ShapeKind::BilateralExp => {
                if p < 0.5 {
                    (2.0 * p).ln() / r
                } else {
                    -(2.0 * (1.0 - p)).ln() / r
                }
            }
            ShapeKind::FallingExp => -(-p).ln_1p() / r,
            ShapeKind::RisingExp => p.ln() / r,
        })
    }

    /// Time `t` with `1 − U(t) = q`, accurate for tail masses far below
    /// machine epsilon.
    pub fn upper_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail mass must lie in (0, 1), got {q}"
            )));
        }
        let r = self.rate;
        Ok(match self.kind {
            ShapeKind::Rectangular => (1.0 - q) * r,
            ShapeKind::BilateralExp => {
                if q < 0.5 {
                    -(2.0 * q).ln() / r
                } else {
                    (2.0 * (1.0 - q)).ln() / r
                }
            }
            ShapeKind::FallingExp => -q.ln() / r,
            ShapeKind::RisingExp => (-q).ln_1p() / r,
        })
    }

    /// Window on which `U(t) ∈ [eps, 1 - eps]`; the exact support for the
    /// rectangular pulse.
    pub fn effective_support(&self, eps: f64) -> Result<Interval> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "truncation epsilon must lie in (0, 0.5), got {eps}"
            )));
        }
        let support = self.support();
        let lo = if support.lo.is_finite() {
            support.lo
        } else {
            self.quantile(eps)?
        };
        let hi = if support.hi.is_finite() {
            support.hi
        } else {
            self.upper_quantile(eps)?
        };
        Ok(Interval::new(lo, hi))
    }

    /// Characteristic duration `w = [∫ u²(t) dt]^{-1}` in closed form.
    pub fn characteristic_width(&self) -> f64 {
        match self.kind {
            ShapeKind::Rectangular => self.rate,
            ShapeKind::BilateralExp => 4.0 / self.rate,
            ShapeKind::FallingExp | ShapeKind::RisingExp => 2.0 / self.rate,
        }
    }

    /// Reverse hazard `u(t)/U(t)`, the squared ideal adaptive gain; `+∞` where
    /// `u > 0` but `U = 0`, and 0 where the density vanishes.
    pub fn reverse_hazard(&self, t: f64) -> f64 {
        let r = self.rate;
        match self.kind {
            ShapeKind::Rectangular => {
                if !(0.0..r).contains(&t) {
                    0.0
                } else if t == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / t
                }
            }
            ShapeKind::BilateralExp => {
                if t <= 0.0 {
                    r
                } else {
                    r / (2.0 * (r * t).exp() - 1.0)
                }
            }
            ShapeKind::FallingExp => {
                if t < 0.0 {
                    0.0
                } else if t == 0.0 {
                    f64::INFINITY
                } else {
                    r / (r * t).exp_m1()
                }
            }
            ShapeKind::RisingExp => {
                if t <= 0.0 {
                    r
                } else {
                    0.0
                }
            }
        }
    }

    /// Earliest time from which `u/U <= ceiling` holds on the rest of the
    /// support. The reverse hazard is non-increasing over the support for all
    /// four shapes, so this splits the support into a clamped head and a free
    /// tail. `-∞` when nothing is clamped; the support end when everything is.
    pub fn hazard_crossover(&self, ceiling: f64) -> f64 {
        let r = self.rate;
        match self.kind {
            ShapeKind::Rectangular => (1.0 / ceiling).min(r),
            ShapeKind::FallingExp => (r / ceiling).ln_1p() / r,
            ShapeKind::RisingExp => {
                if r <= ceiling {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            ShapeKind::BilateralExp => {
                if r <= ceiling {
                    f64::NEG_INFINITY
                } else {
                    ((r / ceiling + 1.0) / 2.0).ln() / r
                }
            }
        }
    }
}

impl fmt::Display for ModeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rate == self.kind.normalized_rate() {
            write!(f, "{}", self.kind.name())
        } else {
            write!(f, "{}:{}={}", self.kind.name(), self.kind.rate_key(), self.rate)
        }
    }
}

/// Parses `rect`, `bilat`, `fallexp`, `riseexp`, with an optional rate
/// override such as `rect:T=2` or `bilat:kappa=4`.
impl FromStr for ModeShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, over) = match s.split_once(':') {
            Some((n, o)) => (n.trim(), Some(o.trim())),
            None => (s.trim(), None),
        };
        let kind: ShapeKind = name.parse()?;
        let Some(over) = over else {
            return Ok(ModeShape::normalized(kind));
        };
        let (key, value) = over
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value in '{s}'")))?;
        let key = key.trim();
        let accepted: &[&str] = match kind {
            ShapeKind::Rectangular => &["T"],
            ShapeKind::BilateralExp => &["kappa", "k"],
            _ => &["k"],
        };
        if !accepted.contains(&key) {
            return Err(Error::Parse(format!(
                "shape {} takes rate key {}, got '{key}'",
                kind.name(),
                kind.rate_key()
            )));
        }
        let rate: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rate value in '{s}'")))?;
        ModeShape::new(kind, rate)
    }
}
