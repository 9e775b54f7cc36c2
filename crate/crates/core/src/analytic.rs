//! Deterministic evaluation of the approximate figure of merit `F̃`: panel
//! quadrature of the nested integrals, and closed forms for constant gain.

mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{GainLaw, GainStrategy};
use crate::modeshape::{ModeShape, ShapeKind, DEFAULT_TRUNCATION_EPS};

pub use quadrature::GaussLegendre;
use quadrature::{Integrand, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Panels per characteristic width on the coarsest level.
    pub panels_per_width: usize,
    /// Tail weight of `√u` left outside the domain; the domain is the window
    /// where `U ∈ [eps², 1 − eps²]`.
    pub truncation_eps: f64,
    /// Absolute tolerance on successive panel halvings.
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes: 12,
            panels_per_width: 4,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
            tolerance: 1e-6,
            max_refinements: 4,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.panels_per_width == 0 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least one node and one panel".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.truncation_eps > 0.0 && self.truncation_eps < 0.1) {
            return Err(Error::InvalidParameter(format!(
                "truncation epsilon must lie in (0, 0.1), got {}",
                self.truncation_eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeritMethod {
    QuadratureZeroDelay,
    QuadratureDelay,
    ClosedForm,
}

impl MeritMethod {
    pub fn name(self) -> &'static str {
        match self {
            MeritMethod::QuadratureZeroDelay => "quad0",
            MeritMethod::QuadratureDelay => "quad",
            MeritMethod::ClosedForm => "closed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMerit {
    pub f_tilde: f64,
    pub error_estimate: f64,
    pub method: MeritMethod,
}

/// Halves the panel width until two successive values agree to `tolerance`.
fn refine(cfg: &QuadratureConfig, mut eval: impl FnMut(f64) -> f64) -> Result<(f64, f64)> {
    let mut prev = eval(1.0);
    let mut err = f64::INFINITY;
    let mut scale = 1.0;
    for _ in 0..cfg.max_refinements.max(1) {
        scale *= 0.5;
        let cur = eval(scale);
        err = (cur - prev).abs();
        prev = cur;
        if err < cfg.tolerance {
            return Ok((cur, err));
        }
    }
    Err(Error::ToleranceNotMet {
        best: prev,
        error_estimate: err,
        tolerance: cfg.tolerance,
    })
}

fn domain(shape: &ModeShape, cfg: &QuadratureConfig) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let win = shape.effective_support(cfg.truncation_eps * cfg.truncation_eps)?;
    let h = shape.characteristic_width() / cfg.panels_per_width as f64;
    Ok((win.lo, win.hi, h))
}

/// `F̃` for feedback without delay.
pub fn merit_quadrature_zero_delay(
    shape: &ModeShape,
    strategy: &GainStrategy,
    cfg: &QuadratureConfig,
) -> Result<AnalyticMerit> {
    let (lo, hi, h) = domain(shape, cfg)?;
    let gl = GaussLegendre::new(cfg.nodes);
    let problem = Integrand::new(shape, strategy, 0.0, lo, hi, &gl);
    let (f_tilde, error_estimate) = refine(cfg, |scale| {
        let mesh = Mesh::build(shape, strategy, 0.0, lo, hi, h * scale);
        problem.f_tilde_direct(&mesh)
    })?;
    Ok(AnalyticMerit {
        f_tilde,
        error_estimate,
        method: MeritMethod::QuadratureZeroDelay,
    })
}

/// `F̃` for feedback that sees the record only up to `t − τ`.
pub fn merit_quadrature_delay(
    shape: &ModeShape,
    strategy: &GainStrategy,
    tau: f64,
    cfg: &QuadratureConfig,
) -> Result<AnalyticMerit> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delay must be non-negative, got {tau}"
        )));
    }
    let (lo, hi, h) = domain(shape, cfg)?;
    let gl = GaussLegendre::new(cfg.nodes);
    let problem = Integrand::new(shape, strategy, tau, lo, hi, &gl);
    let (f_tilde, error_estimate) = refine(cfg, |scale| {
        let mesh = Mesh::build(shape, strategy, tau, lo, hi, h * scale);
        problem.f_tilde_recursive(&mesh)
    })?;
    Ok(AnalyticMerit {
        f_tilde,
        error_estimate,
        method: MeritMethod::QuadratureDelay,
    })
}

/// One pass of the delay quadrature on the coarsest mesh, without the
/// refinement check. For inner loops of searches whose result is
/// re-evaluated with [`merit_quadrature_delay`].
pub fn f_tilde_single_pass(
    shape: &ModeShape,
    strategy: &GainStrategy,
    tau: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let (lo, hi, h) = domain(shape, cfg)?;
    let gl = GaussLegendre::new(cfg.nodes);
    let problem = Integrand::new(shape, strategy, tau, lo, hi, &gl);
    Ok(problem.f_tilde_recursive(&Mesh::build(shape, strategy, tau, lo, hi, h)))
}

/// Closed-form `F̃` for constant gain `λ` and delay `τ` on the normalized
/// shape of kind `kind` (unit characteristic width).
pub fn merit_closed_form_constant(kind: ShapeKind, lambda: f64, tau: f64) -> Result<AnalyticMerit> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gain must be non-negative, got {lambda}"
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delay must be non-negative, got {tau}"
        )));
    }
    let l2 = lambda * lambda;
    let f_tilde = match kind {
        ShapeKind::RisingExp => rising(2.0, l2, tau),
        ShapeKind::FallingExp => falling(2.0, l2, tau),
        ShapeKind::BilateralExp => bilateral(4.0, l2, tau),
        ShapeKind::Rectangular => {
            if tau >= 0.5 {
                return Err(Error::ClosedFormOutOfRange(format!(
                    "rectangular closed form needs tau < T/2 = 0.5, got {tau}"
                )));
            }
            rectangular(l2, tau)
        }
    };
    Ok(AnalyticMerit {
        f_tilde,
        error_estimate: 0.0,
        method: MeritMethod::ClosedForm,
    })
}

/// Closed form for an arbitrary-rate shape, by rescaling to unit width.
pub fn merit_closed_form_for_shape(shape: &ModeShape, lambda: f64, tau: f64) -> Result<AnalyticMerit> {
    let w = shape.characteristic_width();
    merit_closed_form_constant(shape.kind(), lambda * w.sqrt(), tau / w)
}

/// Whether a closed form exists for this (shape, gain, delay).
pub fn closed_form_available(shape: &ModeShape, strategy: &GainStrategy, tau: f64) -> bool {
    matches!(strategy.law(), GainLaw::Constant(_))
        && !(shape.kind() == ShapeKind::Rectangular && tau / shape.characteristic_width() >= 0.5)
}

/// Closed form where one exists, otherwise quadrature.
pub fn merit_auto(
    shape: &ModeShape,
    strategy: &GainStrategy,
    tau: f64,
    cfg: &QuadratureConfig,
) -> Result<AnalyticMerit> {
    if let (GainLaw::Constant(l), true) = (strategy.law(), closed_form_available(shape, strategy, tau)) {
        return merit_closed_form_for_shape(shape, *l, tau);
    }
    merit_quadrature_delay(shape, strategy, tau, cfg)
}

fn rising(k: f64, l2: f64, tau: f64) -> f64 {
    let e1 = (-(k + 2.0 * l2) * tau).exp();
    let e2 = (-0.5 * (3.0 * k + 5.0 * l2) * tau).exp();
    let num = k * k + 2.0 * (1.0 - 4.0 * e1 + 2.0 * e2) * k * l2 + l2 * l2;
    1.0 - num / (4.0 * (k * k + 3.0 * k * l2 + 2.0 * l2 * l2))
}

fn falling(k: f64, l2: f64, tau: f64) -> f64 {
    let e1 = (-(k + 2.0 * l2) * tau).exp();
    let e2 = (-2.5 * (k + l2) * tau).exp();
    let num = 3.0 * k * k + 4.0 * k * l2 * (1.0 - 2.0 * e1 + e2) + l2 * l2;
    1.0 - num / (4.0 * (3.0 * k * k + 7.0 * k * l2 + 2.0 * l2 * l2))
}

fn bilateral(k: f64, l2: f64, tau: f64) -> f64 {
    let (k2, k3, k4) = (k * k, k * k * k, k * k * k * k);
    let e_a = (-2.5 * tau * (k + l2)).exp();
    let e_b = (-tau * (k + 2.0 * l2)).exp();
    let e_c = (-0.5 * tau * (3.0 * k + 5.0 * l2)).exp();
    let br = 6.0 * k4 + 23.0 * k3 * l2 + 34.0 * k2 * l2 * l2 + 21.0 * k * l2 * l2 * l2
        + 4.0 * l2 * l2 * l2 * l2
        - 2.0 * k * l2 * (k2 + 3.0 * k * l2 + 2.0 * l2 * l2) * e_a
        - 8.0 * k * l2 * (3.0 * k3 * tau + 7.0 * k2 * (l2 * tau + 1.0) + 2.0 * k * l2 * (l2 * tau + 5.0) + 2.0 * l2 * l2) * e_b
        + 2.0 * k * l2 * (3.0 * k + l2) * (2.0 * k2 * tau + k * (4.0 * l2 * tau + 5.0) + 6.0 * l2) * e_c;
    let kp = k + 2.0 * l2;
    1.0 - br / (8.0 * kp * kp * (3.0 * k2 + 4.0 * k * l2 + l2 * l2))
}

/// Unit-duration rectangle, `0 ≤ τ < 1/2`.
fn rectangular(x: f64, tau: f64) -> f64 {
    if x < 0.1 {
        rectangular_series(x, tau)
    } else {
        rectangular_exact(x, tau)
    }
}

fn rectangular_exact(x: f64, tau: f64) -> f64 {
    let x2 = x * x;
    1.0 - (2.0 * (1.0 + 1.0 / x) + ((-2.0 * x).exp() - 1.0) / x2) / 16.0
        - (-2.0 * x * tau).exp() * (-2.0 * x + 2.0 * x * tau + 5.0) / x2
        - (2.0 * (-2.0 * x).exp() - (-x * (2.0 - 1.5 * tau)).exp()) / (6.0 * x2)
        + 8.0 * (-0.5 * x * (1.0 + 3.0 * tau)).exp() / (3.0 * x2)
        + (-2.5 * x * tau).exp() * (-2.0 * x + 4.0 * x * tau + 5.0) / (2.0 * x2)
}

/// Taylor expansion in `x = λ²` of [`rectangular`]; the closed form cancels
/// catastrophically as `x → 0`.
fn rectangular_series(x: f64, t: f64) -> f64 {
    let p = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &a| acc * t + a);
    let c = [
        0.75,
        p(&[1.0, 0.0, -4.0, 4.0]) / 4.0,
        -p(&[7.0, 12.0, -36.0, -24.0, 58.0]) / 48.0,
        p(&[29.0, 75.0, -150.0, 0.0, -310.0, 510.0]) / 480.0,
        -p(&[117.0, 378.0, -765.0, 540.0, -810.0, -1980.0, 3722.0]) / 5760.0,
        p(&[67.0, 255.0, -585.0, 675.0, -675.0, 0.0, -2162.0, 3642.0]) / 11520.0,
        -p(&[1877.0, 8184.0, -21588.0, 31752.0, -32130.0, 13608.0, -13608.0, -95088.0, 163530.0])
            / 1_290_240.0,
        p(&[2503.0, 12285.0, -36900.0, 64260.0, -73710.0, 51030.0, -34020.0, 0.0, -202866.0, 336746.0])
            / 7_741_440.0,
        -p(&[
            30037.0, 163830.0, -553095.0, 1104840.0, -1457190.0, 1285956.0, -867510.0, 262440.0,
            -196830.0, -3621300.0, 6037594.0,
        ]) / 464_486_400.0,
    ];
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_cfg() -> QuadratureConfig {
        QuadratureConfig {
            tolerance: 1e-10,
            ..Default::default()
        }
    }

    #[test]
    fn rectangular_series_joins_closed_form() {
        for tau in [0.0, 0.1, 0.3, 0.45] {
            let a = rectangular_series(0.1, tau);
            let b = rectangular_exact(0.1, tau);
            assert!((a - b).abs() < 1e-13, "tau {tau}: {a} vs {b}");
        }
    }

    #[test]
    fn closed_form_examples() {
        let r = merit_closed_form_constant(ShapeKind::RisingExp, 2f64.sqrt(), 0.0).unwrap();
        assert!((r.f_tilde - 1.0).abs() < 1e-15);
        assert_eq!(r.error_estimate, 0.0);
        let f = merit_closed_form_constant(ShapeKind::FallingExp, 1e-3, 0.2).unwrap();
        assert!((f.f_tilde - 0.75).abs() < 1e-3);
        let f = merit_closed_form_constant(ShapeKind::FallingExp, 1.0, 0.0).unwrap();
        assert!((f.f_tilde - 99.0 / 112.0).abs() < 1e-15);
        assert!(matches!(
            merit_closed_form_constant(ShapeKind::Rectangular, 1.0, 0.5),
            Err(Error::ClosedFormOutOfRange(_))
        ));
    }

    #[test]
    fn closed_forms_match_reference_quadrature_values() {
        // independently computed by adaptive quadrature of the delayed integrals
        let cases = [
            (ShapeKind::RisingExp, 1.0, 0.1, 0.939781713615132),
            (ShapeKind::FallingExp, 2.0, 0.1, 0.8910102977755564),
            (ShapeKind::BilateralExp, 1.0, 0.1, 0.9098366945179446),
            (ShapeKind::Rectangular, 1.0, 0.1, 0.8812809708390008),
        ];
        for (kind, l, tau, want) in cases {
            let got = merit_closed_form_constant(kind, l, tau).unwrap().f_tilde;
            assert!((got - want).abs() < 1e-12, "{kind}: {got} vs {want}");
        }
    }

    #[test]
    fn zero_delay_optimal_gain_is_canonical() {
        for kind in ShapeKind::ALL {
            let shape = ModeShape::normalized(kind);
            let m = merit_quadrature_zero_delay(&shape, &GainStrategy::optimal(shape), &QuadratureConfig::default())
                .unwrap();
            assert!((m.f_tilde - 1.0).abs() < 1e-6, "{kind}: {}", m.f_tilde);
        }
    }

    #[test]
    fn delay_quadrature_matches_closed_forms() {
        for kind in ShapeKind::ALL {
            let shape = ModeShape::normalized(kind);
            for (l, tau) in [(0.5, 0.0), (1.0, 0.05), (4.0, 0.2)] {
                let g = GainStrategy::constant(l).unwrap();
                let q = merit_quadrature_delay(&shape, &g, tau, &quad_cfg()).unwrap();
                let c = merit_closed_form_constant(kind, l, tau).unwrap();
                assert!((q.f_tilde - c.f_tilde).abs() < 1e-9, "{kind} {l} {tau}: {} vs {}", q.f_tilde, c.f_tilde);
            }
        }
    }

    #[test]
    fn two_evaluators_agree_without_delay() {
        for kind in ShapeKind::ALL {
            let shape = ModeShape::normalized(kind);
            let g = GainStrategy::piecewise(2.0, 0.7, 0.3).unwrap();
            let a = merit_quadrature_zero_delay(&shape, &g, &quad_cfg()).unwrap();
            let b = merit_quadrature_delay(&shape, &g, 0.0, &quad_cfg()).unwrap();
            assert!((a.f_tilde - b.f_tilde).abs() < 1e-9, "{kind}: {} vs {}", a.f_tilde, b.f_tilde);
        }
    }

    #[test]
    fn rectangular_long_delay_goes_to_quadrature() {
        let shape = ModeShape::normalized(ShapeKind::Rectangular);
        let g = GainStrategy::constant(1.0).unwrap();
        assert!(!closed_form_available(&shape, &g, 0.6));
        let m = merit_auto(&shape, &g, 0.6, &QuadratureConfig::default()).unwrap();
        assert_eq!(m.method, MeritMethod::QuadratureDelay);
        assert!(m.f_tilde < 1.0 && m.f_tilde > 0.7);
    }
}
