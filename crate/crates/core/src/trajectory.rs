//! Monte Carlo simulation of the dyne record under vacuum (ostensible)
//! statistics: `R = ∫ e^{iΦ(s)} √u(s) dW(s)` by Euler–Maruyama, with the
//! in-cell motion of the LO phase taken into account.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{GainStrategy, LoPhaseModel};
use crate::merit::approx_merit_from_m4;
use crate::modeshape::{Interval, ModeShape};
use crate::stats::{mean_and_stderr, NeumaierSum};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_N_TRAJ: usize = 100_000;
pub const DEFAULT_SEED: u64 = 20_240_601;
/// Mass left outside the simulated window. Coarser than the quadrature
/// cutoff: the bias it introduces in `⟨|R|²⟩` is far below any MC stderr.
pub const DEFAULT_MC_TRUNCATION_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub n_traj: usize,
    pub base_seed: u64,
    pub delay_steps: usize,
    pub truncation_eps: f64,
    /// Explicit simulation window; must cover the effective support.
    pub window: Option<Interval>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            dt: DEFAULT_DT,
            n_traj: DEFAULT_N_TRAJ,
            base_seed: DEFAULT_SEED,
            delay_steps: 0,
            truncation_eps: DEFAULT_MC_TRUNCATION_EPS,
            window: None,
        }
    }
}

impl SimulationConfig {
    pub fn new(dt: f64, n_traj: usize, base_seed: u64) -> Result<Self> {
        let cfg = SimulationConfig {
            dt,
            n_traj,
            base_seed,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets `delay_steps = τ/dt`; `τ` must be an integer multiple of `dt`.
    pub fn with_delay(mut self, tau: f64) -> Result<Self> {
        self.delay_steps = steps_for_delay(tau, self.dt)?;
        Ok(self)
    }

    pub fn delay(&self) -> f64 {
        self.delay_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter(
                "ensemble size must be at least 1".into(),
            ));
        }
        if !(self.truncation_eps > 0.0 && self.truncation_eps < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "truncation epsilon must lie in (0, 0.5), got {}",
                self.truncation_eps
            )));
        }
        Ok(())
    }
}

pub fn steps_for_delay(tau: f64, dt: f64) -> Result<usize> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delay must be non-negative, got {tau}"
        )));
    }
    let steps = (tau / dt).round();
    if (steps * dt - tau).abs() > 1e-9 * dt.max(tau) {
        return Err(Error::Config(format!(
            "delay {tau} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub r: Complex64,
    /// `arg R` in `[−π, π)`.
    pub phase_estimate: f64,
    pub final_lo_phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeritEstimate {
    pub f_hat: f64,
    pub f_se: f64,
    pub m2_hat: f64,
    pub m2_se: f64,
    pub m4_hat: f64,
    pub m4_se: f64,
    pub f_tilde_hat: f64,
    pub f_tilde_se: f64,
    pub n_traj: usize,
}

impl MeritEstimate {
    pub fn from_outcomes(rs: &[Complex64]) -> Self {
        let abs: Vec<f64> = rs.iter().map(|r| r.norm()).collect();
        let m2: Vec<f64> = rs.iter().map(|r| r.norm_sqr()).collect();
        let m4: Vec<f64> = m2.iter().map(|x| x * x).collect();
        let (f_hat, f_se) = mean_and_stderr(&abs);
        let (m2_hat, m2_se) = mean_and_stderr(&m2);
        let (m4_hat, m4_se) = mean_and_stderr(&m4);
        MeritEstimate {
            f_hat,
            f_se,
            m2_hat,
            m2_se,
            m4_hat,
            m4_se,
            f_tilde_hat: approx_merit_from_m4(m4_hat),
            f_tilde_se: m4_se / 8.0,
            n_traj: rs.len(),
        }
    }
}

fn unit(phi: f64) -> Complex64 {
    let (s, c) = phi.sin_cos();
    Complex64::new(c, s)
}

fn wrap_phase(x: f64) -> f64 {
    if x >= std::f64::consts::PI {
        x - 2.0 * std::f64::consts::PI
    } else {
        x
    }
}

enum PhaseLaw {
    /// `e^{iΦ_i} √u_i` precomputed per step.
    Fixed {
        weights: Vec<Complex64>,
        final_phase: f64,
    },
    Adaptive {
        origin: f64,
        gains: Vec<f64>,
        delay: usize,
    },
}

/// Everything about a run that does not depend on the noise: the time grid,
/// per-cell mode weights and gains. Built once per ensemble.
pub struct TrajectoryPlan {
    dt: f64,
    base_seed: u64,
    preroll: usize,
    sqrt_u: Vec<f64>,
    law: PhaseLaw,
    start: f64,
}

impl TrajectoryPlan {
    pub fn new(shape: &ModeShape, lo: &LoPhaseModel, cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let support = shape.effective_support(cfg.truncation_eps)?;
        let window = match cfg.window {
            Some(w) => {
                if w.lo > support.lo || w.hi < support.hi {
                    return Err(Error::Config(format!(
                        "simulation window [{}, {}] does not cover the effective support [{}, {}]",
                        w.lo, w.hi, support.lo, support.hi
                    )));
                }
                w
            }
            None => support,
        };
        let dt = cfg.dt;
        let steps = ((window.hi - window.lo) / dt - 1e-9).ceil().max(1.0) as usize;
        let preroll = match lo {
            LoPhaseModel::AdaptiveIntegral { delay, .. } => {
                if (delay - cfg.delay()).abs() > 1e-9 * dt.max(*delay) {
                    return Err(Error::Config(format!(
                        "LO delay {delay} does not match delay_steps·dt = {}",
                        cfg.delay()
                    )));
                }
                cfg.delay_steps
            }
            _ => 0,
        };
        let total = preroll + steps;
        let time = |i: usize| window.lo + (i as f64 - preroll as f64) * dt;

        // √(cell mass / dt): keeps Σ u dt exact on the grid
        let mut sqrt_u = vec![0.0; total];
        for (i, w) in sqrt_u.iter_mut().enumerate().skip(preroll) {
            let mass = shape.cumulative(time(i + 1)) - shape.cumulative(time(i));
            *w = (mass.max(0.0) / dt).sqrt();
        }

        let law = match lo {
            LoPhaseModel::Homodyne { phi0 } => PhaseLaw::Fixed {
                weights: sqrt_u.iter().map(|&w| unit(*phi0).scale(w)).collect(),
                final_phase: *phi0,
            },
            LoPhaseModel::Heterodyne { detuning, phi0 } => PhaseLaw::Fixed {
                weights: sqrt_u
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| unit(phi0 + detuning * (i as f64 * dt)).scale(w))
                    .collect(),
                final_phase: phi0 + detuning * (total as f64 * dt),
            },
            LoPhaseModel::AdaptiveIntegral { strategy, .. } => PhaseLaw::Adaptive {
                origin: lo.initial_phase(),
                gains: cell_gains(strategy, total, &time, dt),
                delay: preroll,
            },
        };

        Ok(TrajectoryPlan {
            dt,
            base_seed: cfg.base_seed,
            preroll,
            sqrt_u,
            law,
            start: time(0),
        })
    }

    /// Number of Wiener increments one trajectory consumes.
    pub fn n_increments(&self) -> usize {
        self.sqrt_u.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time at the left edge of the first cell (including any pre-roll).
    pub fn start_time(&self) -> f64 {
        self.start
    }

    /// Runs trajectory `traj_index` on its own deterministic noise stream.
    pub fn run(&self, traj_index: u64) -> TrajectoryOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(traj_index);
        let sdt = self.dt.sqrt();
        self.integrate(|_| sdt * rng.sample::<f64, _>(StandardNormal))
    }

    /// Runs one trajectory on caller-supplied Wiener increments.
    pub fn run_with_increments(&self, dw: &[f64]) -> Result<TrajectoryOutcome> {
        if dw.len() != self.n_increments() {
            return Err(Error::InvalidParameter(format!(
                "expected {} increments, got {}",
                self.n_increments(),
                dw.len()
            )));
        }
        Ok(self.integrate(|i| dw[i]))
    }

    fn integrate(&self, mut next_dw: impl FnMut(usize) -> f64) -> TrajectoryOutcome {
        let mut r = Complex64::new(0.0, 0.0);
        let final_lo_phase = match &self.law {
            PhaseLaw::Fixed {
                weights,
                final_phase,
            } => {
                for (i, c) in weights.iter().enumerate() {
                    let dw = next_dw(i);
                    if i >= self.preroll {
                        r += c.scale(dw);
                    }
                }
                *final_phase
            }
            PhaseLaw::Adaptive {
                origin,
                gains,
                delay,
            } => {
                // increments not yet visible to the LO, oldest first
                let mut ring = vec![0.0; delay + 1];
                let mut acc = 0.0;
                for i in 0..gains.len() {
                    let dw = next_dw(i);
                    ring[i % (delay + 1)] = gains[i] * dw;
                    // increment the LO absorbs across this cell
                    let visible = if i >= *delay {
                        ring[(i - delay) % (delay + 1)]
                    } else {
                        0.0
                    };
                    if i >= self.preroll {
                        if *delay == 0 && gains[i] > 0.0 {
                            r += self_driven_cell(origin + acc, gains[i], dw, self.dt)
                                .scale(self.sqrt_u[i]);
                        } else {
                            // phase path across the cell is known: use its midpoint
                            r += unit(origin + acc + 0.5 * visible)
                                .scale(self.sqrt_u[i])
                                .scale(dw);
                        }
                    }
                    acc += visible;
                }
                origin + acc
            }
        };
        TrajectoryOutcome {
            r,
            phase_estimate: wrap_phase(r.arg()),
            final_lo_phase,
        }
    }
}

/// `∫ e^{iΦ(s)} dW(s)` over one cell when the LO phase is driven by the same
/// increment, `Φ(s) = φ + λ(W(s) − W(t))`: exact in `ΔW`, with the
/// remaining time integral `∫ e^{iΦ} ds` by the trapezoid rule.
fn self_driven_cell(phi: f64, lambda: f64, dw: f64, dt: f64) -> Complex64 {
    let theta = lambda * dw;
    let (s, c) = theta.sin_cos();
    // (e^{iθ} − 1)/(iθ) = sinc θ + i(1 − cos θ)/θ
    let (sinc, versc) = if theta.abs() < 1e-3 {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            theta * (0.5 - t2 / 24.0 + t2 * t2 / 720.0),
        )
    } else {
        (s / theta, (1.0 - c) / theta)
    };
    let jump = Complex64::new(sinc, versc).scale(dw);
    let drift = Complex64::new(0.0, 0.25 * lambda * dt) * Complex64::new(1.0 + c, s);
    unit(phi) * (jump - drift)
}

/// RMS gain over each cell, `√(∫_cell λ² / dt)`.
fn cell_gains(strategy: &GainStrategy, total: usize, time: &dyn Fn(usize) -> f64, dt: f64) -> Vec<f64> {
    (0..total)
        .map(|i| (strategy.phase_variance_unchecked(time(i), time(i + 1)) / dt).sqrt())
        .collect()
}

pub fn simulate_trajectory(
    shape: &ModeShape,
    lo: &LoPhaseModel,
    cfg: &SimulationConfig,
    traj_index: u64,
) -> Result<TrajectoryOutcome> {
    Ok(TrajectoryPlan::new(shape, lo, cfg)?.run(traj_index))
}

/// All `n_traj` outcomes in index order.
pub fn simulate_ensemble(
    shape: &ModeShape,
    lo: &LoPhaseModel,
    cfg: &SimulationConfig,
) -> Result<Vec<TrajectoryOutcome>> {
    let plan = TrajectoryPlan::new(shape, lo, cfg)?;
    Ok((0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| plan.run(i))
        .collect())
}

pub fn estimate_merit(
    shape: &ModeShape,
    lo: &LoPhaseModel,
    cfg: &SimulationConfig,
) -> Result<MeritEstimate> {
    let rs: Vec<Complex64> = simulate_ensemble(shape, lo, cfg)?
        .into_iter()
        .map(|o| o.r)
        .collect();
    Ok(MeritEstimate::from_outcomes(&rs))
}

/// Ensemble-averaged state of the heralded mode, with per-entry standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolEstimate {
    pub rho: [[Complex64; 2]; 2],
    /// Standard errors of the real parts.
    pub rho_se: [[f64; 2]; 2],
    pub trace_se: f64,
    pub merit: MeritEstimate,
}

impl ProtocolEstimate {
    pub fn from_outcomes(rs: &[Complex64]) -> Self {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut terms: [[Vec<Complex64>; 2]; 2] = Default::default();
        let mut traces = Vec::with_capacity(rs.len());
        for &r in rs {
            // collapsed state: ⟨R| projects the entangled pair onto mode 2
            let c0 = -r.conj() * inv_sqrt2;
            let c1 = Complex64::new(inv_sqrt2, 0.0) * unit(-r.arg() - std::f64::consts::PI);
            let c = [c0, c1];
            for a in 0..2 {
                for b in 0..2 {
                    terms[a][b].push(c[a] * c[b].conj());
                }
            }
            traces.push(c0.norm_sqr() + c1.norm_sqr());
        }
        let mut rho = [[Complex64::new(0.0, 0.0); 2]; 2];
        let mut rho_se = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let re: Vec<f64> = terms[a][b].iter().map(|z| z.re).collect();
                let (m, se) = mean_and_stderr(&re);
                let mut im = NeumaierSum::new();
                for z in &terms[a][b] {
                    im.add(z.im);
                }
                rho[a][b] = Complex64::new(m, im.value() / rs.len() as f64);
                rho_se[a][b] = se;
            }
        }
        // enforce exact Hermiticity of the average
        rho[0][0].im = 0.0;
        rho[1][1].im = 0.0;
        rho[1][0] = rho[0][1].conj();
        let (_, trace_se) = mean_and_stderr(&traces);
        ProtocolEstimate {
            rho,
            rho_se,
            trace_se,
            merit: MeritEstimate::from_outcomes(rs),
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }
}

pub fn simulate_protocol(
    shape: &ModeShape,
    lo: &LoPhaseModel,
    cfg: &SimulationConfig,
) -> Result<ProtocolEstimate> {
    let rs: Vec<Complex64> = simulate_ensemble(shape, lo, cfg)?
        .into_iter()
        .map(|o| o.r)
        .collect();
    Ok(ProtocolEstimate::from_outcomes(&rs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::GainStrategy;
    use crate::modeshape::ShapeKind;
    use rand::seq::SliceRandom;

    fn cfg(n: usize) -> SimulationConfig {
        SimulationConfig {
            n_traj: n,
            ..Default::default()
        }
    }

    fn adaptive(strategy: GainStrategy, tau: f64) -> LoPhaseModel {
        LoPhaseModel::adaptive(strategy, tau).unwrap()
    }

    #[test]
    fn invalid_configs_rejected() {
        let s = ModeShape::normalized(ShapeKind::Rectangular);
        let lo = LoPhaseModel::homodyne();
        let mut c = cfg(10);
        c.dt = 0.0;
        assert!(matches!(
            simulate_trajectory(&s, &lo, &c, 0),
            Err(Error::InvalidParameter(_))
        ));
        let mut c = cfg(10);
        c.window = Some(Interval::new(0.0, 0.5));
        assert!(matches!(
            simulate_trajectory(&s, &lo, &c, 0),
            Err(Error::Config(_))
        ));
        assert!(SimulationConfig::default().with_delay(0.1005).is_err());
        assert_eq!(SimulationConfig::default().with_delay(0.1).unwrap().delay_steps, 100);
        // delay in the LO model must match the grid
        let lo = adaptive(GainStrategy::constant(1.0).unwrap(), 0.1);
        assert!(matches!(
            simulate_trajectory(&s, &lo, &cfg(10), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let s = ModeShape::normalized(ShapeKind::BilateralExp);
        let lo = adaptive(GainStrategy::constant(1.3).unwrap(), 0.05);
        let c = cfg(10).with_delay(0.05).unwrap();
        let a = simulate_trajectory(&s, &lo, &c, 7).unwrap();
        let b = simulate_trajectory(&s, &lo, &c, 7).unwrap();
        assert_eq!(a.r.re.to_bits(), b.r.re.to_bits());
        assert_eq!(a.r.im.to_bits(), b.r.im.to_bits());
        let other = simulate_trajectory(&s, &lo, &c, 8).unwrap();
        assert_ne!(a.r, other.r);
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&a.phase_estimate));
        assert!((a.phase_estimate - a.r.arg()).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_zero_delay_reproduces_homodyne_bitwise() {
        for kind in ShapeKind::ALL {
            let s = ModeShape::normalized(kind);
            let hom = LoPhaseModel::Homodyne {
                phi0: std::f64::consts::FRAC_PI_2,
            };
            let ad = adaptive(GainStrategy::constant(0.0).unwrap(), 0.0);
            for idx in 0..20 {
                let a = simulate_trajectory(&s, &hom, &cfg(1), idx).unwrap();
                let b = simulate_trajectory(&s, &ad, &cfg(1), idx).unwrap();
                assert_eq!(a.r.re.to_bits(), b.r.re.to_bits());
                assert_eq!(a.r.im.to_bits(), b.r.im.to_bits());
            }
        }
    }

    #[test]
    fn rescaling_leaves_each_trajectory_unchanged() {
        let cases = [
            (ShapeKind::Rectangular, GainStrategy::constant(1.7).unwrap(), 0.1),
            (ShapeKind::FallingExp, GainStrategy::piecewise(2.5, 1.0, 0.4).unwrap(), 0.05),
            (
                ShapeKind::BilateralExp,
                GainStrategy::optimal(ModeShape::normalized(ShapeKind::BilateralExp)),
                0.0,
            ),
        ];
        for (kind, strategy, tau) in cases {
            let s = ModeShape::normalized(kind);
            let base_cfg = SimulationConfig {
                dt: 1e-3,
                ..cfg(1)
            }
            .with_delay(tau)
            .unwrap();
            for a in [0.5, 2.0] {
                let s2 = s.rescaled(a).unwrap();
                let g2 = strategy.rescaled(a).unwrap();
                let c2 = SimulationConfig {
                    dt: a * base_cfg.dt,
                    ..base_cfg
                };
                let lo1 = adaptive(strategy, tau);
                let lo2 = adaptive(g2, c2.delay());
                for idx in 0..5 {
                    let r1 = simulate_trajectory(&s, &lo1, &base_cfg, idx).unwrap().r;
                    let r2 = simulate_trajectory(&s2, &lo2, &c2, idx).unwrap().r;
                    assert!((r1 - r2).norm() < 1e-10, "{kind} a={a}: {r1} vs {r2}");
                }
            }
        }
    }

    #[test]
    fn ideal_adaptive_rising_has_unit_modulus() {
        let s = ModeShape::normalized(ShapeKind::RisingExp);
        let lo = adaptive(GainStrategy::optimal(s), 0.0);
        let c = SimulationConfig {
            dt: 1e-4,
            ..cfg(1)
        };
        let plan = TrajectoryPlan::new(&s, &lo, &c).unwrap();
        for idx in 0..50 {
            let r = plan.run(idx).r;
            assert!((r.norm() - 1.0).abs() < 0.02, "{idx}: |R| = {}", r.norm());
        }
    }

    #[test]
    fn homodyne_quadrature_is_standard_normal() {
        let s = ModeShape::normalized(ShapeKind::FallingExp);
        let phi0 = 0.7;
        let lo = LoPhaseModel::Homodyne { phi0 };
        let out = simulate_ensemble(&s, &lo, &cfg(20_000)).unwrap();
        let x: Vec<f64> = out.iter().map(|o| (unit(-phi0) * o.r).re).collect();
        let y: Vec<f64> = out.iter().map(|o| (unit(-phi0) * o.r).im).collect();
        let (m, se) = mean_and_stderr(&x);
        assert!(m.abs() < 3.0 * se);
        let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn aggregation_is_order_independent() {
        let s = ModeShape::normalized(ShapeKind::Rectangular);
        let lo = LoPhaseModel::heterodyne(crate::feedback::DEFAULT_DETUNING);
        let mut rs: Vec<Complex64> = simulate_ensemble(&s, &lo, &cfg(5000))
            .unwrap()
            .into_iter()
            .map(|o| o.r)
            .collect();
        let a = MeritEstimate::from_outcomes(&rs);
        rs.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let b = MeritEstimate::from_outcomes(&rs);
        rs.reverse();
        let c = MeritEstimate::from_outcomes(&rs);
        for (x, y) in [(a, b), (a, c)] {
            assert!((x.f_hat - y.f_hat).abs() < 1e-12);
            assert!((x.m2_hat - y.m2_hat).abs() < 1e-12);
            assert!((x.m4_hat - y.m4_hat).abs() < 1e-12);
            assert!((x.m4_se - y.m4_se).abs() < 1e-12);
        }
    }

    #[test]
    fn protocol_matrix_is_hermitian_with_unit_trace() {
        let s = ModeShape::normalized(ShapeKind::BilateralExp);
        let lo = adaptive(GainStrategy::constant(1.5).unwrap(), 0.0);
        let p = simulate_protocol(&s, &lo, &cfg(5000)).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((p.rho[a][b] - p.rho[b][a].conj()).norm() < 1e-12);
            }
        }
        assert!((p.trace() - 1.0).abs() < 3.0 * p.trace_se);
        assert!((p.rho[0][1].re - p.merit.f_hat / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dt_refinement_with_coupled_noise() {
        // the coarse run sees the pairwise sums of the fine increments
        let cases = [
            (ShapeKind::Rectangular, 2.0, 0.1),
            (ShapeKind::BilateralExp, 1.0, 0.0),
            (ShapeKind::FallingExp, 1.5, 0.05),
            (ShapeKind::RisingExp, 1.2, 0.1),
        ];
        let n = 4000;
        for (kind, lambda, tau) in cases {
            let s = ModeShape::normalized(kind);
            let g = GainStrategy::constant(lambda).unwrap();
            let lo = adaptive(g, tau);
            let coarse = SimulationConfig {
                dt: 2e-3,
                ..cfg(n)
            }
            .with_delay(tau)
            .unwrap();
            let fine = SimulationConfig {
                dt: 1e-3,
                ..cfg(n)
            }
            .with_delay(tau)
            .unwrap();
            let pc = TrajectoryPlan::new(&s, &lo, &coarse).unwrap();
            let pf = TrajectoryPlan::new(&s, &lo, &fine).unwrap();
            assert!((pc.start_time() - pf.start_time()).abs() < 1e-12);
            let nf = pf.n_increments();
            let nc = pc.n_increments();
            let mut rc = Vec::with_capacity(n);
            let mut rf = Vec::with_capacity(n);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..n {
                let dwf: Vec<f64> = (0..2 * nc)
                    .map(|_| fine.dt.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let dwc: Vec<f64> = dwf.chunks(2).map(|p| p[0] + p[1]).collect();
                rf.push(pf.run_with_increments(&dwf[..nf]).unwrap().r);
                rc.push(pc.run_with_increments(&dwc).unwrap().r);
            }
            let ec = MeritEstimate::from_outcomes(&rc);
            let ef = MeritEstimate::from_outcomes(&rf);
            assert!(
                (ec.f_tilde_hat - ef.f_tilde_hat).abs() < ef.f_tilde_se,
                "{kind}: {} vs {} (se {})",
                ec.f_tilde_hat,
                ef.f_tilde_hat,
                ef.f_tilde_se
            );
        }
    }
}
