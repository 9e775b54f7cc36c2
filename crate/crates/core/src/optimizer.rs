//! Maximization of `F̃` over constant and two-level feedback gains, and the
//! delay sweeps built from them.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    f_tilde_single_pass, merit_closed_form_for_shape, merit_quadrature_delay, QuadratureConfig,
};
use crate::error::{Error, Result};
use crate::feedback::{GainStrategy, DEFAULT_GAIN_CLAMP};
use crate::modeshape::{ModeShape, ShapeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    ClosedForm,
    Quadrature,
    /// Closed form where one exists, quadrature otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainFamily {
    Constant,
    Piecewise,
}

impl GainFamily {
    pub fn name(self) -> &'static str {
        match self {
            GainFamily::Constant => "const",
            GainFamily::Piecewise => "pw",
        }
    }
}

impl std::str::FromStr for GainFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" | "constant" => Ok(GainFamily::Constant),
            "pw" | "piecewise" => Ok(GainFamily::Piecewise),
            _ => Err(Error::Parse(format!("unknown gain family '{s}' (const|pw)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub quadrature: QuadratureConfig,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grid_per_decade: usize,
    /// Golden-section stopping width in `λ`.
    pub lambda_tol: f64,
    /// Simplex stopping spread in `F̃`.
    pub simplex_ftol: f64,
    /// Simplex stopping diameter in `(ln λ1, ln λ2, t_l)`.
    pub simplex_xtol: f64,
    pub simplex_max_evals: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            quadrature: QuadratureConfig::default(),
            lambda_min: 1e-2,
            lambda_max: 1e2,
            grid_per_decade: 20,
            lambda_tol: 1e-5,
            simplex_ftol: 1e-9,
            simplex_xtol: 1e-4,
            simplex_max_evals: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub shape: ShapeKind,
    pub tau: f64,
    pub family: GainFamily,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Switch time; `None` for constant gain.
    pub t_l: Option<f64>,
    pub f_tilde_star: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub note: Option<String>,
}

impl OptimizationResult {
    pub fn strategy(&self) -> Result<GainStrategy> {
        match self.t_l {
            None => GainStrategy::constant(self.lambda1),
            Some(t) => GainStrategy::piecewise(self.lambda1, self.lambda2, t),
        }
    }
}

fn constant_merit(shape: &ModeShape, lambda: f64, tau: f64, objective: Objective, q: &QuadratureConfig) -> Result<f64> {
    let closed = || merit_closed_form_for_shape(shape, lambda, tau).map(|m| m.f_tilde);
    let quad = || {
        let g = GainStrategy::constant(lambda)?;
        merit_quadrature_delay(shape, &g, tau, q).map(|m| m.f_tilde)
    };
    match objective {
        Objective::ClosedForm => closed(),
        Objective::Quadrature => quad(),
        Objective::Auto => match closed() {
            Err(Error::ClosedFormOutOfRange(_)) => quad(),
            other => other,
        },
    }
}

/// Golden-section maximization on `[a, b]`; returns the best point seen
/// (smaller `x` on ties) and its value.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    evals: &mut usize,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx > best.1 || (fx == best.1 && x < best.0) {
            *best = (x, fx);
        }
    };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    *evals += 2;
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            consider(d, fd, &mut best);
        }
        *evals += 1;
    }
    Ok(best)
}

/// Log-grid scan followed by golden-section refinement in `λ`.
pub fn optimize_constant_gain(
    shape: &ModeShape,
    tau: f64,
    objective: Objective,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("delay must be non-negative, got {tau}")));
    }
    let q = &cfg.quadrature;
    let mut evals = 0;
    let mut eval = |l: f64| -> Result<f64> {
        evals += 1;
        constant_merit(shape, l, tau, objective, q)
    };

    let clamp = DEFAULT_GAIN_CLAMP;
    let (mut lo, mut hi) = (cfg.lambda_min, cfg.lambda_max.min(clamp));
    let mut note = None;
    let mut converged = true;
    let (grid, values, imax) = loop {
        let decades = (hi / lo).log10();
        let n = ((decades * cfg.grid_per_decade as f64).round() as usize).max(4);
        let grid: Vec<f64> = (0..=n)
            .map(|i| lo * (hi / lo).powf(i as f64 / n as f64))
            .collect();
        let values = grid.iter().map(|&l| eval(l)).collect::<Result<Vec<f64>>>()?;
        let mut imax = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[imax] {
                imax = i;
            }
        }
        let spread = values[imax] - values.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread <= 1e-12 {
            break (grid, values, imax);
        }
        let at_top = imax == grid.len() - 1;
        let at_bottom = imax == 0;
        if at_top && hi < clamp {
            hi = (hi * 10.0).min(clamp);
            continue;
        }
        if at_bottom && lo > 1e-4 {
            lo /= 10.0;
            continue;
        }
        if at_top || at_bottom {
            converged = false;
            note = Some(format!(
                "optimum on the gain bound {}",
                if at_top { hi } else { lo }
            ));
        }
        break (grid, values, imax);
    };

    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 1e-12 {
        let f = values[0];
        return Ok(OptimizationResult {
            shape: shape.kind(),
            tau,
            family: GainFamily::Constant,
            lambda1: grid[0],
            lambda2: grid[0],
            t_l: None,
            f_tilde_star: f,
            evaluations: evals,
            converged: false,
            note: Some("flat objective".into()),
        });
    }

    let (lambda, f_star) = if converged {
        let a = grid[imax - 1];
        let b = grid[imax + 1];
        let mut inner = 0;
        let (x, fx) = golden_section_max(&mut eval, a, b, cfg.lambda_tol, &mut inner)?;
        if fx > values[imax] || (fx == values[imax] && x < grid[imax]) {
            (x, fx)
        } else {
            (grid[imax], values[imax])
        }
    } else {
        (grid[imax], values[imax])
    };

    Ok(OptimizationResult {
        shape: shape.kind(),
        tau,
        family: GainFamily::Constant,
        lambda1: lambda,
        lambda2: lambda,
        t_l: None,
        f_tilde_star: f_star,
        evaluations: evals,
        converged,
        note,
    })
}

/// Nelder–Mead minimization from an initial simplex. Returns the best vertex,
/// its value, and whether the spread criterion was met.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    simplex: Vec<Vec<f64>>,
    ftol: f64,
    xtol: f64,
    max_evals: usize,
    evals: &mut usize,
) -> Result<(Vec<f64>, f64, bool)> {
    let n = simplex.len() - 1;
    let mut pts = simplex;
    let mut vals = Vec::with_capacity(n + 1);
    for p in &pts {
        vals.push(f(p)?);
        *evals += 1;
    }
    let mut used = n + 1;
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let diam = pts
            .iter()
            .skip(1)
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= ftol && diam <= xtol {
            converged = true;
            break;
        }
        if used >= max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr)?;
        used += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe)?;
            used += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc)?;
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc)?;
                (xc, fc)
            };
            used += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    vals[i] = f(&p)?;
                    pts[i] = p;
                    used += 1;
                }
            }
        }
    }
    *evals += used - (n + 1);
    let mut best = 0;
    for i in 1..=n {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    Ok((pts[best].clone(), vals[best], converged))
}

/// Box in which the two-level gain is searched.
struct PiecewiseBox {
    ln_lo: f64,
    ln_hi: f64,
    t_lo: f64,
    t_hi: f64,
}

impl PiecewiseBox {
    fn project(&self, x: &[f64]) -> (f64, f64, f64) {
        (
            x[0].clamp(self.ln_lo, self.ln_hi).exp(),
            x[1].clamp(self.ln_lo, self.ln_hi).exp(),
            x[2].clamp(self.t_lo, self.t_hi),
        )
    }
}

/// Window in which the switch time is searched: the support up to tail mass
/// `1e-3`, extended by `τ` on the right.
pub fn switch_time_range(shape: &ModeShape, tau: f64) -> Result<(f64, f64)> {
    let win = shape.effective_support(1e-3)?;
    Ok((win.lo, win.hi + tau))
}

/// Multi-start simplex search over `(λ1, λ2, t_l)`.
pub fn optimize_piecewise_gain(
    shape: &ModeShape,
    tau: f64,
    cfg: &OptimizerConfig,
    warm_start: Option<(f64, f64, f64)>,
) -> Result<OptimizationResult> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("delay must be non-negative, got {tau}")));
    }
    let constant = optimize_constant_gain(shape, tau, Objective::Auto, cfg)?;
    let (t_lo, t_hi) = switch_time_range(shape, tau)?;
    let bx = PiecewiseBox {
        ln_lo: cfg.lambda_min.ln(),
        ln_hi: DEFAULT_GAIN_CLAMP.ln(),
        t_lo,
        t_hi,
    };
    let q = &cfg.quadrature;
    let mut evals = constant.evaluations;
    let objective = |x: &[f64]| -> Result<f64> {
        let (l1, l2, t) = bx.project(x);
        let g = GainStrategy::piecewise(l1, l2, t)?;
        Ok(-f_tilde_single_pass(shape, &g, tau, q)?)
    };

    // corners and centre of the start box, then the constant optimum and the
    // caller's warm start
    let (s_lo, s_hi) = (0.3f64.ln(), 5f64.ln());
    let (q_lo, q_hi) = (shape.quantile(0.1)?, shape.quantile(0.9)?);
    let mut starts = Vec::new();
    for &a in &[s_lo, s_hi] {
        for &b in &[s_lo, s_hi] {
            for &t in &[q_lo, q_hi] {
                starts.push(vec![a, b, t]);
            }
        }
    }
    starts.push(vec![0.5 * (s_lo + s_hi), 0.5 * (s_lo + s_hi), 0.5 * (q_lo + q_hi)]);
    let mid = shape.quantile(0.5)?;
    starts.push(vec![constant.lambda1.ln(), constant.lambda1.ln(), mid]);
    if let Some((l1, l2, t)) = warm_start {
        if l1 > 0.0 && l2 > 0.0 && t.is_finite() {
            starts.push(vec![l1.ln(), l2.ln(), t]);
        }
    }

    let t_step = 0.1 * (q_hi - q_lo);
    let mut best: Option<((f64, f64, f64), f64)> = None;
    let mut any_converged = false;
    let mut failures = 0;
    for s in starts {
        let simplex = vec![
            s.clone(),
            vec![s[0] + 0.3, s[1], s[2]],
            vec![s[0], s[1] + 0.3, s[2]],
            vec![s[0], s[1], s[2] + t_step],
        ];
        let (x, fx, ok) = nelder_mead(
            &objective,
            simplex,
            cfg.simplex_ftol,
            cfg.simplex_xtol,
            cfg.simplex_max_evals,
            &mut evals,
        )?;
        if ok {
            any_converged = true;
        } else {
            failures += 1;
        }
        let p = bx.project(&x);
        let f = -fx;
        let better = match best {
            None => true,
            Some((bp, bf)) => {
                f > bf + 1e-12
                    || ((f - bf).abs() <= 1e-12 && (p.0 < bp.0 || (p.0 == bp.0 && p.1 < bp.1)))
            }
        };
        if better {
            best = Some((p, f));
        }
    }
    let ((l1, l2, t), _) = best.expect("at least one start");
    let g = GainStrategy::piecewise(l1, l2, t)?;
    let f_star = merit_quadrature_delay(shape, &g, tau, q)?.f_tilde;
    evals += 1;
    let note = if failures > 0 {
        Some(format!("{failures} start(s) hit the evaluation limit"))
    } else {
        None
    };
    Ok(OptimizationResult {
        shape: shape.kind(),
        tau,
        family: GainFamily::Piecewise,
        lambda1: l1,
        lambda2: l2,
        t_l: Some(t),
        f_tilde_star: f_star,
        evaluations: evals,
        converged: any_converged,
        note,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub result: Result<OptimizationResult>,
}

/// One optimization per `τ` in order, each piecewise search warm-started from
/// the previous optimum. Failures are kept in-row.
pub fn delay_sweep(
    shape: &ModeShape,
    family: GainFamily,
    taus: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Vec<SweepPoint>> {
    if taus.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidParameter("delay grid must be non-negative".into()));
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("delay grid must be sorted".into()));
    }
    let mut out = Vec::with_capacity(taus.len());
    let mut warm: Option<(f64, f64, f64)> = None;
    for &tau in taus {
        let result = match family {
            GainFamily::Constant => optimize_constant_gain(shape, tau, Objective::Auto, cfg),
            GainFamily::Piecewise => optimize_piecewise_gain(shape, tau, cfg, warm),
        };
        if let Ok(r) = &result {
            if let Some(t) = r.t_l {
                warm = Some((r.lambda1, r.lambda2, t));
            }
        }
        out.push(SweepPoint { tau, result });
    }
    Ok(out)
}
