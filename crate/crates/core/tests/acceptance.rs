//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use dynelab::analytic::{
    merit_closed_form_for_shape, merit_quadrature_delay, merit_quadrature_zero_delay,
    QuadratureConfig,
};
use dynelab::feedback::{GainStrategy, LoPhaseModel, DEFAULT_DETUNING};
use dynelab::merit::table1;
use dynelab::modeshape::{ModeShape, ShapeKind};
use dynelab::optimizer::{
    delay_sweep, optimize_constant_gain, optimize_piecewise_gain, GainFamily, Objective,
    OptimizerConfig,
};
use dynelab::trajectory::{estimate_merit, simulate_protocol, SimulationConfig};

const SEED: u64 = 20_240_601;

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }
}

fn sim(dt: f64, n: usize) -> SimulationConfig {
    SimulationConfig {
        dt,
        n_traj: n,
        base_seed: SEED,
        ..Default::default()
    }
}

// |x| moment of a unit normal and |z| moment of a unit complex normal by
// composite Simpson on [0, 12]
fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    let n = 120_000;
    let h = 12.0 / n as f64;
    let mut s = f(0.0) + f(12.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn c1_table1(o: &mut Outcome) {
    let hom = simpson(|x| 2.0 * x * (-x * x / 2.0).exp() / (2.0 * PI).sqrt());
    let het = simpson(|r| 2.0 * r * r * (-r * r).exp());
    let exact = [hom, het, 1.0];
    let approx = [0.75, 0.875, 1.0];
    let rows = table1();
    for (i, r) in rows.iter().enumerate() {
        o.check((r.exact - exact[i]).abs() < 1e-12, || format!("{} exact {} vs {}", r.measurement, r.exact, exact[i]));
        o.check((r.approx - approx[i]).abs() < 1e-12, || format!("{} approx {}", r.measurement, r.approx));
    }
    let shape = ModeShape::normalized(ShapeKind::Rectangular);
    for (lo, want) in [
        (LoPhaseModel::homodyne(), hom),
        (LoPhaseModel::heterodyne(DEFAULT_DETUNING), het),
    ] {
        let m = estimate_merit(&shape, &lo, &sim(1e-3, 100_000)).unwrap();
        o.check((m.f_hat - want).abs() < 3.0 * m.f_se, || {
            format!("{} mc f_hat {} vs {} (se {})", lo.label(), m.f_hat, want, m.f_se)
        });
    }
}

fn c2_cancellation(o: &mut Outcome, q: &QuadratureConfig) {
    for k in ShapeKind::ALL {
        let s = ModeShape::normalized(k);
        let f = merit_quadrature_zero_delay(&s, &GainStrategy::optimal(s), q).unwrap().f_tilde;
        o.check((f - 1.0).abs() < 1e-6, || format!("{k}: {f}"));
    }
}

fn c3_rising_optimum(o: &mut Outcome, oc: &OptimizerConfig) {
    let s = ModeShape::normalized(ShapeKind::RisingExp);
    let r = optimize_constant_gain(&s, 0.0, Objective::ClosedForm, oc).unwrap();
    o.check((r.lambda1 - 2f64.sqrt()).abs() < 1e-4, || format!("lambda* {}", r.lambda1));
    o.check((r.f_tilde_star - 1.0).abs() < 1e-5, || format!("F* {}", r.f_tilde_star));
}

fn c4_delay_limit(o: &mut Outcome, q: &QuadratureConfig) {
    let g = GainStrategy::constant(1.0).unwrap();
    for k in ShapeKind::ALL {
        let s = ModeShape::normalized(k);
        let a = merit_quadrature_delay(&s, &g, 0.0, q).unwrap().f_tilde;
        let b = merit_quadrature_zero_delay(&s, &g, q).unwrap().f_tilde;
        o.check((a - b).abs() < 1e-8, || format!("{k}: {a} vs {b}"));
    }
}

fn c5_closed_forms(o: &mut Outcome, q: &QuadratureConfig) {
    for k in ShapeKind::ALL {
        let s = ModeShape::normalized(k);
        for lambda in [0.5, 1.0, 2.0, 4.0] {
            for tau in [0.0, 0.05, 0.1, 0.2] {
                let g = GainStrategy::constant(lambda).unwrap();
                let c = merit_closed_form_for_shape(&s, lambda, tau).unwrap().f_tilde;
                let n = merit_quadrature_delay(&s, &g, tau, q).unwrap().f_tilde;
                o.check((c - n).abs() < 1e-6, || format!("{k} l={lambda} tau={tau}: {c} vs {n}"));
            }
        }
    }
}

fn c6_asymptotes(o: &mut Outcome, q: &QuadratureConfig) {
    for k in ShapeKind::ALL {
        let s = ModeShape::normalized(k);
        for (lambda, tau, target) in [(1e-3, 0.0, 0.75), (1e-3, 0.1, 0.75), (1e3, 0.1, 0.875)] {
            let g = GainStrategy::constant(lambda).unwrap();
            let c = merit_closed_form_for_shape(&s, lambda, tau).unwrap().f_tilde;
            let n = merit_quadrature_delay(&s, &g, tau, q).unwrap().f_tilde;
            o.check((c - target).abs() < 1e-3, || format!("{k} l={lambda} tau={tau} closed {c}"));
            o.check((n - target).abs() < 1e-3, || format!("{k} l={lambda} tau={tau} quad {n}"));
        }
    }
}

fn c7_completeness(o: &mut Outcome) {
    for k in ShapeKind::ALL {
        let s = ModeShape::normalized(k);
        let mid = s.quantile(0.5).unwrap();
        for tau in [0.0, 0.1] {
            let schemes = [
                LoPhaseModel::homodyne(),
                LoPhaseModel::heterodyne(DEFAULT_DETUNING),
                LoPhaseModel::adaptive(GainStrategy::constant(1.5).unwrap(), tau).unwrap(),
                LoPhaseModel::adaptive(GainStrategy::piecewise(2.0, 1.0, mid).unwrap(), tau).unwrap(),
            ];
            for lo in schemes {
                let cfg = sim(1e-3, 10_000).with_delay(lo.delay()).unwrap();
                let m = estimate_merit(&s, &lo, &cfg).unwrap();
                o.check((m.m2_hat - 1.0).abs() < 3.0 * m.m2_se, || {
                    format!("{k} {} tau={tau}: m2 {} se {}", lo.label(), m.m2_hat, m.m2_se)
                });
            }
        }
    }
}

const TOP_TO_BOTTOM: [ShapeKind; 4] = [
    ShapeKind::RisingExp,
    ShapeKind::BilateralExp,
    ShapeKind::Rectangular,
    ShapeKind::FallingExp,
];

// shapes whose optimum runs to the gain clamp all sit at 7/8 - O(1/clamp²)
// and differ only in the last few digits; those are ties
const TIE: f64 = 1e-12;

fn c8_constant_sweep(o: &mut Outcome, oc: &OptimizerConfig) {
    let taus: Vec<f64> = (0..=20).map(|i| i as f64 * 0.025).collect();
    let curves: Vec<Vec<f64>> = TOP_TO_BOTTOM
        .iter()
        .map(|&k| {
            delay_sweep(&ModeShape::normalized(k), GainFamily::Constant, &taus, oc)
                .unwrap()
                .into_iter()
                .map(|p| p.result.unwrap().f_tilde_star)
                .collect()
        })
        .collect();
    for (k, c) in TOP_TO_BOTTOM.iter().zip(&curves) {
        for i in 1..c.len() {
            o.check(c[i] <= c[i - 1] + 1e-6, || format!("{k} rises at tau={}: {} -> {}", taus[i], c[i - 1], c[i]));
        }
        o.check(c[0] > 0.875, || format!("{k} at tau=0: {}", c[0]));
    }
    for i in 0..taus.len() {
        for j in 1..4 {
            o.check(curves[j - 1][i] >= curves[j][i] - TIE, || {
                format!("tau={}: {} {} < {} {}", taus[i], TOP_TO_BOTTOM[j - 1], curves[j - 1][i], TOP_TO_BOTTOM[j], curves[j][i])
            });
        }
    }
    let rise_03 = curves[0][12];
    o.check(rise_03 >= 0.875, || format!("riseexp at tau=0.3: {rise_03}"));
}

fn c9_piecewise(o: &mut Outcome, oc: &OptimizerConfig) {
    let taus = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    for k in ShapeKind::ALL {
        let s = ModeShape::normalized(k);
        let c = delay_sweep(&s, GainFamily::Constant, &taus, oc).unwrap();
        let p = delay_sweep(&s, GainFamily::Piecewise, &taus, oc).unwrap();
        for (a, b) in c.iter().zip(&p) {
            let a = a.result.as_ref().unwrap();
            let b = b.result.as_ref().unwrap();
            o.check(b.f_tilde_star >= a.f_tilde_star - 1e-7, || {
                format!("{k} tau={}: pw {} < const {}", a.tau, b.f_tilde_star, a.f_tilde_star)
            });
            if a.tau == 0.1 {
                let ok = if k == ShapeKind::RisingExp {
                    b.lambda1 <= b.lambda2
                } else {
                    b.lambda1 > b.lambda2
                };
                o.check(ok, || format!("{k} tau=0.1 gains l1={} l2={}", b.lambda1, b.lambda2));
            }
        }
    }
    // a fresh search started from nothing agrees on the ordering too
    let s = ModeShape::normalized(ShapeKind::Rectangular);
    let r = optimize_piecewise_gain(&s, 0.1, oc, None).unwrap();
    o.check(r.lambda1 > r.lambda2, || format!("rect cold start l1={} l2={}", r.lambda1, r.lambda2));
}

fn c10_protocol(o: &mut Outcome) {
    let s = ModeShape::normalized(ShapeKind::RisingExp);
    let ideal = LoPhaseModel::adaptive(GainStrategy::optimal(s), 0.0).unwrap();
    let p = simulate_protocol(&s, &ideal, &sim(1e-4, 2_000)).unwrap();
    let target = Complex64::new(0.5, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            let d = (p.rho[a][b] - target).norm();
            o.check(d < 0.02, || format!("ideal rho[{a}][{b}] = {} (off by {d})", p.rho[a][b]));
        }
    }
    let r = ModeShape::normalized(ShapeKind::Rectangular);
    let h = simulate_protocol(&r, &LoPhaseModel::homodyne(), &sim(1e-3, 100_000)).unwrap();
    let off = h.rho[0][1].re;
    let half_f = h.merit.f_hat / 2.0;
    let se = h.rho_se[0][1];
    o.check((off - half_f).abs() < 3.0 * se, || format!("homodyne off-diagonal {off} vs f_hat/2 {half_f}"));
    let exact = (2.0 / PI).sqrt() / 2.0;
    o.check((off - exact).abs() < 3.0 * se, || format!("homodyne off-diagonal {off} vs f/2 {exact} (se {se})"));
}

fn c11_mc_agreement(o: &mut Outcome, q: &QuadratureConfig) {
    let points = [
        (ShapeKind::Rectangular, 1.0, 0.0),
        (ShapeKind::Rectangular, 2.0, 0.1),
        (ShapeKind::BilateralExp, 1.0, 0.05),
        (ShapeKind::BilateralExp, 0.5, 0.2),
        (ShapeKind::FallingExp, 2.0, 0.1),
        (ShapeKind::FallingExp, 1.0, 0.0),
        (ShapeKind::RisingExp, 1.0, 0.1),
        (ShapeKind::RisingExp, 3.0, 0.05),
    ];
    for (k, lambda, tau) in points {
        let s = ModeShape::normalized(k);
        let g = GainStrategy::constant(lambda).unwrap();
        let lo = LoPhaseModel::adaptive(g, tau).unwrap();
        let cfg = sim(1e-3, 100_000).with_delay(tau).unwrap();
        let m = estimate_merit(&s, &lo, &cfg).unwrap();
        let f = merit_quadrature_delay(&s, &g, tau, q).unwrap().f_tilde;
        let bound = 3.0 * m.m4_se / 8.0;
        o.check((m.f_tilde_hat - f).abs() < bound, || {
            format!("{k} l={lambda} tau={tau}: mc {} vs quad {f} (bound {bound})", m.f_tilde_hat)
        });
    }
}

fn main() {
    // honour `cargo test -- <filter>` loosely: a filter not matching runs nothing
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let q = QuadratureConfig::default();
    let oc = OptimizerConfig::default();
    let criteria: Vec<(&str, Box<dyn Fn(&mut Outcome)>)> = vec![
        ("1 table 1 constants and MC", Box::new(c1_table1)),
        ("2 canonical cancellation", Box::new(|o| c2_cancellation(o, &q))),
        ("3 rising constant-gain optimum", Box::new(|o| c3_rising_optimum(o, &oc))),
        ("4 delay limit", Box::new(|o| c4_delay_limit(o, &q))),
        ("5 closed forms vs quadrature", Box::new(|o| c5_closed_forms(o, &q))),
        ("6 asymptotes", Box::new(|o| c6_asymptotes(o, &q))),
        ("7 completeness", Box::new(c7_completeness)),
        ("8 constant-gain delay sweep", Box::new(|o| c8_constant_sweep(o, &oc))),
        ("9 piecewise dominance", Box::new(|o| c9_piecewise(o, &oc))),
        ("10 protocol state", Box::new(c10_protocol)),
        ("11 MC vs quadrature", Box::new(|o| c11_mc_agreement(o, &q))),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let t = Instant::now();
        let mut o = Outcome::new();
        let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut o)));
        if let Err(e) = run {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            o.failures.push(format!("error: {msg}"));
        }
        let secs = t.elapsed().as_secs_f64();
        if o.failures.is_empty() {
            println!("PASS criterion {name} ({secs:.1}s)");
        } else {
            failed += 1;
            println!("FAIL criterion {name} ({secs:.1}s)");
            for msg in &o.failures {
                println!("    {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
