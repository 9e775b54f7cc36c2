//! Panel Gauss–Legendre machinery for the `F̃` integrals.
//!
//! Both evaluators work on the same factorization. With `V(a, b) = ∫_a^b λ²`,
//! `w = λ√u` and the delay `τ`,
//!
//! ```text
//! R(x) = ∫_x^∞ u(t) e^{-2V(x-τ, t-τ)} dt
//! M(x) = ∫_{-∞}^x w(z) e^{-V(z-τ, x-τ)/2} dz
//! G(s) = 2M(s) - e^{-V(s-2τ, s-τ)/2} M(s-τ)        (G = M at τ = 0)
//! H(s) = e^{-2V(s-τ, s)} R(s+τ)
//! F̃    = 7/8 - ¼∫ u R ds + ∫ w G H ds
//! ```
//!
//! The zero-delay evaluator computes `M` and `R` at every outer node by a
//! fresh sum over all panels. The delay evaluator carries them across panel
//! boundaries by recursion and only integrates the last partial panel.

use crate::feedback::{GainLaw, GainStrategy};
use crate::modeshape::ModeShape;
use crate::stats::NeumaierSum;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let j = j as f64;
                    let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 0 { 1.0 } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * x);
        }
        acc * h
    }

    /// `∫_a^b f` where `f` carries a kernel decaying away from `peak` (outside
    /// or at an end of `[a, b]`) at rate up to `rate`: segments grow
    /// geometrically with distance from the peak.
    pub fn graded(&self, a: f64, b: f64, peak: f64, rate: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let far = (peak - a).abs().max((peak - b).abs());
        if !(rate * far > 2.0) {
            return self.integrate(a, b, f);
        }
        let d = 1.0 / rate;
        let mut cuts = vec![a];
        let mut step = d;
        if peak >= b {
            let mut inner = Vec::new();
            loop {
                let c = peak - step;
                if c <= a {
                    break;
                }
                if c < b {
                    inner.push(c);
                }
                step *= 2.0;
            }
            inner.reverse();
            cuts.extend(inner);
        } else {
            loop {
                let c = peak + step;
                if c >= b {
                    break;
                }
                if c > a {
                    cuts.push(c);
                }
                step *= 2.0;
            }
        }
        cuts.push(b);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            acc += self.integrate(w[0], w[1], &mut f);
        }
        acc
    }
}

/// Sorted panel boundaries on the truncated domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub points: Vec<f64>,
}

impl Mesh {
    /// Boundaries at every point where an integrand can kink (shape and gain
    /// breakpoints shifted by multiples of `τ`), graded towards those points
    /// when a large gain makes boundary layers, then split into panels of
    /// width at most `h`.
    pub fn build(shape: &ModeShape, g: &GainStrategy, tau: f64, lo: f64, hi: f64, h: f64) -> Mesh {
        let mut base = vec![lo, hi];
        base.extend(shape.breakpoints());
        base.extend(g.breakpoints());
        let mut special = Vec::new();
        for &p in &base {
            for shift in [-tau, 0.0, tau, 2.0 * tau] {
                let q = p + shift;
                if q >= lo && q <= hi {
                    special.push(q);
                }
            }
        }
        let mut extra = Vec::new();
        for &m in &special {
            let rate = 2.0 * g.max_gain_sq_on(m - h - 2.0 * tau, m + h);
            if rate * h > 2.0 {
                let mut step = 1.0 / rate;
                while step < h {
                    for q in [m - step, m + step] {
                        if q > lo && q < hi {
                            extra.push(q);
                        }
                    }
                    step *= 2.0;
                }
            }
        }
        special.extend(extra);
        special.sort_by(|a, b| a.partial_cmp(b).unwrap());
        special.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
        let mut points = Vec::with_capacity(special.len() * 4);
        for w in special.windows(2) {
            let n = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
            for i in 0..n {
                points.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
            }
        }
        points.push(*special.last().unwrap());
        Mesh { points }
    }

    /// Index `j` of the panel `[p_j, p_{j+1})` containing `x`.
    fn panel_of(&self, x: f64) -> usize {
        let j = self.points.partition_point(|&p| p <= x);
        j.saturating_sub(1).min(self.points.len() - 2)
    }
}

/// One `(shape, gain, τ)` problem on a fixed mesh.
pub struct Integrand<'a> {
    shape: &'a ModeShape,
    g: &'a GainStrategy,
    tau: f64,
    lo: f64,
    hi: f64,
    gl: &'a GaussLegendre,
}

impl<'a> Integrand<'a> {
    pub fn new(shape: &'a ModeShape, g: &'a GainStrategy, tau: f64, lo: f64, hi: f64, gl: &'a GaussLegendre) -> Self {
        Integrand {
            shape,
            g,
            tau,
            lo,
            hi,
            gl,
        }
    }

    fn u(&self, t: f64) -> f64 {
        self.shape.density(t)
    }

    fn w(&self, t: f64) -> f64 {
        let s = self.shape.sqrt_density(t);
        if s == 0.0 {
            0.0
        } else {
            self.g.gain_value(t) * s
        }
    }

    fn v(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            self.g.phase_variance_unchecked(a, b)
        }
    }

    fn max_sq(&self, a: f64, b: f64) -> f64 {
        match self.g.law() {
            GainLaw::Constant(l) => l * l,
            _ => self.g.max_gain_sq_on(a, b),
        }
    }

    /// `∫_a^x w(z) e^{-V(z-τ, x-τ)/2} dz`.
    fn partial_m(&self, a: f64, x: f64) -> f64 {
        let tau = self.tau;
        let rate = 0.5 * self.max_sq(a - tau, x - tau);
        self.gl.graded(a, x, x, rate, |z| {
            self.w(z) * (-0.5 * self.v(z - tau, x - tau)).exp()
        })
    }

    /// `∫_x^b u(t) e^{-2V(x-τ, t-τ)} dt`.
    fn partial_r(&self, x: f64, b: f64) -> f64 {
        let tau = self.tau;
        let rate = 2.0 * self.max_sq(x - tau, b - tau);
        self.gl.graded(x, b, x, rate, |t| {
            self.u(t) * (-2.0 * self.v(x - tau, t - tau)).exp()
        })
    }

    /// Delay evaluator: `M` and `R` at panel boundaries by recursion.
    pub fn f_tilde_recursive(&self, mesh: &Mesh) -> f64 {
        let k = &mesh.points;
        let np = k.len();
        let tau = self.tau;
        let mut a = vec![0.0; np];
        for j in 0..np - 1 {
            a[j + 1] = (-0.5 * self.v(k[j] - tau, k[j + 1] - tau)).exp() * a[j]
                + self.partial_m(k[j], k[j + 1]);
        }
        let mut b = vec![0.0; np];
        for j in (0..np - 1).rev() {
            b[j] = (-2.0 * self.v(k[j] - tau, k[j + 1] - tau)).exp() * b[j + 1]
                + self.partial_r(k[j], k[j + 1]);
        }
        let m_in = |j: usize, x: f64| {
            (-0.5 * self.v(k[j] - tau, x - tau)).exp() * a[j] + self.partial_m(k[j], x)
        };
        let r_in = |j: usize, x: f64| {
            (-2.0 * self.v(x - tau, k[j + 1] - tau)).exp() * b[j + 1] + self.partial_r(x, k[j + 1])
        };
        let m_at = |x: f64| {
            if x <= self.lo {
                0.0
            } else if x >= self.hi {
                (-0.5 * self.v(self.hi - tau, x - tau)).exp() * a[np - 1]
            } else {
                m_in(mesh.panel_of(x), x)
            }
        };
        let r_at = |x: f64| {
            if x >= self.hi {
                0.0
            } else if x <= self.lo {
                (-2.0 * self.v(x - tau, self.lo - tau)).exp() * b[0]
            } else {
                r_in(mesh.panel_of(x), x)
            }
        };

        let mut total = NeumaierSum::new();
        for j in 0..np - 1 {
            let part = self.gl.integrate(k[j], k[j + 1], |s| {
                let u = self.u(s);
                let w = self.w(s);
                let r = r_in(j, s);
                let mut val = -0.25 * u * r;
                if w != 0.0 {
                    let m = m_in(j, s);
                    let gfun = if tau > 0.0 {
                        2.0 * m - (-0.5 * self.v(s - 2.0 * tau, s - tau)).exp() * m_at(s - tau)
                    } else {
                        m
                    };
                    let hfun = if tau > 0.0 {
                        (-2.0 * self.v(s - tau, s)).exp() * r_at(s + tau)
                    } else {
                        r
                    };
                    val += w * gfun * hfun;
                }
                val
            });
            total.add(part);
        }
        0.875 + total.value()
    }

    /// Zero-delay evaluator: inner integrals summed afresh at every node.
    pub fn f_tilde_direct(&self, mesh: &Mesh) -> f64 {
        debug_assert!(self.tau == 0.0);
        let k = &mesh.points;
        let np = k.len();
        let mut total = NeumaierSum::new();
        for j in 0..np - 1 {
            let part = self.gl.integrate(k[j], k[j + 1], |s| {
                // G0(s) = ∫_{lo}^{s} w(v) e^{-V(v,s)/2} dv
                let mut g0 = NeumaierSum::new();
                for i in 0..j {
                    let rate = 0.5 * self.max_sq(k[i], k[i + 1]);
                    g0.add(self.gl.graded(k[i], k[i + 1], s, rate, |v| {
                        self.w(v) * (-0.5 * self.v(v, s)).exp()
                    }));
                }
                let rate = 0.5 * self.max_sq(k[j], s);
                g0.add(self.gl.graded(k[j], s, s, rate, |v| {
                    self.w(v) * (-0.5 * self.v(v, s)).exp()
                }));
                // H0(s) = ∫_{s}^{hi} u(t) e^{-2V(s,t)} dt
                let mut h0 = NeumaierSum::new();
                let rate = 2.0 * self.max_sq(s, k[j + 1]);
                h0.add(self.gl.graded(s, k[j + 1], s, rate, |t| {
                    self.u(t) * (-2.0 * self.v(s, t)).exp()
                }));
                for i in j + 1..np - 1 {
                    let rate = 2.0 * self.max_sq(k[i], k[i + 1]);
                    h0.add(self.gl.graded(k[i], k[i + 1], s, rate, |t| {
                        self.u(t) * (-2.0 * self.v(s, t)).exp()
                    }));
                }
                let h0 = h0.value();
                -0.25 * self.u(s) * h0 + self.w(s) * g0.value() * h0
            });
            total.add(part);
        }
        0.875 + total.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        let wsum: f64 = gl.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        // degree 15 is the highest exact degree for 8 nodes
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let gl1 = GaussLegendre::new(1);
        assert_eq!(gl1.integrate(0.0, 2.0, |x| 3.0 * x + 1.0), 8.0);
    }

    #[test]
    fn graded_rule_resolves_sharp_kernel() {
        let gl = GaussLegendre::new(12);
        let r = 1e5;
        let exact = (1.0 - (-r * 1.0f64).exp()) / r;
        let v = gl.graded(0.0, 1.0, 1.0, r, |z| (-r * (1.0 - z)).exp());
        assert!((v - exact).abs() < 1e-14 * exact.max(1.0), "{v} vs {exact}");
        let v = gl.graded(0.0, 1.0, 0.0, r, |z| (-r * z).exp());
        assert!((v - exact).abs() < 1e-14, "{v} vs {exact}");
        // peak beyond the interval
        let exact = ((-r * 1e-4f64).exp() - (-r * 0.5f64).exp()) / r;
        let v = gl.graded(0.0, 0.5, -1e-4, r, |z| (-r * (z + 1e-4)).exp());
        assert!((v - exact).abs() < 1e-14, "{v} vs {exact}");
    }
}
