#![allow(dead_code, clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;

use hetero_hawkes::basis::{bspline_eval, BSplineBasis};
use hetero_hawkes::estimate::{DesignSpec, ImpactBasis, SigmaW};
use hetero_hawkes::theory::{reduced_cov_lambda, CoxTheoryParams};
use hetero_hawkes::{EventSequence, TrialSet};

/// Composite Simpson on `[a, b]` with `n` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = (n + n % 2).max(2);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let x = a + h * k as f64;
        s += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// Adaptive Simpson with Richardson correction.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // split first so narrow peaks are not missed by the initial stencil
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (x0, x1) = (a + h * k as f64, a + h * (k + 1) as f64);
            let (f0, f1, fm) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            rec(f, x0, x1, f0, fm, f1, whole, tol / pieces as f64, 40)
        })
        .sum()
}

pub fn normal_pdf(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Two-process trial set from per-trial event lists.
pub fn pair_data(i: Vec<Vec<f64>>, j: Vec<Vec<f64>>, horizon: f64) -> TrialSet {
    let n = i.len();
    let to_seq = |v: Vec<Vec<f64>>| {
        v.into_iter()
            .map(|t| EventSequence::from_unsorted(t, horizon).unwrap())
            .collect::<Vec<_>>()
    };
    let mut m = BTreeMap::new();
    m.insert("i".to_string(), to_seq(i));
    m.insert("j".to_string(), to_seq(j));
    TrialSet::new(m, n, horizon).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss–Legendre with `panels` equal panels of `rule` nodes.
pub fn composite_gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = a + h * (k as f64 + 0.5);
            rule.0
                .iter()
                .zip(&rule.1)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

// ---------------------------------------------------------------- oracles

#[derive(Debug, Clone)]
pub enum Kind {
    Square(f64),
    Spline(f64, usize),
    Exp(f64),
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub horizon: f64,
    pub source: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    pub sigma_w: f64,
    pub kind: Kind,
    pub coef: Vec<f64>,
}

impl Instance {
    pub fn spec(&self) -> DesignSpec {
        let basis = match self.kind {
            Kind::Square(w) => ImpactBasis::Square { width: w },
            Kind::Spline(l, k) => ImpactBasis::BSpline {
                degree: 3,
                lag_window: l,
                knots: k,
            },
            Kind::Exp(g) => ImpactBasis::Exponential { gamma: g },
        };
        DesignSpec::modified("i", "j", 0.03)
            .with_basis(basis)
            .with_sigma_w(SigmaW::Fixed(self.sigma_w))
    }

    /// Linear predictor written out from the basis definitions.
    pub fn intensity(&self, trial: usize, t: f64) -> f64 {
        let src = &self.source[trial];
        let mut l = self.coef[0];
        l += self.coef[1] * src.iter().map(|&tm| normal_pdf(t - tm, self.sigma_w)).sum::<f64>();
        match self.kind {
            Kind::Square(w) => {
                let n = src.iter().filter(|&&tm| t - tm > 0.0 && t - tm <= w).count();
                l += self.coef[2] * n as f64;
            }
            Kind::Exp(g) => {
                l += self.coef[2]
                    * src
                        .iter()
                        .filter(|&&tm| tm < t)
                        .map(|&tm| (-g * (t - tm)).exp())
                        .sum::<f64>();
            }
            Kind::Spline(lag, k) => {
                let basis = BSplineBasis::uniform(3, 0.0, lag, k).unwrap();
                for &tm in src.iter().filter(|&&tm| tm < t && t - tm < lag) {
                    for b in 0..basis.len() {
                        l += self.coef[2 + b] * bspline_eval(b, 3, basis.padded_knots(), t - tm).unwrap();
                    }
                }
            }
        }
        l
    }

    fn breakpoints(&self, trial: usize) -> Vec<f64> {
        let mut bp = vec![0.0, self.horizon];
        for &tm in &self.source[trial] {
            bp.push(tm);
            match self.kind {
                Kind::Square(w) => bp.push(tm + w),
                Kind::Spline(lag, k) => {
                    let step = lag / (k - 1) as f64;
                    bp.extend((1..k).map(|q| tm + step * q as f64));
                }
                Kind::Exp(_) => {}
            }
        }
        bp.retain(|&x| (0.0..=self.horizon).contains(&x));
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        bp
    }

    /// Midpoint Riemann sum with step <= `delta`, split at every kink of the basis.
    pub fn riemann_integral(&self, trial: usize, delta: f64) -> f64 {
        self.breakpoints(trial)
            .windows(2)
            .map(|w| {
                let n = ((w[1] - w[0]) / delta).ceil().max(1.0) as usize;
                let h = (w[1] - w[0]) / n as f64;
                (0..n)
                    .map(|k| self.intensity(trial, w[0] + h * (k as f64 + 0.5)))
                    .sum::<f64>()
                    * h
            })
            .sum()
    }
}

/// Defining integrals of the per-unit-time inner products, by nested quadrature.
pub fn inner_products_by_quadrature(p: &CoxTheoryParams, sw: f64) -> [f64; 5] {
    let rule = gauss_legendre(20);
    let q = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| composite_gl(f, a, b, 24, &rule);
    let c = |u: f64| reduced_cov_lambda(u, p);
    let atom = p.alpha_i + p.rho;
    let cov_reach = 12.0 * p.sigma_i;
    let w_reach = 12.0 * sw;
    let w = |u: f64| normal_pdf(u, sw);
    // (W * c)(u) = ∫ W(v) c(u - v) dv over the overlap of both supports
    let w_conv_c = |u: f64| {
        let lo = (-w_reach).max(u - cov_reach);
        let hi = w_reach.min(u + cov_reach);
        if hi <= lo {
            0.0
        } else {
            q(&|v| w(v) * c(u - v), lo, hi)
        }
    };
    let sh = p.sigma_h;
    let s_ww = q(&|u| w(u) * w_conv_c(u), -w_reach, w_reach) + atom * q(&|u| w(u) * w(u), -w_reach, w_reach);
    let s_hh = q(&|u| q(&|v| c(u - v), 0.0, sh), 0.0, sh) + atom * sh;
    let s_hw = q(&w_conv_c, 0.0, sh) + atom * q(&w, 0.0, sh);
    let reach = w_reach.min(cov_reach);
    let s_wl = q(&|u| w(u) * c(u), -reach, reach);
    let s_hl = q(&c, 0.0, sh);
    [s_ww, s_hh, s_hw, s_wl, s_hl]
}

impl Instance {
    /// Random small instance: one or two trials, at most ten events per process.
    pub fn random<R: rand::Rng>(rng: &mut R) -> Self {
        let horizon = rng.random_range(0.3..1.0);
        let trials = rng.random_range(1..=2usize);
        let kind = match rng.random_range(0..3) {
            0 => Kind::Square(rng.random_range(0.005..0.06)),
            1 => Kind::Spline(rng.random_range(0.02..0.1), rng.random_range(3..7)),
            _ => Kind::Exp(rng.random_range(5.0..80.0)),
        };
        let events = |rng: &mut R| {
            (0..trials)
                .map(|_| {
                    let n = rng.random_range(0..=10 / trials);
                    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.999) * horizon).collect();
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    v
                })
                .collect::<Vec<_>>()
        };
        let source = events(rng);
        let target = events(rng);
        let n_imp = match kind {
            Kind::Spline(_, k) => k + 2,
            _ => 1,
        };
        let mut coef = vec![rng.random_range(6.0..30.0), rng.random_range(0.0..0.5)];
        coef.extend((0..n_imp).map(|_| rng.random_range(-0.5..3.0)));
        Instance {
            horizon,
            source,
            target,
            sigma_w: rng.random_range(0.01..0.2),
            kind,
            coef,
        }
    }

    /// Scaled gap between the closed-form objective and the Riemann oracle;
    /// `None` when the oracle intensity is not positive at some target event.
    pub fn objective_error(&self, delta: f64) -> Option<f64> {
        let data = pair_data(self.source.clone(), self.target.clone(), self.horizon);
        let mut log_term = 0.0;
        let mut log_scale = 0.0;
        for (k, tr) in self.target.iter().enumerate() {
            for &t in tr {
                let l = self.intensity(k, t);
                if !(l > 0.0) {
                    return None;
                }
                log_term += l.ln();
                log_scale += l.ln().abs();
            }
        }
        let integral: f64 = (0..self.source.len()).map(|k| self.riemann_integral(k, delta)).sum();
        let value = hetero_hawkes::estimate::neg_loglik(&self.spec(), Some(self.sigma_w), &self.coef, &data).ok()?;
        Some((value - (integral - log_term)).abs() / (integral.abs() + log_scale))
    }

    /// Sup-norm gap between the analytic gradient and central differences, relative to
    /// `max(|g|∞, 1)`, and the worst Hessian asymmetry relative to the entry size.
    pub fn derivative_errors(&self) -> Option<(f64, f64)> {
        let data = pair_data(self.source.clone(), self.target.clone(), self.horizon);
        let spec = self.spec();
        let prepared = hetero_hawkes::estimate::PreparedDesign::new(&spec, &data, Some(self.sigma_w)).ok()?;
        let design = prepared.design();
        let (_, grad, hess) = design.eval(&self.coef)?;
        let p = self.coef.len();
        let mut worst: f64 = 0.0;
        for k in 0..p {
            let h = 1e-6 * self.coef[k].abs().max(1.0);
            let mut up = self.coef.clone();
            let mut down = self.coef.clone();
            up[k] += h;
            down[k] -= h;
            let (fu, fd) = (design.neg_loglik(&up), design.neg_loglik(&down));
            if !(fu.is_finite() && fd.is_finite()) {
                return None;
            }
            worst = worst.max((grad[k] - (fu - fd) / (2.0 * h)).abs());
        }
        let mut asym: f64 = 0.0;
        for a in 0..p {
            for b in 0..a {
                let s = hess[(a, b)].abs().max(hess[(b, a)].abs()).max(1e-300);
                asym = asym.max((hess[(a, b)] - hess[(b, a)]).abs() / s);
            }
        }
        Some((worst / grad.amax().max(1.0), asym))
    }
}
