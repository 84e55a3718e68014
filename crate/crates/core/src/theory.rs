//! Closed-form second-order theory for a pair sharing a linear-Cox background.
//!
//! The background is `f = Σ_c φ_{σ_I}(t - c)` with centers from a Poisson
//! process of rate `ρ`, so the source has mean rate `λ̄_i = α_i + ρ` and reduced
//! covariance density `c̆_Λ(u) = ρ (φ_{σ_I} ∗ φ_{σ_I})(u)` plus an atom of mass
//! `λ̄_i` at zero for the counting process itself. All inner products below are
//! per unit time; `erf` is the `libm` implementation (correctly rounded to a
//! few ulp, well below 1e-15 relative on the ranges used here).

use std::f64::consts::PI;

use libm::erf;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxTheoryParams {
    /// Bump-center rate (events/s).
    pub rho: f64,
    /// Bump width (s).
    pub sigma_i: f64,
    pub alpha_i: f64,
    pub alpha_j: f64,
    /// Square impact width (s).
    pub sigma_h: f64,
    /// Observed time (s), summed over trials.
    pub horizon: f64,
    /// Impact amplitude; only the variance depends on it.
    #[serde(default)]
    pub alpha_ij: f64,
}

impl CoxTheoryParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho >= 0.0
            && self.sigma_i > 0.0
            && self.alpha_i >= 0.0
            && self.alpha_j >= 0.0
            && self.sigma_h > 0.0
            && self.horizon > 0.0
            && self.alpha_ij.is_finite();
        if ok {
            Ok(())
        } else {
            domain(format!("invalid theory parameters {self:?}"))
        }
    }

    /// `λ̄_i = α_i + ρ`.
    pub fn lambda_bar_i(&self) -> f64 {
        self.alpha_i + self.rho
    }

    /// Target mean rate from first-moment balance: `α_j + ρ + α_{i→j} σ_h λ̄_i`.
    pub fn lambda_bar_j(&self) -> f64 {
        self.alpha_j + self.rho + self.alpha_ij * self.sigma_h * self.lambda_bar_i()
    }

    /// Parameters of the linear_cox_basic scenario over `horizon` seconds.
    pub fn linear_cox_basic(horizon: f64) -> Self {
        Self {
            rho: 30.0,
            sigma_i: 0.1,
            alpha_i: 10.0,
            alpha_j: 10.0,
            sigma_h: 0.03,
            horizon,
            alpha_ij: 2.0,
        }
    }
}

/// `c̆_Λ(u) = ρ/(√(4π) σ_I) exp(-u²/4σ_I²)`.
pub fn reduced_cov_lambda(u: f64, p: &CoxTheoryParams) -> f64 {
    let s = p.sigma_i;
    p.rho / ((4.0 * PI).sqrt() * s) * (-u * u / (4.0 * s * s)).exp()
}

/// Reduced covariance of the counting process: smooth part plus an atom at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedCovN {
    pub continuous: f64,
    pub atom_at_zero: f64,
}

pub fn reduced_cov_n(u: f64, p: &CoxTheoryParams) -> ReducedCovN {
    ReducedCovN {
        continuous: reduced_cov_lambda(u, p),
        atom_at_zero: p.lambda_bar_i(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerProducts {
    pub s_ww: f64,
    pub s_hh: f64,
    pub s_hw: f64,
    pub s_wl: f64,
    pub s_hl: f64,
}

impl InnerProducts {
    fn denominator(&self) -> f64 {
        self.s_ww * self.s_hh - self.s_hw * self.s_hw
    }
}

pub fn inner_products(p: &CoxTheoryParams, sigma_w: f64) -> Result<InnerProducts> {
    p.validate()?;
    if !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return domain(format!("sigma_w must be positive, got {sigma_w}"));
    }
    let (rho, si, sh, sw) = (p.rho, p.sigma_i, p.sigma_h, sigma_w);
    let lb = p.lambda_bar_i();
    let sqrt_pi = PI.sqrt();
    let wide = (2.0 * sw * sw + 4.0 * si * si).sqrt();
    Ok(InnerProducts {
        s_ww: rho / (2.0 * sqrt_pi * (sw * sw + si * si).sqrt()) + lb / (2.0 * sqrt_pi * sw),
        s_hh: s_hh(p),
        s_hw: 0.5 * rho * erf(sh / wide) + 0.5 * lb * erf(sh / (std::f64::consts::SQRT_2 * sw)),
        s_wl: rho / (sqrt_pi * wide),
        s_hl: 0.5 * rho * erf(sh / (2.0 * si)),
    })
}

fn s_hh(p: &CoxTheoryParams) -> f64 {
    let (rho, si, sh) = (p.rho, p.sigma_i, p.sigma_h);
    let r = sh / (2.0 * si);
    // 1 - exp(-r²) via expm1 keeps precision for small σ_h
    let tail = -(-r * r).exp_m1();
    rho * (sh * erf(r) - 2.0 * si / PI.sqrt() * tail) + p.lambda_bar_i() * sh
}

/// Bias of the amplitude estimate when the smoothed source (width `σ_w`) is a regressor.
pub fn bias_approx(p: &CoxTheoryParams, sigma_w: f64) -> Result<f64> {
    let s = inner_products(p, sigma_w)?;
    let den = s.denominator();
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!(
            "bias denominator {den} is not positive at sigma_w={sigma_w}"
        )));
    }
    Ok((s.s_ww * s.s_hl - s.s_hw * s.s_wl) / den)
}

/// Bias of the standard estimator without the nuisance regressor.
pub fn bias_hawkes(p: &CoxTheoryParams) -> Result<f64> {
    p.validate()?;
    Ok(0.5 * p.rho * erf(p.sigma_h / (2.0 * p.sigma_i)) / s_hh(p))
}

/// Asymptotic variance of the amplitude estimate with the nuisance regressor.
pub fn variance_approx(p: &CoxTheoryParams, sigma_w: f64) -> Result<f64> {
    let s = inner_products(p, sigma_w)?;
    let den = s.denominator();
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!(
            "variance denominator {den} is not positive at sigma_w={sigma_w}"
        )));
    }
    Ok(p.lambda_bar_j() / p.horizon * s.s_ww / den)
}

/// Variance without the nuisance regressor.
pub fn variance_hawkes(p: &CoxTheoryParams) -> Result<f64> {
    p.validate()?;
    Ok(p.lambda_bar_j() / (p.horizon * s_hh(p)))
}

/// Quadratic (Laplace) approximation of the log-likelihood gained by adding the
/// smoothed regressor on top of constant + impact. Approximate by construction.
pub fn delta_loglik_approx(p: &CoxTheoryParams, sigma_w: f64) -> Result<f64> {
    let s = inner_products(p, sigma_w)?;
    let proj = s.s_wl - s.s_hw * s.s_hl / s.s_hh;
    let resid = s.s_ww - s.s_hw * s.s_hw / s.s_hh;
    if !(resid > 0.0) {
        return Err(Error::Degenerate("nuisance regressor collinear with impact".into()));
    }
    Ok(p.horizon * proj * proj / (2.0 * p.lambda_bar_j() * resid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub sigma_w: f64,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    pub delta_loglik: f64,
}

pub fn theory_curves(p: &CoxTheoryParams, grid: &[f64]) -> Result<Vec<TheoryRow>> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return domain("sigma_w grid must be non-empty and increasing");
    }
    grid.iter()
        .map(|&sw| {
            let bias = bias_approx(p, sw)?;
            let var = variance_approx(p, sw)?;
            Ok(TheoryRow {
                sigma_w: sw,
                bias,
                se: var.sqrt(),
                rmse: (bias * bias + var).sqrt(),
                delta_loglik: delta_loglik_approx(p, sw)?,
            })
        })
        .collect()
}

/// Sign changes of the bias curve on a grid, located by bisection.
pub fn bias_roots(p: &CoxTheoryParams, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    let grid = log_grid(lo, hi, points)?;
    let vals = grid.iter().map(|&s| bias_approx(p, s)).collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    for k in 1..grid.len() {
        if vals[k - 1].signum() != vals[k].signum() {
            let (mut a, mut b, mut fa) = (grid[k - 1], grid[k], vals[k - 1]);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = bias_approx(p, m)?;
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    Ok(roots)
}

/// `n` log-spaced points on `[lo, hi]`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return domain("log grid needs 0 < lo < hi and n >= 2");
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[n - 1] = hi;
    Ok(g)
}
