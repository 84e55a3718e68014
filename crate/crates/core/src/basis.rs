//! Kernels, windows and B-spline bases together with their exact integrals.
//!
//! All functions here are pure. Time is in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::events::EventSequence;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian kernels are truncated at this many standard deviations when
/// summing over events; `exp(-32)` is below double precision relative to the peak.
pub(crate) const GAUSS_CUTOFF: f64 = 8.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, accurate for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Smoothing kernel `W(τ; σ_w)`, a zero-mean normal density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    sigma_w: f64,
}

impl GaussianKernel {
    pub fn new(sigma_w: f64) -> Result<Self> {
        if !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return domain(format!("sigma_w must be positive, got {sigma_w}"));
        }
        Ok(Self { sigma_w })
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    #[inline]
    pub fn eval(&self, tau: f64) -> f64 {
        let z = tau / self.sigma_w;
        INV_SQRT_2PI / self.sigma_w * (-0.5 * z * z).exp()
    }

    /// `∂W(τ)/∂σ_w`.
    #[inline]
    pub fn d_sigma(&self, tau: f64) -> f64 {
        let s = self.sigma_w;
        self.eval(tau) * (tau * tau / (s * s * s) - 1.0 / s)
    }

    /// `∫_a^b W(τ) dτ`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (za, zb) = (a / self.sigma_w, b / self.sigma_w);
        if za > 0.0 {
            // both in the upper tail: difference of survival functions keeps precision
            normal_sf(za) - normal_sf(zb)
        } else {
            normal_cdf(zb) - normal_cdf(za)
        }
    }
}

/// `W(τ; σ_w) = (2πσ_w²)^(-1/2) exp(-τ²/2σ_w²)`.
pub fn gaussian_eval(tau: f64, sigma_w: f64) -> Result<f64> {
    Ok(GaussianKernel::new(sigma_w)?.eval(tau))
}

/// Smoothed train `s̄(t) = Σ_m W(t - t_m)` over all events (two-sided kernel).
pub fn smoothed_train(events: &EventSequence, sigma_w: f64, t: f64) -> Result<f64> {
    let w = GaussianKernel::new(sigma_w)?;
    Ok(events.times().iter().map(|&tm| w.eval(t - tm)).sum())
}

/// Exact `∫_0^T s̄(u) du = Σ_m [Φ((T - t_m)/σ_w) - Φ(-t_m/σ_w)]`.
pub fn smoothed_train_integral(events: &EventSequence, sigma_w: f64) -> Result<f64> {
    let w = GaussianKernel::new(sigma_w)?;
    let horizon = events.horizon();
    Ok(events.times().iter().map(|&tm| w.mass(-tm, horizon - tm)).sum())
}

/// Mean-subtracted smoothed train `s̄(t) - (1/T)∫_0^T s̄`.
pub fn smoothed_train_centered(events: &EventSequence, sigma_w: f64, t: f64) -> Result<f64> {
    Ok(smoothed_train(events, sigma_w, t)? - smoothed_train_integral(events, sigma_w)? / events.horizon())
}

/// Causal square window `amplitude · 1[0 <= τ <= σ_h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareWindow {
    pub width: f64,
    pub amplitude: f64,
}

impl SquareWindow {
    pub fn new(width: f64, amplitude: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return domain(format!("square window width must be positive, got {width}"));
        }
        Ok(Self { width, amplitude })
    }

    #[inline]
    pub fn eval(&self, tau: f64) -> f64 {
        if (0.0..=self.width).contains(&tau) {
            self.amplitude
        } else {
            0.0
        }
    }

    /// `∫_0^x 1[0 <= τ <= σ_h] dτ` for `x >= 0`.
    #[inline]
    pub fn unit_mass_until(&self, x: f64) -> f64 {
        x.clamp(0.0, self.width)
    }
}

/// B-spline basis of degree `p` on a padded knot vector built from distinct knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    distinct: Vec<f64>,
    padded: Vec<f64>,
}

impl BSplineBasis {
    /// Pads `p` extra copies of each end knot. Needs at least two increasing knots.
    pub fn new(degree: usize, distinct_knots: Vec<f64>) -> Result<Self> {
        if distinct_knots.len() < 2 {
            return domain("B-spline basis needs at least two distinct knots");
        }
        if distinct_knots.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("distinct knots must be strictly increasing");
        }
        let first = distinct_knots[0];
        let last = *distinct_knots.last().unwrap();
        let mut padded = Vec::with_capacity(distinct_knots.len() + 2 * degree);
        padded.extend(std::iter::repeat_n(first, degree));
        padded.extend_from_slice(&distinct_knots);
        padded.extend(std::iter::repeat_n(last, degree));
        Ok(Self {
            degree,
            distinct: distinct_knots,
            padded,
        })
    }

    /// `count` equally spaced knots on `[lo, hi]`.
    pub fn uniform(degree: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(hi > lo) {
            return domain("uniform knots need count >= 2 and hi > lo");
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut knots: Vec<f64> = (0..count).map(|k| lo + step * k as f64).collect();
        knots[count - 1] = hi;
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn distinct_knots(&self) -> &[f64] {
        &self.distinct
    }

    pub fn padded_knots(&self) -> &[f64] {
        &self.padded
    }

    /// `K + p - 1` for `K` distinct knots.
    pub fn len(&self) -> usize {
        self.padded.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn support(&self) -> (f64, f64) {
        (self.distinct[0], *self.distinct.last().unwrap())
    }

    pub fn eval(&self, index: usize, x: f64) -> Result<f64> {
        bspline_eval(index, self.degree, &self.padded, x)
    }

    /// Writes every basis value at `x` into `out` (length [`Self::len`]).
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        eval_all_into(self.degree, &self.padded, x, out);
    }

    pub fn integral(&self, index: usize) -> Result<f64> {
        bspline_integral(index, self.degree, &self.padded)
    }

    /// `∫_{-∞}^x B_i(s) ds`, exact (Gauss–Legendre per knot span).
    pub fn partial_integral(&self, index: usize, x: f64) -> Result<f64> {
        if index >= self.len() {
            return domain(format!("basis index {index} out of range"));
        }
        let k = &self.padded;
        let p = self.degree;
        let (lo, hi) = (k[index], k[index + p + 1]);
        if x <= lo {
            return Ok(0.0);
        }
        if x >= hi {
            return bspline_integral(index, p, k);
        }
        let mut acc = 0.0;
        for span in index..=index + p {
            let (a, b) = (k[span], k[span + 1].min(x));
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (node, weight) in GAUSS_LEGENDRE_4 {
                let s = mid + half * node;
                acc += half * weight * bspline_eval(index, p, k, s)?;
            }
        }
        Ok(acc)
    }
}

const GAUSS_LEGENDRE_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    // Cox–de Boor convention: 0/0 -> 0
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `B_{i,p}(x)` by the Cox–de Boor recursion on a padded knot vector.
pub fn bspline_eval(index: usize, degree: usize, knots: &[f64], x: f64) -> Result<f64> {
    if knots.len() < degree + 2 || index + degree + 1 >= knots.len() {
        return domain(format!(
            "basis index {index} out of range for degree {degree} and {} knots",
            knots.len()
        ));
    }
    Ok(cox_de_boor(index, degree, knots, x))
}

fn cox_de_boor(i: usize, p: usize, t: &[f64], x: f64) -> f64 {
    if p == 0 {
        return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    if x < t[i] || x >= t[i + p + 1] {
        return 0.0;
    }
    ratio(x - t[i], t[i + p] - t[i]) * cox_de_boor(i, p - 1, t, x)
        + ratio(t[i + p + 1] - x, t[i + p + 1] - t[i + 1]) * cox_de_boor(i + 1, p - 1, t, x)
}

/// Iterative evaluation of every basis of degree `p` at `x`.
fn eval_all_into(p: usize, t: &[f64], x: f64, out: &mut [f64]) {
    let m = t.len() - 1;
    // degree-0 indicators for all m spans, raised in place
    let mut work = vec![0.0; m];
    for (i, w) in work.iter_mut().enumerate() {
        *w = if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    for d in 1..=p {
        for i in 0..(m - d) {
            work[i] = ratio(x - t[i], t[i + d] - t[i]) * work[i]
                + ratio(t[i + d + 1] - x, t[i + d + 1] - t[i + 1]) * work[i + 1];
        }
    }
    let n = t.len() - p - 1;
    out[..n].copy_from_slice(&work[..n]);
}

/// `∫ B_{i,p} = (t_{i+p+1} - t_i)/(p + 1)`.
pub fn bspline_integral(index: usize, degree: usize, knots: &[f64]) -> Result<f64> {
    if knots.len() < degree + 2 || index + degree + 1 >= knots.len() {
        return domain(format!("basis index {index} out of range"));
    }
    Ok((knots[index + degree + 1] - knots[index]) / (degree as f64 + 1.0))
}
