//! Continuous-time likelihood fits of one target process.
//!
//! The intensity is linear in the coefficients, `λ(t) = Ψ(t)·β`, with columns
//! drawn from: a constant, smoothed source trains `s̄_i(t) = Σ W(t - t_m; σ_w)`
//! (the nuisance regressors), causal impact bases per source, and optional
//! tabulated per-trial regressors. The negative log-likelihood is
//! `-Σ_events log λ + Σ_trials ∫_0^T λ`, with every integral in closed form, and
//! is minimised by damped Newton inside the region where all event intensities
//! are positive.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{bspline_eval, BSplineBasis, GaussianKernel, GAUSS_CUTOFF};
use crate::error::{domain, Error, Result};
use crate::events::{EventSequence, TrialSet};
use crate::rng::StreamRng;
use crate::simulate::{simulate_conditional, IntensityModel, Tabulated};

pub const MAX_ITER: usize = 100;
pub const GRAD_TOL: f64 = 1e-8;
/// Exponential bases are truncated at `EXP_CUTOFF / γ` (e^-40 ≈ 4e-18).
const EXP_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpactBasis {
    /// One column: `Σ_m 1[0 <= t - t_m <= width]`.
    Square { width: f64 },
    /// Cubic (or other degree) B-splines on `knots` equally spaced points of `[0, lag_window]`.
    BSpline {
        degree: usize,
        lag_window: f64,
        knots: usize,
    },
    /// One column: `Σ_m e^{-γ(t - t_m)}`.
    Exponential { gamma: f64 },
}

impl ImpactBasis {
    pub fn spline(lag_window: f64, knots: usize) -> Self {
        ImpactBasis::BSpline {
            degree: 3,
            lag_window,
            knots,
        }
    }

    fn bspline(&self) -> Result<Option<BSplineBasis>> {
        match self {
            ImpactBasis::BSpline {
                degree,
                lag_window,
                knots,
            } => Ok(Some(BSplineBasis::uniform(*degree, 0.0, *lag_window, *knots)?)),
            _ => Ok(None),
        }
    }

    pub fn len(&self) -> Result<usize> {
        Ok(match self.bspline()? {
            Some(b) => b.len(),
            None => 1,
        })
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn validate(&self) -> Result<()> {
        match self {
            ImpactBasis::Square { width } if !(*width > 0.0) => domain("square width must be positive"),
            ImpactBasis::Exponential { gamma } if !(*gamma > 0.0) => domain("gamma must be positive"),
            ImpactBasis::BSpline { lag_window, knots, .. } if !(*lag_window > 0.0) || *knots < 2 => {
                domain("spline impact needs lag_window > 0 and at least two knots")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTerm {
    pub source: String,
    pub basis: ImpactBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaW {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl SigmaW {
    /// 25 log-spaced widths from 5 ms to 500 ms.
    pub fn default_grid() -> Self {
        SigmaW::Grid(crate::theory::log_grid(0.005, 0.5, 25).expect("static grid"))
    }

    fn values(&self) -> Vec<f64> {
        match self {
            SigmaW::Fixed(s) => vec![*s],
            SigmaW::Grid(g) => g.clone(),
        }
    }
}

/// Per-trial tabulated regressor (e.g. a known background).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraBasis {
    pub name: String,
    pub per_trial: Vec<Tabulated>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub target: String,
    pub impacts: Vec<SourceTerm>,
    /// Sources whose smoothed trains enter as nuisance regressors; empty gives the standard model.
    #[serde(default)]
    pub nuisance_sources: Vec<String>,
    pub sigma_w: SigmaW,
    #[serde(default)]
    pub mean_center: bool,
    /// Bisection on the analytic σ_w derivative around the best grid point.
    #[serde(default)]
    pub refine_sigma_w: bool,
    #[serde(default)]
    pub extra: Vec<ExtraBasis>,
}

impl DesignSpec {
    /// Constant + smoothed source + square impact, σ_w from the default grid.
    pub fn modified(source: &str, target: &str, sigma_h: f64) -> Self {
        Self {
            target: target.into(),
            impacts: vec![SourceTerm {
                source: source.into(),
                basis: ImpactBasis::Square { width: sigma_h },
            }],
            nuisance_sources: vec![source.into()],
            sigma_w: SigmaW::default_grid(),
            mean_center: false,
            refine_sigma_w: false,
            extra: Vec::new(),
        }
    }

    /// Constant + square impact.
    pub fn standard(source: &str, target: &str, sigma_h: f64) -> Self {
        Self {
            nuisance_sources: Vec::new(),
            ..Self::modified(source, target, sigma_h)
        }
    }

    pub fn with_sigma_w(mut self, sigma_w: SigmaW) -> Self {
        self.sigma_w = sigma_w;
        self
    }

    pub fn with_basis(mut self, basis: ImpactBasis) -> Self {
        for t in &mut self.impacts {
            t.basis = basis.clone();
        }
        self
    }

    pub fn with_impact(mut self, source: &str, basis: ImpactBasis) -> Self {
        self.impacts.push(SourceTerm {
            source: source.into(),
            basis,
        });
        self
    }

    pub fn has_nuisance(&self) -> bool {
        !self.nuisance_sources.is_empty()
    }

    pub fn validate(&self, data: &TrialSet) -> Result<()> {
        let known = |id: &str| -> Result<()> {
            if data.process(id).is_none() {
                let ids: Vec<&str> = data.process_ids().collect();
                return domain(format!("unknown process {id}; available: {}", ids.join(", ")));
            }
            Ok(())
        };
        known(&self.target)?;
        for t in &self.impacts {
            known(&t.source)?;
            t.basis.validate()?;
        }
        for s in &self.nuisance_sources {
            known(s)?;
        }
        for e in &self.extra {
            if e.per_trial.len() != data.trial_count() {
                return domain(format!("extra basis {} needs one table per trial", e.name));
            }
        }
        for s in self.sigma_w.values() {
            if !(s > 0.0 && s.is_finite()) {
                return domain("sigma_w values must be positive");
            }
        }
        if let SigmaW::Grid(g) = &self.sigma_w {
            if g.is_empty() || g.windows(2).any(|w| !(w[0] < w[1])) {
                return domain("sigma_w grid must be non-empty and increasing");
            }
        }
        Ok(())
    }

    /// Column layout: constant, nuisance, impacts, extras.
    fn columns(&self) -> Result<Vec<ColSpec>> {
        let mut cols = vec![ColSpec::Constant];
        for s in &self.nuisance_sources {
            cols.push(ColSpec::Smoothed { src: s.clone() });
        }
        for t in &self.impacts {
            match &t.basis {
                ImpactBasis::Square { width } => cols.push(ColSpec::Square {
                    src: t.source.clone(),
                    width: *width,
                }),
                ImpactBasis::Exponential { gamma } => cols.push(ColSpec::Exp {
                    src: t.source.clone(),
                    gamma: *gamma,
                }),
                ImpactBasis::BSpline { .. } => {
                    let basis = t.basis.bspline()?.unwrap();
                    for k in 0..basis.len() {
                        cols.push(ColSpec::Spline {
                            src: t.source.clone(),
                            basis: basis.clone(),
                            k,
                        });
                    }
                }
            }
        }
        for idx in 0..self.extra.len() {
            cols.push(ColSpec::Extra { idx });
        }
        Ok(cols)
    }

    pub fn coefficient_names(&self) -> Result<Vec<String>> {
        Ok(self
            .columns()?
            .iter()
            .map(|c| match c {
                ColSpec::Constant => "beta_j".to_string(),
                ColSpec::Smoothed { src } => format!("beta_w[{src}]"),
                ColSpec::Square { src, .. } | ColSpec::Exp { src, .. } => format!("alpha[{src}]"),
                ColSpec::Spline { src, k, .. } => format!("spline[{src}][{k}]"),
                ColSpec::Extra { idx } => format!("extra[{}]", self.extra[*idx].name),
            })
            .collect())
    }

    fn impact_offset(&self) -> usize {
        1 + self.nuisance_sources.len()
    }
}

#[derive(Debug, Clone)]
enum ColSpec {
    Constant,
    Smoothed { src: String },
    Square { src: String, width: f64 },
    Spline { src: String, basis: BSplineBasis, k: usize },
    Exp { src: String, gamma: f64 },
    Extra { idx: usize },
}

/// Column functions bound to one trial.
struct TrialColumns<'a> {
    cols: &'a [ColSpec],
    sources: Vec<Option<&'a EventSequence>>,
    extras: &'a [ExtraBasis],
    trial: usize,
    kernel: Option<GaussianKernel>,
}

impl<'a> TrialColumns<'a> {
    fn new(
        cols: &'a [ColSpec],
        design: &'a DesignSpec,
        data: &'a TrialSet,
        trial: usize,
        sigma_w: Option<f64>,
    ) -> Result<Self> {
        let sources = cols
            .iter()
            .map(|c| match c {
                ColSpec::Smoothed { src }
                | ColSpec::Square { src, .. }
                | ColSpec::Spline { src, .. }
                | ColSpec::Exp { src, .. } => Some(&data.process(src).unwrap()[trial]),
                _ => None,
            })
            .collect();
        let kernel = match sigma_w {
            Some(s) => Some(GaussianKernel::new(s)?),
            None if cols.iter().any(|c| matches!(c, ColSpec::Smoothed { .. })) => {
                return domain("design has nuisance columns but no sigma_w")
            }
            None => None,
        };
        Ok(Self {
            cols,
            sources,
            extras: &design.extra,
            trial,
            kernel,
        })
    }

    fn value(&self, c: usize, t: f64) -> f64 {
        let ev = self.sources[c].map(EventSequence::times).unwrap_or(&[]);
        match &self.cols[c] {
            ColSpec::Constant => 1.0,
            ColSpec::Smoothed { .. } => {
                let w = self.kernel.unwrap();
                let reach = GAUSS_CUTOFF * w.sigma_w();
                let lo = ev.partition_point(|&x| x < t - reach);
                let hi = ev.partition_point(|&x| x <= t + reach);
                ev[lo..hi].iter().map(|&tm| w.eval(t - tm)).sum()
            }
            ColSpec::Square { width, .. } => {
                let lo = ev.partition_point(|&x| x < t - width);
                let hi = ev.partition_point(|&x| x < t);
                hi.saturating_sub(lo) as f64
            }
            ColSpec::Spline { basis, k, .. } => {
                let (_, lag) = basis.support();
                let lo = ev.partition_point(|&x| x <= t - lag);
                let hi = ev.partition_point(|&x| x < t);
                let knots = basis.padded_knots();
                ev[lo..hi.max(lo)]
                    .iter()
                    .map(|&tm| bspline_eval(*k, basis.degree(), knots, t - tm).unwrap_or(0.0))
                    .sum()
            }
            ColSpec::Exp { gamma, .. } => {
                let lo = ev.partition_point(|&x| x < t - EXP_CUTOFF / gamma);
                let hi = ev.partition_point(|&x| x < t);
                ev[lo..hi.max(lo)].iter().map(|&tm| (-gamma * (t - tm)).exp()).sum()
            }
            ColSpec::Extra { idx } => self.extras[*idx].per_trial[self.trial].eval(t),
        }
    }

    /// `∫_0^t` of column `c`, closed form.
    fn cumulative(&self, c: usize, t: f64) -> f64 {
        let ev = self.sources[c].map(EventSequence::times).unwrap_or(&[]);
        match &self.cols[c] {
            ColSpec::Constant => t,
            ColSpec::Smoothed { .. } => {
                let w = self.kernel.unwrap();
                ev.iter().map(|&tm| w.mass(-tm, t - tm)).sum()
            }
            ColSpec::Square { width, .. } => ev
                .iter()
                .take_while(|&&tm| tm < t)
                .map(|&tm| (t - tm).min(*width))
                .sum(),
            ColSpec::Spline { basis, k, .. } => ev
                .iter()
                .take_while(|&&tm| tm < t)
                .map(|&tm| basis.partial_integral(*k, t - tm).unwrap_or(0.0))
                .sum(),
            ColSpec::Exp { gamma, .. } => ev
                .iter()
                .take_while(|&&tm| tm < t)
                .map(|&tm| -(-gamma * (t - tm)).exp_m1() / gamma)
                .sum(),
            ColSpec::Extra { idx } => self.extras[*idx].per_trial[self.trial].integral(0.0, t),
        }
    }

    /// Upper bound of column `c` on `[a, b]` (columns are non-negative except extras).
    fn sup(&self, c: usize, a: f64, b: f64) -> f64 {
        let ev = self.sources[c].map(EventSequence::times).unwrap_or(&[]);
        let count_in = |lo_t: f64| {
            let lo = ev.partition_point(|&x| x < lo_t);
            let hi = ev.partition_point(|&x| x < b);
            hi.saturating_sub(lo) as f64
        };
        match &self.cols[c] {
            ColSpec::Constant => 1.0,
            ColSpec::Smoothed { .. } => {
                let w = self.kernel.unwrap();
                let reach = GAUSS_CUTOFF * w.sigma_w();
                let lo = ev.partition_point(|&x| x < a - reach);
                let hi = ev.partition_point(|&x| x <= b + reach);
                ev[lo..hi].iter().map(|&tm| w.eval(tm.clamp(a, b) - tm)).sum::<f64>() * (1.0 + 1e-12)
            }
            ColSpec::Square { width, .. } => count_in(a - width),
            ColSpec::Spline { basis, .. } => count_in(a - basis.support().1),
            ColSpec::Exp { gamma, .. } => {
                let lo = ev.partition_point(|&x| x < a - EXP_CUTOFF / gamma);
                let hi = ev.partition_point(|&x| x < b);
                ev[lo..hi.max(lo)]
                    .iter()
                    .map(|&tm| (-gamma * (a - tm).max(0.0)).exp())
                    .sum()
            }
            ColSpec::Extra { idx } => self.extras[*idx].per_trial[self.trial].sup(a, b),
        }
    }
}

/// Design evaluated at every target event, column-major, plus exact column integrals.
#[derive(Debug, Clone)]
pub struct Design {
    cols: Vec<Vec<f64>>,
    integrals: Vec<f64>,
    n_events: usize,
}

impl Design {
    pub fn n_params(&self) -> usize {
        self.cols.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn integrals(&self) -> &[f64] {
        &self.integrals
    }

    pub fn neg_loglik(&self, beta: &[f64]) -> f64 {
        let mut f = CompensatedSum::default();
        for (i, b) in self.integrals.iter().zip(beta) {
            f.add(i * b);
        }
        for r in 0..self.n_events {
            let lam = self.row_dot(r, beta);
            if !(lam > 0.0) {
                return f64::INFINITY;
            }
            f.add(-lam.ln());
        }
        f.value()
    }

    #[inline]
    fn row_dot(&self, r: usize, beta: &[f64]) -> f64 {
        self.cols.iter().zip(beta).map(|(c, b)| c[r] * b).sum()
    }

    /// Objective, gradient and Hessian; `None` outside the feasible region.
    pub fn eval(&self, beta: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let p = self.n_params();
        let mut f = CompensatedSum::default();
        for (i, b) in self.integrals.iter().zip(beta) {
            f.add(i * b);
        }
        let mut g = DVector::from_column_slice(&self.integrals);
        let mut h = DMatrix::zeros(p, p);
        let mut row = vec![0.0; p];
        for r in 0..self.n_events {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.cols[c][r];
            }
            let lam: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
            if !(lam > 0.0) {
                return None;
            }
            f.add(-lam.ln());
            let w = 1.0 / lam;
            let w2 = w * w;
            for a in 0..p {
                g[a] -= w * row[a];
                let ra = w2 * row[a];
                for b in a..p {
                    h[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        Some((f.value(), g, h))
    }
}

/// Neumaier summation; keeps the objective resolvable near the optimum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// A design whose smoothed columns can be recomputed for a new σ_w.
pub struct PreparedDesign<'a> {
    spec: &'a DesignSpec,
    data: &'a TrialSet,
    cols: Vec<ColSpec>,
    design: Design,
    sigma_w: Option<f64>,
    centers: Vec<Vec<f64>>,
}

impl<'a> PreparedDesign<'a> {
    pub fn new(spec: &'a DesignSpec, data: &'a TrialSet, sigma_w: Option<f64>) -> Result<Self> {
        spec.validate(data)?;
        let cols = spec.columns()?;
        let target = data.process(&spec.target).unwrap();
        let n_events = target.iter().map(EventSequence::len).sum();
        let mut me = Self {
            spec,
            data,
            design: Design {
                cols: vec![Vec::new(); cols.len()],
                integrals: vec![0.0; cols.len()],
                n_events,
            },
            cols,
            sigma_w: None,
            centers: Vec::new(),
        };
        let all: Vec<usize> = (0..me.cols.len()).collect();
        me.sigma_w = sigma_w.or(spec.has_nuisance().then(|| spec.sigma_w.values()[0]));
        me.fill(&all)?;
        Ok(me)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn sigma_w(&self) -> Option<f64> {
        self.sigma_w
    }

    /// Recomputes only the smoothed columns.
    pub fn set_sigma_w(&mut self, sigma_w: f64) -> Result<()> {
        if self.sigma_w == Some(sigma_w) {
            return Ok(());
        }
        self.sigma_w = Some(sigma_w);
        let idx: Vec<usize> = (0..self.cols.len())
            .filter(|&c| matches!(self.cols[c], ColSpec::Smoothed { .. }))
            .collect();
        self.fill(&idx)
    }

    fn fill(&mut self, which: &[usize]) -> Result<()> {
        let target = self.data.process(&self.spec.target).unwrap();
        let horizon = self.data.trial_horizon();
        let n_trials = self.data.trial_count();
        if self.centers.is_empty() {
            self.centers = vec![vec![0.0; self.cols.len()]; n_trials];
        }
        for &c in which {
            let mut col = Vec::with_capacity(self.design.n_events);
            let mut integral = 0.0;
            for (k, seq) in target.iter().enumerate() {
                let tc = TrialColumns::new(&self.cols, self.spec, self.data, k, self.sigma_w)?;
                let total = tc.cumulative(c, horizon);
                let center = if self.spec.mean_center && c > 0 {
                    total / horizon
                } else {
                    0.0
                };
                self.centers[k][c] = center;
                col.extend(seq.times().iter().map(|&t| tc.value(c, t) - center));
                integral += total - center * horizon;
            }
            self.design.cols[c] = col;
            self.design.integrals[c] = integral;
        }
        Ok(())
    }

    /// Analytic `∂(neg log-lik)/∂σ_w` at fixed coefficients.
    pub fn sigma_w_derivative(&self, beta: &[f64]) -> Result<f64> {
        let sw = self
            .sigma_w
            .ok_or_else(|| Error::Domain("design has no smoothing width".into()))?;
        if self.spec.mean_center {
            return domain("sigma_w derivative is only available for raw bases");
        }
        let w = GaussianKernel::new(sw)?;
        let target = self.data.process(&self.spec.target).unwrap();
        let horizon = self.data.trial_horizon();
        let mut total = 0.0;
        let mut row = 0;
        let mut lams = Vec::with_capacity(self.design.n_events);
        for r in 0..self.design.n_events {
            lams.push(self.design.row_dot(r, beta));
        }
        for (k, seq) in target.iter().enumerate() {
            let start = row;
            row += seq.len();
            for (c, spec) in self.cols.iter().enumerate() {
                let ColSpec::Smoothed { src } = spec else { continue };
                let ev = self.data.process(src).unwrap()[k].times();
                let mut d_events = 0.0;
                for (r, &t) in (start..row).zip(seq.times()) {
                    let reach = GAUSS_CUTOFF * sw;
                    let lo = ev.partition_point(|&x| x < t - reach);
                    let hi = ev.partition_point(|&x| x <= t + reach);
                    let dx: f64 = ev[lo..hi].iter().map(|&tm| w.d_sigma(t - tm)).sum();
                    d_events += dx / lams[r];
                }
                let d_integral: f64 = ev
                    .iter()
                    .map(|&tm| -(horizon - tm) / sw * w.eval(horizon - tm) - tm / sw * w.eval(tm))
                    .sum();
                total += beta[c] * (d_integral - d_events);
            }
        }
        Ok(total)
    }

    /// Intensity of the fitted model on trial `k` as a thinning target.
    pub fn trial_model<'b>(&'b self, trial: usize, beta: &'b [f64]) -> Result<FittedTrialIntensity<'b>> {
        Ok(FittedTrialIntensity {
            cols: TrialColumns::new(&self.cols, self.spec, self.data, trial, self.sigma_w)?,
            centers: &self.centers[trial],
            beta,
        })
    }
}

/// `λ(t) = Ψ(t)·β` on one trial, with closed-form cumulative intensity.
pub struct FittedTrialIntensity<'a> {
    cols: TrialColumns<'a>,
    centers: &'a [f64],
    beta: &'a [f64],
}

impl FittedTrialIntensity<'_> {
    pub fn cumulative(&self, t: f64) -> f64 {
        (0..self.beta.len())
            .map(|c| self.beta[c] * (self.cols.cumulative(c, t) - self.centers[c] * t))
            .sum()
    }
}

impl IntensityModel for FittedTrialIntensity<'_> {
    fn intensity(&self, t: f64) -> f64 {
        (0..self.beta.len())
            .map(|c| self.beta[c] * (self.cols.value(c, t) - self.centers[c]))
            .sum::<f64>()
            .max(0.0)
    }

    fn upper_bound(&self, a: f64, b: f64) -> f64 {
        (0..self.beta.len())
            .map(|c| {
                let (beta, center) = (self.beta[c], self.centers[c]);
                match self.cols.cols[c] {
                    ColSpec::Constant => beta,
                    ColSpec::Extra { idx } if beta < 0.0 => {
                        beta * (self.cols.extras[idx].per_trial[self.cols.trial].inf(a, b) - center)
                    }
                    _ if beta >= 0.0 => beta * (self.cols.sup(c, a, b) - center),
                    // non-negative column with a negative weight
                    _ => -beta * center,
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub sigma_w: f64,
    pub neg_loglik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub target: String,
    pub coef_names: Vec<String>,
    pub params: Vec<f64>,
    pub beta_j: f64,
    pub beta_w: Option<f64>,
    pub sigma_w_selected: Option<f64>,
    pub impact_coeffs: Vec<f64>,
    pub impact_offset: usize,
    pub hessian: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub neg_loglik: f64,
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    #[serde(default)]
    pub profile: Vec<ProfilePoint>,
}

impl FitResult {
    /// First impact coefficient and its standard error.
    pub fn alpha(&self) -> (f64, f64) {
        (self.params[self.impact_offset], self.std_errors[self.impact_offset])
    }

    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let k = self.coef_names.iter().position(|n| n == name)?;
        Some((self.params[k], self.std_errors[k]))
    }
}

struct NewtonOutcome {
    beta: Vec<f64>,
    f: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

/// Damped Newton with backtracking; steps leaving the feasible region are shrunk.
fn newton(design: &Design, init: &[f64]) -> Result<NewtonOutcome> {
    let p = design.n_params();
    let mut beta = init.to_vec();
    let (mut f, mut g, mut h) = design
        .eval(&beta)
        .ok_or_else(|| Error::Fit("initial point is infeasible".into()))?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        if g.amax() < GRAD_TOL * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let dir = solve_spd(&h, &(-&g)).ok_or_else(|| Error::Fit("singular Hessian".into()))?;
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let cand: Vec<f64> = (0..p).map(|k| beta[k] + step * dir[k]).collect();
            if let Some((fc, gc, hc)) = design.eval(&cand) {
                if fc <= f + 1e-4 * step * slope || (fc - f).abs() <= 1e-15 * f.abs() {
                    accepted = Some((cand, fc, gc, hc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, hc)) = accepted else { break };
        let stalled = fc >= f;
        beta = cand;
        f = fc;
        g = gc;
        h = hc;
        if stalled {
            converged = g.amax() < GRAD_TOL * (1.0 + f.abs());
            break;
        }
    }
    if !converged && g.amax() < GRAD_TOL * (1.0 + f.abs()) {
        converged = true;
    }
    Ok(NewtonOutcome {
        beta,
        f,
        grad: g,
        hess: h,
        iterations,
        converged,
    })
}

/// Solves `H x = b`, adding a growing ridge if `H` is not numerically positive definite.
fn solve_spd(h: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let scale = h.diagonal().amax().max(1e-300);
    let mut ridge = 1e-12 * scale;
    while ridge < 1e6 * scale {
        let mut hr = h.clone();
        for k in 0..hr.nrows() {
            hr[(k, k)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            return Some(ch.solve(b));
        }
        ridge *= 10.0;
    }
    None
}

fn default_init(design: &PreparedDesign) -> Vec<f64> {
    let mut init = vec![0.0; design.design.n_params()];
    init[0] = design.design.n_events as f64 / design.data.total_time();
    init
}

fn result_from(prepared: &PreparedDesign, out: NewtonOutcome, profile: Vec<ProfilePoint>) -> Result<FitResult> {
    let spec = prepared.spec;
    let p = out.beta.len();
    let cov = out
        .hess
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("Hessian is singular at the optimum".into()))?;
    let off = spec.impact_offset();
    let n_imp: usize = spec
        .impacts
        .iter()
        .map(|t| t.basis.len())
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(FitResult {
        target: spec.target.clone(),
        coef_names: spec.coefficient_names()?,
        beta_j: out.beta[0],
        beta_w: spec.has_nuisance().then(|| out.beta[1]),
        sigma_w_selected: if spec.has_nuisance() { prepared.sigma_w } else { None },
        impact_coeffs: out.beta[off..off + n_imp].to_vec(),
        impact_offset: off,
        hessian: (0..p).map(|a| (0..p).map(|b| out.hess[(a, b)]).collect()).collect(),
        covariance: (0..p).map(|a| (0..p).map(|b| cov[(a, b)]).collect()).collect(),
        std_errors: (0..p).map(|a| cov[(a, a)].max(0.0).sqrt()).collect(),
        neg_loglik: out.f,
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: out.grad.amax(),
        params: out.beta,
        profile,
    })
}

fn check_events(data: &TrialSet, target: &str) -> Result<()> {
    if data.event_count(target) == 0 {
        return Err(Error::Degenerate(format!("target {target} has no events")));
    }
    Ok(())
}

/// Negative log-likelihood of `params` at a fixed smoothing width.
pub fn neg_loglik(spec: &DesignSpec, sigma_w: Option<f64>, params: &[f64], data: &TrialSet) -> Result<f64> {
    let prepared = PreparedDesign::new(spec, data, sigma_w)?;
    if params.len() != prepared.design.n_params() {
        return domain("parameter vector has the wrong length");
    }
    Ok(prepared.design.neg_loglik(params))
}

/// Gradient and Hessian of the negative log-likelihood; errors outside the feasible region.
pub fn loglik_grad_hessian(
    spec: &DesignSpec,
    sigma_w: Option<f64>,
    params: &[f64],
    data: &TrialSet,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let prepared = PreparedDesign::new(spec, data, sigma_w)?;
    if params.len() != prepared.design.n_params() {
        return domain("parameter vector has the wrong length");
    }
    let (_, g, h) = prepared
        .design
        .eval(params)
        .ok_or_else(|| Error::Domain("non-positive intensity at a target event".into()))?;
    let p = params.len();
    Ok((
        g.iter().copied().collect(),
        (0..p).map(|a| (0..p).map(|b| h[(a, b)]).collect()).collect(),
    ))
}

/// Fit at one smoothing width (the first grid value if a grid is given).
pub fn fit_fixed_sigma(spec: &DesignSpec, data: &TrialSet, init: Option<&[f64]>) -> Result<FitResult> {
    check_events(data, &spec.target)?;
    let prepared = PreparedDesign::new(spec, data, None)?;
    let start = match init {
        Some(b) if b.len() == prepared.design.n_params() => b.to_vec(),
        Some(_) => return domain("initial parameter vector has the wrong length"),
        None => default_init(&prepared),
    };
    let out = newton(&prepared.design, &start)?;
    result_from(&prepared, out, Vec::new())
}

/// Grid search over σ_w (largest width wins ties), optional derivative refinement.
pub fn fit_modified_mle(spec: &DesignSpec, data: &TrialSet) -> Result<FitResult> {
    check_events(data, &spec.target)?;
    if !spec.has_nuisance() {
        return fit_fixed_sigma(spec, data, None);
    }
    let grid = spec.sigma_w.values();
    let mut prepared = PreparedDesign::new(spec, data, Some(grid[0]))?;
    let mut profile = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, NewtonOutcome)> = None;
    let mut warm: Option<Vec<f64>> = None;
    for &sw in &grid {
        prepared.set_sigma_w(sw)?;
        let out = match warm.as_deref().filter(|w| prepared.design.neg_loglik(w).is_finite()) {
            Some(w) => newton(&prepared.design, w),
            None => newton(&prepared.design, &default_init(&prepared)),
        };
        let Ok(out) = out else {
            profile.push(ProfilePoint {
                sigma_w: sw,
                neg_loglik: f64::INFINITY,
                converged: false,
            });
            continue;
        };
        profile.push(ProfilePoint {
            sigma_w: sw,
            neg_loglik: out.f,
            converged: out.converged,
        });
        warm = Some(out.beta.clone());
        if best.as_ref().is_none_or(|(_, b)| out.f <= b.f) {
            best = Some((sw, out));
        }
    }
    let (mut sw_best, mut out_best) = best.ok_or_else(|| Error::Fit("every sigma_w grid point failed".into()))?;

    if spec.refine_sigma_w && grid.len() > 1 && !spec.mean_center {
        let k = grid.iter().position(|&g| g == sw_best).unwrap();
        let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(grid.len() - 1)]);
        let mut beta = out_best.beta.clone();
        for _ in 0..30 {
            let mid = (lo * hi).sqrt();
            prepared.set_sigma_w(mid)?;
            let out = if prepared.design.neg_loglik(&beta).is_finite() {
                newton(&prepared.design, &beta)?
            } else {
                newton(&prepared.design, &default_init(&prepared))?
            };
            // envelope theorem: the profile derivative is the partial derivative at the optimum
            let d = prepared.sigma_w_derivative(&out.beta)?;
            beta = out.beta.clone();
            if out.f < out_best.f {
                sw_best = mid;
                out_best = out;
            }
            if d > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo < 1.0 + 1e-6 {
                break;
            }
        }
    }
    prepared.set_sigma_w(sw_best)?;
    result_from(&prepared, out_best, profile)
}

/// The standard MHP fit: the same design without nuisance regressors.
pub fn fit_standard_mhp(spec: &DesignSpec, data: &TrialSet) -> Result<FitResult> {
    let plain = DesignSpec {
        nuisance_sources: Vec::new(),
        ..spec.clone()
    };
    fit_fixed_sigma(&plain, data, None)
}

/// Spline impact fit; identical optimiser, σ_w selected as in [`fit_modified_mle`].
pub fn fit_nonparametric(spec: &DesignSpec, data: &TrialSet) -> Result<FitResult> {
    if !spec
        .impacts
        .iter()
        .any(|t| matches!(t.basis, ImpactBasis::BSpline { .. }))
    {
        return domain("nonparametric fit needs a B-spline impact basis");
    }
    fit_modified_mle(spec, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lag: f64,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Fitted impact curve of term `term` at `lags`, with pointwise normal CIs.
pub fn impact_curve(
    spec: &DesignSpec,
    fit: &FitResult,
    term: usize,
    lags: &[f64],
    confidence: f64,
) -> Result<Vec<CurvePoint>> {
    let t = spec
        .impacts
        .get(term)
        .ok_or_else(|| Error::Domain(format!("no impact term {term}")))?;
    let mut off = fit.impact_offset;
    for prev in &spec.impacts[..term] {
        off += prev.basis.len()?;
    }
    let z = crate::stats::normal_quantile(0.5 + 0.5 * confidence);
    let n = t.basis.len()?;
    let spline = t.basis.bspline()?;
    lags.iter()
        .map(|&lag| {
            let mut b = vec![0.0; n];
            match &t.basis {
                ImpactBasis::Square { width } => b[0] = if (0.0..=*width).contains(&lag) { 1.0 } else { 0.0 },
                ImpactBasis::Exponential { gamma } => b[0] = if lag >= 0.0 { (-gamma * lag).exp() } else { 0.0 },
                ImpactBasis::BSpline { .. } => spline.as_ref().unwrap().eval_all(lag, &mut b),
            }
            let value: f64 = (0..n).map(|k| b[k] * fit.params[off + k]).sum();
            let var: f64 = (0..n)
                .flat_map(|a| (0..n).map(move |c| (a, c)))
                .map(|(a, c)| b[a] * b[c] * fit.covariance[off + a][off + c])
                .sum();
            let half = z * var.max(0.0).sqrt();
            Ok(CurvePoint {
                lag,
                value,
                ci_lo: value - half,
                ci_hi: value + half,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairNuisance {
    /// Standard model: no smoothed regressors.
    None,
    /// Smoothed train of the pair's source only.
    #[default]
    Source,
    /// Smoothed trains of every process except the target.
    AllOthers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOptions {
    pub basis: ImpactBasis,
    pub sigma_w: SigmaW,
    pub nuisance: PairNuisance,
}

pub type PairFits = BTreeMap<(String, String), Result<FitResult>>;

/// Bivariate fits for every ordered pair `(source, target)`.
pub fn fit_multivariate_pairwise(data: &TrialSet, opts: &PairwiseOptions) -> Result<PairFits> {
    let ids: Vec<String> = data.process_ids().map(str::to_string).collect();
    if ids.len() < 2 {
        return domain("pairwise fitting needs at least two processes");
    }
    let mut out = BTreeMap::new();
    for target in &ids {
        for source in ids.iter().filter(|s| *s != target) {
            let nuisance = match opts.nuisance {
                PairNuisance::None => Vec::new(),
                PairNuisance::Source => vec![source.clone()],
                PairNuisance::AllOthers => ids.iter().filter(|s| *s != target).cloned().collect(),
            };
            let spec = DesignSpec {
                target: target.clone(),
                impacts: vec![SourceTerm {
                    source: source.clone(),
                    basis: opts.basis.clone(),
                }],
                nuisance_sources: nuisance,
                sigma_w: opts.sigma_w.clone(),
                mean_center: false,
                refine_sigma_w: false,
                extra: Vec::new(),
            };
            out.insert((source.clone(), target.clone()), fit_modified_mle(&spec, data));
        }
    }
    Ok(out)
}

/// Simulates the target of a fitted model on every trial, conditional on the observed sources.
pub fn simulate_from_fit(spec: &DesignSpec, fit: &FitResult, data: &TrialSet, rng: &mut StreamRng) -> Result<TrialSet> {
    if spec.impacts.iter().any(|t| t.source == spec.target) {
        return domain("conditional simulation does not support self-impacts");
    }
    let prepared = PreparedDesign::new(spec, data, fit.sigma_w_selected)?;
    let mut seqs = Vec::with_capacity(data.trial_count());
    for k in 0..data.trial_count() {
        let model = prepared.trial_model(k, &fit.params)?;
        seqs.push(simulate_conditional(&model, data.trial_horizon(), rng)?);
    }
    let mut processes = data.processes().clone();
    processes.insert(spec.target.clone(), seqs);
    TrialSet::new(processes, data.trial_count(), data.trial_horizon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::simulate::{linear_cox_pair, thinning_simulate};

    fn one_trial(i: Vec<f64>, j: Vec<f64>, horizon: f64) -> TrialSet {
        let mut m = BTreeMap::new();
        m.insert("i".to_string(), vec![EventSequence::new(i, horizon).unwrap()]);
        m.insert("j".to_string(), vec![EventSequence::new(j, horizon).unwrap()]);
        TrialSet::new(m, 1, horizon).unwrap()
    }

    fn constant_only(target: &str) -> DesignSpec {
        DesignSpec {
            target: target.into(),
            impacts: vec![],
            nuisance_sources: vec![],
            sigma_w: SigmaW::Fixed(0.1),
            mean_center: false,
            refine_sigma_w: false,
            extra: vec![],
        }
    }

    #[test]
    fn constant_model_examples() {
        let data = one_trial(vec![], vec![], 3.0);
        assert!((neg_loglik(&constant_only("j"), None, &[2.0], &data).unwrap() - 6.0).abs() < 1e-12);

        let data = one_trial(vec![], vec![0.2, 0.9, 1.4, 2.5], 3.0);
        let fit = fit_fixed_sigma(&constant_only("j"), &data, None).unwrap();
        assert!(fit.converged);
        assert!((fit.beta_j - 4.0 / 3.0).abs() < 1e-12);
        let (g, h) = loglik_grad_hessian(&constant_only("j"), None, &[4.0 / 3.0], &data).unwrap();
        assert!(g[0].abs() < 1e-12);
        assert!(h[0][0] > 0.0);
    }

    #[test]
    fn infeasible_point_is_infinite() {
        let data = one_trial(vec![0.5], vec![0.2, 0.6], 1.0);
        let spec = DesignSpec::standard("i", "j", 0.03);
        let v = neg_loglik(&spec, None, &[-1.0, 0.0], &data).unwrap();
        assert_eq!(v, f64::INFINITY);
        assert!(loglik_grad_hessian(&spec, None, &[-1.0, 0.0], &data).is_err());
    }

    #[test]
    fn no_target_events_is_degenerate() {
        let data = one_trial(vec![0.5], vec![], 1.0);
        assert!(matches!(
            fit_fixed_sigma(&DesignSpec::standard("i", "j", 0.03), &data, None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn unknown_unit_lists_available() {
        let data = one_trial(vec![0.5], vec![0.1], 1.0);
        let err = fit_fixed_sigma(&DesignSpec::standard("x", "j", 0.03), &data, None).unwrap_err();
        assert!(err.to_string().contains("available: i, j"));
    }

    #[test]
    fn sigma_w_derivative_matches_finite_difference() {
        let spec = linear_cox_pair(30.0, 0.1, 0.03, 2.0);
        let data = thinning_simulate(
            &NetworkSpec {
                trial_count: 3,
                seed: 4,
                ..spec
            },
            false,
        )
        .unwrap()
        .trials;
        let design = DesignSpec::modified("i", "j", 0.03);
        let beta = [20.0, 0.4, 1.5];
        let sw = 0.08;
        let prepared = PreparedDesign::new(&design, &data, Some(sw)).unwrap();
        let analytic = prepared.sigma_w_derivative(&beta).unwrap();
        let h = 1e-6;
        let f = |s: f64| neg_loglik(&design, Some(s), &beta, &data).unwrap();
        let numeric = (f(sw + h) - f(sw - h)) / (2.0 * h);
        assert!(
            (analytic - numeric).abs() < 1e-5 * numeric.abs().max(1.0),
            "{analytic} vs {numeric}"
        );
    }

    use crate::simulate::NetworkSpec;

    #[test]
    fn spline_design_has_eleven_coefficients() {
        let design = DesignSpec::modified("i", "j", 0.03).with_basis(ImpactBasis::spline(0.05, 9));
        let names = design.coefficient_names().unwrap();
        assert_eq!(names.len(), 2 + 11);
    }

    #[test]
    fn fitted_intensity_bound_dominates() {
        let spec = linear_cox_pair(30.0, 0.1, 0.03, 2.0);
        let data = thinning_simulate(
            &NetworkSpec {
                trial_count: 2,
                seed: 8,
                ..spec
            },
            false,
        )
        .unwrap()
        .trials;
        let design = DesignSpec::modified("i", "j", 0.03).with_sigma_w(SigmaW::Fixed(0.1));
        let prepared = PreparedDesign::new(&design, &data, None).unwrap();
        let beta = [15.0, 0.5, -3.0];
        let m = prepared.trial_model(0, &beta).unwrap();
        for k in 0..500 {
            let a = k as f64 * 0.01;
            let ub = m.upper_bound(a, a + 0.01);
            for q in 0..=20 {
                assert!(m.intensity(a + 0.0005 * q as f64) <= ub * (1.0 + 1e-9));
            }
        }
        let mut rng = substream(1, 0, 0);
        let fit = fit_fixed_sigma(&design, &data, None).unwrap();
        let sim = simulate_from_fit(&design, &fit, &data, &mut rng).unwrap();
        assert_eq!(sim.process("i"), data.process("i"));
    }
}
