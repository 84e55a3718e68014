//! Thinning simulation of multivariate Hawkes processes whose baselines carry a
//! random, time-varying background `f(t)`.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::basis::{BSplineBasis, GAUSS_CUTOFF};
use crate::error::{domain, Error, Result};
use crate::events::{EventSequence, TrialSet};
use crate::rng::{role, substream, StreamRng};

/// Majorant refresh interval (s).
const BLOCK: f64 = 0.01;
/// Extra margin (in bump widths) for Cox centers outside the observation window.
const CENTER_MARGIN: f64 = 5.0;

/// Piecewise-linear function on a sorted grid, constant beyond its ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Tabulated {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return domain("tabulated function needs matching, non-empty grids");
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("tabulated grid must be strictly increasing");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("tabulated values must be finite");
        }
        Ok(Self { times, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return self.values[0];
        }
        if k == n {
            return self.values[n - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] + w * (self.values[k] - self.values[k - 1])
    }

    /// Maximum on `[a, b]` (attained at an end point or a grid node).
    pub fn sup(&self, a: f64, b: f64) -> f64 {
        let lo = self.times.partition_point(|&x| x < a);
        let hi = self.times.partition_point(|&x| x <= b);
        self.values[lo..hi]
            .iter()
            .copied()
            .fold(self.eval(a).max(self.eval(b)), f64::max)
    }

    /// Minimum on `[a, b]`.
    pub fn inf(&self, a: f64, b: f64) -> f64 {
        let lo = self.times.partition_point(|&x| x < a);
        let hi = self.times.partition_point(|&x| x <= b);
        self.values[lo..hi]
            .iter()
            .copied()
            .fold(self.eval(a).min(self.eval(b)), f64::min)
    }

    /// Exact `∫_a^b` of the interpolant.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut knots = vec![a];
        let lo = self.times.partition_point(|&x| x <= a);
        let hi = self.times.partition_point(|&x| x < b);
        knots.extend_from_slice(&self.times[lo..hi]);
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
            .sum()
    }

    /// Samples `f` on `n` equally spaced points covering `[0, horizon]`.
    pub fn sample<F: Fn(f64) -> f64>(f: F, horizon: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return domain("need at least two grid points");
        }
        let times: Vec<f64> = (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundSpec {
    Constant {
        level: f64,
    },
    /// `A sin(2π(t/period - φ_rnd - φ_lag))`; `phase_lag` in periods.
    Sinusoid {
        amplitude: f64,
        period: f64,
        phase_lag: f64,
        randomize_phase: bool,
    },
    LinearCox {
        rho: f64,
        sigma_i: f64,
    },
    VaryingCox {
        rho: f64,
        sigma_i_range: [f64; 2],
    },
    Tabulated(Tabulated),
}

impl BackgroundSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackgroundSpec::Constant { level } if !level.is_finite() => domain("constant background must be finite"),
            BackgroundSpec::Sinusoid { period, amplitude, .. } if !(*period > 0.0) || !amplitude.is_finite() => {
                domain("sinusoid needs a positive period and finite amplitude")
            }
            BackgroundSpec::LinearCox { rho, sigma_i } if !(*rho >= 0.0 && *sigma_i > 0.0) => {
                domain("linear Cox needs rho >= 0 and sigma_I > 0")
            }
            BackgroundSpec::VaryingCox {
                rho,
                sigma_i_range: [lo, hi],
            } if !(*rho >= 0.0 && *lo > 0.0 && lo <= hi) => domain("varying Cox needs rho >= 0 and 0 < lo <= hi"),
            BackgroundSpec::Tabulated(t) => Tabulated::new(t.times.clone(), t.values.clone()).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// One draw of a background on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RealizedBackground {
    Constant {
        level: f64,
    },
    Sinusoid {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Sum of unit-mass Gaussian bumps; `centers` sorted.
    Bumps {
        centers: Vec<f64>,
        widths: Vec<f64>,
        max_width: f64,
    },
    Tabulated(Tabulated),
}

impl RealizedBackground {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RealizedBackground::Constant { level } => *level,
            RealizedBackground::Sinusoid {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * PI * (t / period - phase)).sin(),
            RealizedBackground::Bumps {
                centers,
                widths,
                max_width,
            } => {
                let reach = GAUSS_CUTOFF * max_width;
                let lo = centers.partition_point(|&c| c < t - reach);
                let hi = centers.partition_point(|&c| c <= t + reach);
                (lo..hi).map(|k| gauss(t - centers[k], widths[k])).sum()
            }
            RealizedBackground::Tabulated(tab) => tab.eval(t),
        }
    }

    /// Upper bound of `f` on `[a, b]`.
    pub fn sup(&self, a: f64, b: f64) -> f64 {
        match self {
            RealizedBackground::Constant { level } => *level,
            RealizedBackground::Sinusoid { amplitude, .. } => amplitude.abs(),
            RealizedBackground::Bumps {
                centers,
                widths,
                max_width,
            } => {
                let reach = GAUSS_CUTOFF * max_width;
                let lo = centers.partition_point(|&c| c < a - reach);
                let hi = centers.partition_point(|&c| c <= b + reach);
                (lo..hi)
                    .map(|k| {
                        let c = centers[k];
                        let nearest = c.clamp(a, b);
                        gauss(nearest - c, widths[k])
                    })
                    .sum::<f64>()
                    * (1.0 + 1e-12) // rounding guard
            }
            RealizedBackground::Tabulated(tab) => tab.sup(a, b),
        }
    }

    pub fn tabulate(&self, horizon: f64, n: usize) -> Result<Tabulated> {
        Tabulated::sample(|t| self.eval(t), horizon, n)
    }
}

#[inline]
fn gauss(x: f64, s: f64) -> f64 {
    let z = x / s;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * s)
}

/// Draws one background realization on `[0, horizon]`.
pub fn sample_background(spec: &BackgroundSpec, horizon: f64, rng: &mut StreamRng) -> Result<RealizedBackground> {
    spec.validate()?;
    Ok(match spec {
        BackgroundSpec::Constant { level } => RealizedBackground::Constant { level: *level },
        BackgroundSpec::Sinusoid {
            amplitude,
            period,
            phase_lag,
            randomize_phase,
        } => {
            // always consume the draw so shared streams stay aligned
            let u: f64 = rng.random();
            let rnd = if *randomize_phase { u } else { 0.0 };
            RealizedBackground::Sinusoid {
                amplitude: *amplitude,
                period: *period,
                phase: rnd + phase_lag,
            }
        }
        BackgroundSpec::LinearCox { rho, sigma_i } => cox_bumps(*rho, horizon, (*sigma_i, *sigma_i), rng)?,
        BackgroundSpec::VaryingCox {
            rho,
            sigma_i_range: [lo, hi],
        } => cox_bumps(*rho, horizon, (*lo, *hi), rng)?,
        BackgroundSpec::Tabulated(t) => RealizedBackground::Tabulated(t.clone()),
    })
}

fn cox_bumps(rho: f64, horizon: f64, (lo, hi): (f64, f64), rng: &mut StreamRng) -> Result<RealizedBackground> {
    let margin = CENTER_MARGIN * hi;
    let span = horizon + 2.0 * margin;
    let mean = rho * span;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Domain(format!("center count: {e}")))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut pairs: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let c = -margin + span * rng.random::<f64>();
            let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
            (c, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(RealizedBackground::Bumps {
        centers: pairs.iter().map(|p| p.0).collect(),
        widths: pairs.iter().map(|p| p.1).collect(),
        max_width: hi,
    })
}

/// `(1/(T A²)) ∫_0^T f_i f_j` by the trapezoidal rule on a common grid.
pub fn normalized_dot(fi: &Tabulated, fj: &Tabulated, amplitude: f64, horizon: f64) -> Result<f64> {
    if fi.times != fj.times {
        return domain("backgrounds are tabulated on different grids");
    }
    if amplitude == 0.0 || !(horizon > 0.0) {
        return domain("normalization needs non-zero amplitude and positive horizon");
    }
    let t = &fi.times;
    let mut acc = 0.0;
    for k in 1..t.len() {
        let a = fi.values[k - 1] * fj.values[k - 1];
        let b = fi.values[k] * fj.values[k];
        acc += 0.5 * (t[k] - t[k - 1]) * (a + b);
    }
    Ok(acc / (horizon * amplitude * amplitude))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpactKernel {
    /// `amplitude · 1[0 <= τ <= width]`.
    Square { width: f64, amplitude: f64 },
    /// `Σ_k coeffs[k] B_k(τ)` on `[knots[0], knots[last]]`.
    BSpline {
        degree: usize,
        knots: Vec<f64>,
        coeffs: Vec<f64>,
    },
    /// `amplitude · e^{-γτ}`, truncated at `cutoff` when given.
    Exponential {
        amplitude: f64,
        gamma: f64,
        cutoff: Option<f64>,
    },
}

impl ImpactKernel {
    pub fn square(width: f64, amplitude: f64) -> Self {
        ImpactKernel::Square { width, amplitude }
    }

    fn compile(&self) -> Result<CompiledKernel> {
        match self {
            ImpactKernel::Square { width, amplitude } => {
                if !(*width > 0.0) {
                    return domain("square impact width must be positive");
                }
                Ok(CompiledKernel {
                    support: *width,
                    sup_pos: amplitude.max(0.0),
                    kind: KernelKind::Square {
                        width: *width,
                        amp: *amplitude,
                    },
                })
            }
            ImpactKernel::BSpline { degree, knots, coeffs } => {
                let basis = BSplineBasis::new(*degree, knots.clone())?;
                if coeffs.len() != basis.len() {
                    return domain(format!(
                        "spline impact has {} coefficients, basis has {}",
                        coeffs.len(),
                        basis.len()
                    ));
                }
                if basis.support().0 < 0.0 {
                    return domain("spline impact must be causal (knots >= 0)");
                }
                Ok(CompiledKernel {
                    support: basis.support().1,
                    // B-splines are non-negative and sum to at most one
                    sup_pos: coeffs.iter().fold(0.0_f64, |m, c| m.max(*c)),
                    kind: KernelKind::Spline {
                        basis,
                        coeffs: coeffs.clone(),
                    },
                })
            }
            ImpactKernel::Exponential {
                amplitude,
                gamma,
                cutoff,
            } => {
                let Some(cut) = cutoff else {
                    return Err(Error::Config(
                        "exponential impact has unbounded support; set a cutoff".into(),
                    ));
                };
                if !(*gamma > 0.0 && *cut > 0.0) {
                    return domain("exponential impact needs gamma > 0 and cutoff > 0");
                }
                Ok(CompiledKernel {
                    support: *cut,
                    sup_pos: amplitude.max(0.0),
                    kind: KernelKind::Exp {
                        amp: *amplitude,
                        gamma: *gamma,
                    },
                })
            }
        }
    }

    pub fn eval(&self, tau: f64) -> Result<f64> {
        Ok(self.compile()?.eval(tau))
    }
}

#[derive(Debug, Clone)]
struct CompiledKernel {
    kind: KernelKind,
    support: f64,
    sup_pos: f64,
}

#[derive(Debug, Clone)]
enum KernelKind {
    Square { width: f64, amp: f64 },
    Spline { basis: BSplineBasis, coeffs: Vec<f64> },
    Exp { amp: f64, gamma: f64 },
}

impl CompiledKernel {
    fn eval(&self, tau: f64) -> f64 {
        if tau < 0.0 || tau > self.support {
            return 0.0;
        }
        match &self.kind {
            KernelKind::Square { width, amp } => {
                if tau <= *width {
                    *amp
                } else {
                    0.0
                }
            }
            KernelKind::Spline { basis, coeffs } => {
                let mut buf = vec![0.0; basis.len()];
                basis.eval_all(tau, &mut buf);
                buf.iter().zip(coeffs).map(|(b, c)| b * c).sum()
            }
            KernelKind::Exp { amp, gamma } => amp * (-gamma * tau).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEdge {
    pub source: String,
    pub target: String,
    pub kernel: ImpactKernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub process_ids: Vec<String>,
    pub baselines: Vec<f64>,
    pub backgrounds: Vec<BackgroundSpec>,
    #[serde(default = "default_true")]
    pub shared_background: bool,
    #[serde(default)]
    pub impacts: Vec<ImpactEdge>,
    pub horizon: f64,
    pub trial_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.process_ids.len();
        if n == 0 {
            return domain("network has no processes");
        }
        let unique: HashSet<&String> = self.process_ids.iter().collect();
        if unique.len() != n {
            return domain("process ids must be unique");
        }
        if self.baselines.len() != n || self.backgrounds.len() != n {
            return domain("need one baseline and one background per process");
        }
        if self.baselines.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return domain("baselines must be non-negative");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain("horizon must be positive");
        }
        for b in &self.backgrounds {
            b.validate()?;
        }
        for e in &self.impacts {
            for id in [&e.source, &e.target] {
                if !unique.contains(id) {
                    return domain(format!("impact references unknown process {id}"));
                }
            }
            e.kernel.compile()?;
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.process_ids.iter().position(|p| p == id)
    }

    /// True impact amplitude of a square edge (0 when absent).
    pub fn square_amplitude(&self, source: &str, target: &str) -> f64 {
        self.impacts
            .iter()
            .filter(|e| e.source == source && e.target == target)
            .map(|e| match e.kernel {
                ImpactKernel::Square { amplitude, .. } => amplitude,
                _ => f64::NAN,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub trials: TrialSet,
    /// `[trial][process]`, in `process_ids` order, when recorded.
    pub realized_backgrounds: Option<Vec<Vec<RealizedBackground>>>,
    pub seed_used: u64,
}

/// Simulates every trial of `spec`. Trial `k` depends only on `(seed, k)`.
pub fn thinning_simulate(spec: &NetworkSpec, record_backgrounds: bool) -> Result<SimulationOutput> {
    spec.validate()?;
    let n = spec.process_ids.len();
    let mut incoming: Vec<Vec<(usize, CompiledKernel)>> = vec![Vec::new(); n];
    for e in &spec.impacts {
        let s = spec.index_of(&e.source).unwrap();
        let t = spec.index_of(&e.target).unwrap();
        incoming[t].push((s, e.kernel.compile()?));
    }

    let mut per_process: Vec<Vec<EventSequence>> = vec![Vec::with_capacity(spec.trial_count); n];
    let mut realized = Vec::new();
    for trial in 0..spec.trial_count {
        let backgrounds = trial_backgrounds(spec, trial as u64)?;
        let mut rng = substream(spec.seed, trial as u64, role::EVENTS);
        let events = simulate_trial(spec, &backgrounds, &incoming, &mut rng);
        for (p, ev) in events.into_iter().enumerate() {
            per_process[p].push(EventSequence::new(ev, spec.horizon)?);
        }
        if record_backgrounds {
            realized.push(backgrounds);
        }
    }
    let processes: BTreeMap<String, Vec<EventSequence>> = spec.process_ids.iter().cloned().zip(per_process).collect();
    Ok(SimulationOutput {
        trials: TrialSet::new(processes, spec.trial_count, spec.horizon)?,
        realized_backgrounds: record_backgrounds.then_some(realized),
        seed_used: spec.seed,
    })
}

/// Background draws of one trial. Shared backgrounds replay one trial-level stream
/// per process, so identical specs give identical functions.
pub fn trial_backgrounds(spec: &NetworkSpec, trial: u64) -> Result<Vec<RealizedBackground>> {
    spec.backgrounds
        .iter()
        .enumerate()
        .map(|(p, b)| {
            let mut rng = if spec.shared_background {
                substream(spec.seed, trial, role::SHARED_BACKGROUND)
            } else {
                substream(spec.seed, trial, role::PROCESS_BACKGROUND + p as u64)
            };
            sample_background(b, spec.horizon, &mut rng)
        })
        .collect()
}

fn simulate_trial(
    spec: &NetworkSpec,
    backgrounds: &[RealizedBackground],
    incoming: &[Vec<(usize, CompiledKernel)>],
    rng: &mut StreamRng,
) -> Vec<Vec<f64>> {
    let n = spec.process_ids.len();
    let horizon = spec.horizon;
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut lambdas = vec![0.0; n];
    let mut t = 0.0;
    while t < horizon {
        let block_end = (t + BLOCK).min(horizon);
        let mut bound = 0.0;
        for j in 0..n {
            let mut b = spec.baselines[j] + backgrounds[j].sup(t, block_end);
            for (src, k) in &incoming[j] {
                if k.sup_pos > 0.0 {
                    let ev = &events[*src];
                    let active = ev.len() - ev.partition_point(|&x| x < t - k.support);
                    b += k.sup_pos * active as f64;
                }
            }
            bound += b.max(0.0);
        }
        if bound <= 0.0 {
            t = block_end;
            continue;
        }
        let step: f64 = Exp1.sample(rng);
        let cand = t + step / bound;
        if cand >= block_end {
            t = block_end;
            continue;
        }
        t = cand;
        let mut total = 0.0;
        for j in 0..n {
            let mut l = spec.baselines[j] + backgrounds[j].eval(t);
            for (src, k) in &incoming[j] {
                let ev = &events[*src];
                let lo = ev.partition_point(|&x| x < t - k.support);
                l += ev[lo..].iter().map(|&tm| k.eval(t - tm)).sum::<f64>();
            }
            lambdas[j] = l.max(0.0);
            total += lambdas[j];
        }
        debug_assert!(total <= bound * (1.0 + 1e-9), "majorant violated");
        let u: f64 = rng.random::<f64>() * bound;
        if u < total {
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (j, l) in lambdas.iter().enumerate() {
                acc += l;
                if u < acc {
                    chosen = j;
                    break;
                }
            }
            // strictly increasing times within a process
            if events[chosen].last().is_none_or(|&last| t > last) {
                events[chosen].push(t);
            }
        }
    }
    events
}

/// Intensity of a single process as a function of time, with a local upper bound.
pub trait IntensityModel {
    fn intensity(&self, t: f64) -> f64;
    /// Upper bound of the clipped intensity on `[a, b]`.
    fn upper_bound(&self, a: f64, b: f64) -> f64;
}

/// Thinning for an inhomogeneous process without self-excitation.
pub fn simulate_conditional<M: IntensityModel + ?Sized>(
    model: &M,
    horizon: f64,
    rng: &mut StreamRng,
) -> Result<EventSequence> {
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let block_end = (t + BLOCK).min(horizon);
        let bound = model.upper_bound(t, block_end).max(0.0);
        if bound <= 0.0 {
            t = block_end;
            continue;
        }
        let step: f64 = Exp1.sample(rng);
        let cand = t + step / bound;
        if cand >= block_end {
            t = block_end;
            continue;
        }
        t = cand;
        let l = model.intensity(t).max(0.0);
        if l > bound * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "intensity {l} exceeds its bound {bound} at t={t}"
            )));
        }
        if rng.random::<f64>() * bound < l {
            out.push(t);
        }
    }
    EventSequence::new(out, horizon)
}

impl IntensityModel for Tabulated {
    fn intensity(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn upper_bound(&self, a: f64, b: f64) -> f64 {
        self.sup(a, b)
    }
}

pub const PRESETS: [&str; 6] = [
    "sinusoid",
    "linear_cox_basic",
    "full_connection",
    "varying_sigma",
    "fast_changing",
    "multivariate6",
];

fn pair(background: BackgroundSpec, baseline: f64, impacts: Vec<ImpactEdge>) -> NetworkSpec {
    NetworkSpec {
        process_ids: vec!["i".into(), "j".into()],
        baselines: vec![baseline; 2],
        backgrounds: vec![background.clone(), background],
        shared_background: true,
        impacts,
        horizon: 5.0,
        trial_count: 200,
        seed: 0,
    }
}

fn edge(source: &str, target: &str, width: f64, amplitude: f64) -> ImpactEdge {
    ImpactEdge {
        source: source.into(),
        target: target.into(),
        kernel: ImpactKernel::square(width, amplitude),
    }
}

/// Two processes with a shared sinusoidal background; the target lags by `phase_lag` periods.
pub fn sinusoid_preset(phase_lag: f64) -> NetworkSpec {
    let wave = |lag| BackgroundSpec::Sinusoid {
        amplitude: 5.0,
        period: 1.0,
        phase_lag: lag,
        randomize_phase: true,
    };
    let mut spec = pair(wave(0.0), 30.0, vec![edge("i", "j", 0.03, 2.0)]);
    spec.backgrounds[1] = wave(phase_lag);
    spec
}

/// Shared linear-Cox pair with `i → j` square impact.
pub fn linear_cox_pair(rho: f64, sigma_i: f64, sigma_h: f64, alpha_ij: f64) -> NetworkSpec {
    pair(
        BackgroundSpec::LinearCox { rho, sigma_i },
        10.0,
        vec![edge("i", "j", sigma_h, alpha_ij)],
    )
}

pub fn fast_changing_preset(sigma_i: f64) -> NetworkSpec {
    linear_cox_pair(30.0, sigma_i, 0.03, 2.0)
}

/// Six nodes on a shared background with positive, negative and absent edges.
pub fn multivariate6_preset() -> NetworkSpec {
    let ids: Vec<String> = (0..6).map(|k| format!("n{k}")).collect();
    let bg = BackgroundSpec::LinearCox {
        rho: 20.0,
        sigma_i: 0.1,
    };
    let signed = [
        ("n0", "n1", 2.0),
        ("n1", "n2", -2.0),
        ("n2", "n3", 2.0),
        ("n3", "n4", -2.0),
        ("n4", "n5", 2.0),
        ("n5", "n0", -2.0),
        ("n0", "n3", 2.0),
        ("n4", "n1", -2.0),
    ];
    NetworkSpec {
        baselines: vec![10.0; 6],
        backgrounds: vec![bg; 6],
        process_ids: ids,
        shared_background: true,
        impacts: signed.iter().map(|(s, t, a)| edge(s, t, 0.03, *a)).collect(),
        horizon: 5.0,
        trial_count: 200,
        seed: 0,
    }
}

pub fn scenario_preset(name: &str) -> Result<NetworkSpec> {
    Ok(match name {
        "sinusoid" => sinusoid_preset(0.0),
        "linear_cox_basic" => linear_cox_pair(30.0, 0.1, 0.03, 2.0),
        "full_connection" => {
            let mut s = linear_cox_pair(30.0, 0.1, 0.03, -2.0);
            s.impacts.push(edge("j", "i", 0.03, -2.0));
            s.impacts.push(edge("i", "i", 0.03, 1.0));
            s.impacts.push(edge("j", "j", 0.03, 1.0));
            s
        }
        "varying_sigma" => pair(
            BackgroundSpec::VaryingCox {
                rho: 30.0,
                sigma_i_range: [0.08, 0.14],
            },
            10.0,
            vec![edge("i", "j", 0.03, 2.0)],
        ),
        "fast_changing" => fast_changing_preset(0.02),
        "multivariate6" => multivariate6_preset(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    })
}
