//! Jitter-based cross-correlogram with Monte-Carlo conditional inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::events::EventSequence;
use crate::rng::{role, substream, StreamRng};
use crate::stats::{mean, quantile_sorted, sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JitterTarget {
    #[default]
    Source,
    Target,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcgConfig {
    pub bin_width: f64,
    pub max_lag: f64,
    pub jitter_window: f64,
    pub n_mc: usize,
    pub jitter_target: JitterTarget,
    pub confidence: f64,
}

impl Default for CcgConfig {
    fn default() -> Self {
        Self {
            bin_width: 0.002,
            max_lag: 0.1,
            jitter_window: 0.12,
            n_mc: 1000,
            jitter_target: JitterTarget::Source,
            confidence: 0.95,
        }
    }
}

impl CcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.max_lag >= 0.0 && self.jitter_window > 0.0) {
            return domain("bin width, max lag and jitter window must be positive");
        }
        if self.bin_width > self.jitter_window {
            return domain("bin width must not exceed the jitter window");
        }
        if self.n_mc == 0 {
            return domain("need at least one Monte-Carlo sample");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return domain("confidence must lie in (0, 1)");
        }
        if self.n_mc < 19 {
            log::warn!("n_mc = {} is too small for a meaningful acceptance band", self.n_mc);
        }
        Ok(())
    }

    pub fn half_width(&self) -> usize {
        (self.max_lag / self.bin_width).round() as usize
    }

    pub fn lags(&self) -> Vec<f64> {
        let l = self.half_width() as i64;
        (-l..=l).map(|k| k as f64 * self.bin_width).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcgResult {
    pub lags: Vec<f64>,
    pub ccg: Vec<f64>,
    pub null_mean: Vec<f64>,
    pub pointwise_band: (Vec<f64>, Vec<f64>),
    pub simultaneous_band: (Vec<f64>, Vec<f64>),
    /// Per-lag add-one p-values on the tail the observation falls in.
    pub p_values: Vec<f64>,
    #[serde(skip)]
    null_samples: Vec<Vec<f64>>,
    #[serde(skip)]
    null_sd: Vec<f64>,
}

impl CcgResult {
    /// Observed CCG minus the null mean.
    pub fn centered(&self) -> Vec<f64> {
        self.ccg.iter().zip(&self.null_mean).map(|(c, m)| c - m).collect()
    }

    /// Multi-lag p-value over `[lo, hi]` (seconds) from the max standardized deviation.
    pub fn max_stat_p_value(&self, lo: f64, hi: f64) -> Result<f64> {
        let idx: Vec<usize> = (0..self.lags.len())
            .filter(|&k| self.lags[k] >= lo - 1e-12 && self.lags[k] <= hi + 1e-12)
            .collect();
        if idx.is_empty() {
            return domain("lag range selects no bins");
        }
        let stat = |v: &[f64]| {
            idx.iter()
                .map(|&k| {
                    let s = if self.null_sd[k] > 0.0 { self.null_sd[k] } else { 1.0 };
                    (v[k] - self.null_mean[k]).abs() / s
                })
                .fold(0.0_f64, f64::max)
        };
        let observed = stat(&self.ccg);
        let exceed = self.null_samples.iter().filter(|s| stat(s) >= observed).count();
        Ok((exceed as f64 + 1.0) / (self.null_samples.len() as f64 + 1.0))
    }
}

fn bin_index(t: f64, bin: f64) -> i64 {
    (t / bin).floor() as i64
}

/// Raw CCG: `Σ_n X_i(n - τ) X_j(n)` summed over trials, τ in bins from `-L` to `L`.
pub fn compute_ccg(source: &[EventSequence], target: &[EventSequence], cfg: &CcgConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if source.len() != target.len() {
        return domain("source and target need the same number of trials");
    }
    let l = cfg.half_width() as i64;
    let mut out = vec![0.0; (2 * l + 1) as usize];
    let mut crowded = false;
    for (s, t) in source.iter().zip(target) {
        let sb: Vec<i64> = s.times().iter().map(|&x| bin_index(x, cfg.bin_width)).collect();
        let tb: Vec<i64> = t.times().iter().map(|&x| bin_index(x, cfg.bin_width)).collect();
        crowded |= sb.windows(2).any(|w| w[0] == w[1]) || tb.windows(2).any(|w| w[0] == w[1]);
        let mut lo = 0;
        for &b in &tb {
            while lo < sb.len() && sb[lo] < b - l {
                lo += 1;
            }
            for &a in sb[lo..].iter().take_while(|&&a| a <= b + l) {
                out[(b - a + l) as usize] += 1.0;
            }
        }
    }
    if crowded {
        log::warn!("some bins hold more than one event; consider a smaller bin width");
    }
    if source.iter().chain(target).all(EventSequence::is_empty) {
        log::warn!("CCG of empty data");
    }
    Ok(out)
}

/// Redraws each event uniformly inside its fixed jitter window `[kΔ, (k+1)Δ) ∩ [0, T]`.
pub fn jitter_resample(events: &EventSequence, window: f64, rng: &mut StreamRng) -> Result<EventSequence> {
    if !(window > 0.0) {
        return domain("jitter window must be positive");
    }
    let horizon = events.horizon();
    let times: Vec<f64> = events
        .times()
        .iter()
        .map(|&t| {
            let k = (t / window).floor();
            let lo = k * window;
            let hi = ((k + 1.0) * window).min(horizon);
            lo + rng.random::<f64>() * (hi - lo)
        })
        .collect();
    EventSequence::from_unsorted(times, horizon)
}

fn jitter_all(seqs: &[EventSequence], window: f64, rng: &mut StreamRng) -> Result<Vec<EventSequence>> {
    seqs.iter().map(|s| jitter_resample(s, window, rng)).collect()
}

/// Observed CCG against `n_mc` jittered surrogates.
pub fn mc_null_inference(
    source: &[EventSequence],
    target: &[EventSequence],
    cfg: &CcgConfig,
    seed: u64,
) -> Result<CcgResult> {
    let observed = compute_ccg(source, target, cfg)?;
    let m = observed.len();
    let mut samples = Vec::with_capacity(cfg.n_mc);
    for r in 0..cfg.n_mc {
        let mut rng = substream(seed, r as u64, role::JITTER);
        let (s, t) = match cfg.jitter_target {
            JitterTarget::Source => (jitter_all(source, cfg.jitter_window, &mut rng)?, target.to_vec()),
            JitterTarget::Target => (source.to_vec(), jitter_all(target, cfg.jitter_window, &mut rng)?),
            JitterTarget::Both => (
                jitter_all(source, cfg.jitter_window, &mut rng)?,
                jitter_all(target, cfg.jitter_window, &mut rng)?,
            ),
        };
        samples.push(compute_ccg(&s, &t, cfg)?);
    }

    let (a_lo, a_hi) = (0.5 * (1.0 - cfg.confidence), 0.5 * (1.0 + cfg.confidence));
    let mut null_mean = vec![0.0; m];
    let mut null_sd = vec![0.0; m];
    let mut pw_lo = vec![0.0; m];
    let mut pw_hi = vec![0.0; m];
    let mut p_values = vec![0.0; m];
    for k in 0..m {
        let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        null_mean[k] = mean(&col);
        null_sd[k] = if col.len() > 1 { sd(&col) } else { 0.0 };
        let above = col.iter().filter(|&&v| v >= observed[k]).count();
        let below = col.iter().filter(|&&v| v <= observed[k]).count();
        let n_tail = if observed[k] >= null_mean[k] { above } else { below };
        p_values[k] = (n_tail as f64 + 1.0) / (cfg.n_mc as f64 + 1.0);
        col.sort_by(f64::total_cmp);
        pw_lo[k] = quantile_sorted(&col, a_lo);
        pw_hi[k] = quantile_sorted(&col, a_hi);
    }

    // simultaneous band from the distribution of the max standardized deviation
    let mut devs: Vec<f64> = samples
        .iter()
        .map(|s| {
            (0..m)
                .filter(|&k| null_sd[k] > 0.0)
                .map(|k| (s[k] - null_mean[k]).abs() / null_sd[k])
                .fold(0.0_f64, f64::max)
        })
        .collect();
    devs.sort_by(f64::total_cmp);
    let q = quantile_sorted(&devs, cfg.confidence);
    let sim_lo = (0..m).map(|k| null_mean[k] - q * null_sd[k]).collect();
    let sim_hi = (0..m).map(|k| null_mean[k] + q * null_sd[k]).collect();

    Ok(CcgResult {
        lags: cfg.lags(),
        ccg: observed,
        null_mean,
        pointwise_band: (pw_lo, pw_hi),
        simultaneous_band: (sim_lo, sim_hi),
        p_values,
        null_samples: samples,
        null_sd,
    })
}

/// Add-one Monte-Carlo p-value.
pub fn add_one_p_value(exceedances: usize, n_mc: usize) -> f64 {
    (exceedances as f64 + 1.0) / (n_mc as f64 + 1.0)
}
