//! Monte-Carlo studies: replications of simulate → fit → summarize, each replication on its
//! own seeded substream so results do not depend on the worker count.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ccg::{mc_null_inference, CcgConfig};
use crate::error::{Error, Result};
use crate::estimate::{
    fit_fixed_sigma, fit_modified_mle, fit_multivariate_pairwise, fit_standard_mhp, DesignSpec, ImpactBasis,
    PairNuisance, PairwiseOptions, SigmaW,
};
use crate::events::TrialSet;
use crate::inference::{roc_analysis, wald_test};
use crate::io::Table;
use crate::rng::{role, substream_seed};
use crate::simulate::{
    linear_cox_pair, normalized_dot, scenario_preset, sinusoid_preset, thinning_simulate, NetworkSpec,
};
use crate::stats::{ks_uniform, linear_regression, mean, rmse_about, sd, sem};
use crate::theory::{bias_approx, log_grid, theory_curves, CoxTheoryParams};

pub const EXPERIMENTS: [&str; 6] = [
    "sinusoid_bias",
    "sigma_w_sweep",
    "full_connection",
    "multivariate6",
    "pvalue_uniformity",
    "roc",
];

/// Square impact width used by every study.
pub const SIGMA_H: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub reps: usize,
    /// Overrides the scenario's trial count.
    pub trials: Option<usize>,
    pub seed: u64,
    pub jobs: usize,
    /// σ_w grid for likelihood selection; `None` uses the default grid.
    pub sigma_w_grid: Option<Vec<f64>>,
    pub n_mc: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            reps: 20,
            trials: None,
            seed: 0,
            jobs: 1,
            sigma_w_grid: None,
            n_mc: 1000,
        }
    }
}

impl ExperimentOptions {
    fn grid(&self) -> SigmaW {
        self.sigma_w_grid
            .clone()
            .map_or_else(SigmaW::default_grid, SigmaW::Grid)
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.trials == Some(0) {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    fn scenario(&self, mut spec: NetworkSpec, rep: usize) -> NetworkSpec {
        if let Some(n) = self.trials {
            spec.trial_count = n;
        }
        spec.seed = substream_seed(self.seed, rep as u64, role::REPLICATION);
        spec
    }
}

/// Runs `f(0..n)` on up to `jobs` threads; output is ordered by index.
pub fn run_replications<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= n {
                    break;
                }
                let r = f(k);
                slots.lock().unwrap()[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn summary_row(name: &str, xs: &[f64], truth: f64) -> [String; 6] {
    [
        name.to_string(),
        truth.to_string(),
        mean(xs).to_string(),
        sd(xs).to_string(),
        (mean(xs) - truth).to_string(),
        rmse_about(xs, truth).to_string(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub tables: Vec<(String, Table)>,
    pub summary: BTreeMap<String, f64>,
}

// ---------------------------------------------------------------- sinusoid

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidRow {
    pub phase_lag: f64,
    pub dot: f64,
    pub standard_bias: Vec<f64>,
    pub modified_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidStudy {
    pub rows: Vec<SinusoidRow>,
    /// Standard-model mean bias regressed on the normalized dot product.
    pub slope: f64,
    pub r_squared: f64,
}

pub const PHASE_LAGS: [f64; 5] = [0.0, 0.125, 0.25, 0.375, 0.5];

pub fn sinusoid_bias(opts: &ExperimentOptions) -> Result<SinusoidStudy> {
    opts.validate()?;
    let mut rows = Vec::new();
    for (li, &lag) in PHASE_LAGS.iter().enumerate() {
        let base = sinusoid_preset(lag);
        let truth = base.square_amplitude("i", "j");
        let amplitude = match &base.backgrounds[0] {
            crate::simulate::BackgroundSpec::Sinusoid { amplitude, .. } => *amplitude,
            _ => unreachable!(),
        };
        let reps = run_replications(opts.reps, opts.jobs, |r| {
            let spec = opts.scenario(base.clone(), li * 100_000 + r);
            let sim = thinning_simulate(&spec, true)?;
            let bgs = sim.realized_backgrounds.as_ref().unwrap();
            let mut dots = Vec::with_capacity(bgs.len());
            for b in bgs {
                let fi = b[0].tabulate(spec.horizon, 2000)?;
                let fj = b[1].tabulate(spec.horizon, 2000)?;
                dots.push(normalized_dot(&fi, &fj, amplitude, spec.horizon)?);
            }
            let std = fit_standard_mhp(&DesignSpec::standard("i", "j", SIGMA_H), &sim.trials)?;
            let m = fit_modified_mle(
                &DesignSpec::modified("i", "j", SIGMA_H).with_sigma_w(opts.grid()),
                &sim.trials,
            )?;
            Ok((mean(&dots), std.alpha().0 - truth, m.alpha().0 - truth))
        })?;
        rows.push(SinusoidRow {
            phase_lag: lag,
            dot: mean(&reps.iter().map(|r| r.0).collect::<Vec<_>>()),
            standard_bias: reps.iter().map(|r| r.1).collect(),
            modified_bias: reps.iter().map(|r| r.2).collect(),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.dot).collect();
    let y: Vec<f64> = rows.iter().map(|r| mean(&r.standard_bias)).collect();
    let fit = linear_regression(&x, &y)?;
    Ok(SinusoidStudy {
        rows,
        slope: fit.slope,
        r_squared: fit.r_squared,
    })
}

impl SinusoidStudy {
    pub fn report(&self) -> ExperimentReport {
        let mut t = Table::new([
            "phase_lag",
            "dot",
            "standard_bias_mean",
            "standard_bias_sd",
            "modified_bias_mean",
            "modified_bias_sd",
        ]);
        for r in &self.rows {
            t.push([
                r.phase_lag,
                r.dot,
                mean(&r.standard_bias),
                sd(&r.standard_bias),
                mean(&r.modified_bias),
                sd(&r.modified_bias),
            ]);
        }
        let worst = self
            .rows
            .iter()
            .map(|r| mean(&r.modified_bias).abs())
            .fold(0.0, f64::max);
        ExperimentReport {
            name: "sinusoid_bias".into(),
            tables: vec![("sinusoid_bias".into(), t)],
            summary: [
                ("slope".to_string(), self.slope),
                ("r_squared".to_string(), self.r_squared),
                ("modified_max_abs_bias".to_string(), worst),
            ]
            .into(),
        }
    }
}

// ---------------------------------------------------------------- σ_w sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma_w: f64,
    pub bias: Vec<f64>,
    pub theory_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaWSweep {
    pub points: Vec<SweepPoint>,
    pub selected_sigma_w: Vec<f64>,
    pub truth: f64,
}

/// Default sweep: 8 log-spaced widths between 10 and 500 ms.
pub fn sweep_grid() -> Vec<f64> {
    log_grid(0.01, 0.5, 8).expect("valid grid")
}

/// Bias of α̂ at fixed σ_w on linear-Cox data, plus the likelihood-selected σ_w per replication.
pub fn sigma_w_sweep(opts: &ExperimentOptions, widths: &[f64]) -> Result<SigmaWSweep> {
    opts.validate()?;
    let base = scenario_preset("linear_cox_basic")?;
    let truth = base.square_amplitude("i", "j");
    let theory = CoxTheoryParams::linear_cox_basic(base.horizon);
    let reps = run_replications(opts.reps, opts.jobs, |r| {
        let sim = thinning_simulate(&opts.scenario(base.clone(), r), false)?;
        let mut spec = DesignSpec::modified("i", "j", SIGMA_H).with_sigma_w(opts.grid());
        spec.refine_sigma_w = true;
        let sel = fit_modified_mle(&spec, &sim.trials)?;
        let mut init = Some(sel.params.clone());
        let mut biases = Vec::with_capacity(widths.len());
        for &w in widths {
            let f = fit_fixed_sigma(
                &spec.clone().with_sigma_w(SigmaW::Fixed(w)),
                &sim.trials,
                init.as_deref(),
            )?;
            biases.push(f.alpha().0 - truth);
            init = Some(f.params);
        }
        Ok((biases, sel.sigma_w_selected.unwrap()))
    })?;
    let points = widths
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            Ok(SweepPoint {
                sigma_w: w,
                bias: reps.iter().map(|r| r.0[k]).collect(),
                theory_bias: bias_approx(&theory, w)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SigmaWSweep {
        points,
        selected_sigma_w: reps.iter().map(|r| r.1).collect(),
        truth,
    })
}

impl SigmaWSweep {
    pub fn report(&self) -> Result<ExperimentReport> {
        let theory = CoxTheoryParams::linear_cox_basic(5.0);
        let grid: Vec<f64> = self.points.iter().map(|p| p.sigma_w).collect();
        let curves = theory_curves(&theory, &grid)?;
        let mut t = Table::new([
            "sigma_w_ms",
            "bias_mean",
            "bias_sd",
            "bias_mc_se",
            "theory_bias",
            "theory_se",
            "theory_rmse",
            "z",
        ]);
        for (p, c) in self.points.iter().zip(&curves) {
            let z = (mean(&p.bias) - p.theory_bias) / sem(&p.bias);
            t.push([
                p.sigma_w * 1e3,
                mean(&p.bias),
                sd(&p.bias),
                sem(&p.bias),
                p.theory_bias,
                c.se,
                c.rmse,
                z,
            ]);
        }
        let mut sel = Table::new(["replication", "sigma_w_ms"]);
        for (r, s) in self.selected_sigma_w.iter().enumerate() {
            sel.push([r as f64, s * 1e3]);
        }
        Ok(ExperimentReport {
            name: "sigma_w_sweep".into(),
            tables: vec![("sigma_w_sweep".into(), t), ("sigma_w_selected".into(), sel)],
            summary: [
                (
                    "selected_sigma_w_ms_mean".to_string(),
                    mean(&self.selected_sigma_w) * 1e3,
                ),
                ("max_abs_z".to_string(), self.max_abs_z()),
            ]
            .into(),
        })
    }

    /// Largest |empirical − theory| in Monte-Carlo standard errors.
    pub fn max_abs_z(&self) -> f64 {
        self.points
            .iter()
            .map(|p| ((mean(&p.bias) - p.theory_bias) / sem(&p.bias)).abs())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------- full connection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionEstimates {
    /// Keyed `"src->tgt"`.
    pub modified: BTreeMap<String, Vec<f64>>,
    pub standard: BTreeMap<String, Vec<f64>>,
    pub truth: BTreeMap<String, f64>,
}

impl ConnectionEstimates {
    fn cross_keys(&self) -> impl Iterator<Item = &String> {
        self.truth.keys().filter(|k| {
            let (a, b) = k.split_once("->").unwrap();
            a != b
        })
    }

    fn mae(&self, est: &BTreeMap<String, Vec<f64>>) -> f64 {
        let errs: Vec<f64> = self
            .cross_keys()
            .flat_map(|k| est[k].iter().map(move |a| (a - self.truth[k]).abs()))
            .collect();
        mean(&errs)
    }

    pub fn modified_cross_mae(&self) -> f64 {
        self.mae(&self.modified)
    }

    pub fn standard_cross_mae(&self) -> f64 {
        self.mae(&self.standard)
    }

    pub fn report(&self) -> ExperimentReport {
        let mut t = Table::new(["edge", "method", "truth", "mean", "sd", "bias", "rmse", "mae"]);
        for (method, est) in [("modified", &self.modified), ("standard", &self.standard)] {
            for (k, xs) in est {
                let truth = self.truth[k];
                let row = summary_row(k, xs, truth);
                let mae = mean(&xs.iter().map(|a| (a - truth).abs()).collect::<Vec<_>>());
                t.push([
                    row[0].clone(),
                    method.into(),
                    row[1].clone(),
                    row[2].clone(),
                    row[3].clone(),
                    row[4].clone(),
                    row[5].clone(),
                    mae.to_string(),
                ]);
            }
        }
        ExperimentReport {
            name: "full_connection".into(),
            tables: vec![("full_connection".into(), t)],
            summary: [
                ("modified_cross_mae".to_string(), self.modified_cross_mae()),
                ("standard_cross_mae".to_string(), self.standard_cross_mae()),
            ]
            .into(),
        }
    }
}

/// Target gets cross and self impacts; the modified fit adds the other unit's smoothed train.
fn connection_spec(source: &str, target: &str, sigma_w: SigmaW, nuisance: bool) -> DesignSpec {
    let mut spec = DesignSpec::modified(source, target, SIGMA_H)
        .with_impact(target, ImpactBasis::Square { width: SIGMA_H })
        .with_sigma_w(sigma_w);
    if !nuisance {
        spec.nuisance_sources.clear();
    }
    spec
}

pub fn full_connection(opts: &ExperimentOptions) -> Result<ConnectionEstimates> {
    opts.validate()?;
    let base = scenario_preset("full_connection")?;
    let pairs = [("i", "j"), ("j", "i")];
    let reps = run_replications(opts.reps, opts.jobs, |r| {
        let sim = thinning_simulate(&opts.scenario(base.clone(), r), false)?;
        let mut out = Vec::new();
        for (s, t) in pairs {
            let m = fit_modified_mle(&connection_spec(s, t, opts.grid(), true), &sim.trials)?;
            let st = fit_standard_mhp(&connection_spec(s, t, opts.grid(), false), &sim.trials)?;
            for src in [s, t] {
                let name = format!("alpha[{src}]");
                let k = format!("{src}->{t}");
                let get = |f: &crate::estimate::FitResult| {
                    f.coefficient(&name)
                        .map(|c| c.0)
                        .ok_or_else(|| Error::Fit(format!("missing {name}")))
                };
                out.push((k, get(&m)?, get(&st)?));
            }
        }
        Ok(out)
    })?;
    let mut est = ConnectionEstimates {
        modified: BTreeMap::new(),
        standard: BTreeMap::new(),
        truth: BTreeMap::new(),
    };
    for rep in reps {
        for (k, a, b) in rep {
            let (s, t) = k.split_once("->").unwrap();
            est.truth.insert(k.clone(), base.square_amplitude(s, t));
            est.modified.entry(k.clone()).or_default().push(a);
            est.standard.entry(k).or_default().push(b);
        }
    }
    Ok(est)
}

// ---------------------------------------------------------------- multivariate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateStudy {
    /// Per ordered pair: truth and per-replication estimates.
    pub truth: BTreeMap<String, f64>,
    pub modified: BTreeMap<String, Vec<f64>>,
    pub standard: BTreeMap<String, Vec<f64>>,
    pub failed_fits: usize,
}

impl MultivariateStudy {
    fn errors(&self, est: &BTreeMap<String, Vec<f64>>) -> Vec<f64> {
        est.iter()
            .flat_map(|(k, xs)| xs.iter().map(move |a| a - self.truth[k]))
            .collect()
    }

    pub fn standard_mean_bias(&self) -> f64 {
        mean(&self.errors(&self.standard))
    }

    pub fn modified_mean_bias(&self) -> f64 {
        mean(&self.errors(&self.modified))
    }

    pub fn modified_rmse(&self) -> f64 {
        rmse_about(&self.errors(&self.modified), 0.0)
    }

    pub fn standard_rmse(&self) -> f64 {
        rmse_about(&self.errors(&self.standard), 0.0)
    }

    pub fn report(&self) -> ExperimentReport {
        let mut t = Table::new([
            "pair",
            "truth",
            "ours_mean",
            "ours_bias",
            "ours_rmse",
            "standard_mean",
            "standard_bias",
            "standard_rmse",
        ]);
        for (k, truth) in &self.truth {
            let (m, s) = (&self.modified[k], &self.standard[k]);
            t.push([
                k.clone(),
                truth.to_string(),
                mean(m).to_string(),
                (mean(m) - truth).to_string(),
                rmse_about(m, *truth).to_string(),
                mean(s).to_string(),
                (mean(s) - truth).to_string(),
                rmse_about(s, *truth).to_string(),
            ]);
        }
        ExperimentReport {
            name: "multivariate6".into(),
            tables: vec![("multivariate6".into(), t)],
            summary: [
                ("modified_mean_bias".to_string(), self.modified_mean_bias()),
                ("modified_rmse".to_string(), self.modified_rmse()),
                ("standard_mean_bias".to_string(), self.standard_mean_bias()),
                ("standard_rmse".to_string(), self.standard_rmse()),
                ("failed_fits".to_string(), self.failed_fits as f64),
            ]
            .into(),
        }
    }
}

/// Pairwise bivariate fits on the six-node network, both models.
pub fn multivariate6(opts: &ExperimentOptions) -> Result<MultivariateStudy> {
    opts.validate()?;
    let base = scenario_preset("multivariate6")?;
    let basis = ImpactBasis::Square { width: SIGMA_H };
    let reps = run_replications(opts.reps, opts.jobs, |r| {
        let sim = thinning_simulate(&opts.scenario(base.clone(), r), false)?;
        let modified = fit_multivariate_pairwise(
            &sim.trials,
            &PairwiseOptions {
                basis: basis.clone(),
                sigma_w: opts.grid(),
                nuisance: PairNuisance::Source,
            },
        )?;
        let standard = fit_multivariate_pairwise(
            &sim.trials,
            &PairwiseOptions {
                basis: basis.clone(),
                sigma_w: SigmaW::Fixed(1.0),
                nuisance: PairNuisance::None,
            },
        )?;
        Ok((modified, standard))
    })?;
    let mut study = MultivariateStudy {
        truth: BTreeMap::new(),
        modified: BTreeMap::new(),
        standard: BTreeMap::new(),
        failed_fits: 0,
    };
    for (m, s) in reps {
        for (fits, slot) in [(m, &mut study.modified), (s, &mut study.standard)] {
            for ((src, tgt), fit) in fits {
                let k = format!("{src}->{tgt}");
                study.truth.insert(k.clone(), base.square_amplitude(&src, &tgt));
                match fit {
                    Ok(f) => slot.entry(k).or_default().push(f.alpha().0),
                    Err(e) => {
                        log::warn!("pair {k} failed: {e}");
                        study.failed_fits += 1;
                    }
                }
            }
        }
    }
    Ok(study)
}

// ---------------------------------------------------------------- hypothesis tests

/// Small pair datasets for testing (10 trials × 5 s).
pub fn testing_scenario(alpha: f64) -> NetworkSpec {
    let mut spec = linear_cox_pair(30.0, 0.1, SIGMA_H, alpha);
    spec.trial_count = 10;
    spec
}

/// σ_w held at the theory optimum for the testing scenario.
pub const TESTING_SIGMA_W: f64 = 0.125;

/// Jitter settings for the CCG test: 2 ms bins, 100 ms windows.
pub fn testing_ccg_config(n_mc: usize) -> CcgConfig {
    CcgConfig {
        bin_width: 0.002,
        max_lag: 0.05,
        jitter_window: 0.1,
        n_mc,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValues {
    pub modified: f64,
    pub standard: f64,
    pub ccg: f64,
}

fn dataset_p_values(data: &TrialSet, n_mc: usize, seed: u64) -> Result<PValues> {
    let m = fit_fixed_sigma(
        &DesignSpec::modified("i", "j", SIGMA_H).with_sigma_w(SigmaW::Fixed(TESTING_SIGMA_W)),
        data,
        None,
    )?;
    let s = fit_standard_mhp(&DesignSpec::standard("i", "j", SIGMA_H), data)?;
    let ccg = mc_null_inference(
        data.process("i").unwrap(),
        data.process("j").unwrap(),
        &testing_ccg_config(n_mc),
        seed,
    )?;
    Ok(PValues {
        modified: wald_test(&m, m.impact_offset)?.p_value,
        standard: wald_test(&s, s.impact_offset)?.p_value,
        ccg: ccg.max_stat_p_value(0.0, SIGMA_H)?,
    })
}

pub fn p_values_for(alpha: f64, opts: &ExperimentOptions, stream: u64) -> Result<Vec<PValues>> {
    opts.validate()?;
    let base = testing_scenario(alpha);
    run_replications(opts.reps, opts.jobs, |r| {
        let spec = opts.scenario(base.clone(), stream as usize * 1_000_000 + r);
        let sim = thinning_simulate(&spec, false)?;
        dataset_p_values(&sim.trials, opts.n_mc, spec.seed)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub p_values: Vec<PValues>,
    pub ks_p_modified: f64,
    pub ks_p_standard: f64,
    pub ks_p_ccg: f64,
}

pub fn pvalue_uniformity(opts: &ExperimentOptions) -> Result<Uniformity> {
    let p = p_values_for(0.0, opts, 0)?;
    let col = |f: fn(&PValues) -> f64| p.iter().map(f).collect::<Vec<_>>();
    Ok(Uniformity {
        ks_p_modified: ks_uniform(&col(|v| v.modified))?.p_value,
        ks_p_standard: ks_uniform(&col(|v| v.standard))?.p_value,
        ks_p_ccg: ks_uniform(&col(|v| v.ccg))?.p_value,
        p_values: p,
    })
}

impl Uniformity {
    pub fn report(&self) -> ExperimentReport {
        let mut t = Table::new(["replication", "p_modified", "p_standard", "p_ccg"]);
        for (r, p) in self.p_values.iter().enumerate() {
            t.push([r as f64, p.modified, p.standard, p.ccg]);
        }
        ExperimentReport {
            name: "pvalue_uniformity".into(),
            tables: vec![("pvalue_uniformity".into(), t)],
            summary: [
                ("ks_p_modified".to_string(), self.ks_p_modified),
                ("ks_p_standard".to_string(), self.ks_p_standard),
                ("ks_p_ccg".to_string(), self.ks_p_ccg),
            ]
            .into(),
        }
    }
}

pub const ROC_ALPHAS: [f64; 3] = [2.0, -2.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocStudy {
    /// `(alpha, auc_modified, auc_ccg)`.
    pub rows: Vec<(f64, f64, f64)>,
}

pub fn roc(opts: &ExperimentOptions) -> Result<RocStudy> {
    let null = p_values_for(0.0, opts, 0)?;
    let mut rows = Vec::new();
    for (k, &a) in ROC_ALPHAS.iter().enumerate() {
        let alt = p_values_for(a, opts, k as u64 + 1)?;
        let pick = |v: &[PValues], f: fn(&PValues) -> f64| v.iter().map(f).collect::<Vec<_>>();
        let m = roc_analysis(&pick(&null, |p| p.modified), &pick(&alt, |p| p.modified))?;
        let c = roc_analysis(&pick(&null, |p| p.ccg), &pick(&alt, |p| p.ccg))?;
        rows.push((a, m.auc, c.auc));
    }
    Ok(RocStudy { rows })
}

impl RocStudy {
    pub fn report(&self) -> ExperimentReport {
        let mut t = Table::new(["alpha", "auc_modified", "auc_ccg"]);
        let mut summary = BTreeMap::new();
        for &(a, m, c) in &self.rows {
            t.push([a, m, c]);
            summary.insert(format!("auc_modified[{a}]"), m);
            summary.insert(format!("auc_ccg[{a}]"), c);
        }
        ExperimentReport {
            name: "roc".into(),
            tables: vec![("roc".into(), t)],
            summary,
        }
    }
}

/// Name-dispatched entry point used by the command line.
pub fn run_experiment(name: &str, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    match name {
        "sinusoid_bias" => Ok(sinusoid_bias(opts)?.report()),
        "sigma_w_sweep" => sigma_w_sweep(opts, &sweep_grid())?.report(),
        "full_connection" => Ok(full_connection(opts)?.report()),
        "multivariate6" => Ok(multivariate6(opts)?.report()),
        "pvalue_uniformity" => Ok(pvalue_uniformity(opts)?.report()),
        "roc" => Ok(roc(opts)?.report()),
        other => Err(Error::Config(format!(
            "unknown experiment {other}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replications_are_ordered_and_job_independent() {
        let f = |k: usize| Ok(k * k);
        assert_eq!(run_replications(10, 1, f).unwrap(), run_replications(10, 4, f).unwrap());
        assert_eq!(run_replications(3, 8, f).unwrap(), vec![0, 1, 4]);
        let bad = run_replications(5, 2, |k| if k == 3 { Err(Error::Fit("x".into())) } else { Ok(k) });
        assert!(bad.is_err());
    }

    #[test]
    fn tiny_full_connection_runs() {
        let opts = ExperimentOptions {
            reps: 2,
            trials: Some(5),
            sigma_w_grid: Some(vec![0.05, 0.1, 0.2]),
            ..Default::default()
        };
        let est = full_connection(&opts).unwrap();
        assert_eq!(est.truth.len(), 4);
        assert_eq!(est.truth["i->j"], -2.0);
        assert!(est.modified.values().all(|v| v.len() == 2));
        let rep = est.report();
        assert_eq!(rep.tables[0].1.rows.len(), 8);
    }

    #[test]
    fn unknown_experiment_is_config_error() {
        assert!(matches!(
            run_experiment("nope", &ExperimentOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tiny_uniformity_is_deterministic() {
        let opts = ExperimentOptions {
            reps: 3,
            n_mc: 50,
            ..Default::default()
        };
        let a = pvalue_uniformity(&opts).unwrap();
        let b = pvalue_uniformity(&ExperimentOptions { jobs: 3, ..opts }).unwrap();
        assert_eq!(a, b);
        assert!(a.p_values.iter().all(|p| p.ccg > 0.0 && p.ccg <= 1.0));
    }
}
