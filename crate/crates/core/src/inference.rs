//! Decisions on top of fits: Wald tests, ROC, time-rescaling goodness of fit,
//! Bonferroni network extraction and a random-walk Metropolis sampler.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{fit_fixed_sigma, fit_modified_mle, DesignSpec, FitResult, PairFits, PreparedDesign, SigmaW};
use crate::events::TrialSet;
use crate::rng::{role, substream};
use crate::stats::{ks_uniform, two_sided_normal_p};

pub const REPORT_LEVELS: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Wald,
    CcgMc,
    KsRescaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_at: BTreeMap<String, bool>,
    pub method: TestMethod,
}

impl TestOutcome {
    pub fn new(statistic: f64, p_value: f64, method: TestMethod) -> Self {
        let reject_at = REPORT_LEVELS.iter().map(|l| (format!("{l}"), p_value <= *l)).collect();
        Self {
            statistic,
            p_value,
            reject_at,
            method,
        }
    }
}

/// `z = coef / SE` with a two-sided normal p-value.
pub fn wald_test(fit: &FitResult, coeff_index: usize) -> Result<TestOutcome> {
    if !fit.converged {
        return Err(Error::Fit("Wald test needs a converged fit".into()));
    }
    let (Some(&est), Some(&se)) = (fit.params.get(coeff_index), fit.std_errors.get(coeff_index)) else {
        return domain(format!("coefficient index {coeff_index} out of range"));
    };
    if !(se > 0.0) {
        return domain("standard error must be positive");
    }
    let z = est / se;
    Ok(TestOutcome::new(z, two_sided_normal_p(z), TestMethod::Wald))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// Empirical ROC where a smaller p-value is a stronger positive call.
pub fn roc_analysis(p_null: &[f64], p_alt: &[f64]) -> Result<Roc> {
    if p_null.is_empty() || p_alt.is_empty() {
        return domain("ROC needs non-empty null and alternative scores");
    }
    let mut thresholds: Vec<f64> = p_null.iter().chain(p_alt).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let rate = |ps: &[f64], thr: f64| ps.iter().filter(|&&p| p <= thr).count() as f64 / ps.len() as f64;
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    for thr in thresholds {
        fpr.push(rate(p_null, thr));
        tpr.push(rate(p_alt, thr));
    }
    // ties between classes become diagonal segments, i.e. averaged
    let auc = (1..fpr.len())
        .map(|k| (fpr[k] - fpr[k - 1]) * 0.5 * (tpr[k] + tpr[k - 1]))
        .sum();
    Ok(Roc { fpr, tpr, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub empirical: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub outcome: TestOutcome,
    pub n_intervals: usize,
    pub qq: Vec<QqPoint>,
}

/// Rescaled inter-event intervals `∫ λ̂` of the fitted target, first partial interval dropped per trial.
pub fn rescaled_intervals(spec: &DesignSpec, fit: &FitResult, data: &TrialSet) -> Result<Vec<f64>> {
    let prepared = PreparedDesign::new(spec, data, fit.sigma_w_selected)?;
    let target = data
        .process(&spec.target)
        .ok_or_else(|| Error::Domain(format!("unknown target {}", spec.target)))?;
    let mut z = Vec::new();
    for (k, seq) in target.iter().enumerate() {
        let model = prepared.trial_model(k, &fit.params)?;
        let cum: Vec<f64> = seq.times().iter().map(|&t| model.cumulative(t)).collect();
        for (n, w) in cum.windows(2).enumerate() {
            let dz = w[1] - w[0];
            if !(dz > 0.0) {
                return domain(format!(
                    "non-positive integrated intensity {dz} on trial {k} between events {n} and {}",
                    n + 1
                ));
            }
            z.push(dz);
        }
    }
    if z.is_empty() {
        return domain("no complete inter-event intervals");
    }
    Ok(z)
}

/// Time-rescaling KS test with a QQ table and 99% bands.
pub fn ks_rescaling_test(spec: &DesignSpec, fit: &FitResult, data: &TrialSet) -> Result<GofResult> {
    let z = rescaled_intervals(spec, fit, data)?;
    let mut u: Vec<f64> = z.iter().map(|&x| -(-x).exp_m1()).collect();
    let ks = ks_uniform(&u)?;
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let band = 1.627_6 / n.sqrt();
    let qq = u
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let th = (k as f64 + 0.5) / n;
            QqPoint {
                theoretical: th,
                empirical: e,
                lo: (th - band).max(0.0),
                hi: (th + band).min(1.0),
            }
        })
        .collect();
    Ok(GofResult {
        outcome: TestOutcome::new(ks.statistic, ks.p_value, TestMethod::KsRescaling),
        n_intervals: u.len(),
        qq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correction {
    None { level: f64 },
    Bonferroni { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub alpha_hat: f64,
    pub se: f64,
    pub p: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeDegree {
    pub out_positive: usize,
    pub out_negative: usize,
    pub in_positive: usize,
    pub in_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdges {
    pub edges: Vec<Edge>,
    pub correction: Correction,
    pub threshold: f64,
    pub tested: usize,
    pub failed: Vec<(String, String)>,
    pub degrees: BTreeMap<String, NodeDegree>,
}

/// Keeps edges whose Wald p-value beats the (optionally Bonferroni-corrected) level.
pub fn extract_network(fits: &PairFits, correction: Correction) -> Result<NetworkEdges> {
    let (level, divisor) = match correction {
        Correction::None { level } => (level, 1.0),
        Correction::Bonferroni { level } => (level, fits.len().max(1) as f64),
    };
    if !(level > 0.0 && level < 1.0) {
        return domain("level must lie in (0, 1)");
    }
    let threshold = level / divisor;
    let mut edges = Vec::new();
    let mut failed = Vec::new();
    let mut degrees: BTreeMap<String, NodeDegree> = BTreeMap::new();
    for ((s, t), fit) in fits {
        degrees.entry(s.clone()).or_default();
        degrees.entry(t.clone()).or_default();
        let test = fit
            .as_ref()
            .ok()
            .and_then(|f| wald_test(f, f.impact_offset).ok().map(|w| (f, w)));
        let Some((f, w)) = test else {
            failed.push((s.clone(), t.clone()));
            continue;
        };
        if w.p_value <= threshold {
            let (a, se) = f.alpha();
            let sign = if a > 0.0 { 1 } else { -1 };
            if sign > 0 {
                degrees.get_mut(s).unwrap().out_positive += 1;
                degrees.get_mut(t).unwrap().in_positive += 1;
            } else {
                degrees.get_mut(s).unwrap().out_negative += 1;
                degrees.get_mut(t).unwrap().in_negative += 1;
            }
            edges.push(Edge {
                source: s.clone(),
                target: t.clone(),
                alpha_hat: a,
                se,
                p: w.p_value,
                sign,
            });
        }
    }
    Ok(NetworkEdges {
        edges,
        correction,
        threshold,
        tested: fits.len(),
        failed,
        degrees,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McmcVariant {
    /// σ_w sampled along with the coefficients.
    SigmaWRandom,
    /// σ_w held at the maximum-likelihood value.
    SigmaWFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhOptions {
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Per-coefficient random-walk scales; defaults to 0.3 × MLE standard errors.
    pub coef_scales: Option<Vec<f64>>,
    pub sigma_w_scale: f64,
    /// Starting point; defaults to the maximum-likelihood fit.
    pub init: Option<(Vec<f64>, f64)>,
    pub seed: u64,
}

impl Default for MhOptions {
    fn default() -> Self {
        Self {
            draws: 1000,
            burn_in: 200,
            thin: 1,
            coef_scales: None,
            sigma_w_scale: 0.01,
            init: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub names: Vec<String>,
    /// `draws × parameters`; σ_w is the last column for the random variant.
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub model_variant: McmcVariant,
}

impl McmcChain {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }
}

/// Random-walk Metropolis with flat priors on the coefficients (and σ_w > 0).
pub fn mh_sample(spec: &DesignSpec, data: &TrialSet, variant: McmcVariant, opts: &MhOptions) -> Result<McmcChain> {
    if opts.draws < 100 {
        return domain("chain length must be at least 100");
    }
    if opts.thin == 0 {
        return domain("thinning interval must be at least 1");
    }
    if !spec.has_nuisance() {
        return domain("the sampler targets the model with a smoothing width");
    }
    let (init, sigma0, default_scales) = match &opts.init {
        Some((b, s)) => (b.clone(), *s, None),
        None => {
            let fit = match &spec.sigma_w {
                SigmaW::Grid(_) => fit_modified_mle(spec, data)?,
                SigmaW::Fixed(_) => fit_fixed_sigma(spec, data, None)?,
            };
            let scales: Vec<f64> = fit.std_errors.iter().map(|s| 0.3 * s).collect();
            (fit.params.clone(), fit.sigma_w_selected.unwrap(), Some(scales))
        }
    };
    let scales = opts
        .coef_scales
        .clone()
        .or(default_scales)
        .ok_or_else(|| Error::Domain("proposal scales required with a custom start".into()))?;
    if scales.len() != init.len() || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return domain("proposal scales must be positive, one per coefficient");
    }
    let random_sigma = variant == McmcVariant::SigmaWRandom;
    if random_sigma && !(opts.sigma_w_scale > 0.0) {
        return domain("sigma_w proposal scale must be positive");
    }

    let mut prepared = PreparedDesign::new(spec, data, Some(sigma0))?;
    let mut names = spec.coefficient_names()?;
    if random_sigma {
        names.push("sigma_w".into());
    }
    let mut rng = substream(opts.seed, 0, role::MCMC);
    let mut beta = init;
    let mut sigma = sigma0;
    let mut logp = -prepared.design().neg_loglik(&beta);
    if !logp.is_finite() {
        return domain("starting point has zero posterior density");
    }
    let total = opts.burn_in + opts.draws * opts.thin;
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(opts.draws);
    for step in 0..total {
        let prop: Vec<f64> = beta
            .iter()
            .zip(&scales)
            .map(|(b, s)| {
                b + s * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
            })
            .collect();
        let prop_sigma = if random_sigma {
            sigma
                + opts.sigma_w_scale * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
        } else {
            sigma
        };
        let u: f64 = rng.random();
        if prop_sigma > 0.0 {
            if prop_sigma != sigma {
                prepared.set_sigma_w(prop_sigma)?;
            }
            let lp = -prepared.design().neg_loglik(&prop);
            if lp.is_finite() && u.ln() < lp - logp {
                beta = prop;
                sigma = prop_sigma;
                logp = lp;
                accepted += 1;
            }
        }
        if step >= opts.burn_in && (step - opts.burn_in) % opts.thin == opts.thin - 1 {
            let mut row = beta.clone();
            if random_sigma {
                row.push(sigma);
            }
            samples.push(row);
        }
    }
    Ok(McmcChain {
        names,
        samples,
        acceptance_rate: accepted as f64 / total as f64,
        model_variant: variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventSequence;

    fn fake_fit(est: f64, se: f64) -> FitResult {
        FitResult {
            target: "j".into(),
            coef_names: vec!["beta_j".into(), "alpha[i]".into()],
            params: vec![10.0, est],
            beta_j: 10.0,
            beta_w: None,
            sigma_w_selected: None,
            impact_coeffs: vec![est],
            impact_offset: 1,
            hessian: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            covariance: vec![vec![1.0, 0.0], vec![0.0, se * se]],
            neg_loglik: 0.0,
            std_errors: vec![1.0, se],
            converged: true,
            iterations: 3,
            gradient_norm: 0.0,
            profile: vec![],
        }
    }

    #[test]
    fn wald_examples() {
        assert_eq!(wald_test(&fake_fit(0.0, 0.5), 1).unwrap().p_value, 1.0);
        let w = wald_test(&fake_fit(1.959_963_985 * 0.5, 0.5), 1).unwrap();
        assert!((w.p_value - 0.05).abs() < 1e-9);
        assert!(w.reject_at["0.05"] && !w.reject_at["0.01"]);
        let mut bad = fake_fit(1.0, 0.5);
        bad.converged = false;
        assert!(wald_test(&bad, 1).is_err());
    }

    #[test]
    fn roc_examples() {
        let null: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        let same = roc_analysis(&null, &null).unwrap();
        assert!((same.auc - 0.5).abs() < 1e-12);
        let alt: Vec<f64> = null.iter().map(|p| p * 1e-3).collect();
        assert_eq!(roc_analysis(&null, &alt).unwrap().auc, 1.0);
        let r = roc_analysis(&null, &alt).unwrap();
        assert!(r.fpr.windows(2).all(|w| w[1] >= w[0]) && r.tpr.windows(2).all(|w| w[1] >= w[0]));
        assert!(roc_analysis(&[], &alt).is_err());
    }

    #[test]
    fn two_node_network_matches_wald() {
        let mut fits: PairFits = BTreeMap::new();
        fits.insert(("a".into(), "b".into()), Ok(fake_fit(3.0, 1.0)));
        fits.insert(("b".into(), "a".into()), Ok(fake_fit(0.5, 1.0)));
        let net = extract_network(&fits, Correction::Bonferroni { level: 0.01 }).unwrap();
        assert_eq!(net.threshold, 0.005);
        assert_eq!(net.edges.len(), 1);
        assert_eq!(net.edges[0].sign, 1);
        assert_eq!(net.degrees["a"].out_positive, 1);
        let plain = extract_network(&fits, Correction::None { level: 0.01 }).unwrap();
        assert_eq!(plain.edges.len(), 1);
    }

    #[test]
    fn empty_target_chain_stays_feasible() {
        let mut m = BTreeMap::new();
        m.insert("i".to_string(), vec![EventSequence::new(vec![0.2, 0.5], 1.0).unwrap()]);
        m.insert("j".to_string(), vec![EventSequence::empty(1.0).unwrap()]);
        let data = TrialSet::new(m, 1, 1.0).unwrap();
        let spec = DesignSpec::modified("i", "j", 0.03).with_sigma_w(SigmaW::Fixed(0.1));
        let opts = MhOptions {
            draws: 200,
            init: Some((vec![1.0, 0.0, 0.0], 0.1)),
            coef_scales: Some(vec![0.1, 0.1, 0.1]),
            ..Default::default()
        };
        let chain = mh_sample(&spec, &data, McmcVariant::SigmaWRandom, &opts).unwrap();
        assert_eq!(chain.samples.len(), 200);
        assert!(chain.acceptance_rate > 0.0 && chain.acceptance_rate < 1.0);
        assert!(chain.column(3).iter().all(|&s| s > 0.0));
        let again = mh_sample(&spec, &data, McmcVariant::SigmaWRandom, &opts).unwrap();
        assert_eq!(chain, again);
    }
}
