//! Statistical invariants checked by simulation. Seeds are fixed, so every run is reproducible.

mod common;

use common::*;
use hetero_hawkes::ccg::*;
use hetero_hawkes::estimate::*;
use hetero_hawkes::experiments::run_replications;
use hetero_hawkes::inference::*;
use hetero_hawkes::rng::{role, substream_seed};
use hetero_hawkes::simulate::*;
use hetero_hawkes::stats::*;
use hetero_hawkes::theory::*;
use hetero_hawkes::TrialSet;

fn basic(seed: u64, trials: usize) -> NetworkSpec {
    let mut s = scenario_preset("linear_cox_basic").unwrap();
    s.seed = seed;
    s.trial_count = trials;
    s
}

fn at_sigma(sigma_w: f64) -> DesignSpec {
    DesignSpec::modified("i", "j", 0.03).with_sigma_w(SigmaW::Fixed(sigma_w))
}

#[test]
fn thinning_with_tabulated_background_rescales_to_exponential() {
    let f = Tabulated::new(vec![0.0, 4.0, 9.0, 15.0, 20.0], vec![30.0, 120.0, 10.0, 60.0, 45.0]).unwrap();
    let spec = NetworkSpec {
        process_ids: vec!["a".into()],
        baselines: vec![0.0],
        backgrounds: vec![BackgroundSpec::Tabulated(f.clone())],
        shared_background: false,
        impacts: Vec::new(),
        horizon: 20.0,
        trial_count: 1,
        seed: 2024,
    };
    let out = thinning_simulate(&spec, false).unwrap();
    let ev = &out.trials.process("a").unwrap()[0];
    assert!(ev.len() >= 1000, "{}", ev.len());
    let z: Vec<f64> = ev.times().windows(2).map(|w| f.integral(w[0], w[1])).collect();
    let ks = ks_exponential(&z).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn linear_cox_autocovariance_matches_bump_convolution() {
    let (rho, sigma_i) = (30.0, 0.1);
    let spec = NetworkSpec {
        process_ids: vec!["a".into()],
        baselines: vec![0.0],
        backgrounds: vec![BackgroundSpec::LinearCox { rho, sigma_i }],
        shared_background: true,
        impacts: Vec::new(),
        horizon: 5.0,
        trial_count: 400,
        seed: 8,
    };
    let dt = 0.005;
    let n = (spec.horizon / dt) as usize;
    let lags = [0usize, 20, 40]; // 0, σ_I, 2σ_I in bins
    let mut per_trial: Vec<[f64; 3]> = Vec::new();
    for k in 0..spec.trial_count {
        let bg = &trial_backgrounds(&spec, k as u64).unwrap()[0];
        let f: Vec<f64> = (0..n).map(|q| bg.eval(q as f64 * dt) - rho).collect();
        let mut row = [0.0; 3];
        for (r, &l) in lags.iter().enumerate() {
            row[r] = (0..n - l).map(|q| f[q] * f[q + l]).sum::<f64>() / (n - l) as f64;
        }
        per_trial.push(row);
    }
    for (r, &l) in lags.iter().enumerate() {
        let xs: Vec<f64> = per_trial.iter().map(|row| row[r]).collect();
        let u = l as f64 * dt;
        let expected = rho * normal_pdf(u, 2f64.sqrt() * sigma_i);
        let z = (mean(&xs) - expected) / sem(&xs);
        assert!(z.abs() < 3.0, "lag {u}: {} vs {expected} (z = {z})", mean(&xs));
    }
}

struct BasicRep {
    modified: (f64, f64),
    standard: f64,
    oracle: f64,
}

/// One pass over 100 linear_cox_basic replicates feeds several checks.
#[test]
fn linear_cox_basic_replicates() {
    let reps = 100;
    let theory = CoxTheoryParams::linear_cox_basic(5.0 * 200.0);
    let out = run_replications(reps, 1, |r| {
        let sim = thinning_simulate(&basic(substream_seed(41, r as u64, role::REPLICATION), 200), true)?;
        let data = &sim.trials;
        let modified = fit_fixed_sigma(&at_sigma(0.125), data, None)?.alpha();
        let standard = fit_standard_mhp(&DesignSpec::standard("i", "j", 0.03), data)?.alpha().0;
        // correctly specified regressor: the realized background itself
        let per_trial = sim
            .realized_backgrounds
            .as_ref()
            .unwrap()
            .iter()
            .map(|b| b[0].tabulate(5.0, 2001))
            .collect::<hetero_hawkes::Result<Vec<_>>>()?;
        let mut oracle_spec = DesignSpec::standard("i", "j", 0.03);
        oracle_spec.extra.push(ExtraBasis {
            name: "f".into(),
            per_trial,
        });
        let oracle = fit_fixed_sigma(&oracle_spec, data, None)?.alpha().0;
        Ok(BasicRep {
            modified,
            standard,
            oracle,
        })
    })
    .unwrap();

    let m: Vec<f64> = out.iter().map(|o| o.modified.0).collect();
    let s: Vec<f64> = out.iter().map(|o| o.standard).collect();
    let o: Vec<f64> = out.iter().map(|o| o.oracle).collect();

    println!(
        "modified {} ± {} | standard {} | oracle {}",
        mean(&m),
        sem(&m),
        mean(&s),
        mean(&o)
    );
    // near-zero bias at σ_w = 125 ms; 5 s trials leave a small positive edge offset
    // that the stationary theory does not describe, so the check is relative to the amplitude
    assert!((mean(&m) - 2.0).abs() < 0.2, "modified mean {}", mean(&m));

    // standard bias matches the no-nuisance closed form
    let expected = bias_hawkes(&theory).unwrap();
    let zs = (mean(&s) - 2.0 - expected) / sem(&s);
    assert!(
        zs.abs() < 3.0,
        "standard bias {} vs {expected} (z {zs})",
        mean(&s) - 2.0
    );

    // supplying the true background removes at least 80% of the standard bias
    let (bias_s, bias_o) = ((mean(&s) - 2.0).abs(), (mean(&o) - 2.0).abs());
    assert!(bias_o * 5.0 <= bias_s, "oracle bias {bias_o} vs standard {bias_s}");

    // sampling distribution is normal with the predicted spread
    let ad = anderson_darling_normal(&m).unwrap();
    assert!(ad.p_value > 0.01, "{ad:?}");
    let predicted = variance_approx(&theory, 0.125).unwrap().sqrt();
    assert!((sd(&m) / predicted - 1.0).abs() < 0.2, "sd {} vs {predicted}", sd(&m));
    let mean_se = mean(&out.iter().map(|o| o.modified.1).collect::<Vec<_>>());
    assert!(
        (sd(&m) / mean_se - 1.0).abs() < 0.2,
        "sd {} vs mean SE {mean_se}",
        sd(&m)
    );
}

#[test]
fn standard_error_scales_with_trial_count() {
    let data = thinning_simulate(&basic(77, 400), false).unwrap().trials;
    let half = data.truncated(200);
    let var = |d: &TrialSet| fit_fixed_sigma(&at_sigma(0.125), d, None).unwrap().alpha().1.powi(2);
    let ratio = var(&half) / var(&data);
    assert!((ratio - 2.0).abs() < 0.3, "variance ratio {ratio}");
}

#[test]
fn integrated_standard_error_grows_linearly_with_width() {
    let widths = [0.01, 0.02, 0.03, 0.04];
    let reps = 10;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (w, &sh) in widths.iter().enumerate() {
        let fits = run_replications(reps, 1, |r| {
            let mut spec = linear_cox_pair(30.0, 0.1, sh, 2.0);
            spec.seed = substream_seed(500 + w as u64, r as u64, role::REPLICATION);
            let data = thinning_simulate(&spec, false)?.trials;
            Ok(fit_standard_mhp(&DesignSpec::standard("i", "j", sh), &data)?.alpha().0)
        })
        .unwrap();
        // error of the integrated impact α σ_h
        xs.push(sh);
        ys.push((mean(&fits) - 2.0).abs() * sh);
    }
    let fit = linear_regression(&xs, &ys).unwrap();
    assert!(fit.slope > 0.0, "{fit:?}");
    assert!(fit.intercept.abs() <= 2.0 * fit.intercept_se, "{fit:?}");
}

#[test]
fn null_coverage_with_constant_background() {
    let spec = |seed| NetworkSpec {
        process_ids: vec!["i".into(), "j".into()],
        baselines: vec![20.0, 20.0],
        backgrounds: vec![BackgroundSpec::Constant { level: 0.0 }; 2],
        shared_background: true,
        impacts: Vec::new(),
        horizon: 5.0,
        trial_count: 20,
        seed,
    };
    let zs = run_replications(100, 1, |r| {
        let data = thinning_simulate(&spec(substream_seed(3, r as u64, role::REPLICATION)), false)?.trials;
        let (a, se) = fit_fixed_sigma(&at_sigma(0.125), &data, None)?.alpha();
        let (b, se_b) = fit_standard_mhp(&DesignSpec::standard("i", "j", 0.03), &data)?.alpha();
        Ok((a / se, b / se_b))
    })
    .unwrap();
    let covered = zs.iter().filter(|z| z.0.abs() <= 2.0).count();
    let covered_std = zs.iter().filter(|z| z.1.abs() <= 2.0).count();
    assert!(covered >= 90, "{covered}/100");
    assert!(covered_std >= 90, "{covered_std}/100");
}

#[test]
fn selected_width_tracks_background_timescale() {
    let selected = |sigma_i: f64, alpha: f64| {
        let picks = run_replications(3, 1, |r| {
            let mut spec = linear_cox_pair(30.0, sigma_i, 0.03, alpha);
            spec.seed = substream_seed(900, r as u64, role::REPLICATION);
            let data = thinning_simulate(&spec, false)?.trials;
            Ok(fit_modified_mle(&DesignSpec::modified("i", "j", 0.03), &data)?
                .sigma_w_selected
                .unwrap())
        })
        .unwrap();
        picks.iter().map(|s| s.ln()).sum::<f64>() / picks.len() as f64
    };
    let (a, b, c) = (selected(0.08, 2.0), selected(0.1, 2.0), selected(0.12, 2.0));
    assert!(a < b && b < c, "{} {} {}", a.exp(), b.exp(), c.exp());
    // the amplitude sign does not move the selected width by more than one grid step
    let step = (0.5f64 / 0.005).ln() / 24.0;
    let flipped = selected(0.1, -2.0);
    assert!((flipped - b).abs() <= step + 1e-12, "{} vs {}", flipped.exp(), b.exp());
}

#[test]
fn spline_curve_covers_the_square_window() {
    let data = thinning_simulate(&basic(12, 200), false).unwrap().trials;
    let spec = DesignSpec::modified("i", "j", 0.03).with_basis(ImpactBasis::spline(0.05, 9));
    let fit = fit_nonparametric(&spec, &data).unwrap();
    assert_eq!(fit.impact_coeffs.len(), 11);
    let curve = impact_curve(&spec, &fit, 0, &[0.005, 0.015, 0.025], 0.95).unwrap();
    for p in curve {
        assert!(p.ci_lo <= 2.0 && 2.0 <= p.ci_hi, "{p:?}");
    }
}

#[test]
fn spline_coefficients_vanish_without_impact() {
    let data = thinning_simulate(&basic(13, 200).tap(|s| s.impacts.clear()), false)
        .unwrap()
        .trials;
    let spec = DesignSpec::modified("i", "j", 0.03)
        .with_basis(ImpactBasis::spline(0.05, 9))
        .with_sigma_w(SigmaW::Fixed(0.125));
    let fit = fit_nonparametric(&spec, &data).unwrap();
    for k in 0..fit.impact_coeffs.len() {
        let (b, se) = (fit.params[fit.impact_offset + k], fit.std_errors[fit.impact_offset + k]);
        assert!(b.abs() <= 2.0 * se, "coefficient {k}: {b} ± {se}");
    }
}

trait Tap: Sized {
    fn tap(self, f: impl FnOnce(&mut Self)) -> Self;
}

impl<T> Tap for T {
    fn tap(mut self, f: impl FnOnce(&mut Self)) -> Self {
        f(&mut self);
        self
    }
}

#[test]
fn pairwise_reduces_to_direct_fit_for_two_processes() {
    let data = thinning_simulate(&basic(21, 50), false).unwrap().trials;
    let opts = PairwiseOptions {
        basis: ImpactBasis::Square { width: 0.03 },
        sigma_w: SigmaW::Grid(vec![0.05, 0.125]),
        nuisance: PairNuisance::Source,
    };
    let fits = fit_multivariate_pairwise(&data, &opts).unwrap();
    assert_eq!(fits.len(), 2);
    let direct = fit_modified_mle(
        &DesignSpec::modified("i", "j", 0.03).with_sigma_w(SigmaW::Grid(vec![0.05, 0.125])),
        &data,
    )
    .unwrap();
    let pair = fits[&("i".to_string(), "j".to_string())].as_ref().unwrap();
    assert_eq!(pair.params, direct.params);
    assert_eq!(pair.sigma_w_selected, direct.sigma_w_selected);
}

#[test]
fn simultaneous_band_coverage_under_the_jitter_null() {
    // independent processes sharing a slow background satisfy the jitter null at Δ = 100 ms
    let cfg = CcgConfig {
        bin_width: 0.002,
        max_lag: 0.02,
        jitter_window: 0.1,
        n_mc: 200,
        ..CcgConfig::default()
    };
    let datasets = 200;
    let inside = run_replications(datasets, 1, |r| {
        let mut spec = linear_cox_pair(20.0, 0.5, 0.03, 0.0);
        spec.trial_count = 5;
        spec.impacts.clear();
        spec.seed = substream_seed(17, r as u64, role::REPLICATION);
        let data = thinning_simulate(&spec, false)?.trials;
        let res = mc_null_inference(data.process("i").unwrap(), data.process("j").unwrap(), &cfg, r as u64)?;
        let (lo, hi) = &res.simultaneous_band;
        Ok(res
            .ccg
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(c, (l, h))| c >= l && c <= h))
    })
    .unwrap();
    let rate = inside.iter().filter(|&&x| x).count() as f64 / datasets as f64;
    assert!((rate - cfg.confidence).abs() <= 0.05, "coverage {rate}");
}

fn six_node(seed: u64, with_edges: bool) -> NetworkSpec {
    let mut s = multivariate6_preset();
    s.seed = seed;
    s.trial_count = 100;
    if !with_edges {
        s.impacts.clear();
    }
    s
}

#[test]
fn bonferroni_controls_false_edges_on_null_networks() {
    let level = 0.1;
    let datasets = 10;
    let opts = PairwiseOptions {
        basis: ImpactBasis::Square { width: 0.03 },
        sigma_w: SigmaW::Fixed(0.125),
        nuisance: PairNuisance::Source,
    };
    let any_false = run_replications(datasets, 1, |r| {
        let data = thinning_simulate(&six_node(substream_seed(60, r as u64, role::REPLICATION), false), false)?.trials;
        let fits = fit_multivariate_pairwise(&data, &opts)?;
        let net = extract_network(&fits, Correction::Bonferroni { level })?;
        assert_eq!(net.tested, 30);
        Ok(!net.edges.is_empty())
    })
    .unwrap();
    let rate = any_false.iter().filter(|&&x| x).count() as f64 / datasets as f64;
    assert!(rate <= level, "family-wise false edge rate {rate}");
}

#[test]
fn recovered_edges_carry_the_true_sign() {
    let spec = six_node(61, true).tap(|s| s.trial_count = 200);
    let data = thinning_simulate(&spec, false).unwrap().trials;
    let opts = PairwiseOptions {
        basis: ImpactBasis::Square { width: 0.03 },
        sigma_w: SigmaW::Fixed(0.125),
        nuisance: PairNuisance::Source,
    };
    let fits = fit_multivariate_pairwise(&data, &opts).unwrap();
    let net = extract_network(&fits, Correction::Bonferroni { level: 0.01 }).unwrap();
    assert!(!net.edges.is_empty());
    for e in &net.edges {
        let truth = spec.square_amplitude(&e.source, &e.target);
        assert!(truth != 0.0, "false edge {} -> {}", e.source, e.target);
        assert_eq!(e.sign as f64, truth.signum(), "{e:?}");
        assert!(e.p <= net.threshold);
    }
}
