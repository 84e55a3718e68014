use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hetero_hawkes::ccg::{mc_null_inference, JitterTarget};
use hetero_hawkes::estimate::{
    fit_modified_mle, fit_multivariate_pairwise, fit_nonparametric, fit_standard_mhp, impact_curve, DesignSpec,
    FitResult, ImpactBasis, PairNuisance, PairwiseOptions, SigmaW,
};
use hetero_hawkes::experiments::{run_experiment, ExperimentOptions};
use hetero_hawkes::inference::{extract_network, ks_rescaling_test, Correction};
use hetero_hawkes::io::{
    config_hash, read_spikes, write_results, write_spikes, Emit, ExperimentConfig, Manifest, ResultBundle, SpikeFormat,
    Table,
};
use hetero_hawkes::simulate::{scenario_preset, thinning_simulate};
use hetero_hawkes::theory::{bias_hawkes, bias_roots, log_grid, theory_curves, variance_hawkes, CoxTheoryParams};
use hetero_hawkes::TrialSet;
use serde_json::json;

use crate::{
    Basis, CcgArgs, Command, CorrectionKind, DataArgs, ExperimentArgs, FitArgs, JitterSide, Method, NetworkArgs,
    Nuisance, RunArgs, SimulateArgs, TheoryArgs,
};

const MS: f64 = 1e-3;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Ccg(a) => ccg(a),
        Command::Theory(a) => theory(a),
        Command::Experiment(a) => experiment(a),
        Command::Gof(a) => gof(a),
        Command::Network(a) => network(a),
    }
}

fn load_config(run: &RunArgs) -> Result<Option<ExperimentConfig>> {
    run.config
        .as_ref()
        .map(|p| ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())))
        .transpose()
}

fn resolve_seed(run: &RunArgs, cfg: Option<&ExperimentConfig>) -> u64 {
    run.seed.or(cfg.map(|c| c.seed)).unwrap_or(0)
}

fn emit_set(cfg: Option<&ExperimentConfig>) -> BTreeSet<Emit> {
    cfg.map_or_else(|| Emit::ALL.into_iter().collect(), |c| c.emit.clone())
}

fn load_data(d: &DataArgs) -> Result<TrialSet> {
    read_spikes(&d.data, d.format, d.horizon).with_context(|| format!("reading {}", d.data.display()))
}

fn require_units(data: &TrialSet, ids: &[&str]) -> Result<()> {
    let known: Vec<&str> = data.process_ids().collect();
    let missing: Vec<&str> = ids.iter().copied().filter(|id| !known.contains(id)).collect();
    if !missing.is_empty() {
        bail!(
            "unknown unit(s) {}; available: {}",
            missing.join(", "),
            known.join(", ")
        );
    }
    Ok(())
}

fn sigma_w_override(grid: &Option<Vec<f64>>, fixed: Option<f64>) -> Option<SigmaW> {
    match (grid, fixed) {
        (_, Some(s)) => Some(SigmaW::Fixed(s * MS)),
        (Some(g), None) => Some(SigmaW::Grid(g.iter().map(|s| s * MS).collect())),
        (None, None) => None,
    }
}

fn finish(bundle: &ResultBundle, out: &Path, emit: &BTreeSet<Emit>, hash: &str, seed: u64) -> Result<()> {
    let m = write_results(bundle, out, emit, hash, seed)?;
    println!(
        "wrote {} artifacts and manifest.json to {}",
        m.artifacts.len(),
        out.display()
    );
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let mut net = match (&a.preset, &cfg) {
        (Some(name), _) => scenario_preset(name)?,
        (None, Some(c)) => c.scenario.network()?,
        (None, None) => bail!("simulate needs --preset or --config"),
    };
    if let Some(n) = a.trials {
        net.trial_count = n;
    }
    if let Some(h) = a.horizon {
        net.horizon = h;
    }
    net.seed = resolve_seed(&a.run, cfg.as_ref());
    net.validate()?;
    let sim = thinning_simulate(&net, false)?;

    let out = &a.run.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let spikes = match a.format {
        SpikeFormat::Csv => "spikes.csv",
        _ => "spikes.jsonl",
    };
    write_spikes(&sim.trials, out.join(spikes), a.format)?;
    fs::write(out.join("network.json"), serde_json::to_string_pretty(&net)?)?;
    let mut m = Manifest::new(config_hash(&net)?, net.seed);
    m.push("spikes", "spikes", spikes);
    m.push("network", "network_spec", "network.json");
    m.write(out)?;

    let total = sim.trials.total_time();
    println!(
        "simulated {} trials of {} ms (seed {})",
        sim.trials.trial_count(),
        sim.trials.trial_horizon() / MS,
        net.seed
    );
    for id in sim.trials.process_ids() {
        println!("  {id}: {:.2} spikes/s", sim.trials.event_count(id) as f64 / total);
    }
    println!("wrote {spikes}, network.json and manifest.json to {}", out.display());
    Ok(())
}

fn design(a: &FitArgs, cfg: Option<&ExperimentConfig>) -> Result<DesignSpec> {
    let mut spec = match (&a.source, &a.target, cfg.and_then(|c| c.estimator.clone())) {
        (Some(s), Some(t), _) => {
            let h = a.sigma_h * MS;
            match a.method {
                Method::Modified => DesignSpec::modified(s, t, h),
                Method::Standard => DesignSpec::standard(s, t, h),
                Method::Spline => {
                    DesignSpec::modified(s, t, h).with_basis(ImpactBasis::spline(a.lag_window * MS, a.knots))
                }
            }
        }
        (None, None, Some(est)) => est,
        _ => bail!("--source and --target are required unless the config supplies an estimator"),
    };
    if let Some(sw) = sigma_w_override(&a.sigma_w_grid, a.sigma_w) {
        spec.sigma_w = sw;
    }
    if a.refine {
        spec.refine_sigma_w = true;
    }
    Ok(spec)
}

fn fit_with(method: Method, spec: &DesignSpec, data: &TrialSet) -> Result<FitResult> {
    for t in &spec.impacts {
        require_units(data, &[&t.source, &spec.target])?;
    }
    Ok(match method {
        Method::Modified => fit_modified_mle(spec, data)?,
        Method::Standard => fit_standard_mhp(spec, data)?,
        Method::Spline => fit_nonparametric(spec, data)?,
    })
}

fn curve_lags(basis: &ImpactBasis) -> Vec<f64> {
    let end = match basis {
        ImpactBasis::Square { width } => 1.5 * width,
        ImpactBasis::BSpline { lag_window, .. } => *lag_window,
        ImpactBasis::Exponential { gamma } => 5.0 / gamma,
    };
    let n = (end / MS).ceil() as usize;
    (0..=n).map(|k| k as f64 * MS).collect()
}

fn report_fit(spec: &DesignSpec, fit: &FitResult) {
    println!(
        "target {}: baseline {:.3} spikes/s, converged {}",
        fit.target, fit.beta_j, fit.converged
    );
    if let Some(sw) = fit.sigma_w_selected {
        println!("  selected sigma_w {:.1} ms", sw / MS);
    }
    let mut off = fit.impact_offset;
    for t in &spec.impacts {
        let n = t.basis.len().unwrap_or(1);
        if n == 1 {
            println!(
                "  {} -> {}: alpha {:.4} ± {:.4} spikes/s",
                t.source, spec.target, fit.params[off], fit.std_errors[off]
            );
        } else {
            println!("  {} -> {}: {n} spline coefficients", t.source, spec.target);
        }
        off += n;
    }
}

fn fit_bundle(spec: &DesignSpec, fit: &FitResult, confidence: f64) -> Result<ResultBundle> {
    let mut bundle = ResultBundle::default();
    for (k, t) in spec.impacts.iter().enumerate() {
        let name = format!("{}_to_{}", t.source, spec.target);
        let curve = impact_curve(spec, fit, k, &curve_lags(&t.basis), confidence)?;
        bundle.curves.push((name, curve));
    }
    bundle.fits.push((spec.target.clone(), fit.clone()));
    Ok(bundle)
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let data = load_data(&a.data)?;
    let spec = design(&a, cfg.as_ref())?;
    let fit = fit_with(a.method, &spec, &data)?;
    report_fit(&spec, &fit);
    let bundle = fit_bundle(&spec, &fit, a.confidence)?;
    let seed = resolve_seed(&a.run, cfg.as_ref());
    let hash = config_hash(&json!({ "command": "fit", "data": a.data.data, "spec": spec }))?;
    finish(&bundle, &a.run.out, &emit_set(cfg.as_ref()), &hash, seed)
}

fn gof(a: FitArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let data = load_data(&a.data)?;
    let spec = design(&a, cfg.as_ref())?;
    let fit = fit_with(a.method, &spec, &data)?;
    report_fit(&spec, &fit);
    let g = ks_rescaling_test(&spec, &fit, &data)?;
    println!(
        "time-rescaling KS: D = {:.4}, p = {:.4} over {} intervals",
        g.outcome.statistic, g.outcome.p_value, g.n_intervals
    );
    let mut bundle = fit_bundle(&spec, &fit, a.confidence)?;
    bundle.qq.push((spec.target.clone(), g.qq));
    let mut t = Table::new(["statistic", "p_value", "n_intervals"]);
    t.push([
        g.outcome.statistic.to_string(),
        g.outcome.p_value.to_string(),
        g.n_intervals.to_string(),
    ]);
    bundle.tables.push(("gof".into(), t));
    let seed = resolve_seed(&a.run, cfg.as_ref());
    let hash = config_hash(&json!({ "command": "gof", "data": a.data.data, "spec": spec }))?;
    finish(&bundle, &a.run.out, &emit_set(cfg.as_ref()), &hash, seed)
}

fn ccg(a: CcgArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let data = load_data(&a.data)?;
    require_units(&data, &[&a.source, &a.target])?;
    let mut c = cfg.as_ref().and_then(|c| c.ccg).unwrap_or_default();
    if let Some(v) = a.bin {
        c.bin_width = v * MS;
    }
    if let Some(v) = a.max_lag {
        c.max_lag = v * MS;
    }
    if let Some(v) = a.jitter {
        c.jitter_window = v * MS;
    }
    if let Some(v) = a.n_mc {
        c.n_mc = v;
    }
    if let Some(v) = a.confidence {
        c.confidence = v;
    }
    if let Some(side) = a.jitter_target {
        c.jitter_target = match side {
            JitterSide::Source => JitterTarget::Source,
            JitterSide::Target => JitterTarget::Target,
            JitterSide::Both => JitterTarget::Both,
        };
    }
    c.validate()?;
    let seed = resolve_seed(&a.run, cfg.as_ref());
    let r = mc_null_inference(
        data.process(&a.source).unwrap(),
        data.process(&a.target).unwrap(),
        &c,
        seed,
    )?;
    println!(
        "{} -> {}: {} lags of {} ms, {} jitter surrogates",
        a.source,
        a.target,
        r.lags.len(),
        c.bin_width / MS,
        c.n_mc
    );
    println!(
        "  max-statistic p over (0, {} ms]: {:.4}",
        c.max_lag / MS,
        r.max_stat_p_value(c.bin_width, c.max_lag)?
    );
    println!(
        "  max-statistic p over all lags: {:.4}",
        r.max_stat_p_value(-c.max_lag, c.max_lag)?
    );
    let mut bundle = ResultBundle::default();
    bundle.ccg.push((format!("{}_to_{}", a.source, a.target), r));
    let hash = config_hash(
        &json!({ "command": "ccg", "data": a.data.data, "source": a.source, "target": a.target, "ccg": c }),
    )?;
    finish(&bundle, &a.run.out, &emit_set(cfg.as_ref()), &hash, seed)
}

fn theory(a: TheoryArgs) -> Result<()> {
    let mut p = CoxTheoryParams::linear_cox_basic(a.horizon);
    if let Some(v) = a.rho {
        p.rho = v;
    }
    if let Some(v) = a.sigma_i {
        p.sigma_i = v * MS;
    }
    if let Some(v) = a.alpha_i {
        p.alpha_i = v;
    }
    if let Some(v) = a.alpha_j {
        p.alpha_j = v;
    }
    if let Some(v) = a.sigma_h {
        p.sigma_h = v * MS;
    }
    if let Some(v) = a.alpha_ij {
        p.alpha_ij = v;
    }
    p.validate()?;
    let grid = log_grid(a.grid_lo * MS, a.grid_hi * MS, a.points)?;
    let rows = theory_curves(&p, &grid)?;
    println!(
        "standard estimator bias {:.4} spikes/s, SD {:.4}",
        bias_hawkes(&p)?,
        variance_hawkes(&p)?.sqrt()
    );
    let roots: Vec<String> = bias_roots(&p, grid[0], grid[grid.len() - 1], 200)?
        .iter()
        .map(|r| format!("{:.1}", r / MS))
        .collect();
    println!("  zero-bias widths: [{}] ms", roots.join(", "));
    if let Some(best) = rows.iter().min_by(|x, y| x.rmse.total_cmp(&y.rmse)) {
        println!(
            "  smallest RMSE {:.4} at sigma_w {:.1} ms",
            best.rmse,
            best.sigma_w / MS
        );
    }
    let bundle = ResultBundle {
        theory: Some(rows),
        ..ResultBundle::default()
    };
    let hash = config_hash(&json!({ "command": "theory", "params": p, "grid": grid }))?;
    finish(&bundle, &a.out, &[Emit::Theory].into_iter().collect(), &hash, 0)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let opts = ExperimentOptions {
        reps: a.reps.or(cfg.as_ref().map(|c| c.replications)).unwrap_or(20),
        trials: a.trials,
        seed: resolve_seed(&a.run, cfg.as_ref()),
        jobs: a.jobs,
        sigma_w_grid: a.sigma_w_grid.as_ref().map(|g| g.iter().map(|s| s * MS).collect()),
        n_mc: a.n_mc,
    };
    let report = run_experiment(&a.name, &opts)?;
    println!("{} ({} replications)", report.name, opts.reps);
    let mut summary = Table::new(["key", "value"]);
    for (k, v) in &report.summary {
        println!("  {k}: {v:.4}");
        summary.push([k.clone(), v.to_string()]);
    }
    let mut bundle = ResultBundle {
        tables: report.tables,
        ..ResultBundle::default()
    };
    bundle.tables.push(("summary".into(), summary));
    let hash = config_hash(&json!({ "command": "experiment", "name": a.name, "options": opts }))?;
    finish(&bundle, &a.run.out, &emit_set(cfg.as_ref()), &hash, opts.seed)
}

fn network(a: NetworkArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let data = load_data(&a.data)?;
    let opts = PairwiseOptions {
        basis: match a.basis {
            Basis::Square => ImpactBasis::Square { width: a.sigma_h * MS },
            Basis::Spline => ImpactBasis::spline(a.lag_window * MS, a.knots),
        },
        sigma_w: sigma_w_override(&a.sigma_w_grid, a.sigma_w).unwrap_or_else(SigmaW::default_grid),
        nuisance: match a.nuisance {
            Nuisance::None => PairNuisance::None,
            Nuisance::Source => PairNuisance::Source,
            Nuisance::AllOthers => PairNuisance::AllOthers,
        },
    };
    let correction = match a.correction {
        CorrectionKind::None => Correction::None { level: a.level },
        CorrectionKind::Bonferroni => Correction::Bonferroni { level: a.level },
    };
    let fits = fit_multivariate_pairwise(&data, &opts)?;
    let net = extract_network(&fits, correction)?;
    println!(
        "{} of {} ordered pairs significant (p < {:.2e})",
        net.edges.len(),
        net.tested,
        net.threshold
    );
    for e in &net.edges {
        println!(
            "  {} -> {}: {:+.3} ± {:.3} spikes/s, p = {:.2e}",
            e.source, e.target, e.alpha_hat, e.se, e.p
        );
    }
    for (s, t) in &net.failed {
        println!("  {s} -> {t}: fit failed");
    }
    let bundle = ResultBundle {
        network: Some(net),
        ..ResultBundle::default()
    };
    let seed = resolve_seed(&a.run, cfg.as_ref());
    let hash =
        config_hash(&json!({ "command": "network", "data": a.data.data, "options": opts, "correction": correction }))?;
    finish(&bundle, &a.run.out, &emit_set(cfg.as_ref()), &hash, seed)
}
