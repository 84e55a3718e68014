//! Spike files, experiment configs and result tables.
//!
//! Spike files are JSON lines, one event per record
//! `{"trial": 0, "unit": "i", "t": 0.125}`, preceded by a header record
//! `{"meta": {"trials": N, "horizon": T, "units": [...]}}` (`units` optional; it keeps
//! silent units in the round trip). The CSV form has columns `trial,unit,t` and may carry
//! the same header as a first line `# meta {...}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ccg::{CcgConfig, CcgResult};
use crate::error::{Error, Result};
use crate::estimate::{CurvePoint, DesignSpec, FitResult};
use crate::events::{EventSequence, TrialSet};
use crate::inference::{NetworkEdges, QqPoint};
use crate::simulate::{scenario_preset, NetworkSpec};
use crate::theory::TheoryRow;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpikeFormat {
    #[default]
    Auto,
    Jsonl,
    Csv,
}

impl FromStr for SpikeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "jsonl" | "json" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!(
                "unknown spike format {other}; expected auto, jsonl or csv"
            ))),
        }
    }
}

impl SpikeFormat {
    fn resolve(self, path: &Path) -> Self {
        match self {
            Self::Auto => match path.extension().and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
                _ => Self::Jsonl,
            },
            f => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeMeta {
    pub trials: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub units: Vec<String>,
}

struct RawEvent {
    line: usize,
    trial: usize,
    unit: String,
    t: f64,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a spike file. `horizon` overrides (or stands in for) the header's horizon.
pub fn read_spikes(path: impl AsRef<Path>, format: SpikeFormat, horizon: Option<f64>) -> Result<TrialSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (meta, events) = match format.resolve(path) {
        SpikeFormat::Csv => parse_csv(path, &text)?,
        _ => parse_jsonl(path, &text)?,
    };
    assemble(path, meta, events, horizon)
}

fn parse_meta(path: &Path, line: usize, v: &Value) -> Result<SpikeMeta> {
    serde_json::from_value(v.clone()).map_err(|e| parse_err(path, line, format!("meta: {e}")))
}

fn parse_jsonl(path: &Path, text: &str) -> Result<(Option<SpikeMeta>, Vec<RawEvent>)> {
    let mut meta = None;
    let mut events = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw).map_err(|e| parse_err(path, line, format!("invalid JSON: {e}")))?;
        let Value::Object(obj) = &v else {
            return Err(parse_err(path, line, "expected a JSON object"));
        };
        if let Some(m) = obj.get("meta") {
            if meta.is_some() {
                return Err(parse_err(path, line, "duplicate meta record"));
            }
            meta = Some(parse_meta(path, line, m)?);
            continue;
        }
        let trial = obj
            .get("trial")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err(path, line, "field `trial`: expected a non-negative integer"))?;
        let unit = match obj.get("unit") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(parse_err(path, line, "field `unit`: expected a string")),
        };
        let t = obj
            .get("t")
            .and_then(Value::as_f64)
            .ok_or_else(|| parse_err(path, line, "field `t`: expected a number"))?;
        events.push(RawEvent {
            line,
            trial: trial as usize,
            unit,
            t,
        });
    }
    Ok((meta, events))
}

fn parse_csv(path: &Path, text: &str) -> Result<(Option<SpikeMeta>, Vec<RawEvent>)> {
    let mut meta = None;
    let mut skipped = 0;
    for raw in text.lines() {
        let Some(rest) = raw.trim_start().strip_prefix('#') else {
            break;
        };
        skipped += 1;
        if let Some(json) = rest.trim_start().strip_prefix("meta") {
            let v: Value =
                serde_json::from_str(json.trim()).map_err(|e| parse_err(path, skipped, format!("meta: {e}")))?;
            meta = Some(parse_meta(path, skipped, &v)?);
        }
    }
    let body: String = text.lines().skip(skipped).flat_map(|l| [l, "\n"]).collect();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, skipped + 1, format!("missing column `{name}`")))
    };
    let (ct, cu, cx) = (col("trial")?, col("unit")?, col("t")?);
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = skipped + rec.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize, name: &str| {
            rec.get(c)
                .ok_or_else(|| parse_err(path, line, format!("field `{name}`: missing")))
        };
        let trial = field(ct, "trial")?
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, "field `trial`: expected a non-negative integer"))?;
        let unit = field(cu, "unit")?.to_string();
        let t = field(cx, "t")?
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, "field `t`: expected a number"))?;
        events.push(RawEvent { line, trial, unit, t });
    }
    Ok((meta, events))
}

fn assemble(path: &Path, meta: Option<SpikeMeta>, events: Vec<RawEvent>, horizon: Option<f64>) -> Result<TrialSet> {
    let horizon = horizon.or(meta.as_ref().map(|m| m.horizon)).ok_or_else(|| {
        Error::Config(format!(
            "{}: no meta header; supply the horizon explicitly",
            path.display()
        ))
    })?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let trials = match &meta {
        Some(m) => m.trials,
        None => events.iter().map(|e| e.trial + 1).max().unwrap_or(0),
    };
    if trials == 0 {
        return Err(Error::Config(format!("{}: no trials declared", path.display())));
    }
    let mut grouped: BTreeMap<String, Vec<Vec<(f64, usize)>>> = BTreeMap::new();
    for u in meta.iter().flat_map(|m| &m.units) {
        grouped.entry(u.clone()).or_insert_with(|| vec![Vec::new(); trials]);
    }
    for e in events {
        if e.trial >= trials {
            return Err(parse_err(
                path,
                e.line,
                format!("field `trial`: {} >= declared trial count {trials}", e.trial),
            ));
        }
        if !(e.t >= 0.0 && e.t <= horizon) {
            return Err(parse_err(
                path,
                e.line,
                format!("field `t`: {} outside [0, {horizon}]", e.t),
            ));
        }
        grouped.entry(e.unit).or_insert_with(|| vec![Vec::new(); trials])[e.trial].push((e.t, e.line));
    }
    let mut processes = BTreeMap::new();
    for (unit, per_trial) in grouped {
        let mut seqs = Vec::with_capacity(trials);
        for (k, mut ev) in per_trial.into_iter().enumerate() {
            if ev.windows(2).any(|w| w[1].0 < w[0].0) {
                log::warn!("{}: unit {unit} trial {k} not sorted; sorting", path.display());
                ev.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            if let Some(w) = ev.windows(2).find(|w| w[1].0 == w[0].0) {
                return Err(parse_err(
                    path,
                    w[1].1,
                    format!(
                        "duplicate timestamp {} for unit {unit} on trial {k} (also line {})",
                        w[1].0, w[0].1
                    ),
                ));
            }
            seqs.push(EventSequence::new(ev.into_iter().map(|e| e.0).collect(), horizon)?);
        }
        processes.insert(unit, seqs);
    }
    TrialSet::new(processes, trials, horizon)
}

/// Writes spikes with shortest round-trip decimal timestamps; format chosen from the extension unless given.
pub fn write_spikes(data: &TrialSet, path: impl AsRef<Path>, format: SpikeFormat) -> Result<()> {
    let path = path.as_ref();
    let meta = SpikeMeta {
        trials: data.trial_count(),
        horizon: data.trial_horizon(),
        units: data.process_ids().map(String::from).collect(),
    };
    let mut out = String::new();
    let csv = format.resolve(path) == SpikeFormat::Csv;
    let meta_json = serde_json::to_string(&meta)?;
    if csv {
        let _ = writeln!(out, "# meta {meta_json}\ntrial,unit,t");
    } else {
        let _ = writeln!(out, "{{\"meta\":{meta_json}}}");
    }
    for k in 0..data.trial_count() {
        for (unit, seqs) in data.processes() {
            let unit_json = serde_json::to_string(unit)?;
            for t in seqs[k].times() {
                // Debug formatting of f64 is the shortest decimal that parses back exactly
                if csv {
                    let _ = writeln!(out, "{k},{},{t:?}", csv_field(unit));
                } else {
                    let _ = writeln!(out, "{{\"trial\":{k},\"unit\":{unit_json},\"t\":{t:?}}}");
                }
            }
        }
    }
    write_file(path, out.as_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Fits,
    Curves,
    Ccg,
    Theory,
    Network,
    Qq,
}

impl Emit {
    pub const ALL: [Emit; 6] = [
        Emit::Fits,
        Emit::Curves,
        Emit::Ccg,
        Emit::Theory,
        Emit::Network,
        Emit::Qq,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scenario {
    Preset(String),
    Inline(Box<NetworkSpec>),
}

impl Scenario {
    pub fn network(&self) -> Result<NetworkSpec> {
        match self {
            Scenario::Preset(name) => scenario_preset(name),
            Scenario::Inline(spec) => Ok((**spec).clone()),
        }
    }
}

fn one() -> usize {
    1
}

fn all_emit() -> BTreeSet<Emit> {
    Emit::ALL.into_iter().collect()
}

/// One JSON document describing a run. Command-line flags override its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub estimator: Option<DesignSpec>,
    #[serde(default)]
    pub ccg: Option<CcgConfig>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: PathBuf,
    #[serde(default = "all_emit")]
    pub emit: BTreeSet<Emit>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        self.scenario.network()?.validate()?;
        if let Some(c) = &self.ccg {
            c.validate()?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON encoding (keys sorted).
    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }
}

/// SHA-256 hex digest of any serializable value's canonical JSON.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    // round-trip through Value so object keys come out sorted
    let canonical = serde_json::to_vec(&serde_json::to_value(value)?)?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub kind: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            version: TOOLKIT_VERSION.to_string(),
            config_hash,
            seed,
            artifacts: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, kind: &str, path: &str) {
        self.artifacts.push(Artifact {
            name: name.into(),
            kind: kind.into(),
            path: path.into(),
        });
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join("manifest.json");
        write_file(&path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(path)
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Free-form numeric table (experiment aggregates).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_csv_string()?.as_bytes())
    }
}

pub fn curve_table(points: &[CurvePoint]) -> Table {
    let mut t = Table::new(["lag", "value", "ci_lo", "ci_hi"]);
    for p in points {
        t.push([p.lag, p.value, p.ci_lo, p.ci_hi]);
    }
    t
}

pub fn ccg_table(r: &CcgResult) -> Table {
    let mut t = Table::new(["lag", "ccg", "null_mean", "lo", "hi", "p", "sim_lo", "sim_hi"]);
    for k in 0..r.lags.len() {
        t.push([
            r.lags[k],
            r.ccg[k],
            r.null_mean[k],
            r.pointwise_band.0[k],
            r.pointwise_band.1[k],
            r.p_values[k],
            r.simultaneous_band.0[k],
            r.simultaneous_band.1[k],
        ]);
    }
    t
}

pub fn theory_table(rows: &[TheoryRow]) -> Table {
    let mut t = Table::new(["sigma_w_ms", "bias", "se", "rmse"]);
    for r in rows {
        t.push([r.sigma_w * 1e3, r.bias, r.se, r.rmse]);
    }
    t
}

pub fn network_table(net: &NetworkEdges) -> Table {
    let mut t = Table::new(["source", "target", "alpha_hat", "se", "p", "sign"]);
    for e in &net.edges {
        t.push([
            e.source.clone(),
            e.target.clone(),
            e.alpha_hat.to_string(),
            e.se.to_string(),
            e.p.to_string(),
            e.sign.to_string(),
        ]);
    }
    t
}

/// `{nodes, edges}` graph document.
pub fn network_graph(net: &NetworkEdges) -> Value {
    let nodes: Vec<Value> = net
        .degrees
        .iter()
        .map(|(id, d)| {
            serde_json::json!({
                "id": id,
                "out_positive": d.out_positive,
                "out_negative": d.out_negative,
                "in_positive": d.in_positive,
                "in_negative": d.in_negative,
            })
        })
        .collect();
    let edges: Vec<Value> = net
        .edges
        .iter()
        .map(|e| {
            serde_json::json!({
                "source": e.source, "target": e.target, "weight": e.alpha_hat,
                "se": e.se, "p": e.p, "sign": e.sign,
            })
        })
        .collect();
    serde_json::json!({ "nodes": nodes, "edges": edges, "threshold": net.threshold })
}

pub fn qq_table(points: &[QqPoint]) -> Table {
    let mut t = Table::new(["theoretical", "empirical", "lo", "hi"]);
    for p in points {
        t.push([p.theoretical, p.empirical, p.lo, p.hi]);
    }
    t
}

/// Everything a command may write; entries are keyed by a file-safe name.
#[derive(Debug, Clone, Default)]
pub struct ResultBundle {
    pub fits: Vec<(String, FitResult)>,
    pub curves: Vec<(String, Vec<CurvePoint>)>,
    pub ccg: Vec<(String, CcgResult)>,
    pub theory: Option<Vec<TheoryRow>>,
    pub network: Option<NetworkEdges>,
    pub qq: Vec<(String, Vec<QqPoint>)>,
    /// Always written, kind `table`.
    pub tables: Vec<(String, Table)>,
}

/// Writes the emitted parts of `bundle` under `dir` with fixed names and returns the manifest
/// (also saved as `manifest.json`).
pub fn write_results(
    bundle: &ResultBundle,
    dir: impl AsRef<Path>,
    emit: &BTreeSet<Emit>,
    config_hash: &str,
    seed: u64,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = Manifest::new(config_hash.to_string(), seed);
    let put = |m: &mut Manifest, name: &str, kind: &str, file: String, bytes: Vec<u8>| -> Result<()> {
        write_file(&dir.join(&file), &bytes)?;
        m.push(name, kind, &file);
        Ok(())
    };
    if emit.contains(&Emit::Fits) {
        for (name, fit) in &bundle.fits {
            put(
                &mut m,
                name,
                "fit",
                format!("fit_{name}.json"),
                serde_json::to_vec_pretty(fit)?,
            )?;
        }
    }
    if emit.contains(&Emit::Curves) {
        for (name, c) in &bundle.curves {
            put(
                &mut m,
                name,
                "curve",
                format!("curve_{name}.csv"),
                curve_table(c).to_csv_string()?.into_bytes(),
            )?;
        }
    }
    if emit.contains(&Emit::Ccg) {
        for (name, c) in &bundle.ccg {
            put(
                &mut m,
                name,
                "ccg",
                format!("ccg_{name}.csv"),
                ccg_table(c).to_csv_string()?.into_bytes(),
            )?;
        }
    }
    if emit.contains(&Emit::Theory) {
        if let Some(rows) = &bundle.theory {
            put(
                &mut m,
                "theory",
                "theory",
                "theory.csv".into(),
                theory_table(rows).to_csv_string()?.into_bytes(),
            )?;
        }
    }
    if emit.contains(&Emit::Network) {
        if let Some(net) = &bundle.network {
            put(
                &mut m,
                "network",
                "network",
                "network.csv".into(),
                network_table(net).to_csv_string()?.into_bytes(),
            )?;
            put(
                &mut m,
                "network_graph",
                "network_graph",
                "network.json".into(),
                serde_json::to_vec_pretty(&network_graph(net))?,
            )?;
        }
    }
    if emit.contains(&Emit::Qq) {
        for (name, q) in &bundle.qq {
            put(
                &mut m,
                name,
                "qq",
                format!("qq_{name}.csv"),
                qq_table(q).to_csv_string()?.into_bytes(),
            )?;
        }
    }
    for (name, t) in &bundle.tables {
        put(
            &mut m,
            name,
            "table",
            format!("{name}.csv"),
            t.to_csv_string()?.into_bytes(),
        )?;
    }
    m.write(dir)?;
    Ok(m)
}
