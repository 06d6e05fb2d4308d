//! Seed sweeps, protocol comparisons and aggregation.
//!
//! Runs execute on a worker pool and are merged back in (value, protocol,
//! seed) order, so the emitted tables never depend on completion order.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::ChannelModel;
use crate::config::{ConfigError, ScenarioConfig};
use crate::routing::Protocol;
use crate::sim::{self, RunResult, SimError};
use crate::stats::Summary;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run failed for value {value}, protocol {protocol}, seed {seed}: {source}")]
    Run {
        value: String,
        protocol: Protocol,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Record { path: PathBuf, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("{0}")]
    Spec(String),
}

/// One parameter swept over a list of values on top of a base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub base: ScenarioConfig,
    /// Dotted scenario path, e.g. `prediction.horizon_steps`.
    pub parameter: String,
    pub values: Vec<serde_json::Value>,
    /// Seeds per value; the base scenario's count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    /// Protocols to run; the base scenario's protocol when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub protocols: Vec<Protocol>,
}

impl SweepSpec {
    pub fn new(base: ScenarioConfig, parameter: &str, values: Vec<serde_json::Value>) -> Self {
        Self { base, parameter: parameter.to_string(), values, seeds: None, protocols: Vec::new() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        spec.base.validate()?;
        Ok(spec)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        let n = self.seeds.unwrap_or(self.base.seeds) as u64;
        (0..n).map(|k| self.base.base_seed + k).collect()
    }

    fn protocol_list(&self) -> Vec<Protocol> {
        if self.protocols.is_empty() {
            vec![self.base.protocol]
        } else {
            self.protocols.clone()
        }
    }

    /// Scenario for each value, type-checked up front.
    pub fn scenarios(&self) -> Result<Vec<ScenarioConfig>, ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::Invalid {
                key: "values".into(),
                constraint: "at least one value".into(),
            });
        }
        self.values.iter().map(|v| self.base.with_field(&self.parameter, v.clone())).collect()
    }
}

pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepSpec, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    SweepSpec::from_toml_str(&text)
}

/// Execution settings shared by sweeps and comparisons.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// When set, every raw run is written to `<out_dir>/runs/<hash>.json`.
    pub out_dir: Option<PathBuf>,
}

/// Raw result of one run together with everything needed to re-aggregate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub parameter: String,
    pub value: serde_json::Value,
    pub value_index: usize,
    pub protocol: Protocol,
    /// Position of the protocol in the sweep's protocol list.
    #[serde(default)]
    pub protocol_index: usize,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub result: RunResult,
}

impl RunRecord {
    /// SHA-256 over the scenario, the seed and the record's sweep slot.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.scenario.to_toml_string().as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.parameter.as_bytes());
        h.update((self.value_index as u64).to_le_bytes());
        h.update((self.protocol_index as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// One aggregated row: value × protocol over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: String,
    pub protocol: Protocol,
    pub mean_pdr: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl SweepRow {
    pub fn summary(&self) -> Summary {
        Summary { n: self.n, mean: self.mean_pdr, std: self.std, ci_low: self.ci_low, ci_high: self.ci_high }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub runs: Vec<RunRecord>,
}

impl SweepOutput {
    pub fn row(&self, param_value: &str, protocol: Protocol) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.param_value == param_value && r.protocol == protocol)
    }

    pub fn to_csv(&self) -> String {
        rows_csv(&self.rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep output serializes")
    }
}

/// Display form of a swept value: bare strings, compact JSON otherwise.
pub fn value_label(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// CSV with the columns `param_value,protocol,mean_pdr,std,ci_low,ci_high,n`.
pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Runs every (value, protocol, seed) combination and aggregates per
/// (value, protocol). The first failing run in merge order aborts the sweep.
pub fn run_sweep(spec: &SweepSpec, opts: &RunOptions) -> Result<SweepOutput, ExperimentError> {
    let scenarios = spec.scenarios()?;
    let protocols = spec.protocol_list();
    let seeds = spec.seed_list();
    if seeds.is_empty() {
        return Err(ExperimentError::Spec("sweep needs at least one seed".into()));
    }

    let mut tasks = Vec::new();
    for (vi, sc) in scenarios.iter().enumerate() {
        for (pi, &p) in protocols.iter().enumerate() {
            let mut cfg = sc.clone();
            cfg.protocol = p;
            for &seed in &seeds {
                tasks.push((vi, pi, cfg.clone(), seed));
            }
        }
    }

    let results: Vec<Result<RunResult, SimError>> = pool(opts.jobs)?
        .install(|| tasks.par_iter().map(|(_, _, cfg, seed)| sim::run(cfg, *seed)).collect());

    let mut runs = Vec::with_capacity(tasks.len());
    for ((vi, pi, cfg, seed), res) in tasks.into_iter().zip(results) {
        let value = spec.values[vi].clone();
        let result = res.map_err(|source| ExperimentError::Run {
            value: value_label(&value),
            protocol: cfg.protocol,
            seed,
            source,
        })?;
        runs.push(RunRecord {
            parameter: spec.parameter.clone(),
            value,
            value_index: vi,
            protocol: cfg.protocol,
            protocol_index: pi,
            seed,
            scenario: cfg,
            result,
        });
    }

    if let Some(dir) = &opts.out_dir {
        persist_runs(dir, &runs)?;
    }
    Ok(SweepOutput { parameter: spec.parameter.clone(), rows: aggregate(&runs), runs })
}

/// Groups records by (value, protocol slot) in first-seen order and
/// summarizes mean PDR over seeds.
pub fn aggregate(runs: &[RunRecord]) -> Vec<SweepRow> {
    let mut order: Vec<(usize, usize, Protocol)> = Vec::new();
    for r in runs {
        let slot = (r.value_index, r.protocol_index, r.protocol);
        if !order.contains(&slot) {
            order.push(slot);
        }
    }
    order
        .into_iter()
        .map(|(vi, pi, p)| {
            let mut group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.value_index == vi && r.protocol_index == pi && r.protocol == p)
                .collect();
            group.sort_by_key(|r| r.seed);
            let pdrs: Vec<f64> = group.iter().map(|r| r.result.mean_pdr).collect();
            let s = Summary::of(&pdrs);
            SweepRow {
                param_value: value_label(&group[0].value),
                protocol: p,
                mean_pdr: s.mean,
                std: s.std,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                n: s.n,
            }
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Writes each record to `<dir>/runs/<key>.json`.
pub fn persist_runs(dir: &Path, runs: &[RunRecord]) -> Result<(), ExperimentError> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    for r in runs {
        let path = runs_dir.join(format!("{}.json", r.key()));
        let text = serde_json::to_string_pretty(r).expect("run record serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Reads every persisted record under `<dir>/runs`, sorted by
/// (parameter, value index, protocol slot, seed).
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let runs_dir = dir.join("runs");
    let mut out = Vec::new();
    for entry in fs::read_dir(&runs_dir).map_err(io_err(&runs_dir))? {
        let path = entry.map_err(io_err(&runs_dir))?.path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let rec: RunRecord = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Record { path: path.clone(), message: e.to_string() })?;
        out.push(rec);
    }
    out.sort_by(|a, b| {
        (&a.parameter, a.value_index, a.protocol_index, a.seed)
            .cmp(&(&b.parameter, b.value_index, b.protocol_index, b.seed))
    });
    Ok(out)
}

/// Drop of mean PDR from the rural (Friis) to the urban (Nakagami) channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDelta {
    pub protocol: Protocol,
    pub friis_mean_pdr: f64,
    pub nakagami_mean_pdr: f64,
    /// `friis_mean_pdr - nakagami_mean_pdr`.
    pub pdr_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<SweepRow>,
    pub deltas: Vec<ChannelDelta>,
}

impl Comparison {
    pub fn row(&self, model: ChannelModel, protocol: Protocol) -> Option<&SweepRow> {
        let label = match model {
            ChannelModel::Friis => "friis",
            ChannelModel::Nakagami => "nakagami",
        };
        self.rows.iter().find(|r| r.param_value == label && r.protocol == protocol)
    }

    pub fn delta(&self, protocol: Protocol) -> Option<&ChannelDelta> {
        self.deltas.iter().find(|d| d.protocol == protocol)
    }

    pub fn to_csv(&self) -> String {
        rows_csv(&self.rows)
    }

    pub fn deltas_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for d in &self.deltas {
            w.serialize(d).expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

/// Runs each protocol under both channel models over the same seeds.
pub fn compare_protocols(
    scenario: &ScenarioConfig,
    protocols: &[Protocol],
    seeds: usize,
    opts: &RunOptions,
) -> Result<Comparison, ExperimentError> {
    if protocols.len() < 2 {
        return Err(ExperimentError::Spec("comparison needs at least two protocols".into()));
    }
    let spec = SweepSpec {
        base: scenario.clone(),
        parameter: "channel.model".into(),
        values: vec!["friis".into(), "nakagami".into()],
        seeds: Some(seeds),
        protocols: protocols.to_vec(),
    };
    let out = run_sweep(&spec, opts)?;
    let mut deltas: Vec<ChannelDelta> = Vec::new();
    for &p in protocols {
        if deltas.iter().any(|d| d.protocol == p) {
            continue;
        }
        let f = out.row("friis", p).expect("friis row").mean_pdr;
        let n = out.row("nakagami", p).expect("nakagami row").mean_pdr;
        deltas.push(ChannelDelta { protocol: p, friis_mean_pdr: f, nakagami_mean_pdr: n, pdr_drop: f - n });
    }
    Ok(Comparison { rows: out.rows, deltas })
}

/// The four combinations of steering and waypoint information, as values for
/// a sweep over the `prediction` section. Extrapolation stays on as the
/// fallback in all of them.
pub fn information_configs() -> Vec<(&'static str, serde_json::Value)> {
    [
        ("extrapolation-only", false, false),
        ("waypoints", false, true),
        ("steering", true, false),
        ("steering+waypoints", true, true),
    ]
    .into_iter()
    .map(|(name, s, w)| (name, serde_json::json!({ "use_steering": s, "use_waypoints": w })))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tiny() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk_scale();
        c.agents = 3;
        c.duration = 8.0;
        c.traffic.start_time = 1.0;
        c.seeds = 2;
        c
    }

    #[test]
    fn single_value_single_seed_collapses() {
        let mut spec = SweepSpec::new(tiny(), "prediction.horizon_steps", vec![json!(15)]);
        spec.seeds = Some(1);
        let out = run_sweep(&spec, &RunOptions::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        let r = &out.rows[0];
        assert_eq!((r.n, r.ci_low, r.ci_high), (1, r.mean_pdr, r.mean_pdr));
    }

    #[test]
    fn csv_header_and_quoting() {
        let rows = vec![SweepRow {
            param_value: "{\"a\":1,\"b\":2}".into(),
            protocol: Protocol::Batmobile,
            mean_pdr: 0.5,
            std: 0.0,
            ci_low: 0.5,
            ci_high: 0.5,
            n: 1,
        }];
        let csv = rows_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("param_value,protocol,mean_pdr,std,ci_low,ci_high,n"));
        assert_eq!(lines.next(), Some("\"{\"\"a\"\":1,\"\"b\"\":2}\",batmobile,0.5,0.0,0.5,0.5,1"));
    }

    #[test]
    fn bad_parameter_is_rejected_before_running() {
        let spec = SweepSpec::new(tiny(), "prediction.nonsense", vec![json!(1)]);
        assert!(matches!(run_sweep(&spec, &RunOptions::default()), Err(ExperimentError::Config(_))));
        let spec = SweepSpec::new(tiny(), "gnss.max_error", vec![json!("far")]);
        assert!(run_sweep(&spec, &RunOptions::default()).is_err());
    }

    #[test]
    fn identical_protocols_give_identical_rows() {
        let cmp = compare_protocols(
            &tiny(),
            &[Protocol::Batmobile, Protocol::Batmobile],
            2,
            &RunOptions::default(),
        )
        .unwrap();
        let rows: Vec<_> = cmp.rows.iter().filter(|r| r.param_value == "friis").collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], rows[1]);
        assert_eq!(cmp.deltas.len(), 1);
    }

    #[test]
    fn comparison_needs_two_protocols() {
        assert!(compare_protocols(&tiny(), &[Protocol::Batmobile], 1, &RunOptions::default()).is_err());
    }

    #[test]
    fn information_configs_apply() {
        for (_, v) in information_configs() {
            let c = tiny().with_field("prediction", v.clone()).unwrap();
            assert_eq!(json!(c.prediction.use_steering), v["use_steering"]);
            assert_eq!(c.prediction.horizon_steps, tiny().prediction.horizon_steps);
        }
    }

    #[test]
    fn sweep_spec_toml() {
        let spec = SweepSpec::from_toml_str(
            "parameter = \"gnss.max_error\"\nvalues = [0, 60]\nseeds = 3\nprotocols = [\"batmobile\"]\n[base]\nagents = 4\n",
        )
        .unwrap();
        assert_eq!(spec.base.agents, 4);
        assert_eq!(spec.seed_list().len(), 3);
        assert_eq!(spec.scenarios().unwrap()[1].gnss.max_error, 60.0);
    }
}
