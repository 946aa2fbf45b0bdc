//! Config-driven experiment runner.
//!
//! An experiment is one JSON document:
//!
//! ```json
//! {
//!   "mode": "train",
//!   "feature": {"activation": "relu", "envelope": "constant_one",
//!               "box": {"lower": [0, 0], "upper": [1, 1]},
//!               "input_dim": 1, "output_dim": 1},
//!   "solver": {"lambda": 1.0},
//!   "dataset_path": "data.csv",
//!   "output_dir": "out",
//!   "seed": 0
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{GrkbsError, Result};
use crate::feature::{ConfigurationMap, FeatureMapConfig};
use crate::pde::{convergence_study, DiscreteEllipticOperator, EllipticProblem, PmannMap};
use crate::quotient::verification_suite;
use crate::solver::{solve_atp_observed, SearchSpace, SolverOptions, SparseSolution, TrainingSet};

pub const SEED_ENV: &str = "GRKBS_SEED";

pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const QUOTIENT_REPORT_FILE: &str = "quotient_report.json";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    TrainPmann,
    VerifyQuotient,
    PdeConvergence,
}

/// A coefficient given either as one constant or as samples at the grid
/// nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Samples(Vec<f64>),
}

impl Coefficient {
    fn constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Samples(_) => None,
        }
    }

    fn samples(&self, grid_points: usize) -> Vec<f64> {
        match self {
            Coefficient::Constant(c) => vec![*c; grid_points],
            Coefficient::Samples(s) => s.clone(),
        }
    }
}

fn one() -> Coefficient {
    Coefficient::Constant(1.0)
}

fn default_length() -> f64 {
    1.0
}

fn default_grids() -> Vec<usize> {
    vec![101, 201]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    #[serde(default = "default_length")]
    pub length: f64,
    pub grid_points: usize,
    #[serde(default = "one")]
    pub k: Coefficient,
    #[serde(default = "one")]
    pub a: Coefficient,
    /// Number of eigenfunctions kept by the projection; also the output
    /// dimension of the composed map.
    #[serde(default)]
    pub basis_count: usize,
    /// Grid sizes for `pde_convergence`.
    #[serde(default = "default_grids")]
    pub convergence_grids: Vec<usize>,
}

impl PdeConfig {
    pub fn problem(&self) -> Result<EllipticProblem> {
        let m = self.grid_points;
        EllipticProblem::from_samples(self.length, self.k.samples(m), self.a.samples(m))
    }
}

fn default_instances() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
}

impl Default for QuotientConfig {
    fn default() -> Self {
        Self {
            instances: default_instances(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub feature: Option<FeatureMapConfig>,
    #[serde(default)]
    pub pde: Option<PdeConfig>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub quotient: QuotientConfig,
    #[serde(default)]
    pub dataset_path: Option<String>,
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| GrkbsError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| GrkbsError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &str| -> String {
            let p = Path::new(p);
            if p.is_absolute() {
                p.display().to_string()
            } else {
                base.join(p).display().to_string()
            }
        };
        if let Some(d) = &self.dataset_path {
            self.dataset_path = Some(resolve(d));
        }
        self.output_dir = resolve(&self.output_dir);
    }

    /// Replaces the seed with the decimal value of `GRKBS_SEED` if set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) => self.apply_seed_override(Some(&v)),
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(e) => Err(GrkbsError::Config(format!("{SEED_ENV}: {e}"))),
        }
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| {
                GrkbsError::Config(format!("{SEED_ENV} must be a decimal integer, got {v:?}"))
            })?;
        }
        Ok(())
    }

    /// Checks that every block the mode needs is present and consistent.
    pub fn validate(&self) -> Result<()> {
        if self.output_dir.is_empty() {
            return Err(GrkbsError::Config("output_dir is empty".into()));
        }
        self.solver.validate()?;
        match self.mode {
            Mode::Train | Mode::TrainPmann => {
                self.feature_block()?;
                match &self.dataset_path {
                    Some(p) if !p.is_empty() => {}
                    _ => {
                        return Err(GrkbsError::Config(format!(
                            "mode {:?} needs dataset_path",
                            self.mode
                        )))
                    }
                }
                if self.mode == Mode::TrainPmann {
                    let pde = self.pde_block()?;
                    if pde.basis_count == 0 || pde.basis_count > pde.grid_points {
                        return Err(GrkbsError::Config(format!(
                            "pde.basis_count must be in 1..={}, got {}",
                            pde.grid_points, pde.basis_count
                        )));
                    }
                    pde.problem()?;
                }
            }
            Mode::VerifyQuotient => {
                if self.quotient.instances == 0 {
                    return Err(GrkbsError::Config(
                        "quotient.instances must be positive".into(),
                    ));
                }
            }
            Mode::PdeConvergence => {
                let pde = self.pde_block()?;
                if pde.k.constant().is_none() || pde.a.constant().is_none() {
                    return Err(GrkbsError::Config(
                        "pde_convergence needs constant k and a".into(),
                    ));
                }
                if pde.convergence_grids.len() < 2 {
                    return Err(GrkbsError::Config(
                        "pde.convergence_grids needs at least two sizes".into(),
                    ));
                }
                for &m in &pde.convergence_grids {
                    EllipticProblem::constant(pde.length, m, 1.0, 1.0)?;
                }
                pde.problem()?;
            }
        }
        Ok(())
    }

    fn feature_block(&self) -> Result<&FeatureMapConfig> {
        self.feature.as_ref().ok_or_else(|| {
            GrkbsError::Config(format!("mode {:?} needs a feature block", self.mode))
        })
    }

    fn pde_block(&self) -> Result<&PdeConfig> {
        self.pde
            .as_ref()
            .ok_or_else(|| GrkbsError::Config(format!("mode {:?} needs a pde block", self.mode)))
    }

    fn options(&self) -> SolverOptions {
        SolverOptions {
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    /// The composed map of a `train_pmann` config.
    pub fn pmann_map(&self) -> Result<PmannMap> {
        let pde = self.pde_block()?;
        let op = DiscreteEllipticOperator::assemble(pde.problem()?);
        let basis = op.eigenbasis(pde.basis_count)?;
        PmannMap::new(self.feature_block()?.clone(), op, basis)
    }

    /// Output dimension the dataset must have.
    pub fn target_dim(&self) -> Result<usize> {
        match self.mode {
            Mode::TrainPmann => Ok(self.pde_block()?.basis_count),
            _ => Ok(self.feature_block()?.output_dim()),
        }
    }

    pub fn load_training_set(&self) -> Result<TrainingSet> {
        let path = self
            .dataset_path
            .as_ref()
            .ok_or_else(|| GrkbsError::Config("dataset_path missing".into()))?;
        load_dataset(
            Path::new(path),
            self.feature_block()?.input_dim(),
            self.target_dim()?,
        )
    }
}

/// Reads a CSV file with header `x1,…,xn,y1,…,ym`.
pub fn load_dataset(path: &Path, input_dim: usize, output_dim: usize) -> Result<TrainingSet> {
    let file = fs::File::open(path)
        .map_err(|e| GrkbsError::Dataset(format!("cannot open dataset {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let expected = dataset_header(input_dim, output_dim);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(GrkbsError::Dataset("line 1: missing header".into())),
        Some(r) => r.map_err(|e| GrkbsError::Dataset(format!("line 1: {e}")))?,
    };
    for (k, want) in expected.iter().enumerate() {
        if header.get(k) != Some(want.as_str()) {
            return Err(GrkbsError::Dataset(format!(
                "header mismatch at column {}: expected {want:?}, found {:?}",
                k + 1,
                header.get(k).unwrap_or("")
            )));
        }
    }
    if header.len() != expected.len() {
        return Err(GrkbsError::Dataset(format!(
            "header mismatch at column {}: expected {} columns, found {}",
            expected.len().min(header.len()) + 1,
            expected.len(),
            header.len()
        )));
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in records {
        let record = record.map_err(|e| GrkbsError::Dataset(format!("malformed row: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(GrkbsError::Dataset(format!(
                "line {line}: dimension mismatch, expected {} fields, found {}",
                expected.len(),
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(record.len());
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                GrkbsError::Dataset(format!(
                    "line {line}: malformed value {field:?} in column {}",
                    k + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(GrkbsError::Dataset(format!(
                    "line {line}: non-finite value in column {}",
                    k + 1
                )));
            }
            values.push(v);
        }
        let y = values.split_off(input_dim);
        xs.push(values);
        ys.push(y);
    }
    if xs.is_empty() {
        return Err(GrkbsError::Dataset(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    TrainingSet::new(xs, ys)
}

fn dataset_header(input_dim: usize, output_dim: usize) -> Vec<String> {
    (1..=input_dim)
        .map(|i| format!("x{i}"))
        .chain((1..=output_dim).map(|i| format!("y{i}")))
        .collect()
}

/// Writes a training set in the format read by [`load_dataset`]. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_dataset(path: &Path, data: &TrainingSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(dataset_header(data.input_dim(), data.output_dim()))?;
    for (x, y) in data.xs().iter().zip(data.ys()) {
        w.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub objective: f64,
    pub atom_count: usize,
    pub certificate_sup: f64,
    pub wall_ms: u64,
}

/// One JSON object per line.
pub fn emit_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    NotConverged,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::NotConverged => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub report: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
}

/// Runs the experiment and writes its artifacts into `output_dir`.
///
/// A failing quotient check is reported as an error after the report file
/// has been written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = Path::new(&cfg.output_dir);
    fs::create_dir_all(out)?;
    match cfg.mode {
        Mode::Train => {
            let feature = cfg.feature_block()?;
            train(cfg, feature, out, json!({}))
        }
        Mode::TrainPmann => {
            let map = cfg.pmann_map()?;
            let extra = json!({
                "eigenvalues": map.basis().values(),
                "response": map.response(),
            });
            train(cfg, &map, out, extra)
        }
        Mode::VerifyQuotient => verify_quotient(cfg, out),
        Mode::PdeConvergence => pde_convergence(cfg, out),
    }
}

fn train(
    cfg: &ExperimentConfig,
    map: &impl ConfigurationMap,
    out: &Path,
    extra: serde_json::Value,
) -> Result<RunOutcome> {
    let data = cfg.load_training_set()?;
    let opts = cfg.options();
    let start = Instant::now();
    let mut records = Vec::new();
    let solution = solve_atp_observed(map, &data, &opts, &SearchSpace::Box, |r| {
        records.push(MetricsRecord {
            step: r.step,
            objective: r.objective,
            atom_count: r.atom_count,
            certificate_sup: r.certificate_sup,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    })?;
    let wall_ms = start.elapsed().as_millis() as u64;

    let model = out.join(MODEL_FILE);
    write_model(&model, &solution)?;
    let metrics = out.join(METRICS_FILE);
    emit_metrics(&records, &metrics)?;

    let report = json!({
        "mode": cfg.mode,
        "seed": cfg.seed,
        "objective": solution.objective,
        "atom_count": solution.atom_count,
        "bound_mN": solution.bound_mn,
        "within_bound": solution.within_bound(),
        "certificate_sup": solution.certificate_sup,
        "converged": solution.converged,
        "iterations": records.len(),
        "tv_norm": solution.measure.tv_norm(),
        "wall_ms": wall_ms,
        "details": extra,
    });
    let report_path = out.join(REPORT_FILE);
    write_json(&report_path, &report)?;
    let status = if solution.converged {
        RunStatus::Success
    } else {
        RunStatus::NotConverged
    };
    Ok(RunOutcome {
        status,
        report,
        artifacts: vec![model, metrics, report_path],
    })
}

/// Serialized model; identical inputs give identical bytes.
pub fn write_model(path: &Path, solution: &SparseSolution) -> Result<()> {
    write_json(path, solution)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn verify_quotient(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let checks = verification_suite(cfg.seed, cfg.quotient.instances)?;
    let path = out.join(QUOTIENT_REPORT_FILE);
    write_json(&path, &checks)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.check.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(GrkbsError::InvalidArgument(format!(
            "quotient checks failed: {}",
            failed.join(", ")
        )));
    }
    Ok(RunOutcome {
        status: RunStatus::Success,
        report: serde_json::to_value(&checks)?,
        artifacts: vec![path],
    })
}

fn pde_convergence(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let pde = cfg.pde_block()?;
    let (k, a) = match (pde.k.constant(), pde.a.constant()) {
        (Some(k), Some(a)) => (k, a),
        _ => {
            return Err(GrkbsError::Config(
                "pde_convergence needs constant k and a".into(),
            ))
        }
    };
    let rows = convergence_study(pde.length, k, a, &pde.convergence_grids)?;
    let path = out.join(CONVERGENCE_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["h", "max_error", "ratio"])?;
    for r in &rows {
        w.write_record([
            r.h.to_string(),
            r.max_error.to_string(),
            r.ratio.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let op = DiscreteEllipticOperator::assemble(pde.problem()?);
    let count = pde.basis_count.clamp(1, op.grid_points());
    let basis = op.eigenbasis(count)?;
    let report = json!({
        "mode": cfg.mode,
        "rows": rows,
        "eigenvalues": basis.values(),
    });
    let report_path = out.join(REPORT_FILE);
    write_json(&report_path, &report)?;
    Ok(RunOutcome {
        status: RunStatus::Success,
        report,
        artifacts: vec![path, report_path],
    })
}

/// Validates a config without running it and summarizes what it would do.
pub fn verify_config(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Train | Mode::TrainPmann => {
            let data = cfg.load_training_set()?;
            if cfg.mode == Mode::TrainPmann {
                cfg.pmann_map()?;
            }
            Ok(format!(
                "ok: {:?}, {} samples, input dim {}, output dim {}",
                cfg.mode,
                data.len(),
                data.input_dim(),
                data.output_dim()
            ))
        }
        Mode::VerifyQuotient => Ok(format!(
            "ok: verify_quotient, {} instances",
            cfg.quotient.instances
        )),
        Mode::PdeConvergence => Ok(format!(
            "ok: pde_convergence on grids {:?}",
            cfg.pde_block()?.convergence_grids
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn two_row_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "x1,y1\n0.5,1\n1.0,2\n");
        let data = load_dataset(&p, 1, 1).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.ys()[1], vec![2.0]);
    }

    #[test]
    fn header_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "x1,x2,y1\n0,0,1\n");
        let err = load_dataset(&p, 1, 2).unwrap_err().to_string();
        assert!(err.contains("header mismatch at column 2"), "{err}");
        let p = write(dir.path(), "e.csv", "x1,y1,extra\n0,0,1\n");
        let err = load_dataset(&p, 1, 1).unwrap_err().to_string();
        assert!(err.contains("header mismatch at column 3"), "{err}");
    }

    #[test]
    fn row_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "x1,y1\n0,1\n0,abc\n");
        let err = load_dataset(&p, 1, 1).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("malformed"), "{err}");
        let p = write(dir.path(), "e.csv", "x1,y1\n0,1\n1,2\n0\n");
        let err = load_dataset(&p, 1, 1).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("dimension"), "{err}");
        let err = load_dataset(&dir.path().join("missing.csv"), 1, 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("cannot open"), "{err}");
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = TrainingSet::new(
            vec![vec![0.1, -1.0 / 3.0], vec![1e-300, 2.5e10]],
            vec![vec![std::f64::consts::PI], vec![-0.0]],
        )
        .unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&p, &data).unwrap();
        let back = load_dataset(&p, 2, 1).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn metrics_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        emit_metrics(&[], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "");
        let recs: Vec<MetricsRecord> = (1..=3)
            .map(|s| MetricsRecord {
                step: s,
                objective: 1.0 / s as f64,
                atom_count: s,
                certificate_sup: 0.1 * s as f64,
                wall_ms: 7,
            })
            .collect();
        emit_metrics(&recs, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with(
            r#"{"step":1,"objective":1.0,"atom_count":1,"certificate_sup":0.1,"wall_ms":7}"#
        ));
        let back: Vec<MetricsRecord> = lines
            .iter()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(back, recs);
    }

    #[test]
    fn metrics_unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_metrics(&[], &dir.path().join("no/such/dir/m.jsonl")).is_err());
    }

    #[test]
    fn seed_override() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(r#"{"mode":"verify_quotient","output_dir":"o","seed":3}"#)
                .unwrap();
        cfg.apply_seed_override(Some("17")).unwrap();
        assert_eq!(cfg.seed, 17);
        assert!(cfg.apply_seed_override(Some("x")).is_err());
        cfg.apply_seed_override(None).unwrap();
        assert_eq!(cfg.seed, 17);
    }

    #[test]
    fn missing_blocks_rejected() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"mode":"train","output_dir":"o"}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(GrkbsError::Config(_))));
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"mode":"pde_convergence","output_dir":"o"}"#).unwrap();
        assert!(cfg.validate().is_err());
        assert!(
            serde_json::from_str::<ExperimentConfig>(r#"{"mode":"fit","output_dir":"o"}"#).is_err()
        );
    }

    #[test]
    fn scalar_training_run() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "d.csv", "x1,y1\n1,1\n");
        let cfg_path = write(
            dir.path(),
            "c.json",
            r#"{"mode":"train",
                "feature":{"activation":"relu","envelope":"constant_one",
                           "box":{"lower":[0,0],"upper":[0.5,0.5]},"input_dim":1,"output_dim":1},
                "dataset_path":"d.csv","output_dir":"out","seed":1}"#,
        );
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.status, RunStatus::Success);
        let obj = outcome.report["objective"].as_f64().unwrap();
        assert!((obj - 0.75).abs() < 1e-6);
        for f in [MODEL_FILE, METRICS_FILE, REPORT_FILE] {
            assert!(dir.path().join("out").join(f).exists());
        }
    }

    #[test]
    fn convergence_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg: ExperimentConfig = serde_json::from_str(
            r#"{"mode":"pde_convergence","pde":{"grid_points":201,"basis_count":2},"output_dir":"o"}"#,
        )
        .unwrap();
        cfg.resolve_paths(dir.path());
        run_experiment(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("o").join(CONVERGENCE_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h,max_error,ratio");
        let ratio: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }
}
