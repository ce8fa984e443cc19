//! Benchmark campaigns: generate → reduce → evaluate over an instance ×
//! method × K grid, resumable through per-cell records.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use cssc_core::cssc::{build_matrix, MatrixSidecar, OpportunityCostMatrix};
use cssc_core::evaluation::{
    implementation_error, moment_deltas, solve_original, threshold_table, EvaluationReport, MomentDelta,
    OriginalOptimum,
};
use cssc_core::model::ModelError;
use cssc_core::problems::{generate_flp, generate_ndp, FlpSpec, Instance, NdpSpec};
use cssc_core::seed::derive_seed;
use cssc_solver::SolverLimits;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::methods::{reduce, Method, ReduceOptions};
use crate::store::{read_json, write_atomic, write_json};

/// Generator of one problem family. The seed inside its parameters is replaced
/// by the derived per-instance seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Ndp(NdpSpec),
    Flp(FlpSpec),
}

impl GeneratorSpec {
    pub fn family(&self) -> &'static str {
        match self {
            GeneratorSpec::Ndp(_) => "ndp",
            GeneratorSpec::Flp(_) => "flp",
        }
    }

    pub fn scenarios(&self) -> usize {
        match self {
            GeneratorSpec::Ndp(s) => s.scenarios,
            GeneratorSpec::Flp(s) => s.scenarios,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Instance, ModelError> {
        Ok(match self {
            GeneratorSpec::Ndp(s) => Instance::Ndp(generate_ndp(&NdpSpec { seed, ..s.clone() })?),
            GeneratorSpec::Flp(s) => Instance::Flp(generate_flp(&FlpSpec { seed, ..s.clone() })?),
        })
    }
}

/// `{family}-{seed}-{index}`, the stem of generated instance files.
pub fn instance_name(family: &str, master_seed: u64, index: usize) -> String {
    format!("{family}-{master_seed}-{index}")
}

pub fn instance_seed(master_seed: u64, family: &str, index: usize) -> u64 {
    derive_seed(master_seed, family, index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub generator: GeneratorSpec,
    pub instances: usize,
    pub k_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Per-solve wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub max_nodes: usize,
}

impl CampaignSpec {
    pub fn limits(&self) -> SolverLimits {
        let mut limits = SolverLimits { max_nodes: self.max_nodes, ..SolverLimits::default() };
        limits.time_limit = self.time_limit.map(Duration::from_secs_f64);
        limits
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.generator.scenarios();
        if let Some(k) = self.k_grid.iter().find(|&&k| k == 0 || k > n) {
            bail!("K = {k} outside 1..={n}");
        }
        if self.methods.is_empty() || self.k_grid.is_empty() || self.instances == 0 {
            bail!("empty campaign grid");
        }
        let probe = self.generator.generate(instance_seed(self.master_seed, self.generator.family(), 0))?;
        for m in &self.methods {
            m.check_domain(probe.scenarios().domain())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Done,
    Failed,
}

/// Outcome of one (instance, method, K) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub instance: String,
    pub method: Method,
    pub k: usize,
    pub status: CellStatus,
    pub error: Option<String>,
    pub report: Option<EvaluationReport>,
    pub moments: Option<MomentDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub instance: String,
    pub method: Method,
    pub k: usize,
    pub status: CellStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub records: Vec<CellRecord>,
    /// Cells computed by this run; the rest were read back from disk.
    pub computed: usize,
}

impl CampaignOutcome {
    pub fn reports(&self) -> Vec<EvaluationReport> {
        self.records.iter().filter_map(|r| r.report.clone()).collect()
    }
}

fn cell_path(dir: &Path, instance: &str, method: Method, k: usize) -> PathBuf {
    dir.join("cells").join(format!("{instance}-{}-K{k}.json", method.name()))
}

/// Runs every missing cell and rewrites the aggregate outputs: `manifest.json`,
/// `reports.csv`, `boxplot.csv`, `thresholds.csv` and, for network design,
/// `moments.csv`.
pub fn run_campaign(spec: &CampaignSpec, dir: &Path) -> Result<CampaignOutcome> {
    spec.validate()?;
    write_json(&dir.join("spec.json"), spec)?;
    let family = spec.generator.family();
    let per_instance: Vec<Result<(Vec<CellRecord>, usize)>> =
        (0..spec.instances).into_par_iter().map(|index| run_instance(spec, dir, family, index)).collect();
    let mut records = Vec::new();
    let mut computed = 0;
    for r in per_instance {
        let (recs, c) = r?;
        records.extend(recs);
        computed += c;
    }
    write_aggregates(spec, dir, &records)?;
    Ok(CampaignOutcome { records, computed })
}

fn run_instance(spec: &CampaignSpec, dir: &Path, family: &str, index: usize) -> Result<(Vec<CellRecord>, usize)> {
    let name = instance_name(family, spec.master_seed, index);
    let seed = instance_seed(spec.master_seed, family, index);
    let mut cells = Vec::new();
    let mut pending = Vec::new();
    for &method in &spec.methods {
        for &k in &spec.k_grid {
            let path = cell_path(dir, &name, method, k);
            match read_json::<CellRecord>(&path) {
                Ok(rec) if rec.status == CellStatus::Done => cells.push(Some(rec)),
                _ => {
                    cells.push(None);
                    pending.push((cells.len() - 1, method, k));
                }
            }
        }
    }
    if pending.is_empty() {
        return Ok((cells.into_iter().flatten().collect(), 0));
    }

    let limits = spec.limits();
    let instance_path = dir.join("instances").join(format!("{name}.json"));
    let instance = match read_json::<Instance>(&instance_path) {
        Ok(inst) => inst,
        Err(_) => {
            let inst = spec.generator.generate(seed)?;
            write_atomic(&instance_path, inst.to_json().as_bytes())?;
            inst
        }
    };
    let original = cached_original(dir, &name, &instance, &limits);
    let matrix =
        if spec.methods.contains(&Method::Cssc) { Some(cached_matrix(dir, &name, &instance, &limits)) } else { None };

    for (slot, method, k) in pending.iter().copied() {
        let record = run_cell(&instance, &name, method, k, seed, &limits, &original, matrix.as_ref());
        write_json(&cell_path(dir, &name, method, k), &record)?;
        cells[slot] = Some(record);
    }
    Ok((cells.into_iter().flatten().collect(), pending.len()))
}

fn cached_original(
    dir: &Path,
    name: &str,
    instance: &Instance,
    limits: &SolverLimits,
) -> Result<OriginalOptimum, String> {
    let path = dir.join("optima").join(format!("{name}.json"));
    if let Ok(o) = read_json::<OriginalOptimum>(&path) {
        return Ok(o);
    }
    let o = solve_original(instance.problem(), limits).map_err(|e| e.to_string())?;
    write_json(&path, &o).map_err(|e| e.to_string())?;
    Ok(o)
}

fn cached_matrix(
    dir: &Path,
    name: &str,
    instance: &Instance,
    limits: &SolverLimits,
) -> Result<OpportunityCostMatrix, String> {
    let csv = dir.join("matrices").join(format!("{name}.csv"));
    let side = dir.join("matrices").join(format!("{name}.json"));
    if let (Ok(text), Ok(sidecar)) = (std::fs::read_to_string(&csv), read_json::<MatrixSidecar>(&side)) {
        if let Ok(m) =
            OpportunityCostMatrix::parse_csv(&text).and_then(|v| OpportunityCostMatrix::from_parts(v, sidecar))
        {
            return Ok(m);
        }
    }
    let problem = instance.problem();
    let m = build_matrix(problem, problem.default_mode(), limits).map_err(|e| e.to_string())?;
    save_matrix(&csv, &side, &m).map_err(|e| e.to_string())?;
    Ok(m)
}

pub fn save_matrix(csv: &Path, sidecar: &Path, m: &OpportunityCostMatrix) -> Result<()> {
    write_atomic(csv, m.to_csv().as_bytes())?;
    write_json(sidecar, &m.sidecar())
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    instance: &Instance,
    name: &str,
    method: Method,
    k: usize,
    seed: u64,
    limits: &SolverLimits,
    original: &Result<OriginalOptimum, String>,
    matrix: Option<&Result<OpportunityCostMatrix, String>>,
) -> CellRecord {
    let failed = |error: String| CellRecord {
        instance: name.to_string(),
        method,
        k,
        status: CellStatus::Failed,
        error: Some(error),
        report: None,
        moments: None,
    };
    let original = match original {
        Ok(o) => o,
        Err(e) => return failed(format!("original problem: {e}")),
    };
    let matrix = match matrix {
        Some(Ok(m)) => Some(m),
        Some(Err(e)) if method == Method::Cssc => return failed(format!("opportunity-cost matrix: {e}")),
        _ => None,
    };
    let mut opts = ReduceOptions::new(k, derive_seed(seed, method.name(), k as u64));
    opts.limits = limits.clone();
    let reduction = match reduce(instance, method, &opts, matrix) {
        Ok(r) => r,
        Err(e) => return failed(format!("reduction: {e}")),
    };
    let mut report = match implementation_error(instance.problem(), original, &reduction.reduced, limits) {
        Ok(r) => r,
        Err(e) => return failed(format!("evaluation: {e}")),
    };
    report.instance = name.to_string();
    report.timings.reduce_seconds = reduction.seconds;
    let moments = matches!(instance, Instance::Ndp(_)).then(|| moment_deltas(instance.scenarios(), &reduction.reduced));
    CellRecord {
        instance: name.to_string(),
        method,
        k,
        status: CellStatus::Done,
        error: None,
        report: Some(report),
        moments,
    }
}

/// Thresholds of the summary table, in percent.
pub const THRESHOLDS: [f64; 2] = [10.0, 2.0];

fn write_aggregates(spec: &CampaignSpec, dir: &Path, records: &[CellRecord]) -> Result<()> {
    let manifest: Vec<ManifestEntry> = records
        .iter()
        .map(|r| ManifestEntry {
            instance: r.instance.clone(),
            method: r.method,
            k: r.k,
            status: r.status,
            error: r.error.clone(),
        })
        .collect();
    write_json(&dir.join("manifest.json"), &manifest)?;

    let reports: Vec<EvaluationReport> = records.iter().filter_map(|r| r.report.clone()).collect();
    let mut csv = String::from(EvaluationReport::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_atomic(&dir.join("reports.csv"), csv.as_bytes())?;

    let mut boxplot = String::from("method,k,instance,score_pct\n");
    for r in &reports {
        let score = r.score_pct().map(|s| format!("{s:?}")).unwrap_or_default();
        writeln!(boxplot, "{},{},{},{score}", r.method, r.k, r.instance)?;
    }
    write_atomic(&dir.join("boxplot.csv"), boxplot.as_bytes())?;

    let mut table = String::from("method,k,instances");
    for t in THRESHOLDS {
        write!(table, ",within_{t}pct")?;
    }
    table.push('\n');
    for row in threshold_table(&reports, &THRESHOLDS) {
        write!(table, "{},{},{}", row.method, row.k, row.instances)?;
        for w in row.within {
            write!(table, ",{w:?}")?;
        }
        table.push('\n');
    }
    write_atomic(&dir.join("thresholds.csv"), table.as_bytes())?;

    if matches!(spec.generator, GeneratorSpec::Ndp(_)) {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        let mut moments = String::from("instance,method,k,mean_delta,std_delta,skewness_delta,kurtosis_delta\n");
        for r in records {
            if let Some(m) = r.moments {
                writeln!(
                    moments,
                    "{},{},{},{:?},{:?},{},{}",
                    r.instance,
                    r.method.name(),
                    r.k,
                    m.mean,
                    m.std,
                    opt(m.skewness),
                    opt(m.kurtosis)
                )?;
            }
        }
        write_atomic(&dir.join("moments.csv"), moments.as_bytes())?;
    }
    Ok(())
}

/// Reads `reports.csv` back without its timing columns, for reproducibility
/// checks.
pub fn reports_without_timings(dir: &Path) -> Result<String> {
    let text = std::fs::read_to_string(dir.join("reports.csv")).context("reading reports.csv")?;
    let header: Vec<&str> = EvaluationReport::CSV_HEADER.split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].ends_with("_seconds")).collect();
    Ok(text
        .lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| cells.get(i).copied().unwrap_or("")).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}
