//! Scenario plumbing shared by the command-line front end and the tests:
//! run one config, sweep it over seeds, tabulate costs across a grid.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::ledger::StorageBound;
use crate::analysis::{analyze, Atomicity, Liveness, Report};
use crate::sim::config::{Failures, Mode, OpSpec, ProtocolName, SchedulerSpec, Trigger};
use crate::sim::trace::Trace;
use crate::sim::{self, ConfigError, ScenarioConfig};
use crate::types::OpKind;
use crate::units::{self, format_cost, Cost};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config, {0}")]
    Config(#[from] ConfigError),
    #[error("bad grid: {0}")]
    Grid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(ScenarioConfig::from_json(&text)?)
}

pub fn trace_file_name(id: &str) -> String {
    format!("{id}.trace.jsonl")
}

pub fn report_file_name(id: &str) -> String {
    format!("{id}.report.json")
}

/// Validates, simulates and analyzes a config in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(Trace, Report), ConfigError> {
    let sc = cfg.validate()?;
    let trace = sim::run(&sc);
    let report = analyze(&trace, &trace_file_name(&cfg.id), cfg.expect.as_ref());
    Ok((trace, report))
}

pub fn render_report(r: &Report) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

/// Runs the config at `path` and writes its trace and report into `out`.
pub fn run_scenario(path: &Path, out: &Path, seed: Option<u64>) -> Result<Report, HarnessError> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.scheduler.seed = s;
    }
    let (trace, report) = simulate(&cfg)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let tp = out.join(trace_file_name(&cfg.id));
    fs::write(&tp, trace.to_jsonl()).map_err(io_err(&tp))?;
    let rp = out.join(report_file_name(&cfg.id));
    fs::write(&rp, render_report(&report)).map_err(io_err(&rp))?;
    Ok(report)
}

/// Re-runs the checkers on a trace file.
pub fn check_trace(path: &Path) -> Result<Report, HarnessError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let trace = Trace::read_jsonl(std::io::BufReader::new(f)).map_err(io_err(path))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(analyze(&trace, &name, None))
}

/// Parses `A..B` (half-open) or a single seed.
pub fn parse_seeds(s: &str) -> Option<Range<u64>> {
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (a < b).then_some(a..b)
        }
        None => {
            let a: u64 = s.trim().parse().ok()?;
            Some(a..a + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub protocol: String,
    pub seeds: String,
    pub runs: usize,
    pub passed: usize,
    pub atomicity_violations: usize,
    pub liveness_violations: usize,
    /// Runs outside the liveness hypotheses (unfair, too many crashes,
    /// read concurrency above delta).
    pub liveness_not_applicable: usize,
    pub runs_with_stalls: usize,
    pub budget_exhausted: usize,
    pub max_read_concurrency: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_max: Option<usize>,
    pub storage_bound_violations: usize,
    pub quiescent_storage_bound_violations: usize,
    pub gc_violations: usize,
    #[serde(with = "units::cost_str")]
    pub write_max: Cost,
    #[serde(with = "units::cost_str")]
    pub read_max: Cost,
    #[serde(with = "units::cost_str")]
    pub storage_max: Cost,
    #[serde(with = "units::cost_str")]
    pub write_theory: Cost,
    #[serde(with = "units::cost_str")]
    pub read_theory: Cost,
    pub storage_theory: StorageBound,
    pub write_attained: bool,
    pub read_attained: bool,
    pub failures: Vec<SeedFailure>,
}

impl SweepReport {
    pub fn ok(&self) -> bool {
        self.passed == self.runs
    }
}

const MAX_LISTED_FAILURES: usize = 20;

/// Runs one simulation per seed, in parallel, and folds the reports in seed
/// order. Expectations in the template are ignored: they describe one
/// schedule, not all of them.
pub fn sweep_reports(cfg: &ScenarioConfig, seeds: Range<u64>) -> Result<Vec<Report>, ConfigError> {
    let mut template = cfg.clone();
    template.expect = None;
    template.validate()?;
    Ok(seeds
        .into_par_iter()
        .map(|seed| {
            let mut c = template.clone();
            c.scheduler.seed = seed;
            simulate(&c).expect("validated template").1
        })
        .collect())
}

pub fn sweep(cfg: &ScenarioConfig, seeds: Range<u64>) -> Result<SweepReport, ConfigError> {
    let label = format!("{}..{}", seeds.start, seeds.end);
    let reports = sweep_reports(cfg, seeds)?;
    Ok(summarize(cfg, &label, &reports))
}

pub fn summarize(cfg: &ScenarioConfig, seeds: &str, reports: &[Report]) -> SweepReport {
    let theory = reports.first().map(|r| r.theory.clone());
    let max = |f: &dyn Fn(&Report) -> Cost| reports.iter().map(f).max().unwrap_or_else(units::zero);
    let write_max = max(&|r| r.ledger.write_sup);
    let read_max = max(&|r| r.ledger.read_sup);
    let supers = || reports.iter().filter_map(|r| r.supersession.as_ref());
    SweepReport {
        scenario: cfg.id.clone(),
        protocol: reports.first().map(|r| r.protocol.clone()).unwrap_or_default(),
        seeds: seeds.into(),
        runs: reports.len(),
        passed: reports.iter().filter(|r| r.passed).count(),
        atomicity_violations: reports.iter().filter(|r| !matches!(r.atomicity, Atomicity::Atomic)).count(),
        liveness_violations: reports.iter().filter(|r| r.liveness.is_violation()).count(),
        liveness_not_applicable: reports
            .iter()
            .filter(|r| matches!(r.liveness, Liveness::NotApplicable { .. }))
            .count(),
        runs_with_stalls: reports.iter().filter(|r| !r.liveness.stalled().is_empty()).count(),
        budget_exhausted: reports
            .iter()
            .filter(|r| r.halt == crate::sim::trace::HaltReason::BudgetExhausted)
            .count(),
        max_read_concurrency: reports
            .iter()
            .flat_map(|r| r.concurrency.iter().map(|c| c.count()))
            .max()
            .unwrap_or(0),
        w_max: supers().map(|s| s.w_max).max(),
        storage_bound_violations: supers().map(|s| s.bound_violations.len()).sum(),
        quiescent_storage_bound_violations: supers().map(|s| s.quiescent_bound_violations()).sum(),
        gc_violations: supers().map(|s| s.gc_violations.len()).sum(),
        write_max,
        read_max,
        storage_max: max(&|r| r.ledger.storage_sup),
        write_theory: theory.as_ref().map_or_else(units::zero, |t| t.write),
        read_theory: theory.as_ref().map_or_else(units::zero, |t| t.read),
        storage_theory: theory.as_ref().map_or(StorageBound::Unbounded, |t| t.storage),
        write_attained: theory.as_ref().is_some_and(|t| t.write == write_max),
        read_attained: theory.as_ref().is_some_and(|t| t.read == read_max),
        failures: reports
            .iter()
            .filter(|r| !r.passed)
            .take(MAX_LISTED_FAILURES)
            .map(|r| SeedFailure {
                seed: r.seed,
                reasons: r.failures(),
            })
            .collect(),
    }
}

/// The `(n, f)` grid of a cost table, plus the CASGC `delta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub n: Vec<usize>,
    pub f: Vec<usize>,
    pub delta: usize,
    pub seeds: u64,
}

fn parse_list(key: &str, s: &str) -> Result<Vec<usize>, HarnessError> {
    let bad = || HarnessError::Grid(format!("`{key}={s}` is not a list or an inclusive range"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        return if a <= b { Ok((a..=b).collect()) } else { Err(bad()) };
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

impl Grid {
    /// `n=4..7;f=1,2;delta=1;seeds=8`. Ranges are inclusive; `delta`
    /// defaults to 1 and `seeds` (runs per row) to 8.
    pub fn parse(spec: &str) -> Result<Self, HarnessError> {
        let mut g = Grid {
            n: Vec::new(),
            f: Vec::new(),
            delta: 1,
            seeds: 8,
        };
        for part in spec.split([';', '\n']).map(str::trim).filter(|p| !p.is_empty() && !p.starts_with('#')) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| HarnessError::Grid(format!("`{part}` is not key=value")))?;
            let v = parse_list(k.trim(), v.trim())?;
            match k.trim() {
                "n" => g.n = v,
                "f" => g.f = v,
                "delta" | "seeds" => {
                    let [x] = v[..] else {
                        return Err(HarnessError::Grid(format!("`{k}` takes one value")));
                    };
                    if k.trim() == "delta" {
                        g.delta = x;
                    } else {
                        g.seeds = x as u64;
                    }
                }
                other => return Err(HarnessError::Grid(format!("unknown key `{other}`"))),
            }
        }
        if g.n.is_empty() || g.f.is_empty() {
            return Err(HarnessError::Grid("both n and f are required".into()));
        }
        if g.seeds == 0 {
            return Err(HarnessError::Grid("seeds must be positive".into()));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub k: usize,
    pub delta: Option<usize>,
    pub write_theory: Cost,
    pub write_sim: Cost,
    pub read_theory: Cost,
    pub read_sim: Cost,
    pub storage_theory: StorageBound,
    pub storage_sup: Cost,
}

/// A failure-free workload: two writers and a reader, each write followed
/// by reads, under random interleavings.
pub fn table_workload(protocol: ProtocolName, n: usize, f: usize, k: Option<usize>, delta: Option<usize>) -> ScenarioConfig {
    let op = |client: &str, kind: OpKind| OpSpec {
        client: client.into(),
        kind,
        value: None,
        at: 0,
        after: None,
    };
    ScenarioConfig {
        id: format!("table_{}_n{n}_f{f}", protocol.as_str()),
        protocol,
        n,
        f,
        k,
        delta,
        directory_count: None,
        replica_count: None,
        value_length: 12,
        clients: vec!["w1".into(), "w2".into(), "r1".into()],
        ops: vec![
            op("w1", OpKind::Write),
            op("w2", OpKind::Write),
            op("r1", OpKind::Read),
            op("w1", OpKind::Write),
            op("r1", OpKind::Read),
            OpSpec {
                after: Some(Trigger::Quiescent),
                ..op("r1", OpKind::Read)
            },
        ],
        failures: Failures::default(),
        scheduler: SchedulerSpec {
            mode: Mode::SeededRandom,
            seed: 0,
            script: Vec::new(),
        },
        step_budget: sim::config::DEFAULT_STEP_BUDGET,
        expect: None,
    }
}

/// One row per protocol per valid `(n, f)`: CAS and CASGC use `k = n - 2f`;
/// LDR uses `2f + 1` replicas and the remaining servers as directories, and
/// is skipped when none remain.
pub fn cost_table(grid: &Grid) -> Vec<CostRow> {
    let mut configs = Vec::new();
    for &n in &grid.n {
        for &f in &grid.f {
            if n <= 2 * f {
                continue;
            }
            let k = n - 2 * f;
            configs.push(table_workload(ProtocolName::Cas, n, f, Some(k), None));
            configs.push(table_workload(ProtocolName::Casgc, n, f, Some(k), Some(grid.delta)));
            configs.push(table_workload(ProtocolName::Ccoas, n, f, None, None));
            configs.push(table_workload(ProtocolName::Abd, n, f, None, None));
            if n > 2 * f + 1 {
                configs.push(table_workload(ProtocolName::Ldr, n, f, None, None));
            }
        }
    }
    configs
        .iter()
        .filter(|c| c.validate().is_ok())
        .map(|c| {
            let reports = sweep_reports(c, 0..grid.seeds).expect("validated");
            let s = summarize(c, "", &reports);
            let r = &reports[0];
            CostRow {
                protocol: r.protocol.clone(),
                n: r.n,
                f: r.f,
                k: r.k,
                delta: r.delta,
                write_theory: s.write_theory,
                write_sim: s.write_max,
                read_theory: s.read_theory,
                read_sim: s.read_max,
                storage_theory: s.storage_theory,
                storage_sup: s.storage_max,
            }
        })
        .collect()
}

pub fn table_csv(rows: &[CostRow]) -> String {
    let mut out = String::from(
        "protocol,n,f,k,delta,write_theory,write_sim,read_theory,read_sim,storage_theory,storage_sup\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.protocol,
            r.n,
            r.f,
            r.k,
            r.delta.map(|d| d.to_string()).unwrap_or_default(),
            format_cost(&r.write_theory),
            format_cost(&r.write_sim),
            format_cost(&r.read_theory),
            format_cost(&r.read_sim),
            r.storage_theory,
            format_cost(&r.storage_sup),
        )
        .expect("writing to a string");
    }
    out
}
