//! Monte-Carlo experiments: configuration files, orchestration over sweep
//! points and trials, summaries and result files.
//!
//! Every trial draws one geometry and channel from a seed that depends only
//! on `(master seed, sweep index, trial index)`. All methods of a trial see
//! that same realization, and each method draws its own randomness from a
//! seed derived from the channel seed and the method name, so adding or
//! removing a method never changes another method's results.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{exhaustive_as, full_array_reference, n_as, random_as, scmax_as, ExhaustiveOptions, ScmaxParams};
use crate::config::{db_to_linear, dbm_to_watts, SystemConfig};
use crate::cost::{coordination_size, cost_sweep, write_cost_csv, CostInputs, CostMethod, CostRow, SweepVariable};
use crate::dga::{account_messages_until, dga_ra, MessageRecord};
use crate::error::ConfigError;
use crate::ga::{ga_ra, GaParams, GenerationStats};
use crate::model::{make_channel, make_geometry, ChannelRealization};
use crate::power::evaluate_mask;
use crate::seed::{channel_seed, method_seed, rng_from};

/// Selectors a sweep can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    FullArray,
    GaRa,
    DgaRa { n_iters: usize },
    ScmaxAs,
    NAs,
    Random,
    Exhaustive,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::FullArray => "full-array".into(),
            Method::GaRa => "ga-ra".into(),
            Method::DgaRa { n_iters } => format!("dga-ra-{n_iters}"),
            Method::ScmaxAs => "scmax-as".into(),
            Method::NAs => "n-as".into(),
            Method::Random => "random".into(),
            Method::Exhaustive => "exhaustive".into(),
        }
    }

    /// Name used to derive the method's random stream. All iteration counts
    /// of the distributed selector share one stream.
    fn seed_tag(&self) -> &'static str {
        match self {
            Method::FullArray => "full-array",
            Method::GaRa => "ga-ra",
            Method::DgaRa { .. } => "dga-ra",
            Method::ScmaxAs => "scmax-as",
            Method::NAs => "n-as",
            Method::Random => "random",
            Method::Exhaustive => "exhaustive",
        }
    }

    /// Complex channel entries the method moves to the CPU. Methods that
    /// need the whole channel count `M K`; norm and random selection need none.
    fn coordination(&self, cfg: &SystemConfig) -> u64 {
        match self {
            Method::NAs | Method::Random => 0,
            Method::DgaRa { n_iters } => coordination_size(CostMethod::DgaRa, cfg, *n_iters),
            Method::FullArray | Method::GaRa | Method::ScmaxAs | Method::Exhaustive => {
                coordination_size(CostMethod::GaRa, cfg, 0)
            }
        }
    }
}

/// Parses method names from a config file. `dga-ra` expands to one entry per
/// configured iteration count; `dga-ra-<n>` selects a single count.
pub fn parse_methods(names: &[String], dga_iters: &[usize]) -> Result<Vec<Method>, ConfigError> {
    let mut out = Vec::new();
    for name in names {
        let m = name.trim().to_ascii_lowercase();
        match m.as_str() {
            "full-array" | "full" => out.push(Method::FullArray),
            "ga-ra" => out.push(Method::GaRa),
            "scmax-as" => out.push(Method::ScmaxAs),
            "n-as" => out.push(Method::NAs),
            "random" | "random-as" => out.push(Method::Random),
            "exhaustive" => out.push(Method::Exhaustive),
            "dga-ra" => out.extend(dga_iters.iter().map(|&n| Method::DgaRa { n_iters: n })),
            other => match other.strip_prefix("dga-ra-").map(str::parse::<usize>) {
                Some(Ok(n)) => out.push(Method::DgaRa { n_iters: n }),
                _ => return Err(ConfigError::Invalid(format!("unknown method `{name}`"))),
            },
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|m| seen.insert(*m));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub ga: GaParams,
    pub dga: GaParams,
    pub scmax: ScmaxParams,
    pub exhaustive_cap: u64,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    /// System configuration at sweep point `i`.
    pub fn point(&self, i: usize) -> SystemConfig {
        self.sweep_variable.apply(&self.system, self.sweep_values[i])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be >= 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(ConfigError::Invalid("sweep values must not be empty".into()));
        }
        self.ga.validate()?;
        self.dga.validate()?;
        for i in 0..self.sweep_values.len() {
            let cfg = self.point(i);
            cfg.validate().map_err(|e| {
                ConfigError::Invalid(format!(
                    "{} = {}: {e}",
                    self.sweep_variable.name(),
                    self.sweep_values[i]
                ))
            })?;
            if self.methods.contains(&Method::Exhaustive) {
                let per = binomial(cfg.antennas_per_subarray(), cfg.rf_per_subarray());
                let total = per.powi(cfg.num_subarrays as i32);
                if total > self.exhaustive_cap as f64 {
                    return Err(ConfigError::Invalid(format!(
                        "exhaustive search at {} = {} needs {total:.3e} candidates, cap is {}",
                        self.sweep_variable.name(),
                        self.sweep_values[i],
                        self.exhaustive_cap
                    )));
                }
            }
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One method on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub sweep_value: usize,
    pub trial: usize,
    pub se: f64,
    pub runtime_ms: f64,
    pub coordination_size: u64,
    /// Selected antennas as a bit string, subarrays separated by `|`.
    pub mask: String,
}

/// Mean and standard error per (method, sweep value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub sweep_value: usize,
    pub mean_se: f64,
    pub stderr_se: f64,
    pub trials: usize,
    pub mean_runtime_ms: f64,
    pub coordination_size: u64,
}

pub const RESULT_CSV_HEADER: [&str; 7] = [
    "method",
    "sweep_value",
    "mean_se",
    "stderr_se",
    "trials",
    "mean_runtime_ms",
    "coordination_size",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub sweep_variable: SweepVariable,
    pub records: Vec<TrialRecord>,
}

impl ResultTable {
    pub fn empty(sweep_variable: SweepVariable) -> Self {
        Self {
            sweep_variable,
            records: Vec::new(),
        }
    }

    /// Per-trial SE of `method` at `sweep_value`, in trial order.
    pub fn series(&self, method: Method, sweep_value: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.sweep_value == sweep_value)
            .map(|r| r.se)
            .collect()
    }

    /// Summary rows in first-appearance order of (sweep value, method).
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(usize, Method)> = Vec::new();
        for r in &self.records {
            if !keys.contains(&(r.sweep_value, r.method)) {
                keys.push((r.sweep_value, r.method));
            }
        }
        keys.into_iter()
            .map(|(v, m)| {
                let rows: Vec<&TrialRecord> =
                    self.records.iter().filter(|r| r.sweep_value == v && r.method == m).collect();
                let se: Vec<f64> = rows.iter().map(|r| r.se).collect();
                let (mean_se, stderr_se) = mean_stderr(&se);
                SummaryRow {
                    method: m,
                    sweep_value: v,
                    mean_se,
                    stderr_se,
                    trials: rows.len(),
                    mean_runtime_ms: rows.iter().map(|r| r.runtime_ms).sum::<f64>() / rows.len() as f64,
                    coordination_size: rows[0].coordination_size,
                }
            })
            .collect()
    }

    /// Copy with runtimes zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.records {
            r.runtime_ms = 0.0;
        }
        t
    }
}

/// Sample mean and standard error of the mean (`n - 1` normalization).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// A message of a distributed run, tagged with its realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sweep_value: usize,
    pub trial: usize,
    #[serde(flatten)]
    pub message: MessageRecord,
}

#[derive(Debug, Clone, Default)]
pub struct Traces {
    /// GA-RA best/average per generation, one entry per (sweep point, trial).
    pub ga: Vec<(usize, usize, Vec<GenerationStats>)>,
    /// DGA-RA committed SE per iteration.
    pub dga: Vec<(usize, usize, Vec<f64>)>,
    /// Best-of-generation sequences of every local GA run.
    pub dga_local: Vec<Vec<GenerationStats>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub audit: Vec<AuditRecord>,
    pub traces: Traces,
}

/// The realization of trial `trial` at sweep point `index`.
pub fn realization(spec: &ExperimentSpec, index: usize, trial: usize) -> (SystemConfig, ChannelRealization, u64) {
    let cfg = spec.point(index);
    let cs = channel_seed(spec.seed, index, trial);
    let mut rng = rng_from(cs);
    let geo = make_geometry(&cfg, &mut rng);
    let ch = make_channel(&cfg, &geo, &mut rng);
    (cfg, ch, cs)
}

struct TrialOutput {
    records: Vec<TrialRecord>,
    audit: Vec<AuditRecord>,
    ga_trace: Option<Vec<GenerationStats>>,
    dga_trajectory: Option<Vec<f64>>,
    dga_local: Vec<Vec<GenerationStats>>,
}

fn run_trial(spec: &ExperimentSpec, index: usize, trial: usize) -> TrialOutput {
    let (cfg, ch, cs) = realization(spec, index, trial);
    let value = spec.sweep_values[index];
    let mut out = TrialOutput {
        records: Vec::new(),
        audit: Vec::new(),
        ga_trace: None,
        dga_trajectory: None,
        dga_local: Vec::new(),
    };
    let record = |method: Method, se: f64, ms: f64, coord: u64, mask: String| TrialRecord {
        method,
        sweep_value: value,
        trial,
        se,
        runtime_ms: ms,
        coordination_size: coord,
        mask,
    };

    let max_iters = spec
        .methods
        .iter()
        .filter_map(|m| match m {
            Method::DgaRa { n_iters } => Some(*n_iters),
            _ => None,
        })
        .max();
    // one distributed run serves every requested iteration count
    let dga = max_iters.map(|n| {
        let mut rng = rng_from(method_seed(cs, "dga-ra"));
        let start = Instant::now();
        let o = dga_ra(&ch, &cfg, &spec.dga, n, &mut rng);
        (o, start.elapsed().as_secs_f64() * 1e3)
    });

    for &method in &spec.methods {
        let mut rng = rng_from(method_seed(cs, method.seed_tag()));
        let start = Instant::now();
        let ms = |start: Instant| start.elapsed().as_secs_f64() * 1e3;
        match method {
            Method::FullArray => {
                let se = full_array_reference(&ch, &cfg);
                out.records.push(record(method, se, ms(start), method.coordination(&cfg), String::new()));
            }
            Method::GaRa => {
                let o = ga_ra(&ch, &cfg, &spec.ga, &mut rng);
                out.records.push(record(method, o.se, ms(start), method.coordination(&cfg), o.mask.to_bit_string()));
                out.ga_trace = Some(o.trace);
            }
            Method::DgaRa { n_iters } => {
                let (o, total_ms) = dga.as_ref().expect("distributed run present");
                let full = o.trajectory.len() - 1;
                let share = if full == 0 { 1.0 } else { n_iters as f64 / full as f64 };
                let coord = account_messages_until(&o.log, n_iters).gramian_entries as u64;
                out.records.push(record(
                    method,
                    o.truncated_se(n_iters),
                    total_ms * share,
                    coord,
                    o.truncated_mask(n_iters).to_bit_string(),
                ));
            }
            Method::ScmaxAs => {
                let mask = scmax_as(&ch, &cfg, &spec.scmax);
                let se = evaluate_mask(&ch, &mask, &cfg).0;
                out.records.push(record(method, se, ms(start), method.coordination(&cfg), mask.to_bit_string()));
            }
            Method::NAs => {
                let mask = n_as(&ch, &cfg);
                let se = evaluate_mask(&ch, &mask, &cfg).0;
                out.records.push(record(method, se, ms(start), method.coordination(&cfg), mask.to_bit_string()));
            }
            Method::Random => {
                let mask = random_as(&cfg, &mut rng);
                let se = evaluate_mask(&ch, &mask, &cfg).0;
                out.records.push(record(method, se, ms(start), method.coordination(&cfg), mask.to_bit_string()));
            }
            Method::Exhaustive => {
                let opts = ExhaustiveOptions {
                    cap: spec.exhaustive_cap,
                    ..Default::default()
                };
                let res = exhaustive_as(&ch, &cfg, &opts).expect("search size checked by validate");
                out.records.push(record(method, res.score, ms(start), method.coordination(&cfg), res.mask.to_bit_string()));
            }
        }
    }

    if let Some((o, _)) = dga {
        out.audit = o
            .log
            .iter()
            .map(|m| AuditRecord {
                sweep_value: value,
                trial,
                message: m.into(),
            })
            .collect();
        out.dga_trajectory = Some(o.trajectory);
        out.dga_local = o.local_traces;
    }
    out
}

/// Runs every (sweep point, trial) pair on the current rayon pool. Results
/// are gathered in (sweep point, trial, method) order whatever the schedule.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ConfigError> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.sweep_values.len())
        .flat_map(|i| (0..spec.trials).map(move |t| (i, t)))
        .collect();
    let outputs: Vec<TrialOutput> = jobs.par_iter().map(|&(i, t)| run_trial(spec, i, t)).collect();

    let mut table = ResultTable::empty(spec.sweep_variable);
    let mut audit = Vec::new();
    let mut traces = Traces::default();
    for ((i, t), o) in jobs.into_iter().zip(outputs) {
        table.records.extend(o.records);
        audit.extend(o.audit);
        if let Some(tr) = o.ga_trace {
            traces.ga.push((spec.sweep_values[i], t, tr));
        }
        if let Some(tr) = o.dga_trajectory {
            traces.dga.push((spec.sweep_values[i], t, tr));
        }
        traces.dga_local.extend(o.dga_local);
    }
    Ok(ExperimentOutput { table, audit, traces })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers (all cores
/// when `None`).
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentOutput, ConfigError> {
    match threads {
        None => run_experiment(spec),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| ConfigError::Invalid(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_experiment(spec))
        }
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULT_CSV_HEADER)?;
    for r in rows {
        wr.write_record([
            r.method.label(),
            r.sweep_value.to_string(),
            r.mean_se.to_string(),
            r.stderr_se.to_string(),
            r.trials.to_string(),
            r.mean_runtime_ms.to_string(),
            r.coordination_size.to_string(),
        ])?;
    }
    wr.flush()
}

pub fn write_table_json<W: Write>(table: &ResultTable, w: W) -> io::Result<()> {
    serde_json::to_writer_pretty(w, table).map_err(io::Error::from)
}

pub fn read_table_json<R: io::Read>(r: R) -> io::Result<ResultTable> {
    serde_json::from_reader(r).map_err(io::Error::from)
}

pub fn write_audit_jsonl<W: Write>(audit: &[AuditRecord], mut w: W) -> io::Result<()> {
    for a in audit {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_convergence_csv<W: Write>(traces: &Traces, w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "sweep_value", "trial", "step", "best_se", "mean_se"])?;
    for (v, t, tr) in &traces.ga {
        for g in tr {
            wr.write_record([
                "ga-ra".to_string(),
                v.to_string(),
                t.to_string(),
                g.generation.to_string(),
                g.best.to_string(),
                g.average.to_string(),
            ])?;
        }
    }
    for (v, t, tr) in &traces.dga {
        for (n, se) in tr.iter().enumerate() {
            wr.write_record([
                "dga-ra".to_string(),
                v.to_string(),
                t.to_string(),
                n.to_string(),
                se.to_string(),
                se.to_string(),
            ])?;
        }
    }
    wr.flush()
}

/// Files written by [`emit_results`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub messages: Option<PathBuf>,
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes `<name>.csv` (summary), `<name>.json` (per-trial table) and, when
/// distributed runs are present, `<name>_messages.jsonl`.
pub fn emit_results(out: &ExperimentOutput, dir: &Path, name: &str) -> io::Result<EmittedFiles> {
    fs::create_dir_all(dir).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?;
    let csv = dir.join(format!("{name}.csv"));
    write_summary_csv(&out.table.summary(), create(&csv)?)?;
    let json = dir.join(format!("{name}.json"));
    let mut w = create(&json)?;
    write_table_json(&out.table, &mut w)?;
    w.flush()?;
    let messages = if out.audit.is_empty() {
        None
    } else {
        let p = dir.join(format!("{name}_messages.jsonl"));
        let mut w = create(&p)?;
        write_audit_jsonl(&out.audit, &mut w)?;
        w.flush()?;
        Some(p)
    };
    Ok(EmittedFiles { csv, json, messages })
}

/// Distance of each method to the exhaustive optimum over a toy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub method: Method,
    pub sweep_value: usize,
    pub mean_se: f64,
    pub mean_optimum_se: f64,
    /// Mean relative shortfall against the optimum, percent.
    pub mean_gap_pct: f64,
    /// Trials in which the method matched the optimum to 1e-9 relative.
    pub optimum_hits: usize,
    pub trials: usize,
}

pub fn oracle_report(table: &ResultTable) -> Vec<OracleRow> {
    let summary = table.summary();
    let mut rows = Vec::new();
    for s in summary.iter().filter(|s| s.method != Method::Exhaustive) {
        let opt = table.series(Method::Exhaustive, s.sweep_value);
        let got = table.series(s.method, s.sweep_value);
        if opt.len() != got.len() || opt.is_empty() {
            continue;
        }
        let hits = got.iter().zip(&opt).filter(|(g, o)| (**o - **g).abs() <= 1e-9 * o.abs().max(1e-300)).count();
        let gap = got
            .iter()
            .zip(&opt)
            .map(|(g, o)| if *o > 0.0 { 100.0 * (o - g) / o } else { 0.0 })
            .sum::<f64>()
            / opt.len() as f64;
        rows.push(OracleRow {
            method: s.method,
            sweep_value: s.sweep_value,
            mean_se: s.mean_se,
            mean_optimum_se: opt.iter().sum::<f64>() / opt.len() as f64,
            mean_gap_pct: gap,
            optimum_hits: hits,
            trials: opt.len(),
        });
    }
    rows
}

pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "sweep_value", "mean_se", "mean_optimum_se", "mean_gap_pct", "optimum_hits", "trials"])?;
    for r in rows {
        wr.write_record([
            r.method.label(),
            r.sweep_value.to_string(),
            r.mean_se.to_string(),
            r.mean_optimum_se.to_string(),
            r.mean_gap_pct.to_string(),
            r.optimum_hits.to_string(),
            r.trials.to_string(),
        ])?;
    }
    wr.flush()
}

// ---------------------------------------------------------------------------
// Configuration files

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    cell_size_m: Option<f64>,
    num_antennas: Option<usize>,
    num_rf: Option<usize>,
    num_subarrays: Option<usize>,
    num_users: Option<usize>,
    max_power_w: Option<f64>,
    max_power_uw: Option<f64>,
    ref_path_loss: Option<f64>,
    ref_path_loss_db: Option<f64>,
    path_loss_exp: Option<f64>,
    noise_power_w: Option<f64>,
    noise_power_dbm: Option<f64>,
}

fn exclusive<T>(a: Option<T>, b: Option<T>, names: &str) -> Result<Option<T>, ConfigError> {
    match (a, b) {
        (Some(_), Some(_)) => Err(ConfigError::Invalid(format!("give only one of {names}"))),
        (a, b) => Ok(a.or(b)),
    }
}

impl SystemSection {
    fn resolve(self) -> Result<SystemConfig, ConfigError> {
        let d = SystemConfig::desk_scale();
        let power = exclusive(self.max_power_w, self.max_power_uw.map(|u| u / 1e6), "max_power_w, max_power_uw")?;
        let q0 = exclusive(self.ref_path_loss, self.ref_path_loss_db.map(db_to_linear), "ref_path_loss, ref_path_loss_db")?;
        let noise = exclusive(self.noise_power_w, self.noise_power_dbm.map(dbm_to_watts), "noise_power_w, noise_power_dbm")?;
        Ok(SystemConfig {
            cell_size_m: self.cell_size_m.unwrap_or(d.cell_size_m),
            num_antennas: self.num_antennas.unwrap_or(d.num_antennas),
            num_rf: self.num_rf.unwrap_or(d.num_rf),
            num_subarrays: self.num_subarrays.unwrap_or(d.num_subarrays),
            num_users: self.num_users.unwrap_or(d.num_users),
            max_power_w: power.unwrap_or(d.max_power_w),
            ref_path_loss: q0.unwrap_or(d.ref_path_loss),
            path_loss_exp: self.path_loss_exp.unwrap_or(d.path_loss_exp),
            noise_power_w: noise.unwrap_or(d.noise_power_w),
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaSection {
    population: Option<usize>,
    elites: Option<usize>,
    tournaments: Option<usize>,
    p_crossover: Option<f64>,
    p_mutation: Option<f64>,
    max_generations: Option<usize>,
    stall_generations: Option<usize>,
    n_iters: Option<Vec<usize>>,
}

impl GaSection {
    fn resolve(&self, d: GaParams) -> GaParams {
        GaParams {
            population: self.population.unwrap_or(d.population),
            elites: self.elites.unwrap_or(d.elites),
            tournaments: self.tournaments.unwrap_or(d.tournaments),
            p_crossover: self.p_crossover.unwrap_or(d.p_crossover),
            p_mutation: self.p_mutation.unwrap_or(d.p_mutation),
            max_generations: self.max_generations.unwrap_or(d.max_generations),
            stall_generations: self.stall_generations.unwrap_or(d.stall_generations),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScmaxSection {
    gap_tol: Option<f64>,
    max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    variable: Option<SweepVariable>,
    values: Option<Vec<usize>>,
    methods: Option<Vec<String>>,
    trials: Option<usize>,
    seed: Option<u64>,
    exhaustive_cap: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    variable: Option<SweepVariable>,
    values: Option<Vec<usize>>,
    n_iters: Option<usize>,
    ga_generations: Option<usize>,
    dga_generations: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    name: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    system: SystemSection,
    #[serde(default)]
    ga: GaSection,
    #[serde(default)]
    dga: GaSection,
    #[serde(default)]
    scmax: ScmaxSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    cost: CostSection,
    #[serde(default)]
    output: OutputSection,
}

/// Cost-model sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub n_iters: usize,
    pub ga_generations: usize,
    pub dga_generations: usize,
}

/// Everything a config file describes.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiment: ExperimentSpec,
    pub dga_iters: Vec<usize>,
    pub cost: CostSpec,
    pub output_dir: Option<PathBuf>,
    pub output_name: String,
}

impl Config {
    /// Parses TOML text; missing fields take the desk-scale defaults.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let f: ConfigFile = toml::from_str(text)?;
        let system = f.system.resolve()?;
        let ga = f.ga.resolve(GaParams::ga_ra());
        if f.ga.n_iters.is_some() {
            return Err(ConfigError::Invalid("n_iters belongs in [dga], not [ga]".into()));
        }
        let dga = f.dga.resolve(GaParams::dga_ra());
        let dga_iters = f.dga.n_iters.clone().unwrap_or_else(|| vec![5, 16]);
        if dga_iters.is_empty() {
            return Err(ConfigError::Invalid("[dga] n_iters must not be empty".into()));
        }
        let scmax_default = ScmaxParams::default();
        let scmax = ScmaxParams {
            gap_tol: f.scmax.gap_tol.unwrap_or(scmax_default.gap_tol),
            max_iters: f.scmax.max_iters.unwrap_or(scmax_default.max_iters),
        };
        let variable = f.sweep.variable.unwrap_or(SweepVariable::NumRf);
        let values = f
            .sweep
            .values
            .clone()
            .unwrap_or_else(|| vec![current_value(&system, variable)]);
        let method_names = f.sweep.methods.clone().unwrap_or_else(|| {
            ["full-array", "ga-ra", "dga-ra", "scmax-as", "n-as", "random"]
                .map(String::from)
                .to_vec()
        });
        let methods = parse_methods(&method_names, &dga_iters)?;
        let experiment = ExperimentSpec {
            system,
            ga,
            dga,
            scmax,
            exhaustive_cap: f.sweep.exhaustive_cap.unwrap_or(ExhaustiveOptions::default().cap),
            sweep_variable: variable,
            sweep_values: values,
            methods,
            trials: f.sweep.trials.unwrap_or(50),
            seed: f.sweep.seed.unwrap_or(1),
        };
        let cost_variable = f.cost.variable.unwrap_or(SweepVariable::NumUsers);
        let cost = CostSpec {
            variable: cost_variable,
            values: f
                .cost
                .values
                .clone()
                .unwrap_or_else(|| vec![current_value(&system, cost_variable)]),
            n_iters: f.cost.n_iters.unwrap_or_else(|| *dga_iters.iter().max().expect("non-empty")),
            ga_generations: f.cost.ga_generations.unwrap_or(ga.max_generations),
            dga_generations: f.cost.dga_generations.unwrap_or(dga.max_generations),
        };
        Ok(Self {
            experiment,
            dga_iters,
            cost,
            output_dir: f.output.dir,
            output_name: f.output.name.unwrap_or_else(|| "results".into()),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_toml(&text)
    }

    pub fn cost_rows(&self) -> Result<Vec<CostRow>, ConfigError> {
        let c = &self.cost;
        for &v in &c.values {
            c.variable.apply(&self.experiment.system, v).validate().map_err(|e| {
                ConfigError::Invalid(format!("cost sweep {} = {v}: {e}", c.variable.name()))
            })?;
        }
        let inp = CostInputs {
            base: &self.experiment.system,
            ga: &self.experiment.ga,
            ga_generations: c.ga_generations,
            dga: &self.experiment.dga,
            dga_generations: c.dga_generations,
            n_iters: c.n_iters,
        };
        Ok(cost_sweep(&inp, c.variable, &c.values))
    }
}

fn current_value(cfg: &SystemConfig, v: SweepVariable) -> usize {
    match v {
        SweepVariable::NumUsers => cfg.num_users,
        SweepVariable::NumRf => cfg.num_rf,
        SweepVariable::NumAntennas => cfg.num_antennas,
    }
}

pub fn emit_cost(rows: &[CostRow], dir: &Path, name: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(format!("{name}_cost.csv"));
    write_cost_csv(rows, create(&p)?)?;
    Ok(p)
}
