//! Quasi-distributed selection: one RPU per subarray runs a local GA over its
//! own antennas against a shared array-Gramian inverse, and a CPU accepts one
//! subarray update per iteration.
//!
//! Transport is simulated in process. Every exchange is appended to a totally
//! ordered message log so coordination traffic can be audited afterwards.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::n_as;
use crate::config::SystemConfig;
use crate::ga::{run_ga, GaParams, GenerationStats, Layout};
use crate::linalg::{invert_hermitian_cholesky, smw_swap_update, CMatrix};
use crate::model::{active_positions, subarray_gramian, ChannelRealization, SelectionMask};
use crate::power::{se_from_inverse, water_fill};
use crate::seed::{derive, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    SubarrayGramian,
    ArrayInverse,
    LocalResult,
    UpdateRequest,
    AcceptNotice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeId {
    Cpu,
    Rpu(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Matrix(CMatrix),
    LocalResult { se: f64, chromosome: Vec<bool> },
    Subarray(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationMessage {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub iteration: usize,
    pub payload: Payload,
    /// Accounted size in complex entries (a K x K matrix counts K^2).
    pub payload_size_reals: usize,
}

impl CoordinationMessage {
    fn new(kind: MessageKind, sender: NodeId, iteration: usize, payload: Payload) -> Self {
        let payload_size_reals = match &payload {
            Payload::Matrix(m) => m.len(),
            Payload::LocalResult { chromosome, .. } => 1 + chromosome.len(),
            Payload::Subarray(_) => 1,
        };
        Self {
            kind,
            sender,
            iteration,
            payload,
            payload_size_reals,
        }
    }
}

/// Line format of the JSON-lines audit export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub iteration: usize,
    pub payload_size_reals: usize,
}

impl From<&CoordinationMessage> for MessageRecord {
    fn from(m: &CoordinationMessage) -> Self {
        Self {
            kind: m.kind,
            sender: m.sender,
            iteration: m.iteration,
            payload_size_reals: m.payload_size_reals,
        }
    }
}

pub fn write_jsonl<W: Write>(log: &[CoordinationMessage], mut w: W) -> io::Result<()> {
    for m in log {
        serde_json::to_writer(&mut w, &MessageRecord::from(m))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinationTotals {
    pub gramian_messages: usize,
    /// Complex entries carried by subarray Gramians: the coordination data.
    pub gramian_entries: usize,
    /// Everything else (inverse broadcasts, results, requests, notices).
    pub overhead_messages: usize,
    pub overhead_entries: usize,
}

pub fn account_messages(log: &[CoordinationMessage]) -> CoordinationTotals {
    account_messages_until(log, usize::MAX)
}

/// Totals over messages of iterations `0..=last_iteration`.
pub fn account_messages_until(log: &[CoordinationMessage], last_iteration: usize) -> CoordinationTotals {
    let mut t = CoordinationTotals::default();
    for m in log.iter().filter(|m| m.iteration <= last_iteration) {
        if m.kind == MessageKind::SubarrayGramian {
            t.gramian_messages += 1;
            t.gramian_entries += m.payload_size_reals;
        } else {
            t.overhead_messages += 1;
            t.overhead_entries += m.payload_size_reals;
        }
    }
    t
}

/// What an RPU knows: its own channel rows and committed chromosome.
#[derive(Debug, Clone)]
pub struct RpuState {
    pub subarray: usize,
    /// `M_b x K` rows of this subarray.
    pub local_rows: CMatrix,
    pub chromosome: Vec<bool>,
    pub rf_budget: usize,
}

impl RpuState {
    pub fn new(ch: &ChannelRealization, cfg: &SystemConfig, b: usize, chromosome: Vec<bool>) -> Self {
        let range: Vec<usize> = cfg.subarray_range(b).collect();
        Self {
            subarray: b,
            local_rows: ch.rows_of(&range),
            chromosome,
            rf_budget: cfg.rf_per_subarray(),
        }
    }

    fn gramian(&self) -> CMatrix {
        let k = self.local_rows.ncols();
        let mut g = CMatrix::zeros(k, k);
        for m in active_positions(&self.chromosome) {
            let row = self.local_rows.row(m);
            g += row.adjoint() * row;
        }
        g
    }

    fn rows(&self, idx: &[usize]) -> CMatrix {
        self.local_rows.select_rows(idx)
    }
}

/// OPA fitness of replacing the RPU's committed chromosome by `candidate`,
/// computed from the shared inverse with an SMW update over the antennas
/// that change. `total_active` is the committed array-wide count.
pub fn local_fitness(
    rpu: &RpuState,
    shared_inverse: &CMatrix,
    total_active: usize,
    candidate: &[bool],
    cfg: &SystemConfig,
) -> f64 {
    let k = shared_inverse.nrows();
    let mut removed = Vec::new();
    let mut added = Vec::new();
    for (i, (&c, &n)) in rpu.chromosome.iter().zip(candidate).enumerate() {
        match (c, n) {
            (true, false) => removed.push(i),
            (false, true) => added.push(i),
            _ => {}
        }
    }
    if total_active + added.len() < k + removed.len() {
        return 0.0;
    }
    if removed.is_empty() && added.is_empty() {
        return se_from_inverse(shared_inverse, cfg);
    }
    match smw_swap_update(shared_inverse, &rpu.rows(&removed), &rpu.rows(&added)) {
        Ok(inv) => water_fill(&inv, cfg.max_power_w, cfg.noise_power_w)
            .map(|pa| pa.achieved_se)
            .unwrap_or(0.0),
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub se: f64,
    pub chromosome: Vec<bool>,
    pub trace: Vec<GenerationStats>,
}

/// Local GA of one RPU: two half-chromosomes sharing the subarray's RF
/// budget, a fresh population seeded with the committed chromosome, and SMW
/// fitness against the shared inverse.
pub fn local_ga<R: Rng + ?Sized>(
    rpu: &RpuState,
    shared_inverse: &CMatrix,
    total_active: usize,
    cfg: &SystemConfig,
    params: &GaParams,
    rng: &mut R,
) -> LocalOutcome {
    let layout = Layout::halves(rpu.chromosome.len(), rpu.rf_budget);
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let out = run_ga(
        &layout,
        params,
        vec![rpu.chromosome.clone()],
        |genes| {
            if let Some(&s) = cache.get(genes) {
                return s;
            }
            let s = local_fitness(rpu, shared_inverse, total_active, genes, cfg);
            cache.insert(genes.to_vec(), s);
            s
        },
        rng,
    );
    LocalOutcome {
        se: out.best_score,
        chromosome: out.best,
        trace: out.trace,
    }
}

#[derive(Debug, Clone)]
pub struct DgaOutcome {
    pub mask: SelectionMask,
    /// Centrally recomputed SE of the final committed mask.
    pub se: f64,
    pub log: Vec<CoordinationMessage>,
    /// Committed SE after initialization (index 0) and after each iteration.
    pub trajectory: Vec<f64>,
    /// Committed mask after initialization and after each iteration.
    pub masks: Vec<SelectionMask>,
    /// Accepted subarray per iteration.
    pub accepted: Vec<usize>,
    /// Best-of-generation traces of every local GA run, in (iteration, RPU) order.
    pub local_traces: Vec<Vec<GenerationStats>>,
}

impl DgaOutcome {
    /// Result the run would have returned with `n_iters` iterations: the
    /// procedure is deterministic per iteration, so a shorter run is an
    /// exact prefix of a longer one.
    pub fn truncated_se(&self, n_iters: usize) -> f64 {
        self.trajectory[n_iters.min(self.trajectory.len() - 1)]
    }

    pub fn truncated_mask(&self, n_iters: usize) -> &SelectionMask {
        &self.masks[n_iters.min(self.masks.len() - 1)]
    }
}

struct Cpu {
    gramians: Vec<CMatrix>,
    inverse: Option<CMatrix>,
}

impl Cpu {
    fn rebuild(&mut self) {
        let k = self.gramians[0].nrows();
        let g = self.gramians.iter().fold(CMatrix::zeros(k, k), |acc, gb| acc + gb);
        self.inverse = invert_hermitian_cholesky(&g).ok();
    }

    fn committed_se(&self, cfg: &SystemConfig) -> f64 {
        self.inverse.as_ref().map_or(0.0, |inv| se_from_inverse(inv, cfg))
    }
}

/// Runs the distributed selector for `n_iters` iterations.
///
/// Initialization: every RPU selects by row norm, uploads its subarray
/// Gramian, and the CPU broadcasts the Cholesky inverse of their sum. Each
/// iteration every RPU runs [`local_ga`]; the CPU accepts the best reported
/// SE (ties to the lowest subarray), requests that RPU's new Gramian,
/// rebuilds the inverse and broadcasts it.
pub fn dga_ra<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    params: &GaParams,
    n_iters: usize,
    rng: &mut R,
) -> DgaOutcome {
    let base_seed: u64 = rng.random();
    let n_b = cfg.num_subarrays;
    let init = n_as(ch, cfg);
    let mut rpus: Vec<RpuState> = (0..n_b)
        .map(|b| RpuState::new(ch, cfg, b, init.chromosome(b).to_vec()))
        .collect();
    let mut log = Vec::new();

    let mut cpu = Cpu {
        gramians: Vec::with_capacity(n_b),
        inverse: None,
    };
    for rpu in &rpus {
        let g = rpu.gramian();
        log.push(CoordinationMessage::new(
            MessageKind::SubarrayGramian,
            NodeId::Rpu(rpu.subarray),
            0,
            Payload::Matrix(g.clone()),
        ));
        cpu.gramians.push(g);
    }
    cpu.rebuild();
    broadcast_inverse(&cpu, 0, &mut log);

    let mut mask = init;
    let mut trajectory = vec![cpu.committed_se(cfg)];
    let mut masks = vec![mask.clone()];
    let mut accepted = Vec::with_capacity(n_iters);
    let mut local_traces = Vec::new();

    for n in 1..=n_iters {
        let total_active = mask.count();
        let results: Vec<LocalOutcome> = match &cpu.inverse {
            Some(inv) => rpus
                .par_iter()
                .map(|rpu| {
                    let mut local_rng = rng_from(derive(derive(base_seed, n as u64), rpu.subarray as u64));
                    local_ga(rpu, inv, total_active, cfg, params, &mut local_rng)
                })
                .collect(),
            None => rpus
                .iter()
                .map(|rpu| LocalOutcome {
                    se: 0.0,
                    chromosome: rpu.chromosome.clone(),
                    trace: Vec::new(),
                })
                .collect(),
        };
        for (b, r) in results.iter().enumerate() {
            log.push(CoordinationMessage::new(
                MessageKind::LocalResult,
                NodeId::Rpu(b),
                n,
                Payload::LocalResult {
                    se: r.se,
                    chromosome: r.chromosome.clone(),
                },
            ));
        }

        // strict comparison keeps the lowest index on ties
        let mut best = 0;
        for (b, r) in results.iter().enumerate().skip(1) {
            if r.se > results[best].se {
                best = b;
            }
        }
        log.push(CoordinationMessage::new(
            MessageKind::UpdateRequest,
            NodeId::Cpu,
            n,
            Payload::Subarray(best),
        ));
        rpus[best].chromosome = results[best].chromosome.clone();
        let g = rpus[best].gramian();
        log.push(CoordinationMessage::new(
            MessageKind::SubarrayGramian,
            NodeId::Rpu(best),
            n,
            Payload::Matrix(g.clone()),
        ));
        cpu.gramians[best] = g;
        cpu.rebuild();
        log.push(CoordinationMessage::new(
            MessageKind::AcceptNotice,
            NodeId::Cpu,
            n,
            Payload::Subarray(best),
        ));
        broadcast_inverse(&cpu, n, &mut log);

        mask.set_chromosome(best, &rpus[best].chromosome);
        trajectory.push(cpu.committed_se(cfg));
        masks.push(mask.clone());
        accepted.push(best);
        local_traces.extend(results.into_iter().map(|r| r.trace));
    }

    DgaOutcome {
        se: *trajectory.last().expect("initial entry"),
        mask,
        log,
        trajectory,
        masks,
        accepted,
        local_traces,
    }
}

fn broadcast_inverse(cpu: &Cpu, iteration: usize, log: &mut Vec<CoordinationMessage>) {
    let k = cpu.gramians[0].nrows();
    let inv = cpu.inverse.clone().unwrap_or_else(|| CMatrix::zeros(k, k));
    log.push(CoordinationMessage::new(
        MessageKind::ArrayInverse,
        NodeId::Cpu,
        iteration,
        Payload::Matrix(inv),
    ));
}

/// Sum of the subarray Gramians of `mask`, as the CPU would assemble it.
pub fn assembled_gramian(ch: &ChannelRealization, mask: &SelectionMask) -> CMatrix {
    let k = ch.num_users();
    (0..mask.num_subarrays()).fold(CMatrix::zeros(k, k), |acc, b| acc + subarray_gramian(ch, mask, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_channel, make_geometry};
    use crate::power::evaluate_mask;

    fn small() -> (SystemConfig, ChannelRealization) {
        let cfg = SystemConfig {
            num_antennas: 32,
            num_subarrays: 4,
            num_rf: 16,
            num_users: 6,
            ..SystemConfig::desk_scale()
        };
        let mut rng = rng_from(21);
        let geo = make_geometry(&cfg, &mut rng);
        let ch = make_channel(&cfg, &geo, &mut rng);
        (cfg, ch)
    }

    fn quick() -> GaParams {
        GaParams {
            population: 20,
            elites: 2,
            tournaments: 9,
            max_generations: 20,
            stall_generations: 5,
            ..GaParams::dga_ra()
        }
    }

    #[test]
    fn zero_iterations_is_norm_selection() {
        let (cfg, ch) = small();
        let out = dga_ra(&ch, &cfg, &quick(), 0, &mut rng_from(1));
        assert_eq!(out.mask, n_as(&ch, &cfg));
        assert_eq!(out.se, evaluate_mask(&ch, &out.mask, &cfg).0);
        let t = account_messages(&out.log);
        assert_eq!(t.gramian_messages, 4);
        assert_eq!(t.gramian_entries, 4 * 36);
    }

    #[test]
    fn committed_se_is_monotone_and_messages_add_up() {
        let (cfg, ch) = small();
        let out = dga_ra(&ch, &cfg, &quick(), 6, &mut rng_from(2));
        assert!(out.trajectory.windows(2).all(|w| w[1] >= w[0]), "{:?}", out.trajectory);
        assert!(out.mask.is_feasible(cfg.rf_per_subarray()));
        let t = account_messages(&out.log);
        assert_eq!(t.gramian_messages, 4 + 6);
        assert_eq!(t.gramian_entries, (4 + 6) * 36);
        assert_eq!(account_messages_until(&out.log, 2).gramian_entries, (4 + 2) * 36);
        let central = evaluate_mask(&ch, &out.mask, &cfg).0;
        assert!((central - out.se).abs() <= 1e-9 * central);
    }

    #[test]
    fn shorter_run_is_a_prefix() {
        let (cfg, ch) = small();
        let long = dga_ra(&ch, &cfg, &quick(), 5, &mut rng_from(3));
        let short = dga_ra(&ch, &cfg, &quick(), 2, &mut rng_from(3));
        assert_eq!(short.se, long.truncated_se(2));
        assert_eq!(&short.mask, long.truncated_mask(2));
        assert_eq!(short.trajectory[..], long.trajectory[..3]);
    }

    #[test]
    fn null_swap_and_seam() {
        let (cfg, ch) = small();
        let mask = n_as(&ch, &cfg);
        let inv = invert_hermitian_cholesky(&assembled_gramian(&ch, &mask)).unwrap();
        let mut rng = rng_from(4);
        for b in 0..4 {
            let rpu = RpuState::new(&ch, &cfg, b, mask.chromosome(b).to_vec());
            let null = local_fitness(&rpu, &inv, mask.count(), &rpu.chromosome, &cfg);
            assert_eq!(null, evaluate_mask(&ch, &mask, &cfg).0);
            let layout = Layout::halves(8, 4);
            for _ in 0..10 {
                let cand = layout.random_genome(&mut rng);
                let mut global = mask.clone();
                global.set_chromosome(b, &cand);
                let central = evaluate_mask(&ch, &global, &cfg).0;
                let local = local_fitness(&rpu, &inv, mask.count(), &cand, &cfg);
                assert!((local - central).abs() <= 1e-8 * central.max(1.0), "{local} {central}");
            }
        }
    }

    #[test]
    fn jsonl_export() {
        let (cfg, ch) = small();
        let out = dga_ra(&ch, &cfg, &quick(), 1, &mut rng_from(5));
        let mut buf = Vec::new();
        write_jsonl(&out.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<MessageRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), out.log.len());
        assert_eq!(lines[0].kind, MessageKind::SubarrayGramian);
        assert_eq!(lines[0].payload_size_reals, 36);
        assert!(text.lines().next().unwrap().contains("\"iteration\":0"));
    }
}
