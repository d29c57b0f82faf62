//! Analytic cost accounting: training symbols, coordination data and flop
//! models of the selectors and their matrix kernels.
//!
//! Flop counts are exact rationals (the Cholesky term carries a 7/3 factor);
//! only the norm-selection count involves a logarithm and is a float.

use std::io::{self, Write};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::ga::GaParams;

pub type Flops = Ratio<i128>;

fn r(v: usize) -> Flops {
    Flops::from_integer(v as i128)
}

fn seven_thirds() -> Flops {
    Flops::new(7, 3)
}

/// Selector families distinguished by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostMethod {
    GaRa,
    DgaRa,
    ScmaxAs,
    NAs,
}

impl CostMethod {
    fn needs_full_csi(self) -> bool {
        !matches!(self, CostMethod::NAs)
    }
}

/// Downlink training symbols: full CSI needs `K ceil(M/N)` (N pilots per
/// slot), norm selection only `2K`.
pub fn training_symbols(method: CostMethod, cfg: &SystemConfig) -> u64 {
    let k = cfg.num_users as u64;
    if method.needs_full_csi() {
        k * (cfg.num_antennas as u64).div_ceil(cfg.num_rf as u64)
    } else {
        2 * k
    }
}

/// Complex entries exchanged between the RPUs and the CPU.
pub fn coordination_size(method: CostMethod, cfg: &SystemConfig, n_iters: usize) -> u64 {
    let (m, k, b) = (cfg.num_antennas as u64, cfg.num_users as u64, cfg.num_subarrays as u64);
    match method {
        CostMethod::GaRa | CostMethod::ScmaxAs => m * k,
        CostMethod::NAs => 0,
        CostMethod::DgaRa => (b + n_iters as u64) * k * k,
    }
}

/// Exact predicate for the distributed selector moving less data than the
/// centralized one: `(B + N_it) K^2 < M K`, i.e. `K (B + N_it) < M`.
pub fn dga_coordination_is_smaller(cfg: &SystemConfig, n_iters: usize) -> bool {
    cfg.num_users * (cfg.num_subarrays + n_iters) < cfg.num_antennas
}

/// Gramian assembly plus Cholesky inversion: `7/3 K^3 + 2 N K^2 - K^2`.
pub fn cholesky_kernel_flops(k: usize, n: usize) -> Flops {
    let (k, n) = (r(k), r(n));
    seven_thirds() * k * k * k + r(2) * n * k * k - k * k
}

/// Per-part flops of the SMW swap update with `n_b` swapped rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmwBreakdown {
    pub q1: Flops,
    pub q2: Flops,
    pub q3: Flops,
    pub q4: Flops,
    pub q5: Flops,
    pub q6: Flops,
}

impl SmwBreakdown {
    pub fn total(&self) -> Flops {
        self.q1 + self.q2 + self.q3 + self.q4 + self.q5 + self.q6
    }
}

pub fn smw_breakdown(n_b: usize, k: usize) -> SmwBreakdown {
    let (nb, k) = (r(n_b), r(k));
    let two = r(2);
    SmwBreakdown {
        q1: two * nb * k * k - nb * k,
        q2: two * nb * nb * k - nb * nb + nb,
        q3: seven_thirds() * nb * nb * nb,
        q4: two * nb * nb * k - nb * k,
        q5: two * nb * k * k - k * k + k,
        q6: two * k * k * k - k * k,
    }
}

/// Closed form of the SMW kernel, equal to the sum of [`smw_breakdown`]:
/// `7/3 N_b^3 + 2K^3 + N_b^2 (4K - 1) + K^2 (4 N_b - 2) + N_b (1 - 2K) + K`.
pub fn smw_kernel_flops(n_b: usize, k: usize) -> Flops {
    let (nb, k) = (r(n_b), r(k));
    let one = r(1);
    seven_thirds() * nb * nb * nb
        + r(2) * k * k * k
        + nb * nb * (r(4) * k - one)
        + k * k * (r(4) * nb - r(2))
        + nb * (one - r(2) * k)
        + k
}

/// The closed form with an `N_b^2 (1 - 2K)` term in place of `N_b (1 - 2K)`.
/// It falls short of the part-wise sum by `(N_b^2 - N_b)(2K - 1)`; kept for
/// comparison only.
pub fn smw_kernel_flops_as_printed(n_b: usize, k: usize) -> Flops {
    let (nb, k) = (r(n_b), r(k));
    let one = r(1);
    seven_thirds() * nb * nb * nb
        + r(2) * k * k * k
        + nb * nb * (r(4) * k - one)
        + k * k * (r(4) * nb - r(2))
        + nb * nb * (one - r(2) * k)
        + k
}

/// Per-subarray norm selection: `M_b (2K - 1) + M_b ln M_b`.
pub fn n_as_flops(cfg: &SystemConfig) -> f64 {
    let mb = cfg.antennas_per_subarray() as f64;
    mb * (2.0 * cfg.num_users as f64 - 1.0) + mb * mb.ln()
}

/// Fitness evaluations of a GA running `generations` generations:
/// `T (N_p - N_e) + N_e`.
pub fn ga_evaluations(params: &GaParams, generations: usize) -> Flops {
    r(generations) * (r(params.population) - r(params.elites)) + r(params.elites)
}

/// Centralized GA: every evaluation rebuilds and inverts the array Gramian.
pub fn ga_ra_flops(cfg: &SystemConfig, params: &GaParams, generations: usize) -> Flops {
    ga_evaluations(params, generations) * cholesky_kernel_flops(cfg.num_users, cfg.num_rf)
}

/// Distributed GA: `N_it` local GAs per RPU, each evaluation an SMW update.
pub fn dga_ra_flops(cfg: &SystemConfig, params: &GaParams, generations: usize, n_iters: usize) -> Flops {
    r(n_iters) * ga_evaluations(params, generations) * smw_kernel_flops(cfg.rf_per_subarray(), cfg.num_users)
}

pub fn to_f64(x: Flops) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumUsers,
    NumRf,
    NumAntennas,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NumUsers => "num_users",
            SweepVariable::NumRf => "num_rf",
            SweepVariable::NumAntennas => "num_antennas",
        }
    }

    pub fn apply(self, cfg: &SystemConfig, value: usize) -> SystemConfig {
        let mut c = *cfg;
        match self {
            SweepVariable::NumUsers => c.num_users = value,
            SweepVariable::NumRf => c.num_rf = value,
            SweepVariable::NumAntennas => c.num_antennas = value,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub variable: String,
    pub value: usize,
    pub training_full_csi: u64,
    pub training_n_as: u64,
    pub coord_ga_ra: u64,
    pub coord_scmax_as: u64,
    pub coord_n_as: u64,
    pub coord_dga_ra: u64,
    pub dga_coord_smaller: bool,
    pub flops_n_as_per_subarray: f64,
    pub flops_ga_ra: f64,
    pub flops_dga_ra: f64,
}

pub const COST_CSV_HEADER: [&str; 12] = [
    "variable",
    "value",
    "training_full_csi",
    "training_n_as",
    "coord_ga_ra_complex",
    "coord_scmax_as_complex",
    "coord_n_as_complex",
    "coord_dga_ra_complex",
    "dga_coord_smaller",
    "flops_n_as_per_subarray",
    "flops_ga_ra",
    "flops_dga_ra",
];

pub struct CostInputs<'a> {
    pub base: &'a SystemConfig,
    pub ga: &'a GaParams,
    pub ga_generations: usize,
    pub dga: &'a GaParams,
    pub dga_generations: usize,
    pub n_iters: usize,
}

pub fn cost_row(inp: &CostInputs, variable: SweepVariable, value: usize) -> CostRow {
    let cfg = variable.apply(inp.base, value);
    CostRow {
        variable: variable.name().to_string(),
        value,
        training_full_csi: training_symbols(CostMethod::GaRa, &cfg),
        training_n_as: training_symbols(CostMethod::NAs, &cfg),
        coord_ga_ra: coordination_size(CostMethod::GaRa, &cfg, inp.n_iters),
        coord_scmax_as: coordination_size(CostMethod::ScmaxAs, &cfg, inp.n_iters),
        coord_n_as: coordination_size(CostMethod::NAs, &cfg, inp.n_iters),
        coord_dga_ra: coordination_size(CostMethod::DgaRa, &cfg, inp.n_iters),
        dga_coord_smaller: dga_coordination_is_smaller(&cfg, inp.n_iters),
        flops_n_as_per_subarray: n_as_flops(&cfg),
        flops_ga_ra: to_f64(ga_ra_flops(&cfg, inp.ga, inp.ga_generations)),
        flops_dga_ra: to_f64(dga_ra_flops(&cfg, inp.dga, inp.dga_generations, inp.n_iters)),
    }
}

pub fn cost_sweep(inp: &CostInputs, variable: SweepVariable, values: &[usize]) -> Vec<CostRow> {
    values.iter().map(|&v| cost_row(inp, variable, v)).collect()
}

pub fn write_cost_csv<W: Write>(rows: &[CostRow], w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(COST_CSV_HEADER)?;
    for row in rows {
        wr.write_record([
            row.variable.clone(),
            row.value.to_string(),
            row.training_full_csi.to_string(),
            row.training_n_as.to_string(),
            row.coord_ga_ra.to_string(),
            row.coord_scmax_as.to_string(),
            row.coord_n_as.to_string(),
            row.coord_dga_ra.to_string(),
            row.dga_coord_smaller.to_string(),
            row.flops_n_as_per_subarray.to_string(),
            row.flops_ga_ra.to_string(),
            row.flops_dga_ra.to_string(),
        ])?;
    }
    wr.flush()
}
