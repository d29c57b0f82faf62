//! Non-evolutionary selectors: norm-based, convex-relaxation (sum-capacity),
//! random, full array, and toy-scale exhaustive search.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::SearchError;
use crate::linalg::{CMatrix, CholeskyFactor};
use crate::model::{array_gramian, ChannelRealization, SelectionMask};
use crate::power::{epa_capacity_bound, evaluate_mask, MaskEvaluator};

/// Indices of the `n` largest values, ties to the lower index, ascending.
fn top_n(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(n).collect();
    picked.sort_unstable();
    picked
}

/// Per subarray, the `N_b` antennas with the largest `||h_m||^2`.
pub fn n_as(ch: &ChannelRealization, cfg: &SystemConfig) -> SelectionMask {
    let mut mask = SelectionMask::empty(cfg);
    for b in 0..cfg.num_subarrays {
        let range = cfg.subarray_range(b);
        let offset = range.start;
        for i in top_n(&ch.row_norms_sq()[range], cfg.rf_per_subarray()) {
            mask.set(offset + i, true);
        }
    }
    mask
}

/// Exactly `N_b` uniformly chosen antennas per subarray.
pub fn random_as<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> SelectionMask {
    let mut mask = SelectionMask::empty(cfg);
    let (mb, nb) = (cfg.antennas_per_subarray(), cfg.rf_per_subarray());
    for b in 0..cfg.num_subarrays {
        for i in index::sample(rng, mb, nb) {
            mask.set(b * mb + i, true);
        }
    }
    mask
}

/// OPA spectral efficiency with every antenna active (RF budget ignored).
pub fn full_array_reference(ch: &ChannelRealization, cfg: &SystemConfig) -> f64 {
    evaluate_mask(ch, &SelectionMask::full(cfg), cfg).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmaxParams {
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for ScmaxParams {
    fn default() -> Self {
        Self {
            gap_tol: 1e-5,
            max_iters: 200,
        }
    }
}

/// Relaxed solution and diagnostics of the sum-capacity relaxation.
#[derive(Debug, Clone)]
pub struct ScmaxRelaxation {
    /// Fractional activations `D_m` in `[0, 1]`.
    pub relaxed: Vec<f64>,
    /// Relaxed objective, bit/s/Hz.
    pub objective: f64,
    /// Final Frank-Wolfe duality gap; `objective + gap` bounds the relaxed optimum.
    pub gap: f64,
    pub iterations: usize,
    /// Objective after every iteration, starting at `D = 0`.
    pub trace: Vec<f64>,
    /// `N_b` largest activations per subarray.
    pub mask: SelectionMask,
}

/// The log-det objective `log2 det(I + c sum_m D_m G_m)` at fractional `D`.
pub fn relaxed_objective(ch: &ChannelRealization, cfg: &SystemConfig, d: &[f64]) -> f64 {
    let w = weighted_argument(ch, cfg, d);
    CholeskyFactor::new(&w).expect("W >= I").ln_det() / std::f64::consts::LN_2
}

fn epa_scale(cfg: &SystemConfig) -> f64 {
    cfg.max_power_w / (cfg.num_users as f64 * cfg.noise_power_w)
}

fn weighted_argument(ch: &ChannelRealization, cfg: &SystemConfig, d: &[f64]) -> CMatrix {
    let k = ch.num_users();
    let c = epa_scale(cfg);
    let mut w = CMatrix::identity(k, k);
    for (m, &dm) in d.iter().enumerate() {
        if dm != 0.0 {
            w += ch.antenna_gramian(m).scale(c * dm);
        }
    }
    w
}

/// `d/dD_m log2 det(W) = c / ln 2 * h_m W^{-1} h_m^H`.
pub fn relaxed_gradient(ch: &ChannelRealization, cfg: &SystemConfig, d: &[f64]) -> Vec<f64> {
    let factor = CholeskyFactor::new(&weighted_argument(ch, cfg, d)).expect("W >= I");
    let scale = epa_scale(cfg) / std::f64::consts::LN_2;
    (0..ch.num_antennas())
        .map(|m| {
            let row = ch.row(m);
            // W^{-1} h_m^H, then h_m (.)
            let mut x: Vec<_> = row.iter().map(|z| z.conj()).collect();
            factor.solve_in_place(&mut x);
            let q: f64 = row.iter().zip(&x).map(|(h, v)| (h * v).re).sum();
            scale * q
        })
        .collect()
}

/// Frank-Wolfe on the box-and-budget polytope. The linear oracle picks, per
/// subarray, the `N_b` coordinates with the largest positive gradient.
/// Step `2 / (t + 2)`; a step that would lower the objective is replaced by a
/// golden-section line search over `[0, 1]`.
pub fn scmax_relaxation(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    params: &ScmaxParams,
) -> ScmaxRelaxation {
    let m = ch.num_antennas();
    let nb = cfg.rf_per_subarray();
    let mut d = vec![0.0; m];
    let mut f = relaxed_objective(ch, cfg, &d);
    let mut trace = vec![f];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for t in 0..params.max_iters {
        let grad = relaxed_gradient(ch, cfg, &d);
        let mut vertex = vec![0.0; m];
        for b in 0..cfg.num_subarrays {
            let range = cfg.subarray_range(b);
            let offset = range.start;
            for i in top_n(&grad[range], nb) {
                if grad[offset + i] > 0.0 {
                    vertex[offset + i] = 1.0;
                }
            }
        }
        gap = grad
            .iter()
            .zip(vertex.iter().zip(&d))
            .map(|(g, (s, x))| g * (s - x))
            .sum();
        if gap <= params.gap_tol {
            break;
        }
        iterations = t + 1;
        let step_to = |gamma: f64| -> Vec<f64> {
            d.iter().zip(&vertex).map(|(x, s)| x + gamma * (s - x)).collect()
        };
        let gamma = 2.0 / (t as f64 + 2.0);
        let mut next = step_to(gamma);
        let mut f_next = relaxed_objective(ch, cfg, &next);
        if f_next < f {
            let (g_best, f_best) = golden_section(|g| relaxed_objective(ch, cfg, &step_to(g)));
            if f_best >= f {
                next = step_to(g_best);
                f_next = f_best;
            } else {
                next = d.clone();
                f_next = f;
            }
        }
        d = next;
        f = f_next;
        trace.push(f);
    }
    if gap.is_infinite() {
        gap = 0.0;
    }
    let mut mask = SelectionMask::empty(cfg);
    for b in 0..cfg.num_subarrays {
        let range = cfg.subarray_range(b);
        let offset = range.start;
        for i in top_n(&d[range], nb) {
            mask.set(offset + i, true);
        }
    }
    ScmaxRelaxation {
        relaxed: d,
        objective: f,
        gap: gap.max(0.0),
        iterations,
        trace,
        mask,
    }
}

/// Maximizes a unimodal function on `[0, 1]`.
fn golden_section(mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..40 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Sum-capacity selection: relax, solve, keep the `N_b` largest activations.
pub fn scmax_as(ch: &ChannelRealization, cfg: &SystemConfig, params: &ScmaxParams) -> SelectionMask {
    scmax_relaxation(ch, cfg, params).mask
}

/// Scoring rule for exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExhaustiveObjective {
    /// ZF spectral efficiency with water filling (same as the GA fitness).
    #[default]
    Opa,
    /// Equal-power log-det capacity bound.
    Epa,
}

#[derive(Debug, Clone, Copy)]
pub struct ExhaustiveOptions {
    pub cap: u64,
    pub objective: ExhaustiveObjective,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        Self {
            cap: 1_000_000,
            objective: ExhaustiveObjective::Opa,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub mask: SelectionMask,
    pub score: f64,
    pub candidates: u64,
}

/// All `n`-subsets of `0..len` as bit vectors, lexicographic by index.
fn combinations(len: usize, n: usize) -> Vec<Vec<bool>> {
    fn rec(start: usize, len: usize, left: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=len - left {
            cur[i] = true;
            rec(i + 1, len, left - 1, cur, out);
            cur[i] = false;
        }
    }
    let mut out = Vec::new();
    rec(0, len, n, &mut vec![false; len], &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Better score wins; equal scores go to the lexicographically smaller mask.
fn better(a: &(f64, SelectionMask), b: &(f64, SelectionMask)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1.bits() < b.1.bits())
}

/// Scores every mask with exactly `N_b` antennas per subarray.
pub fn exhaustive_as(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    opts: &ExhaustiveOptions,
) -> Result<ExhaustiveResult, SearchError> {
    let (mb, nb, nsub) = (cfg.antennas_per_subarray(), cfg.rf_per_subarray(), cfg.num_subarrays);
    let total = binomial(mb, nb).powi(nsub as i32);
    if total > opts.cap as f64 {
        return Err(SearchError::SearchSpaceTooLarge {
            candidates: total,
            cap: opts.cap,
        });
    }
    let combos = combinations(mb, nb);
    let per_head = combos.len().pow(nsub.saturating_sub(1) as u32);
    let best = combos
        .par_iter()
        .map(|head| {
            let mut ev = MaskEvaluator::new(ch, cfg);
            let mut mask = SelectionMask::empty(cfg);
            mask.set_chromosome(0, head);
            let mut best: Option<(f64, SelectionMask)> = None;
            for tail in 0..per_head {
                let mut rest = tail;
                for b in 1..nsub {
                    mask.set_chromosome(b, &combos[rest % combos.len()]);
                    rest /= combos.len();
                }
                let score = match opts.objective {
                    ExhaustiveObjective::Opa => ev.score(&mask),
                    ExhaustiveObjective::Epa => epa_capacity_bound(
                        &array_gramian(ch, &mask),
                        cfg.max_power_w,
                        cfg.noise_power_w,
                    ),
                };
                let cand = (score, mask.clone());
                if best.as_ref().is_none_or(|b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
            best.expect("at least one candidate")
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .expect("at least one combination");
    Ok(ExhaustiveResult {
        mask: best.1,
        score: best.0,
        candidates: (combos.len() * per_head) as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_channel, make_geometry};
    use crate::seed::rng_from;
    use num_complex::Complex64;

    fn cfg(m: usize, b: usize, n: usize, k: usize) -> SystemConfig {
        SystemConfig {
            num_antennas: m,
            num_subarrays: b,
            num_rf: n,
            num_users: k,
            ..SystemConfig::full_scale()
        }
    }

    fn realization(cfg: &SystemConfig, seed: u64) -> ChannelRealization {
        let mut rng = rng_from(seed);
        let geo = make_geometry(cfg, &mut rng);
        make_channel(cfg, &geo, &mut rng)
    }

    /// Channel whose rows have prescribed squared norms, one user.
    fn with_norms(norms: &[f64]) -> ChannelRealization {
        ChannelRealization::from_matrix(CMatrix::from_fn(norms.len(), 1, |i, _| {
            Complex64::new(norms[i].sqrt(), 0.0)
        }))
    }

    #[test]
    fn n_as_picks_largest_norms() {
        let c = cfg(4, 1, 2, 1);
        let mask = n_as(&with_norms(&[1.0, 9.0, 4.0, 16.0]), &c);
        assert_eq!(mask.active_indices(), vec![1, 3]);
        let mask = n_as(&with_norms(&[2.0; 4]), &c);
        assert_eq!(mask.active_indices(), vec![0, 1]);
        let full = cfg(4, 1, 4, 1);
        assert_eq!(n_as(&with_norms(&[1.0, 2.0, 3.0, 4.0]), &full).count(), 4);
    }

    #[test]
    fn random_as_is_feasible_and_seeded() {
        let c = cfg(16, 4, 8, 2);
        let a = random_as(&c, &mut rng_from(1));
        assert_eq!(a, random_as(&c, &mut rng_from(1)));
        for b in 0..4 {
            assert_eq!(a.subarray_count(b), 2);
        }
        let full = cfg(8, 2, 8, 2);
        assert_eq!(random_as(&full, &mut rng_from(2)).count(), 8);
    }

    #[test]
    fn random_as_selection_frequency() {
        let c = cfg(8, 2, 4, 1);
        let mut rng = rng_from(3);
        let draws = 10_000;
        let mut hits = [0usize; 8];
        for _ in 0..draws {
            for i in random_as(&c, &mut rng).active_indices() {
                hits[i] += 1;
            }
        }
        let p: f64 = 0.5;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "{h}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = cfg(16, 2, 8, 3);
        let ch = realization(&c, 4);
        let d: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).fract()).collect();
        let grad = relaxed_gradient(&ch, &c, &d);
        for m in [0, 5, 11] {
            let h = 1e-6;
            let mut up = d.clone();
            up[m] += h;
            let mut dn = d.clone();
            dn[m] -= h;
            let fd = (relaxed_objective(&ch, &c, &up) - relaxed_objective(&ch, &c, &dn)) / (2.0 * h);
            assert!((fd - grad[m]).abs() <= 1e-6 * grad[m].abs().max(1e-3), "{m}: {fd} vs {}", grad[m]);
        }
    }

    #[test]
    fn frank_wolfe_is_monotone_and_feasible() {
        let c = cfg(32, 4, 16, 4);
        let ch = realization(&c, 5);
        let r = scmax_relaxation(&ch, &c, &ScmaxParams::default());
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", r.trace);
        assert!(r.relaxed.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        for b in 0..4 {
            let s: f64 = r.relaxed[c.subarray_range(b)].iter().sum();
            assert!(s <= 4.0 + 1e-9);
            assert_eq!(r.mask.subarray_count(b), 4);
        }
    }

    #[test]
    fn scmax_degenerate_channel() {
        let c = cfg(8, 2, 4, 2);
        let ch = ChannelRealization::from_matrix(CMatrix::zeros(8, 2));
        assert_eq!(scmax_as(&ch, &c, &ScmaxParams::default()).active_indices(), vec![0, 1, 4, 5]);
    }

    #[test]
    fn scmax_single_user_orthogonal_rows_equals_n_as() {
        // K = 1: every row is a scalar, gradient ranks by norm
        let c = cfg(8, 2, 2, 1);
        let ch = with_norms(&[1e-6, 5e-6, 3e-6, 2e-6, 7e-6, 1e-7, 4e-6, 6e-6]);
        assert_eq!(scmax_as(&ch, &c, &ScmaxParams::default()), n_as(&ch, &c));
    }

    #[test]
    fn relaxation_bounds_every_binary_mask() {
        let c = cfg(8, 2, 4, 2);
        for seed in 0..5 {
            let ch = realization(&c, 100 + seed);
            let r = scmax_relaxation(&ch, &c, &ScmaxParams::default());
            let combos = combinations(4, 2);
            let mut n = 0;
            for a in &combos {
                for b in &combos {
                    let mut mask = SelectionMask::empty(&c);
                    mask.set_chromosome(0, a);
                    mask.set_chromosome(1, b);
                    let f = epa_capacity_bound(&array_gramian(&ch, &mask), c.max_power_w, c.noise_power_w);
                    assert!(r.objective + r.gap >= f - 1e-12, "seed {seed}");
                    n += 1;
                }
            }
            assert_eq!(n, 36);
        }
    }

    #[test]
    fn exhaustive_small_cases() {
        let c = cfg(4, 1, 4, 2);
        let ch = realization(&c, 6);
        let r = exhaustive_as(&ch, &c, &ExhaustiveOptions::default()).unwrap();
        assert_eq!(r.candidates, 1);
        assert_eq!(r.mask.count(), 4);

        let c = cfg(8, 2, 4, 2);
        let ch = realization(&c, 7);
        let r = exhaustive_as(&ch, &c, &ExhaustiveOptions::default()).unwrap();
        assert_eq!(r.candidates, 36);
        let nas = evaluate_mask(&ch, &n_as(&ch, &c), &c).0;
        assert!(r.score >= nas);
        assert!((evaluate_mask(&ch, &r.mask, &c).0 - r.score).abs() <= 1e-12 * r.score);
        let epa = exhaustive_as(
            &ch,
            &c,
            &ExhaustiveOptions {
                objective: ExhaustiveObjective::Epa,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(epa.candidates, 36);

        let big = cfg(64, 2, 32, 2);
        let ch = realization(&big, 8);
        assert!(matches!(
            exhaustive_as(&ch, &big, &ExhaustiveOptions::default()),
            Err(SearchError::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn exhaustive_tie_goes_to_smallest_mask() {
        let c = cfg(4, 1, 2, 1);
        let ch = with_norms(&[1e-6; 4]);
        let r = exhaustive_as(&ch, &c, &ExhaustiveOptions::default()).unwrap();
        assert_eq!(r.mask.active_indices(), vec![2, 3]);
    }
}
