//! ZF spectral efficiency, water-filling power allocation with user
//! deactivation, and the equal-power log-det capacity bound.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::PowerError;
use crate::linalg::{invert_hermitian_cholesky, CMatrix, CholeskyFactor};
use crate::model::{subarray_gramian, ChannelRealization, SelectionMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// Per-user power `p_k`, watts; zero for deactivated users.
    pub powers: Vec<f64>,
    /// Served users (0-based, ascending).
    pub active_users: Vec<usize>,
    /// Water level `mu`, watts.
    pub water_level: f64,
    /// Spectral efficiency, bit/s/Hz.
    pub achieved_se: f64,
}

impl PowerAllocation {
    pub fn empty(num_users: usize) -> Self {
        Self {
            powers: vec![0.0; num_users],
            active_users: Vec::new(),
            water_level: 0.0,
            achieved_se: 0.0,
        }
    }
}

/// `sum_k log2(1 + p_k / noise)`.
pub fn se_from_powers(powers: &[f64], noise: f64) -> f64 {
    powers.iter().map(|&p| (p / noise).ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

/// Drops row/column `d` from a Gramian inverse, returning the inverse of the
/// Gramian restricted to the remaining users (Schur complement).
fn remove_user(inv: &CMatrix, d: usize) -> CMatrix {
    let n = inv.nrows();
    let pivot = inv[(d, d)];
    let keep: Vec<usize> = (0..n).filter(|&i| i != d).collect();
    CMatrix::from_fn(n - 1, n - 1, |a, b| {
        let (i, j) = (keep[a], keep[b]);
        inv[(i, j)] - inv[(i, d)] * inv[(d, j)] / pivot
    })
}

/// Water filling over ZF-decoupled users.
///
/// With `c_k = [G^{-1}]_kk` over the served set, the water level is
/// `mu = (P_max + noise * sum c_k) / |served|` and `p_k = mu / c_k - noise`.
/// While some `p_k <= 0`, the single user with the most negative power is
/// deactivated, the inverse is recomputed for the Gramian of the remaining
/// users, and the split is repeated.
pub fn water_fill(g_inv: &CMatrix, p_max: f64, noise: f64) -> Result<PowerAllocation, PowerError> {
    let k = g_inv.nrows();
    let mut users: Vec<usize> = (0..k).collect();
    let mut reduced: Option<CMatrix> = None;
    loop {
        if users.is_empty() {
            return Err(PowerError::NoFeasibleUser);
        }
        let inv = reduced.as_ref().unwrap_or(g_inv);
        let diag: Vec<f64> = (0..users.len()).map(|i| inv[(i, i)].re).collect();
        if diag.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(PowerError::NoFeasibleUser);
        }
        let mu = (p_max + noise * diag.iter().sum::<f64>()) / users.len() as f64;
        let powers: Vec<f64> = diag.iter().map(|c| mu / c - noise).collect();
        let (worst, &p_min) = powers
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if p_min > 0.0 {
            let mut full = vec![0.0; k];
            for (slot, &u) in users.iter().enumerate() {
                full[u] = powers[slot];
            }
            let achieved_se = se_from_powers(&powers, noise);
            return Ok(PowerAllocation {
                powers: full,
                active_users: users,
                water_level: mu,
                achieved_se,
            });
        }
        let next = remove_user(inv, worst);
        users.remove(worst);
        reduced = Some(next);
    }
}

/// `log2 det(I + P_max / (K noise) G)`.
pub fn epa_capacity_bound(g: &CMatrix, p_max: f64, noise: f64) -> f64 {
    let k = g.nrows();
    if k == 0 {
        return 0.0;
    }
    let w = CMatrix::identity(k, k) + g.scale(p_max / (k as f64 * noise));
    CholeskyFactor::new(&w)
        .expect("I + cG is positive definite for PSD G")
        .ln_det()
        / std::f64::consts::LN_2
}

/// OPA fitness of a selection. Masks with fewer than `K` antennas or a
/// singular Gramian score 0 with an empty allocation.
pub fn evaluate_mask(
    ch: &ChannelRealization,
    mask: &SelectionMask,
    cfg: &SystemConfig,
) -> (f64, PowerAllocation) {
    let k = ch.num_users();
    if mask.count() < k {
        return (0.0, PowerAllocation::empty(k));
    }
    let g = crate::model::array_gramian(ch, mask);
    fitness_from_gramian(&g, cfg)
}

fn fitness_from_gramian(g: &CMatrix, cfg: &SystemConfig) -> (f64, PowerAllocation) {
    let k = g.nrows();
    let pa = invert_hermitian_cholesky(g)
        .ok()
        .and_then(|inv| water_fill(&inv, cfg.max_power_w, cfg.noise_power_w).ok());
    match pa {
        Some(pa) => (pa.achieved_se, pa),
        None => (0.0, PowerAllocation::empty(k)),
    }
}

/// SE of a Gramian inverse under OPA, 0 when water filling fails.
pub fn se_from_inverse(g_inv: &CMatrix, cfg: &SystemConfig) -> f64 {
    water_fill(g_inv, cfg.max_power_w, cfg.noise_power_w)
        .map(|pa| pa.achieved_se)
        .unwrap_or(0.0)
}

pub(crate) fn pack_bits(bits: &[bool]) -> Vec<u64> {
    bits.chunks(64)
        .map(|c| c.iter().enumerate().fold(0u64, |w, (i, &b)| w | (u64::from(b) << i)))
        .collect()
}

/// Memoizing OPA evaluator for one realization.
///
/// Array Gramians are assembled from cached subarray Gramians (keyed by the
/// chromosome bits), and scores are cached per mask, so re-visiting a mask
/// or recombining known chromosomes costs little.
pub struct MaskEvaluator<'a> {
    ch: &'a ChannelRealization,
    cfg: &'a SystemConfig,
    subarray_cache: HashMap<(usize, Vec<u64>), CMatrix>,
    score_cache: HashMap<Vec<u64>, f64>,
    evaluations: usize,
}

impl<'a> MaskEvaluator<'a> {
    /// Cache entries are dropped past this size to bound memory.
    const MAX_ENTRIES: usize = 1 << 16;

    pub fn new(ch: &'a ChannelRealization, cfg: &'a SystemConfig) -> Self {
        Self {
            ch,
            cfg,
            subarray_cache: HashMap::new(),
            score_cache: HashMap::new(),
            evaluations: 0,
        }
    }

    /// Number of distinct masks actually scored.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn score(&mut self, mask: &SelectionMask) -> f64 {
        let key = pack_bits(mask.bits());
        if let Some(&s) = self.score_cache.get(&key) {
            return s;
        }
        let k = self.ch.num_users();
        let s = if mask.count() < k {
            0.0
        } else {
            let mut g = CMatrix::zeros(k, k);
            for b in 0..mask.num_subarrays() {
                let ckey = (b, pack_bits(mask.chromosome(b)));
                if let Some(gb) = self.subarray_cache.get(&ckey) {
                    g += gb;
                } else {
                    let gb = subarray_gramian(self.ch, mask, b);
                    g += &gb;
                    if self.subarray_cache.len() >= Self::MAX_ENTRIES {
                        self.subarray_cache.clear();
                    }
                    self.subarray_cache.insert(ckey, gb);
                }
            }
            fitness_from_gramian(&g, self.cfg).0
        };
        self.evaluations += 1;
        if self.score_cache.len() >= Self::MAX_ENTRIES {
            self.score_cache.clear();
        }
        self.score_cache.insert(key, s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_channel, make_geometry};
    use crate::seed::rng_from;
    use nalgebra::DVector;
    use num_complex::Complex64;

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(
            v.len(),
            v.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    #[test]
    fn se_examples() {
        let n = 2.5e-13;
        assert_eq!(se_from_powers(&[n, n, n], n), 3.0);
        assert_eq!(se_from_powers(&[0.0, 0.0], n), 0.0);
        assert!((se_from_powers(&[3.0 * n, n], n) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_user_closed_form() {
        let (g, p, n) = (4.0, 2.0, 0.5);
        let pa = water_fill(&diag(&[1.0 / g]), p, n).unwrap();
        assert!((pa.powers[0] - p * g).abs() < 1e-12);
        assert!((pa.powers[0] / g - p).abs() < 1e-12);
        assert!((pa.achieved_se - (1.0 + p * g / n).log2()).abs() < 1e-12);
    }

    #[test]
    fn equal_diagonal_gives_equal_powers() {
        let pa = water_fill(&diag(&[0.5; 4]), 8.0, 0.1).unwrap();
        for p in &pa.powers {
            assert!((p - 8.0 / (4.0 * 0.5)).abs() < 1e-12);
        }
        assert_eq!(pa.active_users, vec![0, 1, 2, 3]);
    }

    #[test]
    fn weak_user_is_deactivated() {
        // c_3 = 1e6 c_1 with a budget too small to serve user 3
        let inv = diag(&[1.0, 2.0, 1e6]);
        let pa = water_fill(&inv, 10.0, 1.0).unwrap();
        assert_eq!(pa.active_users, vec![0, 1]);
        assert_eq!(pa.powers[2], 0.0);
        assert!(pa.powers[0] > 0.0 && pa.powers[1] > 0.0);
        let budget: f64 = pa.powers[0] * 1.0 + pa.powers[1] * 2.0;
        assert!((budget - 10.0).abs() < 1e-12);
    }

    #[test]
    fn deactivation_uses_reduced_gramian() {
        // Correlated users: dropping user 2 must change user 0's c_k.
        let g = CMatrix::from_row_slice(
            3,
            3,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.9, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.9, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.41, 0.0),
            ],
        );
        let inv = invert_hermitian_cholesky(&g).unwrap();
        let pa = water_fill(&inv, 1.0, 1.0).unwrap();
        assert_eq!(pa.active_users, vec![0, 1]);
        // restricted Gramian is diag(2, 1) -> c = (0.5, 1)
        let mu = (1.0 + 1.5) / 2.0;
        assert!((pa.powers[0] - (mu / 0.5 - 1.0)).abs() < 1e-12);
        assert!((pa.powers[1] - (mu / 1.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn epa_examples() {
        let (p, n, k) = (2.0, 0.5, 3usize);
        assert_eq!(epa_capacity_bound(&CMatrix::zeros(3, 3), p, n), 0.0);
        let g = CMatrix::identity(k, k).scale(k as f64 * n / p);
        assert!((epa_capacity_bound(&g, p, n) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_mask_conventions() {
        let cfg = SystemConfig {
            num_antennas: 16,
            num_rf: 8,
            num_subarrays: 2,
            num_users: 3,
            ..SystemConfig::full_scale()
        };
        let mut rng = rng_from(3);
        let geo = make_geometry(&cfg, &mut rng);
        let ch = make_channel(&cfg, &geo, &mut rng);
        let (se, pa) = evaluate_mask(&ch, &SelectionMask::empty(&cfg), &cfg);
        assert_eq!(se, 0.0);
        assert!(pa.active_users.is_empty());
        let two = SelectionMask::from_indices(&cfg, &[0, 9]);
        assert_eq!(evaluate_mask(&ch, &two, &cfg).0, 0.0);

        let mask = SelectionMask::from_indices(&cfg, &[0, 2, 5, 7, 8, 11, 12, 15]);
        let (se, pa) = evaluate_mask(&ch, &mask, &cfg);
        assert!(se > 0.0);
        assert_eq!(se, pa.achieved_se);
        let mut ev = MaskEvaluator::new(&ch, &cfg);
        assert!((ev.score(&mask) - se).abs() <= 1e-12 * se);
        ev.score(&mask);
        assert_eq!(ev.evaluations(), 1);
    }

    #[test]
    fn orthogonal_equal_norm_rows() {
        // |S| = K orthogonal rows of equal norm g: c = 1/g for all users
        let k = 4;
        let g: f64 = 3.0e-6;
        let h = CMatrix::identity(k, k).scale(g.sqrt());
        let ch = ChannelRealization::from_matrix(h);
        let cfg = SystemConfig {
            num_antennas: k,
            num_rf: k,
            num_subarrays: 1,
            num_users: k,
            ..SystemConfig::full_scale()
        };
        let (se, pa) = evaluate_mask(&ch, &SelectionMask::full(&cfg), &cfg);
        let per_user = (1.0 + cfg.max_power_w * g / (k as f64 * cfg.noise_power_w)).log2();
        assert!((se - k as f64 * per_user).abs() < 1e-10 * se);
        for p in pa.powers {
            assert!((p - cfg.max_power_w * g / k as f64).abs() < 1e-12 * p);
        }
    }
}
