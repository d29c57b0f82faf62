use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::seq::index;

use xlmimo_core::cost::{smw_kernel_flops, smw_kernel_flops_as_printed, Flops};
use xlmimo_core::ga::{crossover_pair, mutate, repair, Individual, Layout};
use xlmimo_core::linalg::{invert_hermitian_cholesky, smw_swap_update};
use xlmimo_core::model::{array_gramian, make_channel, make_geometry, subarray_gramian, SelectionMask};
use xlmimo_core::power::water_fill;
use xlmimo_core::seed::{channel_seed, method_seed, rng_from};
use xlmimo_core::{CMatrix, SystemConfig};

fn cfg(m: usize, n: usize, b: usize, k: usize) -> SystemConfig {
    SystemConfig {
        num_antennas: m,
        num_rf: n,
        num_subarrays: b,
        num_users: k,
        ..SystemConfig::desk_scale()
    }
}

fn random_mask(c: &SystemConfig, seed: u64) -> SelectionMask {
    let mut rng = rng_from(seed);
    let mb = c.antennas_per_subarray();
    let mut idx = Vec::new();
    for b in 0..c.num_subarrays {
        idx.extend(index::sample(&mut rng, mb, c.rf_per_subarray()).into_iter().map(|i| b * mb + i));
    }
    SelectionMask::from_indices(c, &idx)
}

fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gramian_is_sum_of_subarray_gramians(seed in any::<u64>(), b in 1usize..5, k in 1usize..6) {
        let c = cfg(8 * b, 4 * b, b, k);
        let mut rng = rng_from(seed);
        let geo = make_geometry(&c, &mut rng);
        let ch = make_channel(&c, &geo, &mut rng);
        let mask = random_mask(&c, seed ^ 1);
        let mut sum = CMatrix::zeros(k, k);
        for s in 0..b {
            sum += subarray_gramian(&ch, &mask, s);
        }
        // direct H_S^H H_S as an independent reference
        let rows = ch.rows_of(&mask.active_indices());
        let direct = rows.adjoint() * &rows;
        let g = array_gramian(&ch, &mask);
        prop_assert!(rel_err(&sum, &direct) < 1e-12);
        prop_assert!(rel_err(&g, &direct) < 1e-12);
    }

    #[test]
    fn smw_swap_matches_rebuilt_inverse(seed in any::<u64>(), k in 1usize..6, swaps in 1usize..4) {
        let c = cfg(32, 16, 2, k);
        let mut rng = rng_from(seed);
        let geo = make_geometry(&c, &mut rng);
        let ch = make_channel(&c, &geo, &mut rng);
        let mask = random_mask(&c, seed ^ 2);
        let inv = invert_hermitian_cholesky(&array_gramian(&ch, &mask)).unwrap();

        let on: Vec<usize> = mask.subarray_indices(0);
        let off: Vec<usize> = (0..16).filter(|m| !mask.is_active(*m)).collect();
        let out = &on[..swaps];
        let inn = &off[..swaps];
        let mut next = mask.clone();
        for (&o, &i) in out.iter().zip(inn) {
            next.set(o, false);
            next.set(i, true);
        }
        let updated = smw_swap_update(&inv, &ch.rows_of(out), &ch.rows_of(inn)).unwrap();
        let rebuilt = invert_hermitian_cholesky(&array_gramian(&ch, &next)).unwrap();
        prop_assert!(rel_err(&updated, &rebuilt) < 1e-9, "{}", rel_err(&updated, &rebuilt));
    }

    #[test]
    fn water_fill_spends_the_budget_and_levels_active_users(
        diag in prop::collection::vec(1e-3f64..1e3, 1..10),
        p_max in 1e-6f64..1e-2,
        noise in 1e-14f64..1e-9,
    ) {
        let k = diag.len();
        let g = CMatrix::from_fn(k, k, |i, j| if i == j { Complex64::new(1.0 / diag[i], 0.0) } else { Complex64::new(0.0, 0.0) });
        let a = water_fill(&g, p_max, noise).unwrap();
        let spent: f64 = a.active_users.iter().map(|&u| a.powers[u] / diag[u]).sum();
        prop_assert!((spent - p_max).abs() <= 1e-9 * p_max);
        for u in 0..k {
            let c = 1.0 / diag[u];
            if a.active_users.contains(&u) {
                prop_assert!(a.powers[u] > 0.0);
                prop_assert!(((a.powers[u] + noise) * c - a.water_level).abs() <= 1e-9 * a.water_level);
            } else {
                prop_assert_eq!(a.powers[u], 0.0);
                prop_assert!(noise * c >= a.water_level * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn printed_smw_count_differs_by_a_fixed_gap(nb in 1usize..200, k in 1usize..200) {
        let gap = smw_kernel_flops(nb, k) - smw_kernel_flops_as_printed(nb, k);
        let expect = Flops::from_integer(((nb * nb - nb) * (2 * k - 1)) as i128);
        prop_assert_eq!(gap, expect);
    }

    #[test]
    fn genetic_operators_keep_individuals_feasible(seed in any::<u64>(), p_c in 0.0f64..1.0, p_m in 0.0f64..1.0) {
        let c = cfg(24, 9, 3, 2);
        let layout = Layout::subarrays(&c);
        let mut rng = rng_from(seed);
        let a = Individual::new(layout.random_genome(&mut rng));
        let b = Individual::new(layout.random_genome(&mut rng));
        let (mut x, mut y) = crossover_pair(&a, &b, p_c, &layout, &mut rng);
        repair(&mut x, &layout, &mut rng);
        repair(&mut y, &layout, &mut rng);
        let mut pair = [x, y];
        mutate(&mut pair, p_m, &layout, &mut rng);
        for ind in &pair {
            prop_assert!(layout.is_feasible(&ind.genes));
            let mask = SelectionMask::from_bits(ind.genes.clone(), 8);
            prop_assert!(mask.is_feasible(3));
        }

        let halves = Layout::halves(12, 5);
        let a = Individual::new(halves.random_genome(&mut rng));
        let b = Individual::new(halves.random_genome(&mut rng));
        let (mut x, _) = crossover_pair(&a, &b, p_c, &halves, &mut rng);
        repair(&mut x, &halves, &mut rng);
        let mut one = [x];
        mutate(&mut one, p_m, &halves, &mut rng);
        prop_assert!(halves.is_feasible(&one[0].genes));
        prop_assert!(one[0].genes.iter().filter(|g| **g).count() <= 5);
    }

    #[test]
    fn seeds_are_pure_functions_of_their_inputs(master in any::<u64>(), i in 0usize..100, t in 0usize..100) {
        prop_assert_eq!(channel_seed(master, i, t), channel_seed(master, i, t));
        prop_assert_ne!(channel_seed(master, i, t), channel_seed(master, i, t + 1));
        let cs = channel_seed(master, i, t);
        prop_assert_ne!(method_seed(cs, "ga-ra"), method_seed(cs, "random"));

        let c = cfg(16, 8, 2, 3);
        let draw = |s| {
            let mut rng = rng_from(s);
            let geo = make_geometry(&c, &mut rng);
            make_channel(&c, &geo, &mut rng).h_matrix().clone()
        };
        prop_assert_eq!(draw(cs), draw(cs));
    }
}

#[test]
fn water_fill_matches_closed_form_for_two_users() {
    // c = (1, 4), P = 1, sigma = 0.1: mu = (1 + 0.5) / 2 = 0.75, p = (0.65, 0.0875)
    let g_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(4.0, 0.0)]));
    let a = water_fill(&g_inv, 1.0, 0.1).unwrap();
    assert!((a.water_level - 0.75).abs() < 1e-12);
    assert!((a.powers[0] - 0.65).abs() < 1e-12);
    assert!((a.powers[1] - 0.0875).abs() < 1e-12);
}
