//! Genetic algorithm engine and the centralized selector built on it.
//!
//! The engine works on binary genomes split into chromosomes. A [`Layout`]
//! describes the split and the RF budget: either per chromosome (one
//! chromosome per subarray, the centralized case) or for the whole genome
//! (one subarray split into two half-chromosomes, the distributed case).
//! Every generation runs elitism, pairwise tournaments, chromosome-level
//! crossover and budget-preserving mutation.

use std::ops::Range;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::n_as;
use crate::config::SystemConfig;
use crate::error::ConfigError;
use crate::model::{ChannelRealization, SelectionMask};
use crate::power::MaskEvaluator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    /// Population size `N_p`.
    pub population: usize,
    /// Elite individuals carried over unchanged, `N_e`.
    pub elites: usize,
    /// Tournaments (and crossover pair draws) per generation, `N_s`.
    pub tournaments: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub max_generations: usize,
    pub stall_generations: usize,
}

impl GaParams {
    /// Tuned values for the centralized selector.
    pub fn ga_ra() -> Self {
        Self {
            population: 80,
            elites: 8,
            tournaments: 36,
            p_crossover: 0.33,
            p_mutation: 0.13,
            max_generations: 1000,
            stall_generations: 300,
        }
    }

    /// Tuned values for the per-subarray GA of the distributed selector.
    pub fn dga_ra() -> Self {
        Self {
            population: 80,
            elites: 8,
            tournaments: 36,
            p_crossover: 0.35,
            p_mutation: 0.36,
            max_generations: 100,
            stall_generations: 30,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.tournaments == 0 {
            return fail("tournaments must be >= 1".into());
        }
        if self.elites >= self.population {
            return fail(format!(
                "elites ({}) must be fewer than the population ({})",
                self.elites, self.population
            ));
        }
        if self.elites + 2 * self.tournaments != self.population {
            return fail(format!(
                "elites + 2 * tournaments = {} must equal population = {}",
                self.elites + 2 * self.tournaments,
                self.population
            ));
        }
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<bool>,
    pub score: Option<f64>,
}

impl Individual {
    pub fn new(genes: Vec<bool>) -> Self {
        Self { genes, score: None }
    }

    fn score_or_zero(&self) -> f64 {
        self.score.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// At most `n` ones in every chromosome.
    PerChromosome(usize),
    /// At most `n` ones in the whole genome.
    Whole(usize),
}

/// Chromosome boundaries and RF budget of a genome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    chromosomes: Vec<Range<usize>>,
    budget: Budget,
}

impl Layout {
    /// One chromosome per subarray, `N_b` ones each.
    pub fn subarrays(cfg: &SystemConfig) -> Self {
        let mb = cfg.antennas_per_subarray();
        Self {
            chromosomes: (0..cfg.num_subarrays).map(|b| b * mb..(b + 1) * mb).collect(),
            budget: Budget::PerChromosome(cfg.rf_per_subarray()),
        }
    }

    /// A single subarray of `len` genes split into halves, `budget` ones overall.
    pub fn halves(len: usize, budget: usize) -> Self {
        let mid = len / 2;
        Self {
            chromosomes: vec![0..mid, mid..len],
            budget: Budget::Whole(budget),
        }
    }

    pub fn len(&self) -> usize {
        self.chromosomes.last().map_or(0, |r| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chromosomes(&self) -> &[Range<usize>] {
        &self.chromosomes
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn is_feasible(&self, genes: &[bool]) -> bool {
        let ones = |r: &Range<usize>| genes[r.clone()].iter().filter(|&&g| g).count();
        genes.len() == self.len()
            && match self.budget {
                Budget::PerChromosome(n) => self.chromosomes.iter().all(|r| ones(r) <= n),
                Budget::Whole(n) => ones(&(0..genes.len())) <= n,
            }
    }

    /// True when the budget admits every gene, so the all-ones genome is the
    /// only non-dominated point.
    fn is_trivial(&self) -> bool {
        match self.budget {
            Budget::PerChromosome(n) => self.chromosomes.iter().all(|r| r.len() <= n),
            Budget::Whole(n) => self.len() <= n,
        }
    }

    /// Uniform genome with the budget saturated.
    pub fn random_genome<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        let mut genes = vec![false; self.len()];
        match self.budget {
            Budget::PerChromosome(n) => {
                for r in &self.chromosomes {
                    for i in index::sample(rng, r.len(), n.min(r.len())) {
                        genes[r.start + i] = true;
                    }
                }
            }
            Budget::Whole(n) => {
                for i in index::sample(rng, self.len(), n.min(self.len())) {
                    genes[i] = true;
                }
            }
        }
        genes
    }
}

/// Feasibility-preserving mutation.
///
/// Each chromosome mutates with probability `p_m`: a uniformly drawn gene is
/// flipped, except that a 0 is redrawn while the budget it would exceed is
/// already saturated. A chromosome with no eligible gene (saturated budget and
/// no 1 inside it, possible only under a whole-genome budget) is left alone.
pub fn mutate<R: Rng + ?Sized>(offspring: &mut [Individual], p_mutation: f64, layout: &Layout, rng: &mut R) {
    for ind in offspring.iter_mut() {
        for r in &layout.chromosomes {
            if r.is_empty() || !rng.random_bool(p_mutation) {
                continue;
            }
            let saturated = |genes: &[bool]| match layout.budget {
                Budget::PerChromosome(n) => genes[r.clone()].iter().filter(|&&g| g).count() >= n,
                Budget::Whole(n) => genes.iter().filter(|&&g| g).count() >= n,
            };
            let sat = saturated(&ind.genes);
            if sat && !ind.genes[r.clone()].iter().any(|&g| g) {
                continue;
            }
            loop {
                let i = rng.random_range(r.clone());
                if !ind.genes[i] && sat {
                    continue;
                }
                ind.genes[i] = !ind.genes[i];
                ind.score = None;
                break;
            }
        }
    }
}

/// `n` pairwise tournaments between distinct uniformly drawn individuals;
/// returns the winners' indices. Ties go to the first drawn.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], n: usize, rng: &mut R) -> Vec<usize> {
    let len = pop.len();
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..len);
            if len == 1 {
                return a;
            }
            let mut b = rng.random_range(0..len - 1);
            if b >= a {
                b += 1;
            }
            if pop[b].score_or_zero() > pop[a].score_or_zero() {
                b
            } else {
                a
            }
        })
        .collect()
}

/// Chromosome-level crossover: with probability `p_c` child 1 inherits
/// chromosome `j` from parent 1 (and child 2 from parent 2), otherwise the
/// two are exchanged.
pub fn crossover_pair<R: Rng + ?Sized>(
    parent1: &Individual,
    parent2: &Individual,
    p_crossover: f64,
    layout: &Layout,
    rng: &mut R,
) -> (Individual, Individual) {
    let mut c1 = parent1.genes.clone();
    let mut c2 = parent2.genes.clone();
    for r in &layout.chromosomes {
        if !rng.random_bool(p_crossover) {
            c1[r.clone()].copy_from_slice(&parent2.genes[r.clone()]);
            c2[r.clone()].copy_from_slice(&parent1.genes[r.clone()]);
        }
    }
    let keep = |c: &Vec<bool>, p: &Individual| if *c == p.genes { p.score } else { None };
    let s1 = keep(&c1, parent1);
    let s2 = keep(&c2, parent2);
    (
        Individual { genes: c1, score: s1 },
        Individual { genes: c2, score: s2 },
    )
}

/// Switches off uniformly chosen active genes until a whole-genome budget
/// holds. No-op for per-chromosome budgets, which crossover cannot violate.
pub fn repair<R: Rng + ?Sized>(ind: &mut Individual, layout: &Layout, rng: &mut R) {
    if let Budget::Whole(n) = layout.budget {
        let mut on: Vec<usize> = crate::model::active_positions(&ind.genes);
        while on.len() > n {
            let pick = rng.random_range(0..on.len());
            ind.genes[on.swap_remove(pick)] = false;
            ind.score = None;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub average: f64,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Vec<bool>,
    pub best_score: f64,
    /// Best and average score of every population, starting with the initial one.
    pub trace: Vec<GenerationStats>,
    /// Fitness calls made by the engine.
    pub fitness_calls: usize,
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let best = pop.iter().map(Individual::score_or_zero).fold(f64::NEG_INFINITY, f64::max);
    let average = pop.iter().map(Individual::score_or_zero).sum::<f64>() / pop.len() as f64;
    GenerationStats {
        generation,
        best,
        average,
    }
}

/// Runs the GA from `seeds` (completed with random saturated genomes up to
/// the population size) until `max_generations` or until the best score of
/// the newest population equals the best of the population
/// `stall_generations + 1` generations earlier.
pub fn run_ga<R, F>(
    layout: &Layout,
    params: &GaParams,
    seeds: Vec<Vec<bool>>,
    mut fitness: F,
    rng: &mut R,
) -> GaOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&[bool]) -> f64,
{
    let mut calls = 0usize;
    let mut score = |ind: &mut Individual| {
        if ind.score.is_none() {
            calls += 1;
            ind.score = Some(fitness(&ind.genes));
        }
    };

    if layout.is_trivial() {
        let mut only = Individual::new(vec![true; layout.len()]);
        score(&mut only);
        let s = only.score_or_zero();
        return GaOutcome {
            best: only.genes,
            best_score: s,
            trace: vec![GenerationStats {
                generation: 0,
                best: s,
                average: s,
            }],
            fitness_calls: calls,
        };
    }

    let mut pop: Vec<Individual> = seeds
        .into_iter()
        .take(params.population)
        .map(Individual::new)
        .collect();
    while pop.len() < params.population {
        pop.push(Individual::new(layout.random_genome(rng)));
    }
    for ind in pop.iter_mut() {
        debug_assert!(layout.is_feasible(&ind.genes));
        score(ind);
    }
    let mut trace = vec![stats(0, &pop)];

    for t in 0..params.max_generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| pop[b].score_or_zero().total_cmp(&pop[a].score_or_zero()).then(a.cmp(&b)));
        let mut next: Vec<Individual> = order[..params.elites].iter().map(|&i| pop[i].clone()).collect();

        let winners = tournament_select(&pop, params.tournaments, rng);
        let mut children = Vec::with_capacity(2 * params.tournaments);
        for _ in 0..params.tournaments {
            let p1 = &pop[winners[rng.random_range(0..winners.len())]];
            let p2 = &pop[winners[rng.random_range(0..winners.len())]];
            let (mut c1, mut c2) = crossover_pair(p1, p2, params.p_crossover, layout, rng);
            repair(&mut c1, layout, rng);
            repair(&mut c2, layout, rng);
            children.push(c1);
            children.push(c2);
        }
        debug_assert!(children.iter().all(|c| layout.is_feasible(&c.genes)));
        mutate(&mut children, params.p_mutation, layout, rng);
        debug_assert!(children.iter().all(|c| layout.is_feasible(&c.genes)));
        for c in children.iter_mut() {
            score(c);
        }
        next.extend(children);
        debug_assert_eq!(next.len(), params.population);
        pop = next;
        trace.push(stats(t + 1, &pop));

        if t > params.stall_generations && trace[t + 1].best == trace[t - params.stall_generations].best {
            break;
        }
    }

    let best = pop
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.score_or_zero().total_cmp(&b.1.score_or_zero()).then(b.0.cmp(&a.0)))
        .map(|(_, ind)| ind.clone())
        .expect("non-empty population");
    GaOutcome {
        best_score: best.score_or_zero(),
        best: best.genes,
        trace,
        fitness_calls: calls,
    }
}

#[derive(Debug, Clone)]
pub struct GaRaOutcome {
    pub mask: SelectionMask,
    pub se: f64,
    pub trace: Vec<GenerationStats>,
    /// Distinct masks scored (cache misses).
    pub evaluations: usize,
}

/// Centralized joint antenna selection and power allocation: GA over the
/// whole array with the water-filling ZF spectral efficiency as fitness,
/// seeded with the norm-based selection.
pub fn ga_ra<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    params: &GaParams,
    rng: &mut R,
) -> GaRaOutcome {
    let layout = Layout::subarrays(cfg);
    let mb = cfg.antennas_per_subarray();
    let mut ev = MaskEvaluator::new(ch, cfg);
    let seed = n_as(ch, cfg).bits().to_vec();
    let out = run_ga(
        &layout,
        params,
        vec![seed],
        |genes| ev.score(&SelectionMask::from_bits(genes.to_vec(), mb)),
        rng,
    );
    GaRaOutcome {
        mask: SelectionMask::from_bits(out.best, mb),
        se: out.best_score,
        trace: out.trace,
        evaluations: ev.evaluations(),
    }
}
