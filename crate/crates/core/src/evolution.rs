//! (μ+λ) evolution with age-fitness Pareto survivor selection.
//!
//! Each generation ages the survivors, breeds λ offspring by mutating either
//! the body or the brain of a uniformly drawn parent, injects one fresh random
//! individual, evaluates the newcomers in parallel and keeps μ individuals by
//! non-dominated sorting on (age ↓, fitness ↑).
//!
//! All randomness comes from ChaCha8 streams keyed by
//! `(master_seed, generation, slot)`, so results do not depend on how many
//! worker threads evaluate episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::{ControllerGenome, ControllerKind};
use crate::error::{Error, Result};
use crate::morphology::{MorphologyGenome, DEFAULT_RETRY_CAP};
use crate::walker::{evaluate_fitness, EvalSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MutationKind {
    Body,
    Brain,
    Fresh,
}

impl MutationKind {
    pub fn name(self) -> &'static str {
        match self {
            MutationKind::Body => "body",
            MutationKind::Brain => "brain",
            MutationKind::Fresh => "fresh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "body" => Ok(MutationKind::Body),
            "brain" => Ok(MutationKind::Brain),
            "fresh" => Ok(MutationKind::Fresh),
            _ => Err(Error::rejected(format!("unknown mutation kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub morphology: MorphologyGenome,
    pub controller: ControllerGenome,
    pub age: u32,
    pub fitness: Option<f64>,
    pub id: u64,
    pub parent_id: Option<u64>,
    pub mutation_kind: MutationKind,
    pub parent_fitness_at_birth: Option<f64>,
    /// Generation in which the individual was created (0 = initial population).
    pub born: u64,
}

impl Individual {
    pub fn fitness_or_err(&self) -> Result<f64> {
        self.fitness
            .ok_or_else(|| Error::rejected(format!("individual {} has not been evaluated", self.id)))
    }

    /// True when the individual is an offspring that beat its parent.
    pub fn improved_on_parent(&self) -> bool {
        match (self.fitness, self.parent_fitness_at_birth) {
            (Some(f), Some(p)) => f > p,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainingMode {
    CoOptimize,
    FixedBody(MorphologyGenome),
    MultiBody(Vec<MorphologyGenome>),
}

impl TrainingMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainingMode::CoOptimize => "co-optimize",
            TrainingMode::FixedBody(_) => "fixed-body",
            TrainingMode::MultiBody(_) => "multi-body",
        }
    }

    pub fn mutates_body(&self) -> bool {
        matches!(self, TrainingMode::CoOptimize)
    }

    /// The body stored on individuals that do not own their morphology.
    fn nominal_body(&self) -> Option<MorphologyGenome> {
        match self {
            TrainingMode::CoOptimize => None,
            TrainingMode::FixedBody(b) => Some(*b),
            TrainingMode::MultiBody(bs) => bs.first().copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub mu: usize,
    pub lambda: usize,
    pub generations: u64,
    pub p_body_mutation: f64,
    pub controller_sigma: f64,
    pub controller_kind: ControllerKind,
    pub mode: TrainingMode,
    pub master_seed: u64,
    pub morph_retry_cap: usize,
    /// Generations after which the current champion is copied into the artifacts.
    pub snapshot_generations: Vec<u64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            mu: 16,
            lambda: 16,
            generations: 100,
            p_body_mutation: 0.5,
            controller_sigma: 0.1,
            controller_kind: ControllerKind::Modular,
            mode: TrainingMode::CoOptimize,
            master_seed: 0,
            morph_retry_cap: DEFAULT_RETRY_CAP,
            snapshot_generations: Vec::new(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.lambda == 0 {
            return Err(Error::rejected("mu and lambda must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_body_mutation) {
            return Err(Error::rejected("p_body_mutation must lie in [0, 1]"));
        }
        if !(self.controller_sigma.is_finite() && self.controller_sigma >= 0.0) {
            return Err(Error::rejected("controller_sigma must be finite and non-negative"));
        }
        if self.morph_retry_cap == 0 {
            return Err(Error::rejected("morph_retry_cap must be at least 1"));
        }
        match &self.mode {
            TrainingMode::CoOptimize => {}
            TrainingMode::FixedBody(b) => {
                if !b.is_valid() {
                    return Err(Error::rejected("fixed body is not a valid morphology"));
                }
            }
            TrainingMode::MultiBody(bs) => {
                if bs.is_empty() {
                    return Err(Error::rejected("multi-body mode needs at least one body"));
                }
                if let Some(b) = bs.iter().find(|b| !b.is_valid()) {
                    return Err(Error::rejected(format!("catalog body {} is not valid", b.to_compact())));
                }
            }
        }
        Ok(())
    }
}

/// Stream for `(generation, slot)`. Generation 0 seeds the initial population.
pub fn derived_rng(master_seed: u64, generation: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((generation << 24) | (slot & 0xff_ffff));
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffspringRecord {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub mutation_kind: MutationKind,
    pub fitness: f64,
    pub parent_fitness_at_birth: Option<f64>,
    pub success: bool,
}

impl OffspringRecord {
    fn of(ind: &Individual) -> Result<Self> {
        Ok(OffspringRecord {
            id: ind.id,
            parent_id: ind.parent_id,
            mutation_kind: ind.mutation_kind,
            fitness: ind.fitness_or_err()?,
            parent_fitness_at_birth: ind.parent_fitness_at_birth,
            success: ind.improved_on_parent(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationLog {
    pub generation: u64,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub pool_size: usize,
    /// The λ offspring followed by the injected fresh individual.
    pub offspring: Vec<OffspringRecord>,
}

impl GenerationLog {
    fn count(&self, kind: MutationKind, success_only: bool) -> usize {
        self.offspring
            .iter()
            .filter(|r| r.mutation_kind == kind && (r.success || !success_only))
            .count()
    }

    pub fn n_body_success(&self) -> usize {
        self.count(MutationKind::Body, true)
    }

    pub fn n_brain_success(&self) -> usize {
        self.count(MutationKind::Brain, true)
    }

    pub fn n_body_attempted(&self) -> usize {
        self.count(MutationKind::Body, false)
    }

    pub fn n_brain_attempted(&self) -> usize {
        self.count(MutationKind::Brain, false)
    }
}

/// One row per individual ever created.
#[derive(Clone, Debug, PartialEq)]
pub struct LineageRecord {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub mutation_kind: MutationKind,
    pub born: u64,
    pub fitness: f64,
    pub parent_fitness_at_birth: Option<f64>,
}

impl LineageRecord {
    pub fn of(ind: &Individual) -> Result<Self> {
        Ok(LineageRecord {
            id: ind.id,
            parent_id: ind.parent_id,
            mutation_kind: ind.mutation_kind,
            born: ind.born,
            fitness: ind.fitness_or_err()?,
            parent_fitness_at_birth: ind.parent_fitness_at_birth,
        })
    }

    pub fn success(&self) -> bool {
        self.parent_fitness_at_birth.is_some_and(|p| self.fitness > p)
    }
}

/// `a` dominates `b` under (minimize age, maximize fitness).
fn dominates(a: (u32, f64), b: (u32, f64)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

/// Non-dominated sorting; returns fronts of pool indices, best first, each
/// front in ascending index order.
pub fn pareto_rank(pool: &[Individual]) -> Result<Vec<Vec<usize>>> {
    let keys: Vec<(u32, f64)> = pool
        .iter()
        .map(|ind| Ok((ind.age, ind.fitness_or_err()?)))
        .collect::<Result<_>>()?;
    let n = keys.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(keys[i], keys[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

fn fill_order(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    let (fa, fb) = (a.fitness.unwrap_or(f64::NEG_INFINITY), b.fitness.unwrap_or(f64::NEG_INFINITY));
    fb.total_cmp(&fa)
        .then(a.age.cmp(&b.age))
        .then(a.id.cmp(&b.id))
}

/// Keeps `mu` individuals: whole fronts in order, then the best of the
/// partial front by fitness (ties: younger, then lower id). When the first
/// front alone overflows, its youngest member is kept in place of the last
/// fitness-ranked pick so both objectives' extremes survive.
pub fn select_survivors(pool: Vec<Individual>, mu: usize) -> Result<Vec<Individual>> {
    if mu >= pool.len() {
        return Ok(pool);
    }
    let fronts = pareto_rank(&pool)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(mu);
    for (rank, front) in fronts.iter().enumerate() {
        let room = mu - chosen.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            chosen.extend_from_slice(front);
            continue;
        }
        let mut ordered = front.clone();
        ordered.sort_by(|&a, &b| fill_order(&pool[a], &pool[b]));
        let mut take: Vec<usize> = ordered[..room].to_vec();
        if rank == 0 && room >= 2 {
            let youngest = *front
                .iter()
                .min_by(|&&a, &&b| {
                    pool[a]
                        .age
                        .cmp(&pool[b].age)
                        .then(fill_order(&pool[a], &pool[b]))
                })
                .expect("front is non-empty");
            if !take.contains(&youngest) {
                take[room - 1] = youngest;
            }
        }
        chosen.extend(take);
        break;
    }
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    Ok(chosen
        .into_iter()
        .map(|i| slots[i].take().expect("each index chosen once"))
        .collect())
}

pub fn min_over_bodies<I: IntoIterator<Item = f64>>(fitnesses: I) -> f64 {
    fitnesses.into_iter().fold(f64::INFINITY, f64::min)
}

pub fn evaluate_individual(ind: &Individual, mode: &TrainingMode, settings: &EvalSettings) -> Result<f64> {
    match mode {
        TrainingMode::CoOptimize => evaluate_fitness(&ind.morphology, &ind.controller, settings),
        TrainingMode::FixedBody(body) => evaluate_fitness(body, &ind.controller, settings),
        TrainingMode::MultiBody(bodies) => {
            let scores = bodies
                .iter()
                .map(|b| evaluate_fitness(b, &ind.controller, settings))
                .collect::<Result<Vec<_>>>()?;
            Ok(min_over_bodies(scores))
        }
    }
}

pub fn make_offspring<R: Rng + ?Sized>(
    parent: &Individual,
    cfg: &EvolutionConfig,
    rng: &mut R,
    id: u64,
    born: u64,
) -> Result<Individual> {
    let parent_fitness = parent.fitness_or_err()?;
    let want_body = cfg.mode.mutates_body() && rng.random_bool(cfg.p_body_mutation);
    let body_child = if want_body {
        match parent.morphology.mutate(rng, cfg.morph_retry_cap) {
            Ok(m) => Some(m),
            Err(Error::MutationFailed { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let (morphology, controller, mutation_kind) = match body_child {
        Some(m) => (m, parent.controller.clone(), MutationKind::Body),
        None => (
            parent.morphology,
            parent.controller.mutate(rng, cfg.controller_sigma),
            MutationKind::Brain,
        ),
    };
    Ok(Individual {
        morphology,
        controller,
        age: 0,
        fitness: None,
        id,
        parent_id: Some(parent.id),
        mutation_kind,
        parent_fitness_at_birth: Some(parent_fitness),
        born,
    })
}

pub fn fresh_individual<R: Rng + ?Sized>(
    cfg: &EvolutionConfig,
    settings: &EvalSettings,
    rng: &mut R,
    id: u64,
    born: u64,
) -> Result<Individual> {
    let morphology = match cfg.mode.nominal_body() {
        Some(b) => b,
        None => MorphologyGenome::random(rng, cfg.morph_retry_cap)?,
    };
    let controller = ControllerGenome::init(cfg.controller_kind, &settings.observation, rng);
    Ok(Individual {
        morphology,
        controller,
        age: 0,
        fitness: None,
        id,
        parent_id: None,
        mutation_kind: MutationKind::Fresh,
        parent_fitness_at_birth: None,
        born,
    })
}

fn evaluate_all(inds: &mut [Individual], mode: &TrainingMode, settings: &EvalSettings) -> Result<()> {
    let scores: Vec<Result<f64>> = inds
        .par_iter()
        .map(|ind| evaluate_individual(ind, mode, settings))
        .collect();
    for (ind, score) in inds.iter_mut().zip(scores) {
        ind.fitness = Some(score?);
    }
    Ok(())
}

/// Mutable state of one evolutionary run.
#[derive(Clone, Debug)]
pub struct Evolution {
    cfg: EvolutionConfig,
    settings: EvalSettings,
    population: Vec<Individual>,
    champion: Individual,
    generation: u64,
    next_id: u64,
}

impl Evolution {
    /// Creates and evaluates the initial population of `mu` fresh individuals.
    pub fn new(cfg: EvolutionConfig, settings: EvalSettings) -> Result<Self> {
        cfg.validate()?;
        settings.validate()?;
        let mut population = (0..cfg.mu as u64)
            .map(|slot| {
                let mut rng = derived_rng(cfg.master_seed, 0, slot);
                fresh_individual(&cfg, &settings, &mut rng, slot, 0)
            })
            .collect::<Result<Vec<_>>>()?;
        evaluate_all(&mut population, &cfg.mode, &settings)?;
        let champion = best_of(&population).clone();
        Ok(Evolution {
            next_id: cfg.mu as u64,
            cfg,
            settings,
            population,
            champion,
            generation: 0,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn settings(&self) -> &EvalSettings {
        &self.settings
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    /// Best individual seen so far (earliest wins ties).
    pub fn champion(&self) -> &Individual {
        &self.champion
    }

    /// Number of completed generations.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Advances one generation; returns the newcomers (evaluated) and the log.
    pub fn evolve_generation(&mut self) -> Result<(Vec<Individual>, GenerationLog)> {
        let generation = self.generation + 1;
        for ind in &mut self.population {
            ind.age += 1;
        }

        let lambda = self.cfg.lambda;
        let mut newcomers = Vec::with_capacity(lambda + 1);
        for slot in 0..lambda as u64 {
            let mut rng = derived_rng(self.cfg.master_seed, generation, slot);
            let parent = &self.population[rng.random_range(0..self.population.len())];
            newcomers.push(make_offspring(parent, &self.cfg, &mut rng, self.next_id, generation)?);
            self.next_id += 1;
        }
        let mut rng = derived_rng(self.cfg.master_seed, generation, lambda as u64);
        newcomers.push(fresh_individual(&self.cfg, &self.settings, &mut rng, self.next_id, generation)?);
        self.next_id += 1;

        evaluate_all(&mut newcomers, &self.cfg.mode, &self.settings)?;

        let offspring = newcomers.iter().map(OffspringRecord::of).collect::<Result<Vec<_>>>()?;
        let best_new = best_of(&newcomers);
        if best_new.fitness > self.champion.fitness {
            self.champion = best_new.clone();
        }

        let mut pool = std::mem::take(&mut self.population);
        pool.extend(newcomers.iter().cloned());
        let pool_size = pool.len();
        self.population = select_survivors(pool, self.cfg.mu)?;
        self.generation = generation;

        let fits: Vec<f64> = self.population.iter().map(|i| i.fitness.unwrap_or(f64::NAN)).collect();
        let log = GenerationLog {
            generation,
            best_fitness: fits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_fitness: fits.iter().sum::<f64>() / fits.len() as f64,
            pool_size,
            offspring,
        };
        Ok((newcomers, log))
    }
}

fn best_of(inds: &[Individual]) -> &Individual {
    inds.iter()
        .reduce(|best, x| if x.fitness > best.fitness { x } else { best })
        .expect("non-empty")
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub seed: u64,
    pub champion: Individual,
    pub logs: Vec<GenerationLog>,
    pub lineage: Vec<LineageRecord>,
    pub final_population: Vec<Individual>,
    /// Champion as of each configured snapshot generation.
    pub snapshots: Vec<(u64, Individual)>,
}

impl RunArtifacts {
    /// Best-so-far fitness after each generation, starting with generation 0.
    pub fn best_so_far(&self) -> Vec<f64> {
        let initial = self
            .lineage
            .iter()
            .filter(|r| r.born == 0)
            .map(|r| r.fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut best = initial;
        let mut out = vec![best];
        for log in &self.logs {
            for r in &log.offspring {
                best = best.max(r.fitness);
            }
            out.push(best);
        }
        out
    }
}

/// View handed to [`run_evolution`]'s observer: once for the initial
/// population (`log` is `None`) and once after every generation.
pub struct GenerationEvent<'a> {
    pub state: &'a Evolution,
    pub log: Option<&'a GenerationLog>,
    /// Individuals created in this step, evaluated.
    pub newcomers: &'a [Individual],
}

pub fn run_evolution<F>(cfg: EvolutionConfig, settings: EvalSettings, mut on_generation: F) -> Result<RunArtifacts>
where
    F: FnMut(GenerationEvent<'_>) -> Result<()>,
{
    let generations = cfg.generations;
    let snapshot_at = cfg.snapshot_generations.clone();
    let mut evo = Evolution::new(cfg, settings)?;
    let mut lineage = evo
        .population()
        .iter()
        .map(LineageRecord::of)
        .collect::<Result<Vec<_>>>()?;
    on_generation(GenerationEvent {
        state: &evo,
        log: None,
        newcomers: evo.population(),
    })?;
    let mut snapshots = Vec::new();
    if snapshot_at.contains(&0) {
        snapshots.push((0, evo.champion().clone()));
    }
    let mut logs = Vec::with_capacity(generations as usize);
    for _ in 0..generations {
        let (newcomers, log) = evo.evolve_generation()?;
        for ind in &newcomers {
            lineage.push(LineageRecord::of(ind)?);
        }
        on_generation(GenerationEvent {
            state: &evo,
            log: Some(&log),
            newcomers: &newcomers,
        })?;
        if snapshot_at.contains(&evo.generation()) {
            snapshots.push((evo.generation(), evo.champion().clone()));
        }
        logs.push(log);
    }
    Ok(RunArtifacts {
        seed: evo.config().master_seed,
        champion: evo.champion().clone(),
        logs,
        lineage,
        final_population: evo.population().to_vec(),
        snapshots,
    })
}
