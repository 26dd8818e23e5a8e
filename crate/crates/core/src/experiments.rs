//! Experiment procedures: batteries of co-optimization runs, fixed and
//! multi-body training, morphological transfer, mutation-success accounting,
//! convergence metrics and the desk-scale trend study.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::control::ControllerKind;
use crate::error::{Error, Result};
use crate::evolution::{
    derived_rng, run_evolution, EvolutionConfig, Individual, LineageRecord, MutationKind,
    RunArtifacts, TrainingMode,
};
use crate::morphology::{MorphologyGenome, DEFAULT_RETRY_CAP, GRID_SIDE};
use crate::walker::{evaluate_fitness, EvalSettings};

/// Named fixed bodies for fixed-morphology and joint training.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedMorphologyCatalog {
    entries: Vec<(String, MorphologyGenome)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    body: Vec<CatalogEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogEntry {
    name: String,
    rows: Vec<String>,
}

impl Default for FixedMorphologyCatalog {
    fn default() -> Self {
        let parse = |rows: &str| rows.parse::<MorphologyGenome>().expect("built-in body");
        FixedMorphologyCatalog {
            entries: vec![
                ("biped".into(), parse("33333\n33333\n33333\n33033\n33033\n")),
                ("worm".into(), parse("00000\n00000\n00000\n33333\n33333\n")),
                ("triped".into(), parse("33333\n33333\n30303\n30303\n30303\n")),
                ("block".into(), parse("33333\n33333\n33333\n33333\n33333\n")),
            ],
        }
    }
}

impl FixedMorphologyCatalog {
    pub fn new(entries: Vec<(String, MorphologyGenome)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::rejected("catalog must contain at least one body"));
        }
        let mut names = HashSet::new();
        for (name, body) in &entries {
            if !names.insert(name.as_str()) {
                return Err(Error::rejected(format!("duplicate catalog name {name:?}")));
            }
            if !body.is_valid() {
                return Err(Error::rejected(format!("catalog body {name:?} is not valid")));
            }
        }
        Ok(FixedMorphologyCatalog { entries })
    }

    /// Parses a catalog file:
    ///
    /// ```toml
    /// [[body]]
    /// name = "worm"
    /// rows = ["00000", "00000", "00000", "33333", "33333"]
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let entries = file
            .body
            .into_iter()
            .map(|e| {
                if e.rows.len() != GRID_SIDE {
                    return Err(Error::rejected(format!("body {:?} needs {GRID_SIDE} rows", e.name)));
                }
                Ok((e.name, MorphologyGenome::from_compact(&e.rows.concat())?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (name, body) in &self.entries {
            let rows: Vec<String> = body
                .to_string()
                .lines()
                .map(|r| format!("\"{r}\""))
                .collect();
            out.push_str(&format!("[[body]]\nname = \"{name}\"\nrows = [{}]\n\n", rows.join(", ")));
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<&MorphologyGenome> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    pub fn entries(&self) -> &[(String, MorphologyGenome)] {
        &self.entries
    }

    pub fn bodies(&self) -> Vec<MorphologyGenome> {
        self.entries.iter().map(|(_, b)| *b).collect()
    }
}

/// 1-based line number of a byte offset.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[derive(Debug)]
pub struct BatteryOutcome {
    pub runs: Vec<RunArtifacts>,
    pub failures: Vec<(u64, Error)>,
}

/// `n_runs` independent runs seeded `base_seed + i`; `base` supplies every
/// other setting. Failed runs are collected, not fatal.
pub fn run_battery(
    base: &EvolutionConfig,
    settings: &EvalSettings,
    n_runs: usize,
    base_seed: u64,
) -> Result<BatteryOutcome> {
    if n_runs == 0 {
        return Err(Error::rejected("a battery needs at least one run"));
    }
    let results: Vec<(u64, Result<RunArtifacts>)> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let cfg = EvolutionConfig {
                master_seed: seed,
                ..base.clone()
            };
            (seed, run_evolution(cfg, *settings, |_| Ok(())))
        })
        .collect();
    let mut outcome = BatteryOutcome {
        runs: Vec::new(),
        failures: Vec::new(),
    };
    for (seed, r) in results {
        match r {
            Ok(run) => outcome.runs.push(run),
            Err(e) => outcome.failures.push((seed, e)),
        }
    }
    Ok(outcome)
}

pub fn fixed_body_training(
    kind: ControllerKind,
    body: MorphologyGenome,
    generations: u64,
    seed: u64,
    settings: &EvalSettings,
) -> Result<RunArtifacts> {
    let cfg = EvolutionConfig {
        generations,
        controller_kind: kind,
        mode: TrainingMode::FixedBody(body),
        master_seed: seed,
        ..EvolutionConfig::default()
    };
    run_evolution(cfg, *settings, |_| Ok(()))
}

pub fn multi_morph_training(
    kind: ControllerKind,
    catalog: &FixedMorphologyCatalog,
    generations: u64,
    seed: u64,
    settings: &EvalSettings,
) -> Result<RunArtifacts> {
    let cfg = EvolutionConfig {
        generations,
        controller_kind: kind,
        mode: TrainingMode::MultiBody(catalog.bodies()),
        master_seed: seed,
        ..EvolutionConfig::default()
    };
    run_evolution(cfg, *settings, |_| Ok(()))
}

/// Below this source magnitude relative changes are flagged and left out of means.
pub const SMALL_SOURCE_GUARD: f64 = 0.1;

pub fn relative_change(f: f64, f_source: f64) -> f64 {
    (f - f_source) / f_source.abs().max(SMALL_SOURCE_GUARD)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferConfig {
    pub distances: Vec<usize>,
    pub samples_per_distance: usize,
    pub one_shot_lambda: usize,
    pub sigma: f64,
    pub retry_cap: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            distances: vec![1, 2, 3],
            samples_per_distance: 20,
            one_shot_lambda: 16,
            sigma: 0.1,
            retry_cap: DEFAULT_RETRY_CAP,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() || self.distances.contains(&0) {
            return Err(Error::rejected("transfer distances must be a non-empty list of positive integers"));
        }
        if self.samples_per_distance == 0 {
            return Err(Error::rejected("samples_per_distance must be at least 1"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::rejected("transfer sigma must be finite and non-negative"));
        }
        if self.retry_cap == 0 {
            return Err(Error::rejected("transfer retry_cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferSample {
    pub source_id: u64,
    pub source_fitness: f64,
    pub distance: usize,
    pub neighbor: MorphologyGenome,
    pub zero_shot_fitness: f64,
    pub one_shot_fitness: f64,
    pub relative_change_zero: f64,
    pub relative_change_one: f64,
    /// |source_fitness| below [`SMALL_SOURCE_GUARD`].
    pub small_source: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TransferReport {
    pub samples: Vec<TransferSample>,
    /// Distances at which fewer distinct neighbors than requested were found.
    pub shortfalls: Vec<(usize, usize)>,
}

impl TransferReport {
    /// Mean relative change at `distance` over unflagged samples.
    pub fn mean_relative_change(&self, distance: usize, one_shot: bool) -> Option<f64> {
        mean(self.samples.iter().filter(|s| s.distance == distance && !s.small_source).map(|s| {
            if one_shot {
                s.relative_change_one
            } else {
                s.relative_change_zero
            }
        }))
    }
}

fn mean<I: IntoIterator<Item = f64>>(xs: I) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Zero-shot and one-shot transfer of `champion`'s controller to sampled
/// neighbor bodies.
pub fn transfer_analysis(
    champion: &Individual,
    cfg: &TransferConfig,
    settings: &EvalSettings,
    seed: u64,
) -> Result<TransferReport> {
    cfg.validate()?;
    let source = champion.morphology;
    let f_source = evaluate_fitness(&source, &champion.controller, settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = TransferReport::default();
    let mut jobs: Vec<(usize, MorphologyGenome)> = Vec::new();
    for &d in &cfg.distances {
        let mut seen: HashSet<MorphologyGenome> = HashSet::new();
        let attempts = cfg.samples_per_distance * 50;
        for _ in 0..attempts {
            if seen.len() == cfg.samples_per_distance {
                break;
            }
            let Ok(n) = source.sample_neighbor(d, &mut rng, cfg.retry_cap) else {
                continue;
            };
            if n != source && seen.insert(n) {
                jobs.push((d, n));
            }
        }
        if seen.len() < cfg.samples_per_distance {
            report.shortfalls.push((d, cfg.samples_per_distance - seen.len()));
        }
    }

    let samples: Vec<Result<TransferSample>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(distance, neighbor))| {
            let zero = evaluate_fitness(&neighbor, &champion.controller, settings)?;
            let mut mrng = derived_rng(seed, 1, i as u64);
            let mut best = zero;
            for _ in 0..cfg.one_shot_lambda {
                let mutant = champion.controller.mutate(&mut mrng, cfg.sigma);
                best = best.max(evaluate_fitness(&neighbor, &mutant, settings)?);
            }
            Ok(TransferSample {
                source_id: champion.id,
                source_fitness: f_source,
                distance,
                neighbor,
                zero_shot_fitness: zero,
                one_shot_fitness: best,
                relative_change_zero: relative_change(zero, f_source),
                relative_change_one: relative_change(best, f_source),
                small_source: f_source.abs() < SMALL_SOURCE_GUARD,
            })
        })
        .collect();
    report.samples = samples.into_iter().collect::<Result<_>>()?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MutationAccounting {
    pub lineage_body_fraction: Option<f64>,
    pub population_body_fraction: Option<f64>,
    pub lineage_body_successes: usize,
    pub lineage_brain_successes: usize,
    pub population_body_successes: usize,
    pub population_brain_successes: usize,
}

fn fraction(body: usize, brain: usize) -> Option<f64> {
    (body + brain > 0).then(|| body as f64 / (body + brain) as f64)
}

/// Successful-mutation counts along the champion's ancestry and over every
/// offspring in the run.
pub fn mutation_accounting_from(lineage: &[LineageRecord], champion_id: u64) -> Result<MutationAccounting> {
    let by_id: HashMap<u64, &LineageRecord> = lineage.iter().map(|r| (r.id, r)).collect();
    let mut acc = MutationAccounting::default();
    for r in lineage.iter().filter(|r| r.success()) {
        match r.mutation_kind {
            MutationKind::Body => acc.population_body_successes += 1,
            MutationKind::Brain => acc.population_brain_successes += 1,
            MutationKind::Fresh => {}
        }
    }
    let mut current = Some(champion_id);
    let mut steps = 0;
    while let Some(id) = current {
        let r = by_id
            .get(&id)
            .ok_or_else(|| Error::Integrity(format!("lineage chain broken at individual {id}")))?;
        if r.success() {
            match r.mutation_kind {
                MutationKind::Body => acc.lineage_body_successes += 1,
                MutationKind::Brain => acc.lineage_brain_successes += 1,
                MutationKind::Fresh => {}
            }
        }
        steps += 1;
        if steps > lineage.len() {
            return Err(Error::Integrity("lineage chain contains a cycle".into()));
        }
        current = r.parent_id;
    }
    acc.lineage_body_fraction = fraction(acc.lineage_body_successes, acc.lineage_brain_successes);
    acc.population_body_fraction = fraction(acc.population_body_successes, acc.population_brain_successes);
    Ok(acc)
}

pub fn mutation_accounting(run: &RunArtifacts) -> Result<MutationAccounting> {
    mutation_accounting_from(&run.lineage, run.champion.id)
}

pub const CONVERGENCE_THRESHOLDS: [f64; 4] = [0.8, 0.9, 0.95, 0.99];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvergenceMetrics {
    /// First generation reaching each of [`CONVERGENCE_THRESHOLDS`] of the final value.
    pub generations: [usize; 4],
    /// True when the final value was not positive and the series was shifted
    /// so that its minimum is zero before scanning.
    pub shifted: bool,
}

pub fn convergence_metrics(series: &[f64]) -> Result<ConvergenceMetrics> {
    let (&last, _) = series
        .split_last()
        .ok_or_else(|| Error::rejected("convergence metrics need a non-empty series"))?;
    let shifted = last <= 0.0;
    let offset = if shifted {
        series.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    let final_value = last - offset;
    let mut generations = [0; 4];
    for (slot, theta) in generations.iter_mut().zip(CONVERGENCE_THRESHOLDS) {
        let target = theta * final_value;
        *slot = series
            .iter()
            .position(|&v| v - offset >= target)
            .unwrap_or(series.len() - 1);
    }
    Ok(ConvergenceMetrics { generations, shifted })
}

/// Best-so-far fitness for generations `0..=generations`, rebuilt from lineage rows.
pub fn best_so_far_from_lineage(lineage: &[LineageRecord], generations: u64) -> Vec<f64> {
    let mut per_gen = vec![f64::NEG_INFINITY; generations as usize + 1];
    for r in lineage {
        if let Some(slot) = per_gen.get_mut(r.born as usize) {
            *slot = slot.max(r.fitness);
        }
    }
    let mut best = f64::NEG_INFINITY;
    per_gen
        .into_iter()
        .map(|v| {
            best = best.max(v);
            best
        })
        .collect()
}

/// Per-run summary row.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub champion_fitness: f64,
    pub convergence: ConvergenceMetrics,
    pub accounting: MutationAccounting,
}

pub fn summarize_run(
    seed: u64,
    lineage: &[LineageRecord],
    champion_id: u64,
    generations: u64,
) -> Result<RunSummary> {
    let series = best_so_far_from_lineage(lineage, generations);
    let champion = lineage
        .iter()
        .find(|r| r.id == champion_id)
        .ok_or_else(|| Error::Integrity(format!("champion {champion_id} missing from lineage")))?;
    Ok(RunSummary {
        seed,
        champion_fitness: champion.fitness,
        convergence: convergence_metrics(&series)?,
        accounting: mutation_accounting_from(lineage, champion_id)?,
    })
}

/// Median and interquartile range (linear interpolation between order statistics).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Spread {
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
            n: v.len(),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendConfig {
    pub runs: usize,
    pub generations: u64,
    pub base_seed: u64,
    pub transfer: TransferConfig,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            runs: 8,
            generations: 300,
            base_seed: 1,
            transfer: TransferConfig {
                distances: vec![1],
                ..TransferConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParadigmTrend {
    pub kind: ControllerKind,
    pub champions: Vec<f64>,
    pub champion_spread: Spread,
    /// Mean zero-shot relative change at distance 1 per champion.
    pub per_run_zero_shot: Vec<f64>,
    pub zero_shot_spread: Option<Spread>,
    /// Mean over every unflagged sample of the paradigm.
    pub mean_zero_shot: Option<f64>,
    pub population_body_fraction: Option<f64>,
    pub lineage_body_fraction: Option<f64>,
    pub per_run_body_fraction: Vec<f64>,
    pub failed_runs: usize,
}

#[derive(Clone, Debug)]
pub struct TrendReport {
    pub global: ParadigmTrend,
    pub modular: ParadigmTrend,
}

impl TrendReport {
    /// Median modular champion at least the median global champion.
    pub fn champion_trend(&self) -> bool {
        self.modular.champion_spread.median >= self.global.champion_spread.median
    }

    /// Both mean zero-shot changes negative, modular drop no larger.
    pub fn transfer_trend(&self) -> bool {
        match (self.modular.mean_zero_shot, self.global.mean_zero_shot) {
            (Some(m), Some(g)) => m < 0.0 && g < 0.0 && m >= g,
            _ => false,
        }
    }

    /// Pooled body-success fraction higher for modular.
    pub fn body_fraction_trend(&self) -> bool {
        match (self.modular.population_body_fraction, self.global.population_body_fraction) {
            (Some(m), Some(g)) => m > g,
            _ => false,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in [&self.global, &self.modular] {
            let s = &p.champion_spread;
            out.push_str(&format!(
                "{}: champion median {:.4} IQR [{:.4}, {:.4}] (n={}, failed={})\n",
                p.kind, s.median, s.q1, s.q3, s.n, p.failed_runs
            ));
            match &p.zero_shot_spread {
                Some(z) => out.push_str(&format!(
                    "{}: zero-shot rel. change d=1 mean {} per-run median {:.4} IQR [{:.4}, {:.4}]\n",
                    p.kind,
                    fmt_opt(p.mean_zero_shot),
                    z.median,
                    z.q1,
                    z.q3
                )),
                None => out.push_str(&format!("{}: zero-shot rel. change d=1 unavailable\n", p.kind)),
            }
            let bf = Spread::of(&p.per_run_body_fraction);
            out.push_str(&format!(
                "{}: body-success fraction pooled {} lineage {} per-run median {}\n",
                p.kind,
                fmt_opt(p.population_body_fraction),
                fmt_opt(p.lineage_body_fraction),
                fmt_opt(bf.map(|b| b.median)),
            ));
        }
        for (name, ok) in [
            ("champion", self.champion_trend()),
            ("transfer", self.transfer_trend()),
            ("body-fraction", self.body_fraction_trend()),
        ] {
            out.push_str(&format!("trend {name}: {}\n", if ok { "holds" } else { "not observed" }));
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn paradigm_trend(
    kind: ControllerKind,
    cfg: &TrendConfig,
    settings: &EvalSettings,
) -> Result<ParadigmTrend> {
    let base = EvolutionConfig {
        generations: cfg.generations,
        controller_kind: kind,
        ..EvolutionConfig::default()
    };
    let battery = run_battery(&base, settings, cfg.runs, cfg.base_seed)?;
    if battery.runs.is_empty() {
        return Err(Error::Integrity(format!("every {kind} run failed")));
    }
    let champions: Vec<f64> = battery.runs.iter().map(|r| r.champion.fitness.unwrap_or(f64::NAN)).collect();
    let mut per_run_zero_shot = Vec::new();
    let mut all_zero = Vec::new();
    let mut per_run_body_fraction = Vec::new();
    let (mut pb, mut pr, mut lb, mut lr) = (0, 0, 0, 0);
    for run in &battery.runs {
        let report = transfer_analysis(&run.champion, &cfg.transfer, settings, run.seed)?;
        all_zero.extend(
            report
                .samples
                .iter()
                .filter(|s| s.distance == 1 && !s.small_source)
                .map(|s| s.relative_change_zero),
        );
        if let Some(m) = report.mean_relative_change(1, false) {
            per_run_zero_shot.push(m);
        }
        let acc = mutation_accounting(run)?;
        pb += acc.population_body_successes;
        pr += acc.population_brain_successes;
        lb += acc.lineage_body_successes;
        lr += acc.lineage_brain_successes;
        if let Some(f) = acc.population_body_fraction {
            per_run_body_fraction.push(f);
        }
    }
    Ok(ParadigmTrend {
        kind,
        champion_spread: Spread::of(&champions).expect("at least one run"),
        champions,
        zero_shot_spread: Spread::of(&per_run_zero_shot),
        per_run_zero_shot,
        mean_zero_shot: mean(all_zero),
        population_body_fraction: fraction(pb, pr),
        lineage_body_fraction: fraction(lb, lr),
        per_run_body_fraction,
        failed_runs: battery.failures.len(),
    })
}

/// Co-optimization batteries for both paradigms with transfer and mutation
/// accounting on every champion.
pub fn trend_study(cfg: &TrendConfig, settings: &EvalSettings) -> Result<TrendReport> {
    Ok(TrendReport {
        global: paradigm_trend(ControllerKind::Global, cfg, settings)?,
        modular: paradigm_trend(ControllerKind::Modular, cfg, settings)?,
    })
}

/// Per-body fitness of a controller across the catalog.
pub fn per_body_fitness(
    ind: &Individual,
    catalog: &FixedMorphologyCatalog,
    settings: &EvalSettings,
) -> Result<BTreeMap<String, f64>> {
    catalog
        .entries()
        .iter()
        .map(|(name, body)| Ok((name.clone(), evaluate_fitness(body, &ind.controller, settings)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerGenome;
    use crate::morphology::Material;

    fn rec(id: u64, parent: Option<u64>, kind: MutationKind, fitness: f64, parent_fit: Option<f64>) -> LineageRecord {
        LineageRecord {
            id,
            parent_id: parent,
            mutation_kind: kind,
            born: id,
            fitness,
            parent_fitness_at_birth: parent_fit,
        }
    }

    fn short_settings() -> EvalSettings {
        let mut s = EvalSettings::default();
        s.episode.max_steps = 60;
        s.episode.shift_constant = 0.6;
        s
    }

    #[test]
    fn default_catalog_layouts() {
        let cat = FixedMorphologyCatalog::default();
        let names: Vec<&str> = cat.entries().iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["biped", "worm", "triped", "block"]);
        for (_, body) in cat.entries() {
            assert!(body.is_valid());
            assert!(body
                .materials()
                .iter()
                .all(|m| matches!(m, Material::Empty | Material::HorizontalActuator)));
        }
        assert_eq!(cat.get("block").unwrap().filled_count(), 25);
        assert_eq!(cat.get("worm").unwrap().filled_count(), 10);
        assert_eq!(cat.get("biped").unwrap().filled_count(), 15 + 8);
        assert_eq!(cat.get("triped").unwrap().filled_count(), 10 + 9);
    }

    #[test]
    fn catalog_file_round_trip() {
        let cat = FixedMorphologyCatalog::default();
        let back = FixedMorphologyCatalog::parse(&cat.to_toml()).unwrap();
        assert_eq!(back, cat);
        let bad = "[[body]]\nname = \"x\"\nrows = [\"33333\"]\n";
        assert!(FixedMorphologyCatalog::parse(bad).is_err());
        let unknown = "[[body]]\nname = \"x\"\ncolor = 1\n";
        match FixedMorphologyCatalog::parse(unknown) {
            Err(Error::Config { line, .. }) => assert!(line.is_some()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn convergence_by_hand() {
        let m = convergence_metrics(&[0.0, 5.0, 9.0, 10.0]).unwrap();
        assert_eq!(m.generations, [2, 2, 3, 3]);
        assert!(!m.shifted);
        let c = convergence_metrics(&[3.0; 5]).unwrap();
        assert_eq!(c.generations, [0; 4]);
        let neg = convergence_metrics(&[-4.0, -3.0, -2.0, -2.0]).unwrap();
        assert!(neg.shifted);
        // Shifted to [0, 1, 2, 2]: 80% of 2 is 1.6.
        assert_eq!(neg.generations, [2, 2, 2, 2]);
        assert!(convergence_metrics(&[]).is_err());
    }

    #[test]
    fn lineage_fraction_by_hand() {
        // Chain 0 -> 1 (body, success) -> 2 (brain, success) -> 3 (body, success),
        // plus an off-chain failed body mutation 4 and successful brain 5.
        let lineage = vec![
            rec(0, None, MutationKind::Fresh, 1.0, None),
            rec(1, Some(0), MutationKind::Body, 2.0, Some(1.0)),
            rec(2, Some(1), MutationKind::Brain, 3.0, Some(2.0)),
            rec(3, Some(2), MutationKind::Body, 4.0, Some(3.0)),
            rec(4, Some(0), MutationKind::Body, 0.5, Some(1.0)),
            rec(5, Some(0), MutationKind::Brain, 1.5, Some(1.0)),
        ];
        let acc = mutation_accounting_from(&lineage, 3).unwrap();
        assert_eq!(acc.lineage_body_fraction, Some(2.0 / 3.0));
        assert_eq!(acc.population_body_fraction, Some(0.5));
        assert_eq!((acc.population_body_successes, acc.population_brain_successes), (2, 2));
    }

    #[test]
    fn accounting_absent_without_successes_and_broken_chain() {
        let lineage = vec![
            rec(0, None, MutationKind::Fresh, 1.0, None),
            rec(1, Some(0), MutationKind::Body, 0.0, Some(1.0)),
        ];
        let acc = mutation_accounting_from(&lineage, 1).unwrap();
        assert_eq!(acc.lineage_body_fraction, None);
        assert_eq!(acc.population_body_fraction, None);
        let broken = vec![rec(1, Some(9), MutationKind::Body, 2.0, Some(1.0))];
        assert!(matches!(mutation_accounting_from(&broken, 1), Err(Error::Integrity(_))));
    }

    #[test]
    fn spread_quantiles() {
        let s = Spread::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        assert!(Spread::of(&[]).is_none());
    }

    #[test]
    fn relative_change_guard() {
        assert_eq!(relative_change(5.0, 5.0), 0.0);
        assert_eq!(relative_change(3.0, 4.0), -0.25);
        assert_eq!(relative_change(1.0, -2.0), 1.5);
        assert!(relative_change(1.0, 0.0).is_finite());
    }

    #[test]
    fn transfer_samples_are_distinct_and_one_shot_dominates() {
        let settings = short_settings();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let body: MorphologyGenome = "00000\n00000\n33300\n10100\n10100\n".parse().unwrap();
        let champion = Individual {
            morphology: body,
            controller: ControllerGenome::init(ControllerKind::Modular, &settings.observation, &mut rng),
            age: 0,
            fitness: None,
            id: 42,
            parent_id: None,
            mutation_kind: MutationKind::Fresh,
            parent_fitness_at_birth: None,
            born: 0,
        };
        let cfg = TransferConfig {
            distances: vec![1, 2],
            samples_per_distance: 5,
            one_shot_lambda: 3,
            ..TransferConfig::default()
        };
        let report = transfer_analysis(&champion, &cfg, &settings, 7).unwrap();
        assert_eq!(report.samples.len(), 10);
        assert!(report.shortfalls.is_empty());
        for d in [1, 2] {
            let set: HashSet<_> = report.samples.iter().filter(|s| s.distance == d).map(|s| s.neighbor).collect();
            assert_eq!(set.len(), 5);
            assert!(!set.contains(&body));
        }
        for s in &report.samples {
            assert!(s.one_shot_fitness >= s.zero_shot_fitness);
            assert!(s.neighbor.is_valid());
        }
        let again = transfer_analysis(&champion, &cfg, &settings, 7).unwrap();
        assert_eq!(again.samples, report.samples);
    }

    #[test]
    fn battery_seeds_and_reproducibility() {
        let base = EvolutionConfig {
            mu: 3,
            lambda: 3,
            generations: 2,
            ..EvolutionConfig::default()
        };
        let settings = short_settings();
        let a = run_battery(&base, &settings, 3, 10).unwrap();
        assert!(a.failures.is_empty());
        let seeds: Vec<u64> = a.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, [10, 11, 12]);
        let b = run_battery(&base, &settings, 3, 10).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.champion, y.champion);
        }
        assert_ne!(a.runs[0].champion, a.runs[1].champion);
    }

    #[test]
    fn population_accounting_matches_logs() {
        let cfg = EvolutionConfig {
            mu: 4,
            lambda: 4,
            generations: 6,
            master_seed: 5,
            ..EvolutionConfig::default()
        };
        let run = run_evolution(cfg, short_settings(), |_| Ok(())).unwrap();
        let acc = mutation_accounting(&run).unwrap();
        let body: usize = run.logs.iter().map(|l| l.n_body_success()).sum();
        let brain: usize = run.logs.iter().map(|l| l.n_brain_success()).sum();
        assert_eq!((acc.population_body_successes, acc.population_brain_successes), (body, brain));
        let series = best_so_far_from_lineage(&run.lineage, 6);
        assert_eq!(series, run.best_so_far());
        let summary = summarize_run(5, &run.lineage, run.champion.id, 6).unwrap();
        assert_eq!(Some(summary.champion_fitness), run.champion.fitness);
    }

    #[test]
    fn single_body_catalog_matches_fixed_mode() {
        let settings = short_settings();
        let body = *FixedMorphologyCatalog::default().get("worm").unwrap();
        let cat = FixedMorphologyCatalog::new(vec![("worm".into(), body)]).unwrap();
        let multi = multi_morph_training(ControllerKind::Modular, &cat, 2, 4, &settings).unwrap();
        let fixed = fixed_body_training(ControllerKind::Modular, body, 2, 4, &settings).unwrap();
        assert_eq!(multi.logs, fixed.logs);
        assert_eq!(multi.champion.fitness, fixed.champion.fitness);
    }
}
