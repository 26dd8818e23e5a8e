//! Run configuration files.
//!
//! ```toml
//! [run]
//! seed = 1                  # required
//! generations = 300         # required
//! controller = "modular"    # required: "modular" | "global"
//! mode = "co-optimize"      # "co-optimize" | "fixed-body" | "multi-body"
//! fixed_body = "biped"      # catalog name, fixed-body mode only
//! runs = 1                  # battery size; run i uses seed + i
//! checkpoint_every = 50     # 0: final checkpoint only
//! snapshots = [0.25, 0.5, 0.75, 1.0]
//!
//! [evolution]               # mu, lambda, p_body_mutation, controller_sigma, morph_retry_cap
//! [physics]                 # simulator constants, [physics.contact] for ground contact
//! [observation]             # neighborhood, velocity_clamp, normalize_volume
//! [episode]                 # max_steps, action_repeat, terrain_end_x, ...
//! [transfer]                # distances, samples_per_distance, one_shot_lambda, sigma, retry_cap
//!
//! [[body]]                  # optional catalog, replaces the built-in one
//! name = "worm"
//! rows = ["00000", "00000", "00000", "33333", "33333"]
//! ```
//!
//! Unknown keys are rejected and every error carries a line number when one
//! can be attributed.

use std::path::Path;

use serde::Deserialize;

use crate::control::ControllerKind;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionConfig, TrainingMode};
use crate::experiments::{line_of, FixedMorphologyCatalog, TransferConfig};
use crate::morphology::{MorphologyGenome, DEFAULT_RETRY_CAP, GRID_SIDE};
use crate::physics::PhysicsConfig;
use crate::sensing::ObservationConfig;
use crate::walker::{EpisodeConfig, EvalSettings};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: RawRun,
    #[serde(default)]
    evolution: RawEvolution,
    #[serde(default)]
    physics: PhysicsConfig,
    #[serde(default)]
    observation: ObservationConfig,
    #[serde(default)]
    episode: EpisodeConfig,
    #[serde(default)]
    transfer: RawTransfer,
    #[serde(default)]
    body: Vec<RawBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: u64,
    generations: u64,
    controller: String,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default)]
    fixed_body: Option<String>,
    #[serde(default = "one")]
    runs: usize,
    #[serde(default)]
    checkpoint_every: u64,
    #[serde(default = "default_snapshots")]
    snapshots: Vec<f64>,
}

fn default_mode() -> String {
    "co-optimize".into()
}

fn one() -> usize {
    1
}

fn default_snapshots() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEvolution {
    mu: usize,
    lambda: usize,
    p_body_mutation: f64,
    controller_sigma: f64,
    morph_retry_cap: usize,
}

impl Default for RawEvolution {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        RawEvolution {
            mu: d.mu,
            lambda: d.lambda,
            p_body_mutation: d.p_body_mutation,
            controller_sigma: d.controller_sigma,
            morph_retry_cap: d.morph_retry_cap,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTransfer {
    distances: Vec<usize>,
    samples_per_distance: usize,
    one_shot_lambda: usize,
    sigma: f64,
    retry_cap: usize,
}

impl Default for RawTransfer {
    fn default() -> Self {
        let d = TransferConfig::default();
        RawTransfer {
            distances: d.distances,
            samples_per_distance: d.samples_per_distance,
            one_shot_lambda: d.one_shot_lambda,
            sigma: d.sigma,
            retry_cap: d.retry_cap,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    name: String,
    rows: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModeSpec {
    CoOptimize,
    FixedBody(String),
    MultiBody,
}

/// A fully validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub generations: u64,
    pub controller: ControllerKind,
    pub mode: ModeSpec,
    pub runs: usize,
    pub checkpoint_every: u64,
    pub snapshot_fractions: Vec<f64>,
    pub mu: usize,
    pub lambda: usize,
    pub p_body_mutation: f64,
    pub controller_sigma: f64,
    pub morph_retry_cap: usize,
    pub settings: EvalSettings,
    pub transfer: TransferConfig,
    pub catalog: FixedMorphologyCatalog,
    /// The text the configuration was parsed from.
    pub source: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let located = |section: &str, key: &str, message: String| Error::Config {
            line: locate(text, section, key),
            message,
        };

        let controller = ControllerKind::parse(&raw.run.controller)
            .map_err(|e| located("run", "controller", e.to_string()))?;
        let mode = match raw.run.mode.as_str() {
            "co-optimize" => ModeSpec::CoOptimize,
            "fixed-body" => ModeSpec::FixedBody(raw.run.fixed_body.clone().ok_or_else(|| {
                located("run", "mode", "fixed-body mode needs run.fixed_body".into())
            })?),
            "multi-body" => ModeSpec::MultiBody,
            other => {
                return Err(located(
                    "run",
                    "mode",
                    format!("unknown mode {other:?}; expected co-optimize, fixed-body or multi-body"),
                ))
            }
        };
        if raw.run.fixed_body.is_some() && !matches!(mode, ModeSpec::FixedBody(_)) {
            return Err(located("run", "fixed_body", "run.fixed_body is only valid in fixed-body mode".into()));
        }

        let catalog = if raw.body.is_empty() {
            FixedMorphologyCatalog::default()
        } else {
            let entries = raw
                .body
                .into_iter()
                .map(|b| {
                    if b.rows.len() != GRID_SIDE {
                        return Err(located("body", "rows", format!("body {:?} needs {GRID_SIDE} rows", b.name)));
                    }
                    let g = MorphologyGenome::from_compact(&b.rows.concat())
                        .map_err(|e| located("body", "rows", format!("body {:?}: {e}", b.name)))?;
                    Ok((b.name, g))
                })
                .collect::<Result<Vec<_>>>()?;
            FixedMorphologyCatalog::new(entries).map_err(|e| located("body", "name", e.to_string()))?
        };
        if let ModeSpec::FixedBody(name) = &mode {
            if catalog.get(name).is_none() {
                return Err(located("run", "fixed_body", format!("no catalog body named {name:?}")));
            }
        }

        if raw.run.runs == 0 {
            return Err(located("run", "runs", "run.runs must be at least 1".into()));
        }
        if let Some(f) = raw.run.snapshots.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(located("run", "snapshots", format!("snapshot fraction {f} outside [0, 1]")));
        }

        let settings = EvalSettings {
            physics: raw.physics,
            observation: raw.observation,
            episode: raw.episode,
        };
        settings.physics.validate().map_err(|e| attribute(text, "physics", e))?;
        settings.observation.validate().map_err(|e| attribute(text, "observation", e))?;
        settings.episode.validate().map_err(|e| attribute(text, "episode", e))?;

        let transfer = TransferConfig {
            distances: raw.transfer.distances,
            samples_per_distance: raw.transfer.samples_per_distance,
            one_shot_lambda: raw.transfer.one_shot_lambda,
            sigma: raw.transfer.sigma,
            retry_cap: raw.transfer.retry_cap,
        };
        transfer.validate().map_err(|e| attribute(text, "transfer", e))?;

        let cfg = RunConfig {
            seed: raw.run.seed,
            generations: raw.run.generations,
            controller,
            mode,
            runs: raw.run.runs,
            checkpoint_every: raw.run.checkpoint_every,
            snapshot_fractions: raw.run.snapshots,
            mu: raw.evolution.mu,
            lambda: raw.evolution.lambda,
            p_body_mutation: raw.evolution.p_body_mutation,
            controller_sigma: raw.evolution.controller_sigma,
            morph_retry_cap: raw.evolution.morph_retry_cap,
            settings,
            transfer,
            catalog,
            source: text.to_string(),
        };
        cfg.evolution_config(cfg.seed)
            .validate()
            .map_err(|e| attribute(text, "evolution", e))?;
        Ok(cfg)
    }

    pub fn training_mode(&self) -> TrainingMode {
        match &self.mode {
            ModeSpec::CoOptimize => TrainingMode::CoOptimize,
            ModeSpec::FixedBody(name) => {
                TrainingMode::FixedBody(*self.catalog.get(name).expect("checked at parse time"))
            }
            ModeSpec::MultiBody => TrainingMode::MultiBody(self.catalog.bodies()),
        }
    }

    /// Generations at which champion snapshots are taken, ascending and deduplicated.
    pub fn snapshot_generations(&self) -> Vec<u64> {
        let mut gens: Vec<u64> = self
            .snapshot_fractions
            .iter()
            .map(|f| (f * self.generations as f64).round() as u64)
            .collect();
        gens.sort_unstable();
        gens.dedup();
        gens
    }

    pub fn evolution_config(&self, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            mu: self.mu,
            lambda: self.lambda,
            generations: self.generations,
            p_body_mutation: self.p_body_mutation,
            controller_sigma: self.controller_sigma,
            controller_kind: self.controller,
            mode: self.training_mode(),
            master_seed: seed,
            morph_retry_cap: self.morph_retry_cap,
            snapshot_generations: self.snapshot_generations(),
        }
    }

    /// Seeds of the runs in this configuration's battery.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed + i).collect()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        RunConfig {
            seed: 0,
            generations: d.generations,
            controller: d.controller_kind,
            mode: ModeSpec::CoOptimize,
            runs: 1,
            checkpoint_every: 0,
            snapshot_fractions: default_snapshots(),
            mu: d.mu,
            lambda: d.lambda,
            p_body_mutation: d.p_body_mutation,
            controller_sigma: d.controller_sigma,
            morph_retry_cap: DEFAULT_RETRY_CAP,
            settings: EvalSettings::default(),
            transfer: TransferConfig::default(),
            catalog: FixedMorphologyCatalog::default(),
            source: String::new(),
        }
    }
}

/// Line of `key = ...` inside `[section]` (or `[[section]]`), if present.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && section_line.is_none() {
                section_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

/// Converts a validation error from a section's own checks into a located
/// config error. The offending key is taken from the `section.key` name in
/// the message when there is one.
fn attribute(text: &str, section: &str, err: Error) -> Error {
    let message = match err {
        Error::RejectedInput(m) => m,
        other => other.to_string(),
    };
    let key = message
        .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
        .find_map(|tok| tok.strip_prefix(section).and_then(|r| r.strip_prefix('.')))
        .map(|k| k.rsplit('.').next().unwrap_or(k).to_string());
    let line = match &key {
        Some(k) => locate(text, section, k).or_else(|| {
            // Nested tables such as [physics.contact].
            let (sub, leaf) = k.split_once('.')?;
            locate(text, &format!("{section}.{sub}"), leaf)
        }),
        None => locate(text, section, ""),
    };
    Error::Config { line, message }
}
