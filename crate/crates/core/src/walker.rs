//! Flat-terrain walking episodes.
//!
//! The controller is queried every `action_repeat` environment steps and its
//! last actions are held in between. An episode ends after `max_steps` steps
//! or as soon as the centre of mass passes `terrain_end_x`. The reward is
//!
//! ```text
//! R = Δx_com + [reached end] − step_penalty·T + shift_constant
//! ```
//!
//! with `shift_constant = max_steps·step_penalty`, so a body that never moves
//! scores exactly zero over a full-length episode.

use serde::{Deserialize, Serialize};

use crate::control::{ActionAssignment, ControllerGenome, Scratch};
use crate::error::{Error, Result};
use crate::morphology::MorphologyGenome;
use crate::physics::{PhysicsConfig, SimWorld};
use crate::sensing::ObservationConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub action_repeat: usize,
    pub terrain_end_x: f64,
    pub step_penalty: f64,
    pub shift_constant: f64,
    /// Fitness assigned to episodes whose simulation blew up.
    pub divergence_floor: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 500,
            action_repeat: 4,
            terrain_end_x: 40.0,
            step_penalty: 0.01,
            shift_constant: 5.0,
            divergence_floor: -10.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::rejected("episode.max_steps must be at least 1"));
        }
        if self.action_repeat == 0 {
            return Err(Error::rejected("episode.action_repeat must be at least 1"));
        }
        for (name, v) in [
            ("terrain_end_x", self.terrain_end_x),
            ("step_penalty", self.step_penalty),
            ("shift_constant", self.shift_constant),
            ("divergence_floor", self.divergence_floor),
        ] {
            if !v.is_finite() {
                return Err(Error::rejected(format!("episode.{name} must be finite")));
            }
        }
        let expected = self.max_steps as f64 * self.step_penalty;
        if (self.shift_constant - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::rejected(format!(
                "episode.shift_constant must equal max_steps * step_penalty = {expected}"
            )));
        }
        Ok(())
    }

    pub fn reward(&self, delta_px: f64, reached_end: bool, steps_used: usize) -> f64 {
        delta_px + if reached_end { 1.0 } else { 0.0 } - self.step_penalty * steps_used as f64
            + self.shift_constant
    }
}

/// Everything needed to evaluate a body/controller pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub physics: PhysicsConfig,
    pub observation: ObservationConfig,
    pub episode: EpisodeConfig,
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.observation.validate()?;
        self.episode.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub fitness: f64,
    pub delta_px: f64,
    pub reached_end: bool,
    pub steps_used: usize,
    pub diverged: bool,
    /// Mass positions at the start of each simulated step.
    pub trajectory: Option<Vec<Vec<(f64, f64)>>>,
}

/// Anything that maps the current world state to actuator commands.
pub trait Policy {
    fn act(&mut self, morph: &MorphologyGenome, world: &SimWorld, env_step: u64) -> ActionAssignment;
}

struct ControllerPolicy<'a> {
    controller: &'a ControllerGenome,
    obs: &'a ObservationConfig,
    scratch: Scratch,
}

impl Policy for ControllerPolicy<'_> {
    fn act(&mut self, morph: &MorphologyGenome, world: &SimWorld, env_step: u64) -> ActionAssignment {
        self.controller
            .act_with(morph, world, env_step, self.obs, &mut self.scratch)
    }
}

impl<F> Policy for F
where
    F: FnMut(&MorphologyGenome, &SimWorld, u64) -> ActionAssignment,
{
    fn act(&mut self, morph: &MorphologyGenome, world: &SimWorld, env_step: u64) -> ActionAssignment {
        self(morph, world, env_step)
    }
}

pub fn run_episode(
    morph: &MorphologyGenome,
    controller: &ControllerGenome,
    settings: &EvalSettings,
    record: bool,
) -> Result<EpisodeResult> {
    let mut policy = ControllerPolicy {
        controller,
        obs: &settings.observation,
        scratch: Scratch::default(),
    };
    run_episode_with(morph, &mut policy, settings, record)
}

pub fn run_episode_with<P: Policy + ?Sized>(
    morph: &MorphologyGenome,
    policy: &mut P,
    settings: &EvalSettings,
    record: bool,
) -> Result<EpisodeResult> {
    let ep = &settings.episode;
    let mut world = SimWorld::build(morph, &settings.physics)?;
    let start_x = world.center_of_mass().x;
    let mut trajectory = record.then(Vec::new);
    let mut steps_used = 0;
    let mut reached_end = false;

    for step in 0..ep.max_steps {
        if let Some(frames) = trajectory.as_mut() {
            frames.push(world.positions());
        }
        if step % ep.action_repeat == 0 {
            let actions = policy.act(morph, &world, step as u64);
            world.apply_actuation(actions.as_raster())?;
        }
        steps_used = step + 1;
        match world.step_env() {
            Ok(()) => {}
            Err(Error::SimulationDiverged { .. }) => {
                return Ok(EpisodeResult {
                    fitness: ep.divergence_floor,
                    delta_px: 0.0,
                    reached_end: false,
                    steps_used,
                    diverged: true,
                    trajectory,
                });
            }
            Err(e) => return Err(e),
        }
        if world.center_of_mass().x >= ep.terrain_end_x {
            reached_end = true;
            break;
        }
    }

    let delta_px = world.center_of_mass().x - start_x;
    Ok(EpisodeResult {
        fitness: ep.reward(delta_px, reached_end, steps_used),
        delta_px,
        reached_end,
        steps_used,
        diverged: false,
        trajectory,
    })
}

pub fn evaluate_fitness(
    morph: &MorphologyGenome,
    controller: &ControllerGenome,
    settings: &EvalSettings,
) -> Result<f64> {
    Ok(run_episode(morph, controller, settings, false)?.fitness)
}
