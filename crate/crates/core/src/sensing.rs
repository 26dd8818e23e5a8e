//! Observation vectors for the controllers.
//!
//! Each voxel contributes an 8-scalar block `[V.x, V.y, v, M0..M4]`: mean
//! corner velocity (clamped), area relative to rest, and a material one-hot.
//! Missing voxels (empty or outside the box) read as zero velocity, zero
//! volume and the "empty" one-hot. A periodic time signal closes the vector.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{Cell, Material, MorphologyGenome, GRID_CELLS, GRID_SIDE};
use crate::physics::{SimWorld, Vec2};

/// Scalars per voxel block.
pub const BLOCK_LEN: usize = 8;
/// Period of the time signal in environment steps.
pub const TIME_PERIOD: u64 = 25;
/// Length of the global observation.
pub const GLOBAL_OBS_LEN: usize = GRID_CELLS * BLOCK_LEN + 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationConfig {
    /// Moore neighbourhood distance of the modular controller.
    pub neighborhood: usize,
    pub velocity_clamp: f64,
    /// Report area relative to rest area instead of absolute area.
    pub normalize_volume: bool,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            neighborhood: 2,
            velocity_clamp: 10.0,
            normalize_volume: true,
        }
    }
}

impl ObservationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.velocity_clamp.is_finite() && self.velocity_clamp > 0.0) {
            return Err(Error::rejected("observation.velocity_clamp must be positive"));
        }
        if self.neighborhood > 8 {
            return Err(Error::rejected("observation.neighborhood is unreasonably large"));
        }
        Ok(())
    }

    pub fn window_side(&self) -> usize {
        2 * self.neighborhood + 1
    }

    pub fn local_obs_len(&self) -> usize {
        self.window_side() * self.window_side() * BLOCK_LEN + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelObservation {
    pub velocity: Vec2,
    pub volume: f64,
    pub material: Material,
}

impl VoxelObservation {
    pub const MISSING: VoxelObservation = VoxelObservation {
        velocity: Vec2::ZERO,
        volume: 0.0,
        material: Material::Empty,
    };

    pub fn write_block(&self, out: &mut [f64]) {
        out[0] = self.velocity.x;
        out[1] = self.velocity.y;
        out[2] = self.volume;
        out[3..BLOCK_LEN].fill(0.0);
        out[3 + self.material.code() as usize] = 1.0;
    }

    pub fn block(&self) -> [f64; BLOCK_LEN] {
        let mut b = [0.0; BLOCK_LEN];
        self.write_block(&mut b);
        b
    }
}

/// `2π·(step mod 25)/25`.
pub fn time_signal(env_step: u64) -> f64 {
    TAU * (env_step % TIME_PERIOD) as f64 / TIME_PERIOD as f64
}

/// Observation of a grid cell; `None` or an empty cell yields the missing triple.
pub fn observe_voxel(
    world: &SimWorld,
    genome: &MorphologyGenome,
    cell: Option<Cell>,
    cfg: &ObservationConfig,
) -> VoxelObservation {
    let Some(cell) = cell else {
        return VoxelObservation::MISSING;
    };
    let material = genome.material(cell);
    let Some(voxel) = world.voxel(cell).filter(|_| !material.is_empty()) else {
        return VoxelObservation::MISSING;
    };
    let corners = voxel.corners.map(|i| &world.masses[i]);
    let mean_v = corners
        .iter()
        .fold(Vec2::ZERO, |acc, m| acc + m.velocity)
        * 0.25;
    let clamp = cfg.velocity_clamp;
    let velocity = Vec2::new(mean_v.x.clamp(-clamp, clamp), mean_v.y.clamp(-clamp, clamp));

    // Shoelace over the counter-clockwise corner order; rest area is 1.
    let mut twice_area = 0.0;
    for k in 0..4 {
        let p = corners[k].position;
        let q = corners[(k + 1) % 4].position;
        twice_area += p.x * q.y - q.x * p.y;
    }
    const REST_AREA: f64 = 1.0;
    let area = (0.5 * twice_area).max(0.0);
    let volume = if cfg.normalize_volume {
        area / REST_AREA
    } else {
        area
    };
    VoxelObservation {
        velocity,
        volume,
        material,
    }
}

/// All 25 cell blocks of the box, in raster order.
pub fn observe_cells(
    world: &SimWorld,
    genome: &MorphologyGenome,
    cfg: &ObservationConfig,
) -> [VoxelObservation; GRID_CELLS] {
    std::array::from_fn(|i| observe_voxel(world, genome, Some(Cell::from_raster(i)), cfg))
}

/// Writes the global layout into `out` (cleared first).
pub fn global_from_cells(cells: &[VoxelObservation; GRID_CELLS], env_step: u64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(GLOBAL_OBS_LEN, 0.0);
    for (obs, block) in cells.iter().zip(out.chunks_exact_mut(BLOCK_LEN)) {
        obs.write_block(block);
    }
    out[GLOBAL_OBS_LEN - 1] = time_signal(env_step);
}

/// Writes the Moore-window layout centred on `center` into `out`.
pub fn local_from_cells(
    cells: &[VoxelObservation; GRID_CELLS],
    center: Cell,
    env_step: u64,
    cfg: &ObservationConfig,
    out: &mut Vec<f64>,
) {
    let d = cfg.neighborhood as isize;
    let len = cfg.local_obs_len();
    out.clear();
    out.resize(len, 0.0);
    let mut blocks = out[..len - 1].chunks_exact_mut(BLOCK_LEN);
    for dr in -d..=d {
        for dc in -d..=d {
            let r = center.row as isize + dr;
            let c = center.col as isize + dc;
            let inside = (0..GRID_SIDE as isize).contains(&r) && (0..GRID_SIDE as isize).contains(&c);
            let obs = if inside {
                &cells[r as usize * GRID_SIDE + c as usize]
            } else {
                &VoxelObservation::MISSING
            };
            obs.write_block(blocks.next().expect("window block"));
        }
    }
    out[len - 1] = time_signal(env_step);
}

/// Global observation: 25 raster-ordered blocks and the time signal (201 scalars).
pub fn observe_global(
    world: &SimWorld,
    genome: &MorphologyGenome,
    env_step: u64,
    cfg: &ObservationConfig,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(GLOBAL_OBS_LEN);
    global_from_cells(&observe_cells(world, genome, cfg), env_step, &mut out);
    out
}

/// Local observation of an actuator: the (2d+1)² window around it, row-major,
/// then the time signal.
pub fn observe_local(
    world: &SimWorld,
    genome: &MorphologyGenome,
    cell: Cell,
    env_step: u64,
    cfg: &ObservationConfig,
) -> Result<Vec<f64>> {
    if cell.row >= GRID_SIDE || cell.col >= GRID_SIDE || !genome.material(cell).is_actuator() {
        return Err(Error::rejected(format!(
            "local observation requested for non-actuator cell ({}, {})",
            cell.row, cell.col
        )));
    }
    let mut out = Vec::with_capacity(cfg.local_obs_len());
    local_from_cells(&observe_cells(world, genome, cfg), cell, env_step, cfg, &mut out);
    Ok(out)
}
