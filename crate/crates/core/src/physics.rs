//! Mass-spring simulation of a voxel body on flat ground.
//!
//! Every filled cell becomes a cross-braced square: four corner masses, four
//! edge springs and two diagonal braces. Corners and edges shared with a
//! neighbouring voxel are merged; a merged edge carries the sum of both
//! voxels' stiffness. Units are voxel-lengths, seconds and voxel masses.
//!
//! Integration is semi-implicit Euler (velocity first, then position) with a
//! penalty ground contact and capped Coulomb friction.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{Cell, Material, MorphologyGenome, GRID_CELLS, GRID_SIDE};

/// Total mass of one voxel, split equally over its four corners.
pub const VOXEL_MASS: f64 = 1.0;
/// Positions beyond this magnitude are treated as a blown-up simulation.
const POSITION_LIMIT: f64 = 1.0e6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    pub enabled: bool,
    pub normal_stiffness: f64,
    pub normal_damping: f64,
    pub friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            enabled: true,
            normal_stiffness: 1.0e4,
            normal_damping: 10.0,
            friction: 0.8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub rigid_stiffness: f64,
    pub soft_stiffness: f64,
    pub actuator_stiffness: f64,
    /// Damping ratio ζ; each spring gets c = 2ζ√(k·m_eff).
    pub damping_ratio: f64,
    pub gravity: f64,
    pub ground_height: f64,
    pub contact: ContactParams,
    pub dt: f64,
    pub substeps: usize,
    pub actuation_min: f64,
    pub actuation_max: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            rigid_stiffness: 6000.0,
            soft_stiffness: 600.0,
            actuator_stiffness: 600.0,
            damping_ratio: 0.1,
            gravity: 9.81,
            ground_height: 0.0,
            contact: ContactParams::default(),
            dt: 1.0 / 600.0,
            substeps: 6,
            actuation_min: 0.6,
            actuation_max: 1.6,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("rigid_stiffness", self.rigid_stiffness),
            ("soft_stiffness", self.soft_stiffness),
            ("actuator_stiffness", self.actuator_stiffness),
            ("damping_ratio", self.damping_ratio),
            ("gravity", self.gravity),
            ("ground_height", self.ground_height),
            ("contact.normal_stiffness", self.contact.normal_stiffness),
            ("contact.normal_damping", self.contact.normal_damping),
            ("contact.friction", self.contact.friction),
            ("dt", self.dt),
            ("actuation_min", self.actuation_min),
            ("actuation_max", self.actuation_max),
        ];
        if let Some((name, _)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::rejected(format!("physics.{name} must be finite")));
        }
        if self.rigid_stiffness < 0.0 || self.soft_stiffness < 0.0 || self.actuator_stiffness < 0.0
        {
            return Err(Error::rejected("stiffness must be non-negative"));
        }
        if self.damping_ratio < 0.0 {
            return Err(Error::rejected("physics.damping_ratio must be non-negative"));
        }
        if self.dt <= 0.0 {
            return Err(Error::rejected("physics.dt must be positive"));
        }
        if self.substeps == 0 {
            return Err(Error::rejected("physics.substeps must be at least 1"));
        }
        if !(self.actuation_min < 1.0 && 1.0 < self.actuation_max && self.actuation_min > 0.0) {
            return Err(Error::rejected(
                "actuation range must satisfy 0 < actuation_min < 1 < actuation_max",
            ));
        }
        Ok(())
    }

    pub fn stiffness(&self, material: Material) -> f64 {
        match material {
            Material::Empty => 0.0,
            Material::Rigid => self.rigid_stiffness,
            Material::Soft => self.soft_stiffness,
            Material::HorizontalActuator | Material::VerticalActuator => self.actuator_stiffness,
        }
    }

    /// Rest-length scale for an action in [0, 1].
    pub fn actuation_scale(&self, action: f64) -> f64 {
        self.actuation_min + action * (self.actuation_max - self.actuation_min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassPoint {
    pub position: Vec2,
    pub velocity: Vec2,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisKind {
    HorizontalEdge,
    VerticalEdge,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spring {
    pub endpoints: (usize, usize),
    pub rest_length: f64,
    pub base_rest_length: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub axis_kind: AxisKind,
    /// First adjacent actuator voxel (raster index), if any.
    pub actuation_channel: Option<usize>,
    /// Raster indices of the voxels sharing this spring (one or two).
    owners: [Option<usize>; 2],
}

impl Spring {
    pub fn owners(&self) -> impl Iterator<Item = usize> + '_ {
        self.owners.iter().flatten().copied()
    }
}

/// A voxel compiled into the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelBody {
    pub material: Material,
    /// Mass indices: bottom-left, bottom-right, top-right, top-left
    /// (counter-clockwise with y up).
    pub corners: [usize; 4],
    /// Current rest-length scale per axis (x, y).
    pub scale: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct SimWorld {
    pub masses: Vec<MassPoint>,
    pub springs: Vec<Spring>,
    pub gravity: f64,
    pub ground_height: f64,
    pub contact: ContactParams,
    pub dt: f64,
    pub substeps: usize,
    actuation_range: (f64, f64),
    voxels: [Option<VoxelBody>; GRID_CELLS],
    forces: Vec<Vec2>,
    substep_count: u64,
}

/// Lattice corner (row, col) in 0..=GRID_SIDE, row 0 at the top.
fn corner_slot(row: usize, col: usize) -> usize {
    row * (GRID_SIDE + 1) + col
}

impl SimWorld {
    /// Compiles a valid genome into a resting world: bottom corner row on the
    /// ground, leftmost occupied column at x = 0.
    pub fn build(genome: &MorphologyGenome, cfg: &PhysicsConfig) -> Result<Self> {
        if !genome.is_valid() {
            return Err(Error::rejected(format!(
                "cannot build a world from invalid genome {}",
                genome.to_compact()
            )));
        }
        cfg.validate()?;
        Ok(Self::build_unchecked(genome, cfg))
    }

    /// As [`SimWorld::build`] without the genome validity check; the genome
    /// must still contain at least one filled cell.
    pub fn build_unchecked(genome: &MorphologyGenome, cfg: &PhysicsConfig) -> Self {
        let filled: Vec<Cell> = genome.filled_cells().collect();
        assert!(!filled.is_empty(), "world needs at least one voxel");
        let min_col = filled.iter().map(|c| c.col).min().unwrap();
        let max_row = filled.iter().map(|c| c.row).max().unwrap();

        // Corner slots in raster order over the (GRID_SIDE+1)² lattice keep
        // the mass ordering independent of where the body sits in the box.
        let mut slot_mass = vec![0.0; (GRID_SIDE + 1) * (GRID_SIDE + 1)];
        for cell in &filled {
            for (r, c) in [
                (cell.row + 1, cell.col),
                (cell.row + 1, cell.col + 1),
                (cell.row, cell.col + 1),
                (cell.row, cell.col),
            ] {
                slot_mass[corner_slot(r, c)] += VOXEL_MASS / 4.0;
            }
        }
        let mut slot_index = vec![usize::MAX; slot_mass.len()];
        let mut masses = Vec::new();
        for r in 0..=GRID_SIDE {
            for c in 0..=GRID_SIDE {
                let m = slot_mass[corner_slot(r, c)];
                if m > 0.0 {
                    slot_index[corner_slot(r, c)] = masses.len();
                    masses.push(MassPoint {
                        position: Vec2::new(
                            (c - min_col) as f64,
                            cfg.ground_height + (max_row + 1 - r) as f64,
                        ),
                        velocity: Vec2::ZERO,
                        mass: m,
                    });
                }
            }
        }

        let mut voxels = [None; GRID_CELLS];
        let mut springs: Vec<Spring> = Vec::new();
        let mut edge_lookup: std::collections::HashMap<(usize, usize, u8), usize> =
            std::collections::HashMap::new();
        for cell in &filled {
            let material = genome.material(*cell);
            let k = cfg.stiffness(material);
            let (r, c) = (cell.row, cell.col);
            let bl = slot_index[corner_slot(r + 1, c)];
            let br = slot_index[corner_slot(r + 1, c + 1)];
            let tr = slot_index[corner_slot(r, c + 1)];
            let tl = slot_index[corner_slot(r, c)];
            let raster = cell.raster();
            voxels[raster] = Some(VoxelBody {
                material,
                corners: [bl, br, tr, tl],
                scale: (1.0, 1.0),
            });
            let actuator = material.is_actuator().then_some(raster);
            let members = [
                (bl, br, AxisKind::HorizontalEdge, 1.0),
                (tl, tr, AxisKind::HorizontalEdge, 1.0),
                (bl, tl, AxisKind::VerticalEdge, 1.0),
                (br, tr, AxisKind::VerticalEdge, 1.0),
                (bl, tr, AxisKind::Diagonal, std::f64::consts::SQRT_2),
                (br, tl, AxisKind::Diagonal, std::f64::consts::SQRT_2),
            ];
            for (a, b, axis, rest) in members {
                let key = (a.min(b), a.max(b), axis as u8);
                if let Some(&idx) = edge_lookup.get(&key) {
                    let s = &mut springs[idx];
                    s.stiffness += k;
                    s.owners[1] = Some(raster);
                    if s.actuation_channel.is_none() {
                        s.actuation_channel = actuator;
                    }
                } else {
                    edge_lookup.insert(key, springs.len());
                    springs.push(Spring {
                        endpoints: (a, b),
                        rest_length: rest,
                        base_rest_length: rest,
                        stiffness: k,
                        damping: 0.0,
                        axis_kind: axis,
                        actuation_channel: actuator,
                        owners: [Some(raster), None],
                    });
                }
            }
        }
        for s in &mut springs {
            let (ma, mb) = (masses[s.endpoints.0].mass, masses[s.endpoints.1].mass);
            let m_eff = ma * mb / (ma + mb);
            s.damping = 2.0 * cfg.damping_ratio * (s.stiffness * m_eff).sqrt();
        }

        let n = masses.len();
        SimWorld {
            masses,
            springs,
            gravity: cfg.gravity,
            ground_height: cfg.ground_height,
            contact: cfg.contact,
            dt: cfg.dt,
            substeps: cfg.substeps,
            actuation_range: (cfg.actuation_min, cfg.actuation_max),
            voxels,
            forces: vec![Vec2::ZERO; n],
            substep_count: 0,
        }
    }

    pub fn voxel(&self, cell: Cell) -> Option<&VoxelBody> {
        self.voxels[cell.raster()].as_ref()
    }

    pub fn voxel_at(&self, raster: usize) -> Option<&VoxelBody> {
        self.voxels[raster].as_ref()
    }

    pub fn voxels(&self) -> impl Iterator<Item = (Cell, &VoxelBody)> {
        self.voxels
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_ref().map(|v| (Cell::from_raster(i), v)))
    }

    /// Substeps advanced since construction.
    pub fn substeps_taken(&self) -> u64 {
        self.substep_count
    }

    /// Sets the actuation of the given actuator voxels (raster index, action in
    /// [0, 1]) and recomputes rest lengths. Voxels not listed keep their
    /// previous actuation.
    pub fn apply_actuation<I>(&mut self, actions: I) -> Result<()>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let (lo, hi) = self.actuation_range;
        let mut staged = Vec::new();
        for (raster, a) in actions {
            let voxel = self
                .voxels
                .get(raster)
                .and_then(|v| v.as_ref())
                .filter(|v| v.material.is_actuator())
                .ok_or_else(|| Error::rejected(format!("cell {raster} is not an actuator voxel")))?;
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::rejected(format!("action {a} outside [0, 1]")));
            }
            let s = lo + a * (hi - lo);
            let scale = match voxel.material {
                Material::HorizontalActuator => (s, 1.0),
                _ => (1.0, s),
            };
            staged.push((raster, scale));
        }
        for (raster, scale) in staged {
            if let Some(v) = self.voxels[raster].as_mut() {
                v.scale = scale;
            }
        }
        self.refresh_rest_lengths();
        Ok(())
    }

    fn refresh_rest_lengths(&mut self) {
        let voxels = &self.voxels;
        for s in &mut self.springs {
            let mut sum = 0.0;
            let mut n = 0.0;
            for owner in s.owners.iter().flatten() {
                let (sx, sy) = voxels[*owner].as_ref().map_or((1.0, 1.0), |v| v.scale);
                sum += match s.axis_kind {
                    AxisKind::HorizontalEdge => sx,
                    AxisKind::VerticalEdge => sy,
                    AxisKind::Diagonal => ((sx * sx + sy * sy) / 2.0).sqrt(),
                };
                n += 1.0;
            }
            s.rest_length = s.base_rest_length * (sum / n);
        }
    }

    /// Internal (spring) forces on each mass.
    pub fn internal_forces(&self) -> Vec<Vec2> {
        let mut out = vec![Vec2::ZERO; self.masses.len()];
        accumulate_spring_forces(&self.masses, &self.springs, &mut out);
        out
    }

    /// Advances one environment tick (`substeps` physics substeps).
    pub fn step_env(&mut self) -> Result<()> {
        for _ in 0..self.substeps {
            self.substep()?;
        }
        Ok(())
    }

    pub fn substep(&mut self) -> Result<()> {
        let dt = self.dt;
        let forces = &mut self.forces;
        forces.iter_mut().for_each(|f| *f = Vec2::ZERO);
        accumulate_spring_forces(&self.masses, &self.springs, forces);

        let contact = self.contact;
        for (m, f) in self.masses.iter().zip(forces.iter_mut()) {
            f.y -= self.gravity * m.mass;
            if contact.enabled && m.position.y < self.ground_height {
                let penetration = self.ground_height - m.position.y;
                let normal = contact.normal_stiffness * penetration
                    - contact.normal_damping * m.velocity.y;
                if normal > 0.0 {
                    f.y += normal;
                    // Friction opposes the tangential velocity the other
                    // forces would produce, never exceeding μ·N.
                    let vx_free = m.velocity.x + f.x / m.mass * dt;
                    let cap = contact.friction * normal;
                    f.x += (-m.mass * vx_free / dt).clamp(-cap, cap);
                }
            }
        }

        for (m, f) in self.masses.iter_mut().zip(forces.iter()) {
            m.velocity += *f * (dt / m.mass);
            m.position += m.velocity * dt;
        }
        self.substep_count += 1;

        let blown = self.masses.iter().any(|m| {
            !m.position.is_finite()
                || !m.velocity.is_finite()
                || m.position.x.abs() > POSITION_LIMIT
                || m.position.y.abs() > POSITION_LIMIT
        });
        if blown {
            return Err(Error::SimulationDiverged {
                substep: self.substep_count,
            });
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.mass).sum()
    }

    pub fn center_of_mass(&self) -> Vec2 {
        let total = self.total_mass();
        let weighted = self
            .masses
            .iter()
            .fold(Vec2::ZERO, |acc, m| acc + m.position * m.mass);
        weighted * (1.0 / total)
    }

    pub fn center_of_mass_velocity(&self) -> Vec2 {
        let total = self.total_mass();
        let weighted = self
            .masses
            .iter()
            .fold(Vec2::ZERO, |acc, m| acc + m.velocity * m.mass);
        weighted * (1.0 / total)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.masses
            .iter()
            .map(|m| 0.5 * m.mass * m.velocity.dot(m.velocity))
            .sum()
    }

    pub fn spring_energy(&self) -> f64 {
        self.springs
            .iter()
            .map(|s| {
                let d = self.masses[s.endpoints.1].position - self.masses[s.endpoints.0].position;
                let stretch = d.norm() - s.rest_length;
                0.5 * s.stiffness * stretch * stretch
            })
            .sum()
    }

    pub fn gravitational_energy(&self) -> f64 {
        self.masses
            .iter()
            .map(|m| m.mass * self.gravity * (m.position.y - self.ground_height))
            .sum()
    }

    /// Kinetic + spring + gravitational energy (contact energy excluded).
    pub fn mechanical_energy(&self) -> f64 {
        self.kinetic_energy() + self.spring_energy() + self.gravitational_energy()
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.masses
            .iter()
            .map(|m| (m.position.x, m.position.y))
            .collect()
    }
}

fn accumulate_spring_forces(masses: &[MassPoint], springs: &[Spring], out: &mut [Vec2]) {
    for s in springs {
        let (a, b) = s.endpoints;
        let (pa, pb) = (&masses[a], &masses[b]);
        let d = pb.position - pa.position;
        let len = d.norm();
        if len <= 0.0 {
            continue;
        }
        let dir = d * (1.0 / len);
        let closing = (pb.velocity - pa.velocity).dot(dir);
        let tension = s.stiffness * (len - s.rest_length) + s.damping * closing;
        let f = dir * tension;
        out[a] += f;
        out[b] -= f;
    }
}

/// Convenience wrapper matching the free-function form used elsewhere.
pub fn build_world(genome: &MorphologyGenome, cfg: &PhysicsConfig) -> Result<SimWorld> {
    SimWorld::build(genome, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn genome(s: &str) -> MorphologyGenome {
        s.parse().unwrap()
    }

    fn single_voxel() -> MorphologyGenome {
        let mut g = MorphologyGenome::empty();
        g.set(Cell::new(4, 0), Material::HorizontalActuator);
        g
    }

    /// Brute-force spring enumeration: per voxel list its six members by
    /// lattice corner coordinates and count distinct (pair, axis) keys.
    fn oracle_spring_count(g: &MorphologyGenome) -> (usize, usize) {
        let mut corners = HashSet::new();
        let mut springs = HashSet::new();
        for cell in g.filled_cells() {
            let (r, c) = (cell.row as i32, cell.col as i32);
            let bl = (r + 1, c);
            let br = (r + 1, c + 1);
            let tr = (r, c + 1);
            let tl = (r, c);
            for p in [bl, br, tr, tl] {
                corners.insert(p);
            }
            for (a, b, k) in [
                (bl, br, 'h'),
                (tl, tr, 'h'),
                (bl, tl, 'v'),
                (br, tr, 'v'),
                (bl, tr, 'd'),
                (br, tl, 'd'),
            ] {
                springs.insert((a.min(b), a.max(b), k));
            }
        }
        (corners.len(), springs.len())
    }

    #[test]
    fn single_voxel_counts() {
        let w = SimWorld::build_unchecked(&single_voxel(), &PhysicsConfig::default());
        assert_eq!(w.masses.len(), 4);
        assert_eq!(w.springs.len(), 6);
    }

    #[test]
    fn horizontal_pair_shares_one_edge() {
        let g = genome("00000\n00000\n00000\n00000\n33000\n");
        let w = SimWorld::build_unchecked(&g, &PhysicsConfig::default());
        assert_eq!(oracle_spring_count(&g), (6, 11));
        assert_eq!((w.masses.len(), w.springs.len()), (6, 11));
        let shared = w
            .springs
            .iter()
            .filter(|s| s.stiffness == 2.0 * PhysicsConfig::default().actuator_stiffness)
            .count();
        assert_eq!(shared, 1);
    }

    #[test]
    fn full_grid_counts() {
        let g = MorphologyGenome::from_rows(&[[1u8, 2, 3, 4, 3]; 5]).unwrap();
        let w = SimWorld::build(&g, &PhysicsConfig::default()).unwrap();
        assert_eq!(oracle_spring_count(&g), (36, 110));
        assert_eq!((w.masses.len(), w.springs.len()), (36, 110));
        let count = |k| w.springs.iter().filter(|s| s.axis_kind == k).count();
        assert_eq!(count(AxisKind::HorizontalEdge), 30);
        assert_eq!(count(AxisKind::VerticalEdge), 30);
        assert_eq!(count(AxisKind::Diagonal), 50);
        assert!((w.total_mass() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn springs_are_deduplicated_with_distinct_endpoints() {
        let g = genome("33333\n30303\n11111\n20202\n44444\n");
        let w = SimWorld::build_unchecked(&g, &PhysicsConfig::default());
        let mut keys = HashSet::new();
        for s in &w.springs {
            let (a, b) = s.endpoints;
            assert_ne!(a, b);
            assert!(a < w.masses.len() && b < w.masses.len());
            assert!(keys.insert((a.min(b), a.max(b), s.axis_kind)));
        }
        for cell in g.filled_cells() {
            assert_eq!(w.voxel(cell).unwrap().corners.len(), 4);
        }
    }

    #[test]
    fn placement_puts_body_on_ground_at_left_edge() {
        let g = genome("00000\n00330\n00331\n00000\n00000\n");
        let w = SimWorld::build(&g, &PhysicsConfig::default()).unwrap();
        let min_x = w.masses.iter().map(|m| m.position.x).fold(f64::INFINITY, f64::min);
        let min_y = w.masses.iter().map(|m| m.position.y).fold(f64::INFINITY, f64::min);
        assert_eq!(min_x, 0.0);
        assert_eq!(min_y, 0.0);
    }

    #[test]
    fn rejects_invalid_genome() {
        assert!(SimWorld::build(&single_voxel(), &PhysicsConfig::default()).is_err());
    }

    #[test]
    fn center_of_mass_cases() {
        let mut w = SimWorld::build_unchecked(&single_voxel(), &PhysicsConfig::default());
        let c = w.center_of_mass();
        assert_eq!((c.x, c.y), (0.5, 0.5));
        for m in &mut w.masses {
            m.position.x += 3.0;
        }
        let c2 = w.center_of_mass();
        assert_eq!((c2.x, c2.y), (3.5, 0.5));
        // Masses are ordered by lattice raster (top row first):
        // (3,1), (4,1), (3,0), (4,0), here weighted 1, 2, 3, 4.
        for (i, m) in w.masses.iter_mut().enumerate() {
            m.mass = (i + 1) as f64;
        }
        let c3 = w.center_of_mass();
        assert!((c3.x - 3.6).abs() < 1e-12);
        assert!((c3.y - 0.3).abs() < 1e-12);
    }

    #[test]
    fn actuation_scale_map() {
        let cfg = PhysicsConfig::default();
        assert!((cfg.actuation_scale(0.4) - 1.0).abs() < 1e-15);
        assert_eq!(cfg.actuation_scale(0.0), 0.6);
        assert_eq!(cfg.actuation_scale(1.0), 1.6);
    }

    #[test]
    fn actuation_updates_rest_lengths() {
        let cfg = PhysicsConfig::default();
        let g = genome("00000\n00000\n00000\n00000\n34111\n");
        let mut w = SimWorld::build(&g, &cfg).unwrap();
        let before: Vec<f64> = w.springs.iter().map(|s| s.rest_length).collect();
        w.apply_actuation([(20, 0.4), (21, 0.4)]).unwrap();
        for (s, b) in w.springs.iter().zip(&before) {
            assert!((s.rest_length - b).abs() < 1e-12);
        }
        w.apply_actuation([(20, 0.0), (21, 1.0)]).unwrap();
        for s in &w.springs {
            let owners: Vec<usize> = s.owners().collect();
            let ratio = s.rest_length / s.base_rest_length;
            assert!((0.6..=1.6).contains(&ratio));
            match (s.axis_kind, owners.as_slice()) {
                (AxisKind::HorizontalEdge, [20]) => assert!((ratio - 0.6).abs() < 1e-12),
                (AxisKind::VerticalEdge, [21]) => assert!((ratio - 1.6).abs() < 1e-12),
                // Shared vertical edge between the h-actuator (sy = 1) and the
                // v-actuator (sy = 1.6).
                (AxisKind::VerticalEdge, [20, 21]) => assert!((ratio - 1.3).abs() < 1e-12),
                (AxisKind::Diagonal, [20]) => {
                    assert!((s.rest_length - (0.36f64 + 1.0).sqrt()).abs() < 1e-12)
                }
                (_, [22]) | (_, [21, 22]) if s.axis_kind != AxisKind::VerticalEdge => {}
                _ => {}
            }
        }
        // Rigid voxel's own springs are unchanged.
        for s in w.springs.iter().filter(|s| s.owners().eq([22])) {
            assert_eq!(s.rest_length, s.base_rest_length);
        }
    }

    #[test]
    fn actuation_rejects_bad_input() {
        let cfg = PhysicsConfig::default();
        let g = genome("00000\n00000\n00000\n00000\n34111\n");
        let mut w = SimWorld::build(&g, &cfg).unwrap();
        assert!(w.apply_actuation([(20, 1.5)]).is_err());
        assert!(w.apply_actuation([(20, -0.1)]).is_err());
        assert!(w.apply_actuation([(22, 0.5)]).is_err());
        assert!(w.apply_actuation([(0, 0.5)]).is_err());
    }

    #[test]
    fn free_fall_matches_gravity() {
        let mut cfg = PhysicsConfig::default();
        cfg.contact.enabled = false;
        let mut w = SimWorld::build_unchecked(&single_voxel(), &cfg);
        let n = 100;
        for _ in 0..n {
            w.substep().unwrap();
        }
        let t = n as f64 * cfg.dt;
        let v = w.center_of_mass_velocity().norm();
        assert!((v - cfg.gravity * t).abs() / (cfg.gravity * t) < 1e-6);
    }

    #[test]
    fn internal_forces_cancel() {
        let cfg = PhysicsConfig::default();
        let g = genome("33333\n30303\n11111\n20202\n44444\n");
        let mut w = SimWorld::build(&g, &cfg).unwrap();
        w.apply_actuation(g.actuator_cells().map(|c| (c.raster(), 0.9))).unwrap();
        for _ in 0..50 {
            w.substep().unwrap();
            let sum = w.internal_forces().into_iter().fold(Vec2::ZERO, |a, f| a + f);
            assert!(sum.norm() < 1e-9, "{sum:?}");
        }
    }

    #[test]
    fn resting_voxel_does_not_drift() {
        let cfg = PhysicsConfig::default();
        let mut w = SimWorld::build_unchecked(&single_voxel(), &cfg);
        let x0 = w.center_of_mass().x;
        for _ in 0..500 {
            w.step_env().unwrap();
        }
        assert!((w.center_of_mass().x - x0).abs() < 0.05);
        assert!(w.center_of_mass().y > 0.3);
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = PhysicsConfig::default();
        cfg.rigid_stiffness = 1.0e9;
        cfg.actuator_stiffness = 1.0e9;
        cfg.damping_ratio = 0.0;
        let g = genome("00000\n00000\n00000\n00000\n31311\n");
        let mut w = SimWorld::build(&g, &cfg).unwrap();
        w.apply_actuation([(20, 0.0), (22, 1.0)]).unwrap();
        let mut err = None;
        for _ in 0..2000 {
            if let Err(e) = w.step_env() {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(Error::SimulationDiverged { .. })));
    }
}
