//! The body genome: a 5×5 grid of voxel materials.
//!
//! Row 0 is the top of the bounding box. A genome is valid when at least
//! five cells are filled, at least two cells are actuators (either axis),
//! and the filled cells form a single 4-connected component. Every genome
//! handed out by [`MorphologyGenome::mutate`], [`MorphologyGenome::random`]
//! and [`MorphologyGenome::sample_neighbor`] is valid.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Side length of the design bounding box.
pub const GRID_SIDE: usize = 5;
/// Number of cells in the bounding box.
pub const GRID_CELLS: usize = GRID_SIDE * GRID_SIDE;
/// Minimum number of filled cells (20% of the box).
pub const MIN_FILLED: usize = 5;
/// Minimum number of actuator cells.
pub const MIN_ACTUATORS: usize = 2;
/// Per-cell resampling probability of the mutation operator.
pub const CELL_MUTATION_RATE: f64 = 0.1;
/// Default number of whole-operator redraws before giving up.
pub const DEFAULT_RETRY_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum Material {
    #[default]
    Empty = 0,
    Rigid = 1,
    Soft = 2,
    /// Actuates the voxel's horizontal edges.
    HorizontalActuator = 3,
    /// Actuates the voxel's vertical edges.
    VerticalActuator = 4,
}

impl Material {
    pub const ALL: [Material; 5] = [
        Material::Empty,
        Material::Rigid,
        Material::Soft,
        Material::HorizontalActuator,
        Material::VerticalActuator,
    ];

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::rejected(format!("material code {code} outside 0..=4")))
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn is_empty(self) -> bool {
        self == Material::Empty
    }

    pub fn is_actuator(self) -> bool {
        matches!(
            self,
            Material::HorizontalActuator | Material::VerticalActuator
        )
    }
}

/// A grid position, row 0 at the top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn from_raster(index: usize) -> Self {
        Cell {
            row: index / GRID_SIDE,
            col: index % GRID_SIDE,
        }
    }

    pub fn raster(self) -> usize {
        self.row * GRID_SIDE + self.col
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MorphologyGenome {
    cells: [Material; GRID_CELLS],
}

impl MorphologyGenome {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a genome from raw rows of material codes. Dimensions and codes
    /// are checked; validity is not (see [`MorphologyGenome::is_valid`]).
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        if rows.len() != GRID_SIDE {
            return Err(Error::rejected(format!(
                "expected {GRID_SIDE} rows, got {}",
                rows.len()
            )));
        }
        let mut genome = Self::empty();
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != GRID_SIDE {
                return Err(Error::rejected(format!(
                    "row {r} has {} cells, expected {GRID_SIDE}",
                    row.len()
                )));
            }
            for (c, &code) in row.iter().enumerate() {
                genome.cells[r * GRID_SIDE + c] = Material::from_code(code)?;
            }
        }
        Ok(genome)
    }

    pub fn from_materials(cells: [Material; GRID_CELLS]) -> Self {
        MorphologyGenome { cells }
    }

    pub fn material(&self, cell: Cell) -> Material {
        self.cells[cell.raster()]
    }

    pub fn material_at(&self, raster: usize) -> Material {
        self.cells[raster]
    }

    pub fn set(&mut self, cell: Cell, material: Material) {
        self.cells[cell.raster()] = material;
    }

    pub fn materials(&self) -> &[Material; GRID_CELLS] {
        &self.cells
    }

    pub fn filled_count(&self) -> usize {
        self.cells.iter().filter(|m| !m.is_empty()).count()
    }

    pub fn actuator_count(&self) -> usize {
        self.cells.iter().filter(|m| m.is_actuator()).count()
    }

    /// Actuator cells in raster order.
    pub fn actuator_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..GRID_CELLS)
            .filter(|&i| self.cells[i].is_actuator())
            .map(Cell::from_raster)
    }

    pub fn filled_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..GRID_CELLS)
            .filter(|&i| !self.cells[i].is_empty())
            .map(Cell::from_raster)
    }

    /// True when the filled cells form exactly one 4-connected component.
    pub fn is_connected(&self) -> bool {
        let Some(start) = (0..GRID_CELLS).find(|&i| !self.cells[i].is_empty()) else {
            return false;
        };
        let mut seen = [false; GRID_CELLS];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            let (r, c) = (i / GRID_SIDE, i % GRID_SIDE);
            let mut visit = |j: usize| {
                if !seen[j] && !self.cells[j].is_empty() {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - GRID_SIDE);
            }
            if r + 1 < GRID_SIDE {
                visit(i + GRID_SIDE);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < GRID_SIDE {
                visit(i + 1);
            }
        }
        reached == self.filled_count()
    }

    pub fn is_valid(&self) -> bool {
        self.filled_count() >= MIN_FILLED
            && self.actuator_count() >= MIN_ACTUATORS
            && self.is_connected()
    }

    /// One raw application of the per-cell operator, without rejection.
    /// Returns the child and the number of resample events (cells that were
    /// redrawn, including redraws that landed on the same material).
    pub fn mutate_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Self, usize) {
        let (child, events) = self.mutate_raw_events(rng);
        (child, events.iter().filter(|&&e| e).count())
    }

    /// Like [`MorphologyGenome::mutate_raw`], reporting which cells were redrawn.
    pub fn mutate_raw_events<R: Rng + ?Sized>(&self, rng: &mut R) -> (Self, [bool; GRID_CELLS]) {
        let mut child = *self;
        let mut events = [false; GRID_CELLS];
        for (cell, event) in child.cells.iter_mut().zip(events.iter_mut()) {
            if rng.random_bool(CELL_MUTATION_RATE) {
                *event = true;
                *cell = Material::ALL[rng.random_range(0..Material::ALL.len())];
            }
        }
        (child, events)
    }

    /// Mutation with rejection: redraws the whole operator from `self` until
    /// the child is valid and differs from the parent.
    pub fn mutate<R: Rng + ?Sized>(&self, rng: &mut R, retry_cap: usize) -> Result<Self> {
        for _ in 0..retry_cap {
            let (child, _) = self.mutate_raw(rng);
            if child != *self && child.is_valid() {
                return Ok(child);
            }
        }
        Err(Error::MutationFailed {
            attempts: retry_cap,
        })
    }

    /// A fresh random body: the operator is applied repeatedly, starting from
    /// the empty grid, until the accumulated grid is valid.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, retry_cap: usize) -> Result<Self> {
        let mut genome = Self::empty();
        for _ in 0..retry_cap {
            genome = genome.mutate_raw(rng).0;
            if genome.is_valid() {
                return Ok(genome);
            }
        }
        Err(Error::GenerationFailed {
            attempts: retry_cap,
        })
    }

    /// Applies [`MorphologyGenome::mutate`] `distance` times in sequence.
    pub fn sample_neighbor<R: Rng + ?Sized>(
        &self,
        distance: usize,
        rng: &mut R,
        retry_cap: usize,
    ) -> Result<Self> {
        if distance == 0 {
            return Err(Error::rejected("neighbor distance must be at least 1"));
        }
        let mut current = *self;
        for _ in 0..distance {
            current = current.mutate(rng, retry_cap)?;
        }
        Ok(current)
    }

    /// Hamming distance between the two material grids.
    pub fn grid_distance(&self, other: &Self) -> usize {
        self.cells
            .iter()
            .zip(other.cells.iter())
            .filter(|(a, b)| a != b)
            .count()
    }

    /// The body shifted `dc` columns to the right (negative: left), or `None`
    /// if a filled cell would leave the box.
    pub fn shifted_horizontally(&self, dc: isize) -> Option<Self> {
        let mut out = Self::empty();
        for cell in self.filled_cells() {
            let col = cell.col as isize + dc;
            if !(0..GRID_SIDE as isize).contains(&col) {
                return None;
            }
            out.set(Cell::new(cell.row, col as usize), self.material(cell));
        }
        Some(out)
    }

    /// Compact single-line form: 25 digits in raster order.
    pub fn to_compact(&self) -> String {
        self.cells.iter().map(|m| char::from(b'0' + m.code())).collect()
    }

    pub fn from_compact(s: &str) -> Result<Self> {
        let digits = s.trim().as_bytes();
        if digits.len() != GRID_CELLS {
            return Err(Error::rejected(format!(
                "compact genome must have {GRID_CELLS} digits, got {}",
                digits.len()
            )));
        }
        let rows: Vec<Vec<u8>> = digits
            .chunks(GRID_SIDE)
            .map(|row| row.iter().map(|b| b.wrapping_sub(b'0')).collect())
            .collect();
        Self::from_rows(&rows)
    }
}

/// Five lines of five digits, row-major, each line terminated by `\n`.
impl fmt::Display for MorphologyGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(GRID_SIDE) {
            for m in row {
                write!(f, "{}", m.code())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl fmt::Debug for MorphologyGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MorphologyGenome({})", self.to_compact())
    }
}

impl FromStr for MorphologyGenome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<Vec<u8>> = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.bytes()
                    .map(|b| {
                        if b.is_ascii_digit() {
                            Ok(b - b'0')
                        } else {
                            Err(Error::rejected(format!("non-digit {:?} in genome", b as char)))
                        }
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<_>>()?;
        Self::from_rows(&rows)
    }
}
