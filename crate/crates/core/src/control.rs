//! One-hidden-layer MLP controllers.
//!
//! Both paradigms share the same network shape up to the output layer:
//! 32 ReLU hidden units and sigmoid outputs. The global controller reads the
//! padded whole-box observation and emits one action per cell (raster order),
//! of which only the actuator cells are kept. The modular controller is a
//! single-output network evaluated once per actuator on its Moore window,
//! with one parameter set shared by every actuator.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::morphology::{Cell, MorphologyGenome, GRID_CELLS};
use crate::physics::SimWorld;
use crate::sensing::{self, ObservationConfig, GLOBAL_OBS_LEN};

pub const HIDDEN_UNITS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    Global,
    Modular,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Global => "global",
            ControllerKind::Modular => "modular",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ControllerKind::Global),
            "modular" => Ok(ControllerKind::Modular),
            other => Err(Error::rejected(format!("unknown controller kind {other:?}"))),
        }
    }

    pub fn inputs(self, obs: &ObservationConfig) -> usize {
        match self {
            ControllerKind::Global => GLOBAL_OBS_LEN,
            ControllerKind::Modular => obs.local_obs_len(),
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            ControllerKind::Global => GRID_CELLS,
            ControllerKind::Modular => 1,
        }
    }

    fn tag(self) -> u8 {
        match self {
            ControllerKind::Global => 0,
            ControllerKind::Modular => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ControllerKind::Global),
            1 => Ok(ControllerKind::Modular),
            t => Err(Error::Integrity(format!("unknown controller tag {t}"))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Flat parameters in layer order: W1 (hidden × inputs, row-major), b1,
/// W2 (outputs × hidden, row-major), b2.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    values: Vec<f64>,
}

pub fn param_count(inputs: usize, hidden: usize, outputs: usize) -> usize {
    inputs * hidden + hidden + hidden * outputs + outputs
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpParams {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        MlpParams {
            inputs,
            hidden,
            outputs,
            values: vec![0.0; param_count(inputs, hidden, outputs)],
        }
    }

    pub fn from_values(inputs: usize, hidden: usize, outputs: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != param_count(inputs, hidden, outputs) {
            return Err(Error::rejected(format!(
                "expected {} parameters, got {}",
                param_count(inputs, hidden, outputs),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::rejected("parameters must be finite"));
        }
        Ok(MlpParams {
            inputs,
            hidden,
            outputs,
            values,
        })
    }

    /// Uniform in ±1/√fan_in per layer, weights and biases alike.
    pub fn init_uniform<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(inputs, hidden, outputs);
        let b1 = 1.0 / (inputs as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let split = inputs * hidden + hidden;
        for (i, v) in p.values.iter_mut().enumerate() {
            let bound = if i < split { b1 } else { b2 };
            *v = rng.random_range(-bound..=bound);
        }
        p
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn w1(&self) -> &[f64] {
        &self.values[..self.inputs * self.hidden]
    }

    pub fn b1(&self) -> &[f64] {
        let s = self.inputs * self.hidden;
        &self.values[s..s + self.hidden]
    }

    pub fn w2(&self) -> &[f64] {
        let s = self.inputs * self.hidden + self.hidden;
        &self.values[s..s + self.hidden * self.outputs]
    }

    pub fn b2(&self) -> &[f64] {
        &self.values[self.values.len() - self.outputs..]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs {
            return Err(Error::rejected(format!(
                "input length {} does not match network input {}",
                input.len(),
                self.inputs
            )));
        }
        let mut scratch = Scratch::default();
        let mut out = vec![0.0; self.outputs];
        self.forward_into(input, &mut scratch, &mut out);
        Ok(out)
    }

    /// `sigmoid(W2·relu(W1·x + b1) + b2)`. Zero inputs are skipped, which
    /// leaves every sum bitwise unchanged.
    pub fn forward_into(&self, input: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.inputs);
        scratch.nonzero.clear();
        scratch
            .nonzero
            .extend((0..input.len()).filter(|&i| input[i] != 0.0));
        scratch.hidden.clear();
        let (w1, b1) = (self.w1(), self.b1());
        for (j, row) in w1.chunks_exact(self.inputs).enumerate() {
            let mut z = 0.0;
            for &i in &scratch.nonzero {
                z += row[i] * input[i];
            }
            scratch.hidden.push((z + b1[j]).max(0.0));
        }
        let (w2, b2) = (self.w2(), self.b2());
        for (k, row) in w2.chunks_exact(self.hidden).enumerate() {
            let z: f64 = row
                .iter()
                .zip(&scratch.hidden)
                .map(|(w, h)| w * h)
                .sum::<f64>()
                + b2[k];
            out[k] = sigmoid(z);
        }
    }
}

/// Reusable buffers for [`MlpParams::forward_into`].
#[derive(Default, Debug)]
pub struct Scratch {
    nonzero: Vec<usize>,
    hidden: Vec<f64>,
    obs: Vec<f64>,
    out: Vec<f64>,
}

/// Actions for the actuator cells of one body, in raster order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActionAssignment {
    actions: Vec<(Cell, f64)>,
}

impl ActionAssignment {
    /// Builds an assignment; pairs are sorted into raster order.
    pub fn from_pairs(mut actions: Vec<(Cell, f64)>) -> Self {
        actions.sort_by_key(|(c, _)| c.raster());
        ActionAssignment { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.actions.iter().copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.actions.iter().map(|(c, _)| *c)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.actions.iter().map(|(_, a)| *a)
    }

    pub fn get(&self, cell: Cell) -> Option<f64> {
        self.actions.iter().find(|(c, _)| *c == cell).map(|(_, a)| *a)
    }

    /// `(raster index, action)` pairs for [`SimWorld::apply_actuation`].
    pub fn as_raster(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.actions.iter().map(|(c, a)| (c.raster(), *a))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerGenome {
    kind: ControllerKind,
    params: MlpParams,
}

impl ControllerGenome {
    pub fn new(kind: ControllerKind, params: MlpParams) -> Result<Self> {
        if params.outputs() != kind.outputs() || params.hidden() != HIDDEN_UNITS {
            return Err(Error::rejected(format!(
                "{kind} controller needs {} outputs and {HIDDEN_UNITS} hidden units",
                kind.outputs()
            )));
        }
        Ok(ControllerGenome { kind, params })
    }

    pub fn zeros(kind: ControllerKind, obs: &ObservationConfig) -> Self {
        ControllerGenome {
            kind,
            params: MlpParams::zeros(kind.inputs(obs), HIDDEN_UNITS, kind.outputs()),
        }
    }

    pub fn init<R: Rng + ?Sized>(kind: ControllerKind, obs: &ObservationConfig, rng: &mut R) -> Self {
        ControllerGenome {
            kind,
            params: MlpParams::init_uniform(kind.inputs(obs), HIDDEN_UNITS, kind.outputs(), rng),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Child with independent N(0, sigma²) noise on every parameter.
    pub fn mutate<R: Rng + ?Sized>(&self, rng: &mut R, sigma: f64) -> Self {
        let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
        let mut child = self.clone();
        for v in child.params.values_mut() {
            *v += normal.sample(rng);
        }
        child
    }

    /// Actions for every actuator of `morph` given the current world state.
    pub fn act(
        &self,
        morph: &MorphologyGenome,
        world: &SimWorld,
        env_step: u64,
        obs_cfg: &ObservationConfig,
    ) -> ActionAssignment {
        let mut scratch = Scratch::default();
        self.act_with(morph, world, env_step, obs_cfg, &mut scratch)
    }

    pub fn act_with(
        &self,
        morph: &MorphologyGenome,
        world: &SimWorld,
        env_step: u64,
        obs_cfg: &ObservationConfig,
        scratch: &mut Scratch,
    ) -> ActionAssignment {
        let cells = sensing::observe_cells(world, morph, obs_cfg);
        let mut obs = std::mem::take(&mut scratch.obs);
        let mut out = std::mem::take(&mut scratch.out);
        out.resize(self.params.outputs(), 0.0);
        let actions = match self.kind {
            ControllerKind::Global => {
                sensing::global_from_cells(&cells, env_step, &mut obs);
                self.params.forward_into(&obs, scratch, &mut out);
                morph
                    .actuator_cells()
                    .map(|c| (c, out[c.raster()]))
                    .collect()
            }
            ControllerKind::Modular => morph
                .actuator_cells()
                .map(|c| {
                    sensing::local_from_cells(&cells, c, env_step, obs_cfg, &mut obs);
                    self.params.forward_into(&obs, scratch, &mut out);
                    (c, out[0])
                })
                .collect(),
        };
        scratch.obs = obs;
        scratch.out = out;
        ActionAssignment { actions }
    }

    /// Kind tag, dimensions, then the flat parameters as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(13 + 8 * p.len());
        out.push(self.kind.tag());
        for dim in [p.inputs, p.hidden, p.outputs] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses [`ControllerGenome::to_bytes`] output; returns the genome and
    /// the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let short = || Error::Integrity("truncated controller record".into());
        let kind = ControllerKind::from_tag(*bytes.first().ok_or_else(short)?)?;
        let dim = |k: usize| -> Result<usize> {
            let s = bytes.get(1 + 4 * k..5 + 4 * k).ok_or_else(short)?;
            Ok(u32::from_le_bytes(s.try_into().unwrap()) as usize)
        };
        let (inputs, hidden, outputs) = (dim(0)?, dim(1)?, dim(2)?);
        let n = param_count(inputs, hidden, outputs);
        let body = bytes.get(13..13 + 8 * n).ok_or_else(short)?;
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = MlpParams::from_values(inputs, hidden, outputs, values)
            .map_err(|e| Error::Integrity(e.to_string()))?;
        let genome = ControllerGenome::new(kind, params).map_err(|e| Error::Integrity(e.to_string()))?;
        Ok((genome, 13 + 8 * n))
    }
}
