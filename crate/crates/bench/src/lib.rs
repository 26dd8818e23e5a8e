//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxevo_core::{ControllerGenome, ControllerKind, FixedMorphologyCatalog, MorphologyGenome, ObservationConfig};

/// The built-in catalog bodies plus a small mixed-material walker.
pub fn bodies() -> Vec<(String, MorphologyGenome)> {
    let mut out: Vec<_> = FixedMorphologyCatalog::default().entries().to_vec();
    out.push(("mixed".into(), "00000\n00000\n33300\n10100\n10100\n".parse().expect("valid body")));
    out
}

pub fn controller(kind: ControllerKind, seed: u64) -> ControllerGenome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ControllerGenome::init(kind, &ObservationConfig::default(), &mut rng)
}
