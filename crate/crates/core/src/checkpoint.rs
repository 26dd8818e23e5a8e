//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "VOXEVOCK"
//! version  u32
//! seed     u64      effective master seed of the run
//! gen      u64      completed generations
//! config   u32 length + UTF-8 text of the run configuration
//! champion record
//! count    u32, then `count` population records
//! sha256   32 bytes over everything above
//! ```
//!
//! A record is: id u64, parent id (u8 flag + u64), mutation kind u8, age u32,
//! born u64, fitness (u8 flag + f64), parent fitness (u8 flag + f64), the
//! 25-digit compact morphology, then the controller's own byte encoding.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::control::ControllerGenome;
use crate::error::{Error, Result};
use crate::evolution::{Individual, MutationKind};
use crate::morphology::{MorphologyGenome, GRID_CELLS};

pub const MAGIC: &[u8; 8] = b"VOXEVOCK";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub generation: u64,
    pub config_text: String,
    pub champion: Individual,
    pub population: Vec<Individual>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.generation.to_le_bytes());
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        write_record(&mut out, &self.champion);
        out.extend_from_slice(&(self.population.len() as u32).to_le_bytes());
        for ind in &self.population {
            write_record(&mut out, ind);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Integrity("checkpoint is truncated".into()));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("checkpoint checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Integrity(format!(
                "unsupported checkpoint version {version} (this build reads {VERSION})"
            )));
        }
        let seed = r.u64()?;
        let generation = r.u64()?;
        let config_len = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(config_len)?.to_vec())
            .map_err(|_| Error::Integrity("checkpoint config is not UTF-8".into()))?;
        let champion = read_record(&mut r)?;
        let count = r.u32()? as usize;
        let population = (0..count).map(|_| read_record(&mut r)).collect::<Result<Vec<_>>>()?;
        if r.pos != body.len() {
            return Err(Error::Integrity("trailing bytes in checkpoint".into()));
        }
        Ok(Checkpoint {
            seed,
            generation,
            config_text,
            champion,
            population,
        })
    }

    /// Writes through a temporary file and a rename, so readers never see a
    /// half-written checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn kind_tag(kind: MutationKind) -> u8 {
    match kind {
        MutationKind::Body => 0,
        MutationKind::Brain => 1,
        MutationKind::Fresh => 2,
    }
}

fn write_opt_u64(out: &mut Vec<u8>, v: Option<u64>) {
    out.push(v.is_some() as u8);
    out.extend_from_slice(&v.unwrap_or(0).to_le_bytes());
}

fn write_opt_f64(out: &mut Vec<u8>, v: Option<f64>) {
    out.push(v.is_some() as u8);
    out.extend_from_slice(&v.unwrap_or(0.0).to_le_bytes());
}

fn write_record(out: &mut Vec<u8>, ind: &Individual) {
    out.extend_from_slice(&ind.id.to_le_bytes());
    write_opt_u64(out, ind.parent_id);
    out.push(kind_tag(ind.mutation_kind));
    out.extend_from_slice(&ind.age.to_le_bytes());
    out.extend_from_slice(&ind.born.to_le_bytes());
    write_opt_f64(out, ind.fitness);
    write_opt_f64(out, ind.parent_fitness_at_birth);
    out.extend_from_slice(ind.morphology.to_compact().as_bytes());
    out.extend_from_slice(&ind.controller.to_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Integrity("checkpoint record is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Integrity(format!("bad presence flag {b}"))),
        }
    }

    fn opt_u64(&mut self) -> Result<Option<u64>> {
        let present = self.flag()?;
        let v = self.u64()?;
        Ok(present.then_some(v))
    }

    fn opt_f64(&mut self) -> Result<Option<f64>> {
        let present = self.flag()?;
        let v = self.f64()?;
        Ok(present.then_some(v))
    }
}

fn read_record(r: &mut Reader<'_>) -> Result<Individual> {
    let id = r.u64()?;
    let parent_id = r.opt_u64()?;
    let mutation_kind = match r.u8()? {
        0 => MutationKind::Body,
        1 => MutationKind::Brain,
        2 => MutationKind::Fresh,
        t => return Err(Error::Integrity(format!("unknown mutation kind tag {t}"))),
    };
    let age = r.u32()?;
    let born = r.u64()?;
    let fitness = r.opt_f64()?;
    let parent_fitness_at_birth = r.opt_f64()?;
    let compact = std::str::from_utf8(r.take(GRID_CELLS)?)
        .map_err(|_| Error::Integrity("morphology is not ASCII".into()))?;
    let morphology = MorphologyGenome::from_compact(compact)
        .map_err(|e| Error::Integrity(format!("bad morphology in checkpoint: {e}")))?;
    let (controller, used) = ControllerGenome::from_bytes(&r.buf[r.pos..])?;
    r.pos += used;
    Ok(Individual {
        morphology,
        controller,
        age,
        fitness,
        id,
        parent_id,
        mutation_kind,
        parent_fitness_at_birth,
        born,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerKind;
    use crate::sensing::ObservationConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = ObservationConfig::default();
        let ind = |id: u64, kind: ControllerKind, rng: &mut ChaCha8Rng| Individual {
            morphology: "00000\n00000\n33300\n10100\n10100\n".parse().unwrap(),
            controller: ControllerGenome::init(kind, &obs, rng),
            age: 3,
            fitness: Some(1.25),
            id,
            parent_id: id.checked_sub(1),
            mutation_kind: MutationKind::Brain,
            parent_fitness_at_birth: Some(-0.5),
            born: 7,
        };
        Checkpoint {
            seed: 42,
            generation: 10,
            config_text: "[run]\nseed = 42\n".into(),
            champion: ind(5, ControllerKind::Modular, &mut rng),
            population: vec![ind(0, ControllerKind::Global, &mut rng), ind(1, ControllerKind::Modular, &mut rng)],
        }
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        for i in [0usize, 9, 40, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Integrity(_))), "byte {i}");
        }
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 10]).is_err());
        assert!(Checkpoint::from_bytes(b"short").is_err());
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[8] = 2;
        let n = bytes.len() - DIGEST_LEN;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(&digest);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
    }

    #[test]
    fn save_and_load() {
        let dir = std::env::temp_dir().join(format!("voxevo-ck-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.ckpt");
        sample().save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), sample());
        assert!(!path.with_extension("tmp").exists());
        fs::remove_dir_all(&dir).unwrap();
    }
}
