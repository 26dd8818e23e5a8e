//! CSV logs: comma-separated, header row, `.` decimals, LF line endings.
//! Floats use Rust's shortest round-trip formatting; absent values are empty.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evolution::{GenerationLog, LineageRecord, MutationKind};
use crate::experiments::{RunSummary, Spread, TransferSample};
use crate::morphology::MorphologyGenome;

pub const GENERATION_HEADER: [&str; 7] = [
    "generation",
    "best_fitness",
    "mean_fitness",
    "n_body_success",
    "n_brain_success",
    "n_body_attempted",
    "n_brain_attempted",
];

pub const LINEAGE_HEADER: [&str; 6] = [
    "id",
    "parent_id",
    "mutation_kind",
    "born",
    "fitness",
    "parent_fitness_at_birth",
];

pub const TRANSFER_HEADER: [&str; 10] = [
    "source_id",
    "source_fitness",
    "distance",
    "neighbor",
    "zero_shot_fitness",
    "one_shot_fitness",
    "relative_change_zero",
    "relative_change_one",
    "small_source",
    "one_shot_ge_zero_shot",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "run",
    "champion_fitness",
    "gen_80",
    "gen_90",
    "gen_95",
    "gen_99",
    "shifted",
    "lineage_body_fraction",
    "population_body_fraction",
    "population_successes",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A CSV writer that flushes after every row.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(writer: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        inner.write_record(header)?;
        inner.flush().map_err(csv::Error::from)?;
        Ok(CsvSink { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Csv(csv::Error::from(e.into_error())))
    }
}

impl CsvSink<File> {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(f, header)
    }
}

pub fn generation_row(log: &GenerationLog) -> [String; 7] {
    [
        log.generation.to_string(),
        log.best_fitness.to_string(),
        log.mean_fitness.to_string(),
        log.n_body_success().to_string(),
        log.n_brain_success().to_string(),
        log.n_body_attempted().to_string(),
        log.n_brain_attempted().to_string(),
    ]
}

pub fn lineage_row(r: &LineageRecord) -> [String; 6] {
    [
        r.id.to_string(),
        opt(r.parent_id),
        r.mutation_kind.name().to_string(),
        r.born.to_string(),
        r.fitness.to_string(),
        opt(r.parent_fitness_at_birth),
    ]
}

pub fn transfer_row(s: &TransferSample) -> [String; 10] {
    [
        s.source_id.to_string(),
        s.source_fitness.to_string(),
        s.distance.to_string(),
        s.neighbor.to_compact(),
        s.zero_shot_fitness.to_string(),
        s.one_shot_fitness.to_string(),
        s.relative_change_zero.to_string(),
        s.relative_change_one.to_string(),
        s.small_source.to_string(),
        (s.one_shot_fitness >= s.zero_shot_fitness).to_string(),
    ]
}

pub fn summary_row(label: &str, s: &RunSummary) -> [String; 10] {
    let [g80, g90, g95, g99] = s.convergence.generations;
    [
        label.to_string(),
        s.champion_fitness.to_string(),
        g80.to_string(),
        g90.to_string(),
        g95.to_string(),
        g99.to_string(),
        s.convergence.shifted.to_string(),
        opt(s.accounting.lineage_body_fraction),
        opt(s.accounting.population_body_fraction),
        (s.accounting.population_body_successes + s.accounting.population_brain_successes).to_string(),
    ]
}

/// Aggregate row: medians of every numeric column over the battery.
pub fn aggregate_row(rows: &[RunSummary]) -> [String; 10] {
    let med = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        opt(Spread::of(&v).map(|s| s.median))
    };
    let gen = |i: usize| med(&|r| Some(r.convergence.generations[i] as f64));
    [
        "median".to_string(),
        med(&|r| Some(r.champion_fitness)),
        gen(0),
        gen(1),
        gen(2),
        gen(3),
        rows.iter().any(|r| r.convergence.shifted).to_string(),
        med(&|r| r.accounting.lineage_body_fraction),
        med(&|r| r.accounting.population_body_fraction),
        med(&|r| {
            Some((r.accounting.population_body_successes + r.accounting.population_brain_successes) as f64)
        }),
    ]
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().from_reader(f))
}

fn check_header(reader: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Integrity(format!("{} has an unexpected header", path.display())));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            Error::Integrity(format!("{}:{line}: bad value in column {i}", path.display()))
        })
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, path).map(Some),
    }
}

pub fn read_lineage(path: &Path) -> Result<Vec<LineageRecord>> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &LINEAGE_HEADER, path)?;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let kind: String = field(&rec, 2, path)?;
            Ok(LineageRecord {
                id: field(&rec, 0, path)?,
                parent_id: opt_field(&rec, 1, path)?,
                mutation_kind: MutationKind::parse(&kind).map_err(|e| Error::Integrity(e.to_string()))?,
                born: field(&rec, 3, path)?,
                fitness: field(&rec, 4, path)?,
                parent_fitness_at_birth: opt_field(&rec, 5, path)?,
            })
        })
        .collect()
}

/// Generation rows as `(generation, best_fitness, mean_fitness, counts[4])`.
pub type GenerationRow = (u64, f64, f64, [usize; 4]);

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRow>> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &GENERATION_HEADER, path)?;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok((
                field(&rec, 0, path)?,
                field(&rec, 1, path)?,
                field(&rec, 2, path)?,
                [
                    field(&rec, 3, path)?,
                    field(&rec, 4, path)?,
                    field(&rec, 5, path)?,
                    field(&rec, 6, path)?,
                ],
            ))
        })
        .collect()
}

/// Neighbor, zero-shot and one-shot fitness per transfer row.
pub fn read_transfer(path: &Path) -> Result<Vec<(MorphologyGenome, f64, f64)>> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &TRANSFER_HEADER, path)?;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let compact: String = field(&rec, 3, path)?;
            Ok((
                MorphologyGenome::from_compact(&compact)?,
                field(&rec, 4, path)?,
                field(&rec, 5, path)?,
            ))
        })
        .collect()
}
