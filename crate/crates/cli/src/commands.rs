use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use voxevo_core::checkpoint::Checkpoint;
use voxevo_core::config::RunConfig;
use voxevo_core::evolution::{run_evolution, LineageRecord};
use voxevo_core::experiments::{summarize_run, transfer_analysis, RunSummary, Spread};
use voxevo_core::logs::{
    aggregate_row, generation_row, lineage_row, read_generations, read_lineage, summary_row, transfer_row,
    CsvSink, GENERATION_HEADER, LINEAGE_HEADER, SUMMARY_HEADER, TRANSFER_HEADER,
};
use voxevo_core::walker::run_episode;

const PARTIAL: &str = ".partial";

/// Creates `out` (which must be absent or empty) with a `.partial` marker.
fn open_output(out: &Path) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            bail!("{} exists and is not a directory", out.display());
        }
        if fs::read_dir(out)?.next().is_some() {
            bail!("output directory {} is not empty", out.display());
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(PARTIAL), b"").with_context(|| format!("writing marker in {}", out.display()))?;
    Ok(())
}

fn close_output(out: &Path) -> Result<()> {
    fs::remove_file(out.join(PARTIAL)).with_context(|| format!("removing marker in {}", out.display()))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run_dir_name(seed: u64) -> String {
    format!("run-{seed}")
}

pub fn evolve(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    open_output(out)?;
    fs::write(out.join("config.toml"), &cfg.source)?;
    for run_seed in cfg.run_seeds() {
        let dir = out.join(run_dir_name(run_seed));
        let ckpt_dir = dir.join("checkpoints");
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&ckpt_dir)?;
        fs::create_dir_all(&snap_dir)?;
        let mut gens = CsvSink::create(&dir.join("generations.csv"), &GENERATION_HEADER)?;
        let mut lineage = CsvSink::create(&dir.join("lineage.csv"), &LINEAGE_HEADER)?;
        let evo_cfg = cfg.evolution_config(run_seed);
        let snapshot_at = evo_cfg.snapshot_generations.clone();
        let checkpoint = |state: &voxevo_core::evolution::Evolution| Checkpoint {
            seed: run_seed,
            generation: state.generation(),
            config_text: cfg.source.clone(),
            champion: state.champion().clone(),
            population: state.population().to_vec(),
        };

        let artifacts = run_evolution(evo_cfg, cfg.settings, |ev| {
            for ind in ev.newcomers {
                lineage.row(lineage_row(&LineageRecord::of(ind)?))?;
            }
            if let Some(log) = ev.log {
                gens.row(generation_row(log))?;
            }
            let g = ev.state.generation();
            if cfg.checkpoint_every > 0 && g > 0 && g % cfg.checkpoint_every == 0 {
                checkpoint(ev.state).save(&ckpt_dir.join(format!("gen-{g:06}.ckpt")))?;
            }
            if snapshot_at.contains(&g) {
                checkpoint(ev.state).save(&snap_dir.join(format!("champion-gen-{g:06}.ckpt")))?;
            }
            Ok(())
        })
        .with_context(|| format!("run with seed {run_seed}"))?;

        Checkpoint {
            seed: run_seed,
            generation: cfg.generations,
            config_text: cfg.source.clone(),
            champion: artifacts.champion.clone(),
            population: artifacts.final_population.clone(),
        }
        .save(&dir.join("champion.ckpt"))?;
        println!(
            "seed {run_seed}: champion fitness {} (id {}, {} generations)",
            artifacts.champion.fitness.unwrap_or(f64::NAN),
            artifacts.champion.id,
            cfg.generations
        );
    }
    close_output(out)
}

pub fn transfer(config: &Path, champion: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let ck = Checkpoint::load(champion).with_context(|| format!("reading {}", champion.display()))?;
    open_output(out)?;
    let report = transfer_analysis(&ck.champion, &cfg.transfer, &cfg.settings, cfg.seed)?;
    let mut sink = CsvSink::create(&out.join("transfer.csv"), &TRANSFER_HEADER)?;
    for s in &report.samples {
        sink.row(transfer_row(s))?;
    }

    let mut text = String::new();
    let f_source = report.samples.first().map(|s| s.source_fitness);
    text.push_str(&format!(
        "source champion {} (seed {}), fitness on own body {}\n",
        ck.champion.id,
        ck.seed,
        f_source.map(|f| f.to_string()).unwrap_or_else(|| "n/a".into())
    ));
    for &d in &cfg.transfer.distances {
        let at: Vec<_> = report.samples.iter().filter(|s| s.distance == d).collect();
        let flagged = at.iter().filter(|s| s.small_source).count();
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into());
        text.push_str(&format!(
            "distance {d}: samples {} flagged {flagged} mean_rel_zero {} mean_rel_one {} one_shot>=zero_shot {}\n",
            at.len(),
            fmt(report.mean_relative_change(d, false)),
            fmt(report.mean_relative_change(d, true)),
            at.iter().all(|s| s.one_shot_fitness >= s.zero_shot_fitness),
        ));
    }
    for (d, missing) in &report.shortfalls {
        text.push_str(&format!("distance {d}: {missing} samples skipped (no further distinct neighbors)\n"));
    }
    fs::write(out.join("transfer_summary.txt"), &text)?;
    print!("{text}");
    close_output(out)
}

pub fn replay(champion: &Path, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(champion).with_context(|| format!("reading {}", champion.display()))?;
    let cfg = RunConfig::parse(&ck.config_text).context("checkpoint carries an invalid config")?;
    open_output(out)?;
    let ind = &ck.champion;
    let result = run_episode(&ind.morphology, &ind.controller, &cfg.settings, true)?;
    let frames = result.trajectory.as_deref().unwrap_or_default();

    let mut traj = CsvSink::create(&out.join("trajectory.csv"), &["frame", "mass", "x", "y"])?;
    for (f, frame) in frames.iter().enumerate() {
        for (m, (x, y)) in frame.iter().enumerate() {
            traj.row([f.to_string(), m.to_string(), x.to_string(), y.to_string()])?;
        }
    }
    let checkpoint_fitness = ind.fitness.map(|f| f.to_string()).unwrap_or_default();
    let mut meta = CsvSink::create(&out.join("replay.csv"), &["key", "value"])?;
    for (k, v) in [
        ("champion_id", ind.id.to_string()),
        ("seed", ck.seed.to_string()),
        ("mode", cfg.training_mode().name().to_string()),
        ("morphology", ind.morphology.to_compact()),
        ("fitness", result.fitness.to_string()),
        ("checkpoint_fitness", checkpoint_fitness),
        ("delta_px", result.delta_px.to_string()),
        ("reached_end", result.reached_end.to_string()),
        ("steps", result.steps_used.to_string()),
        ("frames", frames.len().to_string()),
        ("diverged", result.diverged.to_string()),
    ] {
        meta.row([k.to_string(), v])?;
    }
    println!(
        "replayed champion {}: fitness {} over {} steps{}",
        ind.id,
        result.fitness,
        result.steps_used,
        if result.diverged { " (diverged)" } else { "" }
    );
    close_output(out)
}

struct RunFiles {
    seed: u64,
    dir: PathBuf,
}

fn discover_runs(run_dir: &Path) -> Result<Vec<RunFiles>> {
    if !run_dir.is_dir() {
        bail!("{} is not a directory", run_dir.display());
    }
    if run_dir.join(PARTIAL).exists() {
        bail!(voxevo_core::Error::Integrity(format!(
            "{} is incomplete (.partial marker present)",
            run_dir.display()
        )));
    }
    let mut runs = Vec::new();
    for entry in fs::read_dir(run_dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(seed) = name.to_str().and_then(|n| n.strip_prefix("run-")).and_then(|s| s.parse().ok()) else {
            continue;
        };
        if entry.path().is_dir() {
            runs.push(RunFiles { seed, dir: entry.path() });
        }
    }
    runs.sort_by_key(|r| r.seed);
    if runs.is_empty() {
        bail!(voxevo_core::Error::Integrity(format!("no run-<seed> directories in {}", run_dir.display())));
    }
    let missing: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            ["generations.csv", "lineage.csv", "champion.ckpt"]
                .into_iter()
                .map(|f| r.dir.join(f))
                .filter(|p| !p.exists())
                .map(|p| p.display().to_string())
        })
        .collect();
    if !missing.is_empty() {
        bail!(voxevo_core::Error::Integrity(format!("missing artifacts: {}", missing.join(", "))));
    }
    Ok(runs)
}

fn summarize(files: &RunFiles) -> Result<RunSummary> {
    let ck = Checkpoint::load(&files.dir.join("champion.ckpt"))?;
    let gens = read_generations(&files.dir.join("generations.csv"))?;
    if gens.len() as u64 != ck.generation || gens.iter().enumerate().any(|(i, g)| g.0 != i as u64 + 1) {
        bail!(voxevo_core::Error::Integrity(format!(
            "{}: generations.csv has {} rows but the champion checkpoint is at generation {}",
            files.dir.display(),
            gens.len(),
            ck.generation
        )));
    }
    let lineage = read_lineage(&files.dir.join("lineage.csv"))?;
    Ok(summarize_run(files.seed, &lineage, ck.champion.id, ck.generation)?)
}

pub fn report(run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let runs = discover_runs(run_dir)?;
    let summaries = runs
        .iter()
        .map(|r| summarize(r).with_context(|| format!("summarizing {}", r.dir.display())))
        .collect::<Result<Vec<_>>>()?;
    let out = out.unwrap_or(run_dir);
    fs::create_dir_all(out)?;

    let mut sink = CsvSink::create(&out.join("summary.csv"), &SUMMARY_HEADER)?;
    for s in &summaries {
        sink.row(summary_row(&run_dir_name(s.seed), s))?;
    }
    sink.row(aggregate_row(&summaries))?;

    let mut text = format!("{} runs\n", summaries.len());
    let spread_line = |name: &str, values: Vec<f64>| match Spread::of(&values) {
        Some(s) => format!("{name}: median {:.4} IQR [{:.4}, {:.4}] n={}\n", s.median, s.q1, s.q3, s.n),
        None => format!("{name}: n/a\n"),
    };
    text.push_str(&spread_line("champion_fitness", summaries.iter().map(|s| s.champion_fitness).collect()));
    for (i, pct) in ["80", "90", "95", "99"].iter().enumerate() {
        text.push_str(&spread_line(
            &format!("generations_to_{pct}pct"),
            summaries.iter().map(|s| s.convergence.generations[i] as f64).collect(),
        ));
    }
    text.push_str(&spread_line(
        "lineage_body_fraction",
        summaries.iter().filter_map(|s| s.accounting.lineage_body_fraction).collect(),
    ));
    text.push_str(&spread_line(
        "population_body_fraction",
        summaries.iter().filter_map(|s| s.accounting.population_body_fraction).collect(),
    ));
    fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}
