use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use voxevo_core::checkpoint::Checkpoint;
use voxevo_core::{PhysicsConfig, SimWorld};

const TINY: &str = r#"[run]
seed = 5
generations = 10
controller = "modular"
checkpoint_every = 5

[evolution]
mu = 4
lambda = 4

[episode]
max_steps = 100
shift_constant = 1.0

[transfer]
distances = [1, 2, 3]
samples_per_distance = 20
one_shot_lambda = 2
"#;

fn voxevo(args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxevo"))
        .args(args)
        .env("VOXEVO_WORKERS", workers)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn evolve(dir: &Path, cfg: &Path, out: &str, workers: &str) -> PathBuf {
    let out = dir.join(out);
    let o = voxevo(&["evolve", "--config", p(cfg), "--out", p(&out)], workers);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn tiny_run_writes_one_row_per_generation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = evolve(tmp.path(), &cfg, "out", "1");
    let run = out.join("run-5");
    let text = fs::read_to_string(run.join("generations.csv")).unwrap();
    assert!(text.starts_with(
        "generation,best_fitness,mean_fitness,n_body_success,n_brain_success,n_body_attempted,n_brain_attempted\n"
    ));
    assert!(!text.contains('\r'));
    let rows = csv_rows(&run.join("generations.csv"));
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (i + 1).to_string());
        let attempted: usize = row[5].parse::<usize>().unwrap() + row[6].parse::<usize>().unwrap();
        assert_eq!(attempted, 4);
    }
    assert!(!out.join(".partial").exists());
    for f in ["champion.ckpt", "checkpoints/gen-000005.ckpt", "checkpoints/gen-000010.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let ck = Checkpoint::load(&run.join("checkpoints/gen-000005.ckpt")).unwrap();
    assert_eq!(ck.generation, 5);
    assert_eq!(ck.population.len(), 4);
    assert_eq!(ck.seed, 5);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let a = evolve(tmp.path(), &cfg, "a", "1");
    let b = evolve(tmp.path(), &cfg, "b", "3");
    for f in ["generations.csv", "lineage.csv", "champion.ckpt"] {
        assert_eq!(
            fs::read(a.join("run-5").join(f)).unwrap(),
            fs::read(b.join("run-5").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_override_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = tmp.path().join("o");
    let o = voxevo(&["evolve", "--config", p(&cfg), "--seed", "8", "--out", p(&out)], "1");
    assert!(o.status.success());
    assert!(out.join("run-8/generations.csv").exists());
    assert!(!out.join("run-5").exists());
}

#[test]
fn invalid_config_exits_nonzero_without_output() {
    let tmp = TempDir::new().unwrap();
    let missing = write_config(tmp.path(), "missing.toml", &TINY.replace("seed = 5\n", ""));
    let out = tmp.path().join("never");
    let o = voxevo(&["evolve", "--config", p(&missing), "--out", p(&out)], "1");
    assert!(!o.status.success());
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let unknown = write_config(tmp.path(), "unknown.toml", &TINY.replace("mu = 4", "mu = 4\nnu = 1"));
    let o = voxevo(&["evolve", "--config", p(&unknown), "--out", p(&out)], "1");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 9"), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn refuses_non_empty_output_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = tmp.path().join("busy");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = voxevo(&["evolve", "--config", p(&cfg), "--out", p(&out)], "1");
    assert!(!o.status.success());
    assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "x");
}

#[test]
fn transfer_writes_twenty_rows_per_distance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = evolve(tmp.path(), &cfg, "out", "1");
    let champion = out.join("run-5/champion.ckpt");
    let run_transfer = |name: &str| {
        let dir = tmp.path().join(name);
        let o = voxevo(
            &["transfer", "--config", p(&cfg), "--champion", p(&champion), "--out", p(&dir)],
            "2",
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    };
    let t1 = run_transfer("t1");
    let rows = csv_rows(&t1.join("transfer.csv"));
    assert_eq!(rows.len(), 60);
    for d in ["1", "2", "3"] {
        assert_eq!(rows.iter().filter(|r| r[2] == d).count(), 20);
    }
    for r in &rows {
        let zero: f64 = r[4].parse().unwrap();
        let one: f64 = r[5].parse().unwrap();
        assert!(one >= zero);
        assert_eq!(r[9], "true");
    }
    let t2 = run_transfer("t2");
    assert_eq!(fs::read(t1.join("transfer.csv")).unwrap(), fs::read(t2.join("transfer.csv")).unwrap());
}

#[test]
fn corrupt_checkpoint_is_an_integrity_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = evolve(tmp.path(), &cfg, "out", "1");
    let mut bytes = fs::read(out.join("run-5/champion.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    let bad = tmp.path().join("bad.ckpt");
    fs::write(&bad, bytes).unwrap();
    let o = voxevo(
        &["transfer", "--config", p(&cfg), "--champion", p(&bad), "--out", p(&tmp.path().join("t"))],
        "1",
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));
}

#[test]
fn replay_exports_every_frame() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = evolve(tmp.path(), &cfg, "out", "1");
    let champion = out.join("run-5/champion.ckpt");
    let rp = tmp.path().join("rp");
    let o = voxevo(&["replay", "--champion", p(&champion), "--out", p(&rp)], "1");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let meta: Vec<Vec<String>> = csv_rows(&rp.join("replay.csv"));
    let get = |k: &str| meta.iter().find(|r| r[0] == k).unwrap()[1].clone();
    let steps: usize = get("steps").parse().unwrap();
    assert_eq!(get("frames").parse::<usize>().unwrap(), steps);
    assert_eq!(get("fitness"), get("checkpoint_fitness"));
    assert_eq!(get("diverged"), "false");

    let ck = Checkpoint::load(&champion).unwrap();
    let world = SimWorld::build(&ck.champion.morphology, &PhysicsConfig::default()).unwrap();
    let n_masses = world.positions().len();
    let traj = csv_rows(&rp.join("trajectory.csv"));
    assert_eq!(traj.len(), steps * n_masses);
    for (m, (x, y)) in world.positions().iter().enumerate() {
        let row = &traj[m];
        assert_eq!(row[0], "0");
        assert_eq!(row[2].parse::<f64>().unwrap(), *x);
        assert_eq!(row[3].parse::<f64>().unwrap(), *y);
    }
}

#[test]
fn report_summarizes_a_battery() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", &TINY.replace("seed = 5\n", "seed = 5\nruns = 3\n"));
    let out = evolve(tmp.path(), &cfg, "out", "1");
    let o = voxevo(&["report", p(&out)], "1");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], "run-5");
    assert_eq!(rows[3][0], "median");
    for r in &rows {
        let gens: Vec<f64> = r[2..6].iter().map(|g| g.parse().unwrap()).collect();
        assert!(gens.windows(2).all(|w| w[0] <= w[1]), "{r:?}");
        for frac in &r[7..9] {
            if !frac.is_empty() {
                let f: f64 = frac.parse().unwrap();
                assert!((0.0..=1.0).contains(&f));
            }
        }
    }
    assert!(out.join("summary.txt").exists());
}

#[test]
fn report_rejects_incomplete_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out = evolve(tmp.path(), &cfg, "out", "1");
    fs::remove_file(out.join("run-5/lineage.csv")).unwrap();
    let o = voxevo(&["report", p(&out)], "1");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lineage.csv"));

    fs::write(out.join(".partial"), "").unwrap();
    let o = voxevo(&["report", p(&out)], "1");
    assert!(String::from_utf8_lossy(&o.stderr).contains("incomplete"));
}
