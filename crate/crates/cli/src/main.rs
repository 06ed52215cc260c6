use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use diode_ring::classical::run_classical_ensemble;
use diode_ring::diode::{interval_from_results, scatter, Direction, ScatteringResult};
use diode_ring::manifest::RunManifest;
use diode_ring::observables::{mode_velocities, run_quantum_ensemble_with};
use diode_ring::output;
use diode_ring::params::{parse_config_with_overrides, parse_override, Mode, ParameterSet};
use diode_ring::potentials::LaserProfiles;
use diode_ring::RingGrid;

#[derive(Parser)]
#[command(name = "diode-ring", version, about = "Atom cooling on a ring with an atom diode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classical or quantum ensemble run, depending on `mode`.
    Run(Common),
    /// Scattering sweep over incident speeds and the diode working range.
    Characterize {
        #[command(flatten)]
        common: Common,
        /// Smallest speed of the sweep (m/s).
        #[arg(long, allow_hyphen_values = true)]
        v_min: f64,
        /// Largest speed of the sweep (m/s).
        #[arg(long, allow_hyphen_values = true)]
        v_max: f64,
        #[arg(long, allow_hyphen_values = true)]
        v_step: f64,
    },
    /// Laser profiles on the grid.
    DumpPotentials(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines). Without it, `--set mode=...` is required.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one parameter; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all CPUs).
    #[arg(long, env = "DIODE_RING_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn params(&self) -> Result<ParameterSet> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
            None => String::new(),
        };
        let mut overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("rng_seed".into(), seed.to_string()));
        }
        Ok(parse_config_with_overrides(&text, &overrides)?)
    }

    fn setup(&self) -> Result<ParameterSet> {
        if let Some(n) = self.workers {
            if n == 0 {
                bail!("--workers must be at least 1");
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("starting worker pool")?;
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        self.params()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Characterize {
            common,
            v_min,
            v_max,
            v_step,
        } => cmd_characterize(common, *v_min, *v_max, *v_step),
        Command::DumpPotentials(c) => cmd_dump_potentials(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn finish(mut manifest: RunManifest, out: &Path, files: &[PathBuf], started: Instant) -> Result<()> {
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.list_outputs(out, files)?;
    manifest.verify(out).map_err(anyhow::Error::msg)?;
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_run(c: &Common) -> Result<()> {
    let started = Instant::now();
    let p = c.setup()?;
    let mut manifest = RunManifest::new("run", &p);
    let mut files = Vec::new();
    let mut write = |name: &str, f: &dyn Fn(&Path) -> std::io::Result<()>| -> Result<()> {
        let rel = PathBuf::from(name);
        f(&c.out.join(&rel)).with_context(|| format!("writing {name}"))?;
        files.push(rel);
        Ok(())
    };

    if p.mode == Mode::Classical {
        let r = run_classical_ensemble(&p);
        write("classical_trapping.csv", &|path| output::write_classical_curve(path, &r))?;
        write("classical_particles.csv", &|path| output::write_classical_records(path, &r.records))?;
        let trapped = r.records.iter().filter(|q| q.trap_time.is_some()).count();
        manifest.results = serde_json::json!({
            "trapped": trapped,
            "final_trapping_probability": r.trapping_probability.last(),
        });
        return finish(manifest, &c.out, &files, started);
    }

    let total = p.n_trajectories;
    let r = run_quantum_ensemble_with(&p, |i, s| {
        eprintln!(
            "trajectory {}/{}: {} jumps, final P_Tx = {:.4}",
            i + 1,
            total,
            s.jumps.len(),
            s.p_tx.last().copied().unwrap_or(f64::NAN)
        );
    })?;
    let acc = &r.accumulator;
    let summary = acc.summary()?;
    let times = &r.setup.times;
    write("time_series.csv", &|path| output::write_time_series(path, &summary))?;
    write("diagnostics.csv", &|path| output::write_diagnostics(path, &summary))?;
    let x_map = acc.x_map();
    let v_map = acc.v_map();
    write("density_map_x.csv", &|path| {
        output::write_density_map(path, "x", times, &r.setup.x_bins.centers(), &x_map)
    })?;
    write("density_map_v.csv", &|path| {
        output::write_density_map(path, "v", times, &r.setup.v_bins.centers(), &v_map)
    })?;
    let velocities = mode_velocities(&r.grid, p.hbar_over_m());
    for (tag, d) in [("initial", acc.initial_densities()), ("final", acc.final_densities())] {
        let d = d.context("ensemble has no trajectories")?;
        write(&format!("density_{tag}_x.csv"), &|path| output::write_position_snapshot(path, &r.grid, &d))?;
        write(&format!("density_{tag}_v.csv"), &|path| output::write_velocity_snapshot(path, &velocities, &d))?;
    }
    for (i, log) in r.jump_logs.iter().enumerate() {
        write(&format!("jumps/trajectory_{i:04}.csv"), &|path| output::write_jump_log(path, log))?;
    }
    let last = summary.times.len() - 1;
    manifest.results = serde_json::json!({
        "final": {
            "t": summary.times[last],
            "P_Tx": summary.p_tx_mean[last],
            "P_Tx_err": summary.p_tx_err[last],
            "P_Tv": summary.p_tv_mean[last],
            "P_Tv_err": summary.p_tv_err[last],
        },
        "jumps": r.jump_logs.iter().map(Vec::len).sum::<usize>(),
    });
    finish(manifest, &c.out, &files, started)
}

/// Speeds v_min, v_min + step, … ≤ v_max, as distinct positive magnitudes.
fn sweep_speeds(v_min: f64, v_max: f64, v_step: f64) -> Result<Vec<f64>> {
    if !(v_step > 0.0) {
        bail!("--v-step must be positive (got {v_step})");
    }
    if !(v_max >= v_min) {
        bail!("--v-max must not be below --v-min");
    }
    let count = ((v_max - v_min) / v_step + 1e-9).floor() as usize + 1;
    let mut speeds: Vec<f64> = (0..count)
        // Snapped to 1e-12 m/s so that 0.2 + 0.01 prints as 0.21.
        .map(|i| ((v_min + i as f64 * v_step).abs() * 1e12).round() / 1e12)
        .filter(|&v| v > 1e-12)
        .collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * v_step);
    if speeds.is_empty() {
        bail!("the sweep contains no nonzero speed");
    }
    Ok(speeds)
}

fn cmd_characterize(c: &Common, v_min: f64, v_max: f64, v_step: f64) -> Result<()> {
    let started = Instant::now();
    let speeds = sweep_speeds(v_min, v_max, v_step)?;
    let p = c.setup()?;
    let runs: Vec<(f64, Direction)> = speeds
        .iter()
        .flat_map(|&v| [(v, Direction::LeftToRight), (v, Direction::RightToLeft)])
        .collect();
    let results: Vec<ScatteringResult> = runs
        .par_iter()
        .map(|&(v, d)| scatter(&p, v, d))
        .collect::<Result<_, _>>()?;

    let mut manifest = RunManifest::new("characterize", &p);
    let rel = PathBuf::from("scattering.csv");
    output::write_scattering(&c.out.join(&rel), &results)?;
    manifest.results = match interval_from_results(&results) {
        Ok((lo, hi)) => serde_json::json!({ "working_range": [lo, hi] }),
        Err(e) => serde_json::json!({ "working_range": null, "reason": e.to_string() }),
    };
    println!("{}", manifest.results);
    finish(manifest, &c.out, &[rel], started)
}

fn cmd_dump_potentials(c: &Common) -> Result<()> {
    let started = Instant::now();
    let p = c.setup()?;
    let grid = RingGrid::from_params(&p)?;
    let profiles = LaserProfiles::evaluate(&p, &grid);
    let rel = PathBuf::from("potentials.csv");
    output::write_potentials(&c.out.join(&rel), &grid, &profiles)?;
    finish(RunManifest::new("dump-potentials", &p), &c.out, &[rel], started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        assert_eq!(sweep_speeds(0.01, 0.10, 0.01).unwrap().len(), 10);
        // Symmetric sweep: each speed once.
        assert_eq!(sweep_speeds(-0.15, 0.15, 0.01).unwrap().len(), 15);
        assert!(sweep_speeds(0.01, 0.1, 0.0).is_err());
        assert!(sweep_speeds(0.01, 0.1, -0.01).is_err());
        assert!(sweep_speeds(0.0, 0.0, 0.01).is_err());
        assert_eq!(sweep_speeds(0.2, 0.21, 0.01).unwrap(), vec![0.2, 0.21]);
    }
}
