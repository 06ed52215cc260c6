//! CSV writers for every run product.
//!
//! Floats are written with `{:e}` (shortest round-trip form), so identical
//! results give byte-identical files.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::classical::{ClassicalEnsembleResult, ClassicalRecord};
use crate::diode::ScatteringResult;
use crate::grid::RingGrid;
use crate::mcwf::JumpSample;
use crate::observables::{EnsembleSummary, LevelDensities};
use crate::potentials::LaserProfiles;

/// Writes a header line and one comma-separated line per row.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.as_ref().join(","))?;
    }
    w.flush()
}

fn e(v: f64) -> String {
    format!("{v:e}")
}

/// t, P_trap
pub fn write_classical_curve(path: &Path, r: &ClassicalEnsembleResult) -> io::Result<()> {
    write_csv(
        path,
        &["t", "P_trap"],
        r.times
            .iter()
            .zip(&r.trapping_probability)
            .map(|(&t, &p)| vec![e(t), e(p)]),
    )
}

/// x_initial, v_initial, crossings, trap_time (empty when never trapped)
pub fn write_classical_records(path: &Path, records: &[ClassicalRecord]) -> io::Result<()> {
    write_csv(
        path,
        &["x_initial", "v_initial", "crossings", "trap_time"],
        records.iter().map(|r| {
            vec![
                e(r.x_initial),
                e(r.v_initial),
                r.crossings.to_string(),
                r.trap_time.map(e).unwrap_or_default(),
            ]
        }),
    )
}

/// t, P_Tx_mean, P_Tx_err, P_Tv_mean, P_Tv_err
pub fn write_time_series(path: &Path, s: &EnsembleSummary) -> io::Result<()> {
    write_csv(
        path,
        &["t", "P_Tx_mean", "P_Tx_err", "P_Tv_mean", "P_Tv_err"],
        (0..s.times.len()).map(|i| {
            vec![
                e(s.times[i]),
                e(s.p_tx_mean[i]),
                e(s.p_tx_err[i]),
                e(s.p_tv_mean[i]),
                e(s.p_tv_err[i]),
            ]
        }),
    )
}

/// t, P_Tx_sem, P_Tv_sem, weight (standard errors and the level 1+2 weight)
pub fn write_diagnostics(path: &Path, s: &EnsembleSummary) -> io::Result<()> {
    write_csv(
        path,
        &["t", "P_Tx_sem", "P_Tv_sem", "weight"],
        (0..s.times.len()).map(|i| {
            vec![
                e(s.times[i]),
                e(s.p_tx_sem[i]),
                e(s.p_tv_sem[i]),
                e(s.observed_weight[i]),
            ]
        }),
    )
}

/// One row per (t, bin): t, <coord>, p
pub fn write_density_map(
    path: &Path,
    coord: &str,
    times: &[f64],
    centers: &[f64],
    map: &[Vec<f64>],
) -> io::Result<()> {
    write_csv(
        path,
        &["t", coord, "p"],
        times.iter().zip(map).flat_map(|(&t, row)| {
            centers
                .iter()
                .zip(row)
                .map(move |(&c, &p)| vec![e(t), e(c), e(p)])
        }),
    )
}

/// x, p1, p2[, p3]
pub fn write_position_snapshot(path: &Path, grid: &RingGrid, d: &LevelDensities) -> io::Result<()> {
    let names = ["x", "p1", "p2", "p3"];
    snapshot(path, &names[..=d.x.len()], grid.positions(), &d.x)
}

/// v, q1, q2[, q3] with v in ascending order
pub fn write_velocity_snapshot(path: &Path, velocities: &[f64], d: &LevelDensities) -> io::Result<()> {
    let names = ["v", "q1", "q2", "q3"];
    snapshot(path, &names[..=d.v.len()], velocities, &d.v)
}

fn snapshot(path: &Path, header: &[&str], coords: &[f64], levels: &[Vec<f64>]) -> io::Result<()> {
    write_csv(
        path,
        header,
        coords.iter().enumerate().map(|(j, &c)| {
            std::iter::once(e(c))
                .chain(levels.iter().map(|l| e(l[j])))
                .collect::<Vec<_>>()
        }),
    )
}

/// t_jump, u
pub fn write_jump_log(path: &Path, jumps: &[JumpSample]) -> io::Result<()> {
    write_csv(
        path,
        &["t_jump", "u"],
        jumps.iter().map(|j| vec![e(j.t_jump), e(j.u)]),
    )
}

/// x, W1, W2, W_T, W_Q, Omega_P (all in 1/s)
pub fn write_potentials(path: &Path, grid: &RingGrid, l: &LaserProfiles) -> io::Result<()> {
    write_csv(
        path,
        &["x", "W1", "W2", "W_T", "W_Q", "Omega_P"],
        (0..grid.len()).map(|j| {
            vec![
                e(grid.positions()[j]),
                e(l.w1[j]),
                e(l.w2[j]),
                e(l.w_t[j]),
                e(l.w_q[j]),
                e(l.omega_p[j]),
            ]
        }),
    )
}

/// v, direction, transmission, reflection, loss, transmission_excited, reflection_ground
pub fn write_scattering(path: &Path, results: &[ScatteringResult]) -> io::Result<()> {
    write_csv(
        path,
        &[
            "v",
            "direction",
            "transmission",
            "reflection",
            "loss",
            "transmission_excited",
            "reflection_ground",
        ],
        results.iter().map(|r| {
            vec![
                e(r.v),
                r.direction.to_string(),
                e(r.transmission),
                e(r.reflection),
                e(r.loss),
                e(r.transmission_excited),
                e(r.reflection_ground),
            ]
        }),
    )
}
