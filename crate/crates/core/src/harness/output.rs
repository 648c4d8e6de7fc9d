//! Result files: one CSV row per curve point and a JSON manifest that also
//! records the configuration digest, seeds and consensus totals.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::AcStats;

use super::config::{Experiment, OutputFormat, SimulationMode};
use super::run::{CurvePoint, RunReport, SkippedPoint};
use crate::esprit::DespritMode;

pub fn write_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub name: &'a str,
    pub config_sha256: String,
    pub base_seed: u64,
    pub trials: usize,
    /// How per-trial random streams are derived from the base seed.
    pub seed_scheme: &'static str,
    pub mode: SimulationMode,
    pub esprit_mode: DespritMode,
    /// Consensus work summed over every Monte Carlo trial that was used.
    pub ac_totals: AcStats,
    pub points: &'a [CurvePoint],
    pub skipped: &'a [SkippedPoint],
}

pub const SEED_SCHEME: &str =
    "ChaCha8 keyed by base_seed; trial i uses stream 16*i for snapshots and 16*i+1 for power-method start vectors";

pub fn manifest<'a>(exp: &'a Experiment, report: &'a RunReport) -> Result<Manifest<'a>> {
    let mut totals = AcStats::default();
    for p in &report.points {
        let n = p.trials_used as u64;
        totals.ac_instances += p.ac_instances * n;
        totals.ac_iterations_total += p.ac_iterations_total * n;
    }
    totals.messages = totals.ac_iterations_total * exp.scene.weights.messages_per_iteration();
    Ok(Manifest {
        name: &exp.config.name,
        config_sha256: exp.config.digest()?,
        base_seed: exp.config.base_seed,
        trials: exp.config.trials,
        seed_scheme: SEED_SCHEME,
        mode: exp.config.output.mode,
        esprit_mode: exp.config.output.esprit_mode,
        ac_totals: totals,
        points: &report.points,
        skipped: &report.skipped,
    })
}

/// Writes the formats requested by the configuration next to
/// `output.path` and returns the files written.
pub fn write_outputs(exp: &Experiment, report: &RunReport) -> Result<Vec<PathBuf>> {
    let stem = &exp.config.output.path;
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    for format in &exp.config.output.formats {
        match format {
            OutputFormat::Csv => {
                let path = stem.with_extension("csv");
                write_csv(&report.points, BufWriter::new(File::create(&path)?))?;
                written.push(path);
            }
            OutputFormat::Json => {
                let path = stem.with_extension("json");
                let mut f = BufWriter::new(File::create(&path)?);
                serde_json::to_writer_pretty(&mut f, &manifest(exp, report)?)
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
                writeln!(f)?;
                f.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
