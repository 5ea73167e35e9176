//! Executes one experiment and writes its output directory:
//!
//! - `metrics.csv`: `step,cross_entropy,wasserstein,acceptance_ratio`
//! - `samples.jsonl`: one `{"step":…,"r":[…]}` line per accepted sample
//! - `histogram.txt`: final proposal distribution in the grid-target format
//! - `config.echo.json`: the parsed config
//! - `snapshots.jsonl`: parameter snapshots, when requested

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conditioner::ParamBlock;
use crate::engine::Trainer;
use crate::error::Result;
use crate::metrics::MetricRow;
use crate::multistage::MultistageSampler;
use crate::targets::{format_grid, TargetDensity, MAX_ENUMERABLE_CELLS};

use super::config::ExperimentConfig;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "SLMC_OUTPUT_ROOT";

/// Cells of the Monte-Carlo histogram written for large grids.
const MAX_HISTOGRAM_CELLS: usize = 1 << 18;

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricRow>,
    pub skipped_updates: usize,
    pub accepted: u64,
    pub proposed: u64,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    step: usize,
    params: Vec<&'a ParamBlock>,
}

/// `$SLMC_OUTPUT_ROOT`, or `runs` in the working directory.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn write_sample(out: &mut impl Write, step: usize, r: &[u128]) -> std::io::Result<()> {
    write!(out, "{{\"step\":{step},\"r\":[")?;
    for (i, x) in r.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        write!(out, "{x}")?;
    }
    out.write_all(b"]}\n")
}

/// Runs `cfg` and writes its outputs under `out_dir` (created if missing).
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.echo.json"), cfg.to_json() + "\n")?;
    let target = cfg.build_target()?;
    let sampler = cfg.build_sampler(target.grid_qubits())?;
    let train = cfg.train_config();
    let steps = train.steps;
    let mut trainer = Trainer::new(sampler, &target, train)?;

    let mut metrics = BufWriter::new(File::create(out_dir.join("metrics.csv"))?);
    writeln!(metrics, "{}", MetricRow::CSV_HEADER)?;
    let mut samples = if cfg.output.write_samples {
        Some(BufWriter::new(File::create(out_dir.join("samples.jsonl"))?))
    } else {
        None
    };
    let mut snapshots = if cfg.output.snapshot_every > 0 {
        Some(BufWriter::new(File::create(out_dir.join("snapshots.jsonl"))?))
    } else {
        None
    };

    let mut summary = RunSummary {
        out_dir: out_dir.to_path_buf(),
        rows: Vec::new(),
        skipped_updates: 0,
        accepted: 0,
        proposed: 0,
    };
    for _ in 0..steps {
        let (outcome, row) = trainer.step()?;
        let step = trainer.step_count();
        summary.skipped_updates += usize::from(outcome.skipped);
        summary.accepted += outcome.accepted;
        summary.proposed += outcome.proposed;
        if let Some(out) = samples.as_mut() {
            for r in &outcome.accepted_samples {
                write_sample(out, step, r)?;
            }
        }
        if let Some(row) = row {
            writeln!(metrics, "{row}")?;
            log::info!("{}: {row}", cfg.name);
            summary.rows.push(row);
        }
        if let Some(out) = snapshots.as_mut() {
            if step % cfg.output.snapshot_every == 0 {
                let snap = Snapshot {
                    step,
                    params: trainer.sampler.stages().iter().map(|s| s.conditioner.params()).collect(),
                };
                serde_json::to_writer(&mut *out, &snap).map_err(std::io::Error::from)?;
                out.write_all(b"\n")?;
            }
        }
    }
    metrics.flush()?;
    if let Some(mut out) = samples {
        out.flush()?;
    }
    if let Some(mut out) = snapshots {
        out.flush()?;
    }
    if summary.skipped_updates > 0 {
        log::warn!("{}: {} updates skipped", cfg.name, summary.skipped_updates);
    }

    // A separate stream keeps the histogram from perturbing the training draws.
    let mut hist_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    hist_rng.set_stream(2);
    let (shape, values) = proposal_histogram(&trainer.sampler, &target, cfg.output.histogram_draws, &mut hist_rng)?;
    std::fs::write(out_dir.join("histogram.txt"), format_grid(&shape, &values))?;
    Ok(summary)
}

/// Exact proposal table when the grid is enumerable, otherwise a normalized
/// histogram of `draws` samples on a grid coarsened to at most
/// `MAX_HISTOGRAM_CELLS` cells.
pub fn proposal_histogram(
    sampler: &MultistageSampler,
    target: &TargetDensity,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let qubits = sampler.grid_qubits();
    if target.is_enumerable() {
        let shape = qubits.iter().map(|&n| 1usize << n).collect();
        return Ok((shape, sampler.full_table(MAX_ENUMERABLE_CELLS)?));
    }
    let per_axis = (MAX_HISTOGRAM_CELLS.trailing_zeros() as usize / qubits.len()).max(1) as u32;
    let bits: Vec<u32> = qubits.iter().map(|&n| n.min(per_axis)).collect();
    let shape: Vec<usize> = bits.iter().map(|&b| 1usize << b).collect();
    let mut counts = vec![0.0; shape.iter().product()];
    let draws = draws.max(1);
    for r in sampler.joint_sample_batch(draws, rng)? {
        let idx = r
            .iter()
            .zip(qubits.iter().zip(&bits))
            .fold(0usize, |acc, (&x, (&n, &b))| (acc << b) | (x >> (n - b)) as usize);
        counts[idx] += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= draws as f64);
    Ok((shape, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::parse_grid;

    #[test]
    fn uniform_run_writes_outputs() {
        let src = r#"
name = "uniform"
[target]
kind = "uniform"
dims = 1
[sampler]
n_qubits = 6
m_qubits = 2
[train]
steps = 50
alpha = 0.001
metric_every = 10
"#;
        let cfg = ExperimentConfig::parse(src, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(s.rows.len(), 5);
        assert!(s.rows.last().unwrap().acceptance_ratio > 0.99);
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 6);
        let hist = parse_grid(&std::fs::read_to_string(dir.path().join("histogram.txt")).unwrap()).unwrap();
        assert_eq!(hist.shape, vec![64]);
        let samples = std::fs::read_to_string(dir.path().join("samples.jsonl")).unwrap();
        let first: serde_json::Value = serde_json::from_str(samples.lines().next().unwrap()).unwrap();
        assert_eq!(first["step"], 1);
    }
}
