//! Full-factorial benchmark over a corpus of WAV files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Args;
use rayon::prelude::*;

use declip_core::audio_io::{quantize_pcm16, read_wav};
use declip_core::{declip_signal, sdr_clipped, ChunkPlan, FrameOperator, SpadeParams, Variant};

use crate::commands::{degrade, file_stem, with_jobs, write_rows, BenchRow, ClipLevel, Degraded};
use crate::{CmdResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Directory of clean WAV files.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Target SDR levels of the clipped samples, in dB.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,3,5,7,10",
        allow_negative_numbers = true
    )]
    pub levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "a,s")]
    pub variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub redundancies: Vec<usize>,
    /// Output CSV (overwritten).
    #[arg(long)]
    pub csv: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Settings shared by every cell.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub levels: Vec<f64>,
    pub variants: Vec<Variant>,
    pub redundancies: Vec<usize>,
    pub chunk_len: usize,
    pub overlap: f64,
    pub params: SpadeParams,
}

impl BenchConfig {
    pub fn from_args(args: &BenchArgs) -> Self {
        BenchConfig {
            levels: args.levels.clone(),
            variants: args.variants.clone(),
            redundancies: args.redundancies.clone(),
            chunk_len: 1024,
            overlap: 0.75,
            params: SpadeParams::default(),
        }
    }
}

/// Per-cell failure severity, mirrored in the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Severity {
    Ok,
    Validation,
    Solver,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    /// Failed cells.
    pub failures: usize,
    /// Exit code: 0, or the most severe per-cell failure.
    pub code: i32,
}

/// Sorted `.wav` files directly inside `dir`.
pub fn corpus_files(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading corpus directory {}", dir.display()))
        .map_err(Failure::validation)?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(Failure::validation)?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

struct Cell<'a> {
    id: &'a str,
    level: f64,
    variant: Variant,
    redundancy: usize,
    clean: &'a [f64],
    degraded: &'a Result<Degraded, String>,
}

fn empty_row(cell: &Cell<'_>) -> BenchRow {
    BenchRow {
        signal_id: cell.id.to_string(),
        level_db: Some(cell.level),
        variant: Some(cell.variant.short_name().to_string()),
        redundancy: Some(cell.redundancy),
        sdr_y: None,
        sdr_x_hat: None,
        delta_sdr: None,
        iterations: None,
        wall_time_s: None,
        error: None,
    }
}

fn run_cell(cell: &Cell<'_>, config: &BenchConfig) -> (BenchRow, Severity) {
    let mut row = empty_row(cell);
    let degraded = match cell.degraded {
        Ok(d) => d,
        Err(e) => {
            row.error = Some(e.clone());
            return (row, Severity::Validation);
        }
    };
    row.sdr_y = degraded.sdr_y;
    let y = &degraded.signal;
    if y.mask().clipped_count() == 0 {
        row.error = Some("no samples clipped".into());
        return (row, Severity::Validation);
    }

    let setup = ChunkPlan::with_overlap(config.chunk_len, config.overlap)
        .and_then(|plan| Ok((plan, FrameOperator::dft(config.chunk_len, cell.redundancy)?)));
    let (plan, frame) = match setup {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, Severity::Validation);
        }
    };
    let params = SpadeParams {
        variant: cell.variant,
        ..config.params
    };
    let started = Instant::now();
    let out = match declip_signal(y, &plan, &frame, &params) {
        Ok(out) => out,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, Severity::Solver);
        }
    };
    row.wall_time_s = Some(started.elapsed().as_secs_f64());
    row.iterations = Some(out.report.totals.iterations);

    let restored = quantize_pcm16(&out.samples);
    match sdr_clipped(cell.clean, &restored, y.mask()) {
        Ok(sdr) => {
            row.sdr_x_hat = Some(sdr);
            row.delta_sdr = row.sdr_y.map(|s| sdr - s);
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, Severity::Validation);
        }
    }
    if out.report.totals.anomalies > 0 {
        row.error = Some(format!(
            "{} chunk(s) exceeded the termination bound of {} iterations",
            out.report.totals.anomalies, out.report.totals.termination_bound
        ));
        return (row, Severity::Solver);
    }
    (row, Severity::Ok)
}

/// Runs the grid over `files` in the current rayon pool. Rows are ordered
/// by file, level, variant and redundancy regardless of scheduling.
pub fn run_grid(files: &[PathBuf], config: &BenchConfig) -> BenchOutcome {
    let loaded: Vec<(String, Result<Vec<f64>, String>)> = files
        .par_iter()
        .map(|f| {
            (
                file_stem(f),
                read_wav(f, None)
                    .map(|b| b.samples)
                    .map_err(|e| e.to_string()),
            )
        })
        .collect();

    let degraded: Vec<Vec<Result<Degraded, String>>> = loaded
        .par_iter()
        .map(|(_, clean)| {
            config
                .levels
                .par_iter()
                .map(|&level| match clean {
                    Ok(x) => degrade(x, ClipLevel::Sdr(level)).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    for ((id, clean), per_level) in loaded.iter().zip(&degraded) {
        let clean: &[f64] = clean.as_deref().unwrap_or(&[]);
        for (&level, d) in config.levels.iter().zip(per_level) {
            for &variant in &config.variants {
                for &redundancy in &config.redundancies {
                    cells.push(Cell {
                        id,
                        level,
                        variant,
                        redundancy,
                        clean,
                        degraded: d,
                    });
                }
            }
        }
    }

    let results: Vec<(BenchRow, Severity)> =
        cells.par_iter().map(|c| run_cell(c, config)).collect();
    let worst = results.iter().map(|r| r.1).max().unwrap_or(Severity::Ok);
    let failures = results.iter().filter(|r| r.1 != Severity::Ok).count();
    BenchOutcome {
        rows: results.into_iter().map(|r| r.0).collect(),
        failures,
        code: match worst {
            Severity::Ok => 0,
            Severity::Validation => Failure::VALIDATION,
            Severity::Solver => Failure::SOLVER,
        },
    }
}

pub fn cmd_bench(args: &BenchArgs) -> CmdResult<BenchOutcome> {
    if args.levels.is_empty() || args.variants.is_empty() || args.redundancies.is_empty() {
        return Err(Failure::validation(anyhow!(
            "levels, variants and redundancies must be non-empty"
        )));
    }
    let files = corpus_files(&args.corpus)?;
    if files.is_empty() {
        eprintln!("warning: no WAV files in {}", args.corpus.display());
    }
    let config = BenchConfig::from_args(args);
    let outcome = with_jobs(args.jobs, || run_grid(&files, &config))?;
    write_rows(&args.csv, &outcome.rows)?;
    Ok(outcome)
}
