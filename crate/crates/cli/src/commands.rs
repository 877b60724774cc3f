//! The `clip`, `declip`, `eval` and `corpus` commands.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use declip_core::audio_io::{read_wav, write_wav, AudioBuffer};
use declip_core::corpus::{write_corpus, CorpusSpec};
use declip_core::{
    declip_signal, find_tau_for_sdr, hard_clip, sdr_clipped, ChunkPlan, ClipMask, ClippedSignal,
    DeclipReport, EpsMode, FrameOperator, MaskSidecar, SpadeParams, Variant,
};

use crate::{CmdResult, Failure};

const PCM_SCALE: f64 = 32768.0;

/// One line of the benchmark / evaluation table. Fields that do not apply
/// (for example the variant of an externally restored file) are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub signal_id: String,
    pub level_db: Option<f64>,
    pub variant: Option<String>,
    pub redundancy: Option<usize>,
    pub sdr_y: Option<f64>,
    pub sdr_x_hat: Option<f64>,
    pub delta_sdr: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

pub const BENCH_COLUMNS: [&str; 10] = [
    "signal_id",
    "level_db",
    "variant",
    "redundancy",
    "sdr_y",
    "sdr_x_hat",
    "delta_sdr",
    "iterations",
    "wall_time_s",
    "error",
];

/// Appends rows to a CSV file, writing the header first if the file is new
/// or empty.
pub fn append_rows(path: &Path, rows: &[BenchRow]) -> CmdResult<()> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::validation)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    let io = |e: csv::Error| {
        Failure::validation(anyhow!(e).context(format!("writing {}", path.display())))
    };
    if fresh {
        writer.write_record(BENCH_COLUMNS).map_err(io)?;
    }
    for row in rows {
        writer.serialize(row).map_err(io)?;
    }
    writer
        .flush()
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::validation)
}

/// Writes a complete CSV table (header plus rows), replacing any existing
/// file.
pub fn write_rows(path: &Path, rows: &[BenchRow]) -> CmdResult<()> {
    if path.exists() {
        std::fs::remove_file(path)
            .with_context(|| format!("replacing {}", path.display()))
            .map_err(Failure::validation)?;
    }
    append_rows(path, rows)
}

/// How the clip level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipLevel {
    /// Target clipped-index SDR in dB.
    Sdr(f64),
    Tau(f64),
}

/// A clipped observation whose clip level sits exactly on the PCM16 grid,
/// so it survives writing and re-reading unchanged.
#[derive(Debug, Clone)]
pub struct Degraded {
    pub tau: f64,
    pub signal: ClippedSignal,
    /// `None` when nothing was clipped.
    pub sdr_y: Option<f64>,
}

fn measured_sdr(x: &[f64], y: &ClippedSignal) -> declip_core::Result<Option<f64>> {
    if y.mask().clipped_count() == 0 {
        Ok(None)
    } else {
        sdr_clipped(x, y.samples(), y.mask()).map(Some)
    }
}

fn clip_at_code(x: &[f64], code: i64) -> declip_core::Result<Degraded> {
    let tau = code as f64 / PCM_SCALE;
    let signal = hard_clip(x, tau)?;
    let sdr_y = measured_sdr(x, &signal)?;
    Ok(Degraded { tau, signal, sdr_y })
}

/// Hard-clips `x` at the requested level, snapping the clip level to the
/// PCM16 grid. For an SDR target the neighbouring grid levels are tried and
/// the one closest to the target wins.
pub fn degrade(x: &[f64], level: ClipLevel) -> declip_core::Result<Degraded> {
    let max_code = i64::from(i16::MAX);
    match level {
        ClipLevel::Tau(tau) => {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(declip_core::Error::InvalidTau(tau));
            }
            clip_at_code(x, ((tau * PCM_SCALE).round() as i64).clamp(1, max_code))
        }
        ClipLevel::Sdr(target) => {
            let tau = find_tau_for_sdr(x, target)?;
            let centre = (tau * PCM_SCALE).round() as i64;
            let mut best: Option<(f64, Degraded)> = None;
            for code in (centre - 2..=centre + 2).filter(|c| (1..=max_code).contains(c)) {
                let cand = clip_at_code(x, code)?;
                let Some(sdr) = cand.sdr_y else { continue };
                let err = (sdr - target).abs();
                if best.as_ref().is_none_or(|(e, _)| err < *e) {
                    best = Some((err, cand));
                }
            }
            best.map(|(_, d)| d)
                .ok_or(declip_core::Error::UnattainableSdr { target, low: 0.0 })
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClipArgs {
    /// Clean input WAV.
    pub input: PathBuf,
    /// Clipped output WAV.
    pub output: PathBuf,
    /// Target SDR of the clipped samples, in dB.
    #[arg(
        long,
        conflicts_with = "tau",
        required_unless_present = "tau",
        allow_negative_numbers = true
    )]
    pub sdr: Option<f64>,
    /// Clip level in full-scale units.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Write the clipping mask as a JSON sidecar.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Channel to take from a multichannel file.
    #[arg(long)]
    pub channel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipOutcome {
    pub tau: f64,
    pub clipped_samples: usize,
    /// Re-measured on the written file.
    pub sdr_y: Option<f64>,
}

pub fn cmd_clip(args: &ClipArgs) -> CmdResult<ClipOutcome> {
    let input = read_wav(&args.input, args.channel)?;
    let level = match (args.sdr, args.tau) {
        (Some(db), None) => ClipLevel::Sdr(db),
        (None, Some(tau)) => ClipLevel::Tau(tau),
        _ => {
            return Err(Failure::validation(anyhow!(
                "exactly one of --sdr and --tau is required"
            )))
        }
    };
    let degraded = degrade(&input.samples, level)?;
    write_wav(
        &AudioBuffer::new(degraded.signal.samples().to_vec(), input.sample_rate),
        &args.output,
    )?;
    if let Some(path) = &args.mask {
        degraded.signal.mask().to_sidecar().write(path)?;
    }

    let written = read_wav(&args.output, None)?;
    let reread = ClippedSignal::new(written.samples, degraded.signal.mask().clone())?;
    Ok(ClipOutcome {
        tau: degraded.tau,
        clipped_samples: reread.mask().clipped_count(),
        sdr_y: measured_sdr(&input.samples, &reread)?,
    })
}

#[derive(Debug, Clone, Args)]
pub struct DeclipArgs {
    /// Clipped input WAV.
    pub input: PathBuf,
    /// Restored output WAV.
    pub output: PathBuf,
    #[arg(long, default_value = "a")]
    pub variant: Variant,
    #[arg(long, default_value_t = 2)]
    pub redundancy: usize,
    /// Chunk length in samples.
    #[arg(long, default_value_t = 1024)]
    pub frame: usize,
    /// Fraction of each chunk shared with the next one.
    #[arg(long, default_value_t = 0.75)]
    pub overlap: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value = "abs")]
    pub eps_mode: EpsMode,
    /// Sparsity increment.
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Iterations between sparsity increments.
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Hard iteration cap per chunk (defaults to the termination bound).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Clip level; estimated as the peak magnitude when neither this nor a
    /// mask is given.
    #[arg(long, conflicts_with = "mask")]
    pub tau: Option<f64>,
    /// Mask sidecar written by `clip`.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report path (default: output path with a `.json` extension).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Clean reference; adds SDR figures to the report.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<usize>,
}

impl DeclipArgs {
    pub fn params(&self) -> SpadeParams {
        SpadeParams {
            variant: self.variant,
            s: self.s,
            r: self.r,
            eps: self.eps,
            eps_mode: self.eps_mode,
            max_iters: self.max_iters,
        }
    }

    pub fn report_path(&self) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| self.output.with_extension("json"))
    }
}

/// Builds the observed signal from samples plus whichever clip-level source
/// is available.
pub fn observation(
    samples: Vec<f64>,
    tau: Option<f64>,
    mask: Option<&Path>,
) -> CmdResult<ClippedSignal> {
    let signal = match (tau, mask) {
        (_, Some(path)) => {
            let sidecar = MaskSidecar::read(path)?;
            let mask = ClipMask::from_sidecar(&sidecar, samples.len())?;
            ClippedSignal::new(samples, mask)?
        }
        (Some(tau), None) => ClippedSignal::from_observation(samples, tau)?,
        (None, None) => ClippedSignal::from_observation_estimated(samples)?,
    };
    Ok(signal)
}

/// Runs `f` on a pool with `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CmdResult<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Failure::validation(anyhow!("--jobs must be at least 1"))),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(Failure::validation)?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeclipOutcome {
    /// Restored samples before quantization.
    pub samples: Vec<f64>,
    pub report: DeclipReport,
    pub clamped: usize,
}

/// Restores `input` and writes the WAV and the JSON report. A report with
/// termination-bound overruns is still written, then surfaced as a solver
/// failure.
pub fn cmd_declip(args: &DeclipArgs) -> CmdResult<DeclipOutcome> {
    let input = read_wav(&args.input, args.channel)?;
    let y = observation(input.samples, args.tau, args.mask.as_deref())?;
    let plan = ChunkPlan::with_overlap(args.frame, args.overlap)?;
    let frame = FrameOperator::dft(args.frame, args.redundancy)?;
    let params = args.params();
    params.validate()?;

    let mut out = with_jobs(args.jobs, || declip_signal(&y, &plan, &frame, &params))??;
    if let Some(path) = &args.reference {
        let reference = read_wav(path, args.channel)?;
        out.report
            .attach_reference(&reference.samples, &y, &out.samples)?;
    }
    let clamped = write_wav(
        &AudioBuffer::new(out.samples.clone(), input.sample_rate),
        &args.output,
    )?;
    let report_path = args.report_path();
    let json = serde_json::to_string_pretty(&out.report).map_err(Failure::validation)?;
    std::fs::write(&report_path, json + "\n")
        .with_context(|| format!("writing {}", report_path.display()))
        .map_err(Failure::validation)?;

    if out.report.totals.anomalies > 0 {
        return Err(Failure::solver(anyhow!(
            "{} chunk(s) exceeded the termination bound of {} iterations",
            out.report.totals.anomalies,
            out.report.totals.termination_bound
        )));
    }
    Ok(DeclipOutcome {
        samples: out.samples,
        report: out.report,
        clamped,
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Clean reference WAV.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub clipped: PathBuf,
    #[arg(long)]
    pub restored: PathBuf,
    /// Mask sidecar; derived from the clipped file's peak when omitted.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// CSV file to append to.
    #[arg(long)]
    pub csv: PathBuf,
    /// Signal id for the row (default: reference file stem).
    #[arg(long)]
    pub id: Option<String>,
    /// Nominal clipping level to record in the row.
    #[arg(long, allow_negative_numbers = true)]
    pub level: Option<f64>,
    #[arg(long)]
    pub channel: Option<usize>,
}

pub fn cmd_eval(args: &EvalArgs) -> CmdResult<BenchRow> {
    let reference = read_wav(&args.reference, args.channel)?.samples;
    let clipped = read_wav(&args.clipped, args.channel)?.samples;
    let restored = read_wav(&args.restored, args.channel)?.samples;
    for (name, len) in [("clipped", clipped.len()), ("restored", restored.len())] {
        if len != reference.len() {
            return Err(Failure::validation(anyhow!(
                "{name} file has {len} samples, reference has {}",
                reference.len()
            )));
        }
    }
    let y = observation(clipped, None, args.mask.as_deref())?;
    let sdr_y = sdr_clipped(&reference, y.samples(), y.mask())?;
    let sdr_x_hat = sdr_clipped(&reference, &restored, y.mask())?;
    let row = BenchRow {
        signal_id: args
            .id
            .clone()
            .unwrap_or_else(|| file_stem(&args.reference)),
        level_db: args.level,
        variant: None,
        redundancy: None,
        sdr_y: Some(sdr_y),
        sdr_x_hat: Some(sdr_x_hat),
        delta_sdr: Some(sdr_x_hat - sdr_y),
        iterations: None,
        wall_time_s: None,
        error: None,
    };
    append_rows(&args.csv, std::slice::from_ref(&row))?;
    Ok(row)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Output directory.
    pub dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub files: usize,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    /// Length of each file in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 2015)]
    pub seed: u64,
    /// Noise floor relative to the tones, in dB.
    #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
    pub noise_floor_db: f64,
    /// Tones only.
    #[arg(long)]
    pub no_noise: bool,
}

pub fn cmd_corpus(args: &CorpusArgs) -> CmdResult<Vec<PathBuf>> {
    if !(args.duration.is_finite() && args.duration > 0.0) || args.sample_rate == 0 {
        return Err(Failure::validation(anyhow!(
            "duration and sample rate must be positive"
        )));
    }
    std::fs::create_dir_all(&args.dir)
        .with_context(|| format!("creating {}", args.dir.display()))
        .map_err(Failure::validation)?;
    let spec = CorpusSpec {
        files: args.files,
        sample_rate: args.sample_rate,
        duration_s: args.duration,
        noise_floor_db: (!args.no_noise).then_some(args.noise_floor_db),
        seed: args.seed,
        ..CorpusSpec::default()
    };
    Ok(write_corpus(&spec, &args.dir)?)
}
