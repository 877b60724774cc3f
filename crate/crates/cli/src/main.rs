use std::process::ExitCode;

use clap::{Parser, Subcommand};

use declip_cli::bench::{cmd_bench, BenchArgs};
use declip_cli::commands::{
    cmd_clip, cmd_corpus, cmd_declip, cmd_eval, ClipArgs, CorpusArgs, DeclipArgs, EvalArgs,
};
use declip_cli::{CmdResult, Failure};

/// Restore hard-clipped audio with sparse (S-SPADE) or cosparse (A-SPADE)
/// models.
#[derive(Parser)]
#[command(name = "declip", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hard-clip a clean file at a target SDR or clip level.
    Clip(ClipArgs),
    /// Restore a clipped file.
    Declip(DeclipArgs),
    /// Score a restoration against the clean reference and append a CSV row.
    Eval(EvalArgs),
    /// Clip, restore and score every corpus file over a parameter grid.
    Bench(BenchArgs),
    /// Generate the synthetic test corpus.
    Corpus(CorpusArgs),
}

fn fmt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4} dB"))
}

fn run(cli: Cli) -> CmdResult<i32> {
    match cli.command {
        Command::Clip(args) => {
            let out = cmd_clip(&args)?;
            println!(
                "tau {:.6}  clipped {}  SDR_y {}",
                out.tau,
                out.clipped_samples,
                fmt_db(out.sdr_y)
            );
        }
        Command::Declip(args) => {
            let out = cmd_declip(&args)?;
            let t = &out.report.totals;
            println!(
                "{} chunks ({} solved), {} iterations, max {} of bound {}, {:.3} s",
                t.chunks,
                t.solved_chunks,
                t.iterations,
                t.max_chunk_iterations,
                t.termination_bound,
                out.report.wall_time_s
            );
            if let Some(sdr) = &out.report.sdr {
                println!(
                    "SDR_y {:.4} dB  SDR_x {:.4} dB  delta {:.4} dB",
                    sdr.sdr_y, sdr.sdr_x_hat, sdr.delta_sdr
                );
            }
            if out.clamped > 0 {
                eprintln!("warning: {} samples clamped to full scale", out.clamped);
            }
            println!("report written to {}", args.report_path().display());
        }
        Command::Eval(args) => {
            let row = cmd_eval(&args)?;
            println!(
                "SDR_y {}  SDR_x {}  delta {}",
                fmt_db(row.sdr_y),
                fmt_db(row.sdr_x_hat),
                fmt_db(row.delta_sdr)
            );
        }
        Command::Bench(args) => {
            let out = cmd_bench(&args)?;
            println!("{} rows written to {}", out.rows.len(), args.csv.display());
            if out.failures > 0 {
                eprintln!(
                    "warning: {} cell(s) failed; see the error column",
                    out.failures
                );
            }
            return Ok(out.code);
        }
        Command::Corpus(args) => {
            let files = cmd_corpus(&args)?;
            println!(
                "{} synthetic files written to {}",
                files.len(),
                args.dir.display()
            );
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code as u8)
        }
    }
}
