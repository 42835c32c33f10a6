//! Command implementations behind the `slidefetch` binary, plus the
//! pre-chop baseline used by `bench`.

pub mod args;
pub mod bench;
pub mod chop;
pub mod consumer;
pub mod grid;
pub mod mask;
pub mod pngio;
pub mod prechop;
pub mod report;
pub mod stream;
pub mod synth;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use serde::Serialize;
use slidefetch::Error;

use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

fn emit<T: Serialize>(report: &T) -> i32 {
    let mut out = std::io::stdout().lock();
    match serde_json::to_writer_pretty(&mut out, report) {
        Ok(()) => {
            let _ = writeln!(out);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            EXIT_FAILURE
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `argv`, runs the command, prints its JSON report on stdout and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = match &cli.command {
        Command::Mask { slide_dir } => cli
            .global
            .resolve(Some(slide_dir))
            .and_then(|cfg| mask::cmd_mask(&cfg))
            .map(|r| {
                let failed = r.slides.iter().any(|s| s.error.is_some());
                let code = emit(&r);
                if failed {
                    EXIT_FAILURE
                } else {
                    code
                }
            }),
        Command::Chop {
            slide_dir,
            out_dir,
            tile_px,
        } => cli
            .global
            .resolve(Some(slide_dir))
            .and_then(|cfg| chop::cmd_chop(&cfg, out_dir, *tile_px))
            .map(|r| emit(&r)),
        Command::Stream { slide_dir } => cli
            .global
            .resolve(slide_dir.as_deref())
            .and_then(|cfg| stream::cmd_stream(&cfg, cli.global.consumer_ms.unwrap_or(0.0)))
            .map(|r| emit(&r)),
        Command::Bench {
            slide_dir,
            work_dir,
            tile_px,
        } => cli
            .global
            .resolve(Some(slide_dir))
            .and_then(|cfg| {
                let opts = bench::BenchOptions {
                    work_dir: work_dir.clone(),
                    tile_px: *tile_px,
                    consumer_ms: cli.global.consumer_ms.unwrap_or(bench::DEFAULT_CONSUMER_MS),
                };
                bench::cmd_bench(&cfg, &opts)
            })
            .map(|r| emit(&r)),
        Command::Synth {
            out_dir,
            count,
            size,
            blobs,
        } => synth::cmd_synth(out_dir, *count, cli.global.seed.unwrap_or(0), *size, *blobs).map(|r| emit(&r)),
        Command::Grid { slide, out_dir } => cli
            .global
            .resolve(None)
            .and_then(|cfg| grid::cmd_grid(slide, &cfg, out_dir))
            .map(|r| emit(&r)),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e} [{}]", e.name());
            exit_code_for(&e)
        }
    }
}
