use std::time::Instant;

use slidefetch::{Pipeline, PipelineConfig, Result};

use crate::consumer::{consume, millis, StepClock};
use crate::report::{mean_stdev, BatchLine, StreamReport};

/// Runs the pipeline to completion behind a consumer that spends
/// `consumer_ms` on each batch, checksum included.
pub fn cmd_stream(cfg: &PipelineConfig, consumer_ms: f64) -> Result<StreamReport> {
    let launched = Instant::now();
    let mut pipeline = Pipeline::start(cfg.clone())?;
    let startup_s = launched.elapsed().as_secs_f64();
    let busy = millis(consumer_ms);
    let mut clock = StepClock::default();
    let mut batches = Vec::with_capacity(cfg.total_steps as usize);
    clock.start();
    let run_started = Instant::now();
    loop {
        let asked = Instant::now();
        let batch = match pipeline.next_batch() {
            Ok(b) => b,
            Err(slidefetch::Error::EndOfStream) => break,
            Err(e) => return Err(e),
        };
        let blocked = asked.elapsed();
        let checksum = consume(busy, || batch.checksum());
        batches.push(BatchLine {
            step: batch.step,
            checksum,
        });
        clock.tick(blocked);
    }
    let wall_time_s = run_started.elapsed().as_secs_f64();
    let stats = pipeline.stop();

    let warmup = cfg.prefetch_depth;
    let (steps, blocked) = clock.after(warmup);
    let (mean_step_s, stdev_step_s) = mean_stdev(steps);
    Ok(StreamReport {
        startup_s,
        wall_time_s,
        consumer_ms,
        mean_step_s,
        stdev_step_s,
        warmup_steps: warmup.min(clock.steps.len()) as u64,
        blocked_after_warmup_s: blocked.iter().sum(),
        wall_after_warmup_s: steps.iter().sum(),
        stats: stats.into(),
        batches,
    })
}
