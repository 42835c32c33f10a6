use std::collections::HashMap;
use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use slidefetch::raster::RgbImage;
use slidefetch::slide::{synth_slide, write_pyramid, WriteOptions};
use slidefetch::{Error, Pipeline, PipelineConfig};
use tempfile::TempDir;

fn synth_dir(n: usize, size: u32) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..n {
        synth_slide(dir.path().join(format!("s{i}.tif")), 100 + i as u64, size, size, 4).unwrap();
    }
    dir
}

fn config(dir: &Path) -> PipelineConfig {
    PipelineConfig::from_pairs([
        ("slide_dir", dir.to_str().unwrap()),
        ("patch_size_px", "32"),
        ("downsample", "2"),
        ("batch_size", "4"),
        ("workers", "2"),
        ("prefetch_depth", "3"),
        ("total_steps", "12"),
        ("seed", "5"),
    ])
    .unwrap()
}

fn checksums(cfg: PipelineConfig) -> Vec<String> {
    let mut p = Pipeline::start(cfg).unwrap();
    let mut out = Vec::new();
    for (i, b) in (&mut p).enumerate() {
        let b = b.unwrap();
        assert_eq!(b.step, i as u64);
        out.push(b.checksum());
    }
    out
}

#[test]
fn empty_directory_has_no_slides() {
    let dir = tempfile::tempdir().unwrap();
    let err = Pipeline::start(config(dir.path())).err().unwrap();
    assert_eq!(err.name(), "NoSlides");
}

#[test]
fn blank_slide_has_no_tissue() {
    let dir = tempfile::tempdir().unwrap();
    write_pyramid(
        dir.path().join("blank.tif"),
        &[RgbImage::filled(1024, 1024, [245, 245, 245])],
        &WriteOptions::default(),
    )
    .unwrap();
    let err = Pipeline::start(config(dir.path())).err().unwrap();
    assert!(matches!(err, Error::NoTissue(_)), "{err}");
}

#[test]
fn prefetch_fills_buffer_before_first_request() {
    let dir = synth_dir(1, 1024);
    let p = Pipeline::start(config(dir.path())).unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    while p.stats().peak_buffered < 3 && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(5));
    }
    thread::sleep(Duration::from_millis(50));
    let s = p.stats();
    assert_eq!(s.peak_buffered, 3);
    assert_eq!(s.batches_delivered, 0);
}

#[test]
fn delivers_every_step_once_then_ends() {
    let dir = synth_dir(2, 1024);
    let mut p = Pipeline::start(config(dir.path())).unwrap();
    for step in 0..12 {
        let b = p.next_batch().unwrap();
        assert_eq!(b.step, step);
        assert_eq!(b.patches.len(), 4);
        for patch in &b.patches {
            assert_eq!((patch.pixels.width, patch.pixels.height), (32, 32));
        }
    }
    assert!(matches!(p.next_batch(), Err(Error::EndOfStream)));
    assert!(matches!(p.next_batch(), Err(Error::EndOfStream)));
    let s = p.stop();
    assert_eq!(s.batches_delivered, 12);
    assert!(s.peak_buffered <= 3);
    assert!(s.mean_batch_latency > 0.0);
    assert_eq!(p.masks().len(), 2);
}

#[test]
fn ordered_output_ignores_worker_count() {
    let dir = synth_dir(2, 1024);
    let mut cfg = config(dir.path());
    cfg.workers = 1;
    let reference = checksums(cfg.clone());
    assert_eq!(checksums(cfg.clone()), reference);
    for workers in [3, 8] {
        cfg.workers = workers;
        assert_eq!(checksums(cfg.clone()), reference, "workers = {workers}");
    }
    cfg.spec.seed += 1;
    assert_ne!(checksums(cfg), reference);
}

#[test]
fn unordered_output_is_a_permutation() {
    let dir = synth_dir(1, 1024);
    let mut cfg = config(dir.path());
    cfg.workers = 4;
    let ordered = checksums(cfg.clone());
    cfg.ordered = false;
    let unordered = checksums(cfg);
    let count = |v: &[String]| {
        let mut m = HashMap::new();
        for c in v {
            *m.entry(c.clone()).or_insert(0) += 1;
        }
        m
    };
    assert_eq!(count(&ordered), count(&unordered));
}

#[test]
fn stop_is_idempotent() {
    let dir = synth_dir(1, 1024);
    let mut p = Pipeline::start(config(dir.path())).unwrap();
    let first = p.stop();
    assert_eq!(first.batches_delivered, 0);
    assert_eq!(p.stop(), first);
    assert!(matches!(p.next_batch(), Err(Error::EndOfStream)));
}

#[test]
fn buffer_never_exceeds_depth_with_many_workers() {
    let dir = synth_dir(1, 1024);
    let mut cfg = config(dir.path());
    cfg.workers = 8;
    cfg.prefetch_depth = 2;
    cfg.total_steps = 60;
    let mut p = Pipeline::start(cfg).unwrap();
    let mut n = 0;
    for b in p.by_ref() {
        b.unwrap();
        n += 1;
        if n % 10 == 0 {
            thread::sleep(Duration::from_millis(20));
        }
    }
    assert_eq!(n, 60);
    assert!(p.stats().peak_buffered <= 2);
}

#[test]
fn broken_slide_surfaces_as_worker_failure() {
    let dir = synth_dir(1, 1024);
    let mut cfg = config(dir.path());
    cfg.total_steps = 10_000;
    cfg.workers = 4;
    let mut p = Pipeline::start(cfg).unwrap();
    // Cut the level-0 tiles off after the mask has been built.
    let file = std::fs::OpenOptions::new()
        .write(true)
        .open(dir.path().join("s0.tif"))
        .unwrap();
    file.set_len(64).unwrap();

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let outcome = loop {
            match p.next_batch() {
                Ok(_) => continue,
                Err(e) => break e,
            }
        };
        let again = p.next_batch().err().map(|e| e.name());
        tx.send((outcome.name(), again, outcome.to_string())).unwrap();
    });
    let (name, again, msg) = rx.recv_timeout(Duration::from_secs(60)).expect("stream hung after a worker error");
    assert_eq!(name, "WorkerFailure", "{msg}");
    assert_eq!(again, Some("WorkerFailure"));
    assert!(msg.contains("truncated"), "{msg}");
}

#[test]
fn masks_are_cached_between_runs() {
    let dir = synth_dir(1, 1024);
    let masks = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.mask_dir = Some(masks.path().to_path_buf());
    let p = Pipeline::start(cfg.clone()).unwrap();
    assert_eq!(p.masks()[0].source, slidefetch::tissue::MaskSource::Built);
    assert!(p.masks()[0].path.starts_with(masks.path()));
    assert!(p.masks()[0].file_bytes > 0);
    drop(p);
    let p = Pipeline::start(cfg).unwrap();
    assert_eq!(p.masks()[0].source, slidefetch::tissue::MaskSource::Cached);
}

#[test]
fn config_file_drives_the_stream() {
    let dir = synth_dir(1, 1024);
    let text = format!(
        "slide_dir = {}\npatch_size_px = 16\ndownsample = 4\nbatch_size = 2\ntotal_steps = 3\nworkers = 1\n",
        dir.path().display()
    );
    let cfg = PipelineConfig::parse_text(&text).unwrap();
    let batches: Vec<_> = Pipeline::start(cfg).unwrap().map(Result::unwrap).collect();
    assert_eq!(batches.len(), 3);
    assert!(batches.iter().all(|b| b.patches.iter().all(|p| p.pixels.width == 16)));
}
