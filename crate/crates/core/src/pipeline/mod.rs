//! Prefetching batch stream.
//!
//! A single seeded dispenser hands out one ticket per step: the slide and
//! center of every patch plus a per-patch augmentation seed. Workers turn
//! tickets into batches and park them in a bounded buffer that the
//! consumer drains. Because all randomness lives in the tickets, ordered
//! output does not depend on the number of workers or their timing.

mod config;

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use config::{PipelineConfig, WorkerPriority, CONFIG_KEYS};

use crate::augment::draw_augmentation;
use crate::error::{Error, Result};
use crate::sampler::{build_index, extract_patch, Draw, SlideEntry, SlideSampler};
use crate::seed::rng_for;
use crate::slide::{Patch, SlidePyramid};
use crate::tissue::{load_or_build_mask, mask_path_for, MaskSource};

/// Stream used for the ticket sequence; augmentation seeds are derived from
/// values drawn on it.
const TICKET_STREAM: u64 = 0x7469_636b;

#[derive(Debug, Clone)]
pub struct Batch {
    pub step: u64,
    pub patches: Vec<Patch>,
    started: Instant,
}

impl Batch {
    /// Hex SHA-256 over every patch's width, height and RGB bytes, in order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.patches {
            h.update(p.pixels.width.to_le_bytes());
            h.update(p.pixels.height.to_le_bytes());
            h.update(&p.pixels.data);
        }
        crate::slide::hex(&h.finalize())
    }
}

/// Counters for a run. Times are in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineStats {
    pub batches_delivered: u64,
    /// Time the consumer spent inside `next_batch` waiting for data.
    pub consumer_blocked_time: f64,
    /// Time workers held a finished batch because the buffer was full,
    /// summed over workers.
    pub producer_idle_time: f64,
    /// Mean time from a worker starting a batch to its delivery.
    pub mean_batch_latency: f64,
    /// Mean time a worker spent building one batch.
    pub mean_batch_build_time: f64,
    /// Most batches ever held in the buffer at once.
    pub peak_buffered: usize,
}

/// One slide's mask as seen at start-up.
#[derive(Debug, Clone)]
pub struct MaskRecord {
    pub slide_id: String,
    pub path: PathBuf,
    pub source: MaskSource,
    pub file_bytes: u64,
    pub tissue_fraction: f64,
}

struct Ticket {
    step: u64,
    draws: Vec<(Draw, u64)>,
}

struct Dispenser {
    rng: ChaCha8Rng,
    next_step: u64,
}

struct State {
    ordered_ready: BTreeMap<u64, Batch>,
    completion_ready: VecDeque<Batch>,
    delivered: u64,
    failure: Option<Arc<Error>>,
    stopping: bool,
    stats: PipelineStats,
    latency_sum: f64,
    build_sum: f64,
    built: u64,
}

impl State {
    fn buffered(&self) -> usize {
        self.ordered_ready.len() + self.completion_ready.len()
    }
}

struct Shared {
    config: PipelineConfig,
    sampler: SlideSampler,
    dispenser: Mutex<Dispenser>,
    state: Mutex<State>,
    /// Signalled when a batch lands or the stream is poisoned or stopped.
    filled: Condvar,
    /// Signalled when the consumer takes a batch or the stream stops.
    drained: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn take_ticket(&self) -> Option<Ticket> {
        let mut d = self.dispenser.lock().unwrap_or_else(|p| p.into_inner());
        if d.next_step >= self.config.total_steps {
            return None;
        }
        let step = d.next_step;
        d.next_step += 1;
        let spec = &self.config.spec;
        let draws = (0..self.config.batch_size)
            .map(|_| {
                let draw = self.sampler.draw(spec, &mut d.rng);
                let aug_seed = d.rng.random::<u64>();
                (draw, aug_seed)
            })
            .collect();
        Some(Ticket { step, draws })
    }

    fn build(&self, ticket: &Ticket) -> Result<Vec<Patch>> {
        let cfg = &self.config;
        ticket
            .draws
            .iter()
            .map(|(draw, aug_seed)| {
                let slide = &self.sampler.entries()[draw.slide].slide;
                let mut patch = extract_patch(slide, draw.center, &cfg.spec)?;
                let mut rng = rng_for(*aug_seed, 0);
                let params = draw_augmentation(&cfg.augment, cfg.spec.patch_size, &mut rng)?;
                patch.pixels = params.apply(&patch.pixels)?;
                Ok(patch)
            })
            .collect()
    }

    fn poison(&self, err: Error) {
        let mut st = self.lock();
        if st.failure.is_none() {
            log::error!("worker failed: {err}");
            st.failure = Some(Arc::new(err));
        }
        drop(st);
        self.filled.notify_all();
        self.drained.notify_all();
    }

    fn run_worker(&self) {
        set_priority(self.config.worker_priority);
        let depth = self.config.prefetch_depth;
        loop {
            {
                let st = self.lock();
                if st.stopping || st.failure.is_some() {
                    return;
                }
            }
            let Some(ticket) = self.take_ticket() else { return };
            let started = Instant::now();
            let patches = match self.build(&ticket) {
                Ok(p) => p,
                Err(e) => return self.poison(e),
            };
            let build_time = started.elapsed().as_secs_f64();

            let mut st = self.lock();
            let wait_from = Instant::now();
            // Ordered: step `s` may enter only while it is within `depth` of
            // the consumer. The step the consumer needs next is always
            // admissible, so a full buffer cannot deadlock.
            let admissible = |st: &State| {
                if self.config.ordered {
                    ticket.step < st.delivered + depth as u64
                } else {
                    st.buffered() < depth
                }
            };
            while !admissible(&st) && !st.stopping && st.failure.is_none() {
                st = self.drained.wait(st).unwrap_or_else(|p| p.into_inner());
            }
            st.stats.producer_idle_time += wait_from.elapsed().as_secs_f64();
            if st.stopping || st.failure.is_some() {
                return;
            }
            st.build_sum += build_time;
            st.built += 1;
            let batch = Batch {
                step: ticket.step,
                patches,
                started,
            };
            if self.config.ordered {
                st.ordered_ready.insert(ticket.step, batch);
            } else {
                st.completion_ready.push_back(batch);
            }
            st.stats.peak_buffered = st.stats.peak_buffered.max(st.buffered());
            drop(st);
            self.filled.notify_all();
        }
    }
}

/// Handle to a running stream. Dropping it stops the workers.
pub struct Pipeline {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    masks: Vec<MaskRecord>,
    final_stats: Option<PipelineStats>,
}

/// Applies `priority` to the calling thread. Best effort: failure only
/// costs consumer latency.
#[cfg(target_os = "linux")]
fn set_priority(priority: WorkerPriority) {
    // SAFETY: plain syscalls on the calling thread only (pid 0 and the
    // thread's own tid).
    let rc = unsafe {
        match priority {
            WorkerPriority::Normal => return,
            WorkerPriority::Low => libc::setpriority(libc::PRIO_PROCESS, libc::gettid() as libc::id_t, 10),
            WorkerPriority::Idle => {
                let param = libc::sched_param { sched_priority: 0 };
                libc::sched_setscheduler(0, libc::SCHED_IDLE, &param)
            }
        }
    };
    if rc != 0 {
        log::debug!("worker priority {:?} not applied: {}", priority, std::io::Error::last_os_error());
    }
}

#[cfg(not(target_os = "linux"))]
fn set_priority(_priority: WorkerPriority) {}

/// `.tif`/`.tiff` files directly inside `dir`, sorted by name.
pub fn list_slides(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("tif" | "tiff")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Opens every slide in `dir` and loads or builds its mask, up to
/// `threads` slides at a time.
pub fn prepare_slides(config: &PipelineConfig, threads: usize) -> Result<Vec<(SlidePyramid, crate::tissue::MaskBuild, MaskRecord)>> {
    let paths = list_slides(&config.slide_dir)?;
    if paths.is_empty() {
        return Err(Error::NoSlides(config.slide_dir.display().to_string()));
    }
    let threads = threads.clamp(1, paths.len());
    let chunks: Vec<&[PathBuf]> = paths.chunks(paths.len().div_ceil(threads)).collect();
    let results: Vec<Result<Vec<_>>> = thread::scope(|s| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|p| {
                            let slide = SlidePyramid::open(p)?;
                            let mask_path = mask_path_for(&slide, config.mask_dir.as_deref());
                            let (build, source) = load_or_build_mask(&slide, config.mask, &mask_path)?;
                            let record = MaskRecord {
                                slide_id: slide.slide_id().to_string(),
                                file_bytes: fs::metadata(&mask_path)?.len(),
                                path: mask_path,
                                source,
                                tissue_fraction: build.mask.tissue_fraction(),
                            };
                            Ok((slide, build, record))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("mask thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(paths.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

impl Pipeline {
    /// Prepares masks for every slide in `config.slide_dir` and starts the
    /// workers. Prefetching begins before this returns.
    pub fn start(config: PipelineConfig) -> Result<Pipeline> {
        config.validate()?;
        let prepared = prepare_slides(&config, config.workers)?;
        let mut masks = Vec::with_capacity(prepared.len());
        let mut entries = Vec::new();
        for (slide, build, record) in prepared {
            masks.push(record);
            config.spec.validate_for(&slide)?;
            let (w, h) = slide.dimensions();
            match build_index(&build.mask) {
                Ok(index) => entries.push(SlideEntry {
                    slide: Arc::new(slide),
                    index: index.clamped_to(w, h),
                }),
                Err(Error::NoTissue(_)) => log::warn!("{}: no tissue, skipped", slide.slide_id()),
                Err(e) => return Err(e),
            }
        }
        if entries.is_empty() {
            return Err(Error::NoTissue(format!(
                "every slide in {} has an empty mask",
                config.slide_dir.display()
            )));
        }
        let sampler = SlideSampler::new(entries, config.slide_weighting, config.anchor)?;
        let shared = Arc::new(Shared {
            dispenser: Mutex::new(Dispenser {
                rng: rng_for(config.spec.seed, TICKET_STREAM),
                next_step: 0,
            }),
            state: Mutex::new(State {
                ordered_ready: BTreeMap::new(),
                completion_ready: VecDeque::new(),
                delivered: 0,
                failure: None,
                stopping: false,
                stats: PipelineStats::default(),
                latency_sum: 0.0,
                build_sum: 0.0,
                built: 0,
            }),
            filled: Condvar::new(),
            drained: Condvar::new(),
            sampler,
            config,
        });
        let workers = (0..shared.config.workers)
            .map(|i| {
                let shared = Arc::clone(&shared);
                thread::Builder::new()
                    .name(format!("slidefetch-worker-{i}"))
                    .spawn(move || shared.run_worker())
                    .map_err(Error::Io)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline {
            shared,
            workers,
            masks,
            final_stats: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.shared.config
    }

    pub fn masks(&self) -> &[MaskRecord] {
        &self.masks
    }

    /// Blocks until the next batch is available. Ordered streams deliver
    /// steps 0, 1, 2, ...; unordered streams deliver in completion order and
    /// renumber steps by delivery position.
    pub fn next_batch(&mut self) -> Result<Batch> {
        let shared = &self.shared;
        let mut st = shared.lock();
        let wait_from = Instant::now();
        let batch = loop {
            if let Some(e) = &st.failure {
                return Err(Error::WorkerFailure(Arc::clone(e)));
            }
            if st.delivered >= shared.config.total_steps || st.stopping {
                return Err(Error::EndOfStream);
            }
            let next = st.delivered;
            let found = if shared.config.ordered {
                st.ordered_ready.remove(&next)
            } else {
                st.completion_ready.pop_front()
            };
            if let Some(mut b) = found {
                b.step = next;
                break b;
            }
            st = shared.filled.wait(st).unwrap_or_else(|p| p.into_inner());
        };
        st.stats.consumer_blocked_time += wait_from.elapsed().as_secs_f64();
        st.delivered += 1;
        st.stats.batches_delivered = st.delivered;
        st.latency_sum += batch.started.elapsed().as_secs_f64();
        drop(st);
        shared.drained.notify_all();
        Ok(batch)
    }

    pub fn stats(&self) -> PipelineStats {
        if let Some(s) = self.final_stats {
            return s;
        }
        let st = self.shared.lock();
        let mut s = st.stats;
        if st.delivered > 0 {
            s.mean_batch_latency = st.latency_sum / st.delivered as f64;
        }
        if st.built > 0 {
            s.mean_batch_build_time = st.build_sum / st.built as f64;
        }
        s
    }

    /// Stops and joins the workers and returns the final counters. Later
    /// calls return the same counters.
    pub fn stop(&mut self) -> PipelineStats {
        if let Some(s) = self.final_stats {
            return s;
        }
        self.shared.lock().stopping = true;
        self.shared.filled.notify_all();
        self.shared.drained.notify_all();
        for w in self.workers.drain(..) {
            if w.join().is_err() {
                log::error!("a pipeline worker panicked");
            }
        }
        let s = self.stats();
        self.final_stats = Some(s);
        s
    }
}

impl Iterator for Pipeline {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_batch() {
            Err(Error::EndOfStream) => None,
            other => Some(other),
        }
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.stop();
    }
}
