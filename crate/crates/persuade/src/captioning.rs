//! Batch captioning with bounded concurrency, a shared rate limit and a
//! resumable checkpoint.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use persuade_core::captioner::{
    caption_instance, CaptionOutcome, CaptionStatus, Clock, ProtocolConfig, Throttle, Transport,
};
use persuade_core::corpus::{CaptionRecord, CaptionSource, MemeInstance};
use serde::{Deserialize, Serialize};

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A clock that only moves when slept on. Sleeping advances it instantly.
#[derive(Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    fn sleep_until(&self, deadline: Duration) {
        let mut now = self.now.lock().unwrap();
        *now = (*now).max(deadline);
    }
}

/// Token bucket of capacity one: requests leave at least `60/rpm` seconds
/// apart, across all threads.
pub struct RateLimiter<'c, C: Clock + ?Sized> {
    clock: &'c C,
    interval: Duration,
    next: Mutex<Option<Duration>>,
}

impl<'c, C: Clock + ?Sized> RateLimiter<'c, C> {
    pub fn per_minute(clock: &'c C, requests_per_minute: f64) -> Self {
        let interval = if requests_per_minute > 0.0 && requests_per_minute.is_finite() {
            Duration::from_secs_f64(60.0 / requests_per_minute)
        } else {
            Duration::ZERO
        };
        Self {
            clock,
            interval,
            next: Mutex::new(None),
        }
    }
}

impl<C: Clock + Sync + ?Sized> Throttle for RateLimiter<'_, C> {
    fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().unwrap();
            let now = self.clock.now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        self.clock.sleep_until(slot);
    }
}

/// One checkpoint line: the outcome plus the caption source it will carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    #[serde(flatten)]
    pub outcome: CaptionOutcome,
    pub source: CaptionSource,
}

/// Read a JSON-lines checkpoint; later lines for an id win. A torn final
/// line (interrupted write) is skipped.
pub fn read_checkpoint(path: &Path) -> io::Result<BTreeMap<String, CaptionOutcome>> {
    let mut out = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointRecord>(line) {
            Ok(rec) => {
                out.insert(rec.outcome.id.clone(), rec.outcome);
            }
            Err(e) if i == last => log::warn!("ignoring torn checkpoint line {}: {e}", i + 1),
            Err(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: line {}: {e}", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// Cut a partially written last line so new records start on a fresh line.
fn drop_torn_tail(path: &Path) -> io::Result<()> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)
}

#[derive(Debug, Clone)]
pub struct RunOptions<'a> {
    pub concurrency: usize,
    /// `None` disables rate limiting.
    pub rate_per_minute: Option<f64>,
    /// Recaption instances that already carry a caption.
    pub force: bool,
    pub checkpoint: Option<&'a Path>,
    /// Checked before each instance starts; set it to stop early.
    pub cancel: Option<&'a AtomicBool>,
    pub source: CaptionSource,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            concurrency: 1,
            rate_per_minute: None,
            force: false,
            checkpoint: None,
            cancel: None,
            source: CaptionSource::ExternalZeroShot,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptionRun {
    /// Final outcome per id: restored from the checkpoint or produced now.
    pub outcomes: BTreeMap<String, CaptionOutcome>,
    /// Ids requested during this run.
    pub requested: Vec<String>,
    /// Ids skipped because they already had a caption.
    pub skipped_existing: Vec<String>,
    /// Ids without an image reference.
    pub no_image: Vec<String>,
    /// Ids that ended in a transport error.
    pub failed: Vec<String>,
    pub refused: Vec<String>,
}

impl CaptionRun {
    pub fn captions(&self, source: CaptionSource) -> BTreeMap<String, CaptionRecord> {
        self.outcomes
            .values()
            .filter_map(|o| {
                o.caption.as_ref().map(|c| {
                    (
                        o.id.clone(),
                        CaptionRecord {
                            caption: c.clone(),
                            source,
                        },
                    )
                })
            })
            .collect()
    }
}

/// Caption every instance that has an image and needs a caption.
///
/// Completed ids found in the checkpoint are not requested again; ids whose
/// last outcome was a transport error are retried. One failure never stops
/// the batch.
pub fn caption_corpus<T, C>(
    corpus: &[MemeInstance],
    cfg: &ProtocolConfig,
    transport: &T,
    clock: &C,
    opts: &RunOptions<'_>,
) -> io::Result<CaptionRun>
where
    T: Transport + Sync + ?Sized,
    C: Clock + Sync + ?Sized,
{
    let mut run = CaptionRun::default();
    let restored = match opts.checkpoint {
        Some(p) => read_checkpoint(p)?,
        None => BTreeMap::new(),
    };
    let mut work: Vec<&MemeInstance> = Vec::new();
    for inst in corpus {
        if inst.image.is_none() {
            run.no_image.push(inst.id.clone());
        } else if inst.caption.is_some() && !opts.force {
            run.skipped_existing.push(inst.id.clone());
        } else if let Some(done) = restored.get(&inst.id).filter(|o| o.status.is_final()) {
            run.outcomes.insert(inst.id.clone(), done.clone());
        } else {
            work.push(inst);
        }
    }

    let sink = match opts.checkpoint {
        Some(p) => {
            drop_torn_tail(p)?;
            Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?))
        }
        None => None,
    };
    let limiter = RateLimiter::per_minute(clock, opts.rate_per_minute.unwrap_or(0.0));
    let cursor = AtomicUsize::new(0);
    let produced: Mutex<Vec<CaptionOutcome>> = Mutex::new(Vec::new());
    let io_error: Mutex<Option<io::Error>> = Mutex::new(None);

    let worker = || loop {
        if opts.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) || io_error.lock().unwrap().is_some() {
            return;
        }
        let i = cursor.fetch_add(1, Ordering::SeqCst);
        let Some(inst) = work.get(i) else { return };
        let outcome = match caption_instance(inst, cfg, transport, clock, &limiter) {
            Ok(o) => o,
            // filtered above: every queued instance has an image
            Err(e) => unreachable!("{e}"),
        };
        if let Some(sink) = &sink {
            let rec = CheckpointRecord {
                outcome: outcome.clone(),
                source: opts.source,
            };
            let mut line = serde_json::to_string(&rec).expect("in-memory JSON serialization");
            line.push('\n');
            let mut f = sink.lock().unwrap();
            if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
                *io_error.lock().unwrap() = Some(e);
                return;
            }
        }
        match outcome.status {
            CaptionStatus::TransportError => log::warn!(
                "{}: {}",
                outcome.id,
                outcome.diagnostics.as_deref().unwrap_or("transport error")
            ),
            CaptionStatus::RefusedBoth => log::warn!("{}: both prompts refused", outcome.id),
            _ => {
                if let Some(d) = &outcome.diagnostics {
                    log::warn!("{}: {d}", outcome.id);
                }
            }
        }
        produced.lock().unwrap().push(outcome);
    };

    let threads = opts.concurrency.max(1).min(work.len().max(1));
    std::thread::scope(|s| {
        for _ in 1..threads {
            s.spawn(worker);
        }
        worker();
    });
    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(e);
    }

    for o in produced.into_inner().unwrap() {
        run.requested.push(o.id.clone());
        run.outcomes.insert(o.id.clone(), o);
    }
    run.requested.sort();
    for o in run.outcomes.values() {
        match o.status {
            CaptionStatus::TransportError => run.failed.push(o.id.clone()),
            CaptionStatus::RefusedBoth => run.refused.push(o.id.clone()),
            _ => {}
        }
    }
    Ok(run)
}
