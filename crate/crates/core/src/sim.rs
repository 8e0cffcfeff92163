//! Plant-change simulator.
//!
//! On every tick the simulator draws one uniform integer per configured tag,
//! writes them to the hub as a single batch and appends a ground-truth
//! [`ChangeLogEntry`]. Ticks follow a fixed interval or a random delay of
//! `max_interval_s * 1000 * U(0,1)` ms (clamped to 10 ms). Schedules are
//! computed in virtual time and converted to real sleeps with
//! `time_scale`, so a 60 s experiment can run in a few seconds.

use std::io;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hub::{Handle, HubError, Sequence, TagHub, TagWrite};
use crate::wire::format_timestamp;

pub const MIN_DELAY: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMode {
    Fixed { interval_ms: u64 },
    /// Delay drawn as `max_interval_s * U(0,1)` seconds.
    Random { max_interval_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeCount {
    Limited(u32),
    Unlimited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: SimMode,
    pub count: ChangeCount,
    /// Inclusive `[lo, hi]`.
    pub value_range: (i64, i64),
    pub rng_seed: u64,
    pub tag_handles: Vec<Handle>,
    pub time_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: SimMode::Fixed { interval_ms: 1000 },
            count: ChangeCount::Unlimited,
            value_range: (0, 100),
            rng_seed: 0,
            tag_handles: (1..=6).filter_map(Handle::new).collect(),
            time_scale: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        match self.mode {
            SimMode::Fixed { interval_ms } if interval_ms < 10 => {
                return Err(SimError::Config(format!("interval_ms must be >= 10, got {interval_ms}")))
            }
            SimMode::Random { max_interval_s } if !(max_interval_s.is_finite() && max_interval_s > 0.0) => {
                return Err(SimError::Config(format!("max_interval_s must be > 0, got {max_interval_s}")))
            }
            _ => {}
        }
        if self.count == ChangeCount::Limited(0) {
            return Err(SimError::Config("limited change count must be >= 1".into()));
        }
        let (lo, hi) = self.value_range;
        if lo > hi {
            return Err(SimError::Config(format!("value range {lo}:{hi} is empty")));
        }
        if self.tag_handles.is_empty() {
            return Err(SimError::Config("no tag handles to drive".into()));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(SimError::Config(format!("time_scale must be > 0, got {}", self.time_scale)));
        }
        Ok(())
    }

    /// Expected virtual time between changes.
    pub fn mean_interval(&self) -> Duration {
        match self.mode {
            SimMode::Fixed { interval_ms } => Duration::from_millis(interval_ms),
            SimMode::Random { max_interval_s } => Duration::from_secs_f64(max_interval_s / 2.0),
        }
    }

    /// Change rate Z in changes per second.
    pub fn change_rate_hz(&self) -> f64 {
        1.0 / self.mean_interval().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeLogEntry {
    /// 1-based.
    pub ordinal: u64,
    /// Hub sequence after the write.
    pub sequence: Sequence,
    pub at: DateTime<Utc>,
    pub values_written: Vec<i64>,
    /// Set when the drawn batch matched the hub state twice in a row and
    /// the write produced no change.
    pub no_op: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStatus {
    Stopped,
    Running,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("simulator is already running")]
    AlreadyRunning,
    #[error("simulator is not running")]
    NotRunning,
    #[error("hub clock runs at scale {hub} but simulator time_scale is {sim}")]
    ClockMismatch { hub: f64, sim: f64 },
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error("failed to spawn simulator thread: {0}")]
    Spawn(io::Error),
}

#[derive(Debug)]
struct Engine {
    config: SimConfig,
    rng: ChaCha8Rng,
    ordinal: u64,
}

impl Engine {
    fn new(config: SimConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Self {
            config,
            rng,
            ordinal: 0,
        }
    }

    fn next_delay(&mut self) -> Duration {
        match self.config.mode {
            SimMode::Fixed { interval_ms } => Duration::from_millis(interval_ms),
            SimMode::Random { max_interval_s } => {
                let u: f64 = self.rng.random();
                Duration::from_secs_f64(max_interval_s * u).max(MIN_DELAY)
            }
        }
    }

    fn draw(&mut self) -> Vec<i64> {
        let (lo, hi) = self.config.value_range;
        self.config
            .tag_handles
            .iter()
            .map(|_| self.rng.random_range(lo..=hi))
            .collect()
    }

    fn tick(&mut self, hub: &TagHub) -> Result<ChangeLogEntry, SimError> {
        let current = hub.snapshot();
        let handles = self.config.tag_handles.clone();
        let matches_hub = |values: &[i64]| {
            handles
                .iter()
                .zip(values)
                .all(|(h, &v)| current.items[h.get() as usize - 1].value == v as f64)
        };
        let mut values = self.draw();
        if matches_hub(&values) {
            values = self.draw();
        }
        let writes: Vec<TagWrite> = self
            .config
            .tag_handles
            .iter()
            .zip(&values)
            .map(|(&h, &v)| TagWrite::value(h, v as f64))
            .collect();
        let outcome = hub.write_batch(&writes)?;
        self.ordinal += 1;
        Ok(ChangeLogEntry {
            ordinal: self.ordinal,
            sequence: outcome.sequence,
            at: outcome.at,
            values_written: values,
            no_op: !outcome.changed,
        })
    }
}

#[derive(Debug, Default)]
struct RunState {
    running: bool,
    stop_requested: bool,
}

#[derive(Debug)]
struct Shared {
    run: Mutex<RunState>,
    wake: Condvar,
    engine: Mutex<Engine>,
    log: Mutex<Vec<ChangeLogEntry>>,
}

/// A simulator bound to one hub.
#[derive(Debug)]
pub struct PlantSim {
    hub: Arc<TagHub>,
    config: SimConfig,
    shared: Arc<Shared>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl PlantSim {
    pub fn new(hub: Arc<TagHub>, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        if !hub.is_registered() {
            return Err(HubError::NotRegistered.into());
        }
        let tags = hub.tag_count();
        if let Some(h) = config.tag_handles.iter().find(|h| h.get() as usize > tags) {
            return Err(HubError::UnknownHandle(h.get()).into());
        }
        let hub_scale = hub.clock().scale();
        if (hub_scale - config.time_scale).abs() > 1e-9 * hub_scale.max(1.0) {
            return Err(SimError::ClockMismatch {
                hub: hub_scale,
                sim: config.time_scale,
            });
        }
        Ok(Self {
            shared: Arc::new(Shared {
                run: Mutex::new(RunState::default()),
                wake: Condvar::new(),
                engine: Mutex::new(Engine::new(config.clone())),
                log: Mutex::new(Vec::new()),
            }),
            hub,
            config,
            worker: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn status(&self) -> SimStatus {
        if self.shared.run.lock().running {
            SimStatus::Running
        } else {
            SimStatus::Stopped
        }
    }

    /// Starts the background schedule. The log and random stream are reset,
    /// so two starts with the same config produce the same values and delays.
    pub fn start(&self) -> Result<(), SimError> {
        self.start_inner(None)
    }

    /// Like [`PlantSim::start`], but no tick is scheduled later than
    /// `horizon` of virtual time after the start.
    pub fn start_until(&self, horizon: Duration) -> Result<(), SimError> {
        self.start_inner(Some(horizon))
    }

    fn start_inner(&self, horizon: Option<Duration>) -> Result<(), SimError> {
        let mut worker = self.worker.lock();
        {
            let mut run = self.shared.run.lock();
            if run.running {
                return Err(SimError::AlreadyRunning);
            }
            run.running = true;
            run.stop_requested = false;
        }
        if let Some(old) = worker.take() {
            let _ = old.join();
        }
        *self.shared.engine.lock() = Engine::new(self.config.clone());
        self.shared.log.lock().clear();

        let shared = self.shared.clone();
        let hub = self.hub.clone();
        let scale = self.config.time_scale;
        let limit = match self.config.count {
            ChangeCount::Limited(n) => Some(n as usize),
            ChangeCount::Unlimited => None,
        };
        let spawned = std::thread::Builder::new()
            .name("plant-sim".into())
            .spawn(move || drive(&shared, &hub, scale, limit, horizon));
        match spawned {
            Ok(handle) => {
                *worker = Some(handle);
                Ok(())
            }
            Err(e) => {
                self.shared.run.lock().running = false;
                Err(SimError::Spawn(e))
            }
        }
    }

    /// Stops the schedule and returns the number of logged changes.
    pub fn stop(&self) -> Result<usize, SimError> {
        let mut worker = self.worker.lock();
        {
            let mut run = self.shared.run.lock();
            if !run.running {
                return Err(SimError::NotRunning);
            }
            run.stop_requested = true;
        }
        self.shared.wake.notify_all();
        if let Some(handle) = worker.take() {
            let _ = handle.join();
        }
        Ok(self.shared.log.lock().len())
    }

    /// Performs exactly one tick on the calling thread.
    pub fn step(&self) -> Result<ChangeLogEntry, SimError> {
        if self.shared.run.lock().running {
            return Err(SimError::AlreadyRunning);
        }
        let entry = self.shared.engine.lock().tick(&self.hub)?;
        self.shared.log.lock().push(entry.clone());
        Ok(entry)
    }

    pub fn change_log(&self) -> Vec<ChangeLogEntry> {
        self.shared.log.lock().clone()
    }

    /// Blocks until the schedule ends by itself or `timeout` elapses.
    /// Returns whether the simulator is stopped.
    pub fn wait_stopped(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut run = self.shared.run.lock();
        while run.running {
            if self.shared.wake.wait_until(&mut run, deadline).timed_out() {
                break;
            }
        }
        !run.running
    }
}

impl Drop for PlantSim {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn drive(shared: &Shared, hub: &TagHub, scale: f64, limit: Option<usize>, horizon: Option<Duration>) {
    let started = Instant::now();
    let mut scheduled = Duration::ZERO;
    loop {
        scheduled += shared.engine.lock().next_delay();
        if horizon.is_some_and(|h| scheduled > h) {
            break;
        }
        let deadline = started + scheduled.div_f64(scale);
        {
            let mut run = shared.run.lock();
            while !run.stop_requested && Instant::now() < deadline {
                shared.wake.wait_until(&mut run, deadline);
            }
            if run.stop_requested {
                break;
            }
        }
        let entry = match shared.engine.lock().tick(hub) {
            Ok(entry) => entry,
            Err(e) => {
                tracing::error!("simulator tick failed: {e}");
                break;
            }
        };
        let logged = {
            let mut log = shared.log.lock();
            log.push(entry);
            log.len()
        };
        if limit.is_some_and(|n| logged >= n) {
            break;
        }
    }
    shared.run.lock().running = false;
    shared.wake.notify_all();
}

/// Writes `ordinal,sequence,at_iso,v1..vn` rows with a header line.
pub fn write_log_csv<W: io::Write>(entries: &[ChangeLogEntry], out: W) -> csv::Result<()> {
    let width = entries.iter().map(|e| e.values_written.len()).max().unwrap_or(0);
    let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["ordinal".to_owned(), "sequence".to_owned(), "at_iso".to_owned()];
    header.extend((1..=width).map(|i| format!("v{i}")));
    writer.write_record(&header)?;
    for e in entries {
        let mut row = vec![e.ordinal.to_string(), e.sequence.to_string(), format_timestamp(e.at)];
        row.extend(e.values_written.iter().map(i64::to_string));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
