//! Fixed-timer versus event-driven polling benchmark.
//!
//! Each run wires a fresh hub, simulator and loopback gateway in-process so
//! that change timestamps and client receipt times come from one clock.
//! All durations in [`RunSpec`] and [`Metrics`] are virtual time; with a
//! `time_scale` above 1 the run finishes proportionally faster in real time.

mod report;

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use thiserror::Error;
use tokio::sync::watch;

pub use report::{emit, EmitFormat, Family, Report, ReportRow, SuiteTable, CSV_COLUMNS};

use crate::client::{ClientError, GatewayClient, Update};
use crate::clock::{span_between, Clock, ScaledClock};
use crate::gateway::{serve, GatewayConfig, GatewayError};
use crate::hub::{Handle, HubError, Sequence, TagHub};
use crate::security::{Actor, PolicyConfig, Role, SecurityPolicy};
use crate::sim::{ChangeLogEntry, PlantSim, SimConfig, SimError, SimMode};
use crate::wire::{OpenRange, SetpointTargets};

/// How long the runner waits after the last scheduled change for
/// event-driven clients to catch up, in real time.
const CATCH_UP_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientStrategy {
    /// Asks for the current snapshot every `period_ms`, changed or not.
    FixedTimer { period_ms: u64 },
    /// Chains `since` long polls; optionally pauses `client_delay_ms`
    /// between a response and the next request.
    EventDriven { max_wait_ms: u64, client_delay_ms: u64 },
}

impl ClientStrategy {
    pub const DEFAULT_MAX_WAIT_MS: u64 = 30_000;

    pub fn event() -> Self {
        ClientStrategy::EventDriven {
            max_wait_ms: Self::DEFAULT_MAX_WAIT_MS,
            client_delay_ms: 0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ClientStrategy::FixedTimer { period_ms } => format!("fixed:{period_ms}"),
            ClientStrategy::EventDriven {
                max_wait_ms: Self::DEFAULT_MAX_WAIT_MS,
                client_delay_ms: 0,
            } => "event".to_owned(),
            ClientStrategy::EventDriven {
                max_wait_ms,
                client_delay_ms: 0,
            } => format!("event:{max_wait_ms}"),
            ClientStrategy::EventDriven {
                max_wait_ms,
                client_delay_ms,
            } => format!("event:{max_wait_ms}:{client_delay_ms}"),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        match *self {
            ClientStrategy::FixedTimer { period_ms } if period_ms < 10 => {
                Err(BenchError::Config(format!("poll period must be >= 10 ms, got {period_ms}")))
            }
            ClientStrategy::EventDriven { max_wait_ms: 0, .. } => {
                Err(BenchError::Config("max_wait_ms must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Parses `fixed:<ms>`, `event`, `event:<max_wait_ms>` or
/// `event:<max_wait_ms>:<client_delay_ms>`.
impl FromStr for ClientStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| p.parse::<u64>().map_err(|_| format!("bad number {p:?} in strategy {s:?}"));
        match parts[..] {
            ["fixed", ms] => Ok(ClientStrategy::FixedTimer { period_ms: num(ms)? }),
            ["event"] => Ok(ClientStrategy::event()),
            ["event", wait] => Ok(ClientStrategy::EventDriven {
                max_wait_ms: num(wait)?,
                client_delay_ms: 0,
            }),
            ["event", wait, delay] => Ok(ClientStrategy::EventDriven {
                max_wait_ms: num(wait)?,
                client_delay_ms: num(delay)?,
            }),
            _ => Err(format!("unknown strategy {s:?}; use fixed:<ms> or event[:<max_wait_ms>[:<delay_ms>]]")),
        }
    }
}

/// Parses `fixed:<ms>`, `random:<max_s>` or `off` into a simulator config
/// (`None` for off) with otherwise default settings.
pub fn parse_sim(s: &str) -> Result<Option<SimConfig>, String> {
    let s = s.trim();
    if s == "off" {
        return Ok(None);
    }
    let mode = match s.split_once(':') {
        Some(("fixed", ms)) => SimMode::Fixed {
            interval_ms: ms.parse().map_err(|_| format!("bad interval in {s:?}"))?,
        },
        Some(("random", max)) => SimMode::Random {
            max_interval_s: max.parse().map_err(|_| format!("bad max interval in {s:?}"))?,
        },
        _ => return Err(format!("unknown sim {s:?}; use fixed:<ms>, random:<max_s> or off")),
    };
    Ok(Some(SimConfig {
        mode,
        ..SimConfig::default()
    }))
}

pub fn sim_label(sim: Option<&SimConfig>) -> String {
    match sim.map(|c| c.mode) {
        None => "off".to_owned(),
        Some(SimMode::Fixed { interval_ms }) => format!("fixed:{interval_ms}"),
        Some(SimMode::Random { max_interval_s }) => format!("random:{max_interval_s}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub strategy: ClientStrategy,
    /// `None` runs with the simulator off.
    pub sim: Option<SimConfig>,
    pub duration: Duration,
    pub payload_bytes_per_var: u64,
    pub vars: usize,
    pub clients: usize,
    /// Must equal the simulator's `time_scale`; see [`RunSpec::with_time_scale`].
    pub time_scale: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            strategy: ClientStrategy::FixedTimer { period_ms: 1000 },
            sim: Some(SimConfig::default()),
            duration: Duration::from_secs(60),
            payload_bytes_per_var: 1,
            vars: 10,
            clients: 1,
            time_scale: 1.0,
        }
    }
}

impl RunSpec {
    pub fn new(strategy: ClientStrategy, sim: Option<SimConfig>, duration: Duration) -> Self {
        Self {
            strategy,
            sim,
            duration,
            ..Self::default()
        }
    }

    /// Sets the scale on the spec and its simulator together.
    pub fn with_time_scale(mut self, scale: f64) -> Self {
        self.time_scale = scale;
        if let Some(sim) = &mut self.sim {
            sim.time_scale = scale;
        }
        self
    }

    pub fn with_clients(mut self, clients: usize) -> Self {
        self.clients = clients;
        self
    }

    /// Nominal change rate in changes per minute; 0 with the simulator off.
    pub fn change_rate_per_min(&self) -> f64 {
        self.sim.as_ref().map_or(0.0, |s| 60.0 * s.change_rate_hz())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.strategy.validate()?;
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(BenchError::Config(format!("time_scale must be > 0, got {}", self.time_scale)));
        }
        if self.vars == 0 {
            return Err(BenchError::Config("vars must be >= 1".into()));
        }
        if self.clients == 0 || self.clients > 256 {
            return Err(BenchError::Config(format!("clients must be in 1..=256, got {}", self.clients)));
        }
        let mut longest = match self.strategy {
            ClientStrategy::FixedTimer { period_ms } => Duration::from_millis(period_ms),
            ClientStrategy::EventDriven { .. } => Duration::ZERO,
        };
        if let Some(sim) = &self.sim {
            sim.validate()?;
            if (sim.time_scale - self.time_scale).abs() > 1e-9 * self.time_scale.max(1.0) {
                return Err(BenchError::Config(format!(
                    "sim time_scale {} differs from run time_scale {}",
                    sim.time_scale, self.time_scale
                )));
            }
            if let Some(h) = sim.tag_handles.iter().find(|h| h.get() as usize > self.vars) {
                return Err(BenchError::Config(format!("sim drives tag {h} but vars is {}", self.vars)));
            }
            longest = longest.max(sim.mean_interval());
        }
        if self.duration.is_zero() || self.duration < longest * 10 {
            return Err(BenchError::Config(format!(
                "duration {:?} must be at least 10x the longest of poll period and change interval ({:?})",
                self.duration, longest
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    /// Completed requests that returned data. Heartbeats are counted apart.
    pub requests: u64,
    pub heartbeats: u64,
    pub responses_with_data: u64,
    /// `responses_with_data × vars × payload_bytes_per_var`.
    pub payload_bytes: u64,
    /// Gaps between consecutive request sends, heartbeats included.
    pub inter_arrival: Vec<Duration>,
    /// Change time to first client receipt, delivered changes only.
    pub latencies: Vec<Duration>,
    pub changes_produced: u64,
    pub changes_delivered: u64,
    pub changes_missed: u64,
    /// Mean time the server held data-bearing requests.
    pub mean_hold_time: Option<Duration>,
    /// Gaps between consecutive simulator changes.
    pub change_intervals: Vec<Duration>,
}

fn mean(samples: &[Duration]) -> Option<Duration> {
    if samples.is_empty() {
        return None;
    }
    let total: f64 = samples.iter().map(Duration::as_secs_f64).sum();
    Some(Duration::from_secs_f64(total / samples.len() as f64))
}

impl Metrics {
    pub fn mean_latency(&self) -> Option<Duration> {
        mean(&self.latencies)
    }

    pub fn mean_inter_arrival(&self) -> Option<Duration> {
        mean(&self.inter_arrival)
    }

    pub fn mean_change_interval(&self) -> Option<Duration> {
        mean(&self.change_intervals)
    }

    fn absorb(&mut self, other: ClientMetrics) {
        self.requests += other.requests;
        self.heartbeats += other.heartbeats;
        self.changes_produced += other.produced;
        self.changes_delivered += other.delivered;
        self.changes_missed += other.missed;
        self.inter_arrival.extend(other.inter_arrival);
        self.latencies.extend(other.latencies);
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid run spec: {0}")]
    Config(String),
    #[error("clock skew: change {sequence} was received {ahead_ms:.3} ms before it happened")]
    ClockSkew { sequence: Sequence, ahead_ms: f64 },
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("client {client}: {source}")]
    Client { client: usize, source: ClientError },
    #[error("client task {client} failed: {message}")]
    Task { client: usize, message: String },
    #[error("runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

/// One completed request as seen by a client, in virtual time.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub sent: DateTime<Utc>,
    pub received: DateTime<Utc>,
    pub sequence: Sequence,
    pub data: bool,
}

#[derive(Debug, Default)]
struct ClientMetrics {
    requests: u64,
    heartbeats: u64,
    produced: u64,
    delivered: u64,
    missed: u64,
    inter_arrival: Vec<Duration>,
    latencies: Vec<Duration>,
    holds: Vec<Duration>,
}

/// Scores one client's exchanges against the change log. A change counts as
/// delivered when a response carries its exact sequence; sequences skipped
/// over, or never reached, count as missed.
fn analyze(exchanges: &[Exchange], log: &[ChangeLogEntry]) -> Result<ClientMetrics, BenchError> {
    let changes: BTreeMap<Sequence, DateTime<Utc>> = log
        .iter()
        .filter(|e| !e.no_op)
        .map(|e| (e.sequence, e.at))
        .collect();
    let mut m = ClientMetrics {
        produced: changes.len() as u64,
        ..ClientMetrics::default()
    };
    m.inter_arrival = exchanges
        .windows(2)
        .filter_map(|w| span_between(w[0].sent, w[1].sent))
        .collect();
    let mut last_seen: Sequence = 0;
    for ex in exchanges {
        if !ex.data {
            m.heartbeats += 1;
            continue;
        }
        m.requests += 1;
        m.holds.push(span_between(ex.sent, ex.received).unwrap_or_default());
        if ex.sequence <= last_seen {
            continue;
        }
        m.missed += changes.range(last_seen + 1..ex.sequence).count() as u64;
        if let Some(&at) = changes.get(&ex.sequence) {
            let latency = span_between(at, ex.received).ok_or_else(|| BenchError::ClockSkew {
                sequence: ex.sequence,
                ahead_ms: (at - ex.received).num_microseconds().unwrap_or(i64::MAX) as f64 / 1000.0,
            })?;
            m.latencies.push(latency);
            m.delivered += 1;
        }
        last_seen = ex.sequence;
    }
    m.missed += changes.range(last_seen + 1..).count() as u64;
    Ok(m)
}

fn change_intervals(log: &[ChangeLogEntry]) -> Vec<Duration> {
    let times: Vec<DateTime<Utc>> = log.iter().filter(|e| !e.no_op).map(|e| e.at).collect();
    times.windows(2).filter_map(|w| span_between(w[0], w[1])).collect()
}

/// Executes one run on its own tokio runtime and returns summed metrics.
pub fn run(spec: &RunSpec) -> Result<Metrics, BenchError> {
    spec.validate()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    runtime.block_on(run_async(spec))
}

fn virtual_to_real(span: Duration, scale: f64) -> Duration {
    span.div_f64(scale)
}

async fn run_async(spec: &RunSpec) -> Result<Metrics, BenchError> {
    let scale = spec.time_scale;
    let clock = Arc::new(ScaledClock::new(scale));
    let hub = Arc::new(TagHub::with_clock(clock.clone()));
    let names: Vec<String> = (1..=spec.vars).map(|i| format!("s{i}")).collect();
    hub.register_tags(&names)?;

    let policy = PolicyConfig {
        hash_iterations: 1,
        ..PolicyConfig::default()
    };
    let security = Arc::new(SecurityPolicy::in_memory(policy, clock.clone()));
    for i in 0..spec.clients {
        security
            .admin_add_user(Actor::Local, &format!("bench{i}"), "bench", Role::User, &format!("code{i}"))
            .map_err(|e| BenchError::Config(e.to_string()))?;
    }

    let max_wait = match spec.strategy {
        ClientStrategy::EventDriven { max_wait_ms, .. } => {
            virtual_to_real(Duration::from_millis(max_wait_ms), scale).max(Duration::from_secs(1))
        }
        ClientStrategy::FixedTimer { .. } => Duration::from_secs(30),
    };
    let setpoints = if spec.vars >= 6 {
        SetpointTargets::default()
    } else {
        SetpointTargets::uniform(vec![Handle::new(1).expect("nonzero")], OpenRange { low: 0.0, high: 100.0 })
    };
    let gateway = serve(
        GatewayConfig {
            bind: ([127, 0, 0, 1], 0).into(),
            max_wait,
            setpoints,
            ..GatewayConfig::default()
        },
        hub.clone(),
        security,
    )
    .await?;

    let mut clients = Vec::with_capacity(spec.clients);
    for i in 0..spec.clients {
        let mut c = GatewayClient::new(gateway.base_url(), max_wait + Duration::from_secs(10))
            .map_err(|source| BenchError::Client { client: i, source })?;
        c.login(&format!("bench{i}"), "bench", &format!("code{i}"))
            .await
            .map_err(|source| BenchError::Client { client: i, source })?;
        clients.push(c);
    }

    let sim = match &spec.sim {
        Some(cfg) => Some(PlantSim::new(hub.clone(), cfg.clone())?),
        None => None,
    };
    let (stop_tx, stop_rx) = watch::channel(false);
    let progress: Vec<Arc<AtomicU64>> = (0..spec.clients).map(|_| Arc::new(AtomicU64::new(0))).collect();

    let t0 = tokio::time::Instant::now();
    if let Some(sim) = &sim {
        sim.start_until(spec.duration)?;
    }
    let mut tasks = Vec::with_capacity(spec.clients);
    for (i, c) in clients.into_iter().enumerate() {
        let clock = clock.clone();
        let strategy = spec.strategy;
        let duration = spec.duration;
        let stop = stop_rx.clone();
        let seen = progress[i].clone();
        tasks.push(tokio::spawn(async move {
            let result = match strategy {
                ClientStrategy::FixedTimer { period_ms } => {
                    fixed_timer_client(&c, clock.as_ref(), t0, period_ms, duration).await
                }
                ClientStrategy::EventDriven { client_delay_ms, .. } => {
                    event_client(&c, clock.as_ref(), client_delay_ms, stop, &seen).await
                }
            };
            result.map_err(|source| BenchError::Client { client: i, source })
        }));
    }

    tokio::time::sleep_until(t0 + virtual_to_real(spec.duration, scale)).await;
    if let Some(sim) = &sim {
        let deadline = Instant::now() + CATCH_UP_GRACE;
        while sim.status() == crate::sim::SimStatus::Running && Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        let _ = sim.stop();
    }
    if matches!(spec.strategy, ClientStrategy::EventDriven { .. }) {
        let final_seq = hub.current_sequence();
        let deadline = Instant::now() + CATCH_UP_GRACE;
        while progress.iter().any(|p| p.load(Ordering::Acquire) < final_seq) && Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }
    let _ = stop_tx.send(true);

    let mut traces = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.into_iter().enumerate() {
        let trace = task.await.map_err(|e| BenchError::Task {
            client: i,
            message: e.to_string(),
        })??;
        traces.push(trace);
    }
    let _ = gateway.shutdown().await;

    let log = sim.as_ref().map(|s| s.change_log()).unwrap_or_default();
    let mut metrics = Metrics {
        change_intervals: change_intervals(&log),
        ..Metrics::default()
    };
    let mut holds = Vec::new();
    for trace in &traces {
        let mut cm = analyze(trace, &log)?;
        holds.append(&mut cm.holds);
        metrics.absorb(cm);
    }
    metrics.responses_with_data = metrics.requests;
    metrics.payload_bytes = metrics.responses_with_data * spec.vars as u64 * spec.payload_bytes_per_var;
    metrics.mean_hold_time = mean(&holds);
    Ok(metrics)
}

async fn fixed_timer_client(
    c: &GatewayClient,
    clock: &dyn Clock,
    t0: tokio::time::Instant,
    period_ms: u64,
    duration: Duration,
) -> Result<Vec<Exchange>, ClientError> {
    let period = Duration::from_millis(period_ms);
    let scale = clock.scale();
    let mut out = Vec::new();
    let mut offset = Duration::ZERO;
    while offset < duration {
        tokio::time::sleep_until(t0 + virtual_to_real(offset, scale)).await;
        let sent = clock.now();
        let update = c.update(None).await?;
        let received = clock.now();
        out.push(Exchange {
            sent,
            received,
            sequence: update.sequence(),
            data: matches!(update, Update::Data { .. }),
        });
        offset += period;
    }
    Ok(out)
}

async fn event_client(
    c: &GatewayClient,
    clock: &dyn Clock,
    client_delay_ms: u64,
    mut stop: watch::Receiver<bool>,
    seen: &AtomicU64,
) -> Result<Vec<Exchange>, ClientError> {
    let delay = virtual_to_real(Duration::from_millis(client_delay_ms), clock.scale());
    let mut out: Vec<Exchange> = Vec::new();
    let mut since: Sequence = 0;
    loop {
        let pause = if out.is_empty() { Duration::ZERO } else { delay };
        let exchange = async {
            if !pause.is_zero() {
                tokio::time::sleep(pause).await;
            }
            let sent = clock.now();
            let update = c.update(Some(since)).await?;
            Ok::<_, ClientError>((sent, update, clock.now()))
        };
        let (sent, update, received) = tokio::select! {
            r = exchange => r?,
            _ = stop.wait_for(|s| *s) => break,
        };
        if let Update::Data { sequence, .. } = &update {
            since = *sequence;
            seen.store(since, Ordering::Release);
        }
        out.push(Exchange {
            sent,
            received,
            sequence: update.sequence(),
            data: matches!(update, Update::Data { .. }),
        });
    }
    Ok(out)
}

/// Runs every spec in order and tabulates the results.
pub fn compare(specs: &[RunSpec]) -> Result<Report, BenchError> {
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let metrics = run(spec)?;
        rows.push(ReportRow::from_run(spec, &metrics));
    }
    Ok(Report::new(rows))
}

/// `(produced, delivered, missed)` for one run, summed over clients.
pub fn miss_analysis(spec: &RunSpec) -> Result<(u64, u64, u64), BenchError> {
    let m = run(spec)?;
    Ok((m.changes_produced, m.changes_delivered, m.changes_missed))
}

/// The request and payload grid: rates 0, 15, 30 and 60 per minute with a
/// fixed-interval simulator, both strategies, 60 s each.
pub fn rate_grid_specs(time_scale: f64) -> Vec<RunSpec> {
    let sims = [None, Some(4000), Some(2000), Some(1000)].map(|ms| {
        ms.map(|interval_ms| SimConfig {
            mode: SimMode::Fixed { interval_ms },
            ..SimConfig::default()
        })
    });
    let strategies = [ClientStrategy::FixedTimer { period_ms: 1000 }, ClientStrategy::event()];
    strategies
        .iter()
        .flat_map(|&strategy| {
            sims.iter()
                .map(move |sim| RunSpec::new(strategy, sim.clone(), Duration::from_secs(60)).with_time_scale(time_scale))
        })
        .collect()
}

fn random_sim(max_interval_s: f64, seed: u64) -> SimConfig {
    SimConfig {
        mode: SimMode::Random { max_interval_s },
        rng_seed: seed,
        ..SimConfig::default()
    }
}

/// Full reproduction: request counts, payload bytes, inter-arrival times and
/// latency, each as its own table.
pub fn suite_tables(time_scale: f64) -> Result<Vec<SuiteTable>, BenchError> {
    let grid = compare(&rate_grid_specs(time_scale))?;
    let arrivals = compare(&[
        RunSpec::new(
            ClientStrategy::FixedTimer { period_ms: 1000 },
            Some(random_sim(6.0, 1)),
            Duration::from_secs(60),
        )
        .with_time_scale(time_scale),
        RunSpec::new(ClientStrategy::event(), Some(random_sim(6.0, 1)), Duration::from_secs(60))
            .with_time_scale(time_scale),
    ])?;
    // latency is sensitive to compression, so it always runs in real time
    let latency = compare(&[
        RunSpec::new(
            ClientStrategy::FixedTimer { period_ms: 1000 },
            Some(random_sim(3.0, 7)),
            Duration::from_secs(60),
        ),
        RunSpec::new(ClientStrategy::event(), Some(random_sim(3.0, 7)), Duration::from_secs(60)),
    ])?;
    Ok(vec![
        SuiteTable::new("Requests per 60 s by change rate", report::Family::Requests, grid.clone()),
        SuiteTable::new("Payload bytes per 60 s by change rate", report::Family::Payload, grid),
        SuiteTable::new("Request inter-arrival times", report::Family::InterArrival, arrivals),
        SuiteTable::new("Change-to-client latency", report::Family::Latency, latency),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(ms: i64) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(1_000_000 + ms).unwrap()
    }

    fn change(seq: Sequence, at_ms: i64) -> ChangeLogEntry {
        ChangeLogEntry {
            ordinal: seq,
            sequence: seq,
            at: t(at_ms),
            values_written: vec![],
            no_op: false,
        }
    }

    fn ex(sent: i64, received: i64, sequence: Sequence, data: bool) -> Exchange {
        Exchange {
            sent: t(sent),
            received: t(received),
            sequence,
            data,
        }
    }

    #[test]
    fn strategy_labels_round_trip() {
        for s in ["fixed:1000", "event", "event:5000", "event:5000:50"] {
            assert_eq!(s.parse::<ClientStrategy>().unwrap().label(), s);
        }
        assert!("fixed".parse::<ClientStrategy>().is_err());
        assert!("poll:5".parse::<ClientStrategy>().is_err());
    }

    #[test]
    fn sim_parsing() {
        assert_eq!(parse_sim("off").unwrap(), None);
        let s = parse_sim("random:6").unwrap().unwrap();
        assert_eq!(s.mode, SimMode::Random { max_interval_s: 6.0 });
        assert_eq!(sim_label(Some(&s)), "random:6");
        assert!(parse_sim("sine:3").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RunSpec::default().validate().is_ok());
        let short = RunSpec {
            duration: Duration::from_secs(5),
            ..RunSpec::default()
        };
        assert!(short.validate().is_err());
        let mut mismatched = RunSpec::default();
        mismatched.time_scale = 4.0;
        assert!(mismatched.validate().is_err());
        assert!(RunSpec::default().with_time_scale(4.0).validate().is_ok());
        let fast = RunSpec::new(ClientStrategy::FixedTimer { period_ms: 5 }, None, Duration::from_secs(60));
        assert!(fast.validate().is_err());
    }

    #[test]
    fn fixed_timer_overwrites_count_as_missed() {
        let log = vec![change(1, 100), change(2, 300), change(3, 900), change(4, 1500)];
        let exchanges = vec![
            ex(0, 2, 0, true),
            ex(1000, 1002, 3, true),
            ex(2000, 2002, 4, true),
        ];
        let m = analyze(&exchanges, &log).unwrap();
        assert_eq!((m.produced, m.delivered, m.missed), (4, 2, 2));
        assert_eq!(m.requests, 3);
        assert_eq!(m.latencies, vec![Duration::from_millis(102), Duration::from_millis(502)]);
        assert_eq!(m.inter_arrival, vec![Duration::from_millis(1000); 2]);
    }

    #[test]
    fn event_chain_delivers_everything() {
        let log = vec![change(1, 100), change(2, 105), change(3, 900)];
        let exchanges = vec![
            ex(0, 101, 1, true),
            ex(101, 106, 2, true),
            ex(106, 500, 2, false),
            ex(500, 901, 3, true),
        ];
        let m = analyze(&exchanges, &log).unwrap();
        assert_eq!((m.produced, m.delivered, m.missed), (3, 3, 0));
        assert_eq!((m.requests, m.heartbeats), (3, 1));
        assert_eq!(m.holds, vec![Duration::from_millis(101), Duration::from_millis(5), Duration::from_millis(401)]);
    }

    #[test]
    fn trailing_changes_are_missed() {
        let log = vec![change(1, 100), change(2, 200)];
        let m = analyze(&[ex(0, 150, 1, true)], &log).unwrap();
        assert_eq!((m.produced, m.delivered, m.missed), (2, 1, 1));
    }

    #[test]
    fn no_op_ticks_are_not_changes() {
        let mut noop = change(1, 200);
        noop.no_op = true;
        let log = vec![change(1, 100), noop];
        assert_eq!(change_intervals(&log), vec![]);
        let m = analyze(&[ex(0, 150, 1, true)], &log).unwrap();
        assert_eq!((m.produced, m.delivered, m.missed), (1, 1, 0));
    }

    #[test]
    fn receipt_before_change_is_clock_skew() {
        let log = vec![change(1, 500)];
        let err = analyze(&[ex(0, 400, 1, true)], &log).unwrap_err();
        assert!(matches!(err, BenchError::ClockSkew { sequence: 1, .. }), "{err}");
    }
}
