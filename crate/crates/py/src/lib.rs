use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tagpoll_core::bench::{self, ClientStrategy, ReportRow, RunSpec};
use tagpoll_core::hub::{Handle, HubConfig, Snapshot, TagWrite, WaitOutcome};
use tagpoll_core::security::{
    Actor, Phase1Outcome, Phase2Outcome, PolicyConfig, Role, SecurityPolicy as CorePolicy, SessionToken,
};
use tagpoll_core::sim::{ChangeCount, ChangeLogEntry, PlantSim as CoreSim, SimConfig, SimMode};
use tagpoll_core::{wire, ScaledClock};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn handle(raw: u32) -> PyResult<Handle> {
    Handle::new(raw).ok_or_else(|| PyValueError::new_err("handles start at 1"))
}

fn snapshot_items<'py>(py: Python<'py>, snap: &Snapshot) -> PyResult<Vec<Bound<'py, PyDict>>> {
    snap.items
        .iter()
        .map(|t| {
            let d = PyDict::new(py);
            d.set_item("name", &t.name)?;
            d.set_item("handle", t.handle.get())?;
            d.set_item("value", t.value)?;
            d.set_item("quality", t.quality)?;
            d.set_item("timestamp", wire::format_timestamp(t.timestamp))?;
            d.set_item("last_change_seq", t.last_change_seq)?;
            Ok(d)
        })
        .collect()
}

/// Shared tag table with change sequencing and long-poll waits.
#[pyclass(frozen)]
struct TagHub {
    inner: Arc<tagpoll_core::TagHub>,
}

#[pymethods]
impl TagHub {
    #[new]
    #[pyo3(signature = (names, history_depth = 1024, time_scale = 1.0))]
    fn new(names: Vec<String>, history_depth: usize, time_scale: f64) -> PyResult<Self> {
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(PyValueError::new_err("time_scale must be > 0"));
        }
        let config = HubConfig {
            history_depth,
            ..HubConfig::default()
        };
        let hub = tagpoll_core::TagHub::with_config(config, Arc::new(ScaledClock::new(time_scale)));
        hub.register_tags(&names).map_err(value_err)?;
        Ok(Self { inner: Arc::new(hub) })
    }

    #[getter]
    fn sequence(&self) -> u64 {
        self.inner.current_sequence()
    }

    fn __len__(&self) -> usize {
        self.inner.tag_count()
    }

    fn handle_of(&self, name: &str) -> Option<u32> {
        self.inner.handle_of(name).map(Handle::get)
    }

    /// Writes `(handle, value, quality)` tuples as one batch; `quality=None` keeps the current one.
    /// Returns `(changed, sequence)`.
    fn write(&self, writes: Vec<(u32, f64, Option<u16>)>) -> PyResult<(bool, u64)> {
        let batch = writes
            .into_iter()
            .map(|(h, value, quality)| Ok(TagWrite { handle: handle(h)?, value, quality }))
            .collect::<PyResult<Vec<_>>>()?;
        let out = self.inner.write_batch(&batch).map_err(value_err)?;
        Ok((out.changed, out.sequence))
    }

    fn set(&self, h: u32, value: f64) -> PyResult<(bool, u64)> {
        self.write(vec![(h, value, None)])
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<(u64, Vec<Bound<'py, PyDict>>)> {
        let snap = self.inner.snapshot();
        Ok((snap.sequence, snapshot_items(py, &snap)?))
    }

    /// Wire body plus its sequence.
    fn encode(&self) -> (String, u64) {
        let w = wire::format_snapshot(&self.inner.snapshot());
        (w.body, w.sequence)
    }

    /// Blocks (without the GIL) until the sequence passes `since`.
    /// Returns `(sequence, items)` or `None` on timeout.
    #[pyo3(signature = (since, max_wait_s = 30.0))]
    fn wait_for_change<'py>(
        &self,
        py: Python<'py>,
        since: u64,
        max_wait_s: f64,
    ) -> PyResult<Option<(u64, Vec<Bound<'py, PyDict>>)>> {
        let wait = Duration::try_from_secs_f64(max_wait_s).map_err(value_err)?;
        let hub = self.inner.clone();
        match py.detach(move || hub.wait_for_change(since, wait)).map_err(value_err)? {
            WaitOutcome::Changed(s) => Ok(Some((s.sequence, snapshot_items(py, &s)?))),
            WaitOutcome::TimedOut(_) => Ok(None),
        }
    }
}

/// Splits a wire body into `(value, quality, timestamp)` tuples.
#[pyfunction]
fn parse_snapshot(body: &str) -> PyResult<Vec<(f64, u16, String)>> {
    let items = wire::parse_snapshot(body).map_err(value_err)?;
    Ok(items
        .into_iter()
        .map(|i| (i.value, i.quality, wire::format_timestamp(i.timestamp)))
        .collect())
}

#[pyfunction]
fn parse_setpoint_values(body: &str) -> PyResult<Vec<f64>> {
    wire::parse_setpoint_values(body).map_err(value_err)
}

fn log_entry<'py>(py: Python<'py>, e: &ChangeLogEntry) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ordinal", e.ordinal)?;
    d.set_item("sequence", e.sequence)?;
    d.set_item("at", wire::format_timestamp(e.at))?;
    d.set_item("values", e.values_written.clone())?;
    d.set_item("no_op", e.no_op)?;
    Ok(d)
}

/// Random-walk plant that writes integer values into a hub.
#[pyclass(frozen)]
struct PlantSim {
    inner: CoreSim,
}

#[pymethods]
impl PlantSim {
    #[new]
    #[pyo3(signature = (hub, mode = "fixed", interval_ms = 1000, max_interval_s = 3.0, count = None, seed = 0, lo = 0, hi = 100, time_scale = 1.0, handles = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        hub: &TagHub,
        mode: &str,
        interval_ms: u64,
        max_interval_s: f64,
        count: Option<u32>,
        seed: u64,
        lo: i64,
        hi: i64,
        time_scale: f64,
        handles: Option<Vec<u32>>,
    ) -> PyResult<Self> {
        let mode = match mode {
            "fixed" => SimMode::Fixed { interval_ms },
            "random" => SimMode::Random { max_interval_s },
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let tag_handles = match handles {
            Some(hs) => hs.into_iter().map(handle).collect::<PyResult<_>>()?,
            None => (1..=hub.inner.tag_count() as u32).filter_map(Handle::new).collect(),
        };
        let config = SimConfig {
            mode,
            count: count.map_or(ChangeCount::Unlimited, ChangeCount::Limited),
            value_range: (lo, hi),
            rng_seed: seed,
            tag_handles,
            time_scale,
        };
        let inner = CoreSim::new(hub.inner.clone(), config).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn running(&self) -> bool {
        self.inner.status() == tagpoll_core::sim::SimStatus::Running
    }

    /// One synchronous change, ignoring the timer.
    fn step<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let e = self.inner.step().map_err(runtime_err)?;
        log_entry(py, &e)
    }

    fn start(&self) -> PyResult<()> {
        self.inner.start().map_err(runtime_err)
    }

    /// Returns the number of changes written.
    fn stop(&self) -> PyResult<usize> {
        self.inner.stop().map_err(runtime_err)
    }

    fn wait_stopped(&self, py: Python<'_>, timeout_s: f64) -> PyResult<bool> {
        let t = Duration::try_from_secs_f64(timeout_s).map_err(value_err)?;
        Ok(py.detach(|| self.inner.wait_stopped(t)))
    }

    fn change_log<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.change_log().iter().map(|e| log_entry(py, e)).collect()
    }
}

fn phase1_label(o: &Phase1Outcome) -> &'static str {
    match o {
        Phase1Outcome::Phase1Ok(_) => "phase1_ok",
        Phase1Outcome::InvalidUser => "invalid_user",
        Phase1Outcome::InvalidPassword => "invalid_password",
        Phase1Outcome::IpBlocked => "ip_blocked",
        Phase1Outcome::DuplicateBlocked => "duplicate_blocked",
    }
}

/// Two-phase login, roles and the untrusted-machine list.
#[pyclass(frozen)]
struct SecurityPolicy {
    inner: CorePolicy,
}

#[pymethods]
impl SecurityPolicy {
    /// With no path the tables live only in memory.
    #[new]
    #[pyo3(signature = (path = None, hash_iterations = None))]
    fn new(path: Option<PathBuf>, hash_iterations: Option<u32>) -> PyResult<Self> {
        let mut config = PolicyConfig::default();
        if let Some(n) = hash_iterations {
            config.hash_iterations = n;
        }
        let clock = Arc::new(ScaledClock::realtime());
        let inner = match path {
            Some(p) => CorePolicy::open(p, config, clock).map_err(runtime_err)?,
            None => CorePolicy::in_memory(config, clock),
        };
        Ok(Self { inner })
    }

    fn add_user(&self, username: &str, password: &str, role: &str, secret: &str) -> PyResult<()> {
        let role: Role = role.parse().map_err(value_err)?;
        self.inner
            .admin_add_user(Actor::Local, username, password, role, secret)
            .map_err(value_err)
    }

    /// Returns `(outcome, token)`; token is set only for `phase1_ok`.
    fn login_phase1(&self, username: &str, password: &str, ip: &str) -> PyResult<(&'static str, Option<String>)> {
        let o = self.inner.login_phase1(username, password, ip).map_err(runtime_err)?;
        let token = match o {
            Phase1Outcome::Phase1Ok(t) => Some(t.to_string()),
            _ => None,
        };
        Ok((phase1_label(&o), token))
    }

    fn login_phase2(&self, token: &str, code: &str, ip: &str) -> PyResult<String> {
        let t: SessionToken = token.parse().map_err(|_| PyValueError::new_err("malformed token"))?;
        Ok(match self.inner.login_phase2(t, code, ip).map_err(runtime_err)? {
            Phase2Outcome::Authenticated(role) => format!("authenticated:{}", role.as_str()),
            Phase2Outcome::SecretWrong => "secret_wrong".into(),
            Phase2Outcome::SecretExpired => "secret_expired".into(),
            Phase2Outcome::InvalidToken => "invalid_token".into(),
            Phase2Outcome::IpBlocked => "ip_blocked".into(),
        })
    }

    fn logout(&self, token: &str) -> PyResult<()> {
        let t: SessionToken = token.parse().map_err(|_| PyValueError::new_err("malformed token"))?;
        self.inner.logout(t);
        Ok(())
    }

    /// `(username, role, logged, ip)` rows.
    fn list_users(&self) -> PyResult<Vec<(String, &'static str, bool, Option<String>)>> {
        let users = self.inner.admin_list_users(Actor::Local).map_err(value_err)?;
        Ok(users
            .into_iter()
            .map(|u| (u.username, u.role.as_str(), u.logged, u.ip))
            .collect())
    }

    /// `(ip, added_at, reason)` rows.
    fn list_untrusted(&self) -> PyResult<Vec<(String, String, &'static str)>> {
        let rows = self.inner.admin_list_untrusted(Actor::Local).map_err(value_err)?;
        Ok(rows
            .into_iter()
            .map(|u| (u.ip, wire::format_timestamp(u.added_at), u.reason.as_str()))
            .collect())
    }

    fn remove_untrusted(&self, ip: &str) -> PyResult<()> {
        self.inner.admin_remove_untrusted(Actor::Local, ip).map_err(value_err)
    }

    fn is_untrusted(&self, ip: &str) -> bool {
        self.inner.is_untrusted(ip)
    }

    fn remaining_trials(&self, ip: &str) -> u8 {
        self.inner.remaining_trials(ip)
    }
}

fn row_dict<'py>(py: Python<'py>, row: &ReportRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let value = serde_json::to_value(row).map_err(runtime_err)?;
    let serde_json::Value::Object(map) = value else {
        return Err(PyRuntimeError::new_err("report row is not an object"));
    };
    for (k, v) in map {
        match v {
            serde_json::Value::String(s) => d.set_item(k, s)?,
            serde_json::Value::Number(n) if n.is_u64() => d.set_item(k, n.as_u64())?,
            serde_json::Value::Number(n) => d.set_item(k, n.as_f64())?,
            serde_json::Value::Null => d.set_item(k, py.None())?,
            other => d.set_item(k, other.to_string())?,
        }
    }
    Ok(d)
}

/// Runs one benchmark against an in-process gateway and returns a report row.
/// `strategy` is `fixed:<ms>`, `event`, `event:<wait_ms>` or `event:<wait_ms>:<delay_ms>`;
/// `sim` is `fixed:<ms>`, `random:<s>` or `off`.
#[pyfunction]
#[pyo3(signature = (strategy, sim, duration_s, time_scale = 1.0, clients = 1, seed = 0))]
fn run_bench<'py>(
    py: Python<'py>,
    strategy: &str,
    sim: &str,
    duration_s: f64,
    time_scale: f64,
    clients: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let strategy: ClientStrategy = strategy.parse().map_err(value_err)?;
    let mut sim = bench::parse_sim(sim).map_err(value_err)?;
    if let Some(s) = sim.as_mut() {
        s.rng_seed = seed;
    }
    let duration = Duration::try_from_secs_f64(duration_s).map_err(value_err)?;
    let spec = RunSpec::new(strategy, sim, duration)
        .with_time_scale(time_scale)
        .with_clients(clients);
    let metrics = py.detach(|| bench::run(&spec)).map_err(runtime_err)?;
    row_dict(py, &ReportRow::from_run(&spec, &metrics))
}

#[pymodule]
fn tagpoll(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TagHub>()?;
    m.add_class::<PlantSim>()?;
    m.add_class::<SecurityPolicy>()?;
    m.add_function(wrap_pyfunction!(parse_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(parse_setpoint_values, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add("CSV_COLUMNS", bench::CSV_COLUMNS.to_vec())?;
    Ok(())
}
