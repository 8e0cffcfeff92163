//! In-process tag store with OPC DA group/item semantics.
//!
//! Tags are registered once and addressed by dense client handles. A batch
//! write that changes at least one value or quality bumps the hub sequence by
//! exactly one and wakes every blocked waiter, both synchronous
//! ([`TagHub::wait_for_change`]) and async ([`TagHub::wait_for_change_async`]).
//!
//! The hub keeps a bounded history of the snapshots produced by change
//! events. A waiter passing `since = k` receives the snapshot for sequence
//! `k + 1`, so a client that chains `since` from each response sees every
//! intermediate state in order instead of only the latest one.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use parking_lot::{Condvar, Mutex};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::{broadcast, watch};

use crate::clock::{Clock, ScaledClock};

pub type Sequence = u64;

pub const QUALITY_GOOD: u16 = 192;
pub const QUALITY_BAD: u16 = 0;

/// Client handle of a registered tag, assigned densely from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Handle(u32);

impl Handle {
    /// Returns `None` for 0, which is never a valid handle.
    pub fn new(raw: u32) -> Option<Self> {
        (raw > 0).then_some(Self(raw))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagRecord {
    pub name: String,
    pub handle: Handle,
    pub value: f64,
    pub quality: u16,
    pub timestamp: DateTime<Utc>,
    pub last_change_seq: Sequence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupConfig {
    pub name: String,
    /// Kept as metadata only; change events are delivered immediately.
    pub update_rate_ms: u32,
    pub active: bool,
    pub subscribed: bool,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            name: "Group1".to_owned(),
            update_rate_ms: 300,
            active: true,
            subscribed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub sequence: Sequence,
    pub taken_at: DateTime<Utc>,
    pub items: Vec<TagRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeNotice {
    pub sequence: Sequence,
    pub at: DateTime<Utc>,
    pub changed_handles: Vec<Handle>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagWrite {
    pub handle: Handle,
    pub value: f64,
    pub quality: Option<u16>,
}

impl TagWrite {
    pub fn value(handle: Handle, value: f64) -> Self {
        Self {
            handle,
            value,
            quality: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteOutcome {
    pub changed: bool,
    pub sequence: Sequence,
    /// Full-precision clock reading taken while the write lock was held.
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WaitOutcome {
    Changed(Arc<Snapshot>),
    TimedOut(Sequence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HubConfig {
    /// Number of event snapshots retained for `since` replay.
    pub history_depth: usize,
    /// Quality codes accepted in addition to 0 and 192.
    pub extra_qualities: Vec<u16>,
    pub group: GroupConfig,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            history_depth: 1024,
            extra_qualities: Vec::new(),
            group: GroupConfig::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HubError {
    #[error("tag list is empty")]
    NoTags,
    #[error("tag name at position {0} is blank")]
    BlankName(usize),
    #[error("duplicate tag name {0:?}")]
    DuplicateName(String),
    #[error("tags are already registered")]
    AlreadyRegistered,
    #[error("no tags registered")]
    NotRegistered,
    #[error("unknown handle {0}")]
    UnknownHandle(u32),
    #[error("write batch is empty")]
    EmptyBatch,
    #[error("quality code {0} is not allowed")]
    InvalidQuality(u16),
    #[error("value for handle {0} is not finite")]
    NonFiniteValue(Handle),
    #[error("update rate must be at least 1 ms")]
    InvalidUpdateRate,
}

#[derive(Debug)]
struct HubState {
    registered: bool,
    group: GroupConfig,
    tags: Vec<TagRecord>,
    sequence: Sequence,
    current: Arc<Snapshot>,
    history: VecDeque<Arc<Snapshot>>,
}

impl HubState {
    fn build_snapshot(&self, taken_at: DateTime<Utc>) -> Arc<Snapshot> {
        Arc::new(Snapshot {
            sequence: self.sequence,
            taken_at,
            items: self.tags.clone(),
        })
    }

    /// Snapshot a waiter with `since` should receive, if one is due.
    fn next_after(&self, since: Sequence) -> Option<Arc<Snapshot>> {
        if self.sequence == since {
            return None;
        }
        if since > self.sequence {
            // Client is ahead of the hub (for instance after a restart): resync.
            return Some(self.current.clone());
        }
        let oldest = self.history.front().map_or(self.sequence, |s| s.sequence);
        if since < oldest {
            return self.history.front().cloned();
        }
        let offset = (since + 1 - oldest) as usize;
        self.history.get(offset).cloned()
    }
}

pub struct TagHub {
    state: Mutex<HubState>,
    wake: Condvar,
    seq_tx: watch::Sender<Sequence>,
    notices: broadcast::Sender<ChangeNotice>,
    clock: Arc<dyn Clock>,
    history_depth: usize,
    allowed_qualities: Vec<u16>,
}

impl fmt::Debug for TagHub {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TagHub")
            .field("sequence", &self.current_sequence())
            .field("clock", &self.clock)
            .finish_non_exhaustive()
    }
}

impl Default for TagHub {
    fn default() -> Self {
        Self::new()
    }
}

fn truncate_ms(at: DateTime<Utc>) -> DateTime<Utc> {
    at.duration_trunc(TimeDelta::milliseconds(1)).unwrap_or(at)
}

impl TagHub {
    pub fn new() -> Self {
        Self::with_config(HubConfig::default(), Arc::new(ScaledClock::realtime()))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Self::with_config(HubConfig::default(), clock)
    }

    pub fn with_config(config: HubConfig, clock: Arc<dyn Clock>) -> Self {
        let mut allowed_qualities = vec![QUALITY_BAD, QUALITY_GOOD];
        allowed_qualities.extend(config.extra_qualities);
        let now = clock.now();
        let empty = Arc::new(Snapshot {
            sequence: 0,
            taken_at: now,
            items: Vec::new(),
        });
        let (seq_tx, _) = watch::channel(0);
        let (notices, _) = broadcast::channel(1024);
        Self {
            state: Mutex::new(HubState {
                registered: false,
                group: config.group,
                tags: Vec::new(),
                sequence: 0,
                current: empty,
                history: VecDeque::new(),
            }),
            wake: Condvar::new(),
            seq_tx,
            notices,
            clock,
            history_depth: config.history_depth.max(1),
            allowed_qualities,
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn register_tags<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Handle>, HubError> {
        let mut state = self.state.lock();
        if state.registered {
            return Err(HubError::AlreadyRegistered);
        }
        if names.is_empty() {
            return Err(HubError::NoTags);
        }
        let mut seen = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let name = name.as_ref();
            if name.trim().is_empty() {
                return Err(HubError::BlankName(i));
            }
            if seen.insert(name, i).is_some() {
                return Err(HubError::DuplicateName(name.to_owned()));
            }
        }

        let now = truncate_ms(self.clock.now());
        state.tags = names
            .iter()
            .enumerate()
            .map(|(i, name)| TagRecord {
                name: name.as_ref().to_owned(),
                handle: Handle(i as u32 + 1),
                value: 0.0,
                quality: QUALITY_GOOD,
                timestamp: now,
                last_change_seq: 0,
            })
            .collect();
        state.sequence = 0;
        state.registered = true;
        let snapshot = state.build_snapshot(now);
        state.current = snapshot.clone();
        state.history.clear();
        state.history.push_back(snapshot);
        Ok(state.tags.iter().map(|t| t.handle).collect())
    }

    pub fn is_registered(&self) -> bool {
        self.state.lock().registered
    }

    pub fn tag_count(&self) -> usize {
        self.state.lock().tags.len()
    }

    pub fn handle_of(&self, name: &str) -> Option<Handle> {
        let state = self.state.lock();
        state.tags.iter().find(|t| t.name == name).map(|t| t.handle)
    }

    pub fn group(&self) -> GroupConfig {
        self.state.lock().group.clone()
    }

    /// Replaces the group settings. Deactivating the group stops change
    /// events; writes keep updating values.
    pub fn configure_group(&self, group: GroupConfig) -> Result<(), HubError> {
        if group.update_rate_ms == 0 {
            return Err(HubError::InvalidUpdateRate);
        }
        self.state.lock().group = group;
        Ok(())
    }

    pub fn set_active(&self, active: bool) {
        self.state.lock().group.active = active;
    }

    pub fn write_batch(&self, writes: &[TagWrite]) -> Result<WriteOutcome, HubError> {
        if writes.is_empty() {
            return Err(HubError::EmptyBatch);
        }
        let mut state = self.state.lock();
        if !state.registered {
            return Err(HubError::NotRegistered);
        }
        for w in writes {
            if w.handle.index() >= state.tags.len() {
                return Err(HubError::UnknownHandle(w.handle.get()));
            }
            if !w.value.is_finite() {
                return Err(HubError::NonFiniteValue(w.handle));
            }
            if let Some(q) = w.quality {
                if !self.allowed_qualities.contains(&q) {
                    return Err(HubError::InvalidQuality(q));
                }
            }
        }

        let at = self.clock.now();
        // Later writes to the same handle within one batch win.
        let mut pending: Vec<Option<(f64, u16)>> = vec![None; state.tags.len()];
        for w in writes {
            let tag = &state.tags[w.handle.index()];
            let quality = w.quality.unwrap_or(tag.quality);
            pending[w.handle.index()] = Some((w.value, quality));
        }
        let changed_handles: Vec<Handle> = pending
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let (value, quality) = (*p)?;
                let tag = &state.tags[i];
                (value.to_bits() != tag.value.to_bits() || quality != tag.quality)
                    .then_some(tag.handle)
            })
            .collect();

        if changed_handles.is_empty() {
            return Ok(WriteOutcome {
                changed: false,
                sequence: state.sequence,
                at,
            });
        }

        let active = state.group.active;
        let next_seq = state.sequence + 1;
        for &h in &changed_handles {
            let (value, quality) = pending[h.index()].expect("changed handle has a pending write");
            let tag = &mut state.tags[h.index()];
            tag.value = value;
            tag.quality = quality;
            tag.timestamp = tag.timestamp.max(truncate_ms(at));
            if active {
                tag.last_change_seq = next_seq;
            }
        }

        if !active {
            let snapshot = state.build_snapshot(at);
            state.current = snapshot;
            return Ok(WriteOutcome {
                changed: true,
                sequence: state.sequence,
                at,
            });
        }

        state.sequence = next_seq;
        let snapshot = state.build_snapshot(at);
        state.current = snapshot.clone();
        state.history.push_back(snapshot);
        while state.history.len() > self.history_depth {
            state.history.pop_front();
        }
        drop(state);

        self.wake.notify_all();
        self.seq_tx.send_replace(next_seq);
        let _ = self.notices.send(ChangeNotice {
            sequence: next_seq,
            at,
            changed_handles,
        });
        Ok(WriteOutcome {
            changed: true,
            sequence: next_seq,
            at,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.state.lock().current.clone()
    }

    pub fn current_sequence(&self) -> Sequence {
        self.state.lock().sequence
    }

    /// Receiver for change notices; one notice is sent per changing batch.
    pub fn subscribe_notices(&self) -> broadcast::Receiver<ChangeNotice> {
        self.notices.subscribe()
    }

    /// Non-blocking form of the wait: the snapshot due for `since`, if any.
    pub fn changed_since(&self, since: Sequence) -> Result<Option<Arc<Snapshot>>, HubError> {
        let state = self.state.lock();
        if !state.registered {
            return Err(HubError::NotRegistered);
        }
        Ok(state.next_after(since))
    }

    /// Blocks the calling thread until the hub moves past `since` or
    /// `max_wait` elapses.
    pub fn wait_for_change(&self, since: Sequence, max_wait: Duration) -> Result<WaitOutcome, HubError> {
        let deadline = Instant::now() + max_wait;
        let mut state = self.state.lock();
        if !state.registered {
            return Err(HubError::NotRegistered);
        }
        loop {
            if let Some(snapshot) = state.next_after(since) {
                return Ok(WaitOutcome::Changed(snapshot));
            }
            if self.wake.wait_until(&mut state, deadline).timed_out() {
                return Ok(match state.next_after(since) {
                    Some(snapshot) => WaitOutcome::Changed(snapshot),
                    None => WaitOutcome::TimedOut(state.sequence),
                });
            }
        }
    }

    /// Async counterpart of [`TagHub::wait_for_change`]; must run inside a
    /// tokio runtime with the time driver enabled.
    pub async fn wait_for_change_async(
        &self,
        since: Sequence,
        max_wait: Duration,
    ) -> Result<WaitOutcome, HubError> {
        let deadline = tokio::time::Instant::now() + max_wait;
        let mut rx = self.seq_tx.subscribe();
        loop {
            if let Some(snapshot) = self.changed_since(since)? {
                return Ok(WaitOutcome::Changed(snapshot));
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(_) => continue,
                Err(_) => {
                    return Ok(match self.changed_since(since)? {
                        Some(snapshot) => WaitOutcome::Changed(snapshot),
                        None => WaitOutcome::TimedOut(self.current_sequence()),
                    })
                }
            }
        }
    }
}
