//! Two-phase authentication and authorization policy.
//!
//! Policy rules enforced here:
//!
//! - at most one fully authenticated session per username;
//! - a correct login for an already logged user disconnects both parties and
//!   blacklists both machines;
//! - three failed phase-1 attempts from one IP blacklist that IP;
//! - a wrong or late company secret code blacklists the machine;
//! - role decides what a full session may do.
//!
//! All transitions run under one write lock, so the duplicate-login check and
//! session creation cannot interleave with another login for the same user.

mod password;
pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::clock::{Clock, ScaledClock};

pub use password::{hash_password, verify_password, DEFAULT_HASH_ITERATIONS};
pub use store::{StoreError, StoreTables};

pub const BOOTSTRAP_ADMIN: &str = "admin";
pub const BOOTSTRAP_PASSWORD: &str = "changeme";
pub const BOOTSTRAP_SECRET: &str = "0000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Operator,
    User,
}

impl Role {
    pub fn allows(self, action: Action) -> bool {
        match self {
            Role::Admin => true,
            Role::Operator => matches!(action, Action::Monitor | Action::WriteSetpoints),
            Role::User => action == Action::Monitor,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Operator => "operator",
            Role::User => "user",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "admin" => Ok(Role::Admin),
            "operator" => Ok(Role::Operator),
            "user" => Ok(Role::User),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Monitor,
    WriteSetpoints,
    Admin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UntrustReason {
    TrialsExhausted,
    DuplicateLogin,
    SecretFailed,
    SecretTimeout,
}

impl UntrustReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UntrustReason::TrialsExhausted => "TrialsExhausted",
            UntrustReason::DuplicateLogin => "DuplicateLogin",
            UntrustReason::SecretFailed => "SecretFailed",
            UntrustReason::SecretTimeout => "SecretTimeout",
        }
    }
}

impl FromStr for UntrustReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TrialsExhausted" => Ok(UntrustReason::TrialsExhausted),
            "DuplicateLogin" => Ok(UntrustReason::DuplicateLogin),
            "SecretFailed" => Ok(UntrustReason::SecretFailed),
            "SecretTimeout" => Ok(UntrustReason::SecretTimeout),
            other => Err(format!("unknown untrust reason {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub username: String,
    pub password_digest: String,
    pub role: Role,
    pub logged: bool,
    pub current_ip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UntrustedIp {
    pub ip: String,
    pub added_at: DateTime<Utc>,
    pub reason: UntrustReason,
}

/// 128-bit random session token, rendered as 32 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionToken(u128);

impl SessionToken {
    fn generate() -> Self {
        Self(rand::rng().random())
    }
}

impl fmt::Display for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Only a prefix, tokens are credentials.
        write!(f, "SessionToken({:08x}…)", (self.0 >> 96) as u32)
    }
}

impl FromStr for SessionToken {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 {
            return Err(());
        }
        u128::from_str_radix(s, 16).map(Self).map_err(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Phase1,
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub token: SessionToken,
    pub username: String,
    pub ip: String,
    pub phase: Phase,
    pub role: Role,
    pub phase1_at: DateTime<Utc>,
    pub phase2_deadline: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase1Outcome {
    Phase1Ok(SessionToken),
    InvalidUser,
    InvalidPassword,
    IpBlocked,
    DuplicateBlocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase2Outcome {
    Authenticated(Role),
    SecretWrong,
    SecretExpired,
    InvalidToken,
    /// The machine was blacklisted after phase 1 completed.
    IpBlocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denial {
    /// No session, or the session has not finished phase 2.
    Unauthenticated,
    /// Full session whose role lacks the right.
    Forbidden,
}

/// Who performs an admin operation.
#[derive(Debug, Clone, Copy)]
pub enum Actor {
    Session(SessionToken),
    /// Operator with direct access to the store file (the admin CLI).
    Local,
}

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("permission denied")]
    Denied(Denial),
    #[error("This username is already used,try another one")]
    DuplicateUsername,
    #[error("secret code already assigned to another user")]
    DuplicateSecret,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserStatus {
    pub username: String,
    pub logged: bool,
    pub ip: Option<String>,
    pub role: Role,
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub max_trials: u8,
    pub phase2_timeout: Duration,
    pub hash_iterations: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            max_trials: 3,
            phase2_timeout: Duration::from_secs(30),
            hash_iterations: DEFAULT_HASH_ITERATIONS,
        }
    }
}

#[derive(Debug, Default)]
struct PolicyState {
    users: BTreeMap<String, UserRecord>,
    secrets: BTreeMap<String, String>,
    untrusted: BTreeMap<String, UntrustedIp>,
    sessions: HashMap<SessionToken, Session>,
    fail_counters: HashMap<String, u8>,
}

impl PolicyState {
    fn untrust(&mut self, ip: &str, reason: UntrustReason, at: DateTime<Utc>) {
        if ip.is_empty() {
            return;
        }
        self.untrusted.entry(ip.to_owned()).or_insert_with(|| UntrustedIp {
            ip: ip.to_owned(),
            added_at: at,
            reason,
        });
        self.fail_counters.remove(ip);
    }

    fn end_sessions_of(&mut self, username: &str) {
        self.sessions.retain(|_, s| s.username != username);
        if let Some(user) = self.users.get_mut(username) {
            user.logged = false;
            user.current_ip = None;
        }
    }

    fn destroy(&mut self, token: SessionToken) -> Option<Session> {
        let session = self.sessions.remove(&token)?;
        if session.phase == Phase::Full {
            if let Some(user) = self.users.get_mut(&session.username) {
                user.logged = false;
                user.current_ip = None;
            }
        }
        Some(session)
    }

    fn full_session(&self, token: SessionToken) -> Result<&Session, Denial> {
        match self.sessions.get(&token) {
            Some(s) if s.phase == Phase::Full => Ok(s),
            _ => Err(Denial::Unauthenticated),
        }
    }

    fn tables(&self) -> StoreTables {
        StoreTables {
            users: self
                .users
                .values()
                .map(|u| (u.username.clone(), u.password_digest.clone(), u.role))
                .collect(),
            secrets: self.secrets.iter().map(|(u, c)| (u.clone(), c.clone())).collect(),
            untrusted: self.untrusted.values().cloned().collect(),
        }
    }
}

fn check_field(what: &str, value: &str) -> Result<(), AdminError> {
    if value.trim().is_empty() {
        return Err(AdminError::InvalidInput(format!("{what} is empty")));
    }
    if value.chars().any(|c| c == '\t' || c == '\n' || c == '\r') {
        return Err(AdminError::InvalidInput(format!("{what} contains tab or newline")));
    }
    Ok(())
}

/// The security state machine, optionally backed by a store file that is
/// rewritten after every change to users, secrets or untrusted IPs.
pub struct SecurityPolicy {
    state: RwLock<PolicyState>,
    clock: Arc<dyn Clock>,
    config: PolicyConfig,
    store_path: Option<PathBuf>,
    save_lock: Mutex<()>,
}

impl fmt::Debug for SecurityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecurityPolicy")
            .field("store_path", &self.store_path)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl SecurityPolicy {
    /// Empty in-memory policy with no users.
    pub fn in_memory(config: PolicyConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            state: RwLock::new(PolicyState::default()),
            clock,
            config,
            store_path: None,
            save_lock: Mutex::new(()),
        }
    }

    /// Loads the store at `path`. A missing file yields a store holding only
    /// the bootstrap admin, which is written back immediately.
    pub fn open(path: impl AsRef<Path>, config: PolicyConfig, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut policy = Self::in_memory(config, clock);
        match store::read(&path)? {
            Some(tables) => policy.install(tables)?,
            None => {
                tracing::warn!(
                    "no security store at {}; created bootstrap account {BOOTSTRAP_ADMIN:?} with default \
                     password and secret, change them",
                    path.display()
                );
                policy.bootstrap();
                policy.store_path = Some(path);
                policy.persist()?;
                return Ok(policy);
            }
        }
        policy.store_path = Some(path);
        Ok(policy)
    }

    pub fn default_open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open(path, PolicyConfig::default(), Arc::new(ScaledClock::realtime()))
    }

    fn bootstrap(&mut self) {
        let digest = hash_password(BOOTSTRAP_PASSWORD, self.config.hash_iterations);
        let state = self.state.get_mut();
        state.users.insert(
            BOOTSTRAP_ADMIN.to_owned(),
            UserRecord {
                username: BOOTSTRAP_ADMIN.to_owned(),
                password_digest: digest,
                role: Role::Admin,
                logged: false,
                current_ip: None,
            },
        );
        state
            .secrets
            .insert(BOOTSTRAP_ADMIN.to_owned(), BOOTSTRAP_SECRET.to_owned());
    }

    fn install(&mut self, tables: StoreTables) -> Result<(), StoreError> {
        let state = self.state.get_mut();
        for (username, digest, role) in tables.users {
            state.users.insert(
                username.clone(),
                UserRecord {
                    username,
                    password_digest: digest,
                    role,
                    logged: false,
                    current_ip: None,
                },
            );
        }
        state.secrets = tables.secrets.into_iter().collect();
        state.untrusted = tables.untrusted.into_iter().map(|u| (u.ip.clone(), u)).collect();
        Ok(())
    }

    pub fn store_path(&self) -> Option<&Path> {
        self.store_path.as_deref()
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    /// Writes the persistent tables to `path` atomically.
    pub fn save_to(&self, path: &Path) -> Result<(), StoreError> {
        let _guard = self.save_lock.lock();
        let tables = self.state.read().tables();
        store::write(path, &tables)
    }

    pub fn tables(&self) -> StoreTables {
        self.state.read().tables()
    }

    fn persist(&self) -> Result<(), StoreError> {
        match &self.store_path {
            Some(path) => self.save_to(path),
            None => Ok(()),
        }
    }

    fn persist_logged(&self) {
        if let Err(e) = self.persist() {
            tracing::error!("failed to persist security store: {e}");
        }
    }

    pub fn login_phase1(&self, username: &str, password: &str, ip: &str) -> Result<Phase1Outcome, StoreError> {
        let now = self.clock.now();
        let (outcome, dirty) = {
            let mut state = self.state.write();
            self.phase1_locked(&mut state, username.trim(), password.trim(), ip, now)
        };
        if dirty {
            self.persist()?;
        }
        Ok(outcome)
    }

    fn phase1_locked(
        &self,
        state: &mut PolicyState,
        username: &str,
        password: &str,
        ip: &str,
        now: DateTime<Utc>,
    ) -> (Phase1Outcome, bool) {
        if state.untrusted.contains_key(ip) {
            return (Phase1Outcome::IpBlocked, false);
        }
        let verdict = match state.users.get(username) {
            None => Err(Phase1Outcome::InvalidUser),
            Some(user) if !verify_password(password, &user.password_digest) => Err(Phase1Outcome::InvalidPassword),
            Some(user) => Ok((user.role, user.logged, user.current_ip.clone())),
        };
        let (role, logged, previous_ip) = match verdict {
            Ok(v) => v,
            Err(failure) => {
                let max = self.config.max_trials;
                let remaining = state.fail_counters.entry(ip.to_owned()).or_insert(max);
                *remaining = remaining.saturating_sub(1);
                if *remaining == 0 {
                    state.untrust(ip, UntrustReason::TrialsExhausted, now);
                    return (failure, true);
                }
                return (failure, false);
            }
        };

        if logged {
            state.end_sessions_of(username);
            state.untrust(ip, UntrustReason::DuplicateLogin, now);
            if let Some(prev) = previous_ip.filter(|p| p != ip) {
                state.untrust(&prev, UntrustReason::DuplicateLogin, now);
            }
            return (Phase1Outcome::DuplicateBlocked, true);
        }

        state.fail_counters.remove(ip);
        // A newer phase-1 login supersedes any pending one for the same user.
        state
            .sessions
            .retain(|_, s| !(s.username == username && s.phase == Phase::Phase1));
        let token = SessionToken::generate();
        let deadline = now + chrono::Duration::from_std(self.config.phase2_timeout).unwrap_or(chrono::Duration::MAX);
        state.sessions.insert(
            token,
            Session {
                token,
                username: username.to_owned(),
                ip: ip.to_owned(),
                phase: Phase::Phase1,
                role,
                phase1_at: now,
                phase2_deadline: deadline,
            },
        );
        (Phase1Outcome::Phase1Ok(token), false)
    }

    pub fn login_phase2(&self, token: SessionToken, code: &str, ip: &str) -> Result<Phase2Outcome, StoreError> {
        let now = self.clock.now();
        let (outcome, dirty) = {
            let mut state = self.state.write();
            Self::phase2_locked(&mut state, token, code.trim(), ip, now)
        };
        if dirty {
            self.persist()?;
        }
        Ok(outcome)
    }

    fn phase2_locked(
        state: &mut PolicyState,
        token: SessionToken,
        code: &str,
        ip: &str,
        now: DateTime<Utc>,
    ) -> (Phase2Outcome, bool) {
        let session = match state.sessions.get(&token) {
            Some(s) if s.phase == Phase::Phase1 => s.clone(),
            _ => return (Phase2Outcome::InvalidToken, false),
        };
        if state.untrusted.contains_key(ip) || state.untrusted.contains_key(&session.ip) {
            state.sessions.remove(&token);
            return (Phase2Outcome::IpBlocked, false);
        }
        if now > session.phase2_deadline {
            state.sessions.remove(&token);
            state.untrust(ip, UntrustReason::SecretTimeout, now);
            return (Phase2Outcome::SecretExpired, true);
        }
        let expected = state.secrets.get(&session.username);
        if expected.map(String::as_str) != Some(code) {
            state.sessions.remove(&token);
            state.untrust(ip, UntrustReason::SecretFailed, now);
            if session.ip != ip {
                state.untrust(&session.ip, UntrustReason::SecretFailed, now);
            }
            return (Phase2Outcome::SecretWrong, true);
        }
        if session.ip != ip {
            return (Phase2Outcome::InvalidToken, false);
        }
        let Some(user) = state.users.get_mut(&session.username) else {
            // user removed between phases
            state.sessions.remove(&token);
            return (Phase2Outcome::InvalidToken, false);
        };
        debug_assert!(!user.logged, "phase 1 refuses logged users");
        user.logged = true;
        user.current_ip = Some(ip.to_owned());
        let role = user.role;
        if let Some(s) = state.sessions.get_mut(&token) {
            s.phase = Phase::Full;
        }
        (Phase2Outcome::Authenticated(role), false)
    }

    pub fn authorize(&self, token: SessionToken, action: Action) -> Result<Role, Denial> {
        let state = self.state.read();
        let session = state.full_session(token)?;
        if session.role.allows(action) {
            Ok(session.role)
        } else {
            Err(Denial::Forbidden)
        }
    }

    pub fn session(&self, token: SessionToken) -> Option<Session> {
        self.state.read().sessions.get(&token).cloned()
    }

    /// Ends the session. Unknown tokens are ignored.
    pub fn logout(&self, token: SessionToken) {
        self.state.write().destroy(token);
    }

    /// Blacklists the machines of pending phase-1 logins whose secret-code
    /// window has closed. Returns the number of sessions expired.
    pub fn sweep_expired(&self) -> usize {
        let now = self.clock.now();
        let expired = {
            let mut state = self.state.write();
            let expired: Vec<Session> = state
                .sessions
                .values()
                .filter(|s| s.phase == Phase::Phase1 && now > s.phase2_deadline)
                .cloned()
                .collect();
            for s in &expired {
                state.sessions.remove(&s.token);
                state.untrust(&s.ip, UntrustReason::SecretTimeout, now);
            }
            expired.len()
        };
        if expired > 0 {
            self.persist_logged();
        }
        expired
    }

    fn require_admin(state: &PolicyState, actor: Actor) -> Result<(), AdminError> {
        match actor {
            Actor::Local => Ok(()),
            Actor::Session(token) => {
                let session = state.full_session(token).map_err(AdminError::Denied)?;
                if session.role.allows(Action::Admin) {
                    Ok(())
                } else {
                    Err(AdminError::Denied(Denial::Forbidden))
                }
            }
        }
    }

    pub fn admin_add_user(
        &self,
        actor: Actor,
        username: &str,
        password: &str,
        role: Role,
        secret: &str,
    ) -> Result<(), AdminError> {
        let (username, password, secret) = (username.trim(), password.trim(), secret.trim());
        {
            let state = self.state.read();
            Self::require_admin(&state, actor)?;
        }
        check_field("username", username)?;
        check_field("password", password)?;
        check_field("secret code", secret)?;
        let digest = hash_password(password, self.config.hash_iterations);
        {
            let mut state = self.state.write();
            Self::require_admin(&state, actor)?;
            if state.users.contains_key(username) {
                return Err(AdminError::DuplicateUsername);
            }
            if state.secrets.values().any(|c| c == secret) {
                return Err(AdminError::DuplicateSecret);
            }
            state.users.insert(
                username.to_owned(),
                UserRecord {
                    username: username.to_owned(),
                    password_digest: digest,
                    role,
                    logged: false,
                    current_ip: None,
                },
            );
            state.secrets.insert(username.to_owned(), secret.to_owned());
        }
        self.persist()?;
        Ok(())
    }

    pub fn admin_list_users(&self, actor: Actor) -> Result<Vec<UserStatus>, AdminError> {
        let state = self.state.read();
        Self::require_admin(&state, actor)?;
        Ok(state
            .users
            .values()
            .map(|u| UserStatus {
                username: u.username.clone(),
                logged: u.logged,
                ip: u.current_ip.clone(),
                role: u.role,
            })
            .collect())
    }

    pub fn admin_user_status(&self, actor: Actor, username: &str) -> Result<UserStatus, AdminError> {
        let state = self.state.read();
        Self::require_admin(&state, actor)?;
        let u = state
            .users
            .get(username)
            .ok_or_else(|| AdminError::NotFound(username.to_owned()))?;
        Ok(UserStatus {
            username: u.username.clone(),
            logged: u.logged,
            ip: u.current_ip.clone(),
            role: u.role,
        })
    }

    pub fn admin_list_untrusted(&self, actor: Actor) -> Result<Vec<UntrustedIp>, AdminError> {
        let state = self.state.read();
        Self::require_admin(&state, actor)?;
        Ok(state.untrusted.values().cloned().collect())
    }

    pub fn admin_remove_untrusted(&self, actor: Actor, ip: &str) -> Result<(), AdminError> {
        {
            let mut state = self.state.write();
            Self::require_admin(&state, actor)?;
            if state.untrusted.remove(ip).is_none() {
                return Err(AdminError::NotFound(ip.to_owned()));
            }
            state.fail_counters.remove(ip);
        }
        self.persist()?;
        Ok(())
    }

    /// Ends every session of `username`. Users that are not logged in are
    /// left as they are.
    pub fn admin_force_logout(&self, actor: Actor, username: &str) -> Result<(), AdminError> {
        let mut state = self.state.write();
        Self::require_admin(&state, actor)?;
        if !state.users.contains_key(username) {
            return Err(AdminError::NotFound(username.to_owned()));
        }
        state.end_sessions_of(username);
        Ok(())
    }

    /// Number of fully authenticated sessions per username.
    pub fn full_session_counts(&self) -> BTreeMap<String, usize> {
        let state = self.state.read();
        let mut counts = BTreeMap::new();
        for s in state.sessions.values().filter(|s| s.phase == Phase::Full) {
            *counts.entry(s.username.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn is_untrusted(&self, ip: &str) -> bool {
        self.state.read().untrusted.contains_key(ip)
    }

    pub fn remaining_trials(&self, ip: &str) -> u8 {
        let state = self.state.read();
        state
            .fail_counters
            .get(ip)
            .copied()
            .unwrap_or(self.config.max_trials)
    }
}
