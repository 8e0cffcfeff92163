//! HTTP face of the system.
//!
//! `GET /api/update` is the long-poll monitor channel: with `since` it holds
//! the request until the hub moves past that sequence (200 + body) or
//! `max_wait` passes (204, headers only). Without `since` it answers at once
//! with the current snapshot, which is also what a fixed-timer client uses.
//! `POST /api/setpoints` is the independent write channel and never waits for
//! the change to propagate.
//!
//! Every route except `/api/auth/login` checks the session cookie, and every
//! response carries no-store cache headers.

use std::collections::HashMap;
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::rejection::FormRejection;
use axum::extract::{ConnectInfo, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Form, Json, Router};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::hub::{HubError, Sequence, Snapshot, TagHub, TagWrite, WaitOutcome, QUALITY_GOOD};
use crate::security::{
    Action, Actor, AdminError, Denial, Phase1Outcome, Phase2Outcome, Role, SecurityPolicy, SessionToken,
};
use crate::wire::{format_snapshot, format_snapshot_json, parse_setpoints, SetpointTargets, WireFormat};

pub const SEQ_HEADER: &str = "x-seq";
pub const DEFAULT_COOKIE: &str = "tagpoll_session";
pub const PORT_ENV: &str = "TAGPOLL_PORT";

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub bind: SocketAddr,
    pub max_wait: Duration,
    pub setpoints: SetpointTargets,
    pub wire_format: WireFormat,
    pub cookie_name: String,
    /// Take the client IP from `X-Forwarded-For` when present. Only safe
    /// behind a proxy that sets the header itself.
    pub trust_forwarded_for: bool,
    pub assets_dir: Option<PathBuf>,
    /// How often abandoned phase-1 logins are expired.
    pub sweep_interval: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_wait: Duration::from_secs(30),
            setpoints: SetpointTargets::default(),
            wire_format: WireFormat::Delimited,
            cookie_name: DEFAULT_COOKIE.to_owned(),
            trust_forwarded_for: false,
            assets_dir: None,
            sweep_interval: Duration::from_secs(1),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_wait < Duration::from_secs(1) {
            return Err(GatewayError::Config("max_wait must be at least 1 s".into()));
        }
        if self.setpoints.handles.is_empty() {
            return Err(GatewayError::Config("no setpoint target handles".into()));
        }
        if self.setpoints.handles.len() != self.setpoints.ranges.len() {
            return Err(GatewayError::Config("one range is needed per setpoint handle".into()));
        }
        if self.setpoints.ranges.iter().any(|r| !(r.low < r.high)) {
            return Err(GatewayError::Config("setpoint range has low >= high".into()));
        }
        if self.cookie_name.is_empty() || !self.cookie_name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(GatewayError::Config(format!("bad cookie name {:?}", self.cookie_name)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error("failed to bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Hub(#[from] HubError),
}

struct Shared {
    hub: Arc<TagHub>,
    security: Arc<SecurityPolicy>,
    config: GatewayConfig,
    shutdown: watch::Receiver<bool>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(
        config: GatewayConfig,
        hub: Arc<TagHub>,
        security: Arc<SecurityPolicy>,
        shutdown: watch::Receiver<bool>,
    ) -> Self {
        Self(Arc::new(Shared {
            hub,
            security,
            config,
            shutdown,
        }))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/update", get(update))
        .route("/api/setpoints", post(setpoints))
        .route("/api/auth/login", post(login))
        .route("/api/auth/secret", post(secret))
        .route("/api/auth/logout", post(logout))
        .route("/api/admin/users", get(admin_users).post(admin_add_user))
        .route("/api/admin/users/{username}", get(admin_user_status))
        .route("/api/admin/users/{username}/logout", post(admin_force_logout))
        .route("/api/admin/untrusted", get(admin_untrusted))
        .route("/api/admin/untrusted/{ip}", delete(admin_remove_untrusted))
        .fallback(assets)
        .layer(axum::middleware::map_response(no_store))
        .with_state(state)
}

async fn no_store(mut response: Response) -> Response {
    let headers = response.headers_mut();
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store, no-cache, must-revalidate"));
    headers.insert(header::PRAGMA, HeaderValue::from_static("no-cache"));
    headers.insert(header::EXPIRES, HeaderValue::from_static("0"));
    response
}

fn client_ip(state: &Shared, headers: &HeaderMap, peer: SocketAddr) -> String {
    if state.config.trust_forwarded_for {
        let forwarded = headers
            .get("x-forwarded-for")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.split(',').next())
            .map(str::trim)
            .filter(|v| !v.is_empty());
        if let Some(ip) = forwarded {
            return ip.to_owned();
        }
    }
    peer.ip().to_string()
}

fn session_token(headers: &HeaderMap, cookie_name: &str) -> Option<SessionToken> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, _)| *name == cookie_name)
        .and_then(|(_, value)| value.parse().ok())
}

fn text(status: StatusCode, body: impl Into<String>) -> Response {
    (status, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body.into()).into_response()
}

fn denial_response(denial: Denial) -> Response {
    match denial {
        Denial::Unauthenticated => text(StatusCode::UNAUTHORIZED, "login required"),
        Denial::Forbidden => text(StatusCode::FORBIDDEN, "role lacks this right"),
    }
}

fn guard(state: &Shared, headers: &HeaderMap, action: Action) -> Result<SessionToken, Response> {
    let token = session_token(headers, &state.config.cookie_name)
        .ok_or_else(|| denial_response(Denial::Unauthenticated))?;
    state
        .security
        .authorize(token, action)
        .map(|_| token)
        .map_err(denial_response)
}

fn seq_header(sequence: Sequence) -> (&'static str, String) {
    (SEQ_HEADER, sequence.to_string())
}

fn snapshot_response(state: &Shared, snapshot: &Snapshot) -> Response {
    let (body, content_type) = match state.config.wire_format {
        WireFormat::Delimited => (format_snapshot(snapshot).body, "text/plain; charset=utf-8"),
        WireFormat::Json => (format_snapshot_json(snapshot), "application/json"),
    };
    (
        StatusCode::OK,
        [seq_header(snapshot.sequence), (header::CONTENT_TYPE.as_str(), content_type.to_owned())],
        body,
    )
        .into_response()
}

fn heartbeat(sequence: Sequence) -> Response {
    (StatusCode::NO_CONTENT, [seq_header(sequence)]).into_response()
}

async fn update(
    State(AppState(state)): State<AppState>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
) -> Response {
    if let Err(denied) = guard(&state, &headers, Action::Monitor) {
        return denied;
    }
    let since = match query.get("since").map(|s| s.trim().parse::<Sequence>()) {
        None => None,
        Some(Ok(s)) => Some(s),
        Some(Err(_)) => return text(StatusCode::BAD_REQUEST, "since must be an unsigned integer"),
    };
    let Some(since) = since else {
        return snapshot_response(&state, &state.hub.snapshot());
    };

    let mut shutdown = state.shutdown.clone();
    if *shutdown.borrow() {
        return heartbeat(state.hub.current_sequence());
    }
    let outcome = tokio::select! {
        outcome = state.hub.wait_for_change_async(since, state.config.max_wait) => outcome,
        _ = shutdown.wait_for(|stop| *stop) => Ok(WaitOutcome::TimedOut(state.hub.current_sequence())),
    };
    match outcome {
        Ok(WaitOutcome::Changed(snapshot)) => snapshot_response(&state, &snapshot),
        Ok(WaitOutcome::TimedOut(seq)) => heartbeat(seq),
        Err(e) => text(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    }
}

async fn setpoints(State(AppState(state)): State<AppState>, headers: HeaderMap, body: String) -> Response {
    if let Err(denied) = guard(&state, &headers, Action::WriteSetpoints) {
        return denied;
    }
    let command = match parse_setpoints(&body, &state.config.setpoints) {
        Ok(c) => c,
        Err(e) => {
            let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::BAD_REQUEST);
            return text(status, e.to_string());
        }
    };
    let writes: Vec<TagWrite> = command
        .target_handles
        .iter()
        .zip(&command.values)
        .map(|(&handle, &value)| TagWrite {
            handle,
            value,
            quality: Some(QUALITY_GOOD),
        })
        .collect();
    match state.hub.write_batch(&writes) {
        Ok(_) => text(StatusCode::OK, "Done"),
        Err(e) => text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Deserialize)]
struct LoginForm {
    username: Option<String>,
    password: Option<String>,
}

fn session_cookie(name: &str, token: SessionToken) -> String {
    format!("{name}={token}; Path=/; HttpOnly; SameSite=Strict")
}

fn clear_cookie(name: &str) -> String {
    format!("{name}=; Path=/; HttpOnly; SameSite=Strict; Max-Age=0")
}

fn outcome_json(status: StatusCode, body: serde_json::Value) -> Response {
    (status, Json(body)).into_response()
}

async fn login(
    State(AppState(state)): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Form(form): Form<LoginForm>,
) -> Response {
    let (Some(username), Some(password)) = (form.username, form.password) else {
        return text(StatusCode::BAD_REQUEST, "username and password are required");
    };
    let ip = client_ip(&state, &headers, peer);
    let security = state.security.clone();
    let outcome = tokio::task::spawn_blocking(move || security.login_phase1(&username, &password, &ip)).await;
    let outcome = match outcome {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => return text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => return text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let cookie = &state.config.cookie_name;
    match outcome {
        Phase1Outcome::Phase1Ok(token) => {
            let timeout = state.security.config().phase2_timeout.as_secs();
            let mut response = outcome_json(
                StatusCode::OK,
                json!({"outcome": "phase1_ok", "secret_timeout_s": timeout}),
            );
            if let Ok(v) = HeaderValue::from_str(&session_cookie(cookie, token)) {
                response.headers_mut().insert(header::SET_COOKIE, v);
            }
            response
        }
        Phase1Outcome::InvalidUser => outcome_json(
            StatusCode::UNAUTHORIZED,
            json!({"outcome": "invalid_user", "message": "Invalid user name"}),
        ),
        Phase1Outcome::InvalidPassword => outcome_json(
            StatusCode::UNAUTHORIZED,
            json!({"outcome": "invalid_password", "message": "Invalid password!!"}),
        ),
        Phase1Outcome::IpBlocked => outcome_json(
            StatusCode::FORBIDDEN,
            json!({
                "outcome": "ip_blocked",
                "message": "you are not Allowed to login, your machine marked as untrusted. Contact network administrator"
            }),
        ),
        Phase1Outcome::DuplicateBlocked => outcome_json(
            StatusCode::CONFLICT,
            json!({"outcome": "duplicate_blocked", "message": "user has an active session elsewhere, both machines marked as untrusted"}),
        ),
    }
}

#[derive(Deserialize)]
struct SecretForm {
    code: Option<String>,
}

async fn secret(
    State(AppState(state)): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Form(form): Form<SecretForm>,
) -> Response {
    let Some(token) = session_token(&headers, &state.config.cookie_name) else {
        return denial_response(Denial::Unauthenticated);
    };
    let Some(code) = form.code else {
        return text(StatusCode::BAD_REQUEST, "code is required");
    };
    let ip = client_ip(&state, &headers, peer);
    let outcome = match state.security.login_phase2(token, &code, &ip) {
        Ok(o) => o,
        Err(e) => return text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let (status, body) = match outcome {
        Phase2Outcome::Authenticated(role) => (
            StatusCode::OK,
            json!({"outcome": "authenticated", "role": role.as_str()}),
        ),
        Phase2Outcome::SecretWrong => (
            StatusCode::UNAUTHORIZED,
            json!({"outcome": "secret_wrong", "message": "wrong secret code, your machine marked as untrusted"}),
        ),
        Phase2Outcome::SecretExpired => (
            StatusCode::UNAUTHORIZED,
            json!({"outcome": "secret_expired", "message": "secret code window closed, your machine marked as untrusted"}),
        ),
        Phase2Outcome::InvalidToken => (
            StatusCode::UNAUTHORIZED,
            json!({"outcome": "invalid_token", "message": "login again"}),
        ),
        Phase2Outcome::IpBlocked => (
            StatusCode::FORBIDDEN,
            json!({"outcome": "ip_blocked", "message": "you are not Allowed to login"}),
        ),
    };
    let mut response = outcome_json(status, body);
    if !status.is_success() {
        if let Ok(v) = HeaderValue::from_str(&clear_cookie(&state.config.cookie_name)) {
            response.headers_mut().insert(header::SET_COOKIE, v);
        }
    }
    response
}

async fn logout(State(AppState(state)): State<AppState>, headers: HeaderMap) -> Response {
    let Some(token) = session_token(&headers, &state.config.cookie_name) else {
        return denial_response(Denial::Unauthenticated);
    };
    if state.security.session(token).is_none() {
        return denial_response(Denial::Unauthenticated);
    }
    state.security.logout(token);
    let mut response = text(StatusCode::OK, "logged out");
    if let Ok(v) = HeaderValue::from_str(&clear_cookie(&state.config.cookie_name)) {
        response.headers_mut().insert(header::SET_COOKIE, v);
    }
    response
}

fn admin_error(e: AdminError) -> Response {
    match e {
        AdminError::Denied(d) => denial_response(d),
        AdminError::DuplicateUsername | AdminError::DuplicateSecret => text(StatusCode::CONFLICT, e.to_string()),
        AdminError::NotFound(_) => text(StatusCode::NOT_FOUND, e.to_string()),
        AdminError::InvalidInput(_) => text(StatusCode::BAD_REQUEST, e.to_string()),
        AdminError::Store(_) => text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn admin_actor(state: &Shared, headers: &HeaderMap) -> Result<Actor, Response> {
    guard(state, headers, Action::Admin).map(Actor::Session)
}

async fn admin_users(State(AppState(state)): State<AppState>, headers: HeaderMap) -> Response {
    let actor = match admin_actor(&state, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    match state.security.admin_list_users(actor) {
        Ok(users) => Json(users).into_response(),
        Err(e) => admin_error(e),
    }
}

#[derive(Deserialize)]
struct AddUserForm {
    username: Option<String>,
    password: Option<String>,
    role: Option<String>,
    secret: Option<String>,
}

async fn admin_add_user(
    State(AppState(state)): State<AppState>,
    headers: HeaderMap,
    form: Result<Form<AddUserForm>, FormRejection>,
) -> Response {
    let actor = match admin_actor(&state, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    let Ok(Form(form)) = form else {
        return text(StatusCode::BAD_REQUEST, "Complete user data");
    };
    let (Some(username), Some(password), Some(role), Some(secret)) =
        (form.username, form.password, form.role, form.secret)
    else {
        return text(StatusCode::BAD_REQUEST, "Complete user data");
    };
    let role: Role = match role.parse() {
        Ok(r) => r,
        Err(e) => return text(StatusCode::BAD_REQUEST, e),
    };
    let security = state.security.clone();
    let result =
        tokio::task::spawn_blocking(move || security.admin_add_user(actor, &username, &password, role, &secret)).await;
    match result {
        Ok(Ok(())) => text(StatusCode::CREATED, "user added"),
        Ok(Err(e)) => admin_error(e),
        Err(e) => text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn admin_user_status(
    State(AppState(state)): State<AppState>,
    headers: HeaderMap,
    Path(username): Path<String>,
) -> Response {
    let actor = match admin_actor(&state, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    match state.security.admin_user_status(actor, &username) {
        Ok(status) => Json(status).into_response(),
        Err(e) => admin_error(e),
    }
}

async fn admin_force_logout(
    State(AppState(state)): State<AppState>,
    headers: HeaderMap,
    Path(username): Path<String>,
) -> Response {
    let actor = match admin_actor(&state, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    match state.security.admin_force_logout(actor, &username) {
        Ok(()) => text(StatusCode::OK, "done"),
        Err(e) => admin_error(e),
    }
}

async fn admin_untrusted(State(AppState(state)): State<AppState>, headers: HeaderMap) -> Response {
    let actor = match admin_actor(&state, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    match state.security.admin_list_untrusted(actor) {
        Ok(list) => Json(list).into_response(),
        Err(e) => admin_error(e),
    }
}

async fn admin_remove_untrusted(
    State(AppState(state)): State<AppState>,
    headers: HeaderMap,
    Path(ip): Path<String>,
) -> Response {
    let actor = match admin_actor(&state, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    match state.security.admin_remove_untrusted(actor, &ip) {
        Ok(()) => text(StatusCode::OK, "removed"),
        Err(e) => admin_error(e),
    }
}

fn asset_path(root: &FsPath, uri_path: &str) -> Option<PathBuf> {
    let relative = uri_path.trim_start_matches('/');
    let relative = if relative.is_empty() { "index.html" } else { relative };
    let candidate = FsPath::new(relative);
    if candidate.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(candidate))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

async fn assets(State(AppState(state)): State<AppState>, method: Method, uri: Uri) -> Response {
    let not_found = || text(StatusCode::NOT_FOUND, "not found");
    if method != Method::GET || uri.path().starts_with("/api/") {
        return not_found();
    }
    let Some(root) = &state.config.assets_dir else {
        return not_found();
    };
    let Some(path) = asset_path(root, uri.path()) else {
        return not_found();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, content_type(&path))
            .body(Body::from(bytes))
            .unwrap_or_else(|_| not_found()),
        Err(_) => not_found(),
    }
}

/// A gateway listening on a socket.
pub struct RunningGateway {
    addr: SocketAddr,
    shutdown_tx: watch::Sender<bool>,
    server: JoinHandle<io::Result<()>>,
    sweeper: JoinHandle<()>,
}

impl RunningGateway {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        let host = match self.addr.ip() {
            IpAddr::V4(ip) if ip.is_unspecified() => "127.0.0.1".to_owned(),
            IpAddr::V4(ip) => ip.to_string(),
            IpAddr::V6(ip) => format!("[{ip}]"),
        };
        format!("http://{host}:{}", self.addr.port())
    }

    /// Answers every held monitor request with 204, then stops accepting
    /// and waits for in-flight requests to finish.
    pub async fn shutdown(self) -> io::Result<()> {
        let _ = self.shutdown_tx.send(true);
        self.sweeper.abort();
        match self.server.await {
            Ok(result) => result,
            Err(e) => Err(io::Error::other(e)),
        }
    }

    /// Runs until the process receives Ctrl-C, then shuts down gracefully.
    pub async fn run_until_ctrl_c(self) -> io::Result<()> {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
        self.shutdown().await
    }
}

pub async fn serve(
    config: GatewayConfig,
    hub: Arc<TagHub>,
    security: Arc<SecurityPolicy>,
) -> Result<RunningGateway, GatewayError> {
    config.validate()?;
    if !hub.is_registered() {
        return Err(HubError::NotRegistered.into());
    }
    let tags = hub.tag_count();
    if let Some(h) = config.setpoints.handles.iter().find(|h| h.get() as usize > tags) {
        return Err(HubError::UnknownHandle(h.get()).into());
    }
    let listener = TcpListener::bind(config.bind)
        .await
        .map_err(|source| GatewayError::Bind {
            addr: config.bind,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| GatewayError::Bind {
        addr: config.bind,
        source,
    })?;

    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let sweep_every = config.sweep_interval;
    let sweeper = {
        let security = security.clone();
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(sweep_every);
            loop {
                ticker.tick().await;
                security.sweep_expired();
            }
        })
    };
    let app = router(AppState::new(config, hub, security, shutdown_rx.clone()));
    let mut stop = shutdown_rx;
    let server = tokio::spawn(async move {
        axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(async move {
                let _ = stop.wait_for(|s| *s).await;
            })
            .await
    });
    tracing::info!("gateway listening on {addr}");
    Ok(RunningGateway {
        addr,
        shutdown_tx,
        server,
        sweeper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cookie_lookup() {
        let mut headers = HeaderMap::new();
        let token = "0123456789abcdef0123456789abcdef";
        headers.insert(
            header::COOKIE,
            HeaderValue::from_str(&format!("theme=dark; tagpoll_session={token}")).unwrap(),
        );
        assert_eq!(
            session_token(&headers, DEFAULT_COOKIE).map(|t| t.to_string()),
            Some(token.to_owned())
        );
        assert!(session_token(&headers, "other").is_none());
    }

    #[test]
    fn asset_paths_stay_inside_root() {
        let root = FsPath::new("/srv/hmi");
        assert_eq!(asset_path(root, "/"), Some(root.join("index.html")));
        assert_eq!(asset_path(root, "/js/app.js"), Some(root.join("js/app.js")));
        assert_eq!(asset_path(root, "/../etc/passwd"), None);
    }

    #[test]
    fn config_validation() {
        assert!(GatewayConfig::default().validate().is_ok());
        let short = GatewayConfig {
            max_wait: Duration::from_millis(500),
            ..GatewayConfig::default()
        };
        assert!(short.validate().is_err());
        let bad_cookie = GatewayConfig {
            cookie_name: "a b".into(),
            ..GatewayConfig::default()
        };
        assert!(bad_cookie.validate().is_err());
    }
}
