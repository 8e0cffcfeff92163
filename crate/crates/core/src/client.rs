//! Minimal async client for the gateway, used by the benchmark and tests.

use std::time::Duration;

use reqwest::header::{HeaderMap, COOKIE, SET_COOKIE};
use reqwest::StatusCode;
use thiserror::Error;

use crate::gateway::{DEFAULT_COOKIE, SEQ_HEADER};
use crate::hub::Sequence;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{step} refused with {status}: {body}")]
    Refused {
        step: &'static str,
        status: StatusCode,
        body: String,
    },
    #[error("response lacks {0}")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Update {
    Data { sequence: Sequence, body: String },
    Heartbeat { sequence: Sequence },
}

impl Update {
    pub fn sequence(&self) -> Sequence {
        match self {
            Update::Data { sequence, .. } | Update::Heartbeat { sequence } => *sequence,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayClient {
    http: reqwest::Client,
    base: String,
    cookie_name: String,
    token: Option<String>,
    forwarded_for: Option<String>,
}

fn cookie_value(headers: &HeaderMap, name: &str) -> Option<String> {
    headers
        .get_all(SET_COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .filter_map(|v| v.split(';').next())
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(n, _)| *n == name)
        .map(|(_, v)| v.to_owned())
}

impl GatewayClient {
    /// `request_timeout` must exceed the gateway's `max_wait`.
    pub fn new(base_url: impl Into<String>, request_timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .no_proxy()
            .timeout(request_timeout)
            .build()?;
        Ok(Self {
            http,
            base: base_url.into().trim_end_matches('/').to_owned(),
            cookie_name: DEFAULT_COOKIE.to_owned(),
            token: None,
            forwarded_for: None,
        })
    }

    /// Sends `X-Forwarded-For` so a gateway that trusts it sees this address.
    pub fn with_forwarded_for(mut self, ip: impl Into<String>) -> Self {
        self.forwarded_for = Some(ip.into());
        self
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    /// Request builder with the session cookie and forwarded address applied.
    pub fn request(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        let mut req = self.http.request(method, self.url(path));
        if let Some(token) = &self.token {
            req = req.header(COOKIE, format!("{}={token}", self.cookie_name));
        }
        if let Some(ip) = &self.forwarded_for {
            req = req.header("x-forwarded-for", ip);
        }
        req
    }

    /// Phase one only. Returns the raw response so callers can inspect refusals.
    pub async fn login_phase1(&mut self, username: &str, password: &str) -> Result<(StatusCode, String), ClientError> {
        let resp = self
            .request(reqwest::Method::POST, "/api/auth/login")
            .form(&[("username", username), ("password", password)])
            .send()
            .await?;
        let status = resp.status();
        if let Some(token) = cookie_value(resp.headers(), &self.cookie_name) {
            self.token = Some(token);
        }
        Ok((status, resp.text().await?))
    }

    pub async fn login_phase2(&mut self, code: &str) -> Result<(StatusCode, String), ClientError> {
        let resp = self
            .request(reqwest::Method::POST, "/api/auth/secret")
            .form(&[("code", code)])
            .send()
            .await?;
        Ok((resp.status(), resp.text().await?))
    }

    /// Both phases; fails unless the session ends up fully authenticated.
    pub async fn login(&mut self, username: &str, password: &str, code: &str) -> Result<(), ClientError> {
        let (status, body) = self.login_phase1(username, password).await?;
        if status != StatusCode::OK {
            return Err(ClientError::Refused {
                step: "login",
                status,
                body,
            });
        }
        let (status, body) = self.login_phase2(code).await?;
        if status != StatusCode::OK {
            return Err(ClientError::Refused {
                step: "secret",
                status,
                body,
            });
        }
        Ok(())
    }

    pub async fn logout(&mut self) -> Result<StatusCode, ClientError> {
        let resp = self.request(reqwest::Method::POST, "/api/auth/logout").send().await?;
        self.token = None;
        Ok(resp.status())
    }

    /// Monitor request. `None` asks for the current snapshot without waiting.
    pub async fn update(&self, since: Option<Sequence>) -> Result<Update, ClientError> {
        let path = match since {
            Some(s) => format!("/api/update?since={s}"),
            None => "/api/update".to_owned(),
        };
        let resp = self.request(reqwest::Method::GET, &path).send().await?;
        let status = resp.status();
        let sequence = resp
            .headers()
            .get(SEQ_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        match status {
            StatusCode::OK => {
                let sequence = sequence.ok_or(ClientError::Missing(SEQ_HEADER))?;
                Ok(Update::Data {
                    sequence,
                    body: resp.text().await?,
                })
            }
            StatusCode::NO_CONTENT => Ok(Update::Heartbeat {
                sequence: sequence.ok_or(ClientError::Missing(SEQ_HEADER))?,
            }),
            status => Err(ClientError::Refused {
                step: "update",
                status,
                body: resp.text().await.unwrap_or_default(),
            }),
        }
    }

    pub async fn write_setpoints(&self, body: &str) -> Result<(StatusCode, String), ClientError> {
        let resp = self
            .request(reqwest::Method::POST, "/api/setpoints")
            .body(body.to_owned())
            .send()
            .await?;
        Ok((resp.status(), resp.text().await?))
    }
}
