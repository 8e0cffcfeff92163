//! Text store for users, secret codes and untrusted IPs.
//!
//! One UTF-8 file with three sections, one tab-separated record per line:
//!
//! ```text
//! [users]
//! <username>\t<password digest>\t<role>
//! [secrets]
//! <username>\t<code>
//! [untrusted]
//! <ip>\t<added_at ISO-8601>\t<reason>
//! ```
//!
//! Records are written in key order and the file is replaced atomically via
//! a temp file in the same directory.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::{Role, UntrustedIp};
use crate::wire::format_timestamp;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("store line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreTables {
    pub users: Vec<(String, String, Role)>,
    pub secrets: Vec<(String, String)>,
    pub untrusted: Vec<UntrustedIp>,
}

pub fn render(tables: &StoreTables) -> String {
    let mut out = String::from("[users]\n");
    for (user, digest, role) in &tables.users {
        out.push_str(&format!("{user}\t{digest}\t{role}\n"));
    }
    out.push_str("[secrets]\n");
    for (user, code) in &tables.secrets {
        out.push_str(&format!("{user}\t{code}\n"));
    }
    out.push_str("[untrusted]\n");
    for u in &tables.untrusted {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            u.ip,
            format_timestamp(u.added_at),
            u.reason.as_str()
        ));
    }
    out
}

#[derive(Clone, Copy)]
enum Section {
    Users,
    Secrets,
    Untrusted,
}

pub fn parse(text: &str) -> Result<StoreTables, StoreError> {
    let mut tables = StoreTables::default();
    let mut section = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| StoreError::Parse { line, message };
        if raw.trim().is_empty() {
            continue;
        }
        match raw.trim() {
            "[users]" => {
                section = Some(Section::Users);
                continue;
            }
            "[secrets]" => {
                section = Some(Section::Secrets);
                continue;
            }
            "[untrusted]" => {
                section = Some(Section::Untrusted);
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        match section {
            None => return Err(err("record outside of a section".into())),
            Some(Section::Users) => {
                let [user, digest, role] = fields[..] else {
                    return Err(err(format!("expected 3 fields, found {}", fields.len())));
                };
                tables
                    .users
                    .push((user.to_owned(), digest.to_owned(), role.parse().map_err(err)?));
            }
            Some(Section::Secrets) => {
                let [user, code] = fields[..] else {
                    return Err(err(format!("expected 2 fields, found {}", fields.len())));
                };
                tables.secrets.push((user.to_owned(), code.to_owned()));
            }
            Some(Section::Untrusted) => {
                let [ip, at, reason] = fields[..] else {
                    return Err(err(format!("expected 3 fields, found {}", fields.len())));
                };
                let added_at = DateTime::parse_from_rfc3339(at)
                    .map_err(|e| err(format!("bad timestamp {at:?}: {e}")))?
                    .with_timezone(&Utc);
                tables.untrusted.push(UntrustedIp {
                    ip: ip.to_owned(),
                    added_at,
                    reason: reason.parse().map_err(err)?,
                });
            }
        }
    }
    Ok(tables)
}

/// `Ok(None)` when the file does not exist.
pub fn read(path: &Path) -> Result<Option<StoreTables>, StoreError> {
    match fs::read_to_string(path) {
        Ok(text) => parse(&text).map(Some),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn write(path: &Path, tables: &StoreTables) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(render(tables).as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
