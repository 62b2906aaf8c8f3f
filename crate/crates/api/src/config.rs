use std::path::PathBuf;
use std::time::Duration;

use dobj_core::store::StoreConfig;
use dobj_core::{Error, Result};

pub const DEFAULT_PORT: u16 = 7400;

/// Service settings. [`ServerConfig::from_env`] reads `DOBJ_DATA_DIR`,
/// `DOBJ_PORT`, `DOBJ_TOWER_CAP`, `DOBJ_SESSION_TTL` (seconds) and
/// `DOBJ_ADMIN_PASSWORD`.
#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub port: u16,
    pub tower_cap: u32,
    pub session_ttl: Duration,
    pub admin_password: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let store = StoreConfig::default();
        ServerConfig {
            data_dir: PathBuf::from("dobj-data"),
            port: DEFAULT_PORT,
            tower_cap: store.tower_cap,
            session_ttl: store.session_ttl,
            admin_password: store.admin_password,
        }
    }
}

impl ServerConfig {
    pub fn from_env() -> Result<ServerConfig> {
        let mut c = ServerConfig::default();
        if let Ok(dir) = std::env::var("DOBJ_DATA_DIR") {
            c.data_dir = dir.into();
        }
        if let Ok(port) = std::env::var("DOBJ_PORT") {
            c.port = parse_env("DOBJ_PORT", &port)?;
        }
        if let Ok(cap) = std::env::var("DOBJ_TOWER_CAP") {
            c.tower_cap = parse_env("DOBJ_TOWER_CAP", &cap)?;
        }
        if let Ok(ttl) = std::env::var("DOBJ_SESSION_TTL") {
            c.session_ttl = Duration::from_secs(parse_env("DOBJ_SESSION_TTL", &ttl)?);
        }
        if let Ok(pw) = std::env::var("DOBJ_ADMIN_PASSWORD") {
            c.admin_password = pw;
        }
        Ok(c)
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            tower_cap: self.tower_cap,
            session_ttl: self.session_ttl,
            admin_password: self.admin_password.clone(),
            ..StoreConfig::default()
        }
    }

    /// Port must be nonzero, the tower cap at least 1 and the data directory
    /// creatable and writable.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.port == 0 {
            problems.push("port must be nonzero".to_string());
        }
        if self.tower_cap == 0 {
            problems.push("tower cap must be at least 1".to_string());
        }
        if self.session_ttl.is_zero() {
            problems.push("session ttl must be positive".to_string());
        }
        match std::fs::create_dir_all(&self.data_dir).and_then(|_| std::fs::metadata(&self.data_dir)) {
            Ok(m) if m.permissions().readonly() => problems.push(format!("{} is read-only", self.data_dir.display())),
            Ok(_) => {}
            Err(e) => problems.push(format!("{}: {e}", self.data_dir.display())),
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

fn parse_env<T: std::str::FromStr>(name: &str, text: &str) -> Result<T> {
    text.trim().parse().map_err(|_| Error::Validation(vec![format!("{name}: cannot parse '{text}'")]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_use_port_7400() {
        assert_eq!(ServerConfig::default().port, 7400);
    }

    #[test]
    fn zero_port_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = ServerConfig { data_dir: dir.path().into(), port: 0, ..ServerConfig::default() };
        assert!(c.validate().is_err());
        let ok = ServerConfig { data_dir: dir.path().into(), ..ServerConfig::default() };
        assert!(ok.validate().is_ok());
    }
}
