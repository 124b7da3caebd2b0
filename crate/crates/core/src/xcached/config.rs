use std::path::PathBuf;

use crate::chunking::ChunkLimits;
use crate::netsim::{CacheMode, TransportConfig};

/// Daemon settings, readable from `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct XcachedConfig {
    pub workers: usize,
    pub mem_capacity_chunks: usize,
    pub disk_capacity_chunks: usize,
    pub disk_dir: Option<PathBuf>,
    pub cache_policy: CacheMode,
    pub transport: TransportConfig,
    pub limits: ChunkLimits,
    /// Queue length above which a warning is logged.
    pub queue_high_water: usize,
}

impl Default for XcachedConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            mem_capacity_chunks: 64,
            disk_capacity_chunks: 0,
            disk_dir: None,
            cache_policy: CacheMode::Always,
            transport: TransportConfig::default(),
            limits: ChunkLimits::default(),
            queue_high_water: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl XcachedConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("bad value for {key}: {value:?}"))
        }
        match key {
            "workers" => {
                self.workers = num(key, value)?;
                if self.workers == 0 {
                    return Err("workers must be at least 1".into());
                }
            }
            "mem_capacity_chunks" => self.mem_capacity_chunks = num(key, value)?,
            "disk_capacity_chunks" => self.disk_capacity_chunks = num(key, value)?,
            "disk_dir" => self.disk_dir = Some(PathBuf::from(value)),
            "cache_policy" => {
                self.cache_policy = CacheMode::parse(value).ok_or_else(|| format!("bad cache_policy {value:?}"))?
            }
            "segment_size" => {
                self.transport.segment_size = num(key, value)?;
                if self.transport.segment_size == 0 {
                    return Err("segment_size must be positive".into());
                }
            }
            "window" => {
                self.transport.window = num(key, value)?;
                if self.transport.window == 0 {
                    return Err("window must be positive".into());
                }
            }
            "rto_multiplier" => self.transport.rto_multiplier = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let cfg = XcachedConfig::parse(
            "# daemon\nworkers = 2\nmem_capacity_chunks=3\ndisk_capacity_chunks = 5\ndisk_dir = /tmp/x\n\
             cache_policy = never\nsegment_size = 512\nwindow = 4\nrto_multiplier = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.mem_capacity_chunks, 3);
        assert_eq!(cfg.disk_capacity_chunks, 5);
        assert_eq!(cfg.disk_dir, Some(PathBuf::from("/tmp/x")));
        assert_eq!(cfg.cache_policy, CacheMode::Never);
        assert_eq!(cfg.transport, TransportConfig { segment_size: 512, window: 4, rto_multiplier: 6, retry_cap: 16 });
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(XcachedConfig::parse("workers = 0").unwrap_err().line, 1);
        assert_eq!(XcachedConfig::parse("\ncolour = blue").unwrap_err().line, 2);
        assert_eq!(XcachedConfig::parse("window").unwrap_err().line, 1);
        assert!(XcachedConfig::parse("cache_policy = maybe").is_err());
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(XcachedConfig::parse("").unwrap(), XcachedConfig::default());
    }
}
