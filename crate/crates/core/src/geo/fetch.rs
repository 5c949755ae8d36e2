//! Cached, rate-limited tile image fetcher.
//!
//! Tiles land at `cache_dir/{z}/{x}/{y}.png`. Already-cached tiles never hit the
//! network. Requests are paced globally at `rate_limit` per second and transient
//! failures (5xx, 429, network errors) are retried with exponential backoff.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::{tile_bounds, TileCoord};

pub const API_KEY_ENV: &str = "TILE_API_KEY";

#[derive(Debug, Error, PartialEq)]
pub enum FetchError {
    #[error("url template {0:?} needs {{z}}/{{x}}/{{y}} or {{lat}}/{{lon}} placeholders")]
    BadTemplate(String),
    #[error("url template uses {{key}} but no api key was given (set {API_KEY_ENV})")]
    MissingApiKey,
    #[error("rate limit must be positive, got {0}")]
    BadRateLimit(f64),
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    /// e.g. `https://tiles.example/{z}/{x}/{y}.png?key={key}`; `{lat}`, `{lon}` (tile
    /// center) are also substituted for center-based static-map APIs.
    pub url_template: String,
    pub cache_dir: PathBuf,
    /// Requests per second, across all workers.
    pub rate_limit: f64,
    pub concurrency: usize,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

impl FetchConfig {
    /// Defaults: 4 workers, 3 attempts, 500 ms backoff base, api key from `TILE_API_KEY`.
    pub fn new(url_template: impl Into<String>, cache_dir: impl Into<PathBuf>, rate_limit: f64) -> Self {
        Self {
            url_template: url_template.into(),
            cache_dir: cache_dir.into(),
            rate_limit,
            concurrency: 4,
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
            api_key: std::env::var(API_KEY_ENV).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FetchStatus {
    Cached,
    Fetched { attempts: u32 },
    PermanentFailure { http_status: Option<u16>, reason: String },
    TransientFailure { attempts: u32, reason: String },
}

pub fn tile_cache_path(cache_dir: &Path, t: TileCoord) -> PathBuf {
    cache_dir.join(t.zoom.to_string()).join(t.x.to_string()).join(format!("{}.png", t.y))
}

fn render_url(template: &str, t: TileCoord, key: Option<&str>) -> String {
    let c = tile_bounds(t).center();
    template
        .replace("{z}", &t.zoom.to_string())
        .replace("{x}", &t.x.to_string())
        .replace("{y}", &t.y.to_string())
        .replace("{lat}", &format!("{:.7}", c.lat))
        .replace("{lon}", &format!("{:.7}", c.lon))
        .replace("{key}", key.unwrap_or(""))
}

struct Pacer {
    interval: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().expect("pacer lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

enum Attempt {
    Ok(Vec<u8>),
    Permanent(Option<u16>, String),
    Transient(String),
}

/// Fetches every tile not already in the cache. Returns one status per input tile,
/// in input order. Individual tile failures never abort the run.
pub fn fetch_tiles(tiles: &[TileCoord], cfg: &FetchConfig) -> Result<Vec<FetchStatus>, FetchError> {
    let t = &cfg.url_template;
    let tiled = t.contains("{z}") && t.contains("{x}") && t.contains("{y}");
    let centered = t.contains("{lat}") && t.contains("{lon}");
    if !tiled && !centered {
        return Err(FetchError::BadTemplate(t.clone()));
    }
    if t.contains("{key}") && cfg.api_key.is_none() {
        return Err(FetchError::MissingApiKey);
    }
    if !(cfg.rate_limit > 0.0) || !cfg.rate_limit.is_finite() {
        return Err(FetchError::BadRateLimit(cfg.rate_limit));
    }
    if tiles.is_empty() {
        return Ok(Vec::new());
    }

    // Duplicate inputs share one worker so each cache path has a single writer.
    let unique: Vec<TileCoord> = {
        let mut u = tiles.to_vec();
        u.sort_unstable();
        u.dedup();
        u
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let pacer = Pacer {
        interval: Duration::from_secs_f64(1.0 / cfg.rate_limit),
        next: Mutex::new(Instant::now()),
    };
    let cursor = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<TileCoord, FetchStatus>> = Mutex::new(BTreeMap::new());

    std::thread::scope(|s| {
        for _ in 0..cfg.concurrency.max(1).min(unique.len()) {
            s.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(&tile) = unique.get(i) else { break };
                let status = fetch_one(&agent, &pacer, cfg, tile);
                results.lock().expect("results lock").insert(tile, status);
            });
        }
    });

    let results = results.into_inner().expect("results lock");
    Ok(tiles.iter().map(|t| results[t].clone()).collect())
}

fn fetch_one(agent: &ureq::Agent, pacer: &Pacer, cfg: &FetchConfig, tile: TileCoord) -> FetchStatus {
    let path = tile_cache_path(&cfg.cache_dir, tile);
    if path.is_file() {
        return FetchStatus::Cached;
    }
    let url = render_url(&cfg.url_template, tile, cfg.api_key.as_deref());
    let mut last_reason = String::new();
    for attempt in 1..=cfg.max_attempts.max(1) {
        if attempt > 1 {
            std::thread::sleep(cfg.backoff_base * 2u32.pow(attempt - 2));
        }
        pacer.wait();
        match request(agent, &url) {
            Attempt::Ok(body) => {
                return match to_png(&body).and_then(|png| {
                    crate::write_atomic(&path, &png).map_err(|e| format!("cache write failed: {e}"))
                }) {
                    Ok(()) => FetchStatus::Fetched { attempts: attempt },
                    Err(reason) => FetchStatus::PermanentFailure { http_status: None, reason },
                };
            }
            Attempt::Permanent(code, reason) => return FetchStatus::PermanentFailure { http_status: code, reason },
            Attempt::Transient(reason) => last_reason = reason,
        }
    }
    FetchStatus::TransientFailure { attempts: cfg.max_attempts.max(1), reason: last_reason }
}

fn request(agent: &ureq::Agent, url: &str) -> Attempt {
    match agent.get(url).call() {
        Ok(mut resp) => {
            let code = resp.status().as_u16();
            match code {
                200..=299 => match resp.body_mut().read_to_vec() {
                    Ok(body) => Attempt::Ok(body),
                    Err(e) => Attempt::Transient(format!("body read failed: {e}")),
                },
                429 | 500..=599 => Attempt::Transient(format!("http {code}")),
                _ => Attempt::Permanent(Some(code), format!("http {code}")),
            }
        }
        Err(e) => Attempt::Transient(e.to_string()),
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

fn to_png(body: &[u8]) -> Result<Vec<u8>, String> {
    if body.starts_with(&PNG_SIGNATURE) {
        return Ok(body.to_vec());
    }
    let img = image::load_from_memory(body).map_err(|e| format!("undecodable image: {e}"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| format!("png encode failed: {e}"))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_substitution() {
        let t = TileCoord { zoom: 18, x: 5, y: 7 };
        assert_eq!(render_url("http://h/{z}/{x}/{y}.png?k={key}", t, Some("abc")), "http://h/18/5/7.png?k=abc");
        let center = render_url("http://h/c={lat},{lon}", TileCoord { zoom: 1, x: 1, y: 1 }, None);
        assert!(center.starts_with("http://h/c=-"));
    }

    #[test]
    fn template_validation() {
        let mut cfg = FetchConfig::new("http://h/static.png", "/tmp/none", 1.0);
        assert!(matches!(fetch_tiles(&[], &cfg), Err(FetchError::BadTemplate(_))));
        cfg.url_template = "http://h/{z}/{x}/{y}?key={key}".into();
        cfg.api_key = None;
        assert_eq!(fetch_tiles(&[], &cfg), Err(FetchError::MissingApiKey));
        cfg.api_key = Some("k".into());
        cfg.rate_limit = 0.0;
        assert_eq!(fetch_tiles(&[], &cfg), Err(FetchError::BadRateLimit(0.0)));
    }

    #[test]
    fn empty_list_gives_empty_status() {
        let cfg = FetchConfig::new("http://127.0.0.1:9/{z}/{x}/{y}.png", "/tmp/none", 5.0);
        assert_eq!(fetch_tiles(&[], &cfg).unwrap(), vec![]);
    }

    #[test]
    fn cache_layout() {
        let p = tile_cache_path(Path::new("/c"), TileCoord { zoom: 18, x: 1, y: 2 });
        assert_eq!(p, PathBuf::from("/c/18/1/2.png"));
    }
}
