//! Quality scorers. Rewards are always `score(next) - score(prev)`; the
//! providers here only produce the scores.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{extract_features, slot, FeatureError, FeatureVector};
use crate::raster::{psnr, Raster, RasterError, PSNR_CAP_DB};

/// Environment variable that overrides the remote scorer endpoint.
pub const SCORER_URL_ENV: &str = "SCORER_URL";

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("the oracle provider needs the clean image")]
    MissingClean,
    #[error("scorer request failed after {attempts} attempt(s): {reason}")]
    Transport { attempts: u32, reason: String },
    #[error("scorer returned HTTP {status} after {attempts} attempt(s)")]
    Status { status: u16, attempts: u32 },
    #[error("malformed scorer response: {0}")]
    Malformed(String),
}

pub trait RewardProvider: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, img: &Raster) -> Result<f64, RewardError>;
    /// Inclusive score range, if bounded.
    fn range(&self) -> (f64, f64);

    /// Scores `img` when its feature vector is already known. Providers that
    /// derive their score from the features override this to skip work.
    fn score_with_features(&self, img: &Raster, _features: &FeatureVector) -> Result<f64, RewardError> {
        self.score(img)
    }

    /// `score(next) - score(prev)`.
    fn reward(&self, prev: &Raster, next: &Raster) -> Result<f64, RewardError> {
        Ok(self.score(next)? - self.score(prev)?)
    }
}

/// Full-reference PSNR against a hidden clean image.
#[derive(Debug, Clone)]
pub struct OraclePsnr {
    clean: Raster,
}

impl OraclePsnr {
    pub fn new(clean: Raster) -> Self {
        Self { clean }
    }

    pub fn clean(&self) -> &Raster {
        &self.clean
    }
}

pub fn oracle_psnr_provider(clean: Raster) -> OraclePsnr {
    OraclePsnr::new(clean)
}

impl RewardProvider for OraclePsnr {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&self, img: &Raster) -> Result<f64, RewardError> {
        Ok(psnr(img, &self.clean)?)
    }

    fn range(&self) -> (f64, f64) {
        (0.0, PSNR_CAP_DB)
    }
}

/// Per-penalty weights of the no-reference proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyWeights {
    pub noise: f64,
    pub blockiness: f64,
    pub blur: f64,
    pub haze: f64,
    pub dark: f64,
    pub rain: f64,
    pub contrast: f64,
}

impl Default for ProxyWeights {
    fn default() -> Self {
        Self {
            noise: 1.0,
            blockiness: 1.0,
            blur: 1.0,
            haze: 1.0,
            dark: 1.0,
            rain: 1.0,
            contrast: 1.0,
        }
    }
}

// Reference levels sit near the 90th percentile of the clean calibration
// corpus, so typical clean images carry no haze, blur or darkness penalty.

/// Mean V at or above this carries no darkness penalty.
pub const PROXY_BRIGHT_V: f64 = 0.55;
/// Contrast slot at or above this carries no contrast penalty.
pub const PROXY_CONTRAST: f64 = 0.3;
/// Dark-channel mean at or below this carries no haze penalty.
pub const PROXY_HAZE_REF: f64 = 0.35;
/// `1 - sharpness` at or below this carries no blur penalty.
pub const PROXY_BLUR_REF: f64 = 0.4;
pub const PROXY_MIN: f64 = 1.0;
pub const PROXY_MAX: f64 = 5.0;

/// Individual proxy penalties, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyPenalties {
    pub noise: f64,
    pub blockiness: f64,
    pub blur: f64,
    pub haze: f64,
    pub dark: f64,
    pub rain: f64,
    pub contrast: f64,
}

/// `(x - r) / (1 - r)` clamped at zero; maps [r, 1] onto [0, 1].
fn hinge(x: f64, r: f64) -> f64 {
    ((x - r) / (1.0 - r)).max(0.0)
}

impl ProxyPenalties {
    pub fn from_features(f: &FeatureVector) -> Self {
        Self {
            noise: f[slot::NOISE],
            blockiness: f[slot::BLOCKINESS],
            blur: hinge(1.0 - f[slot::SHARPNESS], PROXY_BLUR_REF),
            haze: hinge(f[slot::DARK_CHANNEL], PROXY_HAZE_REF),
            dark: (1.0 - f[slot::MEAN_V] / PROXY_BRIGHT_V).max(0.0),
            rain: f[slot::DIRECTIONAL],
            contrast: (1.0 - f[slot::STD_LUMA] / PROXY_CONTRAST).max(0.0),
        }
    }

    pub fn weighted_sum(&self, w: &ProxyWeights) -> f64 {
        w.noise * self.noise
            + w.blockiness * self.blockiness
            + w.blur * self.blur
            + w.haze * self.haze
            + w.dark * self.dark
            + w.rain * self.rain
            + w.contrast * self.contrast
    }
}

/// Deterministic no-reference score in [1, 5] built from the feature slots.
#[derive(Debug, Clone, Default)]
pub struct Proxy {
    pub weights: ProxyWeights,
}

pub fn proxy_nr_provider(weights: ProxyWeights) -> Proxy {
    Proxy { weights }
}

pub fn proxy_score_from_features(f: &FeatureVector, w: &ProxyWeights) -> f64 {
    let s = PROXY_MAX - ProxyPenalties::from_features(f).weighted_sum(w);
    s.clamp(PROXY_MIN, PROXY_MAX)
}

impl RewardProvider for Proxy {
    fn name(&self) -> &str {
        "proxy"
    }

    fn score(&self, img: &Raster) -> Result<f64, RewardError> {
        Ok(proxy_score_from_features(&extract_features(img)?, &self.weights))
    }

    fn score_with_features(&self, _img: &Raster, features: &FeatureVector) -> Result<f64, RewardError> {
        Ok(proxy_score_from_features(features, &self.weights))
    }

    fn range(&self) -> (f64, f64) {
        (PROXY_MIN, PROXY_MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first one.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Delay before the first retry; doubled for every further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    200
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    /// The `/score` endpoint for the configured base URL.
    pub fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/score") {
            base.to_string()
        } else {
            format!("{base}/score")
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    image: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

/// HTTP client for an external quality evaluator.
#[derive(Debug, Clone)]
pub struct Remote {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
}

pub fn remote_provider(cfg: RemoteConfig) -> Result<Remote, RewardError> {
    Remote::new(cfg)
}

impl Remote {
    pub fn new(cfg: RemoteConfig) -> Result<Self, RewardError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| RewardError::Transport {
                attempts: 0,
                reason: e.to_string(),
            })?;
        Ok(Self { cfg, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn attempt(&self, body: &str) -> Result<reqwest::blocking::Response, reqwest::Error> {
        self.client
            .post(self.cfg.endpoint())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_owned())
            .send()
    }
}

/// Parses a scorer response body. The score must be a finite number.
pub fn parse_score_response(body: &str) -> Result<f64, RewardError> {
    let r: ScoreResponse =
        serde_json::from_str(body).map_err(|e| RewardError::Malformed(format!("{e}: {}", snippet(body))))?;
    if !r.score.is_finite() {
        return Err(RewardError::Malformed(format!("non-finite score {}", r.score)));
    }
    Ok(r.score)
}

fn snippet(body: &str) -> String {
    body.chars().take(80).collect()
}

/// JSON request body for `img`: `{"image":"<base64 png>"}`.
pub fn score_request_body(img: &Raster) -> Result<String, RewardError> {
    let png = img.encode_png()?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(png);
    Ok(serde_json::to_string(&ScoreRequest { image: &b64 }).expect("request serializes"))
}

impl RewardProvider for Remote {
    fn name(&self) -> &str {
        "remote"
    }

    fn score(&self, img: &Raster) -> Result<f64, RewardError> {
        let body = score_request_body(img)?;
        let attempts = self.cfg.retries + 1;
        let mut last = RewardError::Transport {
            attempts: 0,
            reason: "no attempt made".into(),
        };
        for k in 0..attempts {
            if k > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (k - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(resp) if resp.status().is_server_error() => {
                    let status = resp.status().as_u16();
                    log::warn!("scorer attempt {}/{attempts}: HTTP {status}", k + 1);
                    last = RewardError::Status {
                        status,
                        attempts: k + 1,
                    };
                }
                Ok(resp) if !resp.status().is_success() => {
                    return Err(RewardError::Status {
                        status: resp.status().as_u16(),
                        attempts: k + 1,
                    });
                }
                Ok(resp) => {
                    let text = resp.text().map_err(|e| RewardError::Transport {
                        attempts: k + 1,
                        reason: e.to_string(),
                    })?;
                    return parse_score_response(&text);
                }
                Err(e) => {
                    log::warn!("scorer attempt {}/{attempts}: {e}", k + 1);
                    last = RewardError::Transport {
                        attempts: k + 1,
                        reason: e.to_string(),
                    };
                }
            }
        }
        Err(last)
    }

    fn range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Provider selection as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Oracle,
    Proxy {
        #[serde(default)]
        weights: ProxyWeights,
    },
    Remote(RemoteConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Proxy {
            weights: ProxyWeights::default(),
        }
    }
}

impl ProviderConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProviderConfig::Oracle => "oracle",
            ProviderConfig::Proxy { .. } => "proxy",
            ProviderConfig::Remote(_) => "remote",
        }
    }

    /// Applies the `SCORER_URL` override to a remote config.
    pub fn with_env_override(mut self) -> Self {
        if let ProviderConfig::Remote(r) = &mut self {
            if let Ok(url) = std::env::var(SCORER_URL_ENV) {
                if !url.is_empty() {
                    r.url = url;
                }
            }
        }
        self
    }

    pub fn needs_clean(&self) -> bool {
        matches!(self, ProviderConfig::Oracle)
    }

    /// Builds a provider; `clean` is required for the oracle.
    pub fn build(&self, clean: Option<&Raster>) -> Result<Box<dyn RewardProvider>, RewardError> {
        Ok(match self {
            ProviderConfig::Oracle => Box::new(OraclePsnr::new(clean.ok_or(RewardError::MissingClean)?.clone())),
            ProviderConfig::Proxy { weights } => Box::new(Proxy { weights: *weights }),
            ProviderConfig::Remote(r) => Box::new(Remote::new(r.clone())?),
        })
    }
}
