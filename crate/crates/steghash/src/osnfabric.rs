//! Deterministic multi-service posting fabric.
//!
//! Stands in for a set of real social networks: accounts publish image posts
//! with ordered hashtags, each service caps how many tags one search query
//! may carry, uploads pass through a lossy sanitization channel that may
//! scrub the image's LSB plane, and accounts are rate limited per simulated
//! hour. Everything random flows from one seeded generator so a fabric is a
//! pure function of its seed and call sequence; the whole state round-trips
//! through a plain-file store.
//!
//! Posts are append-only. A post whose hidden content was destroyed stays
//! where it is, hashtags intact, which is exactly what keeps chain walks
//! readable past failed uploads.

use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stegimg::{self, CarrierImage};

/// Rolling rate-limit window, one simulated hour.
pub const RATE_WINDOW_SECS: u64 = 3600;

const FABRIC_FORMAT: &str = "steghash-fabric v1";

#[derive(Debug, Error)]
pub enum Error {
    #[error("fabric needs at least one service")]
    NoServices,
    #[error("duplicate service name {0:?}")]
    DuplicateService(String),
    #[error("service {0:?} misconfigured: {1}")]
    BadService(String, &'static str),
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("account {account:?} exceeded {limit} posts per hour on {service:?}")]
    RateLimited {
        service: String,
        account: String,
        limit: u32,
    },
    #[error("post rejected: {0}")]
    InvalidPost(&'static str),
    #[error("search needs between 1 and {arity} tags on {service:?}, got {got}")]
    ArityExceeded {
        service: String,
        arity: usize,
        got: usize,
    },
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sanitization probability override for frames up to `max_payload` bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizeRule {
    pub max_payload: u16,
    pub prob: f64,
}

/// Tiny embedded payloads tend to survive real upload pipelines; default
/// rule: frames carrying at most 10 payload bytes are never sanitized.
pub fn default_sanitize_rules() -> Vec<SanitizeRule> {
    vec![SanitizeRule {
        max_payload: 10,
        prob: 0.0,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub name: String,
    /// Max hashtags in one search query.
    pub search_arity: usize,
    /// Baseline probability that an uploaded image loses its LSB plane.
    pub sanitize_prob: f64,
    /// Payload-size overrides, first matching rule wins.
    #[serde(default = "default_sanitize_rules")]
    pub sanitize_rules: Vec<SanitizeRule>,
    /// Max posts per account per simulated hour.
    pub rate_limit: u32,
}

impl ServiceConfig {
    pub fn new(name: impl Into<String>, search_arity: usize, sanitize_prob: f64, rate_limit: u32) -> Self {
        ServiceConfig {
            name: name.into(),
            search_arity,
            sanitize_prob,
            sanitize_rules: default_sanitize_rules(),
            rate_limit,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.search_arity < 1 {
            return Err(Error::BadService(self.name.clone(), "search_arity must be >= 1"));
        }
        for p in std::iter::once(self.sanitize_prob).chain(self.sanitize_rules.iter().map(|r| r.prob)) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::BadService(
                    self.name.clone(),
                    "sanitize probability outside [0, 1]",
                ));
            }
        }
        Ok(())
    }

    /// Probability applied to an upload whose embedded frame carries
    /// `payload_len` bytes; `None` means no readable frame was found.
    fn effective_prob(&self, payload_len: Option<u16>) -> f64 {
        if let Some(len) = payload_len {
            for rule in &self.sanitize_rules {
                if len <= rule.max_payload {
                    return rule.prob;
                }
            }
        }
        self.sanitize_prob
    }
}

/// One published item: ordered hashtags, carrier image, provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FabricPost {
    pub post_id: u64,
    pub service: String,
    pub account: String,
    pub hashtags: Vec<String>,
    pub image: CarrierImage,
    pub timestamp: u64,
}

/// The services plus everything ever posted to them.
#[derive(Debug, Clone)]
pub struct FabricState {
    services: Vec<ServiceConfig>,
    posts: Vec<FabricPost>,
    clock: u64,
    rng_seed: u64,
    post_interval: u64,
    rng: ChaCha20Rng,
}

impl PartialEq for FabricState {
    fn eq(&self, other: &Self) -> bool {
        self.services == other.services
            && self.posts == other.posts
            && self.clock == other.clock
            && self.rng_seed == other.rng_seed
            && self.post_interval == other.post_interval
            && self.rng.get_word_pos() == other.rng.get_word_pos()
    }
}

impl FabricState {
    pub fn new(services: Vec<ServiceConfig>, seed: u64) -> Result<Self, Error> {
        if services.is_empty() {
            return Err(Error::NoServices);
        }
        for (i, svc) in services.iter().enumerate() {
            svc.validate()?;
            if services[..i].iter().any(|s| s.name == svc.name) {
                return Err(Error::DuplicateService(svc.name.clone()));
            }
        }
        Ok(FabricState {
            services,
            posts: Vec::new(),
            clock: 0,
            rng_seed: seed,
            post_interval: 1,
            rng: ChaCha20Rng::seed_from_u64(seed),
        })
    }

    /// Simulated seconds the clock advances per accepted post (default 1).
    pub fn set_post_interval(&mut self, secs: u64) {
        self.post_interval = secs.max(1);
    }

    pub fn post_interval(&self) -> u64 {
        self.post_interval
    }

    pub fn services(&self) -> &[ServiceConfig] {
        &self.services
    }

    pub fn service(&self, name: &str) -> Result<&ServiceConfig, Error> {
        self.services
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownService(name.to_string()))
    }

    pub fn posts(&self) -> &[FabricPost] {
        &self.posts
    }

    pub fn post(&self, post_id: u64) -> Option<&FabricPost> {
        self.posts.get(post_id as usize)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    /// Publish an image post. The stored image is the uploaded one, except
    /// that with the service's sanitize probability every channel LSB is
    /// replaced by fresh seeded random bits.
    pub fn publish_post(
        &mut self,
        service: &str,
        account: &str,
        hashtags: Vec<String>,
        image: CarrierImage,
    ) -> Result<u64, Error> {
        let svc = self.service(service)?.clone();
        if hashtags.is_empty() {
            return Err(Error::InvalidPost("hashtags must not be empty"));
        }
        if account.is_empty() {
            return Err(Error::InvalidPost("account must not be empty"));
        }
        let timestamp = self.clock + self.post_interval;
        let window_start = timestamp.saturating_sub(RATE_WINDOW_SECS);
        let recent = self
            .posts
            .iter()
            .filter(|p| p.service == service && p.account == account && p.timestamp > window_start)
            .count();
        if recent as u64 >= svc.rate_limit as u64 {
            return Err(Error::RateLimited {
                service: service.to_string(),
                account: account.to_string(),
                limit: svc.rate_limit,
            });
        }

        // One decision word per post, sanitize bits only when they are used,
        // so the stream position is a pure function of the call sequence.
        let decision = self.rng.next_u64();
        let payload_len = stegimg::extract(&image)
            .ok()
            .map(|f| f.payload.len() as u16);
        let prob = svc.effective_prob(payload_len);
        let threshold = (prob * 2f64.powi(64)) as u128;
        let image = if (decision as u128) < threshold {
            self.randomize_lsbs(image)
        } else {
            image
        };

        let post_id = self.posts.len() as u64;
        self.clock = timestamp;
        self.posts.push(FabricPost {
            post_id,
            service: service.to_string(),
            account: account.to_string(),
            hashtags,
            image,
            timestamp,
        });
        Ok(post_id)
    }

    fn randomize_lsbs(&mut self, image: CarrierImage) -> CarrierImage {
        let mut pixels = image.pixels().to_vec();
        let mut bits = vec![0u8; pixels.len().div_ceil(8)];
        self.rng.fill_bytes(&mut bits);
        for (i, channel) in pixels.iter_mut().enumerate() {
            let bit = (bits[i / 8] >> (7 - i % 8)) & 1;
            *channel = (*channel & !1) | bit;
        }
        CarrierImage::new(image.width(), image.height(), pixels).expect("dimensions unchanged")
    }

    /// All posts of `service` whose tag set contains every query tag,
    /// oldest first. Order of tags within a post does not matter here.
    pub fn search(&self, service: &str, query_tags: &[String]) -> Result<Vec<&FabricPost>, Error> {
        let svc = self.service(service)?;
        if query_tags.is_empty() || query_tags.len() > svc.search_arity {
            return Err(Error::ArityExceeded {
                service: service.to_string(),
                arity: svc.search_arity,
                got: query_tags.len(),
            });
        }
        Ok(self
            .posts
            .iter()
            .filter(|p| {
                p.service == service && query_tags.iter().all(|t| p.hashtags.contains(t))
            })
            .collect())
    }

    /// Write the whole fabric under `dir`: `fabric.json`, `posts.jsonl`,
    /// and one PPM per post in `images/`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), Error> {
        let dir = dir.as_ref();
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;

        let meta = FabricMeta {
            format: FABRIC_FORMAT.to_string(),
            services: self.services.clone(),
            clock: self.clock,
            rng_seed: self.rng_seed,
            rng_draw_counter: u64::try_from(self.rng.get_word_pos())
                .expect("draw counter fits 64 bits"),
            post_interval: self.post_interval,
        };
        std::fs::write(
            dir.join("fabric.json"),
            serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
        )?;

        let mut lines = String::new();
        for post in &self.posts {
            let record = PostRecord {
                post_id: post.post_id,
                service: post.service.clone(),
                account: post.account.clone(),
                hashtags: post.hashtags.clone(),
                timestamp: post.timestamp,
                image: format!("{}.ppm", post.post_id),
            };
            lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
            lines.push('\n');
            post.image.save_ppm(images.join(&record.image)).map_err(io_of_steg)?;
        }
        std::fs::write(dir.join("posts.jsonl"), lines)?;
        Ok(())
    }

    /// Read a fabric back; structural equality with the saved one includes
    /// the generator position.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, Error> {
        let dir = dir.as_ref();
        let meta_text = std::fs::read_to_string(dir.join("fabric.json"))?;
        let meta: FabricMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::CorruptStore(format!("fabric.json: {e}")))?;
        if meta.format != FABRIC_FORMAT {
            return Err(Error::CorruptStore(format!(
                "unknown store format {:?}",
                meta.format
            )));
        }

        let mut fabric = FabricState::new(meta.services, meta.rng_seed)
            .map_err(|e| Error::CorruptStore(e.to_string()))?;
        fabric.clock = meta.clock;
        fabric.post_interval = meta.post_interval;
        fabric.rng.set_word_pos(meta.rng_draw_counter as u128);

        let posts_text = std::fs::read_to_string(dir.join("posts.jsonl"))?;
        for (idx, line) in posts_text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: PostRecord = serde_json::from_str(line)
                .map_err(|e| Error::CorruptStore(format!("posts.jsonl line {}: {e}", idx + 1)))?;
            if record.post_id != fabric.posts.len() as u64 {
                return Err(Error::CorruptStore(format!(
                    "post_id {} out of sequence (expected {})",
                    record.post_id,
                    fabric.posts.len()
                )));
            }
            if fabric.service(&record.service).is_err() {
                return Err(Error::CorruptStore(format!(
                    "post {} names unknown service {:?}",
                    record.post_id, record.service
                )));
            }
            if record.hashtags.is_empty() {
                return Err(Error::CorruptStore(format!(
                    "post {} has no hashtags",
                    record.post_id
                )));
            }
            let image = CarrierImage::load_ppm(dir.join("images").join(&record.image))
                .map_err(|e| Error::CorruptStore(format!("post {}: {e}", record.post_id)))?;
            fabric.posts.push(FabricPost {
                post_id: record.post_id,
                service: record.service,
                account: record.account,
                hashtags: record.hashtags,
                image,
                timestamp: record.timestamp,
            });
        }
        Ok(fabric)
    }
}

fn io_of_steg(err: stegimg::Error) -> Error {
    match err {
        stegimg::Error::Io(e) => Error::Io(e),
        other => Error::CorruptStore(other.to_string()),
    }
}

#[derive(Serialize, Deserialize)]
struct FabricMeta {
    format: String,
    services: Vec<ServiceConfig>,
    clock: u64,
    rng_seed: u64,
    rng_draw_counter: u64,
    post_interval: u64,
}

#[derive(Serialize, Deserialize)]
struct PostRecord {
    post_id: u64,
    service: String,
    account: String,
    hashtags: Vec<String>,
    timestamp: u64,
    image: String,
}
