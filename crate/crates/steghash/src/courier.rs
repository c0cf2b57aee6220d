//! The publisher/reader pair that walks a chain end to end.
//!
//! Publishing fragment `f` at chain step `s` means: frame it, embed it in a
//! fresh carrier, post the carrier with hashtags ordered by address
//! `next_address(s)`, then immediately try to read it back from the store.
//! If the upload was sanitized the post stays behind as a decoy and the same
//! fragment is republished at step `s + 1`; addresses are never reused. The
//! service hosting step `s + 1` is named by the final hashtag of step `s`,
//! so even a decoy keeps the chain connected.
//!
//! The reader holds nothing but the dictionary, the password and the start
//! service. It recomputes each step's expected tag order, finds the post by
//! searching the dictionary's rarest tags (capped by the service's search
//! arity), skips posts whose payload fails magic or CRC checks, and stops
//! once every fragment index announced by the frame headers has arrived.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::chaingen::{ChainKey, ChainPosition};
use crate::osnfabric::{self, FabricState};
use crate::permcode::{self, CodecKind, Dictionary, HashtagPermutation};
use crate::stegimg::{self, CarrierImage};

#[derive(Debug, Error)]
pub enum Error {
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("fragment size must be at least 1")]
    ZeroFragmentSize,
    #[error("account pool must not be empty")]
    NoAccounts,
    #[error("chain needs {needed} addresses but the dictionary only has {available}")]
    CapacityExhausted { needed: u128, available: u128 },
    #[error("message splits into {0} fragments, above the 65535 frame limit")]
    TooManyFragments(usize),
    #[error("fragment {fragment} used up its retry budget ({attempts} attempts)")]
    RetryBudgetExceeded { fragment: u16, attempts: u32 },
    #[error("carrier holds {capacity} bits, frame needs {needed}")]
    CarrierTooSmall { needed: usize, capacity: usize },
    #[error("key derived for {key_n} tags, dictionary has {dict_n}")]
    KeyMismatch { key_n: u8, dict_n: u8 },
    #[error("tag {0:?} is not in the dictionary")]
    ForeignPermutation(String),
    #[error("chain broken at step {step}: no post with the expected tag order on {service:?}")]
    ChainBroken { step: u128, service: String },
    #[error("chain ended with {recovered} fragments recovered, total says {expected:?}")]
    ReassemblyGap { recovered: usize, expected: Option<u16> },
    #[error("fragments disagree on the total: {first} vs {second}")]
    ConflictingTotals { first: u16, second: u16 },
    #[error(transparent)]
    Fabric(#[from] osnfabric::Error),
    #[error(transparent)]
    Codec(#[from] permcode::Error),
    #[error(transparent)]
    Carrier(#[from] stegimg::Error),
}

/// Everything both ends must agree on, besides the password.
#[derive(Debug, Clone)]
pub struct CourierConfig {
    /// Bytes per fragment, one fragment per post.
    pub fragment_size: u16,
    /// Service hosting chain step 0; shared out of band.
    pub start_service: String,
    pub codec: CodecKind,
    /// Extra publish attempts allowed per fragment beyond the first.
    pub max_retries_per_fragment: u32,
    /// Accounts used round-robin across posts.
    pub account_pool: Vec<String>,
}

impl CourierConfig {
    pub fn new(fragment_size: u16, start_service: impl Into<String>) -> Self {
        CourierConfig {
            fragment_size,
            start_service: start_service.into(),
            codec: CodecKind::default(),
            max_retries_per_fragment: 8,
            account_pool: vec!["courier".to_string()],
        }
    }
}

/// What one fragment cost to deliver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentRecord {
    pub fragment_index: u16,
    pub attempts: u32,
    pub steps_consumed: Vec<ChainPosition>,
    /// Service where the surviving copy landed.
    pub final_service: String,
}

/// Full accounting of one published chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishReport {
    pub fragments: Vec<FragmentRecord>,
    pub posts_published: u64,
    pub decoys_left: u64,
    pub addresses_consumed: u128,
}

/// Supplies one carrier image per publish attempt.
pub trait CarrierSource {
    fn next_carrier(&mut self) -> CarrierImage;
}

impl<F: FnMut() -> CarrierImage> CarrierSource for F {
    fn next_carrier(&mut self) -> CarrierImage {
        self()
    }
}

/// Seeded stream of noise images of a fixed size.
#[derive(Debug)]
pub struct NoiseCarriers {
    rng: ChaCha20Rng,
    width: u32,
    height: u32,
}

impl NoiseCarriers {
    pub fn new(seed: u64, width: u32, height: u32) -> Self {
        NoiseCarriers {
            rng: ChaCha20Rng::seed_from_u64(seed),
            width,
            height,
        }
    }

    /// Square images just large enough for a frame of `frame_bytes` bytes.
    pub fn sized_for(frame_bytes: usize, seed: u64) -> Self {
        let channels = frame_bytes * 8;
        let pixels = channels.div_ceil(3);
        let side = (pixels as f64).sqrt().ceil() as u32;
        Self::new(seed, side.max(1), side.max(1))
    }
}

impl CarrierSource for NoiseCarriers {
    fn next_carrier(&mut self) -> CarrierImage {
        CarrierImage::noise(self.width, self.height, &mut self.rng).expect("nonzero dimensions")
    }
}

/// Cut a message into `ceil(len / fragment_size)` pieces; all of
/// `fragment_size` bytes except possibly the last.
pub fn split_message(message: &[u8], fragment_size: u16) -> Result<Vec<Vec<u8>>, Error> {
    if message.is_empty() {
        return Err(Error::EmptyMessage);
    }
    if fragment_size == 0 {
        return Err(Error::ZeroFragmentSize);
    }
    Ok(message
        .chunks(fragment_size as usize)
        .map(<[u8]>::to_vec)
        .collect())
}

/// Where the *next* post lives: the service mapped to the permutation's
/// final hashtag.
pub fn resolve_next_service<'d>(
    perm: &HashtagPermutation,
    dict: &'d Dictionary,
) -> Result<&'d str, Error> {
    let last = perm.last_tag();
    dict.service_for(last)
        .ok_or_else(|| Error::ForeignPermutation(last.to_string()))
}

fn check_shared_config(
    fabric: &FabricState,
    dict: &Dictionary,
    key: &ChainKey,
    cfg: &CourierConfig,
) -> Result<(), Error> {
    if key.dict_size() != dict.size() {
        return Err(Error::KeyMismatch {
            key_n: key.dict_size(),
            dict_n: dict.size(),
        });
    }
    fabric.service(&cfg.start_service)?;
    // The selector map must point only at services that exist here.
    for service in dict.services() {
        fabric.service(service)?;
    }
    Ok(())
}

/// Split, frame, embed and post `message` along the keyed chain, verifying
/// every upload and republishing sanitized fragments at the next step.
pub fn publish_chain(
    fabric: &mut FabricState,
    dict: &Dictionary,
    key: &ChainKey,
    cfg: &CourierConfig,
    message: &[u8],
    carriers: &mut dyn CarrierSource,
) -> Result<PublishReport, Error> {
    check_shared_config(fabric, dict, key, cfg)?;
    if cfg.account_pool.is_empty() {
        return Err(Error::NoAccounts);
    }
    let fragments = split_message(message, cfg.fragment_size)?;
    if fragments.len() > u16::MAX as usize {
        return Err(Error::TooManyFragments(fragments.len()));
    }
    let total = fragments.len() as u16;
    let available = key.address_count();
    if fragments.len() as u128 > available {
        return Err(Error::CapacityExhausted {
            needed: fragments.len() as u128,
            available,
        });
    }

    let mut step = 0u128;
    let mut current_service = cfg.start_service.clone();
    let mut records = Vec::with_capacity(fragments.len());
    let mut posts_published = 0u64;
    let mut decoys_left = 0u64;

    for (index, fragment) in fragments.iter().enumerate() {
        let mut attempts = 0u32;
        let mut steps_consumed = Vec::new();
        loop {
            if step >= available {
                return Err(Error::CapacityExhausted {
                    needed: step + 1,
                    available,
                });
            }
            if attempts > cfg.max_retries_per_fragment {
                return Err(Error::RetryBudgetExceeded {
                    fragment: index as u16,
                    attempts,
                });
            }
            let position = ChainPosition {
                step,
                address: key.next_address(step),
            };
            let perm = dict.unrank(&position.address, cfg.codec)?;
            let framed = stegimg::frame(fragment, index as u16, total)?;
            let carrier = carriers.next_carrier();
            if carrier.capacity_bits() < framed.len() * 8 {
                return Err(Error::CarrierTooSmall {
                    needed: framed.len() * 8,
                    capacity: carrier.capacity_bits(),
                });
            }
            let stego = stegimg::embed(&carrier, &framed)?;
            let account = &cfg.account_pool[posts_published as usize % cfg.account_pool.len()];
            let post_id =
                fabric.publish_post(&current_service, account, perm.tags().to_vec(), stego)?;
            posts_published += 1;
            attempts += 1;
            steps_consumed.push(position);
            step += 1;
            // Decoys keep linking: the hop comes from the tag order, which
            // sanitization leaves intact.
            current_service = resolve_next_service(&perm, dict)?.to_string();

            let stored = fabric.post(post_id).expect("post was just accepted");
            let delivered = matches!(
                stegimg::extract(&stored.image), Ok(f) if f.payload == *fragment
            );
            if delivered {
                records.push(FragmentRecord {
                    fragment_index: index as u16,
                    attempts,
                    steps_consumed,
                    final_service: stored.service.clone(),
                });
                break;
            }
            decoys_left += 1;
        }
    }

    Ok(PublishReport {
        fragments: records,
        posts_published,
        decoys_left,
        addresses_consumed: step,
    })
}

/// Walk the chain from step 0 and reassemble the message, skipping decoys.
pub fn read_chain(
    fabric: &FabricState,
    dict: &Dictionary,
    key: &ChainKey,
    cfg: &CourierConfig,
) -> Result<Vec<u8>, Error> {
    check_shared_config(fabric, dict, key, cfg)?;
    let available = key.address_count();
    let by_rarity = tags_by_rarity(fabric, dict);

    let mut current_service = cfg.start_service.clone();
    let mut recovered: BTreeMap<u16, Vec<u8>> = BTreeMap::new();
    let mut expected_total: Option<u16> = None;
    let mut step = 0u128;

    loop {
        if let Some(total) = expected_total {
            if recovered.len() == total as usize {
                break;
            }
        }
        if step >= available {
            return Err(Error::ReassemblyGap {
                recovered: recovered.len(),
                expected: expected_total,
            });
        }

        let address = key.next_address(step);
        let perm = dict.unrank(&address, cfg.codec)?;
        let arity = fabric.service(&current_service)?.search_arity;
        let query = by_rarity[..arity.min(by_rarity.len())].to_vec();
        let hits = fabric.search(&current_service, &query)?;
        // Exact ordered match; oldest post wins among duplicates.
        let Some(post) = hits.into_iter().find(|p| p.hashtags == perm.tags()) else {
            return Err(Error::ChainBroken {
                step,
                service: current_service,
            });
        };

        if let Ok(frame) = stegimg::extract(&post.image) {
            match expected_total {
                Some(total) if total != frame.fragment_total => {
                    return Err(Error::ConflictingTotals {
                        first: total,
                        second: frame.fragment_total,
                    });
                }
                None => expected_total = Some(frame.fragment_total),
                _ => {}
            }
            recovered.entry(frame.fragment_index).or_insert(frame.payload);
        }

        current_service = resolve_next_service(&perm, dict)?.to_string();
        step += 1;
    }

    let total = expected_total.expect("loop breaks only once a total is known");
    let mut message = Vec::new();
    for index in 0..total {
        let Some(part) = recovered.remove(&index) else {
            return Err(Error::ReassemblyGap {
                recovered: recovered.len(),
                expected: Some(total),
            });
        };
        message.extend_from_slice(&part);
    }
    Ok(message)
}

/// Dictionary tags ordered by how rarely they occur across the whole fabric,
/// ties broken by dictionary order.
fn tags_by_rarity(fabric: &FabricState, dict: &Dictionary) -> Vec<String> {
    let mut counted: Vec<(usize, usize, &String)> = dict
        .tags()
        .iter()
        .enumerate()
        .map(|(order, tag)| {
            let count = fabric
                .posts()
                .iter()
                .filter(|p| p.hashtags.contains(tag))
                .count();
            (count, order, tag)
        })
        .collect();
    counted.sort();
    counted.into_iter().map(|(_, _, tag)| tag.clone()).collect()
}
