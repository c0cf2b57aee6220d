//! Hide short messages in the *order* of hashtags on image posts.
//!
//! A fixed dictionary of `n` hashtags gives `n!` orderings; each ordering is
//! an integer address, and a password-keyed generator walks those addresses
//! as a chain. Every chain step is one image post: its hashtag order encodes
//! the step's address, its pixels carry an LSB-embedded payload fragment, and
//! its final hashtag names the service hosting the next post. The crate
//! bundles the address codecs ([`permcode`]), the chain generator
//! ([`chaingen`]), the carrier layer ([`stegimg`]), a deterministic
//! multi-service network simulation to post into ([`osnfabric`]), the
//! publisher/reader pair that walks chains end to end ([`courier`]), and a
//! defender-side detector for the resulting posting pattern ([`watchdog`]).
//!
//! Start with the runnable examples (`cargo run --example covert_roundtrip`)
//! or the `steghash` binary for the command-line surface.

pub mod chaingen;
pub mod cli;
pub mod courier;
pub mod osnfabric;
pub mod permcode;
pub mod stegimg;
pub mod watchdog;

pub use chaingen::{derive_key, ChainKey, ChainPosition};
pub use courier::{
    publish_chain, read_chain, resolve_next_service, split_message, CarrierSource, CourierConfig,
    NoiseCarriers, PublishReport,
};
pub use osnfabric::{FabricPost, FabricState, SanitizeRule, ServiceConfig};
pub use permcode::{
    address_length, permutation_count, stats_table, wasted_fraction, Address, CodecKind,
    Dictionary, HashtagPermutation,
};
pub use stegimg::{deframe, embed, extract, frame, CarrierImage, StegoFrame};
pub use watchdog::{capacity, detect, format_bytes, AnomalyReport, DetectorConfig, FlaggedGroup};
