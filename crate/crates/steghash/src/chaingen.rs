//! Keyed transition generator: the secret walk over the address space.
//!
//! A password is hashed with SHA-512 into a [`ChainKey`]; the key drives a
//! small-domain permutation `P` of `[0, n!)`, and step `s` of the chain sits
//! at address `P(s mod n!)`. Because `P` is a permutation, a window of `n!`
//! consecutive steps visits every address exactly once and the walk then
//! wraps around, like a circular linked list over the whole space.
//!
//! `P` is pinned bit-exactly so chains are portable across implementations:
//!
//! * width `l = ceil(log2 n!)` bits, split into a left half of `ceil(l/2)`
//!   bits and a right half of `floor(l/2)` bits;
//! * 8 Feistel rounds `(L, R) -> (R, L xor F(i, R))`, half widths swapping
//!   each round;
//! * `F(i, v, w)` = the first `w` bits (big-endian) of
//!   `SHA-512(key_bytes || i as one byte || v as eight big-endian bytes)`,
//!   where `w` is the width of the half being replaced;
//! * cycle-walking: outputs at or above `n!` are re-encrypted until they
//!   land inside the valid range, which keeps `P` a permutation of `[0, n!)`.
//!
//! Both ends of a channel derive the same chain from the shared password and
//! their own post counter; no other state crosses the wire.

use serde::Serialize;
use sha2::{Digest, Sha512};
use thiserror::Error;

use crate::permcode::{self, Address};

pub const ROUNDS: u8 = 8;

#[derive(Debug, Error)]
pub enum Error {
    #[error("password must not be empty")]
    EmptyPassword,
    #[error(transparent)]
    Codec(#[from] permcode::Error),
}

/// Secret material driving one chain: 64 key bytes and the dictionary size.
#[derive(Clone)]
pub struct ChainKey {
    key_bytes: [u8; 64],
    n: u8,
    addr_bits: u32,
    addr_count: u128,
}

impl std::fmt::Debug for ChainKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Key bytes stay out of debug output.
        f.debug_struct("ChainKey").field("n", &self.n).finish()
    }
}

/// One step of a chain and the address it resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChainPosition {
    pub step: u128,
    #[serde(serialize_with = "serialize_address_value")]
    pub address: Address,
}

fn serialize_address_value<S: serde::Serializer>(
    addr: &Address,
    ser: S,
) -> Result<S::Ok, S::Error> {
    ser.serialize_u128(addr.value())
}

/// Hash a password into the key for a dictionary of `n` tags.
pub fn derive_key(password: &str, n: u8) -> Result<ChainKey, Error> {
    if password.is_empty() {
        return Err(Error::EmptyPassword);
    }
    let addr_count = permcode::permutation_count(n)?;
    let addr_bits = permcode::address_length(n)?;
    Ok(ChainKey {
        key_bytes: Sha512::digest(password.as_bytes()).into(),
        n,
        addr_bits,
        addr_count,
    })
}

impl ChainKey {
    pub fn dict_size(&self) -> u8 {
        self.n
    }

    /// Number of distinct addresses, `n!`.
    pub fn address_count(&self) -> u128 {
        self.addr_count
    }

    fn round_fn(&self, round: u8, input: u64, width: u32) -> u64 {
        if width == 0 {
            return 0;
        }
        let mut hasher = Sha512::new();
        hasher.update(self.key_bytes);
        hasher.update([round]);
        hasher.update(input.to_be_bytes());
        let digest = hasher.finalize();
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) >> (64 - width)
    }

    /// The keyed permutation of `[0, 2^l)`.
    fn feistel(&self, x: u128) -> u128 {
        let half_left = self.addr_bits.div_ceil(2);
        let half_right = self.addr_bits - half_left;
        let mut left = (x >> half_right) as u64;
        let mut right = (x & ((1u128 << half_right) - 1)) as u64;
        let mut width_left = half_left;
        let mut width_right = half_right;
        for round in 0..ROUNDS {
            let f = self.round_fn(round, right, width_left);
            (left, right) = (right, left ^ f);
            (width_left, width_right) = (width_right, width_left);
        }
        ((left as u128) << half_right) | right as u128
    }

    /// Address of chain step `step`; periodic with period `n!`.
    pub fn next_address(&self, step: u128) -> Address {
        let mut value = self.feistel(step % self.addr_count);
        while value >= self.addr_count {
            value = self.feistel(value);
        }
        Address::new(value, self.n).expect("cycle walk lands in range")
    }

    /// Positions `start_step .. start_step + count`, in order.
    pub fn chain(&self, start_step: u128, count: usize) -> Vec<ChainPosition> {
        (0..count)
            .map(|i| {
                let step = start_step + i as u128;
                ChainPosition {
                    step,
                    address: self.next_address(step),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    // Frozen with an external SHA-512 implementation.
    const SHA512_TEST: &str = "ee26b0dd4af7e749aa1a8ee3c10ae9923f618980772e473f8819a5d4940e0db2\
                               7ac185f8a0e1d5f84f88bc887fd67b143732c304cc5fa9ad8e6f57f50028a8ff";
    const SHA512_SWORDFISH: &str = "9719a6439375c9115e01dceda86e210e5f2d78a6cf3f4872997746832c4c0f58\
                                    c5ae0923fabe5acfb923dfc94a117a7d444e453622912dfa193fc6636581f159";
    const SHA512_SWORDFISH_CAP: &str = "f0d864c511a20623dc77524b31f9e7ce2f7157c9666ba8dcb61f84517d4f5c1a\
                                        c9d7ac16f71b073ae74441fc444fdaee10350b8486c706dbceacdf7cba862702";

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn derive_key_is_plain_sha512_of_password() {
        assert_eq!(hex(&derive_key("test", 4).unwrap().key_bytes), SHA512_TEST);
        assert_eq!(
            hex(&derive_key("swordfish", 4).unwrap().key_bytes),
            SHA512_SWORDFISH
        );
    }

    #[test]
    fn derive_key_is_deterministic_and_case_sensitive() {
        let a = derive_key("swordfish", 4).unwrap();
        let b = derive_key("swordfish", 4).unwrap();
        assert_eq!(a.key_bytes, b.key_bytes);
        let c = derive_key("Swordfish", 4).unwrap();
        assert_ne!(a.key_bytes, c.key_bytes);
        assert_eq!(hex(&c.key_bytes), SHA512_SWORDFISH_CAP);
    }

    #[test]
    fn derive_key_rejects_empty_password_and_bad_sizes() {
        assert!(matches!(derive_key("", 4), Err(Error::EmptyPassword)));
        assert!(matches!(derive_key("pw", 1), Err(Error::Codec(_))));
        assert!(matches!(derive_key("pw", 35), Err(Error::Codec(_))));
    }

    #[test]
    fn golden_vectors_match_fixture() {
        let fixture = include_str!("../tests/golden/chain_vectors.txt");
        let mut checked = 0;
        for line in fixture.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let n: u8 = fields.next().unwrap().parse().unwrap();
            let password = fields.next().unwrap();
            let step: u128 = fields.next().unwrap().parse().unwrap();
            let expected: u128 = fields.next().unwrap().parse().unwrap();
            let key = derive_key(password, n).unwrap();
            assert_eq!(
                key.next_address(step).value(),
                expected,
                "n={n} password={password} step={step}"
            );
            checked += 1;
        }
        assert_eq!(checked, 64);
    }

    #[test]
    fn full_cycle_visits_every_address_once() {
        for n in 2..=7u8 {
            for password in ["alpha", "bravo"] {
                let key = derive_key(password, n).unwrap();
                let count = key.address_count();
                let seen: BTreeSet<u128> =
                    (0..count).map(|s| key.next_address(s).value()).collect();
                assert_eq!(seen.len() as u128, count, "n={n} password={password}");
                assert_eq!(*seen.iter().next_back().unwrap(), count - 1);
            }
        }
    }

    #[test]
    fn chain_is_periodic() {
        let key = derive_key("periodic", 4).unwrap();
        for step in 0..24u128 {
            assert_eq!(key.next_address(step), key.next_address(step + 24));
            assert_eq!(key.next_address(step), key.next_address(step + 48));
        }
    }

    #[test]
    fn chain_windows_are_consistent() {
        let key = derive_key("window", 5).unwrap();
        assert!(key.chain(0, 0).is_empty());
        let long = key.chain(0, 8);
        let short = key.chain(5, 3);
        assert_eq!(short, long[5..8]);
        assert_eq!(long[3].step, 3);
    }

    #[test]
    fn distinct_passwords_diverge_in_first_steps() {
        let a = derive_key("alpha", 6).unwrap();
        let b = derive_key("bravo", 6).unwrap();
        let diverged = (0..10u128).any(|s| a.next_address(s) != b.next_address(s));
        assert!(diverged);
    }

    #[test]
    fn addresses_never_reach_count() {
        let key = derive_key("bound", 6).unwrap();
        for step in 0..2000u128 {
            assert!(key.next_address(step).value() < key.address_count());
        }
    }
}
