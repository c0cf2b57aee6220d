//! Addresses as hashtag permutations.
//!
//! A dictionary of `n` distinct hashtags admits `n!` orderings, and each
//! ordering is one *address*: an integer in `[0, n!)` carried by the order in
//! which the tags appear on a post. Addresses are `l = ceil(log2 n!)` bits
//! wide; the `2^l - n!` bit patterns at the top of the range map to no
//! permutation and are wasted.
//!
//! Two codecs translate between addresses and orderings:
//!
//! * [`CodecKind::Factoradic`] (default) — factorial-number-system (Lehmer)
//!   unranking. Digit `i` of the address, taken with weight `(n-1-i)!`,
//!   selects the next unused tag in dictionary order. Addresses enumerate
//!   permutations in lexicographic dictionary order, for any `n` up to 34.
//! * [`CodecKind::Table`] — a fixed lookup table defined for `n` of 2, 3
//!   and 4 only, kept as a frozen compatibility surface. It is *not* the
//!   factoradic order and does not generalize to larger dictionaries.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use num_integer::Integer;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Smallest supported dictionary.
pub const MIN_DICT_SIZE: usize = 2;
/// Largest supported dictionary; 34! still fits exact 128-bit arithmetic.
pub const MAX_DICT_SIZE: usize = 34;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dictionary size {0} out of range [{MIN_DICT_SIZE}, {MAX_DICT_SIZE}]")]
    OutOfRange(usize),
    #[error("address {value} is invalid for {n} tags ({limit} permutations)")]
    InvalidAddress { value: u128, n: u8, limit: u128 },
    #[error("table codec is defined for 2..=4 tags only, dictionary has {0}")]
    UnsupportedCodec(u8),
    #[error("not a permutation of the dictionary: {0}")]
    NotAPermutation(String),
    #[error("bad tag {0:?}: {1}")]
    BadTag(String, &'static str),
    #[error("duplicate tag {0:?} after normalization")]
    DuplicateTag(String),
    #[error("tag {0:?} has an empty service name")]
    EmptyService(String),
    #[error("dictionary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const FACTORIALS: [u128; 35] = {
    let mut f = [1u128; 35];
    let mut i = 1;
    while i < 35 {
        f[i] = f[i - 1] * i as u128;
        i += 1;
    }
    f
};

fn check_size(n: usize) -> Result<u8, Error> {
    if (MIN_DICT_SIZE..=MAX_DICT_SIZE).contains(&n) {
        Ok(n as u8)
    } else {
        Err(Error::OutOfRange(n))
    }
}

/// `n!`, the number of valid addresses for a dictionary of `n` tags.
pub fn permutation_count(n: u8) -> Result<u128, Error> {
    check_size(n as usize)?;
    Ok(FACTORIALS[n as usize])
}

/// Address width in bits: the smallest `l` with `2^l >= n!`.
pub fn address_length(n: u8) -> Result<u32, Error> {
    let count = permutation_count(n)?;
    // ceil(log2 x) == bit length of x - 1, for x >= 2
    Ok(128 - (count - 1).leading_zeros())
}

/// The exact ratio `(2^l - n!) / n!` of addresses that decode to nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WastedRatio {
    wasted: BigUint,
    permutations: BigUint,
}

impl WastedRatio {
    /// Wasted addresses, `2^l - n!`.
    pub fn wasted(&self) -> &BigUint {
        &self.wasted
    }

    /// Valid addresses, `n!`.
    pub fn permutations(&self) -> &BigUint {
        &self.permutations
    }

    /// The ratio as tenths of a percent, rounded half-up.
    pub fn percent_tenths(&self) -> u32 {
        let (q, r) = (&self.wasted * 1000u32).div_rem(&self.permutations);
        let mut tenths = u32::try_from(q).expect("ratio below 100%");
        if &r * 2u32 >= self.permutations {
            tenths += 1;
        }
        tenths
    }
}

impl fmt::Display for WastedRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.percent_tenths();
        write!(f, "{}.{}%", t / 10, t % 10)
    }
}

/// Fraction of the `l`-bit address space that maps to no permutation.
pub fn wasted_fraction(n: u8) -> Result<WastedRatio, Error> {
    let count = permutation_count(n)?;
    let bits = address_length(n)?;
    let space = BigUint::from(1u8) << bits;
    let permutations = BigUint::from(count);
    Ok(WastedRatio {
        wasted: space - &permutations,
        permutations,
    })
}

/// One row of the address-width table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsRow {
    pub n: u8,
    pub permutations: u128,
    pub address_bits: u32,
    pub wasted_percent_tenths: u32,
}

impl StatsRow {
    pub fn wasted_percent(&self) -> String {
        let t = self.wasted_percent_tenths;
        format!("{}.{}%", t / 10, t % 10)
    }
}

/// Rows `(n, n!, l, wasted%)` for every dictionary size in `[2, n_max]`.
pub fn stats_table(n_max: u8) -> Result<Vec<StatsRow>, Error> {
    check_size(n_max as usize)?;
    (2..=n_max)
        .map(|n| {
            Ok(StatsRow {
                n,
                permutations: permutation_count(n)?,
                address_bits: address_length(n)?,
                wasted_percent_tenths: wasted_fraction(n)?.percent_tenths(),
            })
        })
        .collect()
}

/// Codec selection for [`Dictionary::unrank`] / [`Dictionary::rank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodecKind {
    /// Factorial-number-system unranking; lexicographic, any supported `n`.
    #[default]
    Factoradic,
    /// Frozen lookup tables for `n` of 2, 3 and 4.
    Table,
}

/// An integer in `[0, n!)`, bound to the dictionary size it indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    value: u128,
    n: u8,
}

impl Address {
    pub fn new(value: u128, n: u8) -> Result<Self, Error> {
        let limit = permutation_count(n)?;
        if value >= limit {
            return Err(Error::InvalidAddress { value, n, limit });
        }
        Ok(Address { value, n })
    }

    pub fn value(&self) -> u128 {
        self.value
    }

    /// Dictionary size this address indexes into.
    pub fn dict_size(&self) -> u8 {
        self.n
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// An ordering of all tags of one dictionary, each exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashtagPermutation {
    tags: Vec<String>,
}

impl HashtagPermutation {
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// The trailing tag, which doubles as the next-service selector.
    pub fn last_tag(&self) -> &str {
        self.tags.last().expect("permutation is never empty")
    }

    pub fn into_tags(self) -> Vec<String> {
        self.tags
    }
}

impl fmt::Display for HashtagPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tags.join(" "))
    }
}

/// Normalization key used for tag distinctness: NFC, then case-folded.
fn normalized(tag: &str) -> String {
    tag.nfc().flat_map(char::to_lowercase).collect()
}

/// The address alphabet: `n` distinct hashtags in a fixed order, each mapped
/// to the service where the *next* post lives when the tag closes an ordering.
///
/// Stored tags keep their original casing; distinctness is checked on the
/// normalized form, mirroring case-insensitive hashtag systems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    tags: Vec<String>,
    services: Vec<String>,
}

pub const DICT_FILE_HEADER: &str = "steghash-dict v1";

impl Dictionary {
    /// Build from `(tag, service)` pairs in dictionary order.
    pub fn new<T, S>(entries: impl IntoIterator<Item = (T, S)>) -> Result<Self, Error>
    where
        T: Into<String>,
        S: Into<String>,
    {
        let mut tags = Vec::new();
        let mut services = Vec::new();
        let mut seen = BTreeSet::new();
        for (tag, service) in entries {
            let tag = tag.into();
            let service = service.into();
            if !tag.starts_with('#') {
                return Err(Error::BadTag(tag, "must begin with '#'"));
            }
            if tag.len() == 1 {
                return Err(Error::BadTag(tag, "must name something after '#'"));
            }
            if tag.chars().any(char::is_whitespace) {
                return Err(Error::BadTag(tag, "must not contain whitespace"));
            }
            if service.is_empty() {
                return Err(Error::EmptyService(tag));
            }
            if !seen.insert(normalized(&tag)) {
                return Err(Error::DuplicateTag(tag));
            }
            tags.push(tag);
            services.push(service);
        }
        check_size(tags.len())?;
        Ok(Dictionary { tags, services })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// `n` as the narrow integer used by [`Address`].
    pub fn size(&self) -> u8 {
        self.tags.len() as u8
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tags
            .iter()
            .map(String::as_str)
            .zip(self.services.iter().map(String::as_str))
    }

    /// Service mapped to `tag`, by exact match against the stored tags.
    pub fn service_for(&self, tag: &str) -> Option<&str> {
        self.tags
            .iter()
            .position(|t| t == tag)
            .map(|i| self.services[i].as_str())
    }

    /// Every distinct service name, in first-appearance order.
    pub fn services(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.services {
            if !out.iter().any(|o| o == s) {
                out.push(s);
            }
        }
        out
    }

    /// Bind an address value to this dictionary's size.
    pub fn address(&self, value: u128) -> Result<Address, Error> {
        Address::new(value, self.size())
    }

    /// Decode an address into the ordering it names.
    pub fn unrank(&self, addr: &Address, codec: CodecKind) -> Result<HashtagPermutation, Error> {
        let n = self.size();
        if addr.dict_size() != n {
            return Err(Error::InvalidAddress {
                value: addr.value(),
                n,
                limit: permutation_count(n)?,
            });
        }
        let order = match codec {
            CodecKind::Factoradic => factoradic_unrank(addr.value(), n as usize),
            CodecKind::Table => table_row(n, addr.value())?.to_vec(),
        };
        Ok(HashtagPermutation {
            tags: order.iter().map(|&i| self.tags[i as usize].clone()).collect(),
        })
    }

    /// Encode an ordering of the dictionary back into its address.
    pub fn rank<S: AsRef<str>>(&self, perm: &[S], codec: CodecKind) -> Result<Address, Error> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::NotAPermutation(format!(
                "expected {} tags, got {}",
                n,
                perm.len()
            )));
        }
        let mut positions = Vec::with_capacity(n);
        let mut used = vec![false; n];
        for tag in perm {
            let tag = tag.as_ref();
            let Some(i) = self.tags.iter().position(|t| t == tag) else {
                return Err(Error::NotAPermutation(format!("foreign tag {tag:?}")));
            };
            if used[i] {
                return Err(Error::NotAPermutation(format!("tag {tag:?} repeats")));
            }
            used[i] = true;
            positions.push(i as u8);
        }
        let value = match codec {
            CodecKind::Factoradic => factoradic_rank(&positions),
            CodecKind::Table => {
                let table = table_for(self.size())?;
                table
                    .iter()
                    .position(|row| *row == positions.as_slice())
                    .expect("every permutation has a table row") as u128
            }
        };
        Address::new(value, self.size())
    }

    /// Parse the `steghash-dict v1` text format.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim_end() == DICT_FILE_HEADER => {}
            other => {
                return Err(Error::Format(format!(
                    "expected header {DICT_FILE_HEADER:?}, got {other:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let tag = fields.next().expect("non-empty line has a first field");
            let Some(service) = fields.next() else {
                return Err(Error::Format(format!("line {}: missing service name", idx + 2)));
            };
            if let Some(extra) = fields.next() {
                return Err(Error::Format(format!(
                    "line {}: unknown trailing field {extra:?}",
                    idx + 2
                )));
            }
            entries.push((tag.to_string(), service.to_string()));
        }
        Dictionary::new(entries)
    }

    /// Render the `steghash-dict v1` text format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from(DICT_FILE_HEADER);
        out.push('\n');
        for (tag, service) in self.entries() {
            out.push_str(tag);
            out.push(' ');
            out.push_str(service);
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        Ok(std::fs::write(path, self.to_file_string())?)
    }
}

fn factoradic_unrank(value: u128, n: usize) -> Vec<u8> {
    let mut remaining: Vec<u8> = (0..n as u8).collect();
    let mut rest = value;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let weight = FACTORIALS[n - 1 - i];
        let digit = (rest / weight) as usize;
        rest %= weight;
        out.push(remaining.remove(digit));
    }
    out
}

fn factoradic_rank(positions: &[u8]) -> u128 {
    let n = positions.len();
    let mut remaining: Vec<u8> = (0..n as u8).collect();
    let mut value = 0u128;
    for (i, p) in positions.iter().enumerate() {
        let digit = remaining.iter().position(|r| r == p).expect("unused tag");
        value += digit as u128 * FACTORIALS[n - 1 - i];
        remaining.remove(digit);
    }
    value
}

// Frozen address -> ordering tables for the Table codec, 0-based tag indices.
const TABLE_2: [[u8; 2]; 2] = [[0, 1], [1, 0]];

const TABLE_3: [[u8; 3]; 6] = [
    [0, 1, 2],
    [1, 0, 2],
    [0, 2, 1],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

const TABLE_4: [[u8; 4]; 24] = [
    [0, 1, 2, 3],
    [1, 0, 2, 3],
    [0, 2, 1, 3],
    [1, 2, 0, 3],
    [2, 0, 1, 3],
    [2, 1, 0, 3],
    [0, 3, 1, 2],
    [0, 1, 3, 2],
    [1, 3, 0, 2],
    [1, 0, 3, 2],
    [0, 3, 2, 1],
    [0, 2, 3, 1],
    [1, 3, 2, 0],
    [1, 2, 3, 0],
    [2, 3, 0, 1],
    [2, 0, 3, 1],
    [2, 3, 1, 0],
    [2, 1, 3, 0],
    [3, 0, 1, 2],
    [3, 1, 0, 2],
    [3, 0, 2, 1],
    [3, 1, 2, 0],
    [3, 2, 0, 1],
    [3, 2, 1, 0],
];

fn table_for(n: u8) -> Result<&'static [&'static [u8]], Error> {
    // Slices of rows, to give all three tables one type.
    macro_rules! rows {
        ($t:ident) => {{
            static ROWS: std::sync::OnceLock<Vec<&'static [u8]>> = std::sync::OnceLock::new();
            ROWS.get_or_init(|| $t.iter().map(|r| r.as_slice()).collect())
                .as_slice()
        }};
    }
    match n {
        2 => Ok(rows!(TABLE_2)),
        3 => Ok(rows!(TABLE_3)),
        4 => Ok(rows!(TABLE_4)),
        _ => Err(Error::UnsupportedCodec(n)),
    }
}

fn table_row(n: u8, value: u128) -> Result<&'static [u8], Error> {
    let table = table_for(n)?;
    Ok(table[value as usize])
}
