//! Carrier layer: payload framing and bit-level embedding in RGB images.
//!
//! Payload fragments travel inside a 13-byte framed container:
//!
//! ```text
//! [2] magic 0x53 0x48   [1] version 1
//! [2] fragment_index    [2] fragment_total   [2] payload_length
//! [4] CRC-32 (IEEE) of the payload
//! [N] payload
//! ```
//!
//! All multi-byte fields are big-endian. The frame is written one bit per
//! channel into the least-significant bits of an RGB image, most-significant
//! bit first within each byte, channels taken in row-major R, G, B order.
//! A failed magic or CRC check on extraction is the reader's cue that a post
//! is a decoy whose hidden content did not survive.
//!
//! Images are plain binary PPM (`P6`, maxval 255) so the carrier files are
//! bit-exact everywhere.

use std::path::Path;

use thiserror::Error;

pub const FRAME_MAGIC: [u8; 2] = [0x53, 0x48];
pub const FRAME_VERSION: u8 = 1;
/// Magic + version + index + total + length + CRC-32.
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fragment index {index} out of bounds for total {total}")]
    FragmentBounds { index: u16, total: u16 },
    #[error("payload of {0} bytes exceeds the 65535-byte frame limit")]
    PayloadTooLarge(usize),
    #[error("frame needs {needed} bits but the image holds {capacity}")]
    InsufficientCapacity { needed: usize, capacity: usize },
    #[error("no frame magic in the carrier")]
    NoMagic,
    #[error("payload CRC mismatch: header says {expected:#010x}, payload gives {actual:#010x}")]
    CrcMismatch { expected: u32, actual: u32 },
    #[error("frame header inconsistent with carrier: {0}")]
    HeaderBounds(&'static str),
    #[error("bad image dimensions {width}x{height} for {bytes} pixel bytes")]
    BadDimensions { width: u32, height: u32, bytes: usize },
    #[error("not a P6 ppm: {0}")]
    BadPpm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit RGB pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarrierImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl CarrierImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, Error> {
        let expected = (width as u64) * (height as u64) * 3;
        if width == 0 || height == 0 || pixels.len() as u64 != expected {
            return Err(Error::BadDimensions {
                width,
                height,
                bytes: pixels.len(),
            });
        }
        Ok(CarrierImage {
            width,
            height,
            pixels,
        })
    }

    /// Uniform-color image, handy as a degenerate carrier.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, Error> {
        let count = (width as usize) * (height as usize);
        let mut pixels = Vec::with_capacity(count * 3);
        for _ in 0..count {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    /// Random pixels from the caller's generator.
    pub fn noise(width: u32, height: u32, rng: &mut impl rand_core::RngCore) -> Result<Self, Error> {
        let mut pixels = vec![0u8; (width as usize) * (height as usize) * 3];
        rng.fill_bytes(&mut pixels);
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// One embeddable bit per channel.
    pub fn capacity_bits(&self) -> usize {
        self.pixels.len()
    }

    /// Serialize as binary PPM: `P6 <w> <h> 255`, one whitespace, raw RGB.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parse binary PPM. Accepts exactly magic `P6` and maxval 255; anything
    /// else, including trailing bytes, is rejected.
    pub fn from_ppm_bytes(data: &[u8]) -> Result<Self, Error> {
        let mut cursor = 0usize;

        fn token<'a>(data: &'a [u8], cursor: &mut usize, what: &str) -> Result<&'a [u8], Error> {
            while *cursor < data.len() && data[*cursor].is_ascii_whitespace() {
                *cursor += 1;
            }
            let start = *cursor;
            while *cursor < data.len() && !data[*cursor].is_ascii_whitespace() {
                *cursor += 1;
            }
            if start == *cursor {
                return Err(Error::BadPpm(format!("missing {what}")));
            }
            Ok(&data[start..*cursor])
        }

        let magic = token(data, &mut cursor, "magic")?;
        if magic != b"P6" {
            return Err(Error::BadPpm(format!(
                "magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut dimension = |what: &str| -> Result<u32, Error> {
            let t = token(data, &mut cursor, what)?;
            std::str::from_utf8(t)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::BadPpm(format!("bad {what}")))
        };
        let width = dimension("width")?;
        let height = dimension("height")?;
        let maxval = dimension("maxval")?;
        if maxval != 255 {
            return Err(Error::BadPpm(format!("maxval {maxval}, want 255")));
        }
        // Exactly one whitespace byte separates the header from pixel data.
        if cursor >= data.len() || !data[cursor].is_ascii_whitespace() {
            return Err(Error::BadPpm("missing pixel data separator".into()));
        }
        cursor += 1;
        let expected = (width as u64) * (height as u64) * 3;
        let rest = &data[cursor..];
        if (rest.len() as u64) < expected {
            return Err(Error::BadPpm(format!(
                "expected {expected} pixel bytes, found {}",
                rest.len()
            )));
        }
        if (rest.len() as u64) > expected {
            return Err(Error::BadPpm("trailing bytes after pixel data".into()));
        }
        Self::new(width, height, rest.to_vec())
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self, Error> {
        Self::from_ppm_bytes(&std::fs::read(path)?)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        Ok(std::fs::write(path, self.to_ppm_bytes())?)
    }
}

/// A parsed frame: fragment coordinates plus the verified payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegoFrame {
    pub fragment_index: u16,
    pub fragment_total: u16,
    pub payload: Vec<u8>,
}

/// CRC-32 (IEEE) over `bytes`.
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

/// Serialize a payload fragment into a frame.
pub fn frame(payload: &[u8], index: u16, total: u16) -> Result<Vec<u8>, Error> {
    if index >= total {
        return Err(Error::FragmentBounds { index, total });
    }
    if payload.len() > u16::MAX as usize {
        return Err(Error::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.extend_from_slice(&index.to_be_bytes());
    out.extend_from_slice(&total.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
    out.extend_from_slice(&crc32(payload).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Inverse of [`frame`], with full validation.
pub fn deframe(bytes: &[u8]) -> Result<StegoFrame, Error> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::NoMagic);
    }
    if bytes[0..2] != FRAME_MAGIC || bytes[2] != FRAME_VERSION {
        return Err(Error::NoMagic);
    }
    let fragment_index = u16::from_be_bytes([bytes[3], bytes[4]]);
    let fragment_total = u16::from_be_bytes([bytes[5], bytes[6]]);
    let payload_length = u16::from_be_bytes([bytes[7], bytes[8]]) as usize;
    let expected_crc = u32::from_be_bytes([bytes[9], bytes[10], bytes[11], bytes[12]]);
    if fragment_index >= fragment_total {
        return Err(Error::HeaderBounds("fragment index not below total"));
    }
    if bytes.len() != HEADER_LEN + payload_length {
        return Err(Error::HeaderBounds("payload length disagrees with data"));
    }
    let payload = bytes[HEADER_LEN..].to_vec();
    let actual = crc32(&payload);
    if actual != expected_crc {
        return Err(Error::CrcMismatch {
            expected: expected_crc,
            actual,
        });
    }
    Ok(StegoFrame {
        fragment_index,
        fragment_total,
        payload,
    })
}

/// Write `framed` into the channel LSBs of a copy of `img`.
pub fn embed(img: &CarrierImage, framed: &[u8]) -> Result<CarrierImage, Error> {
    let needed = framed.len() * 8;
    if needed > img.capacity_bits() {
        return Err(Error::InsufficientCapacity {
            needed,
            capacity: img.capacity_bits(),
        });
    }
    let mut pixels = img.pixels.clone();
    for (i, channel) in pixels.iter_mut().take(needed).enumerate() {
        let bit = (framed[i / 8] >> (7 - i % 8)) & 1;
        *channel = (*channel & !1) | bit;
    }
    CarrierImage::new(img.width, img.height, pixels)
}

fn read_lsb_bytes(img: &CarrierImage, start_byte: usize, count: usize) -> Option<Vec<u8>> {
    let first_bit = start_byte * 8;
    if first_bit + count * 8 > img.capacity_bits() {
        return None;
    }
    let mut out = vec![0u8; count];
    for (i, byte) in out.iter_mut().enumerate() {
        for bit in 0..8 {
            *byte = (*byte << 1) | (img.pixels[first_bit + i * 8 + bit] & 1);
        }
    }
    Some(out)
}

/// Read a frame back out of channel LSBs.
pub fn extract(img: &CarrierImage) -> Result<StegoFrame, Error> {
    let header = read_lsb_bytes(img, 0, HEADER_LEN).ok_or(Error::NoMagic)?;
    if header[0..2] != FRAME_MAGIC || header[2] != FRAME_VERSION {
        return Err(Error::NoMagic);
    }
    let fragment_index = u16::from_be_bytes([header[3], header[4]]);
    let fragment_total = u16::from_be_bytes([header[5], header[6]]);
    let payload_length = u16::from_be_bytes([header[7], header[8]]) as usize;
    let expected_crc = u32::from_be_bytes([header[9], header[10], header[11], header[12]]);
    if fragment_index >= fragment_total {
        return Err(Error::HeaderBounds("fragment index not below total"));
    }
    let payload =
        read_lsb_bytes(img, HEADER_LEN, payload_length).ok_or(Error::HeaderBounds(
            "payload length exceeds image capacity",
        ))?;
    let actual = crc32(&payload);
    if actual != expected_crc {
        return Err(Error::CrcMismatch {
            expected: expected_crc,
            actual,
        });
    }
    Ok(StegoFrame {
        fragment_index,
        fragment_total,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    /// Independent CRC-32 route: bit-at-a-time with the reflected IEEE
    /// polynomial, no tables.
    fn crc32_bitwise(bytes: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &b in bytes {
            crc ^= b as u32;
            for _ in 0..8 {
                let lsb = crc & 1;
                crc >>= 1;
                if lsb != 0 {
                    crc ^= 0xEDB8_8320;
                }
            }
        }
        !crc
    }

    #[test]
    fn crc32_matches_bitwise_oracle() {
        assert_eq!(crc32_bitwise(b"123456789"), 0xCBF4_3926);
        for sample in [b"".as_slice(), b"AB", b"steghash", &[0u8; 64]] {
            assert_eq!(crc32(sample), crc32_bitwise(sample));
        }
    }

    #[test]
    fn frame_layout_and_roundtrip() {
        let empty = frame(b"", 0, 1).unwrap();
        assert_eq!(empty.len(), HEADER_LEN);
        assert_eq!(&empty[..3], &[0x53, 0x48, 1]);
        assert_eq!(u16::from_be_bytes([empty[7], empty[8]]), 0);

        let ab = frame(b"AB", 0, 1).unwrap();
        assert_eq!(ab.len(), 15);
        assert_eq!(
            u32::from_be_bytes([ab[9], ab[10], ab[11], ab[12]]),
            crc32_bitwise(b"AB")
        );

        let back = deframe(&ab).unwrap();
        assert_eq!(back.payload, b"AB");
        assert_eq!((back.fragment_index, back.fragment_total), (0, 1));
    }

    #[test]
    fn frame_rejects_bad_bounds() {
        assert!(matches!(
            frame(b"x", 3, 3),
            Err(Error::FragmentBounds { index: 3, total: 3 })
        ));
        assert!(matches!(frame(b"x", 0, 0), Err(Error::FragmentBounds { .. })));
        let big = vec![0u8; 65536];
        assert!(matches!(frame(&big, 0, 1), Err(Error::PayloadTooLarge(65536))));
    }

    #[test]
    fn embed_extract_roundtrip_on_noise() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let img = CarrierImage::noise(64, 64, &mut rng).unwrap();
        let payload: Vec<u8> = (0..100u8).collect();
        let framed = frame(&payload, 2, 5).unwrap();
        let stego = embed(&img, &framed).unwrap();
        let got = extract(&stego).unwrap();
        assert_eq!(got.payload, payload);
        assert_eq!((got.fragment_index, got.fragment_total), (2, 5));
    }

    #[test]
    fn embed_touches_only_lsbs() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let img = CarrierImage::noise(32, 32, &mut rng).unwrap();
        let framed = frame(&[0xAA; 50], 0, 1).unwrap();
        let stego = embed(&img, &framed).unwrap();
        for (a, b) in img.pixels().iter().zip(stego.pixels()) {
            assert!(a.abs_diff(*b) <= 1);
            assert_eq!(a >> 1, b >> 1);
        }
    }

    #[test]
    fn embed_bit_layout_is_msb_first() {
        let img = CarrierImage::filled(8, 8, [0, 0, 0]).unwrap();
        let framed = vec![0xFFu8; 4];
        let stego = embed(&img, &framed).unwrap();
        let ones: usize = stego.pixels().iter().map(|&c| (c & 1) as usize).sum();
        assert_eq!(ones, 32);
        assert!(stego.pixels()[..32].iter().all(|&c| c == 1));
        assert!(stego.pixels()[32..].iter().all(|&c| c == 0));

        // 0x80 puts its single one-bit first.
        let one_bit = embed(&img, &[0x80]).unwrap();
        assert_eq!(one_bit.pixels()[0], 1);
        assert!(one_bit.pixels()[1..8].iter().all(|&c| c == 0));
    }

    #[test]
    fn embed_rejects_insufficient_capacity() {
        let img = CarrierImage::filled(2, 2, [0, 0, 0]).unwrap();
        assert_eq!(img.capacity_bits(), 12);
        assert!(matches!(
            embed(&img, &[0u8; 2]),
            Err(Error::InsufficientCapacity { needed: 16, capacity: 12 })
        ));
    }

    #[test]
    fn extract_rejects_pristine_images() {
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let mut no_magic = 0;
        for _ in 0..1000 {
            let img = CarrierImage::noise(8, 8, &mut rng).unwrap();
            if matches!(extract(&img), Err(Error::NoMagic)) {
                no_magic += 1;
            }
        }
        assert!(no_magic >= 990, "only {no_magic} of 1000 rejected");
    }

    #[test]
    fn single_payload_bit_flips_are_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let img = CarrierImage::noise(16, 16, &mut rng).unwrap();
        let payload: [u8; 16] = *b"sixteen-byte-msg";
        let framed = frame(&payload, 0, 1).unwrap();
        let stego = embed(&img, &framed).unwrap();
        for bit in 0..payload.len() * 8 {
            let mut tampered = stego.clone();
            let channel = HEADER_LEN * 8 + bit;
            let mut pixels = tampered.pixels().to_vec();
            pixels[channel] ^= 1;
            tampered = CarrierImage::new(16, 16, pixels).unwrap();
            assert!(
                matches!(extract(&tampered), Err(Error::CrcMismatch { .. })),
                "flip of payload bit {bit} went undetected"
            );
        }
    }

    #[test]
    fn extract_flags_truncated_header_claims() {
        // 4x4 image: 48 channels = 6 bytes < header, can hold no frame.
        let img = CarrierImage::filled(4, 4, [0, 0, 0]).unwrap();
        assert!(matches!(extract(&img), Err(Error::NoMagic)));

        // Valid header claiming more payload than the image holds.
        let img = CarrierImage::filled(8, 8, [0, 0, 0]).unwrap();
        let mut framed = frame(&[1, 2, 3], 0, 1).unwrap();
        framed[8] = 200; // payload_length low byte
        let stego = embed(&img, &framed[..HEADER_LEN]).unwrap();
        assert!(matches!(extract(&stego), Err(Error::HeaderBounds(_))));
    }

    #[test]
    fn ppm_roundtrip_and_strictness() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let img = CarrierImage::noise(5, 3, &mut rng).unwrap();
        let bytes = img.to_ppm_bytes();
        assert!(bytes.starts_with(b"P6\n5 3\n255\n"));
        assert_eq!(CarrierImage::from_ppm_bytes(&bytes).unwrap(), img);

        assert!(matches!(
            CarrierImage::from_ppm_bytes(b"P5\n1 1\n255\n\0\0\0"),
            Err(Error::BadPpm(_))
        ));
        assert!(matches!(
            CarrierImage::from_ppm_bytes(b"P6\n1 1\n127\n\0\0\0"),
            Err(Error::BadPpm(_))
        ));
        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(matches!(
            CarrierImage::from_ppm_bytes(&truncated),
            Err(Error::BadPpm(_))
        ));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(
            CarrierImage::from_ppm_bytes(&trailing),
            Err(Error::BadPpm(_))
        ));
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        assert!(matches!(
            CarrierImage::new(2, 2, vec![0; 11]),
            Err(Error::BadDimensions { .. })
        ));
        assert!(matches!(
            CarrierImage::new(0, 4, vec![]),
            Err(Error::BadDimensions { .. })
        ));
    }

    proptest! {
        #[test]
        fn frame_embed_extract_is_identity(
            payload in proptest::collection::vec(any::<u8>(), 0..300),
            index in 0u16..8,
            seed in any::<u64>(),
        ) {
            let total = 8u16;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let img = CarrierImage::noise(32, 32, &mut rng).unwrap();
            let framed = frame(&payload, index, total).unwrap();
            let got = extract(&embed(&img, &framed).unwrap()).unwrap();
            prop_assert_eq!(got.payload, payload);
            prop_assert_eq!(got.fragment_index, index);
            prop_assert_eq!(got.fragment_total, total);
        }

        #[test]
        fn ppm_roundtrip_holds(w in 1u32..20, h in 1u32..20, seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let img = CarrierImage::noise(w, h, &mut rng).unwrap();
            prop_assert_eq!(CarrierImage::from_ppm_bytes(&img.to_ppm_bytes()).unwrap(), img);
        }
    }
}
