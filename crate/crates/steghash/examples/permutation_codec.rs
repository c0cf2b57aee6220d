//! Addresses to tag orders and back, with both codecs.
//!
//! ```bash
//! cargo run --example permutation_codec
//! ```

use steghash::permcode::{CodecKind, Dictionary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dict = Dictionary::new([
        ("#alpha", "Google Plus"),
        ("#bravo", "Twitter"),
        ("#charlie", "Instagram"),
        ("#delta", "Facebook"),
    ])?;
    println!("dictionary ({} tags):", dict.len());
    for (tag, service) in dict.entries() {
        println!("  {tag:<10} -> {service}");
    }

    println!("\nfactoradic codec (lexicographic in dictionary order):");
    for value in [0u128, 1, 11, 23] {
        let perm = dict.unrank(&dict.address(value)?, CodecKind::Factoradic)?;
        let back = dict.rank(perm.tags(), CodecKind::Factoradic)?;
        println!("  {value:>2} -> {perm}  (ranks back to {back})");
    }

    println!("\ntable codec (frozen enumeration for n <= 4):");
    for value in [0u128, 4, 18, 23] {
        let perm = dict.unrank(&dict.address(value)?, CodecKind::Table)?;
        println!("  {value:>2} -> {perm}");
    }

    // 4! = 24, so address 24 is one of the wasted bit patterns.
    match dict.address(24) {
        Err(e) => println!("\naddress 24 is rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    // Ranking rejects anything that is not an exact permutation.
    let doubled = ["#alpha", "#alpha", "#charlie", "#delta"];
    match dict.rank(&doubled, CodecKind::Factoradic) {
        Err(e) => println!("ranking a repeated tag fails: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
