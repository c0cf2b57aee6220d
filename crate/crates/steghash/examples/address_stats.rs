//! Address arithmetic: how many bits one post's tag order can carry.
//!
//! ```bash
//! cargo run --example address_stats
//! ```

use steghash::permcode::{stats_table, wasted_fraction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("A dictionary of n hashtags admits n! orderings, each ordering one address.");
    println!("Addresses are ceil(log2 n!) bits wide; the rest of the bit space is wasted.\n");

    println!("{:>3} {:>42} {:>5} {:>7}", "n", "permutations", "bits", "wasted");
    for row in stats_table(30)? {
        println!(
            "{:>3} {:>42} {:>5} {:>7}",
            row.n,
            row.permutations,
            row.address_bits,
            row.wasted_percent()
        );
    }

    println!("\nSweet spots (wasted space below 20%):");
    for row in stats_table(30)? {
        if row.wasted_percent_tenths < 200 {
            println!("  n = {:<2} wastes only {}", row.n, row.wasted_percent());
        }
    }

    // The exact ratio is available too, not just the rounded percent.
    let ratio = wasted_fraction(22)?;
    println!(
        "\nFor n = 22 exactly {} of {} addresses decode to nothing ({}).",
        ratio.wasted(),
        ratio.permutations(),
        ratio
    );
    Ok(())
}
