//! Dataset generation, on-disk format, and bit-exact reproducibility.
//!
//! Generates a small labelled dataset (sampled PDE instances plus reference
//! solutions), writes it as newline-delimited JSON, reads it back, and checks
//! the round trip is exact to the last bit. Also regenerates the dataset from
//! the same seed and confirms the files are byte-identical, which is what
//! makes every downstream experiment repeatable.
//!
//! Run with: cargo run --example dataset_roundtrip

use pisolver::dataset::{generate, read_ndjson, write_ndjson};
use pisolver::pde::Family;

fn main() -> pisolver::Result<()> {
    let dir = std::env::temp_dir().join(format!("pisolver-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| pisolver::Error::io(&dir, e))?;

    let family = Family::Helmholtz1d;
    let seed = 7;
    let ds = generate(family, seed, 8, 2)?;
    println!(
        "generated {} train + {} test instances of {family} (seed {seed})",
        ds.header.n_train, ds.header.n_test
    );
    let first = &ds.train[0];
    println!(
        "  first record: {} solution samples, min {:.4}, max {:.4}",
        first.u.len(),
        first.u.iter().cloned().fold(f64::INFINITY, f64::min),
        first.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );

    let path_a = dir.join("a.ndjson");
    write_ndjson(&ds, &path_a)?;
    let bytes_a = std::fs::read(&path_a).map_err(|e| pisolver::Error::io(&path_a, e))?;
    println!(
        "wrote {} ({} bytes, one JSON object per line)",
        path_a.display(),
        bytes_a.len()
    );

    // Read back and compare every float bit for bit.
    let back = read_ndjson(&path_a)?;
    let mut exact = true;
    for (r0, r1) in ds.train.iter().chain(&ds.test).zip(back.train.iter().chain(&back.test)) {
        for (a, b) in r0.u.iter().zip(&r1.u) {
            if a.to_bits() != b.to_bits() {
                exact = false;
            }
        }
    }
    println!("  read-back floats bit-identical: {exact}");

    // Regenerate from scratch with the same seed: bytes must match.
    let again = generate(family, seed, 8, 2)?;
    let path_b = dir.join("b.ndjson");
    write_ndjson(&again, &path_b)?;
    let bytes_b = std::fs::read(&path_b).map_err(|e| pisolver::Error::io(&path_b, e))?;
    println!("  regenerated file byte-identical: {}", bytes_a == bytes_b);

    // A different seed gives a different dataset.
    let other = generate(family, seed + 1, 8, 2)?;
    let path_c = dir.join("c.ndjson");
    write_ndjson(&other, &path_c)?;
    let bytes_c = std::fs::read(&path_c).map_err(|e| pisolver::Error::io(&path_c, e))?;
    println!("  different seed changes the bytes:  {}", bytes_a != bytes_c);

    std::fs::remove_dir_all(&dir).map_err(|e| pisolver::Error::io(&dir, e))?;
    Ok(())
}
