//! Writes a synthetic WAV corpus with transcripts and `manifest.csv`.
//!
//! `cargo run -p accent-id-core --example toy_corpus -- <dir> [per_class] [seed]`

use accent_id_core::synth::write_toy_corpus;
use accent_id_core::L1Label;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().ok_or("usage: toy_corpus <dir> [per_class] [seed]")?;
    let per_class = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let m = write_toy_corpus(std::path::Path::new(&dir), &L1Label::ALL, per_class, seed)?;
    println!("wrote {} clips to {dir}", m.len());
    Ok(())
}
