//! Fits per-variable encoders on a table, encodes it and decodes it back.
//!
//! cargo run --release --example encode_roundtrip

use dagsynth::schema::{EncoderSet, DEFAULT_N_MODES, DEFAULT_SMOOTHING};
use dagsynth::toy::survey_table;

fn main() -> dagsynth::Result<()> {
    let table = survey_table(1000, 0);
    let (encoders, warnings) = EncoderSet::fit(&table, DEFAULT_N_MODES, DEFAULT_SMOOTHING)?;
    for w in &warnings {
        println!("warning: {w}");
    }
    for name in encoders.names() {
        println!("{name:>12}  width {}", encoders.width(name)?);
    }
    let encoded = encoders.encode(&table)?;
    println!("encoded matrix {} x {}", encoded.nrows(), encoded.ncols());

    let decoded = encoders.decode(&encoded)?;
    let ages = table.column("age").and_then(|c| c.as_continuous()).expect("continuous age");
    let back = decoded.column("age").and_then(|c| c.as_continuous()).expect("continuous age");
    let worst = ages.iter().zip(back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("largest age round-trip error {worst:.2e}");
    for name in ["hh_comp", "ethnicity"] {
        let same = (0..table.n_rows()).all(|r| table.label(r, name) == decoded.label(r, name));
        println!("{name} round-trips exactly: {same}");
    }
    Ok(())
}
