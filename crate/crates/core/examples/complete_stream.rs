//! Streams a large distributor CSV through a trained model chunk by chunk.
//! Conditional-input fields are copied through byte for byte.
//!
//! cargo run --release --example complete_stream [rows] [chunk]

use std::io::Cursor;

use dagsynth::sampler::complete_csv;
use dagsynth::schema::write_csv_writer;
use dagsynth::toy::{survey_dag, survey_table};
use dagsynth::trainer::{train, TrainingConfig};

fn main() -> dagsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows: usize = args.next().map_or(50_000, |a| a.parse().expect("rows"));
    let chunk: usize = args.next().map_or(10_000, |a| a.parse().expect("chunk"));

    let feeder = survey_table(2000, 0);
    let ci = ["age".to_owned(), "gender".to_owned(), "hh_borough".to_owned()];
    let config = TrainingConfig {
        epochs: 10,
        ..Default::default()
    };
    let model = train(&feeder, &survey_dag(), &ci, &config)?.checkpoint;

    let mut distributor = Vec::new();
    let names: Vec<&str> = ci.iter().map(String::as_str).collect();
    write_csv_writer(&mut distributor, &survey_table(rows, 1).select_columns(&names)?)?;

    let mut out = Vec::new();
    let stats = complete_csv(&model, Cursor::new(&distributor), &mut out, 3, chunk)?;
    println!(
        "rows {} chunks {} peak rows held {} (chunk size {chunk})",
        stats.rows, stats.chunks, stats.peak_rows_in_memory
    );
    let text = String::from_utf8_lossy(&out);
    for line in text.lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
