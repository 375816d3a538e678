//! Saves a model, reloads it and shows that seeded sampling is reproducible
//! across the round trip.
//!
//! cargo run --release --example checkpoint_sample

use dagsynth::sampler::sample;
use dagsynth::schema::write_csv_writer;
use dagsynth::toy::{label_noise_dag, label_noise_table};
use dagsynth::trainer::{load_checkpoint, save_checkpoint, train, TrainingConfig};

fn csv_bytes(table: &dagsynth::schema::DataTable) -> dagsynth::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv_writer(&mut buf, table)?;
    Ok(buf)
}

fn main() -> dagsynth::Result<()> {
    let table = label_noise_table(1000, 0.1, 0);
    let config = TrainingConfig {
        epochs: 20,
        ..Default::default()
    };
    let model = train(&table, &label_noise_dag(), &["x".into()], &config)?.checkpoint;

    let dir = std::env::temp_dir().join("dagsynth_checkpoint_example");
    save_checkpoint(&model, &dir)?;
    let reloaded = load_checkpoint(&dir)?;

    let ci = table.select_columns(&["x"])?;
    let before = csv_bytes(&sample(&model, &ci, 7)?)?;
    let after = csv_bytes(&sample(&reloaded, &ci, 7)?)?;
    let other = csv_bytes(&sample(&reloaded, &ci, 8)?)?;
    println!("checkpoint in {}", dir.display());
    println!("seed 7 before and after reload identical: {}", before == after);
    println!("seed 8 differs from seed 7: {}", before != other);
    print!("{}", String::from_utf8_lossy(&after).lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
