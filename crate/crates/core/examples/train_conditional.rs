//! Trains on the label-noise toy (`x -> y -> z`, `x` conditional) and checks
//! how often sampled `y` agrees with the supplied `x`.
//!
//! cargo run --release --example train_conditional [epochs] [seed] [out_dir]

use std::path::PathBuf;

use dagsynth::sampler::sample;
use dagsynth::toy::{label_noise_dag, label_noise_table};
use dagsynth::trainer::{Trainer, TrainingConfig};

fn main() -> dagsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(150, |a| a.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));
    let out = args.next().map(PathBuf::from);

    let table = label_noise_table(2000, 0.1, seed);
    let config = TrainingConfig {
        epochs,
        seed,
        ..Default::default()
    };
    let mut trainer = Trainer::new(&table, &label_noise_dag(), &["x".into()], config)?;
    while trainer.epoch() < epochs {
        trainer.run_epoch()?;
        if trainer.epoch() % 25 == 0 || trainer.epoch() == epochs {
            let last = trainer.trace().records.last().expect("one step per epoch at least");
            let synthetic = sample(&trainer.checkpoint(), &table, seed)?;
            let agree = (0..table.n_rows())
                .filter(|&r| synthetic.label(r, "y") == table.label(r, "x"))
                .count() as f64
                / table.n_rows() as f64;
            println!(
                "epoch {:>4}  loss_D {:>7.3}  loss_G {:>7.3}  gp {:.4}  P(y = x) {agree:.3}",
                trainer.epoch(),
                last.loss_d,
                last.loss_g,
                last.gp
            );
        }
    }
    if let Some(dir) = out {
        trainer.run(Some(&dir))?;
        trainer.trace().write_csv_file(dir.join("loss_trace.csv"))?;
        println!("checkpoint written to {}", dir.display());
    }
    Ok(())
}
