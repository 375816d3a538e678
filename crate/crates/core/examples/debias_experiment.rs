//! Trains on a biased toy table, samples with the unbiased conditional
//! inputs and evaluates against the unbiased table.
//!
//! cargo run --release --example debias_experiment [epochs] [out_dir]

use std::path::PathBuf;

use dagsynth::harness::{run_debias_experiment, BiasRule, DebiasExperiment, Test};
use dagsynth::toy::{label_noise_dag, label_noise_table};
use dagsynth::trainer::TrainingConfig;

fn main() -> dagsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(40, |a| a.parse().expect("epochs"));
    let out = args.next().map(PathBuf::from);

    let feeder = label_noise_table(2000, 0.1, 0);
    let rules = [BiasRule::new("x", Test::In(vec!["a".into()]), 0.7)];
    let dag = label_noise_dag();
    let ci = ["x".to_owned()];
    let exp = DebiasExperiment {
        feeder: &feeder,
        bias_rules: &rules,
        dag: &dag,
        ci: &ci,
        training: TrainingConfig {
            epochs,
            ..Default::default()
        },
        trainings: 2,
        samples_per_training: 2,
        seed: 0,
        level: 1,
        jobs: 2,
    };
    let bundle = run_debias_experiment(&exp, out.as_deref())?;
    println!("biased table keeps {} of {} rows", bundle.biased_rows, feeder.n_rows());
    for run in &bundle.runs {
        println!(
            "training {} sample {}  mean SRMSE {:.4}",
            run.training,
            run.sample,
            run.report.mean_srmse.unwrap_or(f64::NAN)
        );
    }
    println!("bundle mean SRMSE {:.4}", bundle.mean_srmse);
    println!(
        "biased vs unbiased SRMSE {:.4}",
        bundle.reference.mean_srmse.unwrap_or(f64::NAN)
    );
    Ok(())
}
