//! Completes a distributor of conditional inputs with a model trained on a
//! survey, then compares household-level aggregates with control totals.
//! A stratum-matched resample of the survey serves as the baseline.
//!
//! cargo run --release --example population_experiment [epochs]

use dagsynth::harness::{run_population_experiment, AggregateSpec, ControlTotals, PopulationExperiment};
use dagsynth::toy::{survey_dag, survey_table};
use dagsynth::trainer::TrainingConfig;

fn main() -> dagsynth::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(30, |a| a.parse().expect("epochs"));
    let survey = survey_table(3000, 0);
    let census = survey_table(60_000, 1);
    let distributor = census.select_columns(&["age", "gender", "hh_borough"])?;
    let spec = |var: &str, household: bool| AggregateSpec {
        value_var: var.into(),
        stratum_var: "hh_borough".into(),
        size_var: household.then(|| "hh_people".into()),
        household_level: household,
    };
    let controls = vec![
        ControlTotals::from_table(&census, &spec("hh_carvan", true))?,
        ControlTotals::from_table(&census, &spec("hh_comp", true))?,
        ControlTotals::from_table(&census, &spec("ethnicity", false))?,
    ];
    let ci = ["age".to_owned(), "gender".to_owned(), "hh_borough".to_owned()];
    let dag = survey_dag();
    let exp = PopulationExperiment {
        feeder: &survey,
        distributor: &distributor,
        controls: &controls,
        dag: &dag,
        ci: &ci,
        training: TrainingConfig {
            epochs,
            ..Default::default()
        },
        seed: 0,
    };
    let report = run_population_experiment(&exp, None)?;
    println!("{:<10} {:<8} {:>9} {:>9}", "variable", "borough", "model", "resample");
    for (m, b) in report.synthetic.iter().zip(&report.baseline) {
        println!("{:<10} {:<8} {:>9.4} {:>9.4}", m.variable, m.stratum, m.js, b.js);
    }
    println!(
        "mean JS  model {:.4}  resample {:.4}",
        report.mean_js_synthetic, report.mean_js_baseline
    );
    Ok(())
}
