//! Writes the toy datasets and configs used by the command-line walkthrough
//! into `examples/data/toy/`.
//!
//! cargo run --release --example make_toy_data

use std::fs;
use std::path::Path;

use dagsynth::harness::{AggregateSpec, BiasRule, ControlTotals, Test};
use dagsynth::schema::write_csv;
use dagsynth::toy::{label_noise_dag, label_noise_table, survey_dag, survey_table};

fn json(path: &Path, value: &impl serde::Serialize) -> dagsynth::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").expect("writable data dir");
    Ok(())
}

fn main() -> dagsynth::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/toy");
    fs::create_dir_all(&dir).expect("writable data dir");

    let labels = label_noise_table(2000, 0.1, 0);
    write_csv(dir.join("labels.csv"), &labels)?;
    json(&dir.join("labels_schema.json"), labels.schema())?;
    json(&dir.join("labels_dag.json"), &label_noise_dag().to_file(&["x".into()]))?;
    write_csv(dir.join("labels_ci.csv"), &labels.select_columns(&["x"])?)?;
    json(
        &dir.join("labels_rules.json"),
        &[BiasRule::new("x", Test::In(vec!["a".into()]), 0.7)],
    )?;

    let survey = survey_table(3000, 0);
    write_csv(dir.join("survey.csv"), &survey)?;
    json(&dir.join("survey_schema.json"), survey.schema())?;
    json(
        &dir.join("survey_dag.json"),
        &survey_dag().to_file(&["age".into(), "gender".into(), "hh_borough".into()]),
    )?;
    let population = survey_table(20_000, 1).select_columns(&["age", "gender", "hh_borough"])?;
    write_csv(dir.join("survey_distributor.csv"), &population)?;

    let cars = AggregateSpec {
        value_var: "hh_carvan".into(),
        stratum_var: "hh_borough".into(),
        size_var: Some("hh_people".into()),
        household_level: true,
    };
    json(&dir.join("survey_aggregate.json"), &cars)?;
    let census = survey_table(50_000, 2);
    let controls = vec![
        ControlTotals::from_table(&census, &cars)?,
        ControlTotals::from_table(
            &census,
            &AggregateSpec {
                value_var: "ethnicity".into(),
                stratum_var: "hh_borough".into(),
                size_var: None,
                household_level: false,
            },
        )?,
    ];
    json(&dir.join("survey_controls.json"), &controls)?;

    let quick = serde_json::json!({
        "epochs": 30,
        "batch_size": 500,
        "dims": { "d_z": 16, "d_h": 32, "d_f": 24 },
        "discriminator": { "hidden": 64, "layers": 2 }
    });
    json(&dir.join("quick_training.json"), &quick)?;
    json(
        &dir.join("debias_experiment.json"),
        &serde_json::json!({
            "feeder": "labels.csv",
            "schema": "labels_schema.json",
            "dag": "labels_dag.json",
            "ci": ["x"],
            "bias_rules": [{ "conditions": [{ "variable": "x", "in": ["a"] }], "removal_rate": 0.7 }],
            "trainings": 2,
            "samples_per_training": 2,
            "seed": 0,
            "training": quick,
        }),
    )?;
    json(
        &dir.join("population_experiment.json"),
        &serde_json::json!({
            "feeder": "survey.csv",
            "schema": "survey_schema.json",
            "distributor": "survey_distributor.csv",
            "dag": "survey_dag.json",
            "ci": ["age", "gender", "hh_borough"],
            "control_totals": controls,
            "seed": 0,
            "training": quick,
        }),
    )?;
    println!("wrote toy data to {}", dir.display());
    Ok(())
}
