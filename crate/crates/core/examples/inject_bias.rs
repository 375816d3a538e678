//! Removes shares of rows matching rules, one rule after another.
//!
//! cargo run --release --example inject_bias

use dagsynth::harness::{inject_bias_rows, keep_one_category_per_stratum, BiasRule, Test};
use dagsynth::toy::survey_table;

fn main() -> dagsynth::Result<()> {
    let table = survey_table(5000, 0);
    let rules = vec![
        BiasRule::new("gender", Test::In(vec!["M".into()]), 0.7),
        BiasRule::new("age", Test::Le(20.0), 0.7),
    ];
    println!("{}", serde_json::to_string(&rules)?);
    let outcome = inject_bias_rows(&table, &rules, 0)?;
    for ((rule, m), k) in rules.iter().zip(&outcome.matched).zip(&outcome.removed) {
        println!("{:?}: matched {m}, removed {k}", rule.conditions[0].test);
    }
    println!("{} of {} rows kept", outcome.kept.len(), table.n_rows());

    // one age band survives untouched in each borough
    let banded = {
        let ages = table.column("age").and_then(|c| c.as_continuous()).expect("age");
        let band: Vec<&str> = ages
            .iter()
            .map(|&a| if a < 25.0 { "young" } else if a <= 55.0 { "middle" } else { "old" })
            .collect();
        let schema = dagsynth::schema::TableSchema::new(vec![
            dagsynth::schema::VariableSpec::categorical("age_band", ["young", "middle", "old"]),
        ])?;
        let codes = band
            .iter()
            .map(|b| schema.variables[0].category_index(b).expect("known band"))
            .collect();
        let bands = dagsynth::schema::DataTable::new(schema, vec![dagsynth::schema::Column::Categorical(codes)])?;
        table.hstack(&bands)?
    };
    let rules = keep_one_category_per_stratum(&banded, "hh_borough", "age_band", 0.95, 42)?;
    let outcome = inject_bias_rows(&banded, &rules, 0)?;
    for rule in &rules {
        println!("{}", serde_json::to_string(rule)?);
    }
    println!("{} of {} rows kept", outcome.kept.len(), banded.n_rows());
    Ok(())
}
