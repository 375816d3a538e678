//! Aggregates individuals to household-level shares per borough and measures
//! the JS distance to control totals.
//!
//! cargo run --release --example household_controls

use dagsynth::harness::{aggregate, AggregateSpec, ControlTotals};
use dagsynth::toy::survey_table;

fn main() -> dagsynth::Result<()> {
    let survey = survey_table(3000, 0);
    let census = survey_table(100_000, 1);
    let cars = AggregateSpec {
        value_var: "hh_carvan".into(),
        stratum_var: "hh_borough".into(),
        size_var: Some("hh_people".into()),
        household_level: true,
    };
    let totals = aggregate(&survey, &cars)?;
    for s in &totals.strata {
        println!(
            "{:<8} households {:>7.1}  cars {:>7.1}  shares {:?}",
            s.stratum, s.weight, s.total, s.distribution
        );
    }

    let controls = ControlTotals::from_table(&census, &cars)?;
    for entry in controls.js_against(&survey)? {
        println!("JS {:<10} {:<8} {:.4}", entry.variable, entry.stratum, entry.js);
    }
    Ok(())
}
