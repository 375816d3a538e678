//! Scores a fresh draw and a corrupted copy of the toy survey against the
//! original, first on binned frequencies and then by predictive loss.
//!
//! cargo run --release --example evaluate_metrics

use dagsynth::metrics::{assess, js_distance, ml_efficacy_with, GbdtConfig};
use dagsynth::toy::survey_table;

fn main() -> dagsynth::Result<()> {
    let original = survey_table(3000, 0);
    let fresh = survey_table(3000, 1);
    // same rows, but household size shuffled against everything else
    let mut order: Vec<usize> = (0..original.n_rows()).collect();
    order.rotate_left(1234);
    let shuffled = original
        .select_columns(&["age", "gender", "hh_borough", "hh_comp", "hh_income"])?
        .hstack(&original.select_columns(&["hh_people"])?.select_rows(&order))?
        .hstack(&original.select_columns(&["hh_carvan", "ethnicity"])?)?;

    for level in [1, 2] {
        let a = assess(&original, &fresh, level, &[])?;
        let b = assess(&original, &shuffled, level, &[])?;
        println!(
            "level {level} mean SRMSE  fresh draw {:.4}  shuffled size {:.4}",
            a.mean_srmse.unwrap_or(f64::NAN),
            b.mean_srmse.unwrap_or(f64::NAN)
        );
    }

    println!("JS((0.5, 0.5), (1, 0)) = {:.4}", js_distance(&[0.5, 0.5], &[1.0, 0.0])?);

    let config = GbdtConfig {
        n_trees: 100,
        ..Default::default()
    };
    for (label, synthetic) in [("fresh draw", &fresh), ("shuffled size", &shuffled)] {
        let r = ml_efficacy_with(&original, synthetic, "hh_people", 0, &config)?;
        println!(
            "hh_people efficacy, {label}: loss {:.3} vs cross-validated {:.3}, relative {:+.3}",
            r.loss_synthetic, r.loss_original, r.relative
        );
    }
    Ok(())
}
