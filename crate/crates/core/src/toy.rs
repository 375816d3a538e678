//! Small synthetic datasets with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dag::Dag;
use crate::schema::{Column, DataTable, TableSchema, VariableSpec};

pub const LABELS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// Three categorical columns `x -> y -> z`.
///
/// `x` is uniform over five labels, `y` copies `x` except that with
/// probability `noise` it takes one of the other four labels uniformly, and
/// `z` is the parity of `y`'s label index.
pub fn label_noise_table(n: usize, noise: f64, seed: u64) -> DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = LABELS.len() as u32;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.random_range(0..k);
        let yi = if rng.random::<f64>() < noise {
            (xi + rng.random_range(1..k)) % k
        } else {
            xi
        };
        x.push(xi);
        y.push(yi);
        z.push(yi % 2);
    }
    DataTable::new(
        label_noise_schema(),
        vec![Column::Categorical(x), Column::Categorical(y), Column::Categorical(z)],
    )
    .expect("toy columns match the schema")
}

pub fn label_noise_schema() -> TableSchema {
    TableSchema::new(vec![
        VariableSpec::categorical("x", LABELS),
        VariableSpec::categorical("y", LABELS),
        VariableSpec::categorical("z", ["0", "1"]),
    ])
    .expect("valid toy schema")
}

pub fn label_noise_dag() -> Dag {
    Dag::from_edges([], [("x", "y"), ("y", "z")])
}

pub const BOROUGHS: [&str; 3] = ["brent", "camden", "bromley"];
pub const HH_COMP: [&str; 4] = ["single", "couple", "family", "shared"];
pub const HH_INCOME: [&str; 3] = ["low", "mid", "high"];
pub const HH_PEOPLE: [&str; 5] = ["1", "2", "3", "4", "5+"];
pub const HH_CARVAN: [&str; 3] = ["0", "1", "2+"];
pub const ETHNICITY: [&str; 4] = ["white", "asian", "black", "other"];

/// Household survey shaped rows with the dependencies of [`survey_dag`].
///
/// Household size follows composition, which follows age. Car ownership
/// rises with income and size and is lowest in the inner borough.
pub fn survey_table(n: usize, seed: u64) -> DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: [Vec<u32>; 7] = Default::default();
    let mut ages = Vec::with_capacity(n);
    let pick = |rng: &mut ChaCha8Rng, weights: &[f64]| -> u32 {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i as u32;
            }
            u -= w;
        }
        weights.len() as u32 - 1
    };
    for _ in 0..n {
        let borough = rng.random_range(0..3u32);
        let age = rng.random_range(18.0..90.0f64).round();
        let gender = rng.random_range(0..2u32);
        let comp = match age {
            a if a < 30.0 => pick(&mut rng, &[0.3, 0.2, 0.1, 0.4]),
            a if a < 55.0 => pick(&mut rng, &[0.15, 0.3, 0.5, 0.05]),
            _ => pick(&mut rng, &[0.45, 0.45, 0.08, 0.02]),
        };
        let income = match (borough, comp) {
            (1, _) => pick(&mut rng, &[0.3, 0.3, 0.4]),
            (_, 0) => pick(&mut rng, &[0.5, 0.35, 0.15]),
            _ => pick(&mut rng, &[0.3, 0.45, 0.25]),
        };
        let ethnicity = match borough {
            0 => pick(&mut rng, &[0.35, 0.35, 0.2, 0.1]),
            1 => pick(&mut rng, &[0.6, 0.15, 0.1, 0.15]),
            _ => pick(&mut rng, &[0.8, 0.08, 0.07, 0.05]),
        };
        let people = match comp {
            0 => 0,
            1 => 1,
            2 => pick(&mut rng, &[0.0, 0.0, 0.4, 0.4, 0.2]) + u32::from(ethnicity == 1),
            _ => pick(&mut rng, &[0.0, 0.3, 0.4, 0.2, 0.1]),
        }
        .min(4);
        let base = [0.0, 0.4, 0.9][income as usize] + 0.2 * people as f64 - if borough == 1 { 0.6 } else { 0.0 };
        let carvan = pick(&mut rng, &[(1.0 - base).max(0.1), 1.0, base.max(0.1)]);
        let row = [gender, borough, comp, income, people, carvan, ethnicity];
        for (col, v) in cols.iter_mut().zip(row) {
            col.push(v);
        }
        ages.push(age);
    }
    let [gender, borough, comp, income, people, carvan, ethnicity] = cols;
    DataTable::new(
        survey_schema(),
        vec![
            Column::Continuous(ages),
            Column::Categorical(gender),
            Column::Categorical(borough),
            Column::Categorical(comp),
            Column::Categorical(income),
            Column::Categorical(people),
            Column::Categorical(carvan),
            Column::Categorical(ethnicity),
        ],
    )
    .expect("toy columns match the schema")
}

pub fn survey_schema() -> TableSchema {
    TableSchema::new(vec![
        VariableSpec::continuous("age").with_bounds(18.0, 90.0),
        VariableSpec::categorical("gender", ["F", "M"]),
        VariableSpec::categorical("hh_borough", BOROUGHS),
        VariableSpec::categorical("hh_comp", HH_COMP),
        VariableSpec::categorical("hh_income", HH_INCOME),
        VariableSpec::categorical("hh_people", HH_PEOPLE),
        VariableSpec::categorical("hh_carvan", HH_CARVAN),
        VariableSpec::categorical("ethnicity", ETHNICITY),
    ])
    .expect("valid toy schema")
}

/// Household survey DAG; age, gender and borough are the usual conditional inputs.
pub fn survey_dag() -> Dag {
    Dag::from_edges(
        [],
        [
            ("age", "hh_comp"),
            ("gender", "hh_comp"),
            ("hh_borough", "hh_comp"),
            ("hh_borough", "hh_income"),
            ("hh_borough", "hh_carvan"),
            ("hh_comp", "hh_income"),
            ("hh_comp", "hh_people"),
            ("ethnicity", "hh_people"),
            ("hh_income", "hh_carvan"),
            ("hh_people", "hh_carvan"),
        ],
    )
}
