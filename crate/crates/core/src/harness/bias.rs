//! Removing a share of the rows that match a predicate.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Column, DataTable};

/// Comparison applied to one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Test {
    In(Vec<String>),
    NotIn(Vec<String>),
    Lt(f64),
    Le(f64),
    Gt(f64),
    Ge(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: String,
    #[serde(flatten)]
    pub test: Test,
}

/// Rows satisfying every condition are matched; `removal_rate` of them are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRule {
    pub conditions: Vec<Condition>,
    pub removal_rate: f64,
}

impl BiasRule {
    pub fn new(variable: impl Into<String>, test: Test, removal_rate: f64) -> Self {
        Self {
            conditions: vec![Condition {
                variable: variable.into(),
                test,
            }],
            removal_rate,
        }
    }

    pub fn and(mut self, variable: impl Into<String>, test: Test) -> Self {
        self.conditions.push(Condition {
            variable: variable.into(),
            test,
        });
        self
    }

    pub fn validate(&self, table: &DataTable) -> Result<()> {
        if !(0.0..=1.0).contains(&self.removal_rate) {
            return Err(Error::InvalidConfig(format!(
                "removal rate {} is outside [0, 1]",
                self.removal_rate
            )));
        }
        if self.conditions.is_empty() {
            return Err(Error::InvalidConfig("bias rule without conditions".into()));
        }
        for c in &self.conditions {
            let spec = table
                .spec(&c.variable)
                .ok_or_else(|| Error::UnknownVariable(c.variable.clone()))?;
            match &c.test {
                Test::In(labels) | Test::NotIn(labels) => {
                    if !spec.is_categorical() {
                        return Err(Error::InvalidConfig(format!(
                            "{:?} is continuous; use a numeric comparison",
                            c.variable
                        )));
                    }
                    if let Some(bad) = labels.iter().find(|l| spec.category_index(l).is_none()) {
                        return Err(Error::UnknownCategory {
                            value: bad.clone(),
                            column: c.variable.clone(),
                            row: None,
                        });
                    }
                }
                _ => {
                    if spec.is_categorical() {
                        return Err(Error::InvalidConfig(format!(
                            "{:?} is categorical; use a label set",
                            c.variable
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether each of `rows` of `table` matches.
    fn matches(&self, table: &DataTable, rows: &[usize]) -> Vec<bool> {
        let mut out = vec![true; rows.len()];
        for c in &self.conditions {
            let spec = table.spec(&c.variable).expect("validated");
            match (table.column(&c.variable).expect("validated"), &c.test) {
                (Column::Categorical(codes), Test::In(labels) | Test::NotIn(labels)) => {
                    let set: Vec<u32> = labels.iter().filter_map(|l| spec.category_index(l)).collect();
                    let negate = matches!(c.test, Test::NotIn(_));
                    for (o, &r) in out.iter_mut().zip(rows) {
                        *o &= set.contains(&codes[r]) != negate;
                    }
                }
                (Column::Continuous(values), test) => {
                    for (o, &r) in out.iter_mut().zip(rows) {
                        let v = values[r];
                        *o &= match *test {
                            Test::Lt(t) => v < t,
                            Test::Le(t) => v <= t,
                            Test::Gt(t) => v > t,
                            Test::Ge(t) => v >= t,
                            _ => unreachable!("validated"),
                        };
                    }
                }
                _ => unreachable!("validated"),
            }
        }
        out
    }
}

/// Rows kept by [`inject_bias`] and the number each rule removed.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasOutcome {
    pub kept: Vec<usize>,
    pub matched: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Applies `rules` in order, each to the rows that survived the previous ones.
/// A rule matching `m` rows removes `round(m * rate)` of them, chosen
/// uniformly without replacement.
pub fn inject_bias_rows(table: &DataTable, rules: &[BiasRule], seed: u64) -> Result<BiasOutcome> {
    for rule in rules {
        rule.validate(table)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = (0..table.n_rows()).collect();
    let mut matched_counts = Vec::with_capacity(rules.len());
    let mut removed_counts = Vec::with_capacity(rules.len());
    for rule in rules {
        let flags = rule.matches(table, &kept);
        let matched: Vec<usize> = (0..kept.len()).filter(|&i| flags[i]).collect();
        let m = matched.len();
        let k = (m as f64 * rule.removal_rate).round() as usize;
        let mut drop = vec![false; kept.len()];
        for i in sample(&mut rng, m, k) {
            drop[matched[i]] = true;
        }
        kept = kept
            .iter()
            .zip(&drop)
            .filter(|(_, &d)| !d)
            .map(|(&r, _)| r)
            .collect();
        matched_counts.push(m);
        removed_counts.push(k);
    }
    Ok(BiasOutcome {
        kept,
        matched: matched_counts,
        removed: removed_counts,
    })
}

pub fn inject_bias(table: &DataTable, rules: &[BiasRule], seed: u64) -> Result<DataTable> {
    Ok(table.select_rows(&inject_bias_rows(table, rules, seed)?.kept))
}

/// For every stratum of `stratum_var`, keeps one randomly chosen category of
/// `category_var` intact and removes `rate` of the other categories' rows.
pub fn keep_one_category_per_stratum(
    table: &DataTable,
    stratum_var: &str,
    category_var: &str,
    rate: f64,
    seed: u64,
) -> Result<Vec<BiasRule>> {
    let strata = table
        .spec(stratum_var)
        .ok_or_else(|| Error::UnknownVariable(stratum_var.to_owned()))?;
    let cats = table
        .spec(category_var)
        .ok_or_else(|| Error::UnknownVariable(category_var.to_owned()))?;
    if !strata.is_categorical() || !cats.is_categorical() {
        return Err(Error::InvalidConfig("both variables must be categorical".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(strata
        .categories
        .iter()
        .map(|s| {
            let chosen = &cats.categories[rng.random_range(0..cats.categories.len())];
            BiasRule::new(stratum_var, Test::In(vec![s.clone()]), rate)
                .and(category_var, Test::NotIn(vec![chosen.clone()]))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{TableSchema, VariableSpec};
    use proptest::prelude::*;

    fn table(codes: Vec<u32>, ages: Vec<f64>) -> DataTable {
        let schema = TableSchema::new(vec![
            VariableSpec::categorical("g", ["M", "F"]),
            VariableSpec::continuous("age"),
        ])
        .unwrap();
        DataTable::new(schema, vec![Column::Categorical(codes), Column::Continuous(ages)]).unwrap()
    }

    #[test]
    fn removes_rounded_share() {
        let t = table(vec![0; 10], (0..10).map(f64::from).collect());
        let rule = BiasRule::new("g", Test::In(vec!["M".into()]), 0.7);
        let out = inject_bias_rows(&t, &[rule.clone()], 1).unwrap();
        assert_eq!(out.kept.len(), 3);
        assert_eq!(out, inject_bias_rows(&t, &[rule], 1).unwrap());
        let none = BiasRule::new("g", Test::In(vec!["M".into()]), 0.0);
        assert_eq!(inject_bias(&t, &[none], 1).unwrap(), t);
    }

    #[test]
    fn json_shape() {
        let rule: BiasRule = serde_json::from_str(
            r#"{"conditions": [{"variable": "age", "le": 20}], "removal_rate": 0.7}"#,
        )
        .unwrap();
        assert_eq!(rule, BiasRule::new("age", Test::Le(20.0), 0.7));
    }

    #[test]
    fn invalid_rules() {
        let t = table(vec![0, 1], vec![1.0, 2.0]);
        assert!(BiasRule::new("g", Test::In(vec!["X".into()]), 0.5).validate(&t).is_err());
        assert!(BiasRule::new("g", Test::Lt(1.0), 0.5).validate(&t).is_err());
        assert!(BiasRule::new("age", Test::Lt(1.0), 1.5).validate(&t).is_err());
        assert!(BiasRule::new("nope", Test::Lt(1.0), 0.5).validate(&t).is_err());
    }

    #[test]
    fn one_category_kept_per_stratum() {
        let schema = TableSchema::new(vec![
            VariableSpec::categorical("borough", ["n", "s"]),
            VariableSpec::categorical("band", ["young", "mid", "old"]),
        ])
        .unwrap();
        let codes_b: Vec<u32> = (0..600).map(|i| (i % 2) as u32).collect();
        let codes_a: Vec<u32> = (0..600).map(|i| (i / 2 % 3) as u32).collect();
        let pop = DataTable::new(schema, vec![Column::Categorical(codes_b), Column::Categorical(codes_a)]).unwrap();
        let rules = keep_one_category_per_stratum(&pop, "borough", "band", 0.95, 4).unwrap();
        assert_eq!(rules.len(), 2);
        let out = inject_bias_rows(&pop, &rules, 0).unwrap();
        assert_eq!(out.matched, vec![200, 200]);
        assert_eq!(out.removed, vec![190, 190]);
    }

    proptest! {
        #[test]
        fn removal_counts_are_exact(
            codes in prop::collection::vec(0u32..2, 1..200),
            rates in prop::collection::vec(0.0f64..=1.0, 1..4),
            seed: u64,
        ) {
            let n = codes.len();
            let t = table(codes, (0..n).map(|i| i as f64).collect());
            let rules: Vec<BiasRule> = rates
                .iter()
                .enumerate()
                .map(|(i, &r)| if i % 2 == 0 {
                    BiasRule::new("g", Test::In(vec!["M".into()]), r)
                } else {
                    BiasRule::new("age", Test::Lt(n as f64 / 2.0), r)
                })
                .collect();
            let out = inject_bias_rows(&t, &rules, seed).unwrap();
            let mut survivors = n;
            for ((m, k), r) in out.matched.iter().zip(&out.removed).zip(&rates) {
                prop_assert_eq!(*k, (*m as f64 * r).round() as usize);
                survivors -= k;
            }
            prop_assert_eq!(out.kept.len(), survivors);
        }
    }
}
