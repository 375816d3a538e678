//! Per-stratum aggregation of individual rows, optionally weighted down to
//! household level, and comparison with control totals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{js_distance, JsEntry};
use crate::schema::{Column, DataTable};

/// What to aggregate. With `household_level`, each individual carries weight
/// `1 / size`, so every household counts once in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSpec {
    pub value_var: String,
    pub stratum_var: String,
    #[serde(default)]
    pub size_var: Option<String>,
    #[serde(default)]
    pub household_level: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAggregate {
    pub stratum: String,
    /// Sum of `value * weight`. Categorical values count when their label is
    /// numeric and as 1 otherwise.
    pub total: f64,
    /// Sum of weights.
    pub weight: f64,
    /// Weighted category shares; empty for continuous values.
    pub distribution: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub value_var: String,
    pub strata: Vec<StratumAggregate>,
}

impl Aggregate {
    pub fn stratum(&self, name: &str) -> Option<&StratumAggregate> {
        self.strata.iter().find(|s| s.stratum == name)
    }

    pub fn total(&self) -> f64 {
        self.strata.iter().map(|s| s.total).sum()
    }
}

fn numeric_label(label: &str) -> Option<f64> {
    label.trim().trim_end_matches('+').parse::<f64>().ok()
}

fn stratum_labels(table: &DataTable, var: &str) -> Result<Vec<String>> {
    let spec = table
        .spec(var)
        .ok_or_else(|| Error::UnknownVariable(var.to_owned()))?;
    match table.column(var).expect("spec implies column") {
        Column::Categorical(codes) => Ok(codes
            .iter()
            .map(|&c| spec.categories[c as usize].clone())
            .collect()),
        Column::Continuous(_) => Err(Error::SchemaMismatch(format!(
            "stratum variable {var:?} must be categorical"
        ))),
    }
}

/// Household sizes, read as numbers; categorical labels such as `"5+"` are
/// read by their leading number.
fn sizes(table: &DataTable, var: &str) -> Result<Vec<f64>> {
    let spec = table
        .spec(var)
        .ok_or_else(|| Error::UnknownVariable(var.to_owned()))?;
    let raw: Vec<(f64, String)> = match table.column(var).expect("spec implies column") {
        Column::Continuous(v) => v.iter().map(|&x| (x, x.to_string())).collect(),
        Column::Categorical(codes) => codes
            .iter()
            .map(|&c| {
                let label = &spec.categories[c as usize];
                (numeric_label(label).unwrap_or(f64::NAN), label.clone())
            })
            .collect(),
    };
    raw.into_iter()
        .enumerate()
        .map(|(row, (v, label))| {
            if v == 0.0 {
                Err(Error::ZeroHouseholdSize(row))
            } else if !(v > 0.0) || !v.is_finite() {
                Err(Error::InvalidHouseholdSize { row, value: label })
            } else {
                Ok(v)
            }
        })
        .collect()
}

pub fn aggregate(table: &DataTable, spec: &AggregateSpec) -> Result<Aggregate> {
    let strata = stratum_labels(table, &spec.stratum_var)?;
    let weights: Vec<f64> = if spec.household_level {
        let size_var = spec.size_var.as_deref().ok_or_else(|| {
            Error::InvalidConfig("household-level aggregation needs a size variable".into())
        })?;
        sizes(table, size_var)?.into_iter().map(|s| 1.0 / s).collect()
    } else {
        vec![1.0; table.n_rows()]
    };
    let value_spec = table
        .spec(&spec.value_var)
        .ok_or_else(|| Error::UnknownVariable(spec.value_var.clone()))?;
    let (values, labels): (Vec<f64>, Option<Vec<&str>>) =
        match table.column(&spec.value_var).expect("spec implies column") {
            Column::Continuous(v) => (v.clone(), None),
            Column::Categorical(codes) => {
                let labels: Vec<&str> = codes
                    .iter()
                    .map(|&c| value_spec.categories[c as usize].as_str())
                    .collect();
                (labels.iter().map(|l| numeric_label(l).unwrap_or(1.0)).collect(), Some(labels))
            }
        };

    let mut by_stratum: BTreeMap<&str, StratumAggregate> = BTreeMap::new();
    for row in 0..table.n_rows() {
        let entry = by_stratum
            .entry(strata[row].as_str())
            .or_insert_with(|| StratumAggregate {
                stratum: strata[row].clone(),
                total: 0.0,
                weight: 0.0,
                distribution: BTreeMap::new(),
            });
        let w = weights[row];
        entry.total += values[row] * w;
        entry.weight += w;
        if let Some(labels) = &labels {
            *entry.distribution.entry(labels[row].to_owned()).or_insert(0.0) += w;
        }
    }
    let strata = by_stratum
        .into_values()
        .map(|mut s| {
            if labels.is_some() {
                for c in &value_spec.categories {
                    s.distribution.entry(c.clone()).or_insert(0.0);
                }
                for v in s.distribution.values_mut() {
                    *v /= s.weight;
                }
            }
            s
        })
        .collect();
    Ok(Aggregate {
        value_var: spec.value_var.clone(),
        strata,
    })
}

/// Household-weighted aggregate of `value_var` per stratum.
pub fn household_aggregate(table: &DataTable, value_var: &str, size_var: &str, stratum_var: &str) -> Result<Aggregate> {
    aggregate(
        table,
        &AggregateSpec {
            value_var: value_var.to_owned(),
            stratum_var: stratum_var.to_owned(),
            size_var: Some(size_var.to_owned()),
            household_level: true,
        },
    )
}

/// Expected per-stratum category distribution of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTotals {
    pub variable: String,
    pub stratum_var: String,
    #[serde(default)]
    pub household_level: bool,
    #[serde(default)]
    pub household_size_var: Option<String>,
    pub distributions: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ControlTotals {
    pub fn validate(&self) -> Result<()> {
        for (stratum, dist) in &self.distributions {
            let sum: f64 = dist.values().sum();
            if (sum - 1.0).abs() > 1e-9 || dist.values().any(|&p| p < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "control distribution of {:?} in stratum {stratum:?} sums to {sum}",
                    self.variable
                )));
            }
        }
        Ok(())
    }

    pub fn aggregate_spec(&self) -> AggregateSpec {
        AggregateSpec {
            value_var: self.variable.clone(),
            stratum_var: self.stratum_var.clone(),
            size_var: self.household_size_var.clone(),
            household_level: self.household_level,
        }
    }

    /// Control totals equal to `table`'s own aggregates.
    pub fn from_table(table: &DataTable, spec: &AggregateSpec) -> Result<Self> {
        let agg = aggregate(table, spec)?;
        if agg.strata.iter().any(|s| s.distribution.is_empty()) {
            return Err(Error::SchemaMismatch(format!(
                "control totals need a categorical variable, {:?} is continuous",
                spec.value_var
            )));
        }
        Ok(Self {
            variable: spec.value_var.clone(),
            stratum_var: spec.stratum_var.clone(),
            household_level: spec.household_level,
            household_size_var: spec.size_var.clone(),
            distributions: agg
                .strata
                .into_iter()
                .map(|s| (s.stratum, s.distribution))
                .collect(),
        })
    }

    /// JS distance per control stratum between `table`'s aggregate and the controls.
    pub fn js_against(&self, table: &DataTable) -> Result<Vec<JsEntry>> {
        let agg = aggregate(table, &self.aggregate_spec())?;
        self.distributions
            .iter()
            .map(|(stratum, control)| {
                let found = agg
                    .stratum(stratum)
                    .ok_or_else(|| Error::EmptyStratum(stratum.clone()))?;
                let mut labels: Vec<&String> = control.keys().collect();
                for k in found.distribution.keys() {
                    if !control.contains_key(k) {
                        labels.push(k);
                    }
                }
                let p: Vec<f64> = labels.iter().map(|l| control.get(*l).copied().unwrap_or(0.0)).collect();
                let q: Vec<f64> = labels
                    .iter()
                    .map(|l| found.distribution.get(*l).copied().unwrap_or(0.0))
                    .collect();
                Ok(JsEntry {
                    variable: self.variable.clone(),
                    stratum: stratum.clone(),
                    js: js_distance(&p, &q)?,
                })
            })
            .collect()
    }
}
