//! Frequency lists, SRMSE, KL/JS divergences and ML efficacy.

mod efficacy;
mod gbdt;

pub use efficacy::{ml_efficacy, ml_efficacy_all, ml_efficacy_with, EfficacyResult};
pub use gbdt::{Gbdt, GbdtConfig, Objective};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Column, DataTable, TableSchema, VariableKind};

pub const QUANTILE_BINS: usize = 10;

/// How one variable is discretised. Always derived from the original table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Binning {
    Categorical { categories: Vec<String> },
    /// Interior edges; a value falls in bin `#{edges <= v}`.
    Quantile { edges: Vec<f64> },
}

impl Binning {
    pub fn n_bins(&self) -> usize {
        match self {
            Binning::Categorical { categories } => categories.len(),
            Binning::Quantile { edges } => edges.len() + 1,
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Binning::Categorical { categories } => categories.clone(),
            Binning::Quantile { .. } => (0..self.n_bins()).map(|b| format!("q{b}")).collect(),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bin definition for `name`, taken from `original`.
pub fn binning(original: &DataTable, name: &str) -> Result<Binning> {
    let spec = original
        .spec(name)
        .ok_or_else(|| Error::UnknownVariable(name.to_owned()))?;
    match original.column(name).expect("spec implies column") {
        Column::Categorical(_) => Ok(Binning::Categorical {
            categories: spec.categories.clone(),
        }),
        Column::Continuous(values) => {
            if values.is_empty() {
                return Err(Error::EmptyTable);
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let edges = (1..QUANTILE_BINS)
                .map(|i| quantile(&sorted, i as f64 / QUANTILE_BINS as f64))
                .collect();
            Ok(Binning::Quantile { edges })
        }
    }
}

fn bin_indices(table: &DataTable, name: &str, binning: &Binning) -> Result<Vec<usize>> {
    let spec = table
        .spec(name)
        .ok_or_else(|| Error::UnknownVariable(name.to_owned()))?;
    match (binning, table.column(name).expect("spec implies column")) {
        (Binning::Categorical { categories }, Column::Categorical(codes)) => {
            let remap: Vec<Option<usize>> = spec
                .categories
                .iter()
                .map(|c| categories.iter().position(|k| k == c))
                .collect();
            codes
                .iter()
                .enumerate()
                .map(|(row, &c)| {
                    remap[c as usize].ok_or_else(|| Error::UnknownCategory {
                        value: spec.categories[c as usize].clone(),
                        column: name.to_owned(),
                        row: Some(row),
                    })
                })
                .collect()
        }
        (Binning::Quantile { edges }, Column::Continuous(values)) => Ok(values
            .iter()
            .map(|&v| edges.iter().filter(|&&e| e <= v).count())
            .collect()),
        _ => Err(Error::SchemaMismatch(format!(
            "column {name:?} kind differs from its binning"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyList {
    pub variables: Vec<String>,
    /// Bin labels; pairs are joined with `|`.
    pub labels: Vec<String>,
    pub frequencies: Vec<f64>,
}

/// Relative frequencies of one variable or a pair, binned by `binnings`
/// (one per variable). Pairs use the cross product of bins, row-major.
pub fn frequency_list(table: &DataTable, vars: &[&str], binnings: &[Binning]) -> Result<FrequencyList> {
    if vars.is_empty() || vars.len() > 2 || vars.len() != binnings.len() {
        return Err(Error::InvalidConfig(
            "frequency lists cover one or two variables, each with a binning".into(),
        ));
    }
    if table.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let indices = vars
        .iter()
        .zip(binnings)
        .map(|(v, b)| bin_indices(table, v, b))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = binnings.iter().map(Binning::n_bins).collect();
    let total: usize = sizes.iter().product();
    let mut counts = vec![0usize; total];
    for row in 0..table.n_rows() {
        let mut flat = 0;
        for (idx, size) in indices.iter().zip(&sizes) {
            flat = flat * size + idx[row];
        }
        counts[flat] += 1;
    }
    let labels = if binnings.len() == 1 {
        binnings[0].labels()
    } else {
        let (a, b) = (binnings[0].labels(), binnings[1].labels());
        a.iter()
            .flat_map(|x| b.iter().map(move |y| format!("{x}|{y}")))
            .collect()
    };
    let n = table.n_rows() as f64;
    Ok(FrequencyList {
        variables: vars.iter().map(|v| (*v).to_owned()).collect(),
        labels,
        frequencies: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// RMSE between two lists divided by the mean of the original list.
pub fn srmse(original: &FrequencyList, synthetic: &FrequencyList) -> Result<f64> {
    if original.variables != synthetic.variables || original.labels != synthetic.labels {
        return Err(Error::BinMismatch);
    }
    let n = original.frequencies.len() as f64;
    let mse = original
        .frequencies
        .iter()
        .zip(&synthetic.frequencies)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / n;
    let mean = original.frequencies.iter().sum::<f64>() / n;
    Ok(mse.sqrt() / mean)
}

/// `sum_x P(x) log2(P(x) / Q(x))`, with `0 log 0 = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::BinMismatch);
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportViolation { index });
            }
            total += pi * (pi / qi).log2();
        }
    }
    Ok(total)
}

/// Square root of the Jensen-Shannon divergence, base 2, in `[0, 1]`.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::BinMismatch);
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let divergence = 0.5 * (kl(p, &m)? + kl(q, &m)?);
    Ok(divergence.clamp(0.0, 1.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmseEntry {
    pub variables: Vec<String>,
    pub srmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsEntry {
    pub variable: String,
    pub stratum: String,
    pub js: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub level: Option<u8>,
    pub srmse: Vec<SrmseEntry>,
    pub mean_srmse: Option<f64>,
    pub ml_efficacy: Vec<EfficacyResult>,
    pub mean_ml_efficacy: Option<f64>,
    pub js: Vec<JsEntry>,
    pub mean_js: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    /// Recomputes every aggregate from its parts.
    pub fn refresh_means(&mut self) {
        self.mean_srmse = mean(self.srmse.iter().map(|e| e.srmse));
        self.mean_ml_efficacy = mean(self.ml_efficacy.iter().map(|e| e.relative));
        self.mean_js = mean(self.js.iter().map(|e| e.js));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Long format: `metric,variables,stratum,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "variables", "stratum", "value"])?;
        for e in &self.srmse {
            w.write_record(["srmse", &e.variables.join("|"), "", &e.srmse.to_string()])?;
        }
        for e in &self.ml_efficacy {
            w.write_record(["ml_efficacy", &e.target, "", &e.relative.to_string()])?;
        }
        for e in &self.js {
            w.write_record(["js", &e.variable, &e.stratum, &e.js.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
        Ok(())
    }
}

/// Checks that two schemas name the same variables with the same kinds.
pub fn check_same_variables(a: &TableSchema, b: &TableSchema) -> Result<()> {
    let names = |s: &TableSchema| -> Vec<(String, VariableKind)> {
        let mut v: Vec<_> = s.variables.iter().map(|v| (v.name.clone(), v.kind)).collect();
        v.sort_by(|x, y| x.0.cmp(&y.0));
        v
    };
    if names(a) != names(b) {
        return Err(Error::SchemaMismatch(format!(
            "variables differ: {:?} vs {:?}",
            a.names().collect::<Vec<_>>(),
            b.names().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// SRMSE for every variable (level 1) or every unordered pair (level 2) of
/// the original table, skipping `exclude`.
pub fn assess(original: &DataTable, synthetic: &DataTable, level: u8, exclude: &[&str]) -> Result<MetricsReport> {
    check_same_variables(original.schema(), synthetic.schema())?;
    if !(1..=2).contains(&level) {
        return Err(Error::InvalidConfig(format!("level must be 1 or 2, got {level}")));
    }
    for name in exclude {
        if original.schema().index_of(name).is_none() {
            return Err(Error::UnknownVariable((*name).to_owned()));
        }
    }
    let vars: Vec<&str> = original
        .schema()
        .names()
        .filter(|n| !exclude.contains(n))
        .collect();
    let binnings = vars
        .iter()
        .map(|v| binning(original, v))
        .collect::<Result<Vec<_>>>()?;
    let combos: Vec<Vec<usize>> = if level == 1 {
        (0..vars.len()).map(|i| vec![i]).collect()
    } else {
        (0..vars.len())
            .flat_map(|i| (i + 1..vars.len()).map(move |j| vec![i, j]))
            .collect()
    };
    let mut report = MetricsReport {
        level: Some(level),
        ..Default::default()
    };
    for combo in combos {
        let names: Vec<&str> = combo.iter().map(|&i| vars[i]).collect();
        let bins: Vec<Binning> = combo.iter().map(|&i| binnings[i].clone()).collect();
        let p = frequency_list(original, &names, &bins)?;
        let q = frequency_list(synthetic, &names, &bins)?;
        report.srmse.push(SrmseEntry {
            variables: p.variables.clone(),
            srmse: srmse(&p, &q)?,
        });
    }
    report.refresh_means();
    Ok(report)
}
