//! Dataset ingestion, min-max normalization and synthetic generators.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Feature matrix normalized to `[0, 1]` per column, with one-hot labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub columns: Vec<String>,
    pub class_names: Vec<String>,
    /// Per-column `(min, max)` of the raw values before normalization.
    pub ranges: Vec<(f64, f64)>,
    /// Row-major features.
    pub features: Vec<Vec<f64>>,
    /// Row-major one-hot labels.
    pub labels: Vec<Vec<f64>>,
    pub provenance: String,
}

impl TabularDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Index of the hot entry of row `i`.
    pub fn class_of(&self, i: usize) -> usize {
        self.labels[i]
            .iter()
            .position(|&v| v == 1.0)
            .expect("one-hot label")
    }

    /// Rows at `indices`, keeping metadata.
    pub fn select(&self, indices: &[usize]) -> TabularDataset {
        TabularDataset {
            columns: self.columns.clone(),
            class_names: self.class_names.clone(),
            ranges: self.ranges.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// First `n` rows and the remainder.
    pub fn split_at(&self, n: usize) -> (TabularDataset, TabularDataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Maps normalized features back to raw units with the stored ranges.
    pub fn denormalize(&self) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.ranges)
                    .map(|(v, (lo, hi))| lo + v * (hi - lo))
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ds: TabularDataset = serde_json::from_str(s)?;
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let d = self.columns.len();
        let c = self.class_names.len();
        if self.ranges.len() != d || self.labels.len() != self.features.len() {
            return Err(Error::Data("inconsistent dataset shape".into()));
        }
        for (row, label) in self.features.iter().zip(&self.labels) {
            if row.len() != d || label.len() != c {
                return Err(Error::Data("row length does not match header".into()));
            }
            if label.iter().filter(|&&v| v == 1.0).count() != 1
                || label.iter().any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(Error::Data("labels must be one-hot".into()));
            }
        }
        Ok(())
    }
}

/// Min-max normalizes columns in place, returning `(min, max)` per column.
/// Range-zero columns map to 0.
pub fn normalize_columns(rows: &mut [Vec<f64>], n_cols: usize) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n_cols];
    for row in rows.iter() {
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    for row in rows.iter_mut() {
        for (v, &(lo, hi)) in row.iter_mut().zip(&ranges) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
    }
    ranges
}

fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    v
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Columns forced to be categorical; any column containing a
    /// non-numeric value is treated as categorical as well.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Columns to drop before processing.
    #[serde(default)]
    pub ignore: Vec<String>,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "?" || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

/// Reads a comma-separated file with a header row.
///
/// Rows with missing values are dropped, categorical columns become
/// indicator columns named `column=level`, and numeric columns are min-max
/// normalized. Labels are the distinct values of `label_column`, sorted.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, options: &CsvOptions) -> Result<TabularDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(b',')
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Data(format!("label column '{label_column}' not found")))?;

    let mut records: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "record has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        if rec.iter().any(is_missing) {
            continue;
        }
        records.push(rec.iter().map(|f| f.trim().to_string()).collect());
    }
    if records.is_empty() {
        return Err(Error::Data(format!("no complete rows in {}", path.display())));
    }

    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && !options.ignore.contains(&header[j]))
        .collect();

    enum Kind {
        Numeric,
        Categorical(Vec<String>),
    }
    let kinds: Vec<Kind> = feature_cols
        .iter()
        .map(|&j| {
            let numeric = !options.categorical.contains(&header[j])
                && records.iter().all(|r| r[j].parse::<f64>().is_ok());
            if numeric {
                Kind::Numeric
            } else {
                let levels: BTreeSet<&str> = records.iter().map(|r| r[j].as_str()).collect();
                Kind::Categorical(levels.into_iter().map(String::from).collect())
            }
        })
        .collect();

    let mut columns = Vec::new();
    for (&j, kind) in feature_cols.iter().zip(&kinds) {
        match kind {
            Kind::Numeric => columns.push(header[j].clone()),
            Kind::Categorical(levels) => {
                columns.extend(levels.iter().map(|l| format!("{}={}", header[j], l)))
            }
        }
    }

    let mut features: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut row = Vec::with_capacity(columns.len());
            for (&j, kind) in feature_cols.iter().zip(&kinds) {
                match kind {
                    Kind::Numeric => row.push(r[j].parse::<f64>().expect("checked numeric")),
                    Kind::Categorical(levels) => {
                        row.extend(levels.iter().map(|l| if *l == r[j] { 1.0 } else { 0.0 }))
                    }
                }
            }
            row
        })
        .collect();
    let ranges = normalize_columns(&mut features, columns.len());

    let class_names: Vec<String> = records
        .iter()
        .map(|r| r[label_idx].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels = records
        .iter()
        .map(|r| {
            let c = class_names.binary_search(&r[label_idx]).expect("known class");
            one_hot(c, class_names.len())
        })
        .collect();

    Ok(TabularDataset {
        columns,
        class_names,
        ranges,
        features,
        labels,
        provenance: format!("csv:{}", path.display()),
    })
}

/// Isotropic unit-variance Gaussian blobs around mutually separated centers.
///
/// Class `c` is centered at `separation` times the `c`-th axis (classes
/// beyond `d` wrap to negative axes, then to scaled diagonals). Row `i` has
/// class `i mod classes`. Features are min-max normalized afterwards.
pub fn synth_blobs(n: usize, d: usize, classes: usize, separation: f64, seed: u64) -> Result<TabularDataset> {
    if d == 0 || classes < 2 || n < classes {
        return Err(Error::Config(format!(
            "synth_blobs needs d >= 1, classes >= 2 and n >= classes (got n={n}, d={d}, classes={classes})"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::Config("separation must be nonnegative".into()));
    }
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut center = vec![0.0; d];
            let axis = c % d;
            let sign = if (c / d).is_multiple_of(2) { 1.0 } else { -1.0 };
            let scale = 1.0 + (c / (2 * d)) as f64;
            center[axis] = sign * scale * separation;
            center
        })
        .collect();
    let mut rng = stream(seed, Domain::Data, 0);
    let mut features: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            centers[i % classes]
                .iter()
                .map(|&c| c + rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let ranges = normalize_columns(&mut features, d);
    Ok(TabularDataset {
        columns: (0..d).map(|j| format!("x{j}")).collect(),
        class_names: (0..classes).map(|c| format!("class{c}")).collect(),
        ranges,
        features,
        labels: (0..n).map(|i| one_hot(i % classes, classes)).collect(),
        provenance: format!("blobs:n={n},d={d},classes={classes},separation={separation},seed={seed}"),
    })
}

/// The four-person wage survey: universe, the true survey, and the
/// alternative in which Dan replaces Bob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageUniverse {
    pub names: Vec<String>,
    pub universe: Vec<f64>,
    pub d: Vec<f64>,
    pub d_prime: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl WageUniverse {
    /// Sum-query sensitivity over the wage range, `hi - lo`.
    pub fn sensitivity(&self) -> f64 {
        self.hi - self.lo
    }
}

pub fn wage_universe() -> WageUniverse {
    WageUniverse {
        names: ["Alice", "Bob", "Carol", "Dan"].map(String::from).to_vec(),
        universe: vec![5.0, 10.0, 2.0, 1.0],
        d: vec![5.0, 10.0, 2.0],
        d_prime: vec![5.0, 1.0, 2.0],
        lo: 1.0,
        hi: 10.0,
    }
}
