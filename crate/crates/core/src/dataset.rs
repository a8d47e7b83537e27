//! Two-level clustered paired observations, observation weights, and CSV I/O.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, to_f64, Scalar};

/// A single measurement: a finite real number or a code into an ordered
/// list of category levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObservedValue<T> {
    Numeric(T),
    Ordinal(u32),
}

impl<T: Scalar> ObservedValue<T> {
    /// Sort key. Ordinal codes map to their integer rank, which is all any
    /// rank-based estimator needs.
    #[inline]
    pub fn key(&self) -> T {
        match *self {
            ObservedValue::Numeric(v) => v,
            ObservedValue::Ordinal(c) => count(c as usize),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableKind {
    Numeric,
    Ordinal { levels: Vec<String> },
}

impl VariableKind {
    pub fn is_ordinal(&self) -> bool {
        matches!(self, VariableKind::Ordinal { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T> {
    pub id: String,
    pub observations: Vec<(ObservedValue<T>, ObservedValue<T>)>,
}

impl<T: Scalar> Cluster<T> {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn keys(&self, axis: Axis) -> impl Iterator<Item = T> + '_ {
        self.observations.iter().map(move |(x, y)| match axis {
            Axis::X => x.key(),
            Axis::Y => y.key(),
        })
    }
}

/// Clusters of paired `(x, y)` observations. Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset<T> {
    clusters: Vec<Cluster<T>>,
    x_kind: VariableKind,
    y_kind: VariableKind,
}

impl<T: Scalar> ClusteredDataset<T> {
    pub fn new(clusters: Vec<Cluster<T>>, x_kind: VariableKind, y_kind: VariableKind) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut seen = HashMap::with_capacity(clusters.len());
        for (i, c) in clusters.iter().enumerate() {
            if c.observations.is_empty() {
                return Err(Error::InvalidDataset(format!("cluster `{}` has no observations", c.id)));
            }
            if seen.insert(c.id.as_str(), i).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate cluster id `{}`", c.id)));
            }
            for (x, y) in &c.observations {
                check_value(x, &x_kind, &c.id, "x")?;
                check_value(y, &y_kind, &c.id, "y")?;
            }
        }
        Ok(Self {
            clusters,
            x_kind,
            y_kind,
        })
    }

    /// Builds a numeric dataset from `(cluster id, pairs)` groups.
    pub fn from_numeric<I, S>(groups: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<(T, T)>)>,
        S: Into<String>,
    {
        let clusters = groups
            .into_iter()
            .map(|(id, pairs)| Cluster {
                id: id.into(),
                observations: pairs
                    .into_iter()
                    .map(|(x, y)| (ObservedValue::Numeric(x), ObservedValue::Numeric(y)))
                    .collect(),
            })
            .collect();
        Self::new(clusters, VariableKind::Numeric, VariableKind::Numeric)
    }

    pub fn clusters(&self) -> &[Cluster<T>] {
        &self.clusters
    }

    pub fn kind(&self, axis: Axis) -> &VariableKind {
        match axis {
            Axis::X => &self.x_kind,
            Axis::Y => &self.y_kind,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_obs(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::len).collect()
    }

    /// Start offset of each cluster in the flattened observation order, plus
    /// a final entry equal to `N`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.clusters.len() + 1);
        let mut acc = 0;
        off.push(0);
        for c in &self.clusters {
            acc += c.len();
            off.push(acc);
        }
        off
    }

    /// Cluster index of every observation, in flattened order.
    pub fn cluster_of_obs(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(i, c.len()))
            .collect()
    }

    /// Sort keys of one variable, flattened in cluster order.
    pub fn keys(&self, axis: Axis) -> Vec<T> {
        self.clusters.iter().flat_map(|c| c.keys(axis)).collect()
    }

    /// Same dataset with the roles of `x` and `y` exchanged.
    pub fn swap_axes(&self) -> Self {
        Self {
            clusters: self
                .clusters
                .iter()
                .map(|c| Cluster {
                    id: c.id.clone(),
                    observations: c.observations.iter().map(|&(x, y)| (y, x)).collect(),
                })
                .collect(),
            x_kind: self.y_kind.clone(),
            y_kind: self.x_kind.clone(),
        }
    }

    /// Applies `f` to every numeric value of one variable. Ordinal variables
    /// are left untouched.
    pub fn map_numeric(&self, axis: Axis, f: impl Fn(T) -> T) -> Result<Self> {
        let map = |v: ObservedValue<T>| match v {
            ObservedValue::Numeric(x) => ObservedValue::Numeric(f(x)),
            o => o,
        };
        let clusters = self
            .clusters
            .iter()
            .map(|c| Cluster {
                id: c.id.clone(),
                observations: c
                    .observations
                    .iter()
                    .map(|&(x, y)| match axis {
                        Axis::X => (map(x), y),
                        Axis::Y => (x, map(y)),
                    })
                    .collect(),
            })
            .collect();
        Self::new(clusters, self.x_kind.clone(), self.y_kind.clone())
    }

    /// Dataset made of the listed clusters (with repetition). Repeated
    /// clusters get distinct ids so the result is a valid dataset.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let clusters = indices
            .iter()
            .enumerate()
            .map(|(draw, &i)| Cluster {
                id: format!("{}#{draw}", self.clusters[i].id),
                observations: self.clusters[i].observations.clone(),
            })
            .collect();
        Self {
            clusters,
            x_kind: self.x_kind.clone(),
            y_kind: self.y_kind.clone(),
        }
    }

    /// Minimum sizes for any correlation estimate: `N >= 2`, `n >= 2`.
    pub fn require_estimable(&self) -> Result<()> {
        if self.n_clusters() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 clusters, found {}",
                self.n_clusters()
            )));
        }
        if self.n_obs() < 2 {
            return Err(Error::InvalidDataset("need at least 2 observations".into()));
        }
        Ok(())
    }
}

fn check_value<T: Scalar>(v: &ObservedValue<T>, kind: &VariableKind, cluster: &str, var: &str) -> Result<()> {
    match (v, kind) {
        (ObservedValue::Numeric(x), VariableKind::Numeric) => {
            if !x.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "non-finite {var} value in cluster `{cluster}`"
                )));
            }
        }
        (ObservedValue::Ordinal(c), VariableKind::Ordinal { levels }) => {
            if (*c as usize) >= levels.len() {
                return Err(Error::InvalidDataset(format!(
                    "{var} code {c} out of range for {} levels in cluster `{cluster}`",
                    levels.len()
                )));
            }
        }
        _ => {
            return Err(Error::InvalidDataset(format!(
                "{var} value in cluster `{cluster}` does not match the declared kind"
            )))
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Weights

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w_ij = 1/N`.
    EqualObservation,
    /// `w_ij = 1/(n k_i)`.
    #[default]
    EqualCluster,
    /// Caller-supplied weights.
    Custom,
}

/// Per-observation weights summing to one, with their per-cluster totals.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T> {
    scheme: WeightScheme,
    weights: Vec<T>,
    cluster_weights: Vec<T>,
}

impl<T: Scalar> WeightVector<T> {
    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn cluster_weights(&self) -> &[T] {
        &self.cluster_weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Wraps caller-supplied nonnegative weights (flattened in cluster order),
    /// normalizing them to sum to one.
    pub fn custom(ds: &ClusteredDataset<T>, weights: Vec<T>) -> Result<Self> {
        if weights.len() != ds.n_obs() {
            return Err(Error::LengthMismatch {
                what: "weights",
                left: weights.len(),
                right: ds.n_obs(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights: Vec<T> = weights.into_iter().map(|w| w / total).collect();
        let cluster_weights = cluster_totals(ds, &weights);
        Ok(Self {
            scheme: WeightScheme::Custom,
            weights,
            cluster_weights,
        })
    }

    /// Whether the weights coincide with the equal-cluster scheme (up to
    /// rounding), whatever scheme they were built with.
    pub fn is_equal_cluster(&self, ds: &ClusteredDataset<T>) -> bool {
        let n = count::<T>(ds.n_clusters());
        let tol = lit::<T>(1e-12).max(T::epsilon() * lit(16.0));
        let mut k = 0;
        for c in ds.clusters() {
            let expect = T::one() / (n * count::<T>(c.len()));
            for _ in 0..c.len() {
                if (self.weights[k] - expect).abs() > tol * expect.max(T::one()) {
                    return false;
                }
                k += 1;
            }
        }
        true
    }
}

fn cluster_totals<T: Scalar>(ds: &ClusteredDataset<T>, weights: &[T]) -> Vec<T> {
    ds.offsets()
        .windows(2)
        .map(|w| weights[w[0]..w[1]].iter().copied().sum())
        .collect()
}

/// Observation weights for one of the named schemes.
///
/// `Custom` cannot be derived from the data alone; use
/// [`WeightVector::custom`] instead.
pub fn compute_weights<T: Scalar>(ds: &ClusteredDataset<T>, scheme: WeightScheme) -> Result<WeightVector<T>> {
    let n = ds.n_clusters();
    let total_obs = ds.n_obs();
    let (weights, cluster_weights) = match scheme {
        WeightScheme::EqualObservation => {
            let w = T::one() / count::<T>(total_obs);
            let weights = vec![w; total_obs];
            let cw = ds.clusters().iter().map(|c| count::<T>(c.len()) * w).collect();
            (weights, cw)
        }
        WeightScheme::EqualCluster => {
            let cw = T::one() / count::<T>(n);
            let mut weights = Vec::with_capacity(total_obs);
            for c in ds.clusters() {
                let w = cw / count::<T>(c.len());
                weights.extend(std::iter::repeat_n(w, c.len()));
            }
            (weights, vec![cw; n])
        }
        WeightScheme::Custom => {
            return Err(Error::InvalidArgument(
                "custom weights must be supplied explicitly".into(),
            ))
        }
    };
    Ok(WeightVector {
        scheme,
        weights,
        cluster_weights,
    })
}

// ---------------------------------------------------------------------------
// CSV

/// Column selection and variable kinds for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub cluster: String,
    pub x: String,
    pub y: String,
    /// Declared ordered levels when `x` is ordinal.
    pub x_levels: Option<Vec<String>>,
    pub y_levels: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn numeric(cluster: &str, x: &str, y: &str) -> Self {
        Self {
            cluster: cluster.into(),
            x: x.into(),
            y: y.into(),
            x_levels: None,
            y_levels: None,
        }
    }
}

/// Parses a comma-separated level list such as `low,mid,high`.
pub fn parse_levels(list: &str) -> Vec<String> {
    list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

/// Reads a headered CSV. Rows are grouped by cluster id in order of first
/// appearance; ordinal values are coded by their position in the declared
/// level list.
pub fn load_csv<T: Scalar, R: Read>(source: R, schema: &CsvSchema) -> Result<ClusteredDataset<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ci, xi, yi) = (col(&schema.cluster)?, col(&schema.x)?, col(&schema.y)?);

    let x_kind = kind_from_levels(&schema.x_levels)?;
    let y_kind = kind_from_levels(&schema.y_levels)?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut clusters: Vec<Cluster<T>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let field = |i: usize, name: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "field missing".into(),
            })
        };
        let id = field(ci, &schema.cluster)?;
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                column: schema.cluster.clone(),
                message: "empty cluster id".into(),
            });
        }
        let x = parse_value::<T>(field(xi, &schema.x)?, &x_kind, row, &schema.x)?;
        let y = parse_value::<T>(field(yi, &schema.y)?, &y_kind, row, &schema.y)?;
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            clusters.push(Cluster {
                id: id.to_string(),
                observations: Vec::new(),
            });
            clusters.len() - 1
        });
        clusters[slot].observations.push((x, y));
    }
    if clusters.is_empty() {
        return Err(Error::EmptyInput);
    }
    ClusteredDataset::new(clusters, x_kind, y_kind)
}

fn kind_from_levels(levels: &Option<Vec<String>>) -> Result<VariableKind> {
    match levels {
        None => Ok(VariableKind::Numeric),
        Some(levels) => {
            if levels.is_empty() {
                return Err(Error::InvalidArgument("ordinal level list is empty".into()));
            }
            let mut seen = std::collections::HashSet::new();
            for l in levels {
                if !seen.insert(l) {
                    return Err(Error::InvalidArgument(format!("duplicate ordinal level `{l}`")));
                }
            }
            Ok(VariableKind::Ordinal {
                levels: levels.clone(),
            })
        }
    }
}

fn parse_value<T: Scalar>(raw: &str, kind: &VariableKind, row: usize, column: &str) -> Result<ObservedValue<T>> {
    let err = |message: String| Error::Parse {
        row,
        column: column.to_string(),
        message,
    };
    if raw.is_empty() {
        return Err(err("missing value".into()));
    }
    match kind {
        VariableKind::Numeric => {
            let v: f64 = raw.parse().map_err(|_| err(format!("cannot parse `{raw}` as a number")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value `{raw}`")));
            }
            let t = T::from_f64(v).filter(|t| t.is_finite()).ok_or_else(|| err(format!("`{raw}` out of range")))?;
            Ok(ObservedValue::Numeric(t))
        }
        VariableKind::Ordinal { levels } => levels
            .iter()
            .position(|l| l == raw)
            .map(|c| ObservedValue::Ordinal(c as u32))
            .ok_or_else(|| err(format!("`{raw}` is not a declared level"))),
    }
}

/// Writes the dataset as CSV with the given column names. Numeric values are
/// printed with their shortest round-trip representation.
pub fn write_csv<T: Scalar, W: Write>(ds: &ClusteredDataset<T>, sink: W, columns: (&str, &str, &str)) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([columns.0, columns.1, columns.2])?;
    let fmt = |v: &ObservedValue<T>, kind: &VariableKind| match (v, kind) {
        (ObservedValue::Ordinal(c), VariableKind::Ordinal { levels }) => levels[*c as usize].clone(),
        (v, _) => format!("{}", to_f64(v.key())),
    };
    for c in ds.clusters() {
        for (x, y) in &c.observations {
            w.write_record([c.id.clone(), fmt(x, &ds.x_kind), fmt(y, &ds.y_kind)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_rows_by_first_appearance() {
        let csv = "id,a,b\nA,1,2\nB,3,4\nA,5,6\n";
        let ds: ClusteredDataset<f64> = load_csv(csv.as_bytes(), &CsvSchema::numeric("id", "a", "b")).unwrap();
        assert_eq!(ds.n_clusters(), 2);
        assert_eq!(ds.cluster_sizes(), vec![2, 1]);
        assert_eq!(ds.n_obs(), 3);
        assert_eq!(ds.clusters()[0].id, "A");
        assert_eq!(ds.keys(Axis::X), vec![1.0, 5.0, 3.0]);
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let csv = "id,a,b\nA,1,2\nB,abc,4\n";
        let err = load_csv::<f64, _>(csv.as_bytes(), &CsvSchema::numeric("id", "a", "b")).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ordinal_levels_map_to_codes() {
        let csv = "id,a,b\nA,mid,1\nA,high,2\nB,low,3\n";
        let mut schema = CsvSchema::numeric("id", "a", "b");
        schema.x_levels = Some(parse_levels("low,mid,high"));
        let ds: ClusteredDataset<f64> = load_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ds.clusters()[0].observations[0].0, ObservedValue::Ordinal(1));
        assert_eq!(ds.keys(Axis::X), vec![1.0, 2.0, 0.0]);

        let bad = "id,a,b\nA,huge,1\n";
        assert!(matches!(
            load_csv::<f64, _>(bad.as_bytes(), &schema),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn missing_column_empty_file_and_missing_values() {
        let schema = CsvSchema::numeric("id", "a", "b");
        assert!(matches!(
            load_csv::<f64, _>("id,a\nA,1\n".as_bytes(), &schema),
            Err(Error::MissingColumn(c)) if c == "b"
        ));
        assert!(matches!(load_csv::<f64, _>("".as_bytes(), &schema), Err(Error::EmptyInput)));
        assert!(matches!(load_csv::<f64, _>("id,a,b\n".as_bytes(), &schema), Err(Error::EmptyInput)));
        assert!(matches!(
            load_csv::<f64, _>("id,a,b\nA,,1\n".as_bytes(), &schema),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            load_csv::<f64, _>("id,a,b\nA,inf,1\n".as_bytes(), &schema),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn weights_for_both_schemes() {
        let ds = ClusteredDataset::from_numeric(vec![
            ("A", vec![(1.0, 2.0), (3.0, 4.0)]),
            ("B", vec![(5.0, 6.0)]),
        ])
        .unwrap();
        let wc = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
        assert_eq!(wc.weights(), &[0.25, 0.25, 0.5]);
        assert_eq!(wc.cluster_weights(), &[0.5, 0.5]);
        assert!(wc.is_equal_cluster(&ds));
        let wo = compute_weights(&ds, WeightScheme::EqualObservation).unwrap();
        for w in wo.weights() {
            assert!((w - 1.0_f64 / 3.0).abs() < 1e-15);
        }
        assert!(!wo.is_equal_cluster(&ds));
        let total: f64 = wo.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_weights_are_normalized() {
        let ds = ClusteredDataset::from_numeric(vec![("A", vec![(1.0, 2.0)]), ("B", vec![(5.0, 6.0)])]).unwrap();
        let w = WeightVector::custom(&ds, vec![1.0, 3.0]).unwrap();
        assert_eq!(w.weights(), &[0.25, 0.75]);
        assert!(WeightVector::custom(&ds, vec![1.0]).is_err());
        assert!(WeightVector::custom(&ds, vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(ClusteredDataset::<f64>::from_numeric(vec![("A", vec![(1.0, 2.0)]), ("A", vec![(1.0, 2.0)])]).is_err());
        assert!(ClusteredDataset::<f64>::from_numeric(vec![("A", vec![])]).is_err());
        assert!(ClusteredDataset::<f64>::from_numeric(vec![("A", vec![(f64::NAN, 2.0)])]).is_err());
        let single = ClusteredDataset::<f64>::from_numeric(vec![("A", vec![(1.0, 2.0), (2.0, 3.0)])]).unwrap();
        assert!(single.require_estimable().is_err());
    }
}
