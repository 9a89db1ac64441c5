//! Feature-separability scores computed from pseudo-labeled clusters.
//!
//! Every score here is a pure function of a feature matrix and a cluster
//! assignment. Rows are accumulated in a canonical order (grouped by label,
//! then lexicographic by row values) so that results are bit-identical under
//! any permutation of the input rows.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::bundle::FeatureBundle;
use crate::error::{Error, Result};

/// Floor for the argument of the log transform.
pub const EPSILON: f64 = 1e-12;

/// Every score the toolkit can compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    Dispersion,
    DispersionUnweighted,
    Compactness,
    #[serde(rename = "confscore")]
    ConfScore,
    Entropy,
    Atc,
    Frechet,
    Mmd,
    KmeansDispersion,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 9] = [
        ScoreKind::Dispersion,
        ScoreKind::DispersionUnweighted,
        ScoreKind::Compactness,
        ScoreKind::ConfScore,
        ScoreKind::Entropy,
        ScoreKind::Atc,
        ScoreKind::Frechet,
        ScoreKind::Mmd,
        ScoreKind::KmeansDispersion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Dispersion => "dispersion",
            ScoreKind::DispersionUnweighted => "dispersion-unweighted",
            ScoreKind::Compactness => "compactness",
            ScoreKind::ConfScore => "confscore",
            ScoreKind::Entropy => "entropy",
            ScoreKind::Atc => "atc",
            ScoreKind::Frechet => "frechet",
            ScoreKind::Mmd => "mmd",
            ScoreKind::KmeansDispersion => "kmeans-dispersion",
        }
    }

    /// Scores that compare against a labeled in-distribution bundle.
    pub fn needs_reference(self) -> bool {
        matches!(self, ScoreKind::Atc | ScoreKind::Frechet | ScoreKind::Mmd)
    }

    /// Scores that consume a cluster assignment taken from a [`LabelSource`].
    pub fn uses_labels(self) -> bool {
        matches!(
            self,
            ScoreKind::Dispersion | ScoreKind::DispersionUnweighted | ScoreKind::Compactness
        )
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Where cluster assignments come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Argmax of the classifier logits.
    #[default]
    Pseudo,
    /// Ground-truth labels stored in the bundle.
    True,
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo" => Ok(LabelSource::Pseudo),
            "true" => Ok(LabelSource::True),
            other => Err(Error::ConfigInvalid(format!(
                "label source must be `pseudo` or `true`, got `{other}`"
            ))),
        }
    }
}

impl LabelSource {
    pub fn labels_for(self, bundle: &FeatureBundle) -> Result<Vec<usize>> {
        match self {
            LabelSource::Pseudo => pseudo_labels(bundle.logits_f64().view()),
            LabelSource::True => bundle.labels_usize().ok_or(Error::LabelsAbsent),
        }
    }
}

/// A named scalar score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreResult {
    pub kind: ScoreKind,
    pub value: f64,
    /// Set when the log argument was clamped at [`EPSILON`].
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
}

impl ScoreResult {
    pub fn plain(kind: ScoreKind, value: f64) -> Self {
        ScoreResult {
            kind,
            value,
            degenerate: false,
            counts: None,
        }
    }
}

/// Per-class centroids, class sizes and the overall feature mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCentroids {
    pub centroids: Array2<f64>,
    pub counts: Vec<usize>,
    pub global_mean: Array1<f64>,
}

/// Argmax of each logit row; ties go to the lowest class index.
pub fn pseudo_labels(logits: ArrayView2<f64>) -> Result<Vec<usize>> {
    if logits.nrows() == 0 || logits.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(logits.rows().into_iter().map(argmax).collect())
}

pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn lex_cmp(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn check_labels(labels: &[usize], m: usize, k: usize) -> Result<()> {
    if labels.len() != m {
        return Err(Error::LengthMismatch {
            left: m,
            right: labels.len(),
        });
    }
    match labels.iter().find(|&&l| l >= k) {
        Some(&label) => Err(Error::LabelOutOfRange { label, k }),
        None => Ok(()),
    }
}

/// Row indices grouped by label, each group sorted lexicographically by row.
fn grouped_rows(features: ArrayView2<f64>, labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    for g in &mut groups {
        g.sort_by(|&a, &b| lex_cmp(features.row(a), features.row(b)));
    }
    groups
}

fn sum_rows(features: ArrayView2<f64>, rows: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(features.ncols());
    for &r in rows {
        acc += &features.row(r);
    }
    acc
}

fn centroids_from_groups(features: ArrayView2<f64>, groups: &[Vec<usize>]) -> ClassCentroids {
    let (m, d) = features.dim();
    let mut centroids = Array2::zeros((groups.len(), d));
    for (j, g) in groups.iter().enumerate() {
        if !g.is_empty() {
            let mean = sum_rows(features, g) / g.len() as f64;
            centroids.row_mut(j).assign(&mean);
        }
    }
    let mut all: Vec<usize> = (0..m).collect();
    all.sort_by(|&a, &b| lex_cmp(features.row(a), features.row(b)));
    let global_mean = sum_rows(features, &all) / m as f64;
    ClassCentroids {
        centroids,
        counts: groups.iter().map(Vec::len).collect(),
        global_mean,
    }
}

pub fn class_centroids(
    features: ArrayView2<f64>,
    labels: &[usize],
    k: usize,
) -> Result<ClassCentroids> {
    let m = features.nrows();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    check_labels(labels, m, k)?;
    Ok(centroids_from_groups(
        features,
        &grouped_rows(features, labels, k),
    ))
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn clamped_ln(arg: f64) -> (f64, bool) {
    if arg < EPSILON {
        (EPSILON.ln(), true)
    } else {
        (arg.ln(), false)
    }
}

/// Log of the between-cluster scatter around the global feature mean,
/// divided by `k - 1`.
///
/// With `weighted`, each centroid's squared distance is multiplied by its
/// cluster size; otherwise every nonempty cluster counts once. Empty clusters
/// contribute nothing while the denominator stays `k - 1`.
pub fn dispersion_score(
    features: ArrayView2<f64>,
    labels: &[usize],
    k: usize,
    weighted: bool,
) -> Result<ScoreResult> {
    if features.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if k < 2 {
        return Err(Error::InvalidK {
            k,
            m: features.nrows(),
        });
    }
    let c = class_centroids(features, labels, k)?;
    let mut between = 0.0;
    for (j, &n) in c.counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let dist = sq_dist(c.global_mean.view(), c.centroids.row(j));
        between += if weighted { n as f64 * dist } else { dist };
    }
    let (value, degenerate) = clamped_ln(between / (k - 1) as f64);
    Ok(ScoreResult {
        kind: if weighted {
            ScoreKind::Dispersion
        } else {
            ScoreKind::DispersionUnweighted
        },
        value,
        degenerate,
        counts: Some(c.counts),
    })
}

/// Negative log of the pooled within-cluster scatter, `m - k` degrees of
/// freedom.
pub fn compactness_score(
    features: ArrayView2<f64>,
    labels: &[usize],
    k: usize,
) -> Result<ScoreResult> {
    let m = features.nrows();
    if m <= k {
        return Err(Error::DegenerateDenominator { m, k });
    }
    check_labels(labels, m, k)?;
    let groups = grouped_rows(features, labels, k);
    let c = centroids_from_groups(features, &groups);
    let mut within = 0.0;
    for (j, g) in groups.iter().enumerate() {
        let centroid = c.centroids.row(j);
        for &i in g {
            within += sq_dist(features.row(i), centroid);
        }
    }
    let (log, degenerate) = clamped_ln(within / (m - k) as f64);
    Ok(ScoreResult {
        kind: ScoreKind::Compactness,
        value: -log,
        degenerate,
        counts: Some(c.counts),
    })
}
