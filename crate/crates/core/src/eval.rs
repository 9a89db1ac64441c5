//! Evaluation harness: true error, score-to-error regression, rank
//! correlation, and multi-bundle benchmark reports.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::baseline::{
    atc_calibrate, atc_predict, conf_score, entropy_score, frechet_distance, gaussian_summary,
    mmd_rbf, AtcThreshold, GaussianSummary,
};
use crate::bundle::{FeatureBundle, Manifest};
use crate::cluster::kmeans_dispersion;
use crate::error::{Error, Result};
use crate::score::{
    compactness_score, dispersion_score, pseudo_labels, LabelSource, ScoreKind, ScoreResult,
};

/// Fraction of positions where the prediction differs from the label.
pub fn true_error(pred: &[usize], labels: &[usize]) -> Result<f64> {
    if pred.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: labels.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let wrong = pred.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Average (fractional) ranks starting at 1; tied values share the mean of
/// the positions they occupy.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 points, got {}",
            xs.len()
        )));
    }
    pearson(&fractional_ranks(xs), &fractional_ranks(ys))
        .ok_or_else(|| Error::DegenerateInput("constant sequence".into()))
}

/// Least-squares line of error on score, plus fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Rank correlation between regression-predicted and true error.
    pub spearman: f64,
    /// Rank correlation between the raw score and true error.
    pub spearman_raw: f64,
    pub n_points: usize,
}

impl RegressionFit {
    pub fn predict(&self, score: f64) -> f64 {
        self.slope * score + self.intercept
    }
}

/// Closed-form OLS of `error` on `score`.
///
/// With constant errors, `r2` is 1 for an exact fit and 0 otherwise. Rank
/// correlations that are undefined (a constant side) are reported as 0.
pub fn fit_regression(points: &[(f64, f64)]) -> Result<RegressionFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "regression needs at least 2 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("all scores identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(x, y) in points {
        let r = y - (slope * x + intercept);
        ss_res += r * r;
        ss_tot += (y - my) * (y - my);
    }
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let predicted: Vec<f64> = xs.iter().map(|&x| slope * x + intercept).collect();
    Ok(RegressionFit {
        slope,
        intercept,
        r2,
        spearman: spearman(&predicted, &ys).unwrap_or(0.0),
        spearman_raw: spearman(&xs, &ys).unwrap_or(0.0),
        n_points: n,
    })
}

/// Statistics of the labeled in-distribution bundle shared by the
/// reference-based scores.
#[derive(Debug, Clone)]
pub struct ReferenceStats {
    pub features: Array2<f64>,
    pub summary: GaussianSummary,
    pub atc: AtcThreshold,
}

impl ReferenceStats {
    pub fn from_bundle(reference: &FeatureBundle) -> Result<Self> {
        let labels = reference.labels_usize().ok_or(Error::LabelsAbsent)?;
        let features = reference.features_f64();
        Ok(ReferenceStats {
            summary: gaussian_summary(features.view())?,
            atc: atc_calibrate(reference.logits_f64().view(), &labels)?,
            features,
        })
    }
}

/// Everything a score needs beyond the bundle itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScoringContext<'a> {
    pub reference: Option<&'a ReferenceStats>,
    pub labels: LabelSource,
    pub seed: u64,
}

/// Computes one score for one bundle.
pub fn score_bundle(
    bundle: &FeatureBundle,
    kind: ScoreKind,
    ctx: &ScoringContext<'_>,
) -> Result<ScoreResult> {
    let reference = || {
        ctx.reference
            .ok_or_else(|| Error::MissingReference(kind.name().to_string()))
    };
    let k = bundle.k();
    match kind {
        ScoreKind::Dispersion | ScoreKind::DispersionUnweighted => {
            let labels = ctx.labels.labels_for(bundle)?;
            dispersion_score(
                bundle.features_f64().view(),
                &labels,
                k,
                kind == ScoreKind::Dispersion,
            )
        }
        ScoreKind::Compactness => {
            let labels = ctx.labels.labels_for(bundle)?;
            compactness_score(bundle.features_f64().view(), &labels, k)
        }
        ScoreKind::ConfScore => conf_score(bundle.logits_f64().view()),
        ScoreKind::Entropy => entropy_score(bundle.logits_f64().view()),
        ScoreKind::KmeansDispersion => kmeans_dispersion(bundle.features_f64().view(), k, ctx.seed),
        ScoreKind::Atc => {
            let value = atc_predict(bundle.logits_f64().view(), &reference()?.atc)?;
            Ok(ScoreResult::plain(kind, value))
        }
        ScoreKind::Frechet => {
            let summary = gaussian_summary(bundle.features_f64().view())?;
            let value = frechet_distance(&reference()?.summary, &summary)?;
            Ok(ScoreResult::plain(kind, value))
        }
        ScoreKind::Mmd => {
            let value = mmd_rbf(
                reference()?.features.view(),
                bundle.features_f64().view(),
                None,
            )?;
            Ok(ScoreResult::plain(kind, value))
        }
    }
}

/// `meta.true_error` when present, else the argmax error against labels.
pub fn bundle_truth(bundle: &FeatureBundle) -> Result<f64> {
    if let Some(e) = bundle.meta.true_error {
        return Ok(e);
    }
    let labels = bundle
        .labels_usize()
        .ok_or_else(|| Error::MissingTruth(bundle.meta.name.clone()))?;
    true_error(&pseudo_labels(bundle.logits_f64().view())?, &labels)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkOptions {
    pub labels: LabelSource,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub bundle: String,
    pub family: String,
    pub severity: u32,
    pub true_error: f64,
    /// One score per metric, in report metric order.
    pub scores: Vec<ScoreResult>,
    /// Wall-clock scoring time per metric, seconds.
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub metrics: Vec<ScoreKind>,
    pub rows: Vec<BenchmarkRow>,
    pub fits: Vec<RegressionFit>,
}

impl BenchmarkReport {
    pub fn fit(&self, kind: ScoreKind) -> Option<&RegressionFit> {
        self.metrics
            .iter()
            .position(|&m| m == kind)
            .map(|i| &self.fits[i])
    }

    /// Score values of one metric, in row order.
    pub fn column(&self, kind: ScoreKind) -> Option<Vec<f64>> {
        let i = self.metrics.iter().position(|&m| m == kind)?;
        Some(self.rows.iter().map(|r| r.scores[i].value).collect())
    }

    pub fn fits_json(&self) -> Value {
        let fits: serde_json::Map<String, Value> = self
            .metrics
            .iter()
            .zip(&self.fits)
            .map(|(m, f)| (m.name().to_string(), json!(f)))
            .collect();
        Value::Object(fits)
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let scores: serde_json::Map<String, Value> = self
                    .metrics
                    .iter()
                    .zip(&r.scores)
                    .map(|(m, s)| (m.name().to_string(), json!(s.value)))
                    .collect();
                let seconds: serde_json::Map<String, Value> = self
                    .metrics
                    .iter()
                    .zip(&r.seconds)
                    .map(|(m, s)| (m.name().to_string(), json!(s)))
                    .collect();
                json!({
                    "bundle": r.bundle,
                    "family": r.family,
                    "severity": r.severity,
                    "true_error": r.true_error,
                    "scores": scores,
                    "seconds": seconds,
                })
            })
            .collect();
        json!({ "fits": self.fits_json(), "rows": rows })
    }

    /// Header `bundle,family,severity,true_error,<metric>...`, one line per
    /// test bundle.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "bundle".to_string(),
            "family".into(),
            "severity".into(),
            "true_error".into(),
        ];
        header.extend(self.metrics.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.bundle.clone(),
                r.family.clone(),
                r.severity.to_string(),
                r.true_error.to_string(),
            ];
            rec.extend(r.scores.iter().map(|s| s.value.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn dedup(metrics: &[ScoreKind]) -> Vec<ScoreKind> {
    let mut out = Vec::new();
    for &m in metrics {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// Scores every test bundle, then fits one regression per metric.
pub fn run_suite(
    reference: Option<&FeatureBundle>,
    tests: &[FeatureBundle],
    metrics: &[ScoreKind],
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    let metrics = dedup(metrics);
    if metrics.is_empty() {
        return Err(Error::ConfigInvalid("no metrics requested".into()));
    }
    let needs_reference = metrics.iter().find(|m| m.needs_reference());
    let stats = match (needs_reference, reference) {
        (Some(m), None) => return Err(Error::MissingReference(m.name().to_string())),
        (Some(_), Some(r)) => {
            Some(ReferenceStats::from_bundle(r).map_err(|e| e.in_bundle(&r.meta.name))?)
        }
        (None, _) => None,
    };
    let ctx = ScoringContext {
        reference: stats.as_ref(),
        labels: opts.labels,
        seed: opts.seed,
    };

    let rows = tests
        .par_iter()
        .map(|b| {
            let truth = bundle_truth(b).map_err(|e| e.in_bundle(&b.meta.name))?;
            let mut scores = Vec::with_capacity(metrics.len());
            let mut seconds = Vec::with_capacity(metrics.len());
            for &m in &metrics {
                let start = Instant::now();
                scores.push(score_bundle(b, m, &ctx).map_err(|e| e.in_bundle(&b.meta.name))?);
                seconds.push(start.elapsed().as_secs_f64());
            }
            Ok(BenchmarkRow {
                bundle: b.meta.name.clone(),
                family: b.meta.shift_family.clone(),
                severity: b.meta.severity,
                true_error: truth,
                scores,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fits = (0..metrics.len())
        .map(|i| {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| (r.scores[i].value, r.true_error))
                .collect();
            fit_regression(&points)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport {
        metrics,
        rows,
        fits,
    })
}

/// Loads the manifest's bundles and runs [`run_suite`] on them.
pub fn run_benchmark(
    manifest: &Manifest,
    metrics: &[ScoreKind],
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    if let Some(m) = metrics.iter().find(|m| m.needs_reference()) {
        if manifest.reference.is_none() {
            return Err(Error::MissingReference(m.name().to_string()));
        }
    }
    let suite = manifest.load_bundles()?;
    run_suite(suite.reference.as_ref(), &suite.tests, metrics, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn true_error_examples() {
        assert_eq!(true_error(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(true_error(&[1, 0], &[0, 1]).unwrap(), 1.0);
        assert_eq!(true_error(&[0, 0, 1, 1], &[0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(
            true_error(&[0], &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(true_error(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn exact_lines() {
        let f = fit_regression(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15);
        assert!(f.intercept.abs() < 1e-15);
        assert_eq!(f.r2, 1.0);
        assert_eq!(f.spearman, 1.0);

        let f = fit_regression(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-15);
        assert!((f.intercept - 4.0).abs() < 1e-15);
        assert_eq!(f.r2, 1.0);
        assert_eq!(f.spearman, 1.0);
        assert_eq!(f.spearman_raw, -1.0);
    }

    #[test]
    fn regression_degenerate_cases() {
        assert!(matches!(
            fit_regression(&[(1.0, 2.0)]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            fit_regression(&[(1.0, 2.0), (1.0, 3.0)]),
            Err(Error::DegenerateInput(_))
        ));
        let f = fit_regression(&[(1.0, 0.5), (2.0, 0.5), (4.0, 0.5)]).unwrap();
        assert_eq!(f.r2, 1.0);
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.spearman, 0.0);
    }

    #[test]
    fn ols_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(0.0..1.0)))
            .collect();
        // Solve [n Σx; Σx Σx²] [b; a] = [Σy; Σxy] by Cramer's rule.
        let n = 20.0;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / det;
        let intercept = (sxx * sy - sx * sxy) / det;
        let f = fit_regression(&pts).unwrap();
        assert!((f.slope - slope).abs() < 1e-10);
        assert!((f.intercept - intercept).abs() < 1e-10);
        // Least squares: perturbing the line never lowers the residual.
        let sse = |a: f64, b: f64| pts.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum::<f64>();
        let best = sse(f.slope, f.intercept);
        for (da, db) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            assert!(sse(f.slope + da, f.intercept + db) >= best);
        }
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0);
        assert_eq!(
            fractional_ranks(&[1.0, 2.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        // Ranks [1, 2.5, 2.5, 4] vs [1, 3, 2, 4]: deviations (-1.5, 0, 0, 1.5)
        // and (-1.5, 0.5, -0.5, 1.5); Sxy = 4.5, Sxx = 4.5, Syy = 5.
        let expected = 4.5 / (4.5f64 * 5.0).sqrt();
        let got = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!(matches!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            spearman(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn r2_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let pts: Vec<(f64, f64)> = (0..15)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..3.0);
                (x, 0.2 * x + rng.random_range(-0.1..0.1))
            })
            .collect();
        let base = fit_regression(&pts).unwrap();
        for (a, b) in [(-3.0, 2.0), (0.01, -7.0), (250.0, 1.0)] {
            let moved: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (a * x + b, y)).collect();
            let f = fit_regression(&moved).unwrap();
            assert!((f.r2 - base.r2).abs() < 1e-9);
            assert!((f.spearman - base.spearman).abs() < 1e-12);
        }
    }
}
