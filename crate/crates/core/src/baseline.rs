//! Comparison estimators: softmax confidence statistics, ATC, and the
//! feature-distribution distances (Fréchet, MMD).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::score::{argmax, ScoreKind, ScoreResult};

/// Softmax probabilities of one logit row, max-subtracted for stability.
pub fn softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = row.mapv(|v| (v - max).exp());
    let total = exp.sum();
    exp / total
}

/// Largest softmax probability of every row.
pub fn max_softmax(logits: ArrayView2<f64>) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            1.0 / row.iter().map(|&v| (v - max).exp()).sum::<f64>()
        })
        .collect()
}

fn non_empty(logits: ArrayView2<f64>) -> Result<()> {
    if logits.nrows() == 0 || logits.ncols() == 0 {
        Err(Error::EmptyInput)
    } else {
        Ok(())
    }
}

/// Average maximum softmax probability.
pub fn conf_score(logits: ArrayView2<f64>) -> Result<ScoreResult> {
    non_empty(logits)?;
    let conf = max_softmax(logits);
    let value = conf.iter().sum::<f64>() / conf.len() as f64;
    Ok(ScoreResult::plain(ScoreKind::ConfScore, value))
}

/// Average Shannon entropy (nats) of the softmax distribution.
pub fn entropy_score(logits: ArrayView2<f64>) -> Result<ScoreResult> {
    non_empty(logits)?;
    let total: f64 = logits
        .rows()
        .into_iter()
        .map(|row| {
            softmax(row)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum::<f64>()
        })
        .sum();
    Ok(ScoreResult::plain(
        ScoreKind::Entropy,
        total / logits.nrows() as f64,
    ))
}

/// Confidence threshold fitted on labeled in-distribution data. A sample is
/// predicted wrong when its max-softmax confidence is `<= t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtcThreshold {
    pub t: f64,
    pub calibration_error: f64,
}

impl AtcThreshold {
    /// `t` is the `q`-th smallest confidence with `q = round(err * n)`, or
    /// negative infinity when `q = 0`.
    pub fn from_confidences(confidences: &[f64], calibration_error: f64) -> Result<Self> {
        if confidences.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = confidences.len();
        let q = (calibration_error * n as f64).round() as usize;
        let t = if q == 0 {
            f64::NEG_INFINITY
        } else {
            let mut sorted = confidences.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted[q.min(n) - 1]
        };
        Ok(AtcThreshold {
            t,
            calibration_error,
        })
    }

    /// Fraction of confidences at or below the threshold.
    pub fn predict(&self, confidences: &[f64]) -> Result<f64> {
        if confidences.is_empty() {
            return Err(Error::EmptyInput);
        }
        let below = confidences.iter().filter(|&&c| c <= self.t).count();
        Ok(below as f64 / confidences.len() as f64)
    }
}

pub fn atc_calibrate(val_logits: ArrayView2<f64>, val_labels: &[usize]) -> Result<AtcThreshold> {
    non_empty(val_logits)?;
    let (n, k) = val_logits.dim();
    if val_labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: val_labels.len(),
        });
    }
    if let Some(&label) = val_labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, k });
    }
    let wrong = val_logits
        .rows()
        .into_iter()
        .zip(val_labels)
        .filter(|(row, &y)| argmax(row.view()) != y)
        .count();
    AtcThreshold::from_confidences(&max_softmax(val_logits), wrong as f64 / n as f64)
}

pub fn atc_predict(test_logits: ArrayView2<f64>, threshold: &AtcThreshold) -> Result<f64> {
    non_empty(test_logits)?;
    threshold.predict(&max_softmax(test_logits))
}

/// Mean and (shrunk) covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    /// Ridge added to the diagonal; zero for hand-built summaries.
    pub shrinkage: f64,
}

const SYMMETRY_TOL: f64 = 1e-10;
const NEGATIVE_EIGEN_TOL: f64 = -1e-8;

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite matrix entry".into()));
    }
    SymmetricEigen::try_new(m, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("no convergence".into()))
}

impl GaussianSummary {
    /// Wraps a mean and covariance after checking shape, symmetry and
    /// (numerical) positive semidefiniteness.
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.dim() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {d} but covariance is {:?}",
                covariance.dim()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let min = eigen(to_nalgebra(&covariance))?.eigenvalues.min();
        if d > 0 && min < NEGATIVE_EIGEN_TOL {
            return Err(Error::InvariantViolation(format!(
                "covariance has eigenvalue {min}"
            )));
        }
        Ok(GaussianSummary {
            mean,
            covariance,
            shrinkage: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and sample covariance (divisor `m - 1`) plus a ridge of
/// `1e-6 * trace / d` (or `1e-6` when the trace is zero).
pub fn gaussian_summary(features: ArrayView2<f64>) -> Result<GaussianSummary> {
    let (m, d) = features.dim();
    if m < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: m });
    }
    let mut mean = Array1::<f64>::zeros(d);
    for row in features.rows() {
        mean += &row;
    }
    mean /= m as f64;
    let centered = &features - &mean.view().insert_axis(Axis(0));
    let raw = centered.t().dot(&centered) / (m - 1) as f64;
    let mut covariance = (&raw + &raw.t()) * 0.5;
    let trace = covariance.diag().sum();
    let shrinkage = if trace > 0.0 {
        1e-6 * trace / d as f64
    } else {
        1e-6
    };
    covariance.diag_mut().mapv_inplace(|v| v + shrinkage);
    Ok(GaussianSummary {
        mean,
        covariance,
        shrinkage,
    })
}

/// Symmetric square root through an eigendecomposition with negative
/// eigenvalues clamped to zero.
fn sym_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = eigen(m)?;
    let roots = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose())
}

/// Squared Fréchet distance between two Gaussians:
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2)`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() || a.covariance.dim() != b.covariance.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Gaussian summaries of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term: f64 = (&a.mean - &b.mean).mapv(|v| v * v).sum();
    let root_b = sym_sqrt(to_nalgebra(&b.covariance))?;
    let inner = &root_b * to_nalgebra(&a.covariance) * &root_b;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = eigen(inner)?
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let trace = a.covariance.diag().sum() + b.covariance.diag().sum();
    Ok((mean_term + trace - 2.0 * cross).max(0.0))
}

const MMD_BLOCK: usize = 256;

/// Squared distances between rows `lo..hi` of `z` and every row of `z`,
/// via the Gram expansion.
fn distance_block(z: ArrayView2<f64>, norms: &Array1<f64>, lo: usize, hi: usize) -> Array2<f64> {
    let gram = z.slice(s![lo..hi, ..]).dot(&z.t());
    let mut out = gram;
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let ni = norms[lo + r];
        for (j, v) in row.iter_mut().enumerate() {
            *v = (ni + norms[j] - 2.0 * *v).max(0.0);
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of the squared distances over all unordered pairs of rows.
pub fn median_sq_distance(z: ArrayView2<f64>) -> f64 {
    let n = z.nrows();
    let norms: Array1<f64> = z.rows().into_iter().map(|r| r.dot(&r)).collect();
    let starts: Vec<usize> = (0..n).step_by(MMD_BLOCK).collect();
    let mut all: Vec<f64> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + MMD_BLOCK).min(n);
            let block = distance_block(z, &norms, lo, hi);
            let mut out = Vec::new();
            for r in 0..hi - lo {
                out.extend(block.row(r).slice(s![lo + r + 1..]).iter());
            }
            out
        })
        .flatten()
        .collect();
    if all.is_empty() {
        return 0.0;
    }
    median(&mut all)
}

/// Biased (V-statistic) squared MMD with the Gaussian kernel
/// `exp(-|u - v|^2 / (2 sigma^2))`. Without an explicit bandwidth, `2 sigma^2`
/// is the median pairwise squared distance of the pooled sample.
pub fn mmd_rbf(x: ArrayView2<f64>, y: ArrayView2<f64>, bandwidth: Option<f64>) -> Result<f64> {
    let (m, n) = (x.nrows(), y.nrows());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput);
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "samples of dimension {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let z = ndarray::concatenate(Axis(0), &[x, y]).expect("shared column count");
    let two_sigma_sq = match bandwidth {
        Some(sigma) => 2.0 * sigma * sigma,
        None => median_sq_distance(z.view()),
    };
    if !(two_sigma_sq > 0.0 && two_sigma_sq.is_finite()) {
        return Err(Error::ZeroBandwidth);
    }
    let total = m + n;
    let norms: Array1<f64> = z.rows().into_iter().map(|r| r.dot(&r)).collect();
    let starts: Vec<usize> = (0..total).step_by(MMD_BLOCK).collect();
    // Per-row partial sums, reduced afterwards in row order.
    let partials: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + MMD_BLOCK).min(total);
            let block = distance_block(z.view(), &norms, lo, hi);
            (0..hi - lo)
                .map(|r| {
                    let row = block.row(r);
                    let k = |d: &f64| (-d / two_sigma_sq).exp();
                    let to_x: f64 = row.slice(s![..m]).iter().map(k).sum();
                    let to_y: f64 = row.slice(s![m..]).iter().map(k).sum();
                    (to_x, to_y)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    let (mut kxx, mut kyy, mut kxy) = (0.0, 0.0, 0.0);
    for (i, &(to_x, to_y)) in partials.iter().enumerate() {
        if i < m {
            kxx += to_x;
            kxy += to_y;
        } else {
            kyy += to_y;
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    let mmd = kxx / (mf * mf) + kyy / (nf * nf) - 2.0 * kxy / (mf * nf);
    Ok(mmd.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, d: usize, scale: f64) -> Array2<f64> {
        Array2::from_shape_fn((m, d), |_| rng.random_range(-scale..scale))
    }

    #[test]
    fn conf_examples() {
        let s = conf_score(array![[0.0, 0.0]].view()).unwrap();
        assert!((s.value - 0.5).abs() < 1e-15);
        let s = conf_score(array![[3f64.ln(), 0.0]].view()).unwrap();
        assert!((s.value - 0.75).abs() < 1e-15);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(conf_score(empty.view()), Err(Error::EmptyInput)));
    }

    #[test]
    fn entropy_examples() {
        let s = entropy_score(array![[0.0, 0.0]].view()).unwrap();
        assert!((s.value - 2f64.ln()).abs() < 1e-15);
        let s = entropy_score(array![[1000.0, 0.0]].view()).unwrap();
        assert!(s.value.abs() < 1e-9);
    }

    #[test]
    fn softmax_statistics_match_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = random_matrix(&mut rng, 200, 6, 4.0);
        let mut conf = 0.0;
        let mut ent = 0.0;
        for row in logits.rows() {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            let p: Vec<f64> = row.iter().map(|v| v.exp() / z).collect();
            conf += p.iter().cloned().fold(0.0, f64::max);
            ent -= p.iter().map(|q| q * q.ln()).sum::<f64>();
        }
        let c = conf_score(logits.view()).unwrap().value;
        let e = entropy_score(logits.view()).unwrap().value;
        assert!((c - conf / 200.0).abs() < 1e-12);
        assert!((e - ent / 200.0).abs() < 1e-12);
        assert!((1.0 / 6.0..=1.0).contains(&c));
        assert!(e >= 0.0 && e <= 6f64.ln());
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits = random_matrix(&mut rng, 50, 4, 3.0);
        let mut shifted = logits.clone();
        for mut row in shifted.rows_mut() {
            let c = rng.random_range(-100.0..100.0);
            row += c;
        }
        let a = conf_score(logits.view()).unwrap().value;
        let b = conf_score(shifted.view()).unwrap().value;
        assert!((a - b).abs() < 1e-12);
        let a = entropy_score(logits.view()).unwrap().value;
        let b = entropy_score(shifted.view()).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn atc_order_statistic() {
        let conf = [0.9, 0.5, 0.8, 0.6, 0.7];
        let th = AtcThreshold::from_confidences(&conf, 0.4).unwrap();
        assert_eq!(th.t, 0.6);
        assert!((th.predict(&conf).unwrap() - 0.4).abs() < 1e-15);

        let th = AtcThreshold::from_confidences(&conf, 0.0).unwrap();
        assert_eq!(th.t, f64::NEG_INFINITY);
        assert_eq!(th.predict(&[0.0, 0.3]).unwrap(), 0.0);

        let th = AtcThreshold::from_confidences(&conf, 1.0).unwrap();
        assert_eq!(th.t, 0.9);
        assert_eq!(th.predict(&conf).unwrap(), 1.0);
    }

    #[test]
    fn atc_predict_counts_below() {
        let th = AtcThreshold {
            t: 0.6,
            calibration_error: 0.0,
        };
        assert!((th.predict(&[0.55, 0.65, 0.95]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(th.predict(&[0.6, 0.6]).unwrap(), 1.0);
        assert!(th.predict(&[]).is_err());
    }

    #[test]
    fn atc_calibrate_on_logits() {
        // Rows 0 and 2 misclassified; err = 0.5, q = 2.
        let logits = array![[2.0, 0.0], [0.0, 1.0], [0.0, 3.0], [5.0, 0.0]];
        let labels = [1, 1, 0, 0];
        let th = atc_calibrate(logits.view(), &labels).unwrap();
        assert_eq!(th.calibration_error, 0.5);
        let conf = max_softmax(logits.view());
        let mut sorted = conf.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(th.t, sorted[1]);
        assert_eq!(atc_predict(logits.view(), &th).unwrap(), 0.5);
        assert!(matches!(
            atc_calibrate(logits.view(), &[0, 0, 0, 2]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn two_point_covariance() {
        let g = gaussian_summary(array![[0.0, 0.0], [2.0, 0.0]].view()).unwrap();
        assert_eq!(g.mean, array![1.0, 0.0]);
        assert!((g.shrinkage - 1e-6).abs() < 1e-20);
        let expected = array![[2.0 + g.shrinkage, 0.0], [0.0, g.shrinkage]];
        assert_eq!(g.covariance, expected);

        let g = gaussian_summary(array![[3.0, 1.0], [3.0, 1.0], [3.0, 1.0]].view()).unwrap();
        assert_eq!(g.mean, array![3.0, 1.0]);
        assert_eq!(g.covariance, Array2::<f64>::eye(2) * 1e-6);

        assert!(matches!(
            gaussian_summary(array![[1.0]].view()),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn covariance_matches_textbook_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 500, 4, 2.0);
        let g = gaussian_summary(x.view()).unwrap();
        for a in 0..4 {
            let ma = x.column(a).sum() / 500.0;
            for b in 0..4 {
                let mb = x.column(b).sum() / 500.0;
                let cov: f64 = (0..500)
                    .map(|i| (x[[i, a]] - ma) * (x[[i, b]] - mb))
                    .sum::<f64>()
                    / 499.0;
                let ridge = if a == b { g.shrinkage } else { 0.0 };
                assert!((g.covariance[[a, b]] - ridge - cov).abs() < 1e-10);
            }
        }
    }

    fn diag_summary(mean: &[f64], var: &[f64]) -> GaussianSummary {
        GaussianSummary::new(
            Array1::from(mean.to_vec()),
            Array2::from_diag(&Array1::from(var.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn frechet_examples() {
        let a = diag_summary(&[0.0], &[1.0]);
        let b = diag_summary(&[2.0], &[1.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 4.0).abs() < 1e-12);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-10);

        let a = diag_summary(&[0.0, 0.0], &[1.0, 4.0]);
        let b = diag_summary(&[0.0, 0.0], &[9.0, 16.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 8.0).abs() < 1e-10);

        let c = diag_summary(&[0.0], &[1.0]);
        assert!(matches!(
            frechet_distance(&a, &c),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn frechet_symmetric_and_translation_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 40, 3, 1.0);
        let y = random_matrix(&mut rng, 60, 3, 2.0);
        let a = gaussian_summary(x.view()).unwrap();
        let b = gaussian_summary(y.view()).unwrap();
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
        assert!(frechet_distance(&a, &a).unwrap() <= 1e-10);

        let mut moved = b.clone();
        let delta = array![0.5, -1.0, 2.0];
        moved.mean = &moved.mean + &delta;
        let shifted = frechet_distance(&a, &moved).unwrap();
        let base_mean: f64 = (&a.mean - &b.mean).mapv(|v| v * v).sum();
        let new_mean: f64 = (&a.mean - &moved.mean).mapv(|v| v * v).sum();
        assert!((shifted - ab - (new_mean - base_mean)).abs() < 1e-9);
    }

    #[test]
    fn summary_rejects_asymmetric() {
        let bad = GaussianSummary::new(array![0.0, 0.0], array![[1.0, 0.5], [0.0, 1.0]]);
        assert!(bad.is_err());
        let neg = GaussianSummary::new(array![0.0], array![[-1.0]]);
        assert!(neg.is_err());
    }

    fn brute_mmd(x: &Array2<f64>, y: &Array2<f64>, sigma: f64) -> f64 {
        let k = |u: ArrayView1<f64>, v: ArrayView1<f64>| {
            let d: f64 = u.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d / (2.0 * sigma * sigma)).exp()
        };
        let mean = |a: &Array2<f64>, b: &Array2<f64>| {
            let mut s = 0.0;
            for u in a.rows() {
                for v in b.rows() {
                    s += k(u, v);
                }
            }
            s / (a.nrows() * b.nrows()) as f64
        };
        mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
    }

    #[test]
    fn mmd_examples() {
        let x = array![[0.0, 0.0]];
        let y = array![[1.0, 1.0]];
        // |x - y|^2 = 2 = 2 sigma^2 with sigma = 1.
        let v = mmd_rbf(x.view(), y.view(), Some(1.0)).unwrap();
        assert!((v - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_matrix(&mut rng, 20, 3, 1.0);
        assert!(mmd_rbf(x.view(), x.view(), None).unwrap().abs() < 1e-12);
        assert!(mmd_rbf(x.view(), x.view(), Some(0.3)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mmd_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = random_matrix(&mut rng, 17, 4, 1.0);
            let y = random_matrix(&mut rng, 23, 4, 1.5);
            let sigma = rng.random_range(0.5..3.0);
            let got = mmd_rbf(x.view(), y.view(), Some(sigma)).unwrap();
            assert!((got - brute_mmd(&x, &y, sigma)).abs() < 1e-10);
            let yx = mmd_rbf(y.view(), x.view(), Some(sigma)).unwrap();
            assert!((got - yx).abs() < 1e-12);
        }
    }

    #[test]
    fn mmd_median_heuristic() {
        let x = array![[0.0], [1.0]];
        let y = array![[3.0]];
        // Pair distances 1, 9, 4: median 4 = 2 sigma^2.
        assert_eq!(
            median_sq_distance(ndarray::concatenate![Axis(0), x, y].view()),
            4.0
        );
        let got = mmd_rbf(x.view(), y.view(), None).unwrap();
        assert!((got - brute_mmd(&x, &y, 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn mmd_errors() {
        let x = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            mmd_rbf(x.view(), x.view(), None),
            Err(Error::ZeroBandwidth)
        ));
        let y = array![[1.0]];
        assert!(matches!(
            mmd_rbf(x.view(), y.view(), Some(1.0)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn mmd_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 15, 2, 1.0);
        let y = random_matrix(&mut rng, 12, 2, 1.0) + 0.5;
        let th: f64 = 0.7;
        let rot = array![[th.cos(), -th.sin()], [th.sin(), th.cos()]];
        let a = mmd_rbf(x.view(), y.view(), None).unwrap();
        let b = mmd_rbf(x.dot(&rot).view(), y.dot(&rot).view(), None).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}
