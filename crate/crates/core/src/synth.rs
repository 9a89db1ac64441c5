//! Synthetic shift benchmarks built from an isotropic Gaussian mixture.
//!
//! Class `j` is centred at `mean_scale * e_j`. A fixed nearest-class-mean
//! classifier, written as an affine map, produces the logits of every bundle.
//! A test bundle of family `f` at severity `s` is corrupted as
//!
//! ```text
//! z' = c + a_s * (z - c + s * noise * g) + s * drift * v_f
//! a_s = sigma^2 / (sigma^2 + (s * noise)^2)
//! ```
//!
//! where `c` is the centre of the class means, `g` is standard normal noise
//! and `v_f` a fixed unit direction per family. The factor `a_s` rescales the
//! noisy features back towards the clean feature scale, so clusters overlap
//! more as severity grows.
//!
//! Randomness comes from ChaCha8 streams: one seed, one stream per
//! generated object, so every bundle is reproducible on its own.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bundle::{write_bundle, DatasetMeta, FeatureBundle, Manifest, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::eval::true_error;
use crate::score::pseudo_labels;

const REFERENCE_STREAM: u64 = 0;
const HOLDOUT_STREAM: u64 = 1;
const DIRECTION_STREAM: u64 = 1 << 20;
const TEST_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub k: usize,
    pub d: usize,
    pub train_per_class: usize,
    pub test_m: usize,
    /// Within-class standard deviation.
    pub sigma: f64,
    /// Distance of each class mean from the origin.
    pub mean_scale: f64,
    pub families: usize,
    pub severities: u32,
    /// Noise standard deviation added per severity level.
    pub noise_scale: f64,
    /// Mean drift per severity level.
    pub drift_scale: f64,
    /// Largest-to-smallest class ratio in test sets.
    pub imbalance: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            k: 10,
            d: 64,
            train_per_class: 200,
            test_m: 2000,
            sigma: 1.0,
            mean_scale: 4.0,
            families: 5,
            severities: 5,
            noise_scale: 0.6,
            drift_scale: 0.4,
            imbalance: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.k < 2 {
            return fail(format!("k={} must be at least 2", self.k));
        }
        if self.d < self.k {
            return fail(format!("d={} must be at least k={}", self.d, self.k));
        }
        if self.train_per_class < 2 {
            return fail(format!(
                "train_per_class={} must be at least 2",
                self.train_per_class
            ));
        }
        if self.test_m < self.k {
            return fail(format!(
                "test_m={} must be at least k={}",
                self.test_m, self.k
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma={} must be positive", self.sigma));
        }
        if !(self.mean_scale > 0.0 && self.mean_scale.is_finite()) {
            return fail(format!("mean_scale={} must be positive", self.mean_scale));
        }
        if self.families == 0 || self.severities == 0 {
            return fail("families and severities must be at least 1".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return fail(format!("noise_scale={} must be >= 0", self.noise_scale));
        }
        if !(self.drift_scale >= 0.0 && self.drift_scale.is_finite()) {
            return fail(format!("drift_scale={} must be >= 0", self.drift_scale));
        }
        if !(self.imbalance >= 1.0 && self.imbalance.is_finite()) {
            return fail(format!("imbalance={} must be >= 1", self.imbalance));
        }
        Ok(())
    }

    /// `mean_scale * e_j` for every class `j`.
    pub fn class_means(&self) -> Array2<f64> {
        let mut means = Array2::zeros((self.k, self.d));
        for j in 0..self.k {
            means[[j, j]] = self.mean_scale;
        }
        means
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }
}

/// Affine classifier `logits = W z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LinearClassifier {
    /// Nearest-class-mean rule: row `j` is `2 mu_j`, bias `-|mu_j|^2`.
    pub fn nearest_mean(means: ArrayView2<f64>) -> Self {
        LinearClassifier {
            weights: means.mapv(|v| 2.0 * v),
            biases: means.rows().into_iter().map(|r| -r.dot(&r)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        classifier_logits(self, features)
    }
}

/// Row-wise `W z + b`.
pub fn classifier_logits(
    classifier: &LinearClassifier,
    features: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if features.ncols() != classifier.weights.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "classifier expects d={} but features have {} columns",
            classifier.weights.ncols(),
            features.ncols()
        )));
    }
    let mut out = Array2::zeros((features.nrows(), classifier.k()));
    for (i, z) in features.rows().into_iter().enumerate() {
        for (j, w) in classifier.weights.rows().into_iter().enumerate() {
            out[[i, j]] = dot(w, z) + classifier.biases[j];
        }
    }
    Ok(out)
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Stores features at f32, scores them with the classifier, and records the
/// exact argmax error against `labels`.
pub fn labeled_bundle(
    classifier: &LinearClassifier,
    features: &Array2<f64>,
    labels: Vec<u32>,
    mut meta: DatasetMeta,
) -> Result<FeatureBundle> {
    let stored = features.mapv(|v| v as f32);
    let logits = classifier
        .logits(stored.mapv(f64::from).view())?
        .mapv(|v| v as f32);
    let pred = pseudo_labels(logits.mapv(f64::from).view())?;
    let truth: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    meta.true_error = Some(true_error(&pred, &truth)?);
    FeatureBundle::new(stored, logits, Some(labels), meta)
}

/// Class sizes summing to `m` with geometric proportions
/// `imbalance^(-j / (k - 1))`, rounded by largest remainder.
pub fn class_counts(m: usize, k: usize, imbalance: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..k)
        .map(|j| imbalance.powf(-(j as f64) / (k - 1) as f64))
        .collect();
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * m as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = m - counts.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..k).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for j in by_remainder.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[j] += 1;
        left -= 1;
    }
    counts
}

fn sample_mixture(
    means: &Array2<f64>,
    labels: &[u32],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let d = means.ncols();
    let mut z = Array2::zeros((labels.len(), d));
    for (i, &y) in labels.iter().enumerate() {
        for t in 0..d {
            let g: f64 = StandardNormal.sample(rng);
            z[[i, t]] = means[[y as usize, t]] + sigma * g;
        }
    }
    z
}

fn unit_direction(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// The generated suite.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub reference: FeatureBundle,
    pub tests: Vec<FeatureBundle>,
    pub classifier: LinearClassifier,
}

impl SyntheticSuite {
    /// Writes `reference/`, one directory per test bundle, and
    /// `manifest.json` under `dir`. Returns the manifest.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        write_bundle(&self.reference, &dir.join("reference"))?;
        for b in &self.tests {
            write_bundle(b, &dir.join(&b.meta.name))?;
        }
        let manifest = Manifest::new(
            Some("reference".into()),
            self.tests.iter().map(|b| b.meta.name.clone()).collect(),
            self.reference.k(),
        )
        .with_base_dir(dir);
        manifest.save(&dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

/// Generator bound to one validated config.
#[derive(Debug, Clone)]
pub struct SuiteGenerator {
    cfg: SyntheticConfig,
    means: Array2<f64>,
    center: Array1<f64>,
    classifier: LinearClassifier,
}

impl SuiteGenerator {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let means = cfg.class_means();
        let center = means
            .mean_axis(ndarray::Axis(0))
            .expect("at least two classes");
        let classifier = LinearClassifier::nearest_mean(means.view());
        Ok(SuiteGenerator {
            cfg,
            means,
            center,
            classifier,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    pub fn classifier(&self) -> &LinearClassifier {
        &self.classifier
    }

    fn clean_sample(&self, stream: u64, name: &str) -> Result<FeatureBundle> {
        let mut rng = self.cfg.stream(stream);
        let labels: Vec<u32> = (0..self.cfg.k as u32)
            .flat_map(|j| std::iter::repeat_n(j, self.cfg.train_per_class))
            .collect();
        let z = sample_mixture(&self.means, &labels, self.cfg.sigma, &mut rng);
        let meta = DatasetMeta {
            name: name.into(),
            shift_family: "none".into(),
            severity: 0,
            k: self.cfg.k,
            true_error: None,
        };
        labeled_bundle(&self.classifier, &z, labels, meta)
    }

    /// Labeled in-distribution training sample.
    pub fn reference(&self) -> Result<FeatureBundle> {
        self.clean_sample(REFERENCE_STREAM, "reference")
    }

    /// A second in-distribution sample, independent of the reference.
    pub fn holdout(&self) -> Result<FeatureBundle> {
        self.clean_sample(HOLDOUT_STREAM, "holdout")
    }

    pub fn family_direction(&self, family: usize) -> Array1<f64> {
        let mut rng = self.cfg.stream(DIRECTION_STREAM + family as u64);
        unit_direction(self.cfg.d, &mut rng)
    }

    /// Test bundle for one (family, severity) pair. Severity 0 is the
    /// uncorrupted control.
    pub fn test_bundle(&self, family: usize, severity: u32) -> Result<FeatureBundle> {
        let cfg = &self.cfg;
        let mut rng = cfg.stream(TEST_STREAM + ((family as u64) << 16) + severity as u64);
        let counts = class_counts(cfg.test_m, cfg.k, cfg.imbalance);
        let mut labels: Vec<u32> = counts
            .iter()
            .enumerate()
            .flat_map(|(j, &n)| std::iter::repeat_n(j as u32, n))
            .collect();
        labels.shuffle(&mut rng);
        let mut z = sample_mixture(&self.means, &labels, cfg.sigma, &mut rng);

        let s = f64::from(severity);
        let noise = s * cfg.noise_scale;
        let drift = self.family_direction(family) * (s * cfg.drift_scale);
        let shrink = cfg.sigma * cfg.sigma / (cfg.sigma * cfg.sigma + noise * noise);
        for mut row in z.rows_mut() {
            for (t, v) in row.iter_mut().enumerate() {
                let g: f64 = StandardNormal.sample(&mut rng);
                let c = self.center[t];
                *v = c + shrink * (*v - c + noise * g) + drift[t];
            }
        }
        let meta = DatasetMeta {
            name: format!("family{family}_s{severity}"),
            shift_family: format!("family{family}"),
            severity,
            k: cfg.k,
            true_error: None,
        };
        labeled_bundle(&self.classifier, &z, labels, meta)
    }

    /// Reference plus `families * severities` test bundles, ordered by family
    /// then severity.
    pub fn suite(&self) -> Result<SyntheticSuite> {
        let pairs: Vec<(usize, u32)> = (0..self.cfg.families)
            .flat_map(|f| (1..=self.cfg.severities).map(move |s| (f, s)))
            .collect();
        let tests = pairs
            .par_iter()
            .map(|&(f, s)| self.test_bundle(f, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticSuite {
            reference: self.reference()?,
            tests,
            classifier: self.classifier.clone(),
        })
    }
}

pub fn generate_suite(cfg: &SyntheticConfig) -> Result<SyntheticSuite> {
    SuiteGenerator::new(cfg.clone())?.suite()
}

/// Two-class, two-dimensional translation scenario: classes at `(-1, 0)` and
/// `(1, 0)`, decision boundary `x = 0`, and one test bundle per magnitude `c`
/// equal to a fixed base sample moved by `(0, c)`.
#[derive(Debug, Clone)]
pub struct ToyScenario {
    pub bundles: Vec<FeatureBundle>,
    pub classifier: LinearClassifier,
}

pub const TOY_PER_CLASS: usize = 100;
pub const TOY_SIGMA: f64 = 0.5;

pub fn toy_translation_scenario(base_seed: u64, magnitudes: &[f64]) -> Result<ToyScenario> {
    if magnitudes.is_empty() {
        return Err(Error::ConfigInvalid("no magnitudes given".into()));
    }
    if let Some(bad) = magnitudes.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
        return Err(Error::ConfigInvalid(format!(
            "magnitude {bad} must be finite and non-negative"
        )));
    }
    let means = ndarray::array![[-1.0, 0.0], [1.0, 0.0]];
    let classifier = LinearClassifier::nearest_mean(means.view());
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    let labels: Vec<u32> = (0..2u32)
        .flat_map(|j| std::iter::repeat_n(j, TOY_PER_CLASS))
        .collect();
    let base = sample_mixture(&means, &labels, TOY_SIGMA, &mut rng);

    let bundles = magnitudes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut z = base.clone();
            z.column_mut(1).mapv_inplace(|y| y + c);
            let meta = DatasetMeta {
                name: format!("toy_{i}"),
                shift_family: "translate_y".into(),
                severity: i as u32,
                k: 2,
                true_error: None,
            };
            labeled_bundle(&classifier, &z, labels.clone(), meta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyScenario {
        bundles,
        classifier,
    })
}
