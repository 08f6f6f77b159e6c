//! Site-level classification.
//!
//! A site is represented by the 10th..90th percentiles of its per-page
//! detector scores. A linear SVM over the standardized deciles decides
//! whether the site is LLM-dominant; the side of the hyperplane with
//! `w·x + b < 0` is the LLM side, since low scores mean LLM-like text.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_FEATURES: usize = 9;
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training data must contain both labels")]
    SingleClass,
    #[error("no training data")]
    NoData,
    #[error("cross-validation group {0:?} has no sites")]
    MissingGroup(SiteGroup),
    #[error("model file version {found} is not supported (expected {MODEL_VERSION})")]
    Version { found: u32 },
    #[error("model file: {0}")]
    Malformed(String),
    #[error("model file i/o")]
    Io(#[from] std::io::Error),
}

/// Percentile `p` (0..=100) of ascending `sorted` by linear interpolation at
/// zero-based rank `p/100 * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of empty slice");
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecileVector {
    pub values: [f64; N_FEATURES],
    pub n_pages: usize,
}

pub fn decile_vector(scores: &[f64]) -> Result<DecileVector, ClassifyError> {
    if scores.is_empty() {
        return Err(ClassifyError::EmptyScores);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ClassifyError::NonFinite("scores"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values = [0.0; N_FEATURES];
    for (i, v) in values.iter_mut().enumerate() {
        *v = percentile(&sorted, 10.0 * (i + 1) as f64);
    }
    Ok(DecileVector {
        values,
        n_pages: scores.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteLabel {
    #[serde(rename = "llm-dominant")]
    LlmDominant,
    #[serde(rename = "not")]
    NotLlmDominant,
}

impl SiteLabel {
    fn target(self) -> f64 {
        match self {
            SiteLabel::LlmDominant => -1.0,
            SiteLabel::NotLlmDominant => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SiteLabel::LlmDominant => "llm-dominant",
            SiteLabel::NotLlmDominant => "not",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteGroup {
    Company,
    Personal,
    Other,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSite {
    pub site: String,
    pub vector: DecileVector,
    pub label: SiteLabel,
    pub group: SiteGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 1e-3,
            epochs: 200,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub means: [f64; N_FEATURES],
    pub sds: [f64; N_FEATURES],
}

impl FeatureScaling {
    /// Z-score parameters. A constant feature gets sd 1 so it standardizes to 0.
    pub fn fit(rows: &[[f64; N_FEATURES]]) -> Self {
        let n = rows.len() as f64;
        let mut means = [0.0; N_FEATURES];
        let mut sds = [1.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            if var.sqrt() > 1e-12 {
                sds[j] = var.sqrt();
            }
        }
        FeatureScaling { means, sds }
    }

    pub fn apply(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut z = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            z[j] = (x[j] - self.means[j]) / self.sds[j];
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub n_train: usize,
    pub n_llm_dominant: usize,
    pub accuracy: f64,
    /// Regularized hinge objective after each epoch.
    pub objective_by_epoch: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub version: u32,
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
    pub scaling: FeatureScaling,
    pub hyperparams: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<DateTime<Utc>>,
    pub training_stats: TrainingStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: SiteLabel,
    pub signed_distance: f64,
}

fn dot(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(w: &[f64; N_FEATURES], b: f64, lambda: f64, xs: &[[f64; N_FEATURES]], ys: &[f64]) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum::<f64>()
        / xs.len() as f64;
    let norm2 = dot(w, w) + b * b;
    lambda / 2.0 * norm2 + hinge
}

/// Pegasos: projected stochastic subgradient descent on the regularized
/// hinge loss, with the bias learned as the weight of a constant feature.
pub fn train_svm(data: &[LabeledSite], hp: &Hyperparams) -> Result<SvmModel, ClassifyError> {
    if data.is_empty() {
        return Err(ClassifyError::NoData);
    }
    if data
        .iter()
        .any(|s| s.vector.values.iter().any(|v| !v.is_finite()))
    {
        return Err(ClassifyError::NonFinite("features"));
    }
    let n_llm = data.iter().filter(|s| s.label == SiteLabel::LlmDominant).count();
    if n_llm == 0 || n_llm == data.len() {
        return Err(ClassifyError::SingleClass);
    }
    if !(hp.lambda > 0.0) || hp.epochs == 0 {
        return Err(ClassifyError::Malformed("lambda must be positive and epochs non-zero".into()));
    }

    let raw: Vec<[f64; N_FEATURES]> = data.iter().map(|s| s.vector.values).collect();
    let scaling = FeatureScaling::fit(&raw);
    let xs: Vec<[f64; N_FEATURES]> = raw.iter().map(|x| scaling.apply(x)).collect();
    let ys: Vec<f64> = data.iter().map(|s| s.label.target()).collect();

    let lambda = hp.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut w = [0.0; N_FEATURES];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut objective_by_epoch = Vec::with_capacity(hp.epochs);
    let mut t = 0u64;

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = ys[i] * (dot(&w, &xs[i]) + b);
            let shrink = 1.0 - eta * lambda;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            b *= shrink;
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += eta * ys[i] * xj;
                }
                b += eta * ys[i];
            }
            let norm = (dot(&w, &w) + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                for wj in w.iter_mut() {
                    *wj *= s;
                }
                b *= s;
            }
        }
        objective_by_epoch.push(objective(&w, b, lambda, &xs, &ys));
    }

    let mut model = SvmModel {
        version: MODEL_VERSION,
        weights: w,
        bias: b,
        scaling,
        hyperparams: *hp,
        trained_at: None,
        training_stats: TrainingStats {
            n_train: data.len(),
            n_llm_dominant: n_llm,
            accuracy: 0.0,
            objective_by_epoch,
        },
    };
    model.training_stats.accuracy = accuracy(&model, data);
    Ok(model)
}

impl SvmModel {
    pub fn weight_norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }

    pub fn decision_value(&self, v: &DecileVector) -> f64 {
        dot(&self.weights, &self.scaling.apply(&v.values)) + self.bias
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.version != MODEL_VERSION {
            return Err(ClassifyError::Version { found: self.version });
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(ClassifyError::NonFinite("model weights"));
        }
        if self.scaling.sds.iter().any(|s| !(*s > 0.0)) {
            return Err(ClassifyError::Malformed("scaling sds must be positive".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| ClassifyError::Malformed(e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ClassifyError::Malformed(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ClassifyError::Malformed("missing version".into()))?;
        if found != MODEL_VERSION as u64 {
            return Err(ClassifyError::Version { found: found as u32 });
        }
        let model: SvmModel =
            serde_json::from_value(value).map_err(|e| ClassifyError::Malformed(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// Signed distance `(w·z + b) / ‖w‖` of the standardized vector; negative
/// means LLM-dominant. A point exactly on the hyperplane is not LLM-dominant.
pub fn predict(model: &SvmModel, v: &DecileVector) -> Prediction {
    let raw = model.decision_value(v);
    let norm = model.weight_norm();
    let signed_distance = if norm > 0.0 { raw / norm } else { raw };
    let label = if signed_distance < 0.0 {
        SiteLabel::LlmDominant
    } else {
        SiteLabel::NotLlmDominant
    };
    Prediction {
        label,
        signed_distance,
    }
}

pub fn accuracy(model: &SvmModel, data: &[LabeledSite]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|s| predict(model, &s.vector).label == s.label)
        .count();
    correct as f64 / data.len() as f64
}

/// A labeled site with its raw per-page scores, in sampling order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSite {
    pub site: String,
    pub scores: Vec<f64>,
    pub label: SiteLabel,
    pub group: SiteGroup,
}

impl ScoredSite {
    /// Decile vector over the first `cap` scores (all when `None`).
    pub fn labeled(&self, cap: Option<usize>) -> Result<LabeledSite, ClassifyError> {
        let take = cap.unwrap_or(self.scores.len()).min(self.scores.len());
        Ok(LabeledSite {
            site: self.site.clone(),
            vector: decile_vector(&self.scores[..take])?,
            label: self.label,
            group: self.group,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub train_group: SiteGroup,
    pub test_groups: Vec<SiteGroup>,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub pages_per_site: Option<usize>,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
}

/// Out-of-distribution cross-validation: train on Company, test on Personal
/// and Other; then train on Personal, test on Company and Other.
pub fn ood_cross_validate(
    sites: &[ScoredSite],
    pages_per_site: Option<usize>,
    hp: &Hyperparams,
) -> Result<OodReport, ClassifyError> {
    for g in [SiteGroup::Company, SiteGroup::Personal, SiteGroup::Other] {
        if !sites.iter().any(|s| s.group == g) {
            return Err(ClassifyError::MissingGroup(g));
        }
    }
    let labeled = sites
        .iter()
        .map(|s| s.labeled(pages_per_site))
        .collect::<Result<Vec<_>, _>>()?;
    let folds = [
        (SiteGroup::Company, [SiteGroup::Personal, SiteGroup::Other]),
        (SiteGroup::Personal, [SiteGroup::Company, SiteGroup::Other]),
    ];
    let mut results = Vec::new();
    for (train_group, test_groups) in folds {
        let train: Vec<LabeledSite> = labeled.iter().filter(|s| s.group == train_group).cloned().collect();
        let test: Vec<LabeledSite> = labeled
            .iter()
            .filter(|s| test_groups.contains(&s.group))
            .cloned()
            .collect();
        let model = train_svm(&train, hp)?;
        results.push(FoldResult {
            train_group,
            test_groups: test_groups.to_vec(),
            n_train: train.len(),
            n_test: test.len(),
            accuracy: accuracy(&model, &test),
        });
    }
    let mean_accuracy = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
    Ok(OodReport {
        pages_per_site,
        folds: results,
        mean_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(v: f64, label: SiteLabel) -> LabeledSite {
        LabeledSite {
            site: format!("s{v}.example"),
            vector: DecileVector {
                values: [v; N_FEATURES],
                n_pages: 1,
            },
            label,
            group: SiteGroup::Synthetic,
        }
    }

    #[test]
    fn constant_scores() {
        let d = decile_vector(&[0.7; 5]).unwrap();
        assert_eq!(d.values, [0.7; 9]);
        assert_eq!(d.n_pages, 5);
    }

    #[test]
    fn median_of_four() {
        let d = decile_vector(&[0.8, 0.2, 0.6, 0.4]).unwrap();
        assert!((d.values[4] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_and_nan_rejected() {
        assert!(matches!(decile_vector(&[]), Err(ClassifyError::EmptyScores)));
        assert!(decile_vector(&[0.1, f64::NAN]).is_err());
    }

    #[test]
    fn separable_pair() {
        let data = vec![site(0.7, SiteLabel::LlmDominant), site(0.95, SiteLabel::NotLlmDominant)];
        let m = train_svm(&data, &Hyperparams::default()).unwrap();
        assert_eq!(m.training_stats.accuracy, 1.0);
        assert!(m.decision_value(&data[0].vector) < 0.0);
        assert!(m.decision_value(&data[1].vector) > 0.0);
    }

    #[test]
    fn xor_is_not_linearly_separable() {
        let mk = |a: f64, b: f64, label| {
            let mut values = [0.0; N_FEATURES];
            values[0] = a;
            values[1] = b;
            LabeledSite {
                site: format!("{a}{b}"),
                vector: DecileVector { values, n_pages: 1 },
                label,
                group: SiteGroup::Synthetic,
            }
        };
        let data = vec![
            mk(0.0, 0.0, SiteLabel::LlmDominant),
            mk(1.0, 1.0, SiteLabel::LlmDominant),
            mk(0.0, 1.0, SiteLabel::NotLlmDominant),
            mk(1.0, 0.0, SiteLabel::NotLlmDominant),
        ];
        let m = train_svm(&data, &Hyperparams::default()).unwrap();
        assert!(m.training_stats.accuracy <= 0.75);
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![site(0.7, SiteLabel::LlmDominant), site(0.8, SiteLabel::LlmDominant)];
        assert!(matches!(train_svm(&data, &Hyperparams::default()), Err(ClassifyError::SingleClass)));
        let mut bad = vec![site(0.7, SiteLabel::LlmDominant), site(0.9, SiteLabel::NotLlmDominant)];
        bad[0].vector.values[3] = f64::NAN;
        assert!(matches!(train_svm(&bad, &Hyperparams::default()), Err(ClassifyError::NonFinite(_))));
    }

    #[test]
    fn hyperplane_tie_is_not_llm() {
        let data = vec![site(0.7, SiteLabel::LlmDominant), site(0.9, SiteLabel::NotLlmDominant)];
        let mut m = train_svm(&data, &Hyperparams::default()).unwrap();
        m.bias = 0.0;
        let on_plane = DecileVector {
            values: m.scaling.means,
            n_pages: 1,
        };
        let p = predict(&m, &on_plane);
        assert_eq!(p.signed_distance, 0.0);
        assert_eq!(p.label, SiteLabel::NotLlmDominant);
    }

    #[test]
    fn version_mismatch() {
        let data = vec![site(0.7, SiteLabel::LlmDominant), site(0.9, SiteLabel::NotLlmDominant)];
        let m = train_svm(&data, &Hyperparams::default()).unwrap();
        let mut v = serde_json::to_value(&m).unwrap();
        v["version"] = 2.into();
        assert!(matches!(
            SvmModel::from_json(&v.to_string()),
            Err(ClassifyError::Version { found: 2 })
        ));
        assert!(SvmModel::from_json("{").is_err());
    }

    #[test]
    fn missing_group_is_an_error() {
        let s = ScoredSite {
            site: "a".into(),
            scores: vec![0.9],
            label: SiteLabel::NotLlmDominant,
            group: SiteGroup::Company,
        };
        assert!(matches!(
            ood_cross_validate(&[s], None, &Hyperparams::default()),
            Err(ClassifyError::MissingGroup(SiteGroup::Personal))
        ));
    }
}
