//! Per-category latency estimators: feature normalization, efficiency-model
//! training, prediction, and performance-gap reporting.
//!
//! The quantity learned is *efficiency*: the roofline time divided by the
//! measured time, always in (0, 1] for sane data. Predicted latency is the
//! roofline divided by predicted efficiency, so it can never beat the roofline.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decompose::{decompose, KernelCategory, KernelParams};
use crate::error::{Error, Result};
use crate::features::{analyze, FeatureVector, KernelAnalysis};
use crate::hwspec::{HardwareSpec, Precision, SpecRegistry};
use crate::nn::{Loss, Matrix, MlpModel, TrainConfig, TrainReport};
use crate::tiling::TilingTable;

/// An efficiency shortfall larger than this counts as underperforming.
pub const PERF_GAP_THRESHOLD: f64 = 0.1;
/// Fewest samples a category model may be fit on.
pub const MIN_FIT_SAMPLES: usize = 100;
/// Measured efficiency up to this is treated as measurement jitter and clamped
/// to 1; anything above is rejected as inconsistent data.
pub const EFFICIENCY_CLAMP_MAX: f64 = 1.05;
/// On-disk estimator format revision.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const STD_GUARD: f64 = 1e-8;

/// Per-column `ln(1+x)` z-score statistics, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fit on the given rows (each `width` long).
    pub fn fit(rows: &[&[f64]]) -> NormStats {
        assert!(!rows.is_empty(), "cannot fit normalization on zero rows");
        let width = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for row in rows {
            for (m, &x) in mean.iter_mut().zip(*row) {
                *m += x.ln_1p();
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; width];
        for row in rows {
            for ((v, &x), m) in var.iter_mut().zip(*row).zip(&mean) {
                let d = x.ln_1p() - m;
                *v += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        NormStats { mean, std }
    }

    /// Normalize one feature row in place-free form.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.mean.len(), "feature width mismatch");
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&x, m), s)| (x.ln_1p() - m) / s.max(STD_GUARD))
            .collect()
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

/// One training example: features, the roofline time, and measured efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub theoretical_time_us: f64,
    pub efficiency: f64,
}

/// Turn a measured latency into a training sample. Efficiency a hair above 1
/// (within [`EFFICIENCY_CLAMP_MAX`]) is clamped and flagged; beyond that the
/// measurement contradicts the analytical bound and is rejected.
pub fn make_sample(fv: &FeatureVector, measured_latency_us: f64) -> Result<(Sample, bool)> {
    if !(measured_latency_us > 0.0) {
        return Err(Error::validation(format!(
            "measured latency must be positive, got {measured_latency_us}"
        )));
    }
    let eff = fv.theoretical_time_us / measured_latency_us;
    let (eff, clamped) = if eff > EFFICIENCY_CLAMP_MAX {
        return Err(Error::validation(format!(
            "measured latency {measured_latency_us:.4} us beats the {:.4} us roofline by more \
             than {:.0}% (efficiency {eff:.4})",
            fv.theoretical_time_us,
            (EFFICIENCY_CLAMP_MAX - 1.0) * 100.0
        )));
    } else if eff > 1.0 {
        (1.0, true)
    } else {
        (eff, false)
    };
    Ok((
        Sample {
            features: fv.flatten(),
            theoretical_time_us: fv.theoretical_time_us,
            efficiency: eff,
        },
        clamped,
    ))
}

/// Decompose, schedule, and featurize one kernel invocation.
pub fn build_features(
    params: &KernelParams,
    precision: Precision,
    spec: &HardwareSpec,
    tiling: &TilingTable,
) -> Result<KernelAnalysis> {
    let ts = decompose(params, precision, spec, tiling)?;
    analyze(&ts, spec)
}

/// A latency prediction with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub latency_us: f64,
    pub efficiency: f64,
    pub theoretical_time_us: f64,
}

/// A trained per-category efficiency model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub format_version: u32,
    pub category: KernelCategory,
    pub loss: Loss,
    pub seed: u64,
    pub trained_on: usize,
    pub norm: NormStats,
    pub model: MlpModel,
}

impl Estimator {
    /// Fit a fresh model on `samples`. The validation split is carved out
    /// first and the normalization statistics come from the training rows
    /// alone, so nothing about validation leaks into the fit.
    pub fn fit(
        category: KernelCategory,
        samples: &[Sample],
        cfg: &TrainConfig,
    ) -> Result<(Estimator, TrainReport)> {
        if samples.len() < MIN_FIT_SAMPLES {
            return Err(Error::validation(format!(
                "need at least {MIN_FIT_SAMPLES} samples to fit, got {}",
                samples.len()
            )));
        }
        let width = FeatureVector::width(category);
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != width {
                return Err(Error::validation(format!(
                    "sample {i} has {} features, {category} expects {width}",
                    s.features.len()
                )));
            }
            if !(s.efficiency > 0.0 && s.efficiency <= 1.0) {
                return Err(Error::validation(format!(
                    "sample {i} has efficiency {} outside (0, 1]",
                    s.efficiency
                )));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        // Fisher-Yates, mirroring the trainer's shuffle.
        for i in (1..order.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            order.swap(i, j);
        }
        let val_n = ((samples.len() as f64 * cfg.val_fraction).round() as usize)
            .clamp(1, samples.len() - 1);
        let (val_idx, train_idx) = order.split_at(val_n);

        let train_rows: Vec<&[f64]> = train_idx
            .iter()
            .map(|&i| samples[i].features.as_slice())
            .collect();
        let norm = NormStats::fit(&train_rows);

        let to_matrix = |idx: &[usize]| {
            let rows: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| norm.apply(&samples[i].features))
                .collect();
            Matrix::from_rows(&rows)
        };
        let xt = to_matrix(train_idx);
        let xv = to_matrix(val_idx);
        let yt: Vec<f64> = train_idx.iter().map(|&i| samples[i].efficiency).collect();
        let yv: Vec<f64> = val_idx.iter().map(|&i| samples[i].efficiency).collect();

        let mut model = MlpModel::new(width, cfg.seed);
        let report = model.train_with_split(&xt, &yt, &xv, &yv, cfg, &mut rng)?;
        Ok((
            Estimator {
                format_version: MODEL_FORMAT_VERSION,
                category,
                loss: cfg.loss,
                seed: cfg.seed,
                trained_on: samples.len(),
                norm,
                model,
            },
            report,
        ))
    }

    fn check_features(&self, fv: &FeatureVector) -> Result<()> {
        if fv.category != self.category {
            return Err(Error::validation(format!(
                "estimator was trained for {}, got {} features",
                self.category, fv.category
            )));
        }
        if FeatureVector::width(fv.category) != self.norm.width() {
            return Err(Error::internal(format!(
                "feature width {} does not match the model input {}",
                FeatureVector::width(fv.category),
                self.norm.width()
            )));
        }
        Ok(())
    }

    /// Predicted efficiency in (0, 1).
    pub fn predict_efficiency(&self, fv: &FeatureVector) -> Result<f64> {
        self.check_features(fv)?;
        self.efficiency_from_raw(&fv.flatten())
    }

    /// Predicted efficiency from an already-flattened feature row.
    pub fn efficiency_from_raw(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.norm.width() {
            return Err(Error::validation(format!(
                "feature row has {} values, the model expects {}",
                features.len(),
                self.norm.width()
            )));
        }
        let row = self.norm.apply(features);
        let x = Matrix::from_rows(&[row]);
        Ok(self.model.predict(&x)[0])
    }

    /// Predicted latency; strictly above the roofline since efficiency < 1.
    pub fn predict_latency(&self, fv: &FeatureVector) -> Result<Prediction> {
        let efficiency = self.predict_efficiency(fv)?;
        Ok(Prediction {
            latency_us: fv.theoretical_time_us / efficiency,
            efficiency,
            theoretical_time_us: fv.theoretical_time_us,
        })
    }

    /// Shortfall of measured efficiency behind the model's quantile prediction.
    /// Positive means the kernel ran worse than the typical-case bar. Only a
    /// quantile model defines that bar; a MAPE model predicts the mean and
    /// would mislabel half of all healthy kernels.
    pub fn perf_gap(&self, fv: &FeatureVector, actual_efficiency: f64) -> Result<f64> {
        if !matches!(self.loss, Loss::Quantile { .. }) {
            return Err(Error::validation(
                "performance gaps need a quantile-loss estimator",
            ));
        }
        Ok(self.predict_efficiency(fv)? - actual_efficiency)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::internal(format!("serializing estimator: {e}")))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Estimator> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let est: Estimator = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        if est.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                path.display().to_string(),
                format!(
                    "model format version {} is not supported (expected {})",
                    est.format_version, MODEL_FORMAT_VERSION
                ),
            ));
        }
        Ok(est)
    }
}

/// Gap summary for one hardware platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub hardware: String,
    pub samples: usize,
    pub underperforming: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub fraction: f64,
    pub gap: f64,
}

/// Fleet-wide performance-gap report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub threshold: f64,
    pub rows: Vec<GapRow>,
    /// Empirical gap distribution at evenly spaced fractions.
    pub cdf: Vec<CdfPoint>,
}

impl GapReport {
    pub fn total_underperforming(&self) -> usize {
        self.rows.iter().map(|r| r.underperforming).sum()
    }
}

/// Compare measured efficiencies against the estimator's bar, grouped by
/// hardware name. `labeled` pairs each sample with its platform.
pub fn gap_report(
    est: &Estimator,
    labeled: &[(String, Sample)],
    threshold: f64,
) -> Result<GapReport> {
    if labeled.is_empty() {
        return Err(Error::validation("gap report needs at least one sample"));
    }
    if !matches!(est.loss, Loss::Quantile { .. }) {
        return Err(Error::validation(
            "performance gaps need a quantile-loss estimator",
        ));
    }
    let mut by_hw: std::collections::BTreeMap<&str, Vec<f64>> = std::collections::BTreeMap::new();
    let mut all_gaps = Vec::with_capacity(labeled.len());
    for (i, (hw, sample)) in labeled.iter().enumerate() {
        let pred = est
            .efficiency_from_raw(&sample.features)
            .map_err(|e| Error::validation(format!("sample {i}: {e}")))?;
        let gap = pred - sample.efficiency;
        by_hw.entry(hw.as_str()).or_default().push(gap);
        all_gaps.push(gap);
    }
    let rows = by_hw
        .into_iter()
        .map(|(hw, gaps)| {
            let n = gaps.len();
            GapRow {
                hardware: hw.to_string(),
                samples: n,
                underperforming: gaps.iter().filter(|&&g| g > threshold).count(),
                mean_gap: gaps.iter().sum::<f64>() / n as f64,
                max_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    all_gaps.sort_by(f64::total_cmp);
    let cdf = (0..=10)
        .map(|i| {
            let fraction = i as f64 / 10.0;
            let idx = ((fraction * (all_gaps.len() - 1) as f64).round()) as usize;
            CdfPoint {
                fraction,
                gap: all_gaps[idx],
            }
        })
        .collect();
    Ok(GapReport {
        threshold,
        rows,
        cdf,
    })
}

/// Features plus measured efficiency for every matching dataset record,
/// labeled by hardware. Returns the prepared pairs and how many had their
/// efficiency clamped down to 1.
pub fn prepare_samples(
    records: &[crate::datagen::DatasetRecord],
    category: KernelCategory,
    registry: &SpecRegistry,
    tiling: &TilingTable,
) -> Result<(Vec<(String, Sample)>, usize)> {
    let mut out = Vec::new();
    let mut clamped_total = 0;
    for (i, rec) in records.iter().enumerate() {
        if rec.kernel != category.as_str() {
            continue;
        }
        let spec = registry
            .get(&rec.hardware)
            .map_err(|e| Error::validation(format!("record {i}: {e}")))?;
        let precision = rec.precision()?;
        let params = KernelParams::from_json_map(category, &rec.params)?;
        let analysis = build_features(&params, precision, spec, tiling)?;
        let (sample, clamped) = make_sample(&analysis.features, rec.latency_us)
            .map_err(|e| Error::validation(format!("record {i}: {e}")))?;
        if clamped {
            clamped_total += 1;
        }
        out.push((rec.hardware.clone(), sample));
    }
    Ok((out, clamped_total))
}
