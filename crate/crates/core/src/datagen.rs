//! Dataset plumbing and synthetic data: the JSONL record format shared by
//! every command, workload samplers that draw realistic kernel shapes, a
//! configurable synthetic GPU used to manufacture labeled data, and the
//! stratified train/test split.
//!
//! The synthetic GPU produces latencies through a saturation-and-interference
//! model that the estimator never sees in closed form — the learner has to
//! recover it from (features, latency) pairs alone, which is what makes held-out
//! accuracy on synthetic data meaningful evidence.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::decompose::{AttentionVariant, KernelCategory, KernelParams};
use crate::error::{Error, Result};
use crate::estimator::build_features;
use crate::features::KernelAnalysis;
use crate::hwspec::{HardwareSpec, Precision};
use crate::tiling::TilingTable;

/// One measured (or synthesized) kernel invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    /// Kernel category token, e.g. `"gemm"`.
    pub kernel: String,
    /// Category-specific shape parameters.
    pub params: Map<String, Value>,
    /// Hardware spec name the latency was measured on.
    pub hardware: String,
    pub latency_us: f64,
    /// Free-form metadata; `precision` is required downstream, `seed` records
    /// the generator seed for synthetic data.
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl DatasetRecord {
    pub fn category(&self) -> Result<KernelCategory> {
        KernelCategory::parse(&self.kernel)
    }

    pub fn precision(&self) -> Result<Precision> {
        let tag = self.tags.get("precision").ok_or_else(|| {
            Error::validation(format!(
                "record for '{}' has no precision tag",
                self.kernel
            ))
        })?;
        Precision::parse(tag)
    }
}

/// Write records as JSON Lines.
pub fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut out = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut out, rec)
            .map_err(|e| Error::internal(format!("serializing record: {e}")))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Read a JSON Lines dataset; blank lines are allowed, anything else that does
/// not parse is an error naming the line.
pub fn load_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse_line(path.display().to_string(), i + 1, e.to_string()))?;
        records.push(rec);
    }
    Ok(records)
}

/// Split into (train, test), stratified by hardware so each platform appears on
/// both sides. Groups of five or more always contribute at least one record to
/// each side; tiny groups round and may land entirely in train.
pub fn split_stratified(
    records: &[DatasetRecord],
    test_fraction: f64,
    seed: u64,
) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        groups.entry(rec.hardware.as_str()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (gi, (_hw, mut idx)) in groups.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(gi as u64);
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let n = idx.len();
        let mut test_n = (n as f64 * test_fraction).round() as usize;
        if n >= 5 {
            test_n = test_n.clamp(1, n - 1);
        } else {
            test_n = test_n.min(n);
        }
        for (k, &i) in idx.iter().enumerate() {
            if k < test_n {
                test.push(records[i].clone());
            } else {
                train.push(records[i].clone());
            }
        }
    }
    (train, test)
}

/// Inclusive integer bounds for one sampled dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub lo: u64,
    pub hi: u64,
}

impl Span {
    pub const fn new(lo: u64, hi: u64) -> Self {
        Span { lo, hi }
    }

    /// Log-uniform integer draw: shapes spread over orders of magnitude rather
    /// than bunching at the top of the range.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        assert!(self.lo >= 1 && self.hi >= self.lo, "bad span {self:?}");
        if self.lo == self.hi {
            return self.lo;
        }
        let lo = (self.lo as f64).ln();
        let hi = (self.hi as f64).ln();
        let v = Uniform::new(lo, hi).sample(rng).exp().round() as u64;
        v.clamp(self.lo, self.hi)
    }
}

/// Sampling bounds per category, defaulted to serving-workload shapes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub gemm_m: Span,
    pub gemm_n: Span,
    pub gemm_k: Span,
    pub scaled_m: Span,
    pub scaled_n: Span,
    pub scaled_k: Span,
    pub attn_bs: Span,
    pub attn_nh: Span,
    pub attn_nkv: Span,
    pub attn_qlen: Span,
    pub attn_kvlen: Span,
    pub rmsnorm_seq: Span,
    pub rmsnorm_dim: Span,
    pub silumul_seq: Span,
    pub silumul_dim: Span,
    pub moe_m: Span,
    pub moe_experts: Span,
    pub moe_topk: Span,
    pub moe_hidden: Span,
    pub moe_n: Span,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            gemm_m: Span::new(2, 131_072),
            gemm_n: Span::new(384, 152_064),
            gemm_k: Span::new(256, 53_248),
            scaled_m: Span::new(2, 131_072),
            scaled_n: Span::new(384, 8_192),
            scaled_k: Span::new(256, 8_192),
            attn_bs: Span::new(1, 16),
            attn_nh: Span::new(2, 128),
            attn_nkv: Span::new(1, 8),
            attn_qlen: Span::new(1, 20_097),
            attn_kvlen: Span::new(4, 20_481),
            rmsnorm_seq: Span::new(2, 131_072),
            rmsnorm_dim: Span::new(128, 16_384),
            silumul_seq: Span::new(2, 131_072),
            silumul_dim: Span::new(768, 106_496),
            moe_m: Span::new(2, 8_192),
            moe_experts: Span::new(8, 128),
            moe_topk: Span::new(2, 8),
            moe_hidden: Span::new(1_024, 4_096),
            moe_n: Span::new(512, 3_072),
        }
    }
}

/// The element type a category runs in when nothing says otherwise.
pub fn default_precision(category: KernelCategory) -> Precision {
    match category {
        KernelCategory::Gemm | KernelCategory::Attention | KernelCategory::FusedMoe => {
            Precision::Bf16
        }
        KernelCategory::ScaledMm => Precision::Fp8,
        KernelCategory::RmsNorm | KernelCategory::SiluMul => Precision::Fp32,
    }
}

/// Draw one plausible invocation of `category` sized for `spec`.
pub fn sample_params(
    category: KernelCategory,
    ranges: &ParamRanges,
    spec: &HardwareSpec,
    rng: &mut ChaCha8Rng,
) -> KernelParams {
    match category {
        KernelCategory::Gemm => KernelParams::Gemm {
            m: ranges.gemm_m.sample(rng),
            n: ranges.gemm_n.sample(rng),
            k: ranges.gemm_k.sample(rng),
        },
        KernelCategory::ScaledMm => KernelParams::ScaledMm {
            m: ranges.scaled_m.sample(rng),
            n: ranges.scaled_n.sample(rng),
            k: ranges.scaled_k.sample(rng),
        },
        KernelCategory::Attention => {
            let bs = ranges.attn_bs.sample(rng);
            let num_heads = ranges.attn_nh.sample(rng);
            // Group size must divide the head count; redraw until it does,
            // falling back to MHA if the range never cooperates.
            let mut num_kv_heads = 1;
            for _ in 0..64 {
                let cand = ranges.attn_nkv.sample(rng);
                if num_heads % cand == 0 {
                    num_kv_heads = cand;
                    break;
                }
            }
            let head_dim = if rng.gen_bool(0.5) { 64 } else { 128 };
            let causal = rng.gen_bool(0.5);
            let mut qlens = Vec::with_capacity(bs as usize);
            let mut kvlens = Vec::with_capacity(bs as usize);
            for _ in 0..bs {
                let q = ranges.attn_qlen.sample(rng);
                let mut kv = ranges.attn_kvlen.sample(rng);
                if causal {
                    kv = kv.max(q);
                }
                qlens.push(q);
                kvlens.push(kv);
            }
            KernelParams::Attention {
                num_heads,
                num_kv_heads,
                head_dim,
                qlens,
                kvlens,
                causal,
                variant: if spec.compute_capability >= 9.0 {
                    AttentionVariant::Fa3
                } else {
                    AttentionVariant::Fa2
                },
            }
        }
        KernelCategory::RmsNorm => KernelParams::RmsNorm {
            seq: ranges.rmsnorm_seq.sample(rng),
            dim: ranges.rmsnorm_dim.sample(rng),
        },
        KernelCategory::SiluMul => KernelParams::SiluMul {
            seq: ranges.silumul_seq.sample(rng),
            dim: ranges.silumul_dim.sample(rng),
        },
        KernelCategory::FusedMoe => {
            let m = ranges.moe_m.sample(rng);
            let experts = ranges.moe_experts.sample(rng);
            let topk = ranges.moe_topk.sample(rng).min(experts);
            let histogram = if rng.gen_bool(0.5) {
                None
            } else {
                Some(random_routing(m * topk, experts, rng))
            };
            KernelParams::FusedMoe {
                m,
                experts,
                topk,
                hidden: ranges.moe_hidden.sample(rng),
                n: ranges.moe_n.sample(rng),
                histogram,
            }
        }
    }
}

/// Random expert routing: proportional shares from exponential weights, with
/// the rounding remainder going to the largest fractional parts, so the counts
/// always sum to `total`.
fn random_routing(total: u64, experts: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let weights: Vec<f64> = (0..experts).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = weights.iter().sum();
    let mut counts: Vec<u64> = Vec::with_capacity(experts as usize);
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(experts as usize);
    let mut assigned = 0;
    for (i, w) in weights.iter().enumerate() {
        let exact = w / sum * total as f64;
        let floor = exact.floor() as u64;
        counts.push(floor);
        assigned += floor;
        fracs.push((exact - floor as f64, i));
    }
    fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for k in 0..(total - assigned) as usize {
        counts[fracs[k % fracs.len()].1] += 1;
    }
    counts
}

/// The synthetic GPU's response curve for one platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleProfile {
    /// Efficiency ceiling the platform saturates toward.
    pub e_max: f64,
    /// Demand scale (cycles) of the saturation ramp: small kernels cannot
    /// amortize launch and fill overheads.
    pub ramp_cycles: f64,
    /// Efficiency lost per unit of imbalance ratio above 1.
    pub imbalance_penalty: f64,
    /// Weight of non-binding resource demand dragging on the binding one.
    pub interference: f64,
    /// Multiplicative measurement noise (standard deviation).
    pub noise_sigma: f64,
}

impl OracleProfile {
    /// Efficiency before noise, given total binding demand in cycles and the
    /// schedule's imbalance ratio.
    fn base_efficiency(&self, demand_cycles: f64, imbalance_ratio: f64) -> f64 {
        let saturation = 1.0 - (-demand_cycles / self.ramp_cycles).exp();
        let balance = 1.0 - self.imbalance_penalty * (imbalance_ratio - 1.0);
        self.e_max * saturation * balance
    }
}

impl Default for OracleProfile {
    /// A well-behaved mid-range platform: decent ceiling, modest ramp, light
    /// imbalance sensitivity, quiet measurements.
    fn default() -> Self {
        OracleProfile {
            e_max: 0.85,
            ramp_cycles: 2.0e5,
            imbalance_penalty: 0.15,
            interference: 0.3,
            noise_sigma: 0.02,
        }
    }
}

/// A set of per-hardware response curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticOracle {
    pub profiles: BTreeMap<String, OracleProfile>,
}

impl SyntheticOracle {
    /// One shared profile for every named platform.
    pub fn uniform(names: &[&str], profile: OracleProfile) -> Self {
        SyntheticOracle {
            profiles: names
                .iter()
                .map(|n| (n.to_string(), profile))
                .collect(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn profile(&self, hardware: &str) -> Result<&OracleProfile> {
        self.profiles.get(hardware).ok_or_else(|| {
            Error::validation(format!("oracle has no profile for hardware '{hardware}'"))
        })
    }

    /// Synthesize a measured latency for one analyzed kernel. The demand mixes
    /// the binding roof with a fraction of every other roof — a coupling the
    /// feature layout only exposes indirectly, so a model has to learn it.
    pub fn latency_us(
        &self,
        spec: &HardwareSpec,
        analysis: &KernelAnalysis,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let profile = self.profile(&spec.name)?;
        let fv = &analysis.features;
        let mut roofs = vec![fv.mio.cycles_global_gpu, fv.mio.cycles_l2_gpu];
        roofs.extend(fv.pipelines.iter().map(|(_, p)| p.total_cycles));
        let binding = roofs.iter().cloned().fold(0.0, f64::max);
        let secondary: f64 = roofs.iter().sum::<f64>() - binding;
        let demand = binding + profile.interference * secondary;

        let noise = Normal::new(0.0, profile.noise_sigma)
            .map_err(|e| Error::validation(format!("bad oracle noise sigma: {e}")))?
            .sample(rng);
        let eff = (profile.base_efficiency(demand, analysis.imbalance_ratio) * (1.0 + noise))
            .clamp(0.01, profile.e_max);
        Ok(fv.theoretical_time_us / eff)
    }
}

/// Draw `count` labeled records for every (category, hardware) cell. Each cell
/// runs on its own RNG stream of `seed`, so adding a category or platform
/// never disturbs the samples of another.
pub fn generate_dataset(
    categories: &[KernelCategory],
    hardware: &[&HardwareSpec],
    count: usize,
    ranges: &ParamRanges,
    oracle: &SyntheticOracle,
    tiling: &TilingTable,
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::with_capacity(categories.len() * hardware.len() * count);
    for (ci, &category) in categories.iter().enumerate() {
        let precision = default_precision(category);
        for (hi, spec) in hardware.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((ci * hardware.len() + hi) as u64);
            for _ in 0..count {
                let params = sample_params(category, ranges, spec, &mut rng);
                let analysis = build_features(&params, precision, spec, tiling)?;
                let latency_us = oracle.latency_us(spec, &analysis, &mut rng)?;
                let mut tags = BTreeMap::new();
                tags.insert("precision".to_string(), precision.to_string());
                tags.insert("seed".to_string(), seed.to_string());
                tags.insert("source".to_string(), "synthetic".to_string());
                records.push(DatasetRecord {
                    kernel: category.as_str().to_string(),
                    params: params.to_json_map(),
                    hardware: spec.name.clone(),
                    latency_us,
                    tags,
                });
            }
        }
    }
    Ok(records)
}
