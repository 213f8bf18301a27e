//! End-to-end inference prediction: expand a transformer forward pass into a
//! trace of kernel invocations and collectives, then price each entry with the
//! per-category estimators and a measured communication table.
//!
//! The trace is hardware-independent; the choice of attention kernel
//! generation and every latency figure are decided at prediction time against
//! a concrete hardware spec.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::decompose::{AttentionVariant, KernelCategory, KernelParams};
use crate::error::{Error, Result};
use crate::estimator::{build_features, Estimator};
use crate::hwspec::{HardwareSpec, Precision};
use crate::tiling::TilingTable;

/// Transformer shape, the subset that determines kernel workloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub num_layers: u32,
    pub hidden_size: u64,
    pub num_heads: u64,
    pub num_kv_heads: u64,
    pub head_dim: u64,
    pub intermediate_size: u64,
    pub vocab_size: u64,
    #[serde(default = "default_model_precision")]
    pub precision: Precision,
    /// Present for mixture-of-experts models; the dense MLP block is then
    /// replaced by one fused expert kernel per layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moe: Option<MoeConfig>,
}

fn default_model_precision() -> Precision {
    Precision::Bf16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoeConfig {
    pub num_experts: u64,
    pub top_k: u64,
}

impl ModelConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ModelConfig = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_layers", self.num_layers as u64),
            ("hidden_size", self.hidden_size),
            ("num_heads", self.num_heads),
            ("num_kv_heads", self.num_kv_heads),
            ("head_dim", self.head_dim),
            ("intermediate_size", self.intermediate_size),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be >= 1")));
            }
        }
        if self.num_heads % self.num_kv_heads != 0 {
            return Err(Error::validation(format!(
                "num_kv_heads ({}) must divide num_heads ({})",
                self.num_kv_heads, self.num_heads
            )));
        }
        if let Some(moe) = &self.moe {
            if moe.num_experts == 0 || moe.top_k == 0 || moe.top_k > moe.num_experts {
                return Err(Error::validation(format!(
                    "moe needs 1 <= top_k <= num_experts, got top_k {} of {}",
                    moe.top_k, moe.num_experts
                )));
            }
        }
        Ok(())
    }
}

/// Degree of tensor and pipeline parallelism for a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelConfig {
    #[serde(default = "one")]
    pub tensor_parallel: u32,
    #[serde(default = "one")]
    pub pipeline_parallel: u32,
}

fn one() -> u32 {
    1
}

impl Default for ParallelConfig {
    fn default() -> Self {
        ParallelConfig {
            tensor_parallel: 1,
            pipeline_parallel: 1,
        }
    }
}

impl ParallelConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let tp = self.tensor_parallel as u64;
        if tp == 0 || self.pipeline_parallel == 0 {
            return Err(Error::validation("parallel degrees must be >= 1"));
        }
        if model.num_heads % tp != 0 || model.num_kv_heads % tp != 0 {
            return Err(Error::validation(format!(
                "tensor parallel {tp} must divide num_heads ({}) and num_kv_heads ({})",
                model.num_heads, model.num_kv_heads
            )));
        }
        if model.intermediate_size % tp != 0 {
            return Err(Error::validation(format!(
                "tensor parallel {tp} must divide intermediate_size ({})",
                model.intermediate_size
            )));
        }
        if self.pipeline_parallel > model.num_layers {
            return Err(Error::validation(format!(
                "pipeline parallel {} exceeds the layer count {}",
                self.pipeline_parallel, model.num_layers
            )));
        }
        Ok(())
    }
}

/// One batch of requests driven through the model together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    /// Prompt length of each sequence in the batch.
    pub prompt_lens: Vec<u64>,
    /// Tokens generated per sequence after prefill.
    #[serde(default)]
    pub decode_steps: u64,
}

impl Request {
    pub fn validate(&self) -> Result<()> {
        if self.prompt_lens.is_empty() {
            return Err(Error::validation("request needs at least one sequence"));
        }
        if self.prompt_lens.iter().any(|&l| l == 0) {
            return Err(Error::validation("prompt lengths must be >= 1"));
        }
        Ok(())
    }
}

/// Which forward pass of a request an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTag {
    Prefill,
    Decode { step: u64 },
}

/// Communication primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collective {
    AllReduce,
    SendRecv,
}

impl Collective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Collective::AllReduce => "all_reduce",
            Collective::SendRecv => "send_recv",
        }
    }
}

/// One operation in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOp {
    Kernel {
        category: KernelCategory,
        precision: Precision,
        params: Map<String, Value>,
    },
    Collective {
        kind: Collective,
        bytes: u64,
        /// Ranks participating: the tensor-parallel group for all-reduce, the
        /// two ends of a pipeline hop for send/recv.
        world: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub phase: PhaseTag,
    /// Pipeline stage the op runs on.
    pub stage: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    pub label: String,
    pub op: TraceOp,
}

pub fn write_trace(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut out = Vec::new();
    for entry in trace {
        serde_json::to_writer(&mut out, entry)
            .map_err(|e| Error::internal(format!("serializing trace entry: {e}")))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: TraceEntry = serde_json::from_str(line)
            .map_err(|e| Error::parse_line(path.display().to_string(), i + 1, e.to_string()))?;
        out.push(entry);
    }
    Ok(out)
}

/// Layers assigned to pipeline stage `s`: contiguous blocks, any remainder
/// going to the earliest stages.
pub fn stage_layers(num_layers: u32, pp: u32, s: u32) -> std::ops::Range<u32> {
    let base = num_layers / pp;
    let rem = num_layers % pp;
    let start = s * base + s.min(rem);
    let len = base + u32::from(s < rem);
    start..start + len
}

/// Expand one request into the full sequence of kernels and collectives.
pub fn generate_trace(
    model: &ModelConfig,
    par: &ParallelConfig,
    request: &Request,
) -> Result<Vec<TraceEntry>> {
    model.validate()?;
    par.validate(model)?;
    request.validate()?;

    let mut trace = Vec::new();
    let prompts = &request.prompt_lens;
    forward_pass(model, par, PhaseTag::Prefill, prompts, prompts, &mut trace);
    for step in 1..=request.decode_steps {
        let qlens = vec![1; prompts.len()];
        let kvlens: Vec<u64> = prompts.iter().map(|&p| p + step).collect();
        forward_pass(model, par, PhaseTag::Decode { step }, &qlens, &kvlens, &mut trace);
    }
    Ok(trace)
}

fn forward_pass(
    model: &ModelConfig,
    par: &ParallelConfig,
    phase: PhaseTag,
    qlens: &[u64],
    kvlens: &[u64],
    trace: &mut Vec<TraceEntry>,
) {
    let tp = par.tensor_parallel as u64;
    let pp = par.pipeline_parallel;
    let tokens: u64 = qlens.iter().sum();
    let batch = qlens.len() as u64;
    let bpe = model.precision.bytes_per_element();
    let hidden_bytes = tokens * model.hidden_size * bpe;

    let gemm = |m: u64, n: u64, k: u64| -> Map<String, Value> {
        let mut p = Map::new();
        p.insert("M".into(), m.into());
        p.insert("N".into(), n.into());
        p.insert("K".into(), k.into());
        p
    };
    let rowwise = |seq: u64, dim: u64| -> Map<String, Value> {
        let mut p = Map::new();
        p.insert("seq".into(), seq.into());
        p.insert("dim".into(), dim.into());
        p
    };

    for s in 0..pp {
        for layer in stage_layers(model.num_layers, pp, s) {
            let at = |label: &str, category: KernelCategory, precision, params| TraceEntry {
                phase,
                stage: s,
                layer: Some(layer),
                label: label.to_string(),
                op: TraceOp::Kernel {
                    category,
                    precision,
                    params,
                },
            };
            trace.push(at(
                "input_norm",
                KernelCategory::RmsNorm,
                Precision::Fp32,
                rowwise(tokens, model.hidden_size),
            ));
            let qkv_n = (model.num_heads / tp + 2 * model.num_kv_heads / tp) * model.head_dim;
            trace.push(at(
                "qkv_proj",
                KernelCategory::Gemm,
                model.precision,
                gemm(tokens, qkv_n, model.hidden_size),
            ));
            let mut attn = Map::new();
            attn.insert("nh".into(), (model.num_heads / tp).into());
            attn.insert("nkv".into(), (model.num_kv_heads / tp).into());
            attn.insert("hd".into(), model.head_dim.into());
            attn.insert("qlen".into(), Value::from(qlens.to_vec()));
            attn.insert("kvlen".into(), Value::from(kvlens.to_vec()));
            attn.insert("causal".into(), true.into());
            trace.push(at(
                "attention",
                KernelCategory::Attention,
                model.precision,
                attn,
            ));
            trace.push(at(
                "o_proj",
                KernelCategory::Gemm,
                model.precision,
                gemm(tokens, model.hidden_size, model.num_heads / tp * model.head_dim),
            ));
            if tp > 1 {
                trace.push(TraceEntry {
                    phase,
                    stage: s,
                    layer: Some(layer),
                    label: "allreduce_attn".to_string(),
                    op: TraceOp::Collective {
                        kind: Collective::AllReduce,
                        bytes: hidden_bytes,
                        world: par.tensor_parallel,
                    },
                });
            }
            trace.push(at(
                "post_norm",
                KernelCategory::RmsNorm,
                Precision::Fp32,
                rowwise(tokens, model.hidden_size),
            ));
            if let Some(moe) = &model.moe {
                let mut p = Map::new();
                p.insert("M".into(), tokens.into());
                p.insert("E".into(), moe.num_experts.into());
                p.insert("topk".into(), moe.top_k.into());
                p.insert("H".into(), model.hidden_size.into());
                p.insert("N".into(), (model.intermediate_size / tp).into());
                trace.push(at("moe", KernelCategory::FusedMoe, model.precision, p));
            } else {
                trace.push(at(
                    "gate_up_proj",
                    KernelCategory::Gemm,
                    model.precision,
                    gemm(tokens, 2 * model.intermediate_size / tp, model.hidden_size),
                ));
                trace.push(at(
                    "silu_mul",
                    KernelCategory::SiluMul,
                    Precision::Fp32,
                    rowwise(tokens, model.intermediate_size / tp),
                ));
                trace.push(at(
                    "down_proj",
                    KernelCategory::Gemm,
                    model.precision,
                    gemm(tokens, model.hidden_size, model.intermediate_size / tp),
                ));
            }
            if tp > 1 {
                trace.push(TraceEntry {
                    phase,
                    stage: s,
                    layer: Some(layer),
                    label: "allreduce_mlp".to_string(),
                    op: TraceOp::Collective {
                        kind: Collective::AllReduce,
                        bytes: hidden_bytes,
                        world: par.tensor_parallel,
                    },
                });
            }
        }
        if s + 1 < pp {
            trace.push(TraceEntry {
                phase,
                stage: s,
                layer: None,
                label: "send_recv".to_string(),
                op: TraceOp::Collective {
                    kind: Collective::SendRecv,
                    bytes: hidden_bytes,
                    world: 2,
                },
            });
        }
    }

    // The language-model head runs once per pass on the last token of each
    // sequence, on the final pipeline stage.
    let last = pp - 1;
    trace.push(TraceEntry {
        phase,
        stage: last,
        layer: None,
        label: "final_norm".to_string(),
        op: TraceOp::Kernel {
            category: KernelCategory::RmsNorm,
            precision: Precision::Fp32,
            params: rowwise(batch, model.hidden_size),
        },
    });
    trace.push(TraceEntry {
        phase,
        stage: last,
        layer: None,
        label: "lm_head".to_string(),
        op: TraceOp::Kernel {
            category: KernelCategory::Gemm,
            precision: model.precision,
            params: gemm(batch, model.vocab_size.div_ceil(tp), model.hidden_size),
        },
    });
}

/// One measured point of a communication table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommPoint {
    pub bytes: u64,
    pub latency_us: f64,
}

/// Collective latency tables: per primitive, per world size, latency sampled
/// over message sizes. Lookups interpolate linearly in log(bytes) and clamp
/// flat beyond either end of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommModel {
    /// `tables[collective][world_size] = sorted points`. Keys are strings for
    /// the JSON form: `"all_reduce"`, then `"2"`, `"4"`, ...
    pub tables: BTreeMap<String, BTreeMap<String, Vec<CommPoint>>>,
}

impl CommModel {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: CommModel = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (coll, worlds) in &self.tables {
            for (world, points) in worlds {
                if world.parse::<u32>().is_err() {
                    return Err(Error::validation(format!(
                        "comm table {coll} has non-numeric world size '{world}'"
                    )));
                }
                if points.is_empty() {
                    return Err(Error::validation(format!(
                        "comm table {coll}/{world} has no points"
                    )));
                }
                for pair in points.windows(2) {
                    if pair[1].bytes <= pair[0].bytes {
                        return Err(Error::validation(format!(
                            "comm table {coll}/{world} bytes must strictly increase \
                             ({} then {})",
                            pair[0].bytes, pair[1].bytes
                        )));
                    }
                    if pair[1].latency_us < pair[0].latency_us {
                        return Err(Error::validation(format!(
                            "comm table {coll}/{world} latency must not decrease \
                             ({} then {})",
                            pair[0].latency_us, pair[1].latency_us
                        )));
                    }
                }
                if points.iter().any(|p| !(p.latency_us > 0.0)) {
                    return Err(Error::validation(format!(
                        "comm table {coll}/{world} has a non-positive latency"
                    )));
                }
            }
        }
        Ok(())
    }

    fn points(&self, kind: Collective, world: u32) -> Result<&[CommPoint]> {
        let worlds = self.tables.get(kind.as_str()).ok_or_else(|| {
            Error::validation(format!("comm model has no {} table", kind.as_str()))
        })?;
        worlds
            .get(&world.to_string())
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::validation(format!(
                    "comm model has no {} table for world size {world}",
                    kind.as_str()
                ))
            })
    }

    /// Latency of moving `bytes` through the collective at `world` ranks.
    pub fn latency_us(&self, kind: Collective, world: u32, bytes: u64) -> Result<f64> {
        let points = self.points(kind, world)?;
        let first = points.first().unwrap();
        let last = points.last().unwrap();
        if bytes <= first.bytes {
            return Ok(first.latency_us);
        }
        if bytes >= last.bytes {
            return Ok(last.latency_us);
        }
        let hi = points.partition_point(|p| p.bytes < bytes);
        let (a, b) = (&points[hi - 1], &points[hi]);
        if a.bytes == bytes {
            return Ok(a.latency_us);
        }
        let t = ((bytes as f64).ln() - (a.bytes as f64).ln())
            / ((b.bytes as f64).ln() - (a.bytes as f64).ln());
        Ok(a.latency_us + t * (b.latency_us - a.latency_us))
    }

    /// Build tables from a latency/bandwidth model: a fixed startup cost plus
    /// the transfer time of the bytes each rank moves (`2(w-1)/w` of the
    /// message for a ring all-reduce, the full message for a pipeline hop).
    pub fn alpha_beta(
        worlds: &[u32],
        alpha_us: f64,
        bw_gbps: f64,
        bytes_grid: &[u64],
    ) -> CommModel {
        let mut tables = BTreeMap::new();
        let mut ar = BTreeMap::new();
        let mut sr = BTreeMap::new();
        for &w in worlds {
            let ar_points = bytes_grid
                .iter()
                .map(|&b| CommPoint {
                    bytes: b,
                    latency_us: alpha_us
                        + b as f64 * 2.0 * (w as f64 - 1.0) / w as f64 / (bw_gbps * 1000.0),
                })
                .collect();
            ar.insert(w.to_string(), ar_points);
            let sr_points = bytes_grid
                .iter()
                .map(|&b| CommPoint {
                    bytes: b,
                    latency_us: alpha_us + b as f64 / (bw_gbps * 1000.0),
                })
                .collect();
            sr.insert(w.to_string(), sr_points);
        }
        tables.insert(Collective::AllReduce.as_str().to_string(), ar);
        tables.insert(Collective::SendRecv.as_str().to_string(), sr);
        CommModel { tables }
    }
}

/// The per-category estimators needed to price a trace.
#[derive(Debug, Clone)]
pub struct EstimatorSet {
    pub estimators: BTreeMap<KernelCategory, Estimator>,
}

impl EstimatorSet {
    pub fn new() -> Self {
        EstimatorSet {
            estimators: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, est: Estimator) {
        self.estimators.insert(est.category, est);
    }

    /// Load every `<category>.json` present in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = EstimatorSet::new();
        for category in KernelCategory::ALL {
            let path = dir.join(format!("{category}.json"));
            if path.exists() {
                set.insert(Estimator::load(&path)?);
            }
        }
        if set.estimators.is_empty() {
            return Err(Error::validation(format!(
                "no estimator models (<category>.json) found in {}",
                dir.display()
            )));
        }
        Ok(set)
    }

    pub fn get(&self, category: KernelCategory) -> Result<&Estimator> {
        self.estimators.get(&category).ok_or_else(|| {
            Error::validation(format!("no estimator loaded for category {category}"))
        })
    }
}

impl Default for EstimatorSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Predicted latency of one trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryPrediction {
    pub index: usize,
    pub phase: PhaseTag,
    pub stage: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    pub label: String,
    pub latency_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryTotal {
    pub count: usize,
    pub total_us: f64,
}

/// Priced trace: the total is the exact sum of the entries, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2ePrediction {
    pub total_us: f64,
    pub entries: Vec<EntryPrediction>,
    /// Aggregates keyed by kernel category or collective name.
    pub by_kind: BTreeMap<String, CategoryTotal>,
}

/// Price every entry of a trace for one GPU. Collectives need `comm`; a trace
/// without collectives runs fine without one.
pub fn predict_e2e(
    trace: &[TraceEntry],
    spec: &HardwareSpec,
    tiling: &TilingTable,
    estimators: &EstimatorSet,
    comm: Option<&CommModel>,
) -> Result<E2ePrediction> {
    let mut entries = Vec::with_capacity(trace.len());
    let mut by_kind: BTreeMap<String, CategoryTotal> = BTreeMap::new();
    let mut total_us = 0.0;
    for (index, entry) in trace.iter().enumerate() {
        let (kind_key, latency_us) = match &entry.op {
            TraceOp::Kernel {
                category,
                precision,
                params,
            } => {
                let mut params = KernelParams::from_json_map(*category, params)
                    .map_err(|e| Error::validation(format!("trace entry {index}: {e}")))?;
                // The runtime picks the attention generation per architecture.
                if let KernelParams::Attention { variant, .. } = &mut params {
                    *variant = if spec.compute_capability >= 9.0 {
                        AttentionVariant::Fa3
                    } else {
                        AttentionVariant::Fa2
                    };
                }
                let analysis = build_features(&params, *precision, spec, tiling)?;
                let prediction = estimators.get(*category)?.predict_latency(&analysis.features)?;
                (category.as_str().to_string(), prediction.latency_us)
            }
            TraceOp::Collective { kind, bytes, world } => {
                let comm = comm.ok_or_else(|| {
                    Error::validation(
                        "trace contains collectives but no communication table was given",
                    )
                })?;
                (
                    kind.as_str().to_string(),
                    comm.latency_us(*kind, *world, *bytes)?,
                )
            }
        };
        total_us += latency_us;
        let agg = by_kind.entry(kind_key).or_insert(CategoryTotal {
            count: 0,
            total_us: 0.0,
        });
        agg.count += 1;
        agg.total_us += latency_us;
        entries.push(EntryPrediction {
            index,
            phase: entry.phase,
            stage: entry.stage,
            layer: entry.layer,
            label: entry.label.clone(),
            latency_us,
        });
    }
    Ok(E2ePrediction {
        total_us,
        entries,
        by_kind,
    })
}
