//! Kernel decomposition: turn one kernel invocation into the set of schedulable
//! tasks its implementation would launch, each annotated with per-pipeline op
//! counts, load traffic, and its CTA resource footprint.
//!
//! Op counting is exact for the dense kernels (a matmul tile contributes
//! 2*m*n*k tensor ops, and summing tiles recovers the whole problem); causal
//! attention rounds its KV extent up to the kernel's KV block size, which is the
//! only place the totals deliberately exceed the elementwise count.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hwspec::{HardwareSpec, Precision};
use crate::schedule::SchedulePolicy;
use crate::tiling::{Paradigm, TileConfig, TilingTable};

/// Bytes per dequantization scale operand (scales are fp32 regardless of the
/// matrix element type).
const SCALE_BYTES: u64 = 4;

/// Kernel families the decomposer understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelCategory {
    Gemm,
    ScaledMm,
    Attention,
    RmsNorm,
    SiluMul,
    FusedMoe,
}

impl KernelCategory {
    pub const ALL: [KernelCategory; 6] = [
        KernelCategory::Gemm,
        KernelCategory::ScaledMm,
        KernelCategory::Attention,
        KernelCategory::RmsNorm,
        KernelCategory::SiluMul,
        KernelCategory::FusedMoe,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gemm" => Ok(KernelCategory::Gemm),
            "scaled_mm" => Ok(KernelCategory::ScaledMm),
            "attention" => Ok(KernelCategory::Attention),
            "rmsnorm" => Ok(KernelCategory::RmsNorm),
            "silu_mul" => Ok(KernelCategory::SiluMul),
            "fused_moe" => Ok(KernelCategory::FusedMoe),
            other => Err(Error::validation(format!("unknown kernel category '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            KernelCategory::Gemm => "gemm",
            KernelCategory::ScaledMm => "scaled_mm",
            KernelCategory::Attention => "attention",
            KernelCategory::RmsNorm => "rmsnorm",
            KernelCategory::SiluMul => "silu_mul",
            KernelCategory::FusedMoe => "fused_moe",
        }
    }
}

impl fmt::Display for KernelCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelCategory::parse(s)
    }
}

/// Flash-attention generation; selects the scheduling regime of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionVariant {
    Fa2,
    Fa3,
}

/// Parsed, validated parameters of one kernel invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelParams {
    Gemm {
        m: u64,
        n: u64,
        k: u64,
    },
    ScaledMm {
        m: u64,
        n: u64,
        k: u64,
    },
    Attention {
        num_heads: u64,
        num_kv_heads: u64,
        head_dim: u64,
        qlens: Vec<u64>,
        kvlens: Vec<u64>,
        causal: bool,
        variant: AttentionVariant,
    },
    RmsNorm {
        seq: u64,
        dim: u64,
    },
    SiluMul {
        seq: u64,
        dim: u64,
    },
    FusedMoe {
        m: u64,
        experts: u64,
        topk: u64,
        hidden: u64,
        n: u64,
        /// Tokens routed to each expert. `None` means a balanced split.
        histogram: Option<Vec<u64>>,
    },
}

impl KernelParams {
    pub fn category(&self) -> KernelCategory {
        match self {
            KernelParams::Gemm { .. } => KernelCategory::Gemm,
            KernelParams::ScaledMm { .. } => KernelCategory::ScaledMm,
            KernelParams::Attention { .. } => KernelCategory::Attention,
            KernelParams::RmsNorm { .. } => KernelCategory::RmsNorm,
            KernelParams::SiluMul { .. } => KernelCategory::SiluMul,
            KernelParams::FusedMoe { .. } => KernelCategory::FusedMoe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelParams::Gemm { m, n, k } | KernelParams::ScaledMm { m, n, k } => {
                for (name, v) in [("M", m), ("N", n), ("K", k)] {
                    if *v == 0 {
                        return Err(Error::validation(format!("{name} must be >= 1")));
                    }
                }
            }
            KernelParams::Attention {
                num_heads,
                num_kv_heads,
                head_dim,
                qlens,
                kvlens,
                causal,
                ..
            } => {
                if *num_heads == 0 || *num_kv_heads == 0 || *head_dim == 0 {
                    return Err(Error::validation("attention head counts and head_dim must be >= 1"));
                }
                if num_heads % num_kv_heads != 0 {
                    return Err(Error::validation(format!(
                        "num_kv_heads ({num_kv_heads}) must divide num_heads ({num_heads})"
                    )));
                }
                if qlens.is_empty() || qlens.len() != kvlens.len() {
                    return Err(Error::validation(format!(
                        "attention needs matching non-empty qlen/kvlen lists, got {} and {}",
                        qlens.len(),
                        kvlens.len()
                    )));
                }
                for (i, (q, kv)) in qlens.iter().zip(kvlens).enumerate() {
                    if *q == 0 || *kv == 0 {
                        return Err(Error::validation(format!("sequence {i} has a zero length")));
                    }
                    if *causal && kv < q {
                        return Err(Error::validation(format!(
                            "causal attention requires kvlen >= qlen, sequence {i} has {kv} < {q}"
                        )));
                    }
                }
            }
            KernelParams::RmsNorm { seq, dim } | KernelParams::SiluMul { seq, dim } => {
                if *seq == 0 || *dim == 0 {
                    return Err(Error::validation("seq and dim must be >= 1"));
                }
            }
            KernelParams::FusedMoe {
                m,
                experts,
                topk,
                hidden,
                n,
                histogram,
            } => {
                for (name, v) in [("M", m), ("E", experts), ("topk", topk), ("H", hidden), ("N", n)]
                {
                    if *v == 0 {
                        return Err(Error::validation(format!("{name} must be >= 1")));
                    }
                }
                if topk > experts {
                    return Err(Error::validation(format!(
                        "topk ({topk}) cannot exceed the expert count ({experts})"
                    )));
                }
                if let Some(hist) = histogram {
                    if hist.len() != *experts as usize {
                        return Err(Error::validation(format!(
                            "expert histogram has {} entries for {} experts",
                            hist.len(),
                            experts
                        )));
                    }
                    let total: u64 = hist.iter().sum();
                    if total != m * topk {
                        return Err(Error::validation(format!(
                            "expert histogram sums to {total}, expected M*topk = {}",
                            m * topk
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Build params from the JSON map used in dataset records and on the CLI.
    pub fn from_json_map(category: KernelCategory, map: &Map<String, Value>) -> Result<KernelParams> {
        let params = match category {
            KernelCategory::Gemm => KernelParams::Gemm {
                m: get_u64(map, "M")?,
                n: get_u64(map, "N")?,
                k: get_u64(map, "K")?,
            },
            KernelCategory::ScaledMm => KernelParams::ScaledMm {
                m: get_u64(map, "M")?,
                n: get_u64(map, "N")?,
                k: get_u64(map, "K")?,
            },
            KernelCategory::Attention => {
                let qlens = get_len_list(map, "qlen")?;
                let mut kvlens = get_len_list(map, "kvlen")?;
                if qlens.len() > 1 && kvlens.len() == 1 {
                    kvlens = vec![kvlens[0]; qlens.len()];
                }
                let variant = match map.get("variant") {
                    None => AttentionVariant::Fa2,
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|e| Error::validation(format!("bad attention variant: {e}")))?,
                };
                KernelParams::Attention {
                    num_heads: get_u64(map, "nh")?,
                    num_kv_heads: get_u64(map, "nkv")?,
                    head_dim: get_u64(map, "hd")?,
                    qlens,
                    kvlens,
                    causal: map.get("causal").and_then(Value::as_bool).unwrap_or(false),
                    variant,
                }
            }
            KernelCategory::RmsNorm => KernelParams::RmsNorm {
                seq: get_u64(map, "seq")?,
                dim: get_u64(map, "dim")?,
            },
            KernelCategory::SiluMul => KernelParams::SiluMul {
                seq: get_u64(map, "seq")?,
                dim: get_u64(map, "dim")?,
            },
            KernelCategory::FusedMoe => {
                let histogram = match map.get("histogram") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(
                        serde_json::from_value::<Vec<u64>>(v.clone())
                            .map_err(|e| Error::validation(format!("bad expert histogram: {e}")))?,
                    ),
                };
                KernelParams::FusedMoe {
                    m: get_u64(map, "M")?,
                    experts: get_u64(map, "E")?,
                    topk: get_u64(map, "topk")?,
                    hidden: get_u64(map, "H")?,
                    n: get_u64(map, "N")?,
                    histogram,
                }
            }
        };
        params.validate()?;
        Ok(params)
    }

    /// Inverse of [`KernelParams::from_json_map`].
    pub fn to_json_map(&self) -> Map<String, Value> {
        let mut map = Map::new();
        let mut put = |k: &str, v: u64| {
            map.insert(k.to_string(), Value::from(v));
        };
        match self {
            KernelParams::Gemm { m, n, k } | KernelParams::ScaledMm { m, n, k } => {
                put("M", *m);
                put("N", *n);
                put("K", *k);
            }
            KernelParams::Attention {
                num_heads,
                num_kv_heads,
                head_dim,
                qlens,
                kvlens,
                causal,
                variant,
            } => {
                put("nh", *num_heads);
                put("nkv", *num_kv_heads);
                put("hd", *head_dim);
                map.insert("qlen".into(), Value::from(qlens.clone()));
                map.insert("kvlen".into(), Value::from(kvlens.clone()));
                map.insert("causal".into(), Value::from(*causal));
                map.insert("variant".into(), serde_json::to_value(variant).unwrap());
            }
            KernelParams::RmsNorm { seq, dim } | KernelParams::SiluMul { seq, dim } => {
                put("seq", *seq);
                put("dim", *dim);
            }
            KernelParams::FusedMoe {
                m,
                experts,
                topk,
                hidden,
                n,
                histogram,
            } => {
                put("M", *m);
                put("E", *experts);
                put("topk", *topk);
                put("H", *hidden);
                put("N", *n);
                if let Some(hist) = histogram {
                    map.insert("histogram".into(), Value::from(hist.clone()));
                }
            }
        }
        map
    }
}

fn get_u64(map: &Map<String, Value>, key: &str) -> Result<u64> {
    map.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::validation(format!("params missing integer field '{key}'")))
}

/// A length field that is either a scalar (shared by all sequences) or a list.
fn get_len_list(map: &Map<String, Value>, key: &str) -> Result<Vec<u64>> {
    match map.get(key) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| Error::validation(format!("'{key}' list holds a non-integer")))
            })
            .collect(),
        Some(v) => {
            let scalar = v
                .as_u64()
                .ok_or_else(|| Error::validation(format!("'{key}' must be an integer or list")))?;
            let bs = map.get("bs").and_then(Value::as_u64).unwrap_or(1);
            Ok(vec![scalar; bs as usize])
        }
        None => Err(Error::validation(format!("params missing field '{key}'"))),
    }
}

/// Execution pipelines a task can issue work to. The order here is the canonical
/// feature order everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Tensor,
    Fma,
    Xu,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Tensor, Pipeline::Fma, Pipeline::Xu];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::Tensor => "tensor",
            Pipeline::Fma => "fma",
            Pipeline::Xu => "xu",
        }
    }
}

/// Per-pipeline op counts of one task. Zero means the task does not touch the
/// pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ops {
    pub tensor: u64,
    pub fma: u64,
    pub xu: u64,
}

impl Ops {
    pub fn get(&self, p: Pipeline) -> u64 {
        match p {
            Pipeline::Tensor => self.tensor,
            Pipeline::Fma => self.fma,
            Pipeline::Xu => self.xu,
        }
    }
}

/// CTA resource footprint, used for the occupancy ceiling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub smem_bytes: u64,
    pub regs_per_thread: u32,
    pub warps: u32,
}

/// Tile extents a task covers; which variant applies depends on the category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDims {
    /// Output tile of a matmul-shaped kernel (extents after edge clamping).
    Tile { m: u64, n: u64, k: u64 },
    /// One query block of an attention head.
    QBlock { q_rows: u64, kv_eff: u64 },
    /// Row span of a row-wise kernel.
    Rows { rows: u64 },
}

/// One schedulable unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: u32,
    pub dims: TaskDims,
    /// MAC multiplier of the dominant-pipeline op count, when the category has
    /// one (2 for matmul families, 4 for attention).
    pub alpha: Option<u32>,
    pub ops: Ops,
    pub load_bytes: u64,
    pub footprint: Footprint,
}

/// How the kernel occupies the GPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionParadigm {
    /// One CTA per task; the hardware scheduler places CTAs.
    ConventionalCta,
    /// A fixed set of persistent workers consumes the task list.
    Persistent,
}

/// The decomposition of one kernel invocation.
#[derive(Debug, Clone)]
pub struct TaskSet {
    pub category: KernelCategory,
    pub precision: Precision,
    pub tasks: Vec<Task>,
    pub execution_paradigm: ExecutionParadigm,
    pub policy: SchedulePolicy,
    /// Concurrent CTAs one SM can hold for this kernel's footprint.
    pub occupancy_limit: u32,
    pub warnings: Vec<String>,
}

impl TaskSet {
    pub fn total_ops(&self, p: Pipeline) -> u64 {
        self.tasks.iter().map(|t| t.ops.get(p)).sum()
    }

    pub fn total_load_bytes(&self) -> u64 {
        self.tasks.iter().map(|t| t.load_bytes).sum()
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

fn round_up(a: u64, b: u64) -> u64 {
    ceil_div(a, b) * b
}

/// Concurrent-CTA ceiling for one task footprint on one GPU: the tightest of the
/// shared-memory, register-file, warp-slot, and CTA-count quotas. A footprint too
/// large for even one CTA clamps to 1 (the launch would still run, serially) and
/// flags it.
pub fn occupancy_limit(fp: &Footprint, spec: &HardwareSpec) -> (u32, bool) {
    let mut limit = spec.max_ctas_per_sm as u64;
    if fp.smem_bytes > 0 {
        let smem_budget = (spec.smem_size_per_sm_kib * 1024.0) as u64;
        limit = limit.min(smem_budget / fp.smem_bytes);
    }
    if fp.regs_per_thread > 0 && fp.warps > 0 {
        let reg_budget = (spec.regfile_size_per_sm_kib * 1024.0) as u64;
        let regs_per_cta = fp.regs_per_thread as u64 * 32 * fp.warps as u64;
        limit = limit.min(reg_budget / regs_per_cta);
    }
    if fp.warps > 0 {
        limit = limit.min(spec.max_warps_per_sm as u64 / fp.warps as u64);
    }
    if limit == 0 {
        (1, true)
    } else {
        (limit as u32, false)
    }
}

/// Decompose one kernel invocation into its task set for `spec`, using the tile
/// geometry `tiling` prescribes for this category/precision/architecture.
pub fn decompose(
    params: &KernelParams,
    precision: Precision,
    spec: &HardwareSpec,
    tiling: &TilingTable,
) -> Result<TaskSet> {
    params.validate()?;
    let category = params.category();
    let entry = tiling.lookup(category, precision, spec.compute_capability)?;
    let bpe = precision.bytes_per_element();

    let mut tasks = Vec::new();
    match params {
        KernelParams::Gemm { m, n, k } => {
            matmul_tasks(&mut tasks, *m, *n, *k, entry, bpe, false);
        }
        KernelParams::ScaledMm { m, n, k } => {
            matmul_tasks(&mut tasks, *m, *n, *k, entry, bpe, true);
        }
        KernelParams::Attention {
            num_heads,
            num_kv_heads,
            head_dim,
            qlens,
            kvlens,
            causal,
            ..
        } => {
            attention_tasks(
                &mut tasks,
                *num_heads,
                *num_kv_heads,
                *head_dim,
                qlens,
                kvlens,
                *causal,
                entry,
                bpe,
            )?;
        }
        KernelParams::RmsNorm { seq, dim } => {
            let fp = entry_footprint(entry);
            for _ in 0..*seq {
                push_task(
                    &mut tasks,
                    TaskDims::Rows { rows: 1 },
                    None,
                    Ops {
                        tensor: 0,
                        fma: 3 * dim,
                        xu: 1,
                    },
                    2 * dim * bpe,
                    fp,
                )?;
            }
        }
        KernelParams::SiluMul { seq, dim } => {
            let fp = entry_footprint(entry);
            let rb = entry.row_block as u64;
            let mut row = 0;
            while row < *seq {
                let rows = rb.min(*seq - row);
                push_task(
                    &mut tasks,
                    TaskDims::Rows { rows },
                    None,
                    Ops {
                        tensor: 0,
                        fma: 4 * dim * rows,
                        xu: dim * rows,
                    },
                    2 * dim * rows * bpe,
                    fp,
                )?;
                row += rows;
            }
        }
        KernelParams::FusedMoe {
            m,
            experts,
            topk,
            hidden,
            n,
            histogram,
        } => {
            let per_expert = expert_token_counts(*m, *experts, *topk, histogram.as_deref());
            for tokens in per_expert {
                if tokens == 0 {
                    continue;
                }
                matmul_tasks(&mut tasks, tokens, *n, *hidden, entry, bpe, false);
            }
        }
    }

    if tasks.is_empty() {
        return Err(Error::validation(format!(
            "{category} invocation decomposed to zero tasks"
        )));
    }

    let mut warnings = Vec::new();
    let (occ, clamped) = occupancy_limit(&tasks[0].footprint, spec);
    if clamped {
        warnings.push(format!(
            "{}: task footprint exceeds one SM's resources; occupancy clamped to 1",
            spec.name
        ));
    }

    let (paradigm, policy) = resolve_policy(params, entry);
    Ok(TaskSet {
        category,
        precision,
        tasks,
        execution_paradigm: paradigm,
        policy,
        occupancy_limit: occ,
        warnings,
    })
}

/// The scheduling regime comes from the tiling entry, except for attention where
/// the requested kernel generation decides: FA2 launches conventional CTAs, FA3
/// is a persistent kernel feeding workers from a cost min-heap.
fn resolve_policy(params: &KernelParams, entry: &TileConfig) -> (ExecutionParadigm, SchedulePolicy) {
    if let KernelParams::Attention { variant, .. } = params {
        return match variant {
            AttentionVariant::Fa2 => (ExecutionParadigm::ConventionalCta, SchedulePolicy::RoundRobin),
            AttentionVariant::Fa3 => (ExecutionParadigm::Persistent, SchedulePolicy::MinHeap),
        };
    }
    match entry.paradigm {
        Paradigm::Conventional => (ExecutionParadigm::ConventionalCta, SchedulePolicy::RoundRobin),
        Paradigm::PersistentStriped => (ExecutionParadigm::Persistent, SchedulePolicy::Striped),
        Paradigm::PersistentMinHeap => (ExecutionParadigm::Persistent, SchedulePolicy::MinHeap),
    }
}

fn entry_footprint(entry: &TileConfig) -> Footprint {
    Footprint {
        smem_bytes: entry.smem_bytes,
        regs_per_thread: entry.regs_per_thread,
        warps: entry.warps,
    }
}

fn push_task(
    tasks: &mut Vec<Task>,
    dims: TaskDims,
    alpha: Option<u32>,
    ops: Ops,
    load_bytes: u64,
    footprint: Footprint,
) -> Result<()> {
    let id = u32::try_from(tasks.len())
        .map_err(|_| Error::validation("decomposition exceeds the task-count limit"))?;
    tasks.push(Task {
        id,
        dims,
        alpha,
        ops,
        load_bytes,
        footprint,
    });
    Ok(())
}

/// Tile an (m x n) output over (tile_m x tile_n) tiles, row-major, each task
/// covering the full K extent. Edge tiles clamp their extents; a `padded` tiling
/// keeps full-tile tensor op counts at the edges (loads always use real extents).
/// `scaled` adds the per-element dequantization FMA and the fp32 scale loads.
fn matmul_tasks(
    tasks: &mut Vec<Task>,
    m: u64,
    n: u64,
    k: u64,
    entry: &TileConfig,
    bpe: u64,
    scaled: bool,
) {
    let tm = entry.tile_m as u64;
    let tn = entry.tile_n as u64;
    let fp = entry_footprint(entry);
    for im in 0..ceil_div(m, tm) {
        let m_eff = tm.min(m - im * tm);
        for jn in 0..ceil_div(n, tn) {
            let n_eff = tn.min(n - jn * tn);
            let (m_op, n_op) = if entry.padded { (tm, tn) } else { (m_eff, n_eff) };
            let mut ops = Ops {
                tensor: 2 * m_op * n_op * k,
                fma: 0,
                xu: 0,
            };
            let mut load = (m_eff + n_eff) * k * bpe;
            if scaled {
                ops.fma = m_eff * n_eff;
                load += (m_eff + n_eff) * SCALE_BYTES;
            }
            // push_task can only fail past u32::MAX tasks; tile counts cannot
            // reach that for any accepted problem shape.
            push_task(
                tasks,
                TaskDims::Tile {
                    m: m_eff,
                    n: n_eff,
                    k,
                },
                Some(2),
                ops,
                load,
                fp,
            )
            .expect("tile count overflow");
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_tasks(
    tasks: &mut Vec<Task>,
    num_heads: u64,
    num_kv_heads: u64,
    head_dim: u64,
    qlens: &[u64],
    kvlens: &[u64],
    causal: bool,
    entry: &TileConfig,
    bpe: u64,
) -> Result<()> {
    let qb = entry.q_block()? as u64;
    let kvb = entry.kv_block()? as u64;
    let fp = entry_footprint(entry);
    // Query heads sharing one KV head also share its K/V tiles, so each task
    // carries 1/group of the K/V bytes to keep the total counted once per group.
    let group = num_heads / num_kv_heads;
    for (qlen, kvlen) in qlens.iter().zip(kvlens) {
        for _head in 0..num_heads {
            for block in 0..ceil_div(*qlen, qb) {
                let qs = block * qb;
                let qe = (qs + qb).min(*qlen);
                let q_rows = qe - qs;
                let kv_eff = if causal {
                    // Rows in this block attend to at most kvlen - qlen + qe
                    // keys; the kernel walks KV in whole blocks.
                    round_up((*kvlen).min(kvlen - qlen + qe), kvb)
                } else {
                    *kvlen
                };
                let ops = Ops {
                    tensor: 4 * q_rows * kv_eff * head_dim,
                    fma: 0,
                    xu: q_rows * kv_eff,
                };
                let load = q_rows * head_dim * bpe + 2 * kv_eff * head_dim * bpe / group;
                push_task(
                    tasks,
                    TaskDims::QBlock { q_rows, kv_eff },
                    Some(4),
                    ops,
                    load,
                    fp,
                )?;
            }
        }
    }
    Ok(())
}

/// Tokens each expert processes: the routing histogram when given, otherwise a
/// balanced split of M*topk with the remainder spread over the first experts.
fn expert_token_counts(m: u64, experts: u64, topk: u64, histogram: Option<&[u64]>) -> Vec<u64> {
    if let Some(hist) = histogram {
        return hist.to_vec();
    }
    let total = m * topk;
    let base = total / experts;
    let rem = total % experts;
    (0..experts)
        .map(|e| if e < rem { base + 1 } else { base })
        .collect()
}
