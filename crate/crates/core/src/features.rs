//! Demand features: condense a scheduled task set into the per-pipeline and
//! memory pressure numbers the efficiency model consumes, plus the roofline
//! lower bound on execution time.
//!
//! All cycle figures are SM-clock cycles. "GPU-level" cycles divide work across
//! every SM at full throughput (perfect balance); "max-SM" figures take the
//! busiest SM after scheduling and price it at a single SM's throughput (or a
//! 1/N share of a chip-wide bandwidth), exposing imbalance to the model.

use serde::{Deserialize, Serialize};

use crate::decompose::{KernelCategory, Pipeline, Task, TaskSet};
use crate::error::{Error, Result};
use crate::hwspec::{HardwareSpec, Precision};
use crate::schedule::{self, TaskDistribution};

/// Pipelines whose demand is informative for a category. Matmul-shaped kernels
/// are tensor-only (dequantization FMA rides along in task cost but carries no
/// signal of its own); attention adds the transcendental softmax work; the
/// row-wise kernels split between FMA and XU.
pub fn pipeline_set(category: KernelCategory) -> &'static [Pipeline] {
    match category {
        KernelCategory::Gemm | KernelCategory::ScaledMm | KernelCategory::FusedMoe => {
            &[Pipeline::Tensor]
        }
        KernelCategory::Attention => &[Pipeline::Tensor, Pipeline::Xu],
        KernelCategory::RmsNorm | KernelCategory::SiluMul => &[Pipeline::Fma, Pipeline::Xu],
    }
}

/// Per-SM pipeline throughputs (ops/cycle) resolved for one precision. Tensor
/// throughput is precision-dependent and absent when the category never issues
/// tensor ops.
#[derive(Debug, Clone, Copy)]
pub struct Throughputs {
    pub tensor: Option<f64>,
    pub fma: f64,
    pub xu: f64,
}

impl Throughputs {
    pub fn resolve(spec: &HardwareSpec, precision: Precision, need_tensor: bool) -> Result<Self> {
        let tensor = if need_tensor {
            Some(spec.tensor_throughput_for(precision)?)
        } else {
            None
        };
        Ok(Throughputs {
            tensor,
            fma: spec.fma_throughput,
            xu: spec.xu_throughput,
        })
    }

    pub fn get(&self, p: Pipeline) -> Result<f64> {
        match p {
            Pipeline::Tensor => self
                .tensor
                .ok_or_else(|| Error::internal("tensor throughput was not resolved")),
            Pipeline::Fma => Ok(self.fma),
            Pipeline::Xu => Ok(self.xu),
        }
    }
}

/// Cycles one SM needs for a task's ops on one pipeline.
pub fn task_cycles(task: &Task, th: &Throughputs, p: Pipeline) -> Result<f64> {
    let ops = task.ops.get(p);
    if ops == 0 {
        return Ok(0.0);
    }
    Ok(ops as f64 / th.get(p)?)
}

/// Busy-cycle estimate of a task: its slowest pipeline, including the pass of
/// its operand bytes through shared memory. This is the cost the schedulers
/// balance.
pub fn task_busy_cycles(task: &Task, th: &Throughputs, spec: &HardwareSpec) -> Result<f64> {
    let mut busy = task.load_bytes as f64 / spec.smem_bw_bytes_per_cycle_per_sm;
    for p in Pipeline::ALL {
        busy = busy.max(task_cycles(task, th, p)?);
    }
    Ok(busy)
}

/// Demand of one pipeline, GPU-level and busiest-SM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineFeatures {
    /// Ops summed over every task.
    pub total_ops: f64,
    /// `total_ops` spread over all SMs at full throughput.
    pub total_cycles: f64,
    /// Ops landing on the busiest SM for this pipeline.
    pub max_sm_ops: f64,
    /// `max_sm_ops` at one SM's throughput.
    pub max_sm_cycles: f64,
}

/// Memory-subsystem demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MioFeatures {
    pub total_bytes: f64,
    /// All bytes through global memory at chip bandwidth.
    pub cycles_global_gpu: f64,
    /// All bytes through L2 at chip bandwidth.
    pub cycles_l2_gpu: f64,
    /// Bytes landing on the busiest SM.
    pub max_sm_bytes: f64,
    /// Busiest SM's bytes at a 1/N share of global bandwidth.
    pub cycles_global_max_sm: f64,
    /// Busiest SM's bytes at a 1/N share of L2 bandwidth.
    pub cycles_l2_max_sm: f64,
    /// Busiest SM's bytes through its own shared memory.
    pub cycles_shared_max_sm: f64,
}

const MIO_NAMES: [&str; 7] = [
    "mio_total_bytes",
    "mio_cycles_global_gpu",
    "mio_cycles_l2_gpu",
    "mio_max_sm_bytes",
    "mio_cycles_global_max_sm",
    "mio_cycles_l2_max_sm",
    "mio_cycles_shared_max_sm",
];

/// The feature vector of one kernel invocation on one GPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub category: KernelCategory,
    /// One block per pipeline in the category's set, in canonical order.
    pub pipelines: Vec<(Pipeline, PipelineFeatures)>,
    pub mio: MioFeatures,
    /// Roofline bound: the binding GPU-level demand, in microseconds.
    pub theoretical_time_us: f64,
}

impl FeatureVector {
    /// Flat numeric vector in layout order; the model input.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::width(self.category));
        for (_, p) in &self.pipelines {
            out.extend_from_slice(&[p.total_ops, p.total_cycles, p.max_sm_ops, p.max_sm_cycles]);
        }
        let m = &self.mio;
        out.extend_from_slice(&[
            m.total_bytes,
            m.cycles_global_gpu,
            m.cycles_l2_gpu,
            m.max_sm_bytes,
            m.cycles_global_max_sm,
            m.cycles_l2_max_sm,
            m.cycles_shared_max_sm,
        ]);
        out
    }

    /// Column names matching [`FeatureVector::flatten`].
    pub fn names(category: KernelCategory) -> Vec<String> {
        let mut out = Vec::with_capacity(Self::width(category));
        for p in pipeline_set(category) {
            for suffix in ["total_ops", "total_cycles", "max_sm_ops", "max_sm_cycles"] {
                out.push(format!("{}_{suffix}", p.as_str()));
            }
        }
        out.extend(MIO_NAMES.iter().map(|s| s.to_string()));
        out
    }

    /// Flat vector length for a category.
    pub fn width(category: KernelCategory) -> usize {
        pipeline_set(category).len() * 4 + MIO_NAMES.len()
    }
}

/// A scheduled, summarized kernel invocation.
#[derive(Debug, Clone)]
pub struct KernelAnalysis {
    pub features: FeatureVector,
    pub distribution: TaskDistribution,
    /// Busiest over mean per-SM busy cycles.
    pub imbalance_ratio: f64,
}

/// Schedule a task set on `spec` and summarize the result.
pub fn analyze(ts: &TaskSet, spec: &HardwareSpec) -> Result<KernelAnalysis> {
    let set = pipeline_set(ts.category);
    let th = Throughputs::resolve(spec, ts.precision, set.contains(&Pipeline::Tensor))?;

    let mut costs = Vec::with_capacity(ts.tasks.len());
    for task in &ts.tasks {
        costs.push(task_busy_cycles(task, &th, spec)?);
    }
    let distribution = schedule::schedule(ts, &costs, spec.num_sms)?;
    distribution.validate_partition(ts.tasks.len())?;
    let imbalance_ratio = distribution.imbalance_ratio(&costs);

    let n_sm = spec.num_sms as f64;
    let mut pipelines = Vec::with_capacity(set.len());
    for &p in set {
        let th_p = th.get(p)?;
        let total_ops = ts.total_ops(p) as f64;
        let max_sm_ops = distribution
            .assignments
            .iter()
            .map(|tasks| tasks.iter().map(|&t| ts.tasks[t as usize].ops.get(p)).sum::<u64>())
            .max()
            .unwrap_or(0) as f64;
        pipelines.push((
            p,
            PipelineFeatures {
                total_ops,
                total_cycles: total_ops / (n_sm * th_p),
                max_sm_ops,
                max_sm_cycles: max_sm_ops / th_p,
            },
        ));
    }

    let total_bytes = ts.total_load_bytes() as f64;
    let max_sm_bytes = distribution
        .assignments
        .iter()
        .map(|tasks| tasks.iter().map(|&t| ts.tasks[t as usize].load_bytes).sum::<u64>())
        .max()
        .unwrap_or(0) as f64;
    let mio = MioFeatures {
        total_bytes,
        cycles_global_gpu: spec.bytes_to_cycles(total_bytes, spec.global_mem_bw_gbps),
        cycles_l2_gpu: spec.bytes_to_cycles(total_bytes, spec.l2_bw_gbps),
        max_sm_bytes,
        cycles_global_max_sm: spec.bytes_to_cycles(max_sm_bytes, spec.global_mem_bw_gbps / n_sm),
        cycles_l2_max_sm: spec.bytes_to_cycles(max_sm_bytes, spec.l2_bw_gbps / n_sm),
        cycles_shared_max_sm: max_sm_bytes / spec.smem_bw_bytes_per_cycle_per_sm,
    };

    // The roofline: the kernel can finish no faster than its most demanded
    // GPU-level resource allows.
    let mut roof_cycles = mio.cycles_global_gpu.max(mio.cycles_l2_gpu);
    for (_, p) in &pipelines {
        roof_cycles = roof_cycles.max(p.total_cycles);
    }
    let features = FeatureVector {
        category: ts.category,
        pipelines,
        mio,
        theoretical_time_us: spec.cycles_to_us(roof_cycles),
    };
    Ok(KernelAnalysis {
        features,
        distribution,
        imbalance_ratio,
    })
}
