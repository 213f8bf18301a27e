//! Shared fixtures and independent reference implementations the integration
//! suites check the library against. Everything here re-derives expected
//! behavior from first principles — literal loop nests, linear scans, finite
//! differences — rather than calling back into the code under test.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use synperf::decompose::KernelParams;
use synperf::hwspec::{HardwareSpec, Precision};
use synperf::nn::{Loss, Matrix, MlpModel};

// ---------------------------------------------------------------------------
// Hardware fixtures
// ---------------------------------------------------------------------------

/// A deliberately flat single-SM spec: every throughput and bandwidth term is
/// a round number, so expected cycle counts can be computed by hand.
pub fn flat_spec() -> HardwareSpec {
    let mut tensor = BTreeMap::new();
    tensor.insert(Precision::Bf16, 1000.0);
    tensor.insert(Precision::Fp16, 1000.0);
    tensor.insert(Precision::Fp8, 2000.0);
    HardwareSpec {
        name: "flat".into(),
        compute_capability: 8.0,
        num_sms: 1,
        sm_clock_mhz: 1000.0,
        tensor_throughput: tensor,
        fma_throughput: 100.0,
        xu_throughput: 10.0,
        global_mem_bw_gbps: 1000.0,
        l2_bw_gbps: 2000.0,
        smem_bw_bytes_per_cycle_per_sm: 128.0,
        smem_size_per_sm_kib: 164.0,
        regfile_size_per_sm_kib: 256.0,
        max_warps_per_sm: 64,
        max_ctas_per_sm: 32,
    }
}

/// Three virtual platforms with distinct balances of compute and bandwidth.
/// Their response to load is defined by a synthetic profile at data-generation
/// time, never visible to the estimator.
pub fn virtual_fleet() -> Vec<HardwareSpec> {
    let mk = |name: &str, cc: f64, sms: u32, clock: f64, tc: f64, bw: f64, l2: f64| {
        let mut tensor = BTreeMap::new();
        tensor.insert(Precision::Bf16, tc);
        tensor.insert(Precision::Fp16, tc);
        HardwareSpec {
            name: name.into(),
            compute_capability: cc,
            num_sms: sms,
            sm_clock_mhz: clock,
            tensor_throughput: tensor,
            fma_throughput: 128.0,
            xu_throughput: 16.0,
            global_mem_bw_gbps: bw,
            l2_bw_gbps: l2,
            smem_bw_bytes_per_cycle_per_sm: 128.0,
            smem_size_per_sm_kib: 164.0,
            regfile_size_per_sm_kib: 256.0,
            max_warps_per_sm: 64,
            max_ctas_per_sm: 32,
        }
    };
    vec![
        mk("vgpu-a", 8.0, 64, 1500.0, 1024.0, 1600.0, 4000.0),
        mk("vgpu-b", 8.0, 108, 1410.0, 2048.0, 2039.0, 5120.0),
        mk("vgpu-c", 9.0, 132, 1830.0, 4096.0, 3352.0, 8000.0),
    ]
}

// ---------------------------------------------------------------------------
// Brute-force op counts: literal loop nests over the mathematical definition
// of each kernel, units of work counted one at a time.
// ---------------------------------------------------------------------------

/// C[i,j] += A[i,l] * B[l,j]: one multiply and one add per (i, j, l).
pub fn brute_gemm_tensor_ops(m: u64, n: u64, k: u64) -> u64 {
    let mut ops = 0u64;
    for _i in 0..m {
        for _j in 0..n {
            for _l in 0..k {
                ops += 2;
            }
        }
    }
    ops
}

/// The matmul plus one dequantization multiply-add per output element.
pub fn brute_scaled_mm_ops(m: u64, n: u64, k: u64) -> (u64, u64) {
    let tensor = brute_gemm_tensor_ops(m, n, k);
    let mut fma = 0u64;
    for _i in 0..m {
        for _j in 0..n {
            fma += 1;
        }
    }
    (tensor, fma)
}

/// Walk the attention matrix row by row. A causal row `i` (0-based) of a
/// sequence attends to `kvlen - qlen + i + 1` keys; each visited (query, key)
/// pair costs `4 * head_dim` tensor ops (QK^T and PV, two ops per MAC) and one
/// transcendental for the softmax term.
pub fn brute_attention_ops(
    num_heads: u64,
    head_dim: u64,
    qlens: &[u64],
    kvlens: &[u64],
    causal: bool,
) -> (u64, u64) {
    let mut tensor = 0u64;
    let mut xu = 0u64;
    for (&qlen, &kvlen) in qlens.iter().zip(kvlens) {
        for _head in 0..num_heads {
            for i in 0..qlen {
                let visible = if causal {
                    kvlen.min(kvlen - qlen + i + 1)
                } else {
                    kvlen
                };
                for _j in 0..visible {
                    tensor += 4 * head_dim;
                    xu += 1;
                }
            }
        }
    }
    (tensor, xu)
}

/// Upper bound on how far block-granular causal attention can overcount the
/// row-exact loop above. Within a query block of `r` rows every row is charged
/// the block's last-row KV extent rounded up to whole KV blocks: at most
/// `kv_block - 1` extra keys from rounding plus the row's distance to the end
/// of the block. Summed per block that is `r*(kv_block-1) + r*(r-1)/2` pairs.
pub fn attention_causal_slack(
    num_heads: u64,
    head_dim: u64,
    qlens: &[u64],
    q_block: u64,
    kv_block: u64,
) -> (u64, u64) {
    let mut pairs = 0u64;
    for &qlen in qlens {
        let mut qs = 0;
        while qs < qlen {
            let r = q_block.min(qlen - qs);
            pairs += r * (kv_block - 1) + r * (r - 1) / 2;
            qs += r;
        }
    }
    pairs *= num_heads;
    (4 * head_dim * pairs, pairs)
}

/// Per row: one multiply, one accumulate, and one scaled write per element
/// (3 FMA-pipe ops each), plus a single rsqrt.
pub fn brute_rmsnorm_ops(seq: u64, dim: u64) -> (u64, u64) {
    let mut fma = 0u64;
    let mut xu = 0u64;
    for _row in 0..seq {
        for _d in 0..dim {
            fma += 3;
        }
        xu += 1;
    }
    (fma, xu)
}

/// Per element: the SiLU dataflow costs four FMA-pipe ops and one exponential.
pub fn brute_silu_mul_ops(seq: u64, dim: u64) -> (u64, u64) {
    let mut fma = 0u64;
    let mut xu = 0u64;
    for _row in 0..seq {
        for _d in 0..dim {
            fma += 4;
            xu += 1;
        }
    }
    (fma, xu)
}

/// Balanced routing: `m * topk` token slots split evenly, the first experts
/// absorbing the remainder.
pub fn balanced_expert_tokens(m: u64, experts: u64, topk: u64) -> Vec<u64> {
    let total = m * topk;
    let base = total / experts;
    let rem = total % experts;
    (0..experts)
        .map(|e| if e < rem { base + 1 } else { base })
        .collect()
}

/// Each expert runs a (tokens x n x hidden) matmul over its routed tokens.
pub fn brute_moe_tensor_ops(
    m: u64,
    experts: u64,
    topk: u64,
    hidden: u64,
    n: u64,
    histogram: Option<&[u64]>,
) -> u64 {
    let per_expert = match histogram {
        Some(h) => h.to_vec(),
        None => balanced_expert_tokens(m, experts, topk),
    };
    let mut ops = 0u64;
    for tokens in per_expert {
        ops += brute_gemm_tensor_ops(tokens, n, hidden);
    }
    ops
}

// ---------------------------------------------------------------------------
// Scheduling references: plain linear scans instead of heaps.
// ---------------------------------------------------------------------------

/// Index of the least-loaded slot, first (lowest) index on ties.
fn argmin(loads: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in loads.iter().enumerate().skip(1) {
        if l < loads[best] {
            best = i;
        }
    }
    best
}

/// Conventional CTA placement: one full wave dealt cyclically, then each task
/// to the least-busy SM.
pub fn reference_round_robin(costs: &[f64], num_sms: u32, occupancy: u32) -> Vec<Vec<u32>> {
    let n = num_sms as usize;
    let mut assignments = vec![Vec::new(); n];
    let mut loads = vec![0.0f64; n];
    let dealt = (occupancy.max(1) as usize * n).min(costs.len());
    for i in 0..dealt {
        assignments[i % n].push(i as u32);
        loads[i % n] += costs[i];
    }
    for i in dealt..costs.len() {
        let sm = argmin(&loads);
        assignments[sm].push(i as u32);
        loads[sm] += costs[i];
    }
    assignments
}

/// Persistent workers, worker `w` pinned to SM `w mod N`, each task to the
/// least-busy worker.
pub fn reference_min_heap(costs: &[f64], num_sms: u32, workers_per_sm: u32) -> Vec<Vec<u32>> {
    let n = num_sms as usize;
    let workers = (n * workers_per_sm as usize).min(costs.len().max(1));
    let mut assignments = vec![Vec::new(); n];
    let mut loads = vec![0.0f64; workers];
    for (i, &cost) in costs.iter().enumerate() {
        let w = argmin(&loads);
        assignments[w % n].push(i as u32);
        loads[w] += cost;
    }
    assignments
}

pub fn reference_striped(num_tasks: usize, num_sms: u32) -> Vec<Vec<u32>> {
    let n = num_sms as usize;
    let mut assignments = vec![Vec::new(); n];
    for i in 0..num_tasks {
        assignments[i % n].push(i as u32);
    }
    assignments
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Worst relative disagreement between the model's analytic gradient and a
/// central finite difference, over every parameter. The RNG is cloned for
/// each evaluation so dropout draws the same masks every time. An absolute
/// disagreement at or below `abs_floor` passes outright — at that scale the
/// difference is indistinguishable from the O(h^2) truncation of the central
/// difference itself and carries no signal about the analytic gradient.
pub fn max_grad_rel_err(
    model: &mut MlpModel,
    x: &Matrix,
    y: &[f64],
    loss: Loss,
    rng: &ChaCha8Rng,
    h: f64,
    abs_floor: f64,
) -> f64 {
    let analytic = {
        let mut r = rng.clone();
        model.loss_and_grad(x, y, loss, &mut r).1
    };
    let mut worst = 0.0f64;
    for i in 0..model.param_count() {
        let orig = model.get_param(i);
        model.set_param(i, orig + h);
        let up = {
            let mut r = rng.clone();
            model.loss_and_grad(x, y, loss, &mut r).0
        };
        model.set_param(i, orig - h);
        let down = {
            let mut r = rng.clone();
            model.loss_and_grad(x, y, loss, &mut r).0
        };
        model.set_param(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let diff = (analytic[i] - numeric).abs();
        if diff > abs_floor {
            worst = worst.max(diff / analytic[i].abs().max(numeric.abs()));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Random small kernel instances
// ---------------------------------------------------------------------------

/// Draw one small instance of `category` — sized so the brute-force loop
/// nests above stay fast while still crossing tile boundaries.
pub fn small_params(category: synperf::decompose::KernelCategory, rng: &mut ChaCha8Rng) -> KernelParams {
    use synperf::decompose::{AttentionVariant, KernelCategory};
    match category {
        KernelCategory::Gemm => KernelParams::Gemm {
            m: rng.gen_range(1..=300),
            n: rng.gen_range(1..=300),
            k: rng.gen_range(1..=96),
        },
        KernelCategory::ScaledMm => KernelParams::ScaledMm {
            m: rng.gen_range(1..=300),
            n: rng.gen_range(1..=300),
            k: rng.gen_range(1..=96),
        },
        KernelCategory::Attention => {
            let batch = rng.gen_range(1..=3);
            let num_kv_heads = rng.gen_range(1..=2u64);
            let num_heads = num_kv_heads * rng.gen_range(1..=3u64);
            let mut qlens = Vec::new();
            let mut kvlens = Vec::new();
            let causal = rng.gen_bool(0.5);
            for _ in 0..batch {
                let q = rng.gen_range(1..=200u64);
                // A causal query never outruns its keys.
                let kv = if causal {
                    q + rng.gen_range(0..=200u64)
                } else {
                    rng.gen_range(1..=200u64)
                };
                qlens.push(q);
                kvlens.push(kv);
            }
            KernelParams::Attention {
                num_heads,
                num_kv_heads,
                head_dim: rng.gen_range(1..=64),
                qlens,
                kvlens,
                causal,
                variant: if rng.gen_bool(0.5) {
                    AttentionVariant::Fa2
                } else {
                    AttentionVariant::Fa3
                },
            }
        }
        KernelCategory::RmsNorm => KernelParams::RmsNorm {
            seq: rng.gen_range(1..=64),
            dim: rng.gen_range(1..=512),
        },
        KernelCategory::SiluMul => KernelParams::SiluMul {
            seq: rng.gen_range(1..=64),
            dim: rng.gen_range(1..=512),
        },
        KernelCategory::FusedMoe => {
            let m = rng.gen_range(1..=64);
            let experts = rng.gen_range(1..=8u64);
            let topk = rng.gen_range(1..=experts);
            let histogram = if rng.gen_bool(0.5) {
                None
            } else {
                Some(random_histogram(m * topk, experts, rng))
            };
            KernelParams::FusedMoe {
                m,
                experts,
                topk,
                hidden: rng.gen_range(1..=64),
                n: rng.gen_range(1..=128),
                histogram,
            }
        }
    }
}

/// A random expert histogram summing exactly to `total`.
fn random_histogram(total: u64, experts: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut hist = vec![0u64; experts as usize];
    for _ in 0..total {
        hist[rng.gen_range(0..experts) as usize] += 1;
    }
    hist
}
