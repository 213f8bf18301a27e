//! Acceptance suite: one test per release criterion, each printing a
//! `ACCEPTANCE <n> PASS/FAIL` line (visible under `--nocapture`). Tolerances
//! and budgets are pinned as constants next to the criteria they gate.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synperf::datagen::{
    generate_dataset, split_stratified, OracleProfile, ParamRanges, Span, SyntheticOracle,
};
use synperf::decompose::{decompose, KernelCategory, KernelParams, Pipeline};
use synperf::e2e::{
    generate_trace, predict_e2e, CommModel, EstimatorSet, ModelConfig, ParallelConfig, Request,
    TraceOp,
};
use synperf::estimator::{
    gap_report, prepare_samples, Estimator, NormStats, Sample, PERF_GAP_THRESHOLD,
};
use synperf::features::{analyze, FeatureVector};
use synperf::hwspec::{HardwareSpec, Precision, SpecRegistry};
use synperf::nn::{Loss, Matrix, MlpModel, TrainConfig};
use synperf::schedule::{
    schedule_min_heap, schedule_round_robin, schedule_striped, TaskDistribution,
};
use synperf::tiling::TilingTable;

use common::*;

/// Criterion 1: instances per category whose op counts must match brute force.
const OP_CHECK_INSTANCES: usize = 200;
const OP_CHECK_BUDGET: Duration = Duration::from_secs(60);
/// Criterion 2: random task sets scheduled under every policy.
const SCHEDULE_CHECK_SETS: usize = 1000;
/// Criterion 3: relative slack on the ops/cycles identity.
const CYCLES_IDENTITY_REL_TOL: f64 = 1e-12;
/// Criterion 4: gradient agreement. The pinned number is the per-coordinate
/// relative tolerance; the step is then chosen small enough that central
/// differences contribute O(step^2) truncation error well below it.
const GRAD_SEEDS: u64 = 20;
const GRAD_STEP: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_ABS_FLOOR: f64 = 1e-7;
/// Criterion 5: learnability of a hidden response surface.
const LEARN_SAMPLES: usize = 5000;
const LEARN_MAPE_CEILING: f64 = 0.10;
const ROOFLINE_MAPE_FLOOR: f64 = 0.25;
const LEARN_BUDGET: Duration = Duration::from_secs(300);
/// Criterion 6: quantile calibration and gap attribution.
const COVERAGE_LOW: f64 = 0.75;
const COVERAGE_HIGH: f64 = 0.85;
const ATTRIBUTION_FLOOR: f64 = 0.90;
const MIN_FLAGGED: usize = 50;
/// Criterion 7: end-to-end throughput.
const E2E_PREDICT_BUDGET: Duration = Duration::from_secs(10);

fn report(criterion: u32, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion} {}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Decomposed op counts equal brute-force loop nests.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_op_counts_match_brute_force() {
    let started = Instant::now();
    let spec = flat_spec();
    let tiling = TilingTable::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let mut checked = 0usize;

    for category in KernelCategory::ALL {
        let precision = synperf::datagen::default_precision(category);
        for i in 0..OP_CHECK_INSTANCES {
            let params = small_params(category, &mut rng);
            let ts = decompose(&params, precision, &spec, &tiling)
                .unwrap_or_else(|e| panic!("{category} instance {i}: {e}"));
            let got_tensor = ts.total_ops(Pipeline::Tensor);
            let got_fma = ts.total_ops(Pipeline::Fma);
            let got_xu = ts.total_ops(Pipeline::Xu);
            match &params {
                KernelParams::Gemm { m, n, k } => {
                    assert_eq!(got_tensor, brute_gemm_tensor_ops(*m, *n, *k));
                    assert_eq!((got_fma, got_xu), (0, 0));
                }
                KernelParams::ScaledMm { m, n, k } => {
                    let (tensor, fma) = brute_scaled_mm_ops(*m, *n, *k);
                    assert_eq!((got_tensor, got_fma, got_xu), (tensor, fma, 0));
                }
                KernelParams::Attention {
                    num_heads,
                    head_dim,
                    qlens,
                    kvlens,
                    causal,
                    ..
                } => {
                    let (tensor, xu) =
                        brute_attention_ops(*num_heads, *head_dim, qlens, kvlens, *causal);
                    if *causal {
                        // Block-granular masking may overcount, bounded by the
                        // per-block slack; it must never undercount.
                        let entry = tiling
                            .lookup(category, precision, spec.compute_capability)
                            .unwrap();
                        let (slack_t, slack_x) = attention_causal_slack(
                            *num_heads,
                            *head_dim,
                            qlens,
                            entry.q_block().unwrap() as u64,
                            entry.kv_block().unwrap() as u64,
                        );
                        assert!(
                            got_tensor >= tensor && got_tensor <= tensor + slack_t,
                            "causal tensor ops {got_tensor} outside [{tensor}, {}]",
                            tensor + slack_t
                        );
                        assert!(
                            got_xu >= xu && got_xu <= xu + slack_x,
                            "causal xu ops {got_xu} outside [{xu}, {}]",
                            xu + slack_x
                        );
                    } else {
                        assert_eq!((got_tensor, got_xu), (tensor, xu));
                    }
                    assert_eq!(got_fma, 0);
                }
                KernelParams::RmsNorm { seq, dim } => {
                    let (fma, xu) = brute_rmsnorm_ops(*seq, *dim);
                    assert_eq!((got_tensor, got_fma, got_xu), (0, fma, xu));
                }
                KernelParams::SiluMul { seq, dim } => {
                    let (fma, xu) = brute_silu_mul_ops(*seq, *dim);
                    assert_eq!((got_tensor, got_fma, got_xu), (0, fma, xu));
                }
                KernelParams::FusedMoe {
                    m,
                    experts,
                    topk,
                    hidden,
                    n,
                    histogram,
                } => {
                    let tensor =
                        brute_moe_tensor_ops(*m, *experts, *topk, *hidden, *n, histogram.as_deref());
                    assert_eq!((got_tensor, got_fma, got_xu), (tensor, 0, 0));
                }
            }
            checked += 1;
        }
    }

    let elapsed = started.elapsed();
    report(
        1,
        checked == OP_CHECK_INSTANCES * KernelCategory::ALL.len() && elapsed < OP_CHECK_BUDGET,
        &format!("{checked} instances matched brute-force ops in {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// 2. Every schedule is a valid partition and matches a linear-scan reference.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_schedules_partition_all_tasks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
    let mut validated = 0usize;
    for _ in 0..SCHEDULE_CHECK_SETS {
        let num_tasks = rng.gen_range(1..=3000usize);
        let num_sms = rng.gen_range(1..=140u32);
        let costs: Vec<f64> = (0..num_tasks)
            .map(|_| {
                // A few repeated magnitudes so ties actually occur.
                if rng.gen_bool(0.3) {
                    rng.gen_range(1..=4) as f64
                } else {
                    rng.gen_range(1.0..1e4)
                }
            })
            .collect();
        let occupancy = rng.gen_range(1..=8u32);
        let workers = rng.gen_range(1..=4u32);

        let check = |dist: &TaskDistribution, reference: Vec<Vec<u32>>, what: &str| {
            dist.validate_partition(num_tasks)
                .unwrap_or_else(|e| panic!("{what}: {e}"));
            assert_eq!(
                dist.assignments, reference,
                "{what} diverged from the linear-scan reference"
            );
        };
        check(
            &schedule_round_robin(&costs, num_sms, occupancy).unwrap(),
            reference_round_robin(&costs, num_sms, occupancy),
            "round_robin",
        );
        check(
            &schedule_min_heap(&costs, num_sms, workers).unwrap(),
            reference_min_heap(&costs, num_sms, workers),
            "min_heap",
        );
        check(
            &schedule_striped(num_tasks, num_sms).unwrap(),
            reference_striped(num_tasks, num_sms),
            "striped",
        );
        validated += 3;
    }
    report(
        2,
        validated == SCHEDULE_CHECK_SETS * 3,
        &format!("{validated} schedules partitioned and matched the reference"),
    );
}

// ---------------------------------------------------------------------------
// 3. Feature cycles and op totals obey the throughput identity.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_cycles_ops_identity() {
    let tiling = TilingTable::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    let mut checked = 0usize;
    for spec in virtual_fleet() {
        for category in KernelCategory::ALL {
            if category == KernelCategory::ScaledMm {
                // The fleet fixtures model bf16-only platforms.
                continue;
            }
            let precision = synperf::datagen::default_precision(category);
            for _ in 0..40 {
                let params = small_params(category, &mut rng);
                let ts = decompose(&params, precision, &spec, &tiling).unwrap();
                let analysis = analyze(&ts, &spec).unwrap();
                let n = spec.num_sms as f64;
                for (pipeline, feats) in &analysis.features.pipelines {
                    let throughput = match pipeline {
                        Pipeline::Tensor => spec.tensor_throughput_for(precision).unwrap(),
                        Pipeline::Fma => spec.fma_throughput,
                        Pipeline::Xu => spec.xu_throughput,
                    };
                    let back = feats.total_cycles * n * throughput;
                    assert!(
                        (back - feats.total_ops).abs() <= CYCLES_IDENTITY_REL_TOL * feats.total_ops,
                        "{category} {pipeline:?}: cycles*N*throughput {back} != ops {}",
                        feats.total_ops
                    );
                    let slack = 1e-12 * feats.total_ops.max(1.0);
                    assert!(
                        feats.max_sm_ops * n + slack >= feats.total_ops,
                        "busiest SM holds less than an even share of ops"
                    );
                    assert!(
                        feats.max_sm_cycles * n + 1e-12 * feats.total_cycles.max(1.0)
                            >= feats.total_cycles,
                        "busiest SM holds less than an even share of cycles"
                    );
                }
                checked += 1;
            }
        }
    }
    report(
        3,
        checked > 0,
        &format!("throughput identity held at {CYCLES_IDENTITY_REL_TOL:e} over {checked} kernels"),
    );
}

// ---------------------------------------------------------------------------
// 4. Analytic gradients match central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_gradients_match_finite_differences() {
    let mut worst_overall = 0.0f64;
    for seed in 0..GRAD_SEEDS {
        let mut data_rng = ChaCha8Rng::seed_from_u64(0xACCE_0004 ^ seed);
        let batch = 8;
        let width = 7;
        let rows: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..width).map(|_| data_rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows);
        // Targets sit well away from the ~0.5 fresh-model predictions so the
        // piecewise losses are smooth across the finite-difference step.
        let y: Vec<f64> = (0..batch)
            .map(|i| if i % 2 == 0 { 0.15 } else { 0.85 })
            .collect();
        for loss in [Loss::Mape, Loss::Quantile { q: 0.8 }] {
            let mut model = MlpModel::with_layout(&[width, 8, 6, 1], seed);
            let dropout_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 7);
            let err = max_grad_rel_err(
                &mut model,
                &x,
                &y,
                loss,
                &dropout_rng,
                GRAD_STEP,
                GRAD_ABS_FLOOR,
            );
            assert!(
                err < GRAD_REL_TOL,
                "seed {seed} {loss:?}: max relative gradient error {err:e}"
            );
            worst_overall = worst_overall.max(err);
        }
    }
    report(
        4,
        worst_overall < GRAD_REL_TOL,
        &format!(
            "max gradient error {worst_overall:.2e} over {GRAD_SEEDS} seeds, both losses \
             (tolerance {GRAD_REL_TOL:e})"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. The estimator learns a hidden response surface the roofline cannot.
// ---------------------------------------------------------------------------

fn fleet_oracle() -> SyntheticOracle {
    let mut profiles = BTreeMap::new();
    profiles.insert(
        "vgpu-a".to_string(),
        OracleProfile {
            e_max: 0.82,
            ramp_cycles: 3.0e5,
            imbalance_penalty: 0.12,
            interference: 0.25,
            noise_sigma: 0.02,
        },
    );
    profiles.insert(
        "vgpu-b".to_string(),
        OracleProfile {
            e_max: 0.88,
            ramp_cycles: 1.5e5,
            imbalance_penalty: 0.18,
            interference: 0.35,
            noise_sigma: 0.025,
        },
    );
    profiles.insert(
        "vgpu-c".to_string(),
        OracleProfile {
            e_max: 0.76,
            ramp_cycles: 6.0e5,
            imbalance_penalty: 0.10,
            interference: 0.30,
            noise_sigma: 0.02,
        },
    );
    SyntheticOracle { profiles }
}

fn fleet_registry(fleet: &[HardwareSpec]) -> SpecRegistry {
    let mut registry = SpecRegistry::default();
    for spec in fleet {
        registry.insert(spec.clone());
    }
    registry
}

/// Mean absolute percentage error of predicted vs measured latency.
fn latency_mape(est: &Estimator, samples: &[Sample]) -> f64 {
    let mut sum = 0.0;
    for s in samples {
        let eff = est.efficiency_from_raw(&s.features).unwrap();
        let predicted = s.theoretical_time_us / eff;
        let measured = s.theoretical_time_us / s.efficiency;
        sum += (predicted - measured).abs() / measured;
    }
    sum / samples.len() as f64
}

#[test]
fn acceptance_5_learns_hidden_response_surface() {
    let started = Instant::now();
    let fleet = virtual_fleet();
    let fleet_refs: Vec<&HardwareSpec> = fleet.iter().collect();
    let tiling = TilingTable::builtin();
    let oracle = fleet_oracle();
    let per_cell = LEARN_SAMPLES / fleet.len();
    let records = generate_dataset(
        &[KernelCategory::Gemm],
        &fleet_refs,
        per_cell,
        &Default::default(),
        &oracle,
        &tiling,
        51,
    )
    .unwrap();
    let (train_recs, test_recs) = split_stratified(&records, 0.2, 51);

    let registry = fleet_registry(&fleet);
    let (train_labeled, _) =
        prepare_samples(&train_recs, KernelCategory::Gemm, &registry, &tiling).unwrap();
    let (test_labeled, _) =
        prepare_samples(&test_recs, KernelCategory::Gemm, &registry, &tiling).unwrap();
    let train_samples: Vec<Sample> = train_labeled.into_iter().map(|(_, s)| s).collect();
    let test_samples: Vec<Sample> = test_labeled.into_iter().map(|(_, s)| s).collect();

    let cfg = TrainConfig {
        loss: Loss::Mape,
        max_epochs: 120,
        seed: 51,
        ..Default::default()
    };
    let (est, _report) = Estimator::fit(KernelCategory::Gemm, &train_samples, &cfg).unwrap();

    let model_mape = latency_mape(&est, &test_samples);
    // Roofline baseline: predict the theoretical time itself.
    let roofline_mape = test_samples
        .iter()
        .map(|s| {
            let measured = s.theoretical_time_us / s.efficiency;
            (s.theoretical_time_us - measured).abs() / measured
        })
        .sum::<f64>()
        / test_samples.len() as f64;

    let elapsed = started.elapsed();
    report(
        5,
        model_mape < LEARN_MAPE_CEILING
            && roofline_mape > ROOFLINE_MAPE_FLOOR
            && elapsed < LEARN_BUDGET,
        &format!(
            "held-out MAPE {:.1}% (< {:.0}%), roofline {:.1}% (> {:.0}%), {} train / {} test, \
             {elapsed:.1?}",
            model_mape * 100.0,
            LEARN_MAPE_CEILING * 100.0,
            roofline_mape * 100.0,
            ROOFLINE_MAPE_FLOOR * 100.0,
            train_samples.len(),
            test_samples.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Quantile calibration holds and gaps point at the degraded platform.
// ---------------------------------------------------------------------------

/// Fleet response curves for the calibration check. Ramps are matched to the
/// demand range of [`coverage_ranges`] so every platform operates strictly
/// inside its saturation ramp: efficiencies stay clear of the `e_max` ceiling,
/// where clamping makes the noise one-sided and the conditional 80th
/// percentile collapses onto the cap (no predictor can be calibrated against
/// a half-atom). The fleet-health fixture in [`fleet_oracle`] intentionally
/// keeps that ceiling behavior; this one removes it so coverage measures the
/// quantile fit and nothing else.
fn coverage_oracle() -> SyntheticOracle {
    let curve = |e_max, ramp_cycles, noise_sigma| OracleProfile {
        e_max,
        ramp_cycles,
        imbalance_penalty: 0.12,
        interference: 0.3,
        noise_sigma,
    };
    let mut profiles = BTreeMap::new();
    profiles.insert("vgpu-a".to_string(), curve(0.82, 2.0e5, 0.02));
    profiles.insert("vgpu-b".to_string(), curve(0.88, 1.3e5, 0.025));
    profiles.insert("vgpu-c".to_string(), curve(0.76, 1.0e5, 0.02));
    SyntheticOracle { profiles }
}

/// GEMM shapes whose demand lands mid-ramp on every [`coverage_oracle`]
/// platform (base efficiency roughly 0.17..0.73 across the fleet).
fn coverage_ranges() -> ParamRanges {
    ParamRanges {
        gemm_m: Span::new(1280, 2048),
        gemm_n: Span::new(1280, 2048),
        gemm_k: Span::new(1280, 2048),
        ..Default::default()
    }
}

#[test]
fn acceptance_6_quantile_coverage_and_gap_attribution() {
    let fleet = virtual_fleet();
    let fleet_refs: Vec<&HardwareSpec> = fleet.iter().collect();
    let tiling = TilingTable::builtin();
    let registry = fleet_registry(&fleet);
    let healthy = coverage_oracle();
    let ranges = coverage_ranges();

    let train_recs = generate_dataset(
        &[KernelCategory::Gemm],
        &fleet_refs,
        1500,
        &ranges,
        &healthy,
        &tiling,
        61,
    )
    .unwrap();
    let eval_recs = generate_dataset(
        &[KernelCategory::Gemm],
        &fleet_refs,
        600,
        &ranges,
        &healthy,
        &tiling,
        62,
    )
    .unwrap();

    let (train_labeled, _) =
        prepare_samples(&train_recs, KernelCategory::Gemm, &registry, &tiling).unwrap();
    let train_samples: Vec<Sample> = train_labeled.into_iter().map(|(_, s)| s).collect();
    // Quantile regression reaches its calibrated optimum slowly; run the full
    // epoch budget (patience = max_epochs) instead of stopping on a noisy
    // validation pinball plateau, which leaves the bar wherever the last
    // improvement happened to fall.
    let cfg = TrainConfig {
        loss: Loss::Quantile { q: 0.8 },
        max_epochs: 300,
        patience: 300,
        val_fraction: 0.2,
        seed: 61,
        ..Default::default()
    };
    let (est, _) = Estimator::fit(KernelCategory::Gemm, &train_samples, &cfg).unwrap();

    // Coverage: the measured efficiency should fall at or below the 80th
    // percentile bar about 80% of the time on fresh healthy data.
    let (eval_labeled, _) =
        prepare_samples(&eval_recs, KernelCategory::Gemm, &registry, &tiling).unwrap();
    let covered = eval_labeled
        .iter()
        .filter(|(_, s)| s.efficiency <= est.efficiency_from_raw(&s.features).unwrap())
        .count();
    let coverage = covered as f64 / eval_labeled.len() as f64;

    // Degrade one platform and let the gap report find it.
    let mut degraded = healthy.clone();
    degraded.profiles.get_mut("vgpu-c").unwrap().e_max -= 0.2;
    let fleet_recs = generate_dataset(
        &[KernelCategory::Gemm],
        &fleet_refs,
        250,
        &ranges,
        &degraded,
        &tiling,
        63,
    )
    .unwrap();
    let (fleet_labeled, _) =
        prepare_samples(&fleet_recs, KernelCategory::Gemm, &registry, &tiling).unwrap();
    let gaps = gap_report(&est, &fleet_labeled, PERF_GAP_THRESHOLD).unwrap();
    let flagged_total = gaps.total_underperforming();
    let flagged_degraded = gaps
        .rows
        .iter()
        .find(|r| r.hardware == "vgpu-c")
        .map_or(0, |r| r.underperforming);
    let attribution = flagged_degraded as f64 / flagged_total.max(1) as f64;

    report(
        6,
        (COVERAGE_LOW..=COVERAGE_HIGH).contains(&coverage)
            && flagged_total >= MIN_FLAGGED
            && attribution > ATTRIBUTION_FLOOR,
        &format!(
            "coverage {:.1}% (target 80 +/- 5), {flagged_degraded}/{flagged_total} flagged \
             samples on the degraded platform ({:.1}% > {:.0}%)",
            coverage * 100.0,
            attribution * 100.0,
            ATTRIBUTION_FLOOR * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Trace expansion is exact and end-to-end prediction is fast.
// ---------------------------------------------------------------------------

/// Estimators with fresh (untrained) weights: structurally complete, so the
/// pipeline exercises real feature extraction and inference.
fn stub_estimators() -> EstimatorSet {
    let mut set = EstimatorSet::new();
    for category in KernelCategory::ALL {
        let width = FeatureVector::width(category);
        set.insert(Estimator {
            format_version: 1,
            category,
            loss: Loss::Mape,
            seed: 7,
            trained_on: 0,
            norm: NormStats {
                mean: vec![0.0; width],
                std: vec![1.0; width],
            },
            model: MlpModel::new(width, 7),
        });
    }
    set
}

#[test]
fn acceptance_7_trace_counts_additivity_and_throughput() {
    let toy = ModelConfig {
        name: "toy".into(),
        num_layers: 2,
        hidden_size: 1024,
        num_heads: 8,
        num_kv_heads: 2,
        head_dim: 128,
        intermediate_size: 4096,
        vocab_size: 32_768,
        precision: Precision::Bf16,
        moe: None,
    };
    let request = Request {
        prompt_lens: vec![16],
        decode_steps: 0,
    };
    let tp1 = generate_trace(&toy, &ParallelConfig::default(), &request).unwrap();
    let kernels = |t: &[synperf::e2e::TraceEntry]| {
        t.iter()
            .filter(|e| matches!(e.op, TraceOp::Kernel { .. }))
            .count()
    };
    let tp1_ok = tp1.len() == 18 && kernels(&tp1) == 18;
    let tp2 = generate_trace(
        &toy,
        &ParallelConfig {
            tensor_parallel: 2,
            pipeline_parallel: 1,
        },
        &request,
    )
    .unwrap();
    let tp2_ok = tp2.len() == 22 && kernels(&tp2) == 18;

    // The reported total must be the exact ordered sum of its entries.
    let fleet = virtual_fleet();
    let estimators = stub_estimators();
    let comm = CommModel::alpha_beta(&[2, 4], 5.0, 300.0, &[1024, 1 << 20, 1 << 30]);
    let priced = predict_e2e(&tp2, &fleet[1], &TilingTable::builtin(), &estimators, Some(&comm))
        .unwrap();
    let exact_sum: f64 = priced.entries.iter().map(|e| e.latency_us).sum();
    let additive = priced.total_us == exact_sum;

    // A production-sized model over a long decode must price quickly.
    let big = ModelConfig {
        name: "big".into(),
        num_layers: 32,
        hidden_size: 4096,
        num_heads: 32,
        num_kv_heads: 8,
        head_dim: 128,
        intermediate_size: 14336,
        vocab_size: 128_256,
        precision: Precision::Bf16,
        moe: None,
    };
    let long_request = Request {
        prompt_lens: vec![512],
        decode_steps: 100,
    };
    let big_trace = generate_trace(&big, &ParallelConfig::default(), &long_request).unwrap();
    let started = Instant::now();
    let big_priced = predict_e2e(
        &big_trace,
        &fleet[2],
        &TilingTable::builtin(),
        &estimators,
        None,
    )
    .unwrap();
    let elapsed = started.elapsed();
    let fast = elapsed < E2E_PREDICT_BUDGET && big_priced.total_us > 0.0;

    report(
        7,
        tp1_ok && tp2_ok && additive && fast,
        &format!(
            "toy trace {}x1 / {}x2 entries, additive total, {} entries priced in {elapsed:.2?}",
            tp1.len(),
            tp2.len(),
            big_trace.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. The CLI is deterministic: same seed, byte-identical outputs.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_cli_outputs_are_reproducible() {
    use std::fs;
    use std::process::Command;

    let bin = env!("CARGO_BIN_EXE_synperf");
    let root = tempfile::tempdir().unwrap();
    let spec_dir = root.path().join("specs");
    fs::create_dir(&spec_dir).unwrap();
    for spec in virtual_fleet().iter().take(2) {
        fs::write(
            spec_dir.join(format!("{}.json", spec.name)),
            serde_json::to_string_pretty(spec).unwrap(),
        )
        .unwrap();
    }

    // Two independent working directories, identical commands and seeds.
    let run = |dir: &std::path::Path, args: &[&str]| {
        let out = Command::new(bin)
            .current_dir(dir)
            .env("SYNPERF_SPEC_DIR", &spec_dir)
            .args(args)
            .output()
            .expect("spawning the CLI");
        assert!(
            out.status.success(),
            "command {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let dirs = [root.path().join("run1"), root.path().join("run2")];
    for d in &dirs {
        fs::create_dir(d).unwrap();
    }

    let synth_args = [
        "synth",
        "--hw",
        "vgpu-a,vgpu-b",
        "--categories",
        "rmsnorm",
        "--count",
        "60",
        "--seed",
        "7",
        "--out",
        "data.jsonl",
        "--json",
    ];
    let train_args = [
        "train",
        "--data",
        "data.jsonl",
        "--category",
        "rmsnorm",
        "--seed",
        "11",
        "--epochs",
        "4",
        "--out",
        "model.json",
        "--json",
    ];
    let features_args = [
        "features",
        "--hw",
        "vgpu-a",
        "--category",
        "gemm",
        "--params",
        r#"{"M":512,"N":512,"K":512}"#,
        "--json",
    ];

    let mut stdout_pairs = Vec::new();
    for args in [&synth_args[..], &train_args[..], &features_args[..]] {
        let a = run(&dirs[0], args);
        let b = run(&dirs[1], args);
        stdout_pairs.push((args[0].to_string(), a, b));
    }
    let mut all_identical = true;
    for (name, a, b) in &stdout_pairs {
        if a != b {
            all_identical = false;
            eprintln!("stdout of `{name}` differed between identical runs");
        }
    }
    for file in ["data.jsonl", "model.json"] {
        let a = fs::read(dirs[0].join(file)).unwrap();
        let b = fs::read(dirs[1].join(file)).unwrap();
        if a != b {
            all_identical = false;
            eprintln!("{file} differed between identical runs");
        }
        assert!(!a.is_empty(), "{file} is empty");
    }
    report(
        8,
        all_identical,
        "synth, train, and features outputs byte-identical across reruns",
    );
}
