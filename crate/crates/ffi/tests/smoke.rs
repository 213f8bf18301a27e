//! Exercises the C ABI the way a foreign caller would: everything crosses the
//! boundary as raw pointers and status codes, and every returned object is
//! freed through its `*_free` counterpart.

use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use synperf::datagen::{generate_dataset, OracleProfile, ParamRanges, SyntheticOracle};
use synperf::decompose::KernelCategory;
use synperf::estimator::{build_features, prepare_samples, Estimator};
use synperf::hwspec::{HardwareSpec, Precision, SpecRegistry};
use synperf::nn::{Loss, TrainConfig};
use synperf::tiling::TilingTable;

use synperf_ffi::*;

/// A mid-size datacenter GPU used by every test in this file.
fn test_spec() -> HardwareSpec {
    HardwareSpec {
        name: "testgpu".to_string(),
        compute_capability: 8.0,
        num_sms: 64,
        sm_clock_mhz: 1410.0,
        tensor_throughput: BTreeMap::from([(Precision::Bf16, 1024.0), (Precision::Fp16, 1024.0)]),
        fma_throughput: 128.0,
        xu_throughput: 16.0,
        global_mem_bw_gbps: 1600.0,
        l2_bw_gbps: 4000.0,
        smem_bw_bytes_per_cycle_per_sm: 128.0,
        smem_size_per_sm_kib: 164.0,
        regfile_size_per_sm_kib: 256.0,
        max_warps_per_sm: 64,
        max_ctas_per_sm: 32,
    }
}

fn write_spec_file(dir: &Path) -> CString {
    let path = dir.join("testgpu.json");
    let json = serde_json::to_string_pretty(&test_spec()).unwrap();
    std::fs::write(&path, json).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

unsafe fn last_error_text() -> String {
    CStr::from_ptr(synperf_last_error()).to_str().unwrap().to_string()
}

#[test]
fn version_is_a_nonempty_static_string() {
    let v = unsafe { CStr::from_ptr(synperf_version()) };
    let text = v.to_str().unwrap();
    assert!(!text.is_empty());
    assert!(text.split('.').count() >= 2, "not a version: {text}");
}

#[test]
fn last_error_starts_empty_on_a_fresh_thread() {
    let text = unsafe { last_error_text() };
    assert_eq!(text, "");
}

#[test]
fn builtin_tiling_round_trip() {
    let mut tiling: *mut SynperfTiling = ptr::null_mut();
    let status = unsafe { synperf_tiling_builtin(&mut tiling) };
    assert_eq!(status, SynperfStatus::Ok);
    assert!(!tiling.is_null());
    unsafe { synperf_tiling_free(tiling) };
    // NULL frees are no-ops.
    unsafe {
        synperf_tiling_free(ptr::null_mut());
        synperf_hwspec_free(ptr::null_mut());
        synperf_estimator_free(ptr::null_mut());
        synperf_string_free(ptr::null_mut());
    }
}

#[test]
fn hwspec_loads_and_reports_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_spec_file(dir.path());
    let mut spec: *mut SynperfHwSpec = ptr::null_mut();
    let status = unsafe { synperf_hwspec_load(path.as_ptr(), &mut spec) };
    assert_eq!(status, SynperfStatus::Ok);

    let mut name: *mut c_char = ptr::null_mut();
    let status = unsafe { synperf_hwspec_name(spec, &mut name) };
    assert_eq!(status, SynperfStatus::Ok);
    let text = unsafe { CStr::from_ptr(name) }.to_str().unwrap();
    assert_eq!(text, "testgpu");
    unsafe {
        synperf_string_free(name);
        synperf_hwspec_free(spec);
    }
}

#[test]
fn missing_file_reports_io_error_with_path() {
    let path = CString::new("/nonexistent/nowhere.json").unwrap();
    let mut spec: *mut SynperfHwSpec = ptr::null_mut();
    let status = unsafe { synperf_hwspec_load(path.as_ptr(), &mut spec) };
    assert_eq!(status, SynperfStatus::IoError);
    assert!(spec.is_null(), "out-pointer must stay untouched on failure");
    let msg = unsafe { last_error_text() };
    assert!(msg.contains("/nonexistent/nowhere.json"), "message was: {msg}");
}

#[test]
fn null_arguments_are_rejected() {
    let mut spec: *mut SynperfHwSpec = ptr::null_mut();
    let status = unsafe { synperf_hwspec_load(ptr::null(), &mut spec) };
    assert_eq!(status, SynperfStatus::NullArgument);

    let path = CString::new("x.json").unwrap();
    let status = unsafe { synperf_hwspec_load(path.as_ptr(), ptr::null_mut()) };
    assert_eq!(status, SynperfStatus::NullArgument);

    let status = unsafe { synperf_tiling_builtin(ptr::null_mut()) };
    assert_eq!(status, SynperfStatus::NullArgument);
    assert!(!unsafe { last_error_text() }.is_empty());
}

#[test]
fn invalid_utf8_is_rejected() {
    let bogus = CString::new(vec![0xffu8, 0xfe]).unwrap();
    let mut spec: *mut SynperfHwSpec = ptr::null_mut();
    let status = unsafe { synperf_hwspec_load(bogus.as_ptr(), &mut spec) };
    assert_eq!(status, SynperfStatus::InvalidUtf8);
    let msg = unsafe { last_error_text() };
    assert!(msg.contains("path"), "message was: {msg}");
}

#[test]
fn features_json_matches_the_native_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_spec_file(dir.path());
    let mut spec: *mut SynperfHwSpec = ptr::null_mut();
    assert_eq!(unsafe { synperf_hwspec_load(path.as_ptr(), &mut spec) }, SynperfStatus::Ok);
    let mut tiling: *mut SynperfTiling = ptr::null_mut();
    assert_eq!(unsafe { synperf_tiling_builtin(&mut tiling) }, SynperfStatus::Ok);

    let category = CString::new("gemm").unwrap();
    let params = CString::new(r#"{"M": 2048, "N": 2048, "K": 1024}"#).unwrap();
    let mut out: *mut c_char = ptr::null_mut();
    let status = unsafe {
        synperf_features_json(
            spec,
            tiling,
            category.as_ptr(),
            ptr::null(), // category default precision
            params.as_ptr(),
            &mut out,
        )
    };
    assert_eq!(status, SynperfStatus::Ok, "error: {}", unsafe { last_error_text() });

    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap();
    let payload: serde_json::Value = serde_json::from_str(text).unwrap();
    assert_eq!(payload["category"], "gemm");
    assert_eq!(payload["hardware"], "testgpu");
    assert_eq!(payload["precision"], "bf16");
    let names = payload["names"].as_array().unwrap();
    let values = payload["values"].as_array().unwrap();
    assert_eq!(names.len(), values.len());
    assert!(payload["theoretical_time_us"].as_f64().unwrap() > 0.0);
    assert!(payload["imbalance_ratio"].as_f64().unwrap() >= 1.0);

    // The values must agree exactly with an in-process analysis of the same
    // invocation: the ABI adds marshalling, not arithmetic.
    let native_spec = test_spec();
    let native_tiling = TilingTable::builtin();
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(r#"{"M": 2048, "N": 2048, "K": 1024}"#).unwrap();
    let kp = synperf::decompose::KernelParams::from_json_map(KernelCategory::Gemm, &map).unwrap();
    let analysis =
        build_features(&kp, Precision::Bf16, &native_spec, &native_tiling).unwrap();
    let native = analysis.features.flatten();
    for (got, want) in values.iter().zip(&native) {
        assert_eq!(got.as_f64().unwrap(), *want);
    }

    unsafe {
        synperf_string_free(out);
        synperf_tiling_free(tiling);
        synperf_hwspec_free(spec);
    }
}

#[test]
fn unknown_category_and_malformed_params_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_spec_file(dir.path());
    let mut spec: *mut SynperfHwSpec = ptr::null_mut();
    assert_eq!(unsafe { synperf_hwspec_load(path.as_ptr(), &mut spec) }, SynperfStatus::Ok);
    let mut tiling: *mut SynperfTiling = ptr::null_mut();
    assert_eq!(unsafe { synperf_tiling_builtin(&mut tiling) }, SynperfStatus::Ok);

    let mut out: *mut c_char = ptr::null_mut();
    let bad_category = CString::new("conv3d").unwrap();
    let params = CString::new(r#"{"M": 64, "N": 64, "K": 64}"#).unwrap();
    let status = unsafe {
        synperf_features_json(spec, tiling, bad_category.as_ptr(), ptr::null(), params.as_ptr(), &mut out)
    };
    assert_eq!(status, SynperfStatus::ValidationError);
    assert!(unsafe { last_error_text() }.contains("conv3d"));

    let category = CString::new("gemm").unwrap();
    let not_json = CString::new("m=64").unwrap();
    let status = unsafe {
        synperf_features_json(spec, tiling, category.as_ptr(), ptr::null(), not_json.as_ptr(), &mut out)
    };
    assert_eq!(status, SynperfStatus::ParseError);
    assert!(out.is_null(), "out-pointer must stay untouched on failure");

    unsafe {
        synperf_tiling_free(tiling);
        synperf_hwspec_free(spec);
    }
}

#[test]
fn trained_estimator_predicts_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = write_spec_file(dir.path());

    // Train a deliberately tiny model in-process and save it; the ABI side
    // then loads the file and must reproduce the native prediction bit for
    // bit.
    let spec = test_spec();
    let tiling = TilingTable::builtin();
    let oracle = SyntheticOracle::uniform(&["testgpu"], OracleProfile::default());
    let records = generate_dataset(
        &[KernelCategory::Gemm],
        &[&spec],
        160,
        &ParamRanges::default(),
        &oracle,
        &tiling,
        7,
    )
    .unwrap();
    let mut registry = SpecRegistry::default();
    registry.insert(spec.clone());
    let (pairs, _) = prepare_samples(&records, KernelCategory::Gemm, &registry, &tiling).unwrap();
    let samples: Vec<_> = pairs.into_iter().map(|(_, s)| s).collect();
    let cfg = TrainConfig {
        loss: Loss::Mape,
        max_epochs: 15,
        seed: 7,
        ..TrainConfig::default()
    };
    let (est, _) = Estimator::fit(KernelCategory::Gemm, &samples, &cfg).unwrap();
    let model_path = dir.path().join("gemm.json");
    est.save(&model_path).unwrap();

    let model_cpath = CString::new(model_path.to_str().unwrap()).unwrap();
    let mut est_handle: *mut SynperfEstimator = ptr::null_mut();
    let status = unsafe { synperf_estimator_load(model_cpath.as_ptr(), &mut est_handle) };
    assert_eq!(status, SynperfStatus::Ok, "error: {}", unsafe { last_error_text() });

    let mut spec_handle: *mut SynperfHwSpec = ptr::null_mut();
    assert_eq!(
        unsafe { synperf_hwspec_load(spec_path.as_ptr(), &mut spec_handle) },
        SynperfStatus::Ok
    );
    let mut tiling_handle: *mut SynperfTiling = ptr::null_mut();
    assert_eq!(unsafe { synperf_tiling_builtin(&mut tiling_handle) }, SynperfStatus::Ok);

    let params_text = r#"{"M": 4096, "N": 2048, "K": 2048}"#;
    let params = CString::new(params_text).unwrap();
    let mut latency = 0.0f64;
    let mut efficiency = 0.0f64;
    let status = unsafe {
        synperf_predict_kernel(
            est_handle,
            spec_handle,
            tiling_handle,
            ptr::null(),
            params.as_ptr(),
            &mut latency,
            &mut efficiency,
        )
    };
    assert_eq!(status, SynperfStatus::Ok, "error: {}", unsafe { last_error_text() });
    assert!(latency > 0.0);
    assert!(efficiency > 0.0 && efficiency < 1.0);

    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(params_text).unwrap();
    let kp = synperf::decompose::KernelParams::from_json_map(KernelCategory::Gemm, &map).unwrap();
    let analysis = build_features(&kp, Precision::Bf16, &spec, &tiling).unwrap();
    let native = est.predict_latency(&analysis.features).unwrap();
    assert_eq!(latency, native.latency_us);
    assert_eq!(efficiency, native.efficiency);

    // The efficiency out-pointer is optional.
    let status = unsafe {
        synperf_predict_kernel(
            est_handle,
            spec_handle,
            tiling_handle,
            ptr::null(),
            params.as_ptr(),
            &mut latency,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SynperfStatus::Ok);

    unsafe {
        synperf_estimator_free(est_handle);
        synperf_tiling_free(tiling_handle);
        synperf_hwspec_free(spec_handle);
    }
}
