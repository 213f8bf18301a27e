//! Hardware descriptions: per-GPU pipeline throughputs, memory bandwidths, and
//! occupancy ceilings, plus the unit conversions the rest of the crate leans on.
//!
//! Conventions used throughout: time in microseconds, cycle counts at the SM clock,
//! bandwidths in GB/s with GB = 10^9 bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element precision of a kernel's operands. Keys the per-precision tensor-pipe
/// throughput table and determines bytes per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp8,
    Fp16,
    Bf16,
    Fp32,
}

impl Precision {
    pub fn bytes_per_element(self) -> u64 {
        match self {
            Precision::Fp8 => 1,
            Precision::Fp16 | Precision::Bf16 => 2,
            Precision::Fp32 => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fp8" => Ok(Precision::Fp8),
            "fp16" => Ok(Precision::Fp16),
            "bf16" => Ok(Precision::Bf16),
            "fp32" => Ok(Precision::Fp32),
            other => Err(Error::validation(format!("unknown precision '{other}'"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Precision::Fp8 => "fp8",
            Precision::Fp16 => "fp16",
            Precision::Bf16 => "bf16",
            Precision::Fp32 => "fp32",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Precision::parse(s)
    }
}

fn default_max_warps() -> u32 {
    64
}

fn default_max_ctas() -> u32 {
    32
}

/// Static description of one GPU. Loaded from a JSON file; a directory of these
/// files acts as the spec registry keyed by `name`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub name: String,
    pub compute_capability: f64,
    pub num_sms: u32,
    pub sm_clock_mhz: f64,
    /// Tensor-pipe throughput per precision, in ops/cycle/SM.
    pub tensor_throughput: BTreeMap<Precision, f64>,
    /// FP32 FMA-pipe throughput in ops/cycle/SM.
    pub fma_throughput: f64,
    /// Special-function (transcendental) throughput in ops/cycle/SM.
    pub xu_throughput: f64,
    pub global_mem_bw_gbps: f64,
    pub l2_bw_gbps: f64,
    pub smem_bw_bytes_per_cycle_per_sm: f64,
    pub smem_size_per_sm_kib: f64,
    pub regfile_size_per_sm_kib: f64,
    #[serde(default = "default_max_warps")]
    pub max_warps_per_sm: u32,
    #[serde(default = "default_max_ctas")]
    pub max_ctas_per_sm: u32,
}

impl HardwareSpec {
    /// Parse a spec file and check the hard invariants (positive counts, clocks,
    /// throughputs, bandwidths). Range plausibility is a separate, softer check —
    /// see [`HardwareSpec::range_warnings`].
    pub fn from_path(path: &Path) -> Result<HardwareSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: HardwareSpec = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        spec.check_invariants()?;
        Ok(spec)
    }

    fn check_invariants(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::validation("hardware spec has an empty name"));
        }
        if self.num_sms == 0 {
            return Err(Error::validation(format!("{}: num_sms must be > 0", self.name)));
        }
        let positives = [
            ("sm_clock_mhz", self.sm_clock_mhz),
            ("fma_throughput", self.fma_throughput),
            ("xu_throughput", self.xu_throughput),
            ("global_mem_bw_gbps", self.global_mem_bw_gbps),
            ("l2_bw_gbps", self.l2_bw_gbps),
            ("smem_bw_bytes_per_cycle_per_sm", self.smem_bw_bytes_per_cycle_per_sm),
            ("smem_size_per_sm_kib", self.smem_size_per_sm_kib),
            ("regfile_size_per_sm_kib", self.regfile_size_per_sm_kib),
        ];
        for (field, value) in positives {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::validation(format!(
                    "{}: {} must be positive and finite, got {}",
                    self.name, field, value
                )));
            }
        }
        for (prec, th) in &self.tensor_throughput {
            if !(*th > 0.0) || !th.is_finite() {
                return Err(Error::validation(format!(
                    "{}: tensor_throughput[{}] must be positive and finite, got {}",
                    self.name, prec, th
                )));
            }
        }
        if self.max_warps_per_sm == 0 || self.max_ctas_per_sm == 0 {
            return Err(Error::validation(format!(
                "{}: occupancy ceilings must be > 0",
                self.name
            )));
        }
        Ok(())
    }

    /// Compare every field against the envelope of datacenter GPUs this model was
    /// built for. Out-of-range values are suspicious but not fatal: returned as
    /// warnings so the caller decides (the CLI promotes them to errors under
    /// `--strict`). The tensor-pipe range applies to the bf16/fp16 entries; fp8
    /// rates legitimately run 2x higher.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let mut check = |field: &str, value: f64, lo: f64, hi: f64| {
            if value < lo || value > hi {
                w.push(format!(
                    "{}: {} = {} outside expected range [{}, {}]",
                    self.name, field, value, lo, hi
                ));
            }
        };
        check("compute_capability", self.compute_capability, 8.0, 12.0);
        check("num_sms", self.num_sms as f64, 78.0, 188.0);
        check("sm_clock_mhz", self.sm_clock_mhz, 1410.0, 2520.0);
        for (prec, th) in &self.tensor_throughput {
            if matches!(prec, Precision::Bf16 | Precision::Fp16) {
                check(&format!("tensor_throughput[{prec}]"), *th, 512.0, 4096.0);
            }
        }
        check("fma_throughput", self.fma_throughput, 64.0, 128.0);
        check("xu_throughput", self.xu_throughput, 16.0, 16.0);
        check("global_mem_bw_gbps", self.global_mem_bw_gbps, 696.0, 4916.0);
        check("l2_bw_gbps", self.l2_bw_gbps, 2430.0, 10400.0);
        check(
            "smem_bw_bytes_per_cycle_per_sm",
            self.smem_bw_bytes_per_cycle_per_sm,
            128.0,
            128.0,
        );
        check("smem_size_per_sm_kib", self.smem_size_per_sm_kib, 100.0, 228.0);
        check("regfile_size_per_sm_kib", self.regfile_size_per_sm_kib, 256.0, 256.0);
        w
    }

    /// Tensor-pipe throughput for `precision`, or an error naming the gap.
    pub fn tensor_throughput_for(&self, precision: Precision) -> Result<f64> {
        self.tensor_throughput.get(&precision).copied().ok_or_else(|| {
            Error::unsupported(format!(
                "{} has no tensor throughput entry for {}",
                self.name, precision
            ))
        })
    }

    /// Convert SM-clock cycles to microseconds (MHz = cycles per microsecond).
    pub fn cycles_to_us(&self, cycles: f64) -> f64 {
        cycles / self.sm_clock_mhz
    }

    pub fn us_to_cycles(&self, us: f64) -> f64 {
        us * self.sm_clock_mhz
    }

    /// Cycles an ideal transfer of `bytes` takes at `bw_gbps` (GB = 10^9 bytes),
    /// expressed at this GPU's SM clock.
    pub fn bytes_to_cycles(&self, bytes: f64, bw_gbps: f64) -> f64 {
        bytes * self.sm_clock_mhz / (bw_gbps * 1000.0)
    }
}

/// A directory of hardware spec files, keyed by spec name (and by file stem when it
/// differs, so `--hw a100` finds `a100.json` whatever its internal name says).
#[derive(Debug, Default)]
pub struct SpecRegistry {
    specs: BTreeMap<String, HardwareSpec>,
}

impl SpecRegistry {
    /// Load every `*.json` file under `dir`. Files that fail to parse or violate
    /// hard invariants abort the load; range warnings accumulate in `warnings`.
    pub fn load_dir(dir: &Path, warnings: &mut Vec<String>) -> Result<SpecRegistry> {
        let mut reg = SpecRegistry::default();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let spec = HardwareSpec::from_path(&path)?;
            warnings.extend(spec.range_warnings());
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if stem != spec.name && !stem.is_empty() {
                reg.specs.insert(stem, spec.clone());
            }
            reg.specs.insert(spec.name.clone(), spec);
        }
        if reg.specs.is_empty() {
            return Err(Error::validation(format!(
                "no hardware spec files (*.json) found in {}",
                dir.display()
            )));
        }
        Ok(reg)
    }

    pub fn get(&self, name: &str) -> Result<&HardwareSpec> {
        self.specs.get(name).ok_or_else(|| {
            Error::validation(format!(
                "unknown hardware '{}' (registry has: {})",
                name,
                self.names().join(", ")
            ))
        })
    }

    pub fn insert(&mut self, spec: HardwareSpec) {
        self.specs.insert(spec.name.clone(), spec);
    }

    /// Deduplicated spec names (aliases from file stems excluded).
    pub fn names(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        self.specs
            .values()
            .filter(|s| seen.insert(s.name.clone()))
            .map(|s| s.name.clone())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &HardwareSpec> {
        let mut seen = std::collections::BTreeSet::new();
        self.specs.values().filter(move |s| seen.insert(s.name.clone()))
    }
}
