//! Kernel tiling descriptions: how each kernel family carves its problem into
//! CTA-sized tiles on a given architecture, and which scheduling regime the
//! implementation uses. Ships a builtin table covering the stock kernels; a JSON
//! file can replace it to model a different kernel library.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decompose::KernelCategory;
use crate::error::{Error, Result};
use crate::hwspec::Precision;

/// Execution/scheduling regime a kernel implementation was written for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    /// One CTA per tile; the hardware scheduler distributes CTAs.
    Conventional,
    /// Persistent workers; tiles striped over workers by index.
    PersistentStriped,
    /// Persistent workers; tiles assigned to the least-loaded worker.
    PersistentMinHeap,
}

fn one() -> u32 {
    1
}

/// Tile geometry and per-CTA resource footprint for one (kernel, precision,
/// architecture) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileConfig {
    pub category: KernelCategory,
    pub precision: Precision,
    /// Compute capability this entry was tuned for; lookup falls back to the
    /// nearest entry when there is no exact match.
    pub arch: f64,
    #[serde(default = "one")]
    pub tile_m: u32,
    #[serde(default = "one")]
    pub tile_n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_block: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kv_block: Option<u32>,
    /// Rows per task for row-wise elementwise kernels.
    #[serde(default = "one")]
    pub row_block: u32,
    pub smem_bytes: u64,
    pub regs_per_thread: u32,
    pub warps: u32,
    pub paradigm: Paradigm,
    /// When set, edge tiles keep full-tile tensor op counts (the kernel pads
    /// instead of clamping its MMA shapes).
    #[serde(default)]
    pub padded: bool,
}

impl TileConfig {
    pub fn q_block(&self) -> Result<u32> {
        self.q_block.ok_or_else(|| {
            Error::validation(format!("tiling entry for {} has no q_block", self.category))
        })
    }

    pub fn kv_block(&self) -> Result<u32> {
        self.kv_block.ok_or_else(|| {
            Error::validation(format!("tiling entry for {} has no kv_block", self.category))
        })
    }
}

/// The full lookup table. Entries are scanned by (category, precision) and the
/// nearest architecture wins, so one file can serve a whole GPU fleet.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TilingTable {
    pub entries: Vec<TileConfig>,
}

impl TilingTable {
    pub fn from_path(path: &Path) -> Result<TilingTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: TilingTable = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        table.check()?;
        Ok(table)
    }

    fn check(&self) -> Result<()> {
        for entry in &self.entries {
            if entry.tile_m == 0 || entry.tile_n == 0 || entry.row_block == 0 {
                return Err(Error::validation(format!(
                    "tiling entry for {} has a zero tile extent",
                    entry.category
                )));
            }
            if entry.warps == 0 {
                return Err(Error::validation(format!(
                    "tiling entry for {} has zero warps",
                    entry.category
                )));
            }
        }
        Ok(())
    }

    /// Find the entry for (category, precision) closest in compute capability to
    /// `cc`. Ties go to the lower architecture. No entry at all for the pair is an
    /// unsupported-combination error.
    pub fn lookup(
        &self,
        category: KernelCategory,
        precision: Precision,
        cc: f64,
    ) -> Result<&TileConfig> {
        self.entries
            .iter()
            .filter(|e| e.category == category && e.precision == precision)
            .min_by(|a, b| {
                let da = (a.arch - cc).abs();
                let db = (b.arch - cc).abs();
                da.partial_cmp(&db)
                    .unwrap()
                    .then(a.arch.partial_cmp(&b.arch).unwrap())
            })
            .ok_or_else(|| {
                Error::unsupported(format!(
                    "no tiling entry for {category} at precision {precision}"
                ))
            })
    }

    /// Table for the stock kernel library: tensor-core GEMM and scaled GEMM,
    /// tiled flash attention (conventional on pre-Hopper, persistent on Hopper),
    /// row-wise normalization/activation kernels, and a fused MoE GEMM.
    pub fn builtin() -> TilingTable {
        let mut entries = Vec::new();
        // GEMM, bf16/fp16. Ampere/Ada run one CTA per output tile; Hopper uses a
        // persistent tile scheduler that stripes tiles over workers.
        for precision in [Precision::Bf16, Precision::Fp16] {
            entries.push(TileConfig {
                category: KernelCategory::Gemm,
                precision,
                arch: 8.0,
                tile_m: 128,
                tile_n: 128,
                tile_k: Some(32),
                q_block: None,
                kv_block: None,
                row_block: 1,
                smem_bytes: 65536,
                regs_per_thread: 168,
                warps: 8,
                paradigm: Paradigm::Conventional,
                padded: false,
            });
            entries.push(TileConfig {
                category: KernelCategory::Gemm,
                precision,
                arch: 8.9,
                tile_m: 128,
                tile_n: 128,
                tile_k: Some(64),
                q_block: None,
                kv_block: None,
                row_block: 1,
                smem_bytes: 98304,
                regs_per_thread: 168,
                warps: 8,
                paradigm: Paradigm::Conventional,
                padded: false,
            });
            entries.push(TileConfig {
                category: KernelCategory::Gemm,
                precision,
                arch: 9.0,
                tile_m: 128,
                tile_n: 256,
                tile_k: Some(64),
                q_block: None,
                kv_block: None,
                row_block: 1,
                smem_bytes: 196608,
                regs_per_thread: 232,
                warps: 12,
                paradigm: Paradigm::PersistentStriped,
                padded: false,
            });
        }
        // Scaled (quantized) GEMM, fp8 operands with per-row/column scales.
        entries.push(TileConfig {
            category: KernelCategory::ScaledMm,
            precision: Precision::Fp8,
            arch: 8.9,
            tile_m: 128,
            tile_n: 128,
            tile_k: Some(64),
            q_block: None,
            kv_block: None,
            row_block: 1,
            smem_bytes: 65536,
            regs_per_thread: 168,
            warps: 8,
            paradigm: Paradigm::Conventional,
            padded: false,
        });
        entries.push(TileConfig {
            category: KernelCategory::ScaledMm,
            precision: Precision::Fp8,
            arch: 9.0,
            tile_m: 128,
            tile_n: 128,
            tile_k: Some(128),
            q_block: None,
            kv_block: None,
            row_block: 1,
            smem_bytes: 98304,
            regs_per_thread: 232,
            warps: 8,
            paradigm: Paradigm::PersistentStriped,
            padded: false,
        });
        // Flash attention. Block sizes follow the usual head-dim-128 configs.
        for precision in [Precision::Bf16, Precision::Fp16] {
            entries.push(TileConfig {
                category: KernelCategory::Attention,
                precision,
                arch: 8.0,
                tile_m: 1,
                tile_n: 1,
                tile_k: None,
                q_block: Some(128),
                kv_block: Some(64),
                row_block: 1,
                smem_bytes: 65536,
                regs_per_thread: 255,
                warps: 4,
                paradigm: Paradigm::Conventional,
                padded: false,
            });
            entries.push(TileConfig {
                category: KernelCategory::Attention,
                precision,
                arch: 9.0,
                tile_m: 1,
                tile_n: 1,
                tile_k: None,
                q_block: Some(128),
                kv_block: Some(128),
                row_block: 1,
                smem_bytes: 196608,
                regs_per_thread: 240,
                warps: 12,
                paradigm: Paradigm::PersistentMinHeap,
                padded: false,
            });
        }
        // Row-wise kernels run in fp32.
        entries.push(TileConfig {
            category: KernelCategory::RmsNorm,
            precision: Precision::Fp32,
            arch: 8.0,
            tile_m: 1,
            tile_n: 1,
            tile_k: None,
            q_block: None,
            kv_block: None,
            row_block: 1,
            smem_bytes: 4096,
            regs_per_thread: 32,
            warps: 4,
            paradigm: Paradigm::Conventional,
            padded: false,
        });
        entries.push(TileConfig {
            category: KernelCategory::SiluMul,
            precision: Precision::Fp32,
            arch: 8.0,
            tile_m: 1,
            tile_n: 1,
            tile_k: None,
            q_block: None,
            kv_block: None,
            row_block: 1,
            smem_bytes: 0,
            regs_per_thread: 40,
            warps: 4,
            paradigm: Paradigm::Conventional,
            padded: false,
        });
        // Fused MoE GEMM (grouped expert GEMM, one launch).
        for precision in [Precision::Bf16, Precision::Fp16] {
            entries.push(TileConfig {
                category: KernelCategory::FusedMoe,
                precision,
                arch: 8.0,
                tile_m: 64,
                tile_n: 64,
                tile_k: Some(32),
                q_block: None,
                kv_block: None,
                row_block: 1,
                smem_bytes: 16384,
                regs_per_thread: 128,
                warps: 4,
                paradigm: Paradigm::Conventional,
                padded: false,
            });
        }
        TilingTable { entries }
    }
}
