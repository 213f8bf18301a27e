//! Regenerates the derived files under `data/`: the default tiling table
//! (a dump of the compiled-in geometry, handy as a starting point for a
//! tuned variant) and an alpha-beta NVLink communication table. The GPU spec
//! files in `data/specs/` are curated by hand and not touched here.
//!
//! Run from the workspace root: `cargo run -p synperf --example regen_data`

use std::fs;
use std::path::Path;

use synperf::e2e::CommModel;
use synperf::tiling::TilingTable;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");

    let tiling = TilingTable::builtin();
    let path = root.join("data/tiling/default.json");
    fs::write(&path, serde_json::to_string_pretty(&tiling).unwrap() + "\n").unwrap();
    println!("wrote {}", path.display());

    // Startup latency and effective per-rank bus bandwidth of an NVLink ring;
    // message sizes cover 1 KiB through 1 GiB at 4x steps.
    let bytes_grid: Vec<u64> = (0..11).map(|i| 1024u64 << (2 * i)).collect();
    let comm = CommModel::alpha_beta(&[2, 4, 8], 10.0, 300.0, &bytes_grid);
    let path = root.join("data/comm/nvlink.json");
    fs::write(&path, serde_json::to_string_pretty(&comm).unwrap() + "\n").unwrap();
    println!("wrote {}", path.display());
}
