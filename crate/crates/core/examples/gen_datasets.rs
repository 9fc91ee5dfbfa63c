//! Regenerates the bundled datasets under `data/`. The generators are
//! deterministic, so rerunning this always reproduces the committed files.
//!
//! ```bash
//! cargo run -p credsim-core --example gen_datasets
//! ```

use std::path::Path;

use credsim_core::{bundled_benchmark_dataset, bundled_smoke_dataset, dataset_to_jsonl};

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    std::fs::create_dir_all(&root)?;
    let smoke = root.join("synthetic_20.jsonl");
    std::fs::write(&smoke, dataset_to_jsonl(&bundled_smoke_dataset()))?;
    println!("wrote {}", smoke.display());
    let benchmark = root.join("synthetic_200.jsonl");
    std::fs::write(&benchmark, dataset_to_jsonl(&bundled_benchmark_dataset()))?;
    println!("wrote {}", benchmark.display());
    Ok(())
}
