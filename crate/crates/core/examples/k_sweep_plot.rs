//! Sweeping the number of substitutes and plotting the scores.
//!
//! ```text
//! cargo run --example k_sweep_plot [-- <out dir>]
//! ```

use std::path::PathBuf;

use subsense::pipeline::{sweep, BackendSpec, GeneratorKind, Injection, RunConfig};
use subsense::synthetic::sense_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("subsense-k-sweep"));
    std::fs::create_dir_all(&out)?;
    let f = sense_fixture(4, 2, 8, 11);
    let data = out.join("dataset.jsonl");
    let mock = out.join("mock.json");
    f.dataset.write_jsonl(&data)?;
    std::fs::write(&mock, serde_json::to_string(&f.mock)?)?;

    let runs: Vec<_> = [1usize, 2, 3, 5, 7]
        .into_iter()
        .map(|k| {
            let mut cfg = RunConfig::new(&data, GeneratorKind::Concat, Injection::None, BackendSpec::Mock { config: mock.clone() });
            cfg.k = Some(k);
            cfg.mask_counts = [1].into();
            (format!("k{k}"), k as f64, cfg)
        })
        .collect();
    for p in sweep("Scores vs number of substitutes", "k", &runs, &out)? {
        println!("k={:<3} ARI={:.4} maxARI={:.4}", p.x, p.ari, p.max_ari);
    }
    println!("chart: {}", out.join("sweep.svg").display());
    Ok(())
}
