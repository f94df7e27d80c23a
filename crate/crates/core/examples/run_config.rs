//! Drive the experiment harness from a JSON config file, as the CLI does.
//!
//! `cargo run --example run_config -- configs/testbed.json trials=50`

use lotts::harness::{load_config, run_experiment};
use std::path::PathBuf;

fn main() -> lotts::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "configs/theory.json".into()));
    let overrides: Vec<String> = args.collect();
    let loaded = load_config(&path, None, &overrides)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let out = run_experiment(&loaded, 0)?;
    for f in &out.files {
        println!("== {} ({} bytes)", f.name, f.contents.len());
    }
    println!("{}", serde_json::to_string_pretty(&out.report["results"]).expect("json"));
    Ok(())
}
