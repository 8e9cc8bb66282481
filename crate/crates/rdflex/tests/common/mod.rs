#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rdflex::io::write_dataset_csv;
use rdflex_core::Dataset;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn write_csv(data: &Dataset, path: &Path) {
    write_dataset_csv(data, std::fs::File::create(path).unwrap()).unwrap();
}

/// Runs the CLI in-process and returns its exit code.
pub fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["rdflex"];
    full.extend_from_slice(args);
    rdflex::cli::main_with_args(full)
}
