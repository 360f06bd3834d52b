#![allow(dead_code)]

use std::path::PathBuf;

use accel_dse::construct::construct;
use accel_dse::kernel::{build_hierarchy, parse_kernel_spec, ArchHierarchy};
use accel_dse::legalize::legalize;
use accel_dse::model::{init_model, CostModel, PlatformConfig, SynthReport};

/// Fixtures with a legal PE loop and a space of at most 10^5 points.
pub const SMALL: [&str; 5] = ["saxpy-small", "nw-small", "stencil-small", "gemv-small", "aes-small"];

pub fn fixture(kind: &str, stem: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", kind, &format!("{stem}.json")]
        .iter()
        .collect();
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn hierarchy(stem: &str) -> ArchHierarchy {
    build_hierarchy(&parse_kernel_spec(&fixture("kernels", stem)).unwrap())
}

pub fn report(stem: &str) -> SynthReport {
    SynthReport::from_json(&fixture("reports", stem)).unwrap()
}

/// Model over the outermost legal PE loop.
pub fn model(stem: &str) -> CostModel {
    let h = hierarchy(stem);
    let r = report(stem);
    let platform = PlatformConfig::default();
    let verdict = legalize(&h, &r, &platform).unwrap();
    let pe_loop = &verdict.pe_loop_candidates[0];
    let design = construct(&h, pe_loop).unwrap();
    CostModel::new(&design, &init_model(&r, &h).unwrap(), &platform).unwrap()
}
