use num_bigint::BigUint;

use super::*;
use crate::kernel::{build_hierarchy, parse_kernel_spec};

fn load(text: &str) -> ArchHierarchy {
    build_hierarchy(&parse_kernel_spec(text).unwrap())
}

fn nw() -> ArchHierarchy {
    load(include_str!("../../fixtures/kernels/nw-like.json"))
}

fn vadd() -> ArchHierarchy {
    load(include_str!("../../fixtures/kernels/vadd-mini.json"))
}

fn names(d: &CppDesign) -> Vec<String> {
    d.params.iter().map(|p| p.name.clone()).collect()
}

#[test]
fn nw_parameters_follow_the_template() {
    let d = construct(&nw(), "pairs").unwrap();
    assert_eq!(
        names(&d),
        [
            "TILE_PAIRS",
            "PE_PAIRS",
            "UF_loop1",
            "UF_loop2",
            "UF_loop3_inner",
            "BW_seqAs",
            "BW_seqBs",
            "BW_alignedAs",
            "BW_alignedBs"
        ]
    );
    let tile = &d.params[0];
    assert_eq!(tile.auto_expr(), "auto(1,65536,seq)");
    assert_eq!(d.params[1].auto_expr(), "auto(1,65536,seq)");
    assert_eq!(d.params[2].auto_expr(), "auto(1,128,seq)");
    assert_eq!(d.params[5].auto_expr(), "auto(8,512,pow2)");
    assert_eq!(d.params[5].count(), 7);
}

#[test]
fn nw_schedules() {
    let d = construct(&nw(), "pairs").unwrap();
    assert_eq!(d.schedule_of("loop3"), Some(&LoopSchedule::Pipelined));
    assert!(matches!(d.schedule_of("loop1"), Some(LoopSchedule::Unroll { .. })));
    assert!(matches!(d.schedule_of("loop3_inner"), Some(LoopSchedule::Unroll { .. })));
    let ids: Vec<&str> = d.schedules.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(ids, ["loop1", "loop2", "loop3", "loop3_inner"]);
}

#[test]
fn nw_buffers_are_double_buffered() {
    let d = construct(&nw(), "pairs").unwrap();
    let off_chip: Vec<_> = d.buffers.iter().filter(|b| b.role != BufferRole::Local).collect();
    assert_eq!(off_chip.len(), 4);
    assert_eq!(off_chip.iter().map(|b| b.copies()).sum::<u64>(), 8);
    assert_eq!(d.buffer("seqAs").unwrap().capacity, Capacity::PerTile(128));
    assert_eq!(d.buffer("alignedBs").unwrap().capacity, Capacity::PerTile(256));
    let m = d.buffer("M").unwrap();
    assert_eq!(m.role, BufferRole::Local);
    assert_eq!(m.owner.as_deref(), Some("engine"));
    assert_eq!(m.copies(), 1);
    assert_eq!(
        m.partition,
        [
            PartitionSource::Loops(vec!["loop2".into(), "loop3".into()]),
            PartitionSource::Loops(vec!["loop1".into(), "loop3_inner".into()]),
        ]
    );
}

#[test]
fn nw_stages() {
    let d = construct(&nw(), "pairs").unwrap();
    assert_eq!(d.stage(StageKind::Load).arrays, ["seqAs", "seqBs"]);
    assert_eq!(d.stage(StageKind::Store).arrays, ["alignedAs", "alignedBs"]);
    assert_eq!(d.stage(StageKind::Compute).arrays.len(), 4);
}

#[test]
fn nw_cardinality_is_exact() {
    let space = construct(&nw(), "pairs").unwrap().space();
    // tile and PE thinned to 64 + 10 values, three unroll ranges of 128,
    // four bit widths of 7
    let expected = BigUint::from(74u64 * 74 * 128 * 128 * 128) * BigUint::from(7u64.pow(4));
    assert_eq!(space.cardinality(), expected);
}

#[test]
fn vadd_space() {
    let d = construct(&vadd(), "i").unwrap();
    assert_eq!(names(&d), ["TILE_I", "PE_I", "BW_a", "BW_b", "BW_c"]);
    assert_eq!(d.space().cardinality(), BigUint::from(1024u64 * 1024 * 125));
    assert!(d.schedules.is_empty());
    assert_eq!(d.buffers.iter().map(|b| b.copies()).sum::<u64>(), 6);
}

#[test]
fn small_loops_are_flattened() {
    let h = load(include_str!("../../fixtures/kernels/nw-small.json"));
    let d = construct(&h, "pairs").unwrap();
    assert_eq!(d.schedule_of("loop3_inner"), Some(&LoopSchedule::Flattened { factor: 12 }));
    // carried dependency blocks flattening even below the limit
    assert_eq!(d.schedule_of("loop3"), Some(&LoopSchedule::Pipelined));
    // 17 rounds down to 16
    let uf = &d.params[d.space().index_of("UF_loop1").unwrap()];
    assert_eq!((uf.min, uf.max), (1, 16));
}

#[test]
fn flatten_limit_is_strict() {
    let doc = |tc: u64| {
        format!(
            r#"{{"format_version": 1, "name": "k",
            "arrays": [{{"id": "a", "element_bits": 32, "dims": [64], "location": "off_chip"}}],
            "top_loop": {{"id": "i", "trip_count": 64,
                "accesses": [{{"array": "a", "dims": [{{"iter": "i"}}]}}],
                "body": [{{"loop": {{"id": "j", "trip_count": {tc}}}}}]}}}}"#
        )
    };
    let d15 = construct(&load(&doc(15)), "i").unwrap();
    assert_eq!(d15.schedule_of("j"), Some(&LoopSchedule::Flattened { factor: 15 }));
    let d16 = construct(&load(&doc(16)), "i").unwrap();
    assert!(matches!(d16.schedule_of("j"), Some(LoopSchedule::Unroll { .. })));
    let dynamic = construct(&load(&doc(16).replace("\"trip_count\": 16", "\"trip_count\": \"dynamic\"")), "i").unwrap();
    let p = &dynamic.params[dynamic.space().index_of("UF_j").unwrap()];
    assert_eq!(p.max, UNROLL_CAP);
}

#[test]
fn resolve_substitutes_values() {
    let d = construct(&nw(), "pairs").unwrap();
    let space = d.space();
    let mut point = space.minimal_point();
    point.0[0] = 16;
    point.0[1] = 4;
    let r = resolve(&d, &point).unwrap();
    assert!(r.source.contains("const int TILE_PAIRS = 16;"), "{}", r.source);
    assert_eq!(r.num_tiles, 4096);
    let seq = r.buffers.iter().find(|b| b.array == "seqAs").unwrap();
    assert_eq!(seq.partition_factor, 4);
    assert_eq!(seq.capacity_elems, 128 * 16);
    assert_eq!(seq.copies, 2);
    assert_eq!(r.pipelined, ["loop3"]);
}

#[test]
fn partial_last_tile() {
    let d = construct(&vadd(), "i").unwrap();
    let r = resolve(&d, &DesignPoint(vec![100, 1, 32, 32, 32])).unwrap();
    assert_eq!((r.num_tiles, r.last_tile), (11, 24));
    let single = resolve(&d, &DesignPoint(vec![1024, 1, 32, 32, 32])).unwrap();
    assert_eq!((single.num_tiles, single.last_tile), (1, 1024));
}

#[test]
fn out_of_space_point_rejected() {
    let d = construct(&vadd(), "i").unwrap();
    assert!(matches!(
        resolve(&d, &DesignPoint(vec![64, 4, 48, 32, 32])),
        Err(ConstructError::PointNotInSpace(_))
    ));
    assert!(resolve(&d, &DesignPoint(vec![64, 4])).is_err());
}

#[test]
fn template_source_keeps_auto_expressions() {
    let d = construct(&nw(), "pairs").unwrap();
    let src = d.template_source();
    assert!(src.contains("#pragma ACCEL variable=TILE_PAIRS value=auto(1,65536,seq)"));
    assert!(src.contains("#pragma ACCEL parallel factor=auto(1,128,seq)"));
    assert!(src.contains("#pragma ACCEL bitwidth variable=seqAs factor=auto(8,512,pow2)"));
    assert!(src.contains("for (int i = 0; i < num_tiles + 2; i++)"));
    assert!(src.contains("seqAs_buf_x <= seqAs"));
}

#[test]
fn non_spine_loop_is_rejected() {
    assert!(matches!(
        construct(&nw(), "loop1"),
        Err(ConstructError::NotTileable(..))
    ));
    assert_eq!(
        construct(&nw(), "nope").unwrap_err(),
        ConstructError::UnknownLoop("nope".into())
    );
}

#[test]
fn deterministic_output() {
    let a = construct(&nw(), "pairs").unwrap();
    let b = construct(&nw(), "pairs").unwrap();
    assert_eq!(a.template_source(), b.template_source());
    assert_eq!(a.space().to_json(), b.space().to_json());
}
