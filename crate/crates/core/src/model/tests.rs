use super::*;
use crate::construct::construct;
use crate::kernel::{build_hierarchy, parse_kernel_spec, ArchHierarchy};

fn setup(kernel: &str, report: &str, pe_loop: &str) -> (ArchHierarchy, CostModel) {
    let h = build_hierarchy(&parse_kernel_spec(kernel).unwrap());
    let d = construct(&h, pe_loop).unwrap();
    let c = init_model(&SynthReport::from_json(report).unwrap(), &h).unwrap();
    let m = CostModel::new(&d, &c, &PlatformConfig::default()).unwrap();
    (h, m)
}

fn vadd() -> CostModel {
    setup(
        include_str!("../../fixtures/kernels/vadd-mini.json"),
        include_str!("../../fixtures/reports/vadd-mini.json"),
        "i",
    )
    .1
}

#[test]
fn vadd_point_composes_component_formulas() {
    let m = vadd();
    let e = m.estimate(&DesignPoint(vec![64, 4, 64, 64, 64])).unwrap();

    // a 64-entry tile at 64 bits over the 20-cycle port: 2048/64 + 20
    assert_eq!(e.cycles_load, 2 * 52);
    assert_eq!(e.cycles_store, 52);
    // root C_r 5 + PE iteration C_r 2 + II 1 * ceil(64/4)
    assert_eq!(e.cycles_compute, 5 + 2 + 16);
    assert_eq!(e.cycles_per_tile, 156);
    assert_eq!(e.num_tiles, 16);
    // fill, 13 steady iterations, drain
    assert_eq!(e.cycles_total, 104 + 104 + 13 * 156 + 156 + 52 + 52);

    // each copy: 4 partitions of 16 entries, two blocks wide at 64 bits
    let blocks = 4 * 2;
    assert_eq!(e.bram_blocks, 3 * 2 * blocks);
    let buf_lut = blocks * (10 + 5) + 64;
    assert_eq!(e.luts, 6 * buf_lut + 4 * 30 + 200);
    assert_eq!(e.ffs, 6 * (64 + 8) + 4 * 40 + 300);
    assert_eq!(e.dsps, 0);
    assert!(e.feasible_80pct);
    assert_eq!(e.bound, Bound::Communication);
    assert!((e.c2c.unwrap() - 23.0 / 156.0).abs() < 1e-12);
}

#[test]
fn vadd_minimal_point() {
    let m = vadd();
    let min = m.design().space().minimal_point();
    let e = m.evaluate(&min.0);
    // three arrays, two single-block copies each
    assert_eq!(e.bram_blocks, 6);
    assert_eq!(e.num_tiles, 1024);
    let r = m.resources(&min.0);
    assert_eq!(r.lut, 6 * 15 + 30 + 200);
}

#[test]
fn single_tile_has_no_overlap() {
    let m = vadd();
    let v = [1024, 1, 32, 32, 32];
    let t = m.tile_times(&v, 1024);
    assert_eq!(m.total_cycles(&v), t.load + t.compute + t.store);
}

#[test]
fn compute_bound_point() {
    let m = vadd();
    let e = m.evaluate(&[512, 1, 512, 512, 512]);
    assert_eq!(e.cycles_load, 2 * (512 * 32 / 512 + 20));
    assert_eq!(e.cycles_compute, 5 + 2 + 512);
    assert_eq!(e.bound, Bound::Computation);
    assert!(e.c2c.unwrap() > 1.0);
}

#[test]
fn out_of_space_point() {
    assert!(matches!(
        vadd().estimate(&DesignPoint(vec![64, 4, 48, 64, 64])),
        Err(ModelError::PointNotInSpace(_))
    ));
}

#[test]
fn nested_loops_and_local_buffers() {
    let (_, m) = setup(
        include_str!("../../fixtures/kernels/nw-small.json"),
        include_str!("../../fixtures/reports/nw-small.json"),
        "pairs",
    );
    let space = m.design().space();
    assert_eq!(
        space.params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(),
        ["TILE_PAIRS", "PE_PAIRS", "UF_loop1", "BW_seq", "BW_aligned"]
    );
    let v = [8, 2, 4, 64, 64];
    // loop1: C_r 1 + ceil(17/4); loop3: (inner: C_r 1 + 12/12) + C_r 2 + 3*12
    let loop1 = 1 + 5;
    let loop3 = (1 + 1) + 2 + 3 * 12;
    let engine = loop1 + loop3 + 3;
    assert_eq!(m.pe_iteration_cycles(&v), engine + 4);
    assert_eq!(m.compute_cycles(&v, 8), 6 + engine + 4 + 30 * 4);

    // H: 17 entries partitioned by UF_loop1 = 4 -> 4 blocks, 16 bits wide
    let h_lut = 4 * 15 + 16;
    let engine_lut = 15 * 4 + (30 + 45 * 12) + 300 + h_lut;
    let pe = m.pe_resources(&v);
    assert_eq!(pe.lut, engine_lut + 700);
    assert_eq!(pe.bram, 4);
    assert_eq!(pe.dsp, 12);
}

#[test]
fn shared_array_prologue_and_per_pe_copies() {
    let (_, m) = setup(
        include_str!("../../fixtures/kernels/gemv-small.json"),
        include_str!("../../fixtures/reports/gemv-small.json"),
        "row",
    );
    let space = m.design().space();
    let v: Vec<u64> = ["TILE_ROW", "PE_ROW", "BW_A", "BW_x", "BW_y"]
        .iter()
        .zip([4, 2, 32, 64, 32])
        .map(|(n, x)| {
            assert!(space.index_of(n).is_some(), "{n}");
            x
        })
        .collect();
    // x: 32 words of 32 bits over 64-bit port
    assert_eq!(m.prologue_cycles(&v), 1024 / 64 + 20);
    assert_eq!(m.epilogue_cycles(&v), 0);
    let with_one = m.resources(&[4, 1, 32, 64, 32]);
    let with_two = m.resources(&v);
    // A and y gain one partition per copy; the second PE adds its own pair
    // of x copies, two blocks wide at 64 bits
    assert_eq!(with_two.bram - with_one.bram, 2 + 2 + 2 * 2);
}

#[test]
fn fits_is_inclusive() {
    let b = Budgets {
        bram_blocks: 100,
        luts: 100,
        ffs: 100,
        dsps: 100,
    };
    let r = Resources {
        bram: 80,
        lut: 80,
        ff: 80,
        dsp: 80,
    };
    assert!(fits(&r, &b, 80));
    assert!(!fits(&Resources { bram: 81, ..r }, &b, 80));
    assert!(fits(&Resources { bram: 100, ..r }, &b, 100));
}
