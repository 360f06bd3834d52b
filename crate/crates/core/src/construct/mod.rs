//! Builds the load/compute/store design from a kernel hierarchy.
//!
//! Construction runs six steps in order: data tiling, coarse-grained
//! pipelining (double buffers), PE duplication, small-loop flattening,
//! fine-grained unroll/pipeline scheduling and buffer bit-width
//! reorganization. Each step records the tunables it introduces; together
//! they form the [`DesignSpace`].

mod emit;
mod space;

pub use space::{Binding, DesignPoint, DesignSpace, Increment, TunableParam, THIN_LIMIT, THIN_SEQ_TOP};

use serde::Serialize;
use thiserror::Error;

use crate::kernel::{ArchHierarchy, Direction, LoopNode, ModuleNode, Node, Subscript};
use crate::legalize::{classify_arrays, ArrayClass, ArrayKind};

/// In-PE loops with a constant trip count below this are fully unrolled.
pub const FLATTEN_LIMIT: u64 = 16;
/// Unroll range used for loops whose trip count is unknown.
pub const UNROLL_CAP: u64 = 64;
/// Widest buffer port supported by the off-chip interface.
pub const AXI_MAX_BITS: u64 = 512;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstructError {
    #[error("loop `{0}` not found")]
    UnknownLoop(String),
    #[error("PE loop `{0}` cannot be tiled: {1}")]
    NotTileable(String, String),
    #[error("point not in design space: {0}")]
    PointNotInSpace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Load,
    Compute,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageNode {
    pub kind: StageKind,
    /// Off-chip arrays moved (load/store) or read (compute) by the stage.
    pub arrays: Vec<String>,
}

/// How a loop inside the PE is scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LoopSchedule {
    Flattened { factor: u64 },
    Unroll { param: usize },
    Pipelined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferRole {
    /// Per-tile slice of an array traversed by the PE loop.
    TaskDependent,
    /// Array shared by all PEs; every PE holds its own copy.
    TaskIndependent,
    /// On-chip array declared by the kernel.
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Capacity {
    /// `chunk_elems * tile` elements.
    PerTile(u64),
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BitWidth {
    Param(usize),
    Fixed(u64),
}

/// Source of the partition factor of one buffer dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PartitionSource {
    None,
    PeCount,
    /// The largest unroll factor among these loops, capped at the extent.
    Loops(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CppBuffer {
    pub array: String,
    pub role: BufferRole,
    /// Module owning a local buffer; `None` for the kernel level.
    pub owner: Option<String>,
    pub element_bits: u32,
    pub direction: Direction,
    pub capacity: Capacity,
    pub bit_width: BitWidth,
    pub partition: Vec<PartitionSource>,
    /// Extent of each dimension, used to cap loop-bound partition factors.
    pub extents: Vec<u64>,
    pub double_buffered: bool,
}

impl CppBuffer {
    pub fn copies(&self) -> u64 {
        if self.double_buffered {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CppDesign {
    pub kernel: String,
    pub pe_loop: String,
    /// Enclosing loops folded into the task stream.
    pub folded_loops: Vec<String>,
    pub total_work: u64,
    pub stages: Vec<StageNode>,
    /// Body of one PE-loop iteration, treated as a module.
    pub pe_template: ModuleNode,
    pub buffers: Vec<CppBuffer>,
    /// Scheduling of every loop inside the PE, in pre-order.
    pub schedules: Vec<(String, LoopSchedule)>,
    pub params: Vec<TunableParam>,
    pub tile_param: usize,
    pub pe_param: Option<usize>,
    #[serde(skip)]
    classes: Vec<ArrayClass>,
}

/// Step 1: tile the PE loop and create a buffer for every off-chip array.
pub fn apply_data_tiling(h: &ArchHierarchy, pe_loop: &str) -> Result<CppDesign, ConstructError> {
    let path = h
        .loop_path(pe_loop)
        .ok_or_else(|| ConstructError::UnknownLoop(pe_loop.to_string()))?;
    if !h.on_perfect_spine(pe_loop) {
        return Err(ConstructError::NotTileable(
            pe_loop.into(),
            "enclosing loops are not a perfect nest".into(),
        ));
    }
    let total_work = path.iter().try_fold(1u64, |acc, l| l.trip_count.map(|tc| acc * tc));
    let total_work = total_work.ok_or_else(|| {
        ConstructError::NotTileable(pe_loop.into(), "trip count is dynamic".into())
    })?;
    let pe = *path.last().unwrap();

    let classes = classify_arrays(h, pe_loop);
    let mut buffers = Vec::new();
    for class in &classes {
        let capacity = match class.kind {
            ArrayKind::TaskDependent => Capacity::PerTile(class.chunk_elems.ok_or_else(|| {
                ConstructError::NotTileable(
                    pe_loop.into(),
                    format!("chunk of `{}` is not static", class.array),
                )
            })?),
            ArrayKind::TaskIndependent => Capacity::Fixed(class.effective_elems.ok_or_else(|| {
                ConstructError::NotTileable(
                    pe_loop.into(),
                    format!("size of `{}` is not static", class.array),
                )
            })?),
        };
        let role = match class.kind {
            ArrayKind::TaskDependent => BufferRole::TaskDependent,
            ArrayKind::TaskIndependent => BufferRole::TaskIndependent,
        };
        buffers.push(CppBuffer {
            array: class.array.clone(),
            role,
            owner: None,
            element_bits: class.element_bits,
            direction: class.direction,
            capacity,
            bit_width: BitWidth::Fixed(class.element_bits as u64),
            partition: vec![PartitionSource::None],
            extents: vec![],
            double_buffered: false,
        });
    }

    let pe_template = ModuleNode {
        id: format!("{pe_loop}_pe"),
        children: pe.children.clone(),
        buffers: vec![],
    };
    let tile = TunableParam::new(
        format!("TILE_{}", pe_loop.to_uppercase()),
        1,
        total_work,
        Increment::Seq,
        Binding::TileSize {
            pe_loop: pe_loop.into(),
        },
    );

    let mut design = CppDesign {
        kernel: h.root.id.clone(),
        pe_loop: pe_loop.into(),
        folded_loops: path[..path.len() - 1].iter().map(|l| l.id.clone()).collect(),
        total_work,
        stages: vec![],
        pe_template,
        buffers,
        schedules: vec![],
        params: vec![tile],
        tile_param: 0,
        pe_param: None,
        classes,
    };
    design.add_local_buffers(h);
    Ok(design)
}

/// Step 2: split into load/compute/store stages and double-buffer every
/// off-chip array.
pub fn apply_coarse_pipeline(mut design: CppDesign) -> CppDesign {
    let moved = |pred: fn(Direction) -> bool| -> Vec<String> {
        design
            .buffers
            .iter()
            .filter(|b| b.role == BufferRole::TaskDependent && pred(b.direction))
            .map(|b| b.array.clone())
            .collect()
    };
    let load = moved(Direction::is_loaded);
    let store = moved(Direction::is_stored);
    let compute = design
        .buffers
        .iter()
        .filter(|b| b.role != BufferRole::Local)
        .map(|b| b.array.clone())
        .collect();
    design.stages = vec![
        StageNode {
            kind: StageKind::Load,
            arrays: load,
        },
        StageNode {
            kind: StageKind::Compute,
            arrays: compute,
        },
        StageNode {
            kind: StageKind::Store,
            arrays: store,
        },
    ];
    for b in &mut design.buffers {
        if b.role != BufferRole::Local {
            b.double_buffered = true;
        }
    }
    design
}

/// Step 3: duplicate the PE; task-dependent buffers are partitioned once
/// per PE.
pub fn duplicate_pes(mut design: CppDesign) -> CppDesign {
    let pe = TunableParam::new(
        format!("PE_{}", design.pe_loop.to_uppercase()),
        1,
        design.total_work,
        Increment::Seq,
        Binding::PeCount {
            pe_loop: design.pe_loop.clone(),
        },
    );
    design.pe_param = Some(design.params.len());
    design.params.push(pe);
    for b in &mut design.buffers {
        if b.role == BufferRole::TaskDependent {
            b.partition = vec![PartitionSource::PeCount];
        }
    }
    design
}

/// Step 4: fully unroll in-PE loops with a small constant trip count and
/// no carried dependency, provided every loop nested in them qualifies too.
pub fn flatten_small_loops(mut design: CppDesign) -> CppDesign {
    fn visit(nodes: &[Node], out: &mut Vec<(String, LoopSchedule)>) -> bool {
        // returns true when every loop in `nodes` was flattened
        let mut all = true;
        for n in nodes {
            match n {
                Node::Loop(l) => {
                    let inner = visit(&l.children, out);
                    let small = matches!(l.trip_count, Some(tc) if tc < FLATTEN_LIMIT);
                    if inner && small && !l.carried_dependency {
                        out.push((
                            l.id.clone(),
                            LoopSchedule::Flattened {
                                factor: l.trip_count.unwrap(),
                            },
                        ));
                    } else {
                        all = false;
                    }
                }
                Node::Module(m) => all &= visit(&m.children, out),
                Node::Logic(_) => {}
            }
        }
        all
    }
    let mut flattened = Vec::new();
    visit(&design.pe_template.children, &mut flattened);
    design.schedules.extend(flattened);
    design.sort_schedules();
    design
}

/// Step 5: remaining in-PE loops get a tunable unroll factor when their
/// iterations are independent and every nested loop is flattened;
/// otherwise they are pipelined.
pub fn schedule_fine_grained(mut design: CppDesign) -> CppDesign {
    let loops = pe_loops_preorder(&design.pe_template);
    for l in loops {
        if design.schedule_of(&l.id).is_some() {
            continue;
        }
        let nested_all_flat = nested_loops(l)
            .iter()
            .all(|n| matches!(design.schedule_of(&n.id), Some(LoopSchedule::Flattened { .. })));
        let sched = if l.carried_dependency || !nested_all_flat {
            LoopSchedule::Pipelined
        } else {
            let max = match l.trip_count {
                Some(tc) => prev_power_of_two(tc),
                None => UNROLL_CAP,
            };
            let param = TunableParam::new(
                format!("UF_{}", l.id),
                1,
                max,
                Increment::Seq,
                Binding::Unroll {
                    loop_id: l.id.clone(),
                },
            );
            design.params.push(param);
            LoopSchedule::Unroll {
                param: design.params.len() - 1,
            }
        };
        design.schedules.push((l.id.clone(), sched));
    }
    design.sort_schedules();
    design
}

/// Step 6: off-chip-facing buffers get a power-of-two bit width between the
/// element width and the interface maximum.
pub fn reorganize_buffers(mut design: CppDesign) -> CppDesign {
    for i in 0..design.buffers.len() {
        let b = &design.buffers[i];
        if b.role == BufferRole::Local {
            continue;
        }
        let min = (b.element_bits as u64).next_power_of_two();
        let param = TunableParam::new(
            format!("BW_{}", b.array),
            min,
            AXI_MAX_BITS,
            Increment::Pow2,
            Binding::BitWidth {
                array: b.array.clone(),
            },
        );
        design.params.push(param);
        design.buffers[i].bit_width = BitWidth::Param(design.params.len() - 1);
    }
    design
}

pub fn build_design_space(design: &CppDesign) -> DesignSpace {
    DesignSpace {
        params: design.params.clone(),
    }
}

/// Runs all six construction steps for the given PE loop.
pub fn construct(h: &ArchHierarchy, pe_loop: &str) -> Result<CppDesign, ConstructError> {
    let design = apply_data_tiling(h, pe_loop)?;
    let design = apply_coarse_pipeline(design);
    let design = duplicate_pes(design);
    let design = flatten_small_loops(design);
    let design = schedule_fine_grained(design);
    Ok(reorganize_buffers(design))
}

impl CppDesign {
    pub fn space(&self) -> DesignSpace {
        build_design_space(self)
    }

    pub fn classes(&self) -> &[ArrayClass] {
        &self.classes
    }

    pub fn schedule_of(&self, loop_id: &str) -> Option<&LoopSchedule> {
        self.schedules
            .iter()
            .find(|(id, _)| id == loop_id)
            .map(|(_, s)| s)
    }

    pub fn buffer(&self, array: &str) -> Option<&CppBuffer> {
        self.buffers.iter().find(|b| b.array == array)
    }

    pub fn stage(&self, kind: StageKind) -> &StageNode {
        self.stages
            .iter()
            .find(|s| s.kind == kind)
            .expect("design has all three stages")
    }

    /// Unroll factor of an in-PE loop at a point (1 for pipelined loops).
    pub fn unroll_factor(&self, loop_id: &str, values: &[u64]) -> u64 {
        match self.schedule_of(loop_id) {
            Some(LoopSchedule::Flattened { factor }) => *factor,
            Some(LoopSchedule::Unroll { param }) => values[*param],
            Some(LoopSchedule::Pipelined) | None => 1,
        }
    }

    /// Per-dimension partition factors of a buffer at a point.
    pub fn partition_factors(&self, buf: &CppBuffer, values: &[u64]) -> Vec<u64> {
        buf.partition
            .iter()
            .enumerate()
            .map(|(d, src)| match src {
                PartitionSource::None => 1,
                PartitionSource::PeCount => self.pe_param.map_or(1, |p| values[p]),
                PartitionSource::Loops(loops) => {
                    let uf = loops
                        .iter()
                        .map(|l| self.unroll_factor(l, values))
                        .max()
                        .unwrap_or(1);
                    uf.min(buf.extents[d]).max(1)
                }
            })
            .collect()
    }

    pub fn bit_width(&self, buf: &CppBuffer, values: &[u64]) -> u64 {
        match buf.bit_width {
            BitWidth::Param(p) => values[p],
            BitWidth::Fixed(w) => w,
        }
    }

    pub fn capacity(&self, buf: &CppBuffer, tile: u64) -> u64 {
        match buf.capacity {
            Capacity::PerTile(chunk) => chunk * tile,
            Capacity::Fixed(n) => n,
        }
    }

    pub fn num_tiles(&self, tile: u64) -> u64 {
        self.total_work.div_ceil(tile)
    }

    fn sort_schedules(&mut self) {
        let order: Vec<String> = pe_loops_preorder(&self.pe_template)
            .into_iter()
            .map(|l| l.id.clone())
            .collect();
        self.schedules
            .sort_by_key(|(id, _)| order.iter().position(|o| o == id));
    }

    /// On-chip arrays declared by modules inside the PE (or by the kernel)
    /// become local buffers, partitioned by the loops that index them.
    fn add_local_buffers(&mut self, h: &ArchHierarchy) {
        let pe_modules: Vec<String> = modules_preorder(&self.pe_template)
            .into_iter()
            .map(|m| m.id.clone())
            .collect();
        let in_pe_loops: Vec<&LoopNode> = pe_loops_preorder(&self.pe_template);
        for m in h.modules() {
            let owner = if m.id == h.root.id {
                None
            } else if pe_modules.contains(&m.id) {
                Some(m.id.clone())
            } else {
                continue;
            };
            for b in m.buffers.iter().filter(|b| b.location == crate::kernel::Location::OnChip) {
                let extents: Vec<u64> = b.extents.iter().map(|e| e.unwrap_or(1)).collect();
                let partition = (0..extents.len())
                    .map(|d| {
                        let mut loops: Vec<String> = Vec::new();
                        for l in &in_pe_loops {
                            for acc in l.accesses.iter().filter(|a| a.array == b.array) {
                                if let Some(Subscript::Affine { iter: Some(it), .. }) = acc.dims.get(d) {
                                    if in_pe_loops.iter().any(|x| &x.id == it) && !loops.contains(it) {
                                        loops.push(it.clone());
                                    }
                                }
                            }
                        }
                        if loops.is_empty() {
                            PartitionSource::None
                        } else {
                            PartitionSource::Loops(loops)
                        }
                    })
                    .collect();
                self.buffers.push(CppBuffer {
                    array: b.array.clone(),
                    role: BufferRole::Local,
                    owner: owner.clone(),
                    element_bits: b.element_bits,
                    direction: b.direction,
                    capacity: Capacity::Fixed(b.elems().unwrap_or(1)),
                    bit_width: BitWidth::Fixed(b.element_bits as u64),
                    partition,
                    extents,
                    double_buffered: false,
                });
            }
        }
    }
}

fn prev_power_of_two(v: u64) -> u64 {
    1u64 << (63 - v.leading_zeros())
}

pub(crate) fn pe_loops_preorder(m: &ModuleNode) -> Vec<&LoopNode> {
    fn go<'a>(nodes: &'a [Node], out: &mut Vec<&'a LoopNode>) {
        for n in nodes {
            match n {
                Node::Loop(l) => {
                    out.push(l);
                    go(&l.children, out);
                }
                Node::Module(m) => go(&m.children, out),
                Node::Logic(_) => {}
            }
        }
    }
    let mut out = Vec::new();
    go(&m.children, &mut out);
    out
}

fn modules_preorder(m: &ModuleNode) -> Vec<&ModuleNode> {
    fn go<'a>(nodes: &'a [Node], out: &mut Vec<&'a ModuleNode>) {
        for n in nodes {
            match n {
                Node::Loop(l) => go(&l.children, out),
                Node::Module(m) => {
                    out.push(m);
                    go(&m.children, out);
                }
                Node::Logic(_) => {}
            }
        }
    }
    let mut out = Vec::new();
    go(&m.children, &mut out);
    out
}

fn nested_loops(l: &LoopNode) -> Vec<&LoopNode> {
    collect_nested(&l.children)
}

fn collect_nested(nodes: &[Node]) -> Vec<&LoopNode> {
    let mut out = Vec::new();
    for n in nodes {
        match n {
            Node::Loop(l) => {
                out.push(l);
                out.extend(collect_nested(&l.children));
            }
            Node::Module(m) => out.extend(collect_nested(&m.children)),
            Node::Logic(_) => {}
        }
    }
    out
}

/// A design with every tunable substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolvedDesign {
    pub kernel: String,
    pub pe_loop: String,
    pub values: std::collections::BTreeMap<String, u64>,
    pub tile: u64,
    pub pe_count: u64,
    pub total_work: u64,
    pub num_tiles: u64,
    /// Size of the final tile; equals `tile` when the work divides evenly.
    pub last_tile: u64,
    pub unroll: Vec<(String, u64)>,
    pub pipelined: Vec<String>,
    pub buffers: Vec<ResolvedBuffer>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolvedBuffer {
    pub array: String,
    pub role: BufferRole,
    pub copies: u64,
    pub capacity_elems: u64,
    pub bit_width: u64,
    pub partition: Vec<u64>,
    pub partition_factor: u64,
}

pub fn resolve(design: &CppDesign, point: &DesignPoint) -> Result<ResolvedDesign, ConstructError> {
    let space = design.space();
    space.check(point)?;
    let v = &point.0;
    let tile = v[design.tile_param];
    let pe_count = design.pe_param.map_or(1, |p| v[p]);
    let num_tiles = design.num_tiles(tile);
    let last_tile = design.total_work - (num_tiles - 1) * tile;

    let mut unroll = Vec::new();
    let mut pipelined = Vec::new();
    for (id, s) in &design.schedules {
        match s {
            LoopSchedule::Pipelined => pipelined.push(id.clone()),
            _ => unroll.push((id.clone(), design.unroll_factor(id, v))),
        }
    }
    let buffers = design
        .buffers
        .iter()
        .map(|b| {
            let partition = design.partition_factors(b, v);
            ResolvedBuffer {
                array: b.array.clone(),
                role: b.role,
                copies: b.copies(),
                capacity_elems: design.capacity(b, tile),
                bit_width: design.bit_width(b, v),
                partition_factor: partition.iter().product(),
                partition,
            }
        })
        .collect();
    Ok(ResolvedDesign {
        kernel: design.kernel.clone(),
        pe_loop: design.pe_loop.clone(),
        values: space.named(point),
        tile,
        pe_count,
        total_work: design.total_work,
        num_tiles,
        last_tile,
        unroll,
        pipelined,
        buffers,
        source: emit::pseudo_source(design, Some(v)),
    })
}

impl CppDesign {
    /// Code-style rendering with `auto(...)` expressions left in place.
    pub fn template_source(&self) -> String {
        emit::pseudo_source(self, None)
    }
}

#[cfg(test)]
mod tests;
