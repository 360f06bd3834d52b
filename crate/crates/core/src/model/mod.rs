//! Analytical cycle and resource model of a constructed design.
//!
//! [`CostModel`] compiles a [`CppDesign`] together with report constants
//! into a tree that can be evaluated at any point of the design space
//! without string lookups.

pub mod formulas;
mod platform;
mod report;

pub use formulas::TileTimes;
pub use platform::{Budgets, PlatformConfig};
pub use report::{
    init_model, LoopConstants, LoopReport, MemoryReport, ModelConstants, ModuleConstants,
    ModuleReport, ResourceSample, SynthReport, UnrollSample,
};

use std::ops::{Add, AddAssign, Mul};

use serde::Serialize;
use thiserror::Error;

use crate::construct::{
    BitWidth, BufferRole, Capacity, CppDesign, DesignPoint, LoopSchedule, PartitionSource,
};
use crate::kernel::{ModuleNode, Node};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unroll factor must be positive")]
    ZeroUnroll,
    #[error("malformed input: {0}")]
    Syntax(String),
    #[error("report incomplete: {0}")]
    ReportIncomplete(String),
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error("loop `{0}` needs samples at two consecutive unroll factors")]
    NonConsecutiveSamples(String),
    #[error("invalid platform: {0}")]
    InvalidPlatform(String),
    #[error("point not in design space: {0}")]
    PointNotInSpace(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Resources {
    pub bram: u64,
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
}

impl Add for Resources {
    type Output = Resources;
    fn add(self, o: Resources) -> Resources {
        Resources {
            bram: self.bram + o.bram,
            lut: self.lut + o.lut,
            ff: self.ff + o.ff,
            dsp: self.dsp + o.dsp,
        }
    }
}

impl AddAssign for Resources {
    fn add_assign(&mut self, o: Resources) {
        *self = *self + o;
    }
}

impl Mul<u64> for Resources {
    type Output = Resources;
    fn mul(self, k: u64) -> Resources {
        Resources {
            bram: self.bram * k,
            lut: self.lut * k,
            ff: self.ff * k,
            dsp: self.dsp * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Computation,
    Communication,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub cycles_total: u64,
    /// Stage cycles of one full tile.
    pub cycles_load: u64,
    pub cycles_compute: u64,
    pub cycles_store: u64,
    /// `max(load + store, compute)` of one full tile.
    pub cycles_per_tile: u64,
    pub num_tiles: u64,
    pub bram_blocks: u64,
    pub luts: u64,
    pub ffs: u64,
    pub dsps: u64,
    /// Compute over communication cycles; `None` when nothing is transferred.
    pub c2c: Option<f64>,
    pub feasible_80pct: bool,
    pub bound: Bound,
}

impl CostEstimate {
    pub fn resources(&self) -> Resources {
        Resources {
            bram: self.bram_blocks,
            lut: self.luts,
            ff: self.ffs,
            dsp: self.dsps,
        }
    }

    /// Usage as a fraction of each budget: BRAM, LUT, FF, DSP.
    pub fn utilization(&self, b: &Budgets) -> [f64; 4] {
        [
            self.bram_blocks as f64 / b.bram_blocks as f64,
            self.luts as f64 / b.luts as f64,
            self.ffs as f64 / b.ffs as f64,
            self.dsps as f64 / b.dsps as f64,
        ]
    }
}

/// True when every resource is at most `percent`% of its budget.
pub fn fits(r: &Resources, b: &Budgets, percent: u64) -> bool {
    let ok = |used: u64, cap: u64| used as u128 * 100 <= cap as u128 * percent as u128;
    ok(r.bram, b.bram_blocks) && ok(r.lut, b.luts) && ok(r.ff, b.ffs) && ok(r.dsp, b.dsps)
}

#[derive(Debug, Clone, Copy)]
enum Factor {
    Fixed(u64),
    Param(usize),
}

impl Factor {
    #[inline]
    fn at(self, v: &[u64]) -> u64 {
        match self {
            Factor::Fixed(f) => f,
            Factor::Param(p) => v[p],
        }
    }
}

#[derive(Debug, Clone)]
enum DimPartition {
    One,
    Pe,
    MaxOf { factors: Vec<Factor>, cap: u64 },
}

#[derive(Debug, Clone)]
struct CBuffer {
    role: BufferRole,
    copies: u64,
    bits: u64,
    /// Elements per unit of tile (task-dependent) or in total.
    elems: u64,
    bw: Factor,
    partition: Vec<DimPartition>,
    mem: MemoryReport,
    loaded: bool,
    stored: bool,
}

#[derive(Debug, Clone)]
struct CLoop {
    k: LoopConstants,
    uf: Factor,
    children: Vec<CNode>,
}

#[derive(Debug, Clone)]
struct CModule {
    k: ModuleConstants,
    children: Vec<CNode>,
    buffers: Vec<usize>,
}

#[derive(Debug, Clone)]
enum CNode {
    Loop(CLoop),
    Module(CModule),
}

/// The model of one design, ready for evaluation.
#[derive(Debug, Clone)]
pub struct CostModel {
    design: CppDesign,
    platform: PlatformConfig,
    pe_loop: LoopConstants,
    root: ModuleConstants,
    pe_body: Vec<CNode>,
    buffers: Vec<CBuffer>,
    /// Kernel-level buffers (task-dependent and root locals).
    kernel_buffers: Vec<usize>,
    /// Buffers every PE holds a copy of.
    pe_buffers: Vec<usize>,
    warnings: Vec<String>,
}

impl CostModel {
    pub fn new(
        design: &CppDesign,
        constants: &ModelConstants,
        platform: &PlatformConfig,
    ) -> Result<Self, ModelError> {
        platform.validate()?;
        let mut buffers = Vec::new();
        let mut kernel_buffers = Vec::new();
        let mut pe_buffers = Vec::new();
        let mut owned: Vec<(String, usize)> = Vec::new();
        let factor_of = |loop_id: &str| -> Factor {
            match design.schedule_of(loop_id) {
                Some(LoopSchedule::Flattened { factor }) => Factor::Fixed(*factor),
                Some(LoopSchedule::Unroll { param }) => Factor::Param(*param),
                Some(LoopSchedule::Pipelined) | None => Factor::Fixed(1),
            }
        };
        for b in &design.buffers {
            let (elems, copies) = match b.capacity {
                Capacity::PerTile(chunk) => (chunk, b.copies()),
                Capacity::Fixed(n) => (n, b.copies()),
            };
            let partition = b
                .partition
                .iter()
                .enumerate()
                .map(|(d, src)| match src {
                    PartitionSource::None => DimPartition::One,
                    PartitionSource::PeCount => DimPartition::Pe,
                    PartitionSource::Loops(ls) => DimPartition::MaxOf {
                        factors: ls.iter().map(|l| factor_of(l)).collect(),
                        cap: b.extents[d],
                    },
                })
                .collect();
            let idx = buffers.len();
            buffers.push(CBuffer {
                role: b.role,
                copies,
                bits: b.element_bits as u64,
                elems,
                bw: match b.bit_width {
                    BitWidth::Param(p) => Factor::Param(p),
                    BitWidth::Fixed(w) => Factor::Fixed(w),
                },
                partition,
                mem: constants.memory_for(&b.array),
                loaded: b.direction.is_loaded(),
                stored: b.direction.is_stored(),
            });
            match (b.role, &b.owner) {
                (BufferRole::TaskIndependent, _) => pe_buffers.push(idx),
                (BufferRole::Local, Some(owner)) => owned.push((owner.clone(), idx)),
                _ => kernel_buffers.push(idx),
            }
        }

        fn compile(
            nodes: &[Node],
            constants: &ModelConstants,
            factor_of: &dyn Fn(&str) -> Factor,
            owned: &[(String, usize)],
        ) -> Result<Vec<CNode>, ModelError> {
            let mut out = Vec::new();
            for n in nodes {
                match n {
                    Node::Loop(l) => out.push(CNode::Loop(CLoop {
                        k: *constants.loop_constants(&l.id)?,
                        uf: factor_of(&l.id),
                        children: compile(&l.children, constants, factor_of, owned)?,
                    })),
                    Node::Module(m) => out.push(CNode::Module(compile_module(
                        m, constants, factor_of, owned,
                    )?)),
                    Node::Logic(_) => {}
                }
            }
            Ok(out)
        }
        fn compile_module(
            m: &ModuleNode,
            constants: &ModelConstants,
            factor_of: &dyn Fn(&str) -> Factor,
            owned: &[(String, usize)],
        ) -> Result<CModule, ModelError> {
            Ok(CModule {
                k: *constants.module_constants(&m.id)?,
                children: compile(&m.children, constants, factor_of, owned)?,
                buffers: owned
                    .iter()
                    .filter(|(o, _)| *o == m.id)
                    .map(|(_, i)| *i)
                    .collect(),
            })
        }

        let pe_body = compile(&design.pe_template.children, constants, &factor_of, &owned)?;
        Ok(CostModel {
            design: design.clone(),
            platform: *platform,
            pe_loop: *constants.loop_constants(&design.pe_loop)?,
            root: *constants.module_constants(&design.kernel)?,
            pe_body,
            buffers,
            kernel_buffers,
            pe_buffers,
            warnings: constants.warnings.clone(),
        })
    }

    pub fn design(&self) -> &CppDesign {
        &self.design
    }

    pub fn platform(&self) -> &PlatformConfig {
        &self.platform
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn tile(&self, v: &[u64]) -> u64 {
        v[self.design.tile_param]
    }

    fn pe_count(&self, v: &[u64]) -> u64 {
        self.design.pe_param.map_or(1, |p| v[p])
    }

    fn node_cycles(n: &CNode, v: &[u64]) -> u64 {
        match n {
            CNode::Loop(l) => {
                let iter = Self::body_cycles(&l.children, v) + l.k.c_r;
                let uf = l.uf.at(v).max(1);
                iter + l.k.ii * l.k.tc.div_ceil(uf)
            }
            CNode::Module(m) => Self::body_cycles(&m.children, v) + m.k.c_r,
        }
    }

    fn body_cycles(nodes: &[CNode], v: &[u64]) -> u64 {
        nodes.iter().map(|n| Self::node_cycles(n, v)).sum()
    }

    /// Latency of one PE processing one task.
    pub fn pe_iteration_cycles(&self, v: &[u64]) -> u64 {
        Self::body_cycles(&self.pe_body, v) + self.pe_loop.c_r
    }

    /// Compute-stage cycles for a tile of `t` tasks.
    pub fn compute_cycles(&self, v: &[u64], t: u64) -> u64 {
        let p = self.pe_count(v);
        self.root.c_r + self.pe_iteration_cycles(v) + self.pe_loop.ii * t.div_ceil(p)
    }

    fn transfer(&self, b: &CBuffer, elems: u64, v: &[u64]) -> u64 {
        formulas::transfer_cycles(elems * b.bits, b.bw.at(v), self.platform.dram_latency_cycles)
    }

    fn io_cycles(&self, v: &[u64], t: u64, load: bool) -> u64 {
        self.kernel_buffers
            .iter()
            .map(|&i| &self.buffers[i])
            .filter(|b| b.role == BufferRole::TaskDependent)
            .filter(|b| if load { b.loaded } else { b.stored })
            .map(|b| self.transfer(b, b.elems * t, v))
            .sum()
    }

    /// Stage durations of a tile of `t` tasks.
    pub fn tile_times(&self, v: &[u64], t: u64) -> TileTimes {
        TileTimes {
            load: self.io_cycles(v, t, true),
            compute: self.compute_cycles(v, t),
            store: self.io_cycles(v, t, false),
        }
    }

    /// One-time transfer of shared arrays before the first tile.
    pub fn prologue_cycles(&self, v: &[u64]) -> u64 {
        self.shared_io(v, true)
    }

    /// One-time write-back of shared arrays after the last tile.
    pub fn epilogue_cycles(&self, v: &[u64]) -> u64 {
        self.shared_io(v, false)
    }

    fn shared_io(&self, v: &[u64], load: bool) -> u64 {
        self.pe_buffers
            .iter()
            .map(|&i| &self.buffers[i])
            .filter(|b| if load { b.loaded } else { b.stored })
            .map(|b| self.transfer(b, b.elems, v))
            .sum()
    }

    /// Size of each tile: all full except possibly the last.
    pub fn tile_sizes(&self, v: &[u64]) -> (u64, u64, u64) {
        let t = self.tile(v);
        let n = self.design.num_tiles(t);
        (n, t, self.design.total_work - (n - 1) * t)
    }

    fn partition_factor(b: &CBuffer, v: &[u64], pe: u64) -> u64 {
        b.partition
            .iter()
            .map(|d| match d {
                DimPartition::One => 1,
                DimPartition::Pe => pe,
                DimPartition::MaxOf { factors, cap } => factors
                    .iter()
                    .map(|f| f.at(v))
                    .max()
                    .unwrap_or(1)
                    .min(*cap)
                    .max(1),
            })
            .product()
    }

    fn buffer_resources(&self, b: &CBuffer, v: &[u64]) -> Resources {
        let pe = self.pe_count(v);
        let s = match b.role {
            BufferRole::TaskDependent => b.elems * self.tile(v),
            _ => b.elems,
        };
        let pf = Self::partition_factor(b, v, pe);
        let bw = b.bw.at(v);
        let blocks = formulas::bram_buffer(s, pf, bw, &self.platform);
        let one = Resources {
            bram: blocks,
            lut: formulas::lut_buffer(blocks, pf, bw, b.mem.r_ctrl, b.mem.r_data),
            ff: bw + b.mem.r_ff,
            dsp: 0,
        };
        one * b.copies
    }

    fn node_resources(&self, n: &CNode, v: &[u64]) -> Resources {
        match n {
            CNode::Loop(l) => {
                let iter = self.body_resources(&l.children, v)
                    + Resources {
                        bram: 0,
                        lut: l.k.lut,
                        ff: l.k.ff,
                        dsp: l.k.dsp,
                    };
                iter * l.uf.at(v)
            }
            CNode::Module(m) => {
                let mut r = self.body_resources(&m.children, v)
                    + Resources {
                        bram: 0,
                        lut: m.k.lut,
                        ff: m.k.ff,
                        dsp: m.k.dsp,
                    };
                for &i in &m.buffers {
                    r += self.buffer_resources(&self.buffers[i], v);
                }
                r
            }
        }
    }

    fn body_resources(&self, nodes: &[CNode], v: &[u64]) -> Resources {
        nodes
            .iter()
            .fold(Resources::default(), |acc, n| acc + self.node_resources(n, v))
    }

    /// Resources of one PE, including its copy of every shared buffer.
    pub fn pe_resources(&self, v: &[u64]) -> Resources {
        let mut r = self.body_resources(&self.pe_body, v)
            + Resources {
                bram: 0,
                lut: self.pe_loop.lut,
                ff: self.pe_loop.ff,
                dsp: self.pe_loop.dsp,
            };
        for &i in &self.pe_buffers {
            r += self.buffer_resources(&self.buffers[i], v);
        }
        r
    }

    pub fn resources(&self, v: &[u64]) -> Resources {
        let mut r = self.pe_resources(v) * self.pe_count(v)
            + Resources {
                bram: 0,
                lut: self.root.lut,
                ff: self.root.ff,
                dsp: self.root.dsp,
            };
        for &i in &self.kernel_buffers {
            r += self.buffer_resources(&self.buffers[i], v);
        }
        r
    }

    /// Whole-run cycles: shared-array transfers plus the tile pipeline.
    pub fn total_cycles(&self, v: &[u64]) -> u64 {
        let (n, full, last) = self.tile_sizes(v);
        self.prologue_cycles(v)
            + formulas::pipeline_cycles(n, self.tile_times(v, full), self.tile_times(v, last))
            + self.epilogue_cycles(v)
    }

    /// Evaluates a point without checking it against the space.
    pub fn evaluate(&self, v: &[u64]) -> CostEstimate {
        let (n, full, _) = self.tile_sizes(v);
        let times = self.tile_times(v, full);
        let r = self.resources(v);
        let comm = times.load + times.store;
        let c2c = (comm > 0).then(|| times.compute as f64 / comm as f64);
        let bound = match c2c {
            Some(x) if x <= 1.0 => Bound::Communication,
            _ => Bound::Computation,
        };
        CostEstimate {
            cycles_total: self.total_cycles(v),
            cycles_load: times.load,
            cycles_compute: times.compute,
            cycles_store: times.store,
            cycles_per_tile: times.period(),
            num_tiles: n,
            bram_blocks: r.bram,
            luts: r.lut,
            ffs: r.ff,
            dsps: r.dsp,
            c2c,
            feasible_80pct: fits(&r, &self.platform.budgets, 80),
            bound,
        }
    }

    pub fn estimate(&self, point: &DesignPoint) -> Result<CostEstimate, ModelError> {
        self.design
            .space()
            .check(point)
            .map_err(|e| ModelError::PointNotInSpace(e.to_string()))?;
        Ok(self.evaluate(&point.0))
    }
}

#[cfg(test)]
mod tests;
