//! Legality checks for mapping a loop nest onto the tiled PE template.
//!
//! A loop qualifies as PE loop when it can be tiled, every array it slices
//! has a fixed, non-overlapping chunk per iteration, the shared arrays fit
//! on chip once per PE, and the smallest configuration fits the device.

use serde::Serialize;

use crate::construct::construct;
use crate::kernel::{ArchHierarchy, Direction, Location, Subscript};
use crate::model::{fits, init_model, CostModel, ModelError, PlatformConfig, SynthReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    TaskDependent,
    TaskIndependent,
}

/// A subscript that uses the PE-loop iterator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeSubscript {
    pub loop_id: String,
    pub dim: usize,
    pub coeff: Option<i64>,
    pub offset: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArrayClass {
    pub array: String,
    pub kind: ArrayKind,
    /// Elements consumed per PE-loop iteration; `None` when not static.
    pub chunk_elems: Option<u64>,
    /// Total elements; `None` when some extent is not static.
    pub effective_elems: Option<u64>,
    pub element_bits: u32,
    pub direction: Direction,
    pub pe_subscripts: Vec<PeSubscript>,
    pub has_irregular: bool,
    /// Loops enclosing the PE loop that also index this array.
    pub enclosing_iters: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Tiling,
    TaskDependent,
    TaskIndependent,
    KernelSize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckFailure {
    pub loop_id: String,
    pub check: CheckName,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LegalizationVerdict {
    pub legal: bool,
    pub pe_loop_candidates: Vec<String>,
    pub failures: Vec<CheckFailure>,
}

/// Outcome of one check: `Err` carries the failure message.
pub type CheckResult = Result<(), String>;

pub fn classify_arrays(h: &ArchHierarchy, pe_loop: &str) -> Vec<ArrayClass> {
    let enclosing: Vec<String> = h
        .loop_path(pe_loop)
        .map(|p| p[..p.len() - 1].iter().map(|l| l.id.clone()).collect())
        .unwrap_or_default();
    let loops = h.loops();
    h.root
        .buffers
        .iter()
        .filter(|b| b.location == Location::OffChip)
        .map(|b| {
            let mut pe_subscripts = Vec::new();
            let mut has_irregular = false;
            let mut enclosing_iters: Vec<String> = Vec::new();
            for l in &loops {
                for acc in l.accesses.iter().filter(|a| a.array == b.array) {
                    for (dim, s) in acc.dims.iter().enumerate() {
                        match s {
                            Subscript::Irregular => has_irregular = true,
                            Subscript::Affine {
                                iter: Some(it),
                                coeff,
                                offset,
                            } => {
                                if it == pe_loop {
                                    pe_subscripts.push(PeSubscript {
                                        loop_id: l.id.clone(),
                                        dim,
                                        coeff: *coeff,
                                        offset: *offset,
                                    });
                                } else if enclosing.contains(it) && !enclosing_iters.contains(it) {
                                    enclosing_iters.push(it.clone());
                                }
                            }
                            Subscript::Affine { iter: None, .. } => {}
                        }
                    }
                }
            }
            let kind = if pe_subscripts.is_empty() {
                ArrayKind::TaskIndependent
            } else {
                ArrayKind::TaskDependent
            };
            let chunk_elems = match kind {
                ArrayKind::TaskIndependent => None,
                ArrayKind::TaskDependent => {
                    let chunks: Vec<Option<u64>> = pe_subscripts
                        .iter()
                        .map(|s| {
                            let c = s.coeff.filter(|&c| c > 0)? as u64;
                            Some(c * b.stride(s.dim)?)
                        })
                        .collect();
                    match chunks.first() {
                        Some(Some(c)) if chunks.iter().all(|x| *x == Some(*c)) => Some(*c),
                        _ => None,
                    }
                }
            };
            ArrayClass {
                array: b.array.clone(),
                kind,
                chunk_elems,
                effective_elems: b.elems(),
                element_bits: b.element_bits,
                direction: b.direction,
                pe_subscripts,
                has_irregular,
                enclosing_iters,
            }
        })
        .collect()
}

/// The PE loop must sit on the perfect spine of the nest and the folded
/// iteration count must be static.
pub fn check_tiling(h: &ArchHierarchy, pe_loop: &str) -> CheckResult {
    let path = h
        .loop_path(pe_loop)
        .ok_or_else(|| format!("loop `{pe_loop}` not found"))?;
    if !h.on_perfect_spine(pe_loop) {
        return Err(format!(
            "loop `{pe_loop}` is not reached through a perfect loop nest"
        ));
    }
    if let Some(l) = path.iter().find(|l| l.trip_count.is_none()) {
        return Err(format!(
            "total work is dynamic: trip count of `{}` is not static",
            l.id
        ));
    }
    Ok(())
}

pub fn check_task_dependent(classes: &[ArrayClass]) -> CheckResult {
    for c in classes.iter().filter(|c| c.kind == ArrayKind::TaskDependent) {
        if c.has_irregular {
            return Err(format!("`{}`: irregular access to a task-dependent array", c.array));
        }
        if let Some(it) = c.enclosing_iters.first() {
            return Err(format!(
                "`{}`: also indexed by enclosing loop `{it}`",
                c.array
            ));
        }
        let Some(chunk) = c.chunk_elems else {
            return Err(format!(
                "`{}`: cannot statically allocate a chunk whose length is not constant",
                c.array
            ));
        };
        for s in &c.pe_subscripts {
            // coefficients are known and positive once the chunk is static
            let coeff = s.coeff.unwrap_or(0);
            match s.offset {
                Some(b) if b >= 0 && b < coeff => {}
                Some(b) => {
                    return Err(format!(
                        "`{}`: overlapping chunks (offset {b} with coefficient {coeff}, chunk {chunk})",
                        c.array
                    ))
                }
                None => {
                    return Err(format!(
                        "`{}`: overlapping chunks (offset is not static)",
                        c.array
                    ))
                }
            }
        }
    }
    Ok(())
}

/// Every PE keeps its own copy of each task-independent array; the copies
/// for `max_pe` PEs must fit in the on-chip memory.
pub fn check_task_independent(
    classes: &[ArrayClass],
    platform: &PlatformConfig,
    max_pe: u64,
) -> CheckResult {
    let mut bits: u128 = 0;
    for c in classes.iter().filter(|c| c.kind == ArrayKind::TaskIndependent) {
        let Some(n) = c.effective_elems else {
            return Err(format!("`{}`: size not inferable", c.array));
        };
        bits += n as u128 * c.element_bits as u128;
    }
    let need = bits * max_pe.max(1) as u128;
    let capacity =
        platform.budgets.bram_blocks as u128 * platform.s_unit as u128 * platform.b_phy as u128;
    if need > capacity {
        return Err(format!(
            "task-independent arrays need {need} bits for {max_pe} PEs, on-chip memory holds {capacity}"
        ));
    }
    Ok(())
}

/// Evaluates the model at the smallest configuration against the full
/// device budget.
pub fn check_kernel_size(
    h: &ArchHierarchy,
    pe_loop: &str,
    report: &SynthReport,
    platform: &PlatformConfig,
) -> Result<CheckResult, ModelError> {
    let design = match construct(h, pe_loop) {
        Ok(d) => d,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let constants = init_model(report, h)?;
    let model = CostModel::new(&design, &constants, platform)?;
    let min = design.space().minimal_point();
    let r = model.resources(&min.0);
    if fits(&r, &platform.budgets, 100) {
        Ok(Ok(()))
    } else {
        let b = platform.budgets;
        Ok(Err(format!(
            "minimal configuration exceeds the device: BRAM {}/{}, LUT {}/{}, FF {}/{}, DSP {}/{}",
            r.bram, b.bram_blocks, r.lut, b.luts, r.ff, b.ffs, r.dsp, b.dsps
        )))
    }
}

/// Runs every check for one candidate; returns the first failure.
pub fn check_candidate(
    h: &ArchHierarchy,
    pe_loop: &str,
    report: &SynthReport,
    platform: &PlatformConfig,
) -> Result<Option<CheckFailure>, ModelError> {
    let fail = |check, message| {
        Some(CheckFailure {
            loop_id: pe_loop.to_string(),
            check,
            message,
        })
    };
    if let Err(m) = check_tiling(h, pe_loop) {
        return Ok(fail(CheckName::Tiling, m));
    }
    let classes = classify_arrays(h, pe_loop);
    if let Err(m) = check_task_dependent(&classes) {
        return Ok(fail(CheckName::TaskDependent, m));
    }
    let max_pe = h
        .loop_path(pe_loop)
        .map(|p| p.iter().filter_map(|l| l.trip_count).product())
        .unwrap_or(1);
    if let Err(m) = check_task_independent(&classes, platform, max_pe) {
        return Ok(fail(CheckName::TaskIndependent, m));
    }
    if let Err(m) = check_kernel_size(h, pe_loop, report, platform)? {
        return Ok(fail(CheckName::KernelSize, m));
    }
    Ok(None)
}

/// Tries every loop of the nest as PE loop.
pub fn legalize(
    h: &ArchHierarchy,
    report: &SynthReport,
    platform: &PlatformConfig,
) -> Result<LegalizationVerdict, ModelError> {
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for l in h.loops() {
        match check_candidate(h, &l.id, report, platform)? {
            None => candidates.push(l.id.clone()),
            Some(f) => failures.push(f),
        }
    }
    Ok(LegalizationVerdict {
        legal: !candidates.is_empty(),
        pe_loop_candidates: candidates,
        failures,
    })
}
