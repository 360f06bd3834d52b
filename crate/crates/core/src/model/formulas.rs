//! Closed-form cycle and resource formulas. Everything here is a pure
//! function of integers so the evaluator and the tests share one source.

use super::{ModelError, PlatformConfig};

/// Loop latency: `C_iter + II * ceil(TC / UF)`.
pub fn cycles_loop(c_iter: u64, ii: u64, tc: u64, uf: u64) -> Result<u64, ModelError> {
    if uf == 0 {
        return Err(ModelError::ZeroUnroll);
    }
    Ok(c_iter + ii * tc.div_ceil(uf))
}

/// Iteration latency: sub-loops, submodules and standalone logic in sequence.
pub fn cycles_iter(sub_loops: &[u64], submodules: &[u64], c_r: u64) -> u64 {
    sub_loops.iter().sum::<u64>() + submodules.iter().sum::<u64>() + c_r
}

/// Module latency. Same shape as [`cycles_iter`]: a loop iteration is a
/// module of its own.
pub fn cycles_module(loops: &[u64], submodules: &[u64], c_r: u64) -> u64 {
    cycles_iter(loops, submodules, c_r)
}

/// Burst transfer time of one stage: each array moves `bits` over a port
/// of width `bw` and pays a fixed access latency.
pub fn cycles_io(transfers: &[(u64, u64)], latency: u64) -> u64 {
    transfers
        .iter()
        .map(|&(bits, bw)| transfer_cycles(bits, bw, latency))
        .sum()
}

pub fn transfer_cycles(bits: u64, bw: u64, latency: u64) -> u64 {
    bits.div_ceil(bw) + latency
}

/// Physical blocks needed side by side to reach a width of `b` bits.
pub fn n_blk(b: u64, b_phy: u64) -> u64 {
    b.div_ceil(b_phy)
}

/// Blocks used by one partition of `s` entries at width `b`.
pub fn partition_blocks(s: u64, b: u64, p: &PlatformConfig) -> u64 {
    let n = n_blk(b, p.b_phy);
    s.div_ceil(n * p.s_unit) * n
}

/// Blocks used by a buffer of `s` entries split into `pf` partitions.
pub fn bram_buffer(s: u64, pf: u64, bw: u64, p: &PlatformConfig) -> u64 {
    pf * partition_blocks(s.div_ceil(pf), bw, p)
}

/// Module BRAM: local buffers plus duplicated submodules.
pub fn bram_module(buffers: &[u64], submodules: &[(u64, u64)]) -> u64 {
    buffers.iter().sum::<u64>() + submodules.iter().map(|(b, df)| b * df).sum::<u64>()
}

/// LUTs of a k-to-1 multiplexer built from 4-input stages.
pub fn lut_mux(k: u64) -> u64 {
    let mut total = 0;
    let mut div = 4u64;
    let mut levels = 0;
    // ceil(log4 k) levels
    while pow4(levels) < k {
        levels += 1;
    }
    for _ in 0..levels {
        total += k.div_ceil(div);
        div = div.saturating_mul(4);
    }
    total
}

fn pow4(e: u32) -> u64 {
    4u64.saturating_pow(e)
}

/// Buffer LUTs: control/data logic per block plus the partition mux.
pub fn lut_buffer(blocks: u64, pf: u64, bw: u64, r_ctrl: u64, r_data: u64) -> u64 {
    blocks * (r_ctrl + r_data) + lut_mux(pf) * bw
}

/// Module LUTs: unrolled loop iterations, buffers, duplicated submodules
/// and standalone logic.
pub fn lut_module(loops: &[(u64, u64)], buffers: &[u64], submodules: &[(u64, u64)], r: u64) -> u64 {
    loops.iter().map(|(l, uf)| l * uf).sum::<u64>()
        + buffers.iter().sum::<u64>()
        + submodules.iter().map(|(l, df)| l * df).sum::<u64>()
        + r
}

pub fn dsp_module(loops: &[(u64, u64)], submodules: &[(u64, u64)], r: u64) -> u64 {
    lut_module(loops, &[], submodules, r)
}

/// Stage durations of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileTimes {
    pub load: u64,
    pub compute: u64,
    pub store: u64,
}

impl TileTimes {
    /// Steady-state cycles per tile: load and store share the off-chip
    /// port, compute overlaps both.
    pub fn period(&self) -> u64 {
        (self.load + self.store).max(self.compute)
    }
}

/// Whole-run cycles of the double-buffered loop that runs `n + 2`
/// iterations: iteration `i` loads tile `i`, computes tile `i-1` and stores
/// tile `i-2`, and ends when the slower of (load + store) and compute does.
/// All tiles but the last are `full`.
pub fn pipeline_cycles(n: u64, full: TileTimes, last: TileTimes) -> u64 {
    match n {
        0 => 0,
        1 => last.load + last.compute + last.store,
        2 => {
            full.load
                + last.load.max(full.compute)
                + full.store.max(last.compute)
                + last.store
        }
        _ => {
            full.load
                + full.load.max(full.compute)
                + (n - 3) * full.period()
                + (last.load + full.store).max(full.compute)
                + full.store.max(last.compute)
                + last.store
        }
    }
}
