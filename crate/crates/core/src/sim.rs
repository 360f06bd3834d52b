//! Event-driven simulation of the double-buffered tile loop.
//!
//! Iteration `i` of the `num_tiles + 2` loop loads tile `i`, computes tile
//! `i - 1` and stores tile `i - 2`. Load and store share the off-chip port
//! and run one after the other; compute runs alongside. The next iteration
//! starts once all three have finished, which is when the ping-pong buffers
//! swap roles.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write;

use serde::Serialize;

use crate::model::CostModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    /// Fixed cycles before the first transfer.
    pub startup_cycles: u64,
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: u64,
    pub end: u64,
}

impl Span {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileTimeline {
    pub tile: u64,
    pub size: u64,
    /// Ping-pong copy holding the tile: 0 for `_x`, 1 for `_y`.
    pub buffer: u8,
    pub load: Span,
    pub compute: Span,
    pub store: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub total_cycles: u64,
    pub load_busy: u64,
    pub compute_busy: u64,
    pub store_busy: u64,
    /// One-time transfers of shared arrays.
    pub prologue: Span,
    pub epilogue: Span,
    pub utilization: StageUtilization,
    /// Empty unless tracing was requested.
    pub timeline: Vec<TileTimeline>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageUtilization {
    pub load: f64,
    pub compute: f64,
    pub store: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Load,
    Compute,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    /// An operation of iteration `iter` on `tile` finished.
    Done { iter: u64, tile: u64, stage: Stage },
    /// The port is free for the queued store of this iteration.
    StoreReady { iter: u64 },
}

struct Sim<'a> {
    model: &'a CostModel,
    v: &'a [u64],
    n: u64,
    full: u64,
    last: u64,
    now: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    pending: u32,
    tiles: Vec<TileTimeline>,
}

impl<'a> Sim<'a> {
    fn size(&self, tile: u64) -> u64 {
        if tile + 1 == self.n {
            self.last
        } else {
            self.full
        }
    }

    fn push(&mut self, at: u64, e: Event) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, e)));
    }

    fn start(&mut self, iter: u64, tile: u64, stage: Stage) {
        let t = self.model.tile_times(self.v, self.size(tile));
        let (dur, span) = match stage {
            Stage::Load => (t.load, &mut self.tiles[tile as usize].load),
            Stage::Compute => (t.compute, &mut self.tiles[tile as usize].compute),
            Stage::Store => (t.store, &mut self.tiles[tile as usize].store),
        };
        *span = Span {
            start: self.now,
            end: self.now + dur,
        };
        self.pending += 1;
        self.push(self.now + dur, Event::Done { iter, tile, stage });
    }

    fn begin_iteration(&mut self, i: u64) {
        let loads = i < self.n;
        let stores = i >= 2 && i - 2 < self.n;
        if i >= 1 && i - 1 < self.n {
            self.start(i, i - 1, Stage::Compute);
        }
        if loads {
            self.start(i, i, Stage::Load);
        }
        if stores {
            if loads {
                // the port is busy with the load; the store waits for it
                self.pending += 1;
            } else {
                self.start(i, i - 2, Stage::Store);
            }
        }
    }

    fn run(mut self) -> Vec<TileTimeline> {
        let mut iter = 0;
        self.begin_iteration(iter);
        while let Some(Reverse((at, _, e))) = self.queue.pop() {
            self.now = at;
            match e {
                Event::Done { iter: i, stage, .. } => {
                    self.pending -= 1;
                    let store_waiting = stage == Stage::Load && i >= 2 && i - 2 < self.n;
                    if store_waiting {
                        self.push(at, Event::StoreReady { iter: i });
                    }
                }
                Event::StoreReady { iter: i } => {
                    self.pending -= 1;
                    self.start(i, i - 2, Stage::Store);
                }
            }
            if self.pending == 0 && self.queue.is_empty() {
                iter += 1;
                if iter < self.n + 2 {
                    self.begin_iteration(iter);
                }
            }
        }
        self.tiles
    }
}

/// Simulates the design at a point.
pub fn simulate(model: &CostModel, v: &[u64], cfg: &SimConfig) -> SimResult {
    let (n, full, last) = model.tile_sizes(v);
    let prologue = Span {
        start: cfg.startup_cycles,
        end: cfg.startup_cycles + model.prologue_cycles(v),
    };
    let tiles = (0..n)
        .map(|t| TileTimeline {
            tile: t,
            size: if t + 1 == n { last } else { full },
            buffer: (t % 2) as u8,
            load: Span::default(),
            compute: Span::default(),
            store: Span::default(),
        })
        .collect();
    let sim = Sim {
        model,
        v,
        n,
        full,
        last,
        now: prologue.end,
        queue: BinaryHeap::new(),
        seq: 0,
        pending: 0,
        tiles,
    };
    let tiles = sim.run();
    let pipeline_end = tiles
        .iter()
        .map(|t| t.store.end.max(t.compute.end).max(t.load.end))
        .max()
        .unwrap_or(prologue.end);
    let epilogue = Span {
        start: pipeline_end,
        end: pipeline_end + model.epilogue_cycles(v),
    };
    let load_busy = tiles.iter().map(|t| t.load.len()).sum::<u64>();
    let compute_busy = tiles.iter().map(|t| t.compute.len()).sum::<u64>();
    let store_busy = tiles.iter().map(|t| t.store.len()).sum::<u64>();
    let total = epilogue.end;
    let frac = |busy: u64| if total == 0 { 0.0 } else { busy as f64 / total as f64 };
    SimResult {
        total_cycles: total,
        load_busy,
        compute_busy,
        store_busy,
        prologue,
        epilogue,
        utilization: StageUtilization {
            load: frac(load_busy),
            compute: frac(compute_busy),
            store: frac(store_busy),
        },
        timeline: if cfg.trace { tiles } else { Vec::new() },
    }
}

impl SimResult {
    /// `tile,stage,start_cycle,end_cycle` rows for Gantt charts.
    pub fn gantt_csv(&self) -> String {
        let mut out = String::from("tile,stage,start_cycle,end_cycle\n");
        if !self.prologue.is_empty() {
            let _ = writeln!(out, ",prologue,{},{}", self.prologue.start, self.prologue.end);
        }
        for t in &self.timeline {
            for (name, s) in [("load", t.load), ("compute", t.compute), ("store", t.store)] {
                let _ = writeln!(out, "{},{name},{},{}", t.tile, s.start, s.end);
            }
        }
        if !self.epilogue.is_empty() {
            let _ = writeln!(out, ",epilogue,{},{}", self.epilogue.start, self.epilogue.end);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageDivergence {
    pub model: u64,
    pub simulated: u64,
    pub percent: f64,
}

impl StageDivergence {
    fn new(model: u64, simulated: u64) -> Self {
        let percent = if simulated == 0 {
            if model == 0 {
                0.0
            } else {
                100.0
            }
        } else {
            (model as f64 - simulated as f64).abs() / simulated as f64 * 100.0
        };
        StageDivergence {
            model,
            simulated,
            percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub total: StageDivergence,
    pub load: StageDivergence,
    pub compute: StageDivergence,
    pub store: StageDivergence,
}

/// Runs the model and the simulator on the same point. Stage entries
/// compare busy cycles summed over all tiles.
pub fn compare_with_model(model: &CostModel, v: &[u64], cfg: &SimConfig) -> (SimResult, Divergence) {
    let sim = simulate(model, v, cfg);
    let (n, full, last) = model.tile_sizes(v);
    let f = model.tile_times(v, full);
    let l = model.tile_times(v, last);
    let sum = |a: u64, b: u64| (n - 1) * a + b;
    let d = Divergence {
        total: StageDivergence::new(model.total_cycles(v), sim.total_cycles),
        load: StageDivergence::new(sum(f.load, l.load), sim.load_busy),
        compute: StageDivergence::new(sum(f.compute, l.compute), sim.compute_busy),
        store: StageDivergence::new(sum(f.store, l.store), sim.store_busy),
    };
    (sim, d)
}
