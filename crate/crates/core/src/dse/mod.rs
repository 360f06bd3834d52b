//! Design-space exploration: a bandit allocating evaluations among search
//! techniques, plus an exhaustive oracle for small spaces.
//!
//! Each round fills a batch of [`BATCH_SIZE`] proposals. Every slot goes to
//! a technique drawn with probability proportional to its mean reward over
//! the last [`WINDOW`] proposals, mixed with an [`EPSILON`] uniform floor.
//! A proposal earns a reward only if it improves the best feasible point.
//! Batches are evaluated in parallel and folded back in proposal order, so
//! the result does not depend on the worker count.

mod exhaustive;
pub mod techniques;

pub use exhaustive::{exhaustive_min, exhaustive_search, ExhaustiveResult, DEFAULT_CAP};
pub use techniques::{builtin_techniques, SearchContext, SearchTechnique};

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::construct::{DesignPoint, DesignSpace};
use crate::model::{Budgets, CostEstimate, CostModel};

pub const BATCH_SIZE: usize = 16;
pub const WINDOW: usize = 64;
pub const EPSILON: f64 = 0.1;
/// A relative improvement of `1 / REWARD_SCALE` earns the full reward.
pub const REWARD_SCALE: f64 = 10.0;
pub const REWARD_FLOOR: f64 = 0.05;
/// Score offset separating infeasible points from every feasible one.
pub const INFEASIBLE_SCORE: f64 = 1e18;
const MAX_RETRIES: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DseError {
    #[error("design space is empty")]
    EmptySpace,
    #[error("exploration budget is zero")]
    ZeroBudget,
    #[error("design space has {cardinality} points, above the exhaustive cap of {cap}")]
    OverCap { cardinality: String, cap: u64 },
    #[error("cannot start worker pool: {0}")]
    Workers(String),
}

/// What the search needs to know about one evaluated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub cycles: u64,
    pub feasible: bool,
    /// How far the worst resource is above its allowance, as a fraction.
    pub excess: f64,
    pub bram: u64,
    pub lut: u64,
}

impl Evaluation {
    pub fn from_estimate(e: &CostEstimate, b: &Budgets) -> Self {
        let worst = e
            .utilization(b)
            .iter()
            .fold(0.0f64, |acc, u| acc.max(u / 0.8));
        Evaluation {
            cycles: e.cycles_total,
            feasible: e.feasible_80pct,
            excess: (worst - 1.0).max(0.0),
            bram: e.bram_blocks,
            lut: e.luts,
        }
    }

    /// Lower is better; every infeasible point ranks after every feasible one.
    pub fn score(&self) -> f64 {
        if self.feasible {
            self.cycles as f64
        } else {
            INFEASIBLE_SCORE * (1.0 + self.excess)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Budget {
    pub evals: Option<u64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExploreConfig {
    pub budget: Budget,
    pub seed: u64,
    /// Evaluation workers; 0 uses every core.
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TracePoint {
    /// Wall clock, so left out of JSON output to keep it reproducible.
    #[serde(skip_serializing)]
    pub time_ms: u64,
    pub evals: u64,
    pub best_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmStats {
    pub name: String,
    pub trials: u64,
    pub improvements: u64,
    pub reward_sum: f64,
    pub window_mean: f64,
    /// Fraction of all proposals allocated to this arm.
    pub share: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EvalBudget,
    TimeBudget,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub best: Vec<u64>,
    pub best_eval: Evaluation,
    pub evaluations: u64,
    pub trace: Vec<TracePoint>,
    pub arm_stats: Vec<ArmStats>,
    pub stop_reason: StopReason,
}

struct Arm {
    technique: Box<dyn SearchTechnique>,
    rng: ChaCha8Rng,
    trials: u64,
    improvements: u64,
    reward_sum: f64,
    window: VecDeque<f64>,
    enabled: bool,
}

impl Arm {
    fn window_mean(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    /// Untried arms are treated optimistically so each gets a chance.
    fn weight(&self) -> f64 {
        if self.window.is_empty() {
            1.0
        } else {
            self.window_mean()
        }
    }

    fn record(&mut self, reward: f64) {
        self.trials += 1;
        self.reward_sum += reward;
        if reward > 0.0 {
            self.improvements += 1;
        }
        self.window.push_back(reward);
        if self.window.len() > WINDOW {
            self.window.pop_front();
        }
    }
}

fn pick_arm(arms: &[Arm], rng: &mut ChaCha8Rng) -> usize {
    let enabled: Vec<usize> = (0..arms.len()).filter(|&i| arms[i].enabled).collect();
    let k = enabled.len() as f64;
    let total: f64 = enabled.iter().map(|&i| arms[i].weight()).sum();
    let mut u: f64 = rng.gen();
    for &i in &enabled {
        let p = if total > 0.0 {
            EPSILON / k + (1.0 - EPSILON) * arms[i].weight() / total
        } else {
            1.0 / k
        };
        if u < p {
            return i;
        }
        u -= p;
    }
    *enabled.last().expect("at least one arm stays enabled")
}

/// Disables arms whose recent proposals never helped while another arm's did.
fn prune_arms(arms: &mut [Arm]) {
    let any_positive = arms.iter().any(|a| a.enabled && a.window_mean() > 0.0);
    if !any_positive {
        return;
    }
    for a in arms.iter_mut() {
        if a.enabled && a.window.len() >= WINDOW && a.window_mean() == 0.0 {
            a.enabled = false;
        }
    }
}

fn reward(best: Option<f64>, e: &Evaluation) -> f64 {
    if !e.feasible {
        return 0.0;
    }
    match best {
        Some(b) if b < INFEASIBLE_SCORE => {
            let s = e.score();
            if s < b {
                ((b - s) / b * REWARD_SCALE).clamp(REWARD_FLOOR, 1.0)
            } else {
                0.0
            }
        }
        _ => 1.0,
    }
}

struct Radix {
    radix: Vec<usize>,
    sets: Vec<Vec<u64>>,
    cardinality: Option<u64>,
}

impl Radix {
    fn new(space: &DesignSpace) -> Self {
        let sets = space.value_sets();
        let card: BigUint = space.cardinality();
        Radix {
            radix: sets.iter().map(Vec::len).collect(),
            sets,
            cardinality: u64::try_from(card).ok(),
        }
    }

    fn values(&self, p: &[usize]) -> Vec<u64> {
        p.iter().zip(&self.sets).map(|(&i, s)| s[i]).collect()
    }

    fn decode(&self, mut idx: u64) -> Vec<usize> {
        let mut p = vec![0; self.radix.len()];
        for d in (0..self.radix.len()).rev() {
            let r = self.radix[d] as u64;
            p[d] = (idx % r) as usize;
            idx /= r;
        }
        p
    }
}

fn unseen_point(
    space: &Radix,
    history: &HashMap<Vec<usize>, f64>,
    batch: &HashSet<Vec<usize>>,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<usize>> {
    let seen = |p: &Vec<usize>| history.contains_key(p) || batch.contains(p);
    for _ in 0..64 {
        let p: Vec<usize> = space.radix.iter().map(|&r| rng.gen_range(0..r)).collect();
        if !seen(&p) {
            return Some(p);
        }
    }
    let card = space.cardinality?;
    let start = rng.gen_range(0..card);
    (0..card)
        .map(|k| space.decode((start + k) % card))
        .find(|p| !seen(p))
}

/// Runs the bandit search over `space` with an arbitrary evaluator.
pub fn search(
    space: &DesignSpace,
    evaluate: &(dyn Fn(&[u64]) -> Evaluation + Sync),
    techniques: Vec<Box<dyn SearchTechnique>>,
    cfg: &ExploreConfig,
) -> Result<SearchOutcome, DseError> {
    if space.cardinality() == BigUint::from(0u8) {
        return Err(DseError::EmptySpace);
    }
    if cfg.budget.evals == Some(0) || cfg.budget.seconds.is_some_and(|s| s <= 0.0) {
        return Err(DseError::ZeroBudget);
    }
    if cfg.budget.evals.is_none() && cfg.budget.seconds.is_none() {
        return Err(DseError::ZeroBudget);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| DseError::Workers(e.to_string()))?;

    let space = Radix::new(space);
    let start = Instant::now();
    let deadline = cfg.budget.seconds.map(|s| start + Duration::from_secs_f64(s));
    let max_evals = cfg.budget.evals.unwrap_or(u64::MAX);

    let mut bandit_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut arms: Vec<Arm> = techniques
        .into_iter()
        .enumerate()
        .map(|(i, technique)| Arm {
            technique,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))),
            trials: 0,
            improvements: 0,
            reward_sum: 0.0,
            window: VecDeque::new(),
            enabled: true,
        })
        .collect();
    assert!(!arms.is_empty(), "search needs at least one technique");

    let mut history: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut elite: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut best: Option<(f64, Vec<usize>, Evaluation)> = None;
    let mut trace = Vec::new();
    let mut evals = 0u64;
    let stop_reason;

    loop {
        if evals >= max_evals {
            stop_reason = StopReason::EvalBudget;
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            stop_reason = StopReason::TimeBudget;
            break;
        }
        let remaining = space
            .cardinality
            .map_or(u64::MAX, |c| c - history.len() as u64);
        if remaining == 0 {
            stop_reason = StopReason::Exhausted;
            break;
        }
        let n = (BATCH_SIZE as u64).min(max_evals - evals).min(remaining) as usize;

        let mut batch: Vec<(usize, Vec<usize>)> = Vec::with_capacity(n);
        let mut in_batch: HashSet<Vec<usize>> = HashSet::new();
        for _ in 0..n {
            let a = pick_arm(&arms, &mut bandit_rng);
            let ctx = SearchContext {
                radix: &space.radix,
                elite: &elite,
            };
            let arm = &mut arms[a];
            let mut chosen = None;
            for _ in 0..MAX_RETRIES {
                let p = arm.technique.propose(&ctx, &mut arm.rng);
                if let Some(&s) = history.get(&p) {
                    arm.technique.observe(&p, s, &mut arm.rng);
                } else if !in_batch.contains(&p) {
                    chosen = Some(p);
                    break;
                }
            }
            let p = match chosen {
                Some(p) => p,
                None => match unseen_point(&space, &history, &in_batch, &mut bandit_rng) {
                    Some(p) => p,
                    None => break,
                },
            };
            in_batch.insert(p.clone());
            batch.push((a, p));
        }
        if batch.is_empty() {
            stop_reason = StopReason::Exhausted;
            break;
        }

        let results: Vec<Evaluation> = pool.install(|| {
            batch
                .par_iter()
                .map(|(_, p)| evaluate(&space.values(p)))
                .collect()
        });

        for ((a, p), e) in batch.into_iter().zip(results) {
            evals += 1;
            let s = e.score();
            let r = reward(best.as_ref().map(|b| b.0), &e);
            arms[a].record(r);
            let arm = &mut arms[a];
            arm.technique.observe(&p, s, &mut arm.rng);
            if best.as_ref().is_none_or(|b| s < b.0) {
                best = Some((s, p.clone(), e));
                if e.feasible {
                    trace.push(TracePoint {
                        time_ms: start.elapsed().as_millis() as u64,
                        evals,
                        best_cycles: e.cycles,
                    });
                }
            }
            let pos = elite.partition_point(|(es, _)| *es <= s);
            if pos < BATCH_SIZE {
                elite.insert(pos, (s, p.clone()));
                elite.truncate(BATCH_SIZE);
            }
            history.insert(p, s);
        }
        prune_arms(&mut arms);
    }

    let (_, best_p, best_eval) = best.expect("at least one point was evaluated");
    if let Some(last) = trace.last().copied() {
        if last.evals != evals {
            trace.push(TracePoint {
                time_ms: start.elapsed().as_millis() as u64,
                evals,
                ..last
            });
        }
    }
    let total_trials: u64 = arms.iter().map(|a| a.trials).sum();
    let arm_stats = arms
        .iter()
        .map(|a| ArmStats {
            name: a.technique.name().to_string(),
            trials: a.trials,
            improvements: a.improvements,
            reward_sum: a.reward_sum,
            window_mean: a.window_mean(),
            share: a.trials as f64 / total_trials.max(1) as f64,
            enabled: a.enabled,
        })
        .collect();
    Ok(SearchOutcome {
        best: space.values(&best_p),
        best_eval,
        evaluations: evals,
        trace,
        arm_stats,
        stop_reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationResult {
    pub best_point: DesignPoint,
    pub best_values: BTreeMap<String, u64>,
    pub best_estimate: CostEstimate,
    /// False when no evaluated point met the 80% resource constraint; the
    /// best point is then the least infeasible one.
    pub feasible: bool,
    pub evaluations: u64,
    pub trace: Vec<TracePoint>,
    pub arm_stats: Vec<ArmStats>,
    pub stop_reason: StopReason,
}

impl ExplorationResult {
    /// `time_ms,evals,best_cycles` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("time_ms,evals,best_cycles\n");
        for t in &self.trace {
            out.push_str(&format!("{},{},{}\n", t.time_ms, t.evals, t.best_cycles));
        }
        out
    }
}

/// Searches the design space of a model with the built-in techniques.
pub fn explore(model: &CostModel, cfg: &ExploreConfig) -> Result<ExplorationResult, DseError> {
    let space = model.design().space();
    let budgets = model.platform().budgets;
    let eval = |v: &[u64]| Evaluation::from_estimate(&model.evaluate(v), &budgets);
    let out = search(&space, &eval, builtin_techniques(), cfg)?;
    let point = DesignPoint(out.best.clone());
    Ok(ExplorationResult {
        best_values: space.named(&point),
        best_estimate: model.evaluate(&point.0),
        feasible: out.best_eval.feasible,
        best_point: point,
        evaluations: out.evaluations,
        trace: out.trace,
        arm_stats: out.arm_stats,
        stop_reason: out.stop_reason,
    })
}

#[cfg(test)]
mod tests;
