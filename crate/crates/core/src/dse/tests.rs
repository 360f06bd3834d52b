use rand::Rng;

use super::*;
use crate::construct::{construct, Binding, Increment, TunableParam};
use crate::kernel::{build_hierarchy, parse_kernel_spec};
use crate::model::{init_model, PlatformConfig, SynthReport};

fn space(ranges: &[(u64, u64)]) -> DesignSpace {
    DesignSpace {
        params: ranges
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                TunableParam::new(
                    format!("p{i}"),
                    lo,
                    hi,
                    Increment::Seq,
                    Binding::Unroll { loop_id: format!("l{i}") },
                )
            })
            .collect(),
    }
}

fn feasible(cycles: u64) -> Evaluation {
    Evaluation {
        cycles,
        feasible: true,
        excess: 0.0,
        bram: 0,
        lut: 0,
    }
}

fn evals(n: u64) -> ExploreConfig {
    ExploreConfig {
        budget: Budget {
            evals: Some(n),
            seconds: None,
        },
        seed: 7,
        jobs: 1,
    }
}

fn bowl(v: &[u64]) -> Evaluation {
    let d: u64 = v.iter().zip([37u64, 11, 50]).map(|(&x, c)| x.abs_diff(c).pow(2)).sum();
    feasible(d + 1)
}

#[test]
fn single_point_space_is_exhausted() {
    let s = space(&[(3, 3), (5, 5)]);
    let out = search(&s, &bowl, builtin_techniques(), &evals(100)).unwrap();
    assert_eq!(out.evaluations, 1);
    assert_eq!(out.best, [3, 5]);
    assert_eq!(out.stop_reason, StopReason::Exhausted);
}

#[test]
fn budget_of_one() {
    let s = space(&[(1, 64), (1, 64)]);
    let out = search(&s, &bowl, builtin_techniques(), &evals(1)).unwrap();
    assert_eq!(out.evaluations, 1);
    assert_eq!(out.stop_reason, StopReason::EvalBudget);
    assert_eq!(
        search(&s, &bowl, builtin_techniques(), &evals(0)).unwrap_err(),
        DseError::ZeroBudget
    );
}

#[test]
fn small_space_is_fully_enumerated() {
    let s = space(&[(1, 6), (1, 7)]);
    let out = search(&s, &bowl, builtin_techniques(), &evals(1000)).unwrap();
    assert_eq!(out.evaluations, 42);
    assert_eq!(out.stop_reason, StopReason::Exhausted);
    assert_eq!(out.best, [6, 7]);
}

#[test]
fn each_local_technique_finds_the_bowl_minimum() {
    let s = space(&[(1, 64), (1, 64), (1, 64)]);
    let solo: Vec<fn() -> Box<dyn SearchTechnique>> = vec![
        || Box::new(techniques::HillClimb::default()),
        || Box::new(techniques::SimulatedAnnealing::default()),
        || Box::new(techniques::Genetic),
    ];
    for make in solo {
        let name = make().name();
        let out = search(&s, &bowl, vec![make()], &evals(3000)).unwrap();
        assert_eq!(out.best, [37, 11, 50], "{name}");
    }
    let random = search(&s, &bowl, vec![Box::new(techniques::UniformRandom)], &evals(3000)).unwrap();
    // 3000 of 262144 points: expect the best within a few steps of the centre
    assert!(random.best_eval.cycles < 200, "{}", random.best_eval.cycles);
}

/// Walks down one index at a time from its own last proposal.
#[derive(Default)]
struct Descend(Option<usize>);

impl SearchTechnique for Descend {
    fn name(&self) -> &'static str {
        "descend"
    }
    fn propose(&mut self, ctx: &SearchContext, _rng: &mut ChaCha8Rng) -> Vec<usize> {
        let next = match self.0 {
            Some(p) => p.saturating_sub(1),
            None => ctx.radix[0] / 2 - 1,
        };
        self.0 = Some(next);
        vec![next]
    }
}

/// Only ever proposes points from the useless upper half.
struct Upper(&'static str);

impl SearchTechnique for Upper {
    fn name(&self) -> &'static str {
        self.0
    }
    fn propose(&mut self, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Vec<usize> {
        vec![rng.gen_range(ctx.radix[0] / 2..ctx.radix[0])]
    }
}

#[test]
fn bandit_favours_the_only_improving_arm() {
    let s = space(&[(1, 4096)]);
    let eval = |v: &[u64]| feasible(if v[0] <= 2048 { v[0] } else { 1_000_000 });
    let arms: Vec<Box<dyn SearchTechnique>> = vec![
        Box::new(Upper("a")),
        Box::new(Descend::default()),
        Box::new(Upper("b")),
        Box::new(Upper("c")),
    ];
    let out = search(&s, &eval, arms, &evals(1200)).unwrap();
    let good = &out.arm_stats[1];
    assert_eq!(good.name, "descend");
    for (i, a) in out.arm_stats.iter().enumerate() {
        if i != 1 {
            assert!(good.share > a.share, "{:?}", out.arm_stats);
        }
    }
    assert!(good.share > 0.8, "{:?}", out.arm_stats);
}

#[test]
fn trace_is_monotone() {
    let s = space(&[(1, 64), (1, 64), (1, 64)]);
    let out = search(&s, &bowl, builtin_techniques(), &evals(500)).unwrap();
    assert!(out.trace.windows(2).all(|w| w[1].best_cycles <= w[0].best_cycles));
    assert!(out.trace.windows(2).all(|w| w[1].evals > w[0].evals));
    assert_eq!(out.trace.last().unwrap().evals, 500);
}

#[test]
fn infeasible_points_rank_by_excess() {
    let a = Evaluation {
        feasible: false,
        excess: 0.1,
        ..feasible(5)
    };
    let b = Evaluation { excess: 0.5, ..a };
    assert!(feasible(10u64.pow(17)).score() < a.score());
    assert!(a.score() < b.score());
}

fn nw_small() -> CostModel {
    let h = build_hierarchy(&parse_kernel_spec(include_str!("../../fixtures/kernels/nw-small.json")).unwrap());
    let d = construct(&h, "pairs").unwrap();
    let c = init_model(
        &SynthReport::from_json(include_str!("../../fixtures/reports/nw-small.json")).unwrap(),
        &h,
    )
    .unwrap();
    CostModel::new(&d, &c, &PlatformConfig::default()).unwrap()
}

fn comparable(r: &ExplorationResult) -> impl PartialEq + std::fmt::Debug {
    (
        r.best_point.clone(),
        r.evaluations,
        r.trace.iter().map(|t| (t.evals, t.best_cycles)).collect::<Vec<_>>(),
        r.arm_stats.clone(),
    )
}

#[test]
fn same_seed_same_result() {
    let m = nw_small();
    let a = explore(&m, &evals(600)).unwrap();
    let b = explore(&m, &evals(600)).unwrap();
    assert_eq!(comparable(&a), comparable(&b));
    let c = explore(&m, &ExploreConfig { seed: 8, ..evals(600) }).unwrap();
    assert_ne!(comparable(&a), comparable(&c));
}

#[test]
fn worker_count_does_not_change_the_result() {
    let m = nw_small();
    let serial = explore(&m, &evals(600)).unwrap();
    let parallel = explore(&m, &ExploreConfig { jobs: 4, ..evals(600) }).unwrap();
    assert_eq!(comparable(&serial), comparable(&parallel));
}

#[test]
fn exhaustive_tie_break() {
    let s = space(&[(1, 4), (1, 4)]);
    // every point with p0 + p1 == 5 ties on cycles; fewer BRAM wins, then order
    let eval = |v: &[u64]| Evaluation {
        bram: v[0].min(2),
        ..feasible(if v[0] + v[1] == 5 { 1 } else { 9 })
    };
    let r = exhaustive_min(&s, &eval, DEFAULT_CAP, 1).unwrap();
    assert_eq!(r.best.unwrap().0 .0, [1, 4]);
    assert_eq!((r.evaluated, r.feasible_points), (16, 16));
    assert!(matches!(
        exhaustive_min(&s, &eval, 15, 1),
        Err(DseError::OverCap { .. })
    ));
}

#[test]
fn exhaustive_parallel_matches_serial() {
    let m = nw_small();
    let a = exhaustive_search(&m, DEFAULT_CAP, 1).unwrap().unwrap();
    let b = exhaustive_search(&m, DEFAULT_CAP, 3).unwrap().unwrap();
    assert_eq!(a.0, b.0);
    assert!(a.1.feasible_80pct);
}

#[test]
fn time_budget_is_honoured() {
    let s = space(&[(1, 4096), (1, 4096), (1, 4096)]);
    let cfg = ExploreConfig {
        budget: Budget {
            evals: None,
            seconds: Some(0.5),
        },
        seed: 1,
        jobs: 1,
    };
    let t = Instant::now();
    let out = search(&s, &bowl, builtin_techniques(), &cfg).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    assert_eq!(out.stop_reason, StopReason::TimeBudget);
    assert!((0.5..1.5).contains(&elapsed), "{elapsed}");
}
