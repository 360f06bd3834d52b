use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;

use super::{DseError, Evaluation};
use crate::construct::{DesignPoint, DesignSpace};
use crate::model::{Budgets, CostEstimate, CostModel};

pub const DEFAULT_CAP: u64 = 1_000_000;
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveResult {
    /// Fastest feasible point; ties go to fewer BRAM blocks, then fewer
    /// LUTs, then the lexicographically smallest point.
    pub best: Option<(DesignPoint, Evaluation)>,
    pub evaluated: u64,
    pub feasible_points: u64,
}

type Key = (u64, u64, u64, u64);

/// Evaluates every point of `space`, in parallel, with parameter 0 as the
/// most significant digit.
pub fn exhaustive_min(
    space: &DesignSpace,
    evaluate: &(dyn Fn(&[u64]) -> Evaluation + Sync),
    cap: u64,
    jobs: usize,
) -> Result<ExhaustiveResult, DseError> {
    let card = space.cardinality();
    if card == BigUint::from(0u8) {
        return Err(DseError::EmptySpace);
    }
    let total = match u64::try_from(&card) {
        Ok(n) if n <= cap => n,
        _ => {
            return Err(DseError::OverCap {
                cardinality: card.to_string(),
                cap,
            })
        }
    };
    let sets = space.value_sets();
    let decode = |mut idx: u64| -> Vec<u64> {
        let mut v = vec![0; sets.len()];
        for d in (0..sets.len()).rev() {
            let r = sets[d].len() as u64;
            v[d] = sets[d][(idx % r) as usize];
            idx /= r;
        }
        v
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| DseError::Workers(e.to_string()))?;
    let chunks = total.div_ceil(CHUNK);
    let (best, feasible) = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut best: Option<(Key, Evaluation)> = None;
                let mut feasible = 0u64;
                for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                    let e = evaluate(&decode(idx));
                    if !e.feasible {
                        continue;
                    }
                    feasible += 1;
                    let key = (e.cycles, e.bram, e.lut, idx);
                    if best.as_ref().is_none_or(|(k, _)| key < *k) {
                        best = Some((key, e));
                    }
                }
                (best, feasible)
            })
            .reduce(
                || (None, 0),
                |(a, fa), (b, fb)| {
                    let best = match (a, b) {
                        (Some(x), Some(y)) => Some(if y.0 < x.0 { y } else { x }),
                        (x, y) => x.or(y),
                    };
                    (best, fa + fb)
                },
            )
    });
    Ok(ExhaustiveResult {
        best: best.map(|(k, e)| (DesignPoint(decode(k.3)), e)),
        evaluated: total,
        feasible_points: feasible,
    })
}

/// Exhaustive optimum of a model, with its full estimate.
pub fn exhaustive_search(
    model: &CostModel,
    cap: u64,
    jobs: usize,
) -> Result<Option<(DesignPoint, CostEstimate)>, DseError> {
    let budgets: Budgets = model.platform().budgets;
    let eval = |v: &[u64]| Evaluation::from_estimate(&model.evaluate(v), &budgets);
    let r = exhaustive_min(&model.design().space(), &eval, cap, jobs)?;
    Ok(r.best.map(|(p, _)| {
        let e = model.evaluate(&p.0);
        (p, e)
    }))
}
