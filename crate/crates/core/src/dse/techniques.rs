//! Search techniques. Points are vectors of indices into each parameter's
//! value set.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Read-only view of the search state shared with techniques.
pub struct SearchContext<'a> {
    pub radix: &'a [usize],
    /// Best evaluated points, best first.
    pub elite: &'a [(f64, Vec<usize>)],
}

impl SearchContext<'_> {
    pub fn best(&self) -> Option<&(f64, Vec<usize>)> {
        self.elite.first()
    }

    pub fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        self.radix.iter().map(|&r| rng.gen_range(0..r)).collect()
    }
}

pub trait SearchTechnique: Send {
    fn name(&self) -> &'static str;
    fn propose(&mut self, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Vec<usize>;
    /// Score of a point this technique proposed; lower is better.
    fn observe(&mut self, _point: &[usize], _score: f64, _rng: &mut ChaCha8Rng) {}
}

/// Moves one parameter by a small or a medium step.
fn step(point: &mut [usize], radix: &[usize], rng: &mut ChaCha8Rng) {
    let movable: Vec<usize> = (0..radix.len()).filter(|&i| radix[i] > 1).collect();
    if movable.is_empty() {
        return;
    }
    let i = movable[rng.gen_range(0..movable.len())];
    let r = radix[i];
    let dist = if rng.gen_bool(0.7) {
        1
    } else {
        rng.gen_range(1..=(r / 4).max(1))
    };
    let cur = point[i];
    point[i] = if rng.gen_bool(0.5) {
        if cur >= dist {
            cur - dist
        } else {
            (cur + dist).min(r - 1)
        }
    } else if cur + dist < r {
        cur + dist
    } else {
        cur.saturating_sub(dist)
    };
}

#[derive(Debug, Default)]
pub struct UniformRandom;

impl SearchTechnique for UniformRandom {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose(&mut self, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Vec<usize> {
        ctx.random_point(rng)
    }
}

/// Greedy single-parameter moves from the current point; restarts after a
/// run of failures.
#[derive(Debug, Default)]
pub struct HillClimb {
    current: Option<(f64, Vec<usize>)>,
    failures: usize,
}

impl SearchTechnique for HillClimb {
    fn name(&self) -> &'static str {
        "hill_climb"
    }

    fn propose(&mut self, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut p = match (&self.current, ctx.best()) {
            (Some((_, c)), _) => c.clone(),
            (None, Some((_, b))) if rng.gen_bool(0.7) => b.clone(),
            _ => ctx.random_point(rng),
        };
        step(&mut p, ctx.radix, rng);
        p
    }

    fn observe(&mut self, point: &[usize], score: f64, _rng: &mut ChaCha8Rng) {
        match &self.current {
            Some((s, _)) if *s <= score => {
                self.failures += 1;
                if self.failures > 4 * point.len().max(4) {
                    self.current = None;
                    self.failures = 0;
                }
            }
            _ => {
                self.current = Some((score, point.to_vec()));
                self.failures = 0;
            }
        }
    }
}

/// Metropolis acceptance on log-scores with geometric cooling and reheating.
#[derive(Debug)]
pub struct SimulatedAnnealing {
    current: Option<(f64, Vec<usize>)>,
    temperature: f64,
}

impl Default for SimulatedAnnealing {
    fn default() -> Self {
        SimulatedAnnealing {
            current: None,
            temperature: 1.0,
        }
    }
}

impl SimulatedAnnealing {
    const COOLING: f64 = 0.99;
    const MIN_TEMPERATURE: f64 = 0.005;
    const REHEAT: f64 = 0.3;
}

impl SearchTechnique for SimulatedAnnealing {
    fn name(&self) -> &'static str {
        "annealing"
    }

    fn propose(&mut self, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut p = match &self.current {
            Some((_, c)) => c.clone(),
            None => ctx.random_point(rng),
        };
        step(&mut p, ctx.radix, rng);
        if rng.gen_bool(0.3) {
            step(&mut p, ctx.radix, rng);
        }
        p
    }

    fn observe(&mut self, point: &[usize], score: f64, rng: &mut ChaCha8Rng) {
        let u: f64 = rng.gen();
        let accept = match &self.current {
            None => true,
            Some((cur, _)) => {
                let delta = score.max(1.0).ln() - cur.max(1.0).ln();
                delta <= 0.0 || u < (-delta / self.temperature).exp()
            }
        };
        if accept {
            self.current = Some((score, point.to_vec()));
        }
        self.temperature *= Self::COOLING;
        if self.temperature < Self::MIN_TEMPERATURE {
            self.temperature = Self::REHEAT;
        }
    }
}

/// Uniform crossover of two elite parents chosen by tournament, then
/// per-gene mutation.
#[derive(Debug, Default)]
pub struct Genetic;

impl Genetic {
    fn tournament<'a>(elite: &'a [(f64, Vec<usize>)], rng: &mut ChaCha8Rng) -> &'a [usize] {
        let a = rng.gen_range(0..elite.len());
        let b = rng.gen_range(0..elite.len());
        // the elite is sorted, so the smaller index is the fitter one
        &elite[a.min(b)].1
    }
}

impl SearchTechnique for Genetic {
    fn name(&self) -> &'static str {
        "genetic"
    }

    fn propose(&mut self, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if ctx.elite.len() < 2 {
            return ctx.random_point(rng);
        }
        let pa = Self::tournament(ctx.elite, rng);
        let pb = Self::tournament(ctx.elite, rng);
        let d = ctx.radix.len();
        let mut child: Vec<usize> = (0..d)
            .map(|i| if rng.gen_bool(0.5) { pa[i] } else { pb[i] })
            .collect();
        let rate = 1.0 / d.max(1) as f64;
        for i in 0..d {
            if ctx.radix[i] > 1 && rng.gen_bool(rate) {
                if rng.gen_bool(0.5) {
                    child[i] = rng.gen_range(0..ctx.radix[i]);
                } else {
                    step(&mut child, ctx.radix, rng);
                }
            }
        }
        child
    }
}

/// The four techniques every exploration starts with.
pub fn builtin_techniques() -> Vec<Box<dyn SearchTechnique>> {
    vec![
        Box::new(UniformRandom),
        Box::new(HillClimb::default()),
        Box::new(SimulatedAnnealing::default()),
        Box::new(Genetic),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn steps_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let radix = [1, 2, 7, 100];
        let mut p = vec![0, 1, 6, 99];
        for _ in 0..10_000 {
            step(&mut p, &radix, &mut rng);
            assert!(p.iter().zip(&radix).all(|(v, r)| v < r));
            assert_eq!(p[0], 0);
        }
    }

    #[test]
    fn proposals_are_in_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let radix = [3, 5, 64];
        let elite = vec![(10.0, vec![1, 2, 3]), (12.0, vec![2, 4, 63])];
        let ctx = SearchContext {
            radix: &radix,
            elite: &elite,
        };
        for mut t in builtin_techniques() {
            for k in 0..500 {
                let p = t.propose(&ctx, &mut rng);
                assert!(p.iter().zip(&radix).all(|(v, r)| v < r), "{}", t.name());
                t.observe(&p, k as f64, &mut rng);
            }
        }
    }

    #[test]
    fn four_arms() {
        let names: Vec<_> = builtin_techniques().iter().map(|t| t.name()).collect();
        assert_eq!(names, ["random", "hill_climb", "annealing", "genetic"]);
    }
}
