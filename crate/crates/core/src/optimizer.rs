//! Black-box search over the tunable knobs at a fixed workload and physical design.
//!
//! Searches work on ordinal knob indices. A neighbor changes one movable knob
//! (cardinality ≥ 2) by one step, reflecting at the ends of its value list.
//! Maximization is handled by negating values, so every search minimizes a
//! cost internally. Random streams for a seed `s`: start point `derive(s, 0)`,
//! neighbor draws `derive(s, 1)`, acceptance draws `derive(s, 2)`,
//! temperature calibration `derive(s, 3)`.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ConfigurationPoint, Param, Physical, TuningDomain, Workload};
use crate::error::{Error, Result};
use crate::oracle::Target;
use crate::rng::{derive_seed, SplitMix64};
use crate::scalar::Scalar;

/// Largest knob space [`exhaustive_search`] will enumerate.
pub const EXHAUSTIVE_CAP: u128 = 1_000_000;

const KNOBS: usize = Param::KNOBS.len();

/// A metric to optimize and how to evaluate it.
pub struct Objective<'a, T> {
    target: Target,
    evaluator: Box<dyn Fn(&ConfigurationPoint) -> T + Send + Sync + 'a>,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn new(target: Target, evaluator: impl Fn(&ConfigurationPoint) -> T + Send + Sync + 'a) -> Self {
        Objective { target, evaluator: Box::new(evaluator) }
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn maximize(&self) -> bool {
        self.target.maximize()
    }

    pub fn evaluate(&self, point: &ConfigurationPoint) -> T {
        (self.evaluator)(point)
    }

    fn cost(&self, value: T) -> T {
        if self.maximize() {
            -value
        } else {
            value
        }
    }
}

/// Where the search happens: the domain plus the fixed workload and physical design.
#[derive(Debug, Clone)]
pub struct SearchContext {
    pub domain: TuningDomain,
    pub workload: Workload,
    pub physical: Physical,
}

impl SearchContext {
    pub fn new(domain: TuningDomain, workload: Workload, physical: Physical) -> Result<Self> {
        let ctx = SearchContext { domain, workload, physical };
        let mut p = ctx.point(&[0; KNOBS]);
        p.set_workload(workload);
        ctx.domain.check(&p)?;
        Ok(ctx)
    }

    fn cardinalities(&self) -> [usize; KNOBS] {
        Param::KNOBS.map(|k| self.domain.spec(k).cardinality())
    }

    fn point(&self, idx: &[usize; KNOBS]) -> ConfigurationPoint {
        let mut p = ConfigurationPoint::from_values([0; crate::domain::PARAM_COUNT]);
        p.set_workload(self.workload);
        p.set_physical(self.physical);
        for (i, k) in Param::KNOBS.into_iter().enumerate() {
            p.set(k, self.domain.spec(k).values[idx[i]]);
        }
        p
    }

    fn indices(&self, point: &ConfigurationPoint) -> Result<[usize; KNOBS]> {
        if point.workload() != self.workload || point.physical() != self.physical {
            return Err(Error::InvalidArgument(format!(
                "start point context {} {} differs from the search context {} {}",
                point.workload(),
                point.physical(),
                self.workload,
                self.physical
            )));
        }
        self.domain.check(point)?;
        let mut idx = [0; KNOBS];
        for (i, k) in Param::KNOBS.into_iter().enumerate() {
            idx[i] = self.domain.spec(k).index_of(point.get(k)).expect("checked above");
        }
        Ok(idx)
    }

    fn random_indices(&self, rng: &mut SplitMix64) -> [usize; KNOBS] {
        self.cardinalities().map(|c| rng.below(c))
    }
}

/// Temperature schedule for simulated annealing. Temperatures are in objective units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub initial_temperature: f64,
    /// Multiplier applied every `moves_per_level` moves.
    pub cooling: f64,
    pub moves_per_level: usize,
    /// Total objective evaluations, the start point included.
    pub budget: usize,
    pub seed: u64,
}

impl AnnealingSchedule {
    pub const DEFAULT_COOLING: f64 = 0.95;
    pub const DEFAULT_MOVES_PER_LEVEL: usize = 50;
    pub const DEFAULT_BUDGET: usize = 5000;
    /// Neighbor pairs drawn when calibrating the initial temperature.
    pub const CALIBRATION_SAMPLES: usize = 200;

    pub fn new(initial_temperature: f64, budget: usize, seed: u64) -> Self {
        AnnealingSchedule {
            initial_temperature,
            cooling: Self::DEFAULT_COOLING,
            moves_per_level: Self::DEFAULT_MOVES_PER_LEVEL,
            budget,
            seed,
        }
    }

    /// Default schedule with `T0` from [`calibrate_t0`].
    pub fn calibrated<T: Scalar>(objective: &Objective<T>, ctx: &SearchContext, budget: usize, seed: u64) -> Result<Self> {
        let t0 = calibrate_t0(objective, ctx, Self::CALIBRATION_SAMPLES, seed)?;
        Ok(Self::new(t0, budget, seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::InvalidArgument("search budget must be ≥ 1".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidArgument(format!("cooling factor {} outside (0, 1)", self.cooling)));
        }
        if self.moves_per_level < 1 {
            return Err(Error::InvalidArgument("moves per temperature level must be ≥ 1".into()));
        }
        if !(self.initial_temperature >= 0.0 && self.initial_temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("initial temperature {} is invalid", self.initial_temperature)));
        }
        Ok(())
    }
}

/// One evaluated point. Values are in objective units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    pub step: usize,
    pub temperature: f64,
    pub candidate: T,
    pub accepted: bool,
    pub best: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult<T> {
    pub best: ConfigurationPoint,
    /// Objective value of `best`.
    pub value: T,
    pub evaluations: usize,
    /// Per-evaluation trace; empty for exhaustive search.
    pub trace: Vec<TraceRow<T>>,
}

impl<T: Scalar> TuningResult<T> {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,temperature,candidate,accepted,best\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{},{},{},{}", r.step, r.temperature, r.candidate, r.accepted, r.best);
        }
        s
    }
}

/// Draws single-step neighbor moves.
struct Mover {
    card: [usize; KNOBS],
    movable: Vec<usize>,
}

impl Mover {
    fn new(ctx: &SearchContext) -> Self {
        let card = ctx.cardinalities();
        Mover { card, movable: (0..KNOBS).filter(|&k| card[k] >= 2).collect() }
    }

    /// `(knob, new index)`; `None` when nothing can move.
    fn draw(&self, idx: &[usize; KNOBS], rng: &mut SplitMix64) -> Option<(usize, usize)> {
        if self.movable.is_empty() {
            return None;
        }
        let k = self.movable[rng.below(self.movable.len())];
        let up = rng.below(2) == 1;
        let i = idx[k];
        let j = match (up, i) {
            (true, i) if i + 1 < self.card[k] => i + 1,
            (true, i) => i - 1,
            (false, 0) => 1,
            (false, i) => i - 1,
        };
        Some((k, j))
    }

    /// Number of distinct neighbors of `idx`.
    fn neighbor_count(&self, idx: &[usize; KNOBS]) -> usize {
        self.movable
            .iter()
            .map(|&k| if self.card[k] == 2 || idx[k] == 0 || idx[k] + 1 == self.card[k] { 1 } else { 2 })
            .sum()
    }
}

fn start_indices(ctx: &SearchContext, start: Option<&ConfigurationPoint>, seed: u64) -> Result<[usize; KNOBS]> {
    match start {
        Some(p) => ctx.indices(p),
        None => Ok(ctx.random_indices(&mut SplitMix64::substream(seed, 0))),
    }
}

/// First-improvement local search. Stops when the budget is spent or every
/// distinct neighbor of the current point has been tried without improvement.
pub fn hill_climb<T: Scalar>(
    objective: &Objective<T>,
    ctx: &SearchContext,
    start: Option<&ConfigurationPoint>,
    budget: usize,
    seed: u64,
) -> Result<TuningResult<T>> {
    if budget < 1 {
        return Err(Error::InvalidArgument("search budget must be ≥ 1".into()));
    }
    let mover = Mover::new(ctx);
    let mut moves = SplitMix64::substream(seed, 1);
    let mut cur = start_indices(ctx, start, seed)?;
    let mut cur_value = objective.evaluate(&ctx.point(&cur));
    let mut trace = vec![TraceRow { step: 0, temperature: 0.0, candidate: cur_value, accepted: true, best: cur_value }];
    let mut tried = HashSet::new();

    while trace.len() < budget {
        if tried.len() == mover.neighbor_count(&cur) {
            break;
        }
        let Some((k, j)) = mover.draw(&cur, &mut moves) else { break };
        let mut cand = cur;
        cand[k] = j;
        let v = objective.evaluate(&ctx.point(&cand));
        let improved = objective.cost(v) < objective.cost(cur_value);
        if improved {
            cur = cand;
            cur_value = v;
            tried.clear();
        } else {
            tried.insert((k, j));
        }
        trace.push(TraceRow { step: trace.len(), temperature: 0.0, candidate: v, accepted: improved, best: cur_value });
    }
    Ok(TuningResult { best: ctx.point(&cur), value: cur_value, evaluations: trace.len(), trace })
}

/// Simulated annealing from a random start; returns the best point seen.
/// Improving moves are always taken. Otherwise a move is taken with
/// probability `exp(-Δ/T)`, which is zero at `T = 0` even for `Δ = 0`.
pub fn simulated_annealing<T: Scalar>(
    objective: &Objective<T>,
    ctx: &SearchContext,
    schedule: &AnnealingSchedule,
) -> Result<TuningResult<T>> {
    simulated_annealing_from(objective, ctx, None, schedule)
}

pub fn simulated_annealing_from<T: Scalar>(
    objective: &Objective<T>,
    ctx: &SearchContext,
    start: Option<&ConfigurationPoint>,
    schedule: &AnnealingSchedule,
) -> Result<TuningResult<T>> {
    schedule.validate()?;
    let seed = schedule.seed;
    let mover = Mover::new(ctx);
    let mut moves = SplitMix64::substream(seed, 1);
    let mut accept_rng = SplitMix64::substream(seed, 2);

    let mut cur = start_indices(ctx, start, seed)?;
    let mut cur_value = objective.evaluate(&ctx.point(&cur));
    let (mut best, mut best_value) = (cur, cur_value);
    let mut temperature = schedule.initial_temperature;
    let mut trace = vec![TraceRow { step: 0, temperature, candidate: cur_value, accepted: true, best: best_value }];

    while trace.len() < schedule.budget {
        let Some((k, j)) = mover.draw(&cur, &mut moves) else { break };
        let mut cand = cur;
        cand[k] = j;
        let v = objective.evaluate(&ctx.point(&cand));
        let delta = (objective.cost(v) - objective.cost(cur_value)).as_f64();
        let accepted = if delta < 0.0 {
            true
        } else if temperature > 0.0 {
            delta == 0.0 || accept_rng.unit() < (-delta / temperature).exp()
        } else {
            false
        };
        if accepted {
            cur = cand;
            cur_value = v;
        }
        if objective.cost(v) < objective.cost(best_value) {
            best = cand;
            best_value = v;
        }
        let step = trace.len();
        trace.push(TraceRow { step, temperature, candidate: v, accepted, best: best_value });
        if step % schedule.moves_per_level == 0 {
            temperature *= schedule.cooling;
        }
    }
    Ok(TuningResult { best: ctx.point(&best), value: best_value, evaluations: trace.len(), trace })
}

/// Independent annealing runs; run 0 uses the schedule seed and run `r > 0`
/// uses `derive(seed, 100 + r)`. The best value wins, lower run index on ties.
/// Evaluations are summed and the winner's trace is kept.
pub fn simulated_annealing_restarts<T: Scalar>(
    objective: &Objective<T>,
    ctx: &SearchContext,
    schedule: &AnnealingSchedule,
    restarts: usize,
) -> Result<TuningResult<T>> {
    if restarts < 1 {
        return Err(Error::InvalidArgument("restarts must be ≥ 1".into()));
    }
    let runs: Vec<TuningResult<T>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let seed = if r == 0 { schedule.seed } else { derive_seed(schedule.seed, 100 + r as u64) };
            simulated_annealing(objective, ctx, &AnnealingSchedule { seed, ..*schedule })
        })
        .collect::<Result<_>>()?;
    let total: usize = runs.iter().map(|r| r.evaluations).sum();
    let mut winner = runs
        .into_iter()
        .reduce(|a, b| if objective.cost(b.value) < objective.cost(a.value) { b } else { a })
        .expect("restarts ≥ 1");
    winner.evaluations = total;
    Ok(winner)
}

pub fn exhaustive_search<T: Scalar>(objective: &Objective<T>, ctx: &SearchContext) -> Result<TuningResult<T>> {
    exhaustive_search_capped(objective, ctx, EXHAUSTIVE_CAP)
}

/// Evaluates every knob assignment. Ties go to the lexicographically
/// smallest index vector.
pub fn exhaustive_search_capped<T: Scalar>(objective: &Objective<T>, ctx: &SearchContext, cap: u128) -> Result<TuningResult<T>> {
    let size = ctx.domain.knob_space_size();
    if size > cap {
        return Err(Error::SpaceTooLarge { size, cap });
    }
    let card = ctx.cardinalities();
    let unrank = |mut r: usize| {
        let mut idx = [0; KNOBS];
        for k in (0..KNOBS).rev() {
            idx[k] = r % card[k];
            r /= card[k];
        }
        idx
    };
    let (rank, value) = (0..size as usize)
        .into_par_iter()
        .map(|r| (r, objective.evaluate(&ctx.point(&unrank(r)))))
        .reduce_with(|a, b| {
            let (ca, cb) = (objective.cost(a.1), objective.cost(b.1));
            if cb < ca || (cb == ca && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("knob space is never empty");
    Ok(TuningResult { best: ctx.point(&unrank(rank)), value, evaluations: size as usize, trace: Vec::new() })
}

/// Initial temperature at which the median uphill move of a random
/// neighbor pair is accepted with probability 0.8. Zero when no sampled
/// move goes uphill.
pub fn calibrate_t0<T: Scalar>(objective: &Objective<T>, ctx: &SearchContext, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidArgument("calibration needs ≥ 2 samples".into()));
    }
    let mover = Mover::new(ctx);
    let mut rng = SplitMix64::substream(seed, 3);
    let mut uphill = Vec::new();
    for _ in 0..samples {
        let a = ctx.random_indices(&mut rng);
        let Some((k, j)) = mover.draw(&a, &mut rng) else { return Ok(0.0) };
        let mut b = a;
        b[k] = j;
        let ca = objective.cost(objective.evaluate(&ctx.point(&a)));
        let cb = objective.cost(objective.evaluate(&ctx.point(&b)));
        let d = (cb - ca).as_f64().abs();
        if d > 0.0 {
            uphill.push(d);
        }
    }
    if uphill.is_empty() {
        return Ok(0.0);
    }
    uphill.sort_by(f64::total_cmp);
    let m = uphill.len();
    let median = if m % 2 == 1 { uphill[m / 2] } else { (uphill[m / 2 - 1] + uphill[m / 2]) / 2.0 };
    Ok(median / 1.25f64.ln())
}
