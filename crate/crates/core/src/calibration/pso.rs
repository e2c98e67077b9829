use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FittedParams, ModelKind};
use crate::dataset::TrajectoryPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub standby_pool_size: usize,
    /// Inertia at the first iteration, decayed linearly to `inertia_end`.
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_iters: usize,
    /// Iterations between standby pool updates and exchanges.
    pub swap_interval: usize,
    /// Per-parameter `(lower, upper)`; empty means the model's default box.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    /// Velocity limit as a fraction of each bound range.
    pub velocity_fraction: f64,
    /// Stop when the best loss improves by less than `stall_tolerance` over
    /// this many iterations.
    pub stall_window: usize,
    pub stall_tolerance: f64,
    /// Uniform draws tried per particle before the feasible region is
    /// declared empty.
    pub max_resample: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            standby_pool_size: 20,
            inertia_start: 0.72,
            inertia_end: 0.4,
            c1: 1.5,
            c2: 1.5,
            max_iters: 300,
            swap_interval: 10,
            bounds: Vec::new(),
            seed: 0,
            velocity_fraction: 0.2,
            stall_window: 30,
            stall_tolerance: 1e-4,
            max_resample: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsoError {
    #[error("no trajectory pairs to calibrate on")]
    EmptyPairs,
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("no parameter vector inside the bounds satisfies the model constraints")]
    NoFeasibleRegion,
}

impl PsoConfig {
    fn check(&self, dim: usize) -> Result<(), PsoError> {
        let bad = |msg: String| Err(PsoError::InvalidConfig(msg));
        if self.swarm_size == 0 || self.max_iters == 0 || self.swap_interval == 0 || self.max_resample == 0 {
            return bad("swarm_size, max_iters, swap_interval and max_resample must be >= 1".into());
        }
        if [self.inertia_start, self.inertia_end, self.c1, self.c2].iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("inertia and acceleration coefficients must be finite and >= 0".into());
        }
        if !(self.velocity_fraction > 0.0 && self.velocity_fraction.is_finite()) {
            return bad(format!("velocity_fraction must be positive (got {})", self.velocity_fraction));
        }
        if self.bounds.len() != dim {
            return bad(format!("expected {dim} bounds, got {}", self.bounds.len()));
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("bound {i}: lower {lo} must be below upper {hi}"));
            }
        }
        Ok(())
    }

    fn inertia(&self, iter: usize) -> f64 {
        if self.max_iters <= 1 {
            return self.inertia_start;
        }
        let frac = iter as f64 / (self.max_iters - 1) as f64;
        self.inertia_start + (self.inertia_end - self.inertia_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoOutcome {
    pub best_position: Vec<f64>,
    pub best_loss: f64,
    /// Best-so-far loss after initialisation and after each iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Positions that left the feasible region and were re-drawn.
    pub constraint_rejections: usize,
    /// Objective calls on infeasible positions. Always 0 unless the optimizer
    /// is broken.
    pub violating_evaluations: usize,
}

struct Swarm {
    pos: Vec<Vec<f64>>,
    vel: Vec<Vec<f64>>,
    best_pos: Vec<Vec<f64>>,
    best_loss: Vec<f64>,
}

impl Swarm {
    fn best(&self) -> Option<usize> {
        (0..self.best_loss.len()).min_by(|&a, &b| self.best_loss[a].total_cmp(&self.best_loss[b]))
    }
}

struct Search<'a> {
    cfg: &'a PsoConfig,
    objective: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    feasible: &'a (dyn Fn(&[f64]) -> bool + Sync),
    rng: ChaCha8Rng,
    vmax: Vec<f64>,
    rejections: usize,
    violations: usize,
    gbest_pos: Vec<f64>,
    gbest_loss: f64,
}

impl Search<'_> {
    fn sample(&mut self) -> Result<Vec<f64>, PsoError> {
        for _ in 0..self.cfg.max_resample {
            let x: Vec<f64> = self.cfg.bounds.iter().map(|&(lo, hi)| self.rng.gen_range(lo..=hi)).collect();
            if (self.feasible)(&x) {
                return Ok(x);
            }
        }
        Err(PsoError::NoFeasibleRegion)
    }

    fn evaluate(&mut self, positions: &[Vec<f64>]) -> Vec<f64> {
        let feasible = self.feasible;
        let objective = self.objective;
        let results: Vec<(bool, f64)> = positions
            .par_iter()
            .map(|x| {
                let ok = feasible(x);
                let loss = objective(x);
                (ok, if loss.is_nan() { f64::INFINITY } else { loss })
            })
            .collect();
        self.violations += results.iter().filter(|(ok, _)| !ok).count();
        results.into_iter().map(|(_, loss)| loss).collect()
    }

    fn init(&mut self, n: usize) -> Result<Swarm, PsoError> {
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        for _ in 0..n {
            pos.push(self.sample()?);
            let v: Vec<f64> = self.vmax.iter().map(|&m| self.rng.gen_range(-m..=m)).collect();
            vel.push(v);
        }
        let loss = self.evaluate(&pos);
        let swarm = Swarm { best_pos: pos.clone(), pos, vel, best_loss: loss };
        self.absorb(&swarm);
        Ok(swarm)
    }

    fn absorb(&mut self, swarm: &Swarm) {
        if let Some(i) = swarm.best() {
            if swarm.best_loss[i] < self.gbest_loss || self.gbest_pos.is_empty() {
                self.gbest_loss = swarm.best_loss[i];
                self.gbest_pos = swarm.best_pos[i].clone();
            }
        }
    }

    /// One velocity/position update and evaluation of every particle, steered
    /// toward `social`.
    fn advance(&mut self, swarm: &mut Swarm, social: &[f64], inertia: f64) -> Result<(), PsoError> {
        let cfg = self.cfg;
        for i in 0..swarm.pos.len() {
            for d in 0..cfg.bounds.len() {
                let (lo, hi) = cfg.bounds[d];
                let (r1, r2): (f64, f64) = (self.rng.gen(), self.rng.gen());
                let x = swarm.pos[i][d];
                let mut v = inertia * swarm.vel[i][d]
                    + cfg.c1 * r1 * (swarm.best_pos[i][d] - x)
                    + cfg.c2 * r2 * (social[d] - x);
                v = v.clamp(-self.vmax[d], self.vmax[d]);
                let mut next = x + v;
                if next > hi {
                    next = hi - (next - hi);
                    v = -v;
                } else if next < lo {
                    next = lo + (lo - next);
                    v = -v;
                }
                swarm.pos[i][d] = next.clamp(lo, hi);
                swarm.vel[i][d] = v;
            }
            if !(self.feasible)(&swarm.pos[i]) {
                self.rejections += 1;
                swarm.pos[i] = self.sample()?;
                swarm.vel[i].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let loss = self.evaluate(&swarm.pos);
        for (i, l) in loss.into_iter().enumerate() {
            if l < swarm.best_loss[i] {
                swarm.best_loss[i] = l;
                swarm.best_pos[i] = swarm.pos[i].clone();
            }
        }
        self.absorb(swarm);
        Ok(())
    }
}

/// Swaps fitter standby particles with the worst main-pool particles.
///
/// Fitness is the personal best. A standby particle only replaces a strictly
/// worse main particle, so the main pool's best is never displaced; the
/// global best is tracked separately in any case.
fn exchange(main: &mut Swarm, standby: &mut Swarm) {
    let mut order: Vec<usize> = (0..standby.best_loss.len()).collect();
    order.sort_by(|&a, &b| standby.best_loss[a].total_cmp(&standby.best_loss[b]).then(a.cmp(&b)));
    for s in order {
        let worst = (0..main.best_loss.len())
            .rev()
            .max_by(|&a, &b| main.best_loss[a].total_cmp(&main.best_loss[b]))
            .expect("main swarm is non-empty");
        if !(standby.best_loss[s] < main.best_loss[worst]) {
            break;
        }
        std::mem::swap(&mut main.pos[worst], &mut standby.pos[s]);
        std::mem::swap(&mut main.vel[worst], &mut standby.vel[s]);
        std::mem::swap(&mut main.best_pos[worst], &mut standby.best_pos[s]);
        std::mem::swap(&mut main.best_loss[worst], &mut standby.best_loss[s]);
    }
}

/// Minimises `objective` over `cfg.bounds` restricted to `feasible`.
///
/// Global-best PSO with reflecting walls and resample-on-violation. Every
/// `swap_interval` iterations an independent standby swarm takes one step
/// steered by its own best, then exchanges particles with the main swarm.
/// The result is a pure function of the inputs and `cfg.seed`.
pub fn minimize(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    feasible: &(dyn Fn(&[f64]) -> bool + Sync),
    cfg: &PsoConfig,
) -> Result<PsoOutcome, PsoError> {
    cfg.check(cfg.bounds.len())?;
    if cfg.bounds.is_empty() {
        return Err(PsoError::InvalidConfig("no parameters to optimise".into()));
    }
    let mut search = Search {
        cfg,
        objective,
        feasible,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        vmax: cfg.bounds.iter().map(|(lo, hi)| cfg.velocity_fraction * (hi - lo)).collect(),
        rejections: 0,
        violations: 0,
        gbest_pos: Vec::new(),
        gbest_loss: f64::INFINITY,
    };
    let mut main = search.init(cfg.swarm_size)?;
    let mut standby = search.init(cfg.standby_pool_size)?;

    let mut history = vec![search.gbest_loss];
    for iter in 0..cfg.max_iters {
        let inertia = cfg.inertia(iter);
        let social = search.gbest_pos.clone();
        search.advance(&mut main, &social, inertia)?;
        if cfg.standby_pool_size > 0 && (iter + 1) % cfg.swap_interval == 0 {
            let own = standby.best().map(|i| standby.best_pos[i].clone()).expect("standby pool is non-empty");
            search.advance(&mut standby, &own, inertia)?;
            exchange(&mut main, &mut standby);
        }
        history.push(search.gbest_loss);
        let n = history.len();
        if n > cfg.stall_window && history[n - 1 - cfg.stall_window] - history[n - 1] < cfg.stall_tolerance {
            break;
        }
    }

    Ok(PsoOutcome {
        best_position: search.gbest_pos,
        best_loss: search.gbest_loss,
        iterations: history.len() - 1,
        history,
        constraint_rejections: search.rejections,
        violating_evaluations: search.violations,
    })
}

/// Result of [`pso_calibrate`].
///
/// `wall_time_s` is not serialized so that reports are byte-identical across
/// runs with the same seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub model: String,
    pub parameter_names: Vec<String>,
    pub best: FittedParams,
    pub best_loss: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub constraint_rejections: usize,
    pub violating_evaluations: usize,
    pub n_pairs: usize,
    pub seed: u64,
    pub config: PsoConfig,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Calibrates `kind` on `pairs` by minimising the mean position RMSE.
pub fn pso_calibrate(pairs: &[TrajectoryPair], kind: &ModelKind, cfg: &PsoConfig) -> Result<CalibrationReport, PsoError> {
    if pairs.is_empty() {
        return Err(PsoError::EmptyPairs);
    }
    let started = Instant::now();
    let mut cfg = cfg.clone();
    if cfg.bounds.is_empty() {
        cfg.bounds = kind.default_bounds();
    }
    cfg.check(kind.dimension())?;

    let objective = |x: &[f64]| kind.fitness(x, pairs).unwrap_or(f64::INFINITY);
    let feasible = |x: &[f64]| kind.feasible(x);
    let outcome = minimize(&objective, &feasible, &cfg)?;
    let best = kind.params(&outcome.best_position).map_err(|e| PsoError::InvalidConfig(e.to_string()))?;

    Ok(CalibrationReport {
        model: kind.name().to_string(),
        parameter_names: kind.parameter_names().iter().map(|s| s.to_string()).collect(),
        best,
        best_loss: outcome.best_loss,
        history: outcome.history,
        iterations: outcome.iterations,
        constraint_rejections: outcome.constraint_rejections,
        violating_evaluations: outcome.violating_evaluations,
        n_pairs: pairs.len(),
        seed: cfg.seed,
        config: cfg,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
