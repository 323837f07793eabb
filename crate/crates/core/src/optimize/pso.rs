//! Deterministic particle swarm with optional coordinate pattern-search polish.
//!
//! Updates are synchronous and use no random coefficients:
//! `v ← w v + c1 (p − x) + c2 (g − x)`, `x ← clamp(x + v)`, zeroing each
//! velocity component that hit a wall. The seed only shifts the Halton
//! initialization lattice (Cranley-Patterson rotation).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PmeError, Result};
use crate::sampling::unit_uniform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    /// Particle count; `4 · dimension` capped at `max_swarm` when `None`.
    pub swarm: Option<usize>,
    pub max_swarm: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Pattern search on the incumbent every `polish_every` iterations.
    pub polish: bool,
    pub polish_every: usize,
    /// Initial polish step as a fraction of each box range.
    pub polish_step: f64,
    /// Evaluations per polish phase, as a multiple of the dimension.
    pub polish_evals_per_dim: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm: None,
            max_swarm: 32,
            inertia: 0.721,
            cognitive: 1.193,
            social: 1.193,
            polish: false,
            polish_every: 10,
            polish_step: 0.2,
            polish_evals_per_dim: 16,
        }
    }
}

impl PsoConfig {
    pub fn swarm_size(&self, dim: usize) -> usize {
        self.swarm.unwrap_or((4 * dim).min(self.max_swarm)).max(1)
    }

    pub fn with_polish(mut self, on: bool) -> Self {
        self.polish = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Shifted Halton points in the box, one per particle.
pub fn halton_points(lower: &[f64], upper: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let dim = lower.len();
    if dim > PRIMES.len() {
        return Err(PmeError::Config(format!("Halton initialization supports up to {} dimensions", PRIMES.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| unit_uniform(&mut rng)).collect();
    Ok((0..count)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let h = (radical_inverse(i as u64 + 1, PRIMES[d] as u64) + shift[d]).fract();
                    lower[d] + (upper[d] - lower[d]) * h
                })
                .collect()
        })
        .collect())
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

struct Budget<'f> {
    used: usize,
    limit: usize,
    f: &'f mut dyn FnMut(&[f64], usize) -> f64,
}

impl Budget<'_> {
    fn eval(&mut self, x: &[f64], iteration: usize) -> Option<f64> {
        if self.used >= self.limit {
            return None;
        }
        self.used += 1;
        Some(score((self.f)(x, iteration)))
    }
}

/// Minimizes `f(x, iteration)` over the box with at most `budget` calls.
/// Non-finite values count as `+∞`.
pub fn pso_minimize(
    f: &mut dyn FnMut(&[f64], usize) -> f64,
    lower: &[f64],
    upper: &[f64],
    budget: usize,
    cfg: &PsoConfig,
    seed: u64,
) -> Result<PsoResult> {
    let dim = lower.len();
    if dim == 0 || upper.len() != dim {
        return Err(PmeError::Config("box bounds must be non-empty and of equal length".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
        return Err(PmeError::Config("box bounds must be finite with lower < upper".into()));
    }
    let n = cfg.swarm_size(dim);
    if budget < n {
        return Err(PmeError::Config(format!("budget {budget} smaller than swarm size {n}")));
    }
    if cfg.polish && cfg.polish_every == 0 {
        return Err(PmeError::Config("polish_every must be positive".into()));
    }
    let mut budget = Budget { used: 0, limit: budget, f };
    let mut x = halton_points(lower, upper, n, seed)?;
    let mut v = vec![vec![0.0; dim]; n];
    let mut p = x.clone();
    let mut pval = vec![f64::INFINITY; n];
    let mut g = x[0].clone();
    let mut gval = f64::INFINITY;
    let mut step: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| cfg.polish_step * (u - l)).collect();
    let mut iteration = 0;

    'run: loop {
        let mut values = Vec::with_capacity(n);
        for xi in &x {
            match budget.eval(xi, iteration) {
                Some(val) => values.push(val),
                None => break,
            }
        }
        for (i, val) in values.iter().enumerate() {
            if *val < pval[i] {
                pval[i] = *val;
                p[i] = x[i].clone();
            }
        }
        for (i, val) in pval.iter().enumerate() {
            if *val < gval {
                gval = *val;
                g = p[i].clone();
            }
        }
        if values.len() < n || budget.used >= budget.limit {
            break;
        }
        iteration += 1;
        if cfg.polish && iteration % cfg.polish_every == 0 {
            for (d, st) in step.iter_mut().enumerate() {
                let spread = x.iter().map(|xi| (xi[d] - g[d]).abs()).fold(0.0, f64::max);
                if spread > 0.0 {
                    *st = st.min(spread);
                }
            }
            let mut left = cfg.polish_evals_per_dim * dim;
            'phase: while left > 0 {
                let mut improved = false;
                for d in 0..dim {
                    for dir in [1.0, -1.0] {
                        let mut trial = g.clone();
                        trial[d] = (trial[d] + dir * step[d]).clamp(lower[d], upper[d]);
                        if trial[d] == g[d] {
                            continue;
                        }
                        if left == 0 {
                            break 'phase;
                        }
                        left -= 1;
                        let Some(val) = budget.eval(&trial, iteration) else { break 'run };
                        if val < gval {
                            gval = val;
                            g = trial;
                            improved = true;
                            step[d] = (2.0 * step[d]).min(upper[d] - lower[d]);
                            break;
                        }
                    }
                }
                if !improved {
                    step.iter_mut().for_each(|s| *s *= 0.5);
                }
            }
        }
        for i in 0..n {
            for d in 0..dim {
                let vel = cfg.inertia * v[i][d] + cfg.cognitive * (p[i][d] - x[i][d]) + cfg.social * (g[d] - x[i][d]);
                let pos = x[i][d] + vel;
                if pos < lower[d] {
                    x[i][d] = lower[d];
                    v[i][d] = 0.0;
                } else if pos > upper[d] {
                    x[i][d] = upper[d];
                    v[i][d] = 0.0;
                } else {
                    x[i][d] = pos;
                    v[i][d] = vel;
                }
            }
        }
    }
    Ok(PsoResult {
        best_x: g,
        best_value: gval,
        evaluations: budget.used,
        iterations: iteration,
    })
}
