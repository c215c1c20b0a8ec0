//! Shared fixtures for integration tests.
#![allow(dead_code)]

use cemsim_core::control::ChargingProblem;

/// Integer charging instance: one unit of energy is 1 Wh and steps are one
/// hour long, so powers in W equal energies in units.
#[derive(Debug, Clone)]
pub struct IntInstance {
    pub prices: Vec<i64>,
    pub load: Vec<i64>,
    pub pv: Vec<i64>,
    pub capacity: i64,
    pub s_min: i64,
    pub s_max: i64,
    pub s0: i64,
    pub g_max: Option<i64>,
}

impl IntInstance {
    pub fn to_problem(&self) -> ChargingProblem {
        let c = self.capacity as f64;
        ChargingProblem {
            step_seconds: 3600.0,
            prices: self.prices.iter().map(|p| *p as f64).collect(),
            load: self.load.iter().map(|x| *x as f64).collect(),
            pv: self.pv.iter().map(|x| *x as f64).collect(),
            capacity: c * 3600.0,
            soc_min: self.s_min as f64 / c,
            soc_max: self.s_max as f64 / c,
            soc_initial: self.s0 as f64 / c,
            max_grid_power: self.g_max.map(|g| g as f64),
        }
    }
}

/// Exhaustive optimum over the integer storage grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    /// Sum of price * units; divide by 1000 for cost per kWh pricing.
    pub cost_milli: i64,
    pub energy: i64,
    /// Lexicographically smallest purchase vector among plans with minimal
    /// (cost, energy).
    pub purchases: Vec<i64>,
}

/// Dynamic program over integer storage levels. A step from S to S' with
/// net = pv - load needs g = max(0, S' - S - net) from the grid, and is
/// possible iff g <= g_max and S' >= S - load (PV can be left unused but
/// the battery never exports).
pub fn oracle(inst: &IntInstance) -> Option<OracleSolution> {
    let t_len = inst.prices.len();
    let levels = (inst.s_min..=inst.s_max).collect::<Vec<_>>();
    let idx = |s: i64| (s - inst.s_min) as usize;
    let transition = |t: usize, s: i64, s2: i64| -> Option<i64> {
        if s2 < s - inst.load[t] {
            return None;
        }
        let net = inst.pv[t] - inst.load[t];
        let g = (s2 - s - net).max(0);
        if inst.g_max.is_some_and(|m| g > m) {
            return None;
        }
        Some(g)
    };

    const INF: (i64, i64) = (i64::MAX, i64::MAX);
    let mut value = vec![vec![INF; levels.len()]; t_len + 1];
    value[t_len] = vec![(0, 0); levels.len()];
    for t in (0..t_len).rev() {
        for &s in &levels {
            let mut best = INF;
            for &s2 in &levels {
                let Some(g) = transition(t, s, s2) else { continue };
                let next = value[t + 1][idx(s2)];
                if next == INF {
                    continue;
                }
                let cand = (next.0 + inst.prices[t] * g, next.1 + g);
                best = best.min(cand);
            }
            value[t][idx(s)] = best;
        }
    }
    let total = value[0][idx(inst.s0)];
    if total == INF {
        return None;
    }

    let mut frontier = vec![inst.s0];
    let mut purchases = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut best_g = i64::MAX;
        let mut next = Vec::new();
        for &s in &frontier {
            let here = value[t][idx(s)];
            for &s2 in &levels {
                let Some(g) = transition(t, s, s2) else { continue };
                let tail = value[t + 1][idx(s2)];
                if tail == INF || (tail.0 + inst.prices[t] * g, tail.1 + g) != here {
                    continue;
                }
                if g < best_g {
                    best_g = g;
                    next.clear();
                }
                if g == best_g && !next.contains(&s2) {
                    next.push(s2);
                }
            }
        }
        purchases.push(best_g);
        frontier = next;
    }
    Some(OracleSolution {
        cost_milli: total.0,
        energy: total.1,
        purchases,
    })
}
