use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::tree::{CheapestTree, MaxTree};
use super::ControlError;
use crate::units::JOULES_PER_KWH;

/// Lossless cost-minimal charging over a horizon of equal steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingProblem {
    pub step_seconds: f64,
    /// Cost per kWh for each step.
    pub prices: Vec<f64>,
    /// Forecast load, W.
    pub load: Vec<f64>,
    /// Forecast PV, W. Acts as an upper bound; surplus may be curtailed.
    pub pv: Vec<f64>,
    /// J.
    pub capacity: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_initial: f64,
    /// W; `None` is unbounded.
    pub max_grid_power: Option<f64>,
}

impl ChargingProblem {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidProblem(m));
        let t = self.prices.len();
        if t == 0 {
            return bad("horizon must have at least one step".into());
        }
        if self.load.len() != t || self.pv.len() != t {
            return bad(format!(
                "series lengths differ: prices {t}, load {}, pv {}",
                self.load.len(),
                self.pv.len()
            ));
        }
        if !(self.step_seconds > 0.0 && self.step_seconds.is_finite()) {
            return bad(format!("step length must be positive, got {}", self.step_seconds));
        }
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return bad(format!("capacity must be positive, got {}", self.capacity));
        }
        if !(0.0 <= self.soc_min && self.soc_min <= self.soc_max && self.soc_max <= 1.0) {
            return bad(format!("need 0 <= soc_min <= soc_max <= 1, got {} and {}", self.soc_min, self.soc_max));
        }
        if !(self.soc_min <= self.soc_initial && self.soc_initial <= self.soc_max) {
            return bad(format!(
                "initial soc {} outside [{}, {}]",
                self.soc_initial, self.soc_min, self.soc_max
            ));
        }
        let nonneg = |name: &str, xs: &[f64]| -> Result<(), ControlError> {
            match xs.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                Some(i) => Err(ControlError::InvalidProblem(format!(
                    "{name}[{i}] must be finite and non-negative, got {}",
                    xs[i]
                ))),
                None => Ok(()),
            }
        };
        nonneg("prices", &self.prices)?;
        nonneg("load", &self.load)?;
        nonneg("pv", &self.pv)?;
        if let Some(g) = self.max_grid_power {
            if !(g >= 0.0) {
                return bad(format!("max grid power must be non-negative, got {g}"));
            }
        }
        Ok(())
    }

    /// Scales all prices, leaving everything else unchanged.
    pub fn with_prices_scaled(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.prices.iter_mut().for_each(|x| *x *= factor);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingPlan {
    pub step_seconds: f64,
    /// Grid purchase per step, W.
    pub purchase: Vec<f64>,
    /// PV left unused per step, W.
    pub curtailed: Vec<f64>,
    /// SOC at each step boundary; one longer than the horizon.
    pub soc: Vec<f64>,
    /// Price of one more unit of energy needed at each step, if any can be
    /// bought.
    pub marginal_price: Vec<Option<f64>>,
    pub cost: f64,
}

impl ChargingPlan {
    /// Total purchased energy, J.
    pub fn purchased_energy(&self) -> f64 {
        self.purchase.iter().sum::<f64>() * self.step_seconds
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "purchase_w", "soc", "marginal_price"])?;
        for (t, p) in self.purchase.iter().enumerate() {
            w.write_record([
                t.to_string(),
                p.to_string(),
                self.soc[t + 1].to_string(),
                self.marginal_price[t].map(|m| m.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cost-minimal purchase schedule.
///
/// States are stored energies S_k = soc_k * C at step boundaries. The
/// horizon is swept forward with free PV charging (clipped at the upper
/// bound). Whenever the next state would fall below the lower bound, the
/// shortfall is bought at the cheapest step s <= t that can still carry
/// energy to t: its grid allowance is not exhausted and no boundary in
/// (s, t] is full. Equal prices prefer the latest step. Buying at s raises
/// every state in (s, t + 1].
///
/// Among optimal plans this returns the one with the least purchased energy
/// and, after that, the latest purchases.
pub fn solve_charging(problem: &ChargingProblem) -> Result<ChargingPlan, ControlError> {
    problem.validate()?;
    let t_len = problem.len();
    let dt = problem.step_seconds;
    let c = problem.capacity;
    let s_min = problem.soc_min * c;
    let s_max = problem.soc_max * c;
    let tol = 1e-12 * c + 1e-9;

    let mut states = MaxTree::new(t_len + 1, f64::NEG_INFINITY);
    states.set(0, problem.soc_initial * c);
    let mut sources = CheapestTree::new(&problem.prices);
    let mut cap_left = vec![problem.max_grid_power.map_or(f64::INFINITY, |g| g * dt); t_len];
    if problem.max_grid_power == Some(0.0) {
        (0..t_len).for_each(|s| sources.disable(s));
    }
    let mut bought = vec![0.0; t_len];
    let mut curtailed = vec![0.0; t_len];
    // Boundaries at the upper bound; energy cannot be carried across them.
    let mut full = BTreeSet::new();

    for t in 0..t_len {
        let net = (problem.pv[t] - problem.load[t]) * dt;
        let mut next = states.get(t) + net;
        if next > s_max {
            curtailed[t] = (next - s_max) / dt;
            next = s_max;
            full.insert(t + 1);
        }
        states.set(t + 1, next);
        if next >= s_min - tol {
            continue;
        }
        let mut remaining = s_min - next;
        while remaining > tol {
            let floor = full.range(..=t).next_back().copied().unwrap_or(0);
            let (_, s) = sources
                .query(floor, t)
                .ok_or(ControlError::Infeasible { step: t })?;
            let (peak, peak_at) = if s == t {
                (f64::NEG_INFINITY, t)
            } else {
                states.max_arg(s + 1, t)
            };
            let headroom = s_max - peak;
            if headroom <= tol {
                full.insert(peak_at);
                continue;
            }
            let amount = remaining.min(headroom).min(cap_left[s]);
            bought[s] += amount;
            cap_left[s] -= amount;
            if cap_left[s] <= tol {
                sources.disable(s);
            }
            states.add(s + 1, t + 1, amount);
            remaining -= amount;
            if amount == headroom {
                full.insert(peak_at);
            }
        }
        states.set(t + 1, s_min);
    }

    let mut marginal_price = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let price = loop {
            let floor = full.range(..=t).next_back().copied().unwrap_or(0);
            let Some((price, s)) = sources.query(floor, t) else {
                break None;
            };
            if s == t {
                break Some(price);
            }
            let (peak, peak_at) = states.max_arg(s + 1, t);
            if s_max - peak > tol {
                break Some(price);
            }
            full.insert(peak_at);
        };
        marginal_price.push(price);
    }

    let soc: Vec<f64> = (0..=t_len)
        .map(|k| (states.get(k) / c).clamp(problem.soc_min, problem.soc_max))
        .collect();
    let cost = bought
        .iter()
        .zip(&problem.prices)
        .map(|(g, p)| p * g / JOULES_PER_KWH)
        .sum();
    Ok(ChargingPlan {
        step_seconds: dt,
        purchase: bought.iter().map(|g| g / dt).collect(),
        curtailed,
        soc,
        marginal_price,
        cost,
    })
}

/// Checks the plan against the problem's constraints; returns the first
/// violation found.
pub fn check_plan(problem: &ChargingProblem, plan: &ChargingPlan, tol: f64) -> Result<(), String> {
    let t_len = problem.len();
    if plan.purchase.len() != t_len || plan.soc.len() != t_len + 1 {
        return Err("plan length does not match the horizon".into());
    }
    let c = problem.capacity;
    let dt = problem.step_seconds;
    let scale = tol * c.max(1.0);
    if (plan.soc[0] - problem.soc_initial).abs() * c > scale {
        return Err("plan does not start at the initial soc".into());
    }
    for t in 0..t_len {
        let g = plan.purchase[t];
        if g < -tol {
            return Err(format!("negative purchase at step {t}"));
        }
        if let Some(max) = problem.max_grid_power {
            if g > max * (1.0 + tol) + tol {
                return Err(format!("purchase above grid limit at step {t}"));
            }
        }
        let used_pv = problem.pv[t] - plan.curtailed[t];
        if used_pv < -scale / dt || plan.curtailed[t] < -scale / dt {
            return Err(format!("curtailment outside [0, pv] at step {t}"));
        }
        let predicted = plan.soc[t] * c + (used_pv + g - problem.load[t]) * dt;
        if (predicted - plan.soc[t + 1] * c).abs() > scale {
            return Err(format!(
                "soc recursion broken at step {t}: {} vs {}",
                predicted / c,
                plan.soc[t + 1]
            ));
        }
        let s = plan.soc[t + 1];
        if s < problem.soc_min - tol || s > problem.soc_max + tol {
            return Err(format!("soc {s} out of bounds after step {t}"));
        }
    }
    Ok(())
}
