use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModelConfigError;
use crate::clock::{StepSpan, Timestamp, NANOS_PER_SECOND, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::component::{ComponentResult, Grid};
use crate::records::{GridPricing, GridStepInput, GridStepResult};
use crate::units::JOULES_PER_KWH;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriceError {
    #[error("price schedule needs at least one breakpoint")]
    Empty,
    #[error("breakpoints must be strictly increasing (index {index})")]
    NotIncreasing { index: usize },
    #[error("price {price} at index {index} must be finite and non-negative")]
    InvalidPrice { index: usize, price: f64 },
    #[error("no price defined before the first breakpoint {first} (queried {at})")]
    BeforeFirst { at: Timestamp, first: Timestamp },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBreakpoint {
    pub start: Timestamp,
    /// Cost units per kWh.
    pub price: f64,
}

/// Piecewise-constant tariff over right-open intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PriceBreakpoint>", into = "Vec<PriceBreakpoint>")]
pub struct PriceSchedule {
    breakpoints: Vec<PriceBreakpoint>,
}

impl TryFrom<Vec<PriceBreakpoint>> for PriceSchedule {
    type Error = PriceError;

    fn try_from(value: Vec<PriceBreakpoint>) -> Result<Self, Self::Error> {
        PriceSchedule::new(value)
    }
}

impl From<PriceSchedule> for Vec<PriceBreakpoint> {
    fn from(value: PriceSchedule) -> Self {
        value.breakpoints
    }
}

impl PriceSchedule {
    pub fn new(breakpoints: Vec<PriceBreakpoint>) -> Result<Self, PriceError> {
        if breakpoints.is_empty() {
            return Err(PriceError::Empty);
        }
        for (index, bp) in breakpoints.iter().enumerate() {
            if !(bp.price >= 0.0 && bp.price.is_finite()) {
                return Err(PriceError::InvalidPrice {
                    index,
                    price: bp.price,
                });
            }
            if index > 0 && breakpoints[index - 1].start >= bp.start {
                return Err(PriceError::NotIncreasing { index });
            }
        }
        Ok(PriceSchedule { breakpoints })
    }

    pub fn flat(start: Timestamp, price: f64) -> Result<Self, PriceError> {
        PriceSchedule::new(vec![PriceBreakpoint { start, price }])
    }

    /// Daily two-tier tariff: `peak` inside `[peak_start_hour, peak_end_hour)`
    /// of each UTC day, `off_peak` elsewhere, for `days` days from the day
    /// containing `start`.
    pub fn two_tier(start: Timestamp, days: u64, tiers: &PriceTiers) -> Result<Self, PriceError> {
        let day_ns = SECONDS_PER_DAY * NANOS_PER_SECOND;
        let hour_ns = SECONDS_PER_HOUR * NANOS_PER_SECOND;
        let first_day = start.day_index();
        let mut bps: Vec<PriceBreakpoint> = Vec::new();
        let mut push = |t: u64, price: f64| match bps.last_mut() {
            Some(last) if last.start.0 == t => last.price = price,
            Some(last) if last.price == price => {}
            _ => bps.push(PriceBreakpoint {
                start: Timestamp(t),
                price,
            }),
        };
        for d in first_day..first_day + days.max(1) {
            let base = d * day_ns;
            let ps = base + (tiers.peak_start_hour.min(24) as u64) * hour_ns;
            let pe = base + (tiers.peak_end_hour.min(24) as u64) * hour_ns;
            push(base, tiers.off_peak_price);
            if pe > ps {
                push(ps, tiers.peak_price);
                push(pe, tiers.off_peak_price);
            }
        }
        PriceSchedule::new(bps)
    }

    pub fn breakpoints(&self) -> &[PriceBreakpoint] {
        &self.breakpoints
    }

    pub fn price_at(&self, at: Timestamp) -> Result<f64, PriceError> {
        let idx = self.breakpoints.partition_point(|bp| bp.start <= at);
        if idx == 0 {
            return Err(PriceError::BeforeFirst {
                at,
                first: self.breakpoints[0].start,
            });
        }
        Ok(self.breakpoints[idx - 1].price)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, PriceError> {
        PriceSchedule::new(
            self.breakpoints
                .iter()
                .map(|bp| PriceBreakpoint {
                    start: bp.start,
                    price: bp.price * factor,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTiers {
    pub off_peak_price: f64,
    pub peak_price: f64,
    pub peak_start_hour: u32,
    pub peak_end_hour: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPricedConfig {
    /// W
    pub active_power_limit: Option<f64>,
    /// VA
    pub apparent_power_limit: Option<f64>,
    pub price_schedule: PriceSchedule,
}

impl GridPricedConfig {
    pub fn validate(&self) -> Result<(), ModelConfigError> {
        for limit in [self.active_power_limit, self.apparent_power_limit]
            .into_iter()
            .flatten()
        {
            if !(limit > 0.0) {
                return Err(ModelConfigError::new("grid limits must be positive"));
            }
        }
        Ok(())
    }
}

/// Grid that clamps to its limits, flags violations and prices energy.
#[derive(Debug, Clone)]
pub struct GridPriced {
    config: GridPricedConfig,
}

impl GridPriced {
    pub fn new(config: GridPricedConfig) -> Result<Self, ModelConfigError> {
        config.validate()?;
        Ok(GridPriced { config })
    }

    pub fn config(&self) -> &GridPricedConfig {
        &self.config
    }

    /// Delivery and cost for a request held over `seconds` starting at `now`.
    pub fn evaluate(
        &self,
        now: Timestamp,
        seconds: f64,
        input: &GridStepInput,
    ) -> Result<GridStepResult, PriceError> {
        let clamp = |req: f64, limit: Option<f64>| match limit {
            Some(l) if req > l => (l, true),
            _ => (req, false),
        };
        let (active, v_active) = clamp(input.requested_active_power, self.config.active_power_limit);
        let (apparent, v_apparent) = clamp(
            input.requested_apparent_power,
            self.config.apparent_power_limit,
        );
        // |S| >= P must survive independent clamping
        let active = active.min(apparent);
        let price = self.config.price_schedule.price_at(now)?;
        Ok(GridStepResult {
            delivered_active_power: active,
            delivered_apparent_power: apparent,
            pricing: Some(GridPricing {
                cost: price * seconds * active / JOULES_PER_KWH,
                violation: v_active || v_apparent,
            }),
        })
    }
}

impl Grid for GridPriced {
    fn step(&mut self, span: &StepSpan, input: &GridStepInput) -> ComponentResult<GridStepResult> {
        if !(input.requested_active_power >= 0.0 && input.requested_apparent_power >= 0.0) {
            return Err(crate::component::ComponentError::Invalid(format!(
                "grid requests must be non-negative: {input:?}"
            )));
        }
        Ok(self.evaluate(span.start.now(), span.seconds(), input)?)
    }
}
