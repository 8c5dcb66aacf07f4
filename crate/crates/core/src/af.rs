//! Adaptive feedback: each sub-job's desire for the next period, derived from
//! the previous period's desire, allocation, utilization and whether any task
//! was left waiting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::SchedulerParams;

/// What a sub-job asked for, got and used during one period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub q: u32,
    pub desire: u32,
    pub allocation: u32,
    pub utilization: f64,
    pub had_waiting_tasks: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeriodClass {
    Inefficient,
    EfficientDeprived,
    EfficientSatisfied,
}

impl fmt::Display for PeriodClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeriodClass::Inefficient => "inefficient",
            PeriodClass::EfficientDeprived => "deprived",
            PeriodClass::EfficientSatisfied => "satisfied",
        })
    }
}

pub fn classify_period(rec: &PeriodRecord, delta: f64) -> PeriodClass {
    if rec.utilization < delta && !rec.had_waiting_tasks {
        PeriodClass::Inefficient
    } else if rec.desire > rec.allocation {
        PeriodClass::EfficientDeprived
    } else {
        PeriodClass::EfficientSatisfied
    }
}

/// Desire for the period following `prev`, clamped to `[1, max_containers]`.
/// With no previous period the desire is 1. Scaling by ρ rounds up.
pub fn next_desire(prev: Option<&PeriodRecord>, params: &SchedulerParams, max_containers: u32) -> u32 {
    let cap = max_containers.max(1);
    let Some(prev) = prev else {
        return 1;
    };
    let d = prev.desire as f64;
    let raw = match classify_period(prev, params.delta) {
        PeriodClass::Inefficient => d / params.rho,
        PeriodClass::EfficientDeprived => d,
        PeriodClass::EfficientSatisfied => d * params.rho,
    };
    // absorb float noise such as 3·1.1 = 3.3000000000000003 before rounding up
    let rounded = (raw - 1e-9).ceil();
    if rounded >= cap as f64 {
        cap
    } else {
        (rounded as u32).clamp(1, cap)
    }
}

/// Mean used fraction over every (tick, container) sample; 0 when the
/// sub-job held no container during the period.
pub fn measure_utilization(samples: &[Vec<f64>]) -> f64 {
    let (sum, n) = samples
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Streaming form of [`measure_utilization`] used by the simulator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UtilizationMeter {
    sum: f64,
    samples: u64,
    saw_waiting: bool,
}

impl UtilizationMeter {
    pub fn sample_tick(&mut self, used_fractions: impl IntoIterator<Item = f64>, waiting: bool) {
        for u in used_fractions {
            self.sum += u;
            self.samples += 1;
        }
        self.saw_waiting |= waiting;
    }

    pub fn note_waiting(&mut self) {
        self.saw_waiting = true;
    }

    /// Closes the period and resets the meter.
    pub fn finish(&mut self) -> (f64, bool) {
        let u = if self.samples == 0 { 0.0 } else { self.sum / self.samples as f64 };
        let w = self.saw_waiting;
        *self = UtilizationMeter::default();
        (u, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(desire: u32, allocation: u32, utilization: f64, waiting: bool) -> PeriodRecord {
        PeriodRecord { q: 1, desire, allocation, utilization, had_waiting_tasks: waiting }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_period(&rec(8, 8, 0.3, false), 0.5), PeriodClass::Inefficient);
        assert_eq!(classify_period(&rec(8, 4, 0.3, true), 0.5), PeriodClass::EfficientDeprived);
        assert_eq!(classify_period(&rec(8, 8, 0.9, false), 0.5), PeriodClass::EfficientSatisfied);
    }

    #[test]
    fn desire_examples() {
        let p = SchedulerParams::default();
        assert_eq!(next_desire(None, &p, 100), 1);
        assert_eq!(next_desire(Some(&rec(8, 8, 0.3, false)), &p, 100), 4);
        assert_eq!(next_desire(Some(&rec(8, 8, 0.9, true)), &p, 100), 16);
        assert_eq!(next_desire(Some(&rec(8, 8, 0.9, true)), &p, 10), 10);
    }

    #[test]
    fn desire_never_below_one() {
        let p = SchedulerParams::default();
        assert_eq!(next_desire(Some(&rec(1, 1, 0.0, false)), &p, 10), 1);
        let p = SchedulerParams { rho: 1.1, ..Default::default() };
        // 3·1.1 rounds up to 4, 3/1.1 rounds up to 3
        assert_eq!(next_desire(Some(&rec(3, 3, 0.9, false)), &p, 10), 4);
        assert_eq!(next_desire(Some(&rec(3, 3, 0.1, false)), &p, 10), 3);
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(measure_utilization(&[vec![1.0, 1.0], vec![1.0, 1.0]]), 1.0);
        assert_eq!(measure_utilization(&[vec![], vec![]]), 0.0);
        assert_eq!(measure_utilization(&[vec![0.0, 1.0], vec![0.0, 1.0]]), 0.5);
    }

    #[test]
    fn meter_matches_batch() {
        let ticks = vec![vec![0.2, 0.8], vec![0.5], vec![]];
        let mut m = UtilizationMeter::default();
        for t in &ticks {
            m.sample_tick(t.iter().copied(), false);
        }
        let (u, w) = m.finish();
        assert!((u - measure_utilization(&ticks)).abs() < 1e-12);
        assert!(!w);
        assert_eq!(m.finish(), (0.0, false));
    }

    #[test]
    fn geometric_growth_reaches_clamp() {
        let p = SchedulerParams::default();
        let cap = 13;
        let mut d = next_desire(None, &p, cap);
        let mut periods = 0;
        while d < cap {
            d = next_desire(Some(&rec(d, d, 1.0, true)), &p, cap);
            periods += 1;
        }
        assert!(periods as f64 <= (cap as f64).log(p.rho).ceil());
    }
}
