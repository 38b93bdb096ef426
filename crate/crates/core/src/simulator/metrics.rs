//! Measurements over simulation traces.

use serde::Serialize;

use super::{EventKind, RecoveryMechanism, SimError, SimulationTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

impl LatencyStats {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self {
            min,
            mean,
            max,
            count: values.len(),
        })
    }
}

/// Mean per-batch completeness over an inclusive batch window.
pub fn measure_completeness(
    trace: &SimulationTrace,
    from_batch: u64,
    to_batch: u64,
) -> Result<f64, SimError> {
    let values: Vec<f64> = trace
        .batch_completeness
        .range(from_batch..=to_batch)
        .map(|(_, &c)| c)
        .collect();
    if values.is_empty() {
        return Err(SimError::EmptyWindow(from_batch, to_batch));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Min/mean/max recovery latency split by mechanism.
pub fn recovery_latency_summary(
    trace: &SimulationTrace,
) -> Result<(Option<LatencyStats>, Option<LatencyStats>), SimError> {
    if !trace.events.iter().any(|e| e.kind == EventKind::TaskFailed) {
        return Err(SimError::NoFailure);
    }
    let collect = |mech: RecoveryMechanism| -> Vec<f64> {
        trace
            .recovery
            .values()
            .filter(|r| r.mechanism == mech)
            .map(|r| r.latency_ms)
            .collect()
    };
    Ok((
        LatencyStats::from_values(&collect(RecoveryMechanism::Active)),
        LatencyStats::from_values(&collect(RecoveryMechanism::Passive)),
    ))
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub active_latency: Option<LatencyStats>,
    pub passive_latency: Option<LatencyStats>,
    /// Mean completeness over the steady window: after every replica
    /// takeover finished and before the first passive recovery completed,
    /// with one batch of margin on both sides.
    pub steady_completeness: Option<f64>,
    pub predicted_of: f64,
    pub duplicate_delivery_count: u64,
}

impl SimSummary {
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        let collect = |mech: RecoveryMechanism| -> Vec<f64> {
            trace
                .recovery
                .values()
                .filter(|r| r.mechanism == mech)
                .map(|r| r.latency_ms)
                .collect()
        };
        let active = collect(RecoveryMechanism::Active);
        let passive = collect(RecoveryMechanism::Passive);

        let steady_completeness = steady_window(trace).and_then(|(lo, hi)| {
            measure_completeness(trace, lo, hi).ok()
        });

        Self {
            active_latency: LatencyStats::from_values(&active),
            passive_latency: LatencyStats::from_values(&passive),
            steady_completeness,
            predicted_of: trace.predicted_of,
            duplicate_delivery_count: trace.duplicate_delivery_count,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialization");
        s.push('\n');
        s
    }
}

/// Inclusive batch window of the degraded steady state, if one exists.
pub(crate) fn steady_window(trace: &SimulationTrace) -> Option<(u64, u64)> {
    let detect = trace.detect_time_ms?;
    let batch_ms = trace.config.batch_interval_ms;

    let mut start_ms = detect as f64;
    for e in &trace.events {
        if e.kind == EventKind::ReplicaTakeover {
            start_ms = start_ms.max(e.time_ms);
        }
    }
    let mut end_ms = trace.config.run_length_ms as f64;
    for e in &trace.events {
        if e.kind == EventKind::TaskRecovered {
            end_ms = end_ms.min(e.time_ms);
        }
    }

    // One batch of margin on both sides keeps transition batches out.
    let lo = (start_ms / batch_ms as f64).ceil() as u64 + 1;
    let hi_exclusive = (end_ms / batch_ms as f64).floor() as u64;
    if hi_exclusive < 2 || lo > hi_exclusive - 2 {
        return None;
    }
    Some((lo, hi_exclusive - 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn empty_trace() -> SimulationTrace {
        SimulationTrace {
            config: super::super::SimConfig::default(),
            fail_time_ms: None,
            detect_time_ms: None,
            events: Vec::new(),
            batch_completeness: BTreeMap::new(),
            recovery: BTreeMap::new(),
            duplicate_delivery_count: 0,
            predicted_of: 1.0,
        }
    }

    #[test]
    fn completeness_window_must_not_be_empty() {
        let mut trace = empty_trace();
        assert!(matches!(
            measure_completeness(&trace, 0, 5),
            Err(SimError::EmptyWindow(0, 5))
        ));
        trace.batch_completeness.insert(3, 0.5);
        trace.batch_completeness.insert(4, 1.0);
        assert_eq!(measure_completeness(&trace, 0, 5).unwrap(), 0.75);
    }

    #[test]
    fn latency_summary_requires_a_failure() {
        let trace = empty_trace();
        assert!(matches!(
            recovery_latency_summary(&trace),
            Err(SimError::NoFailure)
        ));
    }
}
