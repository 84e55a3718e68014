//! Event containers: one sorted train per process per trial.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Sorted event timestamps (seconds) of one process on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct EventSequence {
    times: Vec<f64>,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    times: Vec<f64>,
    horizon: f64,
}

impl TryFrom<RawSequence> for EventSequence {
    type Error = crate::Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        EventSequence::new(raw.times, raw.horizon)
    }
}

impl From<EventSequence> for RawSequence {
    fn from(seq: EventSequence) -> Self {
        RawSequence {
            times: seq.times,
            horizon: seq.horizon,
        }
    }
}

impl EventSequence {
    /// Validates strict ordering and `0 <= t <= horizon`.
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive and finite, got {horizon}"));
        }
        for (k, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t > horizon {
                return domain(format!("event {k} at t={t} outside [0, {horizon}]"));
            }
            if k > 0 && times[k - 1] >= t {
                return domain(format!(
                    "timestamps not strictly increasing at index {k} ({} >= {t})",
                    times[k - 1]
                ));
            }
        }
        Ok(Self { times, horizon })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    /// Sorts the input first; duplicates are still rejected.
    pub fn from_unsorted(mut times: Vec<f64>, horizon: f64) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        Self::new(times, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same events with every timestamp and the horizon multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.times.iter().map(|t| t * factor).collect(), self.horizon * factor)
    }

    /// Events with `lo <= t < hi`, located by binary search.
    pub fn window(&self, lo: f64, hi: f64) -> &[f64] {
        let a = self.times.partition_point(|&t| t < lo);
        let b = self.times.partition_point(|&t| t < hi);
        &self.times[a..b.max(a)]
    }
}

/// Repeated-trial dataset: every process has one [`EventSequence`] per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    processes: BTreeMap<String, Vec<EventSequence>>,
    trial_count: usize,
    trial_horizon: f64,
}

impl TrialSet {
    pub fn new(
        processes: BTreeMap<String, Vec<EventSequence>>,
        trial_count: usize,
        trial_horizon: f64,
    ) -> Result<Self> {
        if !(trial_horizon > 0.0) {
            return domain("trial horizon must be positive");
        }
        for (id, seqs) in &processes {
            if seqs.len() != trial_count {
                return domain(format!(
                    "process {id} has {} trials, expected {trial_count}",
                    seqs.len()
                ));
            }
            if let Some(bad) = seqs.iter().find(|s| s.horizon() != trial_horizon) {
                return domain(format!(
                    "process {id} has a trial with horizon {} != {trial_horizon}",
                    bad.horizon()
                ));
            }
        }
        Ok(Self {
            processes,
            trial_count,
            trial_horizon,
        })
    }

    pub fn trial_count(&self) -> usize {
        self.trial_count
    }

    pub fn trial_horizon(&self) -> f64 {
        self.trial_horizon
    }

    /// Total observed time summed over trials.
    pub fn total_time(&self) -> f64 {
        self.trial_count as f64 * self.trial_horizon
    }

    pub fn process_ids(&self) -> impl Iterator<Item = &str> {
        self.processes.keys().map(String::as_str)
    }

    pub fn process(&self, id: &str) -> Option<&[EventSequence]> {
        self.processes.get(id).map(Vec::as_slice)
    }

    pub fn processes(&self) -> &BTreeMap<String, Vec<EventSequence>> {
        &self.processes
    }

    pub fn event_count(&self, id: &str) -> usize {
        self.process(id)
            .map(|s| s.iter().map(EventSequence::len).sum())
            .unwrap_or(0)
    }

    /// Keeps only the first `n` trials.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.trial_count);
        let processes = self
            .processes
            .iter()
            .map(|(k, v)| (k.clone(), v[..n].to_vec()))
            .collect();
        Self {
            processes,
            trial_count: n,
            trial_horizon: self.trial_horizon,
        }
    }

    /// Restricts to the given process ids (in the given order of lookup).
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let mut processes = BTreeMap::new();
        for id in ids {
            match self.processes.get(*id) {
                Some(s) => {
                    processes.insert((*id).to_string(), s.clone());
                }
                None => return domain(format!("unknown process id {id}")),
            }
        }
        Self::new(processes, self.trial_count, self.trial_horizon)
    }

    /// Trials reordered by `order` (a permutation of trial indices).
    pub fn permuted_trials(&self, order: &[usize]) -> Result<Self> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.trial_count).collect::<Vec<_>>() {
            return domain("trial order is not a permutation");
        }
        let processes = self
            .processes
            .iter()
            .map(|(k, v)| (k.clone(), order.iter().map(|&i| v[i].clone()).collect()))
            .collect();
        Self::new(processes, self.trial_count, self.trial_horizon)
    }

    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        let mut processes = BTreeMap::new();
        for (k, v) in &self.processes {
            let seqs = v.iter().map(|s| s.rescaled(factor)).collect::<Result<Vec<_>>>()?;
            processes.insert(k.clone(), seqs);
        }
        Self::new(processes, self.trial_count, self.trial_horizon * factor)
    }
}
