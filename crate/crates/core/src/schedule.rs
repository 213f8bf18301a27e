//! Task-to-SM placement models.
//!
//! Each policy mirrors how a kernel's tasks actually land on SMs: hardware CTA
//! dealing for conventional launches, a cost min-heap or a fixed stripe for
//! persistent kernels. Placement quality is summarized by the imbalance ratio of
//! per-SM busy cycles, which downstream features expose to the efficiency model.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decompose::{ExecutionParadigm, TaskSet};
use crate::error::{Error, Result};

/// Placement policy for a task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    /// Hardware CTA scheduler: deal the first wave cyclically, then fill the
    /// least-busy SM as slots retire.
    RoundRobin,
    /// Persistent workers pulling from a shared queue ordered by accumulated
    /// worker cost.
    MinHeap,
    /// Persistent workers with a static `task i -> SM i mod N` stripe.
    Striped,
}

impl SchedulePolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulePolicy::RoundRobin => "round_robin",
            SchedulePolicy::MinHeap => "min_heap",
            SchedulePolicy::Striped => "striped",
        }
    }
}

impl fmt::Display for SchedulePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which tasks each SM runs, in assignment order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub num_sms: u32,
    /// `assignments[sm]` lists task ids placed on that SM.
    pub assignments: Vec<Vec<u32>>,
}

impl TaskDistribution {
    fn empty(num_sms: u32) -> Self {
        TaskDistribution {
            num_sms,
            assignments: vec![Vec::new(); num_sms as usize],
        }
    }

    /// Total of `costs` per SM.
    pub fn per_sm_loads(&self, costs: &[f64]) -> Vec<f64> {
        self.assignments
            .iter()
            .map(|tasks| tasks.iter().map(|&t| costs[t as usize]).sum())
            .collect()
    }

    /// Max over mean of per-SM load, restricted to SMs that received work; 1.0
    /// is perfectly balanced. Empty SMs are excluded so a small kernel is not
    /// judged against SMs it never could have filled.
    pub fn imbalance_ratio(&self, costs: &[f64]) -> f64 {
        let loads: Vec<f64> = self
            .assignments
            .iter()
            .filter(|tasks| !tasks.is_empty())
            .map(|tasks| tasks.iter().map(|&t| costs[t as usize]).sum())
            .collect();
        if loads.is_empty() {
            return 1.0;
        }
        let max = loads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = loads.iter().sum::<f64>() / loads.len() as f64;
        max / mean
    }

    /// Check that task ids `0..num_tasks` each appear on exactly one SM.
    pub fn validate_partition(&self, num_tasks: usize) -> Result<()> {
        let mut seen = vec![false; num_tasks];
        for (sm, tasks) in self.assignments.iter().enumerate() {
            for &t in tasks {
                let idx = t as usize;
                if idx >= num_tasks {
                    return Err(Error::internal(format!(
                        "SM {sm} holds task {t} but only {num_tasks} tasks exist"
                    )));
                }
                if seen[idx] {
                    return Err(Error::internal(format!("task {t} assigned to more than one SM")));
                }
                seen[idx] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::internal(format!("task {missing} was never assigned")));
        }
        Ok(())
    }
}

/// Min-heap entry: least load first, ties to the lowest index.
#[derive(Debug, PartialEq)]
struct Slot {
    load: f64,
    index: u32,
}

impl Eq for Slot {}

impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap pops the maximum, so invert: greater = less loaded.
        other
            .load
            .total_cmp(&self.load)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Place a task set on `num_sms` SMs using its own policy and occupancy limit.
/// `costs[i]` is the busy-cycle estimate of task `i`.
pub fn schedule(ts: &TaskSet, costs: &[f64], num_sms: u32) -> Result<TaskDistribution> {
    if costs.len() != ts.tasks.len() {
        return Err(Error::internal(format!(
            "got {} task costs for {} tasks",
            costs.len(),
            ts.tasks.len()
        )));
    }
    let expected = match ts.policy {
        SchedulePolicy::RoundRobin => ExecutionParadigm::ConventionalCta,
        SchedulePolicy::MinHeap | SchedulePolicy::Striped => ExecutionParadigm::Persistent,
    };
    if ts.execution_paradigm != expected {
        return Err(Error::internal(format!(
            "policy {} requires the {:?} paradigm, task set uses {:?}",
            ts.policy, expected, ts.execution_paradigm
        )));
    }
    match ts.policy {
        SchedulePolicy::RoundRobin => schedule_round_robin(costs, num_sms, ts.occupancy_limit),
        SchedulePolicy::MinHeap => schedule_min_heap(costs, num_sms, 1),
        SchedulePolicy::Striped => schedule_striped(costs.len(), num_sms),
    }
}

fn check_sms(num_sms: u32) -> Result<()> {
    if num_sms == 0 {
        return Err(Error::validation("cannot schedule onto zero SMs"));
    }
    Ok(())
}

/// Conventional CTA placement. The hardware deals the first `occupancy * N`
/// CTAs cyclically (one wave fills every SM to its concurrent-CTA limit); every
/// later CTA goes to the SM with the least accumulated busy cost, ties to the
/// lowest SM index.
pub fn schedule_round_robin(costs: &[f64], num_sms: u32, occupancy: u32) -> Result<TaskDistribution> {
    check_sms(num_sms)?;
    let n = num_sms as usize;
    let mut dist = TaskDistribution::empty(num_sms);
    let mut loads = vec![0.0f64; n];
    let dealt = (occupancy.max(1) as usize * n).min(costs.len());
    for (i, &cost) in costs.iter().take(dealt).enumerate() {
        let sm = i % n;
        dist.assignments[sm].push(i as u32);
        loads[sm] += cost;
    }
    if dealt < costs.len() {
        let mut heap: BinaryHeap<Slot> = loads
            .iter()
            .enumerate()
            .map(|(i, &load)| Slot { load, index: i as u32 })
            .collect();
        for (i, &cost) in costs.iter().enumerate().skip(dealt) {
            let mut slot = heap.pop().expect("heap holds one entry per SM");
            dist.assignments[slot.index as usize].push(i as u32);
            slot.load += cost;
            heap.push(slot);
        }
    }
    Ok(dist)
}

/// Persistent-kernel placement: `min(num_sms * workers_per_sm, tasks)` workers,
/// worker `w` pinned to SM `w mod N`. Tasks go, in order, to the worker with the
/// least accumulated cost, ties to the lowest worker index.
pub fn schedule_min_heap(
    costs: &[f64],
    num_sms: u32,
    workers_per_sm: u32,
) -> Result<TaskDistribution> {
    check_sms(num_sms)?;
    if workers_per_sm == 0 {
        return Err(Error::validation("workers_per_sm must be >= 1"));
    }
    let mut dist = TaskDistribution::empty(num_sms);
    let workers = ((num_sms as usize) * workers_per_sm as usize).min(costs.len().max(1));
    let mut heap: BinaryHeap<Slot> = (0..workers as u32)
        .map(|index| Slot { load: 0.0, index })
        .collect();
    for (i, &cost) in costs.iter().enumerate() {
        let mut slot = heap.pop().expect("heap holds one entry per worker");
        dist.assignments[slot.index as usize % num_sms as usize].push(i as u32);
        slot.load += cost;
        heap.push(slot);
    }
    Ok(dist)
}

/// Static stripe: task `i` runs on SM `i mod N`.
pub fn schedule_striped(num_tasks: usize, num_sms: u32) -> Result<TaskDistribution> {
    check_sms(num_sms)?;
    let mut dist = TaskDistribution::empty(num_sms);
    for i in 0..num_tasks {
        dist.assignments[i % num_sms as usize].push(i as u32);
    }
    Ok(dist)
}
