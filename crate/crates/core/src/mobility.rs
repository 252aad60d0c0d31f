//! Neighborhood-change mobility estimation and broadcast-period control.
//!
//! A node keeps the neighbor sets it observed at the end of its last `n`
//! broadcast periods. The mobility rate is the mean size of the symmetric
//! difference between consecutive sets, and a cluster head maps it onto a
//! broadcast period between `bp_min` (high mobility) and `bp_max` (static).

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BpError {
    #[error("only cluster heads may change the broadcast period")]
    NotEntitled,
    #[error("invalid broadcast period bounds: bp_min={bp_min}, bp_max={bp_max}")]
    Bounds { bp_min: f64, bp_max: f64 },
    #[error("mr_ref must be positive and finite, got {0}")]
    MrRef(f64),
}

/// `|a △ b|`: number of identifiers present in exactly one of the two sets.
pub fn set_distance(a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> usize {
    a.symmetric_difference(b).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryRow {
    /// Index of the broadcast period at whose end the row was taken.
    pub period: u64,
    pub neighbors: BTreeSet<NodeId>,
}

/// Ring buffer of the most recent neighbor sets, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyHistoryTable {
    capacity: usize,
    rows: VecDeque<HistoryRow>,
}

impl TopologyHistoryTable {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history needs at least one row");
        TopologyHistoryTable {
            capacity,
            rows: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter()
    }

    pub fn record(&mut self, period: u64, neighbors: BTreeSet<NodeId>) {
        if self.rows.len() == self.capacity {
            self.rows.pop_front();
        }
        self.rows.push_back(HistoryRow { period, neighbors });
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }
}

/// Mean neighborhood change between consecutive rows, or `None` with fewer
/// than two rows.
pub fn mobility_rate(tht: &TopologyHistoryTable) -> Option<f64> {
    if tht.len() < 2 {
        return None;
    }
    let rows: Vec<&HistoryRow> = tht.rows().collect();
    let total: usize = rows
        .windows(2)
        .map(|w| set_distance(&w[0].neighbors, &w[1].neighbors))
        .sum();
    Some(total as f64 / (rows.len() - 1) as f64)
}

/// Mobility rate as seen by a cluster head over its own neighborhood.
pub fn cluster_mean_mr(ch_tht: &TopologyHistoryTable, is_cluster_head: bool) -> Result<Option<f64>, BpError> {
    if !is_cluster_head {
        return Err(BpError::NotEntitled);
    }
    Ok(mobility_rate(ch_tht))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpController {
    bp_min: f64,
    bp_max: f64,
    mr_ref: f64,
    current: f64,
}

impl BpController {
    pub fn new(bp_min: f64, bp_max: f64, mr_ref: f64) -> Result<Self, BpError> {
        if !(bp_min.is_finite() && bp_min > 0.0 && bp_max.is_finite() && bp_max >= bp_min)
            || bp_max / bp_min > 255.0 + 1e-9
        {
            return Err(BpError::Bounds { bp_min, bp_max });
        }
        if !(mr_ref.is_finite() && mr_ref > 0.0) {
            return Err(BpError::MrRef(mr_ref));
        }
        Ok(BpController {
            bp_min,
            bp_max,
            mr_ref,
            current: bp_min,
        })
    }

    pub fn bp_min(&self) -> f64 {
        self.bp_min
    }

    pub fn bp_max(&self) -> f64 {
        self.bp_max
    }

    pub fn mr_ref(&self) -> f64 {
        self.mr_ref
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Linear map from mobility rate to period before grid rounding.
    pub fn target_bp(&self, mr: f64) -> f64 {
        let raw = self.bp_max - (self.bp_max - self.bp_min) * (mr / self.mr_ref);
        raw.clamp(self.bp_min, self.bp_max)
    }

    /// Rounds onto the `bp_min` grid without leaving `[bp_min, bp_max]`.
    pub fn to_grid(&self, bp: f64) -> f64 {
        let top = (self.bp_max / self.bp_min + 1e-9).floor();
        let steps = (bp / self.bp_min).round().clamp(1.0, top);
        steps * self.bp_min
    }

    /// Overrides the period in force, snapped to the grid.
    pub fn set(&mut self, bp: f64) {
        self.current = self.to_grid(bp);
    }

    /// Applies a new mobility measurement and returns the period now in force.
    pub fn update(&mut self, mr: f64) -> f64 {
        self.current = adapt_bp(mr, self);
        self.current
    }
}

/// Grid-quantized broadcast period for a cluster with mobility rate `mr_c`.
pub fn adapt_bp(mr_c: f64, ctrl: &BpController) -> f64 {
    ctrl.to_grid(ctrl.target_bp(mr_c.max(0.0)))
}
