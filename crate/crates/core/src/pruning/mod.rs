//! Filter selection, masking and the soft-to-hard schedules.

mod mask;
mod schedule;
mod select;

pub(crate) use mask::zero_hard_rows;
pub use mask::{apply_grad_mask, apply_soft_mask, FilterMask, FilterState, LayerMask};
pub use schedule::{Mode, RateRamp, ScheduleConfig};
pub use select::{importance, importance_l2, round_half_up, select_filters, Norm, Selection};

use std::collections::BTreeMap;

/// Schedule values and selections in force after epoch `epoch`'s pruning step.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneState {
    pub epoch: usize,
    pub alpha: f64,
    pub lambda_h: f64,
    pub rates: BTreeMap<String, f64>,
    pub selections: BTreeMap<String, Selection>,
}

impl PruneState {
    pub fn empty() -> Self {
        Self {
            epoch: 0,
            alpha: 0.0,
            lambda_h: 0.0,
            rates: BTreeMap::new(),
            selections: BTreeMap::new(),
        }
    }
}
