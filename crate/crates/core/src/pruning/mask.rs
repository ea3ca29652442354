use super::Selection;
use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FilterState {
    #[default]
    Active,
    /// Pruned this epoch; keeps receiving gradient updates.
    Soft,
    /// Pruned for good: zero weights, zero gradient.
    Hard,
}

impl FilterState {
    pub fn code(self) -> u8 {
        match self {
            FilterState::Active => 0,
            FilterState::Soft => 1,
            FilterState::Hard => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FilterState::Active),
            1 => Some(FilterState::Soft),
            2 => Some(FilterState::Hard),
            _ => None,
        }
    }

    pub fn is_pruned(self) -> bool {
        self != FilterState::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    pub layer: String,
    pub states: Vec<FilterState>,
}

impl LayerMask {
    pub fn new(layer: &str, filters: usize) -> Self {
        Self {
            layer: layer.to_string(),
            states: vec![FilterState::Active; filters],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn indices(&self, state: FilterState) -> Vec<usize> {
        (0..self.states.len()).filter(|&j| self.states[j] == state).collect()
    }

    pub fn count(&self, state: FilterState) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_pruned()).count()
    }

    /// Replaces the states with `sel`; every other filter becomes Active again.
    pub fn apply_selection(&mut self, sel: &Selection) -> Result<()> {
        let n = self.states.len();
        if let Some(&j) = sel.hard.iter().chain(&sel.soft).find(|&&j| j >= n) {
            return Err(Error::IndexOutOfRange { index: j, len: n });
        }
        let mut next = vec![FilterState::Active; n];
        for &j in &sel.soft {
            next[j] = FilterState::Soft;
        }
        for &j in &sel.hard {
            next[j] = FilterState::Hard;
        }
        if let Some(j) = (0..n).find(|&j| self.states[j] == FilterState::Hard && next[j] != FilterState::Hard) {
            return Err(Error::Invariant(format!(
                "layer `{}` filter {j} would leave the hard set",
                self.layer
            )));
        }
        self.states = next;
        Ok(())
    }
}

/// Filter states of every prunable layer, in the architecture's prunable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterMask {
    pub layers: Vec<LayerMask>,
}

impl FilterMask {
    pub fn new(arch: &ArchSpec) -> Self {
        let layers = arch
            .prunable
            .iter()
            .map(|id| LayerMask::new(id, arch.layer(id).map_or(0, |l| l.out_channels)))
            .collect();
        Self { layers }
    }

    pub fn get(&self, layer: &str) -> Option<&LayerMask> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    pub fn get_mut(&mut self, layer: &str) -> Option<&mut LayerMask> {
        self.layers.iter_mut().find(|l| l.layer == layer)
    }
}

/// Zeroes hard filters and scales soft filters by `alpha`; other filters are untouched.
pub fn apply_soft_mask(weights: &mut Tensor, sel: &Selection, alpha: f64) -> Result<()> {
    let n = weights.shape().first().copied().unwrap_or(0);
    if let Some(&j) = sel.hard.iter().chain(&sel.soft).find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    for &j in &sel.hard {
        weights.row_mut(j).fill(0.0);
    }
    for &j in &sel.soft {
        let row = weights.row_mut(j);
        if alpha == 0.0 {
            row.fill(0.0);
        } else {
            row.iter_mut().for_each(|v| *v *= alpha);
        }
    }
    Ok(())
}

/// Zeroes the gradient rows of hard filters.
pub fn apply_grad_mask(grads: &mut Tensor, states: &[FilterState]) -> Result<()> {
    if grads.shape().first() != Some(&states.len()) {
        return Err(Error::Dimension {
            op: "apply_grad_mask",
            lhs: grads.shape().to_vec(),
            rhs: vec![states.len()],
        });
    }
    let row = grads.row_len();
    zero_hard_rows(grads.data_mut(), row, states);
    Ok(())
}

pub(crate) fn zero_hard_rows(buf: &mut [f64], row_len: usize, states: &[FilterState]) {
    for (j, s) in states.iter().enumerate() {
        if *s == FilterState::Hard {
            buf[j * row_len..(j + 1) * row_len].fill(0.0);
        }
    }
}
