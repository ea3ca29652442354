//! Filter importance and the hard/soft split of the pruned set.

use std::cmp::Ordering;
use std::str::FromStr;

use super::FilterState;
use crate::error::{Error, Result};
use crate::flops::pruned_count;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L2,
    /// Sum of absolute values.
    L1,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "l1" => Ok(Norm::L1),
            _ => Err(Error::Config(format!("unknown norm `{s}`"))),
        }
    }
}

/// Per-filter norm of a weight tensor whose leading axis indexes filters.
pub fn importance(weights: &Tensor, norm: Norm) -> Vec<f64> {
    let n = weights.shape().first().copied().unwrap_or(0);
    (0..n)
        .map(|j| {
            let row = weights.row(j);
            match norm {
                Norm::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
                Norm::L1 => row.iter().map(|v| v.abs()).sum(),
            }
        })
        .collect()
}

pub fn importance_l2(weights: &Tensor) -> Vec<f64> {
    importance(weights, Norm::L2)
}

/// `floor(x + ½)`, tolerant of representation error just below a half.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Filter indices chosen for pruning in one layer, each list ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selection {
    pub hard: Vec<usize>,
    pub soft: Vec<usize>,
}

impl Selection {
    pub fn pruned_count(&self) -> usize {
        self.hard.len() + self.soft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty() && self.soft.is_empty()
    }
}

/// Picks the `floor(P·n)` smallest-norm filters and marks the
/// `round_half_up(λ_h·pruned)` smallest of those hard.
///
/// Ties go to the lower index. Filters that are already hard rank first, so
/// the hard set can only grow; a hard count below the current one is an error.
pub fn select_filters(
    norms: &[f64],
    prior: &[FilterState],
    rate: f64,
    lambda_h: f64,
) -> Result<Selection> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate {
            layer: String::new(),
            rate,
            reason: "rate must lie in [0, 1)",
        });
    }
    if !(0.0..=1.0).contains(&lambda_h) {
        return Err(Error::Config(format!("lambda_h must lie in [0, 1], got {lambda_h}")));
    }
    if prior.len() != norms.len() {
        return Err(Error::Dimension {
            op: "select_filters",
            lhs: vec![norms.len()],
            rhs: vec![prior.len()],
        });
    }
    if let Some(j) = norms.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Invariant(format!("filter {j} has invalid norm {}", norms[j])));
    }

    let n = norms.len();
    let pruned = pruned_count(n, rate);
    let hard_count = round_half_up(lambda_h * pruned as f64).min(pruned);
    let prior_hard: Vec<usize> = (0..n).filter(|&j| prior[j] == FilterState::Hard).collect();
    if hard_count < prior_hard.len() {
        return Err(Error::Invariant(format!(
            "hard count would shrink from {} to {hard_count} (pruned {pruned} of {n}, lambda_h {lambda_h})",
            prior_hard.len()
        )));
    }
    if let Some(&j) = prior_hard.iter().find(|&&j| norms[j] != 0.0) {
        return Err(Error::Invariant(format!(
            "hard filter {j} has nonzero norm {}",
            norms[j]
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let hard_a = prior[a] == FilterState::Hard;
        let hard_b = prior[b] == FilterState::Hard;
        hard_b
            .cmp(&hard_a)
            .then_with(|| norms[a].partial_cmp(&norms[b]).unwrap_or(Ordering::Equal))
            .then_with(|| a.cmp(&b))
    });

    let mut hard = order[..hard_count].to_vec();
    let mut soft = order[hard_count..pruned].to_vec();
    hard.sort_unstable();
    soft.sort_unstable();
    debug_assert!(prior_hard.iter().all(|j| hard.binary_search(j).is_ok()));
    Ok(Selection { hard, soft })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn active(n: usize) -> Vec<FilterState> {
        vec![FilterState::Active; n]
    }

    #[test]
    fn l2_norms() {
        let w = Tensor::filled(&[2, 1, 3, 3], 1.0);
        let mut w2 = w.clone();
        w2.row_mut(0).fill(0.0);
        assert_eq!(importance_l2(&w2), vec![0.0, 3.0]);
        assert_eq!(importance(&w, Norm::L1), vec![9.0, 9.0]);
    }

    #[test]
    fn worked_example() {
        let s = select_filters(&[0.5, 0.1, 0.9, 0.0], &active(4), 0.5, 0.5).unwrap();
        assert_eq!(s.hard, vec![3]);
        assert_eq!(s.soft, vec![1]);
    }

    #[test]
    fn zero_rate_selects_nothing() {
        assert!(select_filters(&[0.3, 0.2], &active(2), 0.0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn split_counts_round_half_up() {
        let norms: Vec<f64> = (0..64).map(|j| j as f64).collect();
        let s = select_filters(&norms, &active(64), 0.3, 0.5).unwrap();
        assert_eq!((s.pruned_count(), s.hard.len(), s.soft.len()), (19, 10, 9));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let s = select_filters(&[1.0, 1.0, 1.0, 2.0], &active(4), 0.5, 0.0).unwrap();
        assert_eq!(s.soft, vec![0, 1]);
    }

    #[test]
    fn hard_filters_stay_hard() {
        let mut prior = active(4);
        prior[2] = FilterState::Hard;
        // Another zero-norm filter at a lower index must not displace filter 2.
        let s = select_filters(&[0.0, 0.4, 0.0, 0.1], &prior, 0.5, 0.5).unwrap();
        assert_eq!(s.hard, vec![2]);
        assert_eq!(s.soft, vec![0]);
    }

    #[test]
    fn shrinking_hard_set_is_an_invariant_violation() {
        let mut prior = active(4);
        prior[0] = FilterState::Hard;
        prior[1] = FilterState::Hard;
        let err = select_filters(&[0.0, 0.0, 0.3, 0.4], &prior, 0.5, 0.0).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn nonzero_hard_filter_is_rejected() {
        let mut prior = active(2);
        prior[0] = FilterState::Hard;
        assert!(select_filters(&[0.5, 0.1], &prior, 0.5, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn selection_is_scale_invariant(
            norms in prop::collection::vec(0.0f64..10.0, 1..40),
            rate in 0.0f64..0.99,
            lambda in 0.0f64..=1.0,
            scale in 0.01f64..100.0,
        ) {
            let prior = active(norms.len());
            let scaled: Vec<f64> = norms.iter().map(|v| v * scale).collect();
            prop_assert_eq!(
                select_filters(&norms, &prior, rate, lambda).unwrap(),
                select_filters(&scaled, &prior, rate, lambda).unwrap()
            );
        }

        #[test]
        fn pruned_set_holds_the_smallest_norms(
            norms in prop::collection::vec(0.0f64..10.0, 1..40),
            rate in 0.0f64..0.99,
            lambda in 0.0f64..=1.0,
        ) {
            let s = select_filters(&norms, &active(norms.len()), rate, lambda).unwrap();
            prop_assert_eq!(s.pruned_count(), pruned_count(norms.len(), rate));
            let max_pruned = s.hard.iter().chain(&s.soft).map(|&j| norms[j]).fold(0.0, f64::max);
            let max_hard = s.hard.iter().map(|&j| norms[j]).fold(0.0, f64::max);
            for j in 0..norms.len() {
                if !s.hard.contains(&j) && !s.soft.contains(&j) {
                    prop_assert!(norms[j] >= max_pruned);
                }
            }
            for &j in &s.soft {
                prop_assert!(norms[j] >= max_hard);
            }
        }
    }
}
