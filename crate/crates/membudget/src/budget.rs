//! The memory ledger: how a fixed budget of `N` abstract units is split
//! between an agent's internal structures.
//!
//! One unit buys exactly one of: a stored transition (model side), a search
//! tree node (plan side), a hidden neuron, or a replay-buffer slot. Reward
//! estimates, visit counters, and other bookkeeping ride along for free; the
//! ledger charges only the four structures above.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BudgetError {
    #[error("plan units {plan} exceed total budget {total}")]
    PlanUnitsExceedTotal { plan: u32, total: u32 },
    #[error("{stored} transitions exceed the model budget of {budget} units")]
    ModelOverCapacity { stored: usize, budget: u32 },
}

/// A total budget `N` split into model units and plan units,
/// with `model_units + plan_units == total` always.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryBudget {
    total: u32,
    model_units: u32,
    plan_units: u32,
}

impl MemoryBudget {
    /// Split `total` units, giving `plan_units` to the plan and the rest to
    /// the model.
    pub fn split(total: u32, plan_units: u32) -> Result<Self, BudgetError> {
        if plan_units > total {
            return Err(BudgetError::PlanUnitsExceedTotal {
                plan: plan_units,
                total,
            });
        }
        Ok(MemoryBudget {
            total,
            model_units: total - plan_units,
            plan_units,
        })
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn model_units(&self) -> u32 {
        self.model_units
    }

    pub fn plan_units(&self) -> u32 {
        self.plan_units
    }
}

/// Split each hidden layer between the permanent and the transient network.
///
/// The permanent side gets `round-half-up(fraction * width)` units per layer
/// and the transient side takes the remainder, so each layer's total width
/// is preserved exactly. Input and output layers are excluded from the
/// ledger and kept by both networks.
pub fn allocate_pt_layers(hidden_widths: &[u32], permanent_fraction: f64) -> (Vec<u32>, Vec<u32>) {
    assert!(
        (0.0..=1.0).contains(&permanent_fraction),
        "permanent fraction must lie in [0, 1]"
    );
    let mut permanent = Vec::with_capacity(hidden_widths.len());
    let mut transient = Vec::with_capacity(hidden_widths.len());
    for &width in hidden_widths {
        let p = (permanent_fraction * width as f64 + 0.5).floor() as u32;
        let p = p.min(width);
        permanent.push(p);
        transient.push(width - p);
    }
    (permanent, transient)
}

/// A permanent/transient network pair's slice of the budget: hidden widths
/// plus replay-buffer slots.
#[derive(Clone, Debug, PartialEq)]
pub struct PtSplit {
    pub hidden_widths: Vec<u32>,
    pub buffer_capacity: u32,
    pub permanent_fraction: f64,
    pub permanent_widths: Vec<u32>,
    pub transient_widths: Vec<u32>,
}

impl PtSplit {
    pub fn new(hidden_widths: Vec<u32>, buffer_capacity: u32, permanent_fraction: f64) -> Self {
        let (permanent_widths, transient_widths) =
            allocate_pt_layers(&hidden_widths, permanent_fraction);
        PtSplit {
            hidden_widths,
            buffer_capacity,
            permanent_fraction,
            permanent_widths,
            transient_widths,
        }
    }

    /// Units consumed: all hidden neurons plus all buffer slots.
    /// The fixed output layer is excluded from the count.
    pub fn units(&self) -> u32 {
        self.hidden_widths.iter().sum::<u32>() + self.buffer_capacity
    }
}

/// Check that a PT split fits a total budget exactly.
pub fn verify_budget(split: &PtSplit, total: u32) -> bool {
    split.units() == total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_at_the_even_peak() {
        let b = MemoryBudget::split(500, 250).unwrap();
        assert_eq!(b.model_units(), 250);
        assert_eq!(b.plan_units(), 250);
    }

    #[test]
    fn split_boundary_and_overflow() {
        let b = MemoryBudget::split(500, 0).unwrap();
        assert_eq!(b.model_units(), 500);
        assert_eq!(b.plan_units(), 0);
        assert_eq!(
            MemoryBudget::split(500, 501),
            Err(BudgetError::PlanUnitsExceedTotal {
                plan: 501,
                total: 500
            })
        );
    }

    #[test]
    fn split_is_exhaustively_conserving() {
        for plan in 0..=500 {
            let b = MemoryBudget::split(500, plan).unwrap();
            assert_eq!(b.model_units() + b.plan_units(), 500);
        }
    }

    #[test]
    fn pt_allocation_examples() {
        assert_eq!(
            allocate_pt_layers(&[128, 256, 64], 0.10),
            (vec![13, 26, 6], vec![115, 230, 58])
        );
        assert_eq!(
            allocate_pt_layers(&[128, 256, 64], 0.50),
            (vec![64, 128, 32], vec![64, 128, 32])
        );
        assert_eq!(
            allocate_pt_layers(&[128, 256, 64], 0.0),
            (vec![0, 0, 0], vec![128, 256, 64])
        );
        assert_eq!(
            allocate_pt_layers(&[128, 256, 64], 1.0),
            (vec![128, 256, 64], vec![0, 0, 0])
        );
    }

    #[test]
    fn reference_network_fits_the_budget() {
        let reference = PtSplit::new(vec![128, 256, 64], 52, 0.5);
        assert!(verify_budget(&reference, 500));
        let off_by_one = PtSplit::new(vec![128, 256, 64], 53, 0.5);
        assert!(!verify_budget(&off_by_one, 500));
        let full_capacity = PtSplit::new(vec![512, 256, 128], 8000, 0.5);
        assert!(!verify_budget(&full_capacity, 500));
    }

    proptest! {
        #[test]
        fn pt_layers_conserve_width(
            widths in proptest::collection::vec(1u32..512, 1..6),
            fraction in 0.0f64..=1.0,
        ) {
            let (perm, trans) = allocate_pt_layers(&widths, fraction);
            for i in 0..widths.len() {
                prop_assert_eq!(perm[i] + trans[i], widths[i]);
            }
            if fraction == 0.0 {
                prop_assert!(perm.iter().all(|&w| w == 0));
            }
            if fraction == 1.0 {
                prop_assert!(trans.iter().all(|&w| w == 0));
            }
        }
    }
}
