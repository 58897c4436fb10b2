//! Abstract TFLOP tally for a sampler configuration: `x * NFE + y`.

use serde::{Deserialize, Serialize};

use crate::error::{DpirError, Result};

/// Linear cost in the number of function evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    per_nfe_tflop: f64,
    fixed_tflop: f64,
}

impl CostModel {
    pub fn new(per_nfe_tflop: f64, fixed_tflop: f64) -> Result<Self> {
        for (name, v) in [("per_nfe_tflop", per_nfe_tflop), ("fixed_tflop", fixed_tflop)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DpirError::InvalidParameter {
                    name,
                    reason: format!("must be finite and nonnegative, got {v}"),
                });
            }
        }
        Ok(Self {
            per_nfe_tflop,
            fixed_tflop,
        })
    }

    pub fn per_nfe_tflop(&self) -> f64 {
        self.per_nfe_tflop
    }

    pub fn fixed_tflop(&self) -> f64 {
        self.fixed_tflop
    }

    pub fn total_cost(&self, nfe: u64) -> f64 {
        self.per_nfe_tflop * nfe as f64 + self.fixed_tflop
    }
}

/// One row of a cost table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub per_nfe_tflop: f64,
    pub fixed_tflop: f64,
    pub nfe: u64,
    pub total_tflop: f64,
}

/// Evaluate a list of `(x, y, nfe)` triples.
pub fn cost_table(rows: &[(f64, f64, u64)]) -> Result<Vec<CostRow>> {
    rows.iter()
        .map(|&(x, y, nfe)| {
            let m = CostModel::new(x, y)?;
            Ok(CostRow {
                per_nfe_tflop: x,
                fixed_tflop: y,
                nfe,
                total_tflop: m.total_cost(nfe),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_rows() {
        let rows = cost_table(&[(1.2, 4.8, 500), (4.8, 5.2, 500), (4.8, 0.0, 10), (4.3, 1.9, 5)]).unwrap();
        let totals: Vec<f64> = rows.iter().map(|r| r.total_tflop).collect();
        assert_eq!(totals, vec![604.8, 2405.2, 48.0, 23.4]);
    }

    #[test]
    fn rejects_negative_or_nan() {
        assert!(CostModel::new(-1.0, 0.0).is_err());
        assert!(CostModel::new(1.0, f64::NAN).is_err());
        assert_eq!(CostModel::new(0.0, 0.0).unwrap().total_cost(7), 0.0);
    }

    proptest! {
        #[test]
        fn linear_in_nfe(x in 0.0..10.0f64, y in 0.0..10.0f64, a in 0u64..10_000, b in 0u64..10_000) {
            let m = CostModel::new(x, y).unwrap();
            let lhs = m.total_cost(a + b);
            let rhs = m.total_cost(a) + x * b as f64;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
