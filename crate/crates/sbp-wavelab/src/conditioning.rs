//! Condition number and sparsity of the ghost point systems.

use sbp_core::interface2d::InterfaceMethod;
use sbp_core::linalg::{condition_1norm, condition_2norm};
use sbp_core::wave1d::PenaltyConfig;
use sbp_core::{Result, SbpError};

use crate::cases::Case;

/// Ghost system statistics of both ghost point couplings at one grid size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionRow {
    /// Coarse points per row.
    pub n: usize,
    pub cond1_improved: f64,
    pub cond1_original: f64,
    pub cond2_improved: f64,
    pub cond2_original: f64,
    pub nnz_improved: usize,
    pub nnz_original: usize,
}

/// Reference values (coarse points per row, cond_i, cond_o, nnz_i, nnz_o).
pub const REFERENCE: [(usize, f64, f64, usize, usize); 3] = [
    (320, 1.26, 778.0, 2240, 4160),
    (640, 1.26, 1680.0, 4480, 8320),
    (1280, 1.26, 3425.0, 8960, 16640),
];

/// Statistics of the ghost systems on the plane wave material.
pub fn condition_row(n: usize) -> Result<ConditionRow> {
    let stats = |method| -> Result<(f64, f64, usize)> {
        let sys = Case::Snell.homogeneous_system(n, method, PenaltyConfig::default())?;
        let g = sys
            .ghost_system()
            .ok_or_else(|| SbpError::Inconsistent(format!("{method} has no ghost system")))?;
        Ok((condition_1norm(&g.matrix)?, condition_2norm(&g.matrix.to_dense()), g.matrix.nnz()))
    };
    let (c1i, c2i, nnzi) = stats(InterfaceMethod::GpImproved)?;
    let (c1o, c2o, nnzo) = stats(InterfaceMethod::GpOriginal)?;
    Ok(ConditionRow {
        n,
        cond1_improved: c1i,
        cond1_original: c1o,
        cond2_improved: c2i,
        cond2_original: c2o,
        nnz_improved: nnzi,
        nnz_original: nnzo,
    })
}

/// One row per grid size.
pub fn condition_study(sizes: &[usize]) -> Result<Vec<ConditionRow>> {
    sizes.iter().map(|&n| condition_row(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_statistics() {
        let r = condition_row(40).unwrap();
        assert_eq!(r.nnz_improved, 7 * 40);
        assert_eq!(r.nnz_original, 13 * 40);
        assert!((r.cond1_improved - 1.26).abs() < 0.05, "{r:?}");
        assert!(r.cond2_improved <= r.cond1_improved + 1e-12);
        assert!(r.cond1_original > 10.0 * r.cond1_improved);
    }
}
