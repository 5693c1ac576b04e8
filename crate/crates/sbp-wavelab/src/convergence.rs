//! Convergence studies on the composite grid.

use sbp_core::interface2d::InterfaceMethod;
use sbp_core::timestepping::{run_until, GrowthDetector, Scheme};
use sbp_core::wave1d::PenaltyConfig;
use sbp_core::{Result, SbpError};

use crate::cases::{Case, FINAL_TIME};

/// Number of coarse points per row on the coarsest level (2h = 4 pi / 80).
pub const BASE_N: usize = 80;

/// One refinement level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Coarse grid spacing.
    pub two_h: f64,
    pub error: f64,
    /// Observed rate against the previous row.
    pub rate: Option<f64>,
}

/// Time step dt <= ratio * h that divides `t_end` into a whole number of steps.
pub fn fitted_time_step(t_end: f64, ratio: f64, h: f64) -> (f64, usize) {
    let steps = (t_end / (ratio * h) - 1e-9).ceil().max(1.0) as usize;
    (t_end / steps as f64, steps)
}

/// Runs one level and returns the L2 error at the final time.
pub fn run_level(case: Case, method: InterfaceMethod, n: usize, t_end: f64) -> Result<f64> {
    let sys = case.system(n, method, PenaltyConfig::default())?;
    let (dt, _) = fitted_time_step(t_end, case.convergence_ratio(), sys.grid.h);
    let exact = case.exact();
    let mut st = sys.initial_state(exact, 0.0, dt)?;
    if !run_until(&sys, Scheme::PredictorCorrector, &mut st, t_end, GrowthDetector::default(), |_| {})? {
        return Err(SbpError::Unstable { t: st.t() });
    }
    Ok(sys.l2_error(&st.curr, exact, st.t()))
}

/// Observed rate log(e_h / e_2h) / log(1/2).
pub fn observed_rate(coarse_error: f64, fine_error: f64) -> f64 {
    (fine_error / coarse_error).ln() / 0.5f64.ln()
}

/// Convergence table over `levels` refinements starting at `BASE_N`.
pub fn run_convergence(case: Case, method: InterfaceMethod, levels: usize) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for l in 0..levels {
        let n = BASE_N << l;
        let error = run_level(case, method, n, FINAL_TIME)?;
        let rate = rows.last().map(|p| observed_rate(p.error, error));
        rows.push(ConvergenceRow {
            n,
            two_h: crate::cases::WIDTH / n as f64,
            error,
            rate,
        });
    }
    Ok(rows)
}

/// Reference L2 errors at 2h = 4 pi / 80, 4 pi / 160, 4 pi / 320, 4 pi / 640.
pub fn reference_errors(case: Case, method: InterfaceMethod) -> [f64; 4] {
    use InterfaceMethod::*;
    match (case, method) {
        (Case::Snell, GpImproved | GpOriginal) => [1.6439e-3, 1.0076e-4, 6.2738e-6, 3.9193e-7],
        (Case::Snell, Sat3) => [3.0832e-3, 3.4792e-4, 4.4189e-5, 5.6079e-6],
        (Case::Snell, Int6) => [2.1022e-3, 1.1014e-4, 6.6815e-6, 4.0346e-7],
        (Case::Smooth, GpImproved | GpOriginal) => [2.7076e-4, 1.6000e-5, 9.7412e-7, 6.0183e-8],
        (Case::Smooth, Sat3) => [3.8636e-3, 4.3496e-4, 5.3152e-5, 6.6271e-6],
        (Case::Smooth, Int6) => [1.8503e-3, 9.4736e-5, 3.7043e-6, 2.0779e-7],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_step_lands_on_final_time() {
        let (dt, steps) = fitted_time_step(11.0, 1.0, 0.3);
        assert!(dt <= 0.3 && (dt * steps as f64 - 11.0).abs() < 1e-12);
    }

    #[test]
    fn rate_of_exact_fourth_order() {
        assert!((observed_rate(16.0, 1.0) - 4.0).abs() < 1e-12);
    }
}
