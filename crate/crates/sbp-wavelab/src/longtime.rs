//! Long-time run of the improved ghost point coupling on the plane wave
//! problem at a large time step, watching for error growth.

use sbp_core::interface2d::{EnergyLedger, InterfaceMethod};
use sbp_core::timestepping::{Integrator, Scheme};
use sbp_core::wave1d::PenaltyConfig;
use sbp_core::{Result, SbpError};

use crate::cases::Case;

/// One sample of the error history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LongTimeSample {
    pub t: f64,
    pub error: f64,
    /// Discrete energy of the scheme (not conserved under boundary forcing).
    pub energy: f64,
}

/// Error history and growth estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct LongTimeReport {
    pub n: usize,
    pub dt: f64,
    pub samples: Vec<LongTimeSample>,
    /// Least squares slope of ln(error) against t over the final half.
    pub slope: f64,
    /// Standard error of that slope.
    pub slope_stderr: f64,
    pub final_energy: EnergyLedger,
}

impl LongTimeReport {
    /// True when the fitted slope is within two standard errors of zero or
    /// negative.
    pub fn no_growth(&self) -> bool {
        self.slope <= 2.0 * self.slope_stderr
    }
}

/// Least squares slope of y against x and its standard error.
pub fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let stderr = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, stderr)
}

/// Integrates to `t_end` with dt = ratio * h, sampling the error about once
/// per unit of time.
pub fn run_longtime(n: usize, t_end: f64, ratio: f64) -> Result<LongTimeReport> {
    let case = Case::Snell;
    let sys = case.system(n, InterfaceMethod::GpImproved, PenaltyConfig::default())?;
    let dt = ratio * sys.grid.h;
    let exact = case.exact();
    let mut st = sys.initial_state(exact, 0.0, dt)?;
    let steps = (t_end / dt).ceil() as usize;
    let every = ((1.0 / dt).round() as usize).max(1);
    let mut integ = Integrator::new(Scheme::PredictorCorrector);
    let mut samples = Vec::new();
    for s in 1..=steps {
        integ.step(&sys, &mut st)?;
        if s % every == 0 || s == steps {
            let error = sys.l2_error(&st.curr, exact, st.t());
            if !error.is_finite() || error > 1.0 {
                return Err(SbpError::Unstable { t: st.t() });
            }
            let energy = sys.discrete_energy(&st.prev, &st.curr, dt);
            samples.push(LongTimeSample { t: st.t(), error, energy });
        }
    }
    let half: Vec<&LongTimeSample> = samples.iter().filter(|s| s.t >= 0.5 * t_end).collect();
    let x: Vec<f64> = half.iter().map(|s| s.t).collect();
    let y: Vec<f64> = half.iter().map(|s| s.error.ln()).collect();
    let (slope, slope_stderr) = fit_slope(&x, &y);
    Ok(LongTimeReport {
        n,
        dt,
        samples,
        slope,
        slope_stderr,
        final_energy: sys.energy_ledger(&st.prev, &st.curr, dt),
    })
}
