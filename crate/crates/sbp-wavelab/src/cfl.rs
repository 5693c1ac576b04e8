//! Largest stable time step of the predictor-corrector scheme for the one-
//! and two-dimensional problems.
//!
//! Every probe starts from seeded uniform random data in [-1, 1] with zero
//! velocity, uses homogeneous boundary and interface data, and counts a run
//! as unstable once the max-norm grows by a factor 1000 before the final
//! time. The threshold on dt / h is then bracketed by bisection.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sbp_core::interface2d::InterfaceMethod;
use sbp_core::operators::{Grid1D, SbpOperatorSet, Variant};
use sbp_core::timestepping::{cfl_threshold, run_until, GrowthDetector, Scheme, SecondOrderSystem, Threshold, TwoLevelState};
use sbp_core::wave1d::{BoundaryKind, BoundaryTreatment, Material1D, PenaltyConfig, Periodic1D, Wave1D};
use sbp_core::Result;

use crate::cases::Case;
use crate::config::Settings;

/// One stability probe configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CflCase {
    Periodic1D,
    /// Both ends of [-pi/2, pi/2] with the same boundary kind; the margin is
    /// the relative penalty excess of SAT Dirichlet boundaries.
    Boundary1D { kind: BoundaryKind, margin: f64 },
    /// Composite grid with an interface coupling.
    Interface2D { case: Case, method: InterfaceMethod },
}

impl CflCase {
    /// Every probe with its reference threshold.
    pub fn suite() -> Vec<(CflCase, f64)> {
        use InterfaceMethod::{GpImproved, Sat3};
        let b = |kind, margin| CflCase::Boundary1D { kind, margin };
        let i = |case, method| CflCase::Interface2D { case, method };
        vec![
            (CflCase::Periodic1D, 1.50),
            (b(BoundaryKind::GpNeumann, 0.0), 1.44),
            (b(BoundaryKind::SatNeumann, 0.0), 1.50),
            (b(BoundaryKind::InjectionDirichlet, 0.0), 1.50),
            (b(BoundaryKind::SatDirichlet, 0.2), 1.16),
            (b(BoundaryKind::SatDirichlet, 0.001), 1.25),
            (i(Case::Snell, GpImproved), 2.09),
            (i(Case::Snell, Sat3), 1.18),
            (i(Case::Smooth, GpImproved), 0.86),
            (i(Case::Smooth, Sat3), 0.77),
        ]
    }

    pub fn label(&self) -> String {
        match self {
            CflCase::Periodic1D => "1d periodic".into(),
            CflCase::Boundary1D { kind, margin } if *kind == BoundaryKind::SatDirichlet => {
                format!("1d {} (tau +{}%)", kind.name(), margin * 100.0)
            }
            CflCase::Boundary1D { kind, .. } => format!("1d {}", kind.name()),
            CflCase::Interface2D { case, method } => format!("2d {} {}", case.name(), method),
        }
    }

    /// Selects suite entries by a comma separated list of substrings of
    /// their labels; `all` selects everything.
    pub fn select(filter: &str) -> Vec<(CflCase, f64)> {
        let keys: Vec<&str> = filter.split(',').map(str::trim).collect();
        CflCase::suite()
            .into_iter()
            .filter(|(c, _)| keys.iter().any(|k| *k == "all" || c.label().contains(k)))
            .collect()
    }

    /// Search interval for the bisection, wide enough to hold every
    /// threshold of its dimension.
    pub fn bracket(&self) -> (f64, f64) {
        match self {
            CflCase::Interface2D { .. } => (0.4, 3.0),
            _ => (0.8, 2.0),
        }
    }

    /// Threshold on dt / h.
    pub fn threshold(&self, s: &Settings) -> Result<Threshold> {
        let (lo, hi) = self.bracket();
        match *self {
            CflCase::Periodic1D => {
                let n = s.cfl_1d_points - 1;
                let h = PI / n as f64;
                let sys = Periodic1D::uniform(n, h, 1.0, 1.0)?;
                let u0 = random_vec(n, s.seed);
                search(|r| probe(&sys, u0.clone(), r * h, s.cfl_1d_time), lo, hi, s.cfl_resolution)
            }
            CflCase::Boundary1D { kind, margin } => {
                let n = s.cfl_1d_points;
                let grid = Grid1D::spanning(-PI / 2.0, PI / 2.0, n)?;
                let variant = if kind.uses_ghost() { Variant::WithGhost } else { Variant::NoGhost };
                let b = BoundaryTreatment::homogeneous(kind).with_penalty(PenaltyConfig::with_margin(margin));
                let sys = Wave1D::new(grid, SbpOperatorSet::of_variant(variant), Material1D::uniform(n, 1.0, 1.0), b.clone(), b)?;
                let mut u0 = random_vec(n + 2, s.seed);
                sys.prepare_level(0.0, grid.h, &mut u0)?;
                search(|r| probe(&sys, u0.clone(), r * grid.h, s.cfl_1d_time), lo, hi, s.cfl_resolution)
            }
            CflCase::Interface2D { case, method } => {
                let sys = case.homogeneous_system(s.cfl_2d_n, method, PenaltyConfig::with_margin(s.tau_margin))?;
                let mut u0 = random_vec(sys.len(), s.seed);
                sys.make_admissible(None, &mut u0)?;
                let h = sys.grid.h;
                search(|r| probe(&sys, u0.clone(), r * h, s.cfl_2d_time), lo, hi, s.cfl_resolution)
            }
        }
    }
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn probe<S: SecondOrderSystem>(sys: &S, u0: Vec<f64>, dt: f64, t_end: f64) -> Result<bool> {
    let mut st = TwoLevelState::new(u0.clone(), u0, dt, 0.0)?;
    run_until(sys, Scheme::PredictorCorrector, &mut st, t_end, GrowthDetector::default(), |_| {})
}

fn search(is_stable: impl Fn(f64) -> Result<bool> + Sync, lo: f64, hi: f64, resolution: f64) -> Result<Threshold> {
    let probes = std::thread::available_parallelism().map_or(1, |p| p.get()).clamp(1, 7);
    cfl_threshold(is_stable, lo, hi, resolution, probes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_labels_are_unique_and_selectable() {
        let labels: Vec<String> = CflCase::suite().iter().map(|(c, _)| c.label()).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), labels.len());
        assert_eq!(CflCase::select("all").len(), 10);
        assert_eq!(CflCase::select("2d").len(), 4);
        assert_eq!(CflCase::select("periodic").len(), 1);
    }

    #[test]
    fn periodic_threshold_on_small_grid() {
        let s = Settings {
            cfl_1d_points: 41,
            cfl_1d_time: 20.0,
            cfl_resolution: 0.02,
            ..Settings::default()
        };
        let t = CflCase::Periodic1D.threshold(&s).unwrap();
        assert!((t.estimate() - 1.5).abs() < 0.03, "{t:?}");
    }
}
