//! End-to-end checks of the one-dimensional solvers and the stability tools.

use std::f64::consts::PI;
use std::sync::Arc;

use sbp_core::operators::{Grid1D, SbpOperatorSet, Variant};
use sbp_core::timestepping::{dense_spectral_radius, spectral_radius, Integrator, Scheme, SecondOrderSystem};
use sbp_core::wave1d::{BoundaryKind, BoundaryTreatment, Material1D, Periodic1D, TimeFn, Wave1D};

fn neumann(variant: Variant, kind: BoundaryKind, n: usize) -> Wave1D {
    let grid = Grid1D::spanning(-1.0, 2.0, n).unwrap();
    let mat = Material1D::sample(&grid, |x| 2.0 + x.sin(), |x| 1.0 + 0.5 * x * x).unwrap();
    let left: TimeFn = Arc::new(|t| (1.5 * t).sin());
    let right: TimeFn = Arc::new(|t| 0.3 * t.cos());
    Wave1D::new(
        grid,
        SbpOperatorSet::of_variant(variant),
        mat,
        BoundaryTreatment::new(kind, left),
        BoundaryTreatment::new(kind, right),
    )
    .unwrap()
}

#[test]
fn sat_and_ghost_point_neumann_give_identical_trajectories() {
    let n = 60;
    let sat = neumann(Variant::NoGhost, BoundaryKind::SatNeumann, n);
    let gp = neumann(Variant::GhostAdded, BoundaryKind::GpNeumann, n);
    let dt = 0.4 * sat.grid.h;
    let init = |x: f64, t: f64| (-(x - 0.5).powi(2) * 8.0).exp() * (1.0 + t);
    for scheme in [Scheme::PredictorCorrector, Scheme::Stormer] {
        let mut a = sat.initial_state(init, 0.0, dt).unwrap();
        let mut b = gp.initial_state(init, 0.0, dt).unwrap();
        let mut ia = Integrator::new(scheme);
        let mut ib = Integrator::new(scheme);
        for _ in 0..1000 {
            ia.step(&sat, &mut a).unwrap();
            ib.step(&gp, &mut b).unwrap();
        }
        let scale = sat.max_norm(&a.curr[1..=n]);
        let dev = (1..=n).map(|j| (a.curr[j] - b.curr[j]).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-12 * scale, "{scheme:?}: deviation {dev:e} at scale {scale:e}");
    }
}

#[test]
fn periodic_spectral_radius_matches_the_symbol() {
    for n in [64usize, 256] {
        let h = 2.0 * PI / n as f64;
        let p = Periodic1D::uniform(n, h, 1.0, 1.0).unwrap();
        let apply = |x: &[f64], y: &mut [f64]| {
            p.spatial(x, y);
            y.iter_mut().for_each(|v| *v = -*v);
        };
        let kappa = 16.0 / (3.0 * h * h);
        let power = spectral_radius(apply, n, None, 1e-15, 20_000_000, 11).unwrap();
        let dense = dense_spectral_radius(apply, n, None);
        assert!((power - kappa).abs() <= 1e-8 * kappa, "n={n}: {power} vs {kappa}");
        assert!((power - dense).abs() <= 1e-10 * dense, "n={n}: {power} vs {dense}");
    }
}

#[test]
fn variable_coefficient_spectral_radius_uses_the_weighted_product() {
    let n = 30;
    let grid = Grid1D::spanning(0.0, 1.0, n).unwrap();
    let mat = Material1D::sample(&grid, |x| 1.0 + x, |x| 2.0 - x).unwrap();
    let b = BoundaryTreatment::homogeneous(BoundaryKind::SatNeumann);
    let w = Wave1D::new(grid, SbpOperatorSet::no_ghost(), mat.clone(), b.clone(), b).unwrap();
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut u = vec![0.0; n + 2];
        u[1..=n].copy_from_slice(x);
        let mut out = vec![0.0; n + 2];
        w.spatial(&u, &mut out);
        for j in 0..n {
            y[j] = -out[j + 1];
        }
    };
    let weights: Vec<f64> = SbpOperatorSet::no_ghost()
        .norm
        .weights(n)
        .iter()
        .zip(&mat.rho)
        .map(|(a, r)| a * r)
        .collect();
    let power = spectral_radius(apply, n, Some(&weights), 1e-14, 5_000_000, 2).unwrap();
    let dense = dense_spectral_radius(apply, n, Some(&weights));
    assert!((power - dense).abs() <= 1e-9 * dense, "{power} vs {dense}");
}
