//! Property tests of the operator, linear algebra and interface invariants.

use proptest::prelude::*;
use sbp_core::interface2d::{CompositeGrid2D, Interface2D, InterfaceMethod, Material2D, Transfer};
use sbp_core::linalg::{dense_solve, lu_factor, BandedMatrix};
use sbp_core::operators::{CoefficientField1D, GhostedField1D, Grid1D, SbpOperatorSet, Side, Variant};
use sbp_core::wave1d::{BoundaryKind, BoundaryTreatment, Material1D, Wave1D};

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

/// Grid size, then core values of u, v and mu and two ghost values.
fn fields() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
    (12usize..40).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(0.2..3.0f64, n),
            -1.0..1.0f64,
            -1.0..1.0f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sbp_identity_holds(v in variant(), (n, u, w, mu, gl, gr) in fields(), h in 0.01..1.0f64) {
        let op = SbpOperatorSet::of_variant(v);
        let grid = Grid1D::new(n, h, 0.0).unwrap();
        let mu = CoefficientField1D::new(mu).unwrap();
        let w = if v.uses_ghost() { GhostedField1D::with_ghosts(w, gl, gr) } else { GhostedField1D::without_ghosts(w) };
        let r = op.sbp_identity_residual(&grid, &mu, &u, &w).unwrap();
        prop_assert!(r <= 1e-12, "residual {r}");
    }

    #[test]
    fn bilinear_form_is_positive_semidefinite(v in variant(), (n, _u, _w, mu, _l, _r) in fields()) {
        let op = SbpOperatorSet::of_variant(v);
        let grid = Grid1D::new(n, 1.0 / (n - 1) as f64, 0.0).unwrap();
        let m = op.sbp_bilinear_form(&grid, &CoefficientField1D::new(mu).unwrap()).unwrap();
        let scale = m.amax();
        let sym = (&m + m.transpose()) * 0.5;
        prop_assert!((&m - &sym).amax() <= 1e-12 * scale);
        prop_assert!(sym.symmetric_eigenvalues().min() >= -1e-12 * scale);
    }

    #[test]
    fn neumann_ghost_sets_boundary_derivative((n, u, _w, mu, _l, _r) in fields(), f in -2.0..2.0f64, g in -2.0..2.0f64) {
        for variant in [Variant::WithGhost, Variant::GhostAdded] {
            let grid = Grid1D::spanning(0.0, 1.0, n).unwrap();
            let mat = Material1D::new(vec![1.0; n], CoefficientField1D::new(mu.clone()).unwrap()).unwrap();
            let b = BoundaryTreatment::homogeneous(BoundaryKind::GpNeumann);
            let w = Wave1D::new(grid, SbpOperatorSet::of_variant(variant), mat, b.clone(), b).unwrap();
            let mut p = vec![0.0; n + 2];
            p[1..=n].copy_from_slice(&u);
            w.set_neumann_ghost(Side::Left, &mut p, f).unwrap();
            w.set_neumann_ghost(Side::Right, &mut p, g).unwrap();
            prop_assert!((w.boundary_derivative(Side::Left, &p) - f).abs() <= 1e-9 * (1.0 + f.abs()) * n as f64);
            prop_assert!((w.boundary_derivative(Side::Right, &p) - g).abs() <= 1e-9 * (1.0 + g.abs()) * n as f64);
        }
    }

    #[test]
    fn banded_lu_matches_dense_solve(n in 5usize..40, kl in 0usize..4, ku in 0usize..4, seed in any::<u64>(), pivot in any::<bool>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v: f64 = rng.random_range(-1.0..1.0);
                // Diagonal dominance keeps the unpivoted factorization safe.
                t.push((i, j, if i == j { v + 10.0 } else { v }));
            }
        }
        let m = BandedMatrix::from_triplets(n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = lu_factor(&m, pivot).unwrap().solve(&b).unwrap();
        let y = dense_solve(&m.to_dense(), &b).unwrap();
        for (a, c) in x.iter().zip(&y) {
            prop_assert!((a - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn restriction_is_half_the_adjoint(order in prop::sample::select(vec![4usize, 6]), n in 12usize..30, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let t = Transfer::new(order).unwrap();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut pc = vec![0.0; 2 * n];
        let mut rf = vec![0.0; n];
        t.prolong(&c, &mut pc);
        t.restrict(&f, &mut rf);
        let a: f64 = f.iter().zip(&pc).map(|(x, y)| x * y).sum();
        let b: f64 = c.iter().zip(&rf).map(|(x, y)| x * y).sum();
        prop_assert!((a - 2.0 * b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn interface_couplings_are_self_adjoint(n in 12usize..20, seed in any::<u64>(), mu_f in 0.2..3.0f64, mu_c in 0.2..3.0f64) {
        let grid = CompositeGrid2D::new(n, 4.0 * std::f64::consts::PI).unwrap();
        let mat = Material2D::sample(&grid, |x, _| (1.0 + 0.3 * x.sin(), mu_f), |_, y| (2.0, mu_c * (1.0 + 0.01 * y * y))).unwrap();
        for method in InterfaceMethod::ALL {
            let s = Interface2D::new(grid, mat.clone(), method).unwrap();
            let d = s.symmetry_defect(seed).unwrap();
            prop_assert!(d <= 1e-11, "{method}: {d}");
        }
    }
}
