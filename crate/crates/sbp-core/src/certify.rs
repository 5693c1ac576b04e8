//! Property certificates for the operator sets.
//!
//! Each certificate is a measured quantity compared against a tolerance, so a
//! report can be printed as a table and turned into an exit status.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::operators::{
    BoundaryDerivativeStencil, CoefficientField1D, GhostedField1D, Grid1D, SbpOperatorSet, Side,
    Variant, CLOSURE_ROWS,
};

/// One measured property.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub variant: Variant,
    pub n: usize,
    pub check: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Certificate {
    fn at_most(variant: Variant, n: usize, check: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            variant,
            n,
            check,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Relative tolerance of the algebraic identities in double precision.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Tolerance of polynomial exactness checks, relative to the size of the exact value.
pub const EXACTNESS_TOL: f64 = 1e-9;

fn random_field(rng: &mut StdRng, n: usize, ghosts: bool) -> GhostedField1D {
    let core: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    if ghosts {
        let l = rng.random_range(-1.0..1.0);
        let r = rng.random_range(-1.0..1.0);
        GhostedField1D::with_ghosts(core, l, r)
    } else {
        GhostedField1D::without_ghosts(core)
    }
}

fn random_mu(rng: &mut StdRng, n: usize) -> CoefficientField1D {
    CoefficientField1D::new((0..n).map(|_| rng.random_range(0.5..2.0)).collect())
        .expect("positive samples")
}

fn unit_grid(n: usize) -> Grid1D {
    Grid1D::new(n, 1.0 / (n - 1) as f64, 0.0).expect("n checked by caller")
}

/// Largest SBP identity residual over `trials` random (u, v, mu) triples.
pub fn max_identity_residual(op: &SbpOperatorSet, n: usize, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let grid = unit_grid(n);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mu = random_mu(&mut rng, n);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = random_field(&mut rng, n, op.variant.uses_ghost());
        worst = worst.max(op.sbp_identity_residual(&grid, &mu, &u, &v)?);
    }
    Ok(worst)
}

/// (asymmetry, smallest eigenvalue, ghost column max) of the bilinear form, all relative to max |M|.
pub fn form_properties(op: &SbpOperatorSet, n: usize, mu: &CoefficientField1D) -> Result<(f64, f64, f64)> {
    let grid = unit_grid(n);
    let (m, ghost) = op.assemble_form(&grid, mu)?;
    let scale = m.amax();
    let asym = (&m - m.transpose()).amax() / scale;
    let sym = (&m + m.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min() / scale;
    let ghost_max = ghost.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    Ok((asym, min_eig, ghost_max))
}

fn poly(x: f64, deg: i32) -> f64 {
    x.powi(deg)
}

fn dpoly(x: f64, deg: i32) -> f64 {
    if deg == 0 {
        0.0
    } else {
        deg as f64 * x.powi(deg - 1)
    }
}

fn ddpoly(x: f64, deg: i32) -> f64 {
    if deg < 2 {
        0.0
    } else {
        (deg * (deg - 1)) as f64 * x.powi(deg - 2)
    }
}

/// Largest relative error of G(mu) v on closure rows and on interior rows for
/// mu = 1 + x^dm / 2 (mu = 1 when dm is None) and v = x^dv.
pub fn exactness_error(op: &SbpOperatorSet, n: usize, dm: Option<i32>, dv: i32) -> Result<(f64, f64)> {
    let grid = unit_grid(n);
    let mu_f = |x: f64| match dm {
        Some(d) => 1.0 + 0.5 * poly(x, d),
        None => 1.0,
    };
    let dmu_f = |x: f64| match dm {
        Some(d) => 0.5 * dpoly(x, d),
        None => 0.0,
    };
    let mu = CoefficientField1D::sample(&grid, mu_f)?;
    let v = GhostedField1D::sample(&grid, op.variant.uses_ghost(), |x| poly(x, dv));
    let gv = op.apply_second_derivative(&grid, &mu, &v)?;
    let (mut closure, mut interior) = (0.0f64, 0.0f64);
    for j in 1..=n {
        let x = grid.x(j);
        let exact = dmu_f(x) * dpoly(x, dv) + mu_f(x) * ddpoly(x, dv);
        let scale = 1.0 + exact.abs() + grid.h.powi(-2) * f64::EPSILON * 1e3;
        let e = (gv[j - 1] - exact).abs() / scale;
        if j <= CLOSURE_ROWS || j > n - CLOSURE_ROWS {
            closure = closure.max(e);
        } else {
            interior = interior.max(e);
        }
    }
    Ok((closure, interior))
}

/// Largest error of a boundary derivative stencil (both sides) on monomials up to `degree`.
pub fn derivative_exactness_error(stencil: &BoundaryDerivativeStencil, n: usize, degree: i32) -> f64 {
    let grid = unit_grid(n);
    let mut worst = 0.0f64;
    for d in 0..=degree {
        let v = GhostedField1D::sample(&grid, true, |x| poly(x, d)).to_padded();
        for side in [Side::Left, Side::Right] {
            let s = stencil.on_side(side);
            let x = match side {
                Side::Left => grid.x(1),
                Side::Right => grid.x(n),
            };
            let e = (s.apply_padded(&v, n, grid.h) - dpoly(x, d)).abs() / (1.0 + dpoly(x, d).abs());
            worst = worst.max(e);
        }
    }
    worst
}

/// Runs every certificate for one variant and grid size.
pub fn certify(op: &SbpOperatorSet, n: usize, trials: usize, seed: u64) -> Result<Vec<Certificate>> {
    let v = op.variant;
    let mut out = Vec::new();
    out.push(Certificate::at_most(
        v,
        n,
        "sbp identity residual",
        max_identity_residual(op, n, trials, seed)?,
        IDENTITY_TOL,
    ));
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let (mut asym, mut min_eig, mut ghost) = (0.0f64, f64::INFINITY, 0.0f64);
    let mut mus = vec![CoefficientField1D::constant(n, 1.0)];
    for _ in 0..4 {
        mus.push(random_mu(&mut rng, n));
    }
    for mu in &mus {
        let (a, e, g) = form_properties(op, n, mu)?;
        asym = asym.max(a);
        min_eig = min_eig.min(e);
        ghost = ghost.max(g);
    }
    out.push(Certificate::at_most(v, n, "form asymmetry", asym, IDENTITY_TOL));
    out.push(Certificate::at_most(v, n, "form negative eigenvalue", (-min_eig).max(0.0), IDENTITY_TOL));
    out.push(Certificate::at_most(v, n, "ghost column max", ghost, 0.0));

    // Second derivative exactness: interior on fluxes of degree 4 (degree 5 for
    // constant mu), closures on degree 3 for constant mu and fluxes of degree 2.
    let mut interior = 0.0f64;
    let mut closure = 0.0f64;
    for dv in 0..=5 {
        let (c, i) = exactness_error(op, n, None, dv)?;
        interior = interior.max(i);
        if dv <= 3 {
            closure = closure.max(c);
        }
    }
    for dm in 1..=4 {
        for dv in 1..=(5 - dm) {
            let (c, i) = exactness_error(op, n, Some(dm), dv)?;
            interior = interior.max(i);
            if dm + dv - 1 <= 2 {
                closure = closure.max(c);
            }
        }
    }
    out.push(Certificate::at_most(v, n, "interior exactness", interior, EXACTNESS_TOL));
    out.push(Certificate::at_most(v, n, "closure exactness", closure, EXACTNESS_TOL));
    let b = &op.boundary_derivative;
    out.push(Certificate::at_most(
        v,
        n,
        "boundary derivative exactness",
        derivative_exactness_error(b, n, b.kind.exactness_degree() as i32),
        EXACTNESS_TOL,
    ));
    Ok(out)
}

/// Borrowing certificates: remainder PSD at alpha, indefinite at 1.1 alpha.
pub fn certify_borrowing(n: usize, seed: u64) -> Result<Vec<Certificate>> {
    let op = SbpOperatorSet::no_ghost();
    let grid = unit_grid(n);
    let alpha = op.borrowing.expect("no-ghost operator").alpha;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut mus = vec![CoefficientField1D::constant(n, 1.0)];
    for _ in 0..3 {
        mus.push(random_mu(&mut rng, n));
    }
    let (mut worst_neg, mut inflated_min) = (0.0f64, f64::NEG_INFINITY);
    for mu in &mus {
        let scale = op.sbp_bilinear_form(&grid, mu)?.amax();
        let (m, _, _) = op.borrowing_split(&grid, mu, None)?;
        let e = m.symmetric_eigenvalues().min() / scale;
        worst_neg = worst_neg.max(-e);
        let (m, _, _) = op.borrowing_split(&grid, mu, Some(1.1 * alpha))?;
        let e = m.symmetric_eigenvalues().min() / scale;
        if mu.mu.iter().all(|&x| x == 1.0) {
            inflated_min = e;
        }
    }
    Ok(vec![
        Certificate::at_most(Variant::NoGhost, n, "borrowing remainder negative eigenvalue", worst_neg.max(0.0), IDENTITY_TOL),
        Certificate {
            variant: Variant::NoGhost,
            n,
            check: "borrowing at 1.1 alpha min eigenvalue (< 0)",
            value: inflated_min,
            tolerance: 0.0,
            passed: inflated_min < 0.0,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_variants_certify_at_small_sizes() {
        for v in Variant::ALL {
            let op = SbpOperatorSet::of_variant(v);
            for c in certify(&op, 16, 10, 1).unwrap() {
                assert!(c.passed, "{c:?}");
            }
        }
    }

    #[test]
    fn perturbed_table_is_detected() {
        let mut op = SbpOperatorSet::with_ghost();
        let mut closure = op.closure.clone();
        closure[5].value += crate::operators::Q::new(1, 1_000_000);
        op = SbpOperatorSet::from_parts(
            op.variant,
            op.interior.clone(),
            closure,
            op.boundary_derivative.clone(),
            None,
        );
        let r = max_identity_residual(&op, 16, 10, 3).unwrap();
        assert!(r > 1e-8, "residual {r}");
    }

    #[test]
    fn first_point_indicator_balances() {
        for v in Variant::ALL {
            let op = SbpOperatorSet::of_variant(v);
            let grid = unit_grid(16);
            let mut rng = StdRng::seed_from_u64(9);
            let mu = random_mu(&mut rng, 16);
            let mut u = vec![0.0; 16];
            u[0] = 1.0;
            let f = random_field(&mut rng, 16, v.uses_ghost());
            assert!(op.sbp_identity_residual(&grid, &mu, &u, &f).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn constant_is_in_null_space() {
        let op = SbpOperatorSet::no_ghost();
        let grid = unit_grid(20);
        let m = op
            .sbp_bilinear_form(&grid, &CoefficientField1D::constant(20, 1.0))
            .unwrap();
        let one = nalgebra::DVector::from_element(20, 3.0);
        assert!(one.dot(&(&m * &one)).abs() < 1e-10);
    }

    #[test]
    fn borrowing_certificates_pass() {
        for c in certify_borrowing(20, 5).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }
}
