//! Problem definitions: the plane wave refracted at a material interface and
//! the manufactured solution with smooth material.

use std::f64::consts::PI;
use std::sync::Arc;

use sbp_core::interface2d::{CompositeGrid2D, ForcingTerm, Interface2D, InterfaceMethod, Material2D};
use sbp_core::wave1d::PenaltyConfig;
use sbp_core::Result;

/// Period in x and height of each subdomain.
pub const WIDTH: f64 = 4.0 * PI;
/// Final time of the convergence runs.
pub const FINAL_TIME: f64 = 11.0;

/// Test case selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Case {
    Snell,
    Smooth,
}

impl Case {
    pub const ALL: [Case; 2] = [Case::Snell, Case::Smooth];

    pub fn name(self) -> &'static str {
        match self {
            Case::Snell => "snell",
            Case::Smooth => "smooth",
        }
    }

    /// Time step ratio dt / h used for the convergence study.
    pub fn convergence_ratio(self) -> f64 {
        match self {
            Case::Snell => 1.0,
            Case::Smooth => 0.7,
        }
    }

    /// Density and stiffness sampled on both grids.
    pub fn material(self, grid: &CompositeGrid2D) -> Result<Material2D> {
        match self {
            Case::Snell => {
                let s = SnellSolution::standard();
                Material2D::piecewise(grid, (1.0, s.mu2), (1.0, s.mu1))
            }
            Case::Smooth => {
                let m = |x: f64, y: f64| (ManufacturedCase::rho(x, y), ManufacturedCase::mu(x, y));
                Material2D::sample(grid, m, m)
            }
        }
    }

    /// Semi-discretization with homogeneous boundary data and no forcing.
    pub fn homogeneous_system(self, n: usize, method: InterfaceMethod, penalty: PenaltyConfig) -> Result<Interface2D> {
        let grid = CompositeGrid2D::new(n, WIDTH)?;
        Interface2D::build(grid, self.material(&grid)?, method, penalty, true)
    }

    /// Builds the semi-discretization with boundary data and forcing.
    pub fn system(self, n: usize, method: InterfaceMethod, penalty: PenaltyConfig) -> Result<Interface2D> {
        let sys = self.homogeneous_system(n, method, penalty)?;
        Ok(match self {
            Case::Snell => {
                let s = SnellSolution::standard();
                sys.with_boundary(Arc::new(move |x, y, t| s.eval(x, y, t)))
            }
            Case::Smooth => sys
                .with_boundary(Arc::new(ManufacturedCase::exact))
                .with_forcing(ManufacturedCase::forcing()),
        })
    }

    /// Exact solution.
    pub fn exact(self) -> impl Fn(f64, f64, f64) -> f64 + Send + Sync + Copy {
        let s = SnellSolution::standard();
        move |x, y, t| match self {
            Case::Snell => s.eval(x, y, t),
            Case::Smooth => ManufacturedCase::exact(x, y, t),
        }
    }
}

impl std::str::FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Case::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown case {s:?} (expected snell or smooth)"))
    }
}

/// Incoming, reflected and transmitted plane waves for stiffness mu1 below
/// the interface and mu2 above it, with unit density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnellSolution {
    pub mu1: f64,
    pub mu2: f64,
    pub k: f64,
    pub r: f64,
    pub t: f64,
    pub omega: f64,
}

impl SnellSolution {
    pub fn new(mu1: f64, mu2: f64) -> Self {
        let k = (2.0 * mu1 / mu2 - 1.0).sqrt();
        let r = (mu1 - mu2 * k) / (mu1 + mu2 * k);
        Self {
            mu1,
            mu2,
            k,
            r,
            t: 1.0 + r,
            omega: (2.0 * mu1).sqrt(),
        }
    }

    /// mu1 = 1, mu2 = 1/4.
    pub fn standard() -> Self {
        Self::new(1.0, 0.25)
    }

    /// Field below the interface (incoming plus reflected).
    pub fn lower(&self, x: f64, y: f64, t: f64) -> f64 {
        (x + y - self.omega * t).cos() + self.r * (-x + y + self.omega * t).cos()
    }

    /// Field above the interface (transmitted).
    pub fn upper(&self, x: f64, y: f64, t: f64) -> f64 {
        self.t * (x + self.k * y - self.omega * t).cos()
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        if y >= 0.0 {
            self.upper(x, y, t)
        } else {
            self.lower(x, y, t)
        }
    }

    /// Largest violation of value and normal-flux continuity at y = 0 over
    /// sampled (x, t).
    pub fn interface_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..37 {
            for b in 0..23 {
                let x = a as f64 * 0.37;
                let t = b as f64 * 0.53;
                let jump = self.lower(x, 0.0, t) - self.upper(x, 0.0, t);
                let dl = -(x - self.omega * t).sin() - self.r * (-x + self.omega * t).sin();
                let du = -self.t * self.k * (x - self.omega * t).sin();
                worst = worst.max(jump.abs()).max((self.mu1 * dl - self.mu2 * du).abs());
            }
        }
        worst
    }
}

/// Manufactured solution u = sin(x + 2) cos(y + 1) sin(t + 3) with smooth material.
pub struct ManufacturedCase;

impl ManufacturedCase {
    pub fn rho(x: f64, y: f64) -> f64 {
        3.0 - x.cos() * y.cos()
    }

    pub fn mu(x: f64, y: f64) -> f64 {
        2.0 + x.cos() * y.cos()
    }

    pub fn exact(x: f64, y: f64, t: f64) -> f64 {
        (x + 2.0).sin() * (y + 1.0).cos() * (t + 3.0).sin()
    }

    /// Spatial profile of F = rho u_tt - div(mu grad u), which is this times sin(t + 3).
    pub fn forcing_profile(x: f64, y: f64) -> f64 {
        let s = (x + 2.0).sin() * (y + 1.0).cos();
        let sx = (x + 2.0).cos() * (y + 1.0).cos();
        let sy = -(x + 2.0).sin() * (y + 1.0).sin();
        let mux = -x.sin() * y.cos();
        let muy = -x.cos() * y.sin();
        let div = -2.0 * Self::mu(x, y) * s + mux * sx + muy * sy;
        -Self::rho(x, y) * s - div
    }

    pub fn forcing() -> ForcingTerm {
        ForcingTerm {
            profile: Arc::new(Self::forcing_profile),
            time: Arc::new(|t| (t + 3.0).sin()),
            time_tt: Arc::new(|t| -(t + 3.0).sin()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snell_interface_conditions_hold() {
        let s = SnellSolution::standard();
        assert!(s.interface_residual() < 1e-12);
        assert!((s.k - 7f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn snell_solves_wave_equation() {
        // Second differences of each plane wave match the equation.
        let s = SnellSolution::standard();
        let e = 1e-3;
        for &(x, y, t) in &[(0.3, -1.0, 0.7), (2.0, 1.5, 3.1)] {
            let f = |x: f64, y: f64, t: f64| s.eval(x, y, t);
            let d2 = |a: f64, b: f64, c: f64| (a - 2.0 * b + c) / (e * e);
            let utt = d2(f(x, y, t + e), f(x, y, t), f(x, y, t - e));
            let lap = d2(f(x + e, y, t), f(x, y, t), f(x - e, y, t)) + d2(f(x, y + e, t), f(x, y, t), f(x, y - e, t));
            let mu = if y >= 0.0 { s.mu2 } else { s.mu1 };
            assert!((utt - mu * lap).abs() < 1e-5);
        }
    }

    #[test]
    fn manufactured_forcing_is_consistent() {
        let e = 1e-3;
        for &(x, y, t) in &[(0.4, -0.9, 1.3), (5.0, 2.2, 0.1)] {
            let u = ManufacturedCase::exact;
            let utt = (u(x, y, t + e) - 2.0 * u(x, y, t) + u(x, y, t - e)) / (e * e);
            let flux = |xa: f64, ya: f64, xb: f64, yb: f64| {
                let (xm, ym) = ((xa + xb) / 2.0, (ya + yb) / 2.0);
                ManufacturedCase::mu(xm, ym) * (u(xb, yb, t) - u(xa, ya, t)) / e
            };
            let div = (flux(x, y, x + e, y) - flux(x - e, y, x, y)) / e + (flux(x, y, x, y + e) - flux(x, y - e, x, y)) / e;
            let f = ManufacturedCase::forcing_profile(x, y) * (t + 3.0).sin();
            assert!((ManufacturedCase::rho(x, y) * utt - div - f).abs() < 1e-5);
        }
    }

    #[test]
    fn material_ranges() {
        for i in 0..50 {
            for j in 0..50 {
                let (x, y) = (i as f64 * 0.26, j as f64 * 0.26 - 6.0);
                let r = ManufacturedCase::rho(x, y);
                let m = ManufacturedCase::mu(x, y);
                assert!((2.0..=4.0).contains(&r) && (1.0..=3.0).contains(&m));
            }
        }
    }
}
