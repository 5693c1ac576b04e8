//! Explicit two-level time stepping for semi-discrete second-order systems
//! u_tt = L u + s(t), with enforcement hooks for ghost points, injected
//! boundary values and interface systems.
//!
//! Two integrators are provided: the second-order Stormer scheme and the
//! fourth-order predictor-corrector scheme obtained from the modified
//! equation. The module also has the instrumentation used for stability
//! studies: a power iteration for the spectral radius of L and a bisection
//! for the largest stable time step.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::{Result, SbpError};

/// Which half of a predictor-corrector step a hook is called from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Predictor,
    Corrector,
}

/// A semi-discrete system u_tt = L u + s(t) with optional enforcement.
///
/// State vectors may contain slots that are not evolved by L (ghost values,
/// injected boundary values); `spatial` must write zero into those slots and
/// `enforce` is responsible for them.
pub trait SecondOrderSystem: Sync {
    /// Length of the state vector.
    fn len(&self) -> usize;

    /// out = L u (homogeneous part, linear in u).
    fn spatial(&self, u: &[f64], out: &mut [f64]);

    /// out += s(t) (forcing and boundary or interface data).
    fn add_source(&self, _t: f64, _out: &mut [f64]) {}

    /// Whether `add_source` does anything.
    fn has_source(&self) -> bool {
        false
    }

    /// out += s''(t). The default is a centered second difference with step `dt`.
    fn add_source_tt(&self, t: f64, dt: f64, out: &mut [f64]) {
        if !self.has_source() {
            return;
        }
        let n = self.len();
        let mut p = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut m = vec![0.0; n];
        self.add_source(t + dt, &mut p);
        self.add_source(t, &mut c);
        self.add_source(t - dt, &mut m);
        let s = 1.0 / (dt * dt);
        for i in 0..n {
            out[i] += (p[i] - 2.0 * c[i] + m[i]) * s;
        }
    }

    /// Fixes the non-evolved slots of `new` (the level at time `t_new`) given
    /// the two previous levels.
    fn enforce(&self, _stage: Stage, _t_new: f64, _dt: f64, _prev: &[f64], _curr: &[f64], _new: &mut [f64]) -> Result<()> {
        Ok(())
    }

    /// Magnitude used by the instability detector.
    fn max_norm(&self, u: &[f64]) -> f64 {
        u.iter().fold(0.0f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) })
    }
}

/// Two consecutive time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelState {
    pub prev: Vec<f64>,
    pub curr: Vec<f64>,
    pub dt: f64,
    /// Time of the first `curr` level.
    pub t0: f64,
    /// Number of steps taken.
    pub k: usize,
}

impl TwoLevelState {
    pub fn new(prev: Vec<f64>, curr: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if prev.len() != curr.len() {
            return Err(SbpError::SizeMismatch {
                expected: curr.len(),
                got: prev.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(SbpError::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { prev, curr, dt, t0, k: 0 })
    }

    /// Time of the `curr` level.
    pub fn t(&self) -> f64 {
        self.t0 + self.k as f64 * self.dt
    }
}

/// Integration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Stormer,
    PredictorCorrector,
}

/// Time stepper owning its work arrays.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub scheme: Scheme,
    acc: Vec<f64>,
    next: Vec<f64>,
    vel: Vec<f64>,
}

impl Integrator {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            acc: Vec::new(),
            next: Vec::new(),
            vel: Vec::new(),
        }
    }

    /// Advances `state` by one step.
    pub fn step<S: SecondOrderSystem + ?Sized>(&mut self, sys: &S, state: &mut TwoLevelState) -> Result<()> {
        let n = sys.len();
        if state.curr.len() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: state.curr.len(),
            });
        }
        self.acc.resize(n, 0.0);
        self.next.resize(n, 0.0);
        self.vel.resize(n, 0.0);
        let dt = state.dt;
        let dt2 = dt * dt;
        let t = state.t();
        let t_new = t + dt;

        sys.spatial(&state.curr, &mut self.acc);
        if sys.has_source() {
            sys.add_source(t, &mut self.acc);
        }
        for i in 0..n {
            self.next[i] = 2.0 * state.curr[i] - state.prev[i] + dt2 * self.acc[i];
        }
        match self.scheme {
            Scheme::Stormer => {
                sys.enforce(Stage::Corrector, t_new, dt, &state.prev, &state.curr, &mut self.next)?;
            }
            Scheme::PredictorCorrector => {
                sys.enforce(Stage::Predictor, t_new, dt, &state.prev, &state.curr, &mut self.next)?;
                let inv = 1.0 / dt2;
                for i in 0..n {
                    self.vel[i] = (self.next[i] - 2.0 * state.curr[i] + state.prev[i]) * inv;
                }
                sys.spatial(&self.vel, &mut self.acc);
                if sys.has_source() {
                    sys.add_source_tt(t, dt, &mut self.acc);
                }
                let c = dt2 * dt2 / 12.0;
                for i in 0..n {
                    self.next[i] += c * self.acc[i];
                }
                sys.enforce(Stage::Corrector, t_new, dt, &state.prev, &state.curr, &mut self.next)?;
            }
        }
        std::mem::swap(&mut state.prev, &mut state.curr);
        std::mem::swap(&mut state.curr, &mut self.next);
        state.k += 1;
        Ok(())
    }
}

/// One Stormer step.
pub fn stormer_step<S: SecondOrderSystem + ?Sized>(sys: &S, state: &mut TwoLevelState) -> Result<()> {
    Integrator::new(Scheme::Stormer).step(sys, state)
}

/// One predictor-corrector step.
pub fn pc_step<S: SecondOrderSystem + ?Sized>(sys: &S, state: &mut TwoLevelState) -> Result<()> {
    Integrator::new(Scheme::PredictorCorrector).step(sys, state)
}

/// Settings of the instability detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthDetector {
    /// Unstable once the max-norm exceeds `factor` times the initial max-norm.
    pub factor: f64,
    /// Steps between checks.
    pub every: usize,
}

impl Default for GrowthDetector {
    fn default() -> Self {
        Self {
            factor: 1e3,
            every: 50,
        }
    }
}

/// Integrates to time `t_end` and reports whether the run stayed bounded.
///
/// `observer` is called after every step with the state.
pub fn run_until<S: SecondOrderSystem + ?Sized>(
    sys: &S,
    scheme: Scheme,
    state: &mut TwoLevelState,
    t_end: f64,
    detector: GrowthDetector,
    mut observer: impl FnMut(&TwoLevelState),
) -> Result<bool> {
    let mut integ = Integrator::new(scheme);
    let scale = sys.max_norm(&state.curr).max(sys.max_norm(&state.prev));
    let steps = ((t_end - state.t()) / state.dt - 1e-9).ceil().max(0.0) as usize;
    for s in 1..=steps {
        integ.step(sys, state)?;
        observer(state);
        if s % detector.every == 0 || s == steps {
            let m = sys.max_norm(&state.curr);
            if !m.is_finite() || m > detector.factor * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Largest eigenvalue of a linear operator A with non-negative spectrum, by
/// power iteration with the Rayleigh quotient in the inner product with
/// diagonal `weights` (A must be self-adjoint in that inner product).
///
/// Stops when successive estimates agree to `rel_tol` over 50 iterations.
pub fn spectral_radius(
    apply: impl Fn(&[f64], &mut [f64]),
    n: usize,
    weights: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<f64> {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let dot = |a: &[f64], b: &[f64]| (0..n).map(|i| w(i) * a[i] * b[i]).sum::<f64>();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; n];
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let mut theta = 0.0;
    let mut last_check = f64::NAN;
    for it in 1..=max_iter {
        apply(&x, &mut y);
        theta = dot(&x, &y);
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return Ok(0.0);
        }
        for i in 0..n {
            x[i] = y[i] / ny;
        }
        if it % 50 == 0 {
            if (theta - last_check).abs() <= rel_tol * theta.abs() {
                return Ok(theta);
            }
            last_check = theta;
        }
    }
    let _ = theta;
    Err(SbpError::NoConvergence(max_iter))
}

/// Dense oracle for [`spectral_radius`]: eigenvalues of the symmetrized
/// matrix D^(1/2) A D^(-1/2) with D = diag(weights).
pub fn dense_spectral_radius(apply: impl Fn(&[f64], &mut [f64]), n: usize, weights: Option<&[f64]>) -> f64 {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        apply(&e, &mut col);
        for i in 0..n {
            a[(i, j)] = col[i] * w(i).sqrt() / w(j).sqrt();
        }
    }
    let s = (&a + a.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Fourier symbol of the fourth-order central second difference scaled by mu / rho.
pub fn fourier_symbol(omega: f64, h: f64, mu: f64, rho: f64) -> f64 {
    let s = (omega * h / 2.0).sin().powi(2);
    -(4.0 / (h * h)) * s * (1.0 + s / 3.0) * mu / rho
}

/// Result of a threshold bisection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    /// Largest ratio known to be stable.
    pub stable: f64,
    /// Smallest ratio known to be unstable.
    pub unstable: f64,
}

impl Threshold {
    pub fn estimate(&self) -> f64 {
        0.5 * (self.stable + self.unstable)
    }
}

/// Locates the stability threshold of `is_stable(ratio)` in [lo, hi].
///
/// Each round evaluates `probes` equally spaced interior candidates
/// concurrently; the interval shrinks until it is at most `resolution` wide.
pub fn cfl_threshold(
    is_stable: impl Fn(f64) -> Result<bool> + Sync,
    lo: f64,
    hi: f64,
    resolution: f64,
    probes: usize,
) -> Result<Threshold> {
    let probes = probes.max(1);
    let ends: Vec<Result<bool>> = [lo, hi].par_iter().map(|&c| is_stable(c)).collect();
    let (s_lo, s_hi) = (ends[0].clone()?, ends[1].clone()?);
    if !s_lo {
        return Err(SbpError::Bracket(format!("lower ratio {lo} is already unstable")));
    }
    if s_hi {
        return Err(SbpError::Bracket(format!("upper ratio {hi} is still stable")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > resolution {
        let cands: Vec<f64> = (1..=probes)
            .map(|i| a + (b - a) * i as f64 / (probes + 1) as f64)
            .collect();
        let res: Vec<Result<bool>> = cands.par_iter().map(|&c| is_stable(c)).collect();
        let mut new_a = a;
        let mut new_b = b;
        for (c, r) in cands.iter().zip(res) {
            if r? {
                new_a = *c;
            } else {
                new_b = *c;
                break;
            }
        }
        a = new_a;
        b = new_b;
    }
    Ok(Threshold {
        stable: a,
        unstable: b,
    })
}
