//! One-dimensional fourth-order summation-by-parts operators.
//!
//! Two operator families share one diagonal norm and one interior stencil:
//! the family with a ghost point (closure row 1 reaches one point outside the
//! domain) and the family without. Ghost dependence can be removed from the
//! first family or added to the second by adjusting the boundary derivative
//! stencil with a high-order one-sided difference, which leaves the bilinear
//! form unchanged.
//!
//! Coefficient tables are stored as exact rationals. Every grid function
//! handed to the low-level routines is "padded": index 0 is the left ghost
//! slot, indices 1..=n are the core points, index n+1 is the right ghost slot.
//! Padded arrays may hold several independent lines side by side (row-major,
//! `width` values per grid index), which is how the two-dimensional solver
//! applies the operator along one direction.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_rational::Ratio;

use crate::error::{Result, SbpError};

/// Exact rational used for coefficient storage.
pub type Q = Ratio<i128>;

/// Borrowing constant of the fourth-order operator without ghost points.
pub const BORROW_ALPHA: f64 = 0.2505765857;
/// Number of boundary points entering the minimum of mu in the borrowing split.
pub const BORROW_R: usize = 4;
/// Smallest admissible number of core points (two six-point closures).
pub const MIN_POINTS: usize = 12;
/// Number of closure rows at each boundary.
pub const CLOSURE_ROWS: usize = 6;

const WITH_GHOST_TABLE: &str = include_str!("../data/with_ghost_closure.txt");
const NO_GHOST_TABLE: &str = include_str!("../data/no_ghost_closure.txt");
const INTERIOR_TABLE: &str = include_str!("../data/interior.txt");

fn q(num: i128, den: i128) -> Q {
    Q::new(num, den)
}

fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// The four operator variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Closure row 1 uses the ghost point; fourth-order boundary derivative with ghost.
    WithGhost,
    /// No ghost point; third-order boundary derivative.
    NoGhost,
    /// `WithGhost` with the ghost dependence removed.
    GhostRemoved,
    /// `NoGhost` with a ghost dependence added.
    GhostAdded,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::WithGhost,
        Variant::NoGhost,
        Variant::GhostRemoved,
        Variant::GhostAdded,
    ];

    /// Whether grid functions for this variant carry ghost values.
    pub fn uses_ghost(self) -> bool {
        matches!(self, Variant::WithGhost | Variant::GhostAdded)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::WithGhost => "with-ghost",
            Variant::NoGhost => "no-ghost",
            Variant::GhostRemoved => "ghost-removed",
            Variant::GhostAdded => "ghost-added",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Uniform grid with `n` core points, x_j = origin + (j-1) h.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub h: f64,
    pub origin: f64,
}

impl Grid1D {
    pub fn new(n: usize, h: f64, origin: f64) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(SbpError::GridTooSmall { n, min: MIN_POINTS });
        }
        if !(h > 0.0) {
            return Err(SbpError::Config(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Self { n, h, origin })
    }

    /// Grid covering [a, b] with n points including both end points.
    pub fn spanning(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(SbpError::GridTooSmall { n, min: MIN_POINTS });
        }
        Self::new(n, (b - a) / (n - 1) as f64, a)
    }

    /// Coordinate of padded index j (0 is the left ghost point).
    pub fn x(&self, j: usize) -> f64 {
        self.origin + (j as f64 - 1.0) * self.h
    }

    /// Coordinates of the core points.
    pub fn core_coords(&self) -> Vec<f64> {
        (1..=self.n).map(|j| self.x(j)).collect()
    }
}

/// Core values plus optional ghost values.
#[derive(Clone, Debug, PartialEq)]
pub struct GhostedField1D {
    pub core: Vec<f64>,
    pub left_ghost: Option<f64>,
    pub right_ghost: Option<f64>,
}

impl GhostedField1D {
    pub fn without_ghosts(core: Vec<f64>) -> Self {
        Self {
            core,
            left_ghost: None,
            right_ghost: None,
        }
    }

    pub fn with_ghosts(core: Vec<f64>, left: f64, right: f64) -> Self {
        Self {
            core,
            left_ghost: Some(left),
            right_ghost: Some(right),
        }
    }

    /// Samples `f` at the core points, and at both ghost points when `ghosts` is set.
    pub fn sample(grid: &Grid1D, ghosts: bool, f: impl Fn(f64) -> f64) -> Self {
        let core = grid.core_coords().into_iter().map(&f).collect();
        if ghosts {
            Self::with_ghosts(core, f(grid.x(0)), f(grid.x(grid.n + 1)))
        } else {
            Self::without_ghosts(core)
        }
    }

    /// Padded layout of length n + 2 with missing ghosts stored as zero.
    pub fn to_padded(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.core.len() + 2);
        out.push(self.left_ghost.unwrap_or(0.0));
        out.extend_from_slice(&self.core);
        out.push(self.right_ghost.unwrap_or(0.0));
        out
    }

    pub fn from_padded(padded: &[f64], ghosts: bool) -> Self {
        let n = padded.len() - 2;
        let core = padded[1..=n].to_vec();
        if ghosts {
            Self::with_ghosts(core, padded[0], padded[n + 1])
        } else {
            Self::without_ghosts(core)
        }
    }
}

/// Positive coefficient sampled at the core points.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField1D {
    pub mu: Vec<f64>,
}

impl CoefficientField1D {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some(j) = mu.iter().position(|&m| !(m > 0.0)) {
            return Err(SbpError::Config(format!(
                "coefficient must be positive, mu[{}] = {}",
                j + 1,
                mu[j]
            )));
        }
        Ok(Self { mu })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { mu: vec![value; n] }
    }

    pub fn sample(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.core_coords().into_iter().map(f).collect())
    }

    /// Padded layout (ghost slots copy the nearest core value and are never read).
    pub fn to_padded(&self) -> Vec<f64> {
        let n = self.mu.len();
        let mut out = Vec::with_capacity(n + 2);
        out.push(self.mu[0]);
        out.extend_from_slice(&self.mu);
        out.push(self.mu[n - 1]);
        out
    }
}

/// Diagonal SBP norm; the induced matrix has entries h w_j.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalNorm {
    pub boundary_weights: Vec<Q>,
}

impl DiagonalNorm {
    pub fn fourth_order() -> Self {
        Self {
            boundary_weights: vec![q(17, 48), q(59, 48), q(43, 48), q(49, 48)],
        }
    }

    /// Weight w_j for core index j in 1..=n.
    pub fn weight(&self, j: usize, n: usize) -> f64 {
        let r = self.boundary_weights.len();
        if j <= r {
            to_f64(self.boundary_weights[j - 1])
        } else if j > n - r {
            to_f64(self.boundary_weights[n - j])
        } else {
            1.0
        }
    }

    pub fn weight_exact(&self, j: usize, n: usize) -> Q {
        let r = self.boundary_weights.len();
        if j <= r {
            self.boundary_weights[j - 1]
        } else if j > n - r {
            self.boundary_weights[n - j]
        } else {
            Q::from_integer(1)
        }
    }

    /// Weights w_1..w_n.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|j| self.weight(j, n)).collect()
    }

    /// First weight w_1.
    pub fn w1(&self) -> f64 {
        to_f64(self.boundary_weights[0])
    }
}

/// The four boundary derivative stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DerivativeKind {
    /// Fourth order, uses the ghost point.
    FourthWithGhost,
    /// Third order, no ghost point.
    ThirdNoGhost,
    /// Fourth order, ghost dependence removed.
    FourthNoGhost,
    /// Third order, ghost dependence added.
    ThirdWithGhost,
}

impl DerivativeKind {
    pub fn exactness_degree(self) -> usize {
        match self {
            DerivativeKind::FourthWithGhost | DerivativeKind::FourthNoGhost => 4,
            DerivativeKind::ThirdNoGhost | DerivativeKind::ThirdWithGhost => 3,
        }
    }

    pub fn uses_ghost(self) -> bool {
        matches!(
            self,
            DerivativeKind::FourthWithGhost | DerivativeKind::ThirdWithGhost
        )
    }
}

/// Boundary derivative stencil; weights are multiplied by 1/h when applied.
///
/// Weights are stored for the left boundary with index 0 the ghost point. The
/// right boundary stencil is the mirror image with negated weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDerivativeStencil {
    pub kind: DerivativeKind,
    pub weights: Vec<(usize, Q)>,
    pub side: Side,
}

impl BoundaryDerivativeStencil {
    fn new(kind: DerivativeKind, weights: Vec<(usize, Q)>) -> Self {
        Self {
            kind,
            weights,
            side: Side::Left,
        }
    }

    /// (-3, -10, 18, -6, 1)/12 on indices 0..4.
    pub fn fourth_with_ghost() -> Self {
        let w = [-3, -10, 18, -6, 1];
        Self::new(
            DerivativeKind::FourthWithGhost,
            w.iter().enumerate().map(|(i, &c)| (i, q(c, 12))).collect(),
        )
    }

    /// (-11, 18, -9, 2)/6 on indices 1..4.
    pub fn third_no_ghost() -> Self {
        let w = [-11, 18, -9, 2];
        Self::new(
            DerivativeKind::ThirdNoGhost,
            w.iter().enumerate().map(|(i, &c)| (i + 1, q(c, 6))).collect(),
        )
    }

    /// The same stencil on the other side of the domain.
    pub fn on_side(&self, side: Side) -> Self {
        Self {
            side,
            ..self.clone()
        }
    }

    /// Weight at left-side index `i` (zero if absent).
    pub fn weight(&self, i: usize) -> Q {
        self.weights
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, w)| *w)
            .unwrap_or_else(|| Q::from_integer(0))
    }

    /// Weights with exact zeros removed, sorted by index.
    fn normalized(mut weights: Vec<(usize, Q)>) -> Vec<(usize, Q)> {
        weights.retain(|(_, w)| *w != Q::from_integer(0));
        weights.sort_by_key(|(i, _)| *i);
        weights
    }

    /// Applies the stencil to a padded grid function of n core points.
    pub fn apply_padded(&self, v: &[f64], n: usize, h: f64) -> f64 {
        self.apply_at(n, h, |j| v[j])
    }

    /// Applies the stencil with values fetched through `v_at(padded index)`.
    pub fn apply_at(&self, n: usize, h: f64, v_at: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for &(i, w) in &self.weights {
            match self.side {
                Side::Left => s += to_f64(w) * v_at(i),
                Side::Right => s -= to_f64(w) * v_at(n + 1 - i),
            }
        }
        s / h
    }

    /// Dense row of length n + 2 (padded layout) including the 1/h factor.
    pub fn dense_row(&self, n: usize, h: f64) -> Vec<f64> {
        let mut row = vec![0.0; n + 2];
        for &(i, w) in &self.weights {
            match self.side {
                Side::Left => row[i] += to_f64(w) / h,
                Side::Right => row[n + 1 - i] -= to_f64(w) / h,
            }
        }
        row
    }
}

/// Applies a boundary derivative stencil to a ghosted field.
pub fn apply_boundary_derivative(
    stencil: &BoundaryDerivativeStencil,
    v: &GhostedField1D,
    h: f64,
) -> Result<f64> {
    if stencil.kind.uses_ghost() {
        let ghost = match stencil.side {
            Side::Left => v.left_ghost,
            Side::Right => v.right_ghost,
        };
        if ghost.is_none() {
            return Err(SbpError::MissingGhost {
                variant: "boundary derivative",
                side: stencil.side.name(),
            });
        }
    }
    let n = v.core.len();
    Ok(stencil.apply_padded(&v.to_padded(), n, h))
}

/// One-sided high difference operators used by the ghost transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct HighDifferenceStencil {
    pub order: usize,
    /// Coefficients on indices 0..=order, to be multiplied by h^-order.
    pub coefficients: Vec<Q>,
}

impl HighDifferenceStencil {
    /// Forward difference of the given order: binomial coefficients with alternating signs.
    pub fn forward(order: usize) -> Self {
        let mut c = vec![Q::from_integer(0); order + 1];
        let mut binom: i128 = 1;
        for k in 0..=order {
            let sign = if (order - k) % 2 == 0 { 1 } else { -1 };
            c[k] = Q::from_integer(sign * binom);
            binom = binom * (order - k) as i128 / (k + 1) as i128;
        }
        Self {
            order,
            coefficients: c,
        }
    }

    pub fn d4() -> Self {
        Self::forward(4)
    }

    pub fn d5() -> Self {
        Self::forward(5)
    }
}

/// Borrowing constants of the no-ghost operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BorrowingConstants {
    pub alpha: f64,
    pub r: usize,
}

/// One entry of a closure row: (G v)_row += value mu_coef v_col / h^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureTerm {
    pub row: usize,
    pub col: usize,
    pub coef: usize,
    pub value: Q,
}

/// One entry of the interior rule: (G v)_i += value mu_{i+coef} v_{i+col} / h^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteriorTerm {
    pub col: isize,
    pub coef: isize,
    pub value: Q,
}

/// A complete second-derivative operator bundle.
#[derive(Clone, Debug)]
pub struct SbpOperatorSet {
    pub variant: Variant,
    pub interior: Vec<InteriorTerm>,
    pub closure: Vec<ClosureTerm>,
    pub boundary_derivative: BoundaryDerivativeStencil,
    pub norm: DiagonalNorm,
    pub borrowing: Option<BorrowingConstants>,
    closure_f: Vec<(usize, usize, usize, f64)>,
    interior_f: Vec<(isize, isize, f64)>,
}

fn parse_table(text: &str, fields: usize) -> Result<Vec<Vec<i128>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != fields {
            return Err(SbpError::Parse {
                line: lineno + 1,
                msg: format!("expected {fields} fields, found {}", parts.len()),
            });
        }
        let mut vals = Vec::with_capacity(fields);
        for p in parts {
            vals.push(p.parse::<i128>().map_err(|e| SbpError::Parse {
                line: lineno + 1,
                msg: format!("{p:?}: {e}"),
            })?);
        }
        if vals[fields - 1] == 0 {
            return Err(SbpError::Parse {
                line: lineno + 1,
                msg: "zero denominator".into(),
            });
        }
        rows.push(vals);
    }
    Ok(rows)
}

/// Parses a closure table: `row col coef num den` per line, `#` comments.
pub fn parse_closure_table(text: &str) -> Result<Vec<ClosureTerm>> {
    let rows = parse_table(text, 5)?;
    let mut terms = Vec::with_capacity(rows.len());
    for r in rows {
        if r[0] < 1 || r[0] > CLOSURE_ROWS as i128 || r[1] < 0 || r[2] < 1 {
            return Err(SbpError::Parse {
                line: 0,
                msg: format!("index out of range in entry {r:?}"),
            });
        }
        terms.push(ClosureTerm {
            row: r[0] as usize,
            col: r[1] as usize,
            coef: r[2] as usize,
            value: q(r[3], r[4]),
        });
    }
    Ok(terms)
}

/// Parses the interior rule: `col_offset coef_offset num den` per line.
pub fn parse_interior_table(text: &str) -> Result<Vec<InteriorTerm>> {
    Ok(parse_table(text, 4)?
        .into_iter()
        .map(|r| InteriorTerm {
            col: r[0] as isize,
            coef: r[1] as isize,
            value: q(r[2], r[3]),
        })
        .collect())
}

/// Interior rule shared by both operator families.
pub fn interior_rule() -> Vec<InteriorTerm> {
    parse_interior_table(INTERIOR_TABLE).expect("bundled interior table is well formed")
}

impl SbpOperatorSet {
    /// Assembles an operator set from its parts.
    pub fn from_parts(
        variant: Variant,
        interior: Vec<InteriorTerm>,
        closure: Vec<ClosureTerm>,
        boundary_derivative: BoundaryDerivativeStencil,
        borrowing: Option<BorrowingConstants>,
    ) -> Self {
        let mut merged: BTreeMap<(usize, usize, usize), Q> = BTreeMap::new();
        for t in &closure {
            *merged
                .entry((t.row, t.col, t.coef))
                .or_insert_with(|| Q::from_integer(0)) += t.value;
        }
        let closure: Vec<ClosureTerm> = merged
            .into_iter()
            .filter(|(_, v)| *v != Q::from_integer(0))
            .map(|((row, col, coef), value)| ClosureTerm {
                row,
                col,
                coef,
                value,
            })
            .collect();
        let closure_f = closure
            .iter()
            .map(|t| (t.row, t.col, t.coef, to_f64(t.value)))
            .collect();
        let interior_f = interior
            .iter()
            .map(|t| (t.col, t.coef, to_f64(t.value)))
            .collect();
        Self {
            variant,
            interior,
            closure,
            boundary_derivative,
            norm: DiagonalNorm::fourth_order(),
            borrowing,
            closure_f,
            interior_f,
        }
    }

    /// Operator with a ghost point (bundled table).
    pub fn with_ghost() -> Self {
        let closure = parse_closure_table(WITH_GHOST_TABLE).expect("bundled table is well formed");
        Self::from_parts(
            Variant::WithGhost,
            interior_rule(),
            closure,
            BoundaryDerivativeStencil::fourth_with_ghost(),
            None,
        )
    }

    /// Operator without ghost points (bundled table).
    pub fn no_ghost() -> Self {
        let closure = parse_closure_table(NO_GHOST_TABLE).expect("bundled table is well formed");
        Self::from_parts(
            Variant::NoGhost,
            interior_rule(),
            closure,
            BoundaryDerivativeStencil::third_no_ghost(),
            Some(BorrowingConstants {
                alpha: BORROW_ALPHA,
                r: BORROW_R,
            }),
        )
    }

    /// Builds any of the four variants from the bundled tables.
    pub fn of_variant(variant: Variant) -> Self {
        match variant {
            Variant::WithGhost => Self::with_ghost(),
            Variant::NoGhost => Self::no_ghost(),
            Variant::GhostRemoved => Self::with_ghost()
                .remove_ghost()
                .expect("transform of bundled table"),
            Variant::GhostAdded => Self::no_ghost()
                .add_ghost()
                .expect("transform of bundled table"),
        }
    }

    /// Adds `-(c / w_1) mu_1 h^(k-2) d_k` to closure row 1 and `c h^(k-1) d_k` to the
    /// boundary derivative, where k is the order of `diff`. This keeps
    /// `h w_1 G_1 v + mu_1 b^T v` unchanged, so the bilinear form is preserved.
    fn shifted(&self, diff: &HighDifferenceStencil, c: Q, variant: Variant, kind: DerivativeKind) -> Self {
        let w1 = self.norm.boundary_weights[0];
        let mut closure = self.closure.clone();
        for (i, &d) in diff.coefficients.iter().enumerate() {
            closure.push(ClosureTerm {
                row: 1,
                col: i,
                coef: 1,
                value: -c * d / w1,
            });
        }
        let mut weights = self.boundary_derivative.weights.clone();
        for (i, &d) in diff.coefficients.iter().enumerate() {
            weights.push((i, c * d));
        }
        let mut acc: BTreeMap<usize, Q> = BTreeMap::new();
        for (i, w) in weights {
            *acc.entry(i).or_insert_with(|| Q::from_integer(0)) += w;
        }
        let deriv = BoundaryDerivativeStencil::new(
            kind,
            BoundaryDerivativeStencil::normalized(acc.into_iter().collect()),
        );
        Self::from_parts(variant, self.interior.clone(), closure, deriv, self.borrowing)
    }

    /// Removes the ghost dependence from the `WithGhost` operator.
    ///
    /// The boundary derivative becomes b + beta h^4 d5 with beta chosen so that
    /// the ghost weight vanishes; closure row 1 is compensated accordingly.
    pub fn remove_ghost(&self) -> Result<Self> {
        if self.variant != Variant::WithGhost {
            return Err(SbpError::WrongVariant {
                expected: Variant::WithGhost.name(),
                got: self.variant.name(),
            });
        }
        let d5 = HighDifferenceStencil::d5();
        let beta = -self.boundary_derivative.weight(0) / d5.coefficients[0];
        let out = self.shifted(&d5, beta, Variant::GhostRemoved, DerivativeKind::FourthNoGhost);
        if out.boundary_derivative.weight(0) != Q::from_integer(0)
            || out.closure.iter().any(|t| t.col == 0)
        {
            return Err(SbpError::Inconsistent(
                "ghost dependence did not cancel in closure row 1".into(),
            ));
        }
        Ok(out)
    }

    /// Adds a ghost dependence to the `NoGhost` operator.
    ///
    /// The boundary derivative becomes b + gamma h^3 d4 with gamma chosen so that
    /// the weight on v_4 vanishes; closure row 1 gains (16/17) h^2 mu_1 d4.
    pub fn add_ghost(&self) -> Result<Self> {
        if self.variant != Variant::NoGhost {
            return Err(SbpError::WrongVariant {
                expected: Variant::NoGhost.name(),
                got: self.variant.name(),
            });
        }
        let d4 = HighDifferenceStencil::d4();
        let gamma = -self.boundary_derivative.weight(4) / d4.coefficients[4];
        Ok(self.shifted(&d4, gamma, Variant::GhostAdded, DerivativeKind::ThirdWithGhost))
    }

    /// Boundary derivative stencil for the given side.
    pub fn derivative(&self, side: Side) -> BoundaryDerivativeStencil {
        self.boundary_derivative.on_side(side)
    }

    /// Terms (col, coef, value) of row `row` (1..=n) in padded indices.
    pub fn row_terms(&self, n: usize, row: usize) -> Vec<(usize, usize, Q)> {
        if row <= CLOSURE_ROWS {
            self.closure
                .iter()
                .filter(|t| t.row == row)
                .map(|t| (t.col, t.coef, t.value))
                .collect()
        } else if row > n - CLOSURE_ROWS {
            let r = n + 1 - row;
            self.closure
                .iter()
                .filter(|t| t.row == r)
                .map(|t| (n + 1 - t.col, n + 1 - t.coef, t.value))
                .collect()
        } else {
            self.interior
                .iter()
                .map(|t| {
                    (
                        (row as isize + t.col) as usize,
                        (row as isize + t.coef) as usize,
                        t.value,
                    )
                })
                .collect()
        }
    }

    fn check_n(n: usize) -> Result<()> {
        if n < MIN_POINTS {
            Err(SbpError::GridTooSmall { n, min: MIN_POINTS })
        } else {
            Ok(())
        }
    }

    /// Applies the operator to `width` interleaved lines.
    ///
    /// `mu`, `v` and `out` are padded arrays of (n + 2) * width values; rows
    /// 1..=n of `out` are overwritten, ghost rows are left untouched.
    pub fn apply_lines(&self, n: usize, h: f64, width: usize, mu: &[f64], v: &[f64], out: &mut [f64]) {
        let len = (n + 2) * width;
        assert!(mu.len() >= len && v.len() >= len && out.len() >= len);
        assert!(n >= MIN_POINTS);
        let s = 1.0 / (h * h);
        out[width..(n + 1) * width].fill(0.0);
        // Left and right closures.
        for &(row, col, coef, val) in &self.closure_f {
            let c = val * s;
            for (o_row, v_row, m_row) in [(row, col, coef), (n + 1 - row, n + 1 - col, n + 1 - coef)] {
                let (o0, v0, m0) = (o_row * width, v_row * width, m_row * width);
                for i in 0..width {
                    out[o0 + i] += c * mu[m0 + i] * v[v0 + i];
                }
            }
        }
        // Interior rows.
        for j in CLOSURE_ROWS + 1..=n - CLOSURE_ROWS {
            let o0 = j * width;
            for &(dc, dm, val) in &self.interior_f {
                let c = val * s;
                let v0 = (j as isize + dc) as usize * width;
                let m0 = (j as isize + dm) as usize * width;
                for i in 0..width {
                    out[o0 + i] += c * mu[m0 + i] * v[v0 + i];
                }
            }
        }
    }

    /// Applies the operator to a ghosted field.
    pub fn apply_second_derivative(
        &self,
        grid: &Grid1D,
        mu: &CoefficientField1D,
        v: &GhostedField1D,
    ) -> Result<Vec<f64>> {
        let n = grid.n;
        Self::check_n(n)?;
        if mu.mu.len() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: mu.mu.len(),
            });
        }
        if v.core.len() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: v.core.len(),
            });
        }
        if self.variant.uses_ghost() {
            if v.left_ghost.is_none() {
                return Err(SbpError::MissingGhost {
                    variant: self.variant.name(),
                    side: "left",
                });
            }
            if v.right_ghost.is_none() {
                return Err(SbpError::MissingGhost {
                    variant: self.variant.name(),
                    side: "right",
                });
            }
        }
        let mut out = vec![0.0; n + 2];
        self.apply_lines(n, grid.h, 1, &mu.to_padded(), &v.to_padded(), &mut out);
        Ok(out[1..=n].to_vec())
    }

    /// Value of the boundary row (row 1 on the left, row n on the right) of one line,
    /// with mu and v fetched by padded index.
    pub fn boundary_row_at(
        &self,
        side: Side,
        n: usize,
        h: f64,
        mu_at: impl Fn(usize) -> f64,
        v_at: impl Fn(usize) -> f64,
    ) -> f64 {
        let mut s = 0.0;
        for &(row, col, coef, val) in &self.closure_f {
            if row != 1 {
                continue;
            }
            match side {
                Side::Left => s += val * mu_at(coef) * v_at(col),
                Side::Right => s += val * mu_at(n + 1 - coef) * v_at(n + 1 - col),
            }
        }
        s / (h * h)
    }

    /// Coefficient multiplying the ghost value in the boundary row.
    pub fn ghost_coefficient(&self, side: Side, n: usize, h: f64, mu_at: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for &(row, col, coef, val) in &self.closure_f {
            if row == 1 && col == 0 {
                match side {
                    Side::Left => s += val * mu_at(coef),
                    Side::Right => s += val * mu_at(n + 1 - coef),
                }
            }
        }
        s / (h * h)
    }

    /// Exact rational coefficient of mu_m in entry (i, j) of -(W G + boundary terms) scaled by h.
    ///
    /// Returned as a map (i, j, m) -> coefficient over padded indices.
    fn form_coefficients(&self, n: usize) -> BTreeMap<(usize, usize, usize), Q> {
        let mut acc: BTreeMap<(usize, usize, usize), Q> = BTreeMap::new();
        let zero = Q::from_integer(0);
        for i in 1..=n {
            let w = self.norm.weight_exact(i, n);
            for (col, coef, val) in self.row_terms(n, i) {
                *acc.entry((i, col, coef)).or_insert(zero) -= w * val;
            }
        }
        let bl = self.derivative(Side::Left);
        for &(j, wgt) in &bl.weights {
            *acc.entry((1, j, 1)).or_insert(zero) -= wgt;
        }
        for &(j, wgt) in &bl.weights {
            // Right stencil is the negated mirror, entering with a plus sign.
            *acc.entry((n, n + 1 - j, n)).or_insert(zero) -= wgt;
        }
        acc
    }

    /// Assembles the bilinear form matrix M (n x n over core points) with
    /// S(u, v) = u^T M v, from (u, G v)_h = -S(u, v) - u_1 mu_1 b_1^T v + u_n mu_n b_n^T v.
    ///
    /// Fails if the ghost columns of the assembled form are not exactly zero.
    pub fn sbp_bilinear_form(&self, grid: &Grid1D, mu: &CoefficientField1D) -> Result<DMatrix<f64>> {
        let (m, ghost) = self.assemble_form(grid, mu)?;
        if ghost.iter().any(|&g| g != 0.0) {
            return Err(SbpError::Inconsistent(format!(
                "bilinear form has nonzero ghost columns (max |entry| = {:e})",
                ghost.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
            )));
        }
        Ok(m)
    }

    /// Returns the core block of M and the entries of its two ghost columns.
    pub fn assemble_form(&self, grid: &Grid1D, mu: &CoefficientField1D) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let n = grid.n;
        Self::check_n(n)?;
        if mu.mu.len() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: mu.mu.len(),
            });
        }
        let mup = mu.to_padded();
        let coeffs = self.form_coefficients(n);
        // Collect exact coefficients per (i, j) grouped by mu index before rounding.
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut ghost_exact: BTreeMap<(usize, usize, usize), Q> = BTreeMap::new();
        for (&(i, j, c), &val) in &coeffs {
            if val == Q::from_integer(0) {
                continue;
            }
            if j == 0 || j == n + 1 {
                ghost_exact.insert((i, j, c), val);
                continue;
            }
            m[(i - 1, j - 1)] += to_f64(val) * mup[c] / grid.h;
        }
        let ghost = ghost_exact
            .iter()
            .map(|(&(_, _, c), &val)| to_f64(val) * mup[c] / grid.h)
            .collect();
        Ok((m, ghost))
    }

    /// |LHS - RHS| / (1 + |LHS|) for (u, G v)_h = -S(u, v) - u_1 mu_1 b_1^T v + u_n mu_n b_n^T v,
    /// with S taken as the symmetric part of the assembled form (ghost columns excluded).
    pub fn sbp_identity_residual(
        &self,
        grid: &Grid1D,
        mu: &CoefficientField1D,
        u: &[f64],
        v: &GhostedField1D,
    ) -> Result<f64> {
        let n = grid.n;
        if u.len() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let gv = self.apply_second_derivative(grid, mu, v)?;
        let w = self.norm.weights(n);
        let lhs: f64 = (0..n).map(|j| grid.h * w[j] * u[j] * gv[j]).sum();
        let (m, _) = self.assemble_form(grid, mu)?;
        let sym = (&m + m.transpose()) * 0.5;
        let uu = nalgebra::DVector::from_column_slice(u);
        let vv = nalgebra::DVector::from_column_slice(&v.core);
        let s = uu.dot(&(&sym * &vv));
        let vp = v.to_padded();
        let bl = self.derivative(Side::Left).apply_padded(&vp, n, grid.h);
        let br = self.derivative(Side::Right).apply_padded(&vp, n, grid.h);
        let rhs = -s - u[0] * mu.mu[0] * bl + u[n - 1] * mu.mu[n - 1] * br;
        Ok((lhs - rhs).abs() / (1.0 + lhs.abs()))
    }

    /// Splits the bilinear form as M = M_rem + h alpha mu_min (b b^T) at both boundaries.
    ///
    /// Returns (M_rem, alpha, mu_min at the left boundary). `alpha` defaults to
    /// the operator's borrowing constant.
    pub fn borrowing_split(
        &self,
        grid: &Grid1D,
        mu: &CoefficientField1D,
        alpha: Option<f64>,
    ) -> Result<(DMatrix<f64>, f64, f64)> {
        if self.variant != Variant::NoGhost {
            return Err(SbpError::WrongVariant {
                expected: Variant::NoGhost.name(),
                got: self.variant.name(),
            });
        }
        let consts = self.borrowing.expect("no-ghost operator carries borrowing constants");
        let alpha = alpha.unwrap_or(consts.alpha);
        let n = grid.n;
        let mut m = self.sbp_bilinear_form(grid, mu)?;
        let r = consts.r;
        let mu_min_l = mu.mu[..r].iter().cloned().fold(f64::INFINITY, f64::min);
        let mu_min_r = mu.mu[n - r..].iter().cloned().fold(f64::INFINITY, f64::min);
        for (side, mmin) in [(Side::Left, mu_min_l), (Side::Right, mu_min_r)] {
            let b = self.derivative(side).dense_row(n, grid.h);
            for i in 1..=n {
                for j in 1..=n {
                    m[(i - 1, j - 1)] -= grid.h * alpha * mmin * b[i] * b[j];
                }
            }
        }
        Ok((m, alpha, mu_min_l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n, 1.0 / (n - 1) as f64, 0.0).unwrap()
    }

    #[test]
    fn interior_rule_reduces_to_standard_stencil_for_constant_mu() {
        let rule = interior_rule();
        let mut sums = [Q::from_integer(0); 5];
        for t in rule {
            sums[(t.col + 2) as usize] += t.value;
        }
        assert_eq!(sums[0], q(-1, 12));
        assert_eq!(sums[1], q(4, 3));
        assert_eq!(sums[2], q(-5, 2));
        assert_eq!(sums[3], q(4, 3));
        assert_eq!(sums[4], q(-1, 12));
    }

    #[test]
    fn ghost_coefficient_is_twelve_seventeenths() {
        let op = SbpOperatorSet::with_ghost();
        let ghost: Vec<_> = op.closure.iter().filter(|t| t.col == 0).collect();
        assert_eq!(ghost.len(), 1);
        assert_eq!((ghost[0].row, ghost[0].coef), (1, 1));
        assert_eq!(ghost[0].value, q(12, 17));
        assert!(SbpOperatorSet::no_ghost().closure.iter().all(|t| t.col != 0));
    }

    #[test]
    fn high_difference_stencils() {
        let d5: Vec<i128> = HighDifferenceStencil::d5().coefficients.iter().map(|c| c.to_integer()).collect();
        assert_eq!(d5, vec![-1, 5, -10, 10, -5, 1]);
        let d4: Vec<i128> = HighDifferenceStencil::d4().coefficients.iter().map(|c| c.to_integer()).collect();
        assert_eq!(d4, vec![1, -4, 6, -4, 1]);
    }

    #[test]
    fn remove_ghost_reproduces_stencil() {
        let op = SbpOperatorSet::with_ghost().remove_ghost().unwrap();
        let expect: Vec<(usize, Q)> = [-25, 48, -36, 16, -3]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + 1, q(c, 12)))
            .collect();
        assert_eq!(op.boundary_derivative.weights, expect);
        assert!(op.closure.iter().all(|t| t.col != 0));
        let base = SbpOperatorSet::with_ghost();
        for j in 1..=5 {
            let old: Q = base.closure.iter().filter(|t| t.row == 1 && t.col == j && t.coef == 1).map(|t| t.value).sum();
            let new: Q = op.closure.iter().filter(|t| t.row == 1 && t.col == j && t.coef == 1).map(|t| t.value).sum();
            let d = [5, -10, 10, -5, 1][j - 1];
            assert_eq!(new - old, q(12 * d, 17));
        }
    }

    #[test]
    fn add_ghost_reproduces_stencil() {
        let op = SbpOperatorSet::no_ghost().add_ghost().unwrap();
        let expect: Vec<(usize, Q)> = [-2, -3, 6, -1]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, q(c, 6)))
            .collect();
        assert_eq!(op.boundary_derivative.weights, expect);
        assert_eq!(op.boundary_derivative.weight(4), Q::from_integer(0));
    }

    #[test]
    fn wrong_variant_is_rejected() {
        assert!(SbpOperatorSet::no_ghost().remove_ghost().is_err());
        assert!(SbpOperatorSet::with_ghost().add_ghost().is_err());
        let g = grid(20);
        let mu = CoefficientField1D::constant(20, 1.0);
        assert!(SbpOperatorSet::with_ghost().borrowing_split(&g, &mu, None).is_err());
    }

    #[test]
    fn missing_ghost_is_an_error() {
        let g = grid(16);
        let mu = CoefficientField1D::constant(16, 1.0);
        let v = GhostedField1D::without_ghosts(vec![0.0; 16]);
        assert!(matches!(
            SbpOperatorSet::with_ghost().apply_second_derivative(&g, &mu, &v),
            Err(SbpError::MissingGhost { .. })
        ));
        assert!(SbpOperatorSet::no_ghost().apply_second_derivative(&g, &mu, &v).is_ok());
    }

    #[test]
    fn small_grid_is_rejected() {
        assert!(Grid1D::new(11, 0.1, 0.0).is_err());
    }

    #[test]
    fn neumann_ghost_example() {
        // u_1..u_4 = 0, f = 1, h = 0.1 gives u_0 = -0.4 for b~_1^T u = f.
        let b = BoundaryDerivativeStencil::fourth_with_ghost();
        let h = 0.1;
        let mut v = vec![0.0; 14];
        v[0] = -0.4;
        assert!((b.apply_padded(&v, 12, h) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_derivative_on_linear_function() {
        let g = Grid1D::new(12, 0.1, 0.0).unwrap();
        let v = GhostedField1D::sample(&g, true, |x| x);
        let b = BoundaryDerivativeStencil::fourth_with_ghost();
        assert!((apply_boundary_derivative(&b, &v, g.h).unwrap() - 1.0).abs() < 1e-14);
        let v7 = GhostedField1D::sample(&g, true, |_| 7.0);
        assert!(apply_boundary_derivative(&b, &v7, g.h).unwrap().abs() < 1e-12);
        let no = GhostedField1D::sample(&g, false, |x| x);
        assert!(apply_boundary_derivative(&b, &no, g.h).is_err());
    }

    #[test]
    fn form_is_symmetric_with_zero_ghost_columns() {
        for v in Variant::ALL {
            let op = SbpOperatorSet::of_variant(v);
            let g = grid(20);
            let mu = CoefficientField1D::sample(&g, |x| 2.0 + x.sin()).unwrap();
            let (m, ghost) = op.assemble_form(&g, &mu).unwrap();
            assert!(ghost.iter().all(|&x| x == 0.0), "{v}: ghost column {ghost:?}");
            let asym = (&m - m.transpose()).amax();
            assert!(asym <= 1e-12 * m.amax(), "{v}: asymmetry {asym}");
        }
    }

    #[test]
    fn borrowing_constant_is_sharp() {
        let op = SbpOperatorSet::no_ghost();
        let g = grid(20);
        let mu = CoefficientField1D::constant(20, 1.0);
        let (m, _, mu_min) = op.borrowing_split(&g, &mu, None).unwrap();
        assert_eq!(mu_min, 1.0);
        let eig = m.clone().symmetric_eigenvalues().min();
        assert!(eig >= -1e-12 * m.amax(), "min eigenvalue {eig}");
        let (m2, _, _) = op.borrowing_split(&g, &mu, Some(0.28)).unwrap();
        assert!(m2.symmetric_eigenvalues().min() < 0.0);
    }
}
