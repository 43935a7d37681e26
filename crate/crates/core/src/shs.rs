//! Symmetric hyperbolic systems S = A0 d_t + A1 d_x + B on R x S^1.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::Var;
use crate::geom::{ChiProfile, Metric1p1, RhoWeight, ScalarField};
use crate::grid::{DerivMode, FiberKind, Grid, GridError, GridField, Rk4Scratch, SliceData, XDeriv, C64, ZERO};

pub type CMat = DMatrix<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{what} is singular at (t={t}, x={x})")]
    Singular { what: &'static str, t: f64, x: f64 },
    #[error("fiber dimension mismatch: {0}")]
    Dimension(String),
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Matrix-valued field (t, x) -> N x N complex matrix.
#[derive(Clone)]
pub struct MatField {
    pub n: usize,
    f: Arc<dyn Fn(f64, f64) -> CMat + Send + Sync>,
    pub t_dep: bool,
    pub x_dep: bool,
}

impl fmt::Debug for MatField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatField")
            .field("n", &self.n)
            .field("t_dep", &self.t_dep)
            .field("x_dep", &self.x_dep)
            .finish()
    }
}

const FD6: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -0.75, 0.0, 0.75, -3.0 / 20.0, 1.0 / 60.0];
const FD6_STEP: f64 = 2e-3;

impl MatField {
    pub fn new(n: usize, t_dep: bool, x_dep: bool, f: impl Fn(f64, f64) -> CMat + Send + Sync + 'static) -> Self {
        MatField {
            n,
            f: Arc::new(f),
            t_dep,
            x_dep,
        }
    }

    pub fn constant(m: CMat) -> Self {
        MatField::new(m.nrows(), false, false, move |_, _| m.clone())
    }

    pub fn zeros(n: usize) -> Self {
        MatField::constant(CMat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        MatField::constant(CMat::identity(n, n))
    }

    pub fn is_constant(&self) -> bool {
        !self.t_dep && !self.x_dep
    }

    #[inline]
    pub fn at(&self, t: f64, x: f64) -> CMat {
        (self.f)(t, x)
    }

    /// Matrix with scalar-field entries; unlisted entries are zero.
    pub fn from_entries(n: usize, entries: Vec<(usize, usize, ScalarField)>) -> Self {
        let t_dep = entries.iter().any(|e| e.2.t_dep);
        let x_dep = entries.iter().any(|e| e.2.x_dep);
        MatField::new(n, t_dep, x_dep, move |t, x| {
            let mut m = CMat::zeros(n, n);
            for (r, col, s) in &entries {
                m[(*r, *col)] = c(s.at(t, x));
            }
            m
        })
    }

    /// Constant matrix times a scalar field.
    pub fn scaled_const(m: CMat, s: ScalarField) -> Self {
        MatField::new(m.nrows(), s.t_dep, s.x_dep, move |t, x| &m * c(s.at(t, x)))
    }

    pub fn scale(&self, s: &ScalarField) -> Self {
        let (a, s) = (self.clone(), s.clone());
        MatField::new(self.n, self.t_dep || s.t_dep, self.x_dep || s.x_dep, move |t, x| {
            a.at(t, x) * c(s.at(t, x))
        })
    }

    pub fn map(&self, f: impl Fn(CMat) -> CMat + Send + Sync + 'static) -> Self {
        let a = self.clone();
        MatField::new(self.n, self.t_dep, self.x_dep, move |t, x| f(a.at(t, x)))
    }

    pub fn zip(&self, other: &MatField, f: impl Fn(CMat, CMat) -> CMat + Send + Sync + 'static) -> Self {
        let (a, b) = (self.clone(), other.clone());
        MatField::new(self.n, self.t_dep || other.t_dep, self.x_dep || other.x_dep, move |t, x| {
            f(a.at(t, x), b.at(t, x))
        })
    }

    pub fn add(&self, other: &MatField) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &MatField) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &MatField) -> Self {
        self.zip(other, |a, b| a * b)
    }

    /// (1 - chi(t)) self + chi(t) other.
    pub fn blend(&self, other: &MatField, chi: &ChiProfile) -> Self {
        let (a, b, chi) = (self.clone(), other.clone(), *chi);
        MatField::new(self.n, true, self.x_dep || other.x_dep, move |t, x| {
            let w = chi.eval(t);
            a.at(t, x) * c(1.0 - w) + b.at(t, x) * c(w)
        })
    }

    /// Partial derivative by a sixth-order central difference of the closure.
    pub fn partial(&self, v: Var) -> Self {
        let dep = match v {
            Var::T => self.t_dep,
            Var::X => self.x_dep,
        };
        if !dep {
            return MatField::zeros(self.n);
        }
        let a = self.clone();
        MatField::new(self.n, self.t_dep, self.x_dep, move |t, x| {
            let mut out = CMat::zeros(a.n, a.n);
            for (j, w) in FD6.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let s = (j as f64 - 3.0) * FD6_STEP;
                let m = match v {
                    Var::T => a.at(t + s, x),
                    Var::X => a.at(t, x + s),
                };
                out += m * c(*w / FD6_STEP);
            }
            out
        })
    }

    pub fn adjoint(&self) -> Self {
        self.map(|m| m.adjoint())
    }

    /// Pointwise inverse; singular nodes yield NaN entries.
    pub fn inverse(&self) -> Self {
        let n = self.n;
        self.map(move |m| m.try_inverse().unwrap_or_else(|| CMat::from_element(n, n, c(f64::NAN))))
    }

    /// Errors at the first grid node where the field is not invertible.
    pub fn check_invertible(&self, grid: &Grid, what: &'static str) -> Result<(), ShsError> {
        for_each_node(grid, self.t_dep, self.x_dep, |t, x| {
            let m = self.at(t, x);
            let ok = m.clone().try_inverse().map(|inv| inv.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
            if ok != Some(true) || m.determinant().norm() < 1e-13 {
                return Err(ShsError::Singular { what, t, x });
            }
            Ok(())
        })
    }

    /// Pointwise action on a history.
    pub fn apply(&self, psi: &GridField) -> GridField {
        assert_eq!(self.n, psi.nc, "MatField::apply: fiber dimension mismatch");
        let g = psi.grid;
        let nx = g.nx;
        let mut out = GridField::zeros(g, psi.nc, FiberKind::Complex);
        let mut cached: Option<CMat> = None;
        for lev in 0..=g.nt {
            let t = g.t(lev);
            for i in 0..nx {
                let m = if self.is_constant() {
                    cached.get_or_insert_with(|| self.at(t, 0.0)).clone()
                } else {
                    self.at(t, g.x(i))
                };
                for r in 0..self.n {
                    let mut acc = ZERO;
                    for col in 0..self.n {
                        acc += m[(r, col)] * psi.get(lev, i, col);
                    }
                    out.set(lev, i, r, acc);
                }
            }
        }
        out.kind = if psi.kind == FiberKind::Real && out.max_imag() == 0.0 {
            FiberKind::Real
        } else {
            FiberKind::Complex
        };
        out
    }
}

fn for_each_node<E>(grid: &Grid, t_dep: bool, x_dep: bool, mut f: impl FnMut(f64, f64) -> Result<(), E>) -> Result<(), E> {
    let nts = if t_dep { grid.nt + 1 } else { 1 };
    let nxs = if x_dep { grid.nx } else { 1 };
    for n in 0..nts {
        for i in 0..nxs {
            f(grid.t(n), grid.x(i))?;
        }
    }
    Ok(())
}

/// Coefficients of S = A0 d_t + A1 d_x + B with fiber metric H. The metric
/// fixes the causal cone used for condition (H) and the volume form used
/// for the formal adjoint.
#[derive(Clone, Debug)]
pub struct SHSystem {
    pub label: String,
    pub n: usize,
    pub a0: MatField,
    pub a1: MatField,
    pub b: MatField,
    pub h: MatField,
    pub metric: Metric1p1,
    pub fiber_kind: FiberKind,
}

impl SHSystem {
    pub fn is_translation_invariant(&self) -> bool {
        !(self.a0.x_dep || self.a1.x_dep || self.b.x_dep)
    }

    pub fn is_time_independent(&self) -> bool {
        !(self.a0.t_dep || self.a1.t_dep || self.b.t_dep)
    }

    /// Largest characteristic speed |lambda| with det(A1 - lambda A0) = 0,
    /// from the Hermitian pencil (H A1, H A0). Falls back to the metric's
    /// light speed where H A0 is not positive.
    pub fn max_char_speed(&self, grid: &Grid) -> f64 {
        let mut v: f64 = 0.0;
        let nts = if self.a0.t_dep || self.a1.t_dep || self.h.t_dep {
            (grid.nt + 1).min(65)
        } else {
            1
        };
        let nxs = if self.a0.x_dep || self.a1.x_dep || self.h.x_dep {
            grid.nx.min(64)
        } else {
            1
        };
        for a in 0..nts {
            let n = if nts == 1 { 0 } else { a * grid.nt / (nts - 1) };
            for b in 0..nxs {
                let i = if nxs == 1 { 0 } else { b * grid.nx / nxs };
                let (t, x) = (grid.t(n), grid.x(i));
                let h = self.h.at(t, x);
                let m = hermitian_part(&(&h * self.a0.at(t, x)));
                let k = hermitian_part(&(&h * self.a1.at(t, x)));
                let speed = match m.clone().cholesky() {
                    Some(ch) => {
                        let l = ch.l();
                        let linv = l.try_inverse().expect("cholesky factor invertible");
                        let w = &linv * k * linv.adjoint();
                        let e = nalgebra::SymmetricEigen::new(hermitian_part(&w));
                        e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                    }
                    None => self.metric.speed_at(t, x),
                };
                v = v.max(speed);
            }
        }
        v
    }
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// xi_t A0(p) + xi_x A1(p).
pub fn principal_symbol(sys: &SHSystem, xi: (f64, f64), t: f64, x: f64) -> CMat {
    sys.a0.at(t, x) * c(xi.0) + sys.a1.at(t, x) * c(xi.1)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SymbolReport {
    pub condition: String,
    pub passed: bool,
    /// Defect for (S), minimum eigenvalue for (H).
    pub value: f64,
    pub worst_t: f64,
    pub worst_x: f64,
    pub nodes: usize,
}

/// Max over nodes and xi in {dt, dx} of |H sigma - (H sigma)^*|.
pub fn check_condition_s(sys: &SHSystem, grid: &Grid) -> SymbolReport {
    let mut worst = (0.0f64, grid.t0, 0.0);
    let mut nodes = 0;
    let _ = for_each_node::<()>(grid, true, true, |t, x| {
        nodes += 1;
        let h = sys.h.at(t, x);
        for xi in [(1.0, 0.0), (0.0, 1.0)] {
            let hs = &h * principal_symbol(sys, xi, t, x);
            let d = (&hs - hs.adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()));
            if d > worst.0 {
                worst = (d, t, x);
            }
        }
        let hd = (&h - h.adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()));
        if hd > worst.0 {
            worst = (hd, t, x);
        }
        Ok(())
    });
    SymbolReport {
        condition: "S".into(),
        passed: worst.0 < 1e-10,
        value: worst.0,
        worst_t: worst.1,
        worst_x: worst.2,
        nodes,
    }
}

/// Smallest eigenvalue of the Hermitian part of H (A0 + alpha A1) at a node.
pub fn min_symbol_eigenvalue(sys: &SHSystem, t: f64, x: f64, alpha: f64) -> f64 {
    let m = &sys.h.at(t, x) * principal_symbol(sys, (1.0, alpha), t, x);
    let e = nalgebra::SymmetricEigen::new(hermitian_part(&m));
    e.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v))
}

/// Samples alpha in (-a/beta, a/beta) * (1 - 1e-3) at every node and reports
/// the smallest eigenvalue of H (A0 + alpha A1).
pub fn check_condition_h(sys: &SHSystem, grid: &Grid, n_alpha: usize) -> SymbolReport {
    let n_alpha = n_alpha.max(2);
    let slope = sys.metric.cone_slope();
    let mut worst = (f64::INFINITY, grid.t0, 0.0);
    let mut nodes = 0;
    let _ = for_each_node::<()>(grid, true, true, |t, x| {
        nodes += 1;
        let amax = slope.at(t, x) * (1.0 - 1e-3);
        for j in 0..n_alpha {
            let alpha = -amax + 2.0 * amax * j as f64 / (n_alpha - 1) as f64;
            let e = min_symbol_eigenvalue(sys, t, x, alpha);
            if e < worst.0 {
                worst = (e, t, x);
            }
        }
        Ok(())
    });
    SymbolReport {
        condition: "H".into(),
        passed: worst.0 > 0.0,
        value: worst.0,
        worst_t: worst.1,
        worst_x: worst.2,
        nodes,
    }
}

/// Coefficient samples at every half level, stored compactly when a
/// coefficient does not depend on t or x. Matrices are row-major.
#[derive(Debug, Clone)]
struct Table {
    t_dep: bool,
    x_dep: bool,
    nx: usize,
    n2: usize,
    data: Vec<C64>,
}

impl Table {
    fn build(grid: &Grid, field: &MatField) -> Table {
        let n = field.n;
        let nlev = if field.t_dep { 2 * grid.nt + 1 } else { 1 };
        let nx = if field.x_dep { grid.nx } else { 1 };
        let mut data = Vec::with_capacity(nlev * nx * n * n);
        for m in 0..nlev {
            let t = grid.t_half(m);
            for i in 0..nx {
                let a = field.at(t, grid.x(i));
                for r in 0..n {
                    for col in 0..n {
                        data.push(a[(r, col)]);
                    }
                }
            }
        }
        Table {
            t_dep: field.t_dep,
            x_dep: field.x_dep,
            nx,
            n2: n * n,
            data,
        }
    }

    #[inline]
    fn at(&self, m: usize, i: usize) -> &[C64] {
        let m = if self.t_dep { m } else { 0 };
        let i = if self.x_dep { i } else { 0 };
        let k = (m * self.nx + i) * self.n2;
        &self.data[k..k + self.n2]
    }

    fn check_finite(&self, grid: &Grid, what: &'static str) -> Result<(), ShsError> {
        for (k, chunk) in self.data.chunks(self.n2).enumerate() {
            if chunk.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                let (m, i) = (k / self.nx, k % self.nx);
                return Err(ShsError::Singular {
                    what,
                    t: grid.t_half(m),
                    x: grid.x(i),
                });
            }
        }
        Ok(())
    }
}

/// A system sampled on a grid, ready for time stepping.
#[derive(Debug, Clone)]
pub struct SampledSystem {
    pub grid: Grid,
    pub n: usize,
    pub label: String,
    pub kind: FiberKind,
    pub deriv: DerivMode,
    a0: Table,
    a0inv: Table,
    a1: Table,
    b: Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl SampledSystem {
    pub fn new(sys: &SHSystem, grid: &Grid, deriv: DerivMode) -> Result<Self, ShsError> {
        let a0 = Table::build(grid, &sys.a0);
        let a0inv = Table::build(grid, &sys.a0.inverse());
        a0inv.check_finite(grid, "A0")?;
        let a1 = Table::build(grid, &sys.a1);
        let b = Table::build(grid, &sys.b);
        for (t, what) in [(&a0, "A0"), (&a1, "A1"), (&b, "B")] {
            t.check_finite(grid, what)?;
        }
        Ok(SampledSystem {
            grid: *grid,
            n: sys.n,
            label: sys.label.clone(),
            kind: sys.fiber_kind,
            deriv,
            a0,
            a0inv,
            a1,
            b,
        })
    }

    /// d_t Psi = A0^{-1} (f - A1 d_x Psi - B Psi) at half level m.
    fn rhs(&self, m: usize, y: &[C64], f: Option<&[C64]>, dx: &mut XDeriv, yx: &mut [C64], w: &mut [C64], dy: &mut [C64]) {
        let (n, nx) = (self.n, self.grid.nx);
        dx.apply_components(y, yx);
        for i in 0..nx {
            let a1 = self.a1.at(m, i);
            let b = self.b.at(m, i);
            for r in 0..n {
                let mut acc = match f {
                    Some(f) => f[r * nx + i],
                    None => ZERO,
                };
                for col in 0..n {
                    acc -= a1[r * n + col] * yx[col * nx + i] + b[r * n + col] * y[col * nx + i];
                }
                w[r] = acc;
            }
            let inv = self.a0inv.at(m, i);
            for r in 0..n {
                let mut acc = ZERO;
                for col in 0..n {
                    acc += inv[r * n + col] * w[col];
                }
                dy[r * nx + i] = acc;
            }
        }
    }

    /// Solves S Psi = f with Psi(level) = h, stepping both ways from
    /// `level` to the window ends.
    pub fn solve_from(&self, f: Option<&GridField>, h: &SliceData, level: usize) -> Result<GridField, ShsError> {
        let g = self.grid;
        if h.nc != self.n || h.nx != g.nx {
            return Err(ShsError::Dimension(format!(
                "data has {}x{} entries, system needs {}x{}",
                h.nc, h.nx, self.n, g.nx
            )));
        }
        if let Some(f) = f {
            if f.nc != self.n || f.grid != g {
                return Err(ShsError::Dimension("source does not match the system grid".into()));
            }
        }
        let complex = self.kind == FiberKind::Complex
            || h.data.iter().any(|v| v.im != 0.0)
            || f.is_some_and(|f| f.kind == FiberKind::Complex);
        let kind = if complex { FiberKind::Complex } else { FiberKind::Real };
        let mut out = GridField::zeros(g, self.n, kind);
        out.set_slice(level, h);
        let len = self.n * g.nx;
        let mut dx = XDeriv::new(g.nx, self.deriv);
        let mut scratch = Rk4Scratch::new(len);
        let (mut yx, mut w) = (vec![ZERO; len], vec![ZERO; self.n]);
        let mut f_half = vec![ZERO; len];
        let mut state = h.data.clone();
        for dir in [Direction::Forward, Direction::Backward] {
            state.copy_from_slice(&h.data);
            let steps: Vec<usize> = match dir {
                Direction::Forward => (level..g.nt).collect(),
                Direction::Backward => (1..=level).rev().collect(),
            };
            for lev in steps {
                let (dt, mid) = match dir {
                    Direction::Forward => (g.dt(), lev),
                    Direction::Backward => (-g.dt(), lev - 1),
                };
                if let Some(f) = f {
                    f.half_level(mid, &mut f_half);
                }
                let m0 = 2 * lev;
                let mut stage = |frac: f64, y: &[C64], dy: &mut [C64]| {
                    let (m, src): (usize, Option<&[C64]>) = if frac == 0.0 {
                        (m0, f.map(|f| f.level(lev)))
                    } else if frac == 0.5 {
                        (2 * mid + 1, f.map(|_| &f_half[..]))
                    } else {
                        let next = match dir {
                            Direction::Forward => lev + 1,
                            Direction::Backward => lev - 1,
                        };
                        (2 * next, f.map(|f| f.level(next)))
                    };
                    self.rhs(m, y, src, &mut dx, &mut yx, &mut w, dy);
                };
                crate::grid::rk4_step(&mut stage, &mut state, dt, lev, &mut scratch)?;
                let next = match dir {
                    Direction::Forward => lev + 1,
                    Direction::Backward => lev - 1,
                };
                out.level_mut(next).copy_from_slice(&state);
            }
        }
        Ok(out)
    }

    pub fn solve(&self, f: Option<&GridField>, h: &SliceData, direction: Direction) -> Result<GridField, ShsError> {
        let level = match direction {
            Direction::Forward => 0,
            Direction::Backward => self.grid.nt,
        };
        self.solve_from(f, h, level)
    }

    /// w(t) A0 Psi on every level.
    pub fn apply_a0_weighted(&self, psi: &GridField, w: impl Fn(f64) -> f64) -> GridField {
        let g = self.grid;
        let (n, nx) = (self.n, g.nx);
        let mut out = GridField::zeros(g, n, FiberKind::Complex);
        for lev in 0..=g.nt {
            let wt = w(g.t(lev));
            if wt == 0.0 {
                continue;
            }
            let y = psi.level(lev);
            let o = out.level_mut(lev);
            for i in 0..nx {
                let a0 = self.a0.at(2 * lev, i);
                for r in 0..n {
                    let mut acc = ZERO;
                    for col in 0..n {
                        acc += a0[r * n + col] * y[col * nx + i];
                    }
                    o[r * nx + i] = acc * wt;
                }
            }
        }
        out
    }

    /// S Psi on every level: time derivatives by 8th-order differences,
    /// x derivatives by the configured method.
    pub fn apply(&self, psi: &GridField) -> Result<GridField, ShsError> {
        let g = self.grid;
        let (n, nx) = (self.n, g.nx);
        let pt = psi.dt_fd()?;
        let px = crate::grid::dx_field(psi, self.deriv);
        let mut out = GridField::zeros(g, n, FiberKind::Complex);
        for lev in 0..=g.nt {
            let m = 2 * lev;
            let (yt, yx, y) = (pt.level(lev), px.level(lev), psi.level(lev));
            let o = out.level_mut(lev);
            for i in 0..nx {
                let (a0, a1, b) = (self.a0.at(m, i), self.a1.at(m, i), self.b.at(m, i));
                for r in 0..n {
                    let mut acc = ZERO;
                    for col in 0..n {
                        let k = r * n + col;
                        let j = col * nx + i;
                        acc += a0[k] * yt[j] + a1[k] * yx[j] + b[k] * y[j];
                    }
                    o[r * nx + i] = acc;
                }
            }
        }
        if psi.kind == FiberKind::Real && out.max_imag() == 0.0 {
            out.kind = FiberKind::Real;
        }
        Ok(out)
    }
}

/// One-shot Cauchy solve (forward from t0 or backward from t1).
pub fn solve_cauchy(
    sys: &SHSystem,
    grid: &Grid,
    f: Option<&GridField>,
    h: &SliceData,
    direction: Direction,
    deriv: DerivMode,
    cfl: f64,
) -> Result<GridField, ShsError> {
    grid.check_cfl(cfl, sys.max_char_speed(grid))?;
    SampledSystem::new(sys, grid, deriv)?.solve(f, h, direction)
}

/// kappa^rho S kappa^{-rho} for kappa^rho = rho kappa:
/// A' = kappa A kappa^{-1},
/// B' = kappa (B - sum (d rho / rho) A) kappa^{-1} + kappa A d(kappa^{-1}).
pub fn conjugate_system(
    sys: &SHSystem,
    kappa: &MatField,
    rho: &RhoWeight,
    grid: &Grid,
    label: impl Into<String>,
) -> Result<SHSystem, ShsError> {
    kappa.check_invertible(grid, "kappa")?;
    let kinv = kappa.inverse();
    let conj = |a: &MatField| kappa.mul(a).mul(&kinv);
    let rt = ScalarField::from_expr(&rho.log_derivative(Var::T));
    let rx = ScalarField::from_expr(&rho.log_derivative(Var::X));
    let shifted = sys.b.sub(&sys.a0.scale(&rt)).sub(&sys.a1.scale(&rx));
    let mut b = conj(&shifted);
    if !kappa.is_constant() {
        let corr = kappa
            .mul(&sys.a0)
            .mul(&kinv.partial(Var::T))
            .add(&kappa.mul(&sys.a1).mul(&kinv.partial(Var::X)));
        b = b.add(&corr);
    }
    let h = kinv.adjoint().mul(&sys.h).mul(&kinv);
    Ok(SHSystem {
        label: label.into(),
        n: sys.n,
        a0: conj(&sys.a0),
        a1: conj(&sys.a1),
        b,
        h,
        metric: sys.metric.clone(),
        fiber_kind: if kappa.is_constant() { sys.fiber_kind } else { FiberKind::Complex },
    })
}

/// (1 - chi) sys01 + chi sys1, coefficientwise, with the fiber metric and
/// causal cone of sys1.
pub fn interpolate_systems(sys01: &SHSystem, sys1: &SHSystem, chi: &ChiProfile) -> Result<SHSystem, ShsError> {
    if sys01.n != sys1.n {
        return Err(ShsError::Dimension(format!("{} vs {}", sys01.n, sys1.n)));
    }
    Ok(SHSystem {
        label: format!("{}~{}", sys01.label, sys1.label),
        n: sys1.n,
        a0: sys01.a0.blend(&sys1.a0, chi),
        a1: sys01.a1.blend(&sys1.a1, chi),
        b: sys01.b.blend(&sys1.b, chi),
        h: sys1.h.clone(),
        metric: sys1.metric.clone(),
        fiber_kind: if sys01.fiber_kind == FiberKind::Real && sys1.fiber_kind == FiberKind::Real {
            FiberKind::Real
        } else {
            FiberKind::Complex
        },
    })
}

/// Spacetime volume density beta * a of the system's metric.
pub fn volume_density(metric: &Metric1p1) -> ScalarField {
    metric.beta_field().zip(&metric.a_field(), |b, a| b * a)
}

/// Formal adjoint with respect to the pairing int <Psi, S Phi>_H vol:
/// S^dag = -H^{-1} A0^* H d_t - H^{-1} A1^* H d_x
///       + H^{-1} (B^* H - v^{-1} d_t(v A0^* H) - v^{-1} d_x(v A1^* H)),
/// v = beta a. The fiber metric of the adjoint is -H, which keeps condition
/// (H) for future covectors.
pub fn adjoint_system(sys: &SHSystem) -> SHSystem {
    let hinv = sys.h.inverse();
    let v = volume_density(&sys.metric);
    let vinv = v.zip(&ScalarField::constant(1.0), |v, _| 1.0 / v);
    let a0h = sys.a0.adjoint().mul(&sys.h);
    let a1h = sys.a1.adjoint().mul(&sys.h);
    let div = a0h
        .scale(&v)
        .partial(Var::T)
        .add(&a1h.scale(&v).partial(Var::X))
        .scale(&vinv);
    let b = hinv.mul(&sys.b.adjoint().mul(&sys.h).sub(&div));
    SHSystem {
        label: format!("{}^dag", sys.label),
        n: sys.n,
        a0: hinv.mul(&a0h).map(|m| -m),
        a1: hinv.mul(&a1h).map(|m| -m),
        b,
        h: sys.h.map(|m| -m),
        metric: sys.metric.clone(),
        fiber_kind: sys.fiber_kind,
    }
}

/// Space-time pairing sum <Psi, Phi>_H v dx dt over the grid.
pub fn pairing(h: &MatField, v: &ScalarField, psi: &GridField, phi: &GridField) -> C64 {
    let g = psi.grid;
    let n = psi.nc;
    let mut acc = ZERO;
    for lev in 0..=g.nt {
        let t = g.t(lev);
        for i in 0..g.nx {
            let x = g.x(i);
            let hm = h.at(t, x);
            let mut s = ZERO;
            for r in 0..n {
                let pr = psi.get(lev, i, r).conj();
                if pr == ZERO {
                    continue;
                }
                for col in 0..n {
                    s += pr * hm[(r, col)] * phi.get(lev, i, col);
                }
            }
            acc += s * v.at(t, x);
        }
    }
    acc * g.dx() * g.dt()
}

fn check_compact(f: &GridField, what: &str) -> Result<(), ShsError> {
    let nt = f.grid.nt;
    let peak = f.max_abs();
    for lev in [0, 1, 2, nt - 2, nt - 1, nt] {
        if f.max_abs_level(lev) > 1e-14 * peak.max(1e-300) {
            return Err(GridError::Support(format!("{what} is nonzero near the window edge (level {lev})")).into());
        }
    }
    Ok(())
}

/// |int <Psi, S Phi> - int <S^dag Psi, Phi>| for compactly supported fields.
pub fn adjoint_defect(sys: &SHSystem, psi: &GridField, phi: &GridField, deriv: DerivMode) -> Result<f64, ShsError> {
    check_compact(psi, "Psi")?;
    check_compact(phi, "Phi")?;
    let g = psi.grid;
    let s = SampledSystem::new(sys, &g, deriv)?;
    let adj = SampledSystem::new(&adjoint_system(sys), &g, deriv)?;
    let v = volume_density(&sys.metric);
    let lhs = pairing(&sys.h, &v, psi, &s.apply(phi)?);
    let rhs = pairing(&sys.h, &v, &adj.apply(psi)?, phi);
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    pub(crate) fn transport(speed: f64) -> SHSystem {
        SHSystem {
            label: "transport".into(),
            n: 1,
            a0: MatField::identity(1),
            a1: MatField::constant(CMat::from_element(1, 1, c(speed))),
            b: MatField::zeros(1),
            h: MatField::identity(1),
            metric: Metric1p1::new("m", parse_expr(&speed.to_string()).unwrap(), parse_expr("1").unwrap()),
            fiber_kind: FiberKind::Complex,
        }
    }

    fn sym2(a: f64, b: f64, d: f64) -> CMat {
        CMat::from_row_slice(2, 2, &[c(a), c(b), c(b), c(d)])
    }

    /// Two-component system with variable coefficients, symmetric for H = Id.
    fn variable() -> SHSystem {
        let g = Metric1p1::parse("g", "1", "1").unwrap();
        SHSystem {
            label: "var".into(),
            n: 2,
            a0: MatField::new(2, true, true, |t, x| sym2(2.0 + 0.3 * (x + t).sin(), 0.1, 1.5)),
            a1: MatField::new(2, true, true, |t, x| sym2(0.2 * x.cos(), 0.8 + 0.1 * t.sin(), -0.3)),
            b: MatField::new(2, true, true, |t, x| {
                CMat::from_row_slice(2, 2, &[c(0.1), c(x.sin()), c(-0.2 * t.cos()), c(0.3)])
            }),
            h: MatField::identity(2),
            metric: g,
            fiber_kind: FiberKind::Real,
        }
    }

    #[test]
    fn symbol_examples() {
        let s = variable();
        let z = principal_symbol(&s, (0.0, 0.0), 0.1, 0.2);
        assert!(z.iter().all(|v| *v == ZERO));
        assert_eq!(principal_symbol(&s, (1.0, 0.0), 0.1, 0.2), s.a0.at(0.1, 0.2));
        assert_eq!(principal_symbol(&s, (1.0, 1.0), 0.1, 0.2), s.a0.at(0.1, 0.2) + s.a1.at(0.1, 0.2));
        let g = Grid::new(8, 4, 0.0, 1.0).unwrap();
        assert!(check_condition_s(&s, &g).passed);
        let mut bad = s.clone();
        bad.a1 = MatField::constant(CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]));
        assert!(!check_condition_s(&bad, &g).passed);
        assert!(check_condition_h(&s, &g, 17).passed);
        let mut flipped = s.clone();
        flipped.h = MatField::constant(-CMat::identity(2, 2));
        assert!(!check_condition_h(&flipped, &g, 17).passed);
    }

    #[test]
    fn transport_closed_form() {
        let speed = 0.7;
        let g = Grid::with_cfl(64, 0.0, 1.0, 0.4, speed).unwrap();
        let sys = transport(speed);
        let h = SliceData::from_fn(64, 1, |x, _| C64::from_polar(1.0, 2.0 * x));
        let psi = solve_cauchy(&sys, &g, None, &h, Direction::Forward, DerivMode::Spectral, 0.4).unwrap();
        let exact = GridField::from_fn(g, 1, FiberKind::Complex, |t, x, _| C64::from_polar(1.0, 2.0 * (x - speed * t)));
        assert!(psi.max_diff(&exact) < 1e-6, "{}", psi.max_diff(&exact));
        let zero = solve_cauchy(&sys, &g, None, &SliceData::zeros(64, 1), Direction::Forward, DerivMode::Spectral, 0.4).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let back = SampledSystem::new(&sys, &g, DerivMode::Spectral)
            .unwrap()
            .solve(None, &exact.slice(g.nt), Direction::Backward)
            .unwrap();
        assert!(back.max_diff(&exact) < 1e-6);
        let fast = Grid::new(64, 2, 0.0, 1.0).unwrap();
        assert!(solve_cauchy(&sys, &fast, None, &h, Direction::Forward, DerivMode::Spectral, 0.4).is_err());
    }

    #[test]
    fn source_and_residual() {
        let g = Grid::new(32, 200, 0.0, 1.0).unwrap();
        let sys = variable();
        let s = SampledSystem::new(&sys, &g, DerivMode::Spectral).unwrap();
        let f = GridField::from_fn(g, 2, FiberKind::Real, |t, x, k| c((t * 3.0).sin() * (x + k as f64).cos()));
        let h = SliceData::from_fn(32, 2, |x, k| c((x * (k + 1) as f64).sin()));
        let psi = s.solve(Some(&f), &h, Direction::Forward).unwrap();
        let res = s.apply(&psi).unwrap().sub(&f);
        assert!(res.max_abs() < 1e-6, "{}", res.max_abs());
        let again = s.solve(Some(&f), &h, Direction::Forward).unwrap();
        assert!(psi.max_diff(&again) < 1e-13);
        let mid = s.solve_from(Some(&f), &psi.slice(100), 100).unwrap();
        assert!(mid.max_diff(&psi) < 1e-8);
    }

    #[test]
    fn conjugation_matches_composition() {
        let g = Grid::new(32, 200, 0.0, 1.0).unwrap();
        let sys = variable();
        let rho = RhoWeight {
            expr: parse_expr("sqrt(2 + sin(x)*cos(t))").unwrap(),
        };
        let kappa = MatField::new(2, true, true, |t, x| {
            let th = 0.3 * (x + t).sin();
            CMat::from_row_slice(2, 2, &[c(th.cos()), c(-th.sin()), c(th.sin()), c(th.cos())])
        });
        let conj = conjugate_system(&sys, &kappa, &rho, &g, "conj").unwrap();
        let psi = GridField::from_fn(g, 2, FiberKind::Real, |t, x, k| c((x + t * k as f64).sin() + 0.5 * (2.0 * x).cos()));
        let krho = kappa.scale(&rho.field());
        let lhs = SampledSystem::new(&conj, &g, DerivMode::Spectral).unwrap().apply(&krho.apply(&psi)).unwrap();
        let rhs = krho.apply(&SampledSystem::new(&sys, &g, DerivMode::Spectral).unwrap().apply(&psi).unwrap());
        assert!(lhs.max_diff(&rhs) < 1e-9, "{}", lhs.max_diff(&rhs));
        let same = conjugate_system(&sys, &MatField::identity(2), &RhoWeight::one(), &g, "same").unwrap();
        assert!((same.b.at(0.3, 0.4) - sys.b.at(0.3, 0.4)).norm() < 1e-15);
        assert!(check_condition_s(&conj, &Grid::new(8, 4, 0.0, 1.0).unwrap()).passed);
        let singular = MatField::zeros(2);
        assert!(conjugate_system(&sys, &singular, &rho, &g, "bad").is_err());
    }

    #[test]
    fn interpolation_endpoints() {
        let a = variable();
        let b = transport(1.0);
        assert!(interpolate_systems(&a, &b, &crate::geom::chi_profile(0.0, 1.0).unwrap()).is_err());
        let mut b2 = variable();
        b2.b = MatField::zeros(2);
        let chi = crate::geom::chi_profile(0.0, 1.0).unwrap();
        let s = interpolate_systems(&a, &b2, &chi).unwrap();
        assert_eq!(s.b.at(-1.0, 0.3), a.b.at(-1.0, 0.3));
        assert_eq!(s.b.at(2.0, 0.3), b2.b.at(2.0, 0.3));
    }

    #[test]
    fn adjoint_of_variable_system() {
        let g = Grid::new(64, 200, 0.0, 2.0).unwrap();
        let sys = variable();
        let bump = |tc: f64, xc: f64| {
            GridField::from_fn(g, 2, FiberKind::Real, move |t, x, k| {
                let s = ((t - tc) / 0.6).powi(2);
                let r = (crate::grid::circle_dist(x, xc) / 1.5).powi(2);
                if s < 1.0 && r < 1.0 {
                    c((-1.0 / (1.0 - s) - 1.0 / (1.0 - r)).exp() * (1.0 + k as f64))
                } else {
                    ZERO
                }
            })
        };
        let psi = bump(0.9, 1.0);
        let phi = bump(1.1, 1.6);
        let d = adjoint_defect(&sys, &psi, &phi, DerivMode::Spectral).unwrap();
        assert!(d < 1e-8, "{d}");
        let zero = GridField::zeros(g, 2, FiberKind::Real);
        assert!(adjoint_defect(&sys, &zero, &phi, DerivMode::Spectral).unwrap() < 1e-15);
        let wide = GridField::from_fn(g, 2, FiberKind::Real, |_, x, _| c(x.sin()));
        assert!(adjoint_defect(&sys, &wide, &phi, DerivMode::Spectral).is_err());
    }
}
