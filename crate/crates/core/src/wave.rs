//! Scalar wave operators P = -box_g + V on diagonal 1+1 metrics, their
//! first-order reduction on jets (u_t, u_x, u), Cauchy solves and the
//! symplectic form.

use crate::expr::{self, Expr, Var};
use crate::geom::{ChiProfile, Metric1p1, RhoWeight, ScalarField};
use crate::grid::{d_dx, dx_field, slice_integral, DerivMode, FiberKind, Grid, GridField, SliceData, C64, ZERO};
use crate::shs::{c, Direction, MatField, SHSystem, SampledSystem, ShsError};

/// P = (1/beta^2) d_t^2 + b0 d_t - (1/a) d_x((1/a) d_x) + bx d_x + V.
#[derive(Debug, Clone)]
pub struct WaveOperator {
    pub metric: Metric1p1,
    pub v: Expr,
    pub b0: Expr,
    pub bx: Expr,
}

impl WaveOperator {
    pub fn new(metric: &Metric1p1, v: Expr) -> Self {
        let (beta, a) = (&metric.beta, &metric.a);
        let b2 = expr::powi(beta.clone(), 2.0);
        let a2 = expr::powi(a.clone(), 2.0);
        let b0 = expr::mul(
            expr::div(Expr::constant(0.5), b2.clone()),
            expr::sub(expr::div(a2.diff(Var::T), a2.clone()), expr::div(b2.diff(Var::T), b2)),
        );
        let bx = expr::neg(expr::div(beta.diff(Var::X), expr::mul(beta.clone(), a2)));
        WaveOperator {
            metric: metric.clone(),
            v,
            b0,
            bx,
        }
    }

    /// Klein-Gordon operator with constant mass.
    pub fn klein_gordon(metric: &Metric1p1, mass: f64) -> Self {
        WaveOperator::new(metric, Expr::constant(mass * mass))
    }

    pub fn second_order(&self) -> SecondOrderOp {
        let (beta, a) = (&self.metric.beta, &self.metric.a);
        let inv = |e: Expr, p: f64| ScalarField::from_expr(&expr::div(Expr::constant(1.0), expr::powi(e, p)));
        // -(1/a) d_x((1/a) d_x u) = -(1/a^2) u_xx + (a_x/a^3) u_x
        let ex = expr::add(self.bx.clone(), expr::div(a.diff(Var::X), expr::powi(a.clone(), 3.0)));
        SecondOrderOp {
            e_tt: inv(beta.clone(), 2.0),
            e_xx: inv(a.clone(), 2.0),
            e_t: ScalarField::from_expr(&self.b0),
            e_x: ScalarField::from_expr(&ex),
            e_0: ScalarField::from_expr(&self.v),
            metric: self.metric.clone(),
            label: format!("wave[{}]", self.metric.label),
        }
    }
}

/// e_tt d_t^2 - e_xx d_x^2 + e_t d_t + e_x d_x + e_0 with e_tt, e_xx > 0.
/// Conjugates and blends of wave operators stay in this class.
#[derive(Debug, Clone)]
pub struct SecondOrderOp {
    pub e_tt: ScalarField,
    pub e_xx: ScalarField,
    pub e_t: ScalarField,
    pub e_x: ScalarField,
    pub e_0: ScalarField,
    pub metric: Metric1p1,
    pub label: String,
}

fn field_sum(terms: &[(f64, &ScalarField, &ScalarField)], base: &ScalarField) -> ScalarField {
    let mut out = base.clone();
    for (k, f, g) in terms {
        let k = *k;
        let prod = f.zip(g, |a, b| a * b);
        out = out.zip(&prod, move |a, b| a + k * b);
    }
    out
}

impl SecondOrderOp {
    /// rho P rho^{-1}: with w = 1/rho,
    /// e_t' = e_t + 2 e_tt w_t/w, e_x' = e_x - 2 e_xx w_x/w,
    /// e_0' = e_0 + (e_tt w_tt - e_xx w_xx + e_t w_t + e_x w_x)/w.
    pub fn conjugate(&self, rho: &RhoWeight, label: impl Into<String>) -> SecondOrderOp {
        if rho.is_constant() {
            let mut out = self.clone();
            out.label = label.into();
            return out;
        }
        let w = expr::div(Expr::constant(1.0), rho.expr.clone());
        let ratio = |e: Expr| ScalarField::from_expr(&expr::div(e, w.clone()));
        let (wt, wx) = (w.diff(Var::T), w.diff(Var::X));
        let (wt_w, wx_w) = (ratio(wt.clone()), ratio(wx.clone()));
        let (wtt_w, wxx_w) = (ratio(wt.diff(Var::T)), ratio(wx.diff(Var::X)));
        SecondOrderOp {
            e_tt: self.e_tt.clone(),
            e_xx: self.e_xx.clone(),
            e_t: field_sum(&[(2.0, &self.e_tt, &wt_w)], &self.e_t),
            e_x: field_sum(&[(-2.0, &self.e_xx, &wx_w)], &self.e_x),
            e_0: field_sum(
                &[
                    (1.0, &self.e_tt, &wtt_w),
                    (-1.0, &self.e_xx, &wxx_w),
                    (1.0, &self.e_t, &wt_w),
                    (1.0, &self.e_x, &wx_w),
                ],
                &self.e_0,
            ),
            metric: self.metric.clone(),
            label: label.into(),
        }
    }

    /// (1 - chi) self + chi other, with the causal cone of `other`.
    pub fn blend(&self, other: &SecondOrderOp, chi: &ChiProfile) -> SecondOrderOp {
        SecondOrderOp {
            e_tt: self.e_tt.blend(&other.e_tt, chi),
            e_xx: self.e_xx.blend(&other.e_xx, chi),
            e_t: self.e_t.blend(&other.e_t, chi),
            e_x: self.e_x.blend(&other.e_x, chi),
            e_0: self.e_0.blend(&other.e_0, chi),
            metric: other.metric.clone(),
            label: format!("{}~{}", self.label, other.label),
        }
    }

    /// First-order system on Psi = (u_t, u_x, u):
    /// A0 = diag(e_tt, 1, 1), A1 = [[0, -e_xx, 0], [-1, 0, 0], [0, 0, 0]],
    /// B = [[e_t, e_x, e_0], [0, 0, 0], [-1, 0, 0]], H = diag(1, e_xx, 1).
    pub fn reduce(&self) -> SHSystem {
        let one = ScalarField::constant(1.0);
        let neg = |f: &ScalarField| f.zip(&one, |a, _| -a);
        SHSystem {
            label: self.label.clone(),
            n: 3,
            a0: MatField::from_entries(3, vec![(0, 0, self.e_tt.clone()), (1, 1, one.clone()), (2, 2, one.clone())]),
            a1: MatField::from_entries(3, vec![(0, 1, neg(&self.e_xx)), (1, 0, ScalarField::constant(-1.0))]),
            b: MatField::from_entries(
                3,
                vec![
                    (0, 0, self.e_t.clone()),
                    (0, 1, self.e_x.clone()),
                    (0, 2, self.e_0.clone()),
                    (2, 0, ScalarField::constant(-1.0)),
                ],
            ),
            h: MatField::from_entries(3, vec![(0, 0, one.clone()), (1, 1, self.e_xx.clone()), (2, 2, one)]),
            metric: self.metric.clone(),
            fiber_kind: FiberKind::Real,
        }
    }

    /// P u with 8th-order differences in t and the chosen x derivative.
    pub fn apply(&self, u: &GridField, deriv: DerivMode) -> Result<GridField, ShsError> {
        let g = u.grid;
        let ut = u.dt_fd()?;
        let utt = u.dtt_fd()?;
        let ux = dx_field(u, deriv);
        let uxx = dx_field(&ux, deriv);
        let mut out = GridField::zeros(g, 1, u.kind);
        for n in 0..=g.nt {
            let t = g.t(n);
            for i in 0..g.nx {
                let x = g.x(i);
                let v = c(self.e_tt.at(t, x)) * utt.get(n, i, 0) - c(self.e_xx.at(t, x)) * uxx.get(n, i, 0)
                    + c(self.e_t.at(t, x)) * ut.get(n, i, 0)
                    + c(self.e_x.at(t, x)) * ux.get(n, i, 0)
                    + c(self.e_0.at(t, x)) * u.get(n, i, 0);
                out.set(n, i, 0, v);
            }
        }
        Ok(out)
    }
}

pub fn apply_wave(p: &WaveOperator, u: &GridField) -> Result<GridField, ShsError> {
    p.second_order().apply(u, DerivMode::Spectral)
}

/// Reduced system of P.
pub fn reduce_to_shs(p: &WaveOperator) -> SHSystem {
    p.second_order().reduce()
}

/// Jet data (h', d_x h, h) on a slice.
pub fn jet_slice(h: &SliceData, hp: &SliceData, deriv: DerivMode) -> SliceData {
    let hx = d_dx(h, deriv);
    let mut out = SliceData::zeros(h.nx, 3);
    out.component_mut(0).copy_from_slice(hp.component(0));
    out.component_mut(1).copy_from_slice(hx.component(0));
    out.component_mut(2).copy_from_slice(h.component(0));
    out
}

/// Jet field (u_t, u_x, u) of a scalar history.
pub fn jet_of(u: &GridField, deriv: DerivMode) -> Result<GridField, ShsError> {
    let ut = u.dt_fd()?;
    let ux = dx_field(u, deriv);
    let g = u.grid;
    let mut out = GridField::zeros(g, 3, u.kind);
    for n in 0..=g.nt {
        for i in 0..g.nx {
            out.set(n, i, 0, ut.get(n, i, 0));
            out.set(n, i, 1, ux.get(n, i, 0));
            out.set(n, i, 2, u.get(n, i, 0));
        }
    }
    Ok(out)
}

/// Source (f, 0, 0) of the reduced system.
pub fn lift_source(f: &GridField) -> GridField {
    let g = f.grid;
    let mut out = GridField::zeros(g, 3, f.kind);
    for n in 0..=g.nt {
        for i in 0..g.nx {
            out.set(n, i, 0, f.get(n, i, 0));
        }
    }
    out
}

/// Jet-field solution of a reduced wave equation.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub psi: GridField,
}

impl WaveSolution {
    pub fn u(&self) -> GridField {
        self.psi.component(2)
    }

    pub fn u_t(&self) -> GridField {
        self.psi.component(0)
    }

    /// max |Psi_2 - d_x Psi_3| over the window.
    pub fn jet_defect(&self, deriv: DerivMode) -> f64 {
        let ux = dx_field(&self.psi.component(2), deriv);
        ux.max_diff(&self.psi.component(1))
    }
}

/// P u = f, u = h, d_t u = h' at the earliest (or latest) grid time.
pub fn solve_wave(
    p: &SecondOrderOp,
    grid: &Grid,
    f: Option<&GridField>,
    h: &SliceData,
    hp: &SliceData,
    direction: Direction,
    deriv: DerivMode,
    cfl: f64,
) -> Result<WaveSolution, ShsError> {
    let sys = p.reduce();
    grid.check_cfl(cfl, sys.max_char_speed(grid))?;
    let s = SampledSystem::new(&sys, grid, deriv)?;
    let lifted = f.map(lift_source);
    let psi = s.solve(lifted.as_ref(), &jet_slice(h, hp, deriv), direction)?;
    Ok(WaveSolution { psi })
}

/// sigma(u, v) = int (v d_n u - u d_n v) a dx with d_n = beta^{-1} d_t.
/// Accepts jet fields (three components) or scalar histories.
pub fn symplectic_form(metric: &Metric1p1, u: &GridField, v: &GridField, lev: usize) -> Result<f64, ShsError> {
    let split = |f: &GridField| -> Result<(GridField, GridField), ShsError> {
        if f.nc == 3 {
            Ok((f.component(2), f.component(0)))
        } else {
            Ok((f.clone(), f.dt_fd()?))
        }
    };
    let ((u0, ut), (v0, vt)) = (split(u)?, split(v)?);
    let g = u.grid;
    let t = g.t(lev);
    let mut w = vec![ZERO; g.nx];
    let mut dens = vec![0.0; g.nx];
    for i in 0..g.nx {
        let x = g.x(i);
        let nb = 1.0 / metric.beta_at(t, x);
        w[i] = (v0.get(lev, i, 0) * ut.get(lev, i, 0) - u0.get(lev, i, 0) * vt.get(lev, i, 0)) * nb;
        dens[i] = metric.a_at(t, x);
    }
    Ok(slice_integral(&w, &dens).re)
}

/// Jet transport psi -> jet of (rho u): [[rho, 0, rho_t], [0, rho, rho_x], [0, 0, rho]].
pub fn jet_transport(rho: &RhoWeight) -> MatField {
    let r = rho.field();
    let rt = ScalarField::from_expr(&rho.expr.diff(Var::T));
    let rx = ScalarField::from_expr(&rho.expr.diff(Var::X));
    MatField::from_entries(
        3,
        vec![(0, 0, r.clone()), (1, 1, r.clone()), (2, 2, r), (0, 2, rt), (1, 2, rx)],
    )
}

/// Plane-wave helper e^{i(kx - wt)} on a grid.
pub fn plane_wave(grid: &Grid, k: f64, w: f64) -> GridField {
    GridField::from_fn(*grid, 1, FiberKind::Complex, |t, x, _| C64::from_polar(1.0, k * x - w * t))
}
