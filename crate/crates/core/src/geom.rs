//! Diagonal metrics g = -beta^2 dt^2 + a^2 dx^2 on R x S^1, the smooth step
//! profile chi(t), and the volume-ratio weight rho.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{self, Expr, Var};
use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("{what} must lie in {range}, got {value}")]
    Domain {
        what: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("metric `{label}`: {field} = {value} is not positive at (t={t}, x={x})")]
    NotPositive {
        label: String,
        field: &'static str,
        value: f64,
        t: f64,
        x: f64,
    },
    #[error("metric `{label}`: {field} is not 2pi-periodic in x (mismatch {mismatch:e} at t={t})")]
    NotPeriodic {
        label: String,
        field: &'static str,
        mismatch: f64,
        t: f64,
    },
    #[error("t_minus ({t_minus}) must be strictly less than t_plus ({t_plus})")]
    ChiOrder { t_minus: f64, t_plus: f64 },
    #[error(transparent)]
    Eval(#[from] expr::EvalError),
}

/// Real scalar field on (t, x). Dependence flags let samplers store
/// t-only or x-only fields compactly.
#[derive(Clone)]
pub struct ScalarField {
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub t_dep: bool,
    pub x_dep: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("t_dep", &self.t_dep)
            .field("x_dep", &self.x_dep)
            .finish()
    }
}

impl ScalarField {
    pub fn new(t_dep: bool, x_dep: bool, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            f: Arc::new(f),
            t_dep,
            x_dep,
        }
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(false, false, move |_, _| c)
    }

    pub fn from_expr(e: &Expr) -> Self {
        if let Some(c) = e.as_const() {
            return ScalarField::constant(c);
        }
        let t_dep = e.depends_on(Var::T);
        let x_dep = e.depends_on(Var::X);
        let e = e.clone();
        ScalarField::new(t_dep, x_dep, move |t, x| e.value(t, x))
    }

    #[inline]
    pub fn at(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x)
    }

    pub fn is_constant(&self) -> bool {
        !self.t_dep && !self.x_dep
    }

    /// Pointwise combination of two fields.
    pub fn zip(&self, other: &ScalarField, op: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        let (a, b) = (self.clone(), other.clone());
        ScalarField::new(self.t_dep || other.t_dep, self.x_dep || other.x_dep, move |t, x| {
            op(a.at(t, x), b.at(t, x))
        })
    }

    /// (1 - chi(t)) self + chi(t) other.
    pub fn blend(&self, other: &ScalarField, chi: &ChiProfile) -> Self {
        let (a, b, chi) = (self.clone(), other.clone(), *chi);
        ScalarField::new(true, self.x_dep || other.x_dep, move |t, x| {
            let c = chi.eval(t);
            (1.0 - c) * a.at(t, x) + c * b.at(t, x)
        })
    }
}

/// Diagonal Lorentzian metric on R x S^1 with lapse `beta` and slice scale `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric1p1 {
    pub beta: Expr,
    pub a: Expr,
    pub label: String,
}

impl Metric1p1 {
    pub fn new(label: impl Into<String>, beta: Expr, a: Expr) -> Self {
        Metric1p1 {
            beta,
            a,
            label: label.into(),
        }
    }

    pub fn parse(label: impl Into<String>, beta: &str, a: &str) -> Result<Self, expr::ParseError> {
        Ok(Metric1p1::new(label, expr::parse_expr(beta)?, expr::parse_expr(a)?))
    }

    pub fn ultrastatic(label: impl Into<String>) -> Self {
        Metric1p1::new(label, Expr::constant(1.0), Expr::constant(1.0))
    }

    pub fn beta_at(&self, t: f64, x: f64) -> f64 {
        self.beta.value(t, x)
    }

    pub fn a_at(&self, t: f64, x: f64) -> f64 {
        self.a.value(t, x)
    }

    /// Local light speed beta/a (coordinate dx/dt of null rays).
    pub fn speed_at(&self, t: f64, x: f64) -> f64 {
        self.beta_at(t, x) / self.a_at(t, x)
    }

    pub fn beta_field(&self) -> ScalarField {
        ScalarField::from_expr(&self.beta)
    }

    pub fn a_field(&self) -> ScalarField {
        ScalarField::from_expr(&self.a)
    }

    /// Timelike covector slope bound a/beta: tau = dt + alpha dx is future
    /// timelike iff |alpha| < a/beta.
    pub fn cone_slope(&self) -> ScalarField {
        ScalarField::from_expr(&expr::div(self.a.clone(), self.beta.clone()))
    }

    pub fn is_time_independent(&self) -> bool {
        !self.beta.depends_on(Var::T) && !self.a.depends_on(Var::T)
    }

    pub fn is_translation_invariant(&self) -> bool {
        !self.beta.depends_on(Var::X) && !self.a.depends_on(Var::X)
    }

    /// Checks positivity at every node and periodicity on every level.
    pub fn validate(&self, grid: &Grid) -> Result<(), GeomError> {
        let period = 2.0 * std::f64::consts::PI;
        for n in 0..=grid.nt {
            let t = grid.t(n);
            for (field, e) in [("beta", &self.beta), ("a", &self.a)] {
                for i in 0..grid.nx {
                    let x = grid.x(i);
                    let v = e.eval(t, x)?;
                    if !(v > 0.0) {
                        return Err(GeomError::NotPositive {
                            label: self.label.clone(),
                            field,
                            value: v,
                            t,
                            x,
                        });
                    }
                }
                let (v0, v1) = (e.eval(t, 0.3)?, e.eval(t, 0.3 + period)?);
                let mismatch = (v0 - v1).abs();
                if mismatch > 1e-12 * v0.abs().max(1.0) {
                    return Err(GeomError::NotPeriodic {
                        label: self.label.clone(),
                        field,
                        mismatch,
                        t,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn max_speed(&self, grid: &Grid) -> f64 {
        let mut v: f64 = 0.0;
        for n in 0..=grid.nt {
            for i in 0..grid.nx {
                v = v.max(self.speed_at(grid.t(n), grid.x(i)));
            }
        }
        v
    }
}

/// Convex combination of the metric tensors: beta^2 and a^2 are interpolated.
pub fn interpolate_metrics(g0: &Metric1p1, g1: &Metric1p1, lam: f64) -> Result<Metric1p1, GeomError> {
    if !(0.0..=1.0).contains(&lam) {
        return Err(GeomError::Domain {
            what: "lam",
            range: "[0, 1]",
            value: lam,
        });
    }
    if lam == 0.0 {
        return Ok(g0.clone());
    }
    if lam == 1.0 {
        return Ok(g1.clone());
    }
    let mix = |e0: &Expr, e1: &Expr| {
        expr::sqrt(expr::add(
            expr::mul(Expr::constant(1.0 - lam), expr::powi(e0.clone(), 2.0)),
            expr::mul(Expr::constant(lam), expr::powi(e1.clone(), 2.0)),
        ))
    };
    Ok(Metric1p1::new(
        format!("{}~{}@{lam}", g0.label, g1.label),
        mix(&g0.beta, &g1.beta),
        mix(&g0.a, &g1.a),
    ))
}

/// True iff the light speed of `g1` nowhere exceeds that of `g0` on the
/// grid nodes. Returns the minimum of beta0/a0 - beta1/a1.
pub fn cone_dominates(g0: &Metric1p1, g1: &Metric1p1, grid: &Grid) -> (bool, f64) {
    let mut margin = f64::INFINITY;
    for n in 0..=grid.nt {
        let t = grid.t(n);
        for i in 0..grid.nx {
            let x = grid.x(i);
            margin = margin.min(g0.speed_at(t, x) - g1.speed_at(t, x));
        }
    }
    (margin >= -1e-14, margin)
}

/// Density of the induced slice volume a dx at time t.
pub fn slice_volume_density(g: &Metric1p1, t: f64, nx: usize) -> Vec<f64> {
    let dx = 2.0 * std::f64::consts::PI / nx as f64;
    (0..nx).map(|i| g.a_at(t, i as f64 * dx)).collect()
}

/// Scalar weight rho(t, x) > 0 with symbolic log-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoWeight {
    pub expr: Expr,
}

impl RhoWeight {
    pub fn one() -> Self {
        RhoWeight {
            expr: Expr::constant(1.0),
        }
    }

    pub fn constant(c: f64) -> Self {
        RhoWeight {
            expr: Expr::constant(c),
        }
    }

    pub fn at(&self, t: f64, x: f64) -> f64 {
        self.expr.value(t, x)
    }

    pub fn is_constant(&self) -> bool {
        self.expr.as_const().is_some()
    }

    pub fn field(&self) -> ScalarField {
        ScalarField::from_expr(&self.expr)
    }

    /// d(rho)/rho along `v`.
    pub fn log_derivative(&self, v: Var) -> Expr {
        expr::div(self.expr.diff(v), self.expr.clone())
    }
}

/// rho = sqrt(a0 / a1) on every slice, so rho^2 vol_1 = vol_0 everywhere.
pub fn rho_from_volumes(g0: &Metric1p1, g1: &Metric1p1) -> RhoWeight {
    if g0.a == g1.a {
        return RhoWeight::one();
    }
    RhoWeight {
        expr: expr::sqrt(expr::div(g0.a.clone(), g1.a.clone())),
    }
}

/// Smooth monotone step from 0 (t <= t_minus) to 1 (t >= t_plus).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiProfile {
    pub t_minus: f64,
    pub t_plus: f64,
}

fn bump_tail(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

pub fn chi_profile(t_minus: f64, t_plus: f64) -> Result<ChiProfile, GeomError> {
    if !(t_minus < t_plus) {
        return Err(GeomError::ChiOrder { t_minus, t_plus });
    }
    Ok(ChiProfile { t_minus, t_plus })
}

impl ChiProfile {
    fn s(&self, t: f64) -> f64 {
        (t - self.t_minus) / (self.t_plus - self.t_minus)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = self.s(t);
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        let (f, g) = (bump_tail(s), bump_tail(1.0 - s));
        f / (f + g)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = self.s(t);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let (f, g) = (bump_tail(s), bump_tail(1.0 - s));
        let (df, dg) = (f / (s * s), g / ((1.0 - s) * (1.0 - s)));
        let ds = (df * g + f * dg) / ((f + g) * (f + g));
        ds / (self.t_plus - self.t_minus)
    }

    /// chi as a t-only scalar field.
    pub fn field(&self) -> ScalarField {
        let c = *self;
        ScalarField::new(true, false, move |t, _| c.eval(t))
    }
}
