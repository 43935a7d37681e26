//! Advanced/retarded Green operators on a grid window, the causal
//! propagator, and checks of their support, duality and exactness.

use std::sync::Arc;

use serde::Serialize;

use crate::geom::{ChiProfile, ScalarField};
use crate::grid::{circle_dist, DerivMode, Grid, GridError, GridField, SliceData};
use crate::shs::{adjoint_system, pairing, volume_density, Direction, SHSystem, SampledSystem, ShsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// G^+: forward solve from zero data at the earliest grid time.
    Advanced,
    /// G^-: backward solve from zero data at the latest grid time.
    Retarded,
}

#[derive(Debug, Clone)]
pub struct GreenOp {
    pub system: Arc<SampledSystem>,
    pub sign: Sign,
}

/// Levels at each window edge that a source must leave empty.
pub const EDGE_LEVELS: usize = 2;

fn check_margin(f: &GridField, sign: Sign) -> Result<(), ShsError> {
    let nt = f.grid.nt;
    let peak = f.max_abs();
    if peak == 0.0 {
        return Ok(());
    }
    let levels: Vec<usize> = match sign {
        Sign::Advanced => (0..EDGE_LEVELS).collect(),
        Sign::Retarded => (nt + 1 - EDGE_LEVELS..=nt).collect(),
    };
    for lev in levels {
        if f.max_abs_level(lev) > 1e-14 * peak {
            let side = match sign {
                Sign::Advanced => "past",
                Sign::Retarded => "future",
            };
            return Err(GridError::Support(format!("source is nonzero at level {lev} on the {side} edge")).into());
        }
    }
    Ok(())
}

impl GreenOp {
    pub fn new(sys: &SHSystem, grid: &Grid, deriv: DerivMode, sign: Sign) -> Result<Self, ShsError> {
        Ok(GreenOp {
            system: Arc::new(SampledSystem::new(sys, grid, deriv)?),
            sign,
        })
    }

    pub fn from_sampled(system: Arc<SampledSystem>, sign: Sign) -> Self {
        GreenOp { system, sign }
    }

    pub fn grid(&self) -> Grid {
        self.system.grid
    }

    pub fn apply(&self, f: &GridField) -> Result<GridField, ShsError> {
        green_apply(self, f)
    }
}

pub fn green_apply(g: &GreenOp, f: &GridField) -> Result<GridField, ShsError> {
    check_margin(f, g.sign)?;
    let zero = SliceData::zeros(g.system.grid.nx, g.system.n);
    let dir = match g.sign {
        Sign::Advanced => Direction::Forward,
        Sign::Retarded => Direction::Backward,
    };
    g.system.solve(Some(f), &zero, dir)
}

/// G f = G^+ f - G^- f.
pub fn causal_propagator(sys: &Arc<SampledSystem>, f: &GridField) -> Result<GridField, ShsError> {
    let plus = green_apply(&GreenOp::from_sampled(sys.clone(), Sign::Advanced), f)?;
    let minus = green_apply(&GreenOp::from_sampled(sys.clone(), Sign::Retarded), f)?;
    Ok(plus.sub(&minus))
}

/// h = S(theta Psi) = theta' A0 Psi for a homogeneous Psi and a smooth
/// step theta; then G h = Psi.
pub fn localize_solution(sys: &SampledSystem, psi: &GridField, theta: &ChiProfile) -> GridField {
    sys.apply_a0_weighted(psi, |t| theta.derivative(t))
}

/// Space-time box: time interval times a periodic arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportBox {
    pub t_min: f64,
    pub t_max: f64,
    pub x_center: f64,
    pub x_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Future,
    Past,
}

pub const LEAKAGE_TOL: f64 = 1e-6;

/// Fraction of sum |field|^2 lying outside the causal future (or past) of
/// the box. The arc grows at the local speed at its edges and is inflated
/// by 3dx.
pub fn check_support(field: &GridField, support: &SupportBox, speed: &ScalarField, side: Side) -> f64 {
    let g = field.grid;
    let slack = 3.0 * g.dx();
    let total: f64 = field.data.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    // arc edges relative to the centre: left (negative) and right
    let (mut left, mut right) = (-support.x_radius, support.x_radius);
    let levels: Vec<usize> = match side {
        Side::Future => (0..=g.nt).collect(),
        Side::Past => (0..=g.nt).rev().collect(),
    };
    let mut outside = 0.0;
    let mut prev_t: Option<f64> = None;
    for lev in levels {
        let t = g.t(lev);
        let started = match side {
            Side::Future => t >= support.t_min - 1e-12,
            Side::Past => t <= support.t_max + 1e-12,
        };
        if started {
            if let Some(t_prev) = prev_t {
                let h = (t - t_prev).abs();
                let grow = |edge: f64, tt: f64| speed.at(tt, support.x_center + edge);
                left -= h * grow(left, t_prev).max(grow(left, t));
                right += h * grow(right, t_prev).max(grow(right, t));
            }
            prev_t = Some(t);
        }
        let half_width = 0.5 * (right - left) + slack;
        let mid = support.x_center + 0.5 * (left + right);
        let full = started && 2.0 * half_width >= two_pi;
        for i in 0..g.nx {
            let inside = started && (full || circle_dist(g.x(i), mid) <= half_width);
            if !inside {
                for comp in 0..field.nc {
                    outside += field.get(lev, i, comp).norm_sqr();
                }
            }
        }
    }
    outside / total
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub relative_defect: f64,
}

/// int <Phi, G^+ Psi> vol against int <G_dag^- Phi, Psi> vol, with G_dag^-
/// the retarded Green operator of the formal adjoint system.
pub fn duality_check(sys: &SHSystem, grid: &Grid, deriv: DerivMode, phi: &GridField, psi: &GridField) -> Result<DualityReport, ShsError> {
    let plus = GreenOp::new(sys, grid, deriv, Sign::Advanced)?;
    let adj_minus = GreenOp::new(&adjoint_system(sys), grid, deriv, Sign::Retarded)?;
    check_margin(phi, Sign::Advanced)?;
    check_margin(psi, Sign::Retarded)?;
    let v = volume_density(&sys.metric);
    let lhs = pairing(&sys.h, &v, phi, &plus.apply(psi)?);
    let rhs = pairing(&sys.h, &v, &adj_minus.apply(phi)?, psi);
    Ok(DualityReport {
        lhs_re: lhs.re,
        lhs_im: lhs.im,
        rhs_re: rhs.re,
        rhs_im: rhs.im,
        relative_defect: (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1e-300),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenIdentityReport {
    pub s_of_g_plus: f64,
    pub s_of_g_minus: f64,
    pub g_plus_of_s: f64,
    pub g_minus_of_s: f64,
    pub s_of_causal: f64,
    pub causal_of_s: f64,
    pub leakage_future: f64,
    pub leakage_past: f64,
    pub mirrored_control: f64,
    pub localized_reconstruction: f64,
}

/// Relative max-norm errors of all defining identities for a bump source
/// `f` with support box `b`, and of G(S(theta Psi)) = Psi for a
/// homogeneous Psi.
pub fn green_identities(
    sys: &Arc<SampledSystem>,
    speed: &ScalarField,
    f: &GridField,
    b: &SupportBox,
    psi: &GridField,
    theta: &ChiProfile,
) -> Result<GreenIdentityReport, ShsError> {
    let plus = GreenOp::from_sampled(sys.clone(), Sign::Advanced);
    let minus = GreenOp::from_sampled(sys.clone(), Sign::Retarded);
    let fnorm = f.max_abs();
    let rel = |x: &GridField| x.max_abs() / fnorm;
    let gp = plus.apply(f)?;
    let gm = minus.apply(f)?;
    let sf = sys.apply(f)?;
    let causal = gp.sub(&gm);
    let h = localize_solution(sys, psi, theta);
    let rebuilt = causal_propagator(sys, &h)?;
    Ok(GreenIdentityReport {
        s_of_g_plus: rel(&sys.apply(&gp)?.sub(f)),
        s_of_g_minus: rel(&sys.apply(&gm)?.sub(f)),
        g_plus_of_s: rel(&plus.apply(&sf)?.sub(f)),
        g_minus_of_s: rel(&minus.apply(&sf)?.sub(f)),
        s_of_causal: rel(&sys.apply(&causal)?),
        causal_of_s: rel(&causal_propagator(sys, &sf)?),
        leakage_future: check_support(&gp, b, speed, Side::Future),
        leakage_past: check_support(&gm, b, speed, Side::Past),
        mirrored_control: check_support(&gp.mirrored_in_time(), b, speed, Side::Past),
        localized_reconstruction: rebuilt.max_diff(psi) / psi.max_abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::dirac_system;
    use crate::geom::{chi_profile, Metric1p1};
    use crate::grid::{bump_source, C64};

    fn setup(m: &Metric1p1, nx: usize, nt: usize) -> (Grid, Arc<SampledSystem>) {
        let g = Grid::new(nx, nt, -2.0, 2.0).unwrap();
        let s = SampledSystem::new(&dirac_system(m), &g, DerivMode::Spectral).unwrap();
        (g, Arc::new(s))
    }

    #[test]
    fn zero_source_gives_zero() {
        let (g, s) = setup(&Metric1p1::ultrastatic("u"), 32, 100);
        let f = GridField::zeros(g, 2, crate::grid::FiberKind::Complex);
        for sign in [Sign::Advanced, Sign::Retarded] {
            assert_eq!(GreenOp::from_sampled(s.clone(), sign).apply(&f).unwrap().max_abs(), 0.0);
        }
        assert_eq!(causal_propagator(&s, &f).unwrap().max_abs(), 0.0);
        assert_eq!(check_support(&f, &SupportBox { t_min: 0.0, t_max: 0.1, x_center: 0.0, x_radius: 0.1 }, &ScalarField::constant(1.0), Side::Future), 0.0);
    }

    #[test]
    fn margins_are_enforced() {
        let (g, s) = setup(&Metric1p1::ultrastatic("u"), 32, 100);
        let mut f = GridField::zeros(g, 2, crate::grid::FiberKind::Complex);
        f.set(1, 3, 0, C64::new(1.0, 0.0));
        let adv = GreenOp::from_sampled(s.clone(), Sign::Advanced);
        let err = adv.apply(&f).unwrap_err();
        assert!(err.to_string().contains("support reaches grid boundary"));
        // a past-compact source is fine for G^+ but not for G^-
        let mut f = GridField::zeros(g, 2, crate::grid::FiberKind::Complex);
        f.set(g.nt, 3, 0, C64::new(1.0, 0.0));
        assert!(adv.apply(&f).is_ok());
        assert!(GreenOp::from_sampled(s, Sign::Retarded).apply(&f).is_err());
    }

    #[test]
    fn identities_on_curved_background() {
        let m = Metric1p1::parse("w", "1 + 0.2*cos(x)*exp(-t^2)", "1.3 + 0.2*sin(x + t)").unwrap();
        let (g, s) = setup(&m, 128, 1200);
        let b = SupportBox { t_min: -0.8, t_max: 0.0, x_center: 3.0, x_radius: 0.9 };
        let f = bump_source(&g, (-0.4, 3.0), (0.4, 0.9), 0, 2).unwrap();
        let h = SliceData::from_fn(128, 2, |x, k| C64::new((x + k as f64).sin(), 0.4 * (2.0 * x).cos()));
        let psi = s.solve(None, &h, Direction::Forward).unwrap();
        let theta = chi_profile(-0.5, 0.5).unwrap();
        let speed = ScalarField::new(true, true, move |t, x| m.speed_at(t, x));
        let r = green_identities(&s, &speed, &f, &b, &psi, &theta).unwrap();
        for v in [r.s_of_g_plus, r.s_of_g_minus, r.g_plus_of_s, r.g_minus_of_s, r.s_of_causal, r.causal_of_s, r.localized_reconstruction] {
            assert!(v < 1e-6, "{r:?}");
        }
        assert!(r.leakage_future < LEAKAGE_TOL && r.leakage_past < LEAKAGE_TOL, "{r:?}");
        assert!(r.mirrored_control > 1e-2, "{r:?}");
    }

    #[test]
    fn duality_with_adjoint_system() {
        let m = Metric1p1::parse("w", "1 + 0.2*cos(x)*exp(-t^2)", "1.3 + 0.2*sin(x + t)").unwrap();
        let g = Grid::new(64, 800, -2.0, 2.0).unwrap();
        let phi = bump_source(&g, (0.5, 1.0), (0.6, 1.2), 1, 2).unwrap();
        let psi = bump_source(&g, (-0.5, 2.0), (0.6, 1.0), 0, 2).unwrap();
        let r = duality_check(&dirac_system(&m), &g, DerivMode::Spectral, &phi, &psi).unwrap();
        assert!(r.relative_defect < 1e-6, "{r:?}");
        assert!(r.lhs_re.abs() + r.lhs_im.abs() > 1e-4, "{r:?}");
    }
}
