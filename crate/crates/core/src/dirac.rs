//! Two-component spinors on diagonal 1+1 metrics: Clifford generators, the
//! Dirac operator as a symmetric hyperbolic system, the lambda-transport
//! isometry kappa, adjunction, and the slice scalar product.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{self, Var};
use crate::geom::{interpolate_metrics, Metric1p1, RhoWeight, ScalarField};
use crate::grid::{slice_integral, FiberKind, Grid, GridField, SliceData, C64, ZERO};
use crate::shs::{c, CMat, MatField, SHSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiracError {
    #[error("Clifford relation {0} violated")]
    Clifford(&'static str),
    #[error("lambda-transport deviates from the identity by {deviation:e} at (t={t}, x={x})")]
    Transport { deviation: f64, t: f64, x: f64 },
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
}

pub fn gamma0() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0), ZERO, ZERO, c(-1.0)])
}

pub fn gamma1() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, c(1.0), c(-1.0), ZERO])
}

/// Constant frame realization with spin product <u, v> = u^* H_spin v.
#[derive(Debug, Clone)]
pub struct SpinorRealization {
    pub gamma: [CMat; 2],
    pub h_spin: CMat,
    pub metric: Metric1p1,
}

const ETA: [f64; 2] = [-1.0, 1.0];

fn max_entry(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}

impl SpinorRealization {
    pub fn new(metric: Metric1p1) -> Self {
        SpinorRealization {
            gamma: [gamma0(), gamma1()],
            h_spin: gamma0(),
            metric,
        }
    }

    /// Clifford relations, symmetry of the generators under the spin
    /// product, and positivity of <gamma(n) ., .>.
    pub fn verify(&self) -> Result<(), DiracError> {
        let id = CMat::identity(2, 2);
        for mu in 0..2 {
            for nu in 0..2 {
                let ac = &self.gamma[mu] * &self.gamma[nu] + &self.gamma[nu] * &self.gamma[mu];
                let eta = if mu == nu { ETA[mu] } else { 0.0 };
                if max_entry(&(ac + &id * c(2.0 * eta))) != 0.0 {
                    return Err(DiracError::Clifford("g(u)g(v) + g(v)g(u) = -2 eta(u,v)"));
                }
            }
            let lhs = self.gamma[mu].adjoint() * &self.h_spin;
            if max_entry(&(lhs - &self.h_spin * &self.gamma[mu])) != 0.0 {
                return Err(DiracError::Clifford("<g(e)u, v> = <u, g(e)v>"));
            }
        }
        let pos = &self.h_spin * &self.gamma[0];
        let e = nalgebra::SymmetricEigen::new(crate::shs::hermitian_part(&pos));
        if e.eigenvalues.iter().any(|v| *v <= 0.0) {
            return Err(DiracError::Clifford("<g(n)u, u> > 0"));
        }
        Ok(())
    }

    pub fn product(&self, u: &[C64], v: &[C64]) -> C64 {
        let mut s = ZERO;
        for r in 0..2 {
            for col in 0..2 {
                s += u[r].conj() * self.h_spin[(r, col)] * v[col];
            }
        }
        s
    }
}

/// Dirac operator D = sum eps_mu gamma(e_mu) nabla_{e_mu} with frame
/// e_0 = beta^{-1} d_t, e_1 = a^{-1} d_x and eps = (-1, +1):
/// A0 = -gamma0 / beta, A1 = gamma1 / a,
/// B = (-C gamma0 + A gamma1) / 2 with acceleration A = beta_x / (a beta)
/// and expansion C = a_t / (beta a).
///
/// The system's fiber metric is -H_spin: with A0 = -gamma0/beta this makes
/// H (A0 + alpha A1) positive on future covectors.
pub fn dirac_system(metric: &Metric1p1) -> SHSystem {
    let (beta, a) = (&metric.beta, &metric.a);
    let ba = expr::mul(beta.clone(), a.clone());
    let accel = expr::div(beta.diff(Var::X), ba.clone());
    let expansion = expr::div(a.diff(Var::T), ba);
    let inv_beta = ScalarField::from_expr(&expr::div(expr::Expr::constant(-1.0), beta.clone()));
    let inv_a = ScalarField::from_expr(&expr::div(expr::Expr::constant(1.0), a.clone()));
    let b0 = ScalarField::from_expr(&expr::mul(expr::Expr::constant(-0.5), expansion));
    let b1 = ScalarField::from_expr(&expr::mul(expr::Expr::constant(0.5), accel));
    let b = MatField::scaled_const(gamma0(), b0).add(&MatField::scaled_const(gamma1(), b1));
    SHSystem {
        label: format!("dirac[{}]", metric.label),
        n: 2,
        a0: MatField::scaled_const(gamma0(), inv_beta),
        a1: MatField::scaled_const(gamma1(), inv_a),
        b,
        h: MatField::constant(-gamma0()),
        metric: metric.clone(),
        fiber_kind: FiberKind::Complex,
    }
}

/// gamma(xi^#) for a covector xi = xi_t dt + xi_x dx, in the frame basis.
pub fn clifford_of_covector(metric: &Metric1p1, xi: (f64, f64), t: f64, x: f64) -> CMat {
    // xi^# = -xi_t / beta^2 d_t + xi_x / a^2 d_x = (-xi_t/beta) e_0 + (xi_x/a) e_1
    let (beta, a) = (metric.beta_at(t, x), metric.a_at(t, x));
    gamma0() * c(-xi.0 / beta) + gamma1() * c(xi.1 / a)
}

/// Connection coefficient omega_{lambda 01} of the lambda-direction for the
/// family g_lambda: g(nabla_lambda e_0, e_1) with
/// nabla_lambda X = d_lambda X + (1/2) g^{-1} (d_lambda g) X.
fn lambda_connection(g0: &Metric1p1, g1: &Metric1p1, lam: f64, t: f64, x: f64) -> (f64, f64) {
    let (b0, b1) = (g0.beta_at(t, x), g1.beta_at(t, x));
    let (a0, a1) = (g0.a_at(t, x), g1.a_at(t, x));
    let bb = (1.0 - lam) * b0 * b0 + lam * b1 * b1;
    let aa = (1.0 - lam) * a0 * a0 + lam * a1 * a1;
    let beta = bb.sqrt();
    // metric components and lambda derivatives (diagonal, off-diagonal zero)
    let (gtt, gxx) = (-bb, aa);
    let (dgtt, dgxx, dgtx) = (-(b1 * b1 - b0 * b0), a1 * a1 - a0 * a0, 0.0);
    // e_0 = (1/beta, 0)
    let de0_t = -(b1 * b1 - b0 * b0) / (2.0 * bb * beta);
    let nabla_t = de0_t + 0.5 * (dgtt / gtt) / beta;
    let nabla_x = 0.5 * (dgtx / gxx) / beta;
    let _ = dgxx;
    let omega01 = gxx * nabla_x / aa.sqrt();
    (omega01, nabla_t)
}

/// kappa by integrating dU/dlambda = -(1/2) omega_{lambda 01} gamma0 gamma1 U
/// with RK4 along the convex family from g0 to g1, then scaled by rho.
/// For diagonal families the connection vanishes and the result is the
/// identity in the frame trivialization; a deviation above 1e-10 is an
/// error.
pub fn kappa_spin(g0: &Metric1p1, g1: &Metric1p1, rho: &RhoWeight, grid: &Grid) -> Result<MatField, DiracError> {
    interpolate_metrics(g0, g1, 0.5)?;
    let gen = gamma0() * gamma1();
    let steps = 16;
    let h = 1.0 / steps as f64;
    let t_dep = !g0.is_time_independent() || !g1.is_time_independent();
    let x_dep = !g0.is_translation_invariant() || !g1.is_translation_invariant();
    let nts = if t_dep { grid.nt + 1 } else { 1 };
    let nxs = if x_dep { grid.nx } else { 1 };
    for n in 0..nts {
        for i in 0..nxs {
            let (t, x) = (grid.t(n), grid.x(i));
            let rhs = |lam: f64, u: &CMat| -> CMat {
                let (om, _) = lambda_connection(g0, g1, lam, t, x);
                &gen * u * c(-0.5 * om)
            };
            let mut u = CMat::identity(2, 2);
            for s in 0..steps {
                let l = s as f64 * h;
                let k1 = rhs(l, &u);
                let k2 = rhs(l + 0.5 * h, &(&u + &k1 * c(0.5 * h)));
                let k3 = rhs(l + 0.5 * h, &(&u + &k2 * c(0.5 * h)));
                let k4 = rhs(l + h, &(&u + &k3 * c(h)));
                u += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
            }
            let deviation = max_entry(&(u - CMat::identity(2, 2)));
            let (_, parallel) = lambda_connection(g0, g1, 0.5, t, x);
            let deviation = deviation.max(parallel.abs());
            if deviation > 1e-10 {
                return Err(DiracError::Transport { deviation, t, x });
            }
        }
    }
    Ok(MatField::scaled_const(CMat::identity(2, 2), rho.field()))
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaReport {
    /// max |kappa gamma_mu - gamma_mu kappa| over sampled nodes.
    pub clifford_defect: f64,
    /// max |kappa^* H_spin kappa - H_spin| over sampled nodes.
    pub isometry_defect: f64,
    pub nodes: usize,
}

/// Clifford intertwining and spin-product isometry of kappa (rho = 1) on
/// up to 65 x 64 grid nodes.
pub fn kappa_properties(g0: &Metric1p1, g1: &Metric1p1, grid: &Grid) -> Result<KappaReport, DiracError> {
    let k = kappa_spin(g0, g1, &RhoWeight::one(), grid)?;
    let h = gamma0();
    let (nts, nxs) = ((grid.nt + 1).min(65), grid.nx.min(64));
    let mut r = KappaReport {
        clifford_defect: 0.0,
        isometry_defect: 0.0,
        nodes: nts * nxs,
    };
    for a in 0..nts {
        let n = if nts == 1 { 0 } else { a * grid.nt / (nts - 1) };
        for b in 0..nxs {
            let km = k.at(grid.t(n), grid.x(b * grid.nx / nxs));
            for gm in [gamma0(), gamma1()] {
                r.clifford_defect = r.clifford_defect.max(max_entry(&(&km * &gm - &gm * &km)));
            }
            r.isometry_defect = r.isometry_defect.max(max_entry(&(km.adjoint() * &h * &km - &h)));
        }
    }
    Ok(r)
}

/// psi -> psi^* H_spin as a cospinor slice (component c holds the c-th
/// entry of the row vector).
pub fn adjunction(psi: &SliceData, h_spin: &CMat) -> SliceData {
    let mut out = SliceData::zeros(psi.nx, psi.nc);
    for i in 0..psi.nx {
        for col in 0..psi.nc {
            let mut s = ZERO;
            for r in 0..psi.nc {
                s += psi.get(i, r).conj() * h_spin[(r, col)];
            }
            out.set(i, col, s);
        }
    }
    out
}

/// Pointwise evaluation of a cospinor on a spinor.
pub fn evaluate_cospinor(cos: &SliceData, phi: &SliceData) -> Vec<C64> {
    (0..cos.nx)
        .map(|i| (0..cos.nc).map(|k| cos.get(i, k) * phi.get(i, k)).sum())
        .collect()
}

/// (psi, phi) = int <psi, gamma(n) phi> a dx on the slice at level `lev`.
pub fn spin_scalar_product(real: &SpinorRealization, psi: &GridField, phi: &GridField, lev: usize) -> C64 {
    let g = psi.grid;
    let t = g.t(lev);
    let gn = &real.h_spin * &real.gamma[0];
    let mut w = vec![ZERO; g.nx];
    for (i, wi) in w.iter_mut().enumerate() {
        for r in 0..2 {
            for col in 0..2 {
                *wi += psi.get(lev, i, r).conj() * gn[(r, col)] * phi.get(lev, i, col);
            }
        }
    }
    let density: Vec<f64> = (0..g.nx).map(|i| real.metric.a_at(t, g.x(i))).collect();
    slice_integral(&w, &density)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    pub relative_drift: f64,
}

/// Relative spread of a slice functional over all levels.
pub fn drift(values: impl Iterator<Item = C64>) -> DriftReport {
    let v: Vec<C64> = values.collect();
    let initial = v[0].norm();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut spread: f64 = 0.0;
    for z in &v {
        lo = lo.min(z.re);
        hi = hi.max(z.re);
        spread = spread.max((z - v[0]).norm());
    }
    DriftReport {
        initial,
        min: lo,
        max: hi,
        relative_drift: spread / initial.max(1e-300),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DerivMode, Grid};
    use crate::shs::{check_condition_h, check_condition_s, principal_symbol, Direction, SampledSystem};

    fn cosmological() -> Metric1p1 {
        Metric1p1::parse("cosmo", "1", "1 + 0.3*tanh(t)").unwrap()
    }

    #[test]
    fn realization_invariants() {
        SpinorRealization::new(Metric1p1::ultrastatic("u")).verify().unwrap();
        let mut bad = SpinorRealization::new(Metric1p1::ultrastatic("u"));
        bad.h_spin = -gamma0();
        assert!(bad.verify().is_err());
    }

    #[test]
    fn symbol_conditions_and_clifford_symbol() {
        let g = Grid::new(16, 20, -2.0, 2.0).unwrap();
        for m in [Metric1p1::ultrastatic("u"), cosmological(), Metric1p1::parse("w", "1 + 0.2*cos(x)", "1.3 + 0.2*sin(x + t)").unwrap()] {
            let d = dirac_system(&m);
            assert!(check_condition_s(&d, &g).passed);
            let h = check_condition_h(&d, &g, 17);
            assert!(h.passed && h.value > 0.0);
            // sigma_D(xi) = -gamma(xi^#) for the sign convention eps_0 = -1
            // applied with A0 = -gamma0/beta; check the transformation law.
            let (t, x) = (0.3, 1.1);
            let s = principal_symbol(&d, (0.7, -0.4), t, x);
            let gx = clifford_of_covector(&m, (0.7, -0.4), t, x);
            assert!(max_entry(&(s - gx)) < 1e-14);
        }
    }

    #[test]
    fn h_margin_shrinks_toward_the_cone() {
        let m = cosmological();
        let d = dirac_system(&m);
        let (t, x) = (0.5, 0.0);
        let slope = m.a_at(t, x) / m.beta_at(t, x);
        let mut prev = f64::INFINITY;
        for frac in [0.0, 0.5, 0.9, 0.99, 0.999, 1.0] {
            let e = crate::shs::min_symbol_eigenvalue(&d, t, x, frac * slope);
            assert!(e < prev);
            prev = e;
        }
        assert!(prev.abs() < 1e-14);
    }

    #[test]
    fn square_is_wave_operator_on_plane_waves() {
        let g = Grid::new(32, 400, 0.0, 1.0).unwrap();
        let d = SampledSystem::new(&dirac_system(&Metric1p1::ultrastatic("u")), &g, DerivMode::Spectral).unwrap();
        let (k, w) = (3.0, 2.0);
        let psi = GridField::from_fn(g, 2, FiberKind::Complex, |t, x, comp| {
            C64::from_polar(1.0 + comp as f64, k * x - w * t)
        });
        let dd = d.apply(&d.apply(&psi).unwrap()).unwrap();
        let expect = psi.scale(c(-w * w + k * k));
        let mut worst: f64 = 0.0;
        for n in 10..=g.nt - 10 {
            for i in 0..g.nx {
                for comp in 0..2 {
                    worst = worst.max((dd.get(n, i, comp) - expect.get(n, i, comp)).norm());
                }
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn adjoint_is_minus_dirac() {
        let m = Metric1p1::parse("w", "1 + 0.2*cos(x)*exp(-t^2)", "1.3 + 0.2*sin(x + t)").unwrap();
        let d = dirac_system(&m);
        let adj = crate::shs::adjoint_system(&d);
        for (t, x) in [(0.1, 0.2), (-0.7, 2.5), (1.3, 4.0)] {
            assert!(max_entry(&(adj.a0.at(t, x) + d.a0.at(t, x))) < 1e-12);
            assert!(max_entry(&(adj.a1.at(t, x) + d.a1.at(t, x))) < 1e-12);
            assert!(max_entry(&(adj.b.at(t, x) + d.b.at(t, x))) < 1e-9);
        }
    }

    #[test]
    fn kappa_examples() {
        let g = Grid::new(16, 10, -1.0, 1.0).unwrap();
        let u = Metric1p1::ultrastatic("u");
        let k = kappa_spin(&u, &u, &RhoWeight::one(), &g).unwrap();
        assert_eq!(k.at(0.1, 0.2), CMat::identity(2, 2));
        let g1 = Metric1p1::parse("g1", "1 + 0.1*sin(x)", "(1 + 0.2*sin(x)*exp(-t^2))/1.2").unwrap();
        let k = kappa_spin(&u, &g1, &RhoWeight::one(), &g).unwrap();
        let real = SpinorRealization::new(u.clone());
        let (p, q) = ([C64::new(0.3, -1.0), C64::new(2.0, 0.5)], [C64::new(-0.1, 0.4), C64::new(1.0, 1.0)]);
        let km = k.at(0.4, 1.0);
        let kp: Vec<C64> = (0..2).map(|r| km[(r, 0)] * p[0] + km[(r, 1)] * p[1]).collect();
        let kq: Vec<C64> = (0..2).map(|r| km[(r, 0)] * q[0] + km[(r, 1)] * q[1]).collect();
        assert!((real.product(&kp, &kq) - real.product(&p, &q)).norm() < 1e-10);
        for gm in [gamma0(), gamma1()] {
            assert!(max_entry(&(&km * &gm - &gm * &km)) < 1e-10);
        }
        let rho = crate::geom::rho_from_volumes(&u, &g1);
        let kr = kappa_spin(&u, &g1, &rho, &g).unwrap();
        assert!((kr.at(0.0, 0.5)[(0, 0)].re - rho.at(0.0, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn adjunction_examples() {
        let h = gamma0();
        let psi = SliceData::from_fn(8, 2, |x, k| C64::new(x.sin(), k as f64 + x.cos()));
        let phi = SliceData::from_fn(8, 2, |x, k| C64::new(1.0 - k as f64, 2.0 * x));
        let zero = adjunction(&SliceData::zeros(8, 2), &h);
        assert_eq!(zero.max_abs(), 0.0);
        let mut ipsi = psi.clone();
        ipsi.data.iter_mut().for_each(|v| *v *= C64::i());
        let a = adjunction(&ipsi, &h);
        let b = adjunction(&psi, &h);
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - (-C64::i()) * v).norm() < 1e-15);
        }
        let real = SpinorRealization::new(Metric1p1::ultrastatic("u"));
        let ev = evaluate_cospinor(&b, &phi);
        for i in 0..8 {
            let p = [psi.get(i, 0), psi.get(i, 1)];
            let q = [phi.get(i, 0), phi.get(i, 1)];
            assert_eq!(ev[i], real.product(&p, &q));
        }
    }

    #[test]
    fn scalar_product_is_conserved() {
        let m = Metric1p1::parse("w", "1 + 0.2*cos(x)*exp(-t^2)", "1.3 + 0.2*sin(x + t)").unwrap();
        let g = Grid::new(64, 800, -1.0, 1.0).unwrap();
        let s = SampledSystem::new(&dirac_system(&m), &g, DerivMode::Spectral).unwrap();
        let h1 = SliceData::from_fn(64, 2, |x, k| C64::new((x + k as f64).sin(), 0.3 * (2.0 * x).cos()));
        let h2 = SliceData::from_fn(64, 2, |x, k| C64::new(0.5 * (x * (k + 1) as f64).cos(), 0.2));
        let psi = s.solve(None, &h1, Direction::Forward).unwrap();
        let phi = s.solve(None, &h2, Direction::Forward).unwrap();
        let real = SpinorRealization::new(m);
        let pp = spin_scalar_product(&real, &psi, &psi, 0);
        assert!(pp.re > 0.0 && pp.im.abs() < 1e-14);
        let pq = spin_scalar_product(&real, &psi, &phi, 0);
        let qp = spin_scalar_product(&real, &phi, &psi, 0);
        assert!((pq - qp.conj()).norm() < 1e-14);
        let d = drift((0..=g.nt).map(|n| spin_scalar_product(&real, &psi, &phi, n)));
        assert!(d.relative_drift < 1e-6, "{:?}", d);
        let d = drift((0..=g.nt).map(|n| spin_scalar_product(&real, &psi, &psi, n)));
        assert!(d.relative_drift < 1e-6, "{:?}", d);
    }
}
