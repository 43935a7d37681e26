//! Intertwining operators R = R_- R_+ kappa^rho between the solution
//! spaces of two symmetric hyperbolic systems, their inverses, and the
//! verification quantities (intertwining, round trip, conservation,
//! support bookkeeping, dual intertwiner).

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dirac::{dirac_system, kappa_spin, spin_scalar_product, DiracError, SpinorRealization};
use crate::geom::{cone_dominates, ChiProfile, GeomError, Metric1p1, RhoWeight};
use crate::green::{GreenOp, Sign};
use crate::grid::{DerivMode, Grid, GridField, SliceData};
use crate::shs::{
    adjoint_system, conjugate_system, interpolate_systems, pairing, volume_density, Direction, MatField, SHSystem,
    SampledSystem, ShsError,
};
use crate::wave::{jet_transport, symplectic_form, SecondOrderOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MollerError {
    #[error("chi window [{t_minus}, {t_plus}] needs margins of at least {margin} inside [{t0}, {t1}]")]
    Window {
        t_minus: f64,
        t_plus: f64,
        t0: f64,
        t1: f64,
        margin: f64,
    },
    #[error("cone domination fails: g1 light speed falls below g0 by {0:e}")]
    Cone(f64),
    #[error(transparent)]
    Shs(#[from] ShsError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
}

/// Minimal margin of the chi window inside the grid window, as a fraction
/// of the window length.
pub const CHI_MARGIN: f64 = 0.1;

pub fn check_chi_window(chi: &ChiProfile, grid: &Grid) -> Result<(), MollerError> {
    let margin = CHI_MARGIN * (grid.t1 - grid.t0);
    if chi.t_minus - grid.t0 < margin || grid.t1 - chi.t_plus < margin {
        return Err(MollerError::Window {
            t_minus: chi.t_minus,
            t_plus: chi.t_plus,
            t0: grid.t0,
            t1: grid.t1,
            margin,
        });
    }
    Ok(())
}

/// g1's cone must contain g0's (g1 light speed >= g0 light speed).
pub fn check_cones(g0: &Metric1p1, g1: &Metric1p1, grid: &Grid) -> Result<(), MollerError> {
    let (ok, margin) = cone_dominates(g1, g0, grid);
    if ok {
        Ok(())
    } else {
        Err(MollerError::Cone(-margin))
    }
}

#[derive(Debug, Clone)]
pub struct MollerMap {
    pub grid: Grid,
    pub deriv: DerivMode,
    pub chi: ChiProfile,
    pub rho: RhoWeight,
    pub sys0_on_e1: SHSystem,
    pub sys1: SHSystem,
    pub sys_chi: SHSystem,
    /// Full fiber map kappa^rho and its inverse.
    pub kappa: MatField,
    pub kappa_inv: MatField,
    s01: Arc<SampledSystem>,
    s1: Arc<SampledSystem>,
    schi: Arc<SampledSystem>,
}

impl MollerMap {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        sys0_on_e1: SHSystem,
        sys1: SHSystem,
        sys_chi: SHSystem,
        kappa: MatField,
        chi: ChiProfile,
        rho: RhoWeight,
        grid: &Grid,
        deriv: DerivMode,
    ) -> Result<Self, MollerError> {
        check_chi_window(&chi, grid)?;
        kappa.check_invertible(grid, "kappa")?;
        let s01 = Arc::new(SampledSystem::new(&sys0_on_e1, grid, deriv)?);
        let s1 = Arc::new(SampledSystem::new(&sys1, grid, deriv)?);
        let schi = Arc::new(SampledSystem::new(&sys_chi, grid, deriv)?);
        Ok(MollerMap {
            grid: *grid,
            deriv,
            chi,
            rho,
            kappa_inv: kappa.inverse(),
            kappa,
            sys0_on_e1,
            sys1,
            sys_chi,
            s01,
            s1,
            schi,
        })
    }

    /// Generic construction: sys0 is transported by kappa^rho = rho kappa.
    pub fn new(
        sys0: &SHSystem,
        sys1: &SHSystem,
        kappa: &MatField,
        chi: ChiProfile,
        rho: RhoWeight,
        grid: &Grid,
        deriv: DerivMode,
    ) -> Result<Self, MollerError> {
        check_cones(&sys0.metric, &sys1.metric, grid)?;
        let sys01 = conjugate_system(sys0, kappa, &rho, grid, format!("{}^rho", sys0.label))?;
        let sys_chi = interpolate_systems(&sys01, sys1, &chi)?;
        let full = kappa.scale(&rho.field());
        MollerMap::from_parts(sys01, sys1.clone(), sys_chi, full, chi, rho, grid, deriv)
    }

    /// Dirac operators of g0 and g1 with kappa from lambda-transport.
    pub fn dirac(g0: &Metric1p1, g1: &Metric1p1, chi: ChiProfile, rho: RhoWeight, grid: &Grid, deriv: DerivMode) -> Result<Self, MollerError> {
        let kappa = kappa_spin(g0, g1, &RhoWeight::one(), grid)?;
        MollerMap::new(&dirac_system(g0), &dirac_system(g1), &kappa, chi, rho, grid, deriv)
    }

    /// Map between the adjoint Dirac systems (used for the dual intertwiner).
    pub fn dirac_dual(g0: &Metric1p1, g1: &Metric1p1, chi: ChiProfile, rho: RhoWeight, grid: &Grid, deriv: DerivMode) -> Result<Self, MollerError> {
        let kappa = kappa_spin(g0, g1, &RhoWeight::one(), grid)?;
        let (a0, a1) = (adjoint_system(&dirac_system(g0)), adjoint_system(&dirac_system(g1)));
        MollerMap::new(&a0, &a1, &kappa, chi, rho, grid, deriv)
    }

    /// Wave operators on jets: P01 = rho P0 rho^{-1}, P_chi the coefficient
    /// blend, transport by the jet of rho u.
    pub fn wave(p0: &SecondOrderOp, p1: &SecondOrderOp, chi: ChiProfile, rho: RhoWeight, grid: &Grid, deriv: DerivMode) -> Result<Self, MollerError> {
        check_cones(&p0.metric, &p1.metric, grid)?;
        let p01 = p0.conjugate(&rho, format!("{}^rho", p0.label));
        let pchi = p01.blend(p1, &chi);
        MollerMap::from_parts(p01.reduce(), p1.reduce(), pchi.reduce(), jet_transport(&rho), chi, rho, grid, deriv)
    }

    pub fn transport(&self, psi0: &GridField) -> GridField {
        self.kappa.apply(psi0)
    }

    pub fn transport_inverse(&self, psi1: &GridField) -> GridField {
        self.kappa_inv.apply(psi1)
    }

    /// (S_1 - S_{0,1}) psi.
    pub fn difference(&self, psi: &GridField) -> Result<GridField, ShsError> {
        Ok(self.s1.apply(psi)?.sub(&self.s01.apply(psi)?))
    }

    fn chi_weighted(&self, f: &GridField) -> GridField {
        let chi = self.chi;
        f.weighted_in_time(move |t| chi.eval(t))
    }

    fn one_minus_chi_weighted(&self, f: &GridField) -> GridField {
        let chi = self.chi;
        f.weighted_in_time(move |t| 1.0 - chi.eval(t))
    }

    fn green(&self, s: &Arc<SampledSystem>, sign: Sign) -> GreenOp {
        GreenOp::from_sampled(s.clone(), sign)
    }

    /// R_+ = Id - G_chi^+ chi (S_1 - S_{0,1}).
    pub fn apply_plus(&self, psi: &GridField) -> Result<GridField, ShsError> {
        let src = self.chi_weighted(&self.difference(psi)?);
        Ok(psi.sub(&self.green(&self.schi, Sign::Advanced).apply(&src)?))
    }

    /// R_- = Id - G_1^- (1 - chi)(S_1 - S_{0,1}).
    pub fn apply_minus(&self, psi: &GridField) -> Result<GridField, ShsError> {
        let src = self.one_minus_chi_weighted(&self.difference(psi)?);
        Ok(psi.sub(&self.green(&self.s1, Sign::Retarded).apply(&src)?))
    }

    /// R_-^{-1} = Id + G_chi^- (1 - chi)(S_1 - S_{0,1}).
    pub fn apply_minus_inverse(&self, psi: &GridField) -> Result<GridField, ShsError> {
        let src = self.one_minus_chi_weighted(&self.difference(psi)?);
        Ok(psi.add(&self.green(&self.schi, Sign::Retarded).apply(&src)?))
    }

    /// R_+^{-1} = Id + G_{0,1}^+ chi (S_1 - S_{0,1}).
    pub fn apply_plus_inverse(&self, psi: &GridField) -> Result<GridField, ShsError> {
        let src = self.chi_weighted(&self.difference(psi)?);
        Ok(psi.add(&self.green(&self.s01, Sign::Advanced).apply(&src)?))
    }

    /// R psi0 = R_- R_+ kappa^rho psi0.
    pub fn apply(&self, psi0: &GridField) -> Result<GridField, ShsError> {
        self.apply_minus(&self.apply_plus(&self.transport(psi0))?)
    }

    /// R^{-1} psi1 = kappa^{-rho} R_+^{-1} R_-^{-1} psi1.
    pub fn inverse_apply(&self, psi1: &GridField) -> Result<GridField, ShsError> {
        Ok(self.transport_inverse(&self.apply_plus_inverse(&self.apply_minus_inverse(psi1)?)?))
    }

    /// Homogeneous solution of S_0 with Cauchy data h at the earliest grid
    /// time (solved as S_{0,1} and pulled back by kappa^{-rho}).
    pub fn solve_source_system(&self, h: &SliceData) -> Result<GridField, ShsError> {
        self.solve_source_from(h, 0)
    }

    /// Homogeneous solution of S_0 with Cauchy data h at grid level `level`.
    pub fn solve_source_from(&self, h: &SliceData, level: usize) -> Result<GridField, ShsError> {
        let data = transport_slice(&self.kappa, h, &self.grid, self.grid.t(level));
        let psi01 = self.s01.solve_from(None, &data, level)?;
        Ok(self.transport_inverse(&psi01))
    }

    /// Homogeneous solution of S_1 with data h at grid level `level`.
    pub fn solve_target_from(&self, h: &SliceData, level: usize) -> Result<GridField, ShsError> {
        self.s1.solve_from(None, h, level)
    }

    /// Homogeneous solution of S_1 with data h at the earliest grid time.
    pub fn solve_target_system(&self, h: &SliceData) -> Result<GridField, ShsError> {
        self.s1.solve(None, h, Direction::Forward)
    }

    /// ||S_1(R psi0) - kappa^rho S_0 psi0|| / ||psi0||, with
    /// kappa^rho S_0 psi0 = S_{0,1} kappa^rho psi0.
    pub fn intertwining_residual(&self, psi0: &GridField, r_psi: &GridField) -> Result<f64, ShsError> {
        let lhs = self.s1.apply(r_psi)?;
        let rhs = self.s01.apply(&self.transport(psi0))?;
        Ok(lhs.max_diff(&rhs) / psi0.max_abs())
    }

    /// ||R^{-1} R psi0 - psi0|| / ||psi0||.
    pub fn roundtrip_residual(&self, psi0: &GridField, r_psi: &GridField) -> Result<f64, ShsError> {
        Ok(self.inverse_apply(r_psi)?.max_diff(psi0) / psi0.max_abs())
    }

    /// ||R(R^{-1} psi1) - psi1|| / ||psi1||.
    pub fn reverse_roundtrip_residual(&self, psi1: &GridField) -> Result<f64, ShsError> {
        Ok(self.apply(&self.inverse_apply(psi1)?)?.max_diff(psi1) / psi1.max_abs())
    }

    /// Support bookkeeping: R_+ psi' - psi' must vanish for t <= t_minus and
    /// R psi - R_+ psi' for t >= t_plus. Returns the fraction of squared
    /// mass of both corrections outside those regions' complements.
    pub fn support_leakage(&self, psi0: &GridField) -> Result<f64, ShsError> {
        let psi = self.transport(psi0);
        let plus = self.apply_plus(&psi)?;
        let full = self.apply_minus(&plus)?;
        let (c_plus, c_minus) = (plus.sub(&psi), full.sub(&plus));
        let g = self.grid;
        let mass = |f: &GridField, keep: &dyn Fn(f64) -> bool| -> (f64, f64) {
            let (mut bad, mut total) = (0.0, 0.0);
            for n in 0..=g.nt {
                let m: f64 = f.level(n).iter().map(|v| v.norm_sqr()).sum();
                total += m;
                if !keep(g.t(n)) {
                    bad += m;
                }
            }
            (bad, total)
        };
        let (tm, tp) = (self.chi.t_minus, self.chi.t_plus);
        let (b1, t1) = mass(&c_plus, &|t| t > tm);
        let (b2, t2) = mass(&c_minus, &|t| t < tp);
        let total = t1 + t2;
        Ok(if total == 0.0 { 0.0 } else { (b1 + b2) / total })
    }

    /// R_+ psi' against the S_chi evolution of psi' data at the earliest
    /// time, on slices t >= t_plus (relative max norm).
    pub fn future_form_defect(&self, psi0: &GridField) -> Result<f64, ShsError> {
        let psi = self.transport(psi0);
        let plus = self.apply_plus(&psi)?;
        let direct = self.schi.solve(None, &psi.slice(0), Direction::Forward)?;
        let g = self.grid;
        let mut worst: f64 = 0.0;
        for n in 0..=g.nt {
            if g.t(n) >= self.chi.t_plus {
                for (a, b) in plus.level(n).iter().zip(direct.level(n)) {
                    worst = worst.max((a - b).norm());
                }
            }
        }
        Ok(worst / psi.max_abs())
    }
}

/// Pointwise M(t, x) h(x) on the slice at time t.
fn transport_slice(m: &MatField, h: &SliceData, grid: &Grid, t: f64) -> SliceData {
    let mut out = SliceData::zeros(h.nx, h.nc);
    for i in 0..h.nx {
        let k = m.at(t, grid.x(i));
        for r in 0..h.nc {
            let mut acc = crate::grid::ZERO;
            for col in 0..h.nc {
                acc += k[(r, col)] * h.get(i, col);
            }
            out.set(i, r, acc);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub before_re: f64,
    pub before_im: f64,
    pub after_re: f64,
    pub after_im: f64,
    pub relative_defect: f64,
    /// (psi, phi)_0 / (R psi, R phi)_1 (real parts).
    pub ratio: f64,
}

/// (psi0, phi0)_0 on the earliest g0 slice against (R psi0, R phi0)_1 on
/// the latest g1 slice.
pub fn conserve_dirac(m: &MollerMap, g0: &Metric1p1, g1: &Metric1p1, psi0: &GridField, phi0: &GridField) -> Result<ConservationReport, ShsError> {
    let (r0, r1) = (SpinorRealization::new(g0.clone()), SpinorRealization::new(g1.clone()));
    let before = spin_scalar_product(&r0, psi0, phi0, 0);
    let (rp, rf) = (m.apply(psi0)?, m.apply(phi0)?);
    let after = spin_scalar_product(&r1, &rp, &rf, m.grid.nt);
    Ok(conservation_report(before, after))
}

/// Relative defect and real-part ratio of a conserved pairing.
pub fn conservation_report(before: crate::grid::C64, after: crate::grid::C64) -> ConservationReport {
    let scale = before.norm();
    ConservationReport {
        before_re: before.re,
        before_im: before.im,
        after_re: after.re,
        after_im: after.im,
        relative_defect: if scale == 0.0 { (before - after).norm() } else { (before - after).norm() / scale },
        ratio: if after.re == 0.0 { f64::NAN } else { before.re / after.re },
    }
}

/// sigma_0(u, v) on the earliest slice against sigma_1(R u, R v) on the
/// latest, for jet solutions.
pub fn conserve_wave(m: &MollerMap, g0: &Metric1p1, g1: &Metric1p1, u: &GridField, v: &GridField) -> Result<ConservationReport, ShsError> {
    let before = symplectic_form(g0, u, v, 0)?;
    let (ru, rv) = (m.apply(u)?, m.apply(v)?);
    let after = symplectic_form(g1, &ru, &rv, m.grid.nt)?;
    Ok(conservation_report(crate::grid::C64::new(before, 0.0), crate::grid::C64::new(after, 0.0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct DualReport {
    /// max over test sections of |int Y_1(R' phi)(S_1 zeta) - int Y_0(phi)(S_0 kappa^{-1} zeta)|,
    /// normalized by ||R' phi||_2 ||S_1 zeta||_2.
    pub pairing_residual: f64,
    /// ||S_1^dag R' phi|| / ||phi||.
    pub adjoint_residual: f64,
}

/// Dual intertwiner check: `dual` maps ker S_0^dag to ker S_1^dag; the
/// adjunction Y (psi -> psi^* H) turns its output into a cospinor field
/// annihilated by the dual operator S_1^*, tested by pairing with
/// compactly supported sections zeta.
pub fn dual_intertwiner_check(
    dual: &MollerMap,
    g0: &Metric1p1,
    g1: &Metric1p1,
    phi0: &GridField,
    tests: &[GridField],
) -> Result<DualReport, ShsError> {
    let grid = dual.grid;
    let rphi = dual.apply(phi0)?;
    let (d0, d1) = (dirac_system(g0), dirac_system(g1));
    let s0 = SampledSystem::new(&d0, &grid, dual.deriv)?;
    let s1 = SampledSystem::new(&d1, &grid, dual.deriv)?;
    let spin = MatField::constant(crate::dirac::gamma0());
    let (v0, v1) = (volume_density(g0), volume_density(g1));
    let l2 = |f: &GridField| f.l2();
    let mut worst: f64 = 0.0;
    for zeta in tests {
        let s1z = s1.apply(zeta)?;
        let lhs = pairing(&spin, &v1, &rphi, &s1z);
        let rhs = pairing(&spin, &v0, phi0, &s0.apply(&dual.transport_inverse(zeta))?);
        worst = worst.max((lhs - rhs).norm() / (l2(&rphi) * l2(&s1z)).max(1e-300));
    }
    let adj1 = SampledSystem::new(&dual.sys1, &grid, dual.deriv)?;
    Ok(DualReport {
        pairing_residual: worst,
        adjoint_residual: adj1.apply(&rphi)?.max_abs() / phi0.max_abs(),
    })
}

/// Verification report for a Moller map.
#[derive(Debug, Clone, Serialize)]
pub struct MollerReport {
    pub intertwining_residual: f64,
    pub roundtrip_residual: f64,
    pub conservation_ratio: f64,
    pub support_leakage: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{chi_profile, rho_from_volumes};
    use crate::grid::{bump_source, random_smooth_slice, FiberKind};
    use crate::wave::WaveOperator;

    fn g1() -> Metric1p1 {
        Metric1p1::parse("g1", "1", "(1 + 0.2*sin(x)*exp(-t^2))/1.2").unwrap()
    }

    fn grid() -> Grid {
        Grid::new(32, 800, -2.0, 2.0).unwrap()
    }

    fn chi() -> ChiProfile {
        chi_profile(-1.0, 1.0).unwrap()
    }

    #[test]
    fn window_and_cone_preconditions() {
        let g = grid();
        let u = Metric1p1::ultrastatic("u");
        let bad = chi_profile(-1.9, 1.0).unwrap();
        assert!(matches!(MollerMap::dirac(&u, &g1(), bad, RhoWeight::one(), &g, DerivMode::Spectral), Err(MollerError::Window { .. })));
        assert!(matches!(MollerMap::dirac(&g1(), &u, chi(), RhoWeight::one(), &g, DerivMode::Spectral), Err(MollerError::Cone(_))));
    }

    #[test]
    fn identical_systems_give_identity() {
        let g = grid();
        let u = Metric1p1::ultrastatic("u");
        let m = MollerMap::dirac(&u, &u, chi(), RhoWeight::one(), &g, DerivMode::Spectral).unwrap();
        let psi = m.solve_source_system(&random_smooth_slice(1, 32, 2, 4, FiberKind::Complex)).unwrap();
        let r = m.apply(&psi).unwrap();
        assert!(r.max_diff(&psi) < 1e-10 * psi.max_abs());
        assert!(m.inverse_apply(&psi).unwrap().max_diff(&psi) < 1e-10 * psi.max_abs());
    }

    #[test]
    fn dirac_intertwining_and_roundtrip() {
        let g = grid();
        let (g0, g1) = (Metric1p1::ultrastatic("u"), g1());
        let rho = rho_from_volumes(&g0, &g1);
        let m = MollerMap::dirac(&g0, &g1, chi(), rho, &g, DerivMode::Spectral).unwrap();
        let psi = m.solve_source_system(&random_smooth_slice(7, 32, 2, 4, FiberKind::Complex)).unwrap();
        let phi = m.solve_source_system(&random_smooth_slice(8, 32, 2, 4, FiberKind::Complex)).unwrap();
        let r = m.apply(&psi).unwrap();
        let inter = m.intertwining_residual(&psi, &r).unwrap();
        let round = m.roundtrip_residual(&psi, &r).unwrap();
        assert!(inter < 1e-5 && round < 1e-5, "{inter} {round}");
        let psi1 = m.solve_target_system(&random_smooth_slice(9, 32, 2, 4, FiberKind::Complex)).unwrap();
        assert!(m.reverse_roundtrip_residual(&psi1).unwrap() < 1e-5);
        // linearity
        let z = crate::grid::C64::new(0.3, -1.1);
        let lhs = m.apply(&psi.axpy(z, &phi)).unwrap();
        let rhs = r.axpy(z, &m.apply(&phi).unwrap());
        assert!(lhs.max_diff(&rhs) < 1e-12 * lhs.max_abs());
        assert!(m.support_leakage(&psi).unwrap() < 1e-20);
        assert!(m.future_form_defect(&psi).unwrap() < 1e-6);
        let c = conserve_dirac(&m, &g0, &g1, &psi, &phi).unwrap();
        assert!(c.relative_defect < 1e-5, "{c:?}");
        let zero = GridField::zeros(g, 2, FiberKind::Complex);
        let c0 = conserve_dirac(&m, &g0, &g1, &zero, &zero).unwrap();
        assert_eq!((c0.before_re, c0.after_re), (0.0, 0.0));
    }

    #[test]
    fn conservation_negative_control() {
        let g = grid();
        let g0 = Metric1p1::parse("a4", "1", "4").unwrap();
        let g1 = Metric1p1::ultrastatic("u");
        let m = MollerMap::dirac(&g0, &g1, chi(), RhoWeight::one(), &g, DerivMode::Spectral).unwrap();
        let psi = m.solve_source_system(&random_smooth_slice(3, 32, 2, 4, FiberKind::Complex)).unwrap();
        let c = conserve_dirac(&m, &g0, &g1, &psi, &psi).unwrap();
        assert!((c.ratio - 4.0).abs() < 1e-3, "{c:?}");
        let good = MollerMap::dirac(&g0, &g1, chi(), rho_from_volumes(&g0, &g1), &g, DerivMode::Spectral).unwrap();
        let c = conserve_dirac(&good, &g0, &g1, &psi, &psi).unwrap();
        assert!(c.relative_defect < 1e-5, "{c:?}");
    }

    #[test]
    fn wave_moller_properties() {
        let g = grid();
        let (g0, g1) = (Metric1p1::ultrastatic("u"), g1());
        let p0 = WaveOperator::klein_gordon(&g0, 1.0).second_order();
        let p1 = WaveOperator::klein_gordon(&g1, 1.0).second_order();
        let rho = rho_from_volumes(&g0, &g1);
        let m = MollerMap::wave(&p0, &p1, chi(), rho, &g, DerivMode::Spectral).unwrap();
        let data = |seed| {
            let h = random_smooth_slice(seed, 32, 1, 4, FiberKind::Real);
            let hp = random_smooth_slice(seed + 100, 32, 1, 4, FiberKind::Real);
            crate::wave::solve_wave(&p0, &g, None, &h, &hp, Direction::Forward, DerivMode::Spectral, 0.4).unwrap().psi
        };
        let (u, v) = (data(1), data(2));
        let ru = m.apply(&u).unwrap();
        let inter = m.intertwining_residual(&u, &ru).unwrap();
        assert!(inter < 1e-5, "{inter}");
        assert!(m.roundtrip_residual(&u, &ru).unwrap() < 1e-5);
        let sol = crate::wave::WaveSolution { psi: ru.clone() };
        assert!(sol.jet_defect(DerivMode::Spectral) < 1e-6);
        let c = conserve_wave(&m, &g0, &g1, &u, &v).unwrap();
        assert!(c.relative_defect < 1e-5, "{c:?}");
        let same = MollerMap::wave(&p0, &p0, chi(), RhoWeight::one(), &g, DerivMode::Spectral).unwrap();
        assert!(same.apply(&u).unwrap().max_diff(&u) < 1e-8 * u.max_abs());
    }

    #[test]
    fn dual_intertwiner() {
        let g = grid();
        let (g0, g1) = (Metric1p1::ultrastatic("u"), g1());
        let rho = rho_from_volumes(&g0, &g1);
        let dual = MollerMap::dirac_dual(&g0, &g1, chi(), rho, &g, DerivMode::Spectral).unwrap();
        let phi = dual.solve_source_system(&random_smooth_slice(11, 32, 2, 4, FiberKind::Complex)).unwrap();
        let tests: Vec<GridField> = (0..3)
            .map(|k| bump_source(&g, (-0.5 + 0.5 * k as f64, 1.0 + k as f64), (0.8, 1.5), k % 2, 2).unwrap())
            .collect();
        let r = dual.apply(&phi).unwrap();
        assert!(r.max_abs() > 0.1);
        let rep = dual_intertwiner_check(&dual, &g0, &g1, &phi, &tests).unwrap();
        assert!(rep.pairing_residual < 1e-5 && rep.adjoint_residual < 1e-5, "{rep:?}");
    }
}
