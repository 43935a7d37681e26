//! Quasifree states of the scalar field in Fourier-mode form: two-point
//! kernels on Cauchy data (u, pi) with pi = (a/beta) u_t, ground states,
//! n-point functions, pullback along a Moller map and a mode-decay
//! smoothness proxy.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::geom::Metric1p1;
use crate::grid::{fourier_coefficients, GridField, SliceData, C64, ZERO};
use crate::moller::MollerMap;
use crate::shs::{c, hermitian_part, CMat, ShsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("ground state needs a positive mass, got {0}")]
    Mass(f64),
    #[error("slice at t={0} is not spatially homogeneous")]
    Inhomogeneous(f64),
    #[error("mode cutoff K={k} needs K >= {need}")]
    Cutoff { k: usize, need: usize },
    #[error("mode cutoff K={k} does not fit on Nx={nx}")]
    Resolution { k: usize, nx: usize },
    #[error("n-point functions are supported up to n=6, got {0}")]
    Order(usize),
    #[error("kernels differ in cutoff ({0} vs {1})")]
    Mismatch(usize, usize),
    #[error(transparent)]
    Shs(#[from] ShsError),
}

/// Two-point function omega_2(F, F') = 2 pi v^* M v' on mode vectors
/// v = (u_k, pi_k) for k = -K..K, ordered (k, component).
#[derive(Debug, Clone)]
pub struct TwoPointKernel {
    pub k_max: usize,
    pub t_ref: f64,
    pub label: String,
    pub matrix: CMat,
}

pub fn mode_index(k: i64, comp: usize, k_max: usize) -> usize {
    2 * (k + k_max as i64) as usize + comp
}

fn modes(k_max: usize) -> impl Iterator<Item = i64> {
    -(k_max as i64)..=k_max as i64
}

impl TwoPointKernel {
    pub fn dim(&self) -> usize {
        2 * (2 * self.k_max + 1)
    }

    pub fn block(&self, k: i64) -> [[C64; 2]; 2] {
        let mut b = [[ZERO; 2]; 2];
        for (r, row) in b.iter_mut().enumerate() {
            for (col, v) in row.iter_mut().enumerate() {
                *v = self.matrix[(mode_index(k, r, self.k_max), mode_index(k, col, self.k_max))];
            }
        }
        b
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let e = nalgebra::SymmetricEigen::new(hermitian_part(&self.matrix));
        e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// max |(M[(k,a),(k',b)] - M[(-k',b),(-k,a)])/2 - (i/2) J_ab delta_kk'|,
    /// J = [[0, 1], [-1, 0]].
    pub fn commutator_defect(&self) -> f64 {
        let km = self.k_max;
        let mut worst: f64 = 0.0;
        for k in modes(km) {
            for kp in modes(km) {
                for a in 0..2 {
                    for b in 0..2 {
                        let m = self.matrix[(mode_index(k, a, km), mode_index(kp, b, km))];
                        let mt = self.matrix[(mode_index(-kp, b, km), mode_index(-k, a, km))];
                        let j = if k == kp {
                            match (a, b) {
                                (0, 1) => 1.0,
                                (1, 0) => -1.0,
                                _ => 0.0,
                            }
                        } else {
                            0.0
                        };
                        let d = (m - mt) * 0.5 - C64::new(0.0, 0.5 * j);
                        worst = worst.max(d.norm());
                    }
                }
            }
        }
        worst
    }

    pub fn coefficients(&self, f: &CauchyData) -> Result<Vec<C64>, StateError> {
        f.coefficients(self.k_max)
    }

    pub fn two_point(&self, f: &CauchyData, g: &CauchyData) -> Result<C64, StateError> {
        let (v, w) = (self.coefficients(f)?, self.coefficients(g)?);
        let mut acc = ZERO;
        for (i, vi) in v.iter().enumerate() {
            if *vi == ZERO {
                continue;
            }
            for (j, wj) in w.iter().enumerate() {
                acc += vi.conj() * self.matrix[(i, j)] * wj;
            }
        }
        Ok(acc * (2.0 * std::f64::consts::PI))
    }

    pub fn dump(&self) -> KernelDump {
        KernelDump {
            k_max: self.k_max,
            t_ref: self.t_ref,
            label: self.label.clone(),
            blocks: modes(self.k_max)
                .map(|k| {
                    let b = self.block(k);
                    [b[0][0], b[0][1], b[1][0], b[1][1]].map(|z| [z.re, z.im])
                })
                .collect(),
        }
    }
}

/// JSON form of a kernel: diagonal 2x2 blocks for k = -K..K as
/// [uu, up, pu, pp] pairs [re, im].
#[derive(Debug, Clone, Serialize)]
pub struct KernelDump {
    #[serde(rename = "K")]
    pub k_max: usize,
    pub t_ref: f64,
    pub label: String,
    pub blocks: Vec<[[f64; 2]; 4]>,
}

/// Real Cauchy data (u, pi) on an Nx-point slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
}

impl CauchyData {
    pub fn zeros(nx: usize) -> Self {
        CauchyData {
            u: vec![0.0; nx],
            pi: vec![0.0; nx],
        }
    }

    pub fn from_fn(nx: usize, u: impl Fn(f64) -> f64, pi: impl Fn(f64) -> f64) -> Self {
        let xs: Vec<f64> = (0..nx).map(|i| 2.0 * std::f64::consts::PI * i as f64 / nx as f64).collect();
        CauchyData {
            u: xs.iter().map(|&x| u(x)).collect(),
            pi: xs.iter().map(|&x| pi(x)).collect(),
        }
    }

    /// Mode vector (u_k, pi_k), k = -K..K, with u_k = (1/Nx) sum u_j e^{-i k x_j}.
    pub fn coefficients(&self, k_max: usize) -> Result<Vec<C64>, StateError> {
        let nx = self.u.len();
        if 2 * k_max >= nx {
            return Err(StateError::Resolution { k: k_max, nx });
        }
        let cu = fourier_coefficients(&self.u.iter().map(|&v| c(v)).collect::<Vec<_>>());
        let cp = fourier_coefficients(&self.pi.iter().map(|&v| c(v)).collect::<Vec<_>>());
        let mut out = vec![ZERO; 2 * (2 * k_max + 1)];
        for k in modes(k_max) {
            let j = k.rem_euclid(nx as i64) as usize;
            out[mode_index(k, 0, k_max)] = cu[j];
            out[mode_index(k, 1, k_max)] = cp[j];
        }
        Ok(out)
    }
}

/// Ground-state block (1/2)[[E, i], [-i, 1/E]].
fn ground_block(e: f64) -> [[C64; 2]; 2] {
    [
        [c(0.5 * e), C64::new(0.0, 0.5)],
        [C64::new(0.0, -0.5), c(0.5 / e)],
    ]
}

fn block_diagonal(k_max: usize, block: impl Fn(i64) -> [[C64; 2]; 2]) -> CMat {
    let n = 2 * (2 * k_max + 1);
    let mut m = CMat::zeros(n, n);
    for k in modes(k_max) {
        let b = block(k);
        for (r, row) in b.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                m[(mode_index(k, r, k_max), mode_index(k, col, k_max))] = *v;
            }
        }
    }
    m
}

/// Ground state of the massive field on beta = a = 1, E_k = sqrt(k^2 + m^2).
pub fn ultrastatic_ground_state(m: f64, k_max: usize) -> Result<TwoPointKernel, StateError> {
    slice_ground_state(&Metric1p1::ultrastatic("ultrastatic"), m, 0.0, k_max)
}

/// Instantaneous ground state on a spatially homogeneous slice: the slice
/// Hamiltonian per mode is (beta/2)(|pi|^2/a + (k^2/a + a m^2)|u|^2), whose
/// ground state has E_k = sqrt(k^2 + a^2 m^2).
pub fn slice_ground_state(metric: &Metric1p1, m: f64, t_ref: f64, k_max: usize) -> Result<TwoPointKernel, StateError> {
    if !(m > 0.0) {
        return Err(StateError::Mass(m));
    }
    let a = metric.a_at(t_ref, 0.0);
    for i in 1..16 {
        let x = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
        if (metric.a_at(t_ref, x) - a).abs() > 1e-12 * a || (metric.beta_at(t_ref, x) - metric.beta_at(t_ref, 0.0)).abs() > 1e-12 {
            return Err(StateError::Inhomogeneous(t_ref));
        }
    }
    Ok(TwoPointKernel {
        k_max,
        t_ref,
        label: format!("ground[{}, m={m}]", metric.label),
        matrix: block_diagonal(k_max, |k| ground_block(((k * k) as f64 + a * a * m * m).sqrt())),
    })
}

/// Quasifree n-point function: zero for odd n, otherwise the sum over
/// pairings {(i1 < j1), ...} of the products of two-point values (bosonic,
/// no sign).
pub fn quasifree_n_point(kernel: &TwoPointKernel, data: &[CauchyData]) -> Result<C64, StateError> {
    let n = data.len();
    if n > 6 {
        return Err(StateError::Order(n));
    }
    if n % 2 == 1 {
        return Ok(ZERO);
    }
    let mut w = vec![vec![ZERO; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            w[i][j] = kernel.two_point(&data[i], &data[j])?;
        }
    }
    fn pairings(rest: &[usize], w: &[Vec<C64>]) -> C64 {
        if rest.is_empty() {
            return C64::new(1.0, 0.0);
        }
        let first = rest[0];
        let mut acc = ZERO;
        for p in 1..rest.len() {
            let other = rest[p];
            let remaining: Vec<usize> = rest[1..].iter().copied().filter(|&r| r != other).collect();
            acc += w[first][other] * pairings(&remaining, w);
        }
        acc
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(pairings(&idx, &w))
}

/// How the transfer matrix of a Moller map is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PullbackPath {
    /// All modes superposed in one solve per component, split by FFT;
    /// valid when nothing depends on x.
    ModeComb,
    /// One solve per basis vector.
    PerBasis,
}

/// Jet slice (u_t, u_x, u) of mode data on metric g at time t.
fn jet_from_modes(v: &[C64], k_max: usize, metric: &Metric1p1, t: f64, nx: usize) -> SliceData {
    SliceData::from_fn(nx, 3, |x, comp| {
        let mut s = ZERO;
        for k in modes(k_max) {
            let e = C64::from_polar(1.0, k as f64 * x);
            s += match comp {
                0 => v[mode_index(k, 1, k_max)] * e * (metric.beta_at(t, x) / metric.a_at(t, x)),
                1 => v[mode_index(k, 0, k_max)] * e * C64::new(0.0, k as f64),
                _ => v[mode_index(k, 0, k_max)] * e,
            };
        }
        s
    })
}

/// Mode vector of a jet field on level `lev`, pi = (a/beta) u_t.
fn modes_from_jet(psi: &GridField, lev: usize, metric: &Metric1p1, k_max: usize) -> Vec<C64> {
    let g = psi.grid;
    let t = g.t(lev);
    let u: Vec<C64> = (0..g.nx).map(|i| psi.get(lev, i, 2)).collect();
    let p: Vec<C64> = (0..g.nx)
        .map(|i| psi.get(lev, i, 0) * (metric.a_at(t, g.x(i)) / metric.beta_at(t, g.x(i))))
        .collect();
    let (cu, cp) = (fourier_coefficients(&u), fourier_coefficients(&p));
    let mut out = vec![ZERO; 2 * (2 * k_max + 1)];
    for k in modes(k_max) {
        let j = k.rem_euclid(g.nx as i64) as usize;
        out[mode_index(k, 0, k_max)] = cu[j];
        out[mode_index(k, 1, k_max)] = cp[j];
    }
    out
}

/// Direction of a transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transfer {
    /// g0 data at t_ref -> R -> g1 data on the latest slice.
    Forward,
    /// g1 data on the latest slice -> R^{-1} -> g0 data at t_ref.
    Inverse,
}

fn run_one(m: &MollerMap, g0: &Metric1p1, g1: &Metric1p1, lev_ref: usize, k_max: usize, v: &[C64], dir: Transfer) -> Result<Vec<C64>, StateError> {
    let g = m.grid;
    match dir {
        Transfer::Forward => {
            let h = jet_from_modes(v, k_max, g0, g.t(lev_ref), g.nx);
            let psi = m.solve_source_from(&h, lev_ref)?;
            Ok(modes_from_jet(&m.apply(&psi)?, g.nt, g1, k_max))
        }
        Transfer::Inverse => {
            let h = jet_from_modes(v, k_max, g1, g.t1, g.nx);
            let psi = m.solve_target_from(&h, g.nt)?;
            Ok(modes_from_jet(&m.inverse_apply(&psi)?, lev_ref, g0, k_max))
        }
    }
}

/// Matrix T with T v = mode vector of the image of the solution with mode
/// data v.
pub fn transfer_matrix(
    m: &MollerMap,
    g0: &Metric1p1,
    g1: &Metric1p1,
    t_ref: f64,
    k_max: usize,
    path: PullbackPath,
    dir: Transfer,
) -> Result<CMat, StateError> {
    let g = m.grid;
    if 2 * k_max >= g.nx {
        return Err(StateError::Resolution { k: k_max, nx: g.nx });
    }
    let lev_ref = g.level_of(t_ref);
    let n = 2 * (2 * k_max + 1);
    let mut t = CMat::zeros(n, n);
    match path {
        PullbackPath::ModeComb => {
            for comp in 0..2 {
                let mut v = vec![ZERO; n];
                for k in modes(k_max) {
                    v[mode_index(k, comp, k_max)] = c(1.0);
                }
                let out = run_one(m, g0, g1, lev_ref, k_max, &v, dir)?;
                for k in modes(k_max) {
                    for r in 0..2 {
                        t[(mode_index(k, r, k_max), mode_index(k, comp, k_max))] = out[mode_index(k, r, k_max)];
                    }
                }
            }
        }
        PullbackPath::PerBasis => {
            let threads = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1).min(n);
            let columns: Vec<Result<Vec<C64>, StateError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..threads)
                    .map(|w| {
                        scope.spawn(move || {
                            (w..n)
                                .step_by(threads)
                                .map(|j| {
                                    let mut v = vec![ZERO; n];
                                    v[j] = c(1.0);
                                    run_one(m, g0, g1, lev_ref, k_max, &v, dir).map(|col| (j, col))
                                })
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                let mut cols: Vec<Result<Vec<C64>, StateError>> = (0..n).map(|_| Ok(Vec::new())).collect();
                for h in handles {
                    for r in h.join().expect("worker panicked") {
                        match r {
                            Ok((j, col)) => cols[j] = Ok(col),
                            Err(e) => return vec![Err(e)],
                        }
                    }
                }
                cols
            });
            for (j, col) in columns.into_iter().enumerate() {
                let col = col?;
                for (i, v) in col.into_iter().enumerate() {
                    t[(i, j)] = v;
                }
            }
        }
    }
    Ok(t)
}

/// Path choice: the mode comb when metrics and weight are x-independent.
pub fn default_path(m: &MollerMap) -> PullbackPath {
    if m.sys0_on_e1.is_translation_invariant() && m.sys1.is_translation_invariant() && !m.rho.expr.depends_on(crate::expr::Var::X) {
        PullbackPath::ModeComb
    } else {
        PullbackPath::PerBasis
    }
}

/// omega_0 = omega_1 o R: M_0 = T^* M_1 T, with omega_1 read on the latest
/// grid slice and omega_0 on the g0 slice at t_ref.
pub fn pullback_state(
    kernel1: &TwoPointKernel,
    m: &MollerMap,
    g0: &Metric1p1,
    g1: &Metric1p1,
    t_ref: f64,
    path: PullbackPath,
) -> Result<TwoPointKernel, StateError> {
    let t = transfer_matrix(m, g0, g1, t_ref, kernel1.k_max, path, Transfer::Forward)?;
    Ok(TwoPointKernel {
        k_max: kernel1.k_max,
        t_ref: m.grid.t(m.grid.level_of(t_ref)),
        label: format!("pullback[{}]", kernel1.label),
        matrix: t.adjoint() * &kernel1.matrix * t,
    })
}

/// omega_1 = omega_0 o R^{-1} with omega_0 at t_ref, result on the latest
/// grid slice.
pub fn pullback_inverse(
    kernel0: &TwoPointKernel,
    m: &MollerMap,
    g0: &Metric1p1,
    g1: &Metric1p1,
    path: PullbackPath,
) -> Result<TwoPointKernel, StateError> {
    let t = transfer_matrix(m, g0, g1, kernel0.t_ref, kernel0.k_max, path, Transfer::Inverse)?;
    Ok(TwoPointKernel {
        k_max: kernel0.k_max,
        t_ref: m.grid.t1,
        label: format!("pushforward[{}]", kernel0.label),
        matrix: t.adjoint() * &kernel0.matrix * t,
    })
}

/// Mode-decay proxy for smoothness of a kernel difference.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub proxy: &'static str,
    #[serde(rename = "K")]
    pub k_max: usize,
    pub fit_k_min: usize,
    pub slope: f64,
    pub sup_dk_k2: f64,
    pub sup_dk_k4: f64,
    pub passed: bool,
    pub d: Vec<f64>,
}

pub const MIN_PROXY_MODES: usize = 16;
pub const PROXY_SLOPE: f64 = -2.0;

/// d_k = max over +-k of (|dB_uu|/<k>^2, |dB_up|/<k>, |dB_pu|/<k>, |dB_pp|)
/// on the diagonal blocks, <k> = sqrt(1 + k^2); least-squares slope of
/// log d_k against log k over [max(2, K/8), K]; pass iff slope <= -2.
pub fn smoothness_proxy(a: &TwoPointKernel, b: &TwoPointKernel) -> Result<DecayReport, StateError> {
    if a.k_max != b.k_max {
        return Err(StateError::Mismatch(a.k_max, b.k_max));
    }
    let km = a.k_max;
    if km < MIN_PROXY_MODES {
        return Err(StateError::Cutoff { k: km, need: MIN_PROXY_MODES });
    }
    let d: Vec<f64> = (0..=km as i64)
        .map(|k| {
            let w = (1.0 + (k * k) as f64).sqrt();
            [k, -k]
                .iter()
                .map(|&s| {
                    let (x, y) = (a.block(s), b.block(s));
                    let e = |r: usize, c: usize| (x[r][c] - y[r][c]).norm();
                    (e(0, 0) / (w * w)).max(e(0, 1) / w).max(e(1, 0) / w).max(e(1, 1))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let k_lo = 2.max(km / 8);
    let pts: Vec<(f64, f64)> = (k_lo..=km).filter(|&k| d[k] > 0.0).map(|k| ((k as f64).ln(), d[k].ln())).collect();
    let slope = if pts.len() < 2 {
        f64::NEG_INFINITY
    } else {
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    let sup = |q: i32| (1..=km).map(|k| d[k] * (k as f64).powi(q)).fold(0.0, f64::max);
    Ok(DecayReport {
        proxy: "mode-decay proxy for a smooth kernel difference",
        k_max: km,
        fit_k_min: k_lo,
        slope,
        sup_dk_k2: sup(2),
        sup_dk_k4: sup(4),
        passed: slope <= PROXY_SLOPE,
        d,
    })
}

pub fn write_decay_csv<W: Write>(r: &DecayReport, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "d_k"])?;
    for (k, v) in r.d.iter().enumerate() {
        out.write_record([k.to_string(), format!("{v:e}")])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{chi_profile, rho_from_volumes};
    use crate::grid::{DerivMode, Grid};
    use crate::wave::WaveOperator;

    fn data(seed: u64, nx: usize) -> CauchyData {
        let s = seed as f64;
        CauchyData::from_fn(nx, move |x| (x + s).sin() + 0.3 * (2.0 * x - s).cos(), move |x| 0.5 * (3.0 * x + 0.7 * s).cos())
    }

    #[test]
    fn ground_state_invariants() {
        let k = ultrastatic_ground_state(1.3, 8).unwrap();
        assert!(k.commutator_defect() < 1e-15);
        assert!(k.hermiticity_defect() == 0.0);
        assert!(k.min_eigenvalue() > -1e-12);
        for q in -8..=8 {
            let b = k.block(q);
            assert_eq!(b[0][1].re, 0.0);
            assert_eq!(b[1][0].re, 0.0);
            let e = ((q * q) as f64 + 1.69).sqrt();
            assert!((b[0][0].re - 0.5 * e).abs() < 1e-15);
        }
        assert!(matches!(ultrastatic_ground_state(0.0, 8), Err(StateError::Mass(_))));
        let f = data(1, 32);
        assert!(k.two_point(&f, &f).unwrap().re > 0.0);
    }

    #[test]
    fn n_point_functions() {
        let k = ultrastatic_ground_state(1.0, 6).unwrap();
        let fs: Vec<CauchyData> = (0..6).map(|s| data(s, 32)).collect();
        assert_eq!(quasifree_n_point(&k, &fs[..1]).unwrap(), ZERO);
        assert_eq!(quasifree_n_point(&k, &fs[..3]).unwrap(), ZERO);
        let z = CauchyData::zeros(32);
        let four = [fs[0].clone(), z.clone(), z, fs[3].clone()];
        assert_eq!(quasifree_n_point(&k, &four).unwrap(), ZERO);
        let w = |i: usize, j: usize| k.two_point(&fs[i], &fs[j]).unwrap();
        let brute = w(0, 1) * w(2, 3) + w(0, 2) * w(1, 3) + w(0, 3) * w(1, 2);
        let got = quasifree_n_point(&k, &fs[..4]).unwrap();
        assert!((got - brute).norm() < 1e-12 * brute.norm());
        // exchanging the pairs (0,1) <-> (2,3)
        let swapped = [fs[2].clone(), fs[3].clone(), fs[0].clone(), fs[1].clone()];
        assert!((quasifree_n_point(&k, &swapped).unwrap() - got).norm() < 1e-12 * got.norm());
        let six = quasifree_n_point(&k, &fs).unwrap();
        assert!(six.norm() > 0.0);
        assert!(matches!(quasifree_n_point(&k, &[fs.clone(), fs.clone()].concat()[..8]), Err(StateError::Order(8))));
    }

    #[test]
    fn proxy_examples() {
        let a = ultrastatic_ground_state(1.0, 64).unwrap();
        let same = smoothness_proxy(&a, &a).unwrap();
        assert!(same.d.iter().all(|&v| v == 0.0) && same.passed);
        let b = ultrastatic_ground_state(2.0, 64).unwrap();
        let r = smoothness_proxy(&a, &b).unwrap();
        assert!(r.slope <= -2.5 && r.passed, "{}", r.slope);
        let mut wrong = a.clone();
        for k in -64..=64 {
            wrong.matrix[(mode_index(k, 0, 64), mode_index(k, 1, 64))] = C64::new(0.0, 1.0);
            wrong.matrix[(mode_index(k, 1, 64), mode_index(k, 0, 64))] = C64::new(0.0, -1.0);
        }
        let r = smoothness_proxy(&a, &wrong).unwrap();
        assert!(!r.passed && r.slope > -1.5, "{}", r.slope);
        let small = ultrastatic_ground_state(1.0, 8).unwrap();
        assert!(matches!(smoothness_proxy(&small, &small), Err(StateError::Cutoff { .. })));
    }

    #[test]
    fn dump_shape() {
        let k = ultrastatic_ground_state(1.0, 3).unwrap();
        let d = k.dump();
        assert_eq!(d.blocks.len(), 7);
        let j = serde_json::to_value(&d).unwrap();
        assert_eq!(j["K"], 3);
    }

    fn moller(g0: &Metric1p1, g1: &Metric1p1, m: f64, grid: &Grid) -> MollerMap {
        let p0 = WaveOperator::klein_gordon(g0, m).second_order();
        let p1 = WaveOperator::klein_gordon(g1, m).second_order();
        let chi = chi_profile(-0.5, 0.5).unwrap();
        MollerMap::wave(&p0, &p1, chi, rho_from_volumes(g0, g1), grid, DerivMode::Spectral).unwrap()
    }

    #[test]
    fn pullback_identity_and_paths() {
        let grid = Grid::new(32, 400, -1.0, 1.0).unwrap();
        let u = Metric1p1::ultrastatic("u");
        let m = moller(&u, &u, 1.0, &grid);
        let k1 = ultrastatic_ground_state(1.0, 6).unwrap();
        let k0 = pullback_state(&k1, &m, &u, &u, 0.0, default_path(&m)).unwrap();
        assert!((&k0.matrix - &k1.matrix).iter().all(|v| v.norm() < 1e-6));
        let g0 = Metric1p1::parse("g0", "1", "1.3 + 0.2*tanh(2*t)").unwrap();
        let m = moller(&g0, &u, 1.0, &grid);
        assert_eq!(default_path(&m), PullbackPath::ModeComb);
        let comb = pullback_state(&k1, &m, &g0, &u, 0.0, PullbackPath::ModeComb).unwrap();
        let basis = pullback_state(&k1, &m, &g0, &u, 0.0, PullbackPath::PerBasis).unwrap();
        assert!((&comb.matrix - &basis.matrix).iter().all(|v| v.norm() < 1e-8));
        assert!(comb.commutator_defect() < 1e-5, "{}", comb.commutator_defect());
        assert!(comb.min_eigenvalue() >= -1e-8);
        let back = pullback_inverse(&comb, &m, &g0, &u, PullbackPath::ModeComb).unwrap();
        assert!((&back.matrix - &k1.matrix).iter().all(|v| v.norm() < 2e-5));
    }

    #[test]
    fn pullback_inhomogeneous_uses_basis_path() {
        let grid = Grid::new(32, 400, -1.0, 1.0).unwrap();
        let u = Metric1p1::ultrastatic("u");
        let g1 = Metric1p1::parse("g1", "1", "(1 + 0.2*sin(x)*exp(-t^2))/1.2").unwrap();
        let m = moller(&u, &g1, 1.0, &grid);
        assert_eq!(default_path(&m), PullbackPath::PerBasis);
        let k1 = ultrastatic_ground_state(1.0, 4).unwrap();
        // any positive kernel on the g1 side: here the ultrastatic form
        let k0 = pullback_state(&k1, &m, &u, &g1, -0.9, PullbackPath::PerBasis).unwrap();
        assert!(k0.min_eigenvalue() >= -1e-8);
    }
}
