//! Uniform (t, x) grids with periodic x, dense field histories, spatial
//! derivatives, RK4 stepping and slice quadrature.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("Nx must be a power of two >= 8, got {0}")]
    BadNx(usize),
    #[error("Nt must be >= 1")]
    BadNt,
    #[error("grid window must satisfy t0 < t1 (got t0={t0}, t1={t1})")]
    BadWindow { t0: f64, t1: f64 },
    #[error("CFL violated: dt={dt:.3e} exceeds {cfl} * dx / v_max = {limit:.3e}")]
    Cfl { dt: f64, cfl: f64, limit: f64 },
    #[error("solution blew up at time index {0}; reduce dt (raise Nt or lower the CFL factor)")]
    BlowUp(usize),
    #[error("support reaches grid boundary: {0}")]
    Support(String),
    #[error("need at least {need} time steps for {what}, have {have}")]
    TooFewSteps {
        need: usize,
        have: usize,
        what: &'static str,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub t0: f64,
    pub t1: f64,
}

impl Grid {
    pub fn new(nx: usize, nt: usize, t0: f64, t1: f64) -> Result<Grid, GridError> {
        if nx < 8 || !nx.is_power_of_two() {
            return Err(GridError::BadNx(nx));
        }
        if nt < 1 {
            return Err(GridError::BadNt);
        }
        if !(t0 < t1) {
            return Err(GridError::BadWindow { t0, t1 });
        }
        Ok(Grid { nx, nt, t0, t1 })
    }

    /// Smallest step count meeting dt <= cfl * dx / v_max.
    pub fn with_cfl(nx: usize, t0: f64, t1: f64, cfl: f64, v_max: f64) -> Result<Grid, GridError> {
        let dx = 2.0 * PI / nx as f64;
        let dt_max = cfl * dx / v_max;
        let nt = ((t1 - t0) / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Grid::new(nx, nt, t0, t1)
    }

    pub fn check_cfl(&self, cfl: f64, v_max: f64) -> Result<(), GridError> {
        let limit = cfl * self.dx() / v_max;
        if self.dt() > limit * (1.0 + 1e-12) {
            return Err(GridError::Cfl {
                dt: self.dt(),
                cfl,
                limit,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.nt as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt()
    }

    /// Time at half-level m (m = 2n is level n).
    #[inline]
    pub fn t_half(&self, m: usize) -> f64 {
        self.t0 + 0.5 * m as f64 * self.dt()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Nearest level to time t, clamped to the window.
    pub fn level_of(&self, t: f64) -> usize {
        let n = ((t - self.t0) / self.dt()).round();
        n.clamp(0.0, self.nt as f64) as usize
    }

    /// Same window with the step count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            nt: self.nt * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberKind {
    Real,
    Complex,
}

/// Fixed-time field, stored component-major: `data[c * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceData {
    pub nx: usize,
    pub nc: usize,
    pub data: Vec<C64>,
}

impl SliceData {
    pub fn zeros(nx: usize, nc: usize) -> Self {
        SliceData {
            nx,
            nc,
            data: vec![ZERO; nx * nc],
        }
    }

    pub fn from_fn(nx: usize, nc: usize, f: impl Fn(f64, usize) -> C64) -> Self {
        let dx = 2.0 * PI / nx as f64;
        let mut s = SliceData::zeros(nx, nc);
        for c in 0..nc {
            for i in 0..nx {
                s.data[c * nx + i] = f(i as f64 * dx, c);
            }
        }
        s
    }

    #[inline]
    pub fn get(&self, i: usize, c: usize) -> C64 {
        self.data[c * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, c: usize, v: C64) {
        self.data[c * self.nx + i] = v;
    }

    pub fn component(&self, c: usize) -> &[C64] {
        &self.data[c * self.nx..(c + 1) * self.nx]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.data[c * self.nx..(c + 1) * self.nx]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_diff(&self, other: &SliceData) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// CSV with columns x, re_0, im_0, re_1, im_1, ...
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string()];
        for c in 0..self.nc {
            header.push(format!("re_{c}"));
            header.push(format!("im_{c}"));
        }
        wr.write_record(&header)?;
        let dx = 2.0 * PI / self.nx as f64;
        for i in 0..self.nx {
            let mut row = vec![format!("{:.17e}", i as f64 * dx)];
            for c in 0..self.nc {
                let v = self.get(i, c);
                row.push(format!("{:.17e}", v.re));
                row.push(format!("{:.17e}", v.im));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Field history on every grid level: `data[(n * nc + c) * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub nc: usize,
    pub kind: FiberKind,
    pub data: Vec<C64>,
}

impl GridField {
    pub fn zeros(grid: Grid, nc: usize, kind: FiberKind) -> Self {
        GridField {
            grid,
            nc,
            kind,
            data: vec![ZERO; (grid.nt + 1) * nc * grid.nx],
        }
    }

    pub fn from_fn(grid: Grid, nc: usize, kind: FiberKind, f: impl Fn(f64, f64, usize) -> C64) -> Self {
        let mut g = GridField::zeros(grid, nc, kind);
        for n in 0..=grid.nt {
            let t = grid.t(n);
            for c in 0..nc {
                for i in 0..grid.nx {
                    let idx = g.idx(n, i, c);
                    g.data[idx] = f(t, grid.x(i), c);
                }
            }
        }
        g
    }

    #[inline]
    pub fn idx(&self, n: usize, i: usize, c: usize) -> usize {
        (n * self.nc + c) * self.grid.nx + i
    }

    #[inline]
    pub fn get(&self, n: usize, i: usize, c: usize) -> C64 {
        self.data[self.idx(n, i, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, i: usize, c: usize, v: C64) {
        let k = self.idx(n, i, c);
        self.data[k] = v;
    }

    pub fn level(&self, n: usize) -> &[C64] {
        let len = self.nc * self.grid.nx;
        &self.data[n * len..(n + 1) * len]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [C64] {
        let len = self.nc * self.grid.nx;
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn slice(&self, n: usize) -> SliceData {
        SliceData {
            nx: self.grid.nx,
            nc: self.nc,
            data: self.level(n).to_vec(),
        }
    }

    pub fn set_slice(&mut self, n: usize, s: &SliceData) {
        self.level_mut(n).copy_from_slice(&s.data);
    }

    /// Single component as a one-component field.
    pub fn component(&self, c: usize) -> GridField {
        let mut out = GridField::zeros(self.grid, 1, self.kind);
        let nx = self.grid.nx;
        for n in 0..=self.grid.nt {
            let src = &self.level(n)[c * nx..(c + 1) * nx];
            out.level_mut(n).copy_from_slice(src);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_level(&self, n: usize) -> f64 {
        self.level(n).iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Discrete space-time L2 norm (sqrt of sum |v|^2 dx dt).
    pub fn l2(&self) -> f64 {
        let s: f64 = self.data.iter().map(|v| v.norm_sqr()).sum();
        (s * self.grid.dx() * self.grid.dt()).sqrt()
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    pub fn max_diff(&self, other: &GridField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    fn check_same(&self, other: &GridField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.nc, other.nc, "component mismatch");
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// self + s * other
    pub fn axpy(&self, s: C64, other: &GridField) -> GridField {
        self.check_same(other);
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += s * v;
        }
        if self.kind != other.kind || s.im != 0.0 {
            out.kind = FiberKind::Complex;
        }
        out
    }

    pub fn scale(&self, s: C64) -> GridField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        if s.im != 0.0 {
            out.kind = FiberKind::Complex;
        }
        out
    }

    /// Multiplies every level by a real time profile w(t).
    pub fn weighted_in_time(&self, w: impl Fn(f64) -> f64) -> GridField {
        let mut out = self.clone();
        for n in 0..=self.grid.nt {
            let s = w(self.grid.t(n));
            out.level_mut(n).iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    /// Time-reversed history.
    pub fn mirrored_in_time(&self) -> GridField {
        let mut out = self.clone();
        let nt = self.grid.nt;
        for n in 0..=nt {
            out.level_mut(n).copy_from_slice(self.level(nt - n));
        }
        out
    }

    /// First time derivative by 8th-order finite differences
    /// (one-sided stencils at the window ends).
    pub fn dt_fd(&self) -> Result<GridField, GridError> {
        self.time_derivative(1)
    }

    pub fn dtt_fd(&self) -> Result<GridField, GridError> {
        self.time_derivative(2)
    }

    fn time_derivative(&self, order: usize) -> Result<GridField, GridError> {
        let nt = self.grid.nt;
        const W: usize = 9;
        if nt + 1 < W {
            return Err(GridError::TooFewSteps {
                need: W - 1,
                have: nt,
                what: "time derivatives",
            });
        }
        let h = self.grid.dt();
        let mut out = GridField::zeros(self.grid, self.nc, self.kind);
        let nodes: Vec<f64> = (0..W).map(|j| j as f64).collect();
        let mut cache: Vec<Option<Vec<f64>>> = vec![None; W];
        for n in 0..=nt {
            let s = n.saturating_sub(W / 2).min(nt + 1 - W);
            let off = n - s;
            let w = cache[off].get_or_insert_with(|| {
                let c = fornberg(off as f64, &nodes, order);
                c[order].iter().map(|v| v / h.powi(order as i32)).collect()
            });
            let len = self.nc * self.grid.nx;
            let dst = n * len;
            for (j, wj) in w.iter().enumerate() {
                let src = (s + j) * len;
                for k in 0..len {
                    out.data[dst + k] += *wj * self.data[src + k];
                }
            }
        }
        Ok(out)
    }

    /// Value at half-level n + 1/2 by 6-point Lagrange interpolation.
    pub fn half_level(&self, n: usize, out: &mut [C64]) {
        let nt = self.grid.nt;
        let len = self.nc * self.grid.nx;
        let p = 6.min(nt + 1);
        let s = n.saturating_sub(p / 2 - 1).min(nt + 1 - p);
        let nodes: Vec<f64> = (0..p).map(|j| j as f64).collect();
        let w = &fornberg(n as f64 + 0.5 - s as f64, &nodes, 0)[0];
        out.iter_mut().for_each(|v| *v = ZERO);
        for (j, wj) in w.iter().enumerate() {
            let src = (s + j) * len;
            for k in 0..len {
                out[k] += *wj * self.data[src + k];
            }
        }
    }

    /// CSV of level n.
    pub fn write_level_csv<W: Write>(&self, n: usize, w: W) -> csv::Result<()> {
        self.slice(n).write_csv(w)
    }
}

/// Finite-difference weights (Fornberg). `c[k][j]` is the weight of node j
/// for the k-th derivative at z.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivMode {
    Spectral,
    Fd4,
}

/// Periodic x-derivative operator with cached FFT plans and scratch space.
pub struct XDeriv {
    nx: usize,
    mode: DerivMode,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<C64>,
    scratch: Vec<C64>,
    ik: Vec<C64>,
}

impl XDeriv {
    pub fn new(nx: usize, mode: DerivMode) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nx);
        let inv = planner.plan_fft_inverse(nx);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let ik = (0..nx)
            .map(|j| {
                let k = wavenumber(j, nx);
                // The Nyquist mode has no odd-symmetric derivative on the grid.
                if 2 * j == nx {
                    ZERO
                } else {
                    C64::new(0.0, k as f64 / nx as f64)
                }
            })
            .collect();
        XDeriv {
            nx,
            mode,
            fwd,
            inv,
            buf: vec![ZERO; nx],
            scratch: vec![ZERO; scratch_len],
            ik,
        }
    }

    pub fn mode(&self) -> DerivMode {
        self.mode
    }

    pub fn apply(&mut self, input: &[C64], out: &mut [C64]) {
        debug_assert_eq!(input.len(), self.nx);
        match self.mode {
            DerivMode::Spectral => {
                self.buf.copy_from_slice(input);
                self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
                for (b, ik) in self.buf.iter_mut().zip(&self.ik) {
                    *b *= ik;
                }
                self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
                out.copy_from_slice(&self.buf);
            }
            DerivMode::Fd4 => {
                let n = self.nx;
                let h = 2.0 * PI / n as f64;
                for i in 0..n {
                    let (m2, m1) = (input[(i + n - 2) % n], input[(i + n - 1) % n]);
                    let (p1, p2) = (input[(i + 1) % n], input[(i + 2) % n]);
                    out[i] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
                }
            }
        }
    }

    /// Applies the derivative to every component of a component-major block.
    pub fn apply_components(&mut self, input: &[C64], out: &mut [C64]) {
        for (src, dst) in input.chunks(self.nx).zip(out.chunks_mut(self.nx)) {
            self.apply(src, dst);
        }
    }
}

/// Signed wavenumber of FFT bin j.
#[inline]
pub fn wavenumber(j: usize, nx: usize) -> i64 {
    if j < nx / 2 {
        j as i64
    } else {
        j as i64 - nx as i64
    }
}

pub fn d_dx(slice: &SliceData, mode: DerivMode) -> SliceData {
    let mut d = XDeriv::new(slice.nx, mode);
    let mut out = SliceData::zeros(slice.nx, slice.nc);
    d.apply_components(&slice.data, &mut out.data);
    out
}

/// Spatial derivative of a whole history.
pub fn dx_field(f: &GridField, mode: DerivMode) -> GridField {
    let mut d = XDeriv::new(f.grid.nx, mode);
    let mut out = GridField::zeros(f.grid, f.nc, f.kind);
    for n in 0..=f.grid.nt {
        let src = f.level(n).to_vec();
        d.apply_components(&src, out.level_mut(n));
    }
    out
}

/// Mode coefficients u_k = (1/Nx) sum_j u_j e^{-i k x_j}, indexed by FFT bin.
pub fn fourier_coefficients(u: &[C64]) -> Vec<C64> {
    let nx = u.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nx);
    let mut buf = u.to_vec();
    fft.process(&mut buf);
    buf.iter_mut().for_each(|v| *v /= nx as f64);
    buf
}

/// Seeded random smooth slice: modes |k| <= kmax with uniform coefficients
/// damped by exp(-(k/kmax)^2). Real data uses conjugate-symmetric modes.
pub fn random_smooth_slice(seed: u64, nx: usize, nc: usize, kmax: usize, kind: FiberKind) -> SliceData {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let kmax = kmax.min(nx / 2 - 1) as i64;
    let mut out = SliceData::zeros(nx, nc);
    for c in 0..nc {
        let mut modes = Vec::new();
        for k in -kmax..=kmax {
            let damp = (-(k as f64 / kmax.max(1) as f64).powi(2)).exp();
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * damp;
            modes.push((k, z));
        }
        for i in 0..nx {
            let x = 2.0 * PI * i as f64 / nx as f64;
            let mut v = ZERO;
            for (k, z) in &modes {
                v += z * C64::from_polar(1.0, *k as f64 * x);
            }
            if kind == FiberKind::Real {
                v = C64::new(v.re, 0.0);
            }
            out.set(i, c, v);
        }
    }
    out
}

/// Scratch space for repeated RK4 steps.
pub struct Rk4Scratch {
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Rk4Scratch {
    pub fn new(len: usize) -> Self {
        Rk4Scratch {
            k: std::array::from_fn(|_| vec![ZERO; len]),
            tmp: vec![ZERO; len],
        }
    }
}

/// Classical RK4 step in place. `rhs(stage, y, dy)` is called with the stage
/// time fraction 0, 1/2, 1/2, 1.
pub fn rk4_step(
    rhs: &mut dyn FnMut(f64, &[C64], &mut [C64]),
    state: &mut [C64],
    dt: f64,
    step_index: usize,
    s: &mut Rk4Scratch,
) -> Result<(), GridError> {
    let len = state.len();
    rhs(0.0, state, &mut s.k[0]);
    for j in 0..len {
        s.tmp[j] = state[j] + 0.5 * dt * s.k[0][j];
    }
    rhs(0.5, &s.tmp, &mut s.k[1]);
    for j in 0..len {
        s.tmp[j] = state[j] + 0.5 * dt * s.k[1][j];
    }
    rhs(0.5, &s.tmp, &mut s.k[2]);
    for j in 0..len {
        s.tmp[j] = state[j] + dt * s.k[2][j];
    }
    rhs(1.0, &s.tmp, &mut s.k[3]);
    let mut finite = true;
    for j in 0..len {
        state[j] += dt / 6.0 * (s.k[0][j] + 2.0 * s.k[1][j] + 2.0 * s.k[2][j] + s.k[3][j]);
        finite &= state[j].re.is_finite() && state[j].im.is_finite();
    }
    if !finite {
        return Err(GridError::BlowUp(step_index));
    }
    Ok(())
}

/// Convenience wrapper for one step on a slice.
pub fn rk4_step_slice(
    mut rhs: impl FnMut(f64, &[C64], &mut [C64]),
    state: &SliceData,
    dt: f64,
) -> Result<SliceData, GridError> {
    let mut out = state.clone();
    let mut s = Rk4Scratch::new(out.data.len());
    rk4_step(&mut rhs, &mut out.data, dt, 0, &mut s)?;
    Ok(out)
}

/// Periodic rectangle rule: sum w(x_i) density(x_i) dx.
pub fn slice_integral(w: &[C64], density: &[f64]) -> C64 {
    assert_eq!(w.len(), density.len(), "slice_integral: length mismatch");
    let dx = 2.0 * PI / w.len() as f64;
    w.iter().zip(density).map(|(v, d)| v * *d).sum::<C64>() * dx
}

fn unit_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Periodic distance on the circle.
#[inline]
pub fn circle_dist(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Smooth bump exp(-1/(1-s^2)) in t and (periodically) in x, placed in one
/// component of an `nc`-component field.
pub fn bump_source(
    grid: &Grid,
    center: (f64, f64),
    radii: (f64, f64),
    component: usize,
    nc: usize,
) -> Result<GridField, GridError> {
    let (tc, xc) = center;
    let (rt, rx) = radii;
    let margin = 2.0 * grid.dt();
    if tc - rt < grid.t0 + margin || tc + rt > grid.t1 - margin {
        return Err(GridError::Support(format!(
            "bump [{:.4}, {:.4}] needs a margin of 2 steps inside [{}, {}]",
            tc - rt,
            tc + rt,
            grid.t0,
            grid.t1
        )));
    }
    if rx >= PI {
        return Err(GridError::Support(format!("bump x-radius {rx} wraps the circle")));
    }
    if component >= nc {
        return Err(GridError::Shape(format!("component {component} of {nc}")));
    }
    Ok(GridField::from_fn(*grid, nc, FiberKind::Real, |t, x, c| {
        if c != component {
            return ZERO;
        }
        let v = unit_bump((t - tc) / rt) * unit_bump(circle_dist(x, xc) / rx);
        C64::new(v, 0.0)
    }))
}
