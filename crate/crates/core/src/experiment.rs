//! Orchestration of the check, solve, green, moller, conserve and state
//! pipelines with deterministic JSON reports.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Experiment, FieldKind, RhoSpec};
use crate::dirac::{dirac_system, drift, kappa_properties, spin_scalar_product, DiracError, DriftReport, SpinorRealization};
use crate::geom::{cone_dominates, rho_from_volumes, Metric1p1, RhoWeight, ScalarField};
use crate::green::{duality_check, green_identities, SupportBox};
use crate::grid::{bump_source, random_smooth_slice, DerivMode, FiberKind, Grid, GridError, GridField, SliceData, C64};
use crate::moller::{check_chi_window, conservation_report, dual_intertwiner_check, ConservationReport, MollerError, MollerMap, MollerReport};
use crate::qstate::{default_path, pullback_state, slice_ground_state, smoothness_proxy, write_decay_csv, StateError};
use crate::shs::{check_condition_h, check_condition_s, SHSystem, SampledSystem, ShsError};
use crate::wave::{jet_slice, symplectic_form, SecondOrderOp, WaveOperator, WaveSolution};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Shs(#[from] ShsError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error(transparent)]
    Moller(#[from] MollerError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{0}")]
    Unsupported(String),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl ExperimentError {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Grid(_) => "grid",
            ExperimentError::Shs(_) => "shs",
            ExperimentError::Dirac(_) => "dirac",
            ExperimentError::Moller(_) => "moller",
            ExperimentError::State(_) => "state",
            ExperimentError::Unsupported(_) => "unsupported",
            ExperimentError::Output { .. } => "output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Check,
    Solve,
    Green,
    Moller,
    Conserve,
    State,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Green => "green",
            Command::Moller => "moller",
            Command::Conserve => "conserve",
            Command::State => "state",
        }
    }
}

/// Named file produced next to the report.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Result of one pipeline before anything is written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub report: Value,
    pub passed: bool,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    /// Pretty JSON with a trailing newline; key order is sorted.
    pub fn report_bytes(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s.into_bytes()
    }

    /// Writes `<command>.json`, `<command>.meta.json` and the artifacts.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let io = |p: &Path, e: std::io::Error| ExperimentError::Output {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let name = self.command.name();
        let mut written = Vec::new();
        let mut put = |file: String, bytes: &[u8]| -> Result<(), ExperimentError> {
            let p = dir.join(file);
            std::fs::write(&p, bytes).map_err(|e| io(&p, e))?;
            written.push(p);
            Ok(())
        };
        put(format!("{name}.json"), &self.report_bytes())?;
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = json!({
            "command": name,
            "generated_unix_seconds": stamp,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "artifacts": self.artifacts.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
        });
        put(format!("{name}.meta.json"), format!("{}\n", serde_json::to_string_pretty(&meta).expect("meta")).as_bytes())?;
        for a in &self.artifacts {
            put(a.name.clone(), &a.bytes)?;
        }
        Ok(written)
    }
}

/// Runs a pipeline and writes its outputs into `out_dir`.
pub fn run_experiment(exp: &Experiment, command: Command, out_dir: &Path) -> Result<Outcome, ExperimentError> {
    let outcome = compute(exp, command)?;
    outcome.write(out_dir)?;
    Ok(outcome)
}

/// Runs a pipeline without touching the file system.
pub fn compute(exp: &Experiment, command: Command) -> Result<Outcome, ExperimentError> {
    let (results, passed, artifacts) = match command {
        Command::Check => run_check(exp)?,
        Command::Solve => run_solve(exp)?,
        Command::Green => run_green(exp)?,
        Command::Moller => run_moller(exp)?,
        Command::Conserve => run_conserve(exp)?,
        Command::State => run_state(exp)?,
    };
    let g = exp.grid;
    let report = json!({
        "command": command.name(),
        "field": exp.config.field,
        "passed": passed,
        "metrics": {
            "g0": exp.config.g0,
            "g1": exp.config.g1,
            "potential": exp.config.potential,
            "mass": exp.config.mass,
        },
        "grid": {
            "nx": g.nx,
            "nt": g.nt,
            "t0": g.t0,
            "t1": g.t1,
            "dt": g.dt(),
            "dx": g.dx(),
            "cfl": exp.cfl,
            "deriv": deriv_name(exp.deriv),
        },
        "chi": exp.config.chi,
        "rho": exp.config.rho,
        "tolerances": exp.config.tolerances,
        "results": results,
    });
    Ok(Outcome {
        command,
        report,
        passed,
        artifacts,
    })
}

type Stage = (Value, bool, Vec<Artifact>);

fn deriv_name(d: DerivMode) -> &'static str {
    match d {
        DerivMode::Spectral => "spectral",
        DerivMode::Fd4 => "fd4",
    }
}

fn wave_op(exp: &Experiment, g: &Metric1p1) -> SecondOrderOp {
    WaveOperator::new(g, exp.potential.clone()).second_order()
}

/// First-order system of the configured field on metric g.
pub fn field_system(exp: &Experiment, g: &Metric1p1) -> SHSystem {
    match exp.config.field {
        FieldKind::Dirac => dirac_system(g),
        FieldKind::Scalar => wave_op(exp, g).reduce(),
    }
}

pub fn rho_weight(exp: &Experiment) -> RhoWeight {
    match exp.config.rho {
        RhoSpec::Volumes => rho_from_volumes(&exp.g0, &exp.g1),
        RhoSpec::One => RhoWeight::one(),
    }
}

pub fn moller_map(exp: &Experiment) -> Result<MollerMap, ExperimentError> {
    let rho = rho_weight(exp);
    Ok(match exp.config.field {
        FieldKind::Dirac => MollerMap::dirac(&exp.g0, &exp.g1, exp.chi, rho, &exp.grid, exp.deriv)?,
        FieldKind::Scalar => MollerMap::wave(&wave_op(exp, &exp.g0), &wave_op(exp, &exp.g1), exp.chi, rho, &exp.grid, exp.deriv)?,
    })
}

/// Random smooth Cauchy data for sample `i` (jets for the scalar field).
pub fn sample_data(exp: &Experiment, i: usize) -> SliceData {
    let s = &exp.config.samples;
    let nx = exp.grid.nx;
    let seed = s.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
    match exp.config.field {
        FieldKind::Dirac => random_smooth_slice(seed, nx, 2, s.kmax, FiberKind::Complex),
        FieldKind::Scalar => {
            let h = random_smooth_slice(seed, nx, 1, s.kmax, FiberKind::Real);
            let hp = random_smooth_slice(seed ^ 0x5eed, nx, 1, s.kmax, FiberKind::Real);
            jet_slice(&h, &hp, exp.deriv)
        }
    }
}

/// Conserved slice pairing of the field at level `lev`: (psi, phi) for
/// spinors, sigma(u, v) for jets.
pub fn slice_pairing(exp: &Experiment, g: &Metric1p1, psi: &GridField, phi: &GridField, lev: usize) -> Result<C64, ExperimentError> {
    Ok(match exp.config.field {
        FieldKind::Dirac => spin_scalar_product(&SpinorRealization::new(g.clone()), psi, phi, lev),
        FieldKind::Scalar => C64::new(symplectic_form(g, psi, phi, lev)?, 0.0),
    })
}

fn pairing_drift(exp: &Experiment, g: &Metric1p1, psi: &GridField, phi: &GridField) -> Result<(DriftReport, Vec<C64>), ExperimentError> {
    let v = (0..=psi.grid.nt)
        .map(|n| slice_pairing(exp, g, psi, phi, n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((drift(v.iter().copied()), v))
}

fn csv_artifact(name: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Artifact {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    Artifact {
        name: name.into(),
        bytes: w.into_inner().expect("in-memory csv"),
    }
}

/// Maps `f` over 0..n on scoped worker threads; results keep index order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1).clamp(1, n.max(1));
    let f = &f;
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| scope.spawn(move || (w..n).step_by(threads).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                out[i] = Some(v);
            }
        }
    });
    out.into_iter().map(|v| v.expect("every index visited")).collect()
}

fn run_check(exp: &Experiment) -> Result<Stage, ExperimentError> {
    let tol = &exp.config.tolerances;
    let mut systems = serde_json::Map::new();
    let mut passed = true;
    for (name, g) in [("g0", &exp.g0), ("g1", &exp.g1)] {
        let sys = field_system(exp, g);
        let s = check_condition_s(&sys, &exp.grid);
        let h = check_condition_h(&sys, &exp.grid, 17);
        passed &= s.value < tol.symbol && h.value > 0.0;
        systems.insert(name.into(), json!({ "S": s, "H": h, "max_char_speed": sys.max_char_speed(&exp.grid) }));
    }
    let (cone_ok, margin) = cone_dominates(&exp.g1, &exp.g0, &exp.grid);
    let window = check_chi_window(&exp.chi, &exp.grid).map_err(|e| e.to_string());
    passed &= cone_ok && window.is_ok();
    let mut results = json!({
        "systems": systems,
        "cone": { "g1_contains_g0": cone_ok, "speed_margin": margin },
        "chi_window": { "ok": window.is_ok(), "message": window.err() },
    });
    if exp.config.field == FieldKind::Dirac {
        let mut realizations = serde_json::Map::new();
        for (name, g) in [("g0", &exp.g0), ("g1", &exp.g1)] {
            let r = SpinorRealization::new(g.clone()).verify().map_err(|e| e.to_string());
            passed &= r.is_ok();
            realizations.insert(name.into(), json!({ "ok": r.is_ok(), "message": r.err() }));
        }
        let k = kappa_properties(&exp.g0, &exp.g1, &exp.grid)?;
        passed &= k.clifford_defect < tol.symbol && k.isometry_defect < tol.symbol;
        results["realizations"] = Value::Object(realizations);
        results["kappa"] = json!(k);
    }
    Ok((results, passed, Vec::new()))
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub nt: Vec<usize>,
    /// Max difference between successive refinements on the last slice.
    pub differences: Vec<f64>,
    pub order: f64,
}

/// Temporal order from three step counts nt, 2 nt, 4 nt: the solution on
/// the last slice is compared across successive refinements.
pub fn temporal_order(sys: &SHSystem, coarse: &Grid, h: &SliceData, deriv: DerivMode) -> Result<OrderReport, ExperimentError> {
    let last = |factor: usize| -> Result<SliceData, ExperimentError> {
        let g = coarse.refined(factor);
        let psi = SampledSystem::new(sys, &g, deriv)?.solve(None, h, crate::shs::Direction::Forward)?;
        Ok(psi.slice(g.nt))
    };
    let (u1, u2, u4) = (last(1)?, last(2)?, last(4)?);
    let (d1, d2) = (u1.max_diff(&u2), u2.max_diff(&u4));
    Ok(OrderReport {
        nt: vec![coarse.nt, 2 * coarse.nt, 4 * coarse.nt],
        differences: vec![d1, d2],
        order: (d1 / d2).log2(),
    })
}

pub const MIN_TEMPORAL_ORDER: f64 = 3.8;

fn run_solve(exp: &Experiment) -> Result<Stage, ExperimentError> {
    let tol = &exp.config.tolerances;
    let g = exp.grid;
    let sys = field_system(exp, &exp.g0);
    let s = SampledSystem::new(&sys, &g, exp.deriv)?;
    let psi = s.solve(None, &sample_data(exp, 0), crate::shs::Direction::Forward)?;
    let phi = s.solve(None, &sample_data(exp, 1), crate::shs::Direction::Forward)?;
    let residual = s.apply(&psi)?.max_abs() / psi.max_abs();
    let (d, values) = pairing_drift(exp, &exp.g0, &psi, &phi)?;
    let v_max = sys.max_char_speed(&g);
    let coarse = Grid::with_cfl(g.nx, g.t0, g.t1, 0.8, v_max)?;
    let order = temporal_order(&sys, &coarse, &sample_data(exp, 0), exp.deriv)?;
    let jet_defect = match exp.config.field {
        FieldKind::Scalar => Some(WaveSolution { psi: psi.clone() }.jet_defect(exp.deriv) / psi.max_abs()),
        FieldKind::Dirac => None,
    };
    let passed = residual < tol.residual
        && d.relative_drift < tol.drift
        && order.order >= MIN_TEMPORAL_ORDER
        && jet_defect.is_none_or(|j| j < tol.residual);
    let csv = csv_artifact(
        "solve_drift.csv",
        &["level", "t", "re", "im"],
        values.iter().enumerate().map(|(n, v)| vec![n.to_string(), g.t(n).to_string(), format!("{:e}", v.re), format!("{:e}", v.im)]),
    );
    let results = json!({
        "relative_residual": residual,
        "jet_defect": jet_defect,
        "pairing_drift": d,
        "temporal_order": order,
        "min_temporal_order": MIN_TEMPORAL_ORDER,
    });
    Ok((results, passed, vec![csv]))
}

fn run_green(exp: &Experiment) -> Result<Stage, ExperimentError> {
    let tol = &exp.config.tolerances;
    let g = exp.grid;
    let sys = field_system(exp, &exp.g0);
    let nc = sys.n;
    let s = Arc::new(SampledSystem::new(&sys, &g, exp.deriv)?);
    let len = g.t1 - g.t0;
    // off-centre in time so the mirrored control lands outside the cone
    let tc = g.t0 + 0.4 * len;
    let (rt, xc, rx) = (0.1 * len, std::f64::consts::PI, 1.2);
    let f = bump_source(&g, (tc, xc), (rt, rx), 0, nc)?;
    let b = SupportBox {
        t_min: tc - rt,
        t_max: tc + rt,
        x_center: xc,
        x_radius: rx,
    };
    let psi = s.solve(None, &sample_data(exp, 0), crate::shs::Direction::Forward)?;
    let metric = exp.g0.clone();
    let speed = ScalarField::new(true, true, move |t, x| metric.speed_at(t, x));
    let r = green_identities(&s, &speed, &f, &b, &psi, &exp.chi)?;
    let phi_src = bump_source(&g, (g.t0 + 0.65 * len, 1.0), (0.1 * len, 1.0), 1 % nc, nc)?;
    let psi_src = bump_source(&g, (g.t0 + 0.35 * len, 2.0), (0.1 * len, 1.0), 0, nc)?;
    let dual = duality_check(&sys, &g, exp.deriv, &phi_src, &psi_src)?;
    let identities = [r.s_of_g_plus, r.s_of_g_minus, r.g_plus_of_s, r.g_minus_of_s, r.s_of_causal, r.causal_of_s, r.localized_reconstruction];
    let passed = identities.iter().all(|v| *v < tol.green)
        && r.leakage_future < tol.leakage
        && r.leakage_past < tol.leakage
        && r.mirrored_control > 1e-2
        && dual.relative_defect < tol.green;
    Ok((json!({ "identities": r, "duality": dual }), passed, Vec::new()))
}

fn run_moller(exp: &Experiment) -> Result<Stage, ExperimentError> {
    let tol = &exp.config.tolerances;
    let m = moller_map(exp)?;
    let count = exp.config.samples.count;
    let rows = par_map(count, |i| -> Result<MollerReport, ExperimentError> {
        let psi = m.solve_source_system(&sample_data(exp, i))?;
        let r = m.apply(&psi)?;
        let before = slice_pairing(exp, &exp.g0, &psi, &psi, 0)?;
        let after = slice_pairing(exp, &exp.g1, &r, &r, m.grid.nt)?;
        let conservation_ratio = match exp.config.field {
            FieldKind::Dirac => conservation_report(before, after).ratio,
            // sigma(u, u) vanishes; pair with the next sample instead
            FieldKind::Scalar => {
                let phi = m.solve_source_system(&sample_data(exp, i + count))?;
                let rphi = m.apply(&phi)?;
                let b = slice_pairing(exp, &exp.g0, &psi, &phi, 0)?;
                let a = slice_pairing(exp, &exp.g1, &r, &rphi, m.grid.nt)?;
                conservation_report(b, a).ratio
            }
        };
        Ok(MollerReport {
            intertwining_residual: m.intertwining_residual(&psi, &r)?,
            roundtrip_residual: m.roundtrip_residual(&psi, &r)?,
            conservation_ratio,
            support_leakage: m.support_leakage(&psi)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let psi1 = m.solve_target_system(&sample_data(exp, 2 * count))?;
    let reverse = m.reverse_roundtrip_residual(&psi1)?;
    let max = |f: fn(&MollerReport) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let (inter, round, leak) = (max(|r| r.intertwining_residual), max(|r| r.roundtrip_residual), max(|r| r.support_leakage));
    let mut passed = inter < tol.intertwining && round < tol.roundtrip && reverse < tol.roundtrip && leak < tol.leakage;
    let mut results = json!({
        "samples": rows,
        "max_intertwining_residual": inter,
        "max_roundtrip_residual": round,
        "reverse_roundtrip_residual": reverse,
        "max_support_leakage": leak,
    });
    if exp.config.field == FieldKind::Dirac {
        let g = exp.grid;
        let dual = MollerMap::dirac_dual(&exp.g0, &exp.g1, exp.chi, rho_weight(exp), &g, exp.deriv)?;
        let phi = dual.solve_source_system(&sample_data(exp, 3 * count))?;
        let len = g.t1 - g.t0;
        let tests = (0..3)
            .map(|k| bump_source(&g, (g.t0 + len * (0.35 + 0.15 * k as f64), 1.0 + k as f64), (0.1 * len, 1.5), k % 2, 2))
            .collect::<Result<Vec<_>, _>>()?;
        let d = dual_intertwiner_check(&dual, &exp.g0, &exp.g1, &phi, &tests)?;
        passed &= d.pairing_residual < tol.intertwining && d.adjoint_residual < tol.intertwining;
        results["dual"] = json!(d);
    }
    let csv = csv_artifact(
        "moller_samples.csv",
        &["sample", "intertwining", "roundtrip", "conservation_ratio", "support_leakage"],
        rows.iter().enumerate().map(|(i, r)| {
            vec![
                i.to_string(),
                format!("{:e}", r.intertwining_residual),
                format!("{:e}", r.roundtrip_residual),
                format!("{:e}", r.conservation_ratio),
                format!("{:e}", r.support_leakage),
            ]
        }),
    );
    Ok((results, passed, vec![csv]))
}

#[derive(Debug, Clone, Serialize)]
struct PairRow {
    pair: (usize, usize),
    report: ConservationReport,
    source_drift: f64,
    target_drift: f64,
}

fn run_conserve(exp: &Experiment) -> Result<Stage, ExperimentError> {
    let tol = &exp.config.tolerances;
    let m = moller_map(exp)?;
    let count = exp.config.samples.count;
    let nt = m.grid.nt;
    let solved = par_map(count, |i| -> Result<(GridField, GridField), ExperimentError> {
        let psi = m.solve_source_system(&sample_data(exp, i))?;
        let r = m.apply(&psi)?;
        Ok((psi, r))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let rows = par_map(count, |i| -> Result<PairRow, ExperimentError> {
        // Hermitian products pair a sample with itself; the symplectic form
        // needs two different solutions.
        let j = match exp.config.field {
            FieldKind::Dirac => i,
            FieldKind::Scalar => (i + 1) % count,
        };
        let (psi, rpsi) = &solved[i];
        let (phi, rphi) = &solved[j];
        let before = slice_pairing(exp, &exp.g0, psi, phi, 0)?;
        let after = slice_pairing(exp, &exp.g1, rpsi, rphi, nt)?;
        Ok(PairRow {
            pair: (i, j),
            report: conservation_report(before, after),
            source_drift: pairing_drift(exp, &exp.g0, psi, phi)?.0.relative_drift,
            target_drift: pairing_drift(exp, &exp.g1, rpsi, rphi)?.0.relative_drift,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    if exp.config.field == FieldKind::Scalar && count < 2 {
        return Err(ExperimentError::Unsupported("conserve for the scalar field needs samples.count >= 2".into()));
    }
    let max_defect = rows.iter().map(|r| r.report.relative_defect).fold(0.0, f64::max);
    let max_drift = rows.iter().map(|r| r.source_drift.max(r.target_drift)).fold(0.0, f64::max);
    let ratios: Vec<f64> = rows.iter().map(|r| r.report.ratio).collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let passed = max_defect < tol.conservation && max_drift < tol.drift;
    let csv = csv_artifact(
        "conserve_pairs.csv",
        &["i", "j", "before_re", "after_re", "ratio", "relative_defect", "source_drift", "target_drift"],
        rows.iter().map(|r| {
            vec![
                r.pair.0.to_string(),
                r.pair.1.to_string(),
                format!("{:e}", r.report.before_re),
                format!("{:e}", r.report.after_re),
                format!("{:e}", r.report.ratio),
                format!("{:e}", r.report.relative_defect),
                format!("{:e}", r.source_drift),
                format!("{:e}", r.target_drift),
            ]
        }),
    );
    let results = json!({
        "pairs": rows,
        "max_relative_defect": max_defect,
        "max_slice_drift": max_drift,
        "mean_ratio": mean_ratio,
    });
    Ok((results, passed, vec![csv]))
}

fn run_state(exp: &Experiment) -> Result<Stage, ExperimentError> {
    let tol = &exp.config.tolerances;
    if exp.config.field != FieldKind::Scalar {
        return Err(ExperimentError::Unsupported("the state pipeline needs field = \"scalar\"".into()));
    }
    let mass = exp.config.mass;
    if exp.potential.as_const() != Some(mass * mass) {
        return Err(ExperimentError::Unsupported("the state pipeline needs the Klein-Gordon potential V = mass^2".into()));
    }
    let m = moller_map(exp)?;
    let st = &exp.config.state;
    let k1 = slice_ground_state(&exp.g1, mass, exp.grid.t1, st.k_max)?;
    let path = default_path(&m);
    let k0 = pullback_state(&k1, &m, &exp.g0, &exp.g1, st.t_ref, path)?;
    let reference = slice_ground_state(&exp.g0, mass, k0.t_ref, st.k_max)?;
    let decay = smoothness_proxy(&k0, &reference)?;
    let (min_eig, comm, herm) = (k0.min_eigenvalue(), k0.commutator_defect(), k0.hermiticity_defect());
    let passed = min_eig >= tol.positivity && comm < tol.commutator && decay.slope <= tol.slope;
    let mut kernel = serde_json::to_string_pretty(&k0.dump()).expect("kernel dump");
    kernel.push('\n');
    let mut decay_csv = Vec::new();
    write_decay_csv(&decay, &mut decay_csv).map_err(|e| ExperimentError::Output {
        path: "state_decay.csv".into(),
        message: e.to_string(),
    })?;
    let results = json!({
        "path": path,
        "t_ref": k0.t_ref,
        "K": st.k_max,
        "min_eigenvalue": min_eig,
        "commutator_defect": comm,
        "hermiticity_defect": herm,
        "decay": decay,
    });
    let artifacts = vec![
        Artifact {
            name: "state_kernel.json".into(),
            bytes: kernel.into_bytes(),
        },
        Artifact {
            name: "state_decay.csv".into(),
            bytes: decay_csv,
        },
    ];
    Ok((results, passed, artifacts))
}
