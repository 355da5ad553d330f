//! DC operating point and transient analysis by modified nodal analysis.
//!
//! Unknowns are the non-ground node voltages followed by one branch current
//! per voltage source. Each Newton iteration assembles a dense Jacobian and
//! solves it by LU with partial pivoting. Capacitors (explicit, device and
//! `cmin` to ground) enter the transient problem through backward-Euler or
//! trapezoidal companion models.

mod circuit;
mod lu;
mod waveform;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::Netlist;
use circuit::{Circuit, Companion, Context, NewtonFailure};

pub use waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    BackwardEuler,
    /// Trapezoidal, with a backward-Euler step at t = 0 and after every
    /// breakpoint.
    #[default]
    Trapezoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Absolute KCL residual tolerance (A).
    pub abstol: f64,
    pub reltol: f64,
    /// Absolute voltage tolerance (V).
    pub vntol: f64,
    /// Conductance to ground on every node not pinned by a grounded source (S).
    pub gmin: f64,
    pub max_newton: usize,
    /// Nominal timestep (s).
    pub tstep: f64,
    pub tstop: f64,
    pub integrator: Integrator,
    /// Capacitance from every node to ground during transient (F).
    pub cmin: f64,
    /// Step halvings allowed at one time point before giving up.
    pub max_halvings: u32,
    /// Step used right after each breakpoint; grows by `step_growth` per
    /// accepted step back to `tstep`. `None` keeps the fixed `tstep`.
    pub edge_step: Option<f64>,
    pub step_growth: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            abstol: 1e-12,
            reltol: 1e-4,
            vntol: 1e-6,
            gmin: 1e-12,
            max_newton: 200,
            tstep: 1e-11,
            tstop: 1e-9,
            integrator: Integrator::Trapezoidal,
            cmin: 1e-18,
            max_halvings: 8,
            edge_step: None,
            step_growth: 1.05,
        }
    }
}

impl SimConfig {
    pub fn transient(tstop: f64, tstep: f64) -> Self {
        SimConfig {
            tstop,
            tstep,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidConfig(what.to_string()));
        if !(self.abstol > 0.0 && self.reltol > 0.0 && self.vntol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.gmin >= 0.0 && self.cmin >= 0.0) {
            return bad("gmin and cmin must be non-negative");
        }
        if self.max_newton == 0 {
            return bad("max_newton must be at least 1");
        }
        if !(self.tstop > 0.0) {
            return bad("tstop must be positive");
        }
        if !(self.tstep > 0.0 && self.tstep <= self.tstop) {
            return bad("tstep must lie in (0, tstop]");
        }
        if let Some(h) = self.edge_step {
            if !(h > 0.0 && h <= self.tstep) {
                return bad("edge_step must lie in (0, tstep]");
            }
        }
        if !(self.step_growth >= 1.0) {
            return bad("step_growth must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error("netlist still contains subcircuit instances; flatten it first")]
    NotFlat,
    #[error("device `{device}` references unknown model `{model}`")]
    UnknownModel { device: String, model: String },
    #[error("no convergence{}: worst residual {residual:.3e} at `{unknown}`", at_time(*.time))]
    NoConvergence {
        unknown: String,
        residual: f64,
        time: Option<f64>,
    },
    #[error("singular matrix at `{unknown}`{}", at_time(*.time))]
    Singular { unknown: String, time: Option<f64> },
    #[error("timestep underflow at t = {time:.6e} s (step {step:.3e} s)")]
    StepUnderflow { time: f64, step: f64 },
    #[error("unknown source `{0}`")]
    UnknownSource(String),
}

fn at_time(t: Option<f64>) -> String {
    t.map(|t| format!(" at t = {t:.6e} s")).unwrap_or_default()
}

impl SimError {
    /// True for failures of the numerical solve, as opposed to bad input.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            SimError::NoConvergence { .. } | SimError::Singular { .. } | SimError::StepUnderflow { .. }
        )
    }
}

/// How the DC solver is allowed to reach the operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcStrategy {
    /// Plain Newton, then gmin stepping, then source stepping.
    #[default]
    Auto,
    Newton,
    GminStepping,
    SourceStepping,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub voltages: BTreeMap<String, f64>,
    /// Branch current per source, positive when delivered into the circuit.
    pub currents: BTreeMap<String, f64>,
    /// Strategy that produced the solution (never `Auto`).
    pub strategy: DcStrategy,
}

impl OperatingPoint {
    pub fn voltage(&self, node: &str) -> f64 {
        if node == crate::netlist::GROUND {
            0.0
        } else {
            self.voltages.get(node).copied().unwrap_or(f64::NAN)
        }
    }
}

fn failure(circuit: &Circuit, fail: NewtonFailure, time: Option<f64>) -> SimError {
    match fail {
        NewtonFailure::NoConvergence { row, residual } => SimError::NoConvergence {
            unknown: circuit.unknown_name(row),
            residual,
            time,
        },
        NewtonFailure::Singular(row) => SimError::Singular {
            unknown: circuit.unknown_name(row),
            time,
        },
    }
}

fn solve_dc(
    circuit: &Circuit,
    config: &SimConfig,
    time: f64,
    source_scale: f64,
    strategy: DcStrategy,
) -> Result<(Vec<f64>, DcStrategy), SimError> {
    let zeros = vec![0.0; circuit.dim()];
    let ctx = |gmin: f64, scale: f64| Context {
        time,
        source_scale: scale,
        gmin,
        companion: None,
    };
    let newton = || circuit.newton(&zeros, &ctx(config.gmin, source_scale), config);
    let gmin_stepping = || -> Result<Vec<f64>, NewtonFailure> {
        let mut x = zeros.clone();
        for decade in (0..=6).rev() {
            let g = config.gmin * 10f64.powi(decade);
            x = circuit.newton(&x, &ctx(g, source_scale), config)?;
        }
        Ok(x)
    };
    let source_stepping = || -> Result<Vec<f64>, NewtonFailure> {
        let mut x = zeros.clone();
        for k in 1..=10 {
            let s = source_scale * k as f64 / 10.0;
            x = circuit.newton(&x, &ctx(config.gmin, s), config)?;
        }
        Ok(x)
    };
    let err = |f| failure(circuit, f, Some(time).filter(|t| *t != 0.0));
    match strategy {
        DcStrategy::Newton => newton().map(|x| (x, DcStrategy::Newton)).map_err(err),
        DcStrategy::GminStepping => gmin_stepping().map(|x| (x, DcStrategy::GminStepping)).map_err(err),
        DcStrategy::SourceStepping => source_stepping()
            .map(|x| (x, DcStrategy::SourceStepping))
            .map_err(err),
        DcStrategy::Auto => newton()
            .map(|x| (x, DcStrategy::Newton))
            .or_else(|_| gmin_stepping().map(|x| (x, DcStrategy::GminStepping)))
            .or_else(|_| source_stepping().map(|x| (x, DcStrategy::SourceStepping)))
            .map_err(err),
    }
}

/// DC operating point with every source scaled by `source_scale`.
pub fn dc_operating_point(netlist: &Netlist, config: &SimConfig, source_scale: f64) -> Result<OperatingPoint, SimError> {
    dc_operating_point_with(netlist, config, source_scale, DcStrategy::Auto)
}

pub fn dc_operating_point_with(
    netlist: &Netlist,
    config: &SimConfig,
    source_scale: f64,
    strategy: DcStrategy,
) -> Result<OperatingPoint, SimError> {
    let circuit = Circuit::compile(netlist, config)?;
    let (x, used) = solve_dc(&circuit, config, 0.0, source_scale, strategy)?;
    let n = circuit.node_names.len();
    Ok(OperatingPoint {
        voltages: circuit.node_names.iter().cloned().zip(x.iter().copied()).collect(),
        currents: circuit
            .sources
            .iter()
            .enumerate()
            .map(|(k, s)| (s.name.clone(), x[n + k]))
            .collect(),
        strategy: used,
    })
}

fn breakpoints(circuit: &Circuit, tstop: f64) -> Vec<f64> {
    let mut bps: Vec<f64> = circuit
        .sources
        .iter()
        .flat_map(|s| s.waveform.breakpoints(tstop))
        .filter(|&t| t > 0.0 && t < tstop)
        .collect();
    bps.push(tstop);
    bps.sort_by(f64::total_cmp);
    let tol = tstop * 1e-12;
    bps.dedup_by(|b, a| (*b - *a).abs() <= tol);
    bps
}

/// Transient analysis from the DC operating point at t = 0.
pub fn transient(netlist: &Netlist, config: &SimConfig) -> Result<Waveform, SimError> {
    config.validate()?;
    let circuit = Circuit::compile(netlist, config)?;
    let n = circuit.node_names.len();
    let (mut x, _) = solve_dc(&circuit, config, 0.0, 1.0, DcStrategy::Auto)?;

    let mut wave = Waveform {
        times: Vec::new(),
        node_names: circuit.node_names.clone(),
        voltages: vec![Vec::new(); n],
        source_names: circuit.sources.iter().map(|s| s.name.clone()).collect(),
        currents: vec![Vec::new(); circuit.sources.len()],
        source_terminals: circuit
            .sources
            .iter()
            .map(|s| (s.pos_name.clone(), s.neg_name.clone()))
            .collect(),
    };
    let record = |wave: &mut Waveform, t: f64, x: &[f64]| {
        wave.times.push(t);
        for i in 0..n {
            wave.voltages[i].push(x[i]);
        }
        for k in 0..wave.currents.len() {
            wave.currents[k].push(x[n + k]);
        }
    };
    record(&mut wave, 0.0, &x);

    let bps = breakpoints(&circuit, config.tstop);
    let restart_step = config.edge_step.unwrap_or(config.tstep);
    let mut v_prev = circuit.cap_voltages(&x);
    let mut i_prev = vec![0.0; circuit.caps.len()];
    let mut t = 0.0;
    let mut next_bp = 0;
    let mut h = restart_step;
    let mut after_break = true;

    while next_bp < bps.len() {
        let target = bps[next_bp];
        let mut step = h.min(config.tstep);
        let mut hits = false;
        if t + step >= target - 0.25 * step {
            step = target - t;
            hits = true;
        }
        let mut halvings = 0;
        let (x_new, i_new) = loop {
            let be = after_break || config.integrator == Integrator::BackwardEuler;
            let comp = Companion {
                factor: if be { 1.0 / step } else { 2.0 / step },
                trapezoidal: !be,
                v_prev: &v_prev,
                i_prev: &i_prev,
            };
            let ctx = Context {
                time: t + step,
                source_scale: 1.0,
                gmin: config.gmin,
                companion: Some(comp),
            };
            match circuit.newton(&x, &ctx, config) {
                Ok(xn) => {
                    let currents = circuit.cap_currents(&xn, ctx.companion.as_ref().expect("transient companion"));
                    break (xn, currents);
                }
                Err(_) if halvings < config.max_halvings => {
                    halvings += 1;
                    step *= 0.5;
                    hits = false;
                }
                Err(_) => return Err(SimError::StepUnderflow { time: t, step }),
            }
        };
        x = x_new;
        i_prev = i_new;
        v_prev = circuit.cap_voltages(&x);
        if hits {
            t = target;
            next_bp += 1;
            after_break = true;
            h = restart_step;
        } else {
            t += step;
            after_break = false;
            h = (step * config.step_growth).min(config.tstep);
        }
        record(&mut wave, t, &x);
    }
    Ok(wave)
}

/// Branch current series of a source, positive = delivered into the circuit.
pub fn supply_current<'a>(waveform: &'a Waveform, source: &str) -> Result<&'a [f64], SimError> {
    waveform
        .current(source)
        .ok_or_else(|| SimError::UnknownSource(source.to_string()))
}
