//! The XNOR, XNOR/XOR and full-adder cells with their stimulus and truth
//! oracle, plus an inverter and a static CMOS XNOR used as engine baselines.

mod oracle;
mod stimulus;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Card, Polarity};
use crate::engine::{transient, Integrator, SimConfig, SimError, Waveform};
use crate::measure::{measure, MeasureError, MeasurementReport, StimulusPlan, Thresholds};
use crate::netlist::{
    flatten, Capacitor, Device, Instance, Mosfet, Netlist, SourceWaveform, Subcircuit, VoltageSource, GROUND,
};

pub use oracle::{adder_decomposed, adder_direct, oracle};
pub use stimulus::{pattern_tour, standard_stimulus, StimulusOptions};

/// Name of the NMOS model card in every built deck.
pub const NMOS_MODEL: &str = "nch";
/// Name of the PMOS model card in every built deck.
pub const PMOS_MODEL: &str = "pch";
pub const SUPPLY: &str = "vdd";

const L: f64 = 0.35e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Xnor3t,
    XnorXor5t,
    Adder8t,
    Inverter,
    /// Twelve-transistor static CMOS XNOR with input inverters. A reference
    /// baseline, not one of the pass-transistor designs.
    CmosXnorRef,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [
        CellKind::Xnor3t,
        CellKind::XnorXor5t,
        CellKind::Adder8t,
        CellKind::Inverter,
        CellKind::CmosXnorRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Xnor3t => "xnor3t",
            CellKind::XnorXor5t => "xnorxor5t",
            CellKind::Adder8t => "adder8t",
            CellKind::Inverter => "inverter",
            CellKind::CmosXnorRef => "cmos_xnor_ref",
        }
    }

    /// Input node names in bit order.
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            CellKind::Adder8t => &["a", "b", "cin"],
            CellKind::Inverter => &["a"],
            _ => &["a", "b"],
        }
    }

    /// Output node names in bit order.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            CellKind::XnorXor5t => &["xnor", "xor"],
            CellKind::Adder8t => &["sum", "cout"],
            _ => &["out"],
        }
    }

    /// Text of the bundled deck in `cells/<name>.sp`.
    pub fn deck(self) -> &'static str {
        match self {
            CellKind::Xnor3t => include_str!("../../cells/xnor3t.sp"),
            CellKind::XnorXor5t => include_str!("../../cells/xnorxor5t.sp"),
            CellKind::Adder8t => include_str!("../../cells/adder8t.sp"),
            CellKind::Inverter => include_str!("../../cells/inverter.sp"),
            CellKind::CmosXnorRef => include_str!("../../cells/cmos_xnor_ref.sp"),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = CellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| CellError::UnknownCell(s.to_string()))
    }
}

/// Wiring of the 3-transistor XNOR.
///
/// Both variants share P1 (source vdd, gate B, drain out) and N1 (gate A,
/// channel between B and out).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Xnor3tWiring {
    /// N2 gate B, channel between A and out. N1 and N2 both pass the high
    /// at A = B = 1 and N2 passes A's low at A = 0, B = 1.
    #[default]
    PassPair,
    /// N2 gate B, drain out, source ground. At A = B = 1 N1 fights N2 and
    /// the high is ratioed.
    GroundedN2,
}

impl FromStr for Xnor3tWiring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "pass-pair" => Ok(Xnor3tWiring::PassPair),
            "grounded-n2" => Ok(Xnor3tWiring::GroundedN2),
            other => Err(format!("unknown wiring `{other}` (expected pass-pair or grounded-n2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("unknown cell `{0}` (expected xnor3t, xnorxor5t, adder8t, inverter or cmos_xnor_ref)")]
    UnknownCell(String),
    #[error("vdd {0} V is outside [1, 5] V")]
    VddOutOfRange(f64),
    #[error("load capacitance must be non-negative, got {0:e} F")]
    NegativeLoad(f64),
    #[error("sizing of `{device}` must be positive (W={w:e}, L={l:e})")]
    BadSizing { device: String, w: f64, l: f64 },
    #[error("sizing override names unknown device `{0}`")]
    UnknownDevice(String),
    #[error("{cell} takes {expected} inputs, got {found}")]
    Arity { cell: CellKind, expected: usize, found: usize },
    #[error("adder decompositions disagree at inputs {inputs:?}")]
    OracleMismatch { inputs: Vec<bool> },
    #[error("bad stimulus: {0}")]
    Stimulus(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Optional W and L override for one device (m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sizing {
    pub w: Option<f64>,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: CellKind,
    pub vdd: f64,
    /// Load on every output (F).
    pub load_cap: f64,
    /// Overrides keyed by device name. For the adder, names of the XNOR
    /// template (`mp1`, `mn1`, `mn2`) apply to both stages; flattened names
    /// such as `m.x2.mn1` address one stage.
    pub sizing: BTreeMap<String, Sizing>,
    pub wiring: Xnor3tWiring,
    pub card: Card,
}

impl CellSpec {
    pub fn new(kind: CellKind, vdd: f64) -> Self {
        CellSpec {
            kind,
            vdd,
            load_cap: 10e-15,
            sizing: BTreeMap::new(),
            wiring: Xnor3tWiring::default(),
            card: Card::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CellError> {
        if !(1.0..=5.0).contains(&self.vdd) {
            return Err(CellError::VddOutOfRange(self.vdd));
        }
        if !(self.load_cap >= 0.0) {
            return Err(CellError::NegativeLoad(self.load_cap));
        }
        for (name, s) in &self.sizing {
            let (w, l) = (s.w.unwrap_or(1.0), s.l.unwrap_or(1.0));
            if !(w > 0.0 && l > 0.0) {
                return Err(CellError::BadSizing {
                    device: name.clone(),
                    w,
                    l,
                });
            }
        }
        Ok(())
    }
}

fn mos(name: &str, polarity: Polarity, d: &str, g: &str, s: &str, w: f64) -> Device {
    let (model, body) = match polarity {
        Polarity::N => (NMOS_MODEL, GROUND),
        Polarity::P => (PMOS_MODEL, SUPPLY),
    };
    Device::Mosfet(Mosfet {
        name: name.to_string(),
        polarity,
        drain: d.to_string(),
        gate: g.to_string(),
        source: s.to_string(),
        body: body.to_string(),
        w,
        l: L,
        model: model.to_string(),
    })
}

fn dc_source(name: &str, node: &str, v: f64) -> Device {
    Device::VoltageSource(VoltageSource {
        name: name.to_string(),
        pos: node.to_string(),
        neg: GROUND.to_string(),
        waveform: SourceWaveform::Dc(v),
    })
}

fn xnor3t_devices(wiring: Xnor3tWiring, a: &str, b: &str, out: &str) -> Vec<Device> {
    use Polarity::{N, P};
    let n2 = match wiring {
        Xnor3tWiring::PassPair => mos("mn2", N, out, b, a, 1.0e-6),
        Xnor3tWiring::GroundedN2 => mos("mn2", N, out, b, GROUND, 1.0e-6),
    };
    vec![
        mos("mp1", P, out, b, SUPPLY, 2.0e-6),
        mos("mn1", N, out, a, b, 5.0e-6),
        n2,
    ]
}

fn apply_sizing(devices: &mut [Device], sizing: &BTreeMap<String, Sizing>, used: &mut Vec<String>) {
    for d in devices.iter_mut() {
        if let Device::Mosfet(m) = d {
            if let Some(s) = sizing.get(&m.name) {
                m.w = s.w.unwrap_or(m.w);
                m.l = s.l.unwrap_or(m.l);
                used.push(m.name.clone());
            }
        }
    }
}

/// Flat netlist of a cell with DC-zero input sources and a load on every
/// output.
pub fn build_cell(spec: &CellSpec) -> Result<Netlist, CellError> {
    use Polarity::{N, P};
    spec.validate()?;
    let kind = spec.kind;
    let mut n = Netlist::new(kind.name());
    n.models.insert(NMOS_MODEL.into(), spec.card.model(N));
    n.models.insert(PMOS_MODEL.into(), spec.card.model(P));
    let mut used = Vec::new();

    n.devices.push(dc_source("vdd", SUPPLY, spec.vdd));
    for input in kind.inputs() {
        n.devices.push(dc_source(&format!("v{input}"), input, 0.0));
    }
    match kind {
        CellKind::Xnor3t => n.devices.extend(xnor3t_devices(spec.wiring, "a", "b", "out")),
        CellKind::XnorXor5t => {
            n.devices.extend(xnor3t_devices(spec.wiring, "a", "b", "xnor"));
            n.devices.push(mos("mp2", P, "xor", "xnor", SUPPLY, 2.0e-6));
            n.devices.push(mos("mn3", N, "xor", "xnor", GROUND, 1.0e-6));
        }
        CellKind::Adder8t => {
            let mut template = xnor3t_devices(spec.wiring, "a", "b", "out");
            apply_sizing(&mut template, &spec.sizing, &mut used);
            n.globals.insert(SUPPLY.into());
            n.subcircuits.insert(
                "xnor3t".into(),
                Subcircuit {
                    name: "xnor3t".into(),
                    ports: vec!["a".into(), "b".into(), "out".into()],
                    devices: template,
                },
            );
            for (name, nodes) in [("x1", ["a", "b", "h"]), ("x2", ["h", "cin", "sum"])] {
                n.devices.push(Device::Instance(Instance {
                    name: name.into(),
                    subckt: "xnor3t".into(),
                    nodes: nodes.iter().map(|s| s.to_string()).collect(),
                }));
            }
            n.devices.push(mos("mn3", N, "cout", "h", "a", 1.0e-6));
            n.devices.push(mos("mp2", P, "cout", "h", "cin", 2.0e-6));
        }
        CellKind::Inverter => {
            n.devices.push(mos("mp1", P, "out", "a", SUPPLY, 2.0e-6));
            n.devices.push(mos("mn1", N, "out", "a", GROUND, 1.0e-6));
        }
        CellKind::CmosXnorRef => {
            n.devices.extend([
                mos("mp_ia", P, "an", "a", SUPPLY, 2.0e-6),
                mos("mn_ia", N, "an", "a", GROUND, 1.0e-6),
                mos("mp_ib", P, "bn", "b", SUPPLY, 2.0e-6),
                mos("mn_ib", N, "bn", "b", GROUND, 1.0e-6),
                mos("mn1", N, "out", "a", "n1", 2.0e-6),
                mos("mn2", N, "n1", "bn", GROUND, 2.0e-6),
                mos("mn3", N, "out", "an", "n2", 2.0e-6),
                mos("mn4", N, "n2", "b", GROUND, 2.0e-6),
                mos("mp1", P, "p1", "a", SUPPLY, 4.0e-6),
                mos("mp2", P, "p1", "bn", SUPPLY, 4.0e-6),
                mos("mp3", P, "out", "an", "p1", 4.0e-6),
                mos("mp4", P, "out", "b", "p1", 4.0e-6),
            ]);
        }
    }
    for out in kind.outputs() {
        n.devices.push(Device::Capacitor(Capacitor {
            name: format!("cl_{out}"),
            pos: out.to_string(),
            neg: GROUND.into(),
            value: spec.load_cap,
        }));
    }
    n.rebuild_nodes();
    let mut flat = flatten(&n).map_err(|e| CellError::Stimulus(e.to_string()))?;
    apply_sizing(&mut flat.devices, &spec.sizing, &mut used);
    if let Some(unknown) = spec.sizing.keys().find(|k| !used.contains(k)) {
        return Err(CellError::UnknownDevice(unknown.clone()));
    }
    Ok(flat)
}

/// Replace same-named sources of `netlist` with `sources`.
pub fn with_sources(netlist: &Netlist, sources: &[VoltageSource]) -> Netlist {
    let mut out = netlist.clone();
    for s in sources {
        match out.device_mut(&s.name) {
            Some(d) => *d = Device::VoltageSource(s.clone()),
            None => out.push(Device::VoltageSource(s.clone())),
        }
    }
    out.rebuild_nodes();
    out
}

/// Set the cell inputs to fixed logic levels.
pub fn with_static_inputs(netlist: &Netlist, kind: CellKind, bits: &[bool], vdd: f64) -> Result<Netlist, CellError> {
    let inputs = kind.inputs();
    if bits.len() != inputs.len() {
        return Err(CellError::Arity {
            cell: kind,
            expected: inputs.len(),
            found: bits.len(),
        });
    }
    let sources: Vec<VoltageSource> = inputs
        .iter()
        .zip(bits)
        .map(|(node, &b)| VoltageSource {
            name: format!("v{node}"),
            pos: node.to_string(),
            neg: GROUND.into(),
            waveform: SourceWaveform::Dc(if b { vdd } else { 0.0 }),
        })
        .collect();
    Ok(with_sources(netlist, &sources))
}

/// Transient settings matched to a stimulus: nominal step 1/200 of the
/// pattern period, restarting at 1/20 of the edge time after each corner.
pub fn sim_config_for(plan: &StimulusPlan) -> SimConfig {
    SimConfig {
        tstop: plan.tstop(),
        tstep: plan.pattern_period / 200.0,
        edge_step: Some(plan.rise / 20.0),
        integrator: Integrator::Trapezoidal,
        ..SimConfig::default()
    }
}

/// Everything produced by one characterization run.
#[derive(Debug, Clone)]
pub struct Characterization {
    pub netlist: Netlist,
    pub plan: StimulusPlan,
    pub waveform: Waveform,
    pub report: MeasurementReport,
}

/// Build, stimulate, simulate and measure one cell.
pub fn characterize(
    spec: &CellSpec,
    options: StimulusOptions,
    thresholds: Thresholds,
) -> Result<Characterization, CellError> {
    let base = build_cell(spec)?;
    let (sources, plan) = standard_stimulus(spec.kind, spec.vdd, options)?;
    let netlist = with_sources(&base, &sources);
    let waveform = transient(&netlist, &sim_config_for(&plan))?;
    let report = measure(&waveform, &plan, thresholds)?;
    Ok(Characterization {
        netlist,
        plan,
        waveform,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widths(n: &Netlist) -> Vec<f64> {
        n.mosfets().map(|m| m.w).collect()
    }

    #[test]
    fn device_counts() {
        let count = |k| build_cell(&CellSpec::new(k, 3.3)).unwrap().mosfets().count();
        assert_eq!(count(CellKind::Xnor3t), 3);
        assert_eq!(count(CellKind::XnorXor5t), 5);
        assert_eq!(count(CellKind::Adder8t), 8);
        assert_eq!(count(CellKind::Inverter), 2);
        assert_eq!(count(CellKind::CmosXnorRef), 12);
    }

    #[test]
    fn xnor3t_sizing() {
        let n = build_cell(&CellSpec::new(CellKind::Xnor3t, 3.3)).unwrap();
        assert_eq!(widths(&n), vec![2.0e-6, 5.0e-6, 1.0e-6]);
        assert!(n.mosfets().all(|m| m.l == 0.35e-6));
    }

    #[test]
    fn adder_template_override_hits_both_stages() {
        let mut spec = CellSpec::new(CellKind::Adder8t, 3.3);
        spec.sizing.insert("mn1".into(), Sizing { w: Some(7e-6), l: None });
        spec.sizing.insert("m.x2.mp1".into(), Sizing { w: Some(3e-6), l: None });
        let n = build_cell(&spec).unwrap();
        let m = |name: &str| match n.device(name) {
            Some(Device::Mosfet(m)) => m.w,
            _ => panic!("{name} missing"),
        };
        assert_eq!(m("m.x1.mn1"), 7e-6);
        assert_eq!(m("m.x2.mn1"), 7e-6);
        assert_eq!(m("m.x2.mp1"), 3e-6);
        assert_eq!(m("m.x1.mp1"), 2e-6);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            build_cell(&CellSpec::new(CellKind::Xnor3t, 0.5)),
            Err(CellError::VddOutOfRange(_))
        ));
        let mut spec = CellSpec::new(CellKind::Xnor3t, 3.3);
        spec.sizing.insert("mn1".into(), Sizing { w: Some(-1e-6), l: None });
        assert!(matches!(build_cell(&spec), Err(CellError::BadSizing { .. })));
        let mut spec = CellSpec::new(CellKind::Xnor3t, 3.3);
        spec.sizing.insert("mq9".into(), Sizing::default());
        assert!(matches!(build_cell(&spec), Err(CellError::UnknownDevice(_))));
        assert!("nand2".parse::<CellKind>().is_err());
    }

    #[test]
    fn bundled_decks_match_builder() {
        for kind in CellKind::ALL {
            let parsed = crate::netlist::parse(kind.deck()).unwrap();
            let flat = flatten(&parsed).unwrap();
            assert_eq!(flat, build_cell(&CellSpec::new(kind, 3.3)).unwrap(), "{kind}");
        }
    }
}
