//! Netlist data model, parser, writer, subcircuit flattening and validation.
//!
//! The deck grammar is a small subset of classic SPICE; see `GRAMMAR.md` at
//! the crate root.

mod flatten;
mod parse;
pub mod units;
mod validate;
mod write;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::device::{Geometry, MosModel, Polarity};

pub use flatten::{flatten, FlattenError};
pub use parse::{parse, ParseError, ParseErrorKind};
pub use validate::{validate, Diagnostic};
pub use write::write_deck;

/// Reserved ground node name. `gnd` is accepted as an alias on input.
pub const GROUND: &str = "0";

/// Canonical form of a node name.
pub fn canonical_node(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    if lower == "gnd" {
        GROUND.to_string()
    } else {
        lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mosfet {
    pub name: String,
    pub polarity: Polarity,
    pub drain: String,
    pub gate: String,
    pub source: String,
    pub body: String,
    /// Channel width (m).
    pub w: f64,
    /// Channel length (m).
    pub l: f64,
    pub model: String,
}

impl Mosfet {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.w, self.l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacitor {
    pub name: String,
    pub pos: String,
    pub neg: String,
    /// Farads.
    pub value: f64,
}

/// Linear resistor. Only used by engine self-tests; the cell decks never
/// contain one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resistor {
    pub name: String,
    pub pos: String,
    pub neg: String,
    /// Ohms.
    pub value: f64,
}

/// SPICE `PULSE(v1 v2 td tr tf pw per)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub v1: f64,
    pub v2: f64,
    pub delay: f64,
    pub rise: f64,
    pub fall: f64,
    pub width: f64,
    /// Zero means a single pulse.
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceWaveform {
    Dc(f64),
    Pulse(Pulse),
    /// Piecewise-linear `(time, value)` corners with strictly increasing times.
    Pwl(Vec<(f64, f64)>),
}

impl SourceWaveform {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            SourceWaveform::Dc(v) => *v,
            SourceWaveform::Pulse(p) => p.value_at(t),
            SourceWaveform::Pwl(points) => pwl_value(points, t),
        }
    }

    /// Slope discontinuities inside `[0, tstop]`.
    pub fn breakpoints(&self, tstop: f64) -> Vec<f64> {
        match self {
            SourceWaveform::Dc(_) => Vec::new(),
            SourceWaveform::Pulse(p) => p.breakpoints(tstop),
            SourceWaveform::Pwl(points) => points
                .iter()
                .map(|&(t, _)| t)
                .filter(|&t| (0.0..=tstop).contains(&t))
                .collect(),
        }
    }

    /// Shortest ramp of the waveform (rise/fall or PWL segment), if any.
    pub fn shortest_edge(&self) -> Option<f64> {
        match self {
            SourceWaveform::Dc(_) => None,
            SourceWaveform::Pulse(p) => Some(p.rise.min(p.fall)),
            SourceWaveform::Pwl(points) => points
                .windows(2)
                .filter(|w| w[1].1 != w[0].1)
                .map(|w| w[1].0 - w[0].0)
                .reduce(f64::min),
        }
    }

    /// Shortest flat portion of a pulse train, used to size the default step.
    pub fn shortest_plateau(&self) -> Option<f64> {
        match self {
            SourceWaveform::Dc(_) => None,
            SourceWaveform::Pulse(p) => {
                let low = p.period - p.rise - p.fall - p.width;
                if p.period > 0.0 && low > 0.0 {
                    Some(p.width.min(low))
                } else {
                    Some(p.width)
                }
            }
            SourceWaveform::Pwl(points) => points
                .windows(2)
                .filter(|w| w[1].1 == w[0].1)
                .map(|w| w[1].0 - w[0].0)
                .reduce(f64::min),
        }
    }
}

fn pwl_value(points: &[(f64, f64)], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [(_, v)] => *v,
        _ => {
            if t <= points[0].0 {
                return points[0].1;
            }
            let idx = points.partition_point(|&(pt, _)| pt <= t);
            if idx >= points.len() {
                return points[points.len() - 1].1;
            }
            let (t0, v0) = points[idx - 1];
            let (t1, v1) = points[idx];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

impl Pulse {
    pub fn value_at(&self, t: f64) -> f64 {
        if t < self.delay {
            return self.v1;
        }
        let mut tt = t - self.delay;
        if self.period > 0.0 {
            tt %= self.period;
        }
        if tt < self.rise {
            self.v1 + (self.v2 - self.v1) * tt / self.rise
        } else if tt < self.rise + self.width {
            self.v2
        } else if tt < self.rise + self.width + self.fall {
            self.v2 + (self.v1 - self.v2) * (tt - self.rise - self.width) / self.fall
        } else {
            self.v1
        }
    }

    fn breakpoints(&self, tstop: f64) -> Vec<f64> {
        let corners = [
            0.0,
            self.rise,
            self.rise + self.width,
            self.rise + self.width + self.fall,
        ];
        let mut out = Vec::new();
        let mut start = self.delay;
        loop {
            if start > tstop {
                break;
            }
            out.extend(corners.iter().map(|c| start + c).filter(|&t| t <= tstop));
            if self.period <= 0.0 {
                break;
            }
            start += self.period;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageSource {
    pub name: String,
    pub pos: String,
    pub neg: String,
    pub waveform: SourceWaveform,
}

/// `X` card: a call of a subcircuit template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub subckt: String,
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Device {
    Mosfet(Mosfet),
    Capacitor(Capacitor),
    Resistor(Resistor),
    VoltageSource(VoltageSource),
    Instance(Instance),
}

impl Device {
    pub fn name(&self) -> &str {
        match self {
            Device::Mosfet(d) => &d.name,
            Device::Capacitor(d) => &d.name,
            Device::Resistor(d) => &d.name,
            Device::VoltageSource(d) => &d.name,
            Device::Instance(d) => &d.name,
        }
    }

    /// Node names in card order.
    pub fn terminals(&self) -> Vec<&str> {
        match self {
            Device::Mosfet(m) => vec![&m.drain, &m.gate, &m.source, &m.body],
            Device::Capacitor(c) => vec![&c.pos, &c.neg],
            Device::Resistor(r) => vec![&r.pos, &r.neg],
            Device::VoltageSource(v) => vec![&v.pos, &v.neg],
            Device::Instance(x) => x.nodes.iter().map(String::as_str).collect(),
        }
    }

    fn terminals_mut(&mut self) -> Vec<&mut String> {
        match self {
            Device::Mosfet(m) => vec![&mut m.drain, &mut m.gate, &mut m.source, &mut m.body],
            Device::Capacitor(c) => vec![&mut c.pos, &mut c.neg],
            Device::Resistor(r) => vec![&mut r.pos, &mut r.neg],
            Device::VoltageSource(v) => vec![&mut v.pos, &mut v.neg],
            Device::Instance(x) => x.nodes.iter_mut().collect(),
        }
    }

    fn set_name(&mut self, name: String) {
        match self {
            Device::Mosfet(d) => d.name = name,
            Device::Capacitor(d) => d.name = name,
            Device::Resistor(d) => d.name = name,
            Device::VoltageSource(d) => d.name = name,
            Device::Instance(d) => d.name = name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subcircuit {
    pub name: String,
    pub ports: Vec<String>,
    pub devices: Vec<Device>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Netlist {
    pub title: String,
    pub devices: Vec<Device>,
    pub models: BTreeMap<String, MosModel>,
    /// Every node referenced by a top-level device, including ground.
    pub nodes: BTreeSet<String>,
    pub subcircuits: BTreeMap<String, Subcircuit>,
    /// Nodes shared across subcircuit boundaries (ground is always global).
    pub globals: BTreeSet<String>,
}

impl Netlist {
    pub fn new(title: impl Into<String>) -> Self {
        Netlist {
            title: title.into(),
            ..Default::default()
        }
    }

    /// Append a device and register its nodes.
    pub fn push(&mut self, device: Device) {
        for node in device.terminals() {
            self.nodes.insert(node.to_string());
        }
        self.devices.push(device);
    }

    /// Recompute the node set from the top-level devices.
    pub fn rebuild_nodes(&mut self) {
        self.nodes = self
            .devices
            .iter()
            .flat_map(|d| d.terminals().into_iter().map(str::to_string))
            .collect();
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.name() == name)
    }

    pub fn device_mut(&mut self, name: &str) -> Option<&mut Device> {
        self.devices.iter_mut().find(|d| d.name() == name)
    }

    pub fn mosfets(&self) -> impl Iterator<Item = &Mosfet> {
        self.devices.iter().filter_map(|d| match d {
            Device::Mosfet(m) => Some(m),
            _ => None,
        })
    }

    pub fn sources(&self) -> impl Iterator<Item = &VoltageSource> {
        self.devices.iter().filter_map(|d| match d {
            Device::VoltageSource(v) => Some(v),
            _ => None,
        })
    }

    pub fn is_flat(&self) -> bool {
        !self.devices.iter().any(|d| matches!(d, Device::Instance(_)))
    }

    pub fn is_global(&self, node: &str) -> bool {
        node == GROUND || self.globals.contains(node)
    }
}
