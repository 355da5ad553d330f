use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{Device, Netlist, GROUND};

/// A structural problem that would make a netlist unsolvable or suspicious.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Diagnostic {
    /// Node has no DC path (channel, resistor or source) to ground.
    Floating { node: String },
    /// Node only reaches MOSFET gates (and possibly capacitors); nothing drives it.
    UndrivenGate { node: String, devices: Vec<String> },
    /// Node is touched by a single device terminal.
    Dangling { node: String, device: String },
    /// MOSFET with W or L not strictly positive.
    ZeroGeometry { device: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Floating { node } => write!(f, "node `{node}` has no DC path to ground"),
            Diagnostic::UndrivenGate { node, devices } => {
                write!(f, "gate node `{node}` of {} is driven by nothing", devices.join(", "))
            }
            Diagnostic::Dangling { node, device } => {
                write!(f, "node `{node}` is only connected to `{device}`")
            }
            Diagnostic::ZeroGeometry { device } => write!(f, "`{device}` has zero width or length"),
        }
    }
}

#[derive(Default)]
struct NodeUse {
    terminals: Vec<String>,
    gate_of: Vec<String>,
    non_gate: usize,
}

/// Report structural problems of a flattened netlist. An empty list means
/// the netlist is simulatable. Each node gets at most one diagnostic, the
/// most specific one.
pub fn validate(netlist: &Netlist) -> Vec<Diagnostic> {
    let mut uses: BTreeMap<&str, NodeUse> = BTreeMap::new();
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut diagnostics = Vec::new();

    for device in &netlist.devices {
        let name = device.name().to_string();
        for (idx, node) in device.terminals().into_iter().enumerate() {
            let u = uses.entry(node).or_default();
            u.terminals.push(name.clone());
            let is_gate = matches!(device, Device::Mosfet(_)) && idx == 1;
            if is_gate {
                u.gate_of.push(name.clone());
            } else if !matches!(device, Device::Capacitor(_)) {
                u.non_gate += 1;
            }
        }
        let conducting: Option<(&str, &str)> = match device {
            Device::Mosfet(m) => {
                if !(m.w > 0.0 && m.l > 0.0) {
                    diagnostics.push(Diagnostic::ZeroGeometry { device: name.clone() });
                }
                Some((m.drain.as_str(), m.source.as_str()))
            }
            Device::Resistor(r) => Some((r.pos.as_str(), r.neg.as_str())),
            Device::VoltageSource(v) => Some((v.pos.as_str(), v.neg.as_str())),
            Device::Capacitor(_) | Device::Instance(_) => None,
        };
        if let Some((a, b)) = conducting {
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
    }

    let mut grounded: BTreeSet<&str> = BTreeSet::new();
    let mut frontier = vec![GROUND];
    while let Some(node) = frontier.pop() {
        if !grounded.insert(node) {
            continue;
        }
        if let Some(next) = adjacency.get(node) {
            frontier.extend(next.iter().copied().filter(|n| !grounded.contains(n)));
        }
    }

    for (node, u) in &uses {
        if *node == GROUND {
            continue;
        }
        if !grounded.contains(node) {
            if !u.gate_of.is_empty() && u.non_gate == 0 {
                diagnostics.push(Diagnostic::UndrivenGate {
                    node: node.to_string(),
                    devices: u.gate_of.clone(),
                });
            } else {
                diagnostics.push(Diagnostic::Floating { node: node.to_string() });
            }
        } else if u.terminals.len() == 1 {
            diagnostics.push(Diagnostic::Dangling {
                node: node.to_string(),
                device: u.terminals[0].clone(),
            });
        }
    }
    diagnostics
}
