use std::collections::BTreeMap;

use thiserror::Error;

use super::{Device, Netlist};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlattenError {
    #[error("instance `{instance}` calls unknown subcircuit `{subckt}`")]
    UnknownSubcircuit { instance: String, subckt: String },
    #[error("recursive subcircuit call chain: {}", .0.join(" -> "))]
    Recursive(Vec<String>),
    #[error("instance `{instance}` connects {found} nodes but `{subckt}` has {expected} ports")]
    Arity {
        instance: String,
        subckt: String,
        expected: usize,
        found: usize,
    },
}

/// Expand every `X` instance into its devices.
///
/// Internal nodes become `instance.node` (nested: `x1.x2.node`); ports map
/// to the connected nodes; ground and `.global` nodes are shared. Expanded
/// device names keep their type letter in front: `mp1` inside `x1` becomes
/// `m.x1.mp1`. Subcircuit definitions are dropped from the result.
pub fn flatten(netlist: &Netlist) -> Result<Netlist, FlattenError> {
    let mut out = Netlist {
        title: netlist.title.clone(),
        devices: Vec::new(),
        models: netlist.models.clone(),
        nodes: Default::default(),
        subcircuits: Default::default(),
        globals: netlist.globals.clone(),
    };
    let mut stack = Vec::new();
    expand(netlist, &netlist.devices, None, &BTreeMap::new(), &mut stack, &mut out.devices)?;
    out.rebuild_nodes();
    Ok(out)
}

fn expand(
    netlist: &Netlist,
    devices: &[Device],
    prefix: Option<&str>,
    ports: &BTreeMap<String, String>,
    stack: &mut Vec<String>,
    out: &mut Vec<Device>,
) -> Result<(), FlattenError> {
    let map_node = |node: &str| -> String {
        if let Some(actual) = ports.get(node) {
            return actual.clone();
        }
        match prefix {
            Some(p) if !netlist.is_global(node) => format!("{p}.{node}"),
            _ => node.to_string(),
        }
    };

    for device in devices {
        match device {
            Device::Instance(x) => {
                let sub = netlist.subcircuits.get(&x.subckt).ok_or_else(|| FlattenError::UnknownSubcircuit {
                    instance: x.name.clone(),
                    subckt: x.subckt.clone(),
                })?;
                if stack.contains(&x.subckt) {
                    let mut chain = stack.clone();
                    chain.push(x.subckt.clone());
                    return Err(FlattenError::Recursive(chain));
                }
                if sub.ports.len() != x.nodes.len() {
                    return Err(FlattenError::Arity {
                        instance: x.name.clone(),
                        subckt: x.subckt.clone(),
                        expected: sub.ports.len(),
                        found: x.nodes.len(),
                    });
                }
                let inner_ports: BTreeMap<String, String> = sub
                    .ports
                    .iter()
                    .cloned()
                    .zip(x.nodes.iter().map(|n| map_node(n)))
                    .collect();
                let path = match prefix {
                    Some(p) => format!("{p}.{}", x.name),
                    None => x.name.clone(),
                };
                stack.push(x.subckt.clone());
                expand(netlist, &sub.devices, Some(&path), &inner_ports, stack, out)?;
                stack.pop();
            }
            other => {
                let mut d = other.clone();
                for t in d.terminals_mut() {
                    *t = map_node(t);
                }
                if let Some(p) = prefix {
                    let name = d.name().to_string();
                    let letter = &name[..1];
                    let tail = name
                        .strip_prefix(letter)
                        .and_then(|rest| rest.strip_prefix('.'))
                        .unwrap_or(&name);
                    d.set_name(format!("{letter}.{p}.{tail}"));
                }
                out.push(d);
            }
        }
    }
    Ok(())
}
