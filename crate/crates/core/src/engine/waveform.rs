use std::fmt::Write as _;

use serde::Serialize;

/// Sampled transient result. Every series shares `times`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    pub times: Vec<f64>,
    /// Non-ground node names, sorted.
    pub node_names: Vec<String>,
    /// `voltages[i]` is the series of `node_names[i]`.
    pub voltages: Vec<Vec<f64>>,
    pub source_names: Vec<String>,
    /// Branch current of each source, positive when the source delivers
    /// current into the circuit from its `+` terminal.
    pub currents: Vec<Vec<f64>>,
    /// `(pos, neg)` node names per source.
    pub source_terminals: Vec<(String, String)>,
}

impl Waveform {
    /// Voltage series of a node; ground yields zeros.
    pub fn voltage(&self, node: &str) -> Option<Vec<f64>> {
        if node == crate::netlist::GROUND {
            return Some(vec![0.0; self.times.len()]);
        }
        self.node_names
            .iter()
            .position(|n| n == node)
            .map(|i| self.voltages[i].clone())
    }

    pub fn voltage_ref(&self, node: &str) -> Option<&[f64]> {
        self.node_names
            .iter()
            .position(|n| n == node)
            .map(|i| self.voltages[i].as_slice())
    }

    pub fn current(&self, source: &str) -> Option<&[f64]> {
        self.source_names
            .iter()
            .position(|n| n == source)
            .map(|i| self.currents[i].as_slice())
    }

    /// Voltage across a source, `v(pos) - v(neg)`.
    pub fn source_voltage(&self, source: &str) -> Option<Vec<f64>> {
        let idx = self.source_names.iter().position(|n| n == source)?;
        let (p, n) = &self.source_terminals[idx];
        let vp = self.voltage(p)?;
        let vn = self.voltage(n)?;
        Some(vp.iter().zip(&vn).map(|(a, b)| a - b).collect())
    }

    /// Plot-ready CSV: `time,<nodes>,i(<sources>)`, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for n in &self.node_names {
            out.push(',');
            out.push_str(n);
        }
        for s in &self.source_names {
            let _ = write!(out, ",i({s})");
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:.8e}");
            for series in self.voltages.iter().chain(&self.currents) {
                let _ = write!(out, ",{:.8e}", series[k]);
            }
            out.push('\n');
        }
        out
    }
}
