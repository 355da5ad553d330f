use std::fmt::Write as _;

use super::{Device, Netlist, SourceWaveform};
use crate::device::MosModel;

/// Serialize a netlist back to deck text accepted by [`super::parse`].
///
/// Numbers are written in shortest round-trip exponent form, so re-parsing
/// the output reproduces every value bit for bit.
pub fn write_deck(netlist: &Netlist) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", netlist.title);
    if !netlist.globals.is_empty() {
        let globals: Vec<&str> = netlist.globals.iter().map(String::as_str).collect();
        let _ = writeln!(out, ".global {}", globals.join(" "));
    }
    for (name, model) in &netlist.models {
        write_model(&mut out, name, model);
    }
    for sub in netlist.subcircuits.values() {
        let _ = writeln!(out, ".subckt {} {}", sub.name, sub.ports.join(" "));
        for d in &sub.devices {
            write_device(&mut out, d);
        }
        let _ = writeln!(out, ".ends {}", sub.name);
    }
    for d in &netlist.devices {
        write_device(&mut out, d);
    }
    out.push_str(".end\n");
    out
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn write_model(out: &mut String, name: &str, m: &MosModel) {
    let _ = writeln!(out, ".model {name} {}", m.polarity.keyword());
    let params = [
        ("vt0", m.vt0),
        ("gamma", m.gamma),
        ("phi0", m.phi0),
        ("tox", m.tox),
        ("alphal", m.alpha_l),
        ("alphav", m.alpha_v),
        ("alphaw", m.alpha_w),
        ("kp", m.kprime),
        ("lambda", m.lambda),
        ("nb", m.nb),
        ("cox", m.cox_area),
        ("cj", m.cj),
        ("convbody", if m.conventional_body_effect { 1.0 } else { 0.0 }),
    ];
    for (key, v) in params {
        let _ = writeln!(out, "+ {key}={}", num(v));
    }
}

fn write_device(out: &mut String, device: &Device) {
    let _ = match device {
        Device::Mosfet(m) => writeln!(
            out,
            "{} {} {} {} {} {} w={} l={}",
            m.name,
            m.drain,
            m.gate,
            m.source,
            m.body,
            m.model,
            num(m.w),
            num(m.l)
        ),
        Device::Capacitor(c) => writeln!(out, "{} {} {} {}", c.name, c.pos, c.neg, num(c.value)),
        Device::Resistor(r) => writeln!(out, "{} {} {} {}", r.name, r.pos, r.neg, num(r.value)),
        Device::VoltageSource(v) => {
            writeln!(out, "{} {} {} {}", v.name, v.pos, v.neg, waveform(&v.waveform))
        }
        Device::Instance(x) => writeln!(out, "{} {} {}", x.name, x.nodes.join(" "), x.subckt),
    };
}

fn waveform(w: &SourceWaveform) -> String {
    match w {
        SourceWaveform::Dc(v) => format!("dc {}", num(*v)),
        SourceWaveform::Pulse(p) => {
            let v = [p.v1, p.v2, p.delay, p.rise, p.fall, p.width, p.period];
            let v: Vec<String> = v.iter().map(|&x| num(x)).collect();
            format!("pulse({})", v.join(" "))
        }
        SourceWaveform::Pwl(points) => {
            let v: Vec<String> = points.iter().map(|&(t, x)| format!("{} {}", num(t), num(x))).collect();
            format!("pwl({})", v.join(" "))
        }
    }
}
