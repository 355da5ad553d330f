//! Text, CSV and JSON renderings of characterization results.

use std::fmt::Write as _;

use serde::Serialize;

use super::reference::Reference;
use crate::cells::{build_cell, with_static_inputs, CellError, CellKind, CellSpec};
use crate::device::{
    drain_current, normalized_bias, region, ron_saturation, ron_triode, threshold_voltage, Card, Region,
};
use crate::engine::{dc_operating_point, SimConfig};
use crate::measure::MeasurementReport;

/// Outcome of one sweep point: a report, or an exit code and message.
pub type RowResult = Result<MeasurementReport, (i32, String)>;

fn opt(v: Option<f64>, scale: f64, digits: usize) -> String {
    v.map(|x| format!("{:.*}", digits, x * scale)).unwrap_or_default()
}

fn bits(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

pub fn run_text(kind: CellKind, card: Card, r: &MeasurementReport) -> String {
    let mut s = String::new();
    let (w0, w1) = r.stimulus.power_window;
    let _ = writeln!(s, "{kind} at vdd {} V ({})", r.vdd, card.name());
    let _ = writeln!(
        s,
        "average power  {:.3} uW over {:.1} ns .. {:.1} ns",
        r.avg_power * 1e6,
        w0 * 1e9,
        w1 * 1e9
    );
    for o in &r.outputs {
        let _ = writeln!(
            s,
            "output {}: worst delay {} ps, min high {} V, max low {} V",
            o.node,
            or_dash(opt(o.worst_delay, 1e12, 3)),
            or_dash(opt(o.levels.min_high, 1.0, 4)),
            or_dash(opt(o.levels.max_low, 1.0, 4)),
        );
        if let Some(nm) = &o.noise_margin {
            let _ = writeln!(
                s,
                "  noise margin {:.4} V ({:.1} % of vdd)",
                nm.value,
                nm.fraction_of_vdd * 100.0
            );
        }
        if !o.delays.missing.is_empty() {
            let _ = writeln!(s, "  no output crossing in intervals {:?}", o.delays.missing);
        }
    }
    let total = r.grade.patterns.len();
    let failed = r.grade.failures().count();
    let _ = writeln!(s, "logic: {}/{} patterns pass", total - failed, total);
    for p in r.grade.failures() {
        let _ = writeln!(
            s,
            "  FAIL interval {} inputs {} expected {} measured {:?}",
            p.interval,
            bits(&p.inputs),
            bits(&p.expected),
            p.measured
        );
    }
    s
}

fn or_dash(s: String) -> String {
    if s.is_empty() {
        "-".into()
    } else {
        s
    }
}

/// Column layout of the sweep CSV.
pub struct SweepTable<'a> {
    outputs: Vec<String>,
    reference: Option<&'a Reference>,
}

impl<'a> SweepTable<'a> {
    pub fn new(outputs: &[&str], reference: Option<&'a Reference>) -> Self {
        SweepTable {
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            reference,
        }
    }

    fn per_output(&self) -> bool {
        self.outputs.len() > 1
    }

    pub fn header(&self) -> String {
        let mut cols: Vec<String> = ["vdd", "power_uW", "delay_ps", "min_high_V", "max_low_V"]
            .map(String::from)
            .to_vec();
        if self.per_output() {
            for o in &self.outputs {
                cols.push(format!("{o}_delay_ps"));
                cols.push(format!("{o}_min_high_V"));
                cols.push(format!("{o}_max_low_V"));
            }
        }
        cols.push("status".into());
        if let Some(r) = self.reference {
            cols.extend(r.columns.iter().cloned());
        }
        cols.join(",")
    }

    pub fn row(&self, vdd: f64, result: &RowResult) -> String {
        let mut cols = vec![vdd.to_string()];
        match result {
            Ok(r) => {
                cols.push(format!("{:.3}", r.avg_power * 1e6));
                cols.push(opt(r.worst_delay(), 1e12, 3));
                cols.push(opt(r.min_high(), 1.0, 4));
                cols.push(opt(r.max_low(), 1.0, 4));
                if self.per_output() {
                    for name in &self.outputs {
                        let o = r.output(name);
                        cols.push(opt(o.and_then(|o| o.worst_delay), 1e12, 3));
                        cols.push(opt(o.and_then(|o| o.levels.min_high), 1.0, 4));
                        cols.push(opt(o.and_then(|o| o.levels.max_low), 1.0, 4));
                    }
                }
                cols.push(if r.grade.all_pass() { "pass" } else { "logic_fail" }.into());
            }
            Err((code, _)) => {
                let blanks = 4 + if self.per_output() { 3 * self.outputs.len() } else { 0 };
                cols.extend(std::iter::repeat_n(String::new(), blanks));
                cols.push(if *code == super::EXIT_CONVERGENCE { "no_convergence" } else { "error" }.into());
            }
        }
        if let Some(r) = self.reference {
            for c in &r.columns {
                cols.push(r.value(c, vdd).unwrap_or("").to_string());
            }
        }
        cols.join(",")
    }
}

/// Direction of power and delay as the supply is lowered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    /// Supply range covered (highest, lowest).
    pub vdd: (f64, f64),
    /// Power at the highest and lowest supply (W).
    pub power: (f64, f64),
    /// Power strictly decreases with every step down in supply.
    pub power_decreasing: bool,
    pub delay: Option<(f64, f64)>,
    /// Worst delay strictly increases with every step down in supply.
    pub delay_increasing: Option<bool>,
}

impl Trend {
    pub fn line(&self) -> String {
        let mut s = format!(
            "trend {}..{} V: power {} ({:.3} -> {:.3} uW)",
            self.vdd.0,
            self.vdd.1,
            if self.power_decreasing { "decreases monotonically" } else { "is not monotone" },
            self.power.0 * 1e6,
            self.power.1 * 1e6
        );
        if let (Some((d0, d1)), Some(inc)) = (self.delay, self.delay_increasing) {
            let _ = write!(
                s,
                "; delay {} ({:.3} -> {:.3} ps)",
                if inc { "increases monotonically" } else { "is not monotone" },
                d0 * 1e12,
                d1 * 1e12
            );
        }
        s
    }
}

/// Trend over the successful rows of a sweep ordered by descending vdd.
/// `None` when fewer than two rows succeeded.
pub fn sweep_trend(rows: &[(f64, RowResult)]) -> Option<Trend> {
    let ok: Vec<(f64, &MeasurementReport)> = rows.iter().filter_map(|(v, r)| r.as_ref().ok().map(|r| (*v, r))).collect();
    if ok.len() < 2 {
        return None;
    }
    let power: Vec<f64> = ok.iter().map(|(_, r)| r.avg_power).collect();
    let delays: Vec<f64> = ok.iter().filter_map(|(_, r)| r.worst_delay()).collect();
    let delay_ok = delays.len() >= 2;
    Some(Trend {
        vdd: (ok[0].0, ok[ok.len() - 1].0),
        power: (power[0], power[power.len() - 1]),
        power_decreasing: power.windows(2).all(|w| w[1] < w[0]),
        delay: delay_ok.then(|| (delays[0], delays[delays.len() - 1])),
        delay_increasing: delay_ok.then(|| delays.windows(2).all(|w| w[1] > w[0])),
    })
}

pub fn verify_text(kind: CellKind, reports: &[(f64, MeasurementReport)]) -> String {
    let mut s = String::new();
    for (vdd, r) in reports {
        let th = r.grade.thresholds;
        let _ = writeln!(
            s,
            "{kind} at vdd {vdd} V: high >= {:.3} V, low <= {:.3} V",
            th.voh_frac * vdd,
            th.vol_frac * vdd
        );
        let _ = writeln!(s, "{:>3}  {:>9}  {:<6}  {:<8}  {:<24}  result", "#", "read_ns", "inputs", "expected", "measured_V");
        for p in &r.grade.patterns {
            let measured: Vec<String> = p.measured.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(
                s,
                "{:>3}  {:>9.3}  {:<6}  {:<8}  {:<24}  {}",
                p.interval,
                p.end * 1e9,
                bits(&p.inputs),
                bits(&p.expected),
                measured.join(" "),
                if p.pass { "pass" } else { "FAIL" }
            );
        }
        let failed = r.grade.failures().count();
        let _ = writeln!(
            s,
            "{}: {}/{} patterns pass\n",
            if failed == 0 { "PASS" } else { "FAIL" },
            r.grade.patterns.len() - failed,
            r.grade.patterns.len()
        );
    }
    s
}

/// DC operating state of one transistor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagRow {
    pub device: String,
    pub polarity: String,
    pub region: Region,
    /// Bias in NMOS convention after source/drain interchange (V).
    pub vgs: f64,
    pub vds: f64,
    pub vsb: f64,
    /// Threshold at this bias (V).
    pub vt: f64,
    /// Channel current magnitude (A).
    pub id: f64,
    /// Channel resistance for the region; absent in cutoff (Ω).
    pub ron: Option<f64>,
    /// The nominal source acts as the drain.
    pub swapped: bool,
}

/// Solve the cell at static inputs and describe every transistor.
pub fn diag_rows(spec: &CellSpec, inputs: &[bool]) -> Result<Vec<DiagRow>, CellError> {
    let base = build_cell(spec)?;
    let netlist = with_static_inputs(&base, spec.kind, inputs, spec.vdd)?;
    let op = dc_operating_point(&netlist, &SimConfig::default(), 1.0)?;
    let mut rows = Vec::new();
    for m in netlist.mosfets() {
        let model = &netlist.models[&m.model];
        let geom = m.geometry();
        let v = |n: &str| op.voltage(n);
        let (bias, swapped) = normalized_bias(m.polarity, v(&m.drain), v(&m.gate), v(&m.source), v(&m.body));
        let vt = threshold_voltage(model, geom, bias.vsb.max(0.0), bias.vds).unwrap_or(f64::NAN);
        let reg = region(model, geom, bias);
        let id = drain_current(model, geom, bias);
        let ron = match reg {
            Region::Cutoff => None,
            Region::Triode => ron_triode(model, geom, bias).ok(),
            Region::Saturation => {
                let lv = model.lambda * bias.vds;
                let delta_l = geom.l * lv / (1.0 + lv);
                ron_saturation(model, geom, bias, delta_l, id, bias.vgs - vt).ok()
            }
        };
        rows.push(DiagRow {
            device: m.name.clone(),
            polarity: m.polarity.keyword().to_string(),
            region: reg,
            vgs: bias.vgs,
            vds: bias.vds,
            vsb: bias.vsb,
            vt,
            id,
            ron,
            swapped,
        });
    }
    Ok(rows)
}

pub fn diag_csv(rows: &[DiagRow]) -> String {
    let mut s = String::from("device,polarity,region,vgs_V,vds_V,vsb_V,vt_V,id_A,ron_ohm,swapped\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6e},{},{}",
            r.device,
            r.polarity,
            r.region,
            r.vgs,
            r.vds,
            r.vsb,
            r.vt,
            r.id,
            r.ron.map(|x| format!("{x:.6e}")).unwrap_or_default(),
            r.swapped
        );
    }
    s
}

pub fn diag_text(kind: CellKind, vdd: f64, pattern: &str, rows: &[DiagRow]) -> String {
    let mut s = format!("{kind} at vdd {vdd} V, inputs {pattern}\n");
    let _ = writeln!(
        s,
        "{:<12} {:<4} {:<10} {:>8} {:>8} {:>8} {:>8} {:>11} {:>11}",
        "device", "type", "region", "vgs", "vds", "vsb", "vt", "id", "ron"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:<4} {:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>11.4e} {:>11}{}",
            r.device,
            r.polarity,
            r.region.to_string(),
            r.vgs,
            r.vds,
            r.vsb,
            r.vt,
            r.id,
            r.ron.map(|x| format!("{x:.4e}")).unwrap_or_default(),
            if r.swapped { "  (s/d swapped)" } else { "" }
        );
    }
    s
}
