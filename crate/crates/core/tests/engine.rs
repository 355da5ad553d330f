use std::collections::BTreeMap;

use picospice::cells::{
    build_cell, characterize, pattern_tour, with_static_inputs, CellKind, CellSpec, StimulusOptions,
};
use picospice::device::{evaluate_terminals, ron_triode, BiasPoint, MosModel, Polarity};
use picospice::engine::{
    dc_operating_point, dc_operating_point_with, supply_current, transient, DcStrategy, Integrator,
    OperatingPoint, SimConfig, SimError,
};
use picospice::measure::{sample, Thresholds};
use picospice::netlist::{parse, Device, Netlist, GROUND};
use proptest::prelude::*;

fn deck(body: &str) -> Netlist {
    parse(&format!("engine test\n{body}\n.end\n")).unwrap()
}

fn static_cell(kind: CellKind, bits: &[bool], vdd: f64) -> Netlist {
    let base = build_cell(&CellSpec::new(kind, vdd)).unwrap();
    with_static_inputs(&base, kind, bits, vdd).unwrap()
}

#[test]
fn lone_source() {
    let op = dc_operating_point(&deck("v1 a 0 3.3"), &SimConfig::default(), 1.0).unwrap();
    assert_eq!(op.voltage("a"), 3.3);
}

#[test]
fn divider_and_open_circuit_are_exact() {
    let cfg = SimConfig::default();
    let op = dc_operating_point(&deck("v1 a 0 3\nr1 a m 1k\nr2 m 0 2k\nv2 o 0 1.5\nc1 o 0 1p"), &cfg, 1.0).unwrap();
    assert!((op.voltage("m") - 2.0).abs() <= cfg.vntol);
    assert!((op.currents["v1"] - 1e-3).abs() <= 1e-9);
    assert_eq!(op.voltage("o"), 1.5);
    assert_eq!(op.currents["v2"], 0.0);
}

#[test]
fn inverter_with_low_input_pulls_high() {
    let op = dc_operating_point(&static_cell(CellKind::Inverter, &[false], 3.3), &SimConfig::default(), 1.0).unwrap();
    let v = op.voltage("out");
    // NMOS off, PMOS on with only the gmin leak to carry: the output sits
    // at the rail to within leak·ron.
    assert!((3.25..=3.3).contains(&v), "{v}");
    assert!(3.3 - v < 1e-6, "{v}");
}

/// Ratioed fight of P1 (saturated, source at vdd) against N1 (triode,
/// source at B = 0), solved by bisection on the output voltage.
fn ratioed_xnor_low(vdd: f64) -> (f64, f64) {
    let (n, p) = (MosModel::generic035(Polarity::N), MosModel::generic035(Polarity::P));
    let l = 0.35e-6;
    let i_p = |vout: f64| {
        let (vsg, vsd) = (vdd, vdd - vout);
        let vov = vsg - p.vt0;
        let clm = 1.0 + p.lambda * vsd;
        if vsd >= vov {
            0.5 * p.kprime * (2e-6 / l) * vov * vov * clm
        } else {
            p.kprime * (2e-6 / l) * (vov * vsd - vsd * vsd / 2.0) * clm
        }
    };
    let i_n = |vout: f64| {
        let vov = vdd - n.vt0;
        let clm = 1.0 + n.lambda * vout;
        if vout >= vov {
            0.5 * n.kprime * (5e-6 / l) * vov * vov * clm
        } else {
            n.kprime * (5e-6 / l) * (vov * vout - vout * vout / 2.0) * clm
        }
    };
    let (mut lo, mut hi) = (0.0, vdd);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if i_n(mid) > i_p(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    (v, i_p(v))
}

#[test]
fn xnor_one_zero_is_a_ratioed_low() {
    let op = dc_operating_point(&static_cell(CellKind::Xnor3t, &[true, false], 3.3), &SimConfig::default(), 1.0).unwrap();
    let v = op.voltage("out");
    let (v_hand, i_hand) = ratioed_xnor_low(3.3);
    assert!(v < 0.5, "{v}");
    assert!((v - v_hand).abs() < 1e-5, "{v} vs {v_hand}");
    let supply = op.currents["vdd"];
    assert!(supply > 0.0);
    assert!((supply - i_hand).abs() < 1e-4 * i_hand, "{supply} vs {i_hand}");
}

/// Sum of currents leaving each node, rebuilt from the device equations.
fn kcl_residuals(n: &Netlist, op: &OperatingPoint, gmin: f64) -> BTreeMap<String, (f64, f64)> {
    let mut out: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut add = |node: &str, i: f64| {
        if node != GROUND {
            let e = out.entry(node.to_string()).or_insert((0.0, 0.0));
            e.0 += i;
            e.1 = e.1.max(i.abs());
        }
    };
    let v = |node: &str| op.voltage(node);
    let pinned: Vec<&str> = n
        .sources()
        .flat_map(|s| match (s.pos.as_str(), s.neg.as_str()) {
            (p, GROUND) => Some(p),
            (GROUND, q) => Some(q),
            _ => None,
        })
        .collect();
    for d in &n.devices {
        match d {
            Device::Mosfet(m) => {
                let e = evaluate_terminals(&n.models[&m.model], m.geometry(), v(&m.drain), v(&m.gate), v(&m.source), v(&m.body));
                add(&m.drain, e.id);
                add(&m.source, -e.id);
            }
            Device::Resistor(r) => {
                let i = (v(&r.pos) - v(&r.neg)) / r.value;
                add(&r.pos, i);
                add(&r.neg, -i);
            }
            Device::VoltageSource(s) => {
                let i = op.currents[&s.name];
                add(&s.pos, -i);
                add(&s.neg, i);
            }
            _ => {}
        }
    }
    for node in n.nodes.iter().filter(|x| *x != GROUND && !pinned.contains(&x.as_str())) {
        add(node, gmin * v(node));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kcl_holds_at_every_operating_point(k in 0usize..5, code in 0usize..8, vdd in 1.8f64..3.3) {
        let kind = CellKind::ALL[k];
        let n_in = kind.inputs().len();
        let bits: Vec<bool> = (0..n_in).map(|i| code >> i & 1 == 1).collect();
        let n = static_cell(kind, &bits, vdd);
        let cfg = SimConfig::default();
        let op = dc_operating_point(&n, &cfg, 1.0).unwrap();
        for (node, (sum, largest)) in kcl_residuals(&n, &op, cfg.gmin) {
            prop_assert!(sum.abs() <= cfg.abstol + cfg.reltol * largest, "{kind} {bits:?} node {node}: {sum:e} (largest {largest:e})");
        }
    }
}

#[test]
fn homotopies_agree_with_plain_newton() {
    let cfg = SimConfig::default();
    for kind in CellKind::ALL {
        for bits in pattern_tour(kind.inputs().len()).into_iter().take(1 << kind.inputs().len()) {
            let n = static_cell(kind, &bits, 3.3);
            let Ok(plain) = dc_operating_point_with(&n, &cfg, 1.0, DcStrategy::Newton) else {
                continue;
            };
            for s in [DcStrategy::GminStepping, DcStrategy::SourceStepping] {
                let other = dc_operating_point_with(&n, &cfg, 1.0, s).unwrap();
                assert_eq!(other.strategy, s);
                for (node, v) in &plain.voltages {
                    assert!((v - other.voltages[node]).abs() <= cfg.vntol, "{kind} {bits:?} {s:?} {node}");
                }
            }
        }
    }
}

/// Closed-form response of a first-order RC to a 0 -> 1 ramp of length `tr`.
fn rc_ramp(t: f64, tau: f64, tr: f64) -> f64 {
    if t <= tr {
        (t - tau * (1.0 - (-t / tau).exp())) / tr
    } else {
        1.0 - (tau / tr) * (1.0 - (-tr / tau).exp()) * (-(t - tr) / tau).exp()
    }
}

const TR: f64 = 1e-12;

fn rc_error(n: &Netlist, tau: f64, cfg: &SimConfig, at: f64) -> f64 {
    let w = transient(n, cfg).unwrap();
    let v = w.voltage("x").unwrap();
    (sample(&w.times, &v, at) - rc_ramp(at, tau, TR)).abs()
}

#[test]
fn rc_through_triode_channel_tracks_the_exponential() {
    let vg = 100.0;
    let n = deck(&format!(
        "vin a 0 pwl(0 0 {TR} 1)\nvg g 0 {vg}\nm1 a g x 0 rch w=10u l=10u\nc1 x 0 1p\n.model rch nmos gamma=0 lambda=0 cox=0 cj=0"
    ));
    let model = &n.models["rch"];
    let m = match n.device("m1") {
        Some(Device::Mosfet(m)) => m,
        _ => unreachable!(),
    };
    let r_eff = ron_triode(model, m.geometry(), BiasPoint::new(vg - 0.5, 0.5, 0.5)).unwrap();
    let tau = r_eff * 1e-12;
    let cfg = SimConfig::transient(7.0 * tau, tau / 50.0);
    for at in [tau, 5.0 * tau] {
        let err = rc_error(&n, tau, &cfg, at);
        assert!(err < 0.01, "error {err} at {at:e}");
    }
    let w = transient(&n, &cfg).unwrap();
    let settled = *w.voltage("x").unwrap().last().unwrap();
    assert!((settled - 1.0).abs() < 0.01, "{settled}");
}

#[test]
fn trapezoidal_beats_backward_euler_on_rc() {
    let n = deck(&format!("vin a 0 pwl(0 0 {TR} 1)\nr1 a x 1k\nc1 x 0 1p"));
    let tau = 1e-9;
    let run = |integrator| {
        let cfg = SimConfig {
            integrator,
            cmin: 0.0,
            ..SimConfig::transient(5.0 * tau, tau / 20.0)
        };
        (rc_error(&n, tau, &cfg, tau), rc_error(&n, tau, &cfg, 5.0 * tau))
    };
    let (be1, be5) = run(Integrator::BackwardEuler);
    let (tr1, tr5) = run(Integrator::Trapezoidal);
    for e in [be1, be5, tr1, tr5] {
        assert!(e < 0.01, "{e}");
    }
    assert!(tr1 < be1, "trapezoidal {tr1} vs backward Euler {be1}");
}

#[test]
fn dc_deck_gives_a_flat_waveform() {
    let n = static_cell(CellKind::Xnor3t, &[true, true], 3.3);
    let cfg = SimConfig::transient(5e-9, 5e-11);
    let op = dc_operating_point(&n, &cfg, 1.0).unwrap();
    let w = transient(&n, &cfg).unwrap();
    for (name, series) in w.node_names.iter().zip(&w.voltages) {
        let v0 = op.voltage(name);
        assert!(series.iter().all(|v| (v - v0).abs() <= cfg.vntol), "{name}");
    }
}

#[test]
fn supply_current_examples() {
    let cfg = SimConfig::transient(5e-9, 5e-11);
    let w = transient(&deck("v1 a 0 3.3"), &cfg).unwrap();
    assert!(supply_current(&w, "v1").unwrap().iter().all(|&i| i == 0.0));

    let w = transient(&deck("v1 a 0 pwl(0 0 0.1n 1)\nr1 a x 1k\nc1 x 0 100f"), &cfg).unwrap();
    let i = supply_current(&w, "v1").unwrap();
    assert!(i.last().unwrap().abs() < cfg.abstol * 10.0, "{}", i.last().unwrap());

    let n = static_cell(CellKind::Xnor3t, &[true, false], 3.3);
    let w = transient(&n, &cfg).unwrap();
    assert!(supply_current(&w, "vdd").unwrap().iter().all(|&i| i > 0.0));

    assert!(matches!(supply_current(&w, "nope"), Err(SimError::UnknownSource(_))));
}

#[test]
fn transient_levels_match_dc_solutions() {
    let opts = StimulusOptions {
        pattern_period: 10e-6,
        rise: 100e-12,
        tours: 1,
    };
    let spec = CellSpec::new(CellKind::Xnor3t, 3.3);
    let c = characterize(&spec, opts, Thresholds::default()).unwrap();
    let out = c.waveform.voltage("out").unwrap();
    let cfg = SimConfig::default();
    for iv in &c.plan.intervals {
        let dc = dc_operating_point(&static_cell(CellKind::Xnor3t, &iv.inputs, 3.3), &cfg, 1.0).unwrap();
        let tr = sample(&c.waveform.times, &out, iv.read_time());
        assert!((tr - dc.voltage("out")).abs() <= 2.0 * cfg.vntol, "{:?}: {tr} vs {}", iv.inputs, dc.voltage("out"));
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let spec = CellSpec::new(CellKind::Adder8t, 3.3);
    let a = characterize(&spec, StimulusOptions::default(), Thresholds::default()).unwrap();
    let b = characterize(&spec, StimulusOptions::default(), Thresholds::default()).unwrap();
    assert_eq!(a.waveform.to_csv(), b.waveform.to_csv());
}
