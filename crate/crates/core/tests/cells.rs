use std::collections::BTreeSet;

use picospice::cells::{
    adder_decomposed, adder_direct, build_cell, characterize, oracle, pattern_tour, standard_stimulus, CellError,
    CellKind, CellSpec, StimulusOptions,
};
use picospice::measure::{sample, Thresholds};
use picospice::netlist::{Device, SourceWaveform};
use proptest::prelude::*;

const TABLE_VDDS: [f64; 7] = [3.3, 3.0, 2.7, 2.4, 2.1, 2.0, 1.8];

fn rows(n: usize) -> Vec<Vec<bool>> {
    (0..1usize << n).map(|c| (0..n).rev().map(|k| c >> k & 1 == 1).collect()).collect()
}

/// Outputs by counting ones: sum is odd parity, carry is a majority.
fn adder_by_count(a: bool, b: bool, c: bool) -> (bool, bool) {
    let ones = a as u8 + b as u8 + c as u8;
    (ones % 2 == 1, ones >= 2)
}

#[test]
fn oracle_examples() {
    assert_eq!(oracle(CellKind::Adder8t, &[true, true, false]).unwrap(), [false, true]);
    assert_eq!(oracle(CellKind::Xnor3t, &[false, false]).unwrap(), [true]);
    assert_eq!(oracle(CellKind::XnorXor5t, &[true, false]).unwrap(), [false, true]);
    assert_eq!(oracle(CellKind::Inverter, &[true]).unwrap(), [false]);
    assert!(matches!(oracle(CellKind::Adder8t, &[true]), Err(CellError::Arity { expected: 3, found: 1, .. })));
}

#[test]
fn adder_forms_agree_on_all_rows() {
    for r in rows(3) {
        let (a, b, c) = (r[0], r[1], r[2]);
        let counted = adder_by_count(a, b, c);
        assert_eq!(adder_direct(a, b, c), counted, "{r:?}");
        assert_eq!(adder_decomposed(a, b, c), counted, "{r:?}");
        assert_eq!(oracle(CellKind::Adder8t, &r).unwrap(), [counted.0, counted.1]);
    }
}

#[test]
fn cascaded_xnor_is_the_sum() {
    let xnor = |x: bool, y: bool| !(x ^ y);
    for r in rows(3) {
        assert_eq!(xnor(xnor(r[0], r[1]), r[2]), oracle(CellKind::Adder8t, &r).unwrap()[0], "{r:?}");
    }
}

#[test]
fn device_counts_and_widths() {
    let build = |k| build_cell(&CellSpec::new(k, 3.3)).unwrap();
    assert_eq!(build(CellKind::Adder8t).mosfets().count(), 8);
    assert_eq!(build(CellKind::XnorXor5t).mosfets().count(), 5);
    let x = build(CellKind::Xnor3t);
    let w: Vec<f64> = x.mosfets().map(|m| m.w).collect();
    assert_eq!(w, [2.0e-6, 5.0e-6, 1.0e-6]);
    assert!(x.mosfets().all(|m| m.l == 0.35e-6));
}

#[test]
fn every_output_carries_the_load() {
    for kind in CellKind::ALL {
        let mut spec = CellSpec::new(kind, 3.3);
        spec.load_cap = 25e-15;
        let n = build_cell(&spec).unwrap();
        for out in kind.outputs() {
            let loads: Vec<f64> = n
                .devices
                .iter()
                .filter_map(|d| match d {
                    Device::Capacitor(c) if c.pos == *out && c.neg == "0" => Some(c.value),
                    _ => None,
                })
                .collect();
            assert_eq!(loads, [25e-15], "{kind} {out}");
        }
    }
}

#[test]
fn bad_specs_are_rejected() {
    assert!(matches!(build_cell(&CellSpec::new(CellKind::Xnor3t, 5.5)), Err(CellError::VddOutOfRange(_))));
    let mut spec = CellSpec::new(CellKind::Xnor3t, 3.3);
    spec.load_cap = -1e-15;
    assert!(matches!(build_cell(&spec), Err(CellError::NegativeLoad(_))));
    assert!(matches!("nand9".parse::<CellKind>(), Err(CellError::UnknownCell(_))));
}

fn single_bit_edges(tour: &[Vec<bool>]) -> BTreeSet<(Vec<bool>, Vec<bool>)> {
    let n = tour.len();
    (0..n)
        .map(|k| (tour[k].clone(), tour[(k + 1) % n].clone()))
        .filter(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count() == 1)
        .collect()
}

#[test]
fn tours_cover_every_pattern_and_edge() {
    for n in 1..=3 {
        let tour = pattern_tour(n);
        let seen: BTreeSet<Vec<bool>> = tour.iter().cloned().collect();
        assert_eq!(seen.len(), 1 << n);
        for k in 0..tour.len() {
            let next = &tour[(k + 1) % tour.len()];
            assert_eq!(tour[k].iter().zip(next).filter(|(x, y)| x != y).count(), 1, "{n} inputs, step {k}");
        }
        let edges = single_bit_edges(&tour);
        let undirected: BTreeSet<_> = edges.iter().map(|(a, b)| if a < b { (a, b) } else { (b, a) }).collect();
        assert_eq!(undirected.len(), n << (n - 1), "{n} inputs");
    }
    let two = pattern_tour(2);
    assert!(two.len() >= 4);
    assert!(pattern_tour(3).len() >= 8);
}

#[test]
fn plan_expectations_match_the_oracle() {
    for kind in CellKind::ALL {
        let (_, plan) = standard_stimulus(kind, 2.4, StimulusOptions::default()).unwrap();
        for iv in &plan.intervals {
            let want: Vec<bool> = match kind {
                CellKind::Xnor3t | CellKind::CmosXnorRef => vec![iv.inputs[0] == iv.inputs[1]],
                CellKind::XnorXor5t => vec![iv.inputs[0] == iv.inputs[1], iv.inputs[0] != iv.inputs[1]],
                CellKind::Adder8t => {
                    let (s, c) = adder_by_count(iv.inputs[0], iv.inputs[1], iv.inputs[2]);
                    vec![s, c]
                }
                CellKind::Inverter => vec![!iv.inputs[0]],
            };
            assert_eq!(iv.expected, want, "{kind} {:?}", iv.inputs);
        }
    }
}

#[test]
fn non_adder_cells_pass_at_every_table_vdd() {
    for kind in [CellKind::Xnor3t, CellKind::XnorXor5t, CellKind::Inverter, CellKind::CmosXnorRef] {
        for vdd in TABLE_VDDS {
            let c = characterize(&CellSpec::new(kind, vdd), StimulusOptions::default(), Thresholds::default()).unwrap();
            let fails: Vec<_> = c.report.grade.failures().map(|f| (&f.inputs, &f.measured)).collect();
            assert!(fails.is_empty(), "{kind} at {vdd} V: {fails:?}");
        }
    }
}

#[test]
fn adder_sum_output_passes_at_every_table_vdd() {
    for vdd in TABLE_VDDS {
        let c = characterize(&CellSpec::new(CellKind::Adder8t, vdd), StimulusOptions::default(), Thresholds::default())
            .unwrap();
        let (hi, lo) = (0.55 * vdd, 0.15 * vdd);
        for p in &c.report.grade.patterns {
            let v = p.measured[0];
            assert!(if p.expected[0] { v >= hi } else { v <= lo }, "{vdd} V {:?}: sum {v}", p.inputs);
        }
    }
}

fn source_level(w: &SourceWaveform, t: f64) -> f64 {
    match w {
        SourceWaveform::Pwl(points) => {
            let (ts, vs): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
            sample(&ts, &vs, t)
        }
        other => panic!("expected pwl, got {other:?}"),
    }
}

proptest! {
    #[test]
    fn stimulus_matches_its_plan(
        k in 0usize..5,
        vdd in 1.0f64..5.0,
        period_ps in 500u32..20_000,
        rise_frac in 0.01f64..0.5,
        tours in 1usize..4,
    ) {
        let kind = CellKind::ALL[k];
        let period = period_ps as f64 * 1e-12;
        let opts = StimulusOptions { pattern_period: period, rise: rise_frac * period, tours };
        let (sources, plan) = standard_stimulus(kind, vdd, opts).unwrap();
        prop_assert_eq!(sources.len(), kind.inputs().len());
        prop_assert_eq!(plan.intervals.len(), tours * pattern_tour(kind.inputs().len()).len());
        prop_assert_eq!(plan.intervals[0].start, 0.0);
        for w in plan.intervals.windows(2) {
            prop_assert!(w[0].end == w[1].start && w[0].start < w[0].end);
        }
        for iv in &plan.intervals {
            prop_assert_eq!(&iv.expected, &oracle(kind, &iv.inputs).unwrap());
            for (s, &bit) in sources.iter().zip(&iv.inputs) {
                let v = source_level(&s.waveform, iv.read_time());
                prop_assert!((v - if bit { vdd } else { 0.0 }).abs() < 1e-9 * vdd, "{} at {}: {}", s.name, iv.read_time(), v);
            }
        }
    }
}
