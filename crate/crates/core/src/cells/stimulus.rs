use serde::{Deserialize, Serialize};

use super::{oracle, CellError, CellKind};
use crate::measure::{PatternInterval, StimulusPlan};
use crate::netlist::{SourceWaveform, VoltageSource, GROUND};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusOptions {
    /// Time each input pattern is held (s).
    pub pattern_period: f64,
    /// Input rise and fall time (s).
    pub rise: f64,
    /// Number of back-to-back repetitions of the pattern tour.
    pub tours: usize,
}

impl Default for StimulusOptions {
    fn default() -> Self {
        StimulusOptions {
            pattern_period: 10e-9,
            rise: 100e-12,
            tours: 2,
        }
    }
}

fn bits(code: usize, n: usize) -> Vec<bool> {
    (0..n).rev().map(|k| code >> k & 1 == 1).collect()
}

/// Pattern tour for `n` inputs: the reflected Gray sequence followed by the
/// complemented sequence, reversed and rotated to begin at all-zeros.
///
/// Consecutive patterns (including the wrap back to the start) differ in
/// exactly one bit, every combination is visited, and for n ≤ 3 every
/// single-bit transition of the input cube occurs.
pub fn pattern_tour(n: usize) -> Vec<Vec<bool>> {
    let size = 1usize << n;
    let mask = size - 1;
    let gray: Vec<usize> = (0..size).map(|i| i ^ (i >> 1)).collect();
    let mut second: Vec<usize> = gray.iter().rev().map(|g| g ^ mask).collect();
    let zero = second.iter().position(|&g| g == 0).expect("tour contains zero");
    second.rotate_left(zero);
    gray.into_iter().chain(second).map(|c| bits(c, n)).collect()
}

/// Input sources and the graded plan for a cell.
///
/// Each input becomes a piecewise-linear source that ramps over `rise` at
/// the start of every interval in which its bit changes.
pub fn standard_stimulus(
    kind: CellKind,
    vdd: f64,
    options: StimulusOptions,
) -> Result<(Vec<VoltageSource>, StimulusPlan), CellError> {
    let StimulusOptions {
        pattern_period,
        rise,
        tours,
    } = options;
    if !(pattern_period > 0.0 && rise > 0.0 && rise < pattern_period && tours > 0) {
        return Err(CellError::Stimulus(format!(
            "need 0 < rise < pattern period and at least one tour (period {pattern_period:e}, rise {rise:e}, tours {tours})"
        )));
    }
    let inputs = kind.inputs();
    let tour = pattern_tour(inputs.len());
    let sequence: Vec<&Vec<bool>> = tour.iter().cycle().take(tour.len() * tours).collect();
    let tstop = sequence.len() as f64 * pattern_period;
    let level = |b: bool| if b { vdd } else { 0.0 };

    let mut sources = Vec::new();
    for (i, node) in inputs.iter().enumerate() {
        let mut points = vec![(0.0, level(sequence[0][i]))];
        for k in 1..sequence.len() {
            let (old, new) = (sequence[k - 1][i], sequence[k][i]);
            if old != new {
                let t = k as f64 * pattern_period;
                points.push((t, level(old)));
                points.push((t + rise, level(new)));
            }
        }
        let last = points[points.len() - 1].1;
        points.push((tstop, last));
        sources.push(VoltageSource {
            name: format!("v{node}"),
            pos: node.to_string(),
            neg: GROUND.to_string(),
            waveform: SourceWaveform::Pwl(points),
        });
    }

    let mut intervals = Vec::new();
    for (k, pattern) in sequence.iter().enumerate() {
        intervals.push(PatternInterval {
            start: k as f64 * pattern_period,
            end: (k + 1) as f64 * pattern_period,
            inputs: pattern.to_vec(),
            expected: oracle(kind, pattern)?,
        });
    }
    let plan = StimulusPlan {
        vdd,
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        outputs: kind.outputs().iter().map(|s| s.to_string()).collect(),
        intervals,
        settle_fraction: 0.5,
        pattern_period,
        rise,
        stimulus_period: tour.len() as f64 * pattern_period,
    };
    Ok((sources, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(p: &[bool]) -> usize {
        p.iter().fold(0, |acc, &b| acc << 1 | b as usize)
    }

    #[test]
    fn three_input_tour_order() {
        let t: Vec<usize> = pattern_tour(3).iter().map(|p| code(p)).collect();
        assert_eq!(t, vec![0, 1, 3, 2, 6, 7, 5, 4, 0, 1, 5, 4, 6, 7, 3, 2]);
    }

    #[test]
    fn two_input_tour_order() {
        let t: Vec<usize> = pattern_tour(2).iter().map(|p| code(p)).collect();
        assert_eq!(t, vec![0, 1, 3, 2, 0, 2, 3, 1]);
    }

    #[test]
    fn pwl_has_single_bit_edges() {
        let (sources, plan) = standard_stimulus(CellKind::Xnor3t, 3.3, StimulusOptions::default()).unwrap();
        assert_eq!(sources.len(), 2);
        assert_eq!(plan.intervals.len(), 16);
        assert_eq!(plan.tstop(), 160e-9);
        let va = &sources[0].waveform;
        assert_eq!(va.value_at(0.0), 0.0);
        assert_eq!(va.value_at(25e-9), 3.3);
        assert!((va.value_at(20.05e-9) - 1.65).abs() < 1e-9);
    }

    #[test]
    fn rejects_rise_longer_than_period() {
        let opts = StimulusOptions {
            rise: 20e-9,
            ..Default::default()
        };
        assert!(standard_stimulus(CellKind::Inverter, 3.3, opts).is_err());
    }
}
