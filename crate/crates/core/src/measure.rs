//! Power, propagation delay, output levels, noise margin and logic grading
//! computed from a waveform and the stimulus plan that produced it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Waveform;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("empty or inverted window [{0:e}, {1:e}]")]
    EmptyWindow(f64, f64),
    #[error("window [{t0:e}, {t1:e}] lies outside the waveform span [0, {end:e}]")]
    OutsideWaveform { t0: f64, t1: f64, end: f64 },
    #[error("waveform has no node or source `{0}`")]
    UnknownSignal(String),
}

/// One input pattern held over `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternInterval {
    pub start: f64,
    pub end: f64,
    pub inputs: Vec<bool>,
    pub expected: Vec<bool>,
}

impl PatternInterval {
    /// Steady-state read point.
    pub fn read_time(&self) -> f64 {
        self.end
    }
}

/// Input schedule with oracle-expected outputs per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPlan {
    pub vdd: f64,
    /// Input node names in bit order.
    pub inputs: Vec<String>,
    /// Output node names in bit order.
    pub outputs: Vec<String>,
    pub intervals: Vec<PatternInterval>,
    /// Leading part of each interval treated as transition time.
    pub settle_fraction: f64,
    /// Duration of one input pattern (s).
    pub pattern_period: f64,
    /// Input rise and fall time (s).
    pub rise: f64,
    /// Duration of one complete tour of patterns (s).
    pub stimulus_period: f64,
}

impl StimulusPlan {
    pub fn tstop(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.end)
    }

    /// Averaging window: the second tour, or the whole run if there is only one.
    pub fn power_window(&self) -> (f64, f64) {
        let end = self.tstop();
        if end >= 2.0 * self.stimulus_period * (1.0 - 1e-12) {
            (self.stimulus_period, 2.0 * self.stimulus_period)
        } else {
            (0.0, end)
        }
    }
}

/// Linear interpolation of a sampled series.
pub fn sample(times: &[f64], series: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        return series[0];
    }
    if k >= times.len() {
        return series[series.len() - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    if t1 == t {
        return series[k];
    }
    series[k - 1] + (series[k] - series[k - 1]) * (t - t0) / (t1 - t0)
}

/// First time in `[t0, t1]` the series crosses `level` in the given
/// direction, by linear interpolation between samples.
pub fn crossing(times: &[f64], series: &[f64], level: f64, t0: f64, t1: f64, rising: bool) -> Option<f64> {
    let start = times.partition_point(|&x| x <= t0).saturating_sub(1);
    for k in start..times.len().saturating_sub(1) {
        if times[k] > t1 {
            break;
        }
        let (a, b) = (series[k], series[k + 1]);
        let hit = if rising { a < level && b >= level } else { a > level && b <= level };
        if hit {
            let t = times[k] + (level - a) * (times[k + 1] - times[k]) / (b - a);
            if t >= t0 && t <= t1 {
                return Some(t);
            }
        }
    }
    None
}

/// Mean of `Σ v·i` over `[t0, t1]` by trapezoidal quadrature on the samples.
///
/// Each entry of `sources` is `(voltage series, current series)` sharing
/// `times`.
pub fn average_power_series(
    times: &[f64],
    sources: &[(&[f64], &[f64])],
    window: (f64, f64),
) -> Result<f64, MeasureError> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(MeasureError::EmptyWindow(t0, t1));
    }
    let end = times.last().copied().unwrap_or(0.0);
    let begin = times.first().copied().unwrap_or(0.0);
    let slack = 1e-12 * end.abs().max(1e-30);
    if t0 < begin - slack || t1 > end + slack {
        return Err(MeasureError::OutsideWaveform { t0, t1, end });
    }
    let power: Vec<f64> = (0..times.len())
        .map(|k| sources.iter().map(|(v, i)| v[k] * i[k]).sum())
        .collect();
    // Samples strictly inside the window plus interpolated end points.
    let mut pts = vec![(t0, sample(times, &power, t0))];
    pts.extend(
        times
            .iter()
            .zip(&power)
            .filter(|(t, _)| **t > t0 && **t < t1)
            .map(|(t, p)| (*t, *p)),
    );
    pts.push((t1, sample(times, &power, t1)));
    let energy: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Ok(energy / (t1 - t0))
}

/// Average power delivered by the named sources over `window`.
pub fn average_power(waveform: &Waveform, sources: &[&str], window: (f64, f64)) -> Result<f64, MeasureError> {
    let mut volts = Vec::new();
    for s in sources {
        let v = waveform
            .source_voltage(s)
            .ok_or_else(|| MeasureError::UnknownSignal(s.to_string()))?;
        volts.push(v);
    }
    let mut pairs = Vec::new();
    for (s, v) in sources.iter().zip(&volts) {
        let i = waveform.current(s).ok_or_else(|| MeasureError::UnknownSignal(s.to_string()))?;
        pairs.push((v.as_slice(), i));
    }
    average_power_series(&waveform.times, &pairs, window)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeDelay {
    pub input: String,
    pub output: String,
    pub interval: usize,
    /// Direction of the output transition.
    pub output_rising: bool,
    pub t_input: f64,
    pub t_output: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DelayReport {
    pub edges: Vec<EdgeDelay>,
    /// Intervals whose expected output transition never crossed 50 %.
    pub missing: Vec<usize>,
}

impl DelayReport {
    /// Worst-case delay over all measured edges.
    pub fn worst(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.delay).reduce(f64::max)
    }

    pub fn merge(&mut self, other: DelayReport) {
        self.edges.extend(other.edges);
        self.missing.extend(other.missing);
        self.missing.sort_unstable();
        self.missing.dedup();
    }
}

/// 50 %-to-50 % delays from `input` to `output` for every interval where the
/// input toggles and the expected output changes.
pub fn propagation_delay(
    waveform: &Waveform,
    input: &str,
    output: &str,
    plan: &StimulusPlan,
) -> Result<DelayReport, MeasureError> {
    let in_idx = plan
        .inputs
        .iter()
        .position(|n| n == input)
        .ok_or_else(|| MeasureError::UnknownSignal(input.to_string()))?;
    let out_idx = plan
        .outputs
        .iter()
        .position(|n| n == output)
        .ok_or_else(|| MeasureError::UnknownSignal(output.to_string()))?;
    let vin = waveform.voltage(input).ok_or_else(|| MeasureError::UnknownSignal(input.to_string()))?;
    let vout = waveform
        .voltage(output)
        .ok_or_else(|| MeasureError::UnknownSignal(output.to_string()))?;
    let level = 0.5 * plan.vdd;
    let t = &waveform.times;
    let mut report = DelayReport::default();
    for (k, pair) in plan.intervals.windows(2).enumerate() {
        let (prev, cur) = (&pair[0], &pair[1]);
        if prev.inputs[in_idx] == cur.inputs[in_idx] || prev.expected[out_idx] == cur.expected[out_idx] {
            continue;
        }
        let rising = cur.expected[out_idx];
        let t_in = crossing(t, &vin, level, cur.start, cur.end, cur.inputs[in_idx]);
        let t_out = crossing(t, &vout, level, cur.start, cur.end, rising);
        match (t_in, t_out) {
            (Some(ti), Some(to)) => report.edges.push(EdgeDelay {
                input: input.to_string(),
                output: output.to_string(),
                interval: k + 1,
                output_rising: rising,
                t_input: ti,
                t_output: to,
                delay: to - ti,
            }),
            _ => report.missing.push(k + 1),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Levels {
    /// Lowest read-point voltage over expected-high intervals.
    pub min_high: Option<f64>,
    /// Highest read-point voltage over expected-low intervals.
    pub max_low: Option<f64>,
}

pub fn output_levels(waveform: &Waveform, output: &str, plan: &StimulusPlan) -> Result<Levels, MeasureError> {
    let idx = plan
        .outputs
        .iter()
        .position(|n| n == output)
        .ok_or_else(|| MeasureError::UnknownSignal(output.to_string()))?;
    let v = waveform
        .voltage(output)
        .ok_or_else(|| MeasureError::UnknownSignal(output.to_string()))?;
    let mut levels = Levels::default();
    for iv in &plan.intervals {
        let x = sample(&waveform.times, &v, iv.read_time());
        if iv.expected[idx] {
            levels.min_high = Some(levels.min_high.map_or(x, |m: f64| m.min(x)));
        } else {
            levels.max_low = Some(levels.max_low.map_or(x, |m: f64| m.max(x)));
        }
    }
    Ok(levels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseMargin {
    /// `min_high - max_low` (V).
    pub value: f64,
    pub fraction_of_vdd: f64,
    /// False when the margin is zero or negative.
    pub passing: bool,
}

pub fn noise_margins(min_high: f64, max_low: f64, vdd: f64) -> NoiseMargin {
    let value = min_high - max_low;
    NoiseMargin {
        value,
        fraction_of_vdd: value / vdd,
        passing: value > 0.0,
    }
}

/// Logic thresholds as fractions of vdd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub voh_frac: f64,
    pub vol_frac: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            voh_frac: 0.55,
            vol_frac: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternGrade {
    pub interval: usize,
    pub start: f64,
    pub end: f64,
    pub inputs: Vec<bool>,
    pub expected: Vec<bool>,
    /// Read-point voltage per output.
    pub measured: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grade {
    pub thresholds: Thresholds,
    pub patterns: Vec<PatternGrade>,
}

impl Grade {
    pub fn all_pass(&self) -> bool {
        self.patterns.iter().all(|p| p.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PatternGrade> {
        self.patterns.iter().filter(|p| !p.pass)
    }
}

/// Check every interval's read point against the logic thresholds.
pub fn grade_logic(waveform: &Waveform, plan: &StimulusPlan, thresholds: Thresholds) -> Result<Grade, MeasureError> {
    let mut series = Vec::new();
    for o in &plan.outputs {
        series.push(waveform.voltage(o).ok_or_else(|| MeasureError::UnknownSignal(o.clone()))?);
    }
    let high = thresholds.voh_frac * plan.vdd;
    let low = thresholds.vol_frac * plan.vdd;
    let patterns = plan
        .intervals
        .iter()
        .enumerate()
        .map(|(k, iv)| {
            let measured: Vec<f64> = series.iter().map(|s| sample(&waveform.times, s, iv.read_time())).collect();
            let pass = measured
                .iter()
                .zip(&iv.expected)
                .all(|(&v, &bit)| if bit { v >= high } else { v <= low });
            PatternGrade {
                interval: k,
                start: iv.start,
                end: iv.end,
                inputs: iv.inputs.clone(),
                expected: iv.expected.clone(),
                measured,
                pass,
            }
        })
        .collect();
    Ok(Grade { thresholds, patterns })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputReport {
    pub node: String,
    pub worst_delay: Option<f64>,
    pub delays: DelayReport,
    pub levels: Levels,
    pub noise_margin: Option<NoiseMargin>,
}

/// Stimulus settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StimulusInfo {
    pub pattern_period: f64,
    pub rise: f64,
    pub patterns_per_tour: usize,
    pub power_window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementReport {
    pub vdd: f64,
    pub avg_power: f64,
    pub stimulus: StimulusInfo,
    pub outputs: Vec<OutputReport>,
    pub grade: Grade,
}

impl MeasurementReport {
    pub fn output(&self, node: &str) -> Option<&OutputReport> {
        self.outputs.iter().find(|o| o.node == node)
    }

    /// Worst delay over all outputs.
    pub fn worst_delay(&self) -> Option<f64> {
        self.outputs.iter().filter_map(|o| o.worst_delay).reduce(f64::max)
    }

    pub fn min_high(&self) -> Option<f64> {
        self.outputs.iter().filter_map(|o| o.levels.min_high).reduce(f64::min)
    }

    pub fn max_low(&self) -> Option<f64> {
        self.outputs.iter().filter_map(|o| o.levels.max_low).reduce(f64::max)
    }
}

/// All measurements for one simulated run. Power sums every source in the
/// waveform over the plan's power window.
pub fn measure(waveform: &Waveform, plan: &StimulusPlan, thresholds: Thresholds) -> Result<MeasurementReport, MeasureError> {
    let sources: Vec<&str> = waveform.source_names.iter().map(String::as_str).collect();
    let window = plan.power_window();
    let avg_power = average_power(waveform, &sources, window)?;
    let mut outputs = Vec::new();
    for out in &plan.outputs {
        let mut delays = DelayReport::default();
        for input in &plan.inputs {
            delays.merge(propagation_delay(waveform, input, out, plan)?);
        }
        let levels = output_levels(waveform, out, plan)?;
        let noise_margin = match (levels.min_high, levels.max_low) {
            (Some(h), Some(l)) => Some(noise_margins(h, l, plan.vdd)),
            _ => None,
        };
        outputs.push(OutputReport {
            node: out.clone(),
            worst_delay: delays.worst(),
            delays,
            levels,
            noise_margin,
        });
    }
    let patterns_per_tour = plan
        .intervals
        .iter()
        .filter(|i| i.start < plan.stimulus_period * (1.0 - 1e-12))
        .count();
    Ok(MeasurementReport {
        vdd: plan.vdd,
        avg_power,
        stimulus: StimulusInfo {
            pattern_period: plan.pattern_period,
            rise: plan.rise,
            patterns_per_tour,
            power_window: window,
        },
        outputs,
        grade: grade_logic(waveform, plan, thresholds)?,
    })
}
