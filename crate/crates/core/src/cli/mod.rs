//! Command-line front end of the `picospice` binary.
//!
//! Exit codes: 0 success, 1 logic failure, 2 convergence failure, 3 usage
//! or parse error. Every flag can also be set through an environment
//! variable named `PICOSPICE_<FLAG>`; an explicit flag wins.

mod reference;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::cells::{characterize, CellError, CellKind, CellSpec, StimulusOptions, Xnor3tWiring};
use crate::device::Card;
use crate::engine::{dc_operating_point, transient, SimConfig, SimError};
use crate::measure::{average_power, MeasurementReport, Thresholds};
use crate::netlist::{flatten, parse, units::parse_value, validate, Device, Netlist, SourceWaveform};

pub use reference::{entries as reference_entries, RefEntry, RefTable, Reference};
pub use report::{diag_rows, sweep_trend, DiagRow, Trend};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LOGIC: i32 = 1;
pub const EXIT_CONVERGENCE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "picospice", version, about = "Transistor-level simulation of pass-transistor XNOR cells and a full adder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one cell or deck and report power, delay and output levels.
    Run(RunArgs),
    /// Characterize a cell over a list or range of supply voltages.
    Sweep(SweepArgs),
    /// Grade the logic of a cell at one or more supply voltages.
    Verify(VerifyArgs),
    /// Print the DC operating region of every device for one input pattern.
    Diag(DiagArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct CellArgs {
    /// Model card.
    #[arg(long, env = "PICOSPICE_CARD", default_value = "generic035")]
    card: Card,
    /// Output load per output node (F).
    #[arg(long, env = "PICOSPICE_LOAD", default_value = "10f", value_parser = si)]
    load: f64,
    /// Wiring of the 3-transistor XNOR (pass-pair or grounded-n2).
    #[arg(long, env = "PICOSPICE_WIRING", default_value = "pass-pair")]
    wiring: Xnor3tWiring,
}

#[derive(Debug, Args)]
struct StimArgs {
    /// Time each input pattern is held (s).
    #[arg(long, env = "PICOSPICE_PERIOD", default_value = "10n", value_parser = si)]
    period: f64,
    /// Input rise and fall time (s).
    #[arg(long, env = "PICOSPICE_RISE", default_value = "100p", value_parser = si)]
    rise: f64,
    /// Logic-high threshold as a fraction of vdd.
    #[arg(long, env = "PICOSPICE_VOH", default_value_t = 0.55)]
    voh: f64,
    /// Logic-low threshold as a fraction of vdd.
    #[arg(long, env = "PICOSPICE_VOL", default_value_t = 0.15)]
    vol: f64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Built-in cell.
    #[arg(long, env = "PICOSPICE_CELL", conflicts_with = "deck", required_unless_present = "deck")]
    cell: Option<CellKind>,
    /// User deck; simulated with its own sources.
    #[arg(long, env = "PICOSPICE_DECK")]
    deck: Option<PathBuf>,
    /// Supply voltage (V); ignored for decks.
    #[arg(long, env = "PICOSPICE_VDD", default_value = "3.3", value_parser = si)]
    vdd: f64,
    /// Waveform CSV destination.
    #[arg(long, env = "PICOSPICE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "PICOSPICE_FORMAT", value_enum, default_value = "text")]
    format: Format,
    /// Transient end time for decks (s).
    #[arg(long, env = "PICOSPICE_TSTOP", default_value = "20n", value_parser = si)]
    tstop: f64,
    /// Nominal timestep for decks (s); defaults to tstop/1000.
    #[arg(long, env = "PICOSPICE_TSTEP", value_parser = si)]
    tstep: Option<f64>,
    #[command(flatten)]
    cell_args: CellArgs,
    #[command(flatten)]
    stim: StimArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, env = "PICOSPICE_CELL", conflicts_with = "deck", required_unless_present = "deck")]
    cell: Option<CellKind>,
    /// User deck whose `vdd` source is swept.
    #[arg(long, env = "PICOSPICE_DECK")]
    deck: Option<PathBuf>,
    /// Comma-separated list (`3.3,2.4`) or inclusive range `start:stop:step`.
    #[arg(long, env = "PICOSPICE_VDD")]
    vdd: String,
    /// Table destination; stdout when absent.
    #[arg(long, env = "PICOSPICE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "PICOSPICE_FORMAT", value_enum, default_value = "csv")]
    format: Format,
    /// Append published values (table1, table2 or table3) as extra columns.
    #[arg(long, env = "PICOSPICE_REFERENCE")]
    reference: Option<RefTable>,
    #[arg(long, env = "PICOSPICE_TSTOP", default_value = "20n", value_parser = si)]
    tstop: f64,
    #[command(flatten)]
    cell_args: CellArgs,
    #[command(flatten)]
    stim: StimArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, env = "PICOSPICE_CELL")]
    cell: CellKind,
    /// Comma-separated list or `start:stop:step`.
    #[arg(long, env = "PICOSPICE_VDD", default_value = "3.3")]
    vdd: String,
    #[arg(long, env = "PICOSPICE_FORMAT", value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    cell_args: CellArgs,
    #[command(flatten)]
    stim: StimArgs,
}

#[derive(Debug, Args)]
struct DiagArgs {
    #[arg(long, env = "PICOSPICE_CELL")]
    cell: CellKind,
    #[arg(long, env = "PICOSPICE_VDD", default_value = "3.3", value_parser = si)]
    vdd: f64,
    /// Input bits in input order, e.g. `10` for a = 1, b = 0.
    #[arg(long, env = "PICOSPICE_PATTERN")]
    pattern: String,
    #[arg(long, env = "PICOSPICE_FORMAT", value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    cell_args: CellArgs,
}

fn si(s: &str) -> Result<f64, String> {
    parse_value(s).ok_or_else(|| format!("`{s}` is not a number"))
}

/// Parse `3.3,2.4,1.8` or `1.8:3.3:0.3` into distinct voltages, highest first.
pub fn parse_vdd_list(text: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    if text.contains(':') {
        let parts: Vec<f64> = text.split(':').map(si).collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(format!("range `{text}` must be start:stop:step"));
        };
        if !(step > 0.0) {
            return Err("range step must be positive".into());
        }
        if stop < start {
            return Err(format!("range `{text}` ends before it starts"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        values.extend((0..=count).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9));
    } else {
        for item in text.split(',').filter(|s| !s.trim().is_empty()) {
            values.push(si(item.trim())?);
        }
    }
    if values.is_empty() {
        return Err("no supply voltages given".into());
    }
    if let Some(v) = values.iter().find(|v| !(1.0..=5.0).contains(*v)) {
        return Err(format!("vdd {v} V is outside [1, 5] V"));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    values.dedup();
    Ok(values)
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<CellError> for Failure {
    fn from(e: CellError) -> Self {
        let code = match &e {
            CellError::Sim(s) if s.is_convergence() => EXIT_CONVERGENCE,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        CellError::Sim(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

/// Parse arguments, execute, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Diag(a) => cmd_diag(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn spec_for(kind: CellKind, vdd: f64, a: &CellArgs) -> CellSpec {
    CellSpec {
        load_cap: a.load,
        wiring: a.wiring,
        card: a.card,
        ..CellSpec::new(kind, vdd)
    }
}

fn options(s: &StimArgs) -> StimulusOptions {
    StimulusOptions {
        pattern_period: s.period,
        rise: s.rise,
        ..StimulusOptions::default()
    }
}

fn thresholds(s: &StimArgs) -> Result<Thresholds, Failure> {
    if !(s.voh > 0.0 && s.voh <= 1.0 && s.vol >= 0.0 && s.vol < s.voh) {
        return Err(Failure::usage("thresholds need 0 <= vol < voh <= 1"));
    }
    Ok(Thresholds {
        voh_frac: s.voh,
        vol_frac: s.vol,
    })
}

fn grade_code(report: &MeasurementReport) -> i32 {
    if report.grade.all_pass() {
        EXIT_OK
    } else {
        EXIT_LOGIC
    }
}

fn load_deck(path: &Path) -> Result<Netlist, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let parsed = parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let flat = flatten(&parsed).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let diagnostics = validate(&flat);
    if !diagnostics.is_empty() {
        let lines: Vec<String> = diagnostics.iter().map(|d| format!("  {d}")).collect();
        return Err(Failure::usage(format!(
            "{}: netlist is not simulatable:\n{}",
            path.display(),
            lines.join("\n")
        )));
    }
    Ok(flat)
}

fn deck_config(netlist: &Netlist, tstop: f64, tstep: Option<f64>) -> SimConfig {
    let tstep = tstep.unwrap_or(tstop / 1000.0).min(tstop);
    let edge = netlist
        .sources()
        .filter_map(|s| s.waveform.shortest_edge())
        .reduce(f64::min)
        .map(|e| (e / 20.0).min(tstep));
    SimConfig {
        edge_step: edge,
        ..SimConfig::transient(tstop, tstep)
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if let Some(path) = &a.deck {
        return run_deck(path, &a, out);
    }
    let kind = a.cell.expect("clap enforces --cell or --deck");
    let th = thresholds(&a.stim)?;
    let c = characterize(&spec_for(kind, a.vdd, &a.cell_args), options(&a.stim), th)?;
    if let Some(path) = &a.out {
        std::fs::write(path, c.waveform.to_csv())?;
    }
    match a.format {
        Format::Text => write!(out, "{}", report::run_text(kind, a.cell_args.card, &c.report))?,
        Format::Csv => {
            let table = report::SweepTable::new(kind.outputs(), None);
            writeln!(out, "{}", table.header())?;
            writeln!(out, "{}", table.row(a.vdd, &Ok(c.report.clone())))?;
        }
        Format::Json => {
            let v = json!({
                "schema": 1,
                "cell": kind.name(),
                "card": a.cell_args.card.name(),
                "report": c.report,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("report serializes"))?;
        }
    }
    Ok(grade_code(&c.report))
}

fn run_deck(path: &Path, a: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let netlist = load_deck(path)?;
    let config = deck_config(&netlist, a.tstop, a.tstep);
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let op = dc_operating_point(&netlist, &config, 1.0)?;
    let wave = transient(&netlist, &config)?;
    if let Some(p) = &a.out {
        std::fs::write(p, wave.to_csv())?;
    }
    let sources: Vec<&str> = wave.source_names.iter().map(String::as_str).collect();
    let power = average_power(&wave, &sources, (0.0, config.tstop)).map_err(|e| Failure::usage(e.to_string()))?;
    match a.format {
        Format::Json => {
            let v = json!({
                "schema": 1,
                "deck": path.display().to_string(),
                "title": netlist.title,
                "operating_point": op,
                "avg_power": power,
                "tstop": config.tstop,
                "samples": wave.times.len(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("report serializes"))?;
        }
        _ => {
            writeln!(out, "deck {} ({})", path.display(), netlist.title)?;
            writeln!(out, "operating point:")?;
            for (node, v) in &op.voltages {
                writeln!(out, "  v({node}) = {v:.6} V")?;
            }
            for (src, i) in &op.currents {
                writeln!(out, "  i({src}) = {i:.6e} A")?;
            }
            writeln!(
                out,
                "transient: {} samples to {:e} s; average power {:.3} uW",
                wave.times.len(),
                config.tstop,
                power * 1e6
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn with_supply(netlist: &Netlist, vdd: f64) -> Result<Netlist, Failure> {
    let mut n = netlist.clone();
    match n.device_mut("vdd") {
        Some(Device::VoltageSource(v)) => v.waveform = SourceWaveform::Dc(vdd),
        _ => return Err(Failure::usage("deck sweep needs a source named `vdd`")),
    }
    Ok(n)
}

use report::RowResult;

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let vdds = parse_vdd_list(&a.vdd).map_err(Failure::usage)?;
    let th = thresholds(&a.stim)?;
    let reference = a.reference.map(Reference::load);

    if let Some(path) = &a.deck {
        let base = load_deck(path)?;
        let config = deck_config(&base, a.tstop, None);
        let rows: Vec<(f64, Result<f64, (i32, String)>)> = vdds
            .par_iter()
            .map(|&vdd| {
                let r = with_supply(&base, vdd).and_then(|n| {
                    let w = transient(&n, &config)?;
                    let s: Vec<&str> = w.source_names.iter().map(String::as_str).collect();
                    average_power(&w, &s, (0.0, config.tstop)).map_err(|e| Failure::usage(e.to_string()))
                });
                (vdd, r.map_err(|f| (f.code, f.message)))
            })
            .collect();
        let mut text = String::from("vdd,power_uW,delay_ps,min_high_V,max_low_V,status\n");
        let mut code = EXIT_OK;
        for (vdd, r) in &rows {
            match r {
                Ok(p) => text.push_str(&format!("{vdd},{:.3},,,,ok\n", p * 1e6)),
                Err((c, m)) => {
                    code = code.max(*c);
                    text.push_str(&format!("{vdd},,,,,error: {}\n", m.replace(',', ";")));
                }
            }
        }
        emit(&a.out, &text, out)?;
        return Ok(code);
    }

    let kind = a.cell.expect("clap enforces --cell or --deck");
    let opts = options(&a.stim);
    let rows: Vec<(f64, RowResult)> = vdds
        .par_iter()
        .map(|&vdd| {
            let r = characterize(&spec_for(kind, vdd, &a.cell_args), opts, th)
                .map(|c| c.report)
                .map_err(|e| {
                    let f = Failure::from(e);
                    (f.code, f.message)
                });
            (vdd, r)
        })
        .collect();

    let code = rows
        .iter()
        .map(|(_, r)| match r {
            Ok(rep) => grade_code(rep),
            Err((c, _)) => *c,
        })
        .max()
        .unwrap_or(EXIT_OK);
    let trend = sweep_trend(&rows);

    let text = match a.format {
        Format::Json => {
            let rows_json: Vec<serde_json::Value> = rows
                .iter()
                .map(|(vdd, r)| {
                    let refs: serde_json::Map<String, serde_json::Value> = reference
                        .iter()
                        .flat_map(|rf| {
                            rf.columns
                                .iter()
                                .filter_map(|c| rf.value(c, *vdd).map(|v| (c.clone(), json!(v))))
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    match r {
                        Ok(rep) => json!({"vdd": vdd, "status": status(rep), "report": rep, "reference": refs}),
                        Err((_, m)) => json!({"vdd": vdd, "status": "error", "error": m, "reference": refs}),
                    }
                })
                .collect();
            let v = json!({
                "schema": 1,
                "cell": kind.name(),
                "card": a.cell_args.card.name(),
                "stimulus": opts,
                "rows": rows_json,
                "trend": trend,
            });
            serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
        }
        _ => {
            let table = report::SweepTable::new(kind.outputs(), reference.as_ref());
            let mut text = table.header() + "\n";
            for (vdd, r) in &rows {
                text.push_str(&table.row(*vdd, r));
                text.push('\n');
            }
            text
        }
    };
    emit(&a.out, &text, out)?;
    for (vdd, r) in &rows {
        if let Err((_, m)) = r {
            writeln!(err, "vdd {vdd} V: {m}")?;
        }
    }
    if let Some(t) = &trend {
        writeln!(err, "{}", t.line())?;
    }
    Ok(code)
}

fn status(rep: &MeasurementReport) -> &'static str {
    if rep.grade.all_pass() {
        "pass"
    } else {
        "logic_fail"
    }
}

fn emit(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let vdds = parse_vdd_list(&a.vdd).map_err(Failure::usage)?;
    let th = thresholds(&a.stim)?;
    let opts = options(&a.stim);
    let results: Vec<(f64, Result<MeasurementReport, CellError>)> = vdds
        .par_iter()
        .map(|&vdd| {
            (
                vdd,
                characterize(&spec_for(a.cell, vdd, &a.cell_args), opts, th).map(|c| c.report),
            )
        })
        .collect();
    let mut code = EXIT_OK;
    let mut reports = Vec::new();
    for (vdd, r) in results {
        let rep = r?;
        code = code.max(grade_code(&rep));
        reports.push((vdd, rep));
    }
    match a.format {
        Format::Json => {
            let v: Vec<serde_json::Value> = reports
                .iter()
                .map(|(vdd, r)| json!({"vdd": vdd, "pass": r.grade.all_pass(), "grade": r.grade}))
                .collect();
            let doc = json!({"schema": 1, "cell": a.cell.name(), "results": v});
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("grade serializes"))?;
        }
        _ => write!(out, "{}", report::verify_text(a.cell, &reports))?,
    }
    Ok(code)
}

fn cmd_diag(a: DiagArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let bits: Vec<bool> = a
        .pattern
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Failure::usage(format!("pattern `{}` must contain only 0 and 1", a.pattern))),
        })
        .collect::<Result<_, _>>()?;
    let spec = spec_for(a.cell, a.vdd, &a.cell_args);
    let rows = diag_rows(&spec, &bits)?;
    match a.format {
        Format::Json => {
            let doc = json!({
                "schema": 1,
                "cell": a.cell.name(),
                "vdd": a.vdd,
                "pattern": a.pattern,
                "devices": rows,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("rows serialize"))?;
        }
        Format::Csv => write!(out, "{}", report::diag_csv(&rows))?,
        Format::Text => write!(out, "{}", report::diag_text(a.cell, a.vdd, &a.pattern, &rows))?,
    }
    Ok(EXIT_OK)
}
