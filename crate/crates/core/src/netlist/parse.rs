use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::units::parse_value;
use super::{
    canonical_node, Capacitor, Device, Instance, Mosfet, Netlist, Pulse, Resistor, SourceWaveform,
    Subcircuit, VoltageSource,
};
use crate::device::{MosModel, Polarity};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UndefinedModel(String),
    DuplicateDevice(String),
    InvalidModelCard(String),
    MissingEnd,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            ParseErrorKind::UndefinedModel(name) => write!(f, "undefined model `{name}`"),
            ParseErrorKind::DuplicateDevice(name) => write!(f, "duplicate device name `{name}`"),
            ParseErrorKind::InvalidModelCard(msg) => write!(f, "invalid model card: {msg}"),
            ParseErrorKind::MissingEnd => write!(f, "missing `.end`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
    column: usize,
}

impl Token {
    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column,
            kind,
        }
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        self.error(ParseErrorKind::Syntax(msg.into()))
    }
}

fn tokenize_line(raw: &str, line: usize, tokens: &mut Vec<Token>) {
    let content = match raw.find([';', '$']) {
        Some(idx) => &raw[..idx],
        None => raw,
    };
    let mut current = String::new();
    let mut start = 0;
    let flush = |current: &mut String, start: usize, tokens: &mut Vec<Token>| {
        if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(current).to_ascii_lowercase(),
                line,
                column: start + 1,
            });
        }
    };
    for (col, ch) in content.chars().enumerate() {
        match ch {
            c if c.is_whitespace() || c == '(' || c == ')' || c == ',' => {
                flush(&mut current, start, tokens);
            }
            '=' => {
                flush(&mut current, start, tokens);
                tokens.push(Token {
                    text: "=".into(),
                    line,
                    column: col + 1,
                });
            }
            c => {
                if current.is_empty() {
                    start = col;
                }
                current.push(c);
            }
        }
    }
    flush(&mut current, start, tokens);
}

/// Split the deck into logical cards, joining `+` continuations.
fn cards(text: &str) -> (String, Vec<Vec<Token>>) {
    let mut lines = text.lines();
    let title = lines.next().unwrap_or("").trim().to_string();
    let mut cards: Vec<Vec<Token>> = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let offset = raw.len() - trimmed.len();
        if let Some(rest) = trimmed.strip_prefix('+') {
            let mut tokens = Vec::new();
            tokenize_line(rest, line, &mut tokens);
            for t in &mut tokens {
                t.column += offset + 1;
            }
            match cards.last_mut() {
                Some(card) => card.extend(tokens),
                None => cards.push(tokens),
            }
        } else {
            let mut tokens = Vec::new();
            tokenize_line(raw, line, &mut tokens);
            if !tokens.is_empty() {
                cards.push(tokens);
            }
        }
    }
    (title, cards)
}

fn value(token: &Token) -> Result<f64, ParseError> {
    parse_value(&token.text).ok_or_else(|| token.syntax(format!("expected a number, found `{}`", token.text)))
}

fn expect<'a>(card: &'a [Token], idx: usize, what: &str) -> Result<&'a Token, ParseError> {
    card.get(idx).ok_or_else(|| {
        let last = card.last().expect("cards are never empty");
        ParseError {
            line: last.line,
            column: last.column + last.text.len(),
            kind: ParseErrorKind::Syntax(format!("missing {what}")),
        }
    })
}

/// `key = value` pairs following the positional fields.
fn key_values(card: &[Token]) -> Result<Vec<(&Token, f64)>, ParseError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < card.len() {
        let key = &card[i];
        if key.text == "=" {
            return Err(key.syntax("`=` without a parameter name"));
        }
        match card.get(i + 1) {
            Some(eq) if eq.text == "=" => {
                let v = expect(card, i + 2, &format!("value for `{}`", key.text))?;
                out.push((key, value(v)?));
                i += 3;
            }
            _ => return Err(key.syntax(format!("expected `name=value`, found `{}`", key.text))),
        }
    }
    Ok(out)
}

struct ModelRef {
    model: String,
    token: Token,
}

#[derive(Default)]
struct Scope {
    devices: Vec<Device>,
    names: BTreeSet<String>,
    model_refs: Vec<ModelRef>,
}

impl Scope {
    fn add(&mut self, device: Device, token: &Token) -> Result<(), ParseError> {
        if !self.names.insert(device.name().to_string()) {
            return Err(token.error(ParseErrorKind::DuplicateDevice(device.name().to_string())));
        }
        self.devices.push(device);
        Ok(())
    }
}

struct OpenSubckt {
    name: String,
    ports: Vec<String>,
    scope: Scope,
    token: Token,
}

/// Parse a deck. The first line is the title; the deck must end with `.end`.
pub fn parse(text: &str) -> Result<Netlist, ParseError> {
    let (title, cards) = cards(text);
    let mut netlist = Netlist::new(title);
    let mut top = Scope::default();
    let mut open: Option<OpenSubckt> = None;
    let mut subckts: BTreeMap<String, Subcircuit> = BTreeMap::new();
    let mut model_tokens: BTreeMap<String, Token> = BTreeMap::new();
    let mut ended = false;

    for card in &cards {
        let head = &card[0];
        if head.text.starts_with('.') {
            match head.text.as_str() {
                ".end" => {
                    ended = true;
                    break;
                }
                ".model" => {
                    let (name, model) = parse_model(card)?;
                    if model_tokens.insert(name.clone(), head.clone()).is_some() {
                        return Err(head.syntax(format!("model `{name}` defined twice")));
                    }
                    netlist.models.insert(name, model);
                }
                ".global" => {
                    for t in &card[1..] {
                        netlist.globals.insert(canonical_node(&t.text));
                    }
                }
                ".subckt" => {
                    if let Some(outer) = &open {
                        return Err(head.syntax(format!(
                            "nested `.subckt` inside `{}` is not supported",
                            outer.name
                        )));
                    }
                    let name = expect(card, 1, "subcircuit name")?.text.clone();
                    let ports: Vec<String> = card[2..].iter().map(|t| canonical_node(&t.text)).collect();
                    let unique: BTreeSet<&String> = ports.iter().collect();
                    if unique.len() != ports.len() {
                        return Err(head.syntax(format!("subcircuit `{name}` repeats a port")));
                    }
                    if subckts.contains_key(&name) {
                        return Err(head.syntax(format!("subcircuit `{name}` defined twice")));
                    }
                    open = Some(OpenSubckt {
                        name,
                        ports,
                        scope: Scope::default(),
                        token: head.clone(),
                    });
                }
                ".ends" => {
                    let Some(sub) = open.take() else {
                        return Err(head.syntax("`.ends` without `.subckt`"));
                    };
                    if let Some(t) = card.get(1) {
                        if t.text != sub.name {
                            return Err(t.syntax(format!("`.ends {}` closes `{}`", t.text, sub.name)));
                        }
                    }
                    top.model_refs.extend(sub.scope.model_refs);
                    subckts.insert(
                        sub.name.clone(),
                        Subcircuit {
                            name: sub.name,
                            ports: sub.ports,
                            devices: sub.scope.devices,
                        },
                    );
                }
                other => return Err(head.syntax(format!("unsupported directive `{other}`"))),
            }
            continue;
        }

        let scope = match open.as_mut() {
            Some(sub) => &mut sub.scope,
            None => &mut top,
        };
        let device = parse_device(card, &mut scope.model_refs)?;
        scope.add(device, head)?;
    }

    if let Some(sub) = open {
        return Err(sub.token.syntax(format!("`.subckt {}` is never closed", sub.name)));
    }
    if !ended {
        let (line, column) = cards
            .last()
            .and_then(|c| c.last())
            .map(|t| (t.line, t.column))
            .unwrap_or((1, 1));
        return Err(ParseError {
            line,
            column,
            kind: ParseErrorKind::MissingEnd,
        });
    }

    for r in &top.model_refs {
        if !netlist.models.contains_key(&r.model) {
            return Err(r.token.error(ParseErrorKind::UndefinedModel(r.model.clone())));
        }
    }
    // Instance polarity follows the model type.
    let polarity_of = |m: &Mosfet| netlist.models[&m.model].polarity;
    let fix = |devices: &mut Vec<Device>| {
        for d in devices.iter_mut() {
            if let Device::Mosfet(m) = d {
                m.polarity = polarity_of(m);
            }
        }
    };
    fix(&mut top.devices);
    for sub in subckts.values_mut() {
        fix(&mut sub.devices);
    }

    netlist.devices = top.devices;
    netlist.subcircuits = subckts;
    netlist.rebuild_nodes();
    Ok(netlist)
}

fn parse_device(card: &[Token], model_refs: &mut Vec<ModelRef>) -> Result<Device, ParseError> {
    let head = &card[0];
    let name = head.text.clone();
    let node = |idx: usize, what: &str| expect(card, idx, what).map(|t| canonical_node(&t.text));
    match name.as_bytes()[0] {
        b'm' => {
            let drain = node(1, "drain node")?;
            let gate = node(2, "gate node")?;
            let source = node(3, "source node")?;
            let body = node(4, "body node")?;
            let model_token = expect(card, 5, "model name")?;
            if model_token.text == "=" || card.get(6).is_some_and(|t| t.text == "=") {
                return Err(model_token.syntax("missing model name"));
            }
            let mut w = None;
            let mut l = None;
            for (key, v) in key_values(&card[6..])? {
                match key.text.as_str() {
                    "w" => w = Some(v),
                    "l" => l = Some(v),
                    other => return Err(key.syntax(format!("unknown MOSFET parameter `{other}`"))),
                }
            }
            let w = w.ok_or_else(|| head.syntax(format!("`{name}` needs W=")))?;
            let l = l.ok_or_else(|| head.syntax(format!("`{name}` needs L=")))?;
            if !(w > 0.0 && l > 0.0) {
                return Err(head.syntax(format!("`{name}` needs W > 0 and L > 0")));
            }
            model_refs.push(ModelRef {
                model: model_token.text.clone(),
                token: model_token.clone(),
            });
            Ok(Device::Mosfet(Mosfet {
                name,
                polarity: Polarity::N,
                drain,
                gate,
                source,
                body,
                w,
                l,
                model: model_token.text.clone(),
            }))
        }
        b'c' | b'r' => {
            let pos = node(1, "first node")?;
            let neg = node(2, "second node")?;
            let v_token = expect(card, 3, "value")?;
            let v = value(v_token)?;
            if let Some(extra) = card.get(4) {
                return Err(extra.syntax(format!("unexpected `{}`", extra.text)));
            }
            if name.starts_with('c') {
                if v < 0.0 {
                    return Err(v_token.syntax("capacitance must be non-negative"));
                }
                Ok(Device::Capacitor(Capacitor { name, pos, neg, value: v }))
            } else {
                if !(v > 0.0) {
                    return Err(v_token.syntax("resistance must be positive"));
                }
                Ok(Device::Resistor(Resistor { name, pos, neg, value: v }))
            }
        }
        b'v' => {
            let pos = node(1, "positive node")?;
            let neg = node(2, "negative node")?;
            let waveform = parse_waveform(card, 3)?;
            Ok(Device::VoltageSource(VoltageSource { name, pos, neg, waveform }))
        }
        b'x' => {
            if card.len() < 2 {
                return Err(head.syntax("missing subcircuit name"));
            }
            let subckt = card[card.len() - 1].text.clone();
            let nodes = card[1..card.len() - 1].iter().map(|t| canonical_node(&t.text)).collect();
            Ok(Device::Instance(Instance { name, subckt, nodes }))
        }
        _ => Err(head.syntax(format!("unsupported device `{name}`"))),
    }
}

fn parse_waveform(card: &[Token], start: usize) -> Result<SourceWaveform, ParseError> {
    let first = expect(card, start, "source value")?;
    let rest = &card[start + 1..];
    let values = |tokens: &[Token]| tokens.iter().map(value).collect::<Result<Vec<f64>, _>>();
    match first.text.as_str() {
        "dc" => {
            let v = expect(card, start + 1, "DC value")?;
            if let Some(extra) = card.get(start + 2) {
                return Err(extra.syntax(format!("unexpected `{}`", extra.text)));
            }
            Ok(SourceWaveform::Dc(value(v)?))
        }
        "pulse" => {
            let v = values(rest)?;
            if v.len() != 7 {
                return Err(first.syntax(format!(
                    "PULSE takes 7 values (v1 v2 td tr tf pw per), found {}",
                    v.len()
                )));
            }
            if !(v[3] > 0.0 && v[4] > 0.0) {
                return Err(first.syntax("PULSE rise and fall times must be positive"));
            }
            if v[2] < 0.0 || v[5] < 0.0 || v[6] < 0.0 {
                return Err(first.syntax("PULSE delay, width and period must be non-negative"));
            }
            Ok(SourceWaveform::Pulse(Pulse {
                v1: v[0],
                v2: v[1],
                delay: v[2],
                rise: v[3],
                fall: v[4],
                width: v[5],
                period: v[6],
            }))
        }
        "pwl" => {
            let v = values(rest)?;
            if v.is_empty() || v.len() % 2 != 0 {
                return Err(first.syntax("PWL takes time/value pairs"));
            }
            let points: Vec<(f64, f64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
            if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(first.syntax("PWL times must be strictly increasing"));
            }
            Ok(SourceWaveform::Pwl(points))
        }
        _ => {
            if let Some(extra) = rest.first() {
                return Err(extra.syntax(format!("unexpected `{}`", extra.text)));
            }
            Ok(SourceWaveform::Dc(value(first)?))
        }
    }
}

fn parse_model(card: &[Token]) -> Result<(String, MosModel), ParseError> {
    let name = expect(card, 1, "model name")?.text.clone();
    let kind = expect(card, 2, "model type")?;
    let polarity = match kind.text.as_str() {
        "nmos" => Polarity::N,
        "pmos" => Polarity::P,
        other => return Err(kind.syntax(format!("unsupported model type `{other}` (expected nmos or pmos)"))),
    };
    let mut model = MosModel::generic035(polarity);
    for (key, v) in key_values(&card[3..])? {
        let slot = match key.text.as_str() {
            "vt0" => &mut model.vt0,
            "gamma" => &mut model.gamma,
            "phi0" => &mut model.phi0,
            "tox" => &mut model.tox,
            "alphal" => &mut model.alpha_l,
            "alphav" => &mut model.alpha_v,
            "alphaw" => &mut model.alpha_w,
            "kp" => &mut model.kprime,
            "lambda" => &mut model.lambda,
            "nb" => &mut model.nb,
            "cox" => &mut model.cox_area,
            "cj" => &mut model.cj,
            "convbody" => {
                model.conventional_body_effect = match v {
                    0.0 => false,
                    1.0 => true,
                    _ => {
                        return Err(key.error(ParseErrorKind::InvalidModelCard(
                            "convbody must be 0 or 1".into(),
                        )))
                    }
                };
                continue;
            }
            other => {
                return Err(key.error(ParseErrorKind::InvalidModelCard(format!(
                    "unknown parameter `{other}`"
                ))))
            }
        };
        *slot = v;
    }
    model
        .validate()
        .map_err(|e| card[0].error(ParseErrorKind::InvalidModelCard(e.to_string())))?;
    Ok((name, model))
}
