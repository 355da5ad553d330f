//! Compiled MNA form of a flat netlist and the damped Newton solver.

use crate::device::{device_capacitances, evaluate_terminals, Geometry, MosModel};
use crate::netlist::{Device, Netlist, SourceWaveform, GROUND};

use super::lu::{solve, Matrix};
use super::{SimConfig, SimError};

/// Largest per-iteration change of a node voltage (V).
const MAX_NODE_STEP: f64 = 0.3;

type Node = Option<usize>;

pub(crate) struct Source {
    pub name: String,
    pub pos: Node,
    pub neg: Node,
    pub pos_name: String,
    pub neg_name: String,
    pub waveform: SourceWaveform,
}

struct Mos {
    model: MosModel,
    geometry: Geometry,
    d: Node,
    g: Node,
    s: Node,
    b: Node,
}

#[derive(Clone, Copy)]
pub(crate) struct Cap {
    pub a: Node,
    pub b: Node,
    pub c: f64,
}

pub(crate) struct Circuit {
    pub node_names: Vec<String>,
    pub sources: Vec<Source>,
    mosfets: Vec<Mos>,
    resistors: Vec<(Node, Node, f64)>,
    /// Explicit capacitors, device capacitances and `cmin` to ground.
    pub caps: Vec<Cap>,
    /// Nodes tied to ground through a source; they get no `gmin`.
    pinned: Vec<bool>,
}

/// Capacitor companion state for one timestep.
pub(crate) struct Companion<'a> {
    /// `C/h` multiplier: `1/h` for backward Euler, `2/h` for trapezoidal.
    pub factor: f64,
    pub trapezoidal: bool,
    pub v_prev: &'a [f64],
    pub i_prev: &'a [f64],
}

pub(crate) struct Context<'a> {
    pub time: f64,
    pub source_scale: f64,
    pub gmin: f64,
    pub companion: Option<Companion<'a>>,
}

pub(crate) enum NewtonFailure {
    NoConvergence { row: usize, residual: f64 },
    Singular(usize),
}

impl Circuit {
    pub fn compile(netlist: &Netlist, config: &SimConfig) -> Result<Self, SimError> {
        if !netlist.is_flat() {
            return Err(SimError::NotFlat);
        }
        let node_names: Vec<String> = netlist.nodes.iter().filter(|n| *n != GROUND).cloned().collect();
        let index = |name: &str| -> Node {
            if name == GROUND {
                None
            } else {
                node_names.binary_search_by(|n| n.as_str().cmp(name)).ok()
            }
        };
        let mut c = Circuit {
            node_names: node_names.clone(),
            sources: Vec::new(),
            mosfets: Vec::new(),
            resistors: Vec::new(),
            caps: Vec::new(),
            pinned: vec![false; node_names.len()],
        };
        for d in &netlist.devices {
            match d {
                Device::Mosfet(m) => {
                    let model = netlist.models.get(&m.model).ok_or_else(|| SimError::UnknownModel {
                        device: m.name.clone(),
                        model: m.model.clone(),
                    })?;
                    let geometry = m.geometry();
                    let (d, g, s, b) = (index(&m.drain), index(&m.gate), index(&m.source), index(&m.body));
                    let dc = device_capacitances(model, geometry);
                    for (a, bb, cap) in [(g, s, dc.cgs), (g, d, dc.cgd), (d, b, dc.cdb), (s, b, dc.csb)] {
                        if cap > 0.0 && a != bb {
                            c.caps.push(Cap { a, b: bb, c: cap });
                        }
                    }
                    c.mosfets.push(Mos {
                        model: model.clone(),
                        geometry,
                        d,
                        g,
                        s,
                        b,
                    });
                }
                Device::Capacitor(cap) => {
                    let (a, b) = (index(&cap.pos), index(&cap.neg));
                    if cap.value > 0.0 && a != b {
                        c.caps.push(Cap { a, b, c: cap.value });
                    }
                }
                Device::Resistor(r) => c.resistors.push((index(&r.pos), index(&r.neg), 1.0 / r.value)),
                Device::VoltageSource(v) => c.sources.push(Source {
                    name: v.name.clone(),
                    pos: index(&v.pos),
                    neg: index(&v.neg),
                    pos_name: v.pos.clone(),
                    neg_name: v.neg.clone(),
                    waveform: v.waveform.clone(),
                }),
                Device::Instance(_) => return Err(SimError::NotFlat),
            }
        }
        for s in &c.sources {
            match (s.pos, s.neg) {
                (Some(i), None) | (None, Some(i)) => c.pinned[i] = true,
                _ => {}
            }
        }
        for i in 0..node_names.len() {
            c.caps.push(Cap {
                a: Some(i),
                b: None,
                c: config.cmin,
            });
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.node_names.len() + self.sources.len()
    }

    pub fn unknown_name(&self, row: usize) -> String {
        let n = self.node_names.len();
        if row < n {
            self.node_names[row].clone()
        } else {
            format!("i({})", self.sources[row - n].name)
        }
    }

    /// Voltage across every capacitor at solution `x`.
    pub fn cap_voltages(&self, x: &[f64]) -> Vec<f64> {
        self.caps.iter().map(|c| volt(x, c.a) - volt(x, c.b)).collect()
    }

    /// Fill the Jacobian and residual at `x`. `scale[i]` receives the
    /// largest branch current magnitude touching node `i`.
    fn assemble(&self, x: &[f64], ctx: &Context, jac: &mut Matrix, f: &mut [f64], scale: &mut [f64]) {
        let n = self.node_names.len();
        jac.clear();
        f.iter_mut().for_each(|v| *v = 0.0);
        scale.iter_mut().for_each(|v| *v = 0.0);

        let leave = |f: &mut [f64], scale: &mut [f64], node: Node, i: f64| {
            if let Some(k) = node {
                f[k] += i;
                scale[k] = scale[k].max(i.abs());
            }
        };
        let stamp = |jac: &mut Matrix, row: Node, col: Node, v: f64| {
            if let (Some(r), Some(c)) = (row, col) {
                jac.add(r, c, v);
            }
        };

        for i in (0..n).filter(|&i| !self.pinned[i]) {
            let i_gmin = ctx.gmin * x[i];
            leave(f, scale, Some(i), i_gmin);
            jac.add(i, i, ctx.gmin);
        }

        for &(a, b, g) in &self.resistors {
            let i = g * (volt(x, a) - volt(x, b));
            leave(f, scale, a, i);
            leave(f, scale, b, -i);
            stamp(jac, a, a, g);
            stamp(jac, a, b, -g);
            stamp(jac, b, a, -g);
            stamp(jac, b, b, g);
        }

        for m in &self.mosfets {
            let e = evaluate_terminals(
                &m.model,
                m.geometry,
                volt(x, m.d),
                volt(x, m.g),
                volt(x, m.s),
                volt(x, m.b),
            );
            leave(f, scale, m.d, e.id);
            leave(f, scale, m.s, -e.id);
            for (col, dv) in [(m.d, e.d_vd), (m.g, e.d_vg), (m.s, e.d_vs), (m.b, e.d_vb)] {
                stamp(jac, m.d, col, dv);
                stamp(jac, m.s, col, -dv);
            }
        }

        if let Some(comp) = &ctx.companion {
            for (k, cap) in self.caps.iter().enumerate() {
                let geq = cap.c * comp.factor;
                let v = volt(x, cap.a) - volt(x, cap.b);
                let mut i = geq * (v - comp.v_prev[k]);
                if comp.trapezoidal {
                    i -= comp.i_prev[k];
                }
                leave(f, scale, cap.a, i);
                leave(f, scale, cap.b, -i);
                stamp(jac, cap.a, cap.a, geq);
                stamp(jac, cap.a, cap.b, -geq);
                stamp(jac, cap.b, cap.a, -geq);
                stamp(jac, cap.b, cap.b, geq);
            }
        }

        for (k, s) in self.sources.iter().enumerate() {
            let row = n + k;
            let j = x[row];
            leave(f, scale, s.pos, -j);
            leave(f, scale, s.neg, j);
            if let Some(p) = s.pos {
                jac.add(p, row, -1.0);
                jac.add(row, p, 1.0);
            }
            if let Some(q) = s.neg {
                jac.add(q, row, 1.0);
                jac.add(row, q, -1.0);
            }
            f[row] = volt(x, s.pos) - volt(x, s.neg) - ctx.source_scale * s.waveform.value_at(ctx.time);
        }
    }

    /// Capacitor currents at an accepted solution, for trapezoidal history.
    pub fn cap_currents(&self, x: &[f64], comp: &Companion) -> Vec<f64> {
        self.caps
            .iter()
            .enumerate()
            .map(|(k, cap)| {
                let v = volt(x, cap.a) - volt(x, cap.b);
                let mut i = cap.c * comp.factor * (v - comp.v_prev[k]);
                if comp.trapezoidal {
                    i -= comp.i_prev[k];
                }
                i
            })
            .collect()
    }

    /// Damped Newton–Raphson from `x0`.
    ///
    /// Node updates are clamped to 0.3 V; a node whose update reverses
    /// direction has its clamp halved, and the clamp doubles back toward
    /// 0.3 V while the direction holds. Converged when every node residual
    /// is within `abstol + reltol·(largest branch current at the node)`,
    /// every source row within `vntol`, and the last node update within
    /// `vntol`.
    pub fn newton(&self, x0: &[f64], ctx: &Context, config: &SimConfig) -> Result<Vec<f64>, NewtonFailure> {
        let n = self.node_names.len();
        let dim = self.dim();
        let mut x = x0.to_vec();
        let mut jac = Matrix::zeros(dim);
        let mut f = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        let mut step_small = false;
        let mut worst = (0, f64::INFINITY);
        let mut limit = vec![MAX_NODE_STEP; n];
        let mut last_dx = vec![0.0; n];

        for _ in 0..config.max_newton {
            self.assemble(&x, ctx, &mut jac, &mut f, &mut scale);
            worst = (0, 0.0);
            let mut residual_ok = true;
            for row in 0..dim {
                let (tol, r) = if row < n {
                    (config.abstol + config.reltol * scale[row], f[row].abs())
                } else {
                    (config.vntol, f[row].abs())
                };
                if r > tol {
                    residual_ok = false;
                }
                if r / tol > worst.1 {
                    worst = (row, r / tol);
                }
            }
            if residual_ok && step_small {
                return Ok(x);
            }
            let mut dx: Vec<f64> = f.iter().map(|v| -v).collect();
            solve(&mut jac, &mut dx).map_err(NewtonFailure::Singular)?;
            step_small = true;
            for i in 0..dim {
                let mut d = dx[i];
                if i < n {
                    limit[i] = if d * last_dx[i] < 0.0 {
                        limit[i] * 0.5
                    } else {
                        (limit[i] * 2.0).min(MAX_NODE_STEP)
                    };
                    d = d.clamp(-limit[i], limit[i]);
                    last_dx[i] = d;
                    if d.abs() > config.vntol {
                        step_small = false;
                    }
                }
                x[i] += d;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(NewtonFailure::NoConvergence {
                    row: worst.0,
                    residual: f64::INFINITY,
                });
            }
        }
        Err(NewtonFailure::NoConvergence {
            row: worst.0,
            residual: f[worst.0].abs(),
        })
    }
}

#[inline]
pub(crate) fn volt(x: &[f64], node: Node) -> f64 {
    node.map_or(0.0, |i| x[i])
}
