//! MOSFET model evaluation.
//!
//! A Level-1 square-law current model whose threshold voltage carries the
//! geometry and drain-bias corrections (length, width and DIBL-like terms),
//! plus the on-resistance diagnostics used by the `diag` report.
//!
//! All evaluation functions work in the NMOS convention. PMOS devices are
//! evaluated through [`evaluate_terminals`], which mirrors the terminal
//! voltages and negates the result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Elementary charge (C).
pub const Q_ELECTRON: f64 = 1.602_176_634e-19;
/// Permittivity of silicon (F/m).
pub const EPS_SI: f64 = 1.035_9e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("threshold voltage undefined: vsb + phi0 = {0} V is not positive")]
    BodyBiasDomain(f64),
    #[error("triode resistance requires 0 < vds < vgs - vt (vds = {vds} V, vgs - vt = {vov} V)")]
    NotTriode { vds: f64, vov: f64 },
    #[error("saturation resistance requires vds >= vds_sat (vds = {vds} V, vds_sat = {vds_sat} V)")]
    NotSaturated { vds: f64, vds_sat: f64 },
    #[error("saturation resistance requires a positive drain current (got {0} A)")]
    NonPositiveCurrent(f64),
    #[error("saturation resistance requires delta_l < L (delta_l = {delta_l} m, L = {l} m)")]
    LengthReduction { delta_l: f64, l: f64 },
    #[error("invalid model parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    N,
    P,
}

impl Polarity {
    /// +1 for NMOS, -1 for PMOS.
    pub fn sign(self) -> f64 {
        match self {
            Polarity::N => 1.0,
            Polarity::P => -1.0,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Polarity::N => "nmos",
            Polarity::P => "pmos",
        }
    }
}

/// Model card parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosModel {
    pub polarity: Polarity,
    /// Zero-bias threshold magnitude (V).
    pub vt0: f64,
    /// Bulk threshold coefficient (V^0.5).
    pub gamma: f64,
    /// Surface potential 2·phi_F (V).
    pub phi0: f64,
    /// Oxide thickness (m).
    pub tox: f64,
    /// Short-channel (length) threshold correction coefficient.
    pub alpha_l: f64,
    /// Drain-bias threshold correction coefficient.
    pub alpha_v: f64,
    /// Narrow-width threshold correction coefficient.
    pub alpha_w: f64,
    /// Transconductance parameter K (A/V²).
    pub kprime: f64,
    /// Channel-length modulation (1/V).
    pub lambda: f64,
    /// Substrate doping (1/m³).
    pub nb: f64,
    /// Silicon permittivity (F/m).
    pub eps_si: f64,
    /// Elementary charge (C).
    pub q: f64,
    /// Gate capacitance per area (F/m²).
    pub cox_area: f64,
    /// Junction capacitance per width (F/m).
    pub cj: f64,
    /// Use `gamma·(sqrt(vsb+phi0) - sqrt(phi0))` for the body term instead of
    /// the bare `gamma·sqrt(vsb+phi0)`.
    pub conventional_body_effect: bool,
}

impl MosModel {
    /// Generic 0.35 µm card built from public textbook-class values.
    ///
    /// This is not a foundry card; absolute power and delay figures obtained
    /// with it are only order-of-magnitude comparable with silicon.
    pub fn generic035(polarity: Polarity) -> Self {
        let (vt0, kprime, lambda) = match polarity {
            Polarity::N => (0.5, 170e-6, 0.06),
            Polarity::P => (0.65, 58e-6, 0.09),
        };
        MosModel {
            polarity,
            vt0,
            gamma: 0.58,
            phi0: 0.84,
            tox: 7.6e-9,
            alpha_l: 0.0,
            alpha_v: 0.0,
            alpha_w: 0.0,
            kprime,
            lambda,
            nb: 1e23,
            eps_si: EPS_SI,
            q: Q_ELECTRON,
            cox_area: 4.5e-3,
            cj: 3e-10,
            conventional_body_effect: true,
        }
    }

    /// `generic035` with nonzero length/drain/width threshold corrections.
    pub fn eq5demo(polarity: Polarity) -> Self {
        MosModel {
            alpha_l: 2.0,
            alpha_v: 1.5,
            alpha_w: 3.0,
            ..MosModel::generic035(polarity)
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let positive = [
            ("vt0", self.vt0),
            ("phi0", self.phi0),
            ("tox", self.tox),
            ("kp", self.kprime),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(DeviceError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
        }
        let non_negative = [
            ("lambda", self.lambda),
            ("cox", self.cox_area),
            ("cj", self.cj),
            ("nb", self.nb),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(DeviceError::InvalidParameter {
                    name,
                    value,
                    reason: "must be non-negative",
                });
            }
        }
        Ok(())
    }
}

/// Named built-in model cards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Card {
    #[default]
    Generic035,
    Eq5demo,
}

impl Card {
    pub fn model(self, polarity: Polarity) -> MosModel {
        match self {
            Card::Generic035 => MosModel::generic035(polarity),
            Card::Eq5demo => MosModel::eq5demo(polarity),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Card::Generic035 => "generic035",
            Card::Eq5demo => "eq5demo",
        }
    }
}

impl std::str::FromStr for Card {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "generic035" => Ok(Card::Generic035),
            "eq5demo" => Ok(Card::Eq5demo),
            other => Err(format!("unknown model card `{other}` (expected generic035 or eq5demo)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Channel width (m).
    pub w: f64,
    /// Channel length (m).
    pub l: f64,
}

impl Geometry {
    pub fn new(w: f64, l: f64) -> Self {
        Geometry { w, l }
    }

    pub fn aspect(&self) -> f64 {
        self.w / self.l
    }
}

/// Terminal voltage differences in the NMOS convention.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasPoint {
    pub vgs: f64,
    pub vds: f64,
    pub vsb: f64,
}

impl BiasPoint {
    pub fn new(vgs: f64, vds: f64, vsb: f64) -> Self {
        BiasPoint { vgs, vds, vsb }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Cutoff,
    Triode,
    Saturation,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Cutoff => "cutoff",
            Region::Triode => "triode",
            Region::Saturation => "saturation",
        })
    }
}

/// Drain current and its partial derivatives at a normalized bias point.
///
/// `gmb` is the plain partial derivative with respect to `vsb`; it is
/// negative whenever the body effect raises the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conductances {
    pub gm: f64,
    pub gds: f64,
    pub gmb: f64,
    pub id: f64,
}

/// Threshold voltage with body, length, drain-bias and width corrections.
///
/// `vt0 + gamma·sqrt(vsb+phi0) - alpha_l·(tox/L)·(vsb+phi0) -
/// alpha_v·(tox/L)·vds + alpha_w·(tox/W)·(vsb+phi0)`, with the body term
/// replaced by `gamma·(sqrt(vsb+phi0) - sqrt(phi0))` when the model selects
/// the conventional form.
pub fn threshold_voltage(
    model: &MosModel,
    geometry: Geometry,
    vsb: f64,
    vds: f64,
) -> Result<f64, DeviceError> {
    let surface = vsb + model.phi0;
    if !(surface > 0.0) {
        return Err(DeviceError::BodyBiasDomain(surface));
    }
    Ok(threshold_unchecked(model, geometry, vsb, vds))
}

fn threshold_unchecked(model: &MosModel, geometry: Geometry, vsb: f64, vds: f64) -> f64 {
    let surface = vsb + model.phi0;
    let mut body = model.gamma * surface.sqrt();
    if model.conventional_body_effect {
        body -= model.gamma * model.phi0.sqrt();
    }
    model.vt0 + body - model.alpha_l * (model.tox / geometry.l) * surface
        - model.alpha_v * (model.tox / geometry.l) * vds
        + model.alpha_w * (model.tox / geometry.w) * surface
}

/// (dVt/dvsb, dVt/dvds)
fn threshold_slopes(model: &MosModel, geometry: Geometry, vsb: f64) -> (f64, f64) {
    let surface = vsb + model.phi0;
    let dvsb = model.gamma / (2.0 * surface.sqrt()) - model.alpha_l * model.tox / geometry.l
        + model.alpha_w * model.tox / geometry.w;
    let dvds = -model.alpha_v * model.tox / geometry.l;
    (dvsb, dvds)
}

/// Operating region at a normalized bias point.
pub fn region(model: &MosModel, geometry: Geometry, bias: BiasPoint) -> Region {
    let vsb = bias.vsb.max(0.0);
    let vov = bias.vgs - threshold_unchecked(model, geometry, vsb, bias.vds);
    if vov <= 0.0 {
        Region::Cutoff
    } else if bias.vds < vov {
        Region::Triode
    } else {
        Region::Saturation
    }
}

/// Square-law drain current at a normalized bias point (vds ≥ 0).
///
/// Forward body bias (vsb < 0) is evaluated as zero body bias.
pub fn drain_current(model: &MosModel, geometry: Geometry, bias: BiasPoint) -> f64 {
    conductances(model, geometry, bias).id
}

/// Analytic partial derivatives of [`drain_current`].
pub fn conductances(model: &MosModel, geometry: Geometry, bias: BiasPoint) -> Conductances {
    let clamped = bias.vsb < 0.0;
    let vsb = bias.vsb.max(0.0);
    let vds = bias.vds;
    let vt = threshold_unchecked(model, geometry, vsb, vds);
    let vov = bias.vgs - vt;
    if vov <= 0.0 {
        return Conductances::default();
    }
    let (dvt_dvsb, dvt_dvds) = threshold_slopes(model, geometry, vsb);
    // d(vov)/d(vds) and d(vov)/d(vsb)
    let dvov_dvds = -dvt_dvds;
    let dvov_dvsb = if clamped { 0.0 } else { -dvt_dvsb };

    let beta = model.kprime * geometry.aspect();
    let clm = 1.0 + model.lambda * vds;

    // current = core(vov, vds) * clm
    let (core, dcore_dvov, dcore_dvds) = if vds < vov {
        (
            beta * (vov * vds - 0.5 * vds * vds),
            beta * vds,
            beta * (vov - vds),
        )
    } else {
        (0.5 * beta * vov * vov, beta * vov, 0.0)
    };
    let id = core * clm;
    let gm = dcore_dvov * clm;
    let gds = (dcore_dvds + dcore_dvov * dvov_dvds) * clm + core * model.lambda;
    let gmb = dcore_dvov * dvov_dvsb * clm;
    Conductances { gm, gds, gmb, id }
}

/// Current and terminal sensitivities for a device evaluated from absolute
/// terminal voltages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerminalEval {
    /// Current flowing into the drain terminal and out of the source terminal (A).
    pub id: f64,
    pub d_vd: f64,
    pub d_vg: f64,
    pub d_vs: f64,
    pub d_vb: f64,
}

/// NMOS-convention bias of a device at absolute terminal voltages, after
/// polarity mirroring and source/drain interchange. The flag is true when
/// the nominal source acts as the drain.
pub fn normalized_bias(polarity: Polarity, vd: f64, vg: f64, vs: f64, vb: f64) -> (BiasPoint, bool) {
    let sign = polarity.sign();
    let (vd, vg, vs, vb) = (sign * vd, sign * vg, sign * vs, sign * vb);
    if vd >= vs {
        (BiasPoint::new(vg - vs, vd - vs, vs - vb), false)
    } else {
        (BiasPoint::new(vg - vd, vs - vd, vd - vb), true)
    }
}

/// Evaluate a MOSFET from absolute node voltages, handling polarity and
/// source/drain interchange.
///
/// The channel is symmetric: when the nominal drain sits below the nominal
/// source (after polarity mirroring) the roles are swapped and the current
/// negated.
pub fn evaluate_terminals(
    model: &MosModel,
    geometry: Geometry,
    vd: f64,
    vg: f64,
    vs: f64,
    vb: f64,
) -> TerminalEval {
    let sign = model.polarity.sign();
    let (vd, vg, vs, vb) = (sign * vd, sign * vg, sign * vs, sign * vb);
    let mut eval = if vd >= vs {
        let c = conductances(model, geometry, BiasPoint::new(vg - vs, vd - vs, vs - vb));
        TerminalEval {
            id: c.id,
            d_vd: c.gds,
            d_vg: c.gm,
            d_vs: -c.gm - c.gds + c.gmb,
            d_vb: -c.gmb,
        }
    } else {
        let c = conductances(model, geometry, BiasPoint::new(vg - vd, vs - vd, vd - vb));
        TerminalEval {
            id: -c.id,
            d_vs: -c.gds,
            d_vg: -c.gm,
            d_vd: c.gm + c.gds - c.gmb,
            d_vb: c.gmb,
        }
    };
    // I_p(v) = -I_n(-v): derivatives keep their sign, the current flips.
    eval.id *= sign;
    eval
}

/// Channel resistance in the non-saturation region, `L / (K·W·(vgs - Vt - vds))`.
///
/// Diagnostic only; the simulator never stamps it.
pub fn ron_triode(model: &MosModel, geometry: Geometry, bias: BiasPoint) -> Result<f64, DeviceError> {
    let vt = threshold_voltage(model, geometry, bias.vsb, bias.vds)?;
    let vov = bias.vgs - vt;
    if !(bias.vds > 0.0 && bias.vds < vov) {
        return Err(DeviceError::NotTriode { vds: bias.vds, vov });
    }
    Ok(geometry.l / (model.kprime * geometry.w * (vov - bias.vds)))
}

/// Saturation output resistance
/// `(2L / (1 - ΔL/L)) · (1/Id) · sqrt((q·Nb / (2·eps_si)) · (vds - vds_sat))`.
///
/// Evaluated literally, as a reporting diagnostic.
pub fn ron_saturation(
    model: &MosModel,
    geometry: Geometry,
    bias: BiasPoint,
    delta_l: f64,
    id: f64,
    vds_sat: f64,
) -> Result<f64, DeviceError> {
    if bias.vds < vds_sat {
        return Err(DeviceError::NotSaturated {
            vds: bias.vds,
            vds_sat,
        });
    }
    if !(id > 0.0) {
        return Err(DeviceError::NonPositiveCurrent(id));
    }
    let l = geometry.l;
    if !(delta_l < l) {
        return Err(DeviceError::LengthReduction { delta_l, l });
    }
    let doping = model.q * model.nb / (2.0 * model.eps_si);
    Ok((2.0 * l / (1.0 - delta_l / l)) * (1.0 / id) * (doping * (bias.vds - vds_sat)).sqrt())
}

/// Fixed lumped device capacitances (F).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DeviceCapacitances {
    pub cgs: f64,
    pub cgd: f64,
    pub cdb: f64,
    pub csb: f64,
}

pub fn device_capacitances(model: &MosModel, geometry: Geometry) -> DeviceCapacitances {
    let gate = 0.5 * model.cox_area * geometry.w * geometry.l;
    let junction = model.cj * geometry.w;
    DeviceCapacitances {
        cgs: gate,
        cgd: gate,
        cdb: junction,
        csb: junction,
    }
}
