//! The eight BAS component kinds, their parameters and discrete operating modes.
//!
//! Parameters use minutes as the time unit. The values shipped by
//! [`ComponentParams::non_authoritative_defaults`] are placeholders chosen to
//! give stable, plausible dynamics; they are not measured physics. The case
//! study benchmarks never use them.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    AffineVariant, AlgebraicLaw, AlgebraicMap, BilinearTerm, Channel, ChannelSpace, ContinuousModel, Unit,
    VALVE_FAULTY, VALVE_HEALTHY,
};
use crate::error::{BasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    Boiler,
    Valve,
    Mixer,
    AhuHeatingCoil,
    AhuAirDuct,
    Radiator,
    Zone,
    Collector,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 8] = [
        ComponentKind::Boiler,
        ComponentKind::Valve,
        ComponentKind::Mixer,
        ComponentKind::AhuHeatingCoil,
        ComponentKind::AhuAirDuct,
        ComponentKind::Radiator,
        ComponentKind::Zone,
        ComponentKind::Collector,
    ];
}

/// Unit string for a parameter symbol, or `None` if the symbol is unknown.
pub fn parameter_unit(symbol: &str) -> Option<&'static str> {
    let unit = match symbol {
        "C_pa" | "C_pw" => "kJ/(kg.K)",
        "rho_h" | "rho_a" => "kg/m3",
        "tau_sw" => "min",
        "tau" | "n" | "u_d" | "u_v" => "1",
        "k_b" => "degC",
        "w_max" | "valve_stuck_flow" => "kg/min",
        "m_a_med" | "m_a_high" => "m3/h",
        "V_a" | "V_r" => "m3",
        "UA_a" | "UA_r" => "kJ/(K.min)",
        "C_a" => "kJ/(kg.K)",
        "R_out" => "K.min/kJ",
        "alpha0" | "alpha1" | "alpha2" | "alpha3" | "beta2" => "1",
        s if s.starts_with("sigma_") => "degC/sqrt(min)",
        s if s.starts_with("C_z") || s.starts_with("C_w") => "kJ/K",
        s if s.starts_with("R_") => "K.min/kJ",
        s if s.starts_with("P_rad") => "kW",
        s if s.starts_with("mu") || s.starts_with("beta1_") => "1",
        s if s.starts_with("A_") => "m2",
        _ => return None,
    };
    Some(unit)
}

/// Flat symbol → value table. Serialized as `{"<symbol> [<unit>]": value}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComponentParams {
    values: BTreeMap<String, f64>,
}

impl ComponentParams {
    pub fn new() -> Self {
        ComponentParams::default()
    }

    pub fn with(mut self, symbol: &str, value: f64) -> Self {
        self.values.insert(symbol.to_string(), value);
        self
    }

    pub fn set(&mut self, symbol: &str, value: f64) {
        self.values.insert(symbol.to_string(), value);
    }

    pub fn get(&self, symbol: &str) -> Result<f64> {
        self.values
            .get(symbol)
            .copied()
            .ok_or_else(|| BasError::MissingParameter(symbol.to_string()))
    }

    pub fn get_or(&self, symbol: &str, default: f64) -> f64 {
        self.values.get(symbol).copied().unwrap_or(default)
    }

    pub fn positive(&self, symbol: &str) -> Result<f64> {
        let v = self.get(symbol)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(BasError::InvalidParameter {
                name: symbol.to_string(),
                requirement: "strictly positive",
                value: v,
            })
        }
    }

    pub fn non_negative(&self, symbol: &str) -> Result<f64> {
        let v = self.get(symbol)?;
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(BasError::InvalidParameter {
                name: symbol.to_string(),
                requirement: "non-negative",
                value: v,
            })
        }
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut doc = serde_json::Map::new();
        for (k, v) in &self.values {
            let unit = parameter_unit(k).unwrap_or("1");
            doc.insert(format!("{k} [{unit}]"), serde_json::json!(v));
        }
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut params = ComponentParams::new();
        for (key, value) in doc {
            let (symbol, unit) = match key.split_once(" [") {
                Some((s, rest)) => (s.trim(), Some(rest.trim_end_matches(']'))),
                None => (key.trim(), None),
            };
            let expected = parameter_unit(symbol)
                .ok_or_else(|| BasError::InvalidInput(format!("unknown parameter symbol `{symbol}`")))?;
            if let Some(unit) = unit {
                if unit != expected {
                    return Err(BasError::InvalidInput(format!(
                        "parameter `{symbol}` declared in [{unit}], expected [{expected}]"
                    )));
                }
            }
            params.set(symbol, value);
        }
        Ok(params)
    }

    /// Placeholder parameter set covering every component kind. NOT measured values.
    pub fn non_authoritative_defaults() -> Self {
        let mut p = ComponentParams::new()
            .with("C_pa", 1.0)
            .with("C_pw", 4.18)
            .with("rho_h", 1000.0)
            .with("rho_a", 1.2)
            .with("C_a", 1.0)
            .with("tau_sw", 8.0)
            .with("k_b", 75.0)
            .with("sigma_sw", 0.1)
            .with("tau", 20.0)
            .with("w_max", 3.0)
            .with("valve_stuck_flow", 0.0)
            .with("n", 2.0)
            .with("u_d", 0.5)
            .with("u_v", 0.5)
            .with("V_a", 0.02)
            .with("UA_a", 0.5)
            .with("sigma_rw_a", 0.05)
            .with("sigma_sa", 0.05)
            .with("V_r", 0.015)
            .with("UA_r", 0.9)
            .with("sigma_rw_r", 0.05)
            .with("m_a_med", 10.0)
            .with("m_a_high", 15.0)
            .with("R_out", 400.0)
            .with("alpha0", 0.002)
            .with("alpha1", 0.5)
            .with("alpha2", 0.05)
            .with("alpha3", 0.002)
            .with("beta2", 0.1);
        for i in 1..=2 {
            p.set(&format!("C_z{i}"), 900.0);
            p.set(&format!("sigma_z{i}"), 0.02);
            p.set(&format!("P_rad{i}"), 30.0);
            p.set(&format!("mu{i}"), 0.0005);
            p.set(&format!("beta1_{i}"), 0.2);
            p.set(&format!("A_{i}"), 4.0);
            p.set(&format!("R_{i}"), 80.0);
        }
        for w in ["w2", "w3", "w5", "w6", "w7"] {
            p.set(&format!("C_{w}"), 3000.0);
            p.set(&format!("sigma_{w}"), 0.01);
            p.set(&format!("R_adj_{w}"), 300.0);
            for i in 1..=2 {
                p.set(&format!("R_z{i}_{w}"), 60.0);
            }
        }
        p
    }
}

// Discrete operating modes ---------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoilerMode {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FanMode {
    Off,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MixerMode {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValveHealth {
    Healthy,
    Faulty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValvePosition {
    FullyOpen,
    HalfOpen,
    Closed,
}

impl ValvePosition {
    pub fn opening(self) -> f64 {
        match self {
            ValvePosition::FullyOpen => 1.0,
            ValvePosition::HalfOpen => 0.5,
            ValvePosition::Closed => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeConfig {
    pub boiler: BoilerMode,
    pub fan: FanMode,
    pub mixer: MixerMode,
    pub ahu_coil_valve: ValveHealth,
    pub radiator1_valve_health: ValveHealth,
    pub radiator2_valve_position: ValvePosition,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig {
            boiler: BoilerMode::On,
            fan: FanMode::Off,
            mixer: MixerMode::Open,
            ahu_coil_valve: ValveHealth::Healthy,
            radiator1_valve_health: ValveHealth::Healthy,
            radiator2_valve_position: ValvePosition::FullyOpen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeAxis {
    Boiler,
    Fan,
    Mixer,
    AhuCoilValve,
    Radiator1ValveHealth,
    Radiator2ValvePosition,
}

impl ModeAxis {
    pub const ALL: [ModeAxis; 6] = [
        ModeAxis::Boiler,
        ModeAxis::Fan,
        ModeAxis::Mixer,
        ModeAxis::AhuCoilValve,
        ModeAxis::Radiator1ValveHealth,
        ModeAxis::Radiator2ValvePosition,
    ];

    fn cardinality(self) -> usize {
        match self {
            ModeAxis::Fan | ModeAxis::Radiator2ValvePosition => 3,
            _ => 2,
        }
    }

    fn assign(self, mode: &mut ModeConfig, value: usize) {
        const HEALTH: [ValveHealth; 2] = [ValveHealth::Healthy, ValveHealth::Faulty];
        match self {
            ModeAxis::Boiler => mode.boiler = [BoilerMode::On, BoilerMode::Off][value],
            ModeAxis::Fan => mode.fan = [FanMode::Off, FanMode::Medium, FanMode::High][value],
            ModeAxis::Mixer => mode.mixer = [MixerMode::Open, MixerMode::Closed][value],
            ModeAxis::AhuCoilValve => mode.ahu_coil_valve = HEALTH[value],
            ModeAxis::Radiator1ValveHealth => mode.radiator1_valve_health = HEALTH[value],
            ModeAxis::Radiator2ValvePosition => {
                mode.radiator2_valve_position =
                    [ValvePosition::FullyOpen, ValvePosition::HalfOpen, ValvePosition::Closed][value]
            }
        }
    }
}

/// Cartesian product over the selected axes in lexicographic order (axis order
/// of [`ModeAxis::ALL`], first axis slowest). Unselected axes keep their default.
pub fn enumerate_modes(relevant: &BTreeSet<ModeAxis>) -> Vec<ModeConfig> {
    let axes: Vec<ModeAxis> = ModeAxis::ALL.iter().copied().filter(|a| relevant.contains(a)).collect();
    let total: usize = axes.iter().map(|a| a.cardinality()).product();
    let mut out = Vec::with_capacity(total);
    for mut index in 0..total {
        let mut digits = vec![0; axes.len()];
        for (slot, axis) in axes.iter().enumerate().rev() {
            digits[slot] = index % axis.cardinality();
            index /= axis.cardinality();
        }
        let mut mode = ModeConfig::default();
        for (axis, digit) in axes.iter().zip(digits) {
            axis.assign(&mut mode, digit);
        }
        out.push(mode);
    }
    out
}

// Zone layout ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Adjacent {
    /// Air temperature of zone `i` (1-based).
    Zone(usize),
    /// An exogenous temperature channel such as `T_hall`.
    Channel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    /// Suffix used in state and parameter names, e.g. `w5` → `T_w5`, `C_w5`.
    pub name: String,
    /// Zone (1-based) whose air enters the exterior-exchange term.
    pub owner_zone: usize,
    pub window: bool,
    /// Exterior-side temperature channel (`T_adj,out`).
    pub exterior: String,
    pub adjacent: Vec<Adjacent>,
}

/// How zones and walls are wired inside the zone component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLayout {
    pub zones: usize,
    pub walls: Vec<WallSpec>,
    /// Per zone (0-based), indices into `walls` exchanging heat with the zone air.
    pub zone_walls: Vec<Vec<usize>>,
    /// Walls held at a constant `T_w_ss` with one mean resistance `R_i` per zone.
    pub fixed_walls: bool,
}

impl ZoneLayout {
    /// Two zones with five dynamic walls, ordered (w2, w3, w5, w6, w7). Zone 1
    /// faces w5, w6 (windows) and w2; zone 2 faces w2, w3 and w7.
    pub fn two_zone() -> Self {
        let wall = |name: &str, owner, window, exterior: &str, adjacent| WallSpec {
            name: name.to_string(),
            owner_zone: owner,
            window,
            exterior: exterior.to_string(),
            adjacent,
        };
        ZoneLayout {
            zones: 2,
            walls: vec![
                wall("w2", 1, false, "T_hall", vec![Adjacent::Zone(1), Adjacent::Zone(2)]),
                wall("w3", 2, false, "T_hall", vec![Adjacent::Zone(2)]),
                wall("w5", 1, true, "T_out", vec![Adjacent::Zone(1)]),
                wall("w6", 1, true, "T_out", vec![Adjacent::Zone(1)]),
                wall("w7", 2, false, "T_out", vec![Adjacent::Zone(2)]),
            ],
            zone_walls: vec![vec![2, 3, 0], vec![0, 1, 4]],
            fixed_walls: false,
        }
    }

    /// Two zones whose walls sit at a constant temperature.
    pub fn two_zone_fixed_walls() -> Self {
        ZoneLayout {
            zones: 2,
            walls: Vec::new(),
            zone_walls: vec![Vec::new(), Vec::new()],
            fixed_walls: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.zones == 0 || self.zone_walls.len() != self.zones {
            return Err(BasError::InvalidInput(
                "zone layout needs one wall list per zone".into(),
            ));
        }
        for wall in &self.walls {
            if wall.owner_zone == 0 || wall.owner_zone > self.zones {
                return Err(BasError::InvalidInput(format!(
                    "wall {} has owner zone {} outside 1..={}",
                    wall.name, wall.owner_zone, self.zones
                )));
            }
            for adj in &wall.adjacent {
                if let Adjacent::Zone(z) = adj {
                    if *z == 0 || *z > self.zones {
                        return Err(BasError::InvalidInput(format!(
                            "wall {} adjacent to unknown zone {z}",
                            wall.name
                        )));
                    }
                }
            }
        }
        if self.zone_walls.iter().flatten().any(|&w| w >= self.walls.len()) {
            return Err(BasError::InvalidInput("zone wall index out of range".into()));
        }
        Ok(())
    }
}

// Components ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValveRole {
    AhuCoil,
    Radiator1,
    Radiator2,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComponentModel {
    Dynamic(ContinuousModel),
    Algebraic(AlgebraicMap),
}

impl ComponentModel {
    pub fn as_dynamic(&self) -> Option<&ContinuousModel> {
        match self {
            ComponentModel::Dynamic(m) => Some(m),
            ComponentModel::Algebraic(_) => None,
        }
    }

    pub fn as_algebraic(&self) -> Option<&AlgebraicMap> {
        match self {
            ComponentModel::Algebraic(m) => Some(m),
            ComponentModel::Dynamic(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub kind: ComponentKind,
    pub params: ComponentParams,
    pub valve_role: ValveRole,
    pub layout: ZoneLayout,
    pub mode: Option<ModeConfig>,
    pub model: ComponentModel,
}

pub fn instantiate_component(kind: ComponentKind, params: &ComponentParams) -> Result<Component> {
    build(kind, params, ValveRole::Generic, &ZoneLayout::two_zone(), None)
}

pub fn instantiate_valve(params: &ComponentParams, role: ValveRole) -> Result<Component> {
    build(ComponentKind::Valve, params, role, &ZoneLayout::two_zone(), None)
}

pub fn instantiate_zone(params: &ComponentParams, layout: &ZoneLayout) -> Result<Component> {
    build(ComponentKind::Zone, params, ValveRole::Generic, layout, None)
}

pub fn build_from_spec(
    kind: ComponentKind,
    params: &ComponentParams,
    valve_role: ValveRole,
    layout: &ZoneLayout,
) -> Result<Component> {
    build(kind, params, valve_role, layout, None)
}

/// Rebuilds `component` from its parameters under `mode`.
pub fn apply_mode(component: &Component, mode: &ModeConfig) -> Result<Component> {
    build(
        component.kind,
        &component.params,
        component.valve_role,
        &component.layout,
        Some(*mode),
    )
}

fn build(
    kind: ComponentKind,
    params: &ComponentParams,
    valve_role: ValveRole,
    layout: &ZoneLayout,
    mode: Option<ModeConfig>,
) -> Result<Component> {
    let model = match kind {
        ComponentKind::Boiler => ComponentModel::Dynamic(boiler(params, mode)?),
        ComponentKind::Valve => ComponentModel::Algebraic(valve(params, valve_role, mode)?),
        ComponentKind::Mixer => ComponentModel::Algebraic(mixer(params, mode)?),
        ComponentKind::Collector => ComponentModel::Algebraic(collector(params)?),
        ComponentKind::AhuHeatingCoil => ComponentModel::Dynamic(water_exchanger(
            params,
            "T_rw_a",
            "w_a",
            "T_d",
            "V_a",
            "UA_a",
            "sigma_rw_a",
        )?),
        ComponentKind::Radiator => ComponentModel::Dynamic(water_exchanger(
            params,
            "T_rw_r",
            "w_r",
            "T_z",
            "V_r",
            "UA_r",
            "sigma_rw_r",
        )?),
        ComponentKind::AhuAirDuct => ComponentModel::Dynamic(freeze_fan(air_duct(params)?, params, mode)?),
        ComponentKind::Zone => ComponentModel::Dynamic(freeze_fan(zone(params, layout)?, params, mode)?),
    };
    Ok(Component {
        kind,
        params: params.clone(),
        valve_role,
        layout: layout.clone(),
        mode,
        model,
    })
}

fn fan_flow(params: &ComponentParams, fan: FanMode) -> Result<f64> {
    match fan {
        FanMode::Off => Ok(0.0),
        FanMode::Medium => params.non_negative("m_a_med"),
        FanMode::High => params.non_negative("m_a_high"),
    }
}

fn freeze_fan(model: ContinuousModel, params: &ComponentParams, mode: Option<ModeConfig>) -> Result<ContinuousModel> {
    match mode {
        Some(m) => model.freeze_input("m_a", fan_flow(params, m.fan)?),
        None => Ok(model),
    }
}

fn boiler(params: &ComponentParams, mode: Option<ModeConfig>) -> Result<ContinuousModel> {
    let tau = params.positive("tau_sw")?;
    let k_b = params.get("k_b")?;
    let sigma = params.non_negative("sigma_sw")?;
    let mut m = ContinuousModel::zeros(
        ChannelSpace::celsius(&["T_sw_b"])?,
        ChannelSpace::empty(),
        ChannelSpace::empty(),
    );
    let on = mode.is_none_or(|m| m.boiler == BoilerMode::On);
    if on {
        m.drift_a[(0, 0)] = -1.0 / tau;
        m.drift_q[0] = k_b / tau;
        m.noise_sigma[0] = sigma;
    }
    Ok(m)
}

fn valve(params: &ComponentParams, role: ValveRole, mode: Option<ModeConfig>) -> Result<AlgebraicMap> {
    let tau = params.positive("tau")?;
    let w_max = params.non_negative("w_max")?;
    let stuck = params.get_or("valve_stuck_flow", 0.0);
    let health = match (role, mode) {
        (ValveRole::AhuCoil, Some(m)) => m.ahu_coil_valve,
        (ValveRole::Radiator1, Some(m)) => m.radiator1_valve_health,
        _ => ValveHealth::Healthy,
    };
    let law = match (role, mode) {
        (ValveRole::Radiator2, Some(m)) => {
            // Position fixes the opening, leaving a constant flow.
            let x = m.radiator2_valve_position.opening();
            let w = (tau.ln() * x).exp() * w_max / tau;
            let mut variants = BTreeMap::new();
            for tag in [VALVE_HEALTHY, VALVE_FAULTY] {
                variants.insert(
                    tag.to_string(),
                    AffineVariant {
                        gain: DMatrix::zeros(1, 1),
                        offset: DVector::from_element(1, if tag == VALVE_HEALTHY { w } else { stuck }),
                    },
                );
            }
            AlgebraicLaw::Affine(variants)
        }
        _ => AlgebraicLaw::EqualPercentageValve {
            tau,
            w_max,
            stuck_flow: stuck,
        },
    };
    Ok(AlgebraicMap {
        inputs: ChannelSpace::new(vec![Channel::new("X", Unit::Dimensionless)])?,
        outputs: ChannelSpace::new(vec![Channel::new("w", Unit::KilogramPerSecond)])?,
        law,
        default_mode: match health {
            ValveHealth::Healthy => VALVE_HEALTHY,
            ValveHealth::Faulty => VALVE_FAULTY,
        }
        .to_string(),
    })
}

/// `out = ratio · first + (1 - ratio) · mean(rest)` for ratio in each variant.
fn convex_map(
    first: &str,
    rest_prefix: &str,
    output: &str,
    n: usize,
    variants: &[(&str, f64)],
    default: &str,
) -> Result<AlgebraicMap> {
    let mut names = vec![first.to_string()];
    names.extend((1..=n).map(|i| format!("{rest_prefix}{i}")));
    let inputs = ChannelSpace::new(names.into_iter().map(Channel::celsius).collect())?;
    let mut table = BTreeMap::new();
    for (tag, ratio) in variants {
        let mut gain = DMatrix::zeros(1, n + 1);
        gain[(0, 0)] = *ratio;
        for i in 1..=n {
            gain[(0, i)] = (1.0 - ratio) / n as f64;
        }
        table.insert(
            tag.to_string(),
            AffineVariant {
                gain,
                offset: DVector::zeros(1),
            },
        );
    }
    Ok(AlgebraicMap {
        inputs,
        outputs: ChannelSpace::celsius(&[output])?,
        law: AlgebraicLaw::Affine(table),
        default_mode: default.to_string(),
    })
}

fn zone_count(params: &ComponentParams) -> Result<usize> {
    let n = params.positive("n")?;
    if n.fract() != 0.0 {
        return Err(BasError::InvalidParameter {
            name: "n".into(),
            requirement: "a positive integer",
            value: n,
        });
    }
    Ok(n as usize)
}

fn unit_ratio(params: &ComponentParams, symbol: &str) -> Result<f64> {
    let v = params.get(symbol)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(BasError::InvalidParameter {
            name: symbol.into(),
            requirement: "within [0, 1]",
            value: v,
        })
    }
}

pub const MIXER_OPEN: &str = "open";
pub const MIXER_CLOSED: &str = "closed";
pub const MIXER_RATIO: &str = "ratio";

fn mixer(params: &ComponentParams, mode: Option<ModeConfig>) -> Result<AlgebraicMap> {
    let n = zone_count(params)?;
    let ratio = params.get("u_d").ok().map(|_| unit_ratio(params, "u_d")).transpose()?;
    let mut variants = vec![(MIXER_OPEN, 1.0), (MIXER_CLOSED, 0.0)];
    if let Some(r) = ratio {
        variants.push((MIXER_RATIO, r));
    }
    let default = match mode.map(|m| m.mixer) {
        Some(MixerMode::Open) => MIXER_OPEN,
        Some(MixerMode::Closed) => MIXER_CLOSED,
        None if ratio.is_some() => MIXER_RATIO,
        None => MIXER_OPEN,
    };
    convex_map("T_out", "T_z", "T_d", n, &variants, default)
}

fn collector(params: &ComponentParams) -> Result<AlgebraicMap> {
    let n = zone_count(params)?;
    let u_v = unit_ratio(params, "u_v")?;
    convex_map("T_rw_a", "T_rw_r", "T_rw_b", n, &[("default", u_v)], "default")
}

/// Heating coil and radiator share one law:
/// `dT = [C_pw w (T_sw - T) + UA (T_env - T)] / (C_pw ρ_h V)`.
fn water_exchanger(
    params: &ComponentParams,
    state: &str,
    flow: &str,
    env: &str,
    volume: &str,
    ua: &str,
    sigma: &str,
) -> Result<ContinuousModel> {
    let c_pw = params.positive("C_pw")?;
    let rho = params.positive("rho_h")?;
    let v = params.positive(volume)?;
    let ua = params.non_negative(ua)?;
    let sigma = params.non_negative(sigma)?;
    let cap = c_pw * rho * v;
    let inputs = ChannelSpace::new(vec![Channel::new(flow, Unit::KilogramPerSecond)])?;
    let dist = ChannelSpace::celsius(&["T_sw_b", env])?;
    let mut m = ContinuousModel::zeros(ChannelSpace::celsius(&[state])?, inputs, dist);
    m.drift_a[(0, 0)] = -ua / cap;
    m.drift_f[(0, 1)] = ua / cap;
    let mut term = BilinearTerm::zeros(0, 1, 1, 2);
    term.state_gain[(0, 0)] = -c_pw / cap;
    term.disturbance_gain[(0, 0)] = c_pw / cap;
    m.bilinear.push(term);
    m.noise_sigma[0] = sigma;
    Ok(m)
}

/// `dT_sa = [m_a C_pa (T_d - T_sa) + UA_a (T_z - T_sa)] / (C_a ρ_a V_a)`.
fn air_duct(params: &ComponentParams) -> Result<ContinuousModel> {
    let cap = params.positive("C_a")? * params.positive("rho_a")? * params.positive("V_a")?;
    let c_pa = params.positive("C_pa")?;
    let ua = params.non_negative("UA_a")?;
    let sigma = params.non_negative("sigma_sa")?;
    let inputs = ChannelSpace::new(vec![Channel::new("m_a", Unit::CubicMetrePerHour)])?;
    let dist = ChannelSpace::celsius(&["T_d", "T_z"])?;
    let mut m = ContinuousModel::zeros(ChannelSpace::celsius(&["T_sa"])?, inputs, dist);
    m.drift_a[(0, 0)] = -ua / cap;
    m.drift_f[(0, 1)] = ua / cap;
    let mut term = BilinearTerm::zeros(0, 1, 1, 2);
    term.state_gain[(0, 0)] = -c_pa / cap;
    term.disturbance_gain[(0, 0)] = c_pa / cap;
    m.bilinear.push(term);
    m.noise_sigma[0] = sigma;
    Ok(m)
}

struct ZoneChannels {
    states: Vec<String>,
    inputs: Vec<Channel>,
    dist: Vec<String>,
}

impl ZoneChannels {
    fn dist_index(&mut self, name: &str) -> usize {
        match self.dist.iter().position(|d| d == name) {
            Some(i) => i,
            None => {
                self.dist.push(name.to_string());
                self.dist.len() - 1
            }
        }
    }
}

/// Coupled zone-air and wall block:
///
/// ```text
/// C_zi dT_zi = Σ_j (T_wj - T_zi)/R_zi_wj + P_radi(α2 (T_rw_ri - T_zi) + α1)
///              + μi CO2_i + β1_i + m_a C_pa (T_sai - T_zi)
/// C_wj dT_wj = (T_ext - T_z,owner)/R_out + Σ_l (T_adj_l - T_wj)/R_adj_wj
///              + α3 (T_rw_a - T_wj) [+ α0 A_owner T_out + β2 if windowed]
/// ```
fn zone(params: &ComponentParams, layout: &ZoneLayout) -> Result<ContinuousModel> {
    layout.validate()?;
    let n = layout.zones;
    let mut ch = ZoneChannels {
        states: (1..=n).map(|i| format!("T_z{i}")).collect(),
        inputs: vec![Channel::new("m_a", Unit::CubicMetrePerHour)],
        dist: Vec::new(),
    };
    if !layout.fixed_walls {
        ch.states.extend(layout.walls.iter().map(|w| format!("T_{}", w.name)));
    }
    ch.inputs.extend((1..=n).map(|i| Channel::celsius(format!("T_sa{i}"))));

    // Collect matrix entries first, channel spaces grow as disturbances appear.
    let nx = ch.states.len();
    let nu = ch.inputs.len();
    let mut a = DMatrix::zeros(nx, nx);
    let b = DMatrix::zeros(nx, nu);
    let mut f_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut q = DVector::zeros(nx);
    let mut sigma = DVector::zeros(nx);
    let mut bil_state = DMatrix::zeros(nx, nx);
    let mut bil_input = DMatrix::zeros(nx, nu);

    let c_pa = params.positive("C_pa")?;
    let alpha1 = params.get("alpha1")?;
    let alpha2 = params.get("alpha2")?;
    for i in 1..=n {
        let zi = i - 1;
        let cap = params.positive(&format!("C_z{i}"))?;
        sigma[zi] = params.non_negative(&format!("sigma_z{i}"))?;
        if layout.fixed_walls {
            let r = params.positive(&format!("R_{i}"))?;
            a[(zi, zi)] -= 1.0 / (cap * r);
            let d = ch.dist_index("T_w_ss");
            f_entries.push((zi, d, 1.0 / (cap * r)));
        } else {
            for &w in &layout.zone_walls[zi] {
                let wall = &layout.walls[w];
                let r = params.positive(&format!("R_z{i}_{}", wall.name))?;
                a[(zi, zi)] -= 1.0 / (cap * r);
                a[(zi, n + w)] += 1.0 / (cap * r);
            }
        }
        let p_rad = params.non_negative(&format!("P_rad{i}"))?;
        a[(zi, zi)] -= p_rad * alpha2 / cap;
        let d = ch.dist_index(&format!("T_rw_r{i}"));
        f_entries.push((zi, d, p_rad * alpha2 / cap));
        q[zi] += (p_rad * alpha1 + params.get(&format!("beta1_{i}"))?) / cap;
        let d = ch.dist_index(&format!("CO2_{i}"));
        f_entries.push((zi, d, params.get(&format!("mu{i}"))? / cap));
        bil_state[(zi, zi)] -= c_pa / cap;
        bil_input[(zi, i)] += c_pa / cap;
    }

    if !layout.fixed_walls {
        let r_out = params.positive("R_out")?;
        let alpha0 = params.get("alpha0")?;
        let alpha3 = params.get("alpha3")?;
        let beta2 = params.get("beta2")?;
        for (w, wall) in layout.walls.iter().enumerate() {
            let row = n + w;
            let cap = params.positive(&format!("C_{}", wall.name))?;
            sigma[row] = params.non_negative(&format!("sigma_{}", wall.name))?;
            let ext = ch.dist_index(&wall.exterior);
            f_entries.push((row, ext, 1.0 / (cap * r_out)));
            a[(row, wall.owner_zone - 1)] -= 1.0 / (cap * r_out);
            let r_adj = params.positive(&format!("R_adj_{}", wall.name))?;
            for adj in &wall.adjacent {
                a[(row, row)] -= 1.0 / (cap * r_adj);
                match adj {
                    Adjacent::Zone(z) => a[(row, z - 1)] += 1.0 / (cap * r_adj),
                    Adjacent::Channel(name) => {
                        let d = ch.dist_index(name);
                        f_entries.push((row, d, 1.0 / (cap * r_adj)));
                    }
                }
            }
            a[(row, row)] -= alpha3 / cap;
            let d = ch.dist_index("T_rw_a");
            f_entries.push((row, d, alpha3 / cap));
            if wall.window {
                let area = params.non_negative(&format!("A_{}", wall.owner_zone))?;
                let d = ch.dist_index("T_out");
                f_entries.push((row, d, alpha0 * area / cap));
                q[row] += beta2 / cap;
            }
        }
    }

    let nd = ch.dist.len();
    let mut f = DMatrix::zeros(nx, nd);
    for (r, c, v) in f_entries {
        f[(r, c)] += v;
    }
    let states = ChannelSpace::celsius(&ch.states.iter().map(String::as_str).collect::<Vec<_>>())?;
    let dist = ChannelSpace::new(
        ch.dist
            .iter()
            .map(|d| {
                let unit = if d.starts_with("CO2") { Unit::Ppm } else { Unit::Celsius };
                Channel::new(d.clone(), unit)
            })
            .collect(),
    )?;
    let mut m = ContinuousModel::zeros(states, ChannelSpace::new(ch.inputs)?, dist);
    m.drift_a = a;
    m.drift_b = b;
    m.drift_f = f;
    m.drift_q = q;
    m.noise_sigma = sigma;
    m.bilinear.push(BilinearTerm {
        input: 0,
        state_gain: bil_state,
        input_gain: bil_input,
        disturbance_gain: DMatrix::zeros(nx, nd),
    });
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ComponentParams {
        ComponentParams::non_authoritative_defaults()
    }

    fn dynamic(c: &Component) -> &ContinuousModel {
        c.model.as_dynamic().expect("dynamic component")
    }

    fn algebraic(c: &Component) -> &AlgebraicMap {
        c.model.as_algebraic().expect("algebraic component")
    }

    #[test]
    fn every_kind_instantiates_from_defaults() {
        for kind in ComponentKind::ALL {
            let c = instantiate_component(kind, &defaults()).unwrap();
            if let Some(m) = c.model.as_dynamic() {
                m.validate().unwrap();
            }
        }
    }

    #[test]
    fn boiler_fixed_point_and_off_mode() {
        let p = ComponentParams::new()
            .with("tau_sw", 1.0)
            .with("k_b", 75.0)
            .with("sigma_sw", 0.0);
        let on = instantiate_component(ComponentKind::Boiler, &p).unwrap();
        let x = DVector::from_element(1, 75.0);
        let dx = dynamic(&on)
            .eval_drift(&x, &DVector::zeros(0), &DVector::zeros(0))
            .unwrap();
        assert_eq!(dx[0], 0.0);

        let off_mode = ModeConfig {
            boiler: BoilerMode::Off,
            ..ModeConfig::default()
        };
        let off = apply_mode(&on, &off_mode).unwrap();
        for t in [10.0, 60.0, 90.0] {
            let dx = dynamic(&off)
                .eval_drift(&DVector::from_element(1, t), &DVector::zeros(0), &DVector::zeros(0))
                .unwrap();
            assert_eq!(dx[0], 0.0);
        }
    }

    #[test]
    fn mixer_endpoints() {
        let p = ComponentParams::new().with("n", 2.0);
        let mixer = instantiate_component(ComponentKind::Mixer, &p).unwrap();
        let map = algebraic(&mixer);
        let input = DVector::from_vec(vec![9.0, 20.0, 22.0]);
        assert_eq!(map.eval_algebraic(MIXER_OPEN, &input).unwrap()[0], 9.0);
        assert_eq!(map.eval_algebraic(MIXER_CLOSED, &input).unwrap()[0], 21.0);
        assert!(map.eval_algebraic("half", &input).is_err());
    }

    #[test]
    fn valve_law_at_half_opening() {
        let p = ComponentParams::new()
            .with("tau", std::f64::consts::E)
            .with("w_max", 1.0);
        let valve = instantiate_component(ComponentKind::Valve, &p).unwrap();
        let w = algebraic(&valve).eval_default(&DVector::from_element(1, 0.5)).unwrap()[0];
        assert!((w - (-0.5f64).exp()).abs() < 1e-12);
        assert!((w - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn missing_and_invalid_parameters() {
        let err = instantiate_component(ComponentKind::Boiler, &ComponentParams::new()).unwrap_err();
        assert_eq!(err, BasError::MissingParameter("tau_sw".into()));
        let p = defaults().with("C_z1", 0.0);
        let err = instantiate_component(ComponentKind::Zone, &p).unwrap_err();
        assert!(matches!(err, BasError::InvalidParameter { ref name, .. } if name == "C_z1"));
        let p = defaults().with("R_z2_w7", -3.0);
        assert!(instantiate_component(ComponentKind::Zone, &p).is_err());
    }

    #[test]
    fn fan_modes_freeze_air_flow() {
        let duct = instantiate_component(ComponentKind::AhuAirDuct, &defaults()).unwrap();
        let off = apply_mode(
            &duct,
            &ModeConfig {
                fan: FanMode::Off,
                ..ModeConfig::default()
            },
        )
        .unwrap();
        let m = dynamic(&off);
        assert!(m.is_affine());
        assert_eq!(m.inputs.dim(), 0);
        // with m_a = 0 the supply-air state no longer depends on T_d
        let td = m.disturbances.index_of("T_d").unwrap();
        assert_eq!(m.drift_f[(0, td)], 0.0);

        let high = apply_mode(
            &duct,
            &ModeConfig {
                fan: FanMode::High,
                ..ModeConfig::default()
            },
        )
        .unwrap();
        let raw = dynamic(&duct);
        let x = DVector::from_element(1, 19.0);
        let d = DVector::from_vec(vec![25.0, 21.0]);
        let expected = raw.eval_drift(&x, &DVector::from_element(1, 15.0), &d).unwrap();
        let got = dynamic(&high).eval_drift(&x, &DVector::zeros(0), &d).unwrap();
        assert!(
            (expected[0] - got[0]).abs() < 1e-12 * expected[0].abs().max(1.0),
            "{} vs {}",
            expected[0],
            got[0]
        );
    }

    #[test]
    fn zone_sparsity_follows_layout() {
        let zone = instantiate_component(ComponentKind::Zone, &defaults()).unwrap();
        let m = dynamic(&zone);
        assert_eq!(
            m.states.names(),
            vec!["T_z1", "T_z2", "T_w2", "T_w3", "T_w5", "T_w6", "T_w7"]
        );
        let nz = |r: usize, c: usize| m.drift_a[(r, c)] != 0.0;
        // zone 1 sees w5, w6, w2 but not w3, w7 or zone 2 directly
        assert!(nz(0, 4) && nz(0, 5) && nz(0, 2));
        assert!(!nz(0, 3) && !nz(0, 6) && !nz(0, 1));
        assert!(nz(1, 2) && nz(1, 3) && nz(1, 6));
        assert!(!nz(1, 4) && !nz(1, 5) && !nz(1, 0));
        // shared wall w2 couples to both zones
        assert!(nz(2, 0) && nz(2, 1));
    }

    #[test]
    fn enumeration_counts() {
        let all: BTreeSet<ModeAxis> = ModeAxis::ALL.into_iter().collect();
        let modes = enumerate_modes(&all);
        assert_eq!(modes.len(), 144);
        let unique: BTreeSet<_> = modes.iter().collect();
        assert_eq!(unique.len(), 144);
        let boiler = enumerate_modes(&[ModeAxis::Boiler].into_iter().collect());
        assert_eq!(boiler.len(), 2);
        assert_eq!(boiler[0].boiler, BoilerMode::On);
        assert_eq!(boiler[1].boiler, BoilerMode::Off);
        assert_eq!(enumerate_modes(&BTreeSet::new()), vec![ModeConfig::default()]);
        // lexicographic: last axis varies fastest
        assert_eq!(modes[1].radiator2_valve_position, ValvePosition::HalfOpen);
        assert_eq!(modes[72].boiler, BoilerMode::Off);
    }

    #[test]
    fn apply_mode_is_idempotent() {
        let all: BTreeSet<ModeAxis> = ModeAxis::ALL.into_iter().collect();
        let p = defaults();
        for kind in ComponentKind::ALL {
            let c = instantiate_component(kind, &p).unwrap();
            for mode in enumerate_modes(&all).iter().step_by(7) {
                let once = apply_mode(&c, mode).unwrap();
                let twice = apply_mode(&once, mode).unwrap();
                assert_eq!(once, twice);
            }
        }
    }

    #[test]
    fn radiator2_position_and_faults() {
        let p = defaults();
        let rad2 = instantiate_valve(&p, ValveRole::Radiator2).unwrap();
        let closed = apply_mode(
            &rad2,
            &ModeConfig {
                radiator2_valve_position: ValvePosition::Closed,
                ..ModeConfig::default()
            },
        )
        .unwrap();
        let w = algebraic(&closed).eval_default(&DVector::from_element(1, 0.9)).unwrap()[0];
        assert!((w - 3.0 / 20.0).abs() < 1e-12);

        let coil = instantiate_valve(&p, ValveRole::AhuCoil).unwrap();
        let faulty = apply_mode(
            &coil,
            &ModeConfig {
                ahu_coil_valve: ValveHealth::Faulty,
                ..ModeConfig::default()
            },
        )
        .unwrap();
        let w = algebraic(&faulty).eval_default(&DVector::from_element(1, 1.0)).unwrap()[0];
        assert_eq!(w, 0.0);
    }

    #[test]
    fn params_json_round_trip_with_units() {
        let p = defaults();
        let text = p.to_json().unwrap();
        assert!(text.contains("\"tau_sw [min]\""));
        assert_eq!(ComponentParams::from_json(&text).unwrap(), p);
        assert!(ComponentParams::from_json("{\"tau_sw [h]\": 1.0}").is_err());
        assert!(ComponentParams::from_json("{\"bogus\": 1.0}").is_err());
    }
}
