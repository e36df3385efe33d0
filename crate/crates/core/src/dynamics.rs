//! Continuous-time affine-bilinear stochastic dynamics and static algebraic maps.
//!
//! Every component of the library reduces to one of two shapes:
//!
//! ```text
//! dx = (A x + B u + F d + q + Σ_k u_k (N_k x + M_k u + P_k d)) dt + diag(σ) dW
//! y  = M_mode · inputs + c_mode
//! ```
//!
//! Rates are per minute. Inputs are control signals; disturbances are
//! exogenous signals. The two are kept in separate channel spaces.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, BasError, Result};
use crate::serde_mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "degC")]
    Celsius,
    #[serde(rename = "m3/h")]
    CubicMetrePerHour,
    #[serde(rename = "kg/s")]
    KilogramPerSecond,
    #[serde(rename = "ppm")]
    Ppm,
    #[serde(rename = "1")]
    Dimensionless,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Celsius => "degC",
            Unit::CubicMetrePerHour => "m3/h",
            Unit::KilogramPerSecond => "kg/s",
            Unit::Ppm => "ppm",
            Unit::Dimensionless => "1",
        }
    }

    pub fn parse(s: &str) -> Option<Unit> {
        match s {
            "degC" | "C" | "°C" => Some(Unit::Celsius),
            "m3/h" | "m^3/h" => Some(Unit::CubicMetrePerHour),
            "kg/s" => Some(Unit::KilogramPerSecond),
            "ppm" => Some(Unit::Ppm),
            "1" | "-" => Some(Unit::Dimensionless),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub unit: Unit,
}

impl Channel {
    pub fn new(name: impl Into<String>, unit: Unit) -> Self {
        Channel {
            name: name.into(),
            unit,
        }
    }

    pub fn celsius(name: impl Into<String>) -> Self {
        Channel::new(name, Unit::Celsius)
    }
}

/// Ordered set of uniquely named channels.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ChannelSpace {
    channels: Vec<Channel>,
}

impl ChannelSpace {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        let mut seen = HashSet::new();
        for ch in &channels {
            if !seen.insert(ch.name.as_str()) {
                return Err(BasError::DuplicateChannel(ch.name.clone()));
            }
        }
        Ok(ChannelSpace { channels })
    }

    pub fn empty() -> Self {
        ChannelSpace::default()
    }

    /// All-Celsius space from a list of names.
    pub fn celsius(names: &[&str]) -> Result<Self> {
        ChannelSpace::new(names.iter().map(|n| Channel::celsius(*n)).collect())
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn get(&self, index: usize) -> Option<&Channel> {
        self.channels.get(index)
    }

    pub(crate) fn without(&self, index: usize) -> ChannelSpace {
        let mut channels = self.channels.clone();
        channels.remove(index);
        ChannelSpace { channels }
    }
}

impl<'de> Deserialize<'de> for ChannelSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            channels: Vec<Channel>,
        }
        let raw = Raw::deserialize(d)?;
        ChannelSpace::new(raw.channels).map_err(serde::de::Error::custom)
    }
}

/// `u_input · (N x + M u + P d)` contribution to the drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearTerm {
    pub input: usize,
    #[serde(with = "serde_mat::matrix")]
    pub state_gain: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub input_gain: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub disturbance_gain: DMatrix<f64>,
}

impl BilinearTerm {
    pub fn zeros(input: usize, nx: usize, nu: usize, nd: usize) -> Self {
        BilinearTerm {
            input,
            state_gain: DMatrix::zeros(nx, nx),
            input_gain: DMatrix::zeros(nx, nu),
            disturbance_gain: DMatrix::zeros(nx, nd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModel {
    pub states: ChannelSpace,
    pub inputs: ChannelSpace,
    pub disturbances: ChannelSpace,
    #[serde(with = "serde_mat::matrix")]
    pub drift_a: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub drift_b: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub drift_f: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub drift_q: DVector<f64>,
    pub bilinear: Vec<BilinearTerm>,
    #[serde(with = "serde_mat::vector")]
    pub noise_sigma: DVector<f64>,
}

impl ContinuousModel {
    /// Zero model over the given channel spaces.
    pub fn zeros(states: ChannelSpace, inputs: ChannelSpace, disturbances: ChannelSpace) -> Self {
        let (nx, nu, nd) = (states.dim(), inputs.dim(), disturbances.dim());
        ContinuousModel {
            states,
            inputs,
            disturbances,
            drift_a: DMatrix::zeros(nx, nx),
            drift_b: DMatrix::zeros(nx, nu),
            drift_f: DMatrix::zeros(nx, nd),
            drift_q: DVector::zeros(nx),
            bilinear: Vec::new(),
            noise_sigma: DVector::zeros(nx),
        }
    }

    pub fn nx(&self) -> usize {
        self.states.dim()
    }

    pub fn nu(&self) -> usize {
        self.inputs.dim()
    }

    pub fn nd(&self) -> usize {
        self.disturbances.dim()
    }

    pub fn is_affine(&self) -> bool {
        self.bilinear.is_empty()
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_sigma.iter().all(|s| *s == 0.0)
    }

    /// Checks matrix shapes against the channel spaces and the sign of σ.
    pub fn validate(&self) -> Result<()> {
        let (nx, nu, nd) = (self.nx(), self.nu(), self.nd());
        check_dim("drift_a rows", nx, self.drift_a.nrows())?;
        check_dim("drift_a cols", nx, self.drift_a.ncols())?;
        check_dim("drift_b rows", nx, self.drift_b.nrows())?;
        check_dim("drift_b cols (inputs)", nu, self.drift_b.ncols())?;
        check_dim("drift_f rows", nx, self.drift_f.nrows())?;
        check_dim("drift_f cols (disturbances)", nd, self.drift_f.ncols())?;
        check_dim("drift_q", nx, self.drift_q.len())?;
        check_dim("noise_sigma", nx, self.noise_sigma.len())?;
        for term in &self.bilinear {
            if term.input >= nu {
                return Err(BasError::InvalidInput(format!(
                    "bilinear term references input {} of {}",
                    term.input, nu
                )));
            }
            check_dim("bilinear state_gain", nx * nx, term.state_gain.len())?;
            check_dim("bilinear input_gain", nx * nu, term.input_gain.len())?;
            check_dim("bilinear disturbance_gain", nx * nd, term.disturbance_gain.len())?;
        }
        if let Some(s) = self.noise_sigma.iter().find(|s| !(**s >= 0.0)) {
            return Err(BasError::InvalidParameter {
                name: "noise_sigma".into(),
                requirement: "non-negative",
                value: *s,
            });
        }
        Ok(())
    }

    /// Drift `A x + Σ u_k (N_k x + M_k u + P_k d) + B u + F d + q`.
    pub fn eval_drift(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("states", self.nx(), x.len())?;
        check_dim("inputs", self.nu(), u.len())?;
        check_dim("disturbances", self.nd(), d.len())?;
        let mut dx = &self.drift_a * x + &self.drift_b * u + &self.drift_f * d + &self.drift_q;
        for term in &self.bilinear {
            let gain = u[term.input];
            if gain != 0.0 {
                let inner = &term.state_gain * x + &term.input_gain * u + &term.disturbance_gain * d;
                dx += inner * gain;
            }
        }
        Ok(dx)
    }

    /// Removes input `name`, folding the constant `value` into the remaining terms.
    pub fn freeze_input(&self, name: &str, value: f64) -> Result<ContinuousModel> {
        let j = self.inputs.index_of(name).ok_or_else(|| BasError::DanglingChannel {
            component: "model inputs".into(),
            channel: name.into(),
        })?;
        let nu = self.nu();
        let mut a = self.drift_a.clone();
        let mut b = self.drift_b.clone();
        let mut f = self.drift_f.clone();
        let mut q = self.drift_q.clone();
        q += b.column(j) * value;
        let mut kept = Vec::new();
        for term in &self.bilinear {
            if term.input == j {
                a += &term.state_gain * value;
                f += &term.disturbance_gain * value;
                for k in 0..nu {
                    if k == j {
                        q += term.input_gain.column(k) * (value * value);
                    } else {
                        let col = term.input_gain.column(k) * value;
                        let mut target = b.column_mut(k);
                        target += col;
                    }
                }
            } else {
                let col = term.input_gain.column(j) * value;
                let mut target = b.column_mut(term.input);
                target += col;
                let mut t = term.clone();
                t.input_gain = t.input_gain.remove_column(j);
                if t.input > j {
                    t.input -= 1;
                }
                kept.push(t);
            }
        }
        let b = b.remove_column(j);
        Ok(ContinuousModel {
            states: self.states.clone(),
            inputs: self.inputs.without(j),
            disturbances: self.disturbances.clone(),
            drift_a: a,
            drift_b: b,
            drift_f: f,
            drift_q: q,
            bilinear: kept,
            noise_sigma: self.noise_sigma.clone(),
        })
    }

    /// Removes disturbance `name`, folding the constant `value` into `q`.
    pub fn freeze_disturbance(&self, name: &str, value: f64) -> Result<ContinuousModel> {
        let j = self
            .disturbances
            .index_of(name)
            .ok_or_else(|| BasError::DanglingChannel {
                component: "model disturbances".into(),
                channel: name.into(),
            })?;
        let mut out = self.clone();
        out.drift_q += self.drift_f.column(j) * value;
        out.drift_f = self.drift_f.clone().remove_column(j);
        let mut terms = Vec::new();
        for term in &self.bilinear {
            // u_k * P[:, j] * value is linear in u_k
            let col = term.disturbance_gain.column(j) * value;
            let mut target = out.drift_b.column_mut(term.input);
            target += col;
            let mut t = term.clone();
            t.disturbance_gain = term.disturbance_gain.clone().remove_column(j);
            terms.push(t);
        }
        out.bilinear = terms;
        out.disturbances = self.disturbances.without(j);
        Ok(out)
    }
}

/// `output = M · input + c` for one discrete mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineVariant {
    #[serde(with = "serde_mat::matrix")]
    pub gain: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub offset: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlgebraicLaw {
    /// Per-mode affine maps keyed by mode tag.
    Affine(BTreeMap<String, AffineVariant>),
    /// `w = τ^(X-1) · w_max`, i.e. `(1/τ) exp(ln τ · X) w_max`. A faulty valve
    /// delivers `stuck_flow` regardless of `X`.
    EqualPercentageValve { tau: f64, w_max: f64, stuck_flow: f64 },
}

pub const VALVE_HEALTHY: &str = "healthy";
pub const VALVE_FAULTY: &str = "faulty";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicMap {
    pub inputs: ChannelSpace,
    pub outputs: ChannelSpace,
    pub law: AlgebraicLaw,
    /// Mode used when the caller does not name one.
    pub default_mode: String,
}

impl AlgebraicMap {
    pub fn modes(&self) -> Vec<String> {
        match &self.law {
            AlgebraicLaw::Affine(variants) => variants.keys().cloned().collect(),
            AlgebraicLaw::EqualPercentageValve { .. } => {
                vec![VALVE_HEALTHY.to_string(), VALVE_FAULTY.to_string()]
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.law, AlgebraicLaw::Affine(_))
    }

    pub fn variant(&self, mode: &str) -> Result<&AffineVariant> {
        match &self.law {
            AlgebraicLaw::Affine(variants) => variants.get(mode).ok_or_else(|| BasError::UnknownMode {
                mode: mode.to_string(),
                declared: self.modes(),
            }),
            AlgebraicLaw::EqualPercentageValve { .. } => {
                Err(BasError::NonAffine("valve law has no affine variant".into()))
            }
        }
    }

    pub fn eval_algebraic(&self, mode: &str, inputs: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("algebraic inputs", self.inputs.dim(), inputs.len())?;
        match &self.law {
            AlgebraicLaw::Affine(_) => {
                let v = self.variant(mode)?;
                Ok(&v.gain * inputs + &v.offset)
            }
            AlgebraicLaw::EqualPercentageValve { tau, w_max, stuck_flow } => match mode {
                VALVE_HEALTHY => Ok(DVector::from_element(1, (tau.ln() * inputs[0]).exp() * w_max / tau)),
                VALVE_FAULTY => Ok(DVector::from_element(1, *stuck_flow)),
                other => Err(BasError::UnknownMode {
                    mode: other.to_string(),
                    declared: self.modes(),
                }),
            },
        }
    }

    pub fn eval_default(&self, inputs: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval_algebraic(&self.default_mode, inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn duct() -> ContinuousModel {
        // dT_sa = (m_a C_pa (T_d - T_sa) + UA (T_z - T_sa)) / (C_a rho_a V_a)
        let states = ChannelSpace::celsius(&["T_sa"]).unwrap();
        let inputs = ChannelSpace::new(vec![
            Channel::new("m_a", Unit::CubicMetrePerHour),
            Channel::celsius("T_d"),
        ])
        .unwrap();
        let dist = ChannelSpace::celsius(&["T_z"]).unwrap();
        let mut m = ContinuousModel::zeros(states, inputs, dist);
        let cap = 100.0;
        let ua = 2.0;
        m.drift_a[(0, 0)] = -ua / cap;
        m.drift_f[(0, 0)] = ua / cap;
        let mut t = BilinearTerm::zeros(0, 1, 2, 1);
        t.state_gain[(0, 0)] = -1.0 / cap;
        t.input_gain[(0, 1)] = 1.0 / cap;
        m.bilinear.push(t);
        m
    }

    #[test]
    fn duct_drift_matches_hand_arithmetic() {
        let m = duct();
        let dx = m
            .eval_drift(
                &DVector::from_vec(vec![20.0]),
                &DVector::from_vec(vec![10.0, 25.0]),
                &DVector::from_vec(vec![22.0]),
            )
            .unwrap();
        assert!((dx[0] - 0.54).abs() < 1e-12);
    }

    #[test]
    fn zero_flow_kills_bilinear_contribution() {
        let m = duct();
        let x = DVector::from_vec(vec![20.0]);
        let d = DVector::from_vec(vec![20.0]);
        for t_d in [-50.0, 0.0, 80.0] {
            let dx = m.eval_drift(&x, &DVector::from_vec(vec![0.0, t_d]), &d).unwrap();
            assert_eq!(dx[0], 0.0);
        }
    }

    #[test]
    fn dimension_errors_name_the_space() {
        let m = duct();
        let err = m
            .eval_drift(
                &DVector::from_vec(vec![20.0]),
                &DVector::from_vec(vec![10.0]),
                &DVector::from_vec(vec![22.0]),
            )
            .unwrap_err();
        match err {
            BasError::DimensionMismatch { space, .. } => assert_eq!(space, "inputs"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn freezing_matches_evaluation() {
        let m = duct();
        let frozen = m.freeze_input("m_a", 15.0).unwrap();
        assert!(frozen.is_affine());
        let x = DVector::from_vec(vec![19.0]);
        let d = DVector::from_vec(vec![21.0]);
        let full = m.eval_drift(&x, &DVector::from_vec(vec![15.0, 24.0]), &d).unwrap();
        let reduced = frozen.eval_drift(&x, &DVector::from_vec(vec![24.0]), &d).unwrap();
        assert!((full[0] - reduced[0]).abs() < 1e-14);

        let both = frozen.freeze_input("T_d", 24.0).unwrap();
        let dx = both.eval_drift(&x, &DVector::zeros(0), &d).unwrap();
        assert!((full[0] - dx[0]).abs() < 1e-14);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = ChannelSpace::celsius(&["T_z1", "T_z1"]).unwrap_err();
        assert_eq!(err, BasError::DuplicateChannel("T_z1".into()));
    }

    #[test]
    fn valve_endpoints() {
        let valve = AlgebraicMap {
            inputs: ChannelSpace::new(vec![Channel::new("X", Unit::Dimensionless)]).unwrap(),
            outputs: ChannelSpace::new(vec![Channel::new("w", Unit::KilogramPerSecond)]).unwrap(),
            law: AlgebraicLaw::EqualPercentageValve {
                tau: 20.0,
                w_max: 3.0,
                stuck_flow: 0.0,
            },
            default_mode: VALVE_HEALTHY.into(),
        };
        let one = valve.eval_default(&DVector::from_vec(vec![1.0])).unwrap();
        let zero = valve.eval_default(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((one[0] - 3.0).abs() < 1e-12);
        assert!((zero[0] - 3.0 / 20.0).abs() < 1e-12);
        let stuck = valve
            .eval_algebraic(VALVE_FAULTY, &DVector::from_vec(vec![0.7]))
            .unwrap();
        assert_eq!(stuck[0], 0.0);
        assert!(matches!(
            valve.eval_algebraic("sticky", &DVector::from_vec(vec![0.7])),
            Err(BasError::UnknownMode { .. })
        ));
    }
}
