//! Registry of the published case-study models, their disturbance laws and
//! the approximate-simulation error table.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretize::{DiscreteModel, DEFAULT_DELTA_MINUTES};
use crate::dynamics::{Channel, ChannelSpace, Unit};
use crate::error::{BasError, Result};
use crate::hybrid::{build_hybrid_cs3, HybridAutomaton, HybridParams};

pub const T_W_SS: f64 = 18.0;
pub const T_SP: f64 = 20.0;
pub const T_SW_B_SS: f64 = 75.0;
pub const T_Z_SS: f64 = 20.0;
pub const T_RW_R_SS: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchmarkId {
    #[serde(rename = "cs1-det")]
    Cs1Det,
    #[serde(rename = "cs1-dist")]
    Cs1Dist,
    #[serde(rename = "cs1-stoch")]
    Cs1Stoch,
    #[serde(rename = "cs2-full")]
    Cs2Full,
    #[serde(rename = "cs2-abs4")]
    Cs2Abs4,
    #[serde(rename = "cs2-abs3")]
    Cs2Abs3,
    #[serde(rename = "cs2-abs2")]
    Cs2Abs2,
    #[serde(rename = "cs2-abs1")]
    Cs2Abs1,
    #[serde(rename = "cs3-hybrid")]
    Cs3Hybrid,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 9] = [
        BenchmarkId::Cs1Det,
        BenchmarkId::Cs1Dist,
        BenchmarkId::Cs1Stoch,
        BenchmarkId::Cs2Full,
        BenchmarkId::Cs2Abs4,
        BenchmarkId::Cs2Abs3,
        BenchmarkId::Cs2Abs2,
        BenchmarkId::Cs2Abs1,
        BenchmarkId::Cs3Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkId::Cs1Det => "cs1-det",
            BenchmarkId::Cs1Dist => "cs1-dist",
            BenchmarkId::Cs1Stoch => "cs1-stoch",
            BenchmarkId::Cs2Full => "cs2-full",
            BenchmarkId::Cs2Abs4 => "cs2-abs4",
            BenchmarkId::Cs2Abs3 => "cs2-abs3",
            BenchmarkId::Cs2Abs2 => "cs2-abs2",
            BenchmarkId::Cs2Abs1 => "cs2-abs1",
            BenchmarkId::Cs3Hybrid => "cs3-hybrid",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            BenchmarkId::Cs1Det => "two-zone heating, deterministic (4 states)",
            BenchmarkId::Cs1Dist => "two-zone heating with CO2 disturbances (4 states)",
            BenchmarkId::Cs1Stoch => "two-zone heating with process noise (4 states)",
            BenchmarkId::Cs2Full => "two-zone building, zones and walls (7 states)",
            BenchmarkId::Cs2Abs4 => "reduced two-zone building (4 states)",
            BenchmarkId::Cs2Abs3 => "reduced two-zone building (3 states)",
            BenchmarkId::Cs2Abs2 => "reduced two-zone building (2 states)",
            BenchmarkId::Cs2Abs1 => "reduced two-zone building (1 state)",
            BenchmarkId::Cs3Hybrid => "single zone with switching fan and mixer (5 modes)",
        }
    }

    /// Abstract order of a reduced cs2 model.
    pub fn abstract_order(self) -> Option<usize> {
        match self {
            BenchmarkId::Cs2Abs4 => Some(4),
            BenchmarkId::Cs2Abs3 => Some(3),
            BenchmarkId::Cs2Abs2 => Some(2),
            BenchmarkId::Cs2Abs1 => Some(1),
            _ => None,
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkId {
    type Err = BasError;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| BasError::UnknownBenchmark {
                id: s.to_string(),
                valid: BenchmarkId::ALL.iter().map(|i| i.as_str().to_string()).collect(),
            })
    }
}

/// Independent Gaussian per disturbance channel, drawn fresh every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceLaw {
    pub channels: Vec<GaussianChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianChannel {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
}

impl DisturbanceLaw {
    pub fn new(channels: &[(&str, f64, f64)]) -> Result<Self> {
        let channels = channels
            .iter()
            .map(|&(name, mean, std_dev)| {
                if !(std_dev >= 0.0) {
                    return Err(BasError::InvalidParameter {
                        name: format!("std_dev of {name}"),
                        requirement: "non-negative",
                        value: std_dev,
                    });
                }
                Ok(GaussianChannel {
                    name: name.to_string(),
                    mean,
                    std_dev,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DisturbanceLaw { channels })
    }

    pub fn none() -> Self {
        DisturbanceLaw { channels: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn means(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.channels.iter().map(|c| c.mean))
    }

    pub fn std_devs(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.channels.iter().map(|c| c.std_dev))
    }

    /// mean + std·z for a vector of standard-normal draws.
    pub fn realize(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.channels.iter().zip(z).map(|(c, z)| c.mean + c.std_dev * z),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Benchmark {
    Discrete {
        id: BenchmarkId,
        model: DiscreteModel,
        law: DisturbanceLaw,
    },
    Hybrid {
        id: BenchmarkId,
        automaton: HybridAutomaton,
    },
}

impl Benchmark {
    pub fn id(&self) -> BenchmarkId {
        match self {
            Benchmark::Discrete { id, .. } | Benchmark::Hybrid { id, .. } => *id,
        }
    }

    pub fn discrete(&self) -> Option<(&DiscreteModel, &DisturbanceLaw)> {
        match self {
            Benchmark::Discrete { model, law, .. } => Some((model, law)),
            Benchmark::Hybrid { .. } => None,
        }
    }

    pub fn into_discrete(self) -> Result<(DiscreteModel, DisturbanceLaw)> {
        match self {
            Benchmark::Discrete { model, law, .. } => Ok((model, law)),
            Benchmark::Hybrid { id, .. } => Err(BasError::InvalidInput(format!(
                "{id} is a hybrid automaton, not a discrete-time model"
            ))),
        }
    }
}

type Printed = &'static [&'static [&'static str]];

const CS1_A: Printed = &[
    &["0.6682", "0", "0.02632", "0"],
    &["0", "0.6830", "0", "0.02096"],
    &["1.0005", "0", "-0.000499", "0"],
    &["0", "0.8004", "0", "0.1996"],
];
const CS1_B: Printed = &[&["0.1320"], &["0.1402"], &["0"], &["0"]];
const CS1_QD: Printed = &[&["3.4364"], &["2.9272"], &["13.0207"], &["10.4166"]];
const CS1_FDA: Printed = &[&["8.760e-06", "0"], &["0", "2.704e-07"], &["0", "0"], &["0", "0"]];
const CS1_QDA: Printed = &[&["3.3378"], &["2.9106"], &["13.0207"], &["10.4166"]];
const CS1_SIGMA: Printed = &[
    &["0.0774", "0", "0", "0"],
    &["0", "0.0774", "0", "0"],
    &["0", "0", "0.3872", "0"],
    &["0", "0", "0", "0.3098"],
];

const CS2_A: Printed = &[
    &[
        "0.9998", "6.54e-9", "2.23e-5", "2.23e-5", "2.23e-5", "4.88e-14", "4.88e-14",
    ],
    &[
        "5.739e-9", "0.9998", "4.27e-14", "4.27e-14", "2.23e-5", "2.23e-5", "2.23e-5",
    ],
    &[
        "0.0005", "1.27e-12", "0.9989", "6.54e-9", "6.54e-9", "7.13e-18", "7.13e-18",
    ],
    &[
        "0.0005", "1.27e-12", "6.54e-9", "0.9989", "6.54e-9", "7.13e-18", "7.13e-18",
    ],
    &[
        "0.00051", "0.00058", "5.73e-9", "5.73e-9", "0.9989", "6.54e-9", "6.54e-9",
    ],
    &[
        "1.11e-12", "0.00058", "6.25e-18", "6.25e-18", "6.54e-9", "0.9989", "6.54e-9",
    ],
    &[
        "1.11e-12", "0.00058", "6.25e-18", "6.25e-18", "6.54e-9", "6.54e-9", "0.9980",
    ],
];
const CS2_B: Printed = &[
    &["0.000122"],
    &["0.000122"],
    &["3.58e-8"],
    &["3.58e-8"],
    &["6.72e-8"],
    &["3.58e-8"],
    &["3.58e-8"],
];
const CS2_F: Printed = &[
    &["1.027e-8", "5.734e-9", "7.31e-9", "2.71e-15", "0.0013", "0.0014"],
    &["1.91e-7", "5.73e-9", "1.39e-17", "1.24e-6", "0.0021", "0.0022"],
    &["2.00e-12", "0.0005", "2.13e-12", "3.96e-19", "3.84e-7", "3.84e-7"],
    &["0.0009", "1.11e-12", "2.13e-12", "3.96e-19", "3.84e-7", "3.84e-7"],
    &["3.90e-11", "2.09e-12", "1.87e-12", "3.63e-10", "9.78e-7", "9.78e-7"],
    &["3.72e-11", "0.00051", "2.042e-21", "3.63e-10", "6.41e-7", "6.41e-7"],
    &["0.01708", "1.11e-12", "2.04e-21", "3.63e-10", "6.40e-7", "6.41e-7"],
];
const CS2_Q: Printed = &[
    &["0.2482"],
    &["-0.0055"],
    &["0.1270"],
    &["0.0201"],
    &["0.0145"],
    &["0.0144"],
    &["0.0145"],
];

const CS2_A4: Printed = &[
    &["0.9998", "2.23e-5", "2.23e-5", "2.23e-5"],
    &["0.00058", "0.9989", "6.54e-9", "6.54e-9"],
    &["0.00058", "6.54e-9", "0.9989", "6.54e-9"],
    &["0.00051", "5.73e-9", "5.73e-9", "0.9989"],
];
const CS2_B4: Printed = &[&["0.00012"], &["3.5859e-8"], &["3.5859e-8"], &["3.1424e-8"]];
const CS2_F4: Printed = &[
    &["1.02e-8", "5.73e-9", "7.31e-9", "0.0013", "6.54e-9"],
    &["2.00e-12", "0.0005", "2.13e-12", "3.84e-7", "1.27e-12"],
    &["0.0009", "1.11e-12", "2.13e-12", "3.84e-7", "1.27e-12"],
    &["1.75e-12", "9.79e-13", "1.87e-12", "3.37e-7", "0.00058"],
];
const CS2_Q4: Printed = &[&["0.2482"], &["0.1270"], &["0.0145"], &["0.0145"]];

const CS2_A3: Printed = &[
    &["0.9998", "2.23e-5", "2.23e-5"],
    &["0.00058", "0.9989", "6.54e-9"],
    &["0.00058", "6.54e-9", "0.9980"],
];
const CS2_B3: Printed = &[&["0.000122"], &["0.000122"], &["3.58e-8"]];
const CS2_F3: Printed = &[
    &["6.29e-9", "5.73e-9", "7.31e-9", "0.0013"],
    &["1.22e-12", "0.00051", "2.13e-12", "3.84e-7"],
    &["0.00056", "1.11e-12", "2.13e-12", "3.84e-7"],
];
const CS2_Q3: Printed = &[&["0.2482"], &["0.1270"], &["0.0145"]];

const CS2_A2: Printed = &[&["0.9998", "2.237e-5"], &["0.00058", "0.9989"]];
const CS2_B2: Printed = &[&["0.00012"], &["3.58e-8"]];
const CS2_F2: Printed = &[&["1.027e-8", "7.31e-9", "0.0013"], &["0.00091", "2.13e-12", "3.84e-7"]];
const CS2_Q2: Printed = &[&["0.2482"], &["0.1270"]];

const CS2_A1: Printed = &[&["0.9998"]];
const CS2_B1: Printed = &[&["0.000122"]];
const CS2_F1: Printed = &[&["6.31e-5", "7.31e-9", "0.0013"]];
const CS2_Q1: Printed = &[&["0.2482"]];

/// Every printed matrix of a discrete benchmark, by name, as decimal literals.
pub fn printed_matrices(id: BenchmarkId) -> Vec<(&'static str, Printed)> {
    match id {
        BenchmarkId::Cs1Det => vec![("A", CS1_A), ("B", CS1_B), ("Q", CS1_QD)],
        BenchmarkId::Cs1Dist => vec![("A", CS1_A), ("B", CS1_B), ("F", CS1_FDA), ("Q", CS1_QDA)],
        BenchmarkId::Cs1Stoch => vec![("A", CS1_A), ("B", CS1_B), ("Q", CS1_QD), ("Sigma", CS1_SIGMA)],
        BenchmarkId::Cs2Full => vec![("A", CS2_A), ("B", CS2_B), ("F", CS2_F), ("Q", CS2_Q)],
        BenchmarkId::Cs2Abs4 => vec![("A", CS2_A4), ("B", CS2_B4), ("F", CS2_F4), ("Q", CS2_Q4)],
        BenchmarkId::Cs2Abs3 => vec![("A", CS2_A3), ("B", CS2_B3), ("F", CS2_F3), ("Q", CS2_Q3)],
        BenchmarkId::Cs2Abs2 => vec![("A", CS2_A2), ("B", CS2_B2), ("F", CS2_F2), ("Q", CS2_Q2)],
        BenchmarkId::Cs2Abs1 => vec![("A", CS2_A1), ("B", CS2_B1), ("F", CS2_F1), ("Q", CS2_Q1)],
        BenchmarkId::Cs3Hybrid => Vec::new(),
    }
}

fn parse(p: Printed) -> DMatrix<f64> {
    let ncols = p.first().map_or(0, |r| r.len());
    DMatrix::from_fn(p.len(), ncols, |r, c| {
        p[r][c].parse().expect("printed literal is a valid number")
    })
}

fn column(p: Printed) -> DVector<f64> {
    parse(p).column(0).into_owned()
}

fn space(names: &[&str]) -> ChannelSpace {
    ChannelSpace::new(
        names
            .iter()
            .map(|n| {
                let unit = if n.starts_with("CO2") { Unit::Ppm } else { Unit::Celsius };
                Channel::new(*n, unit)
            })
            .collect(),
    )
    .expect("benchmark channel names are unique")
}

fn selector(rows: &[usize], nx: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(rows.len(), nx);
    for (r, &i) in rows.iter().enumerate() {
        c[(r, i)] = 1.0;
    }
    c
}

fn discrete(
    states: &[&str],
    disturbances: &[&str],
    a: Printed,
    b: Printed,
    f: Option<Printed>,
    q: Printed,
    outputs: &[usize],
) -> DiscreteModel {
    let nx = states.len();
    DiscreteModel {
        states: space(states),
        inputs: space(&["T_sa"]),
        disturbances: space(disturbances),
        a: parse(a),
        b: parse(b),
        f: f.map_or_else(|| DMatrix::zeros(nx, 0), parse),
        q: column(q),
        sigma: DVector::zeros(nx),
        delta_minutes: DEFAULT_DELTA_MINUTES,
        output_c: selector(outputs, nx),
    }
}

const CS1_STATES: [&str; 4] = ["T_z1", "T_z2", "T_rw_r1", "T_rw_r2"];
const CS2_STATES: [&str; 7] = ["T_z1", "T_z2", "T_w5", "T_w6", "T_w2", "T_w3", "T_w7"];

fn law_for(names: &[&str]) -> DisturbanceLaw {
    let channels: Vec<(&str, f64, f64)> = names
        .iter()
        .map(|n| match *n {
            "T_out" => (*n, 9.0, 1.0),
            "T_hall" => (*n, 15.0, 1.0),
            "T_z2" => (*n, 20.0, 1.0),
            n if n.starts_with("CO2") => (n, 500.0, 100.0),
            n if n.starts_with("T_rw_r") => (n, 35.0, 5.0),
            other => unreachable!("no law for {other}"),
        })
        .collect();
    DisturbanceLaw::new(&channels).expect("fixed laws are valid")
}

pub fn build_benchmark(id: BenchmarkId) -> Result<Benchmark> {
    let (model, dist): (DiscreteModel, &[&str]) = match id {
        BenchmarkId::Cs1Det => (discrete(&CS1_STATES, &[], CS1_A, CS1_B, None, CS1_QD, &[0, 1]), &[]),
        BenchmarkId::Cs1Dist => {
            let d = &["CO2_1", "CO2_2"];
            (
                discrete(&CS1_STATES, d, CS1_A, CS1_B, Some(CS1_FDA), CS1_QDA, &[0, 1]),
                d,
            )
        }
        BenchmarkId::Cs1Stoch => {
            let mut m = discrete(&CS1_STATES, &[], CS1_A, CS1_B, None, CS1_QD, &[0, 1]);
            m.sigma = parse(CS1_SIGMA).diagonal();
            (m, &[])
        }
        BenchmarkId::Cs2Full => {
            let d = &["T_out", "T_hall", "CO2_1", "CO2_2", "T_rw_r1", "T_rw_r2"];
            (discrete(&CS2_STATES, d, CS2_A, CS2_B, Some(CS2_F), CS2_Q, &[0]), d)
        }
        BenchmarkId::Cs2Abs4 => {
            let d = &["T_out", "T_hall", "CO2_1", "T_rw_r1", "T_z2"];
            let s = &["T_z1", "T_w5", "T_w2", "T_w7"];
            (discrete(s, d, CS2_A4, CS2_B4, Some(CS2_F4), CS2_Q4, &[0]), d)
        }
        BenchmarkId::Cs2Abs3 => {
            let d = &["T_out", "T_hall", "CO2_1", "T_rw_r1"];
            let s = &["T_z1", "T_w5", "T_w2"];
            (discrete(s, d, CS2_A3, CS2_B3, Some(CS2_F3), CS2_Q3, &[0]), d)
        }
        BenchmarkId::Cs2Abs2 => {
            let d = &["T_out", "CO2_1", "T_rw_r1"];
            (
                discrete(&["T_z1", "T_w2"], d, CS2_A2, CS2_B2, Some(CS2_F2), CS2_Q2, &[0]),
                d,
            )
        }
        BenchmarkId::Cs2Abs1 => {
            let d = &["T_out", "CO2_1", "T_rw_r1"];
            (discrete(&["T_z1"], d, CS2_A1, CS2_B1, Some(CS2_F1), CS2_Q1, &[0]), d)
        }
        BenchmarkId::Cs3Hybrid => {
            return Ok(Benchmark::Hybrid {
                id,
                automaton: build_hybrid_cs3(&HybridParams::default())?,
            })
        }
    };
    model.validate()?;
    Ok(Benchmark::Discrete {
        id,
        model,
        law: law_for(dist),
    })
}

pub fn build_discrete(id: BenchmarkId) -> Result<(DiscreteModel, DisturbanceLaw)> {
    build_benchmark(id)?.into_discrete()
}

/// Probability deviations of the table columns: 10^(-k/2), k = 0..=6.
pub fn sim_rel_deltas() -> [f64; 7] {
    std::array::from_fn(|k| 10f64.powf(-(k as f64) / 2.0))
}

const SIM_REL: [(usize, [f64; 7]); 4] = [
    (4, [0.0008, 0.1754, 0.2084, 0.2339, 0.2555, 0.2745, 0.2910]),
    (3, [0.0006, 0.1933, 0.2312, 0.2598, 0.2831, 0.3065, 0.3241]),
    (2, [0.0011, 0.1950, 0.2373, 0.2681, 0.2928, 0.3155, 0.3278]),
    (1, [0.0010, 0.1953, 0.2371, 0.2595, 0.2854, 0.3103, 0.3254]),
];

/// ε for abstract order `order` at probability deviation `delta`.
pub fn sim_rel_lookup(order: usize, delta: f64) -> Result<f64> {
    let col = sim_rel_deltas().iter().position(|d| ((d - delta) / d).abs() < 1e-9);
    let row = SIM_REL.iter().find(|(o, _)| *o == order);
    match (row, col) {
        (Some((_, eps)), Some(c)) => Ok(eps[c]),
        _ => Err(BasError::MissingTableEntry { order, delta }),
    }
}

/// All 28 (order, δ, ε) entries.
pub fn sim_rel_entries() -> Vec<(usize, f64, f64)> {
    let deltas = sim_rel_deltas();
    SIM_REL
        .iter()
        .flat_map(|(o, eps)| deltas.iter().zip(eps).map(move |(d, e)| (*o, *d, *e)))
        .collect()
}

/// Sensor log: a timestamp column in minutes and named channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredTrace {
    pub time_column: String,
    pub channels: Vec<Channel>,
    pub t_min: Vec<f64>,
    /// One row per timestamp.
    pub values: Vec<Vec<f64>>,
}

impl MeasuredTrace {
    pub fn len(&self) -> usize {
        self.t_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_min.is_empty()
    }

    pub fn span_minutes(&self) -> f64 {
        match (self.t_min.first(), self.t_min.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.channels.iter().position(|c| c.name == name)?;
        Some(self.values.iter().map(|row| row[i]).collect())
    }

    /// Linear interpolation of `name` at `t`, clamped at the ends.
    pub fn sample(&self, name: &str, t: f64) -> Option<f64> {
        let i = self.channels.iter().position(|c| c.name == name)?;
        let k = self.t_min.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values.first().map(|r| r[i]);
        }
        if k == self.len() {
            return self.values.last().map(|r| r[i]);
        }
        let (t0, t1) = (self.t_min[k - 1], self.t_min[k]);
        let (v0, v1) = (self.values[k - 1][i], self.values[k][i]);
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

fn parse_header_cell(cell: &str, line: usize) -> Result<Channel> {
    let cell = cell.trim();
    match cell.find('[') {
        Some(open) => {
            let name = cell[..open].trim();
            let unit = cell[open + 1..]
                .strip_suffix(']')
                .ok_or_else(|| BasError::TraceFormat {
                    line,
                    message: format!("unterminated unit in `{cell}`"),
                })?
                .trim();
            let unit = Unit::parse(unit).ok_or_else(|| BasError::TraceFormat {
                line,
                message: format!("unknown unit `{unit}`"),
            })?;
            Ok(Channel::new(name, unit))
        }
        None => {
            let unit = if cell.starts_with("CO2") {
                Unit::Ppm
            } else {
                Unit::Celsius
            };
            Ok(Channel::new(cell, unit))
        }
    }
}

pub fn parse_trace_csv<R: std::io::Read>(reader: R) -> Result<MeasuredTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(BasError::TraceFormat {
            line: 1,
            message: "missing header".into(),
        });
    }
    let time_column = header[0].trim().to_string();
    let channels = header
        .iter()
        .skip(1)
        .map(|c| parse_header_cell(c, 1))
        .collect::<Result<Vec<_>>>()?;
    ChannelSpace::new(channels.clone())?;

    let mut t_min = Vec::new();
    let mut values = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| BasError::TraceFormat {
            line,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(BasError::TraceFormat {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let nums = record
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| BasError::TraceFormat {
                    line,
                    message: format!("not a number: `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(&prev) = t_min.last() {
            if !(nums[0] > prev) {
                return Err(BasError::TraceFormat {
                    line,
                    message: format!("timestamp {} does not increase past {}", nums[0], prev),
                });
            }
        }
        t_min.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Ok(MeasuredTrace {
        time_column,
        channels,
        t_min,
        values,
    })
}

pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<MeasuredTrace> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_trace_csv(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_entries() {
        let (m, _) = build_discrete(BenchmarkId::Cs1Det).unwrap();
        assert_eq!(m.a[(0, 0)], 0.6682);
        assert_eq!(m.b[(0, 0)], 0.1320);
        let (c, law) = build_discrete(BenchmarkId::Cs2Full).unwrap();
        assert_eq!(c.a[(0, 0)], 0.9998);
        assert_eq!(c.q[0], 0.2482);
        assert_eq!(law.means().as_slice(), &[9.0, 15.0, 500.0, 500.0, 35.0, 35.0]);
    }

    #[test]
    fn unknown_id_lists_registry() {
        match "cs9".parse::<BenchmarkId>() {
            Err(BasError::UnknownBenchmark { valid, .. }) => assert_eq!(valid.len(), 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stochastic_shares_drift() {
        let (d, _) = build_discrete(BenchmarkId::Cs1Det).unwrap();
        let (s, _) = build_discrete(BenchmarkId::Cs1Stoch).unwrap();
        assert_eq!(
            (d.a.clone(), d.b.clone(), d.q.clone()),
            (s.a.clone(), s.b.clone(), s.q.clone())
        );
        assert_eq!(s.sigma.as_slice(), &[0.0774, 0.0774, 0.3872, 0.3098]);
        let mut zeroed = s;
        zeroed.sigma.fill(0.0);
        assert_eq!(zeroed, d);
    }

    #[test]
    fn table_lookups() {
        assert_eq!(sim_rel_lookup(1, 1e-2).unwrap(), 0.2854);
        assert_eq!(sim_rel_lookup(4, 1.0).unwrap(), 0.0008);
        assert!(matches!(
            sim_rel_lookup(1, 1e-4),
            Err(BasError::MissingTableEntry { .. })
        ));
        assert!(sim_rel_lookup(5, 1.0).is_err());
        assert_eq!(sim_rel_entries().len(), 28);
    }

    #[test]
    fn every_benchmark_round_trips() {
        for id in BenchmarkId::ALL {
            let b = build_benchmark(id).unwrap();
            let text = serde_json::to_string(&b).unwrap();
            let back: Benchmark = serde_json::from_str(&text).unwrap();
            assert_eq!(back, b, "{id}");
        }
    }

    #[test]
    fn trace_parsing() {
        let t = parse_trace_csv("t_min,T_z1 [degC]\n0,18.5\n1,18.6\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.channel("T_z1").unwrap(), vec![18.5, 18.6]);
        assert!((t.sample("T_z1", 0.5).unwrap() - 18.55).abs() < 1e-12);

        let err = parse_trace_csv("t,T_z1\n1,18\n0,19\n".as_bytes()).unwrap_err();
        assert!(matches!(err, BasError::TraceFormat { line: 3, .. }));
        let err = parse_trace_csv("t,T_z1 [furlong]\n0,18\n".as_bytes()).unwrap_err();
        assert!(matches!(err, BasError::TraceFormat { line: 1, .. }));
        assert!(parse_trace_csv("t,T_z1\n0,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn two_days_of_minutes() {
        let mut text = String::from("t_min,T_z1\n");
        for k in 0..2880 {
            text.push_str(&format!("{k},20\n"));
        }
        let t = parse_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2880);
        // 2880 one-minute samples span the 192 steps of 15 minutes
        assert_eq!(t.span_minutes() + 1.0, 192.0 * 15.0);
    }
}
