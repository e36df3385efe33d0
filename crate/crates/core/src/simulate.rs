//! Trajectories of discrete-time models under schedules, controllers and
//! random disturbances.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::benchmarks::DisturbanceLaw;
use crate::discretize::DiscreteModel;
use crate::error::{check_dim, BasError, Result};
use crate::io::join17;

/// State feedback or open-loop input source.
pub trait Controller {
    fn input(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
}

impl<F: Fn(usize, &DVector<f64>) -> DVector<f64>> Controller for F {
    fn input(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self(k, x)
    }
}

/// Open-loop schedule anchored at 00:00 of day 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSchedule {
    Constant {
        value: Vec<f64>,
    },
    /// 20 °C 08:00–12:00 and 13:00–18:00, 18 °C otherwise.
    Cs1Weekday,
    /// Explicit per-step inputs; the last entry is held.
    Sequence {
        values: Vec<Vec<f64>>,
    },
}

impl InputSchedule {
    pub fn constant(v: f64) -> Self {
        InputSchedule::Constant { value: vec![v] }
    }

    pub fn at(&self, k: usize, delta_minutes: f64) -> DVector<f64> {
        match self {
            InputSchedule::Constant { value } => DVector::from_column_slice(value),
            InputSchedule::Cs1Weekday => {
                let minute = (k as f64 * delta_minutes).rem_euclid(1440.0);
                let on = (480.0..720.0).contains(&minute) || (780.0..1080.0).contains(&minute);
                DVector::from_element(1, if on { 20.0 } else { 18.0 })
            }
            InputSchedule::Sequence { values } => {
                let row = values.get(k).or(values.last()).map_or(&[][..], |v| v.as_slice());
                DVector::from_column_slice(row)
            }
        }
    }

    pub fn named(name: &str) -> Option<Self> {
        (name == "cs1-weekday").then_some(InputSchedule::Cs1Weekday)
    }
}

/// Binds a schedule to a sampling time.
pub struct Scheduled<'a> {
    pub schedule: &'a InputSchedule,
    pub delta_minutes: f64,
}

impl Controller for Scheduled<'_> {
    fn input(&self, k: usize, _x: &DVector<f64>) -> DVector<f64> {
        self.schedule.at(k, self.delta_minutes)
    }
}

/// x⁺ = A x + B u + F d + Q + Sigma w
pub fn step(
    model: &DiscreteModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("state", model.nx(), x.len())?;
    check_dim("input", model.nu(), u.len())?;
    check_dim("disturbance", model.nd(), d.len())?;
    let mut next = &model.a * x + &model.b * u + &model.q;
    if model.nd() > 0 {
        next += &model.f * d;
    }
    if !model.is_deterministic() {
        check_dim("noise", model.nx(), w.len())?;
        next += model.sigma.component_mul(w);
    }
    Ok(next)
}

/// Random stream for (trace, step): independent of evaluation order.
pub fn step_rng(seed: u64, trace: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trace);
    rng.set_word_pos((k as u128) << 16);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub seed: u64,
    pub delta_minutes: f64,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    /// K+1 rows.
    pub states: Vec<Vec<f64>>,
    /// K rows.
    pub inputs: Vec<Vec<f64>>,
    /// K+1 rows.
    pub outputs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.states[k])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t_min");
        for n in self.state_names.iter().chain(&self.input_names) {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (k, x) in self.states.iter().enumerate() {
            s.push_str(&format!("{k},{}", crate::io::fmt17(k as f64 * self.delta_minutes)));
            s.push(',');
            s.push_str(&join17(x.iter().copied()));
            match self.inputs.get(k) {
                Some(u) if !u.is_empty() => {
                    s.push(',');
                    s.push_str(&join17(u.iter().copied()));
                }
                _ => s.push_str(&",".repeat(self.input_names.len())),
            }
            s.push('\n');
        }
        s
    }

    /// Metadata for the CSV (everything except the numbers).
    pub fn sidecar_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            model_id: &'a Option<String>,
            seed: u64,
            delta_minutes: f64,
            steps: usize,
            state_names: &'a [String],
            input_names: &'a [String],
            output_names: &'a [String],
        }
        Ok(serde_json::to_string_pretty(&Sidecar {
            model_id: &self.model_id,
            seed: self.seed,
            delta_minutes: self.delta_minutes,
            steps: self.steps(),
            state_names: &self.state_names,
            input_names: &self.input_names,
            output_names: &self.output_names,
        })?)
    }
}

/// Parses [`Trace::to_csv`] output; returns (t_min, states, inputs).
pub fn parse_trace_export(text: &str, n_states: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let width = rdr.headers()?.len();
    if width < 2 + n_states {
        return Err(BasError::TraceFormat {
            line: 1,
            message: format!("expected at least {} columns", 2 + n_states),
        });
    }
    let (mut t, mut xs, mut us) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| BasError::TraceFormat {
                line,
                message: format!("not a number: `{s}`"),
            })
        };
        t.push(num(&rec[1])?);
        xs.push((2..2 + n_states).map(|c| num(&rec[c])).collect::<Result<Vec<_>>>()?);
        if rec.iter().skip(2 + n_states).all(|s| !s.is_empty()) && width > 2 + n_states {
            us.push(
                (2 + n_states..width)
                    .map(|c| num(&rec[c]))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    Ok((t, xs, us))
}

/// Draws the step-k disturbance and noise vectors of one trace.
fn draws(model: &DiscreteModel, law: &DisturbanceLaw, seed: u64, trace: u64, k: usize) -> (DVector<f64>, DVector<f64>) {
    let mut rng = step_rng(seed, trace, k);
    let z: Vec<f64> = (0..law.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let w = if model.is_deterministic() {
        DVector::zeros(model.nx())
    } else {
        DVector::from_fn(model.nx(), |_, _| StandardNormal.sample(&mut rng))
    };
    (law.realize(&z), w)
}

fn check_law(model: &DiscreteModel, law: &DisturbanceLaw) -> Result<()> {
    check_dim("disturbance law", model.nd(), law.dim())
}

fn run(
    model: &DiscreteModel,
    x0: &DVector<f64>,
    controller: &dyn Controller,
    law: &DisturbanceLaw,
    seed: u64,
    trace_index: u64,
    steps: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_dim("initial state", model.nx(), x0.len())?;
    check_law(model, law)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut x = x0.clone();
    states.push(x.as_slice().to_vec());
    for k in 0..steps {
        let u = controller.input(k, &x);
        let (d, w) = draws(model, law, seed, trace_index, k);
        x = step(model, &x, &u, &d, &w)?;
        inputs.push(u.as_slice().to_vec());
        states.push(x.as_slice().to_vec());
    }
    Ok((states, inputs))
}

fn names(space: &crate::dynamics::ChannelSpace) -> Vec<String> {
    space.names().into_iter().map(String::from).collect()
}

fn assemble(model: &DiscreteModel, seed: u64, states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>) -> Trace {
    let outputs = states
        .iter()
        .map(|x| (&model.output_c * DVector::from_column_slice(x)).as_slice().to_vec())
        .collect();
    Trace {
        model_id: None,
        seed,
        delta_minutes: model.delta_minutes,
        state_names: names(&model.states),
        input_names: names(&model.inputs),
        output_names: model.output_names(),
        states,
        inputs,
        outputs,
    }
}

pub fn simulate(
    model: &DiscreteModel,
    x0: &DVector<f64>,
    controller: &dyn Controller,
    law: &DisturbanceLaw,
    seed: u64,
    steps: usize,
) -> Result<Trace> {
    let (states, inputs) = run(model, x0, controller, law, seed, 0, steps)?;
    Ok(assemble(model, seed, states, inputs))
}

pub fn simulate_schedule(
    model: &DiscreteModel,
    x0: &DVector<f64>,
    schedule: &InputSchedule,
    law: &DisturbanceLaw,
    seed: u64,
    steps: usize,
) -> Result<Trace> {
    let c = Scheduled {
        schedule,
        delta_minutes: model.delta_minutes,
    };
    simulate(model, x0, &c, law, seed, steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub traces: Vec<Trace>,
    /// Per step, per state.
    pub mean: Vec<Vec<f64>>,
    pub std_dev: Vec<Vec<f64>>,
}

/// n traces; trace i uses random stream i of `seed` (trace 0 equals
/// [`simulate`] with the same seed).
pub fn monte_carlo(
    model: &DiscreteModel,
    x0: &DVector<f64>,
    controller: &dyn Controller,
    law: &DisturbanceLaw,
    n: usize,
    seed: u64,
    steps: usize,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(BasError::InvalidParameter {
            name: "n".into(),
            requirement: "at least 1",
            value: 0.0,
        });
    }
    let traces = (0..n)
        .map(|i| {
            let (s, u) = run(model, x0, controller, law, seed, i as u64, steps)?;
            Ok(assemble(model, seed, s, u))
        })
        .collect::<Result<Vec<_>>>()?;
    let nx = model.nx();
    let mut mean = vec![vec![0.0; nx]; steps + 1];
    let mut m2 = vec![vec![0.0; nx]; steps + 1];
    for (count, tr) in traces.iter().enumerate() {
        // Welford update
        let c = (count + 1) as f64;
        for k in 0..=steps {
            for j in 0..nx {
                let v = tr.states[k][j];
                let delta = v - mean[k][j];
                mean[k][j] += delta / c;
                m2[k][j] += delta * (v - mean[k][j]);
            }
        }
    }
    let std_dev = m2
        .iter()
        .map(|row| row.iter().map(|s| (s / n as f64).sqrt()).collect())
        .collect();
    Ok(Ensemble { traces, mean, std_dev })
}

/// Fraction of trajectories whose every state (k = 0..=steps) satisfies
/// `safe`, without storing them.
pub fn estimate_safety(
    model: &DiscreteModel,
    x0: &DVector<f64>,
    controller: &dyn Controller,
    law: &DisturbanceLaw,
    n: usize,
    seed: u64,
    steps: usize,
    safe: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<f64> {
    check_dim("initial state", model.nx(), x0.len())?;
    check_law(model, law)?;
    let mut ok = 0usize;
    for i in 0..n {
        let mut x = x0.clone();
        let mut alive = safe(&x);
        let mut k = 0;
        while alive && k < steps {
            let u = controller.input(k, &x);
            let (d, w) = draws(model, law, seed, i as u64, k);
            x = step(model, &x, &u, &d, &w)?;
            alive = safe(&x);
            k += 1;
        }
        ok += usize::from(alive);
    }
    Ok(ok as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{build_discrete, BenchmarkId};

    fn cs1() -> (DiscreteModel, DisturbanceLaw) {
        build_discrete(BenchmarkId::Cs1Det).unwrap()
    }

    #[test]
    fn weekday_schedule_windows() {
        let s = InputSchedule::Cs1Weekday;
        // 09:00 and 12:30 with 15-minute steps
        assert_eq!(s.at(36, 15.0)[0], 20.0);
        assert_eq!(s.at(50, 15.0)[0], 18.0);
        assert_eq!(s.at(0, 15.0)[0], 18.0);
        assert_eq!(s.at(96 + 36, 15.0)[0], 20.0);
    }

    #[test]
    fn one_step_matches_hand_arithmetic() {
        let (m, law) = cs1();
        let x0 = DVector::from_vec(vec![18.0, 18.0, 35.0, 35.0]);
        let tr = simulate_schedule(&m, &x0, &InputSchedule::constant(20.0), &law, 1, 1).unwrap();
        let expected = [19.0252, 18.7588, 31.0122, 31.8098];
        for (got, want) in tr.states[1].iter().zip(expected) {
            assert!((got - want).abs() < 1e-3);
        }
        assert_eq!(tr.outputs[1], tr.states[1][..2].to_vec());
    }

    #[test]
    fn zero_steps_is_initial_state() {
        let (m, law) = cs1();
        let x0 = DVector::from_vec(vec![18.0, 18.0, 35.0, 35.0]);
        let tr = simulate_schedule(&m, &x0, &InputSchedule::constant(20.0), &law, 1, 0).unwrap();
        assert_eq!(tr.states, vec![x0.as_slice().to_vec()]);
        assert!(tr.inputs.is_empty());
    }

    #[test]
    fn deterministic_noise_is_ignored() {
        let (m, _) = cs1();
        let x = DVector::from_vec(vec![18.0, 18.0, 35.0, 35.0]);
        let u = DVector::from_element(1, 20.0);
        let d = DVector::zeros(0);
        let a = step(&m, &x, &u, &d, &DVector::from_element(4, 3.0)).unwrap();
        let b = step(&m, &x, &u, &d, &DVector::zeros(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_traces_reproducible() {
        let (m, law) = build_discrete(BenchmarkId::Cs2Full).unwrap();
        let x0 = DVector::from_element(7, 20.0);
        let s = InputSchedule::constant(20.0);
        let a = simulate_schedule(&m, &x0, &s, &law, 42, 10).unwrap();
        let b = simulate_schedule(&m, &x0, &s, &law, 42, 10).unwrap();
        let c = simulate_schedule(&m, &x0, &s, &law, 43, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn ensemble_of_one_is_simulate() {
        let (m, law) = build_discrete(BenchmarkId::Cs1Stoch).unwrap();
        let x0 = DVector::from_vec(vec![20.0, 20.0, 35.0, 35.0]);
        let s = InputSchedule::constant(18.0);
        let c = Scheduled {
            schedule: &s,
            delta_minutes: 15.0,
        };
        let e = monte_carlo(&m, &x0, &c, &law, 1, 5, 8).unwrap();
        assert_eq!(e.traces[0], simulate(&m, &x0, &c, &law, 5, 8).unwrap());
    }

    #[test]
    fn deterministic_ensemble_has_zero_spread() {
        let (m, law) = cs1();
        let x0 = DVector::from_vec(vec![18.0, 18.0, 35.0, 35.0]);
        let s = InputSchedule::constant(20.0);
        let c = Scheduled {
            schedule: &s,
            delta_minutes: 15.0,
        };
        let e = monte_carlo(&m, &x0, &c, &law, 100, 3, 6).unwrap();
        assert!(e.std_dev.iter().flatten().all(|v| *v == 0.0));
        assert!(e.traces.iter().all(|t| t.states == e.traces[0].states));
    }

    #[test]
    fn csv_export_round_trips() {
        let (m, law) = build_discrete(BenchmarkId::Cs1Stoch).unwrap();
        let x0 = DVector::from_vec(vec![18.0, 18.0, 35.0, 35.0]);
        let tr = simulate_schedule(&m, &x0, &InputSchedule::Cs1Weekday, &law, 9, 12).unwrap();
        let (t, xs, us) = parse_trace_export(&tr.to_csv(), 4).unwrap();
        assert_eq!(t.len(), 13);
        assert_eq!(xs, tr.states);
        assert_eq!(us, tr.inputs);
    }
}
