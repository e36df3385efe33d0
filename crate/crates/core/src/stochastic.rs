//! Grid abstractions of affine Gaussian kernels, bounded safety by value
//! iteration, policy refinement and guarantee composition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::benchmarks::{build_discrete, sim_rel_lookup, BenchmarkId, T_RW_R_SS};
use crate::discretize::DiscreteModel;
use crate::dynamics::ChannelSpace;
use crate::error::{check_dim, BasError, Result};
use crate::io::fmt17;
use crate::simulate::{estimate_safety, Controller};

/// Per-axis transition mass beyond this many standard deviations is treated
/// as leaving the grid (tail mass below 1e-16).
const BAND_SIGMAS: f64 = 8.5;

/// Upper limit on stored per-axis transition entries.
pub const MAX_KERNEL_ENTRIES: usize = 60_000_000;

/// x⁺ ~ N(A x + B u + q, diag(variance)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub state_names: Vec<String>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub q: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub variance: DVector<f64>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
}

impl GaussianKernel {
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        check_dim("A columns", n, self.a.ncols())?;
        check_dim("B rows", n, self.b.nrows())?;
        check_dim("q", n, self.q.len())?;
        check_dim("variance", n, self.variance.len())?;
        check_dim("state names", n, self.state_names.len())?;
        check_dim("input bounds", self.b.ncols(), self.u_lo.len())?;
        check_dim("input bounds", self.b.ncols(), self.u_hi.len())?;
        if let Some(v) = self.variance.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(BasError::InvalidParameter {
                name: "variance".into(),
                requirement: "positive and finite",
                value: *v,
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn mean(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.q
    }

    /// The kernel as a stochastic discrete model, for Monte-Carlo rollouts.
    pub fn to_discrete(&self) -> Result<DiscreteModel> {
        let names: Vec<&str> = self.state_names.iter().map(String::as_str).collect();
        let inputs: Vec<String> = (1..=self.b.ncols()).map(|i| format!("u{i}")).collect();
        let inputs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let n = self.dim();
        let m = DiscreteModel {
            states: ChannelSpace::celsius(&names)?,
            inputs: ChannelSpace::celsius(&inputs)?,
            disturbances: ChannelSpace::empty(),
            a: self.a.clone(),
            b: self.b.clone(),
            f: DMatrix::zeros(n, 0),
            q: self.q.clone(),
            sigma: self.variance.map(f64::sqrt),
            delta_minutes: crate::discretize::DEFAULT_DELTA_MINUTES,
            output_c: DMatrix::identity(n, n),
        };
        m.validate()?;
        Ok(m)
    }
}

/// (T_z1, T_z2) of the cs1 stochastic model with both radiator states frozen
/// at their steady state.
pub fn build_kernel_cs1_2d() -> Result<GaussianKernel> {
    let (m, _) = build_discrete(BenchmarkId::Cs1Stoch)?;
    let frozen = DVector::from_element(2, T_RW_R_SS);
    let q = m.q.rows(0, 2) + m.a.view((0, 2), (2, 2)) * frozen;
    let kernel = GaussianKernel {
        state_names: vec!["T_z1".into(), "T_z2".into()],
        a: m.a.view((0, 0), (2, 2)).into_owned(),
        b: m.b.rows(0, 2).into_owned(),
        q,
        variance: m.sigma.rows(0, 2).map(|s| s * s),
        u_lo: vec![15.0],
        u_hi: vec![22.0],
    };
    kernel.validate()?;
    Ok(kernel)
}

/// One-state cs2 abstraction with its Gaussian disturbances folded into the
/// mean and the variance.
pub fn build_kernel_cs2_1d() -> Result<GaussianKernel> {
    let (m, law) = build_discrete(BenchmarkId::Cs2Abs1)?;
    let q = &m.q + &m.f * law.means();
    let var_d = law.std_devs().map(|s| s * s);
    let variance = DVector::from_fn(m.nx(), |i, _| {
        m.sigma[i] * m.sigma[i] + (0..m.nd()).map(|j| m.f[(i, j)].powi(2) * var_d[j]).sum::<f64>()
    });
    let kernel = GaussianKernel {
        state_names: vec!["T_z1".into()],
        a: m.a.clone(),
        b: m.b.clone(),
        q,
        variance,
        u_lo: vec![15.0],
        u_hi: vec![22.0],
    };
    kernel.validate()?;
    Ok(kernel)
}

/// `count` evenly spaced scalar inputs over [lo, hi].
pub fn action_grid(lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    match count {
        0 => Vec::new(),
        1 => vec![vec![0.5 * (lo + hi)]],
        _ => (0..count)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (count - 1) as f64])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub horizon: usize,
    pub formula: String,
}

impl SafetySpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, horizon: usize) -> Result<Self> {
        check_dim("safe box", lo.len(), hi.len())?;
        let formula = format!("P=?[G<={horizon} x in safe box]");
        Ok(SafetySpec {
            lo,
            hi,
            horizon,
            formula,
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lo.len()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }
}

/// Uniform partition, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        check_dim("grid bounds", lo.len(), hi.len())?;
        check_dim("cells per axis", lo.len(), cells.len())?;
        for d in 0..lo.len() {
            if cells[d] == 0 {
                return Err(BasError::InvalidParameter {
                    name: "cells_per_axis".into(),
                    requirement: "at least 1",
                    value: 0.0,
                });
            }
            if !(hi[d] > lo[d]) || !(hi[d] - lo[d]).is_finite() {
                return Err(BasError::DegenerateCell(d));
            }
        }
        Ok(Grid { lo, hi, cells })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / self.cells[d] as f64
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for d in (0..self.dim().saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.cells[d + 1];
        }
        s
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = i % self.cells[d];
            i /= self.cells[d];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.cells).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn cell_bounds(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.multi_index(i);
        let lo = (0..self.dim()).map(|d| self.edge(d, idx[d])).collect();
        let hi = (0..self.dim()).map(|d| self.edge(d, idx[d] + 1)).collect();
        (lo, hi)
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        let (lo, hi) = self.cell_bounds(i);
        lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    fn edge(&self, d: usize, j: usize) -> f64 {
        if j == self.cells[d] {
            self.hi[d]
        } else {
            self.lo[d] + j as f64 * self.width(d)
        }
    }

    /// Containing cell; states outside snap to the nearest cell.
    pub fn locate(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|d| {
                let t = ((x[d] - self.lo[d]) / self.width(d)).floor();
                if t.is_nan() || t < 0.0 {
                    0
                } else {
                    (t as usize).min(self.cells[d] - 1)
                }
            })
            .collect();
        self.flat_index(&idx)
    }
}

/// Probability that a standard normal lands in [a, b], accurate in both tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a * r) - erfc(b * r))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * r) - erfc(-a * r))
    } else {
        1.0 - 0.5 * erfc(-a * r) - 0.5 * erfc(b * r)
    }
    .max(0.0)
}

/// Transition masses into cells start.. along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBand {
    pub start: usize,
    pub probs: Vec<f64>,
}

fn axis_band(grid: &Grid, d: usize, mean: f64, sd: f64) -> AxisBand {
    let w = grid.width(d);
    let n = grid.cells[d];
    let from = ((mean - BAND_SIGMAS * sd - grid.lo[d]) / w).floor();
    let to = ((mean + BAND_SIGMAS * sd - grid.lo[d]) / w).floor();
    if to < 0.0 || from >= n as f64 || from.is_nan() {
        return AxisBand {
            start: 0,
            probs: Vec::new(),
        };
    }
    let start = from.max(0.0) as usize;
    let end = (to as usize).min(n - 1);
    let probs = (start..=end)
        .map(|j| normal_mass((grid.edge(d, j) - mean) / sd, (grid.edge(d, j + 1) - mean) / sd))
        .collect();
    AxisBand { start, probs }
}

/// Cells × actions abstraction with an absorbing unsafe state. Rows are
/// products of per-axis bands, so only the bands are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMDP {
    pub grid: Grid,
    pub actions: Vec<Vec<f64>>,
    /// Indexed by (cell · |actions| + action) · dim + axis.
    pub bands: Vec<AxisBand>,
    /// Abstraction error per step.
    pub eta: f64,
}

impl GridMDP {
    pub fn n_cells(&self) -> usize {
        self.grid.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    fn row_bands(&self, i: usize, a: usize) -> &[AxisBand] {
        let n = self.grid.dim();
        let k = (i * self.n_actions() + a) * n;
        &self.bands[k..k + n]
    }

    /// Mass staying on the grid.
    pub fn safe_mass(&self, i: usize, a: usize) -> f64 {
        self.row_bands(i, a)
            .iter()
            .map(|b| b.probs.iter().sum::<f64>())
            .product()
    }

    /// Dense row over cells with the unsafe mass last.
    pub fn dense_row(&self, i: usize, a: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_cells() + 1];
        for (j, p) in row.iter_mut().take(self.n_cells()).enumerate() {
            let idx = self.grid.multi_index(j);
            *p = self
                .row_bands(i, a)
                .iter()
                .zip(&idx)
                .map(|(b, &jd)| {
                    if jd >= b.start && jd < b.start + b.probs.len() {
                        b.probs[jd - b.start]
                    } else {
                        0.0
                    }
                })
                .product();
        }
        row[self.n_cells()] = 1.0 - row[..self.n_cells()].iter().sum::<f64>();
        row
    }

    /// Σ_j P(i, a, j) v(j).
    pub fn expect(&self, i: usize, a: usize, v: &[f64]) -> f64 {
        let strides = self.grid.strides();
        contract(self.row_bands(i, a), &strides, v, 0, 0)
    }
}

fn contract(bands: &[AxisBand], strides: &[usize], v: &[f64], axis: usize, base: usize) -> f64 {
    let b = &bands[axis];
    let last = axis + 1 == bands.len();
    let mut s = 0.0;
    for (t, p) in b.probs.iter().enumerate() {
        let idx = base + (b.start + t) * strides[axis];
        s += p * if last {
            v[idx]
        } else {
            contract(bands, strides, v, axis + 1, idx)
        };
    }
    s
}

/// Builds the abstraction over the safe box, one band per (cell, action, axis).
///
/// Error per step: replacing x by its cell centre c shifts the mean by at most
/// δ_d = Σ_k |A_dk| w_k / 2 on axis d. The total variation between two
/// Gaussians with equal variance and mean shift δ is 2Φ(δ/2σ) − 1 ≤ δ/(σ√(2π)),
/// and for product measures it is at most the sum over axes, so
/// η = Σ_d 0.3989·δ_d/σ_d bounds the per-step change of any value in [0, 1].
pub fn grid_abstraction(
    kernel: &GaussianKernel,
    spec: &SafetySpec,
    cells_per_axis: &[usize],
    actions: &[Vec<f64>],
) -> Result<GridMDP> {
    kernel.validate()?;
    let n = kernel.dim();
    check_dim("safe box", n, spec.lo.len())?;
    let grid = Grid::new(spec.lo.clone(), spec.hi.clone(), cells_per_axis.to_vec())?;
    if actions.is_empty() {
        return Err(BasError::InvalidParameter {
            name: "actions".into(),
            requirement: "at least one action",
            value: 0.0,
        });
    }
    for u in actions {
        check_dim("action", kernel.b.ncols(), u.len())?;
        for (k, v) in u.iter().enumerate() {
            if !(kernel.u_lo[k] <= *v && *v <= kernel.u_hi[k]) {
                return Err(BasError::InvalidParameter {
                    name: "action".into(),
                    requirement: "within the admissible input range",
                    value: *v,
                });
            }
        }
    }
    let sd: Vec<f64> = kernel.variance.iter().map(|v| v.sqrt()).collect();
    let estimate: f64 = (0..n)
        .map(|d| (2.0 * BAND_SIGMAS * sd[d] / grid.width(d) + 2.0).min(grid.cells[d] as f64))
        .sum::<f64>()
        * (grid.len() * actions.len()) as f64;
    if estimate > MAX_KERNEL_ENTRIES as f64 {
        return Err(BasError::InvalidParameter {
            name: "cells_per_axis".into(),
            requirement: "kernel storage within MAX_KERNEL_ENTRIES",
            value: estimate,
        });
    }
    let mut bands = Vec::with_capacity(grid.len() * actions.len() * n);
    for i in 0..grid.len() {
        let c = DVector::from_vec(grid.center(i));
        for u in actions {
            let mu = kernel.mean(&c, &DVector::from_column_slice(u));
            for d in 0..n {
                bands.push(axis_band(&grid, d, mu[d], sd[d]));
            }
        }
    }
    let eta = (0..n)
        .map(|d| {
            let shift: f64 = (0..n).map(|k| kernel.a[(d, k)].abs() * grid.width(k) / 2.0).sum();
            shift / (sd[d] * (2.0 * std::f64::consts::PI).sqrt())
        })
        .sum();
    Ok(GridMDP {
        grid,
        actions: actions.to_vec(),
        bands,
        eta,
    })
}

/// Time-varying cell → action map; `steps[k]` is used at time k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub grid: Grid,
    pub actions: Vec<Vec<f64>>,
    pub steps: Vec<Vec<usize>>,
}

impl Policy {
    pub fn constant(grid: Grid, action: Vec<f64>, horizon: usize) -> Self {
        let cells = grid.len();
        Policy {
            grid,
            actions: vec![action],
            steps: vec![vec![0; cells]; horizon],
        }
    }

    /// Action index at time k for a concrete abstract state; after the
    /// horizon the last step is held.
    pub fn action_index(&self, k: usize, x: &[f64]) -> usize {
        match self.steps.get(k).or(self.steps.last()) {
            Some(row) => row[self.grid.locate(x)],
            None => 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyResult {
    /// values[m] = V_m, the safety probability over m remaining steps.
    pub values: Vec<Vec<f64>>,
    pub policy: Policy,
}

impl SafetyResult {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("V_0 always present")
    }

    /// Cell with the largest V_N (lowest index on ties) and its value.
    pub fn best_cell(&self) -> (usize, f64) {
        self.final_values().iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc },
        )
    }

    /// `lo_<x>…,hi_<x>…,V_N,action` per cell, action taken at time 0.
    pub fn value_csv(&self, mdp: &GridMDP, state_names: &[String]) -> String {
        let mut s: Vec<String> = state_names.iter().map(|n| format!("lo_{n}")).collect();
        s.extend(state_names.iter().map(|n| format!("hi_{n}")));
        s.push("V_N".into());
        s.push("action".into());
        let mut out = s.join(",");
        out.push('\n');
        let v = self.final_values();
        for i in 0..mdp.n_cells() {
            let (lo, hi) = mdp.grid.cell_bounds(i);
            let a = self.policy.steps.first().map_or(0, |r| r[i]);
            let fields: Vec<String> = lo
                .iter()
                .chain(&hi)
                .chain(std::iter::once(&v[i]))
                .chain(self.policy.actions[a].iter())
                .map(|x| fmt17(*x))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// V_0 = 1 on the grid, V_{m+1}(i) = max_a Σ_j P(i,a,j) V_m(j); the unsafe
/// state contributes 0. Ties go to the lowest action index.
pub fn safety_value_iteration(mdp: &GridMDP, horizon: usize) -> SafetyResult {
    let cells = mdp.n_cells();
    let mut values = vec![vec![1.0; cells]];
    let mut steps = vec![Vec::new(); horizon];
    for m in 0..horizon {
        let prev = &values[m];
        let mut next = vec![0.0; cells];
        let mut choice = vec![0; cells];
        for i in 0..cells {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions() {
                let q = mdp.expect(i, a, prev);
                if q > best {
                    best = q;
                    choice[i] = a;
                }
            }
            next[i] = best.clamp(0.0, 1.0);
        }
        steps[horizon - 1 - m] = choice;
        values.push(next);
    }
    SafetyResult {
        values,
        policy: Policy {
            grid: mdp.grid.clone(),
            actions: mdp.actions.clone(),
            steps,
        },
    }
}

/// State feedback on a concrete model: the abstract state is read from the
/// given state indices and snapped to the policy grid.
#[derive(Debug, Clone)]
pub struct RefinedController<'a> {
    pub policy: &'a Policy,
    pub interface: Vec<usize>,
}

impl Controller for RefinedController<'_> {
    fn input(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let s: Vec<f64> = self.interface.iter().map(|&i| x[i]).collect();
        DVector::from_column_slice(&self.policy.actions[self.policy.action_index(k, &s)])
    }
}

pub fn refine_policy(policy: &Policy, interface: Vec<usize>) -> Result<RefinedController<'_>> {
    check_dim("interface", policy.grid.dim(), interface.len())?;
    Ok(RefinedController { policy, interface })
}

/// p = max(0, p′ − η − N δ)
pub fn compose_guarantee(p_prime: f64, eta: f64, horizon: usize, delta: f64) -> Result<f64> {
    for (name, v) in [("p_prime", p_prime), ("eta", eta), ("delta", delta)] {
        if !(v >= 0.0) {
            return Err(BasError::InvalidParameter {
                name: name.into(),
                requirement: "non-negative",
                value: v,
            });
        }
    }
    Ok((p_prime - eta - horizon as f64 * delta).max(0.0))
}

pub const PRINTED_P_PRIME: f64 = 0.9257;
pub const PRINTED_P: f64 = 0.7657;
pub const PRINTED_ETA: f64 = 0.005;
pub const CS2_HORIZON: usize = 16;
pub const CS2_DELTA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cs2Config {
    pub cells: usize,
    pub actions: usize,
    pub horizon: usize,
    pub mc_runs: usize,
    pub seed: u64,
}

impl Default for Cs2Config {
    fn default() -> Self {
        Cs2Config {
            cells: 4000,
            actions: 15,
            horizon: CS2_HORIZON,
            mc_runs: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cs2Report {
    pub p_prime: f64,
    /// Accumulated abstraction error N·η_step.
    pub eta: f64,
    pub eta_step: f64,
    pub eta_target: f64,
    pub eta_target_met: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub horizon: usize,
    pub p: f64,
    pub printed_p_prime: f64,
    pub printed_p: f64,
    /// The composition formula evaluated on the printed p′ and η.
    pub printed_inputs_composed: f64,
    pub cells: usize,
    pub actions: usize,
    pub start_t_z1: f64,
    pub monte_carlo_runs: usize,
    pub monte_carlo_safety: f64,
    pub notes: Vec<String>,
}

pub struct Cs2Synthesis {
    pub report: Cs2Report,
    pub kernel: GaussianKernel,
    pub mdp: GridMDP,
    pub result: SafetyResult,
}

/// Safety of |T_z1 − 20| ≤ 0.5 over the one-state abstraction, composed with
/// the (ε, δ) relation to the full model and checked by Monte Carlo on it.
pub fn synthesize_cs2(cfg: &Cs2Config) -> Result<Cs2Synthesis> {
    let kernel = build_kernel_cs2_1d()?;
    let spec = SafetySpec::new(vec![19.5], vec![20.5], cfg.horizon)?;
    let actions = action_grid(kernel.u_lo[0], kernel.u_hi[0], cfg.actions);
    let mdp = grid_abstraction(&kernel, &spec, &[cfg.cells], &actions)?;
    let result = safety_value_iteration(&mdp, cfg.horizon);
    let (best, p_prime) = result.best_cell();
    let eta = mdp.eta * cfg.horizon as f64;
    let epsilon = sim_rel_lookup(1, CS2_DELTA)?;
    let p = compose_guarantee(p_prime, eta, cfg.horizon, CS2_DELTA)?;

    let (full, law) = build_discrete(BenchmarkId::Cs2Full)?;
    let start_t_z1 = mdp.grid.center(best)[0];
    let mut x0 = DVector::from_element(full.nx(), 20.0);
    x0[0] = start_t_z1;
    let ctrl = refine_policy(&result.policy, vec![0])?;
    let safe = |x: &DVector<f64>| (x[0] - 20.0).abs() <= 0.5;
    let mc = estimate_safety(&full, &x0, &ctrl, &law, cfg.mc_runs, cfg.seed, cfg.horizon, &safe)?;

    let printed_inputs_composed = compose_guarantee(PRINTED_P_PRIME, PRINTED_ETA, CS2_HORIZON, CS2_DELTA)?;
    let mut notes = vec![format!(
        "printed p = {PRINTED_P} differs from p' - eta - N*delta = {} for the printed inputs",
        fmt17(printed_inputs_composed)
    )];
    if eta > PRINTED_ETA {
        notes.push(format!(
            "eta target {PRINTED_ETA} not met with {} cells (eta = {})",
            cfg.cells,
            fmt17(eta)
        ));
    }
    Ok(Cs2Synthesis {
        report: Cs2Report {
            p_prime,
            eta,
            eta_step: mdp.eta,
            eta_target: PRINTED_ETA,
            eta_target_met: eta <= PRINTED_ETA,
            epsilon,
            delta: CS2_DELTA,
            horizon: cfg.horizon,
            p,
            printed_p_prime: PRINTED_P_PRIME,
            printed_p: PRINTED_P,
            printed_inputs_composed,
            cells: cfg.cells,
            actions: cfg.actions,
            start_t_z1,
            monte_carlo_runs: cfg.mc_runs,
            monte_carlo_safety: mc,
            notes,
        },
        kernel,
        mdp,
        result,
    })
}
