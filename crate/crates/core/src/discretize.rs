//! Euler schemes turning a continuous model into a sampled one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ChannelSpace, ContinuousModel};
use crate::error::{check_dim, BasError, Result};
use crate::serde_mat;

pub const DEFAULT_DELTA_MINUTES: f64 = 15.0;

/// x[k+1] = A x + B u + F d + Q + diag(sigma) w,  y = C x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub states: ChannelSpace,
    pub inputs: ChannelSpace,
    pub disturbances: ChannelSpace,
    #[serde(with = "serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub f: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub q: DVector<f64>,
    /// Per-step noise standard deviations (diagonal of Sigma).
    #[serde(with = "serde_mat::vector")]
    pub sigma: DVector<f64>,
    pub delta_minutes: f64,
    #[serde(with = "serde_mat::matrix")]
    pub output_c: DMatrix<f64>,
}

impl DiscreteModel {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nd(&self) -> usize {
        self.f.ncols()
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma.iter().all(|s| *s == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.states.dim();
        check_dim("A rows", nx, self.a.nrows())?;
        check_dim("A columns", nx, self.a.ncols())?;
        check_dim("B rows", nx, self.b.nrows())?;
        check_dim("B columns", self.inputs.dim(), self.b.ncols())?;
        check_dim("F rows", nx, self.f.nrows())?;
        check_dim("F columns", self.disturbances.dim(), self.f.ncols())?;
        check_dim("Q", nx, self.q.len())?;
        check_dim("Sigma", nx, self.sigma.len())?;
        check_dim("output_C columns", nx, self.output_c.ncols())?;
        if let Some(s) = self.sigma.iter().find(|s| !(**s >= 0.0)) {
            return Err(BasError::InvalidParameter {
                name: "Sigma".into(),
                requirement: "non-negative",
                value: *s,
            });
        }
        if !(self.delta_minutes >= 0.0) {
            return Err(BasError::InvalidParameter {
                name: "delta".into(),
                requirement: "non-negative",
                value: self.delta_minutes,
            });
        }
        Ok(())
    }

    /// Rows of output_C picking out the named states.
    pub fn output_names(&self) -> Vec<String> {
        (0..self.output_c.nrows())
            .map(|r| {
                let picks: Vec<_> = (0..self.nx()).filter(|&c| self.output_c[(r, c)] != 0.0).collect();
                match picks.as_slice() {
                    [c] if self.output_c[(r, *c)] == 1.0 => self.states.names()[*c].to_string(),
                    _ => format!("y{}", r + 1),
                }
            })
            .collect()
    }
}

/// Selects every state whose name starts with `T_z` (optionally after a
/// `component.` prefix).
pub fn zone_output_selector(states: &ChannelSpace) -> DMatrix<f64> {
    let picks: Vec<usize> = states
        .names()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.rsplit('.').next().is_some_and(|s| s.starts_with("T_z")))
        .map(|(i, _)| i)
        .collect();
    let mut c = DMatrix::zeros(picks.len(), states.dim());
    for (r, &i) in picks.iter().enumerate() {
        c[(r, i)] = 1.0;
    }
    c
}

fn check_frozen(model: &ContinuousModel) -> Result<()> {
    if let Some(term) = model.bilinear.first() {
        let name = model
            .inputs
            .get(term.input)
            .map_or_else(|| format!("#{}", term.input), |c| c.name.clone());
        return Err(BasError::UnfrozenBilinear(name));
    }
    if !(model.drift_a.iter().all(|v| v.is_finite())) {
        return Err(BasError::InvalidInput("non-finite drift matrix".into()));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(BasError::InvalidParameter {
            name: "delta".into(),
            requirement: "finite and non-negative",
            value: delta,
        })
    }
}

pub fn forward_euler(model: &ContinuousModel, delta: f64) -> Result<DiscreteModel> {
    check_frozen(model)?;
    check_delta(delta)?;
    model.validate()?;
    let nx = model.nx();
    Ok(DiscreteModel {
        states: model.states.clone(),
        inputs: model.inputs.clone(),
        disturbances: model.disturbances.clone(),
        a: DMatrix::identity(nx, nx) + &model.drift_a * delta,
        b: &model.drift_b * delta,
        f: &model.drift_f * delta,
        q: &model.drift_q * delta,
        sigma: DVector::zeros(nx),
        delta_minutes: delta,
        output_c: zone_output_selector(&model.states),
    })
}

/// Same drift as [`forward_euler`]; noise standard deviations scale by √Δ.
pub fn euler_maruyama(model: &ContinuousModel, delta: f64) -> Result<DiscreteModel> {
    let mut d = forward_euler(model, delta)?;
    d.sigma = &model.noise_sigma * delta.sqrt();
    Ok(d)
}
