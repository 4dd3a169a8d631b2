//! Compartmental epidemic models.
//!
//! Deterministic SIR, SIS and SEIR dynamics are integrated with a classical
//! fixed-step fourth-order Runge–Kutta scheme, so a trajectory is a pure
//! function of its inputs. [`network`] holds the node-level stochastic chain
//! and [`fit`] the least-squares calibration.

pub mod fit;
pub mod network;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Compartment;

pub use fit::{fit_compartmental, FitResult, FitStatus};
pub use network::{simulate_network_sir, InfectionRecord, NetworkSir, NetworkSirConfig, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentParams {
    /// Transmission rate per unit time.
    pub beta: f64,
    /// Recovery rate.
    pub gamma: f64,
    /// Incubation rate (SEIR only).
    #[serde(default)]
    pub sigma: f64,
    pub population: f64,
}

impl CompartmentParams {
    pub fn sir(beta: f64, gamma: f64, population: f64) -> Self {
        Self {
            beta,
            gamma,
            sigma: 0.0,
            population,
        }
    }

    pub fn seir(beta: f64, gamma: f64, sigma: f64, population: f64) -> Self {
        Self {
            beta,
            gamma,
            sigma,
            population,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("beta", self.beta), ("gamma", self.gamma), ("sigma", self.sigma)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::param(name, format!("rate must be finite and >= 0, got {x}")));
            }
        }
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(Error::param("population", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Basic reproduction number β/γ.
    pub fn r0(&self) -> f64 {
        self.beta / self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompartmentalModel {
    Sir,
    Sis,
    Seir,
}

impl CompartmentalModel {
    pub fn compartments(self) -> &'static [Compartment] {
        use Compartment::*;
        match self {
            CompartmentalModel::Sir => &[S, I, R],
            CompartmentalModel::Sis => &[S, I],
            CompartmentalModel::Seir => &[S, E, I, R],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CompartmentalModel::Sir => "sir",
            CompartmentalModel::Sis => "sis",
            CompartmentalModel::Seir => "seir",
        }
    }

    /// Position of the infectious compartment in the state vector.
    pub fn infected_index(self) -> usize {
        match self {
            CompartmentalModel::Seir => 2,
            _ => 1,
        }
    }

    /// Right-hand side of the ODE at state `y`.
    pub fn derivative(self, p: &CompartmentParams, y: &[f64; 4]) -> [f64; 4] {
        let n = p.population;
        match self {
            CompartmentalModel::Sir => {
                let [s, i, _, _] = *y;
                let inf = p.beta * s * i / n;
                let rec = p.gamma * i;
                [-inf, inf - rec, rec, 0.0]
            }
            CompartmentalModel::Sis => {
                let [s, i, _, _] = *y;
                let inf = p.beta * s * i / n;
                let rec = p.gamma * i;
                [-inf + rec, inf - rec, 0.0, 0.0]
            }
            CompartmentalModel::Seir => {
                let [s, e, i, _] = *y;
                let inf = p.beta * s * i / n;
                let inc = p.sigma * e;
                let rec = p.gamma * i;
                [-inf, inf - inc, inc - rec, rec]
            }
        }
    }
}

impl std::str::FromStr for CompartmentalModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Self::Sir),
            "sis" => Ok(Self::Sis),
            "seir" => Ok(Self::Seir),
            _ => Err(Error::param("model", format!("unknown compartmental model `{s}`"))),
        }
    }
}

/// Population counts per compartment over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentTrajectory {
    pub model: CompartmentalModel,
    pub population: f64,
    pub times: Vec<f64>,
    /// `counts[k][c]` is compartment `model.compartments()[c]` at `times[k]`.
    pub counts: Vec<Vec<f64>>,
}

impl CompartmentTrajectory {
    pub fn compartments(&self) -> &'static [Compartment] {
        self.model.compartments()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, c: Compartment) -> Option<Vec<f64>> {
        let k = self.compartments().iter().position(|&x| x == c)?;
        Some(self.counts.iter().map(|row| row[k]).collect())
    }

    pub fn last(&self, c: Compartment) -> Option<f64> {
        let k = self.compartments().iter().position(|&x| x == c)?;
        self.counts.last().map(|row| row[k])
    }

    /// Infectious compartment series.
    pub fn infected(&self) -> Vec<f64> {
        let k = self.model.infected_index();
        self.counts.iter().map(|row| row[k]).collect()
    }

    /// Every `stride`-th sample, starting from `t = 0`.
    pub fn every(&self, stride: usize) -> CompartmentTrajectory {
        let stride = stride.max(1);
        CompartmentTrajectory {
            model: self.model,
            population: self.population,
            times: self.times.iter().step_by(stride).copied().collect(),
            counts: self.counts.iter().step_by(stride).cloned().collect(),
        }
    }

    /// CSV with a header `t,<compartments…>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in self.compartments() {
            out.push(',');
            out.push_str(c.label());
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.counts) {
            out.push_str(&format!("{t}"));
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One classical RK4 step.
pub(crate) fn rk4_step(
    model: CompartmentalModel,
    p: &CompartmentParams,
    y: &[f64; 4],
    h: f64,
) -> [f64; 4] {
    let add = |a: &[f64; 4], b: &[f64; 4], s: f64| -> [f64; 4] {
        [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
    };
    let k1 = model.derivative(p, y);
    let k2 = model.derivative(p, &add(y, &k1, h / 2.0));
    let k3 = model.derivative(p, &add(y, &k2, h / 2.0));
    let k4 = model.derivative(p, &add(y, &k3, h));
    let mut out = *y;
    for j in 0..4 {
        out[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    out
}

/// Integrates `model` from `initial` (ordered as `model.compartments()`).
///
/// The grid is `0, dt, 2dt, …`; if `horizon` is not a multiple of `dt` the
/// final step is shortened so the trajectory ends exactly at `horizon`.
pub fn simulate(
    model: CompartmentalModel,
    params: &CompartmentParams,
    initial: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<CompartmentTrajectory> {
    simulate_strided(model, params, initial, horizon, dt, 1)
}

/// As [`simulate`], recording only every `record_every`-th step (and the
/// final state). Integration still happens at `dt`.
pub fn simulate_strided(
    model: CompartmentalModel,
    params: &CompartmentParams,
    initial: &[f64],
    horizon: f64,
    dt: f64,
    record_every: usize,
) -> Result<CompartmentTrajectory> {
    params.validate()?;
    let dims = model.compartments().len();
    if initial.len() != dims {
        return Err(Error::shape(
            "initial",
            format!("{} expects {dims} compartments, got {}", model.name(), initial.len()),
        ));
    }
    for (c, &x) in model.compartments().iter().zip(initial) {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::param(
                format!("{}0", c.label().to_ascii_lowercase()),
                format!("initial count must be finite and >= 0, got {x}"),
            ));
        }
    }
    let n = params.population;
    let total: f64 = initial.iter().sum();
    if (total - n).abs() > 1e-9 * n {
        return Err(Error::param(
            "initial",
            format!("initial counts sum to {total}, population is {n}"),
        ));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be > 0"));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(Error::param("horizon", format!("must be finite and >= dt ({dt})")));
    }
    let stride = record_every.max(1);

    let full = (horizon / dt).floor() as usize;
    let (full, tail) = if (horizon - full as f64 * dt).abs() <= 1e-9 * horizon {
        (full, None)
    } else if (horizon - (full + 1) as f64 * dt).abs() <= 1e-9 * horizon {
        (full + 1, None)
    } else {
        (full, Some(horizon - full as f64 * dt))
    };

    let mut y = [0.0; 4];
    y[..dims].copy_from_slice(initial);
    let cap = full / stride + 2;
    let mut times = Vec::with_capacity(cap);
    let mut counts = Vec::with_capacity(cap);
    let dust = 1e-12 * n;
    let record = |y: &[f64; 4], counts: &mut Vec<Vec<f64>>| {
        counts.push(
            y[..dims]
                .iter()
                .map(|&x| if x < 0.0 && x >= -dust { 0.0 } else { x })
                .collect(),
        );
    };
    times.push(0.0);
    record(&y, &mut counts);
    for k in 1..=full {
        y = rk4_step(model, params, &y, dt);
        let last = k == full && tail.is_none();
        if k % stride == 0 || last {
            times.push(if last { horizon } else { k as f64 * dt });
            record(&y, &mut counts);
        }
    }
    if let Some(h) = tail {
        y = rk4_step(model, params, &y, h);
        times.push(horizon);
        record(&y, &mut counts);
    }
    Ok(CompartmentTrajectory {
        model,
        population: n,
        times,
        counts,
    })
}

pub fn simulate_sir(
    params: &CompartmentParams,
    s0: f64,
    i0: f64,
    r0: f64,
    horizon: f64,
    dt: f64,
) -> Result<CompartmentTrajectory> {
    simulate(CompartmentalModel::Sir, params, &[s0, i0, r0], horizon, dt)
}

pub fn simulate_sis(
    params: &CompartmentParams,
    s0: f64,
    i0: f64,
    horizon: f64,
    dt: f64,
) -> Result<CompartmentTrajectory> {
    simulate(CompartmentalModel::Sis, params, &[s0, i0], horizon, dt)
}

pub fn simulate_seir(
    params: &CompartmentParams,
    s0: f64,
    e0: f64,
    i0: f64,
    r0: f64,
    horizon: f64,
    dt: f64,
) -> Result<CompartmentTrajectory> {
    simulate(CompartmentalModel::Seir, params, &[s0, e0, i0, r0], horizon, dt)
}
