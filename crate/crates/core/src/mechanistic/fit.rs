//! Least-squares calibration of compartmental models.

use serde::{Deserialize, Serialize};

use super::{simulate_strided, CompartmentParams, CompartmentalModel};
use crate::error::{Error, Result};
use crate::model::FeaturePanel;

const MAX_EVALUATIONS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Evaluation budget exhausted; parameters are the best seen.
    MaxEvaluations,
    /// Observations carry no information about the rates (e.g. all zero).
    Unidentifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: CompartmentParams,
    pub loss: f64,
    pub initial_loss: f64,
    pub evaluations: usize,
    pub status: FitStatus,
}

/// Simulated infectious counts sampled at integer times `0..len`.
pub(crate) fn infected_curve(
    model: CompartmentalModel,
    params: &CompartmentParams,
    i0: f64,
    len: usize,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = params.population;
    let initial: Vec<f64> = match model {
        CompartmentalModel::Sir => vec![n - i0, i0, 0.0],
        CompartmentalModel::Sis => vec![n - i0, i0],
        CompartmentalModel::Seir => vec![n - i0, 0.0, i0, 0.0],
    };
    if len <= 1 {
        return Ok(vec![i0; len]);
    }
    let stride = per_unit(dt)?;
    let tr = simulate_strided(model, params, &initial, (len - 1) as f64, dt, stride)?;
    Ok(tr.infected())
}

fn per_unit(dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0 && dt <= 1.0) {
        return Err(Error::param("dt", "must lie in (0, 1]"));
    }
    let k = (1.0 / dt).round();
    if (k * dt - 1.0).abs() > 1e-9 {
        return Err(Error::param("dt", "must divide the unit sampling interval"));
    }
    Ok(k as usize)
}

/// Fits the rates of `model` to an observed infectious series (one node,
/// one feature, unit spacing) by minimizing mean squared error.
///
/// Rates are optimized in log space with Nelder–Mead, starting at `init`;
/// `init.population` is replaced by `population`. The initial infectious
/// count is the first observation and everyone else starts susceptible.
pub fn fit_compartmental(
    observed: &FeaturePanel,
    model: CompartmentalModel,
    population: f64,
    init: &CompartmentParams,
    dt: f64,
) -> Result<FitResult> {
    if observed.n_nodes() != 1 || observed.n_features() != 1 {
        return Err(Error::shape(
            "observed",
            format!("expected 1 node and 1 feature, got {:?}", observed.shape()),
        ));
    }
    let series = observed.series(0, 0);
    fit_series(&series, model, population, init, dt)
}

pub(crate) fn fit_series(
    series: &[f64],
    model: CompartmentalModel,
    population: f64,
    init: &CompartmentParams,
    dt: f64,
) -> Result<FitResult> {
    if series.len() < 5 {
        return Err(Error::TooShort { needed: 5, got: series.len() });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("observed", "non-finite observation"));
    }
    if series.iter().any(|&x| x < 0.0) {
        return Err(Error::param("observed", "negative observation"));
    }
    let max = series.iter().copied().fold(0.0, f64::max);
    if !(population.is_finite() && population >= max && population > 0.0) {
        return Err(Error::param(
            "population",
            format!("must be >= max observation ({max}) and > 0"),
        ));
    }
    per_unit(dt)?;
    let init = CompartmentParams { population, ..*init };
    init.validate()?;
    let dims = if model == CompartmentalModel::Seir { 3 } else { 2 };
    let start = [init.beta, init.gamma, init.sigma];
    if let Some(k) = (0..dims).find(|&k| start[k] <= 0.0) {
        return Err(Error::param(
            ["init.beta", "init.gamma", "init.sigma"][k],
            "initial rate must be > 0 for log-space fitting",
        ));
    }

    let i0 = series[0];
    let loss_of = |p: &CompartmentParams| -> f64 {
        match infected_curve(model, p, i0, series.len(), dt) {
            Ok(sim) => {
                let mse = sim.iter().zip(series).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    / series.len() as f64;
                if mse.is_finite() { mse } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let initial_loss = loss_of(&init);

    if series.iter().all(|&x| x == 0.0) {
        return Ok(FitResult {
            params: init,
            loss: initial_loss,
            initial_loss,
            evaluations: 1,
            status: FitStatus::Unidentifiable,
        });
    }

    let decode = |x: &[f64]| -> CompartmentParams {
        CompartmentParams {
            beta: x[0].exp(),
            gamma: x[1].exp(),
            sigma: if dims == 3 { x[2].exp() } else { init.sigma },
            population,
        }
    };
    let x0: Vec<f64> = start[..dims].iter().map(|r| r.ln()).collect();
    let nm = nelder_mead(|x| loss_of(&decode(x)), &x0, 0.5, MAX_EVALUATIONS);

    let (params, loss) = if nm.value <= initial_loss {
        (decode(&nm.point), nm.value)
    } else {
        (init, initial_loss)
    };
    Ok(FitResult {
        params,
        loss,
        initial_loss,
        evaluations: nm.evaluations + 1,
        status: if nm.converged { FitStatus::Converged } else { FitStatus::MaxEvaluations },
    })
}

pub(crate) struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead downhill simplex with the standard coefficients
/// (reflection 1, expansion 2, contraction ½, shrink ½).
///
/// When the simplex collapses before the budget is spent, the search is
/// restarted once around the incumbent to escape premature contraction.
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut best_point = x0.to_vec();
    let mut best_value = eval(x0, &mut evals);
    let mut converged = false;

    for restart in 0..2 {
        let origin = best_point.clone();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((origin.clone(), best_value));
        for k in 0..n {
            let mut x = origin.clone();
            x[k] += step;
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }
        converged = false;
        while evals < max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (lo, hi) = (simplex[0].1, simplex[n].1);
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            let flat = (hi - lo).abs() <= 1e-12 * (1.0 + lo.abs()) || (lo.is_infinite() && hi.is_infinite());
            if flat && size < 1e-7 {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for s in simplex.iter_mut().skip(1) {
                        let xs: Vec<f64> = s.0.iter().zip(&x0).map(|(a, b)| b + 0.5 * (a - b)).collect();
                        let fs = eval(&xs, &mut evals);
                        *s = (xs, fs);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= best_value {
            best_point = simplex[0].0.clone();
            best_value = simplex[0].1;
        }
        if !converged || evals >= max_evals || restart == 1 {
            break;
        }
    }
    Minimum {
        point: best_point,
        value: best_value,
        evaluations: evals,
        converged,
    }
}
