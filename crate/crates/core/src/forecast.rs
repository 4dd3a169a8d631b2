//! Windowed forecasting: windowing, statistical forecasters and metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::mechanistic::fit::{fit_series, infected_curve};
use crate::mechanistic::{CompartmentParams, CompartmentalModel};
use crate::model::{EpiDataset, FeaturePanel};
use crate::par::map_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize) -> Result<Self> {
        let s = Self { lookback, horizon };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::param("lookback", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.lookback + self.horizon
    }

    /// Number of windows over a series of length `t`.
    pub fn count(&self, t: usize) -> usize {
        (t + 1).saturating_sub(self.span())
    }

    fn check_len(&self, t: usize) -> Result<()> {
        self.validate()?;
        if t < self.span() {
            return Err(Error::TooShort {
                needed: self.span(),
                got: t,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    /// Steps `start .. start + lookback`.
    pub input: FeaturePanel,
    /// Steps `start + lookback .. start + lookback + horizon`.
    pub target: FeaturePanel,
}

pub fn make_windows(panel: &FeaturePanel, spec: WindowSpec) -> Result<Vec<Window>> {
    spec.check_len(panel.n_steps())?;
    (0..spec.count(panel.n_steps()))
        .map(|start| {
            let mid = start + spec.lookback;
            Ok(Window {
                start,
                input: panel.slice_steps(start..mid)?,
                target: panel.slice_steps(mid..mid + spec.horizon)?,
            })
        })
        .collect()
}

/// `d`-th order differences.
fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// ARIMA(p, d, 0) fitted by ordinary least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    pub d: usize,
    /// `φ_1 .. φ_p`, coefficient of lag `k` at index `k − 1`.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// The design matrix was singular; coefficients are the minimum-norm
    /// pseudo-inverse solution.
    pub rank_deficient: bool,
    tail: Vec<f64>,
}

pub fn fit_ar(series: &[f64], p: usize, d: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::param("p", "must be >= 1"));
    }
    if d > 2 {
        return Err(Error::param("d", "must be 0, 1 or 2"));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("series", "non-finite value"));
    }
    let y = difference(series, d);
    if y.len() < 5 * p {
        return Err(Error::TooShort {
            needed: 5 * p + d,
            got: series.len(),
        });
    }
    let rows = y.len() - p;
    let mut a = DMatrix::zeros(rows, p + 1);
    let mut b = DMatrix::zeros(rows, 1);
    for r in 0..rows {
        let t = r + p;
        for k in 1..=p {
            a[(r, k - 1)] = y[t - k];
        }
        a[(r, p)] = 1.0;
        b[(r, 0)] = y[t];
    }
    let ls = lstsq(a, &b);
    Ok(ArModel {
        p,
        d,
        coefficients: (0..p).map(|k| ls.solution[k]).collect(),
        intercept: ls.solution[p],
        rank_deficient: ls.rank_deficient,
        tail: series[series.len() - (p + d)..].to_vec(),
    })
}

impl ArModel {
    /// Minimum history needed by [`ArModel::forecast_from`].
    pub fn min_history(&self) -> usize {
        self.p + self.d
    }

    /// Continues the training series.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        self.forecast_from(&self.tail, horizon).expect("tail has min_history values")
    }

    /// Forecasts `horizon` steps after `history` (its last `p + d` values
    /// are used), undoing the differencing.
    pub fn forecast_from(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if history.len() < self.min_history() {
            return Err(Error::TooShort {
                needed: self.min_history(),
                got: history.len(),
            });
        }
        let hist = &history[history.len() - self.min_history()..];
        // levels[k] holds the k-th differences of the history
        let mut levels: Vec<Vec<f64>> = (0..=self.d).map(|k| difference(hist, k)).collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let top = &levels[self.d];
            let mut next = self.intercept;
            for (k, phi) in self.coefficients.iter().enumerate() {
                next += phi * top[top.len() - 1 - k];
            }
            levels[self.d].push(next);
            for k in (0..self.d).rev() {
                next += *levels[k].last().unwrap();
                levels[k].push(next);
            }
            out.push(next);
        }
        Ok(out)
    }
}

/// Moving average with window `k`, edge-replicated so the output keeps the
/// input length. Even windows pad one more value at the end.
fn moving_average(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let front = ((k - 1) / 2) as isize;
    (0..n)
        .map(|t| {
            (t - front..t - front + k as isize)
                .map(|i| x[i.clamp(0, n - 1) as usize])
                .sum::<f64>()
                / k as f64
        })
        .collect()
}

/// Decomposition-plus-linear-heads forecaster: each lookback window is split
/// into a moving-average trend and a remainder, each mapped to the horizon
/// by its own linear head; the forecast is the sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeasonalModel {
    pub spec: WindowSpec,
    pub period: usize,
    /// `horizon × lookback` head applied to the trend.
    pub trend_weights: Vec<Vec<f64>>,
    /// `horizon × lookback` head applied to the remainder.
    pub remainder_weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// The inputs did not span all `lookback` directions; weights are the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

pub fn fit_trend_seasonal(series: &[f64], spec: WindowSpec, period: usize) -> Result<TrendSeasonalModel> {
    spec.check_len(series.len())?;
    if period < 2 {
        return Err(Error::param("period", "must be >= 2"));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("series", "non-finite value"));
    }
    let (l, h) = (spec.lookback, spec.horizon);
    let rows = spec.count(series.len());
    let mut a = DMatrix::zeros(rows, 2 * l + 1);
    let mut b = DMatrix::zeros(rows, h);
    for r in 0..rows {
        let input = &series[r..r + l];
        let trend = moving_average(input, period);
        for j in 0..l {
            a[(r, j)] = trend[j];
            a[(r, l + j)] = input[j] - trend[j];
        }
        a[(r, 2 * l)] = 1.0;
        for j in 0..h {
            b[(r, j)] = series[r + l + j];
        }
    }
    let ls = lstsq(a, &b);
    let w = &ls.solution;
    Ok(TrendSeasonalModel {
        spec,
        period,
        trend_weights: (0..h).map(|j| (0..l).map(|i| w[(i, j)]).collect()).collect(),
        remainder_weights: (0..h).map(|j| (0..l).map(|i| w[(l + i, j)]).collect()).collect(),
        bias: (0..h).map(|j| w[(2 * l, j)]).collect(),
        // trend and remainder sum to the input, so full rank is lookback + 1
        rank_deficient: ls.rank < l + 1,
    })
}

impl TrendSeasonalModel {
    /// Forecast from the last `lookback` values of `history`.
    pub fn forecast_from(&self, history: &[f64]) -> Result<Vec<f64>> {
        let l = self.spec.lookback;
        if history.len() < l {
            return Err(Error::TooShort {
                needed: l,
                got: history.len(),
            });
        }
        let input = &history[history.len() - l..];
        let trend = moving_average(input, self.period);
        Ok((0..self.spec.horizon)
            .map(|j| {
                let mut y = self.bias[j];
                for i in 0..l {
                    y += self.trend_weights[j][i] * trend[i] + self.remainder_weights[j][i] * (input[i] - trend[i]);
                }
                y
            })
            .collect())
    }
}

/// Fits SIR rates to the observed infectious series (unit spacing) and
/// continues the fitted curve for `horizon` steps.
pub fn forecast_mechanistic(observed: &[f64], population: f64, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let dt = MECHANISTIC_DT;
    let fit = fit_series(observed, CompartmentalModel::Sir, population, &MECHANISTIC_INIT, dt)?;
    let len = observed.len() + horizon;
    let curve = infected_curve(CompartmentalModel::Sir, &fit.params, observed[0], len, dt)?;
    Ok(curve[observed.len()..].to_vec())
}

const MECHANISTIC_DT: f64 = 0.1;
const MECHANISTIC_INIT: CompartmentParams = CompartmentParams {
    beta: 0.3,
    gamma: 0.1,
    sigma: 0.0,
    population: 1.0,
};

/// Forecaster selection for [`evaluate_forecaster`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ForecastModel {
    /// Repeats the last observed value.
    Persistence,
    /// Repeats the lookback mean.
    Mean,
    Ar { p: usize, d: usize },
    TrendSeasonal { period: usize },
    /// SIR fitted on each lookback window.
    Sir { population: f64 },
}

impl ForecastModel {
    pub const NAMES: [&'static str; 5] = ["persistence", "mean", "ar", "trend-seasonal", "sir"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Persistence => "persistence",
            Self::Mean => "mean",
            Self::Ar { .. } => "ar",
            Self::TrendSeasonal { .. } => "trend-seasonal",
            Self::Sir { .. } => "sir",
        }
    }
}

enum Fitted {
    Persistence,
    Mean,
    Ar(ArModel),
    TrendSeasonal(TrendSeasonalModel),
    Sir(f64),
}

impl Fitted {
    fn fit(model: &ForecastModel, train: &[f64], spec: WindowSpec) -> Result<Self> {
        Ok(match *model {
            ForecastModel::Persistence => Self::Persistence,
            ForecastModel::Mean => Self::Mean,
            ForecastModel::Ar { p, d } => {
                if spec.lookback < p + d {
                    return Err(Error::param("lookback", format!("AR({p}, d={d}) needs lookback >= {}", p + d)));
                }
                Self::Ar(fit_ar(train, p, d)?)
            }
            ForecastModel::TrendSeasonal { period } => Self::TrendSeasonal(fit_trend_seasonal(train, spec, period)?),
            ForecastModel::Sir { population } => {
                if spec.lookback < 5 {
                    return Err(Error::param("lookback", "SIR fitting needs lookback >= 5"));
                }
                Self::Sir(population)
            }
        })
    }

    fn rank_deficient(&self) -> bool {
        match self {
            Self::Ar(m) => m.rank_deficient,
            Self::TrendSeasonal(m) => m.rank_deficient,
            _ => false,
        }
    }

    fn predict(&self, input: &[f64], horizon: usize) -> Result<Vec<f64>> {
        match self {
            Self::Persistence => Ok(vec![*input.last().unwrap(); horizon]),
            Self::Mean => Ok(vec![input.iter().sum::<f64>() / input.len() as f64; horizon]),
            Self::Ar(m) => m.forecast_from(input, horizon),
            Self::TrendSeasonal(m) => m.forecast_from(input),
            Self::Sir(population) => forecast_mechanistic(input, *population, horizon),
        }
    }
}

/// Error summary over a set of (prediction, truth) points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target is zero.
    pub mape: Option<f64>,
    /// Points left out of MAPE because the target is zero.
    pub mape_excluded: usize,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    abs: f64,
    sq: f64,
    ape: f64,
    n: usize,
    n_ape: usize,
}

impl Accumulator {
    fn add(&mut self, pred: f64, truth: f64) {
        let e = pred - truth;
        self.abs += e.abs();
        self.sq += e * e;
        self.n += 1;
        if truth != 0.0 {
            self.ape += e.abs() / truth.abs();
            self.n_ape += 1;
        }
    }

    fn finish(&self) -> Metrics {
        let n = self.n.max(1) as f64;
        let mae = self.abs / n;
        Metrics {
            mae,
            // guards the last-ulp case where sqrt rounds below the mean
            rmse: (self.sq / n).sqrt().max(mae),
            mape: (self.n_ape > 0).then(|| self.ape / self.n_ape as f64),
            mape_excluded: self.n - self.n_ape,
            n_points: self.n,
        }
    }
}

pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::shape("pred", "prediction and truth lengths differ"));
    }
    if pred.is_empty() {
        return Err(Error::shape("truth", "no points"));
    }
    let mut acc = Accumulator::default();
    for (&p, &t) in pred.iter().zip(truth) {
        acc.add(p, t);
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    #[serde(flatten)]
    pub overall: Metrics,
    /// Metrics for horizon step 1, 2, ...
    pub per_horizon_step: Vec<Metrics>,
    pub n_windows: usize,
    pub n_nodes: usize,
    /// Nodes whose fit fell back to the pseudo-inverse.
    pub rank_deficient_fits: usize,
}

/// Fits `model` per node on the training segment of `feature` and scores
/// it on every window lying entirely inside the test segment.
pub fn evaluate_forecaster(
    model: &ForecastModel,
    ds: &EpiDataset,
    spec: WindowSpec,
    feature: usize,
) -> Result<ForecastReport> {
    spec.validate()?;
    let panel = ds.panel();
    if feature >= panel.n_features() {
        return Err(Error::param(
            "feature",
            format!("index {feature} out of range for {} features", panel.n_features()),
        ));
    }
    let (train_end, test_start) = ds.split().boundaries(ds.n_steps());
    let test_len = ds.n_steps() - test_start;
    let n_windows = spec.count(test_len);
    if n_windows == 0 || train_end == 0 {
        return Err(Error::NoWindows(format!(
            "test segment has {test_len} steps, window needs {}",
            spec.span()
        )));
    }
    let n = panel.n_nodes();
    // (rank deficient, per window the (prediction, truth) pairs)
    type NodeResult = (bool, Vec<Vec<(f64, f64)>>);
    let per_node = map_range(n, |v| -> Result<NodeResult> {
        let series = panel.series(v, feature);
        let fitted = Fitted::fit(model, &series[..train_end], spec)?;
        let mut windows = Vec::with_capacity(n_windows);
        for w in 0..n_windows {
            let start = test_start + w;
            let mid = start + spec.lookback;
            let pred = fitted.predict(&series[start..mid], spec.horizon)?;
            windows.push(pred.into_iter().zip(series[mid..mid + spec.horizon].iter().copied()).collect());
        }
        Ok((fitted.rank_deficient(), windows))
    });

    let mut overall = Accumulator::default();
    let mut steps = vec![Accumulator::default(); spec.horizon];
    let mut deficient = 0;
    for node in per_node {
        let (flag, windows) = node?;
        deficient += flag as usize;
        for w in windows {
            for (j, (p, t)) in w.into_iter().enumerate() {
                overall.add(p, t);
                steps[j].add(p, t);
            }
        }
    }
    Ok(ForecastReport {
        overall: overall.finish(),
        per_horizon_step: steps.iter().map(Accumulator::finish).collect(),
        n_windows,
        n_nodes: n,
        rank_deficient_fits: deficient,
    })
}
