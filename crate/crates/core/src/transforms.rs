//! Composable preprocessing for panels and graphs.

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DynamicGraph, EpiDataset, Edge, FeaturePanel, StaticGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMethod {
    #[default]
    Zscore,
    Minmax,
}

/// Z-score normalization per feature channel, with statistics taken from
/// the first `train_steps` steps (all nodes) only.
pub fn normalize_features(panel: &FeaturePanel, train_steps: usize) -> Result<FeaturePanel> {
    normalize_features_with(panel, train_steps, NormalizeMethod::Zscore)
}

/// Channels whose spread is below 1e-12 are only shifted (mean-centered
/// for z-score, min-shifted for min-max).
pub fn normalize_features_with(
    panel: &FeaturePanel,
    train_steps: usize,
    method: NormalizeMethod,
) -> Result<FeaturePanel> {
    let [t, n, f] = panel.shape();
    if t == 0 || n == 0 || f == 0 {
        return Err(Error::shape("panel", "empty panel"));
    }
    if train_steps == 0 || train_steps > t {
        return Err(Error::param(
            "train_steps",
            format!("must lie in 1..={t}, got {train_steps}"),
        ));
    }
    let count = (train_steps * n) as f64;
    let mut shift = vec![0.0; f];
    let mut scale = vec![1.0; f];
    for k in 0..f {
        let vals = (0..train_steps).flat_map(|s| (0..n).map(move |v| (s, v))).map(|(s, v)| panel.get(s, v, k));
        match method {
            NormalizeMethod::Zscore => {
                let mean = vals.clone().sum::<f64>() / count;
                let var = vals.map(|x| (x - mean) * (x - mean)).sum::<f64>() / count;
                shift[k] = mean;
                let sd = var.sqrt();
                if sd >= 1e-12 {
                    scale[k] = sd;
                }
            }
            NormalizeMethod::Minmax => {
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
                shift[k] = lo;
                if hi - lo >= 1e-12 {
                    scale[k] = hi - lo;
                }
            }
        }
    }
    FeaturePanel::from_fn(t, n, f, |s, v, k| (panel.get(s, v, k) - shift[k]) / scale[k])
}

/// Symmetric normalization with self-loops, `D^{-1/2} (A + I) D^{-1/2}`,
/// where `D` holds the row sums of `A + I`.
pub fn normalize_adjacency(g: &StaticGraph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let mut a = DMatrix::from_row_slice(n, n, &g.dense());
    for v in 0..n {
        a[(v, v)] += 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / a.row(v).sum().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

/// [`normalize_adjacency`] as a graph whose edges are the nonzero entries
/// (self-loops included).
pub fn normalized_graph(g: &StaticGraph) -> Result<StaticGraph> {
    let m = normalize_adjacency(g);
    let n = g.n_nodes();
    let mut edges = Vec::new();
    for i in 0..n {
        let from = if g.is_directed() { 0 } else { i };
        for j in from..n {
            if m[(i, j)] != 0.0 {
                edges.push(Edge::new(i, j, m[(i, j)]));
            }
        }
    }
    StaticGraph::with_self_loops(n, edges, g.is_directed())
}

/// Magnitude spectrum over the time axis for every node/feature channel.
/// The output has `⌊T/2⌋ + 1` steps (bins `0..=T/2`).
pub fn to_frequency(panel: &FeaturePanel) -> Result<FeaturePanel> {
    let [t, n, f] = panel.shape();
    if t < 2 {
        return Err(Error::TooShort { needed: 2, got: t });
    }
    let bins = t / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(t);
    let mut out = vec![0.0; bins * n * f];
    let mut buf = vec![Complex::new(0.0, 0.0); t];
    for v in 0..n {
        for k in 0..f {
            for (s, z) in buf.iter_mut().enumerate() {
                *z = Complex::new(panel.get(s, v, k), 0.0);
            }
            fft.process(&mut buf);
            for b in 0..bins {
                out[(b * n + v) * f + k] = buf[b].norm();
            }
            debug_assert!({
                let spec: Vec<f64> = (0..bins).map(|b| out[(b * n + v) * f + k]).collect();
                let energy: f64 = (0..t).map(|s| panel.get(s, v, k).powi(2)).sum();
                (spectrum_energy(&spec, t) - energy).abs() <= 1e-6 * energy.max(1e-300)
            });
        }
    }
    FeaturePanel::new(bins, n, f, out)
}

/// `Σ |X_k|² / T` over the full spectrum reconstructed from the one-sided
/// magnitudes of a length-`t` real signal. Equals the signal energy.
pub fn spectrum_energy(magnitudes: &[f64], t: usize) -> f64 {
    let mut total = 0.0;
    for (b, m) in magnitudes.iter().enumerate() {
        let mirrored = b != 0 && !(t.is_multiple_of(2) && b == t / 2);
        total += m * m * if mirrored { 2.0 } else { 1.0 };
    }
    total / t as f64
}

/// Appends `dims` sinusoidal channels: for `k < dims/2`,
/// `sin(t / base^(2k/dims))` and `cos(t / base^(2k/dims))`, identical for
/// every node.
pub fn add_time_embedding(panel: &FeaturePanel, dims: usize, period_base: f64) -> Result<FeaturePanel> {
    if dims < 2 || !dims.is_multiple_of(2) {
        return Err(Error::param("dims", format!("must be an even number >= 2, got {dims}")));
    }
    if !(period_base.is_finite() && period_base > 0.0) {
        return Err(Error::param("period_base", "must be finite and > 0"));
    }
    let [t, n, f] = panel.shape();
    FeaturePanel::from_fn(t, n, f + dims, |s, v, k| {
        if k < f {
            return panel.get(s, v, k);
        }
        let j = k - f;
        let freq = period_base.powf(-(2.0 * (j / 2) as f64) / dims as f64);
        let x = s as f64 * freq;
        if j % 2 == 0 {
            x.sin()
        } else {
            x.cos()
        }
    })
}

/// Classical additive decomposition `series = trend + seasonal + residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub period: usize,
    /// `None` at the boundary where the centered average does not fit.
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<Option<f64>>,
}

impl Decomposition {
    /// Indices where trend and residual are defined.
    pub fn interior(&self) -> std::ops::Range<usize> {
        let start = self.trend.iter().position(Option::is_some).unwrap_or(0);
        let end = self.trend.iter().rposition(Option::is_some).map_or(0, |e| e + 1);
        start..end
    }
}

/// Centered moving average of window `period`; even periods use the
/// `2 × period` half-weighted window so the average stays centered.
pub fn seasonal_decompose(series: &[f64], period: usize) -> Result<Decomposition> {
    if period < 2 {
        return Err(Error::param("period", "must be >= 2"));
    }
    let n = series.len();
    if n < 2 * period {
        return Err(Error::TooShort { needed: 2 * period, got: n });
    }
    let half = period / 2;
    let mut trend = vec![None; n];
    for (t, slot) in trend.iter_mut().enumerate().take(n - half).skip(half) {
        let avg = if period % 2 == 1 {
            series[t - half..=t + half].iter().sum::<f64>() / period as f64
        } else {
            let inner: f64 = series[t - half + 1..t + half].iter().sum();
            (inner + 0.5 * (series[t - half] + series[t + half])) / period as f64
        };
        *slot = Some(avg);
    }

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for t in 0..n {
        if let Some(tr) = trend[t] {
            sums[t % period] += series[t] - tr;
            counts[t % period] += 1;
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let center = means.iter().sum::<f64>() / period as f64;
    let pattern: Vec<f64> = means.iter().map(|m| m - center).collect();
    let seasonal: Vec<f64> = (0..n).map(|t| pattern[t % period]).collect();
    let residual = (0..n).map(|t| trend[t].map(|tr| series[t] - tr - seasonal[t])).collect();
    Ok(Decomposition {
        period,
        trend,
        seasonal,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FeatureTransform {
    Normalize {
        #[serde(default)]
        method: NormalizeMethod,
    },
    ToFrequency,
    TimeEmbedding {
        dims: usize,
        #[serde(default = "default_period_base")]
        period_base: f64,
    },
}

fn default_period_base() -> f64 {
    10_000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GraphTransform {
    NormalizeAdjacency,
}

/// Ordered feature and graph transforms.
///
/// Feature transforms run first, then graph transforms; error indices
/// count through both lists in that order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformPipeline {
    #[serde(default)]
    pub features: Vec<FeatureTransform>,
    #[serde(default)]
    pub graph: Vec<GraphTransform>,
}

impl TransformPipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feature(mut self, t: FeatureTransform) -> Self {
        self.features.push(t);
        self
    }

    pub fn graph(mut self, t: GraphTransform) -> Self {
        self.graph.push(t);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty() && self.graph.is_empty()
    }
}

fn apply_feature(t: &FeatureTransform, ds: &EpiDataset) -> Result<EpiDataset> {
    match t {
        FeatureTransform::Normalize { method } => {
            let panel = normalize_features_with(ds.panel(), ds.train_len().max(1), *method)?;
            ds.clone().with_panel(panel)
        }
        FeatureTransform::ToFrequency => {
            if ds.states().is_some() || ds.dynamic_graph().is_some() {
                return Err(Error::shape(
                    "panel.n_steps",
                    "frequency transform changes the time axis; drop states and dynamic graph first",
                ));
            }
            ds.clone().with_panel(to_frequency(ds.panel())?)
        }
        FeatureTransform::TimeEmbedding { dims, period_base } => {
            ds.clone().with_panel(add_time_embedding(ds.panel(), *dims, *period_base)?)
        }
    }
}

fn apply_graph(t: &GraphTransform, ds: &EpiDataset) -> Result<EpiDataset> {
    match t {
        GraphTransform::NormalizeAdjacency => {
            let sg = ds.static_graph().map(normalized_graph).transpose()?;
            let dg = ds
                .dynamic_graph()
                .map(|d| {
                    d.snapshots()
                        .iter()
                        .map(normalized_graph)
                        .collect::<Result<Vec<_>>>()
                        .and_then(DynamicGraph::new)
                })
                .transpose()?;
            ds.clone().with_graphs(sg, dg)
        }
    }
}

/// Runs the pipeline on a copy of `ds`.
pub fn apply_pipeline(p: &TransformPipeline, ds: &EpiDataset) -> Result<EpiDataset> {
    let mut out = ds.clone();
    for (index, t) in p.features.iter().enumerate() {
        out = apply_feature(t, &out).map_err(|e| Error::Transform {
            index,
            source: Box::new(e),
        })?;
    }
    let offset = p.features.len();
    for (k, t) in p.graph.iter().enumerate() {
        out = apply_graph(t, &out).map_err(|e| Error::Transform {
            index: offset + k,
            source: Box::new(e),
        })?;
    }
    Ok(out)
}
