//! Acceptance suite. Every criterion runs at its stated tolerance and prints
//! one `PASS`/`FAIL` line; the process exits non-zero if any fails.
//!
//! Oracles here are written from scratch rather than borrowed from the
//! library's own tests.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use axum::body::Body;
use axum::http::Request;
use epikit_core::detect::{jordan_center, random_tree, rumor_centrality, si_spread, synthetic_tree_cases, Snapshot};
use epikit_core::forecast::{fit_ar, make_windows, WindowSpec};
use epikit_core::mechanistic::{
    simulate, simulate_network_sir, simulate_seir, simulate_sir, simulate_sis, CompartmentParams, CompartmentalModel,
    NetworkSirConfig,
};
use epikit_core::transforms::{seasonal_decompose, to_frequency};
use epikit_core::{Compartment, Error, FeaturePanel, SeedPolicy, StaticGraph};
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- mechanistic

fn conservation() -> Outcome {
    let n = 1000.0;
    let runs = [
        ("sir", simulate_sir(&CompartmentParams::sir(0.5, 0.1, n), 990.0, 10.0, 0.0, 100.0, 0.01)),
        ("sis", simulate_sis(&CompartmentParams::sir(0.5, 0.1, n), 990.0, 10.0, 100.0, 0.01)),
        (
            "seir",
            simulate_seir(&CompartmentParams::seir(0.5, 0.1, 0.2, n), 980.0, 10.0, 10.0, 0.0, 100.0, 0.01),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (name, tr) in runs {
        let tr = tr.map_err(|e| e.to_string())?;
        check(tr.len() == 10_001, || format!("{name}: {} frames", tr.len()))?;
        for (k, row) in tr.counts.iter().enumerate() {
            let dev = (row.iter().sum::<f64>() - n).abs();
            worst = worst.max(dev);
            check(dev <= 1e-9 * n, || format!("{name} step {k}: |sum - N| = {dev:e}"))?;
        }
    }
    Ok(format!("10000 steps x 3 models, max |sum - N| = {worst:.2e}"))
}

/// Nontrivial root of `r = N(1 − exp(−R0·r/N))` by bisection.
fn final_size_root(r0: f64, n: f64) -> f64 {
    let g = |r: f64| r - n * (1.0 - (-r0 * r / n).exp());
    // g < 0 just above 0 when R0 > 1, and g(N) > 0.
    let (mut lo, mut hi) = (1e-6 * n, n);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn final_size() -> Outcome {
    let (n, gamma) = (1000.0, 0.1);
    let mut detail = Vec::new();
    for r0 in [1.5, 2.0, 3.0] {
        let p = CompartmentParams::sir(r0 * gamma, gamma, n);
        let tr = simulate_sir(&p, n - 1.0, 1.0, 0.0, 2000.0, 0.1).map_err(|e| e.to_string())?;
        let r_inf = tr.last(Compartment::R).unwrap();
        let oracle = final_size_root(r0, n);
        let rel = (r_inf - oracle).abs() / oracle;
        check(rel <= 0.005, || format!("R0={r0}: {r_inf} vs {oracle} (rel {rel:.4})"))?;
        detail.push(format!("R0={r0}: {rel:.2e}"));
    }
    Ok(detail.join(", "))
}

fn rk4_order() -> Outcome {
    let p = CompartmentParams::seir(0.6, 0.1, 0.25, 1000.0);
    let end = |dt: f64| -> Result<Vec<f64>, String> {
        let tr = simulate(CompartmentalModel::Seir, &p, &[980.0, 10.0, 10.0, 0.0], 24.0, dt).map_err(|e| e.to_string())?;
        Ok(tr.counts.last().unwrap().clone())
    };
    // err(h) = |x_h(T) − x_{h/2}(T)|_∞
    let dts = [0.8, 0.4, 0.2, 0.1, 0.05];
    let ends: Vec<Vec<f64>> = dts.iter().map(|&h| end(h)).collect::<Result<_, _>>()?;
    let errs: Vec<f64> = (0..4)
        .map(|k| ends[k].iter().zip(&ends[k + 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    check(ratios.len() == 3, || "need three halvings".into())?;
    for (k, r) in ratios.iter().enumerate() {
        check((12.0..=20.0).contains(r), || format!("halving {k}: ratio {r:.2}, errors {errs:?}"))?;
    }
    Ok(format!("ratios {:.2} {:.2} {:.2}", ratios[0], ratios[1], ratios[2]))
}

fn mean_field() -> Outcome {
    let start = Instant::now();
    let n = 500usize;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let g = StaticGraph::from_pairs(n, &pairs).map_err(|e| e.to_string())?;
    let (beta_total, gamma, dt, steps) = (0.3, 0.1, 0.1, 1000usize);
    // Ten seeds rather than one so early stochastic extinction is rare.
    let i0 = 10usize;
    let cfg = NetworkSirConfig::new(beta_total / n as f64, gamma, dt, (0..i0).collect());
    let reps = 200u64;
    let mut mean = vec![0.0; steps + 1];
    for r in 0..reps {
        let states = simulate_network_sir(&g, &cfg, steps, SeedPolicy::new(1000 + r)).map_err(|e| e.to_string())?;
        for (t, m) in mean.iter_mut().enumerate() {
            *m += states.count(t, Compartment::I) as f64 / reps as f64;
        }
    }
    let nf = n as f64;
    let ode = simulate_sir(
        &CompartmentParams::sir(beta_total, gamma, nf),
        nf - i0 as f64,
        i0 as f64,
        0.0,
        steps as f64 * dt,
        dt,
    )
    .map_err(|e| e.to_string())?;
    check(ode.len() == steps + 1, || "time grids differ".into())?;
    let sup = mean
        .iter()
        .zip(ode.infected())
        .map(|(m, o)| (m - o).abs() / nf)
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(sup <= 0.05, || format!("sup-norm {sup:.4}"))?;
    check(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("sup |mean I - ode I|/N = {sup:.4}, {secs:.1} s"))
}

// ------------------------------------------------------------------ forecast

fn ar_recovery() -> Outcome {
    let phi = 0.8;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = SeedPolicy::new(seed).rng();
        let burn = 500;
        let mut x = 0.0;
        let mut series = Vec::with_capacity(2000);
        for k in 0..burn + 2000 {
            let e: f64 = rng.sample(StandardNormal);
            x = phi * x + e;
            if k >= burn {
                series.push(x);
            }
        }
        let m = fit_ar(&series, 1, 0).map_err(|e| e.to_string())?;
        let err = (m.coefficients[0] - phi).abs();
        worst = worst.max(err);
        check(err <= 0.05, || format!("seed {seed}: phi = {}", m.coefficients[0]))?;
    }
    Ok(format!("20 seeds, max |phi_hat - 0.8| = {worst:.4}"))
}

fn decomposition() -> Outcome {
    let period = 12;
    let series: Vec<f64> = (0..10 * period)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period as f64).sin() + 0.05 * t as f64 + 3.0)
        .collect();
    let d = seasonal_decompose(&series, period).map_err(|e| e.to_string())?;
    let interior = d.interior();
    check(!interior.is_empty(), || "empty interior".into())?;
    let sq: f64 = interior.clone().map(|t| d.residual[t].unwrap().powi(2)).sum();
    let rms = (sq / interior.len() as f64).sqrt();
    check(rms <= 1e-9, || format!("residual RMS {rms:e}"))?;
    Ok(format!("interior {}..{}, residual RMS {rms:.2e}", interior.start, interior.end))
}

/// Signal energy recovered from a one-sided magnitude spectrum: bins other
/// than DC and (for even T) Nyquist stand for a conjugate pair.
fn one_sided_energy(mags: &[f64], t: usize) -> f64 {
    let mut e = 0.0;
    for (k, m) in mags.iter().enumerate() {
        let paired = k != 0 && !(t.is_multiple_of(2) && k == t / 2);
        e += if paired { 2.0 } else { 1.0 } * m * m;
    }
    e / t as f64
}

fn parseval() -> Outcome {
    let mut rng = SeedPolicy::new(99).rng();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let t = rng.random_range(2..=160usize);
        let n = rng.random_range(1..=4usize);
        let f = rng.random_range(1..=3usize);
        let scale = 10f64.powi(rng.random_range(-3..=3));
        let panel = FeaturePanel::from_fn(t, n, f, |_, _, _| scale * (rng.random::<f64>() * 2.0 - 1.0)).unwrap();
        let spec = to_frequency(&panel).map_err(|e| e.to_string())?;
        check(spec.n_steps() == t / 2 + 1, || format!("case {case}: {} bins", spec.n_steps()))?;
        for v in 0..n {
            for k in 0..f {
                let energy: f64 = panel.series(v, k).iter().map(|x| x * x).sum();
                let recon = one_sided_energy(&spec.series(v, k), t);
                let rel = (energy - recon).abs() / energy;
                worst = worst.max(rel);
                check(rel <= 1e-6, || format!("case {case} (T={t}): rel error {rel:e}"))?;
            }
        }
    }
    Ok(format!("100 panels, max rel error {worst:.2e}"))
}

fn windowing() -> Outcome {
    let mut rng = SeedPolicy::new(5).rng();
    let mut checked = 0usize;
    for _ in 0..400 {
        let t = rng.random_range(1..=120usize);
        let lookback = rng.random_range(1..=40usize);
        let horizon = rng.random_range(1..=20usize);
        // Each value encodes its own step so leakage is visible.
        let panel = FeaturePanel::from_fn(t, 2, 1, |s, v, _| (s * 10 + v) as f64).unwrap();
        let spec = WindowSpec::new(lookback, horizon).map_err(|e| e.to_string())?;
        match make_windows(&panel, spec) {
            Err(Error::TooShort { .. }) if t < lookback + horizon => continue,
            Err(e) => return Err(format!("T={t} L={lookback} H={horizon}: {e}")),
            Ok(ws) => {
                let expected = t - lookback - horizon + 1;
                check(ws.len() == expected, || format!("T={t} L={lookback} H={horizon}: {} windows", ws.len()))?;
                for w in &ws {
                    let step_of = |x: f64| (x as usize) / 10;
                    let inputs: Vec<usize> = w.input.values().iter().map(|&x| step_of(x)).collect();
                    let targets: Vec<usize> = w.target.values().iter().map(|&x| step_of(x)).collect();
                    let last_in = *inputs.iter().max().unwrap();
                    let first_out = *targets.iter().min().unwrap();
                    check(last_in < first_out, || format!("window at {} leaks", w.start))?;
                    check(
                        inputs.first() == Some(&w.start) && first_out == w.start + lookback,
                        || format!("window at {} misplaced", w.start),
                    )?;
                    check(w.input.n_steps() == lookback && w.target.n_steps() == horizon, || "window size".into())?;
                }
                checked += 1;
            }
        }
    }
    check(checked > 100, || format!("only {checked} feasible configurations"))?;
    Ok(format!("{checked} feasible (T, L, H) triples"))
}

// -------------------------------------------------------------------- detect

/// Infection orders starting at each node: every permutation of the
/// infected set with the candidate first, kept if each node touches an
/// earlier one.
fn rumor_brute_force(s: &Snapshot) -> Vec<f64> {
    let nodes = s.infected().to_vec();
    let g = s.graph();
    let adjacent = |a: usize, b: usize| g.neighbors(a).any(|(x, _)| x == b);
    let mut counts = vec![0.0; g.n_nodes()];
    let mut perm = nodes.clone();
    permute(&mut perm, 0, &mut |p| {
        let valid = (1..p.len()).all(|i| p[..i].iter().any(|&u| adjacent(u, p[i])));
        if valid {
            counts[p[0]] += 1.0;
        }
    });
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

fn permute(a: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == a.len() {
        f(a);
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permute(a, k + 1, f);
        a.swap(k, i);
    }
}

/// Eccentricity by BFS from every infected node inside the infected set.
fn jordan_brute_force(s: &Snapshot) -> Vec<f64> {
    let g = s.graph();
    let inside: Vec<bool> = (0..g.n_nodes()).map(|v| s.infected().contains(&v)).collect();
    let ecc = |src: usize| {
        let mut dist = vec![usize::MAX; g.n_nodes()];
        dist[src] = 0;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for (w, _) in g.neighbors(u) {
                if inside[w] && dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        s.infected().iter().map(|&v| dist[v]).max().unwrap()
    };
    let e: Vec<(usize, usize)> = s.infected().iter().map(|&v| (v, ecc(v))).collect();
    let best = e.iter().map(|x| x.1).min().unwrap();
    let winners = e.iter().filter(|x| x.1 == best).count() as f64;
    let mut p = vec![0.0; g.n_nodes()];
    for (v, d) in e {
        if d == best {
            p[v] = 1.0 / winners;
        }
    }
    p
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

fn source_detection() -> Outcome {
    // Rumor centrality against permutation counts: 200 trees with n <= 8.
    // Even cases infect a whole tree, odd ones a connected subtree of a
    // larger tree.
    for case in 0..200u64 {
        let k = 1 + (case as usize % 8);
        let seed = SeedPolicy::new(case);
        let (tree, infected) = if case % 2 == 0 {
            (random_tree(k, seed).unwrap(), (0..k).collect())
        } else {
            let t = random_tree(k + 5, seed).unwrap();
            let src = (case as usize * 7) % (k + 5);
            let inf = si_spread(&t, src, k, seed.child(1));
            (t, inf)
        };
        let s = Snapshot::new(tree, infected, None).map_err(|e| e.to_string())?;
        let got = rumor_centrality(&s).map_err(|e| e.to_string())?.probs;
        check(close(&got, &rumor_brute_force(&s)), || format!("rumor mismatch on tree case {case}"))?;
    }

    // Jordan center against BFS eccentricities: 500 connected graphs, n <= 12.
    let mut rng = SeedPolicy::new(3).rng();
    for case in 0..500u64 {
        let n = rng.random_range(1..=12usize);
        let tree = random_tree(n, SeedPolicy::new(10_000 + case)).unwrap();
        let mut pairs: Vec<(usize, usize)> = tree.edges().iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
        for _ in 0..rng.random_range(0..=n) {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            let e = (u.min(v), u.max(v));
            if u != v && !pairs.contains(&e) {
                pairs.push(e);
            }
        }
        pairs.shuffle(&mut rng);
        let g = StaticGraph::from_pairs(n, &pairs).unwrap();
        let s = Snapshot::new(g, (0..n).collect(), None).map_err(|e| e.to_string())?;
        let got = jordan_center(&s).map_err(|e| e.to_string())?.probs;
        check(close(&got, &jordan_brute_force(&s)), || format!("jordan mismatch on graph case {case}"))?;
    }

    // Tree harness: top-1 must beat guessing uniformly among the infected.
    // The margin is about one point, so enough cases to keep the standard
    // error well below it.
    let cases = synthetic_tree_cases(3000, 15, 10, SeedPolicy::new(7)).map_err(|e| e.to_string())?;
    let mut hits = 0.0;
    let mut baseline = 0.0;
    for c in &cases {
        hits += rumor_centrality(&c.snapshot).map_err(|e| e.to_string())?.top_k(c.true_source, 1);
        baseline += 1.0 / c.snapshot.infected().len() as f64;
    }
    let (top1, base) = (hits / cases.len() as f64, baseline / cases.len() as f64);
    check(top1 > base, || format!("top-1 {top1:.4} <= baseline {base:.4}"))?;
    Ok(format!("200 trees, 500 graphs exact; 3000-case harness top-1 {top1:.4} > {base:.4}"))
}

// ---------------------------------------------------------------- end to end

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_epikit"))
        .args(args)
        .env_remove("EPIKIT_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let forecast = ["forecast", "--data", "toy", "--model", "ar", "--lookback", "12", "--horizon", "3", "--seed", "7"];
    let detect = ["detect", "--cases", "synthetic-trees", "--detector", "rumor", "--seed", "7"];
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("sim{k}.json"));
        let csv = dir.path().join(format!("sim{k}.csv"));
        let simulate = [
            "simulate", "sir", "--beta", "0.3", "--gamma", "0.1", "--n", "1000", "--i0", "1", "--horizon", "160", "--dt", "0.1",
            "--seed", "7", "--out", out.to_str().unwrap(), "--emit-curve", csv.to_str().unwrap(),
        ];
        let net_out = dir.path().join(format!("net{k}.json"));
        let network = ["simulate", "network-sir", "--seed", "7", "--out", net_out.to_str().unwrap()];
        runs.push(vec![
            run_cli(&forecast)?,
            run_cli(&detect)?,
            run_cli(&simulate)?,
            std::fs::read(&out).map_err(|e| e.to_string())?,
            std::fs::read(&csv).map_err(|e| e.to_string())?,
            run_cli(&network)?,
            std::fs::read(&net_out).map_err(|e| e.to_string())?,
        ]);
    }
    let names = ["forecast report", "detect report", "simulate report", "dataset", "curve", "network report", "network dataset"];
    for (i, name) in names.iter().enumerate() {
        check(runs[0][i] == runs[1][i], || format!("{name} differs between runs"))?;
        check(!runs[0][i].is_empty(), || format!("{name} is empty"))?;
    }
    Ok("forecast, detect and simulate outputs byte-identical".into())
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> Result<Value, String> {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .map_err(|e| e.to_string())?;
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    if !status.is_success() {
        return Err(format!("{method} {uri}: {status} {}", String::from_utf8_lossy(&bytes)));
    }
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

async fn replay() -> Outcome {
    let app = epikit_service::router();
    let created = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({
            "random_graph": {"nodes": 120, "edge_prob": 0.04},
            "config": {"beta": 0.5, "gamma": 0.08, "dt": 1.0, "initial_infected": [0, 1, 2]},
            "seed": 2024
        })),
    )
    .await?;
    let id = created["id"].as_str().unwrap();
    let script = [
        ("step", json!({"k": 4})),
        ("intervene", json!({"action": "vaccinate", "node": 10})),
        ("intervene", json!({"action": "quarantine", "node": 1})),
        ("step", json!({"k": 1})),
        ("step", json!({"k": 7})),
        ("intervene", json!({"action": "vaccinate", "node": 10})),
        ("intervene", json!({"action": "quarantine", "node": 50})),
        ("step", json!({"k": 30})),
    ];
    for (op, body) in &script {
        call(&app, "POST", &format!("/sessions/{id}/{op}"), Some(body.clone())).await?;
    }
    let original = call(&app, "GET", &format!("/sessions/{id}/history"), None).await?;
    let log = call(&app, "GET", &format!("/sessions/{id}/log"), None).await?;

    let fresh = epikit_service::router();
    let again = call(&fresh, "POST", "/sessions", Some(log["create"].clone())).await?;
    let rid = again["id"].as_str().unwrap();
    for cmd in log["commands"].as_array().unwrap() {
        let mut body = cmd.clone();
        let op = body.as_object_mut().unwrap().remove("op").unwrap();
        let path = if op == "step" { "step" } else { "intervene" };
        call(&fresh, "POST", &format!("/sessions/{rid}/{path}"), Some(body)).await?;
    }
    let replayed = call(&fresh, "GET", &format!("/sessions/{rid}/history"), None).await?;
    let frames = original["frames"].as_array().map_or(0, Vec::len);
    check(frames > 1, || "history did not advance".into())?;
    check(replayed == original, || "replayed history differs".into())?;
    Ok(format!("{} commands, {frames} frames identical", log["commands"].as_array().unwrap().len()))
}

fn replay_determinism() -> Outcome {
    tokio::runtime::Runtime::new().map_err(|e| e.to_string())?.block_on(replay())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("conservation over 10k RK4 steps", conservation),
        ("final size vs bisection root", final_size),
        ("RK4 fourth-order convergence", rk4_order),
        ("NetworkSIR mean-field agreement on K500", mean_field),
        ("AR(1) coefficient recovery", ar_recovery),
        ("seasonal decomposition residual", decomposition),
        ("Parseval energy identity", parseval),
        ("source detection oracles", source_detection),
        ("windowing arithmetic and leakage", windowing),
        ("CLI end-to-end determinism", cli_determinism),
        ("session replay determinism", replay_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{secs:.2}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.2}s]: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
