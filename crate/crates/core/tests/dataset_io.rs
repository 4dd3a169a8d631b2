use epikit_core::io::{load_dataset, save_dataset, DatasetFile};
use epikit_core::mechanistic::{simulate_network_sir, NetworkSirConfig};
use epikit_core::simulate::random_graph;
use epikit_core::tasks::toy_dataset_file;
use epikit_core::{EpiDataset, Error, FeaturePanel, SeedPolicy, SplitFractions};
use proptest::prelude::*;
use rand::Rng;
use sha2::{Digest, Sha256};

fn random_dataset(seed: u64, t: usize, n: usize, f: usize) -> EpiDataset {
    let mut rng = SeedPolicy::new(seed).rng();
    let panel = FeaturePanel::from_fn(t, n, f, |_, _, _| rng.random::<f64>() * 1e3 - 17.0).unwrap();
    let g = random_graph(n, 0.3, SeedPolicy::new(seed + 1)).unwrap();
    let states = simulate_network_sir(&g, &NetworkSirConfig::new(0.4, 0.2, 1.0, vec![0]), t - 1, SeedPolicy::new(seed)).unwrap();
    EpiDataset::new(panel, Some(states), Some(g), None, SplitFractions::new(0.6, 0.2).unwrap()).unwrap()
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.json");
    let ds = random_dataset(3, 12, 6, 2);
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
}

#[test]
fn toy_file_round_trips_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.json");
    let file = toy_dataset_file(7);
    file.save(&path).unwrap();
    let back = DatasetFile::load(&path).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.metadata["name"], "toy");
}

#[test]
fn graph_size_mismatch_names_the_field() {
    let text = r#"{
        "version": "epikit.dataset/1",
        "panel": {"n_steps": 3, "n_nodes": 2, "n_features": 1, "values": [[[1],[2]],[[3],[4]],[[5],[6]]]},
        "static_graph": {"n_nodes": 3, "edges": [[0, 1, 1.0]]}
    }"#;
    let e = DatasetFile::from_json(text).unwrap_err();
    assert_eq!(e.field(), Some("static_graph.n_nodes"));
}

#[test]
fn truncated_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.json");
    let json = DatasetFile::new(random_dataset(5, 8, 4, 1)).to_json();
    std::fs::write(&path, &json[..json.len() / 2]).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Parse(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(load_dataset(std::path::Path::new("/nonexistent/x.json")), Err(Error::Io(_))));
}

#[test]
fn invalid_graph_in_file_is_rejected() {
    let text = r#"{
        "version": "epikit.dataset/1",
        "panel": {"n_steps": 1, "n_nodes": 2, "n_features": 1, "values": [[[1],[2]]]},
        "static_graph": {"n_nodes": 2, "edges": [[0, 5, 1.0]]}
    }"#;
    assert!(DatasetFile::from_json(text).is_err());
}

/// Pinned on the reference platform; any change to the toy generator, the
/// random streams or the serializer shows up here.
const TOY_SHA256: &str = "e9b500c5efdd808435a727a64addea292e392a193184a0768dad61dbd160b5c4";

#[test]
fn toy_dataset_golden_checksum() {
    let bytes = toy_dataset_file(7).to_json();
    let digest = Sha256::digest(bytes.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, TOY_SHA256);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn json_round_trip(seed in 0u64..1_000_000, t in 1usize..10, n in 1usize..8, f in 1usize..4) {
        let ds = random_dataset(seed, t + 1, n, f);
        let back = DatasetFile::from_json(&DatasetFile::new(ds.clone()).to_json()).unwrap();
        prop_assert_eq!(back.dataset, ds);
    }
}
