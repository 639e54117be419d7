use std::fs;

use svsp::{ActionBounds, DatasetManifest, Error, TransitionDataset};

const MANIFEST: &str = r#"{
  "state_dim": 2,
  "action_dim": 1,
  "action_low": [-1.0],
  "action_high": [1.0],
  "episode_count": 3,
  "feature_names": ["x", "v"]
}
"#;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn golden_table_is_read_and_written_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(&dir, "manifest.json", MANIFEST);
    let data = write(&dir, "data.csv", "s0,s1,a0\n0.5,-0.25,0.125\n1e-3,2,-1\n\n");
    let (dataset, m) = TransitionDataset::load(&data, &manifest).unwrap();
    assert_eq!(m.episode_count, 3);
    assert_eq!(m.feature_names.as_deref(), Some(&["x".to_string(), "v".to_string()][..]));
    assert_eq!(dataset.len(), 2);
    assert_eq!(dataset.state(1), &[0.001, 2.0]);
    assert_eq!(dataset.action(1), &[-1.0]);

    let out = dir.path().join("out.csv");
    dataset.save(&out).unwrap();
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "s0,s1,a0\n\
         5.0000000000000000e-1,-2.5000000000000000e-1,1.2500000000000000e-1\n\
         1.0000000000000000e-3,2.0000000000000000e0,-1.0000000000000000e0\n"
    );
}

#[test]
fn awkward_values_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let states = vec![0.1, 1.0 / 3.0, -2.2250738585072014e-308, 123456789.12345679, 5e-324, -0.0];
    let actions = vec![std::f64::consts::PI / 4.0, -0.7, 1e-17];
    let dataset = TransitionDataset::new(states, actions, 2, ActionBounds::symmetric(1, 1.0)).unwrap();
    let manifest = DatasetManifest {
        state_dim: 2,
        action_dim: 1,
        action_low: vec![-1.0],
        action_high: vec![1.0],
        episode_count: 1,
        feature_names: None,
        action_names: Some(vec!["u".into()]),
    };
    let (data_path, manifest_path) = (dir.path().join("d.csv"), dir.path().join("m.json"));
    dataset.save(&data_path).unwrap();
    manifest.save(&manifest_path).unwrap();
    let (again, m) = TransitionDataset::load(&data_path, &manifest_path).unwrap();
    assert_eq!(m, manifest);
    for row in 0..3 {
        for (a, b) in dataset.state(row).iter().zip(again.state(row)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(dataset.action(row)[0].to_bits(), again.action(row)[0].to_bits());
    }
}

#[test]
fn errors_name_the_file_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(&dir, "manifest.json", MANIFEST);
    let data = write(&dir, "bad.csv", "s0,s1,a0\n0,0,0\n0,oops,0\n");
    match TransitionDataset::load(&data, &manifest) {
        Err(e @ Error::Row { row: 3, .. }) => {
            let text = e.to_string();
            assert!(text.contains("bad.csv") && text.contains("oops"), "{text}");
        }
        other => panic!("{other:?}"),
    }
    let wrong_header = write(&dir, "hdr.csv", "s0,a0\n0,0\n");
    assert!(TransitionDataset::load(&wrong_header, &manifest).is_err());
    let missing = dir.path().join("nope.csv");
    let err = TransitionDataset::load(&missing, &manifest).unwrap_err();
    assert!(err.to_string().contains("nope.csv"));
    let bad_manifest = write(&dir, "m2.json", r#"{"state_dim":2,"action_dim":1,"action_low":[1],"action_high":[-1]}"#);
    assert!(DatasetManifest::load(&bad_manifest).is_err());
}

#[test]
fn out_of_bounds_actions_are_clamped_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(&dir, "manifest.json", MANIFEST);
    let data = write(&dir, "data.csv", "s0,s1,a0\n0,0,3.5\n0,0,-9\n");
    let (dataset, _) = TransitionDataset::load(&data, &manifest).unwrap();
    assert_eq!(dataset.action(0), &[1.0]);
    assert_eq!(dataset.action(1), &[-1.0]);
}
