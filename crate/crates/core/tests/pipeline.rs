use std::fs;

use numerosity::experiments::{build_dataset, ConfusionMatrix, DatasetKind, ExperimentConfig};
use numerosity::morpho::{Engine, HolePolicy, KernelBank};
use numerosity::neuralnet::{load_params, save_params, Network, NetworkSpec};
use numerosity::par::Exec;
use numerosity::stimulus::{read_dataset, write_dataset, Representation};
use numerosity::Error;
use tempfile::TempDir;

#[test]
fn datasets_round_trip_and_match_their_labels() {
    let cfg = ExperimentConfig::default().stimulus;
    let engine = Engine::new(KernelBank::default(), HolePolicy::Fill);
    let dir = TempDir::new().unwrap();
    for kind in [DatasetKind::Baseline, DatasetKind::Mixed, DatasetKind::Exp3] {
        let manifest = build_dataset(kind, 60, &cfg, 11, Exec::default()).unwrap();
        let path = dir.path().join(kind.to_string());
        let written = write_dataset(&manifest, &path, Exec::default()).unwrap();
        let back = read_dataset(&path, Exec::default()).unwrap();
        assert_eq!(back.manifest, written);
        assert_eq!(back.images, manifest.render_all(Exec::Sequential).unwrap());
        assert_eq!(manifest.representation, Representation::Region);

        let perceived = engine.subitize_batch(
            &back
                .images
                .iter()
                .map(numerosity::morpho::normalize_polarity)
                .collect::<Vec<_>>(),
            Exec::default(),
        );
        let pairs = back
            .manifest
            .labels()
            .into_iter()
            .zip(perceived)
            .map(|(n, m)| (n as usize, m.unwrap()));
        let m = ConfusionMatrix::from_pairs(pairs).unwrap();
        assert_eq!(m.mean_accuracy(), 1.0, "{kind}");
    }
}

#[test]
fn corrupted_dataset_is_rejected() {
    let cfg = ExperimentConfig::default().stimulus;
    let dir = TempDir::new().unwrap();
    let manifest = build_dataset(DatasetKind::Exp4, 12, &cfg, 3, Exec::default()).unwrap();
    let written = write_dataset(&manifest, dir.path(), Exec::default()).unwrap();
    let victim = dir.path().join(&written.entries[5].file);
    let mut bytes = fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    fs::write(&victim, bytes).unwrap();
    let err = read_dataset(dir.path(), Exec::default()).unwrap_err();
    assert!(matches!(err, Error::ManifestCorrupt(_)), "{err}");
}

#[test]
fn checkpoints_reload_bit_exact() {
    let dir = TempDir::new().unwrap();
    let spec = NetworkSpec::count_classifier(32, 9);
    let net = Network::<f32>::new(spec.clone()).unwrap();
    let path = dir.path().join("model.params");
    save_params(&net, &path).unwrap();
    let back: Network<f32> = load_params(&spec, &path).unwrap();
    assert_eq!(back.flat_params(), net.flat_params());

    let x: Vec<f32> = (0..32 * 32).map(|i| (i % 7 == 0) as u8 as f32).collect();
    let p = back.forward_one(&x).unwrap();
    assert_eq!(p, net.forward_one(&x).unwrap());
    assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);

    let other = NetworkSpec::count_classifier(32, 10);
    assert!(load_params::<f32>(&other, &path).is_ok());
    let wrong = NetworkSpec::counting_head(32, 16, 9);
    assert!(load_params::<f32>(&wrong, &path).is_err());
}
