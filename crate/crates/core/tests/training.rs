use qamoe_core::degradation::compute_reference_stats;
use qamoe_core::evaluation::evaluate;
use qamoe_core::synthdata::generate;
use qamoe_core::training::{train, LossReport};
use qamoe_core::{DatasetSpec, DegradationSpec, Error, ModelConfig, TrainConfig, TrainMode};

fn small_spec(n_train: usize) -> DatasetSpec {
    DatasetSpec {
        n_train,
        n_val: 16,
        n_test: 16,
        ..DatasetSpec::default()
    }
}

#[test]
fn one_epoch_is_deterministic() {
    let ds = generate(&small_spec(32)).unwrap();
    let mcfg = ModelConfig::for_dataset(&ds.spec);
    let tcfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let a = train(&ds, &mcfg, &tcfg).unwrap();
    let b = train(&ds, &mcfg, &tcfg).unwrap();
    assert_eq!(a.checkpoint.encode(), b.checkpoint.encode());
    assert_eq!(a.report, b.report);

    let c = train(&ds, &mcfg, &TrainConfig { seed: 7, ..tcfg }).unwrap();
    assert_ne!(a.checkpoint.fingerprint(), c.checkpoint.fingerprint());
}

#[test]
fn clean_mode_never_degrades() {
    let ds = generate(&small_spec(32)).unwrap();
    let mcfg = ModelConfig::for_dataset(&ds.spec);
    let out = train(
        &ds,
        &mcfg,
        &TrainConfig {
            epochs: 2,
            mode: TrainMode::Clean,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(out.report.degradation_calls, 0);
    assert!(out
        .report
        .epochs
        .iter()
        .all(|e| e.lambda_mean == 0.0 && e.eta_mean == 0.0));

    let out = train(
        &ds,
        &mcfg,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(out.report.degradation_calls, 64);
    for e in &out.report.epochs {
        assert!((0.0..=1.0).contains(&e.lambda_mean) && (0.0..=1.0).contains(&e.eta_mean));
        assert!(e.mean_r.iter().all(|&r| r > 0.0 && r < 1.0));
    }
}

#[test]
fn spectrum_training_descends() {
    let ds = generate(&small_spec(256)).unwrap();
    let mcfg = ModelConfig::for_dataset(&ds.spec);
    let out = train(
        &ds,
        &mcfg,
        &TrainConfig {
            epochs: 6,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let e = &out.report.epochs;
    assert_eq!(e.len(), 6);
    assert!(e[5].train_loss < e[0].train_loss, "{:?}", e);
    let best = e.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(e[out.report.best_epoch].val_mae, best);
}

#[test]
fn memorizes_a_handful_of_samples() {
    let ds = generate(&DatasetSpec {
        n_train: 10,
        n_val: 10,
        n_test: 10,
        ..DatasetSpec::default()
    })
    .unwrap();
    let mcfg = ModelConfig::for_dataset(&ds.spec);
    let tcfg = TrainConfig {
        epochs: 400,
        batch_size: 10,
        learning_rate: 1e-2,
        dropout: 0.0,
        mode: TrainMode::Clean,
        ..TrainConfig::default()
    };
    let mut memorizing = ds.clone();
    memorizing.val = ds.train.clone();
    let out = train(&memorizing, &mcfg, &tcfg).unwrap();
    let stats = compute_reference_stats(&ds.train).unwrap();
    let m = evaluate(
        &out.checkpoint,
        &ds.train,
        &stats,
        &DegradationSpec::clean(0),
    )
    .unwrap();
    assert!(m.mae < 0.05, "mae {}", m.mae);
}

#[test]
fn report_csv_layout() {
    let ds = generate(&small_spec(16)).unwrap();
    let out = train(
        &ds,
        &ModelConfig::for_dataset(&ds.spec),
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let csv = out.report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], LossReport::CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(lines[2].split(',').count(), 8);
}

#[test]
fn mismatched_dims_rejected() {
    let ds = generate(&small_spec(16)).unwrap();
    let mcfg = ModelConfig {
        input_dims: [4, 4, 4],
        ..ModelConfig::for_dataset(&ds.spec)
    };
    assert!(matches!(
        train(&ds, &mcfg, &TrainConfig::default()),
        Err(Error::InvalidInput(_))
    ));
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(train(&ds, &ModelConfig::for_dataset(&ds.spec), &bad).is_err());
}
