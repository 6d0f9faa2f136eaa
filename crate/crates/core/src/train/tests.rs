use super::*;
use crate::data::{generate_synthetic, Dataset, SyntheticConfig};
use crate::Error;

fn data(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticConfig {
        n_users: n,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn small(variant: Variant) -> RunConfig {
    RunConfig {
        epochs: 2,
        batch_size: 64,
        variant,
        ..RunConfig::default()
    }
}

#[test]
fn split_is_seeded_and_near_fraction() {
    let a = split_rows(10_000, 3, 0.1);
    assert_eq!(a, split_rows(10_000, 3, 0.1));
    assert_ne!(a, split_rows(10_000, 4, 0.1));
    assert_eq!(a.train.len() + a.validation.len(), 10_000);
    let frac = a.validation.len() as f64 / 10_000.0;
    assert!((frac - 0.1).abs() < 0.01, "{frac}");
}

#[test]
fn two_runs_are_bit_identical() {
    let d = data(600, 1);
    let a = train(&small(Variant::Odmn), &d).unwrap();
    let b = train(&small(Variant::Odmn), &d).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.log.len(), 2);
    assert!(a
        .log
        .iter()
        .all(|l| l.train.total.is_finite() && l.train.calibration >= 0.0));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let d = data(600, 2);
    let mut config = small(Variant::Odmn);
    config.epochs = 3;
    let full = train(&config, &d).unwrap();

    let mut partial = Trainer::new(&config, &d, None).unwrap();
    partial.train_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    partial.checkpoint().save(&path).unwrap();
    let mut resumed = Trainer::resume(&Checkpoint::load(&path).unwrap(), &d).unwrap();
    resumed.train().unwrap();
    assert_eq!(resumed.checkpoint(), full);
}

#[test]
fn evaluation_survives_save_and_load() {
    let d = data(500, 3);
    let ckpt = train(&small(Variant::Sm), &d).unwrap();
    let before = evaluate(&ckpt, &d).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    ckpt.save(&path).unwrap();
    let after = evaluate(&Checkpoint::load(&path).unwrap(), &d).unwrap();
    assert_eq!(before, after);
    assert_eq!(before.tasks.len(), 4);
    assert_eq!(before.violation_rate_pairs.len(), 3);
}

#[test]
fn mismatched_schema_or_tampered_checkpoint_is_refused() {
    let d = data(400, 4);
    let mut ckpt = train(&small(Variant::S), &d).unwrap();
    let mut other = d.clone();
    other.schema.horizons = vec![30, 90, 180, 366];
    match evaluate(&ckpt, &other) {
        Err(Error::HashMismatch {
            what: "schema",
            expected,
            found,
        }) => assert_ne!(expected, found),
        other => panic!("expected schema mismatch, got {other:?}"),
    }
    ckpt.scheme.tasks[0].sub_dists[0].buckets[0].max += 1.0;
    assert!(matches!(
        evaluate(&ckpt, &d),
        Err(Error::HashMismatch { what: "scheme", .. })
    ));
}

#[test]
fn single_task_variants_model_the_longest_horizon() {
    let d = data(400, 5);
    for v in [Variant::Nm, Variant::Nmb, Variant::Nmo, Variant::Mdme] {
        let ckpt = train(&small(v), &d).unwrap();
        assert_eq!(ckpt.tasks, vec![3]);
        let report = evaluate(&ckpt, &d).unwrap();
        assert_eq!(report.tasks[0].horizon, 365);
        assert!(report.violation_rate_pairs.is_empty());
        let parts = ckpt.log[0].train;
        assert_eq!(parts.dist_ordinal != 0.0, v.flags().distillation, "{v}");
        assert_eq!(parts.bias != 0.0, v.flags().bias_tower, "{v}");
    }
}

#[test]
fn midpoint_decode_without_bias_tower() {
    let d = data(400, 6);
    let ckpt = train(&small(Variant::Nm), &d).unwrap();
    let model = TrainedModel::from_checkpoint(&ckpt).unwrap();
    let pred = model.predict(&d).unwrap();
    let mids: Vec<f64> = model.scheme.tasks[0]
        .buckets()
        .map(|b| b.midpoint())
        .collect();
    assert!(pred.iter().all(|r| mids.contains(&r[0])));
}

#[test]
fn baseline_fits_a_constant_label() {
    let mut d = data(600, 7);
    for r in &mut d.rows {
        r.labels = vec![5.0; 4];
    }
    let config = RunConfig {
        epochs: 30,
        batch_size: 64,
        ..RunConfig::default()
    };
    let a = train_baseline(&config, &d).unwrap();
    assert_eq!(a, train_baseline(&config, &d).unwrap());
    let report = evaluate(&a, &d).unwrap();
    for t in &report.tasks {
        assert!(t.nmae < 0.02, "nmae {}", t.nmae);
    }
}

#[test]
fn startup_errors_precede_training() {
    let d = data(50, 8);
    let bad = RunConfig {
        buckets: vec![Default::default(), Default::default()],
        ..small(Variant::Odmn)
    };
    assert!(matches!(
        Trainer::new(&bad, &d, None),
        Err(Error::Config(_))
    ));
    let wrong_scheme =
        crate::codec::BucketingScheme::fit(&[vec![0.0, 1.0, 2.0]], &[Default::default()])
            .unwrap()
            .0;
    assert!(Trainer::new(&small(Variant::Odmn), &d, Some(wrong_scheme)).is_err());
}
