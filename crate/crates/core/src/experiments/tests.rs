use super::*;
use crate::io::read_csv;
use crate::seedopt::ConfigSeedOpt;

fn tiny_models(seed: u64) -> ModelPair {
    ModelPair {
        sparse: init_net(Stage::SparseStructure, 16, seed),
        slat: init_net(Stage::StructuredLatent, 16, seed),
    }
}

fn fast_seedopt() -> ConfigSeedOpt {
    ConfigSeedOpt {
        t_opt: 3,
        sampling_steps: 4,
        ..ConfigSeedOpt::default()
    }
}

fn small_bench(assets: usize) -> BenchConfig {
    BenchConfig {
        assets,
        seed: 11,
        seedopt: fast_seedopt(),
        baseline: crate::baselines::BaselineConfig {
            steps: 4,
            repaint_resamples: 2,
            ..Default::default()
        },
        ..BenchConfig::default()
    }
}

#[test]
fn median_and_mean_skip_nan() {
    assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    assert!(median(&[f64::NAN]).is_nan());
    assert_eq!(finite_mean(&[1.0, f64::NAN, 3.0]), 2.0);
    assert!(finite_mean(&[]).is_nan());
}

#[test]
fn bench_items_are_prefix_stable() {
    let short = bench_items(&small_bench(3)).unwrap();
    let long = bench_items(&small_bench(6)).unwrap();
    for (a, b) in short.iter().zip(&long) {
        assert_eq!(a.record, b.record);
        assert_eq!(a.run_seed, b.run_seed);
        assert_eq!(a.mask, b.mask);
    }
    for it in &long {
        assert!(it.asset.occupied_positions().iter().any(|p| it.mask.is_preserved(*p)));
    }
}

#[test]
fn convergence_step_finds_first_crossing() {
    let trace = [(0, 0.5, 0.6), (1, 0.85, 0.88), (2, 0.82, 0.91), (3, 0.9, 0.95)]
        .map(|(step, iou, dice)| TracePoint { step, iou, dice });
    assert_eq!(convergence_step(&trace, 0.8, 0.9), Some(2));
    assert_eq!(convergence_step(&trace, 0.95, 0.9), None);
}

#[test]
fn variant_configs() {
    let base = ConfigSeedOpt::default();
    assert_eq!(Variant::NoGauss.config(&base, 5.0).lambdas, [0.0; 4]);
    assert_eq!(Variant::NoSpectral.config(&base, 5.0).sparse_param, crate::seedopt::SparseParam::Direct);
    assert_eq!(Variant::LrSweep.config(&base, 2.5).lr_sparse, 2.5);
    for v in Variant::ALL {
        assert_eq!(Variant::parse(v.name()).unwrap(), v);
    }
    assert!(Variant::parse("nope").is_err());
}

#[test]
fn bench_runs_every_method_and_is_deterministic() {
    let models = tiny_models(5);
    let cfg = small_bench(2);
    let a = bench(&models, &cfg).unwrap();
    let b = bench(&models, &cfg).unwrap();
    assert_eq!(a.runs.len(), InpaintMethod::ALL.len());
    for ((ma, ra), (mb, rb)) in a.runs.iter().zip(&b.runs) {
        assert_eq!(ma, mb);
        assert_eq!(ra.len(), 2);
        for (x, y) in ra.iter().zip(rb) {
            assert_eq!(x.asset, y.asset);
            assert_eq!(x.nfe, y.nfe);
            assert!(x.nfe > 0);
        }
    }
    let ours = a.method(InpaintMethod::Ours).unwrap();
    assert!(ours.iter().all(|r| r.status != "ok" || r.trace.len() == cfg.seedopt.t_opt + 1));

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path()).unwrap();
    b.write(db.path()).unwrap();
    for m in InpaintMethod::ALL {
        for kind in ["reconstruction", "generation"] {
            let name = format!("{kind}_{}.csv", m.name());
            let ta = std::fs::read_to_string(da.path().join(&name)).unwrap();
            assert_eq!(ta, std::fs::read_to_string(db.path().join(&name)).unwrap());
            let (_, rows) = read_csv(&ta).unwrap();
            assert_eq!(rows.len(), 3);
            assert_eq!(rows[2][0], "mean");
        }
    }
    let (head, rows) = read_csv(&std::fs::read_to_string(da.path().join("summary.csv")).unwrap()).unwrap();
    assert_eq!(head, SUMMARY_FIELDS);
    assert_eq!(rows.len(), InpaintMethod::ALL.len());
    assert!(da.path().join("convergence_ours.csv").exists());
    assert!(da.path().join("timing.json").exists());
}

#[test]
fn ablation_rows_cover_grid() {
    let models = tiny_models(6);
    let cfg = AblateConfig {
        assets: 2,
        seed: 3,
        lrs: vec![1.0, 5.0],
        seedopt: fast_seedopt(),
        ..AblateConfig::default()
    };
    let rows = ablate(&models, &cfg).unwrap();
    assert_eq!(rows.len(), 2 * (3 + 2));
    for r in &rows {
        assert!(["ok", "diverged", "empty_structure"].contains(&r.status.as_str()));
        if r.status != "diverged" {
            assert!((r.sigma_dev - (r.sigma - 1.0).abs()).abs() < 1e-15);
            assert_eq!(r.history.len(), cfg.seedopt.t_opt);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    write_ablation(dir.path(), &rows).unwrap();
    let (head, body) = read_csv(&std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap()).unwrap();
    assert_eq!(head, ABLATION_FIELDS);
    assert_eq!(body.len(), rows.len());
    let logs = std::fs::read_to_string(dir.path().join("ablation_logs.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(logs.lines().next().unwrap()).unwrap();
    assert_eq!(first["variant"], "full");
}

#[test]
fn diversity_pairs() {
    let models = tiny_models(7);
    let item = &bench_items(&small_bench(1)).unwrap()[0];
    let rep = diversity(&models, item, &[1, 2, 3], &fast_seedopt()).unwrap();
    assert_eq!(rep.preserved_iou.len(), 3);
    assert_eq!(rep.pairwise_inpaint_iou.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    assert!(rep.pairwise_inpaint_iou.iter().all(|p| (0.0..=1.0).contains(&p.2)));
}

#[test]
fn train_pair_short_run() {
    let items = bench_items(&small_bench(4)).unwrap();
    let assets: Vec<_> = items.into_iter().map(|i| i.asset).collect();
    let cfg = PairTrainConfig {
        train: TrainConfig {
            steps: 3,
            batch: 2,
            ..TrainConfig::default()
        },
        hidden: 8,
    };
    let pair = train_pair(&assets, &cfg, Some("h".into())).unwrap();
    assert_eq!(pair.sparse_curve.len(), 3);
    assert_eq!(pair.slat_curve.len(), 3);
    assert_eq!(pair.sparse.meta.manifest_hash.as_deref(), Some("h"));
    assert_ne!(pair.slat.meta.seed, pair.sparse.meta.seed);
    assert!(train_pair(&[], &cfg, None).is_err());
}
