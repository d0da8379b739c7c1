use std::path::{Path, PathBuf};
use std::process::Command;

use slatpaint::flownet::{save_checkpoint, Checkpoint, NetConfig, TrainMeta, VectorFieldNet};
use slatpaint::shapes::{NUM_CLASSES, SLAT_CHANNELS, SPARSE_CHANNELS};
use slatpaint::Stage;

fn run(args: &[&str], config: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_slatpaint"))
        .args(&args[..1])
        .arg("--config")
        .arg(config)
        .args(&args[1..])
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, json: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn gen_data(dir: &Path, count: usize) -> PathBuf {
    let cfg = write_config(dir, "gen.json", serde_json::json!({"out": "data", "count": count, "seed": 7}));
    assert_eq!(run(&["gen-data"], &cfg).0, 0);
    dir.join("data/manifest.jsonl")
}

/// Train tiny checkpoints into `dir/model`.
fn train_tiny(dir: &Path) -> PathBuf {
    gen_data(dir, 6);
    let cfg = write_config(
        dir,
        "train.json",
        serde_json::json!({
            "out": "model",
            "manifest": "data/manifest.jsonl",
            "model": {"hidden": 8, "train": {"steps": 4, "batch": 2, "voxel_subsample": 64}}
        }),
    );
    let (code, err) = run(&["train"], &cfg);
    assert_eq!(code, 0, "{err}");
    dir.join("model")
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gen.json", serde_json::json!({"count": 5, "seed": 7}));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["gen-data", "--out", a.to_str().unwrap()], &cfg).0, 0);
    assert_eq!(run(&["gen-data", "--out", b.to_str().unwrap()], &cfg).0, 0);
    assert_eq!(read(a.join("manifest.jsonl")), read(b.join("manifest.jsonl")));
    assert_eq!(String::from_utf8(read(a.join("manifest.jsonl"))).unwrap().lines().count(), 5);
    for i in 0..5 {
        assert_eq!(read(a.join(format!("assets/{i:04}.ply"))), read(b.join(format!("assets/{i:04}.ply"))));
        assert!(a.join(format!("assets/{i:04}.grid")).is_file());
    }
    let resolved: serde_json::Value = serde_json::from_slice(&read(a.join("resolved_config.json"))).unwrap();
    assert_eq!(resolved["count"], 5);
    assert_eq!(resolved["dim"], 16);

    assert_eq!(run(&["gen-data", "--out", a.to_str().unwrap(), "--seed", "8"], &cfg).0, 0);
    assert_ne!(read(a.join("manifest.jsonl")), read(b.join("manifest.jsonl")));
}

#[test]
fn empty_dataset_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_data(dir.path(), 0);
    assert!(read(m).is_empty());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_family = write_config(dir.path(), "a.json", serde_json::json!({"count": 2, "families": ["cone"]}));
    let (code, err) = run(&["gen-data"], &bad_family);
    assert_eq!(code, 2);
    assert!(err.contains("config error"), "{err}");
    let unknown = write_config(dir.path(), "b.json", serde_json::json!({"count": 2, "colour": 1}));
    assert_eq!(run(&["gen-data"], &unknown).0, 2);
    assert_eq!(run(&["gen-data"], &dir.path().join("missing.json")).0, 2);
    let no_manifest = write_config(dir.path(), "c.json", serde_json::json!({"manifest": "nowhere.jsonl"}));
    let (code, err) = run(&["train"], &no_manifest);
    assert_eq!(code, 2);
    assert!(err.contains("nowhere.jsonl"), "{err}");
    let ok = write_config(dir.path(), "d.json", serde_json::json!({"count": 1}));
    assert_eq!(run(&["gen-data", "--method", "ours"], &ok).0, 2);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 4);
    let cfg = |name: &str, out: &str, steps: u64, resume: bool| {
        write_config(
            dir.path(),
            name,
            serde_json::json!({
                "out": out,
                "manifest": "data/manifest.jsonl",
                "resume": resume,
                "model": {"hidden": 8, "train": {"steps": steps, "batch": 2, "voxel_subsample": 64, "seed": 3}}
            }),
        )
    };
    assert_eq!(run(&["train"], &cfg("full.json", "full", 6, false)).0, 0);
    assert_eq!(run(&["train"], &cfg("half.json", "part", 3, false)).0, 0);
    let (code, err) = run(&["train"], &cfg("rest.json", "part", 6, true));
    assert_eq!(code, 0, "{err}");
    for f in ["sparse_structure.ckpt", "structured_latent.ckpt", "loss_sparse_structure.csv", "loss_structured_latent.csv"] {
        assert_eq!(read(dir.path().join("full").join(f)), read(dir.path().join("part").join(f)), "{f}");
    }
    let csv = String::from_utf8(read(dir.path().join("full/loss_sparse_structure.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("step,loss\n0,"));
}

#[test]
fn pipeline_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = train_tiny(d);
    let ckpts = serde_json::json!({
        "sparse": model.join("sparse_structure.ckpt"),
        "slat": model.join("structured_latent.ckpt")
    });

    let gen = write_config(d, "generate.json", serde_json::json!({"out": "gen", "checkpoints": ckpts, "families": ["sphere"], "per_family": 2}));
    assert_eq!(run(&["generate"], &gen).0, 0);
    let table = String::from_utf8(read(d.join("gen/generate.csv"))).unwrap();
    assert_eq!(table.lines().count(), 3);

    let inp = write_config(
        d,
        "inpaint.json",
        serde_json::json!({
            "out": "inp",
            "checkpoints": ckpts,
            "manifest": "data/manifest.jsonl",
            "assets": [0, 1],
            "seedopt": {"t_opt": 3, "sampling_steps": 4},
            "baseline": {"steps": 4}
        }),
    );
    let (code, err) = run(&["inpaint"], &inp);
    assert_eq!(code, 0, "{err}");
    let steps = String::from_utf8(read(d.join("inp/0000_ours_steps.jsonl"))).unwrap();
    let first: serde_json::Value = serde_json::from_str(steps.lines().next().unwrap()).unwrap();
    assert_eq!(first["stage"], "sparse");
    assert_eq!(first["step"], 0);
    assert!(steps.lines().filter(|l| l.contains("\"sparse\"")).count() == 3);
    assert!(d.join("inp/0001_ours.ply").is_file());
    assert_eq!(String::from_utf8(read(d.join("inp/metrics_ours.csv"))).unwrap().lines().count(), 3);
    for m in ["repaint", "sdedit", "ilvr"] {
        let (code, err) = run(&["inpaint", "--method", m], &inp);
        assert_eq!(code, 0, "{m}: {err}");
        assert!(d.join(format!("inp/0000_{m}_steps.jsonl")).is_file());
    }
    assert_eq!(run(&["inpaint", "--method", "dps"], &inp).0, 2);

    let bench = write_config(
        d,
        "bench.json",
        serde_json::json!({
            "checkpoints": ckpts,
            "bench": {"assets": 2, "seedopt": {"t_opt": 2, "sampling_steps": 3}, "baseline": {"steps": 3, "repaint_resamples": 2}}
        }),
    );
    let (b1, b2) = (d.join("b1"), d.join("b2"));
    assert_eq!(run(&["bench", "--out", b1.to_str().unwrap()], &bench).0, 0);
    assert_eq!(run(&["bench", "--out", b2.to_str().unwrap()], &bench).0, 0);
    for m in ["ours", "repaint", "sdedit", "ilvr"] {
        for kind in ["reconstruction", "generation"] {
            let f = format!("{kind}_{m}.csv");
            assert_eq!(read(b1.join(&f)), read(b2.join(&f)), "{f}");
        }
    }
    assert_eq!(read(b1.join("summary.csv")), read(b2.join("summary.csv")));
    assert_eq!(read(b1.join("convergence_ours.csv")), read(b2.join("convergence_ours.csv")));

    let abl = write_config(
        d,
        "ablate.json",
        serde_json::json!({"out": "abl", "checkpoints": ckpts, "ablate": {"assets": 2, "seedopt": {"t_opt": 2, "sampling_steps": 3}}}),
    );
    assert_eq!(run(&["ablate", "--method", "no-spectral"], &abl).0, 0);
    let rows = String::from_utf8(read(d.join("abl/ablation.csv"))).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("no-spectral,5,")));
    assert!(d.join("abl/ablation_logs.jsonl").is_file());

    let render = write_config(
        d,
        "render.json",
        serde_json::json!({"out": "ren", "manifest": "data/manifest.jsonl", "assets": [2], "ply": ["inp/0000_ours.ply"]}),
    );
    assert_eq!(run(&["render"], &render).0, 0);
    let mut names: Vec<String> = std::fs::read_dir(d.join("ren"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("0002_") && !n.ends_with(".ply"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 9);
    assert!(names.contains(&"0002_x_depth.pgm".to_string()));
    assert!(names.contains(&"0002_z_appearance.ppm".to_string()));
    assert!(names.contains(&"0002_y_normal.ppm".to_string()));
    let ply = String::from_utf8(read(d.join("ren/0002.ply"))).unwrap();
    assert!(ply.starts_with("ply\nformat ascii 1.0\nelement vertex "));
    assert!(d.join("ren/ply/0000_ours_x_depth.pgm").is_file());
}

#[test]
fn empty_structure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_data(d, 2);
    // A constant positive velocity on the occupancy channel drives every
    // logit negative, so nothing is ever active.
    let mut sparse = VectorFieldNet::zeros(NetConfig::new(Stage::SparseStructure, SPARSE_CHANNELS, NUM_CLASSES));
    let n = sparse.params().len();
    sparse.params_mut()[n - SPARSE_CHANNELS] = 100.0;
    let slat = VectorFieldNet::zeros(NetConfig::new(Stage::StructuredLatent, SLAT_CHANNELS, NUM_CLASSES));
    for (net, name) in [(sparse, "s.ckpt"), (slat, "l.ckpt")] {
        save_checkpoint(d.join(name), &Checkpoint { net, adam: None, meta: TrainMeta::default() }).unwrap();
    }
    let cfg = write_config(
        d,
        "inp.json",
        serde_json::json!({
            "out": "inp",
            "checkpoints": {"sparse": "s.ckpt", "slat": "l.ckpt"},
            "manifest": "data/manifest.jsonl",
            "seedopt": {"t_opt": 1, "sampling_steps": 2},
            "baseline": {"steps": 2}
        }),
    );
    let (code, err) = run(&["inpaint"], &cfg);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("no active voxels"), "{err}");
    assert!(d.join("inp/resolved_config.json").is_file());
    let swapped = write_config(
        d,
        "swap.json",
        serde_json::json!({"checkpoints": {"sparse": "l.ckpt", "slat": "s.ckpt"}, "manifest": "data/manifest.jsonl"}),
    );
    assert_eq!(run(&["inpaint"], &swapped).0, 2);
}
