use holo_cli::commands::{self, recon_file};
use holo_cli::config::Method;
use holo_cli::config::{
    GenConfig, GridConfig, InferConfig, MethodConfig, ObjectConfig, SolveConfig, SweepConfig,
    SweepParam, TrainCmdConfig,
};
use holo_core::cfld;
use holo_core::dataset::read_stacks;
use holo_core::loss::LossMode;
use holo_core::solvers::default_init;
use holo_core::synth::{NoiseSpec, ObjectKind, ZSpec};
use holo_spaf::{SpafConfig, TrainConfig};
use std::path::Path;
use std::process::Command;

fn holo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_holo"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn small_gen(
    n: usize,
    count: usize,
    zs: Vec<f64>,
    noise: NoiseSpec,
    kind: ObjectKind,
) -> GenConfig {
    GenConfig {
        grid: GridConfig {
            n,
            ..GridConfig::default()
        },
        object: ObjectConfig {
            kind,
            ..ObjectConfig::default()
        },
        count,
        z: ZSpec::Fixed { zs },
        noise,
    }
}

#[test]
fn gen_writes_stacks_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = holo(&[
            "gen",
            "--n",
            "64",
            "--count",
            "8",
            "--zs",
            "300,375",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let stacks = read_stacks(&a).unwrap();
    assert_eq!(stacks.len(), 8);
    assert!(stacks
        .iter()
        .all(|s| s.zs() == vec![300.0, 375.0] && s.grid().n() == 64));
    assert!(a.join("run.json").exists());
    for name in [
        "run.json",
        "dataset.json",
        "stack_00000.cfld",
        "object_00007.cfld",
    ] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }

    // refuses to overwrite
    let o = holo(&["gen", "--count", "1", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn uniform_z_mode_stays_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u");
    let o = holo(&[
        "gen",
        "--n",
        "16",
        "--count",
        "12",
        "--z-mode",
        "uniform:275:400",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let stacks = read_stacks(&out).unwrap();
    let zs: Vec<f64> = stacks.iter().flat_map(|s| s.zs()).collect();
    assert_eq!(zs.len(), 24);
    assert!(zs.iter().all(|z| (275.0..=400.0).contains(z)));
    assert!(zs.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"gen": {"cuont": 3}}"#).unwrap();
    let out = dir.path().join("o");
    let o = holo(&[
        "gen",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = holo(&["gen"]);
    assert_eq!(o.status.code(), Some(2), "missing --out");
    let o = holo(&["sweep", "--param", "M", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "empty sweep grid");
}

#[test]
fn missing_data_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = holo(&[
        "solve",
        "--data",
        dir.path().join("absent").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_values_apply_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 3, "gen": {"count": 2, "grid": {"n": 16}, "noise": {"model": "none"}}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = holo(&[
        "gen",
        "--config",
        cfg.to_str().unwrap(),
        "--count",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let m = holo_core::dataset::read_manifest(&out).unwrap();
    assert_eq!(
        (m.count, m.grid.n(), m.seed, m.noise),
        (3, 16, 3, NoiseSpec::None)
    );
}

#[test]
fn mhpr_on_noiseless_eight_plane_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let zs: Vec<f64> = (0..8).map(|k| 300.0 + 15.0 * k as f64).collect();
    commands::run_gen(
        &small_gen(64, 2, zs, NoiseSpec::None, ObjectKind::AmplitudePhase),
        1,
        &data,
    )
    .unwrap();
    let out = dir.path().join("s");
    let o = holo(&[
        "solve",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "mhpr",
        "--iters",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let mut r = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "ecc").unwrap();
    let ecc: Vec<f64> = r
        .records()
        .map(|rec| rec.unwrap()[col].parse().unwrap())
        .collect();
    assert_eq!(ecc.len(), 2);
    assert!(ecc.iter().all(|&e| e >= 0.99), "{ecc:?}");
}

#[test]
fn variational_with_zero_steps_returns_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    commands::run_gen(
        &small_gen(
            16,
            2,
            vec![300.0, 375.0],
            NoiseSpec::None,
            ObjectKind::AmplitudePhase,
        ),
        2,
        &data,
    )
    .unwrap();
    let cfg = SolveConfig {
        data: Some(data.clone()),
        solver: MethodConfig {
            method: Method::Var,
            steps: 0,
            ..MethodConfig::default()
        },
        no_eval: true,
    };
    let out = dir.path().join("s");
    let rows = commands::run_solve(&cfg, 0, &out).unwrap();
    assert!(rows.iter().all(|r| r.ecc.is_none()));
    for (i, s) in read_stacks(&data).unwrap().iter().enumerate() {
        let f = cfld::load_field(out.join(recon_file(i))).unwrap();
        assert_eq!(f, default_init(s));
    }
}

#[test]
fn phase_only_solves_have_unit_modulus() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    commands::run_gen(
        &small_gen(
            16,
            2,
            vec![300.0, 375.0],
            NoiseSpec::None,
            ObjectKind::PhaseOnly,
        ),
        3,
        &data,
    )
    .unwrap();
    let out = dir.path().join("s");
    let o = holo(&[
        "solve",
        "--data",
        data.to_str().unwrap(),
        "--method",
        "var",
        "--mode",
        "phase-only",
        "--steps",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..2 {
        let f = cfld::load_field(out.join(recon_file(i))).unwrap();
        assert!(f.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }
}

fn tiny_net() -> SpafConfig {
    SpafConfig {
        n: 16,
        channels: 4,
        blocks: 1,
        half_windows: vec![4],
        ..SpafConfig::default()
    }
}

#[test]
fn train_then_infer_and_reject_mismatched_planes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    commands::run_gen(
        &small_gen(
            16,
            6,
            vec![300.0, 375.0],
            NoiseSpec::None,
            ObjectKind::AmplitudePhase,
        ),
        4,
        &data,
    )
    .unwrap();
    let tcfg = TrainCmdConfig {
        data: Some(data.clone()),
        net: tiny_net(),
        train: TrainConfig {
            epochs: 2,
            batch_size: 2,
            ..TrainConfig::default()
        },
    };
    let trained = dir.path().join("t");
    let outcome = commands::run_train(&tcfg, 5, &trained).unwrap();
    assert_eq!(outcome.log.epochs.len(), 2);
    assert!(trained.join("weights.spaf").exists() && trained.join("train_log.json").exists());

    let weights = trained.join("weights.spaf");
    let inf = dir.path().join("i");
    let rows = commands::run_infer(
        &InferConfig {
            data: Some(data.clone()),
            weights: Some(weights.clone()),
            no_eval: true,
        },
        0,
        &inf,
    )
    .unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows
        .iter()
        .all(|r| r.ecc.is_none() && r.loss_total.is_finite()));

    // eval on the stored reconstructions fills in the metrics
    let ev = dir.path().join("e");
    let o = holo(&[
        "eval",
        "--recon",
        inf.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(read(&ev.join("metrics.csv"))).unwrap();
    assert_eq!(text.lines().count(), 7);

    let three = dir.path().join("d3");
    commands::run_gen(
        &small_gen(
            16,
            2,
            vec![300.0, 340.0, 375.0],
            NoiseSpec::None,
            ObjectKind::AmplitudePhase,
        ),
        4,
        &three,
    )
    .unwrap();
    let o = holo(&[
        "infer",
        "--data",
        three.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--out",
        dir.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("M = 3"));
}

#[test]
fn dz_sweep_at_zero_refocus_equals_raw() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        param: SweepParam::Dz,
        values: vec![0.0],
        count: 2,
        grid: GridConfig {
            n: 32,
            ..GridConfig::default()
        },
        refocus: true,
        solver: MethodConfig {
            iters: 20,
            ..MethodConfig::default()
        },
        ..SweepConfig::default()
    };
    let o = commands::run_sweep(&cfg, 0, dir.path()).unwrap();
    let raw = o.rows_for(0.0, "raw");
    let refo = o.rows_for(0.0, "refocused");
    assert_eq!((raw.len(), refo.len()), (2, 2));
    for (a, b) in raw.iter().zip(refo) {
        assert!((a.ecc - b.ecc).abs() < 1e-10);
    }
    for f in ["sweep.csv", "summary.csv", "sweep.png", "run.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sweep_over_wavelength_and_snr_runs() {
    for (param, values) in [
        (SweepParam::Lambda, vec![500.0, 530.0]),
        (SweepParam::Snr, vec![20.0, 40.0]),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SweepConfig {
            param,
            values: values.clone(),
            count: 2,
            grid: GridConfig {
                n: 32,
                ..GridConfig::default()
            },
            solver: MethodConfig {
                iters: 20,
                mode: LossMode::Complex,
                ..MethodConfig::default()
            },
            ..SweepConfig::default()
        };
        let o = commands::run_sweep(&cfg, 0, dir.path()).unwrap();
        assert_eq!(o.summary.len(), 2);
        assert!(o
            .summary
            .iter()
            .all(|s| s.count == 2 && s.mean_ecc.is_finite()));
    }
}

/// Every key of the shipped schema exists in the configuration types and
/// vice versa.
#[test]
fn schema_matches_configuration_types() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.schema.json");
    let schema: serde_json::Value = serde_json::from_slice(&read(&schema_path)).unwrap();
    let defaults = serde_json::to_value(holo_cli::config::FileConfig::default()).unwrap();

    fn resolve<'a>(root: &'a serde_json::Value, s: &'a serde_json::Value) -> &'a serde_json::Value {
        match s.get("$ref").and_then(|r| r.as_str()) {
            Some(r) => root
                .pointer(r.trim_start_matches('#'))
                .unwrap_or_else(|| panic!("dangling {r}")),
            None => s,
        }
    }

    fn compare(
        root: &serde_json::Value,
        schema: &serde_json::Value,
        value: &serde_json::Value,
        path: &str,
    ) {
        let props = schema["properties"]
            .as_object()
            .unwrap_or_else(|| panic!("{path}: no properties"));
        let obj = value
            .as_object()
            .unwrap_or_else(|| panic!("{path}: not an object"));
        let mut a: Vec<&String> = props.keys().collect();
        let mut b: Vec<&String> = obj.keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "keys of {path}");
        assert_eq!(
            schema["additionalProperties"],
            serde_json::Value::Bool(false),
            "{path} must be closed"
        );
        for (k, sub) in props {
            let sub = resolve(root, sub);
            if sub.get("properties").is_some() && obj[k].is_object() {
                compare(root, sub, &obj[k], &format!("{path}.{k}"));
            }
        }
    }
    compare(&schema, &schema, &defaults, "$");
}

#[test]
fn simulate_matches_direct_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let grid = holo_core::OpticalGrid::with_defaults(16).unwrap();
    let synth = holo_core::synth::SynthConfig {
        n: 16,
        ..Default::default()
    };
    let obj = holo_core::synth::make_object(&synth, grid, ObjectKind::AmplitudePhase, 9)
        .unwrap()
        .into_field();
    let input = dir.path().join("obj.cfld");
    cfld::save_field(&input, &obj).unwrap();
    let out = dir.path().join("s");
    let o = holo(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--zs",
        "310,360",
        "--noise",
        "none",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = cfld::load_stack(out.join("stack.cfld")).unwrap();
    assert_eq!(
        got,
        holo_core::propagation::forward_stack(&obj, &[310.0, 360.0]).unwrap()
    );
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out.join("run.json"))).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
}
