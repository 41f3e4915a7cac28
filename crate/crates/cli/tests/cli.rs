//! End-to-end runs of the `toolseq` binary: outputs, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use toolseq::checkpoint::Checkpoint;
use toolseq::degrade::dataset::{write_manifest, ManifestRow, MANIFEST_FILE};
use toolseq::degrade::Setting;
use toolseq::featurize::state_dim;
use toolseq::nets::Mlp;
use toolseq::po::PoConfig;
use toolseq::toolset::{default_registry, Registry};

fn toolseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolseq"))
        .args(args)
        .env_remove("SCORER_URL")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Small clean corpus plus a Setting I dataset with one image per case.
fn dataset(root: &Path) -> PathBuf {
    let clean = root.join("clean");
    assert!(toolseq(&["corpus", "--out", p(&clean), "--n", "2", "--size", "40"]).status.success());
    let data = root.join("data");
    let o = toolseq(&[
        "synth",
        "--clean-dir",
        p(&clean),
        "--out",
        p(&data),
        "--per-case",
        "1",
        "--set",
        "synth.cases=[1,2,3,4,5]",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

fn stop_first_checkpoint(path: &Path, registry: &Registry) {
    let n = registry.n_actions();
    let mut actor = Mlp::init(state_dim(n), 128, n, 0);
    actor.b2[registry.stop().0] = 100.0;
    Checkpoint::new(registry, actor, None, PoConfig::default(), "proxy", 0)
        .save(path)
        .unwrap();
}

#[test]
fn synth_reports_counts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    assert!(toolseq(&["corpus", "--out", p(&clean), "--n", "3", "--size", "32"]).status.success());
    let run = |out: &Path| {
        toolseq(&[
            "synth",
            "--clean-dir",
            p(&clean),
            "--out",
            p(out),
            "--seed",
            "5",
            "--set",
            "synth.cases=[1,2,3,4,5]",
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = run(&a);
    assert!(o.status.success());
    assert!(stdout(&o).contains("100 images"), "{}", stdout(&o));
    assert!(run(&b).status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join(MANIFEST_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn input_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let o = toolseq(&["synth", "--clean-dir", p(&empty), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let missing = tmp.path().join("nope.jsonl");
    let o = toolseq(&["train", "--manifest", p(&missing), "--out", p(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = toolseq(&["corpus", "--out", p(&tmp.path().join("c")), "--set", "po.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_updates_keeps_the_initial_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let train = |out: &Path| {
        let o = toolseq(&["train", "--manifest", p(&data), "--out", p(out), "--updates", "0"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        Checkpoint::load(&out.join("checkpoint.json")).unwrap()
    };
    let a = train(&tmp.path().join("a"));
    let b = train(&tmp.path().join("b"));
    assert_eq!(a.updates_done, 0);
    assert_eq!(a.actor, b.actor);
    let reg = default_registry();
    let n = reg.n_actions();
    assert_eq!(a.actor.d_in, state_dim(n));
    assert_eq!(a.actor.d_out, n);
}

#[test]
fn plans_are_capped_and_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let run = tmp.path().join("run");
    let o = toolseq(&[
        "train",
        "--manifest",
        p(&data),
        "--out",
        p(&run),
        "--updates",
        "2",
        "--set",
        "po.episodes_per_update=4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = run.join("checkpoint.json");
    let image = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "png"))
        .expect("synth wrote images");
    let plan = |out: &Path| {
        let o = toolseq(&["plan", "--checkpoint", p(&ck), "--image", p(&image), "--t-max", "3", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let names: Vec<String> = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert!(names.len() <= 3);
        assert!(out.join("restored.png").exists());
        std::fs::read(out.join("plan.json")).unwrap()
    };
    assert_eq!(plan(&tmp.path().join("p1")), plan(&tmp.path().join("p2")));
}

#[test]
fn stop_first_policy_plans_nothing_and_keeps_the_image() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("stop.json");
    stop_first_checkpoint(&ck, &default_registry());
    let img = toolseq::corpus::scene(40, 40, 4);
    let png = tmp.path().join("clean.png");
    img.save_png(&png).unwrap();

    let o = toolseq(&["plan", "--checkpoint", p(&ck), "--image", p(&png), "--out", p(tmp.path())]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "[]");

    // clean image used as its own degraded input
    let manifest = tmp.path().join(MANIFEST_FILE);
    write_manifest(
        &manifest,
        &[ManifestRow {
            clean: "clean.png".into(),
            degraded: "clean.png".into(),
            case_id: 1,
            setting: Setting::I,
            seed: 0,
            params: vec![],
        }],
    )
    .unwrap();
    let csv_path = tmp.path().join("eval.csv");
    let o = toolseq(&["eval", "--checkpoint", p(&ck), "--manifest", p(&manifest), "--out", p(&csv_path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image,case_id,setting,plan,psnr,ssim,proxy");
    assert_eq!(lines.len(), 3, "header, one image row, one summary row: {text}");
    let cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cols[3], "");
    assert_eq!(cols[4].parse::<f64>().unwrap(), 99.0);
    assert!((cols[5].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    assert!(lines[2].starts_with("mean,"));
    assert!(csv_path.with_extension("svg").exists());
}

#[test]
fn checkpoint_for_another_registry_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("subset.json");
    stop_first_checkpoint(&ck, &Registry::subset(&["median3", "clahe"]).unwrap());
    let png = tmp.path().join("x.png");
    toolseq::corpus::scene(32, 32, 1).save_png(&png).unwrap();
    let o = toolseq(&["plan", "--checkpoint", p(&ck), "--image", p(&png), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    // the same checkpoint works once the config names the same tools
    let o = toolseq(&[
        "plan",
        "--checkpoint",
        p(&ck),
        "--image",
        p(&png),
        "--out",
        p(tmp.path()),
        "--set",
        r#"tools=["median3","clahe"]"#,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_over_budget_exits_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let o = toolseq(&["oracle", "--manifest", p(&data), "--l-max", "2", "--set", "oracle.budget=50"]);
    assert_eq!(o.status.code(), Some(4));
    let report = tmp.path().join("oracle.jsonl");
    let o = toolseq(&["oracle", "--manifest", p(&data), "--l-max", "1", "--out", p(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 5);
}

#[test]
fn bench_counts_one_forward_per_step_plus_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let ck = tmp.path().join("init.json");
    let reg = default_registry();
    let n = reg.n_actions();
    Checkpoint::new(&reg, Mlp::init(state_dim(n), 128, n, 1), None, PoConfig::default(), "proxy", 0)
        .save(&ck)
        .unwrap();
    let out = tmp.path().join("bench.json");
    let o = toolseq(&["bench", "--checkpoint", p(&ck), "--manifest", p(&data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["forwards_equal_len_plus_one"], true);
    assert_eq!(report["within_cap"], true);
}

#[test]
fn remote_provider_without_scorer_url_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let o = toolseq(&["train", "--manifest", p(&data), "--out", p(&tmp.path().join("r")), "--provider", "remote"]);
    assert_eq!(o.status.code(), Some(2));
}
