use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapedc::io::{parse_shapelets, read_label_map};
use tempfile::TempDir;

fn shapedc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapedc"))
        .args(args)
        .env_remove("SHAPE_DC_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = shapedc(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Scene {
    dir: TempDir,
}

impl Scene {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(&["synth", "--out-dir", dir.path().join("scene").to_str().unwrap()]);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn cube_args(&self) -> Vec<String> {
        vec!["--header".into(), self.s("scene/cube.hdr"), "--data".into(), self.s("scene/cube.dat")]
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![cmd.into()];
        if cmd != "shapelets" {
            args.extend(self.cube_args());
        }
        args.extend(extra.iter().map(|s| s.to_string()));
        shapedc(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn segment(&self, out: &str) {
        let o = self.run("segment", &["--out", &self.s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }

    fn learn(&self, seg: &str, out: &str, extra: &[&str]) {
        let mut args = vec!["--segmentation", seg, "--out", out];
        args.extend_from_slice(extra);
        let o = self.run("shapelets", &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }

    fn classify(&self, shapelets: &str, out: &str, extra: &[&str]) -> Output {
        let train = self.s("scene/train.txt");
        let mut args = vec!["--train", &train, "--shapelets", shapelets, "--out", out];
        args.extend_from_slice(extra);
        self.run("classify", &args)
    }
}

fn metric(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in metrics"))
        .parse()
        .unwrap()
}

#[test]
fn segment_output_is_a_label_map_and_deterministic() {
    let scene = Scene::new();
    scene.segment("a.txt");
    let o = scene.run("segment", &["--out", &scene.s("b.txt"), "--seed", "7"]);
    assert!(o.status.success());
    let map = read_label_map(scene.path("a.txt")).unwrap();
    assert_eq!((map.height(), map.width()), (60, 60));
    assert!(map.labels().iter().all(|&l| l >= 1));
    assert_eq!(fs::read(scene.path("a.txt")).unwrap(), fs::read(scene.path("b.txt")).unwrap());
}

#[test]
fn zero_target_size_is_a_usage_error() {
    let scene = Scene::new();
    let o = scene.run("segment", &["--out", &scene.s("seg.txt"), "--target-size", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!scene.path("seg.txt").exists());
}

#[test]
fn shapelet_counts() {
    let scene = Scene::new();
    scene.segment("seg.txt");
    for n in ["1", "4"] {
        let out = scene.s(&format!("shp{n}.txt"));
        scene.learn(&scene.s("seg.txt"), &out, &["--num-shapelets", n]);
        let set = parse_shapelets(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(set.len().to_string(), n);
        assert_eq!(set.side(), 9);
    }
}

#[test]
fn haar_triple() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.txt");
    ok(&["shapelets", "--haar", "--num-shapelets", "3", "--patch-side", "4", "--out", out.to_str().unwrap()]);
    let expected = "3 4\n1\n1 1 1 1\n1 1 1 1\n1 1 1 1\n1 1 1 1\n\
                    2\n1 1 2 2\n1 1 2 2\n1 1 2 2\n1 1 2 2\n\
                    2\n1 1 1 1\n1 1 1 1\n2 2 2 2\n2 2 2 2\n";
    assert_eq!(fs::read_to_string(out).unwrap(), expected);
}

#[test]
fn classify_end_to_end() {
    let scene = Scene::new();
    scene.segment("seg.txt");
    scene.learn(&scene.s("seg.txt"), &scene.s("shp.txt"), &[]);
    let o = scene.classify(&scene.s("shp.txt"), &scene.s("map.txt"), &["--test", &scene.s("scene/test.txt"), "--metrics", &scene.s("m.csv")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(scene.path("m.csv")).unwrap();
    assert!(metric(&metrics, "overall") >= 0.99, "{metrics}");
    let map = read_label_map(scene.path("map.txt")).unwrap();
    assert!(map.labels().iter().all(|l| (1..=3).contains(l)));

    // without a test mask only the map is written
    let o = scene.classify(&scene.s("shp.txt"), &scene.s("map2.txt"), &[]);
    assert!(o.status.success());
    assert_eq!(fs::read(scene.path("map.txt")).unwrap(), fs::read(scene.path("map2.txt")).unwrap());
    assert_eq!(fs::read_dir(scene.dir.path()).unwrap().count(), 6);
}

#[test]
fn zero_sparsity_is_a_usage_error() {
    let scene = Scene::new();
    let shp = scene.s("shp.txt");
    ok(&["shapelets", "--haar", "--num-shapelets", "2", "--out", &shp]);
    let o = scene.classify(&shp, &scene.s("map.txt"), &["--sparsity", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!scene.path("map.txt").exists());
}

#[test]
fn worker_count_does_not_change_outputs() {
    let scene = Scene::new();
    let shp = scene.s("shp.txt");
    ok(&["shapelets", "--haar", "--num-shapelets", "5", "--out", &shp]);
    let a = scene.classify(&shp, &scene.s("a.txt"), &["--workers", "1"]);
    assert!(a.status.success());
    let mut args: Vec<String> = vec!["classify".into()];
    args.extend(scene.cube_args());
    args.extend(["--train", &scene.s("scene/train.txt"), "--shapelets", &shp, "--out", &scene.s("b.txt")].map(String::from));
    let b = Command::new(env!("CARGO_BIN_EXE_shapedc")).args(&args).env("SHAPE_DC_WORKERS", "8").output().unwrap();
    assert!(b.status.success());
    assert_eq!(fs::read(scene.path("a.txt")).unwrap(), fs::read(scene.path("b.txt")).unwrap());
}

#[test]
fn failed_run_removes_partial_outputs() {
    let scene = Scene::new();
    let shp = scene.s("shp.txt");
    ok(&["shapelets", "--haar", "--num-shapelets", "2", "--out", &shp]);
    fs::write(scene.path("small.txt"), "1 2\n1 2\n").unwrap();
    let o = scene.classify(&shp, &scene.s("map.txt"), &["--test", &scene.s("small.txt"), "--metrics", &scene.s("m.csv")]);
    assert!(!o.status.success());
    assert!(!scene.path("map.txt").exists());
    assert!(!scene.path("m.csv").exists());

    let o = scene.classify(&scene.s("missing.txt"), &scene.s("map.txt"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));
}

fn sweep(scene: &Scene, out: &str, extra: &[&str]) -> String {
    let (train, test) = (scene.s("scene/train.txt"), scene.s("scene/test.txt"));
    let mut args = vec!["--train", &train, "--test", &test, "--out", out];
    args.extend_from_slice(extra);
    let o = scene.run("sweep", &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(out).unwrap()
}

#[test]
fn sweep_grid_and_repeatability() {
    let scene = Scene::new();
    let grid = ["--num-shapelets", "1,5", "--patch-side", "5,9"];
    let a = sweep(&scene, &scene.s("a.csv"), &grid);
    let b = sweep(&scene, &scene.s("b.csv"), &grid);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "num_shapelets,patch_side,W,superpixel_size,OA,AA,kappa");
    assert_eq!(lines.len(), 5);
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["1,5,3,20", "1,9,3,20", "5,5,3,20", "5,9,3,20"]);
}

#[test]
fn single_point_sweep_matches_classify() {
    let scene = Scene::new();
    scene.segment("seg.txt");
    scene.learn(&scene.s("seg.txt"), &scene.s("shp.txt"), &["--num-shapelets", "4", "--patch-side", "7"]);
    let o = scene.classify(&scene.s("shp.txt"), &scene.s("map.txt"), &["--test", &scene.s("scene/test.txt"), "--metrics", &scene.s("m.csv")]);
    assert!(o.status.success());
    let metrics = fs::read_to_string(scene.path("m.csv")).unwrap();

    let csv = sweep(&scene, &scene.s("s.csv"), &["--num-shapelets", "4", "--patch-side", "7"]);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    for (i, key) in [(4, "overall"), (5, "average"), (6, "kappa")] {
        assert_eq!(row[i].parse::<f64>().unwrap(), metric(&metrics, key), "{key}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# shared by every stage\nhaar = true\nnum_shapelets = 3\npatch_side = 4\nsparsity = 2\nworkers = 1\n").unwrap();
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let cfg_s = cfg.to_str().unwrap();
    ok(&["--config", cfg_s, "shapelets", "--out", &out("a.txt")]);
    ok(&["shapelets", "--config", cfg_s, "--num-shapelets", "1", "--out", &out("b.txt")]);
    let read = |name: &str| parse_shapelets(&fs::read_to_string(Path::new(&out(name))).unwrap()).unwrap();
    assert_eq!((read("a.txt").len(), read("a.txt").side()), (3, 4));
    assert_eq!(read("b.txt").len(), 1);

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = shapedc(&["--config", cfg_s, "shapelets", "--haar", "--out", &out("c.txt")]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-key"));
}
