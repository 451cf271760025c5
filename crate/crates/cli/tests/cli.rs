use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
seed = 11
synth.n_centers = 2
synth.slides_per_center = 6
synth.height = 6
synth.width = 6
synth.feature_dim = 4
synth.radius = 1
model = patch-gcn-abmil
model.hidden = 4
model.att_dim = 4
model.layers = 2
train.epochs = 3
cv.folds = 2
it.strata = 2
it.projection = 4
";

fn gmil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmil")).args(args).output().expect("spawn gmil")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_cv_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let data = dir.path().join("data");
    let o = gmil(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = data.join("manifest.csv");

    let graphs = dir.path().join("graphs");
    let o = gmil(&["build-graphs", "--config", s(&cfg), "--manifest", s(&manifest), "--graph", "region-local", "--out", s(&graphs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&graphs).unwrap().count(), 24);

    let out = dir.path().join("cv");
    let o = gmil(&["cv", "--config", s(&cfg), "--manifest", s(&manifest), "--with-intervention", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("patch-gcn-abmil + IT") && table.contains("Δ"));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("config,fold,auc,ba,f1,precision,recall\n"));
    assert!(csv.contains("patch-gcn-abmil+it,mean,"));
    assert!(out.join("fold0.gmip").exists() && out.join("fold1.gmic").exists());

    let slide = data.join("slides").read_dir().unwrap().next().unwrap().unwrap().path();
    let heat = dir.path().join("heat.csv");
    let o = gmil(&["heatmap", "--config", s(&cfg), "--checkpoint", s(&out.join("fold0.gmip")), "--slide", s(&slide), "--out", s(&heat)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&heat).unwrap().lines().count(), 6);
    assert!(fs::read(dir.path().join("heat.pgm")).unwrap().starts_with(b"P5\n6 6\n255\n"));

    let purity = dir.path().join("purity.txt");
    let o = gmil(&["purity", "--config", s(&cfg), "--checkpoint", s(&out.join("fold1.gmip")), "--manifest", s(&manifest), "--k", "2", "--out", s(&purity)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&purity).unwrap().contains("purity ="));
}

#[test]
fn cv_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let data = dir.path().join("data");
    assert!(gmil(&["synth", "--config", s(&cfg), "--out", s(&data)]).status.success());
    let manifest = data.join("manifest.csv");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = gmil(&["cv", "--config", s(&cfg), "--manifest", s(&manifest), "--fold-mode", "by-center", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn missing_key_is_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "model = abmil\n").unwrap();
    let o = gmil(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("`seed`"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn bad_flags_and_unknown_keys_exit_one() {
    assert_eq!(gmil(&["cv", "--nonsense"]).status.code(), Some(1));
    assert_eq!(gmil(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seed = 1\nwidth = 3\n").unwrap();
    let o = gmil(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`width`"));
}

#[test]
fn bad_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let fake = dir.path().join("fake.gmip");
    fs::write(&fake, b"XXXXnot a checkpoint").unwrap();
    let slide = dir.path().join("s.gmil");
    fs::write(&slide, b"junk").unwrap();
    let o = gmil(&["heatmap", "--config", s(&cfg), "--checkpoint", s(&fake), "--slide", s(&slide), "--out", s(&dir.path().join("h.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad magic"), "{}", stderr(&o));
}

#[test]
fn heatmap_without_attention_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG.replace("patch-gcn-abmil", "mean")).unwrap();
    let data = dir.path().join("data");
    assert!(gmil(&["synth", "--config", s(&cfg), "--out", s(&data)]).status.success());
    let out = dir.path().join("cv");
    let o = gmil(&["cv", "--config", s(&cfg), "--manifest", s(&data.join("manifest.csv")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let slide = data.join("slides").read_dir().unwrap().next().unwrap().unwrap().path();
    let o = gmil(&["heatmap", "--config", s(&cfg), "--checkpoint", s(&out.join("fold0.gmip")), "--slide", s(&slide), "--out", s(&dir.path().join("h.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("attention"));
}

#[test]
fn config_keys_reference() {
    let o = gmil(&["config-keys"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("`train.lr_gnn`"));
}
