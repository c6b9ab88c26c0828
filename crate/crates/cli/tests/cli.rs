use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dlmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlmix")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("panel.csv");
    let out = dlmix(&["generate", "--kind", "dynamic", "--seed", "3", "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("panel_truth.csv").exists());
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 1 + 22 * 60);

    let res = dir.path().join("sem");
    let cfg = configs_dir().join("dynamic_sem.toml");
    let out = dlmix(&["--threads", "2", "fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&res)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let means = fs::read_to_string(res.join("means.csv")).unwrap();
    assert_eq!(means.lines().count(), 1 + 2 * 60);
    let memberships = fs::read_to_string(res.join("memberships.csv")).unwrap();
    assert_eq!(memberships.lines().count(), 1 + 22 * 60 * 2);
    assert!(res.join("manifest.toml").exists());

    // the manifest repeats the run
    let again = dir.path().join("again");
    let manifest = res.join("manifest.toml");
    let out = dlmix(&["fit", "--config", s(&manifest), "--data", s(&data), "--out", s(&again)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["means.csv", "memberships.csv", "delta.csv"] {
        assert_eq!(fs::read(res.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.csv");
    assert_eq!(code(&dlmix(&["generate", "--kind", "static", "--seed", "1", "--out", s(&data)])), 0);
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = dlmix::io::RunConfig::from_toml_str(&text).unwrap();
        cfg.validate().unwrap();
    }
    let out = dlmix(&["fit", "--config", s(&configs_dir().join("static_em.toml")), "--data", s(&data), "--out", s(&dir.path().join("em"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let memberships = fs::read_to_string(dir.path().join("em/memberships.csv")).unwrap();
    assert_eq!(memberships.lines().count(), 1 + 20 * 2);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.csv");
    assert_eq!(code(&dlmix(&["generate", "--kind", "static", "--seed", "1", "--out", s(&data)])), 0);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nalgorithm = \"static_em\"\nwhatever = 2\n").unwrap();
    let out = dlmix(&["fit", "--config", s(&bad), "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("whatever"));
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&dlmix(&["fit", "--config", s(&missing), "--data", s(&data), "--out", "x"])), 2);
    let cfg = configs_dir().join("static_em.toml");
    let out = dlmix(&["--threads", "0", "fit", "--config", s(&cfg), "--data", s(&data), "--out", "x"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&dlmix(&["generate", "--kind", "weird", "--seed", "1", "--out", "x"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("static_em.toml");
    let data = dir.path().join("bad.csv");
    fs::write(&data, "series_id,time_index,value\na,1,1.0\na,2,oops\n").unwrap();
    let out = dlmix(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    let missing = dir.path().join("none.csv");
    let out = dlmix(&["fit", "--config", s(&cfg), "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn numerical_failure_exits_4() {
    // values near the edge of the double range cannot be fitted
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("huge.csv");
    fs::write(
        &data,
        "series_id,time_index,value\na,1,1e300\na,2,-1e300\na,3,1e300\nb,1,-1e300\nb,2,1e300\nb,3,-1e300\n",
    )
    .unwrap();
    let cfg = configs_dir().join("static_em.toml");
    let out = dlmix(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}
