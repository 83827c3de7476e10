use std::path::{Path, PathBuf};
use uav_isac::cli::*;
use uav_isac::scenario::{load_scenario, save_scenario};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("uav-isac").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn usage_and_input_errors() {
    assert_eq!(cli(&["validate"]), EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(cli(&["run", "--mode", "sideways"]), EXIT_USAGE);
    assert_eq!(cli(&["validate", "--scenario", "/nonexistent/x.json"]), EXIT_NO_INPUT);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema\": 7}").unwrap();
    assert_eq!(cli(&["validate", "--scenario", s(&bad)]), EXIT_ERROR);
    assert_eq!(cli(&["validate", "--scenario", s(&scenario("tiny.json"))]), EXIT_OK);
    assert_eq!(cli(&["validate", "--scenario", s(&scenario("default.json"))]), EXIT_OK);
    assert_eq!(cli(&["plotdata", "--results", s(&dir.path().join("missing"))]), EXIT_NO_INPUT);
    let sc = scenario("tiny.json");
    assert_eq!(cli(&["sweep", "--scenario", s(&sc), "--mode", "bfwot", "--axis", "crb", "--values", "1e-3,1e-4"]), EXIT_USAGE);
    assert_eq!(cli(&["sweep", "--scenario", s(&sc), "--mode", "twobf", "--axis", "crb", "--values", "1e-4"]), EXIT_USAGE);
}

#[test]
fn run_is_byte_reproducible_and_feeds_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("tiny.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ch = dir.path().join("ch.json");
    assert_eq!(cli(&["run", "--scenario", s(&sc), "--mode", "bfwot", "--out", s(&a), "--dump-channels", s(&ch)]), EXIT_OK);
    assert_eq!(cli(&["run", "--scenario", s(&sc), "--mode", "bfwot", "--out", s(&b)]), EXIT_OK);
    let fa = files(&a);
    assert_eq!(fa, files(&b));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for want in ["manifest.json", "scenario.json", "results.json", "convergence.csv", "trajectory.csv", "rates.csv", "crb.csv", "energy.csv"] {
        assert!(names.contains(&want), "missing {want}");
    }
    assert!(ch.is_file());

    let c = dir.path().join("c");
    assert_eq!(cli(&["run", "--scenario", s(&sc), "--mode", "bfwot", "--out", s(&c), "--replay-channels", s(&ch)]), EXIT_OK);
    let results = |d: &Path| std::fs::read(d.join("results.json")).unwrap();
    assert_eq!(results(&a), results(&c));

    assert_eq!(cli(&["plotdata", "--results", s(&a)]), EXIT_OK);
    let traj = std::fs::read_to_string(a.join("plot/trajectories.csv")).unwrap();
    assert!(traj.starts_with("# uav-isac plot-trajectories v1\nuav,slot,x,y,h\n"));
    assert_eq!(traj.lines().count(), 2 + 10);
    // a tampered scenario copy only warns
    std::fs::write(a.join("scenario.json"), b"{}").unwrap();
    assert_eq!(cli(&["plotdata", "--results", s(&a)]), EXIT_OK);
}

#[test]
fn infeasible_run_exits_two_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load_scenario(scenario("tiny.json")).unwrap();
    cfg.crb_threshold = 1e-12;
    let path = dir.path().join("tight.json");
    save_scenario(&cfg, &path).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["run", "--scenario", s(&path), "--mode", "bfwot", "--out", s(&out)]), EXIT_INFEASIBLE);
    assert!(out.join("infeasibility.json").is_file());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn sweep_writes_a_trend_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let sc = scenario("tiny.json");
    assert_eq!(cli(&["sweep", "--scenario", s(&sc), "--mode", "bfwot", "--axis", "pmax", "--values", "0.5,1", "--out", s(&out)]), EXIT_OK);
    let trend = std::fs::read_to_string(out.join("trend.csv")).unwrap();
    assert!(trend.starts_with("# uav-isac trend v1\n"));
    assert_eq!(trend.lines().count(), 4);
}
