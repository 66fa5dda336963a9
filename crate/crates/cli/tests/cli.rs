use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use causalspace::checkpoint::read_hsets;
use causalspace::enumerator::{FinderOptions, Outcome, SaveOptions, SpaceFinder};
use causalspace::HistorySet;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_causalspace"));
    c.env_remove("CAUSALSPACE_STATE_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn classes_in(path: &Path) -> BTreeSet<HistorySet> {
    read_hsets(&mut std::fs::File::open(path).unwrap()).unwrap().into_iter().collect()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn enumerate_final_lines() {
    for (n, want) in [
        ("1", "Found 1 spaces in 1 equivalence classes."),
        ("2", "Found 7 spaces in 3 equivalence classes."),
        ("3", "Found 2644 spaces in 102 equivalence classes."),
    ] {
        let o = run(&["enumerate", "--events", n]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).lines().last().unwrap(), want);
    }
    let o = run(&["enumerate", "--events", "2", "--parallel", "-q"]);
    assert_eq!(stdout(&o).trim(), "Found 7 spaces in 3 equivalence classes.");
}

#[test]
fn status_table_is_streamed() {
    let o = run(&["enumerate", "--events", "2", "--update-period", "1"]);
    let out = stdout(&o);
    assert!(out.contains("spaces    eq. cls     memory  completed"));
    assert!(out.lines().filter(|l| l.trim_end().ends_with('%')).count() >= 3);
}

#[test]
fn state_dir_holds_artifacts_and_resume_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().env("CAUSALSPACE_STATE_DIR", dir.path()).args(["enumerate", "--events", "3", "-q"]).output().unwrap();
    assert!(o.status.success());
    let classes = dir.path().join("classes-3.hsets");
    let first = std::fs::read(&classes).unwrap();
    assert_eq!(classes_in(&classes).len(), 102);
    assert!(dir.path().join("search-3.state").exists());

    let o = bin().env("CAUSALSPACE_STATE_DIR", dir.path()).args(["resume", "--events", "3", "-q"]).output().unwrap();
    assert_eq!(stdout(&o).trim(), "Found 2644 spaces in 102 equivalence classes.");
    assert_eq!(std::fs::read(&classes).unwrap(), first);
}

#[test]
fn resume_after_interruption() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("partial.state");
    let opts = FinderOptions {
        save: Some(SaveOptions { path: state.clone(), save_period: Some(5), backup: false }),
        ..FinderOptions::default()
    };
    let mut f = SpaceFinder::new(3, opts).unwrap();
    f.blank_state();
    let stop = Arc::new(AtomicBool::new(false));
    f.set_stop_flag(stop.clone());
    let mut seen = 0;
    let outcome = f
        .find_eq_classes_with(|_| {
            seen += 1;
            if seen == 20 {
                stop.store(true, Ordering::Relaxed);
            }
        })
        .unwrap();
    assert_eq!(outcome, Outcome::Interrupted);
    assert!(f.num_eq_classes() < 102);

    let resumed = dir.path().join("resumed.hsets");
    let o = run(&[
        "resume",
        "--events",
        "3",
        "--state",
        state.to_str().unwrap(),
        "--classes",
        resumed.to_str().unwrap(),
        "-q",
    ]);
    assert_eq!(stdout(&o).trim(), "Found 2644 spaces in 102 equivalence classes.");

    let fresh = dir.path().join("fresh.hsets");
    let o = run(&["enumerate", "--events", "3", "--classes", fresh.to_str().unwrap(), "-q"]);
    assert!(o.status.success());
    assert_eq!(classes_in(&resumed), classes_in(&fresh));
}

#[test]
fn bad_states_and_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("two.state");
    let s = state.to_str().unwrap();
    assert!(run(&["enumerate", "--events", "2", "--state", s, "-q"]).status.success());
    let o = run(&["resume", "--events", "3", "--state", s, "-q"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = dir.path().join("bad.state");
    std::fs::write(&bad, [0u8, 0, 0]).unwrap();
    let o = run(&["resume", "--events", "2", "--state", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let unwritable = dir.path().join("missing").join("x.state");
    let o = run(&["enumerate", "--events", "2", "--state", unwritable.to_str().unwrap(), "-q"]);
    assert!(!o.status.success());

    assert!(!run(&["enumerate", "--events", "2", "--save-period", "0"]).status.success());
    assert!(!run(&["enumerate", "--events", "5"]).status.success());
    assert_eq!(run(&["resume", "--events", "2"]).status.code(), Some(2));
    assert_eq!(run(&["classify", "--class", "102"]).status.code(), Some(2));
    assert_eq!(run(&["hierarchy", "--format", "csv"]).status.code(), Some(2));
    assert_eq!(run(&["orders", "--format", "pgm"]).status.code(), Some(2));
}

#[test]
fn classify_reports() {
    let r = json(&run(&["classify", "--class", "0", "--format", "json"]));
    assert_eq!(r["causaltope_dim"], 26);
    assert_eq!(r["causal_functions"], 64);
    assert_eq!(r["is_tight"], true);
    assert_eq!(r["equations"], 91);
    assert_eq!(r["independent_equations"], 37);

    let r = json(&run(&["classify", "--class", "101", "--format", "json"]));
    assert_eq!(r["causaltope_dim"], 42);
    assert_eq!(r["causal_functions"], 16384);
    let h = causalspace::analysis::hierarchy(3).unwrap();
    let lib = causalspace::analysis::report(h.node(101).unwrap().representative_space(), h).unwrap();
    assert_eq!(r["novel_causal_functions"], lib.novel_causal_functions.unwrap());

    // another member of class 92, given by bits and by histories
    let member = h.members(92).into_iter().last().unwrap();
    let bits = member.to_bits().to_string();
    let r = json(&run(&["classify", "--bits", &bits, "--format", "json"]));
    assert_eq!(r["class_id"], 92);
    assert_eq!(r["class_size"], 3);
    assert_eq!(r["bits"], bits);
    let r2 = json(&run(&["classify", "--space", &member.to_string(), "--format", "json"]));
    assert_eq!(r, r2);

    let text = stdout(&run(&["classify", "--class", "5"]));
    assert!(text.contains("closest coarsenings 8, 12, 14"));
    assert!(text.contains("causal functions 128 (64 novel)"));
    assert_eq!(run(&["classify", "--bits", "12345"]).status.code(), Some(2));
}

#[test]
fn exports() {
    let dot = stdout(&run(&["hierarchy", "--events", "3", "--format", "dot"]));
    assert_eq!(dot.lines().filter(|l| l.contains("[label=")).count(), 102);

    let csv = stdout(&run(&["causaltope", "--class", "92"]));
    assert_eq!(csv.lines().count(), 1 + 47);
    let pgm = run(&["causaltope", "--class", "92", "--format", "pgm"]).stdout;
    assert!(pgm.starts_with(b"P5\n64 47\n255\n"));

    // preorders on two points by brute force over all 16 relations
    let preorders = (0..16u32)
        .filter(|r| {
            let rel = |i: usize, j: usize| r >> (2 * i + j) & 1 == 1;
            let reflexive = (0..2).all(|i| rel(i, i));
            let transitive =
                (0..2).all(|i| (0..2).all(|j| (0..2).all(|k| !(rel(i, j) && rel(j, k)) || rel(i, k))));
            reflexive && transitive
        })
        .count();
    let dot = stdout(&run(&["orders", "--events", "2", "--format", "dot"]));
    assert_eq!(dot.lines().filter(|l| l.contains("[label=")).count(), preorders);
}

#[test]
fn exports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert!(run(&["hierarchy", "--events", "2", "--format", "json", "-o", p.to_str().unwrap()]).status.success());
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let v: serde_json::Value = serde_json::from_slice(&x).unwrap();
    let keys: Vec<&String> = v[0].as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let j = stdout(&run(&["orders", "--events", "3", "--format", "json"]));
    assert_eq!(j, stdout(&run(&["orders", "--events", "3", "--format", "json"])));
}
