use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(id: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "corpus", &format!("{id}.slmfg")].iter().collect();
    p.to_string_lossy().into_owned()
}

fn slmfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slmfg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_unique_keys(text: &str) {
    for line in text.lines() {
        let mut seen = BTreeSet::new();
        let mut rest = line;
        while let Some(eq) = rest.find('=') {
            let key = rest[..eq].trim();
            assert!(seen.insert(key.to_string()), "duplicate key {key} in {line}");
            rest = &rest[eq + 1..];
            let end = if rest.starts_with('"') {
                let mut i = 1;
                let b = rest.as_bytes();
                while i < b.len() && b[i] != b'"' {
                    i += if b[i] == b'\\' { 2 } else { 1 };
                }
                i + 1
            } else {
                rest.find(' ').unwrap_or(rest.len())
            };
            rest = &rest[end.min(rest.len())..];
        }
    }
}

#[test]
fn solve_nep_reports_the_closed_form() {
    let o = slmfg(&["--format", "records", "solve-nep", "--problem", &corpus("ex1"), "--x", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.starts_with("kind=report command=solve-nep\nkind=config "), "{text}");
    assert!(text.contains("y=[-1,-1,-1,-1]"), "{text}");
    assert_unique_keys(&text);
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(slmfg(&["solve-nep", "--problem", "/nonexistent/p.slmfg", "--x", "1"]).status.code(), Some(2));
    assert_eq!(slmfg(&["--bogus"]).status.code(), Some(2));
    assert_eq!(slmfg(&["solve-nep", "--problem", &corpus("ex1"), "--x", "1,2"]).status.code(), Some(2));
    let o = slmfg(&["corpus", "show", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
}

#[test]
fn vertex_crcq_gate_fails_its_hypothesis_on_touching_discs() {
    let o = slmfg(&["--format", "records", "gate", "--problem", &corpus("ex4"), "--theorem", "t2.4", "--point", "0,0,0,0,0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("HypothesisFailed(crcq)"), "{text}");
    assert_unique_keys(&text);
}

#[test]
fn config_file_values_show_in_the_report_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\ngrid-step = 0.1\nformat = \"records\"\n").unwrap();
    let o = slmfg(&["--config", cfg.to_str().unwrap(), "--seed", "5", "corpus", "list"]);
    assert_eq!(o.status.code(), Some(0));
    let config = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(config.contains(" seed=5 ") && config.contains(" grid-step=0.1 "), "{config}");

    std::fs::write(&cfg, "unknown-key = 1\n").unwrap();
    assert_eq!(slmfg(&["--config", cfg.to_str().unwrap(), "corpus", "list"]).status.code(), Some(2));
}

#[test]
fn refused_reduction_exits_one_and_override_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reduced.slmfg");
    let out = out.to_str().unwrap();
    assert_eq!(slmfg(&["reduce-gnep", "--problem", &corpus("gnep-nonconvex"), "--out", out]).status.code(), Some(1));
    let o = slmfg(&["reduce-gnep", "--problem", &corpus("gnep-nonconvex"), "--out", out, "--assume-jointly-convex"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(std::fs::read_to_string(out).unwrap().contains("follower g"));
}

#[test]
fn reformulation_round_trips_through_check_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex3.mpcc.slmfg");
    let out = out.to_str().unwrap();
    assert_eq!(slmfg(&["reformulate", "--problem", &corpus("ex3"), "--out", out]).status.code(), Some(0));
    let o = slmfg(&["--format", "records", "check-point", "--mpcc", out, "--point", "0,1,1,0,1,0,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_unique_keys(&stdout(&o));
}
