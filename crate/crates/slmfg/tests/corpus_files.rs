use std::path::PathBuf;

use slmfg::format::{load_problem, render_problem};
use slmfg_core::corpus::{builtin, builtin_problem, IDS};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn header(id: &str) -> String {
    let e = builtin(id).unwrap();
    let mut h = format!("# {}: {}\n", e.id, e.title);
    if !e.note.is_empty() {
        h.push_str(&format!("# {}\n", e.note));
    }
    h.push('\n');
    h
}

/// Set `SLMFG_WRITE_CORPUS=1` to regenerate the shipped files.
#[test]
fn shipped_files_match_builtins() {
    for id in IDS {
        let path = dir().join(format!("{id}.slmfg"));
        let p = builtin_problem(id).unwrap();
        if std::env::var_os("SLMFG_WRITE_CORPUS").is_some() {
            std::fs::write(&path, header(id) + &render_problem(&p)).unwrap();
        }
        assert_eq!(load_problem(&path).unwrap(), p, "{id}");
    }
}

#[test]
fn save_then_load_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    for id in IDS {
        let p = builtin_problem(id).unwrap();
        let path = tmp.path().join(id);
        slmfg::save_problem(&path, &p).unwrap();
        assert_eq!(load_problem(&path).unwrap(), p, "{id}");
    }
}
