//! End-to-end toy run against the checked-in outputs.
//!
//! `UPDATE_GOLDEN=1 cargo test -p lexsimp-cli --test golden` rewrites them.

mod common;

use common::{fixtures, golden_mismatches, run_toy, GOLDEN_FILES};

#[test]
fn toy_run_matches_golden_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    run_toy(tmp.path(), None);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let golden = fixtures().join("golden");
        std::fs::create_dir_all(&golden).unwrap();
        for f in GOLDEN_FILES {
            std::fs::copy(tmp.path().join(f), golden.join(f)).unwrap();
        }
    }
    assert_eq!(golden_mismatches(tmp.path()), Vec::<String>::new());
}

#[test]
fn concurrency_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_toy(a.path(), Some(1));
    run_toy(b.path(), Some(8));
    for f in GOLDEN_FILES {
        let fa = std::fs::read(a.path().join(f)).unwrap();
        let fb = std::fs::read(b.path().join(f)).unwrap();
        assert!(fa == fb, "{f} differs between concurrency 1 and 8");
    }
}
