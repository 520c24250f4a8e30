mod common;

use std::path::Path;

use common::{column, layerscope, ok, side_pipeline, snapshot, write_side_inputs};

const SUBCOMMANDS: &[(&[&str], &[&str])] = &[
    (&["id", "estimate"], &["--input", "--max-exp", "--k", "--bootstraps", "--seed", "--out"]),
    (&["id", "linear"], &["--input", "--out"]),
    (
        &["encode", "fmri"],
        &["--features", "--timeline", "--response", "--delays", "--alphas", "--test-frac", "--chunks", "--seed", "--tr", "--out"],
    ),
    (&["encode", "ecog"], &["--features", "--timeline", "--response", "--lags", "--lag-range", "--rate", "--per-lag-out", "--out"]),
    (&["preprocess", "ecog"], &["--input", "--rate", "--notch", "--harmonics", "--band", "--order", "--car", "--envelope", "--out"]),
    (&["lens", "fit"], &["--layer-acts", "--final-acts", "--method", "--lr", "--epochs", "--batch", "--seed", "--out"]),
    (&["lens", "eval"], &["--lens", "--acts", "--unembed", "--unembed-bias", "--targets", "--out"]),
    (&["rff", "gen"], &["--d-in", "--d-out", "--sigma", "--timeline", "--seed", "--out"]),
    (&["probe", "classify"], &["--train", "--val", "--test", "--task", "--seed", "--out"]),
    (&["probe", "regress"], &["--train", "--test", "--alphas", "--out"]),
    (&["stats", "correlate"], &["--x", "--y", "--method", "--permutations", "--seed", "--out"]),
    (&["stats", "table"], &["--profiles", "--permutations", "--seed", "--out", "--layers-out", "--channels-out", "--threshold"]),
    (&["synth", "hypercube"], &["--n", "--d", "--ambient", "--noise", "--seed", "--out"]),
    (&["synth", "swiss-roll"], &["--n", "--ambient", "--seed", "--out"]),
    (&["synth", "encoding-case"], &["--n-times", "--dim", "--snr", "--channels", "--seed", "--out-dir"]),
    (&["synth", "fixture"], &["--layers", "--n-times", "--channels", "--snr", "--seed", "--out-dir"]),
];

#[test]
fn help_on_every_subcommand() {
    let dir = Path::new(".");
    for (path, flags) in SUBCOMMANDS {
        let mut args = path.to_vec();
        args.push("--help");
        let out = layerscope(dir, None, &args);
        assert_eq!(out.status.code(), Some(0), "{path:?}");
        let text = String::from_utf8_lossy(&out.stdout);
        for f in *flags {
            assert!(text.contains(f), "{path:?} --help lacks {f}");
        }
        assert!(text.contains("--threads"));
    }
    for group in ["id", "encode", "preprocess", "lens", "rff", "probe", "stats", "synth"] {
        assert_eq!(layerscope(dir, None, &[group, "--help"]).status.code(), Some(0));
    }
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = layerscope(dir.path(), None, &["id", "estimate", "--input", "missing.lam", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("E:core-io:not-found:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["id", "linear", "--input", "a.lam", "--out", "b.csv", "--bogus"][..],
        &["id"],
        &["frobnicate"],
        &["encode", "fmri", "--features", "f.lam"],
        &["encode", "fmri", "--features", "f", "--timeline", "t", "--response", "r", "--out", "o", "--alphas", "log:1:2"],
        &["synth", "hypercube", "--d", "x", "--out", "o.lam"],
    ] {
        let out = layerscope(dir.path(), None, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).starts_with("E:cli:usage:"), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn corrupt_input_and_computation_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.lam"), b"NOPE....................").unwrap();
    let out = layerscope(dir.path(), None, &["id", "linear", "--input", "bad.lam", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("E:core-io:bad-magic:"), "{}", stderr(&out));

    ok(dir.path(), None, &["synth", "hypercube", "--n", "300", "--d", "2", "--ambient", "4", "--out", "c.lam"]);
    let out = layerscope(dir.path(), None, &["id", "estimate", "--input", "c.lam", "--k", "3", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("E:intrinsic-dim:invalid:"), "{}", stderr(&out));
}

#[test]
fn every_output_has_header_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_side_inputs(dir.path());
    let before = snapshot(dir.path());
    side_pipeline(dir.path(), Some(1));
    let after = snapshot(dir.path());
    let new: Vec<_> = after.keys().filter(|p| !before.contains_key(*p)).collect();
    assert!(new.len() > 20);
    for p in &new {
        let s = p.to_string_lossy();
        if s.ends_with(".manifest") {
            continue;
        }
        let sidecar = format!("{s}.manifest");
        assert!(after.contains_key(Path::new(&sidecar)), "{s} has no manifest");
        if s.ends_with(".csv") {
            let first = String::from_utf8_lossy(&after[*p]).lines().next().unwrap_or("").to_string();
            assert!(first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()), "{s}: header {first:?}");
        }
    }
    let manifest = String::from_utf8_lossy(&after[Path::new("lens_g.lam.manifest")]).into_owned();
    for key in ["\"seed\": \"8\"", "\"lr\": \"0.01\"", "\"fit_method\": \"gradient\"", "\"best_epoch\""] {
        assert!(manifest.contains(key), "{manifest}");
    }
    assert!(!manifest.contains("threads"));
}

#[test]
fn side_outputs_are_sensible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_side_inputs(d);
    side_pipeline(d, None);
    assert_eq!(column(&d.join("cube_linear.csv"), "pca_d"), [3.0]);
    let acc = column(&d.join("probe_c.csv"), "value")[0];
    assert!(acc > 0.85, "{acc}");
    let r2 = column(&d.join("probe_r.csv"), "value")[0];
    assert!(r2 > 0.99, "{r2}");
    let lags = column(&d.join("ecog_enc.csv"), "best_lag");
    assert!(lags.iter().all(|l| (l - 0.25).abs() < 1e-9), "{lags:?}");
    let s = column(&d.join("surprisal.csv"), "normalized");
    assert_eq!(s.len(), 2);
    assert!(s.iter().all(|v| *v > 0.0));
    let id = column(&d.join("roll_id.csv"), "id");
    let chosen = column(&d.join("roll_id.csv"), "chosen");
    let k = chosen.iter().position(|c| *c == 1.0).unwrap();
    assert!((id[k] - 2.0).abs() < 0.3, "{}", id[k]);
}

#[test]
fn stats_correlate_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "u,v\n1,2\n2,4\n3,5\n4,9\n5,10\n").unwrap();
    let text = ok(
        dir.path(),
        None,
        &["stats", "correlate", "--x", "a.csv:u", "--y", "a.csv:v", "--permutations", "999", "--seed", "1"],
    );
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,rho,p_value,n,n_permutations,seed");
    assert!(lines[1].starts_with("spearman,1,"));
    let out = layerscope(dir.path(), None, &["stats", "correlate", "--x", "a.csv:w", "--y", "a.csv:v"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("E:core-io:table:"));
}

#[test]
fn threads_env_fallback_matches_flag() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["synth", "hypercube", "--n", "600", "--d", "2", "--ambient", "5", "--seed", "3", "--out", "c.lam"];
    ok(a.path(), Some(2), &args);
    ok(b.path(), None, &args);
    let id = ["id", "estimate", "--input", "c.lam", "--max-exp", "5", "--out", "id.csv"];
    ok(a.path(), Some(3), &id);
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_layerscope"))
        .current_dir(b.path())
        .env("LAYERSCOPE_THREADS", "1")
        .args(id)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(snapshot(a.path()), snapshot(b.path()));
}
