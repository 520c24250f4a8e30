#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use layerscope::io::{self, DenseMatrix, Manifest, Modality, ResponseSeries, Sampling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn layerscope(dir: &Path, threads: Option<usize>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_layerscope"));
    cmd.current_dir(dir).env_remove("LAYERSCOPE_THREADS");
    if let Some(n) = threads {
        cmd.arg("--threads").arg(n.to_string());
    }
    cmd.args(args).output().expect("spawn layerscope")
}

pub fn ok(dir: &Path, threads: Option<usize>, args: &[&str]) -> String {
    let out = layerscope(dir, threads, args);
    assert!(
        out.status.success(),
        "layerscope {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let c = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[c].parse().unwrap()).collect()
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Synth fixture, then I_d and fMRI encoding per layer, then the trajectory
/// table. Returns the per-layer paths of the I_d and encoding CSVs.
pub fn fixture_pipeline(dir: &Path, threads: Option<usize>, n_times: usize, max_exp: u32) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let nt = n_times.to_string();
    let me = max_exp.to_string();
    ok(dir, threads, &["synth", "fixture", "--out-dir", "fx", "--n-times", &nt, "--seed", "11"]);
    let layers = column(&dir.join("fx/truth.csv"), "layer").len();
    let mut ids = Vec::new();
    let mut encs = Vec::new();
    for l in 0..layers {
        let acts = format!("fx/layer_{l:02}.lam");
        let id = format!("id_{l:02}.csv");
        let enc = format!("enc_{l:02}.csv");
        ok(dir, threads, &["id", "estimate", "--input", &acts, "--max-exp", &me, "--seed", "5", "--out", &id]);
        ok(
            dir,
            threads,
            &["encode", "fmri", "--features", &acts, "--timeline", "fx/timeline.tsv", "--response", "fx/response.lam", "--out", &enc],
        );
        ids.push(dir.join(id));
        encs.push(dir.join(enc));
    }
    let mut args = vec!["stats", "table", "--out", "table.csv", "--layers-out", "layers.csv", "--channels-out", "channels.csv", "--permutations", "2000", "--seed", "3", "--profiles"];
    let names: Vec<String> = ids.iter().chain(&encs).map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    args.extend(names.iter().map(String::as_str));
    ok(dir, threads, &args);
    (ids, encs)
}

/// Inputs for the commands the fixture does not cover.
pub fn write_side_inputs(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // lens: final = A h + b + noise
    let (n, d, v) = (600, 6, 12);
    let h = gaussian(n, d, &mut rng);
    let a = gaussian(d, d, &mut rng).to_dmatrix() * 0.5;
    let hf = h.to_dmatrix() * a.transpose() + gaussian(n, d, &mut rng).to_dmatrix() * 0.05;
    let m = |layer| Manifest {
        model: "toy".into(),
        layer,
        ..Default::default()
    };
    io::write_matrix(&h, &m(2), &dir.join("h2.lam")).unwrap();
    io::write_matrix(&DenseMatrix::from_dmatrix(&hf).unwrap(), &m(4), &dir.join("h4.lam")).unwrap();
    io::write_matrix(&gaussian(v, d, &mut rng), &m(0), &dir.join("unembed.lam")).unwrap();
    let targets: Vec<String> = (0..n).map(|_| rng.gen_range(0..v).to_string()).collect();
    io::write_labels(&targets, &dir.join("targets.tsv")).unwrap();

    // probes: labels from the sign of a fixed projection
    for (split, rows) in [("train", 300), ("val", 100), ("test", 100)] {
        let x = gaussian(rows, 5, &mut rng);
        let labels: Vec<&str> = x.iter_rows().map(|r| if r[0] + r[1] > 0.0 { "pos" } else { "neg" }).collect();
        let y: Vec<f64> = x.iter_rows().map(|r| 2.0 * r[2] - r[3]).collect();
        io::write_matrix(&x, &m(3), &dir.join(format!("{split}_x.lam"))).unwrap();
        io::write_labels(&labels, &dir.join(format!("{split}_y.tsv"))).unwrap();
        io::write_matrix(&DenseMatrix::new(rows, 1, y).unwrap(), &m(3), &dir.join(format!("{split}_t.lam"))).unwrap();
    }

    // raw ECoG-like recording at 1 kHz
    let raw = gaussian(4000, 4, &mut rng);
    let manifest = Manifest {
        subject: "s1".into(),
        modality: Modality::Ecog,
        ..Default::default()
    };
    ResponseSeries::with_default_ids(raw, Sampling::Rate(1000.0), manifest.clone())
        .unwrap()
        .write(&dir.join("raw.lam"))
        .unwrap();
    // word-aligned response at 100 Hz
    let case = layerscope::synth::encoding_case(60, 4, &[1.0], 1).unwrap();
    case.timeline.write(&dir.join("words.tsv")).unwrap();
    io::write_matrix(case.features.features(), &m(1), &dir.join("words.lam")).unwrap();
    let t = 12_000;
    let mut y = vec![0.0; t * 2];
    for (e, on) in case.features.times().iter().enumerate() {
        let s = ((on + 0.25) * 100.0).round() as usize;
        if s < t {
            let f = case.features.features().row(e);
            y[s * 2] += f[0];
            y[s * 2 + 1] += f[1] - f[2];
        }
    }
    for v in y.iter_mut() {
        *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    ResponseSeries::with_default_ids(DenseMatrix::new(t, 2, y).unwrap(), Sampling::Rate(100.0), manifest)
        .unwrap()
        .write(&dir.join("ecog.lam"))
        .unwrap();
}

/// Every other subcommand on the side inputs.
pub fn side_pipeline(dir: &Path, threads: Option<usize>) {
    let run = |args: &[&str]| {
        ok(dir, threads, args);
    };
    run(&["synth", "hypercube", "--n", "800", "--d", "3", "--ambient", "10", "--seed", "2", "--out", "cube.lam"]);
    run(&["synth", "swiss-roll", "--n", "800", "--ambient", "6", "--seed", "2", "--out", "roll.lam"]);
    run(&["synth", "encoding-case", "--n-times", "200", "--dim", "4", "--channels", "3", "--snr", "2", "--seed", "4", "--out-dir", "case"]);
    run(&["id", "linear", "--input", "cube.lam", "--out", "cube_linear.csv"]);
    run(&["id", "estimate", "--input", "roll.lam", "--max-exp", "6", "--k", "4", "--seed", "1", "--out", "roll_id.csv"]);
    run(&["lens", "fit", "--layer-acts", "h2.lam", "--final-acts", "h4.lam", "--out", "lens_d.lam"]);
    run(&[
        "lens", "fit", "--layer-acts", "h2.lam", "--final-acts", "h4.lam", "--method", "gradient", "--lr", "0.01", "--epochs", "3", "--batch", "32",
        "--seed", "8", "--out", "lens_g.lam",
    ]);
    run(&[
        "lens", "eval", "--lens", "lens_d.lam", "--acts", "h2.lam", "--lens", "lens_g.lam", "--acts", "h2.lam", "--unembed", "unembed.lam", "--targets",
        "targets.tsv", "--out", "surprisal.csv",
    ]);
    run(&["rff", "gen", "--d-out", "128", "--timeline", "case/timeline.tsv", "--seed", "6", "--out", "rff.lam"]);
    run(&[
        "probe", "classify", "--train", "train_x.lam,train_y.tsv", "--val", "val_x.lam,val_y.tsv", "--test", "test_x.lam,test_y.tsv", "--task", "sign",
        "--lr", "0.05", "--epochs", "20", "--seed", "2", "--out", "probe_c.csv",
    ]);
    run(&["probe", "regress", "--train", "train_x.lam,train_t.lam", "--test", "test_x.lam,test_t.lam", "--task", "lin", "--out", "probe_r.csv"]);
    run(&["preprocess", "ecog", "--input", "raw.lam", "--car", "--band", "70,200", "--envelope", "0.05", "--out", "clean.lam"]);
    run(&[
        "encode", "ecog", "--features", "words.lam", "--timeline", "words.tsv", "--response", "ecog.lam", "--lags", "9", "--lag-range", "-1,1",
        "--out", "ecog_enc.csv", "--per-lag-out", "ecog_lags.csv",
    ]);
    run(&["stats", "correlate", "--x", "ecog_lags.csv:lag", "--y", "ecog_lags.csv:r", "--permutations", "500", "--seed", "4", "--out", "corr.csv"]);
}

/// Relative path -> bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, d: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
