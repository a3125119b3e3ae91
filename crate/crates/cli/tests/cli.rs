use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqgp::model::LinearFilterModel;
use seqgp::{Dynamics, FeatureMap, Kernel, SequentialModel};
use seqgp_cli::{ingest_csv, run_stream, Config};

const RFF: &str = "model=linear\nkernel=se\nkernel.variance=1\nkernel.lengthscale=0.8\nnoise_var=0.1\nfeatures.kind=rff\nfeatures.F=64\n";

fn seqgp(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_seqgp"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stream_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("x1,y\n");
    for i in 0..n {
        let x: f64 = rng.random_range(-4.0..4.0);
        if i % 7 == 3 {
            s += &format!("{x},\n");
        } else {
            s += &format!("{x},{}\n", x.sin() + 0.3 * rng.random_range(-1.0..1.0));
        }
    }
    s
}

#[test]
fn identical_inputs_give_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rff.cfg", RFF);
    let input = write(dir.path(), "in.csv", &stream_csv(80, 1));
    let a = seqgp(
        &["run", "--config", &cfg, "--input", &input, "--seed", "7"],
        None,
    );
    let b = seqgp(
        &["run", "--config", &cfg, "--input", &input, "--seed", "7"],
        None,
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let c = seqgp(
        &["run", "--config", &cfg, "--input", &input, "--seed", "8"],
        None,
    );
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn row_prediction_never_sees_its_own_target() {
    let cfg = Config::parse(&format!("{RFF}seed=3")).unwrap();
    let base = ingest_csv(stream_csv(60, 2).as_bytes()).unwrap();
    let before = run_stream(&cfg, &base).unwrap();
    for k in [0, 10, 59] {
        if base.records[k].y.is_none() {
            continue;
        }
        let mut canary = base.clone();
        canary.records[k].y = canary.records[k].y.map(|y| y + 25.0);
        let after = run_stream(&cfg, &canary).unwrap();
        for i in 0..=k {
            assert_eq!(before.rows[i].mean.to_bits(), after.rows[i].mean.to_bits());
            assert_eq!(before.rows[i].var.to_bits(), after.rows[i].var.to_bits());
        }
        assert_ne!(before.rows[k].log_density, after.rows[k].log_density);
        if k + 1 < base.records.len() {
            assert_ne!(before.rows[k + 1].mean, after.rows[k + 1].mean);
        }
    }
}

#[test]
fn cli_matches_library_loop_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rff.cfg", RFF);
    let text = stream_csv(100, 3);
    let out = seqgp(&["run", "--config", &cfg, "--seed", "11"], Some(&text));
    assert!(out.status.success());
    let report = String::from_utf8(out.stdout).unwrap();

    let kernel = Kernel::squared_exponential(1.0, 0.8).unwrap();
    let map = FeatureMap::sample_rff(&kernel, 64, 1, 11).unwrap();
    let mut model = LinearFilterModel::new(map, Dynamics::Static, 0.1).unwrap();
    let data = ingest_csv(text.as_bytes()).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "x1,y,mean,var,log_density");
    assert_eq!(lines.len(), data.records.len() + 2);
    for (rec, line) in data.records.iter().zip(&lines[1..]) {
        let o = model.step(&rec.x, rec.y).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(
            cells[2].parse::<f64>().unwrap().to_bits(),
            o.predictive.mean.to_bits()
        );
        assert_eq!(
            cells[3].parse::<f64>().unwrap().to_bits(),
            o.predictive.obs_var().to_bits()
        );
        match o.log_density {
            Some(l) => assert_eq!(cells[4].parse::<f64>().unwrap().to_bits(), l.to_bits()),
            None => assert_eq!(cells[4], ""),
        }
    }
    assert!(lines.last().unwrap().starts_with("# {"));
}

#[test]
fn worked_example_through_fit_exact() {
    let out = seqgp(
        &[
            "fit-exact",
            "--set",
            "kernel=se",
            "--set",
            "kernel.variance=1",
            "--set",
            "kernel.lengthscale=0.7071067811865476",
            "--set",
            "noise_var=1e-10",
        ],
        Some("t,y\n0,0.5\n1,-0.2\n2.5,1.0\n2.0,\n"),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,mean,var,w_1,w_2,w_3");
    let cells: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
    for (w, e) in cells[3..].iter().zip([-0.104, 0.328, 0.744]) {
        assert!((w - e).abs() < 1e-3);
    }
    assert!((cells[2] - 0.3016).abs() < 1e-3);
    assert!(lines[2].starts_with("# {"));
}

#[test]
fn empty_input_gives_empty_report() {
    let out = seqgp(
        &[
            "run",
            "--set",
            "model=markov",
            "--set",
            "kernel=matern12",
            "--set",
            "kernel.variance=1",
            "--set",
            "kernel.lengthscale=1",
            "--set",
            "noise_var=0.1",
        ],
        Some("t,y\n"),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].contains("\"count\":0"));
    assert!(!text.contains("NaN"));
}

#[test]
fn exit_codes() {
    let markov = [
        "run",
        "--set",
        "model=markov",
        "--set",
        "kernel=matern12",
        "--set",
        "kernel.variance=1",
        "--set",
        "kernel.lengthscale=1",
    ];
    // Missing noise variance.
    let out = seqgp(&markov, Some("t,y\n0,1\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise_var"));

    let mut with_noise = markov.to_vec();
    with_noise.extend(["--set", "noise_var=0.1"]);
    // Markovian models are time-only.
    let out = seqgp(&with_noise, Some("t,x1,y\n0,1,2\n"));
    assert_eq!(out.status.code(), Some(2));
    // Malformed number, reported with row and column.
    let out = seqgp(&with_noise, Some("t,y\n0,1\n1,abc\n"));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("row 2") && err.contains("`y`"), "{err}");
    // Time going backwards.
    let out = seqgp(&with_noise, Some("t,y\n0,1\n1,2\n0.5,3\n"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    // Stochastic component without a seed.
    let out = seqgp(
        &[
            "run",
            "--set",
            "model=linear",
            "--set",
            "kernel=se",
            "--set",
            "kernel.variance=1",
            "--set",
            "kernel.lengthscale=1",
            "--set",
            "noise_var=0.1",
            "--set",
            "features.kind=rff",
            "--set",
            "features.F=8",
        ],
        Some("x1,y\n0,1\n"),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ensemble_rows_carry_weights() {
    let cfg = "model=ensemble\nensemble.members=short,long\nensemble.combiner=bma\nkernel=matern32\nkernel.variance=1\nkernel.lengthscale=0.3\nnoise_var=0.05\nmember.short.model=markov\nmember.long.model=markov\nmember.long.kernel.lengthscale=5\n";
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "ens.cfg", cfg);
    let mut csv = String::from("t,y\n");
    for i in 0..50 {
        let t = 0.1 * i as f64;
        csv += &format!("{t},{}\n", (6.0 * t).sin());
    }
    let out = seqgp(&["run", "--config", &path], Some(&csv));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,y,mean,var,log_density,w_short,w_long");
    assert!(lines[1].ends_with(",0.5,0.5"));
    assert!(lines.last().unwrap().contains("\"final_weights\""));
}

#[test]
fn check_subcommand_reports_pass_lines() {
    let out = seqgp(
        &[
            "check",
            "--set",
            "model=markov",
            "--set",
            "kernel=matern32",
            "--set",
            "kernel.variance=1",
            "--set",
            "kernel.lengthscale=0.5",
            "--set",
            "noise_var=0.1",
        ],
        None,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
    assert!(text.contains("markov_matches_exact_evidence"));
}

#[test]
fn spatiotemporal_run_from_locations_file() {
    let dir = tempfile::tempdir().unwrap();
    let locs = write(dir.path(), "sites.csv", "lon\n0\n0.5\n1.0\n");
    let mut csv = String::from("t,site,y\n");
    for i in 0..20 {
        for s in 0..3 {
            let t = 0.2 * i as f64;
            csv += &format!("{t},{s},{}\n", (t + 0.5 * s as f64).sin());
        }
    }
    let out = seqgp(
        &[
            "run",
            "--set",
            "model=markov",
            "--set",
            "kernel=matern12",
            "--set",
            "kernel.variance=1",
            "--set",
            "kernel.lengthscale=1",
            "--set",
            "noise_var=0.05",
            "--set",
            "spatial.kernel=se",
            "--set",
            "spatial.kernel.lengthscale=0.7",
            "--set",
            &format!("spatial.locations={locs}"),
            "--set",
            "emit_smoothed=true",
        ],
        Some(&csv),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 62);
    assert!(text.contains("spatial_normalization"));
}
