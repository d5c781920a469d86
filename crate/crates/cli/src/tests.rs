use std::path::Path;

use clap::Parser;
use rotalith::geometry::{random_rotation, rotate_cloud};
use rotalith::io::write_cloud;
use rotalith::pipeline::{toy_synth, ToyClass};

use crate::commands::{self, Cli};
use crate::{exit_code, parse_status};

struct Outcome {
    code: u8,
    stdout: String,
    stderr: String,
}

/// Runs one invocation in-process; relative names are resolved against `dir`.
fn rotalith(dir: &Path, args: &[&str]) -> Outcome {
    let args: Vec<String> = args.iter().map(|a| resolve(dir, a)).collect();
    let cli = match Cli::try_parse_from(std::iter::once("rotalith".to_string()).chain(args)) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let code = parse_status(&e);
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    match commands::run(cli.command) {
        Ok(stdout) => Outcome { code: 0, stdout, stderr: String::new() },
        Err(e) => Outcome { code: exit_code(&e), stdout: String::new(), stderr: format!("{e:#}") },
    }
}

fn resolve(dir: &Path, name: &str) -> String {
    if name.ends_with(".xyz") || name.ends_with(".rta") || name.ends_with(".csv") {
        dir.join(name).to_string_lossy().into_owned()
    } else {
        name.to_string()
    }
}

fn cloud_pair(dir: &Path) {
    let s = toy_synth(&[ToyClass::Cube], 1, 256, 0.01, 4).unwrap().remove(0);
    write_cloud(dir.join("a.xyz"), &s.points, Some(&s.parts)).unwrap();
    let r = rotate_cloud(&random_rotation(4), &s.points);
    write_cloud(dir.join("b.xyz"), &r, Some(&s.parts)).unwrap();
}

#[test]
fn help_succeeds_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rotalith(dir.path(), &["--help"]).code, 0);
    for sub in ["voxelize", "equiv-check", "init-weights", "features", "match", "bench", "toy", "fps", "knn"]
    {
        let out = rotalith(dir.path(), &[sub, "--help"]);
        assert_eq!(out.code, 0, "{sub}");
        assert!(out.stdout.contains("Usage"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotalith(dir.path(), &["voxelize", "--bogus"]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("Usage"));
    assert!(out.stdout.is_empty());
    assert_eq!(rotalith(dir.path(), &["equiv-check", "--pipeline", "cnn"]).code, 1);
    assert_eq!(rotalith(dir.path(), &[]).code, 1);
    assert_eq!(rotalith(dir.path(), &["equiv-check", "--pipeline", "prin", "--bandwidth", "1"]).code, 1);
    assert_eq!(rotalith(dir.path(), &["--threads", "many", "bench", "--op", "voxelize"]).code, 1);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = rotalith(d, &["fps", "--in", "nope.xyz", "--m", "3"]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("nope.xyz"));

    std::fs::write(d.join("bad.xyz"), "0 0 0\n1 two 3\n").unwrap();
    let bad = rotalith(d, &["fps", "--in", "bad.xyz", "--m", "1"]);
    assert_eq!(bad.code, 2);
    assert!(bad.stderr.contains(":2:"));

    std::fs::write(d.join("far.xyz"), "0 0 0\n3 0 0\n").unwrap();
    let far = rotalith(d, &["voxelize", "--in", "far.xyz", "--out", "v.rta"]);
    assert_eq!(far.code, 2);
    assert!(!d.join("v.rta").exists());
    let fixed = rotalith(d, &["voxelize", "--in", "far.xyz", "--normalize", "--out", "v.rta"]);
    assert_eq!(fixed.code, 0);
    assert!(d.join("v.rta").exists());

    std::fs::write(d.join("junk.rta"), b"not an archive").unwrap();
    cloud_pair(d);
    let junk = rotalith(
        d,
        &["features", "--pipeline", "sprin", "--in", "a.xyz", "--weights", "junk.rta", "--out", "f.rta"],
    );
    assert_eq!(junk.code, 2);
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let args =
        ["toy", "--n", "6", "--points", "128", "--epochs", "5", "--lr", "1e300", "--pipeline", "sprin"];
    let out = rotalith(dir.path(), &args);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("diverged"));
}

#[test]
fn rotated_self_match_is_near_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud_pair(d);
    assert_eq!(
        rotalith(d, &["init-weights", "--pipeline", "sprin", "--seed", "2", "--out", "w.rta"]).code,
        0
    );
    for (cloud, out) in [("a.xyz", "fa.rta"), ("b.xyz", "fb.rta")] {
        let r = rotalith(
            d,
            &["features", "--pipeline", "sprin", "--in", cloud, "--weights", "w.rta", "--out", out],
        );
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert_eq!(r.stdout, "rows,cols\n256,256\n");
    }
    let m = rotalith(d, &["match", "--a", "fa.rta", "--b", "fb.rta"]);
    assert_eq!(m.code, 0);
    let mut lines = m.stdout.lines();
    let accuracy: f64 = lines.next().unwrap().strip_prefix("accuracy,").unwrap().parse().unwrap();
    assert!(accuracy >= 0.99, "{accuracy}");
    assert_eq!(lines.next(), Some("index,match,distance"));
    assert_eq!(lines.count(), 256);

    let labelled = rotalith(
        d,
        &["match", "--a", "fa.rta", "--b", "fb.rta", "--labels-a", "a.xyz", "--labels-b", "b.xyz"],
    );
    assert!(labelled.stdout.starts_with("accuracy,1.000000\n"));
}

#[test]
fn weights_and_pipeline_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud_pair(d);
    assert_eq!(
        rotalith(d, &["init-weights", "--pipeline", "prin", "--bandwidth", "4", "--out", "w.rta"]).code,
        0
    );
    let wrong = rotalith(
        d,
        &["features", "--pipeline", "sprin", "--in", "a.xyz", "--weights", "w.rta", "--out", "f.rta"],
    );
    assert_eq!(wrong.code, 2);
    let global = rotalith(
        d,
        &[
            "features",
            "--pipeline",
            "prin",
            "--in",
            "a.xyz",
            "--weights",
            "w.rta",
            "--out",
            "g.rta",
            "--global",
        ],
    );
    assert_eq!(global.code, 0, "{}", global.stderr);
    assert_eq!(global.stdout, "rows,cols\n1,50\n");
}

#[test]
fn equiv_check_reports_small_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotalith(
        dir.path(),
        &["equiv-check", "--pipeline", "prin", "--bandwidth", "6", "--trials", "4", "--seed", "9"],
    );
    assert_eq!(out.code, 0);
    let rows: Vec<&str> = out.stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].contains(",grid-z,") && rows[1].contains(",haar,"));
    for r in rows {
        let err: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!(err <= 1e-10, "{r}");
    }
}

#[test]
fn bench_reports_timings() {
    let dir = tempfile::tempdir().unwrap();
    let ok = rotalith(dir.path(), &["bench", "--op", "svc", "--bandwidth", "4", "--repeat", "2"]);
    assert_eq!(ok.code, 0);
    assert!(ok.stdout.starts_with("op,impl,bandwidth,repeat,min_s,median_s,mean_s,max_s\nsvc,spectral,4,2,"));
}

#[test]
fn debug_utilities() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("sq.xyz"), "1 0 0\n0 1 0\n-1 0 0\n0 -1 0\n").unwrap();
    let fps = rotalith(d, &["fps", "--in", "sq.xyz", "--m", "3", "--start", "0"]);
    assert_eq!(fps.stdout, "rank,index\n0,0\n1,2\n2,1\n");
    let knn = rotalith(d, &["knn", "--in", "sq.xyz", "--k", "2"]);
    assert_eq!(knn.stdout, "query,neighbors\n0,0 1\n1,1 0\n2,2 1\n3,3 0\n");
    let too_many = rotalith(d, &["fps", "--in", "sq.xyz", "--m", "9"]);
    assert_eq!(too_many.code, 2);
}
