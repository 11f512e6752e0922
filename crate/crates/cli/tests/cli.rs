use std::fs;
use std::path::Path;
use std::process::Command;

fn matcomp(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_matcomp")).args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn closure_of_almost_full_2x2() {
    let dir = tempfile::tempdir().unwrap();
    let mask = write(dir.path(), "m.txt", "2 2\n1 1\n1 2\n2 1\n");
    for backend in ["svd", "modp"] {
        let (ok, out, err) = matcomp(&["closure", "--mask", &mask, "--rank", "1", "--backend", backend]);
        assert!(ok, "{err}");
        assert!(out.starts_with("2 2\n1 1\n1 2\n2 1\n2 2\n"), "{out}");
    }
    let (ok, out, _) = matcomp(&["closure", "--mask", &mask, "--rank", "1", "--entry", "2", "2"]);
    assert!(ok);
    assert_eq!(out.trim(), "2 2 COMPLETABLE");
    let (ok, _, _) = matcomp(&["closure", "--mask", &mask, "--rank", "1", "--entry", "3", "1"]);
    assert!(!ok);
}

#[test]
fn complete_reports_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.txt", "2 2\n1 1 2\n1 2 3\n2 1 4\n");
    let (ok, out, err) = matcomp(&["complete", "--data", &data, "--rank", "1"]);
    assert!(ok, "{err}");
    assert!(out.contains("2 2 6 # RECONSTRUCTED step=1"), "{out}");
    assert!(out.contains("1 1 2 # OBSERVED"));
}

#[test]
fn genmask_is_reproducible_and_written_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let args = ["genmask", "--model", "regular-plus", "--n", "10", "--rank", "2", "--seed", "7", "--out"];
        let (ok, _, err) = matcomp(&[&args[..], &[p.to_str().unwrap()]].concat());
        assert!(ok, "{err}");
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 40);
}

#[test]
fn sweep_density_csv_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let args = [
            "sweep-density", "--m", "8", "--n", "8", "--rank", "1", "--counts", "0:64:16", "--trials", "4",
            "--threads", "2", "--out",
        ];
        let (ok, _, err) = matcomp(&[&args[..], &[p.to_str().unwrap()]].concat());
        assert!(ok, "{err}");
        fs::read_to_string(p).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    let lines: Vec<&str> = first.lines().collect();
    assert!(lines[0].starts_with("model,offset,edges,trials,min_degree"));
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[5].starts_with("density,NA,64,4,1.0000,1.0000,1.0000,NA,1.0000,1.0000"), "{}", lines[5]);
}

#[test]
fn graph_and_rank1_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mask = write(dir.path(), "m.txt", "3 3\n1 1\n1 2\n2 1\n2 2\n");
    let (ok, out, err) = matcomp(&[
        "graph", "--mask", &mask, "--kcore", "2", "--biclique", "2", "2", "--connectivity", "2", "--sparse", "1",
    ]);
    assert!(ok, "{err}");
    assert!(out.contains("kcore\tk=2\trows=2 cols=2 entries=4"), "{out}");
    assert!(out.contains("biclique\td1=2 d2=2\trows=1,2 cols=1,2"));
    assert!(out.contains("edge-connectivity\tr=2\tfalse"));
    assert!(out.contains("sparsity\tr=1\tVIOLATION"));

    let noise = write(dir.path(), "s.txt", "3 3\n1 1 1\n1 2 1\n2 1 1\n2 2 1\n");
    let (ok, out, err) = matcomp(&["rank1", "variance", "--mask", &mask, "--noise", &noise, "--all-missing"]);
    assert!(ok, "{err}");
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "c1,c2,c3");
    assert_eq!(rows[1], "0.750000,0.750000,-1");

    let data = write(dir.path(), "d.txt", "2 2\n1 1 2\n1 2 3\n2 1 4\n");
    let noise = write(dir.path(), "n.txt", "2 2\n1 1 1\n1 2 1\n2 1 1\n");
    let (ok, out, err) = matcomp(&["rank1", "estimate", "--data", &data, "--noise", &noise, "--entry", "2", "2"]);
    assert!(ok, "{err}");
    let fields: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert!((fields[2].parse::<f64>().unwrap() - 6.0).abs() < 1e-12);
    assert!((fields[4].parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn ratings_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for u in 1..=5 {
        for i in 1..=5 {
            text.push_str(&format!("{}\t{}\t3\t0\n", u * 10, i * 7));
        }
    }
    let ratings = write(dir.path(), "u.data", &text);
    let (ok, out, err) = matcomp(&["rcore", "--ratings", &ratings, "--r-max", "9"]);
    assert!(ok, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "r,rows,cols,entries");
    assert_eq!(lines[5], "5,5,5,25");
    assert_eq!(lines[6], "6,0,0,0");
    assert_eq!(lines.len(), 7);

    let (ok, out, err) = matcomp(&["closure-curve", "--ratings", &ratings, "--ranks", "1,2", "--pipeline", "closure-then-minor"]);
    assert!(ok, "{err}");
    assert!(out.contains("1,5,5,25,0,0.000000,OK"), "{out}");

    let bad = write(dir.path(), "bad.data", "1 2\n1 x\n");
    let (ok, _, err) = matcomp(&["rcore", "--ratings", &bad]);
    assert!(!ok);
    assert!(err.contains("line 2"), "{err}");
}
