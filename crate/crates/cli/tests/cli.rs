use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pmcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmcert"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("PMCERT_THREADS", "1")
        .output()
        .expect("spawn pmcert")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn gen_doubled_and_lnorm() {
    let dir = tempfile::tempdir().unwrap();
    let chsh = dir.path().join("chsh.txt");
    let doubled = dir.path().join("d.txt");
    assert!(pmcert(&["gen", "--family", "2", "--out", chsh.to_str().unwrap()]).status.success());
    let o = pmcert(&["gen", "--doubled", chsh.to_str().unwrap(), "--out", doubled.to_str().unwrap()]);
    assert!(o.status.success());
    let d = doubled.to_str().unwrap();
    assert_eq!(stdout(&pmcert(&["lnorm", d])).trim(), "4");
    assert_eq!(stdout(&pmcert(&["lnorm", d, "--bruteforce"])).trim(), "4");
    assert_eq!(stdout(&pmcert(&["lnorm", d, "--local"])).trim(), "4");
    assert_eq!(stdout(&pmcert(&["lnorm", chsh.to_str().unwrap(), "--local"])).trim(), "2");
    assert_eq!(stdout(&pmcert(&["lnorm", d, "--seesaw"])).trim(), "4");
    assert_eq!(stdout(&pmcert(&["lnorm", d, "--k", "3"])).trim(), "6");
    assert_eq!(stdout(&pmcert(&["lnorm", d, "--k", "3", "--bruteforce"])).trim(), "6");
}

#[test]
fn witness_groups_are_printed() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.txt", "3 2\n1 2\n-3 1\n2 -2\n");
    let out = stdout(&pmcert(&["lnorm", &m, "--witness"]));
    let mut lines = out.lines();
    let value: i64 = lines.next().unwrap().parse().unwrap();
    let groups = lines.next().unwrap();
    assert!(groups.starts_with("groups "));
    assert_eq!(groups.split_whitespace().count(), 4);
    assert_eq!(value, stdout(&pmcert(&["lnorm", &m, "--bruteforce"])).trim().parse().unwrap());
}

#[test]
fn headerless_input_with_dims() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.txt", "1 1\n1 -1\n");
    let o = pmcert(&["lnorm", &m, "--dims", "2", "2", "--local"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "2");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pmcert(&["lnorm", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(pmcert(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing.txt");
    assert_eq!(pmcert(&["lnorm", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.txt", "2 2\n1 x\n1 1\n");
    assert_eq!(pmcert(&["lnorm", &bad]).status.code(), Some(2));
    let wide = write(dir.path(), "wide.txt", &format!("2 40\n{}\n{}\n", "1 ".repeat(40), "-1 ".repeat(40)));
    assert_eq!(pmcert(&["lnorm", &wide, "--k", "3", "--bruteforce"]).status.code(), Some(0));
    let big = format!("40 40\n{}", format!("{}\n", "1 ".repeat(40)).repeat(40));
    let big = write(dir.path(), "big.txt", &big);
    assert_eq!(pmcert(&["lnorm", &big, "--bruteforce"]).status.code(), Some(3));
    assert_eq!(pmcert(&["--threads", "0", "lnorm", &bad]).status.code(), Some(1));
}

#[test]
fn certify_doubled_chsh() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "d.txt", "4 2\n1 1\n1 -1\n-1 -1\n-1 1\n");
    let out = dir.path().join("cert.txt");
    let o = pmcert(&["certify", "--matrix", &m, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let kv = fs::read_to_string(out).unwrap();
    assert!(kv.contains("l2_exact = 4") || kv.contains("l2_exact=4"), "{kv}");
    assert!(kv.contains("margin_ok"), "{kv}");
}

#[test]
fn certify_fails_without_quantum_advantage() {
    let dir = tempfile::tempdir().unwrap();
    // rank one: the qubit value equals the classical one
    let m = write(dir.path(), "m.txt", "2 2\n1 1\n1 1\n");
    assert_eq!(pmcert(&["certify", "--matrix", &m]).status.code(), Some(4));
}

#[test]
fn integerize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.txt", "2 2\n0.0015 -0.0025\n1.25 -0.9999\n");
    let out = dir.path().join("w.txt");
    let o = pmcert(&["integerize", &r, "--scale", "1000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let o = pmcert(&["lnorm", out.to_str().unwrap(), "--local"]);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.split_whitespace().collect::<Vec<_>>(), ["2", "2", "1", "-2", "1250", "-999"]);
}

#[test]
fn gilbert_pilot_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    let h = dir.path().join("h.csv");
    let o = pmcert(&[
        "gilbert",
        "--packing",
        "8",
        "--eta",
        "0.8",
        "--imax",
        "2000",
        "--witness",
        w.to_str().unwrap(),
        "--history",
        h.to_str().unwrap(),
        "--verify",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("violated = true"));
    let hist = fs::read_to_string(h).unwrap();
    let d: Vec<f64> = hist.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(d.windows(2).all(|p| p[1] <= p[0]));
}

#[test]
fn gisin_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let o = pmcert(&["gisin", "--samples", "20000", "--pairs", "random:3", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 4);
    assert_eq!(pmcert(&["gisin", "--pairs", "grid"]).status.code(), Some(1));
}

#[test]
fn packing_output_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.txt");
    assert!(pmcert(&["gen", "--packing", "5", "--out", v.to_str().unwrap()]).status.success());
    let m = write(dir.path(), "m.txt", "5 5\n1 0 0 0 0\n0 1 0 0 0\n0 0 1 0 0\n0 0 0 1 0\n0 0 0 0 1\n");
    let o = pmcert(&["qlb", &m, "--vectors", v.to_str().unwrap(), "--fixed"]);
    assert!(o.status.success());
    let q: f64 = stdout(&o).trim().parse().unwrap();
    assert!((q - 5.0).abs() < 1e-9);
}
