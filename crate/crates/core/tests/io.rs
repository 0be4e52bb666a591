use pmcert::matrix::{gen_family, integerize, load_matrix, load_real_matrix, make_doubled, save_matrix};
use pmcert::qgeom::{gen_packing, load_vectors, parse_vectors, vectors_to_text};
use pmcert::{Error, RealMatrix, WitnessMatrix};

#[test]
fn witness_matrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for k in 1..=6 {
        let m = make_doubled(&gen_family(k).unwrap());
        let p = dir.path().join(format!("m{k}.txt"));
        save_matrix(&m, &p).unwrap();
        let back = load_matrix(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(std::fs::read_to_string(&p).unwrap(), back.to_text());
    }
}

#[test]
fn real_matrix_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let r = RealMatrix::from_fn(3, 4, |x, y| ((x * 7 + y) as f64).sin() / 3.0);
    let p = dir.path().join("r.txt");
    save_matrix(&r, &p).unwrap();
    assert_eq!(load_real_matrix(&p).unwrap(), r);
}

#[test]
fn vectors_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let v = gen_packing(9, 4, 500);
    let p = dir.path().join("v.txt");
    std::fs::write(&p, vectors_to_text(&v)).unwrap();
    assert_eq!(load_vectors(&p).unwrap(), v);
    assert_eq!(parse_vectors(&vectors_to_text(&v)).unwrap(), v);
}

#[test]
fn integerize_then_reload() {
    let dir = tempfile::tempdir().unwrap();
    let r = RealMatrix::from_rows(vec![vec![0.4567, -0.0009], vec![-1.2345, 2.0]]).unwrap();
    let w = integerize(&r, 1000).unwrap();
    assert_eq!(w, WitnessMatrix::from_rows(vec![vec![456, 0], vec![-1234, 2000]]).unwrap());
    let p = dir.path().join("w.txt");
    save_matrix(&w, &p).unwrap();
    assert_eq!(load_matrix(&p).unwrap(), w);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = ["2 2\n1 2\n3\n", "2 2\n1 2\n3 4\n5\n", "x 2\n", "2 2\n1 2.5\n3 4\n"];
    for (i, text) in cases.iter().enumerate() {
        let p = dir.path().join(format!("bad{i}.txt"));
        std::fs::write(&p, text).unwrap();
        assert!(load_matrix(&p).is_err(), "{text:?}");
    }
    match load_matrix(dir.path().join("absent.txt")) {
        Err(Error::Io { .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(parse_vectors("1\n2 0 0\n").is_err());
}
