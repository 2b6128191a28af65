use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use stardil_core::ckt::CktFamily;
use stardil_core::dilation::dilate;
use stardil_core::free::DirectedGraph;
use stardil_core::io::{to_json, DilationDocument, FamilyDocument, GraphDoc, MapDocument, MatrixDoc, SgdDocument};
use stardil_core::linalg::{c, real_matrix, CMatrix};
use stardil_core::psd::{AggregationMap, CoherentMap, HilbertBundle};
use stardil_core::random;
use stardil_core::table::pair_groupoid;

fn run(args: &[&str]) -> (i32, Value, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stardil")).args(args).output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), report, String::from_utf8(out.stderr).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p: PathBuf = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn scalar_pair_map(off_diagonal: f64) -> CoherentMap {
    let table = pair_groupoid(2);
    let mats = table
        .elements()
        .map(|a| {
            let diag = table.src(a) == table.tgt(a);
            CMatrix::from_element(1, 1, c(if diag { 1.0 } else { off_diagonal }, 0.0))
        })
        .collect();
    CoherentMap::new(table, HilbertBundle::new(vec![1]), AggregationMap::full(2), mats).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn psd_check_passes_on_pair_groupoid_scalar_map() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(dir.path(), "map.json", &to_json(&MapDocument::from_map(&scalar_pair_map(1.0))));
    let (code, report, _) = run(&["psd-check", &map]);
    assert_eq!(code, 0);
    assert_eq!(report["verdict"], "PASS");
    let fibers = report["data"]["fibers"].as_array().unwrap();
    assert_eq!(fibers.len(), 2);
    for f in fibers {
        assert!(f["lambda_min"].as_f64().unwrap().abs() < 1e-12);
    }
}

#[test]
fn psd_check_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(dir.path(), "map.json", &to_json(&MapDocument::from_map(&scalar_pair_map(2.0))));
    let (code, report, _) = run(&["psd-check", &map]);
    assert_eq!(code, 1);
    for c in report["checks"].as_array().unwrap() {
        assert_eq!(c["verdict"], "FAIL");
        assert!((c["witness"]["lambda_min"].as_f64().unwrap() + 1.0).abs() < 1e-9);
        assert!(c["tolerance"].is_number());
    }
    let (code, report, _) = run(&["dilate", &map]);
    assert_eq!(code, 1);
    assert_eq!(check(&report, "psd")["verdict"], "FAIL");
}

#[test]
fn dilate_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = random::seeded(5);
    let t = random::pair_groupoid_pullback(&mut rng, 3, AggregationMap::new(vec![0, 0, 1]), vec![2, 3], 3).unwrap();
    let map = write(dir.path(), "map.json", &to_json(&MapDocument::from_map(&t)));
    let dil = dir.path().join("dil.json");
    let (code, report, err) = run(&["dilate", &map, "--out", dil.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(report["data"]["dilation"]["written"].is_string());
    let (code, report, _) = run(&["verify", &map, dil.to_str().unwrap()]);
    assert_eq!(code, 0);
    for c in report["checks"].as_array().unwrap() {
        if let Some(v) = c["value"].as_f64() {
            assert!(v < 1e-8, "{c}");
        }
    }
}

#[test]
fn equiv_on_permuted_order_dilations() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = random::seeded(8);
    let t = random::pair_groupoid_pullback(&mut rng, 3, AggregationMap::new(vec![0, 1, 0]), vec![2, 2], 2).unwrap();
    let perm = random::permutation(&mut rng, t.table().n_elements());
    let mut inverse = vec![0; perm.len()];
    for (old, &new) in perm.iter().enumerate() {
        inverse[new] = old;
    }
    let d1 = dilate(&t).unwrap();
    let d2 = dilate(&t.permute_elements(&perm).unwrap()).unwrap().relabel_elements(&inverse);
    let map = write(dir.path(), "map.json", &to_json(&MapDocument::from_map(&t)));
    let a = write(dir.path(), "a.json", &to_json(&DilationDocument::from_dilation(&d1)));
    let b = write(dir.path(), "b.json", &to_json(&DilationDocument::from_dilation(&d2)));
    let (code, report, err) = run(&["equiv", &map, &a, &b]);
    assert_eq!(code, 0, "{err}");
    for name in ["unitarity", "intertwining", "v_matching"] {
        assert!(check(&report, name)["value"].as_f64().unwrap() < 1e-8);
    }
}

#[test]
fn reports_are_deterministic_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(dir.path(), "map.json", &to_json(&MapDocument::from_map(&scalar_pair_map(0.5))));
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_time_ms");
        v
    };
    let (_, a, _) = run(&["cp-check", &map, "--seed", "7", "--trials", "20"]);
    let (_, b, _) = run(&["cp-check", &map, "--seed", "7", "--trials", "20"]);
    assert_eq!(a["seed"], 7);
    assert_eq!(strip(a), strip(b));
    let (_, a, _) = run(&["dilate", &map]);
    let (_, b, _) = run(&["dilate", &map]);
    assert_eq!(strip(a), strip(b));
}

#[test]
fn validate_reports_a_broken_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = SgdDocument::from_table(&pair_groupoid(2));
    doc.mul.retain(|t| *t != [1, 2, 0]);
    let sgd = write(dir.path(), "t.json", &to_json(&doc));
    let (code, report, _) = run(&["validate", &sgd]);
    assert_eq!(code, 1);
    let w = &check(&report, "axioms")["witness"];
    assert_eq!(w["axiom"], "SG3");
}

#[test]
fn parse_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let sgd = write(dir.path(), "t.json", "{\"format\": ");
    let (code, _, err) = run(&["validate", &sgd]);
    assert_eq!(code, 2);
    assert!(err.contains("syntax error"), "{err}");
    let (code, _, _) = run(&["validate", "/nonexistent/t.json"]);
    assert_eq!(code, 2);
    let out = Command::new(env!("CARGO_BIN_EXE_stardil")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn free_gen_then_classify() {
    let dir = tempfile::tempdir().unwrap();
    let graph = GraphDoc::from_graph(&DirectedGraph::new(2, vec![(0, 1)]).unwrap());
    let g = write(dir.path(), "g.json", &serde_json::to_string(&graph).unwrap());
    let out = dir.path().join("free.json");
    let (code, report, err) = run(&["free-gen", &g, "--lmax", "2", "--kind", "groupoid", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(report["data"]["elements"].as_u64().unwrap() > 0);
    let (code, report, _) = run(&["classify", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(report["data"]["flags"]["has_star"].as_bool().unwrap());
}

#[test]
fn ckt_check_and_induce() {
    let dir = tempfile::tempdir().unwrap();
    let graph = DirectedGraph::new(2, vec![(0, 1)]).unwrap();
    let p0 = real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let p1 = real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let s = real_matrix(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let fam = CktFamily::new(graph, 2, vec![p0, p1], vec![s]).unwrap();
    let f = write(dir.path(), "f.json", &to_json(&FamilyDocument::from_family(&fam)));
    let (code, report, err) = run(&["ckt-check", &f]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(report["data"]["ck_holds"], true);
    let (code, _, err) = run(&["induce", &f, "--lmax", "2"]);
    assert_eq!(code, 0, "{err}");

    let mut scaled = fam.clone();
    scaled.s[0] *= c(1.001, 0.0);
    let f = write(dir.path(), "g.json", &to_json(&FamilyDocument::from_family(&scaled)));
    let (code, report, _) = run(&["ckt-check", &f]);
    assert_eq!(code, 1);
    let r = check(&report, "condition_i")["value"].as_f64().unwrap();
    assert!((1.9e-3..=2.1e-3).contains(&r));
}

#[test]
fn sqrt_series_scalar() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "a.json", &to_json(&MatrixDoc::from_matrix(&real_matrix(1, 1, &[0.5]))));
    let (code, report, _) = run(&["sqrt-series", &m]);
    assert_eq!(code, 0);
    let b = report["data"]["b"]["entries"][0][0].as_f64().unwrap();
    assert!((b - 0.75f64.sqrt()).abs() < 1e-9);
    let m = write(dir.path(), "b.json", &to_json(&MatrixDoc::from_matrix(&real_matrix(1, 1, &[1.0]))));
    let (code, report, _) = run(&["sqrt-series", &m]);
    assert_eq!(code, 1);
    assert_eq!(check(&report, "contraction")["verdict"], "FAIL");
}

#[test]
fn leftreg_on_absorbing_monoid() {
    let dir = tempfile::tempdir().unwrap();
    let table = stardil_core::table::monoid(&[vec![0, 1, 2], vec![1, 2, 2], vec![2, 2, 2]], Some(0), None).unwrap();
    let sgd = write(dir.path(), "m.json", &to_json(&SgdDocument::from_table(&table)));
    let (code, report, err) = run(&["leftreg", &sgd]);
    assert_eq!(code, 0, "{err}");
    let n: Vec<u64> = report["data"]["profiles"].as_array().unwrap().iter().map(|p| p["max_multiplicity"].as_u64().unwrap()).collect();
    assert_eq!(n, vec![1, 2, 3]);
}

#[test]
fn form_rep_and_embed() {
    let dir = tempfile::tempdir().unwrap();
    let sgd = write(dir.path(), "pg.json", &to_json(&SgdDocument::from_table(&pair_groupoid(2))));
    let form = write(
        dir.path(),
        "form.json",
        &format!("{{\"sgd\": {:?}, \"values\": [[1,0],[1,0],[1,0],[1,0]]}}", Path::new(&sgd).file_name().unwrap()),
    );
    let (code, report, err) = run(&["form-rep", &form]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(report["data"]["ranks"], serde_json::json!([1, 1]));
    assert_eq!(report["data"]["cyclic"], true);

    let mut rng = random::seeded(2);
    let t = random::pair_groupoid_pullback(&mut rng, 2, AggregationMap::identity(2), vec![2, 2], 2).unwrap();
    let map = write(dir.path(), "map.json", &to_json(&MapDocument::from_map(&t)));
    let (code, report, _) = run(&["embed", &map]);
    assert_eq!(code, 1, "random pullbacks are not unital");
    assert_eq!(check(&report, "unital")["verdict"], "FAIL");
}
