use std::process::Command;

fn fgenus(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fgenus")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).expect("json report")
}

#[test]
fn wk_query() {
    let (code, out, _) = fgenus(&["wk", "--g", "1", "--indices", "1"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["value"], "1/24");
    let (_, out, _) = fgenus(&["wk", "--g", "2", "--indices", "4"]);
    assert_eq!(json(&out)["value"], "1/1152");
}

#[test]
fn genus_two_vanishes_for_a2() {
    let (code, out, err) = fgenus(&["genus", "--g", "2", "--model", "two-primary:1/3", "--point", "0.3,1.2"]);
    assert_eq!(code, 0, "{err}");
    let v = json(&out);
    let f = fgenus::scalar::Cx::parse(v["F_g"].as_str().unwrap()).unwrap();
    use fgenus::scalar::Field;
    assert!(f.magnitude() < 1e-60);
    // one-vertex graphs 3 x 2 labels; symmetric two-vertex graphs 3 x 3; g1 - g0 with loop 4
    assert_eq!(v["graphs"].as_array().unwrap().len(), 19);
}

#[test]
fn reports_are_byte_stable() {
    let args = ["edges", "--model", "two-primary:1/2", "--point", "0.1,1.4", "--k", "4"];
    let (_, a, _) = fgenus(&args);
    let (_, b, _) = fgenus(&args);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn precision_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_fgenus"))
        .args(["wk", "--g", "0", "--indices", "0,0,0"])
        .env("FGENUS_PRECISION", "128")
        .output()
        .unwrap();
    assert_eq!(json(&String::from_utf8_lossy(&out.stdout))["precision_bits"], 128);
}

#[test]
fn exit_codes() {
    assert_eq!(fgenus(&["genus", "--g", "2", "--model", "nonexistent"]).0, 1);
    assert_eq!(fgenus(&["frame", "--model", "pt", "--point", "1,2"]).0, 1);
    assert_eq!(fgenus(&["wk", "--g", "0", "--indices", "0"]).0, 1);
    // not semisimple: both canonical coordinates coincide at the origin of A3
    assert_eq!(fgenus(&["rmatrix", "--model", "a3", "--point", "0,0,0"]).0, 2);
    assert_eq!(fgenus(&["validate", "--model", "a3", "--point", "0.1,0.2,0.3"]).0, 0);
}

#[test]
fn invalid_model_document() {
    let dir = std::env::temp_dir().join(format!("fgenus-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"dimension": 2, "metric": [["0","1"],["2","0"]], "potential": []}"#).unwrap();
    let (code, _, err) = fgenus(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn descendent_document() {
    let dir = std::env::temp_dir().join(format!("fgenus-tau-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tau.json");
    std::fs::write(&path, r#"{"Kmax": 1, "t": [["0.2"]]}"#).unwrap();
    let (code, out, err) = fgenus(&["descendent", "--g", "0", "--model", "pt", "--tau", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    // t_1 = 0 reduces to the primary potential t^3/6
    let f = fgenus::scalar::Cx::parse(json(&out)["F"].as_str().unwrap()).unwrap();
    let expect = fgenus::scalar::Cx::from_ratio(8, 6000);
    use fgenus::scalar::Field;
    assert!((f - &expect).magnitude() < 1e-60);
}
