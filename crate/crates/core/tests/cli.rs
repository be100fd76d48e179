use std::path::PathBuf;
use std::process::Command;

use iterint::cli::run;

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["iterint"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn temp_doc(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("iterint-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn shuffle_count_of_two_and_one() {
    let (code, out, _) = invoke(&["shuffles", "count", "2", "1"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "3");
}

#[test]
fn shuffle_families_from_the_command_line() {
    let (_, out, _) = invoke(&["shuffles", "list", "1", "1"]);
    assert_eq!(out, "0 1\n1 0\n");
    let (_, out, _) = invoke(&["shuffles", "list", "1,1", "1,1", "--family", "glue"]);
    assert_eq!(out, "0 1 2 3 | 0 1 2 3\n0 1 2 3 | 0 2 1 3\n");
    let (_, out, _) = invoke(&["shuffles", "count", "1,0", "1,0", "--family", "transport", "--copies", "2"]);
    assert_eq!(out.trim(), "6");
}

#[test]
fn path_shuffle_on_the_parabola_passes() {
    let (code, out, err) = invoke(&["verify", "path-shuffle", &corpus("paths.json")]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["pass"], true);
    let first = &report["checks"][0];
    assert_eq!(first["name"], "gamma shuffle");
    assert!(first["abs_diff"].as_f64().unwrap() <= 1e-8);
    for key in ["lhs", "rhs", "tolerance", "pass"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn closed_forms_via_integrate_path() {
    let (code, out, _) = invoke(&["integrate-path", &corpus("paths.json"), "--path", "gamma", "--forms", "dx1,dx2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["value"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-8);
    assert!(v["error"].is_number());
}

#[test]
fn signature_of_a_line() {
    let (code, out, _) = invoke(&["signature", &corpus("paths.json"), "--path", "diagonal", "--level", "2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let coeffs = v["coefficients"].as_array().unwrap();
    assert_eq!(coeffs.len(), 7);
    let find = |w: &[u64]| {
        coeffs
            .iter()
            .find(|c| c["word"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).eq(w.iter().copied()))
            .unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert!((find(&[1]) - 2.0).abs() < 1e-9);
    assert!((find(&[1, 2]) - 3.0).abs() < 1e-9);
    assert!((find(&[2, 2]) - 4.5).abs() < 1e-9);
}

#[test]
fn transport_commands() {
    let (code, out, _) = invoke(&["transport", &corpus("paths.json"), "--path", "gamma", "--w", "dx1", "--theta", "dx2", "--steps", "0"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["covector"]["2"], 1.0);
    let doc = temp_doc(
        "loop.json",
        r#"{"dimension": 2,
            "forms": [{"name": "f", "degree": 1, "coeffs": {"2": "x1"}}],
            "membranes": [{"name": "c", "cube_dim": 1, "components": ["cos(6.283185307179586*t)", "sin(6.283185307179586*t)"]}],
            "connections": [{"name": "a", "matrix": [[0, 1], [0, 0]], "form": "f"}]}"#,
    );
    let (code, out, _) = invoke(&["transport", &doc, "--path", "c", "--connection", "a"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let corner = v["holonomy"][0][1].as_f64().unwrap();
    assert!((corner - std::f64::consts::PI).abs() < 1e-6, "{corner}");
}

#[test]
fn integrate_membrane_reports_value_and_error() {
    let (code, out, _) = invoke(&["integrate-membrane", &corpus("membranes.json"), "--membrane", "saddle", "--integrand", "A"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    // int (1 + t1 t2) dt1 dt2 over the unit square
    assert!((v["value"].as_f64().unwrap() - 1.25).abs() < 1e-9);
    assert!(v["error"].is_number());
}

#[test]
fn malformed_document_names_the_line() {
    let doc = temp_doc("broken.json", "{\n  \"dimension\": 2,\n  \"forms\": [\n    {\"name\": \"w\",, \"degree\": 1}\n  ]\n}\n");
    let (code, _, err) = invoke(&["verify", "all", &doc]);
    assert_eq!(code, 2);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn unknown_names_are_reported_with_their_location() {
    let doc = temp_doc(
        "dangling.json",
        r#"{"dimension": 1, "checks": [{"kind": "path-shuffle", "path": "nowhere", "first": [], "second": []}]}"#,
    );
    let (code, _, err) = invoke(&["verify", "all", &doc]);
    assert_eq!(code, 2);
    assert!(err.contains("checks[0]") && err.contains("nowhere"), "{err}");
    let (code, _, _) = invoke(&["verify", "no-such-suite", &corpus("paths.json")]);
    assert_eq!(code, 2);
    let (code, _, _) = invoke(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn failing_and_non_converging_checks_exit_one() {
    let doc = temp_doc(
        "wrong.json",
        r#"{"dimension": 2,
            "quadrature": {"points_per_axis": 4, "refinement_levels": 2, "rel_tol": 1e-14, "abs_tol": 0},
            "forms": [{"name": "dx1", "degree": 1, "coeffs": {"1": "1"}},
                      {"name": "osc", "degree": 1, "coeffs": {"1": "sin(40*x1)"}}],
            "membranes": [{"name": "g", "cube_dim": 1, "components": ["t", "t^2"]}],
            "checks": [{"name": "off", "kind": "closed-form", "path": "g", "forms": ["dx1"], "expected": 2},
                       {"name": "rough", "kind": "closed-form", "path": "g", "forms": ["osc"], "expected": 0}]}"#,
    );
    let (code, out, _) = invoke(&["verify", "all", &doc]);
    assert_eq!(code, 1);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["checks"][0]["pass"], false);
    assert_eq!(report["checks"][0]["abs_diff"], 1.0);
    let rough = &report["checks"][1];
    assert_eq!(rough["pass"], false);
    assert!(rough["error"].as_str().unwrap().contains("did not converge"));
    assert!(rough["lhs"].is_null());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let args = ["verify", "all", &corpus("glued.json")];
    let (_, a, _) = invoke(&args);
    let (_, b, _) = invoke(&args);
    assert_eq!(a, b);
    let (_, table, _) = invoke(&["verify", "all", &corpus("glued.json"), "--table"]);
    assert!(table.ends_with("all checks passed\n"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_iterint");
    let ok = Command::new(bin).args(["shuffles", "count", "2", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "3");
    let usage = Command::new(bin).args(["verify"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
