// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::Command;

use berkz_cli::codec;
use berkz_cli::{run, EXIT_INPUT, EXIT_OK, EXIT_UNSUPPORTED, EXIT_USAGE};
use berkz_core::{ma_at, GlobalTropFSMetric, MaConfig, SpectrumPoint};
use proptest::prelude::*;
use serde_json::Value;

const STD: &str = r#"{"d": "1", "m": 1, "terms": [{"s": "X", "lambda": "0"}, {"s": "Y", "lambda": "0"}], "pure": true}"#;

fn berkz(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("berkz").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok_json(args: &[&str]) -> Value {
    let (code, out, err) = berkz(args);
    assert_eq!(code, EXIT_OK, "stderr: {err}");
    serde_json::from_str(&out).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn std_file(dir: &Path) -> String {
    write(dir, "std.json", STD).to_str().unwrap().to_owned()
}

#[test]
fn seminorm_of_twelve_at_half_two_adic() {
    let v = ok_json(&["spectrum", "eval", "--place", "2", "--t", "1/2", "--n", "12"]);
    assert_eq!(v, serde_json::json!({"value": 0.25}));
}

#[test]
fn classification_of_points() {
    let v = ok_json(&["spectrum", "class", "--place", "5", "--t", "0"]);
    assert_eq!(v["class"], "trivial_fp");
    assert_eq!(v["zariski_dense"], false);
    let v = ok_json(&["spectrum", "class", "--place", "3", "--t", "1/9"]);
    assert_eq!(v["class"], "p_adic");
    assert!((v["eps"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    let v = ok_json(&["spectrum", "class", "--place", "inf", "--t", "0"]);
    assert_eq!(v["class"], "trivial_q");
}

#[test]
fn mu_of_full_set_and_integral_of_one() {
    let dir = tempfile::tempdir().unwrap();
    let set = write(dir.path(), "full.json", r#"{"default": "full", "branches": []}"#);
    let v = ok_json(&["spectrum", "mu", "--set", set.to_str().unwrap(), "--cutoff", "1000"]);
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() <= v["radius"].as_f64().unwrap() + 1e-12);
    let v = ok_json(&["spectrum", "integrate", "--expr", "one", "--cutoff", "1000", "--nodes", "8"]);
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn branch_set_of_two_adic_half() {
    let dir = tempfile::tempdir().unwrap();
    let set = write(
        dir.path(),
        "half.json",
        r#"{"default": "empty", "branches": [{"place": 2, "intervals": [["0", "0.5"]]}]}"#,
    );
    let v = ok_json(&["spectrum", "mu", "--set", set.to_str().unwrap(), "--cutoff", "1000"]);
    let total = berkz_core::mu_total(1000).unwrap().value;
    let expected = 0.5 / (2.0 * 2f64.ln());
    assert!(v["lo"].as_f64().unwrap() * total.lo() <= expected * (1.0 + 1e-12));
    assert!(v["hi"].as_f64().unwrap() * total.hi() >= expected * (1.0 - 1e-12));
}

#[test]
fn ma_fiber_standard_three_adic_is_one_gauss_atom() {
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let v = ok_json(&["ma", "fiber", "--metric", &std, "--place", "3", "--t", "1/3"]);
    let atoms = v["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 1);
    assert_eq!(atoms[0]["mass"], "1");
    assert_eq!(atoms[0]["point"]["kind"], "disc");
    assert_eq!(atoms[0]["point"]["center"], "0");
    assert_eq!(atoms[0]["point"]["radius_val"], "0");
    assert_eq!(v["total_mass"], "1");
}

#[test]
fn nonlinear_sections_are_unsupported_on_p_adic_fibers() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "irr.json", r#"{"d": "2", "m": 1, "terms": [{"s": "X^2+Y^2"}, {"s": "X*Y"}]}"#);
    let (code, _, err) = berkz(&["ma", "fiber", "--metric", m.to_str().unwrap(), "--place", "3", "--t", "1/3"]);
    assert_eq!(code, EXIT_UNSUPPORTED, "{err}");
}

#[test]
fn exit_codes() {
    assert_eq!(berkz(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(berkz(&[]).0, EXIT_USAGE);
    assert_eq!(berkz(&["spectrum"]).0, EXIT_USAGE);
    assert_eq!(berkz(&["spectrum", "eval", "--place", "4", "--t", "1/2", "--n", "3"]).0, EXIT_INPUT);
    assert_eq!(berkz(&["spectrum", "eval", "--place", "2", "--t", "3/2", "--n", "3"]).0, EXIT_INPUT);
    assert_eq!(berkz(&["metric", "check", "--metric", "/nonexistent/m.json"]).0, EXIT_INPUT);
    assert_eq!(berkz(&["--help"]).0, EXIT_OK);
}

#[test]
fn dynamics_iterate_decays_geometrically() {
    let v = ok_json(&["dynamics", "iterate", "--fx", "X^2+Y^2", "--fy", "Y^2", "--steps", "6"]);
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 6);
    for s in &steps[1..] {
        let r = s["ratio"].as_f64().unwrap();
        assert!((r - 0.5).abs() < 0.1, "ratio {r}");
    }
    let (code, csv, _) =
        berkz(&["dynamics", "iterate", "--fx", "X^2+Y^2", "--fy", "Y^2", "--steps", "3", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(csv.lines().next().unwrap(), "step,degree,sup_diff,ratio");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let args = ["ma", "fiber", "--metric", &std, "--place", "inf", "--t", "1", "--resolution", "32"];
    let a = berkz(&args);
    let b = berkz(&args);
    assert_eq!(a.0, EXIT_OK);
    assert_eq!(a, b);
}

#[test]
fn archimedean_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let (code, csv, _) =
        berkz(&["ma", "fiber", "--metric", &std, "--place", "inf", "--t", "1", "--resolution", "16", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "chart,ix,iy,mass");
    let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 0.05, "grid mass {total}");
}

#[test]
fn measure_json_round_trips() {
    let phi = GlobalTropFSMetric::standard_multiple(2);
    for base in [
        SpectrumPoint::p_adic(3, 1.0 / 3.0).unwrap(),
        SpectrumPoint::trivial(),
        SpectrumPoint::p_adic(5, 0.0).unwrap(),
        SpectrumPoint::archimedean(0.5).unwrap(),
    ] {
        let m = ma_at(&phi, base, &MaConfig { resolution: 16 }).unwrap();
        let text = serde_json::to_string(&codec::measure(&m)).unwrap();
        let back = codec::parse_measure(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn seminorm_reduce_and_skeleton() {
    let v = ok_json(&["fiber", "seminorm", "--place", "2", "--t", "1/2", "--point", "gauss", "--poly", "2*T+4"]);
    assert_eq!(v["val"], "1");
    assert_eq!(v["value"], 0.5);
    let v = ok_json(&["fiber", "seminorm", "--place", "inf", "--t", "1", "--point", "z:0:1", "--poly", "T^2+1"]);
    assert_eq!(v["value"], 0.0);
    let v = ok_json(&["fiber", "reduce", "--place", "2", "--t", "1/2", "--point", "1/2", "--remove-primes", "2"]);
    assert_eq!(v["reduction"]["kind"], "special_point");
    assert_eq!(v["reduction"]["residue"], "inf");
    assert_eq!(v["interior"], false);
    let v = ok_json(&["fiber", "reduce", "--place", "2", "--t", "1/2", "--point", "1/3"]);
    assert_eq!(v["reduction"]["residue"], 1);
    assert_eq!(v["interior"], true);
    let v = ok_json(&["fiber", "skeleton", "--place", "2", "--t", "1/2", "--marked", "0,4,inf"]);
    assert_eq!(v["root"]["kind"], "disc");
    assert_eq!(v["edges"].as_array().unwrap().len(), v["vertices"].as_array().unwrap().len() - 1);
}

#[test]
fn metric_commands() {
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let v = ok_json(&["metric", "check", "--metric", &std]);
    assert_eq!(v["ok"], true);
    let bad = write(dir.path(), "bad.json", r#"{"d": "1", "m": 1, "terms": [{"s": "X"}, {"s": "X+2*Y"}]}"#);
    let v = ok_json(&["metric", "check", "--metric", bad.to_str().unwrap()]);
    assert_eq!(v["ok"], false);
    assert_eq!(v["bad_primes"], serde_json::json!(["2"]));
    let v = ok_json(&["metric", "eval", "--metric", &std, "--place", "3", "--t", "1/3", "--point", "1/3"]);
    assert_eq!(v["value"], 0.0);
    let v = ok_json(&["metric", "eval", "--metric", &std, "--green", "--place", "3", "--t", "1/3", "--point", "gauss"]);
    assert_eq!(v["value"], 0.0);
    let v = ok_json(&["metric", "pullback", "--metric", &std, "--fx", "X^2+Y^2", "--fy", "Y^2"]);
    assert_eq!(v["m"], 2);
    assert_eq!(v["d"], "1");
}

#[test]
fn masscheck_and_nondegeneracy() {
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let v = ok_json(&["ma", "masscheck", "--metric", &std, "--points", "2:1/2,3:1/3,inf:1", "--resolution", "64", "--tolerance", "0.05"]);
    assert_eq!(v["flagged"], false);
    assert_eq!(v["entries"][0]["mass"], "1");
    let v = ok_json(&["ma", "nondegenerate", "--metric", &std]);
    assert_eq!(v["nondegenerate"], true);
    assert_eq!(v["mass"], "1");
}

#[test]
fn global_integral_of_one() {
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let v = ok_json(&["ma", "global", "--metric", &std, "--f", "1", "--cutoff", "100", "--nodes", "8", "--resolution", "32"]);
    let err = v["mu_tail"].as_f64().unwrap() + v["quad_err"].as_f64().unwrap() + v["arch_err"].as_f64().unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() <= err + 1e-3, "{v}");
    let (code, csv, _) = berkz(&[
        "ma", "global", "--metric", &std, "--f", "1", "--cutoff", "100", "--nodes", "4", "--resolution", "32",
        "--profile-places", "2,3", "--format", "csv",
    ]);
    assert_eq!(code, EXIT_OK);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap() == 1.0));
}

const BOUNDARY: &str = r#"{"horizontal": [{"form": "X", "coeff": "1"}], "vertical": [{"prime": "inf", "coeff": "1"}]}"#;

#[test]
fn norm_of_half_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(dir.path(), "d0.json", BOUNDARY);
    let e = write(
        dir.path(),
        "e.json",
        &format!(
            r#"{{"horizontal": [{{"form": "X", "coeff": "1/2"}}], "vertical": [{{"prime": "inf", "coeff": "1/2"}}],
                "metrics": [{{"coeff": "1/2", "metric": {STD}}}], "removed_forms": ["X"]}}"#
        ),
    );
    let v = ok_json(&["adelic", "norm", "--divisor", e.to_str().unwrap(), "--boundary", b.to_str().unwrap()]);
    assert_eq!(v["value"], "1/2");
    assert_eq!(v["regime"], "proportional");
    let z = write(dir.path(), "zero.json", r#"{"removed_forms": ["X"]}"#);
    let v = ok_json(&["adelic", "norm", "--divisor", z.to_str().unwrap(), "--boundary", b.to_str().unwrap()]);
    assert_eq!(v["value"], "0");
}

#[test]
fn dynamical_cauchy_and_residual() {
    let v = ok_json(&["adelic", "cauchy", "--fx", "X^2+Y^2", "--fy", "Y^2", "--steps", "5", "--rate", "0.6"]);
    assert_eq!(v["ok"], true, "{v}");
    let v = ok_json(&["dynamics", "residual", "--fx", "X^2+Y^2", "--fy", "Y^2", "--steps", "2"]);
    let r = v["residual"].as_f64().unwrap();
    assert!(r > 0.0 && r < 0.1, "{r}");
    let dir = tempfile::tempdir().unwrap();
    let std = std_file(dir.path());
    let v = ok_json(&["dynamics", "residual", "--fx", "X^2", "--fy", "Y^2", "--metric", &std]);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn binary_reads_cutoff_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let set = write(
        dir.path(),
        "set.json",
        r#"{"default": "empty", "branches": [{"place": "inf", "intervals": [["0", "1"]]}]}"#,
    );
    let bin = env!("CARGO_BIN_EXE_berkz");
    let from_env = Command::new(bin)
        .args(["spectrum", "mu", "--set", set.to_str().unwrap()])
        .env("BERKZ_CUTOFF", "200")
        .output()
        .unwrap();
    let explicit = Command::new(bin)
        .args(["spectrum", "mu", "--set", set.to_str().unwrap(), "--cutoff", "200"])
        .env_remove("BERKZ_CUTOFF")
        .output()
        .unwrap();
    assert!(from_env.status.success());
    assert_eq!(from_env.stdout, explicit.stdout);
    let default = Command::new(bin)
        .args(["spectrum", "mu", "--set", set.to_str().unwrap()])
        .env_remove("BERKZ_CUTOFF")
        .output()
        .unwrap();
    assert_ne!(default.stdout, explicit.stdout);
    let bad = Command::new(bin).arg("nope").output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}

fn arb_form(deg: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(-5i64..=5, deg + 1).prop_filter_map("zero form", move |c| {
        if c.iter().all(|&x| x == 0) {
            return None;
        }
        let terms: Vec<String> = c
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0)
            .map(|(i, x)| format!("{x}*X^{i}*Y^{}", deg - i))
            .collect();
        Some(terms.join("+").replace("+-", "-"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_json_round_trips(
        deg in 1usize..4,
        seed in proptest::collection::vec(-3i64..=3, 3),
        m in 1u64..4,
    ) {
        let forms: Vec<String> = (0..2)
            .map(|k| {
                let c: Vec<String> = (0..=deg)
                    .map(|i| format!("{}*X^{i}*Y^{}", seed[(i + k) % 3] + (i == k) as i64 * 7, deg - i))
                    .collect();
                c.join("+").replace("+-", "-")
            })
            .collect();
        let terms: Vec<String> = forms
            .iter()
            .zip([&seed[0], &seed[1]])
            .map(|(s, l)| format!(r#"{{"s": "{s}", "lambda": "{l}/7"}}"#))
            .collect();
        let text = format!(r#"{{"d": "{}/{m}", "m": {m}, "terms": [{}]}}"#, deg, terms.join(","));
        let phi = codec::parse_metric(&serde_json::from_str(&text).unwrap()).unwrap();
        let back = codec::parse_metric(&codec::metric(&phi)).unwrap();
        prop_assert_eq!(back, phi);
    }

    #[test]
    fn form_strings_round_trip(s in arb_form(3)) {
        let f = berkz_core::Form::parse(&s).unwrap();
        prop_assert_eq!(berkz_core::Form::parse(&f.to_string()).unwrap(), f);
    }
}
