use ehrenfest_cli::{run, Outcome};
use proptest::prelude::*;
use serde_json::Value;
use std::process::Command;

fn cli(args: &str) -> Outcome {
    run(std::iter::once("ehrenfest").chain(args.split_whitespace()))
}

fn json(out: &Outcome) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn laplace_with_oracle_check() {
    let out = cli("laplace --process engset --n 25 --c 15 --nu 0.4 --from 15 --to 0 --alpha 1 --check");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "laplace");
    let r = &doc["results"];
    let (lt, oracle) = (r["lt"].as_f64().unwrap(), r["oracle_lt"].as_f64().unwrap());
    assert!((lt - oracle).abs() / oracle <= 1e-8);
    assert!(r["relative_gap"].as_f64().unwrap() <= 1e-8);
    assert_eq!(doc["resolved_params"]["time_scale"], 1.0);
}

#[test]
fn oracle_is_skipped_above_the_cap() {
    let out = cli("laplace --n 30 --nu 0.4 --from 0 --to 30 --alpha 1 --check --oracle-cap 10");
    assert_eq!(out.code, 0);
    let doc = json(&out);
    assert!(doc["results"]["oracle_lt"].is_null());
    assert!(doc["diagnostics"]["check"].as_str().unwrap().contains("skipped"));
}

#[test]
fn regime_report() {
    let doc = json(&cli("regime --n 400 --c 120 --nu 0.6"));
    let r = &doc["results"];
    assert_eq!(r["regime"], "SuperCritical");
    assert!((r["t_star"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-15);
    assert!((r["limit_variance"].as_f64().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    assert_eq!(doc["resolved_params"]["process"], "engset");
}

#[test]
fn single_particle_simulation_mean() {
    let out = cli("simulate --n 1 --c 1 --nu 0.5 --from 1 --hit 0 --paths 100000 --seed 7");
    assert_eq!(out.code, 0);
    let s = &json(&out)["results"]["summary"];
    let (mean, se) = (s["mean"].as_f64().unwrap(), s["std_error"].as_f64().unwrap());
    assert!((mean - 2.0).abs() <= 4.0 * se, "{mean} ± {se}");
}

#[test]
fn rates_are_normalized_and_reported() {
    let doc = json(&cli("mean --n 4 --nu 2 --mu 3 --from 0 --to 4"));
    let p = &doc["resolved_params"];
    assert_eq!(p["time_scale"], 5.0);
    assert!((p["nu"].as_f64().unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(p["nu_input"], 2.0);
    let r = &doc["results"];
    let m = r["mean"].as_f64().unwrap();
    assert!((r["mean_input_units"].as_f64().unwrap() - m / 5.0).abs() < 1e-12 * m);
    let unit = json(&cli("mean --n 4 --nu 0.4 --from 0 --to 4"));
    assert_eq!(unit["results"]["mean"], r["mean"]);
}

#[test]
fn mean_with_richardson() {
    let doc = json(&cli("mean --n 10 --nu 0.5 --from 0 --to 10 --richardson"));
    assert!(doc["results"]["richardson_relative_gap"].as_f64().unwrap() < 1e-6);
}

#[test]
fn csv_is_identical_across_thread_counts() {
    let args = |t: usize| format!("simulate --n 20 --nu 0.5 --from 0 --hit 15 --paths 2000 --seed 99 --threads {t} --format csv");
    let one = cli(&args(1));
    assert_eq!(one.code, 0);
    for t in [2, 3, 8] {
        assert_eq!(cli(&args(t)).stdout, one.stdout, "threads = {t}");
    }
    let grid = |t: usize| format!("simulate --n 20 --c 12 --nu 0.5 --from 3 --t-max 4 --grid-points 8 --paths 300 --seed 5 --threads {t} --format csv");
    assert_eq!(cli(&grid(1)).stdout, cli(&grid(4)).stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(text.starts_with("# schema_version=1 config_digest="));
    assert_eq!(text.lines().nth(1), Some("path,time"));
}

#[test]
fn json_is_identical_across_thread_counts() {
    let args = |t: usize| format!("simulate --n 12 --nu 0.3 --from 12 --hit 0 --paths 500 --seed 3 --alpha 0.5,1 --threads {t}");
    assert_eq!(cli(&args(1)).stdout, cli(&args(5)).stdout);
}

#[test]
fn output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let out = cli(&format!(
        "limit-check --law subcritical-full --nu 0.5 --ns 40,80 --alphas 1 --format csv --output {}",
        path.display()
    ));
    assert_eq!(out.code, 0);
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,alpha,ln_scale,shift,exact_lt,limit_lt,gap"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn limit_check_reports_trend() {
    let doc = json(&cli("limit-check --law subcritical-empty --nu 0.4 --eta 0.6 --ns 40,80,160 --alphas 1"));
    assert_eq!(doc["results"]["trend"][0]["gaps_strictly_decrease"], true);
    assert_eq!(doc["results"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        "laplace --n 5 --nu 0.5 --from 0 --to 5",
        "laplace -n 5 --nu 0.5 --from 0 --to 5 --alpha 1",
        "laplace --n 5 --nu 0.5 --from 0 --to 9 --alpha 1",
        "laplace --n 5 --nu 1.5 --from 0 --to 5 --alpha 1",
        "laplace --n 5 --nu 0.5 --from 0 --to 5 --alpha -1",
        "laplace --process ehrenfest --n 5 --c 3 --nu 0.5 --from 0 --to 3 --alpha 1",
        "regime --n 400 --c 120 --nu 0.6 --format csv",
        "simulate --n 5 --nu 0.5 --from 0 --paths 10 --seed 1",
        "simulate --n 5 --nu 0.5 --from 0 --hit 5 --paths 10 --seed 1 --threads 0",
        "limit-check --law nonsense --nu 0.5 --ns 40",
        "limit-check --law supercritical --nu 0.3 --eta 0.6 --ns 40",
        "verify --suite nonsense",
        "frobnicate",
    ] {
        let out = cli(args);
        assert_eq!(out.code, 1, "{args}: {}", out.stderr);
        assert!(!out.stderr.is_empty(), "{args}");
    }
}

#[test]
fn library_errors_carry_codes() {
    let out = cli("limit-check --law supercritical --nu 0.3 --eta 0.6 --ns 40");
    let doc = json(&out);
    assert_eq!(doc["diagnostics"]["error"]["code"], "wrong_regime");
    assert!(out.stderr.starts_with("error[wrong_regime]"));
}

#[test]
fn event_cap_censoring_exits_two() {
    let out = cli("simulate --n 30 --nu 0.5 --from 0 --hit 30 --paths 3 --seed 1 --max-events 10");
    assert_eq!(out.code, 2);
    assert_eq!(json(&out)["diagnostics"]["censored_by_events"], 3);
    // the empirical transform refuses the censored sample outright
    let out = cli("simulate --n 30 --nu 0.5 --from 0 --hit 30 --paths 3 --seed 1 --max-events 10 --alpha 1");
    assert_eq!(out.code, 2);
    assert_eq!(json(&out)["diagnostics"]["error"]["code"], "censored");
}

#[test]
fn help_exits_zero() {
    let out = cli("--help");
    assert_eq!(out.code, 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("limit-check"));
    assert_eq!(cli("simulate --help").code, 0);
}

#[test]
fn verify_counts() {
    let out = cli("verify --suite closed-forms,critical-limits");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let r = &json(&out)["results"];
    assert_eq!(r["failed"], 0);
    assert!(r["checks"].as_u64().unwrap() > 2000);
    assert_eq!(r["suites"].as_array().unwrap().len(), 2);
}

#[test]
fn binary_round_trip() {
    let out = Command::new(env!("CARGO_BIN_EXE_ehrenfest"))
        .args(["regime", "--n", "100", "--c", "50", "--nu", "0.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["results"]["regime"], "Critical");
    let bad = Command::new(env!("CARGO_BIN_EXE_ehrenfest")).args(["mean"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_numbers_never_panic(
        n in 0usize..40,
        c in 0usize..45,
        nu in prop_oneof![-1.0f64..2.0, Just(f64::NAN), Just(f64::INFINITY), Just(0.0)],
        from in 0usize..45,
        to in 0usize..45,
        alpha in prop_oneof![-1.0f64..20.0, Just(0.0), Just(f64::NAN), Just(1e-300)],
    ) {
        for cmd in ["laplace", "mean"] {
            let args = format!("{cmd} --n {n} --c {c} --nu {nu} --from {from} --to {to} --alpha {alpha}");
            let args = if cmd == "mean" { args.split(" --alpha").next().unwrap().to_string() } else { args };
            let out = cli(&args);
            prop_assert!(matches!(out.code, 0 | 1 | 2), "{args}");
            if out.code != 0 {
                prop_assert!(!out.stderr.is_empty());
            }
        }
    }
}
