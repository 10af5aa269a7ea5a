use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = "[protocol]
beta = 1.0
kappa = 1.0
lambda_max = 0.5
target_probs = [0.9, 0.1]

[run]
l = 12
t = 5.0
steps = 512
";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_erasure-fcs"));
    c.env_remove("ERASURE_FCS_OUT");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, text: &str, args: &[&str]) -> Output {
    let config = write_config(dir, text);
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

/// Data rows of a CSV table, skipping the comment header.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, body)
}

#[test]
fn figure3_curves_pass_through_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(
        dir.path(),
        BASE,
        &["figure3", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(&out.join("figure3.csv"));
    assert_eq!(header, ["alpha_over_beta", "epsilon", "chi"]);
    let mut eps: Vec<String> = body.iter().map(|r| r[1].clone()).collect();
    eps.dedup();
    assert_eq!(eps.len(), 5);
    let at_beta: Vec<f64> = body
        .iter()
        .filter(|r| r[0] == "1")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(at_beta.len(), 5);
    assert!(at_beta.iter().all(|c| c.abs() <= 1e-12));
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let text = BASE.replace("l = 12", "l = 4");
            let o = run(
                dir.path(),
                &text,
                &["fcs", "--engine", "both", "--out", out.to_str().unwrap()],
            );
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(out.join("fcs.csv")).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    assert!(
        text.contains("#   engine = \"both\""),
        "header records the effective config"
    );
}

#[test]
fn decoupled_protocol_gives_a_flat_cgf() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = BASE.replace("lambda_max = 0.5", "lambda_max = 0.0");
    let o = run(dir.path(), &text, &["fcs", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let (_, body) = rows(&out.join("fcs.csv"));
    let chi: Vec<f64> = body
        .iter()
        .filter(|r| r[1] == "quasifree")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(chi.len(), 21);
    assert!(chi.iter().all(|c| c.abs() < 1e-12), "{chi:?}");
}

#[test]
fn oracle_check_reports_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!("{BASE}\n[oracle_check]\nl = [4]\nt = [1.0, 5.0]\ntolerance = 1e-8\n");
    let o = run(
        dir.path(),
        &text,
        &["oracle-check", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(&out.join("oracle_check.csv"));
    let diff = header.iter().position(|h| h == "max_abs_diff").unwrap();
    assert_eq!(body.len(), 2);
    for r in &body {
        assert!(r[diff].parse::<f64>().unwrap() <= 1e-8);
        assert_eq!(r.last().unwrap(), "true");
    }
}

#[test]
fn rejected_configs_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = BASE.replace("[0.9, 0.1]", "[0.9, 0.2]");
    let o = run(
        dir.path(),
        &text,
        &["atoms", "--out", out.to_str().unwrap()],
    );
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("probabilities must sum to 1"), "{err}");
    assert_eq!(err.lines().filter(|l| l.starts_with("error:")).count(), 1);
    assert!(!out.exists());

    let o = run(
        dir.path(),
        &BASE.replace("t = 5.0", "t = 5.0\nwrokers = 2"),
        &["atoms", "--out", out.to_str().unwrap()],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.wrokers"));
    assert!(!out.exists());
}

#[test]
fn oracle_refuses_large_chains_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = BASE.replace("l = 12", "l = 40");
    let o = run(
        dir.path(),
        &text,
        &["fcs", "--engine", "oracle", "--out", out.to_str().unwrap()],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle cap"));
    assert!(!out.exists());
}

#[test]
fn output_directory_from_environment_and_json_mirror() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let config = write_config(dir.path(), &format!("{BASE}\n[output]\njson = true\n"));
    let o = bin()
        .args(["landauer", "--config"])
        .arg(&config)
        .env("ERASURE_FCS_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(&out.join("landauer.csv"));
    let ok = header.iter().position(|h| h == "bound_satisfied").unwrap();
    assert!(body.iter().all(|r| r[ok] == "true"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("landauer.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "landauer");
    assert_eq!(json["config"]["run"]["l"], 12);
    assert_eq!(json["table"]["rows"].as_array().unwrap().len(), body.len());
}

#[test]
fn sweep_with_wrong_order_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!(
        "{BASE}\n[sweep]\nl = [8, 16]\nt = [2.0, 4.0]\n\n[sweep.wrong_order]\nl = 2\nt = 20.0\nlambda_max = 0.1\n"
    );
    let o = run(
        dir.path(),
        &text,
        &["sweep", "--workers", "2", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, body) = rows(&out.join("sweep.csv"));
    let cells: Vec<(&str, &str)> = body
        .iter()
        .map(|r| (r[0].as_str(), r[1].as_str()))
        .collect();
    assert_eq!(cells, [("8", "2"), ("8", "4"), ("16", "2"), ("16", "4")]);
    let (_, wrong) = rows(&out.join("sweep_wrong_order.csv"));
    assert_eq!(wrong.len(), 1);
}

#[test]
fn example_config_parses() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/example.toml"
    ))
    .unwrap();
    let config = erasure_fcs_cli::parse_config(&text).unwrap();
    assert!(config.sweep.unwrap().wrong_order.is_some());
}
