//! End-to-end command-line behavior: artifacts, exit codes, and stage
//! re-runnability from persisted inputs.

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf()
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_panelime"))
}

fn fixture_args(out: &Path) -> Vec<String> {
    [
        "--out",
        out.to_str().unwrap(),
        "--entity",
        "Countries",
        "--time",
        "Year",
        "--target",
        "Economic Freedom",
        "--seed",
        "42",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run_dir(out: &Path) -> PathBuf {
    std::fs::read_dir(out)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path()
}

#[test]
fn pipeline_on_the_bundled_fixture_explains_the_syria_drop() {
    let out = tempfile::tempdir().unwrap();
    let fixture = workspace_root().join("fixtures/economic_freedom_snippet.csv");

    // the fixture has no usable test split, so the explanation scope falls
    // back to every reformatted row
    let mut args = fixture_args(out.path());
    args.push("pipeline".to_string());
    let config = fixture_config(&fixture);
    let output = binary()
        .args(&args)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "pipeline failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let explanations: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir(out.path()).join("explanations.json")).unwrap(),
    )
    .unwrap();
    let instances = explanations["instances"].as_array().unwrap();
    let syria = instances
        .iter()
        .find(|inst| inst["entity"] == "Syria")
        .expect("Syria instance explained");
    assert_eq!(syria["time"].as_f64().unwrap(), 2012.0);
    let target = syria["target"].as_f64().unwrap();
    assert!((target - (-0.91)).abs() < 1e-9, "Syria target {target}");
}

fn fixture_config(fixture: &Path) -> PathBuf {
    // a minimal config pointing at the bundled snippet, with a small budget
    let dir = tempfile::tempdir().unwrap().keep();
    let path = dir.join("fixture.toml");
    let text = format!(
        r#"
[data]
path = {data:?}
entity = "Countries"
time = "Year"
target = "Economic Freedom"

[train]
budget_trials = 4

[lime]
n_samples = 1000
k_features = 3

[eval]
k = 3
runs = 2
"#,
        data = fixture.to_str().unwrap()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn write_synthetic_panel(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut csv = String::from("year,country,score,f0,f1,f2\n");
    for entity in 0..25 {
        for year in 0..8 {
            let f: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let score = 1.5 * f[0] - 0.5 * f[1] + f[2];
            csv.push_str(&format!(
                "{},C{entity:02},{score},{},{},{}\n",
                2000 + year,
                f[0],
                f[1],
                f[2]
            ));
        }
    }
    std::fs::write(path, csv).unwrap();
}

/// Config file shared by every standalone stage invocation: the run
/// directory is keyed by the upstream config sections, so chained stages
/// must agree on them. Downstream flags (--k, --budget on pick, ...) may
/// still vary freely.
fn synthetic_config(dir: &Path, data: &Path, out: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        r#"
seed = 11
output_dir = {out:?}

[data]
path = {data:?}
entity = "country"
time = "year"
target = "score"

[train]
budget_trials = 4

[lime]
n_samples = 400
k_features = 2
"#,
        out = out.to_str().unwrap(),
        data = data.to_str().unwrap(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn stages_rerun_from_persisted_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("panel.csv");
    write_synthetic_panel(&data);
    let out = dir.path().join("out");
    let config = synthetic_config(dir.path(), &data, &out);

    let stage = |extra: &[&str]| {
        let output = binary()
            .arg("--config")
            .arg(&config)
            .args(extra)
            .output()
            .unwrap();
        (
            output.status.code(),
            String::from_utf8_lossy(&output.stderr).into_owned(),
        )
    };

    // upstream artifacts do not exist yet: exit code 3
    let (code, stderr) = stage(&["train"]);
    assert_eq!(code, Some(3), "train without reformat: {stderr}");
    let (code, stderr) = stage(&["reformat"]);
    assert_eq!(code, Some(3), "reformat without impute: {stderr}");

    // run each stage in order, standalone, sharing the run directory
    for extra in [
        vec!["impute"],
        vec!["reformat"],
        vec!["train"],
        vec!["explain", "--max-instances", "10", "--svg"],
        vec!["pick", "--budget", "5"],
        vec!["ice", "--feature", "f0", "--feature", "f1", "--svg"],
        vec!["eval", "--k", "2", "--runs", "2", "--max-instances", "8"],
    ] {
        let (code, stderr) = stage(&extra);
        assert_eq!(code, Some(0), "stage {extra:?} failed: {stderr}");
    }

    let run = run_dir(&out);
    for artifact in [
        "imputed.csv",
        "reformatted.csv",
        "model.json",
        "explanations.json",
        "pick.json",
        "frequency_table.csv",
        "slope_ranking.csv",
        "eval_report.json",
        "run_manifest.json",
    ] {
        assert!(run.join(artifact).exists(), "{artifact} missing");
    }
    // svg artifacts were requested for explain and ice
    assert!(run.join("explanation_0000.svg").exists());
    assert!(std::fs::read_dir(&run)
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".svg")));
}

#[test]
fn eval_keeping_every_column_equalizes_guided_and_random() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("panel.csv");
    write_synthetic_panel(&data);
    let out = dir.path().join("out");
    let config = synthetic_config(dir.path(), &data, &out);

    let run = |extra: &[&str]| {
        let output = binary()
            .arg("--config")
            .arg(&config)
            .args(extra)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "stage {extra:?}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    run(&["impute"]);
    run(&["reformat"]);
    run(&["train"]);
    // k = 99 clamps to the model's feature count: masking keeps everything
    run(&["eval", "--k", "99", "--runs", "2", "--max-instances", "8"]);

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir(&out).join("eval_report.json")).unwrap(),
    )
    .unwrap();
    for entry in report["runs"].as_array().unwrap() {
        let lime = entry["r2_lime"].as_f64().unwrap();
        let random = entry["r2_random"].as_f64().unwrap();
        let full = report["r2_full_model"].as_f64().unwrap();
        assert!((lime - random).abs() < 1e-12);
        assert!((lime - full).abs() < 1e-12);
    }
}

#[test]
fn invalid_configuration_exits_with_code_2() {
    let out = tempfile::tempdir().unwrap();
    // missing data path entirely
    let output = binary()
        .args(["--out", out.path().to_str().unwrap(), "train"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // bad strategy value
    let fixture = workspace_root().join("fixtures/economic_freedom_snippet.csv");
    let output = binary()
        .args([
            "--out",
            out.path().to_str().unwrap(),
            "--entity",
            "Countries",
            "--time",
            "Year",
            "--target",
            "Economic Freedom",
            "reformat",
            "--input",
            fixture.to_str().unwrap(),
            "--strategy",
            "bogus",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.lines().count() <= 2, "diagnostic should be short: {stderr}");
}

#[test]
fn rename_map_merges_entities_across_years() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("panel.csv");
    std::fs::write(
        &data,
        "year,country,score\n2014,Swaziland,4.0\n2019,Eswatini,4.4\n2020,Eswatini,4.5\n",
    )
    .unwrap();
    let renames = dir.path().join("renames.csv");
    std::fs::write(&renames, "old_name,new_name\nSwaziland,Eswatini\n").unwrap();
    let out = dir.path().join("out");

    let output = binary()
        .args([
            "--out",
            out.to_str().unwrap(),
            "--entity",
            "country",
            "--time",
            "year",
            "--target",
            "score",
            "--rename-map",
            renames.to_str().unwrap(),
            "reformat",
            "--input",
            data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(run_dir(&out).join("reformatted.csv")).unwrap();
    // three rows of one merged entity leave two differences
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("Eswatini"));
    assert!(!text.contains("Swaziland"));
}

#[test]
fn diff_target_lag_strategy_is_exposed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pop.csv");
    std::fs::write(
        &data,
        "year,country,pop,rate\n1,A,100,5\n2,A,130,6\n3,A,150,7\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = binary()
        .args([
            "--out",
            out.to_str().unwrap(),
            "--entity",
            "country",
            "--time",
            "year",
            "--target",
            "pop",
            "reformat",
            "--input",
            data.to_str().unwrap(),
            "--strategy",
            "diff_target_lag",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = std::fs::read_to_string(run_dir(&out).join("reformatted.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "year,country,pop,rate");
    // target differenced, features lagged to the previous level
    assert_eq!(lines.next().unwrap(), "1,A,30,5");
    assert_eq!(lines.next().unwrap(), "2,A,20,6");
}
