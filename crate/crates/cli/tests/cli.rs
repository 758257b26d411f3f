//! End-to-end tests for the `mapconv` binary: each test stages input
//! files in a temp directory, runs subcommands, and inspects outputs and
//! exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mapconv_core::dataset::{read_tensor, write_dataset, write_tensor, LabeledDataset};
use mapconv_core::model::{
    write_model_parameters, LayerParams, ParamOrdering, ParameterSet,
};
use mapconv_core::tensor::{Tensor, TensorShape};

fn mapconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapconv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_args<'a>(pairs: &'a [(&'a str, &'a Path)]) -> Vec<String> {
    pairs
        .iter()
        .flat_map(|(flag, p)| [flag.to_string(), p.display().to_string()])
        .collect()
}

/// Run a subcommand with `(--flag, path)` pairs plus literal extras,
/// asserting success.
fn run_sub(sub: &str, pairs: &[(&str, &Path)], extra: &[&str]) -> Output {
    let mut args = vec![sub.to_string()];
    args.extend(path_args(pairs));
    args.extend(extra.iter().map(|s| s.to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_mapconv"))
        .args(&args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "args {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const IDENTITY_NET: &str = "input 10 1 1\n\
    conv c1 pred=input N=10 M=10 K=1 S=1 P=0\n\
    conv c2 pred=c1 N=10 M=10 K=1 S=1 P=0\n";

fn identity_weights(poison_class9: bool) -> Vec<f32> {
    let mut w = vec![0.0f32; 100];
    for i in 0..10 {
        w[i * 10 + i] = 1.0;
    }
    if poison_class9 {
        w[9 * 10 + 9] = 1e-40;
    }
    w
}

/// Stage the 10-class identity network: net file, CPPO parameters, and a
/// one-hot validation dataset. Poisoning routes class 9 of layer c2
/// through a denormal weight.
fn stage_identity(dir: &Path, poison: bool) -> (PathBuf, PathBuf, PathBuf) {
    let net = dir.join("net.txt");
    fs::write(&net, IDENTITY_NET).unwrap();

    let params = ParameterSet::new(
        ParamOrdering::Original,
        vec![
            (
                "c1".into(),
                LayerParams {
                    weights: identity_weights(false),
                    biases: vec![0.0; 10],
                },
            ),
            (
                "c2".into(),
                LayerParams {
                    weights: identity_weights(poison),
                    biases: vec![0.0; 10],
                },
            ),
        ],
    );
    let model_path = dir.join("params.cppo");
    let mut bytes = Vec::new();
    write_model_parameters(&mut bytes, &params).unwrap();
    fs::write(&model_path, &bytes).unwrap();

    let shape = TensorShape::new(10, 1, 1).unwrap();
    let records = (0..10)
        .map(|label| {
            let mut data = vec![0.0f32; 10];
            data[label] = 1.0;
            (Tensor::row_major(shape, data).unwrap(), label)
        })
        .collect();
    let dataset = LabeledDataset::new(records, 10).unwrap();
    let dataset_path = dir.join("val.cppd");
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &dataset).unwrap();
    fs::write(&dataset_path, &bytes).unwrap();

    (net, model_path, dataset_path)
}

#[test]
fn reorder_is_deterministic_and_accepts_u1() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, _) = stage_identity(dir.path(), false);

    for u in ["1", "4", "8"] {
        let out_a = dir.path().join(format!("a{u}.cppr"));
        let out_b = dir.path().join(format!("b{u}.cppr"));
        run_sub(
            "reorder",
            &[("--net", &net), ("--model", &model), ("--out", &out_a)],
            &["--u", u],
        );
        run_sub(
            "reorder",
            &[("--net", &net), ("--model", &model), ("--out", &out_b)],
            &["--u", u],
        );
        assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap(), "u={u}");
        assert_eq!(&fs::read(&out_a).unwrap()[..4], b"CPPR");
    }
}

#[test]
fn plan_then_run_reproduces_the_identity_map() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, _) = stage_identity(dir.path(), false);
    let plan = dir.path().join("plan.txt");
    run_sub(
        "plan",
        &[("--net", &net), ("--out", &plan)],
        &["--mode", "imprecise", "--u", "4", "--workers", "2"],
    );
    let text = fs::read_to_string(&plan).unwrap();
    assert!(text.starts_with("cplan v1"), "{text}");

    let shape = TensorShape::new(10, 1, 1).unwrap();
    let mut data = vec![0.0f32; 10];
    data[3] = 1.0;
    let input = Tensor::row_major(shape, data.clone()).unwrap();
    let input_path = dir.path().join("in.cppd");
    let mut bytes = Vec::new();
    write_tensor(&mut bytes, &input).unwrap();
    fs::write(&input_path, &bytes).unwrap();

    let out_path = dir.path().join("out.cppd");
    let stdout = run_sub(
        "run",
        &[
            ("--net", &net),
            ("--model", &model),
            ("--plan", &plan),
            ("--input", &input_path),
            ("--out", &out_path),
        ],
        &[],
    );
    let log = String::from_utf8(stdout.stdout).unwrap();
    assert!(log.contains("timing c1"), "{log}");
    assert!(log.contains("total "), "{log}");

    let output = read_tensor(&fs::read(&out_path).unwrap()[..]).unwrap();
    assert_eq!(output.shape(), shape);
    assert_eq!(output.data(), data.as_slice());
}

#[test]
fn run_accepts_reordered_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, _) = stage_identity(dir.path(), false);
    let cppr = dir.path().join("params.cppr");
    run_sub(
        "reorder",
        &[("--net", &net), ("--model", &model), ("--out", &cppr)],
        &["--u", "4"],
    );
    let plan = dir.path().join("plan.txt");
    run_sub(
        "plan",
        &[("--net", &net), ("--out", &plan)],
        &["--mode", "relaxed", "--u", "4"],
    );

    let shape = TensorShape::new(10, 1, 1).unwrap();
    let mut data = vec![0.0f32; 10];
    data[7] = 1.0;
    let input_path = dir.path().join("in.cppd");
    let mut bytes = Vec::new();
    write_tensor(&mut bytes, &Tensor::row_major(shape, data.clone()).unwrap()).unwrap();
    fs::write(&input_path, &bytes).unwrap();

    let out_path = dir.path().join("out.cppd");
    run_sub(
        "run",
        &[
            ("--net", &net),
            ("--model", &cppr),
            ("--plan", &plan),
            ("--input", &input_path),
            ("--out", &out_path),
        ],
        &[],
    );
    let output = read_tensor(&fs::read(&out_path).unwrap()[..]).unwrap();
    assert_eq!(output.data(), data.as_slice());
}

#[test]
fn run_refuses_plan_and_cppr_width_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, _) = stage_identity(dir.path(), false);
    let cppr = dir.path().join("params.cppr");
    run_sub(
        "reorder",
        &[("--net", &net), ("--model", &model), ("--out", &cppr)],
        &["--u", "8"],
    );
    let plan = dir.path().join("plan.txt");
    run_sub(
        "plan",
        &[("--net", &net), ("--out", &plan)],
        &["--mode", "imprecise", "--u", "4"],
    );

    let shape = TensorShape::new(10, 1, 1).unwrap();
    let input_path = dir.path().join("in.cppd");
    let mut bytes = Vec::new();
    write_tensor(
        &mut bytes,
        &Tensor::row_major(shape, vec![0.5; 10]).unwrap(),
    )
    .unwrap();
    fs::write(&input_path, &bytes).unwrap();

    let out = mapconv(&[
        "run",
        "--net",
        &net.display().to_string(),
        "--model",
        &cppr.display().to_string(),
        "--plan",
        &plan.display().to_string(),
        "--input",
        &input_path.display().to_string(),
        "--out",
        &dir.path().join("out.cppd").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('8') && stderr.contains('4'), "{stderr}");
}

#[test]
fn analyze_selects_all_imprecise_on_clean_network() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, dataset) = stage_identity(dir.path(), false);
    let plan = dir.path().join("plan.txt");
    let report = dir.path().join("report.txt");
    let out = run_sub(
        "analyze",
        &[
            ("--net", &net),
            ("--model", &model),
            ("--dataset", &dataset),
            ("--out", &plan),
            ("--report", &report),
        ],
        &["--tolerance", "0", "--u", "4"],
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("analysis v1"), "{stdout}");
    assert!(stdout.contains("baseline 1.000000"), "{stdout}");
    assert_eq!(fs::read_to_string(&report).unwrap(), stdout);

    let plan_text = fs::read_to_string(&plan).unwrap();
    for layer in ["c1", "c2"] {
        assert!(
            plan_text.contains(&format!("layer {layer} mode=imprecise")),
            "{plan_text}"
        );
    }
}

#[test]
fn analyze_protects_the_poisoned_layer_at_zero_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, dataset) = stage_identity(dir.path(), true);
    let plan = dir.path().join("plan.txt");
    run_sub(
        "analyze",
        &[
            ("--net", &net),
            ("--model", &model),
            ("--dataset", &dataset),
            ("--out", &plan),
        ],
        &["--tolerance", "0", "--u", "4"],
    );
    let plan_text = fs::read_to_string(&plan).unwrap();
    assert!(plan_text.contains("layer c1 mode=imprecise"), "{plan_text}");
    assert!(!plan_text.contains("layer c2 mode=imprecise"), "{plan_text}");

    // With a 10% budget the flip is allowed.
    let lenient = dir.path().join("plan_lenient.txt");
    run_sub(
        "analyze",
        &[
            ("--net", &net),
            ("--model", &model),
            ("--dataset", &dataset),
            ("--out", &lenient),
        ],
        &["--tolerance", "0.1", "--u", "4"],
    );
    let lenient_text = fs::read_to_string(&lenient).unwrap();
    assert!(lenient_text.contains("layer c2 mode=imprecise"), "{lenient_text}");
}

#[test]
fn missing_input_files_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, _) = stage_identity(dir.path(), false);
    let missing = dir.path().join("no-such-file.cppd");
    let out = mapconv(&[
        "analyze",
        "--net",
        &net.display().to_string(),
        "--model",
        &model.display().to_string(),
        "--dataset",
        &missing.display().to_string(),
        "--out",
        &dir.path().join("plan.txt").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no-such-file.cppd"), "{stderr}");
}

#[test]
fn bench_reports_trimmed_means_and_speedups() {
    let dir = tempfile::tempdir().unwrap();
    let (net, model, _) = stage_identity(dir.path(), false);
    let baseline = dir.path().join("baseline.txt");
    let candidate = dir.path().join("candidate.txt");
    run_sub(
        "plan",
        &[("--net", &net), ("--out", &baseline)],
        &["--mode", "precise", "--u", "1"],
    );
    run_sub(
        "plan",
        &[("--net", &net), ("--out", &candidate)],
        &["--mode", "imprecise", "--u", "4", "--workers", "2"],
    );

    let out = Command::new(env!("CARGO_BIN_EXE_mapconv"))
        .args([
            "bench",
            "--net",
            &net.display().to_string(),
            "--model",
            &model.display().to_string(),
            "--runs",
            "5",
            &baseline.display().to_string(),
            &candidate.display().to_string(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.starts_with("bench v1\nruns 5\n"), "{report}");
    let plan_lines: Vec<&str> = report
        .lines()
        .filter(|l| l.starts_with("plan "))
        .collect();
    assert_eq!(plan_lines.len(), 2, "{report}");
    // Baseline speedup is 1.000 by definition; both means parse as numbers.
    assert!(plan_lines[0].ends_with("speedup 1.000"), "{report}");
    for line in &plan_lines {
        let mean: f64 = line
            .split_whitespace()
            .nth(3)
            .unwrap()
            .parse()
            .unwrap();
        assert!(mean >= 0.0);
    }
    // Raw lines carry exactly `runs` observations.
    for line in report.lines().filter(|l| l.starts_with("raw ")) {
        assert_eq!(line.split_whitespace().count(), 2 + 5, "{line}");
    }
}
