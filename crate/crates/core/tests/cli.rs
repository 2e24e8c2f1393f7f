use std::path::Path;

use clap::Parser;
use qpgd::capacitor::PointTable;
use qpgd::harness::cli::{run, Cli};
use qpgd::harness::Checkpoint;
use qpgd::optimizer::read_step_records;
use qpgd::Error;

fn cli(args: &[&str]) -> (qpgd::Result<i32>, String) {
    let mut out = Vec::new();
    let r = run(Cli::parse_from(std::iter::once("qpgd").chain(args.iter().copied())), &mut out);
    (r, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// small enough to train in well under a second
const TINY: [&str; 12] =
    ["--hidden", "6,6", "--interior", "60", "--grounded", "20", "--top", "10", "--grid", "20", "--log_every", "0"];

fn tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(TINY).collect()
}

fn make_truth(dir: &Path) -> String {
    let out = dir.join("truth");
    let (r, text) = cli(&tiny(&["truth", "--epochs", "50", "--out", s(&out)]));
    assert_eq!(r.unwrap(), 0);
    assert!(text.contains("mean_boundary_error"));
    s(&out.join("checkpoint.txt")).to_string()
}

#[test]
fn toy_command_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.txt");
    let (r, text) = cli(&["toy", "--out", s(&path)]);
    assert_eq!(r.unwrap(), 0);
    assert!(!text.contains("FAIL"), "{text}");
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 9);
}

#[test]
fn diagnose_rejects_empty_and_headerless_histories() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(cli(&["diagnose", s(&empty)]).0, Err(Error::Format(_))));
    let partial = dir.path().join("partial.csv");
    std::fs::write(&partial, "epoch,f,g\n0,1,0\n").unwrap();
    assert!(matches!(cli(&["diagnose", s(&partial)]).0, Err(Error::Format(_))));
}

#[test]
fn diagnose_without_config_is_advisory() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("loss_history.csv");
    // f rises: a descent violation, reported but not fatal for adaptive runs
    std::fs::write(&csv, "epoch,f,g,alpha,gamma\n0,1.0,-0.5,0,0.01\n1,2.0,-0.5,0,0.01\n2,0.5,-0.6,0,0.01\n").unwrap();
    let (r, text) = cli(&["diagnose", s(&csv)]);
    assert_eq!(r.unwrap(), 0);
    assert!(text.contains("flag (advisory)") && text.contains("descent"), "{text}");
    assert!(dir.path().join("diagnostics.txt").exists());
}

#[test]
fn sample_writes_readable_point_sets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("interior.txt");
    let (r, _) = cli(&["sample", "--set", "interior", "--seed", "3", "--interior", "37", "--out", s(&path)]);
    assert_eq!(r.unwrap(), 0);
    let table = PointTable::read(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!((table.points.len(), table.seed), (37, Some(3)));

    assert!(matches!(cli(&["sample", "--set", "measurements"]).0, Err(Error::Config(_))));
    assert!(matches!(cli(&["sample", "--set", "corners"]).0, Err(Error::Config(_))));
}

#[test]
fn train_pretrain_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = make_truth(dir.path());

    let naive = dir.path().join("naive");
    let qpgd = dir.path().join("qpgd");
    for (mode, out) in [("naive", &naive), ("qpgd", &qpgd)] {
        let (r, text) =
            cli(&tiny(&["train", "--mode", mode, "--epochs", "40", "--seed", "5", "--truth", &truth, "--out", s(out)]));
        assert_eq!(r.unwrap(), 0);
        assert!(text.contains("v_hat"));
        for f in ["config.toml", "checkpoint.txt", "loss_history.csv", "metrics.txt", "grid.csv"] {
            assert!(out.join(f).exists(), "{mode}: {f}");
        }
    }

    let read = |d: &Path| read_step_records(std::fs::File::open(d.join("loss_history.csv")).unwrap()).unwrap();
    let (hn, hq) = (read(&naive), read(&qpgd));
    assert_eq!(hn.len(), 40);
    // naive runs never filter
    assert!(hn.iter().all(|r| r.alpha == 0.0));
    // same seed, same initialization, same first evaluation
    assert_eq!(hn[0].f, hq[0].f);
    assert_eq!(hn[0].g, hq[0].g);

    let header = std::fs::read_to_string(naive.join("loss_history.csv")).unwrap();
    assert!(header.starts_with("epoch,f,g,alpha,gamma,l_data,l_pde,l_bc0,l_bcv\n"));
    let grid = std::fs::read_to_string(naive.join("grid.csv")).unwrap();
    assert!(grid.starts_with("x,y,phi,laplacian,error\n"));

    let eval_dir = dir.path().join("eval");
    let (r, text) =
        cli(&["evaluate", "--checkpoint", &truth, "--truth", &truth, "--grid", "20", "--out", s(&eval_dir)]);
    assert_eq!(r.unwrap(), 0);
    let err_line = text.lines().find(|l| l.starts_with("avg_abs_error_interior")).unwrap();
    assert_eq!(err_line.split_whitespace().last().unwrap().parse::<f64>().unwrap(), 0.0);
    assert!(eval_dir.join("metrics.txt").exists());

    let pre = dir.path().join("pre");
    let (r, text) = cli(&tiny(&["pretrain", "--truth", &truth, "--pretrain_cap", "30", "--out", s(&pre)]));
    assert_eq!(r.unwrap(), 0);
    assert!(text.contains("threshold"));
    let ckpt = Checkpoint::load(&pre.join("checkpoint.txt"), None).unwrap();
    assert_eq!(ckpt.spec.describe(), "2 6,6 1 gelu");
}

#[test]
fn train_needs_a_truth_checkpoint() {
    assert!(matches!(cli(&tiny(&["train", "--epochs", "2"])).0, Err(Error::Config(_))));
}

#[test]
fn config_file_and_flags_layer_over_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let truth = make_truth(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nmode = \"naive\"\nepochs = 7\n[qpgd]\nc = 10.0\n").unwrap();
    let out = dir.path().join("run");
    let (r, _) = cli(&tiny(&["train", "--config", s(&cfg), "--epochs", "5", "--truth", &truth, "--out", s(&out)]));
    assert_eq!(r.unwrap(), 0);
    let written = qpgd::harness::RunConfig::load(&out.join("config.toml"), None).unwrap();
    assert_eq!((written.run.epochs, written.qpgd.c, written.run.mode.to_string()), (5, 10.0, "naive".to_string()));
    assert_eq!(written.network.hidden, vec![6, 6]);
    let ckpt = Checkpoint::load(&out.join("checkpoint.txt"), Some(&written.digest())).unwrap();
    assert_eq!(ckpt.seed, written.run.seed);

    std::fs::write(&cfg, "[qpgd]\nunknown_key = 1\n").unwrap();
    assert!(matches!(cli(&["train", "--config", s(&cfg), "--truth", &truth]).0, Err(Error::Config(_))));
}

#[test]
fn evaluate_warns_on_foreign_domain() {
    let dir = tempfile::tempdir().unwrap();
    let truth = make_truth(dir.path());
    let mut other = Checkpoint::load(Path::new(&truth), None).unwrap();
    other.domain = "0".repeat(64);
    let path = dir.path().join("other.txt");
    other.save(&path).unwrap();
    let (r, text) = cli(&["evaluate", "--checkpoint", s(&path), "--truth", &truth, "--grid", "10"]);
    assert_eq!(r.unwrap(), 0);
    assert!(text.contains("warning: domain digest differs"), "{text}");
}

#[test]
fn measurement_tables_replace_the_default_layout() {
    let dir = tempfile::tempdir().unwrap();
    let truth = make_truth(dir.path());
    let table = dir.path().join("meas.txt");
    let (r, _) = cli(&["sample", "--set", "measurements", "--truth", &truth, "--out", s(&table)]);
    assert_eq!(r.unwrap(), 0);

    // a labelled table is used verbatim, so two runs over it agree with the default-layout run
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = tiny(&["train", "--mode", "naive", "--epochs", "3", "--truth", &truth, "--out", s(&out)]);
        args.extend_from_slice(extra);
        assert_eq!(cli(&args).0.unwrap(), 0);
        std::fs::read_to_string(out.join("loss_history.csv")).unwrap()
    };
    let plain = run("plain", &[]);
    assert_eq!(run("table", &["--measurements", s(&table)]), plain);

    let outside = dir.path().join("outside.txt");
    std::fs::write(&outside, "# set measurements\n0.5 0.25\n").unwrap();
    let out = dir.path().join("bad");
    let args = tiny(&["train", "--truth", &truth, "--measurements", s(&outside), "--out", s(&out)]);
    assert!(matches!(cli(&args).0, Err(Error::Domain(_))));
}
