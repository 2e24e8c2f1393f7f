//! Acceptance gate: one PASS/FAIL line per criterion and a summary line.
//! With `QPGD_ACCEPTANCE_STRICT=1` any FAIL also makes the exit status non-zero.

mod common;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use common::{fd_mismatch, nets, perturbed, points};
use qpgd::autodiff::{laplacian, mlp_eval, AnalyticField, ConstantField, LossTerm, NetworkField};
use qpgd::capacitor::{
    default_measurement_points, loss_data, loss_pde, make_measurements, sample_interior, BoundaryMatch, DataMisfit,
    DomainGeometry, MeasurementSet, PNorm, PdeResidual, PlateVoltage,
};
use qpgd::diagnostics::{
    attraction_sweep, descent_sweep, disk_case, invariance_sweep, qp_cases, run_convergence_test, ToySuite, DISK_LEVEL,
};
use qpgd::harness::cli::{run, Cli};
use qpgd::optimizer::QpgdConfig;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn gradient_fidelity() -> Outcome {
    let g = DomainGeometry::capacitor();
    let meas = default_measurement_points(&g);
    let specs = nets();
    for (k, spec) in specs.iter().enumerate() {
        let params = perturbed(spec, 1000 + k as u64);
        let (interior, grounded, top) = points(1000 + k as u64);
        let field = NetworkField::new(spec, &params).unwrap();
        let m = make_measurements(&field, &meas, 0.1, k as u64);
        let data = DataMisfit::homoscedastic(&m.labels, PNorm::Finite(2.0), true).unwrap();
        let pde = PdeResidual;
        let bc0 = BoundaryMatch::GROUNDED;
        let bcv = BoundaryMatch { target: PlateVoltage::Trainable };
        let families = [
            LossTerm { points: &interior, needs_laplacian: true, weight: 1.0, reduction: &pde },
            LossTerm { points: &grounded, needs_laplacian: false, weight: 1.0, reduction: &bc0 },
            LossTerm { points: &top, needs_laplacian: false, weight: 1.0, reduction: &bcv },
            LossTerm { points: &m.points, needs_laplacian: false, weight: 1.0, reduction: &data },
        ];
        for t in &families {
            if let Some(m) = fd_mismatch(spec, &params, std::slice::from_ref(t)) {
                return outcome(false, format!("{}: {m}", spec.describe()));
            }
        }
    }
    outcome(true, format!("{} nets x 4 loss families within rel 1e-5 (floor 1e-8)", specs.len()))
}

fn laplacian_fidelity() -> Outcome {
    let h = 1e-3;
    let specs = nets();
    let mut worst = 0.0f64;
    for (k, spec) in specs.iter().enumerate() {
        let params = perturbed(spec, 2000 + k as u64);
        for &(x, y) in &[(0.2, -0.4), (-0.7, 0.1), (0.5, -0.85)] {
            let f = |a: f64, b: f64| mlp_eval(&params, spec, a, b).unwrap();
            let stencil = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
            let exact = laplacian(&params, spec, x, y).unwrap();
            worst = worst.max((exact - stencil).abs() / exact.abs().max(1.0));
        }
    }
    let interior = sample_interior(&DomainGeometry::capacitor(), 2000, 3).unwrap();
    let harmonic = AnalyticField::new(|x, y| x * x - y * y, |_, _| 0.0);
    let l = loss_pde(&harmonic, &interior).unwrap();
    outcome(
        worst <= 1e-4 && l <= 1e-20,
        format!("{} nets, worst stencil rel err {worst:.2e}; loss_pde(x^2 - y^2) = {l:e}", specs.len()),
    )
}

fn toy_convergence() -> Outcome {
    let s = ToySuite::default();
    let cfg = QpgdConfig::sgd(1.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, problem, theta0) in qp_cases().unwrap() {
        let r = run_convergence_test(&problem, &theta0, &cfg, 1e-3, 100_000, 1e-4).unwrap();
        ok &= r.first_within.is_some() && r.final_error <= s.tol && r.kkt_residual <= s.tol;
        parts.push(format!("{name}: err {:.1e} kkt {:.1e}", r.final_error, r.kkt_residual));
    }
    outcome(ok, parts.join("; "))
}

fn toy_descent() -> Outcome {
    let cfg = QpgdConfig::sgd(1.0);
    let gammas = [1e-2, 1e-3, 1e-4];
    let (disk, disk_start, _) = disk_case(DISK_LEVEL).unwrap();
    let mut cases = qp_cases().unwrap();
    cases.push(("curved constraint", disk, disk_start));
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, problem, theta0) in &cases {
        let s = descent_sweep(problem, theta0, &cfg, &gammas, 10.0).unwrap();
        ok &= s.violations[1] == 0 && s.monotone();
        parts.push(format!("{name} {:?}", s.violations));
    }
    outcome(ok, format!("violations at gamma 1e-2/1e-3/1e-4: {}", parts.join(", ")))
}

fn toy_invariance_attraction() -> Outcome {
    let cfg = QpgdConfig::sgd(1.0);
    let gammas = [1e-2, 1e-3, 1e-4];
    let (disk, disk_start, disk_level) = disk_case(DISK_LEVEL).unwrap();
    let inv = invariance_sweep(&disk, &disk_level, &cfg, &gammas, 10.0, DISK_LEVEL).unwrap();
    let qp = qp_cases().unwrap();
    let att_disk = attraction_sweep(&disk, &disk_start, &cfg, &gammas, 10.0).unwrap();
    let att_qp = attraction_sweep(&qp[2].1, &qp[2].2, &cfg, &gammas, 10.0).unwrap();
    outcome(
        inv.passed() && att_disk.passed() && att_qp.passed(),
        format!(
            "excess {:?} (K {:.3}); attraction slack {:?} / {:?} within O(gamma^2) bounds",
            inv.max_excess.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            inv.k,
            att_disk.max_slack.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            att_qp.max_slack.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
        ),
    )
}

fn data_arithmetic() -> Outcome {
    let m = MeasurementSet {
        points: vec![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1]],
        labels: vec![0.0; 4],
        delta: 0.1,
        deltas: None,
    };
    let p2 = loss_data(&ConstantField(0.1), &m, PNorm::Finite(2.0)).unwrap();
    let expected = (4.0 * 0.01 / 3.0f64).sqrt();
    let mixed = MeasurementSet { labels: vec![0.0, 0.4, -0.2, 0.15], ..m };
    let inf = loss_data(&ConstantField(0.1), &mixed, PNorm::Infinity).unwrap();
    outcome(
        (p2 - 0.115_470_053_837_925_15).abs() <= 1e-12 && (p2 - expected).abs() <= 1e-12 && (inf - 0.3).abs() <= 1e-15,
        format!("p = 2: {p2:.15}; p = inf: {inf}"),
    )
}

fn cli(args: &[&str]) -> qpgd::Result<i32> {
    let mut sink = Vec::new();
    run(Cli::parse_from(std::iter::once("qpgd").chain(args.iter().copied())), &mut sink)
}

fn read_metrics(dir: &Path) -> HashMap<String, f64> {
    std::fs::read_to_string(dir.join("metrics.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .filter_map(|(k, v)| v.parse().ok().map(|v| (k.to_string(), v)))
        .collect()
}

struct Paired {
    seed: u64,
    naive: HashMap<String, f64>,
    qpgd: HashMap<String, f64>,
}

fn desk_runs(root: &Path, truth: &str) -> Vec<Paired> {
    [7u64, 8, 9]
        .iter()
        .map(|&seed| {
            let s = seed.to_string();
            let mut out = Vec::new();
            for mode in ["naive", "qpgd"] {
                let dir = root.join(format!("{mode}-{seed}"));
                let d = dir.to_str().unwrap();
                let code = cli(&[
                    "train", "--scale", "desk", "--seed", &s, "--mode", mode, "--c", "1", "--truth", truth, "--out", d,
                ]);
                assert_eq!(code.unwrap(), 0);
                out.push(read_metrics(&dir));
            }
            let qpgd = out.pop().unwrap();
            Paired { seed, naive: out.pop().unwrap(), qpgd }
        })
        .collect()
}

fn desk_reproduction(runs: &[Paired]) -> Outcome {
    let delta_sq = 0.1 * 0.1;
    let (mut a, mut b, mut c, mut d) = (true, 0, 0, true);
    let mut parts = Vec::new();
    for r in runs {
        let (vq, vn) = (r.qpgd["v_hat"], r.naive["v_hat"]);
        let (lq, ln) = (r.qpgd["avg_abs_laplacian"], r.naive["avg_abs_laplacian"]);
        let gq = r.qpgd["final_g"];
        let dn = r.naive["final_l_data_sq"];
        a &= gq <= 0.05 * delta_sq;
        d &= dn < delta_sq;
        b += usize::from((vq - 1.0).abs() <= (vn - 1.0).abs() && (0.85..=1.15).contains(&vq));
        c += usize::from(lq <= ln);
        parts.push(format!(
            "seed {}: g {gq:.2e}, V0 {vq:.4}/{vn:.4}, lap {lq:.4}/{ln:.4}, naive l_data^2 {dn:.2e}",
            r.seed
        ));
    }
    let majority = runs.len() / 2 + 1;
    outcome(
        a && d && b >= majority && c >= majority,
        format!("(a) {a} (b) {b}/{} (c) {c}/{} (d) {d} [qpgd/naive] {}", runs.len(), runs.len(), parts.join("; ")),
    )
}

fn determinism(root: &Path, truth: &str) -> Outcome {
    let again = root.join("qpgd-7-again");
    let first = std::fs::read(root.join("qpgd-7").join("loss_history.csv")).unwrap();
    let code = cli(&["train", "--scale", "desk", "--seed", "7", "--truth", truth, "--out", again.to_str().unwrap()]);
    assert_eq!(code.unwrap(), 0);
    let second = std::fs::read(again.join("loss_history.csv")).unwrap();
    outcome(first == second, format!("{} bytes, identical: {}", first.len(), first == second))
}

fn report(id: usize, name: &str, limit: Duration, start: Instant, o: Outcome, failed: &mut Vec<usize>) {
    let took = start.elapsed();
    let passed = o.passed && took <= limit;
    if !passed {
        failed.push(id);
    }
    println!(
        "{} {id}. {name}: {} ({:.1} s, limit {} s)",
        if passed { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
}

fn main() {
    // `cargo test -- --list` and friends pass arguments we do not handle
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut failed = Vec::new();

    let t = Instant::now();
    report(1, "gradient fidelity", min(1), t, gradient_fidelity(), &mut failed);
    let t = Instant::now();
    report(2, "laplacian fidelity", min(1), t, laplacian_fidelity(), &mut failed);
    let t = Instant::now();
    report(3, "toy KKT convergence", min(1), t, toy_convergence(), &mut failed);
    let t = Instant::now();
    report(4, "lyapunov descent", min(2), t, toy_descent(), &mut failed);
    let t = Instant::now();
    report(5, "invariance and attraction", min(2), t, toy_invariance_attraction(), &mut failed);

    let tmp = tempfile::tempdir().unwrap();
    let root: PathBuf = tmp.path().to_path_buf();
    let t = Instant::now();
    let truth_dir = root.join("truth");
    assert_eq!(cli(&["truth", "--scale", "desk", "--out", truth_dir.to_str().unwrap()]).unwrap(), 0);
    let tq = read_metrics(&truth_dir);
    println!(
        "NOTE truth network: avg |lap| {:.4} (pilot bound 0.05), mean boundary error {:.4} (pilot bound 0.02)",
        tq["avg_abs_laplacian"], tq["mean_boundary_error"]
    );
    let truth = truth_dir.join("checkpoint.txt");
    let truth = truth.to_str().unwrap();
    let runs = desk_runs(&root, truth);
    report(6, "desk-scale reproduction", min(30), t, desk_reproduction(&runs), &mut failed);
    let t = Instant::now();
    report(7, "determinism", min(30), t, determinism(&root, truth), &mut failed);
    let t = Instant::now();
    report(8, "data-loss arithmetic", Duration::from_secs(1), t, data_arithmetic(), &mut failed);

    if failed.is_empty() {
        println!("acceptance: all 8 criteria PASS");
    } else {
        println!("acceptance: {} of 8 criteria PASS; FAIL: {failed:?}", 8 - failed.len());
        if std::env::var("QPGD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
