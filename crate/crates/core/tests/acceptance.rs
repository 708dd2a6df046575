//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! status 1 if any criterion fails. Pass criterion numbers as arguments to
//! run a subset: `cargo test --test acceptance -- 1 7 12`.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use magpie_core::experiment::{run_experiment, ExperimentConfig, SolverSpec};
use magpie_core::properties::{
    consistency_suite, corrected_rate_report, descent_suite, exact_instance, exact_trace, gradient_fd_suite,
    harmonic_transfer_suite, majorization_suite, monotone_report, rate_report, regularization_transfer_suite,
    transfer_identities_suite, weight_bounds_suite, PropertyReport,
};
use magpie_core::{Algorithm, RunLog, SolverConfig};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn from_reports(reports: &[PropertyReport]) -> Self {
        Self {
            pass: reports.iter().all(PropertyReport::passed),
            lines: reports.iter().map(ToString::to_string).collect(),
        }
    }

    fn note(mut self, line: impl Into<String>) -> Self {
        self.lines.push(line.into());
        self
    }
}

fn c1() -> Outcome {
    let start = Instant::now();
    let reports = majorization_suite(200, SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut out = Outcome::from_reports(&reports);
    out.pass &= secs < 10.0;
    out.note(format!("runtime {secs:.2} s (limit 10 s)"))
}

fn c2() -> Outcome {
    Outcome::from_reports(&[gradient_fd_suite(50, SEED + 1).unwrap()])
}

fn c3() -> Outcome {
    Outcome::from_reports(&[weight_bounds_suite(1000, SEED + 2).unwrap()])
}

fn c4() -> Outcome {
    Outcome::from_reports(&consistency_suite(200, SEED + 3).unwrap())
}

fn c5() -> Outcome {
    Outcome::from_reports(&descent_suite(200, SEED + 4).unwrap())
}

fn c6() -> Outcome {
    let info = harmonic_transfer_suite(200, SEED + 5).unwrap();
    Outcome::from_reports(&[regularization_transfer_suite(200, SEED + 5).unwrap()])
        .note(format!("info, not scored: {info}"))
}

fn c7() -> Outcome {
    let trace = exact_trace(&exact_instance(32, 8, SEED).unwrap(), 50).unwrap();
    Outcome::from_reports(&[monotone_report(&trace)])
}

fn c8() -> Outcome {
    let trace = exact_trace(&exact_instance(32, 8, SEED).unwrap(), 50).unwrap();
    let info = corrected_rate_report(&trace);
    let mut out = Outcome::from_reports(&[rate_report(&trace)]).note(format!("info, not scored: {info}"));
    let mut best = f64::INFINITY;
    for (t, &g) in trace.grad_norm_sq.iter().enumerate().take(3) {
        best = best.min(g);
        let bound = trace.energy_peak * trace.objective[0] / (2.0 * (t as f64 + 1.0));
        out = out.note(format!("t = {t}: min |grad|^2 = {best:.6e}, bound = {bound:.6e}"));
    }
    out
}

fn c9() -> Outcome {
    Outcome::from_reports(&[transfer_identities_suite(500, SEED + 6).unwrap()])
}

fn spec(name: &str, config: SolverConfig) -> SolverSpec {
    SolverSpec {
        name: name.to_string(),
        config,
        seed: None,
        max_epochs: None,
    }
}

fn run(cfg: &ExperimentConfig) -> Vec<(String, RunLog)> {
    let report = run_experiment(cfg).unwrap();
    report
        .outcomes
        .into_iter()
        .map(|o| (o.name.clone(), o.result.unwrap_or_else(|e| panic!("{}: {e}", o.name))))
        .collect()
}

fn full_scale(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        n: 512,
        m: 128,
        overlap_ratio: 0.5,
        eta: 0.05,
        timing: false,
        parallel: false,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn fmt_epochs(e: Option<usize>) -> String {
    e.map_or_else(|| "not reached".to_string(), |e| e.to_string())
}

/// Epoch cap for the level sweep; tol = 1e-4 is not reached by any solver
/// within it at this noise level.
const SWEEP_EPOCHS: usize = 300;

fn c10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let rpie = SolverConfig {
        alpha: 0.01,
        tol: 1e-4,
        ..SolverConfig::new(Algorithm::Rpie)
    };
    let mut solvers = vec![spec("rpie", rpie.clone())];
    for levels in 2..=7 {
        let c = SolverConfig {
            algorithm: Algorithm::Magpie,
            levels,
            ..rpie.clone()
        };
        solvers.push(spec(&format!("magpie{levels}"), c));
    }
    let cfg = ExperimentConfig {
        max_epochs: SWEEP_EPOCHS,
        solvers,
        ..full_scale(dir.path())
    };
    let start = Instant::now();
    let logs = run(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let rpie_log = &logs[0].1;
    // A single-level MAGPIE run is the rPIE run, bit for bit.
    let mut by_level = vec![rpie_log];
    by_level.extend(logs[1..].iter().map(|(_, l)| l));
    let mut out = Outcome {
        pass: true,
        lines: Vec::new(),
    };
    for (name, log) in &logs {
        let last = log.last();
        out.lines.push(format!(
            "{name:<8} epochs-to-tol {:>11}  final criterion {:.4e}  error {:.4e}  residual {:.4e}",
            fmt_epochs(log.epochs_to_tol()),
            last.grad_criterion,
            last.error.unwrap(),
            last.residual
        ));
    }
    let epochs: Vec<Option<usize>> = by_level.iter().map(|l| l.epochs_to_tol()).collect();
    let monotone = epochs.iter().all(Option::is_some)
        && epochs.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap() + 1);
    let faster = match (epochs[6], rpie_log.epochs_to_tol()) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let err7 = by_level[6].last().error.unwrap();
    let err_rpie = rpie_log.last().error.unwrap();
    let accurate = err7 <= err_rpie;
    out.pass = monotone && faster && accurate;
    out.note(format!("levels 1..7 non-increasing epochs-to-tol (slack 1): {}", verdict(monotone)))
        .note(format!("magpie7 fewer epochs than rpie: {}", verdict(faster)))
        .note(format!(
            "magpie7 final error {err7:.4e} <= rpie {err_rpie:.4e}: {}",
            verdict(accurate)
        ))
        .note(format!("cap {SWEEP_EPOCHS} epochs, {secs:.0} s"))
}

const NOISE_EPOCHS: usize = 100;

fn c11() -> Outcome {
    let mut out = Outcome {
        pass: true,
        lines: Vec::new(),
    };
    for eta in [0.05, 0.4] {
        let mut wins = 0;
        for seed in 0..3u64 {
            let dir = tempfile::tempdir().unwrap();
            let base = SolverConfig {
                alpha: 0.025,
                tol: f64::MIN_POSITIVE,
                ..SolverConfig::new(Algorithm::Rpie)
            };
            let magpie = SolverConfig {
                algorithm: Algorithm::Magpie,
                levels: 7,
                ..base.clone()
            };
            let cfg = ExperimentConfig {
                eta,
                seed,
                object_seed: Some(0),
                max_epochs: NOISE_EPOCHS,
                solvers: vec![spec("rpie", base), spec("magpie7", magpie)],
                ..full_scale(dir.path())
            };
            let logs = run(&cfg);
            let (r, m) = (&logs[0].1, &logs[1].1);
            assert_eq!(r.last().epoch, m.last().epoch);
            let (er, em) = (r.last().error.unwrap(), m.last().error.unwrap());
            let win = em <= er;
            wins += usize::from(win);
            out.lines.push(format!(
                "eta {eta} seed {seed}: magpie7 error {em:.4e}, rpie error {er:.4e} after {} epochs: {}",
                m.last().epoch,
                verdict(win)
            ));
        }
        out.pass &= wins >= 2;
    }
    out
}

fn c12() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let solvers = [Algorithm::Rpie, Algorithm::Magpie, Algorithm::Lbfgs, Algorithm::ExactSurrogate]
        .into_iter()
        .map(|a| {
            let levels = if a == Algorithm::Magpie { 4 } else { 1 };
            spec(a.name(), SolverConfig { levels, ..SolverConfig::new(a) })
        })
        .collect::<Vec<_>>();
    let mut texts = Vec::new();
    for dir in &dirs {
        let cfg = ExperimentConfig {
            n: 64,
            m: 16,
            seed: 99,
            max_epochs: 15,
            timing: false,
            parallel: true,
            out_dir: dir.path().to_path_buf(),
            solvers: solvers.clone(),
            ..Default::default()
        };
        run(&cfg);
        let mut files = vec![fs::read(dir.path().join("compare.csv")).unwrap()];
        for s in &solvers {
            files.push(fs::read(dir.path().join(&s.name).join("log.csv")).unwrap());
        }
        texts.push(files);
    }
    let same = texts[0] == texts[1];
    Outcome {
        pass: same,
        lines: vec![format!("{} CSV files compared byte for byte", texts[0].len())],
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("majorization", c1),
        ("gradient vs finite differences", c2),
        ("transfer weight bounds", c3),
        ("coarse/fine consistency", c4),
        ("coarse direction closed form and descent", c5),
        ("regularization transfer", c6),
        ("monotone exact surrogate descent", c7),
        ("sublinear gradient rate", c8),
        ("transfer operator identities", c9),
        ("level speedup at n=512, m=128", c10),
        ("noise robustness", c11),
        ("determinism", c12),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let out = f();
        println!("criterion {n:>2} {}: {name}", verdict(out.pass));
        for line in &out.lines {
            println!("    {line}");
        }
        if !out.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
