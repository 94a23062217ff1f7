//! Command-line front end: certify a scenario's gains, run it and emit the
//! trace plus analysis reports, or execute a predefined suite.
//!
//! Exit codes: 0 all enabled checks pass, 1 certification or a trajectory
//! check failed, 2 unreadable or unparseable input, 3 the run diverged.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::analyze;
use crate::error::Error;
use crate::simulator::{run, Scenario};
use crate::suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Environment variable bounding the suite worker pool.
pub const WORKERS_ENV: &str = "TELEOP_WORKERS";

/// Resolved invocation parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub certify_only: bool,
    pub skip_analysis: bool,
    pub suite: Option<String>,
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn load_scenario(cfg: &RunConfig) -> Result<Scenario, i32> {
    let path = cfg.scenario.as_ref().ok_or_else(|| {
        eprintln!("error: --scenario <path> is required");
        EXIT_PARSE
    })?;
    let mut sc = Scenario::load(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_PARSE
    })?;
    if let Some(seed) = cfg.seed {
        sc.reseed(seed);
    }
    Ok(sc)
}

fn ensure_out_dir(dir: &Path) -> Result<(), i32> {
    fs::create_dir_all(dir).map_err(|e| {
        eprintln!(
            "error: cannot create output directory {}: {e}",
            dir.display()
        );
        EXIT_PARSE
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), i32> {
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_PARSE
    })
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

/// Certify the scenario's gains and write the certificate report.
pub fn cmd_certify(cfg: &RunConfig) -> i32 {
    let sc = match load_scenario(cfg) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    let cert = match sc.certify() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    if ensure_out_dir(&cfg.out_dir).is_err() {
        return EXIT_PARSE;
    }
    print!("{cert}");
    if write_file(
        &cfg.out_dir.join("certificate.txt"),
        format!("{cert}").as_bytes(),
    )
    .is_err()
        || write_file(
            &cfg.out_dir.join("certificate.json"),
            json_pretty(&cert).as_bytes(),
        )
        .is_err()
    {
        return EXIT_PARSE;
    }
    if cert.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Certify, simulate and analyze the scenario; write the trace CSV, the
/// metadata sidecar and the analysis report.
pub fn cmd_run(cfg: &RunConfig) -> i32 {
    let sc = match load_scenario(cfg) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    let cert = match sc.certify() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    if ensure_out_dir(&cfg.out_dir).is_err() {
        return EXIT_PARSE;
    }
    print!("{cert}");
    let cert_files_ok = write_file(
        &cfg.out_dir.join("certificate.txt"),
        format!("{cert}").as_bytes(),
    )
    .is_ok()
        && write_file(
            &cfg.out_dir.join("certificate.json"),
            json_pretty(&cert).as_bytes(),
        )
        .is_ok();
    if !cert_files_ok {
        return EXIT_PARSE;
    }
    if cfg.certify_only {
        return if cert.passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        };
    }

    let trace = match run(&sc, &cert) {
        Ok(t) => t,
        Err(Error::Divergence { t, norm }) => {
            eprintln!("run diverged at t = {t:.6} s (state norm {norm:.3e})");
            let report = format!("divergence\nt = {t:.17e}\nstate_norm = {norm:.17e}\n");
            let _ = write_file(&cfg.out_dir.join("divergence.txt"), report.as_bytes());
            return EXIT_DIVERGENCE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };

    let mut csv = Vec::new();
    if trace.write_csv(&mut csv).is_err() {
        eprintln!("error: trace serialization failed");
        return EXIT_CHECK_FAILED;
    }
    if write_file(&cfg.out_dir.join("trace.csv"), &csv).is_err()
        || write_file(
            &cfg.out_dir.join("trace_meta.json"),
            json_pretty(&trace.meta).as_bytes(),
        )
        .is_err()
    {
        return EXIT_PARSE;
    }

    if cfg.skip_analysis {
        return if cert.passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        };
    }
    let report = match analyze(&trace, &cert, crate::analysis::DEFAULT_EPS_NUM) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    print!("{report}");
    if write_file(
        &cfg.out_dir.join("report.txt"),
        format!("{report}").as_bytes(),
    )
    .is_err()
        || write_file(
            &cfg.out_dir.join("report.json"),
            json_pretty(&report).as_bytes(),
        )
        .is_err()
    {
        return EXIT_PARSE;
    }
    if cert.passed && report.all_pass() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Execute a named scenario matrix and write the one-row-per-run summary.
pub fn cmd_suite(cfg: &RunConfig) -> i32 {
    let name = match &cfg.suite {
        Some(n) => n.clone(),
        None => {
            eprintln!("error: --suite <name> is required");
            return EXIT_PARSE;
        }
    };
    let seed = cfg.seed.unwrap_or(42);
    let runs = match suite::matrix_by_name(&name, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    if ensure_out_dir(&cfg.out_dir).is_err() {
        return EXIT_PARSE;
    }
    let summaries = match suite::execute(&runs, worker_count()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    let csv = suite::summary_csv(&summaries);
    print!("{csv}");
    if write_file(&cfg.out_dir.join("summary.csv"), csv.as_bytes()).is_err() {
        return EXIT_PARSE;
    }
    if summaries.iter().all(|s| s.verdict) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
