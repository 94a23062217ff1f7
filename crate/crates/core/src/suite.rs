//! Predefined scenario matrices: the acceptance matrix exercised by the
//! integration tests and the CLI, plus delay and gain sweeps. Also the
//! parallel runner that certifies, simulates and analyzes each entry and
//! reduces it to a one-line summary.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, DEFAULT_EPS_NUM};
use crate::certification::{DelayedTheoremParams, PerSide, TheoremParams};
use crate::controllers::{GainSet, ProxyGainSet};
use crate::delay_channel::{DelayKind, DelayProfile};
use crate::diag::Diag;
use crate::dynamics::{ManipulatorParams, RobotState};
use crate::error::Error;
use crate::simulator::{run, Scenario, ScenarioMode, TorqueKind, TorqueProfile};
use crate::Result;

/// One entry of a scenario matrix.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub id: String,
    pub scenario: Scenario,
    /// Relative slack for the trajectory checks.
    pub eps_num: f64,
    /// Negative controls invert the verdict: they pass when the decay check
    /// fails or the run diverges.
    pub negative_control: bool,
}

/// One-line outcome of a suite entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub kappa: f64,
    pub fitted_rate: Option<f64>,
    pub max_error: f64,
    pub sa_entry_time: Option<f64>,
    pub s_a_radius_sq: f64,
    pub verdict: bool,
    pub detail: String,
}

fn two_link() -> ManipulatorParams {
    ManipulatorParams::reference_two_link()
}

fn initial_error_state(err0: f64, err1: f64) -> RobotState {
    RobotState {
        q: DVector::from_column_slice(&[err0, err1]),
        qdot: DVector::zeros(2),
    }
}

fn nodelay_theorem(kappa: f64, omega: f64) -> TheoremParams {
    TheoremParams {
        mu: PerSide::uniform(2.0),
        omega: PerSide::uniform(omega),
        kappa_target: kappa,
        delayed: None,
    }
}

fn gain_set(k0: f64, p: f64, d: f64) -> GainSet {
    GainSet {
        k0: Diag::uniform(2, k0),
        p: Diag::uniform(2, p),
        d: Diag::uniform(2, d),
        sigma: 1.0,
        c: 1.0,
    }
}

/// Certifiable no-delay gain sets with their theorem parameters.
pub fn nodelay_gain_sets() -> Vec<(String, GainSet, TheoremParams)> {
    vec![
        (
            "g1".into(),
            gain_set(12.0, 20.0, 8.0),
            nodelay_theorem(0.5, 1.0),
        ),
        (
            "g2".into(),
            gain_set(12.0, 40.0, 8.0),
            nodelay_theorem(0.5, 1.0),
        ),
        (
            "g3".into(),
            gain_set(12.0, 20.0, 12.0),
            nodelay_theorem(0.5, 1.0),
        ),
        (
            "g4".into(),
            gain_set(20.0, 20.0, 8.0),
            nodelay_theorem(0.8, 1.0),
        ),
        (
            "g5".into(),
            gain_set(14.0, 20.0, 8.0),
            nodelay_theorem(0.5, 2.0),
        ),
    ]
}

/// Torque profile triple used against every certified gain set.
pub fn torque_profiles() -> Vec<(String, TorqueProfile, TorqueProfile)> {
    let zero = TorqueProfile::zero();
    let step = TorqueProfile {
        tau_bar: 1.0,
        kind: TorqueKind::Step {
            amplitude: vec![1.0, 0.0],
            start: 1.0,
        },
    };
    let sin = TorqueProfile {
        tau_bar: 1.0,
        kind: TorqueKind::Sinusoid {
            amplitude: vec![0.7, 0.7],
            frequency_hz: 0.5,
            start: 0.0,
        },
    };
    vec![
        ("zero".into(), zero.clone(), zero.clone()),
        ("step".into(), step, zero.clone()),
        ("sin".into(), sin.clone(), zero),
    ]
}

fn delayed_theorem(d_bar: f64, q: f64) -> TheoremParams {
    TheoremParams {
        mu: PerSide::uniform(2.0),
        omega: PerSide::uniform(1.0),
        kappa_target: 0.5,
        delayed: Some(DelayedTheoremParams {
            nu: 0.5,
            zeta: PerSide::uniform(1.0),
            gamma: 1.0,
            psi: 0.6,
            d_bar: PerSide::uniform(d_bar),
            q: PerSide::uniform(Diag::uniform(2, q)),
        }),
    }
}

fn proxy_gains(k_hat: f64, d_hat: f64, p_hat: f64, m_hat: f64) -> ProxyGainSet {
    ProxyGainSet {
        robot: GainSet {
            k0: Diag::uniform(2, 8.0),
            p: Diag::uniform(2, 5.0),
            d: Diag::uniform(2, 4.0),
            sigma: 1.0,
            c: 1.0,
        },
        m_hat: Diag::uniform(2, m_hat),
        k_hat: Diag::uniform(2, k_hat),
        d_hat: Diag::uniform(2, d_hat),
        p_hat: Diag::uniform(2, p_hat),
        sigma_hat: 0.05,
    }
}

/// Certifiable delayed gain sets (at `d_bar = 0.5` on both directions),
/// stiff enough that zero-input runs settle below the attractivity
/// tolerance within 10 s.
pub fn delayed_gain_sets() -> Vec<(String, ProxyGainSet, TheoremParams)> {
    vec![
        (
            "pg1".into(),
            proxy_gains(16.0, 4.0, 8.0, 1.0),
            delayed_theorem(0.5, 2.0),
        ),
        (
            "pg2".into(),
            proxy_gains(20.0, 4.5, 10.0, 1.0),
            delayed_theorem(0.5, 4.0),
        ),
        (
            "pg3".into(),
            proxy_gains(16.0, 6.0, 8.0, 2.0),
            delayed_theorem(0.5, 2.0),
        ),
    ]
}

/// The three delay shapes of the delayed test matrix, all bounded by 0.5 s.
pub fn delay_profiles(seed: u64) -> Vec<(String, DelayProfile, DelayProfile)> {
    let constant = DelayProfile::constant(0.2, 0.5);
    let sin = DelayProfile {
        d_bar: 0.5,
        kind: DelayKind::Sinusoidal {
            mean: 0.25,
            amplitude: 0.2,
            frequency_hz: 0.4,
        },
    };
    let walk = |s: u64| DelayProfile {
        d_bar: 0.5,
        kind: DelayKind::UniformRandomWalk {
            step_interval: 0.01,
            step_bound: 0.02,
            seed: s,
        },
    };
    vec![
        ("const".into(), constant.clone(), constant),
        ("sin".into(), sin.clone(), sin),
        ("walk".into(), walk(seed), walk(seed.wrapping_add(1))),
    ]
}

fn base_scenario(mode: ScenarioMode, theorem: TheoremParams) -> Scenario {
    Scenario {
        master: two_link(),
        slave: two_link(),
        theorem,
        mode,
        torque_master: TorqueProfile::zero(),
        torque_slave: TorqueProfile::zero(),
        initial_master: initial_error_state(0.5, 0.0),
        initial_slave: RobotState::zero(2),
        initial_proxy_master: None,
        initial_proxy_slave: None,
        step: 1e-3,
        duration: 10.0,
        blowup: 1e6,
        bounds: None,
        bounds_safety: 1.1,
    }
}

/// No-delay matrix: every certified gain set against every torque profile.
pub fn nodelay_matrix() -> Vec<SuiteRun> {
    let mut runs = Vec::new();
    for (gid, gains, tp) in nodelay_gain_sets() {
        for (tid, tau_h, tau_e) in torque_profiles() {
            let mut sc = base_scenario(
                ScenarioMode::Nodelay {
                    gains: gains.clone(),
                },
                tp.clone(),
            );
            sc.torque_master = tau_h;
            sc.torque_slave = tau_e;
            runs.push(SuiteRun {
                id: format!("nodelay-{gid}-{tid}"),
                scenario: sc,
                eps_num: DEFAULT_EPS_NUM,
                negative_control: false,
            });
        }
    }
    runs
}

/// Delayed matrix: every certified proxy gain set under the three delay
/// shapes; the torque profile rotates with the gain set.
pub fn delayed_matrix(seed: u64) -> Vec<SuiteRun> {
    let torques = torque_profiles();
    let mut runs = Vec::new();
    for (k, (gid, gains, tp)) in delayed_gain_sets().into_iter().enumerate() {
        let (tid, tau_h, tau_e) = torques[k % torques.len()].clone();
        for (did, d_ms, d_sm) in delay_profiles(seed) {
            let mut sc = base_scenario(
                ScenarioMode::Delayed {
                    gains: gains.clone(),
                    delay_master_to_slave: d_ms,
                    delay_slave_to_master: d_sm,
                },
                tp.clone(),
            );
            sc.torque_master = tau_h.clone();
            sc.torque_slave = tau_e.clone();
            runs.push(SuiteRun {
                id: format!("delayed-{gid}-{did}-{tid}"),
                scenario: sc,
                // Delayed checks run at 2% slack.
                eps_num: 0.02,
                negative_control: false,
            });
        }
    }
    runs
}

/// Gains that violate the damping condition more than threefold; paired with
/// a resonant disturbance they must fail the decay check or diverge.
pub fn negative_control_runs() -> Vec<SuiteRun> {
    let mut runs = Vec::new();
    for k in 0..5u64 {
        let gains = GainSet {
            k0: Diag::uniform(2, 0.5),
            p: Diag::uniform(2, 20.0),
            d: Diag::uniform(2, 0.2),
            sigma: 1.0,
            c: 1.0,
        };
        let tp = nodelay_theorem(3.0, 1.0);
        let mut sc = base_scenario(ScenarioMode::Nodelay { gains }, tp);
        let kf = k as f64;
        sc.initial_master = initial_error_state(0.4 + 0.05 * kf, -0.3 + 0.05 * kf);
        sc.initial_slave = RobotState {
            q: DVector::zeros(2),
            qdot: DVector::from_column_slice(&[0.1 * kf, -0.05 * kf]),
        };
        sc.torque_master = TorqueProfile {
            tau_bar: 1.0,
            kind: TorqueKind::Sinusoid {
                amplitude: vec![1.0, 0.0],
                frequency_hz: 0.7 + 0.1 * kf,
                start: 0.0,
            },
        };
        runs.push(SuiteRun {
            id: format!("negative-s{k}"),
            scenario: sc,
            eps_num: DEFAULT_EPS_NUM,
            negative_control: true,
        });
    }
    runs
}

/// The zero-delay consistency pair: the delayed architecture with zero delay
/// bounds and a stiff proxy spring against the plain no-delay coupling.
pub fn consistency_pair() -> (SuiteRun, SuiteRun) {
    let nodelay = SuiteRun {
        id: "consistency-nodelay".into(),
        scenario: base_scenario(
            ScenarioMode::Nodelay {
                gains: gain_set(12.0, 20.0, 8.0),
            },
            nodelay_theorem(0.5, 1.0),
        ),
        eps_num: DEFAULT_EPS_NUM,
        negative_control: false,
    };
    let delayed = SuiteRun {
        id: "consistency-delayed-d0".into(),
        scenario: base_scenario(
            ScenarioMode::Delayed {
                gains: proxy_gains(30.0, 4.0, 10.0, 1.0),
                delay_master_to_slave: DelayProfile::constant(0.0, 0.0),
                delay_slave_to_master: DelayProfile::constant(0.0, 0.0),
            },
            delayed_theorem(0.0, 2.0),
        ),
        eps_num: DEFAULT_EPS_NUM,
        negative_control: false,
    };
    (nodelay, delayed)
}

/// Full acceptance matrix: certified no-delay and delayed runs, the
/// consistency pair and the negative controls.
pub fn acceptance_matrix(seed: u64) -> Vec<SuiteRun> {
    let mut runs = nodelay_matrix();
    runs.extend(delayed_matrix(seed));
    let (a, b) = consistency_pair();
    runs.push(a);
    runs.push(b);
    runs.extend(negative_control_runs());
    runs
}

/// Constant-delay sweep over increasing delay bounds.
pub fn sweep_delay_matrix() -> Vec<SuiteRun> {
    [0.0, 0.1, 0.2, 0.5]
        .into_iter()
        .map(|d_bar| {
            let mut sc = base_scenario(
                ScenarioMode::Delayed {
                    gains: proxy_gains(16.0, 4.0, 8.0, 1.0),
                    delay_master_to_slave: DelayProfile::constant(d_bar, d_bar),
                    delay_slave_to_master: DelayProfile::constant(d_bar, d_bar),
                },
                delayed_theorem(d_bar, 2.0),
            );
            sc.torque_master = TorqueProfile {
                tau_bar: 1.0,
                kind: TorqueKind::Step {
                    amplitude: vec![1.0, 0.0],
                    start: 1.0,
                },
            };
            SuiteRun {
                id: format!("sweep-delay-{d_bar}"),
                scenario: sc,
                eps_num: 0.02,
                negative_control: false,
            }
        })
        .collect()
}

/// Interconnection-stiffness sweep; doubling the stiffness halves the
/// attractive-set radius squared.
pub fn sweep_gains_matrix() -> Vec<SuiteRun> {
    [20.0, 40.0, 80.0]
        .into_iter()
        .map(|p| {
            let mut sc = base_scenario(
                ScenarioMode::Nodelay {
                    gains: gain_set(12.0, p, 8.0),
                },
                nodelay_theorem(0.5, 1.0),
            );
            sc.torque_master = TorqueProfile {
                tau_bar: 1.0,
                kind: TorqueKind::Step {
                    amplitude: vec![1.0, 0.0],
                    start: 1.0,
                },
            };
            SuiteRun {
                id: format!("sweep-gains-p{p}"),
                scenario: sc,
                eps_num: DEFAULT_EPS_NUM,
                negative_control: false,
            }
        })
        .collect()
}

/// Matrix lookup by suite name.
pub fn matrix_by_name(name: &str, seed: u64) -> Result<Vec<SuiteRun>> {
    match name {
        "acceptance" => Ok(acceptance_matrix(seed)),
        "sweep-delay" => Ok(sweep_delay_matrix()),
        "sweep-gains" => Ok(sweep_gains_matrix()),
        other => Err(Error::input(format!(
            "unknown suite '{other}' (expected acceptance, sweep-delay or sweep-gains)"
        ))),
    }
}

/// Certify, run and analyze one entry.
pub fn execute_run(entry: &SuiteRun) -> RunSummary {
    let mut summary = RunSummary {
        id: entry.id.clone(),
        kappa: f64::NAN,
        fitted_rate: None,
        max_error: f64::NAN,
        sa_entry_time: None,
        s_a_radius_sq: f64::NAN,
        verdict: false,
        detail: String::new(),
    };
    let cert = match entry.scenario.certify() {
        Ok(c) => c,
        Err(e) => {
            summary.detail = format!("certification error: {e}");
            return summary;
        }
    };
    summary.kappa = cert.derived.kappa;
    summary.s_a_radius_sq = cert.derived.s_a_radius_sq;

    if entry.negative_control {
        if cert.passed {
            summary.detail = "negative control unexpectedly certified".into();
            return summary;
        }
    } else if !cert.passed {
        summary.detail = format!(
            "certification failed: {}",
            cert.violations()
                .iter()
                .map(|v| v.name.as_str())
                .collect::<Vec<_>>()
                .join("; ")
        );
        return summary;
    }

    let trace = match run(&entry.scenario, &cert) {
        Ok(t) => t,
        Err(Error::Divergence { t, norm }) => {
            summary.detail = format!("diverged at t = {t:.3} s (norm {norm:.3e})");
            summary.verdict = entry.negative_control;
            return summary;
        }
        Err(e) => {
            summary.detail = format!("run error: {e}");
            return summary;
        }
    };
    let report = match analyze(&trace, &cert, entry.eps_num) {
        Ok(r) => r,
        Err(e) => {
            summary.detail = format!("analysis error: {e}");
            return summary;
        }
    };
    summary.fitted_rate = report.decay.fitted_rate;
    summary.max_error = report.sets.max_error_sq.sqrt();
    summary.sa_entry_time = report.sets.settled_time;
    if entry.negative_control {
        summary.verdict = !report.decay.pass;
        summary.detail = if report.decay.pass {
            "negative control satisfied the decay bound".into()
        } else {
            format!(
                "decay violated as expected (max violation {:+.3e})",
                report.decay.max_violation
            )
        };
    } else {
        summary.verdict = report.all_pass();
        if !summary.verdict {
            summary.detail = format!(
                "checks failed: decay={} invariance={} attractivity={} iss={} sandwich={}",
                report.decay.pass,
                report.sets.invariance_pass,
                report.sets.attractivity_pass,
                report.iss.pass,
                report.norm_bounds.pass
            );
        }
    }
    summary
}

/// Execute a matrix on a bounded worker pool; summaries keep matrix order.
pub fn execute(runs: &[SuiteRun], workers: usize) -> Result<Vec<RunSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
    Ok(pool.install(|| runs.par_iter().map(execute_run).collect()))
}

/// One-row-per-run summary table.
pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = String::from(
        "scenario_id,kappa,fitted_rate,max_error,sa_entry_time,s_a_radius_sq,verdict\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{},{:.6e},{},{:.6e},{},{:.6e},{}\n",
            s.id,
            s.kappa,
            s.fitted_rate
                .map_or("n/a".to_string(), |r| format!("{r:.6e}")),
            s.max_error,
            s.sa_entry_time
                .map_or("never".to_string(), |t| format!("{t:.3}")),
            s.s_a_radius_sq,
            if s.verdict { "pass" } else { "fail" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_listed_gain_sets_certify() {
        let b = crate::dynamics::estimate_bounds(
            &two_link(),
            &crate::dynamics::standard_grid(2, 25),
            &{
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xB0);
                crate::dynamics::unit_velocity_samples(2, 100, &mut rng)
            },
            1.1,
        )
        .unwrap();
        let check_derived = |id: &str, cert: &crate::certification::Certificate| {
            assert!(cert.passed, "{id}: {cert}");
            // On a passing certificate every derived constant is finite and
            // positive.
            let d = &cert.derived;
            for (v, name) in [
                (d.kappa, "kappa"),
                (d.omega, "omega"),
                (d.a1, "a1"),
                (d.a2, "a2"),
                (d.p_min, "p_min"),
                (d.p_prime, "p_prime"),
                (d.s_i_gain, "s_i_gain"),
            ] {
                assert!(v.is_finite() && v > 0.0, "{id}: {name} = {v}");
            }
            if let Some(delta) = d.delta {
                assert!(delta.is_finite() && delta > 0.0);
            }
        };
        for (id, g, tp) in nodelay_gain_sets() {
            let cert = crate::certification::certify_nodelay(&g, &b, &b, &tp, 0.0).unwrap();
            check_derived(&id, &cert);
        }
        for (id, pg, tp) in delayed_gain_sets() {
            let cert = crate::certification::certify_delayed(&pg, &b, &b, &tp, 0.0).unwrap();
            check_derived(&id, &cert);
        }
    }

    #[test]
    fn negative_controls_fail_certification() {
        for run in negative_control_runs() {
            let cert = run.scenario.certify().unwrap();
            assert!(!cert.passed);
            // The damping condition must be violated at least threefold.
            let d_bar = cert
                .conditions
                .iter()
                .find(|c| c.name.starts_with("D_bar"))
                .unwrap();
            assert!(d_bar.margin < 0.0);
        }
    }

    #[test]
    fn matrix_lookup() {
        assert!(matrix_by_name("acceptance", 1).unwrap().len() >= 24);
        assert_eq!(matrix_by_name("sweep-delay", 1).unwrap().len(), 4);
        assert_eq!(matrix_by_name("sweep-gains", 1).unwrap().len(), 3);
        assert!(matrix_by_name("bogus", 1).is_err());
    }
}
