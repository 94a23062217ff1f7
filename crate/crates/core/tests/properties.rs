//! Property tests for the structural invariants: skew symmetry of the
//! Coriolis construction, controller form identities, delay channel
//! containment, torque bounds and the energy audit along simulated
//! trajectories.

use nalgebra::DVector;
use proptest::prelude::*;

use teleop_core::controllers::{control_nodelay, dynamic_gain, GainSet};
use teleop_core::delay_channel::{DelayKind, DelayProfile, DelaySampler, SignalHistory};
use teleop_core::diag::Diag;
use teleop_core::dynamics::{coriolis_matrix, mass_matrix, ManipulatorParams, RobotState};
use teleop_core::simulator::{external_torque, TorqueKind, TorqueProfile};

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_column_slice(&[a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn coriolis_skew_symmetry(
        q0 in -3.2f64..3.2, q1 in -3.2f64..3.2,
        qd0 in -2.0f64..2.0, qd1 in -2.0f64..2.0,
        z0 in -1.0f64..1.0, z1 in -1.0f64..1.0,
    ) {
        let arm = ManipulatorParams::reference_two_link();
        let q = v2(q0, q1);
        let qd = v2(qd0, qd1);
        let z = v2(z0, z1);
        let eps = 1e-6;
        let mp = mass_matrix(&arm, &(&q + &qd * eps)).unwrap();
        let mm = mass_matrix(&arm, &(&q - &qd * eps)).unwrap();
        let mdot = (mp - mm) / (2.0 * eps);
        let c = coriolis_matrix(&arm, &q, &qd).unwrap();
        let quad = (z.transpose() * (&mdot - 2.0 * c) * &z)[(0, 0)].abs();
        prop_assert!(quad < 1e-8 * z.norm_squared() + 1e-14);
    }

    #[test]
    fn control_form_identity(
        k0 in 0.5f64..30.0, p in 1.0f64..50.0, d in 0.1f64..20.0,
        sigma in 0.1f64..3.0, c in 0.1f64..2.0,
        q0 in -1.0f64..1.0, q1 in -1.0f64..1.0,
        qd0 in -2.0f64..2.0, qd1 in -2.0f64..2.0,
        r0 in -1.0f64..1.0, r1 in -1.0f64..1.0,
    ) {
        let g = GainSet {
            k0: Diag::uniform(2, k0),
            p: Diag::uniform(2, p),
            d: Diag::uniform(2, d),
            sigma,
            c,
        };
        let state = RobotState::new(v2(q0, q1), v2(qd0, qd1)).unwrap();
        let q_remote = v2(r0, r1);
        let tau = control_nodelay(&g, &state, &q_remote).unwrap();
        let k = dynamic_gain(&g, &state.qdot).unwrap();
        let e = &state.q - &q_remote;
        let expanded = -(g.p.add(&k.scale(g.sigma))).mul_vec(&e)
            - (g.d.add(&k)).mul_vec(&state.qdot);
        prop_assert!((tau - expanded).amax() <= 1e-12 * (1.0 + k0 + p + d));
    }

    #[test]
    fn gain_schedule_is_quadratic(
        k0 in 0.5f64..30.0, sigma in 0.1f64..3.0, c in 0.1f64..2.0,
        qd0 in -2.0f64..2.0, qd1 in -2.0f64..2.0,
    ) {
        let g = GainSet {
            k0: Diag::uniform(2, k0),
            p: Diag::uniform(2, 1.0),
            d: Diag::uniform(2, 1.0),
            sigma,
            c,
        };
        let qd = v2(qd0, qd1);
        let k1 = dynamic_gain(&g, &qd).unwrap();
        let k2 = dynamic_gain(&g, &(&qd * 2.0)).unwrap();
        for i in 0..2 {
            let inc1 = k1.0[i] - k0;
            let inc2 = k2.0[i] - k0;
            prop_assert!((inc2 - 4.0 * inc1).abs() <= 1e-12 * (1.0 + inc2.abs()));
        }
    }

    #[test]
    fn delay_samples_stay_bounded(
        d_bar in 0.0f64..1.0,
        mean in -0.5f64..1.5, amp in 0.0f64..1.0, freq in 0.0f64..3.0,
        seed in any::<u64>(),
    ) {
        for profile in [
            DelayProfile { d_bar, kind: DelayKind::Constant { delay: mean } },
            DelayProfile { d_bar, kind: DelayKind::Sinusoidal { mean, amplitude: amp, frequency_hz: freq } },
            DelayProfile { d_bar, kind: DelayKind::UniformRandomWalk { step_interval: 0.02, step_bound: 0.1, seed } },
        ] {
            let sampler = DelaySampler::new(&profile, 5.0).unwrap();
            for i in 0..500 {
                let d = sampler.delay_at(i as f64 * 0.01);
                prop_assert!((0.0..=d_bar).contains(&d));
            }
        }
    }

    #[test]
    fn history_interpolation_within_convex_hull(
        values in proptest::collection::vec(-5.0f64..5.0, 20..60),
        frac in 0.0f64..1.0,
    ) {
        let h_step = 0.05;
        let d_bar = 0.6;
        let mut hist = SignalHistory::new(d_bar, h_step, v2(values[0], -values[0])).unwrap();
        for (k, v) in values.iter().enumerate() {
            hist.push(k as f64 * h_step, v2(*v, -*v)).unwrap();
        }
        let t_last = (values.len() - 1) as f64 * h_step;
        let d = frac * d_bar.min(t_last);
        let sampled = hist.sample_delayed(t_last, d).unwrap();
        // The interpolated value lies between the bracketing samples.
        let tr = t_last - d;
        let idx = (tr / h_step).floor() as usize;
        let lo = values[idx.min(values.len() - 1)];
        let hi = values[(idx + 1).min(values.len() - 1)];
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        prop_assert!(sampled[0] >= lo - 1e-12 && sampled[0] <= hi + 1e-12);
    }

    #[test]
    fn torque_profiles_respect_declared_bound(
        a0 in -2.0f64..2.0, a1 in -2.0f64..2.0,
        freq in 0.05f64..4.0, start in 0.0f64..2.0,
        period in 0.1f64..2.0, duty in 0.0f64..1.0,
    ) {
        let tau_bar = (a0 * a0 + a1 * a1).sqrt();
        for profile in [
            TorqueProfile { tau_bar, kind: TorqueKind::Step { amplitude: vec![a0, a1], start } },
            TorqueProfile { tau_bar, kind: TorqueKind::Sinusoid { amplitude: vec![a0, a1], frequency_hz: freq, start } },
            TorqueProfile { tau_bar, kind: TorqueKind::PulseTrain { amplitude: vec![a0, a1], period, duty, start } },
        ] {
            profile.validate(2).unwrap();
            for i in 0..400 {
                let t = i as f64 * 0.025;
                prop_assert!(external_torque(&profile, t, 2).norm() <= tau_bar * (1.0 + 1e-12));
            }
        }
    }
}

/// Per-step discrete energy audit on a certified zero-input run:
/// `V(t_{k+1}) <= V(t_k) e^{-kappa h} + 10 h^4`.
#[test]
fn per_step_decay_audit() {
    use teleop_core::certification::{PerSide, TheoremParams};
    use teleop_core::simulator::{run, Scenario, ScenarioMode};

    let sc = Scenario {
        master: ManipulatorParams::reference_two_link(),
        slave: ManipulatorParams::reference_two_link(),
        theorem: TheoremParams {
            mu: PerSide::uniform(2.0),
            omega: PerSide::uniform(1.0),
            kappa_target: 0.5,
            delayed: None,
        },
        mode: ScenarioMode::Nodelay {
            gains: GainSet {
                k0: Diag::uniform(2, 12.0),
                p: Diag::uniform(2, 20.0),
                d: Diag::uniform(2, 8.0),
                sigma: 1.0,
                c: 1.0,
            },
        },
        torque_master: TorqueProfile::zero(),
        torque_slave: TorqueProfile::zero(),
        initial_master: RobotState::new(v2(0.5, 0.0), v2(0.0, 0.0)).unwrap(),
        initial_slave: RobotState::zero(2),
        initial_proxy_master: None,
        initial_proxy_slave: None,
        step: 1e-3,
        duration: 3.0,
        blowup: 1e6,
        bounds: None,
        bounds_safety: 1.1,
    };
    let cert = sc.certify().unwrap();
    assert!(cert.passed);
    let trace = run(&sc, &cert).unwrap();
    let h = sc.step;
    let contraction = (-cert.derived.kappa * h).exp();
    let slack = 10.0 * h.powi(4);
    for pair in trace.steps.windows(2) {
        assert!(
            pair[1].v <= pair[0].v * contraction + slack,
            "t = {}: V {} vs {}",
            pair[1].t,
            pair[1].v,
            pair[0].v * contraction + slack
        );
        assert!(pair[1].v.is_finite() && pair[1].err_norm.is_finite());
    }
}

/// The trivial analysis cases: an equilibrium trace passes the decay check
/// and the zero-radius attractivity surrogate outright.
#[test]
fn equilibrium_trace_passes_all_checks() {
    use teleop_core::analysis::{analyze, check_decay};
    use teleop_core::certification::{PerSide, TheoremParams};
    use teleop_core::simulator::{run, Scenario, ScenarioMode};

    let sc = Scenario {
        master: ManipulatorParams::reference_two_link(),
        slave: ManipulatorParams::reference_two_link(),
        theorem: TheoremParams {
            mu: PerSide::uniform(2.0),
            omega: PerSide::uniform(1.0),
            kappa_target: 0.5,
            delayed: None,
        },
        mode: ScenarioMode::Nodelay {
            gains: GainSet {
                k0: Diag::uniform(2, 12.0),
                p: Diag::uniform(2, 20.0),
                d: Diag::uniform(2, 8.0),
                sigma: 1.0,
                c: 1.0,
            },
        },
        torque_master: TorqueProfile::zero(),
        torque_slave: TorqueProfile::zero(),
        initial_master: RobotState::zero(2),
        initial_slave: RobotState::zero(2),
        initial_proxy_master: None,
        initial_proxy_slave: None,
        step: 1e-3,
        duration: 1.0,
        blowup: 1e6,
        bounds: None,
        bounds_safety: 1.1,
    };
    let cert = sc.certify().unwrap();
    let trace = run(&sc, &cert).unwrap();
    assert_eq!(trace.meta.v0, 0.0);
    let decay = check_decay(&trace, &cert, 0.01).unwrap();
    assert!(decay.pass);
    let report = analyze(&trace, &cert, 0.01).unwrap();
    assert!(report.all_pass(), "{report}");
}

/// Along a simulated trajectory the kinetic energy of each gravity-free
/// robot changes at the rate of the total applied torque power.
#[test]
fn power_balance_along_trajectory() {
    use teleop_core::certification::{PerSide, TheoremParams};
    use teleop_core::simulator::{run, Scenario, ScenarioMode};

    let gains = GainSet {
        k0: Diag::uniform(2, 12.0),
        p: Diag::uniform(2, 20.0),
        d: Diag::uniform(2, 8.0),
        sigma: 1.0,
        c: 1.0,
    };
    let sc = Scenario {
        master: ManipulatorParams::reference_two_link(),
        slave: ManipulatorParams::reference_two_link(),
        theorem: TheoremParams {
            mu: PerSide::uniform(2.0),
            omega: PerSide::uniform(1.0),
            kappa_target: 0.5,
            delayed: None,
        },
        mode: ScenarioMode::Nodelay { gains },
        torque_master: TorqueProfile {
            tau_bar: 1.0,
            kind: TorqueKind::Sinusoid {
                amplitude: vec![0.7, 0.7],
                frequency_hz: 0.5,
                start: 0.0,
            },
        },
        torque_slave: TorqueProfile::zero(),
        initial_master: RobotState::new(v2(0.4, -0.2), v2(0.0, 0.0)).unwrap(),
        initial_slave: RobotState::zero(2),
        initial_proxy_master: None,
        initial_proxy_slave: None,
        step: 1e-3,
        duration: 2.0,
        blowup: 1e6,
        bounds: None,
        bounds_safety: 1.1,
    };
    let cert = sc.certify().unwrap();
    let trace = run(&sc, &cert).unwrap();

    let kinetic = |params: &ManipulatorParams, s: &RobotState| -> f64 {
        let m = mass_matrix(params, &s.q).unwrap();
        0.5 * s.qdot.dot(&(m * &s.qdot))
    };
    let h = sc.step;
    // Integrated audit: the kinetic-energy change equals the injected work
    // up to quadrature/integrator error accumulated over the run.
    let mut work = 0.0;
    let mut max_ke = 0.0f64;
    for k in 0..trace.steps.len() - 1 {
        let cur = &trace.steps[k];
        let next = &trace.steps[k + 1];
        let p0 = cur.master.qdot.dot(&(&cur.tau_master + &cur.tau_h));
        let p1 = next.master.qdot.dot(&(&next.tau_master + &next.tau_h));
        work += 0.5 * (p0 + p1) * h;
        max_ke = max_ke.max(kinetic(&sc.master, &cur.master));
    }
    let ke_change = kinetic(&sc.master, &trace.final_step().master)
        - kinetic(&sc.master, &trace.steps[0].master);
    assert!(
        (ke_change - work).abs() <= 5e-3 * (1.0 + max_ke),
        "energy drift: dKE {ke_change} vs work {work}"
    );

    // Pointwise identity once the initial torque transient has smoothed out
    // (the central difference of the trace is only O(h^2) accurate and the
    // controller kick at t = 0 carries huge higher derivatives).
    for k in 1..trace.steps.len() - 1 {
        let cur = &trace.steps[k];
        if cur.t < 0.2 {
            continue;
        }
        let prev = &trace.steps[k - 1];
        let next = &trace.steps[k + 1];
        let ke_rate =
            (kinetic(&sc.master, &next.master) - kinetic(&sc.master, &prev.master)) / (2.0 * h);
        let power = cur.master.qdot.dot(&(&cur.tau_master + &cur.tau_h));
        assert!(
            (ke_rate - power).abs() <= 1e-3 * (1.0 + power.abs()),
            "t = {}: dKE/dt {} vs power {}",
            cur.t,
            ke_rate,
            power
        );
    }
}
