//! Lyapunov evaluation along trajectories and the trajectory-level checks:
//! exponential decay of the (Krasovskii) functional, membership in the
//! invariant and attractive position-error sets, the definition-level ISS
//! estimate, and a quadrature probe of the delay-integral inequality that
//! underwrites the delayed decay bound.
//!
//! Continuous-time inequalities are checked against discrete traces with a
//! relative slack `eps_num` (default 1e-2), documented per check in the
//! report.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certification::{Certificate, DelayedTheoremParams};
use crate::controllers::{proxy_error, sliding_surface, GainSet, ProxyGainSet};
use crate::delay_channel::SignalHistory;
use crate::diag::Diag;
use crate::dynamics::{mass_matrix, ManipulatorParams, RobotState};
use crate::error::Error;
use crate::simulator::{SimulationTrace, TraceStep};
use crate::Result;

/// Default relative slack for continuous inequalities on discrete traces.
pub const DEFAULT_EPS_NUM: f64 = 1e-2;

/// Position-error threshold standing in for the zero-radius attractive set
/// when the external torques vanish.
pub const ZERO_TAU_ATTRACT_TOL: f64 = 1e-3;

/// Lyapunov value at one instant, split into its instantaneous part and the
/// delay-history integral (zero without delays).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
    pub s_norm_master: f64,
    pub s_norm_slave: f64,
    pub e_norm: f64,
}

/// Lyapunov candidate of the no-delay architecture:
/// `V = 1/2 sum_i s_i' M_i s_i + 1/2 (q_m - q_s)' P (q_m - q_s)`.
pub fn lyapunov_nodelay(
    params_m: &ManipulatorParams,
    params_s: &ManipulatorParams,
    g: &GainSet,
    state_m: &RobotState,
    state_s: &RobotState,
) -> Result<LyapunovSample> {
    let s_m = sliding_surface(&state_m.qdot, &state_m.q, &state_s.q, g.sigma)?;
    let s_s = sliding_surface(&state_s.qdot, &state_s.q, &state_m.q, g.sigma)?;
    let m_m = mass_matrix(params_m, &state_m.q)?;
    let m_s = mass_matrix(params_s, &state_s.q)?;
    let e = &state_m.q - &state_s.q;
    let v = 0.5 * (s_m.dot(&(&m_m * &s_m)) + s_s.dot(&(&m_s * &s_s)) + e.dot(&g.p.mul_vec(&e)));
    Ok(LyapunovSample {
        t: 0.0,
        v,
        v1: v,
        v2: 0.0,
        s_norm_master: s_m.norm(),
        s_norm_slave: s_s.norm(),
        e_norm: e.norm(),
    })
}

/// History integral of the Krasovskii functional for one side, reduced to a
/// single integral:
/// `int_{t-d_bar}^{t} e^{-gamma (t-xi)} (d_bar + xi - t) qhdot(xi)' Q qhdot(xi) dxi`,
/// evaluated by composite trapezoid on the stored sample grid with the
/// exponential weight taken exactly at each node.
pub(crate) fn v2_integral(
    hist: &SignalHistory,
    t: f64,
    d_bar: f64,
    gamma: f64,
    q: &Diag,
) -> Result<f64> {
    if d_bar == 0.0 {
        return Ok(0.0);
    }
    let dof = hist.dim() / 2;
    let lo = t - d_bar;
    let mut nodes: Vec<f64> = vec![lo];
    for ts in hist.sample_times() {
        if ts > lo && ts < t {
            nodes.push(ts);
        }
    }
    nodes.push(t);
    let weight = |xi: f64| (-gamma * (t - xi)).exp() * (d_bar + xi - t);
    let integrand = |xi: f64| -> Result<f64> {
        let stacked = hist.sample_delayed(t, t - xi)?;
        let qd = stacked.rows(dof, dof);
        Ok(weight(xi) * qd.dot(&q.mul_vec(&qd.into_owned())))
    };
    let mut acc = 0.0;
    let mut prev_xi = nodes[0];
    let mut prev_f = integrand(prev_xi)?;
    for &xi in &nodes[1..] {
        let f = integrand(xi)?;
        acc += 0.5 * (f + prev_f) * (xi - prev_xi);
        prev_xi = xi;
        prev_f = f;
    }
    Ok(acc)
}

/// Lyapunov-Krasovskii candidate of the delayed architecture, `V = V1 + V2`.
/// The proxy sliding surfaces use the undelayed remote proxy positions; the
/// histories must cover `[t - d_bar_i, t]`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_delayed(
    params_m: &ManipulatorParams,
    params_s: &ManipulatorParams,
    pg: &ProxyGainSet,
    state_m: &RobotState,
    state_s: &RobotState,
    proxy_m: &RobotState,
    proxy_s: &RobotState,
    hist_m: &SignalHistory,
    hist_s: &SignalHistory,
    t: f64,
    dp: &DelayedTheoremParams,
) -> Result<LyapunovSample> {
    let g = &pg.robot;
    let mut v1 = 0.0;
    let mut s_norms = [0.0; 2];
    for (idx, (params, state, proxy)) in
        [(params_m, state_m, proxy_m), (params_s, state_s, proxy_s)]
            .iter()
            .enumerate()
    {
        let s = sliding_surface(&state.qdot, &state.q, &proxy.q, g.sigma)?;
        let m = mass_matrix(params, &state.q)?;
        let e = &state.q - &proxy.q;
        v1 += 0.5 * (s.dot(&(&m * &s)) + e.dot(&g.p.mul_vec(&e)));
        s_norms[idx] = s.norm();
    }
    for (proxy, state, remote_proxy) in [(proxy_m, state_m, proxy_s), (proxy_s, state_s, proxy_m)] {
        let e_hat = proxy_error(pg, &proxy.q, &state.q, &remote_proxy.q)?;
        let s_hat = &proxy.qdot + &e_hat * pg.sigma_hat;
        v1 += 0.5 * s_hat.dot(&pg.m_hat.mul_vec(&s_hat));
    }
    let e_proxy = &proxy_m.q - &proxy_s.q;
    v1 += 0.5 * e_proxy.dot(&pg.p_hat.mul_vec(&e_proxy));

    let v2 = v2_integral(hist_m, t, dp.d_bar.master, dp.gamma, &dp.q.master)?
        + v2_integral(hist_s, t, dp.d_bar.slave, dp.gamma, &dp.q.slave)?;

    Ok(LyapunovSample {
        t,
        v: v1 + v2,
        v1,
        v2,
        s_norm_master: s_norms[0],
        s_norm_slave: s_norms[1],
        e_norm: (&state_m.q - &state_s.q).norm(),
    })
}

/// Outcome of the exponential decay check against
/// `V(t) <= e^{-kappa t} V(0) + tau_bar^2 / (4 kappa omega) + slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub pass: bool,
    /// Largest `V(t) - bound(t)` over the trace (negative when passing).
    pub max_violation: f64,
    /// Least-squares exponential rate of the transient, when fittable.
    pub fitted_rate: Option<f64>,
    pub floor: f64,
}

/// Check the decay bound pointwise and fit the empirical decay rate over
/// `[0, 3/kappa]` with the steady floor removed.
pub fn check_decay(
    trace: &SimulationTrace,
    cert: &Certificate,
    eps_num: f64,
) -> Result<DecayCheck> {
    let kappa = cert.derived.kappa;
    let omega = cert.derived.omega;
    if !(kappa > 0.0 && omega > 0.0) {
        return Err(Error::input(format!(
            "decay check requires positive kappa and omega (got {kappa}, {omega})"
        )));
    }
    let v0 = trace.meta.v0;
    let tau_bar = trace.meta.tau_bar;
    let floor = tau_bar * tau_bar / (4.0 * kappa * omega);
    let slack = eps_num * (1.0 + v0);
    let mut max_violation = f64::NEG_INFINITY;
    for s in &trace.steps {
        let bound = (-kappa * s.t).exp() * v0 + floor + slack;
        max_violation = max_violation.max(s.v - bound);
    }

    // Transient rate fit: least squares on log(V - steady_floor) over
    // [0, 3/kappa]. The steady floor is the tail median when the input is
    // nonzero, zero otherwise.
    let steady_floor = if tau_bar == 0.0 {
        0.0
    } else {
        let tail_start = trace.steps.len() - (trace.steps.len() / 10).max(1);
        let mut tail: Vec<f64> = trace.steps[tail_start..].iter().map(|s| s.v).collect();
        tail.sort_by(|a, b| a.total_cmp(b));
        tail[tail.len() / 2]
    };
    let cutoff = 1e3 * f64::EPSILON;
    let window = 3.0 / kappa;
    let pts: Vec<(f64, f64)> = trace
        .steps
        .iter()
        .filter(|s| s.t <= window)
        .filter_map(|s| {
            let y = s.v - steady_floor;
            (y > cutoff).then(|| (s.t, y.ln()))
        })
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        (denom > 0.0).then(|| -(n * sxy - sx * sy) / denom)
    } else {
        None
    };

    Ok(DecayCheck {
        pass: max_violation <= 0.0,
        max_violation,
        fitted_rate,
        floor,
    })
}

/// Outcome of the invariant/attractive set checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetCheck {
    pub s_i_radius_sq: f64,
    pub s_a_radius_sq: f64,
    pub max_error_sq: f64,
    pub invariance_pass: bool,
    /// First instant the error enters the (inflated) attractive ball.
    pub first_entry_time: Option<f64>,
    /// First instant from which the error never leaves it again.
    pub settled_time: Option<f64>,
    pub attractivity_pass: bool,
}

/// Check that the squared position error never exceeds the invariant-set
/// radius and that it enters (and stays in) the attractive ball inflated by
/// `eps_num`. A zero attractive radius (zero input bound) degrades to the
/// fixed tolerance [`ZERO_TAU_ATTRACT_TOL`].
pub fn set_membership(trace: &SimulationTrace, cert: &Certificate, eps_num: f64) -> SetCheck {
    let s_i = cert.s_i_radius_sq(trace.meta.v0);
    let s_a = cert.derived.s_a_radius_sq;
    let threshold_sq = if s_a == 0.0 {
        ZERO_TAU_ATTRACT_TOL * ZERO_TAU_ATTRACT_TOL
    } else {
        s_a * (1.0 + eps_num)
    };
    let mut max_error_sq = 0.0f64;
    let mut first_entry = None;
    let mut settled = None;
    for s in &trace.steps {
        let e2 = s.err_norm * s.err_norm;
        max_error_sq = max_error_sq.max(e2);
        if e2 <= threshold_sq {
            if first_entry.is_none() {
                first_entry = Some(s.t);
            }
            if settled.is_none() {
                settled = Some(s.t);
            }
        } else {
            settled = None;
        }
    }
    SetCheck {
        s_i_radius_sq: s_i,
        s_a_radius_sq: s_a,
        max_error_sq,
        invariance_pass: max_error_sq <= s_i,
        first_entry_time: first_entry,
        settled_time: settled,
        attractivity_pass: settled.is_some(),
    }
}

/// Outcome of the definition-level ISS estimate check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IssCheck {
    pub pass: bool,
    /// Largest `||x(t)|| - (1 + eps) bound(t)` over the trace.
    pub max_violation: f64,
}

fn state_norm(step: &TraceStep, delayed: bool) -> f64 {
    let mut acc = step.master.qdot.norm_squared() + step.slave.qdot.norm_squared();
    if delayed {
        let pm = step.proxy_master.as_ref().expect("delayed trace");
        let ps = step.proxy_slave.as_ref().expect("delayed trace");
        acc += pm.qdot.norm_squared() + ps.qdot.norm_squared();
        acc += (&step.master.q - &pm.q).norm_squared();
        acc += (&step.slave.q - &ps.q).norm_squared();
        acc += (&pm.q - &ps.q).norm_squared();
    } else {
        acc += (&step.master.q - &step.slave.q).norm_squared();
    }
    acc.sqrt()
}

/// Verify the trajectory against
/// `||x(t)|| <= sqrt(a2/a1) ||x(0)|| e^{-kappa t / 2}
///             + sup ||u|| / sqrt(4 a1 kappa omega)`,
/// inflated by `eps_num`.
pub fn iss_estimate_check(trace: &SimulationTrace, cert: &Certificate, eps_num: f64) -> IssCheck {
    let d = &cert.derived;
    let delayed = trace.is_delayed();
    let x0 = trace
        .steps
        .first()
        .map(|s| state_norm(s, delayed))
        .unwrap_or(0.0);
    let beta_coeff = (d.a2 / d.a1).sqrt() * x0;
    let gain = 1.0 / (4.0 * d.a1 * d.kappa * d.omega).sqrt();
    let mut sup_u = 0.0f64;
    let mut max_violation = f64::NEG_INFINITY;
    for s in &trace.steps {
        let u = (s.tau_h.norm_squared() + s.tau_e.norm_squared()).sqrt();
        sup_u = sup_u.max(u);
        let bound = beta_coeff * (-0.5 * d.kappa * s.t).exp() + gain * sup_u;
        let x = state_norm(s, delayed);
        max_violation = max_violation.max(x - bound * (1.0 + eps_num));
    }
    IssCheck {
        pass: max_violation <= 0.0,
        max_violation,
    }
}

/// Outcome of the comparison-function sandwich
/// `a1 ||x||^2 <= V <= a2 * (window sup ||x||)^2` along a trace; with
/// `|x_t|_a = sqrt(V)` this is exactly the norm-equivalence band the ISS
/// definitions require.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBoundsCheck {
    pub pass: bool,
    pub lower_max_violation: f64,
    pub upper_max_violation: f64,
}

/// Check the sandwich pointwise; in delayed mode the upper side uses the
/// running supremum of the state norm over `[t - d_bar_max, t]`.
pub fn norm_bounds_check(trace: &SimulationTrace, cert: &Certificate) -> NormBoundsCheck {
    let d = &cert.derived;
    let delayed = trace.is_delayed();
    let window = match &cert.mode {
        crate::certification::CertMode::Delayed {
            d_bar_master,
            d_bar_slave,
        } => d_bar_master.max(*d_bar_slave),
        _ => 0.0,
    };
    let norms: Vec<f64> = trace.steps.iter().map(|s| state_norm(s, delayed)).collect();
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut window_start = 0usize;
    let mut window_sup = 0.0f64;
    for (i, s) in trace.steps.iter().enumerate() {
        lower = lower.max(d.a1 * norms[i] * norms[i] - s.v);
        // Running window supremum; recompute when the left edge moves.
        let lo_t = s.t - window;
        if trace.steps[window_start].t < lo_t {
            while trace.steps[window_start].t < lo_t {
                window_start += 1;
            }
            window_sup = norms[window_start..=i].iter().cloned().fold(0.0, f64::max);
        } else {
            window_sup = window_sup.max(norms[i]);
        }
        upper = upper.max(s.v - d.a2 * window_sup * window_sup);
    }
    NormBoundsCheck {
        // Tiny absolute slack for accumulated rounding in V and the norms.
        pass: lower <= 1e-9 && upper <= 1e-9,
        lower_max_violation: lower,
        upper_max_violation: upper,
    }
}

/// Full per-run analysis record rendered next to the trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub eps_num: f64,
    pub decay: DecayCheck,
    pub sets: SetCheck,
    pub iss: IssCheck,
    pub norm_bounds: NormBoundsCheck,
}

impl SetReport {
    pub fn all_pass(&self) -> bool {
        self.decay.pass
            && self.sets.invariance_pass
            && self.sets.attractivity_pass
            && self.iss.pass
            && self.norm_bounds.pass
    }
}

impl std::fmt::Display for SetReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let flag = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "analysis (eps_num = {}):", self.eps_num)?;
        writeln!(
            f,
            "  decay bound:   {}  max violation {:+.6e}  fitted rate {}",
            flag(self.decay.pass),
            self.decay.max_violation,
            self.decay
                .fitted_rate
                .map_or("n/a".to_string(), |r| format!("{r:.4}")),
        )?;
        writeln!(
            f,
            "  invariant set: {}  max err^2 {:.6e} vs radius^2 {:.6e}",
            flag(self.sets.invariance_pass),
            self.sets.max_error_sq,
            self.sets.s_i_radius_sq
        )?;
        writeln!(
            f,
            "  attractive set:{}  radius^2 {:.6e}  entry {}  settled {}",
            flag(self.sets.attractivity_pass),
            self.sets.s_a_radius_sq,
            self.sets
                .first_entry_time
                .map_or("never".to_string(), |t| format!("{t:.3}s")),
            self.sets
                .settled_time
                .map_or("never".to_string(), |t| format!("{t:.3}s")),
        )?;
        writeln!(
            f,
            "  ISS estimate:  {}  max violation {:+.6e}",
            flag(self.iss.pass),
            self.iss.max_violation
        )?;
        writeln!(
            f,
            "  norm sandwich: {}  lower {:+.3e}  upper {:+.3e}",
            flag(self.norm_bounds.pass),
            self.norm_bounds.lower_max_violation,
            self.norm_bounds.upper_max_violation
        )
    }
}

/// Run every trajectory check at the given slack.
pub fn analyze(trace: &SimulationTrace, cert: &Certificate, eps_num: f64) -> Result<SetReport> {
    Ok(SetReport {
        eps_num,
        decay: check_decay(trace, cert, eps_num)?,
        sets: set_membership(trace, cert, eps_num),
        iss: iss_estimate_check(trace, cert, eps_num),
        norm_bounds: norm_bounds_check(trace, cert),
    })
}

/// Result of one quadrature probe of the delay-integral inequality
/// `+-2 a' int b - int b' Y b <= d_bar a' Y^-1 a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaProbe {
    pub lhs_plus: f64,
    pub lhs_minus: f64,
    pub rhs: f64,
}

impl LemmaProbe {
    pub fn pass(&self) -> bool {
        let tol = 1e-9 * (1.0 + self.rhs.abs());
        self.lhs_plus <= self.rhs + tol && self.lhs_minus <= self.rhs + tol
    }
}

/// Evaluate both signs of the inequality on a shared trapezoid grid over
/// `[t - d, t]` with `0 <= d <= d_bar`.
pub fn lemma_probe(
    upsilon: &DMatrix<f64>,
    a: &DVector<f64>,
    b: impl Fn(f64) -> DVector<f64>,
    t: f64,
    d: f64,
    d_bar: f64,
    points: usize,
) -> Result<LemmaProbe> {
    if !(0.0..=d_bar).contains(&d) {
        return Err(Error::input(format!("delay {d} outside [0, {d_bar}]")));
    }
    if points < 2 {
        return Err(Error::input("quadrature needs at least two points"));
    }
    let chol = upsilon
        .clone()
        .cholesky()
        .ok_or_else(|| Error::input("upsilon must be positive definite"))?;
    let n = a.len();
    let mut int_b = DVector::zeros(n);
    let mut int_quad = 0.0;
    let h = d / (points - 1) as f64;
    for k in 0..points {
        let xi = t - d + k as f64 * h;
        let w = if k == 0 || k == points - 1 {
            0.5 * h
        } else {
            h
        };
        let bv = b(xi);
        if bv.len() != n {
            return Err(Error::dim("b(xi) dimension differs from a"));
        }
        int_quad += w * bv.dot(&(upsilon * &bv));
        int_b += bv * w;
    }
    let rhs = d_bar * a.dot(&chol.solve(a));
    Ok(LemmaProbe {
        lhs_plus: 2.0 * a.dot(&int_b) - int_quad,
        lhs_minus: -2.0 * a.dot(&int_b) - int_quad,
        rhs,
    })
}
