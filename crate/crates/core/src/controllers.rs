//! Both control laws: the instantaneous dynamic interconnection and damping
//! injection controller, and the delayed architecture where each robot is
//! statically coupled to a local second-order proxy and the proxies exchange
//! delayed positions.
//!
//! The velocity-dependent gain follows the schedule
//! `K(qdot) = K0 + sigma * c * ||qdot||^2 * I`, the minimal schedule that
//! cancels the velocity-quadratic term of the state-dependent mismatch bound
//! identically in `qdot`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diag::Diag;
use crate::dynamics::{
    coriolis_matrix, mass_matrix, BoundConstants, ManipulatorParams, RobotState,
};
use crate::error::Error;
use crate::Result;

/// Which robot of the teleoperator a side-indexed quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Master,
    Slave,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Master => Side::Slave,
            Side::Slave => Side::Master,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Master => write!(f, "master"),
            Side::Slave => write!(f, "slave"),
        }
    }
}

/// Gains of the robot-side control law: base velocity gain `K0`,
/// interconnection stiffness `P`, damping `D`, sliding slope `sigma` and the
/// Coriolis bound `c` used in the gain schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub k0: Diag,
    pub p: Diag,
    pub d: Diag,
    pub sigma: f64,
    pub c: f64,
}

impl GainSet {
    pub fn validate(&self, dof: usize) -> Result<()> {
        self.k0.require_positive("K0")?;
        self.p.require_positive("P")?;
        self.d.require_positive("D")?;
        if self.k0.dim() != dof || self.p.dim() != dof || self.d.dim() != dof {
            return Err(Error::dim(format!(
                "gain diagonals must have dimension {dof}"
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::input("sigma must be positive"));
        }
        if !(self.c > 0.0) {
            return Err(Error::input("schedule Coriolis bound c must be positive"));
        }
        Ok(())
    }
}

/// Gains of the proxy architecture. One set is shared by master and slave,
/// which enforces structurally that the robot-proxy stiffness, the proxy
/// damping and the proxy inertia are identical on both sides. The embedded
/// [`GainSet`] drives the robot-side law, its `p` acting as the robot-proxy
/// stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyGainSet {
    pub robot: GainSet,
    pub m_hat: Diag,
    pub k_hat: Diag,
    pub d_hat: Diag,
    pub p_hat: Diag,
    pub sigma_hat: f64,
}

impl ProxyGainSet {
    /// Robot-proxy stiffness (shared by both sides).
    pub fn p_robot(&self) -> &Diag {
        &self.robot.p
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        self.robot.validate(dof)?;
        self.m_hat.require_positive("M_hat")?;
        self.k_hat.require_positive("K_hat")?;
        self.d_hat.require_positive("D_hat")?;
        self.p_hat.require_positive("P_hat")?;
        for (d, name) in [
            (&self.m_hat, "M_hat"),
            (&self.k_hat, "K_hat"),
            (&self.d_hat, "D_hat"),
            (&self.p_hat, "P_hat"),
        ] {
            if d.dim() != dof {
                return Err(Error::dim(format!("{name} must have dimension {dof}")));
            }
        }
        if !(self.sigma_hat > 0.0) {
            return Err(Error::input("sigma_hat must be positive"));
        }
        Ok(())
    }
}

fn check_same_dim(a: &DVector<f64>, b: &DVector<f64>, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "{what}: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Velocity-scheduled gain `K(qdot) = K0 + sigma * c * ||qdot||^2 * I`.
pub fn dynamic_gain(g: &GainSet, qdot: &DVector<f64>) -> Result<Diag> {
    if g.k0.dim() != qdot.len() {
        return Err(Error::dim(format!(
            "qdot has length {}, gains have dimension {}",
            qdot.len(),
            g.k0.dim()
        )));
    }
    Ok(g.k0.add_scalar(g.sigma * g.c * qdot.norm_squared()))
}

/// Sliding surface `s = qdot + sigma * (q - q_ref)`.
pub fn sliding_surface(
    qdot: &DVector<f64>,
    q: &DVector<f64>,
    q_ref: &DVector<f64>,
    sigma: f64,
) -> Result<DVector<f64>> {
    check_same_dim(qdot, q, "sliding surface")?;
    check_same_dim(q, q_ref, "sliding surface")?;
    Ok(qdot + (q - q_ref) * sigma)
}

/// Control torque of the no-delay law:
/// `tau = -K(qdot) s - P (q - q_j) - D qdot`.
pub fn control_nodelay(
    g: &GainSet,
    state: &RobotState,
    q_remote: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = sliding_surface(&state.qdot, &state.q, q_remote, g.sigma)?;
    let k = dynamic_gain(g, &state.qdot)?;
    let e = &state.q - q_remote;
    Ok(-k.mul_vec(&s) - g.p.mul_vec(&e) - g.d.mul_vec(&state.qdot))
}

/// Control torque of the delayed law; identical in form to the no-delay law
/// with the local proxy position in place of the remote robot position.
pub fn control_delayed(
    g: &GainSet,
    state: &RobotState,
    qhat_local: &DVector<f64>,
) -> Result<DVector<f64>> {
    control_nodelay(g, state, qhat_local)
}

/// State-dependent mismatch of side `i` in the no-delay architecture:
/// `Delta_i = M_i(q_i)(qdot_i - qdot_j) + C_i(q_i, qdot_i)(q_i - q_j)`.
/// Diagnostic only; the controllers never evaluate it.
pub fn mismatch_nodelay(
    params_i: &ManipulatorParams,
    state_m: &RobotState,
    state_s: &RobotState,
    side: Side,
) -> Result<DVector<f64>> {
    check_same_dim(&state_m.q, &state_s.q, "mismatch")?;
    let (own, other) = match side {
        Side::Master => (state_m, state_s),
        Side::Slave => (state_s, state_m),
    };
    let m = mass_matrix(params_i, &own.q)?;
    let c = coriolis_matrix(params_i, &own.q, &own.qdot)?;
    Ok(m * (&own.qdot - &other.qdot) + c * (&own.q - &other.q))
}

/// State-dependent mismatch of side `i` in the delayed architecture:
/// `Delta_i = M_i(q_i)(qdot_i - qhatdot_i) + C_i(q_i, qdot_i)(q_i - qhat_i)`.
pub fn mismatch_delayed(
    params_i: &ManipulatorParams,
    state_i: &RobotState,
    proxy_i: &RobotState,
) -> Result<DVector<f64>> {
    check_same_dim(&state_i.q, &proxy_i.q, "mismatch")?;
    let m = mass_matrix(params_i, &state_i.q)?;
    let c = coriolis_matrix(params_i, &state_i.q, &state_i.qdot)?;
    Ok(m * (&state_i.qdot - &proxy_i.qdot) + c * (&state_i.q - &proxy_i.q))
}

/// Left- and right-hand side of the mismatch product bound for the no-delay
/// architecture:
/// `s_i' Delta_i <= lambda_i2 (s_i's_i + ||qdot_m||^2/2 + ||qdot_s||^2/2)
///                + c_i (||qdot_i||^2 s_i's_i + ||q_m - q_s||^2/4)`.
pub fn mismatch_bound_nodelay(
    params_i: &ManipulatorParams,
    bounds_i: &BoundConstants,
    sigma: f64,
    state_m: &RobotState,
    state_s: &RobotState,
    side: Side,
) -> Result<(f64, f64)> {
    let (own, other) = match side {
        Side::Master => (state_m, state_s),
        Side::Slave => (state_s, state_m),
    };
    let s = sliding_surface(&own.qdot, &own.q, &other.q, sigma)?;
    let delta = mismatch_nodelay(params_i, state_m, state_s, side)?;
    let lhs = s.dot(&delta);
    let e2 = (&state_m.q - &state_s.q).norm_squared();
    let rhs = bounds_i.lambda2
        * (s.norm_squared()
            + 0.5 * state_m.qdot.norm_squared()
            + 0.5 * state_s.qdot.norm_squared())
        + bounds_i.c * (own.qdot.norm_squared() * s.norm_squared() + 0.25 * e2);
    Ok((lhs, rhs))
}

/// Left- and right-hand side of the mismatch product bound for the delayed
/// architecture, with the local proxy in place of the remote robot.
pub fn mismatch_bound_delayed(
    params_i: &ManipulatorParams,
    bounds_i: &BoundConstants,
    sigma: f64,
    state_i: &RobotState,
    proxy_i: &RobotState,
) -> Result<(f64, f64)> {
    let s = sliding_surface(&state_i.qdot, &state_i.q, &proxy_i.q, sigma)?;
    let delta = mismatch_delayed(params_i, state_i, proxy_i)?;
    let lhs = s.dot(&delta);
    let e2 = (&state_i.q - &proxy_i.q).norm_squared();
    let rhs = bounds_i.lambda2
        * (s.norm_squared()
            + 0.5 * state_i.qdot.norm_squared()
            + 0.5 * proxy_i.qdot.norm_squared())
        + bounds_i.c * (state_i.qdot.norm_squared() * s.norm_squared() + 0.25 * e2);
    Ok((lhs, rhs))
}

/// Proxy coupling error `e_hat_i = P (qhat_i - q_i) + P_hat (qhat_i - qhat_j)`.
///
/// `qhat_remote` may be the delayed or the current remote proxy position,
/// depending on whether the caller evaluates the proxy dynamics or the
/// Lyapunov candidate.
pub fn proxy_error(
    pg: &ProxyGainSet,
    qhat_i: &DVector<f64>,
    q_i: &DVector<f64>,
    qhat_remote: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_same_dim(qhat_i, q_i, "proxy error")?;
    check_same_dim(qhat_i, qhat_remote, "proxy error")?;
    Ok(pg.p_robot().mul_vec(&(qhat_i - q_i)) + pg.p_hat.mul_vec(&(qhat_i - qhat_remote)))
}

/// Proxy acceleration:
/// `qhatddot = M_hat^-1 { -K_hat [qhatdot + sigma_hat e_hat_d]
///                        - D_hat qhatdot - e_hat_d }`
/// with `e_hat_d` the coupling error evaluated at the delayed remote proxy
/// position.
pub fn proxy_accel(
    pg: &ProxyGainSet,
    proxy: &RobotState,
    q_local: &DVector<f64>,
    qhat_remote_delayed: &DVector<f64>,
) -> Result<DVector<f64>> {
    let e_d = proxy_error(pg, &proxy.q, q_local, qhat_remote_delayed)?;
    let s_d = &proxy.qdot + &e_d * pg.sigma_hat;
    let force = -pg.k_hat.mul_vec(&s_d) - pg.d_hat.mul_vec(&proxy.qdot) - e_d;
    Ok(pg.m_hat.inverse().mul_vec(&force))
}
