//! Mechanical verification of the closed-loop gain conditions, for both the
//! no-delay and the delayed architecture.
//!
//! Every gain matrix is diagonal, so all but two checks reduce to entrywise
//! scalar inequalities whose margins are exact. The two dense checks are the
//! positivity of the assembled spring matrix (via its Schur complement) and
//! the extraction of its decay constant `delta` as a generalized minimum
//! eigenvalue. A condition passes when its margin is `>= 0`; conservatism
//! lives in the sampled bound constants, not in epsilons here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::controllers::{GainSet, ProxyGainSet, Side};
use crate::diag::Diag;
use crate::dynamics::BoundConstants;
use crate::error::Error;
use crate::Result;

/// A pair of per-side values (master, slave).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerSide<T> {
    pub master: T,
    pub slave: T,
}

impl<T: Clone> PerSide<T> {
    pub fn uniform(value: T) -> Self {
        PerSide {
            master: value.clone(),
            slave: value,
        }
    }

    pub fn get(&self, side: Side) -> &T {
        match side {
            Side::Master => &self.master,
            Side::Slave => &self.slave,
        }
    }
}

/// Free parameters of the stability theorems. The delayed architecture
/// requires the additional block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremParams {
    pub mu: PerSide<f64>,
    pub omega: PerSide<f64>,
    pub kappa_target: f64,
    #[serde(default)]
    pub delayed: Option<DelayedTheoremParams>,
}

/// Extra parameters of the delayed theorem; `nu` is shared between sides by
/// the symmetry conditions, `d_bar` bounds the delay of the signal leaving
/// the named side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayedTheoremParams {
    pub nu: f64,
    pub zeta: PerSide<f64>,
    pub gamma: f64,
    pub psi: f64,
    pub d_bar: PerSide<f64>,
    pub q: PerSide<Diag>,
}

impl TheoremParams {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.mu.master, "mu.master"),
            (self.mu.slave, "mu.slave"),
            (self.omega.master, "omega.master"),
            (self.omega.slave, "omega.slave"),
            (self.kappa_target, "kappa_target"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!(
                    "theorem parameter {name} must be strictly positive, got {v}"
                )));
            }
        }
        if let Some(d) = &self.delayed {
            for (v, name) in [
                (d.nu, "nu"),
                (d.zeta.master, "zeta.master"),
                (d.zeta.slave, "zeta.slave"),
                (d.gamma, "gamma"),
                (d.psi, "psi"),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::input(format!(
                        "theorem parameter {name} must be strictly positive, got {v}"
                    )));
                }
            }
            for (v, name) in [
                (d.d_bar.master, "d_bar.master"),
                (d.d_bar.slave, "d_bar.slave"),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::input(format!(
                        "delay bound {name} must be nonnegative, got {v}"
                    )));
                }
            }
            d.q.master.require_positive("Q.master")?;
            d.q.slave.require_positive("Q.slave")?;
        }
        Ok(())
    }
}

/// One named inequality with its margin in eigenvalue units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub margin: f64,
    pub satisfied: bool,
}

impl ConditionReport {
    fn entrywise(name: impl Into<String>, margin: f64) -> Self {
        ConditionReport {
            name: name.into(),
            margin,
            satisfied: margin >= 0.0,
        }
    }
}

/// Which architecture a certificate covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CertMode {
    NoDelay,
    Delayed { d_bar_master: f64, d_bar_slave: f64 },
}

/// Constants derived from a certified gain set, used by the trajectory
/// checks: decay rate, comparison-function coefficients and set radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub kappa: f64,
    pub omega: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    pub a1: f64,
    pub a2: f64,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_hat_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_hat_max: Option<f64>,
    /// `min(p_m, p_s, p_hat)` for the delayed set radii; equals `p_min`
    /// without delays.
    pub p_prime: f64,
    /// Multiplier `g` in `S_I radius^2 = g * (V0 + tau_bar^2 / (4 kappa omega))`.
    pub s_i_gain: f64,
    pub s_a_radius_sq: f64,
}

/// Outcome of the gain certification: verdict, every checked inequality with
/// its margin, and the derived constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub mode: CertMode,
    pub passed: bool,
    pub conditions: Vec<ConditionReport>,
    pub derived: DerivedConstants,
    pub tau_bar: f64,
}

impl Certificate {
    pub fn violations(&self) -> Vec<&ConditionReport> {
        self.conditions.iter().filter(|c| !c.satisfied).collect()
    }

    /// Invariant-set radius squared, which depends on the initial Lyapunov
    /// value of the particular run.
    pub fn s_i_radius_sq(&self, v0: f64) -> f64 {
        let d = &self.derived;
        d.s_i_gain * (v0 + self.tau_bar.powi(2) / (4.0 * d.kappa * d.omega))
    }
}

impl std::fmt::Display for Certificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match &self.mode {
            CertMode::NoDelay => "no-delay".to_string(),
            CertMode::Delayed {
                d_bar_master,
                d_bar_slave,
            } => format!("delayed (d_bar {d_bar_master}/{d_bar_slave} s)"),
        };
        writeln!(
            f,
            "certificate [{}]: {}",
            mode,
            if self.passed { "PASS" } else { "FAIL" }
        )?;
        for c in &self.conditions {
            writeln!(
                f,
                "  [{}] {:<42} margin {:+.6e}",
                if c.satisfied { "ok " } else { "VIO" },
                c.name,
                c.margin
            )?;
        }
        let d = &self.derived;
        writeln!(
            f,
            "  derived: kappa={:.6} omega={:.6}{} a1={:.6e} a2={:.6e}",
            d.kappa,
            d.omega,
            d.delta.map_or(String::new(), |x| format!(" delta={x:.6}")),
            d.a1,
            d.a2
        )?;
        writeln!(
            f,
            "  sets: p'={:.6} S_A^2={:.6e} S_I^2 = {:.6} * (V0 + tau^2/(4 k w)), tau_bar={}",
            d.p_prime, d.s_a_radius_sq, d.s_i_gain, self.tau_bar
        )
    }
}

fn common_validate(tau_bar: f64) -> Result<()> {
    if !(tau_bar >= 0.0 && tau_bar.is_finite()) {
        return Err(Error::input(format!(
            "tau_bar must be nonnegative and finite, got {tau_bar}"
        )));
    }
    Ok(())
}

/// Certify a shared gain set for the no-delay architecture.
///
/// Checks, entrywise on the diagonals: the interconnection condition
/// `P_bar >= (kappa/2) P`, the damping conditions `D_bar_i >= 0`, the base
/// gain offsets that make the scheduled velocity gain satisfy its condition
/// identically in the velocity, and the coverage of each plant's Coriolis
/// bound by the schedule constant.
pub fn certify_nodelay(
    g: &GainSet,
    bounds_m: &BoundConstants,
    bounds_s: &BoundConstants,
    tp: &TheoremParams,
    tau_bar: f64,
) -> Result<Certificate> {
    g.validate(g.k0.dim())?;
    tp.validate()?;
    common_validate(tau_bar)?;

    let sigma = g.sigma;
    let kappa = tp.kappa_target;
    let mut conditions = Vec::new();

    for (side, bounds) in [(Side::Master, bounds_m), (Side::Slave, bounds_s)] {
        let mu = *tp.mu.get(side);
        conditions.push(ConditionReport::entrywise(
            format!("sigma < mu_{side}"),
            mu - sigma,
        ));
        // D_bar_i = (1 - sigma/mu_i) D - (sigma/2)(lambda_m2 + lambda_s2) I
        let d_bar =
            g.d.scale(1.0 - sigma / mu)
                .shift(0.5 * sigma * (bounds_m.lambda2 + bounds_s.lambda2));
        conditions.push(ConditionReport::entrywise(
            format!("D_bar_{side} >= 0"),
            d_bar.min_entry(),
        ));
        // Scheduled velocity gain, reduced to its offset: the quadratic term
        // cancels exactly when the schedule constant covers the plant bound.
        let omega_i = *tp.omega.get(side);
        let offset = omega_i + sigma * bounds.lambda2 + 0.5 * kappa * bounds.lambda2;
        conditions.push(ConditionReport::entrywise(
            format!("K0_{side} >= (omega + sigma*lambda2 + kappa/2*lambda2) I"),
            g.k0.shift(offset).min_entry(),
        ));
        conditions.push(ConditionReport::entrywise(
            format!("schedule c >= c_{side}"),
            g.c - bounds.c,
        ));
    }

    // P_bar = 2 sigma P - (sigma/4) sum_i (mu_i D + c_i I)
    let p_bar =
        g.p.scale(2.0 * sigma)
            .sub(&g.d.scale(0.25 * sigma * (tp.mu.master + tp.mu.slave)))
            .shift(0.25 * sigma * (bounds_m.c + bounds_s.c));
    conditions.push(ConditionReport::entrywise(
        "P_bar >= (kappa/2) P",
        p_bar.sub(&g.p.scale(0.5 * kappa)).min_entry(),
    ));

    let passed = conditions.iter().all(|c| c.satisfied);
    let omega = tp.omega.master.min(tp.omega.slave);
    let p_min = g.p.min_entry();
    let p_max = g.p.max_entry();
    let a1 = 1.0
        / (4.0 / bounds_m.lambda1 + 4.0 / bounds_s.lambda1 + (8.0 * sigma * sigma + 2.0) / p_min);
    let a2 = bounds_m
        .lambda2
        .max(bounds_s.lambda2)
        .max(0.5 * (p_max + 2.0 * (bounds_m.lambda2 + bounds_s.lambda2) * sigma * sigma));

    let derived = DerivedConstants {
        kappa,
        omega,
        delta: None,
        a1,
        a2,
        p_min,
        p_max,
        p_hat_min: None,
        p_hat_max: None,
        p_prime: p_min,
        s_i_gain: 2.0 / p_min,
        s_a_radius_sq: tau_bar * tau_bar / (2.0 * p_min * kappa * omega),
    };

    Ok(Certificate {
        mode: CertMode::NoDelay,
        passed,
        conditions,
        derived,
        tau_bar,
    })
}

/// `P_bar_i = sigma P - (sigma/4)(c_i I + mu_i D)`, the robot-proxy spring
/// retained after the damping cross terms are absorbed.
fn robot_proxy_spring(g: &GainSet, bounds: &BoundConstants, mu: f64) -> Diag {
    g.p.scale(g.sigma)
        .sub(&g.d.scale(0.25 * g.sigma * mu))
        .shift(0.25 * g.sigma * bounds.c)
}

/// Diagonal blocks of the spring matrix coupling the robot-proxy and
/// proxy-proxy errors, plus the weight it is measured against. Under the
/// shared stiffness and proxy damping, `B13 = B23` and
/// `B33 = 2 P_hat (I - (nu/4) D_hat) P_hat`.
struct SpringBlocks {
    b11: Diag,
    b22: Diag,
    b13: Diag,
    b33: Diag,
    weight: Diag,
}

fn spring_blocks(
    pg: &ProxyGainSet,
    bounds_m: &BoundConstants,
    bounds_s: &BoundConstants,
    mu: &PerSide<f64>,
    nu: f64,
) -> SpringBlocks {
    let g = &pg.robot;
    let s_damp = pg.d_hat.scale(-0.25 * nu).add_scalar(1.0);
    let psp = |a: &Diag, b: &Diag| a.mul(&s_damp).mul(b);
    SpringBlocks {
        b11: psp(&g.p, &g.p).add(&robot_proxy_spring(g, bounds_m, mu.master)),
        b22: psp(&g.p, &g.p).add(&robot_proxy_spring(g, bounds_s, mu.slave)),
        b13: psp(&g.p, &pg.p_hat),
        b33: psp(&pg.p_hat, &pg.p_hat).scale(2.0),
        weight: g.p.entrywise_max(&pg.p_hat),
    }
}

/// Dense `I_3 (x) diag` realization.
fn kron3(d: &Diag) -> DMatrix<f64> {
    let n = d.dim();
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    for blk in 0..3 {
        for i in 0..n {
            m[(blk * n + i, blk * n + i)] = d.0[i];
        }
    }
    m
}

/// Certify a shared proxy gain set for the delayed architecture.
///
/// In addition to the entrywise conditions this assembles the spring matrix
/// coupling the robot-proxy and proxy-proxy errors, verifies its positivity
/// through the Schur complement, and extracts the largest `delta` with
/// `P_tilde >= (delta/2) max(P, P_hat)` as a generalized eigenvalue. The
/// certified decay rate is `kappa = min(psi, delta, gamma)`.
pub fn certify_delayed(
    pg: &ProxyGainSet,
    bounds_m: &BoundConstants,
    bounds_s: &BoundConstants,
    tp: &TheoremParams,
    tau_bar: f64,
) -> Result<Certificate> {
    let dof = pg.robot.k0.dim();
    pg.validate(dof)?;
    tp.validate()?;
    common_validate(tau_bar)?;
    let dp = tp.delayed.as_ref().ok_or_else(|| {
        Error::input("delayed certification requires the delayed theorem parameter block")
    })?;

    let g = &pg.robot;
    let sigma = g.sigma;
    let sigma_hat = pg.sigma_hat;
    let psi = dp.psi;
    let mut conditions = Vec::new();

    conditions.push(ConditionReport::entrywise(
        "sigma_hat < nu",
        dp.nu - sigma_hat,
    ));

    // I - (nu/4) D_hat > 0, shared between sides.
    let s_damp = pg.d_hat.scale(-0.25 * dp.nu).add_scalar(1.0);
    conditions.push(ConditionReport::entrywise(
        "I - (nu/4) D_hat > 0",
        s_damp.min_entry(),
    ));

    for (side, bounds) in [(Side::Master, bounds_m), (Side::Slave, bounds_s)] {
        let mu = *tp.mu.get(side);
        let zeta = *dp.zeta.get(side);
        let d_bar_own = *dp.d_bar.get(side);
        let d_bar_remote = *dp.d_bar.get(side.other());
        let q_remote = dp.q.get(side.other());

        conditions.push(ConditionReport::entrywise(
            format!("sigma < mu_{side}"),
            mu - sigma,
        ));

        let pb = robot_proxy_spring(g, bounds, mu);
        conditions.push(ConditionReport::entrywise(
            format!("P_bar_{side} > 0"),
            pb.min_entry(),
        ));

        // D_bar_i = (1 - sigma/mu) D - (sigma lambda2 + sigma_hat/zeta)/2 I
        let db =
            g.d.scale(1.0 - sigma / mu)
                .shift(0.5 * (sigma * bounds.lambda2 + sigma_hat / zeta));
        conditions.push(ConditionReport::entrywise(
            format!("D_bar_{side} >= 0"),
            db.min_entry(),
        ));

        // D_tilde_i = (1 - sigma_hat/nu) D_hat - d_bar_i Q_i
        //             - (sigma lambda2 / 2 + 3 sigma_hat / (2 zeta)) I
        let dt = pg
            .d_hat
            .scale(1.0 - sigma_hat / dp.nu)
            .sub(&dp.q.get(side).scale(d_bar_own))
            .shift(0.5 * sigma * bounds.lambda2 + 1.5 * sigma_hat / zeta);
        conditions.push(ConditionReport::entrywise(
            format!("D_tilde_{side} >= 0"),
            dt.min_entry(),
        ));

        // K_tilde_i = K_hat - sigma_hat zeta (P_hat^2 + P^2)
        //             - d_bar_j / (4 e^{gamma d_bar_j})
        //               * (sigma_hat K_hat + I) P_hat Q_j^-1 P_hat (sigma_hat K_hat + I)
        let skp1 = pg.k_hat.scale(sigma_hat).add_scalar(1.0);
        let penalty_coeff = d_bar_remote / (4.0 * (dp.gamma * d_bar_remote).exp());
        let penalty = skp1
            .mul(&pg.p_hat)
            .mul(&q_remote.inverse())
            .mul(&pg.p_hat)
            .mul(&skp1)
            .scale(penalty_coeff);
        let kt = pg
            .k_hat
            .sub(
                &pg.p_hat
                    .mul(&pg.p_hat)
                    .add(&g.p.mul(&g.p))
                    .scale(sigma_hat * zeta),
            )
            .sub(&penalty);
        conditions.push(ConditionReport::entrywise(
            format!("K_tilde_{side} >= (psi/2) I"),
            kt.shift(0.5 * psi).min_entry(),
        ));

        // Scheduled velocity gain offset, with psi in place of kappa.
        let omega_i = *tp.omega.get(side);
        let offset = omega_i + sigma * bounds.lambda2 + 0.5 * psi * bounds.lambda2;
        conditions.push(ConditionReport::entrywise(
            format!("K0_{side} >= (omega + sigma*lambda2 + psi/2*lambda2) I"),
            g.k0.shift(offset).min_entry(),
        ));
        conditions.push(ConditionReport::entrywise(
            format!("schedule c >= c_{side}"),
            g.c - bounds.c,
        ));
    }

    let blocks = spring_blocks(pg, bounds_m, bounds_s, &tp.mu, dp.nu);
    let schur = schur_positive(
        &blocks.b11.to_dense(),
        &blocks.b22.to_dense(),
        &blocks.b33.to_dense(),
        &blocks.b13.to_dense(),
        &blocks.b13.to_dense(),
    )?;
    conditions.push(ConditionReport {
        name: "P_tilde > 0 (Schur)".into(),
        margin: schur.margin,
        satisfied: schur.passed,
    });

    // delta = 2 lambda_min(W^{-1/2} P_tilde W^{-1/2}), W = I_3 (x) max(P, P_hat),
    // nudged down by one part in 1e12 so the eigenvalue re-check below stays
    // on the feasible side of rounding.
    let p_tilde = assemble_p_tilde(&blocks.b11, &blocks.b22, &blocks.b33, &blocks.b13, &blocks.b13);
    let w_inv_sqrt = kron3(&Diag(blocks.weight.0.map(|v| 1.0 / v.sqrt())));
    let scaled = &w_inv_sqrt * &p_tilde * &w_inv_sqrt;
    let delta = 2.0 * sym_eig_min(&scaled) * (1.0 - 1e-12);

    // Re-check the extracted delta as a matrix inequality.
    let residual = &p_tilde - kron3(&blocks.weight) * (0.5 * delta);
    conditions.push(ConditionReport::entrywise(
        "P_tilde >= (delta/2) max(P, P_hat)",
        sym_eig_min(&residual),
    ));
    conditions.push(ConditionReport::entrywise("delta > 0", delta));

    let passed = conditions.iter().all(|c| c.satisfied);
    let kappa = psi.min(delta).min(dp.gamma);
    let omega = tp.omega.master.min(tp.omega.slave);

    let p_min = g.p.min_entry();
    let p_max = g.p.max_entry();
    let p_hat_min = pg.p_hat.min_entry();
    let p_hat_max = pg.p_hat.max_entry();
    let lam_hat_1 = pg.m_hat.min_entry();
    let lam_hat_2 = pg.m_hat.max_entry();

    let a1 = 1.0
        / (4.0 / bounds_m.lambda1
            + 4.0 / bounds_s.lambda1
            + 8.0 / lam_hat_1
            + (4.0 * sigma * sigma + 8.0 * sigma_hat * sigma_hat * p_max * p_max) / p_min
            + 16.0 * sigma_hat * sigma_hat * p_hat_max * p_hat_max / p_hat_min);
    let mut a2 = f64::NEG_INFINITY;
    for (side, bounds) in [(Side::Master, bounds_m), (Side::Slave, bounds_s)] {
        let q_bar = dp.q.get(side).max_entry();
        let d_bar_own = *dp.d_bar.get(side);
        let candidates = [
            bounds.lambda2,
            lam_hat_2 + 0.5 * d_bar_own * d_bar_own * q_bar,
            2.0 * lam_hat_2 * sigma_hat * sigma_hat * p_hat_max * p_hat_max + 0.5 * p_hat_max,
            bounds.lambda2 * sigma * sigma
                + 2.0 * lam_hat_2 * sigma_hat * sigma_hat * p_max * p_max
                + 0.5 * p_max,
        ];
        for c in candidates {
            a2 = a2.max(c);
        }
    }

    let p_prime = p_min.min(p_hat_min);
    let derived = DerivedConstants {
        kappa,
        omega,
        delta: Some(delta),
        a1,
        a2,
        p_min,
        p_max,
        p_hat_min: Some(p_hat_min),
        p_hat_max: Some(p_hat_max),
        p_prime,
        s_i_gain: 4.0 / p_prime,
        s_a_radius_sq: tau_bar * tau_bar / (p_prime * kappa * omega),
    };

    Ok(Certificate {
        mode: CertMode::Delayed {
            d_bar_master: dp.d_bar.master,
            d_bar_slave: dp.d_bar.slave,
        },
        passed,
        conditions,
        derived,
        tau_bar,
    })
}

/// Dense realizations of the assembled spring matrix and of the weight
/// `I_3 (x) max(P, P_hat)` it is measured against; the extracted `delta` is
/// the largest value with `P_tilde >= (delta/2) W`.
pub fn p_tilde_and_weight(
    pg: &ProxyGainSet,
    bounds_m: &BoundConstants,
    bounds_s: &BoundConstants,
    tp: &TheoremParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dof = pg.robot.k0.dim();
    pg.validate(dof)?;
    tp.validate()?;
    let dp = tp
        .delayed
        .as_ref()
        .ok_or_else(|| Error::input("spring matrix requires delayed theorem parameters"))?;
    let blocks = spring_blocks(pg, bounds_m, bounds_s, &tp.mu, dp.nu);
    let p_tilde = assemble_p_tilde(&blocks.b11, &blocks.b22, &blocks.b33, &blocks.b13, &blocks.b13);
    Ok((p_tilde, kron3(&blocks.weight)))
}

/// Outcome of a Schur positivity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurOutcome {
    pub passed: bool,
    /// Smallest eigenvalue encountered (of the pivot block or of the Schur
    /// complement).
    pub margin: f64,
}

/// Positive definiteness of the 3x3-block matrix
/// `[[B11, 0, B13], [0, B22, B23], [B13', B23', B33]]` via the Schur
/// complement with pivot `B33`: pass iff `B33 > 0` and
/// `diag(B11, B22) - [B13; B23] B33^-1 [B13' B23'] > 0`.
pub fn schur_positive(
    b11: &DMatrix<f64>,
    b22: &DMatrix<f64>,
    b33: &DMatrix<f64>,
    b13: &DMatrix<f64>,
    b23: &DMatrix<f64>,
) -> Result<SchurOutcome> {
    let n = b11.nrows();
    for (b, name) in [
        (b11, "B11"),
        (b22, "B22"),
        (b33, "B33"),
        (b13, "B13"),
        (b23, "B23"),
    ] {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::dim(format!("{name} must be square of size {n}")));
        }
    }
    let pivot_min = sym_eig_min(b33);
    if pivot_min <= 0.0 {
        // Singular or indefinite pivot: cannot be positive definite.
        return Ok(SchurOutcome {
            passed: false,
            margin: pivot_min.min(0.0),
        });
    }
    let chol = b33
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("B33 Cholesky failed despite positive spectrum".into()))?;
    let x13 = chol.solve(&b13.transpose());
    let x23 = chol.solve(&b23.transpose());
    let mut complement = DMatrix::zeros(2 * n, 2 * n);
    complement
        .view_mut((0, 0), (n, n))
        .copy_from(&(b11 - b13 * &x13));
    complement
        .view_mut((0, n), (n, n))
        .copy_from(&(-(b13 * &x23)));
    complement
        .view_mut((n, 0), (n, n))
        .copy_from(&(-(b23 * &x13)));
    complement
        .view_mut((n, n), (n, n))
        .copy_from(&(b22 - b23 * &x23));
    let comp_min = sym_eig_min(&complement);
    let margin = pivot_min.min(comp_min);
    Ok(SchurOutcome {
        passed: pivot_min > 0.0 && comp_min > 0.0,
        margin,
    })
}

fn assemble_p_tilde(b11: &Diag, b22: &Diag, b33: &Diag, b13: &Diag, b23: &Diag) -> DMatrix<f64> {
    let n = b11.dim();
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        m[(i, i)] = b11.0[i];
        m[(n + i, n + i)] = b22.0[i];
        m[(2 * n + i, 2 * n + i)] = b33.0[i];
        m[(i, 2 * n + i)] = b13.0[i];
        m[(2 * n + i, i)] = b13.0[i];
        m[(n + i, 2 * n + i)] = b23.0[i];
        m[(2 * n + i, n + i)] = b23.0[i];
    }
    m
}

/// Smallest eigenvalue of a (numerically) symmetric matrix.
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
