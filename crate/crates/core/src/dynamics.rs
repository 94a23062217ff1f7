//! Euler-Lagrange dynamics of a planar serial manipulator with revolute
//! joints, gravity-compensated.
//!
//! The inertia matrix is assembled from link-frame geometry in closed form
//! and its configuration partials are evaluated analytically, so the Coriolis
//! matrix built from Christoffel symbols makes `dM/dt - 2C` skew-symmetric to
//! rounding. Uniform inertia eigenvalue bounds and the Coriolis bilinear
//! bound are estimated by sampling with a safety margin.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Physical parameters of one planar serial arm. Index `k` describes link
/// `k`: mass, length, distance from joint `k` to the link's center of mass,
/// and rotational inertia about that center of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorParams {
    pub link_masses: Vec<f64>,
    pub link_lengths: Vec<f64>,
    pub com_offsets: Vec<f64>,
    pub link_inertias: Vec<f64>,
}

impl ManipulatorParams {
    pub fn new(
        link_masses: Vec<f64>,
        link_lengths: Vec<f64>,
        com_offsets: Vec<f64>,
        link_inertias: Vec<f64>,
    ) -> Result<Self> {
        let p = ManipulatorParams {
            link_masses,
            link_lengths,
            com_offsets,
            link_inertias,
        };
        p.validate()?;
        Ok(p)
    }

    /// The uniform-rod two-link reference arm used throughout the test rig:
    /// m = 1 kg, l = 1 m, lc = 0.5 m, I = 1/12 kg m^2 per link.
    pub fn reference_two_link() -> Self {
        ManipulatorParams {
            link_masses: vec![1.0, 1.0],
            link_lengths: vec![1.0, 1.0],
            com_offsets: vec![0.5, 0.5],
            link_inertias: vec![1.0 / 12.0, 1.0 / 12.0],
        }
    }

    pub fn dof(&self) -> usize {
        self.link_masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.link_masses.len();
        if n == 0 {
            return Err(Error::input("manipulator must have at least one link"));
        }
        if self.link_lengths.len() != n
            || self.com_offsets.len() != n
            || self.link_inertias.len() != n
        {
            return Err(Error::dim(format!(
                "link parameter vectors must all have length {n}"
            )));
        }
        for k in 0..n {
            let (m, l, lc, i) = (
                self.link_masses[k],
                self.link_lengths[k],
                self.com_offsets[k],
                self.link_inertias[k],
            );
            if !(m > 0.0 && l > 0.0 && lc > 0.0 && i > 0.0) {
                return Err(Error::input(format!(
                    "link {k}: masses, lengths, offsets and inertias must be strictly positive"
                )));
            }
            if lc > l {
                return Err(Error::input(format!(
                    "link {k}: com offset {lc} exceeds link length {l}"
                )));
            }
        }
        Ok(())
    }

    fn check_dim(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::dim(format!(
                "{what} has length {}, expected dof {}",
                v.len(),
                self.dof()
            )));
        }
        Ok(())
    }

    /// Distance from joint `r` to the point on link `k` that enters the COM
    /// position of link `k` (full length for upstream links, COM offset for
    /// the link itself).
    fn segment(&self, k: usize, r: usize) -> f64 {
        if r < k {
            self.link_lengths[r]
        } else {
            self.com_offsets[k]
        }
    }
}

/// Joint position/velocity pair of one robot (or one proxy). Serializes as
/// two plain arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotStateRepr", into = "RobotStateRepr")]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotStateRepr {
    q: Vec<f64>,
    qdot: Vec<f64>,
}

impl TryFrom<RobotStateRepr> for RobotState {
    type Error = Error;

    fn try_from(r: RobotStateRepr) -> Result<Self> {
        RobotState::new(DVector::from_vec(r.q), DVector::from_vec(r.qdot))
    }
}

impl From<RobotState> for RobotStateRepr {
    fn from(s: RobotState) -> Self {
        RobotStateRepr {
            q: s.q.as_slice().to_vec(),
            qdot: s.qdot.as_slice().to_vec(),
        }
    }
}

impl RobotState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::dim(format!(
                "q has length {}, qdot has length {}",
                q.len(),
                qdot.len()
            )));
        }
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("robot state entries must be finite"));
        }
        Ok(RobotState { q, qdot })
    }

    pub fn zero(dof: usize) -> Self {
        RobotState {
            q: DVector::zeros(dof),
            qdot: DVector::zeros(dof),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Certified plant constants: inertia eigenvalue bounds and the Coriolis
/// bilinear bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c: f64,
}

impl BoundConstants {
    pub fn new(lambda1: f64, lambda2: f64, c: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda2 >= lambda1 && lambda2.is_finite() && c > 0.0) {
            return Err(Error::input(format!(
                "bound constants require 0 < lambda1 <= lambda2 < inf and c > 0, \
                 got lambda1={lambda1}, lambda2={lambda2}, c={c}"
            )));
        }
        Ok(BoundConstants {
            lambda1,
            lambda2,
            c,
        })
    }
}

/// Inertia matrix `M(q)` of the planar chain.
///
/// Assembled from the COM Jacobian inner products: entry `(i, j)` sums, over
/// links `k >= max(i, j)`, the translational term
/// `m_k * sum_{r,s} a_{k,r} a_{k,s} cos(theta_r - theta_s)` plus the
/// rotational inertia `I_k`, with `theta` the cumulative joint angles.
pub fn mass_matrix(params: &ManipulatorParams, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    params.validate()?;
    params.check_dim(q, "q")?;
    let n = params.dof();
    let theta = cumulative_angles(q);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut entry = 0.0;
            for k in j..n {
                let mut trans = 0.0;
                for r in i..=k {
                    for s in j..=k {
                        trans += params.segment(k, r)
                            * params.segment(k, s)
                            * (theta[r] - theta[s]).cos();
                    }
                }
                entry += params.link_masses[k] * trans + params.link_inertias[k];
            }
            m[(i, j)] = entry;
            m[(j, i)] = entry;
        }
    }
    Ok(m)
}

/// Partial derivative `dM/dq_t`, evaluated analytically.
fn mass_matrix_partial(params: &ManipulatorParams, theta: &[f64], t: usize) -> DMatrix<f64> {
    let n = params.dof();
    let mut dm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut entry = 0.0;
            for k in j..n {
                let mut trans = 0.0;
                for r in i..=k {
                    for s in j..=k {
                        // d/dq_t cos(theta_r - theta_s) = -sin(theta_r - theta_s) * ([t<=r] - [t<=s])
                        let w = (t <= r) as i32 - (t <= s) as i32;
                        if w != 0 {
                            trans -= params.segment(k, r)
                                * params.segment(k, s)
                                * (theta[r] - theta[s]).sin()
                                * w as f64;
                        }
                    }
                }
                entry += params.link_masses[k] * trans;
            }
            dm[(i, j)] = entry;
            dm[(j, i)] = entry;
        }
    }
    dm
}

/// Coriolis/centrifugal matrix `C(q, qdot)` built from Christoffel symbols
/// of the inertia matrix, so the skew-symmetry of `dM/dt - 2C` is exact.
pub fn coriolis_matrix(
    params: &ManipulatorParams,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    params.check_dim(q, "q")?;
    params.check_dim(qdot, "qdot")?;
    let n = params.dof();
    let theta = cumulative_angles(q);
    let partials: Vec<DMatrix<f64>> = (0..n)
        .map(|t| mass_matrix_partial(params, &theta, t))
        .collect();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut entry = 0.0;
            for k in 0..n {
                let christoffel =
                    0.5 * (partials[k][(i, j)] + partials[j][(i, k)] - partials[i][(j, k)]);
                entry += christoffel * qdot[k];
            }
            c[(i, j)] = entry;
        }
    }
    Ok(c)
}

/// Joint accelerations solving `M(q) qddot + C(q, qdot) qdot = tau_total`.
pub fn forward_dynamics(
    params: &ManipulatorParams,
    state: &RobotState,
    tau_total: &DVector<f64>,
) -> Result<DVector<f64>> {
    params.check_dim(tau_total, "tau_total")?;
    let m = mass_matrix(params, &state.q)?;
    let c = coriolis_matrix(params, &state.q, &state.qdot)?;
    let rhs = tau_total - &c * &state.qdot;
    m.cholesky()
        .map(|chol| chol.solve(&rhs))
        .ok_or_else(|| Error::Numerical("inertia matrix is not positive definite".into()))
}

/// Estimate the inertia eigenvalue bounds and Coriolis bilinear bound by
/// sampling, with a multiplicative safety margin.
///
/// `lambda1` is the smallest inertia eigenvalue over the grid divided by
/// `safety`, `lambda2` the largest multiplied by it. The Coriolis bound takes
/// the largest spectral norm of `C(q, x)` over the grid and the unit velocity
/// directions, which dominates `||C(q, x) y|| / (||x|| ||y||)` for every `y`.
pub fn estimate_bounds(
    params: &ManipulatorParams,
    q_grid: &[DVector<f64>],
    qdot_samples: &[DVector<f64>],
    safety: f64,
) -> Result<BoundConstants> {
    params.validate()?;
    if q_grid.is_empty() {
        return Err(Error::input("bound estimation requires a nonempty q grid"));
    }
    if qdot_samples.is_empty() {
        return Err(Error::input(
            "bound estimation requires at least one velocity sample",
        ));
    }
    if safety < 1.0 {
        return Err(Error::input(format!(
            "safety factor must be >= 1, got {safety}"
        )));
    }

    let mut lam_min = f64::INFINITY;
    let mut lam_max = f64::NEG_INFINITY;
    let mut c_max: f64 = 0.0;
    for q in q_grid {
        let m = mass_matrix(params, q)?;
        let eig = m.symmetric_eigen();
        for &v in eig.eigenvalues.iter() {
            lam_min = lam_min.min(v);
            lam_max = lam_max.max(v);
        }
        for x in qdot_samples {
            params.check_dim(x, "qdot sample")?;
            let norm = x.norm();
            if norm == 0.0 {
                continue;
            }
            let c = coriolis_matrix(params, q, &(x / norm))?;
            let sigma_max = c.singular_values().iter().cloned().fold(0.0f64, f64::max);
            c_max = c_max.max(sigma_max);
        }
    }
    if lam_min <= 0.0 {
        return Err(Error::Numerical(format!(
            "sampled inertia matrix lost positive definiteness (min eig {lam_min})"
        )));
    }
    // A configuration-independent inertia (e.g. a single pendulum) has zero
    // Coriolis terms; clamp so the certified constant stays strictly positive.
    let c = (safety * c_max).max(1e-12);
    BoundConstants::new(lam_min / safety, lam_max * safety, c)
}

/// Deterministic grid over joint space: `points` values per joint spanning
/// [-pi, pi], all combinations.
pub fn standard_grid(dof: usize, points: usize) -> Vec<DVector<f64>> {
    assert!(points >= 1);
    let axis: Vec<f64> = (0..points)
        .map(|i| {
            -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * i as f64 / (points - 1).max(1) as f64
        })
        .collect();
    let mut grid = Vec::with_capacity(axis.len().pow(dof as u32));
    let mut idx = vec![0usize; dof];
    loop {
        grid.push(DVector::from_iterator(dof, idx.iter().map(|&i| axis[i])));
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < axis.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dof {
                return grid;
            }
        }
    }
}

/// Seeded unit velocity directions: the coordinate axes plus `count` random
/// directions on the unit sphere.
pub fn unit_velocity_samples(dof: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut samples = Vec::with_capacity(2 * dof + count);
    for i in 0..dof {
        let mut e = DVector::zeros(dof);
        e[i] = 1.0;
        samples.push(e.clone());
        samples.push(-e);
    }
    for _ in 0..count {
        let v = DVector::from_iterator(dof, (0..dof).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        let n = v.norm();
        if n > 1e-9 {
            samples.push(v / n);
        }
    }
    samples
}

fn cumulative_angles(q: &DVector<f64>) -> Vec<f64> {
    let mut theta = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for &v in q.iter() {
        acc += v;
        theta.push(acc);
    }
    theta
}
