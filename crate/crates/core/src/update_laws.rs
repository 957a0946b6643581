//! Concurrent-learning critic law, least-squares gain dynamics, actor law and the
//! extrapolation rank monitor.

use serde::{Deserialize, Serialize};

use crate::bellman::{regressor_at, ExtrapolationGrid, PointEval, RegressorSample};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, spectral_norm, symmetrize, Matrix, Vector};

/// Default absolute threshold on the minimum eigenvalue of the extrapolation matrix.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CriticConfig {
    pub eta_c1: f64,
    pub eta_c2: f64,
    /// Forgetting factor.
    pub beta: f64,
    /// Normalization gain in `rho`.
    pub nu: f64,
    /// Saturation bound on `|Gamma|`.
    pub gamma_bar: f64,
    pub gamma_init: Matrix,
}

impl CriticConfig {
    pub fn validate(&self, player: usize, feature_count: usize) -> Result<()> {
        for (name, value) in [
            ("eta_c1", self.eta_c1),
            ("eta_c2", self.eta_c2),
            ("beta", self.beta),
            ("nu", self.nu),
            ("gamma_bar", self.gamma_bar),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(
                    format!("gains.critic[{player}].{name}"),
                    format!("must be positive and finite, got {value}"),
                ));
            }
        }
        let g = &self.gamma_init;
        if g.nrows() != feature_count || g.ncols() != feature_count {
            return Err(Error::DimensionMismatch {
                what: "gamma_init",
                player: Some(player),
                expected: feature_count * feature_count,
                found: g.nrows() * g.ncols(),
            });
        }
        let lam = min_eigenvalue(g);
        if !(lam > 0.0) {
            return Err(Error::NotPositiveDefinite {
                what: format!("gamma_init of player {player}"),
                min_eigenvalue: lam,
            });
        }
        let norm = spectral_norm(g);
        if norm > self.gamma_bar {
            return Err(Error::invalid(
                format!("gains.critic[{player}].gamma_init"),
                format!("spectral norm {norm} exceeds gamma_bar {}", self.gamma_bar),
            ));
        }
        Ok(())
    }
}

/// Actor gains. Zero gains are accepted so that gain conditions can be evaluated on them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub eta_a1: f64,
    pub eta_a2: f64,
}

impl ActorConfig {
    pub fn validate(&self, player: usize) -> Result<()> {
        for (name, value) in [("eta_a1", self.eta_a1), ("eta_a2", self.eta_a2)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::invalid(
                    format!("gains.actor[{player}].{name}"),
                    format!("must be non-negative and finite, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

/// Critic weights, actor weights and gain matrices of every player.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub critic: Vec<Vector>,
    pub actor: Vec<Vector>,
    pub gamma: Vec<Matrix>,
}

impl LearnerState {
    pub fn num_players(&self) -> usize {
        self.critic.len()
    }
}

/// `-eta_c1 Gamma (omega/rho) delta - (eta_c2 Gamma / M) sum_k (omega_k/rho_k) delta_k`.
pub fn critic_derivative(
    i: usize,
    sample: &RegressorSample,
    delta: f64,
    extrap: &[(RegressorSample, f64)],
    state: &LearnerState,
    cfg: &CriticConfig,
) -> Vector {
    critic_flow(&state.gamma[i], sample, delta, extrap, cfg)
}

pub(crate) fn critic_flow(
    gamma: &Matrix,
    sample: &RegressorSample,
    delta: f64,
    extrap: &[(RegressorSample, f64)],
    cfg: &CriticConfig,
) -> Vector {
    let mut direction = &sample.normalized * (cfg.eta_c1 * delta);
    if !extrap.is_empty() {
        let scale = cfg.eta_c2 / extrap.len() as f64;
        for (s, d) in extrap {
            direction += &s.normalized * (scale * d);
        }
    }
    -(gamma * direction)
}

/// `beta Gamma - eta_c1 Gamma (omega omega^T / rho^2) Gamma` while `|Gamma| <= Gamma_bar`,
/// zero otherwise.
pub fn gamma_derivative(i: usize, sample: &RegressorSample, state: &LearnerState, cfg: &CriticConfig) -> Matrix {
    let gamma = &state.gamma[i];
    let active = spectral_norm(gamma) <= cfg.gamma_bar;
    gamma_flow(gamma, sample, cfg, active)
}

/// Gain flow with the saturation indicator supplied by the caller.
pub(crate) fn gamma_flow(gamma: &Matrix, sample: &RegressorSample, cfg: &CriticConfig, active: bool) -> Matrix {
    if !active {
        return Matrix::zeros(gamma.nrows(), gamma.ncols());
    }
    let gw = gamma * &sample.normalized;
    let out = gamma * cfg.beta - (&gw * gw.transpose()) * cfg.eta_c1;
    symmetrize(&out)
}

/// Everything the actor law of one player needs about the current step.
pub struct ActorInputs<'a> {
    /// Point evaluation at the current trajectory state.
    pub trajectory: &'a PointEval,
    /// Trajectory regressor of every player.
    pub samples: &'a [RegressorSample],
    pub grid: &'a ExtrapolationGrid,
    /// Grid regressors and Bellman errors of every player.
    pub extrap: &'a [Vec<(RegressorSample, f64)>],
    pub critic: &'a [CriticConfig],
    pub actor: &'a [ActorConfig],
}

/// Actor update of player `i`:
///
/// `-eta_a1 (W_ai - W_ci) - eta_a2 W_ai
///  + 1/4 sum_j eta_c1j (s_i' G_ji s_i'^T W_ai) (W_cj^T omega_j / rho_j)
///  + 1/4 sum_j sum_k (eta_c2j / M_j) (s_i'^{jk} G_ji^{jk} s_i'^{jk T} W_ai) (W_cj^T omega_j^k / rho_j^k)`.
///
/// The cross terms are the ones that cancel the critic-error coupling in the
/// Lyapunov analysis; see the crate README for the index convention.
pub fn actor_derivative(i: usize, inputs: &ActorInputs<'_>, state: &LearnerState) -> Vector {
    let wa = &state.actor[i];
    let wc = &state.critic[i];
    let gains = inputs.actor[i];
    let mut out = -(wa - wc) * gains.eta_a1 - wa * gains.eta_a2;

    let cross = |pt: &PointEval, j: usize| -> Vector {
        let sp = &pt.sigma_prime[i];
        sp * (&pt.couplings.g_pair[j][i] * (sp.transpose() * wa))
    };
    for (j, cfg) in inputs.critic.iter().enumerate() {
        let wcj = &state.critic[j];
        let traj = inputs.samples[j].normalized.dot(wcj);
        out += cross(inputs.trajectory, j) * (0.25 * cfg.eta_c1 * traj);

        let points = inputs.grid.points(j);
        let scale = 0.25 * cfg.eta_c2 / points.len() as f64;
        for (pt, (s, _)) in points.iter().zip(&inputs.extrap[j]) {
            out += cross(pt, j) * (scale * s.normalized.dot(wcj));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    /// `lambda_min(sum_k omega_k omega_k^T / rho_k)`.
    pub min_eigenvalue: f64,
    /// `min_eigenvalue / M`: one sample of the lower constant `c_x`.
    pub c_lower: f64,
    pub satisfied: bool,
}

/// Rank check of the extrapolation regressors of player `i` at the current weights.
pub fn rank_monitor(
    i: usize,
    grid: &ExtrapolationGrid,
    actor_weights: &[Vector],
    gamma: &Matrix,
    nu: f64,
    tolerance: f64,
) -> Result<RankReport> {
    let points = grid.points(i);
    let p = gamma.nrows();
    let mut info = Matrix::zeros(p, p);
    for pt in points {
        let s = regressor_at(pt, i, actor_weights, gamma, nu)?;
        info += (&s.omega * s.omega.transpose()) / s.rho;
    }
    Ok(rank_from_information(&info, points.len(), tolerance))
}

pub(crate) fn rank_from_information(info: &Matrix, count: usize, tolerance: f64) -> RankReport {
    let lam = min_eigenvalue(info);
    RankReport {
        min_eigenvalue: lam,
        c_lower: lam / count as f64,
        satisfied: lam > tolerance,
    }
}
