//! Approximate policies, regressors and measurable Bellman errors.
//!
//! Everything here is evaluated through a [`PointEval`], which caches the
//! weight-independent quantities at one state (`f`, every `sigma_j'` and every coupling
//! matrix). Extrapolation-grid points are cached once per run; only the parts that
//! depend on the current actor weights are recomputed.

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::game_model::{Couplings, GameDefinition};
use crate::linalg::{all_finite_vec, halton_point, Matrix, Vector};

/// Weight-independent quantities at one state.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub x: Vector,
    pub f: Vector,
    /// `sigma_j'(x)` for every player.
    pub sigma_prime: Vec<Matrix>,
    pub couplings: Couplings,
    /// `g_j(x)` for every player.
    pub input_maps: Vec<Matrix>,
}

impl PointEval {
    pub fn new(game: &GameDefinition, basis: &BasisSet, x: &Vector) -> Result<Self> {
        game.check_state(x)?;
        if basis.num_players() != game.num_players() {
            return Err(Error::DimensionMismatch {
                what: "basis players",
                player: None,
                expected: game.num_players(),
                found: basis.num_players(),
            });
        }
        let f = game.drift(x);
        if !all_finite_vec(&f) {
            return Err(Error::NonFinite {
                context: format!("drift at x = {:?}", x.as_slice()),
            });
        }
        let sigma_prime = (0..game.num_players())
            .map(|j| basis.eval_jacobian(j, x))
            .collect::<Result<Vec<_>>>()?;
        let input_maps = (0..game.num_players()).map(|j| game.input_map(j, x)).collect();
        Ok(PointEval {
            x: x.clone(),
            f,
            sigma_prime,
            couplings: game.couplings(x),
            input_maps,
        })
    }

    /// `sigma_j'^T W_aj` for every player: the approximate value gradients.
    fn gradients(&self, actor_weights: &[Vector]) -> Vec<Vector> {
        self.sigma_prime
            .iter()
            .zip(actor_weights)
            .map(|(sp, w)| sp.transpose() * w)
            .collect()
    }

    /// Closed-loop vector field under the approximate policies,
    /// `f - 1/2 sum_j G_j sigma_j'^T W_aj`.
    pub fn closed_loop_field(&self, actor_weights: &[Vector]) -> Vector {
        let mut field = self.f.clone();
        for (gj, grad) in self.couplings.g.iter().zip(self.gradients(actor_weights)) {
            field -= gj * grad * 0.5;
        }
        field
    }
}

/// `omega_i`, `rho_i = 1 + nu omega^T Gamma omega` and `omega_i / rho_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSample {
    pub omega: Vector,
    pub rho: f64,
    pub normalized: Vector,
}

impl RegressorSample {
    fn new(omega: Vector, gamma: &Matrix, nu: f64) -> Self {
        let rho = 1.0 + nu * omega.dot(&(gamma * &omega));
        let normalized = &omega / rho;
        RegressorSample {
            omega,
            rho,
            normalized,
        }
    }
}

/// `-1/2 R_ii^-1 g_i(x)^T sigma_i'(x)^T W_ai`.
pub fn approximate_policy(
    game: &GameDefinition,
    basis: &BasisSet,
    i: usize,
    x: &Vector,
    actor_weight: &Vector,
) -> Result<Vector> {
    game.check_player(i)?;
    game.check_state(x)?;
    let sp = basis.eval_jacobian(i, x)?;
    check_weight(actor_weight, sp.nrows(), i)?;
    let g = game.input_map(i, x);
    Ok(policy_from(game.control_weight_inv(i), &g, &sp, actor_weight))
}

pub(crate) fn policy_from(r_inv: &Matrix, g: &Matrix, sigma_prime: &Matrix, w: &Vector) -> Vector {
    r_inv * (g.transpose() * (sigma_prime.transpose() * w)) * -0.5
}

pub(crate) fn policy_at(game: &GameDefinition, pt: &PointEval, i: usize, w: &Vector) -> Vector {
    policy_from(game.control_weight_inv(i), &pt.input_maps[i], &pt.sigma_prime[i], w)
}

fn check_weight(w: &Vector, expected: usize, player: usize) -> Result<()> {
    if w.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "weight vector",
            player: Some(player),
            expected,
            found: w.len(),
        });
    }
    Ok(())
}

fn check_weights(basis: &BasisSet, weights: &[Vector]) -> Result<()> {
    if weights.len() != basis.num_players() {
        return Err(Error::DimensionMismatch {
            what: "weight vectors",
            player: None,
            expected: basis.num_players(),
            found: weights.len(),
        });
    }
    for (j, w) in weights.iter().enumerate() {
        check_weight(w, basis.feature_count(j), j)?;
    }
    Ok(())
}

/// Regressor at a cached point.
pub fn regressor_at(
    pt: &PointEval,
    i: usize,
    actor_weights: &[Vector],
    gamma: &Matrix,
    nu: f64,
) -> Result<RegressorSample> {
    let omega = &pt.sigma_prime[i] * pt.closed_loop_field(actor_weights);
    if !all_finite_vec(&omega) {
        return Err(Error::NonFinite {
            context: format!("regressor omega of player {i} at x = {:?}", pt.x.as_slice()),
        });
    }
    let sample = RegressorSample::new(omega, gamma, nu);
    if !sample.rho.is_finite() {
        return Err(Error::NonFinite {
            context: format!("normalizer rho of player {i} at x = {:?}", pt.x.as_slice()),
        });
    }
    Ok(sample)
}

/// `omega_i = sigma_i' f - 1/2 sum_j sigma_i' G_j sigma_j'^T W_aj` and its normalizer.
pub fn regressor(
    game: &GameDefinition,
    basis: &BasisSet,
    i: usize,
    x: &Vector,
    actor_weights: &[Vector],
    gamma: &Matrix,
    nu: f64,
) -> Result<RegressorSample> {
    game.check_player(i)?;
    check_weights(basis, actor_weights)?;
    let p = basis.feature_count(i);
    if gamma.nrows() != p || gamma.ncols() != p {
        return Err(Error::DimensionMismatch {
            what: "gain matrix",
            player: Some(i),
            expected: p * p,
            found: gamma.nrows() * gamma.ncols(),
        });
    }
    if !(nu > 0.0) {
        return Err(Error::invalid("nu", "must be positive"));
    }
    let pt = PointEval::new(game, basis, x)?;
    regressor_at(&pt, i, actor_weights, gamma, nu)
}

/// The weight-free part `x^T Q_i x + 1/4 sum_j W_aj^T sigma_j' G_ij sigma_j'^T W_aj`.
fn bellman_offset(game: &GameDefinition, pt: &PointEval, i: usize, actor_weights: &[Vector]) -> f64 {
    let x = &pt.x;
    let mut value = x.dot(&(game.state_weight(i) * x));
    for (j, grad) in pt.gradients(actor_weights).iter().enumerate() {
        value += 0.25 * grad.dot(&(&pt.couplings.g_pair[i][j] * grad));
    }
    value
}

pub fn bellman_error_at(
    game: &GameDefinition,
    pt: &PointEval,
    i: usize,
    critic_weight: &Vector,
    actor_weights: &[Vector],
    sample: &RegressorSample,
) -> f64 {
    sample.omega.dot(critic_weight) + bellman_offset(game, pt, i, actor_weights)
}

/// Measurable Bellman error `omega^T W_ci + x^T Q_i x + 1/4 sum_j W_aj^T sigma_j' G_ij sigma_j'^T W_aj`.
///
/// `sample` must have been computed at the same state and actor weights.
pub fn bellman_error(
    game: &GameDefinition,
    basis: &BasisSet,
    i: usize,
    x: &Vector,
    critic_weight: &Vector,
    actor_weights: &[Vector],
    sample: &RegressorSample,
) -> Result<f64> {
    game.check_player(i)?;
    check_weight(critic_weight, basis.feature_count(i), i)?;
    check_weights(basis, actor_weights)?;
    let pt = PointEval::new(game, basis, x)?;
    Ok(bellman_error_at(game, &pt, i, critic_weight, actor_weights, sample))
}

/// The Bellman error written in terms of the estimation errors for an exact basis
/// (zero reconstruction error):
///
/// `-omega^T Wc~ + 1/4 sum_j Wa~_j^T s_j' G_ij s_j'^T Wa~_j
///  + 1/2 sum_j (W_i^T s_i' G_j - W_j^T s_j' G_ij) s_j'^T Wa~_j`,
///
/// with `omega` evaluated at `W_aj = W_j - Wa~_j`. The cross term carries a plus sign:
/// that is what the exact coupled HJ identity yields, and it vanishes for one player.
pub fn analytic_bellman_error(
    game: &GameDefinition,
    basis: &BasisSet,
    i: usize,
    x: &Vector,
    true_weights: &[Vector],
    critic_error: &Vector,
    actor_errors: &[Vector],
) -> Result<f64> {
    game.check_player(i)?;
    check_weights(basis, true_weights)?;
    check_weights(basis, actor_errors)?;
    check_weight(critic_error, basis.feature_count(i), i)?;
    let pt = PointEval::new(game, basis, x)?;
    let actor: Vec<Vector> = true_weights
        .iter()
        .zip(actor_errors)
        .map(|(w, e)| w - e)
        .collect();
    let omega = &pt.sigma_prime[i] * pt.closed_loop_field(&actor);
    let grad_i = pt.sigma_prime[i].transpose() * &true_weights[i];
    let mut value = -omega.dot(critic_error);
    for j in 0..game.num_players() {
        let sp = &pt.sigma_prime[j];
        let err_dir = sp.transpose() * &actor_errors[j];
        let grad_j = sp.transpose() * &true_weights[j];
        let g_pair = &pt.couplings.g_pair[i][j];
        value += 0.25 * err_dir.dot(&(g_pair * &err_dir));
        let row = &pt.couplings.g[j] * &grad_i - g_pair * &grad_j;
        value += 0.5 * row.dot(&err_dir);
    }
    Ok(value)
}

/// Fixed extrapolation points per player with cached point evaluations.
#[derive(Debug, Clone)]
pub struct ExtrapolationGrid {
    per_player: Vec<Vec<PointEval>>,
}

impl ExtrapolationGrid {
    /// `points[i]` are player `i`'s extrapolation states.
    pub fn new(game: &GameDefinition, basis: &BasisSet, points: Vec<Vec<Vector>>) -> Result<Self> {
        if points.len() != game.num_players() {
            return Err(Error::DimensionMismatch {
                what: "grid players",
                player: None,
                expected: game.num_players(),
                found: points.len(),
            });
        }
        let mut per_player = Vec::with_capacity(points.len());
        for (i, pts) in points.iter().enumerate() {
            if pts.is_empty() {
                return Err(Error::invalid(
                    format!("grid[{i}]"),
                    "at least one extrapolation point is required",
                ));
            }
            per_player.push(
                pts.iter()
                    .map(|x| PointEval::new(game, basis, x))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(ExtrapolationGrid { per_player })
    }

    /// The same points for every player.
    pub fn shared(game: &GameDefinition, basis: &BasisSet, points: Vec<Vector>) -> Result<Self> {
        Self::new(game, basis, vec![points; game.num_players()])
    }

    pub fn num_players(&self) -> usize {
        self.per_player.len()
    }

    pub fn points(&self, i: usize) -> &[PointEval] {
        &self.per_player[i]
    }

    pub fn len(&self, i: usize) -> usize {
        self.per_player[i].len()
    }

    pub fn is_empty(&self, i: usize) -> bool {
        self.per_player[i].is_empty()
    }

    /// Same points in a different order (used to check permutation invariance).
    pub fn permuted(&self, i: usize, order: &[usize]) -> Self {
        let mut out = self.clone();
        out.per_player[i] = order.iter().map(|&k| self.per_player[i][k].clone()).collect();
        out
    }
}

/// Axis-aligned lattice over `[lower, upper]` with `counts[c]` points per axis
/// (a single count places the point at the box midpoint).
pub fn lattice_points(lower: &[f64], upper: &[f64], counts: &[usize], exclude_origin: bool) -> Result<Vec<Vector>> {
    let n = lower.len();
    if upper.len() != n || counts.len() != n || n == 0 {
        return Err(Error::invalid("grid.box", "lower, upper and counts must share one length"));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("grid.box.counts", "counts must be positive"));
    }
    let axis = |c: usize, k: usize| -> f64 {
        if counts[c] == 1 {
            0.5 * (lower[c] + upper[c])
        } else {
            lower[c] + (upper[c] - lower[c]) * k as f64 / (counts[c] - 1) as f64
        }
    };
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut x = Vector::zeros(n);
        for c in (0..n).rev() {
            x[c] = axis(c, idx % counts[c]);
            idx /= counts[c];
        }
        if exclude_origin && x.norm() == 0.0 {
            continue;
        }
        out.push(x);
    }
    Ok(out)
}

/// Deterministic Halton scatter of `count` points in `[lower, upper]`.
pub fn scatter_points(lower: &[f64], upper: &[f64], count: usize) -> Result<Vec<Vector>> {
    let n = lower.len();
    if upper.len() != n || n == 0 {
        return Err(Error::invalid("grid.scatter", "lower and upper must share one length"));
    }
    Ok((1..=count as u64)
        .map(|k| {
            let u = halton_point(k, n);
            Vector::from_fn(n, |c, _| lower[c] + (upper[c] - lower[c]) * u[c])
        })
        .collect())
}

/// `(omega_i^k, rho_i^k)` and `delta_i^k` at every grid point of player `i`, using the
/// current weights.
pub fn extrapolated_bellman_errors(
    game: &GameDefinition,
    i: usize,
    grid: &ExtrapolationGrid,
    critic_weight: &Vector,
    actor_weights: &[Vector],
    gamma: &Matrix,
    nu: f64,
) -> Result<Vec<(RegressorSample, f64)>> {
    grid.points(i)
        .iter()
        .map(|pt| {
            let sample = regressor_at(pt, i, actor_weights, gamma, nu)?;
            let delta = bellman_error_at(game, pt, i, critic_weight, actor_weights, &sample);
            Ok((sample, delta))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::quadratic_basis;
    use crate::game_model::LinearQuadraticGame;
    use approx::assert_abs_diff_eq;

    fn v(d: &[f64]) -> Vector {
        Vector::from_row_slice(d)
    }

    fn scalar() -> (GameDefinition, BasisSet) {
        let one = Matrix::from_element(1, 1, 1.0);
        let game = LinearQuadraticGame {
            a: -one.clone(),
            b: vec![one.clone()],
            q: vec![one.clone()],
            r: vec![vec![one]],
        }
        .to_game()
        .unwrap();
        let basis = BasisSet::uniform(quadratic_basis(1), 1).unwrap();
        (game, basis)
    }

    #[test]
    fn policy_examples() {
        let (game, basis) = scalar();
        let u = approximate_policy(&game, &basis, 0, &v(&[1.0]), &v(&[0.5])).unwrap();
        assert_eq!(u[0], -0.5);
        let u = approximate_policy(&game, &basis, 0, &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(u[0], 0.0);
        let u = approximate_policy(&game, &basis, 0, &v(&[0.0]), &v(&[0.7])).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn regressor_and_bellman_examples() {
        let (game, basis) = scalar();
        let gamma = Matrix::from_element(1, 1, 1.0);
        let s = regressor(&game, &basis, 0, &v(&[1.0]), &[v(&[0.5])], &gamma, 1.0).unwrap();
        assert_abs_diff_eq!(s.omega[0], -3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.rho, 10.0, epsilon = 1e-15);
        let d = bellman_error(&game, &basis, 0, &v(&[1.0]), &v(&[1.0]), &[v(&[0.5])], &s).unwrap();
        assert_abs_diff_eq!(d, -1.75, epsilon = 1e-15);

        let s0 = regressor(&game, &basis, 0, &v(&[0.0]), &[v(&[0.5])], &gamma, 1.0).unwrap();
        assert_eq!(s0.omega[0], 0.0);
        assert_eq!(s0.rho, 1.0);
        let d0 = bellman_error(&game, &basis, 0, &v(&[0.0]), &v(&[3.0]), &[v(&[0.5])], &s0).unwrap();
        assert_eq!(d0, 0.0);
    }

    #[test]
    fn grid_examples() {
        let (game, basis) = scalar();
        let gamma = Matrix::from_element(1, 1, 1.0);
        let grid = ExtrapolationGrid::shared(&game, &basis, vec![v(&[0.0])]).unwrap();
        let out = extrapolated_bellman_errors(&game, 0, &grid, &v(&[1.0]), &[v(&[0.5])], &gamma, 1.0).unwrap();
        assert_eq!(out[0].0.omega[0], 0.0);
        assert_eq!(out[0].1, 0.0);

        let grid = ExtrapolationGrid::shared(&game, &basis, vec![v(&[1.0])]).unwrap();
        let out = extrapolated_bellman_errors(&game, 0, &grid, &v(&[1.0]), &[v(&[0.5])], &gamma, 1.0).unwrap();
        assert_abs_diff_eq!(out[0].0.omega[0], -3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[0].1, -1.75, epsilon = 1e-15);

        assert!(ExtrapolationGrid::shared(&game, &basis, vec![]).is_err());
    }

    #[test]
    fn analytic_form_is_zero_without_errors() {
        let (game, basis) = scalar();
        let w = vec![v(&[0.4])];
        let e = analytic_bellman_error(&game, &basis, 0, &v(&[1.3]), &w, &v(&[0.0]), &[v(&[0.0])]).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn bellman_error_is_affine_in_critic() {
        let (game, basis) = scalar();
        let gamma = Matrix::from_element(1, 1, 2.0);
        let x = v(&[0.8]);
        let actor = [v(&[0.3])];
        let s = regressor(&game, &basis, 0, &x, &actor, &gamma, 1.0).unwrap();
        let d = |c: f64| bellman_error(&game, &basis, 0, &x, &v(&[c]), &actor, &s).unwrap();
        assert_abs_diff_eq!(d(1.5) + d(-0.7) - d(0.0), d(0.8), epsilon = 1e-12);
    }

    #[test]
    fn lattice_and_scatter() {
        let pts = lattice_points(&[-1.0, -1.0], &[1.0, 1.0], &[3, 3], true).unwrap();
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|p| p.norm() > 0.0));
        let pts = lattice_points(&[-1.0], &[1.0], &[3], false).unwrap();
        assert_eq!(pts.iter().map(|p| p[0]).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        let sc = scatter_points(&[0.0, -2.0], &[1.0, 2.0], 5).unwrap();
        assert_eq!(sc.len(), 5);
        assert_eq!(sc[0].as_slice(), &[0.5, 2.0 * (1.0 / 3.0) * 2.0 - 2.0]);
    }
}
