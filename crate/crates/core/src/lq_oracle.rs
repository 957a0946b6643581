//! Coupled algebraic Riccati equations for N-player linear-quadratic games.
//!
//! With `V_i = x^T P_i x` the coupled HJ equations reduce to
//!
//! `0 = Q_i + A_cl^T P_i + P_i A_cl + sum_j P_j S_ij P_j`,
//! `A_cl = A - sum_j S_j P_j`, `S_j = B_j R_jj^-1 B_j^T`,
//! `S_ij = B_j R_jj^-1 R_ij R_jj^-1 B_j^T`.
//!
//! The solver is a Lyapunov fixed-point iteration: hold `A_cl` and the quadratic sum at
//! the current iterate, solve one linear Lyapunov equation per player, repeat. Each player
//! starts from its own single-player Riccati solution (others' controls set to zero).
//!
//! This module only shares game and basis evaluation with the learning code.

use nalgebra::Complex;

use crate::basis::{quadratic_weights_from_matrix, BasisKind, BasisSet};
use crate::error::{Error, Result};
use crate::game_model::{GameDefinition, LinearQuadraticGame};
use crate::linalg::{symmetrize, Matrix, Vector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: Vec<Matrix>,
    pub closed_loop: Matrix,
    pub closed_loop_eigenvalues: Vec<Complex<f64>>,
    /// Frobenius norm of each player's Riccati residual.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn max_real_eigenvalue(&self) -> f64 {
        self.closed_loop_eigenvalues
            .iter()
            .map(|c| c.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Equilibrium feedback gains `K_i` with `u_i = -K_i x`.
    pub fn gains(&self, game: &LinearQuadraticGame) -> Vec<Matrix> {
        (0..game.num_players())
            .map(|i| {
                let rinv = game.r[i][i].clone().try_inverse().expect("R_ii checked at construction");
                rinv * game.b[i].transpose() * &self.p[i]
            })
            .collect()
    }
}

struct Structure {
    s: Vec<Matrix>,
    // s_pair[i][j] = S_ij
    s_pair: Vec<Vec<Matrix>>,
}

fn structure(game: &LinearQuadraticGame) -> Result<Structure> {
    let players = game.num_players();
    let rinv = (0..players)
        .map(|j| {
            game.r[j][j]
                .clone()
                .try_inverse()
                .ok_or(Error::Singular("R_jj inverse"))
        })
        .collect::<Result<Vec<_>>>()?;
    let s = (0..players)
        .map(|j| symmetrize(&(&game.b[j] * &rinv[j] * game.b[j].transpose())))
        .collect();
    let s_pair = (0..players)
        .map(|i| {
            (0..players)
                .map(|j| {
                    symmetrize(&(&game.b[j] * &rinv[j] * &game.r[i][j] * &rinv[j] * game.b[j].transpose()))
                })
                .collect()
        })
        .collect();
    Ok(Structure { s, s_pair })
}

/// Solves `A^T P + P A = -C` for symmetric `P` by a dense solve on the
/// `n(n+1)/2` upper-triangular unknowns.
pub fn solve_lyapunov(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let m = n * (n + 1) / 2;
    let index: Vec<(usize, usize)> = (0..n).flat_map(|r| (r..n).map(move |c| (r, c))).collect();
    let mut lhs = Matrix::zeros(m, m);
    for (col, &(a_idx, b_idx)) in index.iter().enumerate() {
        let mut e = Matrix::zeros(n, n);
        e[(a_idx, b_idx)] = 1.0;
        e[(b_idx, a_idx)] = 1.0;
        let image = a.transpose() * &e + &e * a;
        for (row, &(r, c)) in index.iter().enumerate() {
            lhs[(row, col)] = image[(r, c)];
        }
    }
    let rhs = Vector::from_iterator(m, index.iter().map(|&(r, cc)| -0.5 * (c[(r, cc)] + c[(cc, r)])));
    let sol = lhs.lu().solve(&rhs).ok_or(Error::Singular("Lyapunov equation"))?;
    let mut p = Matrix::zeros(n, n);
    for (k, &(r, c)) in index.iter().enumerate() {
        p[(r, c)] = sol[k];
        p[(c, r)] = sol[k];
    }
    Ok(p)
}

/// Stabilizing solution of `A^T P + P A - P S P + Q = 0` via the matrix sign function
/// of the Hamiltonian `[[A, -S], [-Q, -A^T]]`.
pub fn solve_care(a: &Matrix, s: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or(Error::Singular("Hamiltonian sign iteration"))?;
        let scale = if det.is_finite() && det != 0.0 {
            det.abs().powf(1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z / scale + inv * scale) * 0.5;
        let change = (&next - &z).amax();
        let size = next.amax().max(1.0);
        z = next;
        if change <= 1e-13 * size {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            max_iter: 100,
            last_residual: f64::NAN,
        });
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let id = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &id));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|_| Error::Singular("Riccati subspace"))?;
    Ok(symmetrize(&p))
}

fn closed_loop(a: &Matrix, st: &Structure, p: &[Matrix]) -> Matrix {
    let mut acl = a.clone();
    for (s, pj) in st.s.iter().zip(p) {
        acl -= s * pj;
    }
    acl
}

fn riccati_residual(q: &Matrix, acl: &Matrix, st: &Structure, i: usize, p: &[Matrix]) -> Matrix {
    let mut r = q + acl.transpose() * &p[i] + &p[i] * acl;
    for (j, pj) in p.iter().enumerate() {
        r += pj * &st.s_pair[i][j] * pj;
    }
    r
}

fn eigenvalues(m: &Matrix) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn solve_coupled_riccati(game: &LinearQuadraticGame, tol: f64, max_iter: usize) -> Result<RiccatiSolution> {
    let st = structure(game)?;
    let players = game.num_players();
    let mut p = (0..players)
        .map(|i| solve_care(&game.a, &st.s[i], &game.q[i]))
        .collect::<Result<Vec<_>>>()?;

    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let acl = closed_loop(&game.a, &st, &p);
        let next = (0..players)
            .map(|i| {
                let mut c = game.q[i].clone();
                for (j, pj) in p.iter().enumerate() {
                    c += pj * &st.s_pair[i][j] * pj;
                }
                solve_lyapunov(&acl, &c).map(|m| symmetrize(&m))
            })
            .collect::<Result<Vec<_>>>()?;
        last_change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        p = next;
        if !last_change.is_finite() {
            break;
        }
        if last_change <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            max_iter,
            last_residual: last_change,
        });
    }

    let acl = closed_loop(&game.a, &st, &p);
    let residuals = (0..players)
        .map(|i| riccati_residual(&game.q[i], &acl, &st, i, &p).norm())
        .collect();
    let closed_loop_eigenvalues = eigenvalues(&acl);
    let solution = RiccatiSolution {
        p,
        closed_loop: acl,
        closed_loop_eigenvalues,
        residuals,
        converged,
        iterations,
    };
    let max_re = solution.max_real_eigenvalue();
    if !(max_re < 0.0) {
        return Err(Error::NonHurwitz { max_real_part: max_re });
    }
    Ok(solution)
}

/// Quadratic-basis weights `W_i` with `W_i^T sigma(x) = x^T P_i x`.
pub fn oracle_weights(solution: &RiccatiSolution, basis: &BasisSet) -> Result<Vec<Vector>> {
    if basis.num_players() != solution.p.len() {
        return Err(Error::BasisMismatch(format!(
            "basis has {} players, solution has {}",
            basis.num_players(),
            solution.p.len()
        )));
    }
    solution
        .p
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let b = basis.player(i);
            let quadratic = matches!(b.kind(), BasisKind::Quadratic | BasisKind::Polynomial { degree: 2 });
            if !quadratic || b.state_dim() != p.nrows() {
                return Err(Error::BasisMismatch(format!(
                    "player {i} needs the quadratic basis in dimension {}",
                    p.nrows()
                )));
            }
            Ok(quadratic_weights_from_matrix(p))
        })
        .collect()
}

/// Largest absolute value over `states` of the open-loop HJ expression
/// `x^T Q_i x + sum_j u_j^T R_ij u_j + grad V_i (f + sum_j g_j u_j)` with
/// `u_j = -1/2 R_jj^-1 g_j^T sigma_j'^T W_j`, over every player.
pub fn verify_hj_residual(
    game: &GameDefinition,
    basis: &BasisSet,
    weights: &[Vector],
    states: &[Vector],
) -> Result<f64> {
    let players = game.num_players();
    if weights.len() != players {
        return Err(Error::DimensionMismatch {
            what: "weight vectors",
            player: None,
            expected: players,
            found: weights.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for x in states {
        let grads = (0..players)
            .map(|j| Ok(basis.eval_jacobian(j, x)?.transpose() * &weights[j]))
            .collect::<Result<Vec<Vector>>>()?;
        let gs: Vec<Matrix> = (0..players).map(|j| game.input_map(j, x)).collect();
        let controls: Vec<Vector> = (0..players)
            .map(|j| game.control_weight_inv(j) * (gs[j].transpose() * &grads[j]) * -0.5)
            .collect();
        let xdot = game.evaluate_dynamics(x, &controls)?;
        for i in 0..players {
            let value = game.instantaneous_cost(x, &controls, i)? + grads[i].dot(&xdot);
            worst = worst.max(value.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::quadratic_basis;
    use approx::assert_abs_diff_eq;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_lq(a: f64, b: f64, q: f64, r: f64) -> LinearQuadraticGame {
        LinearQuadraticGame {
            a: s(a),
            b: vec![s(b)],
            q: vec![s(q)],
            r: vec![vec![s(r)]],
        }
    }

    fn closed_form(a: f64, b: f64, q: f64, r: f64) -> f64 {
        r * (a + (a * a + q * b * b / r).sqrt()) / (b * b)
    }

    #[test]
    fn scalar_matches_closed_form() {
        let sol = solve_coupled_riccati(&scalar_lq(-1.0, 1.0, 1.0, 1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_abs_diff_eq!(sol.p[0][(0, 0)], 2f64.sqrt() - 1.0, epsilon = 1e-12);
        for (a, b, q, r) in [(0.5, 2.0, 3.0, 0.7), (2.0, 1.0, 1.0, 1.0), (-3.0, 0.5, 0.1, 2.0)] {
            let p = solve_care(&s(a), &s(b * b / r), &s(q)).unwrap()[(0, 0)];
            assert_abs_diff_eq!(p, closed_form(a, b, q, r), epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_cost_stable_plant() {
        let p = solve_care(&s(-1.0), &s(1.0), &s(0.0)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = Matrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 0.5, -3.0, 1.0, 0.0, -1.0, -1.0]);
        let c = Matrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 4.0]);
        let p = solve_lyapunov(&a, &c).unwrap();
        let r = a.transpose() * &p + &p * &a + &c;
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn care_matrix_case_residual() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sm = &b * b.transpose();
        let q = Matrix::identity(2, 2);
        let p = solve_care(&a, &sm, &q).unwrap();
        let r = a.transpose() * &p + &p * &a - &p * &sm * &p + &q;
        assert!(r.amax() < 1e-10);
        let acl = &a - &sm * &p;
        assert!(eigenvalues(&acl).iter().all(|e| e.re < 0.0));
    }

    #[test]
    fn weights_examples() {
        let basis1 = BasisSet::uniform(quadratic_basis(1), 1).unwrap();
        let sol = RiccatiSolution {
            p: vec![s(0.4142)],
            closed_loop: s(-1.0),
            closed_loop_eigenvalues: vec![],
            residuals: vec![0.0],
            converged: true,
            iterations: 1,
        };
        assert_eq!(oracle_weights(&sol, &basis1).unwrap()[0].as_slice(), &[0.4142]);
        let basis3 = BasisSet::uniform(crate::basis::polynomial_basis(1, 3).unwrap(), 1).unwrap();
        assert!(matches!(oracle_weights(&sol, &basis3), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn hj_residual_examples() {
        let lq = scalar_lq(-1.0, 1.0, 2.0, 1.0);
        let game = lq.to_game().unwrap();
        let basis = BasisSet::uniform(quadratic_basis(1), 1).unwrap();
        let sol = solve_coupled_riccati(&lq, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let w = oracle_weights(&sol, &basis).unwrap();
        let states: Vec<Vector> = [-2.0, -0.3, 0.7, 1.9].iter().map(|&x| Vector::from_element(1, x)).collect();
        assert!(verify_hj_residual(&game, &basis, &w, &states).unwrap() <= 1e-8);

        let x = [Vector::from_element(1, 1.5)];
        let zero = verify_hj_residual(&game, &basis, &[Vector::zeros(1)], &x).unwrap();
        assert_abs_diff_eq!(zero, 2.0 * 1.5 * 1.5, epsilon = 1e-14);

        let perturbed = [&w[0] + Vector::from_element(1, 0.1)];
        assert!(
            verify_hj_residual(&game, &basis, &perturbed, &x).unwrap()
                > verify_hj_residual(&game, &basis, &w, &x).unwrap()
        );
    }

    #[test]
    fn non_lq_weights_mismatch_is_reported() {
        let basis = BasisSet::uniform(quadratic_basis(2), 1).unwrap();
        let sol = solve_coupled_riccati(&scalar_lq(-1.0, 1.0, 1.0, 1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(oracle_weights(&sol, &basis).is_err());
    }
}
