//! Value-function feature maps `sigma_i` and their Jacobians.
//!
//! Polynomial bases use every monomial of total degree `2..=d`, enumerated by sorted
//! variable-index tuples in lexicographic order within each degree. Degree two therefore
//! reproduces [`quadratic_basis`] exactly: `x_a x_b` for `a <= b` ordered by `(a, b)`.
//!
//! Quadratic weight convention: the weight of `x_a^2` is `P_aa` and the weight of
//! `x_a x_b` (`a < b`) is `2 P_ab`, so that `w^T sigma(x) = x^T P x`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, Matrix, Vector};
use crate::polynomial::{monomial, monomial_partial};

pub type FeatureFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Quadratic,
    Polynomial { degree: u32 },
    Custom,
}

#[derive(Clone)]
enum Repr {
    Monomials(Vec<Vec<u32>>),
    Custom {
        features: FeatureFn,
        jacobian: JacobianFn,
    },
}

#[derive(Clone)]
pub struct PlayerBasis {
    kind: BasisKind,
    state_dim: usize,
    count: usize,
    repr: Repr,
}

impl fmt::Debug for PlayerBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlayerBasis")
            .field("kind", &self.kind)
            .field("state_dim", &self.state_dim)
            .field("feature_count", &self.count)
            .finish()
    }
}

/// All `x_a x_b`, `a <= b`; `n(n+1)/2` features.
pub fn quadratic_basis(state_dim: usize) -> PlayerBasis {
    let exps = monomials_of_degree(state_dim, 2);
    PlayerBasis {
        kind: BasisKind::Quadratic,
        state_dim,
        count: exps.len(),
        repr: Repr::Monomials(exps),
    }
}

/// All monomials of total degree 2 through `degree`.
pub fn polynomial_basis(state_dim: usize, degree: u32) -> Result<PlayerBasis> {
    if state_dim == 0 {
        return Err(Error::invalid("state_dim", "must be positive"));
    }
    if degree < 2 {
        return Err(Error::invalid("degree", "polynomial bases start at degree 2"));
    }
    let exps: Vec<Vec<u32>> = (2..=degree)
        .flat_map(|d| monomials_of_degree(state_dim, d))
        .collect();
    Ok(PlayerBasis {
        kind: BasisKind::Polynomial { degree },
        state_dim,
        count: exps.len(),
        repr: Repr::Monomials(exps),
    })
}

/// User-supplied features. `features(0)` must vanish.
pub fn custom_basis(
    state_dim: usize,
    feature_count: usize,
    features: FeatureFn,
    jacobian: JacobianFn,
) -> Result<PlayerBasis> {
    if state_dim == 0 || feature_count == 0 {
        return Err(Error::invalid(
            "custom basis",
            "state_dim and feature_count must be positive",
        ));
    }
    let basis = PlayerBasis {
        kind: BasisKind::Custom,
        state_dim,
        count: feature_count,
        repr: Repr::Custom { features, jacobian },
    };
    let origin = Vector::zeros(state_dim);
    let s0 = basis.raw_features(&origin);
    if s0.len() != feature_count {
        return Err(Error::DimensionMismatch {
            what: "custom feature output",
            player: None,
            expected: feature_count,
            found: s0.len(),
        });
    }
    let j0 = basis.raw_jacobian(&origin);
    if j0.nrows() != feature_count || j0.ncols() != state_dim {
        return Err(Error::DimensionMismatch {
            what: "custom jacobian output (rows*cols)",
            player: None,
            expected: feature_count * state_dim,
            found: j0.nrows() * j0.ncols(),
        });
    }
    Ok(basis)
}

fn monomials_of_degree(n: usize, degree: u32) -> Vec<Vec<u32>> {
    // sorted index tuples (a_1 <= ... <= a_d), lexicographic
    fn rec(n: usize, start: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for a in start..n {
            cur[a] += 1;
            rec(n, a, left - 1, cur, out);
            cur[a] -= 1;
        }
    }
    let mut out = Vec::new();
    rec(n, 0, degree, &mut vec![0; n], &mut out);
    out
}

impl PlayerBasis {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn feature_count(&self) -> usize {
        self.count
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Exponent vectors for monomial bases.
    pub fn exponents(&self) -> Option<&[Vec<u32>]> {
        match &self.repr {
            Repr::Monomials(e) => Some(e),
            Repr::Custom { .. } => None,
        }
    }

    pub(crate) fn raw_features(&self, x: &Vector) -> Vector {
        match &self.repr {
            Repr::Monomials(exps) => Vector::from_iterator(exps.len(), exps.iter().map(|e| monomial(e, x))),
            Repr::Custom { features, .. } => features(x),
        }
    }

    pub(crate) fn raw_jacobian(&self, x: &Vector) -> Matrix {
        match &self.repr {
            Repr::Monomials(exps) => Matrix::from_fn(exps.len(), self.state_dim, |r, c| {
                monomial_partial(&exps[r], x, c)
            }),
            Repr::Custom { jacobian, .. } => jacobian(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    per_player: Vec<PlayerBasis>,
}

impl BasisSet {
    /// Checks dimensions and `sigma_i(0) = 0` for every player.
    pub fn new(per_player: Vec<PlayerBasis>) -> Result<Self> {
        if per_player.is_empty() {
            return Err(Error::invalid("basis", "at least one player required"));
        }
        let n = per_player[0].state_dim;
        let origin = Vector::zeros(n);
        for (i, b) in per_player.iter().enumerate() {
            if b.state_dim != n {
                return Err(Error::DimensionMismatch {
                    what: "basis state dimension",
                    player: Some(i),
                    expected: n,
                    found: b.state_dim,
                });
            }
            let norm = b.raw_features(&origin).norm();
            if !(norm <= 1e-12) {
                return Err(Error::BasisNotZeroAtOrigin { player: i, norm });
            }
        }
        Ok(BasisSet { per_player })
    }

    /// Same basis for every player.
    pub fn uniform(basis: PlayerBasis, players: usize) -> Result<Self> {
        Self::new(vec![basis; players])
    }

    pub fn num_players(&self) -> usize {
        self.per_player.len()
    }

    pub fn player(&self, i: usize) -> &PlayerBasis {
        &self.per_player[i]
    }

    pub fn feature_count(&self, i: usize) -> usize {
        self.per_player[i].count
    }

    pub fn total_features(&self) -> usize {
        self.per_player.iter().map(|b| b.count).sum()
    }

    pub fn state_dim(&self) -> usize {
        self.per_player[0].state_dim
    }

    fn player_checked(&self, i: usize, x: &Vector) -> Result<&PlayerBasis> {
        let b = self.per_player.get(i).ok_or(Error::PlayerIndex {
            index: i,
            players: self.per_player.len(),
        })?;
        if x.len() != b.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state",
                player: Some(i),
                expected: b.state_dim,
                found: x.len(),
            });
        }
        Ok(b)
    }

    pub fn eval_features(&self, i: usize, x: &Vector) -> Result<Vector> {
        let s = self.player_checked(i, x)?.raw_features(x);
        if !all_finite_vec(&s) {
            return Err(Error::NonFinite {
                context: format!("features of player {i} at x = {:?}", x.as_slice()),
            });
        }
        Ok(s)
    }

    /// `sigma_i'(x)`, `p_i x n`.
    pub fn eval_jacobian(&self, i: usize, x: &Vector) -> Result<Matrix> {
        let j = self.player_checked(i, x)?.raw_jacobian(x);
        if !all_finite_mat(&j) {
            return Err(Error::NonFinite {
                context: format!("jacobian of player {i} at x = {:?}", x.as_slice()),
            });
        }
        Ok(j)
    }
}

/// Central-difference Jacobian with step `max(1e-6, 1e-6 |x|)`.
pub fn finite_difference_jacobian(basis: &PlayerBasis, x: &Vector) -> Matrix {
    let h = (1e-6 * x.norm()).max(1e-6);
    let mut jac = Matrix::zeros(basis.count, basis.state_dim);
    for c in 0..basis.state_dim {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let d = (basis.raw_features(&xp) - basis.raw_features(&xm)) / (2.0 * h);
        jac.set_column(c, &d);
    }
    jac
}

/// Largest relative deviation between the analytic and finite-difference Jacobians over
/// `states`, measured as `max|J - J_fd| / max(1, max|J|)` per state.
pub fn check_jacobian(basis: &PlayerBasis, states: &[Vector]) -> f64 {
    states
        .iter()
        .map(|x| {
            let analytic = basis.raw_jacobian(x);
            let numeric = finite_difference_jacobian(basis, x);
            (&analytic - &numeric).amax() / analytic.amax().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Maps a symmetric `P` to quadratic-basis weights.
pub fn quadratic_weights_from_matrix(p: &Matrix) -> Vector {
    let n = p.nrows();
    let mut w = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            w.push(if a == b { p[(a, a)] } else { p[(a, b)] + p[(b, a)] });
        }
    }
    Vector::from_vec(w)
}

/// Inverse of [`quadratic_weights_from_matrix`].
pub fn matrix_from_quadratic_weights(w: &Vector, n: usize) -> Matrix {
    let mut p = Matrix::zeros(n, n);
    let mut k = 0;
    for a in 0..n {
        for b in a..n {
            if a == b {
                p[(a, a)] = w[k];
            } else {
                p[(a, b)] = 0.5 * w[k];
                p[(b, a)] = 0.5 * w[k];
            }
            k += 1;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(d: &[f64]) -> Vector {
        Vector::from_row_slice(d)
    }

    #[test]
    fn quadratic_examples() {
        let b1 = BasisSet::uniform(quadratic_basis(1), 1).unwrap();
        assert_eq!(b1.eval_features(0, &v(&[3.0])).unwrap().as_slice(), &[9.0]);
        assert_eq!(b1.eval_features(0, &v(&[2.0])).unwrap().as_slice(), &[4.0]);
        assert_eq!(b1.eval_jacobian(0, &v(&[2.0])).unwrap()[(0, 0)], 4.0);

        let b2 = BasisSet::uniform(quadratic_basis(2), 1).unwrap();
        assert_eq!(b2.feature_count(0), 3);
        assert_eq!(
            b2.eval_features(0, &v(&[1.0, 2.0])).unwrap().as_slice(),
            &[1.0, 2.0, 4.0]
        );
        assert_eq!(
            b2.eval_features(0, &v(&[0.0, 1.0])).unwrap().as_slice(),
            &[0.0, 0.0, 1.0]
        );
        let j = b2.eval_jacobian(0, &v(&[1.0, 2.0])).unwrap();
        assert_eq!(j, Matrix::from_row_slice(3, 2, &[2.0, 0.0, 2.0, 1.0, 0.0, 4.0]));
        let j = b2.eval_jacobian(0, &v(&[1.0, 0.0])).unwrap();
        assert_eq!(j, Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn origin_is_zero() {
        for n in 1..=3 {
            let b = BasisSet::new(vec![quadratic_basis(n), polynomial_basis(n, 4).unwrap()]).unwrap();
            for i in 0..2 {
                assert_eq!(b.eval_features(i, &Vector::zeros(n)).unwrap().norm(), 0.0);
            }
        }
    }

    #[test]
    fn polynomial_degree_two_matches_quadratic() {
        let q = quadratic_basis(3);
        let p = polynomial_basis(3, 2).unwrap();
        assert_eq!(q.exponents(), p.exponents());
        // n=2, degree 4: 3 + 4 + 5 monomials
        assert_eq!(polynomial_basis(2, 4).unwrap().feature_count(), 12);
    }

    #[test]
    fn rejects_nonzero_at_origin_and_bad_index() {
        let f: FeatureFn = Arc::new(|x: &Vector| v(&[x[0] + 1.0]));
        let j: JacobianFn = Arc::new(|_: &Vector| Matrix::from_element(1, 1, 1.0));
        let custom = custom_basis(1, 1, f, j).unwrap();
        assert!(matches!(
            BasisSet::new(vec![custom]),
            Err(Error::BasisNotZeroAtOrigin { .. })
        ));
        let b = BasisSet::uniform(quadratic_basis(1), 1).unwrap();
        assert!(b.eval_features(1, &v(&[1.0])).is_err());
        assert!(b.eval_features(0, &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn non_finite_output_echoes_state() {
        let f: FeatureFn = Arc::new(|x: &Vector| v(&[x[0] * x[0] / (x[0] - 1.0).abs().max(0.0)]));
        let j: JacobianFn = Arc::new(|_: &Vector| Matrix::from_element(1, 1, 0.0));
        let b = BasisSet::new(vec![custom_basis(1, 1, f, j).unwrap()]).unwrap();
        let err = b.eval_features(0, &v(&[1.0])).unwrap_err();
        assert!(err.to_string().contains("[1.0]"));
    }

    #[test]
    fn finite_difference_agreement() {
        for n in 1..=3 {
            for basis in [quadratic_basis(n), polynomial_basis(n, 4).unwrap()] {
                let states: Vec<Vector> = (1..=10)
                    .map(|k| Vector::from_fn(n, |c, _| ((k * 7 + c * 3) as f64).sin() * 2.0))
                    .collect();
                assert!(check_jacobian(&basis, &states) <= 1e-6);
            }
        }
    }

    #[test]
    fn weight_convention_examples() {
        let w = quadratic_weights_from_matrix(&Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]));
        assert_eq!(w.as_slice(), &[1.0, 1.0, 2.0]);
        let w = quadratic_weights_from_matrix(&Matrix::identity(2, 2));
        assert_eq!(w.as_slice(), &[1.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn quadratic_form_matches_weights(
            entries in proptest::collection::vec(-3.0f64..3.0, 6),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let p = Matrix::from_fn(3, 3, |r, c| {
                let (a, b) = if r <= c { (r, c) } else { (c, r) };
                entries[a * 3 - a * (a + 1) / 2 + b]
            });
            let x = Vector::from_vec(x);
            let w = quadratic_weights_from_matrix(&p);
            let s = quadratic_basis(3).raw_features(&x);
            let lhs = w.dot(&s);
            let rhs = x.dot(&(&p * &x));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            let back = matrix_from_quadratic_weights(&w, 3);
            prop_assert!((back - p).amax() <= 1e-15);
        }
    }
}
