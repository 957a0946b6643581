//! N-player control-affine games: `xdot = f(x) + sum_i g_i(x) u_i` with quadratic costs
//! `r_i = x^T Q_i x + sum_j u_j^T R_ij u_j`.
//!
//! The drift and input maps are opaque callables. Global Lipschitz continuity of `f` and
//! uniform boundedness of `g_i` are standing assumptions of the learning scheme that the
//! library does not verify; only `f(0) = 0` is checked at construction. Boundedness of
//! `g_i` is treated as a property of the compact set handed to the gain advisor.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eigenvalue, symmetrize, Matrix, Vector};

pub type DriftFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type InputMapFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Tolerance on `|f(0)|` at construction.
pub const DRIFT_ORIGIN_TOL: f64 = 1e-12;
/// Asymmetry above this is recorded as corrected.
pub const ASYMMETRY_TOL: f64 = 1e-10;

/// `G_j = g_j R_jj^-1 g_j^T` for every `j` and `G_ij = g_j R_jj^-1 R_ij R_jj^-1 g_j^T`
/// for every pair, evaluated at one state.
#[derive(Debug, Clone)]
pub struct Couplings {
    /// `g[j]`, `n x n`.
    pub g: Vec<Matrix>,
    /// `g_pair[i][j] = G_ij`, `n x n`.
    pub g_pair: Vec<Vec<Matrix>>,
}

#[derive(Clone)]
pub struct GameDefinition {
    state_dim: usize,
    control_dims: Vec<usize>,
    drift: DriftFn,
    input_maps: Vec<InputMapFn>,
    state_weights: Vec<Matrix>,
    control_weights: Vec<Vec<Matrix>>,
    r_diag_inv: Vec<Matrix>,
    // R_jj^-1 R_ij R_jj^-1, indexed [i][j]
    r_coupled: Vec<Vec<Matrix>>,
    q_min: Vec<f64>,
    asymmetry_corrected: bool,
    linear: Option<LinearQuadraticGame>,
}

impl fmt::Debug for GameDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameDefinition")
            .field("state_dim", &self.state_dim)
            .field("control_dims", &self.control_dims)
            .field("linear", &self.linear.is_some())
            .finish_non_exhaustive()
    }
}

impl GameDefinition {
    /// `control_weights[i][j]` is `R_ij` (size `m_j x m_j`).
    pub fn new(
        state_dim: usize,
        control_dims: Vec<usize>,
        drift: DriftFn,
        input_maps: Vec<InputMapFn>,
        state_weights: Vec<Matrix>,
        control_weights: Vec<Vec<Matrix>>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::invalid("state_dim", "must be positive"));
        }
        let players = control_dims.len();
        if players == 0 {
            return Err(Error::invalid("num_players", "must be positive"));
        }
        if let Some(i) = control_dims.iter().position(|&m| m == 0) {
            return Err(Error::invalid(
                format!("control_dims[{i}]"),
                "must be positive",
            ));
        }
        check_len("input_maps", None, players, input_maps.len())?;
        check_len("state_weights", None, players, state_weights.len())?;
        check_len("control_weights", None, players, control_weights.len())?;

        let mut asymmetry_corrected = false;
        let mut q_sym = Vec::with_capacity(players);
        let mut q_min = Vec::with_capacity(players);
        for (i, q) in state_weights.iter().enumerate() {
            check_square("Q", i, state_dim, q)?;
            asymmetry_corrected |= asymmetry(q) > ASYMMETRY_TOL;
            let q = symmetrize(q);
            let lam = min_eigenvalue(&q);
            if !(lam > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    what: format!("Q_{i}"),
                    min_eigenvalue: lam,
                });
            }
            q_min.push(lam);
            q_sym.push(q);
        }

        let mut r_sym = Vec::with_capacity(players);
        for (i, row) in control_weights.iter().enumerate() {
            check_len("control_weights row", Some(i), players, row.len())?;
            let mut out = Vec::with_capacity(players);
            for (j, r) in row.iter().enumerate() {
                check_square("R", j, control_dims[j], r)?;
                asymmetry_corrected |= asymmetry(r) > ASYMMETRY_TOL;
                out.push(symmetrize(r));
            }
            r_sym.push(out);
        }

        let mut r_diag_inv = Vec::with_capacity(players);
        for j in 0..players {
            let rjj = &r_sym[j][j];
            let lam = min_eigenvalue(rjj);
            if !(lam > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    what: format!("R_{j}{j}"),
                    min_eigenvalue: lam,
                });
            }
            let inv = rjj
                .clone()
                .try_inverse()
                .ok_or(Error::Singular("R_jj inverse"))?;
            r_diag_inv.push(symmetrize(&inv));
        }
        let r_coupled = (0..players)
            .map(|i| {
                (0..players)
                    .map(|j| symmetrize(&(&r_diag_inv[j] * &r_sym[i][j] * &r_diag_inv[j])))
                    .collect()
            })
            .collect();

        let origin = Vector::zeros(state_dim);
        let f0 = drift(&origin);
        check_len("drift output", None, state_dim, f0.len())?;
        let norm = f0.norm();
        if !(norm <= DRIFT_ORIGIN_TOL) {
            return Err(Error::DriftNotZeroAtOrigin { norm });
        }
        for (i, g) in input_maps.iter().enumerate() {
            let gx = g(&origin);
            if gx.nrows() != state_dim || gx.ncols() != control_dims[i] {
                return Err(Error::DimensionMismatch {
                    what: "input map shape (rows*cols)",
                    player: Some(i),
                    expected: state_dim * control_dims[i],
                    found: gx.nrows() * gx.ncols(),
                });
            }
        }

        Ok(GameDefinition {
            state_dim,
            control_dims,
            drift,
            input_maps,
            state_weights: q_sym,
            control_weights: r_sym,
            r_diag_inv,
            r_coupled,
            q_min,
            asymmetry_corrected,
            linear: None,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_players(&self) -> usize {
        self.control_dims.len()
    }

    pub fn control_dims(&self) -> &[usize] {
        &self.control_dims
    }

    pub fn state_weight(&self, i: usize) -> &Matrix {
        &self.state_weights[i]
    }

    pub fn control_weight(&self, i: usize, j: usize) -> &Matrix {
        &self.control_weights[i][j]
    }

    pub fn control_weight_inv(&self, j: usize) -> &Matrix {
        &self.r_diag_inv[j]
    }

    /// Minimum eigenvalue of `Q_i`.
    pub fn q_min(&self, i: usize) -> f64 {
        self.q_min[i]
    }

    /// Whether any `Q_i` or `R_ij` needed symmetrizing above [`ASYMMETRY_TOL`].
    pub fn asymmetry_corrected(&self) -> bool {
        self.asymmetry_corrected
    }

    /// The linear-quadratic description, when the game was built from one.
    pub fn linear(&self) -> Option<&LinearQuadraticGame> {
        self.linear.as_ref()
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        (self.drift)(x)
    }

    pub fn input_map(&self, i: usize, x: &Vector) -> Matrix {
        (self.input_maps[i])(x)
    }

    pub(crate) fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.num_players() {
            return Err(Error::PlayerIndex {
                index: i,
                players: self.num_players(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, x: &Vector) -> Result<()> {
        check_len("state", None, self.state_dim, x.len())
    }

    fn check_controls(&self, controls: &[Vector]) -> Result<()> {
        check_len("controls", None, self.num_players(), controls.len())?;
        for (i, u) in controls.iter().enumerate() {
            check_len("control", Some(i), self.control_dims[i], u.len())?;
        }
        Ok(())
    }

    /// `f(x) + sum_i g_i(x) u_i`.
    pub fn evaluate_dynamics(&self, x: &Vector, controls: &[Vector]) -> Result<Vector> {
        self.check_state(x)?;
        self.check_controls(controls)?;
        let mut xdot = self.drift(x);
        for (i, u) in controls.iter().enumerate() {
            xdot += self.input_map(i, x) * u;
        }
        Ok(xdot)
    }

    /// `x^T Q_i x + sum_j u_j^T R_ij u_j`.
    pub fn instantaneous_cost(&self, x: &Vector, controls: &[Vector], i: usize) -> Result<f64> {
        self.check_player(i)?;
        self.check_state(x)?;
        self.check_controls(controls)?;
        let mut cost = x.dot(&(&self.state_weights[i] * x));
        for (j, u) in controls.iter().enumerate() {
            cost += u.dot(&(&self.control_weights[i][j] * u));
        }
        Ok(cost)
    }

    /// `(G_j(x), G_ij(x))`.
    pub fn coupling_matrices(&self, x: &Vector, i: usize, j: usize) -> Result<(Matrix, Matrix)> {
        self.check_player(i)?;
        self.check_player(j)?;
        self.check_state(x)?;
        let gj = self.input_map(j, x);
        let g_cap = symmetrize(&(&gj * &self.r_diag_inv[j] * gj.transpose()));
        let g_pair = symmetrize(&(&gj * &self.r_coupled[i][j] * gj.transpose()));
        Ok((g_cap, g_pair))
    }

    /// All coupling matrices at `x`, sharing the input-map evaluations.
    pub fn couplings(&self, x: &Vector) -> Couplings {
        let players = self.num_players();
        let gs: Vec<Matrix> = (0..players).map(|j| self.input_map(j, x)).collect();
        let g = (0..players)
            .map(|j| symmetrize(&(&gs[j] * &self.r_diag_inv[j] * gs[j].transpose())))
            .collect();
        let g_pair = (0..players)
            .map(|i| {
                (0..players)
                    .map(|j| symmetrize(&(&gs[j] * &self.r_coupled[i][j] * gs[j].transpose())))
                    .collect()
            })
            .collect();
        Couplings { g, g_pair }
    }
}

fn check_len(what: &'static str, player: Option<usize>, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            player,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_square(what: &'static str, player: usize, dim: usize, m: &Matrix) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            what,
            player: Some(player),
            expected: dim * dim,
            found: m.nrows() * m.ncols(),
        });
    }
    Ok(())
}

/// `xdot = A x + sum_i B_i u_i` with the same cost structure.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuadraticGame {
    pub a: Matrix,
    pub b: Vec<Matrix>,
    pub q: Vec<Matrix>,
    /// `r[i][j] = R_ij`.
    pub r: Vec<Vec<Matrix>>,
}

impl LinearQuadraticGame {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_players(&self) -> usize {
        self.b.len()
    }

    /// Lossless conversion: `f(x) = A x`, `g_i(x) = B_i`.
    pub fn to_game(&self) -> Result<GameDefinition> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "A columns",
                player: None,
                expected: n,
                found: self.a.ncols(),
            });
        }
        for (i, b) in self.b.iter().enumerate() {
            check_len("B rows", Some(i), n, b.nrows())?;
        }
        let a = self.a.clone();
        let drift: DriftFn = Arc::new(move |x: &Vector| &a * x);
        let input_maps = self
            .b
            .iter()
            .map(|b| {
                let b = b.clone();
                Arc::new(move |_: &Vector| b.clone()) as InputMapFn
            })
            .collect();
        let control_dims = self.b.iter().map(|b| b.ncols()).collect();
        let mut game = GameDefinition::new(
            n,
            control_dims,
            drift,
            input_maps,
            self.q.clone(),
            self.r.clone(),
        )?;
        let mut stored = self.clone();
        stored.q = game.state_weights.clone();
        stored.r = game.control_weights.clone();
        game.linear = Some(stored);
        Ok(game)
    }
}
