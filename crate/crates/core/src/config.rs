//! JSON scenario documents.
//!
//! Unknown keys are rejected everywhere. Per-player fields accept either one value
//! (shared by every player) or a list with one entry per player.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{polynomial_basis, quadratic_basis, BasisSet, PlayerBasis};
use crate::bellman::{lattice_points, scatter_points, ExtrapolationGrid};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gain_advisor::{AdvisorSetup, CompactSet, EpsBounds, MIN_SAMPLES};
use crate::game_model::{DriftFn, GameDefinition, InputMapFn, LinearQuadraticGame};
use crate::linalg::{matrix_from_rows, max_eigenvalue, min_eigenvalue, Matrix, Vector};
use crate::lq_oracle::{oracle_weights, solve_coupled_riccati, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::polynomial::Polynomial;
use crate::simulator::{seeded_initial_state, SimulationConfig, DEFAULT_DT};
use crate::update_laws::{ActorConfig, CriticConfig, LearnerState, RANK_TOLERANCE};

/// A JSON array is read as `Many`, anything else as `One`. Every `T` used here is an
/// object, so the split is unambiguous, and errors come from the inner type rather than
/// a generic "no variant matched".
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<'de, T: serde::de::DeserializeOwned> Deserialize<'de> for OneOrMany<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(d)?;
        if value.is_array() {
            serde_json::from_value(value).map(OneOrMany::Many).map_err(D::Error::custom)
        } else {
            serde_json::from_value(value).map(OneOrMany::One).map_err(D::Error::custom)
        }
    }
}

impl<T: Clone> OneOrMany<T> {
    pub fn expand(&self, players: usize, field: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); players]),
            OneOrMany::Many(v) if v.len() == players => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::Config(format!(
                "{field}: expected 1 or {players} entries, found {}",
                v.len()
            ))),
        }
    }
}

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub game: GameSpec,
    pub basis: OneOrMany<BasisSpec>,
    pub grid: OneOrMany<GridSpec>,
    pub gains: GainsSpec,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub advisor: AdvisorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    LinearQuadratic {
        a: Rows,
        /// One `n x m_i` matrix per player.
        b: Vec<Rows>,
        q: Vec<Rows>,
        /// `r[i][j] = R_ij`.
        r: Vec<Vec<Rows>>,
    },
    Polynomial {
        state_dim: usize,
        /// One polynomial per state coordinate.
        drift: Vec<Polynomial>,
        /// Per player, an `n x m_i` array of polynomials.
        input_maps: Vec<Vec<Vec<Polynomial>>>,
        q: Vec<Rows>,
        r: Vec<Vec<Rows>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Quadratic,
    Polynomial { degree: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Points(Rows),
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        counts: Vec<usize>,
        #[serde(default = "yes")]
        exclude_origin: bool,
    },
    Scatter {
        lower: Vec<f64>,
        upper: Vec<f64>,
        count: usize,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// `value * I`.
    Scaled(f64),
    Full(Rows),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticSpec {
    pub eta_c1: f64,
    pub eta_c2: f64,
    pub beta: f64,
    pub nu: f64,
    pub gamma_bar: f64,
    pub gamma_init: MatrixSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub critic: OneOrMany<CriticSpec>,
    pub actor: OneOrMany<ActorConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialWeights {
    pub critic: Rows,
    pub actor: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Defaults to all ones.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Defaults to a seeded draw in `[0.1, 1]`.
    #[serde(default)]
    pub initial_weights: Option<InitialWeights>,
    #[serde(default = "default_rank_tolerance")]
    pub rank_tolerance: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn one() -> usize {
    1
}

fn default_rank_tolerance() -> f64 {
    RANK_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// Explicit bounds on every `Z` coordinate.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Symmetric half-widths for the state, critic-error and actor-error coordinates.
    Radii { state: f64, critic: f64, actor: f64 },
    /// Let the compact-set selection build the set from a bound on `|Z(t0)|`.
    Ball { z_init: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisorSpec {
    #[serde(default)]
    pub set: Option<SetSpec>,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub eps_bar: Option<OneOrMany<f64>>,
    #[serde(default)]
    pub eps_bar_prime: Option<OneOrMany<f64>>,
    /// Defaults to `lambda_min(gamma_init)`.
    #[serde(default)]
    pub gamma_lower: Option<OneOrMany<f64>>,
    /// Replaces the sampled lower constant of the rank condition.
    #[serde(default)]
    pub c_lower: Option<OneOrMany<f64>>,
    /// Required for non-LQ games; LQ games use the Riccati oracle.
    #[serde(default)]
    pub kappa_v: Option<f64>,
    #[serde(default)]
    pub ideal_weights: Option<Rows>,
    /// Bound on `|Z(t0)|`; defaults to the value implied by the simulation section.
    #[serde(default)]
    pub z0: Option<f64>,
    #[serde(default)]
    pub execution: Execution,
}

fn default_samples() -> usize {
    MIN_SAMPLES
}

fn default_zeta() -> f64 {
    1.0
}

impl Default for AdvisorSpec {
    fn default() -> Self {
        AdvisorSpec {
            set: None,
            sample_count: default_samples(),
            zeta: default_zeta(),
            eps_bar: None,
            eps_bar_prime: None,
            gamma_lower: None,
            c_lower: None,
            kappa_v: None,
            ideal_weights: None,
            z0: None,
            execution: Execution::default(),
        }
    }
}

fn matrix(rows: &Rows, what: &str) -> Result<Matrix> {
    matrix_from_rows(rows).ok_or_else(|| Error::Config(format!("{what}: rows have different lengths")))
}

fn matrices(list: &[Rows], what: &str) -> Result<Vec<Matrix>> {
    list.iter()
        .enumerate()
        .map(|(i, m)| matrix(m, &format!("{what}[{i}]")))
        .collect()
}

fn weight_matrix(r: &[Vec<Rows>]) -> Result<Vec<Vec<Matrix>>> {
    r.iter()
        .enumerate()
        .map(|(i, row)| matrices(row, &format!("game.r[{i}]")))
        .collect()
}

/// A fully built scenario.
#[derive(Clone)]
pub struct Scenario {
    pub config: Config,
    pub seed: u64,
    pub game: GameDefinition,
    pub lq: Option<LinearQuadraticGame>,
    pub basis: BasisSet,
    pub grid: ExtrapolationGrid,
    pub critic: Vec<CriticConfig>,
    pub actor: Vec<ActorConfig>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn build(self) -> Result<Scenario> {
        let (game, lq) = build_game(&self.game)?;
        let players = game.num_players();
        let n = game.state_dim();
        let basis_specs = self.basis.expand(players, "basis")?;
        let bases = basis_specs
            .iter()
            .map(|b| match b {
                BasisSpec::Quadratic => Ok(quadratic_basis(n)),
                BasisSpec::Polynomial { degree } => polynomial_basis(n, *degree),
            })
            .collect::<Result<Vec<PlayerBasis>>>()?;
        let basis = BasisSet::new(bases)?;

        let grid_specs = self.grid.expand(players, "grid")?;
        let points = grid_specs
            .iter()
            .map(|g| grid_points(g, n))
            .collect::<Result<Vec<_>>>()?;
        let grid = ExtrapolationGrid::new(&game, &basis, points)?;

        let critic = self
            .gains
            .critic
            .expand(players, "gains.critic")?
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let p = basis.feature_count(i);
                let gamma_init = match &c.gamma_init {
                    MatrixSpec::Scaled(v) => Matrix::identity(p, p) * *v,
                    MatrixSpec::Full(rows) => matrix(rows, "gains.critic.gamma_init")?,
                };
                let cfg = CriticConfig {
                    eta_c1: c.eta_c1,
                    eta_c2: c.eta_c2,
                    beta: c.beta,
                    nu: c.nu,
                    gamma_bar: c.gamma_bar,
                    gamma_init,
                };
                cfg.validate(i, p)?;
                Ok(cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let actor = self.gains.actor.expand(players, "gains.actor")?;
        for (i, a) in actor.iter().enumerate() {
            a.validate(i)?;
        }

        Ok(Scenario {
            seed: self.seed,
            config: self,
            game,
            lq,
            basis,
            grid,
            critic,
            actor,
        })
    }
}

fn build_game(spec: &GameSpec) -> Result<(GameDefinition, Option<LinearQuadraticGame>)> {
    match spec {
        GameSpec::LinearQuadratic { a, b, q, r } => {
            let lq = LinearQuadraticGame {
                a: matrix(a, "game.a")?,
                b: matrices(b, "game.b")?,
                q: matrices(q, "game.q")?,
                r: weight_matrix(r)?,
            };
            let game = lq.to_game()?;
            Ok((game, Some(lq)))
        }
        GameSpec::Polynomial {
            state_dim,
            drift,
            input_maps,
            q,
            r,
        } => {
            let n = *state_dim;
            let check = |p: &Polynomial, what: String| -> Result<()> {
                if p.terms.iter().any(|t| t.powers.len() != n) {
                    return Err(Error::Config(format!("{what}: every term needs {n} powers")));
                }
                Ok(())
            };
            if drift.len() != n {
                return Err(Error::Config(format!("game.drift: expected {n} polynomials, found {}", drift.len())));
            }
            for (k, p) in drift.iter().enumerate() {
                check(p, format!("game.drift[{k}]"))?;
            }
            let mut control_dims = Vec::new();
            let mut maps: Vec<InputMapFn> = Vec::new();
            for (i, g) in input_maps.iter().enumerate() {
                if g.len() != n {
                    return Err(Error::Config(format!("game.input_maps[{i}]: expected {n} rows, found {}", g.len())));
                }
                let m = g.first().map_or(0, Vec::len);
                if m == 0 || g.iter().any(|row| row.len() != m) {
                    return Err(Error::Config(format!("game.input_maps[{i}]: rows must be non-empty and equal length")));
                }
                for (rix, row) in g.iter().enumerate() {
                    for (c, p) in row.iter().enumerate() {
                        check(p, format!("game.input_maps[{i}][{rix}][{c}]"))?;
                    }
                }
                control_dims.push(m);
                let g = g.clone();
                maps.push(Arc::new(move |x: &Vector| Matrix::from_fn(n, m, |rr, cc| g[rr][cc].eval(x))));
            }
            let drift = drift.clone();
            let f: DriftFn = Arc::new(move |x: &Vector| Vector::from_fn(n, |k, _| drift[k].eval(x)));
            let game = GameDefinition::new(n, control_dims, f, maps, matrices(q, "game.q")?, weight_matrix(r)?)?;
            Ok((game, None))
        }
    }
}

fn grid_points(spec: &GridSpec, n: usize) -> Result<Vec<Vector>> {
    let pts = match spec {
        GridSpec::Points(rows) => rows
            .iter()
            .map(|r| {
                if r.len() != n {
                    Err(Error::Config(format!("grid.points: expected {n} coordinates, found {}", r.len())))
                } else {
                    Ok(Vector::from_row_slice(r))
                }
            })
            .collect::<Result<Vec<_>>>()?,
        GridSpec::Box {
            lower,
            upper,
            counts,
            exclude_origin,
        } => lattice_points(lower, upper, counts, *exclude_origin)?,
        GridSpec::Scatter { lower, upper, count } => scatter_points(lower, upper, *count)?,
    };
    if pts.is_empty() {
        return Err(Error::Config("grid: no extrapolation points".into()));
    }
    if pts.iter().any(|p| p.len() != n) {
        return Err(Error::Config(format!("grid: points must have {n} coordinates")));
    }
    Ok(pts)
}

/// Ideal weights and the quadratic growth bound, from the oracle when the game is LQ.
pub struct Reference {
    pub weights: Vec<Vector>,
    pub kappa_v: f64,
}

impl Scenario {
    pub fn players(&self) -> usize {
        self.game.num_players()
    }

    /// Oracle weights when the game is LQ and the basis is quadratic.
    pub fn oracle_reference(&self) -> Result<Option<Reference>> {
        let Some(lq) = &self.lq else { return Ok(None) };
        let sol = solve_coupled_riccati(lq, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        let weights = match oracle_weights(&sol, &self.basis) {
            Ok(w) => w,
            Err(Error::BasisMismatch(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let n = lq.state_dim();
        let sum = sol.p.iter().fold(Matrix::zeros(n, n), |acc, p| acc + p);
        Ok(Some(Reference {
            weights,
            kappa_v: max_eigenvalue(&sum).max(0.0),
        }))
    }

    /// Oracle weights if available, else the user-supplied ideal weights.
    pub fn reference(&self) -> Result<Option<Reference>> {
        if let Some(r) = self.oracle_reference()? {
            return Ok(Some(r));
        }
        let adv = &self.config.advisor;
        match (&adv.ideal_weights, adv.kappa_v) {
            (Some(rows), Some(kappa_v)) => {
                let weights: Vec<Vector> = rows.iter().map(|r| Vector::from_row_slice(r)).collect();
                if weights.len() != self.players()
                    || weights.iter().enumerate().any(|(i, w)| w.len() != self.basis.feature_count(i))
                {
                    return Err(Error::Config("advisor.ideal_weights: shape does not match the basis".into()));
                }
                Ok(Some(Reference { weights, kappa_v }))
            }
            _ => Ok(None),
        }
    }

    pub fn initial_state(&self) -> Result<LearnerState> {
        let sim = &self.config.simulation;
        match &sim.initial_weights {
            None => Ok(seeded_initial_state(&self.basis, &self.critic, self.seed)),
            Some(w) => {
                let players = self.players();
                if w.critic.len() != players || w.actor.len() != players {
                    return Err(Error::Config(format!(
                        "simulation.initial_weights: expected {players} critic and actor vectors"
                    )));
                }
                Ok(LearnerState {
                    critic: w.critic.iter().map(|r| Vector::from_row_slice(r)).collect(),
                    actor: w.actor.iter().map(|r| Vector::from_row_slice(r)).collect(),
                    gamma: self.critic.iter().map(|c| c.gamma_init.clone()).collect(),
                })
            }
        }
    }

    pub fn x0(&self) -> Vector {
        match &self.config.simulation.x0 {
            Some(x) => Vector::from_row_slice(x),
            None => Vector::from_element(self.game.state_dim(), 1.0),
        }
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig> {
        let sim = &self.config.simulation;
        let reference = self.reference()?.map(|r| r.weights);
        let cfg = SimulationConfig {
            t_final: sim.t_final,
            dt: sim.dt,
            record_every: sim.record_every,
            x0: self.x0(),
            init: self.initial_state()?,
            critic: self.critic.clone(),
            actor: self.actor.clone(),
            grid: self.grid.clone(),
            rank_tolerance: sim.rank_tolerance,
            reference_weights: reference,
        };
        cfg.validate(&self.game, &self.basis)?;
        Ok(cfg)
    }

    /// `|Z(t0)|` for the configured initial condition and reference weights.
    pub fn initial_z_norm(&self, weights: &[Vector]) -> Result<f64> {
        let init = self.initial_state()?;
        let mut sq = self.x0().norm_squared();
        for (i, w) in weights.iter().enumerate() {
            sq += (w - &init.critic[i]).norm_squared() + (w - &init.actor[i]).norm_squared();
        }
        Ok(sq.sqrt())
    }

    /// The advisor inputs. `reference` must come from [`Scenario::reference`].
    pub fn advisor_setup<'a>(&'a self, reference: &'a Reference) -> Result<AdvisorSetup<'a>> {
        let adv = &self.config.advisor;
        let players = self.players();
        let zeros = OneOrMany::One(0.0);
        let eps = EpsBounds {
            eps_bar: adv.eps_bar.as_ref().unwrap_or(&zeros).expand(players, "advisor.eps_bar")?,
            eps_bar_prime: adv
                .eps_bar_prime
                .as_ref()
                .unwrap_or(&zeros)
                .expand(players, "advisor.eps_bar_prime")?,
        };
        let gamma_lower = match &adv.gamma_lower {
            Some(g) => g.expand(players, "advisor.gamma_lower")?,
            None => self.critic.iter().map(|c| min_eigenvalue(&c.gamma_init)).collect(),
        };
        let c_lower_override = adv
            .c_lower
            .as_ref()
            .map(|c| c.expand(players, "advisor.c_lower"))
            .transpose()?;
        let z0 = match adv.z0 {
            Some(z) => z,
            None => self.initial_z_norm(&reference.weights)?,
        };
        Ok(AdvisorSetup {
            game: &self.game,
            basis: &self.basis,
            critic: &self.critic,
            actor: &self.actor,
            grid: &self.grid,
            ideal_weights: &reference.weights,
            kappa_v: reference.kappa_v,
            gamma_lower,
            eps,
            zeta: adv.zeta,
            c_lower_override,
            z0,
            seed: self.seed,
            exec: adv.execution,
        })
    }

    /// The configured compact set, or `None` when the set comes from the selection
    /// procedure.
    pub fn compact_set(&self) -> Result<Option<CompactSet>> {
        let adv = &self.config.advisor;
        let n = self.game.state_dim();
        let p = self.basis.total_features();
        match &adv.set {
            None => Err(Error::Config("advisor.set is required for check-gains".into())),
            Some(SetSpec::Ball { .. }) => Ok(None),
            Some(SetSpec::Box { lower, upper }) => {
                CompactSet::new(lower.clone(), upper.clone(), adv.sample_count).map(Some)
            }
            Some(SetSpec::Radii { state, critic, actor }) => {
                let mut upper = vec![*state; n];
                upper.extend(std::iter::repeat_n(*critic, p));
                upper.extend(std::iter::repeat_n(*actor, p));
                let lower = upper.iter().map(|v| -v).collect();
                CompactSet::new(lower, upper, adv.sample_count).map(Some)
            }
        }
    }
}
