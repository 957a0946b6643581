//! Fixed-step integration of the plant together with the critic, actor and gain-matrix
//! flows.
//!
//! Packed state layout: `[x | W_c1..W_cN | W_a1..W_aN | vec(Gamma_1)..vec(Gamma_N)]`,
//! with each `Gamma_i` stored column-major.
//!
//! The gain saturation indicator is evaluated at the start of each step and held for all
//! four stages. After the step every `Gamma_i` is symmetrized and, if its spectral norm
//! exceeds `Gamma_bar (1 + 1e-9)`, rescaled back onto the bound.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisSet;
use crate::bellman::{
    bellman_error_at, extrapolated_bellman_errors, policy_at, regressor_at, ExtrapolationGrid, PointEval,
    RegressorSample,
};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::game_model::GameDefinition;
use crate::linalg::{min_eigenvalue, spectral_norm, symmetrize, Matrix, Vector};
use crate::update_laws::{
    actor_derivative, critic_flow, gamma_flow, rank_monitor, ActorConfig, ActorInputs, CriticConfig, LearnerState,
    RANK_TOLERANCE,
};

pub const DEFAULT_DT: f64 = 1e-3;
/// Projection slack on `|Gamma| <= Gamma_bar`.
pub const GAMMA_PROJECTION_SLACK: f64 = 1e-9;
/// Runs abort when any `lambda_min(Gamma_i)` falls below this.
pub const GAMMA_COLLAPSE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub x0: Vector,
    pub init: LearnerState,
    pub critic: Vec<CriticConfig>,
    pub actor: Vec<ActorConfig>,
    pub grid: ExtrapolationGrid,
    pub rank_tolerance: f64,
    /// Ideal weights, when known; enables the `Z` diagnostics.
    pub reference_weights: Option<Vec<Vector>>,
}

impl SimulationConfig {
    pub fn validate(&self, game: &GameDefinition, basis: &BasisSet) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("simulation.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid(
                "simulation.t_final",
                format!("must be non-negative, got {}", self.t_final),
            ));
        }
        if self.t_final > 0.0 && self.t_final < self.dt {
            return Err(Error::invalid("simulation.t_final", "must be at least one step long"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("simulation.record_every", "must be at least 1"));
        }
        game.check_state(&self.x0)?;
        let players = game.num_players();
        for (what, len) in [
            ("critic gains", self.critic.len()),
            ("actor gains", self.actor.len()),
            ("initial critic weights", self.init.critic.len()),
            ("initial actor weights", self.init.actor.len()),
            ("initial gain matrices", self.init.gamma.len()),
            ("grid players", self.grid.num_players()),
        ] {
            if len != players {
                return Err(Error::DimensionMismatch {
                    what,
                    player: None,
                    expected: players,
                    found: len,
                });
            }
        }
        for i in 0..players {
            let p = basis.feature_count(i);
            self.critic[i].validate(i, p)?;
            self.actor[i].validate(i)?;
            for (what, w) in [("initial critic weights", &self.init.critic[i]), ("initial actor weights", &self.init.actor[i])] {
                if w.len() != p {
                    return Err(Error::DimensionMismatch {
                        what,
                        player: Some(i),
                        expected: p,
                        found: w.len(),
                    });
                }
            }
            let g = &self.init.gamma[i];
            if g.nrows() != p || g.ncols() != p {
                return Err(Error::DimensionMismatch {
                    what: "initial gain matrix",
                    player: Some(i),
                    expected: p * p,
                    found: g.nrows() * g.ncols(),
                });
            }
        }
        if let Some(w) = &self.reference_weights {
            if w.len() != players || w.iter().enumerate().any(|(i, w)| w.len() != basis.feature_count(i)) {
                return Err(Error::invalid("reference_weights", "shape does not match the basis"));
            }
        }
        Ok(())
    }
}

/// Critic and actor weights drawn uniformly from `[0.1, 1]` per component from one seed;
/// gain matrices start at each player's `gamma_init`.
pub fn seeded_initial_state(basis: &BasisSet, critic: &[CriticConfig], seed: u64) -> LearnerState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let players = basis.num_players();
    let mut draw = |p: usize| Vector::from_fn(p, |_, _| rng.gen_range(0.1..=1.0));
    let critic_w: Vec<Vector> = (0..players).map(|i| draw(basis.feature_count(i))).collect();
    let actor_w: Vec<Vector> = (0..players).map(|i| draw(basis.feature_count(i))).collect();
    LearnerState {
        critic: critic_w,
        actor: actor_w,
        gamma: critic.iter().map(|c| c.gamma_init.clone()).collect(),
    }
}

/// Offsets into the packed state vector.
#[derive(Debug, Clone)]
pub struct Layout {
    n: usize,
    p: Vec<usize>,
    critic_at: Vec<usize>,
    actor_at: Vec<usize>,
    gamma_at: Vec<usize>,
    len: usize,
}

impl Layout {
    pub fn new(state_dim: usize, feature_counts: &[usize]) -> Self {
        let mut at = state_dim;
        let mut take = |size: usize| {
            let start = at;
            at += size;
            start
        };
        let critic_at = feature_counts.iter().map(|&p| take(p)).collect();
        let actor_at = feature_counts.iter().map(|&p| take(p)).collect();
        let gamma_at = feature_counts.iter().map(|&p| take(p * p)).collect();
        Layout {
            n: state_dim,
            p: feature_counts.to_vec(),
            critic_at,
            actor_at,
            gamma_at,
            len: at,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pack(&self, x: &Vector, state: &LearnerState) -> Vector {
        let mut y = Vector::zeros(self.len);
        y.rows_mut(0, self.n).copy_from(x);
        for i in 0..self.p.len() {
            let p = self.p[i];
            y.rows_mut(self.critic_at[i], p).copy_from(&state.critic[i]);
            y.rows_mut(self.actor_at[i], p).copy_from(&state.actor[i]);
            y.rows_mut(self.gamma_at[i], p * p).copy_from_slice(state.gamma[i].as_slice());
        }
        y
    }

    pub fn unpack(&self, y: &Vector) -> (Vector, LearnerState) {
        let x = y.rows(0, self.n).into_owned();
        let players = self.p.len();
        let mut state = LearnerState {
            critic: Vec::with_capacity(players),
            actor: Vec::with_capacity(players),
            gamma: Vec::with_capacity(players),
        };
        for i in 0..players {
            let p = self.p[i];
            state.critic.push(y.rows(self.critic_at[i], p).into_owned());
            state.actor.push(y.rows(self.actor_at[i], p).into_owned());
            state
                .gamma
                .push(Matrix::from_column_slice(p, p, y.rows(self.gamma_at[i], p * p).as_slice()));
        }
        (x, state)
    }

    /// Human-readable name of packed component `k`.
    pub fn component_name(&self, k: usize) -> String {
        if k < self.n {
            return format!("x[{k}]");
        }
        for i in 0..self.p.len() {
            let p = self.p[i];
            if (self.critic_at[i]..self.critic_at[i] + p).contains(&k) {
                return format!("Wc[{i}][{}]", k - self.critic_at[i]);
            }
            if (self.actor_at[i]..self.actor_at[i] + p).contains(&k) {
                return format!("Wa[{i}][{}]", k - self.actor_at[i]);
            }
            if (self.gamma_at[i]..self.gamma_at[i] + p * p).contains(&k) {
                let local = k - self.gamma_at[i];
                return format!("Gamma[{i}][{},{}]", local % p, local / p);
            }
        }
        format!("component {k}")
    }
}

struct Evaluation {
    derivative: Vector,
    controls: Vec<Vector>,
    deltas: Vec<f64>,
    samples: Vec<RegressorSample>,
    grid_max_abs_delta: Vec<f64>,
}

fn evaluate(
    game: &GameDefinition,
    basis: &BasisSet,
    cfg: &SimulationConfig,
    layout: &Layout,
    y: &Vector,
    gamma_active: &[bool],
) -> Result<Evaluation> {
    let (x, state) = layout.unpack(y);
    let players = game.num_players();
    let pt = PointEval::new(game, basis, &x)?;

    let controls: Vec<Vector> = (0..players).map(|j| policy_at(game, &pt, j, &state.actor[j])).collect();
    let xdot = game.evaluate_dynamics(&x, &controls)?;

    let mut samples = Vec::with_capacity(players);
    let mut deltas = Vec::with_capacity(players);
    let mut extrap = Vec::with_capacity(players);
    for i in 0..players {
        let c = &cfg.critic[i];
        let s = regressor_at(&pt, i, &state.actor, &state.gamma[i], c.nu)?;
        deltas.push(bellman_error_at(game, &pt, i, &state.critic[i], &state.actor, &s));
        samples.push(s);
        extrap.push(extrapolated_bellman_errors(
            game,
            i,
            &cfg.grid,
            &state.critic[i],
            &state.actor,
            &state.gamma[i],
            c.nu,
        )?);
    }

    let mut dy = Vector::zeros(layout.len);
    dy.rows_mut(0, layout.n).copy_from(&xdot);
    let inputs = ActorInputs {
        trajectory: &pt,
        samples: &samples,
        grid: &cfg.grid,
        extrap: &extrap,
        critic: &cfg.critic,
        actor: &cfg.actor,
    };
    for i in 0..players {
        let p = layout.p[i];
        let c = &cfg.critic[i];
        let wc_dot = critic_flow(&state.gamma[i], &samples[i], deltas[i], &extrap[i], c);
        let wa_dot = actor_derivative(i, &inputs, &state);
        let g_dot = gamma_flow(&state.gamma[i], &samples[i], c, gamma_active[i]);
        dy.rows_mut(layout.critic_at[i], p).copy_from(&wc_dot);
        dy.rows_mut(layout.actor_at[i], p).copy_from(&wa_dot);
        dy.rows_mut(layout.gamma_at[i], p * p).copy_from_slice(g_dot.as_slice());
    }
    if let Some(k) = dy.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("derivative of {}", layout.component_name(k)),
        });
    }
    let grid_max_abs_delta = extrap
        .iter()
        .map(|e| e.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max))
        .collect();
    Ok(Evaluation {
        derivative: dy,
        controls,
        deltas,
        samples,
        grid_max_abs_delta,
    })
}

fn saturation_flags(cfg: &SimulationConfig, state: &LearnerState) -> Vec<bool> {
    state
        .gamma
        .iter()
        .zip(&cfg.critic)
        .map(|(g, c)| spectral_norm(g) <= c.gamma_bar)
        .collect()
}

/// Time derivative of the packed state. The saturation indicator is taken from the
/// current gain matrices. Time does not enter the flows explicitly.
pub fn coupled_derivative(
    game: &GameDefinition,
    basis: &BasisSet,
    cfg: &SimulationConfig,
    _t: f64,
    packed: &Vector,
) -> Result<Vector> {
    let layout = layout_for(game, basis);
    if packed.len() != layout.len {
        return Err(Error::DimensionMismatch {
            what: "packed state",
            player: None,
            expected: layout.len,
            found: packed.len(),
        });
    }
    let (_, state) = layout.unpack(packed);
    let flags = saturation_flags(cfg, &state);
    Ok(evaluate(game, basis, cfg, &layout, packed, &flags)?.derivative)
}

pub fn layout_for(game: &GameDefinition, basis: &BasisSet) -> Layout {
    let counts: Vec<usize> = (0..basis.num_players()).map(|i| basis.feature_count(i)).collect();
    Layout::new(game.state_dim(), &counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vector,
    pub critic: Vec<Vector>,
    pub actor: Vec<Vector>,
    pub gamma_min_eig: Vec<f64>,
    pub gamma_norm: Vec<f64>,
    /// Trajectory Bellman error per player.
    pub delta: Vec<f64>,
    pub controls: Vec<Vector>,
    /// `|omega_i / rho_i|` along the trajectory.
    pub normalized_regressor_norm: Vec<f64>,
    /// Minimum eigenvalue of the extrapolation information matrix.
    pub rank_min_eig: Vec<f64>,
    /// Largest `|delta_i^k|` over the grid.
    pub grid_max_abs_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub state_dim: usize,
    pub feature_counts: Vec<usize>,
    pub control_dims: Vec<usize>,
    pub samples: Vec<Sample>,
    /// Smallest `lambda_min / M` seen at any step: the observed lower constant.
    pub observed_c_lower: Vec<f64>,
    /// Smallest `lambda_min(Gamma_i)` seen at any step.
    pub observed_gamma_lower: Vec<f64>,
    /// Largest `|Gamma_i|` seen at any step.
    pub observed_gamma_upper: Vec<f64>,
    /// Whether the rank condition held at `t = 0`.
    pub rank_satisfied_at_start: Vec<bool>,
    /// Whether the rank condition held at every step.
    pub rank_satisfied_throughout: Vec<bool>,
    /// `max |Z(t)|` over recorded samples, when reference weights were supplied.
    pub max_z_norm: Option<f64>,
    /// `max |Z(t)|` over the last 10% of the horizon.
    pub ultimate_z_norm: Option<f64>,
    pub steps: usize,
}

impl RunRecord {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("a run record always holds the initial sample")
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..self.state_dim).map(|k| format!("x_{k}")));
        for (i, (&p, &m)) in self.feature_counts.iter().zip(&self.control_dims).enumerate() {
            cols.extend((0..p).map(|k| format!("p{i}_Wc_{k}")));
            cols.extend((0..p).map(|k| format!("p{i}_Wa_{k}")));
            cols.push(format!("p{i}_delta"));
            cols.push(format!("p{i}_lammin_Gamma"));
            cols.push(format!("p{i}_norm_Gamma"));
            cols.extend((0..m).map(|k| format!("p{i}_u_{k}")));
        }
        cols
    }

    /// One row per recorded sample; every float with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header().join(","))?;
        for s in &self.samples {
            let mut row = vec![s.t];
            row.extend(s.x.iter());
            for i in 0..self.feature_counts.len() {
                row.extend(s.critic[i].iter());
                row.extend(s.actor[i].iter());
                row.push(s.delta[i]);
                row.push(s.gamma_min_eig[i]);
                row.push(s.gamma_norm[i]);
                row.extend(s.controls[i].iter());
            }
            let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }
}

/// A run that stopped early; `record` ends with the last finite state.
#[derive(Debug, Clone)]
pub struct Abort {
    pub error: Error,
    pub record: RunRecord,
}

impl std::fmt::Display for Abort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted: {}", self.error)
    }
}

impl std::error::Error for Abort {}

fn z_norm(x: &Vector, state: &LearnerState, reference: &[Vector]) -> f64 {
    let mut sq = x.norm_squared();
    for (i, w) in reference.iter().enumerate() {
        sq += (w - &state.critic[i]).norm_squared();
        sq += (w - &state.actor[i]).norm_squared();
    }
    sq.sqrt()
}

struct Tracker {
    c_lower: Vec<f64>,
    gamma_lower: Vec<f64>,
    gamma_upper: Vec<f64>,
    rank_start: Vec<bool>,
    rank_always: Vec<bool>,
    last_rank: Vec<f64>,
}

impl Tracker {
    fn observe(&mut self, cfg: &SimulationConfig, state: &LearnerState, first: bool) -> Result<()> {
        for i in 0..state.num_players() {
            let r = rank_monitor(i, &cfg.grid, &state.actor, &state.gamma[i], cfg.critic[i].nu, cfg.rank_tolerance)?;
            self.c_lower[i] = self.c_lower[i].min(r.c_lower);
            self.rank_always[i] &= r.satisfied;
            if first {
                self.rank_start[i] = r.satisfied;
            }
            self.last_rank[i] = r.min_eigenvalue;
            let g = &state.gamma[i];
            self.gamma_lower[i] = self.gamma_lower[i].min(min_eigenvalue(g));
            self.gamma_upper[i] = self.gamma_upper[i].max(spectral_norm(g));
        }
        Ok(())
    }
}

struct Recorder<'a> {
    game: &'a GameDefinition,
    basis: &'a BasisSet,
    cfg: &'a SimulationConfig,
    layout: Layout,
    tail_start: f64,
    max_z: f64,
    tail_z: f64,
    tracker: Tracker,
    record: RunRecord,
}

impl Recorder<'_> {
    fn sample(&mut self, t: f64, y: &Vector) -> Result<()> {
        let (x, state) = self.layout.unpack(y);
        let flags = saturation_flags(self.cfg, &state);
        let ev = evaluate(self.game, self.basis, self.cfg, &self.layout, y, &flags)?;
        if let Some(reference) = &self.cfg.reference_weights {
            let z = z_norm(&x, &state, reference);
            self.max_z = self.max_z.max(z);
            if t >= self.tail_start - 1e-12 {
                self.tail_z = self.tail_z.max(z);
            }
        }
        self.record.samples.push(Sample {
            t,
            gamma_min_eig: state.gamma.iter().map(min_eigenvalue).collect(),
            gamma_norm: state.gamma.iter().map(spectral_norm).collect(),
            x,
            critic: state.critic,
            actor: state.actor,
            delta: ev.deltas,
            controls: ev.controls,
            normalized_regressor_norm: ev.samples.iter().map(|s| s.normalized.norm()).collect(),
            rank_min_eig: self.tracker.last_rank.clone(),
            grid_max_abs_delta: ev.grid_max_abs_delta,
        });
        Ok(())
    }

    fn finish(mut self, completed: bool) -> RunRecord {
        let t = &self.tracker;
        self.record.observed_c_lower = t.c_lower.clone();
        self.record.observed_gamma_lower = t.gamma_lower.clone();
        self.record.observed_gamma_upper = t.gamma_upper.clone();
        self.record.rank_satisfied_at_start = t.rank_start.clone();
        self.record.rank_satisfied_throughout = t.rank_always.clone();
        if self.cfg.reference_weights.is_some() {
            self.record.max_z_norm = Some(self.max_z);
            self.record.ultimate_z_norm = completed.then_some(self.tail_z);
        }
        self.record
    }

    /// Stops the run, recording the last finite state if it was not recorded yet.
    fn abort(mut self, error: Error, last_t: f64, last_y: &Vector) -> Abort {
        let recorded = self.record.samples.last().map(|s| s.t);
        if recorded.is_none_or(|t| t < last_t) {
            let _ = self.sample(last_t, last_y);
        }
        Abort {
            error,
            record: self.finish(false),
        }
    }
}

fn as_state_error(e: Error, t: f64) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFiniteState { t, component: context },
        other => other,
    }
}

pub fn run(game: &GameDefinition, basis: &BasisSet, cfg: &SimulationConfig) -> std::result::Result<RunRecord, Abort> {
    let layout = layout_for(game, basis);
    let players = game.num_players();
    let record = RunRecord {
        state_dim: game.state_dim(),
        feature_counts: layout.p.clone(),
        control_dims: game.control_dims().to_vec(),
        samples: Vec::new(),
        observed_c_lower: vec![f64::INFINITY; players],
        observed_gamma_lower: vec![f64::INFINITY; players],
        observed_gamma_upper: vec![0.0; players],
        rank_satisfied_at_start: vec![false; players],
        rank_satisfied_throughout: vec![true; players],
        max_z_norm: None,
        ultimate_z_norm: None,
        steps: 0,
    };
    if let Err(error) = cfg.validate(game, basis) {
        return Err(Abort { error, record });
    }

    let steps = if cfg.t_final == 0.0 {
        0
    } else {
        (cfg.t_final / cfg.dt).round() as usize
    };
    let dt = cfg.dt;
    let mut rec = Recorder {
        game,
        basis,
        cfg,
        tail_start: 0.9 * steps as f64 * dt,
        max_z: 0.0,
        tail_z: 0.0,
        tracker: Tracker {
            c_lower: vec![f64::INFINITY; players],
            gamma_lower: vec![f64::INFINITY; players],
            gamma_upper: vec![0.0; players],
            rank_start: vec![false; players],
            rank_always: vec![true; players],
            last_rank: vec![0.0; players],
        },
        layout,
        record,
    };

    let mut y = rec.layout.pack(&cfg.x0, &cfg.init);
    if let Err(e) = rec.tracker.observe(cfg, &cfg.init, true) {
        return Err(Abort {
            error: e,
            record: rec.finish(false),
        });
    }
    for (i, ok) in rec.tracker.rank_start.iter().enumerate() {
        if !ok {
            log::warn!("player {i}: extrapolation rank condition not satisfied at t = 0");
        }
    }
    if let Err(e) = rec.sample(0.0, &y) {
        return Err(Abort {
            error: as_state_error(e, 0.0),
            record: rec.finish(false),
        });
    }

    for step in 0..steps {
        let t = step as f64 * dt;
        let t_next = (step + 1) as f64 * dt;
        let (_, state) = rec.layout.unpack(&y);
        let flags = saturation_flags(cfg, &state);
        let next = {
            let layout = &rec.layout;
            let stage = |y: &Vector| evaluate(game, basis, cfg, layout, y, &flags).map(|e| e.derivative);
            (|| -> Result<Vector> {
                let k1 = stage(&y)?;
                let k2 = stage(&(&y + &k1 * (0.5 * dt)))?;
                let k3 = stage(&(&y + &k2 * (0.5 * dt)))?;
                let k4 = stage(&(&y + &k3 * dt))?;
                Ok(&y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
            })()
        };
        let next = match next {
            Ok(v) => v,
            Err(e) => return Err(rec.abort(as_state_error(e, t), t, &y)),
        };
        if let Some(k) = next.iter().position(|v| !v.is_finite()) {
            let error = Error::NonFiniteState {
                t: t_next,
                component: rec.layout.component_name(k),
            };
            return Err(rec.abort(error, t, &y));
        }

        let (x, mut state) = rec.layout.unpack(&next);
        for (i, g) in state.gamma.iter_mut().enumerate() {
            let mut sym = symmetrize(g);
            let norm = spectral_norm(&sym);
            let bar = cfg.critic[i].gamma_bar;
            if norm > bar * (1.0 + GAMMA_PROJECTION_SLACK) {
                sym *= bar / norm;
            }
            *g = sym;
        }
        if let Some((i, lam)) = state
            .gamma
            .iter()
            .map(min_eigenvalue)
            .enumerate()
            .find(|(_, lam)| !(*lam >= GAMMA_COLLAPSE))
        {
            let error = Error::GammaCollapse {
                t: t_next,
                player: i,
                min_eigenvalue: lam,
            };
            return Err(rec.abort(error, t, &y));
        }
        let next = rec.layout.pack(&x, &state);
        if let Err(e) = rec.tracker.observe(cfg, &state, false) {
            return Err(rec.abort(as_state_error(e, t_next), t, &y));
        }
        y = next;
        rec.record.steps = step + 1;

        if (step + 1) % cfg.record_every == 0 || step + 1 == steps {
            if let Err(e) = rec.sample(t_next, &y) {
                return Err(rec.abort(as_state_error(e, t_next), t, &y));
            }
        }
    }

    Ok(rec.finish(true))
}

/// Independent runs, fanned out according to `exec`. Results keep the input order.
pub fn run_batch(
    game: &GameDefinition,
    basis: &BasisSet,
    configs: &[SimulationConfig],
    exec: Execution,
) -> Vec<std::result::Result<RunRecord, Abort>> {
    map_slice(exec, configs, |cfg| run(game, basis, cfg))
}

/// Actor-weight error and the resulting policy-error bound along a run.
#[derive(Debug, Clone)]
pub struct PolicyGap {
    pub t: Vec<f64>,
    /// `|W_i - W_ai(t)|` per player.
    pub weight_error: Vec<Vec<f64>>,
    /// `1/2 |R_ii^-1| g_bar_i sigma'_bar_i |W_i - W_ai(t)|`, with the sups taken over the
    /// recorded states.
    pub bound: Vec<Vec<f64>>,
    /// `|u_i*(x) - u_i(x)|` at the recorded states.
    pub actual: Vec<Vec<f64>>,
}

pub fn policy_gap(
    record: &RunRecord,
    oracle_weights: &[Vector],
    game: &GameDefinition,
    basis: &BasisSet,
) -> Result<PolicyGap> {
    let players = record.feature_counts.len();
    if oracle_weights.len() != players {
        return Err(Error::DimensionMismatch {
            what: "oracle weights",
            player: None,
            expected: players,
            found: oracle_weights.len(),
        });
    }
    let mut g_bar = vec![0.0f64; players];
    let mut s_bar = vec![0.0f64; players];
    for s in &record.samples {
        for i in 0..players {
            g_bar[i] = g_bar[i].max(spectral_norm(&game.input_map(i, &s.x)));
            s_bar[i] = s_bar[i].max(spectral_norm(&basis.eval_jacobian(i, &s.x)?));
        }
    }
    let mut gap = PolicyGap {
        t: record.samples.iter().map(|s| s.t).collect(),
        weight_error: vec![Vec::new(); players],
        bound: vec![Vec::new(); players],
        actual: vec![Vec::new(); players],
    };
    for s in &record.samples {
        for i in 0..players {
            let err = &oracle_weights[i] - &s.actor[i];
            let e = err.norm();
            let rinv = game.control_weight_inv(i);
            gap.weight_error[i].push(e);
            gap.bound[i].push(0.5 * spectral_norm(rinv) * g_bar[i] * s_bar[i] * e);
            let du = rinv * (game.input_map(i, &s.x).transpose() * (basis.eval_jacobian(i, &s.x)?.transpose() * err)) * 0.5;
            gap.actual[i].push(du.norm());
        }
    }
    Ok(gap)
}

/// Convenience default: `rank_tolerance` at [`RANK_TOLERANCE`].
pub fn default_rank_tolerance() -> f64 {
    RANK_TOLERANCE
}
