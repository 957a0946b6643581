//! Constant ledger for the uniform-ultimate-boundedness result, the sufficient gain
//! conditions, and the iterative compact-set selection.
//!
//! Suprema over the compact set are replaced by maxima over a deterministic sample:
//! a Halton sequence with a seeded Cranley-Patterson rotation, plus the box corners when
//! the box has at most [`CORNER_LIMIT_DIM`] coordinates. Longer prefixes of the sequence
//! contain shorter ones, so sampled suprema never decrease as `sample_count` grows.
//!
//! `Z` coordinates are ordered `[x | Wc~_1..Wc~_N | Wa~_1..Wa~_N]`. Only `x` and the
//! actor errors enter the constants; the critic-error coordinates are carried for the
//! set geometry.
//!
//! Constant numbering follows the source analysis: `iota6` and `iota7` do not exist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::bellman::{regressor_at, ExtrapolationGrid, PointEval};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::game_model::GameDefinition;
use crate::linalg::{halton_point, min_eigenvalue, spectral_norm, Matrix, Vector, MAX_HALTON_DIM};
use crate::update_laws::{ActorConfig, CriticConfig};

/// Smallest accepted `sample_count`.
pub const MIN_SAMPLES: usize = 1000;
/// Box corners are added to the sample when the box has at most this many coordinates.
pub const CORNER_LIMIT_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sample_count: usize,
}

impl CompactSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, sample_count: usize) -> Result<Self> {
        let set = CompactSet {
            lower,
            upper,
            sample_count,
        };
        set.validate()?;
        Ok(set)
    }

    /// The cube `[-r, r]^dim` circumscribing the ball of radius `r`.
    pub fn cube(dim: usize, radius: f64, sample_count: usize) -> Result<Self> {
        Self::new(vec![-radius; dim], vec![radius; dim], sample_count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::EmptySampleSet);
        }
        if self.sample_count < MIN_SAMPLES {
            return Err(Error::invalid(
                "advisor.sample_count",
                format!("must be at least {MIN_SAMPLES}, got {}", self.sample_count),
            ));
        }
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::invalid("advisor.set", "lower and upper bounds must be non-empty and of equal length"));
        }
        for (k, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::invalid(
                    "advisor.set",
                    format!("coordinate {k}: need finite lower < upper, got [{l}, {u}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Deterministic sample points for `seed`.
    pub fn sample_points(&self, seed: u64) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let map = |u: &[f64]| -> Vec<f64> {
            u.iter()
                .enumerate()
                .map(|(k, &u)| self.lower[k] + u * (self.upper[k] - self.lower[k]))
                .collect()
        };
        let mut points = Vec::with_capacity(self.sample_count + (1 << dim.min(CORNER_LIMIT_DIM)));
        if dim <= CORNER_LIMIT_DIM {
            for mask in 0u32..(1u32 << dim) {
                let u: Vec<f64> = (0..dim).map(|k| f64::from((mask >> k) & 1)).collect();
                points.push(map(&u));
            }
        }
        for index in 1..=self.sample_count as u64 {
            let u: Vec<f64> = if dim <= MAX_HALTON_DIM {
                halton_point(index, dim)
                    .iter()
                    .zip(&shift)
                    .map(|(h, s)| (h + s).fract())
                    .collect()
            } else {
                (0..dim).map(|_| rng.gen::<f64>()).collect()
            };
            points.push(map(&u));
        }
        points
    }
}

/// Per-player bounds on the reconstruction error and its gradient. Zero for exact bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsBounds {
    pub eps_bar: Vec<f64>,
    pub eps_bar_prime: Vec<f64>,
}

impl EpsBounds {
    pub fn zero(players: usize) -> Self {
        EpsBounds {
            eps_bar: vec![0.0; players],
            eps_bar_prime: vec![0.0; players],
        }
    }
}

/// Everything the constant ledger depends on besides the compact set.
#[derive(Clone)]
pub struct AdvisorSetup<'a> {
    pub game: &'a GameDefinition,
    pub basis: &'a BasisSet,
    pub critic: &'a [CriticConfig],
    pub actor: &'a [ActorConfig],
    pub grid: &'a ExtrapolationGrid,
    /// Ideal weights `W_i`.
    pub ideal_weights: &'a [Vector],
    /// Quadratic growth bound on `sum_i V_i*`.
    pub kappa_v: f64,
    /// Lower bound `Gamma_i` on the gain matrices, per player.
    pub gamma_lower: Vec<f64>,
    pub eps: EpsBounds,
    pub zeta: f64,
    /// Replaces the sampled `c_x` when set.
    pub c_lower_override: Option<Vec<f64>>,
    /// Bound on `|Z(t0)|`, used for `Z_bar`.
    pub z0: f64,
    pub seed: u64,
    pub exec: Execution,
}

impl AdvisorSetup<'_> {
    /// Dimension of `Z`: `n + 2 sum_i p_i`.
    pub fn z_dim(&self) -> usize {
        self.game.state_dim() + 2 * self.basis.total_features()
    }

    fn validate(&self) -> Result<()> {
        let players = self.game.num_players();
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(Error::invalid("advisor.zeta", format!("must be positive, got {}", self.zeta)));
        }
        if !(self.kappa_v >= 0.0 && self.kappa_v.is_finite()) {
            return Err(Error::invalid("advisor.kappa_v", "must be non-negative and finite"));
        }
        if !(self.z0 >= 0.0 && self.z0.is_finite()) {
            return Err(Error::invalid("advisor.z0", "must be non-negative and finite"));
        }
        let lens = [
            ("critic gains", self.critic.len()),
            ("actor gains", self.actor.len()),
            ("ideal weights", self.ideal_weights.len()),
            ("gamma_lower", self.gamma_lower.len()),
            ("eps_bar", self.eps.eps_bar.len()),
            ("eps_bar_prime", self.eps.eps_bar_prime.len()),
            ("grid players", self.grid.num_players()),
        ];
        for (what, len) in lens {
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
            if self.ideal_weights[i].len() != self.basis.feature_count(i) {
                return Err(Error::DimensionMismatch {
                    what: "ideal weights",
                    player: Some(i),
                    expected: self.basis.feature_count(i),
                    found: self.ideal_weights[i].len(),
                });
            }
            let gl = self.gamma_lower[i];
            if !(gl > 0.0 && gl <= self.critic[i].gamma_bar) {
                return Err(Error::invalid(
                    format!("advisor.gamma_lower[{i}]"),
                    format!("must lie in (0, gamma_bar], got {gl}"),
                ));
            }
            if self.eps.eps_bar[i] < 0.0 || self.eps.eps_bar_prime[i] < 0.0 {
                return Err(Error::invalid("advisor.eps", "bounds must be non-negative"));
            }
            if self.grid.is_empty(i) {
                return Err(Error::invalid("grid", format!("player {i} has no extrapolation points")));
            }
        }
        if let Some(c) = &self.c_lower_override {
            if c.len() != players || c.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("advisor.c_lower", "need one non-negative value per player"));
            }
        }
        Ok(())
    }

    /// `v_lower(r) = a r^2` with `a = 1/2 min(1, min_i 1/Gamma_bar_i)`.
    pub fn v_lower_coeff(&self) -> f64 {
        let m = self.critic.iter().map(|c| 1.0 / c.gamma_bar).fold(1.0, f64::min);
        0.5 * m
    }

    /// `v_upper(r) = b r^2` with `b = kappa_V + 1/2 max_i 1/Gamma_lower_i + 1/2`.
    pub fn v_upper_coeff(&self) -> f64 {
        let m = self.gamma_lower.iter().map(|g| 1.0 / g).fold(0.0, f64::max);
        self.kappa_v + 0.5 * m + 0.5
    }

    /// `v_lower^-1(v_upper(r))`.
    pub fn inflate(&self, r: f64) -> f64 {
        r * (self.v_upper_coeff() / self.v_lower_coeff()).sqrt()
    }
}

/// Verdicts and margins (`lhs - rhs`) of the three sufficient gain conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerConditions {
    pub ok: [bool; 3],
    pub margins: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainConditions {
    pub per_player: Vec<PlayerConditions>,
    /// Each condition holds for every player.
    pub all: [bool; 3],
}

impl GainConditions {
    pub fn satisfied(&self) -> bool {
        self.all.iter().all(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBoundsReport {
    pub iota1: f64,
    pub iota2: f64,
    pub iota3: f64,
    pub iota4: f64,
    pub iota5: Vec<f64>,
    pub iota8: f64,
    pub iota9: Vec<f64>,
    pub iota10: Vec<f64>,
    pub v_l: f64,
    pub iota: f64,
    /// `sqrt(iota / v_l)`.
    pub radius: f64,
    pub z_bar: f64,
    pub zeta: f64,
    pub l_f: f64,
    pub eps_bar: Vec<f64>,
    pub eps_bar_prime: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub sigma_bar: Vec<f64>,
    pub sigma_bar_prime: Vec<f64>,
    pub g_bar: Vec<f64>,
    pub q_lower: Vec<f64>,
    pub c_lower: Vec<f64>,
    /// `"sampled"` or `"override"`.
    pub c_lower_source: String,
    pub gamma_lower: Vec<f64>,
    pub delta_bound: Vec<f64>,
    pub delta_grid_bound: Vec<f64>,
    pub kappa_v: f64,
    pub diameter: f64,
    pub diameter_ok: bool,
    pub conditions: GainConditions,
    pub conditions_ok: [bool; 3],
    pub sample_count: usize,
    pub seed: u64,
}

/// `1/2 min_i(q_i / 2, eta_c2i c_i / 4, (2 eta_a1i + eta_a2i) / 8)`.
pub fn v_l(q_lower: &[f64], eta_c2_c: &[f64], actor_sum: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..q_lower.len() {
        m = m.min(q_lower[i] / 2.0).min(eta_c2_c[i] / 4.0).min(actor_sum[i] / 8.0);
    }
    0.5 * m
}

/// Evaluates the three sufficient conditions from a report and the gains.
pub fn check_gain_conditions(report: &GainBoundsReport, critic: &[CriticConfig], actor: &[ActorConfig]) -> GainConditions {
    let n = critic.len() as f64;
    let mut per_player = Vec::with_capacity(critic.len());
    let mut all = [true; 3];
    for i in 0..critic.len() {
        let i5 = report.iota5[i];
        let margins = [
            report.q_lower[i] - 2.0 * i5,
            critic[i].eta_c2 * report.c_lower[i] - (2.0 * i5 + report.iota2 * report.zeta * n + actor[i].eta_a1),
            2.0 * actor[i].eta_a1 + actor[i].eta_a2 - (4.0 * report.iota8 + 2.0 * report.iota2 * n / report.zeta),
        ];
        let mut ok = margins.map(|m| m > 0.0);
        if report.c_lower[i] <= 0.0 {
            ok[1] = false;
        }
        for k in 0..3 {
            all[k] &= ok[k];
        }
        per_player.push(PlayerConditions { ok, margins });
    }
    GainConditions { per_player, all }
}

#[derive(Debug, Clone)]
struct Partial {
    l_f: f64,
    iota1: f64,
    iota2: f64,
    iota3: f64,
    iota4: f64,
    sigma_bar: Vec<f64>,
    sigma_bar_prime: Vec<f64>,
    g_bar: Vec<f64>,
    delta: Vec<f64>,
    c_lower: Vec<f64>,
}

impl Partial {
    fn merge(mut self, o: &Partial) -> Partial {
        self.l_f = self.l_f.max(o.l_f);
        self.iota1 = self.iota1.max(o.iota1);
        self.iota2 = self.iota2.max(o.iota2);
        self.iota3 = self.iota3.max(o.iota3);
        self.iota4 = self.iota4.max(o.iota4);
        for i in 0..self.sigma_bar.len() {
            self.sigma_bar[i] = self.sigma_bar[i].max(o.sigma_bar[i]);
            self.sigma_bar_prime[i] = self.sigma_bar_prime[i].max(o.sigma_bar_prime[i]);
            self.g_bar[i] = self.g_bar[i].max(o.g_bar[i]);
            self.delta[i] = self.delta[i].max(o.delta[i]);
            self.c_lower[i] = self.c_lower[i].min(o.c_lower[i]);
        }
        self
    }
}

/// `|Delta_i|` bound at one point from the norm bounds on `eps'`.
fn delta_bound(pt: &PointEval, w: &[Vector], ep: &[f64], i: usize) -> f64 {
    let players = w.len();
    let wi_s = pt.sigma_prime[i].transpose() * &w[i];
    let mut d = 0.0;
    for j in 0..players {
        let gj = &pt.couplings.g[j];
        let gij = &pt.couplings.g_pair[i][j];
        let wj_s = pt.sigma_prime[j].transpose() * &w[j];
        d += 0.5 * ((gj * &wi_s).norm() + (gij * &wj_s).norm()) * ep[j];
        d += 0.5 * (gj * &wj_s).norm() * ep[i];
        d += 0.5 * ep[i] * spectral_norm(gj) * ep[j];
        d += 0.25 * ep[j] * ep[j] * spectral_norm(gij);
    }
    d
}

/// `|a^T| = |a|` for the row factor `(3 W_j^T s_j' G_ij - 2 W_i^T s_i' G_j) s_j'^T`.
fn cross_row(pt: &PointEval, w: &[Vector], i: usize, j: usize) -> Vector {
    let wj_s = pt.sigma_prime[j].transpose() * &w[j];
    let wi_s = pt.sigma_prime[i].transpose() * &w[i];
    let row = &pt.couplings.g_pair[i][j] * wj_s * 3.0 - &pt.couplings.g[j] * wi_s * 2.0;
    &pt.sigma_prime[j] * row
}

fn sample_partial(
    setup: &AdvisorSetup<'_>,
    grid_rows: &[Vec<Vec<Vector>>],
    z: &[f64],
) -> Result<Partial> {
    let game = setup.game;
    let basis = setup.basis;
    let players = game.num_players();
    let n = game.state_dim();
    let w = setup.ideal_weights;
    let ep = &setup.eps.eps_bar_prime;
    let x = Vector::from_row_slice(&z[..n]);
    let mut at = n + basis.total_features();
    let mut actor = Vec::with_capacity(players);
    for i in 0..players {
        let p = basis.feature_count(i);
        actor.push(&w[i] - Vector::from_row_slice(&z[at..at + p]));
        at += p;
    }
    let pt = PointEval::new(game, basis, &x)?;
    let xn = x.norm();
    let l_f = if xn > 0.0 { pt.f.norm() / xn } else { 0.0 };

    let mut part = Partial {
        l_f,
        iota1: 0.0,
        iota2: 0.0,
        iota3: 0.0,
        iota4: 0.0,
        sigma_bar: vec![0.0; players],
        sigma_bar_prime: vec![0.0; players],
        g_bar: vec![0.0; players],
        delta: vec![0.0; players],
        c_lower: vec![f64::INFINITY; players],
    };

    for i in 0..players {
        part.sigma_bar[i] = basis.eval_features(i, &x)?.norm();
        part.sigma_bar_prime[i] = spectral_norm(&pt.sigma_prime[i]);
        part.g_bar[i] = spectral_norm(&pt.input_maps[i]);
        part.delta[i] = delta_bound(&pt, w, ep, i);
    }

    for i in 0..players {
        let c = &setup.critic[i];
        let p = basis.feature_count(i);
        let wi_s = pt.sigma_prime[i].transpose() * &w[i];
        let low = Matrix::identity(p, p) * setup.gamma_lower[i];
        let high = Matrix::identity(p, p) * c.gamma_bar;
        let traj = regressor_at(&pt, i, &actor, &low, c.nu)?;
        let m = setup.grid.len(i) as f64;
        let grid_pts = setup.grid.points(i);
        let grid_samples = grid_pts
            .iter()
            .map(|g| regressor_at(g, i, &actor, &low, c.nu))
            .collect::<Result<Vec<_>>>()?;

        for j in 0..players {
            let gj = &pt.couplings.g[j];
            let gij = &pt.couplings.g_pair[i][j];
            let a = &pt.sigma_prime[j] * (gj * &wi_s) * 0.5;
            let eps_part = 0.5 * ep[i] * spectral_norm(&(gj * pt.sigma_prime[j].transpose()));
            part.iota1 = part.iota1.max(a.norm() + eps_part);
            part.iota4 = part.iota4.max(spectral_norm(
                &(&pt.sigma_prime[j] * gij * pt.sigma_prime[j].transpose()),
            ));

            let mut cross = &traj.normalized * cross_row(&pt, w, i, j).transpose() * (c.eta_c1 / 4.0);
            for (k, s) in grid_samples.iter().enumerate() {
                let row = &grid_rows[i][k][j];
                cross += &s.normalized * row.transpose() * (c.eta_c2 / (4.0 * m));
            }
            part.iota2 = part.iota2.max(spectral_norm(&cross));
        }

        let mut info = Matrix::zeros(p, p);
        for g in grid_pts {
            let s = regressor_at(g, i, &actor, &high, c.nu)?;
            info += (&s.omega * s.omega.transpose()) / s.rho;
        }
        part.c_lower[i] = min_eigenvalue(&info).max(0.0) / m;
    }

    let mut i3 = 0.0;
    for i in 0..players {
        let wi_s = (pt.sigma_prime[i].transpose() * &w[i]).norm();
        for j in 0..players {
            let wj_s = (pt.sigma_prime[j].transpose() * &w[j]).norm();
            i3 += 0.5 * (wi_s + ep[i]) * spectral_norm(&pt.couplings.g[j]) * ep[j];
            i3 += 0.25 * (2.0 * wj_s + ep[j]) * spectral_norm(&pt.couplings.g_pair[i][j]) * ep[j];
        }
    }
    part.iota3 = i3;
    Ok(part)
}

/// Samples the constant ledger over `set` and evaluates the gain conditions.
pub fn estimate_constants(setup: &AdvisorSetup<'_>, set: &CompactSet) -> Result<GainBoundsReport> {
    set.validate()?;
    setup.validate()?;
    if set.dim() != setup.z_dim() {
        return Err(Error::DimensionMismatch {
            what: "compact set coordinates",
            player: None,
            expected: setup.z_dim(),
            found: set.dim(),
        });
    }
    let game = setup.game;
    let players = game.num_players();
    let w = setup.ideal_weights;

    // Weight-independent rows of the extrapolation part of iota2.
    let grid_rows: Vec<Vec<Vec<Vector>>> = (0..players)
        .map(|i| {
            setup
                .grid
                .points(i)
                .iter()
                .map(|g| (0..players).map(|j| cross_row(g, w, i, j)).collect())
                .collect()
        })
        .collect();

    let points = set.sample_points(setup.seed);
    let partials = map_indexed(setup.exec, points.len(), |k| sample_partial(setup, &grid_rows, &points[k]));
    let mut acc: Option<Partial> = None;
    for p in partials {
        let p = p?;
        acc = Some(match acc {
            None => p,
            Some(a) => a.merge(&p),
        });
    }
    let acc = acc.ok_or(Error::EmptySampleSet)?;

    let ep = &setup.eps.eps_bar_prime;
    let delta_grid_bound: Vec<f64> = (0..players)
        .map(|i| {
            setup
                .grid
                .points(i)
                .iter()
                .map(|g| ep[i] * g.f.norm() + delta_bound(g, w, ep, i))
                .fold(0.0, f64::max)
        })
        .collect();

    let (c_lower, c_lower_source) = match &setup.c_lower_override {
        Some(c) => (c.clone(), "override".to_string()),
        None => (acc.c_lower.clone(), "sampled".to_string()),
    };
    let sqrt_ng: Vec<f64> = (0..players)
        .map(|i| (setup.critic[i].nu * setup.gamma_lower[i]).sqrt())
        .collect();
    let w_bar: Vec<f64> = w.iter().map(|v| v.norm()).collect();
    let q_lower: Vec<f64> = (0..players).map(|i| game.q_min(i)).collect();

    let iota5: Vec<f64> = (0..players)
        .map(|i| setup.critic[i].eta_c1 * acc.l_f * ep[i] / (4.0 * sqrt_ng[i]))
        .collect();
    let iota8: f64 = (0..players)
        .map(|i| {
            let c = &setup.critic[i];
            (c.eta_c1 + c.eta_c2) * w_bar[i] * acc.iota4 / (8.0 * sqrt_ng[i])
        })
        .sum();
    let nf = players as f64;
    let iota9: Vec<f64> = (0..players)
        .map(|i| acc.iota1 * nf + (setup.actor[i].eta_a2 + iota8) * w_bar[i])
        .collect();
    let iota10: Vec<f64> = (0..players)
        .map(|i| {
            let c = &setup.critic[i];
            (c.eta_c1 * acc.delta[i] + c.eta_c2 * delta_grid_bound[i]) / (2.0 * sqrt_ng[i])
        })
        .collect();

    let eta_c2_c: Vec<f64> = (0..players).map(|i| setup.critic[i].eta_c2 * c_lower[i]).collect();
    let actor_sum: Vec<f64> = setup.actor.iter().map(|a| 2.0 * a.eta_a1 + a.eta_a2).collect();
    let vl = v_l(&q_lower, &eta_c2_c, &actor_sum);
    let mut iota = acc.iota3;
    for i in 0..players {
        iota += if iota9[i] == 0.0 { 0.0 } else { 2.0 * iota9[i] * iota9[i] / actor_sum[i] };
        iota += if iota10[i] == 0.0 { 0.0 } else { iota10[i] * iota10[i] / eta_c2_c[i] };
    }
    let radius = if iota == 0.0 {
        0.0
    } else if vl > 0.0 {
        (iota / vl).sqrt()
    } else {
        f64::INFINITY
    };
    let z_bar = setup.inflate(setup.z0.max(radius));
    let diameter = set.diameter();

    let mut report = GainBoundsReport {
        iota1: acc.iota1,
        iota2: acc.iota2,
        iota3: acc.iota3,
        iota4: acc.iota4,
        iota5,
        iota8,
        iota9,
        iota10,
        v_l: vl,
        iota,
        radius,
        z_bar,
        zeta: setup.zeta,
        l_f: acc.l_f,
        eps_bar: setup.eps.eps_bar.clone(),
        eps_bar_prime: ep.clone(),
        w_bar,
        sigma_bar: acc.sigma_bar,
        sigma_bar_prime: acc.sigma_bar_prime,
        g_bar: acc.g_bar,
        q_lower,
        c_lower,
        c_lower_source,
        gamma_lower: setup.gamma_lower.clone(),
        delta_bound: acc.delta,
        delta_grid_bound,
        kappa_v: setup.kappa_v,
        diameter,
        diameter_ok: radius <= 0.5 * diameter,
        conditions: GainConditions {
            per_player: Vec::new(),
            all: [false; 3],
        },
        conditions_ok: [false; 3],
        sample_count: set.sample_count,
        seed: setup.seed,
    };
    report.conditions = check_gain_conditions(&report, setup.critic, setup.actor);
    report.conditions_ok = report.conditions.all;
    Ok(report)
}

impl GainBoundsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        fn list(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
            format!("[{}]", items.join(", "))
        }
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k:<18} {v}\n"));
        line("iota1", format!("{:.6e}", self.iota1));
        line("iota2", format!("{:.6e}", self.iota2));
        line("iota3", format!("{:.6e}", self.iota3));
        line("iota4", format!("{:.6e}", self.iota4));
        line("iota5", list(&self.iota5));
        line("iota8", format!("{:.6e}", self.iota8));
        line("iota9", list(&self.iota9));
        line("iota10", list(&self.iota10));
        line("v_l", format!("{:.6e}", self.v_l));
        line("iota", format!("{:.6e}", self.iota));
        line("sqrt(iota/v_l)", format!("{:.6e}", self.radius));
        line("Z_bar", format!("{:.6e}", self.z_bar));
        line("zeta", format!("{:.6e}", self.zeta));
        line("L_f", format!("{:.6e}", self.l_f));
        line("q_lower", list(&self.q_lower));
        line(&format!("c_lower ({})", self.c_lower_source), list(&self.c_lower));
        line("Gamma_lower", list(&self.gamma_lower));
        line("W_bar", list(&self.w_bar));
        line("sigma_bar", list(&self.sigma_bar));
        line("sigma_bar_prime", list(&self.sigma_bar_prime));
        line("g_bar", list(&self.g_bar));
        line("eps_bar", list(&self.eps_bar));
        line("eps_bar_prime", list(&self.eps_bar_prime));
        line("kappa_V", format!("{:.6e}", self.kappa_v));
        line("diam(Z)", format!("{:.6e}", self.diameter));
        line("diameter_ok", self.diameter_ok.to_string());
        line("samples", format!("{} (seed {})", self.sample_count, self.seed));
        for (i, p) in self.conditions.per_player.iter().enumerate() {
            for k in 0..3 {
                s.push_str(&format!(
                    "player {i} condition {}: {} (margin {:+.6e})\n",
                    k + 1,
                    if p.ok[k] { "ok" } else { "FAILED" },
                    p.margins[k]
                ));
            }
        }
        s
    }
}

/// Outcome of the compact-set selection.
#[derive(Debug, Clone)]
pub struct Algorithm1Outcome {
    pub set: CompactSet,
    pub report: GainBoundsReport,
    pub iterations: u8,
    /// The radius kept growing: a richer basis is required to shrink `L_f eps'`.
    pub needs_richer_basis: bool,
}

/// Compact-set selection starting from a bound `z_init` on `|Z(t0)|`.
pub fn algorithm1(setup: &AdvisorSetup<'_>, z_init: f64, sample_count: usize) -> Result<Algorithm1Outcome> {
    let dim = setup.z_dim();
    algorithm1_with(z_init, |r| setup.inflate(r), |radius, _| {
        let set = CompactSet::cube(dim, radius, sample_count)?;
        let report = estimate_constants(setup, &set)?;
        Ok((set, report))
    })
}

/// [`algorithm1`] with the bound evaluation injected: `evaluate(radius, iteration)`
/// returns the set of that radius and its report.
pub fn algorithm1_with<I, E>(z_init: f64, inflate: I, mut evaluate: E) -> Result<Algorithm1Outcome>
where
    I: Fn(f64) -> f64,
    E: FnMut(f64, u8) -> Result<(CompactSet, GainBoundsReport)>,
{
    if !(z_init > 0.0 && z_init.is_finite()) {
        return Err(Error::invalid("z_init", format!("must be positive, got {z_init}")));
    }
    let (set1, rep1) = evaluate(inflate(z_init), 1)?;
    if rep1.radius <= z_init {
        return Ok(Algorithm1Outcome {
            set: set1,
            report: rep1,
            iterations: 1,
            needs_richer_basis: false,
        });
    }
    let r1 = rep1.radius;
    if !r1.is_finite() {
        return Err(Error::invalid("gains", "v_l is zero; the radius is unbounded"));
    }
    let (set2, rep2) = evaluate(inflate(r1), 2)?;
    let grew = rep2.radius > r1;
    Ok(Algorithm1Outcome {
        set: set2,
        report: rep2,
        iterations: if grew { 3 } else { 2 },
        needs_richer_basis: grew,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::quadratic_basis;
    use crate::game_model::LinearQuadraticGame;
    use approx::assert_abs_diff_eq;

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    struct Fixture {
        game: GameDefinition,
        basis: BasisSet,
        grid: ExtrapolationGrid,
        critic: Vec<CriticConfig>,
        actor: Vec<ActorConfig>,
        w: Vec<Vector>,
    }

    fn scalar() -> Fixture {
        let game = LinearQuadraticGame {
            a: m1(-1.0),
            b: vec![m1(1.0)],
            q: vec![m1(1.0)],
            r: vec![vec![m1(1.0)]],
        }
        .to_game()
        .unwrap();
        let basis = BasisSet::uniform(quadratic_basis(1), 1).unwrap();
        let pts = [-1.0, 0.5, 1.0].iter().map(|&p| Vector::from_element(1, p)).collect();
        let grid = ExtrapolationGrid::shared(&game, &basis, pts).unwrap();
        Fixture {
            game,
            basis,
            grid,
            critic: vec![CriticConfig {
                eta_c1: 1.0,
                eta_c2: 10.0,
                beta: 0.1,
                nu: 1.0,
                gamma_bar: 1.0,
                gamma_init: m1(1.0),
            }],
            actor: vec![ActorConfig { eta_a1: 3.0, eta_a2: 0.1 }],
            w: vec![Vector::from_element(1, 2f64.sqrt() - 1.0)],
        }
    }

    fn setup(f: &Fixture) -> AdvisorSetup<'_> {
        AdvisorSetup {
            game: &f.game,
            basis: &f.basis,
            critic: &f.critic,
            actor: &f.actor,
            grid: &f.grid,
            ideal_weights: &f.w,
            kappa_v: f.w[0][0],
            gamma_lower: vec![0.8],
            eps: EpsBounds::zero(1),
            zeta: 0.6,
            c_lower_override: None,
            z0: 0.5,
            seed: 1,
            exec: Execution::Sequential,
        }
    }

    fn small_box(count: usize) -> CompactSet {
        CompactSet::new(vec![-0.3, -1.0, -0.3], vec![0.3, 1.0, 0.3], count).unwrap()
    }

    #[test]
    fn v_l_hand_value() {
        assert_abs_diff_eq!(v_l(&[1.0], &[1.0], &[2.0]), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn exact_basis_has_no_residual_constants() {
        let f = scalar();
        let r = estimate_constants(&setup(&f), &small_box(1000)).unwrap();
        assert_eq!(r.iota3, 0.0);
        assert_eq!(r.iota5, vec![0.0]);
        assert_eq!(r.iota10, vec![0.0]);
        assert!(r.iota1 > 0.0 && r.iota2 > 0.0 && r.iota4 > 0.0);
    }

    #[test]
    fn sigma_prime_sup_on_box() {
        let f = scalar();
        let set = CompactSet::new(vec![-2.0, -1.0, -0.1], vec![2.0, 1.0, 0.1], 1000).unwrap();
        let r = estimate_constants(&setup(&f), &set).unwrap();
        assert_eq!(r.sigma_bar_prime, vec![4.0]);
        assert_eq!(r.sigma_bar, vec![4.0]);
        assert_eq!(r.g_bar, vec![1.0]);
        assert_abs_diff_eq!(r.l_f, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn benchmark_gains_pass() {
        let f = scalar();
        let r = estimate_constants(&setup(&f), &small_box(2000)).unwrap();
        assert!(r.conditions.satisfied(), "{}", r.to_text());
        assert!(r.conditions.per_player[0].margins.iter().all(|&m| m > 0.0));
        assert!(r.v_l > 0.0);
    }

    #[test]
    fn zero_actor_gains_fail_third_condition() {
        let mut f = scalar();
        f.actor = vec![ActorConfig { eta_a1: 0.0, eta_a2: 0.0 }];
        let r = estimate_constants(&setup(&f), &small_box(1000)).unwrap();
        assert!(!r.conditions.all[2]);
        assert!(r.conditions.per_player[0].margins[2] < 0.0);
    }

    #[test]
    fn condition_arithmetic() {
        let f = scalar();
        let mut r = estimate_constants(&setup(&f), &small_box(1000)).unwrap();
        r.q_lower = vec![1.0];
        r.iota5 = vec![0.1];
        let c = check_gain_conditions(&r, &f.critic, &f.actor);
        assert!(c.per_player[0].ok[0]);
        assert_abs_diff_eq!(c.per_player[0].margins[0], 0.8, epsilon = 1e-15);

        // Degenerate bounds reduce the conditions to q > 0, eta_c2 c > eta_a1, 2 eta_a1 + eta_a2 > 0.
        r.iota2 = 0.0;
        r.iota5 = vec![0.0];
        r.iota8 = 0.0;
        r.c_lower = vec![0.2];
        let c = check_gain_conditions(&r, &f.critic, &f.actor);
        assert_eq!(c.per_player[0].margins, [1.0, 10.0 * 0.2 - 3.0, 6.1]);
        assert_eq!(c.all, [true, false, true]);
    }

    #[test]
    fn zero_rank_constant_fails() {
        let f = scalar();
        let mut s = setup(&f);
        s.c_lower_override = Some(vec![0.0]);
        let r = estimate_constants(&s, &small_box(1000)).unwrap();
        assert_eq!(r.c_lower_source, "override");
        assert!(!r.conditions_ok[1]);
    }

    #[test]
    fn more_samples_never_lower_suprema() {
        let f = scalar();
        let s = setup(&f);
        let a = estimate_constants(&s, &small_box(1000)).unwrap();
        let b = estimate_constants(&s, &small_box(10_000)).unwrap();
        for (x, y) in [
            (a.iota1, b.iota1),
            (a.iota2, b.iota2),
            (a.iota4, b.iota4),
            (a.l_f, b.l_f),
            (a.sigma_bar_prime[0], b.sigma_bar_prime[0]),
        ] {
            assert!(y >= x);
        }
        assert!(b.c_lower[0] <= a.c_lower[0]);
        assert_eq!(a, estimate_constants(&s, &small_box(1000)).unwrap());
    }

    #[test]
    fn larger_box_never_lowers_suprema() {
        let f = scalar();
        let s = setup(&f);
        let inner = CompactSet::new(vec![-0.2, -0.5, -0.2], vec![0.2, 0.5, 0.2], 1000).unwrap();
        let outer = CompactSet::new(vec![-0.4, -1.0, -0.4], vec![0.4, 1.0, 0.4], 1000).unwrap();
        let a = estimate_constants(&s, &inner).unwrap();
        let b = estimate_constants(&s, &outer).unwrap();
        for (x, y) in [(a.iota1, b.iota1), (a.iota2, b.iota2), (a.iota4, b.iota4), (a.iota8, b.iota8)] {
            assert!(y >= x, "{x} > {y}");
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let f = scalar();
        let mut s = setup(&f);
        let a = estimate_constants(&s, &small_box(3000)).unwrap();
        s.exec = Execution::Parallel;
        let b = estimate_constants(&s, &small_box(3000)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn set_validation() {
        assert!(matches!(CompactSet::new(vec![0.0], vec![1.0], 0), Err(Error::EmptySampleSet)));
        assert!(CompactSet::new(vec![0.0], vec![1.0], 10).is_err());
        assert!(CompactSet::new(vec![1.0], vec![1.0], 1000).is_err());
        let c = CompactSet::cube(4, 1.0, 1000).unwrap();
        assert_abs_diff_eq!(c.diameter(), 4.0, epsilon = 1e-15);
        assert_eq!(c.sample_points(3).len(), 1000 + 16);
    }

    #[test]
    fn zeta_must_be_positive() {
        let f = scalar();
        let mut s = setup(&f);
        s.zeta = 0.0;
        assert!(estimate_constants(&s, &small_box(1000)).is_err());
    }

    fn report_with_radius(f: &Fixture, radius: f64) -> GainBoundsReport {
        let mut r = estimate_constants(&setup(f), &small_box(1000)).unwrap();
        r.radius = radius;
        r
    }

    #[test]
    fn exact_trivial_game_stops_at_first_iteration() {
        let f = scalar();
        let s = setup(&f);
        let real = algorithm1(&s, 0.05, 1000).unwrap();
        assert!(real.iterations >= 1 && real.report.radius > 0.0);
        // A vanishing ultimate bound stops at once.
        let out = algorithm1_with(0.05, |r| 2.0 * r, |r, _| {
            let mut rep = report_with_radius(&f, 0.0);
            rep.iota = 0.0;
            Ok((CompactSet::cube(3, r, 1000)?, rep))
        })
        .unwrap();
        assert_eq!(out.iterations, 1);
        assert!(!out.needs_richer_basis);
        assert_abs_diff_eq!(out.set.upper[0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn second_iteration_when_radius_settles() {
        let f = scalar();
        let out = algorithm1_with(0.1, |r| 2.0 * r, |r, it| {
            let radius = if it == 1 { 0.5 } else { 0.4 };
            Ok((CompactSet::cube(3, r, 1000)?, report_with_radius(&f, radius)))
        })
        .unwrap();
        assert_eq!(out.iterations, 2);
        assert!(!out.needs_richer_basis);
        assert_abs_diff_eq!(out.set.upper[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn third_iteration_flags_basis() {
        let f = scalar();
        let out = algorithm1_with(0.1, |r| 2.0 * r, |r, it| {
            let radius = if it == 1 { 0.5 } else { 0.9 };
            Ok((CompactSet::cube(3, r, 1000)?, report_with_radius(&f, radius)))
        })
        .unwrap();
        assert_eq!(out.iterations, 3);
        assert!(out.needs_richer_basis);
        assert_abs_diff_eq!(out.set.upper[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn inflated_eps_first_iteration() {
        // Inflated eps' on the first pass gives a large radius; the honest second pass
        // settles below it.
        let f = scalar();
        let base = setup(&f);
        let out = algorithm1_with(1e-3, |r| base.inflate(r), |r, it| {
            let mut s = base.clone();
            if it == 1 {
                s.eps = EpsBounds {
                    eps_bar: vec![0.0],
                    eps_bar_prime: vec![0.5],
                };
            }
            let set = CompactSet::new(vec![-0.3, -1.0, -0.3], vec![0.3, 1.0, 0.3], 1000)?;
            let _ = r;
            Ok((set.clone(), estimate_constants(&s, &set)?))
        })
        .unwrap();
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn surrogates() {
        let f = scalar();
        let s = setup(&f);
        assert_abs_diff_eq!(s.v_lower_coeff(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.v_upper_coeff(), f.w[0][0] + 0.5 / 0.8 + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.inflate(1.0), (s.v_upper_coeff() / 0.5).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn report_serializes() {
        let f = scalar();
        let r = estimate_constants(&setup(&f), &small_box(1000)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(json.get("iota8").is_some());
        assert!(json.get("iota6").is_none());
        let text = r.to_text();
        assert!(text.contains("player 0 condition 3"));
        assert!(text.contains("c_lower (sampled)"));
    }
}
