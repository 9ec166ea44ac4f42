//! The five simultaneous saddle-point update rules and a driver that
//! iterates them to a budget.
//!
//! | rule | update |
//! |------|--------|
//! | SGA  | `θ' = θ − η g_θ(θ,ω)`, `ω' = ω + η g_ω(θ,ω)` |
//! | OMD  | `θ' = θ − 2η g_θ(x_t) + η g_θ(x_{t−1})`, mirrored for ω |
//! | PM   | SGA step with gradients taken at the γ-look-ahead point |
//! | IU   | `x' = x − η F(x')`, solved exactly for affine fields |
//! | CO   | `x' = x − η (F + γ ∇R)`, `R = ½‖F‖²` |
//!
//! `F = (g_θ, −g_ω)` is the descent field.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::Game;
use crate::linalg::{norm, solve, Matrix};

/// Runs stop as diverged once `d_t > DIVERGENCE_FACTOR · d_0`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SGA")]
    Sga,
    #[serde(rename = "OMD")]
    Omd,
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "IU")]
    Iu,
    #[serde(rename = "CO")]
    Co,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Sga,
        Algorithm::Omd,
        Algorithm::Pm,
        Algorithm::Iu,
        Algorithm::Co,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Sga => "SGA",
            Algorithm::Omd => "OMD",
            Algorithm::Pm => "PM",
            Algorithm::Iu => "IU",
            Algorithm::Co => "CO",
        }
    }

    pub fn uses_gamma(self) -> bool {
        matches!(self, Algorithm::Pm | Algorithm::Co)
    }

    pub fn needs_constant_hessian(self) -> bool {
        matches!(self, Algorithm::Iu | Algorithm::Co)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SGA" => Ok(Algorithm::Sga),
            "OMD" => Ok(Algorithm::Omd),
            "PM" => Ok(Algorithm::Pm),
            "IU" => Ok(Algorithm::Iu),
            "CO" => Ok(Algorithm::Co),
            other => Err(Error::Parse(format!(
                "unknown algorithm {other:?} (expected SGA, OMD, PM, IU or CO)"
            ))),
        }
    }
}

/// A joint iterate `(θ, ω)`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl State {
    pub fn new(theta: Vec<f64>, omega: Vec<f64>) -> Self {
        Self { theta, omega }
    }

    /// Splits a stacked vector `[θ; ω]`.
    pub fn from_stacked(x: &[f64], p: usize) -> Self {
        Self {
            theta: x[..p].to_vec(),
            omega: x[p..].to_vec(),
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.theta.clone();
        x.extend_from_slice(&self.omega);
        x
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::joint_norm(&self.theta, &self.omega)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.omega).all(|x| x.is_finite())
    }

    /// Largest coordinate difference.
    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .chain(self.omega.iter().zip(&other.omega))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn finite_grads(g: (Vec<f64>, Vec<f64>)) -> Result<(Vec<f64>, Vec<f64>)> {
    if g.0.iter().chain(&g.1).all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NumericalFailure("non-finite gradient".into()))
    }
}

fn grads<G: Game + ?Sized>(game: &G, s: &State) -> Result<(Vec<f64>, Vec<f64>)> {
    finite_grads(game.gradients(&s.theta, &s.omega)?)
}

/// `(θ − η_θ a, ω + η_ω b)`.
fn descend(s: &State, eta: f64, g_theta: &[f64], g_omega: &[f64]) -> State {
    State {
        theta: s.theta.iter().zip(g_theta).map(|(x, g)| x - eta * g).collect(),
        omega: s.omega.iter().zip(g_omega).map(|(x, g)| x + eta * g).collect(),
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("step size must be positive, got {eta}")))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("γ must be non-negative, got {gamma}")))
    }
}

fn checked(s: State) -> Result<State> {
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NumericalFailure("non-finite iterate".into()))
    }
}

/// Simultaneous gradient descent/ascent.
pub fn sga_step<G: Game + ?Sized>(game: &G, s: &State, eta: f64) -> Result<State> {
    check_eta(eta)?;
    let (gt, gw) = grads(game, s)?;
    checked(descend(s, eta, &gt, &gw))
}

/// Optimistic mirror descent: weights `2η` on the current gradient and `−η`
/// on the previous one.
pub fn omd_step<G: Game + ?Sized>(
    game: &G,
    current: &State,
    previous: &State,
    eta: f64,
) -> Result<State> {
    check_eta(eta)?;
    let (gt, gw) = grads(game, current)?;
    let (pt, pw) = grads(game, previous)?;
    let mix = |now: &[f64], before: &[f64]| -> Vec<f64> {
        now.iter().zip(before).map(|(n, b)| 2.0 * n - b).collect()
    };
    checked(descend(current, eta, &mix(&gt, &pt), &mix(&gw, &pw)))
}

/// Predictive method: a `γ` look-ahead step, then an `η` step from the
/// original point using gradients at the look-ahead point.
pub fn pm_step<G: Game + ?Sized>(game: &G, s: &State, eta: f64, gamma: f64) -> Result<State> {
    check_eta(eta)?;
    check_gamma(gamma)?;
    let (gt, gw) = grads(game, s)?;
    let half = descend(s, gamma, &gt, &gw);
    let (ht, hw) = grads(game, &half)?;
    checked(descend(s, eta, &ht, &hw))
}

/// Implicit update `x' = x − η F(x')` for games with an affine field
/// `F(x) = Jx + F(0)`: solves `(I + ηJ) x' = x − η F(0)`.
pub fn iu_step<G: Game + ?Sized>(game: &G, s: &State, eta: f64) -> Result<State> {
    check_eta(eta)?;
    let system = ImplicitSystem::new(game, eta)?;
    system.step(s)
}

struct ImplicitSystem {
    lhs: Matrix,
    offset: Vec<f64>,
    p: usize,
}

impl ImplicitSystem {
    fn new<G: Game + ?Sized>(game: &G, eta: f64) -> Result<Self> {
        let blocks = game.hessian_blocks().ok_or_else(|| {
            Error::UnsupportedGame(format!(
                "implicit updates need constant Hessian blocks; {} game has none",
                game.name()
            ))
        })?;
        let p = game.dim_theta();
        let n = p + game.dim_omega();
        let lhs = Matrix::identity(n).add(&blocks.jacobian().scale(eta));
        let zero = State::new(vec![0.0; p], vec![0.0; n - p]);
        let (f_theta, f_omega) = grads(game, &zero)?;
        let offset = f_theta
            .iter()
            .map(|g| eta * g)
            .chain(f_omega.iter().map(|g| -eta * g))
            .collect();
        Ok(Self { lhs, offset, p })
    }

    fn step(&self, s: &State) -> Result<State> {
        let rhs: Vec<f64> = s.stacked().iter().zip(&self.offset).map(|(x, o)| x - o).collect();
        let x = solve(&self.lhs, &rhs).map_err(|e| match e {
            Error::Singular(m) => Error::NumericalFailure(format!("implicit system singular: {m}")),
            other => other,
        })?;
        checked(State::from_stacked(&x, self.p))
    }
}

/// Consensus optimization: SGA on the field `F + γ JᵀF`, where `JᵀF` is the
/// gradient of `R = ½(‖∇θU‖² + ‖∇ωU‖²)` assembled from the constant blocks.
pub fn co_step<G: Game + ?Sized>(game: &G, s: &State, eta: f64, gamma: f64) -> Result<State> {
    check_eta(eta)?;
    check_gamma(gamma)?;
    let blocks = game.hessian_blocks().ok_or_else(|| {
        Error::UnsupportedGame(format!(
            "consensus optimization needs constant Hessian blocks; {} game has none",
            game.name()
        ))
    })?;
    let (gt, gw) = grads(game, s)?;
    // ∇θR = A g_θ + C g_ω ;  ∇ωR = Cᵀ g_θ − B g_ω
    let r_theta: Vec<f64> = blocks
        .a
        .matvec(&gt)
        .iter()
        .zip(blocks.c.matvec(&gw))
        .map(|(x, y)| x + y)
        .collect();
    let r_omega: Vec<f64> = blocks
        .c
        .tr_matvec(&gt)
        .iter()
        .zip(blocks.b.matvec(&gw))
        .map(|(x, y)| x - y)
        .collect();
    let d_theta: Vec<f64> = gt.iter().zip(&r_theta).map(|(g, r)| g + gamma * r).collect();
    let d_omega: Vec<f64> = gw.iter().zip(&r_omega).map(|(g, r)| g - gamma * r).collect();
    checked(descend(s, eta, &d_theta, &d_omega))
}

/// Stateful stepper that owns the iterate history of one run.
pub struct Integrator<'g, G: Game + ?Sized> {
    game: &'g G,
    algorithm: Algorithm,
    eta: f64,
    gamma: f64,
    current: State,
    previous: Option<State>,
    warm_start: Option<State>,
    implicit: Option<ImplicitSystem>,
    t: usize,
}

impl<'g, G: Game + ?Sized> Integrator<'g, G> {
    /// `warm_start` is the OMD second iterate `(θ₁, ω₁)`; when absent OMD
    /// takes one SGA step with the same `η`. Ignored by the other rules.
    pub fn new(
        game: &'g G,
        algorithm: Algorithm,
        eta: f64,
        gamma: Option<f64>,
        start: State,
        warm_start: Option<State>,
    ) -> Result<Self> {
        check_eta(eta)?;
        game.check_dims(&start.theta, &start.omega)?;
        if let Some(w) = &warm_start {
            game.check_dims(&w.theta, &w.omega)?;
        }
        let gamma = match (algorithm.uses_gamma(), gamma) {
            (true, Some(g)) => {
                check_gamma(g)?;
                g
            }
            (true, None) => {
                return Err(Error::Config(format!("{algorithm} requires γ")));
            }
            (false, _) => 0.0,
        };
        if algorithm.needs_constant_hessian() && game.hessian_blocks().is_none() {
            return Err(Error::UnsupportedGame(format!(
                "{algorithm} needs constant Hessian blocks; {} game has none",
                game.name()
            )));
        }
        let implicit = match algorithm {
            Algorithm::Iu => Some(ImplicitSystem::new(game, eta)?),
            _ => None,
        };
        Ok(Self {
            game,
            algorithm,
            eta,
            gamma,
            current: start,
            previous: None,
            warm_start,
            implicit,
            t: 0,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn state(&self) -> &State {
        &self.current
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Advances one iteration and returns the new iterate.
    pub fn step(&mut self) -> Result<&State> {
        let next = match self.algorithm {
            Algorithm::Sga => sga_step(self.game, &self.current, self.eta)?,
            Algorithm::Omd => match &self.previous {
                None => match self.warm_start.take() {
                    Some(w) => w,
                    None => sga_step(self.game, &self.current, self.eta)?,
                },
                Some(prev) => omd_step(self.game, &self.current, prev, self.eta)?,
            },
            Algorithm::Pm => pm_step(self.game, &self.current, self.eta, self.gamma)?,
            Algorithm::Iu => self
                .implicit
                .as_ref()
                .expect("implicit system built in new()")
                .step(&self.current)?,
            Algorithm::Co => co_step(self.game, &self.current, self.eta, self.gamma)?,
        };
        self.previous = Some(std::mem::replace(&mut self.current, next));
        self.t += 1;
        Ok(&self.current)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    /// Look-ahead / regularizer weight; required for PM and CO only.
    pub gamma: Option<f64>,
    pub max_iters: usize,
    pub epsilon: f64,
    pub start: State,
    /// Optional OMD second iterate.
    pub warm_start: Option<State>,
    /// Record every `stride`-th iterate (the first and last are always kept).
    pub stride: usize,
}

impl DynamicsConfig {
    pub fn new(algorithm: Algorithm, eta: f64, start: State) -> Self {
        Self {
            algorithm,
            eta,
            gamma: algorithm.uses_gamma().then_some(1.0),
            max_iters: 100_000,
            epsilon: 1e-8,
            start,
            warm_start: None,
            stride: 1,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("ε must be positive, got {}", self.epsilon)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be ≥ 1".into()));
        }
        match (self.algorithm.uses_gamma(), self.gamma) {
            (true, None) => Err(Error::Config(format!("{} requires γ", self.algorithm))),
            (false, Some(_)) => Err(Error::Config(format!(
                "γ is only meaningful for PM and CO, not {}",
                self.algorithm
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedEpsilon,
    BudgetExhausted,
    Diverged,
    NumericalFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedEpsilon => "reached_epsilon",
            Termination::BudgetExhausted => "budget_exhausted",
            Termination::Diverged => "diverged",
            Termination::NumericalFailure => "numerical_failure",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub t: usize,
    pub state: State,
    pub dist: f64,
    pub theta_norm: f64,
    pub omega_norm: f64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub gamma: Option<f64>,
    pub records: Vec<Record>,
    pub status: Termination,
    /// Iteration index of the last iterate produced.
    pub final_t: usize,
    /// Set when the run stopped on a numerical failure.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn initial_distance(&self) -> f64 {
        self.records[0].dist
    }

    pub fn final_record(&self) -> &Record {
        self.records.last().expect("trajectory has at least one record")
    }

    /// First iteration with `d_t ≤ ε`, if the run got there.
    pub fn observed_t(&self) -> Option<usize> {
        (self.status == Termination::ReachedEpsilon).then_some(self.final_t)
    }

    pub fn distances(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.records.iter().map(|r| (r.t, r.dist))
    }
}

fn make_record<G: Game + ?Sized>(game: &G, t: usize, s: &State) -> Result<Record> {
    let dist = game
        .distance(&s.theta, &s.omega)
        .ok_or_else(|| Error::UnsupportedGame(format!("{} game has no progress metric", game.name())))?;
    let value = game.value(&s.theta, &s.omega)?;
    Ok(Record {
        t,
        state: s.clone(),
        dist,
        theta_norm: norm(&s.theta),
        omega_norm: norm(&s.omega),
        value,
    })
}

/// Iterates `config.algorithm` until `d_t ≤ ε`, the budget runs out,
/// `d_t > 10⁶ d₀`, or an iterate is non-finite.
///
/// Configuration problems are returned as errors; numerical trouble during
/// the run ends it with [`Termination::NumericalFailure`].
pub fn run<G: Game + ?Sized>(game: &G, config: &DynamicsConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut integrator = Integrator::new(
        game,
        config.algorithm,
        config.eta,
        config.gamma,
        config.start.clone(),
        config.warm_start.clone(),
    )?;

    let first = make_record(game, 0, &config.start)?;
    let d0 = first.dist;
    let mut records = vec![first];
    let traj = |status, final_t, records, failure| Trajectory {
        algorithm: config.algorithm,
        eta: config.eta,
        gamma: config.gamma,
        records,
        status,
        final_t,
        failure,
    };
    if d0 <= config.epsilon {
        return Ok(traj(Termination::ReachedEpsilon, 0, records, None));
    }
    let blowup = DIVERGENCE_FACTOR * d0;

    while integrator.t() < config.max_iters {
        let t = integrator.t() + 1;
        let rec = match integrator.step().and_then(|s| make_record(game, t, s)) {
            Ok(r) if r.dist.is_finite() && r.value.is_finite() => r,
            Ok(_) => {
                return Ok(traj(
                    Termination::NumericalFailure,
                    t,
                    records,
                    Some("non-finite distance or value".into()),
                ))
            }
            Err(e) => {
                return Ok(traj(Termination::NumericalFailure, t, records, Some(e.to_string())))
            }
        };
        let status = if rec.dist <= config.epsilon {
            Some(Termination::ReachedEpsilon)
        } else if rec.dist > blowup {
            Some(Termination::Diverged)
        } else {
            None
        };
        let last = status.is_some() || t == config.max_iters;
        if last || t % config.stride == 0 {
            records.push(rec);
        }
        if let Some(status) = status {
            return Ok(traj(status, t, records, None));
        }
    }
    let final_t = integrator.t();
    Ok(traj(Termination::BudgetExhausted, final_t, records, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{random_bilinear, BilinearGame, QuadraticGame};
    use crate::linalg::sym_eigen;
    use crate::rng::Rng64;

    fn scalar_bilinear() -> BilinearGame {
        BilinearGame::new(Matrix::from_rows(&[[1.0]]).unwrap())
    }

    fn st(t: f64, w: f64) -> State {
        State::new(vec![t], vec![w])
    }

    fn close(a: &State, b: &State, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    #[test]
    fn sga_examples() {
        let g = scalar_bilinear();
        let next = sga_step(&g, &st(1.0, 0.0), 0.1).unwrap();
        assert!(close(&next, &st(1.0, 0.1), 1e-15));
        // ‖x'‖² = (1 + η²)‖x‖² exactly for scalar C
        assert!((next.norm().powi(2) - 1.01).abs() < 1e-14);

        let quad =
            QuadraticGame::new(Matrix::identity(3), Matrix::identity(2), Matrix::zeros(3, 2)).unwrap();
        let s = State::new(vec![0.3, -2.0, 5.0], vec![1.0, -1.0]);
        let next = sga_step(&quad, &s, 1.0).unwrap();
        assert_eq!(next.norm(), 0.0);
    }

    #[test]
    fn sga_rejects_bad_eta() {
        let g = scalar_bilinear();
        assert!(matches!(sga_step(&g, &st(1.0, 0.0), 0.0), Err(Error::Precondition(_))));
        assert!(sga_step(&g, &st(1.0, 0.0), f64::NAN).is_err());
    }

    #[test]
    fn omd_with_repeated_history_is_sga() {
        let g = scalar_bilinear();
        let s = st(1.0, 0.0);
        let next = omd_step(&g, &s, &s, 0.25).unwrap();
        assert!(close(&next, &st(1.0, 0.25), 1e-15));
        let g5 = random_bilinear(5, 5, 42);
        let mut rng = Rng64::new(2);
        let s = State::new(rng.normal_vec(5), rng.normal_vec(5));
        assert!(close(&omd_step(&g5, &s, &s, 0.1).unwrap(), &sga_step(&g5, &s, 0.1).unwrap(), 1e-15));
    }

    #[test]
    fn pm_examples() {
        let g = scalar_bilinear();
        let next = pm_step(&g, &st(1.0, 0.0), 0.5, 1.0).unwrap();
        assert!(close(&next, &st(0.5, 0.5), 1e-15));
        let g5 = random_bilinear(5, 5, 42);
        let s = State::new(vec![0.1; 5], vec![-0.2; 5]);
        assert_eq!(pm_step(&g5, &s, 0.1, 0.0).unwrap(), sga_step(&g5, &s, 0.1).unwrap());
    }

    #[test]
    fn iu_examples() {
        let g = scalar_bilinear();
        // (I + J) x' = (1, 0) with J = [[0, 1], [-1, 0]]
        let next = iu_step(&g, &st(1.0, 0.0), 1.0).unwrap();
        assert!(close(&next, &st(0.5, 0.5), 1e-15));
        let next = iu_step(&g, &st(1.0, 0.0), 1e-12).unwrap();
        assert!(close(&next, &st(1.0, 0.0), 1e-11));
    }

    #[test]
    fn iu_satisfies_implicit_equation() {
        let mut rng = Rng64::new(12);
        let game = crate::games::random_stable_quadratic(3, 4, 0.5, &mut rng);
        let s = State::new(rng.normal_vec(3), rng.normal_vec(4));
        let eta = 0.3;
        let next = iu_step(&game, &s, eta).unwrap();
        // x' = x − η F(x') with gradients evaluated at x'
        let (gt, gw) = game.gradients(&next.theta, &next.omega).unwrap();
        let implied = descend(&s, eta, &gt, &gw);
        assert!(close(&next, &implied, 1e-12));
    }

    #[test]
    fn co_examples() {
        let g = scalar_bilinear();
        let next = co_step(&g, &st(1.0, 0.0), 0.5, 1.0).unwrap();
        assert!(close(&next, &st(0.5, 0.5), 1e-15));
        let g5 = random_bilinear(5, 5, 42);
        let s = State::new(vec![0.1; 5], vec![-0.2; 5]);
        assert_eq!(co_step(&g5, &s, 0.1, 0.0).unwrap(), sga_step(&g5, &s, 0.1).unwrap());
    }

    #[test]
    fn co_bilinear_closed_form() {
        let g = random_bilinear(4, 3, 5);
        let c = g.interaction();
        let mut rng = Rng64::new(1);
        let s = State::new(rng.normal_vec(4), rng.normal_vec(3));
        let (eta, gamma) = (0.07, 0.6);
        let next = co_step(&g, &s, eta, gamma).unwrap();
        let cct_theta = c.matvec(&c.tr_matvec(&s.theta));
        let ctc_omega = c.tr_matvec(&c.matvec(&s.omega));
        let cw = c.matvec(&s.omega);
        let ctt = c.tr_matvec(&s.theta);
        for i in 0..4 {
            let e = s.theta[i] - eta * (cw[i] + gamma * cct_theta[i]);
            assert!((next.theta[i] - e).abs() < 1e-15);
        }
        for i in 0..3 {
            let e = s.omega[i] + eta * (ctt[i] - gamma * ctc_omega[i]);
            assert!((next.omega[i] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_hessian_required() {
        let game = crate::games::CovarianceGame::new(Matrix::identity(1), 1, 1).unwrap();
        let s = State::new(vec![1.0], vec![1.0, 1.0]);
        assert!(matches!(iu_step(&game, &s, 0.1), Err(Error::UnsupportedGame(_))));
        assert!(matches!(co_step(&game, &s, 0.1, 1.0), Err(Error::UnsupportedGame(_))));
        let cfg = DynamicsConfig::new(Algorithm::Iu, 0.1, s);
        assert!(matches!(run(&game, &cfg), Err(Error::UnsupportedGame(_))));
    }

    #[test]
    fn pm_and_co_coincide_on_bilinear() {
        let g = random_bilinear(5, 5, 42);
        let mut rng = Rng64::new(42);
        let start = State::new(rng.on_sphere(5, 0.5), rng.on_sphere(5, 0.5));
        let mut pm = Integrator::new(&g, Algorithm::Pm, 0.01, Some(1.0), start.clone(), None).unwrap();
        let mut co = Integrator::new(&g, Algorithm::Co, 0.01, Some(1.0), start, None).unwrap();
        for _ in 0..1000 {
            let a = pm.step().unwrap().clone();
            let b = co.step().unwrap();
            assert!(a.max_abs_diff(b) <= 1e-12);
        }
    }

    #[test]
    fn run_kills_decoupled_quadratic_in_one_step() {
        let game = QuadraticGame::new(Matrix::identity(5), Matrix::identity(5), Matrix::zeros(5, 5))
            .unwrap();
        let mut rng = Rng64::new(0);
        let start = State::new(rng.on_sphere(5, 0.5 / 2f64.sqrt()), rng.on_sphere(5, 0.5 / 2f64.sqrt()));
        let traj = run(&game, &DynamicsConfig::new(Algorithm::Sga, 1.0, start)).unwrap();
        assert_eq!(traj.status, Termination::ReachedEpsilon);
        assert_eq!(traj.final_t, 1);
        assert!((traj.initial_distance() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn run_sga_bilinear_diverges() {
        let game = random_bilinear(5, 5, 42);
        let mut rng = Rng64::new(42);
        let x = rng.on_sphere(10, 0.5);
        let start = State::from_stacked(&x, 5);
        let traj = run(&game, &DynamicsConfig::new(Algorithm::Sga, 0.01, start)).unwrap();
        assert_eq!(traj.status, Termination::Diverged);
        let d: Vec<f64> = traj.distances().map(|(_, d)| d).collect();
        assert!(d.windows(2).all(|w| w[1] >= w[0]), "norm must grow monotonically");
    }

    #[test]
    fn run_records_stride_and_final() {
        let game = random_bilinear(3, 3, 1);
        let start = State::new(vec![0.3, 0.0, 0.1], vec![0.0, -0.2, 0.1]);
        let cfg = DynamicsConfig::new(Algorithm::Sga, 0.01, start)
            .with_max_iters(95)
            .with_stride(10);
        let traj = run(&game, &cfg).unwrap();
        assert_eq!(traj.status, Termination::BudgetExhausted);
        let ts: Vec<usize> = traj.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
        assert_eq!(traj.final_t, 95);
        assert!(traj.observed_t().is_none());
    }

    #[test]
    fn run_config_validation() {
        let game = scalar_bilinear();
        let s = st(1.0, 0.0);
        let bad_eps = DynamicsConfig::new(Algorithm::Sga, 0.1, s.clone()).with_epsilon(0.0);
        assert!(matches!(run(&game, &bad_eps), Err(Error::Config(_))));
        let mut no_gamma = DynamicsConfig::new(Algorithm::Pm, 0.1, s.clone());
        no_gamma.gamma = None;
        assert!(run(&game, &no_gamma).is_err());
        let stray_gamma = DynamicsConfig::new(Algorithm::Sga, 0.1, s).with_gamma(1.0);
        assert!(run(&game, &stray_gamma).is_err());
    }

    #[test]
    fn run_reports_numerical_failure() {
        let game = BilinearGame::new(Matrix::from_rows(&[[1e200]]).unwrap());
        let cfg = DynamicsConfig::new(Algorithm::Sga, 1e200, st(1.0, 1.0));
        let traj = run(&game, &cfg).unwrap();
        assert_eq!(traj.status, Termination::NumericalFailure);
        assert!(traj.failure.is_some());
        assert!(traj.records.iter().all(|r| r.dist.is_finite()));
    }

    #[test]
    fn run_is_bitwise_deterministic() {
        let game = random_bilinear(5, 5, 3);
        let start = State::new(vec![0.1, 0.2, 0.0, -0.1, 0.3], vec![0.0, 0.1, -0.2, 0.2, 0.05]);
        for alg in Algorithm::ALL {
            let cfg = DynamicsConfig::new(alg, 0.05, start.clone()).with_max_iters(200);
            let a = run(&game, &cfg).unwrap();
            let b = run(&game, &cfg).unwrap();
            assert_eq!(a.records, b.records);
        }
    }

    #[test]
    fn sga_bilinear_joint_growth_and_per_player_counterexample() {
        // jointly ‖x'‖² = ‖x‖² + η²(‖Cω‖² + ‖Cᵀθ‖²) ≥ (1 + η²λ_min)‖x‖²
        let g = random_bilinear(5, 5, 42);
        let c = g.interaction();
        let lmin = sym_eigen(&c.matmul(&c.transpose())).unwrap().min();
        let mut rng = Rng64::new(9);
        for eta in [1e-3, 1e-2, 1e-1, 1.0] {
            let mut s = State::new(rng.on_sphere(5, 0.5), rng.on_sphere(5, 0.5));
            for _ in 0..200 {
                let next = sga_step(&g, &s, eta).unwrap();
                let lhs = next.norm().powi(2);
                let rhs = (1.0 + eta * eta * lmin) * s.norm().powi(2);
                assert!(lhs >= rhs * (1.0 - 1e-12));
                s = next;
            }
        }
        // the θ-block alone can shrink: C = [[1]], θ = ω = 1, η = 0.1 gives θ' = 0.9
        let next = sga_step(&scalar_bilinear(), &st(1.0, 1.0), 0.1).unwrap();
        assert!(next.theta[0].powi(2) < 1.01);
    }
}
