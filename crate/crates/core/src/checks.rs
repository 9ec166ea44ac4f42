//! Runtime checks of the per-step inequalities behind the iteration bounds.
//!
//! Each check steps the real integrator and reports the worst relative
//! margin `(allowed − observed) / allowed` with the iteration where it
//! occurred. A check whose theorem hypotheses are not met (for example a
//! step size other than the theorem's) reports `NotApplicable`.

use std::fmt;

use serde::Serialize;

use crate::affine::AffineMap;
use crate::dynamics::{Algorithm, Integrator, State};
use crate::error::{Error, Result};
use crate::games::{Game, HessianBlocks};
use crate::linalg::{norm, sym_eigen, Matrix};
use crate::rates::{certify_omd_factorization, recommend, SpectralSummary};

/// Relative tolerance when matching a step size against the theorem value.
pub const ETA_MATCH_TOL: f64 = 1e-9;

/// Relative slack on per-step inequalities.
pub const STEP_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        }
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    /// Smallest relative margin seen; negative means violated.
    pub worst_margin: f64,
    /// Iteration of the worst margin.
    pub worst_t: Option<u64>,
    pub detail: String,
}

impl CheckResult {
    fn not_applicable(name: &str, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            worst_margin: f64::NAN,
            worst_t: None,
            detail: why.into(),
        }
    }

    fn from_margins(name: &str, tracker: MarginTracker, slack: f64, detail: String) -> Self {
        let status = if tracker.worst >= -slack {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name: name.into(),
            status,
            worst_margin: tracker.worst,
            worst_t: tracker.at,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

struct MarginTracker {
    worst: f64,
    at: Option<u64>,
}

impl MarginTracker {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            at: None,
        }
    }

    /// Records `allowed ≥ observed` as the margin `(allowed − observed)/allowed`.
    fn le(&mut self, t: u64, observed: f64, allowed: f64) {
        let m = if allowed > 0.0 {
            (allowed - observed) / allowed
        } else if observed <= allowed {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        if m < self.worst || self.at.is_none() {
            self.worst = m;
            self.at = Some(t);
        }
    }

    /// Records `observed ≥ required` as `(observed − required)/required`.
    fn ge(&mut self, t: u64, observed: f64, required: f64) {
        let m = if required > 0.0 {
            (observed - required) / required
        } else if observed >= required {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        if m < self.worst || self.at.is_none() {
            self.worst = m;
            self.at = Some(t);
        }
    }
}

/// Common inputs to the trajectory checks.
#[derive(Clone, Debug)]
pub struct CheckRun<'a> {
    pub start: &'a State,
    pub eta: f64,
    pub gamma: Option<f64>,
    /// Number of steps to examine.
    pub horizon: u64,
    /// Stop early once the distance drops to this value.
    pub epsilon: f64,
}

fn eta_matches(eta: f64, theorem: f64) -> bool {
    (eta - theorem).abs() <= ETA_MATCH_TOL * theorem
}

fn blocks_of<G: Game + ?Sized>(game: &G) -> Result<&HessianBlocks> {
    game.hessian_blocks().ok_or_else(|| {
        Error::UnsupportedGame(format!("{} game has no constant Hessian blocks", game.name()))
    })
}

/// Iterates stop being examined once their norm passes this value.
pub const OVERFLOW_GUARD: f64 = 1e100;

/// Steps `algorithm` and hands each consecutive pair `(t, x_t, x_{t+1})` to
/// `visit`, until `horizon` steps, `d_{t+1} ≤ ε`, or `‖x_{t+1}‖` passes
/// [`OVERFLOW_GUARD`].
fn walk<G: Game + ?Sized>(
    game: &G,
    algorithm: Algorithm,
    run: &CheckRun<'_>,
    mut visit: impl FnMut(u64, &State, &State),
) -> Result<u64> {
    let mut integ = Integrator::new(game, algorithm, run.eta, run.gamma, run.start.clone(), None)?;
    let mut prev = run.start.clone();
    for t in 0..run.horizon {
        let next = integ.step()?.clone();
        visit(t, &prev, &next);
        let d = game.distance(&next.theta, &next.omega).unwrap_or(f64::INFINITY);
        if d <= run.epsilon || next.norm().is_nan() || next.norm() > OVERFLOW_GUARD {
            return Ok(t + 1);
        }
        prev = next;
    }
    Ok(run.horizon)
}

fn dist<G: Game + ?Sized>(game: &G, s: &State) -> f64 {
    game.distance(&s.theta, &s.omega).unwrap_or(f64::NAN)
}

/// SGA on a stable constant-Hessian game at `η = √α/β`:
/// `d_{t+1} ≤ √(1 − α/β) d_t` every step.
pub fn sga_stable_contraction<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>) -> Result<CheckResult> {
    const NAME: &str = "sga_stable_contraction";
    let summary = SpectralSummary::of_game(game)?;
    let (Some(alpha), Some(beta)) = (summary.alpha, summary.beta) else {
        return Ok(CheckResult::not_applicable(NAME, "equilibrium is not stable"));
    };
    let theorem = alpha.sqrt() / beta;
    if !eta_matches(run.eta, theorem) {
        return Ok(CheckResult::not_applicable(
            NAME,
            format!("η = {} differs from √α/β = {theorem}", run.eta),
        ));
    }
    let rho = (1.0 - alpha / beta).max(0.0).sqrt();
    let mut m = MarginTracker::new();
    let steps = walk(game, Algorithm::Sga, run, |t, a, b| {
        m.le(t, dist(game, b), rho * dist(game, a));
    })?;
    Ok(CheckResult::from_margins(
        NAME,
        m,
        STEP_SLACK,
        format!("factor {rho:.6}, {steps} steps"),
    ))
}

/// SGA on a bilinear game, any `η`:
/// `‖x_{t+1}‖² ≥ (1 + η²λ_min(CCᵀ)) ‖x_t‖²` on the joint state.
pub fn sga_growth_joint<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>) -> Result<CheckResult> {
    const NAME: &str = "sga_growth_joint";
    let blocks = blocks_of(game)?;
    if !blocks.is_bilinear() {
        return Ok(CheckResult::not_applicable(NAME, "game is not bilinear"));
    }
    let lmin = SpectralSummary::from_blocks(blocks)?.lambda_min;
    let factor = 1.0 + run.eta * run.eta * lmin;
    let mut m = MarginTracker::new();
    let steps = walk(game, Algorithm::Sga, run, |t, a, b| {
        m.ge(t, b.norm().powi(2), factor * a.norm().powi(2));
    })?;
    Ok(CheckResult::from_margins(
        NAME,
        m,
        STEP_SLACK,
        format!("factor {factor:.9}, {steps} steps"),
    ))
}

/// SGA on a bilinear game, any `η`, each player separately:
/// `‖θ_{t+1}‖² ≥ (1 + η²λ_min(CCᵀ)) ‖θ_t‖²` and
/// `‖ω_{t+1}‖² ≥ (1 + η²λ_min(CᵀC)) ‖ω_t‖²`.
pub fn sga_growth_per_player<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>) -> Result<CheckResult> {
    const NAME: &str = "sga_growth_per_player";
    let blocks = blocks_of(game)?;
    if !blocks.is_bilinear() {
        return Ok(CheckResult::not_applicable(NAME, "game is not bilinear"));
    }
    let c = &blocks.c;
    let l_theta = sym_eigen(&c.matmul(&c.transpose()))?.min().max(0.0);
    let l_omega = sym_eigen(&c.transpose().matmul(c))?.min().max(0.0);
    let (f_theta, f_omega) = (1.0 + run.eta * run.eta * l_theta, 1.0 + run.eta * run.eta * l_omega);
    let mut m = MarginTracker::new();
    let steps = walk(game, Algorithm::Sga, run, |t, a, b| {
        m.ge(t, norm(&b.theta).powi(2), f_theta * norm(&a.theta).powi(2));
        m.ge(t, norm(&b.omega).powi(2), f_omega * norm(&a.omega).powi(2));
    })?;
    Ok(CheckResult::from_margins(
        NAME,
        m,
        STEP_SLACK,
        format!("factors θ {f_theta:.9}, ω {f_omega:.9}, {steps} steps"),
    ))
}

/// SGA on the `A = B = I` game, any `η`:
/// `‖x_{t+1}‖² / ‖x_t‖² ≥ λ/(1 + λ)` with `λ = λ_min(CᵀC)`.
pub fn identity_block_floor<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>) -> Result<CheckResult> {
    const NAME: &str = "identity_block_floor";
    let blocks = blocks_of(game)?;
    let (p, q) = (blocks.p(), blocks.q());
    if blocks.a != Matrix::identity(p) || blocks.b != Matrix::identity(q) {
        return Ok(CheckResult::not_applicable(NAME, "needs A = I and B = I"));
    }
    let c = &blocks.c;
    let lam = sym_eigen(&c.transpose().matmul(c))?.min().max(0.0);
    let floor = lam / (1.0 + lam);
    let mut m = MarginTracker::new();
    let steps = walk(game, Algorithm::Sga, run, |t, a, b| {
        let ratio = b.norm().powi(2) / a.norm().powi(2);
        m.ge(t, ratio + 1e-12, floor);
    })?;
    Ok(CheckResult::from_margins(
        NAME,
        m,
        0.0,
        format!("floor {floor:.9}, {steps} steps"),
    ))
}

fn bilinear_theorem_eta(
    name: &str,
    game: &(impl Game + ?Sized),
    algorithm: Algorithm,
    run: &CheckRun<'_>,
) -> Result<std::result::Result<SpectralSummary, CheckResult>> {
    let summary = SpectralSummary::of_game(game)?;
    if !summary.bilinear {
        return Ok(Err(CheckResult::not_applicable(name, "game is not bilinear")));
    }
    if !summary.full_rank || summary.lambda_min <= 0.0 {
        return Ok(Err(CheckResult::not_applicable(name, "C is not full rank")));
    }
    let theorem = recommend(algorithm, &summary, run.gamma, 1.0, 0.5)?.eta;
    if !eta_matches(run.eta, theorem) {
        return Ok(Err(CheckResult::not_applicable(
            name,
            format!("η = {} differs from the theorem value {theorem}", run.eta),
        )));
    }
    Ok(Ok(summary))
}

/// OMD on a bilinear game at the theorem step:
/// `d_t ≤ 4√2 · r · exp(−t/(16κ))` for every `t`, where `r` bounds the
/// norms of both initial iterates.
pub fn omd_envelope<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>, r: f64) -> Result<CheckResult> {
    const NAME: &str = "omd_envelope";
    let summary = match bilinear_theorem_eta(NAME, game, Algorithm::Omd, run)? {
        Ok(s) => s,
        Err(na) => return Ok(na),
    };
    let rate = 1.0 / (16.0 * summary.kappa);
    let envelope = |t: u64| 4.0 * 2f64.sqrt() * r * (-(t as f64) * rate).exp();
    let mut m = MarginTracker::new();
    m.le(0, dist(game, run.start), envelope(0));
    let steps = walk(game, Algorithm::Omd, run, |t, _, b| {
        m.le(t + 1, dist(game, b), envelope(t + 1));
    })?;
    Ok(CheckResult::from_margins(
        NAME,
        m,
        STEP_SLACK,
        format!("r = {r}, κ = {:.6e}, {steps} steps", summary.kappa),
    ))
}

/// PM or CO on a bilinear game at the theorem step:
/// `d_{t+1}² ≤ (1 − γ²λ_min²/(γ²λ_max² + λ_max)) d_t²`.
pub fn squared_contraction<G: Game + ?Sized>(
    game: &G,
    algorithm: Algorithm,
    run: &CheckRun<'_>,
) -> Result<CheckResult> {
    let name = format!("{}_squared_contraction", algorithm.as_str().to_lowercase());
    if !matches!(algorithm, Algorithm::Pm | Algorithm::Co) {
        return Ok(CheckResult::not_applicable(&name, "check covers PM and CO"));
    }
    let summary = match bilinear_theorem_eta(&name, game, algorithm, run)? {
        Ok(s) => s,
        Err(na) => return Ok(na),
    };
    let g = run.gamma.unwrap_or(1.0);
    let (lmin, lmax) = (summary.lambda_min, summary.lambda_max);
    let factor = 1.0 - g * g * lmin * lmin / (g * g * lmax * lmax + lmax);
    let mut m = MarginTracker::new();
    let steps = walk(game, algorithm, run, |t, a, b| {
        m.le(t, dist(game, b).powi(2), factor * dist(game, a).powi(2));
    })?;
    Ok(CheckResult::from_margins(
        &name,
        m,
        STEP_SLACK,
        format!("factor {factor:.12}, {steps} steps"),
    ))
}

/// IU on a bilinear game at `η = 1/√λ_max`:
/// `d_{t+1} ≤ (1 − (1 − 1/√2)/κ) d_t`.
pub fn iu_contraction<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>) -> Result<CheckResult> {
    const NAME: &str = "iu_contraction";
    let summary = match bilinear_theorem_eta(NAME, game, Algorithm::Iu, run)? {
        Ok(s) => s,
        Err(na) => return Ok(na),
    };
    let factor = 1.0 - (1.0 - 1.0 / 2f64.sqrt()) / summary.kappa;
    let mut m = MarginTracker::new();
    let steps = walk(game, Algorithm::Iu, run, |t, a, b| {
        m.le(t, dist(game, b), factor * dist(game, a));
    })?;
    Ok(CheckResult::from_margins(
        NAME,
        m,
        STEP_SLACK,
        format!("factor {factor:.12}, {steps} steps"),
    ))
}

/// PM and CO started together on a bilinear game produce the same iterates.
pub fn pm_co_equivalence<G: Game + ?Sized>(game: &G, run: &CheckRun<'_>) -> Result<CheckResult> {
    const NAME: &str = "pm_co_equivalence";
    const TOL: f64 = 1e-12;
    if !blocks_of(game)?.is_bilinear() {
        return Ok(CheckResult::not_applicable(NAME, "game is not bilinear"));
    }
    let gamma = run.gamma.unwrap_or(1.0);
    let mut pm = Integrator::new(game, Algorithm::Pm, run.eta, Some(gamma), run.start.clone(), None)?;
    let mut co = Integrator::new(game, Algorithm::Co, run.eta, Some(gamma), run.start.clone(), None)?;
    let mut worst = 0.0_f64;
    let mut at = 0;
    for t in 1..=run.horizon {
        let a = pm.step()?.clone();
        let diff = a.max_abs_diff(co.step()?);
        if diff > worst {
            worst = diff;
            at = t;
        }
    }
    let status = if worst <= TOL {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(CheckResult {
        name: NAME.into(),
        status,
        worst_margin: (TOL - worst) / TOL,
        worst_t: Some(at),
        detail: format!("max deviation {worst:.3e} over {} steps", run.horizon),
    })
}

/// How an ε-hit time was established.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HitEvidence {
    /// Every iterate up to the hit was examined.
    Scanned { t: u64 },
    /// The scan ran out first; the iterate at the bound itself was
    /// computed by a jump and lies within ε, so the first hit is ≤ bound.
    CertifiedAtBound { distance: f64 },
    /// Neither: the scan found no hit and the iterate at the bound is
    /// outside ε.
    Missed { distance: f64 },
}

/// `ε`-hit no later than `bound`, established by scanning up to `scan_cap`
/// iterates and otherwise by evaluating the iterate at `bound` directly.
#[allow(clippy::too_many_arguments)]
pub fn hit_within_bound<G: Game + ?Sized>(
    game: &G,
    algorithm: Algorithm,
    start: &State,
    eta: f64,
    gamma: Option<f64>,
    eps: f64,
    bound: u64,
    scan_cap: u64,
) -> Result<(CheckResult, HitEvidence)> {
    let name = format!("{}_hit_within_bound", algorithm.as_str().to_lowercase());
    let map = AffineMap::new(game, algorithm, eta, gamma)?;
    let hit = map.first_hits(game, start, eta, None, &[eps], scan_cap.min(bound))?[0];
    let evidence = match hit {
        Some(t) => HitEvidence::Scanned { t },
        None if scan_cap >= bound => HitEvidence::Missed {
            distance: map.distance_at(game, start, eta, None, bound)?,
        },
        None => {
            let d = map.distance_at(game, start, eta, None, bound)?;
            if d <= eps {
                HitEvidence::CertifiedAtBound { distance: d }
            } else {
                HitEvidence::Missed { distance: d }
            }
        }
    };
    let (status, margin, at, detail) = match evidence {
        HitEvidence::Scanned { t } => (
            CheckStatus::Pass,
            (bound - t) as f64 / bound as f64,
            Some(t),
            format!("hit at t = {t}, bound {bound}"),
        ),
        HitEvidence::CertifiedAtBound { distance } => (
            CheckStatus::Pass,
            (eps - distance) / eps,
            Some(bound),
            format!("no hit within {scan_cap} scanned steps; d at bound {bound} is {distance:.3e} ≤ ε"),
        ),
        HitEvidence::Missed { distance } => (
            CheckStatus::Fail,
            (eps - distance) / eps,
            Some(bound),
            format!("d at bound {bound} is {distance:.3e} > ε"),
        ),
    };
    Ok((
        CheckResult {
            name,
            status,
            worst_margin: margin,
            worst_t: at,
            detail,
        },
        evidence,
    ))
}

/// Residuals of the OMD factorization identities at step `eta`.
pub fn omd_factorization(c: &Matrix, eta: f64, tol: f64) -> Result<CheckResult> {
    const NAME: &str = "omd_factorization";
    let cert = match certify_omd_factorization(c, eta) {
        Ok(c) => c,
        Err(Error::Precondition(why)) => return Ok(CheckResult::not_applicable(NAME, why)),
        Err(e) => return Err(e),
    };
    let bound = 0.5f64.sqrt();
    let err = cert.max_error();
    let ok = err <= tol && cert.r2_op_norm <= bound + 1e-12;
    Ok(CheckResult {
        name: NAME.into(),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        worst_margin: ((tol - err) / tol).min((bound - cert.r2_op_norm) / bound),
        worst_t: None,
        detail: format!("identity residual {err:.3e}, ‖R₂‖ = {:.6}", cert.r2_op_norm),
    })
}
