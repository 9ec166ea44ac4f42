//! Spectral quantities, recommended learning rates, iteration bounds, the
//! OMD factorization certificate, and empirical contraction fits.

use std::fmt;

use serde::Serialize;

use crate::dynamics::{Algorithm, Termination, Trajectory};
use crate::error::{Error, Result};
use crate::games::{Game, HessianBlocks};
use crate::linalg::{op_norm, sqrt_psd, svd, sym_eigen, Matrix};

/// Eigenvalue threshold separating definite from degenerate blocks.
pub const CLASSIFY_TOL: f64 = 1e-10;

/// Relative singular-value threshold below which `C` counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumClass {
    Stable,
    Unstable,
    Indefinite,
}

impl EquilibriumClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EquilibriumClass::Stable => "stable",
            EquilibriumClass::Unstable => "unstable",
            EquilibriumClass::Indefinite => "indefinite",
        }
    }
}

impl fmt::Display for EquilibriumClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_symmetric(name: &str, m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("block {name} is {:?}, not square", m.shape())));
    }
    if m.asymmetry() > crate::linalg::SYMMETRY_TOL * m.max_abs().max(1.0) {
        return Err(Error::Domain(format!("block {name} is not symmetric")));
    }
    Ok(())
}

/// Stable when both `A ≻ 0` and `B ≻ 0`, unstable when both vanish,
/// indefinite otherwise.
pub fn classify_equilibrium(a: &Matrix, b: &Matrix) -> Result<EquilibriumClass> {
    check_symmetric("A", a)?;
    check_symmetric("B", b)?;
    if sym_eigen(a)?.min() > CLASSIFY_TOL && sym_eigen(b)?.min() > CLASSIFY_TOL {
        Ok(EquilibriumClass::Stable)
    } else if a.max_abs() <= CLASSIFY_TOL && b.max_abs() <= CLASSIFY_TOL {
        Ok(EquilibriumClass::Unstable)
    } else {
        Ok(EquilibriumClass::Indefinite)
    }
}

/// `F = [[A² + CCᵀ, −AC + CB], [−CᵀA + BCᵀ, B² + CᵀC]]`.
pub fn f_matrix(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let ct = c.transpose();
    Matrix::block2(
        &a.matmul(a).add(&c.matmul(&ct)),
        &c.matmul(b).sub(&a.matmul(c)),
        &b.matmul(&ct).sub(&ct.matmul(a)),
        &b.matmul(b).add(&ct.matmul(c)),
    )
}

/// `α = λ_min(diag(A², B²))`, `β = λ_max(F)`.
pub fn alpha_beta(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<(f64, f64)> {
    HessianBlocks::new(a.clone(), b.clone(), c.clone())?;
    let (ea, eb) = (sym_eigen(a)?, sym_eigen(b)?);
    if ea.min() <= CLASSIFY_TOL || eb.min() <= CLASSIFY_TOL {
        return Err(Error::StabilityViolation(format!(
            "α, β need A ≻ 0 and B ≻ 0; λ_min(A) = {:e}, λ_min(B) = {:e}",
            ea.min(),
            eb.min()
        )));
    }
    let alpha = (ea.min() * ea.min()).min(eb.min() * eb.min());
    let beta = sym_eigen(&f_matrix(a, b, c))?.max();
    Ok((alpha, beta))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub p: usize,
    pub q: usize,
    pub classification: EquilibriumClass,
    pub bilinear: bool,
    /// `λ_min(CCᵀ)`.
    pub lambda_min: f64,
    /// `λ_max(CCᵀ)`.
    pub lambda_max: f64,
    /// `λ_max / λ_min`; infinite when `λ_min = 0`.
    pub kappa: f64,
    /// `C` has `min(p, q)` singular values above `RANK_TOL · σ_max`.
    pub full_rank: bool,
    /// Present for stable equilibria only.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Eigenvalues of `F`, descending.
    pub f_spectrum: Vec<f64>,
    /// Blocks were sampled at one point of a game whose Hessian varies.
    pub estimate_only: bool,
}

impl SpectralSummary {
    pub fn from_blocks(blocks: &HessianBlocks) -> Result<Self> {
        let (a, b, c) = (&blocks.a, &blocks.b, &blocks.c);
        let classification = classify_equilibrium(a, b)?;
        let cct = sym_eigen(&c.matmul(&c.transpose()))?;
        let sv = svd(c)?;
        let lambda_max = cct.max().max(0.0);
        let floor = (RANK_TOL * sv.max()).powi(2);
        let lambda_min = if cct.min() > floor { cct.min() } else { 0.0 };
        let full_rank =
            sv.max() > 0.0 && sv.singular_values.iter().all(|&s| s > RANK_TOL * sv.max());
        let kappa = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
        let (alpha, beta) = match classification {
            EquilibriumClass::Stable => {
                let (al, be) = alpha_beta(a, b, c)?;
                (Some(al), Some(be))
            }
            _ => (None, None),
        };
        Ok(Self {
            p: blocks.p(),
            q: blocks.q(),
            classification,
            bilinear: blocks.is_bilinear(),
            lambda_min,
            lambda_max,
            kappa,
            full_rank,
            alpha,
            beta,
            f_spectrum: sym_eigen(&f_matrix(a, b, c))?.eigenvalues,
            estimate_only: false,
        })
    }

    /// Summary of a game with constant Hessian blocks.
    pub fn of_game<G: Game + ?Sized>(game: &G) -> Result<Self> {
        let blocks = game.hessian_blocks().ok_or_else(|| {
            Error::UnsupportedGame(format!(
                "spectral summary needs constant Hessian blocks; {} game has none",
                game.name()
            ))
        })?;
        Self::from_blocks(blocks)
    }

    /// Summary of blocks evaluated at a single point of a game whose
    /// Hessian is not constant. Every derived rate carries the estimate flag.
    pub fn local_estimate(blocks: &HessianBlocks) -> Result<Self> {
        Ok(Self {
            estimate_only: true,
            ..Self::from_blocks(blocks)?
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub gamma: Option<f64>,
    pub theoretical_t: u64,
    /// Per-step factor on the distance to equilibrium implied by the bound.
    pub theoretical_contraction: f64,
    pub observed_t: Option<u64>,
    pub fitted_contraction: Option<f64>,
    pub estimate_only: bool,
}

fn ceil_count(x: f64, what: &str) -> Result<u64> {
    if !x.is_finite() || x >= u64::MAX as f64 {
        return Err(Error::UnboundedIterations(format!("{what} is not finite ({x})")));
    }
    Ok((x.ceil() as u64).max(1))
}

fn check_radii(r: f64, eps: f64) -> Result<()> {
    if !(eps > 0.0 && r > eps && r.is_finite()) {
        return Err(Error::Precondition(format!("need r > ε > 0, got r = {r}, ε = {eps}")));
    }
    Ok(())
}

/// Theorem learning rate, iteration bound, and per-step contraction factor.
pub fn recommend(
    algorithm: Algorithm,
    summary: &SpectralSummary,
    gamma: Option<f64>,
    r: f64,
    eps: f64,
) -> Result<RateReport> {
    check_radii(r, eps)?;
    let log_ratio = (r / eps).ln();
    let needs_bilinear = || -> Result<()> {
        if !summary.bilinear {
            return Err(Error::Precondition(format!(
                "the {algorithm} bound covers bilinear games only"
            )));
        }
        if summary.lambda_min <= 0.0 {
            return Err(Error::UnboundedIterations(format!(
                "λ_min(CCᵀ) = 0: C is not full rank, no finite {algorithm} bound"
            )));
        }
        Ok(())
    };
    let (lmin, lmax, kappa) = (summary.lambda_min, summary.lambda_max, summary.kappa);
    let (eta, gamma, t, contraction) = match algorithm {
        Algorithm::Sga => {
            let (alpha, beta) = match (summary.alpha, summary.beta) {
                (Some(a), Some(b)) if a > 0.0 => (a, b),
                _ => {
                    return Err(Error::UnboundedIterations(
                        "α = 0: the equilibrium is not stable, SGA has no finite bound".into(),
                    ))
                }
            };
            (
                alpha.sqrt() / beta,
                None,
                ceil_count(2.0 * (beta / alpha) * log_ratio, "T_SGA")?,
                (1.0 - alpha / beta).max(0.0).sqrt(),
            )
        }
        Algorithm::Omd => {
            needs_bilinear()?;
            (
                1.0 / (2.0 * (2.0 * lmax).sqrt()),
                None,
                ceil_count(16.0 * kappa * (4.0 * 2f64.sqrt() * r / eps).ln(), "T_OMD")?,
                (-1.0 / (16.0 * kappa)).exp(),
            )
        }
        Algorithm::Pm | Algorithm::Co => {
            needs_bilinear()?;
            let g = gamma.ok_or_else(|| Error::Config(format!("{algorithm} requires γ")))?;
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Precondition(format!("γ must be positive, got {g}")));
            }
            let denom = g * g * lmax * lmax + lmax;
            (
                g * lmin / (lmax + g * g * lmax * lmax),
                Some(g),
                ceil_count(2.0 * denom / (g * g * lmin * lmin) * log_ratio, "T_PM")?,
                (1.0 - g * g * lmin * lmin / denom).max(0.0).sqrt(),
            )
        }
        Algorithm::Iu => {
            needs_bilinear()?;
            (
                1.0 / lmax.sqrt(),
                None,
                ceil_count((2.0 + 2f64.sqrt()) * kappa * log_ratio, "T_IU")?,
                1.0 - (1.0 - 1.0 / 2f64.sqrt()) / kappa,
            )
        }
    };
    Ok(RateReport {
        algorithm,
        eta,
        gamma,
        theoretical_t: t,
        theoretical_contraction: contraction,
        observed_t: None,
        fitted_contraction: None,
        estimate_only: summary.estimate_only,
    })
}

/// `max_k ⌈κ(block_k) ln(r/ε)⌉` over the supplied symmetric PD blocks.
pub fn gd_iteration_bound(blocks: &[&Matrix], r: f64, eps: f64) -> Result<u64> {
    check_radii(r, eps)?;
    if blocks.is_empty() {
        return Err(Error::Precondition("no blocks supplied".into()));
    }
    let mut worst = 0;
    for (k, m) in blocks.iter().enumerate() {
        check_symmetric(&format!("#{k}"), m)?;
        let e = sym_eigen(m)?;
        if e.min() <= CLASSIFY_TOL {
            return Err(Error::StabilityViolation(format!(
                "block #{k} is not positive definite (λ_min = {:e})",
                e.min()
            )));
        }
        worst = worst.max(ceil_count(e.max() / e.min() * (r / eps).ln(), "T_GD")?);
    }
    Ok(worst)
}

/// Factors `R₁, R₂` of the OMD recursion and the residuals of their
/// defining identities.
#[derive(Clone, Debug, PartialEq)]
pub struct OmdCertificate {
    pub r1: Matrix,
    pub r2: Matrix,
    /// `‖R₁ + R₂ − (I − 2ηJ₀)‖_F`.
    pub sum_error: f64,
    /// `max(‖R₁R₂ + ηJ₀‖_F, ‖R₂R₁ + ηJ₀‖_F)`.
    pub product_error: f64,
    /// `‖R₁R₁ᵀ − diag((I + S)/2)‖_F`.
    pub gram1_error: f64,
    /// `‖R₂R₂ᵀ − diag((I − S)/2)‖_F`.
    pub gram2_error: f64,
    pub r2_op_norm: f64,
}

impl OmdCertificate {
    pub fn max_error(&self) -> f64 {
        self.sum_error
            .max(self.product_error)
            .max(self.gram1_error)
            .max(self.gram2_error)
    }
}

/// Builds `R₁,₂ = (I − 2ηJ₀ ± S)/2` with `J₀ = [[0, C], [−Cᵀ, 0]]` and
/// `S = diag((I − 4η²CCᵀ)^{1/2}, (I − 4η²CᵀC)^{1/2})`, and measures the
/// residuals of the factorization identities.
pub fn certify_omd_factorization(c: &Matrix, eta: f64) -> Result<OmdCertificate> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Precondition(format!("step size must be positive, got {eta}")));
    }
    let sigma_max = op_norm(c)?;
    if 2.0 * eta * sigma_max > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!(
            "η = {eta} exceeds 1/(2σ_max(C)) = {}",
            0.5 / sigma_max
        )));
    }
    let (p, q) = c.shape();
    let ct = c.transpose();
    let s_theta = sqrt_psd(&Matrix::identity(p).sub(&c.matmul(&ct).scale(4.0 * eta * eta)))?;
    let s_omega = sqrt_psd(&Matrix::identity(q).sub(&ct.matmul(c).scale(4.0 * eta * eta)))?;
    let s = Matrix::block2(&s_theta, &Matrix::zeros(p, q), &Matrix::zeros(q, p), &s_omega);
    let j0 = Matrix::block2(&Matrix::zeros(p, p), c, &ct.scale(-1.0), &Matrix::zeros(q, q));
    let id = Matrix::identity(p + q);
    let x = id.sub(&j0.scale(2.0 * eta));
    let r1 = x.add(&s).scale(0.5);
    let r2 = x.sub(&s).scale(0.5);
    let minus_eta_j0 = j0.scale(-eta);
    let sum_error = r1.add(&r2).sub(&x).frobenius_norm();
    let product_error = r1
        .matmul(&r2)
        .sub(&minus_eta_j0)
        .frobenius_norm()
        .max(r2.matmul(&r1).sub(&minus_eta_j0).frobenius_norm());
    let gram1_error = r1.matmul(&r1.transpose()).sub(&id.add(&s).scale(0.5)).frobenius_norm();
    let gram2_error = r2.matmul(&r2.transpose()).sub(&id.sub(&s).scale(0.5)).frobenius_norm();
    let r2_op_norm = op_norm(&r2)?;
    Ok(OmdCertificate {
        r1,
        r2,
        sum_error,
        product_error,
        gram1_error,
        gram2_error,
        r2_op_norm,
    })
}

/// Minimum number of points a contraction fit needs.
pub const MIN_FIT_POINTS: usize = 10;

/// `exp(slope)` of the least-squares line through `(t, ln d_t)`, over the
/// last 80% of the supplied points.
pub fn fit_contraction_series(points: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, d)| *d > 0.0 && d.is_finite())
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    let tail = &usable[usable.len() / 5..];
    if tail.len() < MIN_FIT_POINTS {
        return Err(Error::Precondition(format!(
            "contraction fit needs ≥ {MIN_FIT_POINTS} points, got {}",
            tail.len()
        )));
    }
    let n = tail.len() as f64;
    let mean_t = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in tail {
        sxy += (t - mean_t) * (y - mean_y);
        sxx += (t - mean_t) * (t - mean_t);
    }
    if sxx == 0.0 {
        return Err(Error::Precondition("contraction fit needs distinct times".into()));
    }
    Ok((sxy / sxx).exp())
}

/// Contraction fit over the recorded iterates of `trajectory` before it
/// reached `ε` (the hitting record itself is excluded).
pub fn fit_contraction(trajectory: &Trajectory, eps: f64) -> Result<f64> {
    let reached = trajectory.status == Termination::ReachedEpsilon;
    let points: Vec<(f64, f64)> = trajectory
        .distances()
        .filter(|&(_, d)| !(reached && d <= eps))
        .map(|(t, d)| (t as f64, d))
        .collect();
    fit_contraction_series(&points)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::games::random_interaction;
    use crate::rng::Rng64;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn omd_and_iu_rates_are_scale_covariant(seed in 0u64..1000, s in 0.1f64..10.0) {
            let mut rng = Rng64::new(seed);
            let c = random_interaction(4, 4, &mut rng);
            let base = SpectralSummary::of_game(&crate::games::BilinearGame::new(c.clone())).unwrap();
            let scaled = SpectralSummary::of_game(&crate::games::BilinearGame::new(c.scale(s))).unwrap();
            for alg in [Algorithm::Omd, Algorithm::Iu] {
                let a = recommend(alg, &base, None, 0.5, 1e-6).unwrap();
                let b = recommend(alg, &scaled, None, 0.5, 1e-6).unwrap();
                prop_assert!((b.eta * s - a.eta).abs() <= 1e-9 * a.eta);
                let (ta, tb) = (a.theoretical_t as f64, b.theoretical_t as f64);
                prop_assert!((ta - tb).abs() <= 1.0 + 1e-12 * base.kappa * ta);
            }
        }

        #[test]
        fn certificate_identities_hold(seed in 0u64..1000, frac in 0.05f64..1.0) {
            let mut rng = Rng64::new(seed);
            let c = random_interaction(3, 3, &mut rng);
            let eta = frac / (2.0 * op_norm(&c).unwrap());
            let cert = certify_omd_factorization(&c, eta).unwrap();
            prop_assert!(cert.max_error() < 1e-9);
        }
    }
}
