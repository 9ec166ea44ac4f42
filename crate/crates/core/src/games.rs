//! Two-player zero-sum games `min_θ max_ω U(θ, ω)`.
//!
//! Every game reports `grad_omega` as the *ascent* direction for ω, so all
//! dynamics share the update shape `θ ← θ − η g_θ`, `ω ← ω + η g_ω`.
//!
//! Hessian blocks follow the convention
//! `A = ∇θθU`, `B = −∇ωωU`, `C = ∇θωU`, so a stable equilibrium has
//! `A ≻ 0` and `B ≻ 0`.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, svd, Matrix, SYMMETRY_TOL};
use crate::rng::Rng64;

/// `E[max(g, 0)]` for `g ~ N(0, 1)`, i.e. `1/√(2π)`.
pub const COVARIANCE_CONST: f64 = 0.398_942_280_401_432_7;

/// Interaction matrices with `σ_min` below this are redrawn.
pub const MIN_SINGULAR_VALUE: f64 = 1e-6;

/// Constant second-derivative blocks of a game with an affine gradient field.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianBlocks {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl HessianBlocks {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let (p, q) = c.shape();
        if a.shape() != (p, p) || b.shape() != (q, q) {
            return Err(Error::Dimension(format!(
                "blocks A {:?}, B {:?} do not fit C {p}x{q}",
                a.shape(),
                b.shape()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            if m.asymmetry() > SYMMETRY_TOL * m.max_abs().max(1.0) {
                return Err(Error::Domain(format!("block {name} is not symmetric")));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn p(&self) -> usize {
        self.c.rows()
    }

    pub fn q(&self) -> usize {
        self.c.cols()
    }

    /// Jacobian of the descent field `(g_θ, −g_ω)`: `[[A, C], [−Cᵀ, B]]`.
    pub fn jacobian(&self) -> Matrix {
        Matrix::block2(&self.a, &self.c, &self.c.transpose().scale(-1.0), &self.b)
    }

    pub fn is_bilinear(&self) -> bool {
        self.a.max_abs() == 0.0 && self.b.max_abs() == 0.0
    }
}

pub trait Game: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim_theta(&self) -> usize;
    fn dim_omega(&self) -> usize;
    fn value(&self, theta: &[f64], omega: &[f64]) -> Result<f64>;
    /// Returns `(∇θU, ∇ωU)`.
    fn gradients(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;

    fn hessian_blocks(&self) -> Option<&HessianBlocks> {
        None
    }

    fn equilibrium(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Progress metric recorded in trajectories. Defaults to the Euclidean
    /// distance to the known equilibrium.
    fn distance(&self, theta: &[f64], omega: &[f64]) -> Option<f64> {
        let (ts, ws) = self.equilibrium()?;
        let d2: f64 = theta
            .iter()
            .zip(&ts)
            .chain(omega.iter().zip(&ws))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Some(d2.sqrt())
    }

    fn check_dims(&self, theta: &[f64], omega: &[f64]) -> Result<()> {
        if theta.len() != self.dim_theta() || omega.len() != self.dim_omega() {
            return Err(Error::Dimension(format!(
                "{} game expects θ ∈ R^{}, ω ∈ R^{}; got {} and {}",
                self.name(),
                self.dim_theta(),
                self.dim_omega(),
                theta.len(),
                omega.len()
            )));
        }
        Ok(())
    }
}

/// `U(θ, ω) = θᵀCω`.
#[derive(Clone, Debug)]
pub struct BilinearGame {
    blocks: HessianBlocks,
}

impl BilinearGame {
    pub fn new(c: Matrix) -> Self {
        let (p, q) = c.shape();
        Self {
            blocks: HessianBlocks {
                a: Matrix::zeros(p, p),
                b: Matrix::zeros(q, q),
                c,
            },
        }
    }

    pub fn interaction(&self) -> &Matrix {
        &self.blocks.c
    }

    /// `(Cω, Cᵀθ)`.
    pub fn grads(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(theta, omega)?;
        let c = &self.blocks.c;
        Ok((c.matvec(omega), c.tr_matvec(theta)))
    }
}

impl Game for BilinearGame {
    fn name(&self) -> &'static str {
        "bilinear"
    }
    fn dim_theta(&self) -> usize {
        self.blocks.p()
    }
    fn dim_omega(&self) -> usize {
        self.blocks.q()
    }
    fn value(&self, theta: &[f64], omega: &[f64]) -> Result<f64> {
        self.check_dims(theta, omega)?;
        Ok(dot(theta, &self.blocks.c.matvec(omega)))
    }
    fn gradients(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.grads(theta, omega)
    }
    fn hessian_blocks(&self) -> Option<&HessianBlocks> {
        Some(&self.blocks)
    }
    fn equilibrium(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; self.blocks.p()], vec![0.0; self.blocks.q()]))
    }
}

/// `U(θ, ω) = ½θᵀAθ − ½ωᵀBω + θᵀCω` with constant symmetric `A`, `B`.
#[derive(Clone, Debug)]
pub struct QuadraticGame {
    blocks: HessianBlocks,
}

impl QuadraticGame {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        Ok(Self {
            blocks: HessianBlocks::new(a.symmetrized_if_square(), b.symmetrized_if_square(), c)?,
        })
    }

    /// The `A = B = I` game whose SGA iterates cannot contract faster than
    /// `λ_min(CᵀC)/(1+λ_min(CᵀC))` per step.
    pub fn identity_blocks(c: Matrix) -> Self {
        let (p, q) = c.shape();
        Self {
            blocks: HessianBlocks {
                a: Matrix::identity(p),
                b: Matrix::identity(q),
                c,
            },
        }
    }

    pub fn blocks(&self) -> &HessianBlocks {
        &self.blocks
    }

    /// `(Aθ + Cω, −Bω + Cᵀθ)`.
    pub fn grads(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(theta, omega)?;
        let HessianBlocks { a, b, c } = &self.blocks;
        let g_theta = add(&a.matvec(theta), &c.matvec(omega));
        let g_omega = sub(&c.tr_matvec(theta), &b.matvec(omega));
        Ok((g_theta, g_omega))
    }
}

impl Game for QuadraticGame {
    fn name(&self) -> &'static str {
        "quadratic"
    }
    fn dim_theta(&self) -> usize {
        self.blocks.p()
    }
    fn dim_omega(&self) -> usize {
        self.blocks.q()
    }
    fn value(&self, theta: &[f64], omega: &[f64]) -> Result<f64> {
        self.check_dims(theta, omega)?;
        let HessianBlocks { a, b, c } = &self.blocks;
        Ok(0.5 * dot(theta, &a.matvec(theta)) - 0.5 * dot(omega, &b.matvec(omega))
            + dot(theta, &c.matvec(omega)))
    }
    fn gradients(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.grads(theta, omega)
    }
    fn hessian_blocks(&self) -> Option<&HessianBlocks> {
        Some(&self.blocks)
    }
    fn equilibrium(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; self.blocks.p()], vec![0.0; self.blocks.q()]))
    }
}

trait SymmetrizeExt {
    fn symmetrized_if_square(self) -> Matrix;
}

impl SymmetrizeExt for Matrix {
    fn symmetrized_if_square(self) -> Matrix {
        if self.is_square() && self.asymmetry() <= SYMMETRY_TOL * self.max_abs().max(1.0) {
            self.symmetrized()
        } else {
            self
        }
    }
}

/// WGAN value of a linear generator `g(z) = Vz` against a one-hidden-layer
/// rectifier critic `f(x) = Σ vᵢ ⟨wᵢ, x⟩₊`, with target `N(0, AAᵀ)`.
///
/// Closed form: `U = c Σᵢ vᵢ (‖Aᵀwᵢ‖ − ‖Vᵀwᵢ‖)` with `c = 1/√(2π)`.
/// Parameters are packed as `θ = vec(V)` (row-major, `d x k`) and
/// `ω = (w₁, …, w_H, v₁, …, v_H)`.
#[derive(Clone, Debug)]
pub struct CovarianceGame {
    a: Matrix,
    k: usize,
    hidden: usize,
}

/// Generator and critic parameters of a [`CovarianceGame`].
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceParams {
    /// Generator matrix `V`, `d x k`.
    pub generator: Matrix,
    /// Critic input weights, one row `wᵢ ∈ R^d` per hidden unit.
    pub w: Matrix,
    /// Critic output weights `vᵢ`.
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceGrads {
    pub generator: Matrix,
    pub w: Matrix,
    pub v: Vec<f64>,
}

impl CovarianceGame {
    pub fn new(a: Matrix, k: usize, hidden: usize) -> Result<Self> {
        if k == 0 || hidden == 0 {
            return Err(Error::Dimension("latent dim and hidden units must be ≥ 1".into()));
        }
        Ok(Self { a, k, hidden })
    }

    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn target_factor(&self) -> &Matrix {
        &self.a
    }

    /// Target covariance `Σ = AAᵀ`.
    pub fn sigma(&self) -> Matrix {
        self.a.matmul(&self.a.transpose())
    }

    pub fn check_params(&self, params: &CovarianceParams) -> Result<()> {
        let d = self.d();
        if params.generator.shape() != (d, self.k)
            || params.w.shape() != (self.hidden, d)
            || params.v.len() != self.hidden
        {
            return Err(Error::Dimension(format!(
                "covariance game expects V {}x{}, w {}x{}, v {}; got {:?}, {:?}, {}",
                d,
                self.k,
                self.hidden,
                d,
                self.hidden,
                params.generator.shape(),
                params.w.shape(),
                params.v.len()
            )));
        }
        Ok(())
    }

    pub fn covariance_value(&self, params: &CovarianceParams) -> Result<f64> {
        self.check_params(params)?;
        let mut total = 0.0;
        for i in 0..self.hidden {
            let wi = params.w.row(i);
            total += params.v[i]
                * (norm(&self.a.tr_matvec(wi)) - norm(&params.generator.tr_matvec(wi)));
        }
        Ok(COVARIANCE_CONST * total)
    }

    /// Analytic partials of the closed-form value. The norms are not
    /// differentiable at zero, so `‖Aᵀwᵢ‖ = 0` or `‖Vᵀwᵢ‖ = 0` is an error.
    pub fn covariance_grads(&self, params: &CovarianceParams) -> Result<CovarianceGrads> {
        self.check_params(params)?;
        let (d, k) = (self.d(), self.k);
        let c = COVARIANCE_CONST;
        let mut g_gen = Matrix::zeros(d, k);
        let mut g_w = Matrix::zeros(self.hidden, d);
        let mut g_v = vec![0.0; self.hidden];
        for i in 0..self.hidden {
            let wi = params.w.row(i);
            let at_w = self.a.tr_matvec(wi);
            let vt_w = params.generator.tr_matvec(wi);
            let (na, nv) = (norm(&at_w), norm(&vt_w));
            if na == 0.0 || nv == 0.0 {
                return Err(Error::NonDifferentiable(format!(
                    "hidden unit {i}: ‖Aᵀw‖ = {na:e}, ‖Vᵀw‖ = {nv:e}"
                )));
            }
            let vi = params.v[i];
            g_v[i] = c * (na - nv);
            // ∂‖Vᵀw‖/∂V = w (Vᵀw)ᵀ / ‖Vᵀw‖
            for r in 0..d {
                for s in 0..k {
                    g_gen[(r, s)] -= c * vi * wi[r] * vt_w[s] / nv;
                }
            }
            // ∂‖Mᵀw‖/∂w = M Mᵀw / ‖Mᵀw‖
            let da = self.a.matvec(&at_w);
            let dv = params.generator.matvec(&vt_w);
            for r in 0..d {
                g_w[(i, r)] = c * vi * (da[r] / na - dv[r] / nv);
            }
        }
        Ok(CovarianceGrads {
            generator: g_gen,
            w: g_w,
            v: g_v,
        })
    }

    pub fn pack(&self, params: &CovarianceParams) -> (Vec<f64>, Vec<f64>) {
        let theta = params.generator.as_slice().to_vec();
        let mut omega = params.w.as_slice().to_vec();
        omega.extend_from_slice(&params.v);
        (theta, omega)
    }

    pub fn unpack(&self, theta: &[f64], omega: &[f64]) -> Result<CovarianceParams> {
        self.check_dims(theta, omega)?;
        let d = self.d();
        let split = self.hidden * d;
        Ok(CovarianceParams {
            generator: Matrix::new(d, self.k, theta.to_vec())?,
            w: Matrix::new(self.hidden, d, omega[..split].to_vec())?,
            v: omega[split..].to_vec(),
        })
    }

    /// `‖AAᵀ − VVᵀ‖_F` for the packed generator.
    pub fn covariance_error(&self, theta: &[f64]) -> Option<f64> {
        let v = Matrix::new(self.d(), self.k, theta.to_vec()).ok()?;
        crate::evaluation::frobenius_cov_error(&self.sigma(), &v).ok()
    }
}

impl Game for CovarianceGame {
    fn name(&self) -> &'static str {
        "covariance"
    }
    fn dim_theta(&self) -> usize {
        self.d() * self.k
    }
    fn dim_omega(&self) -> usize {
        self.hidden * (self.d() + 1)
    }
    fn value(&self, theta: &[f64], omega: &[f64]) -> Result<f64> {
        self.covariance_value(&self.unpack(theta, omega)?)
    }
    fn gradients(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.covariance_grads(&self.unpack(theta, omega)?)?;
        let mut g_omega = g.w.as_slice().to_vec();
        g_omega.extend_from_slice(&g.v);
        Ok((g.generator.as_slice().to_vec(), g_omega))
    }
    /// No closed-form equilibrium; progress is the covariance error.
    fn distance(&self, theta: &[f64], _omega: &[f64]) -> Option<f64> {
        self.covariance_error(theta)
    }
}

/// `p x q` matrix with i.i.d. uniform `[0, 1)` entries, redrawn from the same
/// stream until `σ_min ≥ MIN_SINGULAR_VALUE`.
pub fn random_interaction(p: usize, q: usize, rng: &mut Rng64) -> Matrix {
    assert!(p >= 1 && q >= 1, "empty interaction matrix");
    loop {
        let c = Matrix::from_fn(p, q, |_, _| rng.uniform());
        match svd(&c) {
            Ok(s) if s.min() >= MIN_SINGULAR_VALUE => return c,
            _ => continue,
        }
    }
}

/// Bilinear game with a uniform `[0, 1)` interaction matrix.
pub fn random_bilinear(p: usize, q: usize, seed: u64) -> BilinearGame {
    BilinearGame::new(random_interaction(p, q, &mut Rng64::new(seed)))
}

/// Random symmetric positive definite `n x n` matrix with `λ_min ≥ floor`:
/// `floor·I + GGᵀ/n` with standard normal `G`.
pub fn random_spd(n: usize, floor: f64, rng: &mut Rng64) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.normal());
    g.matmul(&g.transpose())
        .scale(1.0 / n as f64)
        .add(&Matrix::identity(n).scale(floor))
        .symmetrized()
}

/// Stable quadratic game: `A`, `B` random SPD with `λ_min ≥ floor`, uniform `C`.
pub fn random_stable_quadratic(p: usize, q: usize, floor: f64, rng: &mut Rng64) -> QuadraticGame {
    let a = random_spd(p, floor, rng);
    let b = random_spd(q, floor, rng);
    let c = Matrix::from_fn(p, q, |_, _| rng.uniform());
    QuadraticGame::new(a, b, c).expect("generated blocks are consistent")
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
