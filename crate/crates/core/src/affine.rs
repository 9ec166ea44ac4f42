//! Exact affine form of the update rules on constant-Hessian games.
//!
//! With constant blocks the descent field is `F(x) = Jx + F(0)`, so every
//! rule is an affine map `z ↦ Mz + c`. OMD carries two iterates and acts on
//! the stacked pair `z = [x_t; x_{t−1}]`. The map supports a tight scanning
//! loop for long horizons and jumps of `k` steps by repeated squaring.

use crate::dynamics::{sga_step, Algorithm, State};
use crate::error::{Error, Result};
use crate::games::Game;
use crate::linalg::{solve, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    algorithm: Algorithm,
    m: Matrix,
    c: Vec<f64>,
    n: usize,
    p: usize,
}

/// Iterate `t` of a run in lifted coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Lifted {
    pub t: u64,
    pub z: Vec<f64>,
}

impl AffineMap {
    pub fn new<G: Game + ?Sized>(
        game: &G,
        algorithm: Algorithm,
        eta: f64,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let blocks = game.hessian_blocks().ok_or_else(|| {
            Error::UnsupportedGame(format!(
                "affine form needs constant Hessian blocks; {} game has none",
                game.name()
            ))
        })?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Precondition(format!("step size must be positive, got {eta}")));
        }
        let p = game.dim_theta();
        let n = p + game.dim_omega();
        let (g_theta, g_omega) = game.gradients(&vec![0.0; p], &vec![0.0; n - p])?;
        let f0: Vec<f64> = g_theta.into_iter().chain(g_omega.into_iter().map(|g| -g)).collect();
        let j = blocks.jacobian();
        let id = Matrix::identity(n);
        let gamma = match (algorithm.uses_gamma(), gamma) {
            (true, Some(g)) if g >= 0.0 && g.is_finite() => g,
            (true, _) => {
                return Err(Error::Precondition(format!("{algorithm} needs a non-negative γ")))
            }
            (false, _) => 0.0,
        };
        let scaled = |v: &[f64], s: f64| -> Vec<f64> { v.iter().map(|x| s * x).collect() };
        let (m, c) = match algorithm {
            Algorithm::Sga => (id.sub(&j.scale(eta)), scaled(&f0, -eta)),
            Algorithm::Pm => {
                // x − ηF(x − γF(x))
                let m = id.sub(&j.scale(eta)).add(&j.matmul(&j).scale(eta * gamma));
                let c = id.sub(&j.scale(gamma)).matvec(&f0);
                (m, scaled(&c, -eta))
            }
            Algorithm::Co => {
                // x − η(F + γJᵀF)
                let jt = j.transpose();
                let m = id.sub(&j.scale(eta)).sub(&jt.matmul(&j).scale(eta * gamma));
                let c = id.add(&jt.scale(gamma)).matvec(&f0);
                (m, scaled(&c, -eta))
            }
            Algorithm::Iu => {
                let lhs = id.add(&j.scale(eta));
                let mut cols = Vec::with_capacity(n);
                for k in 0..n {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    cols.push(solve(&lhs, &e).map_err(|e| {
                        Error::NumericalFailure(format!("implicit system singular: {e}"))
                    })?);
                }
                let inv = Matrix::from_fn(n, n, |i, k| cols[k][i]);
                let c = scaled(&inv.matvec(&f0), -eta);
                (inv, c)
            }
            Algorithm::Omd => {
                // [x_{t+1}; x_t] = [[I − 2ηJ, ηJ], [I, 0]] [x_t; x_{t−1}] + [−ηF(0); 0]
                let m = Matrix::block2(
                    &id.sub(&j.scale(2.0 * eta)),
                    &j.scale(eta),
                    &id,
                    &Matrix::zeros(n, n),
                );
                let c = scaled(&f0, -eta).into_iter().chain(std::iter::repeat_n(0.0, n)).collect();
                (m, c)
            }
        };
        Ok(Self { algorithm, m, c, n, p })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn offset(&self) -> &[f64] {
        &self.c
    }

    /// Dimension of the lifted state.
    pub fn lifted_dim(&self) -> usize {
        self.c.len()
    }

    /// Lifts a start point into map coordinates. OMD's second iterate is
    /// `warm_start` if given, else one SGA step, and the lifted run starts
    /// at `t = 1`.
    pub fn lift<G: Game + ?Sized>(
        &self,
        game: &G,
        start: &State,
        eta: f64,
        warm_start: Option<&State>,
    ) -> Result<Lifted> {
        game.check_dims(&start.theta, &start.omega)?;
        let x0 = start.stacked();
        if self.algorithm != Algorithm::Omd {
            return Ok(Lifted { t: 0, z: x0 });
        }
        let x1 = match warm_start {
            Some(w) => w.clone(),
            None => sga_step(game, start, eta)?,
        };
        Ok(Lifted {
            t: 1,
            z: x1.stacked().into_iter().chain(x0).collect(),
        })
    }

    /// Physical state held in lifted coordinates.
    pub fn physical(&self, z: &[f64]) -> State {
        State::from_stacked(&z[..self.n], self.p)
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.m.matvec(z);
        out.iter_mut().zip(&self.c).for_each(|(o, c)| *o += c);
        out
    }

    /// Composition `other ∘ self`.
    fn then(&self, other: &AffineMap) -> AffineMap {
        let mut c = other.m.matvec(&self.c);
        c.iter_mut().zip(&other.c).for_each(|(x, y)| *x += y);
        AffineMap {
            m: other.m.matmul(&self.m),
            c,
            ..self.clone()
        }
    }

    /// The map applied `k` times, by repeated squaring.
    pub fn power(&self, mut k: u64) -> AffineMap {
        let d = self.lifted_dim();
        let mut acc = AffineMap {
            m: Matrix::identity(d),
            c: vec![0.0; d],
            ..self.clone()
        };
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.then(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.then(&base);
            }
        }
        acc
    }

    /// Lifted iterate at time `t ≥ from.t`.
    pub fn advance(&self, from: &Lifted, t: u64) -> Result<Lifted> {
        if t < from.t {
            return Err(Error::Precondition(format!("cannot advance from t={} back to t={t}", from.t)));
        }
        let z = self.power(t - from.t).apply(&from.z);
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite iterate at t={t}")));
        }
        Ok(Lifted { t, z })
    }

    /// Visits the distance to equilibrium of every iterate from `start`
    /// (t = 0) up to `cap`, stopping early when `visit` returns `false`.
    /// Returns the last time visited.
    pub fn scan<G: Game + ?Sized>(
        &self,
        game: &G,
        start: &State,
        eta: f64,
        warm_start: Option<&State>,
        cap: u64,
        mut visit: impl FnMut(u64, f64) -> bool,
    ) -> Result<u64> {
        let target = stacked_equilibrium(game)?;
        let dist = |x: &[f64]| -> f64 {
            x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        if !visit(0, dist(&start.stacked())) || cap == 0 {
            return Ok(0);
        }
        let lifted = self.lift(game, start, eta, warm_start)?;
        let dim = self.lifted_dim();
        let mut z = lifted.z;
        let mut next = vec![0.0; dim];
        let m = self.m.as_slice();
        let mut t = lifted.t;
        loop {
            if t > 0 && !visit(t, dist(&z[..self.n])) {
                return Ok(t);
            }
            if t >= cap {
                return Ok(t);
            }
            for (i, out) in next.iter_mut().enumerate() {
                let row = &m[i * dim..(i + 1) * dim];
                *out = row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.c[i];
            }
            std::mem::swap(&mut z, &mut next);
            if !z[..self.n].iter().all(|x| x.is_finite()) {
                return Err(Error::NumericalFailure(format!("non-finite iterate at t={}", t + 1)));
            }
            t += 1;
        }
    }

    /// First times the distance drops to each threshold in `eps`, scanning
    /// up to `cap`. Entries stay `None` for thresholds not reached.
    pub fn first_hits<G: Game + ?Sized>(
        &self,
        game: &G,
        start: &State,
        eta: f64,
        warm_start: Option<&State>,
        eps: &[f64],
        cap: u64,
    ) -> Result<Vec<Option<u64>>> {
        let mut hits = vec![None; eps.len()];
        self.scan(game, start, eta, warm_start, cap, |t, d| {
            for (h, &e) in hits.iter_mut().zip(eps) {
                if h.is_none() && d <= e {
                    *h = Some(t);
                }
            }
            !hits.iter().all(Option::is_some)
        })?;
        Ok(hits)
    }

    /// Distance to equilibrium at time `t`, reached by one jump.
    pub fn distance_at<G: Game + ?Sized>(
        &self,
        game: &G,
        start: &State,
        eta: f64,
        warm_start: Option<&State>,
        t: u64,
    ) -> Result<f64> {
        let target = stacked_equilibrium(game)?;
        let x = if t == 0 {
            start.stacked()
        } else {
            let lifted = self.lift(game, start, eta, warm_start)?;
            self.advance(&lifted, t)?.z
        };
        Ok(x[..self.n].iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }
}

/// Stacked `(θ*, ω*)`.
pub fn stacked_equilibrium<G: Game + ?Sized>(game: &G) -> Result<Vec<f64>> {
    let (theta, omega) = game.equilibrium().ok_or_else(|| {
        Error::UnsupportedGame(format!("{} game has no known equilibrium", game.name()))
    })?;
    Ok(theta.into_iter().chain(omega).collect())
}
