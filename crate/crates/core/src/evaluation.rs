//! Metrics: exact Wasserstein-1 between equal-weight samples, covariance
//! error, and a Monte Carlo estimate of the covariance-game value.

use crate::error::{Error, Result};
use crate::games::{CovarianceGame, CovarianceParams};
use crate::linalg::{dot, Matrix};
use crate::par::{map_indexed, Execution};
use crate::rng::Rng64;

/// Largest sample size accepted by [`emd_bruteforce`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// `n` points in `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Dimension("sample set is empty".into()))?;
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("points must share a positive dimension".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain("sample coordinates must be finite".into()));
        }
        Ok(Self { dim, points })
    }

    /// One point per row, whitespace separated.
    pub fn parse_text(text: &str) -> Result<Self> {
        let m = Matrix::parse_text(text)?;
        Self::new((0..m.rows()).map(|i| m.row(i).to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmdResult {
    /// `(1/n) Σᵢ ‖aᵢ − b_{π(i)}‖`.
    pub cost: f64,
    /// `assignment[i] = π(i)`.
    pub assignment: Vec<usize>,
}

fn check_pair(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "sample sets differ: {}x{} vs {}x{}",
            a.len(),
            a.dim(),
            b.len(),
            b.dim()
        )));
    }
    Ok(())
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Row-major `n x n` matrix of Euclidean distances.
pub fn distance_matrix(a: &SampleSet, b: &SampleSet, exec: Execution) -> Vec<Vec<f64>> {
    map_indexed(a.len(), exec, |i| {
        b.points.iter().map(|y| euclidean(&a.points[i], y)).collect()
    })
}

fn assignment_cost(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let n = assignment.len();
    assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / n as f64
}

/// Exact W₁ between equal-size, equal-weight samples under Euclidean cost.
///
/// Solves the assignment problem with the O(n³) Hungarian method, then
/// returns the lexicographically smallest optimal assignment.
pub fn emd(a: &SampleSet, b: &SampleSet) -> Result<EmdResult> {
    emd_with(a, b, Execution::default())
}

pub fn emd_with(a: &SampleSet, b: &SampleSet, exec: Execution) -> Result<EmdResult> {
    check_pair(a, b)?;
    let cost = distance_matrix(a, b, exec);
    let assignment = min_cost_assignment(&cost);
    Ok(EmdResult {
        cost: assignment_cost(&cost, &assignment),
        assignment,
    })
}

/// Lexicographically smallest minimum-cost perfect matching of a square
/// cost matrix.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let (mut row_to_col, u, v) = hungarian(cost);
    let scale = cost.iter().flatten().fold(1.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-11 * scale;
    let tight = |i: usize, j: usize| cost[i][j] - u[i] - v[j] <= tol;
    lexicographic_refine(n, &mut row_to_col, tight);
    row_to_col
}

/// Shortest-augmenting-path Hungarian method. Returns the row assignment
/// and dual potentials `(u, v)` with `cost[i][j] − u[i] − v[j] ≥ 0`,
/// equality on matched pairs.
fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    // 1-based columns; column 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[col_row[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites a perfect matching of the tight-edge graph into the
/// lexicographically smallest one, fixing rows in order.
///
/// Row `i` can move to a tight column `j` iff its current column is
/// reachable from `j` along alternating paths through unfixed rows.
fn lexicographic_refine(n: usize, row_to_col: &mut [usize], tight: impl Fn(usize, usize) -> bool) {
    let mut col_to_row = vec![0; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let edge = |x: usize, y: usize, row_to_col: &[usize]| row_to_col[x] == y || tight(x, y);

    for i in 0..n {
        let home = row_to_col[i];
        // reverse reachability towards `home`, using rows > i
        let mut reaches = vec![false; n];
        reaches[home] = true;
        let mut queue = vec![home];
        while let Some(y) = queue.pop() {
            for x in (i + 1)..n {
                let y0 = row_to_col[x];
                if !reaches[y0] && edge(x, y, row_to_col) {
                    reaches[y0] = true;
                    queue.push(y0);
                }
            }
        }
        let target = (0..n)
            .find(|&j| col_to_row[j] >= i && reaches[j] && edge(i, j, row_to_col))
            .expect("current column is always a candidate");
        if target == home {
            continue;
        }
        // forward BFS target ⇝ home with parent links
        let mut parent = vec![usize::MAX; n];
        parent[target] = target;
        let mut frontier = std::collections::VecDeque::from([target]);
        while let Some(y) = frontier.pop_front() {
            if y == home {
                break;
            }
            let x = col_to_row[y];
            for y2 in 0..n {
                if parent[y2] == usize::MAX
                    && reaches[y2]
                    && col_to_row[y2] >= i
                    && y2 != y
                    && edge(x, y2, row_to_col)
                {
                    parent[y2] = y;
                    frontier.push_back(y2);
                }
            }
        }
        let mut path = vec![home];
        while *path.last().unwrap() != target {
            let prev = parent[*path.last().unwrap()];
            path.push(prev);
        }
        path.reverse(); // target, ..., home
        let rows: Vec<usize> = path.iter().map(|&y| col_to_row[y]).collect();
        for k in 0..path.len() - 1 {
            row_to_col[rows[k]] = path[k + 1];
            col_to_row[path[k + 1]] = rows[k];
        }
        row_to_col[i] = target;
        col_to_row[target] = i;
    }
}

/// Exhaustive minimum over all `n!` assignments, visited in lexicographic
/// order so the first optimum found is the lexicographically smallest.
pub fn emd_bruteforce(a: &SampleSet, b: &SampleSet) -> Result<EmdResult> {
    check_pair(a, b)?;
    let n = a.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::Refused(format!(
            "brute-force EMD limited to n ≤ {BRUTE_FORCE_MAX}, got {n}"
        )));
    }
    let cost = distance_matrix(a, b, Execution::Sequential);
    let scale = cost.iter().flatten().fold(1.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-11 * scale;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_sum: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    while next_permutation(&mut perm) {
        let s: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if s < best_sum - tol {
            best_sum = s;
            best.copy_from_slice(&perm);
        }
    }
    Ok(EmdResult {
        cost: assignment_cost(&cost, &best),
        assignment: best,
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `‖Σ − VVᵀ‖_F`.
pub fn frobenius_cov_error(sigma: &Matrix, v: &Matrix) -> Result<f64> {
    let d = sigma.rows();
    if !sigma.is_square() || v.rows() != d {
        return Err(Error::Dimension(format!(
            "Σ is {:?}, V is {:?}",
            sigma.shape(),
            v.shape()
        )));
    }
    Ok(sigma.sub(&v.matmul(&v.transpose())).frobenius_norm())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

const MC_CHUNK: usize = 1 << 15;

/// Monte Carlo estimate of `E f(X) − E f(VZ)` with `X ~ N(0, AAᵀ)`,
/// `Z ~ N(0, I_k)` and `f(x) = Σ vᵢ ⟨wᵢ, x⟩₊`.
///
/// Samples are drawn in fixed chunks, each from its own jump-ahead stream,
/// and combined in chunk order, so the estimate is identical whether the
/// chunks run sequentially or in parallel.
pub fn mc_value_estimate(
    game: &CovarianceGame,
    params: &CovarianceParams,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_value_estimate_with(game, params, n_samples, seed, Execution::default())
}

pub fn mc_value_estimate_with(
    game: &CovarianceGame,
    params: &CovarianceParams,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    game.check_params(params)?;
    if n_samples < 1000 {
        return Err(Error::Precondition(format!(
            "Monte Carlo estimate needs ≥ 1000 samples, got {n_samples}"
        )));
    }
    let a = game.target_factor();
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let critic = |x: &[f64]| -> f64 {
        (0..game.hidden())
            .map(|i| params.v[i] * dot(params.w.row(i), x).max(0.0))
            .sum()
    };
    let partial = map_indexed(chunks, exec, |c| {
        let mut rng = Rng64::stream(seed, c as u64);
        let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..count {
            let x = a.matvec(&rng.normal_vec(a.cols()));
            let fake = params.generator.matvec(&rng.normal_vec(game.k()));
            let diff = critic(&x) - critic(&fake);
            sum += diff;
            sum_sq += diff * diff;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        samples: n_samples,
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn sample_set(n: usize, dim: usize) -> impl Strategy<Value = SampleSet> {
        proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, dim), n)
            .prop_map(|p| SampleSet::new(p).unwrap())
    }

    fn triple() -> impl Strategy<Value = (SampleSet, SampleSet, SampleSet)> {
        (1usize..=7, 1usize..=3)
            .prop_flat_map(|(n, d)| (sample_set(n, d), sample_set(n, d), sample_set(n, d)))
    }

    proptest! {
        #[test]
        fn emd_is_a_metric((a, b, c) in triple()) {
            let ab = emd(&a, &b).unwrap().cost;
            let ba = emd(&b, &a).unwrap().cost;
            let bc = emd(&b, &c).unwrap().cost;
            let ac = emd(&a, &c).unwrap().cost;
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert_eq!(emd(&a, &a).unwrap().cost, 0.0);
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn emd_equals_bruteforce((a, b, _c) in triple()) {
            let fast = emd(&a, &b).unwrap();
            let slow = emd_bruteforce(&a, &b).unwrap();
            prop_assert!((fast.cost - slow.cost).abs() <= 1e-12);
        }
    }
}
