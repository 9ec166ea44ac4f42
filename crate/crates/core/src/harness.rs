//! Experiment runner behind the command-line tool: builds games from a
//! configuration, runs every (seed, algorithm) cell, writes CSV artifacts,
//! and runs the invariant suite.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checks::{self, CheckResult, CheckRun, CheckStatus};
use crate::config::{AlgorithmSpec, ExperimentConfig, GameSpec, StepSize};
use crate::dynamics::{run, Algorithm, DynamicsConfig, State, Trajectory};
use crate::error::{Error, Result};
use crate::evaluation::{emd, EmdResult, SampleSet};
use crate::games::{random_interaction, random_spd, BilinearGame, CovarianceGame, Game, QuadraticGame};
use crate::linalg::Matrix;
use crate::par::{map_indexed, Execution};
use crate::rates::{fit_contraction, gd_iteration_bound, recommend, RateReport, SpectralSummary};
use crate::rng::Rng64;

/// Header of every trajectory CSV.
pub const TRAJECTORY_HEADER: [&str; 7] = ["run_id", "algorithm", "t", "dist", "theta_norm", "omega_norm", "value"];

/// Header of `summary.csv`.
pub const SUMMARY_HEADER: [&str; 13] = [
    "run_id",
    "algorithm",
    "seed",
    "eta",
    "gamma",
    "status",
    "final_t",
    "final_dist",
    "theoretical_t",
    "theoretical_contraction",
    "observed_t",
    "fitted_contraction",
    "estimate_only",
];

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `printf("%.{sig}g")`.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sig = sig.max(1);
    let exp = format!("{:.*e}", sig - 1, x)
        .split_once('e')
        .and_then(|(_, e)| e.parse::<i32>().ok())
        .unwrap_or(0);
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -4 || exp >= sig as i32 {
        let s = format!("{:.*e}", sig - 1, x);
        let (mant, e) = s.split_once('e').expect("exponent form");
        let e: i32 = e.parse().expect("exponent");
        format!("{}e{}{:02}", trim(mant.to_string()), if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    }
}

/// One row of a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub algorithm: String,
    pub t: u64,
    pub dist: f64,
    pub theta_norm: f64,
    pub omega_norm: f64,
    pub value: f64,
}

impl RunRecord {
    fn cells(&self) -> [String; 7] {
        [
            self.run_id.clone(),
            self.algorithm.clone(),
            self.t.to_string(),
            format_num(self.dist),
            format_num(self.theta_norm),
            format_num(self.omega_norm),
            format_num(self.value),
        ]
    }
}

pub fn trajectory_records(run_id: &str, traj: &Trajectory) -> Vec<RunRecord> {
    traj.records
        .iter()
        .map(|r| RunRecord {
            run_id: run_id.to_string(),
            algorithm: traj.algorithm.as_str().to_string(),
            t: r.t as u64,
            dist: r.dist,
            theta_norm: r.theta_norm,
            omega_norm: r.omega_norm,
            value: r.value,
        })
        .collect()
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in records {
        w.write_record(r.cells())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Parse(format!("unexpected trajectory header {header:?}")));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1))))
        .collect()
}

/// A game together with the start point drawn for one seed.
pub struct Cell {
    pub seed: u64,
    pub game: Box<dyn Game>,
    pub start: State,
}

/// Draws the game of `spec` and a start point on the sphere of radius `r`
/// around the equilibrium, both from one stream seeded by `seed`.
pub fn build_cell(spec: &GameSpec, r: f64, seed: u64) -> Result<Cell> {
    let mut rng = Rng64::new(seed);
    let game: Box<dyn Game> = match spec {
        GameSpec::Bilinear { p, q, c } => {
            let c = c.clone().unwrap_or_else(|| random_interaction(*p, *q, &mut rng));
            Box::new(BilinearGame::new(c))
        }
        GameSpec::LowerBound { p, q, c } => {
            let c = c.clone().unwrap_or_else(|| random_interaction(*p, *q, &mut rng));
            Box::new(QuadraticGame::identity_blocks(c))
        }
        GameSpec::Quadratic { p, q, a, b, c, floor } => {
            let a = a.clone().unwrap_or_else(|| random_spd(*p, *floor, &mut rng));
            let b = b.clone().unwrap_or_else(|| random_spd(*q, *floor, &mut rng));
            let c = c.clone().unwrap_or_else(|| random_interaction(*p, *q, &mut rng));
            Box::new(QuadraticGame::new(a, b, c)?)
        }
        GameSpec::Covariance { d, k, hidden, target } => {
            let a = target.clone().unwrap_or_else(|| Matrix::from_fn(*d, *d, |_, _| rng.normal()));
            Box::new(CovarianceGame::new(a, *k, *hidden)?)
        }
    };
    let p = game.dim_theta();
    let offset = rng.on_sphere(p + game.dim_omega(), r);
    let x: Vec<f64> = match game.equilibrium() {
        Some((t, w)) => t.into_iter().chain(w).zip(&offset).map(|(a, b)| a + b).collect(),
        None => offset,
    };
    Ok(Cell {
        seed,
        game,
        start: State::from_stacked(&x, p),
    })
}

/// Step size, γ, and (when the theorem applies) the rate report for one
/// algorithm on one game.
pub fn resolve_step(
    spec: &AlgorithmSpec,
    game: &dyn Game,
    r: f64,
    eps: f64,
) -> Result<(f64, Option<f64>, Option<RateReport>)> {
    if spec.algorithm.needs_constant_hessian() && game.hessian_blocks().is_none() {
        return Err(Error::UnsupportedGame(format!(
            "{} needs constant Hessian blocks, which the {} game does not have",
            spec.algorithm,
            game.name()
        )));
    }
    let report = SpectralSummary::of_game(game)
        .and_then(|s| recommend(spec.algorithm, &s, spec.gamma, r, eps))
        .ok();
    match spec.eta {
        StepSize::Fixed(eta) => Ok((eta, spec.gamma, report)),
        StepSize::Theorem => {
            let summary = SpectralSummary::of_game(game).map_err(|_| {
                Error::UnsupportedGame(format!(
                    "eta = theorem needs constant Hessian blocks; set eta for {} on the {} game",
                    spec.algorithm,
                    game.name()
                ))
            })?;
            let rep = recommend(spec.algorithm, &summary, spec.gamma, r, eps)?;
            Ok((rep.eta, spec.gamma, Some(rep)))
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub stride: Option<usize>,
    pub exec: Execution,
}

impl RunOptions {
    fn base_seed(&self, config: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or(config.seed)
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("results").join(&config.id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub eta: f64,
    pub gamma: Option<f64>,
    pub status: String,
    pub final_t: u64,
    pub final_dist: f64,
    pub theoretical_t: Option<u64>,
    pub theoretical_contraction: Option<f64>,
    pub observed_t: Option<u64>,
    pub fitted_contraction: Option<f64>,
    pub estimate_only: bool,
}

impl SummaryRow {
    fn cells(&self) -> Vec<String> {
        let opt_f = |x: Option<f64>| x.map(format_num).unwrap_or_default();
        let opt_u = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.run_id.clone(),
            self.algorithm.to_string(),
            self.seed.to_string(),
            format_num(self.eta),
            opt_f(self.gamma),
            self.status.clone(),
            self.final_t.to_string(),
            format_num(self.final_dist),
            opt_u(self.theoretical_t),
            opt_f(self.theoretical_contraction),
            opt_u(self.observed_t),
            opt_f(self.fitted_contraction),
            self.estimate_only.to_string(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<SummaryRow>,
    pub trajectory_files: Vec<PathBuf>,
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>4} {:>17} {:>10} {:>12} {:>12} {:>12}",
            "run_id", "alg", "status", "final_t", "final_dist", "T_bound", "fitted"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<24} {:>4} {:>17} {:>10} {:>12.4e} {:>12} {:>12}",
                r.run_id,
                r.algorithm.as_str(),
                r.status,
                r.final_t,
                r.final_dist,
                r.theoretical_t.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
                r.fitted_contraction.map(|c| format!("{c:.8}")).unwrap_or_else(|| "-".into()),
            )?;
        }
        write!(f, "wrote {} trajectories to {}", self.trajectory_files.len(), self.out_dir.display())
    }
}

fn run_id(config: &ExperimentConfig, seed: u64, alg: Algorithm) -> String {
    format!("{}-s{}-{}", config.id, seed, alg.as_str())
}

fn build_cells(config: &ExperimentConfig, base: u64) -> Result<Vec<Cell>> {
    (0..config.seeds as u64)
        .map(|i| build_cell(&config.game, config.r, base + i))
        .collect()
}

/// Runs every (seed, algorithm) cell and writes one trajectory CSV per
/// cell, `summary.csv`, and `manifest.csv` into the output directory.
pub fn cmd_run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let cells = build_cells(config, opts.base_seed(config))?;
    let stride = opts.stride.unwrap_or(config.stride).max(1);
    let mut tasks = Vec::new();
    for cell in &cells {
        for spec in &config.algorithms {
            let step = resolve_step(spec, cell.game.as_ref(), config.r, config.epsilon)?;
            tasks.push((cell, spec.algorithm, step));
        }
    }
    let out_dir = opts.out_dir(config);
    fs::create_dir_all(&out_dir)?;

    let results = map_indexed(tasks.len(), opts.exec, |i| -> Result<(SummaryRow, PathBuf)> {
        let (cell, alg, (eta, gamma, report)) = &tasks[i];
        let mut dc = DynamicsConfig::new(*alg, *eta, cell.start.clone())
            .with_epsilon(config.epsilon)
            .with_max_iters(config.max_iters)
            .with_stride(stride);
        dc.gamma = *gamma;
        let traj = run(cell.game.as_ref(), &dc)?;
        let id = run_id(config, cell.seed, *alg);
        let path = out_dir.join(format!("{id}.csv"));
        let file = fs::File::create(&path)?;
        write_records(std::io::BufWriter::new(file), &trajectory_records(&id, &traj))?;
        let last = traj.final_record();
        let row = SummaryRow {
            run_id: id,
            algorithm: *alg,
            seed: cell.seed,
            eta: *eta,
            gamma: *gamma,
            status: traj.status.as_str().to_string(),
            final_t: traj.final_t as u64,
            final_dist: last.dist,
            theoretical_t: report.as_ref().map(|r| r.theoretical_t),
            theoretical_contraction: report.as_ref().map(|r| r.theoretical_contraction),
            observed_t: traj.observed_t().map(|t| t as u64),
            fitted_contraction: fit_contraction(&traj, config.epsilon).ok(),
            estimate_only: report.as_ref().is_some_and(|r| r.estimate_only),
        };
        Ok((row, path))
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut files = Vec::with_capacity(results.len());
    for r in results {
        let (row, path) = r?;
        rows.push(row);
        files.push(path);
    }

    let mut summary = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    summary.write_record(SUMMARY_HEADER)?;
    for row in &rows {
        summary.write_record(row.cells())?;
    }
    summary.flush()?;

    let mut manifest = csv::Writer::from_path(out_dir.join("manifest.csv"))?;
    manifest.write_record(["run_id", "seed", "algorithm", "status", "file"])?;
    for (row, path) in rows.iter().zip(&files) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        manifest.write_record([
            row.run_id.clone(),
            row.seed.to_string(),
            row.algorithm.to_string(),
            row.status.clone(),
            name,
        ])?;
    }
    manifest.flush()?;

    Ok(RunOutcome {
        out_dir,
        rows,
        trajectory_files: files,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub seed: u64,
    pub algorithm: String,
    pub eta: f64,
    pub check: CheckResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.check.passed())
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.rows.iter().filter(|r| r.check.status == status).count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>5} {:>5} {:<28} {:>6} {:>13} {:>10}  detail",
            "seed", "alg", "check", "status", "worst_margin", "at_t"
        )?;
        for r in &self.rows {
            let c = &r.check;
            writeln!(
                f,
                "{:>5} {:>5} {:<28} {:>6} {:>13} {:>10}  {}",
                r.seed,
                r.algorithm,
                c.name,
                c.status.as_str(),
                if c.worst_margin.is_nan() { "-".to_string() } else { format!("{:.4e}", c.worst_margin) },
                c.worst_t.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
                c.detail
            )?;
        }
        write!(
            f,
            "{} pass, {} fail, {} not applicable",
            self.count(CheckStatus::Pass),
            self.count(CheckStatus::Fail),
            self.count(CheckStatus::NotApplicable)
        )
    }
}

fn theorem_eta(alg: Algorithm, game: &dyn Game, gamma: Option<f64>) -> Option<f64> {
    let s = SpectralSummary::of_game(game).ok()?;
    recommend(alg, &s, gamma, 1.0, 0.5).ok().map(|r| r.eta)
}

fn verify_cell(config: &ExperimentConfig, cell: &Cell) -> Result<Vec<VerifyRow>> {
    let game = cell.game.as_ref();
    let v = &config.verify;
    let r = game.distance(&cell.start.theta, &cell.start.omega).unwrap_or(config.r);
    let mut rows = Vec::new();
    let mut push = |alg: &str, eta: f64, check: CheckResult| {
        rows.push(VerifyRow {
            seed: cell.seed,
            algorithm: alg.to_string(),
            eta,
            check,
        })
    };
    if game.hessian_blocks().is_none() {
        for spec in &config.algorithms {
            push(
                spec.algorithm.as_str(),
                f64::NAN,
                CheckResult {
                    name: "invariant_suite".into(),
                    status: CheckStatus::NotApplicable,
                    worst_margin: f64::NAN,
                    worst_t: None,
                    detail: format!("{} game has no constant Hessian blocks", game.name()),
                },
            );
        }
        return Ok(rows);
    }
    let mk = |eta: f64, gamma: Option<f64>, horizon: u64| CheckRun {
        start: &cell.start,
        eta,
        gamma,
        horizon,
        epsilon: config.epsilon,
    };
    let mut pm_co_done = false;
    for spec in &config.algorithms {
        let (eta, gamma, _) = resolve_step(spec, game, r, config.epsilon)?;
        let alg = spec.algorithm;
        let name = alg.as_str();
        let theorem = theorem_eta(alg, game, gamma);
        let at_theorem = theorem.is_some_and(|t| (eta - t).abs() <= checks::ETA_MATCH_TOL * t);
        let hit = |push: &mut dyn FnMut(&str, f64, CheckResult)| -> Result<()> {
            let hit_name = format!("{}_hit_within_bound", name.to_lowercase());
            if !at_theorem {
                push(name, eta, CheckResult {
                    name: hit_name,
                    status: CheckStatus::NotApplicable,
                    worst_margin: f64::NAN,
                    worst_t: None,
                    detail: "step size differs from the theorem value".into(),
                });
                return Ok(());
            }
            let summary = SpectralSummary::of_game(game)?;
            let bound = recommend(alg, &summary, gamma, r, config.epsilon)?.theoretical_t;
            let (res, _) = checks::hit_within_bound(
                game, alg, &cell.start, eta, gamma, config.epsilon, bound, v.scan_cap,
            )?;
            push(name, eta, res);
            Ok(())
        };
        match alg {
            Algorithm::Sga => {
                let blocks = game.hessian_blocks().expect("checked above");
                if blocks.is_bilinear() {
                    let mut etas = vec![eta];
                    etas.extend(v.sga_etas.iter().copied().filter(|e| *e != eta));
                    for e in etas {
                        push(name, e, checks::sga_growth_joint(game, &mk(e, None, v.horizon))?);
                    }
                } else if matches!(config.game, GameSpec::LowerBound { .. }) {
                    let mut etas = vec![eta];
                    etas.extend(v.floor_etas.iter().copied().filter(|e| *e != eta));
                    for e in etas {
                        push(name, e, checks::identity_block_floor(game, &mk(e, None, v.horizon))?);
                    }
                } else {
                    push(name, eta, checks::sga_stable_contraction(game, &mk(eta, None, v.horizon))?);
                    hit(&mut push)?;
                }
            }
            Algorithm::Omd => {
                let run = mk(eta, None, v.horizon);
                push(name, eta, checks::omd_envelope(game, &run, r)?);
                hit(&mut push)?;
                let blocks = game.hessian_blocks().expect("checked above");
                if blocks.is_bilinear() {
                    push(name, eta, checks::omd_factorization(&blocks.c, eta, 1e-9)?);
                }
            }
            Algorithm::Pm | Algorithm::Co => {
                push(name, eta, checks::squared_contraction(game, alg, &mk(eta, gamma, v.horizon))?);
                hit(&mut push)?;
                if !pm_co_done {
                    pm_co_done = true;
                    push("PM/CO", eta, checks::pm_co_equivalence(game, &mk(eta, gamma, v.horizon))?);
                }
            }
            Algorithm::Iu => {
                push(name, eta, checks::iu_contraction(game, &mk(eta, None, v.horizon))?);
                hit(&mut push)?;
            }
        }
    }
    Ok(rows)
}

/// Runs the invariant suite on every seed cell.
pub fn cmd_verify(config: &ExperimentConfig, opts: &RunOptions) -> Result<VerifyReport> {
    let cells = build_cells(config, opts.base_seed(config))?;
    let per_cell = map_indexed(cells.len(), opts.exec, |i| verify_cell(config, &cells[i]));
    let mut rows = Vec::new();
    for r in per_cell {
        rows.extend(r?);
    }
    Ok(VerifyReport { rows })
}

#[derive(Clone, Debug)]
pub struct SpectraReport {
    pub seed: u64,
    pub game: String,
    pub summary: SpectralSummary,
    pub r: f64,
    pub epsilon: f64,
    pub bounds: Vec<(Algorithm, std::result::Result<RateReport, String>)>,
    pub t_gd: Option<u64>,
    pub warnings: Vec<String>,
}

impl fmt::Display for SpectraReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.summary;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        writeln!(f, "game            {} ({}x{}), seed {}", self.game, s.p, s.q, self.seed)?;
        writeln!(f, "equilibrium     {}", s.classification)?;
        writeln!(f, "lambda_min(CCt) {}", format_sig(s.lambda_min, 9))?;
        writeln!(f, "lambda_max(CCt) {}", format_sig(s.lambda_max, 9))?;
        writeln!(f, "kappa           {}", format_sig(s.kappa, 9))?;
        let opt = |x: Option<f64>| x.map(|v| format_sig(v, 9)).unwrap_or_else(|| "-".into());
        writeln!(f, "alpha           {}", opt(s.alpha))?;
        writeln!(f, "beta            {}", opt(s.beta))?;
        let spectrum: Vec<String> = s.f_spectrum.iter().map(|x| format_sig(*x, 6)).collect();
        writeln!(f, "F spectrum      [{}]", spectrum.join(", "))?;
        writeln!(f, "r = {}, epsilon = {}", format_sig(self.r, 9), format_sig(self.epsilon, 9))?;
        writeln!(f, "{:<4} {:>16} {:>16} {:>16}", "alg", "eta", "T_bound", "contraction")?;
        for (alg, b) in &self.bounds {
            match b {
                Ok(rep) => writeln!(
                    f,
                    "{:<4} {:>16} {:>16} {:>16}",
                    alg.as_str(),
                    format_sig(rep.eta, 9),
                    rep.theoretical_t,
                    format_sig(rep.theoretical_contraction, 12)
                )?,
                Err(why) => writeln!(f, "{:<4} n/a ({why})", alg.as_str())?,
            }
        }
        match self.t_gd {
            Some(t) => write!(f, "T_GD {t}"),
            None => write!(f, "T_GD n/a"),
        }
    }
}

/// Spectral summary and iteration bounds of the first seed's game.
pub fn cmd_spectra(config: &ExperimentConfig, opts: &RunOptions) -> Result<SpectraReport> {
    let seed = opts.base_seed(config);
    let cell = build_cell(&config.game, config.r, seed)?;
    let game = cell.game.as_ref();
    let summary = SpectralSummary::of_game(game)?;
    let mut warnings = Vec::new();
    if !summary.full_rank {
        warnings.push("theorem hypotheses violated: C not full rank".to_string());
    }
    let gamma = config
        .algorithms
        .iter()
        .find_map(|a| a.gamma)
        .unwrap_or(1.0);
    let bounds = Algorithm::ALL
        .iter()
        .map(|&alg| {
            let g = alg.uses_gamma().then_some(gamma);
            (alg, recommend(alg, &summary, g, config.r, config.epsilon).map_err(|e| e.to_string()))
        })
        .collect();
    let blocks = game.hessian_blocks().expect("summary exists");
    let t_gd = gd_iteration_bound(&[&blocks.a, &blocks.b], config.r, config.epsilon).ok();
    Ok(SpectraReport {
        seed,
        game: game.name().to_string(),
        summary,
        r: config.r,
        epsilon: config.epsilon,
        bounds,
        t_gd,
        warnings,
    })
}

fn read_samples(path: &Path) -> Result<SampleSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    SampleSet::parse_text(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Exact W₁ between the point sets in two files.
pub fn cmd_emd(a: &Path, b: &Path) -> Result<EmdResult> {
    emd(&read_samples(a)?, &read_samples(b)?)
}

/// Plain-text table of check results, one line per row.
pub fn verify_csv(report: &VerifyReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "algorithm", "eta", "check", "status", "worst_margin", "worst_t", "detail"])?;
    for r in &report.rows {
        w.write_record([
            r.seed.to_string(),
            r.algorithm.clone(),
            format_num(r.eta),
            r.check.name.clone(),
            r.check.status.as_str().to_string(),
            format_num(r.check.worst_margin),
            r.check.worst_t.map(|t| t.to_string()).unwrap_or_default(),
            r.check.detail.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    let mut s = String::new();
    write!(s, "{}", String::from_utf8_lossy(&bytes)).expect("write to string");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convergence_text(extra: &str) -> String {
        format!(
            "[experiment]\nid = t\nseed = 1\nr = 0.5\nepsilon = 1e-3\nmax_iters = 200000\nstride = 10\n{extra}\n\
             [game]\nkind = bilinear\np = 3\nq = 3\n\
             [algorithm]\nname = OMD\n[algorithm]\nname = PM\n[algorithm]\nname = IU\n\
             [algorithm]\nname = CO\n[algorithm]\nname = SGA\neta = 0.05\n"
        )
    }

    #[test]
    fn sig_formatting_matches_printf_g() {
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(0.5, 9), "0.5");
        assert_eq!(format_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_sig(123456789.0, 9), "123456789");
        assert_eq!(format_sig(1234567890.0, 9), "1.23456789e+09");
        assert_eq!(format_sig(1.5e-5, 9), "1.5e-05");
        assert_eq!(format_sig(0.0001, 9), "0.0001");
        assert_eq!(format_sig(-2.25, 3), "-2.25");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(format_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn cells_are_deterministic_and_on_the_sphere() {
        let spec = GameSpec::Bilinear { p: 5, q: 5, c: None };
        let a = build_cell(&spec, 0.5, 3).unwrap();
        let b = build_cell(&spec, 0.5, 3).unwrap();
        assert_eq!(a.start, b.start);
        assert!((a.start.norm() - 0.5).abs() < 1e-15);
        let x = vec![0.3; 5];
        assert_eq!(a.game.gradients(&x, &x).unwrap(), b.game.gradients(&x, &x).unwrap());
        let cov = GameSpec::Covariance { d: 2, k: 2, hidden: 3, target: None };
        let c = build_cell(&cov, 0.5, 1).unwrap();
        assert_eq!(c.game.dim_theta(), 4);
    }

    #[test]
    fn run_writes_deterministic_artifacts() {
        let config = ExperimentConfig::parse(&convergence_text("")).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = cmd_run(&config, &RunOptions { out: Some(d1.path().into()), ..Default::default() }).unwrap();
        let o2 = cmd_run(
            &config,
            &RunOptions {
                out: Some(d2.path().into()),
                exec: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(o1.rows, o2.rows);
        for name in ["summary.csv", "manifest.csv", "t-s1-OMD.csv", "t-s1-SGA.csv"] {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let status: Vec<&str> = o1.rows.iter().map(|r| r.status.as_str()).collect();
        assert_eq!(status, ["reached_epsilon", "reached_epsilon", "reached_epsilon", "reached_epsilon", "diverged"]);
        for row in &o1.rows[..4] {
            assert!(row.observed_t.unwrap() <= row.theoretical_t.unwrap());
        }
        let recs = read_records(fs::File::open(d1.path().join("t-s1-PM.csv")).unwrap()).unwrap();
        assert_eq!(recs[0].t, 0);
        assert!((recs[0].dist - 0.5).abs() < 1e-15);
    }

    #[test]
    fn verify_passes_on_theorem_rates_and_gates_adversarial_eta() {
        let mut config = ExperimentConfig::parse(&convergence_text("seeds = 2")).unwrap();
        config.verify.horizon = 500;
        let report = cmd_verify(&config, &RunOptions::default()).unwrap();
        assert!(report.all_passed(), "{report}");
        assert_eq!(report.count(CheckStatus::Fail), 0);

        let adversarial = convergence_text("").replace("name = OMD", "name = OMD\neta = 1.0");
        let mut config = ExperimentConfig::parse(&adversarial).unwrap();
        config.verify.horizon = 50;
        let report = cmd_verify(&config, &RunOptions::default()).unwrap();
        let omd: Vec<_> = report.rows.iter().filter(|r| r.algorithm == "OMD").collect();
        assert!(omd.iter().all(|r| r.check.status == CheckStatus::NotApplicable), "{report}");
        assert!(verify_csv(&report).unwrap().starts_with("seed,algorithm"));
    }

    #[test]
    fn spectra_examples() {
        let text = "[experiment]\nid = s\nr = 1\nepsilon = 1e-3\n[game]\nkind = quadratic\n\
                    a = [[1,0],[0,1]]\nb = [[1,0],[0,1]]\nc = [[1,0],[0,1]]\n[algorithm]\nname = SGA\n";
        let config = ExperimentConfig::parse(text).unwrap();
        let rep = cmd_spectra(&config, &RunOptions::default()).unwrap();
        assert_eq!((rep.summary.alpha, rep.summary.beta), (Some(1.0), Some(2.0)));
        let sga = rep.bounds[0].1.as_ref().unwrap();
        assert_eq!(sga.theoretical_t, (4.0 * 1e3f64.ln()).ceil() as u64);
        assert!(rep.warnings.is_empty());

        let text = "[experiment]\nid = s\n[game]\nkind = bilinear\nc = [[1,2],[2,4]]\n[algorithm]\nname = OMD\n";
        let rep = cmd_spectra(&ExperimentConfig::parse(text).unwrap(), &RunOptions::default()).unwrap();
        assert_eq!(rep.warnings, vec!["theorem hypotheses violated: C not full rank".to_string()]);
        assert!(rep.to_string().contains("OMD  n/a"));
    }

    #[test]
    fn unsupported_combinations_are_refused() {
        let text = "[experiment]\nid = c\n[game]\nkind = covariance\nd = 2\nk = 2\nhidden = 2\n\
                    [algorithm]\nname = IU\neta = 0.1\n";
        let config = ExperimentConfig::parse(text).unwrap();
        let d = tempfile::tempdir().unwrap();
        let err = cmd_run(&config, &RunOptions { out: Some(d.path().into()), ..Default::default() }).unwrap_err();
        assert!(matches!(&err, Error::UnsupportedGame(m) if m.contains("IU needs constant Hessian")), "{err}");
        let theorem = text.replace("name = IU\neta = 0.1", "name = SGA");
        let err = cmd_run(
            &ExperimentConfig::parse(&theorem).unwrap(),
            &RunOptions { out: Some(d.path().into()), ..Default::default() },
        )
        .unwrap_err();
        assert!(err.to_string().contains("eta = theorem"), "{err}");
    }

    #[test]
    fn emd_from_files() {
        let d = tempfile::tempdir().unwrap();
        let (a, b) = (d.path().join("a.txt"), d.path().join("b.txt"));
        fs::write(&a, "0\n2\n").unwrap();
        fs::write(&b, "1\n3\n").unwrap();
        let r = cmd_emd(&a, &b).unwrap();
        assert_eq!(r.cost, 1.0);
        assert!(cmd_emd(&a, &d.path().join("missing.txt")).is_err());
    }
}
