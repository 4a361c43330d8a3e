//! Optimization runs (robust two-stage BO, non-robust MOBO, one-shot
//! EA-on-GP), recommendations, AVD scoring, reference fronts and the
//! benchmark suite.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::acquisition::{
    al_activation, ehvi, ehvi_with_grad, optimize_acquisition, qehvi, AcqBudget,
    AcquisitionContext, AlAcquisition, GpSet, Surrogate, DEFAULT_EPS, QEHVI_BASE_SAMPLES,
};
use crate::error::{Error, Result};
use crate::gp::{fit_map, FitOptions, GpModel};
use crate::io::{fmt_f64, names, parse_f64, read_kv, sha256_hex, Table};
use crate::nsga2::{nsga2_run, EaConfig};
use crate::pareto::{avd, extract_front, reference_point, to_matrix, ObjectiveScaler, ParetoFront};
use crate::problem::{rng_stream, sample_noise, Problem};
use crate::robust_gp::{FixedNoiseSamples, KeMode, RobustGp, DEFAULT_KE_SAMPLES};

const STREAM_INIT: u64 = 1 << 32;
const STREAM_FIT: u64 = 2 << 32;
const STREAM_ACQ: u64 = 3 << 32;
const STREAM_AL: u64 = 4 << 32;
const STREAM_EA: u64 = 5 << 32;
const STREAM_SCORE: u64 = 6 << 32;
const STREAM_REF: u64 = 7 << 32;
const STREAM_PROP1: u64 = 8 << 32;

/// Monte Carlo size of the true Bayes risk used for scoring and reference fronts.
pub const SCORE_MC_SAMPLES: usize = 10_000;
/// Monte Carlo size of the Bayes risk of a GP mean in EA-GP-OS.
pub const EA_MC_SAMPLES: usize = 2000;
/// Master seed of the frozen scoring sample set, shared by every run.
pub const SCORE_SEED: u64 = 0;
const RECORD_FORMAT: u32 = 1;
const REFERENCE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Rmobo,
    MoboNonrobust,
    EaGpOs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rmobo => "rmobo",
            Method::MoboNonrobust => "mobo",
            Method::EaGpOs => "ea-gp-os",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rmobo" => Ok(Method::Rmobo),
            "mobo" | "mobo-nonrobust" => Ok(Method::MoboNonrobust),
            "ea-gp-os" => Ok(Method::EaGpOs),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AcqKind {
    Ehvi,
    Qehvi,
}

impl AcqKind {
    pub fn name(self) -> &'static str {
        match self {
            AcqKind::Ehvi => "ehvi",
            AcqKind::Qehvi => "qehvi",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ehvi" => Ok(AcqKind::Ehvi),
            "qehvi" => Ok(AcqKind::Qehvi),
            other => Err(Error::InvalidArgument(format!(
                "unknown acquisition {other:?}"
            ))),
        }
    }
}

impl fmt::Display for AcqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub method: Method,
    pub acquisition: AcqKind,
    pub q: usize,
    pub n_iter: usize,
    /// Initial design size; `None` means `5 d`.
    pub n_initial: Option<usize>,
    pub seed: u64,
    /// Frozen kernel-expectation samples per set.
    pub ke_samples: usize,
    pub eps: f64,
    pub acq_budget: AcqBudget,
    pub qehvi_samples: usize,
    pub gp_restarts: usize,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        problem: &str,
        method: Method,
        acquisition: AcqKind,
        q: usize,
        n_iter: usize,
        seed: u64,
    ) -> Self {
        Self {
            problem: problem.to_string(),
            method,
            acquisition,
            q,
            n_iter,
            n_initial: None,
            seed,
            ke_samples: DEFAULT_KE_SAMPLES,
            eps: DEFAULT_EPS,
            acq_budget: AcqBudget::default(),
            qehvi_samples: QEHVI_BASE_SAMPLES,
            gp_restarts: FitOptions::default().restarts,
            out: None,
        }
    }

    pub fn n_initial_for(&self, d: usize) -> usize {
        self.n_initial.unwrap_or(5 * d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.q == 0 {
            return bad("q must be at least 1");
        }
        if self.acquisition == AcqKind::Ehvi && self.q != 1 {
            return bad("ehvi proposes one point per iteration; use q = 1 or qehvi");
        }
        if self.n_initial == Some(0) {
            return bad("n_initial must be at least 1");
        }
        if self.ke_samples == 0 || self.qehvi_samples == 0 {
            return bad("sample counts must be positive");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.acq_budget.raw_per_dim == 0 || self.acq_budget.starts == 0 {
            return bad("acquisition budget must be positive");
        }
        if self.gp_restarts == 0 {
            return bad("gp_restarts must be at least 1");
        }
        Ok(())
    }

    /// Canonical `key = value` text, without the output directory.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("problem", self.problem.clone());
        put("method", self.method.name().into());
        put("acquisition", self.acquisition.name().into());
        put("q", self.q.to_string());
        put("n_iter", self.n_iter.to_string());
        if let Some(n) = self.n_initial {
            put("n_initial", n.to_string());
        }
        put("seed", self.seed.to_string());
        put("ke_samples", self.ke_samples.to_string());
        put("eps", fmt_f64(self.eps));
        put("raw_per_dim", self.acq_budget.raw_per_dim.to_string());
        put("starts", self.acq_budget.starts.to_string());
        put("max_iters", self.acq_budget.max_iters.to_string());
        put("qehvi_samples", self.qehvi_samples.to_string());
        put("gp_restarts", self.gp_restarts.to_string());
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.to_kv())
    }

    pub fn from_kv(kv: &std::collections::BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| kv.get(k).map(String::as_str);
        let need = |k: &str| {
            get(k).ok_or_else(|| Error::InvalidArgument(format!("config is missing {k}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value for {k}: {v:?}")))
        }
        let mut cfg = RunConfig::new(
            need("problem")?,
            Method::from_name(get("method").unwrap_or("rmobo"))?,
            AcqKind::from_name(get("acquisition").unwrap_or("ehvi"))?,
            num("q", get("q").unwrap_or("1"))?,
            num("n_iter", need("n_iter")?)?,
            num("seed", get("seed").unwrap_or("0"))?,
        );
        for (k, v) in kv {
            match k.as_str() {
                "problem" | "method" | "acquisition" | "q" | "n_iter" | "seed" => {}
                "n_initial" => cfg.n_initial = Some(num(k, v)?),
                "ke_samples" => cfg.ke_samples = num(k, v)?,
                "eps" => {
                    cfg.eps = parse_f64(v)
                        .ok_or_else(|| Error::InvalidArgument(format!("bad eps {v:?}")))?
                }
                "raw_per_dim" => cfg.acq_budget.raw_per_dim = num(k, v)?,
                "starts" => cfg.acq_budget.starts = num(k, v)?,
                "max_iters" => cfg.acq_budget.max_iters = num(k, v)?,
                "qehvi_samples" => cfg.qehvi_samples = num(k, v)?,
                "gp_restarts" => cfg.gp_restarts = num(k, v)?,
                "out" => cfg.out = Some(PathBuf::from(v)),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown config key {other:?}"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&read_kv(path)?)
    }
}

/// One pass of the optimization loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// First-stage proposals.
    pub pending: Vec<Vec<f64>>,
    /// Points actually evaluated, after any active-learning relocation.
    pub queried: Vec<Vec<f64>>,
    pub al_fired: Vec<bool>,
    /// Active-learning acquisition value, NaN when the stage did not fire.
    pub al_value: Vec<f64>,
    pub acq_value: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Complete,
    Aborted { iteration: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: RunConfig,
    pub n_initial: usize,
    /// Evaluated inputs, initial design first.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub iterations: Vec<IterationRecord>,
    /// Pre-relocation proposals in order.
    pub query_pool: Vec<Vec<f64>>,
    pub recommendation: ParetoFront,
    pub status: RunStatus,
    pub total_wall_time: f64,
}

impl RunRecord {
    /// Number of completed loop steps; EA-GP-OS counts its one-shot budget
    /// as `n_iter` steps of `q` points.
    pub fn steps(&self) -> usize {
        match self.config.method {
            Method::EaGpOs => (self.x.len() - self.n_initial) / self.config.q,
            _ => self.iterations.len(),
        }
    }

    pub fn n_evaluations(&self) -> usize {
        self.x.len()
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let d = self.x.first().map_or(0, Vec::len);
        let m = self.y.first().map_or(0, Vec::len);
        fs::write(dir.join("config.txt"), self.config.to_kv())?;

        let mut data =
            Table::new([vec!["iteration".to_string()], names("x", d), names("y", m)].concat());
        for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
            let it = if i < self.n_initial {
                0
            } else {
                match self.config.method {
                    Method::EaGpOs => 0,
                    _ => 1 + (i - self.n_initial) / self.config.q,
                }
            };
            data.rows
                .push([vec![it as f64], x.clone(), y.clone()].concat());
        }
        data.write(&dir.join("data.csv"))?;

        let mut queries = Table::new(
            [
                vec!["iteration".to_string(), "slot".to_string()],
                names("pending", d),
                names("x", d),
                vec!["al_fired".to_string(), "al_value".to_string()],
            ]
            .concat(),
        );
        let mut acq = Table::new(vec!["iteration".into(), "acq_value".into()]);
        for it in &self.iterations {
            acq.rows.push(vec![it.iteration as f64, it.acq_value]);
            for j in 0..it.pending.len() {
                queries.rows.push(
                    [
                        vec![it.iteration as f64, j as f64],
                        it.pending[j].clone(),
                        it.queried[j].clone(),
                        vec![if it.al_fired[j] { 1.0 } else { 0.0 }, it.al_value[j]],
                    ]
                    .concat(),
                );
            }
        }
        queries.write(&dir.join("queries.csv"))?;
        acq.write(&dir.join("acquisition.csv"))?;

        let mut pool = Table::new(names("x", d));
        pool.rows = self.query_pool.clone();
        pool.write(&dir.join("query_pool.csv"))?;
        save_front(&dir.join("recommendation.csv"), &self.recommendation, d)?;

        let (status, aborted_at, reason) = match &self.status {
            RunStatus::Complete => ("complete", None, None),
            RunStatus::Aborted { iteration, reason } => {
                ("aborted", Some(*iteration), Some(reason.clone()))
            }
        };
        let manifest = json!({
            "format_version": RECORD_FORMAT,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.config.hash(),
            "problem": self.config.problem,
            "method": self.config.method.name(),
            "acquisition": self.config.acquisition.name(),
            "master_seed": self.config.seed,
            "ke_sample_seed": self.config.seed,
            "score_seed": SCORE_SEED,
            "n_initial": self.n_initial,
            "n_evaluations": self.n_evaluations(),
            "iterations_completed": self.iterations.len(),
            "status": status,
            "aborted_at_iteration": aborted_at,
            "abort_reason": reason,
            "iteration_wall_times": self.iterations.iter().map(|i| i.wall_time).collect::<Vec<_>>(),
            "total_wall_time": self.total_wall_time,
        });
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = RunConfig::load(&dir.join("config.txt"))?;
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let format_err = |msg: &str| Error::Format {
            path: dir.display().to_string(),
            msg: msg.to_string(),
        };
        let n_initial = manifest["n_initial"]
            .as_u64()
            .ok_or_else(|| format_err("manifest lacks n_initial"))?
            as usize;
        let status = match manifest["status"].as_str() {
            Some("complete") => RunStatus::Complete,
            Some("aborted") => RunStatus::Aborted {
                iteration: manifest["aborted_at_iteration"].as_u64().unwrap_or(0) as usize,
                reason: manifest["abort_reason"].as_str().unwrap_or("").to_string(),
            },
            _ => return Err(format_err("manifest lacks status")),
        };
        let wall: Vec<f64> = manifest["iteration_wall_times"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
            .unwrap_or_default();

        let data = Table::read(&dir.join("data.csv"))?;
        let x = data.select(&data.columns_with_prefix("x"));
        let y = data.select(&data.columns_with_prefix("y"));
        let d = x.first().map_or(0, Vec::len);

        let acq = Table::read(&dir.join("acquisition.csv"))?;
        let queries = Table::read(&dir.join("queries.csv"))?;
        let pending_cols = queries.columns_with_prefix("pending");
        let x_cols = queries.columns_with_prefix("x");
        let fired_col = queries
            .column("al_fired")
            .ok_or_else(|| format_err("queries.csv lacks al_fired"))?;
        let value_col = queries
            .column("al_value")
            .ok_or_else(|| format_err("queries.csv lacks al_value"))?;
        let mut iterations: Vec<IterationRecord> = acq
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| IterationRecord {
                iteration: r[0] as usize,
                pending: Vec::new(),
                queried: Vec::new(),
                al_fired: Vec::new(),
                al_value: Vec::new(),
                acq_value: r[1],
                wall_time: wall.get(i).copied().unwrap_or(0.0),
            })
            .collect();
        for r in &queries.rows {
            let it = iterations
                .iter_mut()
                .find(|i| i.iteration == r[0] as usize)
                .ok_or_else(|| format_err("query row without iteration"))?;
            it.pending
                .push(pending_cols.iter().map(|&c| r[c]).collect());
            it.queried.push(x_cols.iter().map(|&c| r[c]).collect());
            it.al_fired.push(r[fired_col] != 0.0);
            it.al_value.push(r[value_col]);
        }
        let pool = Table::read(&dir.join("query_pool.csv"))?;
        let recommendation = load_front(&dir.join("recommendation.csv"))?;
        debug_assert!(pool.rows.iter().all(|r| r.len() == d));
        Ok(Self {
            config,
            n_initial,
            x,
            y,
            iterations,
            query_pool: pool.rows,
            recommendation,
            status,
            total_wall_time: manifest["total_wall_time"].as_f64().unwrap_or(0.0),
        })
    }
}

/// Writes `x1..xd, J1..JM` columns.
pub fn save_front(path: &Path, front: &ParetoFront, d: usize) -> Result<()> {
    let m = front.points.first().map_or(0, Vec::len);
    let mut t = Table::new([names("x", d), names("J", m)].concat());
    for (x, p) in front.inputs.iter().zip(&front.points) {
        t.rows.push([x.clone(), p.clone()].concat());
    }
    t.write(path)
}

pub fn load_front(path: &Path) -> Result<ParetoFront> {
    let t = Table::read(path)?;
    Ok(ParetoFront {
        inputs: t.select(&t.columns_with_prefix("x")),
        points: t.select(&t.columns_with_prefix("J")),
    })
}

/// Resolves the benchmark named in `cfg`, runs the configured method and
/// saves the record when `cfg.out` is set.
pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    let problem = Problem::benchmark(&cfg.problem)?;
    run_problem(&problem, cfg)
}

pub fn run_problem(problem: &Problem, cfg: &RunConfig) -> Result<RunRecord> {
    let rec = match cfg.method {
        Method::Rmobo => run_rmobo(problem, cfg)?,
        Method::MoboNonrobust => run_mobo_nonrobust(problem, cfg)?,
        Method::EaGpOs => run_ea_gp_os(problem, cfg)?,
    };
    if let Some(out) = &cfg.out {
        rec.save(out)?;
    }
    Ok(rec)
}

/// Two-stage robust BO: hypervolume acquisition on the Bayes-risk GP, then
/// active-learning relocation of pending points that duplicate data or sit
/// on the boundary.
pub fn run_rmobo(problem: &Problem, cfg: &RunConfig) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Rmobo;
    bo_loop(problem, &cfg)
}

/// Standard MOBO on `f` with the same acquisitions and no relocation.
pub fn run_mobo_nonrobust(problem: &Problem, cfg: &RunConfig) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.method = Method::MoboNonrobust;
    bo_loop(problem, &cfg)
}

/// One-shot baseline: a uniform design of the full evaluation budget, a
/// standard GP per objective, and NSGA-II on the Monte Carlo Bayes risk of
/// the GP means.
pub fn run_ea_gp_os(problem: &Problem, cfg: &RunConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.method = Method::EaGpOs;
    cfg.validate()?;
    let n0 = cfg.n_initial_for(problem.dim());
    let budget = n0 + cfg.q * cfg.n_iter;
    let x = initial_design(problem, cfg.seed, budget, cfg.eps);
    let y: Vec<Vec<f64>> = x.iter().map(|xi| problem.evaluate(xi)).collect();
    let mut rec = RunRecord {
        config: cfg.clone(),
        n_initial: n0,
        x,
        y,
        iterations: Vec::new(),
        query_pool: Vec::new(),
        recommendation: ParetoFront {
            points: Vec::new(),
            inputs: Vec::new(),
        },
        status: RunStatus::Complete,
        total_wall_time: 0.0,
    };
    match ea_gp_front(problem, &cfg, &rec.x, &rec.y, cfg.n_iter) {
        Ok(front) => rec.recommendation = front,
        Err(e) => {
            rec.status = RunStatus::Aborted {
                iteration: 0,
                reason: e.to_string(),
            }
        }
    }
    rec.total_wall_time = start.elapsed().as_secs_f64();
    Ok(rec)
}

/// Uniform draws, rejecting any within `eps` (unit coordinates) of an earlier
/// point so the design itself holds no near-duplicates.
fn initial_design(problem: &Problem, seed: u64, n: usize, eps: f64) -> Vec<Vec<f64>> {
    let space = &problem.space;
    let mut rng = rng_stream(seed, STREAM_INIT);
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut tries = 0usize;
    while x.len() < n {
        let m = space.sample_uniform(1, &mut rng);
        let xi: Vec<f64> = m.row(0).iter().copied().collect();
        let ui = space.to_unit(&xi);
        tries += 1;
        // give up on spacing rather than loop forever in a crowded space
        if tries <= 1000 * n && units.iter().any(|u| unit_dist(u, &ui) < eps) {
            continue;
        }
        units.push(ui);
        x.push(xi);
    }
    x
}

fn unit_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        .sqrt()
}

fn noise_samples(problem: &Problem, cfg: &RunConfig) -> Result<FixedNoiseSamples> {
    FixedNoiseSamples::draw(&problem.noise, cfg.ke_samples, cfg.seed)
}

/// MAP GPs on the data; fit `k` of a run uses its own stream, and a failed
/// fit is retried once with fresh restarts.
fn fit_models(
    problem: &Problem,
    cfg: &RunConfig,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    k: usize,
) -> Result<Vec<GpModel>> {
    let opts = FitOptions {
        restarts: cfg.gp_restarts,
        ..FitOptions::default()
    };
    let xm = to_matrix(x);
    let m = problem.n_objectives();
    let mut last = Error::FitFailed;
    for attempt in 0..2u64 {
        let mut rng = rng_stream(cfg.seed, STREAM_FIT + 2 * k as u64 + attempt);
        let fitted: Result<Vec<GpModel>> = (0..m)
            .map(|o| {
                let yo: Vec<f64> = y.iter().map(|r| r[o]).collect();
                fit_map(&problem.space, &xm, &yo, &opts, &mut rng)
            })
            .collect();
        match fitted {
            Ok(models) => return Ok(models),
            Err(e) => {
                log::warn!("GP fit {k} attempt {attempt} failed: {e}");
                last = e;
            }
        }
    }
    Err(last)
}

fn robust_model(
    problem: &Problem,
    models: Vec<GpModel>,
    samples: &FixedNoiseSamples,
) -> Result<RobustGp> {
    RobustGp::new(models, &problem.noise, samples.clone(), KeMode::SaaMc)
}

fn data_range(y: &[Vec<f64>]) -> Vec<f64> {
    let m = y.first().map_or(0, Vec::len);
    (0..m)
        .map(|o| {
            let lo = y.iter().map(|r| r[o]).fold(f64::INFINITY, f64::min);
            let hi = y.iter().map(|r| r[o]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .collect()
}

/// First-stage proposals in unit-cube coordinates and the acquisition value.
fn propose<S: Surrogate>(
    model: &S,
    front: Vec<Vec<f64>>,
    fallback_range: &[f64],
    cfg: &RunConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let d = model.space().dim();
    let ref_point = reference_point(&front, fallback_range);
    match cfg.acquisition {
        AcqKind::Ehvi => {
            let ctx = AcquisitionContext::new(front, ref_point);
            let grad = |z: &[f64]| ehvi_with_grad(&ctx, model, z, true);
            let best = optimize_acquisition(
                |z| ehvi(&ctx, model, z),
                Some(&grad),
                &vec![0.0; d],
                &vec![1.0; d],
                &cfg.acq_budget,
                rng,
            );
            Ok((vec![best.x], best.value))
        }
        AcqKind::Qehvi => {
            let q = cfg.q;
            let ctx = AcquisitionContext::new(front, ref_point).with_base_samples(
                cfg.qehvi_samples,
                q,
                rng,
            );
            let f = |flat: &[f64]| {
                let zs: Vec<Vec<f64>> = flat.chunks(d).map(<[f64]>::to_vec).collect();
                qehvi(&ctx, model, &zs).unwrap_or(f64::NEG_INFINITY)
            };
            let best = optimize_acquisition(
                f,
                None,
                &vec![0.0; q * d],
                &vec![1.0; q * d],
                &cfg.acq_budget,
                rng,
            );
            Ok((best.x.chunks(d).map(<[f64]>::to_vec).collect(), best.value))
        }
    }
}

/// Maximizes the active-learning acquisition over the box around `x_star`,
/// clipped to the enlarged design space. Candidates within `eps` of an
/// evaluated input are excluded, so relocation never repeats a sample.
fn al_relocate(
    rgp: &RobustGp,
    problem: &Problem,
    x_star: &[f64],
    seen: &[Vec<f64>],
    cfg: &RunConfig,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let big = problem.enlarged_space();
    let h = &problem.al_box_halfwidth;
    let lo: Vec<f64> = (0..x_star.len())
        .map(|k| (x_star[k] - h[k]).max(big.lower()[k]))
        .collect();
    let hi: Vec<f64> = (0..x_star.len())
        .map(|k| (x_star[k] + h[k]).min(big.upper()[k]))
        .collect();
    let space = rgp.space();
    let al = AlAcquisition::new(rgp, &space.to_unit(x_star));
    if lo.iter().zip(&hi).all(|(a, b)| a >= b) {
        return (x_star.to_vec(), al.value(&space.to_unit(x_star)));
    }
    let seen: Vec<Vec<f64>> = seen.iter().map(|x| space.to_unit(x)).collect();
    let (ulo, uhi) = (space.to_unit(&lo), space.to_unit(&hi));
    let mut best = optimize_acquisition(
        |z| {
            if seen.iter().any(|u| unit_dist(u, z) < cfg.eps) {
                f64::NEG_INFINITY
            } else {
                al.value(z)
            }
        },
        None,
        &ulo,
        &uhi,
        &cfg.acq_budget,
        rng,
    );
    if !best.value.is_finite() {
        // the whole box is near data; drop the exclusion
        best = optimize_acquisition(|z| al.value(z), None, &ulo, &uhi, &cfg.acq_budget, rng);
    }
    let x: Vec<f64> = space
        .from_unit(&best.x)
        .into_iter()
        .enumerate()
        .map(|(k, v)| v.clamp(lo[k], hi[k]))
        .collect();
    (x, best.value)
}

fn bo_loop(problem: &Problem, cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let robust = cfg.method == Method::Rmobo;
    let n0 = cfg.n_initial_for(problem.dim());
    let x = initial_design(problem, cfg.seed, n0, cfg.eps);
    let y: Vec<Vec<f64>> = x.iter().map(|xi| problem.evaluate(xi)).collect();
    let samples = if robust {
        Some(noise_samples(problem, cfg)?)
    } else {
        None
    };
    let mut rec = RunRecord {
        config: cfg.clone(),
        n_initial: n0,
        x,
        y,
        iterations: Vec::new(),
        query_pool: Vec::new(),
        recommendation: ParetoFront {
            points: Vec::new(),
            inputs: Vec::new(),
        },
        status: RunStatus::Complete,
        total_wall_time: 0.0,
    };

    for t in 1..=cfg.n_iter {
        let it_start = Instant::now();
        let k = t - 1;
        let models = match fit_models(problem, cfg, &rec.x, &rec.y, k) {
            Ok(m) => m,
            Err(e) => {
                rec.status = RunStatus::Aborted {
                    iteration: t,
                    reason: e.to_string(),
                };
                rec.recommendation = extract_front(&rec.y, &rec.x);
                rec.total_wall_time = start.elapsed().as_secs_f64();
                return Ok(rec);
            }
        };
        let mut acq_rng = rng_stream(cfg.seed, STREAM_ACQ + k as u64);
        let fallback = data_range(&rec.y);
        let mut it = IterationRecord {
            iteration: t,
            pending: Vec::new(),
            queried: Vec::new(),
            al_fired: Vec::new(),
            al_value: Vec::new(),
            acq_value: 0.0,
            wall_time: 0.0,
        };
        if let Some(samples) = &samples {
            let rgp = robust_model(problem, models, samples)?;
            let means: Vec<Vec<f64>> = rec.x.iter().map(|xi| rgp.mean_j(xi)).collect();
            let front = extract_front(&means, &rec.x).points;
            let (zs, value) = propose(&rgp, front, &fallback, cfg, &mut acq_rng)?;
            it.acq_value = value;
            it.pending = zs.iter().map(|z| problem.space.from_unit(z)).collect();
            rec.query_pool.extend(it.pending.iter().cloned());
            for (j, x_star) in it.pending.iter().enumerate() {
                let mut seen = rec.x.clone();
                seen.extend(it.queried.iter().cloned());
                if al_activation(x_star, &to_matrix(&seen), &problem.space, cfg.eps) {
                    let mut rng = rng_stream(cfg.seed, STREAM_AL + (k * cfg.q + j) as u64);
                    let (x_new, v) = al_relocate(&rgp, problem, x_star, &seen, cfg, &mut rng);
                    it.queried.push(x_new);
                    it.al_fired.push(true);
                    it.al_value.push(v);
                } else {
                    it.queried.push(x_star.clone());
                    it.al_fired.push(false);
                    it.al_value.push(f64::NAN);
                }
            }
        } else {
            let gps = GpSet(models);
            let front = extract_front(&rec.y, &rec.x).points;
            let (zs, value) = propose(&gps, front, &fallback, cfg, &mut acq_rng)?;
            it.acq_value = value;
            it.pending = zs.iter().map(|z| problem.space.from_unit(z)).collect();
            rec.query_pool.extend(it.pending.iter().cloned());
            it.queried = it.pending.clone();
            it.al_fired = vec![false; it.pending.len()];
            it.al_value = vec![f64::NAN; it.pending.len()];
        }
        for xq in &it.queried {
            rec.y.push(problem.evaluate(xq));
            rec.x.push(xq.clone());
        }
        it.wall_time = it_start.elapsed().as_secs_f64();
        log::info!(
            "{} {} iteration {t}/{}: acq {:.4e}, al {:?}",
            problem.name,
            cfg.method,
            cfg.n_iter,
            it.acq_value,
            it.al_fired
        );
        rec.iterations.push(it);
    }

    match in_sample_front(problem, cfg, &rec.x, &rec.y, &rec.query_pool, cfg.n_iter) {
        Ok(front) => rec.recommendation = front,
        Err(e) => {
            rec.status = RunStatus::Aborted {
                iteration: cfg.n_iter,
                reason: e.to_string(),
            };
            rec.recommendation = extract_front(&rec.y, &rec.x);
        }
    }
    rec.total_wall_time = start.elapsed().as_secs_f64();
    Ok(rec)
}

/// Candidate inputs of the robust in-sample recommendation: evaluated
/// inputs and pending proposals that lie in the design space.
pub fn candidate_set(problem: &Problem, x: &[Vec<f64>], pool: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .chain(pool)
        .filter(|p| problem.space.contains(p))
        .cloned()
        .collect()
}

/// In-sample recommendation from the data after `k` loop steps.
fn in_sample_front(
    problem: &Problem,
    cfg: &RunConfig,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    pool: &[Vec<f64>],
    k: usize,
) -> Result<ParetoFront> {
    match cfg.method {
        Method::Rmobo => {
            let models = fit_models(problem, cfg, x, y, k)?;
            let rgp = robust_model(problem, models, &noise_samples(problem, cfg)?)?;
            let cand = candidate_set(problem, x, pool);
            let values: Vec<Vec<f64>> = cand.par_iter().map(|c| rgp.mean_j(c)).collect();
            Ok(extract_front(&values, &cand))
        }
        Method::MoboNonrobust => Ok(extract_front(y, x)),
        Method::EaGpOs => ea_gp_front(problem, cfg, x, y, k),
    }
}

fn ea_gp_front(
    problem: &Problem,
    cfg: &RunConfig,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    k: usize,
) -> Result<ParetoFront> {
    let models = fit_models(problem, cfg, x, y, k)?;
    let samples = sample_noise(
        &problem.noise,
        EA_MC_SAMPLES,
        &mut rng_stream(cfg.seed, STREAM_EA),
    )?;
    let objective = |xi: &[f64]| gp_mean_bayes_risk(&models, xi, &samples);
    nsga2_run(
        objective,
        &problem.space,
        &EaConfig::out_of_sample(cfg.seed ^ STREAM_EA),
    )
}

/// Sample average of the GP means over `x + samples`.
pub fn gp_mean_bayes_risk(models: &[GpModel], x: &[f64], samples: &DMatrix<f64>) -> Vec<f64> {
    let n = samples.nrows();
    let mut xp = x.to_vec();
    models
        .iter()
        .map(|gp| {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..x.len() {
                    xp[k] = x[k] + samples[(i, k)];
                }
                s += gp.mean_at(&xp);
            }
            s / n as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecommendMode {
    InSample,
    OutOfSample,
}

/// Final recommendation of a record. In-sample ranks surrogate values at
/// evaluated and proposed inputs; out-of-sample runs NSGA-II on the
/// surrogate mean (the Bayes-risk mean for the robust method).
pub fn recommend(
    problem: &Problem,
    record: &RunRecord,
    mode: RecommendMode,
) -> Result<ParetoFront> {
    let cfg = &record.config;
    let k = record.steps();
    match (mode, cfg.method) {
        (RecommendMode::InSample, _) | (RecommendMode::OutOfSample, Method::EaGpOs) => {
            in_sample_front(problem, cfg, &record.x, &record.y, &record.query_pool, k)
        }
        (RecommendMode::OutOfSample, Method::Rmobo) => {
            let models = fit_models(problem, cfg, &record.x, &record.y, k)?;
            let rgp = robust_model(problem, models, &noise_samples(problem, cfg)?)?;
            nsga2_run(
                |xi| rgp.mean_j(xi),
                &problem.space,
                &EaConfig::out_of_sample(cfg.seed ^ STREAM_EA),
            )
        }
        (RecommendMode::OutOfSample, Method::MoboNonrobust) => {
            let models = fit_models(problem, cfg, &record.x, &record.y, k)?;
            nsga2_run(
                |xi| models.iter().map(|gp| gp.mean_at(xi)).collect(),
                &problem.space,
                &EaConfig::out_of_sample(cfg.seed ^ STREAM_EA),
            )
        }
    }
}

/// Frozen perturbations for true Bayes-risk scoring.
pub fn score_samples(problem: &Problem) -> Result<DMatrix<f64>> {
    sample_noise(
        &problem.noise,
        SCORE_MC_SAMPLES,
        &mut rng_stream(SCORE_SEED, STREAM_SCORE),
    )
}

/// AVD of `inputs`, re-evaluated under the true Bayes risk, against the
/// reference front, both scaled by the reference front's range. A
/// reference front that is a single point in some objective leaves that
/// objective unscaled.
pub fn score_inputs(
    problem: &Problem,
    inputs: &[Vec<f64>],
    reference: &ParetoFront,
    samples: &DMatrix<f64>,
) -> Result<f64> {
    let scaler = ObjectiveScaler::from_reference_or_shift(&reference.points)?;
    let truth: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|x| problem.bayes_risk_with_samples(x, samples))
        .collect();
    avd(
        &scaler.apply_all(&truth),
        &scaler.apply_all(&reference.points),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvdEntry {
    pub iteration: usize,
    pub n_evaluations: usize,
    pub avd: f64,
}

/// AVD of the in-sample recommendation after every loop step, refitting the
/// models on each data prefix. Entry 0 is the initial design.
pub fn score_run(
    problem: &Problem,
    record: &RunRecord,
    reference: &ParetoFront,
) -> Result<Vec<AvdEntry>> {
    if reference.is_empty() {
        return Err(Error::MissingReference(problem.name.clone()));
    }
    let samples = score_samples(problem)?;
    let cfg = &record.config;
    (0..=record.steps())
        .map(|t| {
            let n = record.n_initial + cfg.q * t;
            let front = if t == record.steps() && record.is_complete() {
                record.recommendation.clone()
            } else {
                let pool = &record.query_pool[..(cfg.q * t).min(record.query_pool.len())];
                in_sample_front(problem, cfg, &record.x[..n], &record.y[..n], pool, t)?
            };
            Ok(AvdEntry {
                iteration: t,
                n_evaluations: n,
                avd: score_inputs(problem, &front.inputs, reference, &samples)?,
            })
        })
        .collect()
}

/// AVD of the record's final recommendation only.
pub fn score_final(problem: &Problem, record: &RunRecord, reference: &ParetoFront) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::MissingReference(problem.name.clone()));
    }
    score_inputs(
        problem,
        &record.recommendation.inputs,
        reference,
        &score_samples(problem)?,
    )
}

pub fn write_avd_history(path: &Path, history: &[AvdEntry]) -> Result<()> {
    let mut t = Table::new(vec![
        "iteration".into(),
        "n_evaluations".into(),
        "avd".into(),
    ]);
    for e in history {
        t.rows
            .push(vec![e.iteration as f64, e.n_evaluations as f64, e.avd]);
    }
    t.write(path)
}

/// Settings of a reference-front computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSettings {
    pub seed: u64,
    pub ea: EaConfig,
    pub n_mc: usize,
}

impl ReferenceSettings {
    /// Population 60, 500 generations, `10^4` common perturbations.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ea: EaConfig::reference_front(seed),
            n_mc: SCORE_MC_SAMPLES,
        }
    }

    /// Cache key of the front for `problem`.
    pub fn key(&self, problem: &str) -> String {
        let e = &self.ea;
        let text = format!(
            "format={REFERENCE_FORMAT}\nproblem={problem}\nseed={}\npopulation={}\ngenerations={}\ncrossover={}/{}\nmutation={:?}/{}\nn_mc={}\n",
            self.seed, e.population, e.generations, e.crossover_prob, e.crossover_eta, e.mutation_prob, e.mutation_eta, self.n_mc
        );
        sha256_hex(&text)
    }

    pub fn file_name(&self, problem: &str) -> String {
        format!(
            "reference_{problem}_seed{}_v{REFERENCE_FORMAT}_{}.csv",
            self.seed,
            &self.key(problem)[..12]
        )
    }
}

/// NSGA-II front of the Bayes risk, each objective averaged over one common
/// set of perturbations.
pub fn reference_front(problem: &Problem, settings: &ReferenceSettings) -> Result<ParetoFront> {
    let samples = sample_noise(
        &problem.noise,
        settings.n_mc,
        &mut rng_stream(settings.seed, STREAM_REF),
    )?;
    let mut ea = settings.ea.clone();
    ea.seed = settings.seed;
    nsga2_run(
        |x| problem.bayes_risk_with_samples(x, &samples),
        &problem.space,
        &ea,
    )
}

/// Loads the reference front from `dir` or computes and stores it.
pub fn cached_reference_front(
    problem: &Problem,
    settings: &ReferenceSettings,
    dir: &Path,
) -> Result<(ParetoFront, PathBuf)> {
    let path = dir.join(settings.file_name(&problem.name));
    if path.exists() {
        return Ok((load_front(&path)?, path));
    }
    let front = reference_front(problem, settings)?;
    fs::create_dir_all(dir)?;
    save_front(&path, &front, problem.dim())?;
    Ok((front, path))
}

/// Maximizer sets of one objective under `f` and under its Bayes risk.
#[derive(Debug, Clone)]
pub struct Prop1Objective {
    pub objective: usize,
    pub argmax_f: Vec<Vec<f64>>,
    pub argmax_j: Vec<Vec<f64>>,
    /// Smallest unit-cube distance between the two sets.
    pub separation: f64,
    pub distinct: bool,
    /// Every robust maximizer is dominated under `f` by some searched point.
    pub robust_dominated: bool,
}

#[derive(Debug, Clone)]
pub struct Prop1Report {
    pub problem: String,
    pub n_points: usize,
    /// Separation above which maximizers count as distinct, unit cube.
    pub threshold: f64,
    pub objectives: Vec<Prop1Objective>,
    /// A distinct robust front is implied by some objective.
    pub certified: bool,
}

impl fmt::Display for Prop1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "problem {} ({} search points, threshold {:.3e})",
            self.problem, self.n_points, self.threshold
        )?;
        for o in &self.objectives {
            writeln!(
                f,
                "  objective {}: argmax f {:?}, argmax J {:?}, separation {:.4}, distinct {}, robust maximizer dominated {}",
                o.objective + 1,
                o.argmax_f.first().unwrap_or(&Vec::new()),
                o.argmax_j.first().unwrap_or(&Vec::new()),
                o.separation,
                o.distinct,
                o.robust_dominated
            )?;
        }
        write!(f, "  distinct robust front certified: {}", self.certified)
    }
}

fn argmax_set(values: &[Vec<f64>], o: usize) -> Vec<usize> {
    let best = values
        .iter()
        .map(|v| v[o])
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + best.abs());
    (0..values.len())
        .filter(|&i| values[i][o] >= best - tol)
        .collect()
}

/// Searches a dense grid (`10^-3` resolution in 1-d, `101^2` in 2-d, `2 10^4`
/// uniform points otherwise) for the maximizers of each objective and of its
/// Bayes risk and tests whether they certify a distinct robust front.
pub fn check_proposition1(problem: &Problem, n_mc: usize) -> Result<Prop1Report> {
    let d = problem.dim();
    let (zs, step): (Vec<Vec<f64>>, f64) = match d {
        1 => ((0..=1000).map(|i| vec![i as f64 / 1000.0]).collect(), 1e-3),
        2 => (
            (0..=100)
                .flat_map(|i| (0..=100).map(move |j| vec![i as f64 / 100.0, j as f64 / 100.0]))
                .collect(),
            1e-2,
        ),
        _ => {
            let mut rng = rng_stream(SCORE_SEED, STREAM_PROP1 + 1);
            (
                (0..20_000)
                    .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                    .collect(),
                2e-2,
            )
        }
    };
    let xs: Vec<Vec<f64>> = zs.iter().map(|z| problem.space.from_unit(z)).collect();
    let samples = sample_noise(
        &problem.noise,
        n_mc,
        &mut rng_stream(SCORE_SEED, STREAM_PROP1),
    )?;
    let fv: Vec<Vec<f64>> = xs.par_iter().map(|x| problem.evaluate(x)).collect();
    let jv: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| problem.bayes_risk_with_samples(x, &samples))
        .collect();
    let threshold = 2.0 * step * (1.0 + 1e-9);
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let objectives: Vec<Prop1Objective> = (0..problem.n_objectives())
        .map(|o| {
            let sf = argmax_set(&fv, o);
            let sj = argmax_set(&jv, o);
            let separation = sf
                .iter()
                .flat_map(|&i| sj.iter().map(move |&j| (i, j)))
                .map(|(i, j)| dist(&zs[i], &zs[j]))
                .fold(f64::INFINITY, f64::min);
            let robust_dominated = sj
                .iter()
                .all(|&j| fv.iter().any(|g| crate::pareto::dominates(g, &fv[j])));
            Prop1Objective {
                objective: o,
                argmax_f: sf.iter().map(|&i| xs[i].clone()).collect(),
                argmax_j: sj.iter().map(|&i| xs[i].clone()).collect(),
                separation,
                distinct: separation > threshold,
                robust_dominated,
            }
        })
        .collect();
    let certified = objectives.iter().any(|o| o.distinct && o.robust_dominated);
    Ok(Prop1Report {
        problem: problem.name.clone(),
        n_points: xs.len(),
        threshold,
        objectives,
        certified,
    })
}

/// Benchmark protocol: methods x acquisitions x seeds per problem, each
/// scored against a cached robust reference front.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub problems: Vec<String>,
    pub methods: Vec<Method>,
    pub acquisitions: Vec<AcqKind>,
    pub seeds: Vec<u64>,
    pub n_iter_ehvi: usize,
    pub n_iter_qehvi: usize,
    pub q: usize,
    pub reference: ReferenceSettings,
    pub ke_samples: usize,
    pub acq_budget: AcqBudget,
    pub out: PathBuf,
}

impl SuiteConfig {
    pub fn new(out: PathBuf) -> Self {
        Self {
            problems: crate::problem::Benchmark::ALL
                .iter()
                .map(|b| b.name().to_string())
                .collect(),
            methods: vec![Method::Rmobo, Method::MoboNonrobust],
            acquisitions: vec![AcqKind::Ehvi, AcqKind::Qehvi],
            seeds: (0..30).collect(),
            n_iter_ehvi: 60,
            n_iter_qehvi: 30,
            q: 2,
            reference: ReferenceSettings::new(0),
            ke_samples: DEFAULT_KE_SAMPLES,
            acq_budget: AcqBudget::default(),
            out,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = read_kv(path)?;
        let mut cfg = Self::new(PathBuf::from(
            kv.get("out").map(String::as_str).unwrap_or("suite-out"),
        ));
        let list = |v: &str| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect::<Vec<_>>()
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value for {k}: {v:?}")))
        }
        for (k, v) in &kv {
            match k.as_str() {
                "out" => {}
                "problems" => cfg.problems = list(v),
                "methods" => {
                    cfg.methods = list(v)
                        .iter()
                        .map(|s| Method::from_name(s))
                        .collect::<Result<_>>()?
                }
                "acquisitions" => {
                    cfg.acquisitions = list(v)
                        .iter()
                        .map(|s| AcqKind::from_name(s))
                        .collect::<Result<_>>()?
                }
                "seeds" => cfg.seeds = (0..num::<u64>(k, v)?).collect(),
                "seed_list" => {
                    cfg.seeds = list(v).iter().map(|s| num(k, s)).collect::<Result<_>>()?
                }
                "n_iter_ehvi" => cfg.n_iter_ehvi = num(k, v)?,
                "n_iter_qehvi" => cfg.n_iter_qehvi = num(k, v)?,
                "q" => cfg.q = num(k, v)?,
                "reference_seed" => {
                    let g = cfg.reference.ea.generations;
                    cfg.reference = ReferenceSettings {
                        seed: num(k, v)?,
                        ..cfg.reference.clone()
                    };
                    cfg.reference.ea.generations = g;
                }
                "reference_generations" => cfg.reference.ea.generations = num(k, v)?,
                "reference_population" => cfg.reference.ea.population = num(k, v)?,
                "reference_mc" => cfg.reference.n_mc = num(k, v)?,
                "ke_samples" => cfg.ke_samples = num(k, v)?,
                "raw_per_dim" => cfg.acq_budget.raw_per_dim = num(k, v)?,
                "starts" => cfg.acq_budget.starts = num(k, v)?,
                "max_iters" => cfg.acq_budget.max_iters = num(k, v)?,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown suite key {other:?}"
                    )))
                }
            }
        }
        for p in &cfg.problems {
            crate::problem::Benchmark::from_name(p)?;
        }
        cfg.reference.ea.validate()?;
        Ok(cfg)
    }

    fn run_config(&self, problem: &str, method: Method, acq: AcqKind, seed: u64) -> RunConfig {
        let (q, n_iter) = match acq {
            AcqKind::Ehvi => (1, self.n_iter_ehvi),
            AcqKind::Qehvi => (self.q, self.n_iter_qehvi),
        };
        let mut c = RunConfig::new(problem, method, acq, q, n_iter, seed);
        c.ke_samples = self.ke_samples;
        c.acq_budget = self.acq_budget.clone();
        c.out = Some(
            self.out
                .join("runs")
                .join(format!("{problem}_{method}_{acq}_seed{seed}")),
        );
        c
    }
}

/// Median and quartiles of AVD per iteration for one problem/method/acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummaryRow {
    pub problem: String,
    pub method: Method,
    pub acquisition: AcqKind,
    pub iteration: usize,
    pub n_evaluations: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs and scores every configured combination, writes per-run AVD
/// histories and `summary.csv` under the output directory.
pub fn suite(cfg: &SuiteConfig) -> Result<Vec<SuiteSummaryRow>> {
    fs::create_dir_all(&cfg.out)?;
    let mut summary = Vec::new();
    for name in &cfg.problems {
        let problem = Problem::benchmark(name)?;
        let (reference, _) =
            cached_reference_front(&problem, &cfg.reference, &cfg.out.join("reference"))?;
        for &method in &cfg.methods {
            for &acq in &cfg.acquisitions {
                let histories: Vec<Vec<AvdEntry>> = cfg
                    .seeds
                    .par_iter()
                    .map(|&seed| {
                        let rc = cfg.run_config(name, method, acq, seed);
                        let rec = run_problem(&problem, &rc)?;
                        let hist = score_run(&problem, &rec, &reference)?;
                        if let Some(dir) = &rc.out {
                            write_avd_history(&dir.join("avd.csv"), &hist)?;
                        }
                        Ok(hist)
                    })
                    .collect::<Result<_>>()?;
                let len = histories.iter().map(Vec::len).min().unwrap_or(0);
                for t in 0..len {
                    let mut v: Vec<f64> = histories.iter().map(|h| h[t].avd).collect();
                    v.sort_by(f64::total_cmp);
                    summary.push(SuiteSummaryRow {
                        problem: name.clone(),
                        method,
                        acquisition: acq,
                        iteration: t,
                        n_evaluations: histories[0][t].n_evaluations,
                        q1: quantile_sorted(&v, 0.25),
                        median: quantile_sorted(&v, 0.5),
                        q3: quantile_sorted(&v, 0.75),
                    });
                }
            }
        }
    }
    let mut w = csv::Writer::from_path(cfg.out.join("summary.csv"))?;
    w.write_record([
        "problem",
        "method",
        "acquisition",
        "iteration",
        "n_evaluations",
        "q1",
        "median",
        "q3",
    ])?;
    for r in &summary {
        w.write_record([
            r.problem.clone(),
            r.method.to_string(),
            r.acquisition.to_string(),
            r.iteration.to_string(),
            r.n_evaluations.to_string(),
            fmt_f64(r.q1),
            fmt_f64(r.median),
            fmt_f64(r.q3),
        ])?;
    }
    w.flush()?;
    let manifest = json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "n_iter_ehvi": cfg.n_iter_ehvi,
        "n_iter_qehvi": cfg.n_iter_qehvi,
        "q": cfg.q,
        "seeds": cfg.seeds,
        "reference_seed": cfg.reference.seed,
        "reference_generations": cfg.reference.ea.generations,
        "reference_population": cfg.reference.ea.population,
        "reference_mc": cfg.reference.n_mc,
        "score_seed": SCORE_SEED,
    });
    fs::write(
        cfg.out.join("suite_manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(summary)
}
