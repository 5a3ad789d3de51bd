//! Experiment drivers behind the command-line tool.
//!
//! Every random stream is derived from one root seed: experiment `e`,
//! repetition `r` uses ChaCha8 seeded from the root with stream
//! `(e << 32) | r`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use thiserror::Error;

use crate::async_engine::{reduce_to_chain_trace, replay, AsyncEngine, AsyncError};
use crate::configuration::{ConfigError, Configuration};
use crate::dynamics::{audit, Chain, Violation};
use crate::exactsolver::{
    bounds_report, build_matrix, enumerate, saw_bound_check, stationary, stationary_edge_form,
    stationary_triangle_form, support_symmetric, verify_irreducible, verify_stationary_with, BoundReport,
    SolverError, StateSpace, MAX_ENUM_N,
};
use crate::lattice::Direction;
use crate::normalizer::{audit_log, normalize, NormalizeError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Snapshot { path: PathBuf, source: ConfigError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated at step {step}: {violation:?}")]
    Invariant { step: u64, violation: Violation },
    #[error(transparent)]
    Async(#[from] AsyncError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("check failed: {0}")]
    Check(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Chain,
    Async,
    Exact,
    Normalize,
    Bounds,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Initial {
    /// A straight line of `n` particles.
    Line,
    Snapshot(PathBuf),
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub n: usize,
    pub lambda: f64,
    /// Chain steps, or activations in async mode.
    pub steps: u64,
    /// Time horizon for async runs; overrides `steps` when set.
    pub time: Option<f64>,
    pub seed: u64,
    /// 0 writes only the first and last snapshot.
    pub snapshot_every: u64,
    pub initial: Initial,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(HarnessError::Spec(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.n == 0 && self.initial == Initial::Line {
            return Err(HarnessError::Spec("n must be positive".into()));
        }
        if self.time.is_some_and(|t| !(t >= 0.0)) {
            return Err(HarnessError::Spec("time must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn initial_configuration(&self) -> Result<Configuration, HarnessError> {
        match &self.initial {
            Initial::Line => Ok(Configuration::line(self.n, Direction::E)),
            Initial::Snapshot(path) => load_snapshot(path),
        }
    }
}

pub fn load_snapshot(path: &Path) -> Result<Configuration, HarnessError> {
    let text = fs::read_to_string(path)?;
    Configuration::from_snapshot(&text).map_err(|source| HarnessError::Snapshot { path: path.to_path_buf(), source })
}

/// Independent stream for repetition `rep` of experiment `experiment`.
pub fn sub_stream(root: u64, experiment: u32, rep: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(((experiment as u64) << 32) | rep as u64);
    rng
}

/// Occupied cells as circles of diameter one at the standard embedding, with
/// occupied edges drawn between centers. The y axis is flipped so north is up.
pub fn render_svg(cfg: &Configuration) -> String {
    let pts: Vec<(f64, f64)> = cfg.cells().iter().map(|c| c.embed()).collect();
    let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 1.0;
    let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - 1.0;
    let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let scale = 20.0;
    let tx = |x: f64| (x - min_x) * scale;
    let ty = |y: f64| (max_y - y) * scale;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\">\n",
        (max_x - min_x) * scale,
        (max_y - min_y) * scale
    );
    s.push_str("<g stroke=\"black\" stroke-width=\"2\">\n");
    for &c in cfg.cells() {
        for d in [Direction::E, Direction::NE, Direction::NW] {
            let o = c.neighbor(d);
            if cfg.contains(o) {
                let (a, b) = (c.embed(), o.embed());
                s.push_str(&format!(
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>\n",
                    tx(a.0),
                    ty(a.1),
                    tx(b.0),
                    ty(b.1)
                ));
            }
        }
    }
    s.push_str("</g>\n<g fill=\"black\">\n");
    for &(x, y) in &pts {
        s.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\"/>\n", tx(x), ty(y), scale * 0.3));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub perimeter: usize,
    pub triangles: usize,
    pub edges: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: Vec<MetricRow>,
    pub final_config: Configuration,
    pub snapshots: usize,
}

struct Recorder {
    metrics: BufWriter<File>,
    dir: PathBuf,
    rows: Vec<MetricRow>,
    snapshots: usize,
}

impl Recorder {
    fn new(out: &Path) -> Result<Recorder, HarnessError> {
        fs::create_dir_all(out.join("snapshots"))?;
        let mut metrics = BufWriter::new(File::create(out.join("metrics.csv"))?);
        writeln!(metrics, "step,perimeter,triangles,edges")?;
        metrics.flush()?;
        Ok(Recorder { metrics, dir: out.join("snapshots"), rows: Vec::new(), snapshots: 0 })
    }

    /// Audit, append a metrics row, and write the snapshot and its rendering.
    fn record(&mut self, step: u64, cfg: &Configuration) -> Result<(), HarnessError> {
        let perimeter = audit(cfg).map_err(|violation| HarnessError::Invariant { step, violation })?;
        let row = MetricRow { step, perimeter, triangles: cfg.triangle_count(), edges: cfg.edge_count() };
        writeln!(self.metrics, "{},{},{},{}", row.step, row.perimeter, row.triangles, row.edges)?;
        let text = cfg.to_snapshot();
        if Configuration::from_snapshot(&text)? != *cfg {
            return Err(HarnessError::Check(format!("snapshot at step {step} does not round-trip")));
        }
        fs::write(self.dir.join(format!("step_{step:012}.txt")), text)?;
        fs::write(self.dir.join(format!("step_{step:012}.svg")), render_svg(cfg))?;
        self.metrics.flush()?;
        self.rows.push(row);
        self.snapshots += 1;
        Ok(())
    }
}

/// Run the chain or the async engine, streaming metrics and snapshots.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<RunSummary, HarnessError> {
    spec.validate()?;
    let initial = spec.initial_configuration()?;
    let mut rec = Recorder::new(&spec.out)?;
    rec.record(0, &initial)?;
    let every = if spec.snapshot_every == 0 { u64::MAX } else { spec.snapshot_every };
    let rng = sub_stream(spec.seed, 0, 0);
    let final_config = match spec.mode {
        Mode::Chain => {
            let mut chain = Chain::with_rng(initial, spec.lambda, rng);
            let mut done = 0;
            while done < spec.steps {
                let chunk = every.min(spec.steps - done);
                chain.run(chunk);
                done += chunk;
                if done % every == 0 || done == spec.steps {
                    rec.record(done, &chain.config)?;
                }
            }
            chain.config
        }
        Mode::Async => {
            let mut engine = AsyncEngine::with_rng(&initial, spec.lambda, rng);
            let horizon_reached =
                |e: &AsyncEngine, done: u64| spec.time.map_or(done >= spec.steps, |t| e.now() >= t);
            let mut done = 0;
            while !horizon_reached(&engine, done) {
                engine.step()?;
                done += 1;
                if done % every == 0 {
                    rec.record(done, &engine.settled_configuration())?;
                }
            }
            let settled = engine.settled_configuration();
            if done % every != 0 {
                rec.record(done, &settled)?;
            }
            let trace = engine.into_trace();
            let replayed = replay(&initial, &reduce_to_chain_trace(&trace))?;
            if replayed != settled {
                return Err(AsyncError::Mismatch.into());
            }
            fs::write(spec.out.join("trace.csv"), trace.to_csv())?;
            settled
        }
        other => return Err(HarnessError::Spec(format!("{other:?} is not a run mode"))),
    };
    Ok(RunSummary { rows: rec.rows, final_config, snapshots: rec.snapshots })
}

/// Scaling experiment over several system sizes.
#[derive(Clone, Debug)]
pub struct ScalingSpec {
    pub ns: Vec<usize>,
    pub lambda: f64,
    pub reps: usize,
    /// Step budget per run; runs that do not compress are censored.
    pub budget: u64,
    pub seed: u64,
    pub target: TargetRule,
}

/// Perimeter a run must reach to count as compressed.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum TargetRule {
    /// `10⌈√n⌉`.
    #[default]
    TenCeilSqrt,
    /// `ratio · 4√n`, rounded down.
    Ratio(f64),
}

impl TargetRule {
    pub fn perimeter(self, n: usize) -> usize {
        match self {
            TargetRule::TenCeilSqrt => compression_target(n),
            TargetRule::Ratio(r) => (r * 4.0 * (n as f64).sqrt()).floor() as usize,
        }
    }

    pub fn describe(self) -> String {
        match self {
            TargetRule::TenCeilSqrt => "perimeter <= 10*ceil(sqrt(n))".into(),
            TargetRule::Ratio(r) => format!("perimeter <= floor({r}*4*sqrt(n))"),
        }
    }
}

/// Default compression target: perimeter at most `10⌈√n⌉`.
pub fn compression_target(n: usize) -> usize {
    10 * (n as f64).sqrt().ceil() as usize
}

/// First step at which a chain started from a line reaches `target`.
pub fn steps_to_compression(n: usize, lambda: f64, target: usize, budget: u64, rng: ChaCha8Rng) -> Option<u64> {
    let mut chain = Chain::with_rng(Configuration::line(n, Direction::E), lambda, rng);
    let perimeter = |c: &Chain| 2 * n - 2 - c.config.triangle_count();
    if perimeter(&chain) <= target {
        return Some(0);
    }
    for step in 1..=budget {
        chain.step();
        if perimeter(&chain) <= target {
            return Some(step);
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub target: usize,
    /// `None` marks a censored repetition.
    pub steps: Vec<Option<u64>>,
    /// `None` when at least half the repetitions are censored.
    pub median: Option<f64>,
}

impl ScalingRow {
    pub fn censored(&self) -> usize {
        self.steps.iter().filter(|s| s.is_none()).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingTable {
    pub lambda: f64,
    pub target: TargetRule,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of ln(median) against ln(n) with a 95% half-width.
    pub slope: Option<(f64, f64)>,
}

/// Median with censored values ordered after every observed one.
pub fn censored_median(values: &[Option<u64>]) -> Option<f64> {
    let mut v: Vec<u64> = values.iter().map(|x| x.unwrap_or(u64::MAX)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let k = v.len();
    let (a, b) = (v[(k - 1) / 2], v[k / 2]);
    (b != u64::MAX).then(|| (a as f64 + b as f64) / 2.0)
}

/// Two-sided 95% Student t quantiles for 1 to 10 degrees of freedom.
const T95: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];

/// Ordinary least squares slope and 95% half-width.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len();
    if k < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    if k == 2 {
        return Some((slope, f64::INFINITY));
    }
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = (sse / (k - 2) as f64 / sxx).sqrt();
    let t = T95.get(k - 3).copied().unwrap_or(1.96);
    Some((slope, t * se))
}

pub fn cmd_scaling(spec: &ScalingSpec) -> ScalingTable {
    let jobs: Vec<(usize, usize, usize)> =
        spec.ns.iter().enumerate().flat_map(|(e, &n)| (0..spec.reps).map(move |r| (e, n, r))).collect();
    let results: Vec<((usize, usize), Option<u64>)> = jobs
        .par_iter()
        .map(|&(e, n, r)| {
            let rng = sub_stream(spec.seed, e as u32, r as u32);
            ((e, r), steps_to_compression(n, spec.lambda, spec.target.perimeter(n), spec.budget, rng))
        })
        .collect();
    let rows: Vec<ScalingRow> = spec
        .ns
        .iter()
        .enumerate()
        .map(|(e, &n)| {
            let mut steps: Vec<(usize, Option<u64>)> =
                results.iter().filter(|((ee, _), _)| *ee == e).map(|((_, r), s)| (*r, *s)).collect();
            steps.sort_by_key(|&(r, _)| r);
            let steps: Vec<Option<u64>> = steps.into_iter().map(|(_, s)| s).collect();
            ScalingRow { n, target: spec.target.perimeter(n), median: censored_median(&steps), steps }
        })
        .collect();
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.median.filter(|&m| m > 0.0).map(|m| (r.n as f64, m))).collect();
    ScalingTable { lambda: spec.lambda, target: spec.target, slope: loglog_slope(&pts), rows }
}

impl ScalingTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# target: {}; lambda = {}\n", self.target.describe(), self.lambda);
        s.push_str("n,target,reps,censored,median_steps,doubling_ratio\n");
        let mut prev: Option<(usize, f64)> = None;
        for r in &self.rows {
            let median = r.median.map(|m| format!("{m:.0}")).unwrap_or_else(|| "censored".into());
            let ratio = match (prev, r.median) {
                (Some((pn, pm)), Some(m)) if r.n == 2 * pn && pm > 0.0 => format!("{:.2}", m / pm),
                _ => String::new(),
            };
            s.push_str(&format!("{},{},{},{},{},{}\n", r.n, r.target, r.steps.len(), r.censored(), median, ratio));
            prev = r.median.map(|m| (r.n, m));
        }
        if let Some((b, h)) = self.slope {
            s.push_str(&format!("# log-log slope {b:.3} +/- {h:.3} (95%)\n"));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct ExactReport {
    pub n: usize,
    pub lambda: f64,
    pub states: usize,
    pub residual: f64,
    pub balance_residual: f64,
    pub weight_form_deviation: f64,
    pub irreducible: bool,
    pub support_symmetric: bool,
}

impl ExactReport {
    pub fn ok(&self) -> bool {
        self.residual < 1e-10
            && self.balance_residual < 1e-10
            && self.weight_form_deviation < 1e-12
            && self.irreducible
            && self.support_symmetric
    }
}

/// Enumerate, verify stationarity and ergodicity, write the histogram and
/// stationary vector.
pub fn cmd_exact(n: usize, lambda: f64, out: Option<&Path>) -> Result<ExactReport, HarnessError> {
    let space = enumerate(n)?;
    let matrix = build_matrix(&space, lambda);
    let pi = stationary(&space, lambda);
    let rep = verify_stationary_with(&matrix, &pi);
    let dev = |v: &[f64]| v.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let report = ExactReport {
        n,
        lambda,
        states: space.len(),
        residual: rep.residual,
        balance_residual: rep.balance_residual,
        weight_form_deviation: dev(&stationary_triangle_form(&space, lambda)).max(dev(&stationary_edge_form(&space, lambda))),
        irreducible: verify_irreducible(&matrix),
        support_symmetric: support_symmetric(&matrix),
    };
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        fs::write(out.join("histogram.csv"), space.histogram_csv())?;
        fs::write(out.join("stationary.csv"), stationary_csv(&space, &pi))?;
    }
    Ok(report)
}

fn stationary_csv(space: &StateSpace, pi: &[f64]) -> String {
    let mut s = String::from("state,perimeter,probability\n");
    for (i, p) in pi.iter().enumerate() {
        s.push_str(&format!("{},{},{:.17e}\n", i, space.perimeters[i], p));
    }
    s
}

#[derive(Clone, Debug)]
pub struct NormalizeReport {
    pub moves: usize,
    pub ok: bool,
}

/// Normalize a configuration, write its move log, and audit it.
pub fn cmd_normalize(cfg: &Configuration, lambda: f64, out: Option<&Path>) -> Result<NormalizeReport, HarnessError> {
    let result = normalize(cfg)?;
    let audit = audit_log(&result, lambda);
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        fs::write(out.join("moves.csv"), result.to_csv())?;
        fs::write(out.join("final.txt"), result.final_config.to_snapshot())?;
    }
    Ok(NormalizeReport { moves: audit.moves, ok: audit.ok() })
}

/// Counting bounds and the dual-polygon check for one `(n, λ)`.
pub fn cmd_bounds(n: usize, lambda: f64) -> Result<(BoundReport, bool), HarnessError> {
    if n > MAX_ENUM_N {
        return Err(SolverError::OutOfRange(n).into());
    }
    let space = enumerate(n)?;
    let report = bounds_report(&space, lambda);
    let saw = saw_bound_check(&space, space.p_max().min(8));
    Ok((report, saw.holds()))
}
