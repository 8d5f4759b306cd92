//! Exact simulation of the Ehrenfest and Engset processes through the
//! embedded jump chain, and Monte-Carlo estimates built on it.
//!
//! Path `i` draws from `ChaCha8Rng` seeded with the master seed on stream
//! `i`, so a path depends only on `(master_seed, i)` and results do not
//! depend on how many threads produced them.

use crate::error::{Error, Result};
use crate::model::{fluid_limit, ModelParams, ProcessKind};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

/// Version of the CSV and JSON sample formats.
pub const SCHEMA_VERSION: u32 = 1;

/// Default cap on the number of jumps of a single path.
pub const DEFAULT_MAX_EVENTS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Stop at the first visit of `target`; paths still running at
    /// `horizon` (if given) are censored.
    HitState { target: usize, horizon: Option<f64> },
    /// Run until `t_max`, recording the state on a grid of `grid_points + 1`
    /// equally spaced times.
    TimeHorizon { t_max: f64, grid_points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub start_state: usize,
    pub stop_rule: StopRule,
    pub n_paths: usize,
    pub master_seed: u64,
    pub max_events_per_path: u64,
}

impl SimConfig {
    pub fn new(params: ModelParams, start_state: usize, stop_rule: StopRule, n_paths: usize, master_seed: u64) -> Result<Self> {
        let c = SimConfig {
            params,
            start_state,
            stop_rule,
            n_paths,
            master_seed,
            max_events_per_path: DEFAULT_MAX_EVENTS,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_max_events(mut self, max_events: u64) -> Result<Self> {
        self.max_events_per_path = max_events;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        self.params.check_state("start", self.start_state)?;
        if self.n_paths == 0 {
            return Err(Error::out_of_range("paths", 0, "paths >= 1"));
        }
        if self.max_events_per_path == 0 {
            return Err(Error::out_of_range("max_events", 0, "max_events >= 1"));
        }
        match self.stop_rule {
            StopRule::HitState { target, horizon } => {
                self.params.check_state("target", target)?;
                if let Some(h) = horizon {
                    if !(h > 0.0) {
                        return Err(Error::out_of_range("horizon", h, "horizon > 0"));
                    }
                }
            }
            StopRule::TimeHorizon { t_max, grid_points } => {
                if !(t_max > 0.0 && t_max.is_finite()) {
                    return Err(Error::out_of_range("t_max", t_max, "finite t_max > 0"));
                }
                if grid_points == 0 {
                    return Err(Error::out_of_range("grid_points", 0, "grid_points >= 1"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(path as u64);
        rng
    }
}

/// Per-state jump data of the embedded chain.
struct JumpTable {
    mean_hold: Vec<f64>,
    /// An up-jump happens when a uniform `u32` falls below this threshold.
    up_threshold: Vec<u64>,
}

impl JumpTable {
    fn new(p: &ModelParams) -> Self {
        let (mut mean_hold, mut up_threshold) = (Vec::new(), Vec::new());
        for x in 0..=p.capacity() {
            let (u, d) = (p.up_rate(x), p.down_rate(x));
            mean_hold.push(1.0 / (u + d));
            up_threshold.push(((u / (u + d)) * 4_294_967_296.0).round() as u64);
        }
        JumpTable { mean_hold, up_threshold }
    }

    #[inline]
    fn step(&self, x: usize, rng: &mut ChaCha8Rng) -> (f64, usize) {
        let hold: f64 = rng.sample::<f64, _>(Exp1) * self.mean_hold[x];
        let up = u64::from(rng.next_u32()) < self.up_threshold[x];
        (hold, if up { x + 1 } else { x - 1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOutcome {
    Hit,
    Horizon,
    EventCap,
}

/// Where and when a path stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEnd {
    pub time: f64,
    pub state: usize,
    pub outcome: PathOutcome,
    pub events: u64,
}

fn run_hitting_path(c: &SimConfig, table: &JumpTable, target: usize, horizon: Option<f64>, path: usize) -> PathEnd {
    let mut rng = c.rng(path);
    let (mut x, mut t, mut events) = (c.start_state, 0.0, 0u64);
    let horizon = horizon.unwrap_or(f64::INFINITY);
    while x != target {
        if events >= c.max_events_per_path {
            return PathEnd { time: t, state: x, outcome: PathOutcome::EventCap, events };
        }
        let (hold, next) = table.step(x, &mut rng);
        if t + hold > horizon {
            return PathEnd { time: horizon, state: x, outcome: PathOutcome::Horizon, events };
        }
        t += hold;
        x = next;
        events += 1;
    }
    PathEnd { time: t, state: x, outcome: PathOutcome::Hit, events }
}

pub(crate) fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParams(format!("cannot build a pool of {n} threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// End point of every path of a [`StopRule::HitState`] configuration.
pub fn simulate_path_ends(c: &SimConfig, threads: Option<usize>) -> Result<Vec<PathEnd>> {
    let StopRule::HitState { target, horizon } = c.stop_rule else {
        return Err(Error::InvalidParams("path ends need a HitState stop rule".into()));
    };
    let table = JumpTable::new(&c.params);
    with_threads(threads, || {
        (0..c.n_paths)
            .into_par_iter()
            .map(|i| run_hitting_path(c, &table, target, horizon, i))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingSampleSet {
    pub config: SimConfig,
    pub config_digest: String,
    /// Hitting times of the uncensored paths, in path order.
    pub times: Vec<f64>,
    pub path_indices: Vec<usize>,
    pub censored_by_events: usize,
    pub censored_by_horizon: usize,
}

impl HittingSampleSet {
    pub fn censored_count(&self) -> usize {
        self.censored_by_events + self.censored_by_horizon
    }

    pub fn n_paths(&self) -> usize {
        self.config.n_paths
    }

    /// The horizon of the stop rule, if any.
    pub fn horizon(&self) -> Option<f64> {
        match self.config.stop_rule {
            StopRule::HitState { horizon, .. } => horizon,
            StopRule::TimeHorizon { t_max, .. } => Some(t_max),
        }
    }

    pub fn summary(&self) -> SampleSummary {
        SampleSummary::of(&self.times, self.censored_by_events, self.censored_by_horizon)
    }

    /// One row per uncensored path; a comment line carries the digest.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# schema_version={SCHEMA_VERSION} config_digest={} censored_by_events={} censored_by_horizon={}",
            self.config_digest, self.censored_by_events, self.censored_by_horizon
        )
        .map_err(io_error)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path", "time"]).map_err(csv_error)?;
        for (i, t) in self.path_indices.iter().zip(&self.times) {
            w.write_record([i.to_string(), t.to_string()]).map_err(csv_error)?;
        }
        w.flush().map_err(io_error)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Config echo and summary statistics.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "config_digest": self.config_digest,
            "summary": self.summary(),
        })
    }
}

fn io_error(e: std::io::Error) -> Error {
    Error::Unsupported(format!("write failed: {e}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Unsupported(format!("csv write failed: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    pub std_error: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub censored_by_events: usize,
    pub censored_by_horizon: usize,
}

impl SampleSummary {
    fn of(xs: &[f64], censored_by_events: usize, censored_by_horizon: usize) -> Self {
        let n = xs.len();
        let mean = (n > 0).then(|| xs.iter().sum::<f64>() / n as f64);
        let std_dev = (n > 1).then(|| {
            let m = mean.unwrap();
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        SampleSummary {
            count: n,
            mean,
            std_dev,
            std_error: std_dev.map(|s| s / (n as f64).sqrt()),
            min: xs.iter().copied().reduce(f64::min),
            max: xs.iter().copied().reduce(f64::max),
            censored_by_events,
            censored_by_horizon,
        }
    }
}

fn collect_hitting(c: &SimConfig, ends: Vec<PathEnd>) -> HittingSampleSet {
    let mut set = HittingSampleSet {
        config: *c,
        config_digest: c.digest(),
        times: Vec::new(),
        path_indices: Vec::new(),
        censored_by_events: 0,
        censored_by_horizon: 0,
    };
    for (i, e) in ends.into_iter().enumerate() {
        match e.outcome {
            PathOutcome::Hit => {
                set.times.push(e.time);
                set.path_indices.push(i);
            }
            PathOutcome::Horizon => set.censored_by_horizon += 1,
            PathOutcome::EventCap => set.censored_by_events += 1,
        }
    }
    set
}

/// Hitting-time samples for a [`StopRule::HitState`] configuration, using
/// the global rayon pool (`threads = None`) or a pool of the given size.
pub fn simulate_hitting(c: &SimConfig, threads: Option<usize>) -> Result<HittingSampleSet> {
    let ends = simulate_path_ends(c, threads)?;
    Ok(collect_hitting(c, ends))
}

/// States on a time grid, for a [`StopRule::TimeHorizon`] configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSampleSet {
    pub config: SimConfig,
    pub config_digest: String,
    pub grid: Vec<f64>,
    /// `states[path][k]` is the state at `grid[k]`.
    pub states: Vec<Vec<usize>>,
    pub censored_by_events: usize,
}

impl HorizonSampleSet {
    pub fn terminal_states(&self) -> Vec<usize> {
        self.states.iter().map(|s| *s.last().expect("grid is non-empty")).collect()
    }

    /// One row per path and grid time.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# schema_version={SCHEMA_VERSION} config_digest={} censored_by_events={}",
            self.config_digest, self.censored_by_events
        )
        .map_err(io_error)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path", "time", "state"]).map_err(csv_error)?;
        for (i, row) in self.states.iter().enumerate() {
            for (t, x) in self.grid.iter().zip(row) {
                w.write_record([i.to_string(), t.to_string(), x.to_string()]).map_err(csv_error)?;
            }
        }
        w.flush().map_err(io_error)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let terminal: Vec<f64> = self.terminal_states().into_iter().map(|x| x as f64).collect();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "config_digest": self.config_digest,
            "terminal_state": SampleSummary::of(&terminal, self.censored_by_events, 0),
        })
    }
}

fn run_grid_path(c: &SimConfig, table: &JumpTable, grid: &[f64], path: usize) -> (Vec<usize>, bool) {
    let mut rng = c.rng(path);
    let (mut x, mut t, mut events) = (c.start_state, 0.0, 0u64);
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    loop {
        if events >= c.max_events_per_path {
            return (out, false);
        }
        let (hold, next) = table.step(x, &mut rng);
        let t_next = t + hold;
        while k < grid.len() && grid[k] < t_next {
            out.push(x);
            k += 1;
        }
        if k == grid.len() {
            return (out, true);
        }
        t = t_next;
        x = next;
        events += 1;
    }
}

pub fn simulate_horizon(c: &SimConfig, threads: Option<usize>) -> Result<HorizonSampleSet> {
    let StopRule::TimeHorizon { t_max, grid_points } = c.stop_rule else {
        return Err(Error::InvalidParams("grid sampling needs a TimeHorizon stop rule".into()));
    };
    let grid: Vec<f64> = (0..=grid_points).map(|k| t_max * k as f64 / grid_points as f64).collect();
    let table = JumpTable::new(&c.params);
    let runs: Vec<(Vec<usize>, bool)> = with_threads(threads, || {
        (0..c.n_paths)
            .into_par_iter()
            .map(|i| run_grid_path(c, &table, &grid, i))
            .collect()
    })?;
    let censored = runs.iter().filter(|r| !r.1).count();
    Ok(HorizonSampleSet {
        config: *c,
        config_digest: c.digest(),
        grid,
        states: runs.into_iter().filter(|r| r.1).map(|r| r.0).collect(),
        censored_by_events: censored,
    })
}

/// Output of [`simulate_paths`].
#[derive(Debug, Clone, PartialEq)]
pub enum SimulationOutput {
    Hitting(HittingSampleSet),
    Horizon(HorizonSampleSet),
}

impl SimulationOutput {
    pub fn to_csv_string(&self) -> Result<String> {
        match self {
            SimulationOutput::Hitting(s) => s.to_csv_string(),
            SimulationOutput::Horizon(s) => s.to_csv_string(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            SimulationOutput::Hitting(s) => s.to_json(),
            SimulationOutput::Horizon(s) => s.to_json(),
        }
    }
}

/// Runs a configuration with whichever stop rule it carries.
pub fn simulate_paths(c: &SimConfig, threads: Option<usize>) -> Result<SimulationOutput> {
    match c.stop_rule {
        StopRule::HitState { .. } => simulate_hitting(c, threads).map(SimulationOutput::Hitting),
        StopRule::TimeHorizon { .. } => simulate_horizon(c, threads).map(SimulationOutput::Horizon),
    }
}

/// Hitting times of the Ehrenfest process built as a sum of `N` independent
/// two-state particles (off→on at rate `ν`, on→off at rate `μ`).
pub fn simulate_particles_hitting(c: &SimConfig, threads: Option<usize>) -> Result<HittingSampleSet> {
    if c.params.kind() != ProcessKind::Ehrenfest {
        return Err(Error::Unsupported("the particle construction only describes the Ehrenfest process".into()));
    }
    let StopRule::HitState { target, horizon } = c.stop_rule else {
        return Err(Error::InvalidParams("particle simulation needs a HitState stop rule".into()));
    };
    let p = c.params;
    let horizon = horizon.unwrap_or(f64::INFINITY);
    let run = |path: usize| -> PathEnd {
        let mut rng = c.rng(path);
        let n = p.n();
        let mut on = vec![false; n];
        on.iter_mut().take(c.start_state).for_each(|s| *s = true);
        let mut queue: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::with_capacity(n);
        let schedule = |now: f64, state: bool, rng: &mut ChaCha8Rng| {
            let rate = if state { p.mu() } else { p.nu() };
            now + rng.sample::<f64, _>(Exp1) / rate
        };
        for (i, &state) in on.iter().enumerate() {
            let t = schedule(0.0, state, &mut rng);
            // non-negative floats order like their bit patterns
            queue.push(Reverse((t.to_bits(), i)));
        }
        let (mut x, mut events) = (c.start_state, 0u64);
        let mut now = 0.0;
        while x != target {
            if events >= c.max_events_per_path {
                return PathEnd { time: now, state: x, outcome: PathOutcome::EventCap, events };
            }
            let Reverse((bits, i)) = queue.pop().expect("particles are always scheduled");
            let t = f64::from_bits(bits);
            if t > horizon {
                return PathEnd { time: horizon, state: x, outcome: PathOutcome::Horizon, events };
            }
            now = t;
            on[i] = !on[i];
            if on[i] {
                x += 1;
            } else {
                x -= 1;
            }
            events += 1;
            let next = schedule(now, on[i], &mut rng);
            queue.push(Reverse((next.to_bits(), i)));
        }
        PathEnd { time: now, state: x, outcome: PathOutcome::Hit, events }
    };
    let ends = with_threads(threads, || (0..c.n_paths).into_par_iter().map(run).collect())?;
    Ok(collect_hitting(c, ends))
}

/// Monte-Carlo estimate of `E[e^{−αT}]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LtEstimate {
    pub alpha: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Sample mean and standard error of `e^{−αT}`.
///
/// Event-cap censoring is always refused. Horizon censoring is accepted only
/// when `e^{−α·horizon}` is exactly `0.0` in double precision, in which case
/// a censored path contributes exactly what any completion of it would.
pub fn empirical_lt(s: &HittingSampleSet, alpha: f64) -> Result<LtEstimate> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::out_of_range("alpha", alpha, "alpha >= 0"));
    }
    let n = s.times.len() + s.censored_count();
    if alpha == 0.0 {
        return Ok(LtEstimate { alpha, estimate: 1.0, std_error: 0.0, n });
    }
    if s.censored_by_events > 0 {
        return Err(Error::Censored { count: s.censored_by_events, total: n });
    }
    if s.censored_by_horizon > 0 {
        let h = s.horizon().unwrap_or(f64::INFINITY);
        if (-alpha * h).exp() != 0.0 {
            return Err(Error::Censored { count: s.censored_by_horizon, total: n });
        }
    }
    let values: Vec<f64> = s.times.iter().map(|t| (-alpha * t).exp()).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    // censored paths contribute zeros
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        + s.censored_by_horizon as f64 * mean * mean;
    let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
    Ok(LtEstimate { alpha, estimate: mean, std_error: (var / n as f64).sqrt(), n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidDeviation {
    /// Path average of `sup_k |X(t_k)/N − x(t_k)|`.
    pub mean_sup_deviation: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// Distance between simulated paths and the fluid limit over the time grid.
pub fn fluid_deviation(c: &SimConfig, threads: Option<usize>) -> Result<FluidDeviation> {
    let set = simulate_horizon(c, threads)?;
    if set.censored_by_events > 0 {
        return Err(Error::Censored { count: set.censored_by_events, total: c.n_paths });
    }
    let n = c.params.n() as f64;
    let x0 = c.start_state as f64 / n;
    let fluid: Vec<f64> = set.grid.iter().map(|&t| fluid_limit(&c.params, x0, t)).collect::<Result<_>>()?;
    let sups: Vec<f64> = set
        .states
        .iter()
        .map(|row| {
            row.iter()
                .zip(&fluid)
                .map(|(&x, f)| (x as f64 / n - f).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let s = SampleSummary::of(&sups, 0, 0);
    Ok(FluidDeviation {
        mean_sup_deviation: s.mean.unwrap_or(0.0),
        std_error: s.std_error.unwrap_or(0.0),
        paths: sups.len(),
    })
}
