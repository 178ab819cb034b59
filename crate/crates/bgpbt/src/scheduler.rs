//! The population scheduler: parallel agent stepping, truncation-selection
//! exploit, surrogate-guided explore inside the trust region, restart
//! handling, generation triggering, and a full append-only schedule record.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::acquisition::{self, AcquisitionContext, AcquisitionOptions};
use crate::analysis::beta_schedule;
use crate::benchmark::{AgentState, Objective};
use crate::generation::{
    self, descending_order, DistillationSchedule, GenerationError, GenerationPlan,
};
use crate::gp::{self, Dataset, FitBounds, FitOptions, GpModel};
use crate::space::{ConfigVector, RawValue, SpaceError, TimestampedObservation};
use crate::trust_region::{
    self, RestartArchive, TrustRegionConfig, TrustRegionError, TrustRegionState,
};

/// Errors from scheduler configuration and execution.
#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("invalid scheduler configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    TrustRegion(#[from] TrustRegionError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What happened to an agent at a synchronization point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTag {
    /// Warm-start evaluation before the first tick.
    Init,
    /// Plain training step.
    Step,
    /// The agent's weights and architecture were replaced this tick.
    Exploit,
    /// A trust-region restart fired this tick.
    Restart,
    /// The agent was rebuilt at a generation boundary.
    Generation,
}

impl EventTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventTag::Init => "init",
            EventTag::Step => "step",
            EventTag::Exploit => "exploit",
            EventTag::Restart => "restart",
            EventTag::Generation => "generation",
        }
    }
}

impl fmt::Display for EventTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One agent's evaluated state at one synchronization point.
#[derive(Debug, Clone)]
pub struct ScheduleRow {
    pub tick: u64,
    pub agent_id: usize,
    /// Observed return; NaN marks a failed evaluation.
    pub ret: f64,
    pub generation: u32,
    pub event: EventTag,
    /// The config the agent trained under this tick.
    pub config: ConfigVector,
}

impl PartialEq for ScheduleRow {
    fn eq(&self, other: &Self) -> bool {
        self.tick == other.tick
            && self.agent_id == other.agent_id
            && self.ret.to_bits() == other.ret.to_bits()
            && self.generation == other.generation
            && self.event == other.event
            && self.config.x().len() == other.config.x().len()
            && self
                .config
                .x()
                .iter()
                .zip(other.config.x())
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.config.h() == other.config.h()
    }
}

/// Append-only log of a run: one row per agent per synchronization point.
#[derive(Debug, Clone, Default)]
pub struct ScheduleRecord {
    rows: Vec<ScheduleRow>,
}

impl ScheduleRecord {
    pub fn push(&mut self, row: ScheduleRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[ScheduleRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// One JSON object per row, configs decoded to raw dimension values.
    /// Failed returns serialize as null.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in &self.rows {
            let ret = serde_json::Number::from_f64(row.ret)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null);
            let config: BTreeMap<String, RawValue> = row.config.decode();
            let line = serde_json::json!({
                "tick": row.tick,
                "agent_id": row.agent_id,
                "return": ret,
                "generation": row.generation,
                "event": row.event.as_str(),
                "config": config,
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Tabular form with header
    /// `tick,agent_id,return,generation,event` followed by one column per
    /// decoded dimension, in the space's dimension order.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let Some(first) = self.rows.first() else {
            return Ok(());
        };
        let names: Vec<String> = first
            .config
            .space()
            .dimensions()
            .iter()
            .map(|d| d.name().to_owned())
            .collect();
        let mut header = vec![
            "tick".to_owned(),
            "agent_id".to_owned(),
            "return".to_owned(),
            "generation".to_owned(),
            "event".to_owned(),
        ];
        header.extend(names.iter().cloned());
        wtr.write_record(&header).map_err(csv_io)?;
        for row in &self.rows {
            let decoded = row.config.decode();
            let mut fields = vec![
                row.tick.to_string(),
                row.agent_id.to_string(),
                row.ret.to_string(),
                row.generation.to_string(),
                row.event.as_str().to_owned(),
            ];
            for name in &names {
                fields.push(match decoded.get(name) {
                    Some(RawValue::Float(v)) => v.to_string(),
                    Some(RawValue::Str(s)) => s.clone(),
                    None => String::new(),
                });
            }
            wtr.write_record(&fields).map_err(csv_io)?;
        }
        wtr.flush()
    }
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// How the synchronization interval evolves over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TReadyMode {
    Constant,
    LinearAnneal,
}

/// The interval (in objective units) between synchronization points,
/// optionally annealed linearly from `start` to `end` over `horizon` units.
#[derive(Debug, Clone, PartialEq)]
pub struct TReadySchedule {
    pub mode: TReadyMode,
    pub start: f64,
    pub end: f64,
    /// Units over which the anneal completes; ignored in constant mode.
    pub horizon: u64,
}

impl TReadySchedule {
    pub fn constant(value: f64) -> Self {
        TReadySchedule {
            mode: TReadyMode::Constant,
            start: value,
            end: value,
            horizon: 1,
        }
    }

    pub fn anneal(start: f64, end: f64, horizon: u64) -> Self {
        TReadySchedule {
            mode: TReadyMode::LinearAnneal,
            start,
            end,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.start > 0.0 && self.end > 0.0) {
            return Err(SchedulerError::BadConfig(
                "t_ready values must be positive".into(),
            ));
        }
        if self.end > self.start {
            return Err(SchedulerError::BadConfig(
                "t_ready anneal end must not exceed its start".into(),
            ));
        }
        if self.mode == TReadyMode::LinearAnneal && self.horizon == 0 {
            return Err(SchedulerError::BadConfig(
                "t_ready anneal horizon must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The interval to use after `elapsed` objective units, rounded to whole
    /// units and never shorter than one.
    pub fn t_ready_at(&self, elapsed: u64) -> u64 {
        let value = match self.mode {
            TReadyMode::Constant => self.start,
            TReadyMode::LinearAnneal => {
                let frac = elapsed.min(self.horizon) as f64 / self.horizon as f64;
                self.start + (self.end - self.start) * frac
            }
        };
        (value.round() as u64).max(1)
    }
}

/// Everything a run needs besides the objective and the seed.
#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    /// Population size B.
    pub population: usize,
    /// Truncation fraction, in percent of the population.
    pub q_percent: f64,
    pub t_ready: TReadySchedule,
    /// Objective units after which the run stops.
    pub t_max_units: u64,
    /// Non-improving ticks before a generation is forced.
    pub patience: u32,
    /// Objective units between scheduled generations.
    pub generation_units: u64,
    /// Warm-start pool size (truncated to the population after one interval).
    pub init_pool: usize,
    /// Sliding-window cap on surrogate observations.
    pub max_gp_points: usize,
    /// Confidence parameter of the exploration-weight schedule.
    pub beta_delta: f64,
    /// Multistart count for the first surrogate fit.
    pub fit_starts: usize,
    /// Multistart count for warm-started refits.
    pub refit_starts: usize,
    pub fit_iters: usize,
    pub refit_iters: usize,
    /// Candidate architectures per generation.
    pub n_candidates: usize,
    /// How many candidates come from the architecture surrogate.
    pub n_bo: usize,
    pub distill: DistillationSchedule,
    pub acq: AcquisitionOptions,
    pub trust_region: TrustRegionConfig,
    /// Truncation-selection weight copying.
    pub enable_exploit: bool,
    /// Surrogate-guided explore (uniform resampling when off).
    pub enable_bo: bool,
    /// Trust-region constraint and restarts on suggestions.
    pub enable_trust_region: bool,
    /// Generational architecture search.
    pub enable_nas: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            population: 8,
            q_percent: 12.5,
            t_ready: TReadySchedule::constant(1.0),
            t_max_units: 150,
            patience: 20,
            generation_units: 40,
            init_pool: 24,
            max_gp_points: 128,
            beta_delta: 0.1,
            fit_starts: 8,
            refit_starts: 2,
            fit_iters: 80,
            refit_iters: 40,
            n_candidates: 24,
            n_bo: 4,
            distill: DistillationSchedule::default(),
            acq: AcquisitionOptions::default(),
            trust_region: TrustRegionConfig::default(),
            enable_exploit: true,
            enable_bo: true,
            enable_trust_region: true,
            enable_nas: true,
        }
    }
}

impl SchedulerConfig {
    /// Baseline that keeps exploit but replaces every explore suggestion
    /// with a uniform sample (no surrogate, no trust region, no generations).
    pub fn random_explore(mut self) -> Self {
        self.enable_bo = false;
        self.enable_trust_region = false;
        self.enable_nas = false;
        self
    }

    /// Baseline with exploit and surrogate-guided explore but neither trust
    /// regions nor generations.
    pub fn surrogate_explore_only(mut self) -> Self {
        self.enable_bo = true;
        self.enable_trust_region = false;
        self.enable_nas = false;
        self
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.population == 0 {
            return Err(SchedulerError::BadConfig(
                "population must be positive".into(),
            ));
        }
        if self.init_pool < self.population {
            return Err(SchedulerError::BadConfig(format!(
                "warm-start pool of {} cannot seed a population of {}",
                self.init_pool, self.population
            )));
        }
        if !(self.q_percent > 0.0 && self.q_percent <= 50.0) {
            return Err(SchedulerError::BadConfig(format!(
                "truncation percent {} outside (0, 50]",
                self.q_percent
            )));
        }
        if !(self.beta_delta > 0.0 && self.beta_delta < 1.0) {
            return Err(SchedulerError::BadConfig(format!(
                "confidence parameter {} outside (0, 1)",
                self.beta_delta
            )));
        }
        if self.t_max_units == 0 {
            return Err(SchedulerError::BadConfig("t_max must be positive".into()));
        }
        if self.patience == 0 || self.generation_units == 0 {
            return Err(SchedulerError::BadConfig(
                "generation triggers must be positive".into(),
            ));
        }
        if self.max_gp_points == 0 {
            return Err(SchedulerError::BadConfig(
                "surrogate window must hold at least one point".into(),
            ));
        }
        self.t_ready.validate()?;
        if self.enable_nas {
            GenerationPlan::new(
                self.n_candidates,
                self.n_bo,
                self.population,
                self.distill.horizon,
            )?;
        }
        Ok(())
    }
}

/// One population slot: its identity is stable for the whole run while its
/// weights, architecture, and hyperparameters are replaced in place.
#[derive(Debug, Clone)]
pub struct Agent {
    pub id: usize,
    pub config: ConfigVector,
    pub state: AgentState,
    pub cumulative_steps: u64,
    /// NaN until evaluated, and after a failed evaluation.
    pub last_return: f64,
    pub generation: u32,
    rng: ChaCha8Rng,
}

impl Agent {
    fn advance(&mut self, objective: &dyn Objective, tick: u64, steps: u64) {
        self.last_return =
            match objective.advance(&mut self.state, &self.config, tick, steps, &mut self.rng) {
                Ok(v) if v.is_finite() => v,
                _ => f64::NAN,
            };
        self.cumulative_steps += steps;
    }

    fn row(&self, tick: u64, event: EventTag) -> ScheduleRow {
        ScheduleRow {
            tick,
            agent_id: self.id,
            ret: self.last_return,
            generation: self.generation,
            event,
            config: self.config.clone(),
        }
    }
}

/// Truncation selection: rank by return (descending, failures last, ties by
/// slot), and give each of the bottom `m` slots a uniformly random donor
/// from the top `m`, where `m = min(⌈B·q/100⌉, ⌊B/2⌋)`. Returns
/// `(loser, winner)` slot pairs in rank order of the losers.
pub fn exploit_assignments<R: Rng + ?Sized>(
    returns: &[f64],
    q_percent: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let b = returns.len();
    let m = (((b as f64) * q_percent / 100.0).ceil() as usize).min(b / 2);
    if m == 0 {
        return Vec::new();
    }
    let order = descending_order(returns);
    let winners = &order[..m];
    let losers = &order[b - m..];
    losers
        .iter()
        .map(|&loser| (loser, winners[rng.random_range(0..m)]))
        .collect()
}

/// End-of-run digest: the best observation, counters, and the exact step
/// accounting.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// Best finite return observed, NaN if every evaluation failed.
    pub best_return: f64,
    pub best_tick: u64,
    pub best_agent_id: usize,
    /// Decoded best config; empty if every evaluation failed.
    pub best_config: BTreeMap<String, RawValue>,
    pub n_ticks: u64,
    pub n_restarts: u64,
    pub n_generations: u32,
    /// Running best return, one entry for the warm start plus one per tick.
    pub best_so_far: Vec<f64>,
    pub steps_warmup: u64,
    pub steps_ticks: u64,
    pub steps_distill: u64,
    /// `steps_warmup + steps_ticks + steps_distill`, exactly.
    pub total_steps: u64,
}

/// A full run: the row-level record and its summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ScheduleRecord,
    pub summary: RunSummary,
}

fn bits_key(c: &ConfigVector) -> (Vec<u64>, Vec<usize>) {
    (
        c.x().iter().map(|v| v.to_bits()).collect(),
        c.h().to_vec(),
    )
}

/// Execute the full loop: warm-start `init_pool` agents for one interval and
/// keep the top B, then tick until `t_max_units`, each tick training every
/// agent, updating the surrogate, scoring pending suggestions against the
/// population, exploiting, exploring, and handling restarts and generations.
pub fn run<R: Rng + ?Sized>(
    config: &SchedulerConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<RunOutput, SchedulerError> {
    config.validate()?;
    let space = Arc::clone(objective.space());
    let b = config.population;
    let n_dims = space.n_dims();
    let delta = config.beta_delta;

    let mut record = ScheduleRecord::default();
    let mut dataset = Dataset::with_max_points(config.max_gp_points);
    let mut model: Option<GpModel> = None;

    let mut steps_warmup = 0u64;
    let mut steps_ticks = 0u64;
    let mut steps_distill = 0u64;

    // With generations disabled, architecture dimensions stay pinned at the
    // space's declared defaults so the run only tunes the remaining dims.
    let pinned_arch = if !config.enable_nas && space.has_arch_dims() {
        Some(space.default_config()?)
    } else {
        None
    };

    // Warm start: a wide pool trains for one interval, then only the top B
    // slots survive (keeping their pool ids).
    let dt0 = config.t_ready.t_ready_at(0);
    let mut pool: Vec<Agent> = Vec::with_capacity(config.init_pool);
    for id in 0..config.init_pool {
        let mut cfg = space.random_config(rng);
        if let Some(defaults) = &pinned_arch {
            cfg.copy_arch_from(defaults);
        }
        let seed = rng.random::<u64>();
        pool.push(Agent {
            id,
            config: cfg,
            state: objective.init_state(),
            cumulative_steps: 0,
            last_return: f64::NAN,
            generation: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        });
    }
    for a in &mut pool {
        a.advance(objective, 0, dt0);
        steps_warmup += dt0;
    }
    for a in &pool {
        record.push(a.row(0, EventTag::Init));
        if a.last_return.is_finite() {
            dataset.push(TimestampedObservation {
                config: a.config.clone(),
                timestep: 0,
                value: a.last_return,
            });
        }
    }
    let pool_returns: Vec<f64> = pool.iter().map(|a| a.last_return).collect();
    let order = descending_order(&pool_returns);
    let mut slots: Vec<Option<Agent>> = pool.into_iter().map(Some).collect();
    let mut agents: Vec<Agent> = order
        .iter()
        .take(b)
        .map(|&i| slots[i].take().expect("each pool slot taken once"))
        .collect();
    agents.sort_by_key(|a| a.id);

    let mut best_return = f64::NEG_INFINITY;
    let mut best_tick = 0u64;
    let mut best_agent_id = agents[0].id;
    let mut best_config: Option<ConfigVector> = None;
    for a in &agents {
        if a.last_return.is_finite() && a.last_return > best_return {
            best_return = a.last_return;
            best_agent_id = a.id;
            best_config = Some(a.config.clone());
        }
    }
    let mut best_so_far = vec![best_return];

    let center = best_config
        .clone()
        .unwrap_or_else(|| agents[0].config.clone());
    let mut tr = TrustRegionState::new(center, config.trust_region.clone());
    let mut archive = RestartArchive::default();
    let mut periods: Vec<Vec<ConfigVector>> = vec![Vec::new()];
    // Slots whose current config is an unsettled surrogate suggestion.
    let mut pending: Vec<usize> = Vec::new();

    let mut tick = 0u64;
    let mut units = 0u64;
    let mut units_since_gen = 0u64;
    let mut fail_count = 0u32;
    let mut generation = 0u32;
    let mut n_restarts = 0u64;

    while units < config.t_max_units {
        let dt = config.t_ready.t_ready_at(units);
        tick += 1;

        for a in &mut agents {
            a.advance(objective, tick, dt);
            steps_ticks += dt;
        }
        units += dt;
        units_since_gen += dt;

        // What each slot actually trained under this tick; rows and the
        // surrogate both use this snapshot, not the post-explore configs.
        let returns: Vec<f64> = agents.iter().map(|a| a.last_return).collect();
        let snapshot: Vec<ConfigVector> = agents.iter().map(|a| a.config.clone()).collect();

        dataset.advance_to(tick);
        for (slot, &ret) in returns.iter().enumerate() {
            if ret.is_finite() {
                dataset.push(TimestampedObservation {
                    config: snapshot[slot].clone(),
                    timestep: tick,
                    value: ret,
                });
            }
        }

        // Score last tick's suggestions against the population they trained
        // in, then feed the outcomes to the trust region.
        if config.enable_trust_region {
            for slot in pending.drain(..) {
                let success =
                    trust_region::is_success(returns[slot], &returns, config.q_percent)?;
                tr.record_result(success);
            }
        } else {
            pending.clear();
        }

        let mut improved = false;
        for (slot, &ret) in returns.iter().enumerate() {
            if ret.is_finite() && ret > best_return {
                best_return = ret;
                best_tick = tick;
                best_agent_id = agents[slot].id;
                best_config = Some(snapshot[slot].clone());
                improved = true;
            }
        }
        if improved {
            fail_count = 0;
        } else {
            fail_count += 1;
        }
        best_so_far.push(best_return);

        if config.enable_bo && !dataset.is_empty() {
            let options = FitOptions {
                bounds: FitBounds::default(),
                n_starts: if model.is_some() {
                    config.refit_starts
                } else {
                    config.fit_starts
                },
                max_iters: if model.is_some() {
                    config.refit_iters
                } else {
                    config.fit_iters
                },
                warm_start: model.as_ref().map(|m| m.params().clone()),
            };
            if let Ok(m) = gp::fit(&dataset, &options, rng) {
                model = Some(m);
            }
        }

        periods
            .last_mut()
            .expect("at least one restart period")
            .extend(snapshot.iter().cloned());

        let generation_due = config.enable_nas
            && space.has_arch_dims()
            && (fail_count >= config.patience || units_since_gen >= config.generation_units);
        if generation_due {
            for (slot, a) in agents.iter().enumerate() {
                record.push(ScheduleRow {
                    tick,
                    agent_id: a.id,
                    ret: returns[slot],
                    generation: a.generation,
                    event: EventTag::Step,
                    config: snapshot[slot].clone(),
                });
            }
            let arch_space = space.arch_subspace().expect("arch dims checked");
            let arch_records =
                generation::collect_arch_records(&record, generation, &arch_space)?;
            let teacher_slot = descending_order(&returns)[0];
            let plan = GenerationPlan::new(
                config.n_candidates,
                config.n_bo,
                b,
                config.distill.horizon,
            )?;
            let gen_beta = beta_schedule(tick + 1, arch_space.n_dims(), delta);
            let outcome = generation::run_generation(
                &arch_records,
                &agents[teacher_slot].state,
                &agents[teacher_slot].config,
                objective,
                &plan,
                &config.distill,
                &config.acq,
                gen_beta,
                tick,
                rng,
            )?;
            steps_distill += outcome.steps_consumed;
            // The distillation phase spends the same global step budget as
            // training ticks: one unit equals `population` parallel steps.
            units += outcome.steps_consumed.div_ceil(b as u64);
            generation += 1;
            units_since_gen = 0;
            fail_count = 0;
            for (slot, (cfg, state, ret)) in agents.iter_mut().zip(outcome.survivors) {
                slot.config = cfg;
                slot.state = state;
                slot.last_return = ret;
                slot.generation = generation;
            }
            for a in &agents {
                if a.last_return.is_finite() {
                    dataset.push(TimestampedObservation {
                        config: a.config.clone(),
                        timestep: tick,
                        value: a.last_return,
                    });
                }
                record.push(a.row(tick, EventTag::Generation));
            }
            let new_returns: Vec<f64> = agents.iter().map(|a| a.last_return).collect();
            let new_best = descending_order(&new_returns)[0];
            tr.reinit(agents[new_best].config.clone());
            archive = RestartArchive::default();
            periods = vec![Vec::new()];
            pending.clear();
            continue;
        }

        let mut restarted = false;
        if config.enable_trust_region {
            if tr.needs_restart() {
                if let Some(m) = &model {
                    archive = trust_region::refresh_archive(&periods, m, tick);
                }
                let rc_beta = beta_schedule(tick + 1, n_dims, delta);
                let center = trust_region::restart_center(&archive, &space, rc_beta, rng);
                tr.reinit(center);
                periods.push(Vec::new());
                n_restarts += 1;
                restarted = true;
            } else {
                let lead = descending_order(&returns)[0];
                if returns[lead].is_finite() {
                    tr.set_center(snapshot[lead].clone());
                }
            }
        }

        let mut exploited: BTreeSet<usize> = BTreeSet::new();
        let mut to_explore: Vec<usize> = Vec::new();
        if config.enable_exploit {
            for (loser, winner) in exploit_assignments(&returns, config.q_percent, rng) {
                let donor_state = agents[winner].state.clone();
                let donor_config = agents[winner].config.clone();
                agents[loser].state = donor_state;
                agents[loser].config.copy_arch_from(&donor_config);
                exploited.insert(loser);
                to_explore.push(loser);
            }
        }

        // Explore: replaced slots get fresh hyperparameters, conditioned on
        // their (new) architecture. Later suggestions within a tick are
        // conditioned on earlier ones through posterior-mean fantasies.
        let explore_beta = beta_schedule(tick + 1, n_dims, delta);
        let mut fantasy_model = model.clone();
        let mut picked: BTreeSet<(Vec<u64>, Vec<usize>)> = BTreeSet::new();
        for &slot in &to_explore {
            let mut proposed: Option<ConfigVector> = None;
            if config.enable_bo {
                if let Some(m) = fantasy_model.as_ref() {
                    let ctx = AcquisitionContext {
                        model: m,
                        space: &space,
                        t: tick + 1,
                        beta: explore_beta,
                        tr: config.enable_trust_region.then_some(&tr),
                        fixed_arch: Some(&agents[slot].config),
                        opts: config.acq.clone(),
                    };
                    let mut pick = acquisition::suggest(&ctx, config.acq.n_starts, rng);
                    if picked.contains(&bits_key(&pick)) {
                        let skip_x = space.x_arch_mask();
                        let skip_h = space.h_arch_mask();
                        for _ in 0..100 {
                            let alt =
                                acquisition::random_interior(&ctx, &pick, &skip_x, &skip_h, rng);
                            if !picked.contains(&bits_key(&alt)) {
                                pick = alt;
                                break;
                            }
                        }
                    }
                    let fantasy = m.posterior(&pick, tick + 1).0;
                    let next_model = if to_explore.len() > 1 {
                        let mut fantasized = Dataset::new();
                        for obs in m.observations() {
                            fantasized.push(obs.clone());
                        }
                        fantasized.push(TimestampedObservation {
                            config: pick.clone(),
                            timestep: tick + 1,
                            value: fantasy,
                        });
                        GpModel::with_params(&fantasized, m.params().clone()).ok()
                    } else {
                        None
                    };
                    if let Some(m2) = next_model {
                        fantasy_model = Some(m2);
                    }
                    proposed = Some(pick);
                }
            }
            match proposed {
                Some(pick) => {
                    picked.insert(bits_key(&pick));
                    agents[slot].config = pick;
                    pending.push(slot);
                }
                None => {
                    let mut cfg = space.random_config(rng);
                    cfg.copy_arch_from(&agents[slot].config);
                    agents[slot].config = cfg;
                }
            }
        }

        for (slot, a) in agents.iter().enumerate() {
            let event = if exploited.contains(&slot) {
                EventTag::Exploit
            } else if restarted {
                EventTag::Restart
            } else {
                EventTag::Step
            };
            record.push(ScheduleRow {
                tick,
                agent_id: a.id,
                ret: returns[slot],
                generation: a.generation,
                event,
                config: snapshot[slot].clone(),
            });
        }
    }

    let summary = RunSummary {
        best_return: if best_config.is_some() {
            best_return
        } else {
            f64::NAN
        },
        best_tick,
        best_agent_id,
        best_config: best_config.map(|c| c.decode()).unwrap_or_default(),
        n_ticks: tick,
        n_restarts,
        n_generations: generation,
        best_so_far,
        steps_warmup,
        steps_ticks,
        steps_distill,
        total_steps: steps_warmup + steps_ticks + steps_distill,
    };
    Ok(RunOutput { record, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{AgentSimObjective, BenchmarkError, SimParams, SyntheticObjective};
    use crate::space::SearchSpace;
    use rand::RngCore;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Wraps an objective and fails a configurable fraction of evaluations.
    struct Flaky {
        inner: SyntheticObjective,
        fail_rate: f64,
    }

    impl Objective for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn space(&self) -> &Arc<SearchSpace> {
            self.inner.space()
        }
        fn init_state(&self) -> AgentState {
            self.inner.init_state()
        }
        fn advance(
            &self,
            state: &mut AgentState,
            z: &ConfigVector,
            t: u64,
            steps: u64,
            rng: &mut dyn RngCore,
        ) -> Result<f64, BenchmarkError> {
            if rng.random::<f64>() < self.fail_rate {
                return Err(BenchmarkError::BadParam("injected failure".into()));
            }
            self.inner.advance(state, z, t, steps, rng)
        }
        fn ground_truth(&self, z: &ConfigVector, t: u64) -> Result<Option<f64>, BenchmarkError> {
            self.inner.ground_truth(z, t)
        }
    }

    #[test]
    fn truncation_replaces_exactly_one_of_eight_at_default_q() {
        let mut rng = seeded(0);
        let returns = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8, 0.4];
        for _ in 0..200 {
            let pairs = exploit_assignments(&returns, 12.5, &mut rng);
            assert_eq!(pairs, vec![(2, 1)], "worst copies the single best");
        }
    }

    #[test]
    fn truncation_at_quarter_strength_moves_two() {
        let mut rng = seeded(1);
        let returns = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8, 0.4];
        for _ in 0..200 {
            let pairs = exploit_assignments(&returns, 25.0, &mut rng);
            assert_eq!(pairs.len(), 2);
            let losers: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            assert_eq!(losers, vec![5, 2], "bottom two in rank order");
            for &(_, w) in &pairs {
                assert!(w == 1 || w == 6, "winners come from the top two");
            }
        }
    }

    #[test]
    fn truncation_ties_break_by_slot_and_failures_rank_last() {
        let mut rng = seeded(2);
        let equal = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(exploit_assignments(&equal, 25.0, &mut rng), vec![(3, 0)]);
        let with_nan = [-1e300, f64::NAN, 5.0];
        assert_eq!(
            exploit_assignments(&with_nan, 12.5, &mut rng),
            vec![(1, 2)]
        );
        assert!(exploit_assignments(&[1.0], 50.0, &mut rng).is_empty());
    }

    #[test]
    fn exploit_never_copies_upward() {
        let mut rng = seeded(3);
        for _ in 0..100 {
            let returns: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let order = descending_order(&returns);
            let rank_of = |slot: usize| order.iter().position(|&s| s == slot).unwrap();
            for (loser, winner) in exploit_assignments(&returns, 25.0, &mut rng) {
                assert!(rank_of(loser) >= 6);
                assert!(rank_of(winner) < 2);
            }
        }
    }

    #[test]
    fn t_ready_anneal_follows_the_line() {
        let c = TReadySchedule::constant(5.0);
        assert_eq!(c.t_ready_at(0), 5);
        assert_eq!(c.t_ready_at(1_000), 5);

        let a = TReadySchedule::anneal(5.0, 1.0, 100);
        assert_eq!(a.t_ready_at(0), 5);
        assert_eq!(a.t_ready_at(50), 3);
        assert_eq!(a.t_ready_at(100), 1);
        assert_eq!(a.t_ready_at(10_000), 1, "clamps past the horizon");
        // rounding to whole units, never below one
        assert_eq!(a.t_ready_at(37), 4);
        assert_eq!(TReadySchedule::anneal(1.0, 0.2, 10).t_ready_at(10), 1);

        assert!(TReadySchedule::anneal(1.0, 5.0, 10).validate().is_err());
        assert!(TReadySchedule::constant(0.0).validate().is_err());
        assert!(TReadySchedule::anneal(5.0, 1.0, 0).validate().is_err());
    }

    fn fast_config() -> SchedulerConfig {
        SchedulerConfig {
            population: 4,
            init_pool: 8,
            q_percent: 25.0,
            t_max_units: 20,
            max_gp_points: 32,
            fit_starts: 2,
            fit_iters: 25,
            refit_starts: 1,
            refit_iters: 10,
            ..SchedulerConfig::default()
        }
    }

    #[test]
    fn population_size_holds_through_a_thousand_noisy_ticks() {
        let objective = Flaky {
            inner: SyntheticObjective::stationary_mixed(0.5, 7).unwrap(),
            fail_rate: 0.1,
        };
        let config = SchedulerConfig {
            t_max_units: 1000,
            ..SchedulerConfig::default()
        }
        .random_explore();
        let mut rng = seeded(11);
        let out = run(&config, &objective, &mut rng).unwrap();
        assert_eq!(out.summary.n_ticks, 1000);
        let mut per_tick: BTreeMap<u64, usize> = BTreeMap::new();
        for row in out.record.rows() {
            *per_tick.entry(row.tick).or_default() += 1;
        }
        assert_eq!(per_tick[&0], config.init_pool);
        for t in 1..=1000u64 {
            assert_eq!(per_tick[&t], config.population, "tick {t}");
        }
        assert!(out
            .summary
            .best_so_far
            .windows(2)
            .all(|w| w[1] >= w[0] || w[0].is_infinite()));
    }

    #[test]
    fn identical_seeds_reproduce_the_run_bit_for_bit() {
        let objective = SyntheticObjective::drifting_quadratic(2, 0.05, 0.05, 3).unwrap();
        let config = fast_config();
        let run_once = || {
            let mut rng = seeded(42);
            run(&config, &objective, &mut rng).unwrap()
        };
        let a = run_once();
        let b = run_once();
        assert_eq!(a.record.rows(), b.record.rows());
        assert_eq!(
            a.summary.best_return.to_bits(),
            b.summary.best_return.to_bits()
        );
        assert_eq!(a.summary.n_restarts, b.summary.n_restarts);
        assert_eq!(a.summary.total_steps, b.summary.total_steps);
    }

    #[test]
    fn bookkeeping_counts_init_and_tick_blocks_exactly() {
        let objective = SyntheticObjective::stationary_mixed(0.1, 0).unwrap();
        let config = SchedulerConfig {
            population: 2,
            init_pool: 4,
            t_max_units: 2,
            fit_starts: 2,
            fit_iters: 10,
            refit_starts: 1,
            refit_iters: 5,
            ..SchedulerConfig::default()
        };
        let mut rng = seeded(5);
        let out = run(&config, &objective, &mut rng).unwrap();
        assert_eq!(out.summary.n_ticks, 2);
        let rows = out.record.rows();
        assert_eq!(rows.len(), 4 + 2 * 2);
        assert!(rows[..4].iter().all(|r| r.event == EventTag::Init));
        assert_eq!(out.summary.steps_warmup, 4);
        assert_eq!(out.summary.steps_ticks, 4);
        assert_eq!(out.summary.steps_distill, 0);
        assert_eq!(out.summary.total_steps, 8);
        assert_eq!(out.summary.best_so_far.len(), 3);
    }

    #[test]
    fn warm_start_keeps_the_highest_scoring_pool_members() {
        let objective = SyntheticObjective::stationary_mixed(0.0, 9).unwrap();
        let config = SchedulerConfig {
            t_max_units: 1,
            ..fast_config()
        };
        let mut rng = seeded(17);
        let out = run(&config, &objective, &mut rng).unwrap();
        let rows = out.record.rows();
        let init: Vec<&ScheduleRow> = rows.iter().filter(|r| r.tick == 0).collect();
        let mut by_return: Vec<(f64, usize)> =
            init.iter().map(|r| (r.ret, r.agent_id)).collect();
        by_return.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let expected: BTreeSet<usize> =
            by_return[..config.population].iter().map(|p| p.1).collect();
        let survivors: BTreeSet<usize> = rows
            .iter()
            .filter(|r| r.tick == 1)
            .map(|r| r.agent_id)
            .collect();
        assert_eq!(survivors, expected);
    }

    #[test]
    fn all_failures_still_complete_with_an_empty_best() {
        let objective = Flaky {
            inner: SyntheticObjective::stationary_mixed(0.1, 2).unwrap(),
            fail_rate: 1.0,
        };
        let config = SchedulerConfig {
            t_max_units: 5,
            ..fast_config()
        };
        let mut rng = seeded(23);
        let out = run(&config, &objective, &mut rng).unwrap();
        assert!(out.summary.best_return.is_nan());
        assert!(out.summary.best_config.is_empty());
        assert!(out.record.rows().iter().all(|r| r.ret.is_nan()));
    }

    #[test]
    fn shrinking_region_restarts_and_tags_the_tick() {
        let objective = SyntheticObjective::drifting_quadratic(2, 0.05, 0.02, 1).unwrap();
        let config = SchedulerConfig {
            t_max_units: 40,
            trust_region: TrustRegionConfig {
                fail_tol: 1,
                ..TrustRegionConfig::default()
            },
            ..fast_config()
        };
        let mut rng = seeded(31);
        let out = run(&config, &objective, &mut rng).unwrap();
        assert!(out.summary.n_restarts >= 1, "no restart in 40 ticks");
        assert!(out
            .record
            .rows()
            .iter()
            .any(|r| r.event == EventTag::Restart));
    }

    #[test]
    fn record_serializes_to_jsonl_and_csv() {
        let objective = SyntheticObjective::stationary_mixed(0.1, 4).unwrap();
        let config = SchedulerConfig {
            t_max_units: 3,
            ..fast_config()
        };
        let mut rng = seeded(37);
        let out = run(&config, &objective, &mut rng).unwrap();

        let mut jsonl = Vec::new();
        out.record.write_jsonl(&mut jsonl).unwrap();
        let text = String::from_utf8(jsonl).unwrap();
        assert_eq!(text.lines().count(), out.record.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["tick"].is_u64());
            assert!(v["config"].is_object());
        }

        let mut csv_buf = Vec::new();
        out.record.write_csv(&mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("tick,agent_id,return,generation,event"));
        let space = objective.space();
        for dim in space.dimensions() {
            assert!(header.contains(dim.name()));
        }
        assert_eq!(text.lines().count(), out.record.len() + 1);
    }

    #[test]
    fn summary_serializes_even_with_nan_best() {
        let summary = RunSummary {
            best_return: f64::NAN,
            best_tick: 0,
            best_agent_id: 0,
            best_config: BTreeMap::new(),
            n_ticks: 0,
            n_restarts: 0,
            n_generations: 0,
            best_so_far: vec![f64::NEG_INFINITY],
            steps_warmup: 0,
            steps_ticks: 0,
            steps_distill: 0,
            total_steps: 0,
        };
        let text = serde_json::to_string(&summary).unwrap();
        assert!(text.contains("\"best_return\":null"));
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let ok = SchedulerConfig::default();
        assert!(ok.validate().is_ok());
        let bad = SchedulerConfig {
            population: 0,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig {
            init_pool: 4,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig {
            q_percent: 75.0,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig {
            beta_delta: 1.5,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig {
            n_candidates: 4,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig {
            n_candidates: 4,
            enable_nas: false,
            ..ok
        };
        assert!(bad.validate().is_ok(), "plan checked only when used");
    }

    #[test]
    fn nas_off_pins_architecture_dims_to_their_defaults() {
        let objective = AgentSimObjective::new(SimParams::default());
        let space = objective.space();
        let defaults = space.default_config().unwrap();
        let config = SchedulerConfig {
            t_max_units: 5,
            enable_nas: false,
            ..fast_config()
        };
        let mut rng = seeded(9);
        let out = run(&config, &objective, &mut rng).unwrap();
        let n_rows = out.record.rows().len();
        assert_eq!(n_rows, config.init_pool + 5 * config.population);
        for row in out.record.rows() {
            assert_eq!(
                row.config.arch_key(),
                defaults.arch_key(),
                "tick {}",
                row.tick
            );
        }
    }

    #[test]
    fn distillation_debits_the_shared_unit_clock() {
        let objective = AgentSimObjective::new(SimParams::default());
        let config = SchedulerConfig {
            population: 4,
            init_pool: 8,
            q_percent: 25.0,
            t_max_units: 30,
            generation_units: 5,
            n_candidates: 8,
            n_bo: 2,
            distill: DistillationSchedule {
                horizon: 8,
                ..DistillationSchedule::default()
            },
            max_gp_points: 32,
            fit_starts: 2,
            fit_iters: 25,
            refit_starts: 1,
            refit_iters: 10,
            ..SchedulerConfig::default()
        };
        // Halving plan: 8 then 4 live candidates, 4 units each, so one
        // generation consumes 8*4 + 4*4 = 48 steps = ceil(48/4) = 12 units.
        let mut rng = seeded(21);
        let out = run(&config, &objective, &mut rng).unwrap();
        assert_eq!(out.summary.n_generations, 2);
        assert_eq!(
            out.summary.n_ticks, 10,
            "two 12-unit debits shorten a 30-unit run to 10 ticks"
        );
        assert_eq!(out.summary.steps_warmup, 8);
        assert_eq!(out.summary.steps_ticks, 40);
        assert_eq!(out.summary.steps_distill, 96);
        assert_eq!(out.summary.total_steps, 8 + 40 + 96);
    }
}
