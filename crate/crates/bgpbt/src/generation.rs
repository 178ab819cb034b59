//! Generational architecture search: candidate architectures proposed by a
//! stationary surrogate over the architecture block plus random sampling,
//! trimmed to the population size by successive halving, with knowledge
//! transfer from the incumbent teacher modeled as a budget-dependent
//! efficiency factor on the agent's performance state.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::acquisition::{self, AcquisitionContext, AcquisitionOptions};
use crate::benchmark::{AgentState, Objective};
use crate::gp::{self, Dataset, FitBounds, FitOptions};
use crate::scheduler::ScheduleRecord;
use crate::space::{
    ConfigVector, SearchSpace, SpaceError, TimestampedObservation, XSlotKind,
};

/// Errors from generation planning and execution.
#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("objective space has no architecture dimensions")]
    NoArchDims,
    #[error("invalid generation plan: {0}")]
    BadPlan(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Weights of the joint transfer loss and the step budget over which the
/// supervised terms anneal to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillationSchedule {
    /// Task-loss weight, constant through the phase.
    pub alpha_rl: f64,
    /// Initial value-matching weight.
    pub alpha_v: f64,
    /// Initial policy-matching weight.
    pub alpha_pi: f64,
    /// Step budget of the transfer phase; the supervised weights reach zero
    /// exactly at this point.
    pub horizon: u64,
}

impl Default for DistillationSchedule {
    fn default() -> Self {
        DistillationSchedule {
            alpha_rl: 1.0,
            alpha_v: 0.0,
            alpha_pi: 5.0,
            horizon: 30,
        }
    }
}

/// Loss weights after `progress` of the transfer phase: the task weight is
/// constant and the supervised weights scale by `1 - progress`. `progress`
/// is clamped to `[0, 1]`.
pub fn anneal_weights(schedule: &DistillationSchedule, progress: f64) -> (f64, f64, f64) {
    let p = progress.clamp(0.0, 1.0);
    (
        schedule.alpha_rl,
        schedule.alpha_v * (1.0 - p),
        schedule.alpha_pi * (1.0 - p),
    )
}

/// The halving layout for one generation: live candidate counts per rung and
/// the per-candidate step budget applied at each rung.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationPlan {
    /// Candidates entering the first rung.
    pub n_candidates: usize,
    /// How many of the candidates come from surrogate suggestions (the rest
    /// are sampled uniformly).
    pub n_bo: usize,
    /// Candidates left after the final rung.
    pub n_survivors: usize,
    /// Live counts entering each rung; starts at `n_candidates`, ends at
    /// `n_survivors`.
    pub live: Vec<usize>,
    /// Per-candidate budget applied at each rung.
    pub budgets: Vec<u64>,
}

impl GenerationPlan {
    /// Lay out rungs that halve the field (never cutting below
    /// `n_survivors`) and split `distill_budget` evenly across rungs, any
    /// remainder going to the last rungs.
    pub fn new(
        n_candidates: usize,
        n_bo: usize,
        n_survivors: usize,
        distill_budget: u64,
    ) -> Result<Self, GenerationError> {
        if n_survivors == 0 {
            return Err(GenerationError::BadPlan(
                "survivor count must be positive".into(),
            ));
        }
        if n_candidates < n_survivors {
            return Err(GenerationError::BadPlan(format!(
                "{n_candidates} candidates cannot yield {n_survivors} survivors"
            )));
        }
        if n_bo > n_candidates {
            return Err(GenerationError::BadPlan(format!(
                "{n_bo} surrogate suggestions exceed {n_candidates} candidates"
            )));
        }
        let mut live = vec![n_candidates];
        let mut cur = n_candidates;
        while cur > n_survivors {
            let eliminated = cur.div_ceil(2).min(cur - n_survivors);
            cur -= eliminated;
            live.push(cur);
        }
        let stages = live.len() as u64;
        if distill_budget < stages {
            return Err(GenerationError::BadPlan(format!(
                "budget {distill_budget} cannot cover {stages} rungs"
            )));
        }
        let base = distill_budget / stages;
        let remainder = distill_budget % stages;
        let budgets = (0..stages)
            .map(|i| base + u64::from(i >= stages - remainder))
            .collect();
        Ok(GenerationPlan {
            n_candidates,
            n_bo,
            n_survivors,
            live,
            budgets,
        })
    }

    pub fn stages(&self) -> usize {
        self.live.len()
    }

    /// Total objective steps the plan consumes: each rung advances every
    /// live candidate by that rung's budget.
    pub fn total_budget(&self) -> u64 {
        self.live
            .iter()
            .zip(&self.budgets)
            .map(|(&live, &b)| live as u64 * b)
            .sum()
    }
}

/// Indices of `values` sorted by descending value; NaN ranks last and ties
/// keep ascending index order.
pub(crate) fn descending_order(values: &[f64]) -> Vec<usize> {
    let key = |i: usize| {
        if values[i].is_nan() {
            f64::NEG_INFINITY
        } else {
            values[i]
        }
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        key(b)
            .partial_cmp(&key(a))
            .expect("NaN mapped out")
            .then(a.cmp(&b))
    });
    order
}

/// Run the halving schedule: at each rung every live candidate is advanced
/// by the rung budget through `eval` (which returns its current score), then
/// the field is cut to the next rung's live count, best first. Ties keep the
/// earlier candidate; failed evaluations (NaN) rank last. Returns the
/// survivors paired with their final-rung scores, best first.
pub fn successive_halving<C, R, F>(
    candidates: Vec<C>,
    plan: &GenerationPlan,
    mut eval: F,
    rng: &mut R,
) -> Result<Vec<(C, f64)>, GenerationError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut C, u64, &mut R) -> f64,
{
    if candidates.len() != plan.live[0] {
        return Err(GenerationError::BadPlan(format!(
            "{} candidates given to a plan laid out for {}",
            candidates.len(),
            plan.live[0]
        )));
    }
    let mut field: Vec<C> = candidates;
    let mut scores: Vec<f64> = Vec::new();
    for stage in 0..plan.stages() {
        let budget = plan.budgets[stage];
        scores = field
            .iter_mut()
            .map(|c| eval(c, budget, rng))
            .collect();
        let keep = if stage + 1 < plan.stages() {
            plan.live[stage + 1]
        } else {
            plan.n_survivors
        };
        let order = descending_order(&scores);
        let mut slots: Vec<Option<C>> = field.into_iter().map(Some).collect();
        let kept: Vec<(C, f64)> = order
            .iter()
            .take(keep)
            .map(|&i| (slots[i].take().expect("each index taken once"), scores[i]))
            .collect();
        let (f, s): (Vec<C>, Vec<f64>) = kept.into_iter().unzip();
        field = f;
        scores = s;
    }
    Ok(field.into_iter().zip(scores).collect())
}

/// Best observed return per distinct architecture.
#[derive(Debug, Clone)]
pub struct ArchRecord {
    /// The architecture block, as a config in the architecture sub-space.
    pub arch: ConfigVector,
    pub best_return: f64,
}

/// Group one generation's schedule rows by architecture and keep the best
/// finite return each architecture achieved. Returns are attributed to the
/// architecture the agent held at each row.
pub fn collect_arch_records(
    record: &ScheduleRecord,
    generation: u32,
    arch_space: &Arc<SearchSpace>,
) -> Result<Vec<ArchRecord>, GenerationError> {
    let mut best: BTreeMap<crate::space::ArchKey, ArchRecord> = BTreeMap::new();
    for row in record.rows() {
        if row.generation != generation || !row.ret.is_finite() {
            continue;
        }
        let arch = row.config.project(arch_space)?;
        match best.entry(arch.arch_key()) {
            Entry::Vacant(v) => {
                v.insert(ArchRecord {
                    arch,
                    best_return: row.ret,
                });
            }
            Entry::Occupied(mut o) => {
                let r = o.get_mut();
                r.best_return = r.best_return.max(row.ret);
            }
        }
    }
    Ok(best.into_values().collect())
}

/// Similarity of two configs' architecture blocks in `[0, 1]`: per
/// architecture dimension, ordinals score by rank closeness, categoricals by
/// equality, continuous by coordinate closeness; averaged. Spaces without
/// architecture dimensions score 1.
pub fn arch_similarity(a: &ConfigVector, b: &ConfigVector) -> f64 {
    debug_assert!(a.same_space(b), "similarity needs a shared space");
    let space = a.space();
    let mut total = 0.0;
    let mut count = 0usize;
    for (slot, is_arch) in space.x_arch_mask().into_iter().enumerate() {
        if !is_arch {
            continue;
        }
        total += match space.x_slot_kind(slot) {
            XSlotKind::Continuous => 1.0 - (a.x()[slot] - b.x()[slot]).abs(),
            XSlotKind::Ordinal(n) => {
                let da = a.ordinal_rank(slot) as f64;
                let db = b.ordinal_rank(slot) as f64;
                1.0 - (da - db).abs() / (n - 1) as f64
            }
        };
        count += 1;
    }
    for (slot, is_arch) in space.h_arch_mask().into_iter().enumerate() {
        if !is_arch {
            continue;
        }
        total += f64::from(a.h()[slot] == b.h()[slot]);
        count += 1;
    }
    if count == 0 {
        1.0
    } else {
        (total / count as f64).clamp(0.0, 1.0)
    }
}

/// Fraction of the teacher's performance a student inherits after spending
/// `budget` of `horizon` transfer steps: saturating in budget, scaled by
/// architectural similarity, and exactly `similarity` at full budget.
pub fn transfer_efficiency(budget: u64, horizon: u64, similarity: f64) -> f64 {
    let sim = similarity.clamp(0.0, 1.0);
    if horizon == 0 {
        return sim;
    }
    let frac = budget.min(horizon) as f64 / horizon as f64;
    sim * (1.0 - (-2.0 * frac).exp()) / (1.0 - (-2.0f64).exp())
}

/// Build the student's performance state after `budget` transfer steps from
/// the teacher: the cold-start state lifted to the transferred fraction of
/// the teacher's performance. Stateless objectives pass through unchanged.
pub fn distill_transfer(
    teacher_state: &AgentState,
    teacher_config: &ConfigVector,
    student_config: &ConfigVector,
    objective: &dyn Objective,
    budget: u64,
    schedule: &DistillationSchedule,
) -> AgentState {
    let cold = objective.init_state();
    let Some(teacher_p) = teacher_state.performance() else {
        return cold;
    };
    match cold {
        AgentState::Stateless => AgentState::Stateless,
        AgentState::Sim {
            performance: p0, ..
        } => {
            let sim = arch_similarity(teacher_config, student_config);
            let eff = transfer_efficiency(budget, schedule.horizon, sim);
            AgentState::sim(p0.max(teacher_p * eff))
        }
    }
}

/// Propose `n_bo + n_random` architectures: surrogate-guided suggestions
/// from a stationary model fitted on past per-architecture best returns,
/// topped up with uniform samples. With no records (or a failed fit) every
/// slot is sampled uniformly. Duplicates are re-drawn a bounded number of
/// times, then accepted.
pub fn suggest_architectures<R: Rng + ?Sized>(
    records: &[ArchRecord],
    n_bo: usize,
    n_random: usize,
    arch_space: &Arc<SearchSpace>,
    beta: f64,
    acq: &AcquisitionOptions,
    rng: &mut R,
) -> Vec<ConfigVector> {
    let want = n_bo + n_random;
    let mut out: Vec<ConfigVector> = Vec::with_capacity(want);
    let mut seen = BTreeSet::new();

    if !records.is_empty() && n_bo > 0 {
        let mut ds = Dataset::new();
        for r in records {
            ds.push(TimestampedObservation {
                config: r.arch.clone(),
                timestep: 0,
                value: r.best_return,
            });
        }
        let options = FitOptions {
            bounds: FitBounds::stationary(),
            n_starts: 4,
            max_iters: 50,
            warm_start: None,
        };
        if let Ok(model) = gp::fit(&ds, &options, rng) {
            let ctx = AcquisitionContext {
                model: &model,
                space: arch_space,
                t: 0,
                beta,
                tr: None,
                fixed_arch: None,
                opts: acq.clone(),
            };
            for pick in acquisition::suggest_batch(&ctx, n_bo, acq.n_starts, rng) {
                if seen.insert(pick.arch_key()) {
                    out.push(pick);
                }
            }
        }
    }

    let mut retries = 0usize;
    while out.len() < want {
        let cand = arch_space.random_config(rng);
        if seen.insert(cand.arch_key()) || retries >= 50 {
            out.push(cand);
            retries = 0;
        } else {
            retries += 1;
        }
    }
    out
}

/// A survivor of one generation: its full config, its transferred
/// performance state, and its final-rung observed return.
#[derive(Debug)]
pub struct GenerationOutcome {
    /// `(config, state, final return)`, best first.
    pub survivors: Vec<(ConfigVector, AgentState, f64)>,
    /// Objective steps spent across all rungs.
    pub steps_consumed: u64,
    /// Candidates that entered the first rung.
    pub candidates_tried: usize,
}

/// Overwrite `base`'s architecture dimensions with those of `arch` (a config
/// in the architecture sub-space), keeping every other dimension.
fn embed_arch(
    space: &Arc<SearchSpace>,
    base: &ConfigVector,
    arch: &ConfigVector,
) -> Result<ConfigVector, GenerationError> {
    let mut raw = base.decode();
    for (name, value) in arch.decode() {
        raw.insert(name, value);
    }
    Ok(space.encode(&raw)?)
}

/// Execute one generation boundary: propose architectures, seed each
/// candidate with the teacher's hyperparameters, and run successive halving
/// where each rung's budget buys transfer steps toward the teacher's
/// performance. Failed candidate evaluations rank last rather than aborting.
#[allow(clippy::too_many_arguments)]
pub fn run_generation<R: Rng + ?Sized>(
    records: &[ArchRecord],
    teacher_state: &AgentState,
    teacher_config: &ConfigVector,
    objective: &dyn Objective,
    plan: &GenerationPlan,
    schedule: &DistillationSchedule,
    acq: &AcquisitionOptions,
    beta: f64,
    t_now: u64,
    rng: &mut R,
) -> Result<GenerationOutcome, GenerationError> {
    let space = objective.space();
    let arch_space = space.arch_subspace().ok_or(GenerationError::NoArchDims)?;
    let n_random = plan.n_candidates - plan.n_bo;
    let archs = suggest_architectures(records, plan.n_bo, n_random, &arch_space, beta, acq, rng);

    struct Candidate {
        config: ConfigVector,
        state: AgentState,
        consumed: u64,
    }
    let mut candidates = Vec::with_capacity(archs.len());
    for y in archs {
        let config = embed_arch(space, teacher_config, &y)?;
        let state = distill_transfer(teacher_state, teacher_config, &config, objective, 0, schedule);
        candidates.push(Candidate {
            config,
            state,
            consumed: 0,
        });
    }
    let candidates_tried = candidates.len();

    let mut steps_consumed = 0u64;
    let survivors = successive_halving(candidates, plan, |c, budget, r| {
        c.consumed += budget;
        steps_consumed += budget;
        c.state = distill_transfer(
            teacher_state,
            teacher_config,
            &c.config,
            objective,
            c.consumed,
            schedule,
        );
        let mut r = r;
        objective
            .advance(&mut c.state, &c.config, t_now, 0, &mut r)
            .unwrap_or(f64::NAN)
    }, rng)?;

    Ok(GenerationOutcome {
        survivors: survivors
            .into_iter()
            .map(|(c, ret)| (c.config, c.state, ret))
            .collect(),
        steps_consumed,
        candidates_tried,
    })
}
