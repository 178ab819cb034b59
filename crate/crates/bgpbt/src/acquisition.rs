//! UCB acquisition and its maximization over mixed spaces.
//!
//! Maximization alternates a finite-difference gradient step with
//! backtracking line search on the continuous block and a local-search step
//! on one randomly chosen ordinal or categorical dimension per round, all
//! confined to the trust region. Batch suggestion conditions sequentially on
//! posterior-mean fantasy observations.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::gp::{Dataset, GpModel};
use crate::space::{ConfigVector, SearchSpace, TimestampedObservation, XSlotKind};
use crate::trust_region::TrustRegionState;

#[derive(Debug, Clone)]
pub struct AcquisitionOptions {
    /// Total maximization starts (the trust-region center is always the
    /// first).
    pub n_starts: usize,
    /// Alternation rounds per start.
    pub max_rounds: usize,
    /// Finite-difference step in normalized coordinates.
    pub fd_step: f64,
    /// Stop when a full round improves the acquisition by less than this.
    pub tol: f64,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        AcquisitionOptions {
            n_starts: 4,
            max_rounds: 64,
            fd_step: 1e-4,
            tol: 1e-8,
        }
    }
}

/// Everything a maximization run needs: the surrogate, the query timestep,
/// the exploration weight, the trust region and the held-fixed architecture
/// block.
pub struct AcquisitionContext<'a> {
    pub model: &'a GpModel,
    pub space: &'a Arc<SearchSpace>,
    pub t: u64,
    pub beta: f64,
    pub tr: Option<&'a TrustRegionState>,
    /// When set, every emitted config copies this config's architecture
    /// dimensions, and those dimensions are exempt from search and from the
    /// trust-region membership test.
    pub fixed_arch: Option<&'a ConfigVector>,
    pub opts: AcquisitionOptions,
}

impl<'a> AcquisitionContext<'a> {
    /// `μ + √β·σ` at `(z, t)`.
    pub fn ucb(&self, z: &ConfigVector) -> f64 {
        ucb_value(self.model, z, self.t, self.beta)
    }

    fn masks(&self) -> (Vec<bool>, Vec<bool>) {
        if self.fixed_arch.is_some() {
            (self.space.x_arch_mask(), self.space.h_arch_mask())
        } else {
            (vec![false; self.space.n_x()], vec![false; self.space.n_h()])
        }
    }

    /// Per-x-slot search interval, intersecting the trust-region box with
    /// the unit interval. Masked slots collapse to the fixed value.
    fn boxes(&self, anchor: &ConfigVector, skip_x: &[bool]) -> Vec<(f64, f64)> {
        let n_x = self.space.n_x();
        let mut out = Vec::with_capacity(n_x);
        let radii = self.tr.map(|tr| {
            tr.x_radii(&self.model.params().lengthscales)
                .expect("lengthscales sized to space")
        });
        for slot in 0..n_x {
            if skip_x[slot] {
                let v = anchor.x()[slot];
                out.push((v, v));
                continue;
            }
            match (&radii, self.tr) {
                (Some(r), Some(tr)) => {
                    // shrink marginally so projected points stay strictly
                    // inside the open box used by the membership test
                    let r_eff = (r[slot] * (1.0 - 1e-9)).max(0.0);
                    let c = tr.center().x()[slot];
                    out.push(((c - r_eff).max(0.0), (c + r_eff).min(1.0)));
                }
                _ => out.push((0.0, 1.0)),
            }
        }
        out
    }

    fn in_region(&self, z: &ConfigVector, skip_x: &[bool], skip_h: &[bool]) -> bool {
        match self.tr {
            Some(tr) => tr
                .contains_masked(z, &self.model.params().lengthscales, skip_x, skip_h)
                .unwrap_or(false),
            None => true,
        }
    }
}

pub fn ucb_value(model: &GpModel, z: &ConfigVector, t: u64, beta: f64) -> f64 {
    let (mu, var) = model.posterior(z, t);
    mu + beta.sqrt() * var.sqrt()
}

/// Adjacent ranks reachable from `rank` on an ordinal dimension with `n`
/// levels.
pub(crate) fn ordinal_neighbor_ranks(n: usize, rank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2);
    if rank > 0 {
        out.push(rank - 1);
    }
    if rank + 1 < n {
        out.push(rank + 1);
    }
    out
}

/// Maximize the acquisition from a single start by alternating continuous
/// gradient steps with single-dimension discrete moves. The returned config
/// never leaves the trust region and never scores below the start.
pub fn interleaved_maximize<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    start: &ConfigVector,
    rng: &mut R,
) -> ConfigVector {
    interleaved_maximize_traced(ctx, start, rng).0
}

pub(crate) fn interleaved_maximize_traced<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    start: &ConfigVector,
    rng: &mut R,
) -> (ConfigVector, Vec<f64>) {
    let (skip_x, skip_h) = ctx.masks();
    let mut cur = start.clone();
    if let Some(src) = ctx.fixed_arch {
        cur.copy_arch_from(src);
    }
    let boxes = ctx.boxes(&cur, &skip_x);
    let mut best = ctx.ucb(&cur);
    let mut trace = vec![best];

    // continuous slots eligible for gradient steps
    let cont_slots: Vec<usize> = (0..ctx.space.n_x())
        .filter(|&s| {
            !skip_x[s]
                && matches!(ctx.space.x_slot_kind(s), XSlotKind::Continuous)
                && boxes[s].1 > boxes[s].0
        })
        .collect();
    // discrete dimensions eligible for local search
    let ord_slots: Vec<usize> = (0..ctx.space.n_x())
        .filter(|&s| {
            !skip_x[s] && matches!(ctx.space.x_slot_kind(s), XSlotKind::Ordinal(_))
        })
        .collect();
    let cat_slots: Vec<usize> = (0..ctx.space.n_h()).filter(|&s| !skip_h[s]).collect();
    let n_discrete = ord_slots.len() + cat_slots.len();

    for _ in 0..ctx.opts.max_rounds {
        let round_start = best;

        if !cont_slots.is_empty() {
            continuous_step(ctx, &mut cur, &mut best, &boxes, &cont_slots);
        }

        if n_discrete > 0 {
            let pick = rng.random_range(0..n_discrete);
            if pick < ord_slots.len() {
                ordinal_step(ctx, &mut cur, &mut best, &boxes, ord_slots[pick]);
            } else {
                categorical_step(
                    ctx,
                    &mut cur,
                    &mut best,
                    cat_slots[pick - ord_slots.len()],
                    &skip_x,
                    &skip_h,
                );
            }
        }

        trace.push(best);
        if best - round_start < ctx.opts.tol {
            break;
        }
    }
    (cur, trace)
}

fn continuous_step(
    ctx: &AcquisitionContext<'_>,
    cur: &mut ConfigVector,
    best: &mut f64,
    boxes: &[(f64, f64)],
    cont_slots: &[usize],
) {
    let h = ctx.opts.fd_step;
    let mut grad = vec![0.0; cont_slots.len()];
    let mut any = false;
    for (gi, &slot) in cont_slots.iter().enumerate() {
        let (lo, hi) = boxes[slot];
        let x = cur.x()[slot];
        let xp = (x + h).min(hi);
        let xm = (x - h).max(lo);
        if xp - xm < f64::EPSILON {
            continue;
        }
        let mut zp = cur.clone();
        zp.set_x(slot, xp);
        let mut zm = cur.clone();
        zm.set_x(slot, xm);
        grad[gi] = (ctx.ucb(&zp) - ctx.ucb(&zm)) / (xp - xm);
        if grad[gi] != 0.0 {
            any = true;
        }
    }
    if !any {
        return;
    }
    let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    // initial step scales the largest gradient component to the widest
    // admissible half-width
    let span = cont_slots
        .iter()
        .map(|&s| (boxes[s].1 - boxes[s].0) * 0.5)
        .fold(0.0f64, f64::max);
    let mut alpha = span / gmax;
    for _ in 0..10 {
        let mut cand = cur.clone();
        for (gi, &slot) in cont_slots.iter().enumerate() {
            let (lo, hi) = boxes[slot];
            cand.set_x(slot, (cur.x()[slot] + alpha * grad[gi]).clamp(lo, hi));
        }
        let v = ctx.ucb(&cand);
        if v > *best {
            *cur = cand;
            *best = v;
            return;
        }
        alpha *= 0.5;
    }
}

fn ordinal_step(
    ctx: &AcquisitionContext<'_>,
    cur: &mut ConfigVector,
    best: &mut f64,
    boxes: &[(f64, f64)],
    slot: usize,
) {
    let XSlotKind::Ordinal(n) = ctx.space.x_slot_kind(slot) else {
        return;
    };
    let rank = cur.ordinal_rank(slot);
    let (lo, hi) = boxes[slot];
    let mut improved: Option<(f64, usize)> = None;
    for r in ordinal_neighbor_ranks(n, rank) {
        let coord = r as f64 / (n - 1) as f64;
        if coord < lo || coord > hi {
            continue;
        }
        let mut cand = cur.clone();
        cand.set_x(slot, coord);
        let v = ctx.ucb(&cand);
        if v > *best && improved.as_ref().is_none_or(|(b, _)| v > *b) {
            improved = Some((v, r));
        }
    }
    if let Some((v, r)) = improved {
        cur.set_x(slot, r as f64 / (n - 1) as f64);
        *best = v;
    }
}

fn categorical_step(
    ctx: &AcquisitionContext<'_>,
    cur: &mut ConfigVector,
    best: &mut f64,
    slot: usize,
    skip_x: &[bool],
    skip_h: &[bool],
) {
    let cardinality = ctx.space.h_cardinality(slot);
    let current = cur.h()[slot];
    let mut improved: Option<(f64, usize)> = None;
    for idx in 0..cardinality {
        if idx == current {
            continue;
        }
        let mut cand = cur.clone();
        cand.set_h(slot, idx);
        if !ctx.in_region(&cand, skip_x, skip_h) {
            continue;
        }
        let v = ctx.ucb(&cand);
        if v > *best && improved.as_ref().is_none_or(|(b, _)| v > *b) {
            improved = Some((v, idx));
        }
    }
    if let Some((v, idx)) = improved {
        cur.set_h(slot, idx);
        *best = v;
    }
}

/// A uniformly random config inside the trust region (or the whole space
/// without one), with masked dimensions pinned to the anchor's values.
pub(crate) fn random_interior<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    anchor: &ConfigVector,
    skip_x: &[bool],
    skip_h: &[bool],
    rng: &mut R,
) -> ConfigVector {
    let boxes = ctx.boxes(anchor, skip_x);
    let mut out = anchor.clone();
    for slot in 0..ctx.space.n_x() {
        if skip_x[slot] {
            continue;
        }
        let (lo, hi) = boxes[slot];
        match ctx.space.x_slot_kind(slot) {
            XSlotKind::Continuous => {
                let v = if hi > lo { rng.random_range(lo..hi) } else { lo };
                out.set_x(slot, v);
            }
            XSlotKind::Ordinal(n) => {
                let admissible: Vec<usize> = (0..n)
                    .filter(|&r| {
                        let c = r as f64 / (n - 1) as f64;
                        c >= lo && c <= hi
                    })
                    .collect();
                if admissible.is_empty() {
                    continue;
                }
                let r = admissible[rng.random_range(0..admissible.len())];
                out.set_x(slot, r as f64 / (n - 1) as f64);
            }
        }
    }
    let free_h: Vec<usize> = (0..ctx.space.n_h()).filter(|&s| !skip_h[s]).collect();
    if !free_h.is_empty() {
        let l_h = ctx.tr.map_or(1.0, |tr| tr.l_h());
        let max_flips = ((l_h * free_h.len() as f64).floor() as usize).min(free_h.len());
        let flips = if max_flips > 0 {
            rng.random_range(0..=max_flips)
        } else {
            0
        };
        let mut slots = free_h.clone();
        for k in 0..flips {
            let j = rng.random_range(k..slots.len());
            slots.swap(k, j);
            let slot = slots[k];
            let cardinality = ctx.space.h_cardinality(slot);
            let cur_val = out.h()[slot];
            let alt = rng.random_range(0..cardinality - 1);
            out.set_h(slot, if alt >= cur_val { alt + 1 } else { alt });
        }
    }
    out
}

/// Best of `n_starts` maximization runs; the first start is the trust-region
/// center (or a random config without a trust region), the rest are random
/// interior points.
pub fn suggest<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    n_starts: usize,
    rng: &mut R,
) -> ConfigVector {
    let anchor = match (ctx.tr, ctx.fixed_arch) {
        (Some(tr), _) => tr.center().clone(),
        (None, _) => ctx.space.random_config(rng),
    };
    run_starts(ctx, anchor, Vec::new(), n_starts, rng)
}

/// `suggest` with additional caller-provided starts (used for restart-center
/// selection, where archive entries seed the search).
pub fn maximize_ucb<R: Rng + ?Sized>(
    model: &GpModel,
    space: &Arc<SearchSpace>,
    t: u64,
    beta: f64,
    tr: Option<&TrustRegionState>,
    fixed_arch: Option<&ConfigVector>,
    extra_starts: Option<Vec<ConfigVector>>,
    opts: &AcquisitionOptions,
    rng: &mut R,
) -> ConfigVector {
    let ctx = AcquisitionContext {
        model,
        space,
        t,
        beta,
        tr,
        fixed_arch,
        opts: opts.clone(),
    };
    let anchor = match tr {
        Some(tr) => tr.center().clone(),
        None => space.random_config(rng),
    };
    run_starts(&ctx, anchor, extra_starts.unwrap_or_default(), opts.n_starts, rng)
}

fn run_starts<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    anchor: ConfigVector,
    extra: Vec<ConfigVector>,
    n_starts: usize,
    rng: &mut R,
) -> ConfigVector {
    let (skip_x, skip_h) = ctx.masks();
    // generate every start (and one sub-seed per start) before running, so a
    // longer start list extends a shorter one drawn from the same rng state
    let mut starts: Vec<(ConfigVector, u64)> = Vec::new();
    starts.push((anchor.clone(), rng.random()));
    for s in extra {
        starts.push((s, rng.random()));
    }
    while starts.len() < n_starts.max(1) {
        let s = random_interior(ctx, &anchor, &skip_x, &skip_h, rng);
        starts.push((s, rng.random()));
    }
    let mut best: Option<(f64, ConfigVector)> = None;
    for (start, seed) in starts {
        let mut sub = ChaCha8Rng::seed_from_u64(seed);
        let found = interleaved_maximize(ctx, &start, &mut sub);
        let v = ctx.ucb(&found);
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, found));
        }
    }
    best.expect("at least one start").1
}

/// Sequentially suggest `m` configs, augmenting the surrogate with a
/// posterior-mean fantasy observation after each choice. Suggestions are
/// pairwise distinct.
pub fn suggest_batch<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    m: usize,
    n_starts: usize,
    rng: &mut R,
) -> Vec<ConfigVector> {
    suggest_batch_traced(ctx, m, n_starts, rng).0
}

/// Batch suggestion exposing the fantasy values used for conditioning.
pub(crate) fn suggest_batch_traced<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    m: usize,
    n_starts: usize,
    rng: &mut R,
) -> (Vec<ConfigVector>, Vec<f64>) {
    let mut chosen: Vec<ConfigVector> = Vec::with_capacity(m);
    let mut fantasies = Vec::with_capacity(m);
    let mut ds = Dataset::new();
    for o in ctx.model.observations() {
        ds.push(o.clone());
    }
    let mut model = ctx.model.clone();
    for _ in 0..m {
        let sub_ctx = AcquisitionContext {
            model: &model,
            space: ctx.space,
            t: ctx.t,
            beta: ctx.beta,
            tr: ctx.tr,
            fixed_arch: ctx.fixed_arch,
            opts: ctx.opts.clone(),
        };
        let mut pick = suggest(&sub_ctx, n_starts, rng);
        if chosen.contains(&pick) {
            let (skip_x, skip_h) = ctx.masks();
            let anchor = ctx
                .tr
                .map(|tr| tr.center().clone())
                .unwrap_or_else(|| pick.clone());
            for _ in 0..100 {
                let alt = random_interior(&sub_ctx, &anchor, &skip_x, &skip_h, rng);
                if !chosen.contains(&alt) {
                    pick = alt;
                    break;
                }
            }
        }
        let (fantasy, _) = model.posterior(&pick, ctx.t);
        fantasies.push(fantasy);
        ds.push(TimestampedObservation {
            config: pick.clone(),
            timestep: ctx.t,
            value: fantasy,
        });
        chosen.push(pick);
        model = GpModel::with_params(&ds, model.params().clone())
            .unwrap_or_else(|_| model.clone());
    }
    (chosen, fantasies)
}
