//! Trust-region state machine: lengthscale-weighted membership, streak-driven
//! resizing, restart detection, and restart-center selection from an archive
//! of past restarts re-scored by the current surrogate.

use rand::Rng;
use thiserror::Error;

use crate::acquisition::{self, AcquisitionOptions};
use crate::gp::{self, Dataset, FitBounds, FitOptions, GpModel};
use crate::space::{ConfigVector, SearchSpace, TimestampedObservation};
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum TrustRegionError {
    #[error("config does not belong to the trust region's space")]
    SpaceMismatch,
    #[error("population returns are empty")]
    EmptyPopulation,
    #[error("quantile q={0} outside (0, 50]")]
    InvalidQuantile(f64),
    #[error("got {0} lengthscales for {1} continuous/ordinal dims")]
    LengthscaleMismatch(usize, usize),
}

/// Resizing constants.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionConfig {
    pub multiplier: f64,
    pub succ_tol: u32,
    pub fail_tol: u32,
    pub l_x_min: f64,
    pub l_h_min: f64,
    pub l_x_init: f64,
    pub l_h_init: f64,
    /// Expansion cap on the continuous radius.
    pub l_x_max: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            multiplier: 1.5,
            succ_tol: 3,
            fail_tol: 10,
            l_x_min: 0.15,
            l_h_min: 0.1,
            l_x_init: 0.4,
            l_h_init: 1.0,
            l_x_max: 1.6,
        }
    }
}

/// The trust region around the incumbent: a lengthscale-weighted box on the
/// continuous/ordinal block and a normalized-Hamming ball on the categorical
/// block.
#[derive(Debug, Clone)]
pub struct TrustRegionState {
    center: ConfigVector,
    l_x: f64,
    l_h: f64,
    success_streak: u32,
    failure_streak: u32,
    config: TrustRegionConfig,
}

impl TrustRegionState {
    pub fn new(center: ConfigVector, config: TrustRegionConfig) -> Self {
        TrustRegionState {
            l_x: config.l_x_init,
            l_h: config.l_h_init,
            success_streak: 0,
            failure_streak: 0,
            center,
            config,
        }
    }

    pub fn center(&self) -> &ConfigVector {
        &self.center
    }

    /// Move the center without touching radii or streaks.
    pub fn set_center(&mut self, center: ConfigVector) {
        self.center = center;
    }

    pub fn l_x(&self) -> f64 {
        self.l_x
    }

    pub fn l_h(&self) -> f64 {
        self.l_h
    }

    pub fn config(&self) -> &TrustRegionConfig {
        &self.config
    }

    pub fn success_streak(&self) -> u32 {
        self.success_streak
    }

    pub fn failure_streak(&self) -> u32 {
        self.failure_streak
    }

    /// Per-dimension box half-widths: `L_x` scaled by each lengthscale
    /// relative to their geometric mean.
    pub fn x_radii(&self, lengthscales: &[f64]) -> Result<Vec<f64>, TrustRegionError> {
        let n_x = self.center.space().n_x();
        if lengthscales.len() != n_x {
            return Err(TrustRegionError::LengthscaleMismatch(
                lengthscales.len(),
                n_x,
            ));
        }
        if n_x == 0 {
            return Ok(Vec::new());
        }
        let log_mean =
            lengthscales.iter().map(|l| l.ln()).sum::<f64>() / n_x as f64;
        let geomean = log_mean.exp();
        Ok(lengthscales
            .iter()
            .map(|l| self.l_x * l / geomean)
            .collect())
    }

    /// Membership test; `skip_x`/`skip_h` mark dimensions exempt from the
    /// test (held-fixed blocks copied verbatim from the center's agent).
    pub fn contains_masked(
        &self,
        z: &ConfigVector,
        lengthscales: &[f64],
        skip_x: &[bool],
        skip_h: &[bool],
    ) -> Result<bool, TrustRegionError> {
        if !z.same_space(&self.center) {
            return Err(TrustRegionError::SpaceMismatch);
        }
        let radii = self.x_radii(lengthscales)?;
        for (slot, radius) in radii.iter().enumerate() {
            if skip_x.get(slot).copied().unwrap_or(false) {
                continue;
            }
            if (z.x()[slot] - self.center.x()[slot]).abs() >= *radius {
                return Ok(false);
            }
        }
        let n_h = self.center.space().n_h();
        if n_h > 0 {
            let mut counted = 0usize;
            let mut mismatches = 0usize;
            for slot in 0..n_h {
                if skip_h.get(slot).copied().unwrap_or(false) {
                    continue;
                }
                counted += 1;
                if z.h()[slot] != self.center.h()[slot] {
                    mismatches += 1;
                }
            }
            if counted > 0 {
                let frac = mismatches as f64 / counted as f64;
                if frac > self.l_h {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn contains(
        &self,
        z: &ConfigVector,
        lengthscales: &[f64],
    ) -> Result<bool, TrustRegionError> {
        self.contains_masked(z, lengthscales, &[], &[])
    }

    /// Record a tick outcome, expanding after `succ_tol` consecutive
    /// successes and shrinking after `fail_tol` consecutive failures.
    pub fn record_result(&mut self, success: bool) {
        if success {
            self.failure_streak = 0;
            self.success_streak += 1;
            if self.success_streak >= self.config.succ_tol {
                self.l_x = (self.l_x * self.config.multiplier).min(self.config.l_x_max);
                self.l_h = (self.l_h * self.config.multiplier).min(1.0);
                self.success_streak = 0;
            }
        } else {
            self.success_streak = 0;
            self.failure_streak += 1;
            if self.failure_streak >= self.config.fail_tol {
                self.l_x /= self.config.multiplier;
                self.l_h /= self.config.multiplier;
                self.failure_streak = 0;
            }
        }
    }

    /// True when either radius has shrunk strictly below its minimum.
    pub fn needs_restart(&self) -> bool {
        self.l_x < self.config.l_x_min || self.l_h < self.config.l_h_min
    }

    /// Reset radii to their initial values and clear streaks, recentering on
    /// the given config.
    pub fn reinit(&mut self, center: ConfigVector) {
        self.center = center;
        self.l_x = self.config.l_x_init;
        self.l_h = self.config.l_h_init;
        self.success_streak = 0;
        self.failure_streak = 0;
    }
}

/// Success test: the return sits in the top q% of the population (at least
/// the ⌈B·q/100⌉-th largest return). Failed evaluations (NaN) rank last.
pub fn is_success(
    agent_return: f64,
    population_returns: &[f64],
    q: f64,
) -> Result<bool, TrustRegionError> {
    if population_returns.is_empty() {
        return Err(TrustRegionError::EmptyPopulation);
    }
    if !(q > 0.0 && q <= 50.0) {
        return Err(TrustRegionError::InvalidQuantile(q));
    }
    if agent_return.is_nan() {
        return Ok(false);
    }
    let mut sorted: Vec<f64> = population_returns
        .iter()
        .map(|r| if r.is_nan() { f64::NEG_INFINITY } else { *r })
        .collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("NaNs mapped out"));
    let k = ((population_returns.len() as f64) * q / 100.0).ceil() as usize;
    let threshold = sorted[k.clamp(1, sorted.len()) - 1];
    Ok(agent_return >= threshold)
}

/// One representative per completed restart, scored by the current posterior
/// mean.
#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    pub config: ConfigVector,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RestartArchive {
    pub entries: Vec<ArchiveEntry>,
}

impl RestartArchive {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Rebuild the archive: for each past restart's evaluated configs, keep the
/// config maximizing the present posterior mean at timestep `t`.
pub fn refresh_archive(
    restart_configs: &[Vec<ConfigVector>],
    surrogate: &GpModel,
    t: u64,
) -> RestartArchive {
    let mut entries = Vec::new();
    for configs in restart_configs {
        let mut best: Option<ArchiveEntry> = None;
        for c in configs {
            let (mu, _) = surrogate.posterior(c, t);
            if best.as_ref().is_none_or(|b| mu > b.score) {
                best = Some(ArchiveEntry {
                    config: c.clone(),
                    score: mu,
                });
            }
        }
        if let Some(e) = best {
            entries.push(e);
        }
    }
    RestartArchive { entries }
}

/// Choose the center for the next restart: the UCB maximizer of an auxiliary
/// stationary GP fitted on the archive, or a uniformly random config when the
/// archive is empty (or the auxiliary fit fails).
pub fn restart_center<R: Rng + ?Sized>(
    archive: &RestartArchive,
    space: &Arc<SearchSpace>,
    beta: f64,
    rng: &mut R,
) -> ConfigVector {
    if archive.is_empty() {
        return space.random_config(rng);
    }
    if archive.len() == 1 {
        return archive.entries[0].config.clone();
    }
    let mut ds = Dataset::new();
    for e in &archive.entries {
        ds.push(TimestampedObservation {
            config: e.config.clone(),
            timestep: 0,
            value: e.score,
        });
    }
    let opts = FitOptions {
        bounds: FitBounds::stationary(),
        n_starts: 4,
        max_iters: 50,
        warm_start: None,
    };
    let Ok(model) = gp::fit(&ds, &opts, rng) else {
        return space.random_config(rng);
    };
    let acq_opts = AcquisitionOptions::default();
    let mut starts: Vec<ConfigVector> =
        archive.entries.iter().map(|e| e.config.clone()).collect();
    starts.truncate(acq_opts.n_starts);
    acquisition::maximize_ucb(&model, space, 0, beta, None, None, Some(starts), &acq_opts, rng)
}
