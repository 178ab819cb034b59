//! Synthetic time-varying objectives and a stateful training simulator.
//!
//! Three closed-form families exercise the optimizer's distinct mechanisms:
//! `drifting-quadratic` moves a continuous optimum along a circle at an
//! exact per-tick speed, `categorical-gated-drift` gates both the offset and
//! the drift phase on a categorical choice, and `stationary-mixed` is a
//! fixed mixed-space landscape. The agent simulator adds path-dependent
//! state whose optimal learning rate falls (and optimal batch size rises) as
//! performance improves, so schedule-adaptive methods beat static ones by
//! construction. Small instances admit brute-force oracles.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::space::{ConfigVector, DimensionSpec, Scale, SearchSpace};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("config belongs to a different space than the objective")]
    SpaceMismatch,
    #[error("grid of {0} points exceeds the enumeration limit of 1000000")]
    OversizedGrid(u64),
    #[error("objective has no noiseless ground truth to enumerate")]
    NoOracle,
    #[error("objective space is missing required dimension `{0}`")]
    MissingDimension(String),
    #[error("invalid benchmark parameter: {0}")]
    BadParam(String),
}

/// Per-agent training state. Synthetic objectives are stateless; the
/// simulator carries a scalar performance and a step counter.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentState {
    Stateless,
    Sim { performance: f64, steps: u64 },
}

impl AgentState {
    pub fn sim(performance: f64) -> Self {
        AgentState::Sim {
            performance,
            steps: 0,
        }
    }

    /// Scalar performance, when the state carries one.
    pub fn performance(&self) -> Option<f64> {
        match self {
            AgentState::Stateless => None,
            AgentState::Sim { performance, .. } => Some(*performance),
        }
    }
}

/// A trainable objective: everything the population scheduler needs to step
/// an agent and (when one exists) to score configurations against a
/// noiseless ground truth.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn space(&self) -> &Arc<SearchSpace>;
    fn init_state(&self) -> AgentState;
    /// Advance the agent by `steps` training units under config `z`, ending
    /// at synchronization tick `t`; returns the observed (noisy) return.
    fn advance(
        &self,
        state: &mut AgentState,
        z: &ConfigVector,
        t: u64,
        steps: u64,
        rng: &mut dyn RngCore,
    ) -> Result<f64, BenchmarkError>;
    /// Noiseless objective value at `(z, t)`, or `None` when the objective
    /// is path-dependent and has no per-config truth.
    fn ground_truth(&self, z: &ConfigVector, t: u64) -> Result<Option<f64>, BenchmarkError>;
}

fn check_space(space: &Arc<SearchSpace>, z: &ConfigVector) -> Result<(), BenchmarkError> {
    if Arc::ptr_eq(space, z.space()) || space.dimensions() == z.space().dimensions() {
        Ok(())
    } else {
        Err(BenchmarkError::SpaceMismatch)
    }
}

fn noise(sigma: f64, rng: &mut dyn RngCore) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
    } else {
        0.0
    }
}

/// Closed-form time-varying objectives.
#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    family: Family,
    space: Arc<SearchSpace>,
    sigma: f64,
    #[allow(dead_code)]
    seed: u64,
}

#[derive(Debug, Clone)]
enum Family {
    DriftingQuadratic {
        drift_step: f64,
        radius: f64,
    },
    CategoricalGatedDrift {
        drift_step: f64,
        radius: f64,
        offsets: Vec<f64>,
    },
    StationaryMixed {
        targets: Vec<f64>,
        ordinal_target: f64,
        offsets: Vec<f64>,
    },
}

/// Orbit radius of the drifting optimum, in normalized coordinates.
const DRIFT_RADIUS: f64 = 0.25;

fn angle_step(drift_rate: f64) -> Result<f64, BenchmarkError> {
    if !(0.0..=2.0 * DRIFT_RADIUS).contains(&drift_rate) {
        return Err(BenchmarkError::BadParam(format!(
            "drift rate {drift_rate} outside [0, {}]",
            2.0 * DRIFT_RADIUS
        )));
    }
    // chord length of one step on the orbit equals the drift rate exactly
    Ok(2.0 * (drift_rate / (2.0 * DRIFT_RADIUS)).asin())
}

fn cont_dim(name: &str) -> DimensionSpec {
    DimensionSpec::Continuous {
        name: name.to_owned(),
        min: 0.0,
        max: 1.0,
        scale: Scale::Linear,
        arch: false,
        default: None,
    }
}

impl SyntheticObjective {
    /// `f_t(x) = 1 − ‖x − c(t)‖²` with the optimum `c(t)` orbiting the
    /// domain center so that `‖c(t+1) − c(t)‖` equals `drift_rate` exactly.
    pub fn drifting_quadratic(
        n_cont: usize,
        drift_rate: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self, BenchmarkError> {
        if n_cont == 0 {
            return Err(BenchmarkError::BadParam(
                "need at least one continuous dimension".into(),
            ));
        }
        if n_cont < 2 && drift_rate > 0.0 {
            return Err(BenchmarkError::BadParam(
                "drift requires at least two continuous dimensions".into(),
            ));
        }
        let dims = (0..n_cont).map(|i| cont_dim(&format!("x{i}"))).collect();
        let space = SearchSpace::new(dims).expect("valid synthetic space");
        Ok(SyntheticObjective {
            family: Family::DriftingQuadratic {
                drift_step: angle_step(drift_rate)?,
                radius: DRIFT_RADIUS,
            },
            space,
            sigma,
            seed,
        })
    }

    /// Two continuous dimensions plus one categorical gate: each category
    /// shifts the drift phase by an equal share of the orbit and adds its
    /// own offset (evenly spaced from 0 to 0.5, last category best).
    pub fn categorical_gated(
        n_cats: usize,
        drift_rate: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self, BenchmarkError> {
        if n_cats < 2 {
            return Err(BenchmarkError::BadParam(
                "need at least two categories".into(),
            ));
        }
        let mut dims = vec![cont_dim("x0"), cont_dim("x1")];
        dims.push(DimensionSpec::Categorical {
            name: "gate".into(),
            labels: (0..n_cats).map(|i| format!("g{i}")).collect(),
            arch: false,
            default: None,
        });
        let space = SearchSpace::new(dims).expect("valid synthetic space");
        let offsets = (0..n_cats)
            .map(|i| 0.5 * i as f64 / (n_cats - 1) as f64)
            .collect();
        Ok(SyntheticObjective {
            family: Family::CategoricalGatedDrift {
                drift_step: angle_step(drift_rate)?,
                radius: DRIFT_RADIUS,
                offsets,
            },
            space,
            sigma,
            seed,
        })
    }

    /// A fixed mixed landscape: Gaussian bumps per continuous dimension
    /// (peak locations drawn from the seed), an ordinal bonus peaked at a
    /// seed-drawn rank, and categorical offsets.
    pub fn stationary_mixed(sigma: f64, seed: u64) -> Result<Self, BenchmarkError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dims = vec![
            cont_dim("x0"),
            cont_dim("x1"),
            DimensionSpec::Ordinal {
                name: "level".into(),
                values: vec![1.0, 2.0, 4.0, 8.0, 16.0],
                arch: false,
                default: None,
            },
            DimensionSpec::Categorical {
                name: "mode".into(),
                labels: vec!["m0".into(), "m1".into(), "m2".into()],
                arch: false,
                default: None,
            },
        ];
        let space = SearchSpace::new(dims).expect("valid synthetic space");
        let targets = (0..2).map(|_| rng.random_range(0.2..0.8)).collect();
        let ordinal_target = rng.random_range(0..5) as f64 / 4.0;
        let mut offsets = vec![0.0, 0.15, 0.3];
        for i in (1..offsets.len()).rev() {
            let j = rng.random_range(0..=i);
            offsets.swap(i, j);
        }
        Ok(SyntheticObjective {
            family: Family::StationaryMixed {
                targets,
                ordinal_target,
                offsets,
            },
            space,
            sigma,
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    /// Location of the drifting optimum at tick `t` for the given category
    /// phase index (0 for the ungated family).
    fn drift_center(&self, t: u64, phase_index: usize) -> Vec<f64> {
        let (step, radius, n_phases) = match &self.family {
            Family::DriftingQuadratic { drift_step, radius } => (*drift_step, *radius, 1usize),
            Family::CategoricalGatedDrift {
                drift_step,
                radius,
                offsets,
            } => (*drift_step, *radius, offsets.len()),
            Family::StationaryMixed { .. } => unreachable!("no drift center"),
        };
        let theta = step * t as f64 + 2.0 * PI * phase_index as f64 / n_phases as f64;
        let n_x = self.space.n_x();
        let mut c = vec![0.5; n_x];
        c[0] = 0.5 + radius * theta.cos();
        if n_x > 1 {
            c[1] = 0.5 + radius * theta.sin();
        }
        c
    }

    /// Noiseless value at `(z, t)`.
    pub fn truth(&self, z: &ConfigVector, t: u64) -> Result<f64, BenchmarkError> {
        check_space(&self.space, z)?;
        Ok(match &self.family {
            Family::DriftingQuadratic { .. } => {
                let c = self.drift_center(t, 0);
                let d2: f64 = z.x().iter().zip(&c).map(|(x, c)| (x - c).powi(2)).sum();
                1.0 - d2
            }
            Family::CategoricalGatedDrift { offsets, .. } => {
                let gate = z.h()[0];
                let c = self.drift_center(t, gate);
                let d2: f64 = z.x().iter().zip(&c).map(|(x, c)| (x - c).powi(2)).sum();
                1.0 - d2 + offsets[gate]
            }
            Family::StationaryMixed {
                targets,
                ordinal_target,
                offsets,
            } => {
                let bumps: f64 = z.x()[..2]
                    .iter()
                    .zip(targets)
                    .map(|(x, a)| (-8.0 * (x - a).powi(2)).exp())
                    .sum::<f64>()
                    / 2.0;
                let level = z.x()[2];
                let ord_bonus = 0.5 * (-4.0 * (level - ordinal_target).powi(2)).exp();
                bumps + ord_bonus + offsets[z.h()[0]]
            }
        })
    }

    /// Noisy evaluation: truth plus zero-mean Gaussian noise.
    pub fn evaluate(
        &self,
        z: &ConfigVector,
        t: u64,
        rng: &mut dyn RngCore,
    ) -> Result<f64, BenchmarkError> {
        Ok(self.truth(z, t)? + noise(self.sigma, rng))
    }
}

impl Objective for SyntheticObjective {
    fn name(&self) -> &str {
        match self.family {
            Family::DriftingQuadratic { .. } => "drifting-quadratic",
            Family::CategoricalGatedDrift { .. } => "categorical-gated-drift",
            Family::StationaryMixed { .. } => "stationary-mixed",
        }
    }

    fn space(&self) -> &Arc<SearchSpace> {
        &self.space
    }

    fn init_state(&self) -> AgentState {
        AgentState::Stateless
    }

    fn advance(
        &self,
        _state: &mut AgentState,
        z: &ConfigVector,
        t: u64,
        _steps: u64,
        rng: &mut dyn RngCore,
    ) -> Result<f64, BenchmarkError> {
        self.evaluate(z, t, rng)
    }

    fn ground_truth(&self, z: &ConfigVector, t: u64) -> Result<Option<f64>, BenchmarkError> {
        self.truth(z, t).map(Some)
    }
}

/// Tunable constants of the training simulator.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Optimal learning rate at zero performance.
    pub lr_opt_max: f64,
    /// Exponent of the optimal-lr decay `lr*(p) = lr_opt_max·(1−p)^κ`.
    pub kappa: f64,
    /// Squared log-width of the learning-rate response.
    pub lr_width: f64,
    /// Squared log-width of the batch-size response.
    pub batch_width: f64,
    /// Per-unit progress rate toward the capacity ceiling.
    pub rate: f64,
    /// Capacity ceiling at the smallest architecture.
    pub cap_base: f64,
    /// Extra ceiling at the largest architecture.
    pub cap_gain: f64,
    /// Capacity overhang tolerated before instability sets in.
    pub margin: f64,
    /// Instability penalty slope.
    pub instability: f64,
    /// Penalty multiplier when spectral normalization is on.
    pub sn_relief: f64,
    /// Multiplicative per-step progress noise.
    pub process_noise: f64,
    /// Observation noise on returned values.
    pub sigma: f64,
    /// Initial performance of a fresh agent.
    pub p0: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            lr_opt_max: 0.05,
            kappa: 2.0,
            lr_width: 2.0 * (10.0f64.ln()).powi(2),
            batch_width: 4.0 * (2.0f64.ln()).powi(2),
            rate: 0.05,
            cap_base: 0.55,
            cap_gain: 0.45,
            margin: 0.3,
            instability: 1.2,
            sn_relief: 0.25,
            process_noise: 0.05,
            sigma: 0.01,
            p0: 0.0,
        }
    }
}

/// A stand-in for RL training: scalar performance approaches an
/// architecture-dependent ceiling at a rate set by how close the learning
/// rate and batch size are to moving optima, minus an instability penalty
/// when capacity far exceeds current performance.
#[derive(Debug, Clone)]
pub struct AgentSimObjective {
    params: SimParams,
    space: Arc<SearchSpace>,
    lr_slot: usize,
    batch_slot: usize,
    width_slot: usize,
    depth_slot: usize,
    sn_slot: usize,
    batch_min: f64,
    batch_max: f64,
}

impl AgentSimObjective {
    pub fn new(params: SimParams) -> Self {
        let dims = vec![
            DimensionSpec::Continuous {
                name: "lr".into(),
                min: 1e-5,
                max: 1e-1,
                scale: Scale::Log,
                arch: false,
                default: Some(1e-3),
            },
            DimensionSpec::Ordinal {
                name: "batch".into(),
                values: vec![32.0, 64.0, 128.0, 256.0],
                arch: false,
                default: Some(32.0),
            },
            DimensionSpec::Ordinal {
                name: "width".into(),
                values: vec![32.0, 64.0, 128.0, 256.0],
                arch: true,
                default: Some(64.0),
            },
            DimensionSpec::Ordinal {
                name: "depth".into(),
                values: vec![1.0, 2.0, 3.0, 4.0],
                arch: true,
                default: Some(2.0),
            },
            DimensionSpec::Categorical {
                name: "sn".into(),
                labels: vec!["off".into(), "on".into()],
                arch: true,
                default: Some("off".into()),
            },
        ];
        let space = SearchSpace::new(dims).expect("valid simulator space");
        // x slots follow dimension order among non-categorical dims
        AgentSimObjective {
            params,
            space,
            lr_slot: 0,
            batch_slot: 1,
            width_slot: 2,
            depth_slot: 3,
            sn_slot: 0,
            batch_min: 32.0,
            batch_max: 256.0,
        }
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// The learning rate that maximizes per-step progress at performance
    /// `p`, falling as performance rises.
    pub fn optimal_lr(&self, p: f64) -> f64 {
        self.params.lr_opt_max * (1.0 - p).max(0.05).powf(self.params.kappa)
    }

    /// The batch size that maximizes per-step progress at performance `p`,
    /// rising geometrically from the smallest to the largest value.
    pub fn optimal_batch(&self, p: f64) -> f64 {
        self.batch_min * (self.batch_max / self.batch_min).powf(p.clamp(0.0, 1.0))
    }

    /// Capacity ceiling of the architecture in `z`.
    pub fn capacity(&self, z: &ConfigVector) -> f64 {
        let wn = self.ordinal_fraction(z, self.width_slot);
        let dn = self.ordinal_fraction(z, self.depth_slot);
        self.params.cap_base + self.params.cap_gain * 0.5 * (wn + dn)
    }

    fn ordinal_fraction(&self, z: &ConfigVector, slot: usize) -> f64 {
        let crate::space::XSlotKind::Ordinal(n) = self.space.x_slot_kind(slot) else {
            unreachable!("slot is ordinal by construction");
        };
        z.ordinal_rank(slot) as f64 / (n - 1) as f64
    }

    fn lr_of(&self, z: &ConfigVector) -> f64 {
        let u = z.x()[self.lr_slot];
        let (lo, hi) = (1e-5f64, 1e-1f64);
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    }

    fn batch_of(&self, z: &ConfigVector) -> f64 {
        let DimensionSpec::Ordinal { values, .. } = self.space.x_dim(self.batch_slot) else {
            unreachable!("batch is ordinal");
        };
        values[z.ordinal_rank(self.batch_slot)]
    }

    /// Normalized x-coordinate that decodes to learning rate `lr`.
    pub fn lr_coordinate(&self, lr: f64) -> f64 {
        let (lo, hi) = (1e-5f64, 1e-1f64);
        ((lr.clamp(lo, hi).ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
    }

    pub fn lr_slot(&self) -> usize {
        self.lr_slot
    }

    pub fn batch_slot(&self) -> usize {
        self.batch_slot
    }

    /// Noiseless per-unit progress increment at performance `p` under `z`.
    fn step_gain(&self, p: f64, z: &ConfigVector) -> (f64, f64) {
        let pr = &self.params;
        let lr = self.lr_of(z);
        let lr_star = self.optimal_lr(p);
        let g_lr = (-(lr.ln() - lr_star.ln()).powi(2) / pr.lr_width).exp();
        let b = self.batch_of(z);
        let b_star = self.optimal_batch(p);
        let g_b = (-(b.ln() - b_star.ln()).powi(2) / pr.batch_width).exp();
        let cap = self.capacity(z);
        let sn_on = z.h()[self.sn_slot] == 1;
        let relief = if sn_on { pr.sn_relief } else { 1.0 };
        let instab = pr.instability * (cap - p - pr.margin).max(0.0) * relief;
        (g_lr * g_b * (cap - p), instab)
    }
}

impl Objective for AgentSimObjective {
    fn name(&self) -> &str {
        "agent-sim"
    }

    fn space(&self) -> &Arc<SearchSpace> {
        &self.space
    }

    fn init_state(&self) -> AgentState {
        AgentState::sim(self.params.p0)
    }

    fn advance(
        &self,
        state: &mut AgentState,
        z: &ConfigVector,
        _t: u64,
        steps: u64,
        rng: &mut dyn RngCore,
    ) -> Result<f64, BenchmarkError> {
        check_space(&self.space, z)?;
        let AgentState::Sim { performance, steps: done } = state else {
            return Err(BenchmarkError::BadParam(
                "simulator advanced with a stateless agent".into(),
            ));
        };
        let pr = &self.params;
        for _ in 0..steps {
            let (gain, instab) = self.step_gain(*performance, z);
            let eta = if pr.process_noise > 0.0 {
                Normal::new(0.0, pr.process_noise)
                    .expect("valid noise")
                    .sample(rng)
            } else {
                0.0
            };
            let dp = pr.rate * (gain * (1.0 + eta) - instab);
            *performance = (*performance + dp).clamp(0.0, 1.0);
            *done += 1;
        }
        Ok(*performance + noise(pr.sigma, rng))
    }

    fn ground_truth(&self, z: &ConfigVector, _t: u64) -> Result<Option<f64>, BenchmarkError> {
        check_space(&self.space, z)?;
        Ok(None)
    }
}

/// Exhaustive-enumeration settings for small oracle computations.
#[derive(Debug, Clone, Copy)]
pub struct OracleGrid {
    /// Grid points per continuous dimension; ordinal and categorical
    /// dimensions always enumerate every value.
    pub points_per_dim: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid { points_per_dim: 21 }
    }
}

const MAX_GRID: u64 = 1_000_000;

/// Noiseless argmax of the objective at tick `t` over the full grid.
pub fn brute_force_optimum(
    objective: &dyn Objective,
    grid: &OracleGrid,
    t: u64,
) -> Result<(ConfigVector, f64), BenchmarkError> {
    let space = objective.space();
    let mut radix: Vec<u64> = Vec::new();
    for slot in 0..space.n_x() {
        match space.x_slot_kind(slot) {
            crate::space::XSlotKind::Continuous => radix.push(grid.points_per_dim as u64),
            crate::space::XSlotKind::Ordinal(n) => radix.push(n as u64),
        }
    }
    for slot in 0..space.n_h() {
        radix.push(space.h_cardinality(slot) as u64);
    }
    let total: u64 = radix.iter().try_fold(1u64, |acc, &r| {
        acc.checked_mul(r).filter(|&v| v <= MAX_GRID)
    })
    .ok_or(BenchmarkError::OversizedGrid(u64::MAX))?;

    let n_x = space.n_x();
    let mut best: Option<(ConfigVector, f64)> = None;
    for idx in 0..total {
        let mut rem = idx;
        let mut x = Vec::with_capacity(n_x);
        let mut h = Vec::with_capacity(space.n_h());
        for (slot, &r) in radix.iter().enumerate() {
            let digit = (rem % r) as usize;
            rem /= r;
            if slot < n_x {
                let denom = (r - 1).max(1) as f64;
                x.push(digit as f64 / denom);
            } else {
                h.push(digit);
            }
        }
        let z = ConfigVector::from_parts(Arc::clone(space), x, h)
            .expect("grid point is a valid config");
        let v = objective
            .ground_truth(&z, t)?
            .ok_or(BenchmarkError::NoOracle)?;
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((z, v));
        }
    }
    best.ok_or(BenchmarkError::OversizedGrid(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn at(space: &Arc<SearchSpace>, x: Vec<f64>, h: Vec<usize>) -> ConfigVector {
        ConfigVector::from_parts(Arc::clone(space), x, h).unwrap()
    }

    #[test]
    fn optimum_value_is_one_at_the_center() {
        let obj = SyntheticObjective::drifting_quadratic(2, 0.1, 0.0, 0).unwrap();
        for t in [0u64, 3, 17] {
            let c = obj.drift_center(t, 0);
            let z = at(obj.space(), c, vec![]);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let v = obj.evaluate(&z, t, &mut rng).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "t={t}: {v}");
        }
    }

    #[test]
    fn zero_noise_evaluations_are_identical() {
        let obj = SyntheticObjective::categorical_gated(3, 0.05, 0.0, 7).unwrap();
        let z = at(obj.space(), vec![0.3, 0.6], vec![1]);
        let a = obj
            .evaluate(&z, 5, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let b = obj
            .evaluate(&z, 5, &mut ChaCha8Rng::seed_from_u64(999))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_sample_mean_approaches_truth() {
        let obj = SyntheticObjective::drifting_quadratic(2, 0.1, 0.1, 0).unwrap();
        let z = at(obj.space(), vec![0.4, 0.7], vec![]);
        let truth = obj.truth(&z, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| obj.evaluate(&z, 3, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - truth).abs() < 3.0 * 0.1 / (n as f64).sqrt(),
            "mean {mean} vs truth {truth}"
        );
    }

    #[test]
    fn drift_step_distance_is_exact() {
        for &rate in &[0.0, 0.01, 0.1, 0.3, 0.5] {
            let obj = SyntheticObjective::drifting_quadratic(3, rate, 0.0, 0).unwrap();
            for t in 0..50u64 {
                let a = obj.drift_center(t, 0);
                let b = obj.drift_center(t + 1, 0);
                let d: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(p, q)| (p - q).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d - rate).abs() < 1e-12, "rate {rate}, t {t}: step {d}");
            }
        }
    }

    #[test]
    fn zero_drift_is_stationary() {
        let obj = SyntheticObjective::drifting_quadratic(2, 0.0, 0.0, 0).unwrap();
        let z = at(obj.space(), vec![0.2, 0.9], vec![]);
        let v0 = obj.truth(&z, 0).unwrap();
        for t in 1..30 {
            assert_eq!(obj.truth(&z, t).unwrap(), v0);
        }
    }

    #[test]
    fn drift_rate_above_orbit_diameter_is_rejected() {
        assert!(SyntheticObjective::drifting_quadratic(2, 0.51, 0.0, 0).is_err());
        assert!(SyntheticObjective::drifting_quadratic(1, 0.1, 0.0, 0).is_err());
    }

    #[test]
    fn space_mismatch_is_reported() {
        let a = SyntheticObjective::drifting_quadratic(2, 0.1, 0.0, 0).unwrap();
        let b = SyntheticObjective::stationary_mixed(0.0, 1).unwrap();
        let z = b.space().default_config().unwrap();
        assert!(matches!(
            a.truth(&z, 0),
            Err(BenchmarkError::SpaceMismatch)
        ));
    }

    #[test]
    fn stationary_mixed_is_pure_given_seed() {
        let a = SyntheticObjective::stationary_mixed(0.0, 11).unwrap();
        let b = SyntheticObjective::stationary_mixed(0.0, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let z = a.space().random_config(&mut rng);
            assert_eq!(a.truth(&z, 0).unwrap(), b.truth(&z, 0).unwrap());
        }
    }

    #[test]
    fn optimal_lr_maximizes_single_step_gain() {
        let mut params = SimParams::default();
        params.process_noise = 0.0;
        params.sigma = 0.0;
        let sim = AgentSimObjective::new(params);
        for &p in &[0.0, 0.3, 0.6] {
            let lr_star = sim.optimal_lr(p);
            let mut best_lr = f64::NAN;
            let mut best_gain = f64::NEG_INFINITY;
            for k in 0..=200 {
                let lr = 1e-5 * (1e-1f64 / 1e-5).powf(k as f64 / 200.0);
                let mut z = sim.space().default_config().unwrap();
                z.set_x(sim.lr_slot(), sim.lr_coordinate(lr));
                let (gain, _) = sim.step_gain(p, &z);
                if gain > best_gain {
                    best_gain = gain;
                    best_lr = lr;
                }
            }
            // grid granularity: nearest grid node to the optimum wins
            assert!(
                (best_lr.ln() - lr_star.ln()).abs() < (1e-1f64 / 1e-5).ln() / 200.0,
                "p={p}: best grid lr {best_lr} vs lr* {lr_star}"
            );
        }
    }

    #[test]
    fn zero_steps_leaves_state_unchanged() {
        let mut params = SimParams::default();
        params.sigma = 0.0;
        let sim = AgentSimObjective::new(params);
        let mut state = AgentState::sim(0.37);
        let z = sim.space().default_config().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ret = sim.advance(&mut state, &z, 0, 0, &mut rng).unwrap();
        assert_eq!(state, AgentState::sim(0.37));
        assert_eq!(ret, 0.37);
    }

    #[test]
    fn identical_seeds_and_actions_give_identical_trajectories() {
        let sim = AgentSimObjective::new(SimParams::default());
        let z = sim.space().default_config().unwrap();
        let run = || {
            let mut state = sim.init_state();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut rets = Vec::new();
            for t in 0..20 {
                rets.push(sim.advance(&mut state, &z, t, 1, &mut rng).unwrap());
            }
            (state, rets)
        };
        assert_eq!(run(), run());
    }

    /// Greedy schedule: set the learning rate to the current optimum before
    /// every step.
    fn run_policy(sim: &AgentSimObjective, greedy: bool, seed: u64, steps: u64) -> f64 {
        let mut state = sim.init_state();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = sim.space().default_config().unwrap();
        z.set_x(sim.lr_slot(), sim.lr_coordinate(sim.optimal_lr(0.0)));
        for t in 0..steps {
            if greedy {
                let p = state.performance().unwrap();
                z.set_x(sim.lr_slot(), sim.lr_coordinate(sim.optimal_lr(p)));
                let b_star = sim.optimal_batch(p);
                let rank = [32.0f64, 64.0, 128.0, 256.0]
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        (a.1.ln() - b_star.ln())
                            .abs()
                            .total_cmp(&(b.1.ln() - b_star.ln()).abs())
                    })
                    .unwrap()
                    .0;
                z.set_x(sim.batch_slot(), rank as f64 / 3.0);
            }
            sim.advance(&mut state, &z, t, 1, &mut rng).unwrap();
        }
        state.performance().unwrap()
    }

    #[test]
    fn adaptive_schedule_beats_constant_lr() {
        let mut params = SimParams::default();
        params.sigma = 0.0;
        let sim = AgentSimObjective::new(params);
        let mut wins = 0;
        let pairs = 50;
        for seed in 0..pairs {
            let adaptive = run_policy(&sim, true, seed, 100);
            let constant = run_policy(&sim, false, seed, 100);
            if adaptive >= constant {
                wins += 1;
            }
        }
        assert!(wins * 100 >= pairs * 95, "adaptive won only {wins}/{pairs}");
    }

    #[test]
    fn higher_capacity_reaches_higher_performance() {
        let mut params = SimParams::default();
        params.process_noise = 0.0;
        params.sigma = 0.0;
        let sim = AgentSimObjective::new(params);
        let mut finals = Vec::new();
        for rank in [0.0f64, 1.0] {
            let mut state = sim.init_state();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut z = sim.space().default_config().unwrap();
            z.set_x(2, rank); // width
            z.set_x(3, rank); // depth
            z.set_h(0, 1); // spectral norm tames the penalty
            for t in 0..400 {
                let p = state.performance().unwrap();
                z.set_x(sim.lr_slot(), sim.lr_coordinate(sim.optimal_lr(p)));
                sim.advance(&mut state, &z, t, 1, &mut rng).unwrap();
            }
            finals.push(state.performance().unwrap());
        }
        assert!(
            finals[1] > finals[0] + 0.1,
            "large {} vs small {}",
            finals[1],
            finals[0]
        );
    }

    #[test]
    fn small_architectures_progress_faster_early_without_sn() {
        let mut params = SimParams::default();
        params.process_noise = 0.0;
        params.sigma = 0.0;
        let sim = AgentSimObjective::new(params);
        let early_gain = |rank: f64| {
            let mut z = sim.space().default_config().unwrap();
            z.set_x(2, rank);
            z.set_x(3, rank);
            z.set_x(sim.lr_slot(), sim.lr_coordinate(sim.optimal_lr(0.0)));
            let (gain, instab) = sim.step_gain(0.0, &z);
            gain - instab
        };
        assert!(early_gain(0.0) > early_gain(1.0));
    }

    #[test]
    fn oracle_finds_grid_aligned_drift_center() {
        // at t=0 the center is (0.75, 0.5): both land on the 21-point grid
        let obj = SyntheticObjective::drifting_quadratic(2, 0.1, 0.0, 0).unwrap();
        let (z, f) = brute_force_optimum(&obj, &OracleGrid::default(), 0).unwrap();
        assert_eq!(z.x(), &[0.75, 0.5]);
        assert!((f - 1.0).abs() < 1e-12);
        // oracle consistency: noiseless evaluation at the argmax equals f*
        assert_eq!(obj.truth(&z, 0).unwrap(), f);
    }

    #[test]
    fn oracle_picks_the_best_gated_category() {
        let obj = SyntheticObjective::categorical_gated(3, 0.1, 0.0, 0).unwrap();
        for t in [0u64, 4, 9] {
            let (z, _) = brute_force_optimum(&obj, &OracleGrid::default(), t).unwrap();
            assert_eq!(z.h()[0], 2, "category 2 carries the +0.5 offset");
        }
    }

    #[test]
    fn grid_refinement_never_lowers_the_optimum() {
        let obj = SyntheticObjective::stationary_mixed(0.0, 5).unwrap();
        let (_, f21) =
            brute_force_optimum(&obj, &OracleGrid { points_per_dim: 21 }, 0).unwrap();
        let (_, f41) =
            brute_force_optimum(&obj, &OracleGrid { points_per_dim: 41 }, 0).unwrap();
        assert!(f41 >= f21);
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let obj = SyntheticObjective::drifting_quadratic(4, 0.0, 0.0, 0).unwrap();
        let grid = OracleGrid {
            points_per_dim: 100,
        };
        assert!(matches!(
            brute_force_optimum(&obj, &grid, 0),
            Err(BenchmarkError::OversizedGrid(_))
        ));
    }

    #[test]
    fn agent_sim_has_no_pointwise_oracle() {
        let sim = AgentSimObjective::new(SimParams::default());
        let z = sim.space().default_config().unwrap();
        assert!(sim.ground_truth(&z, 0).unwrap().is_none());
        assert!(matches!(
            brute_force_optimum(&sim, &OracleGrid { points_per_dim: 3 }, 0),
            Err(BenchmarkError::NoOracle)
        ));
    }
}
