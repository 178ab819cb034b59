//! Time-varying Gaussian-process regression on mixed configurations.
//!
//! Targets are z-scored over the current dataset; kernel hyperparameters
//! (lengthscales, categorical weights, signal variance, forgetting rate ω and
//! noise) are fitted by multi-start gradient ascent on the log marginal
//! likelihood with analytic gradients and sigmoid-box parameter transforms.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;
use thiserror::Error;

use crate::kernel::{
    self, kernel_matrix, mixed_grad_unchecked, KernelError, KernelParams,
};
use crate::space::{ConfigVector, TimestampedObservation};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("dataset holds no observations")]
    EmptyDataset,
    #[error("covariance matrix stayed ill-conditioned up to relative jitter {0:e}")]
    IllConditioned(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Maximum relative jitter tried before giving up on a factorization.
const MAX_RELATIVE_JITTER: f64 = 1e-2;
/// Floor applied to the target standard deviation before z-scoring.
const STD_FLOOR: f64 = 1e-12;

/// Observation store with target-normalization statistics and an optional
/// sliding-window cap on the number of retained points.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    observations: Vec<TimestampedObservation>,
    current_timestep: u64,
    max_points: Option<usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    /// Keep at most `max_points` observations, discarding the oldest first.
    pub fn with_max_points(max_points: usize) -> Self {
        Dataset {
            max_points: Some(max_points.max(1)),
            ..Dataset::default()
        }
    }

    pub fn push(&mut self, obs: TimestampedObservation) {
        self.current_timestep = self.current_timestep.max(obs.timestep);
        self.observations.push(obs);
        if let Some(cap) = self.max_points {
            if self.observations.len() > cap {
                let excess = self.observations.len() - cap;
                self.observations.drain(..excess);
            }
        }
    }

    pub fn observations(&self) -> &[TimestampedObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn current_timestep(&self) -> u64 {
        self.current_timestep
    }

    pub fn advance_to(&mut self, timestep: u64) {
        self.current_timestep = self.current_timestep.max(timestep);
    }

    /// Mean and standard deviation of the raw targets. A degenerate spread
    /// falls back to a unit scale so normalization stays invertible.
    pub fn target_stats(&self) -> (f64, f64) {
        if self.observations.is_empty() {
            return (0.0, 1.0);
        }
        let n = self.observations.len() as f64;
        let mean = self.observations.iter().map(|o| o.value).sum::<f64>() / n;
        let var = self
            .observations
            .iter()
            .map(|o| (o.value - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        (mean, if std < STD_FLOOR { 1.0 } else { std })
    }

    fn normalized_targets(&self) -> DVector<f64> {
        let (mean, std) = self.target_stats();
        DVector::from_iterator(
            self.observations.len(),
            self.observations.iter().map(|o| (o.value - mean) / std),
        )
    }
}

/// Box bounds used during hyperparameter fitting. Pairs with equal endpoints
/// pin the parameter.
#[derive(Debug, Clone)]
pub struct FitBounds {
    pub lengthscale: (f64, f64),
    pub cat_weight: (f64, f64),
    pub signal_variance: (f64, f64),
    pub omega: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        FitBounds {
            lengthscale: (1e-2, 1e2),
            cat_weight: (1e-2, 1e2),
            signal_variance: (1e-2, 1e2),
            omega: (0.0, 0.9),
            noise_variance: (1e-6, 1.0),
        }
    }
}

impl FitBounds {
    /// Bounds for a stationary surrogate (ω pinned to zero).
    pub fn stationary() -> Self {
        FitBounds {
            omega: (0.0, 0.0),
            ..FitBounds::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bounds: FitBounds,
    /// Number of optimizer starts; the first uses `warm_start` when present.
    pub n_starts: usize,
    pub max_iters: usize,
    pub warm_start: Option<KernelParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            bounds: FitBounds::default(),
            n_starts: 8,
            max_iters: 80,
            warm_start: None,
        }
    }
}

/// A fitted (or directly parameterized) GP with cached factorization.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    observations: Vec<TimestampedObservation>,
    target_mean: f64,
    target_std: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    lml: f64,
}

impl GpModel {
    /// Condition on the dataset with the given (already chosen) parameters.
    /// An empty dataset yields a prior-only model.
    pub fn with_params(dataset: &Dataset, params: KernelParams) -> Result<Self, GpError> {
        let (mean, std) = dataset.target_stats();
        if dataset.is_empty() {
            return Ok(GpModel {
                params,
                observations: Vec::new(),
                target_mean: mean,
                target_std: std,
                chol: None,
                alpha: DVector::zeros(0),
                lml: 0.0,
            });
        }
        let targets = dataset.normalized_targets();
        let (chol, _) = factorize(dataset.observations(), &params)?;
        let alpha = chol.solve(&targets);
        let lml = lml_from_parts(&chol, &targets, &alpha);
        Ok(GpModel {
            params,
            observations: dataset.observations().to_vec(),
            target_mean: mean,
            target_std: std,
            chol: Some(chol),
            alpha,
            lml,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn observations(&self) -> &[TimestampedObservation] {
        &self.observations
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Posterior mean and variance at config `z` and timestep `t`, in raw
    /// target units.
    pub fn posterior(&self, z: &ConfigVector, t: u64) -> (f64, f64) {
        let prior_var = self.params.signal_variance * self.target_std * self.target_std;
        let Some(chol) = &self.chol else {
            return (self.target_mean, prior_var);
        };
        let k_star = kernel::cross_covariance(&self.observations, z, t, &self.params);
        let mean_n = k_star.dot(&self.alpha);
        let w = chol.solve(&k_star);
        let var_n = (self.params.signal_variance - k_star.dot(&w)).max(0.0);
        (
            self.target_mean + self.target_std * mean_n,
            var_n * self.target_std * self.target_std,
        )
    }

    /// Posterior over a batch of configs at a common timestep, reusing the
    /// cached factorization.
    pub fn posterior_batch(&self, configs: &[ConfigVector], t: u64) -> Vec<(f64, f64)> {
        configs.iter().map(|z| self.posterior(z, t)).collect()
    }

    /// Sensitivity of the posterior mean at `(z, t)` to each stored target:
    /// the vector `(K+σ²I)⁻¹ k_*`.
    pub fn mean_sensitivity(&self, z: &ConfigVector, t: u64) -> DVector<f64> {
        match &self.chol {
            Some(chol) => {
                let k_star = kernel::cross_covariance(&self.observations, z, t, &self.params);
                chol.solve(&k_star)
            }
            None => DVector::zeros(0),
        }
    }
}

/// Log marginal likelihood of the dataset (normalized targets) under the
/// given parameters.
pub fn log_marginal_likelihood(params: &KernelParams, dataset: &Dataset) -> Result<f64, GpError> {
    if dataset.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let targets = dataset.normalized_targets();
    let (chol, _) = factorize(dataset.observations(), params)?;
    let alpha = chol.solve(&targets);
    Ok(lml_from_parts(&chol, &targets, &alpha))
}

fn lml_from_parts(chol: &Cholesky<f64, Dyn>, targets: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = targets.len() as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * targets.dot(alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Cholesky of `K + σ²I` with jitter escalation (×10 per retry up to a
/// relative cap).
fn factorize(
    obs: &[TimestampedObservation],
    params: &KernelParams,
) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = obs.len();
    let mut a = kernel_matrix(obs, params);
    for i in 0..n {
        a[(i, i)] += params.noise_variance;
    }
    let mut rel = params.jitter;
    loop {
        match a.clone().cholesky() {
            Some(c) => return Ok((c, rel)),
            None => {
                let next = (rel * 10.0).max(1e-8);
                if next > MAX_RELATIVE_JITTER {
                    return Err(GpError::IllConditioned(rel));
                }
                let bump = (next - rel) * params.signal_variance;
                for i in 0..n {
                    a[(i, i)] += bump;
                }
                rel = next;
            }
        }
    }
}

/// Fit kernel parameters by multi-start gradient ascent on the log marginal
/// likelihood and return the conditioned model.
pub fn fit<R: Rng + ?Sized>(
    dataset: &Dataset,
    options: &FitOptions,
    rng: &mut R,
) -> Result<GpModel, GpError> {
    if dataset.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let n_x = dataset.observations()[0].config.x().len();
    let n_h = dataset.observations()[0].config.h().len();
    let transform = Transform::new(n_x, n_h, &options.bounds);
    let targets = dataset.normalized_targets();

    let mut best: Option<(f64, KernelParams)> = None;
    let mut start_failures = 0usize;
    for start in 0..options.n_starts.max(1) {
        let u0 = match (&options.warm_start, start) {
            (Some(p), 0) => transform.to_unconstrained(p),
            _ => (0..transform.len())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        };
        match maximize_lml(dataset, &targets, &transform, u0, options.max_iters) {
            Some((lml, params)) => {
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, params));
                }
            }
            None => start_failures += 1,
        }
        let _ = start_failures;
    }
    let (_, params) = best.ok_or(GpError::IllConditioned(MAX_RELATIVE_JITTER))?;
    GpModel::with_params(dataset, params)
}

/// Adam ascent on the transformed parameter vector. Returns the best LML and
/// parameters seen, or `None` if every evaluation failed to factorize.
fn maximize_lml(
    dataset: &Dataset,
    targets: &DVector<f64>,
    transform: &Transform,
    mut u: Vec<f64>,
    max_iters: usize,
) -> Option<(f64, KernelParams)> {
    const LR: f64 = 0.08;
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    const GRAD_TOL: f64 = 1e-4;
    const PLATEAU_TOL: f64 = 1e-7;
    const PLATEAU_SPAN: usize = 8;

    let mut m = vec![0.0; u.len()];
    let mut v = vec![0.0; u.len()];
    let mut best: Option<(f64, KernelParams)> = None;
    let mut last_improve = 0usize;

    for it in 0..max_iters {
        let params = transform.to_params(&u);
        let Some((lml, grad_u)) = lml_value_and_grad(dataset, targets, &params, transform, &u)
        else {
            return best;
        };
        if best.as_ref().is_none_or(|(b, _)| lml > *b + PLATEAU_TOL) {
            best = Some((lml, params));
            last_improve = it;
        } else if it - last_improve > PLATEAU_SPAN {
            break;
        }
        let gmax = grad_u.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < GRAD_TOL {
            break;
        }
        let t = (it + 1) as f64;
        for p in 0..u.len() {
            m[p] = B1 * m[p] + (1.0 - B1) * grad_u[p];
            v[p] = B2 * v[p] + (1.0 - B2) * grad_u[p] * grad_u[p];
            let mh = m[p] / (1.0 - B1.powf(t));
            let vh = v[p] / (1.0 - B2.powf(t));
            u[p] += LR * mh / (vh.sqrt() + EPS);
        }
    }
    best
}

/// LML and its gradient with respect to the unconstrained vector `u`.
fn lml_value_and_grad(
    dataset: &Dataset,
    targets: &DVector<f64>,
    params: &KernelParams,
    transform: &Transform,
    u: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let obs = dataset.observations();
    let n = obs.len();
    let n_x = params.lengthscales.len();
    let n_h = params.cat_weights.len();

    let (chol, _) = factorize(obs, params).ok()?;
    let alpha = chol.solve(targets);
    let lml = lml_from_parts(&chol, targets, &alpha);
    if !lml.is_finite() {
        return None;
    }

    // M = α αᵀ − (K+σ²I)⁻¹; dLML/dθ = ½ Σ_ab M[a,b] ∂A[a,b]/∂θ.
    let a_inv = chol.inverse();
    let mut grad_theta = vec![0.0; transform.len()];
    let mut sx = vec![0.0; n_x];
    let mut sh = vec![0.0; n_h];
    let idx = transform.layout();

    for a in 0..n {
        for b in a..n {
            let pd = mixed_grad_unchecked(
                &obs[a].config,
                &obs[b].config,
                obs[a].timestep,
                obs[b].timestep,
                params,
                &mut sx,
                &mut sh,
            );
            let m_ab = alpha[a] * alpha[b] - a_inv[(a, b)];
            let w = if a == b { 0.5 * m_ab } else { m_ab };
            for p in 0..n_x {
                grad_theta[idx.ls + p] += w * pd.d_log_ls[p];
            }
            for p in 0..n_h {
                grad_theta[idx.w + p] += w * pd.d_log_w[p];
            }
            let mut d_sv = pd.d_log_sv;
            if a == b {
                d_sv += params.scaled_jitter();
            }
            grad_theta[idx.sv] += w * d_sv;
            grad_theta[idx.omega] += w * pd.d_omega;
            if a == b {
                grad_theta[idx.noise] += w * params.noise_variance;
            }
        }
    }

    let grad_u = transform.chain_rule(u, &grad_theta);
    Some((lml, grad_u))
}

/// Indices of each parameter group inside the flat optimization vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    ls: usize,
    w: usize,
    sv: usize,
    omega: usize,
    noise: usize,
}

/// Sigmoid-box transform between the unconstrained optimization vector and
/// kernel parameters. Log-scale parameters are boxed in log space; ω is boxed
/// linearly. Collapsed bounds pin a parameter and zero its gradient.
struct Transform {
    n_x: usize,
    n_h: usize,
    /// Per-slot (lo, hi) in the transformed (log or linear) domain, plus a
    /// flag marking log-domain slots.
    boxes: Vec<(f64, f64, bool)>,
}

impl Transform {
    fn new(n_x: usize, n_h: usize, bounds: &FitBounds) -> Self {
        let mut boxes = Vec::with_capacity(n_x + n_h + 3);
        for _ in 0..n_x {
            boxes.push((bounds.lengthscale.0.ln(), bounds.lengthscale.1.ln(), true));
        }
        for _ in 0..n_h {
            boxes.push((bounds.cat_weight.0.ln(), bounds.cat_weight.1.ln(), true));
        }
        boxes.push((
            bounds.signal_variance.0.ln(),
            bounds.signal_variance.1.ln(),
            true,
        ));
        boxes.push((bounds.omega.0, bounds.omega.1, false));
        boxes.push((
            bounds.noise_variance.0.ln(),
            bounds.noise_variance.1.ln(),
            true,
        ));
        Transform { n_x, n_h, boxes }
    }

    fn len(&self) -> usize {
        self.boxes.len()
    }

    fn layout(&self) -> Layout {
        Layout {
            ls: 0,
            w: self.n_x,
            sv: self.n_x + self.n_h,
            omega: self.n_x + self.n_h + 1,
            noise: self.n_x + self.n_h + 2,
        }
    }

    fn to_params(&self, u: &[f64]) -> KernelParams {
        let idx = self.layout();
        let val = |slot: usize| -> f64 {
            let (lo, hi, log) = self.boxes[slot];
            let s = sigmoid(u[slot]);
            let t = lo + (hi - lo) * s;
            if log {
                t.exp()
            } else {
                t
            }
        };
        KernelParams {
            lengthscales: (0..self.n_x).map(|p| val(idx.ls + p)).collect(),
            cat_weights: (0..self.n_h).map(|p| val(idx.w + p)).collect(),
            signal_variance: val(idx.sv),
            omega: val(idx.omega),
            noise_variance: val(idx.noise),
            jitter: kernel::DEFAULT_JITTER,
            lambda: kernel::DEFAULT_LAMBDA,
        }
    }

    fn to_unconstrained(&self, params: &KernelParams) -> Vec<f64> {
        let idx = self.layout();
        let mut u = vec![0.0; self.len()];
        let set = |u: &mut Vec<f64>, slot: usize, raw: f64| {
            let (lo, hi, log) = self.boxes[slot];
            if hi <= lo {
                u[slot] = 0.0;
                return;
            }
            let t = if log { raw.max(1e-300).ln() } else { raw };
            let frac = ((t - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
            u[slot] = (frac / (1.0 - frac)).ln();
        };
        for p in 0..self.n_x {
            set(&mut u, idx.ls + p, params.lengthscales[p]);
        }
        for p in 0..self.n_h {
            set(&mut u, idx.w + p, params.cat_weights[p]);
        }
        set(&mut u, idx.sv, params.signal_variance);
        set(&mut u, idx.omega, params.omega);
        set(&mut u, idx.noise, params.noise_variance);
        u
    }

    /// Convert a gradient with respect to transformed parameters (log-params
    /// for log slots, raw ω) into a gradient with respect to `u`.
    fn chain_rule(&self, u: &[f64], grad_theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        for slot in 0..self.len() {
            let (lo, hi, _) = self.boxes[slot];
            let s = sigmoid(u[slot]);
            g[slot] = grad_theta[slot] * (hi - lo) * s * (1.0 - s);
        }
        g
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::mixed_unchecked;
    use crate::space::{DimensionSpec, Scale, SearchSpace};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::sync::Arc;

    fn cont_space(d: usize) -> Arc<SearchSpace> {
        SearchSpace::new(
            (0..d)
                .map(|i| DimensionSpec::Continuous {
                    name: format!("x{i}"),
                    min: 0.0,
                    max: 1.0,
                    scale: Scale::Linear,
                    arch: false,
                    default: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn mixed_space() -> Arc<SearchSpace> {
        SearchSpace::new(vec![
            DimensionSpec::Continuous {
                name: "a".into(),
                min: 0.0,
                max: 1.0,
                scale: Scale::Linear,
                arch: false,
                default: None,
            },
            DimensionSpec::Ordinal {
                name: "o".into(),
                values: vec![1.0, 2.0, 4.0, 8.0],
                arch: false,
                default: None,
            },
            DimensionSpec::Categorical {
                name: "c".into(),
                labels: vec!["u".into(), "v".into(), "w".into()],
                arch: false,
                default: None,
            },
        ])
        .unwrap()
    }

    fn obs(space: &Arc<SearchSpace>, rng: &mut ChaCha8Rng, t: u64, value: f64) -> TimestampedObservation {
        TimestampedObservation {
            config: space.random_config(rng),
            timestep: t,
            value,
        }
    }

    #[test]
    fn lml_single_point_closed_form() {
        let space = cont_space(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ds = Dataset::new();
        ds.push(obs(&space, &mut rng, 0, 3.7));
        // single point z-scores to 0; prior variance 1 + noise
        let mut p = KernelParams::new(vec![1.0], vec![], 1.0, 0.0, 0.1).unwrap();
        p.jitter = 0.0;
        let lml = log_marginal_likelihood(&p, &ds).unwrap();
        assert!((lml - (-0.9665936231068352)).abs() < 1e-12, "lml = {lml}");
    }

    /// Dense re-implementation with an explicit matrix inverse.
    fn dense_oracle(
        params: &KernelParams,
        ds: &Dataset,
        query: &ConfigVector,
        t: u64,
    ) -> (f64, f64, f64) {
        let obs = ds.observations();
        let n = obs.len();
        let (mean, std) = ds.target_stats();
        let targets = DVector::from_iterator(n, obs.iter().map(|o| (o.value - mean) / std));
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = mixed_unchecked(
                    &obs[i].config,
                    &obs[j].config,
                    obs[i].timestep,
                    obs[j].timestep,
                    params,
                );
            }
            a[(i, i)] += params.scaled_jitter() + params.noise_variance;
        }
        let a_inv = a.clone().try_inverse().unwrap();
        let k_star = DVector::from_iterator(
            n,
            obs.iter()
                .map(|o| mixed_unchecked(&o.config, query, o.timestep, t, params)),
        );
        let mean_n = k_star.dot(&(&a_inv * &targets));
        let var_n = params.signal_variance - k_star.dot(&(&a_inv * &k_star));
        let lml = -0.5 * targets.dot(&(&a_inv * &targets))
            - 0.5 * a.determinant().ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        (mean + std * mean_n, var_n.max(0.0) * std * std, lml)
    }

    #[test]
    fn posterior_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..25 {
            let space = mixed_space();
            let n = rng.random_range(1..=25usize);
            let mut ds = Dataset::new();
            for _ in 0..n {
                let t = rng.random_range(0..15u64);
                let v = rng.random_range(-3.0..3.0);
                ds.push(obs(&space, &mut rng, t, v));
            }
            let params = KernelParams::new(
                vec![
                    10f64.powf(rng.random_range(-1.0..1.0)),
                    10f64.powf(rng.random_range(-1.0..1.0)),
                ],
                vec![10f64.powf(rng.random_range(-0.5..0.5))],
                10f64.powf(rng.random_range(-0.5..0.5)),
                rng.random_range(0.0..0.8),
                10f64.powf(rng.random_range(-4.0..-0.5)),
            )
            .unwrap();
            let model = GpModel::with_params(&ds, params.clone()).unwrap();
            let q = space.random_config(&mut rng);
            let t = rng.random_range(0..20u64);
            let (m, v) = model.posterior(&q, t);
            let (om, ov, olml) = dense_oracle(&params, &ds, &q, t);
            assert!((m - om).abs() < 1e-8, "trial {trial}: mean {m} vs {om}");
            assert!((v - ov).abs() < 1e-8, "trial {trial}: var {v} vs {ov}");
            assert!(
                (model.log_marginal_likelihood() - olml).abs() < 1e-7,
                "trial {trial}: lml {} vs {olml}",
                model.log_marginal_likelihood()
            );
        }
    }

    #[test]
    fn noiseless_interpolation_at_training_points() {
        // at a training point the interpolation error equals nugget * alpha,
        // so the nugget here sits well below the stated tolerance
        let space = mixed_space();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut ds = Dataset::new();
        for k in 0..12 {
            let t = k as u64 / 3;
            let v = (k as f64 * 0.77).sin() * 5.0 + 2.0;
            ds.push(obs(&space, &mut rng, t, v));
        }
        let mut params = KernelParams::new(vec![0.8, 0.8], vec![1.0], 1.0, 0.2, 1e-8).unwrap();
        params.jitter = 1e-10;
        let model = GpModel::with_params(&ds, params).unwrap();
        let (_, scale) = ds.target_stats();
        for o in ds.observations() {
            let (m, v) = model.posterior(&o.config, o.timestep);
            assert!(
                (m - o.value).abs() <= 1e-6 * scale,
                "mean {m} vs {}",
                o.value
            );
            let v_norm = v / (scale * scale);
            assert!(v_norm <= 1e-6, "variance {v_norm} at training point");
        }
    }

    #[test]
    fn single_observation_posterior_recovers_value() {
        let space = cont_space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ds = Dataset::new();
        ds.push(obs(&space, &mut rng, 4, -1.25));
        let model = fit(&ds, &FitOptions::default(), &mut rng).unwrap();
        let (m, _) = model.posterior(&ds.observations()[0].config, 4);
        assert!((m - (-1.25)).abs() < 1e-6, "m = {m}");
    }

    #[test]
    fn single_observation_closed_form_mean() {
        let space = cont_space(1);
        let c0 = ConfigVector::from_parts(Arc::clone(&space), vec![0.2], vec![]).unwrap();
        let mut ds = Dataset::new();
        ds.push(TimestampedObservation {
            config: c0.clone(),
            timestep: 1,
            value: 2.0,
        });
        let mut p = KernelParams::new(vec![0.5], vec![], 1.0, 0.3, 0.25).unwrap();
        p.jitter = 0.0;
        let model = GpModel::with_params(&ds, p.clone()).unwrap();
        let q = ConfigVector::from_parts(Arc::clone(&space), vec![0.9], vec![]).unwrap();
        let (m, _) = model.posterior(&q, 5);
        // z-scored single target is 0, so the posterior mean de-normalizes
        // back to the observed value regardless of covariance.
        let k = mixed_unchecked(&q, &c0, 5, 1, &p);
        let expected = 2.0 + 1.0 * (k / (1.0 + 0.25)) * 0.0;
        assert!((m - expected).abs() < 1e-10, "m = {m}");
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let space = cont_space(1);
        let mut ds = Dataset::new();
        ds.push(TimestampedObservation {
            config: ConfigVector::from_parts(Arc::clone(&space), vec![0.0], vec![]).unwrap(),
            timestep: 0,
            value: 1.0,
        });
        ds.push(TimestampedObservation {
            config: ConfigVector::from_parts(Arc::clone(&space), vec![0.05], vec![]).unwrap(),
            timestep: 0,
            value: 3.0,
        });
        let p = KernelParams::new(vec![0.01], vec![], 1.4, 0.0, 0.1).unwrap();
        let model = GpModel::with_params(&ds, p).unwrap();
        let q = ConfigVector::from_parts(Arc::clone(&space), vec![1.0], vec![]).unwrap();
        let (_, v) = model.posterior(&q, 0);
        let (_, std) = ds.target_stats();
        let prior = 1.4 * std * std;
        assert!((v - prior).abs() / prior < 0.01, "v = {v}, prior = {prior}");
    }

    #[test]
    fn batch_matches_loop_and_empty_batch() {
        let space = mixed_space();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ds = Dataset::new();
        for k in 0..10 {
            ds.push(obs(&space, &mut rng, k / 2, (k as f64).cos()));
        }
        let p = KernelParams::new(vec![0.6, 0.9], vec![1.2], 1.0, 0.1, 0.01).unwrap();
        let model = GpModel::with_params(&ds, p).unwrap();
        let queries: Vec<_> = (0..6).map(|_| space.random_config(&mut rng)).collect();
        let batch = model.posterior_batch(&queries, 7);
        for (q, (bm, bv)) in queries.iter().zip(&batch) {
            let (m, v) = model.posterior(q, 7);
            assert!((m - bm).abs() <= 1e-12 && (v - bv).abs() <= 1e-12);
        }
        assert!(model.posterior_batch(&[], 7).is_empty());
    }

    #[test]
    fn conditioning_never_increases_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let space = mixed_space();
        for _ in 0..20 {
            let mut ds = Dataset::new();
            let n = rng.random_range(1..=12usize);
            for _ in 0..n {
                let t = rng.random_range(0..6u64);
                let v = rng.random_range(-1.0..1.0);
                ds.push(obs(&space, &mut rng, t, v));
            }
            let p = KernelParams::new(
                vec![0.5, 0.7],
                vec![1.0],
                1.0,
                rng.random_range(0.0..0.5),
                0.05,
            )
            .unwrap();
            let before = GpModel::with_params(&ds, p.clone()).unwrap();
            let q = space.random_config(&mut rng);
            let (_, v_before) = before.posterior(&q, 6);
            let extra = rng.random_range(-1.0..1.0);
            ds.push(obs(&space, &mut rng, 6, extra));
            // fix normalization to isolate the conditioning effect
            let after = GpModel::with_params(&ds, p).unwrap();
            let scale_b = before.target_std * before.target_std;
            let scale_a = after.target_std * after.target_std;
            let (_, v_after) = after.posterior(&q, 6);
            assert!(
                v_after / scale_a <= v_before / scale_b + 1e-9,
                "variance grew: {} -> {}",
                v_before / scale_b,
                v_after / scale_a
            );
        }
    }

    #[test]
    fn old_observations_lose_mean_influence_monotonically() {
        // isolated points: tiny lengthscale so spatial covariance between
        // distinct points is negligible; weights on old points then shrink
        // with the time gap through the decay factor.
        let space = cont_space(1);
        let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let times = [20u64, 15, 10, 5, 0];
        let mut ds = Dataset::new();
        for (x, t) in xs.iter().zip(times) {
            ds.push(TimestampedObservation {
                config: ConfigVector::from_parts(Arc::clone(&space), vec![*x], vec![]).unwrap(),
                timestep: t,
                value: *x * 2.0 - 1.0,
            });
        }
        let p = KernelParams::new(vec![0.02], vec![], 1.0, 0.3, 0.01).unwrap();
        let model = GpModel::with_params(&ds, p).unwrap();
        let q = ConfigVector::from_parts(Arc::clone(&space), vec![0.0], vec![]).unwrap();
        let s = model.mean_sensitivity(&q, 20);
        // the query sits at the newest point; remaining weights must decay
        // with age
        let w: Vec<f64> = (1..5).map(|i| s[i].abs()).collect();
        for pair in w.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "weights not decaying: {w:?}"
            );
        }
    }

    #[test]
    fn fit_analytic_gradient_matches_finite_differences() {
        let space = mixed_space();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut ds = Dataset::new();
        for k in 0..14 {
            let t = k / 2;
            let v = rng.random_range(-2.0..2.0);
            ds.push(obs(&space, &mut rng, t, v));
        }
        let bounds = FitBounds::default();
        let transform = Transform::new(2, 1, &bounds);
        let targets = ds.normalized_targets();
        let u: Vec<f64> = (0..transform.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let params = transform.to_params(&u);
        let (_, grad) = lml_value_and_grad(&ds, &targets, &params, &transform, &u).unwrap();
        let h = 1e-5;
        for p in 0..u.len() {
            let mut hi = u.clone();
            hi[p] += h;
            let mut lo = u.clone();
            lo[p] -= h;
            let f_hi = log_marginal_likelihood(&transform.to_params(&hi), &ds).unwrap();
            let f_lo = log_marginal_likelihood(&transform.to_params(&lo), &ds).unwrap();
            let fd = (f_hi - f_lo) / (2.0 * h);
            assert!(
                (fd - grad[p]).abs() < 1e-4 * (1.0 + fd.abs()),
                "param {p}: fd {fd} vs analytic {}",
                grad[p]
            );
        }
    }

    #[test]
    fn fit_is_seed_deterministic() {
        let space = mixed_space();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut ds = Dataset::new();
        for k in 0..10 {
            let v = (k as f64 * 0.3).sin();
            ds.push(obs(&space, &mut rng, k / 2, v));
        }
        let opts = FitOptions {
            n_starts: 3,
            max_iters: 40,
            ..FitOptions::default()
        };
        let a = fit(&ds, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = fit(&ds, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn fit_improves_lml_over_default_params() {
        let space = cont_space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut ds = Dataset::new();
        for _ in 0..20 {
            let c = space.random_config(&mut rng);
            let v = (c.x()[0] * 6.0).sin() + 0.2 * c.x()[1];
            ds.push(TimestampedObservation {
                config: c,
                timestep: 0,
                value: v,
            });
        }
        let default_lml =
            log_marginal_likelihood(&KernelParams::default_for(2, 0), &ds).unwrap();
        let opts = FitOptions {
            n_starts: 4,
            max_iters: 60,
            ..FitOptions::default()
        };
        let model = fit(&ds, &opts, &mut rng).unwrap();
        assert!(
            model.log_marginal_likelihood() >= default_lml - 1e-9,
            "fit ({}) did not beat defaults ({default_lml})",
            model.log_marginal_likelihood()
        );
    }

    /// Stationary data: low fitted ω. Data whose sign flips halfway: higher
    /// fitted ω than the stationary fit on the same draw.
    #[test]
    fn omega_tracks_nonstationarity() {
        let space = cont_space(1);
        let mut low_count = 0;
        let mut higher_count = 0;
        let seeds = 20;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let mut stat = Dataset::new();
            let mut flip = Dataset::new();
            for k in 0..40u64 {
                let t = k / 2;
                let c = space.random_config(&mut rng);
                let base = (c.x()[0] * std::f64::consts::PI * 2.0).sin();
                let e = noise.sample(&mut rng);
                stat.push(TimestampedObservation {
                    config: c.clone(),
                    timestep: t,
                    value: base + e,
                });
                let sign = if t >= 10 { -1.0 } else { 1.0 };
                flip.push(TimestampedObservation {
                    config: c,
                    timestep: t,
                    value: sign * base + e,
                });
            }
            let opts = FitOptions {
                n_starts: 4,
                max_iters: 80,
                ..FitOptions::default()
            };
            let m_stat = fit(&stat, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            let m_flip = fit(&flip, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            if m_stat.params().omega <= 0.2 {
                low_count += 1;
            }
            if m_flip.params().omega > m_stat.params().omega {
                higher_count += 1;
            }
        }
        assert!(
            low_count * 100 >= seeds * 80,
            "stationary omega small in only {low_count}/{seeds} seeds"
        );
        assert!(
            higher_count * 100 >= seeds * 75,
            "flip omega exceeded stationary in only {higher_count}/{seeds} seeds"
        );
    }

    #[test]
    fn lml_total_on_fuzzed_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let space = mixed_space();
        for _ in 0..30 {
            let mut ds = Dataset::new();
            let n = rng.random_range(1..=20usize);
            for _ in 0..n {
                let t = rng.random_range(0..10u64);
                let v = rng.random_range(-1e3..1e3);
                ds.push(obs(&space, &mut rng, t, v));
            }
            let p = KernelParams::new(
                vec![
                    10f64.powf(rng.random_range(-2.0..2.0)),
                    10f64.powf(rng.random_range(-2.0..2.0)),
                ],
                vec![10f64.powf(rng.random_range(-1.0..1.0))],
                10f64.powf(rng.random_range(-1.0..1.0)),
                rng.random_range(0.0..0.9),
                10f64.powf(rng.random_range(-6.0..0.0)),
            )
            .unwrap();
            let lml = log_marginal_likelihood(&p, &ds).unwrap();
            assert!(lml.is_finite());
        }
    }

    #[test]
    fn sliding_window_drops_oldest() {
        let space = cont_space(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ds = Dataset::with_max_points(5);
        for k in 0..9u64 {
            ds.push(obs(&space, &mut rng, k, k as f64));
        }
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.observations()[0].timestep, 4);
        assert_eq!(ds.current_timestep(), 8);
    }

    #[test]
    fn empty_dataset_prior_model_and_fit_error() {
        let ds = Dataset::new();
        assert!(matches!(
            fit(&ds, &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(GpError::EmptyDataset)
        ));
        let model = GpModel::with_params(&ds, KernelParams::default_for(1, 0)).unwrap();
        let space = cont_space(1);
        let q = ConfigVector::from_parts(space, vec![0.5], vec![]).unwrap();
        let (m, v) = model.posterior(&q, 0);
        assert_eq!(m, 0.0);
        assert_eq!(v, 1.0);
    }
}
