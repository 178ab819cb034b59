//! Spatiotemporal covariance functions over mixed configurations.
//!
//! The spatial part combines a Matérn-5/2 kernel on the normalized
//! continuous/ordinal block with an exponentiated overlap kernel on the
//! categorical block; a `(1-ω)^{|i-j|/2}` factor decays covariance between
//! observations taken at different timesteps. The combined kernel is
//! normalized so that self-covariance equals the signal variance.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::space::{ConfigVector, TimestampedObservation};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("block length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("parameter count {0} does not match block length {1}")]
    ParamMismatch(usize, usize),
    #[error("configs come from different spaces")]
    SpaceMismatch,
    #[error("invalid kernel parameter: {0}")]
    InvalidParam(String),
}

/// Parameters of the spatiotemporal mixed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    /// One positive lengthscale per continuous/ordinal slot.
    pub lengthscales: Vec<f64>,
    /// One positive weight per categorical slot.
    pub cat_weights: Vec<f64>,
    pub signal_variance: f64,
    /// Forgetting rate in `[0, 1]`; 0 means a stationary kernel.
    pub omega: f64,
    pub noise_variance: f64,
    pub jitter: f64,
    /// Trade-off between the averaged sum and the product of the two spatial
    /// sub-kernels.
    pub lambda: f64,
}

pub const DEFAULT_JITTER: f64 = 1e-6;
pub const DEFAULT_LAMBDA: f64 = 0.5;

impl KernelParams {
    pub fn new(
        lengthscales: Vec<f64>,
        cat_weights: Vec<f64>,
        signal_variance: f64,
        omega: f64,
        noise_variance: f64,
    ) -> Result<Self, KernelError> {
        if lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(KernelError::InvalidParam(
                "lengthscales must be strictly positive".into(),
            ));
        }
        if cat_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(KernelError::InvalidParam(
                "categorical weights must be strictly positive".into(),
            ));
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(KernelError::InvalidParam(
                "signal variance must be strictly positive".into(),
            ));
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(KernelError::InvalidParam(
                "noise variance must be non-negative".into(),
            ));
        }
        Ok(KernelParams {
            lengthscales,
            cat_weights,
            signal_variance,
            omega: omega.clamp(0.0, 1.0),
            noise_variance,
            jitter: DEFAULT_JITTER,
            lambda: DEFAULT_LAMBDA,
        })
    }

    /// A sane starting point for a space with `n_x` continuous/ordinal and
    /// `n_h` categorical slots.
    pub fn default_for(n_x: usize, n_h: usize) -> Self {
        KernelParams {
            lengthscales: vec![0.5; n_x],
            cat_weights: vec![1.0; n_h],
            signal_variance: 1.0,
            omega: 0.0,
            noise_variance: 1e-2,
            jitter: DEFAULT_JITTER,
            lambda: DEFAULT_LAMBDA,
        }
    }

    /// Effective jitter, scaled by the signal variance.
    pub fn scaled_jitter(&self) -> f64 {
        self.jitter * self.signal_variance
    }
}

/// Matérn-5/2 kernel with per-dimension lengthscales, unit variance.
pub fn matern52(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> Result<f64, KernelError> {
    if x.len() != x2.len() {
        return Err(KernelError::LengthMismatch(x.len(), x2.len()));
    }
    if lengthscales.len() != x.len() {
        return Err(KernelError::ParamMismatch(lengthscales.len(), x.len()));
    }
    Ok(matern52_unchecked(x, x2, lengthscales))
}

pub(crate) fn matern52_unchecked(x: &[f64], x2: &[f64], ls: &[f64]) -> f64 {
    let r = scaled_distance(x, x2, ls);
    matern52_of_r(r)
}

fn scaled_distance(x: &[f64], x2: &[f64], ls: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for ((a, b), l) in x.iter().zip(x2).zip(ls) {
        let d = (a - b) / l;
        r2 += d * d;
    }
    r2.sqrt()
}

fn matern52_of_r(r: f64) -> f64 {
    let s = 5.0_f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Matérn-5/2 value and partial derivatives with respect to each
/// log-lengthscale, written into `grad`.
pub(crate) fn matern52_grad_unchecked(x: &[f64], x2: &[f64], ls: &[f64], grad: &mut [f64]) -> f64 {
    debug_assert_eq!(grad.len(), ls.len());
    let r = scaled_distance(x, x2, ls);
    let s = 5.0_f64.sqrt() * r;
    let e = (-s).exp();
    // d k / d log l_m = (5/3) (1 + sqrt5 r) e^{-sqrt5 r} d_m^2 / l_m^2
    let common = (5.0 / 3.0) * (1.0 + s) * e;
    for (m, g) in grad.iter_mut().enumerate() {
        let d = (x[m] - x2[m]) / ls[m];
        *g = common * d * d;
    }
    (1.0 + s + s * s / 3.0) * e
}

/// Exponentiated overlap kernel on categorical index blocks, unit variance:
/// `exp((1/d) Σ w_i δ(h_i, h'_i)) / exp((1/d) Σ w_i)`.
pub fn overlap_kernel(h: &[usize], h2: &[usize], weights: &[f64]) -> Result<f64, KernelError> {
    if h.len() != h2.len() {
        return Err(KernelError::LengthMismatch(h.len(), h2.len()));
    }
    if weights.len() != h.len() {
        return Err(KernelError::ParamMismatch(weights.len(), h.len()));
    }
    Ok(overlap_unchecked(h, h2, weights))
}

pub(crate) fn overlap_unchecked(h: &[usize], h2: &[usize], w: &[f64]) -> f64 {
    if h.is_empty() {
        return 1.0;
    }
    let d = h.len() as f64;
    let mut exponent = 0.0;
    for ((a, b), wi) in h.iter().zip(h2).zip(w) {
        if a != b {
            exponent -= wi;
        }
    }
    (exponent / d).exp()
}

/// Overlap value and partial derivatives with respect to each log-weight,
/// written into `grad`.
pub(crate) fn overlap_grad_unchecked(
    h: &[usize],
    h2: &[usize],
    w: &[f64],
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(grad.len(), w.len());
    let k = overlap_unchecked(h, h2, w);
    if h.is_empty() {
        return k;
    }
    let d = h.len() as f64;
    // d k / d log w_m = k * (w_m / d) * (delta_m - 1)
    for (m, g) in grad.iter_mut().enumerate() {
        *g = if h[m] == h2[m] { 0.0 } else { -k * w[m] / d };
    }
    k
}

/// Temporal decay `(1-ω)^{|i-j|/2}` between observation timesteps.
pub fn time_decay(i: u64, j: u64, omega: f64) -> f64 {
    let gap = i.abs_diff(j) as f64;
    if gap == 0.0 {
        return 1.0;
    }
    if omega >= 1.0 {
        return 0.0;
    }
    (1.0 - omega).powf(gap / 2.0)
}

/// Decay value and its derivative with respect to ω.
pub(crate) fn time_decay_grad(i: u64, j: u64, omega: f64) -> (f64, f64) {
    let gap = i.abs_diff(j) as f64;
    if gap == 0.0 {
        return (1.0, 0.0);
    }
    if omega >= 1.0 {
        return (0.0, 0.0);
    }
    let a = gap / 2.0;
    let base = 1.0 - omega;
    let v = base.powf(a);
    (v, -a * base.powf(a - 1.0))
}

/// Combine the spatial sub-kernels. With both blocks present this is
/// `λ·(k_x+k_h)/2 + (1-λ)·k_x·k_h`; with one block absent it degenerates to
/// the other sub-kernel alone.
fn combine(k_x: f64, k_h: f64, n_x: usize, n_h: usize, lambda: f64) -> f64 {
    if n_h == 0 {
        k_x
    } else if n_x == 0 {
        k_h
    } else {
        lambda * 0.5 * (k_x + k_h) + (1.0 - lambda) * k_x * k_h
    }
}

/// Full spatiotemporal covariance between configs `z` at timestep `i` and
/// `z2` at timestep `j`.
pub fn mixed_kernel(
    z: &ConfigVector,
    z2: &ConfigVector,
    i: u64,
    j: u64,
    params: &KernelParams,
) -> Result<f64, KernelError> {
    if !z.same_space(z2) {
        return Err(KernelError::SpaceMismatch);
    }
    if params.lengthscales.len() != z.x().len() {
        return Err(KernelError::ParamMismatch(
            params.lengthscales.len(),
            z.x().len(),
        ));
    }
    if params.cat_weights.len() != z.h().len() {
        return Err(KernelError::ParamMismatch(
            params.cat_weights.len(),
            z.h().len(),
        ));
    }
    Ok(mixed_unchecked(z, z2, i, j, params))
}

pub(crate) fn mixed_unchecked(
    z: &ConfigVector,
    z2: &ConfigVector,
    i: u64,
    j: u64,
    p: &KernelParams,
) -> f64 {
    let k_x = matern52_unchecked(z.x(), z2.x(), &p.lengthscales);
    let k_h = overlap_unchecked(z.h(), z2.h(), &p.cat_weights);
    let spatial = combine(k_x, k_h, z.x().len(), z.h().len(), p.lambda);
    p.signal_variance * spatial * time_decay(i, j, p.omega)
}

/// Per-pair covariance together with partial derivatives for every learnable
/// parameter, used by marginal-likelihood fitting.
#[derive(Debug, Clone)]
pub(crate) struct PairDerivatives {
    /// With respect to log lengthscales (one per x slot).
    pub d_log_ls: Vec<f64>,
    /// With respect to log categorical weights (one per h slot).
    pub d_log_w: Vec<f64>,
    /// With respect to ω itself.
    pub d_omega: f64,
    /// With respect to log signal variance.
    pub d_log_sv: f64,
}

pub(crate) fn mixed_grad_unchecked(
    z: &ConfigVector,
    z2: &ConfigVector,
    i: u64,
    j: u64,
    p: &KernelParams,
    scratch_x: &mut [f64],
    scratch_h: &mut [f64],
) -> PairDerivatives {
    let n_x = z.x().len();
    let n_h = z.h().len();
    let k_x = matern52_grad_unchecked(z.x(), z2.x(), &p.lengthscales, scratch_x);
    let k_h = overlap_grad_unchecked(z.h(), z2.h(), &p.cat_weights, scratch_h);
    let (decay, d_decay) = time_decay_grad(i, j, p.omega);
    let spatial = combine(k_x, k_h, n_x, n_h, p.lambda);
    let value = p.signal_variance * spatial * decay;

    // d spatial / d k_x and / d k_h
    let (ds_dkx, ds_dkh) = if n_h == 0 {
        (1.0, 0.0)
    } else if n_x == 0 {
        (0.0, 1.0)
    } else {
        (
            p.lambda * 0.5 + (1.0 - p.lambda) * k_h,
            p.lambda * 0.5 + (1.0 - p.lambda) * k_x,
        )
    };

    let mut d_log_ls = vec![0.0; n_x];
    for m in 0..n_x {
        d_log_ls[m] = p.signal_variance * decay * ds_dkx * scratch_x[m];
    }
    let mut d_log_w = vec![0.0; n_h];
    for m in 0..n_h {
        d_log_w[m] = p.signal_variance * decay * ds_dkh * scratch_h[m];
    }
    PairDerivatives {
        d_log_ls,
        d_log_w,
        d_omega: p.signal_variance * spatial * d_decay,
        d_log_sv: value,
    }
}

/// Covariance matrix over a set of timestamped observations, with
/// `jitter·signal_variance` added to the diagonal.
pub fn kernel_matrix(observations: &[TimestampedObservation], params: &KernelParams) -> DMatrix<f64> {
    let n = observations.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = mixed_unchecked(
                &observations[a].config,
                &observations[b].config,
                observations[a].timestep,
                observations[b].timestep,
                params,
            );
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    for a in 0..n {
        k[(a, a)] += params.scaled_jitter();
    }
    k
}

/// Covariances between each observation and a query config at a query
/// timestep.
pub fn cross_covariance(
    observations: &[TimestampedObservation],
    query: &ConfigVector,
    query_time: u64,
    params: &KernelParams,
) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(
        observations.len(),
        observations.iter().map(|o| {
            mixed_unchecked(&o.config, query, o.timestep, query_time, params)
        }),
    )
}
