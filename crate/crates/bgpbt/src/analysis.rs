//! Post-hoc analysis quantities: information gain, the UCB exploration
//! schedule, rank correlation, and regret traces against brute-force
//! oracles.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::benchmark::{brute_force_optimum, BenchmarkError, Objective, OracleGrid};
use crate::kernel::KernelParams;
use crate::scheduler::ScheduleRecord;
use crate::space::TimestampedObservation;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrix is not positive semi-definite")]
    NotPsd,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("schedule record is empty")]
    EmptyRecord,
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Information gain `½·log det(I + σ⁻²K)` of a set of observations whose
/// covariance matrix is `k`.
pub fn info_gain(k: &DMatrix<f64>, sigma2: f64) -> Result<f64, AnalysisError> {
    let n = k.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let sigma2 = sigma2.max(1e-12);
    let m = DMatrix::identity(n, n) + k / sigma2;
    let chol = m.cholesky().ok_or(AnalysisError::NotPsd)?;
    // ½ log det M = Σ log diag(L)
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum())
}

/// Information gain of a dataset under the given kernel parameters, using
/// the model's own noise variance.
pub fn dataset_info_gain(
    observations: &[TimestampedObservation],
    params: &KernelParams,
) -> Result<f64, AnalysisError> {
    let k = crate::kernel::kernel_matrix(observations, params);
    info_gain(&k, params.noise_variance)
}

/// The UCB exploration weight at synchronization tick `tick` (clamped to
/// ≥ 1) for a `dims`-dimensional space and confidence level `delta`.
pub fn beta_schedule(tick: u64, dims: usize, delta: f64) -> f64 {
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    let t = tick.max(1) as f64;
    2.0 * (PI * PI * t * t / (3.0 * delta)).ln() + 2.0 * dims as f64 * (t * t).ln()
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either series is shorter than 2 or has zero rank variance.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the average rank of their block
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Per-tick regret bookkeeping against a noiseless oracle.
#[derive(Debug, Clone, Default)]
pub struct RegretTrace {
    pub ticks: Vec<u64>,
    /// Oracle optimum `f_t(z**)` per tick.
    pub oracle: Vec<f64>,
    /// Best noiseless value among the population's configs per tick.
    pub best_return: Vec<f64>,
    /// `max(0, oracle − best_return)`; clamping absorbs the oracle grid's
    /// own discretization error.
    pub instantaneous: Vec<f64>,
    /// Running sum of instantaneous regrets.
    pub cumulative: Vec<f64>,
    pub beta: Vec<f64>,
    pub info_gain: Vec<f64>,
}

impl RegretTrace {
    /// Build a trace from parallel oracle/achieved series (tick index
    /// starting at 1).
    pub fn from_series(oracle: &[f64], best: &[f64]) -> Result<Self, AnalysisError> {
        if oracle.len() != best.len() {
            return Err(AnalysisError::LengthMismatch(oracle.len(), best.len()));
        }
        let mut trace = RegretTrace::default();
        let mut cum = 0.0;
        for (i, (&o, &b)) in oracle.iter().zip(best).enumerate() {
            let r = (o - b).max(0.0);
            cum += r;
            trace.ticks.push(i as u64 + 1);
            trace.oracle.push(o);
            trace.best_return.push(b);
            trace.instantaneous.push(r);
            trace.cumulative.push(cum);
            trace.beta.push(0.0);
            trace.info_gain.push(0.0);
        }
        Ok(trace)
    }

    /// Average regret `R_t / t` per tick.
    pub fn average(&self) -> Vec<f64> {
        self.cumulative
            .iter()
            .zip(&self.ticks)
            .map(|(&r, &t)| r / t.max(1) as f64)
            .collect()
    }

    /// Comma-separated table: tick, oracle, best_return, instantaneous,
    /// cumulative, beta, info_gain.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "tick",
            "oracle",
            "best_return",
            "instantaneous",
            "cumulative",
            "beta",
            "info_gain",
        ])
        .map_err(csv_io)?;
        for i in 0..self.ticks.len() {
            out.write_record([
                self.ticks[i].to_string(),
                self.oracle[i].to_string(),
                self.best_return[i].to_string(),
                self.instantaneous[i].to_string(),
                self.cumulative[i].to_string(),
                self.beta[i].to_string(),
                self.info_gain[i].to_string(),
            ])
            .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> AnalysisError {
    AnalysisError::Io(std::io::Error::other(e))
}

/// Score a run's schedule against the objective's brute-force oracle:
/// per tick, the oracle optimum versus the best noiseless value among the
/// population's configs, with the β schedule and the cumulative information
/// gain of the observations ingested so far.
pub fn regret_trace(
    record: &ScheduleRecord,
    objective: &dyn Objective,
    grid: &OracleGrid,
    params: &KernelParams,
    delta: f64,
) -> Result<RegretTrace, AnalysisError> {
    let rows = record.rows();
    if rows.is_empty() {
        return Err(AnalysisError::EmptyRecord);
    }
    let mut ticks: Vec<u64> = rows.iter().map(|r| r.tick).collect();
    ticks.sort_unstable();
    ticks.dedup();

    let dims = objective.space().n_dims();
    let mut trace = RegretTrace::default();
    let mut cum = 0.0;
    let mut obs: Vec<TimestampedObservation> = Vec::new();
    for &t in &ticks {
        let (_, oracle) = brute_force_optimum(objective, grid, t)?;
        let mut best = f64::NEG_INFINITY;
        for row in rows.iter().filter(|r| r.tick == t) {
            if let Some(v) = objective.ground_truth(&row.config, t)? {
                best = best.max(v);
            }
            if row.ret.is_finite() {
                obs.push(TimestampedObservation {
                    config: row.config.clone(),
                    timestep: t,
                    value: row.ret,
                });
            }
        }
        let r = (oracle - best).max(0.0);
        cum += r;
        trace.ticks.push(t);
        trace.oracle.push(oracle);
        trace.best_return.push(best);
        trace.instantaneous.push(r);
        trace.cumulative.push(cum);
        trace.beta.push(beta_schedule(t.max(1), dims, delta));
        trace.info_gain.push(dataset_info_gain(&obs, params)?);
    }
    Ok(trace)
}
