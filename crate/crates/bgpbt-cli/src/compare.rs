//! The `compare` subcommand: run four method variants on paired seeds with
//! the same unit budget and tabulate final best returns.
//!
//! Variants, weakest to strongest mechanism set:
//! - `random`: truncation exploit with uniform explore
//! - `surrogate`: exploit with model-guided explore
//! - `surrogate-tr`: adds the trust region and restarts
//! - `full`: adds generational architecture search
//!
//! Because distillation debits the shared unit clock, equal `t_max_units`
//! means near-equal total objective steps for every variant.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use bgpbt::SchedulerConfig;

use crate::config::ExperimentConfig;
use crate::runner::{parallel_map, run_seeded};
use crate::CliError;

const METHODS: [&str; 4] = ["random", "surrogate", "surrogate-tr", "full"];

fn method_config(base: &SchedulerConfig, method: &str) -> SchedulerConfig {
    let cfg = base.clone();
    match method {
        "random" => cfg.random_explore(),
        "surrogate" => cfg.surrogate_explore_only(),
        "surrogate-tr" => SchedulerConfig {
            enable_exploit: true,
            enable_bo: true,
            enable_trust_region: true,
            enable_nas: false,
            ..cfg
        },
        "full" => SchedulerConfig {
            enable_exploit: true,
            enable_bo: true,
            enable_trust_region: true,
            enable_nas: true,
            ..cfg
        },
        other => unreachable!("unknown method `{other}`"),
    }
}

struct Cell {
    method: &'static str,
    seed: u64,
    result: Result<(f64, u64), CliError>,
}

fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn cmd_compare(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out_dir: &Path,
    jobs: usize,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    let base = cfg.scheduler_config();
    let tasks: Vec<(&'static str, u64)> = METHODS
        .iter()
        .flat_map(|m| seeds.iter().map(move |&s| (*m, s)))
        .collect();

    let cells: Vec<Cell> = parallel_map(tasks.len(), jobs, |i| {
        let (method, seed) = tasks[i];
        let result = cfg.build_objective().map_err(CliError::from).and_then(|o| {
            let sched = method_config(&base, method);
            let output = run_seeded(&sched, o.as_ref(), seed)?;
            Ok((output.summary.best_return, output.summary.total_steps))
        });
        Cell {
            method,
            seed,
            result,
        }
    });

    // Long-form table, one row per (method, seed).
    let file = File::create(out_dir.join("compare.csv"))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["method", "seed", "status", "best_return", "total_steps"])
        .map_err(csv_err)?;
    for c in &cells {
        match &c.result {
            Ok((best, steps)) => w
                .write_record([
                    c.method.to_string(),
                    c.seed.to_string(),
                    "ok".to_string(),
                    best.to_string(),
                    steps.to_string(),
                ])
                .map_err(csv_err)?,
            Err(e) => w
                .write_record([
                    c.method.to_string(),
                    c.seed.to_string(),
                    format!("failed: {e}"),
                    String::new(),
                    String::new(),
                ])
                .map_err(csv_err)?,
        }
    }
    w.flush()?;

    // Aggregate per method over seeds with a finite best return.
    let mut summary_rows = Vec::new();
    for method in METHODS {
        let best: Vec<f64> = cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.result.as_ref().ok())
            .map(|(b, _)| *b)
            .filter(|b| b.is_finite())
            .collect();
        let steps: Vec<f64> = cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.result.as_ref().ok())
            .map(|(_, s)| *s as f64)
            .collect();
        let (mean, sem) = mean_and_sem(&best);
        let (steps_mean, _) = mean_and_sem(&steps);
        summary_rows.push((method, best.len(), mean, sem, steps_mean));
    }

    let file = File::create(out_dir.join("compare_summary.csv"))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["method", "n", "mean_best_return", "sem", "mean_total_steps"])
        .map_err(csv_err)?;
    for (method, n, mean, sem, steps) in &summary_rows {
        w.write_record([
            method.to_string(),
            n.to_string(),
            mean.to_string(),
            sem.to_string(),
            steps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    // Stdout table: methods as columns, mean plus/minus one sem.
    let width = 22;
    let mut header = format!("{:<14}", "metric");
    for (method, ..) in &summary_rows {
        header.push_str(&format!("{method:<width$}"));
    }
    println!("{header}");
    let mut line = format!("{:<14}", "best_return");
    for (_, _, mean, sem, _) in &summary_rows {
        line.push_str(&format!("{:<width$}", format!("{mean:.4} ± {sem:.4}")));
    }
    println!("{line}");
    let mut line = format!("{:<14}", "total_steps");
    for (_, _, _, _, steps) in &summary_rows {
        line.push_str(&format!("{:<width$}", format!("{steps:.0}")));
    }
    println!("{line}");
    println!("wrote {}", out_dir.display());

    let failures = cells.iter().filter(|c| c.result.is_err()).count();
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures}/{} runs failed; partial artifacts kept under {}",
            cells.len(),
            out_dir.display()
        )));
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv write: {e}"))
}
