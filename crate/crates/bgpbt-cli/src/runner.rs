//! The `run` subcommand: execute an experiment for every seed and write the
//! per-seed artifacts plus a run-level summary table.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use bgpbt::{
    regret_trace, AnalysisError, BenchmarkError, KernelParams, Objective, OracleGrid, RunOutput,
    RunSummary,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Run `f(0..n)` on up to `jobs` worker threads, preserving index order in
/// the result. Outputs are deterministic because every unit of work is
/// seeded independently; threading only changes completion order.
pub fn parallel_map<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = jobs.max(1).min(n.max(1));
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                slots.lock().expect("worker panicked holding results")[i] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|v| v.expect("every index visited"))
        .collect()
}

/// One full scheduler run from a single seed; all randomness comes from it.
pub fn run_seeded(
    sched: &bgpbt::SchedulerConfig,
    objective: &dyn Objective,
    seed: u64,
) -> Result<RunOutput, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bgpbt::run(sched, objective, &mut rng)
        .map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))
}

fn write_seed_artifacts(
    cfg: &ExperimentConfig,
    seed: u64,
    run_dir: &Path,
    output: &RunOutput,
    objective: &dyn Objective,
) -> Result<(), CliError> {
    let dir = run_dir.join(format!("seed-{seed}"));
    fs::create_dir_all(&dir)?;
    output
        .record
        .write_jsonl(BufWriter::new(File::create(dir.join("schedule.jsonl"))?))?;
    output
        .record
        .write_csv(BufWriter::new(File::create(dir.join("schedule.csv"))?))?;
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(dir.join("summary.json"))?),
        &output.summary,
    )
    .map_err(|e| CliError::Runtime(format!("seed {seed}: summary encode: {e}")))?;

    if cfg.regret.enabled {
        let space = objective.space();
        let params = KernelParams::default_for(space.n_x(), space.n_h());
        let grid = OracleGrid {
            points_per_dim: cfg.regret.points_per_dim,
        };
        match regret_trace(
            &output.record,
            objective,
            &grid,
            &params,
            cfg.scheduler.beta_delta,
        ) {
            Ok(trace) => trace
                .write_csv(BufWriter::new(File::create(dir.join("regret.csv"))?))
                .map_err(|e| CliError::Runtime(format!("seed {seed}: regret: {e}")))?,
            // Path-dependent objectives have no per-config oracle; the
            // regret file is simply not produced.
            Err(AnalysisError::Benchmark(BenchmarkError::NoOracle)) => {}
            Err(e) => return Err(CliError::Runtime(format!("seed {seed}: regret: {e}"))),
        }
    }
    Ok(())
}

pub struct SeedOutcome {
    pub seed: u64,
    pub result: Result<RunSummary, CliError>,
}

fn write_run_table(run_dir: &Path, outcomes: &[SeedOutcome]) -> Result<(), CliError> {
    let file = File::create(run_dir.join("summary.csv"))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "seed",
        "status",
        "best_return",
        "best_tick",
        "best_agent_id",
        "n_ticks",
        "n_restarts",
        "n_generations",
        "total_steps",
    ])
    .map_err(csv_err)?;
    for o in outcomes {
        match &o.result {
            Ok(s) => w
                .write_record([
                    o.seed.to_string(),
                    "ok".to_string(),
                    s.best_return.to_string(),
                    s.best_tick.to_string(),
                    s.best_agent_id.to_string(),
                    s.n_ticks.to_string(),
                    s.n_restarts.to_string(),
                    s.n_generations.to_string(),
                    s.total_steps.to_string(),
                ])
                .map_err(csv_err)?,
            Err(e) => w
                .write_record([
                    o.seed.to_string(),
                    format!("failed: {e}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])
                .map_err(csv_err)?,
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv write: {e}"))
}

pub fn cmd_run(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    run_dir: &Path,
    jobs: usize,
) -> Result<(), CliError> {
    fs::create_dir_all(run_dir)?;
    // Persist the resolved config so later tooling (schedule-data) can
    // rebuild the space and so the run is regenerable from this file alone.
    let mut resolved = cfg.clone();
    resolved.seeds = Some(seeds.to_vec());
    resolved.out = None;
    fs::write(run_dir.join("config.toml"), resolved.to_toml_string())?;

    let sched = cfg.scheduler_config();
    let outcomes: Vec<SeedOutcome> = parallel_map(seeds.len(), jobs, |i| {
        let seed = seeds[i];
        let result = cfg.build_objective().map_err(CliError::from).and_then(|o| {
            let output = run_seeded(&sched, o.as_ref(), seed)?;
            write_seed_artifacts(cfg, seed, run_dir, &output, o.as_ref())?;
            Ok(output.summary)
        });
        SeedOutcome { seed, result }
    });

    write_run_table(run_dir, &outcomes)?;
    let mut failures = 0usize;
    for o in &outcomes {
        match &o.result {
            Ok(s) => println!(
                "seed {}: best {:.6} at tick {} ({} ticks, {} restarts, {} generations, {} steps)",
                o.seed,
                s.best_return,
                s.best_tick,
                s.n_ticks,
                s.n_restarts,
                s.n_generations,
                s.total_steps
            ),
            Err(e) => {
                failures += 1;
                println!("seed {}: FAILED ({e})", o.seed);
            }
        }
    }
    println!("wrote {}", run_dir.display());
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures}/{} seeds failed; partial artifacts kept under {}",
            outcomes.len(),
            run_dir.display()
        )));
    }
    Ok(())
}
