//! The `schedule-data` subcommand: reduce a finished run directory to
//! per-dimension time series of the best agent's decoded config.
//!
//! For each tick the row with the highest finite return is taken per seed,
//! then dimensions are aggregated across seeds into mean and standard error.
//! Ordinal dimensions use their actual values, categorical dimensions their
//! label index; bound columns come from the space declaration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use bgpbt::DimensionSpec;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Per-seed, per-tick decoded config of the best row, in dimension order.
type BestRows = BTreeMap<u64, Vec<f64>>;

fn runtime(msg: impl ToString) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn seed_schedule_files(run_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(run_dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(rest) = name.to_string_lossy().strip_prefix("seed-").map(String::from) else {
            continue;
        };
        let Ok(seed) = rest.parse::<u64>() else {
            continue;
        };
        let file = entry.path().join("schedule.jsonl");
        if file.is_file() {
            found.push((seed, file));
        }
    }
    found.sort_by_key(|(seed, _)| *seed);
    if found.is_empty() {
        return Err(runtime(format!(
            "no seed-*/schedule.jsonl under {}",
            run_dir.display()
        )));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Numeric view of one decoded dimension value.
fn numeric_value(
    dim: &DimensionSpec,
    value: &serde_json::Value,
) -> Result<f64, CliError> {
    match dim {
        DimensionSpec::Continuous { name, .. } | DimensionSpec::Ordinal { name, .. } => value
            .as_f64()
            .ok_or_else(|| runtime(format!("dimension `{name}`: expected a number"))),
        DimensionSpec::Categorical { name, labels, .. } => {
            let label = value
                .as_str()
                .ok_or_else(|| runtime(format!("dimension `{name}`: expected a label")))?;
            labels
                .iter()
                .position(|l| l == label)
                .map(|i| i as f64)
                .ok_or_else(|| runtime(format!("dimension `{name}`: unknown label `{label}`")))
        }
    }
}

fn bounds(dim: &DimensionSpec) -> (f64, f64) {
    match dim {
        DimensionSpec::Continuous { min, max, .. } => (*min, *max),
        DimensionSpec::Ordinal { values, .. } => (
            *values.first().expect("ordinal has values"),
            *values.last().expect("ordinal has values"),
        ),
        DimensionSpec::Categorical { labels, .. } => (0.0, (labels.len() - 1) as f64),
    }
}

/// Best finite-return row per tick; ties keep the first row, which is the
/// lowest slot because rows are written in slot order.
fn best_rows_per_tick(file: &Path, dims: &[DimensionSpec]) -> Result<BestRows, CliError> {
    let reader = BufReader::new(File::open(file)?);
    let mut best: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: serde_json::Value = serde_json::from_str(&line).map_err(|e| {
            runtime(format!("{}:{}: bad row: {e}", file.display(), lineno + 1))
        })?;
        let Some(ret) = row["return"].as_f64().filter(|r| r.is_finite()) else {
            continue;
        };
        let tick = row["tick"]
            .as_u64()
            .ok_or_else(|| runtime(format!("{}:{}: missing tick", file.display(), lineno + 1)))?;
        if best.get(&tick).is_none_or(|(r, _)| ret > *r) {
            let config = &row["config"];
            let mut values = Vec::with_capacity(dims.len());
            for dim in dims {
                let v = config.get(dim.name()).ok_or_else(|| {
                    runtime(format!(
                        "{}:{}: missing dimension `{}`",
                        file.display(),
                        lineno + 1,
                        dim.name()
                    ))
                })?;
                values.push(numeric_value(dim, v)?);
            }
            best.insert(tick, (ret, values));
        }
    }
    Ok(best.into_iter().map(|(t, (_, v))| (t, v)).collect())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_schedule_data(
    run_dir: &Path,
    out: Option<&Path>,
    dim_filter: &[String],
) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&run_dir.join("config.toml"), &[])?;
    let objective = cfg.build_objective()?;
    let space = objective.space();
    let dims = space.dimensions();
    for want in dim_filter {
        if !dims.iter().any(|d| d.name() == want) {
            return Err(CliError::Config(format!(
                "field `dim`: unknown dimension `{want}`"
            )));
        }
    }

    let per_seed: Vec<BestRows> = seed_schedule_files(run_dir)?
        .iter()
        .map(|f| best_rows_per_tick(f, dims))
        .collect::<Result<_, _>>()?;
    let mut ticks: Vec<u64> = per_seed
        .iter()
        .flat_map(|m| m.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    ticks.sort_unstable();

    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("schedule-data"));
    fs::create_dir_all(&out_dir)?;

    let mut written = 0usize;
    for (d, dim) in dims.iter().enumerate() {
        if !dim_filter.is_empty() && !dim_filter.iter().any(|w| w == dim.name()) {
            continue;
        }
        let (lower, upper) = bounds(dim);
        let file = File::create(out_dir.join(format!("{}.csv", sanitize(dim.name()))))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["tick", "mean", "sem", "lower_bound", "upper_bound"])
            .map_err(|e| runtime(format!("csv write: {e}")))?;
        for &tick in &ticks {
            let samples: Vec<f64> = per_seed
                .iter()
                .filter_map(|m| m.get(&tick))
                .map(|values| values[d])
                .collect();
            if samples.is_empty() {
                continue;
            }
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let sem = if samples.len() < 2 {
                0.0
            } else {
                let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (samples.len() - 1) as f64;
                (var / n).sqrt()
            };
            w.write_record([
                tick.to_string(),
                mean.to_string(),
                sem.to_string(),
                lower.to_string(),
                upper.to_string(),
            ])
            .map_err(|e| runtime(format!("csv write: {e}")))?;
        }
        w.flush()?;
        written += 1;
    }
    println!(
        "wrote {written} dimension file(s) for {} seed(s) to {}",
        per_seed.len(),
        out_dir.display()
    );
    Ok(())
}
