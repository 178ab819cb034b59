//! Experiment configuration: a TOML schema that maps onto the library's
//! scheduler, objective and space types.
//!
//! The library structs stay serde-free; this module owns the file format.
//! Every scheduler field is optional and defaults to the library default, so
//! a minimal config is just an objective, a space and a seed list. Dotted
//! `--set key=value` overrides are applied to the parsed TOML document
//! before deserialization, so they can touch any field the file can.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::{env, fs};

use bgpbt::{
    AgentSimObjective, BenchmarkError, DimensionSpec, DistillationSchedule, Objective,
    OracleGrid, SchedulerConfig, SearchSpace, SimParams, SyntheticObjective, TReadySchedule,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}`: {1}")]
    Override(String, String),
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("missing required field `{0}`")]
    Missing(&'static str),
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

/// One experiment file: what to optimize, over which space, with which
/// scheduler settings, and where to put the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory; relative paths are rooted at `BGPBT_OUT` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub space: SpaceSpec,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub toggles: Toggles,
    #[serde(default)]
    pub regret: RegretSection,
}

/// Either the literal string `"canonical"` (use the objective's own space)
/// or an inline dimension list that must match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Named(String),
    Inline { dimensions: Vec<DimensionSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Continuous bowl whose optimum orbits over time.
    DriftingQuadratic {
        #[serde(default = "default_n_continuous")]
        n_continuous: usize,
        #[serde(default = "default_drift_rate")]
        drift_rate: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        world_seed: u64,
    },
    /// Two continuous dims gated by a categorical choice.
    CategoricalGated {
        #[serde(default = "default_n_categories")]
        n_categories: usize,
        #[serde(default = "default_drift_rate")]
        drift_rate: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        world_seed: u64,
    },
    /// Fixed mixed-space target, no drift.
    StationaryMixed {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        world_seed: u64,
    },
    /// Path-dependent training simulator with architecture dimensions.
    AgentSim {
        #[serde(default = "default_sim_sigma")]
        sigma: f64,
        #[serde(default = "default_sim_process_noise")]
        process_noise: f64,
    },
}

fn default_n_continuous() -> usize {
    2
}

fn default_n_categories() -> usize {
    3
}

fn default_drift_rate() -> f64 {
    0.05
}

fn default_sigma() -> f64 {
    0.05
}

fn default_sim_sigma() -> f64 {
    SimParams::default().sigma
}

fn default_sim_process_noise() -> f64 {
    SimParams::default().process_noise
}

impl ObjectiveSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ObjectiveSpec::DriftingQuadratic { .. } => "drifting-quadratic",
            ObjectiveSpec::CategoricalGated { .. } => "categorical-gated",
            ObjectiveSpec::StationaryMixed { .. } => "stationary-mixed",
            ObjectiveSpec::AgentSim { .. } => "agent-sim",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Objective>, ConfigError> {
        let objective: Box<dyn Objective> = match self {
            ObjectiveSpec::DriftingQuadratic {
                n_continuous,
                drift_rate,
                sigma,
                world_seed,
            } => Box::new(
                SyntheticObjective::drifting_quadratic(
                    *n_continuous,
                    *drift_rate,
                    *sigma,
                    *world_seed,
                )
                .map_err(objective_err)?,
            ),
            ObjectiveSpec::CategoricalGated {
                n_categories,
                drift_rate,
                sigma,
                world_seed,
            } => Box::new(
                SyntheticObjective::categorical_gated(
                    *n_categories,
                    *drift_rate,
                    *sigma,
                    *world_seed,
                )
                .map_err(objective_err)?,
            ),
            ObjectiveSpec::StationaryMixed { sigma, world_seed } => Box::new(
                SyntheticObjective::stationary_mixed(*sigma, *world_seed)
                    .map_err(objective_err)?,
            ),
            ObjectiveSpec::AgentSim {
                sigma,
                process_noise,
            } => Box::new(AgentSimObjective::new(SimParams {
                sigma: *sigma,
                process_noise: *process_noise,
                ..SimParams::default()
            })),
        };
        Ok(objective)
    }
}

fn objective_err(e: BenchmarkError) -> ConfigError {
    invalid("objective", e)
}

/// Scheduler knobs, all optional; defaults mirror the library's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub population: usize,
    pub q_percent: f64,
    pub t_max_units: u64,
    pub patience: u32,
    pub generation_units: u64,
    pub init_pool: usize,
    pub max_gp_points: usize,
    pub beta_delta: f64,
    pub fit_starts: usize,
    pub refit_starts: usize,
    pub fit_iters: usize,
    pub refit_iters: usize,
    pub n_candidates: usize,
    pub n_bo: usize,
    pub t_ready: TReadySection,
    pub distill: DistillSection,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        let lib = SchedulerConfig::default();
        SchedulerSection {
            population: lib.population,
            q_percent: lib.q_percent,
            t_max_units: lib.t_max_units,
            patience: lib.patience,
            generation_units: lib.generation_units,
            init_pool: lib.init_pool,
            max_gp_points: lib.max_gp_points,
            beta_delta: lib.beta_delta,
            fit_starts: lib.fit_starts,
            refit_starts: lib.refit_starts,
            fit_iters: lib.fit_iters,
            refit_iters: lib.refit_iters,
            n_candidates: lib.n_candidates,
            n_bo: lib.n_bo,
            t_ready: TReadySection::Constant {
                value: lib.t_ready.start,
            },
            distill: DistillSection::from(lib.distill),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TReadySection {
    Constant { value: f64 },
    Anneal { start: f64, end: f64, horizon_units: u64 },
}

impl TReadySection {
    fn to_schedule(&self) -> TReadySchedule {
        match self {
            TReadySection::Constant { value } => TReadySchedule::constant(*value),
            TReadySection::Anneal {
                start,
                end,
                horizon_units,
            } => TReadySchedule::anneal(*start, *end, *horizon_units),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub alpha_rl: f64,
    pub alpha_v: f64,
    pub alpha_pi: f64,
    pub horizon: u64,
}

impl From<DistillationSchedule> for DistillSection {
    fn from(d: DistillationSchedule) -> Self {
        DistillSection {
            alpha_rl: d.alpha_rl,
            alpha_v: d.alpha_v,
            alpha_pi: d.alpha_pi,
            horizon: d.horizon,
        }
    }
}

impl Default for DistillSection {
    fn default() -> Self {
        DistillationSchedule::default().into()
    }
}

impl DistillSection {
    fn to_schedule(&self) -> DistillationSchedule {
        DistillationSchedule {
            alpha_rl: self.alpha_rl,
            alpha_v: self.alpha_v,
            alpha_pi: self.alpha_pi,
            horizon: self.horizon,
        }
    }
}

/// Which scheduler mechanisms are active. With `nas` off, architecture
/// dimensions stay pinned at the space's declared defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub exploit: bool,
    pub bo: bool,
    pub trust_region: bool,
    pub nas: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            exploit: true,
            bo: true,
            trust_region: true,
            nas: true,
        }
    }
}

/// Regret-trace output settings; the trace is skipped silently for
/// path-dependent objectives that have no per-config ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretSection {
    pub enabled: bool,
    pub points_per_dim: usize,
}

impl Default for RegretSection {
    fn default() -> Self {
        RegretSection {
            enabled: true,
            points_per_dim: OracleGrid::default().points_per_dim,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn from_toml_with_overrides(
        text: &str,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for spec in overrides {
            apply_override(&mut doc, spec)?;
        }
        let text = toml::to_string(&doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Build the objective and check the declared space against its
    /// canonical one; the run always uses the objective's own space.
    pub fn build_objective(&self) -> Result<Box<dyn Objective>, ConfigError> {
        let objective = self.objective.build()?;
        self.check_space(objective.space())?;
        Ok(objective)
    }

    fn check_space(&self, canonical: &Arc<SearchSpace>) -> Result<(), ConfigError> {
        match &self.space {
            SpaceSpec::Named(name) if name == "canonical" => Ok(()),
            SpaceSpec::Named(name) => Err(invalid(
                "space",
                format!("unknown space `{name}`; use \"canonical\" or an inline dimension list"),
            )),
            SpaceSpec::Inline { dimensions } => {
                let declared =
                    SearchSpace::new(dimensions.clone()).map_err(|e| invalid("space", e))?;
                if declared.dimensions() == canonical.dimensions() {
                    Ok(())
                } else {
                    Err(invalid(
                        "space",
                        format!(
                            "does not match the objective's canonical space \
                             (`validate --print-space` shows the space for `{}`)",
                            self.objective.kind_name()
                        ),
                    ))
                }
            }
        }
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        let s = &self.scheduler;
        SchedulerConfig {
            population: s.population,
            q_percent: s.q_percent,
            t_ready: s.t_ready.to_schedule(),
            t_max_units: s.t_max_units,
            patience: s.patience,
            generation_units: s.generation_units,
            init_pool: s.init_pool,
            max_gp_points: s.max_gp_points,
            beta_delta: s.beta_delta,
            fit_starts: s.fit_starts,
            refit_starts: s.refit_starts,
            fit_iters: s.fit_iters,
            refit_iters: s.refit_iters,
            n_candidates: s.n_candidates,
            n_bo: s.n_bo,
            distill: s.distill.to_schedule(),
            enable_exploit: self.toggles.exploit,
            enable_bo: self.toggles.bo,
            enable_trust_region: self.toggles.trust_region,
            enable_nas: self.toggles.nas,
            ..SchedulerConfig::default()
        }
    }

    /// Command-line seeds win over the config's list; one of the two must
    /// be present, and repeats are rejected because each seed names an
    /// output directory.
    pub fn resolved_seeds(&self, cli_seeds: &[u64]) -> Result<Vec<u64>, ConfigError> {
        let seeds = if cli_seeds.is_empty() {
            self.seeds.clone().unwrap_or_default()
        } else {
            cli_seeds.to_vec()
        };
        if seeds.is_empty() {
            return Err(ConfigError::Missing("seeds"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds", "duplicate seed"));
        }
        Ok(seeds)
    }

    /// Precedence: `--out`, then the config's `out` (rooted at `BGPBT_OUT`
    /// when relative and the variable is set), then `BGPBT_OUT` itself,
    /// then the current directory.
    pub fn resolve_out(&self, cli_out: Option<&Path>) -> PathBuf {
        if let Some(path) = cli_out {
            return path.to_path_buf();
        }
        let root = env::var_os("BGPBT_OUT").map(PathBuf::from);
        match (&self.out, root) {
            (Some(out), Some(root)) => {
                let out = Path::new(out);
                if out.is_absolute() {
                    out.to_path_buf()
                } else {
                    root.join(out)
                }
            }
            (Some(out), None) => PathBuf::from(out),
            (None, Some(root)) => root,
            (None, None) => PathBuf::from("."),
        }
    }
}

/// Apply one `key.path=value` override to the parsed document. The value is
/// parsed as a TOML literal, falling back to a plain string so that
/// `--set objective.kind=agent-sim` needs no inner quotes.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let Some((path, raw)) = spec.split_once('=') else {
        return Err(ConfigError::Override(
            spec.to_string(),
            "expected KEY=VALUE".to_string(),
        ));
    };
    let path = path.trim();
    let segments: Vec<&str> = path.split('.').collect();
    if path.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::Override(
            spec.to_string(),
            "empty key segment".to_string(),
        ));
    }
    let value = parse_literal(raw.trim());
    let mut table = doc;
    for seg in &segments[..segments.len() - 1] {
        let entry = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            ConfigError::Override(path.to_string(), format!("`{seg}` is not a table"))
        })?;
    }
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("wrapped key parses back"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seeds = [0, 1]
        space = "canonical"

        [objective]
        kind = "stationary-mixed"
        sigma = 0.1
    "#;

    #[test]
    fn minimal_config_fills_library_defaults() {
        let cfg = ExperimentConfig::from_toml_with_overrides(MINIMAL, &[]).unwrap();
        let sched = cfg.scheduler_config();
        let lib = SchedulerConfig::default();
        assert_eq!(sched.population, lib.population);
        assert_eq!(sched.t_max_units, lib.t_max_units);
        assert_eq!(sched.distill.horizon, lib.distill.horizon);
        assert!(sched.enable_nas);
        assert_eq!(cfg.resolved_seeds(&[]).unwrap(), vec![0, 1]);
        cfg.build_objective().unwrap();
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ExperimentConfig::from_toml_with_overrides(MINIMAL, &[]).unwrap();
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_with_overrides(&text, &[]).unwrap();
        assert_eq!(cfg, back);

        let with_inline = r#"
            seeds = [3]

            [space]
            [[space.dimensions]]
            kind = "continuous"
            name = "x0"
            min = 0.0
            max = 1.0

            [[space.dimensions]]
            kind = "continuous"
            name = "x1"
            min = 0.0
            max = 1.0

            [objective]
            kind = "drifting-quadratic"

            [scheduler]
            population = 4

            [scheduler.t_ready]
            kind = "anneal"
            start = 4.0
            end = 1.0
            horizon_units = 20
        "#;
        let cfg = ExperimentConfig::from_toml_with_overrides(with_inline, &[]).unwrap();
        let back =
            ExperimentConfig::from_toml_with_overrides(&cfg.to_toml_string(), &[]).unwrap();
        assert_eq!(cfg, back);
        cfg.build_objective().unwrap();
    }

    #[test]
    fn missing_space_is_named_in_the_error() {
        let text = r#"
            seeds = [0]
            [objective]
            kind = "stationary-mixed"
        "#;
        let err = ExperimentConfig::from_toml_with_overrides(text, &[]).unwrap_err();
        assert!(err.to_string().contains("space"), "{err}");
    }

    #[test]
    fn overrides_reach_nested_fields_and_parse_literals() {
        let overrides = vec![
            "scheduler.population=4".to_string(),
            "scheduler.t_ready.kind=anneal".to_string(),
            "scheduler.t_ready.start=2.0".to_string(),
            "scheduler.t_ready.end=1.0".to_string(),
            "scheduler.t_ready.horizon_units=10".to_string(),
            "toggles.nas=false".to_string(),
            "seeds=[7, 8]".to_string(),
        ];
        let cfg = ExperimentConfig::from_toml_with_overrides(MINIMAL, &overrides).unwrap();
        assert_eq!(cfg.scheduler.population, 4);
        assert_eq!(
            cfg.scheduler.t_ready,
            TReadySection::Anneal {
                start: 2.0,
                end: 1.0,
                horizon_units: 10
            }
        );
        assert!(!cfg.toggles.nas);
        assert_eq!(cfg.seeds, Some(vec![7, 8]));

        let err = ExperimentConfig::from_toml_with_overrides(MINIMAL, &["nope".to_string()])
            .unwrap_err();
        assert!(err.to_string().contains("KEY=VALUE"), "{err}");
    }

    #[test]
    fn mismatched_inline_space_is_rejected() {
        let text = r#"
            seeds = [0]

            [space]
            [[space.dimensions]]
            kind = "continuous"
            name = "wrong"
            min = 0.0
            max = 1.0

            [[space.dimensions]]
            kind = "continuous"
            name = "alsowrong"
            min = 0.0
            max = 1.0

            [objective]
            kind = "stationary-mixed"
        "#;
        let cfg = ExperimentConfig::from_toml_with_overrides(text, &[]).unwrap();
        let Err(err) = cfg.build_objective() else {
            panic!("expected a space mismatch");
        };
        assert!(err.to_string().contains("canonical space"), "{err}");
    }

    #[test]
    fn matching_inline_space_is_accepted() {
        let canonical = ObjectiveSpec::StationaryMixed {
            sigma: 0.1,
            world_seed: 0,
        }
        .build()
        .unwrap();
        let dims_toml = canonical
            .space()
            .to_toml_string()
            .replace("[[dimensions]]", "[[space.dimensions]]");
        let text =
            format!("seeds = [0]\n\n[objective]\nkind = \"stationary-mixed\"\n\n{dims_toml}");
        let cfg = ExperimentConfig::from_toml_with_overrides(&text, &[]).unwrap();
        cfg.build_objective().unwrap();
    }

    #[test]
    fn seed_rules_reject_empty_and_duplicates() {
        let mut cfg = ExperimentConfig::from_toml_with_overrides(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.resolved_seeds(&[5]).unwrap(), vec![5]);
        cfg.seeds = None;
        assert!(matches!(
            cfg.resolved_seeds(&[]),
            Err(ConfigError::Missing("seeds"))
        ));
        assert!(cfg.resolved_seeds(&[1, 1]).is_err());
    }

    #[test]
    fn bad_objective_params_name_the_field() {
        let cfg = ExperimentConfig::from_toml_with_overrides(
            MINIMAL,
            &[
                "objective.kind=categorical-gated".into(),
                "objective.n_categories=1".into(),
            ],
        )
        .unwrap();
        let Err(err) = cfg.build_objective() else {
            panic!("expected an objective error");
        };
        assert!(err.to_string().contains("objective"), "{err}");
    }
}
