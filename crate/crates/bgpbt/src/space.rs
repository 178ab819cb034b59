//! Mixed search spaces: continuous, ordinal and categorical dimensions with
//! encoding to and from a normalized internal representation.
//!
//! Continuous and ordinal dimensions are normalized to `[0, 1]` (ordinals by
//! rank, so adjacency is a uniform step), categoricals to an index. The
//! normalized continuous/ordinal entries form the `x` block of a
//! [`ConfigVector`], categorical indices form the `h` block.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("dimension `{0}`: lower bound {1} must be strictly less than upper bound {2}")]
    InvalidBounds(String, f64, f64),
    #[error("dimension `{0}`: log scale requires strictly positive bounds")]
    LogScaleBounds(String),
    #[error("dimension `{0}`: ordinal values must be strictly increasing")]
    NonIncreasingOrdinal(String),
    #[error("dimension `{0}`: needs at least two values/labels, got {1}")]
    TooFewChoices(String, usize),
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("missing dimension `{0}`")]
    MissingDimension(String),
    #[error("dimension `{name}`: value {value} outside [{min}, {max}]")]
    OutOfBounds {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("dimension `{0}`: value {1} is not in the ordinal list")]
    NotInList(String, f64),
    #[error("dimension `{0}`: unknown label `{1}`")]
    UnknownLabel(String, String),
    #[error("dimension `{0}`: expected a {1} value")]
    WrongValueType(String, &'static str),
    #[error("space must contain at least one dimension")]
    Empty,
    #[error("config does not belong to this space")]
    SpaceMismatch,
    #[error("failed to parse space definition: {0}")]
    Parse(String),
}

/// Scale applied to a continuous dimension before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// One dimension of a mixed search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DimensionSpec {
    Continuous {
        name: String,
        min: f64,
        max: f64,
        #[serde(default)]
        scale: Scale,
        /// Architecture dimension (part of the Y block).
        #[serde(default, skip_serializing_if = "is_false")]
        arch: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<f64>,
    },
    Ordinal {
        name: String,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "is_false")]
        arch: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<f64>,
    },
    Categorical {
        name: String,
        labels: Vec<String>,
        #[serde(default, skip_serializing_if = "is_false")]
        arch: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<String>,
    },
}

fn is_false(b: &bool) -> bool {
    !b
}

impl DimensionSpec {
    pub fn name(&self) -> &str {
        match self {
            DimensionSpec::Continuous { name, .. }
            | DimensionSpec::Ordinal { name, .. }
            | DimensionSpec::Categorical { name, .. } => name,
        }
    }

    pub fn is_arch(&self) -> bool {
        match self {
            DimensionSpec::Continuous { arch, .. }
            | DimensionSpec::Ordinal { arch, .. }
            | DimensionSpec::Categorical { arch, .. } => *arch,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, DimensionSpec::Categorical { .. })
    }

    pub fn is_ordinal(&self) -> bool {
        matches!(self, DimensionSpec::Ordinal { .. })
    }

    fn validate(&self) -> Result<(), SpaceError> {
        match self {
            DimensionSpec::Continuous {
                name,
                min,
                max,
                scale,
                ..
            } => {
                if !(min < max) {
                    return Err(SpaceError::InvalidBounds(name.clone(), *min, *max));
                }
                if *scale == Scale::Log && *min <= 0.0 {
                    return Err(SpaceError::LogScaleBounds(name.clone()));
                }
                Ok(())
            }
            DimensionSpec::Ordinal { name, values, .. } => {
                if values.len() < 2 {
                    return Err(SpaceError::TooFewChoices(name.clone(), values.len()));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SpaceError::NonIncreasingOrdinal(name.clone()));
                }
                Ok(())
            }
            DimensionSpec::Categorical { name, labels, .. } => {
                if labels.len() < 2 {
                    return Err(SpaceError::TooFewChoices(name.clone(), labels.len()));
                }
                Ok(())
            }
        }
    }
}

/// A raw (decoded) hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Float(f64),
    Str(String),
}

impl RawValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            RawValue::Float(v) => Some(*v),
            RawValue::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            RawValue::Str(s) => Some(s),
            RawValue::Float(_) => None,
        }
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Float(v) => write!(f, "{v}"),
            RawValue::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for RawValue {
    fn from(v: f64) -> Self {
        RawValue::Float(v)
    }
}

impl From<&str> for RawValue {
    fn from(s: &str) -> Self {
        RawValue::Str(s.to_owned())
    }
}

/// Slot metadata for one entry of the continuous/ordinal `x` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XSlotKind {
    Continuous,
    /// Ordinal with this many ranks.
    Ordinal(usize),
}

/// A mixed search space.
///
/// Dimension declaration order is preserved; the `x` block collects the
/// continuous and ordinal dimensions in that order, the `h` block the
/// categorical ones.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct SearchSpace {
    dimensions: Vec<DimensionSpec>,
    #[serde(skip)]
    x_dims: Vec<usize>,
    #[serde(skip)]
    h_dims: Vec<usize>,
}

impl PartialEq for SearchSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dimensions == other.dimensions
    }
}

#[derive(Deserialize)]
struct SpaceFile {
    dimensions: Vec<DimensionSpec>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<DimensionSpec>) -> Result<Arc<Self>, SpaceError> {
        if dimensions.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &dimensions {
            d.validate()?;
            if !seen.insert(d.name().to_owned()) {
                return Err(SpaceError::DuplicateName(d.name().to_owned()));
            }
        }
        let mut x_dims = Vec::new();
        let mut h_dims = Vec::new();
        for (i, d) in dimensions.iter().enumerate() {
            if d.is_categorical() {
                h_dims.push(i);
            } else {
                x_dims.push(i);
            }
        }
        Ok(Arc::new(SearchSpace {
            dimensions,
            x_dims,
            h_dims,
        }))
    }

    /// Parse a space definition from a TOML document with a `[[dimensions]]`
    /// array of tables (`kind`, `name`, `min`, `max`, `scale`, `values`,
    /// `labels` fields).
    pub fn from_toml_str(s: &str) -> Result<Arc<Self>, SpaceError> {
        let file: SpaceFile = toml::from_str(s).map_err(|e| SpaceError::Parse(e.to_string()))?;
        SearchSpace::new(file.dimensions)
    }

    pub fn to_toml_string(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            dimensions: &'a [DimensionSpec],
        }
        toml::to_string(&Out {
            dimensions: &self.dimensions,
        })
        .expect("space serializes")
    }

    pub fn dimensions(&self) -> &[DimensionSpec] {
        &self.dimensions
    }

    /// Number of continuous/ordinal slots.
    pub fn n_x(&self) -> usize {
        self.x_dims.len()
    }

    /// Number of categorical slots.
    pub fn n_h(&self) -> usize {
        self.h_dims.len()
    }

    pub fn n_dims(&self) -> usize {
        self.dimensions.len()
    }

    pub fn x_dim(&self, slot: usize) -> &DimensionSpec {
        &self.dimensions[self.x_dims[slot]]
    }

    pub fn h_dim(&self, slot: usize) -> &DimensionSpec {
        &self.dimensions[self.h_dims[slot]]
    }

    pub fn x_slot_kind(&self, slot: usize) -> XSlotKind {
        match self.x_dim(slot) {
            DimensionSpec::Continuous { .. } => XSlotKind::Continuous,
            DimensionSpec::Ordinal { values, .. } => XSlotKind::Ordinal(values.len()),
            DimensionSpec::Categorical { .. } => unreachable!("x slot cannot be categorical"),
        }
    }

    /// Cardinality of categorical slot `slot`.
    pub fn h_cardinality(&self, slot: usize) -> usize {
        match self.h_dim(slot) {
            DimensionSpec::Categorical { labels, .. } => labels.len(),
            _ => unreachable!("h slot is categorical"),
        }
    }

    /// True where the x slot belongs to the architecture block.
    pub fn x_arch_mask(&self) -> Vec<bool> {
        self.x_dims
            .iter()
            .map(|&i| self.dimensions[i].is_arch())
            .collect()
    }

    /// True where the h slot belongs to the architecture block.
    pub fn h_arch_mask(&self) -> Vec<bool> {
        self.h_dims
            .iter()
            .map(|&i| self.dimensions[i].is_arch())
            .collect()
    }

    pub fn has_arch_dims(&self) -> bool {
        self.dimensions.iter().any(|d| d.is_arch())
    }

    /// The architecture sub-space (dimensions flagged `arch`), if any.
    pub fn arch_subspace(&self) -> Option<Arc<SearchSpace>> {
        let dims: Vec<_> = self
            .dimensions
            .iter()
            .filter(|d| d.is_arch())
            .cloned()
            .collect();
        if dims.is_empty() {
            None
        } else {
            Some(SearchSpace::new(dims).expect("arch dims validated with parent space"))
        }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.name() == name)
    }

    /// Encode raw per-dimension values into a normalized [`ConfigVector`].
    pub fn encode(
        self: &Arc<Self>,
        raw: &BTreeMap<String, RawValue>,
    ) -> Result<ConfigVector, SpaceError> {
        for name in raw.keys() {
            if self.find(name).is_none() {
                return Err(SpaceError::UnknownDimension(name.clone()));
            }
        }
        let mut x = Vec::with_capacity(self.n_x());
        let mut h = Vec::with_capacity(self.n_h());
        for &i in &self.x_dims {
            let dim = &self.dimensions[i];
            let val = raw
                .get(dim.name())
                .ok_or_else(|| SpaceError::MissingDimension(dim.name().to_owned()))?;
            x.push(encode_x(dim, val)?);
        }
        for &i in &self.h_dims {
            let dim = &self.dimensions[i];
            let val = raw
                .get(dim.name())
                .ok_or_else(|| SpaceError::MissingDimension(dim.name().to_owned()))?;
            h.push(encode_h(dim, val)?);
        }
        Ok(ConfigVector {
            space: Arc::clone(self),
            x,
            h,
        })
    }

    /// Sample a configuration uniformly in normalized space: continuous
    /// entries uniform on `[0, 1]`, ordinals a uniform rank, categoricals a
    /// uniform index.
    pub fn random_config<R: Rng + ?Sized>(self: &Arc<Self>, rng: &mut R) -> ConfigVector {
        let mut x = Vec::with_capacity(self.n_x());
        for slot in 0..self.n_x() {
            match self.x_slot_kind(slot) {
                XSlotKind::Continuous => x.push(rng.random::<f64>()),
                XSlotKind::Ordinal(n) => {
                    let rank = rng.random_range(0..n);
                    x.push(rank as f64 / (n - 1) as f64);
                }
            }
        }
        let mut h = Vec::with_capacity(self.n_h());
        for slot in 0..self.n_h() {
            h.push(rng.random_range(0..self.h_cardinality(slot)));
        }
        ConfigVector {
            space: Arc::clone(self),
            x,
            h,
        }
    }

    /// The configuration given by each dimension's declared `default`, used
    /// when architecture search is disabled. Dimensions without a declared
    /// default fall back to the middle of the range (continuous), the middle
    /// rank (ordinal) or index 0 (categorical).
    pub fn default_config(self: &Arc<Self>) -> Result<ConfigVector, SpaceError> {
        let mut raw = BTreeMap::new();
        for dim in &self.dimensions {
            let v = match dim {
                DimensionSpec::Continuous {
                    min,
                    max,
                    scale,
                    default,
                    ..
                } => RawValue::Float(default.unwrap_or(match scale {
                    Scale::Linear => 0.5 * (min + max),
                    Scale::Log => (0.5 * (min.ln() + max.ln())).exp(),
                })),
                DimensionSpec::Ordinal {
                    values, default, ..
                } => RawValue::Float(default.unwrap_or(values[values.len() / 2])),
                DimensionSpec::Categorical {
                    labels, default, ..
                } => RawValue::Str(default.clone().unwrap_or_else(|| labels[0].clone())),
            };
            raw.insert(dim.name().to_owned(), v);
        }
        self.encode(&raw)
    }
}

fn encode_x(dim: &DimensionSpec, val: &RawValue) -> Result<f64, SpaceError> {
    match dim {
        DimensionSpec::Continuous {
            name,
            min,
            max,
            scale,
            ..
        } => {
            let v = val
                .as_f64()
                .ok_or(SpaceError::WrongValueType(name.clone(), "numeric"))?;
            if v < *min || v > *max {
                return Err(SpaceError::OutOfBounds {
                    name: name.clone(),
                    value: v,
                    min: *min,
                    max: *max,
                });
            }
            Ok(match scale {
                Scale::Linear => (v - min) / (max - min),
                Scale::Log => (v.ln() - min.ln()) / (max.ln() - min.ln()),
            })
        }
        DimensionSpec::Ordinal { name, values, .. } => {
            let v = val
                .as_f64()
                .ok_or(SpaceError::WrongValueType(name.clone(), "numeric"))?;
            let rank = values
                .iter()
                .position(|&e| e == v)
                .ok_or_else(|| SpaceError::NotInList(name.clone(), v))?;
            Ok(rank as f64 / (values.len() - 1) as f64)
        }
        DimensionSpec::Categorical { name, .. } => {
            Err(SpaceError::WrongValueType(name.clone(), "numeric"))
        }
    }
}

fn encode_h(dim: &DimensionSpec, val: &RawValue) -> Result<usize, SpaceError> {
    match dim {
        DimensionSpec::Categorical { name, labels, .. } => {
            let s = val
                .as_str()
                .ok_or(SpaceError::WrongValueType(name.clone(), "label"))?;
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| SpaceError::UnknownLabel(name.clone(), s.to_owned()))
        }
        _ => unreachable!("h slot is categorical"),
    }
}

/// A point in the normalized mixed space: the continuous/ordinal block `x`
/// (entries in `[0, 1]`) and the categorical index block `h`.
#[derive(Debug, Clone)]
pub struct ConfigVector {
    space: Arc<SearchSpace>,
    x: Vec<f64>,
    h: Vec<usize>,
}

impl PartialEq for ConfigVector {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h
            && self.x.len() == other.x.len()
            && self
                .x
                .iter()
                .zip(&other.x)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for ConfigVector {}

impl ConfigVector {
    /// Build a config directly from normalized coordinates.
    pub fn from_parts(
        space: Arc<SearchSpace>,
        x: Vec<f64>,
        h: Vec<usize>,
    ) -> Result<Self, SpaceError> {
        if x.len() != space.n_x() || h.len() != space.n_h() {
            return Err(SpaceError::SpaceMismatch);
        }
        for &v in &x {
            if !(0.0..=1.0).contains(&v) {
                return Err(SpaceError::OutOfBounds {
                    name: "<normalized x>".to_owned(),
                    value: v,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        for (slot, &idx) in h.iter().enumerate() {
            if idx >= space.h_cardinality(slot) {
                return Err(SpaceError::OutOfBounds {
                    name: space.h_dim(slot).name().to_owned(),
                    value: idx as f64,
                    min: 0.0,
                    max: (space.h_cardinality(slot) - 1) as f64,
                });
            }
        }
        Ok(ConfigVector { space, x, h })
    }

    pub fn space(&self) -> &Arc<SearchSpace> {
        &self.space
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn h(&self) -> &[usize] {
        &self.h
    }

    pub fn same_space(&self, other: &ConfigVector) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || self.space == other.space
    }

    pub fn set_x(&mut self, slot: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.x[slot] = value;
    }

    pub fn set_h(&mut self, slot: usize, index: usize) {
        debug_assert!(index < self.space.h_cardinality(slot));
        self.h[slot] = index;
    }

    /// Rank of an ordinal x slot, snapping to the nearest rank.
    pub fn ordinal_rank(&self, slot: usize) -> usize {
        match self.space.x_slot_kind(slot) {
            XSlotKind::Ordinal(n) => {
                let r = (self.x[slot] * (n - 1) as f64).round();
                (r as usize).min(n - 1)
            }
            XSlotKind::Continuous => panic!("slot {slot} is continuous"),
        }
    }

    /// Copy the architecture block (all `arch` dimensions) from `src`.
    pub fn copy_arch_from(&mut self, src: &ConfigVector) {
        debug_assert!(self.same_space(src));
        for (slot, is_arch) in self.space.x_arch_mask().into_iter().enumerate() {
            if is_arch {
                self.x[slot] = src.x[slot];
            }
        }
        for (slot, is_arch) in self.space.h_arch_mask().into_iter().enumerate() {
            if is_arch {
                self.h[slot] = src.h[slot];
            }
        }
    }

    /// True if both configs agree on every architecture dimension.
    pub fn arch_eq(&self, other: &ConfigVector) -> bool {
        let xm = self.space.x_arch_mask();
        let hm = self.space.h_arch_mask();
        self.x
            .iter()
            .zip(&other.x)
            .zip(&xm)
            .all(|((a, b), m)| !m || a.to_bits() == b.to_bits())
            && self
                .h
                .iter()
                .zip(&other.h)
                .zip(&hm)
                .all(|((a, b), m)| !m || a == b)
    }

    /// A key identifying the architecture block (for grouping).
    pub fn arch_key(&self) -> ArchKey {
        let mut ranks = Vec::new();
        for (slot, is_arch) in self.space.x_arch_mask().into_iter().enumerate() {
            if is_arch {
                match self.space.x_slot_kind(slot) {
                    XSlotKind::Ordinal(_) => ranks.push(self.ordinal_rank(slot) as u64),
                    XSlotKind::Continuous => ranks.push(self.x[slot].to_bits()),
                }
            }
        }
        let mut cats = Vec::new();
        for (slot, is_arch) in self.space.h_arch_mask().into_iter().enumerate() {
            if is_arch {
                cats.push(self.h[slot]);
            }
        }
        ArchKey { ranks, cats }
    }

    /// Project this config onto a sub-space formed from a subset of this
    /// space's dimensions (matched by name).
    pub fn project(&self, sub: &Arc<SearchSpace>) -> Result<ConfigVector, SpaceError> {
        let decoded = self.decode();
        let mut raw = BTreeMap::new();
        for dim in sub.dimensions() {
            let v = decoded
                .get(dim.name())
                .ok_or_else(|| SpaceError::MissingDimension(dim.name().to_owned()))?;
            raw.insert(dim.name().to_owned(), v.clone());
        }
        sub.encode(&raw)
    }

    /// Decode back to raw per-dimension values. Ordinal coordinates snap to
    /// the nearest rank.
    pub fn decode(&self) -> BTreeMap<String, RawValue> {
        let mut out = BTreeMap::new();
        for (slot, &v) in self.x.iter().enumerate() {
            let dim = self.space.x_dim(slot);
            let raw = match dim {
                DimensionSpec::Continuous {
                    min, max, scale, ..
                } => RawValue::Float(
                    // Clamp away inverse-transform roundoff so a decoded
                    // value always re-encodes.
                    match scale {
                        Scale::Linear => min + v * (max - min),
                        Scale::Log => (min.ln() + v * (max.ln() - min.ln())).exp(),
                    }
                    .clamp(*min, *max),
                ),
                DimensionSpec::Ordinal { values, .. } => {
                    let n = values.len();
                    let rank = ((v * (n - 1) as f64).round() as usize).min(n - 1);
                    RawValue::Float(values[rank])
                }
                DimensionSpec::Categorical { .. } => unreachable!(),
            };
            out.insert(dim.name().to_owned(), raw);
        }
        for (slot, &idx) in self.h.iter().enumerate() {
            let dim = self.space.h_dim(slot);
            if let DimensionSpec::Categorical { labels, .. } = dim {
                out.insert(dim.name().to_owned(), RawValue::Str(labels[idx].clone()));
            }
        }
        out
    }
}

/// Hashable identity of an architecture block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchKey {
    ranks: Vec<u64>,
    cats: Vec<usize>,
}

/// One observed return, tagged with the config that produced it and the
/// synchronization tick it was observed at.
#[derive(Debug, Clone)]
pub struct TimestampedObservation {
    pub config: ConfigVector,
    pub timestep: u64,
    pub value: f64,
}

/// The 15-dimensional mixed benchmark space: 9 hyperparameter dimensions plus
/// 6 architecture dimensions (flagged `arch`).
pub fn ppo_space() -> Arc<SearchSpace> {
    let pow2 = |lo: u32, hi: u32| -> Vec<f64> {
        (lo..=hi).map(|e| f64::from(2u32.pow(e))).collect()
    };
    let bin = || vec!["false".to_owned(), "true".to_owned()];
    SearchSpace::new(vec![
        DimensionSpec::Continuous {
            name: "learning_rate".into(),
            min: 1e-4,
            max: 1e-3,
            scale: Scale::Log,
            arch: false,
            default: None,
        },
        DimensionSpec::Continuous {
            name: "discount_factor".into(),
            min: 0.9,
            max: 0.9999,
            scale: Scale::Linear,
            arch: false,
            default: None,
        },
        DimensionSpec::Continuous {
            name: "entropy_coefficient".into(),
            min: 1e-6,
            max: 1e-1,
            scale: Scale::Log,
            arch: false,
            default: None,
        },
        DimensionSpec::Ordinal {
            name: "unroll_length".into(),
            values: (5..=15).map(f64::from).collect(),
            arch: false,
            default: None,
        },
        DimensionSpec::Continuous {
            name: "reward_scaling".into(),
            min: 0.05,
            max: 20.0,
            scale: Scale::Linear,
            arch: false,
            default: None,
        },
        DimensionSpec::Ordinal {
            name: "batch_size".into(),
            values: pow2(5, 10),
            arch: false,
            default: None,
        },
        DimensionSpec::Ordinal {
            name: "updates_per_epoch".into(),
            values: (2..=16).map(f64::from).collect(),
            arch: false,
            default: None,
        },
        DimensionSpec::Continuous {
            name: "gae_lambda".into(),
            min: 0.9,
            max: 1.0,
            scale: Scale::Linear,
            arch: false,
            default: None,
        },
        DimensionSpec::Continuous {
            name: "clipping_epsilon".into(),
            min: 0.1,
            max: 0.4,
            scale: Scale::Linear,
            arch: false,
            default: None,
        },
        DimensionSpec::Ordinal {
            name: "policy_width".into(),
            values: pow2(5, 8),
            arch: true,
            default: Some(32.0),
        },
        DimensionSpec::Ordinal {
            name: "policy_depth".into(),
            values: (1..=5).map(f64::from).collect(),
            arch: true,
            default: Some(4.0),
        },
        DimensionSpec::Categorical {
            name: "policy_spectral_norm".into(),
            labels: bin(),
            arch: true,
            default: Some("false".into()),
        },
        DimensionSpec::Ordinal {
            name: "value_width".into(),
            values: pow2(5, 8),
            arch: true,
            default: Some(256.0),
        },
        DimensionSpec::Ordinal {
            name: "value_depth".into(),
            values: (1..=5).map(f64::from).collect(),
            arch: true,
            default: Some(5.0),
        },
        DimensionSpec::Categorical {
            name: "value_spectral_norm".into(),
            labels: bin(),
            arch: true,
            default: Some("false".into()),
        },
    ])
    .expect("builtin space is valid")
}
