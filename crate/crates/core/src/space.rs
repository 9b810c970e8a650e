//! Discrete hyper-parameter search spaces and configurations.
//!
//! A [`HyperParamSpace`] is an ordered list of [`Dimension`]s, each with an
//! ordered list of levels. A [`Config`] picks one level index per dimension.
//! Configurations are flattened row-major (first dimension most
//! significant), so ascending flat index coincides with lexicographic order
//! of the level indices.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One value a dimension can take.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Int(i64),
    Real(f64),
    Label(String),
}

impl Level {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Level::Int(v) => Some(v as f64),
            Level::Real(v) => Some(v),
            Level::Label(_) => None,
        }
    }
}

impl PartialEq for Level {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Level::Label(a), Level::Label(b)) => a == b,
            (Level::Label(_), _) | (_, Level::Label(_)) => false,
            (a, b) => a.as_f64() == b.as_f64(),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Int(v) => write!(f, "{v}"),
            Level::Real(v) => write!(f, "{v}"),
            Level::Label(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Level {
    fn from(v: i64) -> Self {
        Level::Int(v)
    }
}

impl From<f64> for Level {
    fn from(v: f64) -> Self {
        Level::Real(v)
    }
}

impl From<&str> for Level {
    fn from(v: &str) -> Self {
        Level::Label(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    pub levels: Vec<Level>,
}

impl Dimension {
    pub fn new(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = impl Into<Level>>,
    ) -> Self {
        Dimension {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    /// All levels are numbers (such dimensions carry token cost in
    /// generated landscapes).
    pub fn is_numeric(&self) -> bool {
        self.levels.iter().all(|l| l.as_f64().is_some())
    }

    pub fn position(&self, level: &Level) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperParamSpace {
    dimensions: Vec<Dimension>,
}

impl<'de> Deserialize<'de> for HyperParamSpace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            dimensions: Vec<Dimension>,
        }
        let raw = Raw::deserialize(deserializer)?;
        HyperParamSpace::new(raw.dimensions).map_err(serde::de::Error::custom)
    }
}

impl HyperParamSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        if dimensions.is_empty() {
            return Err(Error::InvalidSpace(
                "at least one dimension is required".into(),
            ));
        }
        for (i, dim) in dimensions.iter().enumerate() {
            if dim.name.is_empty() {
                return Err(Error::InvalidSpace(format!(
                    "dimension {i} has an empty name"
                )));
            }
            if dimensions[..i].iter().any(|d| d.name == dim.name) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate dimension name `{}`",
                    dim.name
                )));
            }
            if dim.levels.len() < 2 {
                return Err(Error::InvalidSpace(format!(
                    "dimension `{}` needs at least 2 levels, has {}",
                    dim.name,
                    dim.levels.len()
                )));
            }
            for (j, level) in dim.levels.iter().enumerate() {
                if let Level::Real(v) = level {
                    if !v.is_finite() {
                        return Err(Error::InvalidSpace(format!(
                            "dimension `{}` has a non-finite level",
                            dim.name
                        )));
                    }
                }
                if dim.levels[..j].contains(level) {
                    return Err(Error::InvalidSpace(format!(
                        "dimension `{}` repeats level `{level}`",
                        dim.name
                    )));
                }
            }
        }
        Ok(HyperParamSpace { dimensions })
    }

    /// Top-k and compression ratio, embedding fixed.
    pub fn two_param() -> Self {
        HyperParamSpace::new(vec![
            Dimension::new("top_k", [1i64, 3, 5, 7, 9]),
            Dimension::new("compression_ratio", [0.3, 0.5, 0.7, 0.9, 1.0]),
        ])
        .expect("static space is valid")
    }

    /// Top-k, compression ratio and embedding model.
    pub fn three_param() -> Self {
        HyperParamSpace::new(vec![
            Dimension::new("top_k", [1i64, 3, 5, 7, 9]),
            Dimension::new("compression_ratio", [0.3, 0.5, 0.7, 0.9, 1.0]),
            Dimension::new("embedding", ["mpnet", "ada_002", "contriever"]),
        ])
        .expect("static space is valid")
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dim_count(&self) -> usize {
        self.dimensions.len()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.dimensions.iter().map(|d| d.levels.len()).collect()
    }

    pub fn cardinality(&self) -> usize {
        self.dimensions.iter().map(|d| d.levels.len()).product()
    }

    pub fn validate(&self, config: &Config) -> Result<()> {
        if config.level_indices.len() != self.dimensions.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} level indices, got {}",
                self.dimensions.len(),
                config.level_indices.len()
            )));
        }
        for (dim, &idx) in self.dimensions.iter().zip(&config.level_indices) {
            if idx >= dim.levels.len() {
                return Err(Error::InvalidConfig(format!(
                    "level index {idx} out of range for `{}` ({} levels)",
                    dim.name,
                    dim.levels.len()
                )));
            }
        }
        Ok(())
    }

    /// Row-major flat index of a configuration.
    pub fn index_of(&self, config: &Config) -> Result<usize> {
        self.validate(config)?;
        Ok(self
            .dimensions
            .iter()
            .zip(&config.level_indices)
            .fold(0, |acc, (dim, &idx)| acc * dim.levels.len() + idx))
    }

    pub fn config_at(&self, mut index: usize) -> Result<Config> {
        let n = self.cardinality();
        if index >= n {
            return Err(Error::InvalidConfig(format!(
                "flat index {index} out of range ({n} configurations)"
            )));
        }
        let mut levels = vec![0; self.dimensions.len()];
        for (slot, dim) in levels.iter_mut().zip(&self.dimensions).rev() {
            *slot = index % dim.levels.len();
            index /= dim.levels.len();
        }
        Ok(Config::new(levels))
    }

    pub fn configs(&self) -> impl Iterator<Item = Config> + '_ {
        (0..self.cardinality()).map(|i| self.config_at(i).expect("index in range"))
    }

    /// Middle level of every dimension (lower middle for even counts).
    pub fn midpoint(&self) -> Config {
        Config::new(
            self.dimensions
                .iter()
                .map(|d| (d.levels.len() - 1) / 2)
                .collect(),
        )
    }

    pub fn named(&self, config: &Config) -> Result<NamedConfig> {
        self.validate(config)?;
        Ok(NamedConfig(
            self.dimensions
                .iter()
                .zip(&config.level_indices)
                .map(|(d, &i)| (d.name.clone(), d.levels[i].clone()))
                .collect(),
        ))
    }

    /// Resolve named levels back to a configuration. Every dimension must
    /// be named exactly once.
    pub fn resolve(&self, named: &NamedConfig) -> Result<Config> {
        if named.0.len() != self.dimensions.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} named levels, got {}",
                self.dimensions.len(),
                named.0.len()
            )));
        }
        let mut levels = Vec::with_capacity(self.dimensions.len());
        for dim in &self.dimensions {
            let level = named
                .get(&dim.name)
                .ok_or_else(|| Error::InvalidConfig(format!("missing dimension `{}`", dim.name)))?;
            let idx = dim.position(level).ok_or_else(|| {
                Error::InvalidConfig(format!("`{level}` is not a level of `{}`", dim.name))
            })?;
            levels.push(idx);
        }
        Ok(Config::new(levels))
    }

    pub fn describe(&self, config: &Config) -> String {
        match self.named(config) {
            Ok(named) => named.to_string(),
            Err(_) => format!("{:?}", config.level_indices),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Config {
    pub level_indices: Vec<usize>,
}

impl Config {
    pub fn new(level_indices: Vec<usize>) -> Self {
        Config { level_indices }
    }

    pub fn with_level(&self, dimension: usize, level: usize) -> Config {
        let mut out = self.clone();
        out.level_indices[dimension] = level;
        out
    }

    /// Number of coordinates where the two configurations differ.
    pub fn hamming(&self, other: &Config) -> usize {
        self.level_indices
            .iter()
            .zip(&other.level_indices)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// A configuration expressed as `{dimension_name: level}`, kept in
/// dimension order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedConfig(pub Vec<(String, Level)>);

impl NamedConfig {
    pub fn get(&self, name: &str) -> Option<&Level> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, l)| l)
    }
}

impl fmt::Display for NamedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, level)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}={level}")?;
        }
        Ok(())
    }
}

impl Serialize for NamedConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, level) in &self.0 {
            map.serialize_entry(name, level)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for NamedConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct NamedVisitor;

        impl<'de> Visitor<'de> for NamedVisitor {
            type Value = NamedConfig;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of dimension name to level")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((name, level)) = access.next_entry::<String, Level>()? {
                    if out.iter().any(|(n, _): &(String, Level)| *n == name) {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate dimension `{name}`"
                        )));
                    }
                    out.push((name, level));
                }
                Ok(NamedConfig(out))
            }
        }

        deserializer.deserialize_map(NamedVisitor)
    }
}
