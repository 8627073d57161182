//! Dimension tables: native / substitute grapheme sets per language.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Dimension, Language};

/// Tables shipped with the crate (`data/dimension_tables.toml`).
pub const DEFAULT_TABLES_TOML: &str = include_str!("../../data/dimension_tables.toml");

pub const TABLES_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension table config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported dimension table version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("{language}/{dimension}: dimension does not apply to this language")]
    InapplicableDimension {
        language: Language,
        dimension: Dimension,
    },
    #[error("{language}/{dimension}: duplicate table")]
    DuplicateTable {
        language: Language,
        dimension: Dimension,
    },
    #[error("{language}/{dimension}: grapheme {grapheme:?} is in both native and substitute sets")]
    OverlappingSets {
        language: Language,
        dimension: Dimension,
        grapheme: String,
    },
    #[error("{language}/{dimension}: native grapheme {grapheme:?} has no cognate")]
    MissingCognate {
        language: Language,
        dimension: Dimension,
        grapheme: String,
    },
    #[error("{language}/{dimension}: cognate {cognate:?} of {grapheme:?} is not a substitute grapheme")]
    CognateNotSubstitute {
        language: Language,
        dimension: Dimension,
        grapheme: String,
        cognate: String,
    },
    #[error("{language}/{dimension}: invalid native_ratio {value}")]
    InvalidPrior {
        language: Language,
        dimension: Dimension,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionTable {
    pub language: Language,
    pub dimension: Dimension,
    pub native_graphemes: BTreeSet<String>,
    pub substitute_graphemes: BTreeSet<String>,
    pub cognate_map: BTreeMap<String, String>,
    /// Native long/short duration ratio prior (LF tables only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub native_ratio: Option<f64>,
}

impl DimensionTable {
    pub fn cognate(&self, native: &str) -> Option<&str> {
        self.cognate_map.get(native).map(String::as_str)
    }

    pub fn is_native(&self, grapheme: &str) -> bool {
        self.native_graphemes.contains(grapheme)
    }

    pub fn is_substitute(&self, grapheme: &str) -> bool {
        self.substitute_graphemes.contains(grapheme)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    #[serde(default, rename = "table")]
    tables: Vec<RawTable>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    language: String,
    dimension: String,
    native: Vec<String>,
    substitute: Vec<String>,
    #[serde(default)]
    cognates: BTreeMap<String, String>,
    native_ratio: Option<f64>,
}

pub fn load_dimension_tables(path: impl AsRef<Path>) -> Result<Vec<DimensionTable>, TableError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dimension_tables(&text)
}

pub fn default_tables() -> Vec<DimensionTable> {
    parse_dimension_tables(DEFAULT_TABLES_TOML).expect("shipped dimension tables are valid")
}

/// Parses and checks a table config. Tables come back sorted by
/// (language, dimension).
pub fn parse_dimension_tables(text: &str) -> Result<Vec<DimensionTable>, TableError> {
    let raw: RawConfig = toml::from_str(text)?;
    if raw.version != TABLES_VERSION {
        return Err(TableError::UnsupportedVersion(raw.version));
    }
    let mut out: Vec<DimensionTable> = Vec::with_capacity(raw.tables.len());
    for t in raw.tables {
        let language: Language = t
            .language
            .parse()
            .map_err(|_| TableError::UnknownLanguage(t.language.clone()))?;
        let dimension: Dimension = t
            .dimension
            .parse()
            .map_err(|_| TableError::UnknownDimension(t.dimension.clone()))?;
        if !dimension.applies_to(language) {
            return Err(TableError::InapplicableDimension {
                language,
                dimension,
            });
        }
        if out
            .iter()
            .any(|o| o.language == language && o.dimension == dimension)
        {
            return Err(TableError::DuplicateTable {
                language,
                dimension,
            });
        }
        let native: BTreeSet<String> = t.native.into_iter().collect();
        let substitute: BTreeSet<String> = t.substitute.into_iter().collect();
        if let Some(g) = native.intersection(&substitute).next() {
            return Err(TableError::OverlappingSets {
                language,
                dimension,
                grapheme: g.clone(),
            });
        }
        for g in &native {
            let Some(c) = t.cognates.get(g) else {
                return Err(TableError::MissingCognate {
                    language,
                    dimension,
                    grapheme: g.clone(),
                });
            };
            if !substitute.contains(c) {
                return Err(TableError::CognateNotSubstitute {
                    language,
                    dimension,
                    grapheme: g.clone(),
                    cognate: c.clone(),
                });
            }
        }
        let cognate_map = t
            .cognates
            .into_iter()
            .filter(|(k, _)| native.contains(k))
            .collect();
        if let Some(r) = t.native_ratio {
            if dimension != Dimension::LF || !(r.is_finite() && r > 1.0) {
                return Err(TableError::InvalidPrior {
                    language,
                    dimension,
                    value: r,
                });
            }
        }
        out.push(DimensionTable {
            language,
            dimension,
            native_graphemes: native,
            substitute_graphemes: substitute,
            cognate_map,
            native_ratio: t.native_ratio,
        });
    }
    out.sort_by_key(|t| (t.language, t.dimension));
    Ok(out)
}

/// Tables for one language, in dimension order.
pub fn tables_for(tables: &[DimensionTable], language: Language) -> Vec<&DimensionTable> {
    tables.iter().filter(|t| t.language == language).collect()
}
