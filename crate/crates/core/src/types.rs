use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} {value:?}")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

/// Target languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Te,
    Hi,
    Ta,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Hi, Language::Te, Language::Ta];

    pub fn code(self) -> &'static str {
        match self {
            Language::Te => "te",
            Language::Hi => "hi",
            Language::Ta => "ta",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Language::Te => "Telugu",
            Language::Hi => "Hindi",
            Language::Ta => "Tamil",
        }
    }

    /// Minimum distinct native speakers required for centroid construction.
    pub fn min_speakers(self) -> usize {
        match self {
            Language::Hi => 40,
            Language::Te | Language::Ta => 20,
        }
    }

    /// Per-phoneme dimensions that are scored for this language.
    pub fn dimensions(self) -> Vec<Dimension> {
        Dimension::ALL
            .into_iter()
            .filter(|d| d.applies_to(self))
            .collect()
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "te" | "telugu" => Ok(Language::Te),
            "hi" | "hindi" => Ok(Language::Hi),
            "ta" | "tamil" => Ok(Language::Ta),
            _ => Err(ParseEnumError {
                kind: "language",
                value: s.to_string(),
            }),
        }
    }
}

/// Per-phoneme probe dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    /// Retroflex vs dental.
    RR,
    /// Aspirated vs unaspirated stops.
    AF,
    /// Long vs short vowel duration contrast.
    LF,
    /// Tamil retroflex approximant vs lateral.
    ZF,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::RR, Dimension::AF, Dimension::LF, Dimension::ZF];

    pub fn applies_to(self, language: Language) -> bool {
        match self {
            Dimension::RR | Dimension::LF => true,
            Dimension::AF => language != Language::Ta,
            Dimension::ZF => language == Language::Ta,
        }
    }

    /// Whether the dimension is scored through centroid fidelity (as opposed
    /// to duration ratios).
    pub fn is_centroid_probe(self) -> bool {
        self != Dimension::LF
    }

    pub fn code(self) -> &'static str {
        match self {
            Dimension::RR => "RR",
            Dimension::AF => "AF",
            Dimension::LF => "LF",
            Dimension::ZF => "ZF",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Dimension {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RR" => Ok(Dimension::RR),
            "AF" => Ok(Dimension::AF),
            "LF" => Ok(Dimension::LF),
            "ZF" => Ok(Dimension::ZF),
            _ => Err(ParseEnumError {
                kind: "dimension",
                value: s.to_string(),
            }),
        }
    }
}
