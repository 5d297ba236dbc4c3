//! Small vocabulary types shared across the pipeline stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type MsgId = String;
pub type UserId = String;
pub type PlaceId = String;

/// Epoch milliseconds.
pub type Timestamp = i64;

pub const MS_PER_MINUTE: f64 = 60_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageLabel {
    Present,
    AbsentReported,
    #[default]
    NoInfo,
}

impl DamageLabel {
    pub fn carries_info(self) -> bool {
        !matches!(self, DamageLabel::NoInfo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    /// Sent to authors of geotagged messages; answers form the reply2damage set.
    AskDamage,
    /// Sent to authors of non-geotagged messages; answers form the reply2geo set.
    AskGeo,
}

impl QuestionKind {
    pub fn reply_set_name(self) -> &'static str {
        match self {
            QuestionKind::AskDamage => "reply2damage",
            QuestionKind::AskGeo => "reply2geo",
        }
    }
}

/// Place specificity, ordered from finest to coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Building,
    City,
    Region,
    Country,
    Other,
}

impl Granularity {
    pub const ALL: [Granularity; 5] = [
        Granularity::Building,
        Granularity::City,
        Granularity::Region,
        Granularity::Country,
        Granularity::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Building => "building",
            Granularity::City => "city",
            Granularity::Region => "region",
            Granularity::Country => "country",
            Granularity::Other => "other",
        }
    }

    /// Lenient parse used by the gazetteer loader: unknown levels become `Other`.
    pub fn normalize(s: &str) -> Granularity {
        s.parse().unwrap_or(Granularity::Other)
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "building" => Ok(Granularity::Building),
            "city" => Ok(Granularity::City),
            "region" => Ok(Granularity::Region),
            "country" => Ok(Granularity::Country),
            "other" => Ok(Granularity::Other),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}
