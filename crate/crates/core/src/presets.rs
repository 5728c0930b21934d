// SPDX-License-Identifier: Apache-2.0

//! Published target-error configurations (`ε_δ ≤ 10⁻³` at δ = 0.99, 0.95, 0.68).
//!
//! The JSON files under `presets/` hold the depth and shot lists verbatim;
//! they are not regenerated from the level parameters.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimator::{ArrayConfig, Schedule};
use crate::{Error, Result};

const TABLE3: &str = include_str!("../presets/table3.json");
const TABLE4: &str = include_str!("../presets/table4.json");
const TABLE5: &str = include_str!("../presets/table5.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub confidence: f64,
    pub k: f64,
    pub q: u32,
    pub array_parameters: Vec<u32>,
    pub depths: Vec<u64>,
    pub shots: Vec<u64>,
    pub total_queries: u64,
    pub max_depth: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Table3,
    Table4,
    Table5,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Table3, PresetName::Table4, PresetName::Table5];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Table3 => "table3",
            PresetName::Table4 => "table4",
            PresetName::Table5 => "table5",
        }
    }

    pub fn raw_json(&self) -> &'static str {
        match self {
            PresetName::Table3 => TABLE3,
            PresetName::Table4 => TABLE4,
            PresetName::Table5 => TABLE5,
        }
    }

    pub fn load(&self) -> Preset {
        serde_json::from_str(self.raw_json()).expect("bundled preset is valid JSON")
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table3" | "99" => Ok(PresetName::Table3),
            "table4" | "95" => Ok(PresetName::Table4),
            "table5" | "68" => Ok(PresetName::Table5),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Preset {
    /// The published schedule exactly as listed.
    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.depths.clone(), self.shots.clone(), self.k)
    }

    pub fn array(&self) -> Result<ArrayConfig> {
        ArrayConfig::explicit(&self.depths, self.q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{shot_schedule, total_queries};

    #[test]
    fn bundled_presets_are_self_consistent() {
        for name in PresetName::ALL {
            let p = name.load();
            assert_eq!(p.name, name.as_str());
            let s = p.schedule().unwrap();
            assert_eq!(total_queries(&s), p.total_queries);
            assert_eq!(s.n_max(), p.max_depth);
            assert_eq!(
                shot_schedule(&p.depths, p.k).unwrap().shots(),
                p.shots.as_slice()
            );
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("TABLE4".parse::<PresetName>().unwrap(), PresetName::Table4);
        assert!("table9".parse::<PresetName>().is_err());
    }
}
