use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The seven model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariableId {
    /// Glucose, mg/dL.
    #[serde(rename = "G")]
    G,
    /// Basal insulin, U.
    #[serde(rename = "B_I")]
    BasalInsulin,
    /// Insulin bolus, U.
    #[serde(rename = "I_B")]
    InsulinBolus,
    /// Carbohydrates, g.
    #[serde(rename = "F_ch")]
    Carbs,
    /// Heart rate, bpm.
    #[serde(rename = "HR")]
    HeartRate,
    /// Calories burned, kcal.
    #[serde(rename = "C")]
    Calories,
    /// Steps, count.
    #[serde(rename = "S")]
    Steps,
}

pub const VARIABLE_COUNT: usize = 7;

impl VariableId {
    pub const ALL: [VariableId; VARIABLE_COUNT] = [
        VariableId::G,
        VariableId::BasalInsulin,
        VariableId::InsulinBolus,
        VariableId::Carbs,
        VariableId::HeartRate,
        VariableId::Calories,
        VariableId::Steps,
    ];

    /// Position in [`VariableId::ALL`], used to index per-variable arrays.
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn symbol(self) -> &'static str {
        match self {
            VariableId::G => "G",
            VariableId::BasalInsulin => "B_I",
            VariableId::InsulinBolus => "I_B",
            VariableId::Carbs => "F_ch",
            VariableId::HeartRate => "HR",
            VariableId::Calories => "C",
            VariableId::Steps => "S",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        VariableId::ALL.into_iter().find(|v| v.symbol() == s)
    }

    /// Exogenous inputs, i.e. everything except glucose.
    pub fn exogenous() -> impl Iterator<Item = VariableId> {
        VariableId::ALL.into_iter().skip(1)
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for VariableId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariableId::from_symbol(s).ok_or_else(|| format!("unknown variable `{s}`"))
    }
}
