//! Ablation conditions and their feature flags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    Baseline,
    PlusMemory,
    PlusCcd,
    PlusLora,
}

#[derive(Debug, Error)]
#[error("unknown condition `{0}` (expected baseline, plus_memory, plus_ccd or plus_lora)")]
pub struct UnknownCondition(pub String);

impl ConditionId {
    pub const ALL: [ConditionId; 4] = [
        ConditionId::Baseline,
        ConditionId::PlusMemory,
        ConditionId::PlusCcd,
        ConditionId::PlusLora,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::Baseline => "baseline",
            ConditionId::PlusMemory => "plus_memory",
            ConditionId::PlusCcd => "plus_ccd",
            ConditionId::PlusLora => "plus_lora",
        }
    }

    /// Column label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            ConditionId::Baseline => "Baseline",
            ConditionId::PlusMemory => "+Memory",
            ConditionId::PlusCcd => "+CCD",
            ConditionId::PlusLora => "+LoRA",
        }
    }

    pub fn flags(self) -> ConditionFlags {
        condition_flags(self)
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = UnknownCondition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConditionId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCondition(s.to_owned()))
    }
}

/// Which pipeline features a condition enables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub memory: bool,
    pub ccd: bool,
    /// Use the alternate (fine-tuned) model selection.
    pub alternate_model: bool,
}

impl ConditionFlags {
    /// Each feature implies the ones before it.
    pub fn is_nested(&self) -> bool {
        (!self.ccd || self.memory) && (!self.alternate_model || self.ccd)
    }
}

pub fn condition_flags(c: ConditionId) -> ConditionFlags {
    let (memory, ccd, alternate_model) = match c {
        ConditionId::Baseline => (false, false, false),
        ConditionId::PlusMemory => (true, false, false),
        ConditionId::PlusCcd => (true, true, false),
        ConditionId::PlusLora => (true, true, true),
    };
    ConditionFlags {
        memory,
        ccd,
        alternate_model,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nesting_holds() {
        for c in ConditionId::ALL {
            assert!(c.flags().is_nested(), "{c}");
        }
        assert!(!ConditionFlags {
            memory: false,
            ccd: true,
            alternate_model: false
        }
        .is_nested());
    }

    #[test]
    fn names_round_trip() {
        for c in ConditionId::ALL {
            assert_eq!(c.as_str().parse::<ConditionId>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
        assert!("plus_lorax".parse::<ConditionId>().is_err());
    }

    #[test]
    fn plus_ccd_has_memory_and_ccd() {
        let f = condition_flags(ConditionId::PlusCcd);
        assert!(f.memory && f.ccd && !f.alternate_model);
        let f = condition_flags(ConditionId::Baseline);
        assert!(!f.memory && !f.ccd);
    }
}
