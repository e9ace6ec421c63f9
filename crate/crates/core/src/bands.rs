//! Mastery bands shared by reasoning-chain conclusions and teaching suggestions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Weak,
    Partial,
    Strong,
}

impl Band {
    pub fn label(self) -> &'static str {
        match self {
            Band::Weak => "weak",
            Band::Partial => "partial",
            Band::Strong => "strong",
        }
    }
}

/// `< weak_below` is weak, `>= strong_from` is strong, partial in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasteryBands {
    pub weak_below: f64,
    pub strong_from: f64,
}

impl Default for MasteryBands {
    fn default() -> Self {
        Self {
            weak_below: 0.4,
            strong_from: 0.7,
        }
    }
}

impl MasteryBands {
    pub fn classify(&self, mastery: f64) -> Band {
        if mastery < self.weak_below {
            Band::Weak
        } else if mastery >= self.strong_from {
            Band::Strong
        } else {
            Band::Partial
        }
    }
}

/// Whole-percent rendering, e.g. `0.404` → `"40%"`.
pub fn percent(value: f64) -> String {
    format!("{:.0}%", value * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_edges() {
        let b = MasteryBands::default();
        assert_eq!(b.classify(0.39), Band::Weak);
        assert_eq!(b.classify(0.4), Band::Partial);
        assert_eq!(b.classify(0.699), Band::Partial);
        assert_eq!(b.classify(0.7), Band::Strong);
        assert_eq!(percent(0.404), "40%");
    }
}
