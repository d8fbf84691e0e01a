use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Expression class. The discriminant is the block index in the 10-logit head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExprType {
    Micro = 0,
    Macro = 1,
}

impl ExprType {
    pub const ALL: [ExprType; 2] = [ExprType::Micro, ExprType::Macro];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExprType::Micro => "micro",
            ExprType::Macro => "macro",
        }
    }
}

impl fmt::Display for ExprType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExprType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "micro" | "me" | "mi" => Ok(ExprType::Micro),
            "macro" | "mae" | "ma" => Ok(ExprType::Macro),
            other => Err(Error::Parse(format!("unknown expression type `{other}`"))),
        }
    }
}
