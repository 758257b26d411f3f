//! Arithmetic modes and the software emulation of their float semantics.
//!
//! Precise is strict IEEE-754 single precision on the scalar path.
//! Relaxed flushes denormal operands and partial sums to zero but keeps
//! the canonical accumulation order. Imprecise additionally reassociates
//! (per-lane partial sums reduced once at loop exit) and normalizes -0.0
//! to +0.0 on store.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
#[error("unknown arithmetic mode `{0}`, expected precise|relaxed|imprecise")]
pub struct ParseModeError(String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithmeticMode {
    Precise,
    Relaxed,
    Imprecise,
}

impl ArithmeticMode {
    pub fn flushes_denormals(self) -> bool {
        !matches!(self, ArithmeticMode::Precise)
    }

    /// Only the inexact modes may run the reassociating vector path.
    pub fn allows_vector_reduction(self) -> bool {
        matches!(self, ArithmeticMode::Imprecise)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArithmeticMode::Precise => "precise",
            ArithmeticMode::Relaxed => "relaxed",
            ArithmeticMode::Imprecise => "imprecise",
        }
    }
}

impl std::fmt::Display for ArithmeticMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArithmeticMode {
    type Err = ParseModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "precise" => Ok(ArithmeticMode::Precise),
            "relaxed" => Ok(ArithmeticMode::Relaxed),
            "imprecise" => Ok(ArithmeticMode::Imprecise),
            other => Err(ParseModeError(other.to_string())),
        }
    }
}

/// Flush a denormal to a signed zero; normals, zeros, INF, and NAN pass
/// through. Branch-free enough for the inner loops.
#[inline(always)]
pub fn flush_denormal(v: f32) -> f32 {
    if v.abs() < f32::MIN_POSITIVE {
        0.0f32.copysign(v)
    } else {
        v
    }
}

/// -0.0 becomes +0.0; everything else unchanged. Applied on store in
/// Imprecise mode.
#[inline(always)]
pub fn normalize_negative_zero(v: f32) -> f32 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}
