//! Extended reals `ℝ ∪ {−∞, +∞}` with convex-analysis conventions.
//!
//! `+∞ + (−∞)` is never produced silently: [`ExtReal::try_add`] reports it as an
//! error. The product `0 · (±∞)` is only defined through [`ExtReal::scale_convex`],
//! which implements the `0 · f = I_{dom f}` scaling convention.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Maps IEEE infinities onto the corresponding variants. NaN is rejected.
    pub fn from_f64(v: f64) -> Result<Self> {
        if v.is_nan() {
            Err(Error::Oracle("NaN where an extended real was expected".into()))
        } else if v == f64::INFINITY {
            Ok(ExtReal::PosInf)
        } else if v == f64::NEG_INFINITY {
            Ok(ExtReal::NegInf)
        } else {
            Ok(ExtReal::Finite(v))
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_pos_inf(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn is_neg_inf(self) -> bool {
        matches!(self, ExtReal::NegInf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Lossy view as an `f64` (infinities map to IEEE infinities).
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn try_add(self, other: ExtReal) -> Result<ExtReal> {
        use ExtReal::*;
        match (self, other) {
            (PosInf, NegInf) | (NegInf, PosInf) => Err(Error::ExtReal("+inf + -inf")),
            (PosInf, _) | (_, PosInf) => Ok(PosInf),
            (NegInf, _) | (_, NegInf) => Ok(NegInf),
            (Finite(a), Finite(b)) => Ok(Finite(a + b)),
        }
    }

    /// `self + c` for a finite real `c`; always defined.
    pub fn add_finite(self, c: f64) -> ExtReal {
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v + c),
            other => other,
        }
    }

    pub fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(v) => ExtReal::Finite(-v),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }

    /// Multiplication by `t > 0`. Zero is rejected here; see [`Self::scale_convex`].
    pub fn try_mul_pos(self, t: f64) -> Result<ExtReal> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::ExtReal("scalar must be finite and positive"));
        }
        Ok(match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * t),
            other => other,
        })
    }

    /// Scaling of a convex function value: `0 · (+∞) = +∞` marks a point outside the
    /// domain and `0 · finite = 0`, matching `0 · f = I_{dom f}`.
    pub fn scale_convex(self, t: f64) -> Result<ExtReal> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::ExtReal("scale must be finite and nonnegative"));
        }
        if t == 0.0 {
            return Ok(match self {
                ExtReal::Finite(_) => ExtReal::ZERO,
                ExtReal::PosInf => ExtReal::PosInf,
                ExtReal::NegInf => return Err(Error::ExtReal("0 * -inf")),
            });
        }
        self.try_mul_pos(t)
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ExtReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Some(Ordering::Equal),
            (NegInf, _) | (_, PosInf) => Some(Ordering::Less),
            (PosInf, _) | (_, NegInf) => Some(Ordering::Greater),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN; use [`ExtReal::from_f64`] for untrusted values.
    fn from(v: f64) -> Self {
        ExtReal::from_f64(v).expect("NaN is not an extended real")
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "+inf"),
        }
    }
}

// JSON has no infinities; encode them as the strings "+inf" / "-inf".
impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("+inf"),
            ExtReal::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal::Finite(v)),
            Raw::Str(s) => match s.as_str() {
                "+inf" | "inf" => Ok(ExtReal::PosInf),
                "-inf" => Ok(ExtReal::NegInf),
                other => Err(serde::de::Error::custom(format!("bad extended real '{other}'"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_cancellation_is_an_error() {
        assert!(ExtReal::PosInf.try_add(ExtReal::NegInf).is_err());
        assert_eq!(ExtReal::PosInf.try_add(ExtReal::Finite(-3.0)).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn zero_scaling_follows_indicator_convention() {
        assert_eq!(ExtReal::Finite(7.0).scale_convex(0.0).unwrap(), ExtReal::ZERO);
        assert_eq!(ExtReal::PosInf.scale_convex(0.0).unwrap(), ExtReal::PosInf);
        assert!(ExtReal::PosInf.try_mul_pos(0.0).is_err());
    }

    #[test]
    fn ordering_and_json() {
        assert!(ExtReal::NegInf < ExtReal::Finite(-1e300));
        assert!(ExtReal::Finite(1e300) < ExtReal::PosInf);
        let s = serde_json::to_string(&vec![ExtReal::PosInf, ExtReal::Finite(1.5)]).unwrap();
        assert_eq!(s, r#"["+inf",1.5]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![ExtReal::PosInf, ExtReal::Finite(1.5)]);
    }
}
