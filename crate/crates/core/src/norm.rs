use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order `p` of the per-dimension attack budget `(1/N) ||dx||_p^p <= eta^p`.
///
/// `p = 1` and `p = inf` are kept as their own variants so that they take the
/// special-case formulas instead of being approached as limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NormOrder {
    One,
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn new(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Self::One)
        } else if p == f64::INFINITY {
            Ok(Self::Infinity)
        } else if p.is_finite() && p > 1.0 {
            Ok(Self::Finite(p))
        } else {
            Err(Error::InvalidParameter(format!(
                "norm order must be 1, a finite p > 1, or inf (got {p}); p < 1 budgets are not supported"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Finite(p) => *p,
            Self::Infinity => f64::INFINITY,
        }
    }

    /// Hölder conjugate `p / (p - 1)`.
    pub fn conjugate(&self) -> f64 {
        match self {
            Self::One => f64::INFINITY,
            Self::Finite(p) => p / (p - 1.0),
            Self::Infinity => 1.0,
        }
    }

    /// `N^{1/p}`, the largest single-coordinate move the budget allows.
    pub fn single_coordinate_reach(&self, n: usize) -> f64 {
        match self {
            Self::One => n as f64,
            Self::Finite(p) => (n as f64).powf(1.0 / p),
            Self::Infinity => 1.0,
        }
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::One => write!(f, "1"),
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Self::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse norm order {s:?}")))
                .and_then(Self::new),
        }
    }
}

impl From<NormOrder> for String {
    fn from(p: NormOrder) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for NormOrder {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_special_orders() {
        assert_eq!("1".parse::<NormOrder>().unwrap(), NormOrder::One);
        assert_eq!("inf".parse::<NormOrder>().unwrap(), NormOrder::Infinity);
        assert_eq!("2".parse::<NormOrder>().unwrap(), NormOrder::Finite(2.0));
        assert!("0.5".parse::<NormOrder>().is_err());
        assert!("abc".parse::<NormOrder>().is_err());
    }

    #[test]
    fn conjugates() {
        assert_eq!(NormOrder::Finite(2.0).conjugate(), 2.0);
        assert_eq!(NormOrder::Finite(3.0).conjugate(), 1.5);
        assert_eq!(NormOrder::Infinity.conjugate(), 1.0);
    }
}
