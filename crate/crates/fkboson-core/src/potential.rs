use alloc::vec::Vec;

use crate::error::{config, Result};

/// External potential V(x), evaluated at path nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// `V(x) = Σ_k c_k |x|^k`.
    Polynomial(Vec<f64>),
    /// Radial table with linear interpolation, clamped outside the table.
    Tabulated { radius: Vec<f64>, value: Vec<f64> },
}

impl Potential {
    pub fn tabulated(radius: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if radius.len() != value.len() || radius.is_empty() {
            return Err(config("tabulated potential needs equal, nonempty radius/value lists"));
        }
        if radius.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config("tabulated potential radii must be strictly increasing"));
        }
        if value.iter().chain(radius.iter()).any(|v| !v.is_finite()) {
            return Err(config("tabulated potential contains non-finite entries"));
        }
        Ok(Self::Tabulated { radius, value })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(v) => *v,
            Self::Polynomial(cs) => {
                let r = libm::sqrt(x.iter().map(|a| a * a).sum());
                cs.iter().rev().fold(0.0, |acc, ck| acc * r + ck)
            }
            Self::Tabulated { radius, value } => {
                let r = libm::sqrt(x.iter().map(|a| a * a).sum());
                if r <= radius[0] {
                    return value[0];
                }
                let n = radius.len();
                if r >= radius[n - 1] {
                    return value[n - 1];
                }
                let i = radius.partition_point(|&q| q <= r) - 1;
                let s = (r - radius[i]) / (radius[i + 1] - radius[i]);
                value[i] + s * (value[i + 1] - value[i])
            }
        }
    }

    /// Whether V is the same at every position.
    pub fn is_constant(&self) -> bool {
        match self {
            Self::Zero | Self::Constant(_) => true,
            Self::Polynomial(cs) => cs.iter().skip(1).all(|&c| c == 0.0),
            Self::Tabulated { value, .. } => value.iter().all(|&v| v == value[0]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn evaluation() {
        assert_eq!(Potential::Zero.eval(&[3.0]), 0.0);
        let p = Potential::Polynomial(vec![1.0, 0.0, 2.0]);
        assert!((p.eval(&[3.0, 4.0]) - 51.0).abs() < 1e-12);
        let t = Potential::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert!((t.eval(&[0.5]) - 1.0).abs() < 1e-15);
        assert_eq!(t.eval(&[-7.0]), 0.0);
        assert!(Potential::tabulated(vec![1.0, 0.5], vec![0.0, 0.0]).is_err());
    }
}
