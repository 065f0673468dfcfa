//! Operating points and the compact operating box they live in.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scheduling variable value θ ∈ ℝᵈ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatingPoint(Vec<f64>);

impl OperatingPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        OperatingPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn distance(&self, other: &OperatingPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for OperatingPoint {
    fn from(v: Vec<f64>) -> Self {
        OperatingPoint(v)
    }
}

impl From<&[f64]> for OperatingPoint {
    fn from(v: &[f64]) -> Self {
        OperatingPoint(v.to_vec())
    }
}

impl fmt::Display for OperatingPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Box constraints `lower ≤ θ ≤ upper` forming the compact operating space Θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxBounds")]
pub struct OperatingBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxBounds> for OperatingBox {
    type Error = Error;

    fn try_from(b: BoxBounds) -> Result<Self> {
        OperatingBox::new(b.lower, b.upper)
    }
}

impl OperatingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "operating box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument(
                "operating box must have at least one dimension".into(),
            ));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidArgument(format!(
                    "operating box requires finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(OperatingBox { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        OperatingBox {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn center(&self) -> OperatingPoint {
        OperatingPoint(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )
    }

    /// Closed-box membership test.
    pub fn contains(&self, point: &OperatingPoint) -> bool {
        point.dim() == self.dim()
            && point
                .coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (l, u))| *c >= *l && *c <= *u)
    }

    pub fn check_contains(&self, point: &OperatingPoint) -> Result<()> {
        self.check_dim(point)?;
        if self.contains(point) {
            Ok(())
        } else {
            Err(Error::OutsideBox {
                point: point.coords().to_vec(),
            })
        }
    }

    pub fn check_dim(&self, point: &OperatingPoint) -> Result<()> {
        if point.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "operating point",
                expected: self.dim(),
                found: point.dim(),
            });
        }
        Ok(())
    }

    pub fn clamp(&self, point: &OperatingPoint) -> OperatingPoint {
        OperatingPoint(
            point
                .coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(c, (l, u))| c.clamp(*l, *u))
                .collect(),
        )
    }

    /// Maps θ to `[-1, 1]ᵈ` coordinates relative to the box.
    pub fn normalize(&self, point: &OperatingPoint) -> Vec<f64> {
        point
            .coords()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(c, (l, u))| 2.0 * (c - l) / (u - l) - 1.0)
            .collect()
    }

    /// Regular grid including the box boundaries, `resolution[i] ≥ 2` nodes along
    /// axis `i`. Points are in lexicographic order (first coordinate slowest).
    pub fn grid(&self, resolution: &[usize]) -> Result<Vec<OperatingPoint>> {
        self.check_resolution(resolution, 2)?;
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                let r = resolution[i];
                (0..r)
                    .map(|k| {
                        if k + 1 == r {
                            self.upper[i]
                        } else {
                            self.lower[i] + (self.upper[i] - self.lower[i]) * k as f64 / (r - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(cartesian(&axes))
    }

    /// Cell centres of a regular `resolution` partition of the box (midpoint rule nodes).
    pub fn cell_centers(&self, resolution: &[usize]) -> Result<Vec<OperatingPoint>> {
        self.check_resolution(resolution, 1)?;
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                let r = resolution[i];
                let h = (self.upper[i] - self.lower[i]) / r as f64;
                (0..r).map(|k| self.lower[i] + (k as f64 + 0.5) * h).collect()
            })
            .collect();
        Ok(cartesian(&axes))
    }

    fn check_resolution(&self, resolution: &[usize], min: usize) -> Result<()> {
        if resolution.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "grid resolution",
                expected: self.dim(),
                found: resolution.len(),
            });
        }
        if let Some(r) = resolution.iter().find(|r| **r < min) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least {min} per dimension, got {r}"
            )));
        }
        Ok(())
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<OperatingPoint> {
    let mut points: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for prefix in &points {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        points = next;
    }
    points.into_iter().map(OperatingPoint).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_lexicographic_and_includes_corners() {
        let b = OperatingBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = b.grid(&[2, 3]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].coords(), &[0.0, -1.0]);
        assert_eq!(g[1].coords(), &[0.0, 0.0]);
        assert_eq!(g[5].coords(), &[1.0, 1.0]);
    }

    #[test]
    fn cell_centers_are_interior() {
        let b = OperatingBox::unit(2);
        let c = b.cell_centers(&[2, 2]).unwrap();
        assert_eq!(c[0].coords(), &[0.25, 0.25]);
        assert!(c.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn rejects_degenerate_box() {
        assert!(OperatingBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(OperatingBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(OperatingBox::unit(2).grid(&[1, 5]).is_err());
    }

    #[test]
    fn normalize_maps_to_unit_cube() {
        let b = OperatingBox::new(vec![1000.0, 10.0], vec![3000.0, 50.0]).unwrap();
        let s = b.normalize(&OperatingPoint::new(vec![1000.0, 50.0]));
        assert_eq!(s, vec![-1.0, 1.0]);
    }
}
