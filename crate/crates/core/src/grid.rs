//! Uniform one-dimensional grids with Dirichlet end points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::MultiWellPotential;

/// Number of points used when a grid is resolved automatically.
pub const DEFAULT_POINTS: usize = 2001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid bounds must be finite with x_min < x_max (got [{x_min}, {x_max}])")]
    BadBounds { x_min: f64, x_max: f64 },
    #[error("a grid needs at least 3 points (got {0})")]
    TooFewPoints(usize),
}

/// `n_points` equally spaced samples on `[x_min, x_max]`, end points included.
///
/// Wavefunctions live on the `n_points - 2` interior points; they vanish at
/// both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self, GridError> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(GridError::BadBounds { x_min, x_max });
        }
        if n_points < 3 {
            return Err(GridError::TooFewPoints(n_points));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    /// Symmetric domain `[-L, L]` with `L = max|a_n| + 8 max sigma_n`.
    pub fn auto(potential: &MultiWellPotential, n_points: Option<usize>) -> Self {
        let half = potential.default_half_width();
        Self::new(-half, half, n_points.unwrap_or(DEFAULT_POINTS))
            .expect("default grid is always valid")
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    /// Number of unknowns, i.e. interior points.
    pub fn interior_len(&self) -> usize {
        self.n_points - 2
    }

    /// Position of grid point `i` (0 ..= n_points-1). The last point is
    /// pinned to `x_max` exactly.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.spacing()
        }
    }

    /// Interior coordinates, in order.
    pub fn interior(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (1..self.n_points - 1).map(move |i| self.x(i))
    }

    /// Trapezoid rule for a function sampled on the interior points and
    /// vanishing at both ends.
    pub fn integrate<T>(&self, samples: impl IntoIterator<Item = T>) -> T
    where
        T: std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
    {
        samples.into_iter().sum::<T>() * self.spacing()
    }

    /// The same grid with the spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
            ..*self
        }
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            x_min: f64,
            x_max: f64,
            n_points: usize,
        }
        let raw = Raw::deserialize(deserializer)?;
        Grid::new(raw.x_min, raw.x_max, raw.n_points).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::GaussianWell;

    #[test]
    fn spacing_and_endpoints() {
        let g = Grid::new(-2.0, 2.0, 5).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.interior().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.x(4), 2.0);
        let h = g.spacing() * (g.n_points() - 1) as f64;
        assert!((g.x_min() + h - g.x_max()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid::new(1.0, 1.0, 10), Err(GridError::BadBounds { .. })));
        assert!(matches!(Grid::new(0.0, f64::INFINITY, 10), Err(GridError::BadBounds { .. })));
        assert_eq!(Grid::new(0.0, 1.0, 2), Err(GridError::TooFewPoints(2)));
    }

    #[test]
    fn auto_domain_covers_wells() {
        let p = MultiWellPotential::new(vec![
            GaussianWell::new(-3.0, 0.0, 1.0, -1.5),
            GaussianWell::new(-3.0, 0.0, 1.0, 1.5),
        ])
        .unwrap();
        let g = Grid::auto(&p, None);
        assert_eq!(g.x_min(), -9.5);
        assert_eq!(g.x_max(), 9.5);
        assert_eq!(g.n_points(), DEFAULT_POINTS);
    }

    #[test]
    fn trapezoid_of_gaussian() {
        let g = Grid::new(-10.0, 10.0, 2001).unwrap();
        let integral: f64 = g.integrate(g.interior().map(|x| (-x * x).exp()));
        assert!((integral - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }
}
