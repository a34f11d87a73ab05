//! Complex Gaussian multi-well potentials.
//!
//! A potential is a superposition of `N` Gaussian wells
//!
//! ```text
//! V(x) = sum_n (V_n + i Gamma_n) exp(-(x - a_n)^2 / (2 sigma_n^2))
//! ```
//!
//! where `V_n` is the depth, `Gamma_n` the gain (> 0) or loss (< 0) strength,
//! `sigma_n` the width and `a_n` the center of well `n`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("well {}: {field} must be finite (got {value})", .index + 1)]
    NotFinite {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("well {}: width must be positive (got {value})", .index + 1)]
    NonPositiveWidth { index: usize, value: f64 },
    #[error("a potential needs at least one well")]
    Empty,
    #[error("well centers must be strictly increasing (well {} at {center} follows {previous})", .index + 1)]
    Unordered {
        index: usize,
        center: f64,
        previous: f64,
    },
    #[error("well {} out of range for a {len}-well potential", .index + 1)]
    IndexOutOfRange { index: usize, len: usize },
}

/// One Gaussian well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianWell {
    pub depth: f64,
    pub gain_loss: f64,
    pub width: f64,
    pub center: f64,
}

impl GaussianWell {
    pub fn new(depth: f64, gain_loss: f64, width: f64, center: f64) -> Self {
        Self {
            depth,
            gain_loss,
            width,
            center,
        }
    }

    /// Complex prefactor `V_n + i Gamma_n`.
    pub fn amplitude(&self) -> Complex64 {
        Complex64::new(self.depth, self.gain_loss)
    }

    /// Gaussian envelope of the well, equal to 1 at its center.
    pub fn profile(&self, x: f64) -> f64 {
        let d = x - self.center;
        (-d * d / (2.0 * self.width * self.width)).exp()
    }

    pub fn evaluate(&self, x: f64) -> Complex64 {
        self.amplitude() * self.profile(x)
    }

    fn validate(&self, index: usize) -> Result<(), PotentialError> {
        for (field, value) in [
            ("depth", self.depth),
            ("gain_loss", self.gain_loss),
            ("width", self.width),
            ("center", self.center),
        ] {
            if !value.is_finite() {
                return Err(PotentialError::NotFinite {
                    index,
                    field,
                    value,
                });
            }
        }
        if self.width <= 0.0 {
            return Err(PotentialError::NonPositiveWidth {
                index,
                value: self.width,
            });
        }
        Ok(())
    }
}

/// A scalar parameter of one well, addressed by 0-based well index.
///
/// Textual form (used in config files) is `depth:<n>` or `gain_loss:<n>` with
/// a 1-based well number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Depth(usize),
    GainLoss(usize),
}

impl Param {
    pub fn well(&self) -> usize {
        match *self {
            Param::Depth(n) | Param::GainLoss(n) => n,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Depth(n) => write!(f, "depth:{}", n + 1),
            Param::GainLoss(n) => write!(f, "gain_loss:{}", n + 1),
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, number) = s
            .split_once(':')
            .ok_or_else(|| format!("parameter `{s}` is not of the form <kind>:<well>"))?;
        let well: usize = number
            .trim()
            .parse()
            .map_err(|_| format!("parameter `{s}`: bad well number"))?;
        if well == 0 {
            return Err(format!("parameter `{s}`: wells are numbered from 1"));
        }
        match kind.trim() {
            "depth" => Ok(Param::Depth(well - 1)),
            "gain_loss" => Ok(Param::GainLoss(well - 1)),
            other => Err(format!(
                "parameter `{s}`: unknown kind `{other}` (expected depth or gain_loss)"
            )),
        }
    }
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An ordered, validated list of Gaussian wells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiWellPotential {
    wells: Vec<GaussianWell>,
}

impl MultiWellPotential {
    pub fn new(wells: Vec<GaussianWell>) -> Result<Self, PotentialError> {
        if wells.is_empty() {
            return Err(PotentialError::Empty);
        }
        for (i, w) in wells.iter().enumerate() {
            w.validate(i)?;
        }
        for (i, pair) in wells.windows(2).enumerate() {
            if pair[1].center <= pair[0].center {
                return Err(PotentialError::Unordered {
                    index: i + 1,
                    center: pair[1].center,
                    previous: pair[0].center,
                });
            }
        }
        Ok(Self { wells })
    }

    pub fn wells(&self) -> &[GaussianWell] {
        &self.wells
    }

    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    /// Exact superposition of all wells at `x`.
    pub fn evaluate(&self, x: f64) -> Complex64 {
        self.wells.iter().map(|w| w.evaluate(x)).sum()
    }

    /// Upper bound on `|V(x)|` over the real line.
    pub fn magnitude_bound(&self) -> f64 {
        self.wells.iter().map(|w| w.amplitude().norm()).sum()
    }

    pub fn is_real(&self) -> bool {
        self.wells.iter().all(|w| w.gain_loss == 0.0)
    }

    /// Copy with every gain-loss parameter set to zero.
    pub fn real_part(&self) -> Self {
        Self {
            wells: self
                .wells
                .iter()
                .map(|w| GaussianWell {
                    gain_loss: 0.0,
                    ..*w
                })
                .collect(),
        }
    }

    /// Copy with every gain-loss parameter negated, i.e. the potential `V*(x)`.
    pub fn conjugate(&self) -> Self {
        Self {
            wells: self
                .wells
                .iter()
                .map(|w| GaussianWell {
                    gain_loss: -w.gain_loss,
                    ..*w
                })
                .collect(),
        }
    }

    /// The real single well `index` (0-based) on its own, as used for the
    /// localized basis of the matrix model.
    pub fn single_well(&self, index: usize) -> Result<Self, PotentialError> {
        let w = self
            .wells
            .get(index)
            .ok_or(PotentialError::IndexOutOfRange {
                index,
                len: self.wells.len(),
            })?;
        Ok(Self {
            wells: vec![GaussianWell {
                gain_loss: 0.0,
                ..*w
            }],
        })
    }

    /// Union of two well lists, re-sorted by center.
    pub fn merged(&self, other: &Self) -> Result<Self, PotentialError> {
        let mut wells: Vec<GaussianWell> = self.wells.iter().chain(&other.wells).copied().collect();
        wells.sort_by(|a, b| a.center.total_cmp(&b.center));
        Self::new(wells)
    }

    pub fn param(&self, p: Param) -> Result<f64, PotentialError> {
        let w = self.wells.get(p.well()).ok_or(PotentialError::IndexOutOfRange {
            index: p.well(),
            len: self.wells.len(),
        })?;
        Ok(match p {
            Param::Depth(_) => w.depth,
            Param::GainLoss(_) => w.gain_loss,
        })
    }

    pub fn with_param(&self, p: Param, value: f64) -> Result<Self, PotentialError> {
        let mut wells = self.wells.clone();
        let len = wells.len();
        let w = wells
            .get_mut(p.well())
            .ok_or(PotentialError::IndexOutOfRange {
                index: p.well(),
                len,
            })?;
        match p {
            Param::Depth(_) => w.depth = value,
            Param::GainLoss(_) => w.gain_loss = value,
        }
        Self::new(wells)
    }

    pub fn with_params(&self, params: &[Param], values: &[f64]) -> Result<Self, PotentialError> {
        debug_assert_eq!(params.len(), values.len());
        let mut out = self.clone();
        for (&p, &v) in params.iter().zip(values) {
            out = out.with_param(p, v)?;
        }
        Ok(out)
    }

    /// Largest `|a_n| + 8 sigma_n`-style extent: `max|a_n| + 8 max sigma_n`.
    pub fn default_half_width(&self) -> f64 {
        let reach = self.wells.iter().map(|w| w.center.abs()).fold(0.0, f64::max);
        let sigma = self.wells.iter().map(|w| w.width).fold(0.0, f64::max);
        reach + 8.0 * sigma
    }
}

impl<'de> Deserialize<'de> for MultiWellPotential {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            wells: Vec<GaussianWell>,
        }
        let raw = Raw::deserialize(deserializer)?;
        MultiWellPotential::new(raw.wells).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn well(depth: f64, gain_loss: f64, width: f64, center: f64) -> GaussianWell {
        GaussianWell::new(depth, gain_loss, width, center)
    }

    #[test]
    fn peak_value_at_center() {
        let p = MultiWellPotential::new(vec![well(-3.0, 0.5, 1.0, 0.0)]).unwrap();
        let v = p.evaluate(0.0);
        assert_eq!(v, Complex64::new(-3.0, 0.5));
    }

    #[test]
    fn symmetric_double_well_midpoint() {
        let p = MultiWellPotential::new(vec![well(-3.0, 0.0, 1.0, -1.5), well(-3.0, 0.0, 1.0, 1.5)])
            .unwrap();
        let v = p.evaluate(0.0);
        assert_relative_eq!(v.re, 2.0 * -3.0 * (-1.125f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(v.re, -1.947915, epsilon = 1e-6);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn asymmetric_complex_point_matches_scalar_formula() {
        let p = MultiWellPotential::new(vec![
            well(-3.0, 0.4, 1.0, -1.5),
            well(-3.4, -0.178948, 1.0, 1.5),
        ])
        .unwrap();
        // Hand-expanded formula evaluated independently of the well loop.
        let x = 0.7_f64;
        let g1 = (-(x + 1.5).powi(2) / 2.0).exp();
        let g2 = (-(x - 1.5).powi(2) / 2.0).exp();
        let expected = Complex64::new(-3.0 * g1 - 3.4 * g2, 0.4 * g1 - 0.178948 * g2);
        let v = p.evaluate(x);
        assert_relative_eq!(v.re, expected.re, epsilon = 1e-14);
        assert_relative_eq!(v.im, expected.im, epsilon = 1e-14);
        // Frozen values of the same expression.
        assert_relative_eq!(v.re, -2.735_671_578_428_707_6, epsilon = 1e-12);
        assert_relative_eq!(v.im, -0.094_374_270_902_508_3, epsilon = 1e-12);
    }

    #[test]
    fn real_part_zeroes_gain_loss() {
        let p = MultiWellPotential::new(vec![well(-3.0, 0.4, 1.0, -1.5), well(-3.4, -0.18, 1.0, 1.5)])
            .unwrap();
        let r = p.real_part();
        assert_eq!(r.wells()[0].gain_loss, 0.0);
        assert_eq!(r.wells()[1].gain_loss, 0.0);
        assert_eq!(r.wells()[0].depth, -3.0);
        assert_eq!(r.wells()[1].depth, -3.4);
        assert_eq!(r.real_part(), r);
        for x in [-4.0, -1.0, 0.0, 0.3, 2.5] {
            assert_eq!(r.evaluate(x).im, 0.0);
        }
    }

    #[test]
    fn single_well_projection() {
        let p = MultiWellPotential::new(vec![
            well(-1.8, -0.17, 0.7, -3.0),
            well(-2.0, 0.32, 0.7, 0.0),
            well(-2.2, -0.15, 0.7, 3.0),
        ])
        .unwrap();
        let s = p.single_well(1).unwrap();
        assert_eq!(s.wells(), &[well(-2.0, 0.0, 0.7, 0.0)]);

        let one = MultiWellPotential::new(vec![well(-3.0, 0.5, 1.0, 0.0)]).unwrap();
        assert_eq!(one.single_well(0).unwrap(), one.real_part());

        let two = MultiWellPotential::new(vec![well(-3.0, 0.0, 1.0, -1.0), well(-3.0, 0.0, 1.0, 1.0)])
            .unwrap();
        assert_eq!(
            two.single_well(2),
            Err(PotentialError::IndexOutOfRange { index: 2, len: 2 })
        );
    }

    #[test]
    fn validation_errors() {
        assert_eq!(MultiWellPotential::new(vec![]), Err(PotentialError::Empty));
        assert!(matches!(
            MultiWellPotential::new(vec![well(-1.0, 0.0, -1.0, 0.0)]),
            Err(PotentialError::NonPositiveWidth { index: 0, .. })
        ));
        assert!(matches!(
            MultiWellPotential::new(vec![well(f64::NAN, 0.0, 1.0, 0.0)]),
            Err(PotentialError::NotFinite { field: "depth", .. })
        ));
        assert!(matches!(
            MultiWellPotential::new(vec![well(-1.0, 0.0, 1.0, 1.0), well(-1.0, 0.0, 1.0, 1.0)]),
            Err(PotentialError::Unordered { index: 1, .. })
        ));
    }

    #[test]
    fn param_round_trip() {
        for s in ["depth:1", "gain_loss:3"] {
            let p: Param = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!("gain_loss:2".parse::<Param>(), Ok(Param::GainLoss(1)));
        assert!("depth:0".parse::<Param>().is_err());
        assert!("width:1".parse::<Param>().is_err());
    }

    fn arb_well(center: f64) -> impl Strategy<Value = GaussianWell> {
        (-5.0..5.0f64, -2.0..2.0f64, 0.1..3.0f64)
            .prop_map(move |(d, g, s)| GaussianWell::new(d, g, s, center))
    }

    proptest! {
        #[test]
        fn evaluation_is_linear_in_wells(
            a in arb_well(-2.0), b in arb_well(-0.5), c in arb_well(1.0), x in -10.0..10.0f64
        ) {
            let left = MultiWellPotential::new(vec![a, c]).unwrap();
            let right = MultiWellPotential::new(vec![b]).unwrap();
            let all = left.merged(&right).unwrap();
            let sum = left.evaluate(x) + right.evaluate(x);
            prop_assert!((all.evaluate(x) - sum).norm() < 1e-12);
        }

        #[test]
        fn mirror_configuration_is_pt_symmetric(
            depth in -5.0..0.0f64, g in -2.0..2.0f64, s in 0.2..2.0f64, a in 0.1..4.0f64,
            x in -10.0..10.0f64
        ) {
            let p = MultiWellPotential::new(vec![
                GaussianWell::new(depth, g, s, -a),
                GaussianWell::new(depth, -g, s, a),
            ]).unwrap();
            prop_assert!((p.evaluate(-x) - p.evaluate(x).conj()).norm() < 1e-13);
        }

        #[test]
        fn magnitude_is_bounded(a in arb_well(-1.0), b in arb_well(2.0), x in -20.0..20.0f64) {
            let p = MultiWellPotential::new(vec![a, b]).unwrap();
            prop_assert!(p.evaluate(x).norm() <= p.magnitude_bound() + 1e-12);
        }
    }
}
