//! Sampled cumulant generating functions and atomic heat distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Which line of the complex plane the counting field lives on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaAxis {
    /// `alpha` real: the cumulant generating function proper.
    #[default]
    Real,
    /// `alpha = i theta`: the log of the characteristic function.
    Imaginary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub axis: AlphaAxis,
    /// Real coordinates; on the imaginary axis the sample is `i * point`.
    pub points: Vec<f64>,
}

impl AlphaGrid {
    pub fn real(points: Vec<f64>) -> Self {
        Self {
            axis: AlphaAxis::Real,
            points,
        }
    }

    pub fn imaginary(points: Vec<f64>) -> Self {
        Self {
            axis: AlphaAxis::Imaginary,
            points,
        }
    }

    /// `count` evenly spaced points from `min` to `max` inclusive.
    pub fn linspace(min: f64, max: f64, count: usize, axis: AlphaAxis) -> Self {
        let points = match count {
            0 => Vec::new(),
            1 => vec![min],
            _ => (0..count)
                .map(|k| min + (max - min) * k as f64 / (count - 1) as f64)
                .collect(),
        };
        Self { axis, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("alpha grid is empty".into()));
        }
        if self.points.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput(
                "alpha grid contains non-finite points".into(),
            ));
        }
        Ok(())
    }

    pub fn complex_points(&self) -> impl Iterator<Item = C64> + '_ {
        self.points.iter().map(move |&a| self.to_complex(a))
    }

    pub fn to_complex(&self, a: f64) -> C64 {
        match self.axis {
            AlphaAxis::Real => C64::new(a, 0.0),
            AlphaAxis::Imaginary => C64::new(0.0, a),
        }
    }

    /// Index of the sample closest to zero.
    pub fn origin_index(&self) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map_or(0, |(i, _)| i)
    }

    /// Whether the points are strictly increasing, which branch tracking needs.
    pub fn is_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[0] < w[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Exact many-body two-time measurement.
    Oracle,
    /// Quasi-free determinant formula.
    Determinant,
    /// Quasi-free Renyi relative entropy of correlation matrices.
    Renyi,
    /// Closed-form limit.
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum PointStatus {
    Ok,
    /// Computed, but outside the window where finiteness is guaranteed.
    OutsideWindow,
    /// Not computed; the value is NaN.
    Failed(String),
}

impl PointStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, PointStatus::Ok)
    }

    pub fn has_value(&self) -> bool {
        !matches!(self, PointStatus::Failed(_))
    }
}

/// Samples of `chi(alpha) = log <exp(-alpha dQ)>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgfCurve {
    pub grid: AlphaGrid,
    pub values: Vec<C64>,
    pub status: Vec<PointStatus>,
    pub provenance: Provenance,
    pub chain_length: Option<usize>,
    pub adiabatic_time: Option<f64>,
}

impl CgfCurve {
    pub fn new(grid: AlphaGrid, values: Vec<C64>, provenance: Provenance) -> Self {
        let status = values
            .iter()
            .map(|v| {
                if v.re.is_finite() && v.im.is_finite() {
                    PointStatus::Ok
                } else {
                    PointStatus::Failed("non-finite value".into())
                }
            })
            .collect();
        Self {
            grid,
            values,
            status,
            provenance,
            chain_length: None,
            adiabatic_time: None,
        }
    }

    /// Real-axis curve from real samples.
    pub fn from_real(points: Vec<f64>, values: Vec<f64>, provenance: Provenance) -> Self {
        Self::new(
            AlphaGrid::real(points),
            values.into_iter().map(|v| C64::new(v, 0.0)).collect(),
            provenance,
        )
    }

    pub fn with_tags(mut self, chain_length: Option<usize>, adiabatic_time: Option<f64>) -> Self {
        self.chain_length = chain_length;
        self.adiabatic_time = adiabatic_time;
        self
    }

    pub fn alphas(&self) -> &[f64] {
        &self.grid.points
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn all_ok(&self) -> bool {
        self.status.iter().all(PointStatus::is_ok)
    }

    /// Value at a grid point equal to `alpha` within `1e-12`.
    pub fn value_at(&self, alpha: f64) -> Option<C64> {
        self.grid
            .points
            .iter()
            .position(|&a| (a - alpha).abs() <= 1e-12 * (1.0 + alpha.abs()))
            .map(|i| self.values[i])
    }

    /// `max |chi_self - chi_other|` over points valid in both curves.
    pub fn max_abs_diff(&self, other: &CgfCurve) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput(
                "curves are sampled on different grids".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.status.iter().zip(&other.status))
            .filter(|(_, (a, b))| a.has_value() && b.has_value())
            .map(|((x, y), _)| (x - y).norm())
            .fold(0.0, f64::max))
    }

    /// Smallest normalized second divided difference on the real axis;
    /// a convex curve gives a value `>= 0` up to round-off.
    pub fn min_second_difference(&self) -> f64 {
        let a = &self.grid.points;
        let v = &self.values;
        (1..a.len().saturating_sub(1))
            .map(|i| {
                let left = (v[i].re - v[i - 1].re) / (a[i] - a[i - 1]);
                let right = (v[i + 1].re - v[i].re) / (a[i + 1] - a[i]);
                (right - left) / (a[i + 1] - a[i - 1]) * 2.0
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.grid.axis == AlphaAxis::Real && self.min_second_difference() >= -tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatAtom {
    pub value: f64,
    pub prob: f64,
}

/// Atomic distribution of a transferred energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatDistribution {
    pub atoms: Vec<HeatAtom>,
    pub bin_tol: f64,
}

/// Default merge tolerance for heat values.
pub const DEFAULT_BIN_TOL: f64 = 1e-9;

impl HeatDistribution {
    /// Sorts the samples and merges chains of values closer than `bin_tol`.
    /// Merged atoms sit at the probability-weighted mean; atoms with zero
    /// probability are dropped.
    pub fn from_samples(mut samples: Vec<(f64, f64)>, bin_tol: f64) -> Self {
        samples.retain(|s| s.1 > 0.0);
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<HeatAtom> = Vec::new();
        let mut last_value = f64::NEG_INFINITY;
        let mut weighted = 0.0;
        for (value, prob) in samples {
            match atoms.last_mut() {
                Some(atom) if value - last_value <= bin_tol => {
                    atom.prob += prob;
                    weighted += prob * value;
                    atom.value = weighted / atom.prob;
                }
                _ => {
                    atoms.push(HeatAtom { value, prob });
                    weighted = prob * value;
                }
            }
            last_value = value;
        }
        Self { atoms, bin_tol }
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.value).sum::<f64>() / self.total_probability()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .map(|a| a.prob * (a.value - m).powi(2))
            .sum::<f64>()
            / self.total_probability()
    }

    /// `log sum_k P_k exp(-alpha Q_k)` for complex `alpha`, evaluated with a
    /// log-sum-exp shift on the real part.
    pub fn cgf(&self, alpha: C64) -> C64 {
        let shift = self
            .atoms
            .iter()
            .map(|a| a.prob.ln() - alpha.re * a.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: C64 = self
            .atoms
            .iter()
            .map(|a| (C64::new(a.prob.ln() - shift, 0.0) - alpha * a.value).exp())
            .sum();
        sum.ln() + shift
    }

    pub fn cgf_curve(&self, grid: &AlphaGrid, provenance: Provenance) -> CgfCurve {
        let mut values: Vec<C64> = grid.complex_points().map(|a| self.cgf(a)).collect();
        if grid.axis == AlphaAxis::Imaginary && !values.is_empty() && grid.is_increasing() {
            let origin = grid.origin_index();
            crate::numerics::unwrap_log_branch(&mut values, origin);
        }
        CgfCurve::new(grid.clone(), values, provenance)
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let total = self.total_probability();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!("distribution sums to {total}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn merging_respects_tolerance() {
        let d = HeatDistribution::from_samples(
            vec![
                (1.0, 0.25),
                (0.0, 0.25),
                (1.0 + 5e-10, 0.25),
                (2.0, 0.25),
                (3.0, 0.0),
            ],
            1e-9,
        );
        assert_eq!(d.atoms.len(), 3);
        assert_abs_diff_eq!(d.atoms[1].prob, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.atoms[1].value, 1.0 + 2.5e-10, epsilon = 1e-15);
        assert!(d
            .atoms
            .windows(2)
            .all(|w| w[1].value - w[0].value > d.bin_tol));
        d.check_normalized(1e-12).unwrap();
    }

    #[test]
    fn cgf_of_point_mass() {
        let d = HeatDistribution::from_samples(vec![(0.7, 1.0)], 1e-9);
        assert_abs_diff_eq!(d.cgf(C64::new(2.0, 0.0)).re, -1.4, epsilon = 1e-14);
        let grid = AlphaGrid::linspace(-3.0, 3.0, 61, AlphaAxis::Imaginary);
        let curve = d.cgf_curve(&grid, Provenance::ClosedForm);
        // Branch tracking keeps the phase linear through +-pi.
        for (theta, v) in grid.points.iter().zip(&curve.values) {
            assert_abs_diff_eq!(v.im, -0.7 * theta, epsilon = 1e-12);
        }
    }

    #[test]
    fn convexity_detection() {
        let pts: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let convex = CgfCurve::from_real(
            pts.clone(),
            pts.iter().map(|a| a * a).collect(),
            Provenance::ClosedForm,
        );
        assert!(convex.is_convex(1e-8));
        let concave = CgfCurve::from_real(
            pts.clone(),
            pts.iter().map(|a| -a * a).collect(),
            Provenance::ClosedForm,
        );
        assert!(!concave.is_convex(1e-8));
        assert_eq!(convex.value_at(0.3).unwrap().re, 0.3 * 0.3);
    }

    proptest! {
        #[test]
        fn distribution_cgf_is_convex_and_normalized(
            raw in prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..8),
        ) {
            let total: f64 = raw.iter().map(|r| r.1).sum();
            let samples: Vec<(f64, f64)> = raw.iter().map(|&(q, p)| (q, p / total)).collect();
            let d = HeatDistribution::from_samples(samples, 1e-9);
            let grid = AlphaGrid::linspace(-2.0, 2.0, 41, AlphaAxis::Real);
            let curve = d.cgf_curve(&grid, Provenance::Oracle);
            prop_assert!(curve.is_convex(1e-8));
            prop_assert!(curve.value_at(0.0).unwrap().norm() < 1e-12);
        }
    }
}
