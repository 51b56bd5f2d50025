//! Quadrature grids carrying spin-resolved density data.
//!
//! A [`DensityGrid`] is immutable once built. The transformations here
//! (`scale_grid`, `swap_spin`) return new grids and never touch the input.

mod io;
pub mod quadrature;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Result, XcError};

pub use io::{load_grid, read_grid, save_grid, write_grid, GridWarning, LoadedGrid};
pub use synthetic::{generate, GaussianTerm, SpinChannel, SyntheticKind, SyntheticSystemSpec};

/// (3/10)(6π²)^{2/3}, the per-spin UEG kinetic prefactor.
pub fn ueg_kinetic_prefactor() -> f64 {
    0.3 * (6.0 * std::f64::consts::PI.powi(2)).powf(2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub position: [f64; 3],
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinDensityPoint {
    pub rho: [f64; 2],
    pub grad: [[f64; 3]; 2],
    pub tau: [f64; 2],
}

impl SpinDensityPoint {
    pub fn grad_norm(&self, spin: usize) -> f64 {
        let g = self.grad[spin];
        (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
    }

    /// von Weizsäcker kinetic density |∇ρ_σ|²/(8ρ_σ); zero where ρ_σ = 0.
    pub fn tau_weizsacker(&self, spin: usize) -> f64 {
        let rho = self.rho[spin];
        if rho <= 0.0 {
            return 0.0;
        }
        let g = self.grad_norm(spin);
        g * g / (8.0 * rho)
    }

    pub fn total_rho(&self) -> f64 {
        self.rho[0] + self.rho[1]
    }

    fn swapped(&self) -> Self {
        SpinDensityPoint {
            rho: [self.rho[1], self.rho[0]],
            grad: [self.grad[1], self.grad[0]],
            tau: [self.tau[1], self.tau[0]],
        }
    }

    fn is_finite(&self) -> bool {
        self.rho.iter().all(|v| v.is_finite())
            && self.tau.iter().all(|v| v.is_finite())
            && self.grad.iter().flatten().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Coarse,
    Fine,
    /// Hand-built or imported grids with no generator resolution.
    Custom,
}

impl Resolution {
    /// (radial, polar, azimuthal) point counts for generated grids.
    pub fn point_counts(self) -> (usize, usize, usize) {
        match self {
            Resolution::Coarse => (48, 4, 7),
            Resolution::Fine => (96, 6, 12),
            Resolution::Custom => (48, 4, 7),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Resolution::Coarse => "coarse",
            Resolution::Fine => "fine",
            Resolution::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub points: Vec<GridPoint>,
    pub samples: Vec<SpinDensityPoint>,
    pub label: String,
    pub resolution: Resolution,
}

impl DensityGrid {
    pub fn new(
        points: Vec<GridPoint>,
        samples: Vec<SpinDensityPoint>,
        label: impl Into<String>,
        resolution: Resolution,
    ) -> Result<Self> {
        let grid = DensityGrid {
            points,
            samples,
            label: label.into(),
            resolution,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.samples.len() {
            return Err(XcError::validation(
                "samples",
                format!(
                    "{} points but {} samples",
                    self.points.len(),
                    self.samples.len()
                ),
            ));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.weight > 0.0) || !p.weight.is_finite() {
                return Err(XcError::validation(
                    "weight",
                    format!("point {i} has non-positive weight {}", p.weight),
                ));
            }
            if !p.position.iter().all(|x| x.is_finite()) {
                return Err(XcError::validation(
                    "position",
                    format!("point {i} is not finite"),
                ));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(XcError::validation(
                    "samples",
                    format!("sample {i} has non-finite fields"),
                ));
            }
            if s.rho[0] < 0.0 || s.rho[1] < 0.0 {
                return Err(XcError::validation(
                    "rho",
                    format!("sample {i} has negative density"),
                ));
            }
            if s.tau[0] < 0.0 || s.tau[1] < 0.0 {
                return Err(XcError::validation(
                    "tau",
                    format!("sample {i} has negative kinetic density"),
                ));
            }
        }
        let n = self.electron_count();
        if !(n > 0.0) || !n.is_finite() {
            return Err(XcError::validation(
                "samples",
                format!("electron count {n} must be finite and positive"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn electron_count(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.samples)
            .map(|(p, s)| p.weight * s.total_rho())
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn max_abs_zeta(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.total_rho() > 0.0)
            .map(|s| ((s.rho[0] - s.rho[1]) / s.total_rho()).abs())
            .fold(0.0, f64::max)
    }
}

/// Σ w_i f_i over the grid.
pub fn integrate(grid: &DensityGrid, pointwise: &[f64]) -> Result<f64> {
    if pointwise.len() != grid.len() {
        return Err(XcError::Data(format!(
            "integrand has {} values for a grid of {} points",
            pointwise.len(),
            grid.len()
        )));
    }
    let mut acc = 0.0;
    for (i, (p, f)) in grid.points.iter().zip(pointwise).enumerate() {
        if !f.is_finite() {
            return Err(XcError::Data(format!("integrand value {i} is not finite")));
        }
        acc += p.weight * f;
    }
    Ok(acc)
}

/// Grid of the uniformly scaled density ρ_λ(r) = λ³ ρ(λ r).
pub fn scale_grid(grid: &DensityGrid, lambda: f64) -> Result<DensityGrid> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(XcError::Domain(format!(
            "scaling factor must be positive, got {lambda}"
        )));
    }
    if lambda == 1.0 {
        return Ok(grid.clone());
    }
    let l3 = lambda.powi(3);
    let l4 = lambda.powi(4);
    let l5 = lambda.powi(5);
    let points = grid
        .points
        .iter()
        .map(|p| GridPoint {
            position: p.position.map(|x| x / lambda),
            weight: p.weight / l3,
        })
        .collect();
    let samples = grid
        .samples
        .iter()
        .map(|s| SpinDensityPoint {
            rho: s.rho.map(|r| r * l3),
            grad: s.grad.map(|g| g.map(|c| c * l4)),
            tau: s.tau.map(|t| t * l5),
        })
        .collect();
    Ok(DensityGrid {
        points,
        samples,
        label: format!("{} (scaled x{lambda})", grid.label),
        resolution: grid.resolution,
    })
}

/// Exchange α and β fields at every point. Involutive.
pub fn swap_spin(grid: &DensityGrid) -> DensityGrid {
    DensityGrid {
        points: grid.points.clone(),
        samples: grid.samples.iter().map(SpinDensityPoint::swapped).collect(),
        label: grid.label.clone(),
        resolution: grid.resolution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polarized() -> DensityGrid {
        generate(&SyntheticSystemSpec::gaussian(
            vec![
                GaussianTerm::new([0.0, 0.0, 0.3], 1.2, 0.8, SpinChannel::Alpha),
                GaussianTerm::new([0.0, 0.0, -0.3], 0.7, 0.3, SpinChannel::Beta),
            ],
            Resolution::Coarse,
        ))
        .unwrap()
    }

    #[test]
    fn scaling_preserves_electron_count() {
        let g = polarized();
        let n0 = g.electron_count();
        for lambda in [0.5, 2.0, 5.0] {
            let n = scale_grid(&g, lambda).unwrap().electron_count();
            assert!(((n - n0) / n0).abs() < 1e-12, "lambda {lambda}");
        }
    }

    #[test]
    fn identity_scaling_returns_same_grid() {
        let g = polarized();
        assert_eq!(scale_grid(&g, 1.0).unwrap(), g);
    }

    #[test]
    fn nonpositive_lambda_is_domain_error() {
        let g = polarized();
        assert!(matches!(scale_grid(&g, 0.0), Err(XcError::Domain(_))));
        assert!(matches!(scale_grid(&g, -2.0), Err(XcError::Domain(_))));
    }

    #[test]
    fn swap_twice_is_identity_and_flips_zeta() {
        let g = polarized();
        let s = swap_spin(&g);
        assert_eq!(swap_spin(&s), g);
        for (a, b) in g.samples.iter().zip(&s.samples) {
            let za = (a.rho[0] - a.rho[1]) / a.total_rho();
            let zb = (b.rho[0] - b.rho[1]) / b.total_rho();
            if a.total_rho() > 0.0 {
                assert_eq!(za, -zb);
            }
        }
    }

    #[test]
    fn swap_on_unpolarized_grid_is_identity() {
        let g = generate(&SyntheticSystemSpec::gaussian(
            vec![GaussianTerm::new([0.0; 3], 1.0, 1.0, SpinChannel::Both)],
            Resolution::Coarse,
        ))
        .unwrap();
        assert_eq!(swap_spin(&g), g);
    }

    #[test]
    fn integrate_checks_length_and_finiteness() {
        let g = polarized();
        assert!(matches!(integrate(&g, &[1.0]), Err(XcError::Data(_))));
        let mut f = vec![1.0; g.len()];
        f[3] = f64::NAN;
        assert!(matches!(integrate(&g, &f), Err(XcError::Data(_))));
        let ones = vec![1.0; g.len()];
        assert!((integrate(&g, &ones).unwrap() - g.volume()).abs() < 1e-12 * g.volume());
    }

    #[test]
    fn grid_rejects_mismatched_lengths() {
        let g = polarized();
        let err = DensityGrid::new(
            g.points.clone(),
            g.samples[1..].to_vec(),
            "bad",
            Resolution::Custom,
        );
        assert!(matches!(err, Err(XcError::Validation { .. })));
    }
}
