//! Analytic stand-in systems: uniform-gas balls and sums of isotropic
//! Gaussians with exact gradients.

use serde::{Deserialize, Serialize};

use super::quadrature::{angular_product, radial_ball, radial_semi_infinite};
use super::{ueg_kinetic_prefactor, DensityGrid, GridPoint, Resolution, SpinDensityPoint};
use crate::error::{Result, XcError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinChannel {
    Alpha,
    Beta,
    /// Same amplitude in both channels.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub center: [f64; 3],
    pub exponent: f64,
    pub amplitude: f64,
    pub spin: SpinChannel,
}

impl GaussianTerm {
    pub fn new(center: [f64; 3], exponent: f64, amplitude: f64, spin: SpinChannel) -> Self {
        GaussianTerm {
            center,
            exponent,
            amplitude,
            spin,
        }
    }

    /// ∫ A exp(-a r²) d³r per populated channel.
    pub fn norm(&self) -> f64 {
        self.amplitude * (std::f64::consts::PI / self.exponent).powf(1.5)
    }

    fn channels(&self) -> &'static [usize] {
        match self.spin {
            SpinChannel::Alpha => &[0],
            SpinChannel::Beta => &[1],
            SpinChannel::Both => &[0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Uniform unpolarized gas filling a ball.
    Ueg {
        rho_per_spin: f64,
        #[serde(default = "default_ball_radius")]
        radius: f64,
    },
    GaussianSum { terms: Vec<GaussianTerm> },
}

fn default_ball_radius() -> f64 {
    2.0
}

fn default_tau_blend() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSystemSpec {
    #[serde(default)]
    pub label: String,
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub resolution: Resolution,
    /// c in τ_σ = τ_W,σ + c·τ_UEG,σ for Gaussian systems.
    #[serde(default = "default_tau_blend")]
    pub tau_blend: f64,
    /// Radial mapping parameter r_m (Bohr); derived from the exponents when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial_scale: Option<f64>,
}

impl SyntheticSystemSpec {
    pub fn ueg(rho_per_spin: f64, resolution: Resolution) -> Self {
        SyntheticSystemSpec {
            label: format!("ueg rho_s={rho_per_spin}"),
            kind: SyntheticKind::Ueg {
                rho_per_spin,
                radius: default_ball_radius(),
            },
            resolution,
            tau_blend: default_tau_blend(),
            radial_scale: None,
        }
    }

    pub fn gaussian(terms: Vec<GaussianTerm>, resolution: Resolution) -> Self {
        SyntheticSystemSpec {
            label: "gaussian".into(),
            kind: SyntheticKind::GaussianSum { terms },
            resolution,
            tau_blend: default_tau_blend(),
            radial_scale: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_tau_blend(mut self, c: f64) -> Self {
        self.tau_blend = c;
        self
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau_blend) {
            return Err(XcError::validation("tau_blend", "must lie in [0, 1]"));
        }
        if let Some(r) = self.radial_scale {
            if !(r > 0.0) || !r.is_finite() {
                return Err(XcError::validation("radial_scale", "must be positive"));
            }
        }
        match &self.kind {
            SyntheticKind::Ueg {
                rho_per_spin,
                radius,
            } => {
                if !(*rho_per_spin > 0.0) || !rho_per_spin.is_finite() {
                    return Err(XcError::validation("rho_per_spin", "must be positive"));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(XcError::validation("radius", "must be positive"));
                }
            }
            SyntheticKind::GaussianSum { terms } => {
                if terms.is_empty() {
                    return Err(XcError::validation("terms", "at least one term required"));
                }
                for (i, t) in terms.iter().enumerate() {
                    if !(t.exponent > 0.0) || !t.exponent.is_finite() {
                        return Err(XcError::validation(
                            "exponent",
                            format!("term {i} exponent must be positive"),
                        ));
                    }
                    if !(t.amplitude > 0.0) || !t.amplitude.is_finite() {
                        return Err(XcError::validation(
                            "amplitude",
                            format!("term {i} amplitude must be positive"),
                        ));
                    }
                    if !t.center.iter().all(|c| c.is_finite()) {
                        return Err(XcError::validation(
                            "center",
                            format!("term {i} center is not finite"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Analytic electron count of the continuous density.
    pub fn analytic_electron_count(&self) -> f64 {
        match &self.kind {
            SyntheticKind::Ueg {
                rho_per_spin,
                radius,
            } => 2.0 * rho_per_spin * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            SyntheticKind::GaussianSum { terms } => terms
                .iter()
                .map(|t| t.norm() * t.channels().len() as f64)
                .sum(),
        }
    }
}

/// Build the quadrature grid and density samples for a synthetic system.
pub fn generate(spec: &SyntheticSystemSpec) -> Result<DensityGrid> {
    spec.validate()?;
    let (n_rad, n_theta, n_phi) = spec.resolution.point_counts();
    let angular = angular_product(n_theta, n_phi);
    let k_c = ueg_kinetic_prefactor();
    let label = format!("{} [{}]", spec.label, spec.resolution.tag());

    let (points, samples) = match &spec.kind {
        SyntheticKind::Ueg {
            rho_per_spin,
            radius,
        } => {
            let tau = k_c * rho_per_spin.powf(5.0 / 3.0);
            let sample = SpinDensityPoint {
                rho: [*rho_per_spin; 2],
                grad: [[0.0; 3]; 2],
                tau: [tau; 2],
            };
            let mut points = Vec::with_capacity(n_rad * angular.len());
            for (r, wr) in radial_ball(n_rad, *radius) {
                for (dir, wa) in &angular {
                    points.push(GridPoint {
                        position: dir.map(|d| d * r),
                        weight: wr * wa,
                    });
                }
            }
            let samples = vec![sample; points.len()];
            (points, samples)
        }
        SyntheticKind::GaussianSum { terms } => {
            let center = weighted_centroid(terms);
            let r_m = spec.radial_scale.unwrap_or_else(|| default_radial_scale(terms));
            let mut points = Vec::with_capacity(n_rad * angular.len());
            let mut samples = Vec::with_capacity(n_rad * angular.len());
            for (r, wr) in radial_semi_infinite(n_rad, r_m) {
                for (dir, wa) in &angular {
                    let pos = [
                        center[0] + dir[0] * r,
                        center[1] + dir[1] * r,
                        center[2] + dir[2] * r,
                    ];
                    points.push(GridPoint {
                        position: pos,
                        weight: wr * wa,
                    });
                    samples.push(gaussian_sample(terms, pos, spec.tau_blend, k_c));
                }
            }
            (points, samples)
        }
    };
    DensityGrid::new(points, samples, label, spec.resolution)
}

fn weighted_centroid(terms: &[GaussianTerm]) -> [f64; 3] {
    let mut c = [0.0; 3];
    let mut total = 0.0;
    for t in terms {
        let n = t.norm() * t.channels().len() as f64;
        for k in 0..3 {
            c[k] += n * t.center[k];
        }
        total += n;
    }
    c.map(|x| x / total)
}

fn default_radial_scale(terms: &[GaussianTerm]) -> f64 {
    let a_min = terms
        .iter()
        .map(|t| t.exponent)
        .fold(f64::INFINITY, f64::min);
    1.0 / a_min.sqrt()
}

/// Exact density, gradient and blended τ of a Gaussian sum at one point.
pub(crate) fn gaussian_sample(
    terms: &[GaussianTerm],
    pos: [f64; 3],
    tau_blend: f64,
    k_c: f64,
) -> SpinDensityPoint {
    let mut rho = [0.0; 2];
    let mut grad = [[0.0; 3]; 2];
    for t in terms {
        let d = [
            pos[0] - t.center[0],
            pos[1] - t.center[1],
            pos[2] - t.center[2],
        ];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let val = t.amplitude * (-t.exponent * r2).exp();
        for &s in t.channels() {
            rho[s] += val;
            for k in 0..3 {
                grad[s][k] += -2.0 * t.exponent * d[k] * val;
            }
        }
    }
    let mut tau = [0.0; 2];
    for s in 0..2 {
        if rho[s] > 0.0 {
            let g2 = grad[s][0].powi(2) + grad[s][1].powi(2) + grad[s][2].powi(2);
            tau[s] = g2 / (8.0 * rho[s]) + tau_blend * k_c * rho[s].powf(5.0 / 3.0);
        } else {
            grad[s] = [0.0; 3];
        }
    }
    SpinDensityPoint { rho, grad, tau }
}
