//! Dimensionless descriptors consumed by the enhancement factors.
//!
//! Per-spin quantities use the spin-scaled conventions: t_σ = τ_σ/ρ_σ^{5/3}
//! with the UEG value k_c = (3/10)(6π²)^{2/3}, and τ_UEG,σ = k_c ρ_σ^{5/3}.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, XcError};
use crate::grid::{ueg_kinetic_prefactor, DensityGrid, SpinDensityPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConstants {
    pub k_c: f64,
    pub gamma_x: f64,
    pub gamma_css: f64,
    pub gamma_cos: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub a_hf: f64,
    pub density_floor: f64,
}

impl Default for DescriptorConstants {
    fn default() -> Self {
        DescriptorConstants {
            k_c: ueg_kinetic_prefactor(),
            gamma_x: 0.004,
            gamma_css: 0.2,
            gamma_cos: 0.006,
            epsilon: 1e-10,
            omega: 0.3,
            a_hf: 0.15,
            density_floor: 1e-12,
        }
    }
}

impl DescriptorConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("k_c", self.k_c),
            ("gamma_x", self.gamma_x),
            ("gamma_css", self.gamma_css),
            ("gamma_cos", self.gamma_cos),
            ("epsilon", self.epsilon),
            ("omega", self.omega),
            ("a_hf", self.a_hf),
            ("density_floor", self.density_floor),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(XcError::validation(name, "must be strictly positive"));
            }
        }
        if (self.k_c - ueg_kinetic_prefactor()).abs() > 1e-12 {
            return Err(XcError::validation("k_c", "must equal (3/10)(6π²)^{2/3}"));
        }
        Ok(())
    }

    /// Exchange constant c_{x,0} = 1 − a_HF.
    pub fn c_x0(&self) -> f64 {
        1.0 - self.a_hf
    }
}

pub fn compute_s(rho_sigma: f64, grad_norm_sigma: f64) -> f64 {
    grad_norm_sigma / rho_sigma.powf(4.0 / 3.0)
}

pub fn compute_t(rho_sigma: f64, tau_sigma: f64) -> f64 {
    tau_sigma / rho_sigma.powf(5.0 / 3.0)
}

pub fn compute_w(t: f64, k_c: f64) -> f64 {
    (k_c - t) / (k_c + t)
}

pub fn compute_u(s: f64, gamma: f64) -> f64 {
    let gs2 = gamma * s * s;
    gs2 / (1.0 + gs2)
}

/// Bounded gradient–kinetic cross term st/(1 + st + ε).
pub fn compute_v_st(s: f64, t: f64, epsilon: f64) -> f64 {
    let st = s * t;
    st / (1.0 + st + epsilon)
}

/// von Barth–Hedin spin interpolation f(ζ).
pub fn spin_fz(zeta: f64) -> Result<f64> {
    if !(zeta.abs() <= 1.0) {
        return Err(XcError::Domain(format!("|zeta| must not exceed 1, got {zeta}")));
    }
    Ok(fz_unchecked(zeta))
}

fn fz_unchecked(zeta: f64) -> f64 {
    let denom = 2f64.powf(4.0 / 3.0) - 2.0;
    ((1.0 + zeta).powf(4.0 / 3.0) + (1.0 - zeta).powf(4.0 / 3.0) - 2.0) / denom
}

/// Spin-weighted cross descriptors (z, x).
pub fn compute_z_x(fz: f64, s: f64, t: f64, epsilon: f64) -> (f64, f64) {
    let st = s * t;
    let fst = fz * st;
    let z = fst / (1.0 + fst + epsilon);
    let zst = z * st;
    let x = zst / (1.0 + zst + epsilon);
    (z, x)
}

/// Iso-orbital indicator α and its bounded map clamp(1/(1+α²), 0.01, 1).
pub fn compute_alpha_v(rho_sigma: f64, grad_norm_sigma: f64, tau_sigma: f64, k_c: f64) -> (f64, f64) {
    let tau_w = grad_norm_sigma * grad_norm_sigma / (8.0 * rho_sigma);
    let tau_ueg = k_c * rho_sigma.powf(5.0 / 3.0);
    let alpha = (tau_sigma - tau_w) / tau_ueg;
    let v = (1.0 / (1.0 + alpha * alpha)).clamp(0.01, 1.0);
    (alpha, v)
}

/// ζ, r_s and the spin-paired polarization terms ζ_α = ζ(1−ζ), ζ_β = −ζ(1+ζ).
pub fn compute_zeta_rs(rho_a: f64, rho_b: f64) -> (f64, f64, [f64; 2]) {
    let rho = rho_a + rho_b;
    let zeta = ((rho_a - rho_b) / rho).clamp(-1.0, 1.0);
    let rs = wigner_seitz(rho);
    (zeta, rs, [zeta * (1.0 - zeta), -zeta * (1.0 + zeta)])
}

pub fn wigner_seitz(rho: f64) -> f64 {
    (3.0 / (4.0 * PI * rho)).cbrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinAverages {
    pub s_avg: f64,
    pub t_avg: f64,
    pub w_avg: f64,
    pub u_avg: f64,
    pub v_avg: f64,
    pub rs_avg: f64,
}

/// Opposite-spin channel averages. `v` is the per-spin iso-orbital map.
pub fn compute_spin_averages(
    s: [f64; 2],
    t: [f64; 2],
    v: [f64; 2],
    rho_total: f64,
    c: &DescriptorConstants,
) -> SpinAverages {
    let s_avg = ((s[0] * s[0] + s[1] * s[1]) / 2.0).sqrt();
    let t_avg = 2.0 * t[0] * t[1] / (t[0] + t[1] + c.epsilon);
    SpinAverages {
        s_avg,
        t_avg,
        w_avg: compute_w(t_avg, c.k_c),
        u_avg: compute_u(s_avg, c.gamma_cos),
        v_avg: (v[0] + v[1]) / 2.0,
        rs_avg: wigner_seitz(rho_total),
    }
}

/// Names a descriptor slot. Per-spin names resolve against the spin the
/// channel is evaluated for; shared names are spin independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorName {
    S,
    T,
    W,
    UX,
    USs,
    VSt,
    ZSs,
    XSs,
    Alpha,
    VAlpha,
    RsSpin,
    ZetaSpin,
    /// Normalized index-space Laplacian. Depends on point ordering and
    /// spacing, so it is not a density functional; only negative fixtures use it.
    LaplNorm,
    Zeta,
    AbsZeta,
    Fz,
    Rs,
    SAvg,
    TAvg,
    WAvg,
    UAvg,
    VStAvg,
    ZAvg,
    XAvg,
    VAlphaAvg,
}

pub const N_SPIN_SLOTS: usize = 13;
pub const N_SHARED_SLOTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Spin(usize),
    Shared(usize),
}

impl DescriptorName {
    pub const ALL: [DescriptorName; 25] = [
        DescriptorName::S,
        DescriptorName::T,
        DescriptorName::W,
        DescriptorName::UX,
        DescriptorName::USs,
        DescriptorName::VSt,
        DescriptorName::ZSs,
        DescriptorName::XSs,
        DescriptorName::Alpha,
        DescriptorName::VAlpha,
        DescriptorName::RsSpin,
        DescriptorName::ZetaSpin,
        DescriptorName::LaplNorm,
        DescriptorName::Zeta,
        DescriptorName::AbsZeta,
        DescriptorName::Fz,
        DescriptorName::Rs,
        DescriptorName::SAvg,
        DescriptorName::TAvg,
        DescriptorName::WAvg,
        DescriptorName::UAvg,
        DescriptorName::VStAvg,
        DescriptorName::ZAvg,
        DescriptorName::XAvg,
        DescriptorName::VAlphaAvg,
    ];

    pub fn slot(self) -> Slot {
        let idx = self as usize;
        if idx < N_SPIN_SLOTS {
            Slot::Spin(idx)
        } else {
            Slot::Shared(idx - N_SPIN_SLOTS)
        }
    }

    pub fn is_per_spin(self) -> bool {
        matches!(self.slot(), Slot::Spin(_))
    }

    /// True when the value is a pointwise function of (ρ, ∇ρ, τ) that is
    /// unchanged by uniform coordinate scaling.
    pub fn is_scale_invariant(self) -> bool {
        !matches!(
            self,
            DescriptorName::LaplNorm | DescriptorName::RsSpin | DescriptorName::Rs
        )
    }

    /// Closed range guaranteed for generator-produced inputs, if any.
    pub fn range(self) -> Option<(f64, f64)> {
        use DescriptorName::*;
        match self {
            W | WAvg => Some((-1.0, 1.0)),
            UX | USs | UAvg | VSt | VStAvg | ZSs | XSs | ZAvg | XAvg | Fz | AbsZeta => {
                Some((0.0, 1.0))
            }
            VAlpha | VAlphaAvg => Some((0.01, 1.0)),
            Zeta => Some((-1.0, 1.0)),
            ZetaSpin => Some((-2.0, 0.25)),
            S | T | SAvg | TAvg | RsSpin | Rs => Some((0.0, f64::INFINITY)),
            Alpha | LaplNorm => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorPoint {
    pub spin: [[f64; N_SPIN_SLOTS]; 2],
    pub shared: [f64; N_SHARED_SLOTS],
    /// Some density entering this point was raised to the floor.
    pub floored: bool,
}

impl DescriptorPoint {
    pub fn get(&self, name: DescriptorName, spin: usize) -> f64 {
        match name.slot() {
            Slot::Spin(i) => self.spin[spin][i],
            Slot::Shared(i) => self.shared[i],
        }
    }

    fn set_spin(&mut self, spin: usize, name: DescriptorName, v: f64) {
        if let Slot::Spin(i) = name.slot() {
            self.spin[spin][i] = v;
        }
    }

    fn set_shared(&mut self, name: DescriptorName, v: f64) {
        if let Slot::Shared(i) = name.slot() {
            self.shared[i] = v;
        }
    }

    /// All descriptors at one sample point. `lapl_norm` is left at zero;
    /// [`grid_descriptors`] fills it.
    pub fn compute(sample: &SpinDensityPoint, c: &DescriptorConstants) -> Self {
        use DescriptorName as D;
        let mut dp = DescriptorPoint {
            spin: [[0.0; N_SPIN_SLOTS]; 2],
            shared: [0.0; N_SHARED_SLOTS],
            floored: false,
        };
        let rho_tot = sample.rho[0] + sample.rho[1];
        let rho_tot_f = if rho_tot < c.density_floor {
            dp.floored = true;
            c.density_floor
        } else {
            rho_tot
        };
        let zeta = ((sample.rho[0] - sample.rho[1]) / rho_tot_f).clamp(-1.0, 1.0);
        let fz = fz_unchecked(zeta);
        let zeta_terms = [zeta * (1.0 - zeta), -zeta * (1.0 + zeta)];

        let mut s = [0.0; 2];
        let mut t = [0.0; 2];
        let mut v_alpha = [0.0; 2];
        for sp in 0..2 {
            let rho = if sample.rho[sp] < c.density_floor {
                dp.floored = true;
                c.density_floor
            } else {
                sample.rho[sp]
            };
            let g = sample.grad_norm(sp);
            let ss = compute_s(rho, g);
            let tt = compute_t(rho, sample.tau[sp]);
            let (alpha, va) = compute_alpha_v(rho, g, sample.tau[sp], c.k_c);
            let (z, x) = compute_z_x(fz, ss, tt, c.epsilon);
            s[sp] = ss;
            t[sp] = tt;
            v_alpha[sp] = va;
            dp.set_spin(sp, D::S, ss);
            dp.set_spin(sp, D::T, tt);
            dp.set_spin(sp, D::W, compute_w(tt, c.k_c));
            dp.set_spin(sp, D::UX, compute_u(ss, c.gamma_x));
            dp.set_spin(sp, D::USs, compute_u(ss, c.gamma_css));
            dp.set_spin(sp, D::VSt, compute_v_st(ss, tt, c.epsilon));
            dp.set_spin(sp, D::ZSs, z);
            dp.set_spin(sp, D::XSs, x);
            dp.set_spin(sp, D::Alpha, alpha);
            dp.set_spin(sp, D::VAlpha, va);
            dp.set_spin(sp, D::RsSpin, wigner_seitz(rho));
            dp.set_spin(sp, D::ZetaSpin, zeta_terms[sp]);
        }
        let avg = compute_spin_averages(s, t, v_alpha, rho_tot_f, c);
        let (z_avg, x_avg) = compute_z_x(fz, avg.s_avg, avg.t_avg, c.epsilon);
        dp.set_shared(D::Zeta, zeta);
        dp.set_shared(D::AbsZeta, zeta.abs());
        dp.set_shared(D::Fz, fz);
        dp.set_shared(D::Rs, avg.rs_avg);
        dp.set_shared(D::SAvg, avg.s_avg);
        dp.set_shared(D::TAvg, avg.t_avg);
        dp.set_shared(D::WAvg, avg.w_avg);
        dp.set_shared(D::UAvg, avg.u_avg);
        dp.set_shared(D::VStAvg, compute_v_st(avg.s_avg, avg.t_avg, c.epsilon));
        dp.set_shared(D::ZAvg, z_avg);
        dp.set_shared(D::XAvg, x_avg);
        dp.set_shared(D::VAlphaAvg, avg.v_avg);
        dp
    }
}

/// Descriptors for every point of a grid, including the index-space
/// Laplacian feature.
pub fn grid_descriptors(grid: &DensityGrid, c: &DescriptorConstants) -> Vec<DescriptorPoint> {
    let mut out: Vec<DescriptorPoint> = grid
        .samples
        .iter()
        .map(|s| DescriptorPoint::compute(s, c))
        .collect();
    let lapl = index_laplacian(grid);
    let slot = match DescriptorName::LaplNorm.slot() {
        Slot::Spin(i) => i,
        Slot::Shared(_) => unreachable!(),
    };
    for (i, dp) in out.iter_mut().enumerate() {
        for sp in 0..2 {
            let rho = grid.samples[i].rho[sp].max(c.density_floor);
            let kf = (6.0 * PI * PI * rho).cbrt();
            dp.spin[sp][slot] = lapl[i][sp] / (kf * kf * rho + c.epsilon);
        }
    }
    out
}

/// Σ_c ∂g_c/∂(index) by central differences along the stored point order,
/// one-sided at the ends. Mirrors a stencil applied to the raw grid array.
fn index_laplacian(grid: &DensityGrid) -> Vec<[f64; 2]> {
    let n = grid.len();
    let mut out = vec![[0.0; 2]; n];
    if n < 2 {
        return out;
    }
    for i in 0..n {
        let (lo, hi, h) = if i == 0 {
            (0, 1, 1.0)
        } else if i == n - 1 {
            (n - 2, n - 1, 1.0)
        } else {
            (i - 1, i + 1, 2.0)
        };
        for sp in 0..2 {
            let a = grid.samples[lo].grad[sp];
            let b = grid.samples[hi].grad[sp];
            out[i][sp] = ((b[0] - a[0]) + (b[1] - a[1]) + (b[2] - a[2])) / h;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-10;

    #[test]
    fn s_unit_cases() {
        assert_eq!(compute_s(1.0, 0.0), 0.0);
        assert_eq!(compute_s(1.0, 1.0), 1.0);
    }

    #[test]
    fn w_and_u_limits() {
        let k = ueg_kinetic_prefactor();
        assert_eq!(compute_w(k, k), 0.0);
        assert_eq!(compute_w(compute_t(1.0, 0.0), k), 1.0);
        assert!((compute_u(1e6, 0.004) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn v_st_cases() {
        assert_eq!(compute_v_st(0.0, 3.0, EPS), 0.0);
        assert!((compute_v_st(1.0, 1.0, EPS) - 1.0 / (2.0 + EPS)).abs() < 1e-16);
        let mut prev = 0.0;
        for k in 1..40 {
            let st = 10f64.powf(k as f64 / 4.0 - 2.0);
            let v = compute_v_st(st, 1.0, EPS);
            assert!(v > prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn fz_anchor_values() {
        assert_eq!(spin_fz(0.0).unwrap(), 0.0);
        assert!((spin_fz(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((spin_fz(-1.0).unwrap() - 1.0).abs() < 1e-15);
        // 50-digit evaluation of [(1.5)^{4/3} + (0.5)^{4/3} - 2]/(2^{4/3} - 2)
        let reference = 0.21914659637633052;
        assert!((spin_fz(0.5).unwrap() - reference).abs() < 1e-15);
        assert!(matches!(spin_fz(1.2), Err(XcError::Domain(_))));
    }

    #[test]
    fn z_x_cases() {
        assert_eq!(compute_z_x(0.0, 2.0, 3.0, EPS), (0.0, 0.0));
        let (z, _) = compute_z_x(1.0, 1.0, 1.0, EPS);
        assert!((z - 1.0 / (2.0 + EPS)).abs() < 1e-16);
    }

    #[test]
    fn alpha_v_cases() {
        let k = ueg_kinetic_prefactor();
        let rho: f64 = 0.3;
        let tau_ueg = k * rho.powf(5.0 / 3.0);
        let (a, v) = compute_alpha_v(rho, 0.0, tau_ueg, k);
        assert!((a - 1.0).abs() < 1e-14 && (v - 0.5).abs() < 1e-14);
        let g: f64 = 0.4;
        let tw = g * g / (8.0 * rho);
        let (a, v) = compute_alpha_v(rho, g, tw, k);
        assert!(a.abs() < 1e-14 && (v - 1.0).abs() < 1e-14);
        let (a, v) = compute_alpha_v(rho, 0.0, 10.0 * tau_ueg, k);
        assert!((a - 10.0).abs() < 1e-12);
        assert_eq!(v, 0.01);
    }

    #[test]
    fn spin_average_cases() {
        let c = DescriptorConstants::default();
        let a = compute_spin_averages([0.7, 0.7], [2.0, 2.0], [0.3, 0.5], 1.0, &c);
        assert!((a.s_avg - 0.7).abs() < 1e-15);
        assert!((a.t_avg - 2.0).abs() < 1e-9);
        assert!((a.v_avg - 0.4).abs() < 1e-15);
        let b = compute_spin_averages([0.0, 0.0], [1.0, 3.0], [0.0, 0.0], 1.0, &c);
        assert!((b.t_avg - 1.5).abs() < 1e-9);
    }

    #[test]
    fn zeta_rs_cases() {
        let (z, _, terms) = compute_zeta_rs(0.2, 0.2);
        assert_eq!(z, 0.0);
        assert_eq!(terms, [0.0, -0.0]);
        let (z1, _, t1) = compute_zeta_rs(0.3, 0.1);
        let (z2, _, t2) = compute_zeta_rs(0.1, 0.3);
        assert_eq!(z1, -z2);
        assert_eq!(t1[0], t2[1]);
        assert_eq!(t1[1], t2[0]);
        let (_, rs, _) = compute_zeta_rs(3.0 / (8.0 * PI), 3.0 / (8.0 * PI));
        assert!((rs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_validate() {
        let c = DescriptorConstants::default();
        c.validate().unwrap();
        assert!((c.c_x0() - 0.85).abs() < 1e-15);
        let bad = DescriptorConstants { epsilon: 0.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn slots_partition_names() {
        let spin = DescriptorName::ALL.iter().filter(|d| d.is_per_spin()).count();
        assert_eq!(spin, N_SPIN_SLOTS);
        assert_eq!(DescriptorName::ALL.len() - spin, N_SHARED_SLOTS);
        for (i, d) in DescriptorName::ALL.iter().enumerate() {
            assert_eq!(*d as usize, i);
        }
    }
}
