//! Local reference energy densities: spin-scaled Slater exchange, PW92
//! correlation with a same-spin/opposite-spin split, and the erf
//! short-range attenuation of exchange.

use std::f64::consts::PI;

use crate::descriptors::{spin_fz, wigner_seitz};

/// PW92 `G(r_s)` parameters (A, α₁, β₁..β₄).
#[derive(Debug, Clone, Copy)]
pub struct Pw92Params {
    pub a: f64,
    pub alpha1: f64,
    pub beta: [f64; 4],
}

pub const PW92_PARAMAGNETIC: Pw92Params = Pw92Params {
    a: 0.031091,
    alpha1: 0.21370,
    beta: [7.5957, 3.5876, 1.6382, 0.49294],
};

pub const PW92_FERROMAGNETIC: Pw92Params = Pw92Params {
    a: 0.015545,
    alpha1: 0.20548,
    beta: [14.1189, 6.1977, 3.3662, 0.62517],
};

/// Parameters of −α_c(r_s).
pub const PW92_SPIN_STIFFNESS: Pw92Params = Pw92Params {
    a: 0.016887,
    alpha1: 0.11125,
    beta: [10.357, 3.6231, 0.88026, 0.49671],
};

const FZ_PP0: f64 = 1.709921;

/// Exchange energy density of one spin channel, −(3/4)(6/π)^{1/3} ρ_σ^{4/3}.
pub fn slater_exchange_spin(rho_sigma: f64) -> f64 {
    if rho_sigma <= 0.0 {
        return 0.0;
    }
    -0.75 * (6.0 / PI).cbrt() * rho_sigma.powf(4.0 / 3.0)
}

pub fn pw92_g(rs: f64, p: &Pw92Params) -> f64 {
    let srs = rs.sqrt();
    let den = 2.0 * p.a * (p.beta[0] * srs + p.beta[1] * rs + p.beta[2] * rs * srs + p.beta[3] * rs * rs);
    -2.0 * p.a * (1.0 + p.alpha1 * rs) * (1.0 / den).ln_1p()
}

/// Correlation energy per particle ε_c(r_s, ζ).
pub fn pw92_eps(rs: f64, zeta: f64) -> f64 {
    let zeta = zeta.clamp(-1.0, 1.0);
    let fz = spin_fz(zeta).unwrap_or(1.0);
    let ec0 = pw92_g(rs, &PW92_PARAMAGNETIC);
    let ec1 = pw92_g(rs, &PW92_FERROMAGNETIC);
    let ac = -pw92_g(rs, &PW92_SPIN_STIFFNESS);
    let z4 = zeta * zeta * zeta * zeta;
    ec0 + ac * fz / FZ_PP0 * (1.0 - z4) + (ec1 - ec0) * fz * z4
}

/// Correlation energy densities split per spin channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSplit {
    /// ρ_σ ε_c(r_s(ρ_σ), 1) for σ = α, β.
    pub same_spin: [f64; 2],
    /// ρ ε_c(r_s, ζ) minus both same-spin pieces.
    pub opposite_spin: f64,
}

/// Fully polarized evaluation per spin for the same-spin pieces, total
/// minus those for the opposite-spin remainder.
pub fn pw92_split(rho_a: f64, rho_b: f64, floor: f64) -> CorrelationSplit {
    let ss = |r: f64| if r < floor { 0.0 } else { r * pw92_eps(wigner_seitz(r), 1.0) };
    let e_aa = ss(rho_a);
    let e_bb = ss(rho_b);
    let rho = rho_a + rho_b;
    if rho < floor {
        return CorrelationSplit { same_spin: [e_aa, e_bb], opposite_spin: 0.0 };
    }
    let zeta = (rho_a - rho_b) / rho;
    let total = rho * pw92_eps(wigner_seitz(rho), zeta);
    CorrelationSplit {
        same_spin: [e_aa, e_bb],
        opposite_spin: total - (e_aa + e_bb),
    }
}

// 1/(36a²) − 1/(960a⁴) + ... ; alternating series in 1/a².
const SERIES_DENOMS: [f64; 10] = [
    36.0,
    960.0,
    26880.0,
    829440.0,
    28385280.0,
    1073479680.0,
    44590694400.0,
    2021444812800.0,
    99407521382400.0,
    5273830608076800.0,
];

/// Short-range attenuation as a function of a = ω/(2k_F).
pub fn attenuation_of_a(a: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    if a >= 1.0 {
        let inv2 = 1.0 / (a * a);
        let mut pow = inv2;
        let mut sum = 0.0;
        for (k, d) in SERIES_DENOMS.iter().enumerate() {
            let term = pow / d;
            sum += if k % 2 == 0 { term } else { -term };
            pow *= inv2;
        }
        return sum;
    }
    let a2 = a * a;
    let a3 = a2 * a;
    let bracket = PI.sqrt() * libm::erf(1.0 / (2.0 * a)) - 3.0 * a + 4.0 * a3
        + (2.0 * a - 4.0 * a3) * (-1.0 / (4.0 * a2)).exp();
    1.0 - (8.0 / 3.0) * a * bracket
}

/// f_SR for one spin channel, a = ω/(2 k_F,σ) with k_F,σ = (6π²ρ_σ)^{1/3}.
pub fn rsh_attenuation(rho_sigma: f64, omega: f64) -> f64 {
    if rho_sigma <= 0.0 {
        return 0.0;
    }
    let kf = (6.0 * PI * PI * rho_sigma).cbrt();
    attenuation_of_a(omega / (2.0 * kf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slater_closed_form() {
        assert_eq!(slater_exchange_spin(0.0), 0.0);
        assert!((slater_exchange_spin(1.0) - -0.930_525_736_349_1).abs() < 1e-15);
    }

    // 30-digit evaluations of the PW92 formulas.
    #[test]
    fn pw92_reference_values() {
        assert!((pw92_eps(1.0, 0.0) - -0.059_773_864_184_404_09).abs() < 1e-15);
        assert!((pw92_eps(2.0, 0.5) - -0.040_739_706_500_927_38).abs() < 1e-15);
        assert!((pw92_eps(1.0, 1.0) - -0.031_592_478_127_710_37).abs() < 1e-15);
        assert_eq!(pw92_eps(1.3, 0.4), pw92_eps(1.3, -0.4));
    }

    #[test]
    fn stoll_split_reference() {
        let s = pw92_split(0.3, 0.1, 1e-12);
        assert!((s.same_spin[0] - -0.009_748_692_237_731_207).abs() < 1e-15);
        assert!((s.same_spin[1] - -0.002_825_547_589_349_796).abs() < 1e-15);
        assert!((s.opposite_spin - -0.010_725_592_384_328_99).abs() < 1e-15);
        let t = pw92_split(0.1, 0.3, 1e-12);
        assert_eq!(s.opposite_spin, t.opposite_spin);
        assert_eq!(s.same_spin, [t.same_spin[1], t.same_spin[0]]);
    }

    // Values from direct quadrature of 4∫ j₁(y)² erfc(2ay)/y dy.
    #[test]
    fn attenuation_matches_kernel_quadrature() {
        let cases = [
            (0.5, 0.096_549_351_719_233_05),
            (1.0, 0.026_772_142_179_266_237),
            (2.0, 0.006_879_916_889_655_129),
            (5.0, 0.001_109_446_822_314_009_3),
        ];
        for (a, f) in cases {
            assert!(((attenuation_of_a(a) - f) / f).abs() < 1e-12, "a = {a}");
        }
    }

    #[test]
    fn attenuation_limits_and_branch_continuity() {
        assert!((attenuation_of_a(1e-12) - 1.0).abs() < 1e-10);
        assert!(attenuation_of_a(1e-4) < attenuation_of_a(1e-6));
        assert!(attenuation_of_a(1e3) < 1e-6);
        let below = attenuation_of_a(1.0 - 1e-12);
        let above = attenuation_of_a(1.0);
        assert!(((below - above) / above).abs() < 1e-11);
        assert!((rsh_attenuation(1e30, 0.3) - 1.0).abs() < 1e-10);
        assert!(rsh_attenuation(1e-12, 0.3) < 1e-3);
    }
}
