//! Physical-constraint checks: spin symmetry, the uniform-gas exchange
//! limit, uniform coordinate scaling of exchange, and quadrature-grid
//! convergence of proxy atomization energies.

mod bundle;
pub mod fixtures;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::grid_descriptors;
use crate::energy::{energy_densities, exchange_enhancement, xc_energy, EnergyModel, LdaPoint, HARTREE_TO_KCAL};
use crate::error::{Result, XcError};
use crate::grid::{scale_grid, swap_spin, DensityGrid};

pub use bundle::{
    default_proxies, ueg_rho_per_spin, BundleManifest, FixtureBundle, FixtureSpec, ProxyEntry, ProxyFiles,
    ProxyGrids, ProxyPair, ProxySpec, DEFAULT_UEG_RS, MANIFEST_NAME,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSettings {
    pub spin_tolerance: f64,
    pub ueg_tolerance: f64,
    pub scaling_tolerance: f64,
    pub grid_tolerance_kcal: f64,
    pub lambdas: Vec<f64>,
    /// Minimum max|ζ| the spin-symmetry grid must reach.
    pub min_polarization: f64,
}

impl Default for ConstraintSettings {
    fn default() -> Self {
        ConstraintSettings {
            spin_tolerance: 1e-5,
            ueg_tolerance: 0.005,
            scaling_tolerance: 1e-4,
            grid_tolerance_kcal: 0.015,
            lambdas: vec![0.5, 2.0, 5.0],
            min_polarization: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseValue {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub metric: f64,
    pub threshold: f64,
    pub unit: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseValue>,
}

impl CheckResult {
    fn new(metric: f64, threshold: f64, unit: &str, cases: Vec<CaseValue>) -> Self {
        CheckResult {
            metric,
            threshold,
            unit: unit.into(),
            pass: metric < threshold,
            cases,
        }
    }

    /// metric / threshold.
    pub fn margin(&self) -> f64 {
        self.metric / self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    SpinSymmetry,
    UegLimit,
    Scaling,
    GridConvergence,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [
        ConstraintKind::SpinSymmetry,
        ConstraintKind::UegLimit,
        ConstraintKind::Scaling,
        ConstraintKind::GridConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::SpinSymmetry => "spin_symmetry",
            ConstraintKind::UegLimit => "ueg_limit",
            ConstraintKind::Scaling => "scaling",
            ConstraintKind::GridConvergence => "grid_convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub spin_symmetry: CheckResult,
    pub ueg_limit: CheckResult,
    pub scaling: CheckResult,
    pub grid_convergence: CheckResult,
    pub n_violations: usize,
}

impl ConstraintReport {
    pub fn new(
        spin_symmetry: CheckResult,
        ueg_limit: CheckResult,
        scaling: CheckResult,
        grid_convergence: CheckResult,
    ) -> Self {
        let mut r = ConstraintReport {
            spin_symmetry,
            ueg_limit,
            scaling,
            grid_convergence,
            n_violations: 0,
        };
        r.n_violations = r.failures().len();
        r
    }

    pub fn get(&self, kind: ConstraintKind) -> &CheckResult {
        match kind {
            ConstraintKind::SpinSymmetry => &self.spin_symmetry,
            ConstraintKind::UegLimit => &self.ueg_limit,
            ConstraintKind::Scaling => &self.scaling,
            ConstraintKind::GridConvergence => &self.grid_convergence,
        }
    }

    pub fn failures(&self) -> Vec<ConstraintKind> {
        ConstraintKind::ALL
            .into_iter()
            .filter(|k| !self.get(*k).pass)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Largest pointwise |e_xc(ρ_α, ρ_β) − e_xc(ρ_β, ρ_α)| in Hartree/Bohr³.
pub fn check_spin_symmetry(
    model: &EnergyModel,
    grid: &DensityGrid,
    settings: &ConstraintSettings,
) -> Result<CheckResult> {
    let zmax = grid.max_abs_zeta();
    if zmax <= settings.min_polarization {
        return Err(XcError::Protocol(format!(
            "spin-symmetry grid '{}' has max |zeta| = {zmax:.3}, need > {}",
            grid.label, settings.min_polarization
        )));
    }
    let direct = energy_densities(model, grid)?;
    let swapped = energy_densities(model, &swap_spin(grid))?;
    let dev = direct
        .iter()
        .zip(&swapped)
        .map(|(a, b)| (a.total - b.total).abs())
        .fold(0.0, f64::max);
    Ok(CheckResult::new(dev, settings.spin_tolerance, "hartree", vec![]))
}

fn ensure_ueg(grid: &DensityGrid, k_c: f64) -> Result<()> {
    let bad = |msg: String| Err(XcError::Protocol(format!("grid '{}' is not a uniform gas: {msg}", grid.label)));
    for (i, s) in grid.samples.iter().enumerate() {
        if s.rho[0] != s.rho[1] || !(s.rho[0] > 0.0) {
            return bad(format!("point {i} is polarized or empty"));
        }
        if s.grad.iter().flatten().any(|g| *g != 0.0) {
            return bad(format!("point {i} has a nonzero gradient"));
        }
        for sp in 0..2 {
            let t = s.tau[sp] / s.rho[sp].powf(5.0 / 3.0);
            if ((t - k_c) / k_c).abs() > 1e-10 {
                return bad(format!("point {i} has t = {t}, expected {k_c}"));
            }
        }
    }
    if grid.samples.iter().any(|s| s.rho != grid.samples[0].rho) {
        return bad("density is not constant".into());
    }
    Ok(())
}

/// Largest |g_x − c_x0|/c_x0 over the uniform-gas grids, with g_x
/// recovered from the evaluated exchange density.
pub fn check_ueg_limit(
    model: &EnergyModel,
    grids: &[DensityGrid],
    settings: &ConstraintSettings,
) -> Result<CheckResult> {
    if grids.is_empty() {
        return Err(XcError::Protocol("no uniform-gas grids supplied".into()));
    }
    let c = &model.constants;
    let c_x0 = c.c_x0();
    let mut cases = Vec::with_capacity(grids.len());
    for grid in grids {
        ensure_ueg(grid, c.k_c)?;
        let dens = energy_densities(model, grid)?;
        let mut dev: f64 = 0.0;
        for (s, e) in grid.samples.iter().zip(&dens) {
            let lda = LdaPoint::compute(s.rho, c);
            for sp in 0..2 {
                let gx = e.exchange[sp] / lda.ex_attenuated(sp);
                dev = dev.max(((gx - c_x0) / c_x0).abs());
            }
        }
        let rho = grid.samples[0].rho[0] + grid.samples[0].rho[1];
        cases.push(CaseValue {
            label: format!("rs={}", crate::descriptors::wigner_seitz(rho)),
            value: dev,
        });
    }
    let metric = cases.iter().map(|c| c.value).fold(0.0, f64::max);
    Ok(CheckResult::new(metric, settings.ueg_tolerance, "relative", cases))
}

/// max over λ of Σ_i w_i Σ_σ |e_x,σ^LDA| |g_x[ρ_λ](r_i/λ) − g_x[ρ](r_i)|,
/// comparing matched points of the analytically scaled density.
pub fn check_scaling(
    model: &EnergyModel,
    base: &DensityGrid,
    settings: &ConstraintSettings,
) -> Result<CheckResult> {
    let compiled = model.compile()?;
    let params = &model.form.params;
    let c = &model.constants;
    let g0 = exchange_enhancement(&compiled, &grid_descriptors(base, c), params)?;
    let mut cases = Vec::with_capacity(settings.lambdas.len());
    for &lambda in &settings.lambdas {
        let scaled = scale_grid(base, lambda)?;
        let gl = exchange_enhancement(&compiled, &grid_descriptors(&scaled, c), params)?;
        let mut dev = crate::energy::CompensatedSum::default();
        for (i, s) in base.samples.iter().enumerate() {
            let lda = LdaPoint::compute(s.rho, c);
            for sp in 0..2 {
                dev.add(base.points[i].weight * lda.ex_slater[sp].abs() * (gl[i][sp] - g0[i][sp]).abs());
            }
        }
        cases.push(CaseValue {
            label: format!("lambda={lambda}"),
            value: dev.value(),
        });
    }
    let metric = cases.iter().map(|c| c.value).fold(0.0, f64::max);
    Ok(CheckResult::new(metric, settings.scaling_tolerance, "hartree", cases))
}

fn atomization(model: &EnergyModel, grids: &ProxyGrids) -> Result<f64> {
    Ok(xc_energy(model, &grids.fragments)? - xc_energy(model, &grids.composite)?)
}

/// max_k |AE_k(coarse) − AE_k(fine)| in kcal/mol.
pub fn check_grid_convergence(
    model: &EnergyModel,
    proxies: &[ProxyPair],
    settings: &ConstraintSettings,
) -> Result<CheckResult> {
    if proxies.is_empty() {
        return Err(XcError::Protocol("no proxy systems supplied".into()));
    }
    let cases = proxies
        .par_iter()
        .map(|p| {
            let (Some(coarse), Some(fine)) = (&p.coarse, &p.fine) else {
                return Err(XcError::Protocol(format!(
                    "proxy '{}' lacks a coarse or fine resolution",
                    p.label
                )));
            };
            let d = (atomization(model, coarse)? - atomization(model, fine)?).abs() * HARTREE_TO_KCAL;
            Ok(CaseValue {
                label: p.label.clone(),
                value: d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metric = cases.iter().map(|c| c.value).fold(0.0, f64::max);
    Ok(CheckResult::new(metric, settings.grid_tolerance_kcal, "kcal/mol", cases))
}

/// All four checks on one bundle.
pub fn run_all(model: &EnergyModel, bundle: &FixtureBundle, settings: &ConstraintSettings) -> Result<ConstraintReport> {
    let ((spin, ueg), (scaling, grid)) = rayon::join(
        || {
            rayon::join(
                || check_spin_symmetry(model, &bundle.polarized, settings),
                || check_ueg_limit(model, &bundle.ueg, settings),
            )
        },
        || {
            rayon::join(
                || check_scaling(model, &bundle.scaling_base, settings),
                || check_grid_convergence(model, &bundle.proxies, settings),
            )
        },
    );
    Ok(ConstraintReport::new(spin?, ueg?, scaling?, grid?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{canonical_baseline, canonical_safs26a, canonical_safs26b};
    use crate::grid::{generate, Resolution, SyntheticSystemSpec};
    use crate::lda::pw92_split;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn bundle() -> &'static FixtureBundle {
        static B: OnceLock<FixtureBundle> = OnceLock::new();
        B.get_or_init(|| FixtureSpec::default().generate().unwrap())
    }

    fn model(f: crate::forms::FunctionalForm) -> EnergyModel {
        EnergyModel::new(f)
    }

    #[test]
    fn canonical_forms_are_spin_symmetric() {
        let s = ConstraintSettings::default();
        for f in [canonical_baseline(), canonical_safs26a(), canonical_safs26b()] {
            let r = check_spin_symmetry(&model(f), &bundle().polarized, &s).unwrap();
            assert!(r.pass && r.metric <= 1e-13, "{}", r.metric);
        }
    }

    #[test]
    fn zeta_fixture_deviation_is_twice_the_odd_term() {
        let s = ConstraintSettings::default();
        let g = &bundle().polarized;
        let r = check_spin_symmetry(&model(fixtures::antisymmetric_zeta_fixture()), g, &s).unwrap();
        assert!(!r.pass);
        let expected = g
            .samples
            .iter()
            .map(|p| {
                let rho = p.rho[0] + p.rho[1];
                let zeta = (p.rho[0] - p.rho[1]) / rho;
                let os = pw92_split(p.rho[0], p.rho[1], 1e-12).opposite_spin;
                2.0 * fixtures::ZETA_COEFF.abs() * zeta.abs() * os.abs()
            })
            .fold(0.0, f64::max);
        assert!(((r.metric - expected) / expected).abs() < 1e-10);
    }

    #[test]
    fn unpolarized_grid_is_a_protocol_error() {
        let s = ConstraintSettings::default();
        let err = check_spin_symmetry(&model(canonical_baseline()), &bundle().scaling_base, &s);
        assert!(matches!(err, Err(XcError::Protocol(_))));
    }

    #[test]
    fn ueg_limit_is_exact_for_polynomial_forms() {
        let s = ConstraintSettings::default();
        for f in [canonical_baseline(), canonical_safs26a()] {
            let r = check_ueg_limit(&model(f), &bundle().ueg, &s).unwrap();
            assert!(r.pass && r.metric < 1e-12);
            assert_eq!(r.cases.len(), 4);
        }
        let r = check_ueg_limit(&model(fixtures::ueg_bias_fixture()), &bundle().ueg, &s).unwrap();
        assert!(!r.pass);
        assert!((r.metric - fixtures::UEG_BIAS).abs() < 1e-12, "{}", r.metric);
    }

    #[test]
    fn non_ueg_grid_is_rejected() {
        let s = ConstraintSettings::default();
        let err = check_ueg_limit(&model(canonical_baseline()), &[bundle().scaling_base.clone()], &s);
        assert!(matches!(err, Err(XcError::Protocol(_))));
    }

    #[test]
    fn scaling_invariance_holds_for_descriptor_pure_forms() {
        let s = ConstraintSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in [canonical_baseline(), canonical_safs26a(), canonical_safs26b()] {
            for _ in 0..3 {
                let vals: Vec<f64> = (0..f.n_trainable()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = f.with_trainable_values(&vals).unwrap();
                let r = check_scaling(&model(g), &bundle().scaling_base, &s).unwrap();
                assert!(r.metric < 1e-10, "{}: {}", f.label, r.metric);
            }
        }
        let r = check_scaling(&model(fixtures::laplacian_fixture()), &bundle().scaling_base, &s).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn identity_scaling_has_zero_deviation() {
        let s = ConstraintSettings {
            lambdas: vec![1.0],
            ..Default::default()
        };
        let r = check_scaling(&model(fixtures::laplacian_fixture()), &bundle().scaling_base, &s).unwrap();
        assert_eq!(r.metric, 0.0);
    }

    #[test]
    fn identical_resolutions_converge_trivially() {
        let s = ConstraintSettings::default();
        let p = &bundle().proxies[0];
        let same = ProxyPair {
            label: p.label.clone(),
            coarse: p.coarse.clone(),
            fine: p.coarse.clone(),
        };
        let r = check_grid_convergence(&model(fixtures::composite_fixture()), &[same], &s).unwrap();
        assert_eq!(r.metric, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn missing_resolution_is_a_protocol_error() {
        let s = ConstraintSettings::default();
        let mut p = bundle().proxies[0].clone();
        p.fine = None;
        let err = check_grid_convergence(&model(canonical_baseline()), &[p], &s);
        assert!(matches!(err, Err(XcError::Protocol(_))));
    }

    #[test]
    fn composite_fixture_fails_everything_and_reports_are_deterministic() {
        let s = ConstraintSettings::default();
        let m = model(fixtures::composite_fixture());
        let a = run_all(&m, bundle(), &s).unwrap();
        assert_eq!(a.n_violations, 4);
        let b = run_all(&m, bundle(), &s).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let base = run_all(&model(canonical_baseline()), bundle(), &s).unwrap();
        assert_eq!(base.n_violations, 0);
        assert_eq!(base.failures(), vec![]);
    }

    #[test]
    fn bundle_survives_disk_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = bundle().write(dir.path()).unwrap();
        let loaded = FixtureBundle::load(&manifest).unwrap();
        assert_eq!(loaded.n_files(), bundle().n_files());
        let mut small = loaded.clone();
        small.proxies.truncate(2);
        let mut orig = bundle().clone();
        orig.proxies.truncate(2);
        let s = ConstraintSettings::default();
        let m = model(canonical_safs26b());
        assert_eq!(run_all(&m, &small, &s).unwrap(), run_all(&m, &orig, &s).unwrap());
        let fresh = generate(&SyntheticSystemSpec::ueg(0.1, Resolution::Coarse)).unwrap();
        assert!(check_ueg_limit(&m, &[fresh], &s).unwrap().pass);
    }
}
