//! The synthetic systems the constraint checks run on, their generator
//! settings, and a manifest-based on-disk layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XcError};
use crate::grid::{
    generate, load_grid, save_grid, DensityGrid, GaussianTerm, Resolution, SpinChannel,
    SyntheticSystemSpec,
};

pub const DEFAULT_UEG_RS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const MANIFEST_NAME: &str = "bundle.json";

/// A composite system and the fragments it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySpec {
    pub label: String,
    pub composite: Vec<GaussianTerm>,
    pub fragments: Vec<Vec<GaussianTerm>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub polarized: SyntheticSystemSpec,
    pub ueg_rs: Vec<f64>,
    pub scaling_base: SyntheticSystemSpec,
    pub proxies: Vec<ProxySpec>,
    #[serde(default = "default_tau_blend")]
    pub proxy_tau_blend: f64,
}

fn default_tau_blend() -> f64 {
    0.2
}

/// Composite and fragment-union grids of one proxy at one resolution.
/// The fragment grid concatenates one grid per fragment, so its
/// integrated energy is the sum of fragment energies.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyGrids {
    pub composite: DensityGrid,
    pub fragments: DensityGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPair {
    pub label: String,
    pub coarse: Option<ProxyGrids>,
    pub fine: Option<ProxyGrids>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureBundle {
    pub polarized: DensityGrid,
    pub ueg: Vec<DensityGrid>,
    pub scaling_base: DensityGrid,
    pub proxies: Vec<ProxyPair>,
}

fn g(center: [f64; 3], exponent: f64, amplitude: f64, spin: SpinChannel) -> GaussianTerm {
    GaussianTerm::new(center, exponent, amplitude, spin)
}

/// Per-spin density of an unpolarized gas with Wigner–Seitz radius r_s.
pub fn ueg_rho_per_spin(rs: f64) -> f64 {
    0.5 * 3.0 / (4.0 * std::f64::consts::PI * rs.powi(3))
}

/// Eighteen concentric proxies. Each system has one exponent per spin
/// channel so its radial profile is smooth; all are compact and dense
/// enough that r_s = 0.5 falls inside the populated region.
pub fn default_proxies() -> Vec<ProxySpec> {
    use SpinChannel::*;
    let o = [0.0; 3];
    (1..=18)
        .map(|k| {
            let kf = k as f64;
            let a = 3.0 + kf;
            let amp = 2.0 + 3.0 * kf;
            ProxySpec {
                label: format!("proxy{k:02}"),
                composite: vec![g(o, a, amp, Both)],
                fragments: vec![
                    vec![g(o, 1.2 * a, 0.7 * amp, Alpha), g(o, 1.2 * a, 0.5 * amp, Beta)],
                    vec![g(o, 0.8 * a, 0.4 * amp, Alpha)],
                ],
            }
        })
        .collect()
}

impl Default for FixtureSpec {
    fn default() -> Self {
        use SpinChannel::*;
        let polarized = SyntheticSystemSpec::gaussian(
            vec![
                g([0.0, 0.0, 1.14], 1.6, 1.1, Both),
                g([0.0, 0.0, -1.14], 1.6, 1.1, Both),
                g([0.0, 0.0, 0.0], 0.45, 0.12, Alpha),
                g([0.0, 0.6, 0.0], 0.8, 0.05, Alpha),
            ],
            Resolution::Coarse,
        )
        .with_label("polarized");
        let scaling_base = SyntheticSystemSpec::gaussian(
            vec![
                g([0.0, 0.0, 0.0], 2.2, 2.0, Both),
                g([1.43, 1.1, 0.0], 0.9, 0.15, Both),
                g([-1.43, 1.1, 0.0], 0.9, 0.15, Both),
                g([0.0, -0.2, 0.0], 0.5, 0.08, Both),
            ],
            Resolution::Coarse,
        )
        .with_label("scaling base");
        FixtureSpec {
            polarized,
            ueg_rs: DEFAULT_UEG_RS.to_vec(),
            scaling_base,
            proxies: default_proxies(),
            proxy_tau_blend: default_tau_blend(),
        }
    }
}

fn proxy_grids(spec: &ProxySpec, res: Resolution, tau_blend: f64) -> Result<ProxyGrids> {
    let system = |terms: &[GaussianTerm], label: String| {
        generate(
            &SyntheticSystemSpec::gaussian(terms.to_vec(), res)
                .with_label(label)
                .with_tau_blend(tau_blend),
        )
    };
    let composite = system(&spec.composite, format!("{} composite", spec.label))?;
    let mut points = Vec::new();
    let mut samples = Vec::new();
    for (i, frag) in spec.fragments.iter().enumerate() {
        let grid = system(frag, format!("{} fragment{i}", spec.label))?;
        points.extend(grid.points);
        samples.extend(grid.samples);
    }
    let fragments = DensityGrid::new(
        points,
        samples,
        format!("{} fragments [{}]", spec.label, res.tag()),
        res,
    )?;
    Ok(ProxyGrids {
        composite,
        fragments,
    })
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ueg_rs.is_empty() || self.ueg_rs.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(XcError::validation("ueg_rs", "need positive finite r_s values"));
        }
        if self.proxies.is_empty() {
            return Err(XcError::validation("proxies", "need at least one proxy"));
        }
        for p in &self.proxies {
            if p.composite.is_empty() || p.fragments.is_empty() || p.fragments.iter().any(Vec::is_empty) {
                return Err(XcError::validation(
                    "proxies",
                    format!("'{}' needs a composite and non-empty fragments", p.label),
                ));
            }
        }
        self.polarized.validate()?;
        self.scaling_base.validate()
    }

    pub fn generate(&self) -> Result<FixtureBundle> {
        self.validate()?;
        let ueg = self
            .ueg_rs
            .iter()
            .map(|rs| {
                generate(
                    &SyntheticSystemSpec::ueg(ueg_rho_per_spin(*rs), Resolution::Coarse)
                        .with_label(format!("ueg rs={rs}")),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let proxies = self
            .proxies
            .iter()
            .map(|p| {
                Ok(ProxyPair {
                    label: p.label.clone(),
                    coarse: Some(proxy_grids(p, Resolution::Coarse, self.proxy_tau_blend)?),
                    fine: Some(proxy_grids(p, Resolution::Fine, self.proxy_tau_blend)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FixtureBundle {
            polarized: generate(&self.polarized)?,
            ueg,
            scaling_base: generate(&self.scaling_base)?,
            proxies,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyFiles {
    pub composite: PathBuf,
    pub fragments: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<ProxyFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<ProxyFiles>,
}

/// Paths relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub polarized: PathBuf,
    pub ueg: Vec<PathBuf>,
    pub scaling_base: PathBuf,
    pub proxies: Vec<ProxyEntry>,
}

fn load_checked(dir: &Path, rel: &Path) -> Result<DensityGrid> {
    let loaded = load_grid(dir.join(rel))?;
    for w in &loaded.warnings {
        log::warn!("{}: {w:?}", rel.display());
    }
    Ok(loaded.grid)
}

impl FixtureBundle {
    pub fn n_files(&self) -> usize {
        let proxy_files: usize = self
            .proxies
            .iter()
            .map(|p| 2 * (p.coarse.is_some() as usize + p.fine.is_some() as usize))
            .sum();
        2 + self.ueg.len() + proxy_files
    }

    /// Writes every grid plus `bundle.json` into `dir`; returns the manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| XcError::io(dir, e))?;
        let put = |name: String, grid: &DensityGrid| -> Result<PathBuf> {
            let rel = PathBuf::from(name);
            save_grid(grid, dir.join(&rel))?;
            Ok(rel)
        };
        let put_pair = |label: &str, tag: &str, pg: &Option<ProxyGrids>| -> Result<Option<ProxyFiles>> {
            pg.as_ref()
                .map(|pg| {
                    Ok(ProxyFiles {
                        composite: put(format!("{label}_{tag}_composite.grid"), &pg.composite)?,
                        fragments: put(format!("{label}_{tag}_fragments.grid"), &pg.fragments)?,
                    })
                })
                .transpose()
        };
        let manifest = BundleManifest {
            polarized: put("polarized.grid".into(), &self.polarized)?,
            ueg: self
                .ueg
                .iter()
                .enumerate()
                .map(|(i, gr)| put(format!("ueg{i}.grid"), gr))
                .collect::<Result<_>>()?,
            scaling_base: put("scaling_base.grid".into(), &self.scaling_base)?,
            proxies: self
                .proxies
                .iter()
                .map(|p| {
                    Ok(ProxyEntry {
                        label: p.label.clone(),
                        coarse: put_pair(&p.label, "coarse", &p.coarse)?,
                        fine: put_pair(&p.label, "fine", &p.fine)?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| XcError::io(&path, e))?;
        Ok(path)
    }

    /// Loads a bundle from a manifest file or a directory containing one.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| XcError::io(&manifest_path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| XcError::Parse {
            line: e.line(),
            message: format!("{}: {e}", manifest_path.display()),
        })?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let pair = |f: &Option<ProxyFiles>| -> Result<Option<ProxyGrids>> {
            f.as_ref()
                .map(|f| {
                    Ok(ProxyGrids {
                        composite: load_checked(dir, &f.composite)?,
                        fragments: load_checked(dir, &f.fragments)?,
                    })
                })
                .transpose()
        };
        Ok(FixtureBundle {
            polarized: load_checked(dir, &manifest.polarized)?,
            ueg: manifest
                .ueg
                .iter()
                .map(|p| load_checked(dir, p))
                .collect::<Result<_>>()?,
            scaling_base: load_checked(dir, &manifest.scaling_base)?,
            proxies: manifest
                .proxies
                .iter()
                .map(|e| {
                    Ok(ProxyPair {
                        label: e.label.clone(),
                        coarse: pair(&e.coarse)?,
                        fine: pair(&e.fine)?,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}
