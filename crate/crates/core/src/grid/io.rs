//! Line-oriented grid files.
//!
//! ```text
//! XCGRID 1 <npoints> <label>
//! x y z w rho_a rho_b gxa gya gza gxb gyb gzb tau_a tau_b
//! ```
//! Values are written with 17 significant digits so a save/load cycle
//! is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DensityGrid, GridPoint, Resolution, SpinDensityPoint};
use crate::error::{Result, XcError};

const MAGIC: &str = "XCGRID";
const VERSION: &str = "1";
const FIELDS: usize = 14;
const BOUND_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum GridWarning {
    /// τ_σ below the von Weizsäcker bound on the given data line.
    BelowWeizsacker { line: usize, spin: usize, deficit: f64 },
}

#[derive(Debug, Clone)]
pub struct LoadedGrid {
    pub grid: DensityGrid,
    pub warnings: Vec<GridWarning>,
}

pub fn write_grid<W: Write>(grid: &DensityGrid, mut out: W) -> Result<()> {
    let io = |e| XcError::io("<stream>", e);
    writeln!(out, "{MAGIC} {VERSION} {} {}", grid.len(), grid.label).map_err(io)?;
    for (p, s) in grid.points.iter().zip(&grid.samples) {
        let row = [
            p.position[0],
            p.position[1],
            p.position[2],
            p.weight,
            s.rho[0],
            s.rho[1],
            s.grad[0][0],
            s.grad[0][1],
            s.grad[0][2],
            s.grad[1][0],
            s.grad[1][1],
            s.grad[1][2],
            s.tau[0],
            s.tau[1],
        ];
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" ")).map_err(io)?;
    }
    Ok(())
}

pub fn save_grid(grid: &DensityGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| XcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_grid(grid, &mut w)?;
    w.flush().map_err(|e| XcError::io(path, e))
}

pub fn read_grid<R: Read>(input: R) -> Result<LoadedGrid> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| XcError::io("<stream>", e))?,
        None => {
            return Err(XcError::Parse {
                line: 1,
                message: "empty grid file".into(),
            })
        }
    };
    let mut parts = header.splitn(4, ' ');
    let (magic, version, count) = (parts.next(), parts.next(), parts.next());
    let label = parts.next().unwrap_or("").to_string();
    if magic != Some(MAGIC) {
        return Err(XcError::Parse {
            line: 1,
            message: format!("expected '{MAGIC}' header"),
        });
    }
    if version != Some(VERSION) {
        return Err(XcError::Parse {
            line: 1,
            message: format!("unsupported version {:?}", version.unwrap_or("")),
        });
    }
    let npoints: usize = count
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| XcError::Parse {
            line: 1,
            message: "bad point count".into(),
        })?;

    let mut points = Vec::with_capacity(npoints);
    let mut samples = Vec::with_capacity(npoints);
    let mut warnings = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| XcError::io("<stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| XcError::Parse {
                line: lineno,
                message: format!("bad number: {e}"),
            })?;
        if vals.len() != FIELDS {
            return Err(XcError::Parse {
                line: lineno,
                message: format!("expected {FIELDS} fields, found {}", vals.len()),
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(XcError::Parse {
                line: lineno,
                message: "non-finite value".into(),
            });
        }
        if !(vals[3] > 0.0) {
            return Err(XcError::Parse {
                line: lineno,
                message: format!("weight must be positive, found {}", vals[3]),
            });
        }
        if vals[4] < 0.0 || vals[5] < 0.0 {
            return Err(XcError::Parse {
                line: lineno,
                message: "negative density".into(),
            });
        }
        if vals[12] < 0.0 || vals[13] < 0.0 {
            return Err(XcError::Parse {
                line: lineno,
                message: "negative kinetic energy density".into(),
            });
        }
        let sample = SpinDensityPoint {
            rho: [vals[4], vals[5]],
            grad: [[vals[6], vals[7], vals[8]], [vals[9], vals[10], vals[11]]],
            tau: [vals[12], vals[13]],
        };
        for spin in 0..2 {
            let tw = sample.tau_weizsacker(spin);
            let deficit = tw - sample.tau[spin];
            // roundoff in recomputing τ_W from stored gradients is not a violation
            if deficit > BOUND_RTOL * tw {
                log::warn!("line {lineno}: tau below von Weizsäcker bound by {deficit:e} (spin {spin})");
                warnings.push(GridWarning::BelowWeizsacker {
                    line: lineno,
                    spin,
                    deficit,
                });
            }
        }
        points.push(GridPoint {
            position: [vals[0], vals[1], vals[2]],
            weight: vals[3],
        });
        samples.push(sample);
    }
    if points.len() != npoints {
        return Err(XcError::Parse {
            line: points.len() + 2,
            message: format!("header promises {npoints} points, found {}", points.len()),
        });
    }
    let resolution = resolution_from_label(&label);
    let grid = DensityGrid::new(points, samples, label, resolution).map_err(|e| XcError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    Ok(LoadedGrid { grid, warnings })
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<LoadedGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| XcError::io(path, e))?;
    read_grid(file)
}

fn resolution_from_label(label: &str) -> Resolution {
    if label.ends_with("[coarse]") {
        Resolution::Coarse
    } else if label.ends_with("[fine]") {
        Resolution::Fine
    } else {
        Resolution::Custom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate, GaussianTerm, SpinChannel, SyntheticSystemSpec};

    fn sample_grid() -> DensityGrid {
        generate(&SyntheticSystemSpec::gaussian(
            vec![
                GaussianTerm::new([0.0, 0.2, 0.0], 0.8, 0.5, SpinChannel::Alpha),
                GaussianTerm::new([0.0, -0.2, 0.0], 1.4, 0.9, SpinChannel::Both),
            ],
            Resolution::Coarse,
        ).with_label("h2o stand-in"))
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let g = sample_grid();
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        let back = read_grid(buf.as_slice()).unwrap();
        assert_eq!(back.grid, g);
        assert!(back.warnings.is_empty());
        assert_eq!(back.grid.resolution, Resolution::Coarse);
    }

    #[test]
    fn negative_weight_is_a_parse_error_with_line() {
        let text = "XCGRID 1 1 bad\n0 0 0 -1.0 0.1 0.1 0 0 0 0 0 0 0.01 0.01\n";
        match read_grid(text.as_bytes()) {
            Err(XcError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_and_bad_header_are_rejected() {
        let text = "XCGRID 1 1 x\n0 0 0 1.0 0.1\n";
        assert!(matches!(read_grid(text.as_bytes()), Err(XcError::Parse { line: 2, .. })));
        let text = "GRID 1 1 x\n";
        assert!(matches!(read_grid(text.as_bytes()), Err(XcError::Parse { line: 1, .. })));
        let text = "XCGRID 1 2 x\n0 0 0 1.0 0.1 0.1 0 0 0 0 0 0 0.1 0.1\n";
        assert!(matches!(read_grid(text.as_bytes()), Err(XcError::Parse { .. })));
    }

    #[test]
    fn tau_below_weizsacker_is_a_warning() {
        // |∇ρ_α|² / (8ρ_α) = 1 / 0.8 = 1.25 > τ_α = 0.5
        let text = "XCGRID 1 1 hand\n0 0 0 1.0 0.1 0.1 1.0 0 0 0 0 0 0.5 0.2\n";
        let loaded = read_grid(text.as_bytes()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        match loaded.warnings[0] {
            GridWarning::BelowWeizsacker { line, spin, deficit } => {
                assert_eq!((line, spin), (2, 0));
                assert!((deficit - 0.75).abs() < 1e-12);
            }
        }
        assert_eq!(loaded.grid.resolution, Resolution::Custom);
    }
}
