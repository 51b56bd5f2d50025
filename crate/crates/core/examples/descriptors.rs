//! Descriptor values at a single spin-polarized point and their ranges
//! over a synthetic grid.

use xcforge::descriptors::{grid_descriptors, DescriptorConstants, DescriptorName as D, DescriptorPoint};
use xcforge::grid::{generate, GaussianTerm, Resolution, SpinChannel, SpinDensityPoint, SyntheticSystemSpec};

fn main() -> xcforge::Result<()> {
    let c = DescriptorConstants::default();
    let sample = SpinDensityPoint {
        rho: [0.30, 0.12],
        grad: [[0.10, 0.0, 0.05], [0.02, 0.03, 0.0]],
        tau: [0.25, 0.08],
    };
    let dp = DescriptorPoint::compute(&sample, &c);
    for name in [D::S, D::T, D::W, D::UX, D::VSt, D::Alpha, D::RsSpin] {
        println!("{name:?}: alpha {:.6}  beta {:.6}", dp.get(name, 0), dp.get(name, 1));
    }
    for name in [D::Zeta, D::Fz, D::Rs, D::WAvg, D::UAvg] {
        println!("{name:?}: {:.6}", dp.get(name, 0));
    }

    let grid = generate(&SyntheticSystemSpec::gaussian(
        vec![
            GaussianTerm::new([0.0; 3], 1.0, 1.0, SpinChannel::Both),
            GaussianTerm::new([0.0; 3], 0.7, 0.2, SpinChannel::Beta),
        ],
        Resolution::Coarse,
    ))?;
    let all = grid_descriptors(&grid, &c);
    println!("\nover {} grid points:", all.len());
    for name in [D::W, D::UX, D::VSt, D::Zeta] {
        let (lo, hi) = all
            .iter()
            .map(|p| p.get(name, 0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let bound = name.range().map_or("unbounded".to_string(), |(a, b)| format!("[{a}, {b}]"));
        println!("{name:?}: [{lo:.4}, {hi:.4}] within {bound}");
    }
    Ok(())
}
