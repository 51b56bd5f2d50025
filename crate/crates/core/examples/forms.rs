//! The three canonical enhancement-factor forms: parameter counts, JSON
//! round trip and the exchange enhancement along a gradient sweep.

use xcforge::descriptors::{DescriptorConstants, DescriptorName, DescriptorPoint};
use xcforge::energy::{exchange_enhancement, EnergyModel};
use xcforge::forms::{canonical_baseline, canonical_safs26a, canonical_safs26b, Channel, FunctionalForm};
use xcforge::grid::SpinDensityPoint;

fn main() -> xcforge::Result<()> {
    for form in [canonical_baseline(), canonical_safs26a(), canonical_safs26b()] {
        let split: Vec<String> = Channel::ALL
            .iter()
            .map(|c| format!("{} {}", c.name(), form.channel_trainable(*c)))
            .collect();
        let groups: Vec<String> = form
            .param_groups
            .iter()
            .map(|g| format!("{}:{}", g.name, form.group_trainable(&g.name)))
            .collect();
        println!("{}: {} params, {} trainable ({})", form.label, form.n_params(), form.n_trainable(), split.join(", "));
        if !groups.is_empty() {
            println!("  groups {}", groups.join(" "));
        }
        let back = FunctionalForm::from_json(&form.to_json()?)?;
        println!("  json round trip identical: {}", back == form);
    }

    let form = canonical_baseline();
    let compiled = EnergyModel::new(form.clone()).compile()?;
    let c = DescriptorConstants::default();
    let rho = 0.1f64;
    let at = |g: f64| {
        let tau_w = g * g / (8.0 * rho);
        let tau_u = 0.3 * (6.0 * std::f64::consts::PI.powi(2)).powf(2.0 / 3.0) * 2f64.powf(2.0 / 3.0) * rho.powf(5.0 / 3.0);
        let sample = SpinDensityPoint {
            rho: [rho; 2],
            grad: [[g, 0.0, 0.0]; 2],
            tau: [tau_w + tau_u; 2],
        };
        DescriptorPoint::compute(&sample, &c)
    };
    let s_per_grad = at(1.0).get(DescriptorName::S, 0);
    let points: Vec<DescriptorPoint> = [0.0, 0.5, 1.0, 2.0, 4.0].iter().map(|s| at(s / s_per_grad)).collect();
    println!("\nbaseline exchange enhancement:");
    for (dp, g) in points.iter().zip(exchange_enhancement(&compiled, &points, &form.params)?) {
        println!("  s = {:.3}  g_x = {:.6}", dp.get(DescriptorName::S, 0), g[0]);
    }
    Ok(())
}
