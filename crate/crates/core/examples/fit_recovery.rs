//! Generates reaction energies from known baseline parameters, starts the
//! fit 10% away and recovers them with L-BFGS.

use xcforge::energy::EnergyModel;
use xcforge::fit::{lbfgs_fit, perturbed_form, synthetic_dataset, wrmsd, FitOptions, Split, SyntheticDatasetSpec};
use xcforge::forms::canonical_baseline;

fn main() -> xcforge::Result<()> {
    let truth = perturbed_form(&canonical_baseline(), 0.1, 5);
    let spec = SyntheticDatasetSpec {
        label: "recovery".into(),
        seed: 5,
        ..Default::default()
    };
    let ds = synthetic_dataset(&spec, &EnergyModel::new(truth.clone()))?;
    println!(
        "{} systems, {} reactions ({} train / {} val / {} test)",
        ds.systems.len(),
        ds.reactions.len(),
        ds.count(Split::Train),
        ds.count(Split::Val),
        ds.count(Split::Test)
    );

    let init: Vec<f64> = truth.trainable_values().iter().map(|v| v * 1.1).collect();
    let start = truth.with_trainable_values(&init)?;
    let fit = lbfgs_fit(&EnergyModel::new(start.clone()), &ds, &FitOptions::default())?;
    let fitted = EnergyModel::new(fit.apply(&start)?);
    println!(
        "train WRMSD {:.3e} -> {:.3e} kcal/mol after {} iterations ({:?})",
        fit.loss_history[0],
        fit.final_loss(),
        fit.iterations,
        fit.stop_reason
    );
    println!("val WRMSD {:.3e}, test WRMSD {:.3e}", wrmsd(&fitted, &ds, Split::Val)?, wrmsd(&fitted, &ds, Split::Test)?);

    let worst = truth
        .trainable_values()
        .iter()
        .zip(fitted.form.trainable_values())
        .map(|(t, f)| (t - f).abs() / t.abs().max(1e-12))
        .fold(0.0, f64::max);
    println!("max relative parameter error {worst:.3e}");
    Ok(())
}
