//! Applies every mutation operator to the baseline and reports what each
//! child looks like before fitting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xcforge::energy::EnergyModel;
use xcforge::evo::operators::{apply, OperatorKind};
use xcforge::evo::pre_fit_j_val;
use xcforge::fit::{perturbed_form, synthetic_dataset, SyntheticDatasetSpec};
use xcforge::forms::{canonical_baseline, canonical_safs26b, Channel};

fn main() -> xcforge::Result<()> {
    let spec = SyntheticDatasetSpec {
        n_systems: 8,
        n_reactions: 24,
        noise_kcal: 0.5,
        ..Default::default()
    };
    let ds = synthetic_dataset(&spec, &EnergyModel::new(perturbed_form(&canonical_safs26b(), 0.2, 3)))?;
    let parent = canonical_baseline();
    let donor = canonical_safs26b();
    let parent_j = pre_fit_j_val(&parent, &ds)?;
    println!("parent: {} trainable, pre-fit val WRMSD {parent_j:.6}", parent.n_trainable());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for op in OperatorKind::ALL {
        let child = apply(op, &parent, Some(&donor), Channel::Os, 0.1, &mut rng)?;
        let j = pre_fit_j_val(&child.form, &ds)?;
        println!(
            "{:<16} {:>3} trainable  dJ {:+.3e}  {}",
            op.name(),
            child.form.n_trainable(),
            j - parent_j,
            child.plan
        );
    }
    Ok(())
}
