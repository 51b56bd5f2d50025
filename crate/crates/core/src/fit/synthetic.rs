//! Random reaction datasets over Gaussian stand-in systems, with reference
//! energies produced by a chosen model.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Evaluator, Reaction, Split};
use crate::energy::EnergyModel;
use crate::error::{Result, XcError};
use crate::forms::FunctionalForm;
use crate::grid::{generate, GaussianTerm, Resolution, SpinChannel, SyntheticSystemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDatasetSpec {
    pub label: String,
    pub seed: u64,
    pub n_systems: usize,
    pub n_reactions: usize,
    /// Fractions of reactions assigned to train, val and test.
    pub split_fractions: [f64; 3],
    /// Standard deviation of Gaussian noise added to references (kcal/mol).
    pub noise_kcal: f64,
    /// Half-width of the uniform distribution of fixed offsets (kcal/mol).
    pub offset_range_kcal: f64,
    pub resolution: Resolution,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        SyntheticDatasetSpec {
            label: "synthetic".into(),
            seed: 7,
            n_systems: 20,
            n_reactions: 50,
            split_fractions: [0.6, 0.2, 0.2],
            noise_kcal: 0.0,
            offset_range_kcal: 5.0,
            resolution: Resolution::Coarse,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_systems < 2 {
            return Err(XcError::validation("n_systems", "need at least 2"));
        }
        if self.n_reactions < 2 {
            return Err(XcError::validation("n_reactions", "need at least 2"));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(XcError::validation("split_fractions", "need nonnegative fractions summing to 1"));
        }
        if !(self.noise_kcal >= 0.0) || !(self.offset_range_kcal >= 0.0) {
            return Err(XcError::validation("noise_kcal", "must be nonnegative"));
        }
        Ok(())
    }
}

fn random_system(rng: &mut ChaCha8Rng, i: usize, resolution: Resolution) -> SyntheticSystemSpec {
    let n_terms = rng.random_range(1..=3);
    let mut terms = Vec::with_capacity(n_terms + 1);
    for t in 0..n_terms {
        let center = if t == 0 {
            [0.0; 3]
        } else {
            [
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            ]
        };
        let exponent = rng.random_range(0.6..3.0);
        let amplitude = rng.random_range(0.1..1.5);
        terms.push(GaussianTerm::new(center, exponent, amplitude, SpinChannel::Both));
    }
    if rng.random_bool(0.5) {
        let spin = if rng.random_bool(0.5) {
            SpinChannel::Alpha
        } else {
            SpinChannel::Beta
        };
        terms.push(GaussianTerm::new([0.0; 3], rng.random_range(0.5..1.5), rng.random_range(0.05..0.4), spin));
    }
    let blend = rng.random_range(0.02..1.0);
    SyntheticSystemSpec::gaussian(terms, resolution)
        .with_label(format!("sys{i:02}"))
        .with_tau_blend(blend)
}

/// Builds systems and reactions from `spec.seed`, then sets each
/// reference to the `reference` model's prediction plus noise.
pub fn synthetic_dataset(spec: &SyntheticDatasetSpec, reference: &EnergyModel) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let specs: Vec<SyntheticSystemSpec> = (0..spec.n_systems)
        .map(|i| random_system(&mut rng, i, spec.resolution))
        .collect();
    let grids = specs.par_iter().map(generate).collect::<Result<Vec<_>>>()?;
    let systems: BTreeMap<String, _> = specs.iter().map(|s| s.label.clone()).zip(grids).collect();
    let ids: Vec<String> = systems.keys().cloned().collect();

    let [f_train, f_val, _] = spec.split_fractions;
    let n_train = ((spec.n_reactions as f64 * f_train).round() as usize).max(1);
    let n_val = ((spec.n_reactions as f64 * f_val).round() as usize).max(1);
    let mut splits: Vec<Split> = (0..spec.n_reactions)
        .map(|i| {
            if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect();
    splits.shuffle(&mut rng);

    let coeffs = [1.0, -1.0, 2.0, -2.0, 0.5];
    let mut reactions = Vec::with_capacity(spec.n_reactions);
    for split in splits {
        let n_terms = rng.random_range(2..=3.min(ids.len()));
        let mut chosen: Vec<&String> = ids.choose_multiple(&mut rng, n_terms).collect();
        chosen.sort();
        let mut terms: Vec<(String, f64)> = chosen
            .into_iter()
            .map(|id| (id.clone(), coeffs[rng.random_range(0..coeffs.len())]))
            .collect();
        if terms.iter().all(|(_, c)| *c > 0.0) {
            terms[0].1 = -terms[0].1;
        }
        let weight = rng.random_range(0.5..2.0);
        let mut r = Reaction::new(terms, 0.0, weight, split);
        r.offset_kcal = spec.offset_range_kcal * rng.random_range(-1.0..=1.0);
        reactions.push(r);
    }
    let mut ds = Dataset {
        label: spec.label.clone(),
        systems,
        reactions,
    };
    let ev = Evaluator::new(reference, &ds)?;
    let predicted = ev.reaction_energies(&ev.initial())?;
    let noise = Normal::new(0.0, spec.noise_kcal.max(f64::MIN_POSITIVE)).expect("valid normal");
    for (r, e) in ds.reactions.iter_mut().zip(predicted) {
        let n = if spec.noise_kcal > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        r.reference_kcal = e + n;
    }
    ds.validate()?;
    Ok(ds)
}

/// Multiplies every trainable parameter by (1 + rel·u), u ~ U(−1, 1).
pub fn perturbed_form(form: &FunctionalForm, rel: f64, seed: u64) -> FunctionalForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = form
        .trainable_values()
        .iter()
        .map(|v| v * (1.0 + rel * rng.random_range(-1.0..1.0)))
        .collect();
    form.with_trainable_values(&values).expect("same trainable count")
}
