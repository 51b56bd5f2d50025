//! Reaction-energy loss, its parameter gradient and L-BFGS fitting.

mod dataset;
pub mod lbfgs;
mod synthetic;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, DatasetManifest, Reaction, Split, SystemEntry, MANIFEST_NAME};
pub use lbfgs::{minimize, FnObjective, LbfgsOptions, LbfgsReport, Objective, StopReason};
pub use synthetic::{perturbed_form, synthetic_dataset, SyntheticDatasetSpec};

use crate::energy::{CompensatedSum, CompiledForm, EnergyModel, EvalWorkspace, PreparedGrid, HARTREE_TO_KCAL};
use crate::error::{Result, XcError};
use crate::forms::FunctionalForm;

struct PreparedReaction {
    terms: Vec<(usize, f64)>,
    reference: f64,
    weight: f64,
    split: Split,
    offset: f64,
}

/// A model compiled against a dataset, with every referenced system
/// preprocessed once. Parameters passed to its methods are trainable
/// values in mask order.
pub struct Evaluator {
    form: FunctionalForm,
    compiled: CompiledForm,
    trainable: Vec<usize>,
    systems: Vec<PreparedGrid>,
    reactions: Vec<PreparedReaction>,
}

impl Evaluator {
    pub fn new(model: &EnergyModel, dataset: &Dataset) -> Result<Self> {
        let compiled = model.compile()?;
        let ids: Vec<&String> = dataset.systems.keys().collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut reactions = Vec::with_capacity(dataset.reactions.len());
        for (i, r) in dataset.reactions.iter().enumerate() {
            let terms = r
                .terms
                .iter()
                .map(|(id, c)| {
                    index
                        .get(id.as_str())
                        .map(|k| (*k, *c))
                        .ok_or_else(|| XcError::Data(format!("reaction {i} references unknown system '{id}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            reactions.push(PreparedReaction {
                terms,
                reference: r.reference_kcal,
                weight: r.weight,
                split: r.split,
                offset: r.offset_kcal,
            });
        }
        let systems = dataset.systems.values().collect::<Vec<_>>().par_iter().map(|g| model.prepare(g)).collect();
        Ok(Evaluator {
            form: model.form.clone(),
            compiled,
            trainable: model.form.trainable_indices(),
            systems,
            reactions,
        })
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable.len()
    }

    pub fn form(&self) -> &FunctionalForm {
        &self.form
    }

    pub fn initial(&self) -> Vec<f64> {
        self.form.trainable_values()
    }

    fn full_params(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.trainable.len() {
            return Err(XcError::validation(
                "params",
                format!("expected {} trainable values, got {}", self.trainable.len(), x.len()),
            ));
        }
        let mut p = self.form.params.clone();
        for (i, v) in self.trainable.iter().zip(x) {
            p[*i] = *v;
        }
        Ok(p)
    }

    fn needed(&self, split: Option<Split>) -> Vec<bool> {
        let mut need = vec![false; self.systems.len()];
        for r in &self.reactions {
            if split.is_none_or(|s| s == r.split) {
                for (k, _) in &r.terms {
                    need[*k] = true;
                }
            }
        }
        need
    }

    fn split_reactions(&self, split: Split) -> Result<Vec<&PreparedReaction>> {
        let rs: Vec<_> = self.reactions.iter().filter(|r| r.split == split).collect();
        if rs.is_empty() {
            return Err(XcError::Protocol(format!("{split} split has no reactions")));
        }
        Ok(rs)
    }

    /// Semi-local system energies (Hartree) for systems used by `split`.
    fn energies(&self, params: &[f64], split: Option<Split>) -> Result<Vec<f64>> {
        let need = self.needed(split);
        self.systems
            .par_iter()
            .zip(need)
            .map_init(EvalWorkspace::default, |ws, (pg, need)| {
                if need {
                    self.compiled.energy(pg, params, ws)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }

    fn energies_with_grad(&self, params: &[f64], split: Split) -> Result<Vec<(f64, Vec<f64>)>> {
        let need = self.needed(Some(split));
        self.systems
            .par_iter()
            .zip(need)
            .map_init(EvalWorkspace::default, |ws, (pg, need)| {
                if need {
                    self.compiled.energy_with_grad(pg, params, ws)
                } else {
                    Ok((0.0, Vec::new()))
                }
            })
            .collect()
    }

    fn reaction_value(r: &PreparedReaction, energies: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for (k, c) in &r.terms {
            acc.add(c * energies[*k] * HARTREE_TO_KCAL);
        }
        acc.add(r.offset);
        acc.value()
    }

    /// Reaction energies (kcal/mol) for every reaction in dataset order.
    pub fn reaction_energies(&self, x: &[f64]) -> Result<Vec<f64>> {
        let params = self.full_params(x)?;
        let e = self.energies(&params, None)?;
        Ok(self.reactions.iter().map(|r| Self::reaction_value(r, &e)).collect())
    }

    /// Weighted mean squared deviation over a split (kcal²/mol²).
    pub fn msd(&self, x: &[f64], split: Split) -> Result<f64> {
        let rs = self.split_reactions(split)?;
        let params = self.full_params(x)?;
        let e = self.energies(&params, Some(split))?;
        let mut num = CompensatedSum::default();
        let mut den = CompensatedSum::default();
        for r in rs {
            let d = Self::reaction_value(r, &e) - r.reference;
            num.add(r.weight * d * d);
            den.add(r.weight);
        }
        Ok(num.value() / den.value())
    }

    /// Weighted RMS deviation over a split (kcal/mol).
    pub fn wrmsd(&self, x: &[f64], split: Split) -> Result<f64> {
        Ok(self.msd(x, split)?.sqrt())
    }

    /// Mean squared deviation and its gradient over trainable parameters.
    pub fn msd_with_grad(&self, x: &[f64], split: Split) -> Result<(f64, Vec<f64>)> {
        let rs = self.split_reactions(split)?;
        let params = self.full_params(x)?;
        let e = self.energies_with_grad(&params, split)?;
        let energies: Vec<f64> = e.iter().map(|(v, _)| *v).collect();
        let n = self.n_trainable();
        let mut num = CompensatedSum::default();
        let mut den = CompensatedSum::default();
        let mut grad = vec![CompensatedSum::default(); n];
        for r in &rs {
            den.add(r.weight);
        }
        let total_w = den.value();
        for r in rs {
            let d = Self::reaction_value(r, &energies) - r.reference;
            num.add(r.weight * d * d);
            let scale = 2.0 * r.weight * d * HARTREE_TO_KCAL / total_w;
            for (k, c) in &r.terms {
                for (g, de) in grad.iter_mut().zip(&e[*k].1) {
                    g.add(scale * c * de);
                }
            }
        }
        let grad: Vec<f64> = grad.iter().map(|g| g.value()).collect();
        check_finite(&grad)?;
        Ok((num.value() / total_w, grad))
    }

    /// (J(x + h e_i) − J(x − h e_i)) / 2h. Differences are formed per
    /// grid point and per reaction before any large totals are rounded,
    /// so the result is not swamped by cancellation in reaction energies.
    pub fn central_difference(&self, x: &[f64], i: usize, h: f64, split: Split) -> Result<f64> {
        let rs = self.split_reactions(split)?;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (pp, pm) = (self.full_params(&xp)?, self.full_params(&xm)?);
        let need = self.needed(Some(split));
        let pairs = self
            .systems
            .par_iter()
            .zip(need)
            .map_init(EvalWorkspace::default, |ws, (pg, need)| {
                if need {
                    self.compiled.energy_pair(pg, &pp, &pm, ws)
                } else {
                    Ok([0.0; 3])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let ep: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
        let em: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
        let mut w_sum = CompensatedSum::default();
        let mut m_p = CompensatedSum::default();
        let mut m_m = CompensatedSum::default();
        let mut dm = CompensatedSum::default();
        for r in rs {
            let dp = Self::reaction_value(r, &ep) - r.reference;
            let dmi = Self::reaction_value(r, &em) - r.reference;
            let mut delta = CompensatedSum::default();
            for (k, c) in &r.terms {
                delta.add(c * pairs[*k][2] * HARTREE_TO_KCAL);
            }
            w_sum.add(r.weight);
            m_p.add(r.weight * dp * dp);
            m_m.add(r.weight * dmi * dmi);
            dm.add(r.weight * delta.value() * (dp + dmi));
        }
        let w = w_sum.value();
        let (jp, jm) = ((m_p.value() / w).sqrt(), (m_m.value() / w).sqrt());
        if jp + jm == 0.0 {
            return Ok(0.0);
        }
        Ok(dm.value() / w / (jp + jm) / (2.0 * h))
    }

    /// ∂E_r/∂θ (kcal/mol per unit parameter) for each reaction in a split.
    pub fn reaction_jacobian(&self, x: &[f64], split: Split) -> Result<Vec<Vec<f64>>> {
        let rs = self.split_reactions(split)?;
        let params = self.full_params(x)?;
        let e = self.energies_with_grad(&params, split)?;
        Ok(rs
            .iter()
            .map(|r| {
                let mut row = vec![0.0; self.n_trainable()];
                for (k, c) in &r.terms {
                    for (v, de) in row.iter_mut().zip(&e[*k].1) {
                        *v += c * de * HARTREE_TO_KCAL;
                    }
                }
                row
            })
            .collect())
    }

    /// WRMSD and its gradient. At zero deviation the gradient is taken
    /// as zero.
    pub fn wrmsd_with_grad(&self, x: &[f64], split: Split) -> Result<(f64, Vec<f64>)> {
        let (m, g) = self.msd_with_grad(x, split)?;
        let j = m.sqrt();
        let grad = if j > 0.0 {
            g.iter().map(|v| v / (2.0 * j)).collect()
        } else {
            vec![0.0; g.len()]
        };
        check_finite(&grad)?;
        Ok((j, grad))
    }
}

fn check_finite(grad: &[f64]) -> Result<()> {
    match grad.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(XcError::Eval {
            path: format!("gradient[{i}]"),
            message: "non-finite derivative for trainable parameter".into(),
        }),
        None => Ok(()),
    }
}

/// Σ c_i E_i·627.509474 + offset for one reaction, in kcal/mol.
pub fn reaction_energy(model: &EnergyModel, dataset: &Dataset, reaction: &Reaction) -> Result<f64> {
    let compiled = model.compile()?;
    let mut ws = EvalWorkspace::default();
    let mut acc = CompensatedSum::default();
    for (id, c) in &reaction.terms {
        let grid = dataset
            .systems
            .get(id)
            .ok_or_else(|| XcError::Data(format!("unknown system '{id}'")))?;
        let e = compiled.energy(&model.prepare(grid), &model.form.params, &mut ws)?;
        acc.add(c * e * HARTREE_TO_KCAL);
    }
    acc.add(reaction.offset_kcal);
    Ok(acc.value())
}

/// sqrt(Σ w_i (E_i − E_i^ref)² / Σ w_i) over one split.
pub fn wrmsd(model: &EnergyModel, dataset: &Dataset, split: Split) -> Result<f64> {
    let ev = Evaluator::new(model, dataset)?;
    ev.wrmsd(&ev.initial(), split)
}

/// ∂ WRMSD / ∂θ over the trainable parameters, in mask order.
pub fn grad_wrmsd(model: &EnergyModel, dataset: &Dataset, split: Split) -> Result<Vec<f64>> {
    let ev = Evaluator::new(model, dataset)?;
    Ok(ev.wrmsd_with_grad(&ev.initial(), split)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdComparison {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// |numeric − analytic| / max(|analytic|, 1e-12), per parameter.
    pub relative: Vec<f64>,
    pub max_relative: f64,
}

pub const FD_DENOMINATOR_FLOOR: f64 = 1e-12;

/// Central differences of the training WRMSD against [`grad_wrmsd`].
pub fn finite_diff_check(model: &EnergyModel, dataset: &Dataset, step: f64) -> Result<f64> {
    Ok(finite_diff_compare(&Evaluator::new(model, dataset)?, Split::Train, step)?.max_relative)
}

pub fn finite_diff_compare(ev: &Evaluator, split: Split, step: f64) -> Result<FdComparison> {
    if !(step > 1e-9 && step < 1e-3) {
        return Err(XcError::validation("step", format!("{step} is outside (1e-9, 1e-3)")));
    }
    finite_diff_unchecked(ev, split, step)
}

/// As [`finite_diff_compare`] without the step-range precondition.
pub fn finite_diff_unchecked(ev: &Evaluator, split: Split, step: f64) -> Result<FdComparison> {
    let x0 = ev.initial();
    let (_, analytic) = ev.wrmsd_with_grad(&x0, split)?;
    let numeric = (0..x0.len())
        .map(|i| ev.central_difference(&x0, i, step, split))
        .collect::<Result<Vec<f64>>>()?;
    let relative: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (n - a).abs() / a.abs().max(FD_DENOMINATOR_FLOOR))
        .collect();
    let max_relative = relative.iter().copied().fold(0.0, f64::max);
    Ok(FdComparison {
        analytic,
        numeric,
        relative,
        max_relative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    #[serde(flatten)]
    pub lbfgs: LbfgsOptions,
    /// Extra starts from perturbed initial points; the best final loss wins.
    pub restarts: usize,
    /// Relative size of restart perturbations.
    pub restart_scale: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lbfgs: LbfgsOptions::default(),
            restarts: 0,
            restart_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Full parameter vector, frozen entries unchanged.
    pub params: Vec<f64>,
    /// Training WRMSD at the start and after every iteration.
    pub loss_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the gradient of the minimized objective (training MSD).
    pub gradient_norm: f64,
    pub stop_reason: StopReason,
    pub evaluations: usize,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&f64::NAN)
    }

    pub fn apply(&self, form: &FunctionalForm) -> Result<FunctionalForm> {
        if form.params.len() != self.params.len() {
            return Err(XcError::validation("params", "fit result does not match the form"));
        }
        let mut f = form.clone();
        f.params.clone_from(&self.params);
        Ok(f)
    }
}

struct MsdObjective<'a> {
    ev: &'a Evaluator,
}

impl Objective for MsdObjective<'_> {
    fn dim(&self) -> usize {
        self.ev.n_trainable()
    }

    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.ev.msd_with_grad(x, Split::Train)
    }
}

/// Minimizes the training-split loss from the model's current parameters.
pub fn lbfgs_fit(model: &EnergyModel, dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    let ev = Evaluator::new(model, dataset)?;
    fit_with(&ev, options)
}

/// The objective minimized is the training MSD, which has the same
/// minimizers as WRMSD and stays smooth at zero deviation.
pub fn fit_with(ev: &Evaluator, options: &FitOptions) -> Result<FitResult> {
    if ev.n_trainable() == 0 {
        return Err(XcError::Protocol("form has no trainable parameters".into()));
    }
    let x0 = ev.initial();
    let mut best = run_one(ev, &x0, options)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        let start: Vec<f64> = x0
            .iter()
            .map(|v| {
                let u: f64 = rng.random_range(-1.0..1.0);
                v + options.restart_scale * u * v.abs().max(1.0)
            })
            .collect();
        let r = run_one(ev, &start, options)?;
        if r.final_loss() < best.final_loss() {
            best = r;
        }
    }
    Ok(best)
}

fn run_one(ev: &Evaluator, x0: &[f64], options: &FitOptions) -> Result<FitResult> {
    let mut obj = MsdObjective { ev };
    let report = minimize(&mut obj, x0, &options.lbfgs)?;
    let mut params = ev.form.params.clone();
    for (i, v) in ev.trainable.iter().zip(&report.x) {
        params[*i] = *v;
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(XcError::Eval {
            path: "fit".into(),
            message: "optimizer produced non-finite parameters".into(),
        });
    }
    Ok(FitResult {
        params,
        loss_history: report.history.iter().map(|m| m.max(0.0).sqrt()).collect(),
        converged: report.converged,
        iterations: report.iterations,
        gradient_norm: report.gradient_norm,
        stop_reason: report.reason,
        evaluations: report.evaluations,
    })
}
