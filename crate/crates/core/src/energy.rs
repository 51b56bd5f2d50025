//! Semi-local XC energy assembly.
//!
//! Per point, e_xc = Σ_σ f_SR,σ e_x,σ g_x(σ) + Σ_σ e_c,σσ g_ss(σ) + e_c,αβ g_os.
//! Each spin pair is summed as (α + β), which is commutative in floating
//! point, so a spin-symmetric form gives bit-identical energies on
//! spin-swapped grids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::descriptors::{grid_descriptors, DescriptorConstants, DescriptorPoint};
use crate::error::{Result, XcError};
use crate::expr::{Tape, TapeWorkspace};
use crate::forms::{Channel, FunctionalForm};
use crate::grid::DensityGrid;
use crate::lda::{pw92_split, rsh_attenuation, slater_exchange_spin};

pub const HARTREE_TO_KCAL: f64 = 627.509474;

/// Local reference energy densities at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaPoint {
    pub ex_slater: [f64; 2],
    pub f_sr: [f64; 2],
    pub ec_ss: [f64; 2],
    pub ec_os: f64,
}

impl LdaPoint {
    pub fn compute(rho: [f64; 2], c: &DescriptorConstants) -> Self {
        let split = pw92_split(rho[0], rho[1], c.density_floor);
        LdaPoint {
            ex_slater: rho.map(slater_exchange_spin),
            f_sr: rho.map(|r| rsh_attenuation(r, c.omega)),
            ec_ss: split.same_spin,
            ec_os: split.opposite_spin,
        }
    }

    /// Attenuated exchange reference f_SR · e_x^LDA for one spin.
    pub fn ex_attenuated(&self, spin: usize) -> f64 {
        self.f_sr[spin] * self.ex_slater[spin]
    }
}

/// Descriptors and LDA references cached for one grid.
#[derive(Debug, Clone)]
pub struct PreparedGrid {
    pub label: String,
    pub weights: Vec<f64>,
    pub descriptors: Vec<DescriptorPoint>,
    pub lda: Vec<LdaPoint>,
}

impl PreparedGrid {
    pub fn new(grid: &DensityGrid, c: &DescriptorConstants) -> Self {
        PreparedGrid {
            label: grid.label.clone(),
            weights: grid.points.iter().map(|p| p.weight).collect(),
            descriptors: grid_descriptors(grid, c),
            lda: grid.samples.iter().map(|s| LdaPoint::compute(s.rho, c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Per-point energy density broken into channels (Hartree/Bohr³).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEnergy {
    pub exchange: [f64; 2],
    pub same_spin: [f64; 2],
    pub opposite_spin: f64,
    pub total: f64,
}

/// The three channel trees compiled against one trainable mask.
#[derive(Debug, Clone)]
pub struct CompiledForm {
    tapes: [Tape; 3],
    n_trainable: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EvalWorkspace {
    ws: [TapeWorkspace; 3],
}

impl CompiledForm {
    pub fn new(form: &FunctionalForm) -> Result<Self> {
        form.validate()?;
        let mask = &form.trainable_mask;
        let tapes = [
            Tape::compile(&form.channels.gx, mask, "gx")?,
            Tape::compile(&form.channels.gss, mask, "gss")?,
            Tape::compile(&form.channels.gos, mask, "gos")?,
        ];
        Ok(CompiledForm {
            tapes,
            n_trainable: form.n_trainable(),
        })
    }

    pub fn n_trainable(&self) -> usize {
        self.n_trainable
    }

    pub fn tape(&self, c: Channel) -> &Tape {
        &self.tapes[c as usize]
    }

    pub fn point(
        &self,
        dp: &DescriptorPoint,
        lda: &LdaPoint,
        params: &[f64],
        ws: &mut EvalWorkspace,
    ) -> Result<PointEnergy> {
        let [tx, tss, tos] = &self.tapes;
        let [wx, wss, wos] = &mut ws.ws;
        let gx = [tx.eval(dp, 0, params, wx)?, tx.eval(dp, 1, params, wx)?];
        let gss = [tss.eval(dp, 0, params, wss)?, tss.eval(dp, 1, params, wss)?];
        let gos = tos.eval(dp, 0, params, wos)?;
        let exchange = [lda.ex_attenuated(0) * gx[0], lda.ex_attenuated(1) * gx[1]];
        let same_spin = [lda.ec_ss[0] * gss[0], lda.ec_ss[1] * gss[1]];
        let opposite_spin = lda.ec_os * gos;
        Ok(PointEnergy {
            exchange,
            same_spin,
            opposite_spin,
            total: (exchange[0] + exchange[1]) + (same_spin[0] + same_spin[1]) + opposite_spin,
        })
    }

    /// Point energy density; adds scale·∂e/∂θ into `grad`.
    pub fn point_with_grad(
        &self,
        dp: &DescriptorPoint,
        lda: &LdaPoint,
        params: &[f64],
        ws: &mut EvalWorkspace,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let mut total = [0.0; 3];
        let refs = [
            [lda.ex_attenuated(0), lda.ex_attenuated(1)],
            lda.ec_ss,
        ];
        for ch in 0..2 {
            let tape = &self.tapes[ch];
            let w = &mut ws.ws[ch];
            let mut pair = [0.0; 2];
            for spin in 0..2 {
                if tape.root_deps().is_empty() {
                    pair[spin] = refs[ch][spin] * tape.eval(dp, spin, params, w)?;
                } else {
                    let g = tape.eval_dual(dp, spin, params, w)?;
                    tape.accumulate_grad(w, scale * refs[ch][spin], grad);
                    pair[spin] = refs[ch][spin] * g;
                }
            }
            total[ch] = pair[0] + pair[1];
        }
        let tape = &self.tapes[2];
        let w = &mut ws.ws[2];
        if tape.root_deps().is_empty() {
            total[2] = lda.ec_os * tape.eval(dp, 0, params, w)?;
        } else {
            total[2] = lda.ec_os * tape.eval_dual(dp, 0, params, w)?;
            tape.accumulate_grad(w, scale * lda.ec_os, grad);
        }
        Ok(total[0] + total[1] + total[2])
    }

    /// Σ_i w_i e_i over a prepared grid (Hartree).
    pub fn energy(&self, pg: &PreparedGrid, params: &[f64], ws: &mut EvalWorkspace) -> Result<f64> {
        let mut acc = CompensatedSum::default();
        for i in 0..pg.len() {
            let e = self
                .point(&pg.descriptors[i], &pg.lda[i], params, ws)
                .map_err(|e| at_point(e, &pg.label, i))?;
            acc.add(pg.weights[i] * e.total);
        }
        Ok(acc.value())
    }

    /// [E(a), E(b), E(a) − E(b)], the difference summed pointwise so it
    /// keeps full relative accuracy when a and b are close.
    pub fn energy_pair(
        &self,
        pg: &PreparedGrid,
        a: &[f64],
        b: &[f64],
        ws: &mut EvalWorkspace,
    ) -> Result<[f64; 3]> {
        let mut acc = [CompensatedSum::default(); 3];
        for i in 0..pg.len() {
            let w = pg.weights[i];
            let ea = self
                .point(&pg.descriptors[i], &pg.lda[i], a, ws)
                .map_err(|e| at_point(e, &pg.label, i))?;
            let eb = self
                .point(&pg.descriptors[i], &pg.lda[i], b, ws)
                .map_err(|e| at_point(e, &pg.label, i))?;
            acc[0].add(w * ea.total);
            acc[1].add(w * eb.total);
            let d = (ea.exchange[0] - eb.exchange[0])
                + (ea.exchange[1] - eb.exchange[1])
                + (ea.same_spin[0] - eb.same_spin[0])
                + (ea.same_spin[1] - eb.same_spin[1])
                + (ea.opposite_spin - eb.opposite_spin);
            acc[2].add(w * d);
        }
        Ok(acc.map(|s| s.value()))
    }

    /// Energy and its gradient over trainable parameters (Hartree).
    pub fn energy_with_grad(
        &self,
        pg: &PreparedGrid,
        params: &[f64],
        ws: &mut EvalWorkspace,
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.n_trainable];
        let mut acc = CompensatedSum::default();
        for i in 0..pg.len() {
            let w = pg.weights[i];
            let e = self
                .point_with_grad(&pg.descriptors[i], &pg.lda[i], params, ws, w, &mut grad)
                .map_err(|e| at_point(e, &pg.label, i))?;
            acc.add(w * e);
        }
        Ok((acc.value(), grad))
    }
}

/// Neumaier summation; keeps quadrature sums accurate enough for
/// small-step finite differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn at_point(e: XcError, label: &str, i: usize) -> XcError {
    match e {
        XcError::Eval { path, message } => XcError::Eval {
            path: format!("{path} (grid '{label}', point {i})"),
            message,
        },
        other => other,
    }
}

/// A form together with the constants and fixed offsets it is evaluated with.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    pub form: FunctionalForm,
    pub constants: DescriptorConstants,
    /// Per-system fixed energies (Hartree) keyed by grid label, standing
    /// in for the exact-exchange and nonlocal terms.
    pub fixed_offsets: BTreeMap<String, f64>,
}

impl EnergyModel {
    pub fn new(form: FunctionalForm) -> Self {
        let constants = form.constants(&DescriptorConstants::default());
        EnergyModel {
            form,
            constants,
            fixed_offsets: BTreeMap::new(),
        }
    }

    pub fn with_offsets(mut self, offsets: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((k, v)) = offsets.iter().find(|(_, v)| !v.is_finite()) {
            return Err(XcError::validation("fixed_offsets", format!("offset for '{k}' is {v}")));
        }
        self.fixed_offsets = offsets;
        Ok(self)
    }

    pub fn compile(&self) -> Result<CompiledForm> {
        CompiledForm::new(&self.form)
    }

    pub fn prepare(&self, grid: &DensityGrid) -> PreparedGrid {
        PreparedGrid::new(grid, &self.constants)
    }

    pub fn offset(&self, label: &str) -> f64 {
        self.fixed_offsets.get(label).copied().unwrap_or(0.0)
    }
}

/// Total XC energy of a grid in Hartree, fixed offset included.
pub fn xc_energy(model: &EnergyModel, grid: &DensityGrid) -> Result<f64> {
    let compiled = model.compile()?;
    let pg = model.prepare(grid);
    let e = compiled.energy(&pg, &model.form.params, &mut EvalWorkspace::default())?;
    Ok(e + model.offset(&grid.label))
}

/// Channel-resolved energy densities at every point.
pub fn energy_densities(model: &EnergyModel, grid: &DensityGrid) -> Result<Vec<PointEnergy>> {
    let compiled = model.compile()?;
    let pg = model.prepare(grid);
    let mut ws = EvalWorkspace::default();
    (0..pg.len())
        .map(|i| {
            compiled
                .point(&pg.descriptors[i], &pg.lda[i], &model.form.params, &mut ws)
                .map_err(|e| at_point(e, &pg.label, i))
        })
        .collect()
}

/// g_x(σ) at every point for both spins.
pub fn exchange_enhancement(
    compiled: &CompiledForm,
    descriptors: &[DescriptorPoint],
    params: &[f64],
) -> Result<Vec<[f64; 2]>> {
    let tape = compiled.tape(Channel::X);
    let mut ws = TapeWorkspace::default();
    descriptors
        .iter()
        .map(|dp| Ok([tape.eval(dp, 0, params, &mut ws)?, tape.eval(dp, 1, params, &mut ws)?]))
        .collect()
}
