//! Structural edits that turn one or two parent forms into a child.
//!
//! Every operator that adds terms initializes them so the child evaluates
//! exactly like its parent before fitting.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorName as D;
use crate::error::{Result, XcError};
use crate::expr::{monomial, rational_wrap, ExprNode};
use crate::forms::{Channel, FunctionalForm};

/// Raw softplus argument for which a rational denominator is 1 to
/// within double precision.
pub const NEUTRAL_DENOMINATOR: f64 = crate::expr::SOFTPLUS_OFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    ZeroInitGraft,
    BoundedAdd,
    RationalWrap,
    SigmoidGate,
    Fusion,
    Perturbation,
    FreezeGraft,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 7] = [
        OperatorKind::ZeroInitGraft,
        OperatorKind::BoundedAdd,
        OperatorKind::RationalWrap,
        OperatorKind::SigmoidGate,
        OperatorKind::Fusion,
        OperatorKind::Perturbation,
        OperatorKind::FreezeGraft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::ZeroInitGraft => "zero_init_graft",
            OperatorKind::BoundedAdd => "bounded_add",
            OperatorKind::RationalWrap => "rational_wrap",
            OperatorKind::SigmoidGate => "sigmoid_gate",
            OperatorKind::Fusion => "fusion",
            OperatorKind::Perturbation => "perturbation",
            OperatorKind::FreezeGraft => "freeze_graft",
        }
    }

    pub fn needs_second_parent(self) -> bool {
        self == OperatorKind::Fusion
    }

    /// Leaves the parent's values unchanged before fitting.
    pub fn is_neutral(self) -> bool {
        matches!(
            self,
            OperatorKind::ZeroInitGraft
                | OperatorKind::BoundedAdd
                | OperatorKind::SigmoidGate
                | OperatorKind::FreezeGraft
        )
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A child form and what was done to make it.
#[derive(Debug, Clone, PartialEq)]
pub struct Application {
    pub operator: OperatorKind,
    pub channel: Channel,
    pub form: FunctionalForm,
    pub plan: String,
    pub uses_second_parent: bool,
}

impl Application {
    /// Strategy tags used by memory and dead-end synthesis.
    pub fn tags(&self) -> Vec<String> {
        strategy_tags(self.operator, self.channel)
    }
}

pub fn strategy_tags(op: OperatorKind, channel: Channel) -> Vec<String> {
    vec![op.name().to_string(), format!("{}:{}", op.name(), channel.name())]
}

/// Descriptors an operator may draw from for each channel.
pub fn descriptor_library(channel: Channel) -> &'static [D] {
    match channel {
        Channel::X => &[D::W, D::UX, D::VSt, D::XSs, D::ZetaSpin, D::VAlpha, D::RsSpin],
        Channel::Ss => &[D::W, D::USs, D::VSt, D::ZSs, D::XSs, D::VAlpha, D::RsSpin],
        Channel::Os => &[D::WAvg, D::UAvg, D::VStAvg, D::Fz, D::ZAvg, D::XAvg, D::VAlphaAvg, D::Rs, D::Zeta],
    }
}

fn bounded_cross(channel: Channel) -> D {
    match channel {
        Channel::Os => D::VStAvg,
        _ => D::VSt,
    }
}

fn shape_pair(channel: Channel) -> [D; 2] {
    match channel {
        Channel::X => [D::W, D::UX],
        Channel::Ss => [D::W, D::USs],
        Channel::Os => [D::WAvg, D::UAvg],
    }
}

fn random_monomial(rng: &mut ChaCha8Rng, channel: Channel) -> (ExprNode, String) {
    let lib = descriptor_library(channel);
    let n = rng.random_range(1..=2);
    let mut factors: BTreeMap<D, u32> = BTreeMap::new();
    for _ in 0..n {
        let d = *lib.choose(rng).expect("non-empty library");
        *factors.entry(d).or_default() += rng.random_range(1..=2);
    }
    let factors: Vec<(D, u32)> = factors.into_iter().collect();
    let text = factors
        .iter()
        .map(|(d, p)| if *p == 1 { format!("{d:?}") } else { format!("{d:?}^{p}") })
        .collect::<Vec<_>>()
        .join("·");
    (monomial(&factors), text)
}

fn append(form: &mut FunctionalForm, channel: Channel, extra: ExprNode) {
    let old = form.channels.get(channel).clone();
    *form.channels.get_mut(channel) = ExprNode::sum(vec![old, extra]);
}

fn next_group_name(form: &FunctionalForm, prefix: &str) -> String {
    (0..)
        .map(|i| format!("{prefix}{i}"))
        .find(|n| form.group(n).is_none())
        .expect("unbounded")
}

fn add_terms(form: &mut FunctionalForm, channel: Channel, terms: Vec<ExprNode>, group: &str) -> usize {
    let start = form.push_params(&vec![0.0; terms.len()], true);
    let name = next_group_name(form, &format!("{group}_{}_", channel.name()));
    form.push_group(name, channel, start, terms.len());
    let extra = ExprNode::sum(
        terms
            .into_iter()
            .enumerate()
            .map(|(k, t)| ExprNode::product(vec![ExprNode::param(start + k), t]))
            .collect(),
    );
    append(form, channel, extra);
    start
}

/// Child of `parent` with one zero-initialized monomial.
pub fn zero_init_graft(parent: &FunctionalForm, channel: Channel, rng: &mut ChaCha8Rng) -> Application {
    let mut form = parent.clone();
    let (term, text) = random_monomial(rng, channel);
    add_terms(&mut form, channel, vec![term], "graft");
    Application {
        operator: OperatorKind::ZeroInitGraft,
        channel,
        form,
        plan: format!("zero_init_graft on {}: add p·{text}, p = 0", channel.name()),
        uses_second_parent: false,
    }
}

/// Child with v·{1, w, u} cross terms, v the bounded s–t descriptor.
pub fn bounded_add(parent: &FunctionalForm, channel: Channel) -> Application {
    let mut form = parent.clone();
    let v = bounded_cross(channel);
    let [w, u] = shape_pair(channel);
    let terms = vec![
        ExprNode::desc(v),
        ExprNode::product(vec![ExprNode::desc(v), ExprNode::desc(w)]),
        ExprNode::product(vec![ExprNode::desc(v), ExprNode::desc(u)]),
    ];
    add_terms(&mut form, channel, terms, "cross");
    Application {
        operator: OperatorKind::BoundedAdd,
        channel,
        form,
        plan: format!(
            "bounded_add on {}: add {v:?}·(p0 + p1·{w:?} + p2·{u:?}), all p = 0",
            channel.name()
        ),
        uses_second_parent: false,
    }
}

/// g → g / (1 + Σ softplus(d_i) φ_i), d_i at the neutral value.
pub fn rational_wrap_op(parent: &FunctionalForm, channel: Channel, rng: &mut ChaCha8Rng) -> Application {
    let mut form = parent.clone();
    let lib = descriptor_library(channel);
    let n = rng.random_range(1..=3);
    let basis: Vec<D> = lib.choose_multiple(rng, n).copied().collect();
    let start = form.push_params(&vec![NEUTRAL_DENOMINATOR; n], true);
    let name = next_group_name(&form, &format!("rational_{}_", channel.name()));
    form.push_group(name, channel, start, n);
    let old = form.channels.get(channel).clone();
    let nodes: Vec<ExprNode> = basis.iter().map(|d| ExprNode::desc(*d)).collect();
    *form.channels.get_mut(channel) = rational_wrap(old, &nodes, start);
    Application {
        operator: OperatorKind::RationalWrap,
        channel,
        form,
        plan: format!(
            "rational_wrap on {}: divide by 1 + Σ softplus(d)·φ over {basis:?}, d = {NEUTRAL_DENOMINATOR}",
            channel.name()
        ),
        uses_second_parent: false,
    }
}

/// g → g·(1 + c·σ(a·φ + b)) with c = 0.
pub fn sigmoid_gate(parent: &FunctionalForm, channel: Channel, rng: &mut ChaCha8Rng) -> Application {
    let mut form = parent.clone();
    let d = *descriptor_library(channel).choose(rng).expect("non-empty library");
    let start = form.push_params(&[0.0, 1.0, 0.0], true);
    let name = next_group_name(&form, &format!("gate_{}_", channel.name()));
    form.push_group(name, channel, start, 3);
    let gate = ExprNode::sum(vec![
        ExprNode::product(vec![ExprNode::param(start + 1), ExprNode::desc(d)]),
        ExprNode::param(start + 2),
    ])
    .sigmoid();
    let factor = ExprNode::sum(vec![
        ExprNode::constant(1.0),
        ExprNode::product(vec![ExprNode::param(start), gate]),
    ]);
    let old = form.channels.get(channel).clone();
    *form.channels.get_mut(channel) = ExprNode::product(vec![old, factor]);
    Application {
        operator: OperatorKind::SigmoidGate,
        channel,
        form,
        plan: format!("sigmoid_gate on {}: multiply by 1 + c·σ(a·{d:?} + b), c = 0", channel.name()),
        uses_second_parent: false,
    }
}

/// `base` with its `channel` replaced by `donor`'s, donor parameters
/// copied with their values and trainable flags.
pub fn fusion(base: &FunctionalForm, donor: &FunctionalForm, channel: Channel) -> Result<Application> {
    if channel == Channel::Os && donor.channels.gos.descriptors().iter().any(|d| d.is_per_spin()) {
        return Err(XcError::validation("fusion", "donor channel uses per-spin descriptors"));
    }
    let mut form = base.clone();
    let mut expr = donor.channels.get(channel).clone();
    let used = expr.param_indices();
    let mut map = BTreeMap::new();
    for i in used {
        let j = form.push_params(&[donor.params[i]], donor.trainable_mask[i]);
        map.insert(i, j);
    }
    expr.remap_params(&|i| map[&i]);
    *form.channels.get_mut(channel) = expr;
    for g in donor.param_groups.iter().filter(|g| g.channel == channel) {
        if (g.start..g.start + g.len).all(|i| map.contains_key(&i)) {
            let name = if form.group(&g.name).is_some() {
                next_group_name(&form, &format!("{}_", g.name))
            } else {
                g.name.clone()
            };
            form.push_group(name, channel, map[&g.start], g.len);
        }
    }
    let mut form = compact(form);
    form.label = format!("{} + {} from {}", base.label, channel.name(), donor.label);
    Ok(Application {
        operator: OperatorKind::Fusion,
        channel,
        form,
        plan: format!(
            "fusion: keep parent, take {} from the donor '{}' with its fitted parameters",
            channel.name(),
            donor.label
        ),
        uses_second_parent: true,
    })
}

/// Trainable parameters scaled by (1 + scale·u), u ~ U(−1, 1).
pub fn perturbation(parent: &FunctionalForm, scale: f64, rng: &mut ChaCha8Rng) -> Application {
    let mut form = parent.clone();
    for (p, t) in form.params.iter_mut().zip(&form.trainable_mask) {
        if *t {
            *p *= 1.0 + scale * rng.random_range(-1.0..1.0);
        }
    }
    Application {
        operator: OperatorKind::Perturbation,
        channel: Channel::X,
        form,
        plan: format!("perturbation: scale every trainable parameter by 1 ± {scale}"),
        uses_second_parent: false,
    }
}

/// Freezes every inherited parameter and grafts 1–3 zero-initialized
/// monomials, which become the only trainable parameters.
pub fn freeze_graft(parent: &FunctionalForm, channel: Channel, rng: &mut ChaCha8Rng) -> Application {
    let mut form = parent.clone();
    form.trainable_mask.iter_mut().for_each(|t| *t = false);
    let n = rng.random_range(1..=3);
    let mut texts = Vec::with_capacity(n);
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let (t, s) = random_monomial(rng, channel);
        terms.push(t);
        texts.push(s);
    }
    add_terms(&mut form, channel, terms, "frozen_graft");
    Application {
        operator: OperatorKind::FreezeGraft,
        channel,
        form,
        plan: format!(
            "freeze_graft on {}: freeze {} inherited parameters, add {} zero-initialized terms [{}]",
            channel.name(),
            parent.n_params(),
            n,
            texts.join(", ")
        ),
        uses_second_parent: false,
    }
}

/// Drops parameters no channel references and renumbers the rest. Groups
/// survive only if all their parameters do.
pub fn compact(mut form: FunctionalForm) -> FunctionalForm {
    let mut used = vec![false; form.params.len()];
    for c in Channel::ALL {
        for i in form.channels.get(c).param_indices() {
            used[i] = true;
        }
    }
    if used.iter().all(|u| *u) {
        return form;
    }
    let mut map = vec![usize::MAX; used.len()];
    let mut next = 0;
    for (i, u) in used.iter().enumerate() {
        if *u {
            map[i] = next;
            next += 1;
        }
    }
    for c in Channel::ALL {
        form.channels.get_mut(c).remap_params(&|i| map[i]);
    }
    form.params = form.params.iter().zip(&used).filter(|(_, u)| **u).map(|(p, _)| *p).collect();
    form.trainable_mask = form
        .trainable_mask
        .iter()
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|(t, _)| *t)
        .collect();
    form.param_groups = form
        .param_groups
        .into_iter()
        .filter(|g| used[g.start..g.start + g.len].iter().all(|u| *u))
        .map(|mut g| {
            g.start = map[g.start];
            g
        })
        .collect();
    form
}

/// Applies `op` to the parents. Errors mean the operator cannot be used
/// on these inputs.
pub fn apply(
    op: OperatorKind,
    parent: &FunctionalForm,
    donor: Option<&FunctionalForm>,
    channel: Channel,
    perturbation_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Application> {
    let app = match op {
        OperatorKind::ZeroInitGraft => zero_init_graft(parent, channel, rng),
        OperatorKind::BoundedAdd => bounded_add(parent, channel),
        OperatorKind::RationalWrap => rational_wrap_op(parent, channel, rng),
        OperatorKind::SigmoidGate => sigmoid_gate(parent, channel, rng),
        OperatorKind::Fusion => {
            let donor = donor.ok_or_else(|| XcError::validation("fusion", "no second parent available"))?;
            fusion(parent, donor, channel)?
        }
        OperatorKind::Perturbation => {
            if parent.n_trainable() == 0 {
                return Err(XcError::validation("perturbation", "parent has no trainable parameters"));
            }
            perturbation(parent, perturbation_scale, rng)
        }
        OperatorKind::FreezeGraft => freeze_graft(parent, channel, rng),
    };
    app.form.validate()?;
    Ok(app)
}
