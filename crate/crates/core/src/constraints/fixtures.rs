//! Deliberately flawed forms, one per violation mechanism, plus a
//! composite that combines all four.

use crate::descriptors::{DescriptorConstants, DescriptorName as D};
use crate::expr::{sigmoid, ExprNode};
use crate::forms::{canonical_baseline, Channel, FunctionalForm};

/// Coefficient of the additive ζ term in g_os.
pub const ZETA_COEFF: f64 = -0.174;
/// Relative UEG exchange bias of the sigmoid-network fixture.
pub const UEG_BIAS: f64 = 0.0167;
/// Slope and centre of the r_s switch.
pub const RS_SLOPE: f64 = 10.0;
pub const RS_CENTER: f64 = 0.5;
pub const RS_SWITCH_COEFFS: [f64; 3] = [0.5, -0.8, 0.3];
pub const LAPLACIAN_COEFF: f64 = 0.05;

const NETWORK_BIASES: [f64; 2] = [0.0, -1.0];
const NETWORK_WEIGHTS: [[f64; 3]; 2] = [[0.6, -0.4, 3.0], [-0.2, 0.5, -2.5]];

fn add_to(form: &mut FunctionalForm, channel: Channel, extra: ExprNode) {
    let old = form.channels.get(channel).clone();
    *form.channels.get_mut(channel) = ExprNode::sum(vec![old, extra]);
}

fn relabel(mut form: FunctionalForm, label: &str) -> FunctionalForm {
    form.label = label.into();
    form
}

/// g_os gains c·ζ, which is odd under spin exchange.
pub fn antisymmetric_zeta_fixture() -> FunctionalForm {
    let mut f = canonical_baseline();
    let p = f.push_params(&[ZETA_COEFF], true);
    f.push_group("os_zeta", Channel::Os, p, 1);
    add_to(
        &mut f,
        Channel::Os,
        ExprNode::product(vec![ExprNode::param(p), ExprNode::desc(D::Zeta)]),
    );
    relabel(f, "fixture: antisymmetric zeta")
}

/// Σ_h c_h σ(W_h·φ + b_h), added to the baseline polynomial. At
/// w = u = 0 and zero Laplacian it leaves a bias of `UEG_BIAS`·c_x0.
fn sigmoid_network(f: &mut FunctionalForm, with_laplacian: bool) -> ExprNode {
    let c_x0 = DescriptorConstants::default().c_x0();
    let scale = UEG_BIAS * c_x0 / NETWORK_BIASES.iter().map(|b| sigmoid(*b)).sum::<f64>();
    let mut features = vec![D::W, D::UX];
    if with_laplacian {
        features.push(D::LaplNorm);
    }
    let mut hidden = Vec::new();
    for (h, bias) in NETWORK_BIASES.iter().enumerate() {
        let mut weights: Vec<f64> = NETWORK_WEIGHTS[h][..features.len()].to_vec();
        weights.push(*bias);
        let start = f.push_params(&weights, true);
        let c = f.push_params(&[scale], true);
        f.push_group(format!("x_hidden{h}"), Channel::X, start, features.len() + 2);
        let mut pre: Vec<ExprNode> = features
            .iter()
            .enumerate()
            .map(|(k, d)| ExprNode::product(vec![ExprNode::param(start + k), ExprNode::desc(*d)]))
            .collect();
        pre.push(ExprNode::param(start + features.len()));
        hidden.push(ExprNode::product(vec![
            ExprNode::param(c),
            ExprNode::sum(pre).sigmoid(),
        ]));
    }
    ExprNode::sum(hidden)
}

/// Sigmoid hidden layer over (w, u) whose output does not vanish in the
/// uniform-gas limit.
pub fn ueg_bias_fixture() -> FunctionalForm {
    let mut f = canonical_baseline();
    let net = sigmoid_network(&mut f, false);
    add_to(&mut f, Channel::X, net);
    relabel(f, "fixture: ueg bias")
}

/// g_x gains c·tanh(L), with L the index-space Laplacian feature.
pub fn laplacian_fixture() -> FunctionalForm {
    let mut f = canonical_baseline();
    let p = f.push_params(&[LAPLACIAN_COEFF], true);
    f.push_group("x_laplacian", Channel::X, p, 1);
    add_to(
        &mut f,
        Channel::X,
        ExprNode::product(vec![ExprNode::param(p), ExprNode::desc(D::LaplNorm).tanh()]),
    );
    relabel(f, "fixture: laplacian feature")
}

fn rs_switch(f: &mut FunctionalForm) -> ExprNode {
    let p = f.push_params(&RS_SWITCH_COEFFS, true);
    f.push_group("ss_rs_switch", Channel::Ss, p, 3);
    let gate = ExprNode::product(vec![
        ExprNode::constant(-RS_SLOPE),
        ExprNode::sum(vec![ExprNode::desc(D::Rs), ExprNode::constant(-RS_CENTER)]),
    ])
    .sigmoid();
    let body = ExprNode::sum(vec![
        ExprNode::product(vec![ExprNode::param(p), ExprNode::desc(D::W)]),
        ExprNode::product(vec![ExprNode::param(p + 1), ExprNode::desc(D::USs)]),
        ExprNode::product(vec![
            ExprNode::param(p + 2),
            ExprNode::desc(D::W),
            ExprNode::desc(D::USs),
        ]),
    ]);
    ExprNode::product(vec![gate, body])
}

/// g_ss gains a steep switch σ(−k(r_s − r_0)) times a (w, u) polynomial.
pub fn rs_switch_fixture() -> FunctionalForm {
    let mut f = canonical_baseline();
    let sw = rs_switch(&mut f);
    add_to(&mut f, Channel::Ss, sw);
    relabel(f, "fixture: rs switch")
}

/// All four mechanisms at once: Laplacian-fed sigmoid network in g_x,
/// r_s switch in g_ss, ζ term in g_os.
pub fn composite_fixture() -> FunctionalForm {
    let mut f = canonical_baseline();
    let net = sigmoid_network(&mut f, true);
    add_to(&mut f, Channel::X, net);
    let sw = rs_switch(&mut f);
    add_to(&mut f, Channel::Ss, sw);
    let p = f.push_params(&[ZETA_COEFF], true);
    f.push_group("os_zeta", Channel::Os, p, 1);
    add_to(
        &mut f,
        Channel::Os,
        ExprNode::product(vec![ExprNode::param(p), ExprNode::desc(D::Zeta)]),
    );
    relabel(f, "fixture: composite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate() {
        for f in [
            antisymmetric_zeta_fixture(),
            ueg_bias_fixture(),
            laplacian_fixture(),
            rs_switch_fixture(),
            composite_fixture(),
        ] {
            f.validate().unwrap();
        }
    }
}
