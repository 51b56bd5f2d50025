//! The three reference forms.
//!
//! Parameter layout follows `param_groups`; every group lists its
//! parameters in the order of the corresponding power template.

use super::{Channel, Channels, ConstantsOverride, FunctionalForm, Monomial, PowerTemplates};
use crate::descriptors::{DescriptorName as D, DescriptorConstants};
use crate::expr::{linear_combination, monomial, rational_wrap, ExprNode, SOFTPLUS_OFF};

/// Exchange (w, u) powers and values; the constant term is 1 − a_HF.
pub const BASELINE_X: [(Monomial, f64); 3] = [
    (Monomial::wu(0, 0), 0.85),
    (Monomial::wu(1, 0), 1.007),
    (Monomial::wu(0, 1), 0.259),
];

pub const BASELINE_CSS: [(Monomial, f64); 5] = [
    (Monomial::wu(0, 0), 0.443),
    (Monomial::wu(1, 0), -1.437),
    (Monomial::wu(2, 0), -4.535),
    (Monomial::wu(4, 3), -3.39),
    (Monomial::wu(0, 4), 4.278),
];

pub const BASELINE_COS: [(Monomial, f64); 6] = [
    (Monomial::wu(0, 0), 1.0),
    (Monomial::wu(1, 0), 1.358),
    (Monomial::wu(2, 0), 2.924),
    (Monomial::wu(6, 0), -8.812),
    (Monomial::wu(2, 1), -1.39),
    (Monomial::wu(6, 1), 9.142),
];

/// Opposite-spin (w, u, f_ζ) template: the baseline six plus five
/// terms linear or quadratic in f_ζ.
pub const SAFS26B_OS_TEMPLATE: [Monomial; 11] = [
    Monomial::wu(0, 0),
    Monomial::wu(1, 0),
    Monomial::wu(2, 0),
    Monomial::wu(6, 0),
    Monomial::wu(2, 1),
    Monomial::wu(6, 1),
    Monomial::wuz(0, 0, 1),
    Monomial::wuz(0, 0, 2),
    Monomial::wuz(1, 0, 1),
    Monomial::wuz(0, 1, 1),
    Monomial::wuz(1, 0, 2),
];

/// Descriptors a channel's polynomial and cross terms read.
struct ChannelVars {
    w: D,
    u: D,
    v: D,
    z: D,
    x: D,
}

const SS_VARS: ChannelVars = ChannelVars {
    w: D::W,
    u: D::USs,
    v: D::VSt,
    z: D::ZSs,
    x: D::XSs,
};

const OS_VARS: ChannelVars = ChannelVars {
    w: D::WAvg,
    u: D::UAvg,
    v: D::VStAvg,
    z: D::ZAvg,
    x: D::XAvg,
};

fn basis(template: &[Monomial], w: D, u: D, z: D) -> Vec<ExprNode> {
    template
        .iter()
        .map(|m| monomial(&[(w, m.w), (u, m.u), (z, m.z)]))
        .collect()
}

fn templates_of(table: &[(Monomial, f64)]) -> Vec<Monomial> {
    table.iter().map(|(m, _)| *m).collect()
}

fn values_of(table: &[(Monomial, f64)]) -> Vec<f64> {
    table.iter().map(|(_, v)| *v).collect()
}

fn empty_form(label: &str) -> FunctionalForm {
    FunctionalForm {
        label: label.into(),
        channels: Channels {
            gx: ExprNode::constant(0.0),
            gss: ExprNode::constant(0.0),
            gos: ExprNode::constant(0.0),
        },
        params: Vec::new(),
        trainable_mask: Vec::new(),
        power_templates: PowerTemplates {
            x: templates_of(&BASELINE_X),
            ss: templates_of(&BASELINE_CSS),
            os: templates_of(&BASELINE_COS),
        },
        param_groups: Vec::new(),
        constants_override: ConstantsOverride::default(),
    }
}

/// Pushes the exchange polynomial with its constant frozen; returns P_x.
fn exchange_polynomial(f: &mut FunctionalForm) -> ExprNode {
    let start = f.push_params(&values_of(&BASELINE_X), true);
    f.trainable_mask[start] = false;
    f.push_group("x_poly", Channel::X, start, BASELINE_X.len());
    linear_combination(start, &basis(&f.power_templates.x, D::W, D::UX, D::Fz))
}

/// Three-term exchange, five-term same-spin and six-term opposite-spin
/// polynomials. The exchange constant and the opposite-spin constant
/// are frozen, leaving 12 trainable coefficients.
pub fn canonical_baseline() -> FunctionalForm {
    let mut f = empty_form("wB97M-V baseline");
    f.channels.gx = exchange_polynomial(&mut f);

    let ss = f.push_params(&values_of(&BASELINE_CSS), true);
    f.push_group("ss_poly", Channel::Ss, ss, BASELINE_CSS.len());
    f.channels.gss = linear_combination(ss, &basis(&f.power_templates.ss, D::W, D::USs, D::Fz));

    let os = f.push_params(&values_of(&BASELINE_COS), true);
    f.trainable_mask[os] = false;
    f.push_group("os_poly", Channel::Os, os, BASELINE_COS.len());
    f.channels.gos = linear_combination(os, &basis(&f.power_templates.os, D::WAvg, D::UAvg, D::Fz));
    f
}

fn cross_terms(first: usize, vars: &ChannelVars) -> ExprNode {
    let p = ExprNode::param;
    let d = |n| ExprNode::desc(n);
    let z_arg = ExprNode::sum(vec![
        ExprNode::product(vec![p(first + 2), d(vars.z)]),
        ExprNode::product(vec![p(first + 3), d(vars.z).powi(2)]),
    ]);
    ExprNode::sum(vec![
        ExprNode::product(vec![p(first), d(vars.v)]),
        ExprNode::product(vec![p(first + 1), d(vars.v).powi(2)]),
        z_arg.tanh(),
        ExprNode::product(vec![p(first + 4), d(vars.x)]),
        ExprNode::product(vec![p(first + 5), d(vars.x).powi(2)]),
    ])
}

fn rational_channel(
    f: &mut FunctionalForm,
    channel: Channel,
    prefix: &str,
    table: &[(Monomial, f64)],
    vars: &ChannelVars,
) -> ExprNode {
    let poly = basis(&templates_of(table), vars.w, vars.u, vars.z);
    let mut num_values = values_of(table);
    num_values.extend([0.0; 6]);
    let num = f.push_params(&num_values, true);
    f.push_group(format!("{prefix}_num"), channel, num, num_values.len());
    let numerator = ExprNode::sum(vec![
        linear_combination(num, &poly),
        cross_terms(num + table.len(), vars),
    ]);

    let mut den_basis = poly;
    for n in [vars.v, vars.z, vars.x] {
        den_basis.push(ExprNode::desc(n));
        den_basis.push(ExprNode::desc(n).powi(2));
    }
    let den = f.push_params(&vec![SOFTPLUS_OFF; den_basis.len()], true);
    f.push_group(format!("{prefix}_den"), channel, den, den_basis.len());
    rational_wrap(numerator, &den_basis, den)
}

/// Baseline exchange plus v and v² terms; both correlation channels as
/// bounded rationals N/D. New numerator terms start at zero and
/// denominator coefficients at [`SOFTPLUS_OFF`], so the default
/// parameters reproduce the baseline to ~1e-15.
pub fn canonical_safs26a() -> FunctionalForm {
    let mut f = empty_form("SAFS26-a");
    let px = exchange_polynomial(&mut f);
    let xv = f.push_params(&[0.0, 0.0], true);
    f.push_group("x_v", Channel::X, xv, 2);
    f.channels.gx = ExprNode::sum(vec![
        px,
        ExprNode::product(vec![ExprNode::param(xv), ExprNode::desc(D::VSt)]),
        ExprNode::product(vec![ExprNode::param(xv + 1), ExprNode::desc(D::VSt).powi(2)]),
    ]);
    f.channels.gss = rational_channel(&mut f, Channel::Ss, "ss", &BASELINE_CSS, &SS_VARS);
    f.channels.gos = rational_channel(&mut f, Channel::Os, "os", &BASELINE_COS, &OS_VARS);
    f
}

/// Placeholder values for the frozen SAFS26-b parameters. They are
/// illustrative, chosen only so the form passes every constraint check.
pub mod safs26b_defaults {
    pub const X_CROSS: [f64; 2] = [-0.12, -0.29];
    pub const C_SIG_X: f64 = 0.05;
    pub const A_X: f64 = 2.0;
    pub const B_X: f64 = 1.5;
    pub const C_SIG_SS: f64 = -0.1;
    pub const A_SS: f64 = 1.0;
    pub const GAMMA: f64 = 0.1;
}

/// Exchange with iso-orbital cross terms and a sigmoid gate, same-spin
/// polynomial with a kinetic gate and an r_s/v/ζ_σ rational correction,
/// opposite-spin (w, u, f_ζ) polynomial with an r_s/v/|ζ| correction.
/// 19 trainable parameters.
pub fn canonical_safs26b() -> FunctionalForm {
    use safs26b_defaults::*;
    let p = ExprNode::param;
    let d = |n| ExprNode::desc(n);
    let k_c = DescriptorConstants::default().k_c;

    let mut f = empty_form("SAFS26-b");
    f.power_templates.x = vec![
        Monomial::wu(0, 0),
        Monomial::wu(1, 0),
        Monomial::wu(0, 1),
    ];
    f.power_templates.os = SAFS26B_OS_TEMPLATE.to_vec();

    // exchange, all frozen
    let px = exchange_polynomial(&mut f);
    f.trainable_mask[1] = false;
    f.trainable_mask[2] = false;
    let xc = f.push_params(&X_CROSS, false);
    f.push_group("x_cross", Channel::X, xc, 2);
    let xs = f.push_params(&[C_SIG_X, A_X, B_X], false);
    f.push_group("x_gate", Channel::X, xs, 3);
    let poly_x = ExprNode::sum(vec![
        px,
        ExprNode::product(vec![p(xc), d(D::W), d(D::VAlpha)]),
        ExprNode::product(vec![p(xc + 1), d(D::UX), d(D::VAlpha)]),
    ]);
    let gate_x = ExprNode::product(vec![
        p(xs + 1),
        ExprNode::sum(vec![
            d(D::S).powi(2),
            ExprNode::product(vec![ExprNode::constant(-1.0), p(xs + 2)]),
        ]),
    ])
    .sigmoid();
    f.channels.gx = ExprNode::product(vec![
        poly_x,
        ExprNode::sum(vec![
            ExprNode::constant(1.0),
            ExprNode::product(vec![p(xs), gate_x]),
        ]),
    ]);

    // same-spin
    let css = f.push_params(&values_of(&BASELINE_CSS), false);
    f.push_group("ss_poly", Channel::Ss, css, BASELINE_CSS.len());
    let ssg = f.push_params(&[C_SIG_SS, A_SS], false);
    f.push_group("ss_gate", Channel::Ss, ssg, 2);
    let ssa = f.push_params(&[0.0, 0.0], true);
    f.push_group("ss_additive", Channel::Ss, ssa, 2);
    let ssc = f.push_params(&[0.0, 0.0, 0.0], true);
    f.push_group("ss_correction", Channel::Ss, ssc, 3);
    let ssr = f.push_params(&[GAMMA], false);
    f.push_group("ss_gamma", Channel::Ss, ssr, 1);

    let pcss = linear_combination(css, &basis(&f.power_templates.ss, D::W, D::USs, D::Fz));
    let gate_ss = ExprNode::product(vec![
        p(ssg + 1),
        ExprNode::sum(vec![d(D::T), ExprNode::constant(-0.5 * k_c)]),
    ])
    .sigmoid();
    let bracket = ExprNode::sum(vec![
        ExprNode::product(vec![
            pcss,
            ExprNode::sum(vec![
                ExprNode::constant(1.0),
                ExprNode::product(vec![p(ssg), gate_ss]),
            ]),
        ]),
        ExprNode::product(vec![p(ssa), d(D::USs), d(D::W)]),
        ExprNode::product(vec![p(ssa + 1), d(D::USs).powi(2), d(D::W).powi(2)]),
    ]);
    let rs = || d(D::RsSpin);
    let corr_ss = ExprNode::div(
        ExprNode::sum(vec![
            ExprNode::product(vec![p(ssc), rs()]),
            ExprNode::product(vec![p(ssc + 1), rs(), d(D::VAlpha)]),
            ExprNode::product(vec![p(ssc + 2), d(D::ZetaSpin)]),
        ]),
        ExprNode::sum(vec![
            ExprNode::constant(1.0),
            ExprNode::product(vec![p(ssr), rs().powi(2)]),
        ]),
    );
    f.channels.gss = ExprNode::product(vec![
        bracket,
        ExprNode::sum(vec![ExprNode::constant(1.0), corr_ss]),
    ]);

    // opposite-spin
    let mut os_values = values_of(&BASELINE_COS);
    os_values.extend([0.0; 5]);
    let cos = f.push_params(&os_values, true);
    f.push_group("os_poly", Channel::Os, cos, os_values.len());
    let osc = f.push_params(&[0.0, 0.0, 0.0], true);
    f.push_group("os_correction", Channel::Os, osc, 3);
    let osr = f.push_params(&[GAMMA], false);
    f.push_group("os_gamma", Channel::Os, osr, 1);

    let pcos = linear_combination(cos, &basis(&f.power_templates.os, D::WAvg, D::UAvg, D::Fz));
    let corr_os = ExprNode::div(
        ExprNode::sum(vec![
            p(osc),
            ExprNode::product(vec![p(osc + 1), d(D::VAlphaAvg)]),
            ExprNode::product(vec![p(osc + 2), d(D::AbsZeta)]),
        ]),
        ExprNode::sum(vec![
            ExprNode::constant(1.0),
            ExprNode::product(vec![p(osr), d(D::Rs).powi(2)]),
        ]),
    );
    f.channels.gos = ExprNode::product(vec![
        pcos,
        ExprNode::sum(vec![ExprNode::constant(1.0), corr_os]),
    ]);
    f
}
