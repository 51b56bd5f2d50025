//! Runs the four physical-constraint checks on the canonical forms and on
//! forms built to violate them.

use xcforge::constraints::{fixtures, run_all, ConstraintKind, ConstraintSettings, FixtureSpec};
use xcforge::energy::EnergyModel;
use xcforge::forms::{canonical_baseline, canonical_safs26a, canonical_safs26b};

fn main() -> xcforge::Result<()> {
    let mut spec = FixtureSpec::default();
    spec.proxies.truncate(6);
    let bundle = spec.generate()?;
    let settings = ConstraintSettings::default();

    let forms = [
        canonical_baseline(),
        canonical_safs26a(),
        canonical_safs26b(),
        fixtures::antisymmetric_zeta_fixture(),
        fixtures::ueg_bias_fixture(),
        fixtures::laplacian_fixture(),
        fixtures::rs_switch_fixture(),
        fixtures::composite_fixture(),
    ];
    println!("{:<28} {:>11} {:>11} {:>11} {:>11}  violations", "form", "spin", "ueg", "scaling", "grid");
    for form in forms {
        let label = form.label.clone();
        let report = run_all(&EnergyModel::new(form), &bundle, &settings)?;
        let cells: Vec<String> = ConstraintKind::ALL
            .iter()
            .map(|k| {
                let r = report.get(*k);
                format!("{:>10.2e}{}", r.metric, if r.pass { ' ' } else { '*' })
            })
            .collect();
        println!("{label:<28} {}  {}", cells.join(" "), report.n_violations);
    }
    println!("\n* marks a failed check");
    Ok(())
}
