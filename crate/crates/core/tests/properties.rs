use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xcforge::descriptors::{DescriptorConstants, DescriptorName, DescriptorPoint};
use xcforge::energy::{xc_energy, EnergyModel};
use xcforge::evo::operators::{apply, OperatorKind};
use xcforge::evo::{penalized_score, score};
use xcforge::forms::{canonical_baseline, canonical_safs26a, canonical_safs26b, Channel, FunctionalForm};
use xcforge::grid::{generate, swap_spin, GaussianTerm, Resolution, SpinChannel, SpinDensityPoint, SyntheticSystemSpec};

const BOUNDED: [DescriptorName; 8] = [
    DescriptorName::W,
    DescriptorName::UX,
    DescriptorName::USs,
    DescriptorName::VSt,
    DescriptorName::Zeta,
    DescriptorName::Fz,
    DescriptorName::WAvg,
    DescriptorName::UAvg,
];

fn density_point() -> impl Strategy<Value = SpinDensityPoint> {
    (
        prop::array::uniform2(-6.0f64..1.0),
        prop::array::uniform2(prop::array::uniform3(-2.0f64..2.0)),
        prop::array::uniform2(0.0f64..5.0),
    )
        .prop_map(|(lr, g, extra)| {
            let rho = lr.map(|l| 10f64.powf(l));
            let grad = [0, 1].map(|s| g[s].map(|x| x * rho[s]));
            let tau = [0, 1].map(|s| {
                let gn2: f64 = grad[s].iter().map(|x| x * x).sum();
                gn2 / (8.0 * rho[s]) + extra[s] * rho[s].powf(5.0 / 3.0)
            });
            SpinDensityPoint { rho, grad, tau }
        })
}

fn canonical(i: usize) -> FunctionalForm {
    [canonical_baseline(), canonical_safs26a(), canonical_safs26b()][i % 3].clone()
}

fn small_grid() -> xcforge::grid::DensityGrid {
    generate(&SyntheticSystemSpec::gaussian(
        vec![
            GaussianTerm::new([0.0; 3], 1.1, 1.0, SpinChannel::Both),
            GaussianTerm::new([0.3, 0.0, 0.0], 0.8, 0.4, SpinChannel::Alpha),
        ],
        Resolution::Coarse,
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounded_descriptors_stay_in_range(p in density_point()) {
        let dp = DescriptorPoint::compute(&p, &DescriptorConstants::default());
        for name in BOUNDED {
            let (lo, hi) = name.range().unwrap();
            for spin in 0..2 {
                let v = dp.get(name, spin);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{name:?}[{spin}] = {v}");
            }
        }
    }

    #[test]
    fn descriptor_swap_exchanges_spins(p in density_point()) {
        let c = DescriptorConstants::default();
        let a = DescriptorPoint::compute(&p, &c);
        let q = SpinDensityPoint { rho: [p.rho[1], p.rho[0]], grad: [p.grad[1], p.grad[0]], tau: [p.tau[1], p.tau[0]] };
        let b = DescriptorPoint::compute(&q, &c);
        prop_assert_eq!(a.spin[0], b.spin[1]);
        prop_assert_eq!(a.get(DescriptorName::Zeta, 0), -b.get(DescriptorName::Zeta, 0));
        prop_assert_eq!(a.get(DescriptorName::Rs, 0), b.get(DescriptorName::Rs, 0));
    }

    #[test]
    fn penalized_score_identity(j in 0.01f64..100.0, n in 0usize..5) {
        let r = score(3.45, j);
        prop_assert_eq!(r, 3.45 / j);
        prop_assert_eq!(penalized_score(r, n), r * 0.9f64.powi(n as i32));
        prop_assert!(penalized_score(r, n + 1) < penalized_score(r, n));
    }

    #[test]
    fn form_json_round_trips(which in 0usize..3, seed in any::<u64>()) {
        let f = canonical(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..f.n_trainable()).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let g = f.with_trainable_values(&vals).unwrap();
        prop_assert_eq!(FunctionalForm::from_json(&g.to_json().unwrap()).unwrap(), g);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operator_children_validate(which in 0usize..3, op in 0usize..7, ch in 0usize..3, seed in any::<u64>()) {
        let parent = canonical(which);
        let donor = canonical(which + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = OperatorKind::ALL[op];
        let channel = Channel::ALL[ch];
        if let Ok(app) = apply(op, &parent, Some(&donor), channel, 0.1, &mut rng) {
            prop_assert!(app.form.validate().is_ok());
            for c in [Channel::Ss, Channel::Os] {
                if parent.channels.get(c).denominators_at_least_one() && donor.channels.get(c).denominators_at_least_one() {
                    prop_assert!(app.form.channels.get(c).denominators_at_least_one(), "{:?} {:?}", op, c);
                }
            }
        }
    }

    #[test]
    fn zero_init_graft_keeps_energy(which in 0usize..3, ch in 0usize..3, seed in any::<u64>()) {
        let parent = canonical(which);
        let grid = small_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let app = apply(OperatorKind::ZeroInitGraft, &parent, None, Channel::ALL[ch], 0.1, &mut rng).unwrap();
        let e0 = xc_energy(&EnergyModel::new(parent), &grid).unwrap();
        let e1 = xc_energy(&EnergyModel::new(app.form), &grid).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-12 * e0.abs(), "{e0} vs {e1}");
    }

    #[test]
    fn energy_is_spin_symmetric(which in 0usize..3, seed in any::<u64>()) {
        let f = canonical(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..f.n_trainable()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let model = EnergyModel::new(f.with_trainable_values(&vals).unwrap());
        let grid = small_grid();
        let a = xc_energy(&model, &grid).unwrap();
        let b = xc_energy(&model, &swap_spin(&grid)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }
}
