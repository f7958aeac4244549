use proptest::prelude::*;
use qnlchain_core::potentials::{check_assumptions, CheckOptions};
use qnlchain_core::{Potential, PotentialSpec, Which};

fn lj(k1: f64, k2: f64) -> Potential {
    Potential::new(PotentialSpec::lennard_jones(k1, k2).unwrap()).unwrap()
}

fn morse(k2: f64) -> Potential {
    Potential::new(PotentialSpec::morse(1.0, k2, 1.0).unwrap()).unwrap()
}

fn families() -> impl Strategy<Value = Potential> {
    prop_oneof![
        (0.5f64..2.0, 0.5f64..2.0).prop_map(|(a, b)| lj(a, b)),
        (0.5f64..3.0).prop_map(morse),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivatives_of_all_densities_match_central_differences(pot in families(), t in 0.0f64..1.0) {
        let z = pot.delta1() * (0.85 + 2.5 * t);
        let h = 1e-5 * z.abs().max(1.0);
        for which in [Which::J1, Which::J2, Which::Jcb] {
            let d = pot.spec.eval(which, z, 1).unwrap();
            let fd = (pot.spec.value(which, z + h) - pot.spec.value(which, z - h)) / (2.0 * h);
            prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "{which:?} at {z}: {d} vs {fd}");
        }
    }

    #[test]
    fn envelope_is_nonincreasing_then_flat(pot in families(), t in 0.3f64..3.0) {
        let z = t * pot.gamma();
        let (_, d) = pot.j0_star_star(z).unwrap();
        if z <= pot.gamma() {
            prop_assert!(d <= 1e-12);
        } else {
            prop_assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn inner_split_is_symmetric_below_gamma(k1 in 0.5f64..2.0, k2 in 0.5f64..2.0, t in 0.85f64..1.0) {
        let pot = lj(k1, k2);
        let z = t * pot.gamma();
        let s = pot.j0_split(z).unwrap();
        prop_assert!((s.z1 - z).abs() <= 1e-6, "z = {z}, z1 = {}", s.z1);
    }

    #[test]
    fn j0_lies_above_every_tangent_of_the_envelope(pot in families(), a in 0.9f64..2.5, b in 0.9f64..2.5) {
        let ell = a * pot.gamma();
        let z = b * pot.gamma();
        let (env, d) = pot.j0_star_star(ell).unwrap();
        let j0 = pot.j0(z).unwrap();
        prop_assert!(j0 - env - d * (z - ell) >= -1e-12, "ell = {ell}, z = {z}");
    }
}

#[test]
fn morse_r_has_a_single_critical_point_at_gamma() {
    for k2 in [0.7, 1.0, 2.0] {
        let pot = morse(k2);
        let g = pot.gamma();
        let pts: Vec<f64> = (0..4000).map(|i| g - 3.0 + 8.0 * i as f64 / 3999.0).collect();
        let r: Vec<f64> = pts.iter().map(|&t| pot.r(t).unwrap()).collect();
        assert!(r.iter().all(|&v| v <= 1e-10));
        let slope_changes = r.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count();
        assert_eq!(slope_changes, 1, "k2 = {k2}");
    }
}

#[test]
fn default_checks_pass_for_both_families() {
    for spec in [PotentialSpec::lennard_jones(1.0, 1.0).unwrap(), PotentialSpec::morse(1.0, 1.0, 1.0).unwrap()] {
        let rep = check_assumptions(&spec, &CheckOptions::default()).unwrap();
        assert!(rep.all_pass(), "{}", rep.to_json().unwrap());
    }
}
