use std::f64::consts::PI;

use hypobgk::models::{project_initial, CollisionFrequencyModel, InitialDataSpec, InitialSource, NormalizationMode, SigmaVariant};
use hypobgk::propagator::{evolve_exact, evolve_exact_with, evolve_reference, trajectory, AugmentedGenerator, StateStack};
use hypobgk::spectral::{build_operators, ModeLattice};
use hypobgk::{Error, Execution, C64};
use proptest::prelude::*;

fn random_state(lattice: ModeLattice, levels: usize, z: f64, seed: u64, all_levels: bool) -> StateStack {
    let spec = InitialDataSpec {
        source: InitialSource::Random { seed: Some(seed), scale: 1.0, decay: 0.8, k_max: None, all_levels },
        normalization: NormalizationMode::Enforce,
    };
    project_initial(&spec, &lattice, levels, z).unwrap()
}

fn max_gap(a: &StateStack, b: &StateStack) -> f64 {
    let mut gap: f64 = 0.0;
    for k in 0..a.lattice.num_modes() {
        for (x, y) in a.mode(k).iter().zip(b.mode(k).iter()) {
            gap = gap.max((x - y).norm());
        }
    }
    gap
}

fn affine() -> CollisionFrequencyModel {
    CollisionFrequencyModel::new(SigmaVariant::Affine { sigma0: 1.0, c1: 0.5 }, (-1.0, 1.0)).unwrap()
}

fn trig() -> CollisionFrequencyModel {
    CollisionFrequencyModel::new(SigmaVariant::Trigonometric { sigma0: 1.5, eps: 0.5, omega: 1.0 }, (-PI, PI)).unwrap()
}

#[test]
fn exact_matches_rk4_reference() {
    let lattice = ModeLattice::new(2.0 * PI, 4, 10).unwrap();
    for model in [affine(), trig()] {
        let s = random_state(lattice, 3, 0.3, 5, true);
        let exact = evolve_exact(&s, 1.0, &model).unwrap();
        let rk = evolve_reference(&s, 1.0, &model, 1000).unwrap();
        let gap = max_gap(&exact, &rk) / s.max_abs();
        assert!(gap < 1e-8, "{gap}");
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let lattice = ModeLattice::new(2.0 * PI, 3, 8).unwrap();
    let model = trig();
    let s = random_state(lattice, 2, 0.1, 8, true);
    let exact = evolve_exact(&s, 1.0, &model).unwrap();
    let e1 = max_gap(&exact, &evolve_reference(&s, 1.0, &model, 16).unwrap());
    let e2 = max_gap(&exact, &evolve_reference(&s, 1.0, &model, 32).unwrap());
    let ratio = e1 / e2;
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn first_level_matches_central_differences() {
    let lattice = ModeLattice::new(2.0 * PI, 3, 8).unwrap();
    for model in [affine(), trig()] {
        let z = 0.3;
        let s = random_state(lattice, 2, z, 21, false);
        let at = |zz: f64| {
            let mut s0 = s.truncate_levels(1).unwrap();
            s0.z = zz;
            evolve_exact(&s0, 2.0, &model).unwrap()
        };
        let exact = evolve_exact(&s, 2.0, &model).unwrap();
        let fd_error = |eps: f64| {
            let (p, m) = (at(z + eps), at(z - eps));
            let mut e: f64 = 0.0;
            for k in 0..lattice.num_modes() {
                for (i, d) in exact.level(k, 1).iter().enumerate() {
                    let fd = (p.level(k, 0)[i] - m.level(k, 0)[i]) / (2.0 * eps);
                    e = e.max((fd - d).norm());
                }
            }
            e
        };
        let ratio = fd_error(1e-3) / fd_error(5e-4);
        assert!((3.5..=4.5).contains(&ratio), "{:?}: ratio {ratio}", model.variant);
    }
}

#[test]
fn conserved_moments_stay_zero() {
    let lattice = ModeLattice::new(3.0, 3, 9).unwrap();
    let s = random_state(lattice, 3, -0.5, 2, true);
    let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    for snap in trajectory(&s, &times, &affine(), Execution::Sequential).unwrap() {
        for n in 0..3 {
            for c in &snap.level(0, n)[..3] {
                assert!(c.norm() <= 1e-14);
            }
        }
    }
}

#[test]
fn zero_mode_relaxes_at_the_collision_rate() {
    let lattice = ModeLattice::new(3.0, 1, 7).unwrap();
    let model = CollisionFrequencyModel::new(SigmaVariant::Constant { sigma0: 0.8 }, (0.0, 1.0)).unwrap();
    let s = random_state(lattice, 1, 0.0, 4, false);
    let out = evolve_exact(&s, 3.0, &model).unwrap();
    for m in 3..7 {
        let expect = s.level(0, 0)[m] * (-0.8f64 * 3.0).exp();
        assert!((out.level(0, 0)[m] - expect).norm() < 1e-14);
    }
}

#[test]
fn affine_generator_has_two_nonzero_block_diagonals() {
    let ops = build_operators(6).unwrap();
    let g = AugmentedGenerator::build(2, 1.0, &ops, &[1.2, 0.5, 0.0, 0.0], 4).unwrap();
    for row in 0..4 {
        for col in 0..4 {
            let b = g.block(row, col);
            match row as i64 - col as i64 {
                0 | 1 => assert!(b.iter().any(|z| z.norm() > 0.0)),
                _ => assert!(b.iter().all(|z| z.norm() == 0.0), "block ({row},{col})"),
            }
        }
    }
    // (n, n−1) = n c₁ 𝕃₂
    let b = g.block(3, 2);
    assert_eq!(b[(4, 4)], C64::new(1.5, 0.0));
    assert_eq!(b[(0, 0)], C64::new(0.0, 0.0));
}

#[test]
fn bad_time_arguments_are_usage_errors() {
    let lattice = ModeLattice::new(3.0, 1, 5).unwrap();
    let s = random_state(lattice, 1, 0.0, 1, false);
    assert!(matches!(evolve_exact(&s, -1.0, &affine()), Err(Error::Usage(_))));
    assert!(matches!(evolve_exact(&s, f64::NAN, &affine()), Err(Error::Usage(_))));
    assert!(matches!(trajectory(&s, &[1.0, 0.5], &affine(), Execution::Sequential), Err(Error::Usage(_))));
    assert!(matches!(evolve_reference(&s, 1.0, &affine(), 0), Err(Error::Usage(_))));
}

#[test]
fn parallel_and_sequential_agree_bitwise() {
    let lattice = ModeLattice::new(2.0 * PI, 12, 10).unwrap();
    let s = random_state(lattice, 3, 0.2, 77, true);
    let a = evolve_exact_with(&s, 0.7, &trig(), Execution::Sequential).unwrap();
    let b = evolve_exact_with(&s, 0.7, &trig(), Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_is_a_semigroup(t1 in 0.0f64..3.0, t2 in 0.0f64..3.0, seed in 0u64..1000, z in -1.0f64..1.0) {
        let lattice = ModeLattice::new(4.0, 3, 7).unwrap();
        let s = random_state(lattice, 2, z, seed, true);
        let model = affine();
        let two = evolve_exact(&evolve_exact(&s, t1, &model).unwrap(), t2, &model).unwrap();
        let one = evolve_exact(&s, t1 + t2, &model).unwrap();
        prop_assert!(max_gap(&one, &two) <= 1e-12 * s.max_abs().max(1.0));
        prop_assert!((one.t - (t1 + t2)).abs() < 1e-15);
    }

    #[test]
    fn trajectory_snapshots_match_direct_evolution(seed in 0u64..1000, dt in 0.05f64..1.0) {
        let lattice = ModeLattice::new(4.0, 2, 6).unwrap();
        let s = random_state(lattice, 1, 0.0, seed, false);
        let times: Vec<f64> = (0..6).map(|i| i as f64 * dt).collect();
        let snaps = trajectory(&s, &times, &trig(), Execution::Sequential).unwrap();
        let direct = evolve_exact(&s, times[5], &trig()).unwrap();
        prop_assert!(max_gap(&snaps[5], &direct) <= 1e-12 * s.max_abs().max(1.0));
        prop_assert_eq!(&snaps[0], &s);
    }
}
