mod common;

use cepr_core::absorb::{apply_absorption, AbsorptionMode};
use cepr_core::echo::{run_echo_once, EchoOptions};
use cepr_core::fit::fit_series;
use cepr_core::husimi::husimi;
use cepr_core::qmap::{backward_step, forward_step};
use cepr_core::schmidt::{reduced_density_eigenvalues, schmidt_decompose, symmetry_split};
use cepr_core::snapshot::{read_one_particle, read_two_particle, write_one_particle, write_two_particle};
use cepr_core::transform::{to_angle, to_momentum};
use cepr_core::{
    AbsorptionSpec, EchoParams, FitModel, HusimiGridSpec, InitialStateSpec, Representation, SimParams,
};
use common::*;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = SimParams> {
    (
        prop::sample::select(vec![8usize, 16, 32]),
        0.1f64..8.0,
        0.05f64..2.0,
        -3.0f64..3.0,
        0usize..4,
    )
        .prop_map(|(n, chaos, hbar, u, range)| SimParams::new(n, chaos, hbar, u, range).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_preserves_norm(p in params(), seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), p.n, p.n);
        let out = forward_step(&s, &p).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_undoes_forward(p in params(), seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), p.n, p.n);
        let back = backward_step(&forward_step(&s, &p).unwrap(), &p).unwrap();
        prop_assert!(back.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn transforms_round_trip(n in prop::sample::select(vec![8usize, 16, 64]), seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), n, n);
        let a = to_angle(&s).unwrap();
        prop_assert_eq!(a.representation(), Representation::Angle);
        prop_assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!(to_momentum(&a).unwrap().max_abs_diff(&s) < 1e-13);
        let one = random_one(&mut rng(seed ^ 1), n);
        prop_assert!(to_momentum(&to_angle(&one).unwrap()).unwrap().max_abs_diff(&one) < 1e-13);
    }

    #[test]
    fn schmidt_invariants(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), rows, cols);
        let d = schmidt_decompose(&s).unwrap();
        let total: f64 = d.alphas.iter().map(|a| a * a).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(d.alphas.windows(2).all(|w| w[0] >= w[1]));
        let e = d.entropy();
        prop_assert!(e >= -1e-12 && e <= (rows.min(cols) as f64).log2() + 1e-12);
        prop_assert!(d.reconstruct().unwrap().max_abs_diff(&s) < 1e-10);
        let svd = singular_values(&s);
        for (a, b) in d.alphas.iter().zip(&svd) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reduced_densities_share_spectrum(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), rows, cols);
        let (a, b) = reduced_density_eigenvalues(&s).unwrap();
        for i in 0..rows.max(cols) {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn symmetry_split_adds_up(n in 2usize..12, seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), n, n);
        let (sym, asym) = symmetry_split(&s).unwrap();
        prop_assert!((sym * sym + asym * asym - 1.0).abs() < 1e-12);
        let swapped = symmetry_split(&s.transposed()).unwrap();
        prop_assert!((swapped.0 - sym).abs() < 1e-12 && (swapped.1 - asym).abs() < 1e-12);
    }

    #[test]
    fn absorption_is_a_projection(
        n in prop::sample::select(vec![16usize, 32, 64]),
        frac in 0.1f64..0.5,
        both in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let half = ((n as f64 * frac) as usize).max(1);
        let mode = if both { AbsorptionMode::Both } else { AbsorptionMode::SecondOnly };
        let spec = AbsorptionSpec::new(mode, half);
        let s = random_two(&mut rng(seed), n, n);
        let (once, lost) = apply_absorption(&s, &spec).unwrap();
        prop_assert!((0.0..=1.0).contains(&lost));
        prop_assert!((once.norm_sqr() + lost - 1.0).abs() < 1e-12);
        let (twice, again) = apply_absorption(&once, &spec).unwrap();
        prop_assert_eq!(again, 0.0);
        prop_assert_eq!(twice.amplitudes(), once.amplitudes());
    }

    #[test]
    fn snapshot_round_trip(n in 1usize..17, seed in any::<u64>()) {
        let s = random_two(&mut rng(seed), n, n);
        let mut buf = Vec::new();
        write_two_particle(&mut buf, &s).unwrap();
        let back = read_two_particle(buf.as_slice()).unwrap();
        prop_assert_eq!(back.amplitudes(), s.amplitudes());
        prop_assert_eq!(back.n(), n);
        let one = random_one(&mut rng(seed ^ 7), n);
        let mut buf = Vec::new();
        write_one_particle(&mut buf, &one).unwrap();
        prop_assert_eq!(read_one_particle(buf.as_slice()).unwrap().amps, one.amps);
    }

    #[test]
    fn linear_fit_recovers_exact_line(a in -5.0f64..5.0, b in -5.0f64..5.0, len in 3usize..40) {
        let x: Vec<f64> = (0..len).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|t| a * t + b).collect();
        let fit = fit_series(&x, &y, FitModel::Linear, None).unwrap();
        prop_assert!((fit.value(0) - a).abs() < 1e-9);
        prop_assert!((fit.value(1) - b).abs() < 1e-9);
        prop_assert!(fit.residual_norm < 1e-8);
    }

    #[test]
    fn husimi_is_bounded(seed in any::<u64>()) {
        let p = SimParams::recurrence(64, 7.0, 0.0, 0).unwrap();
        let psi = random_one(&mut rng(seed), 64);
        let spec = HusimiGridSpec { n_theta: 32, n_p: 17, p_range: (-3.0, 3.0), origin: Default::default() };
        let g = husimi(&psi, &spec, &p).unwrap();
        let bound = 1.0 / (std::f64::consts::TAU * p.hbar) + 1e-12;
        prop_assert!(g.values.iter().all(|&v| (0.0..=bound).contains(&v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fidelity_symmetric_in_leg_exchange(
        u in -2.0f64..2.0,
        du in -1.0f64..1.0,
        t_r in 1u64..5,
        p1 in -4i64..4,
        p2 in -4i64..4,
    ) {
        let base = SimParams::new(16, 5.0, 0.625, u, 0).unwrap();
        let initial = InitialStateSpec::ProductMomenta { p1, p2 };
        let a = run_echo_once(&EchoParams::new(base, t_r).with_delta_u(du), &initial, &EchoOptions::default()).unwrap();
        let swapped = EchoParams::new(base.with_interaction(u + du), t_r).with_delta_u(-du);
        let b = run_echo_once(&swapped, &initial, &EchoOptions::default()).unwrap();
        prop_assert!((a.m - b.m).abs() < 1e-12, "{} vs {}", a.m, b.m);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a.m));
    }

    #[test]
    fn exact_echo_returns_to_start(u in -2.0f64..2.0, t_r in 1u64..6) {
        let base = SimParams::new(16, 5.0, 0.625, u, 1).unwrap();
        let initial = InitialStateSpec::ProductMomenta { p1: 0, p2: 1 };
        let run = run_echo_once(&EchoParams::new(base, t_r), &initial, &EchoOptions::default()).unwrap();
        prop_assert!((run.m - 1.0).abs() < 1e-12);
        prop_assert!(run.g < 1e-10);
    }
}
