//! Property tests of the invariants the discretization is built around.

mod common;

use common::{desk, ordered_pair, VARIANTS};
use proptest::prelude::*;
use stefan_core::config::ProfileChoice;
use stefan_core::correctors::{
    principal_eigenvalue, solve_phi, solve_psi, EigenDomain, DEFAULT_TOL,
};
use stefan_core::kernel::{convolve_1d, convolve_radial, radial_reduce, second_moment};
use stefan_core::oracle::check_comparison;
use stefan_core::state::mass;
use stefan_core::{build_kernel, parse_config, serialize_config, KernelKind, Simulation, Variant};

fn kernel_kind() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Triangle),
        Just(KernelKind::Uniform),
        prop::collection::vec(0.05..1.0_f64, 3..8).prop_map(|mut t| {
            // decreasing samples ending at zero
            t.sort_by(|a, b| b.total_cmp(a));
            t.push(0.0);
            KernelKind::Table(t)
        }),
    ]
}

fn compact_field(len: usize, pad: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..2.0_f64, len).prop_map(move |core| {
        let mut v = vec![0.0; pad];
        v.extend(core);
        v.extend(std::iter::repeat_n(0.0, pad));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_have_unit_mass(kind in kernel_kind(), d in 0.2..3.0_f64, m in 4usize..40) {
        let k = build_kernel(kind, d, d / m as f64).unwrap();
        let total: f64 = k.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-14, "sum = {total}");
        prop_assert!(k.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn convolution_preserves_total(kind in kernel_kind(), m in 4usize..12, core in 1usize..60, seed in any::<u64>()) {
        let d = 1.0;
        let h = d / m as f64;
        let k = build_kernel(kind, d, h).unwrap();
        let values = {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut v = vec![0.0; m + 1];
            v.extend((0..core).map(|_| rng.gen_range(0.0..2.0)));
            v.extend(vec![0.0; m + 1]);
            v
        };
        let out = convolve_1d(&k, &values, h).unwrap();
        let before: f64 = values.iter().sum();
        let after: f64 = out.iter().sum();
        prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0));
    }

    #[test]
    fn radial_convolution_preserves_volume_integral(dim in 2usize..4, values in compact_field(30, 0)) {
        let k = build_kernel(KernelKind::Triangle, 1.0, 0.1).unwrap();
        let n = values.len() + 12;
        let matrix = radial_reduce(&k, dim, n).unwrap();
        let mut v = values.clone();
        v.resize(n, 0.0);
        let out = convolve_radial(&matrix, &v).unwrap();
        let vol = matrix.volume_weights();
        let before: f64 = v.iter().zip(vol).map(|(a, w)| a * w).sum();
        let after: f64 = out.iter().zip(vol).map(|(a, w)| a * w).sum();
        prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0), "{before} vs {after}");
    }

    #[test]
    fn convolution_commutes_with_reflection(kind in kernel_kind(), values in compact_field(40, 3)) {
        let h = 0.1;
        let k = build_kernel(kind, 1.0, h).unwrap();
        let mut mirrored = values.clone();
        mirrored.reverse();
        let mut a = convolve_1d(&k, &values, h).unwrap();
        a.reverse();
        let b = convolve_1d(&k, &mirrored, h).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn second_moment_scales_with_support(kind in kernel_kind(), m in 4usize..30, scale in 0.25..4.0_f64) {
        let d = 1.0;
        let h = d / m as f64;
        let base = second_moment(&build_kernel(kind.clone(), d, h).unwrap());
        let scaled = second_moment(&build_kernel(kind, scale * d, scale * h).unwrap());
        prop_assert!((scaled - scale * scale * base).abs() <= 1e-10 * scale * scale * base);
    }

    #[test]
    fn psi_is_reflected_phi(kind in kernel_kind(), m in 4usize..12) {
        let k = build_kernel(kind, 1.0, 1.0 / m as f64).unwrap();
        let phi = solve_phi(&k, 30.0, DEFAULT_TOL).unwrap();
        let psi = solve_psi(&k, 30.0, DEFAULT_TOL).unwrap();
        for j in 0..phi.len() {
            let y = psi.node(j);
            prop_assert!((psi.eval(y) - phi.eval(-y)).abs() <= DEFAULT_TOL);
        }
    }

    #[test]
    fn far_field_slope_is_unit(kind in kernel_kind(), m in 4usize..12) {
        let k = build_kernel(kind, 1.0, 1.0 / m as f64).unwrap();
        let phi = solve_phi(&k, 30.0, DEFAULT_TOL).unwrap();
        let n = phi.len();
        let tail = (5.0 * k.support() / k.step()).round() as usize;
        for j in n - tail..n - 1 {
            let slope = (phi.values[j + 1] - phi.values[j]) / k.step();
            prop_assert!((slope - 1.0).abs() <= 10.0 * DEFAULT_TOL, "slope {slope}");
        }
    }

    #[test]
    fn eigenfunction_is_positive_and_lambda_grows_with_reach(half in 1.0..3.0_f64, d in 0.3..0.8_f64) {
        let h = 0.025;
        let n = (2.0 * (half + 2.0) / h).round() as usize + 1;
        let lambda = |d: f64| {
            let k = build_kernel(KernelKind::Triangle, d, h).unwrap();
            principal_eigenvalue(EigenDomain::Interval { kernel: &k, lo: -half, hi: half, x0: -(half + 2.0), n }).unwrap()
        };
        let near = lambda(d);
        let far = lambda(d + 0.2);
        let inside: Vec<f64> = (0..n)
            .map(|i| -(half + 2.0) + i as f64 * h)
            .zip(&near.eigenfunction)
            .filter(|(x, _)| x.abs() < half - h)
            .map(|(_, v)| *v)
            .collect();
        prop_assert!(inside.iter().all(|&v| v > 0.0));
        prop_assert!(near.eigenfunction.iter().all(|&v| v >= 0.0));
        prop_assert!(far.lambda > near.lambda, "{} vs {}", near.lambda, far.lambda);
    }
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(VARIANTS.to_vec())
}

/// Node indices of the active set must form one run.
fn runs_of_active(active: &[bool]) -> usize {
    active.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(active.first() == Some(&true))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stepping_keeps_the_structural_invariants(v in variant(), seed in any::<u64>()) {
        let (_, config) = ordered_pair(v, seed);
        let mut sim = Simulation::new(&config).unwrap();
        let a = config.halfline_a().unwrap_or(0.0);
        let d = config.kernel.d;
        let start = mass(&sim.field) + sim.boundary.measure();
        // time at which each cell first met the habitat
        let mut entered: Vec<f64> = (0..sim.field.len())
            .map(|i| if sim.field.split(i, &sim.boundary).inside > 0.0 { 0.0 } else { f64::INFINITY })
            .collect();
        for _ in 0..40 {
            let before = sim.boundary;
            let report = sim.step().unwrap();
            let f = &sim.field;
            entered.resize(f.len(), f64::INFINITY);
            for (i, first) in entered.iter_mut().enumerate() {
                if first.is_infinite() && f.split(i, &sim.boundary).inside > 0.0 {
                    *first = sim.t;
                }
                prop_assert!(f.values[i] >= 0.0);
                if !f.active[i] {
                    prop_assert_eq!(f.values[i], 0.0);
                }
                prop_assert_eq!(f.activation_time[i], *first);
            }
            prop_assert!(runs_of_active(&f.active) <= 1);
            prop_assert!(sim.boundary.contains(&before));
            if v.conserves() {
                let now = mass(f) + sim.boundary.measure();
                prop_assert!((now - start).abs() <= 1e-10, "defect {}", now - start);
            } else {
                let growth = report.mass_after - report.mass_before;
                prop_assert!(growth <= a * d * sim.params.dt + 1e-12);
            }
        }
    }

    #[test]
    fn config_round_trips(v in variant(), seed in any::<u64>()) {
        let (low, high) = ordered_pair(v, seed);
        for c in [low, high, desk(v)] {
            let text = serialize_config(&c).unwrap();
            prop_assert_eq!(parse_config(&text).unwrap(), c);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn comparison_line1fb(seed in any::<u64>()) { assert_ordered(Variant::Line1fb, seed)?; }

    #[test]
    fn comparison_linecs(seed in any::<u64>()) { assert_ordered(Variant::LineCs, seed)?; }

    #[test]
    fn comparison_halfline(seed in any::<u64>()) { assert_ordered(Variant::HalfLine, seed)?; }

    #[test]
    fn comparison_radial(seed in any::<u64>()) { assert_ordered(Variant::Radial, seed)?; }
}

fn assert_ordered(v: Variant, seed: u64) -> Result<(), TestCaseError> {
    let (low, high) = ordered_pair(v, seed);
    prop_assert_eq!(low.initial.profile, ProfileChoice::Table);
    let report = check_comparison(&low, &high, low.time.t_end).unwrap();
    prop_assert!(report.ordered(), "{:?}", report.first_violation);
    Ok(())
}
