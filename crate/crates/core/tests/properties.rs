use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rootlab::algebra::{pair_roots, unwrap_phases};
use rootlab::spectral::{
    denormalize_samples, make_zero_nodes, normalize_samples, reconstruct_lambda, sample_lambda, FnLambda, Normalization,
};
use rootlab::zeroroots::{canonical_representative, tag_zero_roots, ZeroRootSet, ZeroTag};
use rootlab::ModelParams;

fn point() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_representative_is_closed_under_reflection(z in point()) {
        let eta = 1.0;
        let a = canonical_representative(z, eta);
        let b = canonical_representative(-z - eta, eta);
        prop_assert!((a - b).norm() <= 1e-12);
        prop_assert!((a - z).norm() <= 1e-12 || (a + z + eta).norm() <= 1e-12);
    }

    #[test]
    fn lambda_from_roots_has_crossing_symmetry(reps in prop::collection::vec(point(), 3..9), u in point()) {
        let params = ModelParams::new(reps.len() - 1, 1.0, 0.7, 0.6, 0.0).unwrap();
        let set = ZeroRootSet::from_representatives(params, reps);
        prop_assert!(rel(set.lambda(u), set.lambda(-u - 1.0)) <= 1e-12);
    }

    #[test]
    fn pairing_recovers_planted_pairs(reps in prop::collection::vec(point(), 1..8), seed in any::<u64>()) {
        let eta = 1.0;
        let mut full: Vec<Complex64> = reps.iter().flat_map(|&z| [z, -z - eta]).collect();
        // deterministic shuffle
        let n = full.len();
        for i in (1..n).rev() {
            full.swap(i, (seed.rotate_left(i as u32) as usize) % (i + 1));
        }
        let pairs = pair_roots(&full, eta);
        prop_assume!(pairs.is_ok());
        for (a, b) in pairs.unwrap() {
            prop_assert!((a + b + eta).norm() <= 1e-12);
        }
    }

    #[test]
    fn normalization_round_trip(reps in prop::collection::vec(point(), 5..12), k in 1.0..1.1f64) {
        let n = 2 * ((reps.len() - 1) / 2);
        let reps = reps[..n + 1].to_vec();
        let params = ModelParams::new(n, 1.0, 0.7, 0.6, 0.0).unwrap();
        let set = ZeroRootSet::from_representatives(params.clone(), reps);
        let src = FnLambda::new(params, |u| set.lambda(u));
        let nodes = make_zero_nodes(n, 1.0, k).unwrap();
        let raw = sample_lambda(&src, &nodes, Normalization::Raw).unwrap();
        let back = denormalize_samples(&normalize_samples(&raw).unwrap()).unwrap();
        for (a, b) in back.values.iter().zip(&raw.values) {
            prop_assert!(rel(*a, *b) <= 1e-12);
        }
    }

    #[test]
    fn reconstruction_is_exact_on_planted_roots(
        reps in prop::collection::vec(point(), 5..12),
        re in -1.5..0.5f64,
        im in -0.5..0.5f64,
    ) {
        // inside the hull of the nodes
        let u = Complex64::new(re, im);
        let n = 2 * ((reps.len() - 1) / 2);
        let reps = reps[..n + 1].to_vec();
        let params = ModelParams::new(n, 1.0, 0.7, 0.6, 0.0).unwrap();
        let set = ZeroRootSet::from_representatives(params.clone(), reps);
        // relative error is meaningless on top of a root
        prop_assume!(set.full_roots.iter().all(|z| (z - u).norm() > 0.05));
        let src = FnLambda::new(params, |u| set.lambda(u));
        let nodes = make_zero_nodes(n, 1.0, 1.05).unwrap();
        let samples = sample_lambda(&src, &nodes, Normalization::DividedByU2n).unwrap();
        let poly = reconstruct_lambda(&samples).unwrap();
        // measured against the sampled scale; pointwise relative error blows
        // up wherever Lambda dips between roots
        let scale = nodes.iter().map(|&z| set.lambda(z).norm()).fold(0.0, f64::max);
        let err = (poly.eval(u).unwrap() - set.lambda(u)).norm() / scale;
        prop_assert!(err <= 1e-10, "error {err:e} relative to sample scale {scale:e}");
    }

    #[test]
    fn tags_survive_tiny_perturbations(
        heights in prop::collection::vec(0.1..3.0f64, 2..6),
        p in 0.05..0.45f64,
        z0 in 0.5..2.0f64,
        kicks in prop::collection::vec((0.0..1.0f64, 0.0..(2.0 * PI)), 8),
    ) {
        let eta = 1.0;
        let params = ModelParams::new(2 * heights.len(), eta, p, 0.6, 0.0).unwrap();
        let top = heights.iter().cloned().fold(0.0, f64::max);
        let mut reps: Vec<Complex64> = heights.iter().map(|&y| Complex64::new(eta / 2.0, y)).collect();
        reps.push(Complex64::new(p, 0.0));
        reps.push(Complex64::new(-eta / 2.0, top + z0));
        let tags = tag_zero_roots(&reps, &params);
        prop_assert_eq!(tags[reps.len() - 2], ZeroTag::PBoundaryString);
        prop_assert_eq!(tags[reps.len() - 1], ZeroTag::AdditionalZ0);
        prop_assert!(tags[..heights.len()].iter().all(|&t| t == ZeroTag::BulkString));

        // real roots stay real; others move by 1e-9 in a random direction
        let moved: Vec<Complex64> = reps
            .iter()
            .zip(kicks.iter().cycle())
            .map(|(&z, &(r, a))| {
                if z.im == 0.0 {
                    z + 1e-9 * r
                } else {
                    z + Complex64::from_polar(1e-9 * r, a)
                }
            })
            .collect();
        prop_assert_eq!(tag_zero_roots(&moved, &params), tags);
    }

    #[test]
    fn closed_phase_loops_wind_an_integer(raw in prop::collection::vec(-PI..PI, 2..12)) {
        let mut seq = raw.clone();
        seq.push(raw[0]);
        let w = unwrap_phases(&seq).net_change() / (2.0 * PI);
        prop_assert!((w - w.round()).abs() <= 1e-12);
    }
}
