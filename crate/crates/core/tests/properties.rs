use proptest::prelude::*;
use symmflow::ClassCodebook;
use symmflow::eval::{mmd_rbf, mmd_rbf_biased, posterior_from_errors};
use symmflow::flow::{loss_with_draws, perturb, target_velocity, FlowLayout, NoiseDraw, Objective, TimeEncoding};
use symmflow::nn::Activation;
use symmflow::{CoupledSample, MlpParams, SeededRng};

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn point_set() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(coords(2), 2..12)
}

proptest! {
    #[test]
    fn path_derivative_matches_target(
        x in coords(2), y in coords(1), xi_x in coords(2), xi_y in coords(1), t in 0.01f64..0.99,
    ) {
        let s = CoupledSample { x, y };
        let h = 1e-3;
        let a = perturb(&s, t - h, &xi_x, &xi_y).unwrap();
        let b = perturb(&s, t + h, &xi_x, &xi_y).unwrap();
        let v = target_velocity(&s, &xi_x, &xi_y).unwrap();
        for k in 0..2 {
            prop_assert!(((b.x[k] - a.x[k]) / (2.0 * h) - v.x[k]).abs() < 1e-9);
        }
        prop_assert!(((b.y[0] - a.y[0]) / (2.0 * h) - v.y[0]).abs() < 1e-9);
    }

    #[test]
    fn paths_hit_their_endpoints(x in coords(2), y in coords(1), xi_x in coords(2), xi_y in coords(1)) {
        let s = CoupledSample { x: x.clone(), y: y.clone() };
        let start = perturb(&s, 0.0, &xi_x, &xi_y).unwrap();
        let end = perturb(&s, 1.0, &xi_x, &xi_y).unwrap();
        prop_assert_eq!(start.x, xi_x);
        prop_assert_eq!(start.y, y);
        prop_assert_eq!(end.x, x);
        prop_assert_eq!(end.y, xi_y);
    }

    #[test]
    fn the_two_flows_mirror_each_other(x in coords(2), xi in coords(2), t in 0.0f64..1.0) {
        // The label path at 1 - t is the data path at t with the roles of noise and data swapped.
        let data = CoupledSample { x: x.clone(), y: x.clone() };
        let fwd = perturb(&data, t, &xi, &xi).unwrap();
        let back = perturb(&data, 1.0 - t, &xi, &xi).unwrap();
        for k in 0..2 {
            prop_assert!((fwd.x[k] - back.y[k]).abs() < 1e-12);
        }
        let v = target_velocity(&data, &xi, &xi).unwrap();
        for k in 0..2 {
            prop_assert_eq!(v.x[k], -v.y[k]);
        }
    }

    #[test]
    fn dequantized_codes_decode_to_their_class(classes in 2usize..=10, dim_y in 1usize..4, seed in any::<u64>()) {
        let cb = ClassCodebook::with_default_beta(classes, dim_y).unwrap();
        let mut rng = SeededRng::new(seed);
        for c in 0..classes {
            let y = cb.dequantize(c, &mut rng).unwrap();
            prop_assert_eq!(cb.decode(&y), c);
        }
    }

    #[test]
    fn decoding_follows_the_nearest_center(classes in 2usize..=10, v in -2.0f64..2.0) {
        let cb = ClassCodebook::with_default_beta(classes, 1).unwrap();
        let got = cb.decode(&[v]);
        let best = cb.centers().iter().map(|c| (c[0] - v).abs()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!((cb.centers()[got][0] - v).abs(), best);
    }

    #[test]
    fn mmd_is_symmetric(a in point_set(), b in point_set()) {
        let ab = mmd_rbf(&a, &b, Some(1.0)).unwrap();
        let ba = mmd_rbf(&b, &a, Some(1.0)).unwrap();
        prop_assert_eq!(ab.mmd2.to_bits(), ba.mmd2.to_bits());
        let ab = mmd_rbf(&a, &b, None).unwrap();
        let ba = mmd_rbf(&b, &a, None).unwrap();
        prop_assert_eq!(ab.mmd2.to_bits(), ba.mmd2.to_bits());
    }

    #[test]
    fn identical_sets_give_non_positive_unbiased_mmd(a in point_set()) {
        let est = mmd_rbf(&a, &a, Some(1.0)).unwrap();
        prop_assert!(est.mmd2 <= 1e-12);
        let biased = mmd_rbf_biased(&a, &a, Some(1.0)).unwrap();
        prop_assert!(biased.mmd2.abs() < 1e-12);
    }

    #[test]
    fn posterior_is_a_distribution(errors in prop::collection::vec(0.0f64..1e3, 1..12)) {
        let p = posterior_from_errors(&errors).unwrap();
        prop_assert!(p.probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(errors[p.argmax()], min);
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let layout = FlowLayout::new(2, 1, TimeEncoding::Raw);
        let params = MlpParams::init(&layout.widths(&[8]), Activation::Tanh, &mut rng).unwrap();
        let batch: Vec<CoupledSample> = (0..n)
            .map(|_| CoupledSample { x: rng.normal_vec(2), y: rng.normal_vec(1) })
            .collect();
        let draws: Vec<NoiseDraw<f64>> = (0..n).map(|_| NoiseDraw::sample(2, 1, &mut rng)).collect();
        for obj in [Objective::Symmetric, Objective::ConditionalBaseline] {
            prop_assert!(loss_with_draws(&layout, &params, obj, &batch, &draws).unwrap() >= 0.0);
        }
    }
}
