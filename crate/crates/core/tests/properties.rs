mod common;

use proptest::prelude::*;

use common::{brute_force_reduced_words, two_generator_config, word_oracle};
use qlab_core::mobius::{word_count, GroupWord};
use qlab_core::moving_plane::{reflect, reflect_field};
use qlab_core::radial_blowup::{jensen_check, nested_radial_integral, sigma_sequence};
use qlab_core::rescale::RescaleJob;
use qlab_core::{
    Bubble, ConformalExponents, GridField, MobiusMap, RadialField, ScalarField, SchottkyGroup,
    StereoChart,
};

fn point(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, n)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponent_relations(n in 5usize..40) {
        let e = ConformalExponents::new(n).unwrap();
        let nf = n as f64;
        prop_assert!((e.q() - 1.0 - 8.0 / (nf - 4.0)).abs() < 1e-12);
        prop_assert!((e.p() - (e.q() + 1.0)).abs() < 1e-12);
        prop_assert!((e.weight() * e.a() - 2.0).abs() < 1e-12);
        prop_assert!((e.bubble_constant() - nf * (nf - 4.0) * (nf * nf - 4.0) / 16.0).abs() < 1e-9);
    }

    #[test]
    fn stereographic_round_trip(x in point(6, 50.0)) {
        let chart = StereoChart::north_pole(6);
        let xi = chart.project(&x);
        prop_assert!((norm(&xi) - 1.0).abs() < 1e-12);
        let back = chart.unproject(&xi).unwrap();
        prop_assert!(dist(&back, &x) < 1e-9 * (1.0 + norm(&x).powi(2)));
    }

    #[test]
    fn mobius_inverse_and_chain_rule(
        c in point(5, 3.0),
        radius in 0.2f64..3.0,
        scale in 0.1f64..5.0,
        shift in point(5, 2.0),
        x in point(5, 4.0),
    ) {
        prop_assume!(dist(&x, &c) > 0.1);
        let inv = MobiusMap::inversion(c.clone(), radius).unwrap();
        let sim = MobiusMap::similarity(None, scale, shift).unwrap();
        let g = sim.compose(&inv);
        let (y, log_d) = g.apply_with_log_derivative(&x).unwrap();
        let back = g.inverse().apply(&y).unwrap();
        prop_assert!(dist(&back, &x) < 1e-9 * (1.0 + norm(&x)));
        let (ix, log_i) = inv.apply_with_log_derivative(&x).unwrap();
        let (_, log_s) = sim.apply_with_log_derivative(&ix).unwrap();
        prop_assert!((log_i + log_s - log_d).abs() < 1e-12);
        let expected = scale.ln() + 2.0 * radius.ln() - 2.0 * dist(&x, &c).ln();
        prop_assert!((log_d - expected).abs() < 1e-12);
    }

    #[test]
    fn schottky_words_match_letter_oracle(
        letters in prop::collection::vec(0u8..4, 1..7),
        x in point(4, 1.2),
    ) {
        prop_assume!(letters.windows(2).all(|w| w[0] != w[1] ^ 1));
        let cfg = two_generator_config(4, 0.5);
        let g = SchottkyGroup::new(&cfg).unwrap();
        prop_assume!(g.in_fundamental_domain(&x));
        let w = GroupWord::from_letters(letters.clone()).unwrap();
        let (y, log_d) = g.word_map(&w).apply_with_log_derivative(&x).unwrap();
        let (yo, log_o) = word_oracle(&cfg, &letters, &x);
        prop_assert!(dist(&y, &yo) < 1e-12);
        prop_assert!((log_d - log_o).abs() < 1e-10);
        let hit = g.locate(&y, letters.len()).unwrap();
        prop_assert_eq!(hit.word, w);
    }

    #[test]
    fn reflection_is_an_involution(x in point(5, 10.0), lambda in -5.0f64..5.0, axis in 0usize..5) {
        let r = reflect(&reflect(&x, lambda, axis), lambda, axis);
        prop_assert!(dist(&r, &x) < 1e-12);
        let b = Bubble::new(5, 1.3, vec![0.0, 0.0, 0.0, 0.0, lambda]).unwrap();
        let rb = reflect_field(&b, lambda, 4);
        prop_assert!((rb.value(&x) - b.value(&x)).abs() < 1e-12 * b.value(&x));
    }

    #[test]
    fn rescaling_maps_bubbles_to_bubbles(lambda in 0.1f64..200.0, center in point(6, 1.0), x in point(6, 5.0)) {
        let exp = ConformalExponents::new(6).unwrap();
        let b = Bubble::new(6, lambda, center.clone()).unwrap();
        let job = RescaleJob::new(&b, center, &exp).unwrap();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let unit_peak = 1.0 / (1.0 + r2 / 4.0);
        prop_assert!((job.value(&x).unwrap() - unit_peak).abs() < 1e-12);
    }

    #[test]
    fn jensen_holds_for_nonnegative_samples(
        samples in prop::collection::vec(0.0f64..100.0, 1..60),
        q in 1.0001f64..12.0,
    ) {
        prop_assert!(jensen_check(&samples, q).unwrap().holds);
    }

    #[test]
    fn nested_integral_of_one(n in 3usize..10, r_max in 0.5f64..20.0) {
        let radii = RadialField::uniform_radii(r_max, 200);
        let j = nested_radial_integral(&radii, &vec![1.0; radii.len()], n);
        for (r, v) in radii.iter().zip(&j) {
            let exact = r * r / (2.0 * n as f64);
            prop_assert!((v - exact).abs() <= 1e-12 * exact.max(1e-300));
        }
    }

    #[test]
    fn sigma_recurrence_holds(n in 5usize..30) {
        let s = sigma_sequence(n, 12).unwrap();
        let e = ConformalExponents::new(n).unwrap();
        let q = num_rational::BigRational::new((*e.nonlinearity_ratio().numer()).into(), (*e.nonlinearity_ratio().denom()).into());
        let four = num_rational::BigRational::from_integer(4.into());
        for w in s.windows(2) {
            prop_assert_eq!(&w[1], &(&q * &w[0] + &four));
        }
    }

    #[test]
    fn grid_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 25)) {
        let g = GridField::new(2, -1.0, 1.0, 5, values).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = GridField::read_csv(&g.header(), buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), g.values());
    }
}

#[test]
fn word_counts_match_brute_force() {
    for rank in 1..=3 {
        for depth in 0..=4 {
            assert_eq!(word_count(rank, depth), brute_force_reduced_words(rank, depth) as u128);
        }
    }
}
