use bohrlab::arith::{rat, Rational};
use bohrlab::bohr::{dilate, divide, squares, sqrt_set_enumerate, union, BohrHammingBall, Frequency, IntSet};
use bohrlab::certificates::{first_progression, verify_certificate, Bitset, Certificate, Provenance};
use bohrlab::harmonic::{
    annihilating_cylinder, cylinder_fourier, dft, inverse_dft, top_k_characters, translate_coefficient, Character,
    CoefficientTable, GridFunction,
};
use bohrlab::torus::{torus_norm, ApproxHammingBall, TorusPoint};
use bohrlab::weyl::{l3_average, ladder, weighted_average, WeylSystem, Weight};
use bohrlab::Strategy as Exec;
use num_bigint::BigInt;
use num_complex::Complex64;
use proptest::prelude::*;

fn point(nums: &[i64], q: u64) -> TorusPoint {
    TorusPoint::from_numerators(nums, q).unwrap()
}

fn int_set(horizon: u64) -> impl Strategy<Value = IntSet> {
    prop::collection::vec(1..=horizon as i64, 0..12).prop_map(move |v| IntSet::new(horizon, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_group_laws(a in prop::collection::vec(-50i64..50, 3), b in prop::collection::vec(-50i64..50, 3), q in 1u64..40) {
        let (x, y) = (point(&a, q), point(&b, q));
        prop_assert_eq!(x.add(&y).unwrap().sub(&y).unwrap(), x.clone());
        prop_assert!(x.add(&x.neg()).unwrap().is_zero());
        prop_assert!(torus_norm(&x) <= rat(1, 2));
        prop_assert_eq!(x.scale_i64(3), x.add(&x).unwrap().add(&x).unwrap());
    }

    #[test]
    fn bohr_membership_is_periodic(nums in prop::collection::vec(0i64..97, 2), k in 0usize..2, n in 0i64..500) {
        let q = 97;
        let freq = Frequency::from_numerators(&nums, q, false).unwrap();
        let ball = ApproxHammingBall::new(TorusPoint::zero(2), k, rat(1, 5)).unwrap();
        let bh = BohrHammingBall::new(freq, ball).unwrap();
        prop_assert_eq!(bh.contains_i64(n), bh.contains_i64(n + q as i64));
        let direct = bh.ball.contains(&bh.freq.point().scale(&BigInt::from(n))).unwrap();
        prop_assert_eq!(bh.contains_i64(n), direct);
    }

    #[test]
    fn sqrt_set_matches_definition(nums in prop::collection::vec(0i64..101, 2), n_max in 1u64..400) {
        let freq = Frequency::from_numerators(&nums, 101, false).unwrap();
        let ball = ApproxHammingBall::new(TorusPoint::zero(2), 1, rat(1, 8)).unwrap();
        let bh = BohrHammingBall::new(freq, ball).unwrap();
        let seq = sqrt_set_enumerate(&bh, n_max, Exec::Sequential).unwrap();
        let par = sqrt_set_enumerate(&bh, n_max, Exec::Parallel).unwrap();
        let expect: Vec<i64> = (1..=n_max as i64).filter(|&n| bh.contains_i64(n * n)).collect();
        prop_assert_eq!(&seq.set.elems, &expect);
        prop_assert_eq!(&par.set, &seq.set);
    }

    #[test]
    fn dilation_and_squares(s1 in int_set(60), s2 in int_set(60), m in 1i64..6) {
        prop_assert_eq!(divide(&dilate(&s1, m).unwrap(), m).unwrap(), s1.clone());
        let lhs = squares(&union(&s1, &dilate(&s2, m).unwrap()));
        let rhs = union(&squares(&s1), &dilate(&squares(&s2), m * m).unwrap());
        prop_assert_eq!(lhs.elems, rhs.elems);
    }

    #[test]
    fn int_set_json_round_trip(s in int_set(200)) {
        let text = serde_json::to_string(&s).unwrap();
        let back: IntSet = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn dft_round_trip_and_plancherel(vals in prop::collection::vec(-1.0f64..1.0, 25)) {
        let f = GridFunction::from_real(2, 5, &vals).unwrap();
        let h = dft(&f);
        prop_assert!(inverse_dft(&h).max_abs_diff(&f) < 1e-12);
        let lhs = f.norm_sq();
        let rhs: f64 = h.values().iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn progression_search_matches_naive(ones in prop::collection::vec(0u64..300, 0..150), s in 0u64..70, k in 1u32..4) {
        let b = Bitset::from_indices(300, &ones).unwrap();
        let naive = (0..300u64).find(|&n| (0..=k as u64).all(|j| n + j * s < 300 && b.get(n + j * s)));
        prop_assert_eq!(first_progression(&b, s, k), naive);
    }

    #[test]
    fn verification_matches_brute_force(ones in prop::collection::vec(0u64..128, 0..80), s in prop::collection::vec(1i64..40, 0..5)) {
        let b = Bitset::from_indices(128, &ones).unwrap();
        let c = Certificate::new(128, 1, Rational::from_integer(0.into()), &s, b.clone(), Provenance::Explicit).unwrap();
        let v = verify_certificate(&c, Exec::Parallel);
        let bad = s.iter().any(|&x| (0..128u64).any(|n| n + (x as u64) < 128 && b.get(n) && b.get(n + x as u64)));
        prop_assert_eq!(v.valid, !bad);
        prop_assert_eq!(v.valid, verify_certificate(&c, Exec::Sequential).valid);
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        let back = Certificate::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(back.b.to_bytes(), c.b.to_bytes());
        prop_assert_eq!(back.s, c.s);
    }

    #[test]
    fn weyl_orbit_matches_iteration(a in 0i64..50, x0 in 0i64..50, y0 in 0i64..50, n in 0u32..40) {
        let q = 50;
        let w = WeylSystem::new(Frequency::from_numerators(&[a], q, false).unwrap());
        let (mut x, mut y) = (point(&[x0], q), point(&[y0], q));
        let (ox, oy) = w.orbit(&x, &y, &BigInt::from(n)).unwrap();
        for _ in 0..n {
            (x, y) = w.step(&x, &y).unwrap();
        }
        prop_assert_eq!(ox, x);
        prop_assert_eq!(oy, y);
    }

    #[test]
    fn annihilation_is_structural(rows in prop::collection::vec(prop::collection::vec(-3i64..=3, 5), 1..=3), shift in prop::collection::vec(0i64..64, 5)) {
        let chars: Vec<Character> = rows.into_iter().filter(|r| r.iter().any(|&v| v != 0)).map(Character::new).collect();
        prop_assume!(!chars.is_empty());
        let u = ApproxHammingBall::new(TorusPoint::zero(5), 3, rat(1, 10)).unwrap();
        let v = annihilating_cylinder(&u, &chars).unwrap();
        prop_assert!(v.is_subordinate_to(&u));
        let s = point(&shift, 64);
        for chi in &chars {
            let c = cylinder_fourier(&v, true, chi).unwrap();
            prop_assert_eq!(c, Complex64::new(0.0, 0.0));
            prop_assert_eq!(translate_coefficient(c, chi, &s).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn top_k_residual_bound(vals in prop::collection::vec(-1.0f64..1.0, 1..30), k in 1usize..10) {
        let norm: f64 = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 0.0);
        let t = CoefficientTable::from_entries(
            1,
            vals.iter().enumerate().map(|(i, &v)| (Character::new(vec![i as i64]), Complex64::new(v / norm, 0.0))),
        )
        .unwrap();
        let top = top_k_characters(&t, k, 1.0).unwrap();
        prop_assert!(top.residual < 1.0 / ((k + 1) as f64).sqrt() + 1e-12);
    }

    #[test]
    fn unit_weight_is_the_l3_trace(a in 1i64..97, c in prop::collection::vec(-0.3f64..0.3, 3)) {
        let w = WeylSystem::new(Frequency::from_numerators(&[a], 97, true).unwrap());
        let f = CoefficientTable::from_entries(
            2,
            [
                (Character::new(vec![0, 0]), Complex64::new(c[0], 0.0)),
                (Character::new(vec![1, 1]), Complex64::new(c[1], 0.0)),
                (Character::new(vec![-1, -1]), Complex64::new(c[1], 0.0)),
                (Character::new(vec![0, 1]), Complex64::new(c[2], 0.0)),
                (Character::new(vec![0, -1]), Complex64::new(c[2], 0.0)),
            ],
        )
        .unwrap();
        let pts = ladder(500, 5);
        let a1 = weighted_average(&w, &f, &Weight::One, &pts, Exec::Parallel).unwrap();
        let a2 = l3_average(&w, &f, &pts, Exec::Sequential).unwrap();
        prop_assert_eq!(a1.checkpoints, a2.checkpoints);
    }
}
