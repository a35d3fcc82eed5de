use fgenus::descendent::{compute_calibration, critical_point, genus0_descendents, CurvePoint};
use fgenus::frame::FrameOptions;
use fgenus::frobenius::FrobeniusModel;
use fgenus::genus::{genus_potential, graph_sum, wick_oracle, GenusOptions};
use fgenus::matrix::Matrix;
use fgenus::rmatrix::RSeries;
use fgenus::scalar::{Cx, Field, Q};
use fgenus::selftest::synthetic_data;
use proptest::prelude::*;
use rug::Rational;

fn cx(x: f64) -> Cx {
    Cx::from_f64(x)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn graph_sum_equals_wick_expansion(n in 1usize..=3, seed in 0u64..1000) {
        let data = synthetic_data(n, 2, seed);
        prop_assert_eq!(graph_sum(&data, 2).unwrap().0, wick_oracle(&data, 2).unwrap());
    }

    #[test]
    fn relabeling_and_flips_leave_genus_two_unchanged(t0 in -1.0f64..1.0, t1 in 0.5f64..2.0, swap: bool, flip in 0usize..3) {
        let m = FrobeniusModel::two_primary(&Rational::from((1, 2)), &Rational::from(1)).unwrap();
        let p = [cx(t0), cx(t1)];
        let base = genus_potential(&m, &p, 2, &GenusOptions::default()).unwrap().value;
        let frame = FrameOptions {
            permutation: swap.then(|| vec![1, 0]),
            flips: if flip < 2 { vec![flip] } else { vec![] },
            ..Default::default()
        };
        let other = genus_potential(&m, &p, 2, &GenusOptions { mode: None, frame }).unwrap().value;
        prop_assert!((other - &base).magnitude() <= 1e-60 * base.magnitude());
    }

    #[test]
    fn critical_point_solves_fixed_point(ts in proptest::collection::vec(-0.1f64..0.1, 8)) {
        let m = FrobeniusModel::two_primary(&Rational::from((3, 2)), &Rational::from(1)).unwrap();
        let base = [Rational::from((1, 5)), Rational::from(1)];
        let c = compute_calibration(&m, &base, 3).unwrap();
        let tau = CurvePoint { t: ts.chunks(2).map(|w| vec![cx(w[0]), cx(w[1])]).collect() };
        let t = critical_point(&c, &tau).unwrap();
        let ginv = m.metric_inv.map(fgenus::scalar::to_cx);
        let mut rhs: Vec<Cx> = c.base_cx().iter().zip(&tau.t[0]).map(|(b, x)| b.clone() + x).collect();
        for k in 1..=3 {
            let v = ginv.mul_vec(&c.at(k, &t).unwrap().mul_vec(&tau.t[k]));
            for a in 0..2 {
                rhs[a] += v[a].clone();
            }
        }
        for a in 0..2 {
            prop_assert!((t[a].clone() - &rhs[a]).magnitude() < 1e-60);
        }
    }

    #[test]
    fn point_string_equation(ts in proptest::collection::vec(-0.1f64..0.1, 4)) {
        let c = compute_calibration(&FrobeniusModel::point(), &[Rational::new()], 7).unwrap();
        let tau = CurvePoint { t: ts.iter().map(|&x| vec![cx(x)]).collect() };
        let g0 = genus0_descendents(&c, &tau).unwrap();
        let mut rhs = tau.t[0][0].clone() * &tau.t[0][0] * Cx::from_ratio(1, 2);
        for k in 0..3 {
            rhs += tau.t[k + 1][0].clone() * &g0.grad[k][0];
        }
        prop_assert!((g0.grad[0][0].clone() - &rhs).magnitude() < 1e-60);
    }

    #[test]
    fn twist_round_trip(entries in proptest::collection::vec((-7i64..=7, 1i64..=4), 36), a in proptest::collection::vec((-5i64..=5, 1i64..=3), 4)) {
        let mut it = entries.into_iter().map(|(p, q)| Q::new(p, q));
        let r = RSeries { r: (0..5).map(|k| if k == 0 { Matrix::identity(2) } else { Matrix::from_rows((0..2).map(|_| (0..2).map(|_| it.next().unwrap()).collect()).collect()) }).collect() };
        let a: Vec<Vec<Q>> = a.chunks(2).map(|w| w.iter().map(|&(p, q)| Q::new(p, q)).collect()).collect();
        let neg: Vec<Vec<Q>> = a.iter().map(|row| row.iter().map(|x| -x.clone()).collect()).collect();
        prop_assert_eq!(r.twist(&a).twist(&neg), r);
    }
}
