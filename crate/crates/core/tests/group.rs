use heislat::heisenberg::{gauge_power, norm_alpha, phi_alpha, phi_power};
use heislat::scalar::ratio;
use heislat::{FloatPoint, GaugeParams, HPoint, RatPoint, Rational, Scalar};
use num_traits::Zero;
use proptest::prelude::*;

fn rational() -> impl Strategy<Value = Rational> {
    (-60i64..=60, 1i64..=12).prop_map(|(p, q)| ratio(p, q))
}

fn point(n: usize) -> impl Strategy<Value = RatPoint> {
    (prop::collection::vec(rational(), 2 * n), rational()).prop_map(|(h, v)| HPoint::new(h, v).unwrap())
}

fn gauge() -> impl Strategy<Value = GaugeParams> {
    (1usize..=3, prop::sample::select(vec![2u32, 4, 6, 8]))
        .prop_map(|(n, a)| GaugeParams::with_default_c(n, a).unwrap())
}

fn triple() -> impl Strategy<Value = (GaugeParams, RatPoint, RatPoint, RatPoint)> {
    gauge().prop_flat_map(|g| {
        let n = g.n();
        (Just(g), point(n), point(n), point(n))
    })
}

fn scale() -> impl Strategy<Value = Rational> {
    (1i64..=40, 1i64..=12).prop_map(|(p, q)| ratio(p, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn group_axioms((_, x, y, z) in triple()) {
        prop_assert_eq!(x.group_mul(&y).unwrap().group_mul(&z).unwrap(), x.group_mul(&y.group_mul(&z).unwrap()).unwrap());
        let e = RatPoint::origin(x.n());
        prop_assert_eq!(x.group_mul(&x.inverse()).unwrap(), e.clone());
        prop_assert_eq!(x.group_mul(&e).unwrap(), x.clone());
    }

    #[test]
    fn dilations_are_automorphisms((_, x, y, _) in triple(), s in scale(), t in scale()) {
        let d = |p: &RatPoint, s: &Rational| p.dilate(s).unwrap();
        prop_assert_eq!(d(&x.group_mul(&y).unwrap(), &s), d(&x, &s).group_mul(&d(&y, &s)).unwrap());
        prop_assert_eq!(d(&d(&x, &s), &t), d(&x, &(&s * &t)));
    }

    #[test]
    fn defining_function_invariances((g, x, y, h) in triple(), s in scale()) {
        let phi = phi_power(&x, &y, &g).unwrap();
        prop_assert_eq!(phi_power(&y, &x, &g).unwrap(), phi.clone());
        prop_assert_eq!(phi_power(&x.group_mul(&h).unwrap(), &y.group_mul(&h).unwrap(), &g).unwrap(), phi.clone());
        let scaled = phi_power(&x.dilate(&s).unwrap(), &y.dilate(&s).unwrap(), &g).unwrap();
        prop_assert_eq!(scaled, s.powi(g.alpha()) * phi.clone());
        prop_assert_eq!(phi.is_zero(), x == y);
    }

    #[test]
    fn gauge_is_homogeneous_in_f64((g, x, _, _) in triple(), s in scale()) {
        let xf: FloatPoint = x.to_f64();
        let sf = s.to_f64_lossy();
        let base = norm_alpha(&xf, &g);
        let dil = norm_alpha(&xf.dilate(&sf).unwrap(), &g);
        prop_assert!((dil - sf * base).abs() <= 1e-12 * sf * base.max(1e-300));
        prop_assert_eq!(gauge_power(&x.inverse(), &g), gauge_power(&x, &g));
    }

    #[test]
    fn scalar_types_agree((g, x, y, _) in triple()) {
        let exact = phi_power(&x, &y, &g).unwrap().to_f64_lossy().powf(1.0 / g.alpha() as f64);
        let f64v = phi_alpha(&x.to_f64(), &y.to_f64(), &g).unwrap();
        let f32v = phi_alpha(&x.map(|c| c.to_f64_lossy() as f32), &y.map(|c| c.to_f64_lossy() as f32), &g).unwrap();
        prop_assert!((exact - f64v).abs() <= 1e-12 * exact.max(1.0));
        prop_assert!((exact - f32v).abs() <= 1e-4 * exact.max(1.0));
    }
}

#[test]
fn mixed_dimensions_are_rejected() {
    let x = RatPoint::origin(1);
    let y = RatPoint::origin(2);
    assert!(x.group_mul(&y).is_err());
    assert!(phi_power(&x, &y, &GaugeParams::with_default_c(1, 4).unwrap()).is_err());
}
