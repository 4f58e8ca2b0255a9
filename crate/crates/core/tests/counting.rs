use heislat::scalar::{int, ratio};
use heislat::shell::{
    averaged_shell_count, bound_value, fast_shell_count, fit_scaling_exponent, fixed_center_error_term,
    naive_shell_count, theorem_bound, unit_ball_volume, LatticeSpec, Sampling, ShellQuery,
};
use heislat::{GaugeParams, HPoint, IntPoint, Rational};
use num_bigint::BigUint;

fn query(n: usize, alpha: u32, q: i64, delta: Rational) -> ShellQuery {
    ShellQuery::new(GaugeParams::with_default_c(n, alpha).unwrap(), int(q), delta).unwrap()
}

fn both(u: &IntPoint, q: &ShellQuery) -> u64 {
    let fast = fast_shell_count(u, q).unwrap();
    assert_eq!(fast, naive_shell_count(u, q).unwrap());
    fast
}

// values below come from an independent enumeration in exact integer arithmetic

#[test]
fn origin_alpha4() {
    let q = query(1, 4, 5, ratio(1, 2));
    assert_eq!(both(&IntPoint::origin_int(1), &q), 656);
}

#[test]
fn translated_alpha6() {
    let q = query(1, 6, 4, int(1));
    assert_eq!(both(&HPoint::new(vec![1, 1], 1).unwrap(), &q), 934);
}

#[test]
fn origin_alpha2_n2() {
    let q = query(2, 2, 3, ratio(1, 4));
    assert_eq!(both(&IntPoint::origin_int(2), &q), 272);
}

#[test]
fn exhaustive_average() {
    let q = query(1, 4, 6, ratio(1, 2));
    let c = averaged_shell_count(&q, Sampling::Exhaustive).unwrap();
    assert_eq!(c.raw_count, BigUint::from(7_052_752u64));
    assert_eq!(c.normalized, 440797.0 / 81.0);
    assert_eq!(c.centers_used, 13 * 13 * 73);
    assert_eq!(c.stderr, 0.0);
}

#[test]
fn sampled_average_is_reproducible() {
    let q = query(1, 4, 10, ratio(1, 10));
    let s = Sampling::Random { samples: 300, seed: 5 };
    let a = averaged_shell_count(&q, s).unwrap();
    assert_eq!(a, averaged_shell_count(&q, s).unwrap());
    assert_eq!(a.centers_used, 300);
    let exact = averaged_shell_count(&q, Sampling::Exhaustive).unwrap();
    assert!((a.normalized - exact.normalized).abs() < 4.0 * a.stderr, "{a:?} vs {exact:?}");
}

#[test]
fn oversampling_falls_back_to_exhaustive() {
    let q = query(1, 4, 2, ratio(1, 2));
    let r = averaged_shell_count(&q, Sampling::Random { samples: 10_000, seed: 1 }).unwrap();
    assert_eq!(r, averaged_shell_count(&q, Sampling::Exhaustive).unwrap());
    assert!(averaged_shell_count(&q, Sampling::Random { samples: 5, seed: 1 }).is_err());
}

#[test]
fn unsigned_lattice_and_wider_vertical_range() {
    let g = GaugeParams::with_default_c(1, 4).unwrap();
    for (c, signed) in [(int(1), false), (int(2), true), (ratio(1, 2), true)] {
        let lat = LatticeSpec::new(1, c, int(4), signed).unwrap();
        let q = ShellQuery::with_lattice(g.clone(), lat, int(4), ratio(1, 3)).unwrap();
        for u in q.lattice.points().step_by(7) {
            both(&u, &q);
        }
    }
}

#[test]
fn counting_lemma_with_exact_powers() {
    // D = 3, a = 3/4: q = 16 gives Q = 8 and δ = 16^{−1/4} = 1/2
    let g = GaugeParams::with_default_c(1, 4).unwrap();
    let q = ShellQuery::counting_lemma(g, int(16), int(1), int(1), true).unwrap();
    assert_eq!(q.radius, int(8));
    assert_eq!(q.delta, ratio(1, 2));
    assert!(q.lemma.as_ref().unwrap().exact);
    assert_eq!(theorem_bound(&q).unwrap(), 16f64.powi(2));
}

#[test]
fn counting_lemma_with_irrational_powers() {
    let g = GaugeParams::with_default_c(1, 4).unwrap();
    let q = ShellQuery::counting_lemma(g, int(3), ratio(3, 2), int(1), true).unwrap();
    assert!(!q.lemma.as_ref().unwrap().exact);
    let r: f64 = heislat::Scalar::to_f64_lossy(&q.radius);
    assert!((r - 3f64.powf(0.75)).abs() < 1e-9);
}

#[test]
fn bound_branches() {
    let g4 = GaugeParams::with_default_c(1, 4).unwrap();
    assert_eq!(bound_value(&g4, 10.0, 0.01), 100.0);
    assert_eq!(bound_value(&g4, 10.0, 0.5), 500.0);
    let g6 = GaugeParams::with_default_c(1, 6).unwrap();
    assert!((bound_value(&g6, 8.0, 1.0 / 8.0) - 256.0).abs() < 1e-9);
}

#[test]
fn exact_power_law_fit() {
    let series: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&q: &f64| (q, 3.0 * q * q)).collect();
    let f = fit_scaling_exponent(&series).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-12);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(f.residual < 1e-12);
}

#[test]
fn koranyi_volume_and_error_term() {
    let g = GaugeParams::with_default_c(1, 4).unwrap();
    let v = unit_ball_volume(&g).unwrap();
    assert!((v - std::f64::consts::PI.powi(2) / 8.0).abs() < 1e-9);
    let e = fixed_center_error_term(&g, &int(6)).unwrap();
    assert!((e.volume - v * 6f64.powi(4)).abs() < 1e-6);
    // the relative error shrinks as the ball grows
    let big = fixed_center_error_term(&g, &int(12)).unwrap();
    assert!(big.error / big.volume < e.error / e.volume);
}
