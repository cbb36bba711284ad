use multisphere::specfun::{self, DegreeOrder, HarmonicTable};
use multisphere::validation;

/// Coefficients of `(x² - 1)^l`, lowest power first.
fn rodrigues_poly(l: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..l {
        let mut next = vec![0.0; c.len() + 2];
        for (i, v) in c.iter().enumerate() {
            next[i] -= v;
            next[i + 2] += v;
        }
        c = next;
    }
    c
}

/// `P_l^m(x) = (1-x²)^{m/2} d^{l+m}/dx^{l+m} (x²-1)^l / (2^l l!)`, no Condon–Shortley factor.
fn legendre_oracle(l: usize, m: usize, x: f64) -> f64 {
    let mut c = rodrigues_poly(l);
    for _ in 0..l + m {
        c = c.iter().enumerate().skip(1).map(|(i, v)| v * i as f64).collect();
    }
    let d: f64 = c.iter().enumerate().map(|(i, v)| v * x.powi(i as i32)).sum();
    let fact: f64 = (1..=l).map(|i| i as f64).product();
    (1.0 - x * x).powf(m as f64 / 2.0) * d / (2f64.powi(l as i32) * fact)
}

#[test]
fn suite_passes() {
    let r = validation::specfun_suite();
    assert!(r.passed(), "{r:#?}");
}

#[test]
fn legendre_matches_rodrigues() {
    for l in 0..=8 {
        for m in 0..=l {
            for &x in &[-0.95, -0.4, 0.0, 0.3, 0.77, 1.0] {
                let want = legendre_oracle(l, m, x);
                let got = specfun::legendre_p(l, m, x).unwrap();
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "P_{l}^{m}({x}): {got} vs {want}");
            }
        }
    }
    let x: f64 = 0.3;
    let want = 7.5 * (7.0 * x * x - 1.0) * (1.0 - x * x);
    assert!((specfun::legendre_p(4, 2, x).unwrap() - want).abs() < 1e-12 * want.abs());
}

#[test]
fn phi_derivative_is_is_times_value() {
    let t = HarmonicTable::new(8, 1.3, 0.4);
    for l in 0..8 {
        for s in -(l as i64)..=(l as i64) {
            let want = num_complex::Complex64::new(0.0, s as f64) * t.value(l, s);
            assert!((t.d_phi(l, s) - want).norm() < 1e-14);
        }
    }
}

#[test]
fn table_agrees_with_single_evaluation() {
    let t = HarmonicTable::new(12, 2.2, -1.7);
    for l in 0..12 {
        for s in -(l as i64)..=(l as i64) {
            let y = specfun::spherical_harmonic(DegreeOrder::new(l, s).unwrap(), 2.2, -1.7).unwrap();
            assert!((t.value(l, s) - y).norm() < 1e-14);
        }
    }
}

#[test]
fn high_degree_bessel_stays_finite() {
    for l in [40, 80, 120] {
        for x in [0.05, 1.0, 10.0, 60.0] {
            let j = specfun::spherical_bessel_j(l, x).unwrap();
            assert!(j.value.re.is_finite() && j.derivative.re.is_finite(), "l={l} x={x}");
        }
    }
}
