use approx::assert_relative_eq;
use imde_core::integrators::{rk_step, ButcherTableau};
use imde_core::series::{exact_flow_jet, reference_flow};
use imde_core::{Jet64, System64};
use proptest::prelude::*;

const ORDER: usize = 5;

fn jet() -> impl Strategy<Value = Jet64> {
    prop::collection::vec(-2.0f64..2.0, ORDER + 1).prop_map(|c| Jet64::new(c).unwrap())
}

fn close(a: &Jet64, b: &Jet64, tol: f64) -> bool {
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn addition_commutes(a in jet(), b in jet()) {
        prop_assert_eq!(&a + &b, &b + &a);
    }

    #[test]
    fn multiplication_is_associative(a in jet(), b in jet(), c in jet()) {
        let l = &(&a * &b) * &c;
        let r = &a * &(&b * &c);
        prop_assert!(close(&l, &r, 1e-12));
    }

    #[test]
    fn multiplication_distributes(a in jet(), b in jet(), c in jet()) {
        let l = &a * &(&b + &c);
        let r = &(&a * &b) + &(&a * &c);
        prop_assert!(close(&l, &r, 1e-12));
    }

    #[test]
    fn exp_turns_sums_into_products(a in jet(), b in jet()) {
        let l = (&a + &b).exp();
        let r = &a.exp() * &b.exp();
        prop_assert!(close(&l, &r, 1e-10));
    }

    #[test]
    fn sin_cos_on_unit_circle(a in jet()) {
        let (s, c) = a.sin_cos();
        let one = &(&s * &s) + &(&c * &c);
        prop_assert!(close(&one, &Jet64::constant(1.0, ORDER), 1e-12));
    }

    #[test]
    fn evaluating_a_product_multiplies_values(a in jet(), b in jet(), h in -0.5f64..0.5) {
        let p = (&a * &b).eval_at(h);
        // Truncation drops terms of degree > ORDER, so compare with the same truncation.
        let mut direct = 0.0;
        for i in 0..=ORDER {
            for j in 0..=ORDER - i {
                direct += a.coeff(i) * b.coeff(j) * h.powi((i + j) as i32);
            }
        }
        prop_assert!((p - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }
}

// The flow's Taylor polynomial should track an accurate integration with error O(h^{k+2}).
#[test]
fn flow_jet_matches_reference_integration() {
    let sys = System64::pendulum();
    let x = [0.3, -0.8];
    let k = 6;
    let jets = exact_flow_jet(&sys, &x, k).unwrap();
    let mut errs = Vec::new();
    for h in [0.02, 0.01] {
        let exact = reference_flow(&sys, &x, h).unwrap();
        let e = jets
            .iter()
            .zip(&exact)
            .map(|(j, y)| (j.eval_at(h) - y).abs())
            .fold(0.0, f64::max);
        errs.push(e);
    }
    let slope = (errs[0] / errs[1]).log2();
    assert!(
        slope > (k + 2) as f64 - 0.6,
        "slope {slope}, errors {errs:?}"
    );
}

#[test]
fn first_flow_coefficients_are_field_and_half_ff() {
    let sys = System64::pendulum();
    let (p, q): (f64, f64) = (0.4, 1.1);
    let jets = exact_flow_jet(&sys, &[p, q], 2).unwrap();
    // f = (-10 sin q, p), f'f = (-10 cos q · p, -10 sin q).
    assert_relative_eq!(*jets[0].coeff(1), -10.0 * q.sin(), epsilon = 1e-14);
    assert_relative_eq!(*jets[1].coeff(1), p, epsilon = 1e-14);
    assert_relative_eq!(*jets[0].coeff(2), -5.0 * q.cos() * p, epsilon = 1e-14);
    assert_relative_eq!(*jets[1].coeff(2), -5.0 * q.sin(), epsilon = 1e-14);
}

#[test]
fn builtin_methods_converge_at_declared_order() {
    let sys = System64::damped_oscillator();
    let x = [1.0, 0.5];
    for (name, p) in [
        ("euler", 1),
        ("midpoint", 2),
        ("rk4", 4),
        ("implicit_midpoint", 2),
    ] {
        let tab = ButcherTableau::<f64>::builtin(name).unwrap();
        let local = |h: f64| {
            let y = rk_step(&tab, &sys, &x, h, 1).unwrap();
            let e = reference_flow(&sys, &x, h).unwrap();
            y.iter()
                .zip(&e)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let slope = (local(0.02) / local(0.01)).log2();
        assert!(
            (slope - (p + 1) as f64).abs() < 0.15,
            "{name}: slope {slope}"
        );
    }
}
