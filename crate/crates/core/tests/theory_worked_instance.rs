//! Bound constants at a small worked instance against an independent
//! 40-digit evaluation (`fixtures/worked_instance.py`).

use std::collections::HashMap;

use plsgd_core::theory::{
    d_constants, expected_k0_lower_bound, gamma_constants, k0_lower_bound, k0_terms, martingale_only_constants,
    nu_constants, K0Choice, TheoryConstants, TheoryInputs,
};

const REL: f64 = 1e-12;

fn fixture() -> HashMap<String, f64> {
    include_str!("fixtures/worked_instance.txt")
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().parse().expect("numeric fixture")))
        .collect()
}

fn inputs() -> TheoryInputs<f64> {
    TheoryInputs {
        mu: 1.0,
        l: 1.0,
        a_abc: 1.0,
        b_abc: 1.0,
        c_abc: 1.0,
        l_g: 1.0,
        tmix: 2.0,
        d: 2.0,
        a: 3.0,
        delta: 0.1,
        delta0: 1.0,
    }
}

fn check(fx: &HashMap<String, f64>, name: &str, got: f64) {
    let want = fx[name];
    let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
    assert!(rel <= REL, "{name}: got {got:.17e}, want {want:.17e} (rel {rel:.2e})");
}

#[test]
fn d_and_m_constants() {
    let fx = fixture();
    let dc = d_constants(&inputs()).unwrap();
    check(&fx, "m1", dc.m.m1);
    check(&fx, "m2", dc.m.m2);
    check(&fx, "m3", dc.m.m3);
    check(&fx, "m4", dc.m.m4);
    check(&fx, "d1", dc.d1);
    check(&fx, "d2", dc.d2);
}

#[test]
fn nu_and_k0() {
    let fx = fixture();
    let inp = inputs();
    let dc = d_constants(&inp).unwrap();
    let (nu1, nu2) = nu_constants(&inp, &dc).unwrap();
    check(&fx, "nu1", nu1);
    check(&fx, "nu2", nu2);
    let terms = k0_terms(&inp, &dc, nu2);
    check(&fx, "k0_concentration", terms.concentration);
    check(&fx, "k0", k0_lower_bound(&inp).unwrap());
    check(&fx, "k0_expected", expected_k0_lower_bound(&inp, &dc));
}

#[test]
fn gamma_constants_at_required_k0() {
    let fx = fixture();
    let inp = inputs();
    let dc = d_constants(&inp).unwrap();
    let g = gamma_constants(&inp, &dc, fx["k0"]).unwrap();
    check(&fx, "kbar0", g.kbar0);
    check(&fx, "log_kbar0", g.log_kbar0);
    check(&fx, "gamma1", g.gamma1);
    check(&fx, "gamma2", g.gamma2);
}

#[test]
fn martingale_only() {
    let fx = fixture();
    let mo = martingale_only_constants(&inputs(), fx["k0"]).unwrap();
    check(&fx, "nu1_hat", mo.nu1_hat);
    check(&fx, "nu2_hat", mo.nu2_hat);
    check(&fx, "gamma1_hat", mo.gamma1_hat);
    check(&fx, "gamma2_hat", mo.gamma2_hat);
}

#[test]
fn bound_curves() {
    let fx = fixture();
    let tc = TheoryConstants::compute(inputs(), K0Choice::Auto, true).unwrap();
    check(&fx, "k0", tc.k0);
    check(&fx, "hp_envelope_100", tc.hp_envelope(100).unwrap());
    check(&fx, "expected_bound_1000", tc.expected_bound(1000).unwrap());
    assert!(tc.hypotheses.k0_feasible_high_probability && tc.hypotheses.k0_feasible_expected);
}
