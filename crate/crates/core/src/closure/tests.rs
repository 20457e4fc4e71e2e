use super::*;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn s(v: &str) -> Scalar {
    v.parse().unwrap()
}

fn ctx(conv: &str, inj: &str) -> ClosureContext {
    ClosureContext::new(conv.parse().unwrap(), inj.parse().unwrap(), Regularity::Surjective)
}

fn euclid() -> ClosureContext {
    ctx("inf", "inf")
}

fn torus_like() -> ClosureContext {
    let mut c = ctx("1/4", "1/2");
    c.periodic_period_one = true;
    c
}

fn derive(seeds: &[&str], c: &ClosureContext, eps: &str, strategy: Strategy) -> ClosureResult<Certificate> {
    let seeds: Vec<Scalar> = seeds.iter().map(|x| s(x)).collect();
    derive_to_epsilon(&seeds, c, &s(eps), DeriveOptions::new(strategy))
}

/// Partial quotients of sqrt(n) by the integer recurrence on (m, d, a).
fn sqrt_partial_quotients(n: u64, count: usize) -> Vec<u64> {
    let a0 = n.sqrt();
    let (mut m, mut d, mut a) = (0u64, 1u64, a0);
    let mut out = vec![a0];
    while out.len() < count {
        m = d * a - m;
        d = (n - m * m) / d;
        a = (a0 + m) / d;
        out.push(a);
    }
    out
}

/// Euclidean remainders of (sqrt(n), 1): s_{k+1} = (-1)^k (q_k sqrt(n) - p_k).
fn remainder_oracle(n: u64, count: usize) -> Vec<Scalar> {
    let a = sqrt_partial_quotients(n, count);
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, a[0] as i64, 1i64);
    let mut out = Vec::new();
    for k in 0..count {
        let sign = if k % 2 == 0 { 1 } else { -1 };
        out.push(Scalar::quadratic((-sign * p1, 1), (sign * q1, 1), n));
        let ak = a[k + 1..].first().copied().unwrap_or(1) as i64;
        (p0, q0, p1, q1) = (p1, q1, ak * p1 + p0, ak * q1 + q0);
    }
    out
}

#[test]
fn rule_examples() {
    let mut set = PreservedSet::new(ctx("1", "2"), &[s("0.3")]).unwrap();
    assert_eq!(set.apply_rule(Rule::Double, &[0], None).unwrap(), RuleOutcome::Applied(1));
    assert_eq!(set.value(1), &s("3/5"));

    let mut set = PreservedSet::new(euclid(), &[s("sqrt2"), s("1")]).unwrap();
    set.apply_rule(Rule::Diff, &[0, 1], None).unwrap();
    assert_eq!(set.value(2), &s("sqrt2-1"));

    let mut set = PreservedSet::new(ctx("2", "4"), &[s("sqrt3"), s("1")]).unwrap();
    assert_eq!(set.apply_rule(Rule::Oy, &[0, 1], None).unwrap(), RuleOutcome::Applied(2));
    assert_eq!(set.value(2), &s("sqrt3-1"));
    // 2 - 1/2 <= 1 fails.
    let mut set = PreservedSet::new(euclid(), &[s("2"), s("1/2")]).unwrap();
    assert!(matches!(set.apply_rule(Rule::Oy, &[0, 1], None).unwrap(), RuleOutcome::Inapplicable(_)));
}

#[test]
fn many_stays_below_conv() {
    let mut set = PreservedSet::new(ctx("1", "2"), &[s("sqrt2/8")]).unwrap();
    for j in 2..=5 {
        let out = set.apply_rule(Rule::Many, &[0], Some(j)).unwrap();
        assert!(matches!(out, RuleOutcome::Applied(_)), "j = {j}");
    }
    // 6 sqrt2 / 8 > 1.
    let out = set.apply_rule(Rule::Many, &[0], Some(6)).unwrap();
    assert!(matches!(out, RuleOutcome::Inapplicable(_)));
    for e in &set.elements()[1..] {
        assert!(e.value.lt(&s("1")).unwrap());
    }
}

#[test]
fn double_may_exceed_conv() {
    let mut set = PreservedSet::new(ctx("1", "2"), &[s("0.75")]).unwrap();
    assert_eq!(set.apply_rule(Rule::Double, &[0], None).unwrap(), RuleOutcome::Applied(1));
    // The result can no longer be an input.
    assert!(matches!(set.apply_rule(Rule::Double, &[1], None).unwrap(), RuleOutcome::Inapplicable(_)));
}

#[test]
fn diff_zero_remainder() {
    let mut set = PreservedSet::new(euclid(), &[s("2"), s("1")]).unwrap();
    assert_eq!(set.apply_rule(Rule::Diff, &[0, 1], None).unwrap(), RuleOutcome::ZeroRemainder);
    assert_eq!(set.steps().len(), 0);
}

#[test]
fn rules_need_regularity() {
    let mut c = euclid();
    c.regularity = None;
    let mut set = PreservedSet::new(c, &[s("1")]).unwrap();
    assert!(matches!(set.apply_rule(Rule::Double, &[0], None), Err(ClosureError::Context(_))));
}

#[test]
fn context_validation() {
    assert!(ctx("1/3", "1/2").validate().is_err());
    assert!(ctx("1/4", "1/2").validate().is_ok());
    let m = Model::sphere(2, 1.0).unwrap();
    assert!(ClosureContext::for_model(&m, Regularity::Continuous).validate().is_ok());
}

#[test]
fn strategy_a_sqrt2() {
    let cert = derive(&["sqrt2", "1"], &euclid(), "0.1", Strategy::A).unwrap();
    let outs: Vec<&Scalar> = cert.outputs().collect();
    assert_eq!(outs, vec![&s("sqrt2-1"), &s("3-2*sqrt2"), &s("5*sqrt2-7")]);
    assert_eq!(cert.achieved, s("5*sqrt2-7"));
    let report = verify_certificate(&cert, &cert.context);
    assert!(report.valid, "{report:?}");
    assert_eq!(report.steps.len(), 3);
}

#[test]
fn strategy_a_matches_continued_fractions() {
    for n in [2u64, 3, 5, 7, 13, 19] {
        let cert = derive(&[&format!("sqrt{n}"), "1"], &euclid(), "1e-12", Strategy::A).unwrap();
        let outs: Vec<Scalar> = cert.outputs().cloned().collect();
        assert!(outs.len() >= 10, "sqrt{n}: {} steps", outs.len());
        let oracle = remainder_oracle(n, 10);
        assert_eq!(&outs[..10], &oracle[..], "sqrt{n}");
    }
}

#[test]
fn strategy_a_rational_report() {
    match derive(&["2", "1"], &euclid(), "1e-3", Strategy::A) {
        Err(ClosureError::Rational(r)) => assert!(r.reason.contains("rational")),
        other => panic!("{other:?}"),
    }
    match derive(&["3/7", "1/5"], &euclid(), "1e-9", Strategy::A) {
        Err(ClosureError::Rational(r)) => assert!(!r.partial.steps.is_empty()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn strategy_a_with_finite_conv_and_mixed_fields() {
    let cert = derive(&["sqrt3/4", "sqrt2/4"], &ctx("1", "2"), "1e-4", Strategy::A).unwrap();
    assert!(verify_certificate(&cert, &cert.context).valid);
    assert!(cert.outputs().all(|o| !o.is_exact()));
}

#[test]
fn empty_certificate_when_seed_is_small() {
    let cert = derive(&["1/1000", "1"], &euclid(), "0.01", Strategy::A).unwrap();
    assert!(cert.steps.is_empty());
    assert_eq!(cert.achieved, s("1/1000"));
    assert!(verify_certificate(&cert, &cert.context).valid);
}

/// frac(n sqrt2 / 8) to 30 digits, as an integer multiple of 10^-30:
/// floor(sqrt(2 n^2 10^60) / 8) by integer square root.
fn frac_oracle(n: u64) -> BigInt {
    let unit = BigInt::from(10).pow(30);
    let n = BigInt::from(n);
    let v = (BigInt::from(2) * &n * &n * BigInt::from(10).pow(60)).sqrt() / BigInt::from(8);
    v % unit
}

#[test]
fn strategy_c_matches_decimal_oracle() {
    let cert = derive(&["sqrt2/8"], &torus_like(), "1e-2", Strategy::C).unwrap();
    assert_eq!(cert.steps.len(), 1);
    let step = &cert.steps[0];
    let n = step.param.unwrap();
    let unit = BigInt::from(10).pow(30);
    let eps = &unit / BigInt::from(100);
    let first = (1..=10_000).find(|&k| frac_oracle(k) < eps).unwrap();
    assert_eq!(n, first);
    let (lo, hi) = step.output.as_exact().unwrap().enclosure(120);
    let oracle = BigRational::new(frac_oracle(n), unit.clone());
    let tol = BigRational::new(BigInt::from(2), unit);
    assert!(&lo - &oracle < tol && &oracle - &hi < tol, "{lo} {oracle} {hi}");
    assert!(verify_certificate(&cert, &cert.context).valid);
}

#[test]
fn strategy_c_rational_seed() {
    match derive(&["1/8"], &torus_like(), "1e-2", Strategy::C) {
        Err(ClosureError::Rational(r)) => assert!(r.reason.contains("rational")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn frac_rule_preconditions() {
    let mut set = PreservedSet::new(ctx("1/4", "1/2"), &[s("sqrt2/8")]).unwrap();
    let out = set.apply_rule(Rule::Frac, &[0], Some(3)).unwrap();
    assert!(matches!(out, RuleOutcome::Inapplicable(_)), "needs the periodic flag");
    let mut set = PreservedSet::new(torus_like(), &[s("sqrt2/8")]).unwrap();
    // frac(4 sqrt2 / 8) = 0.707 is not below inj = 1/2.
    assert!(matches!(set.apply_rule(Rule::Frac, &[0], Some(4)).unwrap(), RuleOutcome::Inapplicable(_)));
    assert_eq!(set.apply_rule(Rule::Frac, &[0], Some(6)).unwrap(), RuleOutcome::Applied(1));
    assert_eq!(set.value(1), &s("3/4*sqrt2-1"));
}

#[test]
fn verify_flags_double_above_conv() {
    let mut cert = derive(&["sqrt2", "1"], &euclid(), "0.1", Strategy::A).unwrap();
    let c = ctx("1", "2");
    cert.context = c.clone();
    cert.seeds = vec![s("3/4")];
    cert.steps = vec![DerivationStep {
        rule: Rule::Double,
        inputs: vec![0],
        param: None,
        output: s("3/2"),
        lemma: Rule::Double.lemma().into(),
    }];
    cert.achieved = s("3/2");
    cert.achieved_index = 1;
    // Valid step, but the achieved value is not small.
    assert!(!verify_certificate(&cert, &c).valid);
    cert.seeds = vec![s("5/4")];
    cert.steps[0].output = s("5/2");
    let report = verify_certificate(&cert, &c);
    assert!(!report.valid);
    assert!(report.failures[0].contains("twice"), "{:?}", report.failures);
}

#[test]
fn verify_detects_tampering() {
    let mut cert = derive(&["sqrt2", "1"], &euclid(), "0.1", Strategy::A).unwrap();
    cert.steps[1].output = s("3-2*sqrt2+1/1000000");
    assert!(!verify_certificate(&cert, &cert.context).valid);
    let mut cert = derive(&["sqrt2", "1"], &euclid(), "0.1", Strategy::A).unwrap();
    cert.epsilon = s("0.05");
    assert!(!verify_certificate(&cert, &cert.context).valid);
}

#[test]
fn certificate_json_round_trip() {
    let cert = derive(&["sqrt2", "1"], &euclid(), "1e-6", Strategy::A).unwrap();
    let text = serde_json::to_string(&cert).unwrap();
    let back: Certificate = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cert);
    assert!(verify_certificate(&back, &back.context).valid);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["steps"][0]["rule"], "DIFF");
    assert_eq!(v["context"]["conv"], "inf");
}

#[test]
fn exhaustive_finds_a_pruned_certificate() {
    let cert = derive(&["sqrt2", "1"], &euclid(), "0.1", Strategy::Exhaustive).unwrap();
    assert!(verify_certificate(&cert, &cert.context).valid);
    assert!(cert.achieved.lt(&s("0.1")).unwrap());
    // Every step feeds the achieved element.
    let n = cert.seeds.len() + cert.steps.len();
    assert_eq!(cert.achieved_index, n - 1);
}

#[test]
fn budget_error_keeps_partial_certificate() {
    let seeds = [s("sqrt2"), s("1")];
    let mut opts = DeriveOptions::new(Strategy::A);
    opts.budget = 2;
    match derive_to_epsilon(&seeds, &euclid(), &s("1e-9"), opts) {
        Err(ClosureError::Budget { partial, .. }) => {
            assert_eq!(partial.steps.len(), 2);
            assert_eq!(partial.achieved, s("3-2*sqrt2"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn strategy_b_on_the_unit_sphere() {
    let m = Model::sphere(2, 1.0).unwrap();
    let c = ClosureContext::for_model(&m, Regularity::Surjective);
    let mut set = PreservedSet::new(c, &[s("0.5")]).unwrap();
    let mut l = 0;
    for _ in 0..3 {
        let RuleOutcome::Applied(lbar) = set.apply_rule(Rule::Bar, &[l], None).unwrap() else { panic!() };
        let (li, bi) = (set.value(l).to_interval(), set.value(lbar).to_interval());
        assert!(bi.lo() > li.hi() && bi.hi() < 2.0 * li.lo());
        let RuleOutcome::Applied(next) = set.apply_rule(Rule::Oy, &[lbar, l], None).unwrap() else { panic!() };
        assert!(set.value(next).lt(set.value(l)).unwrap());
        assert_eq!(set.value(next).sign().unwrap(), Ordering::Greater);
        l = next;
    }
    let oracle = set.context().bar_oracle.clone().unwrap();
    let r = set.value(0).approx();
    assert!(check_bar_bracket(&oracle, r, &set.value(1).to_interval()).unwrap());
}

#[test]
fn bar_needs_homogeneity_and_small_radius() {
    let mut set = PreservedSet::new(euclid(), &[s("1")]).unwrap();
    assert!(matches!(set.apply_rule(Rule::Bar, &[0], None).unwrap(), RuleOutcome::Inapplicable(_)));
    let m = Model::sphere(2, 1.0).unwrap();
    let c = ClosureContext::for_model(&m, Regularity::Surjective);
    let mut set = PreservedSet::new(c, &[s("1.1")]).unwrap();
    assert!(matches!(set.apply_rule(Rule::Bar, &[0], None).unwrap(), RuleOutcome::Inapplicable(_)));
}

#[test]
fn euclidean_bar_is_sqrt3_r() {
    let m = Model::euclidean(2).unwrap();
    let c = ClosureContext::for_model(&m, Regularity::Surjective);
    let mut set = PreservedSet::new(c, &[s("1")]).unwrap();
    set.apply_rule(Rule::Bar, &[0], None).unwrap();
    let i = set.value(1).to_interval();
    assert!(i.contains(3f64.sqrt()), "{i}");
    assert!(i.width() <= 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strategy_a_iterates_decrease(a in 1i64..50, b in 1i64..20, d in prop::sample::select(vec![2u64, 3, 5, 6, 7, 10])) {
        let x = Scalar::quadratic((a, 1), (b, 1), d);
        let cert = derive_to_epsilon(&[x, Scalar::integer(1)], &euclid(), &s("1e-8"), DeriveOptions::new(Strategy::A)).unwrap();
        let mut prev: Option<&Scalar> = None;
        for o in cert.outputs() {
            prop_assert!(o.is_exact());
            prop_assert_eq!(o.sign().unwrap(), Ordering::Greater);
            if let Some(p) = prev {
                prop_assert!(o.lt(p).unwrap());
            }
            prev = Some(o);
        }
        prop_assert!(verify_certificate(&cert, &cert.context).valid);
    }

    #[test]
    fn frac_outputs_are_exact_fractional_parts(n in 1u64..5000) {
        let r = s("sqrt2/8");
        let f = r.frac_multiple(n).unwrap();
        let (lo, hi) = f.as_exact().unwrap().enclosure(110);
        let unit = BigInt::from(10).pow(30);
        let oracle = BigRational::new(frac_oracle(n), unit.clone());
        let tol = BigRational::new(BigInt::from(2), unit);
        prop_assert!(&lo - &oracle < tol && &oracle - &hi < tol);
        prop_assert!(lo >= BigRational::zero() && hi <= BigRational::one());
    }
}
