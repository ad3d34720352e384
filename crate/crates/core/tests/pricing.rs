use cdn_prs::market_config::{build_tier_table, SimConfig};
use cdn_prs::pricing::{
    baw_american, bs_european, lattice_price, price, so_premium_table, ExerciseStyle, LatticeSpec, OptionKind,
    OptionParams, PricingMethod, StrikeRule,
};
use proptest::prelude::*;

fn opt(spot: f64, strike: f64, r: f64, q: f64, sigma: f64, t: f64, kind: OptionKind, style: ExerciseStyle) -> OptionParams {
    OptionParams {
        spot,
        strike,
        rate: r,
        dividend_yield: q,
        volatility: sigma,
        maturity: t,
        kind,
        style,
    }
}

fn textbook(kind: OptionKind, style: ExerciseStyle) -> OptionParams {
    opt(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, kind, style)
}

#[test]
fn bs_call_matches_fine_lattice() {
    let p = textbook(OptionKind::Call, ExerciseStyle::European);
    let bs = bs_european(&p).unwrap();
    let lattice = lattice_price(&p, &LatticeSpec::binomial(10_000)).unwrap();
    assert!((bs - lattice).abs() < 5e-4, "bs {bs} lattice {lattice}");
    assert!((bs - 10.4506).abs() < 5e-5);
}

#[test]
fn baw_put_close_to_fine_american_lattice() {
    let p = textbook(OptionKind::Put, ExerciseStyle::American);
    let baw = baw_american(&p).unwrap();
    let lattice = lattice_price(&p, &LatticeSpec::binomial(10_000)).unwrap();
    assert!((baw / lattice - 1.0).abs() < 5e-3, "baw {baw} lattice {lattice}");
}

#[test]
fn deep_itm_near_zero_vol_is_forward() {
    let p = opt(120.0, 100.0, 0.0, 0.0, 1e-6, 1.0, OptionKind::Call, ExerciseStyle::European);
    assert!((bs_european(&p).unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn near_expiry_atm_goes_to_zero() {
    let p = opt(100.0, 100.0, 0.05, 0.0, 0.2, 1e-10, OptionKind::Call, ExerciseStyle::European);
    assert!(bs_european(&p).unwrap() < 1e-3);
}

#[test]
fn lattices_converge_with_steps() {
    let p = textbook(OptionKind::Call, ExerciseStyle::European);
    let bs = bs_european(&p).unwrap();
    for spec in [LatticeSpec::binomial, LatticeSpec::trinomial] {
        let coarse = (lattice_price(&p, &spec(100)).unwrap() - bs).abs();
        let fine = (lattice_price(&p, &spec(2000)).unwrap() - bs).abs();
        assert!(fine < coarse);
        assert!(fine / bs < 5e-4);
    }
}

#[test]
fn invalid_inputs_rejected() {
    let mut p = textbook(OptionKind::Call, ExerciseStyle::European);
    p.volatility = 0.0;
    assert!(bs_european(&p).is_err());
    p.volatility = 0.2;
    p.spot = -1.0;
    assert!(baw_american(&p).is_err());
    assert!(lattice_price(&textbook(OptionKind::Call, ExerciseStyle::European), &LatticeSpec::binomial(0)).is_err());
}

#[test]
fn premiums_scale_with_strike_and_low_rule() {
    let sim = SimConfig::default();
    for sc in [6, 3] {
        let table = build_tier_table(sc).unwrap();
        let hi = so_premium_table(&table, &sim, StrikeRule::Normal, PricingMethod::Baw, 200).unwrap();
        let lo = so_premium_table(&table, &sim, StrikeRule::LowPenalty, PricingMethod::Baw, 200).unwrap();
        assert_eq!(hi.len(), sc as usize);
        let ratio0 = hi[0].premium / hi[0].strike;
        for (h, l) in hi.iter().zip(&lo) {
            assert!((h.premium / h.strike / ratio0 - 1.0).abs() < 1e-9);
            assert!((l.premium / h.premium - 0.95).abs() < 1e-9);
        }
    }
}

fn kinds() -> impl Strategy<Value = OptionKind> {
    prop_oneof![Just(OptionKind::Call), Just(OptionKind::Put)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn put_call_parity(
        s in 20.0..200.0f64, k in 20.0..200.0f64, r in 0.0..0.1f64,
        q in 0.0..0.08f64, sigma in 0.05..0.6f64, t in 0.05..3.0f64,
    ) {
        let c = bs_european(&opt(s, k, r, q, sigma, t, OptionKind::Call, ExerciseStyle::European)).unwrap();
        let p = bs_european(&opt(s, k, r, q, sigma, t, OptionKind::Put, ExerciseStyle::European)).unwrap();
        let forward = s * (-q * t).exp() - k * (-r * t).exp();
        prop_assert!((c - p - forward).abs() <= 1e-10 * s);
    }

    #[test]
    fn american_never_below_european_or_intrinsic(
        s in 50.0..150.0f64, k in 50.0..150.0f64, r in 0.0..0.1f64,
        q in 0.0..0.08f64, sigma in 0.1..0.5f64, t in 0.1..2.0f64, kind in kinds(),
    ) {
        let am = opt(s, k, r, q, sigma, t, kind, ExerciseStyle::American);
        let eu = bs_european(&am.with_style(ExerciseStyle::European)).unwrap();
        let baw = baw_american(&am).unwrap();
        prop_assert!(baw >= eu - 1e-12);
        prop_assert!(baw >= am.intrinsic(s) - 1e-12);
        let lat_am = lattice_price(&am, &LatticeSpec::binomial(150)).unwrap();
        let lat_eu = lattice_price(&am.with_style(ExerciseStyle::European), &LatticeSpec::binomial(150)).unwrap();
        prop_assert!(lat_am >= lat_eu - 1e-12);
    }

    #[test]
    fn homogeneous_in_spot_and_strike(
        s in 50.0..150.0f64, k in 50.0..150.0f64, r in 0.0..0.1f64,
        q in 0.0..0.05f64, sigma in 0.1..0.5f64, t in 0.1..2.0f64,
        lambda in prop_oneof![Just(0.5), Just(2.0), Just(10.0)],
    ) {
        let p = opt(s, k, r, q, sigma, t, OptionKind::Call, ExerciseStyle::American);
        for m in PricingMethod::ALL {
            let base = price(&p, m, 60).unwrap();
            let scaled = price(&p.scaled(lambda), m, 60).unwrap();
            prop_assert!((scaled - lambda * base).abs() <= 1e-9 * (lambda * base).max(1e-12));
        }
    }
}
