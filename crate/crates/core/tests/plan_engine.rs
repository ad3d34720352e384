use cdn_prs::exchange::net_flows;
use cdn_prs::market_config::{build_tier_table, PenaltyKind, RunConfig};
use cdn_prs::par::Exec;
use cdn_prs::plan_engine::{
    optimal_precosted_bill, payg_bill, precosted_bill, simulate, sweep, PaygMode, PlanId, Scenario,
};
use cdn_prs::trace_io::{synthesize_all, TraceProfile};
use proptest::prelude::*;

#[test]
fn payg_examples() {
    let t = build_tier_table(6).unwrap();
    assert!((payg_bill(50.0, &t, PaygMode::Unified) - 1.50).abs() < 1e-12);
    assert!((payg_bill(50.0, &t, PaygMode::Staggered) - 1.55).abs() < 1e-12);
    assert_eq!(payg_bill(0.0, &t, PaygMode::Unified), 0.0);
    assert_eq!(payg_bill(0.0, &t, PaygMode::Staggered), 0.0);
}

#[test]
fn precosted_examples() {
    let t = build_tier_table(6).unwrap();
    let p2 = t.get("P2").unwrap();
    let (c, r) = precosted_bill(p2, 80.0, PenaltyKind::High);
    assert!((c - 3.0).abs() < 1e-12);
    assert_eq!(r, 100.0);
    let (c, _) = precosted_bill(p2, 130.0, PenaltyKind::High);
    assert!((c - (3.0 + 30.0 * 0.036)).abs() < 1e-12);
    let (c, _) = precosted_bill(p2, 100.0, PenaltyKind::High);
    assert!((c - 3.0).abs() < 1e-12);

    let (best, _, idx) = optimal_precosted_bill(80.0, &t, PenaltyKind::High);
    let brute = t
        .classes
        .iter()
        .map(|c| precosted_bill(c, 80.0, PenaltyKind::High).0)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, brute);
    assert_eq!(precosted_bill(&t.classes[idx], 80.0, PenaltyKind::High).0, best);
    let (zero, _, idx) = optimal_precosted_bill(0.0, &t, PenaltyKind::High);
    assert_eq!(idx, 0);
    assert!((zero - 10.0 * 0.035).abs() < 1e-12);
}

fn small_scenario(bases: &[f64], weeks: u32, seed: u64) -> (Scenario, RunConfig) {
    let mut cfg = RunConfig::shipped();
    cfg.sim.total_weeks = weeks;
    cfg.profiles = bases
        .iter()
        .enumerate()
        .map(|(i, &b)| TraceProfile {
            noise_cv: 0.2,
            spike_rate: 0.3,
            spike_magnitude: 3.0,
            weekly_pattern: [1.1, 1.0, 0.9, 1.0, 1.2, 0.8, 1.0],
            ..TraceProfile::flat(&format!("os{i}"), b, seed + i as u64)
        })
        .collect();
    let days = cfg.sim.total_days() as usize;
    let traces = synthesize_all(&cfg.profiles, days, None, Exec::Sequential).unwrap();
    (Scenario::prepare(&traces, &cfg, Exec::Sequential).unwrap(), cfg)
}

#[test]
fn plan1_is_daily_normal_pricing() {
    let (sc, cfg) = small_scenario(&[0.3, 4.0, 60.0], 6, 11);
    for n in [6, 3] {
        let t = build_tier_table(n).unwrap();
        let r = simulate(&PlanId::P1.spec(n), &sc, &t, &cfg).unwrap();
        let expected: f64 = sc
            .actual
            .iter()
            .flatten()
            .map(|&v| v * t.classes[t.index_for_daily(v)].normal_price)
            .sum();
        assert!((r.total_cost() - expected).abs() < 1e-9);
    }
}

#[test]
fn parallel_and_sequential_sweeps_agree() {
    let (sc, cfg) = small_scenario(&[1.0, 30.0], 5, 4);
    let a = sweep(&PlanId::ALL, &[6, 3], &sc, &cfg, Exec::Parallel).unwrap();
    let b = sweep(&PlanId::ALL, &[6, 3], &sc, &cfg, Exec::Sequential).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.ledger, y.ledger);
        assert_eq!(x.trades, y.trades);
        assert_eq!(x.cdn, y.cdn);
    }
}

#[test]
fn mismatched_table_rejected() {
    let (sc, cfg) = small_scenario(&[1.0], 2, 1);
    let t = build_tier_table(3).unwrap();
    assert!(simulate(&PlanId::P1.spec(6), &sc, &t, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn conservation_on_random_traces(
        bases in prop::collection::vec(0.2..300.0f64, 1..5),
        seed in 0u64..1000,
        n in prop_oneof![Just(3u32), Just(6u32)],
    ) {
        let (sc, cfg) = small_scenario(&bases, 8, seed);
        let results = sweep(&PlanId::ALL, &[n], &sc, &cfg, Exec::Sequential).unwrap();
        let served: f64 = sc.actual.iter().flatten().sum();
        let by = |p: PlanId| results.iter().find(|r| r.plan() == p).unwrap();
        for r in &results {
            prop_assert!((r.total_served() - served).abs() <= 1e-9 * served.max(1.0));
            let flows = net_flows(&r.trades, sc.n_os());
            let sold: f64 = flows.iter().map(|f| f.0).sum();
            let bought: f64 = flows.iter().map(|f| f.1).sum();
            prop_assert!((sold - bought).abs() <= 1e-9 * sold.max(1.0));
            let cash: f64 = r.ledger.iter().map(|e| e.sm_cash).sum();
            prop_assert!(cash.abs() <= 1e-9 * served.max(1.0));
            for e in &r.ledger {
                prop_assert!(e.penalty_gb >= 0.0 && e.carryover_gb >= -1e-9 && e.wasted_gb >= 0.0);
            }
        }
        let gap = by(PlanId::P6b).total_cost() - by(PlanId::P5b).total_cost();
        prop_assert!((gap - by(PlanId::P6b).total_premiums()).abs() <= 1e-9);
        prop_assert!(by(PlanId::P2a).total_cost() <= by(PlanId::P2c).total_cost() + 1e-9);
        prop_assert!(by(PlanId::P2b).total_cost() <= by(PlanId::P2d).total_cost() + 1e-9);
        let cpg = by(PlanId::P1).cdn.cost_per_served_gb();
        prop_assert!(served == 0.0 || (cpg - 0.009).abs() <= 1e-12);
    }
}
