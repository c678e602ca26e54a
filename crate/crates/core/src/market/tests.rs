use super::*;
use crate::config::table1_units;
use proptest::prelude::*;

fn table1(bids: [f64; 6], maint: [bool; 6], demand: f64) -> MarketInstance {
    MarketInstance {
        units: table1_units(),
        bids: bids.to_vec(),
        maintenance: maint.to_vec(),
        demand,
        prev_gen: None,
        ramps_enabled: false,
    }
}

#[test]
fn demand_at_sum_of_minimums() {
    let out = clear_market(&table1([1.0; 6], [false; 6], 30.0)).unwrap();
    assert_eq!(out.gen, vec![5.0; 6]);
    assert_eq!(out.price, 1.0);
}

#[test]
fn table1_competitive_150() {
    let inst = table1([1.0; 6], [false; 6], 150.0);
    let out = clear_market(&inst).unwrap();
    assert_eq!(out.gen, vec![5.0, 80.0, 50.0, 5.0, 5.0, 5.0]);
    assert_eq!(out.price, 1.75);
    let oracle = lp_dispatch_oracle(&inst).unwrap();
    assert!((oracle.total_cost - out.total_cost).abs() < 1e-9);
    assert_eq!(oracle.gen, out.gen);
    assert_eq!(oracle.price, 1.75);
    assert!(kkt_violations(&inst, &out, 1e-9).is_empty());
}

#[test]
fn unit3_in_maintenance_150() {
    let mut maint = [false; 6];
    maint[2] = true;
    let inst = table1([1.0; 6], maint, 150.0);
    let oracle = lp_dispatch_oracle(&inst).unwrap();
    // Frozen from the vertex-enumeration oracle.
    assert_eq!(oracle.gen, vec![55.0, 80.0, 0.0, 5.0, 5.0, 5.0]);
    assert_eq!(oracle.price, 2.0);
    assert!((oracle.total_cost - 296.25).abs() < 1e-12);
    let out = clear_market(&inst).unwrap();
    assert_eq!(out.gen, oracle.gen);
    assert_eq!(out.price, 2.0);
    assert!((out.total_cost - oracle.total_cost).abs() < 1e-9);
}

#[test]
fn single_unit_market() {
    let mut unit = table1_units().remove(0);
    unit.marginal_cost = 1.0;
    let inst = MarketInstance {
        units: vec![unit],
        bids: vec![2.0],
        maintenance: vec![false],
        demand: 40.0,
        prev_gen: None,
        ramps_enabled: false,
    };
    for out in [clear_market(&inst).unwrap(), lp_dispatch_oracle(&inst).unwrap()] {
        assert_eq!(out.gen, vec![40.0]);
        assert_eq!(out.price, 2.0);
    }
}

#[test]
fn all_at_maximum_prices_dearest_offer() {
    let mut maint = [false; 6];
    maint[0] = true;
    maint[1] = true;
    // 50 + 55 + 30 + 40
    let out = clear_market(&table1([1.0; 6], maint, 175.0)).unwrap();
    assert_eq!(out.price, 3.25);
}

#[test]
fn infeasible_demand() {
    let inst = table1([1.0; 6], [false; 6], 400.0);
    assert!(matches!(clear_market(&inst), Err(MarketError::InfeasibleDemand { .. })));
    assert!(matches!(lp_dispatch_oracle(&inst), Err(MarketError::InfeasibleDemand { .. })));
    let inst = table1([1.0; 6], [false; 6], 20.0);
    assert!(matches!(clear_market(&inst), Err(MarketError::InfeasibleDemand { .. })));
}

#[test]
fn ramp_conflict_is_infeasible() {
    let mut inst = table1([1.0; 6], [false; 6], 100.0);
    inst.units.iter_mut().for_each(|u| {
        u.ramp_up = Some(10.0);
        u.ramp_down = Some(10.0);
    });
    inst.ramps_enabled = true;
    inst.prev_gen = Some(vec![5.0; 6]);
    // At most 6 * 15 = 90 MW reachable.
    assert!(matches!(clear_market(&inst), Err(MarketError::InfeasibleDemand { .. })));
}

#[test]
fn validation_reports() {
    assert!(validate_instance(&table1([1.0; 6], [false; 6], 100.0)).is_empty());
    let mut bids = [1.0; 6];
    bids[0] = 0.5;
    let rep = validate_instance(&table1(bids, [false; 6], 100.0));
    assert!(rep.other.iter().any(|m| m.contains("below 1")), "{rep:?}");
    let mut inst = table1([1.0; 6], [false; 6], 100.0);
    inst.maintenance.pop();
    let rep = validate_instance(&inst);
    assert_eq!(rep.dimension.len(), 1);
    assert!(matches!(clear_market(&inst), Err(MarketError::DimensionMismatch(_))));
}

#[test]
fn ramp_path_respects_ramp_window() {
    let mut inst = table1([1.0; 6], [false; 6], 150.0);
    inst.units.iter_mut().for_each(|u| {
        u.ramp_up = Some(20.0);
        u.ramp_down = Some(20.0);
    });
    inst.ramps_enabled = true;
    inst.prev_gen = Some(vec![20.0, 30.0, 30.0, 20.0, 20.0, 20.0]);
    let out = clear_market(&inst).unwrap();
    let oracle = lp_dispatch_oracle(&inst).unwrap();
    assert!((out.total_cost - oracle.total_cost).abs() < 1e-9);
    assert!(kkt_violations(&inst, &out, 1e-9).is_empty(), "{:?}", kkt_violations(&inst, &out, 1e-9));
    for (g, p) in out.gen.iter().zip(inst.prev_gen.as_ref().unwrap()) {
        assert!((g - p).abs() <= 20.0 + 1e-9);
    }
}

fn arb_instance(ramps: bool) -> impl Strategy<Value = MarketInstance> {
    (1usize..=6).prop_flat_map(move |n| {
        let unit = (0.5f64..5.0, 0.0f64..20.0, 1.0f64..60.0, 1.0f64..2.0, 1.0f64..40.0);
        (
            prop::collection::vec(unit, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.0f64..1.0, n),
            0.0f64..1.0,
        )
            .prop_map(move |(raw, maint, prev_frac, frac)| {
                let units: Vec<UnitParams> = raw
                    .iter()
                    .enumerate()
                    .map(|(i, &(mc, gmin, span, _, ramp))| UnitParams {
                        id: i + 1,
                        marginal_cost: (mc * 4.0).round() / 4.0,
                        g_max: gmin + span,
                        g_min: gmin,
                        ramp_up: ramps.then_some(ramp),
                        ramp_down: ramps.then_some(ramp),
                        maint_cost: 10.0,
                        maint_block: 1,
                        maint_required: 1,
                        k_max: 2.0,
                    })
                    .collect();
                // Quarter-step bids make equal offers common.
                let bids: Vec<f64> = raw.iter().map(|r| (r.3 * 4.0).round() / 4.0).collect();
                let maintenance = maint.clone();
                let prev: Vec<f64> = units
                    .iter()
                    .zip(&prev_frac)
                    .zip(&maintenance)
                    .map(|((u, f), m)| if *m { 0.0 } else { u.g_min + f * (u.g_max - u.g_min) })
                    .collect();
                let mut inst = MarketInstance {
                    units,
                    bids,
                    maintenance,
                    demand: 0.0,
                    prev_gen: ramps.then_some(prev),
                    ramps_enabled: ramps,
                };
                let b = inst.bounds();
                let lo: f64 = b.iter().map(|x| x.0).sum();
                let hi: f64 = b.iter().map(|x| x.1).sum();
                inst.demand = lo + frac * (hi - lo).max(0.0);
                inst
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn clear_matches_oracle_and_kkt(inst in prop_oneof![arb_instance(false), arb_instance(true)]) {
        let direct = clear_market(&inst);
        let oracle = lp_dispatch_oracle(&inst);
        match (direct, oracle) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.total_cost - b.total_cost).abs() < 1e-9, "{} vs {}", a.total_cost, b.total_cost);
                prop_assert!((a.gen.iter().sum::<f64>() - inst.demand).abs() < 1e-9);
                let v = kkt_violations(&inst, &a, 1e-9);
                prop_assert!(v.is_empty(), "{:?}", v);
            }
            (Err(MarketError::InfeasibleDemand { .. }), Err(MarketError::InfeasibleDemand { .. })) => {}
            (a, b) => prop_assert!(false, "disagreement: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn positive_scaling_covariance(inst in arb_instance(false), shift in -3i32..4) {
        let c = 2f64.powi(shift);
        let Ok(base) = clear_market(&inst) else { return Ok(()); };
        let mut scaled = inst.clone();
        scaled.units.iter_mut().for_each(|u| u.marginal_cost *= c);
        let out = clear_market(&scaled).unwrap();
        prop_assert_eq!(&out.gen, &base.gen);
        prop_assert_eq!(out.price, base.price * c);
    }

    #[test]
    fn deterministic(inst in arb_instance(true)) {
        let a = clear_market(&inst);
        let b = clear_market(&inst);
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
