use muacp::resources::{cumulative_bound_check, Amount, ResourceBudget, ResourceVector, UsageSample};
use proptest::prelude::*;

fn vector(max: u64) -> impl Strategy<Value = ResourceVector> {
    prop::array::uniform4(0..=max).prop_map(|[m, b, c, e]| ResourceVector {
        memory: Amount::millis(m),
        bandwidth: Amount::millis(b),
        cpu: Amount::millis(c),
        energy: Amount::millis(e),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Charging only feasible costs never drives any component negative, and
    /// the remaining budget is exactly the limit minus the sum charged.
    #[test]
    fn feasible_charges_stay_sound(limit in vector(1_000_000), costs in prop::collection::vec(vector(50_000), 0..60)) {
        let mut budget = ResourceBudget::new(limit);
        let mut spent = [0u64; 4];
        for c in &costs {
            let before = *budget.remaining();
            if budget.feasible(c) {
                budget.charge(c).unwrap();
                for (s, x) in spent.iter_mut().zip(c.components()) {
                    *s += x.as_millis();
                }
            } else {
                prop_assert!(budget.charge(c).is_err());
                prop_assert_eq!(*budget.remaining(), before);
            }
        }
        for ((r, l), s) in budget.remaining().components().iter().zip(limit.components()).zip(spent) {
            prop_assert_eq!(r.as_millis() + s, l.as_millis());
        }
    }

    #[test]
    fn refunds_never_exceed_limit(limit in vector(10_000), cost in vector(10_000), refund in vector(20_000)) {
        let mut budget = ResourceBudget::new(limit);
        let _ = budget.charge(&cost);
        budget.refund(&refund);
        prop_assert!(budget.remaining().fits_within(&limit));
    }

    #[test]
    fn bound_check_sums_agree(costs in prop::collection::vec((0u64..20, vector(5_000)), 0..40), horizon in 0u64..20) {
        let trace: Vec<UsageSample> = costs.iter().map(|&(tick, cost)| UsageSample { tick, cost }).collect();
        let rates = ResourceVector::uniform(Amount::units(10));
        let r = cumulative_bound_check(&trace, &rates, horizon, u64::MAX);
        let bw: u64 = trace.iter().filter(|s| s.tick <= horizon).map(|s| s.cost.bandwidth.as_millis()).sum();
        prop_assert!((r.bandwidth.used - bw as f64 / 1000.0).abs() < 1e-9);
        prop_assert_eq!(r.bandwidth.ok, bw <= 10_000 * (horizon + 1));
        prop_assert!(r.rate_ok);
    }
}
