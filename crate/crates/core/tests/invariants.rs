mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn activities_and_error_rates_stay_non_negative(seed in any::<u64>()) {
        if let Err(msg) = common::positivity_trial(seed, 15) {
            prop_assert!(false, "{}", msg);
        }
    }

    #[test]
    fn clamped_levels_never_move(seed in any::<u64>(), steps in 0usize..25) {
        if let Err(msg) = common::clamp_trial(seed, steps) {
            prop_assert!(false, "{}", msg);
        }
    }
}

#[test]
fn energy_non_increasing_in_most_trials() {
    let frac = common::energy_descent_fraction(300, 0.05, 20);
    assert!(frac >= 0.95, "only {frac} of trials descended");
}
