use prunekit::arch::build_arch;
use prunekit::flops::{count_flops_with, uniform_rates, ChannelCounting};
use prunekit::pruning::{select_filters, FilterState, Mode, RateRamp, ScheduleConfig};
use proptest::prelude::*;

fn states_after(n: usize, hard: &[usize], soft: &[usize]) -> Vec<FilterState> {
    let mut s = vec![FilterState::Active; n];
    for &i in soft {
        s[i] = FilterState::Soft;
    }
    for &i in hard {
        s[i] = FilterState::Hard;
    }
    s
}

proptest! {
    /// Over a schedule with rising rate and hardness, hard sets nest and the
    /// pruned count is always floor(P·n).
    #[test]
    fn hard_sets_nest_under_rising_schedule(
        n in 4usize..40,
        steps in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, prop::collection::vec(0.0f64..2.0, 40)), 2..8),
    ) {
        let mut rates: Vec<f64> = steps.iter().map(|s| s.0 * 0.9).collect();
        let mut lambdas: Vec<f64> = steps.iter().map(|s| s.1).collect();
        rates.sort_by(f64::total_cmp);
        lambdas.sort_by(f64::total_cmp);
        let mut prior = vec![FilterState::Active; n];
        for (i, (_, _, raw)) in steps.iter().enumerate() {
            // Hard filters are zero, as the trainer leaves them.
            let norms: Vec<f64> = (0..n)
                .map(|j| if prior[j] == FilterState::Hard { 0.0 } else { raw[j] })
                .collect();
            let sel = select_filters(&norms, &prior, rates[i], lambdas[i]).unwrap();
            prop_assert_eq!(sel.pruned_count(), (rates[i] * n as f64 + 1e-9).floor() as usize);
            for j in 0..n {
                if prior[j] == FilterState::Hard {
                    prop_assert!(sel.hard.contains(&j));
                }
            }
            prior = states_after(n, &sel.hard, &sel.soft);
        }
    }

    #[test]
    fn reduction_rises_with_rate(a in 0.0f64..0.95, b in 0.0f64..0.95) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for arch in ["resnet20", "vgg16", "tinyconvnet"] {
            let spec = build_arch(arch).unwrap();
            for counting in [ChannelCounting::Integer, ChannelCounting::Fractional] {
                let r_lo = count_flops_with(&spec, &uniform_rates(&spec, lo), counting).unwrap();
                let r_hi = count_flops_with(&spec, &uniform_rates(&spec, hi), counting).unwrap();
                prop_assert!(r_lo.total >= r_hi.total);
                prop_assert!(r_hi.reduction_pct >= 0.0 && r_hi.reduction_pct < 100.0);
            }
        }
    }

    #[test]
    fn schedules_are_monotone_with_exact_ends(
        t_max in 2usize..300,
        alpha0 in 0.001f64..1.0,
        li in 0.0f64..1.0,
        lf in 0.0f64..1.0,
        goal in 0.0f64..0.99,
        ramp in prop_oneof![Just(RateRamp::Cubic), Just(RateRamp::Linear), Just(RateRamp::Constant)],
    ) {
        let (li, lf) = if li <= lf { (li, lf) } else { (lf, li) };
        let s = ScheduleConfig {
            mode: Mode::Ghfp,
            alpha0,
            epsilon: alpha0 / 1e4,
            lambda_i: li,
            lambda_f: lf,
            t_max,
            goal_rate: goal,
            layer_rates: Default::default(),
            rate_ramp: ramp,
        };
        let last = t_max - 1;
        prop_assert_eq!(s.alpha(0).unwrap(), alpha0);
        prop_assert_eq!(s.alpha(last).unwrap(), 0.0);
        prop_assert_eq!(s.lambda_h(0).unwrap(), li);
        prop_assert_eq!(s.lambda_h(last).unwrap(), lf);
        prop_assert_eq!(s.rate("x", last).unwrap(), goal);
        for t in 1..t_max {
            prop_assert!(s.alpha(t).unwrap() <= s.alpha(t - 1).unwrap());
            prop_assert!(s.lambda_h(t).unwrap() >= s.lambda_h(t - 1).unwrap());
            prop_assert!(s.rate("x", t).unwrap() >= s.rate("x", t - 1).unwrap());
        }
        prop_assert!(s.alpha(t_max).is_err());
    }
}
