//! Feature computations checked against independent oracles: closed-form
//! arithmetic, brute-force enumeration, the simulator's untruncated tick
//! counter, and dense-grid numerical integration.

use rand_core::RngCore;
use siblink_core::math;
use siblink_core::sim::{self, derive_rng, ClockSpec, JitterSpec, VariableComponent};
use siblink_core::{
    delta_tcpraw, dynamic_range, estimate_hz, offsets, robust_skew, simulate_host, spline_pair,
    unwrap_and_relativize, IpFamily, OffsetArray, TimestampSeries,
};

fn plain_clock(hz: u32, boot_epoch: f64, seed: u64) -> ClockSpec {
    ClockSpec {
        hz,
        boot_epoch,
        skew_ppm: 0.0,
        variable: VariableComponent::None,
        jitter: JitterSpec::NONE,
        seed,
    }
}

fn minute_times(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + i as f64 * 60.0).collect()
}

#[test]
fn unwrap_matches_untruncated_counter_across_wrap() {
    // 1000 Hz counter crossing 2^32 during a 10 h window
    for seed in 0..10u64 {
        let mut rng = derive_rng(seed, 77);
        // boot so that the counter sits just below 2^32 at window start
        let ticks_to_wrap = sim::uniform(&mut rng, 1e6, 3e7);
        let start = 1_700_000_000.0;
        let boot = start - (4294967296.0 - ticks_to_wrap) / 1000.0;
        let clock = plain_clock(1000, boot, seed);
        let times = minute_times(start, 600);
        let series = simulate_host(&clock, "10.0.0.1", IpFamily::V4, &times);

        let unwrapped = unwrap_and_relativize(&series).unwrap();
        assert!(unwrapped.wrap_count >= 1, "seed {seed}: no wrap happened");
        let base = clock.raw_ticks(times[0]);
        for (i, &t) in times.iter().enumerate() {
            let expected = (clock.raw_ticks(t) - base) as f64;
            assert_eq!(unwrapped.v[i], expected, "seed {seed} sample {i}");
        }
    }
}

#[test]
fn hz_estimate_matches_closed_form_ols_under_noise() {
    // v = 1000 x + U(-2, 2) ticks over 600 points; oracle is the
    // non-centered OLS formula, an independent algebraic route.
    let mut rng = derive_rng(3, 1);
    let x: Vec<f64> = (0..600).map(|i| i as f64 * 60.0).collect();
    let v: Vec<f64> = x
        .iter()
        .map(|&t| 1000.0 * t + (math::unit_half_open(rng.next_u64()) * 4.0 - 2.0))
        .collect();
    let est = estimate_hz(&x, &v).unwrap();
    assert_eq!(est.hz, 1000);
    assert!(est.r_squared > 0.9);

    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sv: f64 = v.iter().sum();
    let sxv: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let oracle_slope = (n * sxv - sx * sv) / (n * sxx - sx * sx);
    assert!(
        (est.raw_slope - oracle_slope).abs() < 1e-6 * oracle_slope.abs(),
        "impl {} oracle {}",
        est.raw_slope,
        oracle_slope
    );
}

#[test]
fn delta_tcpraw_near_zero_for_shared_clock_with_late_v6_start() {
    // same clock; v6 measurement starts 30 s after v4: the receive-time
    // difference cancels the tick difference up to skew*30s + quantization
    let clock = ClockSpec {
        hz: 100,
        boot_epoch: 1_699_000_000.0,
        skew_ppm: 50.0,
        variable: VariableComponent::None,
        jitter: JitterSpec::NONE,
        seed: 9,
    };
    let start = 1_700_000_000.0;
    let s4 = simulate_host(&clock, "10.0.0.1", IpFamily::V4, &minute_times(start, 60));
    let s6 = simulate_host(&clock, "2001:db8::1", IpFamily::V6, &minute_times(start + 30.0, 60));
    let delta = delta_tcpraw(&s4, &s6, 100.0, 100.0).unwrap();
    assert!(delta < 0.02, "delta {delta}");
}

#[test]
fn delta_tcpraw_three_days_apart_at_1000hz() {
    // counters started ~3 days apart -> delta around 259200 s
    let start = 1_700_000_000.0;
    let clock4 = plain_clock(1000, start - 1_000_000.0, 1);
    let clock6 = plain_clock(1000, start - 1_000_000.0 - 259_200.0, 2);
    let s4 = simulate_host(&clock4, "10.0.0.1", IpFamily::V4, &minute_times(start, 60));
    let s6 = simulate_host(&clock6, "2001:db8::1", IpFamily::V6, &minute_times(start, 60));
    let delta = delta_tcpraw(&s4, &s6, 1000.0, 1000.0).unwrap();
    assert!((delta - 259_200.0).abs() < 1.0, "delta {delta}");
}

#[test]
fn offsets_show_ppm_ramp() {
    // 50 ppm fast clock -> y ≈ 0.05 ms/s ramp against the nominal rate
    let clock = ClockSpec {
        hz: 1000,
        boot_epoch: 1_700_000_000.0 - 3600.0,
        skew_ppm: 50.0,
        variable: VariableComponent::None,
        jitter: JitterSpec::NONE,
        seed: 4,
    };
    let series =
        simulate_host(&clock, "10.0.0.1", IpFamily::V4, &minute_times(1_700_000_000.0, 600));
    let u = unwrap_and_relativize(&series).unwrap();
    let est = estimate_hz(&u.x, &u.v).unwrap();
    assert_eq!(est.hz, 1000);
    let off = offsets(&u.x, &u.v, est.hz as f64, est.r_squared);
    // analytic ramp from the ppm definition, tick quantization below 1 ms
    for (i, (&x, &y)) in off.xs.iter().zip(&off.ys).enumerate() {
        let expected = 0.05 * x;
        assert!((y - expected).abs() < 1.2, "sample {i}: y={y} expected≈{expected}");
    }
}

#[test]
fn offsets_show_full_second_step() {
    // +1 s ntpd-style jump at x = 18000 appears as a 1000 ms offset step
    let start = 1_700_000_000.0;
    let clock = ClockSpec {
        hz: 1000,
        boot_epoch: start - 100.0,
        skew_ppm: 0.0,
        variable: VariableComponent::Steps(vec![sim::StepEvent {
            at_s: 100.0 + 18_000.0,
            jump_ms: 1000.0,
        }]),
        jitter: JitterSpec::NONE,
        seed: 5,
    };
    let series = simulate_host(&clock, "10.0.0.1", IpFamily::V4, &minute_times(start, 600));
    let u = unwrap_and_relativize(&series).unwrap();
    let off = offsets(&u.x, &u.v, 1000.0, 1.0);
    let before: f64 = off.ys[290..299].iter().sum::<f64>() / 9.0;
    let after: f64 = off.ys[302..311].iter().sum::<f64>() / 9.0;
    assert!(
        (after - before - 1000.0).abs() < 5.0,
        "step {} -> {}",
        before,
        after
    );
}

/// Independent Theil-Sen oracle: explicit double loop and its own median.
fn brute_force_theil_sen(x: &[f64], y: &[f64]) -> f64 {
    let mut slopes = Vec::new();
    for i in 0..x.len() {
        for j in 0..x.len() {
            if j > i && x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = slopes.len();
    if n % 2 == 1 {
        slopes[n / 2]
    } else {
        (slopes[n / 2 - 1] + slopes[n / 2]) / 2.0
    }
}

#[test]
fn robust_skew_ignores_latency_spikes() {
    let mut rng = derive_rng(5, 2);
    let x: Vec<f64> = (0..200).map(|i| i as f64 * 60.0).collect();
    let mut y: Vec<f64> = x.iter().map(|&t| 0.01 * t).collect();
    for i in (0..200).step_by(10) {
        y[i] += 500.0 + math::unit_half_open(rng.next_u64()) * 100.0;
    }
    let off = OffsetArray { xs: x.clone(), ys: y.clone(), hz: 1000.0, r2_hz: 1.0 };
    let skew = robust_skew(&off).unwrap();
    assert!((skew.alpha - 0.01).abs() < 0.0005, "alpha {}", skew.alpha);
    assert_eq!(skew.alpha, brute_force_theil_sen(&x, &y));
}

#[test]
fn sinusoidal_offsets_fail_the_linearity_gate() {
    // wander amplitude far above any residual line -> r2_skew below 0.81
    let x: Vec<f64> = (0..600).map(|i| i as f64 * 60.0).collect();
    let y: Vec<f64> = x.iter().map(|&t| 80.0 * math::sin(t / 3000.0)).collect();
    let off = OffsetArray { xs: x, ys: y, hz: 1000.0, r2_hz: 1.0 };
    let skew = robust_skew(&off).unwrap();
    assert!(skew.r2_skew < 0.81, "r2_skew {}", skew.r2_skew);
}

#[test]
fn dynamic_range_trims_both_tails_of_a_ramp() {
    // linear 0..100 ms over 600 points; floor(0.025*600)=15 cut per side
    let xs: Vec<f64> = (0..600).map(|i| i as f64).collect();
    let ys: Vec<f64> = (0..600).map(|i| 100.0 * i as f64 / 599.0).collect();
    let off = OffsetArray { xs, ys: ys.clone(), hz: 100.0, r2_hz: 1.0 };
    let rng = dynamic_range(&off).unwrap();
    // direct oracle on the generated array
    let oracle = ys[599 - 15] - ys[15];
    assert_eq!(rng, oracle);
    assert!((rng - 95.0).abs() < 0.2, "rng {rng}");
}

#[test]
fn spline_gap_matches_dense_grid_integral_oracle() {
    // ten seeded variable-skew pairs; oracle refits with the public spline
    // API, integrates |s4 - s6 - c| on a 10x denser trapezoidal grid and
    // finds the shift by ternary search instead of the median.
    for seed in 0..10u64 {
        let mut rng = derive_rng(seed, 31);
        let start = 1_700_000_000.0;
        let amp = sim::uniform(&mut rng, 20.0, 200.0);
        let period = sim::uniform(&mut rng, 7200.0, 21_600.0);
        let phase = sim::uniform(&mut rng, 0.0, std::f64::consts::TAU);
        let clock = ClockSpec {
            hz: 250,
            boot_epoch: start - 7200.0,
            skew_ppm: sim::uniform(&mut rng, -5.0, 5.0),
            variable: VariableComponent::Sinusoid {
                amplitude_ms: amp,
                period_s: period,
                phase_rad: phase,
            },
            jitter: JitterSpec { min_s: 0.001, mean_extra_s: 0.002, cap_s: 0.010 },
            seed: rng.next_u64(),
        };
        let s4 = simulate_host(&clock, "10.0.0.1", IpFamily::V4, &minute_times(start, 600));
        let mut clock6 = clock.clone();
        clock6.seed = clock.seed.wrapping_add(1);
        let s6 =
            simulate_host(&clock6, "2001:db8::1", IpFamily::V6, &minute_times(start + 20.0, 600));

        let make_off = |series: &TimestampSeries| {
            let u = unwrap_and_relativize(series).unwrap();
            let est = estimate_hz(&u.x, &u.v).unwrap();
            offsets(&u.x, &u.v, est.hz as f64, est.r_squared)
        };
        let off4 = make_off(&s4);
        let off6 = make_off(&s6);
        let gap = spline_pair(&off4, &off6).unwrap();

        // --- oracle ---
        let lo = off4.xs[0].max(off6.xs[0]);
        let hi = off4.xs[off4.xs.len() - 1].min(off6.xs[off6.xs.len() - 1]);
        let window = |off: &OffsetArray| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (&x, &y) in off.xs.iter().zip(&off.ys) {
                if x >= lo && x <= hi {
                    xs.push(x);
                    ys.push(y);
                }
            }
            siblink_core::CubicSpline::fit_least_squares(&xs, &ys, 13).unwrap()
        };
        let f4 = window(&off4);
        let f6 = window(&off6);
        let grid_n = 10_001usize;
        let step = (hi - lo) / (grid_n - 1) as f64;
        let diffs: Vec<f64> = (0..grid_n)
            .map(|i| {
                let g = lo + step * i as f64;
                f4.eval(g) - f6.eval(g)
            })
            .collect();
        // trapezoidal mean of |d - c| over the window
        let objective = |c: f64| {
            let mut acc = 0.0;
            for w in diffs.windows(2) {
                acc += ((w[0] - c).abs() + (w[1] - c).abs()) / 2.0 * step;
            }
            acc / (hi - lo)
        };
        // ternary search on the convex objective
        let (mut a, mut b) = (
            diffs.iter().cloned().fold(f64::INFINITY, f64::min),
            diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if objective(m1) < objective(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let oracle = objective((a + b) / 2.0);
        let rel = (gap.spl_diff - oracle).abs() / oracle.max(1e-9);
        assert!(rel < 0.01, "seed {seed}: spl_diff {} vs oracle {} (rel {rel})", gap.spl_diff, oracle);
    }
}
