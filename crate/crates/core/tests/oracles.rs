//! Checks against independently computed references.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use uplink_qkd::coincidence::{find_coincidences, rescan_windows, stats_to_rates, CoincidenceStats};
use uplink_qkd::overpass::{optimize_point, Bounds};
use uplink_qkd::params::{ChannelParams, DetectorParams, SourceParams};
use uplink_qkd::rates::{estimate, window_efficiency, CountTable};
use uplink_qkd::timetag::{synthesize, Party, TagEvent, TagStream};
use uplink_qkd::{binary_entropy, LinkParams, TwoQubitState};

/// h(p) ln 2 = -p ln p + p - sum_{k>=2} p^k / (k (k-1)), valid for p <= 1/2.
fn entropy_series(p: f64) -> f64 {
    let p = p.min(1.0 - p);
    if p == 0.0 {
        return 0.0;
    }
    let mut terms = Vec::new();
    let mut pk = p;
    for k in 2..400u32 {
        pk *= p;
        let t = pk / (k as f64 * (k as f64 - 1.0));
        if t < 1e-22 {
            break;
        }
        terms.push(t);
    }
    // Smallest terms first.
    let tail: f64 = terms.iter().rev().sum();
    (-p * p.ln() + p - tail) / std::f64::consts::LN_2
}

#[test]
fn binary_entropy_matches_series() {
    for i in 0..1000 {
        let p = i as f64 / 999.0;
        let h = binary_entropy(p).unwrap();
        assert!((h - entropy_series(p)).abs() <= 1e-12, "p = {p}: {h} vs {}", entropy_series(p));
    }
    // Reference values from a 40-digit evaluation.
    assert!((binary_entropy(0.11).unwrap() - 0.499_915_958_164_528).abs() < 1e-14);
    assert!((binary_entropy(0.017).unwrap() - 0.124_247_619_328_04).abs() < 1e-13);
    assert!((binary_entropy(0.039).unwrap() - 0.237_688_289_562_89).abs() < 1e-13);
}

/// Mass of a zero-mean Gaussian inside [-tcc/2, tcc/2] by the trapezoid rule.
fn gaussian_mass(tcc: f64, sigma: f64) -> f64 {
    let n = 20_000;
    let a = tcc / 2.0;
    let h = 2.0 * a / n as f64;
    let pdf = |x: f64| (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let inner: f64 = (1..n).map(|i| pdf(-a + i as f64 * h)).sum();
    h * (inner + 0.5 * (pdf(-a) + pdf(a)))
}

#[test]
fn window_efficiency_matches_trapezoid() {
    let sigma = 300e-12;
    for i in 0..50 {
        let tcc = sigma * 0.1 * (i + 1) as f64;
        let got = window_efficiency(tcc, sigma);
        let want = gaussian_mass(tcc, sigma);
        assert!((got - want).abs() < 1e-6, "tcc = {tcc}: {got} vs {want}");
    }
    let at = window_efficiency(2.7718 * sigma, sigma);
    assert!((at - gaussian_mass(2.7718 * sigma, sigma)).abs() < 1e-6);
    assert!((at - 0.834).abs() < 1e-3);
}

fn brute_force(a: &[TagEvent], b: &[TagEvent], window_ps: u64) -> (u64, CountTable, CountTable) {
    let mut used = vec![false; b.len()];
    let (mut n, mut z, mut x) = (0, CountTable::default(), CountTable::default());
    for ea in a {
        for (j, eb) in b.iter().enumerate() {
            let d = ea.timestamp_ps.abs_diff(eb.timestamp_ps);
            if !used[j] && 2 * d <= window_ps {
                used[j] = true;
                n += 1;
                if ea.channel / 2 == eb.channel / 2 {
                    let t = if ea.channel < 2 { &mut z } else { &mut x };
                    t.add((ea.channel % 2) as usize, (eb.channel % 2) as usize);
                }
                break;
            }
        }
    }
    (n, z, x)
}

fn random_stream(rng: &mut StdRng, party: Party, n: usize, span_ps: u64) -> TagStream {
    let mut ts: Vec<u64> = (0..n).map(|_| rng.random_range(0..span_ps)).collect();
    ts.sort_unstable();
    TagStream {
        party,
        duration_s: 1.0,
        seed: 0,
        events: ts.into_iter().map(|t| TagEvent::new(t, rng.random_range(0..4))).collect(),
    }
}

#[test]
fn engine_equals_brute_force() {
    for seed in 0..100 {
        let mut rng = StdRng::seed_from_u64(seed);
        let n = rng.random_range(0..=1000);
        let m = rng.random_range(0..=1000);
        // Dense spans force contention between candidates.
        let span = rng.random_range(100..1_000_000);
        let a = random_stream(&mut rng, Party::Satellite, n, span);
        let b = random_stream(&mut rng, Party::Fiber, m, span);
        let window_ps = rng.random_range(0..3000u64);
        let s = find_coincidences(&a, &b, window_ps as f64 * 1e-12).unwrap();
        let (pairs, z, x) = brute_force(&a.events, &b.events, window_ps);
        assert_eq!(s.pairs_total, pairs, "seed {seed}");
        assert_eq!(s.counts_z, z, "seed {seed}");
        assert_eq!(s.counts_x, x, "seed {seed}");
        let swapped = find_coincidences(&b, &a, window_ps as f64 * 1e-12).unwrap();
        assert_eq!(swapped.pairs_total, pairs, "seed {seed}");
    }
}

#[test]
fn rates_from_example_tables() {
    let table = CountTable([[99, 1], [1, 99]]);
    let stats = CoincidenceStats {
        window_s: 1e-9,
        pairs_total: 1000,
        basis_matched: 400,
        counts_z: table,
        counts_x: table,
        singles_sat: 10_000,
        singles_fib: 10_000,
        duration_s: 1.0,
    };
    let r = stats_to_rates(&stats).unwrap();
    assert_eq!(r.qber, 0.01);
    assert_eq!(r.qx, 0.01);
    let h = -(0.01f64 * 0.01f64.log2() + 0.99 * 0.99f64.log2());
    assert!((r.skr - 500.0 * (1.0 - 2.0 * h)).abs() < 1e-9);
    assert!((r.heralding - 0.1).abs() < 1e-15);
}

fn noiseless_link() -> LinkParams {
    let det = DetectorParams {
        efficiency: 1.0,
        dark_rate_hz: 0.0,
        jitter_sigma_s: 0.0,
        dead_time_s: 0.0,
    };
    LinkParams {
        source: SourceParams {
            brightness_hz_per_mw: 1e4,
            pump_power_mw: 1.0,
            heralding_sat: 1.0,
            heralding_fib: 1.0,
            intrinsic_qber: 0.0,
            intrinsic_qx: 0.0,
        },
        det_sat: det.clone(),
        det_fib: det,
        channel: ChannelParams {
            fiber_length_km: 0.0,
            ..ChannelParams::default()
        },
        tagger_jitter_s: 0.0,
    }
}

#[test]
fn noiseless_streams_give_half_the_pairs_as_key() {
    let link = noiseless_link();
    let state = TwoQubitState::from_error_rates(0.0, 0.0).unwrap();
    let (a, b) = synthesize(&link, &state, 1.0, 3).unwrap();
    let all = rescan_windows(&a, &b, &[0.0, 1e-12, 1e-10, 1e-9, 2e-9]).unwrap();
    // With zero jitter every pair lands at one timestamp; any window > 0 and
    // even a zero window see the same pairs, barring accidental ties.
    for s in &all[1..] {
        assert_eq!(s.pairs_total, all[1].pairs_total);
        assert_eq!(s.counts_z, all[1].counts_z);
    }
    assert_eq!(all[1].pairs_total as usize, a.len());
    let r = stats_to_rates(&all[1]).unwrap();
    assert_eq!(r.qber, 0.0);
    assert_eq!(r.qx, 0.0);
    assert_eq!(r.skr, r.cc_total / 2.0);
}

#[test]
fn key_rate_versus_window_has_interior_maximum() {
    let link = LinkParams::default().with_pump_mw(5.0).with_freespace_loss_db(30.0);
    let state = TwoQubitState::from_error_rates(0.017, 0.039).unwrap();
    let (a, b) = synthesize(&link, &state, 2.0, 11).unwrap();
    let windows: Vec<f64> = (1..=40).map(|i| i as f64 * 50e-12).collect();
    let skr: Vec<f64> = rescan_windows(&a, &b, &windows)
        .unwrap()
        .iter()
        .map(|s| stats_to_rates(s).map(|r| r.skr).unwrap_or(0.0))
        .collect();
    let (imax, &best) = skr
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    assert!(imax > 0 && imax < windows.len() - 1, "peak at {imax}: {skr:?}");
    assert!(best > skr[0] && best > *skr.last().unwrap());
}

#[test]
fn optimizer_matches_dense_grid() {
    let link = LinkParams::default().with_freespace_loss_db(35.0);
    let pump = Bounds::new(0.1, 100.0);
    let window = Bounds::new(50e-12, 5e-9);
    let opt = optimize_point(&link, pump, window).unwrap();

    let n = 100;
    let log_point = |b: Bounds, i: usize| (b.lo.ln() + (b.hi.ln() - b.lo.ln()) * i as f64 / (n - 1) as f64).exp();
    let mut dense: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let l = link.clone().with_pump_mw(log_point(pump, i)).with_window_s(log_point(window, j));
            dense = dense.max(estimate(&l).unwrap().skr);
        }
    }
    assert!(dense > 0.0);
    assert!(opt.skr >= dense * (1.0 - 1e-3), "optimizer {} vs dense grid {dense}", opt.skr);
    assert!(pump.lo < opt.pump_mw && opt.pump_mw < pump.hi, "{opt:?}");
}
