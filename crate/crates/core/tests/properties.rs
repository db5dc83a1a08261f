//! Property tests over randomly generated curves, maps and polynomials.

use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use toroid_core::entropy::{bowen_entropy, BowenConfig};
use toroid_core::geometry::{
    certified_index_bounds, curve_length, monotone_runs, monotonicity_intervals, regular_sweep, winding_number, SampledCurve,
    TorusPoint,
};
use toroid_core::invariants::{image_index, integer_root};
use toroid_core::maps::{iterate_curve, stream_iterate, PatternMap, DEFAULT_STREAM_BUDGET};
use toroid_core::yomdin::{iterated_cover, markov_bound, ChartSegment};

/// A smooth closed curve: lift `w·t + Σ aⱼ sin(j·t + bⱼ)` with a small
/// fiber wobble, sampled at `samples` points.
fn trig_curve(w: i64, amps: &[f64], phases: &[f64], samples: usize) -> SampledCurve {
    let points = (0..=samples)
        .map(|i| {
            let t = TAU * i as f64 / samples as f64;
            let wobble: f64 = amps.iter().zip(phases).enumerate().map(|(j, (a, b))| a * ((j + 1) as f64 * t + b).sin()).sum();
            TorusPoint { u: 0.4 * (2.0 * t).cos(), v: 0.3 * t.sin(), phi: w as f64 * t + wobble }
        })
        .collect();
    SampledCurve::from_lifted(points, true).unwrap()
}

fn curve_strategy() -> impl Strategy<Value = SampledCurve> {
    (-3i64..=3, prop::collection::vec(0.0f64..1.5, 3), prop::collection::vec(0.0f64..TAU, 3))
        .prop_filter("curve must leave constant angle", |(w, a, _)| *w != 0 || a.iter().any(|&x| x > 0.1))
        .prop_map(|(w, a, b)| trig_curve(w, &a, &b, 400))
}

fn family(choice: u8, n: i64, lambda: f64) -> PatternMap {
    match choice % 4 {
        0 => PatternMap::solenoid(n, lambda).unwrap(),
        1 => PatternMap::whitehead(lambda).unwrap(),
        2 => PatternMap::extra_winding(lambda).unwrap(),
        _ => PatternMap::identity(),
    }
}

fn map_strategy() -> impl Strategy<Value = PatternMap> {
    (0u8..4, prop_oneof![-3i64..=-1, 1i64..=3], 0.05f64..0.3).prop_map(|(c, n, l)| family(c, n, l))
}

/// Sup norm of `coeffs` and of its first `k` derivatives on a dense grid of
/// `[0, 1]`, by Horner evaluation.
fn sampled_sups(coeffs: &[f64], k: usize) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    let mut sups = Vec::new();
    for _ in 0..=k {
        let sup = (0..=4000)
            .map(|i| {
                let t = i as f64 / 4000.0;
                c.iter().rev().fold(0.0, |acc, x| acc * t + x).abs()
            })
            .fold(0.0, f64::max);
        sups.push(sup);
        c = c.iter().enumerate().skip(1).map(|(j, x)| j as f64 * x).collect();
        if c.is_empty() {
            c.push(0.0);
        }
    }
    sups
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn signed_counts_are_constant_and_share_parity(c in curve_strategy()) {
        let w = winding_number(&c).unwrap();
        let profiles = regular_sweep(&c).unwrap();
        prop_assert!(!profiles.is_empty());
        prop_assert!(monotonicity_intervals(&c).unwrap() >= 1);
        let runs = monotone_runs(c.lift());
        for p in &profiles {
            prop_assert_eq!(p.signed_count, w);
            prop_assert_eq!((p.geometric_count as i64 - w).rem_euclid(2), 0);
            // a monotone run crosses the disk once per lattice point it spans
            let reachable: u64 = runs
                .iter()
                .map(|&(a, b)| {
                    let (lo, hi) = (a.min(b), a.max(b));
                    (((hi - p.angle) / TAU).floor() - ((lo - p.angle) / TAU).ceil() + 1.0).max(0.0) as u64
                })
                .sum();
            prop_assert!(p.geometric_count <= reachable);
        }
        let b = certified_index_bounds(&c, 0).unwrap();
        prop_assert!(b.lower <= b.upper);
        prop_assert_eq!((b.upper - b.lower) % 2, 0);
    }

    #[test]
    fn markov_bound_holds_for_random_polynomials(
        k in 1usize..=3,
        coeffs in prop::collection::vec(-10.0f64..10.0, 4),
    ) {
        let coeffs = &coeffs[..=k];
        let sups = sampled_sups(coeffs, k);
        prop_assume!(sups[0] > 1e-6);
        for s in 1..=k {
            prop_assert!(sups[s] <= markov_bound(k) * sups[0], "s = {}: {} > {} * {}", s, sups[s], markov_bound(k), sups[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn monotone_curves_meet_every_disk_w_times(w in prop_oneof![-4i64..=-1, 1i64..=4], a in 0.0f64..0.2, b in 0.0f64..TAU) {
        // |a·cos| < 1 ≤ |w| keeps the lift strictly monotone
        let c = trig_curve(w, &[a], &[b], 300);
        for p in regular_sweep(&c).unwrap() {
            prop_assert_eq!(p.geometric_count, w.unsigned_abs());
        }
    }

    #[test]
    fn midpoints_never_shorten(c in curve_strategy()) {
        let pts = c.points();
        let mut refined = Vec::with_capacity(2 * pts.len());
        for w in pts.windows(2) {
            refined.push(w[0]);
            refined.push(TorusPoint {
                u: 0.5 * (w[0].u + w[1].u),
                v: 0.5 * (w[0].v + w[1].v),
                phi: 0.5 * (w[0].phi + w[1].phi),
            });
        }
        refined.push(pts[pts.len() - 1]);
        let fine = SampledCurve::from_lifted(refined, true).unwrap();
        prop_assert!(curve_length(&fine) >= curve_length(&c) * (1.0 - 1e-14));
    }

    #[test]
    fn maps_stay_inside_by_their_margin(f in map_strategy(), r in 0.0f64..1.0, a in 0.0f64..TAU, phi in -PI..PI) {
        let p = TorusPoint::new(r * a.cos(), r * a.sin(), phi).unwrap();
        let q = f.apply(&p);
        prop_assert!(1.0 - q.fiber_norm_sq().sqrt() >= f.margin() - 1e-12);
    }

    #[test]
    fn integer_roots_invert_powers(d in 1u64..=40, r in 1u32..=5) {
        prop_assert_eq!(integer_root(d.pow(r), r).unwrap(), d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn streaming_agrees_with_materialized_iterates(f in map_strategy(), n in 0usize..=3) {
        let core = SampledCurve::core_circle(1, 64);
        let image = iterate_curve(&f, &core, n).unwrap();
        let stats = stream_iterate(&f, &core, n, DEFAULT_STREAM_BUDGET).unwrap();
        let length = curve_length(&image);
        prop_assert!((stats.length - length).abs() <= 1e-9 * length);
        prop_assert_eq!(stats.samples(), image.len());
        prop_assert_eq!(stats.sweep.winding(), winding_number(&image).unwrap());
        prop_assert_eq!(winding_number(&image).unwrap(), f.degree().pow(n as u32));
    }

    #[test]
    fn solenoid_indices_are_powers(n in prop_oneof![-4i64..=-2, 2i64..=4], lambda in 0.05f64..0.3, k in 1usize..=3) {
        let f = PatternMap::solenoid(n, lambda).unwrap();
        let i = image_index(&f, k).unwrap();
        prop_assert_eq!(i.bounds.exact(), Some(n.unsigned_abs().pow(k as u32)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn finer_grids_stay_within_the_bracket(seed in 0u64..1000, choice in 0u8..2) {
        let f = if choice == 0 { PatternMap::solenoid(2, 0.1).unwrap() } else { PatternMap::identity() };
        let cfg = BowenConfig { epsilon: 0.2, n_max: 6, grid_res: 8000, fiber_rings: 1, seed };
        let coarse = bowen_entropy(&f, &cfg).unwrap();
        let fine = bowen_entropy(&f, &BowenConfig { grid_res: 16000, ..cfg }).unwrap();
        prop_assert!(coarse.h_lower <= coarse.h_upper && fine.h_lower <= fine.h_upper);
        prop_assert!(fine.h_lower - coarse.h_lower <= coarse.h_upper - coarse.h_lower + 1e-12);
        for c in [&coarse, &fine] {
            prop_assert!(c.spanning_counts.windows(2).all(|w| w[0] <= w[1]));
            for (sep, span) in c.separated_counts.iter().zip(&c.spanning_counts) {
                prop_assert!(*sep as f64 <= c.greedy_factor * *span as f64);
            }
        }
    }

    #[test]
    fn covers_contain_the_sampled_preimage(
        n_wind in 2i64..=3,
        t in 0.0f64..1.0,
        k in 1usize..=2,
        depth in 1usize..=2,
        epsilon in prop_oneof![Just(0.02), Just(0.03)],
    ) {
        let f = PatternMap::solenoid(n_wind, 0.1).unwrap();
        let sigma = ChartSegment::core(1);
        let r = iterated_cover(&f, &sigma, &sigma.point_at(t), epsilon, depth, k).unwrap();
        prop_assert!(r.coverage_verified, "uncovered {:?}", r.uncovered);
        prop_assert!(r.uncovered.iter().all(|&u| u == 0));
        prop_assert!(r.normalization_verified && r.max_derivative_bound <= 1.0 + 1e-6);
        prop_assert!(r.count_within_bound && (r.count as f64) <= r.bound);
    }
}
