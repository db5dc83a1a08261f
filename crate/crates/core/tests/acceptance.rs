//! Acceptance criteria 1 to 8. Runs as a plain binary and prints one
//! pass/fail line per criterion; exits non-zero if any criterion fails.

use std::f64::consts::{LN_2, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toroid_core::entropy::{bowen_entropy, length_egr, verify_chain, BowenConfig, ChainConfig};
use toroid_core::geometry::{regular_sweep, SampledCurve, TorusPoint};
use toroid_core::invariants::{
    check_degree_multiplicativity, degree_report, geometric_degree, image_index, index_sequence, prime_divisors,
};
use toroid_core::maps::{iterate_curve, MapSpec, PatternMap};
use toroid_core::yomdin::{iterated_cover, ChartSegment};
use toroid_core::Result;

type Criterion = fn() -> Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn core() -> SampledCurve {
    SampledCurve::core_circle(1, 256)
}

fn built_in(text: &str) -> PatternMap {
    MapSpec::parse(text).and_then(|s| s.build()).expect("built-in family")
}

fn families() -> Vec<PatternMap> {
    [
        "family = \"solenoid\"\nn = 2",
        "family = \"solenoid\"\nn = 3",
        "family = \"solenoid\"\nn = -2",
        "family = \"whitehead\"",
        "family = \"extra_winding\"",
        "family = \"identity\"",
    ]
    .iter()
    .map(|t| built_in(t))
    .collect()
}

fn certified_index(f: &PatternMap, n: usize) -> Result<Option<u64>> {
    Ok(image_index(f, n)?.bounds.exact())
}

fn dyadic_solenoid() -> Result<Outcome> {
    let start = Instant::now();
    let f = PatternMap::solenoid(2, 0.1)?;
    let index = certified_index(&f, 1)?;
    let primes = prime_divisors(&index_sequence(&f, 3)?)?.primes;
    let d = degree_report(&f, 1)?;
    let egr = length_egr(&f, &core(), 12)?.egr;
    let cfg = BowenConfig::default();
    let h = bowen_entropy(&f, &cfg)?;
    let grid = cfg.grid_res * 7;
    let elapsed = start.elapsed();
    let pass = index == Some(2)
        && primes == [2]
        && d.d_geom == 2
        && d.d_hom == Some(2)
        && (egr - LN_2).abs() <= 0.05 * LN_2
        && (h.h_lower - LN_2).abs() <= 0.15
        && (h.h_upper - LN_2).abs() <= 0.15
        && grid <= 200_000
        && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "index {index:?}, primes {primes:?}, d_geom {}, d_hom {:?}, egr {egr:.4}, h in [{:.4}, {:.4}] on {grid} points, {:.1} s",
            d.d_geom,
            d.d_hom,
            h.h_lower,
            h.h_upper,
            elapsed.as_secs_f64()
        ),
    )
}

fn whitehead_data() -> Result<Outcome> {
    let f = built_in("family = \"whitehead\"");
    let profiles = regular_sweep(&iterate_curve(&f, &core(), 1)?)?;
    let all_two_zero = !profiles.is_empty() && profiles.iter().all(|p| (p.geometric_count, p.signed_count) == (2, 0));
    let primes = prime_divisors(&index_sequence(&f, 3)?)?;
    let d = degree_report(&f, 1)?;
    let pass = all_two_zero && primes.primes == [2] && f.certificate() >= 2 && d.d_hom.is_none();
    outcome(
        pass,
        format!(
            "(2, 0) at all {} regular angles: {all_two_zero}, primes {:?} with linking certificate {}, d_hom {:?}",
            profiles.len(),
            primes.primes,
            f.certificate(),
            d.d_hom
        ),
    )
}

fn degree_gap() -> Result<Outcome> {
    let start = Instant::now();
    let f = built_in("family = \"extra_winding\"");
    let cfg = ChainConfig {
        bowen: BowenConfig { grid_res: 196_000, fiber_rings: 0, ..BowenConfig::default() },
        egr_n_max: 10,
        ..ChainConfig::default()
    };
    let chain = verify_chain(&f, 1, &cfg)?;
    let d = degree_report(&f, 1)?;
    let ln3 = 3f64.ln();
    let excess = chain.geometric_excess.unwrap_or(f64::NAN);
    let pass = d.d_geom == 3 && d.d_hom == Some(1) && chain.egr.egr >= ln3 - 0.1 && excess > 0.0;
    outcome(
        pass,
        format!(
            "d_geom {}, d_hom {:?}, egr over 10 iterates {:.4} (log 3 = {ln3:.4}), log d_geom - log |d_hom| = {excess:.4}, {:.1} s",
            d.d_geom,
            d.d_hom,
            chain.egr.egr,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn length_lemma() -> Result<Outcome> {
    let mut violations = Vec::new();
    let mut checked = 0;
    for f in families() {
        let Some(index) = certified_index(&f, 1)? else {
            violations.push(format!("{}: index not certified", f.label()));
            continue;
        };
        let s = length_egr(&f, &core(), 8)?;
        for n in 0..=8 {
            checked += 1;
            let bound = TAU * (index as f64).powi(n as i32);
            if s.lengths[n] < bound - s.discretization[n] {
                violations.push(format!("{} n={n}: {} < {bound}", f.label(), s.lengths[n]));
            }
        }
    }
    outcome(violations.is_empty(), format!("{checked} (family, n) pairs, violations {violations:?}"))
}

fn random_family(rng: &mut ChaCha8Rng) -> Result<PatternMap> {
    let lambda = rng.gen_range(0.05..0.3);
    Ok(match rng.gen_range(0..5) {
        0 => PatternMap::solenoid(2, lambda)?,
        1 => PatternMap::solenoid(-3, lambda)?,
        2 => PatternMap::whitehead(lambda)?,
        3 => PatternMap::extra_winding(lambda)?,
        _ => PatternMap::identity(),
    })
}

fn multiplicativity() -> Result<Outcome> {
    let mut failures = Vec::new();
    for f in families() {
        let one = certified_index(&f, 1)?;
        for n in 1..=5usize {
            let got = certified_index(&f, n)?;
            if got.is_none() || got != one.map(|i| i.pow(n as u32)) {
                failures.push(format!("{} index n={n}: {got:?} vs {one:?}^{n}", f.label()));
            }
        }
        let (_, d) = geometric_degree(&f, 1)?;
        for r in 1..=5u32 {
            let (n_r, root) = geometric_degree(&f, r)?;
            if n_r != d.pow(r) || root != d {
                failures.push(format!("{} root r={r}: N_r {n_r}, root {root}, d {d}", f.label()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (f, g) = (random_family(&mut rng)?, random_family(&mut rng)?);
        let c = check_degree_multiplicativity(&f, &g)?;
        if !c.ok {
            failures.push(format!("{} then {}: {c:?}", f.label(), g.label()));
        }
    }
    outcome(failures.is_empty(), format!("6 families x n <= 5, r <= 5, 10 random pairs; failures {failures:?}"))
}

fn trig_curve(rng: &mut ChaCha8Rng) -> Result<SampledCurve> {
    let w: i64 = rng.gen_range(-3..=3);
    let amps: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.5)).collect();
    let phases: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..TAU)).collect();
    let amps = if w == 0 && amps.iter().all(|&a| a < 0.1) { vec![1.0, 0.0, 0.0] } else { amps };
    let samples = 400;
    let points = (0..=samples)
        .map(|i| {
            let t = TAU * i as f64 / samples as f64;
            let wobble: f64 =
                amps.iter().zip(&phases).enumerate().map(|(j, (a, b))| a * ((j + 1) as f64 * t + b).sin()).sum();
            TorusPoint { u: 0.5 * t.cos(), v: 0.5 * t.sin(), phi: w as f64 * t + wobble }
        })
        .collect();
    SampledCurve::from_lifted(points, true)
}

fn parity() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut angles, mut violations) = (0usize, 0usize);
    for _ in 0..1000 {
        let c = trig_curve(&mut rng)?;
        let profiles = regular_sweep(&c)?;
        let first = profiles.first().map(|p| p.signed_count);
        for p in &profiles {
            angles += 1;
            if Some(p.signed_count) != first || (p.geometric_count as i64 - p.signed_count).rem_euclid(2) != 0 {
                violations += 1;
            }
        }
        if profiles.is_empty() {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("1000 curves, {angles} regular angles, {violations} violations"))
}

fn covering() -> Result<Outcome> {
    let start = Instant::now();
    let f = PatternMap::solenoid(2, 0.1)?;
    let sigma = ChartSegment::core(1);
    let center = TorusPoint::core(std::f64::consts::PI);
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1usize, 2] {
        let r = iterated_cover(&f, &sigma, &center, 0.02, 3, k)?;
        let c = &r.constants;
        let markov = (2.0 * (k * k) as f64).powi(k as i32);
        let alpha = ((6 * k + 2) as f64) * (4.0 * markov).ceil();
        let growth = c.mu_k * r.m.powf(1.0 / k as f64);
        let mut ok = r.coverage_verified
            && r.normalization_verified
            && r.max_derivative_bound <= 1.0 + 1e-6
            && c.alpha_k == alpha
            && c.markov_c_k == markov;
        for level in 0..=3 {
            let bound = c.c_sigma_eps * growth.powi(level as i32);
            ok &= r.uncovered[level] == 0
                && (r.level_bounds[level] - bound).abs() <= 1e-12 * bound
                && r.level_counts[level] as f64 <= r.level_bounds[level];
        }
        pass &= ok;
        detail.push(format!(
            "k={k}: counts {:?} <= bounds [{}], uncovered {:?}, max derivative {:.6}",
            r.level_counts,
            r.level_bounds.iter().map(|b| format!("{b:.3e}")).collect::<Vec<_>>().join(", "),
            r.uncovered,
            r.max_derivative_bound
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    detail.push(format!("{:.1} s", elapsed.as_secs_f64()));
    outcome(pass, detail.join("; "))
}

fn zero_entropy() -> Result<Outcome> {
    let f = built_in("family = \"identity\"");
    let h = bowen_entropy(&f, &BowenConfig::default())?;
    let egr = length_egr(&f, &core(), 10)?.egr;
    let d = degree_report(&f, 1)?;
    let pass = h.h_lower >= -0.05 && h.h_upper <= 0.05 && egr <= 1e-6 && d.d_geom == 1 && d.primes.is_empty();
    outcome(
        pass,
        format!("h in [{}, {}], egr {egr}, d_geom {}, primes {:?}", h.h_lower, h.h_upper, d.d_geom, d.primes),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("dyadic solenoid sharpness", dyadic_solenoid),
        ("Whitehead crossing data", whitehead_data),
        ("degree gap", degree_gap),
        ("length at least 2π times index", length_lemma),
        ("multiplicativity", multiplicativity),
        ("parity and signed count", parity),
        ("covering bounds", covering),
        ("zero-entropy control", zero_entropy),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {} {name}: {} | {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
