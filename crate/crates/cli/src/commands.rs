//! The subcommands. Each one runs library operations, writes its tables and
//! returns a [`RunReport`].

use std::path::Path;

use anyhow::{bail, Result};
use log::warn;
use serde::Serialize;
use serde_json::{json, Value};
use toroid_core::entropy::{length_egr, verify_chain, ChainReport, EgrSeries};
use toroid_core::geometry::{curve_report, regular_sweep, SampledCurve};
use toroid_core::invariants::{degree_report, image_index, index_sequence, prime_divisors, CORE_SAMPLES};
use toroid_core::maps::{iterate_curve, PatternMap};
use toroid_core::yomdin::{verify_yomdin, ChartSegment};

use crate::config::ExperimentConfig;
use crate::output::{Cell, OutDir, PlotData, Table};

/// One pass/fail entry of a report.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub map_id: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    pub all_pass: bool,
    pub files: Vec<String>,
}

impl RunReport {
    fn new(command: &str, f: &PatternMap, cfg: &ExperimentConfig, results: Value, checks: Vec<Check>) -> Self {
        RunReport {
            tool: "toroid".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            map_id: f.label().to_string(),
            seed: cfg.seed(),
            config: cfg.clone(),
            all_pass: checks.iter().all(|c| c.pass),
            results,
            checks,
            files: Vec::new(),
        }
    }
}

fn core() -> SampledCurve {
    SampledCurve::core_circle(1, CORE_SAMPLES)
}

pub fn cmd_index(cfg: &ExperimentConfig, out: &mut OutDir, curve_file: Option<&Path>) -> Result<RunReport> {
    let f = cfg.map.build()?;
    let depth = cfg.run.depth.unwrap_or(3);
    if depth == 0 {
        bail!("depth must be at least 1");
    }
    let seq = index_sequence(&f, depth)?;
    let primes = prime_divisors(&seq)?;
    let mut images = Vec::new();
    let mut images_error = None;
    for n in 1..=depth {
        match image_index(&f, n) {
            Ok(i) => images.push(i),
            Err(e) => {
                warn!("image index of iterate {n} unavailable: {e}");
                images_error = Some(format!("iterate {n}: {e}"));
                break;
            }
        }
    }
    let image = iterate_curve(&f, &core(), 1)?;
    let report = curve_report(&image, 0)?;
    let profiles = regular_sweep(&image)?;
    let curve = match curve_file {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Some(curve_report(&SampledCurve::from_csv(&text)?, 0)?)
        }
        None => None,
    };

    let mut steps = Table::new(&[
        "n",
        "lower",
        "upper",
        "certified",
        "winding",
        "radial_lower",
        "radial_upper",
        "factor_lower",
        "factor_upper",
    ]);
    for i in &images {
        steps.push(vec![
            i.n.into(),
            i.bounds.lower.into(),
            i.bounds.upper.into(),
            i.bounds.certified_exact.into(),
            i.winding.into(),
            i.radial.lower.into(),
            i.radial.upper.into(),
            i.factor_lower.into(),
            i.factor_upper.into(),
        ]);
    }
    out.table("index_steps.csv", &steps)?;
    let mut crossings = Table::new(&["angle", "geometric_count", "signed_count"]);
    for p in &profiles {
        crossings.push(vec![p.angle.into(), p.geometric_count.into(), p.signed_count.into()]);
    }
    out.table("crossings.csv", &crossings)?;
    out.write("image_core.csv", &image.to_csv())?;

    let first = seq.steps[0];
    let checks = vec![
        Check::new(
            "index certified",
            first.certified().is_some(),
            format!("N in [{}, {}], m = {}", first.n_lower, first.n_upper, first.m),
        ),
        Check::new(
            "signed count equals winding",
            profiles.iter().all(|p| p.signed_count == report.winding),
            format!("winding {} over {} regular angles", report.winding, profiles.len()),
        ),
        Check::new(
            "parity",
            profiles.iter().all(|p| (p.geometric_count as i64 - p.signed_count).rem_euclid(2) == 0),
            "geometric count ≡ signed count (mod 2)".into(),
        ),
    ];
    let results = json!({
        "depth": depth,
        "sequence": seq,
        "primes": primes,
        "image": report,
        "images": images,
        "images_error": images_error,
        "curve": curve,
    });
    Ok(RunReport::new("index", &f, cfg, results, checks))
}

pub fn cmd_degree(cfg: &ExperimentConfig, _out: &mut OutDir) -> Result<RunReport> {
    let f = cfg.map.build()?;
    let d = degree_report(&f, cfg.run.r.unwrap_or(1))?;
    let mut checks = vec![Check::new("certified", d.certified, format!("N_r = {}, d_geom = {}", d.n_r, d.d_geom))];
    if let Some(h) = d.d_hom {
        checks.push(Check::new(
            "homological degree bounded by geometric",
            h.unsigned_abs() <= d.d_geom,
            format!("|{h}| <= {}", d.d_geom),
        ));
    }
    Ok(RunReport::new("degree", &f, cfg, serde_json::to_value(&d)?, checks))
}

fn egr_table(s: &EgrSeries) -> Table {
    let mut t = Table::new(&["n", "length", "samples", "discretization"]);
    for (n, ((l, m), d)) in s.lengths.iter().zip(&s.samples).zip(&s.discretization).enumerate() {
        t.push(vec![n.into(), (*l).into(), (*m).into(), (*d).into()]);
    }
    t
}

fn chain_checks(c: &ChainReport) -> Vec<Check> {
    c.links
        .iter()
        .map(|l| Check::new(&l.name, l.pass, format!("{} >= {} - {}", l.lhs, l.rhs, l.tolerance)))
        .collect()
}

pub fn cmd_entropy(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<RunReport> {
    let f = cfg.map.build()?;
    let chain = verify_chain(&f, cfg.run.r.unwrap_or(1), &cfg.chain())?;
    let e = &chain.entropy;
    let rows = chain.egr.lengths.len().max(e.spanning_counts.len() + 1);
    let mut series = Table::new(&["n", "length", "spanning_count", "separated_count"]);
    let mut plot = PlotData::new();
    for n in 0..rows {
        let length = chain.egr.lengths.get(n).copied();
        let count = |v: &Vec<u64>| n.checked_sub(1).and_then(|i| v.get(i).copied());
        let (span, sep) = (count(&e.spanning_counts), count(&e.separated_counts));
        series.push(vec![n.into(), length.into(), span.into(), sep.into()]);
        if let Some(l) = length {
            plot.push("log_length", n, l.ln());
        }
        if let Some(s) = span {
            plot.push("log_spanning", n, (s as f64).ln());
        }
        if let Some(s) = sep {
            plot.push("log_separated", n, (s as f64).ln());
        }
    }
    out.table("entropy_series.csv", &series)?;
    out.table("plot_data.csv", &plot.into_table())?;
    let checks = chain_checks(&chain);
    Ok(RunReport::new("entropy", &f, cfg, serde_json::to_value(&chain)?, checks))
}

pub fn cmd_egr(cfg: &ExperimentConfig, out: &mut OutDir, curve_file: Option<&Path>) -> Result<RunReport> {
    let f = cfg.map.build()?;
    let n_max = cfg.run.n_max.unwrap_or(10);
    let (sigma, on_core) = match curve_file {
        Some(p) => (SampledCurve::from_csv(&std::fs::read_to_string(p)?)?, false),
        None => (core(), true),
    };
    let s = length_egr(&f, &sigma, n_max)?;
    out.table("egr_series.csv", &egr_table(&s))?;
    let mut plot = PlotData::new();
    for (n, l) in s.lengths.iter().enumerate() {
        plot.push("log_length", n, l.ln());
    }
    out.table("plot_data.csv", &plot.into_table())?;
    let mut checks = Vec::new();
    if on_core {
        let one = image_index(&f, 1)?;
        if let Some(index) = one.bounds.exact() {
            let bad: Vec<usize> = (1..=n_max)
                .filter(|&n| s.lengths[n] < std::f64::consts::TAU * (index as f64).powi(n as i32) - s.discretization[n])
                .collect();
            checks.push(Check::new(
                "length at least 2π·Nⁿ",
                bad.is_empty(),
                format!("N = {index}, violations at n = {bad:?}"),
            ));
        }
    }
    Ok(RunReport::new("egr", &f, cfg, serde_json::to_value(&s)?, checks))
}

pub fn cmd_chain(cfg: &ExperimentConfig, _out: &mut OutDir) -> Result<RunReport> {
    let f = cfg.map.build()?;
    let chain = verify_chain(&f, cfg.run.r.unwrap_or(1), &cfg.chain())?;
    let checks = chain_checks(&chain);
    Ok(RunReport::new("chain", &f, cfg, serde_json::to_value(&chain)?, checks))
}

pub fn cmd_yomdin(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<RunReport> {
    let f = cfg.map.build()?;
    let yc = cfg.yomdin();
    let rep = verify_yomdin(&f, &ChartSegment::core(1), &yc)?;
    let c = &rep.cover;
    let mut levels = Table::new(&["level", "count", "bound", "oracle_members", "uncovered"]);
    for r in 0..=c.n {
        levels.push(vec![
            r.into(),
            c.level_counts[r].into(),
            c.level_bounds[r].into(),
            c.oracle_members[r].into(),
            c.uncovered[r].into(),
        ]);
    }
    out.table("yomdin_levels.csv", &levels)?;
    let mut header = vec!["t0".to_string(), "t1".to_string()];
    header.extend((1..=c.k).map(|s| format!("d{s}")));
    header.push("length".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut pieces = Table::new(&header);
    for (p, l) in c.intervals.iter().zip(&rep.piece_lengths) {
        let mut row: Vec<Cell> = vec![p.interval[0].into(), p.interval[1].into()];
        row.extend(p.derivative_bounds.iter().map(|&d| d.into()));
        row.push((*l).into());
        pieces.push(row);
    }
    out.table("yomdin_pieces.csv", &pieces)?;
    let mut plot = PlotData::new();
    for (r, &n) in c.level_counts.iter().enumerate() {
        plot.push("log_count", r, (n as f64).ln());
        plot.push("log_bound", r, c.level_bounds[r].ln());
    }
    for (n, l) in rep.egr.lengths.iter().enumerate() {
        plot.push("log_length", n, l.ln());
    }
    out.table("plot_data.csv", &plot.into_table())?;

    let checks = vec![
        Check::new(
            "cover contains the sampled preimage",
            c.coverage_verified,
            format!("uncovered per level {:?} of {:?}", c.uncovered, c.oracle_members),
        ),
        Check::new(
            "pieces normalized",
            c.normalization_verified,
            format!("largest derivative bound {}", c.max_derivative_bound),
        ),
        Check::new(
            "count within bound",
            c.count_within_bound,
            format!("counts {:?}, bounds {:?}", c.level_counts, c.level_bounds),
        ),
        Check::new(
            "piece lengths",
            rep.length_pass,
            format!(
                "max {}, total {} <= count {}, preimage {}",
                rep.max_piece_length, rep.total_piece_length, c.count, rep.preimage_length
            ),
        ),
        Check::new(
            "growth bound",
            rep.growth_pass,
            format!("egr {} <= {} + {}", rep.egr.egr, rep.growth_bound, yc.tolerance),
        ),
    ];
    Ok(RunReport::new("yomdin", &f, cfg, serde_json::to_value(&rep)?, checks))
}
