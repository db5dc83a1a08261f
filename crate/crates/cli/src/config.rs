//! Experiment configuration: a map file, optional run settings stored next
//! to it, and command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use toroid_core::entropy::{BowenConfig, ChainConfig, MAX_GRID_POINTS};
use toroid_core::geometry::TorusPoint;
use toroid_core::maps::{parse_config, MapSpec};
use toroid_core::yomdin::YomdinConfig;

/// Largest iterate count accepted anywhere.
pub const MAX_ITERATES: usize = 16;

/// Settings that may appear under `[run]` or on the command line. Every
/// field is optional; command defaults fill the gaps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    /// Seed of the grid jitter used by the entropy estimator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bowen radius, or the dynamical-ball radius for `yomdin`.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Largest Bowen time, or the iterate count for `egr`.
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Angular resolution of the entropy grid.
    #[arg(long, global = true)]
    pub grid_res: Option<usize>,
    /// Hexagonal rings of the entropy grid's fiber stencil.
    #[arg(long, global = true)]
    pub fiber_rings: Option<usize>,
    /// Smoothness order of the covering argument (1, 2 or 3).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Number of index steps, or the depth of the dynamical ball.
    #[arg(long, visible_alias = "n", global = true)]
    pub depth: Option<usize>,
    /// Exponent of the degree computation.
    #[arg(long, global = true)]
    pub r: Option<u32>,
    /// Center of the dynamical ball as chart coordinates `u,v,phi`.
    #[arg(long, value_parser = parse_triple, global = true)]
    pub ball_center: Option<[f64; 3]>,
    /// Iterates used for the length growth rate inside `chain` and `yomdin`.
    #[arg(long, global = true)]
    pub egr_n_max: Option<usize>,
    /// Slack on every estimated inequality.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected u,v,phi, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
    }
    Ok(out)
}

impl RunOptions {
    /// Fields set here win over those of `base`.
    pub fn over(&self, base: &RunOptions) -> RunOptions {
        RunOptions {
            seed: self.seed.or(base.seed),
            epsilon: self.epsilon.or(base.epsilon),
            n_max: self.n_max.or(base.n_max),
            grid_res: self.grid_res.or(base.grid_res),
            fiber_rings: self.fiber_rings.or(base.fiber_rings),
            k: self.k.or(base.k),
            depth: self.depth.or(base.depth),
            r: self.r.or(base.r),
            ball_center: self.ball_center.or(base.ball_center),
            egr_n_max: self.egr_n_max.or(base.egr_n_max),
            tolerance: self.tolerance.or(base.tolerance),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    map: MapSpec,
    #[serde(default)]
    run: RunOptions,
}

/// A validated experiment: the map and the merged run settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    pub run: RunOptions,
}

fn has_map_table(text: &str) -> bool {
    if text.trim_start().starts_with('{') {
        serde_json::from_str::<serde_json::Value>(text).is_ok_and(|v| v.get("map").is_some())
    } else {
        text.parse::<toml::Table>().is_ok_and(|t| t.contains_key("map"))
    }
}

impl ExperimentConfig {
    /// Parse either a bare map description or a document with a `map` table
    /// and an optional `run` table.
    pub fn parse(text: &str, overrides: &RunOptions) -> Result<Self> {
        let (map, file_run) = if has_map_table(text) {
            let f: ExperimentFile = parse_config(text)?;
            (f.map, f.run)
        } else {
            (MapSpec::parse(text)?, RunOptions::default())
        };
        let cfg = ExperimentConfig { map, run: overrides.over(&file_run) };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &RunOptions) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    fn validate(&self) -> Result<()> {
        let r = &self.run;
        if let Some(e) = r.epsilon {
            if !(e > 0.0 && e < 1.0) {
                bail!("epsilon must lie in (0, 1), got {e}");
            }
        }
        for (name, v, lo) in [("n_max", r.n_max, 2), ("depth", r.depth, 0), ("egr_n_max", r.egr_n_max, 2)] {
            if let Some(v) = v {
                if v < lo || v > MAX_ITERATES {
                    bail!("{name} must lie in {lo}..={MAX_ITERATES}, got {v}");
                }
            }
        }
        if let Some(g) = r.grid_res {
            if g == 0 || g > MAX_GRID_POINTS {
                bail!("grid_res must lie in 1..={MAX_GRID_POINTS}, got {g}");
            }
        }
        if let Some(rings) = r.fiber_rings {
            if rings > 8 {
                bail!("fiber_rings must be at most 8, got {rings}");
            }
        }
        if let Some(r) = r.r {
            if r == 0 || r > 8 {
                bail!("r must lie in 1..=8, got {r}");
            }
        }
        if let Some(t) = r.tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                bail!("tolerance must be finite and non-negative, got {t}");
            }
        }
        if let Some([u, v, phi]) = r.ball_center {
            TorusPoint::new(u, v, phi)?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }

    pub fn bowen(&self) -> BowenConfig {
        let d = BowenConfig::default();
        BowenConfig {
            epsilon: self.run.epsilon.unwrap_or(d.epsilon),
            n_max: self.run.n_max.unwrap_or(d.n_max),
            grid_res: self.run.grid_res.unwrap_or(d.grid_res),
            fiber_rings: self.run.fiber_rings.unwrap_or(d.fiber_rings),
            seed: self.seed(),
        }
    }

    pub fn chain(&self) -> ChainConfig {
        let d = ChainConfig::default();
        ChainConfig {
            bowen: self.bowen(),
            egr_n_max: self.run.egr_n_max.unwrap_or(d.egr_n_max),
            tolerance: self.run.tolerance.unwrap_or(d.tolerance),
        }
    }

    pub fn yomdin(&self) -> YomdinConfig {
        let d = YomdinConfig::default();
        YomdinConfig {
            k: self.run.k.unwrap_or(d.k),
            n: self.run.depth.unwrap_or(d.n),
            epsilon: self.run.epsilon.unwrap_or(d.epsilon),
            center: self.run.ball_center.map(|[u, v, phi]| TorusPoint { u, v, phi }),
            bowen: BowenConfig { epsilon: BowenConfig::default().epsilon, ..self.bowen() },
            egr_n_max: self.run.egr_n_max.unwrap_or(d.egr_n_max),
            tolerance: self.run.tolerance.unwrap_or(d.tolerance),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_map_file() {
        let c = ExperimentConfig::parse("family = \"solenoid\"\nn = 2\n", &RunOptions::default()).unwrap();
        assert!(matches!(c.map, MapSpec::Solenoid { n: 2, .. }));
        assert_eq!(c.bowen(), BowenConfig::default());
    }

    #[test]
    fn run_table_and_overrides() {
        let text = "[map]\nfamily = \"identity\"\n\n[run]\nseed = 7\nepsilon = 0.1\n";
        let cli = RunOptions { epsilon: Some(0.2), ..Default::default() };
        let c = ExperimentConfig::parse(text, &cli).unwrap();
        assert_eq!((c.seed(), c.bowen().epsilon), (7, 0.2));
    }

    #[test]
    fn unknown_run_key_names_its_line() {
        let text = "[map]\nfamily = \"identity\"\n\n[run]\nepsilom = 0.1\n";
        let msg = format!("{:#}", ExperimentConfig::parse(text, &RunOptions::default()).unwrap_err());
        assert!(msg.contains("epsilom") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn out_of_range_budgets_are_rejected() {
        let cli = RunOptions { grid_res: Some(MAX_GRID_POINTS + 1), ..Default::default() };
        assert!(ExperimentConfig::parse("family = \"identity\"\n", &cli).is_err());
        let cli = RunOptions { ball_center: Some([0.9, 0.9, 0.0]), ..Default::default() };
        assert!(ExperimentConfig::parse("family = \"identity\"\n", &cli).is_err());
    }

    #[test]
    fn triples_parse() {
        assert_eq!(parse_triple("0, 0.5,3.1").unwrap(), [0.0, 0.5, 3.1]);
        assert!(parse_triple("1,2").is_err());
    }
}
