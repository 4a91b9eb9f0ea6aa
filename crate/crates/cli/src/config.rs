//! Flat sectioned key-value configuration for experiment runs.
//!
//! The format is one `[section]` header per block and `key = value` lines,
//! `#` starts a comment.  No nesting.  Unknown sections or keys are errors
//! so a typo cannot silently fall back to a default.

use czvar::grid::{Cube, Grid};
use czvar::kernels::{Kernel, TruncationLadder};
use czvar::variation::VariationParams;
use czvar::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub resolution: usize,
    pub lo: f64,
    pub side: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let c = self.lo + 0.5 * self.side;
        let base = match self.dim {
            1 => Cube::line(c, self.side),
            2 => Cube::square([c, c], self.side),
            d => return Err(Error::InvalidArgument(format!("grid dim {d} not in 1..=2"))),
        };
        Grid::new(base, self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub model: String,
    pub amplitude: f64,
}

impl KernelSpec {
    pub fn build(&self, dim: usize) -> Result<Kernel> {
        match self.model.as_str() {
            "hilbert" => {
                if dim != 1 {
                    return Err(Error::InvalidArgument(
                        "hilbert kernel needs a one-dimensional grid".into(),
                    ));
                }
                Ok(Kernel::hilbert())
            }
            "riesz_cos" => Kernel::riesz_cos(dim as u8, self.amplitude),
            other => Err(Error::Parse(format!("unknown kernel model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationSpec {
    pub rho: f64,
    pub rungs: usize,
}

impl VariationSpec {
    pub fn build(&self, grid: &Grid) -> Result<VariationParams> {
        let ladder = TruncationLadder::for_grid(grid, self.rungs)?;
        VariationParams::new(self.rho, ladder)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpec {
    pub delta: f64,
    /// Weak (1,1) allowance for the grand maximal of the variation,
    /// frozen from a pilot sweep per kernel and ladder.
    pub calibration: f64,
    pub depth: u32,
    /// Frozen regression baselines; a run fails if the measured supremum
    /// exceeds baseline * 1.1.
    pub residual_baseline: f64,
    pub domination_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsSpec {
    /// Exponents swept by the weighted campaign.
    pub exponents: Vec<f64>,
    /// Dyadic levels (inclusive) feeding the cube family for constants.
    pub levels: u32,
    /// Number of weights in the sweep; strengths are spaced so the
    /// constants span at least a decade.
    pub sweep: usize,
    pub omega: f64,
    pub normalized_baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Indicator,
    Bump,
    Signs,
    Rotated,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Indicator => "indicator",
            Family::Bump => "bump",
            Family::Signs => "signs",
            Family::Rotated => "rotated",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(Family::Indicator),
            "bump" => Ok(Family::Bump),
            "signs" => Ok(Family::Signs),
            "rotated" => Ok(Family::Rotated),
            other => Err(Error::Parse(format!("unknown corpus family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n: u8,
    pub count: usize,
    pub families: Vec<Family>,
    /// Dyadic level of the cube supporting every corpus signal.
    pub support_level: u32,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub variation: VariationSpec,
    pub sparse: SparseSpec,
    pub weights: WeightsSpec,
    pub corpus: CorpusSpec,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec { dim: 1, resolution: 256, lo: 0.0, side: 8.0 },
            kernel: KernelSpec { model: "hilbert".into(), amplitude: 1.0 },
            variation: VariationSpec { rho: 3.0, rungs: 8 },
            sparse: SparseSpec {
                delta: 0.5,
                calibration: 8.0,
                depth: 6,
                residual_baseline: 0.0,
                domination_baseline: 0.0,
            },
            weights: WeightsSpec {
                exponents: vec![2.0, 3.0],
                levels: 6,
                sweep: 5,
                omega: 0.35,
                normalized_baseline: 0.0,
            },
            corpus: CorpusSpec {
                n: 1,
                count: 12,
                families: vec![Family::Indicator, Family::Bump, Family::Signs, Family::Rotated],
                support_level: 3,
                amplitude: 4.0,
                seed: 7,
            },
            output: OutputSpec { dir: "out".into() },
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {value:?} for key {key}")))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse(format!("line {}: unclosed section", lineno + 1)))?;
            section = name.trim().to_string();
            match section.as_str() {
                "grid" | "kernel" | "variation" | "sparse" | "weights" | "corpus" | "output" => {}
                other => return Err(Error::Parse(format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        match (section.as_str(), key) {
            ("grid", "dim") => cfg.grid.dim = parse_num(key, value)?,
            ("grid", "resolution") => cfg.grid.resolution = parse_num(key, value)?,
            ("grid", "lo") => cfg.grid.lo = parse_num(key, value)?,
            ("grid", "side") => cfg.grid.side = parse_num(key, value)?,
            ("kernel", "model") => cfg.kernel.model = value.to_string(),
            ("kernel", "amplitude") => cfg.kernel.amplitude = parse_num(key, value)?,
            ("variation", "rho") => cfg.variation.rho = parse_num(key, value)?,
            ("variation", "rungs") => cfg.variation.rungs = parse_num(key, value)?,
            ("sparse", "delta") => cfg.sparse.delta = parse_num(key, value)?,
            ("sparse", "calibration") => cfg.sparse.calibration = parse_num(key, value)?,
            ("sparse", "depth") => cfg.sparse.depth = parse_num(key, value)?,
            ("sparse", "residual_baseline") => {
                cfg.sparse.residual_baseline = parse_num(key, value)?
            }
            ("sparse", "domination_baseline") => {
                cfg.sparse.domination_baseline = parse_num(key, value)?
            }
            ("weights", "exponents") => {
                cfg.weights.exponents = value
                    .split(',')
                    .map(|s| parse_num("exponents", s.trim()))
                    .collect::<Result<_>>()?;
            }
            ("weights", "levels") => cfg.weights.levels = parse_num(key, value)?,
            ("weights", "sweep") => cfg.weights.sweep = parse_num(key, value)?,
            ("weights", "omega") => cfg.weights.omega = parse_num(key, value)?,
            ("weights", "normalized_baseline") => {
                cfg.weights.normalized_baseline = parse_num(key, value)?
            }
            ("corpus", "n") => cfg.corpus.n = parse_num(key, value)?,
            ("corpus", "count") => cfg.corpus.count = parse_num(key, value)?,
            ("corpus", "families") => {
                cfg.corpus.families = value
                    .split(',')
                    .map(|s| Family::parse(s.trim()))
                    .collect::<Result<_>>()?;
            }
            ("corpus", "support_level") => cfg.corpus.support_level = parse_num(key, value)?,
            ("corpus", "amplitude") => cfg.corpus.amplitude = parse_num(key, value)?,
            ("corpus", "seed") => cfg.corpus.seed = parse_num(key, value)?,
            ("output", "dir") => cfg.output.dir = value.to_string(),
            ("", k) => return Err(Error::Parse(format!("key {k} appears before any section"))),
            (s, k) => return Err(Error::Parse(format!("unknown key {k} in section [{s}]"))),
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if !cfg.grid.resolution.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "resolution {} is not a power of two",
            cfg.grid.resolution
        )));
    }
    if !(cfg.variation.rho > 2.0) {
        return Err(Error::InvalidArgument(format!("rho {} must exceed 2", cfg.variation.rho)));
    }
    if cfg.corpus.families.is_empty() {
        return Err(Error::InvalidArgument("corpus needs at least one family".into()));
    }
    if (cfg.grid.resolution >> cfg.corpus.support_level) == 0 {
        return Err(Error::InvalidArgument(format!(
            "support level {} below the cell size at resolution {}",
            cfg.corpus.support_level, cfg.grid.resolution
        )));
    }
    for p in &cfg.weights.exponents {
        if !(*p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("exponent {p} not in (1, inf)")));
        }
    }
    Ok(())
}

/// Stable text rendering: the hash input and a config echo for reports.
pub fn canonical_text(cfg: &ExperimentConfig) -> String {
    let families: Vec<&str> = cfg.corpus.families.iter().map(|f| f.name()).collect();
    let exponents: Vec<String> = cfg.weights.exponents.iter().map(|p| p.to_string()).collect();
    format!(
        "[grid]\ndim = {}\nresolution = {}\nlo = {}\nside = {}\n\
         [kernel]\nmodel = {}\namplitude = {}\n\
         [variation]\nrho = {}\nrungs = {}\n\
         [sparse]\ndelta = {}\ncalibration = {}\ndepth = {}\nresidual_baseline = {}\ndomination_baseline = {}\n\
         [weights]\nexponents = {}\nlevels = {}\nsweep = {}\nomega = {}\nnormalized_baseline = {}\n\
         [corpus]\nn = {}\ncount = {}\nfamilies = {}\nsupport_level = {}\namplitude = {}\nseed = {}\n\
         [output]\ndir = {}\n",
        cfg.grid.dim,
        cfg.grid.resolution,
        cfg.grid.lo,
        cfg.grid.side,
        cfg.kernel.model,
        cfg.kernel.amplitude,
        cfg.variation.rho,
        cfg.variation.rungs,
        cfg.sparse.delta,
        cfg.sparse.calibration,
        cfg.sparse.depth,
        cfg.sparse.residual_baseline,
        cfg.sparse.domination_baseline,
        exponents.join(","),
        cfg.weights.levels,
        cfg.weights.sweep,
        cfg.weights.omega,
        cfg.weights.normalized_baseline,
        cfg.corpus.n,
        cfg.corpus.count,
        families.join(","),
        cfg.corpus.support_level,
        cfg.corpus.amplitude,
        cfg.corpus.seed,
        cfg.output.dir,
    )
}

/// FNV-1a over the canonical rendering; stable across runs and platforms.
pub fn config_hash(cfg: &ExperimentConfig) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in canonical_text(cfg).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_the_canonical_rendering() {
        let cfg = ExperimentConfig::default();
        let text = canonical_text(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(config_hash(&cfg), config_hash(&back));
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        assert!(parse_config("[grid]\nspeed = 9\n").is_err());
        assert!(parse_config("[turbo]\n").is_err());
        assert!(parse_config("dim = 1\n").is_err());
    }

    #[test]
    fn parses_comments_lists_and_overrides() {
        let text = "# run setup\n[grid]\nresolution = 512 # fine\n[weights]\nexponents = 2, 2.5 ,3\n[corpus]\nfamilies = bump , signs\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.grid.resolution, 512);
        assert_eq!(cfg.weights.exponents, vec![2.0, 2.5, 3.0]);
        assert_eq!(cfg.corpus.families, vec![Family::Bump, Family::Signs]);
        assert_eq!(cfg.grid.dim, 1);
    }

    #[test]
    fn hash_changes_with_any_field() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.corpus.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
