//! Strict sectioned key=value configuration.
//!
//! Unknown sections or keys are errors (with line numbers), duplicate keys
//! are errors, and every numeric field is validated against the owning
//! module's invariants at load time. `echo()` renders the effective
//! configuration back in the same format; re-parsing the echo must
//! reproduce the configuration exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// A configuration error with enough context to fix the file.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    /// Family parameters (mu, sigma, gamma as applicable).
    pub params: Vec<(String, f64)>,
    pub domain_cap: f64,
    pub exploratory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub name: String,
    pub kappa: f64,
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub x_tol: f64,
    pub newton_polish: bool,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub hjb_points: usize,
    pub hjb_lo: Option<f64>,
    pub hjb_hi: Option<f64>,
    pub sweep_a_count: usize,
    pub sweep_b_count: usize,
    pub sweep_lo: Option<f64>,
    pub sweep_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBlock {
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in_fraction: f64,
    pub n_batches: usize,
    pub seed: u64,
    pub thin_every: u64,
    pub replications: usize,
    pub barrier_a: Option<f64>,
    pub barrier_b: Option<f64>,
    pub one_sided: bool,
    pub one_sided_barrier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedConfig {
    pub rs: Vec<f64>,
    pub x_eval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub precision: usize,
}

/// The full run configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub reward: RewardConfig,
    pub solver: SolverConfig,
    pub grid: GridConfig,
    pub sim: SimBlock,
    pub discounted: DiscountedConfig,
    pub output: OutputConfig,
}

const MODEL_PARAM_KEYS: &[&str] = &["mu", "gamma", "sigma"];

const ALLOWED_KEYS: &[(&str, &[&str])] = &[
    ("model", &["name", "mu", "gamma", "sigma", "domain_cap", "exploratory"]),
    ("reward", &["name", "kappa", "p", "c1", "c2"]),
    ("solver", &["x_tol", "newton_polish", "force"]),
    (
        "grid",
        &[
            "hjb_points",
            "hjb_lo",
            "hjb_hi",
            "sweep_a_count",
            "sweep_b_count",
            "sweep_lo",
            "sweep_hi",
        ],
    ),
    (
        "sim",
        &[
            "x0",
            "dt",
            "horizon",
            "burn_in_fraction",
            "n_batches",
            "seed",
            "thin_every",
            "replications",
            "barrier_a",
            "barrier_b",
            "one_sided",
            "one_sided_barrier",
        ],
    ),
    ("discounted", &["rs", "x_eval"]),
    ("output", &["dir", "precision"]),
];

struct RawSection {
    entries: BTreeMap<String, (String, usize)>,
}

fn parse_sections(text: &str) -> CResult<BTreeMap<String, RawSection>> {
    let known = [
        "model",
        "reward",
        "solver",
        "grid",
        "sim",
        "discounted",
        "output",
    ];
    let mut sections: BTreeMap<String, RawSection> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !known.contains(&name) {
                return Err(ConfigError(format!(
                    "line {line_no}: unknown section [{name}] (known: {})",
                    known.join(", ")
                )));
            }
            sections.entry(name.to_string()).or_insert(RawSection {
                entries: BTreeMap::new(),
            });
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!(
                "line {line_no}: expected `key = value`, got `{line}`"
            )));
        };
        let Some(section) = &current else {
            return Err(ConfigError(format!(
                "line {line_no}: `{}` appears before any [section]",
                key.trim()
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let entries = &mut sections.get_mut(section).unwrap().entries;
        if entries.contains_key(&key) {
            return Err(ConfigError(format!(
                "line {line_no}: duplicate key `{key}` in [{section}]"
            )));
        }
        entries.insert(key, (value, line_no));
    }
    Ok(sections)
}

struct SectionReader {
    name: &'static str,
    entries: BTreeMap<String, (String, usize)>,
}

impl SectionReader {
    fn new(name: &'static str, raw: Option<RawSection>) -> Self {
        Self {
            name,
            entries: raw.map(|r| r.entries).unwrap_or_default(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get(key).cloned()
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str, default: T) -> CResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|_| {
                ConfigError(format!(
                    "line {line}: {}.{key}: cannot parse `{v}` as {}",
                    self.name,
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    fn optional_f64(&mut self, key: &str) -> CResult<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                ConfigError(format!(
                    "line {line}: {}.{key}: cannot parse `{v}` as a real",
                    self.name
                ))
            }),
        }
    }

    fn required_f64(&mut self, key: &str) -> CResult<f64> {
        self.optional_f64(key)?.ok_or_else(|| {
            ConfigError(format!("missing required key {}.{key}", self.name))
        })
    }

    fn required_string(&mut self, key: &str) -> CResult<String> {
        self.raw(key)
            .map(|(v, _)| v)
            .ok_or_else(|| ConfigError(format!("missing required key {}.{key}", self.name)))
    }

    fn f64_list(&mut self, key: &str, default: &[f64]) -> CResult<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|part| {
                    part.trim().parse().map_err(|_| {
                        ConfigError(format!(
                            "line {line}: {}.{key}: cannot parse `{}` as a real",
                            self.name,
                            part.trim()
                        ))
                    })
                })
                .collect(),
        }
    }

}

/// Parse a configuration file.
pub fn parse_config(path: &Path) -> CResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parse configuration text (exposed for the round-trip contract).
pub fn parse_config_str(text: &str) -> CResult<RunConfig> {
    let mut sections = parse_sections(text)?;

    // Reject unknown keys up front so a misspelling is named even when it
    // shadows a required key.
    for (section, raw) in &sections {
        let allowed = ALLOWED_KEYS
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, keys)| *keys)
            .unwrap_or(&[]);
        for (key, (_, line)) in &raw.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError(format!(
                    "line {line}: unknown key `{key}` in [{section}]"
                )));
            }
        }
    }

    let mut model = SectionReader::new("model", sections.remove("model"));
    let model_name = model.required_string("name")?;
    let mut params = Vec::new();
    for &key in MODEL_PARAM_KEYS {
        if let Some(v) = model.optional_f64(key)? {
            params.push((key.to_string(), v));
        }
    }
    let model_cfg = ModelConfig {
        name: model_name,
        params,
        domain_cap: model.field("domain_cap", 1000.0)?,
        exploratory: model.field("exploratory", false)?,
    };

    let mut reward = SectionReader::new("reward", sections.remove("reward"));
    let reward_cfg = RewardConfig {
        name: reward.field("name", "power".to_string())?,
        kappa: reward.field("kappa", 1.0)?,
        p: reward.field("p", 0.5)?,
        c1: reward.required_f64("c1")?,
        c2: reward.required_f64("c2")?,
    };

    let mut solver = SectionReader::new("solver", sections.remove("solver"));
    let solver_cfg = SolverConfig {
        x_tol: solver.field("x_tol", 1e-10)?,
        newton_polish: solver.field("newton_polish", true)?,
        force: solver.field("force", false)?,
    };

    let mut grid = SectionReader::new("grid", sections.remove("grid"));
    let grid_cfg = GridConfig {
        hjb_points: grid.field("hjb_points", 2001usize)?,
        hjb_lo: grid.optional_f64("hjb_lo")?,
        hjb_hi: grid.optional_f64("hjb_hi")?,
        sweep_a_count: grid.field("sweep_a_count", 64usize)?,
        sweep_b_count: grid.field("sweep_b_count", 64usize)?,
        sweep_lo: grid.optional_f64("sweep_lo")?,
        sweep_hi: grid.optional_f64("sweep_hi")?,
    };

    let mut sim = SectionReader::new("sim", sections.remove("sim"));
    let sim_cfg = SimBlock {
        x0: sim.field("x0", 1.0)?,
        dt: sim.field("dt", 1e-3)?,
        horizon: sim.field("horizon", 20_000.0)?,
        burn_in_fraction: sim.field("burn_in_fraction", 0.1)?,
        n_batches: sim.field("n_batches", 20usize)?,
        seed: sim.field("seed", 42u64)?,
        thin_every: sim.field("thin_every", 0u64)?,
        replications: sim.field("replications", 4usize)?,
        barrier_a: sim.optional_f64("barrier_a")?,
        barrier_b: sim.optional_f64("barrier_b")?,
        one_sided: sim.field("one_sided", false)?,
        one_sided_barrier: sim.optional_f64("one_sided_barrier")?,
    };

    let mut disc = SectionReader::new("discounted", sections.remove("discounted"));
    let disc_cfg = DiscountedConfig {
        rs: disc.f64_list("rs", &[0.2, 0.1, 0.05, 0.02])?,
        x_eval: disc.field("x_eval", 1.0)?,
    };

    let mut output = SectionReader::new("output", sections.remove("output"));
    let output_cfg = OutputConfig {
        dir: output.field("dir", "out".to_string())?,
        precision: output.field("precision", 12usize)?,
    };

    let cfg = RunConfig {
        model: model_cfg,
        reward: reward_cfg,
        solver: solver_cfg,
        grid: grid_cfg,
        sim: sim_cfg,
        discounted: disc_cfg,
        output: output_cfg,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> CResult<()> {
    let err = |path: &str, why: String| Err(ConfigError(format!("{path}: {why}")));
    if !(cfg.reward.c1 > 0.0) {
        return err("reward.c1", format!("must be positive, got {}", cfg.reward.c1));
    }
    if cfg.reward.c2 <= cfg.reward.c1 {
        return err(
            "reward.c2",
            format!("must exceed c1 = {}, got {}", cfg.reward.c1, cfg.reward.c2),
        );
    }
    if !(cfg.reward.p > 0.0 && cfg.reward.p < 1.0) {
        return err("reward.p", format!("must lie in (0, 1), got {}", cfg.reward.p));
    }
    if !(cfg.reward.kappa > 0.0) {
        return err(
            "reward.kappa",
            format!("must be positive, got {}", cfg.reward.kappa),
        );
    }
    if !(cfg.model.domain_cap > 0.0) {
        return err(
            "model.domain_cap",
            format!("must be positive, got {}", cfg.model.domain_cap),
        );
    }
    if !(cfg.sim.dt > 0.0 && cfg.sim.dt <= cfg.sim.horizon / 1e3) {
        return err(
            "sim.dt",
            format!(
                "must be positive and at most horizon/1000 = {}, got {}",
                cfg.sim.horizon / 1e3,
                cfg.sim.dt
            ),
        );
    }
    if !(0.0..=0.5).contains(&cfg.sim.burn_in_fraction) {
        return err(
            "sim.burn_in_fraction",
            format!("must lie in [0, 0.5], got {}", cfg.sim.burn_in_fraction),
        );
    }
    if cfg.sim.n_batches < 10 {
        return err(
            "sim.n_batches",
            format!("must be at least 10, got {}", cfg.sim.n_batches),
        );
    }
    if cfg.sim.replications == 0 {
        return err("sim.replications", "must be at least 1".to_string());
    }
    if let (Some(a), Some(b)) = (cfg.sim.barrier_a, cfg.sim.barrier_b) {
        if !(0.0 < a && a < b) {
            return err(
                "sim.barrier_a",
                format!("explicit barriers must satisfy 0 < a < b, got ({a}, {b})"),
            );
        }
    }
    if cfg.sim.barrier_a.is_some() != cfg.sim.barrier_b.is_some() {
        return err(
            "sim.barrier_a",
            "barrier_a and barrier_b must be given together".to_string(),
        );
    }
    if cfg.discounted.rs.is_empty()
        || cfg.discounted.rs.windows(2).any(|w| w[0] <= w[1])
        || *cfg.discounted.rs.last().unwrap() <= 0.0
    {
        return err(
            "discounted.rs",
            "must be a decreasing list of positive rates".to_string(),
        );
    }
    if cfg.grid.hjb_points < 101 {
        return err(
            "grid.hjb_points",
            format!("must be at least 101, got {}", cfg.grid.hjb_points),
        );
    }
    if cfg.grid.sweep_a_count < 2 || cfg.grid.sweep_b_count < 2 {
        return err("grid.sweep_a_count", "sweep grids need at least 2 points".to_string());
    }
    if cfg.output.precision < 1 || cfg.output.precision > 17 {
        return err(
            "output.precision",
            format!("must lie in [1, 17], got {}", cfg.output.precision),
        );
    }
    Ok(())
}

fn push_opt(out: &mut String, key: &str, v: Option<f64>) {
    if let Some(v) = v {
        let _ = writeln!(out, "{key} = {v}");
    }
}

/// Render the effective configuration; parsing the result reproduces the
/// configuration exactly.
pub fn echo(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[model]");
    let _ = writeln!(s, "name = {}", cfg.model.name);
    for (k, v) in &cfg.model.params {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "domain_cap = {}", cfg.model.domain_cap);
    let _ = writeln!(s, "exploratory = {}", cfg.model.exploratory);
    let _ = writeln!(s, "\n[reward]");
    let _ = writeln!(s, "name = {}", cfg.reward.name);
    let _ = writeln!(s, "kappa = {}", cfg.reward.kappa);
    let _ = writeln!(s, "p = {}", cfg.reward.p);
    let _ = writeln!(s, "c1 = {}", cfg.reward.c1);
    let _ = writeln!(s, "c2 = {}", cfg.reward.c2);
    let _ = writeln!(s, "\n[solver]");
    let _ = writeln!(s, "x_tol = {}", cfg.solver.x_tol);
    let _ = writeln!(s, "newton_polish = {}", cfg.solver.newton_polish);
    let _ = writeln!(s, "force = {}", cfg.solver.force);
    let _ = writeln!(s, "\n[grid]");
    let _ = writeln!(s, "hjb_points = {}", cfg.grid.hjb_points);
    push_opt(&mut s, "hjb_lo", cfg.grid.hjb_lo);
    push_opt(&mut s, "hjb_hi", cfg.grid.hjb_hi);
    let _ = writeln!(s, "sweep_a_count = {}", cfg.grid.sweep_a_count);
    let _ = writeln!(s, "sweep_b_count = {}", cfg.grid.sweep_b_count);
    push_opt(&mut s, "sweep_lo", cfg.grid.sweep_lo);
    push_opt(&mut s, "sweep_hi", cfg.grid.sweep_hi);
    let _ = writeln!(s, "\n[sim]");
    let _ = writeln!(s, "x0 = {}", cfg.sim.x0);
    let _ = writeln!(s, "dt = {}", cfg.sim.dt);
    let _ = writeln!(s, "horizon = {}", cfg.sim.horizon);
    let _ = writeln!(s, "burn_in_fraction = {}", cfg.sim.burn_in_fraction);
    let _ = writeln!(s, "n_batches = {}", cfg.sim.n_batches);
    let _ = writeln!(s, "seed = {}", cfg.sim.seed);
    let _ = writeln!(s, "thin_every = {}", cfg.sim.thin_every);
    let _ = writeln!(s, "replications = {}", cfg.sim.replications);
    push_opt(&mut s, "barrier_a", cfg.sim.barrier_a);
    push_opt(&mut s, "barrier_b", cfg.sim.barrier_b);
    let _ = writeln!(s, "one_sided = {}", cfg.sim.one_sided);
    push_opt(&mut s, "one_sided_barrier", cfg.sim.one_sided_barrier);
    let _ = writeln!(s, "\n[discounted]");
    let rs: Vec<String> = cfg.discounted.rs.iter().map(|r| r.to_string()).collect();
    let _ = writeln!(s, "rs = {}", rs.join(", "));
    let _ = writeln!(s, "x_eval = {}", cfg.discounted.x_eval);
    let _ = writeln!(s, "\n[output]");
    let _ = writeln!(s, "dir = {}", cfg.output.dir);
    let _ = writeln!(s, "precision = {}", cfg.output.precision);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nname = verhulst_pearl\nmu = 1.0\ngamma = 1.0\nsigma = 0.5\n\n[reward]\nc1 = 0.5\nc2 = 1.5\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.model.name, "verhulst_pearl");
        assert_eq!(cfg.model.domain_cap, 1000.0);
        assert_eq!(cfg.sim.seed, 42);
        assert_eq!(cfg.sim.dt, 1e-3);
        assert_eq!(cfg.discounted.rs, vec![0.2, 0.1, 0.05, 0.02]);
        assert_eq!(cfg.output.precision, 12);
    }

    #[test]
    fn misspelled_key_is_an_error() {
        let text = format!("{MINIMAL}c_one = 0.4\n");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.0.contains("c_one"), "{err}");
    }

    #[test]
    fn unknown_section_is_an_error() {
        let err = parse_config_str("[models]\nname = gbm\n").unwrap_err();
        assert!(err.0.contains("unknown section"), "{err}");
    }

    #[test]
    fn ordered_costs_enforced_at_load() {
        let text = "[model]\nname = gbm\nmu = -0.5\nsigma = 1.0\n\n[reward]\nc1 = 2.0\nc2 = 1.0\n";
        let err = parse_config_str(text).unwrap_err();
        assert!(err.0.contains("reward.c2"), "{err}");
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let text = format!("{MINIMAL}c1 = 0.6\n");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.0.contains("duplicate"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let text = format!(
            "{MINIMAL}\n[sim]\nseed = 7\ndt = 0.0005\nbarrier_a = 0.3\nbarrier_b = 1.4\n\n[discounted]\nrs = 0.1, 0.05\n"
        );
        let cfg = parse_config_str(&text).unwrap();
        let echoed = echo(&cfg);
        let cfg2 = parse_config_str(&echoed).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = format!("# leading comment\n; alt comment\n\n{MINIMAL}");
        assert!(parse_config_str(&text).is_ok());
    }
}
