//! Experiment config files.
//!
//! A config is a TOML document read as a flat map of dotted keys, so
//! `env.kind = "nav2d"` and an `[env]` table holding `kind = "nav2d"` are the
//! same thing. Every key is consumed exactly once; anything left over is
//! reported by name. [`ExperimentConfig::to_manifest`] writes the resolved
//! config back in the same grammar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::Value;
use wbfo_core::env::{Barrier, PendulumStart};
use wbfo_core::experiment::{Protocol, TrialSpec};
use wbfo_core::optimizer::MppiSpace;
use wbfo_core::{Algorithm, EnvConfig, Nav2dConfig, NoiseSchedule, NoiseSource, OptimizerConfig, PendulumConfig, PlannerConfig};

/// Version written to and checked against `manifest.version`.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub protocol: Protocol,
    pub env: EnvConfig,
    /// `algorithm` is the default when `algorithms` is not given and
    /// `gamma` is the AVWBFO discount; `n_samples` is the default sweep.
    pub optimizer: OptimizerConfig,
    pub noise: NoiseSchedule,
    pub planner: PlannerConfig,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub sample_sweep: Vec<usize>,
    pub output_dir: PathBuf,
}

/// Key/value pairs still waiting to be consumed.
struct Keys {
    map: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(ConfigError::new(key, format!("expected a number, got {}", type_name(other)))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(i) => Err(ConfigError::new(key, format!("expected a non-negative integer, got {i}"))),
        other => Err(ConfigError::new(key, format!("expected an integer, got {}", type_name(other)))),
    }
}

fn as_array<'a>(key: &str, v: &'a Value) -> Result<&'a [Value]> {
    match v {
        Value::Array(a) => Ok(a),
        other => Err(ConfigError::new(key, format!("expected an array, got {}", type_name(other)))),
    }
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                let x = as_f64(key, &v)?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(ConfigError::new(key, "must be finite"))
                }
            }
        }
    }

    fn u64_opt(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key).map(|v| as_u64(key, &v)).transpose()
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64_opt(key)?.map_or(default, |v| v as usize))
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(other) => Err(ConfigError::new(key, format!("expected a boolean, got {}", type_name(&other)))),
        }
    }

    fn str_opt(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(ConfigError::new(key, format!("expected a string, got {}", type_name(&other)))),
        }
    }

    fn parsed_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.str_opt(key)? {
            None => Ok(default),
            Some(s) => s.parse().map_err(|e: T::Err| ConfigError::new(key, e.to_string())),
        }
    }

    fn point_or(&mut self, key: &str, default: [f64; 2]) -> Result<[f64; 2]> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                let a = as_array(key, &v)?;
                if a.len() != 2 {
                    return Err(ConfigError::new(key, format!("expected [x, y], got {} elements", a.len())));
                }
                Ok([as_f64(key, &a[0])?, as_f64(key, &a[1])?])
            }
        }
    }

    fn u64_list(&mut self, key: &str) -> Result<Option<Vec<u64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => as_array(key, &v)?.iter().map(|x| as_u64(key, x)).collect::<Result<Vec<_>>>().map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_keys().next() {
            None => Ok(()),
            Some(key) => Err(ConfigError::new(key, "unknown key, or not used by the selected env.kind / env.barrier")),
        }
    }
}

/// Wraps a core validation error, naming the first `section.key` its
/// message mentions, else the section itself.
fn core_err(section: &str) -> impl Fn(wbfo_core::Error) -> ConfigError + '_ {
    move |e| {
        let message = match e {
            wbfo_core::Error::Config(m) => m,
            other => other.to_string(),
        };
        let key = message
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
            .find(|w| w.len() > section.len() + 1 && w.starts_with(section) && w[section.len()..].starts_with('.'))
            .unwrap_or(section)
            .to_string();
        ConfigError::new(key, message)
    }
}

fn parse_nav2d(keys: &mut Keys) -> Result<Nav2dConfig> {
    let d = Nav2dConfig::default();
    let barrier = match keys.str_opt("env.barrier")?.as_deref().unwrap_or("none") {
        "none" => Barrier::None,
        "box" => Barrier::Box {
            half_size: keys.f64_or("env.barrier_half_size", 1.0)?,
            gap_width: keys.f64_or("env.barrier_gap_width", 0.6)?,
        },
        "wall" => Barrier::Wall {
            position: keys.f64_or("env.wall_position", 5.0)?,
            gap_center: keys.f64_or("env.wall_gap_center", 5.5)?,
            gap_width: keys.f64_or("env.barrier_gap_width", 0.8)?,
        },
        other => return Err(ConfigError::new("env.barrier", format!("unknown barrier `{other}` (expected none, box or wall)"))),
    };
    let cfg = Nav2dConfig {
        workspace: keys.f64_or("env.workspace", d.workspace)?,
        n_obstacles: keys.usize_or("env.n_obstacles", d.n_obstacles)?,
        radius_min: keys.f64_or("env.radius_min", d.radius_min)?,
        radius_max: keys.f64_or("env.radius_max", d.radius_max)?,
        start: keys.point_or("env.start", d.start)?,
        goal: keys.point_or("env.goal", d.goal)?,
        start_jitter: keys.f64_or("env.start_jitter", d.start_jitter)?,
        goal_jitter: keys.f64_or("env.goal_jitter", d.goal_jitter)?,
        barrier,
        w_task: keys.f64_or("env.w_task", d.w_task)?,
        w_obs: keys.f64_or("env.w_obs", d.w_obs)?,
        w_ctl: keys.f64_or("env.w_ctl", d.w_ctl)?,
        r_safe: keys.f64_or("env.r_safe", d.r_safe)?,
        max_speed: keys.f64_or("env.max_speed", d.max_speed)?,
        dt: keys.f64_or("env.dt", d.dt)?,
    };
    cfg.validate().map_err(core_err("env"))?;
    Ok(cfg)
}

fn parse_pendulum(keys: &mut Keys) -> Result<PendulumConfig> {
    let d = PendulumConfig::default();
    let start = match keys.str_opt("env.start")?.as_deref().unwrap_or("down") {
        "down" => PendulumStart::Down,
        "upright" => {
            let max_angle = keys.f64_or("env.start_angle", 0.3)?;
            if max_angle < 0.0 {
                return Err(ConfigError::new("env.start_angle", "must be >= 0"));
            }
            PendulumStart::NearUpright { max_angle }
        }
        other => return Err(ConfigError::new("env.start", format!("unknown start `{other}` (expected down or upright)"))),
    };
    let cfg = PendulumConfig {
        cart_mass: keys.f64_or("env.cart_mass", d.cart_mass)?,
        pole_mass: keys.f64_or("env.pole_mass", d.pole_mass)?,
        half_length: keys.f64_or("env.half_length", d.half_length)?,
        gravity: keys.f64_or("env.gravity", d.gravity)?,
        force_limit: keys.f64_or("env.force_limit", d.force_limit)?,
        dt: keys.f64_or("env.dt", d.dt)?,
        start,
        w_angle: keys.f64_or("env.w_angle", d.w_angle)?,
        w_cart: keys.f64_or("env.w_cart", d.w_cart)?,
        w_ctl: keys.f64_or("env.w_ctl", d.w_ctl)?,
    };
    cfg.validate().map_err(core_err("env"))?;
    Ok(cfg)
}

fn parse_mppi_space(s: &str) -> std::result::Result<MppiSpace, String> {
    match s {
        "nodes" => Ok(MppiSpace::Nodes),
        "dense" => Ok(MppiSpace::Dense),
        other => Err(format!("unknown MPPI space `{other}` (expected nodes or dense)")),
    }
}

fn mppi_space_name(s: MppiSpace) -> &'static str {
    match s {
        MppiSpace::Nodes => "nodes",
        MppiSpace::Dense => "dense",
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            ConfigError::new("<syntax>", e.message().to_string())
        })?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map);
        let mut keys = Keys { map };

        if let Some(v) = keys.str_opt("manifest.version")? {
            if v != VERSION {
                log::warn!("manifest was written by version {v}, running {VERSION}");
            }
        }
        keys.take("manifest.seeds");

        let id = keys.str_opt("experiment.id")?.unwrap_or_else(|| "experiment".to_string());
        if id.is_empty() || id.contains([',', '\n', '"']) {
            return Err(ConfigError::new("experiment.id", "must be non-empty without commas, quotes or newlines"));
        }
        let protocol = keys.parsed_or("experiment.protocol", Protocol::TrajOpt)?;

        let env = match keys.str_opt("env.kind")?.as_deref() {
            Some("nav2d") => EnvConfig::Nav2d(parse_nav2d(&mut keys)?),
            Some("pendulum") => EnvConfig::Pendulum(parse_pendulum(&mut keys)?),
            Some(other) => return Err(ConfigError::new("env.kind", format!("unknown kind `{other}` (expected nav2d or pendulum)"))),
            None => return Err(ConfigError::new("env.kind", "missing (expected nav2d or pendulum)")),
        };

        let od = OptimizerConfig::default();
        let algorithm: Algorithm = keys.parsed_or("opt.algorithm", od.algorithm)?;
        let mppi_space = match keys.str_opt("opt.mppi_space")? {
            None => od.mppi_space,
            Some(s) => parse_mppi_space(&s).map_err(|m| ConfigError::new("opt.mppi_space", m))?,
        };
        let optimizer = OptimizerConfig {
            algorithm,
            n_samples: keys.usize_or("opt.n_samples", od.n_samples)?,
            gamma: keys.f64_or("opt.gamma", 1.0)?,
            lambda: keys.f64_or("opt.lambda", od.lambda)?,
            iterations: keys.usize_or("opt.iterations", od.iterations)?,
            alpha: keys.f64_or("opt.alpha", od.alpha)?,
            mppi_space,
        };
        if !(optimizer.gamma > 0.0 && optimizer.gamma <= 1.0) {
            return Err(ConfigError::new("opt.gamma", format!("AVWBFO discount must lie in (0, 1], got {}", optimizer.gamma)));
        }

        let nd = NoiseSchedule::default();
        let noise = NoiseSchedule {
            sigma0: keys.f64_or("noise.sigma0", nd.sigma0)?,
            decay: keys.f64_or("noise.decay", nd.decay)?,
            ramp_near: keys.f64_or("noise.ramp_near", nd.ramp_near)?,
            ramp_far: keys.f64_or("noise.ramp_far", nd.ramp_far)?,
            source: keys.parsed_or::<NoiseSource>("noise.source", nd.source)?,
            seed: keys.u64_opt("noise.seed")?.unwrap_or(nd.seed),
        };
        noise.validate().map_err(core_err("noise"))?;

        let pd = PlannerConfig::default();
        let warm_start = keys.str_opt("planner.warm_start")?.filter(|s| s != "none");
        if let Some(name) = &warm_start {
            wbfo_core::planner::builtin_policy(name, env.control_dim())
                .map_err(|e| ConfigError::new("planner.warm_start", e.to_string()))?;
        }
        let planner = PlannerConfig {
            horizon: keys.usize_or("planner.horizon", pd.horizon)?,
            nodes: keys.usize_or("planner.nodes", pd.nodes)?,
            n_denoise: keys.usize_or("planner.n_denoise", pd.n_denoise)?,
            max_steps: keys.usize_or("planner.max_steps", pd.max_steps)?,
            success_radius: keys.f64_or("planner.success_radius", pd.success_radius)?,
            warm_start,
            execute_steps: keys.usize_or("planner.execute_steps", pd.execute_steps)?,
            record_scores: keys.bool_or("planner.record_scores", pd.record_scores)?,
        };
        planner.validate().map_err(core_err("planner"))?;
        if planner.max_steps == 0 {
            return Err(ConfigError::new("planner.max_steps", "must be >= 1"));
        }

        let algorithms = match keys.take("algorithms") {
            None => vec![algorithm],
            Some(v) => as_array("algorithms", &v)?
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.parse().map_err(|e: wbfo_core::Error| ConfigError::new("algorithms", e.to_string())),
                    other => Err(ConfigError::new("algorithms", format!("expected strings, got {}", type_name(other)))),
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if algorithms.is_empty() {
            return Err(ConfigError::new("algorithms", "must list at least one algorithm"));
        }

        let trials = keys.u64_opt("trials")?;
        let base = keys.u64_opt("seed")?;
        let seeds = match (keys.u64_list("seeds")?, trials, base) {
            (Some(_), _, Some(_)) => return Err(ConfigError::new("seed", "give either `seed` or `seeds`, not both")),
            (Some(list), Some(n), None) if list.len() as u64 != n => {
                return Err(ConfigError::new("trials", format!("trials = {n} but `seeds` lists {} seeds", list.len())))
            }
            (Some(list), _, None) => list,
            (None, n, b) => {
                let b = b.unwrap_or(0);
                (0..n.unwrap_or(1)).map(|i| b.wrapping_add(i)).collect()
            }
        };
        if seeds.is_empty() {
            return Err(ConfigError::new("trials", "at least one trial is required"));
        }
        check_seeds("seeds", &seeds)?;

        let sample_sweep = match keys.u64_list("sample_sweep")? {
            None => vec![optimizer.n_samples],
            Some(v) => v.into_iter().map(|n| n as usize).collect(),
        };
        check_sweep("sample_sweep", &sample_sweep)?;

        let output_dir = PathBuf::from(keys.str_opt("output_dir")?.unwrap_or_else(|| "results".to_string()));
        keys.finish()?;

        let cfg = Self { id, protocol, env, optimizer, noise, planner, algorithms, seeds, sample_sweep, output_dir };
        for alg in &cfg.algorithms {
            cfg.optimizer_for(*alg, cfg.sample_sweep[0]).validate().map_err(core_err("opt"))?;
        }
        Ok(cfg)
    }

    /// Optimizer block for one battery entry: WBFO runs with `γ = 0`, the
    /// other algorithms with the configured AVWBFO discount (MPPI ignores it).
    pub fn optimizer_for(&self, algorithm: Algorithm, n_samples: usize) -> OptimizerConfig {
        let gamma = if algorithm == Algorithm::Wbfo { 0.0 } else { self.optimizer.gamma };
        OptimizerConfig { algorithm, n_samples, gamma, ..self.optimizer.clone() }
    }

    pub fn trial_spec(&self, algorithm: Algorithm, n_samples: usize, seed: u64) -> TrialSpec {
        TrialSpec {
            protocol: self.protocol,
            env: self.env.clone(),
            optimizer: self.optimizer_for(algorithm, n_samples),
            noise: self.noise.clone(),
            planner: self.planner.clone(),
            seed,
        }
    }

    /// Replaces the seeds with `trials` consecutive seeds from `base`.
    pub fn set_base_seed(&mut self, base: u64) -> Result<()> {
        let n = self.seeds.len() as u64;
        self.seeds = (0..n).map(|i| base.wrapping_add(i)).collect();
        check_seeds("--seed", &self.seeds)
    }

    pub fn set_sample_sweep(&mut self, sweep: Vec<usize>) -> Result<()> {
        check_sweep("--samples", &sweep)?;
        self.sample_sweep = sweep;
        Ok(())
    }

    pub fn set_algorithms(&mut self, algorithms: Vec<Algorithm>) -> Result<()> {
        if algorithms.is_empty() {
            return Err(ConfigError::new("--algorithms", "must list at least one algorithm"));
        }
        for alg in &algorithms {
            self.optimizer_for(*alg, self.sample_sweep[0]).validate().map_err(core_err("--algorithms"))?;
        }
        self.algorithms = algorithms;
        Ok(())
    }

    /// Every key of the resolved config, in manifest order.
    pub fn entries(&self) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, v: Value| out.push((k.to_string(), v));
        let f = Value::Float;
        let int = |x: usize| Value::Integer(x as i64);
        let point = |p: [f64; 2]| Value::Array(vec![Value::Float(p[0]), Value::Float(p[1])]);
        let s = |x: &str| Value::String(x.to_string());

        put("experiment.id", s(&self.id));
        put("experiment.protocol", s(self.protocol.name()));
        match &self.env {
            EnvConfig::Nav2d(c) => {
                put("env.kind", s("nav2d"));
                put("env.workspace", f(c.workspace));
                put("env.n_obstacles", int(c.n_obstacles));
                put("env.radius_min", f(c.radius_min));
                put("env.radius_max", f(c.radius_max));
                put("env.start", point(c.start));
                put("env.goal", point(c.goal));
                put("env.start_jitter", f(c.start_jitter));
                put("env.goal_jitter", f(c.goal_jitter));
                match c.barrier {
                    Barrier::None => put("env.barrier", s("none")),
                    Barrier::Box { half_size, gap_width } => {
                        put("env.barrier", s("box"));
                        put("env.barrier_half_size", f(half_size));
                        put("env.barrier_gap_width", f(gap_width));
                    }
                    Barrier::Wall { position, gap_center, gap_width } => {
                        put("env.barrier", s("wall"));
                        put("env.wall_position", f(position));
                        put("env.wall_gap_center", f(gap_center));
                        put("env.barrier_gap_width", f(gap_width));
                    }
                }
                put("env.w_task", f(c.w_task));
                put("env.w_obs", f(c.w_obs));
                put("env.w_ctl", f(c.w_ctl));
                put("env.r_safe", f(c.r_safe));
                put("env.max_speed", f(c.max_speed));
                put("env.dt", f(c.dt));
            }
            EnvConfig::Pendulum(c) => {
                put("env.kind", s("pendulum"));
                put("env.cart_mass", f(c.cart_mass));
                put("env.pole_mass", f(c.pole_mass));
                put("env.half_length", f(c.half_length));
                put("env.gravity", f(c.gravity));
                put("env.force_limit", f(c.force_limit));
                put("env.dt", f(c.dt));
                match c.start {
                    PendulumStart::Down => put("env.start", s("down")),
                    PendulumStart::NearUpright { max_angle } => {
                        put("env.start", s("upright"));
                        put("env.start_angle", f(max_angle));
                    }
                }
                put("env.w_angle", f(c.w_angle));
                put("env.w_cart", f(c.w_cart));
                put("env.w_ctl", f(c.w_ctl));
            }
        }
        let o = &self.optimizer;
        put("opt.algorithm", s(o.algorithm.name()));
        put("opt.n_samples", int(o.n_samples));
        put("opt.gamma", f(o.gamma));
        put("opt.lambda", f(o.lambda));
        put("opt.iterations", int(o.iterations));
        put("opt.alpha", f(o.alpha));
        put("opt.mppi_space", s(mppi_space_name(o.mppi_space)));
        let n = &self.noise;
        put("noise.sigma0", f(n.sigma0));
        put("noise.decay", f(n.decay));
        put("noise.ramp_near", f(n.ramp_near));
        put("noise.ramp_far", f(n.ramp_far));
        put("noise.source", s(&n.source.to_string()));
        put("noise.seed", Value::Integer(n.seed as i64));
        let p = &self.planner;
        put("planner.horizon", int(p.horizon));
        put("planner.nodes", int(p.nodes));
        put("planner.n_denoise", int(p.n_denoise));
        put("planner.max_steps", int(p.max_steps));
        put("planner.success_radius", f(p.success_radius));
        put("planner.warm_start", s(p.warm_start.as_deref().unwrap_or("none")));
        put("planner.execute_steps", int(p.execute_steps));
        put("planner.record_scores", Value::Boolean(p.record_scores));
        put("algorithms", Value::Array(self.algorithms.iter().map(|a| s(a.name())).collect()));
        put("trials", int(self.seeds.len()));
        put("seeds", Value::Array(self.seeds.iter().map(|x| Value::Integer(*x as i64)).collect()));
        put("sample_sweep", Value::Array(self.sample_sweep.iter().map(|x| int(*x)).collect()));
        out
    }

    /// The resolved config plus `manifest.*` keys, in config grammar. Parsing
    /// it back gives the same config except for `output_dir`, which is left
    /// to the caller.
    pub fn to_manifest(&self) -> String {
        let mut text = String::new();
        text.push_str(&format!("manifest.version = \"{VERSION}\"\n"));
        for (k, v) in self.entries() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text
    }
}

fn check_seeds(key: &str, seeds: &[u64]) -> Result<()> {
    if let Some(s) = seeds.iter().find(|s| **s > i64::MAX as u64) {
        return Err(ConfigError::new(key, format!("seed {s} exceeds {}", i64::MAX)));
    }
    Ok(())
}

fn check_sweep(key: &str, sweep: &[usize]) -> Result<()> {
    if sweep.is_empty() {
        return Err(ConfigError::new(key, "needs at least one sample count"));
    }
    if sweep.contains(&0) {
        return Err(ConfigError::new(key, "sample counts must be >= 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAV: &str = r#"
experiment.id = "nav"
env.kind = "nav2d"
env.n_obstacles = 5
opt.algorithm = "wbfo"
opt.iterations = 2
trials = 3
seed = 10
sample_sweep = [4, 8]
"#;

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = ExperimentConfig::parse("env.kind = \"nav2d\"\nenv.dt = 0.05\n").unwrap();
        let b = ExperimentConfig::parse("[env]\nkind = \"nav2d\"\ndt = 0.05\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn base_seed_expands() {
        let c = ExperimentConfig::parse(NAV).unwrap();
        assert_eq!(c.seeds, vec![10, 11, 12]);
        assert_eq!(c.sample_sweep, vec![4, 8]);
        assert_eq!(c.algorithms, vec![Algorithm::Wbfo]);
    }

    #[test]
    fn manifest_round_trips() {
        let c = ExperimentConfig::parse(NAV).unwrap();
        let back = ExperimentConfig::parse(&c.to_manifest()).unwrap();
        assert_eq!(back, ExperimentConfig { output_dir: back.output_dir.clone(), ..c });
        let pend = ExperimentConfig::parse("env.kind = \"pendulum\"\nenv.start = \"upright\"\nopt.mppi_space = \"dense\"\n").unwrap();
        assert_eq!(ExperimentConfig::parse(&pend.to_manifest()).unwrap(), pend);
        let wall = ExperimentConfig::parse("env.kind = \"nav2d\"\nenv.barrier = \"wall\"\nplanner.warm_start = \"proportional\"\n").unwrap();
        assert_eq!(ExperimentConfig::parse(&wall.to_manifest()).unwrap(), wall);
    }

    #[test]
    fn diagnostics_name_the_key() {
        let cases = [
            ("env.kind = \"nav2d\"\nenv.bogus = 1\n", "env.bogus"),
            ("env.kind = \"nav2d\"\nopt.n_samples = \"many\"\n", "opt.n_samples"),
            ("env.kind = \"robot\"\n", "env.kind"),
            ("env.dt = 0.1\n", "env.kind"),
            ("env.kind = \"nav2d\"\nopt.algorithm = \"cem\"\n", "opt.algorithm"),
            ("env.kind = \"nav2d\"\nnoise.source = \"sobol\"\n", "noise.source"),
            ("env.kind = \"nav2d\"\nseeds = [1, 2]\ntrials = 3\n", "trials"),
            ("env.kind = \"nav2d\"\ntrials = 0\n", "trials"),
            ("env.kind = \"nav2d\"\nsample_sweep = [0]\n", "sample_sweep"),
            ("env.kind = \"nav2d\"\nopt.gamma = 0.0\n", "opt.gamma"),
            ("env.kind = \"pendulum\"\nenv.barrier = \"box\"\n", "env.barrier"),
            ("env.kind = \"nav2d\"\nenv.start = [1.0]\n", "env.start"),
            ("env.kind = \"nav2d\"\nplanner.warm_start = \"rl\"\n", "planner.warm_start"),
            ("env.kind = \"nav2d\"\nplanner.nodes = 2\n", "planner.nodes"),
            ("env.kind = \"nav2d\"\nopt.lambda = -1\n", "opt.lambda"),
            ("env.kind = \"nav2d\"\nenv.dt = 0\n", "env.dt"),
            ("env.kind = \"nav2d\"\nnoise.decay = 2.0\n", "noise.decay"),
            ("env.kind = \"nav2d\"\nseed = -1\n", "seed"),
        ];
        for (text, key) in cases {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.key, key, "{text:?} gave {err}");
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        let err = ExperimentConfig::parse("env.kind = \n").unwrap_err();
        assert_eq!(err.key, "<syntax>");
    }

    #[test]
    fn wbfo_runs_undiscounted() {
        let c = ExperimentConfig::parse(NAV).unwrap();
        assert_eq!(c.optimizer_for(Algorithm::Wbfo, 8).gamma, 0.0);
        assert_eq!(c.optimizer_for(Algorithm::Avwbfo, 8).gamma, 1.0);
        assert_eq!(c.trial_spec(Algorithm::Mppi, 8, 3).optimizer.n_samples, 8);
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::parse(NAV).unwrap();
        c.set_base_seed(100).unwrap();
        assert_eq!(c.seeds, vec![100, 101, 102]);
        assert!(c.set_sample_sweep(vec![]).is_err());
        c.set_algorithms(vec![Algorithm::Mppi, Algorithm::Avwbfo]).unwrap();
        assert_eq!(c.algorithms.len(), 2);
    }
}
