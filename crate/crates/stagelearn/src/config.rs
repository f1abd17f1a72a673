//! Experiment configuration files.
//!
//! The format is flat `key = value` text. Keys are dotted (`sim.n`); a
//! `[section]` header prefixes the keys that follow it, so `[sim]` then
//! `n = 100` is the same as `sim.n = 100`. `#` starts a comment. Lists are
//! comma separated. Unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use stagelearn_core::learners::default_stage_len;
use stagelearn_core::sim::{GameSpec, LearnerKind, LearnerSpec, RunConfig};
use stagelearn_core::{Error as CoreError, MixedAction, PayoffMatrix, PayoffMode};

use crate::error::{CliError, Result};
use crate::matrix_file;

/// Every accepted key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "game.kind",
        "contribution",
        "contribution | pd | climbing | matrix",
    ),
    ("game.mode", "meanfield", "meanfield | matching"),
    (
        "game.penalty_n",
        "20",
        "extra cost term for contributions above 8",
    ),
    (
        "game.matrix",
        "",
        "inline matrix for kind = matrix, rows separated by `;`",
    ),
    (
        "game.matrix_file",
        "",
        "matrix file for kind = matrix, relative to the config",
    ),
    ("learner.kind", "stage", "stage | regret"),
    (
        "learner.epsilon",
        "0.05",
        "exploration rate of stage learners",
    ),
    (
        "learner.tau",
        "250",
        "stage length in rounds, or `auto` for ceil(1/epsilon^2)",
    ),
    (
        "learner.mu",
        "auto",
        "regret-matching inertia; auto = 2 * payoff range * (k - 1)",
    ),
    ("learner.delta", "0.05", "regret-matching uniform floor"),
    ("sim.n", "100", "population size"),
    ("sim.rounds", "3000", "rounds per run"),
    (
        "sim.churn_rate",
        "0",
        "per-stage replacement probability of each learner",
    ),
    (
        "sim.fixed_fraction",
        "0",
        "share of agents that play a fixed strategy",
    ),
    ("sim.fixed_base", "0", "base action of fixed agents"),
    ("sim.fixed_explore", "0", "exploration rate of fixed agents"),
    ("sim.seed", "0", "master seed"),
    (
        "sim.target",
        "8 (contribution), 0 (matrix games)",
        "action distances are measured from",
    ),
    (
        "sim.eta",
        "1.0",
        "slack of the best replies counted in br_fraction",
    ),
    ("sim.threshold", "0.5", "distance that counts as converged"),
    ("sweep.n", "sim.n", "population sizes to run"),
    ("sweep.learners", "learner.kind", "learner kinds to run"),
    (
        "sweep.seeds",
        "1",
        "number of seeds: sim.seed, sim.seed + 1, ...",
    ),
    (
        "sweep.seed_list",
        "",
        "explicit seeds, instead of sweep.seeds",
    ),
    (
        "output.trace_stride",
        "1",
        "write every m-th round to the round trace; 0 = none",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    Contribution,
    Pd,
    Climbing,
    Matrix,
}

impl GameKind {
    pub fn name(self) -> &'static str {
        match self {
            GameKind::Contribution => "contribution",
            GameKind::Pd => "pd",
            GameKind::Climbing => "climbing",
            GameKind::Matrix => "matrix",
        }
    }

    pub fn parse(value: &str, key: &str) -> Result<Self> {
        match value {
            "contribution" => Ok(GameKind::Contribution),
            "pd" => Ok(GameKind::Pd),
            "climbing" => Ok(GameKind::Climbing),
            "matrix" => Ok(GameKind::Matrix),
            other => Err(CliError::config(
                key,
                format!("unknown game `{other}` (contribution, pd, climbing, matrix)"),
            )),
        }
    }
}

/// A resolved experiment: one base run plus the sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub game_kind: GameKind,
    pub base: RunConfig,
    pub populations: Vec<usize>,
    pub learners: Vec<LearnerKind>,
    pub seeds: Vec<u64>,
    pub trace_stride: usize,
}

/// Raw `key = value` pairs in file order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| CliError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                reason,
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(format!("unterminated section header `{line}`")))?
                    .trim();
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let key = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if raw.values.contains_key(&key) {
                return Err(CliError::config(key, "given more than once"));
            }
            raw.set(&key, value.trim())?;
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut raw = Self::parse(&text, &path.display().to_string())?;
        raw.base_dir = path.parent().map(Path::to_path_buf);
        Ok(raw)
    }

    /// Sets or overrides one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(CliError::config(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_num(v, key),
        }
    }

    pub fn resolve(&self) -> Result<Experiment> {
        let game_kind =
            GameKind::parse(self.get("game.kind").unwrap_or("contribution"), "game.kind")?;
        let mode = match self.get("game.mode").unwrap_or("meanfield") {
            "meanfield" => PayoffMode::MeanField,
            "matching" => PayoffMode::Matching,
            other => {
                return Err(CliError::config(
                    "game.mode",
                    format!("unknown mode `{other}` (meanfield, matching)"),
                ))
            }
        };
        if game_kind != GameKind::Contribution && self.get("game.penalty_n").is_some() {
            return Err(CliError::config(
                "game.penalty_n",
                "only applies to the contribution game",
            ));
        }
        let game = match game_kind {
            GameKind::Contribution => GameSpec::Contribution {
                penalty_n: self.num("game.penalty_n", stagelearn_core::games::DEFAULT_PENALTY_N)?,
            },
            GameKind::Pd => GameSpec::Matrix(matrix_file::parse_matrix(
                matrix_file::PRISONERS_DILEMMA,
                "pd",
            )?),
            GameKind::Climbing => GameSpec::Matrix(matrix_file::parse_matrix(
                matrix_file::CLIMBING,
                "climbing",
            )?),
            GameKind::Matrix => GameSpec::Matrix(self.matrix()?),
        };
        if game_kind != GameKind::Matrix {
            for key in ["game.matrix", "game.matrix_file"] {
                if self.get(key).is_some() {
                    return Err(CliError::config(key, "only applies to game.kind = matrix"));
                }
            }
        }

        let kind = parse_learner(self.get("learner.kind").unwrap_or("stage"), "learner.kind")?;
        let epsilon = self.num("learner.epsilon", 0.05)?;
        let stage_len = match self.get("learner.tau") {
            Some("auto") => default_stage_len(epsilon).map_err(|e| keyed("learner.tau", e))?,
            Some(v) => parse_num(v, "learner.tau")?,
            None => 250,
        };
        let inertia = match self.get("learner.mu") {
            None | Some("auto") => None,
            Some(v) => Some(parse_num(v, "learner.mu")?),
        };
        let fixed_base = self.num("sim.fixed_base", 0usize)?;
        let fixed_explore = self.num("sim.fixed_explore", 0.0)?;
        let fixed_strategy = MixedAction::new(fixed_base, fixed_explore)
            .map_err(|e| keyed("sim.fixed_explore", e))?;
        let default_target = if game_kind == GameKind::Contribution {
            8
        } else {
            0
        };

        let base = RunConfig {
            game,
            mode,
            learner: LearnerSpec {
                kind,
                epsilon,
                stage_len,
                inertia,
                floor: self.num("learner.delta", 0.05)?,
            },
            population: self.num("sim.n", 100)?,
            rounds: self.num("sim.rounds", 3000)?,
            churn_rate: self.num("sim.churn_rate", 0.0)?,
            fixed_fraction: self.num("sim.fixed_fraction", 0.0)?,
            fixed_strategy,
            seed: self.num("sim.seed", 0)?,
            target: self.num("sim.target", default_target)?,
            eta: self.num("sim.eta", 1.0)?,
            threshold: self.num("sim.threshold", 0.5)?,
        };

        let populations = match self.get("sweep.n") {
            Some(v) => parse_list(v, "sweep.n", |t| parse_num(t, "sweep.n"))?,
            None => vec![base.population],
        };
        let learners = match self.get("sweep.learners") {
            Some(v) => parse_list(v, "sweep.learners", |t| parse_learner(t, "sweep.learners"))?,
            None => vec![kind],
        };
        let seeds = match (self.get("sweep.seeds"), self.get("sweep.seed_list")) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "sweep.seed_list",
                    "give either sweep.seeds or sweep.seed_list",
                ))
            }
            (_, Some(v)) => parse_list(v, "sweep.seed_list", |t| parse_num(t, "sweep.seed_list"))?,
            (count, None) => {
                let count: u64 = count
                    .map(|c| parse_num(c, "sweep.seeds"))
                    .transpose()?
                    .unwrap_or(1);
                if count == 0 {
                    return Err(CliError::config("sweep.seeds", "need at least one seed"));
                }
                (0..count).map(|i| base.seed.wrapping_add(i)).collect()
            }
        };
        if has_repeats(&seeds) {
            return Err(CliError::config(
                "sweep.seed_list",
                "seeds must be distinct",
            ));
        }
        if has_repeats(&learners) {
            return Err(CliError::config("sweep.learners", "repeated learner kind"));
        }
        if has_repeats(&populations) {
            return Err(CliError::config("sweep.n", "repeated population size"));
        }

        let experiment = Experiment {
            game_kind,
            base,
            populations,
            learners,
            seeds,
            trace_stride: self.num("output.trace_stride", 1)?,
        };
        for point in experiment.points() {
            point.config.validate().map_err(|e| match e {
                CoreError::InvalidParameter { name, reason } => CliError::config(name, reason),
                other => CliError::Core(other),
            })?;
        }
        Ok(experiment)
    }

    fn matrix(&self) -> Result<PayoffMatrix> {
        match (self.get("game.matrix"), self.get("game.matrix_file")) {
            (Some(_), Some(_)) => Err(CliError::config(
                "game.matrix_file",
                "give either game.matrix or game.matrix_file",
            )),
            (Some(inline), None) => matrix_file::parse_inline(inline, "game.matrix"),
            (None, Some(file)) => {
                let path = match &self.base_dir {
                    Some(dir) => dir.join(file),
                    None => PathBuf::from(file),
                };
                matrix_file::read_matrix(&path)
            }
            (None, None) => Err(CliError::config(
                "game.matrix",
                "game.kind = matrix needs a matrix",
            )),
        }
    }
}

fn has_repeats<T: PartialEq>(items: &[T]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, x)| items[..i].contains(x))
}

fn keyed(key: &str, e: CoreError) -> CliError {
    CliError::config(key, e.to_string())
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::config(key, format!("cannot parse `{value}`")))
}

fn parse_list<T>(value: &str, key: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(item)
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(CliError::config(key, "empty list"));
    }
    Ok(items)
}

fn parse_learner(value: &str, key: &str) -> Result<LearnerKind> {
    match value.trim() {
        "stage" => Ok(LearnerKind::Stage),
        "regret" => Ok(LearnerKind::Regret),
        other => Err(CliError::config(
            key,
            format!("unknown learner `{other}` (stage, regret)"),
        )),
    }
}

/// One (population, learner, seed) run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub config: RunConfig,
}

impl Point {
    pub fn label(&self) -> String {
        format!(
            "{}_n{}_s{}",
            self.config.learner.kind.name(),
            self.config.population,
            self.config.seed
        )
    }
}

impl Experiment {
    pub fn from_path(path: &Path) -> Result<Self> {
        RawConfig::read(path)?.resolve()
    }

    /// Runs in sweep order: learner, then population, then seed.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for &kind in &self.learners {
            for &n in &self.populations {
                for &seed in &self.seeds {
                    let mut config = self.base.clone();
                    config.learner.kind = kind;
                    config.population = n;
                    config.seed = seed;
                    out.push(Point { config });
                }
            }
        }
        out
    }

    /// Fully resolved settings of one run, as config lines.
    pub fn echo(&self, config: &RunConfig) -> Vec<(&'static str, String)> {
        let mut lines = vec![("game.kind", self.game_kind.name().to_string())];
        match &config.game {
            GameSpec::Contribution { penalty_n } => {
                lines.push(("game.penalty_n", penalty_n.to_string()))
            }
            GameSpec::Matrix(m) => {
                if self.game_kind == GameKind::Matrix {
                    lines.push(("game.matrix", matrix_file::to_inline(m)));
                }
            }
        }
        let l = &config.learner;
        lines.extend([
            ("game.mode", config.mode.name().to_string()),
            ("learner.kind", l.kind.name().to_string()),
            ("learner.epsilon", l.epsilon.to_string()),
            ("learner.tau", l.stage_len.to_string()),
            (
                "learner.mu",
                l.inertia
                    .map_or_else(|| "auto".to_string(), |m| m.to_string()),
            ),
            ("learner.delta", l.floor.to_string()),
            ("sim.n", config.population.to_string()),
            ("sim.rounds", config.rounds.to_string()),
            ("sim.churn_rate", config.churn_rate.to_string()),
            ("sim.fixed_fraction", config.fixed_fraction.to_string()),
            ("sim.fixed_base", config.fixed_strategy.base().to_string()),
            (
                "sim.fixed_explore",
                config.fixed_strategy.explore().to_string(),
            ),
            ("sim.seed", config.seed.to_string()),
            ("sim.target", config.target.to_string()),
            ("sim.eta", config.eta.to_string()),
            ("sim.threshold", config.threshold.to_string()),
        ]);
        lines
    }
}
