//! Round loop over a finite population.
//!
//! Each round every agent acts, payoffs are realized (mean-field or random
//! matching), and every agent observes its own payoff. Stage boundaries are
//! global: every `stage_len` rounds the engine records a stage snapshot and
//! applies churn. A run is a pure function of its [`RunConfig`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dynamics::best_reply_set;
use crate::error::{Error, Result};
use crate::game::{ActionDistribution, AnonymousGame, MixedAction, PayoffMatrix};
use crate::games::{ContributionGame, Game, MatrixGame, PayoffMode, DEFAULT_PENALTY_N};
use crate::learners::{Agent, FixedAgent, RegretMatcher, StageLearner};
use crate::rng::{agent_rng, engine_rng, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub enum GameSpec {
    Contribution { penalty_n: u32 },
    Matrix(PayoffMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    Stage,
    Regret,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Stage => "stage",
            LearnerKind::Regret => "regret",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// ε for stage learners.
    pub epsilon: f64,
    /// τ: stage length in rounds. Also the metric window for every learner kind.
    pub stage_len: usize,
    /// μ for regret matchers; `None` means `2·(payoff range)·(k − 1)`.
    pub inertia: Option<f64>,
    /// δ for regret matchers.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: GameSpec,
    pub mode: PayoffMode,
    pub learner: LearnerSpec,
    pub population: usize,
    pub rounds: usize,
    /// Per-stage probability that a learner is replaced by a fresh one.
    pub churn_rate: f64,
    /// Fraction of the population (rounded) made of fixed-strategy agents.
    pub fixed_fraction: f64,
    pub fixed_strategy: MixedAction,
    pub seed: u64,
    /// Equilibrium action the distance metric is measured from.
    pub target: usize,
    /// Slack of the best replies counted in the best-reply fraction.
    pub eta: f64,
    /// Distance below which a run counts as converged.
    pub threshold: f64,
}

impl Default for RunConfig {
    /// Mean-field contribution game, 100 stage learners, ε = 0.05, τ = 250,
    /// 3000 rounds.
    fn default() -> Self {
        Self {
            game: GameSpec::Contribution {
                penalty_n: DEFAULT_PENALTY_N,
            },
            mode: PayoffMode::MeanField,
            learner: LearnerSpec {
                kind: LearnerKind::Stage,
                epsilon: 0.05,
                stage_len: 250,
                inertia: None,
                floor: 0.05,
            },
            population: 100,
            rounds: 3000,
            churn_rate: 0.0,
            fixed_fraction: 0.0,
            fixed_strategy: MixedAction::pure(0),
            seed: 0,
            target: 8,
            eta: 1.0,
            threshold: 0.5,
        }
    }
}

fn unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} is not in [0, 1]")))
    }
}

impl RunConfig {
    pub fn build_game(&self) -> Result<Game> {
        Ok(match &self.game {
            GameSpec::Contribution { penalty_n } => {
                Game::Contribution(ContributionGame::new(*penalty_n, self.mode))
            }
            GameSpec::Matrix(m) => Game::Matrix(MatrixGame::new(m.clone(), self.mode)),
        })
    }

    pub fn num_actions(&self) -> usize {
        match &self.game {
            GameSpec::Contribution { .. } => crate::games::CONTRIBUTION_ACTIONS,
            GameSpec::Matrix(m) => m.size(),
        }
    }

    pub fn fixed_agents(&self) -> usize {
        libm::round(self.fixed_fraction * self.population as f64) as usize
    }

    /// Resolved μ for regret matchers.
    pub fn inertia(&self) -> Result<f64> {
        let game = self.build_game()?;
        Ok(self.learner.inertia.unwrap_or_else(|| {
            RegretMatcher::default_inertia(game.matrix().range(), self.num_actions())
        }))
    }

    /// Rejects invalid settings; error names use the config-file keys.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_actions();
        if self.population < 2 {
            return Err(Error::param("sim.n", "population needs at least 2 agents"));
        }
        if self.mode == PayoffMode::Matching && self.population % 2 == 1 {
            return Err(Error::param(
                "sim.n",
                format!(
                    "random matching needs an even population, got {}",
                    self.population
                ),
            ));
        }
        let spec = &self.learner;
        if spec.stage_len == 0 {
            return Err(Error::param("learner.tau", "must be at least 1"));
        }
        if self.rounds < spec.stage_len {
            return Err(Error::param(
                "sim.rounds",
                format!(
                    "{} rounds is shorter than one stage ({})",
                    self.rounds, spec.stage_len
                ),
            ));
        }
        match spec.kind {
            LearnerKind::Stage => {
                if !(0.0..1.0).contains(&spec.epsilon) {
                    return Err(Error::param("learner.epsilon", "must lie in [0, 1)"));
                }
            }
            LearnerKind::Regret => {
                if let Some(mu) = spec.inertia {
                    if !(mu > 0.0 && mu.is_finite()) {
                        return Err(Error::param("learner.mu", "must be positive"));
                    }
                }
                if !(spec.floor > 0.0 && spec.floor < 1.0) {
                    return Err(Error::param("learner.delta", "must lie in (0, 1)"));
                }
                if !(self.inertia()? > 0.0) {
                    return Err(Error::param("learner.mu", "payoff range is zero; set mu"));
                }
            }
        }
        unit_interval("sim.churn_rate", self.churn_rate)?;
        unit_interval("sim.fixed_fraction", self.fixed_fraction)?;
        if self.fixed_strategy.base() >= k {
            return Err(Error::param("sim.fixed_base", "out of range for the game"));
        }
        if self.target >= k {
            return Err(Error::param("sim.target", "out of range for the game"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::param("sim.eta", "must be nonnegative"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::param("sim.threshold", "must be nonnegative"));
        }
        Ok(())
    }

    fn fresh_learner<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Agent> {
        let k = self.num_actions();
        match self.learner.kind {
            LearnerKind::Stage => {
                let base = rng.random_range(0..k);
                Ok(Agent::Stage(StageLearner::new(
                    k,
                    base,
                    self.learner.epsilon,
                    self.learner.stage_len,
                )?))
            }
            LearnerKind::Regret => Ok(Agent::Regret(RegretMatcher::new(
                k,
                self.inertia()?,
                self.learner.floor,
            )?)),
        }
    }
}

/// A finite population; agent slot `i` owns its own RNG stream.
#[derive(Debug, Clone)]
pub struct Population {
    agents: Vec<Agent>,
    rngs: Vec<SimRng>,
}

impl Population {
    pub fn new(agents: Vec<Agent>, seed: u64) -> Self {
        let rngs = (0..agents.len()).map(|i| agent_rng(seed, i)).collect();
        Self { agents, rngs }
    }

    /// Learners first, then the configured fixed agents.
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let k = config.num_actions();
        let n = config.population;
        let fixed = config.fixed_agents();
        let mut rngs: Vec<SimRng> = (0..n).map(|i| agent_rng(config.seed, i)).collect();
        let agents = rngs
            .iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                if i >= n - fixed {
                    Ok(Agent::Fixed(FixedAgent::new(k, config.fixed_strategy)?))
                } else {
                    config.fresh_learner(rng)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { agents, rngs })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn bases(&self) -> Vec<usize> {
        self.agents.iter().map(Agent::base).collect()
    }

    pub fn act(&mut self) -> Vec<usize> {
        self.agents
            .iter_mut()
            .zip(&mut self.rngs)
            .map(|(agent, rng)| agent.act(rng))
            .collect()
    }

    /// Feeds each agent its payoff; returns how many stages closed.
    pub fn observe(&mut self, actions: &[usize], payoffs: &[f64]) -> Result<usize> {
        Error::check_dim(self.len(), actions.len())?;
        Error::check_dim(self.len(), payoffs.len())?;
        let mut closed = 0;
        for ((agent, &a), &p) in self.agents.iter_mut().zip(actions).zip(payoffs) {
            if agent.observe(a, p)? {
                closed += 1;
            }
        }
        Ok(closed)
    }
}

/// Each agent receives its exact expected payoff against the empirical
/// distribution of the other `n − 1` agents' actions.
pub fn realize_meanfield<G: AnonymousGame + ?Sized>(
    actions: &[usize],
    game: &G,
) -> Result<Vec<f64>> {
    let n = actions.len();
    if n < 2 {
        return Err(Error::param(
            "sim.n",
            "mean-field payoffs need at least 2 agents",
        ));
    }
    let k = game.num_actions();
    let mut counts = vec![0u64; k];
    for &a in actions {
        if a >= k {
            return Err(Error::ActionOutOfRange {
                action: a,
                actions: k,
            });
        }
        counts[a] += 1;
    }
    let mut by_action: Vec<Option<f64>> = vec![None; k];
    for a in 0..k {
        if counts[a] == 0 {
            continue;
        }
        counts[a] -= 1;
        let others = ActionDistribution::from_counts(&counts)?;
        counts[a] += 1;
        by_action[a] = Some(game.expected_payoff(a, &others));
    }
    Ok(actions
        .iter()
        .map(|&a| by_action[a].expect("every played action is priced"))
        .collect())
}

/// Pairs agents by a uniformly random perfect matching; agent `i` matched
/// with `j` receives `matrix[a_i][a_j]`.
pub fn realize_matching<R: Rng + ?Sized>(
    actions: &[usize],
    matrix: &PayoffMatrix,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = actions.len();
    if n % 2 == 1 || n == 0 {
        return Err(Error::param(
            "sim.n",
            format!("random matching needs an even population, got {n}"),
        ));
    }
    let k = matrix.size();
    if let Some(&a) = actions.iter().find(|&&a| a >= k) {
        return Err(Error::ActionOutOfRange {
            action: a,
            actions: k,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut payoffs = vec![0.0; n];
    for pair in order.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        payoffs[i] = matrix.get(actions[i], actions[j]);
        payoffs[j] = matrix.get(actions[j], actions[i]);
    }
    Ok(payoffs)
}

/// Replaces each non-fixed agent independently with probability `rate` by
/// `fresh(rng)`. Returns the number replaced.
pub fn apply_churn<R, F>(
    population: &mut Population,
    rate: f64,
    rng: &mut R,
    mut fresh: F,
) -> Result<usize>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Agent>,
{
    unit_interval("sim.churn_rate", rate)?;
    if rate == 0.0 {
        return Ok(0);
    }
    let mut replaced = 0;
    for agent in population.agents.iter_mut() {
        if agent.is_fixed() {
            continue;
        }
        let u: f64 = rng.random();
        if u < rate {
            *agent = fresh(rng)?;
            replaced += 1;
        }
    }
    Ok(replaced)
}

/// `Σ_a ρ(a)·|a − target|`.
pub fn distance_from_equilibrium(rho: &ActionDistribution, target: usize) -> Result<f64> {
    if target >= rho.len() {
        return Err(Error::ActionOutOfRange {
            action: target,
            actions: rho.len(),
        });
    }
    Ok(rho
        .weights()
        .iter()
        .enumerate()
        .map(|(a, w)| w * a.abs_diff(target) as f64)
        .sum())
}

/// Empirical frequency of actions over a window of rounds.
pub fn measure_stage_rho<'a, I>(window: I, actions: usize) -> Result<ActionDistribution>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut counts = vec![0u64; actions];
    for round in window {
        for &a in round {
            if a >= actions {
                return Err(Error::ActionOutOfRange { action: a, actions });
            }
            counts[a] += 1;
        }
    }
    ActionDistribution::from_counts(&counts)
}

/// Fraction of agents whose base is an η-best reply to `rho`.
pub fn best_reply_fraction<G: AnonymousGame + ?Sized>(
    population: &Population,
    rho: &ActionDistribution,
    eta: f64,
    game: &G,
) -> Result<f64> {
    fraction_in(&population.bases(), &best_reply_set(rho, eta, game)?)
}

fn fraction_in(bases: &[usize], replies: &[usize]) -> Result<f64> {
    if bases.is_empty() {
        return Err(Error::param("population", "empty"));
    }
    let hits = bases.iter().filter(|b| replies.contains(b)).count();
    Ok(hits as f64 / bases.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    /// Index of the last round of the stage.
    pub end_round: usize,
    /// Realized actions over the stage.
    pub rho: ActionDistribution,
    /// Distance of `rho` from the target.
    pub distance: f64,
    /// Distance of the post-update base distribution from the target.
    pub base_distance: f64,
    /// Fraction of post-update bases in `ABR_η(rho)`.
    pub br_fraction: f64,
    /// Agents replaced by churn after the stage.
    pub replaced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub actions: usize,
    pub population: usize,
    pub stage_len: usize,
    pub seed: u64,
    realized: Vec<u32>,
    bases: Vec<u32>,
    /// Distance of each round's realized distribution from the target.
    pub round_distance: Vec<f64>,
    /// Fraction of bases in effect during the round that are η-best replies
    /// to that round's realized distribution.
    pub round_br_fraction: Vec<f64>,
    pub stages: Vec<StageRecord>,
    /// Position of the engine RNG stream at the end of the run.
    pub engine_word_pos: u128,
}

impl RunTrace {
    pub fn rounds(&self) -> usize {
        self.round_distance.len()
    }

    pub fn realized_counts(&self, round: usize) -> &[u32] {
        &self.realized[round * self.actions..(round + 1) * self.actions]
    }

    pub fn base_counts(&self, round: usize) -> &[u32] {
        &self.bases[round * self.actions..(round + 1) * self.actions]
    }

    pub fn realized_rho(&self, round: usize) -> ActionDistribution {
        counts_to_rho(self.realized_counts(round))
    }

    pub fn base_rho(&self, round: usize) -> ActionDistribution {
        counts_to_rho(self.base_counts(round))
    }

    pub fn final_stage(&self) -> Option<&StageRecord> {
        self.stages.last()
    }

    /// End round of the first stage from which every later stage distance
    /// stays below `threshold`.
    pub fn convergence_round(&self, threshold: f64) -> Option<usize> {
        let mut first = None;
        for s in &self.stages {
            if s.distance < threshold {
                first.get_or_insert(s.end_round);
            } else {
                first = None;
            }
        }
        first
    }
}

fn counts_to_rho(counts: &[u32]) -> ActionDistribution {
    let wide: Vec<u64> = counts.iter().map(|&c| u64::from(c)).collect();
    ActionDistribution::from_counts(&wide).expect("a round has at least one agent")
}

/// A run in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: RunConfig,
    game: Game,
    population: Population,
    engine: SimRng,
    round: usize,
    stage_counts: Vec<u64>,
    trace: RunTrace,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let game = config.build_game()?;
        let population = Population::from_config(config)?;
        let k = config.num_actions();
        Ok(Self {
            trace: RunTrace {
                actions: k,
                population: config.population,
                stage_len: config.learner.stage_len,
                seed: config.seed,
                realized: Vec::with_capacity(config.rounds * k),
                bases: Vec::with_capacity(config.rounds * k),
                round_distance: Vec::with_capacity(config.rounds),
                round_br_fraction: Vec::with_capacity(config.rounds),
                stages: Vec::new(),
                engine_word_pos: 0,
            },
            config: config.clone(),
            game,
            population,
            engine: engine_rng(config.seed),
            round: 0,
            stage_counts: vec![0; k],
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Plays one round. Returns the actions played.
    pub fn step(&mut self) -> Result<Vec<usize>> {
        let k = self.trace.actions;
        let n = self.population.len();
        let bases = self.population.bases();
        let actions = self.population.act();
        let payoffs = match self.game.mode() {
            PayoffMode::MeanField => realize_meanfield(&actions, &self.game)?,
            PayoffMode::Matching => {
                realize_matching(&actions, self.game.matrix(), &mut self.engine)?
            }
        };
        self.population.observe(&actions, &payoffs)?;

        let mut realized = vec![0u32; k];
        for &a in &actions {
            realized[a] += 1;
            self.stage_counts[a] += 1;
        }
        let mut base_counts = vec![0u32; k];
        for &b in &bases {
            base_counts[b] += 1;
        }
        let rho = counts_to_rho(&realized);
        let replies = best_reply_set(&rho, self.config.eta, &self.game)?;
        self.trace
            .round_distance
            .push(distance_from_equilibrium(&rho, self.config.target)?);
        self.trace
            .round_br_fraction
            .push(fraction_in(&bases, &replies)?);
        self.trace.realized.extend_from_slice(&realized);
        self.trace.bases.extend_from_slice(&base_counts);
        debug_assert_eq!(actions.len(), n);

        self.round += 1;
        if self.round.is_multiple_of(self.config.learner.stage_len) {
            self.close_stage()?;
        }
        Ok(actions)
    }

    fn close_stage(&mut self) -> Result<()> {
        let rho = ActionDistribution::from_counts(&self.stage_counts)?;
        let distance = distance_from_equilibrium(&rho, self.config.target)?;
        let br_fraction = best_reply_fraction(&self.population, &rho, self.config.eta, &self.game)?;
        let k = self.trace.actions;
        let base_rho = ActionDistribution::from_actions(k, &self.population.bases())?;
        let base_distance = distance_from_equilibrium(&base_rho, self.config.target)?;
        let config = &self.config;
        let replaced = apply_churn(
            &mut self.population,
            config.churn_rate,
            &mut self.engine,
            |rng| config.fresh_learner(rng),
        )?;
        self.trace.stages.push(StageRecord {
            stage: self.trace.stages.len(),
            end_round: self.round - 1,
            rho,
            distance,
            base_distance,
            br_fraction,
            replaced,
        });
        self.stage_counts.iter_mut().for_each(|c| *c = 0);
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunTrace> {
        while self.round < self.config.rounds {
            self.step()?;
        }
        self.trace.engine_word_pos = self.engine.get_word_pos();
        Ok(self.trace)
    }
}

/// Runs `config` to completion.
pub fn run(config: &RunConfig) -> Result<RunTrace> {
    Simulation::new(config)?.finish()
}

/// How payoffs reach learners facing a frozen population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Exact expected payoff against `rho`.
    MeanField,
    /// Payoff against one opponent drawn from `rho`.
    Matching,
}

/// Where the learners' bases start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialBases {
    /// Uniformly random, drawn from each learner's stream.
    Uniform,
    /// Every learner starts on the given action.
    Action(usize),
}

/// One stage of independent ε-stage learners facing a frozen distribution.
///
/// Nobody's behaviour feeds back into `rho`, so this isolates how reliably a
/// single stage finds an η-best reply.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStage {
    pub rho: ActionDistribution,
    pub learners: usize,
    pub explore: f64,
    pub stage_len: usize,
    pub eta: f64,
    pub oracle: OracleMode,
    pub initial: InitialBases,
    pub seed: u64,
}

impl StationaryStage {
    /// Runs the stage; returns the new bases.
    pub fn run(&self, game: &Game) -> Result<Vec<usize>> {
        let k = game.num_actions();
        Error::check_dim(k, self.rho.len())?;
        if self.learners == 0 {
            return Err(Error::param("learners", "need at least one learner"));
        }
        if let InitialBases::Action(a) = self.initial {
            if a >= k {
                return Err(Error::ActionOutOfRange {
                    action: a,
                    actions: k,
                });
            }
        }
        let exact: Vec<f64> = (0..k).map(|a| game.expected_payoff(a, &self.rho)).collect();
        let cumulative: Vec<f64> = self
            .rho
            .weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut bases = Vec::with_capacity(self.learners);
        for i in 0..self.learners {
            let mut rng = agent_rng(self.seed, i);
            let base = match self.initial {
                InitialBases::Uniform => rng.random_range(0..k),
                InitialBases::Action(a) => a,
            };
            let mut learner = StageLearner::new(k, base, self.explore, self.stage_len)?;
            for _ in 0..self.stage_len {
                let a = learner.act(&mut rng);
                let payoff = match self.oracle {
                    OracleMode::MeanField => exact[a],
                    OracleMode::Matching => {
                        let u: f64 = rng.random();
                        let b = cumulative.iter().position(|&c| u < c).unwrap_or(k - 1);
                        game.pair_payoff(a, b)
                    }
                };
                learner.observe(a, payoff)?;
            }
            bases.push(learner.base());
        }
        Ok(bases)
    }

    /// Fraction of learners whose new base is an η-best reply to `rho`.
    pub fn best_reply_fraction(&self, game: &Game) -> Result<f64> {
        let bases = self.run(game)?;
        fraction_in(&bases, &best_reply_set(&self.rho, self.eta, game)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pd() -> PayoffMatrix {
        PayoffMatrix::new(vec![vec![3.0, 0.0], vec![5.0, 1.0]]).unwrap()
    }

    fn pd_config(n: usize, mode: PayoffMode) -> RunConfig {
        RunConfig {
            game: GameSpec::Matrix(pd()),
            mode,
            population: n,
            rounds: 20,
            target: 1,
            learner: LearnerSpec {
                kind: LearnerKind::Stage,
                epsilon: 0.1,
                stage_len: 5,
                inertia: None,
                floor: 0.05,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn validation_names_offending_keys() {
        let mut c = RunConfig::default();
        c.rounds = 100;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidParameter {
                name: "sim.rounds",
                ..
            })
        ));
        let mut c = RunConfig::default();
        c.mode = PayoffMode::Matching;
        c.population = 11;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidParameter { name: "sim.n", .. })
        ));
        let mut c = RunConfig::default();
        c.churn_rate = 1.5;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidParameter {
                name: "sim.churn_rate",
                ..
            })
        ));
        let mut c = RunConfig::default();
        c.target = 20;
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn two_fixed_agents_show_their_profile() {
        let mut c = pd_config(2, PayoffMode::MeanField);
        c.rounds = 1;
        c.learner.stage_len = 1;
        c.fixed_fraction = 1.0;
        c.fixed_strategy = MixedAction::pure(0);
        let trace = run(&c).unwrap();
        assert_eq!(trace.rounds(), 1);
        assert_eq!(trace.realized_counts(0), &[2, 0]);
        assert_eq!(trace.base_counts(0), &[2, 0]);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut c = RunConfig::default();
        c.rounds = 500;
        c.churn_rate = 0.1;
        c.seed = 42;
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
        let mut m = pd_config(10, PayoffMode::Matching);
        m.seed = 3;
        assert_eq!(run(&m).unwrap(), run(&m).unwrap());
        let mut other = c.clone();
        other.seed = 43;
        assert_ne!(run(&c).unwrap(), run(&other).unwrap());
    }

    #[test]
    fn meanfield_examples() {
        let game = ContributionGame::new(20, PayoffMode::MeanField);
        let p = realize_meanfield(&[8, 8, 0], &game).unwrap();
        assert!((p[0] - 15.0).abs() < 1e-12);
        assert!((p[1] - 15.0).abs() < 1e-12);
        // Agent 2 sees y = 8 and contributes nothing.
        assert_eq!(p[2], 0.0);

        for a in [0usize, 3, 8, 12] {
            let p = realize_meanfield(&[a; 5], &game).unwrap();
            let expected = 2.0 * (a * a) as f64 - crate::games::contribution_cost(a, 20).unwrap();
            assert!(p.iter().all(|&x| (x - expected).abs() < 1e-9));
        }

        let pd_game = MatrixGame::new(pd(), PayoffMode::MeanField);
        assert_eq!(
            realize_meanfield(&[0, 1], &pd_game).unwrap(),
            vec![0.0, 5.0]
        );
        assert!(realize_meanfield(&[0], &pd_game).is_err());
    }

    #[test]
    fn matching_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            realize_matching(&[1, 1], &pd(), &mut rng).unwrap(),
            vec![1.0, 1.0]
        );
        let p = realize_matching(&[0; 8], &pd(), &mut rng).unwrap();
        assert!(p.iter().all(|&x| x == 3.0));
        assert!(realize_matching(&[0, 1, 1], &pd(), &mut rng).is_err());
    }

    #[test]
    fn matching_half_and_half() {
        // A defector meets one of 500 cooperators among its 999 possible
        // partners: mean payoff 5·500/999 + 1·499/999.
        let n = 1000;
        let actions: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = realize_matching(&actions, &pd(), &mut rng).unwrap();
        let defectors: Vec<f64> = (0..n).filter(|i| i % 2 == 1).map(|i| p[i]).collect();
        let mean = defectors.iter().sum::<f64>() / defectors.len() as f64;
        let q: f64 = 500.0 / 999.0;
        let expected = 5.0 * q + (1.0 - q);
        // Partner type is Bernoulli(q) with payoff gap 4; 500 samples.
        let sigma = 4.0 * (q * (1.0 - q) / 500.0).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * sigma,
            "{mean} vs {expected}"
        );
        assert!((expected - 3.0).abs() < 0.01);
    }

    #[test]
    fn zero_sum_matching_conserves_payoff() {
        let rps = PayoffMatrix::new(vec![
            vec![0.0, -1.0, 1.0],
            vec![1.0, 0.0, -1.0],
            vec![-1.0, 1.0, 0.0],
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let actions: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
            let p = realize_matching(&actions, &rps, &mut rng).unwrap();
            assert_eq!(p.len(), 40);
            assert!(p.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn matching_converges_to_meanfield() {
        let game = ContributionGame::new(20, PayoffMode::Matching);
        let n = 5000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..20)).collect();
        let exact = realize_meanfield(&actions, &game).unwrap();
        let sampled = realize_matching(&actions, game.matrix(), &mut rng).unwrap();
        for a in 0..20 {
            let idx: Vec<usize> = (0..n).filter(|&i| actions[i] == a).collect();
            if idx.len() < 30 {
                continue;
            }
            let mean = idx.iter().map(|&i| sampled[i]).sum::<f64>() / idx.len() as f64;
            let target = exact[idx[0]];
            // Payoff against a partner is 2·a·y − c(a) with y ~ roughly
            // uniform on 0..19 (sd ≈ 5.77).
            let sigma = 2.0 * a as f64 * 5.77 / (idx.len() as f64).sqrt();
            assert!((mean - target).abs() <= 3.0 * sigma + 1e-9, "action {a}");
        }
    }

    fn stage_population(n: usize, seed: u64) -> Population {
        let agents = (0..n)
            .map(|_| Agent::Stage(StageLearner::new(20, 8, 0.05, 250).unwrap()))
            .collect();
        Population::new(agents, seed)
    }

    fn fresh_uniform(rng: &mut ChaCha8Rng) -> Result<Agent> {
        let base = rng.random_range(0..20);
        Ok(Agent::Stage(StageLearner::new(20, base, 0.05, 250)?))
    }

    #[test]
    fn churn_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pop = stage_population(100, 1);
        assert_eq!(
            apply_churn(&mut pop, 0.0, &mut rng, fresh_uniform).unwrap(),
            0
        );
        assert!(pop.bases().iter().all(|&b| b == 8));

        let mut counts = [0u32; 20];
        let trials = 200;
        for t in 0..trials {
            let mut pop = stage_population(100, t);
            assert_eq!(
                apply_churn(&mut pop, 1.0, &mut rng, fresh_uniform).unwrap(),
                100
            );
            for b in pop.bases() {
                counts[b] += 1;
            }
        }
        let total = f64::from(100 * trials as u32);
        let sigma = (total * 0.05 * 0.95).sqrt();
        for c in counts {
            assert!((f64::from(c) - total * 0.05).abs() <= 3.0 * sigma);
        }

        let mut pop = stage_population(1000, 2);
        let replaced = apply_churn(&mut pop, 0.05, &mut rng, fresh_uniform).unwrap();
        let sigma = (1000.0f64 * 0.05 * 0.95).sqrt();
        assert!((replaced as f64 - 50.0).abs() <= 3.0 * sigma);
    }

    #[test]
    fn churn_spares_fixed_agents() {
        let agents = vec![
            Agent::Fixed(FixedAgent::new(20, MixedAction::pure(3)).unwrap()),
            Agent::Stage(StageLearner::new(20, 8, 0.05, 250).unwrap()),
        ];
        let mut pop = Population::new(agents, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(
            apply_churn(&mut pop, 1.0, &mut rng, fresh_uniform).unwrap(),
            1
        );
        assert!(pop.agents()[0].is_fixed());
    }

    #[test]
    fn distance_examples() {
        let deg8 = ActionDistribution::degenerate(20, 8).unwrap();
        assert_eq!(distance_from_equilibrium(&deg8, 8).unwrap(), 0.0);
        let uni = ActionDistribution::uniform(20);
        assert!((distance_from_equilibrium(&uni, 8).unwrap() - 5.1).abs() < 1e-12);
        let explored = MixedAction::new(8, 0.05)
            .unwrap()
            .to_distribution(20)
            .unwrap();
        let d = distance_from_equilibrium(&explored, 8).unwrap();
        assert!((d - 0.05 * 102.0 / 19.0).abs() < 1e-12);
        assert!((d - 0.2684).abs() < 1e-4);
        assert!(distance_from_equilibrium(&uni, 20).is_err());
    }

    #[test]
    fn stage_rho_examples() {
        let rounds = [vec![3usize; 10], vec![3; 10]];
        let rho = measure_stage_rho(rounds.iter().map(Vec::as_slice), 5).unwrap();
        assert_eq!(rho, ActionDistribution::degenerate(5, 3).unwrap());

        let alternating: Vec<Vec<usize>> = (0..10).map(|t| vec![t % 2]).collect();
        let rho = measure_stage_rho(alternating.iter().map(Vec::as_slice), 2).unwrap();
        assert_eq!(rho.weights(), &[0.5, 0.5]);

        let mut pop = stage_population(100, 7);
        let window: Vec<Vec<usize>> = (0..250).map(|_| pop.act()).collect();
        let rho = measure_stage_rho(window.iter().map(Vec::as_slice), 20).unwrap();
        let m: f64 = 25_000.0;
        let sigma = (0.95 * 0.05 / m).sqrt();
        assert!((rho.prob(8) - 0.95).abs() <= 3.0 * sigma);
    }

    #[test]
    fn best_reply_fraction_examples() {
        let game = ContributionGame::new(20, PayoffMode::MeanField);
        let deg8 = ActionDistribution::degenerate(20, 8).unwrap();
        let pop = stage_population(10, 0);
        assert_eq!(best_reply_fraction(&pop, &deg8, 0.0, &game).unwrap(), 1.0);
        let agents = (0..10)
            .map(|_| Agent::Stage(StageLearner::new(20, 0, 0.05, 250).unwrap()))
            .collect();
        let pop = Population::new(agents, 0);
        assert_eq!(best_reply_fraction(&pop, &deg8, 0.0, &game).unwrap(), 0.0);
    }

    #[test]
    fn trace_shape() {
        let mut c = RunConfig::default();
        c.rounds = 1010;
        c.population = 10;
        let trace = run(&c).unwrap();
        assert_eq!(trace.rounds(), 1010);
        assert_eq!(trace.stages.len(), 1010 / 250);
        assert_eq!(trace.stages[0].end_round, 249);
        for r in [0, 500, 1009] {
            assert_eq!(trace.realized_counts(r).iter().sum::<u32>(), 10);
            assert_eq!(trace.base_counts(r).iter().sum::<u32>(), 10);
        }
    }

    #[test]
    fn bases_constant_within_stages() {
        let mut c = RunConfig::default();
        c.rounds = 750;
        c.population = 20;
        c.seed = 9;
        let trace = run(&c).unwrap();
        for r in 1..750 {
            if r % 250 != 0 {
                assert_eq!(trace.base_counts(r), trace.base_counts(r - 1), "round {r}");
            }
        }
    }

    #[test]
    fn fixed_agents_are_appended() {
        let mut c = RunConfig::default();
        c.population = 10;
        c.fixed_fraction = 0.3;
        c.fixed_strategy = MixedAction::pure(19);
        let pop = Population::from_config(&c).unwrap();
        assert_eq!(pop.agents().iter().filter(|a| a.is_fixed()).count(), 3);
        assert!(pop.agents()[7..].iter().all(Agent::is_fixed));
    }

    #[test]
    fn regret_population_runs() {
        let mut c = RunConfig::default();
        c.learner.kind = LearnerKind::Regret;
        c.rounds = 500;
        c.population = 10;
        let trace = run(&c).unwrap();
        assert_eq!(trace.stages.len(), 2);
        // μ defaults to 2·(payoff range)·(k − 1) = 2·722·19.
        assert_eq!(c.inertia().unwrap(), 2.0 * 722.0 * 19.0);
    }

    #[test]
    fn stationary_meanfield_stage() {
        let game = Game::Contribution(ContributionGame::new(20, PayoffMode::MeanField));
        let rho = MixedAction::new(8, 0.05)
            .unwrap()
            .to_distribution(20)
            .unwrap();
        let mut stage = StationaryStage {
            rho,
            learners: 200,
            explore: 0.05,
            stage_len: 250,
            eta: 1.0,
            oracle: OracleMode::MeanField,
            initial: InitialBases::Action(8),
            seed: 1,
        };
        assert_eq!(stage.best_reply_fraction(&game).unwrap(), 1.0);
        // From uniform bases, action 8 is sampled at least once with
        // probability 1 − (1 − 0.05/19)^250 ≈ 0.48 by a learner based elsewhere.
        stage.initial = InitialBases::Uniform;
        let f = stage.best_reply_fraction(&game).unwrap();
        assert!(f > 0.3 && f < 0.8, "{f}");
    }

    #[test]
    fn convergence_round_requires_staying_below() {
        let mut trace = run(&RunConfig {
            rounds: 250,
            population: 4,
            ..RunConfig::default()
        })
        .unwrap();
        let template = trace.stages[0].clone();
        trace.stages = [3.0, 0.4, 0.6, 0.3, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &d)| StageRecord {
                stage: i,
                end_round: i * 10,
                distance: d,
                ..template.clone()
            })
            .collect();
        assert_eq!(trace.convergence_round(0.5), Some(30));
        assert_eq!(trace.convergence_round(0.1), None);
    }
}
