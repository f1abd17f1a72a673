//! Per-agent learning state machines.
//!
//! Every agent follows the same protocol each round: [`Agent::act`] draws an
//! action, then [`Agent::observe`] is fed the action and the payoff it
//! earned. Agents see nothing but their own actions and payoffs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::MixedAction;

/// `⌈1/ε²⌉`.
pub fn default_stage_len(explore: f64) -> Result<usize> {
    if !(explore > 0.0 && explore < 1.0) {
        return Err(Error::param("learner.epsilon", "must lie in (0, 1)"));
    }
    Ok(libm::ceil(1.0 / (explore * explore)) as usize)
}

/// ε-stage learner.
///
/// Plays `base_ε` for a stage of `stage_len` rounds while averaging the
/// payoffs it receives for each action. At the end of the stage the base
/// moves to the action with the highest average (unplayed actions score 0)
/// and the tallies are discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLearner {
    strategy: MixedAction,
    actions: usize,
    stage_len: usize,
    round_in_stage: usize,
    plays: Vec<u32>,
    payoff_sums: Vec<f64>,
    pending: Option<usize>,
}

impl StageLearner {
    pub fn new(actions: usize, base: usize, explore: f64, stage_len: usize) -> Result<Self> {
        let strategy = MixedAction::new(base, explore)?;
        strategy.check(actions)?;
        if stage_len == 0 {
            return Err(Error::param(
                "learner.tau",
                "stage length must be at least 1",
            ));
        }
        Ok(Self {
            strategy,
            actions,
            stage_len,
            round_in_stage: 0,
            plays: vec![0; actions],
            payoff_sums: vec![0.0; actions],
            pending: None,
        })
    }

    pub fn base(&self) -> usize {
        self.strategy.base()
    }

    pub fn strategy(&self) -> MixedAction {
        self.strategy
    }

    pub fn stage_len(&self) -> usize {
        self.stage_len
    }

    pub fn round_in_stage(&self) -> usize {
        self.round_in_stage
    }

    pub fn plays(&self, action: usize) -> u32 {
        self.plays[action]
    }

    /// `V(a)`: average payoff of `action` this stage, 0 if it was not played.
    pub fn value(&self, action: usize) -> f64 {
        match self.plays[action] {
            0 => 0.0,
            n => self.payoff_sums[action] / f64::from(n),
        }
    }

    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let a = self.strategy.sample(self.actions, rng);
        self.pending = Some(a);
        a
    }

    /// Records the payoff of the action returned by the last [`act`](Self::act).
    /// Returns `true` when this observation closed the stage.
    pub fn observe(&mut self, action: usize, payoff: f64) -> Result<bool> {
        match self.pending.take() {
            Some(a) if a == action => {}
            Some(a) => {
                self.pending = Some(a);
                return Err(Error::Contract(
                    "observed action differs from the one played",
                ));
            }
            None => return Err(Error::Contract("observe called without act")),
        }
        self.plays[action] += 1;
        self.payoff_sums[action] += payoff;
        self.round_in_stage += 1;
        if self.round_in_stage == self.stage_len {
            self.end_stage()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Moves the base to the best-valued action. Ties keep the current base if
    /// it is among the best, otherwise go to the lowest index.
    pub fn end_stage(&mut self) -> Result<()> {
        if self.round_in_stage != self.stage_len {
            return Err(Error::Contract(
                "end_stage called before the stage is complete",
            ));
        }
        let values: Vec<f64> = (0..self.actions).map(|a| self.value(a)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let current = self.strategy.base();
        let next = if values[current] == best {
            current
        } else {
            values.iter().position(|&v| v == best).unwrap_or(current)
        };
        self.strategy = MixedAction::new(next, self.strategy.explore())?;
        self.plays.iter_mut().for_each(|c| *c = 0);
        self.payoff_sums.iter_mut().for_each(|s| *s = 0.0);
        self.round_in_stage = 0;
        Ok(())
    }
}

/// Regret matching from own payoffs only.
///
/// Given the previous action `j`, each other action `k` is played with
/// probability `(1 − δ)·min(R(j,k)⁺/μ, 1/(m − 1)) + δ/m` and `j` takes the
/// remaining mass. `R(j,k)` estimates how much better the agent would have
/// done playing `k` wherever it played `j`, using importance-weighted
/// payoffs of its own past `k` plays:
///
/// `R(j,k) = (1/t)·Σ_τ [p_τ(j)/p_τ(k)·U_τ·1{s_τ = k} − U_τ·1{s_τ = j}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretMatcher {
    actions: usize,
    inertia: f64,
    floor: f64,
    /// `weighted[j * m + k] = Σ_τ p_τ(j)/p_τ(k)·U_τ·1{s_τ = k}`.
    weighted: Vec<f64>,
    /// `own[j] = Σ_τ U_τ·1{s_τ = j}`.
    own: Vec<f64>,
    probs: Vec<f64>,
    last: Option<usize>,
    rounds: u64,
    pending: Option<usize>,
}

impl RegretMatcher {
    /// `inertia` is μ, `floor` is δ.
    pub fn new(actions: usize, inertia: f64, floor: f64) -> Result<Self> {
        if actions < 2 {
            return Err(Error::param(
                "actions",
                "regret matching needs at least 2 actions",
            ));
        }
        if !(inertia > 0.0 && inertia.is_finite()) {
            return Err(Error::param("learner.mu", "must be positive"));
        }
        if !(floor > 0.0 && floor < 1.0) {
            return Err(Error::param("learner.delta", "must lie in (0, 1)"));
        }
        Ok(Self {
            actions,
            inertia,
            floor,
            weighted: vec![0.0; actions * actions],
            own: vec![0.0; actions],
            probs: vec![1.0 / actions as f64; actions],
            last: None,
            rounds: 0,
            pending: None,
        })
    }

    /// `μ = 2·(payoff range)·(m − 1)`.
    pub fn default_inertia(payoff_range: f64, actions: usize) -> f64 {
        2.0 * payoff_range * (actions as f64 - 1.0)
    }

    /// Probabilities for the next round.
    pub fn play_distribution(&self) -> &[f64] {
        &self.probs
    }

    pub fn last_action(&self) -> Option<usize> {
        self.last
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Most likely next action (lowest index on ties).
    pub fn modal_action(&self) -> usize {
        let mut best = 0;
        for (a, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = a;
            }
        }
        best
    }

    pub fn regret(&self, from: usize, to: usize) -> f64 {
        if self.rounds == 0 {
            return 0.0;
        }
        (self.weighted[from * self.actions + to] - self.own[from]) / self.rounds as f64
    }

    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.actions - 1;
        for (a, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = a;
                break;
            }
        }
        // Guard against rounding leaving the top of [0, 1) uncovered.
        if self.probs[chosen] == 0.0 {
            chosen = self.modal_action();
        }
        self.pending = Some(chosen);
        chosen
    }

    pub fn observe(&mut self, action: usize, payoff: f64) -> Result<()> {
        match self.pending.take() {
            Some(a) if a == action => {}
            Some(a) => {
                self.pending = Some(a);
                return Err(Error::Contract(
                    "observed action differs from the one played",
                ));
            }
            None => return Err(Error::Contract("observe called without act")),
        }
        let m = self.actions;
        let played = self.probs[action];
        for j in 0..m {
            self.weighted[j * m + action] += self.probs[j] / played * payoff;
        }
        self.own[action] += payoff;
        self.rounds += 1;
        self.last = Some(action);
        self.update_probs(action);
        Ok(())
    }

    fn update_probs(&mut self, last: usize) {
        let m = self.actions;
        let cap = 1.0 / (m as f64 - 1.0);
        let explore = self.floor / m as f64;
        let mut others = 0.0;
        for k in 0..m {
            if k == last {
                continue;
            }
            let switch = (self.regret(last, k).max(0.0) / self.inertia).min(cap);
            let p = (1.0 - self.floor) * switch + explore;
            self.probs[k] = p;
            others += p;
        }
        self.probs[last] = 1.0 - others;
    }
}

/// An agent that keeps one strategy for ever.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAgent {
    strategy: MixedAction,
    actions: usize,
    pending: Option<usize>,
}

impl FixedAgent {
    pub fn new(actions: usize, strategy: MixedAction) -> Result<Self> {
        strategy.check(actions)?;
        Ok(Self {
            strategy,
            actions,
            pending: None,
        })
    }

    pub fn strategy(&self) -> MixedAction {
        self.strategy
    }

    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let a = self.strategy.sample(self.actions, rng);
        self.pending = Some(a);
        a
    }

    pub fn observe(&mut self, action: usize, _payoff: f64) -> Result<()> {
        match self.pending.take() {
            Some(a) if a == action => Ok(()),
            Some(a) => {
                self.pending = Some(a);
                Err(Error::Contract(
                    "observed action differs from the one played",
                ))
            }
            None => Err(Error::Contract("observe called without act")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Stage(StageLearner),
    Regret(RegretMatcher),
    Fixed(FixedAgent),
}

impl Agent {
    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        match self {
            Agent::Stage(s) => s.act(rng),
            Agent::Regret(r) => r.act(rng),
            Agent::Fixed(f) => f.act(rng),
        }
    }

    /// Returns `true` when a stage learner finished its stage.
    pub fn observe(&mut self, action: usize, payoff: f64) -> Result<bool> {
        match self {
            Agent::Stage(s) => s.observe(action, payoff),
            Agent::Regret(r) => r.observe(action, payoff).map(|()| false),
            Agent::Fixed(f) => f.observe(action, payoff).map(|()| false),
        }
    }

    /// The action the agent is currently built around: the stage base, the
    /// regret matcher's most likely action, or the fixed strategy's base.
    pub fn base(&self) -> usize {
        match self {
            Agent::Stage(s) => s.base(),
            Agent::Regret(r) => r.modal_action(),
            Agent::Fixed(f) => f.strategy().base(),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Agent::Fixed(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn stage_len_default() {
        assert_eq!(default_stage_len(0.05).unwrap(), 400);
        assert_eq!(default_stage_len(0.01).unwrap(), 10_000);
        assert_eq!(default_stage_len(0.3).unwrap(), 12);
        assert!(default_stage_len(0.0).is_err());
    }

    #[test]
    fn zero_exploration_always_plays_base() {
        let mut l = StageLearner::new(5, 3, 0.0, 1000).unwrap();
        let mut r = rng(1);
        for _ in 0..1000 {
            let a = l.act(&mut r);
            assert_eq!(a, 3);
            l.observe(a, 1.0).unwrap();
        }
    }

    #[test]
    fn stage_act_frequencies() {
        let mut l = StageLearner::new(20, 8, 0.05, usize::MAX).unwrap();
        let mut r = rng(2);
        let draws = 1_000_000u32;
        let mut counts = [0u32; 20];
        for _ in 0..draws {
            counts[l.act(&mut r)] += 1;
        }
        let n = f64::from(draws);
        let within = |count: u32, p: f64| {
            let sigma = (n * p * (1.0 - p)).sqrt();
            (f64::from(count) - n * p).abs() <= 3.0 * sigma
        };
        assert!(within(counts[8], 0.95));
        for (a, &c) in counts.iter().enumerate() {
            if a != 8 {
                assert!(within(c, 0.05 / 19.0), "action {a}: {c}");
            }
        }
    }

    #[test]
    fn two_action_half_exploration_is_uniform() {
        let mut l = StageLearner::new(2, 0, 0.5, usize::MAX).unwrap();
        let mut r = rng(3);
        let n = 200_000;
        let zeros = (0..n).filter(|_| l.act(&mut r) == 0).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((zeros - n as f64 / 2.0).abs() <= 3.0 * sigma);
    }

    #[test]
    fn values_average_observed_payoffs() {
        let mut l = StageLearner::new(5, 3, 0.0, 10).unwrap();
        let mut r = rng(4);
        let a = l.act(&mut r);
        l.observe(a, 5.0).unwrap();
        assert_eq!(l.value(3), 5.0);
        let mut l = StageLearner::new(5, 3, 0.0, 10).unwrap();
        for p in [2.0, 4.0] {
            let a = l.act(&mut r);
            l.observe(a, p).unwrap();
        }
        assert_eq!(l.value(3), 3.0);
        assert_eq!(l.value(1), 0.0);
    }

    #[test]
    fn observe_requires_act() {
        let mut l = StageLearner::new(3, 0, 0.1, 5).unwrap();
        assert_eq!(
            l.observe(0, 1.0),
            Err(Error::Contract("observe called without act"))
        );
        let a = l.act(&mut rng(5));
        assert!(l.observe((a + 1) % 3, 1.0).is_err());
        assert!(l.observe(a, 1.0).is_ok());
        assert!(l.observe(a, 1.0).is_err());
    }

    /// Drives a learner through a full stage with a scripted action sequence.
    fn run_stage(base: usize, script: &[(usize, f64)]) -> StageLearner {
        let mut l = StageLearner::new(3, base, 0.0, script.len()).unwrap();
        for (i, &(a, p)) in script.iter().enumerate() {
            l.pending = Some(a);
            let ended = l.observe(a, p).unwrap();
            assert_eq!(ended, i + 1 == script.len());
        }
        l
    }

    #[test]
    fn end_stage_argmax_and_ties() {
        let l = run_stage(0, &[(0, 1.0), (1, 7.0), (2, 3.0)]);
        assert_eq!(l.base(), 1);
        assert_eq!(l.round_in_stage(), 0);
        assert_eq!(l.plays(1), 0);

        let l = run_stage(2, &[(0, 1.0), (1, 4.0), (2, 4.0)]);
        assert_eq!(l.base(), 2);

        let l = run_stage(2, &[(0, 0.0), (1, 0.0), (2, 0.0)]);
        assert_eq!(l.base(), 2);

        // Ties not involving the base go to the lowest index.
        let l = run_stage(0, &[(0, 1.0), (1, 4.0), (2, 4.0)]);
        assert_eq!(l.base(), 1);

        // Unplayed actions score 0 and beat negative averages.
        let l = run_stage(1, &[(1, -2.0), (2, -1.0)]);
        assert_eq!(l.base(), 0);
    }

    #[test]
    fn end_stage_mid_stage_is_an_error() {
        let mut l = StageLearner::new(3, 0, 0.1, 5).unwrap();
        assert!(l.end_stage().is_err());
    }

    #[test]
    fn base_is_fixed_within_a_stage() {
        let mut l = StageLearner::new(4, 1, 0.3, 7).unwrap();
        let mut r = rng(6);
        for round in 0..70 {
            let before = l.base();
            let a = l.act(&mut r);
            let ended = l.observe(a, a as f64).unwrap();
            if !ended {
                assert_eq!(l.base(), before, "round {round}");
            }
        }
    }

    /// Recomputes the regret-matching probabilities from the full history.
    fn reference_probs(
        m: usize,
        mu: f64,
        delta: f64,
        history: &[(usize, f64, Vec<f64>)],
    ) -> Vec<f64> {
        let Some(&(last, _, _)) = history.last() else {
            return vec![1.0 / m as f64; m];
        };
        let t = history.len() as f64;
        let regret = |j: usize, k: usize| -> f64 {
            history
                .iter()
                .map(|(s, u, p)| {
                    let mut v = 0.0;
                    if *s == k {
                        v += p[j] / p[k] * u;
                    }
                    if *s == j {
                        v -= u;
                    }
                    v
                })
                .sum::<f64>()
                / t
        };
        let mut probs = vec![0.0; m];
        for k in 0..m {
            if k != last {
                probs[k] = (1.0 - delta)
                    * (regret(last, k).max(0.0) / mu).min(1.0 / (m as f64 - 1.0))
                    + delta / m as f64;
            }
        }
        probs[last] = 1.0 - probs.iter().sum::<f64>();
        probs
    }

    #[test]
    fn regret_matcher_agrees_with_reference() {
        let m = 3;
        let (mu, delta) = (4.0, 0.1);
        let payoff = [[1.0, 0.0, 3.0], [2.0, 2.0, 0.0], [0.5, 4.0, 1.0]];
        let mut learner = RegretMatcher::new(m, mu, delta).unwrap();
        let mut r = rng(7);
        let mut history = Vec::new();
        for t in 0..300 {
            let expected = reference_probs(m, mu, delta, &history);
            for (a, b) in learner.play_distribution().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-9, "round {t}: {a} vs {b}");
            }
            let probs = learner.play_distribution().to_vec();
            let a = learner.act(&mut r);
            let u = payoff[a][t % 3];
            learner.observe(a, u).unwrap();
            history.push((a, u, probs));
        }
    }

    #[test]
    fn regret_first_round_is_uniform() {
        let l = RegretMatcher::new(4, 10.0, 0.05).unwrap();
        assert_eq!(l.play_distribution(), &[0.25; 4]);
    }

    #[test]
    fn nonpositive_regret_repeats_previous_action() {
        let mut l = RegretMatcher::new(4, 10.0, 0.05).unwrap();
        l.pending = Some(2);
        l.observe(2, 3.0).unwrap();
        assert!(l.regret(2, 0) <= 0.0);
        // Residual 1 − δ from the regret part plus the δ/m floor.
        assert!((l.play_distribution()[2] - (1.0 - 0.05 + 0.05 / 4.0)).abs() < 1e-12);
        for k in [0, 1, 3] {
            assert!((l.play_distribution()[k] - 0.05 / 4.0).abs() < 1e-12);
        }
    }

    /// Long-run frequency of action 1 when it pays 1 and action 0 pays 0.
    fn dominant_frequency(mu: f64, delta: f64, seed: u64) -> f64 {
        let mut l = RegretMatcher::new(2, mu, delta).unwrap();
        let mut r = rng(seed);
        let rounds = 200_000;
        let burn_in = 20_000;
        let mut dominant = 0u32;
        for t in 0..rounds {
            let a = l.act(&mut r);
            let u = if a == 1 { 1.0 } else { 0.0 };
            l.observe(a, u).unwrap();
            if t >= burn_in && a == 1 {
                dominant += 1;
            }
        }
        f64::from(dominant) / (rounds - burn_in) as f64
    }

    #[test]
    fn regret_matcher_learns_dominant_action() {
        // With the switch cap binding, leaving the dominated action happens
        // with probability 1 − δ/2 and leaving the dominant one with δ/2, so
        // the chain spends 1 − δ/2 of its time on the dominant action.
        let delta = 0.05;
        let freq = dominant_frequency(1e-3, delta, 8);
        assert!((freq - (1.0 - delta / 2.0)).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn regret_matcher_default_inertia_fixed_point() {
        // The estimated regret of the dominated action tends to f0·(1 − 0),
        // f0 its play frequency. The two-state chain then leaves 0 with
        // (1 − δ)·min(f0/μ, 1) + δ/2 and leaves 1 with δ/2; its stationary f0
        // solves f0 = leave1 / (leave0 + leave1). Bisection on that equation.
        let delta = 0.05;
        let mu = RegretMatcher::default_inertia(1.0, 2);
        let excess = |f0: f64| {
            let leave0 = (1.0 - delta) * (f0 / mu).min(1.0) + delta / 2.0;
            let leave1 = delta / 2.0;
            f0 - leave1 / (leave0 + leave1)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let expected = 1.0 - lo;
        let freq = dominant_frequency(mu, delta, 8);
        assert!(freq > 0.5, "dominant action should be favoured: {freq}");
        assert!(
            (freq - expected).abs() < 0.02,
            "freq {freq} vs oracle {expected}"
        );
    }

    #[test]
    fn regret_parameters_validated() {
        assert!(RegretMatcher::new(1, 1.0, 0.1).is_err());
        assert!(RegretMatcher::new(3, 0.0, 0.1).is_err());
        assert!(RegretMatcher::new(3, 1.0, 0.0).is_err());
        assert!(RegretMatcher::new(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn fixed_agent_sampling() {
        let mut f = FixedAgent::new(5, MixedAction::pure(4)).unwrap();
        let mut r = rng(9);
        for _ in 0..1000 {
            let a = f.act(&mut r);
            assert_eq!(a, 4);
            f.observe(a, 0.0).unwrap();
        }

        let uniform = MixedAction::new(0, 0.8).unwrap();
        let mut f = FixedAgent::new(5, uniform).unwrap();
        let draws = 1_000_000;
        let mut counts = [0u32; 5];
        for _ in 0..draws {
            counts[f.act(&mut r)] += 1;
        }
        let sigma = (draws as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((f64::from(c) - draws as f64 * 0.2).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn fixed_and_stage_share_the_exploration_law() {
        let s = MixedAction::new(2, 0.3).unwrap();
        let mut f = FixedAgent::new(6, s).unwrap();
        let mut l = StageLearner::new(6, 2, 0.3, usize::MAX).unwrap();
        let (mut r1, mut r2) = (rng(10), rng(10));
        for _ in 0..10_000 {
            assert_eq!(f.act(&mut r1), l.act(&mut r2));
        }
    }
}
