//! The anonymous game model.
//!
//! A game is described by a finite action set, a payoff channel mapping an
//! action and the population's action distribution to a distribution over
//! payoffs, and the expected utility derived from that channel. Every
//! distribution is a dense vector validated once at construction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution handed to a constructor.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    size: usize,
    labels: Option<Vec<String>>,
}

impl ActionSet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::param(
                "actions",
                "an action set needs at least 2 actions",
            ));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut set = Self::new(labels.len())?;
        set.labels = Some(labels);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, action: usize) -> Option<&str> {
        self.labels
            .as_ref()
            .and_then(|l| l.get(action))
            .map(String::as_str)
    }

    pub fn check(&self, action: usize) -> Result<()> {
        if action < self.size {
            Ok(())
        } else {
            Err(Error::ActionOutOfRange {
                action,
                actions: self.size,
            })
        }
    }
}

/// A point of the simplex over actions.
///
/// Read either as a mixed action or as the fraction of a population playing
/// each action. Weights are renormalized exactly once on construction and the
/// value is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    weights: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no actions".into()));
        }
        if let Some((a, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} on action {a} is negative or not finite"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut weights = weights;
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { weights })
    }

    pub fn uniform(actions: usize) -> Self {
        assert!(actions > 0, "uniform distribution over zero actions");
        Self {
            weights: vec![1.0 / actions as f64; actions],
        }
    }

    pub fn degenerate(actions: usize, action: usize) -> Result<Self> {
        if action >= actions {
            return Err(Error::ActionOutOfRange { action, actions });
        }
        let mut weights = vec![0.0; actions];
        weights[action] = 1.0;
        Ok(Self { weights })
    }

    /// Empirical frequencies of a tally.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("empty tally".into()));
        }
        let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { weights })
    }

    /// Empirical distribution of a list of pure actions.
    pub fn from_actions(actions: usize, played: &[usize]) -> Result<Self> {
        let mut counts = vec![0u64; actions];
        for &a in played {
            if a >= actions {
                return Err(Error::ActionOutOfRange { action: a, actions });
            }
            counts[a] += 1;
        }
        Self::from_counts(&counts)
    }

    /// Average of a population of mixed actions.
    pub fn from_mixed(actions: usize, profile: &[MixedAction]) -> Result<Self> {
        if profile.is_empty() {
            return Err(Error::InvalidDistribution("empty profile".into()));
        }
        let mut weights = vec![0.0; actions];
        for s in profile {
            s.check(actions)?;
            for (a, w) in weights.iter_mut().enumerate() {
                *w += s.prob(a, actions);
            }
        }
        let n = profile.len() as f64;
        for w in &mut weights {
            *w /= n;
        }
        Self::new(weights)
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Result<Self> {
        Error::check_dim(self.len(), other.len())?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1]"));
        }
        Self::new(
            self.weights
                .iter()
                .zip(&other.weights)
                .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.weights.get(action).copied().unwrap_or(0.0)
    }

    /// Actions with positive weight, in increasing order.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, _)| a)
            .collect()
    }

    /// Expected action index, `Σ_a ρ(a)·a`.
    pub fn mean_action(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(a, w)| w * a as f64)
            .sum()
    }
}

/// The exploring strategy `a_ε`: the base action with probability `1 − ε`,
/// each other action with probability `ε / (k − 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedAction {
    base: usize,
    explore: f64,
}

impl MixedAction {
    pub fn new(base: usize, explore: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&explore) {
            return Err(Error::param(
                "explore",
                format!("{explore} is not in [0, 1)"),
            ));
        }
        Ok(Self { base, explore })
    }

    pub fn pure(base: usize) -> Self {
        Self { base, explore: 0.0 }
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn explore(&self) -> f64 {
        self.explore
    }

    pub fn check(&self, actions: usize) -> Result<()> {
        if self.base >= actions {
            return Err(Error::ActionOutOfRange {
                action: self.base,
                actions,
            });
        }
        if actions < 2 && self.explore > 0.0 {
            return Err(Error::param(
                "explore",
                "cannot explore with a single action",
            ));
        }
        Ok(())
    }

    pub fn prob(&self, action: usize, actions: usize) -> f64 {
        if action >= actions {
            0.0
        } else if action == self.base {
            1.0 - self.explore
        } else {
            self.explore / (actions - 1) as f64
        }
    }

    pub fn to_distribution(&self, actions: usize) -> Result<ActionDistribution> {
        self.check(actions)?;
        ActionDistribution::new((0..actions).map(|a| self.prob(a, actions)).collect())
    }

    /// Draws one action using exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, actions: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if u >= self.explore {
            return self.base;
        }
        let others = actions - 1;
        let slot = ((u / self.explore) * others as f64) as usize;
        let slot = slot.min(others - 1);
        if slot >= self.base {
            slot + 1
        } else {
            slot
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSet {
    values: Vec<f64>,
}

impl PayoffSet {
    /// Distinct finite values; duplicates are dropped, order of first
    /// appearance kept.
    pub fn new(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut distinct: Vec<f64> = Vec::new();
        for v in values {
            if !v.is_finite() {
                return Err(Error::param("payoffs", "payoffs must be finite"));
            }
            if !distinct.contains(&v) {
                distinct.push(v);
            }
        }
        if distinct.is_empty() {
            return Err(Error::param("payoffs", "payoff set is empty"));
        }
        Ok(Self { values: distinct })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A finite distribution over payoff values.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl PayoffDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Error::check_dim(values.len(), probs.len())?;
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty payoff support".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("payoff is not finite".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "payoff probability is negative or not finite".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "payoff probabilities sum to {total}, not 1"
            )));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self { values, probs })
    }

    pub fn point(value: f64) -> Self {
        Self {
            values: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn expectation(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }
}

/// Square payoff table of a symmetric two-player game; `get(a, b)` is the
/// payoff to a player using `a` against an opponent using `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size < 2 {
            return Err(Error::param("matrix", "needs at least 2 rows"));
        }
        let mut entries = Vec::with_capacity(size * size);
        for row in rows {
            Error::check_dim(size, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("matrix", "entries must be finite"));
            }
            entries.extend(row);
        }
        Ok(Self { size, entries })
    }

    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(
            (0..size)
                .map(|a| (0..size).map(|b| f(a, b)).collect())
                .collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.size..(row + 1) * self.size]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max − min` over all entries.
    pub fn range(&self) -> f64 {
        let lo = self.entries.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .entries
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub fn payoff_set(&self) -> PayoffSet {
        PayoffSet::new(self.entries.iter().copied()).expect("matrix entries are finite")
    }

    /// Expected payoff of pure `action` against opponents drawn from `rho`.
    pub fn row_expectation(&self, action: usize, rho: &ActionDistribution) -> f64 {
        self.row(action)
            .iter()
            .zip(rho.weights())
            .map(|(p, w)| p * w)
            .sum()
    }

    /// Payoff distribution of `action` when the opponent is drawn from `rho`.
    pub fn matching_channel(&self, action: usize, rho: &ActionDistribution) -> PayoffDistribution {
        let mut values: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (&p, &w) in self.row(action).iter().zip(rho.weights()) {
            if w <= 0.0 {
                continue;
            }
            match values.iter().position(|v| *v == p) {
                Some(i) => probs[i] += w,
                None => {
                    values.push(p);
                    probs.push(w);
                }
            }
        }
        PayoffDistribution { values, probs }
    }
}

/// Lipschitz constant of `u(a, ·)` under the L1 norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    /// An analytic upper bound.
    Known(f64),
    /// No analytic bound; use [`estimate_lipschitz`].
    Estimated,
}

/// A large anonymous game with a common utility function.
pub trait AnonymousGame {
    fn action_set(&self) -> &ActionSet;

    /// Distribution over payoffs for an agent playing `action` while the rest
    /// of the population follows `rho`. Deterministic in its inputs.
    fn payoff_channel(&self, action: usize, rho: &ActionDistribution) -> PayoffDistribution;

    /// `None` when the payoffs are not drawn from a fixed finite set (mean-field
    /// payoffs depend continuously on `rho`).
    fn payoff_set(&self) -> Option<PayoffSet>;

    fn lipschitz(&self) -> Lipschitz;

    fn num_actions(&self) -> usize {
        self.action_set().len()
    }

    /// `u(a, ρ)` for a pure action.
    fn expected_payoff(&self, action: usize, rho: &ActionDistribution) -> f64 {
        self.payoff_channel(action, rho).expectation()
    }
}

/// `u(s, ρ) = Σ_a Σ_p p·s(a)·Pr_{a,ρ}(p)` for an exploring strategy.
pub fn utility<G: AnonymousGame + ?Sized>(
    s: &MixedAction,
    rho: &ActionDistribution,
    game: &G,
) -> Result<f64> {
    let k = game.num_actions();
    expected_utility(&s.to_distribution(k)?, rho, game)
}

/// `u(s, ρ)` for an arbitrary mixed strategy.
pub fn expected_utility<G: AnonymousGame + ?Sized>(
    s: &ActionDistribution,
    rho: &ActionDistribution,
    game: &G,
) -> Result<f64> {
    let k = game.num_actions();
    Error::check_dim(k, s.len())?;
    Error::check_dim(k, rho.len())?;
    Ok(s.weights()
        .iter()
        .enumerate()
        .map(|(a, &sa)| {
            let channel = game.payoff_channel(a, rho);
            channel
                .values()
                .iter()
                .zip(channel.probs())
                .map(|(p, pr)| p * sa * pr)
                .sum::<f64>()
        })
        .sum())
}

/// The random-matching bilinear form `Σ_{a,a′} s(a)·ρ(a′)·p[a][a′]`.
pub fn matching_utility(
    s: &MixedAction,
    rho: &ActionDistribution,
    matrix: &PayoffMatrix,
) -> Result<f64> {
    matching_expected_utility(&s.to_distribution(matrix.size())?, rho, matrix)
}

pub fn matching_expected_utility(
    s: &ActionDistribution,
    rho: &ActionDistribution,
    matrix: &PayoffMatrix,
) -> Result<f64> {
    let k = matrix.size();
    Error::check_dim(k, s.len())?;
    Error::check_dim(k, rho.len())?;
    let mut total = 0.0;
    for (a, &sa) in s.weights().iter().enumerate() {
        for (b, &rb) in rho.weights().iter().enumerate() {
            total += sa * rb * matrix.get(a, b);
        }
    }
    Ok(total)
}

pub fn l1_distance(rho1: &ActionDistribution, rho2: &ActionDistribution) -> Result<f64> {
    Error::check_dim(rho1.len(), rho2.len())?;
    Ok(rho1
        .weights()
        .iter()
        .zip(rho2.weights())
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Empirical lower bound on the Lipschitz constant of `u(a, ·)`.
///
/// Draws `samples` distributions (the uniform and degenerate distributions
/// first, then random points of the simplex) and returns the largest
/// `|u(a,ρ) − u(a,ρ′)| / ‖ρ − ρ′‖₁` over all pairs and actions.
pub fn estimate_lipschitz<G: AnonymousGame + ?Sized>(
    game: &G,
    samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    let k = game.num_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut points: Vec<ActionDistribution> = Vec::with_capacity(samples);
    points.push(ActionDistribution::uniform(k));
    for a in 0..k {
        if points.len() == samples {
            break;
        }
        points.push(ActionDistribution::degenerate(k, a)?);
    }
    while points.len() < samples {
        points.push(random_distribution(k, &mut rng));
    }

    let utilities: Vec<Vec<f64>> = points
        .iter()
        .map(|rho| (0..k).map(|a| game.expected_payoff(a, rho)).collect())
        .collect();

    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dist = l1_distance(&points[i], &points[j])?;
            if dist <= 0.0 {
                continue;
            }
            for a in 0..k {
                let ratio = (utilities[i][a] - utilities[j][a]).abs() / dist;
                best = best.max(ratio);
            }
        }
    }
    Ok(best)
}

/// Uniform draw from the simplex (normalized exponential variates).
pub fn random_distribution<R: Rng + ?Sized>(actions: usize, rng: &mut R) -> ActionDistribution {
    let raw: Vec<f64> = (0..actions)
        .map(|_| {
            let u: f64 = rng.random();
            -libm::log(1.0 - u)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return ActionDistribution::uniform(actions);
    }
    ActionDistribution::new(raw.into_iter().map(|x| x / total).collect())
        .unwrap_or_else(|_| ActionDistribution::uniform(actions))
}

/// The random-matching game built from a symmetric payoff matrix; payoffs are
/// the matrix entries drawn with the opponent's action distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingGame {
    matrix: PayoffMatrix,
    actions: ActionSet,
}

impl MatchingGame {
    pub fn new(matrix: PayoffMatrix) -> Self {
        let actions = ActionSet::new(matrix.size()).expect("matrix has at least 2 rows");
        Self { matrix, actions }
    }

    pub fn matrix(&self) -> &PayoffMatrix {
        &self.matrix
    }
}

impl AnonymousGame for MatchingGame {
    fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    fn payoff_channel(&self, action: usize, rho: &ActionDistribution) -> PayoffDistribution {
        self.matrix.matching_channel(action, rho)
    }

    fn payoff_set(&self) -> Option<PayoffSet> {
        Some(self.matrix.payoff_set())
    }

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::Known(self.matrix.max_abs())
    }
}

/// Every action pays the same constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantGame {
    actions: ActionSet,
    payoff: f64,
}

impl ConstantGame {
    pub fn new(actions: usize, payoff: f64) -> Result<Self> {
        if !payoff.is_finite() {
            return Err(Error::param("payoff", "must be finite"));
        }
        Ok(Self {
            actions: ActionSet::new(actions)?,
            payoff,
        })
    }
}

impl AnonymousGame for ConstantGame {
    fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    fn payoff_channel(&self, _action: usize, _rho: &ActionDistribution) -> PayoffDistribution {
        PayoffDistribution::point(self.payoff)
    }

    fn payoff_set(&self) -> Option<PayoffSet> {
        PayoffSet::new([self.payoff]).ok()
    }

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::Known(0.0)
    }
}
