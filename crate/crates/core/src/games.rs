//! Concrete games: the contribution game and symmetric matrix games.
//!
//! Each game runs in one of two payoff modes. In [`PayoffMode::MeanField`]
//! the payoff channel is a point mass at the expected payoff against the
//! population; in [`PayoffMode::Matching`] it is the distribution of the
//! payoff against one opponent drawn from the population. Expected utility is
//! the same in both modes.

use alloc::format;

use crate::error::{Error, Result};
use crate::game::{
    ActionDistribution, ActionSet, AnonymousGame, Lipschitz, PayoffDistribution, PayoffMatrix,
    PayoffSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayoffMode {
    MeanField,
    Matching,
}

impl PayoffMode {
    pub fn name(self) -> &'static str {
        match self {
            PayoffMode::MeanField => "meanfield",
            PayoffMode::Matching => "matching",
        }
    }
}

/// Contribution levels run from 0 to 19.
pub const CONTRIBUTION_ACTIONS: usize = 20;

/// Default for the constant in the cost of contributions above 8.
pub const DEFAULT_PENALTY_N: u32 = 20;

/// `c(0) = 0`, `c(1) = 1`, `c(x) = (x − 1)²` for `2 ≤ x ≤ 8`,
/// `c(x) = x² + 2n` above 8.
pub fn contribution_cost(x: usize, penalty_n: u32) -> Result<f64> {
    if x >= CONTRIBUTION_ACTIONS {
        return Err(Error::ActionOutOfRange {
            action: x,
            actions: CONTRIBUTION_ACTIONS,
        });
    }
    let xf = x as f64;
    Ok(match x {
        0 => 0.0,
        1 => 1.0,
        2..=8 => (xf - 1.0) * (xf - 1.0),
        _ => xf * xf + 2.0 * f64::from(penalty_n),
    })
}

/// `2xy − c(x)` where `y` is the contribution of the others.
pub fn contribution_utility(x: usize, y: f64, penalty_n: u32) -> Result<f64> {
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::param(
            "y",
            format!("{y} is not a nonnegative contribution"),
        ));
    }
    let cost = contribution_cost(x, penalty_n)?;
    Ok(2.0 * x as f64 * y - cost)
}

/// Point mass at `2x·E_ρ[y] − c(x)`.
pub fn contribution_meanfield_channel(
    action: usize,
    rho: &ActionDistribution,
    penalty_n: u32,
) -> Result<PayoffDistribution> {
    Error::check_dim(CONTRIBUTION_ACTIONS, rho.len())?;
    let y = rho.mean_action();
    Ok(PayoffDistribution::point(contribution_utility(
        action, y, penalty_n,
    )?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionGame {
    penalty_n: u32,
    mode: PayoffMode,
    actions: ActionSet,
    matrix: PayoffMatrix,
}

impl ContributionGame {
    pub fn new(penalty_n: u32, mode: PayoffMode) -> Self {
        let matrix = PayoffMatrix::from_fn(CONTRIBUTION_ACTIONS, |x, y| {
            contribution_utility(x, y as f64, penalty_n).expect("x is in range")
        })
        .expect("20x20 finite matrix");
        Self {
            penalty_n,
            mode,
            actions: ActionSet::new(CONTRIBUTION_ACTIONS).expect("20 actions"),
            matrix,
        }
    }

    pub fn penalty_n(&self) -> u32 {
        self.penalty_n
    }

    pub fn mode(&self) -> PayoffMode {
        self.mode
    }

    /// Pairwise payoffs `p[x][y] = 2xy − c(x)`, used for random matching.
    pub fn matrix(&self) -> &PayoffMatrix {
        &self.matrix
    }
}

impl AnonymousGame for ContributionGame {
    fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    fn payoff_channel(&self, action: usize, rho: &ActionDistribution) -> PayoffDistribution {
        match self.mode {
            PayoffMode::MeanField => contribution_meanfield_channel(action, rho, self.penalty_n)
                .expect("action and distribution sized for the game"),
            PayoffMode::Matching => self.matrix.matching_channel(action, rho),
        }
    }

    fn payoff_set(&self) -> Option<PayoffSet> {
        match self.mode {
            PayoffMode::MeanField => None,
            PayoffMode::Matching => Some(self.matrix.payoff_set()),
        }
    }

    /// `u(x, ρ)` is affine in ρ with coefficients from row `x` of the matrix,
    /// so the largest entry magnitude bounds the constant.
    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::Known(self.matrix.max_abs())
    }

    fn expected_payoff(&self, action: usize, rho: &ActionDistribution) -> f64 {
        match self.mode {
            PayoffMode::MeanField => {
                contribution_utility(action, rho.mean_action(), self.penalty_n)
                    .expect("action in range")
            }
            PayoffMode::Matching => self.matrix.row_expectation(action, rho),
        }
    }
}

/// A symmetric two-player matrix game played by an anonymous population.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    matrix: PayoffMatrix,
    mode: PayoffMode,
    actions: ActionSet,
}

impl MatrixGame {
    pub fn new(matrix: PayoffMatrix, mode: PayoffMode) -> Self {
        let actions = ActionSet::new(matrix.size()).expect("matrix has at least 2 rows");
        Self {
            matrix,
            mode,
            actions,
        }
    }

    pub fn with_labels(mut self, actions: ActionSet) -> Result<Self> {
        Error::check_dim(self.matrix.size(), actions.len())?;
        self.actions = actions;
        Ok(self)
    }

    pub fn matrix(&self) -> &PayoffMatrix {
        &self.matrix
    }

    pub fn mode(&self) -> PayoffMode {
        self.mode
    }
}

impl AnonymousGame for MatrixGame {
    fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    fn payoff_channel(&self, action: usize, rho: &ActionDistribution) -> PayoffDistribution {
        match self.mode {
            PayoffMode::MeanField => {
                PayoffDistribution::point(self.matrix.row_expectation(action, rho))
            }
            PayoffMode::Matching => self.matrix.matching_channel(action, rho),
        }
    }

    fn payoff_set(&self) -> Option<PayoffSet> {
        match self.mode {
            PayoffMode::MeanField => None,
            PayoffMode::Matching => Some(self.matrix.payoff_set()),
        }
    }

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::Known(self.matrix.max_abs())
    }

    fn expected_payoff(&self, action: usize, rho: &ActionDistribution) -> f64 {
        self.matrix.row_expectation(action, rho)
    }
}

/// Any of the built-in games, as driven by the simulation engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    Contribution(ContributionGame),
    Matrix(MatrixGame),
}

impl Game {
    pub fn mode(&self) -> PayoffMode {
        match self {
            Game::Contribution(g) => g.mode(),
            Game::Matrix(g) => g.mode(),
        }
    }

    pub fn matrix(&self) -> &PayoffMatrix {
        match self {
            Game::Contribution(g) => g.matrix(),
            Game::Matrix(g) => g.matrix(),
        }
    }

    /// Payoff to a player using `a` against a single opponent using `b`.
    pub fn pair_payoff(&self, a: usize, b: usize) -> f64 {
        self.matrix().get(a, b)
    }
}

impl AnonymousGame for Game {
    fn action_set(&self) -> &ActionSet {
        match self {
            Game::Contribution(g) => g.action_set(),
            Game::Matrix(g) => g.action_set(),
        }
    }

    fn payoff_channel(&self, action: usize, rho: &ActionDistribution) -> PayoffDistribution {
        match self {
            Game::Contribution(g) => g.payoff_channel(action, rho),
            Game::Matrix(g) => g.payoff_channel(action, rho),
        }
    }

    fn payoff_set(&self) -> Option<PayoffSet> {
        match self {
            Game::Contribution(g) => g.payoff_set(),
            Game::Matrix(g) => g.payoff_set(),
        }
    }

    fn lipschitz(&self) -> Lipschitz {
        match self {
            Game::Contribution(g) => g.lipschitz(),
            Game::Matrix(g) => g.lipschitz(),
        }
    }

    fn expected_payoff(&self, action: usize, rho: &ActionDistribution) -> f64 {
        match self {
            Game::Contribution(g) => g.expected_payoff(action, rho),
            Game::Matrix(g) => g.expected_payoff(action, rho),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{estimate_lipschitz, matching_utility, utility, MixedAction};
    use alloc::vec;
    use alloc::vec::Vec;

    fn brute_force_best(game: &impl AnonymousGame, rho: &ActionDistribution) -> Vec<usize> {
        let u: Vec<f64> = (0..game.num_actions())
            .map(|a| utility(&MixedAction::pure(a), rho, game).unwrap())
            .collect();
        let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..u.len()).filter(|&a| u[a] == max).collect()
    }

    #[test]
    fn cost_examples() {
        assert_eq!(contribution_cost(0, 20).unwrap(), 0.0);
        assert_eq!(contribution_cost(1, 20).unwrap(), 1.0);
        assert_eq!(contribution_cost(5, 20).unwrap(), 16.0);
        assert_eq!(contribution_cost(8, 0).unwrap(), 49.0);
        assert_eq!(contribution_cost(9, 20).unwrap(), 121.0);
        assert!(contribution_cost(20, 20).is_err());
    }

    #[test]
    fn utility_examples() {
        assert_eq!(contribution_utility(8, 8.0, 20).unwrap(), 79.0);
        assert_eq!(contribution_utility(0, 13.7, 20).unwrap(), 0.0);
        assert_eq!(contribution_utility(9, 8.0, 20).unwrap(), 23.0);
        assert!(contribution_utility(25, 1.0, 20).is_err());
        assert!(contribution_utility(3, -1.0, 20).is_err());
    }

    #[test]
    fn meanfield_channel_examples() {
        let deg8 = ActionDistribution::degenerate(20, 8).unwrap();
        let ch = contribution_meanfield_channel(8, &deg8, 20).unwrap();
        assert_eq!(ch, PayoffDistribution::point(79.0));
        let uni = ActionDistribution::uniform(20);
        let ch = contribution_meanfield_channel(8, &uni, 20).unwrap();
        assert!((ch.expectation() - 103.0).abs() < 1e-12);
        let deg0 = ActionDistribution::degenerate(20, 0).unwrap();
        assert_eq!(
            contribution_meanfield_channel(0, &deg0, 20).unwrap(),
            PayoffDistribution::point(0.0)
        );
    }

    #[test]
    fn unique_best_reply_is_eight() {
        for penalty in [0, 1, 20, 100, 5000] {
            let game = ContributionGame::new(penalty, PayoffMode::MeanField);
            let deg8 = ActionDistribution::degenerate(20, 8).unwrap();
            assert_eq!(brute_force_best(&game, &deg8), vec![8]);
            assert_eq!(
                brute_force_best(&game, &ActionDistribution::uniform(20)),
                vec![8]
            );
        }
    }

    #[test]
    fn defect_dominates_in_prisoners_dilemma() {
        let pd = PayoffMatrix::new(vec![vec![3.0, 0.0], vec![5.0, 1.0]]).unwrap();
        for mode in [PayoffMode::MeanField, PayoffMode::Matching] {
            let game = MatrixGame::new(pd.clone(), mode);
            for i in 0..=100 {
                let c = i as f64 / 100.0;
                let rho = ActionDistribution::new(vec![c, 1.0 - c]).unwrap();
                assert_eq!(brute_force_best(&game, &rho), vec![1]);
            }
        }
    }

    #[test]
    fn meanfield_matrix_utility_is_bilinear_form() {
        let m = PayoffMatrix::new(vec![
            vec![11.0, -30.0, 0.0],
            vec![-30.0, 7.0, 6.0],
            vec![0.0, 0.0, 5.0],
        ])
        .unwrap();
        let game = MatrixGame::new(m.clone(), PayoffMode::MeanField);
        let rho = ActionDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        for a in 0..3 {
            let pure = matching_utility(&MixedAction::pure(a), &rho, &m).unwrap();
            assert_eq!(game.expected_payoff(a, &rho), pure);
            let s = MixedAction::new(a, 0.1).unwrap();
            let via_game = utility(&s, &rho, &game).unwrap();
            let bilinear = matching_utility(&s, &rho, &m).unwrap();
            assert!((via_game - bilinear).abs() < 1e-12);
        }
    }

    #[test]
    fn modes_agree_on_expected_payoff() {
        let mf = ContributionGame::new(20, PayoffMode::MeanField);
        let mm = ContributionGame::new(20, PayoffMode::Matching);
        let rho = ActionDistribution::uniform(20);
        for a in 0..20 {
            let x = mf.expected_payoff(a, &rho);
            let y = mm.expected_payoff(a, &rho);
            let z = mm.payoff_channel(a, &rho).expectation();
            assert!((x - y).abs() < 1e-9 && (y - z).abs() < 1e-9);
        }
        assert!(mf.payoff_set().is_none());
        assert!(mm.payoff_set().is_some());
    }

    #[test]
    fn contribution_lipschitz() {
        let game = ContributionGame::new(20, PayoffMode::MeanField);
        let Lipschitz::Known(k) = game.lipschitz() else {
            panic!("expected analytic constant")
        };
        // x = 19, y = 0: −(361 + 40).
        assert_eq!(k, 401.0);
        let est = estimate_lipschitz(&game, 60, 4).unwrap();
        assert!(est > 0.0 && est <= k);
    }
}
