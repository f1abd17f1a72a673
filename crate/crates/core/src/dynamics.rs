//! Best-reply dynamics and closeness of action distributions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::{l1_distance, ActionDistribution, AnonymousGame, MixedAction};

/// `ABR_η(ρ)`: actions whose expected payoff is within `eta` of the best.
///
/// Comparisons are raw `f64` comparisons; `eta` is the only slack.
pub fn best_reply_set<G: AnonymousGame + ?Sized>(
    rho: &ActionDistribution,
    eta: f64,
    game: &G,
) -> Result<Vec<usize>> {
    if !(eta >= 0.0) {
        return Err(Error::param("eta", "must be nonnegative"));
    }
    Error::check_dim(game.num_actions(), rho.len())?;
    let payoffs = payoffs_against(rho, game);
    let max = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(payoffs
        .iter()
        .enumerate()
        .filter(|(_, &u)| u + eta >= max)
        .map(|(a, _)| a)
        .collect())
}

fn payoffs_against<G: AnonymousGame + ?Sized>(rho: &ActionDistribution, game: &G) -> Vec<f64> {
    (0..game.num_actions())
        .map(|a| game.expected_payoff(a, rho))
        .collect()
}

/// How the next distribution spreads over the η-best replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrRule {
    /// Uniform over `ABR_η(ρ)`.
    Uniform,
    /// All mass on the lowest-index member of `ABR_η(ρ)`.
    PointMass,
}

pub fn br_step<G: AnonymousGame + ?Sized>(
    rho: &ActionDistribution,
    eta: f64,
    game: &G,
    rule: BrRule,
) -> Result<ActionDistribution> {
    let replies = best_reply_set(rho, eta, game)?;
    let k = game.num_actions();
    match rule {
        BrRule::PointMass => ActionDistribution::degenerate(k, replies[0]),
        BrRule::Uniform => {
            let mut weights = vec![0.0; k];
            let w = 1.0 / replies.len() as f64;
            for a in replies {
                weights[a] = w;
            }
            ActionDistribution::new(weights)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestReplySequence {
    pub steps: Vec<ActionDistribution>,
    pub converged: bool,
    /// Index of the first step that maps to itself.
    pub fixed_point_index: Option<usize>,
}

impl BestReplySequence {
    pub fn last(&self) -> &ActionDistribution {
        self.steps
            .last()
            .expect("a sequence holds its starting point")
    }

    pub fn fixed_point(&self) -> Option<&ActionDistribution> {
        self.fixed_point_index.map(|t| &self.steps[t])
    }
}

/// Iterates [`br_step`] from `rho0`, stopping at the first exact fixed point
/// or after `max_steps` applications.
pub fn br_sequence<G: AnonymousGame + ?Sized>(
    rho0: &ActionDistribution,
    eta: f64,
    game: &G,
    max_steps: usize,
    rule: BrRule,
) -> Result<BestReplySequence> {
    br_sequence_with_tolerance(rho0, eta, game, max_steps, rule, 0.0)
}

/// Like [`br_sequence`], but a step within `tolerance` in L1 of its image
/// counts as a fixed point.
pub fn br_sequence_with_tolerance<G: AnonymousGame + ?Sized>(
    rho0: &ActionDistribution,
    eta: f64,
    game: &G,
    max_steps: usize,
    rule: BrRule,
    tolerance: f64,
) -> Result<BestReplySequence> {
    if max_steps == 0 {
        return Err(Error::param("max_steps", "must be at least 1"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::param("tolerance", "must be nonnegative"));
    }
    Error::check_dim(game.num_actions(), rho0.len())?;
    let mut steps = vec![rho0.clone()];
    for _ in 0..max_steps {
        let current = steps.last().expect("nonempty");
        let next = br_step(current, eta, game, rule)?;
        let fixed = if tolerance == 0.0 {
            next == *current
        } else {
            l1_distance(&next, current)? <= tolerance
        };
        if fixed {
            let t = steps.len() - 1;
            return Ok(BestReplySequence {
                steps,
                converged: true,
                fixed_point_index: Some(t),
            });
        }
        steps.push(next);
    }
    Ok(BestReplySequence {
        steps,
        converged: false,
        fixed_point_index: None,
    })
}

/// True iff every action in the support of `rho` is an η-best reply to `rho`.
pub fn is_eta_nash<G: AnonymousGame + ?Sized>(
    rho: &ActionDistribution,
    eta: f64,
    game: &G,
) -> Result<bool> {
    let replies = best_reply_set(rho, eta, game)?;
    Ok(rho.support().iter().all(|a| replies.contains(a)))
}

/// A finite-population witness that one distribution is (e, ε)-close to
/// another.
///
/// `g` assigns each agent a pure action, `g_prime` reassigns some of them and
/// `g_hat` lets every agent explore around its `g_prime` action at a common
/// rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CloseWitness {
    pub g: Vec<usize>,
    pub g_prime: Vec<usize>,
    pub g_hat: Vec<MixedAction>,
    pub e: f64,
    pub eps: f64,
}

impl CloseWitness {
    /// Builds the witness where `g_hat` explores at rate `explore` around
    /// `g_prime`.
    pub fn from_profiles(
        g: Vec<usize>,
        g_prime: Vec<usize>,
        explore: f64,
        e: f64,
        eps: f64,
    ) -> Result<Self> {
        let g_hat = g_prime
            .iter()
            .map(|&a| MixedAction::new(a, explore))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            g,
            g_prime,
            g_hat,
            e,
            eps,
        })
    }

    pub fn population(&self) -> usize {
        self.g.len()
    }

    /// `ρ_g`.
    pub fn rho(&self, actions: usize) -> Result<ActionDistribution> {
        ActionDistribution::from_actions(actions, &self.g)
    }

    /// `ρ_ĝ`.
    pub fn rho_hat(&self, actions: usize) -> Result<ActionDistribution> {
        ActionDistribution::from_mixed(actions, &self.g_hat)
    }

    /// The same profiles claimed at looser parameters.
    pub fn relaxed(&self, e: f64, eps: f64) -> Self {
        Self {
            e,
            eps,
            ..self.clone()
        }
    }
}

/// Tolerance used when matching empirical distributions of a witness against
/// the claimed ones and when checking the 2e bound.
const CLOSE_TOLERANCE: f64 = 1e-9;

/// Checks that `witness` shows `rhohat` to be (e, ε)-close to `rho`:
///
/// 1. `rho = ρ_g` and `rhohat = ρ_ĝ`;
/// 2. `g` is pure (enforced by its type);
/// 3. `‖ρ_g − ρ_g′‖₁ ≤ 2e`;
/// 4. `ĝ(i) = (g′(i))_ε′` for one common `ε′ ≤ ε`.
pub fn verify_close(
    witness: &CloseWitness,
    rho: &ActionDistribution,
    rhohat: &ActionDistribution,
) -> Result<bool> {
    let n = witness.population();
    if n == 0 {
        return Err(Error::param("witness", "empty population"));
    }
    Error::check_dim(n, witness.g_prime.len())?;
    Error::check_dim(n, witness.g_hat.len())?;
    let k = rho.len();
    Error::check_dim(k, rhohat.len())?;

    let rho_g = witness.rho(k)?;
    let rho_g_prime = ActionDistribution::from_actions(k, &witness.g_prime)?;
    let rho_g_hat = witness.rho_hat(k)?;

    let same_rho = l1_distance(&rho_g, rho)? <= CLOSE_TOLERANCE;
    let same_rhohat = l1_distance(&rho_g_hat, rhohat)? <= CLOSE_TOLERANCE;
    let reassignment = l1_distance(&rho_g, &rho_g_prime)? <= 2.0 * witness.e + CLOSE_TOLERANCE;

    let common = witness.g_hat[0].explore();
    let exploration = common <= witness.eps
        && witness
            .g_hat
            .iter()
            .zip(&witness.g_prime)
            .all(|(hat, &a)| hat.base() == a && hat.explore() == common);

    Ok(same_rho && same_rhohat && reassignment && exploration)
}

/// `2(e + ε)`, the L1 radius implied by (e, ε)-closeness.
pub fn close_l1_bound(e: f64, eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::param("e", "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::param("eps", "must lie in [0, 1]"));
    }
    Ok(2.0 * (e + eps))
}

/// `d_η = η / (8K)`: below this value of `e + ε`, half-η-best replies to the
/// perturbed distribution are η-best replies to the original.
pub fn abr_containment_threshold(eta: f64, lipschitz: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::param("eta", "must be positive"));
    }
    if lipschitz == 0.0 {
        return Err(Error::param(
            "lipschitz",
            "constant games have no containment threshold",
        ));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::param("lipschitz", "must be positive"));
    }
    Ok(eta / (8.0 * lipschitz))
}
