//! Synthetic reward landscapes with controllable difficulty.
//!
//! A landscape fixes a mean accuracy and a token count per configuration.
//! Each evaluated query draws `clamp(mean_accuracy + N(0, noise_std), 0, 1)`
//! and always costs exactly `mean_tokens`. Expected rewards are available in
//! closed form, so oracles built from a landscape carry no sampling error.
//!
//! Generation starts from a separable "natural" reward surface (one
//! unimodal profile per numeric dimension, a preferred level per categorical
//! one) with token cost growing additively in every numeric index, and then
//! reshapes the top of the expected-reward ranking to the requested regime:
//!
//! * `Easy`: a unique optimum and gaps of at least 3 `noise_std` between
//!   the six best configurations.
//! * `Medium`: the five best within 1.5 `noise_std` of each other, and the
//!   gap down to the sixth at least twice the spread of the five.
//! * `Hard`: the best 40% packed within one `noise_std`.
//!
//! When the requested noise level leaves no room for the Easy gaps inside
//! the attainable reward range, `noise_std` is shrunk until they fit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Environment;
use super::ExactMeans;
use crate::error::{Error, Result};
use crate::reward::{QueryOutcome, RewardParams};
use crate::space::{Config, HyperParamSpace};

const MEAN_ACC_LO: f64 = 0.02;
const MEAN_ACC_HI: f64 = 0.99;
const MAX_SHRINK_STEPS: usize = 400;
/// Slack for comparisons against targets reached by bisection.
const TOLERANCE: f64 = 1e-9;
/// Scale of the per-dimension profiles of the natural surface.
const NATURAL_AMPLITUDE: f64 = 0.2;
/// Noise added to the natural surface for the second landscape of a pair.
const PAIR_PERTURBATION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Easy,
    Medium,
    Hard,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Regime::Easy),
            "medium" => Ok(Regime::Medium),
            "hard" => Ok(Regime::Hard),
            other => Err(Error::InvalidConfig(format!(
                "unknown regime `{other}` (expected easy, medium or hard)"
            ))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Easy => "easy",
            Regime::Medium => "medium",
            Regime::Hard => "hard",
        })
    }
}

/// Target shape of the top block, in units of `noise_std`.
struct Shape {
    block: usize,
    /// Offset of each block member below the block's best.
    offsets: Vec<f64>,
    /// Gap between the block's worst member and everything else.
    margin: f64,
}

impl Regime {
    /// Minimum gap between consecutive members of the Easy top block.
    pub const EASY_GAP: f64 = 3.0;
    /// Maximum spread of the Medium top five.
    pub const MEDIUM_SPREAD: f64 = 1.5;
    /// Minimum gap between the Medium top five and the rest, as a multiple
    /// of their spread.
    pub const MEDIUM_SEPARATION: f64 = 2.0;
    /// Maximum spread of the Hard plateau.
    pub const HARD_SPREAD: f64 = 1.0;

    fn shape(self, n: usize) -> Shape {
        match self {
            Regime::Easy => {
                let block = n.min(6);
                Shape {
                    block,
                    offsets: (0..block).map(|k| 3.5 * k as f64).collect(),
                    margin: 3.5,
                }
            }
            Regime::Medium => {
                let block = n.min(5);
                Shape {
                    block,
                    offsets: spread(block, 0.02),
                    margin: 0.08,
                }
            }
            Regime::Hard => {
                let block = hard_block(n);
                Shape {
                    block,
                    offsets: spread(block, 0.05),
                    margin: 0.5,
                }
            }
        }
    }
}

fn spread(block: usize, width: f64) -> Vec<f64> {
    if block <= 1 {
        return vec![0.0; block];
    }
    (0..block)
        .map(|k| width * k as f64 / (block - 1) as f64)
        .collect()
}

fn hard_block(n: usize) -> usize {
    (2 * n).div_ceil(5).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeOptions {
    /// Requested per-query accuracy noise; may shrink for the Easy regime.
    pub noise_std: f64,
    /// Reward definition under which the regime conditions are enforced.
    pub reward: RewardParams,
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        LandscapeOptions {
            noise_std: 0.25,
            reward: RewardParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeModel {
    pub name: String,
    pub regime: Regime,
    pub seed: u64,
    pub space: HyperParamSpace,
    pub t_max: u32,
    pub noise_std: f64,
    /// Reward parameters the regime shaping was computed for.
    pub shaped_for: RewardParams,
    /// Indexed by flat configuration index.
    pub mean_accuracy: Vec<f64>,
    pub mean_tokens: Vec<u32>,
}

/// Outcome of checking a model against its regime's conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCheck {
    /// Expected rewards sorted descending.
    pub sorted: Vec<f64>,
    pub holds: bool,
    pub detail: String,
}

/// `E[pen(clamp(m + sigma Z, 0, 1))]` for standard normal `Z`.
fn expected_penalized(m: f64, sigma: f64, threshold: f64) -> f64 {
    let pen = |acc: f64| if acc <= threshold { -1.0 } else { acc };
    if threshold >= 1.0 {
        return -1.0;
    }
    if sigma == 0.0 {
        return pen(m.clamp(0.0, 1.0));
    }
    let a = (threshold - m) / sigma;
    let b = (1.0 - m) / sigma;
    let (cdf_a, cdf_b) = (normal_cdf(a), normal_cdf(b));
    -cdf_a + m * (cdf_b - cdf_a) + sigma * (normal_pdf(a) - normal_pdf(b)) + (1.0 - cdf_b)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn expected_reward(m: f64, tau: f64, sigma: f64, reward: &RewardParams) -> f64 {
    reward.w * expected_penalized(m, sigma, reward.penalty_threshold) - (1.0 - reward.w) * tau
}

/// Mean accuracy in `[lo, hi]` whose expected reward is `target`.
fn invert(target: f64, tau: f64, sigma: f64, reward: &RewardParams) -> f64 {
    let (mut lo, mut hi) = (MEAN_ACC_LO, MEAN_ACC_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_reward(mid, tau, sigma, reward) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Token fraction of `t_max`: grows with every numeric level index.
fn token_fraction(space: &HyperParamSpace, config: &Config) -> f64 {
    let numeric: Vec<usize> = (0..space.dim_count())
        .filter(|&d| space.dimensions()[d].is_numeric())
        .collect();
    if numeric.is_empty() {
        return 0.5;
    }
    let share = 0.9 / numeric.len() as f64;
    0.1 + numeric
        .iter()
        .map(|&d| {
            let n = space.dimensions()[d].levels.len();
            if n > 1 {
                share * config.level_indices[d] as f64 / (n - 1) as f64
            } else {
                share
            }
        })
        .sum::<f64>()
}

/// Separable reward surface relative to its optimum (max 0): a sum of
/// unimodal per-dimension profiles.
fn natural_reward(space: &HyperParamSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let amp = NATURAL_AMPLITUDE;
    let per_dim: Vec<Vec<f64>> = space
        .dimensions()
        .iter()
        .map(|dim| {
            let n = dim.levels.len();
            let weight = amp * rng.random_range(0.5..1.0);
            if n == 1 {
                return vec![0.0];
            }
            if dim.is_numeric() {
                let peak = rng.random_range(0..n);
                let exponent: f64 = rng.random_range(1.0..2.0);
                let reach = peak.max(n - 1 - peak) as f64;
                (0..n)
                    .map(|l| -weight * ((l as f64 - peak as f64).abs() / reach).powf(exponent))
                    .collect()
            } else {
                let best = rng.random_range(0..n);
                (0..n)
                    .map(|l| {
                        if l == best {
                            0.0
                        } else {
                            -weight * rng.random_range(0.3..1.0)
                        }
                    })
                    .collect()
            }
        })
        .collect();
    let raw: Vec<f64> = space
        .configs()
        .map(|c| {
            let jitter: f64 = rng.sample(StandardNormal);
            c.level_indices
                .iter()
                .enumerate()
                .map(|(d, &l)| per_dim[d][l])
                .sum::<f64>()
                + 0.01 * amp * jitter
        })
        .collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|r| r - max).collect()
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Reshape expected rewards for one regime at one noise level. Returns the
/// mean accuracies if every target is attainable.
fn shape(
    regime: Regime,
    natural: &[f64],
    tau: &[f64],
    sigma: f64,
    reward: &RewardParams,
) -> Vec<f64> {
    let n = natural.len();
    let level = expected_reward(0.8, 0.5, sigma, reward);
    let base: Vec<f64> = natural.iter().map(|r| r + level).collect();
    let lower: Vec<f64> = (0..n)
        .map(|c| expected_reward(MEAN_ACC_LO, tau[c], sigma, reward))
        .collect();
    let upper: Vec<f64> = (0..n)
        .map(|c| expected_reward(MEAN_ACC_HI, tau[c], sigma, reward))
        .collect();
    let order = descending_order(&base);
    let Shape {
        block,
        offsets,
        margin,
    } = regime.shape(n);
    let (top, rest) = order.split_at(block);

    let anchor = top
        .iter()
        .zip(&offsets)
        .map(|(&c, off)| upper[c] + sigma * off)
        .fold(base[order[0]], f64::min);
    let mut target = base.clone();
    for (&c, off) in top.iter().zip(&offsets) {
        target[c] = anchor - sigma * off;
    }
    if let Some(&first_rest) = rest.first() {
        let floor = target[top[block - 1]] - margin * sigma;
        let shift = (base[first_rest] - floor).max(0.0);
        for &c in rest {
            target[c] = base[c] - shift;
        }
    }
    (0..n)
        .map(|c| invert(target[c].max(lower[c]), tau[c], sigma, reward))
        .collect()
}

fn build(
    regime: Regime,
    space: &HyperParamSpace,
    seed: u64,
    natural: &[f64],
    options: &LandscapeOptions,
) -> Result<LandscapeModel> {
    let reward = options.reward;
    reward.validate()?;
    if reward.w <= 0.0 {
        return Err(Error::InvalidRewardParams(
            "landscape shaping needs w > 0 so accuracy affects the reward".into(),
        ));
    }
    if !(options.noise_std.is_finite() && options.noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise_std = {} must be >= 0",
            options.noise_std
        )));
    }
    let mean_tokens: Vec<u32> = space
        .configs()
        .map(|c| (reward.t_max as f64 * token_fraction(space, &c)).round() as u32)
        .collect();
    let tau: Vec<f64> = mean_tokens
        .iter()
        .map(|&t| t as f64 / reward.t_max as f64)
        .collect();

    let mut sigma = options.noise_std;
    for _ in 0..MAX_SHRINK_STEPS {
        let mean_accuracy = shape(regime, natural, &tau, sigma, &reward);
        let model = LandscapeModel {
            name: format!("{regime}-{seed}"),
            regime,
            seed,
            space: space.clone(),
            t_max: reward.t_max,
            noise_std: sigma,
            shaped_for: reward,
            mean_accuracy,
            mean_tokens: mean_tokens.clone(),
        };
        if model.check_regime(&reward).holds {
            return Ok(model);
        }
        sigma *= 0.9;
    }
    Err(Error::InvalidConfig(format!(
        "could not shape a {regime} landscape for this space and reward"
    )))
}

/// Generate a landscape of the given regime with default options.
pub fn gen_landscape(regime: Regime, space: &HyperParamSpace, seed: u64) -> Result<LandscapeModel> {
    LandscapeModel::generate(regime, space, seed, &LandscapeOptions::default())
}

impl LandscapeModel {
    pub fn generate(
        regime: Regime,
        space: &HyperParamSpace,
        seed: u64,
        options: &LandscapeOptions,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let natural = natural_reward(space, &mut rng);
        build(regime, space, seed, &natural, options)
    }

    /// A pair of related landscapes whose second optimum lies within the
    /// first landscape's top five, as when swapping one generator model for
    /// a similar one.
    pub fn generate_correlated_pair(
        regime: Regime,
        space: &HyperParamSpace,
        seed: u64,
        options: &LandscapeOptions,
    ) -> Result<(Self, Self)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let natural = natural_reward(space, &mut rng);
        let first = build(regime, space, seed, &natural, options)?;
        let first_top: Vec<usize> = first.ranked(&options.reward).into_iter().take(5).collect();
        for _ in 0..1000 {
            let perturbed: Vec<f64> = natural
                .iter()
                .map(|&a| {
                    let z: f64 = rng.sample(StandardNormal);
                    a + PAIR_PERTURBATION * z
                })
                .collect();
            let mut second = build(regime, space, seed, &perturbed, options)?;
            second.name = format!("{regime}-{seed}-b");
            let best = second.ranked(&options.reward)[0];
            if first_top.contains(&best) {
                return Ok((first, second));
            }
        }
        Err(Error::InvalidConfig(
            "could not draw a correlated second landscape".into(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.space.cardinality();
        if self.mean_accuracy.len() != n || self.mean_tokens.len() != n {
            return Err(Error::InvalidConfig(format!(
                "landscape covers {} / {} configurations, space has {n}",
                self.mean_accuracy.len(),
                self.mean_tokens.len()
            )));
        }
        if let Some(a) = self
            .mean_accuracy
            .iter()
            .find(|a| !(0.0..=1.0).contains(*a))
        {
            return Err(Error::AccuracyOutOfRange(*a));
        }
        if let Some(t) = self.mean_tokens.iter().find(|&&t| t > self.t_max) {
            return Err(Error::InvalidConfig(format!(
                "mean tokens {t} exceed t_max {}",
                self.t_max
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_std = {} must be >= 0",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// Exact expected reward of one configuration.
    pub fn expected_reward(&self, config_index: usize, reward: &RewardParams) -> f64 {
        let tau = self.mean_tokens[config_index].min(reward.t_max) as f64 / reward.t_max as f64;
        expected_reward(
            self.mean_accuracy[config_index],
            tau,
            self.noise_std,
            reward,
        )
    }

    pub fn expected_rewards(&self, reward: &RewardParams) -> Vec<f64> {
        (0..self.mean_accuracy.len())
            .map(|c| self.expected_reward(c, reward))
            .collect()
    }

    /// Configuration indices by expected reward, best first, ties by index.
    pub fn ranked(&self, reward: &RewardParams) -> Vec<usize> {
        descending_order(&self.expected_rewards(reward))
    }

    /// Check this model's regime conditions under `reward`.
    pub fn check_regime(&self, reward: &RewardParams) -> RegimeCheck {
        let mut sorted = self.expected_rewards(reward);
        sorted.sort_by(|a, b| b.total_cmp(a));
        let sigma = self.noise_std;
        let n = sorted.len();
        let (holds, detail) = match self.regime {
            Regime::Easy => {
                let block = n.min(6);
                let worst = (1..block)
                    .map(|k| sorted[k - 1] - sorted[k])
                    .fold(f64::INFINITY, f64::min);
                let holds = (1..block)
                    .all(|k| sorted[k - 1] - sorted[k] >= Regime::EASY_GAP * sigma - TOLERANCE);
                (
                    holds,
                    format!(
                        "smallest top gap {worst:.4} vs {:.4}",
                        Regime::EASY_GAP * sigma
                    ),
                )
            }
            Regime::Medium => {
                let block = n.min(5);
                let spread = sorted[0] - sorted[block - 1];
                let margin = if n > block {
                    sorted[block - 1] - sorted[block]
                } else {
                    f64::INFINITY
                };
                let holds = spread <= Regime::MEDIUM_SPREAD * sigma + TOLERANCE
                    && margin > 0.0
                    && margin >= Regime::MEDIUM_SEPARATION * spread - TOLERANCE;
                (
                    holds,
                    format!("top-5 spread {spread:.4}, margin {margin:.4}, noise {sigma:.4}"),
                )
            }
            Regime::Hard => {
                let block = hard_block(n);
                let within = sorted
                    .iter()
                    .filter(|&&r| sorted[0] - r <= Regime::HARD_SPREAD * sigma + TOLERANCE)
                    .count();
                (
                    within >= block,
                    format!("{within} of {n} within noise of the best (need {block})"),
                )
            }
        };
        RegimeCheck {
            sorted,
            holds,
            detail,
        }
    }

    /// Draw `batch_size` outcomes for one configuration.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        config_index: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Vec<QueryOutcome> {
        let mean = self.mean_accuracy[config_index];
        let tokens = self.mean_tokens[config_index];
        (0..batch_size)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                QueryOutcome::new((mean + self.noise_std * z).clamp(0.0, 1.0), tokens)
            })
            .collect()
    }
}

impl Environment for LandscapeModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &HyperParamSpace {
        &self.space
    }

    fn t_max(&self) -> u32 {
        self.t_max
    }

    fn evaluate(
        &self,
        config: &Config,
        batch_size: usize,
        mut rng: &mut dyn RngCore,
    ) -> Result<Vec<QueryOutcome>> {
        let c = self.space.index_of(config)?;
        Ok(self.sample(c, batch_size, &mut rng))
    }

    fn exact_means(&self, reward: &RewardParams) -> Option<Result<ExactMeans>> {
        Some(Ok(ExactMeans {
            means: self.expected_rewards(reward),
            eval_count: 0,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn simulated_penalized(m: f64, sigma: f64, threshold: f64, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sum = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let acc = (m + sigma * z).clamp(0.0, 1.0);
            sum += if acc <= threshold { -1.0 } else { acc };
        }
        sum / n as f64
    }

    #[test]
    fn closed_form_matches_simulation() {
        for &(m, sigma, thr) in &[
            (0.5, 0.25, 0.0),
            (0.1, 0.3, 0.0),
            (0.9, 0.2, 0.3),
            (0.6, 0.0, 0.0),
        ] {
            let exact = expected_penalized(m, sigma, thr);
            let sim = simulated_penalized(m, sigma, thr, 400_000);
            assert!(
                (exact - sim).abs() < 0.01,
                "m={m} sigma={sigma} thr={thr}: {exact} vs {sim}"
            );
        }
        assert_eq!(expected_penalized(0.5, 0.2, 1.0), -1.0);
    }

    #[test]
    fn inversion_recovers_mean() {
        let reward = RewardParams::default();
        for &m in &[0.05, 0.3, 0.7, 0.95] {
            let target = expected_reward(m, 0.4, 0.25, &reward);
            assert!((invert(target, 0.4, 0.25, &reward) - m).abs() < 1e-9);
        }
    }

    #[test]
    fn regimes_hold_on_paper_spaces() {
        for space in [HyperParamSpace::two_param(), HyperParamSpace::three_param()] {
            for regime in [Regime::Easy, Regime::Medium, Regime::Hard] {
                for seed in 0..5 {
                    let model = gen_landscape(regime, &space, seed).unwrap();
                    model.validate().unwrap();
                    let check = model.check_regime(&model.shaped_for);
                    assert!(check.holds, "{regime} seed {seed}: {}", check.detail);
                }
            }
        }
    }

    #[test]
    fn medium_and_hard_keep_requested_noise() {
        let space = HyperParamSpace::three_param();
        for regime in [Regime::Medium, Regime::Hard] {
            assert_eq!(gen_landscape(regime, &space, 3).unwrap().noise_std, 0.25);
        }
    }

    #[test]
    fn tokens_monotone_in_numeric_levels() {
        let space = HyperParamSpace::three_param();
        let model = gen_landscape(Regime::Medium, &space, 11).unwrap();
        for c in space.configs() {
            let idx = space.index_of(&c).unwrap();
            for d in 0..2 {
                if c.level_indices[d] + 1 < space.level_counts()[d] {
                    let up = space
                        .index_of(&c.with_level(d, c.level_indices[d] + 1))
                        .unwrap();
                    assert!(model.mean_tokens[up] >= model.mean_tokens[idx]);
                }
            }
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let space = HyperParamSpace::two_param();
        let options = LandscapeOptions {
            noise_std: 0.0,
            ..Default::default()
        };
        let model = LandscapeModel::generate(Regime::Hard, &space, 1, &options).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for o in model.sample(7, 16, &mut rng) {
            assert_eq!(o.accuracy, model.mean_accuracy[7]);
            assert_eq!(o.tokens, model.mean_tokens[7]);
        }
    }

    #[test]
    fn correlated_pair_keeps_optimum_near() {
        let space = HyperParamSpace::three_param();
        let options = LandscapeOptions::default();
        let (a, b) =
            LandscapeModel::generate_correlated_pair(Regime::Medium, &space, 5, &options).unwrap();
        let top_a: Vec<usize> = a.ranked(&options.reward).into_iter().take(5).collect();
        assert!(top_a.contains(&b.ranked(&options.reward)[0]));
        assert_ne!(a.mean_accuracy, b.mean_accuracy);
    }

    proptest! {
        #[test]
        fn samples_stay_in_unit_interval(seed in 0u64..1000, c in 0usize..25, b in 1usize..32) {
            let space = HyperParamSpace::two_param();
            let model = gen_landscape(Regime::Medium, &space, seed % 7).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = model.sample(c, b, &mut rng);
            prop_assert_eq!(out.len(), b);
            for o in out {
                prop_assert!((0.0..=1.0).contains(&o.accuracy));
            }
        }
    }
}
