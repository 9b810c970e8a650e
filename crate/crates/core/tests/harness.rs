use std::collections::BTreeMap;

use ragtune::env::{gen_landscape, Profile, Regime, ReplayTable};
use ragtune::harness::output::{read_trial_log, write_trial_log_file};
use ragtune::harness::{
    aggregate_seeds, grid_search, run_experiment, run_experiment_with_learner, RunConfig,
};
use ragtune::hier::{HierState, UpdateScope};
use ragtune::learner::{Learner, LearnerSettings, Method};
use ragtune::reward::{QueryOutcome, RewardParams};
use ragtune::space::{Config, Dimension, HyperParamSpace};

fn medium() -> ragtune::env::LandscapeModel {
    gen_landscape(Regime::Medium, &HyperParamSpace::three_param(), 21).unwrap()
}

fn run_for(method: Method, trials: usize, seed: u64) -> RunConfig {
    RunConfig {
        learner: LearnerSettings::for_method(method),
        trials,
        seed,
        ..RunConfig::default()
    }
}

#[test]
fn zero_trials_rejected() {
    let env = medium();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    assert!(run_experiment(&run_for(Method::Ucb, 0, 1), &env, &oracle).is_err());
}

/// Probability that `draws` uniform draws over `n` items hit all of them.
fn coupon_probability(n: usize, draws: i32) -> f64 {
    let choose =
        |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (0..=n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * choose(n, k) * ((n - k) as f64 / n as f64).powi(draws)
        })
        .sum()
}

#[test]
fn random_covers_a_tiny_space_within_the_grid_budget() {
    let space = HyperParamSpace::new(vec![
        Dimension::new("a", [1i64, 2]),
        Dimension::new("b", ["x", "y"]),
    ])
    .unwrap();
    let queries = 8;
    let table = ReplayTable::from_fn(space, Profile::asqa_like(), queries, |c, q| {
        QueryOutcome::new(((c + q) % 5) as f64 / 5.0, 100)
    })
    .unwrap();
    let oracle = grid_search(&table, &RewardParams::default()).unwrap();
    let budget = 4 * queries;
    let p = coupon_probability(4, budget as i32);
    assert!(p >= 0.99, "{p}");
    let seeds = 400;
    let covered = (0..seeds)
        .filter(|&seed| {
            let run = RunConfig {
                batch_size: 1,
                recall_x: 1,
                ..run_for(Method::Random, budget, seed)
            };
            let t = run_experiment(&run, &table, &oracle).unwrap();
            let mut seen = [false; 4];
            t.records.iter().for_each(|r| seen[r.config_index] = true);
            seen.iter().all(|&s| s)
        })
        .count();
    assert!(
        covered as f64 / seeds as f64 >= 0.99,
        "{covered} of {seeds}"
    );
}

#[derive(Default, Debug, Clone, Copy)]
struct Tally {
    pulls: u64,
    sum: f64,
}

impl Tally {
    fn add(&mut self, r: f64) {
        self.pulls += 1;
        self.sum += r;
    }

    fn mean(&self) -> f64 {
        self.sum / self.pulls as f64
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn hier_statistics_replay_from_the_trial_log() {
    let env = medium();
    let space = env_space();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    let (t, learner) =
        run_experiment_with_learner(&run_for(Method::HierUcb, 500, 77), &env, &oracle).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_trial_log_file(&path, &t.records).unwrap();
    let records = read_trial_log(std::fs::File::open(&path).unwrap()).unwrap();

    let counts = space.level_counts();
    let mut high = vec![Tally::default(); counts.len()];
    let mut low: Vec<Vec<Tally>> = counts.iter().map(|&n| vec![Tally::default(); n]).collect();
    let mut configs: BTreeMap<usize, Tally> = BTreeMap::new();
    for r in &records {
        high[r.pulled_dimension.unwrap()].add(r.reward);
        let config = space.config_at(r.config_index).unwrap();
        for (d, &l) in config.level_indices.iter().enumerate() {
            low[d][l].add(r.reward);
        }
        configs.entry(r.config_index).or_default().add(r.reward);
    }

    let Learner::Hier(state) = learner else {
        panic!("hierarchical learner expected")
    };
    for (arm, tally) in state.high_level().iter().zip(&high) {
        assert_eq!(arm.pulls, tally.pulls);
        assert!(tally.pulls == 0 || close(arm.mean_reward, tally.mean()));
    }
    for (arms, tallies) in state.low_level().iter().zip(&low) {
        for (arm, tally) in arms.iter().zip(tallies) {
            assert_eq!(arm.pulls, tally.pulls);
            assert!(tally.pulls == 0 || close(arm.mean_reward, tally.mean()));
        }
    }
    assert_eq!(state.config_stats().len(), configs.len());
    for (c, tally) in &configs {
        let arm = state.config_stats()[c];
        assert_eq!(arm.pulls, tally.pulls);
        assert!(close(arm.mean_reward, tally.mean()));
    }
}

fn env_space() -> HyperParamSpace {
    HyperParamSpace::three_param()
}

#[test]
fn flat_statistics_replay_from_the_trial_log() {
    let env = medium();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    for method in [Method::Ucb, Method::Thompson, Method::Random] {
        let (t, learner) =
            run_experiment_with_learner(&run_for(method, 400, 5), &env, &oracle).unwrap();
        let mut tallies = vec![Tally::default(); 75];
        t.records
            .iter()
            .for_each(|r| tallies[r.config_index].add(r.reward));
        for (c, tally) in tallies.iter().enumerate() {
            assert_eq!(learner.config_pulls(c), tally.pulls);
            if tally.pulls > 0 {
                assert!(
                    close(learner.config_mean(c).unwrap(), tally.mean()),
                    "{method} config {c}"
                );
            }
        }
    }
}

#[test]
fn full_visitation_ranking_is_a_plain_sort() {
    let space = HyperParamSpace::two_param();
    let mut state = HierState::new(&space, 1.0, 1.0, UpdateScope::AllActive).unwrap();
    let mut means = BTreeMap::new();
    // Visit configurations in a scrambled order with made-up rewards.
    for step in 0..25 {
        let c = (step * 7) % 25;
        let config = space.config_at(c).unwrap();
        let reward = ((c * 13) % 17) as f64 / 17.0 - 0.4;
        state
            .update(0, config.level_indices[0], &config, reward)
            .unwrap();
        means.insert(c, reward);
    }
    let mut expected: Vec<usize> = (0..25).collect();
    expected.sort_by(|a, b| means[b].total_cmp(&means[a]).then(a.cmp(b)));
    let got: Vec<usize> = state
        .rank_configs(5, &space)
        .unwrap()
        .entries
        .iter()
        .map(|e| e.config_index)
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn same_seed_gives_identical_log_files() {
    let env = medium();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for method in Method::ALL {
        let mut files = Vec::new();
        for i in 0..2 {
            let t = run_experiment(&run_for(method, 300, 42), &env, &oracle).unwrap();
            let path = dir.path().join(format!("{method}-{i}.csv"));
            write_trial_log_file(&path, &t.records).unwrap();
            files.push(std::fs::read(path).unwrap());
        }
        assert_eq!(files[0], files[1], "{method}");
    }
}

#[test]
fn aggregate_ignores_seed_order() {
    let env = medium();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    let mut ts: Vec<_> = (0..4)
        .map(|s| run_experiment(&run_for(Method::Ucb, 200, s), &env, &oracle).unwrap())
        .collect();
    let a = aggregate_seeds(&ts).unwrap();
    ts.reverse();
    ts.swap(0, 2);
    let b = aggregate_seeds(&ts).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.budget, q.budget);
        assert!(close(p.recall_mean, q.recall_mean) && close(p.recall_std, q.recall_std));
    }
}

#[test]
fn generated_regimes_by_enumeration() {
    let space = HyperParamSpace::two_param();
    let reward = RewardParams::default();
    assert_eq!(
        gen_landscape(Regime::Hard, &space, 3).unwrap(),
        gen_landscape(Regime::Hard, &space, 3).unwrap()
    );

    for seed in 0..5 {
        let easy = gen_landscape(Regime::Easy, &space, seed).unwrap();
        let mut r = easy.expected_rewards(&reward);
        r.sort_by(|a, b| b.total_cmp(a));
        assert!(r[0] - r[1] >= 3.0 * easy.noise_std, "seed {seed}");

        let hard = gen_landscape(Regime::Hard, &space, seed).unwrap();
        let r = hard.expected_rewards(&reward);
        let best = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let near = r.iter().filter(|&&v| best - v <= hard.noise_std).count();
        assert!(near >= 10, "seed {seed}: {near}");
    }
}

#[test]
fn reset_contract_in_the_learner() {
    let env = medium();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    let (_, mut learner) =
        run_experiment_with_learner(&run_for(Method::HierUcb, 100, 1), &env, &oracle).unwrap();
    assert!(learner.all_pulls() > 0);
    learner.reset();
    assert_eq!(learner.all_pulls(), 0);
    assert_eq!(learner.total_trials(), 0);
    let fresh = Config::new(vec![2, 2, 1]);
    assert!(matches!(learner, Learner::Hier(ref s) if s.current_config() == &fresh));
}
