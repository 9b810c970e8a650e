//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Every landscape and seed list below is derived from `MASTER_SEED`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use ragtune::bandit::{FlatBanditState, Policy, RankEntry, Ranking};
use ragtune::env::Environment;
use ragtune::env::{LandscapeModel, LandscapeOptions, Profile, Regime, ReplayTable};
use ragtune::harness::output::{read_trial_log, write_trial_log_file};
use ragtune::harness::seed::{derive_seed, seed_list};
use ragtune::harness::{
    grid_search, model_switch_run, recall_at_x, run_experiment, run_experiment_with_learner,
    RunConfig, SwitchMode, Trajectory,
};
use ragtune::learner::{Learner, LearnerSettings, Method};
use ragtune::reward::{compute_reward, QueryOutcome, RewardParams};
use ragtune::space::HyperParamSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde_json::{json, Value};

const MASTER_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn landscape_seed(criterion: u64) -> u64 {
    derive_seed(MASTER_SEED, &[criterion, 0])
}

fn run_seeds_for(criterion: u64, n: usize) -> Vec<u64> {
    seed_list(derive_seed(MASTER_SEED, &[criterion, 1]), n)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn run_for(method: Method, budget: u64, batch_size: usize, seed: u64) -> RunConfig {
    RunConfig {
        learner: LearnerSettings::for_method(method),
        trials: (budget / batch_size as u64) as usize,
        batch_size,
        seed,
        ..RunConfig::default()
    }
}

/// Final Recall@5 of `method` for each seed.
fn final_recalls(env: &LandscapeModel, method: Method, budget: u64, seeds: &[u64]) -> Vec<f64> {
    let oracle = grid_search(env, &RewardParams::default()).unwrap();
    seeds
        .par_iter()
        .map(|&s| {
            let t = run_experiment(&run_for(method, budget, 4, s), env, &oracle).unwrap();
            t.recall_at_budget(budget).unwrap()
        })
        .collect()
}

fn reward_of(accuracy: f64, tokens: u32, r: &RewardParams) -> f64 {
    let pen = if accuracy <= r.penalty_threshold {
        -1.0
    } else {
        accuracy
    };
    let cost = f64::from(tokens.min(r.t_max)) / f64::from(r.t_max);
    (r.w * pen - (1.0 - r.w) * cost).clamp(-1.0, r.w)
}

fn ac1_oracle_exactness() -> Outcome {
    let space = HyperParamSpace::two_param();
    let land = LandscapeModel::generate(
        Regime::Medium,
        &space,
        landscape_seed(1),
        &LandscapeOptions::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(landscape_seed(1));
    let table = ReplayTable::from_fn(space, Profile::asqa_like(), 32, |c, _| {
        land.sample(c, 1, &mut rng)[0]
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.csv");
    table.write(&path).unwrap();

    let start = Instant::now();
    let loaded = ReplayTable::load(&path).unwrap();
    let reward = RewardParams::default();
    let oracle = grid_search(&loaded, &reward).unwrap();
    let elapsed = start.elapsed();

    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let text = fs::read_to_string(&path).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let e = sums.entry(f[0].to_string()).or_default();
        e.0 += reward_of(f[2].parse().unwrap(), f[3].parse().unwrap(), &reward);
        e.1 += 1;
    }
    let mismatches = (0..loaded.space().cardinality())
        .filter(|&c| {
            let (s, n) = sums[loaded.config_id(c)];
            oracle.means()[c] != s / n as f64
        })
        .count();
    let own = Ranking {
        entries: oracle
            .ranking()
            .iter()
            .map(|&c| RankEntry {
                config_index: c,
                score: oracle.means()[c],
            })
            .collect(),
    };
    let recall = recall_at_x(&own, &oracle, 5).unwrap();
    let pass =
        sums.len() == 25 && mismatches == 0 && recall == 1.0 && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "25x32 fixture, {mismatches} mean mismatches, self Recall@5 {recall}, {elapsed:.1?}"
        ),
    )
}

fn ac2_easy_convergence() -> Outcome {
    let start = Instant::now();
    let env = LandscapeModel::generate(
        Regime::Easy,
        &HyperParamSpace::three_param(),
        landscape_seed(2),
        &LandscapeOptions::default(),
    )
    .unwrap();
    let seeds = run_seeds_for(2, 10);
    let budget = 6000;
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [Method::HierUcb, Method::Ucb, Method::Thompson] {
        let m = mean(&final_recalls(&env, method, budget, &seeds));
        pass &= m >= 0.7;
        parts.push(format!("{method} {m:.3}"));
    }
    let ratio = budget as f64 / (75.0 * 350.0);
    let elapsed = start.elapsed();
    pass &= (ratio - 0.229).abs() < 0.001 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{}, budget ratio {ratio:.3}, {elapsed:.1?}",
            parts.join(", ")
        ),
    )
}

/// One-sided sign test: P(at least `wins` successes out of wins + losses).
fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let choose =
        |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32)
}

fn ac3_medium_advantage() -> Outcome {
    let env = LandscapeModel::generate(
        Regime::Medium,
        &HyperParamSpace::three_param(),
        landscape_seed(3),
        &LandscapeOptions::default(),
    )
    .unwrap();
    let seeds = run_seeds_for(3, 20);
    let budget = 2500;
    let hier = final_recalls(&env, Method::HierUcb, budget, &seeds);
    let mut pass = true;
    let mut parts = vec![format!("hier_ucb {:.3}", mean(&hier))];
    for method in [Method::Ucb, Method::Thompson, Method::Random] {
        let other = final_recalls(&env, method, budget, &seeds);
        let wins = hier.iter().zip(&other).filter(|(h, o)| h > o).count();
        let losses = hier.iter().zip(&other).filter(|(h, o)| h < o).count();
        let p = sign_test(wins, losses);
        let gap = mean(&hier) - mean(&other);
        pass &= gap >= 0.03 && p <= 0.1;
        parts.push(format!(
            "{method} {:.3} (gap {gap:+.3}, sign p {p:.3})",
            mean(&other)
        ));
    }
    outcome(pass, parts.join(", "))
}

fn ac4_hard_ceiling() -> Outcome {
    let env = LandscapeModel::generate(
        Regime::Hard,
        &HyperParamSpace::three_param(),
        landscape_seed(4),
        &LandscapeOptions::default(),
    )
    .unwrap();
    let seeds = run_seeds_for(4, 10);
    let mut pass = true;
    let mut parts = Vec::new();
    for method in Method::ALL {
        let m = mean(&final_recalls(&env, method, 6000, &seeds));
        pass &= m <= 0.55;
        parts.push(format!("{method} {m:.3}"));
    }
    outcome(pass, parts.join(", "))
}

fn ac5_ucb_sanity() -> Outcome {
    let start = Instant::now();
    let shares: Vec<f64> = run_seeds_for(5, 10)
        .into_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arms: Vec<Normal<f64>> = (0..10)
                .map(|a| Normal::new(if a == 3 { 0.9 } else { 0.5 }, 0.3).unwrap())
                .collect();
            let alpha = LearnerSettings::for_method(Method::Ucb).alpha;
            let mut state = FlatBanditState::new(10, Policy::Ucb { alpha }).unwrap();
            for _ in 0..10_000 {
                let a = state.select(&mut rng).unwrap();
                let r = arms[a].sample(&mut rng);
                state.update_arm(a, r).unwrap();
            }
            state.arms()[3].pulls as f64 / 10_000.0
        })
        .collect();
    let share = mean(&shares);
    let elapsed = start.elapsed();
    outcome(
        share >= 0.8 && elapsed < Duration::from_secs(10),
        format!("best arm share {share:.3}, {elapsed:.1?}"),
    )
}

fn ac6_continue_vs_reset() -> Outcome {
    let reward = RewardParams::default();
    let (p1, p2) = LandscapeModel::generate_correlated_pair(
        Regime::Medium,
        &HyperParamSpace::three_param(),
        landscape_seed(6),
        &LandscapeOptions::default(),
    )
    .unwrap();
    let top5: Vec<usize> = p1.ranked(&reward).into_iter().take(5).collect();
    let correlated = top5.contains(&p2.ranked(&reward)[0]);
    let o1 = grid_search(&p1, &reward).unwrap();
    let o2 = grid_search(&p2, &reward).unwrap();
    let seeds = run_seeds_for(6, 10);
    let at = |mode| {
        let recalls: Vec<f64> = seeds
            .par_iter()
            .map(|&s| {
                let run = run_for(Method::HierUcb, 2400, 4, s);
                let (_, second) =
                    model_switch_run(&run, (&p1, &o1), (&p2, &o2), 1200, mode).unwrap();
                second.recall_at_budget(1800).unwrap()
            })
            .collect();
        mean(&recalls)
    };
    let (cont, reset) = (at(SwitchMode::Continue), at(SwitchMode::Reset));
    outcome(
        correlated && cont >= reset + 0.05,
        format!(
            "continue {cont:.3}, reset {reset:.3}, phase-2 optimum in phase-1 top-5: {correlated}"
        ),
    )
}

fn ac7_reward_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(MASTER_SEED, &[7]));
    let mut violations = 0;
    let r = |acc: f64, tokens: u32, p: &RewardParams| {
        compute_reward(&QueryOutcome::new(acc, tokens), p).unwrap()
    };
    for _ in 0..100_000 {
        let w = match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        };
        let t_max = rng.random_range(1..=4000u32);
        let threshold = if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        };
        let p = RewardParams::new(w, t_max)
            .unwrap()
            .with_threshold(threshold)
            .unwrap();
        let (a1, a2) = (rng.random::<f64>(), rng.random::<f64>());
        let (t1, t2) = (rng.random_range(0..=t_max), rng.random_range(0..=t_max));
        let v = r(a1, t1, &p);
        let mut ok = (-1.0..=w).contains(&v);
        ok &= r(a1.min(a2), t1, &p) <= r(a1.max(a2), t1, &p);
        ok &= r(a1, t1.min(t2), &p) >= r(a1, t1.max(t2), &p);
        if w == 1.0 {
            ok &= r(a1, t1, &p) == r(a1, t2, &p);
        }
        if w == 0.0 {
            ok &= r(a1, t1, &p) == r(a2, t1, &p);
        }
        violations += usize::from(!ok);
    }
    outcome(
        violations == 0,
        format!("100000 cases, {violations} violations"),
    )
}

/// Recompute every arm's (pulls, mean) from a trial log and compare with
/// the learner. Returns the number of mismatches.
fn replay_mismatches(space: &HyperParamSpace, learner: &Learner, path: &Path) -> usize {
    let records = read_trial_log(fs::File::open(path).unwrap()).unwrap();
    let mut configs = vec![(0u64, 0.0f64); space.cardinality()];
    let mut high: BTreeMap<usize, (u64, f64)> = BTreeMap::new();
    let mut low: BTreeMap<(usize, usize), (u64, f64)> = BTreeMap::new();
    for r in &records {
        let c = &mut configs[r.config_index];
        c.0 += 1;
        c.1 += r.reward;
        if let Some(d) = r.pulled_dimension {
            let h = high.entry(d).or_default();
            h.0 += 1;
            h.1 += r.reward;
            for (dim, &level) in space
                .config_at(r.config_index)
                .unwrap()
                .level_indices
                .iter()
                .enumerate()
            {
                let l = low.entry((dim, level)).or_default();
                l.0 += 1;
                l.1 += r.reward;
            }
        }
    }
    let off = |pulls: u64, mean: f64, (n, s): (u64, f64)| {
        pulls != n || (n > 0 && (mean - s / n as f64).abs() > 1e-9)
    };
    let mut bad = 0;
    for (c, &tally) in configs.iter().enumerate() {
        bad += usize::from(off(
            learner.config_pulls(c),
            learner.config_mean(c).unwrap_or(0.0),
            tally,
        ));
    }
    if let Learner::Hier(state) = learner {
        for (d, arm) in state.high_level().iter().enumerate() {
            bad += usize::from(off(
                arm.pulls,
                arm.mean_reward,
                high.get(&d).copied().unwrap_or_default(),
            ));
        }
        for (d, arms) in state.low_level().iter().enumerate() {
            for (l, arm) in arms.iter().enumerate() {
                bad += usize::from(off(
                    arm.pulls,
                    arm.mean_reward,
                    low.get(&(d, l)).copied().unwrap_or_default(),
                ));
            }
        }
    }
    bad
}

fn ragtune(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_ragtune"))
        .current_dir(dir)
        .args(args)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "ragtune {args:?} failed");
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for (k, v) in tree(&path) {
                out.insert(
                    format!("{}/{k}", path.file_name().unwrap().to_string_lossy()),
                    v,
                );
            }
        } else {
            out.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            );
        }
    }
    out
}

fn ac8_determinism_and_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let seed = format!("{}", derive_seed(MASTER_SEED, &[8]) >> 1);
    let runs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for run in &runs {
        ragtune(
            run.path(),
            &[
                "run",
                "--seed",
                &seed,
                "--out",
                "results",
                "--set",
                "seeds=3",
                "--set",
                "environment.regime=\"medium\"",
                "--set",
                "run.method=\"hier_ucb\"",
            ],
        );
    }
    let (a, b) = (
        tree(&runs[0].path().join("results")),
        tree(&runs[1].path().join("results")),
    );
    let identical = !a.is_empty() && a == b;

    let env = LandscapeModel::generate(
        Regime::Medium,
        &HyperParamSpace::three_param(),
        landscape_seed(8),
        &LandscapeOptions::default(),
    )
    .unwrap();
    let oracle = grid_search(&env, &RewardParams::default()).unwrap();
    let mut mismatches = 0;
    let mut rerun_differs = 0;
    for method in Method::ALL {
        let seed = run_seeds_for(8, 1)[0];
        let run = run_for(method, 2000, 4, seed);
        let (t, learner): (Trajectory, Learner) =
            run_experiment_with_learner(&run, &env, &oracle).unwrap();
        let path = dir.path().join(format!("{method}.csv"));
        write_trial_log_file(&path, &t.records).unwrap();
        let again = run_experiment(&run, &env, &oracle).unwrap();
        let path2 = dir.path().join(format!("{method}-again.csv"));
        write_trial_log_file(&path2, &again.records).unwrap();
        rerun_differs += usize::from(fs::read(&path).unwrap() != fs::read(&path2).unwrap());
        mismatches += replay_mismatches(env.space(), &learner, &path);
    }
    outcome(
        identical && rerun_differs == 0 && mismatches == 0,
        format!(
            "cli rerun identical: {identical} ({} files), {rerun_differs} differing logs, {mismatches} arm mismatches",
            a.len()
        ),
    )
}

struct Server {
    child: Child,
    base: String,
    agent: ureq::Agent,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Server {
    fn start() -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ragtune"))
            .args(["serve", "--bind", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap()
            .to_string();
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Server { child, base, agent }
    }

    fn call(&self, method: &str, path: &str, body: Option<&[u8]>) -> (u16, Vec<u8>) {
        let url = format!("{}{path}", self.base);
        let mut res = match (method, body) {
            ("GET", _) => self.agent.get(&url).call(),
            (_, Some(b)) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(b),
            (_, None) => self.agent.post(&url).send_empty(),
        }
        .unwrap();
        (res.status().as_u16(), res.body_mut().read_to_vec().unwrap())
    }

    fn json(&self, method: &str, path: &str, body: Option<Value>) -> (u16, Value) {
        let bytes = body.map(|v| serde_json::to_vec(&v).unwrap());
        let (status, out) = self.call(method, path, bytes.as_deref());
        (status, serde_json::from_slice(&out).unwrap())
    }
}

fn outcomes_for(rng: &mut ChaCha8Rng) -> Value {
    let batch: Vec<Value> = (0..4)
        .map(|_| json!({"accuracy": rng.random::<f64>(), "tokens": rng.random_range(100..1500)}))
        .collect();
    Value::Array(batch)
}

fn ac9_service_exactly_once() -> Outcome {
    let server = Server::start();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(MASTER_SEED, &[9]));
    let (status, created) = server.json(
        "POST",
        "/sessions",
        Some(json!({"method": "hier_ucb", "seed": 9})),
    );
    assert_eq!(status, 201);
    let id = created["session_id"].as_str().unwrap().to_string();

    let mut accepted = 0u64;
    let mut duplicates_refused = 0u64;
    let mut orphans: Vec<u64> = Vec::new();
    for _ in 0..400 {
        let (_, s) = server.json("POST", &format!("/sessions/{id}/suggest"), None);
        let sid = s["suggestion_id"].as_u64().unwrap();
        if rng.random_bool(0.15) {
            // the client lost this response and asks again
            orphans.push(sid);
            continue;
        }
        let target = if !orphans.is_empty() && rng.random_bool(0.2) {
            orphans.swap_remove(rng.random_range(0..orphans.len()))
        } else {
            sid
        };
        let report = json!({"suggestion_id": target, "outcomes": outcomes_for(&mut rng)});
        let sends = if rng.random_bool(0.3) {
            rng.random_range(2..=4)
        } else {
            1
        };
        for _ in 0..sends {
            let (status, _) = server.json(
                "POST",
                &format!("/sessions/{id}/report"),
                Some(report.clone()),
            );
            match status {
                200 => accepted += 1,
                409 => duplicates_refused += 1,
                other => panic!("unexpected status {other}"),
            }
        }
    }
    let (_, summary) = server.json("GET", &format!("/sessions/{id}"), None);
    let (_, ranking) = server.json("GET", &format!("/sessions/{id}/ranking?x=75"), None);
    let pulls: u64 = ranking["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["pulls"].as_u64().unwrap())
        .sum();
    let counts_agree = summary["trials"] == accepted
        && summary["accepted_reports"] == accepted
        && pulls == accepted;

    let (_, snapshot) = server.call("POST", &format!("/sessions/{id}/snapshot"), None);
    let (status, restored) = server.call("POST", "/sessions/restore", Some(&snapshot));
    assert_eq!(status, 201);
    let copy = serde_json::from_slice::<Value>(&restored).unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let mut differing = 0;
    for _ in 0..50 {
        let (_, a) = server.call("POST", &format!("/sessions/{id}/suggest"), None);
        let (_, b) = server.call("POST", &format!("/sessions/{copy}/suggest"), None);
        differing += usize::from(a != b);
        let sid = serde_json::from_slice::<Value>(&a).unwrap()["suggestion_id"].clone();
        let report =
            serde_json::to_vec(&json!({"suggestion_id": sid, "outcomes": outcomes_for(&mut rng)}))
                .unwrap();
        let (_, a) = server.call("POST", &format!("/sessions/{id}/report"), Some(&report));
        let (_, b) = server.call("POST", &format!("/sessions/{copy}/report"), Some(&report));
        differing += usize::from(a != b);
    }
    let (_, a) = server.call("GET", &format!("/sessions/{id}/ranking?x=75"), None);
    let (_, b) = server.call("GET", &format!("/sessions/{copy}/ranking?x=75"), None);
    differing += usize::from(a != b);

    outcome(
        counts_agree && duplicates_refused > 0 && differing == 0,
        format!(
            "{accepted} accepted, learner trials {}, {duplicates_refused} duplicates refused, {differing} differing responses after restore",
            summary["trials"]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 oracle exactness", ac1_oracle_exactness),
        ("AC2 easy-regime convergence", ac2_easy_convergence),
        ("AC3 medium-regime advantage", ac3_medium_advantage),
        ("AC4 hard-regime ceiling", ac4_hard_ceiling),
        ("AC5 UCB sanity", ac5_ucb_sanity),
        ("AC6 continue vs reset", ac6_continue_vs_reset),
        ("AC7 reward algebra", ac7_reward_algebra),
        ("AC8 determinism and log replay", ac8_determinism_and_replay),
        ("AC9 service exactly-once", ac9_service_exactly_once),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
