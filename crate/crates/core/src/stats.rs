use serde::{Deserialize, Serialize};

/// Pull count and running reward statistics for one arm.
///
/// The mean is maintained with Welford's update so that `sum_sq_dev`
/// stays numerically stable over long runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub mean_reward: f64,
    pub sum_sq_dev: f64,
}

impl ArmStats {
    pub fn update(&mut self, reward: f64) {
        self.pulls += 1;
        let delta = reward - self.mean_reward;
        self.mean_reward += delta / self.pulls as f64;
        self.sum_sq_dev += delta * (reward - self.mean_reward);
    }

    /// Sample variance of the observed rewards, `None` below two pulls.
    pub fn variance(&self) -> Option<f64> {
        (self.pulls >= 2).then(|| self.sum_sq_dev / (self.pulls - 1) as f64)
    }

    pub fn is_pulled(&self) -> bool {
        self.pulls > 0
    }
}
