/// `0.5·lr0·(1 + cos(π·step/total_steps))`.
pub fn cosine_lr(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Epoch plan: `C − 1` condensing stages of equal length filling the first
/// half of training, then the optimization stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub total_epochs: usize,
    pub lr0: f64,
    pub condense_factor: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule { total_epochs: 180, lr0: 1e-4, condense_factor: 4 }
    }
}

impl TrainSchedule {
    pub fn new(total_epochs: usize, lr0: f64, condense_factor: usize) -> Self {
        TrainSchedule { total_epochs, lr0, condense_factor }
    }

    pub fn condensing_stages(&self) -> usize {
        self.condense_factor.saturating_sub(1)
    }

    /// Epochs per condensing stage.
    pub fn stage_epochs(&self) -> usize {
        match self.condensing_stages() {
            0 => 0,
            s => self.total_epochs / 2 / s,
        }
    }

    /// 1-indexed epochs at whose end a condensing step runs.
    pub fn condense_epochs(&self) -> Vec<usize> {
        let len = self.stage_epochs();
        if len == 0 {
            return Vec::new();
        }
        (1..=self.condensing_stages()).map(|s| s * len).collect()
    }

    /// Whether 1-indexed `epoch` belongs to a condensing stage.
    pub fn is_condensing(&self, epoch: usize) -> bool {
        epoch <= self.condensing_stages() * self.stage_epochs()
    }
}
