/// Optimizer and KL-annealing schedule, in epochs and batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub batches_per_epoch: usize,
    /// Exponent of the post-warmup decay, `lr ~ step^-exponent`.
    pub decay_exponent: f64,
    pub kl_zero_epochs: usize,
    pub kl_ramp_epochs: usize,
    pub kl_max: f64,
    pub total_epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            peak_lr: 0.005,
            warmup_epochs: 8,
            batches_per_epoch: 1,
            decay_exponent: 0.5,
            kl_zero_epochs: 5,
            kl_ramp_epochs: 20,
            kl_max: 0.001,
            total_epochs: 100,
            batch_size: 32,
        }
    }
}

impl TrainSchedule {
    pub fn warmup_steps(&self) -> usize {
        (self.warmup_epochs * self.batches_per_epoch).max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.peak_lr > 0.0) || !(self.kl_max >= 0.0) || !(self.decay_exponent >= 0.0) {
            return Err("peak_lr must be > 0, kl_max and decay_exponent >= 0".into());
        }
        if self.batches_per_epoch == 0 || self.total_epochs == 0 || self.batch_size == 0 {
            return Err("batches_per_epoch, total_epochs and batch_size must be positive".into());
        }
        Ok(())
    }
}

/// Learning rate for the `step`-th update (1-based batch counter; step 0
/// gives 0). Linear warmup to `peak_lr`, then `peak_lr * (warm / step)^exponent`.
pub fn lr_at(step: usize, schedule: &TrainSchedule) -> f64 {
    let warm = schedule.warmup_steps() as f64;
    let s = step as f64;
    if s <= warm {
        schedule.peak_lr * s / warm
    } else {
        schedule.peak_lr * (warm / s).powf(schedule.decay_exponent)
    }
}

/// KL weight for a 0-based epoch: zero for `kl_zero_epochs`, then a linear
/// ramp reaching `kl_max` after `kl_ramp_epochs` more.
pub fn kl_weight_at(epoch: usize, schedule: &TrainSchedule) -> f64 {
    if epoch < schedule.kl_zero_epochs {
        return 0.0;
    }
    if schedule.kl_ramp_epochs == 0 {
        return schedule.kl_max;
    }
    let progress = (epoch - schedule.kl_zero_epochs) as f64 / schedule.kl_ramp_epochs as f64;
    schedule.kl_max * progress.min(1.0)
}
