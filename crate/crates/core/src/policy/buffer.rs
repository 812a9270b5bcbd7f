use super::PolicyError;

/// Transitions from `num_envs` parallel streams of `length` steps each,
/// stored stream-major: index `env * length + t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub length: usize,
    /// Normalized observations the actions were chosen from.
    pub observations: Vec<Vec<f64>>,
    /// Pre-squash Gaussian samples.
    pub actions: Vec<Vec<f64>>,
    /// Gaussian log densities of `actions` at collection time.
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The episode ended with this transition.
    pub dones: Vec<bool>,
    /// Value of the observation following each stream's last step.
    pub bootstrap: Vec<f64>,
    pub advantages: Option<Vec<f64>>,
    pub returns: Option<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        let n = self.num_envs * self.length;
        let cols = [
            ("observations", self.observations.len()),
            ("actions", self.actions.len()),
            ("log_probs", self.log_probs.len()),
            ("rewards", self.rewards.len()),
            ("values", self.values.len()),
            ("dones", self.dones.len()),
        ];
        for (name, len) in cols {
            if len != n {
                return Err(PolicyError::Incomplete(format!("{name} has {len} rows, expected {n}")));
            }
        }
        if self.bootstrap.len() != self.num_envs {
            return Err(PolicyError::Incomplete(format!(
                "{} bootstrap values for {} streams",
                self.bootstrap.len(),
                self.num_envs
            )));
        }
        Ok(())
    }
}

/// Generalized advantage estimation:
/// `A_t = delta_t + discount * lambda * (1 - done_t) * A_{t+1}` with
/// `delta_t = r_t + discount * (1 - done_t) * V_{t+1} - V_t`.
pub fn compute_advantages(buffer: &mut RolloutBuffer, discount: f64, lambda: f64) -> Result<(), PolicyError> {
    buffer.check()?;
    let n = buffer.len();
    let mut adv = vec![0.0; n];
    for e in 0..buffer.num_envs {
        let base = e * buffer.length;
        let mut next_value = buffer.bootstrap[e];
        let mut next_adv = 0.0;
        for t in (0..buffer.length).rev() {
            let i = base + t;
            let live = if buffer.dones[i] { 0.0 } else { 1.0 };
            let delta = buffer.rewards[i] + discount * live * next_value - buffer.values[i];
            next_adv = delta + discount * lambda * live * next_adv;
            adv[i] = next_adv;
            next_value = buffer.values[i];
        }
    }
    buffer.returns = Some(adv.iter().zip(&buffer.values).map(|(a, v)| a + v).collect());
    buffer.advantages = Some(adv);
    Ok(())
}
