/// Discounted reward-to-go `G_t = Σ_{t' ≥ t} γ^{t'-t} r_{t'}`, restarting
/// after every `done`.
pub fn reward_to_go(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones.get(t).copied().unwrap_or(false) {
            acc = 0.0;
        }
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}
