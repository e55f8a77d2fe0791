use super::TrainError;

/// Generalized advantage estimation.
///
/// `terminal[t]` stops bootstrapping from step `t + 1`; `bootstrap` is the
/// value after the last step (ignored when the last step is terminal).
/// Within an RL² trial only the trial's last step is terminal, so advantages
/// flow across the episode boundaries inside it.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminal: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let n = rewards.len();
    if values.len() != n || terminal.len() != n {
        return Err(TrainError::Config(format!(
            "gae: {} rewards, {} values, {} terminal flags",
            n,
            values.len(),
            terminal.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let live = if terminal[t] { 0.0 } else { 1.0 };
        let next = if t + 1 == n { bootstrap } else { values[t + 1] };
        let delta = rewards[t] + gamma * next * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}
