//! Soft actor-critic with twin critics, target critics and a learned
//! entropy temperature. The continuous variant uses a tanh-squashed
//! Gaussian policy over `[-1, 1]^d`; the discrete variant a categorical
//! policy with critics that output one value per action.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::adam::Adam;
use super::mlp::{Cache, Mlp};
use super::replay::Batch;
use super::LearnerError;

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Continuous { action_dim: usize },
    Discrete { actions: usize },
}

impl PolicyKind {
    /// Width of one action as stored in a replay buffer.
    pub fn stored_action_dim(&self) -> usize {
        match self {
            PolicyKind::Continuous { action_dim } => *action_dim,
            PolicyKind::Discrete { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub initial_alpha: f64,
    pub learn_alpha: bool,
    /// Defaults to `-action_dim` (continuous) or `0.6 ln(actions)`
    /// (discrete).
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 128,
            initial_alpha: 1.0,
            learn_alpha: true,
            target_entropy: None,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |what: &str| Err(LearnerError::InvalidConfig(what.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("alpha_lr", self.alpha_lr)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.initial_alpha > 0.0) || !self.initial_alpha.is_finite() {
            return bad("initial_alpha must be positive");
        }
        Ok(())
    }
}

/// Losses and temperature after one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// Mean policy log-probability on the batch (negative entropy).
    pub mean_log_prob: f64,
}

/// Standard normal draws used by one continuous update; fixed noise makes
/// every loss a deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateNoise {
    pub next: Vec<f64>,
    pub current: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Sac {
    kind: PolicyKind,
    obs_dim: usize,
    config: SacConfig,
    target_entropy: f64,
    pub(crate) actor: Mlp,
    pub(crate) q1: Mlp,
    pub(crate) q2: Mlp,
    pub(crate) q1_target: Mlp,
    pub(crate) q2_target: Mlp,
    pub(crate) log_alpha: f64,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    alpha_opt: Adam,
    updates: u64,
}

struct ContinuousSample {
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    std: Vec<f64>,
    tanh_raw: Vec<f64>,
    cache: Cache,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn log_softmax_rows(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|z| z - lse));
    }
    out
}

fn concat_rows(a: &[f64], a_width: usize, b: &[f64], b_width: usize) -> Vec<f64> {
    let rows = a.len() / a_width;
    let mut out = Vec::with_capacity(rows * (a_width + b_width));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_width..(r + 1) * a_width]);
        out.extend_from_slice(&b[r * b_width..(r + 1) * b_width]);
    }
    out
}

fn check_finite(what: &'static str, value: f64) -> Result<f64, LearnerError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LearnerError::NonFinite { what, detail: format!("value {value}") })
    }
}

impl Sac {
    pub fn new(kind: PolicyKind, obs_dim: usize, config: SacConfig, rng: &mut dyn RngCore) -> Result<Self, LearnerError> {
        config.validate()?;
        if obs_dim == 0 {
            return Err(LearnerError::InvalidConfig("observation dimension must be positive".into()));
        }
        let (actor_out, critic_in, critic_out, default_entropy) = match kind {
            PolicyKind::Continuous { action_dim } if action_dim > 0 => {
                (2 * action_dim, obs_dim + action_dim, 1, -(action_dim as f64))
            }
            PolicyKind::Discrete { actions } if actions >= 2 => (actions, obs_dim, actions, 0.6 * (actions as f64).ln()),
            _ => return Err(LearnerError::InvalidConfig("policy needs at least one action dimension or two actions".into())),
        };
        let sizes = |input: usize, output: usize| -> Vec<usize> {
            let mut s = vec![input];
            s.extend_from_slice(&config.hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(obs_dim, actor_out), rng);
        let q1 = Mlp::new(&sizes(critic_in, critic_out), rng);
        let q2 = Mlp::new(&sizes(critic_in, critic_out), rng);
        Ok(Self {
            kind,
            obs_dim,
            target_entropy: config.target_entropy.unwrap_or(default_entropy),
            actor_opt: Adam::new(actor.num_params(), config.actor_lr),
            q1_opt: Adam::new(q1.num_params(), config.critic_lr),
            q2_opt: Adam::new(q2.num_params(), config.critic_lr),
            alpha_opt: Adam::new(1, config.alpha_lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            log_alpha: config.initial_alpha.ln(),
            config,
            updates: 0,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.q1, &self.q2)
    }

    pub fn target_critics(&self) -> (&Mlp, &Mlp) {
        (&self.q1_target, &self.q2_target)
    }

    /// Choose an action for one observation, in replay-buffer form: the
    /// unit-range vector (continuous) or `[index]` (discrete).
    pub fn act(&self, obs: &[f64], mode: ActMode, rng: &mut dyn RngCore) -> Result<Vec<f64>, LearnerError> {
        if obs.len() != self.obs_dim {
            return Err(LearnerError::Dimension { expected: self.obs_dim, got: obs.len() });
        }
        let out = self.actor.predict(obs, 1);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite { what: "actor output", detail: format!("{out:?} for observation {obs:?}") });
        }
        Ok(match self.kind {
            PolicyKind::Continuous { action_dim } => (0..action_dim)
                .map(|k| {
                    let mean = out[k];
                    match mode {
                        ActMode::Deterministic => mean.tanh(),
                        ActMode::Stochastic => {
                            let log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (out[action_dim + k].tanh() + 1.0);
                            let eps: f64 = rng.sample(StandardNormal);
                            (mean + log_std.exp() * eps).tanh()
                        }
                    }
                })
                .collect(),
            PolicyKind::Discrete { actions } => {
                let index = match mode {
                    ActMode::Deterministic => {
                        let mut best = 0;
                        for k in 1..actions {
                            if out[k] > out[best] {
                                best = k;
                            }
                        }
                        best
                    }
                    ActMode::Stochastic => {
                        let logp = log_softmax_rows(&out, actions);
                        let mut u: f64 = rng.random();
                        let mut chosen = actions - 1;
                        for (k, lp) in logp.iter().enumerate() {
                            u -= lp.exp();
                            if u < 0.0 {
                                chosen = k;
                                break;
                            }
                        }
                        chosen
                    }
                };
                vec![index as f64]
            }
        })
    }

    /// Action probabilities of the discrete policy for one observation.
    pub fn action_probabilities(&self, obs: &[f64]) -> Option<Vec<f64>> {
        match self.kind {
            PolicyKind::Discrete { actions } => {
                let out = self.actor.predict(obs, 1);
                Some(log_softmax_rows(&out, actions).iter().map(|l| l.exp()).collect())
            }
            PolicyKind::Continuous { .. } => None,
        }
    }

    pub fn draw_noise(&self, batch: usize, rng: &mut dyn RngCore) -> UpdateNoise {
        match self.kind {
            PolicyKind::Continuous { action_dim } => {
                let n = batch * action_dim;
                UpdateNoise {
                    next: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
                    current: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
                }
            }
            PolicyKind::Discrete { .. } => UpdateNoise { next: Vec::new(), current: Vec::new() },
        }
    }

    fn sample_continuous(&self, obs: &[f64], batch: usize, eps: &[f64]) -> ContinuousSample {
        let d = self.kind.stored_action_dim();
        let (out, cache) = self.actor.forward(obs, batch);
        let mut actions = Vec::with_capacity(batch * d);
        let mut log_probs = Vec::with_capacity(batch);
        let mut std = Vec::with_capacity(batch * d);
        let mut tanh_raw = Vec::with_capacity(batch * d);
        for b in 0..batch {
            let row = &out[b * 2 * d..(b + 1) * 2 * d];
            let mut lp = 0.0;
            for k in 0..d {
                let t = row[d + k].tanh();
                let log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0);
                let s = log_std.exp();
                let e = eps[b * d + k];
                let u = row[k] + s * e;
                lp += -0.5 * e * e - log_std - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(u);
                actions.push(u.tanh());
                std.push(s);
                tanh_raw.push(t);
            }
            log_probs.push(lp);
        }
        ContinuousSample { actions, log_probs, std, tanh_raw, cache }
    }

    fn critic_values(net: &Mlp, obs: &[f64], actions: &[f64], batch: usize, kind: PolicyKind, obs_dim: usize) -> (Vec<f64>, Cache) {
        match kind {
            PolicyKind::Continuous { action_dim } => net.forward(&concat_rows(obs, obs_dim, actions, action_dim), batch),
            PolicyKind::Discrete { .. } => net.forward(obs, batch),
        }
    }

    /// Soft Bellman targets `r + γ (1 - terminal) V(s')`.
    pub fn critic_targets(&self, batch: &Batch, noise: &UpdateNoise) -> Vec<f64> {
        let n = batch.len();
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        let next_values: Vec<f64> = match self.kind {
            PolicyKind::Continuous { .. } => {
                let sample = self.sample_continuous(&batch.next_obs, n, &noise.next);
                let (t1, _) = Self::critic_values(&self.q1_target, &batch.next_obs, &sample.actions, n, self.kind, self.obs_dim);
                let (t2, _) = Self::critic_values(&self.q2_target, &batch.next_obs, &sample.actions, n, self.kind, self.obs_dim);
                (0..n).map(|b| t1[b].min(t2[b]) - alpha * sample.log_probs[b]).collect()
            }
            PolicyKind::Discrete { actions } => {
                let logits = self.actor.predict(&batch.next_obs, n);
                let logp = log_softmax_rows(&logits, actions);
                let t1 = self.q1_target.predict(&batch.next_obs, n);
                let t2 = self.q2_target.predict(&batch.next_obs, n);
                (0..n)
                    .map(|b| {
                        (0..actions)
                            .map(|k| {
                                let i = b * actions + k;
                                logp[i].exp() * (t1[i].min(t2[i]) - alpha * logp[i])
                            })
                            .sum()
                    })
                    .collect()
            }
        };
        (0..n)
            .map(|b| batch.rewards[b] + if batch.terminals[b] { 0.0 } else { gamma * next_values[b] })
            .collect()
    }

    /// `0.5 * (mean (Q1 - y)^2 + mean (Q2 - y)^2)` and its gradients with
    /// respect to both critics, for fixed targets `y`.
    pub fn critic_loss(&self, batch: &Batch, targets: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = batch.len();
        let inv = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(2);
        for net in [&self.q1, &self.q2] {
            let (q, cache) = Self::critic_values(net, &batch.obs, &batch.actions, n, self.kind, self.obs_dim);
            let width = net.output_dim();
            let mut dq = vec![0.0; q.len()];
            for b in 0..n {
                let column = match self.kind {
                    PolicyKind::Continuous { .. } => 0,
                    PolicyKind::Discrete { .. } => batch.actions[b] as usize,
                };
                let err = q[b * width + column] - targets[b];
                loss += 0.5 * inv * err * err;
                dq[b * width + column] = inv * err;
            }
            let mut grad = vec![0.0; net.num_params()];
            net.backward(&cache, &dq, &mut grad);
            grads.push(grad);
        }
        let g2 = grads.pop().unwrap();
        let g1 = grads.pop().unwrap();
        (loss, g1, g2)
    }

    /// Policy loss `mean(α log π - min Q)` (expected over actions for the
    /// discrete variant), its actor gradient, and the mean log-probability.
    pub fn actor_loss(&self, obs: &[f64], noise: &UpdateNoise) -> (f64, Vec<f64>, f64) {
        let n = obs.len() / self.obs_dim;
        let inv = 1.0 / n as f64;
        let alpha = self.alpha();
        let mut grad = vec![0.0; self.actor.num_params()];
        match self.kind {
            PolicyKind::Continuous { action_dim: d } => {
                let s = self.sample_continuous(obs, n, &noise.current);
                let (q1, c1) = Self::critic_values(&self.q1, obs, &s.actions, n, self.kind, self.obs_dim);
                let (q2, c2) = Self::critic_values(&self.q2, obs, &s.actions, n, self.kind, self.obs_dim);
                let mut loss = 0.0;
                let mut dq1 = vec![0.0; n];
                let mut dq2 = vec![0.0; n];
                for b in 0..n {
                    let q = if q1[b] <= q2[b] {
                        dq1[b] = -inv;
                        q1[b]
                    } else {
                        dq2[b] = -inv;
                        q2[b]
                    };
                    loss += inv * (alpha * s.log_probs[b] - q);
                }
                // Only the action part of the critic input gradient is used.
                let mut scratch = vec![0.0; self.q1.num_params()];
                let dx1 = self.q1.backward(&c1, &dq1, &mut scratch);
                let dx2 = self.q2.backward(&c2, &dq2, &mut scratch);
                let width = self.obs_dim + d;
                let mut dout = vec![0.0; n * 2 * d];
                for b in 0..n {
                    for k in 0..d {
                        let i = b * d + k;
                        let a = s.actions[i];
                        let dq_da = dx1[b * width + self.obs_dim + k] + dx2[b * width + self.obs_dim + k];
                        let du = inv * alpha * 2.0 * a + dq_da * (1.0 - a * a);
                        let eps = noise.current[i];
                        let dlog_std = -inv * alpha + du * s.std[i] * eps;
                        let t = s.tanh_raw[i];
                        dout[b * 2 * d + k] = du;
                        dout[b * 2 * d + d + k] = dlog_std * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t);
                    }
                }
                self.actor.backward(&s.cache, &dout, &mut grad);
                let mean_logp = s.log_probs.iter().sum::<f64>() * inv;
                (loss, grad, mean_logp)
            }
            PolicyKind::Discrete { actions } => {
                let (logits, cache) = self.actor.forward(obs, n);
                let logp = log_softmax_rows(&logits, actions);
                let q1 = self.q1.predict(obs, n);
                let q2 = self.q2.predict(obs, n);
                let mut loss = 0.0;
                let mut mean_logp = 0.0;
                let mut dz = vec![0.0; n * actions];
                for b in 0..n {
                    let row = b * actions..(b + 1) * actions;
                    let c: Vec<f64> = row.clone().map(|i| alpha * logp[i] - q1[i].min(q2[i])).collect();
                    let probs: Vec<f64> = row.clone().map(|i| logp[i].exp()).collect();
                    let lb: f64 = probs.iter().zip(&c).map(|(p, ci)| p * ci).sum();
                    loss += inv * lb;
                    mean_logp += inv * row.clone().map(|i| logp[i].exp() * logp[i]).sum::<f64>();
                    for k in 0..actions {
                        dz[b * actions + k] = inv * probs[k] * (c[k] - lb);
                    }
                }
                self.actor.backward(&cache, &dz, &mut grad);
                (loss, grad, mean_logp)
            }
        }
    }

    /// Temperature loss `-log α (mean log π + target entropy)` and its
    /// derivative with respect to `log α`.
    pub fn alpha_loss(&self, mean_log_prob: f64) -> (f64, f64) {
        let g = -(mean_log_prob + self.target_entropy);
        (self.log_alpha * g, g)
    }

    /// One gradient step on both critics, the actor and the temperature,
    /// followed by the target soft update.
    pub fn update(&mut self, batch: &Batch, rng: &mut dyn RngCore) -> Result<UpdateStats, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        let noise = self.draw_noise(batch.len(), rng);
        self.update_with_noise(batch, &noise)
    }

    pub fn update_with_noise(&mut self, batch: &Batch, noise: &UpdateNoise) -> Result<UpdateStats, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        let targets = self.critic_targets(batch, noise);
        let (critic_loss, g1, g2) = self.critic_loss(batch, &targets);
        check_finite("critic loss", critic_loss).map_err(|e| self.dump(e, batch))?;
        self.q1_opt.step(self.q1.params_mut(), &g1);
        self.q2_opt.step(self.q2.params_mut(), &g2);

        let (actor_loss, ga, mean_log_prob) = self.actor_loss(&batch.obs, noise);
        check_finite("actor loss", actor_loss).map_err(|e| self.dump(e, batch))?;
        self.actor_opt.step(self.actor.params_mut(), &ga);

        let (alpha_loss, g_alpha) = self.alpha_loss(mean_log_prob);
        if self.config.learn_alpha {
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[g_alpha]);
            self.log_alpha = la[0];
        }

        let tau = self.config.tau;
        self.q1_target.soft_update_from(&self.q1, tau);
        self.q2_target.soft_update_from(&self.q2, tau);
        self.updates += 1;
        Ok(UpdateStats { critic_loss, actor_loss, alpha_loss, alpha: self.alpha(), mean_log_prob })
    }

    fn dump(&self, error: LearnerError, batch: &Batch) -> LearnerError {
        match error {
            LearnerError::NonFinite { what, detail } => {
                let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
                LearnerError::NonFinite {
                    what,
                    detail: format!(
                        "{detail}; update {}, alpha {}, finite obs {}, finite rewards {}, finite actor {}, finite critics {}",
                        self.updates,
                        self.alpha(),
                        finite(&batch.obs),
                        finite(&batch.rewards),
                        finite(self.actor.params()),
                        finite(self.q1.params()) && finite(self.q2.params()),
                    ),
                }
            }
            other => other,
        }
    }

    pub(crate) fn from_parts(
        kind: PolicyKind,
        obs_dim: usize,
        config: SacConfig,
        nets: [Mlp; 5],
        log_alpha: f64,
    ) -> Result<Self, LearnerError> {
        config.validate()?;
        let [actor, q1, q2, q1_target, q2_target] = nets;
        let default_entropy = match kind {
            PolicyKind::Continuous { action_dim } => -(action_dim as f64),
            PolicyKind::Discrete { actions } => 0.6 * (actions as f64).ln(),
        };
        Ok(Self {
            kind,
            obs_dim,
            target_entropy: config.target_entropy.unwrap_or(default_entropy),
            actor_opt: Adam::new(actor.num_params(), config.actor_lr),
            q1_opt: Adam::new(q1.num_params(), config.critic_lr),
            q2_opt: Adam::new(q2.num_params(), config.critic_lr),
            alpha_opt: Adam::new(1, config.alpha_lr),
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            config,
            updates: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(kind: PolicyKind, obs_dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Batch {
        let obs = (0..n * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let next_obs = (0..n * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actions = match kind {
            PolicyKind::Continuous { action_dim } => (0..n * action_dim).map(|_| rng.random_range(-0.95..0.95)).collect(),
            PolicyKind::Discrete { actions } => (0..n).map(|_| rng.random_range(0..actions) as f64).collect(),
        };
        Batch {
            obs,
            actions,
            rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            next_obs,
            terminals: (0..n).map(|_| rng.random_bool(0.2)).collect(),
        }
    }

    fn small_config() -> SacConfig {
        SacConfig { hidden: vec![8, 8], initial_alpha: 0.3, ..Default::default() }
    }

    fn assert_close(fd: f64, analytic: f64, what: &str) {
        let scale = fd.abs().max(analytic.abs());
        assert!((fd - analytic).abs() <= 1e-4 * scale + 1e-9, "{what}: finite difference {fd} vs analytic {analytic}");
    }

    fn critic_mut(s: &mut Sac, which: usize) -> &mut Mlp {
        if which == 1 {
            &mut s.q1
        } else {
            &mut s.q2
        }
    }

    fn check_gradients(kind: PolicyKind) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let obs_dim = 3;
        let mut sac = Sac::new(kind, obs_dim, small_config(), &mut rng).unwrap();
        let batch = random_batch(kind, obs_dim, 16, &mut rng);
        let noise = sac.draw_noise(16, &mut rng);
        let targets = sac.critic_targets(&batch, &noise);
        let h = 1e-6;

        let (_, g1, g2) = sac.critic_loss(&batch, &targets);
        for (which, grad) in [(1, g1), (2, g2)] {
            for _ in 0..20 {
                let i = rng.random_range(0..grad.len());
                let orig = critic_mut(&mut sac, which).params()[i];
                critic_mut(&mut sac, which).params_mut()[i] = orig + h;
                let up = sac.critic_loss(&batch, &targets).0;
                critic_mut(&mut sac, which).params_mut()[i] = orig - h;
                let down = sac.critic_loss(&batch, &targets).0;
                critic_mut(&mut sac, which).params_mut()[i] = orig;
                assert_close((up - down) / (2.0 * h), grad[i], "critic");
            }
        }

        let (_, ga, mean_logp) = sac.actor_loss(&batch.obs, &noise);
        for _ in 0..20 {
            let i = rng.random_range(0..ga.len());
            let orig = sac.actor.params()[i];
            sac.actor.params_mut()[i] = orig + h;
            let up = sac.actor_loss(&batch.obs, &noise).0;
            sac.actor.params_mut()[i] = orig - h;
            let down = sac.actor_loss(&batch.obs, &noise).0;
            sac.actor.params_mut()[i] = orig;
            assert_close((up - down) / (2.0 * h), ga[i], "actor");
        }

        let (_, g_alpha) = sac.alpha_loss(mean_logp);
        let orig = sac.log_alpha;
        sac.log_alpha = orig + h;
        let up = sac.alpha_loss(mean_logp).0;
        sac.log_alpha = orig - h;
        let down = sac.alpha_loss(mean_logp).0;
        assert_close((up - down) / (2.0 * h), g_alpha, "alpha");
    }

    #[test]
    fn continuous_gradients_match_finite_differences() {
        check_gradients(PolicyKind::Continuous { action_dim: 2 });
    }

    #[test]
    fn discrete_gradients_match_finite_differences() {
        check_gradients(PolicyKind::Discrete { actions: 3 });
    }

    #[test]
    fn terminal_targets_are_the_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [PolicyKind::Continuous { action_dim: 1 }, PolicyKind::Discrete { actions: 2 }] {
            let sac = Sac::new(kind, 2, small_config(), &mut rng).unwrap();
            let mut batch = random_batch(kind, 2, 8, &mut rng);
            batch.terminals = vec![true; 8];
            let noise = sac.draw_noise(8, &mut rng);
            assert_eq!(sac.critic_targets(&batch, &noise), batch.rewards);
        }
    }

    #[test]
    fn target_critics_track_by_exact_soft_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kind = PolicyKind::Continuous { action_dim: 1 };
        let mut sac = Sac::new(kind, 2, small_config(), &mut rng).unwrap();
        let batch = random_batch(kind, 2, 8, &mut rng);
        let old = sac.q1_target.params().to_vec();
        sac.update(&batch, &mut rng).unwrap();
        let tau = sac.config.tau;
        for ((t, c), o) in sac.q1_target.params().iter().zip(sac.q1.params()).zip(&old) {
            assert_eq!(*t, tau * c + (1.0 - tau) * o);
        }
    }

    #[test]
    fn continuous_actions_are_bounded_and_deterministic_mode_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sac = Sac::new(PolicyKind::Continuous { action_dim: 2 }, 3, small_config(), &mut rng).unwrap();
        // Push the mean far outside the squashing range.
        for p in sac.actor.params_mut() {
            *p *= 50.0;
        }
        for _ in 0..200 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = sac.act(&obs, ActMode::Stochastic, &mut rng).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
            let d1 = sac.act(&obs, ActMode::Deterministic, &mut rng).unwrap();
            let d2 = sac.act(&obs, ActMode::Deterministic, &mut rng).unwrap();
            assert_eq!(d1, d2);
        }
    }

    #[test]
    fn fresh_discrete_policy_samples_near_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sac = Sac::new(PolicyKind::Discrete { actions: 2 }, 2, small_config(), &mut rng).unwrap();
        // Zero the output layer so the policy is exactly uniform.
        let n = sac.actor.num_params();
        let last = 8 * 2 + 2;
        for p in &mut sac.actor.params_mut()[n - last..] {
            *p = 0.0;
        }
        let samples = 10_000;
        let ones: usize = (0..samples)
            .map(|_| sac.act(&[0.3, -0.2], ActMode::Stochastic, &mut rng).unwrap()[0] as usize)
            .sum();
        let sigma = (samples as f64 * 0.25).sqrt();
        assert!((ones as f64 - samples as f64 / 2.0).abs() <= 3.0 * sigma, "{ones}");
    }

    #[test]
    fn discrete_critics_reach_soft_optimal_values() {
        // Two states, two actions: action 1 in state 0 pays 1 and moves to
        // state 1; everything else pays 0 and moves to state 0.
        let (gamma, alpha) = (0.9, 0.2);
        let next = |s: usize, a: usize| if s == 0 && a == 1 { 1 } else { 0 };
        let reward = |s: usize, a: usize| if s == 0 && a == 1 { 1.0 } else { 0.0 };
        let mut q = [[0.0f64; 2]; 2];
        for _ in 0..2000 {
            let v: Vec<f64> = (0..2).map(|s| alpha * (q[s].iter().map(|x| (x / alpha).exp()).sum::<f64>()).ln()).collect();
            for s in 0..2 {
                for a in 0..2 {
                    q[s][a] = reward(s, a) + gamma * v[next(s, a)];
                }
            }
        }

        let mut batch = Batch::default();
        for s in 0..2 {
            for a in 0..2 {
                let one_hot = |i: usize| if i == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
                batch.obs.extend_from_slice(&one_hot(s));
                batch.actions.push(a as f64);
                batch.rewards.push(reward(s, a));
                batch.next_obs.extend_from_slice(&one_hot(next(s, a)));
                batch.terminals.push(false);
            }
        }
        let config = SacConfig {
            hidden: vec![16, 16],
            actor_lr: 3e-3,
            critic_lr: 3e-3,
            gamma,
            tau: 0.05,
            initial_alpha: alpha,
            learn_alpha: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sac = Sac::new(PolicyKind::Discrete { actions: 2 }, 2, config, &mut rng).unwrap();
        for _ in 0..6000 {
            sac.update(&batch, &mut rng).unwrap();
        }
        let values = sac.q1.predict(&[1.0, 0.0, 0.0, 1.0], 2);
        for s in 0..2 {
            for a in 0..2 {
                let got = values[s * 2 + a];
                assert!((got - q[s][a]).abs() <= 0.05, "Q({s},{a}) = {got}, want {}", q[s][a]);
            }
        }
    }
}
