//! Plain-text checkpoints for a [`Sac`] learner. Floats are written in
//! shortest round-trip exponent form, so loading reproduces every
//! parameter bit for bit. Optimizer moments are not stored.

use std::fmt::Write as _;

use super::mlp::Mlp;
use super::sac::{PolicyKind, Sac, SacConfig};
use super::LearnerError;

const HEADER: &str = "sac-checkpoint v1";
const NETS: [&str; 5] = ["actor", "q1", "q2", "q1_target", "q2_target"];

fn err(line: usize, message: impl Into<String>) -> LearnerError {
    LearnerError::Checkpoint { line, message: message.into() }
}

impl Sac {
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        match self.kind() {
            PolicyKind::Continuous { action_dim } => writeln!(out, "kind continuous {action_dim}").unwrap(),
            PolicyKind::Discrete { actions } => writeln!(out, "kind discrete {actions}").unwrap(),
        }
        writeln!(out, "obs_dim {}", self.obs_dim()).unwrap();
        writeln!(out, "log_alpha {:e}", self.log_alpha).unwrap();
        for (name, net) in NETS.iter().zip([&self.actor, &self.q1, &self.q2, &self.q1_target, &self.q2_target]) {
            let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
            writeln!(out, "net {name} {}", sizes.join(" ")).unwrap();
            let params: Vec<String> = net.params().iter().map(|p| format!("{p:e}")).collect();
            writeln!(out, "{}", params.join(" ")).unwrap();
        }
        out
    }

    /// Restore a learner; `config` supplies the training hyperparameters,
    /// the network shapes come from the checkpoint.
    pub fn from_checkpoint(text: &str, mut config: SacConfig) -> Result<Self, LearnerError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of input, expected {what}")));

        let (n, header) = next("header")?;
        if header != HEADER {
            return Err(err(n, format!("expected '{HEADER}'")));
        }
        let (n, line) = next("kind")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let count = |s: &str| s.parse::<usize>().map_err(|_| err(n, format!("bad count '{s}'")));
        let kind = match fields.as_slice() {
            ["kind", "continuous", d] => PolicyKind::Continuous { action_dim: count(d)? },
            ["kind", "discrete", k] => PolicyKind::Discrete { actions: count(k)? },
            _ => return Err(err(n, "expected 'kind continuous|discrete N'")),
        };
        let (n, line) = next("obs_dim")?;
        let obs_dim = line
            .strip_prefix("obs_dim ")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| err(n, "expected 'obs_dim N'"))?;
        let (n, line) = next("log_alpha")?;
        let log_alpha = line
            .strip_prefix("log_alpha ")
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| err(n, "expected 'log_alpha X'"))?;

        let mut nets = Vec::with_capacity(NETS.len());
        for name in NETS {
            let (n, line) = next(name)?;
            let mut fields = line.split_whitespace();
            if fields.next() != Some("net") || fields.next() != Some(name) {
                return Err(err(n, format!("expected 'net {name} ...'")));
            }
            let sizes = fields
                .map(|s| s.parse::<usize>().map_err(|_| err(n, format!("bad layer size '{s}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            let (m, line) = next("parameters")?;
            let params = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| err(m, format!("bad number '{s}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            let net = Mlp::from_params(&sizes, params).ok_or_else(|| err(m, format!("parameter count does not match shape of {name}")))?;
            nets.push(net);
        }
        let nets: [Mlp; 5] = nets.try_into().expect("five networks");
        let (actor_out, critic_in, critic_out) = match kind {
            PolicyKind::Continuous { action_dim } => (2 * action_dim, obs_dim + action_dim, 1),
            PolicyKind::Discrete { actions } => (actions, obs_dim, actions),
        };
        if nets[0].input_dim() != obs_dim || nets[0].output_dim() != actor_out {
            return Err(err(0, "actor shape does not match kind and obs_dim"));
        }
        for net in &nets[1..] {
            if net.input_dim() != critic_in || net.output_dim() != critic_out || net.sizes() != nets[1].sizes() {
                return Err(err(0, "critic shapes are inconsistent"));
            }
        }
        let sizes = nets[0].sizes();
        config.hidden = sizes[1..sizes.len() - 1].to_vec();
        Sac::from_parts(kind, obs_dim, config, nets, log_alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_learner::ActMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_reproduces_parameters_and_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [PolicyKind::Continuous { action_dim: 2 }, PolicyKind::Discrete { actions: 3 }] {
            let config = SacConfig { hidden: vec![5, 4], initial_alpha: 0.37, ..Default::default() };
            let sac = Sac::new(kind, 3, config.clone(), &mut rng).unwrap();
            let text = sac.to_checkpoint();
            let back = Sac::from_checkpoint(&text, SacConfig::default()).unwrap();
            assert_eq!(back.actor().params(), sac.actor().params());
            assert_eq!(back.critics().0.params(), sac.critics().0.params());
            assert_eq!(back.target_critics().1.params(), sac.target_critics().1.params());
            assert_eq!(back.alpha(), sac.alpha());
            assert_eq!(back.config().hidden, vec![5, 4]);
            let obs = [0.1, -0.4, 2.0];
            assert_eq!(
                back.act(&obs, ActMode::Deterministic, &mut rng).unwrap(),
                sac.act(&obs, ActMode::Deterministic, &mut rng).unwrap()
            );
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sac = Sac::new(PolicyKind::Discrete { actions: 2 }, 2, SacConfig::default(), &mut rng).unwrap();
        let text = sac.to_checkpoint();
        let cut: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(matches!(Sac::from_checkpoint(&cut, SacConfig::default()), Err(LearnerError::Checkpoint { .. })));
    }
}
