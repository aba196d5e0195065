//! Network definition and the forward/replay drivers.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::{
    multi_head_attention, FcParams, Graph, GruParams, MhaParams, NodeId, ParamStore, Tensor,
};
use crate::numeric::snap_q40;
use crate::policy::config::{ChannelKind, DecisionMode, PolicyConfig};
use crate::policy::forward::{batch_features, IntentionTrace, LegalizeContext, ObsFeatures};

const MARKET_INPUT_DIM: usize = 2;
const SCALAR_DIM: usize = 4;

pub struct PolicyNetwork {
    pub config: PolicyConfig,
    pub store: ParamStore,
    gru: GruParams,
    fc1: FcParams,
    fc2: FcParams,
    chan_enc: FcParams,
    chan_mix: Option<FcParams>,
    chan_attn: Option<MhaParams>,
    dec1: FcParams,
    dec2: FcParams,
    dec3: FcParams,
    q_embed: FcParams,
    q1: FcParams,
    q2: FcParams,
    q3: FcParams,
}

/// Tape handles produced by a teacher-forced replay of one timestep.
pub struct ReplayNodes {
    pub h0: NodeId,
    /// Per round: [n,1] log-probabilities of the recorded actions.
    pub round_log_probs: Vec<NodeId>,
    /// Per round: scalar sum over agents of the decision entropy.
    pub round_entropy: Vec<NodeId>,
}

impl PolicyNetwork {
    pub fn init(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let rng = &mut crate::rng::stream(config.init_seed, "policy-init", 0);
        let h = config.rnn_hidden;
        let f = config.fc_hidden;
        let a = config.action_count;

        let gru = GruParams::init(&mut store, "extractor.gru", MARKET_INPUT_DIM, h, rng)?;
        let fc1 = FcParams::init(&mut store, "extractor.fc1", h + SCALAR_DIM, f, rng)?;
        let fc2 = FcParams::init(&mut store, "extractor.fc2", f, f, rng)?;
        let chan_enc = FcParams::init(&mut store, "channel.enc", f + a, f, rng)?;
        let chan_mix = match config.channel {
            ChannelKind::Broadcast | ChannelKind::Attention => {
                Some(FcParams::init(&mut store, "channel.mix", 2 * f, f, rng)?)
            }
            ChannelKind::None => None,
        };
        let chan_attn = match config.channel {
            ChannelKind::Attention => Some(MhaParams::init(
                &mut store,
                "channel.attn",
                f,
                config.n_heads,
                rng,
            )?),
            _ => None,
        };
        let dec1 = FcParams::init(&mut store, "decide.l1", f, f, rng)?;
        let dec2 = FcParams::init(&mut store, "decide.l2", f, f, rng)?;
        let dec3 = FcParams::init(&mut store, "decide.l3", f, a, rng)?;
        let q_embed = FcParams::init(&mut store, "qhat.embed", f + a, f, rng)?;
        let q1 = FcParams::init(&mut store, "qhat.l1", f, f, rng)?;
        let q2 = FcParams::init(&mut store, "qhat.l2", f, f, rng)?;
        let q3 = FcParams::init(&mut store, "qhat.l3", f, 1, rng)?;

        Ok(PolicyNetwork {
            config,
            store,
            gru,
            fc1,
            fc2,
            chan_enc,
            chan_mix,
            chan_attn,
            dec1,
            dec2,
            dec3,
            q_embed,
            q1,
            q2,
            q3,
        })
    }

    /// h_0 per agent: GRU over the minute features, final state joined with
    /// the summary scalars, two FC+ReLU layers.
    pub fn extract(&self, g: &mut Graph, features: &[ObsFeatures]) -> Result<NodeId> {
        if features.is_empty() {
            return Err(Error::validation("extract on zero agents"));
        }
        let n = features.len();
        let (steps, scalars) = batch_features(features);
        let step_nodes: Vec<NodeId> = steps.into_iter().map(|t| g.input(t)).collect();
        let h_init = g.input(Tensor::zeros(n, self.config.rnn_hidden));
        let h_gru = self
            .gru
            .sequence(g, &self.store, &step_nodes, Some(h_init))?;
        let scalars = g.input(scalars);
        let joined = g.concat_cols(&[h_gru, scalars])?;
        let z1 = self.fc1.apply(g, &self.store, joined)?;
        let z1 = g.relu(z1);
        let z2 = self.fc2.apply(g, &self.store, z1)?;
        Ok(g.relu(z2))
    }

    fn action_one_hots(&self, actions: Option<&[usize]>, n: usize) -> Tensor {
        let a = self.config.action_count;
        let mut data = vec![0.0; n * a];
        if let (true, Some(actions)) = (self.config.intention_feedback, actions) {
            for (i, &act) in actions.iter().enumerate() {
                data[i * a + act] = 1.0;
            }
        }
        Tensor::new(n, a, data).unwrap()
    }

    /// One communication round: every agent's hidden state concatenated with
    /// the one-hot of its previous intended action, exchanged through the
    /// configured channel. `prev_actions` is ignored (zeroed) when intention
    /// feedback is off.
    pub fn communicate_round(
        &self,
        g: &mut Graph,
        h: NodeId,
        prev_actions: Option<&[usize]>,
    ) -> Result<NodeId> {
        let n = g.value(h).rows();
        if n == 0 {
            return Err(Error::validation("communicate_round on zero agents"));
        }
        let one_hots = g.input(self.action_one_hots(prev_actions, n));
        let joined = g.concat_cols(&[h, one_hots])?;
        let enc = self.chan_enc.apply(g, &self.store, joined)?;
        let enc = g.relu(enc);
        match self.config.channel {
            ChannelKind::None => Ok(enc),
            ChannelKind::Broadcast => {
                let comm = if n == 1 {
                    g.input(Tensor::zeros(1, self.config.fc_hidden))
                } else {
                    // mean over the *other* agents: (sum - own) / (n-1)
                    let mean_all = g.mean_rows(enc);
                    let sum_all = g.scale(mean_all, n as f64);
                    let ones = g.input(Tensor::new(n, 1, vec![1.0; n]).unwrap());
                    let repeated = g.matmul(ones, sum_all)?;
                    let others = g.sub(repeated, enc)?;
                    g.scale(others, 1.0 / (n - 1) as f64)
                };
                let joined = g.concat_cols(&[enc, comm])?;
                let mixed = self.chan_mix.as_ref().unwrap().apply(g, &self.store, joined)?;
                Ok(g.relu(mixed))
            }
            ChannelKind::Attention => {
                let attn = multi_head_attention(
                    g,
                    &self.store,
                    self.chan_attn.as_ref().unwrap(),
                    enc,
                    enc,
                    enc,
                )?;
                let joined = g.concat_cols(&[enc, attn])?;
                let mixed = self.chan_mix.as_ref().unwrap().apply(g, &self.store, joined)?;
                Ok(g.relu(mixed))
            }
        }
    }

    /// Decision head: probabilities and log-probabilities over actions.
    pub fn decide(&self, g: &mut Graph, h: NodeId) -> Result<(NodeId, NodeId)> {
        let z1 = self.dec1.apply(g, &self.store, h)?;
        let z1 = g.relu(z1);
        let z2 = self.dec2.apply(g, &self.store, z1)?;
        let z2 = g.relu(z2);
        let logits = self.dec3.apply(g, &self.store, z2)?;
        Ok((g.softmax(logits), g.log_softmax(logits)))
    }

    /// Joint action-value: per-agent (h_0 || one-hot action) embedding,
    /// mean-pooled over agents, three-layer MLP to a scalar.
    pub fn qhat(&self, g: &mut Graph, h0: NodeId, actions: &[usize]) -> Result<NodeId> {
        let n = g.value(h0).rows();
        if n == 0 || actions.len() != n {
            return Err(Error::validation(format!(
                "qhat: {} actions for {n} agents",
                actions.len()
            )));
        }
        let a = self.config.action_count;
        let mut data = vec![0.0; n * a];
        for (i, &act) in actions.iter().enumerate() {
            data[i * a + act] = 1.0;
        }
        let one_hots = g.input(Tensor::new(n, a, data)?);
        let joined = g.concat_cols(&[h0, one_hots])?;
        let emb = self.q_embed.apply(g, &self.store, joined)?;
        let emb = g.relu(emb);
        let pooled = g.mean_rows(emb);
        let z1 = self.q1.apply(g, &self.store, pooled)?;
        let z1 = g.relu(z1);
        let z2 = self.q2.apply(g, &self.store, z1)?;
        let z2 = g.relu(z2);
        self.q3.apply(g, &self.store, z2)
    }

    /// Action-value as a plain number from precomputed h_0 values, snapped
    /// to a fixed binary grid so round-to-round differences telescope
    /// exactly in floating point.
    pub fn qhat_value(&self, h0_values: &Tensor, actions: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let h0 = g.input(h0_values.clone());
        let q = self.qhat(&mut g, h0, actions)?;
        Ok(snap_q40(g.value(q).item()))
    }

    /// h_0 values without gradient bookkeeping.
    pub fn extract_values(&self, features: &[ObsFeatures]) -> Result<Tensor> {
        let mut g = Graph::new();
        let h0 = self.extract(&mut g, features)?;
        Ok(g.value(h0).clone())
    }

    /// Run one timestep's intention refinement: extract, then `rounds`
    /// communicate/decide rounds, sampling (training) or taking the argmax
    /// (evaluation). Intended actions are legalized before being recorded,
    /// fed back, or executed. Returns the trace plus the h_0 values.
    pub fn forward_timestep(
        &self,
        features: &[ObsFeatures],
        mode: DecisionMode,
        rng: Option<&mut ChaCha12Rng>,
        legalize: &LegalizeContext,
        rounds: usize,
    ) -> Result<(IntentionTrace, Tensor)> {
        if rounds == 0 || rounds > self.config.effective_rounds() {
            return Err(Error::validation(format!(
                "rounds {rounds} outside 1..={}",
                self.config.effective_rounds()
            )));
        }
        if legalize.action_fractions.len() != self.config.action_count {
            return Err(Error::validation(format!(
                "policy has {} actions, grid has {}",
                self.config.action_count,
                legalize.action_fractions.len()
            )));
        }
        let n = features.len();
        let mut g = Graph::new();
        let h0 = self.extract(&mut g, features)?;
        let h0_values = g.value(h0).clone();

        let grid = &legalize.action_fractions;
        let mut trace = IntentionTrace {
            actions: vec![vec![0; n]],
            log_probs: Vec::with_capacity(rounds),
            fractions: vec![vec![grid[0]; n]],
        };
        let mut rng = rng;
        let mut h = h0;
        for _ in 1..=rounds {
            let prev = trace.actions.last().unwrap().clone();
            h = self.communicate_round(&mut g, h, Some(&prev))?;
            let (probs, log_probs) = self.decide(&mut g, h)?;
            let mut round_actions = Vec::with_capacity(n);
            let mut round_log_probs = Vec::with_capacity(n);
            let mut round_fractions = Vec::with_capacity(n);
            for i in 0..n {
                let row = g.value(probs).row_slice(i).to_vec();
                let proposed = match mode {
                    DecisionMode::Greedy => argmax(&row),
                    DecisionMode::Sample => {
                        let rng = rng
                            .as_deref_mut()
                            .ok_or_else(|| Error::validation("sampling needs an rng"))?;
                        sample_categorical(rng, &row)
                    }
                };
                let action = legalize.legal_index(i, proposed);
                round_actions.push(action);
                round_log_probs.push(g.value(log_probs).get(i, action));
                round_fractions.push(grid[action]);
            }
            trace.actions.push(round_actions);
            trace.log_probs.push(round_log_probs);
            trace.fractions.push(round_fractions);
        }
        Ok((trace, h0_values))
    }

    /// Teacher-forced replay of a recorded timestep under the current
    /// parameters: rebuilds every round conditioned on the recorded previous
    /// intentions and returns differentiable log-probabilities of the
    /// recorded actions plus per-round entropies.
    pub fn replay_timestep(
        &self,
        g: &mut Graph,
        features: &[ObsFeatures],
        trace: &IntentionTrace,
    ) -> Result<ReplayNodes> {
        let h0 = self.extract(g, features)?;
        let mut h = h0;
        let mut round_log_probs = Vec::with_capacity(trace.rounds());
        let mut round_entropy = Vec::with_capacity(trace.rounds());
        for k in 1..=trace.rounds() {
            h = self.communicate_round(g, h, Some(&trace.actions[k - 1]))?;
            let (probs, log_probs) = self.decide(g, h)?;
            let picked = g.pick_per_row(log_probs, &trace.actions[k])?;
            round_log_probs.push(picked);
            let plogp = g.mul(probs, log_probs)?;
            let sum = g.sum(plogp);
            round_entropy.push(g.scale(sum, -1.0));
        }
        Ok(ReplayNodes {
            h0,
            round_log_probs,
            round_entropy,
        })
    }

}

/// Evenly spaced fraction grid from 0 to 1.
pub(crate) fn default_fraction_grid(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| i as f64 / (count - 1) as f64)
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
