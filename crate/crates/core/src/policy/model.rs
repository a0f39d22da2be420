//! History-aware encoder/decoder transformer over routing trajectories.
//!
//! Embedding: traversed edges and the current/destination nodes come from
//! lookup tables; realized times and the remaining budget go through learned
//! scalar-to-vector affine maps; positions use fixed sinusoids. An empty
//! history is represented by a learned begin token in both the edge and the
//! time stream.
//!
//! Encoder: the edge embeddings attend over the time embeddings (edges as
//! queries, times as keys and values, no projections). The result plus
//! positions runs through self-attention blocks, and the time embeddings are
//! added back after each block.
//!
//! Decoder: a single query token (current node + destination + budget +
//! position) runs through cross-attention blocks over the encoder output.
//! A linear head scores every edge and a masked softmax keeps only the
//! outgoing edges of the current node.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::StochasticNetwork;
use crate::tensor::{Graph, ParamId, ParameterStore, Tensor, Var};

use super::{ActionDistribution, PolicyConfig, PolicyError, PolicyVariant, TrajectoryState};

#[derive(Clone, Debug)]
struct AttnIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Clone, Debug)]
struct BlockIds {
    attn: AttnIds,
    ln1_g: ParamId,
    ln1_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

#[derive(Clone, Debug)]
struct Ids {
    edge_table: Option<ParamId>,
    node_table: ParamId,
    time_w: ParamId,
    time_b: ParamId,
    time_bos: ParamId,
    budget_w: ParamId,
    budget_b: ParamId,
    encoder: Vec<BlockIds>,
    decoder: Vec<BlockIds>,
    head_w: ParamId,
    head_b: ParamId,
}

/// Embedded policy input on a graph.
#[derive(Clone, Debug)]
pub struct Embedded {
    /// `s×d` edge embeddings (absent for the no-history variant).
    pub edges: Option<Var>,
    /// `s×d` travel-time embeddings.
    pub times: Var,
    /// `s×d` sinusoidal positions.
    pub positions: Var,
    /// `1×d` decoder query: current node + destination + budget + position.
    pub query: Var,
    /// One flag per sequence row; padding rows are false.
    pub key_mask: Vec<bool>,
}

/// Trailing rows appended after the real history and masked out of every
/// attention.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Padding {
    pub edges: Vec<usize>,
    pub times: Vec<f64>,
}

/// The trainable routing policy: configuration plus parameters.
#[derive(Clone, Debug)]
pub struct TransformerPolicy {
    config: PolicyConfig,
    store: ParameterStore,
    ids: Ids,
}

struct Builder {
    store: ParameterStore,
    rng: ChaCha8Rng,
    d: usize,
}

impl Builder {
    /// `U(-1/sqrt(rows), 1/sqrt(rows))`: `rows` is the fan-in of a right
    /// multiplication.
    fn weight(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId, PolicyError> {
        let bound = 1.0 / (rows as f64).sqrt();
        Ok(self
            .store
            .insert_uniform(name, rows, cols, bound, &mut self.rng)?)
    }

    /// Lookup table with unit-variance entries.
    fn table(&mut self, name: &str, rows: usize) -> Result<ParamId, PolicyError> {
        let d = self.d;
        Ok(self
            .store
            .insert_uniform(name, rows, d, 3f64.sqrt(), &mut self.rng)?)
    }

    fn zeros(&mut self, name: &str, cols: usize) -> Result<ParamId, PolicyError> {
        Ok(self.store.insert(name, Tensor::zeros(1, cols))?)
    }

    fn ones(&mut self, name: &str, cols: usize) -> Result<ParamId, PolicyError> {
        Ok(self.store.insert(name, Tensor::filled(1, cols, 1.0))?)
    }

    fn block(&mut self, prefix: &str, ffn: usize) -> Result<BlockIds, PolicyError> {
        let d = self.d;
        Ok(BlockIds {
            attn: AttnIds {
                wq: self.weight(&format!("{prefix}.attn.wq"), d, d)?,
                wk: self.weight(&format!("{prefix}.attn.wk"), d, d)?,
                wv: self.weight(&format!("{prefix}.attn.wv"), d, d)?,
                wo: self.weight(&format!("{prefix}.attn.wo"), d, d)?,
            },
            ln1_g: self.ones(&format!("{prefix}.ln1.gamma"), d)?,
            ln1_b: self.zeros(&format!("{prefix}.ln1.beta"), d)?,
            w1: self.weight(&format!("{prefix}.ffn.w1"), d, ffn)?,
            b1: self.zeros(&format!("{prefix}.ffn.b1"), ffn)?,
            w2: self.weight(&format!("{prefix}.ffn.w2"), ffn, d)?,
            b2: self.zeros(&format!("{prefix}.ffn.b2"), d)?,
            ln2_g: self.ones(&format!("{prefix}.ln2.gamma"), d)?,
            ln2_b: self.zeros(&format!("{prefix}.ln2.beta"), d)?,
        })
    }
}

/// Sinusoidal position rows `start..start + count`.
pub fn sinusoid_rows(start: usize, count: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(count * d);
    for pos in start..start + count {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(count, d, data).expect("sized")
}

impl TransformerPolicy {
    /// Fresh parameters: weight matrices from `U(±1/sqrt(fan_in))`, lookup
    /// tables and the begin token with unit-variance uniform entries, biases and
    /// layer-norm shifts zero, layer-norm scales one.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let d = config.embed_dim;
        let mut b = Builder {
            store: ParameterStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            d,
        };
        let edge_table = match config.variant {
            PolicyVariant::NoHistory => None,
            _ => Some(b.table("embed.edge", config.num_edges + 1)?),
        };
        let node_table = b.table("embed.node", config.num_nodes)?;
        let time_w = b.weight("embed.time.w", 1, d)?;
        let time_b = b.zeros("embed.time.b", d)?;
        let time_bos = b.table("embed.time.bos", 1)?;
        let budget_w = b.weight("embed.budget.w", 1, d)?;
        let budget_b = b.zeros("embed.budget.b", d)?;
        let ffn = config.ffn_mult * d;
        let (mut encoder, mut decoder) = (Vec::new(), Vec::new());
        if config.variant != PolicyVariant::Linear {
            for i in 0..config.num_layers {
                encoder.push(b.block(&format!("enc.{i}"), ffn)?);
            }
            for i in 0..config.num_layers {
                decoder.push(b.block(&format!("dec.{i}"), ffn)?);
            }
        }
        let head_w = b.weight("head.w", d, config.num_edges)?;
        let head_b = b.zeros("head.b", config.num_edges)?;
        let ids = Ids {
            edge_table,
            node_table,
            time_w,
            time_b,
            time_bos,
            budget_w,
            budget_b,
            encoder,
            decoder,
            head_w,
            head_b,
        };
        Ok(Self {
            config,
            store: b.store,
            ids,
        })
    }

    /// Reattaches stored parameters to a configuration, checking that every
    /// expected tensor exists with the expected shape.
    pub fn from_parts(config: PolicyConfig, store: ParameterStore) -> Result<Self, PolicyError> {
        let template = Self::new(config.clone(), 0)?;
        if template.store.len() != store.len() {
            return Err(PolicyError::Config(format!(
                "checkpoint holds {} tensors, configuration expects {}",
                store.len(),
                template.store.len()
            )));
        }
        for id in template.store.ids() {
            let name = template.store.name(id);
            let got = store.id(name).ok_or_else(|| {
                PolicyError::Config(format!("checkpoint lacks parameter `{name}`"))
            })?;
            let (want, have) = (template.store.value(id).shape(), store.value(got).shape());
            if got != id || want != have {
                return Err(PolicyError::Config(format!(
                    "parameter `{name}` has shape {have:?}, configuration expects {want:?}"
                )));
            }
        }
        Ok(Self {
            config,
            store,
            ids: template.ids,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn into_parts(self) -> (PolicyConfig, ParameterStore) {
        (self.config, self.store)
    }

    fn check_compat(&self, net: &StochasticNetwork) -> Result<(), PolicyError> {
        if net.num_edges() != self.config.num_edges || net.num_nodes() != self.config.num_nodes {
            return Err(PolicyError::Config(format!(
                "policy built for {} nodes / {} edges, network has {} / {}",
                self.config.num_nodes,
                self.config.num_edges,
                net.num_nodes(),
                net.num_edges()
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: &TrajectoryState, padding: &Padding) -> Result<(), PolicyError> {
        let cfg = &self.config;
        if state.edge_history.len() != state.time_history.len() {
            return Err(PolicyError::InconsistentState(
                "edge and time histories differ in length".into(),
            ));
        }
        if state.history_len() > cfg.max_history_len {
            return Err(PolicyError::HistoryOverflow {
                len: state.history_len(),
                max: cfg.max_history_len,
            });
        }
        if padding.edges.len() != padding.times.len() {
            return Err(PolicyError::InconsistentState(
                "padding edges and times differ in length".into(),
            ));
        }
        for &e in state.edge_history.iter().chain(&padding.edges) {
            if e > cfg.num_edges {
                return Err(PolicyError::IdOutOfRange {
                    kind: "edge",
                    id: e,
                    bound: cfg.num_edges,
                });
            }
        }
        for n in [state.current_node, state.destination] {
            if n >= cfg.num_nodes {
                return Err(PolicyError::IdOutOfRange {
                    kind: "node",
                    id: n,
                    bound: cfg.num_nodes,
                });
            }
        }
        Ok(())
    }

    /// Embeds a state (plus optional masked padding) onto `g`.
    pub fn embed_state(
        &self,
        g: &mut Graph<'_>,
        state: &TrajectoryState,
        padding: &Padding,
    ) -> Result<Embedded, PolicyError> {
        self.check_state(state, padding)?;
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let l = state.history_len();
        let real = l.max(1);
        let seq = real + padding.edges.len();

        let edges = match self.ids.edge_table {
            Some(table) => {
                let mut idx: Vec<usize> = if l == 0 {
                    vec![cfg.num_edges]
                } else {
                    state.edge_history.clone()
                };
                idx.extend_from_slice(&padding.edges);
                let t = g.param(table);
                Some(g.embedding(t, &idx)?)
            }
            None => None,
        };

        let w = g.param(self.ids.time_w);
        let b = g.param(self.ids.time_b);
        let scaled = |ts: &[f64], es: &[usize]| -> Tensor {
            let v = ts
                .iter()
                .zip(es)
                .map(|(&t, &e)| {
                    if e < cfg.num_edges {
                        cfg.time_norm.apply(e, t)
                    } else {
                        t
                    }
                })
                .collect();
            Tensor::new(ts.len(), 1, v).expect("column")
        };
        let times = if l == 0 {
            let bos = g.param(self.ids.time_bos);
            if padding.times.is_empty() {
                bos
            } else {
                let col = g.constant(scaled(&padding.times, &padding.edges));
                let pw = g.matmul(col, w)?;
                let pad = g.add(pw, b)?;
                g.concat_rows(&[bos, pad])?
            }
        } else {
            let mut ts = state.time_history.clone();
            ts.extend_from_slice(&padding.times);
            let mut es = state.edge_history.clone();
            es.extend_from_slice(&padding.edges);
            let col = g.constant(scaled(&ts, &es));
            let rw = g.matmul(col, w)?;
            g.add(rw, b)?
        };

        let positions = g.constant(sinusoid_rows(0, seq, d));

        let nodes = g.param(self.ids.node_table);
        let here = g.embedding(nodes, &[state.current_node])?;
        let goal = g.embedding(nodes, &[state.destination])?;
        let bw = g.param(self.ids.budget_w);
        let bb = g.param(self.ids.budget_b);
        let budget_in = g.constant(Tensor::scalar(state.remaining_budget / cfg.budget_scale));
        let budget_lin = g.matmul(budget_in, bw)?;
        let budget = g.add(budget_lin, bb)?;
        let z_pos = g.constant(sinusoid_rows(l, 1, d));
        let z = g.add(here, goal)?;
        let z = g.add(z, budget)?;
        let query = g.add(z, z_pos)?;

        let mut key_mask = vec![true; real];
        key_mask.resize(seq, false);
        Ok(Embedded {
            edges,
            times,
            positions,
            query,
            key_mask,
        })
    }

    /// `X_enc`, one row per sequence position.
    pub fn encode(&self, g: &mut Graph<'_>, emb: &Embedded) -> Result<Var, PolicyError> {
        let cfg = &self.config;
        let mask = Some(emb.key_mask.as_slice());
        let fused = match (cfg.variant, emb.edges) {
            (PolicyVariant::Full, Some(edges)) => {
                let att = attention(g, edges, emb.times, emb.times, None, cfg.num_heads, mask)?;
                g.add(att, emb.positions)?
            }
            _ => g.add(emb.times, emb.positions)?,
        };
        let mut x = fused;
        for (i, blk) in self.ids.encoder.iter().enumerate() {
            x = block(g, x, None, blk, cfg.num_heads, mask)?;
            if cfg.residual_every_block || i == 0 {
                x = g.add(x, emb.times)?;
            }
        }
        Ok(x)
    }

    /// `X_dec`, a single row.
    pub fn decode(&self, g: &mut Graph<'_>, enc: Var, emb: &Embedded) -> Result<Var, PolicyError> {
        let mask = Some(emb.key_mask.as_slice());
        let mut y = emb.query;
        for blk in &self.ids.decoder {
            y = block(g, y, Some(enc), blk, self.config.num_heads, mask)?;
        }
        Ok(y)
    }

    /// Unnormalized scores over all edges, `1×L`.
    pub fn logits(
        &self,
        g: &mut Graph<'_>,
        state: &TrajectoryState,
        padding: &Padding,
    ) -> Result<Var, PolicyError> {
        let emb = self.embed_state(g, state, padding)?;
        let features = match self.config.variant {
            PolicyVariant::Linear => {
                let real = emb.key_mask.iter().filter(|m| **m).count();
                let mut parts = Vec::new();
                if let Some(e) = emb.edges {
                    parts.push(g.slice_rows(e, 0, real)?);
                }
                parts.push(g.slice_rows(emb.times, 0, real)?);
                parts.push(emb.query);
                let count = (parts.len() - 1) * real + 1;
                let all = g.concat_rows(&parts)?;
                let sum = g.sum_rows(all);
                g.scale(sum, 1.0 / count as f64)
            }
            _ => {
                let enc = self.encode(g, &emb)?;
                self.decode(g, enc, &emb)?
            }
        };
        let w = g.param(self.ids.head_w);
        let b = g.param(self.ids.head_b);
        let raw = g.matmul(features, w)?;
        Ok(g.add(raw, b)?)
    }

    /// Probabilities over edges on `g`, masked to the outgoing edges of the
    /// current node. Returns the probability row and the mask.
    pub fn probs_on(
        &self,
        g: &mut Graph<'_>,
        net: &StochasticNetwork,
        state: &TrajectoryState,
        padding: &Padding,
    ) -> Result<(Var, Vec<bool>), PolicyError> {
        self.check_compat(net)?;
        let mask = feasible_mask(net, state.current_node)?;
        let logits = self.logits(g, state, padding)?;
        let probs = g.masked_softmax(logits, Some(&mask))?;
        Ok((probs, mask))
    }

    /// `log π(action | state)` as a `1×1` node on `g`.
    pub fn log_prob(
        &self,
        g: &mut Graph<'_>,
        net: &StochasticNetwork,
        state: &TrajectoryState,
        action: usize,
    ) -> Result<Var, PolicyError> {
        let (probs, mask) = self.probs_on(g, net, state, &Padding::default())?;
        if action >= mask.len() || !mask[action] {
            return Err(PolicyError::InfeasibleAction {
                edge: action,
                node: state.current_node,
            });
        }
        let lp = g.log(probs);
        Ok(g.gather(lp, &[action])?)
    }

    pub fn action_distribution(
        &self,
        net: &StochasticNetwork,
        state: &TrajectoryState,
    ) -> Result<ActionDistribution, PolicyError> {
        self.action_distribution_padded(net, state, &Padding::default())
    }

    pub fn action_distribution_padded(
        &self,
        net: &StochasticNetwork,
        state: &TrajectoryState,
        padding: &Padding,
    ) -> Result<ActionDistribution, PolicyError> {
        let mut g = Graph::new(&self.store);
        let (probs, feasible) = self.probs_on(&mut g, net, state, padding)?;
        Ok(ActionDistribution {
            probs: g.value(probs).data().to_vec(),
            feasible,
        })
    }
}

/// Outgoing-edge mask of `node`; dead ends are errors.
pub fn feasible_mask(net: &StochasticNetwork, node: usize) -> Result<Vec<bool>, PolicyError> {
    let out = net.out_edges(node);
    if out.is_empty() {
        return Err(PolicyError::DeadEnd { node });
    }
    let mut mask = vec![false; net.num_edges()];
    for &e in out {
        mask[e] = true;
    }
    Ok(mask)
}

/// Multi-head scaled dot-product attention. With `proj` the inputs go through
/// `wq`, `wk`, `wv` and the concatenated heads through `wo`; without it the
/// raw inputs are split into heads directly.
fn attention(
    g: &mut Graph<'_>,
    q_in: Var,
    k_in: Var,
    v_in: Var,
    proj: Option<&AttnIds>,
    heads: usize,
    key_mask: Option<&[bool]>,
) -> Result<Var, PolicyError> {
    let (q, k, v) = match proj {
        Some(p) => {
            let wq = g.param(p.wq);
            let wk = g.param(p.wk);
            let wv = g.param(p.wv);
            let q = g.matmul(q_in, wq)?;
            let k = g.matmul(k_in, wk)?;
            let v = g.matmul(v_in, wv)?;
            (q, k, v)
        }
        None => (q_in, k_in, v_in),
    };
    let d = g.value(q).cols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, dh)?,
                g.slice_cols(k, h * dh, dh)?,
                g.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let weights = g.masked_softmax(scores, key_mask)?;
        outs.push(g.matmul(weights, vh)?);
    }
    let merged = if heads == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)?
    };
    match proj {
        Some(p) => {
            let wo = g.param(p.wo);
            Ok(g.matmul(merged, wo)?)
        }
        None => Ok(merged),
    }
}

/// Post-norm transformer block. Self-attention when `memory` is `None`,
/// otherwise cross-attention with `memory` as keys and values.
fn block(
    g: &mut Graph<'_>,
    x: Var,
    memory: Option<Var>,
    p: &BlockIds,
    heads: usize,
    key_mask: Option<&[bool]>,
) -> Result<Var, PolicyError> {
    let kv = memory.unwrap_or(x);
    let att = attention(g, x, kv, kv, Some(&p.attn), heads, key_mask)?;
    let res = g.add(x, att)?;
    let (g1, b1) = (g.param(p.ln1_g), g.param(p.ln1_b));
    let h = g.layer_norm(res, g1, b1)?;
    let w1 = g.param(p.w1);
    let bias1 = g.param(p.b1);
    let f = g.matmul(h, w1)?;
    let f = g.add(f, bias1)?;
    let f = g.relu(f);
    let w2 = g.param(p.w2);
    let bias2 = g.param(p.b2);
    let f = g.matmul(f, w2)?;
    let f = g.add(f, bias2)?;
    let res = g.add(h, f)?;
    let (g2, b2) = (g.param(p.ln2_g), g.param(p.ln2_b));
    Ok(g.layer_norm(res, g2, b2)?)
}
