//! Lexical and structural encoders, their combination, and the attention
//! decoder that spells out one name per identifier.

mod beam;
mod input;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::SyntacticType;
use crate::graph::EdgeType;
use crate::neuro::{
    gru_cell, lstm_step, Checkpoint, GruParams, Linear, LstmParams, NeuroError, ParamId, ParamStore, Tape,
    Tensor, Var,
};
use crate::subtok::{TokenId, Vocabulary};

pub use beam::{beam_decode, greedy_decode, Prediction, MAX_NAME_SUBTOKENS};
pub use input::{gold_names, prepare, GoldName, GraphInput, Prepared};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub recurrent_layers: usize,
    pub ggnn_steps: usize,
    pub beam_width: usize,
    pub epochs: usize,
    pub intermediate_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 128,
            encoder_hidden: 128,
            decoder_hidden: 256,
            recurrent_layers: 2,
            ggnn_steps: 8,
            beam_width: 5,
            epochs: 60,
            intermediate_weight: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("recurrent_layers", self.recurrent_layers),
            ("beam_width", self.beam_width),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.encoder_hidden % 2 != 0 {
            return Err(ModelError::Config(
                "encoder_hidden must be even: each direction of the lexical encoder gets half".into(),
            ));
        }
        if !(self.intermediate_weight > 0.0) {
            return Err(ModelError::Config("intermediate_weight must be positive".into()));
        }
        Ok(())
    }
}

/// Which encoders feed the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Both,
    Lexical,
    Structural,
}

impl EncoderKind {
    pub fn uses_lexical(self) -> bool {
        self != EncoderKind::Structural
    }

    pub fn uses_structural(self) -> bool {
        self != EncoderKind::Lexical
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("entry has no tokens")]
    EmptyTokens,
    #[error("variable {0} is not a placeholder")]
    NotPlaceholder(String),
    #[error("identifier sets differ: {0:?} vs {1:?}")]
    IdentifierMismatch(Vec<usize>, Vec<usize>),
    #[error("gold token {0} is outside the vocabulary")]
    UnknownGoldToken(TokenId),
    #[error("checkpoint does not match: {0}")]
    Checkpoint(String),
}

/// Where an element representation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKey {
    /// Position in the subtoken sequence.
    Token(usize),
    /// Graph vertex id.
    Vertex(usize),
}

/// Element and identifier representations, held as rows of tape values.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// One row per element.
    pub elements: Var,
    pub element_keys: Vec<ElementKey>,
    /// One row per identifier, ordered like `identifier_ids`.
    pub identifiers: Var,
    /// Placeholder numbers, ascending (first-mention preorder).
    pub identifier_ids: Vec<usize>,
}

impl EncoderOutput {
    pub fn identifier_row(&self, placeholder: usize) -> Option<usize> {
        self.identifier_ids.iter().position(|&k| k == placeholder)
    }
}

#[derive(Clone, Debug)]
struct LexicalParts {
    embed: ParamId,
    /// `(forward, backward)` per stacked layer.
    layers: Vec<(LstmParams, LstmParams)>,
}

#[derive(Clone, Debug)]
struct GgnnLayer {
    /// `hidden x (8 · hidden)`: one message block per edge type.
    messages: ParamId,
    gru: GruParams,
}

#[derive(Clone, Debug)]
struct StructuralParts {
    type_embed: ParamId,
    dtype_embed: ParamId,
    name_embed: ParamId,
    init: Linear,
    layers: Vec<GgnnLayer>,
}

#[derive(Clone, Debug)]
struct DecoderParts {
    embed: ParamId,
    init: Linear,
    cell: LstmParams,
    attention: ParamId,
    blend: Linear,
}

/// The full network plus its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    encoders: EncoderKind,
    vocab_size: usize,
    specials: Specials,
    params: ParamStore,
    lexical: Option<LexicalParts>,
    structural: Option<StructuralParts>,
    combine: Option<Linear>,
    decoder: DecoderParts,
}

/// Type-embedding row reserved for supernodes.
fn supernode_type_slot() -> usize {
    SyntacticType::slot_count()
}

impl Model {
    pub fn new(config: ModelConfig, encoders: EncoderKind, vocab: &Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let vocab_size = vocab.len();
        let specials = Specials {
            bos: vocab.bos(),
            end_name: vocab.end_name(),
            keep: vocab.keep(),
            count: vocab.specials().len(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (e, h, dh) = (config.embed_dim, config.encoder_hidden, config.decoder_hidden);

        let lexical = encoders.uses_lexical().then(|| {
            let embed = store.insert_glorot("lexical.embed", vocab_size, e, &mut rng);
            let layers = (0..config.recurrent_layers)
                .map(|l| {
                    let input = if l == 0 { e } else { h };
                    let fwd = LstmParams::new(&mut store, &format!("lexical.l{l}.fwd"), input, h / 2, &mut rng);
                    let bwd = LstmParams::new(&mut store, &format!("lexical.l{l}.bwd"), input, h / 2, &mut rng);
                    (fwd, bwd)
                })
                .collect();
            LexicalParts { embed, layers }
        });

        let structural = encoders.uses_structural().then(|| {
            let type_embed = store.insert_glorot("graph.type_embed", supernode_type_slot() + 1, e, &mut rng);
            let dtype_embed = store.insert_glorot("graph.dtype_embed", vocab_size, e, &mut rng);
            let name_embed = store.insert_glorot("graph.name_embed", vocab_size, e, &mut rng);
            let init = Linear::new(&mut store, "graph.init", 3 * e, h, &mut rng);
            let layers = (0..config.recurrent_layers)
                .map(|l| GgnnLayer {
                    messages: store.insert_glorot(&format!("graph.l{l}.messages"), h, EdgeType::COUNT * h, &mut rng),
                    gru: GruParams::new(&mut store, &format!("graph.l{l}.gru"), h, h, &mut rng),
                })
                .collect();
            StructuralParts {
                type_embed,
                dtype_embed,
                name_embed,
                init,
                layers,
            }
        });

        let combine =
            (encoders == EncoderKind::Both).then(|| Linear::new(&mut store, "combine", 2 * h, h, &mut rng));

        let decoder = DecoderParts {
            embed: store.insert_glorot("decoder.embed", vocab_size, e, &mut rng),
            init: Linear::new(&mut store, "decoder.init", h, dh, &mut rng),
            cell: LstmParams::new(&mut store, "decoder.cell", e + 2 * h, dh, &mut rng),
            attention: store.insert_glorot("decoder.attention", dh, h, &mut rng),
            blend: Linear::new(&mut store, "decoder.blend", dh + h, e, &mut rng),
        };

        Ok(Model {
            config,
            encoders,
            vocab_size,
            specials,
            params: store,
            lexical,
            structural,
            combine,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoders(&self) -> EncoderKind {
        self.encoders
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Names of the parameters owned by each part, for tests and diagnostics.
    pub fn param_group(&self, prefix: &str) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, n, _)| n.starts_with(prefix))
            .map(|(id, _, _)| id)
            .collect()
    }

    /// Bidirectional stacked LSTM over the subtoken sequence. Element rows are
    /// `[forward : backward]` states of the top layer; an identifier is the
    /// mean of its mention rows.
    pub fn encode_lexical(&self, tape: &mut Tape, input: &Prepared) -> Result<EncoderOutput, ModelError> {
        let parts = self.lexical.as_ref().ok_or_else(|| ModelError::Config("no lexical encoder".into()))?;
        if input.subtokens.is_empty() {
            return Err(ModelError::EmptyTokens);
        }
        let n = input.subtokens.len();
        let table = tape.param(parts.embed);
        let mut x = tape.gather(table, &input.subtokens)?;
        for (fwd, bwd) in &parts.layers {
            let forward = run_lstm(tape, x, fwd, false)?;
            let backward = run_lstm(tape, x, bwd, true)?;
            x = tape.concat_cols(&[forward, backward])?;
        }
        let segments = input.mentions.values().cloned().collect();
        let identifiers = tape.segment_mean(x, segments)?;
        Ok(EncoderOutput {
            elements: x,
            element_keys: (0..n).map(ElementKey::Token).collect(),
            identifiers,
            identifier_ids: input.mentions.keys().copied().collect(),
        })
    }

    /// Gated graph network over the typed graph: initial states from type,
    /// data-type and name embeddings, then `ggnn_steps` synchronous rounds of
    /// per-edge-type messages, mean aggregation and a GRU update per layer.
    pub fn encode_structural(&self, tape: &mut Tape, graph: &GraphInput) -> Result<EncoderOutput, ModelError> {
        let parts = self
            .structural
            .as_ref()
            .ok_or_else(|| ModelError::Config("no structural encoder".into()))?;
        let h = self.config.encoder_hidden;
        let n = graph.types.len();
        let types = tape.param(parts.type_embed);
        let types = tape.gather(types, &graph.types)?;
        let dtypes = tape.param(parts.dtype_embed);
        let dtypes = tape.segment_mean(dtypes, graph.dtypes.clone())?;
        let names = tape.param(parts.name_embed);
        let names = tape.segment_mean(names, graph.names.clone())?;
        let features = tape.concat_cols(&[types, dtypes, names])?;
        let mut state = parts.init.forward(tape, features)?;
        for layer in &parts.layers {
            let w = tape.param(layer.messages);
            for _ in 0..self.config.ggnn_steps {
                let all = tape.matmul(state, w)?;
                let per_edge = tape.reshape(all, n * EdgeType::COUNT, h)?;
                let incoming = tape.segment_mean(per_edge, graph.incoming.clone())?;
                state = gru_cell(tape, incoming, state, &layer.gru)?;
            }
        }
        let supernodes: Vec<usize> = graph.supernodes.values().copied().collect();
        let identifiers = if supernodes.is_empty() {
            state
        } else {
            tape.gather(state, &supernodes)?
        };
        Ok(EncoderOutput {
            elements: state,
            element_keys: graph.vertex_ids.iter().map(|&v| ElementKey::Vertex(v)).collect(),
            identifiers,
            identifier_ids: graph.supernodes.keys().copied().collect(),
        })
    }

    /// Elements: union of both sets. Identifiers: a linear map of the
    /// concatenated lexical and structural representations.
    pub fn combine(&self, tape: &mut Tape, lex: &EncoderOutput, st: &EncoderOutput) -> Result<EncoderOutput, ModelError> {
        if lex.identifier_ids != st.identifier_ids {
            return Err(ModelError::IdentifierMismatch(
                lex.identifier_ids.clone(),
                st.identifier_ids.clone(),
            ));
        }
        let linear = self.combine.as_ref().ok_or_else(|| ModelError::Config("no combiner".into()))?;
        let elements = tape.concat_rows(&[lex.elements, st.elements])?;
        let joined = tape.concat_cols(&[lex.identifiers, st.identifiers])?;
        let identifiers = linear.forward(tape, joined)?;
        let mut element_keys = lex.element_keys.clone();
        element_keys.extend(&st.element_keys);
        Ok(EncoderOutput {
            elements,
            element_keys,
            identifiers,
            identifier_ids: lex.identifier_ids.clone(),
        })
    }

    /// Runs whichever encoders this model uses.
    pub fn encode(&self, tape: &mut Tape, input: &Prepared) -> Result<EncoderOutput, ModelError> {
        match self.encoders {
            EncoderKind::Lexical => self.encode_lexical(tape, input),
            EncoderKind::Structural => self.encode_structural(tape, &input.graph),
            EncoderKind::Both => {
                let lex = self.encode_lexical(tape, input)?;
                let st = self.encode_structural(tape, &input.graph)?;
                self.combine(tape, &lex, &st)
            }
        }
    }

    pub(crate) fn decoder_start(&self, tape: &mut Tape, enc: &EncoderOutput) -> Result<DecoderState, ModelError> {
        let mean = tape.mean_rows(enc.identifiers)?;
        let h = self.decoder.init.forward(tape, mean)?;
        let c = tape.input(Tensor::zeros(1, self.config.decoder_hidden));
        let context = tape.input(Tensor::zeros(1, self.config.encoder_hidden));
        Ok(DecoderState { h, c, context })
    }

    /// One decoder step for a batch of rows (hypotheses). Returns the new
    /// state and the blended output `s̃` whose product with the output
    /// embedding gives the logits.
    pub(crate) fn decoder_step(
        &self,
        tape: &mut Tape,
        enc: &EncoderOutput,
        state: &DecoderState,
        previous: &[TokenId],
        identifier_rows: &[usize],
    ) -> Result<(DecoderState, Var), ModelError> {
        let d = &self.decoder;
        let table = tape.param(d.embed);
        let y = tape.gather(table, previous)?;
        let v = tape.gather(enc.identifiers, identifier_rows)?;
        let x = tape.concat_cols(&[y, v, state.context])?;
        let xp = d.cell.project_inputs(tape, x)?;
        let (h, c) = lstm_step(tape, xp, state.h, state.c, &d.cell)?;
        let wa = tape.param(d.attention);
        let query = tape.matmul(h, wa)?;
        let scores = tape.matmul_t(query, enc.elements)?;
        let weights = tape.softmax_rows(scores);
        let context = tape.matmul(weights, enc.elements)?;
        let joined = tape.concat_cols(&[h, context])?;
        let blended = d.blend.forward(tape, joined)?;
        Ok((DecoderState { h, c, context }, blended))
    }

    pub(crate) fn logits(&self, tape: &mut Tape, blended: Var) -> Result<Var, ModelError> {
        let table = tape.param(self.decoder.embed);
        Ok(tape.matmul_t(blended, table)?)
    }

    /// Attention weights of one decoder step, exposed for inspection.
    pub fn attention_weights(
        &self,
        tape: &mut Tape,
        enc: &EncoderOutput,
        gold: &[GoldName],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut out = Vec::new();
        self.teacher_forced(tape, enc, gold, |tape, state, _| {
            let wa = tape.param(self.decoder.attention);
            let q = tape.matmul(state.h, wa)?;
            let s = tape.matmul_t(q, enc.elements)?;
            let w = tape.softmax_rows(s);
            out.push(tape.value(w).data().to_vec());
            Ok(())
        })?;
        Ok(out)
    }

    fn teacher_forced(
        &self,
        tape: &mut Tape,
        enc: &EncoderOutput,
        gold: &[GoldName],
        mut visit: impl FnMut(&mut Tape, &DecoderState, Var) -> Result<(), ModelError>,
    ) -> Result<(), ModelError> {
        let bos = self.bos();
        let mut state = self.decoder_start(tape, enc)?;
        let mut previous = bos;
        for (row, name) in gold.iter().enumerate() {
            for &target in &name.tokens {
                let (next, blended) = self.decoder_step(tape, enc, &state, &[previous], &[row])?;
                visit(tape, &next, blended)?;
                state = next;
                previous = target;
            }
        }
        Ok(())
    }

    fn bos(&self) -> TokenId {
        self.specials.bos
    }

    pub(crate) fn specials(&self) -> Specials {
        self.specials
    }

    /// `−Σ_t w_t · log p(y_t)` under teacher forcing, identifiers in
    /// placeholder order; `gold[i]` belongs to the `i`-th identifier row.
    pub fn decode_loss(&self, tape: &mut Tape, enc: &EncoderOutput, gold: &[GoldName]) -> Result<Var, ModelError> {
        if gold.len() != enc.identifier_ids.len() {
            return Err(ModelError::IdentifierMismatch(
                enc.identifier_ids.clone(),
                (1..=gold.len()).collect(),
            ));
        }
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for name in gold {
            let w = if name.intermediate {
                self.config.intermediate_weight
            } else {
                1.0
            };
            for &t in &name.tokens {
                if t >= self.vocab_size {
                    return Err(ModelError::UnknownGoldToken(t));
                }
                targets.push(t);
                weights.push(w);
            }
        }
        let mut outputs = Vec::with_capacity(targets.len());
        self.teacher_forced(tape, enc, gold, |_, _, blended| {
            outputs.push(blended);
            Ok(())
        })?;
        if outputs.is_empty() {
            return Ok(tape.input(Tensor::scalar(0.0)));
        }
        let stacked = tape.concat_rows(&outputs)?;
        let logits = self.logits(tape, stacked)?;
        Ok(tape.cross_entropy(logits, &targets, &weights)?)
    }

    /// Encoder plus decoder loss for one prepared entry.
    pub fn loss(&self, tape: &mut Tape, input: &Prepared) -> Result<Var, ModelError> {
        let enc = self.encode(tape, input)?;
        self.decode_loss(tape, &enc, &input.gold)
    }

    pub fn checkpoint_meta(&self, vocab: &Vocabulary) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "encoders": self.encoders,
            "vocab_size": self.vocab_size,
            "vocab_fingerprint": vocab.fingerprint(),
        })
    }

    pub fn to_checkpoint(&self, vocab: &Vocabulary) -> Checkpoint {
        Checkpoint::from_store(&self.params, self.checkpoint_meta(vocab))
    }

    /// Rebuilds a model from a checkpoint, refusing one trained with a
    /// different vocabulary.
    pub fn from_checkpoint(ck: &Checkpoint, vocab: &Vocabulary) -> Result<Self, ModelError> {
        let meta = &ck.meta;
        let fingerprint = meta["vocab_fingerprint"].as_str().unwrap_or_default();
        if fingerprint != vocab.fingerprint() {
            return Err(ModelError::Checkpoint(
                "vocabulary fingerprint differs from the one used in training".into(),
            ));
        }
        let config: ModelConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let encoders: EncoderKind = serde_json::from_value(meta["encoders"].clone())
            .map_err(|e| ModelError::Checkpoint(format!("encoders: {e}")))?;
        let mut model = Model::new(config, encoders, vocab, 0)?;
        model
            .params
            .load_from(&ck.params)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Ok(model)
    }

    /// Predicted names, beam width taken from the config.
    pub fn predict(&self, vocab: &Vocabulary, input: &Prepared) -> Result<Vec<Prediction>, ModelError> {
        beam_decode(self, vocab, input, self.config.beam_width)
    }

}

/// Vocabulary ids the decoder treats specially. Ids below `count` are all
/// specials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Specials {
    pub bos: TokenId,
    pub end_name: TokenId,
    pub keep: TokenId,
    pub count: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderState {
    pub h: Var,
    pub c: Var,
    pub context: Var,
}

fn run_lstm(tape: &mut Tape, x: Var, p: &LstmParams, reverse: bool) -> Result<Var, ModelError> {
    let n = tape.shape(x).0;
    let projected = p.project_inputs(tape, x)?;
    let mut h = tape.input(Tensor::zeros(1, p.hidden));
    let mut c = tape.input(Tensor::zeros(1, p.hidden));
    let mut states = vec![h; n];
    let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for t in order {
        let xp = tape.slice_rows(projected, t, 1)?;
        (h, c) = lstm_step(tape, xp, h, c, p)?;
        states[t] = h;
    }
    Ok(tape.concat_rows(&states)?)
}
