use std::cmp::Ordering;

use serde::Serialize;

use crate::neuro::Tape;
use crate::subtok::{TokenId, Vocabulary};

use super::{DecoderState, EncoderOutput, Model, ModelError, Prepared, Specials};

/// Longest name the decoder may spell; at the cap `</i>` is forced.
pub const MAX_NAME_SUBTOKENS: usize = 16;

/// Decoded name for one identifier.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub placeholder: usize,
    /// The predicted name, or the decompiler's name when `keep` is set.
    pub name: String,
    pub keep: bool,
    /// Sum of the log-probabilities of this identifier's tokens.
    pub score: f64,
    #[serde(skip)]
    pub tokens: Vec<TokenId>,
}

#[derive(Clone, Debug)]
struct Hypothesis {
    /// Every token emitted so far, across identifiers.
    tokens: Vec<TokenId>,
    /// Finished identifiers: subtokens (without terminator), keep flag, score.
    names: Vec<(Vec<TokenId>, bool, f64)>,
    current: Vec<TokenId>,
    current_score: f64,
    score: f64,
    /// Row of this hypothesis in the last decoder state.
    row: usize,
}

impl Hypothesis {
    fn previous(&self, bos: TokenId) -> TokenId {
        self.tokens.last().copied().unwrap_or(bos)
    }
}

/// Higher score first; equal scores go to the lexicographically smaller
/// token-id sequence.
fn rank(a_score: f64, a_tokens: &[TokenId], b_score: f64, b_tokens: &[TokenId]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_tokens.cmp(b_tokens))
}

fn allowed(specials: Specials, current_len: usize, token: TokenId) -> bool {
    if current_len >= MAX_NAME_SUBTOKENS {
        return token == specials.end_name;
    }
    if token == specials.keep {
        return current_len == 0;
    }
    if token == specials.end_name {
        return current_len > 0;
    }
    token >= specials.count
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - log_z).collect()
}

fn finish(vocab: &Vocabulary, input: &Prepared, enc: &EncoderOutput, names: &[(Vec<TokenId>, bool, f64)]) -> Vec<Prediction> {
    enc.identifier_ids
        .iter()
        .zip(names)
        .map(|(&k, (tokens, keep, score))| {
            let name = if *keep {
                input.decomp.get(&k).cloned().unwrap_or_default()
            } else {
                vocab.decode(tokens).unwrap_or_default()
            };
            Prediction {
                placeholder: k,
                name,
                keep: *keep,
                score: *score,
                tokens: tokens.clone(),
            }
        })
        .collect()
}

/// Beam search over the whole multi-identifier token sequence. Identifiers
/// are decoded in placeholder order; a name ends at `</i>`, and
/// `</identity>` as a name's first token keeps the decompiler's name.
///
/// Searches of every width `1..=k` share one encoding and the best finished
/// hypothesis among them wins, so the top score never drops as `k` grows.
pub fn beam_decode(model: &Model, vocab: &Vocabulary, input: &Prepared, beam_width: usize) -> Result<Vec<Prediction>, ModelError> {
    let mut tape = Tape::new(model.params());
    let enc = model.encode(&mut tape, input)?;
    if enc.identifier_ids.is_empty() {
        return Ok(Vec::new());
    }
    let mut best: Option<Hypothesis> = None;
    for width in 1..=beam_width.max(1) {
        let found = search(model, &mut tape, &enc, width)?;
        if best
            .as_ref()
            .is_none_or(|b| rank(found.score, &found.tokens, b.score, &b.tokens) == Ordering::Less)
        {
            best = Some(found);
        }
    }
    let best = best.expect("at least one search ran");
    Ok(finish(vocab, input, &enc, &best.names))
}

/// Plain width-`k` beam search; returns the best finished hypothesis.
fn search(model: &Model, tape: &mut Tape, enc: &EncoderOutput, beam_width: usize) -> Result<Hypothesis, ModelError> {
    let specials = model.specials();
    let n_ident = enc.identifier_ids.len();
    let mut state = model.decoder_start(tape, enc)?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        names: Vec::new(),
        current: Vec::new(),
        current_score: 0.0,
        score: 0.0,
        row: 0,
    }];
    let mut best: Option<Hypothesis> = None;

    while !live.is_empty() {
        let rows: Vec<usize> = live.iter().map(|h| h.row).collect();
        let batch = DecoderState {
            h: tape.gather(state.h, &rows)?,
            c: tape.gather(state.c, &rows)?,
            context: tape.gather(state.context, &rows)?,
        };
        let previous: Vec<TokenId> = live.iter().map(|h| h.previous(specials.bos)).collect();
        let identifiers: Vec<usize> = live.iter().map(|h| h.names.len()).collect();
        let (next, blended) = model.decoder_step(tape, enc, &batch, &previous, &identifiers)?;
        let logits = model.logits(tape, blended)?;

        let mut candidates: Vec<(f64, f64, usize, TokenId)> = Vec::new();
        for (i, hyp) in live.iter().enumerate() {
            let lp = log_softmax(tape.value(logits).row(i));
            for (t, &l) in lp.iter().enumerate() {
                if allowed(specials, hyp.current.len(), t) {
                    candidates.push((hyp.score + l, l, i, t));
                }
            }
        }
        candidates.sort_by(|a, b| {
            let ta = &live[a.2].tokens;
            let tb = &live[b.2].tokens;
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ta.iter().chain([&a.3]).cmp(tb.iter().chain([&b.3])))
        });
        candidates.truncate(beam_width);

        let mut next_live = Vec::with_capacity(beam_width);
        for (score, l, i, t) in candidates {
            let mut hyp = live[i].clone();
            hyp.tokens.push(t);
            hyp.score = score;
            hyp.current_score += l;
            hyp.row = i;
            if t == specials.end_name || t == specials.keep {
                let name = std::mem::take(&mut hyp.current);
                hyp.names.push((name, t == specials.keep, hyp.current_score));
                hyp.current_score = 0.0;
                if hyp.names.len() == n_ident {
                    let better = best
                        .as_ref()
                        .is_none_or(|b| rank(hyp.score, &hyp.tokens, b.score, &b.tokens) == Ordering::Less);
                    if better {
                        best = Some(hyp);
                    }
                    continue;
                }
            } else {
                hyp.current.push(t);
            }
            next_live.push(hyp);
        }
        state = next;
        live = next_live;
        // Scores only fall as tokens are added, so a live hypothesis that is
        // already below the best finished one can never overtake it.
        if let Some(b) = &best {
            live.retain(|h| h.score >= b.score);
        }
    }
    Ok(best.expect("every hypothesis terminates within the length cap"))
}

/// Picks the most probable allowed token at every step (lowest id on ties).
pub fn greedy_decode(model: &Model, vocab: &Vocabulary, input: &Prepared) -> Result<Vec<Prediction>, ModelError> {
    let specials = model.specials();
    let mut tape = Tape::new(model.params());
    let enc = model.encode(&mut tape, input)?;
    let n_ident = enc.identifier_ids.len();
    if n_ident == 0 {
        return Ok(Vec::new());
    }
    let mut state = model.decoder_start(&mut tape, &enc)?;
    let mut names = Vec::new();
    let mut current = Vec::new();
    let mut current_score = 0.0;
    let mut total = 0.0;
    let mut previous = specials.bos;
    while names.len() < n_ident {
        let batch = DecoderState {
            h: tape.gather(state.h, &[0])?,
            c: tape.gather(state.c, &[0])?,
            context: tape.gather(state.context, &[0])?,
        };
        let (next, blended) = model.decoder_step(&mut tape, &enc, &batch, &[previous], &[names.len()])?;
        let logits = model.logits(&mut tape, blended)?;
        let lp = log_softmax(tape.value(logits).row(0));
        let mut choice: Option<TokenId> = None;
        for (t, &l) in lp.iter().enumerate() {
            // Compare running totals, exactly as the beam ranks candidates.
            if allowed(specials, current.len(), t) && choice.is_none_or(|c| total + l > total + lp[c]) {
                choice = Some(t);
            }
        }
        let t = choice.expect("some token is always allowed");
        current_score += lp[t];
        total += lp[t];
        if t == specials.end_name || t == specials.keep {
            names.push((std::mem::take(&mut current), t == specials.keep, current_score));
            current_score = 0.0;
        } else {
            current.push(t);
        }
        previous = t;
        state = next;
    }
    Ok(finish(vocab, input, &enc, &names))
}
