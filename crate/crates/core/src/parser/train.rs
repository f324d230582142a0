//! Mini-batch gradient descent for the three task heads over a frozen
//! encoder.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{target_embedding, Encoder};
use super::heads::{
    argument_representation, frame_fe_rows, marker_positions, BioHead, BioLabel, FeHead, FrameIdHead, HeadParams,
    DEFAULT_FE_HIDDEN,
};
use super::linalg::argmax;
use super::marking::mark_target;
use super::targets::TargetSpan;
use super::ParserError;
use crate::annotation::AnnotatedSentence;
use crate::lexicon::{candidate_frames, lookup_lus, FrameLexicon};

/// Initial parameters are drawn uniformly from `[-INIT_SCALE, INIT_SCALE]`.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub fe_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            batch_size: 8,
            epochs: 50,
            seed: 0,
            fe_hidden: DEFAULT_FE_HIDDEN,
        }
    }
}

/// The three trained heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParserHeads {
    pub frame: FrameIdHead,
    pub bio: BioHead,
    pub fe: FeHead,
}

impl ParserHeads {
    /// Zero-initialized heads covering every frame and FE of the lexicon.
    pub fn zeros(lex: &FrameLexicon, dim: usize, fe_hidden: usize) -> Self {
        Self {
            frame: FrameIdHead::zeros(lex.frames().map(|f| f.id.clone()).collect(), dim),
            bio: BioHead::zeros(dim),
            fe: FeHead::zeros(lex.frame_elements().map(|f| f.id.clone()).collect(), dim, fe_hidden),
        }
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.frame.is_finite() && self.bio.is_finite() && self.fe.is_finite()
    }

    fn step(&mut self, grad: &ParserHeads, lr: f64) {
        self.frame.step(&grad.frame, lr);
        self.bio.step(&grad.bio, lr);
        self.fe.step(&grad.fe, lr);
    }

    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.frame.scale_all(0.0);
        g.bio.scale_all(0.0);
        g.fe.scale_all(0.0);
        g
    }
}

/// One FE filler prepared for classification.
#[derive(Debug, Clone)]
pub struct FeItem {
    pub representation: Vec<f64>,
    pub rows: Vec<usize>,
    pub gold: usize,
}

/// One (sentence, target) pair, fully encoded.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub target_vector: Vec<f64>,
    pub frame_rows: Vec<usize>,
    pub frame_gold: usize,
    /// Vectors and gold labels of non-marker symbols.
    pub bio_vectors: Vec<Vec<f64>>,
    pub bio_gold: Vec<BioLabel>,
    pub fe_items: Vec<FeItem>,
}

/// Mean cross-entropy of the BIO head over a symbol sequence.
pub fn bio_sequence_loss_and_grad(head: &BioHead, vectors: &[Vec<f64>], gold: &[BioLabel], grad: &mut BioHead) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    let n = vectors.len() as f64;
    let mut local = BioHead::zeros(head.dim());
    let total: f64 = vectors
        .iter()
        .zip(gold)
        .map(|(h, &g)| head.loss_and_grad(h, g, &mut local))
        .sum();
    local.scale_all(1.0 / n);
    grad.step(&local, -1.0);
    total / n
}

/// Mean cross-entropy of the FE head over a list of fillers.
pub fn fe_items_loss_and_grad(head: &FeHead, items: &[FeItem], grad: &mut FeHead) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let n = items.len() as f64;
    let mut local = head.clone();
    local.scale_all(0.0);
    let total: f64 = items
        .iter()
        .map(|it| head.loss_and_grad(&it.representation, &it.rows, it.gold, &mut local))
        .sum();
    local.scale_all(1.0 / n);
    grad.step(&local, -1.0);
    total / n
}

impl TrainExample {
    /// Joint loss: frame CE + mean BIO CE + mean FE CE. Gradients are
    /// accumulated into `grad`.
    pub fn loss_and_grad(&self, heads: &ParserHeads, grad: &mut ParserHeads) -> f64 {
        let frame = heads
            .frame
            .loss_and_grad(&self.target_vector, &self.frame_rows, self.frame_gold, &mut grad.frame);
        let bio = bio_sequence_loss_and_grad(&heads.bio, &self.bio_vectors, &self.bio_gold, &mut grad.bio);
        let fe = fe_items_loss_and_grad(&heads.fe, &self.fe_items, &mut grad.fe);
        frame + bio + fe
    }
}

/// Encodes every gold target of every sentence into a training example.
pub fn build_examples(
    gold: &[AnnotatedSentence],
    lex: &FrameLexicon,
    encoder: &dyn Encoder,
    heads: &ParserHeads,
) -> Result<Vec<TrainExample>, ParserError> {
    let mut out = Vec::new();
    for sent in gold {
        sent.check(lex).map_err(ParserError::Data)?;
        for target in &sent.targets {
            let span = TargetSpan::new(target.start, target.end);
            let marked = mark_target(&sent.tokens, &span)?;
            let emb = encoder.encode(&marked.symbols);
            let target_vector = target_embedding(&emb, &marked.target_mask)?;

            let surface = sent.span_text(target.start, target.end);
            let lus = lookup_lus(lex, &surface);
            let mut cands: Vec<&str> = candidate_frames(lex, &lus).iter().map(|f| f.id.as_str()).collect();
            cands.push(&target.frame_id);
            cands.sort_unstable();
            cands.dedup();
            let frame_rows = cands
                .iter()
                .map(|id| {
                    heads
                        .frame
                        .row_of(id)
                        .ok_or_else(|| ParserError::Config(format!("frame '{id}' missing from frame head")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let frame_gold = cands.iter().position(|c| *c == target.frame_id).expect("gold pushed");

            let frame = lex.frame(&target.frame_id).expect("checked");
            let fe_symbols = marked.with_frame(&frame.name);
            let fe_emb = encoder.encode(&fe_symbols);
            let markers = marker_positions(&marked, fe_symbols.len());

            let mut labels = vec![BioLabel::O; fe_symbols.len()];
            for filler in &target.fes {
                for tok in filler.start..filler.end {
                    labels[marked.symbol_of_token(tok)] = if tok == filler.start { BioLabel::B } else { BioLabel::I };
                }
            }
            let (bio_vectors, bio_gold) = fe_emb
                .iter()
                .zip(&labels)
                .zip(&markers)
                .filter(|(_, &m)| !m)
                .map(|((v, &l), _)| (v.clone(), l))
                .unzip();

            let mut fe_items = Vec::new();
            if !target.fes.is_empty() {
                let rows = frame_fe_rows(&target.frame_id, &heads.fe, lex)?;
                for filler in &target.fes {
                    let s = marked.symbol_of_token(filler.start);
                    let e = marked.symbol_of_token(filler.end - 1) + 1;
                    fe_items.push(FeItem {
                        representation: argument_representation(&fe_emb[s..e])?,
                        rows: rows.iter().map(|(_, r)| *r).collect(),
                        gold: rows.iter().position(|(id, _)| *id == filler.fe_id).expect("checked"),
                    });
                }
            }

            out.push(TrainExample {
                target_vector,
                frame_rows,
                frame_gold,
                bio_vectors,
                bio_gold,
                fe_items,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub heads: ParserHeads,
    /// Mean per-example loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains all three heads jointly. The same seed and data give bit-identical
/// heads and loss trace.
pub fn train_heads(
    gold: &[AnnotatedSentence],
    lex: &FrameLexicon,
    encoder: &dyn Encoder,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ParserError> {
    if gold.iter().all(|s| s.targets.is_empty()) {
        return Err(ParserError::Argument("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(ParserError::Argument("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut heads = ParserHeads::zeros(lex, encoder.dim(), cfg.fe_hidden);
    heads.frame.fill_uniform(&mut rng, INIT_SCALE);
    heads.bio.fill_uniform(&mut rng, INIT_SCALE);
    heads.fe.fill_uniform(&mut rng, INIT_SCALE);

    let examples = build_examples(gold, lex, encoder, &heads)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = heads.zeros_like();
            for &i in batch {
                epoch_loss += examples[i].loss_and_grad(&heads, &mut grad);
            }
            if !epoch_loss.is_finite() {
                return Err(ParserError::Training {
                    epoch,
                    message: "loss is not finite".into(),
                });
            }
            heads.step(&grad, cfg.lr / batch.len() as f64);
        }
        if !heads.is_finite() {
            return Err(ParserError::Training {
                epoch,
                message: "parameters diverged".into(),
            });
        }
        let mean = epoch_loss / examples.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    Ok(TrainOutcome {
        heads,
        loss_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadAccuracy {
    pub frame: f64,
    pub bio: f64,
    pub fe: f64,
}

/// Per-sub-task accuracy of `heads` on prepared examples (gold targets and
/// gold argument spans).
pub fn head_accuracy(heads: &ParserHeads, examples: &[TrainExample]) -> HeadAccuracy {
    let (mut fr, mut fr_n, mut bio, mut bio_n, mut fe, mut fe_n) = (0, 0, 0, 0, 0, 0);
    for ex in examples {
        let z = heads.frame.scores(&ex.target_vector, &ex.frame_rows);
        fr += usize::from(argmax(&z) == ex.frame_gold);
        fr_n += 1;
        for (v, &g) in ex.bio_vectors.iter().zip(&ex.bio_gold) {
            bio += usize::from(heads.bio.predict(v) == g);
            bio_n += 1;
        }
        for it in &ex.fe_items {
            fe += usize::from(argmax(&heads.fe.logits(&it.representation, &it.rows)) == it.gold);
            fe_n += 1;
        }
    }
    let ratio = |a: usize, n: usize| if n == 0 { 1.0 } else { a as f64 / n as f64 };
    HeadAccuracy {
        frame: ratio(fr, fr_n),
        bio: ratio(bio, bio_n),
        fe: ratio(fe, fe_n),
    }
}
