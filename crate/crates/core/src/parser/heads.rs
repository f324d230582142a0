//! Task heads for frame identification, argument (B-I-O) tagging and
//! frame-element classification, with their cross-entropy losses and
//! analytic gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{argmax, axpy, dot, log_sum_exp, softmax, Matrix};
use super::marking::MarkedInput;
use super::ParserError;
use crate::lexicon::FrameLexicon;

/// Parameter access shared by all heads. Gradients are stored in a head of
/// the same shape, so `parameters` of a value and its gradient line up.
pub trait HeadParams {
    fn parameters(&self) -> Vec<&[f64]>;
    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;

    fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|x| x.is_finite()))
    }

    /// `self -= lr * grad`
    fn step(&mut self, grad: &Self, lr: f64) {
        for (p, g) in self.parameters_mut().into_iter().zip(grad.parameters()) {
            axpy(p, -lr, g);
        }
    }

    fn fill_uniform<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for p in self.parameters_mut() {
            for x in p.iter_mut() {
                *x = rng.gen_range(-scale..=scale);
            }
        }
    }

    fn scale_all(&mut self, factor: f64) {
        for p in self.parameters_mut() {
            p.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Cross-entropy of `softmax(logits)` against `gold`, plus `d loss / d logits`.
fn softmax_ce(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(logits) - logits[gold];
    let mut d = softmax(logits);
    d[gold] -= 1.0;
    (loss, d)
}

// ---------------------------------------------------------------------------
// Frame identification

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIdHead {
    /// Row order; sorted by frame id.
    pub frame_ids: Vec<String>,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl FrameIdHead {
    pub fn zeros(mut frame_ids: Vec<String>, dim: usize) -> Self {
        frame_ids.sort();
        frame_ids.dedup();
        let n = frame_ids.len();
        Self {
            frame_ids,
            weight: Matrix::zeros(n, dim),
            bias: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn row_of(&self, frame_id: &str) -> Option<usize> {
        self.frame_ids.binary_search_by(|f| f.as_str().cmp(frame_id)).ok()
    }

    /// `tanh(W_r . t + b_r)` for each requested row.
    pub fn scores(&self, t: &[f64], rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&r| (dot(self.weight.row(r), t) + self.bias[r]).tanh())
            .collect()
    }

    /// Cross-entropy over the candidate rows, with `gold` an index into
    /// `rows`. Gradient is accumulated into `grad`.
    pub fn loss_and_grad(&self, t: &[f64], rows: &[usize], gold: usize, grad: &mut Self) -> f64 {
        let z = self.scores(t, rows);
        let (loss, dz) = softmax_ce(&z, gold);
        for ((&r, &zi), &dzi) in rows.iter().zip(&z).zip(&dz) {
            let dpre = dzi * (1.0 - zi * zi);
            axpy(grad.weight.row_mut(r), dpre, t);
            grad.bias[r] += dpre;
        }
        loss
    }

    pub fn loss(&self, t: &[f64], rows: &[usize], gold: usize) -> f64 {
        softmax_ce(&self.scores(t, rows), gold).0
    }
}

impl HeadParams for FrameIdHead {
    fn parameters(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }
    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameChoice {
    pub frame_id: String,
    /// Candidate frames in id order with their softmax probability.
    pub distribution: Vec<(String, f64)>,
}

/// Scores each candidate frame with `tanh(W t + b)` and normalizes with a
/// softmax over the candidates only. Ties go to the smallest frame id.
pub fn identify_frame(t: &[f64], candidates: &[&str], head: &FrameIdHead) -> Result<FrameChoice, ParserError> {
    if candidates.is_empty() {
        return Err(ParserError::Argument("no candidate frames".into()));
    }
    if t.len() != head.dim() {
        return Err(ParserError::Config(format!(
            "target vector has dimension {}, frame head expects {}",
            t.len(),
            head.dim()
        )));
    }
    let mut ids: Vec<&str> = candidates.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let rows = ids
        .iter()
        .map(|id| {
            head.row_of(id)
                .ok_or_else(|| ParserError::Config(format!("frame '{id}' has no row in the frame head")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let probs = softmax(&head.scores(t, &rows));
    let best = argmax(&probs);
    Ok(FrameChoice {
        frame_id: ids[best].to_string(),
        distribution: ids.iter().map(|s| s.to_string()).zip(probs).collect(),
    })
}

// ---------------------------------------------------------------------------
// Argument identification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioLabel {
    B,
    I,
    O,
}

impl BioLabel {
    pub const ALL: [BioLabel; 3] = [BioLabel::B, BioLabel::I, BioLabel::O];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioHead {
    /// Rows in label order B, I, O.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl BioHead {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(3, dim),
            bias: vec![0.0; 3],
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn scores(&self, h: &[f64]) -> Vec<f64> {
        (0..3)
            .map(|r| (dot(self.weight.row(r), h) + self.bias[r]).tanh())
            .collect()
    }

    pub fn predict(&self, h: &[f64]) -> BioLabel {
        BioLabel::ALL[argmax(&self.scores(h))]
    }

    pub fn loss_and_grad(&self, h: &[f64], gold: BioLabel, grad: &mut Self) -> f64 {
        let z = self.scores(h);
        let (loss, dz) = softmax_ce(&z, gold.index());
        for r in 0..3 {
            let dpre = dz[r] * (1.0 - z[r] * z[r]);
            axpy(grad.weight.row_mut(r), dpre, h);
            grad.bias[r] += dpre;
        }
        loss
    }

    pub fn loss(&self, h: &[f64], gold: BioLabel) -> f64 {
        softmax_ce(&self.scores(h), gold.index()).0
    }
}

impl HeadParams for BioHead {
    fn parameters(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }
    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

/// Decodes labels into half-open spans. An `I` with no open span starts a
/// new one.
pub fn decode_bio(labels: &[BioLabel]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (j, &l) in labels.iter().enumerate() {
        match l {
            BioLabel::B => {
                if let Some(s) = open.take() {
                    spans.push((s, j));
                }
                open = Some(j);
            }
            BioLabel::I => {
                if open.is_none() {
                    open = Some(j);
                }
            }
            BioLabel::O => {
                if let Some(s) = open.take() {
                    spans.push((s, j));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, labels.len()));
    }
    spans
}

/// Encodes non-overlapping spans as a label sequence of length `len`.
pub fn encode_bio(spans: &[(usize, usize)], len: usize) -> Vec<BioLabel> {
    let mut labels = vec![BioLabel::O; len];
    for &(s, e) in spans {
        for (k, l) in labels[s..e].iter_mut().enumerate() {
            *l = if k == 0 { BioLabel::B } else { BioLabel::I };
        }
    }
    labels
}

/// Per-symbol argmax labels, with marker symbols forced to `O`.
pub fn predict_bio_labels(emb: &[Vec<f64>], is_marker: &[bool], head: &BioHead) -> Vec<BioLabel> {
    emb.iter()
        .zip(is_marker)
        .map(|(h, &m)| if m { BioLabel::O } else { head.predict(h) })
        .collect()
}

/// Marker positions of a frame-extended symbol sequence built from `marked`.
pub fn marker_positions(marked: &MarkedInput, len: usize) -> Vec<bool> {
    (0..len).map(|j| marked.token_of_symbol(j).is_none()).collect()
}

/// Labels every symbol and decodes argument spans (in symbol positions).
pub fn identify_arguments(emb: &[Vec<f64>], marked: &MarkedInput, head: &BioHead) -> Vec<(usize, usize)> {
    let markers = marker_positions(marked, emb.len());
    decode_bio(&predict_bio_labels(emb, &markers, head))
}

// ---------------------------------------------------------------------------
// Frame-element classification

pub const DEFAULT_FE_HIDDEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeHead {
    /// Row order of `w2`/`b2`; sorted by FE id.
    pub fe_ids: Vec<String>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl FeHead {
    pub fn zeros(mut fe_ids: Vec<String>, dim: usize, hidden: usize) -> Self {
        fe_ids.sort();
        fe_ids.dedup();
        let n = fe_ids.len();
        Self {
            fe_ids,
            w1: Matrix::zeros(hidden, dim),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(n, hidden),
            b2: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn row_of(&self, fe_id: &str) -> Option<usize> {
        self.fe_ids.binary_search_by(|f| f.as_str().cmp(fe_id)).ok()
    }

    fn hidden_pre(&self, r: &[f64]) -> Vec<f64> {
        let mut u = self.w1.matvec(r);
        for (ui, bi) in u.iter_mut().zip(&self.b1) {
            *ui += bi;
        }
        u
    }

    /// Logits `W2 relu(W1 r + b1) + b2` for the requested rows.
    pub fn logits(&self, r: &[f64], rows: &[usize]) -> Vec<f64> {
        let a: Vec<f64> = self.hidden_pre(r).into_iter().map(|u| u.max(0.0)).collect();
        rows.iter().map(|&k| dot(self.w2.row(k), &a) + self.b2[k]).collect()
    }

    pub fn loss_and_grad(&self, r: &[f64], rows: &[usize], gold: usize, grad: &mut Self) -> f64 {
        let u = self.hidden_pre(r);
        let a: Vec<f64> = u.iter().map(|&x| x.max(0.0)).collect();
        let z: Vec<f64> = rows.iter().map(|&k| dot(self.w2.row(k), &a) + self.b2[k]).collect();
        let (loss, dz) = softmax_ce(&z, gold);
        let mut da = vec![0.0; a.len()];
        for (&k, &dzk) in rows.iter().zip(&dz) {
            axpy(grad.w2.row_mut(k), dzk, &a);
            grad.b2[k] += dzk;
            axpy(&mut da, dzk, self.w2.row(k));
        }
        let du: Vec<f64> = da
            .iter()
            .zip(&u)
            .map(|(&d, &ui)| if ui > 0.0 { d } else { 0.0 })
            .collect();
        grad.w1.add_outer(1.0, &du, r);
        for (g, d) in grad.b1.iter_mut().zip(&du) {
            *g += d;
        }
        loss
    }

    pub fn loss(&self, r: &[f64], rows: &[usize], gold: usize) -> f64 {
        softmax_ce(&self.logits(r, rows), gold).0
    }
}

impl HeadParams for FeHead {
    fn parameters(&self) -> Vec<&[f64]> {
        vec![self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }
    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }
}

/// Argument representation: scale each span vector by `1/c` (c = span
/// length), then take the element-wise max.
pub fn argument_representation(span_vectors: &[Vec<f64>]) -> Result<Vec<f64>, ParserError> {
    let first = span_vectors
        .first()
        .ok_or_else(|| ParserError::Argument("empty argument span".into()))?;
    let scale = 1.0 / span_vectors.len() as f64;
    let mut out: Vec<f64> = first.iter().map(|x| x * scale).collect();
    for v in &span_vectors[1..] {
        for (o, x) in out.iter_mut().zip(v) {
            *o = o.max(x * scale);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeChoice {
    pub fe_id: String,
    pub score: f64,
    /// The frame's FEs in id order with their probability.
    pub distribution: Vec<(String, f64)>,
}

/// Head rows for the FEs owned by `frame_id`, sorted by FE id.
pub fn frame_fe_rows(frame_id: &str, head: &FeHead, lex: &FrameLexicon) -> Result<Vec<(String, usize)>, ParserError> {
    let frame = lex
        .frame(frame_id)
        .ok_or_else(|| ParserError::Config(format!("unknown frame '{frame_id}'")))?;
    if frame.fe_ids.is_empty() {
        return Err(ParserError::Domain(format!(
            "frame-has-no-fes: frame '{}' owns no frame elements",
            frame.name
        )));
    }
    let mut ids: Vec<&String> = frame.fe_ids.iter().collect();
    ids.sort();
    ids.into_iter()
        .map(|id| {
            head.row_of(id)
                .map(|r| (id.clone(), r))
                .ok_or_else(|| ParserError::Config(format!("frame element '{id}' has no row in the FE head")))
        })
        .collect()
}

/// Classifies the argument at symbol span `[start, end)` among the FEs of
/// `frame_id`. Ties go to the smallest FE id.
pub fn classify_fe(
    emb: &[Vec<f64>],
    span: (usize, usize),
    frame_id: &str,
    head: &FeHead,
    lex: &FrameLexicon,
) -> Result<FeChoice, ParserError> {
    let (start, end) = span;
    if !(start < end && end <= emb.len()) {
        return Err(ParserError::Argument(format!(
            "argument span [{start}, {end}) invalid for {} symbols",
            emb.len()
        )));
    }
    let rows = frame_fe_rows(frame_id, head, lex)?;
    let r = argument_representation(&emb[start..end])?;
    if r.len() != head.dim() {
        return Err(ParserError::Config(format!(
            "argument vector has dimension {}, FE head expects {}",
            r.len(),
            head.dim()
        )));
    }
    let idx: Vec<usize> = rows.iter().map(|(_, r)| *r).collect();
    let probs = softmax(&head.logits(&r, &idx));
    let best = argmax(&probs);
    Ok(FeChoice {
        fe_id: rows[best].0.clone(),
        score: probs[best],
        distribution: rows.into_iter().map(|(id, _)| id).zip(probs).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Frame, FrameElement};

    #[test]
    fn single_candidate_is_certain() {
        let head = FrameIdHead::zeros(vec!["F_Travel".into()], 2);
        let c = identify_frame(&[0.3, 0.1], &["F_Travel"], &head).unwrap();
        assert_eq!(c.frame_id, "F_Travel");
        assert_eq!(c.distribution, vec![("F_Travel".to_string(), 1.0)]);
    }

    #[test]
    fn zero_head_is_uniform_and_picks_lowest_id() {
        let head = FrameIdHead::zeros(vec!["F_c".into(), "F_a".into(), "F_b".into()], 4);
        let c = identify_frame(&[1.0, 2.0, 3.0, 4.0], &["F_c", "F_b", "F_a"], &head).unwrap();
        assert_eq!(c.frame_id, "F_a");
        for (_, p) in &c.distribution {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crafted_head_prefers_travel() {
        // row(Travel) . t = 2, row(Motion) . t = 0, zero bias.
        let mut head = FrameIdHead::zeros(vec!["Motion".into(), "Travel".into()], 2);
        head.weight.row_mut(1).copy_from_slice(&[2.0, 0.0]);
        let c = identify_frame(&[1.0, 0.0], &["Travel", "Motion"], &head).unwrap();
        assert_eq!(c.frame_id, "Travel");
        // softmax([tanh 0, tanh 2]) computed by hand: tanh 2 = 0.96403,
        // e^0.96403 / (1 + e^0.96403) = 0.72394.
        let t2 = 2f64.tanh();
        let expected_travel = t2.exp() / (1.0 + t2.exp());
        assert!((c.distribution[1].1 - expected_travel).abs() < 1e-12);
        assert!((c.distribution[1].1 - 0.7239).abs() < 1e-3);
        assert!((c.distribution[0].1 - 0.2761).abs() < 1e-3);
    }

    #[test]
    fn unknown_frame_is_config_error() {
        let head = FrameIdHead::zeros(vec!["A".into()], 2);
        assert!(matches!(
            identify_frame(&[0.0, 0.0], &["B"], &head),
            Err(ParserError::Config(_))
        ));
    }

    #[test]
    fn bio_decoding_cases() {
        use BioLabel::*;
        assert_eq!(decode_bio(&[O, B, I, O]), vec![(1, 3)]);
        assert_eq!(decode_bio(&[O, I, I, O]), vec![(1, 3)]);
        assert_eq!(decode_bio(&[O, O, O]), vec![]);
        assert_eq!(decode_bio(&[B, B, I]), vec![(0, 1), (1, 3)]);
        assert_eq!(decode_bio(&[I, O, I]), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn markers_are_forced_outside() {
        // A head that labels everything B.
        let mut head = BioHead::zeros(2);
        head.bias = vec![1.0, 0.0, 0.0];
        let emb = vec![vec![0.0, 0.0]; 4];
        let labels = predict_bio_labels(&emb, &[true, false, false, true], &head);
        assert_eq!(labels, vec![BioLabel::O, BioLabel::B, BioLabel::B, BioLabel::O]);
    }

    #[test]
    fn argument_representation_hand_values() {
        let r = argument_representation(&[vec![1.0, 4.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(r, vec![1.5, 2.0]);
        let single = argument_representation(&[vec![0.25, -1.0]]).unwrap();
        assert_eq!(single, vec![0.25, -1.0]);
    }

    fn travel_lex() -> FrameLexicon {
        let fe = |id: &str, name: &str| FrameElement {
            id: id.into(),
            name: name.into(),
            frame_id: "F_Travel".into(),
            definition: String::new(),
        };
        FrameLexicon::from_parts(
            vec![
                Frame {
                    id: "F_Travel".into(),
                    name: "Travel".into(),
                    definition: String::new(),
                    fe_ids: vec!["FE_1_Traveler".into(), "FE_2_Goal".into(), "FE_3_Time".into()],
                    relations: vec![],
                },
                Frame {
                    id: "F_Empty".into(),
                    name: "Empty".into(),
                    definition: String::new(),
                    fe_ids: vec![],
                    relations: vec![],
                },
            ],
            vec![
                fe("FE_1_Traveler", "Traveler"),
                fe("FE_2_Goal", "Goal"),
                fe("FE_3_Time", "Time"),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn zero_fe_head_is_uniform_and_picks_lowest_id() {
        let lex = travel_lex();
        let ids = lex.frame_elements().map(|f| f.id.clone()).collect();
        let head = FeHead::zeros(ids, 2, 8);
        let emb = vec![vec![0.5, 0.5], vec![1.0, -1.0]];
        let c = classify_fe(&emb, (0, 2), "F_Travel", &head, &lex).unwrap();
        assert_eq!(c.fe_id, "FE_1_Traveler");
        assert!((c.score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn frame_without_fes_is_domain_error() {
        let lex = travel_lex();
        let head = FeHead::zeros(vec!["FE_1_Traveler".into()], 2, 4);
        let emb = vec![vec![0.5, 0.5]];
        let err = classify_fe(&emb, (0, 1), "F_Empty", &head, &lex).unwrap_err();
        assert!(err.to_string().contains("frame-has-no-fes"));
    }
}
