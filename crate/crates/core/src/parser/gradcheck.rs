//! Finite-difference check of the heads' analytic gradients.

use rand::Rng;

use super::heads::{argument_representation, BioHead, BioLabel, FeHead, FrameIdHead, HeadParams};
use super::train::{bio_sequence_loss_and_grad, fe_items_loss_and_grad, FeItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Frame,
    Bio,
    Fe,
}

/// A head together with one training example for it.
#[derive(Debug, Clone)]
pub enum GradExample {
    Frame {
        head: FrameIdHead,
        target_vector: Vec<f64>,
        rows: Vec<usize>,
        gold: usize,
    },
    Bio {
        head: BioHead,
        vectors: Vec<Vec<f64>>,
        gold: Vec<BioLabel>,
    },
    Fe {
        head: FeHead,
        items: Vec<FeItem>,
    },
}

impl GradExample {
    pub fn kind(&self) -> HeadKind {
        match self {
            GradExample::Frame { .. } => HeadKind::Frame,
            GradExample::Bio { .. } => HeadKind::Bio,
            GradExample::Fe { .. } => HeadKind::Fe,
        }
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Central-difference check of `loss_and_grad`: perturbs each parameter by
/// `±epsilon` and returns the max relative error against the analytic
/// gradient.
fn check<H, L, G>(head: &H, epsilon: f64, loss: L, grad_of: G) -> f64
where
    H: HeadParams + Clone,
    L: Fn(&H) -> f64,
    G: Fn(&H) -> H,
{
    let analytic = grad_of(head);
    let grads: Vec<Vec<f64>> = analytic.parameters().iter().map(|p| p.to_vec()).collect();
    let mut probe = head.clone();
    let mut worst = 0.0f64;
    for (block, g) in grads.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = probe.parameters()[block][i];
            probe.parameters_mut()[block][i] = orig + epsilon;
            let plus = loss(&probe);
            probe.parameters_mut()[block][i] = orig - epsilon;
            let minus = loss(&probe);
            probe.parameters_mut()[block][i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}

/// Max relative error between analytic and central-difference gradients of
/// the example's cross-entropy loss, over every head parameter.
pub fn analytic_gradient_check(example: &GradExample, epsilon: f64) -> f64 {
    assert!(epsilon > 0.0 && epsilon <= 1e-2, "epsilon must be in (0, 1e-2]");
    match example {
        GradExample::Frame {
            head,
            target_vector,
            rows,
            gold,
        } => check(
            head,
            epsilon,
            |h| h.loss(target_vector, rows, *gold),
            |h| {
                let mut g = h.clone();
                g.scale_all(0.0);
                h.loss_and_grad(target_vector, rows, *gold, &mut g);
                g
            },
        ),
        GradExample::Bio { head, vectors, gold } => check(
            head,
            epsilon,
            |h| {
                let mut scratch = BioHead::zeros(h.dim());
                bio_sequence_loss_and_grad(h, vectors, gold, &mut scratch)
            },
            |h| {
                let mut g = BioHead::zeros(h.dim());
                bio_sequence_loss_and_grad(h, vectors, gold, &mut g);
                g
            },
        ),
        GradExample::Fe { head, items } => check(
            head,
            epsilon,
            |h| {
                items
                    .iter()
                    .map(|it| h.loss(&it.representation, &it.rows, it.gold))
                    .sum::<f64>()
                    / items.len() as f64
            },
            |h| {
                let mut g = h.clone();
                g.scale_all(0.0);
                fe_items_loss_and_grad(h, items, &mut g);
                g
            },
        ),
    }
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

/// Random head and example of the requested kind. FE examples keep every
/// hidden pre-activation at least 0.01 away from the relu kink.
pub fn random_example<R: Rng>(kind: HeadKind, rng: &mut R, dim: usize) -> GradExample {
    match kind {
        HeadKind::Frame => {
            let n = rng.gen_range(2..6);
            let mut head = FrameIdHead::zeros((0..n).map(|i| format!("F{i:02}")).collect(), dim);
            head.fill_uniform(rng, 1.0);
            let mut rows: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
            if rows.is_empty() {
                rows.push(rng.gen_range(0..n));
            }
            let gold = rng.gen_range(0..rows.len());
            GradExample::Frame {
                head,
                target_vector: unit_vector(rng, dim),
                rows,
                gold,
            }
        }
        HeadKind::Bio => {
            let mut head = BioHead::zeros(dim);
            head.fill_uniform(rng, 1.0);
            let len = rng.gen_range(1..8);
            GradExample::Bio {
                head,
                vectors: (0..len).map(|_| unit_vector(rng, dim)).collect(),
                gold: (0..len).map(|_| BioLabel::ALL[rng.gen_range(0..3)]).collect(),
            }
        }
        HeadKind::Fe => {
            let n = rng.gen_range(2..6);
            let hidden = 16;
            let mut head = FeHead::zeros((0..n).map(|i| format!("FE{i:02}")).collect(), dim, hidden);
            head.fill_uniform(rng, 1.0);
            let mut items = Vec::new();
            for _ in 0..rng.gen_range(1..4) {
                let span: Vec<Vec<f64>> = (0..rng.gen_range(1..4)).map(|_| unit_vector(rng, dim)).collect();
                let representation = argument_representation(&span).expect("non-empty span");
                let mut rows: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
                if rows.is_empty() {
                    rows.push(0);
                }
                let gold = rng.gen_range(0..rows.len());
                items.push(FeItem {
                    representation,
                    rows,
                    gold,
                });
            }
            keep_away_from_kinks(&mut head, &items, 0.01);
            GradExample::Fe { head, items }
        }
    }
}

fn keep_away_from_kinks(head: &mut FeHead, items: &[FeItem], margin: f64) {
    for _ in 0..100 {
        let mut moved = false;
        for it in items {
            let pre = head.w1.matvec(&it.representation);
            for (i, p) in pre.iter().enumerate() {
                let u = p + head.b1[i];
                if u.abs() < margin {
                    head.b1[i] += if u >= 0.0 { 2.0 * margin } else { -2.0 * margin };
                    moved = true;
                }
            }
        }
        if !moved {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frame_head_random_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex = random_example(HeadKind::Frame, &mut rng, 6);
        assert!(analytic_gradient_check(&ex, 1e-5) < 1e-4);
    }

    #[test]
    fn zero_head_at_uniform_point() {
        let head = FrameIdHead::zeros(vec!["a".into(), "b".into(), "c".into()], 3);
        let ex = GradExample::Frame {
            head,
            target_vector: vec![0.2, -0.4, 0.9],
            rows: vec![0, 1, 2],
            gold: 1,
        };
        assert!(analytic_gradient_check(&ex, 1e-5) < 1e-4);
    }

    #[test]
    fn fe_head_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ex = random_example(HeadKind::Fe, &mut rng, 5);
        assert_eq!(ex.kind(), HeadKind::Fe);
        assert!(analytic_gradient_check(&ex, 1e-5) < 1e-4);
    }

    #[test]
    fn bio_head_random_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = random_example(HeadKind::Bio, &mut rng, 4);
        assert!(analytic_gradient_check(&ex, 1e-5) < 1e-4);
    }

    #[test]
    fn a_wrong_gradient_is_detected() {
        // Sanity check of the checker itself: flip the sign of the analytic
        // gradient and the error must be large.
        let head = FrameIdHead::zeros(vec!["a".into(), "b".into()], 2);
        let err = check(
            &head,
            1e-5,
            |h| h.loss(&[0.5, 0.5], &[0, 1], 0),
            |h| {
                let mut g = h.clone();
                h.loss_and_grad(&[0.5, 0.5], &[0, 1], 0, &mut g);
                g.scale_all(-1.0);
                g
            },
        );
        assert!(err > 1.0);
    }
}
