use super::ParserError;

/// Maps a symbol sequence to one `dim`-vector per symbol.
///
/// Implementations must be pure: equal input gives equal output.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, symbols: &[String]) -> Vec<Vec<f64>>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// splitmix64 step: advances `state` and returns the next output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stand-in for a pretrained encoder. Each symbol's vector is
/// drawn from splitmix64 seeded with `fnv1a64(symbol) ^ position`, then
/// normalized to unit length. Output is bit-identical across platforms.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
}

impl HashEncoder {
    pub fn new(dim: usize) -> Result<Self, ParserError> {
        if dim < 2 {
            return Err(ParserError::Argument(format!(
                "encoder dimension must be at least 2, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    pub fn symbol_vector(&self, symbol: &str, position: usize) -> Vec<f64> {
        let mut state = fnv1a64(symbol.as_bytes()) ^ position as u64;
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| {
                let bits = splitmix64(&mut state) >> 11;
                (bits as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v[0] = 1.0;
        }
        v
    }
}

impl Encoder for HashEncoder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, symbols: &[String]) -> Vec<Vec<f64>> {
        symbols
            .iter()
            .enumerate()
            .map(|(i, s)| self.symbol_vector(s, i))
            .collect()
    }
}

/// Sentence representation: the class-marker vector, unchanged.
pub fn sentence_embedding(emb: &[Vec<f64>]) -> Result<&[f64], ParserError> {
    emb.first()
        .map(Vec::as_slice)
        .ok_or_else(|| ParserError::Argument("empty embedding sequence".into()))
}

/// Average of the vectors at mask-1 positions.
pub fn target_embedding(emb: &[Vec<f64>], mask: &[u8]) -> Result<Vec<f64>, ParserError> {
    if emb.len() != mask.len() {
        return Err(ParserError::Argument(format!(
            "embedding length {} does not match mask length {}",
            emb.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m != 0).count();
    if count == 0 {
        return Err(ParserError::Argument("target mask is all zeros".into()));
    }
    let dim = emb[0].len();
    let mut acc = vec![0.0; dim];
    for (v, _) in emb.iter().zip(mask).filter(|(_, &m)| m != 0) {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_values() {
        // Reference sequence for seed 0 from the original splitmix64.c.
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xe220a8397b1dcdaf);
        assert_eq!(splitmix64(&mut s), 0x6e789e6aa1b965f4);
    }

    #[test]
    fn rejects_tiny_dim() {
        assert!(HashEncoder::new(1).is_err());
    }

    #[test]
    fn encoding_is_deterministic_and_unit_norm() {
        let enc = HashEncoder::new(16).unwrap();
        let syms: Vec<String> = ["[CLS]", "听说", "[T]", "旅行", "[T]", "[SEP]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let a = enc.encode(&syms);
        let b = enc.encode(&syms);
        assert_eq!(a, b);
        assert_eq!(a.len(), syms.len());
        for v in &a {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn distinct_symbols_at_same_position_differ() {
        let enc = HashEncoder::new(8).unwrap();
        let mut seen = HashSet::new();
        for i in 0..10_000 {
            let v = enc.symbol_vector(&format!("sym{i}"), 5);
            let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision at sym{i}");
        }
    }

    #[test]
    fn sentence_embedding_is_first_vector() {
        let emb = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(sentence_embedding(&emb).unwrap(), &[1.0, 0.0]);
        assert!(sentence_embedding(&[]).is_err());
    }

    #[test]
    fn target_embedding_hand_values() {
        let emb = vec![vec![2.0, 0.0], vec![0.0, 2.0], vec![4.0, 4.0]];
        assert_eq!(target_embedding(&emb, &[0, 1, 1]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(target_embedding(&emb, &[1, 0, 0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(target_embedding(&emb, &[1, 1, 1]).unwrap(), vec![2.0, 2.0]);
        assert!(target_embedding(&emb, &[0, 0, 0]).is_err());
        assert!(target_embedding(&emb, &[1, 0]).is_err());
    }
}
