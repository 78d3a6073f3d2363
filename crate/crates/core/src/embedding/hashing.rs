use sha2::{Digest, Sha256};

use super::{EmbedError, EmbedRequest, EmbeddingProvider, InputUnit};

/// Deterministic pseudo-embedder: every lower-cased alphanumeric token is
/// hashed into a few signed buckets of a fixed-size vector, which is then
/// scaled to unit length. Texts sharing tokens get positive cosine.
///
/// Not a language model. It exists so the whole pipeline runs and tests
/// reproducibly without network access.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    id: String,
    dimension: usize,
    seed: u64,
    max_input_length: Option<usize>,
}

/// Buckets each token contributes to.
const SLOTS_PER_TOKEN: usize = 2;

impl HashingEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashingEmbedder {
            id: format!("hash-d{dimension}-s{seed}"),
            dimension,
            seed,
            max_input_length: None,
        }
    }

    /// Limit in whitespace-separated words.
    pub fn with_max_input_length(mut self, words: usize) -> Self {
        self.max_input_length = Some(words);
        self
    }

    pub fn vector_for(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            let mut hasher = Sha256::new();
            hasher.update(self.seed.to_le_bytes());
            hasher.update(token.as_bytes());
            let digest = hasher.finalize();
            for slot in 0..SLOTS_PER_TOKEN {
                let chunk: [u8; 8] = digest[slot * 8..slot * 8 + 8].try_into().unwrap();
                let h = u64::from_le_bytes(chunk);
                let bucket = (h % self.dimension as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_input_length(&self) -> Option<usize> {
        self.max_input_length
    }

    fn input_unit(&self) -> InputUnit {
        InputUnit::Words
    }

    fn embed_batch(&self, requests: &[EmbedRequest<'_>]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(requests.iter().map(|r| self.vector_for(r.text)).collect())
    }
}
