/// Dimension of [`HashEmbedder`] vectors.
pub const EMBEDDING_DIM: usize = 1024;

/// Deterministic bag-of-words embedding used offline.
///
/// Text is lower-cased and split into maximal alphanumeric runs. Each token
/// is hashed with 64-bit FNV-1a and counted in bucket `hash % EMBEDDING_DIM`;
/// the count vector is L2-normalised. Cosine similarity between two
/// embeddings is therefore the cosine of their token-count vectors, up to
/// hash collisions. Empty text maps to the zero vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; EMBEDDING_DIM];
        for token in tokens(text) {
            v[bucket(&token)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn bucket(token: &str) -> usize {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let hash = token
        .bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME));
    (hash % EMBEDDING_DIM as u64) as usize
}

/// Cosine similarity; 0 when either vector has zero norm or the
/// dimensions differ.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f32 {
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_text_has_unit_similarity() {
        let e = HashEmbedder;
        let a = e.embed("Summarize the article in plain English");
        assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_tokens_have_zero_similarity() {
        let e = HashEmbedder;
        let a = e.embed("translate speech");
        let b = e.embed("count words");
        assert_eq!(cosine_similarity(&a, &b), 0.0);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashEmbedder;
        let z = e.embed("  ...  ");
        assert!(z.iter().all(|x| *x == 0.0));
        assert_eq!(cosine_similarity(&z, &e.embed("hello")), 0.0);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let e = HashEmbedder;
        assert_eq!(e.embed("Hello, World!"), e.embed("hello world"));
    }

    proptest! {
        #[test]
        fn similarity_is_bounded_and_symmetric(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
            let e = HashEmbedder;
            let (va, vb) = (e.embed(&a), e.embed(&b));
            let s = cosine_similarity(&va, &vb);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, cosine_similarity(&vb, &va));
        }
    }
}
