//! Text encoders producing unit-norm vectors.
//!
//! Two providers: a remote embeddings endpoint and an offline signed feature
//! hasher over character n-grams.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backends::http::{HttpClient, RetryPolicy};
use crate::error::{Error, Result};
use crate::types::{Example, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Remote,
    FeatureHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub ngram_range: (usize, usize),
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self::feature_hash(64)
    }
}

impl EncoderSpec {
    pub fn feature_hash(dimension: usize) -> Self {
        Self {
            kind: EncoderKind::FeatureHash,
            dimension,
            endpoint: None,
            model_name: None,
            api_key_env: None,
            ngram_range: (2, 4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("encoder dimension must be > 0".into()));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid ngram_range ({lo}, {hi})")));
        }
        if self.kind == EncoderKind::Remote && (self.endpoint.is_none() || self.model_name.is_none()) {
            return Err(Error::Config(
                "remote encoder needs `endpoint` and `model_name`".into(),
            ));
        }
        Ok(())
    }
}

pub trait Encoder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop()
            .ok_or_else(|| Error::MalformedResponse("encoder returned no vector".into()))
    }
}

/// Text layout used to embed one graded instance.
pub fn instance_text(example: &Example, prediction: &Prediction) -> String {
    format!(
        "Q: {}\nA: {}\nR: {}",
        example.query, example.answer, prediction.raw_output
    )
}

pub fn embed_instance(
    example: &Example,
    prediction: &Prediction,
    encoder: &dyn Encoder,
) -> Result<Vec<f64>> {
    if prediction.example_id != example.id {
        return Err(Error::invalid(format!(
            "prediction for `{}` paired with example `{}`",
            prediction.example_id, example.id
        )));
    }
    encoder.embed_text(&instance_text(example, prediction))
}

/// Scales `v` to unit Euclidean norm in place. Returns false for a zero vector.
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Signed hashing of character n-grams into `dimension` buckets.
///
/// Bucket is `fnv1a64(ngram) % dimension`, sign is the top hash bit. Text too
/// short for any n-gram in range is hashed whole so the output stays unit norm.
#[derive(Debug, Clone)]
pub struct FeatureHashEncoder {
    dimension: usize,
    ngram_range: (usize, usize),
}

impl FeatureHashEncoder {
    pub fn new(dimension: usize, ngram_range: (usize, usize)) -> Result<Self> {
        EncoderSpec {
            ngram_range,
            ..EncoderSpec::feature_hash(dimension)
        }
        .validate()?;
        Ok(Self {
            dimension,
            ngram_range,
        })
    }

    fn add(&self, v: &mut [f64], gram: &str) {
        let h = fnv1a64(gram.as_bytes());
        let bucket = (h % self.dimension as u64) as usize;
        v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let bounds: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let chars = bounds.len() - 1;
        let (lo, hi) = self.ngram_range;
        for n in lo..=hi {
            if n > chars {
                break;
            }
            for start in 0..=chars - n {
                self.add(&mut v, &text[bounds[start]..bounds[start + n]]);
            }
        }
        if !l2_normalize(&mut v) {
            // no n-grams, or every count cancelled out
            v.iter_mut().for_each(|x| *x = 0.0);
            self.add(&mut v, text);
            l2_normalize(&mut v);
        }
        v
    }
}

impl Encoder for FeatureHashEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Client for an embeddings endpoint taking `{model, input[]}`.
pub struct RemoteEncoder {
    http: HttpClient,
    endpoint: String,
    model: String,
    dimension: usize,
}

impl RemoteEncoder {
    pub fn new(spec: &EncoderSpec, retry: RetryPolicy) -> Result<Self> {
        spec.validate()?;
        let api_key = spec
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        Ok(Self {
            http: HttpClient::new(api_key, retry, Duration::from_secs(60))?,
            endpoint: spec.endpoint.clone().unwrap_or_default(),
            model: spec.model_name.clone().unwrap_or_default(),
            dimension: spec.dimension,
        })
    }
}

impl Encoder for RemoteEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = EmbeddingRequest {
            model: &self.model,
            input: texts,
        };
        let reply: EmbeddingResponse = self.http.post_json(&self.endpoint, &body)?;
        if reply.data.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                reply.data.len()
            )));
        }
        let mut data = reply.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        data.into_iter()
            .map(|d| {
                let mut v = d.embedding;
                if v.len() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        got: v.len(),
                    });
                }
                if !l2_normalize(&mut v) {
                    return Err(Error::MalformedResponse("zero embedding vector".into()));
                }
                Ok(v)
            })
            .collect()
    }
}

/// In-memory memoization around another encoder.
pub struct CachedEncoder<E> {
    inner: E,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl<E: Encoder> CachedEncoder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl<E: Encoder> Encoder for CachedEncoder<E> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("embedding cache poisoned");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .filter(|t| !cache.contains_key(*t) && seen.insert(t.as_str()))
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            let mut cache = self.cache.lock().expect("embedding cache poisoned");
            for (text, v) in missing.into_iter().zip(fresh) {
                cache.insert(text, v);
            }
        }
        let cache = self.cache.lock().expect("embedding cache poisoned");
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }
}

pub fn build_encoder(spec: &EncoderSpec, retry: RetryPolicy) -> Result<Box<dyn Encoder>> {
    Ok(match spec.kind {
        EncoderKind::FeatureHash => Box::new(CachedEncoder::new(FeatureHashEncoder::new(
            spec.dimension,
            spec.ngram_range,
        )?)),
        EncoderKind::Remote => Box::new(CachedEncoder::new(RemoteEncoder::new(spec, retry)?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent reference hasher: byte-at-a-time FNV over `Vec<char>` windows.
    fn reference(text: &str, d: usize, lo: usize, hi: usize) -> Vec<f64> {
        let chars: Vec<char> = text.chars().collect();
        let mut v = vec![0.0f64; d];
        for n in lo..=hi {
            for w in chars.windows(n) {
                let s: String = w.iter().collect();
                let mut h: u64 = 14695981039346656037;
                for b in s.bytes() {
                    h = (h ^ b as u64).wrapping_mul(1099511628211);
                }
                let sign = if h & (1 << 63) != 0 { -1.0 } else { 1.0 };
                v[(h % d as u64) as usize] += sign;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn enc() -> FeatureHashEncoder {
        FeatureHashEncoder::new(64, (2, 4)).unwrap()
    }

    #[test]
    fn matches_reference_hasher() {
        for text in ["Q: a\nA: b\nR: c", "héllo wörld", "the quick brown fox"] {
            let ours = enc().embed(text);
            let theirs = reference(text, 64, 2, 4);
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn differing_response_changes_vector() {
        let a = reference("Q: a\nA: b\nR: c", 64, 2, 4);
        let b = reference("Q: a\nA: b\nR: d", 64, 2, 4);
        assert!(cosine(&a, &b) < 1.0);
        let ours = cosine(&enc().embed("Q: a\nA: b\nR: c"), &enc().embed("Q: a\nA: b\nR: d"));
        assert!(ours < 1.0);
        assert!((ours - cosine(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn disjoint_ngrams_are_orthogonal() {
        // "ab" and "xy" share no n-grams and land in different buckets under
        // the reference hasher.
        let (a, b) = ("ab", "xy");
        let ra = reference(a, 64, 2, 4);
        let rb = reference(b, 64, 2, 4);
        assert_eq!(cosine(&ra, &rb), 0.0);
        assert!(cosine(&enc().embed(a), &enc().embed(b)).abs() < 1e-9);
    }

    #[test]
    fn instance_layout_and_id_check() {
        let ex = Example::new("1", "q", "a");
        let pred = Prediction {
            example_id: "1".into(),
            raw_output: "r".into(),
            extracted_answer: "r".into(),
            correct: false,
            score: 0.0,
        };
        assert_eq!(instance_text(&ex, &pred), "Q: q\nA: a\nR: r");
        let v1 = embed_instance(&ex, &pred, &enc()).unwrap();
        let v2 = embed_instance(&ex, &pred, &enc()).unwrap();
        assert_eq!(v1, v2);
        let other = Prediction { example_id: "2".into(), ..pred };
        assert!(embed_instance(&ex, &other, &enc()).is_err());
    }

    #[test]
    fn short_text_still_unit_norm() {
        let v = enc().embed("x");
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
        assert!(enc().embed_text("").is_err());
    }

    #[test]
    fn cache_is_transparent() {
        let cached = CachedEncoder::new(enc());
        let texts = vec!["alpha".to_string(), "beta".into(), "alpha".into()];
        let a = cached.embed_batch(&texts).unwrap();
        let b = enc().embed_batch(&texts).unwrap();
        assert_eq!(a, b);
        assert_eq!(cached.embed_batch(&texts).unwrap(), b);
    }

    proptest! {
        #[test]
        fn unit_norm_and_batch_equals_elementwise(texts in prop::collection::vec(".{1,40}", 1..6)) {
            let e = enc();
            let batch = e.embed_batch(&texts).unwrap();
            for (t, v) in texts.iter().zip(&batch) {
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-9);
                prop_assert_eq!(v, &e.embed_text(t).unwrap());
            }
        }
    }
}
