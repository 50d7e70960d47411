//! Synthetic corpora with planted phonetic/semantic geometry.
//!
//! Words related by an edge (near-homophone or synonym) are placed at a fixed
//! radius from one another; unrelated words get independent Gaussian centres.
//! Frame features are `base(word) + offset(speaker) + noise`, quantized by a
//! freshly trained RVQ codec and emitted as an accumulated layer stack.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rvq_decode_all_depths, rvq_encode, rvq_train, RvqCodec, DEFAULT_KMEANS_ITERS};
use crate::alignment::WordSegment;
use crate::error::{ProbeError, Result};
use crate::lexicon::{normalized_levenshtein, PronLexicon, SynonymTable};
use crate::tensor_io::{FeatureMatrix, LayerStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    /// Near-homophones closer than synonyms (`r_p < r_s`).
    Phonetic,
    /// Synonyms closer than near-homophones (`r_s < r_p`).
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub dominance: Dominance,
    /// Distance between near-homophone embeddings.
    pub r_p: f64,
    /// Distance between synonym embeddings.
    pub r_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSpec {
    pub layers: usize,
    pub k: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
}

fn default_iters() -> usize {
    DEFAULT_KMEANS_ITERS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordSpec {
    pub word: String,
    pub phonemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    pub frame_rate_hz: f64,
    pub frames_per_word: usize,
    pub speakers: usize,
    pub occurrences_per_speaker: usize,
    /// Std of the per-coordinate Gaussian for unrelated word centres.
    pub center_scale: f64,
    pub speaker_scale: f64,
    pub noise_scale: f64,
    #[serde(default = "default_threshold")]
    pub homophone_threshold: f64,
    pub geometry: GeometrySpec,
    pub codec: CodecSpec,
    pub words: Vec<WordSpec>,
    #[serde(default)]
    pub synonyms: Vec<(String, String)>,
}

fn default_threshold() -> f64 {
    0.4
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ProbeError::spec("", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if self.dim == 0 {
            return Err(ProbeError::spec("/dim", "must be positive"));
        }
        if !positive(self.frame_rate_hz) {
            return Err(ProbeError::spec("/frame_rate_hz", "must be positive"));
        }
        if self.frames_per_word == 0 {
            return Err(ProbeError::spec("/frames_per_word", "must be positive"));
        }
        if self.speakers == 0 {
            return Err(ProbeError::spec("/speakers", "must be positive"));
        }
        if self.occurrences_per_speaker == 0 {
            return Err(ProbeError::spec("/occurrences_per_speaker", "must be positive"));
        }
        for (name, v) in [
            ("center_scale", self.center_scale),
            ("speaker_scale", self.speaker_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !non_negative(v) {
                return Err(ProbeError::spec(format!("/{name}"), "must be non-negative"));
            }
        }
        if !(self.homophone_threshold > 0.0 && self.homophone_threshold < 1.0) {
            return Err(ProbeError::spec("/homophone_threshold", "must lie in (0, 1)"));
        }

        let g = &self.geometry;
        if !positive(g.r_p) {
            return Err(ProbeError::spec("/geometry/r_p", "must be positive"));
        }
        if !positive(g.r_s) {
            return Err(ProbeError::spec("/geometry/r_s", "must be positive"));
        }
        match g.dominance {
            Dominance::Phonetic if g.r_s <= g.r_p => {
                return Err(ProbeError::spec(
                    "/geometry",
                    format!("phonetic dominance requires r_s > r_p (r_s={}, r_p={})", g.r_s, g.r_p),
                ))
            }
            Dominance::Semantic if g.r_p <= g.r_s => {
                return Err(ProbeError::spec(
                    "/geometry",
                    format!("semantic dominance requires r_p > r_s (r_p={}, r_s={})", g.r_p, g.r_s),
                ))
            }
            _ => {}
        }

        if self.codec.layers == 0 {
            return Err(ProbeError::spec("/codec/layers", "must be positive"));
        }
        if self.codec.k == 0 {
            return Err(ProbeError::spec("/codec/k", "must be positive"));
        }
        if self.codec.iters == 0 {
            return Err(ProbeError::spec("/codec/iters", "must be positive"));
        }
        if self.codec.k > self.total_frames() {
            return Err(ProbeError::spec(
                "/codec/k",
                format!(
                    "k={} exceeds the {} generated frames",
                    self.codec.k,
                    self.total_frames()
                ),
            ));
        }

        if self.words.is_empty() {
            return Err(ProbeError::spec("/words", "at least one word is required"));
        }
        let mut seen = BTreeMap::new();
        for (i, w) in self.words.iter().enumerate() {
            let key = w.word.to_uppercase();
            if key.is_empty() || key.contains(char::is_whitespace) || key.contains(',') {
                return Err(ProbeError::spec(format!("/words/{i}/word"), "invalid word"));
            }
            if w.phonemes.is_empty()
                || w.phonemes
                    .iter()
                    .any(|p| p.trim().is_empty() || p.contains(char::is_whitespace))
            {
                return Err(ProbeError::spec(format!("/words/{i}/phonemes"), "invalid phoneme list"));
            }
            if seen.insert(key, i).is_some() {
                return Err(ProbeError::spec(format!("/words/{i}/word"), "duplicate word"));
            }
        }
        for (i, (a, b)) in self.synonyms.iter().enumerate() {
            for (j, w) in [a, b].into_iter().enumerate() {
                if !seen.contains_key(&w.to_uppercase()) {
                    return Err(ProbeError::spec(
                        format!("/synonyms/{i}/{j}"),
                        format!("unknown word {w:?}"),
                    ));
                }
            }
            if a.eq_ignore_ascii_case(b) {
                return Err(ProbeError::spec(format!("/synonyms/{i}"), "self-pair"));
            }
        }
        Ok(())
    }

    fn total_frames(&self) -> usize {
        self.words.len() * self.speakers * self.occurrences_per_speaker * self.frames_per_word
    }
}

/// Everything generated for one synthetic run.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub stack: LayerStack,
    pub segments: Vec<WordSegment>,
    pub lexicon: PronLexicon,
    pub synonyms: SynonymTable,
    pub codec: RvqCodec,
    /// Planted word embeddings, uppercase word to vector (f32-representable).
    pub base_embeddings: BTreeMap<String, Vec<f64>>,
    /// Unquantized frame features.
    pub frames: FeatureMatrix,
}

pub const SYNTH_SOURCE_ID: &str = "synth";

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn to_f32_grid(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = f64::from(*x as f32));
}

/// Generates a synthetic corpus; fully deterministic given `(spec, seed)`.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dim;
    let words: Vec<String> = spec.words.iter().map(|w| w.word.to_uppercase()).collect();
    let n_words = words.len();

    let mut lexicon = PronLexicon::default();
    for (w, ws) in words.iter().zip(&spec.words) {
        let pron = ws
            .phonemes
            .iter()
            .map(|p| p.trim_end_matches(|c: char| c.is_ascii_digit()).to_string())
            .collect();
        lexicon.insert(w, pron)?;
    }
    let mut synonyms = SynonymTable::default();
    for (a, b) in &spec.synonyms {
        synonyms.insert(a, b);
    }

    // Relation graph: homophone edges take precedence over synonym edges.
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_words];
    for i in 0..n_words {
        for j in i + 1..n_words {
            let pi = &lexicon.lookup(&words[i]).unwrap()[0];
            let pj = &lexicon.lookup(&words[j]).unwrap()[0];
            let radius = if normalized_levenshtein(pi, pj)? < spec.homophone_threshold {
                Some(spec.geometry.r_p)
            } else if synonyms.contains(&words[i], &words[j]) {
                Some(spec.geometry.r_s)
            } else {
                None
            };
            if let Some(r) = radius {
                edges[i].push((j, r));
                edges[j].push((i, r));
            }
        }
    }

    let mut base: Vec<Option<Vec<f64>>> = vec![None; n_words];
    for root in 0..n_words {
        if base[root].is_some() {
            continue;
        }
        let mut centre = gaussian_vec(&mut rng, dim, spec.center_scale);
        to_f32_grid(&mut centre);
        base[root] = Some(centre);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, radius) in &edges[u] {
                if base[v].is_none() {
                    let dir = unit_vec(&mut rng, dim);
                    let parent = base[u].as_ref().unwrap();
                    let mut child: Vec<f64> = parent.iter().zip(&dir).map(|(p, d)| p + radius * d).collect();
                    to_f32_grid(&mut child);
                    base[v] = Some(child);
                    queue.push_back(v);
                }
            }
        }
    }
    let base: Vec<Vec<f64>> = base.into_iter().map(Option::unwrap).collect();

    let speakers: Vec<String> = (0..spec.speakers).map(|s| format!("spk{:02}", s + 1)).collect();
    let offsets: Vec<Vec<f64>> = (0..spec.speakers)
        .map(|_| gaussian_vec(&mut rng, dim, spec.speaker_scale))
        .collect();

    let total = spec.total_frames();
    let mut frame_data = Vec::with_capacity(total * dim);
    let mut segments = Vec::with_capacity(total / spec.frames_per_word);
    let rate = spec.frame_rate_hz;
    let mut frame = 0usize;
    for (s, speaker) in speakers.iter().enumerate() {
        for _ in 0..spec.occurrences_per_speaker {
            for (w, word) in words.iter().enumerate() {
                segments.push(WordSegment {
                    utterance_id: SYNTH_SOURCE_ID.into(),
                    word: word.clone(),
                    start_s: frame as f64 / rate,
                    end_s: (frame + spec.frames_per_word) as f64 / rate,
                    speaker_id: speaker.clone(),
                });
                for _ in 0..spec.frames_per_word {
                    for d in 0..dim {
                        let noise = if spec.noise_scale > 0.0 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            spec.noise_scale * z
                        } else {
                            0.0
                        };
                        let v = base[w][d] + offsets[s][d] + noise;
                        frame_data.push(f64::from(v as f32));
                    }
                    frame += 1;
                }
            }
        }
    }

    let codec = rvq_train(
        &frame_data,
        dim,
        spec.codec.layers,
        spec.codec.k,
        spec.codec.iters,
        seed ^ 0x5EED_C0DE,
    )?;

    let mut layer_data: Vec<Vec<f32>> = vec![Vec::with_capacity(total * dim); spec.codec.layers];
    for x in frame_data.chunks_exact(dim) {
        let codes = rvq_encode(&codec, x)?;
        for (layer, acc) in rvq_decode_all_depths(&codec, &codes)?.into_iter().enumerate() {
            layer_data[layer].extend(acc.iter().map(|&v| v as f32));
        }
    }
    let layers = layer_data
        .into_iter()
        .map(|d| FeatureMatrix::new(d, total, dim, rate))
        .collect::<Result<Vec<_>>>()?;
    let stack = LayerStack::new(SYNTH_SOURCE_ID, layers)?;
    let frames = FeatureMatrix::new(frame_data.iter().map(|&v| v as f32).collect(), total, dim, rate)?;

    Ok(SynthCorpus {
        stack,
        segments,
        lexicon,
        synonyms,
        codec,
        base_embeddings: words.into_iter().zip(base).collect(),
        frames,
    })
}
