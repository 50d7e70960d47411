//! The three probing protocols and their reports.

mod report;

pub use report::{format_sig9, read_report, report_bytes, round_sig9, write_report, ReportFormat};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{pool_word_feature, segment_to_frames, WordSegment};
use crate::error::{ProbeError, Result};
use crate::lexicon::{PairConfig, PairSets, Setting};
use crate::metrics::{
    cka_permutation_delta, normalize_against_random, pair_distance_stats, pwcca, resample_linear, CcaParams, CkaResult,
    PairDistanceStats, PooledFeatures, DEFAULT_PERMUTATIONS,
};
use crate::tensor_io::{FeatureMatrix, LayerStack};

/// Any report this crate produces. Serialized with a leading `"kind"` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Distance(DistanceReport),
    Pwcca(PwccaReport),
    Cka(CkaReport),
}

// ---------------------------------------------------------------------------
// Word-pair distance probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMetadata {
    pub pooling: String,
    pub distance: String,
    pub normalization: String,
    pub homophone_threshold: Option<f64>,
    pub seed: Option<u64>,
    pub max_pairs_per_setting: Option<usize>,
    pub excluded_words: Option<usize>,
    pub pair_counts: BTreeMap<Setting, usize>,
    pub empty_settings: Vec<Setting>,
    pub num_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub metadata: DistanceMetadata,
    pub raw: Vec<PairDistanceStats>,
    pub normalized: Vec<PairDistanceStats>,
}

impl DistanceReport {
    pub fn raw_mean(&self, setting: Setting, layer: usize) -> Option<f64> {
        find(&self.raw, setting, layer)
    }

    pub fn normalized_mean(&self, setting: Setting, layer: usize) -> Option<f64> {
        find(&self.normalized, setting, layer)
    }
}

fn find(rows: &[PairDistanceStats], setting: Setting, layer: usize) -> Option<f64> {
    rows.iter()
        .find(|r| r.setting == setting && r.layer == layer)
        .map(|r| r.mean)
}

/// Provenance recorded in a distance report when the pairs were built here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceProvenance {
    pub pair_config: Option<PairConfig>,
}

/// Pools every paired segment in every layer, then reports per-setting
/// distance statistics, raw and normalized against the random setting.
///
/// Segments are resolved to the stack whose `source_id` equals their
/// `utterance_id`.
pub fn run_distance_probe(
    stacks: &[LayerStack],
    segments: &[WordSegment],
    pairs: &PairSets,
    provenance: &DistanceProvenance,
) -> Result<DistanceReport> {
    let num_layers = stacks
        .first()
        .ok_or_else(|| ProbeError::Validation("no layer stacks".into()))?
        .num_layers();
    if let Some(s) = stacks.iter().find(|s| s.num_layers() != num_layers) {
        return Err(ProbeError::Consistency(format!(
            "stack {} has {} layers, expected {num_layers}",
            s.source_id,
            s.num_layers()
        )));
    }
    let by_id: BTreeMap<&str, &LayerStack> = stacks.iter().map(|s| (s.source_id.as_str(), s)).collect();

    let mut referenced: Vec<usize> = pairs
        .sets
        .values()
        .flat_map(|s| s.pairs.iter().flat_map(|&(a, b)| [a, b]))
        .collect();
    referenced.sort_unstable();
    referenced.dedup();

    let pooled: Vec<(usize, Vec<Vec<f64>>)> = referenced
        .par_iter()
        .map(|&i| {
            let seg = segments
                .get(i)
                .ok_or_else(|| ProbeError::Consistency(format!("pair references missing segment {i}")))?;
            let stack = by_id.get(seg.utterance_id.as_str()).ok_or_else(|| {
                ProbeError::Consistency(format!(
                    "no feature stack for utterance {} (word {})",
                    seg.utterance_id, seg.word
                ))
            })?;
            let per_layer = stack
                .layers()
                .iter()
                .map(|layer| {
                    let range = segment_to_frames(seg, layer.frame_rate_hz(), layer.frames())?;
                    pool_word_feature(layer, range)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| {
                    ProbeError::Range(format!(
                        "utterance {} word {} [{}, {}]: {e}",
                        seg.utterance_id, seg.word, seg.start_s, seg.end_s
                    ))
                })?;
            Ok((i, per_layer))
        })
        .collect::<Result<_>>()?;

    let mut features = PooledFeatures::new(num_layers);
    for (i, per_layer) in pooled {
        features.insert(i, segments[i].label(), per_layer)?;
    }

    let raw = pair_distance_stats(&features, &pairs.sets)?;
    let normalized = normalize_against_random(&raw)?;
    let pair_config = provenance.pair_config.as_ref();
    Ok(DistanceReport {
        metadata: DistanceMetadata {
            pooling: "mean".into(),
            distance: "euclidean".into(),
            normalization: "subtract_random_mean".into(),
            homophone_threshold: pair_config.map(|c| c.homophone_threshold),
            seed: pair_config.map(|c| c.random_seed),
            max_pairs_per_setting: pair_config.map(|c| c.max_pairs_per_setting),
            excluded_words: pair_config.map(|_| pairs.excluded_words),
            pair_counts: pairs.sets.iter().map(|(k, v)| (*k, v.pairs.len())).collect(),
            empty_settings: pairs.empty_settings(),
            num_layers,
        },
        raw,
        normalized,
    })
}

// ---------------------------------------------------------------------------
// Articulatory (VTD) probe

/// Vocal-tract distance track: one column per gridline, non-negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct VtdTrack {
    pub matrix: FeatureMatrix,
    pub speaker_id: String,
}

pub const REFERENCE_GRIDLINES: usize = 120;
pub const REFERENCE_VTD_RATE_HZ: f64 = 83.0;

impl VtdTrack {
    pub fn new(matrix: FeatureMatrix, speaker_id: impl Into<String>) -> Result<Self> {
        if let Some(i) = matrix.data().iter().position(|&v| v < 0.0) {
            return Err(ProbeError::Validation(format!(
                "VTD values must be non-negative; index {i} is {}",
                matrix.data()[i]
            )));
        }
        Ok(Self {
            matrix,
            speaker_id: speaker_id.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleDirection {
    None,
    VtdToCodec,
    CodecToVtd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Flat,
    NonIncreasing,
    NonDecreasing,
    Mixed,
}

impl Trend {
    pub fn of(values: &[f64]) -> Self {
        let down = values.windows(2).all(|w| w[1] <= w[0]);
        let up = values.windows(2).all(|w| w[1] >= w[0]);
        match (down, up) {
            (true, true) => Trend::Flat,
            (true, false) => Trend::NonIncreasing,
            (false, true) => Trend::NonDecreasing,
            (false, false) => Trend::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VtdConfig {
    pub cca: CcaParams,
    /// Also record pwcca(vtd, codec).
    pub both_directions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwccaMetadata {
    pub var_keep: f64,
    pub eps: f64,
    /// Which argument the projection weights come from.
    pub weighting: String,
    pub resampling: String,
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerPwcca {
    pub speaker_id: String,
    pub source_id: String,
    pub codec_frames: usize,
    pub vtd_frames: usize,
    pub resample_direction: ResampleDirection,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwccaLayer {
    pub layer: usize,
    pub pwcca: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pwcca_reverse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwccaReport {
    pub metadata: PwccaMetadata,
    /// Mean over speakers, per layer.
    pub layers: Vec<PwccaLayer>,
    pub trend: Trend,
    pub speakers: Vec<SpeakerPwcca>,
}

impl PwccaReport {
    pub fn scores(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.pwcca).collect()
    }
}

fn speaker_pwcca(stack: &LayerStack, vtd: &VtdTrack, config: &VtdConfig) -> Result<SpeakerPwcca> {
    let codec_frames = stack.frames();
    let vtd_frames = vtd.matrix.frames();
    let (direction, target) = match codec_frames.cmp(&vtd_frames) {
        std::cmp::Ordering::Equal => (ResampleDirection::None, codec_frames),
        std::cmp::Ordering::Greater => (ResampleDirection::VtdToCodec, codec_frames),
        std::cmp::Ordering::Less => (ResampleDirection::CodecToVtd, vtd_frames),
    };

    let (codec_span, vtd_span) = (stack.layers()[0].duration_s(), vtd.matrix.duration_s());
    let mismatch = (codec_span - vtd_span).abs() * target as f64 / codec_span.max(vtd_span);
    if mismatch > 1.0 {
        return Err(ProbeError::Consistency(format!(
            "speaker {}: codec span {codec_span:.3} s and VTD span {vtd_span:.3} s differ by {mismatch:.2} frames",
            vtd.speaker_id
        )));
    }

    let vtd_matrix = match direction {
        ResampleDirection::VtdToCodec => resample_linear(&vtd.matrix, target)?,
        _ => vtd.matrix.clone(),
    }
    .to_dmatrix();

    let mut scores = Vec::with_capacity(stack.num_layers());
    let mut reverse = config.both_directions.then(Vec::new);
    for layer in stack.layers() {
        let codec: DMatrix<f64> = match direction {
            ResampleDirection::CodecToVtd => resample_linear(layer, target)?.to_dmatrix(),
            _ => layer.to_dmatrix(),
        };
        scores.push(pwcca(&codec, &vtd_matrix, config.cca)?);
        if let Some(rev) = reverse.as_mut() {
            rev.push(pwcca(&vtd_matrix, &codec, config.cca)?);
        }
    }
    Ok(SpeakerPwcca {
        speaker_id: vtd.speaker_id.clone(),
        source_id: stack.source_id.clone(),
        codec_frames,
        vtd_frames,
        resample_direction: direction,
        scores,
        reverse_scores: reverse,
    })
}

/// Per-layer PWCCA between accumulated codec features (weighting side) and a VTD track.
pub fn run_vtd_probe(stack: &LayerStack, vtd: &VtdTrack, config: &VtdConfig) -> Result<PwccaReport> {
    run_vtd_probe_speakers(&[(stack.clone(), vtd.clone())], config)
}

/// Scores each (stack, track) unit separately and averages the per-layer
/// scores over units.
pub fn run_vtd_probe_speakers(units: &[(LayerStack, VtdTrack)], config: &VtdConfig) -> Result<PwccaReport> {
    let first = units
        .first()
        .ok_or_else(|| ProbeError::Validation("no (stack, VTD) units".into()))?;
    let num_layers = first.0.num_layers();
    if let Some((s, _)) = units.iter().find(|(s, _)| s.num_layers() != num_layers) {
        return Err(ProbeError::Consistency(format!(
            "stack {} has {} layers, expected {num_layers}",
            s.source_id,
            s.num_layers()
        )));
    }
    let speakers: Vec<SpeakerPwcca> = units
        .par_iter()
        .map(|(stack, vtd)| speaker_pwcca(stack, vtd, config))
        .collect::<Result<_>>()?;

    let n = speakers.len() as f64;
    let layers: Vec<PwccaLayer> = (0..num_layers)
        .map(|l| PwccaLayer {
            layer: l + 1,
            pwcca: speakers.iter().map(|s| s.scores[l]).sum::<f64>() / n,
            pwcca_reverse: config.both_directions.then(|| {
                speakers
                    .iter()
                    .map(|s| s.reverse_scores.as_ref().unwrap()[l])
                    .sum::<f64>()
                    / n
            }),
        })
        .collect();
    let trend = Trend::of(&layers.iter().map(|l| l.pwcca).collect::<Vec<_>>());
    Ok(PwccaReport {
        metadata: PwccaMetadata {
            var_keep: config.cca.var_keep,
            eps: config.cca.eps,
            weighting: "codec_first".into(),
            resampling: "linear_shorter_to_longer".into(),
            aggregation: "mean_over_speakers".into(),
        },
        layers,
        trend,
        speakers,
    })
}

// ---------------------------------------------------------------------------
// Cross-modal CKA probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub source: String,
    pub rows: usize,
    pub dim: usize,
}

impl FeatureDescriptor {
    pub fn of(source: impl Into<String>, m: &DMatrix<f64>) -> Self {
        Self {
            source: source.into(),
            rows: m.nrows(),
            dim: m.ncols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaReport {
    pub speech: FeatureDescriptor,
    pub text: FeatureDescriptor,
    pub result: CkaResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CkaConfig {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CkaConfig {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
        }
    }
}

/// CKA between row-paired speech and text features, with the permutation baseline.
pub fn run_cka_probe(
    speech: &DMatrix<f64>,
    text: &DMatrix<f64>,
    descriptors: (FeatureDescriptor, FeatureDescriptor),
    config: &CkaConfig,
) -> Result<CkaReport> {
    if speech.nrows() != text.nrows() {
        return Err(ProbeError::Validation(format!(
            "row-count mismatch: speech has {} rows, text has {}",
            speech.nrows(),
            text.nrows()
        )));
    }
    let result = cka_permutation_delta(speech, text, config.permutations, config.seed)?;
    Ok(CkaReport {
        speech: descriptors.0,
        text: descriptors.1,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::PairSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn stack_of(layers: Vec<FeatureMatrix>) -> LayerStack {
        LayerStack::new("u1", layers).unwrap()
    }

    fn seg(word: &str, start: f64, end: f64) -> WordSegment {
        WordSegment {
            utterance_id: "u1".into(),
            word: word.into(),
            start_s: start,
            end_s: end,
            speaker_id: "s".into(),
        }
    }

    fn pairs(random: Vec<(usize, usize)>, synonym: Vec<(usize, usize)>) -> PairSets {
        let mut sets = BTreeMap::new();
        sets.insert(
            Setting::Random,
            PairSet {
                setting: Setting::Random,
                candidates: random.len(),
                pairs: random,
            },
        );
        sets.insert(
            Setting::Synonym,
            PairSet {
                setting: Setting::Synonym,
                candidates: synonym.len(),
                pairs: synonym,
            },
        );
        PairSets {
            sets,
            excluded_words: 0,
            excluded_segments: 0,
        }
    }

    #[test]
    fn single_layer_stack_has_one_row_per_setting() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![6.0]], 1.0).unwrap();
        let segs = vec![
            seg("A", 0.0, 1.0),
            seg("B", 1.0, 2.0),
            seg("C", 2.0, 3.0),
            seg("D", 3.0, 4.0),
        ];
        let report = run_distance_probe(
            &[stack_of(vec![m])],
            &segs,
            &pairs(vec![(0, 2), (1, 3)], vec![(0, 1)]),
            &DistanceProvenance::default(),
        )
        .unwrap();
        assert_eq!(report.raw.len(), 2);
        assert_eq!(report.raw_mean(Setting::Random, 1), Some(4.0));
        assert_eq!(report.raw_mean(Setting::Synonym, 1), Some(1.0));
        assert_eq!(report.normalized_mean(Setting::Synonym, 1), Some(-3.0));
        assert_eq!(report.normalized_mean(Setting::Random, 1), Some(0.0));
        assert_eq!(report.metadata.seed, None);
    }

    #[test]
    fn out_of_range_segment_names_utterance_and_word() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], 1.0).unwrap();
        let segs = vec![seg("A", 0.0, 1.0), seg("LATE", 9.0, 10.0)];
        let err = run_distance_probe(
            &[stack_of(vec![m])],
            &segs,
            &pairs(vec![(0, 1)], vec![]),
            &DistanceProvenance::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("u1") && msg.contains("LATE"), "{msg}");
    }

    #[test]
    fn unknown_utterance_is_consistency_error() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], 1.0).unwrap();
        let mut segs = vec![seg("A", 0.0, 1.0), seg("B", 1.0, 2.0)];
        segs[1].utterance_id = "u9".into();
        assert!(matches!(
            run_distance_probe(
                &[stack_of(vec![m])],
                &segs,
                &pairs(vec![(0, 1)], vec![]),
                &DistanceProvenance::default()
            ),
            Err(ProbeError::Consistency(_))
        ));
    }

    fn noise(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    fn nonneg(m: &DMatrix<f64>, rate: f64) -> FeatureMatrix {
        FeatureMatrix::from_dmatrix(&m.map(|v| v.abs() + 0.1), rate).unwrap()
    }

    #[test]
    fn vtd_equal_to_layer_scores_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = nonneg(&noise(200, 6, &mut rng), 12.5);
        let other = FeatureMatrix::from_dmatrix(&noise(200, 6, &mut rng), 12.5).unwrap();
        let stack = stack_of(vec![base.clone(), other]);
        let vtd = VtdTrack::new(base, "spk").unwrap();
        let report = run_vtd_probe(&stack, &vtd, &VtdConfig::default()).unwrap();
        assert!((report.layers[0].pwcca - 1.0).abs() < 1e-8);
        assert!(report.layers[1].pwcca < 0.5);
        assert_eq!(report.speakers[0].resample_direction, ResampleDirection::None);
        assert!(report.scores().iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn vtd_is_upsampled_to_codec_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // 8 s at 83 Hz vs 8 s at 100 Hz.
        let vtd = VtdTrack::new(nonneg(&noise(664, 5, &mut rng), 83.0), "s").unwrap();
        let codec = FeatureMatrix::from_dmatrix(&noise(800, 4, &mut rng), 100.0).unwrap();
        let report = run_vtd_probe(
            &stack_of(vec![codec]),
            &vtd,
            &VtdConfig {
                both_directions: true,
                ..VtdConfig::default()
            },
        )
        .unwrap();
        assert_eq!(report.speakers[0].resample_direction, ResampleDirection::VtdToCodec);
        assert!(report.layers[0].pwcca_reverse.is_some());
    }

    #[test]
    fn codec_is_upsampled_to_vtd_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vtd = VtdTrack::new(nonneg(&noise(830, 5, &mut rng), 83.0), "s").unwrap();
        let codec = FeatureMatrix::from_dmatrix(&noise(125, 4, &mut rng), 12.5).unwrap();
        let report = run_vtd_probe(&stack_of(vec![codec]), &vtd, &VtdConfig::default()).unwrap();
        assert_eq!(report.speakers[0].resample_direction, ResampleDirection::CodecToVtd);
    }

    #[test]
    fn span_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vtd = VtdTrack::new(nonneg(&noise(830, 5, &mut rng), 83.0), "s").unwrap();
        let codec = FeatureMatrix::from_dmatrix(&noise(100, 4, &mut rng), 12.5).unwrap();
        assert!(matches!(
            run_vtd_probe(&stack_of(vec![codec]), &vtd, &VtdConfig::default()),
            Err(ProbeError::Consistency(_))
        ));
    }

    #[test]
    fn negative_vtd_rejected() {
        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![-1.0]], 83.0).unwrap();
        assert!(VtdTrack::new(m, "s").is_err());
    }

    #[test]
    fn trend_classification() {
        assert_eq!(Trend::of(&[0.9, 0.8, 0.8]), Trend::NonIncreasing);
        assert_eq!(Trend::of(&[0.1, 0.2]), Trend::NonDecreasing);
        assert_eq!(Trend::of(&[0.5]), Trend::Flat);
        assert_eq!(Trend::of(&[0.5, 0.1, 0.3]), Trend::Mixed);
    }

    #[test]
    fn cka_probe_identity_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = noise(60, 4, &mut rng);
        let d = (FeatureDescriptor::of("s", &x), FeatureDescriptor::of("t", &x));
        let r = run_cka_probe(&x, &x, d.clone(), &CkaConfig::default()).unwrap();
        assert!((r.result.cka - 1.0).abs() < 1e-12);
        let y = noise(59, 4, &mut rng);
        let err = run_cka_probe(&x, &y, d, &CkaConfig::default()).unwrap_err();
        assert!(err.to_string().contains("row-count mismatch"));
    }
}
