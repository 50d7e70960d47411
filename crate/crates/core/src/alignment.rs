//! Word-level time alignments: CSV ingestion, frame ranges and pooling.

use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::tensor_io::FeatureMatrix;

pub const SEGMENTS_HEADER: [&str; 5] = ["utterance_id", "word", "start_s", "end_s", "speaker_id"];

/// One aligned word occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSegment {
    pub utterance_id: String,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker_id: String,
}

impl WordSegment {
    pub fn validate(&self) -> Result<()> {
        if self.word.is_empty() {
            return Err(ProbeError::Validation("empty word".into()));
        }
        if !(self.start_s.is_finite() && self.start_s >= 0.0) {
            return Err(ProbeError::Validation(format!(
                "start_s must be non-negative, got {}",
                self.start_s
            )));
        }
        if !(self.end_s.is_finite() && self.end_s > self.start_s) {
            return Err(ProbeError::Validation(format!(
                "end_s {} must exceed start_s {}",
                self.end_s, self.start_s
            )));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn label(&self) -> String {
        format!("{}:{}@{}-{}", self.utterance_id, self.word, self.start_s, self.end_s)
    }
}

/// Parses the segments CSV (`utterance_id,word,start_s,end_s,speaker_id`).
/// Row numbers in errors are file line numbers (the header is line 1).
pub fn parse_segments_csv(text: &str) -> Result<Vec<WordSegment>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ProbeError::parse(1, e.to_string()))?
        .clone();
    if headers.iter().ne(SEGMENTS_HEADER) {
        return Err(ProbeError::parse(
            1,
            format!("expected header {:?}", SEGMENTS_HEADER.join(",")),
        ));
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ProbeError::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let time = |idx: usize, name: &str| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .map_err(|_| ProbeError::parse(line, format!("non-numeric {name} {:?}", &record[idx])))
        };
        let segment = WordSegment {
            utterance_id: record[0].to_string(),
            word: record[1].to_uppercase(),
            start_s: time(2, "start_s")?,
            end_s: time(3, "end_s")?,
            speaker_id: record[4].to_string(),
        };
        segment
            .validate()
            .map_err(|e| ProbeError::Validation(format!("row {line}: {e}")))?;
        out.push(segment);
    }
    Ok(out)
}

pub fn write_segments_csv(segments: &[WordSegment]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(SEGMENTS_HEADER).unwrap();
    for s in segments {
        writer
            .write_record([
                s.utterance_id.as_str(),
                s.word.as_str(),
                &s.start_s.to_string(),
                &s.end_s.to_string(),
                s.speaker_id.as_str(),
            ])
            .unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

/// Inclusive frame range `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRange {
    pub first: usize,
    pub last: usize,
}

impl FrameRange {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

// Products within this distance of an integer are snapped to it, so that
// timestamps on a 10 ms grid map onto frame boundaries without round-off.
const SNAP: f64 = 1e-9;

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r
    } else {
        x
    }
}

/// Maps a segment onto frames: `first = floor(start * rate)`,
/// `last = min(ceil(end * rate) - 1, total - 1)`, clamped so `last >= first`.
pub fn segment_to_frames(segment: &WordSegment, frame_rate_hz: f64, total_frames: usize) -> Result<FrameRange> {
    if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
        return Err(ProbeError::Validation(format!(
            "frame rate must be positive, got {frame_rate_hz}"
        )));
    }
    let first = snap(segment.start_s * frame_rate_hz).floor().max(0.0) as usize;
    if first >= total_frames {
        return Err(ProbeError::Range(format!(
            "segment {} ({}) starts at frame {first} but features have {total_frames} frames",
            segment.utterance_id, segment.word
        )));
    }
    let end_frame = snap(segment.end_s * frame_rate_hz).ceil() as i64 - 1;
    let last = end_frame.clamp(first as i64, total_frames as i64 - 1) as usize;
    Ok(FrameRange { first, last })
}

/// Mean of the rows in `range`, per dimension.
pub fn pool_word_feature(matrix: &FeatureMatrix, range: FrameRange) -> Result<Vec<f64>> {
    if range.last >= matrix.frames() || range.first > range.last {
        return Err(ProbeError::Range(format!(
            "frame range [{}, {}] outside matrix of {} frames",
            range.first,
            range.last,
            matrix.frames()
        )));
    }
    let mut acc = vec![0.0f64; matrix.dim()];
    for frame in range.first..=range.last {
        for (a, &v) in acc.iter_mut().zip(matrix.row(frame)) {
            *a += f64::from(v);
        }
    }
    let n = range.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}
