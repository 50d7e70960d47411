use crate::error::{ProbeError, Result};
use crate::tensor_io::FeatureMatrix;

/// Linear interpolation of every dimension onto `target_frames` evenly spaced
/// points spanning the same interval. Endpoints are kept exactly and the
/// frame rate is scaled by `target_frames / frames`.
pub fn resample_linear(track: &FeatureMatrix, target_frames: usize) -> Result<FeatureMatrix> {
    let frames = track.frames();
    if frames < 2 {
        return Err(ProbeError::Validation(format!(
            "resampling needs at least 2 source frames, got {frames}"
        )));
    }
    if target_frames < 2 {
        return Err(ProbeError::Validation(format!(
            "resampling needs at least 2 target frames, got {target_frames}"
        )));
    }
    let dim = track.dim();
    let mut data = Vec::with_capacity(target_frames * dim);
    for j in 0..target_frames {
        if j == target_frames - 1 {
            data.extend_from_slice(track.row(frames - 1));
            continue;
        }
        let pos = (j * (frames - 1)) as f64 / (target_frames - 1) as f64;
        let i0 = (pos.floor() as usize).min(frames - 2);
        let frac = pos - i0 as f64;
        let (a, b) = (track.row(i0), track.row(i0 + 1));
        data.extend(a.iter().zip(b).map(|(&a, &b)| {
            let (a, b) = (f64::from(a), f64::from(b));
            (a + (b - a) * frac) as f32
        }));
    }
    let rate = track.frame_rate_hz() * target_frames as f64 / frames as f64;
    FeatureMatrix::new(data, target_frames, dim, rate)
}
