//! Splitting a frame stream into scoring segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ConfusionNetwork;

/// Contiguous cover of `0..total` by non-empty half-open frame spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentBoundaries {
    pub spans: Vec<(usize, usize)>,
}

impl SegmentBoundaries {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.spans.last().map_or(0, |s| s.1)
    }

    /// Checks sortedness, contiguity and non-emptiness against `total` frames.
    pub fn validate(&self, total: usize) -> Result<()> {
        let mut expected_start = 0;
        for &(start, end) in &self.spans {
            if start != expected_start || end <= start {
                return Err(Error::Config(format!(
                    "span ({start}, {end}) breaks the contiguous cover at frame {expected_start}"
                )));
            }
            expected_start = end;
        }
        if expected_start != total {
            return Err(Error::Config(format!(
                "spans cover {expected_start} of {total} frames"
            )));
        }
        Ok(())
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans.iter().map(|(s, e)| e - s)
    }

    /// Median span length in frames (lower median for even counts).
    pub fn median_length(&self) -> Option<usize> {
        let mut lens: Vec<usize> = self.lengths().collect();
        if lens.is_empty() {
            return None;
        }
        lens.sort_unstable();
        Some(lens[(lens.len() - 1) / 2])
    }
}

/// Whole number of frames closest to `seconds`, at least one.
pub fn frames_for_seconds(seconds: f64, frame_duration: f64) -> usize {
    ((seconds / frame_duration).round() as usize).max(1)
}

/// Equal windows of `frames_per_segment`; a shorter remainder becomes its own final span.
pub fn segment_fixed(total_frames: usize, frames_per_segment: usize) -> Result<SegmentBoundaries> {
    if frames_per_segment == 0 {
        return Err(Error::Config("frames_per_segment must be >= 1".into()));
    }
    let spans = (0..total_frames)
        .step_by(frames_per_segment)
        .map(|start| (start, (start + frames_per_segment).min(total_frames)))
        .collect();
    Ok(SegmentBoundaries { spans })
}

/// Silence-driven segmentation on blank posteriors.
///
/// A boundary follows every run of at least `min_silence_frames` frames whose
/// blank probability exceeds `silence_threshold`. Spans reaching
/// `max_segment_frames` are cut there regardless.
pub fn segment_vad(
    blank_probs: &[f64],
    silence_threshold: f64,
    min_silence_frames: usize,
    max_segment_frames: usize,
) -> Result<SegmentBoundaries> {
    if min_silence_frames == 0 || max_segment_frames == 0 {
        return Err(Error::Config(
            "min_silence_frames and max_segment_frames must be >= 1".into(),
        ));
    }
    if silence_threshold.is_nan() || silence_threshold < 0.0 {
        return Err(Error::Config(format!(
            "silence_threshold must be >= 0, got {silence_threshold}"
        )));
    }
    let n = blank_probs.len();
    let silent = |i: usize| blank_probs[i] > silence_threshold;
    let mut spans = Vec::new();
    let mut start = 0;
    let mut run = 0;
    for i in 0..n {
        run = if silent(i) { run + 1 } else { 0 };
        let end = i + 1;
        let run_closes = run >= min_silence_frames && (end == n || !silent(end));
        if run_closes || end - start == max_segment_frames {
            spans.push((start, end));
            start = end;
        }
    }
    if start < n {
        spans.push((start, n));
    }
    Ok(SegmentBoundaries { spans })
}

/// Segmenter choice with its parameters in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segmenter {
    Fixed {
        segment_seconds: f64,
    },
    Vad {
        threshold: f64,
        min_silence_seconds: f64,
        max_segment_seconds: f64,
    },
}

impl Segmenter {
    pub const DEFAULT_SEGMENT_SECONDS: f64 = 8.0;
    pub const DEFAULT_VAD_THRESHOLD: f64 = 0.9;
    pub const DEFAULT_VAD_MIN_SILENCE_SECONDS: f64 = 0.3;
    pub const DEFAULT_MAX_SEGMENT_SECONDS: f64 = 30.0;

    pub fn fixed(segment_seconds: f64) -> Self {
        Segmenter::Fixed { segment_seconds }
    }

    pub fn vad_default() -> Self {
        Segmenter::Vad {
            threshold: Self::DEFAULT_VAD_THRESHOLD,
            min_silence_seconds: Self::DEFAULT_VAD_MIN_SILENCE_SECONDS,
            max_segment_seconds: Self::DEFAULT_MAX_SEGMENT_SECONDS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Segmenter::Fixed { .. } => "fixed",
            Segmenter::Vad { .. } => "vad",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {x}")))
            }
        };
        match *self {
            Segmenter::Fixed { segment_seconds } => positive(segment_seconds, "segment_seconds"),
            Segmenter::Vad {
                threshold,
                min_silence_seconds,
                max_segment_seconds,
            } => {
                if threshold.is_nan() || threshold < 0.0 {
                    return Err(Error::Config(format!("vad threshold must be >= 0, got {threshold}")));
                }
                positive(min_silence_seconds, "min_silence_seconds")?;
                positive(max_segment_seconds, "max_segment_seconds")
            }
        }
    }

    pub fn segment(&self, net: &ConfusionNetwork) -> Result<SegmentBoundaries> {
        let dt = net.frame_duration();
        match *self {
            Segmenter::Fixed { segment_seconds } => {
                segment_fixed(net.num_frames(), frames_for_seconds(segment_seconds, dt))
            }
            Segmenter::Vad {
                threshold,
                min_silence_seconds,
                max_segment_seconds,
            } => segment_vad(
                &net.blank_probs(),
                threshold,
                frames_for_seconds(min_silence_seconds, dt),
                frames_for_seconds(max_segment_seconds, dt),
            ),
        }
    }
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::fixed(Self::DEFAULT_SEGMENT_SECONDS)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(segment_fixed(10, 4).unwrap().spans, vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(segment_fixed(8, 8).unwrap().spans, vec![(0, 8)]);
        assert!(segment_fixed(0, 3).unwrap().is_empty());
        assert!(segment_fixed(5, 0).is_err());
    }

    #[test]
    fn fixed_from_seconds() {
        let fps = frames_for_seconds(8.0, 0.5);
        assert_eq!(fps, 16);
        let b = segment_fixed(40, fps).unwrap();
        assert_eq!(b.spans, vec![(0, 16), (16, 32), (32, 40)]);
    }

    #[test]
    fn vad_all_silence() {
        let b = segment_vad(&[0.99; 6], 0.9, 2, 100).unwrap();
        assert_eq!(b.spans, vec![(0, 6)]);
        let b = segment_vad(&[0.99; 7], 0.9, 2, 3).unwrap();
        assert_eq!(b.spans, vec![(0, 3), (3, 6), (6, 7)]);
    }

    #[test]
    fn vad_without_silence_is_fixed() {
        let probs = [0.1, 0.5, 0.3, 0.2, 0.8, 0.0, 0.4];
        assert_eq!(
            segment_vad(&probs, 0.9, 1, 3).unwrap(),
            segment_fixed(probs.len(), 3).unwrap()
        );
    }

    #[test]
    fn vad_boundary_after_silence_run() {
        let mut probs = vec![0.2; 20];
        for p in &mut probs[10..13] {
            *p = 0.95;
        }
        let b = segment_vad(&probs, 0.9, 3, 100).unwrap();
        assert_eq!(b.spans, vec![(0, 13), (13, 20)]);
        // A shorter run does not qualify.
        let b = segment_vad(&probs, 0.9, 4, 100).unwrap();
        assert_eq!(b.spans, vec![(0, 20)]);
    }

    #[test]
    fn vad_rejects_bad_params() {
        assert!(segment_vad(&[0.5], 0.9, 0, 10).is_err());
        assert!(segment_vad(&[0.5], 0.9, 1, 0).is_err());
        assert!(segment_vad(&[0.5], f64::NAN, 1, 1).is_err());
    }

    #[test]
    fn median() {
        let b = segment_fixed(10, 4).unwrap();
        assert_eq!(b.median_length(), Some(4));
        assert_eq!(SegmentBoundaries { spans: vec![] }.median_length(), None);
    }

    proptest! {
        #[test]
        fn fixed_covers(total in 0usize..500, fps in 1usize..64) {
            let b = segment_fixed(total, fps).unwrap();
            prop_assert!(b.validate(total).is_ok());
            let n = b.len();
            for (i, len) in b.lengths().enumerate() {
                if i + 1 < n {
                    prop_assert_eq!(len, fps);
                } else {
                    prop_assert!(len <= fps);
                }
            }
        }

        #[test]
        fn vad_covers(
            probs in proptest::collection::vec(0.0f64..1.0, 0..300),
            threshold in 0.0f64..1.0,
            min_silence in 1usize..6,
            max_frames in 1usize..80,
        ) {
            let b = segment_vad(&probs, threshold, min_silence, max_frames).unwrap();
            prop_assert!(b.validate(probs.len()).is_ok());
            prop_assert!(b.lengths().all(|l| l <= max_frames));
        }

        #[test]
        fn vad_above_one_is_fixed(
            probs in proptest::collection::vec(0.0f64..=1.0, 0..200),
            max_frames in 1usize..50,
        ) {
            prop_assert_eq!(
                segment_vad(&probs, 1.01, 1, max_frames).unwrap(),
                segment_fixed(probs.len(), max_frames).unwrap()
            );
        }
    }
}
