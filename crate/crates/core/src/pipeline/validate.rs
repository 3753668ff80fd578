use super::infer::{stylize_video_baseline, stylize_video_coherent};
use crate::coherence::stability_error_sequence;
use crate::error::{Error, Result};
use crate::groundtruth::ClipSample;
use crate::models::ModelBundle;

/// Stability of both arms on held-out clips, averaged over frame pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub coherent: f64,
    pub baseline: f64,
    /// Mean predicted composition mask over all propagated frames.
    pub mean_mask: f64,
    /// Per-clip (coherent, baseline) sequence means.
    pub per_clip: Vec<(f64, f64)>,
}

impl ValidationReport {
    /// Relative reduction of the coherent arm against the baseline.
    pub fn reduction(&self) -> f64 {
        1.0 - self.coherent / self.baseline
    }
}

pub fn validate(bundle: &ModelBundle, clips: &[ClipSample]) -> Result<ValidationReport> {
    if clips.is_empty() {
        return Err(Error::Contract("validation needs at least one clip".into()));
    }
    let mut per_clip = Vec::with_capacity(clips.len());
    let (mut mask_sum, mut mask_n) = (0.0, 0usize);
    let (mut coh_sum, mut base_sum, mut pairs) = (0.0, 0.0, 0usize);
    for clip in clips {
        let (coherent, details) = stylize_video_coherent(bundle, &clip.frames)?;
        let baseline = stylize_video_baseline(bundle, &clip.frames)?;
        let c = stability_error_sequence(&coherent, &clip.gt_flows, &clip.gt_masks)?;
        let b = stability_error_sequence(&baseline, &clip.gt_flows, &clip.gt_masks)?;
        coh_sum += c.per_pair.iter().sum::<f64>();
        base_sum += b.per_pair.iter().sum::<f64>();
        pairs += c.per_pair.len();
        for d in &details {
            mask_sum += d.mask.mean();
            mask_n += 1;
        }
        per_clip.push((c.mean, b.mean));
    }
    Ok(ValidationReport {
        coherent: coh_sum / pairs as f64,
        baseline: base_sum / pairs as f64,
        mean_mask: mask_sum / mask_n.max(1) as f64,
        per_clip,
    })
}
