//! Greedy feature-divergence selection of augmentation codecs.

use super::PipelineError;
use crate::audio::AudioClip;
use crate::codecs::{transcode, CodecSpec};
use crate::features::{feature_divergence, FeatureParams, LogMel, LogMelExtractor};
use crate::util::parallel_map;

/// Divergences driving the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecScores {
    /// Mean divergence of each candidate's output from the originals.
    pub from_original: Vec<f64>,
    /// Mean divergence between the outputs of two candidates.
    pub pairwise: Vec<Vec<f64>>,
}

/// Transcodes `clips` with every candidate and measures mean log-mel divergences.
pub fn codec_scores(
    clips: &[AudioClip],
    candidates: &[CodecSpec],
    params: &FeatureParams,
    jobs: usize,
) -> Result<CodecScores, PipelineError> {
    if clips.is_empty() {
        return Err(PipelineError::Config(
            "codec selection needs at least one clip".into(),
        ));
    }
    let extractor = LogMelExtractor::new(params)?;
    let originals: Vec<LogMel> = clips
        .iter()
        .map(|c| extractor.extract(c))
        .collect::<Result<_, _>>()?;
    let coded: Vec<Vec<LogMel>> = parallel_map(candidates.len(), jobs, |s| {
        clips
            .iter()
            .enumerate()
            .map(|(i, clip)| {
                let y = transcode(&candidates[s], clip).map_err(|source| PipelineError::Codec {
                    clip_id: format!("sample {i}"),
                    spec: candidates[s].to_string(),
                    source,
                })?;
                Ok(extractor.extract(&y)?)
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let mean = |a: &[LogMel], b: &[LogMel]| -> Result<f64, PipelineError> {
        let mut total = 0.0;
        for (x, y) in a.iter().zip(b) {
            total += feature_divergence(x, y)?;
        }
        Ok(total / a.len() as f64)
    };
    let from_original = coded
        .iter()
        .map(|c| mean(&originals, c))
        .collect::<Result<Vec<_>, _>>()?;
    let n = candidates.len();
    let mut pairwise = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let d = mean(&coded[a], &coded[b])?;
            pairwise[a][b] = d;
            pairwise[b][a] = d;
        }
    }
    Ok(CodecScores {
        from_original,
        pairwise,
    })
}

/// Picks `k` candidates: first the one whose output diverges most from the
/// originals, then repeatedly the one farthest (by minimum distance) from
/// those already picked. Ties go to the lower candidate index.
pub fn select_codec_subset(
    clips: &[AudioClip],
    candidates: &[CodecSpec],
    k: usize,
    params: &FeatureParams,
    jobs: usize,
) -> Result<Vec<CodecSpec>, PipelineError> {
    if k == 0 || k > candidates.len() {
        return Err(PipelineError::Config(format!(
            "k = {k} must lie in 1..={}",
            candidates.len()
        )));
    }
    let scores = codec_scores(clips, candidates, params, jobs)?;
    let argmax = |values: &mut dyn Iterator<Item = (usize, f64)>| {
        values.fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, bv)) if v <= bv => best,
            _ => Some((i, v)),
        })
    };
    let mut picked = vec![
        argmax(&mut scores.from_original.iter().copied().enumerate())
            .expect("non-empty")
            .0,
    ];
    while picked.len() < k {
        let mut rest = (0..candidates.len())
            .filter(|c| !picked.contains(c))
            .map(|c| {
                let d = picked
                    .iter()
                    .map(|&p| scores.pairwise[c][p])
                    .fold(f64::INFINITY, f64::min);
                (c, d)
            });
        picked.push(argmax(&mut rest).expect("candidates remain").0);
    }
    Ok(picked.into_iter().map(|i| candidates[i].clone()).collect())
}
