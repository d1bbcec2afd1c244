//! Glue between a loaded corpus and the models.

use crate::codes::{kmeans_fit, Codebook, CodesError, KMeansFit};
use crate::corpus::Utterance;
use crate::f0::{extract_features, features_to_hz, F0Contour, F0Error, FeatureSequence, NormStats};
use crate::mlpg::mlpg;
use crate::model::{ModelError, PhoneTrack, ProsodyModel, TrainItem};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("utterance {id}: {source}")]
    F0 { id: String, source: F0Error },
    #[error("utterance {id}: {source}")]
    Model { id: String, source: ModelError },
    #[error(transparent)]
    Codes(#[from] CodesError),
}

/// Features of every utterance, extracted on all available cores. Output
/// order follows the input; the first failing utterance is reported.
pub fn extract_all(utterances: &[Utterance], stats: &NormStats) -> Result<Vec<FeatureSequence>, PipelineError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(utterances.len().max(1));
    let chunk = utterances.len().div_ceil(workers).max(1);
    let parts: Vec<Vec<Result<FeatureSequence, PipelineError>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = utterances
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|u| {
                            extract_features(&u.f0, stats).map_err(|source| PipelineError::F0 {
                                id: u.id.clone(),
                                source,
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("feature worker panicked")).collect()
    });
    parts.into_iter().flatten().collect()
}

/// Features, phrase ranges and phone indices of every utterance, with
/// phones looked up in `phones`.
pub fn training_items(utterances: &[Utterance], stats: &NormStats, phones: &[String]) -> Result<Vec<TrainItem>, PipelineError> {
    let features = extract_all(utterances, stats)?;
    utterances
        .iter()
        .zip(features)
        .map(|(u, features)| {
            let segments = u
                .phones
                .iter()
                .map(|s| {
                    phones
                        .iter()
                        .position(|p| *p == s.label)
                        .map(|i| (i, s.len()))
                        .ok_or_else(|| PipelineError::Model {
                            id: u.id.clone(),
                            source: ModelError::UnknownPhone(s.label.clone()),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TrainItem {
                features: features.frames,
                ranges: u.phrase_ranges.clone(),
                phones: PhoneTrack::from_durations(&segments),
            })
        })
        .collect()
}

/// Posterior mean (or point latent) of every phrase, in corpus order.
pub fn phrase_embeddings(model: &ProsodyModel, items: &[TrainItem]) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut out = Vec::new();
    for item in items {
        for e in model.encode_phrases(item.features.view(), &item.ranges)? {
            out.push(e.mean().to_vec());
        }
    }
    Ok(out)
}

/// k-means codebook over all training-phrase embeddings.
pub fn cluster_embeddings(model: &ProsodyModel, items: &[TrainItem], k: usize, seed: u64) -> Result<KMeansFit, PipelineError> {
    let embeddings = phrase_embeddings(model, items).map_err(|source| PipelineError::Model {
        id: "*".into(),
        source,
    })?;
    Ok(kmeans_fit(&embeddings, k, seed)?)
}

/// Resynthesis from the encoder's own latents: encode, decode, MLPG,
/// denormalize. No quantization.
pub fn reconstruct(model: &ProsodyModel, item: &TrainItem, stats: &NormStats) -> Result<F0Contour, ModelError> {
    let codes: Vec<Vec<f64>> = model
        .encode_phrases(item.features.view(), &item.ranges)?
        .iter()
        .map(|e| e.mean().to_vec())
        .collect();
    let means = model.decode(&codes, &item.ranges, &item.phones)?;
    let statics = mlpg(means.view(), stats).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    features_to_hz(&statics, stats).map_err(|e| ModelError::InvalidConfig(e.to_string()))
}

/// Voiced-frame RMSE (Hz) of `predict` pooled over all utterances.
pub fn pooled_rmse<F>(utterances: &[Utterance], mut predict: F) -> Result<f64, PipelineError>
where
    F: FnMut(usize, &Utterance) -> Result<F0Contour, PipelineError>,
{
    let (mut sse, mut n) = (0.0, 0usize);
    for (i, u) in utterances.iter().enumerate() {
        let g = predict(i, u)?;
        if g.len() != u.f0.len() {
            return Err(PipelineError::F0 {
                id: u.id.clone(),
                source: F0Error::LengthMismatch {
                    reference: u.f0.len(),
                    generated: g.len(),
                },
            });
        }
        for (r, p) in u.f0.values().iter().zip(g.values()) {
            if *r > 0.0 {
                sse += (r - p) * (r - p);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(PipelineError::F0 {
            id: "*".into(),
            source: F0Error::NoVoicedFrames,
        });
    }
    Ok((sse / n as f64).sqrt())
}

/// Convenience for callers that only need the codebook.
pub fn kmeans_codebook(model: &ProsodyModel, items: &[TrainItem], k: usize, seed: u64) -> Result<Codebook, PipelineError> {
    Ok(cluster_embeddings(model, items, k, seed)?.codebook)
}
