use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::prior::{kl_mc_estimate, reparameterize, LatentPosterior, VampPrior};
use super::{Encoded, ModelConfig, ModelError, ModelKind, Network, PhoneTrack, ProsodyModel};
use crate::nn::{adam_step, kl_weight_at, lr_at, AdamState, Gradients, NnError, ParamStore, TrainSchedule};

/// One training utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub features: Array2<f64>,
    pub ranges: Vec<(usize, usize)>,
    pub phones: PhoneTrack,
}

fn shape_check(x: ArrayView2<'_, f64>, x_hat: ArrayView2<'_, f64>, mask: Option<&[bool]>) -> Result<(), ModelError> {
    if x.dim() != x_hat.dim() || mask.is_some_and(|m| m.len() != x.nrows()) {
        return Err(NnError::ShapeMismatch(format!("{:?} vs {:?}", x.dim(), x_hat.dim())).into());
    }
    Ok(())
}

/// Mean squared error over unmasked frames and all streams. An all-masked
/// input has zero loss.
pub fn ae_loss(x: ArrayView2<'_, f64>, x_hat: ArrayView2<'_, f64>, mask: Option<&[bool]>) -> Result<f64, ModelError> {
    shape_check(x, x_hat, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, (a, b)) in x.rows().into_iter().zip(x_hat.rows()).enumerate() {
        if mask.is_some_and(|m| !m[t]) {
            continue;
        }
        sum += a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += a.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Reconstruction MSE plus `beta` times the per-phrase mean of the
/// single-sample KL estimates.
pub fn vae_loss(
    x: ArrayView2<'_, f64>,
    x_hat: ArrayView2<'_, f64>,
    mask: Option<&[bool]>,
    posteriors: &[LatentPosterior],
    samples: &[Vec<f64>],
    beta: f64,
    prior: &VampPrior,
) -> Result<VaeLoss, ModelError> {
    let recon = ae_loss(x, x_hat, mask)?;
    if posteriors.len() != samples.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} posteriors, {} samples",
            posteriors.len(),
            samples.len()
        ))
        .into());
    }
    let kl = if posteriors.is_empty() {
        0.0
    } else {
        posteriors
            .iter()
            .zip(samples)
            .map(|(q, z)| kl_mc_estimate(q, z, prior))
            .sum::<f64>()
            / posteriors.len() as f64
    };
    Ok(VaeLoss {
        total: recon + beta * kl,
        recon,
        kl,
    })
}

/// Loss of one batch, with sums kept for epoch averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub sq_error_sum: f64,
    pub values: usize,
    pub kl_sum: f64,
    pub phrases: usize,
}

/// Loss and parameter gradients for a batch.
///
/// `noise[i][p]` is the standard-normal draw for phrase `p` of item `i`
/// (ignored by the autoencoder). The loss is the MSE over all frames and
/// streams of the batch plus, for the variational model, `beta` times the
/// mean KL estimate per phrase. The KL is computed for logging even when
/// `beta` is zero; it then contributes no gradient.
pub fn batch_gradients(
    net: &Network,
    store: &ParamStore,
    items: &[&TrainItem],
    beta: f64,
    noise: &[Vec<Vec<f64>>],
) -> Result<(BatchLoss, Gradients), ModelError> {
    let vamp = net.kind == ModelKind::Vamp;
    let d = net.latent_dim;
    let values: usize = items.iter().map(|it| 3 * it.features.nrows()).sum();
    let phrases: usize = items.iter().map(|it| it.ranges.len()).sum();
    if values == 0 {
        return Err(ModelError::EmptyCorpus);
    }
    if vamp && (noise.len() != items.len() || noise.iter().zip(items).any(|(n, it)| n.len() != it.ranges.len())) {
        return Err(NnError::ShapeMismatch("one noise vector per phrase is required".into()).into());
    }
    let mut grads = store.zero_grads();

    let mut prior_caches = Vec::new();
    let mut prior = None;
    if vamp {
        let mut components = Vec::with_capacity(net.pseudo.len());
        for k in 0..net.pseudo.len() {
            let u = net.pseudo_input(store, k);
            let (cache, rows) = net.encode_raw(store, u, &[(0, u.nrows())])?;
            components.push(LatentPosterior::from_logvar(&rows[0][..d], &rows[0][d..]));
            prior_caches.push(cache);
        }
        prior = Some(VampPrior::new(components));
    }
    let k_count = prior_caches.len();
    let mut d_prior_mu = vec![vec![0.0; d]; k_count];
    let mut d_prior_lv = vec![vec![0.0; d]; k_count];
    let kl_coef = if phrases == 0 { 0.0 } else { beta / phrases as f64 };

    let mut sq_error_sum = 0.0;
    let mut kl_sum = 0.0;
    for (i, item) in items.iter().enumerate() {
        let (enc_cache, raw) = net.encode_raw(store, item.features.view(), &item.ranges)?;
        let mut codes = Vec::with_capacity(raw.len());
        let mut posts = Vec::with_capacity(raw.len());
        for (p, r) in raw.iter().enumerate() {
            match net.interpret(r) {
                Encoded::Point(z) => codes.push(z),
                Encoded::Gaussian(q) => {
                    let eps = &noise[i][p];
                    if eps.len() != d {
                        return Err(NnError::ShapeMismatch("noise dimension".into()).into());
                    }
                    codes.push(reparameterize(&q, eps));
                    posts.push(q);
                }
            }
        }
        let input = net.decoder_input(&codes, &item.ranges, &item.phones)?;
        let dec_cache = net.decoder.forward(store, input.view())?;
        let mut dy = dec_cache.output() - &item.features;
        sq_error_sum += dy.iter().map(|v| v * v).sum::<f64>();
        dy *= 2.0 / values as f64;
        let d_input = net.decoder.backward(store, &mut grads, &dec_cache, dy.view());

        let mut d_enc = Array2::zeros(enc_cache.output().dim());
        for (p, &(start, end)) in item.ranges.iter().enumerate() {
            let mut dz: Vec<f64> = (0..d)
                .map(|j| d_input.slice(s![start..end, j]).sum())
                .collect();
            match prior.as_ref() {
                None => d_enc.slice_mut(s![end - 1, ..]).assign(&ndarray::ArrayView1::from(&dz[..])),
                Some(prior) => {
                    let q = &posts[p];
                    let eps = &noise[i][p];
                    let z = &codes[p];
                    kl_sum += kl_mc_estimate(q, z, prior);
                    let mut row = d_enc.row_mut(end - 1);
                    if kl_coef != 0.0 {
                        let g = prior.log_density_with_grads(z);
                        for j in 0..d {
                            // log q gradient w.r.t. z is -eps/sigma
                            dz[j] += kl_coef * (-eps[j] / q.sigma[j] - g.dz[j]);
                        }
                        for k in 0..k_count {
                            for j in 0..d {
                                d_prior_mu[k][j] -= kl_coef * g.dmu[k][j];
                                d_prior_lv[k][j] -= kl_coef * g.dlogvar[k][j];
                            }
                        }
                    }
                    for j in 0..d {
                        let explicit_mu = kl_coef * eps[j] / q.sigma[j];
                        let explicit_lv = kl_coef * (0.5 * eps[j] * eps[j] - 0.5);
                        row[j] = dz[j] + explicit_mu;
                        row[d + j] = dz[j] * 0.5 * q.sigma[j] * eps[j] + explicit_lv;
                    }
                }
            }
        }
        net.encoder.backward(store, &mut grads, &enc_cache, d_enc.view());
    }

    if kl_coef != 0.0 {
        for (k, cache) in prior_caches.iter().enumerate() {
            let len = cache.output().nrows();
            let mut d_out = Array2::zeros((len, 2 * d));
            for j in 0..d {
                d_out[[len - 1, j]] = d_prior_mu[k][j];
                d_out[[len - 1, d + j]] = d_prior_lv[k][j];
            }
            let dx = net.encoder.backward(store, &mut grads, cache, d_out.view());
            for (g, v) in grads.get_mut(net.pseudo[k]).iter_mut().zip(dx.iter()) {
                *g += v;
            }
        }
    }

    let recon = sq_error_sum / values as f64;
    let kl = if vamp && phrases > 0 { kl_sum / phrases as f64 } else { 0.0 };
    let total = recon + if vamp { beta * kl } else { 0.0 };
    if !total.is_finite() {
        return Err(NnError::NonFiniteLoss(total).into());
    }
    Ok((
        BatchLoss {
            total,
            recon,
            kl,
            sq_error_sum,
            values,
            kl_sum,
            phrases,
        },
        grads,
    ))
}

/// One record of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
    pub beta: f64,
    pub recon: f64,
    pub kl: f64,
    pub wall_secs: f64,
}

impl EpochMetrics {
    pub const HEADER: &'static str = "epoch\tlr\tbeta\trecon\tkl\twall_secs";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:.3}",
            self.epoch, self.lr, self.beta, self.recon, self.kl, self.wall_secs
        )
    }
}

/// Length-sorted buckets of `batch_size` item indices.
fn buckets(items: &[TrainItem], batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| (items[i].features.nrows(), i));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Train a fresh model.
///
/// Everything random (initialization, pseudo-input windows, batch order,
/// latent noise) comes from one ChaCha stream seeded with `seed`, so equal
/// inputs give bit-identical models. `on_epoch` sees the model after every
/// epoch and may persist it.
pub fn train<F>(
    config: ModelConfig,
    phones: Vec<String>,
    items: &[TrainItem],
    schedule: &TrainSchedule,
    seed: u64,
    mut on_epoch: F,
) -> Result<(ProsodyModel, Vec<EpochMetrics>), ModelError>
where
    F: FnMut(&ProsodyModel, &EpochMetrics) -> Result<(), ModelError>,
{
    if items.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ProsodyModel::new(config, phones, &mut rng)?;
    if model.kind() == ModelKind::Vamp {
        let views: Vec<_> = items.iter().map(|it| it.features.view()).collect();
        model.init_pseudo_inputs(&views, &mut rng)?;
    }
    let mut batches = buckets(items, schedule.batch_size);
    let mut schedule = schedule.clone();
    schedule.batches_per_epoch = batches.len();
    schedule.validate().map_err(ModelError::InvalidConfig)?;

    let mut adam = AdamState::new(&model.store);
    let mut step = 0usize;
    let mut history = Vec::with_capacity(schedule.total_epochs);
    for epoch in 0..schedule.total_epochs {
        let started = Instant::now();
        let beta = if model.kind() == ModelKind::Vamp {
            kl_weight_at(epoch, &schedule)
        } else {
            0.0
        };
        batches.shuffle(&mut rng);
        let (mut sq, mut vals, mut kl_sum, mut phrases) = (0.0, 0usize, 0.0, 0usize);
        let mut lr = 0.0;
        for batch in &batches {
            let batch_items: Vec<&TrainItem> = batch.iter().map(|&i| &items[i]).collect();
            let noise: Vec<Vec<Vec<f64>>> = if model.kind() == ModelKind::Vamp {
                batch_items
                    .iter()
                    .map(|it| {
                        (0..it.ranges.len())
                            .map(|_| (0..model.config.latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
                            .collect()
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let (loss, grads) = batch_gradients(&model.net, &model.store, &batch_items, beta, &noise)?;
            if !grads.is_finite() {
                return Err(NnError::NonFiniteLoss(f64::NAN).into());
            }
            step += 1;
            lr = lr_at(step, &schedule);
            adam_step(&mut model.store, &grads, &mut adam, lr)?;
            sq += loss.sq_error_sum;
            vals += loss.values;
            kl_sum += loss.kl_sum;
            phrases += loss.phrases;
        }
        let metrics = EpochMetrics {
            epoch,
            lr,
            beta,
            recon: sq / vals as f64,
            kl: if model.kind() == ModelKind::Vamp && phrases > 0 {
                kl_sum / phrases as f64
            } else {
                0.0
            },
            wall_secs: started.elapsed().as_secs_f64(),
        };
        on_epoch(&model, &metrics)?;
        history.push(metrics);
    }
    Ok((model, history))
}
