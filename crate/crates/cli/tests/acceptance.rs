//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs with its own `main` (no test harness) so every line is printed.
//! The last line names the failed criteria. The process exits nonzero on a
//! failure only when `INTONATION_ACCEPTANCE_STRICT=1` is set.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use intonation::codes::{cluster_purity, extract_vamp_codes};
use intonation::corpus::{generate_synthetic_corpus, load_corpus, phone_inventory};
use intonation::f0::{compute_deltas, compute_norm_stats, F0Contour, NormStats};
use intonation::mlpg::mlpg;
use intonation::model::{
    batch_gradients, kl_mc_estimate, train, LatentPosterior, ModelConfig, ModelError, ModelKind, PhoneTrack,
    ProsodyModel, TrainItem, VampPrior,
};
use intonation::nn::{grad_check, relative_error, Activation, Dense, Gru, NnError, ParamStore, TrainSchedule};
use intonation::phrase::{parse_phrases, tokenize_line, Klass, Lexicon, Token};
use intonation::pipeline::{cluster_embeddings, pooled_rmse, reconstruct, training_items};
use intonation::stats::{
    binomial_test_one_sided, binomial_test_two_sided, holm_bonferroni, per_pair_report, JudgmentRecord,
    ReportOptions, System,
};
use intonation::synth::{pairwise_distinctness, synthesize_f0, SentenceSpec, SynthOptions};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_criterion(n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    };
    let elapsed = started.elapsed();
    let outcome = match outcome {
        Ok(detail) if elapsed > budget => Err(format!("{detail}; over the {:.0} s budget", budget.as_secs_f64())),
        other => other,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n}: {tag}  {name}: {detail} [{:.1} s]", elapsed.as_secs_f64());
    outcome.is_ok()
}

// ---------------------------------------------------------------- 1

const EPS: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    let names: Vec<String> = store.tensors().iter().map(|t| t.name.clone()).collect();
    for name in names {
        let id = store.find(&name).unwrap();
        for v in store.tensor_mut(id).values.iter_mut() {
            *v = scale * rng.random_range(-1.0..1.0);
        }
    }
}

fn input_grad_error(x: &Array2<f64>, dx: &Array2<f64>, loss: impl Fn(&Array2<f64>) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.as_slice_mut().unwrap()[i] += EPS;
        xm.as_slice_mut().unwrap()[i] -= EPS;
        let numeric = (loss(&xp) - loss(&xm)) / (2.0 * EPS);
        worst = worst.max(relative_error(dx.as_slice().unwrap()[i], numeric));
    }
    worst
}

fn dense_check(activation: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "d", 5, 4, activation, &mut rng);
    randomize(&mut store, &mut rng, 0.7);
    let x = random_matrix(&mut rng, 6, 5);
    let proj = random_matrix(&mut rng, 6, 4);
    let report = grad_check::<_, NnError>(&mut store, EPS, |s| {
        let cache = layer.forward(s, x.view())?;
        let mut g = s.zero_grads();
        layer.backward(s, &mut g, &cache, proj.view());
        Ok(((cache.output() * &proj).sum(), g))
    })
    .unwrap();
    let cache = layer.forward(&store, x.view()).unwrap();
    let dx = layer.backward(&store, &mut store.zero_grads(), &cache, proj.view());
    let dx_err = input_grad_error(&x, &dx, |x| (layer.forward(&store, x.view()).unwrap().output() * &proj).sum());
    report.max_rel_error.max(dx_err)
}

fn gru_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let gru = Gru::new(&mut store, "g", 3, 4, &mut rng);
    randomize(&mut store, &mut rng, 0.8);
    let x = random_matrix(&mut rng, 6, 3);
    let h0: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
    let proj = random_matrix(&mut rng, 6, 4);
    let loss = |s: &ParamStore, x: &Array2<f64>, h0: &[f64]| (gru.forward(s, x.view(), Some(h0)).unwrap().output() * &proj).sum();
    let report = grad_check::<_, NnError>(&mut store, EPS, |s| {
        let cache = gru.forward(s, x.view(), Some(&h0))?;
        let mut g = s.zero_grads();
        gru.backward(s, &mut g, &cache, proj.view());
        Ok(((cache.output() * &proj).sum(), g))
    })
    .unwrap();
    let cache = gru.forward(&store, x.view(), Some(&h0)).unwrap();
    let (dx, dh0) = gru.backward(&store, &mut store.zero_grads(), &cache, proj.view());
    let mut worst = report.max_rel_error.max(input_grad_error(&x, &dx, |x| loss(&store, x, &h0)));
    for j in 0..4 {
        let (mut hp, mut hm) = (h0.clone(), h0.clone());
        hp[j] += EPS;
        hm[j] -= EPS;
        let numeric = (loss(&store, &x, &hp) - loss(&store, &x, &hm)) / (2.0 * EPS);
        worst = worst.max(relative_error(dh0[j], numeric));
    }
    worst
}

fn model_check(kind: ModelKind, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        kind,
        latent_dim: 3,
        ff_units: 5,
        gru_units: 4,
        gru_layers: 2,
        pseudo_lengths: vec![5, 8],
    };
    let phones = vec!["sil".to_string(), "a".to_string(), "k".to_string()];
    let mut model = ProsodyModel::new(config, phones, &mut rng).unwrap();
    for &id in &model.net.pseudo {
        for v in model.store.tensor_mut(id).values.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    let items: Vec<TrainItem> = [(16, vec![(0, 7), (7, 16)]), (9, vec![(0, 9)])]
        .into_iter()
        .map(|(t, ranges)| TrainItem {
            features: random_matrix(&mut rng, t, 3),
            ranges,
            phones: PhoneTrack::new((0..t).map(|i| (i / 2) % 3).collect()),
        })
        .collect();
    let noise: Vec<Vec<Vec<f64>>> = match kind {
        ModelKind::Ae => Vec::new(),
        ModelKind::Vamp => items
            .iter()
            .map(|it| (0..it.ranges.len()).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect())
            .collect(),
    };
    let beta = if kind == ModelKind::Vamp { 0.5 } else { 0.0 };
    let refs: Vec<&TrainItem> = items.iter().collect();
    let net = model.net.clone();
    let report = grad_check::<_, ModelError>(&mut model.store, EPS, |s| {
        let (loss, g) = batch_gradients(&net, s, &refs, beta, &noise)?;
        Ok((loss.total, g))
    })
    .unwrap();
    (report.max_rel_error, report.checked)
}

fn criterion_1() -> Outcome {
    let results = [
        ("dense tanh", dense_check(Activation::Tanh, 1)),
        ("dense linear", dense_check(Activation::Linear, 2)),
        ("gru", gru_check(3)),
        ("ae", model_check(ModelKind::Ae, 4).0),
        ("vamp", model_check(ModelKind::Vamp, 5).0),
    ];
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let summary: Vec<String> = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    ensure(worst < 1e-4, || format!("max relative error {worst:.2e} >= 1e-4 ({})", summary.join(", ")))?;
    Ok(format!("max relative error {worst:.1e} < 1e-4 ({})", summary.join(", ")))
}

// ---------------------------------------------------------------- 2

/// Dense `W` (3T x T) written out from the window definitions.
fn dense_windows(t_len: usize) -> Array2<f64> {
    let mut w = Array2::zeros((3 * t_len, t_len));
    for t in 0..t_len {
        let prev = if t == 0 { 0 } else { t - 1 };
        let next = if t + 1 == t_len { t_len - 1 } else { t + 1 };
        w[[t, t]] += 1.0;
        w[[t_len + t, next]] += 0.5;
        w[[t_len + t, prev]] -= 0.5;
        w[[2 * t_len + t, next]] += 1.0;
        w[[2 * t_len + t, t]] -= 2.0;
        w[[2 * t_len + t, prev]] += 1.0;
    }
    w
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            if f != 0.0 {
                for k in col..n {
                    a[[row, k]] -= f * a[[col, k]];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[[i, k]] * x[k]).sum();
        x[i] = (b[i] - s) / a[[i, i]];
    }
    x
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let t_len = rng.random_range(1..=200);
        let means = Array2::from_shape_fn((t_len, 3), |_| rng.random_range(-2.0..2.0));
        let stds = [rng.random_range(0.2..2.0), rng.random_range(0.05..1.0), rng.random_range(0.02..0.5)];
        let stats = NormStats {
            mean: 0.0,
            std: 1.0,
            global_std: stds,
        };
        let banded = mlpg(means.view(), &stats).map_err(|e| e.to_string())?;
        let w = dense_windows(t_len);
        let precision: Vec<f64> = (0..3 * t_len).map(|r| 1.0 / (stds[r / t_len] * stds[r / t_len])).collect();
        let mu: Vec<f64> = (0..3 * t_len).map(|r| means[[r % t_len, r / t_len]]).collect();
        let mut wp = w.t().to_owned();
        for (r, p) in precision.iter().enumerate() {
            wp.column_mut(r).mapv_inplace(|v| v * p);
        }
        let a = wp.dot(&w);
        let b = wp.dot(&ndarray::Array1::from(mu)).to_vec();
        let dense = dense_solve(a, b);
        let diff: f64 = banded.iter().zip(&dense).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let norm: f64 = dense.iter().map(|y| y * y).sum::<f64>().sqrt();
        worst_rel = worst_rel.max(diff / norm.max(1e-300));
    }
    ensure(worst_rel < 1e-8, || format!("banded vs dense relative error {worst_rel:.2e}"))?;

    let mut worst_abs: f64 = 0.0;
    for _ in 0..100 {
        let t_len = rng.random_range(1..=200);
        let traj: Vec<f64> = (0..t_len).map(|t| (t as f64 * 0.07).sin() + rng.random_range(-0.3..0.3)).collect();
        let stats = NormStats {
            mean: 0.0,
            std: 1.0,
            global_std: [rng.random_range(0.2..2.0), rng.random_range(0.05..1.0), rng.random_range(0.02..0.5)],
        };
        let c = mlpg(compute_deltas(&traj).view(), &stats).map_err(|e| e.to_string())?;
        worst_abs = c.iter().zip(&traj).map(|(a, b)| (a - b).abs()).fold(worst_abs, f64::max);
    }
    ensure(worst_abs < 1e-8, || format!("identity recovery max abs error {worst_abs:.2e}"))?;
    Ok(format!(
        "banded vs dense rel error {worst_rel:.1e} < 1e-8 over 100 systems; identity recovery {worst_abs:.1e} < 1e-8"
    ))
}

// ---------------------------------------------------------------- 3

pub const SINGLE_PHRASE_SENTENCES: [&str; 12] = [
    "There was no answer.",
    "\"I'm so hungry.\"",
    "\"Too hard!\"",
    "They climbed the stairs.",
    "\"What's the matter now?\"",
    "\"We'd better make sure.\"",
    "\"Do you think we're so stupid?\"",
    "\"I'm sorry.\"",
    "He wanted a turnip.",
    "They both tugged and tugged.",
    "But the turnip didn't move.",
    "\"It's enormous!\" cried Jack.",
];

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..10_000 {
        let len = rng.random_range(0..=24);
        let klasses: Vec<Klass> = (0..len)
            .map(|_| if rng.random_bool(0.5) { Klass::Chink } else { Klass::Chunk })
            .collect();
        let tokens: Vec<Token> = klasses.iter().enumerate().map(|(i, k)| Token::with_klass(format!("w{i}"), *k)).collect();
        let phrases = parse_phrases(&tokens);
        let flat: Vec<Token> = phrases.iter().flat_map(|p| p.tokens.clone()).collect();
        ensure(flat == tokens, || format!("case {case}: reconstruction"))?;
        for p in &phrases {
            let first_chunk = p.tokens.iter().position(|t| t.klass == Klass::Chunk).unwrap_or(p.tokens.len());
            ensure(
                !p.tokens.is_empty() && p.tokens[first_chunk..].iter().all(|t| t.klass == Klass::Chunk),
                || format!("case {case}: phrase violates Chink* Chunk*"),
            )?;
        }
        let mut starts = vec![false; len];
        let mut pos = 0;
        for p in &phrases {
            starts[pos] = true;
            pos += p.tokens.len();
        }
        for i in 1..len {
            let expected = klasses[i] == Klass::Chink && klasses[i - 1] == Klass::Chunk;
            ensure(starts[i] == expected, || format!("case {case}: boundary at {i}"))?;
        }
    }
    let lexicon = Lexicon::default();
    let mut split = Vec::new();
    for s in SINGLE_PHRASE_SENTENCES {
        let sentence = tokenize_line(s, &lexicon).map_err(|e| e.to_string())?;
        let phrases = parse_phrases(&sentence.tokens);
        if phrases.len() != 1 {
            let text: Vec<String> = phrases.iter().map(|p| p.text()).collect();
            split.push(text.join(" | "));
        }
    }
    let props = "properties hold on 10000 random sequences";
    ensure(split.is_empty(), || {
        format!(
            "{props}; {}/12 test sentences single-phrase, split: {}",
            12 - split.len(),
            split.join("; ")
        )
    })?;
    Ok(format!("{props}; 12/12 test sentences single-phrase"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = LatentPosterior {
        mu: vec![0.0],
        sigma: vec![1.0],
    };
    let prior = VampPrior::new(vec![LatentPosterior {
        mu: vec![1.0],
        sigma: vec![1.0],
    }]);
    let n = 100_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            kl_mc_estimate(&q, &[z], &prior)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    ensure((mean - 0.5).abs() <= 3.0 * se, || format!("MC KL {mean:.5} vs 0.5, 3 SE = {:.5}", 3.0 * se))?;

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=8);
        let d = rng.random_range(1..=6);
        let components: Vec<LatentPosterior> = (0..k)
            .map(|_| LatentPosterior {
                mu: (0..d).map(|_| rng.random_range(-1.5..1.5)).collect(),
                sigma: (0..d).map(|_| rng.random_range(0.4..2.0)).collect(),
            })
            .collect();
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let direct: f64 = components
            .iter()
            .map(|c| {
                (0..d)
                    .map(|j| {
                        let u = (z[j] - c.mu[j]) / c.sigma[j];
                        (-0.5 * u * u).exp() / (c.sigma[j] * (2.0 * std::f64::consts::PI).sqrt())
                    })
                    .product::<f64>()
            })
            .sum::<f64>()
            / k as f64;
        let got = VampPrior::new(components).log_density(&z);
        worst = worst.max((got - direct.ln()).abs());
    }
    ensure(worst < 1e-10, || format!("mixture log density error {worst:.2e}"))?;
    Ok(format!(
        "MC KL {mean:.4} within 3 SE ({:.4}) of 0.5 over 1e5 samples; mixture oracle error {worst:.1e} < 1e-10",
        3.0 * se
    ))
}

// ---------------------------------------------------------------- 5

/// Desk-scale network and schedule; see the README for why this differs
/// from the defaults.
fn desk_config(kind: ModelKind) -> (ModelConfig, TrainSchedule) {
    let model = ModelConfig {
        kind,
        ff_units: 64,
        gru_units: 64,
        gru_layers: 2,
        latent_dim: 16,
        ..ModelConfig::new(kind)
    };
    let schedule = TrainSchedule {
        total_epochs: 30,
        batch_size: 8,
        peak_lr: 0.002,
        ..TrainSchedule::default()
    };
    (model, schedule)
}

fn criterion_5(dir: &Path) -> Outcome {
    let lexicon = Lexicon::default();
    let train_corpus = generate_synthetic_corpus(&dir.join("train"), 200, 1, 4).map_err(|e| e.to_string())?;
    let held_corpus = generate_synthetic_corpus(&dir.join("held"), 50, 2, 4).map_err(|e| e.to_string())?;
    let utts = load_corpus(&train_corpus.manifest, &lexicon).map_err(|e| e.to_string())?;
    let held = load_corpus(&held_corpus.manifest, &lexicon).map_err(|e| e.to_string())?;
    let contours: Vec<F0Contour> = utts.iter().map(|u| u.f0.clone()).collect();
    let stats = compute_norm_stats(&contours).map_err(|e| e.to_string())?;
    let phones = phone_inventory(&utts);
    let items = training_items(&utts, &stats, &phones).map_err(|e| e.to_string())?;
    let held_items = training_items(&held, &stats, &phones).map_err(|e| e.to_string())?;

    let (ae_config, schedule) = desk_config(ModelKind::Ae);
    let (ae, _) = train(ae_config, phones.clone(), &items, &schedule, 1, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let model_rmse = pooled_rmse(&held, |i, _| Ok(reconstruct(&ae, &held_items[i], &stats).unwrap())).map_err(|e| e.to_string())?;
    let mean_hz = {
        let voiced: Vec<f64> = utts.iter().flat_map(|u| u.f0.values().iter().copied().filter(|v| *v > 0.0)).collect();
        voiced.iter().sum::<f64>() / voiced.len() as f64
    };
    let global_rmse = pooled_rmse(&held, |_, u| Ok(F0Contour::new(vec![mean_hz; u.len()]).unwrap())).map_err(|e| e.to_string())?;
    let reduction = 1.0 - model_rmse / global_rmse;

    let fit = cluster_embeddings(&ae, &items, 4, 1).map_err(|e| e.to_string())?;
    let purity = cluster_purity(&fit.assignments, &train_corpus.labels);

    let (vamp_config, schedule) = desk_config(ModelKind::Vamp);
    let (vamp, history) = train(vamp_config, phones, &items, &schedule, 1, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let codebook = extract_vamp_codes(&vamp).map_err(|e| e.to_string())?;
    let u = &held[0];
    let spec = SentenceSpec {
        id: u.id.clone(),
        text: u.text.clone(),
        phones: u.phones.clone(),
        phrase_ranges: u.phrase_ranges.clone(),
    };
    let renditions = codebook
        .codes
        .iter()
        .map(|c| synthesize_f0(&spec, &vec![c.id; spec.phrase_ranges.len()], &vamp, &codebook, &stats, SynthOptions::default()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let distances = pairwise_distinctness(&renditions).map_err(|e| e.to_string())?;
    let distinct_pairs = distances.iter().flatten().filter(|d| **d > 10.0).count() / 2;
    let max_pair = distances.iter().flatten().copied().fold(0.0, f64::max);
    let final_kl = history.last().map_or(f64::NAN, |m| m.kl);

    let detail = format!(
        "(a) held-out RMSE {model_rmse:.2} Hz vs global mean {global_rmse:.2} Hz, reduction {:.1}% (need >= 30%); \
         (b) purity {purity:.3} (need >= 0.8); (c) {distinct_pairs} code pairs > 10 Hz, max {max_pair:.1} Hz \
         (need >= 1); final KL {final_kl:.2}",
        100.0 * reduction
    );
    ensure(reduction >= 0.30 && purity >= 0.8 && distinct_pairs >= 1, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 6

fn binomial_coefficient(n: u64, k: u64) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

fn rational_pmf(i: u64, n: u64, p: &BigRational) -> BigRational {
    let q = BigRational::one() - p;
    BigRational::from_integer(binomial_coefficient(n, i)) * num_traits::pow(p.clone(), i as usize) * num_traits::pow(q, (n - i) as usize)
}

fn criterion_6() -> Outcome {
    let ps = [
        (0.5, BigRational::new(1.into(), 2.into())),
        (0.25, BigRational::new(1.into(), 4.into())),
        (0.75, BigRational::new(3.into(), 4.into())),
    ];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (pf, pr) in &ps {
        for n in 1..=20u64 {
            let pmf: Vec<BigRational> = (0..=n).map(|i| rational_pmf(i, n, pr)).collect();
            for k in 0..=n {
                let upper = pmf[k as usize..].iter().fold(BigRational::zero(), |a, b| a + b);
                let two = pmf.iter().filter(|m| **m <= pmf[k as usize]).fold(BigRational::zero(), |a, b| a + b);
                for (exact, got) in [
                    (upper, binomial_test_one_sided(k, n, *pf)),
                    (two, binomial_test_two_sided(k, n, *pf)),
                ] {
                    let got = got.map_err(|e| e.to_string())?;
                    let exact = exact.to_f64().unwrap().min(1.0);
                    worst = worst.max((got - exact).abs() / exact);
                    checked += 1;
                }
            }
        }
    }
    ensure(worst < 1e-9, || format!("binomial relative error {worst:.2e}"))?;

    let holm = holm_bonferroni(&[0.01, 0.04, 0.03, 0.005], 0.05).map_err(|e| e.to_string())?;
    ensure(holm.reject == [true, false, false, true], || format!("fixture 1 rejections {:?}", holm.reject))?;
    let expected = [0.03, 0.06, 0.06, 0.02];
    ensure(holm.adjusted.iter().zip(expected).all(|(a, e)| (a - e).abs() < 1e-12), || {
        format!("fixture 1 adjusted {:?}", holm.adjusted)
    })?;
    let holm = holm_bonferroni(&[0.001, 0.0125, 0.02, 0.9], 0.05).map_err(|e| e.to_string())?;
    ensure(holm.reject == [true, true, true, false], || format!("fixture 2 rejections {:?}", holm.reject))?;
    let expected = [0.004, 0.0375, 0.04, 0.9];
    ensure(holm.adjusted.iter().zip(expected).all(|(a, e)| (a - e).abs() < 1e-12), || {
        format!("fixture 2 adjusted {:?}", holm.adjusted)
    })?;
    let holm = holm_bonferroni(&[0.001, 0.0125, 0.03, 0.9], 0.05).map_err(|e| e.to_string())?;
    ensure(holm.reject == [true, true, false, false], || format!("fixture 3 rejections {:?}", holm.reject))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2000 {
        let m = rng.random_range(1..=30);
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.0f64..1.0).powi(3)).collect();
        let alpha = rng.random_range(0.001..0.2);
        let r = holm_bonferroni(&p, alpha).map_err(|e| e.to_string())?;
        for i in 0..m {
            ensure(!r.reject[i] || p[i] <= alpha, || "Holm rejection not rejected uncorrected".to_string())?;
            ensure(!(p[i] <= alpha / m as f64) || r.reject[i], || "Bonferroni rejection missed".to_string())?;
        }
    }

    // 2 systems x 38 pairs x 20 listeners; planted pairs judged different by all
    let planted: BTreeMap<(System, usize), bool> = [System::AeKmeans, System::VaeVamp]
        .into_iter()
        .flat_map(|s| (0..38).map(move |i| ((s, i), i % 5 == 0 && (s == System::VaeVamp || i < 15))))
        .collect();
    let mut records = Vec::new();
    for (&(system, pair), &significant) in &planted {
        // unplanted pairs: 10 to 13 of 20 listeners hear a difference
        let k = if significant { 20 } else { 10 + pair % 4 };
        for l in 0..20 {
            records.push(JudgmentRecord {
                system,
                pair_id: format!("pair{pair:02}"),
                listener_id: format!("l{l}"),
                judged_different: l < k,
            });
        }
    }
    let rows = per_pair_report(&records, &ReportOptions::default()).map_err(|e| e.to_string())?;
    ensure(rows.len() == 76, || format!("{} rows", rows.len()))?;
    let recovered: Vec<bool> = rows.iter().map(|r| r.significant).collect();
    let wanted: Vec<bool> = planted.values().copied().collect();
    ensure(recovered == wanted, || "planted pairs not recovered exactly".to_string())?;
    Ok(format!(
        "{checked} binomial tails match exact rationals (max rel error {worst:.1e}); Holm fixtures and subset property hold; \
         {} planted pairs of 76 recovered exactly",
        wanted.iter().filter(|w| **w).count()
    ))
}

// ---------------------------------------------------------------- 7

const TINY_CONFIG: &str = "epochs = 4\nbatch_size = 8\nff_units = 16\ngru_units = 8\ngru_layers = 1\nlatent_dim = 4\n\
warmup_epochs = 1\nkl_zero_epochs = 1\nkl_ramp_epochs = 2\ncodes = 4\npseudo_lengths = 40,80,120\nseed = 5\ncheckpoint_every = 2\n";

const SENTENCE: &str = "[id]\ndemo\n[text]\nthe garden in the morning.\n[phones]\n0 10 sil\n10 30 d\n30 60 aa\n60 80 m\n\
80 110 ih\n110 150 n\n150 170 sil\n";

fn cli(args: &[&str]) -> Result<(), String> {
    let mut argv = vec!["intonation"];
    argv.extend_from_slice(args);
    match intonation_cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

fn pipeline(root: &Path) -> Result<(), String> {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let corpus = s(root.join("corpus"));
    let run = s(root.join("run"));
    let manifest = s(root.join("corpus/manifest.tsv"));
    let config = s(root.join("config.txt"));
    let sentence = s(root.join("sentence.txt"));
    fs::create_dir_all(root).map_err(|e| e.to_string())?;
    fs::write(&config, TINY_CONFIG).map_err(|e| e.to_string())?;
    fs::write(&sentence, SENTENCE).map_err(|e| e.to_string())?;
    cli(&["gen-data", "--out", &corpus, "--utts", "40", "--seed", "5", "--templates", "4"])?;
    cli(&["features", "--manifest", &manifest, "--run", &run, "--config", &config])?;
    cli(&["train", "--model", "ae", "--manifest", &manifest, "--run", &run])?;
    cli(&["train", "--model", "vamp", "--manifest", &manifest, "--run", &run])?;
    cli(&["cluster", "--manifest", &manifest, "--run", &run])?;
    cli(&["codes", "--run", &run])?;
    cli(&["synth", "--model", "vamp", "--run", &run, "--sentence", &sentence])?;
    cli(&["synth", "--model", "ae", "--run", &run, "--sentence", &sentence])
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Contents with the elapsed-time column of metrics files dropped.
fn comparable(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    if !path.to_string_lossy().ends_with("_metrics.tsv") {
        return bytes;
    }
    String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head).to_string() + "\n")
        .collect::<String>()
        .into_bytes()
}

fn criterion_7(dir: &Path) -> Outcome {
    let (a, b) = (dir.join("a"), dir.join("b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let (fa, fb) = (files(&a), files(&b));
    ensure(fa == fb, || "runs produced different file sets".into())?;
    let differing: Vec<String> = fa
        .iter()
        .filter(|p| comparable(&a.join(p)) != comparable(&b.join(p)))
        .map(|p| p.display().to_string())
        .collect();
    ensure(differing.is_empty(), || format!("differing artifacts: {}", differing.join(", ")))?;
    let expected = ["run/vamp.ckpt", "run/vamp_codebook.txt", "run/synth/vamp/plot.tsv", "run/ae_codebook.txt"];
    for e in expected {
        ensure(fa.iter().any(|p| p == Path::new(e)), || format!("missing {e}"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", fa.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let secs = Duration::from_secs;
    let results = [
        run_criterion(1, "gradient correctness", secs(60), criterion_1),
        run_criterion(2, "MLPG oracle", secs(10), criterion_2),
        run_criterion(3, "parser properties", secs(5), criterion_3),
        run_criterion(4, "KL estimator oracle", secs(30), criterion_4),
        run_criterion(5, "desk-scale learning", secs(30 * 60), || criterion_5(&tmp.path().join("c5"))),
        run_criterion(6, "statistics", secs(5), criterion_6),
        run_criterion(7, "determinism", secs(10 * 60), || criterion_7(&tmp.path().join("c7"))),
    ];
    let passed = results.iter().filter(|r| **r).count();
    let failed: Vec<String> = (1..).zip(&results).filter(|(_, ok)| !**ok).map(|(n, _)| n.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: {passed}/{} criteria passed", results.len());
    } else {
        println!(
            "acceptance: {passed}/{} criteria passed; FAILED: {}",
            results.len(),
            failed.join(", ")
        );
    }
    // A report by default; set INTONATION_ACCEPTANCE_STRICT=1 to gate on it.
    if !failed.is_empty() && std::env::var_os("INTONATION_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
