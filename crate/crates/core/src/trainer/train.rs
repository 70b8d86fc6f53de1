use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, backward, forward, init_network, AdamState, ConvNetParams, TrainError};
use crate::losses::{psnr, ratio_distance, total_loss_with_components, LossComponents, LossWeights};
use crate::phantom::{derive_seed, Dataset, TrainingSample};

/// Number of trailing validation points averaged into the converged value.
pub const CONVERGED_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_halving_period_epochs: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub deterministic: bool,
    /// Validate every this many optimizer steps.
    pub validation_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr0: 1e-4,
            lr_halving_period_epochs: 10,
            epochs: 40,
            weights: LossWeights::default(),
            seed: 0,
            deterministic: true,
            validation_interval: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.lr_halving_period_epochs == 0 {
            return bad("lr_halving_period_epochs must be at least 1");
        }
        if self.validation_interval == 0 {
            return bad("validation_interval must be at least 1");
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// `lr0 · 0.5^floor(epoch / period)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = epoch / cfg.lr_halving_period_epochs.max(1);
    cfg.lr0 * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}

/// One validation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Training loss terms averaged over the steps since the previous record.
    pub loss: LossComponents,
    pub val_psnr: f64,
    pub val_d_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_psnr: f64,
    pub final_d_ratio: f64,
    pub best_psnr: f64,
    pub best_d_ratio: f64,
    /// Mean over the last [`CONVERGED_WINDOW`] validation points.
    pub converged_psnr: f64,
    pub converged_d_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    /// Weighted training loss of every optimizer step (batch mean).
    pub step_losses: Vec<f64>,
}

impl TrainingLog {
    pub fn summary(&self) -> Option<RunSummary> {
        let last = self.records.last()?;
        let tail = &self.records[self.records.len().saturating_sub(CONVERGED_WINDOW)..];
        let n = tail.len() as f64;
        Some(RunSummary {
            final_psnr: last.val_psnr,
            final_d_ratio: last.val_d_ratio,
            best_psnr: self.records.iter().map(|r| r.val_psnr).fold(f64::NEG_INFINITY, f64::max),
            best_d_ratio: self.records.iter().map(|r| r.val_d_ratio).fold(f64::INFINITY, f64::min),
            converged_psnr: tail.iter().map(|r| r.val_psnr).sum::<f64>() / n,
            converged_d_ratio: tail.iter().map(|r| r.val_d_ratio).sum::<f64>() / n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub psnr_mean: f64,
    pub d_ratio_mean: f64,
}

/// Sums in ascending order so the result does not depend on input order.
fn order_free_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.into_iter().sum::<f64>() / n
}

/// Mean PSNR and mean per-slice `d_ratio` of the network's predictions.
pub fn evaluate(params: &ConvNetParams, samples: &[TrainingSample]) -> Result<Evaluation, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let per_slice: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let (pred, _) = forward(params, &s.input);
            Ok((psnr(&pred, &s.gt_dwi)?, ratio_distance(&pred, &s.gt_dwi, &s.gt_b0)?))
        })
        .collect::<Result<_, TrainError>>()?;
    let (p, d): (Vec<f64>, Vec<f64>) = per_slice.into_iter().unzip();
    Ok(Evaluation { psnr_mean: order_free_mean(p), d_ratio_mean: order_free_mean(d) })
}

struct SampleResult {
    grads: ConvNetParams,
    loss: LossComponents,
}

fn sample_gradient(
    params: &ConvNetParams,
    s: &TrainingSample,
    weights: &LossWeights,
) -> Result<SampleResult, TrainError> {
    let (pred, cache) = forward(params, &s.input);
    let (lv, loss) = total_loss_with_components(&pred, &s.gt_dwi, &s.gt_b0, weights)?;
    let g = backward(params, &cache, &lv.gradient)?;
    Ok(SampleResult { grads: g.params, loss })
}

fn add_loss(acc: &mut LossComponents, l: &LossComponents, scale: f64) {
    acc.total += scale * l.total;
    acc.mse += scale * l.mse;
    acc.fft += scale * l.fft;
    acc.ratio_log += scale * l.ratio_log;
}

fn batch_gradient(
    params: &ConvNetParams,
    batch: &[&TrainingSample],
    cfg: &TrainConfig,
) -> Result<(ConvNetParams, LossComponents), TrainError> {
    let inv = 1.0 / batch.len() as f64;
    let mut grads = ConvNetParams::zeros_like(params);
    let mut loss = LossComponents::default();
    if cfg.deterministic {
        for s in batch {
            let r = sample_gradient(params, s, &cfg.weights)?;
            grads.add_scaled(inv, &r.grads);
            add_loss(&mut loss, &r.loss, inv);
        }
    } else {
        let (g, l) = batch
            .par_iter()
            .map(|s| sample_gradient(params, s, &cfg.weights))
            .try_fold(
                || (ConvNetParams::zeros_like(params), LossComponents::default()),
                |(mut g, mut l), r| {
                    let r = r?;
                    g.add_scaled(inv, &r.grads);
                    add_loss(&mut l, &r.loss, inv);
                    Ok::<_, TrainError>((g, l))
                },
            )
            .try_reduce(
                || (ConvNetParams::zeros_like(params), LossComponents::default()),
                |(mut g1, mut l1), (g2, l2)| {
                    g1.add_scaled(1.0, &g2);
                    add_loss(&mut l1, &l2, 1.0);
                    Ok((g1, l1))
                },
            )?;
        grads = g;
        loss = l;
    }
    Ok((grads, loss))
}

/// Epoch order of the training set, shared by every arm trained with `seed`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5348_5546 + epoch as u64));
    idx.shuffle(&mut rng);
    idx
}

/// Minibatch Adam training with periodic validation.
///
/// The network is initialized from `cfg.seed`, each epoch reshuffles the
/// training set with a stream derived from `cfg.seed`, and every
/// `validation_interval` steps (plus the last step) the full validation set
/// is evaluated and logged.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(ConvNetParams, TrainingLog), TrainError> {
    train_from(dataset, cfg, init_network(cfg.seed))
}

pub fn train_from(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut params: ConvNetParams,
) -> Result<(ConvNetParams, TrainingLog), TrainError> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(TrainError::EmptyDataset("train"));
    }
    if dataset.validation.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let mut state = AdamState::new(&params);
    let mut log = TrainingLog { records: Vec::new(), step_losses: Vec::new() };
    let mut since_record = LossComponents::default();
    let mut steps_since_record = 0usize;
    let mut step = 0usize;
    let steps_per_epoch = dataset.train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let order = epoch_order(dataset.train.len(), cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let (grads, loss) = batch_gradient(&params, &batch, cfg)?;
            adam_step(&mut params, &grads, &mut state, lr)?;
            step += 1;
            log.step_losses.push(loss.total);
            add_loss(&mut since_record, &loss, 1.0);
            steps_since_record += 1;

            if step % cfg.validation_interval == 0 || step == total_steps {
                let eval = evaluate(&params, &dataset.validation)?;
                let mut mean_loss = LossComponents::default();
                add_loss(&mut mean_loss, &since_record, 1.0 / steps_since_record as f64);
                log.records.push(LogRecord {
                    step,
                    epoch,
                    lr,
                    loss: mean_loss,
                    val_psnr: eval.psnr_mean,
                    val_d_ratio: eval.d_ratio_mean,
                });
                since_record = LossComponents::default();
                steps_since_record = 0;
            }
        }
    }
    if !params.is_finite() {
        return Err(TrainError::Diverged);
    }
    Ok((params, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub weights: LossWeights,
    pub summary: RunSummary,
    pub log: TrainingLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub baseline: ArmResult,
    pub ratio: ArmResult,
    /// `sign(ratio converged d_ratio - baseline converged d_ratio)`.
    pub d_ratio_difference_sign: i8,
    /// `ratio final PSNR - baseline final PSNR`, in dB.
    pub final_psnr_delta_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<SeedComparison>,
    /// Seeds where the ratio arm's converged d_ratio is strictly lower.
    pub ratio_lower_d_ratio: usize,
    /// Seeds where the ratio arm's final PSNR is at most 0.5 dB below baseline.
    pub ratio_psnr_within_half_db: usize,
}

/// Trains the baseline arm (`w_ratio_log = 0`) and the ratio arm
/// (`cfg.weights`) for every seed. Both arms of a seed share initialization
/// and data order, so the loss weights are the only difference.
pub fn compare_arms(dataset: &Dataset, cfg: &TrainConfig, seeds: &[u64]) -> Result<ComparisonReport, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::InvalidConfig("at least one seed is required".into()));
    }
    if cfg.weights.w_ratio_log <= 0.0 {
        return Err(TrainError::InvalidConfig("the ratio arm needs w_ratio_log > 0".into()));
    }
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run = |weights: LossWeights| -> Result<ArmResult, TrainError> {
            let arm_cfg = TrainConfig { seed, weights, ..*cfg };
            let (_, log) = train(dataset, &arm_cfg)?;
            let summary = log.summary().ok_or(TrainError::EmptyDataset("validation records"))?;
            Ok(ArmResult { weights, summary, log })
        };
        let baseline = run(LossWeights { w_ratio_log: 0.0, ..cfg.weights })?;
        let ratio = run(cfg.weights)?;
        let diff = ratio.summary.converged_d_ratio - baseline.summary.converged_d_ratio;
        let sign = if diff < 0.0 { -1 } else if diff > 0.0 { 1 } else { 0 };
        let psnr_delta = ratio.summary.final_psnr - baseline.summary.final_psnr;
        out.push(SeedComparison {
            seed,
            baseline,
            ratio,
            d_ratio_difference_sign: sign,
            final_psnr_delta_db: psnr_delta,
        });
    }
    let ratio_lower_d_ratio = out.iter().filter(|s| s.d_ratio_difference_sign < 0).count();
    let ratio_psnr_within_half_db = out.iter().filter(|s| s.final_psnr_delta_db >= -0.5).count();
    Ok(ComparisonReport { seeds: out, ratio_lower_d_ratio, ratio_psnr_within_half_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::ConvNetParams;
    use ndarray::Array2;

    fn toy_dataset() -> Dataset {
        let mk = |k: usize| {
            let gt = Array2::from_shape_fn((8, 8), |(i, j)| 0.2 + 0.05 * ((i * 3 + j + k) % 7) as f64);
            let b0 = gt.mapv(|v| v * 1.5);
            let input = gt.mapv(|v| v * 0.9 + 0.01);
            TrainingSample { input, gt_dwi: gt, gt_b0: b0 }
        };
        Dataset { train: (0..10).map(mk).collect(), validation: (10..13).map(mk).collect() }
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 1e-4);
        assert_eq!(lr_at(9, &cfg), 1e-4);
        assert_eq!(lr_at(10, &cfg), 5e-5);
        assert!((lr_at(25, &cfg) - 2.5e-5).abs() < 1e-20);
        for e in 0..=100 {
            assert_eq!(lr_at(e, &cfg), 1e-4 * 0.5f64.powi((e / 10) as i32));
        }
    }

    #[test]
    fn empty_dataset_errors() {
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(train(&Dataset::default(), &cfg), Err(TrainError::EmptyDataset("train"))));
        let mut ds = toy_dataset();
        ds.validation.clear();
        assert!(matches!(train(&ds, &cfg), Err(TrainError::EmptyDataset("validation"))));
        assert!(evaluate(&ConvNetParams::zeros(), &[]).is_err());
    }

    #[test]
    fn identity_network_on_perfect_inputs() {
        let mut ds = toy_dataset();
        for s in ds.validation.iter_mut() {
            s.input = s.gt_dwi.clone();
        }
        let e = evaluate(&ConvNetParams::zeros(), &ds.validation).unwrap();
        assert_eq!(e.psnr_mean, f64::INFINITY);
        assert_eq!(e.d_ratio_mean, 0.0);
    }

    #[test]
    fn evaluation_ignores_order_and_repeats() {
        let ds = toy_dataset();
        let p = init_network(1);
        let a = evaluate(&p, &ds.validation).unwrap();
        let mut rev = ds.validation.clone();
        rev.reverse();
        assert_eq!(a, evaluate(&p, &rev).unwrap());
        assert_eq!(a, evaluate(&p, &ds.validation).unwrap());
    }

    #[test]
    fn log_structure_and_determinism() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 12, batch_size: 4, validation_interval: 5, ..TrainConfig::default() };
        let (p1, log1) = train(&ds, &cfg).unwrap();
        let (p2, log2) = train(&ds, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(log1, log2);
        // 3 steps per epoch, 36 steps: records at 5, 10, ..., 35 and the last step.
        let steps: Vec<usize> = log1.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![5, 10, 15, 20, 25, 30, 35, 36]);
        for r in &log1.records {
            assert_eq!(r.lr, lr_at(r.epoch, &cfg));
            assert!(r.val_d_ratio.is_finite());
        }
        assert_eq!(log1.step_losses.len(), 36);
    }

    #[test]
    fn parallel_mode_matches_sequential_closely() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 2, batch_size: 5, validation_interval: 2, ..TrainConfig::default() };
        let (a, _) = train(&ds, &cfg).unwrap();
        let (b, _) = train(&ds, &TrainConfig { deterministic: false, ..cfg }).unwrap();
        for (x, y) in a.tensors().iter().zip(b.tensors()) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn baseline_arm_still_logs_d_ratio() {
        let ds = toy_dataset();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 5,
            validation_interval: 2,
            weights: LossWeights::baseline(),
            ..TrainConfig::default()
        };
        let (_, log) = train(&ds, &cfg).unwrap();
        assert!(log.records.iter().all(|r| r.val_d_ratio > 0.0 && r.loss.ratio_log > 0.0));
    }

    #[test]
    fn compare_arms_shares_data_order() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 2, batch_size: 5, validation_interval: 2, ..TrainConfig::default() };
        let report = compare_arms(&ds, &cfg, &[3]).unwrap();
        let s = &report.seeds[0];
        assert_eq!(s.baseline.weights.w_ratio_log, 0.0);
        assert_eq!(s.ratio.weights.w_ratio_log, 0.01);
        let steps = |a: &ArmResult| a.log.records.iter().map(|r| (r.step, r.epoch)).collect::<Vec<_>>();
        assert_eq!(steps(&s.baseline), steps(&s.ratio));
        assert!(compare_arms(&ds, &cfg, &[]).is_err());
    }

    #[test]
    fn summary_uses_trailing_window() {
        let rec = |step: usize, d: f64| LogRecord {
            step,
            epoch: 0,
            lr: 1e-4,
            loss: LossComponents::default(),
            val_psnr: 30.0 + step as f64,
            val_d_ratio: d,
        };
        let log = TrainingLog {
            records: (1..=7).map(|i| rec(i, i as f64)).collect(),
            step_losses: vec![],
        };
        let s = log.summary().unwrap();
        assert_eq!(s.converged_d_ratio, (3.0 + 4.0 + 5.0 + 6.0 + 7.0) / 5.0);
        assert_eq!(s.final_d_ratio, 7.0);
        assert_eq!(s.best_d_ratio, 1.0);
        assert_eq!(s.best_psnr, 37.0);
    }
}
