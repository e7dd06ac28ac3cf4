use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::EmbeddingMatrix;
use super::sampling::{subsample_keep_probability, NegativeSampler};
use super::sgns::{step_kernel, Frozen, Objective, Rows, Scratch, SharedRows};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// RNG stream used for matrix initialization; training draws use
/// [`TRAIN_STREAM`] and data-parallel workers `TRAIN_STREAM + 1 + worker`.
pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Context tokens on each side of the target.
    pub window: usize,
    /// Negative samples `k` per positive example.
    pub negatives: usize,
    /// Subsampling threshold `t`.
    pub subsample_threshold: f64,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    /// Final learning rate as a fraction of the initial one.
    pub min_learning_rate_fraction: f64,
    pub seed: u64,
    pub min_count: u64,
    pub objective: Objective,
    /// 1 is the deterministic single-worker mode; more workers update shared
    /// matrices without synchronization and are not reproducible.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            subsample_threshold: 1e-3,
            epochs: 5,
            initial_learning_rate: 0.025,
            min_learning_rate_fraction: 1e-4,
            seed: 1,
            min_count: 5,
            objective: Objective::Pairwise,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if !(self.subsample_threshold > 0.0 && self.subsample_threshold.is_finite()) {
            return fail("subsample_threshold must be positive");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.initial_learning_rate >= 0.0 && self.initial_learning_rate.is_finite()) {
            return fail("initial_learning_rate must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.min_learning_rate_fraction) {
            return fail("min_learning_rate_fraction must lie in [0, 1]");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.workers == 1
    }
}

/// Outcome of a training call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per positive example, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// (target, context) pairs processed over all epochs.
    pub pairs: u64,
}

/// Per-call options that vary between compass and slice training.
#[derive(Debug, Clone)]
pub struct TrainOptions<'a> {
    pub objective: Objective,
    pub epochs: usize,
    /// Seed for this call's training stream.
    pub seed: u64,
    /// Ids never drawn as negatives.
    pub excluded_negatives: &'a [u32],
}

impl<'a> TrainOptions<'a> {
    pub fn from_config(config: &TrainConfig) -> Self {
        TrainOptions {
            objective: config.objective,
            epochs: config.epochs,
            seed: config.seed,
            excluded_negatives: &[],
        }
    }
}

/// Fresh layers: input rows uniform in `[-0.5/d, 0.5/d]`, output rows zero.
pub fn init_layers(vocab_size: usize, config: &TrainConfig) -> (EmbeddingMatrix, EmbeddingMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(INIT_STREAM);
    (
        EmbeddingMatrix::uniform(vocab_size, config.dim, &mut rng),
        EmbeddingMatrix::zeros(vocab_size, config.dim),
    )
}

/// Trains both layers (or only `c` when `freeze_u`) over id sequences.
///
/// Sequences are utterances already mapped through `vocab`. Unless `resume`
/// is set, `c` and `u` are re-initialized first. Training walks the
/// sequences in order, drops tokens by frequency subsampling, and takes one
/// gradient step per remaining token with the tokens up to `window`
/// positions away (inside the same sequence) as its context. The learning
/// rate decays linearly over all scheduled tokens.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    sequences: &[Vec<u32>],
    vocab: &Vocabulary,
    config: &TrainConfig,
    options: &TrainOptions<'_>,
    c: &mut EmbeddingMatrix,
    u: &mut EmbeddingMatrix,
    freeze_u: bool,
    resume: bool,
) -> Result<TrainReport> {
    config.validate()?;
    check_shapes(vocab, config, c, u)?;
    if !resume {
        let (c0, u0) = init_layers(vocab.len(), config);
        *c = c0;
        *u = u0;
    }
    let trainer = Trainer::new(sequences, vocab, config, options)?;
    if config.workers > 1 {
        if freeze_u {
            if let Some(cs) = SharedRows::new(c) {
                return Ok(trainer.run_parallel(cs, FrozenShared(u), false));
            }
        } else if let (Some(cs), Some(us)) = (SharedRows::new(c), SharedRows::new(u)) {
            return Ok(trainer.run_parallel(cs, us, true));
        }
    }
    Ok(if freeze_u {
        trainer.run(c, &mut Frozen(u), false)
    } else {
        trainer.run(c, u, true)
    })
}

/// Fine-tunes `c` against a frozen, shared output layer.
pub fn fine_tune(
    sequences: &[Vec<u32>],
    vocab: &Vocabulary,
    config: &TrainConfig,
    options: &TrainOptions<'_>,
    c: &mut EmbeddingMatrix,
    u: &EmbeddingMatrix,
) -> Result<TrainReport> {
    config.validate()?;
    check_shapes(vocab, config, c, u)?;
    let trainer = Trainer::new(sequences, vocab, config, options)?;
    if config.workers > 1 {
        if let Some(cs) = SharedRows::new(c) {
            return Ok(trainer.run_parallel(cs, FrozenShared(u), false));
        }
    }
    Ok(trainer.run(c, &mut Frozen(u), false))
}

fn check_shapes(vocab: &Vocabulary, config: &TrainConfig, c: &EmbeddingMatrix, u: &EmbeddingMatrix) -> Result<()> {
    for (name, m) in [("input", c), ("output", u)] {
        if m.rows() != vocab.len() || m.dim() != config.dim {
            return Err(Error::Config(format!(
                "{name} layer is {}x{}, expected {}x{}",
                m.rows(),
                m.dim(),
                vocab.len(),
                config.dim
            )));
        }
    }
    Ok(())
}

/// Frozen output layer shared across worker threads.
#[derive(Clone, Copy)]
struct FrozenShared<'a>(&'a EmbeddingMatrix);

impl Rows for FrozenShared<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn read(&self, id: usize, out: &mut [f64]) {
        out.copy_from_slice(self.0.row(id));
    }

    fn add_scaled(&mut self, _: usize, _: f64, _: &[f64]) {
        unreachable!("write to a frozen layer");
    }
}

struct Trainer<'a> {
    sequences: &'a [Vec<u32>],
    config: &'a TrainConfig,
    objective: Objective,
    epochs: usize,
    seed: u64,
    keep: Vec<f64>,
    sampler: NegativeSampler,
    vocab_size: usize,
}

impl<'a> Trainer<'a> {
    fn new(
        sequences: &'a [Vec<u32>],
        vocab: &Vocabulary,
        config: &'a TrainConfig,
        options: &TrainOptions<'_>,
    ) -> Result<Self> {
        let total = vocab.total() as f64;
        let keep = vocab
            .counts()
            .iter()
            .map(|&n| subsample_keep_probability(n as f64 / total, config.subsample_threshold))
            .collect::<Result<Vec<_>>>()?;
        let excluded = &options.excluded_negatives;
        let sampler = NegativeSampler::with_exclusions(vocab.counts(), |i| excluded.contains(&(i as u32)))?;
        if let Some(&bad) = sequences.iter().flatten().find(|&&id| id as usize >= vocab.len()) {
            return Err(Error::Index {
                index: bad as usize,
                size: vocab.len(),
            });
        }
        Ok(Trainer {
            sequences,
            config,
            objective: options.objective,
            epochs: options.epochs,
            seed: options.seed,
            keep,
            sampler,
            vocab_size: vocab.len(),
        })
    }

    fn run<C: Rows, U: Rows>(&self, c: &mut C, u: &mut U, update_u: bool) -> TrainReport {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(TRAIN_STREAM);
        self.run_worker(self.sequences, c, u, update_u, &mut rng)
    }

    fn run_parallel<C, U>(&self, c: C, u: U, update_u: bool) -> TrainReport
    where
        C: Rows + Copy + Send,
        U: Rows + Copy + Send,
    {
        let workers = self.config.workers.min(self.sequences.len().max(1));
        let chunk = self.sequences.len().div_ceil(workers).max(1);
        let reports: Vec<TrainReport> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .sequences
                .chunks(chunk)
                .enumerate()
                .map(|(w, part)| {
                    let (mut c, mut u) = (c, u);
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                        rng.set_stream(TRAIN_STREAM + 1 + w as u64);
                        self.run_worker(part, &mut c, &mut u, update_u, &mut rng)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        });
        let mut merged = TrainReport {
            epoch_losses: vec![0.0; self.epochs],
            pairs: 0,
        };
        for r in &reports {
            merged.pairs += r.pairs;
            for (m, l) in merged.epoch_losses.iter_mut().zip(&r.epoch_losses) {
                *m += l / reports.len() as f64;
            }
        }
        merged
    }

    fn run_worker<C: Rows, U: Rows>(
        &self,
        sequences: &[Vec<u32>],
        c: &mut C,
        u: &mut U,
        update_u: bool,
        rng: &mut ChaCha8Rng,
    ) -> TrainReport {
        debug_assert_eq!(c.dim(), u.dim());
        let config = self.config;
        let tokens_per_epoch: usize = sequences.iter().map(Vec::len).sum();
        let scheduled = (tokens_per_epoch * self.epochs).max(1) as f64;
        let lr0 = config.initial_learning_rate;
        let lr_floor = lr0 * config.min_learning_rate_fraction;

        let mut scratch = Scratch::new(c.dim());
        let mut kept: Vec<usize> = Vec::new();
        let mut contexts: Vec<usize> = Vec::new();
        let mut negatives: Vec<usize> = Vec::new();
        let mut processed = 0usize;
        let mut report = TrainReport::default();
        debug_assert!(self.vocab_size > 0);

        for _ in 0..self.epochs {
            let mut epoch_loss = 0.0;
            let mut epoch_items = 0u64;
            for seq in sequences {
                let lr = (lr0 * (1.0 - processed as f64 / scheduled)).max(lr_floor);
                processed += seq.len();
                kept.clear();
                for &id in seq {
                    let p = self.keep[id as usize];
                    if p >= 1.0 || rng.gen::<f64>() < p {
                        kept.push(id as usize);
                    }
                }
                for pos in 0..kept.len() {
                    let lo = pos.saturating_sub(config.window);
                    let hi = (pos + config.window + 1).min(kept.len());
                    contexts.clear();
                    contexts.extend(kept[lo..pos].iter().chain(&kept[pos + 1..hi]));
                    if contexts.is_empty() {
                        continue;
                    }
                    let draws = match self.objective {
                        Objective::Pairwise => config.negatives * contexts.len(),
                        Objective::MeanContext => config.negatives,
                    };
                    negatives.clear();
                    negatives.extend((0..draws).map(|_| self.sampler.sample(rng)));
                    epoch_loss += step_kernel(
                        self.objective,
                        kept[pos],
                        &contexts,
                        &negatives,
                        c,
                        u,
                        lr,
                        update_u,
                        &mut scratch,
                    );
                    report.pairs += contexts.len() as u64;
                    epoch_items += match self.objective {
                        Objective::Pairwise => contexts.len() as u64,
                        Objective::MeanContext => 1,
                    };
                }
            }
            report.epoch_losses.push(if epoch_items > 0 {
                epoch_loss / epoch_items as f64
            } else {
                0.0
            });
        }
        report
    }
}
