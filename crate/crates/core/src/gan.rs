//! Adversarial transfer from product-description embeddings to review
//! embeddings. The sentiment condition lives on the discriminator: only
//! organic reviews matching the condition count as real; mismatched organics
//! and generated samples are negatives. The generator takes no condition
//! input — one bundle is trained per designated sentiment.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Sentiment;
use crate::math;
use crate::optim::Adam;
use crate::recursive::ReviewEmbedding;
use crate::rng::seeded;
use crate::tape::{Tape, Var};
use crate::tensor::{stack_rows, Tensor};

/// Probability floor for the clipped logs inside both losses.
pub const LOG_EPS: f64 = 1e-7;

/// One hidden layer of ReLU units.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        sd: f64,
        rng: &mut R,
    ) -> Self {
        Mlp {
            w1: Tensor::normal(in_dim, hidden_dim, 0.0, sd, rng),
            b1: Tensor::normal(1, hidden_dim, 0.0, sd, rng),
            w2: Tensor::normal(hidden_dim, out_dim, 0.0, sd, rng),
            b2: Tensor::normal(1, out_dim, 0.0, sd, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Mlp {
            w1: Tensor::zeros(in_dim, hidden_dim),
            b1: Tensor::zeros(1, hidden_dim),
            w2: Tensor::zeros(hidden_dim, out_dim),
            b2: Tensor::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.matmul(&self.w1)
            .add_row(&self.b1)
            .relu()
            .matmul(&self.w2)
            .add_row(&self.b2)
    }

    pub fn leaves(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            w1: tape.leaf(&self.w1),
            b1: tape.leaf(&self.b1),
            w2: tape.leaf(&self.w2),
            b2: tape.leaf(&self.b2),
        }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (alloc::format!("{prefix}.w1"), &self.w1),
            (alloc::format!("{prefix}.b1"), &self.b1),
            (alloc::format!("{prefix}.w2"), &self.w2),
            (alloc::format!("{prefix}.b2"), &self.b2),
        ]
    }

    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (alloc::format!("{prefix}.w1"), &mut self.w1),
            (alloc::format!("{prefix}.b1"), &mut self.b1),
            (alloc::format!("{prefix}.w2"), &mut self.w2),
            (alloc::format!("{prefix}.b2"), &mut self.b2),
        ]
    }
}

#[derive(Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = tape.matmul(x, self.w1);
        let h = tape.add_row(h, self.b1);
        let h = tape.relu(h);
        let o = tape.matmul(h, self.w2);
        tape.add_row(o, self.b2)
    }

    pub fn all(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

#[derive(Clone, Debug)]
pub struct GanConfig {
    pub embed_dim: usize,
    pub noise_dim: usize,
    pub hidden_dim: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    /// Generator updates per cycle.
    pub generator_steps: usize,
    /// Discriminator updates per cycle.
    pub discriminator_steps: usize,
    pub total_updates: usize,
    pub batch_size: usize,
    /// Weight of the paired reconstruction term in the generator loss.
    pub mse_weight: f64,
    /// When false the condition input is zeroed and every organic review is
    /// a real example (plain-GAN ablation).
    pub conditioned: bool,
    pub init_sd: f64,
    pub probe_every: usize,
    pub seed: u64,
}

impl GanConfig {
    pub fn new(embed_dim: usize) -> Self {
        GanConfig {
            embed_dim,
            noise_dim: 100,
            hidden_dim: 300,
            lr_generator: 5e-5,
            lr_discriminator: 1e-5,
            generator_steps: 5,
            discriminator_steps: 1,
            total_updates: 30_000,
            batch_size: 32,
            mse_weight: 1.0,
            conditioned: true,
            init_sd: 0.02,
            probe_every: 500,
            seed: 42,
        }
    }
}

/// Generator, conditioned discriminator, designated condition, and schedule
/// state.
#[derive(Clone, Debug)]
pub struct GanBundle {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub condition: Sentiment,
    pub noise_dim: usize,
    pub conditioned: bool,
    pub generator_updates: u64,
    pub discriminator_updates: u64,
}

impl GanBundle {
    pub fn init<R: Rng + ?Sized>(config: &GanConfig, condition: Sentiment, rng: &mut R) -> Self {
        GanBundle {
            generator: Mlp::init(
                config.embed_dim + config.noise_dim,
                config.hidden_dim,
                config.embed_dim,
                config.init_sd,
                rng,
            ),
            discriminator: Mlp::init(
                config.embed_dim + 1,
                config.hidden_dim,
                1,
                config.init_sd,
                rng,
            ),
            condition,
            noise_dim: config.noise_dim,
            conditioned: config.conditioned,
            generator_updates: 0,
            discriminator_updates: 0,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.generator.out_dim()
    }

    fn condition_scalar(&self, c: Sentiment) -> f64 {
        if !self.conditioned {
            return 0.0;
        }
        match c {
            Sentiment::Positive => 1.0,
            Sentiment::Negative => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub description: ReviewEmbedding,
    pub real_review: ReviewEmbedding,
    pub sentiment: Sentiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    /// Organic review whose sentiment matches the condition.
    OrganicMatch,
    /// Organic review of the opposite sentiment.
    OrganicMismatch,
    Generated,
}

/// The discriminator's target for a sample under a condition: only
/// condition-matching organic reviews are real.
pub fn target_label(kind: SampleKind, _condition: Sentiment) -> u8 {
    match kind {
        SampleKind::OrganicMatch => 1,
        SampleKind::OrganicMismatch | SampleKind::Generated => 0,
    }
}

/// Map a description embedding plus noise through the generator.
/// Deterministic in (parameters, description, noise); the sentence count is
/// carried over from the description and may be overridden by the caller.
pub fn generate(bundle: &GanBundle, description: &ReviewEmbedding, noise: &[f64]) -> ReviewEmbedding {
    assert_eq!(noise.len(), bundle.noise_dim, "noise dimension mismatch");
    let input = description
        .vector
        .concat_cols(&Tensor::row_vec(noise.to_vec()));
    ReviewEmbedding::new(bundle.generator.forward(&input), description.sentence_count)
}

/// Discriminator probability that `x` is an organic review matching
/// condition `c`. Always in (0, 1).
pub fn discriminate(bundle: &GanBundle, x: &Tensor, c: Sentiment) -> f64 {
    let input = x.concat_cols(&Tensor::row_vec(vec![bundle.condition_scalar(c)]));
    math::sigmoid(bundle.discriminator.forward(&input).at(0, 0))
}

/// A labeled discriminator sample.
#[derive(Clone, Debug)]
pub struct DiscriminatorSample {
    pub x: Tensor,
    pub condition: Sentiment,
    pub target: u8,
}

impl DiscriminatorSample {
    pub fn from_kind(x: Tensor, kind: SampleKind, condition: Sentiment) -> Self {
        DiscriminatorSample {
            x,
            condition,
            target: target_label(kind, condition),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GanError {
    /// The discriminator batch lacks a positive- or negative-target group.
    OneSidedBatch,
    /// No training pair matches the bundle's designated sentiment.
    NoMatchingPairs,
    NonFiniteLoss {
        step: usize,
        loss: f64,
    },
}

impl core::fmt::Display for GanError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GanError::OneSidedBatch => {
                write!(f, "discriminator batch needs both real and fake targets")
            }
            GanError::NoMatchingPairs => {
                write!(f, "no training pair matches the designated sentiment")
            }
            GanError::NonFiniteLoss { step, loss } => {
                write!(f, "non-finite adversarial loss {loss} at update {step}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GanError {}

/// Symmetric cross-entropy over probability groups:
/// -1/2 mean ln p over target-1 samples - 1/2 mean ln (1 - p) over target-0
/// samples, with logs clipped at [`LOG_EPS`].
pub fn symmetric_cross_entropy(real_probs: &[f64], fake_probs: &[f64]) -> f64 {
    let mean_ln = |ps: &[f64]| -> f64 {
        ps.iter().map(|&p| math::ln(p.max(LOG_EPS))).sum::<f64>() / ps.len() as f64
    };
    let mean_ln_one_minus = |ps: &[f64]| -> f64 {
        ps.iter()
            .map(|&p| math::ln((1.0 - p).max(LOG_EPS)))
            .sum::<f64>()
            / ps.len() as f64
    };
    -0.5 * mean_ln(real_probs) - 0.5 * mean_ln_one_minus(fake_probs)
}

/// Discriminator loss over a labeled batch. Errors unless both target
/// groups are present.
pub fn discriminator_loss(
    bundle: &GanBundle,
    samples: &[DiscriminatorSample],
) -> Result<f64, GanError> {
    let mut real = Vec::new();
    let mut fake = Vec::new();
    for s in samples {
        let p = discriminate(bundle, &s.x, s.condition);
        if s.target == 1 {
            real.push(p);
        } else {
            fake.push(p);
        }
    }
    if real.is_empty() || fake.is_empty() {
        return Err(GanError::OneSidedBatch);
    }
    Ok(symmetric_cross_entropy(&real, &fake))
}

/// Generator loss over pairs: non-saturating adversarial term
/// -mean ln D(G(desc, z) | c) plus `mse_weight` times the mean squared error
/// against the paired real review embedding.
pub fn generator_loss(
    bundle: &GanBundle,
    pairs: &[TrainingPair],
    noises: &[Vec<f64>],
    mse_weight: f64,
) -> f64 {
    assert_eq!(pairs.len(), noises.len());
    assert!(!pairs.is_empty());
    let mut adv = 0.0;
    let mut mse = 0.0;
    let mut coords = 0usize;
    for (pair, noise) in pairs.iter().zip(noises.iter()) {
        let g = generate(bundle, &pair.description, noise);
        let p = discriminate(bundle, &g.vector, pair.sentiment);
        adv += -math::ln(p.max(LOG_EPS));
        for (a, b) in g.vector.data().iter().zip(pair.real_review.vector.data()) {
            let d = a - b;
            mse += d * d;
            coords += 1;
        }
    }
    adv / pairs.len() as f64 + mse_weight * mse / coords as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanProbe {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Mean D over condition-matching organic reviews.
    pub d_real: f64,
    /// Mean D over generated samples.
    pub d_fake: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GanHistory {
    pub probes: Vec<GanProbe>,
    /// Pairs excluded from generator pairing for not matching the designated
    /// sentiment.
    pub skipped_pairs: usize,
}

fn gen_batch_graph(
    tape: &mut Tape,
    g: &MlpVars,
    descs: &Tensor,
    noises: &Tensor,
) -> Var {
    let desc_var = tape.leaf(descs);
    let noise_var = tape.leaf(noises);
    let input = tape.concat_cols(desc_var, noise_var);
    g.forward(tape, input)
}

fn probs_graph(tape: &mut Tape, d: &MlpVars, x: Var, conditions: &Tensor) -> Var {
    let cond = tape.leaf(conditions);
    let input = tape.concat_cols(x, cond);
    let logits = d.forward(tape, input);
    tape.sigmoid(logits)
}

/// Taped discriminator loss; `x` rows are samples, `targets[i]` in {0, 1}.
pub fn discriminator_loss_graph(
    tape: &mut Tape,
    d: &MlpVars,
    x: Var,
    conditions: &Tensor,
    targets: &[u8],
) -> Var {
    let probs = probs_graph(tape, d, x, conditions);
    let mut real_rows = Vec::new();
    let mut fake_rows = Vec::new();
    for (i, &t) in targets.iter().enumerate() {
        let row = tape.row(probs, i);
        if t == 1 {
            real_rows.push(row);
        } else {
            fake_rows.push(row);
        }
    }
    assert!(!real_rows.is_empty() && !fake_rows.is_empty());
    let real = tape.stack_rows(real_rows);
    let ln_real = tape.ln_clamped(real, LOG_EPS);
    let mean_real = tape.mean_all(ln_real);
    let fake = tape.stack_rows(fake_rows);
    let neg_fake = tape.scale(fake, -1.0);
    let one_minus = tape.add_scalar(neg_fake, 1.0);
    let ln_fake = tape.ln_clamped(one_minus, LOG_EPS);
    let mean_fake = tape.mean_all(ln_fake);
    let sum = tape.add(mean_real, mean_fake);
    tape.scale(sum, -0.5)
}

/// Taped generator loss: adversarial term through a frozen discriminator
/// plus paired reconstruction.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss_graph(
    tape: &mut Tape,
    g: &MlpVars,
    d: &MlpVars,
    descs: &Tensor,
    noises: &Tensor,
    reals: &Tensor,
    conditions: &Tensor,
    mse_weight: f64,
) -> Var {
    let gen = gen_batch_graph(tape, g, descs, noises);
    let probs = probs_graph(tape, d, gen, conditions);
    let ln_p = tape.ln_clamped(probs, LOG_EPS);
    let mean_ln = tape.mean_all(ln_p);
    let adv = tape.scale(mean_ln, -1.0);
    let real_var = tape.leaf(reals);
    let mse = tape.mse(gen, real_var);
    let weighted = tape.scale(mse, mse_weight);
    tape.add(adv, weighted)
}

fn sample_noise<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let data: Vec<f64> = (0..n * dim).map(|_| normal.sample(rng)).collect();
    Tensor::from_vec(n, dim, data)
}

fn condition_column(bundle: &GanBundle, conditions: &[Sentiment]) -> Tensor {
    Tensor::from_vec(
        conditions.len(),
        1,
        conditions
            .iter()
            .map(|&c| bundle.condition_scalar(c))
            .collect(),
    )
}

/// Mean discriminator outputs over organic matching reviews and freshly
/// generated samples.
pub fn equilibrium_probe<R: Rng + ?Sized>(
    bundle: &GanBundle,
    pairs: &[TrainingPair],
    limit: usize,
    rng: &mut R,
) -> (f64, f64) {
    let take = pairs.len().min(limit.max(1));
    let mut d_real = 0.0;
    let mut d_fake = 0.0;
    for pair in pairs.iter().take(take) {
        d_real += discriminate(bundle, &pair.real_review.vector, pair.sentiment);
        let noise = sample_noise(1, bundle.noise_dim, rng);
        let g = generate(bundle, &pair.description, noise.row(0));
        d_fake += discriminate(bundle, &g.vector, pair.sentiment);
    }
    (d_real / take as f64, d_fake / take as f64)
}

/// Adversarial training with the stated update ratio. Generator steps draw
/// only pairs matching the bundle's designated sentiment (all pairs when
/// unconditioned); discriminator steps see matching, mismatched, and
/// generated samples. Aborts with the last probe-point snapshot on a
/// non-finite loss.
pub fn train_gan(
    bundle: &mut GanBundle,
    pairs: &[TrainingPair],
    config: &GanConfig,
) -> Result<GanHistory, Box<GanError>> {
    let g_pairs: Vec<&TrainingPair> = if config.conditioned {
        pairs
            .iter()
            .filter(|p| p.sentiment == bundle.condition)
            .collect()
    } else {
        pairs.iter().collect()
    };
    if g_pairs.is_empty() {
        return Err(Box::new(GanError::NoMatchingPairs));
    }
    let skipped_pairs = pairs.len() - g_pairs.len();

    let mut rng = seeded(config.seed);
    let g_shapes: Vec<(usize, usize)> = bundle
        .generator
        .named_params("g")
        .iter()
        .map(|(_, t)| (t.rows(), t.cols()))
        .collect();
    let d_shapes: Vec<(usize, usize)> = bundle
        .discriminator
        .named_params("d")
        .iter()
        .map(|(_, t)| (t.rows(), t.cols()))
        .collect();
    let mut g_adam = Adam::new(&g_shapes);
    let mut d_adam = Adam::new(&d_shapes);
    let mut history = GanHistory {
        skipped_pairs,
        ..Default::default()
    };

    let mut updates = 0usize;
    let mut d_loss_last = f64::NAN;
    let mut g_loss_last = f64::NAN;
    while updates < config.total_updates {
        for _ in 0..config.generator_steps {
            if updates >= config.total_updates {
                break;
            }
            let batch: Vec<&TrainingPair> = (0..config.batch_size)
                .map(|_| g_pairs[rng.random_range(0..g_pairs.len())])
                .collect();
            let descs = stack_rows(
                &batch
                    .iter()
                    .map(|p| &p.description.vector)
                    .collect::<Vec<_>>(),
            );
            let reals = stack_rows(
                &batch
                    .iter()
                    .map(|p| &p.real_review.vector)
                    .collect::<Vec<_>>(),
            );
            let conds = condition_column(
                bundle,
                &batch.iter().map(|p| p.sentiment).collect::<Vec<_>>(),
            );
            let noises = sample_noise(batch.len(), bundle.noise_dim, &mut rng);

            let mut tape = Tape::new();
            let g_vars = bundle.generator.leaves(&mut tape);
            let d_vars = bundle.discriminator.leaves(&mut tape);
            let loss = generator_loss_graph(
                &mut tape,
                &g_vars,
                &d_vars,
                &descs,
                &noises,
                &reals,
                &conds,
                config.mse_weight,
            );
            g_loss_last = tape.scalar(loss);
            if !g_loss_last.is_finite() {
                return Err(Box::new(GanError::NonFiniteLoss {
                    step: updates,
                    loss: g_loss_last,
                }));
            }
            let grads = tape.backward(loss);
            let grad_tensors: Vec<Tensor> =
                g_vars.all().iter().map(|&v| grads.of(v)).collect();
            let mut params = bundle.generator.named_params_mut("g");
            let mut refs: Vec<&mut Tensor> = params.iter_mut().map(|(_, t)| &mut **t).collect();
            g_adam.step(config.lr_generator, &mut refs, &grad_tensors);
            bundle.generator_updates += 1;
            updates += 1;
            if updates % config.probe_every == 0 {
                record_probe(bundle, pairs, updates, d_loss_last, g_loss_last, &mut history);
            }
        }
        for _ in 0..config.discriminator_steps {
            if updates >= config.total_updates {
                break;
            }
            let batch: Vec<&TrainingPair> = (0..config.batch_size)
                .map(|_| &pairs[rng.random_range(0..pairs.len())])
                .collect();
            let mut xs: Vec<Tensor> = Vec::new();
            let mut conds: Vec<Sentiment> = Vec::new();
            let mut targets: Vec<u8> = Vec::new();
            let noises = sample_noise(batch.len(), bundle.noise_dim, &mut rng);
            for (i, pair) in batch.iter().enumerate() {
                xs.push(pair.real_review.vector.clone());
                conds.push(pair.sentiment);
                targets.push(target_label(SampleKind::OrganicMatch, pair.sentiment));
                if config.conditioned {
                    xs.push(pair.real_review.vector.clone());
                    conds.push(pair.sentiment.flip());
                    targets.push(target_label(
                        SampleKind::OrganicMismatch,
                        pair.sentiment.flip(),
                    ));
                }
                let g = generate(bundle, &pair.description, noises.row(i));
                xs.push(g.vector);
                conds.push(pair.sentiment);
                targets.push(target_label(SampleKind::Generated, pair.sentiment));
            }
            let x = stack_rows(&xs.iter().collect::<Vec<_>>());
            let cond_col = condition_column(bundle, &conds);

            let mut tape = Tape::new();
            let d_vars = bundle.discriminator.leaves(&mut tape);
            let xv = tape.leaf(&x);
            let loss = discriminator_loss_graph(&mut tape, &d_vars, xv, &cond_col, &targets);
            d_loss_last = tape.scalar(loss);
            if !d_loss_last.is_finite() {
                return Err(Box::new(GanError::NonFiniteLoss {
                    step: updates,
                    loss: d_loss_last,
                }));
            }
            let grads = tape.backward(loss);
            let grad_tensors: Vec<Tensor> =
                d_vars.all().iter().map(|&v| grads.of(v)).collect();
            let mut params = bundle.discriminator.named_params_mut("d");
            let mut refs: Vec<&mut Tensor> = params.iter_mut().map(|(_, t)| &mut **t).collect();
            d_adam.step(config.lr_discriminator, &mut refs, &grad_tensors);
            bundle.discriminator_updates += 1;
            updates += 1;
            if updates % config.probe_every == 0 {
                record_probe(bundle, pairs, updates, d_loss_last, g_loss_last, &mut history);
            }
        }
    }
    Ok(history)
}

fn record_probe(
    bundle: &GanBundle,
    pairs: &[TrainingPair],
    step: usize,
    d_loss: f64,
    g_loss: f64,
    history: &mut GanHistory,
) {
    // fixed probe substream keeps training reproducible regardless of probe
    // cadence
    let mut probe_rng = seeded(crate::rng::substream(0x70726f6265, step as u64));
    let (d_real, d_fake) = equilibrium_probe(bundle, pairs, 64, &mut probe_rng);
    history.probes.push(GanProbe {
        step,
        d_loss,
        g_loss,
        d_real,
        d_fake,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::rng::seeded;

    fn embedding(d: usize, seed: u64) -> ReviewEmbedding {
        ReviewEmbedding::new(Tensor::uniform(1, d, -1.0, 1.0, &mut seeded(seed)), 2)
    }

    fn toy_pairs(n: usize, d: usize, seed: u64) -> Vec<TrainingPair> {
        (0..n)
            .map(|i| TrainingPair {
                description: embedding(d, seed + 2 * i as u64),
                real_review: embedding(d, seed + 2 * i as u64 + 1),
                sentiment: if i % 2 == 0 {
                    Sentiment::Positive
                } else {
                    Sentiment::Negative
                },
            })
            .collect()
    }

    #[test]
    fn target_label_case_table() {
        for c in [Sentiment::Positive, Sentiment::Negative] {
            assert_eq!(target_label(SampleKind::OrganicMatch, c), 1);
            assert_eq!(target_label(SampleKind::OrganicMismatch, c), 0);
            assert_eq!(target_label(SampleKind::Generated, c), 0);
        }
    }

    #[test]
    fn zero_init_discriminator_outputs_exactly_half() {
        let config = GanConfig::new(4);
        let mut bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(1));
        bundle.discriminator = Mlp::zeros(5, config.hidden_dim, 1);
        for seed in 0..4 {
            let x = Tensor::uniform(1, 4, -2.0, 2.0, &mut seeded(seed));
            assert_eq!(discriminate(&bundle, &x, Sentiment::Positive), 0.5);
            assert_eq!(discriminate(&bundle, &x, Sentiment::Negative), 0.5);
        }
    }

    #[test]
    fn generate_is_deterministic_and_noise_sensitive() {
        let config = GanConfig {
            noise_dim: 6,
            ..GanConfig::new(4)
        };
        let bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(2));
        let desc = embedding(4, 3);
        let n1: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let n2: Vec<f64> = (0..6).map(|i| i as f64 * -0.2).collect();
        let a = generate(&bundle, &desc, &n1);
        let b = generate(&bundle, &desc, &n1);
        let c = generate(&bundle, &desc, &n2);
        assert_eq!(a, b);
        assert_eq!(a.vector.cols(), 4);
        let dist = Tensor::row_distance(&a.vector, 0, &c.vector, 0);
        assert!(dist > 0.0, "noise had no effect");
    }

    #[test]
    fn half_probability_discriminator_loss_is_ln_two() {
        let config = GanConfig::new(3);
        let mut bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(4));
        bundle.discriminator = Mlp::zeros(4, config.hidden_dim, 1);
        let samples = vec![
            DiscriminatorSample::from_kind(
                Tensor::row_vec(vec![0.1, 0.2, 0.3]),
                SampleKind::OrganicMatch,
                Sentiment::Positive,
            ),
            DiscriminatorSample::from_kind(
                Tensor::row_vec(vec![-0.1, 0.4, 0.0]),
                SampleKind::Generated,
                Sentiment::Positive,
            ),
        ];
        let loss = discriminator_loss(&bundle, &samples).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_loss_is_epsilon_small() {
        let loss = symmetric_cross_entropy(&[1.0 - LOG_EPS], &[LOG_EPS]);
        assert!(loss > 0.0 && loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn one_sided_batch_is_rejected() {
        let config = GanConfig::new(3);
        let bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(5));
        let samples = vec![DiscriminatorSample::from_kind(
            Tensor::row_vec(vec![0.0, 0.0, 0.0]),
            SampleKind::OrganicMatch,
            Sentiment::Positive,
        )];
        assert_eq!(
            discriminator_loss(&bundle, &samples).unwrap_err(),
            GanError::OneSidedBatch
        );
    }

    #[test]
    fn discriminator_loss_matches_scalar_oracle() {
        let config = GanConfig::new(3);
        let bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(6));
        let samples: Vec<DiscriminatorSample> = (0..4)
            .map(|i| {
                DiscriminatorSample::from_kind(
                    Tensor::uniform(1, 3, -1.0, 1.0, &mut seeded(40 + i)),
                    match i % 3 {
                        0 => SampleKind::OrganicMatch,
                        1 => SampleKind::OrganicMismatch,
                        _ => SampleKind::Generated,
                    },
                    if i % 2 == 0 {
                        Sentiment::Positive
                    } else {
                        Sentiment::Negative
                    },
                )
            })
            .collect();
        let loss = discriminator_loss(&bundle, &samples).unwrap();

        // hand recomputation
        let mut ln_real = Vec::new();
        let mut ln_fake = Vec::new();
        for s in &samples {
            let p = discriminate(&bundle, &s.x, s.condition);
            if s.target == 1 {
                ln_real.push(p.ln());
            } else {
                ln_fake.push((1.0 - p).ln());
            }
        }
        let expect = -0.5 * ln_real.iter().sum::<f64>() / ln_real.len() as f64
            - 0.5 * ln_fake.iter().sum::<f64>() / ln_fake.len() as f64;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_generator_against_half_discriminator_gives_ln_two() {
        // G == 0 everywhere, paired real == 0, D == 1/2: adversarial term is
        // ln 2 and the reconstruction term vanishes
        let config = GanConfig {
            noise_dim: 3,
            ..GanConfig::new(3)
        };
        let mut bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(7));
        bundle.generator = Mlp::zeros(6, config.hidden_dim, 3);
        bundle.discriminator = Mlp::zeros(4, config.hidden_dim, 1);
        let pair = TrainingPair {
            description: embedding(3, 8),
            real_review: ReviewEmbedding::new(Tensor::zeros(1, 3), 1),
            sentiment: Sentiment::Positive,
        };
        let loss = generator_loss(&bundle, &[pair], &[vec![0.3, -0.4, 0.1]], 1.0);
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_mse_weight_reduces_to_adversarial_term() {
        let config = GanConfig {
            noise_dim: 4,
            ..GanConfig::new(3)
        };
        let bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(9));
        let pairs = toy_pairs(3, 3, 50);
        let noises: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..4).map(|j| ((i + j) as f64).sin()).collect())
            .collect();
        let adv_only = generator_loss(&bundle, &pairs, &noises, 0.0);
        let mut adv = 0.0;
        for (pair, noise) in pairs.iter().zip(noises.iter()) {
            let g = generate(&bundle, &pair.description, noise);
            adv += -discriminate(&bundle, &g.vector, pair.sentiment).ln();
        }
        assert!((adv_only - adv / 3.0).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_matches_scalar_oracle() {
        let config = GanConfig {
            noise_dim: 2,
            ..GanConfig::new(3)
        };
        let bundle = GanBundle::init(&config, Sentiment::Negative, &mut seeded(10));
        let pairs = toy_pairs(4, 3, 60);
        let noises: Vec<Vec<f64>> = (0..4)
            .map(|i| vec![0.1 * i as f64, -0.2 * i as f64])
            .collect();
        let loss = generator_loss(&bundle, &pairs, &noises, 0.7);

        let mut adv = 0.0;
        let mut mse = 0.0;
        for (pair, noise) in pairs.iter().zip(noises.iter()) {
            let g = generate(&bundle, &pair.description, noise);
            adv += -discriminate(&bundle, &g.vector, pair.sentiment).ln();
            for k in 0..3 {
                let d = g.vector.at(0, k) - pair.real_review.vector.at(0, k);
                mse += d * d;
            }
        }
        let expect = adv / 4.0 + 0.7 * mse / 12.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn taped_losses_match_plain_losses() {
        let config = GanConfig {
            noise_dim: 3,
            hidden_dim: 8,
            ..GanConfig::new(4)
        };
        let bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(11));
        let pairs = toy_pairs(3, 4, 70);
        let noises = sample_noise(3, 3, &mut seeded(71));

        // generator loss
        let descs = stack_rows(&pairs.iter().map(|p| &p.description.vector).collect::<Vec<_>>());
        let reals = stack_rows(
            &pairs
                .iter()
                .map(|p| &p.real_review.vector)
                .collect::<Vec<_>>(),
        );
        let conds = condition_column(&bundle, &pairs.iter().map(|p| p.sentiment).collect::<Vec<_>>());
        let mut tape = Tape::new();
        let g_vars = bundle.generator.leaves(&mut tape);
        let d_vars = bundle.discriminator.leaves(&mut tape);
        let loss_var = generator_loss_graph(
            &mut tape, &g_vars, &d_vars, &descs, &noises, &reals, &conds, 1.0,
        );
        let noise_vecs: Vec<Vec<f64>> = (0..3).map(|i| noises.row(i).to_vec()).collect();
        let plain = generator_loss(&bundle, &pairs, &noise_vecs, 1.0);
        assert!((tape.scalar(loss_var) - plain).abs() < 1e-12);

        // discriminator loss
        let samples: Vec<DiscriminatorSample> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                DiscriminatorSample::from_kind(
                    p.real_review.vector.clone(),
                    if i == 0 {
                        SampleKind::OrganicMatch
                    } else {
                        SampleKind::Generated
                    },
                    p.sentiment,
                )
            })
            .collect();
        let x = stack_rows(&samples.iter().map(|s| &s.x).collect::<Vec<_>>());
        let cond_col = condition_column(&bundle, &samples.iter().map(|s| s.condition).collect::<Vec<_>>());
        let targets: Vec<u8> = samples.iter().map(|s| s.target).collect();
        let mut tape2 = Tape::new();
        let d_vars2 = bundle.discriminator.leaves(&mut tape2);
        let xv = tape2.leaf(&x);
        let d_var = discriminator_loss_graph(&mut tape2, &d_vars2, xv, &cond_col, &targets);
        let d_plain = discriminator_loss(&bundle, &samples).unwrap();
        assert!((tape2.scalar(d_var) - d_plain).abs() < 1e-12);
    }

    #[test]
    fn gan_loss_gradients_match_finite_differences() {
        let config = GanConfig {
            noise_dim: 2,
            hidden_dim: 5,
            ..GanConfig::new(3)
        };
        let bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(12));
        let pairs = toy_pairs(3, 3, 80);
        let noises = sample_noise(3, 2, &mut seeded(81));
        let descs = stack_rows(&pairs.iter().map(|p| &p.description.vector).collect::<Vec<_>>());
        let reals = stack_rows(
            &pairs
                .iter()
                .map(|p| &p.real_review.vector)
                .collect::<Vec<_>>(),
        );
        let conds = condition_column(&bundle, &pairs.iter().map(|p| p.sentiment).collect::<Vec<_>>());

        // generator loss wrt generator parameters (discriminator frozen)
        let g_params = [
            bundle.generator.w1.clone(),
            bundle.generator.b1.clone(),
            bundle.generator.w2.clone(),
            bundle.generator.b2.clone(),
        ];
        let d = bundle.discriminator.clone();
        let rel = gradcheck::check(&g_params, 1e-6, |tape, leaves| {
            let g_vars = MlpVars {
                w1: leaves[0],
                b1: leaves[1],
                w2: leaves[2],
                b2: leaves[3],
            };
            let d_vars = d.leaves(tape);
            generator_loss_graph(tape, &g_vars, &d_vars, &descs, &noises, &reals, &conds, 1.0)
        });
        assert!(rel < 1e-4, "generator loss relative error {rel}");

        // discriminator loss wrt discriminator parameters
        let x = stack_rows(
            &pairs
                .iter()
                .map(|p| &p.real_review.vector)
                .collect::<Vec<_>>(),
        );
        let targets = [1u8, 0, 0];
        let d_params = [
            bundle.discriminator.w1.clone(),
            bundle.discriminator.b1.clone(),
            bundle.discriminator.w2.clone(),
            bundle.discriminator.b2.clone(),
        ];
        let rel_d = gradcheck::check(&d_params, 1e-6, |tape, leaves| {
            let d_vars = MlpVars {
                w1: leaves[0],
                b1: leaves[1],
                w2: leaves[2],
                b2: leaves[3],
            };
            let xv = tape.leaf(&x);
            discriminator_loss_graph(tape, &d_vars, xv, &conds, &targets)
        });
        assert!(rel_d < 1e-4, "discriminator loss relative error {rel_d}");
    }

    #[test]
    fn update_ratio_and_counters_follow_schedule() {
        let config = GanConfig {
            noise_dim: 3,
            hidden_dim: 6,
            total_updates: 60,
            batch_size: 4,
            probe_every: 30,
            lr_generator: 1e-3,
            lr_discriminator: 1e-3,
            ..GanConfig::new(3)
        };
        let mut bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(13));
        let pairs = toy_pairs(8, 3, 90);
        let history = train_gan(&mut bundle, &pairs, &config).unwrap();
        assert_eq!(
            bundle.generator_updates + bundle.discriminator_updates,
            60
        );
        // 5:1 ratio up to the cycle remainder
        assert_eq!(bundle.generator_updates, 50);
        assert_eq!(bundle.discriminator_updates, 10);
        assert_eq!(history.probes.len(), 2);
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let config = GanConfig {
            noise_dim: 3,
            hidden_dim: 6,
            total_updates: 24,
            batch_size: 4,
            probe_every: 12,
            ..GanConfig::new(3)
        };
        let pairs = toy_pairs(6, 3, 100);
        let mut b1 = GanBundle::init(&config, Sentiment::Positive, &mut seeded(14));
        let mut b2 = GanBundle::init(&config, Sentiment::Positive, &mut seeded(14));
        let h1 = train_gan(&mut b1, &pairs, &config).unwrap();
        let h2 = train_gan(&mut b2, &pairs, &config).unwrap();
        assert_eq!(b1.generator, b2.generator);
        assert_eq!(b1.discriminator, b2.discriminator);
        assert_eq!(h1.probes, h2.probes);
    }

    #[test]
    fn conditioning_flips_discriminator_preference_after_training() {
        // two separable clusters: positive reviews near +1, negative near -1
        let d = 4;
        let mut pairs = Vec::new();
        let mut rng = seeded(15);
        for i in 0..40 {
            let sentiment = if i % 2 == 0 {
                Sentiment::Positive
            } else {
                Sentiment::Negative
            };
            let center = if sentiment == Sentiment::Positive {
                0.8
            } else {
                -0.8
            };
            let review = Tensor::uniform(1, d, center - 0.1, center + 0.1, &mut rng);
            let desc = Tensor::uniform(1, d, -0.05, 0.05, &mut rng);
            pairs.push(TrainingPair {
                description: ReviewEmbedding::new(desc, 1),
                real_review: ReviewEmbedding::new(review, 1),
                sentiment,
            });
        }
        let config = GanConfig {
            noise_dim: 4,
            hidden_dim: 16,
            total_updates: 1200,
            batch_size: 16,
            probe_every: 600,
            lr_generator: 1e-3,
            lr_discriminator: 2e-3,
            seed: 16,
            ..GanConfig::new(d)
        };
        let mut bundle = GanBundle::init(&config, Sentiment::Positive, &mut seeded(16));
        train_gan(&mut bundle, &pairs, &config).unwrap();

        let mean_d = |sent: Sentiment, cond: Sentiment| -> f64 {
            let subset: Vec<&TrainingPair> =
                pairs.iter().filter(|p| p.sentiment == sent).collect();
            subset
                .iter()
                .map(|p| discriminate(&bundle, &p.real_review.vector, cond))
                .sum::<f64>()
                / subset.len() as f64
        };
        // conditioned on positive: organic positives outrank organic negatives
        assert!(
            mean_d(Sentiment::Positive, Sentiment::Positive)
                > mean_d(Sentiment::Negative, Sentiment::Positive),
            "positive condition does not prefer positives"
        );
        // swapping the condition flips the preference
        assert!(
            mean_d(Sentiment::Negative, Sentiment::Negative)
                > mean_d(Sentiment::Positive, Sentiment::Negative),
            "negative condition does not prefer negatives"
        );
        // and the two conditions disagree on the same inputs
        let x = &pairs[0].real_review.vector;
        let dp = discriminate(&bundle, x, Sentiment::Positive);
        let dn = discriminate(&bundle, x, Sentiment::Negative);
        assert!((dp - dn).abs() > 1e-6);
    }
}
