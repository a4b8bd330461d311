//! Alternating discriminator/generator optimization.

use ndarray::{Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use velgan_core::PatchPair;

use crate::adam::{AdamState, OptimConfig};
use crate::discriminator::{Discriminator, DiscriminatorSpec};
use crate::generator::{to_signed, Generator, GeneratorSpec};
use crate::layers::{ForwardCtx, Layer, Param};
use crate::loss::{d_loss, g_total_loss, sigmoid, LossConfig};
use crate::tensor::{concat_channels, split_channels, Real};
use crate::NetError;

/// A batch in network space (`[-1, 1]`), NCHW.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub input: Array4<T>,
    pub target: Array4<T>,
}

impl<T: Real> Batch<T> {
    pub fn from_pairs(pairs: &[&PatchPair]) -> Result<Self, NetError> {
        let first = pairs.first().ok_or_else(|| NetError::Shape("empty batch".into()))?;
        let (c, h, w) = first.input.dim();
        let mut input = Array4::zeros((pairs.len(), c, h, w));
        let mut target = Array4::zeros((pairs.len(), 1, h, w));
        for (n, p) in pairs.iter().enumerate() {
            if p.input.dim() != (c, h, w) || p.target.dim() != (h, w) {
                return Err(NetError::Shape(format!(
                    "batch item {n}: input {:?}, target {:?}, expected {:?}",
                    p.input.dim(),
                    p.target.dim(),
                    (c, h, w)
                )));
            }
            input.index_axis_mut(Axis(0), n).assign(&p.input.mapv(to_signed::<T>));
            target
                .index_axis_mut(Axis(0), n)
                .index_axis_mut(Axis(0), 0)
                .assign(&p.target.mapv(to_signed::<T>));
        }
        Ok(Self { input, target })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

impl StepLosses {
    fn check_finite(&self) -> Result<(), NetError> {
        for (name, v) in [("d_loss", self.d_loss), ("g_adv", self.g_adv), ("g_l1", self.g_l1), ("g_total", self.g_total)] {
            if !v.is_finite() {
                return Err(NetError::NonFiniteLoss { component: name, value: v });
            }
        }
        Ok(())
    }
}

/// Mean step losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    /// 1-based.
    pub epoch: usize,
    pub steps: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

pub type CallbackError = Box<dyn std::error::Error + Send + Sync>;

pub struct TrainState<T: Real> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub g_adam: AdamState<T>,
    pub d_adam: AdamState<T>,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed train steps.
    pub step: u64,
    pub history: Vec<EpochLosses>,
}

fn zero_grads<T: Real>(params: Vec<&mut Param<T>>) {
    params.into_iter().for_each(|p| p.zero_grad());
}

impl<T: Real> TrainState<T> {
    pub fn new(
        gspec: GeneratorSpec,
        dspec: DiscriminatorSpec,
        loss: LossConfig,
        optim: OptimConfig,
        seed: u64,
    ) -> Result<Self, NetError> {
        loss.validate()?;
        optim.validate()?;
        if dspec.in_channels != gspec.in_channels + gspec.out_channels {
            return Err(NetError::InvalidSpec(format!(
                "discriminator takes {} channels, generator pairs give {}",
                dspec.in_channels,
                gspec.in_channels + gspec.out_channels
            )));
        }
        let generator = Generator::new(gspec, seed)?;
        let discriminator = Discriminator::new(dspec, seed.wrapping_add(1))?;
        Ok(Self {
            g_adam: AdamState::new(&generator.params()),
            d_adam: AdamState::new(&discriminator.params()),
            generator,
            discriminator,
            loss,
            optim,
            seed,
            epoch: 0,
            step: 0,
            history: Vec::new(),
        })
    }

    /// Dropout rng for a given global step.
    fn step_ctx(&self) -> ForwardCtx {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.step);
        ForwardCtx::new(true, rng)
    }

    /// Generator forward in training mode. Its caches feed the next
    /// [`TrainState::g_update`].
    pub fn generate(&mut self, batch: &Batch<T>) -> Array4<T> {
        let mut ctx = self.step_ctx();
        self.generator.forward(&batch.input, &mut ctx)
    }

    /// One discriminator update on real pairs and on the (detached) fakes.
    pub fn d_update(&mut self, batch: &Batch<T>, fake: &Array4<T>) -> Result<f64, NetError> {
        let mut ctx = ForwardCtx::deterministic();
        zero_grads(self.discriminator.params_mut());
        // The real and fake terms have separable gradients, so each pass is
        // backpropagated while its caches are live.
        let real_logits = self.discriminator.forward(&concat_channels(&batch.input, &batch.target), &mut ctx);
        let n = real_logits.len() as f64;
        self.discriminator.backward(&real_logits.mapv(|r| T::of(-sigmoid(-r.f64()) / n)));
        let fake_logits = self.discriminator.forward(&concat_channels(&batch.input, fake), &mut ctx);
        let (loss, _, g_fake) = d_loss(&real_logits, &fake_logits)?;
        if !loss.is_finite() {
            return Err(NetError::NonFiniteLoss { component: "d_loss", value: loss });
        }
        self.discriminator.backward(&g_fake);
        self.d_adam.step(&mut self.discriminator.params_mut(), &self.optim)?;
        Ok(loss)
    }

    /// One generator update through the current discriminator; the
    /// discriminator's gradients from this pass are discarded.
    pub fn g_update(&mut self, batch: &Batch<T>, fake: &Array4<T>) -> Result<(f64, f64, f64), NetError> {
        let mut ctx = ForwardCtx::deterministic();
        zero_grads(self.generator.params_mut());
        let logits = self.discriminator.forward(&concat_channels(&batch.input, fake), &mut ctx);
        let (gl, g_logits, g_pred_l1) = g_total_loss(&logits, &batch.target, fake, &self.loss)?;
        let g_in = self.discriminator.backward(&g_logits);
        zero_grads(self.discriminator.params_mut());
        let (_, g_pred_adv) = split_channels(&g_in, batch.input.dim().1);
        let g_pred = g_pred_adv + &g_pred_l1;
        self.generator.backward(&g_pred);
        self.g_adam.step(&mut self.generator.params_mut(), &self.optim)?;
        Ok((gl.adv, gl.l1, gl.total))
    }

    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<StepLosses, NetError> {
        let fake = self.generate(batch);
        let d = self.d_update(batch, &fake)?;
        let (g_adv, g_l1, g_total) = self.g_update(batch, &fake)?;
        let losses = StepLosses { d_loss: d, g_adv, g_l1, g_total };
        losses.check_finite()?;
        self.step += 1;
        Ok(losses)
    }

    /// Runs `epochs` further epochs over `data`, shuffled per epoch from
    /// the seed. `on_epoch` sees the state after each epoch (for metrics,
    /// checkpoints); its errors abort training.
    pub fn train<F>(&mut self, data: &[PatchPair], epochs: usize, mut on_epoch: F) -> Result<Vec<EpochLosses>, NetError>
    where
        F: FnMut(&mut TrainState<T>, &EpochLosses) -> Result<(), CallbackError>,
    {
        if data.is_empty() {
            return Err(NetError::Shape("empty training set".into()));
        }
        let bs = self.optim.batch_size.max(1);
        let mut log = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let epoch = self.epoch + 1;
            let mut order: Vec<usize> = (0..data.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5348_5546_464C_4531);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);

            let mut sum = StepLosses::default();
            let mut steps = 0;
            for chunk in order.chunks(bs) {
                let pairs: Vec<&PatchPair> = chunk.iter().map(|&i| &data[i]).collect();
                let batch = Batch::from_pairs(&pairs)?;
                let s = self.train_step(&batch)?;
                sum.d_loss += s.d_loss;
                sum.g_adv += s.g_adv;
                sum.g_l1 += s.g_l1;
                sum.g_total += s.g_total;
                steps += 1;
            }
            let n = steps as f64;
            let e = EpochLosses {
                epoch,
                steps,
                d_loss: sum.d_loss / n,
                g_adv: sum.g_adv / n,
                g_l1: sum.g_l1 / n,
                g_total: sum.g_total / n,
            };
            self.epoch = epoch;
            self.history.push(e);
            log.push(e);
            on_epoch(self, &e).map_err(NetError::Callback)?;
        }
        Ok(log)
    }
}
