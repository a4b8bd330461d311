//! Adversarial and L1 objectives on logit maps, each returning the value
//! and its gradient.

use ndarray::{Array4, Zip};
use serde::{Deserialize, Serialize};

use crate::tensor::Real;
use crate::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Generator minimizes `-log D(x, G(x))`.
    #[default]
    NonSaturating,
    /// Generator minimizes `log(1 - D(x, G(x)))`.
    Minimax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_l1: f64,
    pub adversarial_form: AdversarialForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_l1: 100.0, adversarial_form: AdversarialForm::NonSaturating }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return Err(NetError::InvalidSpec(format!("lambda_l1 = {} must be finite and >= 0", self.lambda_l1)));
        }
        Ok(())
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_same<T: Real>(a: &Array4<T>, b: &Array4<T>) -> Result<(), NetError> {
    if a.dim() != b.dim() {
        return Err(NetError::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Binary cross-entropy of real logits against 1 and fake logits against 0,
/// each averaged over its map, summed. Returns `(loss, d/d real, d/d fake)`.
pub fn d_loss<T: Real>(real: &Array4<T>, fake: &Array4<T>) -> Result<(f64, Array4<T>, Array4<T>), NetError> {
    check_same(real, fake)?;
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let loss = real.iter().map(|&r| softplus(-r.f64())).sum::<f64>() / nr
        + fake.iter().map(|&f| softplus(f.f64())).sum::<f64>() / nf;
    let g_real = real.mapv(|r| T::of(-sigmoid(-r.f64()) / nr));
    let g_fake = fake.mapv(|f| T::of(sigmoid(f.f64()) / nf));
    Ok((loss, g_real, g_fake))
}

/// Generator adversarial term on the fake logits.
pub fn g_adv_loss<T: Real>(fake: &Array4<T>, form: AdversarialForm) -> (f64, Array4<T>) {
    let n = fake.len() as f64;
    match form {
        AdversarialForm::NonSaturating => (
            fake.iter().map(|&f| softplus(-f.f64())).sum::<f64>() / n,
            fake.mapv(|f| T::of(-sigmoid(-f.f64()) / n)),
        ),
        // log(1 - σ(f)) = -softplus(f)
        AdversarialForm::Minimax => (
            -fake.iter().map(|&f| softplus(f.f64())).sum::<f64>() / n,
            fake.mapv(|f| T::of(-sigmoid(f.f64()) / n)),
        ),
    }
}

/// Mean absolute difference and its (sub)gradient w.r.t. the prediction.
pub fn l1_loss<T: Real>(target: &Array4<T>, pred: &Array4<T>) -> Result<(f64, Array4<T>), NetError> {
    check_same(target, pred)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array4::zeros(pred.dim());
    Zip::from(&mut grad).and(target).and(pred).for_each(|g, &y, &p| {
        let d = (p - y).f64();
        loss += d.abs();
        *g = T::of(if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        });
    });
    Ok((loss / n, grad))
}

/// Components of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLoss {
    pub adv: f64,
    pub l1: f64,
    pub total: f64,
}

/// `adv + λ·l1`; the gradient is w.r.t. the prediction (L1 part) and the
/// fake logits (adversarial part).
pub fn g_total_loss<T: Real>(
    fake_logits: &Array4<T>,
    target: &Array4<T>,
    pred: &Array4<T>,
    cfg: &LossConfig,
) -> Result<(GeneratorLoss, Array4<T>, Array4<T>), NetError> {
    let (adv, g_logits) = g_adv_loss(fake_logits, cfg.adversarial_form);
    let (l1, mut g_pred) = l1_loss(target, pred)?;
    let lambda = T::of(cfg.lambda_l1);
    g_pred.mapv_inplace(|g| g * lambda);
    Ok((GeneratorLoss { adv, l1, total: adv + cfg.lambda_l1 * l1 }, g_logits, g_pred))
}
