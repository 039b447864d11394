use candle_core::{Tensor, D};

use super::model::FeatureNet;
use crate::codebook::CodebookTensors;
use crate::error::{Error, Result};
use crate::nn::scalar;
use crate::scorer::CandidatePool;

/// Guard on the denominator of the dynamic weight.
pub const OMEGA_EPS: f64 = 1e-8;

/// Scalar components of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossReport {
    pub recon: f64,
    pub commit: f64,
    pub gan: f64,
    pub perceptual: f64,
    pub semantic: f64,
    pub omega: f64,
    pub total: f64,
}

impl LossReport {
    /// Name of the first non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("recon", self.recon),
            ("commit", self.commit),
            ("gan", self.gan),
            ("perceptual", self.perceptual),
            ("semantic", self.semantic),
            ("omega", self.omega),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("mse operands {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok((a - b)?.sqr()?.mean_all()?)
}

/// Pyramid semantic loss. `pooled[l]` is the latent pooled onto layer `l`
/// (`N x d x h_l x w_l`); `pools[n][l]` is image `n`'s candidate pool at
/// that layer. Per position, the loss is the mean over pool tokens of the
/// negative log-softmax (over the whole vocabulary) of negative squared
/// distances; positions, images and layers are averaged.
pub fn semantic_loss(pooled: &[Tensor], pools: &[Vec<CandidatePool>], cb: &CodebookTensors) -> Result<Tensor> {
    if pooled.is_empty() {
        return Err(Error::Invalid("semantic loss needs at least one layer".into()));
    }
    let vocab = cb.vocab_size();
    let mut layer_losses = Vec::with_capacity(pooled.len());
    for (l, z_l) in pooled.iter().enumerate() {
        let (n, d, h, w) = z_l.dims4()?;
        if pools.len() != n {
            return Err(Error::Shape(format!("{} pool lists for a batch of {n}", pools.len())));
        }
        let per_image: Vec<&CandidatePool> = pools
            .iter()
            .map(|p| {
                let pool = p
                    .get(l)
                    .ok_or_else(|| Error::Invalid(format!("no candidate pool for layer {}", l + 1)))?;
                if pool.is_empty() {
                    return Err(Error::Invalid(format!("empty candidate pool at layer {}", l + 1)));
                }
                if let Some(&t) = pool.tokens.iter().find(|&&t| t as usize >= vocab) {
                    return Err(Error::Invalid(format!("pool token {t} outside a vocabulary of {vocab}")));
                }
                Ok(pool)
            })
            .collect::<Result<_>>()?;
        let k = per_image.iter().map(|p| p.len()).max().unwrap_or(1);
        let positions = h * w;
        let mut idx = Vec::with_capacity(n * positions * k);
        let mut weights = Vec::with_capacity(n * positions * k);
        for pool in &per_image {
            let wgt = 1.0 / pool.len() as f64;
            for _ in 0..positions {
                for j in 0..k {
                    idx.push(pool.tokens.get(j).copied().unwrap_or(pool.tokens[0]));
                    weights.push(if j < pool.len() { wgt } else { 0.0 });
                }
            }
        }
        let rows = n * positions;
        let idx = Tensor::from_vec(idx, (rows, k), z_l.device())?;
        let weights = Tensor::from_vec(weights, (rows, k), z_l.device())?.to_dtype(z_l.dtype())?;
        let vectors = z_l.permute((0, 2, 3, 1))?.reshape((rows, d))?;
        let logp = candle_nn::ops::log_softmax(&cb.distances_sq(&vectors)?.neg()?, D::Minus1)?;
        let picked = logp.contiguous()?.gather(&idx, 1)?;
        layer_losses.push(((picked * weights)?.sum_all()?.neg()? / rows as f64)?);
    }
    let count = layer_losses.len() as f64;
    Ok((Tensor::stack(&layer_losses, 0)?.sum_all()? / count)?)
}

/// `sum_l mean((z - sg(zhat_{<=l}))^2)`; the cumulative grids carry no gradient.
pub fn commit_loss(z: &Tensor, cumulative: &[Tensor]) -> Result<Tensor> {
    let mut total = Tensor::zeros((), z.dtype(), z.device())?;
    for q in cumulative {
        total = (total + mse(z, &q.detach())?)?;
    }
    Ok(total)
}

/// Hinge generator loss `-mean(D(fake))`.
pub fn hinge_generator_loss(fake_logits: &Tensor) -> Result<Tensor> {
    Ok(fake_logits.mean_all()?.neg()?)
}

/// Hinge discriminator loss `mean(relu(1 - D(real))) + mean(relu(1 + D(fake)))`.
pub fn hinge_discriminator_loss(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    let real = (1.0 - real_logits)?.relu()?.mean_all()?;
    let fake = (fake_logits + 1.0)?.relu()?.mean_all()?;
    Ok((real + fake)?)
}

/// Mean over stages of the mean squared feature distance.
pub fn perceptual_loss(net: &dyn FeatureNet, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let fa = net.features(a)?;
    let fb = net.features(&b.detach())?;
    let mut total = Tensor::zeros((), a.dtype(), a.device())?;
    for (x, y) in fa.iter().zip(&fb) {
        total = (total + mse(x, &y.detach())?)?;
    }
    Ok((total / fa.len().max(1) as f64)?)
}

/// `omega = L_vqgan / max(L_sem, eps)`, a plain number outside the graph.
pub fn dynamic_weight(vqgan: f64, semantic: f64) -> f64 {
    vqgan / semantic.max(OMEGA_EPS)
}

/// `L_vqgan + alpha * omega * L_sem`, with `omega` recomputed from the
/// current values and held constant.
pub fn total_loss(vqgan: &Tensor, semantic: &Tensor, alpha: f64) -> Result<(Tensor, f64)> {
    let omega = dynamic_weight(scalar(vqgan)?, scalar(semantic)?);
    let total = (vqgan + (semantic * (alpha * omega))?)?;
    Ok((total, omega))
}

/// Weighted sum of the autoencoder's pixel, commitment, adversarial and
/// perceptual terms.
#[derive(Debug, Clone)]
pub struct VqganTerms {
    pub recon: Tensor,
    pub commit: Tensor,
    pub gan: Tensor,
    pub perceptual: Tensor,
}

impl VqganTerms {
    pub fn weighted(&self, beta: f64, gamma: f64, eta: f64) -> Result<Tensor> {
        Ok((&self.recon + (&self.commit * beta)? + (&self.gan * gamma)? + (&self.perceptual * eta)?)?)
    }
}

/// Zero-dimensional tensor holding `v`.
pub fn constant(v: f64, like: &Tensor) -> Result<Tensor> {
    Ok(Tensor::new(v, like.device())?.to_dtype(like.dtype())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::LlmCodebook;
    use candle_core::{DType, Device, Var};

    fn two_token() -> CodebookTensors {
        let cb = LlmCodebook::new(vec!["a".into(), "b".into()], vec![0.0, 1.0], 1).unwrap();
        CodebookTensors::new(&cb, DType::F64, &Device::Cpu).unwrap()
    }

    fn pool(tokens: Vec<u32>) -> CandidatePool {
        CandidatePool {
            layer: 1,
            threshold: 0.0,
            tokens,
            fallback: false,
        }
    }

    #[test]
    fn two_token_closed_forms() {
        let cb = two_token();
        let z = Tensor::zeros((1, 1, 1, 1), DType::F64, &Device::Cpu).unwrap();
        let one = semantic_loss(std::slice::from_ref(&z), &[vec![pool(vec![0])]], &cb).unwrap();
        let expected_a = (1.0 + (-1.0f64).exp()).ln();
        assert!((scalar(&one).unwrap() - expected_a).abs() < 1e-12);
        let both = semantic_loss(&[z], &[vec![pool(vec![0, 1])]], &cb).unwrap();
        assert!((scalar(&both).unwrap() - 0.5 * (2.0 * expected_a + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn equidistant_point_gives_log_vocab() {
        let cb = LlmCodebook::new(
            (0..4).map(|i| format!("t{i}")).collect(),
            vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
            2,
        )
        .unwrap();
        let cbt = CodebookTensors::new(&cb, DType::F64, &Device::Cpu).unwrap();
        let z = Tensor::zeros((1, 2, 1, 1), DType::F64, &Device::Cpu).unwrap();
        let loss = semantic_loss(&[z], &[vec![pool(vec![0, 1, 2, 3])]], &cbt).unwrap();
        assert!((scalar(&loss).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_pool_is_rejected() {
        let cb = two_token();
        let z = Tensor::zeros((1, 1, 1, 1), DType::F64, &Device::Cpu).unwrap();
        assert!(semantic_loss(&[z], &[vec![pool(vec![])]], &cb).is_err());
    }

    #[test]
    fn dynamic_weight_cases() {
        assert_eq!(dynamic_weight(2.0, 0.5), 4.0);
        assert_eq!(dynamic_weight(1.0, 1.0), 1.0);
        assert_eq!(dynamic_weight(1.0, 0.0), 1e8);
    }

    #[test]
    fn total_value_identity() {
        let dev = Device::Cpu;
        let vq = Tensor::new(2.0f64, &dev).unwrap();
        let sem = Tensor::new(0.5f64, &dev).unwrap();
        let (t, omega) = total_loss(&vq, &sem, 0.3).unwrap();
        assert_eq!(omega, 4.0);
        assert!((scalar(&t).unwrap() - 2.6).abs() < 1e-12);
        let zero = Tensor::new(0.0f64, &dev).unwrap();
        let (t, _) = total_loss(&vq, &zero, 0.3).unwrap();
        assert_eq!(scalar(&t).unwrap(), 2.0);
    }

    #[test]
    fn commit_is_zero_on_codebook_rows_and_blocks_gradient() {
        let dev = Device::Cpu;
        let z = Tensor::new(&[[[[0.5f64]]]], &dev).unwrap();
        assert_eq!(scalar(&commit_loss(&z, &[z.clone(), z.clone()]).unwrap()).unwrap(), 0.0);
        let q = Var::from_tensor(&Tensor::new(&[[[[1.0f64]]]], &dev).unwrap()).unwrap();
        let zv = Var::from_tensor(&z).unwrap();
        let loss = commit_loss(zv.as_tensor(), &[q.as_tensor().clone()]).unwrap();
        let g = loss.backward().unwrap();
        assert!(g.get(q.as_tensor()).is_none());
        assert_eq!(scalar(g.get(zv.as_tensor()).unwrap()).unwrap(), -1.0);
    }

    #[test]
    fn hinge_losses() {
        let dev = Device::Cpu;
        let real = Tensor::new(&[2.0f64, 0.5], &dev).unwrap();
        let fake = Tensor::new(&[-2.0f64, 0.0], &dev).unwrap();
        assert_eq!(scalar(&hinge_discriminator_loss(&real, &fake).unwrap()).unwrap(), 0.25 + 0.5);
        assert_eq!(scalar(&hinge_generator_loss(&fake).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn non_finite_component_named() {
        let r = LossReport {
            perceptual: f64::NAN,
            ..Default::default()
        };
        assert_eq!(r.non_finite(), Some("perceptual"));
        assert_eq!(LossReport::default().non_finite(), None);
    }
}
