use candle_core::{Tensor, D};

use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

fn join(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = ps.get(&join(name, "weight"), &[c_out, c_in, kernel, kernel], Init::fan_in(fan_in))?;
        let bias = ps.get(&join(name, "bias"), &[c_out], Init::fan_in(fan_in))?;
        Ok(Self {
            weight,
            bias: Some(bias),
            stride,
            padding,
        })
    }

    /// Convolution whose weight and bias start at zero.
    pub fn zeroed(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = ps.get(&join(name, "weight"), &[c_out, c_in, kernel, kernel], Init::Zeros)?;
        let bias = ps.get(&join(name, "bias"), &[c_out], Init::Zeros)?;
        Ok(Self {
            weight,
            bias: Some(bias),
            stride: 1,
            padding,
        })
    }

    pub fn from_tensors(weight: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Self {
        Self {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, kh, kw) = self.weight.dims4()?;
        // The patch kernel is much cheaper to differentiate on CPU than
        // conv2d, whose input gradient goes through conv_transpose2d.
        let y = if self.stride == 1 && kh == kw && kh > 1 && self.padding < kh {
            super::patch_conv(x, &self.weight, self.padding)?
        } else {
            x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?
        };
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, b.dims()[0], 1, 1))?)?),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    weight: Tensor,
    bias: Tensor,
    groups: usize,
    eps: f64,
}

impl GroupNorm {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Result<Self> {
        let groups = groups.min(channels).max(1);
        if !channels.is_multiple_of(groups) {
            return Err(Error::Config(format!("{channels} channels not divisible into {groups} groups")));
        }
        Ok(Self {
            weight: ps.get(&join(name, "weight"), &[channels], Init::Ones)?,
            bias: ps.get(&join(name, "bias"), &[channels], Init::Zeros)?,
            groups,
            eps: 1e-6,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let g = x.reshape((n, self.groups, (c / self.groups) * h * w))?;
        let mean = g.mean_keepdim(D::Minus1)?;
        let centered = g.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?.reshape((n, c, h, w))?;
        Ok(normed
            .broadcast_mul(&self.weight.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

/// `x` where positive, `slope * x` elsewhere.
pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok((x.relu()? - (x.neg()?.relu()? * slope)?)?)
}

/// Nearest-neighbour 2x upsampling built from reshapes so its backward pass
/// sums the four copies.
pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    Ok(x.reshape((n, c, h, 1, w, 1))?
        .broadcast_as((n, c, h, 2, w, 2))?
        .reshape((n, c, 2 * h, 2 * w))?)
}

#[derive(Debug, Clone)]
pub struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, groups: usize) -> Result<Self> {
        Ok(Self {
            norm1: GroupNorm::new(ps, &join(name, "norm1"), c_in, groups)?,
            conv1: Conv2d::new(ps, &join(name, "conv1"), c_in, c_out, 3, 1, 1)?,
            norm2: GroupNorm::new(ps, &join(name, "norm2"), c_out, groups)?,
            conv2: Conv2d::new(ps, &join(name, "conv2"), c_out, c_out, 3, 1, 1)?,
            skip: if c_in != c_out {
                Some(Conv2d::new(ps, &join(name, "skip"), c_in, c_out, 1, 1, 0)?)
            } else {
                None
            },
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(&self.norm1.forward(x)?.silu()?)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.silu()?)?;
        let x = match &self.skip {
            Some(s) => s.forward(x)?,
            None => x.clone(),
        };
        Ok((x + h)?)
    }
}

/// Single-head spatial self-attention with a residual connection.
#[derive(Debug, Clone)]
pub struct AttnBlock {
    norm: GroupNorm,
    q: Conv2d,
    k: Conv2d,
    v: Conv2d,
    proj: Conv2d,
}

impl AttnBlock {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Result<Self> {
        Ok(Self {
            norm: GroupNorm::new(ps, &join(name, "norm"), channels, groups)?,
            q: Conv2d::new(ps, &join(name, "q"), channels, channels, 1, 1, 0)?,
            k: Conv2d::new(ps, &join(name, "k"), channels, channels, 1, 1, 0)?,
            v: Conv2d::new(ps, &join(name, "v"), channels, channels, 1, 1, 0)?,
            proj: Conv2d::new(ps, &join(name, "proj"), channels, channels, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let hn = self.norm.forward(x)?;
        let q = self.q.forward(&hn)?.reshape((n, c, h * w))?.transpose(1, 2)?.contiguous()?;
        let k = self.k.forward(&hn)?.reshape((n, c, h * w))?.contiguous()?;
        let v = self.v.forward(&hn)?.reshape((n, c, h * w))?.contiguous()?;
        let att = (q.matmul(&k)? * (1.0 / (c as f64).sqrt()))?;
        let att = candle_nn::ops::softmax_last_dim(&att)?;
        // out[c, i] = sum_j v[c, j] att[i, j]
        let out = v.matmul(&att.transpose(1, 2)?.contiguous()?)?.reshape((n, c, h, w))?;
        Ok((x + self.proj.forward(&out)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Var};

    fn store() -> ParamStore {
        ParamStore::seeded(11, DType::F64, &Device::Cpu)
    }

    #[test]
    fn upsample_backward_accumulates() {
        let dev = Device::Cpu;
        let x = Var::from_tensor(&Tensor::new(&[[[[1.0f64, 2.0], [3.0, 4.0]]]], &dev).unwrap()).unwrap();
        let y = upsample2x(x.as_tensor()).unwrap();
        assert_eq!(y.dims(), &[1, 1, 4, 4]);
        let rows = y.squeeze(0).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(rows[0], vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(rows[3], vec![3.0, 3.0, 4.0, 4.0]);
        let g = y.sum_all().unwrap().backward().unwrap();
        let gx = g.get(x.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(gx, vec![4.0; 4]);
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::new(&[-2.0f64, 0.0, 3.0], &Device::Cpu).unwrap();
        assert_eq!(leaky_relu(&x, 0.2).unwrap().to_vec1::<f64>().unwrap(), vec![-0.4, 0.0, 3.0]);
    }

    #[test]
    fn group_norm_normalizes_each_group() {
        let mut ps = store();
        let gn = GroupNorm::new(&mut ps, "gn", 4, 2).unwrap();
        let vals: Vec<f64> = (0..4 * 9).map(|i| (i as f64 * 1.7).sin() * 5.0 + 3.0).collect();
        let x = Tensor::from_vec(vals, (1, 4, 3, 3), &Device::Cpu).unwrap();
        let y = gn.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for group in y.chunks(18) {
            let m = group.iter().sum::<f64>() / 18.0;
            let v = group.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 18.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn blocks_preserve_shape() {
        let mut ps = store();
        let x = Tensor::ones((2, 8, 4, 4), DType::F64, &Device::Cpu).unwrap();
        let r = ResBlock::new(&mut ps, "r", 8, 16, 4).unwrap();
        assert_eq!(r.forward(&x).unwrap().dims(), &[2, 16, 4, 4]);
        let a = AttnBlock::new(&mut ps, "a", 8, 4).unwrap();
        assert_eq!(a.forward(&x).unwrap().dims(), &[2, 8, 4, 4]);
        let c = Conv2d::new(&mut ps, "c", 8, 3, 3, 2, 1).unwrap();
        assert_eq!(c.forward(&x).unwrap().dims(), &[2, 3, 2, 2]);
    }

    #[test]
    fn unfolded_conv_matches_candle() {
        let mut ps = store();
        let c = Conv2d::new(&mut ps, "u", 3, 5, 3, 1, 1).unwrap();
        let x = Tensor::rand(-1f64, 1.0, (2, 3, 7, 6), &Device::Cpu).unwrap();
        let reference = x.conv2d(&c.weight, 1, 1, 1, 1).unwrap();
        let ours = c.forward(&x).unwrap().broadcast_sub(&c.bias.as_ref().unwrap().reshape((1, 5, 1, 1)).unwrap()).unwrap();
        let diff = (reference - ours).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn zeroed_conv_outputs_zero() {
        let mut ps = store();
        let c = Conv2d::zeroed(&mut ps, "z", 3, 2, 3, 1).unwrap();
        let x = Tensor::ones((1, 3, 5, 5), DType::F64, &Device::Cpu).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.abs().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap(), 0.0);
    }
}
