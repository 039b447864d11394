use std::sync::Arc;

use candle_core::{CpuStorage, CustomOp1, DType, Device, Layout, Shape, Tensor, Var};

use crate::error::Result;

type FrozenFnBox = dyn Fn(&Tensor) -> candle_core::Result<Tensor> + Send + Sync;

struct FrozenOp {
    name: &'static str,
    f: Arc<FrozenFnBox>,
}

fn storage_to_tensor(storage: &CpuStorage, layout: &Layout) -> candle_core::Result<Tensor> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("frozen op input must be contiguous".into()))?;
    match storage {
        CpuStorage::F32(v) => Tensor::from_slice(&v[start..end], layout.shape(), &Device::Cpu),
        CpuStorage::F64(v) => Tensor::from_slice(&v[start..end], layout.shape(), &Device::Cpu),
        _ => Err(candle_core::Error::Msg("frozen op supports f32 and f64 only".into())),
    }
}

fn tensor_to_storage(t: &Tensor) -> candle_core::Result<(CpuStorage, Shape)> {
    let flat = t.flatten_all()?;
    let storage = match t.dtype() {
        DType::F32 => CpuStorage::F32(flat.to_vec1()?),
        DType::F64 => CpuStorage::F64(flat.to_vec1()?),
        other => return Err(candle_core::Error::UnsupportedDTypeForOp(other, "frozen")),
    };
    Ok((storage, t.shape().clone()))
}

impl CustomOp1 for FrozenOp {
    fn name(&self) -> &'static str {
        self.name
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let x = storage_to_tensor(storage, layout)?;
        tensor_to_storage(&(self.f)(&x)?)
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        // Vector-Jacobian product through a private graph: only `arg` is a
        // variable there, and the store is dropped on return.
        let x = Var::from_tensor(&arg.detach())?;
        let y = (self.f)(x.as_tensor())?;
        let s = (y * grad_res.detach())?.sum_all()?;
        let grads = s.backward()?;
        Ok(grads.get(x.as_tensor()).cloned())
    }
}

/// Applies `f` to `x` as one autograd node whose only input is `x`.
///
/// Tensors captured by `f` are never part of the caller's graph, so a
/// backward pass through the result computes gradients for `x` (and
/// whatever `x` depends on) but never for them.
pub fn apply_frozen<F>(x: &Tensor, name: &'static str, f: F) -> Result<Tensor>
where
    F: Fn(&Tensor) -> candle_core::Result<Tensor> + Send + Sync + 'static,
{
    let op = FrozenOp { name, f: Arc::new(f) };
    Ok(x.contiguous()?.apply_op1(op)?)
}
