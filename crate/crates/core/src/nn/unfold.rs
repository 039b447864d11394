use candle_core::{CpuStorage, CustomOp1, CustomOp2, DType, Device, Layout, Shape, Tensor, WithDType};

/// Geometry of a stride-1, zero-padded patch extraction.
#[derive(Debug, Clone, Copy)]
struct Patches {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Patches {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.ho * self.wo
    }

    /// For kernel offset `dx`: the output columns `lo..hi` that read inside
    /// the image, and the input column that `lo` reads.
    fn span(&self, dx: usize) -> Option<(usize, usize, usize)> {
        let shift = dx as isize - self.pad as isize;
        let lo = (-shift).max(0) as usize;
        let hi = (self.w as isize - shift).clamp(0, self.wo as isize) as usize;
        (lo < hi).then(|| (lo, hi, (lo as isize + shift) as usize))
    }

    /// Calls `f(image offset, column offset, len)` for every contiguous run
    /// the two layouts share.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize)) {
        let plane = self.plane();
        for n in 0..self.n {
            for c in 0..self.c {
                let img = (n * self.c + c) * self.h * self.w;
                for dy in 0..self.kh {
                    for dx in 0..self.kw {
                        let Some((lo, hi, ix)) = self.span(dx) else { continue };
                        let row = ((n * self.c + c) * self.kh + dy) * self.kw + dx;
                        for oy in 0..self.ho {
                            let iy = oy as isize + dy as isize - self.pad as isize;
                            if iy < 0 || iy >= self.h as isize {
                                continue;
                            }
                            f(img + iy as usize * self.w + ix, row * plane + oy * self.wo + lo, hi - lo);
                        }
                    }
                }
            }
        }
    }

    fn unfold<T: WithDType>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.rows() * self.plane()];
        self.for_each_run(|src, dst, len| out[dst..dst + len].copy_from_slice(&x[src..src + len]));
        out
    }

    fn fold<T: WithDType>(&self, cols: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.c * self.h * self.w];
        self.for_each_run(|dst, src, len| {
            for (o, v) in out[dst..dst + len].iter_mut().zip(&cols[src..src + len]) {
                *o += *v;
            }
        });
        out
    }
}

fn contiguous<'a, T>(v: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("patch op input must be contiguous".into()))?;
    Ok(&v[start..end])
}

struct Unfold(Patches);
struct Fold(Patches);

impl CustomOp1 for Unfold {
    fn name(&self) -> &'static str {
        "unfold"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let p = self.0;
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(p.unfold(contiguous(v, layout)?)),
            CpuStorage::F64(v) => CpuStorage::F64(p.unfold(contiguous(v, layout)?)),
            _ => return Err(candle_core::Error::Msg("unfold supports f32 and f64 only".into())),
        };
        Ok((out, Shape::from((p.n, p.rows(), p.plane()))))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad_res.contiguous()?.apply_op1_no_bwd(&Fold(self.0))?))
    }
}

impl CustomOp1 for Fold {
    fn name(&self) -> &'static str {
        "fold"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let p = self.0;
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(p.fold(contiguous(v, layout)?)),
            CpuStorage::F64(v) => CpuStorage::F64(p.fold(contiguous(v, layout)?)),
            _ => return Err(candle_core::Error::Msg("fold supports f32 and f64 only".into())),
        };
        Ok((out, Shape::from((p.n, p.c, p.h, p.w))))
    }
}

fn patches(x: &Tensor, kh: usize, kw: usize, pad: usize) -> candle_core::Result<Patches> {
    let (n, c, h, w) = x.dims4()?;
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(candle_core::Error::Msg(format!("{kh}x{kw} kernel larger than padded {h}x{w} input")));
    }
    Ok(Patches {
        n,
        c,
        h,
        w,
        kh,
        kw,
        pad,
        ho: h + 2 * pad + 1 - kh,
        wo: w + 2 * pad + 1 - kw,
    })
}

/// `(N, C, H, W)` to `(N, C*kh*kw, Ho*Wo)` columns of stride-1 patches with
/// `pad` zeros on every side; rows are ordered `(c, dy, dx)` to match a
/// `(C_out, C, kh, kw)` weight. The backward pass sums columns back into
/// the image.
pub fn unfold(x: &Tensor, kh: usize, kw: usize, pad: usize) -> candle_core::Result<Tensor> {
    let p = patches(x, kh, kw, pad)?;
    x.contiguous()?.apply_op1(Unfold(p))
}

fn storage_tensor(storage: &CpuStorage, layout: &Layout) -> candle_core::Result<Tensor> {
    match storage {
        CpuStorage::F32(v) => Tensor::from_slice(contiguous(v, layout)?, layout.shape(), &Device::Cpu),
        CpuStorage::F64(v) => Tensor::from_slice(contiguous(v, layout)?, layout.shape(), &Device::Cpu),
        _ => Err(candle_core::Error::Msg("patch conv supports f32 and f64 only".into())),
    }
}

fn tensor_storage(t: &Tensor) -> candle_core::Result<(CpuStorage, Shape)> {
    let flat = t.flatten_all()?;
    let storage = match t.dtype() {
        DType::F32 => CpuStorage::F32(flat.to_vec1()?),
        DType::F64 => CpuStorage::F64(flat.to_vec1()?),
        other => return Err(candle_core::Error::UnsupportedDTypeForOp(other, "patch conv")),
    };
    Ok((storage, t.shape().clone()))
}

/// Square-kernel, stride-1 convolution of `x` with `w`.
struct PatchConv(Patches);

impl PatchConv {
    fn apply(&self, x: &Tensor, w: &Tensor) -> candle_core::Result<Tensor> {
        let p = self.0;
        let c_out = w.dims()[0];
        let cols = x.apply_op1_no_bwd(&Unfold(p))?;
        w.reshape((c_out, p.rows()))?
            .broadcast_matmul(&cols)?
            .reshape((p.n, c_out, p.ho, p.wo))
    }
}

impl CustomOp2 for PatchConv {
    fn name(&self) -> &'static str {
        "patch-conv"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        tensor_storage(&self.apply(&storage_tensor(s1, l1)?, &storage_tensor(s2, l2)?)?)
    }

    fn bwd(
        &self,
        x: &Tensor,
        w: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let p = self.0;
        let (x, w, grad) = (x.detach().contiguous()?, w.detach(), grad.detach().contiguous()?);
        let c_out = w.dims()[0];
        let k2 = p.kh * p.kw;

        let cols = x.apply_op1_no_bwd(&Unfold(p))?;
        let g = grad.reshape((p.n, c_out, p.plane()))?;
        let grad_w = g.matmul(&cols.transpose(1, 2)?)?.sum(0)?.reshape(w.shape())?;

        // The input gradient is a correlation of `grad` with the kernel
        // rotated by 180 degrees and its channel axes swapped.
        let rev: Vec<u32> = (0..k2 as u32).rev().collect();
        let flipped = w
            .reshape((c_out, p.c, k2))?
            .index_select(&Tensor::new(rev, w.device())?, 2)?
            .transpose(0, 1)?
            .contiguous()?
            .reshape((p.c, c_out * k2))?;
        let back = patches(&grad, p.kh, p.kw, p.kh - 1 - p.pad)?;
        let gcols = grad.apply_op1_no_bwd(&Unfold(back))?;
        let grad_x = flipped.broadcast_matmul(&gcols)?.reshape((p.n, p.c, p.h, p.w))?;
        Ok((Some(grad_x), Some(grad_w)))
    }
}

/// Stride-1 convolution with a square `(C_out, C, k, k)` kernel and `pad`
/// zeros per side (`pad < k`), as patch columns times the flattened kernel.
pub fn patch_conv(x: &Tensor, w: &Tensor, pad: usize) -> candle_core::Result<Tensor> {
    let (_, c_in, kh, kw) = w.dims4()?;
    if kh != kw || pad >= kh || x.dims4()?.1 != c_in {
        return Err(candle_core::Error::Msg(format!(
            "patch conv needs a square kernel wider than its padding and matching channels, got {:?} with pad {pad} on {:?}",
            w.dims(),
            x.dims()
        )));
    }
    let p = patches(x, kh, kw, pad)?;
    x.contiguous()?.apply_op2(&w.contiguous()?, PatchConv(p))
}
