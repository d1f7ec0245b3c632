//! Convolutions lowered to GEMM through im2col / col2im.
//!
//! 2-D convolutions are the `T = 1` case of the 3-D geometry, so a single
//! lowering (and a single backward) serves `conv2d`, grouped `conv2d`,
//! `conv3d` and `conv_transpose2d`.

use super::{gemm, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride: (stride, stride),
            padding: (padding, padding),
            groups: 1,
        }
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dSpec {
    /// (time, height, width)
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTranspose2dSpec {
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended on the far edge; must be below `stride`.
    pub output_padding: usize,
}

/// Convolution geometry. `dims` are the spatial extents of the image side,
/// `out` the extents of the filter-response side.
#[derive(Debug, Clone, Copy)]
struct Geom {
    n: usize,
    dims: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    out: [usize; 3],
}

impl Geom {
    fn in_vol(&self) -> usize {
        self.dims.iter().product()
    }
    fn out_vol(&self) -> usize {
        self.out.iter().product()
    }
    fn k_vol(&self) -> usize {
        self.kernel.iter().product()
    }
    fn cols(&self) -> usize {
        self.n * self.out_vol()
    }
}

fn out_extent(input: usize, k: usize, s: usize, p: usize, what: &str) -> Result<usize> {
    if s == 0 {
        return Err(Error::config(format!("{what}: stride must be positive")));
    }
    if input + 2 * p < k {
        return Err(Error::shape(format!(
            "{what}: kernel {k} larger than padded input {}",
            input + 2 * p
        )));
    }
    Ok((input + 2 * p - k) / s + 1)
}

/// Unfolds channels `c0..c0+cg` of `src` (`n × c_total × dims`) into a
/// `(cg·kvol) × (n·out_vol)` matrix.
fn im2col<T: Element>(src: &[T], g: &Geom, c_total: usize, c0: usize, cg: usize) -> Vec<T> {
    let (ncols, ovol, ivol) = (g.cols(), g.out_vol(), g.in_vol());
    let [kt, kh, kw] = g.kernel;
    let [dt, dh, dw] = g.dims;
    let [ot, oh, ow] = g.out;
    let mut cols = vec![T::zero(); cg * g.k_vol() * ncols];
    let mut row = 0;
    for ci in 0..cg {
        for a in 0..kt {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for ni in 0..g.n {
                        let plane = &src[(ni * c_total + c0 + ci) * ivol..][..ivol];
                        let out_base = ni * ovol;
                        for z in 0..ot {
                            let iz = (z * g.stride[0] + a) as isize - g.pad[0] as isize;
                            if iz < 0 || iz >= dt as isize {
                                continue;
                            }
                            for y in 0..oh {
                                let iy = (y * g.stride[1] + b) as isize - g.pad[1] as isize;
                                if iy < 0 || iy >= dh as isize {
                                    continue;
                                }
                                let src_row = &plane[(iz as usize * dh + iy as usize) * dw..][..dw];
                                let dst_row = &mut dst[out_base + (z * oh + y) * ow..][..ow];
                                for (x, d) in dst_row.iter_mut().enumerate() {
                                    let ix = (x * g.stride[2] + e) as isize - g.pad[2] as isize;
                                    if ix >= 0 && ix < dw as isize {
                                        *d = src_row[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back into `dst`.
fn col2im<T: Element>(cols: &[T], g: &Geom, c_total: usize, c0: usize, cg: usize, dst: &mut [T]) {
    let (ncols, ovol, ivol) = (g.cols(), g.out_vol(), g.in_vol());
    let [kt, kh, kw] = g.kernel;
    let [dt, dh, dw] = g.dims;
    let [ot, oh, ow] = g.out;
    let mut row = 0;
    for ci in 0..cg {
        for a in 0..kt {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for ni in 0..g.n {
                        let plane = &mut dst[(ni * c_total + c0 + ci) * ivol..][..ivol];
                        let out_base = ni * ovol;
                        for z in 0..ot {
                            let iz = (z * g.stride[0] + a) as isize - g.pad[0] as isize;
                            if iz < 0 || iz >= dt as isize {
                                continue;
                            }
                            for y in 0..oh {
                                let iy = (y * g.stride[1] + b) as isize - g.pad[1] as isize;
                                if iy < 0 || iy >= dh as isize {
                                    continue;
                                }
                                let dst_row = &mut plane[(iz as usize * dh + iy as usize) * dw..][..dw];
                                let src_row = &src[out_base + (z * oh + y) * ow..][..ow];
                                for (x, &v) in src_row.iter().enumerate() {
                                    let ix = (x * g.stride[2] + e) as isize - g.pad[2] as isize;
                                    if ix >= 0 && ix < dw as isize {
                                        let d = &mut dst_row[ix as usize];
                                        *d = *d + v;
                                    }
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Shared forward/backward for grouped convolution over the 3-D geometry.
/// `input`: `n × c × dims`, `weight`: `o × (c/groups) × kernel`.
fn conv_generic<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: Geom,
    c: usize,
    o: usize,
    groups: usize,
    out_shape: Vec<usize>,
) -> Result<Tensor<T>> {
    let (cg, og) = (c / groups, o / groups);
    let krows = cg * g.k_vol();
    let (ncols, ovol) = (g.cols(), g.out_vol());
    let x = input.data_rc();
    let w = weight.data_rc();

    let mut all_cols = Vec::with_capacity(groups);
    let mut out = vec![T::zero(); g.n * o * ovol];
    let mut buf = vec![T::zero(); og * ncols];
    for gi in 0..groups {
        let cols = im2col(&x, &g, c, gi * cg, cg);
        gemm(og, krows, ncols, &w[gi * og * krows..], false, &cols, false, &mut buf, false);
        for oc in 0..og {
            let b = bias.map_or(T::zero(), |b| b.data()[gi * og + oc]);
            for ni in 0..g.n {
                let src = &buf[oc * ncols + ni * ovol..][..ovol];
                let dst = &mut out[(ni * o + gi * og + oc) * ovol..][..ovol];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + b);
            }
        }
        all_cols.push(cols);
    }

    let mut inputs = vec![input.clone(), weight.clone()];
    inputs.extend(bias.cloned());
    let flags: Vec<bool> = inputs.iter().map(Tensor::requires_grad).collect();
    let in_numel = input.numel();
    Ok(Tensor::from_op(out_shape, out, inputs, move |grad| {
        let mut gx = flags[0].then(|| vec![T::zero(); in_numel]);
        let mut gw = flags[1].then(|| vec![T::zero(); o * krows]);
        let mut gb = flags.get(2).copied().unwrap_or(false).then(|| vec![T::zero(); o]);
        let mut gout = vec![T::zero(); og * ncols];
        let mut gcols = vec![T::zero(); krows * ncols];
        for (gi, cols) in all_cols.iter().enumerate() {
            for oc in 0..og {
                for ni in 0..g.n {
                    gout[oc * ncols + ni * ovol..][..ovol]
                        .copy_from_slice(&grad[(ni * o + gi * og + oc) * ovol..][..ovol]);
                }
            }
            if let Some(gb) = gb.as_mut() {
                for oc in 0..og {
                    gb[gi * og + oc] = gout[oc * ncols..(oc + 1) * ncols].iter().copied().sum();
                }
            }
            if let Some(gw) = gw.as_mut() {
                gemm(og, ncols, krows, &gout, false, cols, true, &mut gw[gi * og * krows..], false);
            }
            if let Some(gx) = gx.as_mut() {
                gemm(krows, og, ncols, &w[gi * og * krows..], true, &gout, false, &mut gcols, false);
                col2im(&gcols, &g, c, gi * cg, cg, gx);
            }
        }
        let mut grads = vec![gx, gw];
        if flags.len() == 3 {
            grads.push(gb);
        }
        grads
    }))
}

fn check_bias<T: Element>(bias: Option<&Tensor<T>>, o: usize, what: &str) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [o] => Err(Error::shape(format!(
            "{what}: bias shape {:?}, expected [{o}]",
            b.shape()
        ))),
        _ => Ok(()),
    }
}

impl<T: Element> Tensor<T> {
    /// 2-D (optionally grouped) convolution of `N×C×H×W` with an
    /// `O×(C/groups)×kh×kw` kernel.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, spec: Conv2dSpec) -> Result<Tensor<T>> {
        let &[n, c, h, w] = self.shape() else {
            return Err(Error::shape(format!("conv2d input must be N×C×H×W, got {:?}", self.shape())));
        };
        let &[o, cw, kh, kw] = weight.shape() else {
            return Err(Error::shape(format!("conv2d weight must be O×C×kh×kw, got {:?}", weight.shape())));
        };
        let groups = spec.groups;
        if groups == 0 || c % groups != 0 || o % groups != 0 {
            return Err(Error::config(format!(
                "conv2d: groups {groups} must divide input channels {c} and output channels {o}"
            )));
        }
        if cw != c / groups {
            return Err(Error::shape(format!(
                "conv2d: weight expects {cw} channels per group, input gives {}",
                c / groups
            )));
        }
        check_bias(bias, o, "conv2d")?;
        let oh = out_extent(h, kh, spec.stride.0, spec.padding.0, "conv2d")?;
        let ow = out_extent(w, kw, spec.stride.1, spec.padding.1, "conv2d")?;
        let g = Geom {
            n,
            dims: [1, h, w],
            kernel: [1, kh, kw],
            stride: [1, spec.stride.0, spec.stride.1],
            pad: [0, spec.padding.0, spec.padding.1],
            out: [1, oh, ow],
        };
        conv_generic(self, weight, bias, g, c, o, groups, vec![n, o, oh, ow])
    }

    /// Grouped 2-D convolution; shorthand for [`Tensor::conv2d`] with `groups`.
    pub fn conv2d_grouped(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Tensor<T>> {
        self.conv2d(weight, bias, Conv2dSpec::new(stride, padding).groups(groups))
    }

    /// 3-D convolution of `N×C×T×H×W` with an `O×C×kt×kh×kw` kernel.
    pub fn conv3d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, spec: Conv3dSpec) -> Result<Tensor<T>> {
        let &[n, c, t, h, w] = self.shape() else {
            return Err(Error::shape(format!("conv3d input must be N×C×T×H×W, got {:?}", self.shape())));
        };
        let &[o, cw, kt, kh, kw] = weight.shape() else {
            return Err(Error::shape(format!("conv3d weight must be O×C×kt×kh×kw, got {:?}", weight.shape())));
        };
        if cw != c {
            return Err(Error::shape(format!("conv3d: weight expects {cw} channels, input has {c}")));
        }
        check_bias(bias, o, "conv3d")?;
        let dims = [t, h, w];
        let kernel = [kt, kh, kw];
        let mut out = [0; 3];
        for i in 0..3 {
            out[i] = out_extent(dims[i], kernel[i], spec.stride[i], spec.padding[i], "conv3d")?;
        }
        let g = Geom {
            n,
            dims,
            kernel,
            stride: spec.stride,
            pad: spec.padding,
            out,
        };
        conv_generic(self, weight, bias, g, c, o, 1, vec![n, o, out[0], out[1], out[2]])
    }

    /// Transposed 2-D convolution (the adjoint of `conv2d`) of `N×Cin×H×W`
    /// with a `Cin×Cout×kh×kw` kernel. Output extent is
    /// `(H−1)·stride − 2·padding + k + output_padding`.
    pub fn conv_transpose2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        spec: ConvTranspose2dSpec,
    ) -> Result<Tensor<T>> {
        let &[n, cin, h, w] = self.shape() else {
            return Err(Error::shape(format!("conv_transpose2d input must be N×C×H×W, got {:?}", self.shape())));
        };
        let &[wc, cout, kh, kw] = weight.shape() else {
            return Err(Error::shape(format!("conv_transpose2d weight must be Cin×Cout×kh×kw, got {:?}", weight.shape())));
        };
        if wc != cin {
            return Err(Error::shape(format!("conv_transpose2d: weight expects {wc} input channels, got {cin}")));
        }
        let ConvTranspose2dSpec { stride, padding, output_padding } = spec;
        if stride == 0 || output_padding >= stride {
            return Err(Error::config(format!(
                "conv_transpose2d: need stride > 0 and output_padding < stride, got {stride}/{output_padding}"
            )));
        }
        check_bias(bias, cout, "conv_transpose2d")?;
        let extent = |i: usize, k: usize| -> Result<usize> {
            ((i - 1) * stride + k + output_padding)
                .checked_sub(2 * padding)
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::shape("conv_transpose2d: padding exceeds output extent"))
        };
        let (oh, ow) = (extent(h, kh)?, extent(w, kw)?);
        let g = Geom {
            n,
            dims: [1, oh, ow],
            kernel: [1, kh, kw],
            stride: [1, stride, stride],
            pad: [0, padding, padding],
            out: [1, h, w],
        };
        let (hw, krows, ncols, ovol) = (h * w, cout * kh * kw, n * h * w, oh * ow);

        // input as Cin × (N·H·W)
        let mut xm = vec![T::zero(); cin * ncols];
        for ni in 0..n {
            for ci in 0..cin {
                xm[ci * ncols + ni * hw..][..hw].copy_from_slice(&self.data()[(ni * cin + ci) * hw..][..hw]);
            }
        }
        let wd = weight.data_rc();
        let mut cols = vec![T::zero(); krows * ncols];
        gemm(krows, cin, ncols, &wd, true, &xm, false, &mut cols, false);
        let mut out = vec![T::zero(); n * cout * ovol];
        col2im(&cols, &g, cout, 0, cout, &mut out);
        if let Some(b) = bias {
            for (p, plane) in out.chunks_exact_mut(ovol).enumerate() {
                let bv = b.data()[p % cout];
                plane.iter_mut().for_each(|v| *v = *v + bv);
            }
        }

        let mut inputs = vec![self.clone(), weight.clone()];
        inputs.extend(bias.cloned());
        let flags: Vec<bool> = inputs.iter().map(Tensor::requires_grad).collect();
        Ok(Tensor::from_op(vec![n, cout, oh, ow], out, inputs, move |grad| {
            let gcols = im2col(grad, &g, cout, 0, cout);
            let gx = flags[0].then(|| {
                let mut gxm = vec![T::zero(); cin * ncols];
                gemm(cin, krows, ncols, &wd, false, &gcols, false, &mut gxm, false);
                let mut gx = vec![T::zero(); n * cin * hw];
                for ni in 0..n {
                    for ci in 0..cin {
                        gx[(ni * cin + ci) * hw..][..hw].copy_from_slice(&gxm[ci * ncols + ni * hw..][..hw]);
                    }
                }
                gx
            });
            let gw = flags[1].then(|| {
                let mut gw = vec![T::zero(); cin * krows];
                gemm(cin, ncols, krows, &xm, false, &gcols, true, &mut gw, false);
                gw
            });
            let mut grads = vec![gx, gw];
            if flags.len() == 3 {
                grads.push(flags[2].then(|| {
                    let mut gb = vec![T::zero(); cout];
                    for (p, plane) in grad.chunks_exact(ovol).enumerate() {
                        gb[p % cout] = gb[p % cout] + plane.iter().copied().sum::<T>();
                    }
                    gb
                }));
            }
            grads
        }))
    }
}
