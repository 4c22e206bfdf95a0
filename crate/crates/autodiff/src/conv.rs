use crate::{AutodiffError, Result, Scalar};

/// Geometry of one 2-D cross-correlation over a `[C_in, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

/// `floor((n + 2*padding - k) / stride) + 1`, or `None` when the kernel does
/// not fit.
pub fn conv2d_output_size(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || n + 2 * padding < k {
        return None;
    }
    Some((n + 2 * padding - k) / stride + 1)
}

impl Conv2dSpec {
    pub fn from_shapes(
        input: &[usize],
        kernel: &[usize],
        bias: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let op = "conv2d";
        let [c_in, h, w] = *input else {
            return Err(AutodiffError::shape(op, format!("input must be [C,H,W], got {input:?}")));
        };
        let [c_out, kc, kh, kw] = *kernel else {
            return Err(AutodiffError::shape(
                op,
                format!("kernel must be [C_out,C_in,kH,kW], got {kernel:?}"),
            ));
        };
        if kc != c_in {
            return Err(AutodiffError::shape(
                op,
                format!("kernel expects {kc} input channels, input has {c_in}"),
            ));
        }
        if bias != [c_out] {
            return Err(AutodiffError::shape(
                op,
                format!("bias must be [{c_out}], got {bias:?}"),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(AutodiffError::shape(op, format!("kernel {kh}x{kw} must be odd")));
        }
        if stride == 0 {
            return Err(AutodiffError::invalid(op, "stride must be >= 1"));
        }
        let spec = Self {
            in_channels: c_in,
            out_channels: c_out,
            in_height: h,
            in_width: w,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
        };
        if spec.out_height().is_none() || spec.out_width().is_none() {
            return Err(AutodiffError::shape(
                op,
                format!("{kh}x{kw} kernel does not fit {h}x{w} input with padding {padding}"),
            ));
        }
        Ok(spec)
    }

    pub fn out_height(&self) -> Option<usize> {
        conv2d_output_size(self.in_height, self.kernel_h, self.stride, self.padding)
    }

    pub fn out_width(&self) -> Option<usize> {
        conv2d_output_size(self.in_width, self.kernel_w, self.stride, self.padding)
    }

    pub(crate) fn out_hw(&self) -> (usize, usize) {
        (
            self.out_height().expect("validated"),
            self.out_width().expect("validated"),
        )
    }

    /// Rows of the unfolded input matrix.
    pub(crate) fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn multiply_accumulates(&self) -> u64 {
        let (oh, ow) = self.out_hw();
        (self.out_channels * self.patch_len() * oh * ow) as u64
    }

    /// True when the unfolded matrix is the input itself.
    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unfolds `[C, H, W]` into a `[C*kH*kW, H'*W']` matrix.
pub(crate) fn im2col<T: Scalar>(spec: &Conv2dSpec, input: &[T]) -> Vec<T> {
    if spec.is_pointwise() {
        return input.to_vec();
    }
    let (oh, ow) = spec.out_hw();
    let (h, w) = (spec.in_height as isize, spec.in_width as isize);
    let pad = spec.padding as isize;
    let stride = spec.stride as isize;
    let mut cols = vec![T::zero(); spec.patch_len() * oh * ow];
    let mut row = 0;
    for c in 0..spec.in_channels {
        let plane = &input[c * spec.in_height * spec.in_width..][..spec.in_height * spec.in_width];
        for ky in 0..spec.kernel_h as isize {
            for kx in 0..spec.kernel_w as isize {
                let dst = &mut cols[row * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize * stride + ky - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let src_row = &plane[(iy * w) as usize..][..w as usize];
                    let dst_row = &mut dst[oy * ow..][..ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = ox as isize * stride + kx - pad;
                        if ix >= 0 && ix < w {
                            *d = src_row[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-adds column gradients back onto the input.
pub(crate) fn col2im<T: Scalar>(spec: &Conv2dSpec, cols: &[T]) -> Vec<T> {
    if spec.is_pointwise() {
        return cols.to_vec();
    }
    let (oh, ow) = spec.out_hw();
    let (h, w) = (spec.in_height as isize, spec.in_width as isize);
    let pad = spec.padding as isize;
    let stride = spec.stride as isize;
    let mut out = vec![T::zero(); spec.in_channels * spec.in_height * spec.in_width];
    let mut row = 0;
    for c in 0..spec.in_channels {
        let plane = &mut out[c * spec.in_height * spec.in_width..][..spec.in_height * spec.in_width];
        for ky in 0..spec.kernel_h as isize {
            for kx in 0..spec.kernel_w as isize {
                let src = &cols[row * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize * stride + ky - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst_row = &mut plane[(iy * w) as usize..][..w as usize];
                    let src_row = &src[oy * ow..][..ow];
                    for (ox, &g) in src_row.iter().enumerate() {
                        let ix = ox as isize * stride + kx - pad;
                        if ix >= 0 && ix < w {
                            dst_row[ix as usize] = dst_row[ix as usize] + g;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// Forward pass; returns the output and the unfolded input for backward.
pub(crate) fn conv2d_forward<T: Scalar>(
    spec: &Conv2dSpec,
    input: &[T],
    kernel: &[T],
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let (oh, ow) = spec.out_hw();
    let p = oh * ow;
    let k = spec.patch_len();
    let cols = im2col(spec, input);
    let mut out = vec![T::zero(); spec.out_channels * p];
    for (row, &b) in out.chunks_mut(p).zip(bias) {
        row.fill(b);
    }
    T::gemm(
        spec.out_channels,
        k,
        p,
        T::one(),
        kernel,
        (k as isize, 1),
        &cols,
        (p as isize, 1),
        T::one(),
        &mut out,
        (p as isize, 1),
    );
    (out, cols)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    spec: &Conv2dSpec,
    cols: &[T],
    kernel: &[T],
    grad_out: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (oh, ow) = spec.out_hw();
    let p = oh * ow;
    let k = spec.patch_len();
    let c_out = spec.out_channels;
    let input = need.0.then(|| {
        let mut dcols = vec![T::zero(); k * p];
        // dcols = K^T (k x c_out) * dOut (c_out x p)
        T::gemm(
            k,
            c_out,
            p,
            T::one(),
            kernel,
            (1, k as isize),
            grad_out,
            (p as isize, 1),
            T::zero(),
            &mut dcols,
            (p as isize, 1),
        );
        col2im(spec, &dcols)
    });
    let kernel_grad = need.1.then(|| {
        let mut dk = vec![T::zero(); c_out * k];
        // dK = dOut (c_out x p) * cols^T (p x k)
        T::gemm(
            c_out,
            p,
            k,
            T::one(),
            grad_out,
            (p as isize, 1),
            cols,
            (1, p as isize),
            T::zero(),
            &mut dk,
            (k as isize, 1),
        );
        dk
    });
    let bias = need
        .2
        .then(|| grad_out.chunks(p).map(|row| row.iter().copied().sum()).collect());
    ConvGrads {
        input,
        kernel: kernel_grad,
        bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_size_formula() {
        assert_eq!(conv2d_output_size(96, 3, 2, 1), Some(48));
        assert_eq!(conv2d_output_size(96, 7, 2, 3), Some(48));
        assert_eq!(conv2d_output_size(5, 3, 1, 0), Some(3));
        assert_eq!(conv2d_output_size(2, 5, 1, 0), None);
        assert_eq!(conv2d_output_size(2, 3, 0, 0), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for arbitrary x, y
        let spec = Conv2dSpec {
            in_channels: 2,
            out_channels: 1,
            in_height: 5,
            in_width: 4,
            kernel_h: 3,
            kernel_w: 3,
            stride: 2,
            padding: 1,
        };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols = im2col(&spec, &x);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&spec, &y);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
