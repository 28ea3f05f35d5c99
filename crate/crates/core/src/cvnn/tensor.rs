//! Complex activation tensor and the GEMM/im2col kernels under the
//! convolution layers.

/// 4-D complex tensor stored as paired real/imaginary planes,
/// row-major `[batch, channels, height, width]`, double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub shape: [usize; 4],
}

impl ComplexTensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        let n = shape.iter().product();
        Self { re: vec![0.0; n], im: vec![0.0; n], shape }
    }

    pub fn from_parts(re: Vec<f64>, im: Vec<f64>, shape: [usize; 4]) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(re.len(), n, "re plane size mismatch");
        assert_eq!(im.len(), n, "im plane size mismatch");
        Self { re, im, shape }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    /// Contiguous (re, im) slices of one sample.
    pub fn sample(&self, b: usize) -> (&[f64], &[f64]) {
        let n = self.sample_len();
        (&self.re[b * n..(b + 1) * n], &self.im[b * n..(b + 1) * n])
    }

    /// Single-sample view copied out as a batch-1 tensor.
    pub fn slice_sample(&self, b: usize) -> ComplexTensor {
        let (re, im) = self.sample(b);
        ComplexTensor {
            re: re.to_vec(),
            im: im.to_vec(),
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
        }
    }

    /// Stacks batch-1 tensors of identical sample shape.
    pub fn stack(samples: &[ComplexTensor]) -> ComplexTensor {
        assert!(!samples.is_empty());
        let s = samples[0].shape;
        let mut out = ComplexTensor::zeros([samples.len(), s[1], s[2], s[3]]);
        let n = out.sample_len();
        for (b, t) in samples.iter().enumerate() {
            assert_eq!(t.shape, s);
            out.re[b * n..(b + 1) * n].copy_from_slice(&t.re);
            out.im[b * n..(b + 1) * n].copy_from_slice(&t.im);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.re.iter().all(|v| v.is_finite()) && self.im.iter().all(|v| v.is_finite())
    }
}

/// Row-major GEMM: `c = alpha * a(m x k) * b(k x n) + beta * c`.
pub fn gemm_rm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major GEMM with `a` transposed: `c = alpha * a^T(m x k) * b + beta * c`
/// where `a` is stored as (k x m).
pub fn gemm_at(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major GEMM with `b` transposed: `c = alpha * a(m x k) * b^T + beta * c`
/// where `b` is stored as (n x k).
pub fn gemm_bt(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output spatial size of a convolution.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Patch geometry shared by im2col and col2im.
#[derive(Debug, Clone, Copy)]
pub struct PatchSpec {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl PatchSpec {
    pub fn new(c_in: usize, h_in: usize, w_in: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            c_in,
            h_in,
            w_in,
            k,
            stride,
            pad,
            h_out: conv_out_dim(h_in, k, stride, pad),
            w_out: conv_out_dim(w_in, k, stride, pad),
        }
    }

    /// Rows per plane of the column matrix.
    pub fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn out_positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfolds one sample plane into `cols[row, pos]` with `row` spanning
/// (channel, ky, kx) and `pos` spanning output positions. `cols` must be
/// `col_rows * out_positions` long; positions outside the input are zero.
pub fn im2col_plane(spec: &PatchSpec, plane: &[f64], cols: &mut [f64]) {
    let hw = spec.out_positions();
    debug_assert_eq!(plane.len(), spec.c_in * spec.h_in * spec.w_in);
    debug_assert_eq!(cols.len(), spec.col_rows() * hw);
    for c in 0..spec.c_in {
        let src_c = &plane[c * spec.h_in * spec.w_in..(c + 1) * spec.h_in * spec.w_in];
        for ky in 0..spec.k {
            for kx in 0..spec.k {
                let row = (c * spec.k + ky) * spec.k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let mut pos = 0;
                for oy in 0..spec.h_out {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if iy < 0 || iy >= spec.h_in as isize {
                        dst[pos..pos + spec.w_out].fill(0.0);
                        pos += spec.w_out;
                        continue;
                    }
                    let row_base = iy as usize * spec.w_in;
                    for ox in 0..spec.w_out {
                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        dst[pos] = if ix < 0 || ix >= spec.w_in as isize {
                            0.0
                        } else {
                            src_c[row_base + ix as usize]
                        };
                        pos += 1;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_plane`]: folds column gradients back onto the
/// input plane (accumulating overlaps).
pub fn col2im_plane(spec: &PatchSpec, cols: &[f64], plane: &mut [f64]) {
    let hw = spec.out_positions();
    plane.fill(0.0);
    for c in 0..spec.c_in {
        let dst_c = &mut plane[c * spec.h_in * spec.w_in..(c + 1) * spec.h_in * spec.w_in];
        for ky in 0..spec.k {
            for kx in 0..spec.k {
                let row = (c * spec.k + ky) * spec.k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let mut pos = 0;
                for oy in 0..spec.h_out {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if iy < 0 || iy >= spec.h_in as isize {
                        pos += spec.w_out;
                        continue;
                    }
                    let row_base = iy as usize * spec.w_in;
                    for ox in 0..spec.w_out {
                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        if ix >= 0 && ix < spec.w_in as isize {
                            dst_c[row_base + ix as usize] += src[pos];
                        }
                        pos += 1;
                    }
                }
            }
        }
    }
}
