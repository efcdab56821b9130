//! Batched kernels. All buffers are row-major with the batch on the leading
//! axis; matrix products go through `matrixmultiply::sgemm`.

/// `c = a · b + beta · c` for row/column strided views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1));
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `y[b, o] = Σ_i x[b, i] · w[o, i] + bias[o]`
pub(crate) fn dense_forward(
    x: &[f32],
    w: &[f32],
    bias: &[f32],
    batch: usize,
    inputs: usize,
    units: usize,
    y: &mut [f32],
) {
    for row in y.chunks_mut(units) {
        row.copy_from_slice(bias);
    }
    gemm(batch, inputs, units, x, (inputs, 1), w, (1, inputs), 1.0, y, units);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    batch: usize,
    inputs: usize,
    units: usize,
    dw: &mut [f32],
    db: &mut [f32],
    dx: Option<&mut [f32]>,
) {
    // dW[o, i] += Σ_b dy[b, o] · x[b, i]
    gemm(units, batch, inputs, dy, (1, units), x, (inputs, 1), 1.0, dw, inputs);
    for row in dy.chunks(units) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    if let Some(dx) = dx {
        gemm(batch, units, inputs, dy, (units, 1), w, (inputs, 1), 0.0, dx, inputs);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(in_c: usize, h: usize, w: usize, out_c: usize, k: usize, stride: usize) -> Option<Self> {
        let pad = k / 2;
        if k == 0 || stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return None;
        }
        Some(Self {
            in_c,
            h,
            w,
            out_c,
            k,
            stride,
            pad,
            out_h: (h + 2 * pad - k) / stride + 1,
            out_w: (w + 2 * pad - k) / stride + 1,
        })
    }

    pub fn patch(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.positions()
    }

    #[inline]
    fn source_index(&self, o: usize, kk: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + kk) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }
}

/// Unfolds one sample into a `[patch, positions]` matrix.
pub(crate) fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let p = g.positions();
    for c in 0..g.in_c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oh in 0..g.out_h {
                    let line = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    let Some(ih) = g.source_index(oh, ki, g.h) else {
                        line.fill(0.0);
                        continue;
                    };
                    let src = &plane[ih * g.w..(ih + 1) * g.w];
                    for (ow, v) in line.iter_mut().enumerate() {
                        *v = match g.source_index(ow, kj, g.w) {
                            Some(iw) => src[iw],
                            None => 0.0,
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a column matrix back onto the input grid.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    dx.fill(0.0);
    let p = g.positions();
    for c in 0..g.in_c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oh in 0..g.out_h {
                    let Some(ih) = g.source_index(oh, ki, g.h) else {
                        continue;
                    };
                    let line = &src[oh * g.out_w..(oh + 1) * g.out_w];
                    let dst = &mut plane[ih * g.w..(ih + 1) * g.w];
                    for (ow, v) in line.iter().enumerate() {
                        if let Some(iw) = g.source_index(ow, kj, g.w) {
                            dst[iw] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution for a batch. `cols` is scratch space for one
/// unfolded sample (`patch * positions`).
pub(crate) fn conv_forward(
    x: &[f32],
    w: &[f32],
    bias: &[f32],
    g: &ConvGeom,
    batch: usize,
    cols: &mut [f32],
    y: &mut [f32],
) {
    let (r, p) = (g.patch(), g.positions());
    for b in 0..batch {
        im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], g, cols);
        let ys = &mut y[b * g.out_len()..(b + 1) * g.out_len()];
        for (f, plane) in ys.chunks_mut(p).enumerate() {
            plane.fill(bias[f]);
        }
        gemm(g.out_c, r, p, w, (r, 1), cols, (p, 1), 1.0, ys, p);
    }
}

/// Backward convolution for a batch; the forward input `x` is unfolded
/// again one sample at a time.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    batch: usize,
    dw: &mut [f32],
    db: &mut [f32],
    mut dx: Option<&mut [f32]>,
) {
    let (r, p) = (g.patch(), g.positions());
    let mut cols = vec![0.0; r * p];
    let mut dcols = if dx.is_some() { vec![0.0; r * p] } else { Vec::new() };
    for b in 0..batch {
        im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], g, &mut cols);
        let ds = &dy[b * g.out_len()..(b + 1) * g.out_len()];
        // dW[f, r] += Σ_p dy[f, p] · cols[r, p]
        gemm(g.out_c, p, r, ds, (p, 1), &cols, (1, p), 1.0, dw, r);
        for (f, plane) in ds.chunks(p).enumerate() {
            db[f] += plane.iter().sum::<f32>();
        }
        if let Some(dx) = dx.as_deref_mut() {
            // dcols[r, p] = Σ_f w[f, r] · dy[f, p]
            gemm(r, g.out_c, p, w, (1, r), ds, (p, 1), 0.0, &mut dcols, p);
            col2im(&dcols, g, &mut dx[b * g.in_len()..(b + 1) * g.in_len()]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub size: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeom {
    pub fn new(c: usize, h: usize, w: usize, size: usize, stride: usize) -> Option<Self> {
        if size == 0 || stride == 0 || h < size || w < size {
            return None;
        }
        Some(Self {
            c,
            h,
            w,
            size,
            stride,
            out_h: (h - size) / stride + 1,
            out_w: (w - size) / stride + 1,
        })
    }

    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.c * self.out_h * self.out_w
    }
}

/// Max pooling. Ties resolve to the first element in row-major window order.
pub(crate) fn maxpool_forward(x: &[f32], g: &PoolGeom, batch: usize, y: &mut [f32], argmax: &mut [u32]) {
    for b in 0..batch {
        let xs = &x[b * g.in_len()..(b + 1) * g.in_len()];
        let base = b * g.out_len();
        for c in 0..g.c {
            let plane = &xs[c * g.h * g.w..(c + 1) * g.h * g.w];
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for i in 0..g.size {
                        let row = (oh * g.stride + i) * g.w;
                        for j in 0..g.size {
                            let idx = row + ow * g.stride + j;
                            if plane[idx] > best || (i == 0 && j == 0) {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = base + (c * g.out_h + oh) * g.out_w + ow;
                    y[o] = best;
                    argmax[o] = (c * g.h * g.w + best_idx) as u32;
                }
            }
        }
    }
}

pub(crate) fn maxpool_backward(dy: &[f32], argmax: &[u32], g: &PoolGeom, batch: usize, dx: &mut [f32]) {
    dx.fill(0.0);
    for b in 0..batch {
        let dxs = &mut dx[b * g.in_len()..(b + 1) * g.in_len()];
        let range = b * g.out_len()..(b + 1) * g.out_len();
        for (d, &idx) in dy[range.clone()].iter().zip(&argmax[range]) {
            dxs[idx as usize] += d;
        }
    }
}
