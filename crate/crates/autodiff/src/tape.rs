use crate::conv::{conv2d_backward, conv2d_forward, Conv2dSpec};
use crate::{AutodiffError, Result, Scalar, Tensor};

/// Lower clip for probabilities fed to logarithms in the loss ops.
pub const PROB_FLOOR: f64 = 1e-7;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        spec: Conv2dSpec,
        cols: Vec<T>,
    },
    Add(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Softsign(usize),
    Affine {
        input: usize,
        scale: T,
    },
    Softmax {
        input: usize,
        layout: AxisLayout,
    },
    Upsample2x {
        input: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    AvgPool {
        input: usize,
        channels: usize,
        height: usize,
        width: usize,
        kh: usize,
        kw: usize,
    },
    MaxSpatial {
        input: usize,
        argmax: Vec<usize>,
    },
    Slice {
        input: usize,
        offset: usize,
    },
    Sum(usize),
    Mean(usize),
    WeightedSum(Vec<(usize, T)>),
    CrossEntropy {
        probs: usize,
        layout: AxisLayout,
        targets: Vec<usize>,
        mask: Option<Vec<bool>>,
        count: usize,
    },
    BinaryCrossEntropy {
        probs: usize,
        targets: Vec<T>,
    },
    SmoothL1 {
        pred: usize,
        targets: Vec<T>,
        mask: Vec<bool>,
        count: usize,
    },
}

/// A tensor viewed as `[outer, k, inner]` around one axis.
#[derive(Debug, Clone, Copy)]
struct AxisLayout {
    outer: usize,
    k: usize,
    inner: usize,
}

impl AxisLayout {
    fn new(shape: &[usize], axis: usize, op: &'static str) -> Result<Self> {
        if axis >= shape.len() {
            return Err(AutodiffError::invalid(
                op,
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        Ok(Self {
            outer: shape[..axis].iter().product(),
            k: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        })
    }

    fn positions(&self) -> usize {
        self.outer * self.inner
    }

    /// Flat index of class `c` at position `pos` (position enumerates outer, inner).
    fn index(&self, pos: usize, c: usize) -> usize {
        let (o, i) = (pos / self.inner, pos % self.inner);
        (o * self.k + c) * self.inner + i
    }
}

#[derive(Debug)]
struct Node<T> {
    tensor: Tensor<T>,
    op: Op<T>,
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in creation order, so every operation's inputs precede
/// it and [`Tape::backward`] is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are tracked iff `tensor.requires_grad`.
    pub fn leaf(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.grad = None;
        self.nodes.push(Node {
            tensor,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<T>) -> Result<Var> {
        Ok(self.leaf(Tensor::new(shape, values)?))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].tensor
    }

    pub fn values(&self, v: Var) -> &[T] {
        self.nodes[v.0].tensor.values()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].tensor.shape()
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    fn requires(&self, idx: usize) -> bool {
        self.nodes[idx].tensor.requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.requires(i));
        let mut tensor = Tensor::new(shape, values).expect("op produced consistent shape");
        tensor.requires_grad = requires_grad;
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let spec = Conv2dSpec::from_shapes(
            self.shape(input),
            self.shape(kernel),
            self.shape(bias),
            stride,
            padding,
        )?;
        let (out, cols) = conv2d_forward(
            &spec,
            self.values(input),
            self.values(kernel),
            self.values(bias),
        );
        let (oh, ow) = spec.out_hw();
        // Only the kernel gradient needs the unfolded input.
        let cols = if self.requires(kernel.0) { cols } else { Vec::new() };
        Ok(self.push(
            vec![spec.out_channels, oh, ow],
            out,
            Op::Conv2d {
                input: input.0,
                kernel: kernel.0,
                bias: bias.0,
                spec,
                cols,
            },
            &[input.0, kernel.0, bias.0],
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.values(x).iter().map(|&v| f(v)).collect();
        self.push(self.shape(x).to_vec(), out, op, &[x.0])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x.0))
    }

    /// `x / (1 + |x|)`.
    pub fn softsign(&mut self, x: Var) -> Var {
        self.map(x, |v| v / (T::one() + v.abs()), Op::Softsign(x.0))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        self.map(x, |v| scale * v + shift, Op::Affine { input: x.0, scale })
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let layout = AxisLayout::new(self.shape(x), axis, "softmax")?;
        let src = self.values(x);
        let mut out = vec![T::zero(); src.len()];
        for pos in 0..layout.positions() {
            let mut max = T::neg_infinity();
            for c in 0..layout.k {
                max = max.max(src[layout.index(pos, c)]);
            }
            let mut total = T::zero();
            for c in 0..layout.k {
                let i = layout.index(pos, c);
                let e = (src[i] - max).exp();
                out[i] = e;
                total = total + e;
            }
            for c in 0..layout.k {
                let i = layout.index(pos, c);
                out[i] = out[i] / total;
            }
        }
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::Softmax { input: x.0, layout },
            &[x.0],
        ))
    }

    fn chw(&self, op: &'static str, x: Var) -> Result<(usize, usize, usize)> {
        match *self.shape(x) {
            [c, h, w] => Ok((c, h, w)),
            ref s => Err(AutodiffError::shape(op, format!("expected [C,H,W], got {s:?}"))),
        }
    }

    /// Nearest-neighbour 2x upsampling of a `[C, H, W]` tensor.
    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw("upsample_nearest2x", x)?;
        let src = self.values(x);
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                let src_row = &src[(ch * h + y / 2) * w..][..w];
                let dst = &mut out[(ch * oh + y) * ow..][..ow];
                for (xo, d) in dst.iter_mut().enumerate() {
                    *d = src_row[xo / 2];
                }
            }
        }
        Ok(self.push(
            vec![c, oh, ow],
            out,
            Op::Upsample2x {
                input: x.0,
                channels: c,
                height: h,
                width: w,
            },
            &[x.0],
        ))
    }

    /// Non-overlapping average pooling with a `kh x kw` window.
    pub fn avg_pool(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let (c, h, w) = self.chw("avg_pool", x)?;
        if kh == 0 || kw == 0 || h % kh != 0 || w % kw != 0 {
            return Err(AutodiffError::shape(
                "avg_pool",
                format!("window {kh}x{kw} does not tile {h}x{w}"),
            ));
        }
        let (oh, ow) = (h / kh, w / kw);
        let src = self.values(x);
        let norm = T::one() / T::lit((kh * kw) as f64);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for y in 0..h {
                for xi in 0..w {
                    let o = (ch * oh + y / kh) * ow + xi / kw;
                    out[o] = out[o] + src[(ch * h + y) * w + xi];
                }
            }
        }
        out.iter_mut().for_each(|v| *v = *v * norm);
        Ok(self.push(
            vec![c, oh, ow],
            out,
            Op::AvgPool {
                input: x.0,
                channels: c,
                height: h,
                width: w,
                kh,
                kw,
            },
            &[x.0],
        ))
    }

    /// Per-channel maximum over all spatial positions: `[C, H, W] -> [C]`.
    /// Ties resolve to the first position in row-major order.
    pub fn max_spatial(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw("max_spatial", x)?;
        let src = self.values(x);
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for ch in 0..c {
            let plane = &src[ch * h * w..][..h * w];
            let (best, val) = plane
                .iter()
                .enumerate()
                .fold((0, plane[0]), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            out.push(val);
            argmax.push(ch * h * w + best);
        }
        Ok(self.push(
            vec![c],
            out,
            Op::MaxSpatial {
                input: x.0,
                argmax,
            },
            &[x.0],
        ))
    }

    /// Slices `len` entries of the leading axis.
    pub fn slice_leading(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || len == 0 || start + len > shape[0] {
            return Err(AutodiffError::shape(
                "slice_leading",
                format!("[{start}, {}) out of range for {shape:?}", start + len),
            ));
        }
        let stride: usize = shape[1..].iter().product();
        let out = self.values(x)[start * stride..(start + len) * stride].to_vec();
        let mut new_shape = shape;
        new_shape[0] = len;
        Ok(self.push(
            new_shape,
            out,
            Op::Slice {
                input: x.0,
                offset: start * stride,
            },
            &[x.0],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.values(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum(x.0), &[x.0])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vals = self.values(x);
        let s: T = vals.iter().copied().sum();
        let m = s / T::lit(vals.len() as f64);
        self.push(vec![1], vec![m], Op::Mean(x.0), &[x.0])
    }

    /// `sum_i w_i * x_i` over scalar inputs with constant weights.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        if terms.is_empty() {
            return Err(AutodiffError::invalid("weighted_sum", "no terms"));
        }
        let mut total = T::zero();
        for &(v, w) in terms {
            if !self.value(v).is_scalar() {
                return Err(AutodiffError::shape(
                    "weighted_sum",
                    format!("term has shape {:?}", self.shape(v)),
                ));
            }
            total = total + w * self.value(v).item();
        }
        let inputs: Vec<usize> = terms.iter().map(|(v, _)| v.0).collect();
        Ok(self.push(
            vec![1],
            vec![total],
            Op::WeightedSum(terms.iter().map(|&(v, w)| (v.0, w)).collect()),
            &inputs,
        ))
    }

    /// Mean of `-ln p[target]` over unmasked positions, class axis `axis`.
    ///
    /// Probabilities are clipped to `[PROB_FLOOR, 1]` before the logarithm.
    pub fn categorical_cross_entropy(
        &mut self,
        probs: Var,
        axis: usize,
        targets: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<Var> {
        let op = "categorical_cross_entropy";
        let layout = AxisLayout::new(self.shape(probs), axis, op)?;
        if targets.len() != layout.positions() {
            return Err(AutodiffError::shape(
                op,
                format!("{} targets for {} positions", targets.len(), layout.positions()),
            ));
        }
        if let Some(m) = mask {
            if m.len() != targets.len() {
                return Err(AutodiffError::shape(
                    op,
                    format!("mask has {} entries, expected {}", m.len(), targets.len()),
                ));
            }
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= layout.k) {
            return Err(AutodiffError::invalid(
                op,
                format!("target class {bad} outside [0, {})", layout.k),
            ));
        }
        let p = self.values(probs);
        let floor = T::lit(PROB_FLOOR);
        let mut total = T::zero();
        let mut count = 0usize;
        for (pos, &t) in targets.iter().enumerate() {
            if mask.is_some_and(|m| !m[pos]) {
                continue;
            }
            let v = p[layout.index(pos, t)].max(floor).min(T::one());
            total = total - v.ln();
            count += 1;
        }
        if count == 0 {
            return Err(AutodiffError::EmptyLossSupport);
        }
        let loss = total / T::lit(count as f64);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                probs: probs.0,
                layout,
                targets: targets.to_vec(),
                mask: mask.map(<[bool]>::to_vec),
                count,
            },
            &[probs.0],
        ))
    }

    /// Mean binary cross-entropy of probabilities against `{0, 1}` targets.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &[T]) -> Result<Var> {
        let op = "binary_cross_entropy";
        if targets.len() != self.value(probs).len() {
            return Err(AutodiffError::shape(
                op,
                format!("{} targets for {} probabilities", targets.len(), self.value(probs).len()),
            ));
        }
        let (lo, hi) = (T::lit(PROB_FLOOR), T::one() - T::lit(PROB_FLOOR));
        let mut total = T::zero();
        for (&p, &y) in self.values(probs).iter().zip(targets) {
            let p = p.max(lo).min(hi);
            total = total - (y * p.ln() + (T::one() - y) * (T::one() - p).ln());
        }
        let loss = total / T::lit(targets.len() as f64);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::BinaryCrossEntropy {
                probs: probs.0,
                targets: targets.to_vec(),
            },
            &[probs.0],
        ))
    }

    /// Mean smooth-L1 (Huber, delta 1) over entries where `mask` is set.
    /// Zero when nothing is selected.
    pub fn smooth_l1(&mut self, pred: Var, targets: &[T], mask: &[bool]) -> Result<Var> {
        let n = self.value(pred).len();
        if targets.len() != n || mask.len() != n {
            return Err(AutodiffError::shape(
                "smooth_l1",
                format!("{} targets / {} mask entries for {n} predictions", targets.len(), mask.len()),
            ));
        }
        let mut total = T::zero();
        let mut count = 0;
        for ((&p, &t), &m) in self.values(pred).iter().zip(targets).zip(mask) {
            if m {
                total = total + huber(p - t);
                count += 1;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::lit(count as f64)
        };
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::SmoothL1 {
                pred: pred.0,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
            &[pred.0],
        ))
    }

    /// Populates gradients of `loss` for every node that requires them.
    ///
    /// Previous gradients are discarded, so the tape may be swept repeatedly
    /// for different scalar losses.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if !self.value(loss).is_scalar() {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
        if !self.requires(loss.0) {
            return Ok(());
        }
        self.nodes[loss.0].tensor.grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(grad) = node.tensor.grad.as_deref() else {
                continue;
            };
            for (target, contribution) in node_backward(before, node, grad) {
                let t = &mut before[target].tensor;
                if !t.requires_grad {
                    continue;
                }
                match &mut t.grad {
                    Some(acc) => acc
                        .iter_mut()
                        .zip(&contribution)
                        .for_each(|(a, &c)| *a = *a + c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn huber<T: Scalar>(d: T) -> T {
    if d.abs() < T::one() {
        T::lit(0.5) * d * d
    } else {
        d.abs() - T::lit(0.5)
    }
}

fn huber_grad<T: Scalar>(d: T) -> T {
    if d.abs() < T::one() {
        d
    } else {
        d.signum()
    }
}

/// Local backward rule: gradient contributions for the node's inputs.
fn node_backward<T: Scalar>(before: &[Node<T>], node: &Node<T>, g: &[T]) -> Vec<(usize, Vec<T>)> {
    let vals = |i: usize| before[i].tensor.values();
    let needs = |i: usize| before[i].tensor.requires_grad;
    let out = node.tensor.values();
    let elementwise = |i: usize, f: &dyn Fn(usize) -> T| -> Vec<(usize, Vec<T>)> {
        if !needs(i) {
            return Vec::new();
        }
        vec![(i, (0..g.len()).map(f).collect())]
    };
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Conv2d {
            input,
            kernel,
            bias,
            spec,
            cols,
        } => {
            let grads = conv2d_backward(
                spec,
                cols,
                vals(*kernel),
                g,
                (needs(*input), needs(*kernel), needs(*bias)),
            );
            [(*input, grads.input), (*kernel, grads.kernel), (*bias, grads.bias)]
                .into_iter()
                .filter_map(|(i, g)| g.map(|g| (i, g)))
                .collect()
        }
        Op::Add(a, b) => {
            let mut v = Vec::new();
            if needs(*a) {
                v.push((*a, g.to_vec()));
            }
            if needs(*b) {
                v.push((*b, g.to_vec()));
            }
            v
        }
        Op::Mul(a, b) => {
            let (va, vb) = (vals(*a), vals(*b));
            let mut v = Vec::new();
            if needs(*a) {
                v.push((*a, g.iter().zip(vb).map(|(&g, &y)| g * y).collect()));
            }
            if needs(*b) {
                v.push((*b, g.iter().zip(va).map(|(&g, &x)| g * x).collect()));
            }
            v
        }
        Op::Relu(x) => {
            let xv = vals(*x);
            elementwise(*x, &|i| if xv[i] > T::zero() { g[i] } else { T::zero() })
        }
        Op::Sigmoid(x) => elementwise(*x, &|i| g[i] * out[i] * (T::one() - out[i])),
        Op::Softsign(x) => {
            let xv = vals(*x);
            elementwise(*x, &|i| {
                let d = T::one() + xv[i].abs();
                g[i] / (d * d)
            })
        }
        Op::Affine { input, scale } => elementwise(*input, &|i| g[i] * *scale),
        Op::Softmax { input, layout } => {
            if !needs(*input) {
                return Vec::new();
            }
            let mut dx = vec![T::zero(); g.len()];
            for pos in 0..layout.positions() {
                let mut dot = T::zero();
                for c in 0..layout.k {
                    let i = layout.index(pos, c);
                    dot = dot + g[i] * out[i];
                }
                for c in 0..layout.k {
                    let i = layout.index(pos, c);
                    dx[i] = out[i] * (g[i] - dot);
                }
            }
            vec![(*input, dx)]
        }
        Op::Upsample2x {
            input,
            channels,
            height,
            width,
        } => {
            if !needs(*input) {
                return Vec::new();
            }
            let (h, w) = (*height, *width);
            let ow = 2 * w;
            let mut dx = vec![T::zero(); channels * h * w];
            for ch in 0..*channels {
                for y in 0..2 * h {
                    let src = &g[(ch * 2 * h + y) * ow..][..ow];
                    let dst = &mut dx[(ch * h + y / 2) * w..][..w];
                    for (xo, &v) in src.iter().enumerate() {
                        dst[xo / 2] = dst[xo / 2] + v;
                    }
                }
            }
            vec![(*input, dx)]
        }
        Op::AvgPool {
            input,
            channels,
            height,
            width,
            kh,
            kw,
        } => {
            if !needs(*input) {
                return Vec::new();
            }
            let (h, w) = (*height, *width);
            let (oh, ow) = (h / kh, w / kw);
            let norm = T::one() / T::lit((kh * kw) as f64);
            let mut dx = vec![T::zero(); channels * h * w];
            for ch in 0..*channels {
                for y in 0..h {
                    for xi in 0..w {
                        dx[(ch * h + y) * w + xi] = g[(ch * oh + y / kh) * ow + xi / kw] * norm;
                    }
                }
            }
            vec![(*input, dx)]
        }
        Op::MaxSpatial { input, argmax } => {
            if !needs(*input) {
                return Vec::new();
            }
            let mut dx = vec![T::zero(); vals(*input).len()];
            for (&idx, &gv) in argmax.iter().zip(g) {
                dx[idx] = dx[idx] + gv;
            }
            vec![(*input, dx)]
        }
        Op::Slice { input, offset } => {
            if !needs(*input) {
                return Vec::new();
            }
            let mut dx = vec![T::zero(); vals(*input).len()];
            dx[*offset..*offset + g.len()].copy_from_slice(g);
            vec![(*input, dx)]
        }
        Op::Sum(x) => {
            if !needs(*x) {
                return Vec::new();
            }
            vec![(*x, vec![g[0]; vals(*x).len()])]
        }
        Op::Mean(x) => {
            if !needs(*x) {
                return Vec::new();
            }
            let n = vals(*x).len();
            vec![(*x, vec![g[0] / T::lit(n as f64); n])]
        }
        Op::WeightedSum(terms) => terms
            .iter()
            .filter(|(i, _)| needs(*i))
            .map(|&(i, w)| (i, vec![g[0] * w]))
            .collect(),
        Op::CrossEntropy {
            probs,
            layout,
            targets,
            mask,
            count,
        } => {
            if !needs(*probs) {
                return Vec::new();
            }
            let p = vals(*probs);
            let floor = T::lit(PROB_FLOOR);
            let scale = g[0] / T::lit(*count as f64);
            let mut dx = vec![T::zero(); p.len()];
            for (pos, &t) in targets.iter().enumerate() {
                if mask.as_ref().is_some_and(|m| !m[pos]) {
                    continue;
                }
                let i = layout.index(pos, t);
                // Clipped entries are constant in the loss.
                if p[i] >= floor && p[i] <= T::one() {
                    dx[i] = -scale / p[i];
                }
            }
            vec![(*probs, dx)]
        }
        Op::BinaryCrossEntropy { probs, targets } => {
            if !needs(*probs) {
                return Vec::new();
            }
            let p = vals(*probs);
            let (lo, hi) = (T::lit(PROB_FLOOR), T::one() - T::lit(PROB_FLOOR));
            let scale = g[0] / T::lit(targets.len() as f64);
            let dx = p
                .iter()
                .zip(targets)
                .map(|(&p, &y)| {
                    if p < lo || p > hi {
                        T::zero()
                    } else {
                        scale * (-y / p + (T::one() - y) / (T::one() - p))
                    }
                })
                .collect();
            vec![(*probs, dx)]
        }
        Op::SmoothL1 {
            pred,
            targets,
            mask,
            count,
        } => {
            if !needs(*pred) || *count == 0 {
                return Vec::new();
            }
            let scale = g[0] / T::lit(*count as f64);
            let dx = vals(*pred)
                .iter()
                .zip(targets)
                .zip(mask)
                .map(|((&p, &t), &m)| if m { scale * huber_grad(p - t) } else { T::zero() })
                .collect();
            vec![(*pred, dx)]
        }
    }
}
