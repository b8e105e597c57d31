use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, ConvPlan};
use super::tensor::{Geometry, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    Relu(Var),
    NormalizedRelu {
        input: Var,
        // per sample: flat index of the first maximal element, None when the
        // sample's rectified maximum is zero
        argmax: Vec<Option<usize>>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Concat(Var, Var),
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Wengert list for reverse-mode differentiation.
///
/// Operations execute eagerly and append a node, so node order is a valid
/// topological order and `backward` simply walks the list in reverse.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Vec<f64>>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input. It never receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable input whose gradient is collected by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).unwrap_or_else(|e| panic!("{e}")).value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).map(|n| n.requires_grad).unwrap_or(false)
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    ///
    /// `None` for values that do not require a gradient or before
    /// `backward` has run.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = self.node(v).ok()?;
        if !node.requires_grad {
            return None;
        }
        let grads = self.grads.as_ref()?;
        let data = grads[v.index]
            .clone()
            .unwrap_or_else(|| vec![0.0; node.value.len()]);
        Some(Tensor::new(node.value.shape().to_vec(), data).expect("grad matches value shape"))
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::State(
                "value was recorded on a different tape".into(),
            ));
        }
        self.nodes
            .get(v.index)
            .ok_or_else(|| Error::State(format!("node {} was never recorded", v.index)))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(self.grads.is_none(), "recording after backward");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn ensure_recording(&self) -> Result<()> {
        if self.grads.is_some() {
            Err(Error::State("tape is sealed after backward".into()))
        } else {
            Ok(())
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.requires_grad(v))
    }

    // ---- primitives -------------------------------------------------------

    /// Same-padded, stride-1 convolution over 2-D or 3-D inputs.
    ///
    /// `input` is `[N, C, spatial..]`, `kernel` is `[F, C, k..]` with odd
    /// extents, `bias` is `[F]`.
    pub fn conv(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        self.ensure_recording()?;
        let (g, filters, (kd, kh, kw)) = self.conv_shapes(input, kernel, bias)?;
        let plan = ConvPlan::new(&g, kd, kh, kw);
        let out = kernels::conv_forward(
            &plan,
            &g,
            filters,
            self.node(input)?.value.data(),
            self.node(kernel)?.value.data(),
            self.node(bias)?.value.data(),
        );
        let mut shape = self.node(input)?.value.shape().to_vec();
        shape[1] = filters;
        let value = Tensor::new(shape, out)?;
        let rg = self.any_grad(&[input, kernel, bias]);
        Ok(self.push(
            value,
            Op::Conv {
                input,
                kernel,
                bias,
            },
            rg,
        ))
    }

    fn conv_shapes(
        &self,
        input: Var,
        kernel: Var,
        bias: Var,
    ) -> Result<(Geometry, usize, (usize, usize, usize))> {
        let xs = self.node(input)?.value.shape();
        let ks = self.node(kernel)?.value.shape();
        let bs = self.node(bias)?.value.shape();
        let g = Geometry::of(xs)?;
        if ks.len() != xs.len() {
            return Err(Error::Shape(format!(
                "kernel rank {} does not match input rank {}",
                ks.len(),
                xs.len()
            )));
        }
        if ks[1] != g.channels {
            return Err(Error::Shape(format!(
                "kernel expects {} input channels, input has {}",
                ks[1], g.channels
            )));
        }
        if bs != [ks[0]] {
            return Err(Error::Shape(format!(
                "bias shape {bs:?} does not match {} filters",
                ks[0]
            )));
        }
        if ks[2..].iter().any(|&e| e % 2 == 0) {
            return Err(Error::Config(format!(
                "kernel extents must be odd, got {:?}",
                &ks[2..]
            )));
        }
        let ext = if ks.len() == 5 {
            (ks[2], ks[3], ks[4])
        } else {
            (1, ks[2], ks[3])
        };
        Ok((g, ks[0], ext))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let src = &self.node(x)?.value;
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().map(|&v| v.max(0.0)).collect(),
        )?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::Relu(x), rg))
    }

    /// `relu(x) / max(relu(x))` per sample (leading axis), all-zero when the
    /// rectified maximum is zero. Outputs lie in `[0, 1]` and the maximal
    /// element maps to exactly `1.0`.
    pub fn normalized_relu(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let src = &self.node(x)?.value;
        let shape = src.shape().to_vec();
        let batch = *shape
            .first()
            .ok_or_else(|| Error::Shape("normalized_relu on a scalar".into()))?;
        let stride = src.len() / batch;
        let mut out = vec![0.0; src.len()];
        let mut argmax = Vec::with_capacity(batch);
        for n in 0..batch {
            let row = &src.data()[n * stride..(n + 1) * stride];
            let mut best = 0.0;
            let mut best_idx = None;
            for (i, &v) in row.iter().enumerate() {
                if v > best {
                    best = v;
                    best_idx = Some(n * stride + i);
                }
            }
            if best_idx.is_some() {
                for (o, &v) in out[n * stride..(n + 1) * stride].iter_mut().zip(row) {
                    *o = v.max(0.0) / best;
                }
            }
            argmax.push(best_idx);
        }
        let value = Tensor::new(shape, out)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::NormalizedRelu { input: x, argmax }, rg))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.ensure_recording()?;
        self.same_shape(a, b, what)?;
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        Tensor::new(
            va.shape().to_vec(),
            va.data()
                .iter()
                .zip(vb.data())
                .map(|(&x, &y)| f(x, y))
                .collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "div", |x, y| x / y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Div(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.ensure_recording()?;
        let src = &self.node(a)?.value;
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().map(|&v| v * factor).collect(),
        )?;
        let rg = self.requires_grad(a);
        Ok(self.push(value, Op::Scale(a, factor), rg))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var> {
        self.ensure_recording()?;
        let src = &self.node(a)?.value;
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().map(|&v| v + offset).collect(),
        )?;
        let rg = self.requires_grad(a);
        Ok(self.push(value, Op::AddScalar(a), rg))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.ensure_recording()?;
        let total = self.node(a)?.value.data().iter().sum();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::scalar(total), Op::Sum(a), rg))
    }

    /// Concatenates along the channel axis (axis 1).
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_recording()?;
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        let (ga, gb) = (Geometry::of(va.shape())?, Geometry::of(vb.shape())?);
        if va.rank() != vb.rank() || ga.batch != gb.batch || va.shape()[2..] != vb.shape()[2..] {
            return Err(Error::Shape(format!(
                "concat: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let (sa, sb) = (ga.channels * ga.voxels(), gb.channels * gb.voxels());
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for n in 0..ga.batch {
            data.extend_from_slice(&va.data()[n * sa..(n + 1) * sa]);
            data.extend_from_slice(&vb.data()[n * sb..(n + 1) * sb]);
        }
        let mut shape = va.shape().to_vec();
        shape[1] = ga.channels + gb.channels;
        let value = Tensor::new(shape, data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    /// Stride-2 max pooling over every spatial axis. Ties resolve to the
    /// first maximal element in row-major window order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let src = &self.node(x)?.value;
        let g = Geometry::of(src.shape())?;
        let volumetric = src.rank() == 5;
        if src.shape()[2..].iter().any(|&e| e % 2 != 0) {
            return Err(Error::Shape(format!(
                "max_pool2 needs even spatial extents, got {:?}",
                &src.shape()[2..]
            )));
        }
        let (out, argmax) = kernels::max_pool(&g, volumetric, src.data());
        let mut shape = src.shape().to_vec();
        for e in &mut shape[2..] {
            *e /= 2;
        }
        let value = Tensor::new(shape, out)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::MaxPool { input: x, argmax }, rg))
    }

    /// Nearest-neighbour ×2 upsampling over every spatial axis.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        self.ensure_recording()?;
        let src = &self.node(x)?.value;
        let g = Geometry::of(src.shape())?;
        let out = kernels::upsample(&g, src.rank() == 5, src.data());
        let mut shape = src.shape().to_vec();
        for e in &mut shape[2..] {
            *e *= 2;
        }
        let value = Tensor::new(shape, out)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::Upsample(x), rg))
    }

    // ---- reverse pass -----------------------------------------------------

    /// Accumulates `∂loss/∂v` into every recorded value that requires a
    /// gradient. Seals the tape: it can run once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let node = self.node(loss)?;
        if self.grads.is_some() {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        if !node.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if node.requires_grad {
            grads[loss.index] = Some(vec![1.0]);
        }
        for idx in (0..=loss.index).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn accumulate<'g>(
        &self,
        grads: &'g mut [Option<Vec<f64>>],
        v: Var,
    ) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.index];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.index].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                kernel,
                bias,
            } => {
                let (geo, filters, (kd, kh, kw)) = self.conv_shapes(*input, *kernel, *bias)?;
                let plan = ConvPlan::new(&geo, kd, kh, kw);
                let xin = self.nodes[input.index].value.data();
                let kv = self.nodes[kernel.index].value.data();
                // Separate take/put so three gradients can be borrowed at once.
                let mut gi = self.accumulate(grads, *input).map(std::mem::take);
                let mut gk = self.accumulate(grads, *kernel).map(std::mem::take);
                let mut gb = self.accumulate(grads, *bias).map(std::mem::take);
                kernels::conv_backward(
                    &plan,
                    &geo,
                    filters,
                    xin,
                    kv,
                    g,
                    gi.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, buf) in [(*input, gi), (*kernel, gk), (*bias, gb)] {
                    if let Some(buf) = buf {
                        grads[v.index] = Some(buf);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.nodes[x.index].value.data();
                if let Some(acc) = self.accumulate(grads, *x) {
                    for ((a, &gi), &xi) in acc.iter_mut().zip(g).zip(xv) {
                        if xi > 0.0 {
                            *a += gi;
                        }
                    }
                }
            }
            Op::NormalizedRelu { input, argmax } => {
                let xv = self.nodes[input.index].value.data();
                let yv = node.value.data();
                let stride = xv.len() / argmax.len();
                if let Some(acc) = self.accumulate(grads, *input) {
                    for (n, am) in argmax.iter().enumerate() {
                        let Some(a) = *am else { continue };
                        let m = xv[a];
                        let range = n * stride..(n + 1) * stride;
                        // y_i = r_i / m: direct term plus the max's dependence.
                        let mut through_max = 0.0;
                        for i in range {
                            if xv[i] > 0.0 {
                                acc[i] += g[i] / m;
                            }
                            through_max += g[i] * yv[i];
                        }
                        acc[a] -= through_max / m;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(acc) = self.accumulate(grads, v) {
                        acc.iter_mut().zip(g).for_each(|(x, &gi)| *x += gi);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (
                    self.nodes[a.index].value.data(),
                    self.nodes[b.index].value.data(),
                );
                if let Some(acc) = self.accumulate(grads, *a) {
                    for ((x, &gi), &o) in acc.iter_mut().zip(g).zip(vb) {
                        *x += gi * o;
                    }
                }
                if let Some(acc) = self.accumulate(grads, *b) {
                    for ((x, &gi), &o) in acc.iter_mut().zip(g).zip(va) {
                        *x += gi * o;
                    }
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (
                    self.nodes[a.index].value.data(),
                    self.nodes[b.index].value.data(),
                );
                if let Some(acc) = self.accumulate(grads, *a) {
                    for ((x, &gi), &d) in acc.iter_mut().zip(g).zip(vb) {
                        *x += gi / d;
                    }
                }
                if let Some(acc) = self.accumulate(grads, *b) {
                    for (((x, &gi), &n), &d) in acc.iter_mut().zip(g).zip(va).zip(vb) {
                        *x -= gi * n / (d * d);
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(acc) = self.accumulate(grads, *a) {
                    acc.iter_mut().zip(g).for_each(|(x, &gi)| *x += gi * factor);
                }
            }
            Op::AddScalar(a) => {
                if let Some(acc) = self.accumulate(grads, *a) {
                    acc.iter_mut().zip(g).for_each(|(x, &gi)| *x += gi);
                }
            }
            Op::Sum(a) => {
                if let Some(acc) = self.accumulate(grads, *a) {
                    acc.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::Concat(a, b) => {
                let sa = self.nodes[a.index].value.len();
                let sb = self.nodes[b.index].value.len();
                let batch = node.value.shape()[0];
                let (pa, pb) = (sa / batch, sb / batch);
                if let Some(acc) = self.accumulate(grads, *a) {
                    for n in 0..batch {
                        let src = &g[n * (pa + pb)..][..pa];
                        acc[n * pa..(n + 1) * pa]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &gi)| *x += gi);
                    }
                }
                if let Some(acc) = self.accumulate(grads, *b) {
                    for n in 0..batch {
                        let src = &g[n * (pa + pb) + pa..][..pb];
                        acc[n * pb..(n + 1) * pb]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &gi)| *x += gi);
                    }
                }
            }
            Op::MaxPool { input, argmax } => {
                if let Some(acc) = self.accumulate(grads, *input) {
                    for (&i, &gi) in argmax.iter().zip(g) {
                        acc[i] += gi;
                    }
                }
            }
            Op::Upsample(x) => {
                let shape = self.nodes[x.index].value.shape();
                let geo = Geometry::of(shape)?;
                let volumetric = shape.len() == 5;
                if let Some(acc) = self.accumulate(grads, *x) {
                    kernels::upsample_backward(&geo, volumetric, g, acc);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[1, 1, 4, 4], |i| i as f64 * 0.5 - 3.0));
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let k = tape.leaf(k);
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv(x, k, b).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn zero_kernel_annihilates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[2, 3, 4, 6], |i| (i as f64).sin()));
        let k = tape.leaf(Tensor::zeros(&[5, 3, 3, 3]));
        let b = tape.leaf(Tensor::zeros(&[5]));
        let y = tape.conv(x, k, b).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 5, 4, 6]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_ones_counts_padded_overlap() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 1, 3, 3], 1.0));
        let k = tape.leaf(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv(x, k, b).unwrap();
        assert_eq!(
            tape.value(y).data(),
            &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2, 4, 4]));
        let k = tape.leaf(Tensor::zeros(&[1, 3, 3, 3]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        assert!(matches!(tape.conv(x, k, b), Err(Error::Shape(_))));
        let k = tape.leaf(Tensor::zeros(&[1, 2, 2, 2]));
        assert!(matches!(tape.conv(x, k, b), Err(Error::Config(_))));
    }

    #[test]
    fn volumetric_conv_keeps_extents() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[1, 2, 4, 4, 4], |i| (i % 7) as f64));
        let k = tape.leaf(Tensor::from_fn(&[3, 2, 3, 3, 3], |i| (i % 5) as f64 - 2.0));
        let b = tape.leaf(Tensor::full(&[3], 0.5));
        let y = tape.conv(x, k, b).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3, 4, 4, 4]);
    }

    #[test]
    fn normalized_relu_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 4], &[-1.0, 0.0, 2.0, 4.0]));
        let y = tape.normalized_relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.5, 1.0]);

        let x = tape.leaf(t(&[1, 3], &[-1.0, -0.5, -3.0]));
        let y = tape.normalized_relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);

        let x = tape.leaf(t(&[1, 2], &[2.0, 2.0]));
        let y = tape.normalized_relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 1.0]);
    }

    #[test]
    fn normalized_relu_is_per_sample() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.0, 2.0, 10.0, -1.0]));
        let y = tape.normalized_relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn max_pool_ties_pick_first() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1, 1, 2, 2], &[3.0, 3.0, 1.0, 3.0]));
        let y = tape.max_pool2(x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_form_gradient_is_input() {
        let mut tape = Tape::new();
        let xs = [0.5, -2.0, 3.0];
        let w = tape.param(t(&[3], &[1.0, 1.0, 1.0]));
        let x = tape.leaf(t(&[3], &xs));
        let p = tape.mul(w, x).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &xs);
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[2], &[1.0, 2.0]));
        let c = tape.leaf(Tensor::scalar(0.0));
        tape.backward(c).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_contract_and_state_errors() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));

        let mut other = Tape::new();
        let foreign = other.param(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(foreign), Err(Error::State(_))));

        let s = tape.sum(w).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::State(_))));
        assert!(matches!(tape.relu(w), Err(Error::State(_))));
    }

    #[test]
    fn upsample_then_pool_round_trips() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[1, 2, 2, 3], |i| i as f64));
        let u = tape.upsample2(x).unwrap();
        assert_eq!(tape.value(u).shape(), &[1, 2, 4, 6]);
        let p = tape.max_pool2(u).unwrap();
        assert_eq!(tape.value(p), tape.value(x));
    }
}
