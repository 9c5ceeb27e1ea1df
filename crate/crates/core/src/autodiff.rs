//! Reverse-mode automatic differentiation on a per-forward-pass tape.
//!
//! `Variable` is a shared handle to a value/gradient pair. `Tape` records every
//! operation applied during a forward pass and replays the chain rule in
//! reverse on `backward`. Gradients accumulate across backward calls until
//! explicitly zeroed, which is what lets a training step sum per-sample
//! gradients from independent tapes.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
struct VarInner {
    value: Tensor,
    grad: Tensor,
    requires_grad: bool,
    trainable: bool,
}

/// Shared handle to a tensor plus its gradient accumulator. Cloning the handle
/// aliases the same storage.
#[derive(Debug, Clone)]
pub struct Variable {
    inner: Rc<RefCell<VarInner>>,
}

impl Variable {
    /// A constant input: gradients are neither required nor computed for it.
    pub fn leaf(value: Tensor) -> Self {
        Variable::build(value, false, false)
    }

    /// A trainable parameter: participates in backward and optimizer updates.
    pub fn param(value: Tensor) -> Self {
        Variable::build(value, true, true)
    }

    fn build(value: Tensor, requires_grad: bool, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Variable {
            inner: Rc::new(RefCell::new(VarInner {
                value,
                grad,
                requires_grad,
                trainable,
            })),
        }
    }

    fn derived(value: Tensor, requires_grad: bool) -> Self {
        Variable::build(value, requires_grad, false)
    }

    pub fn value(&self) -> Ref<'_, Tensor> {
        Ref::map(self.inner.borrow(), |i| &i.value)
    }

    pub fn grad(&self) -> Ref<'_, Tensor> {
        Ref::map(self.inner.borrow(), |i| &i.grad)
    }

    pub fn shape_vec(&self) -> Vec<usize> {
        self.inner.borrow().value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn trainable(&self) -> bool {
        self.inner.borrow().trainable
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad.fill(0.0);
    }

    /// Scalar convenience accessor; errors unless the value has one element.
    pub fn item(&self) -> Result<f64> {
        self.inner.borrow().value.item()
    }

    pub fn value_at(&self, idx: usize) -> f64 {
        self.inner.borrow().value.data()[idx]
    }

    pub fn set_value_at(&self, idx: usize, v: f64) {
        self.inner.borrow_mut().value.data_mut()[idx] = v;
    }

    pub fn set_value(&self, value: Tensor) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if !inner.value.same_shape(&value) {
            return Err(Error::shape(
                "Variable::set_value",
                format!(
                    "existing shape {:?}, new shape {:?}",
                    inner.value.shape(),
                    value.shape()
                ),
            ));
        }
        inner.value = value;
        Ok(())
    }

    /// Applies an in-place update that can read the gradient while mutating
    /// the value (the optimizer's access pattern).
    pub fn update<F: FnOnce(&mut [f64], &[f64])>(&self, f: F) {
        let inner = &mut *self.inner.borrow_mut();
        f(inner.value.data_mut(), inner.grad.data());
    }

    pub fn same_storage(a: &Variable, b: &Variable) -> bool {
        Rc::ptr_eq(&a.inner, &b.inner)
    }

    fn accumulate_grad(&self, contribution: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        for (g, c) in inner.grad.data_mut().iter_mut().zip(contribution) {
            *g += c;
        }
    }

    fn accumulate_grad_at(&self, idx: usize, c: f64) {
        self.inner.borrow_mut().grad.data_mut()[idx] += c;
    }

    fn seed_grad_one(&self) {
        self.inner.borrow_mut().grad.data_mut()[0] += 1.0;
    }
}

pub fn zero_grads(params: &[Variable]) {
    for p in params {
        p.zero_grad();
    }
}

/// Convolution boundary handling: `Same` zero-pads so the output length
/// equals the input length; `Valid` keeps only fully covered windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    Same,
    Valid,
}

struct ConvRec {
    kernels: Variable,
    biases: Variable,
    input: Variable,
    padding: Padding,
    out: Variable,
}

struct LstmRec {
    w_f: Variable,
    b_f: Variable,
    w_i: Variable,
    b_i: Variable,
    w_g: Variable,
    b_g: Variable,
    w_o: Variable,
    b_o: Variable,
    x: Variable,
    h_prev: Variable,
    c_prev: Variable,
    h_out: Variable,
    c_out: Variable,
    // Activations saved by the forward pass so backward avoids recomputation.
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    hx: Vec<f64>,
}

enum Record {
    MatVec { w: Variable, x: Variable, out: Variable },
    Add { a: Variable, b: Variable, out: Variable },
    Sub { a: Variable, b: Variable, out: Variable },
    Mul { a: Variable, b: Variable, out: Variable },
    Scale { a: Variable, k: f64, out: Variable },
    PowScalar { a: Variable, e: f64, out: Variable },
    Sigmoid { a: Variable, out: Variable },
    Tanh { a: Variable, out: Variable },
    Relu { a: Variable, out: Variable },
    MaxOverAxis { a: Variable, argmax: Vec<usize>, out: Variable },
    Sum { a: Variable, out: Variable },
    Col { a: Variable, col: usize, out: Variable },
    Concat { a: Variable, b: Variable, out: Variable },
    Conv(Box<ConvRec>),
    RectThreshold { fm: Variable, thr: Variable, out: Variable },
    LstmStep(Box<LstmRec>),
}

/// Operation recorder for one forward pass. Build a fresh tape per pass.
#[derive(Default)]
pub struct Tape {
    records: Vec<Record>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Tape { records: Vec::new() }
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    fn push(&mut self, rec: Record, out: &Variable) {
        // Subgraphs made only of constants never feed a gradient, so there is
        // no point replaying them.
        if out.requires_grad() {
            self.records.push(rec);
        }
    }

    /// Matrix-vector product: `w [r, c] · x [c] -> [r]`.
    pub fn matvec(&mut self, w: &Variable, x: &Variable) -> Result<Variable> {
        let (r, c) = {
            let wv = w.value();
            if wv.rank() != 2 {
                return Err(Error::shape(
                    "matvec",
                    format!("matrix must be rank 2, got {:?}", wv.shape()),
                ));
            }
            (wv.shape()[0], wv.shape()[1])
        };
        {
            let xv = x.value();
            if xv.shape() != [c] {
                return Err(Error::shape(
                    "matvec",
                    format!("matrix is [{r}, {c}] but vector is {:?}", xv.shape()),
                ));
            }
        }
        let mut data = vec![0.0; r];
        {
            let wv = w.value();
            let xv = x.value();
            let wd = wv.data();
            let xd = xv.data();
            for i in 0..r {
                let row = &wd[i * c..(i + 1) * c];
                let mut acc = 0.0;
                for j in 0..c {
                    acc += row[j] * xd[j];
                }
                data[i] = acc;
            }
        }
        let out = Variable::derived(
            Tensor::vector(data),
            w.requires_grad() || x.requires_grad(),
        );
        self.push(
            Record::MatVec { w: w.clone(), x: x.clone(), out: out.clone() },
            &out,
        );
        Ok(out)
    }

    fn binary_elementwise(
        &mut self,
        op: &'static str,
        a: &Variable,
        b: &Variable,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Variable, Variable, Variable) -> Record,
    ) -> Result<Variable> {
        {
            let av = a.value();
            let bv = b.value();
            if !av.same_shape(&bv) {
                return Err(Error::shape(
                    op,
                    format!("operands have shapes {:?} and {:?}", av.shape(), bv.shape()),
                ));
            }
        }
        let data: Vec<f64> = {
            let av = a.value();
            let bv = b.value();
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect()
        };
        let shape = a.shape_vec();
        let out = Variable::derived(
            Tensor::new(shape, data)?,
            a.requires_grad() || b.requires_grad(),
        );
        self.push(make(a.clone(), b.clone(), out.clone()), &out);
        Ok(out)
    }

    pub fn add(&mut self, a: &Variable, b: &Variable) -> Result<Variable> {
        self.binary_elementwise("add", a, b, |x, y| x + y, |a, b, out| Record::Add { a, b, out })
    }

    pub fn sub(&mut self, a: &Variable, b: &Variable) -> Result<Variable> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, |a, b, out| Record::Sub { a, b, out })
    }

    pub fn mul(&mut self, a: &Variable, b: &Variable) -> Result<Variable> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, |a, b, out| Record::Mul { a, b, out })
    }

    pub fn scale(&mut self, a: &Variable, k: f64) -> Result<Variable> {
        let data: Vec<f64> = a.value().data().iter().map(|&x| x * k).collect();
        let out = Variable::derived(Tensor::new(a.shape_vec(), data)?, a.requires_grad());
        self.push(Record::Scale { a: a.clone(), k, out: out.clone() }, &out);
        Ok(out)
    }

    pub fn pow_scalar(&mut self, a: &Variable, e: f64) -> Result<Variable> {
        let data: Vec<f64> = a.value().data().iter().map(|&x| x.powf(e)).collect();
        let out = Variable::derived(Tensor::new(a.shape_vec(), data)?, a.requires_grad());
        self.push(Record::PowScalar { a: a.clone(), e, out: out.clone() }, &out);
        Ok(out)
    }

    fn unary(
        &mut self,
        a: &Variable,
        f: impl Fn(f64) -> f64,
        make: impl Fn(Variable, Variable) -> Record,
    ) -> Result<Variable> {
        let data: Vec<f64> = a.value().data().iter().map(|&x| f(x)).collect();
        let out = Variable::derived(Tensor::new(a.shape_vec(), data)?, a.requires_grad());
        self.push(make(a.clone(), out.clone()), &out);
        Ok(out)
    }

    pub fn sigmoid(&mut self, a: &Variable) -> Result<Variable> {
        self.unary(a, sigmoid, |a, out| Record::Sigmoid { a, out })
    }

    pub fn tanh(&mut self, a: &Variable) -> Result<Variable> {
        self.unary(a, f64::tanh, |a, out| Record::Tanh { a, out })
    }

    pub fn relu(&mut self, a: &Variable) -> Result<Variable> {
        self.unary(a, |x| x.max(0.0), |a, out| Record::Relu { a, out })
    }

    /// Maximum along one axis of a rank-2 tensor. `axis = 1` reduces each row
    /// (a `[r, c]` input becomes `[r]`). Gradient flows to the first maximum
    /// of each slice on ties.
    pub fn max_over_axis(&mut self, a: &Variable, axis: usize) -> Result<Variable> {
        let (rows, cols) = {
            let av = a.value();
            if av.rank() != 2 {
                return Err(Error::shape(
                    "max_over_axis",
                    format!("expected rank 2, got {:?}", av.shape()),
                ));
            }
            (av.shape()[0], av.shape()[1])
        };
        if axis > 1 {
            return Err(Error::arg("max_over_axis", format!("axis must be 0 or 1, got {axis}")));
        }
        let (out_len, slices, stride, step) = if axis == 1 {
            (rows, cols, cols, 1) // slice i starts at i*cols, walks by 1
        } else {
            (cols, rows, 1, cols) // slice i starts at i, walks by cols
        };
        let mut data = vec![0.0; out_len];
        let mut argmax = vec![0usize; out_len];
        {
            let av = a.value();
            let ad = av.data();
            for i in 0..out_len {
                let mut best = f64::NEG_INFINITY;
                let mut best_j = 0;
                for j in 0..slices {
                    let v = ad[i * stride + j * step];
                    if v > best {
                        best = v;
                        best_j = j;
                    }
                }
                data[i] = best;
                argmax[i] = i * stride + best_j * step;
            }
        }
        let out = Variable::derived(Tensor::vector(data), a.requires_grad());
        self.push(
            Record::MaxOverAxis { a: a.clone(), argmax, out: out.clone() },
            &out,
        );
        Ok(out)
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&mut self, a: &Variable) -> Result<Variable> {
        let total: f64 = a.value().data().iter().sum();
        let out = Variable::derived(Tensor::scalar(total), a.requires_grad());
        self.push(Record::Sum { a: a.clone(), out: out.clone() }, &out);
        Ok(out)
    }

    /// Extracts column `col` of a rank-2 tensor as a vector.
    pub fn col(&mut self, a: &Variable, col: usize) -> Result<Variable> {
        let (rows, cols) = {
            let av = a.value();
            if av.rank() != 2 {
                return Err(Error::shape("col", format!("expected rank 2, got {:?}", av.shape())));
            }
            (av.shape()[0], av.shape()[1])
        };
        if col >= cols {
            return Err(Error::arg("col", format!("column {col} out of range for {cols} columns")));
        }
        let data: Vec<f64> = {
            let av = a.value();
            (0..rows).map(|r| av.data()[r * cols + col]).collect()
        };
        let out = Variable::derived(Tensor::vector(data), a.requires_grad());
        self.push(Record::Col { a: a.clone(), col, out: out.clone() }, &out);
        Ok(out)
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: &Variable, b: &Variable) -> Result<Variable> {
        {
            let av = a.value();
            let bv = b.value();
            if av.rank() != 1 || bv.rank() != 1 {
                return Err(Error::shape(
                    "concat",
                    format!("expected two vectors, got {:?} and {:?}", av.shape(), bv.shape()),
                ));
            }
        }
        let mut data = a.value().data().to_vec();
        data.extend_from_slice(b.value().data());
        let out = Variable::derived(
            Tensor::vector(data),
            a.requires_grad() || b.requires_grad(),
        );
        self.push(
            Record::Concat { a: a.clone(), b: b.clone(), out: out.clone() },
            &out,
        );
        Ok(out)
    }

    /// 1-D convolution over the length axis of a `[4, L]` input with a bank of
    /// `[K, 4, m]` kernels and `[K]` biases, producing a `[K, T]` feature map.
    pub fn conv(
        &mut self,
        kernels: &Variable,
        biases: &Variable,
        input: &Variable,
        padding: Padding,
    ) -> Result<Variable> {
        let (k_count, channels, m) = {
            let kv = kernels.value();
            if kv.rank() != 3 {
                return Err(Error::shape(
                    "conv",
                    format!("kernels must be rank 3 [K, channels, m], got {:?}", kv.shape()),
                ));
            }
            (kv.shape()[0], kv.shape()[1], kv.shape()[2])
        };
        let (in_ch, len) = {
            let iv = input.value();
            if iv.rank() != 2 {
                return Err(Error::shape(
                    "conv",
                    format!("input must be rank 2 [channels, L], got {:?}", iv.shape()),
                ));
            }
            (iv.shape()[0], iv.shape()[1])
        };
        if in_ch != channels {
            return Err(Error::shape(
                "conv",
                format!("kernels have {channels} channels but input has {in_ch}"),
            ));
        }
        if biases.shape_vec() != [k_count] {
            return Err(Error::shape(
                "conv",
                format!("expected [{k_count}] biases, got {:?}", biases.shape_vec()),
            ));
        }
        let t_len = match padding {
            Padding::Valid => {
                if len < m {
                    return Err(Error::shape(
                        "conv",
                        format!("input length {len} is shorter than kernel width {m}"),
                    ));
                }
                len - m + 1
            }
            Padding::Same => len,
        };
        // Offset of window position t relative to the input: column t+j-left.
        let left = match padding {
            Padding::Valid => 0,
            Padding::Same => (m - 1) / 2,
        };
        let mut data = vec![0.0; k_count * t_len];
        {
            let kv = kernels.value();
            let bv = biases.value();
            let iv = input.value();
            let kd = kv.data();
            let id = iv.data();
            for k in 0..k_count {
                let bias = bv.data()[k];
                for t in 0..t_len {
                    let mut acc = bias;
                    for j in 0..m {
                        let col = (t + j) as isize - left as isize;
                        if col < 0 || col >= len as isize {
                            continue;
                        }
                        let col = col as usize;
                        for r in 0..channels {
                            acc += kd[(k * channels + r) * m + j] * id[r * len + col];
                        }
                    }
                    data[k * t_len + t] = acc;
                }
            }
        }
        let out = Variable::derived(
            Tensor::new(vec![k_count, t_len], data)?,
            kernels.requires_grad() || biases.requires_grad() || input.requires_grad(),
        );
        self.push(
            Record::Conv(Box::new(ConvRec {
                kernels: kernels.clone(),
                biases: biases.clone(),
                input: input.clone(),
                padding,
                out: out.clone(),
            })),
            &out,
        );
        Ok(out)
    }

    /// Rectification against per-row trainable thresholds:
    /// `out[k, t] = max(0, fm[k, t] - thr[k])`.
    pub fn rect_threshold(&mut self, fm: &Variable, thr: &Variable) -> Result<Variable> {
        let (rows, cols) = {
            let fv = fm.value();
            if fv.rank() != 2 {
                return Err(Error::shape(
                    "rect_threshold",
                    format!("feature map must be rank 2, got {:?}", fv.shape()),
                ));
            }
            (fv.shape()[0], fv.shape()[1])
        };
        if thr.shape_vec() != [rows] {
            return Err(Error::shape(
                "rect_threshold",
                format!("expected [{rows}] thresholds, got {:?}", thr.shape_vec()),
            ));
        }
        let data: Vec<f64> = {
            let fv = fm.value();
            let tv = thr.value();
            let mut d = vec![0.0; rows * cols];
            for k in 0..rows {
                let th = tv.data()[k];
                for t in 0..cols {
                    d[k * cols + t] = (fv.data()[k * cols + t] - th).max(0.0);
                }
            }
            d
        };
        let out = Variable::derived(
            Tensor::new(vec![rows, cols], data)?,
            fm.requires_grad() || thr.requires_grad(),
        );
        self.push(
            Record::RectThreshold { fm: fm.clone(), thr: thr.clone(), out: out.clone() },
            &out,
        );
        Ok(out)
    }

    /// One LSTM cell update, fused into a single record. Gates act on the
    /// concatenation `[h_prev, x]`:
    ///
    /// ```text
    /// f = sigmoid(W_f [h, x] + b_f)     i = sigmoid(W_i [h, x] + b_i)
    /// g = tanh   (W_g [h, x] + b_g)     o = sigmoid(W_o [h, x] + b_o)
    /// c' = f * c + i * g                h' = o * tanh(c')
    /// ```
    ///
    /// Returns `(h', c')`. Fusing keeps the tape short enough to train
    /// recurrent models at an acceptable cost; the analytic backward is
    /// cross-checked against a composed-primitive build and against finite
    /// differences in the tests.
    #[allow(clippy::too_many_arguments)]
    pub fn lstm_step(
        &mut self,
        weights: &LstmStepParams,
        x: &Variable,
        h_prev: &Variable,
        c_prev: &Variable,
    ) -> Result<(Variable, Variable)> {
        let hidden = {
            let hv = h_prev.value();
            if hv.rank() != 1 {
                return Err(Error::shape(
                    "lstm_step",
                    format!("h_prev must be a vector, got {:?}", hv.shape()),
                ));
            }
            hv.shape()[0]
        };
        let input_dim = {
            let xv = x.value();
            if xv.rank() != 1 {
                return Err(Error::shape(
                    "lstm_step",
                    format!("x must be a vector, got {:?}", xv.shape()),
                ));
            }
            xv.shape()[0]
        };
        if c_prev.shape_vec() != [hidden] {
            return Err(Error::shape(
                "lstm_step",
                format!("c_prev shape {:?} does not match hidden size {hidden}", c_prev.shape_vec()),
            ));
        }
        let cat = hidden + input_dim;
        for (name, w, b) in [
            ("forget", &weights.w_f, &weights.b_f),
            ("input", &weights.w_i, &weights.b_i),
            ("candidate", &weights.w_g, &weights.b_g),
            ("output", &weights.w_o, &weights.b_o),
        ] {
            if w.shape_vec() != [hidden, cat] {
                return Err(Error::shape(
                    "lstm_step",
                    format!(
                        "{name} gate weights are {:?}, expected [{hidden}, {cat}]",
                        w.shape_vec()
                    ),
                ));
            }
            if b.shape_vec() != [hidden] {
                return Err(Error::shape(
                    "lstm_step",
                    format!("{name} gate bias is {:?}, expected [{hidden}]", b.shape_vec()),
                ));
            }
        }

        let mut hx = Vec::with_capacity(cat);
        hx.extend_from_slice(h_prev.value().data());
        hx.extend_from_slice(x.value().data());

        let gate = |w: &Variable, b: &Variable, act: fn(f64) -> f64| -> Vec<f64> {
            let wv = w.value();
            let bv = b.value();
            let wd = wv.data();
            (0..hidden)
                .map(|i| {
                    let row = &wd[i * cat..(i + 1) * cat];
                    let mut acc = bv.data()[i];
                    for j in 0..cat {
                        acc += row[j] * hx[j];
                    }
                    act(acc)
                })
                .collect()
        };
        let f = gate(&weights.w_f, &weights.b_f, sigmoid);
        let i = gate(&weights.w_i, &weights.b_i, sigmoid);
        let g = gate(&weights.w_g, &weights.b_g, f64::tanh);
        let o = gate(&weights.w_o, &weights.b_o, sigmoid);

        let cp = c_prev.value();
        let mut c_new = vec![0.0; hidden];
        let mut tanh_c = vec![0.0; hidden];
        let mut h_new = vec![0.0; hidden];
        for k in 0..hidden {
            c_new[k] = f[k] * cp.data()[k] + i[k] * g[k];
            tanh_c[k] = c_new[k].tanh();
            h_new[k] = o[k] * tanh_c[k];
        }
        drop(cp);

        let requires = weights.any_requires_grad()
            || x.requires_grad()
            || h_prev.requires_grad()
            || c_prev.requires_grad();
        let h_out = Variable::derived(Tensor::vector(h_new), requires);
        let c_out = Variable::derived(Tensor::vector(c_new), requires);
        self.push(
            Record::LstmStep(Box::new(LstmRec {
                w_f: weights.w_f.clone(),
                b_f: weights.b_f.clone(),
                w_i: weights.w_i.clone(),
                b_i: weights.b_i.clone(),
                w_g: weights.w_g.clone(),
                b_g: weights.b_g.clone(),
                w_o: weights.w_o.clone(),
                b_o: weights.b_o.clone(),
                x: x.clone(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                h_out: h_out.clone(),
                c_out: c_out.clone(),
                f,
                i,
                g,
                o,
                tanh_c,
                hx,
            })),
            &h_out,
        );
        Ok((h_out, c_out))
    }

    /// Runs the chain rule in reverse from a scalar loss, accumulating into
    /// the `grad` buffers of every variable that requires gradients.
    pub fn backward(&self, loss: &Variable) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", loss.shape_vec()),
            ));
        }
        if !loss.requires_grad() {
            return Ok(());
        }
        loss.seed_grad_one();
        for rec in self.records.iter().rev() {
            rec.backward();
        }
        Ok(())
    }
}

/// The four gate weight/bias pairs of one LSTM cell, passed to
/// [`Tape::lstm_step`].
#[derive(Debug, Clone)]
pub struct LstmStepParams {
    pub w_f: Variable,
    pub b_f: Variable,
    pub w_i: Variable,
    pub b_i: Variable,
    pub w_g: Variable,
    pub b_g: Variable,
    pub w_o: Variable,
    pub b_o: Variable,
}

impl LstmStepParams {
    fn any_requires_grad(&self) -> bool {
        self.w_f.requires_grad()
            || self.b_f.requires_grad()
            || self.w_i.requires_grad()
            || self.b_i.requires_grad()
            || self.w_g.requires_grad()
            || self.b_g.requires_grad()
            || self.w_o.requires_grad()
            || self.b_o.requires_grad()
    }
}

impl Record {
    fn backward(&self) {
        match self {
            Record::MatVec { w, x, out } => {
                let go = out.grad().data().to_vec();
                let (r, c) = {
                    let wv = w.value();
                    (wv.shape()[0], wv.shape()[1])
                };
                if w.requires_grad() {
                    let contrib: Vec<f64> = {
                        let xv = x.value();
                        let xd = xv.data();
                        let mut d = vec![0.0; r * c];
                        for i in 0..r {
                            for j in 0..c {
                                d[i * c + j] = go[i] * xd[j];
                            }
                        }
                        d
                    };
                    w.accumulate_grad(&contrib);
                }
                if x.requires_grad() {
                    let contrib: Vec<f64> = {
                        let wv = w.value();
                        let wd = wv.data();
                        let mut d = vec![0.0; c];
                        for i in 0..r {
                            for j in 0..c {
                                d[j] += wd[i * c + j] * go[i];
                            }
                        }
                        d
                    };
                    x.accumulate_grad(&contrib);
                }
            }
            Record::Add { a, b, out } => {
                let go = out.grad().data().to_vec();
                if a.requires_grad() {
                    a.accumulate_grad(&go);
                }
                if b.requires_grad() {
                    b.accumulate_grad(&go);
                }
            }
            Record::Sub { a, b, out } => {
                let go = out.grad().data().to_vec();
                if a.requires_grad() {
                    a.accumulate_grad(&go);
                }
                if b.requires_grad() {
                    let neg: Vec<f64> = go.iter().map(|&g| -g).collect();
                    b.accumulate_grad(&neg);
                }
            }
            Record::Mul { a, b, out } => {
                let go = out.grad().data().to_vec();
                if a.requires_grad() {
                    let contrib: Vec<f64> =
                        go.iter().zip(b.value().data()).map(|(&g, &y)| g * y).collect();
                    a.accumulate_grad(&contrib);
                }
                if b.requires_grad() {
                    let contrib: Vec<f64> =
                        go.iter().zip(a.value().data()).map(|(&g, &x)| g * x).collect();
                    b.accumulate_grad(&contrib);
                }
            }
            Record::Scale { a, k, out } => {
                if a.requires_grad() {
                    let contrib: Vec<f64> = out.grad().data().iter().map(|&g| g * k).collect();
                    a.accumulate_grad(&contrib);
                }
            }
            Record::PowScalar { a, e, out } => {
                if a.requires_grad() {
                    let contrib: Vec<f64> = {
                        let go = out.grad();
                        let av = a.value();
                        go.data()
                            .iter()
                            .zip(av.data())
                            .map(|(&g, &x)| g * e * x.powf(e - 1.0))
                            .collect()
                    };
                    a.accumulate_grad(&contrib);
                }
            }
            Record::Sigmoid { a, out } => {
                if a.requires_grad() {
                    let contrib: Vec<f64> = {
                        let go = out.grad();
                        let ov = out.value();
                        go.data()
                            .iter()
                            .zip(ov.data())
                            .map(|(&g, &s)| g * s * (1.0 - s))
                            .collect()
                    };
                    a.accumulate_grad(&contrib);
                }
            }
            Record::Tanh { a, out } => {
                if a.requires_grad() {
                    let contrib: Vec<f64> = {
                        let go = out.grad();
                        let ov = out.value();
                        go.data()
                            .iter()
                            .zip(ov.data())
                            .map(|(&g, &t)| g * (1.0 - t * t))
                            .collect()
                    };
                    a.accumulate_grad(&contrib);
                }
            }
            Record::Relu { a, out } => {
                if a.requires_grad() {
                    let contrib: Vec<f64> = {
                        let go = out.grad();
                        let av = a.value();
                        go.data()
                            .iter()
                            .zip(av.data())
                            .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                            .collect()
                    };
                    a.accumulate_grad(&contrib);
                }
            }
            Record::MaxOverAxis { a, argmax, out, .. } => {
                if a.requires_grad() {
                    let go = out.grad().data().to_vec();
                    for (i, &src) in argmax.iter().enumerate() {
                        a.accumulate_grad_at(src, go[i]);
                    }
                }
            }
            Record::Sum { a, out } => {
                if a.requires_grad() {
                    let g = out.grad().data()[0];
                    let contrib = vec![g; a.numel()];
                    a.accumulate_grad(&contrib);
                }
            }
            Record::Col { a, col, out } => {
                if a.requires_grad() {
                    let go = out.grad().data().to_vec();
                    let cols = a.value().shape()[1];
                    for (r, &g) in go.iter().enumerate() {
                        a.accumulate_grad_at(r * cols + col, g);
                    }
                }
            }
            Record::Concat { a, b, out } => {
                let go = out.grad().data().to_vec();
                let n = a.numel();
                if a.requires_grad() {
                    a.accumulate_grad(&go[..n]);
                }
                if b.requires_grad() {
                    b.accumulate_grad(&go[n..]);
                }
            }
            Record::Conv(rec) => rec.backward(),
            Record::RectThreshold { fm, thr, out } => {
                let go = out.grad().data().to_vec();
                let (rows, cols) = {
                    let ov = out.value();
                    (ov.shape()[0], ov.shape()[1])
                };
                // Active where the rectified output is strictly positive; the
                // kink itself passes no gradient.
                let active: Vec<bool> = out.value().data().iter().map(|&v| v > 0.0).collect();
                if fm.requires_grad() {
                    let contrib: Vec<f64> = go
                        .iter()
                        .zip(&active)
                        .map(|(&g, &on)| if on { g } else { 0.0 })
                        .collect();
                    fm.accumulate_grad(&contrib);
                }
                if thr.requires_grad() {
                    let mut contrib = vec![0.0; rows];
                    for k in 0..rows {
                        for t in 0..cols {
                            if active[k * cols + t] {
                                contrib[k] -= go[k * cols + t];
                            }
                        }
                    }
                    thr.accumulate_grad(&contrib);
                }
            }
            Record::LstmStep(rec) => rec.backward(),
        }
    }
}

impl ConvRec {
    fn backward(&self) {
        let go = self.out.grad().data().to_vec();
        let (k_count, channels, m) = {
            let kv = self.kernels.value();
            (kv.shape()[0], kv.shape()[1], kv.shape()[2])
        };
        let len = self.input.value().shape()[1];
        let t_len = self.out.value().shape()[1];
        let left = match self.padding {
            Padding::Valid => 0,
            Padding::Same => (m - 1) / 2,
        };
        if self.kernels.requires_grad() {
            let contrib: Vec<f64> = {
                let iv = self.input.value();
                let id = iv.data();
                let mut d = vec![0.0; k_count * channels * m];
                for k in 0..k_count {
                    for t in 0..t_len {
                        let g = go[k * t_len + t];
                        if g == 0.0 {
                            continue;
                        }
                        for j in 0..m {
                            let col = (t + j) as isize - left as isize;
                            if col < 0 || col >= len as isize {
                                continue;
                            }
                            let col = col as usize;
                            for r in 0..channels {
                                d[(k * channels + r) * m + j] += g * id[r * len + col];
                            }
                        }
                    }
                }
                d
            };
            self.kernels.accumulate_grad(&contrib);
        }
        if self.biases.requires_grad() {
            let mut contrib = vec![0.0; k_count];
            for k in 0..k_count {
                contrib[k] = go[k * t_len..(k + 1) * t_len].iter().sum();
            }
            self.biases.accumulate_grad(&contrib);
        }
        if self.input.requires_grad() {
            let contrib: Vec<f64> = {
                let kv = self.kernels.value();
                let kd = kv.data();
                let mut d = vec![0.0; channels * len];
                for k in 0..k_count {
                    for t in 0..t_len {
                        let g = go[k * t_len + t];
                        if g == 0.0 {
                            continue;
                        }
                        for j in 0..m {
                            let col = (t + j) as isize - left as isize;
                            if col < 0 || col >= len as isize {
                                continue;
                            }
                            let col = col as usize;
                            for r in 0..channels {
                                d[r * len + col] += g * kd[(k * channels + r) * m + j];
                            }
                        }
                    }
                }
                d
            };
            self.input.accumulate_grad(&contrib);
        }
    }
}

impl LstmRec {
    fn backward(&self) {
        let hidden = self.f.len();
        let cat = self.hx.len();
        let dh = self.h_out.grad().data().to_vec();
        let dc_out = self.c_out.grad().data().to_vec();

        let mut dc = vec![0.0; hidden];
        let mut dz_f = vec![0.0; hidden];
        let mut dz_i = vec![0.0; hidden];
        let mut dz_g = vec![0.0; hidden];
        let mut dz_o = vec![0.0; hidden];
        {
            let cp = self.c_prev.value();
            for k in 0..hidden {
                let tc = self.tanh_c[k];
                dc[k] = dc_out[k] + dh[k] * self.o[k] * (1.0 - tc * tc);
                let d_o = dh[k] * tc;
                let d_f = dc[k] * cp.data()[k];
                let d_i = dc[k] * self.g[k];
                let d_g = dc[k] * self.i[k];
                dz_o[k] = d_o * self.o[k] * (1.0 - self.o[k]);
                dz_f[k] = d_f * self.f[k] * (1.0 - self.f[k]);
                dz_i[k] = d_i * self.i[k] * (1.0 - self.i[k]);
                dz_g[k] = d_g * (1.0 - self.g[k] * self.g[k]);
            }
        }

        let mut dhx = vec![0.0; cat];
        for (w, b, dz) in [
            (&self.w_f, &self.b_f, &dz_f),
            (&self.w_i, &self.b_i, &dz_i),
            (&self.w_g, &self.b_g, &dz_g),
            (&self.w_o, &self.b_o, &dz_o),
        ] {
            {
                let wv = w.value();
                let wd = wv.data();
                for k in 0..hidden {
                    let row = &wd[k * cat..(k + 1) * cat];
                    let dzk = dz[k];
                    for j in 0..cat {
                        dhx[j] += row[j] * dzk;
                    }
                }
            }
            if w.requires_grad() {
                let mut contrib = vec![0.0; hidden * cat];
                for k in 0..hidden {
                    let dzk = dz[k];
                    for j in 0..cat {
                        contrib[k * cat + j] = dzk * self.hx[j];
                    }
                }
                w.accumulate_grad(&contrib);
            }
            if b.requires_grad() {
                b.accumulate_grad(dz);
            }
        }

        if self.h_prev.requires_grad() {
            self.h_prev.accumulate_grad(&dhx[..hidden]);
        }
        if self.x.requires_grad() {
            self.x.accumulate_grad(&dhx[hidden..]);
        }
        if self.c_prev.requires_grad() {
            let contrib: Vec<f64> = (0..hidden).map(|k| dc[k] * self.f[k]).collect();
            self.c_prev.accumulate_grad(&contrib);
        }
    }
}

/// Compares analytic gradients with central finite differences for every
/// element of `params`, re-running `f` on a fresh tape per probe. Returns the
/// maximum relative error `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(mut f: F, params: &[Variable], step: f64) -> Result<f64>
where
    F: FnMut(&mut Tape) -> Result<Variable>,
{
    if !(step > 0.0) {
        return Err(Error::arg("grad_check", format!("step must be positive, got {step}")));
    }
    zero_grads(params);
    let mut tape = Tape::new();
    let loss = f(&mut tape)?;
    if loss.numel() != 1 {
        return Err(Error::shape(
            "grad_check",
            format!("objective must be scalar, got shape {:?}", loss.shape_vec()),
        ));
    }
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad().data().to_vec()).collect();

    let eval = |f: &mut F| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape)?;
        out.item()
    };

    let mut max_rel: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        for idx in 0..p.numel() {
            let orig = p.value_at(idx);
            p.set_value_at(idx, orig + step);
            let up = eval(&mut f)?;
            p.set_value_at(idx, orig - step);
            let down = eval(&mut f)?;
            p.set_value_at(idx, orig);
            let numeric = (up - down) / (2.0 * step);
            let an = analytic[pi][idx];
            let denom = an.abs().max(numeric.abs()).max(1.0);
            max_rel = max_rel.max((an - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf1(data: Vec<f64>) -> Variable {
        Variable::leaf(Tensor::vector(data))
    }

    fn param1(data: Vec<f64>) -> Variable {
        Variable::param(Tensor::vector(data))
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = leaf1(vec![-1.0, 0.0, 2.0]);
        let y = tape.relu(&x).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_forward_at_zero() {
        let mut tape = Tape::new();
        let x = leaf1(vec![0.0]);
        let y = tape.sigmoid(&x).unwrap();
        assert_eq!(y.value().data(), &[0.5]);
    }

    #[test]
    fn matvec_identity() {
        let mut tape = Tape::new();
        let w = Variable::leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let x = leaf1(vec![3.0, 4.0]);
        let y = tape.matvec(&w, &x).unwrap();
        assert_eq!(y.value().data(), &[3.0, 4.0]);
    }

    #[test]
    fn matvec_shape_mismatch_names_shapes() {
        let mut tape = Tape::new();
        let w = Variable::leaf(Tensor::zeros(vec![2, 3]));
        let x = leaf1(vec![1.0, 2.0]);
        let err = tape.matvec(&w, &x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matvec"), "{msg}");
        assert!(msg.contains('3') && msg.contains('2'), "{msg}");
    }

    #[test]
    fn square_gradient() {
        // d/dw sum(w^2) at w = 3 is 6.
        let w = param1(vec![3.0]);
        let mut tape = Tape::new();
        let sq = tape.pow_scalar(&w, 2.0).unwrap();
        let loss = tape.sum(&sq).unwrap();
        tape.backward(&loss).unwrap();
        assert!((w.grad().data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn relu_gradient_mask() {
        let w = param1(vec![-1.0, 2.0]);
        let mut tape = Tape::new();
        let r = tape.relu(&w).unwrap();
        let loss = tape.sum(&r).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(w.grad().data(), &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let w = param1(vec![0.0]);
        let mut tape = Tape::new();
        let s = tape.sigmoid(&w).unwrap();
        tape.backward(&s).unwrap();
        assert!((w.grad().data()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fanout_accumulates_like_square() {
        // w * w and w^2 must produce identical gradients: the product sees the
        // same variable on both sides and accumulates both contributions.
        let w1 = param1(vec![1.7]);
        let mut t1 = Tape::new();
        let p = t1.mul(&w1, &w1).unwrap();
        t1.backward(&p).unwrap();

        let w2 = param1(vec![1.7]);
        let mut t2 = Tape::new();
        let q = t2.pow_scalar(&w2, 2.0).unwrap();
        t2.backward(&q).unwrap();

        assert_eq!(w1.grad().data(), w2.grad().data());
        assert!((w1.grad().data()[0] - 3.4).abs() < 1e-12);
    }

    #[test]
    fn grads_accumulate_until_zeroed() {
        let w = param1(vec![2.0]);
        for pass in 1..=2 {
            let mut tape = Tape::new();
            let sq = tape.pow_scalar(&w, 2.0).unwrap();
            tape.backward(&sq).unwrap();
            assert!((w.grad().data()[0] - 4.0 * pass as f64).abs() < 1e-12);
        }
        w.zero_grad();
        assert_eq!(w.grad().data(), &[0.0]);
        let mut tape = Tape::new();
        let sq = tape.pow_scalar(&w, 2.0).unwrap();
        tape.backward(&sq).unwrap();
        assert!((w.grad().data()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_vector_loss() {
        let w = param1(vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let y = tape.relu(&w).unwrap();
        let err = tape.backward(&y).unwrap_err();
        assert!(err.to_string().contains("scalar"), "{err}");
    }

    #[test]
    fn max_over_axis_rows_and_ties() {
        let mut tape = Tape::new();
        let a = Variable::param(Tensor::from_rows(&[vec![2.0, 2.0], vec![1.0, 5.0]]).unwrap());
        let m = tape.max_over_axis(&a, 1).unwrap();
        assert_eq!(m.value().data(), &[2.0, 5.0]);
        let loss = tape.sum(&m).unwrap();
        tape.backward(&loss).unwrap();
        // Tie in row 0 routes the gradient to the first maximum only.
        assert_eq!(a.grad().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn max_over_axis_columns() {
        let mut tape = Tape::new();
        let a = Variable::leaf(Tensor::from_rows(&[vec![2.0, 0.0], vec![1.0, 5.0]]).unwrap());
        let m = tape.max_over_axis(&a, 0).unwrap();
        assert_eq!(m.value().data(), &[2.0, 5.0]);
    }

    #[test]
    fn quadratic_grad_check_is_tight() {
        let w = param1(vec![0.3, -1.2, 2.0]);
        let max_rel = grad_check(
            |tape| {
                let sq = tape.pow_scalar(&w, 2.0)?;
                tape.sum(&sq)
            },
            &[w.clone()],
            1e-5,
        )
        .unwrap();
        assert!(max_rel < 1e-8, "relative error {max_rel}");
    }

    #[test]
    fn grad_check_rejects_bad_step() {
        let w = param1(vec![1.0]);
        let err = grad_check(|tape| tape.sum(&w), &[w.clone()], 0.0).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }

    #[test]
    fn per_primitive_finite_difference_sweep() {
        // Every primitive, random operands, analytic vs numeric gradients.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let a = param1(rand_vec(&mut rng, 4));
            let b = param1(rand_vec(&mut rng, 4));
            let w = Variable::param(Tensor::new(vec![3, 4], rand_vec(&mut rng, 12)).unwrap());
            let m2 = Variable::param(Tensor::new(vec![2, 3], rand_vec(&mut rng, 6)).unwrap());
            let thr = param1(rand_vec(&mut rng, 2));
            let params =
                vec![a.clone(), b.clone(), w.clone(), m2.clone(), thr.clone()];
            let which = trial % 10;
            let rel = grad_check(
                |tape| {
                    let y = match which {
                        0 => tape.add(&a, &b)?,
                        1 => tape.sub(&a, &b)?,
                        2 => tape.mul(&a, &b)?,
                        3 => tape.matvec(&w, &a)?,
                        4 => tape.sigmoid(&a)?,
                        5 => tape.tanh(&a)?,
                        6 => tape.scale(&a, -1.75)?,
                        7 => tape.concat(&a, &b)?,
                        8 => tape.col(&m2, 1)?,
                        9 => tape.rect_threshold(&m2, &thr)?,
                        _ => unreachable!(),
                    };
                    // Weight the outputs so gradients differ per element.
                    let mix = Variable::leaf(
                        Tensor::new(
                            y.shape_vec(),
                            (0..y.numel()).map(|i| 0.3 + 0.7 * i as f64).collect(),
                        )
                        .unwrap(),
                    );
                    let weighted = tape.mul(&y, &mix)?;
                    tape.sum(&weighted)
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(rel < 1e-6, "trial {trial} primitive {which}: rel err {rel}");
        }
    }

    #[test]
    fn relu_and_max_finite_difference() {
        // Exercised separately from the sweep: keep operands away from the
        // rectifier kink so the two-sided probe stays on one branch.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..6)
                .map(|_| {
                    let v: f64 = rng.random_range(0.05..2.0);
                    if rng.random::<bool>() {
                        v
                    } else {
                        -v
                    }
                })
                .collect();
            let m = Variable::param(Tensor::new(vec![2, 3], raw).unwrap());
            let rel = grad_check(
                |tape| {
                    let r = tape.relu(&m)?;
                    let mx = tape.max_over_axis(&r, 1)?;
                    tape.sum(&mx)
                },
                &[m.clone()],
                1e-5,
            )
            .unwrap();
            assert!(rel < 1e-6, "rel err {rel}");
        }
    }

    #[test]
    fn conv_finite_difference_both_paddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for padding in [Padding::Valid, Padding::Same] {
            let kernels = Variable::param(Tensor::new(vec![2, 4, 3], rand_vec(&mut rng, 24)).unwrap());
            let biases = param1(rand_vec(&mut rng, 2));
            let input = Variable::param(Tensor::new(vec![4, 7], rand_vec(&mut rng, 28)).unwrap());
            let params = vec![kernels.clone(), biases.clone(), input.clone()];
            let rel = grad_check(
                |tape| {
                    let fm = tape.conv(&kernels, &biases, &input, padding)?;
                    let mix = Variable::leaf(
                        Tensor::new(
                            fm.shape_vec(),
                            (0..fm.numel()).map(|i| 0.1 + 0.05 * i as f64).collect(),
                        )
                        .unwrap(),
                    );
                    let weighted = tape.mul(&fm, &mix)?;
                    tape.sum(&weighted)
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(rel < 1e-6, "{padding:?}: rel err {rel}");
        }
    }

    #[test]
    fn lstm_step_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let hidden = 3;
        let dim = 2;
        let cat = hidden + dim;
        let mk_w = |rng: &mut ChaCha8Rng| {
            Variable::param(Tensor::new(vec![hidden, cat], rand_vec(rng, hidden * cat)).unwrap())
        };
        let weights = LstmStepParams {
            w_f: mk_w(&mut rng),
            b_f: param1(rand_vec(&mut rng, hidden)),
            w_i: mk_w(&mut rng),
            b_i: param1(rand_vec(&mut rng, hidden)),
            w_g: mk_w(&mut rng),
            b_g: param1(rand_vec(&mut rng, hidden)),
            w_o: mk_w(&mut rng),
            b_o: param1(rand_vec(&mut rng, hidden)),
        };
        let x = param1(rand_vec(&mut rng, dim));
        let h0 = param1(rand_vec(&mut rng, hidden));
        let c0 = param1(rand_vec(&mut rng, hidden));
        let params = vec![
            weights.w_f.clone(),
            weights.b_f.clone(),
            weights.w_i.clone(),
            weights.b_i.clone(),
            weights.w_g.clone(),
            weights.b_g.clone(),
            weights.w_o.clone(),
            weights.b_o.clone(),
            x.clone(),
            h0.clone(),
            c0.clone(),
        ];
        let rel = grad_check(
            |tape| {
                let (h1, c1) = tape.lstm_step(&weights, &x, &h0, &c0)?;
                // Route gradient through both outputs.
                let (h2, _c2) = tape.lstm_step(&weights, &x, &h1, &c1)?;
                let mix = leaf1((0..hidden).map(|i| 1.0 + i as f64).collect());
                let weighted = tape.mul(&h2, &mix)?;
                tape.sum(&weighted)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(rel < 1e-6, "rel err {rel}");
    }

    #[test]
    fn lstm_step_is_one_record() {
        let hidden = 2;
        let cat = 3;
        let zeros_w = || Variable::param(Tensor::zeros(vec![hidden, cat]));
        let zeros_b = || Variable::param(Tensor::zeros(vec![hidden]));
        let weights = LstmStepParams {
            w_f: zeros_w(),
            b_f: zeros_b(),
            w_i: zeros_w(),
            b_i: zeros_b(),
            w_g: zeros_w(),
            b_g: zeros_b(),
            w_o: zeros_w(),
            b_o: zeros_b(),
        };
        let x = leaf1(vec![0.0]);
        let h0 = leaf1(vec![0.0, 0.0]);
        let c0 = leaf1(vec![0.0, 0.0]);
        let mut tape = Tape::new();
        tape.lstm_step(&weights, &x, &h0, &c0).unwrap();
        assert_eq!(tape.num_records(), 1);
    }

    #[test]
    fn constant_only_graphs_record_nothing() {
        let mut tape = Tape::new();
        let a = leaf1(vec![1.0, 2.0]);
        let b = leaf1(vec![3.0, 4.0]);
        let s = tape.add(&a, &b).unwrap();
        let _ = tape.sum(&s).unwrap();
        assert_eq!(tape.num_records(), 0);
    }
}
