use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{LstmStepParams, Padding, Tape, Variable};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Whether a forward pass is for training (dropout active, masks drawn from
/// the supplied generator) or evaluation (dropout is the identity).
pub enum Mode<'r> {
    Eval,
    Train { dropout_rng: &'r mut ChaCha8Rng },
}

fn uniform_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>, bound: f64) -> Tensor {
    let numel = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape/data constructed together")
}

/// Bank of `filters` motif detectors of width `motif_len` over the 4 one-hot
/// channels. Weights start uniform in ±1/sqrt(4 * motif_len); biases at zero.
pub struct ConvLayer {
    pub kernels: Variable,
    pub biases: Variable,
    pub filters: usize,
    pub motif_len: usize,
}

impl ConvLayer {
    pub fn new<R: Rng>(filters: usize, motif_len: usize, rng: &mut R) -> Result<Self> {
        if filters == 0 || motif_len == 0 {
            return Err(Error::arg(
                "ConvLayer::new",
                format!("filters ({filters}) and motif_len ({motif_len}) must be positive"),
            ));
        }
        let bound = 1.0 / ((4 * motif_len) as f64).sqrt();
        Ok(ConvLayer {
            kernels: Variable::param(uniform_tensor(rng, vec![filters, 4, motif_len], bound)),
            biases: Variable::param(Tensor::zeros(vec![filters])),
            filters,
            motif_len,
        })
    }

    /// Builds a layer from explicit weights (tests, checkpoint restore).
    pub fn from_tensors(kernels: Tensor, biases: Tensor) -> Result<Self> {
        if kernels.rank() != 3 || kernels.shape()[1] != 4 {
            return Err(Error::shape(
                "ConvLayer::from_tensors",
                format!("kernels must be [K, 4, m], got {:?}", kernels.shape()),
            ));
        }
        let filters = kernels.shape()[0];
        let motif_len = kernels.shape()[2];
        if biases.shape() != [filters] {
            return Err(Error::shape(
                "ConvLayer::from_tensors",
                format!("expected [{filters}] biases, got {:?}", biases.shape()),
            ));
        }
        Ok(ConvLayer {
            kernels: Variable::param(kernels),
            biases: Variable::param(biases),
            filters,
            motif_len,
        })
    }

    pub fn forward(&self, tape: &mut Tape, input: &Variable, padding: Padding) -> Result<Variable> {
        tape.conv(&self.kernels, &self.biases, input, padding)
    }
}

/// Rectification against trainable per-filter thresholds.
pub fn rect(tape: &mut Tape, feature_map: &Variable, thresholds: &Variable) -> Result<Variable> {
    tape.rect_threshold(feature_map, thresholds)
}

/// Maximum response of each filter across all window positions: `[K, T] -> [K]`.
pub fn global_max_pool(tape: &mut Tape, feature_map: &Variable) -> Result<Variable> {
    tape.max_over_axis(feature_map, 1)
}

/// Fully connected layer, optionally rectified.
pub struct DenseLayer {
    pub weights: Variable,
    pub bias: Variable,
    pub relu: bool,
}

impl DenseLayer {
    pub fn new<R: Rng>(input: usize, output: usize, relu: bool, rng: &mut R) -> Result<Self> {
        if input == 0 || output == 0 {
            return Err(Error::arg(
                "DenseLayer::new",
                format!("input ({input}) and output ({output}) sizes must be positive"),
            ));
        }
        let bound = 1.0 / (input as f64).sqrt();
        Ok(DenseLayer {
            weights: Variable::param(uniform_tensor(rng, vec![output, input], bound)),
            bias: Variable::param(Tensor::zeros(vec![output])),
            relu,
        })
    }

    pub fn from_tensors(weights: Tensor, bias: Tensor, relu: bool) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::shape(
                "DenseLayer::from_tensors",
                format!("weights must be rank 2, got {:?}", weights.shape()),
            ));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape(
                "DenseLayer::from_tensors",
                format!(
                    "bias {:?} does not match {} output rows",
                    bias.shape(),
                    weights.shape()[0]
                ),
            ));
        }
        Ok(DenseLayer {
            weights: Variable::param(weights),
            bias: Variable::param(bias),
            relu,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: &Variable) -> Result<Variable> {
        let z = tape.matvec(&self.weights, x)?;
        let z = tape.add(&z, &self.bias)?;
        if self.relu {
            tape.relu(&z)
        } else {
            Ok(z)
        }
    }
}

/// Inverted dropout: during training each element is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`, so evaluation is the exact
/// identity. A rate of zero draws nothing and is the identity in both modes.
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg(
                "Dropout::new",
                format!("rate must be in [0, 1), got {rate}"),
            ));
        }
        Ok(Dropout { rate })
    }

    pub fn apply(&self, tape: &mut Tape, x: &Variable, mode: &mut Mode) -> Result<Variable> {
        match mode {
            Mode::Train { dropout_rng } if self.rate > 0.0 => {
                let keep = 1.0 - self.rate;
                let scale = 1.0 / keep;
                let mask: Vec<f64> = (0..x.numel())
                    .map(|_| if dropout_rng.random::<f64>() < keep { scale } else { 0.0 })
                    .collect();
                let mask = Variable::leaf(Tensor::new(x.shape_vec(), mask)?);
                tape.mul(x, &mask)
            }
            _ => Ok(x.clone()),
        }
    }
}

/// Parses a stacked-LSTM architecture string: hidden sizes separated by
/// colons, e.g. `"30"` or `"10:20"`.
pub fn parse_lstm_arch(arch: &str) -> Result<Vec<usize>> {
    if arch.trim().is_empty() {
        return Err(Error::arg("parse_lstm_arch", "architecture string is empty"));
    }
    arch.split(':')
        .map(|part| {
            let size: usize = part.trim().parse().map_err(|_| {
                Error::arg(
                    "parse_lstm_arch",
                    format!("cannot parse layer size {part:?} in {arch:?}"),
                )
            })?;
            if size == 0 {
                return Err(Error::arg(
                    "parse_lstm_arch",
                    format!("layer sizes must be positive in {arch:?}"),
                ));
            }
            Ok(size)
        })
        .collect()
}

/// One LSTM cell with its gate parameters. Weights start uniform in
/// ±1/sqrt(hidden + input); the forget-gate bias starts at 1 so early
/// training retains cell state, the other biases at zero.
pub struct LstmLayer {
    pub params: LstmStepParams,
    pub hidden: usize,
    pub input_size: usize,
}

impl LstmLayer {
    pub fn new<R: Rng>(input_size: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if input_size == 0 || hidden == 0 {
            return Err(Error::arg(
                "LstmLayer::new",
                format!("input_size ({input_size}) and hidden ({hidden}) must be positive"),
            ));
        }
        let cat = hidden + input_size;
        let bound = 1.0 / (cat as f64).sqrt();
        // Gate draw order is fixed (forget, input, candidate, output) so a
        // given seed always produces the same parameters.
        let w_f = Variable::param(uniform_tensor(rng, vec![hidden, cat], bound));
        let w_i = Variable::param(uniform_tensor(rng, vec![hidden, cat], bound));
        let w_g = Variable::param(uniform_tensor(rng, vec![hidden, cat], bound));
        let w_o = Variable::param(uniform_tensor(rng, vec![hidden, cat], bound));
        let mut forget_bias = Tensor::zeros(vec![hidden]);
        forget_bias.fill(1.0);
        Ok(LstmLayer {
            params: LstmStepParams {
                w_f,
                b_f: Variable::param(forget_bias),
                w_i,
                b_i: Variable::param(Tensor::zeros(vec![hidden])),
                w_g,
                b_g: Variable::param(Tensor::zeros(vec![hidden])),
                w_o,
                b_o: Variable::param(Tensor::zeros(vec![hidden])),
            },
            hidden,
            input_size,
        })
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        x: &Variable,
        h: &Variable,
        c: &Variable,
    ) -> Result<(Variable, Variable)> {
        tape.lstm_step(&self.params, x, h, c)
    }
}

/// Stacked LSTM layers sharing one parameter set across all time steps.
/// Layer l consumes the hidden sequence of layer l-1.
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub fn new<R: Rng>(input_size: usize, hidden_sizes: &[usize], rng: &mut R) -> Result<Self> {
        if hidden_sizes.is_empty() {
            return Err(Error::arg("LstmStack::new", "at least one layer is required"));
        }
        let mut layers = Vec::with_capacity(hidden_sizes.len());
        let mut dim = input_size;
        for &h in hidden_sizes {
            layers.push(LstmLayer::new(dim, h, rng)?);
            dim = h;
        }
        Ok(LstmStack { layers })
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.hidden).unwrap_or(0)
    }

    /// Runs the stack over a sequence of input vectors (time steps) starting
    /// from zero hidden and cell states, returning the top layer's final
    /// hidden state.
    pub fn forward(&self, tape: &mut Tape, inputs: &[Variable]) -> Result<Variable> {
        if inputs.is_empty() {
            return Err(Error::EmptyInput { op: "LstmStack::forward" });
        }
        let mut states: Vec<(Variable, Variable)> = self
            .layers
            .iter()
            .map(|l| {
                (
                    Variable::leaf(Tensor::zeros(vec![l.hidden])),
                    Variable::leaf(Tensor::zeros(vec![l.hidden])),
                )
            })
            .collect();
        for x in inputs {
            let mut carried = x.clone();
            for (layer, state) in self.layers.iter().zip(states.iter_mut()) {
                let (h, c) = layer.step(tape, &carried, &state.0, &state.1)?;
                carried = h.clone();
                *state = (h, c);
            }
        }
        Ok(states.last().expect("stack is nonempty").0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape};
    use crate::encoding::{one_hot, DnaSequence};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn seq_leaf(s: &str) -> Variable {
        Variable::leaf(one_hot(&DnaSequence::new(s).unwrap()))
    }

    /// A filter that matches the literal subsequence `pattern` one-hot-style.
    fn motif_kernel(pattern: &str) -> Tensor {
        let m = pattern.len();
        let mut t = Tensor::zeros(vec![1, 4, m]);
        for (j, ch) in pattern.chars().enumerate() {
            let r = "ACGT".find(ch).unwrap();
            t.set3(0, r, j, 1.0);
        }
        t
    }

    #[test]
    fn motif_filter_scores_matching_window() {
        let layer =
            ConvLayer::from_tensors(motif_kernel("AC"), Tensor::vector(vec![0.0])).unwrap();
        let mut tape = Tape::new();
        let fm = layer.forward(&mut tape, &seq_leaf("ACA"), Padding::Valid).unwrap();
        assert_eq!(fm.value().shape(), &[1, 2]);
        assert_eq!(fm.value().data(), &[2.0, 0.0]);
    }

    #[test]
    fn zero_kernels_emit_bias_everywhere() {
        let layer =
            ConvLayer::from_tensors(Tensor::zeros(vec![1, 4, 2]), Tensor::vector(vec![0.7]))
                .unwrap();
        let mut tape = Tape::new();
        let fm = layer.forward(&mut tape, &seq_leaf("ACGTA"), Padding::Valid).unwrap();
        assert_eq!(fm.value().shape(), &[1, 4]);
        assert!(fm.value().data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn valid_feature_map_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = ConvLayer::new(5, 11, &mut rng).unwrap();
        let probe: String = (0..36).map(|i| "ACGT".chars().nth(i % 4).unwrap()).collect();
        let mut tape = Tape::new();
        let fm = layer.forward(&mut tape, &seq_leaf(&probe), Padding::Valid).unwrap();
        assert_eq!(fm.value().shape(), &[5, 26]);
    }

    #[test]
    fn same_padding_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = ConvLayer::new(3, 11, &mut rng).unwrap();
        let probe: String = (0..36).map(|i| "ACGT".chars().nth(i % 4).unwrap()).collect();
        let mut tape = Tape::new();
        let fm = layer.forward(&mut tape, &seq_leaf(&probe), Padding::Same).unwrap();
        assert_eq!(fm.value().shape(), &[3, 36]);
    }

    #[test]
    fn conv_rejects_short_probe_with_valid_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = ConvLayer::new(2, 11, &mut rng).unwrap();
        let mut tape = Tape::new();
        let err = layer.forward(&mut tape, &seq_leaf("ACGTACGT"), Padding::Valid).unwrap_err();
        assert!(err.to_string().contains("shorter"), "{err}");
    }

    #[test]
    fn conv_shape_property_random_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let m = rng.random_range(1..=12usize);
            let extra = rng.random_range(0..=30usize);
            let l = m + extra;
            let k = rng.random_range(1..=6usize);
            let layer = ConvLayer::new(k, m, &mut rng).unwrap();
            let probe: String = (0..l).map(|i| "ACGT".chars().nth(i % 4).unwrap()).collect();
            let mut tape = Tape::new();
            let fm = layer.forward(&mut tape, &seq_leaf(&probe), Padding::Valid).unwrap();
            assert_eq!(fm.value().shape(), &[k, l - m + 1]);
            let fm_same = layer.forward(&mut tape, &seq_leaf(&probe), Padding::Same).unwrap();
            assert_eq!(fm_same.value().shape(), &[k, l]);
        }
    }

    #[test]
    fn rect_subtracts_threshold_then_clamps() {
        let mut tape = Tape::new();
        let fm = Variable::param(Tensor::from_rows(&[vec![2.0, 0.0]]).unwrap());

        let thr0 = Variable::param(Tensor::vector(vec![0.0]));
        let out = rect(&mut tape, &fm, &thr0).unwrap();
        assert_eq!(out.value().data(), &[2.0, 0.0]);

        let thr1 = Variable::param(Tensor::vector(vec![1.0]));
        let out = rect(&mut tape, &fm, &thr1).unwrap();
        assert_eq!(out.value().data(), &[1.0, 0.0]);

        let neg = Variable::param(Tensor::from_rows(&[vec![-3.0]]).unwrap());
        let thr = Variable::param(Tensor::vector(vec![-5.0]));
        let out = rect(&mut tape, &neg, &thr).unwrap();
        assert_eq!(out.value().data(), &[2.0]);
    }

    #[test]
    fn global_max_pool_takes_row_maxima() {
        let mut tape = Tape::new();
        let fm = Variable::leaf(Tensor::from_rows(&[vec![2.0, 0.0], vec![1.0, 5.0]]).unwrap());
        let pooled = global_max_pool(&mut tape, &fm).unwrap();
        assert_eq!(pooled.value().data(), &[2.0, 5.0]);

        let single = Variable::leaf(Tensor::from_rows(&[vec![3.5]]).unwrap());
        let pooled = global_max_pool(&mut tape, &single).unwrap();
        assert_eq!(pooled.value().data(), &[3.5]);
    }

    #[test]
    fn dense_identity_and_affine() {
        let mut tape = Tape::new();
        let id = DenseLayer::from_tensors(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            Tensor::vector(vec![0.0, 0.0]),
            false,
        )
        .unwrap();
        let x = Variable::leaf(Tensor::vector(vec![0.3, -2.0]));
        assert_eq!(id.forward(&mut tape, &x).unwrap().value().data(), &[0.3, -2.0]);

        let clamped = DenseLayer::from_tensors(
            Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            Tensor::vector(vec![-1.0]),
            true,
        )
        .unwrap();
        let x = Variable::leaf(Tensor::vector(vec![0.3, 0.2]));
        assert_eq!(clamped.forward(&mut tape, &x).unwrap().value().data(), &[0.0]);

        let affine = DenseLayer::from_tensors(
            Tensor::from_rows(&[vec![2.0]]).unwrap(),
            Tensor::vector(vec![1.0]),
            false,
        )
        .unwrap();
        let x = Variable::leaf(Tensor::vector(vec![3.0]));
        assert_eq!(affine.forward(&mut tape, &x).unwrap().value().data(), &[7.0]);
    }

    #[test]
    fn lstm_zero_weights_zero_input() {
        let mut layer = LstmLayer::new(1, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        zero_all(&mut layer);
        let mut tape = Tape::new();
        let x = Variable::leaf(Tensor::vector(vec![0.0]));
        let h = Variable::leaf(Tensor::zeros(vec![2]));
        let c = Variable::leaf(Tensor::zeros(vec![2]));
        let (h1, c1) = layer.step(&mut tape, &x, &h, &c).unwrap();
        assert_eq!(h1.value().data(), &[0.0, 0.0]);
        assert_eq!(c1.value().data(), &[0.0, 0.0]);
    }

    fn zero_all(layer: &mut LstmLayer) {
        let cat = layer.hidden + layer.input_size;
        for w in [&layer.params.w_f, &layer.params.w_i, &layer.params.w_g, &layer.params.w_o] {
            w.set_value(Tensor::zeros(vec![layer.hidden, cat])).unwrap();
        }
        for b in [&layer.params.b_f, &layer.params.b_i, &layer.params.b_g, &layer.params.b_o] {
            b.set_value(Tensor::zeros(vec![layer.hidden])).unwrap();
        }
    }

    #[test]
    fn lstm_half_gates_leak_half_cell() {
        // All-zero parameters: every sigmoid gate is 1/2 and the candidate is
        // 0, so c' = c/2 and h' = tanh(c/2)/2.
        let mut layer = LstmLayer::new(1, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        zero_all(&mut layer);
        let mut tape = Tape::new();
        let x = Variable::leaf(Tensor::vector(vec![0.0]));
        let h = Variable::leaf(Tensor::zeros(vec![1]));
        let c = Variable::leaf(Tensor::vector(vec![1.0]));
        let (h1, c1) = layer.step(&mut tape, &x, &h, &c).unwrap();
        assert!((c1.value().data()[0] - 0.5).abs() < 1e-15);
        assert!((h1.value().data()[0] - 0.23105857863000487).abs() < 1e-15);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        let mut layer = LstmLayer::new(1, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        zero_all(&mut layer);
        layer.params.b_f.set_value(Tensor::vector(vec![10.0])).unwrap();
        let mut tape = Tape::new();
        let x = Variable::leaf(Tensor::vector(vec![0.0]));
        let h = Variable::leaf(Tensor::zeros(vec![1]));
        let c = Variable::leaf(Tensor::vector(vec![1.0]));
        let (_h1, c1) = layer.step(&mut tape, &x, &h, &c).unwrap();
        assert!((c1.value().data()[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fused_step_matches_composed_primitives() {
        // The fused record must agree with the same update built from
        // concat/matvec/add/sigmoid/tanh/mul, in values and in gradients.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let hidden = 4;
        let dim = 3;
        let layer = LstmLayer::new(dim, hidden, &mut rng).unwrap();
        let xv: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cv: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();

        let run_fused = || -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
            let x = Variable::leaf(Tensor::vector(xv.clone()));
            let h = Variable::leaf(Tensor::vector(hv.clone()));
            let c = Variable::leaf(Tensor::vector(cv.clone()));
            let mut tape = Tape::new();
            let (h1, c1) = layer.step(&mut tape, &x, &h, &c).unwrap();
            let mix = Variable::leaf(Tensor::vector(
                (0..hidden).map(|i| 0.5 + i as f64).collect(),
            ));
            let hw = tape.mul(&h1, &mix).unwrap();
            let cw = tape.mul(&c1, &mix).unwrap();
            let hs = tape.sum(&hw).unwrap();
            let cs = tape.sum(&cw).unwrap();
            let loss = tape.add(&hs, &cs).unwrap();
            let params = gate_params(&layer);
            crate::autodiff::zero_grads(&params);
            tape.backward(&loss).unwrap();
            let h_out = h1.value().data().to_vec();
            let c_out = c1.value().data().to_vec();
            let grads = params.iter().map(|p| p.grad().data().to_vec()).collect();
            (h_out, c_out, grads)
        };

        let run_composed = || -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
            let x = Variable::leaf(Tensor::vector(xv.clone()));
            let h = Variable::leaf(Tensor::vector(hv.clone()));
            let c = Variable::leaf(Tensor::vector(cv.clone()));
            let mut tape = Tape::new();
            let hx = tape.concat(&h, &x).unwrap();
            let p = &layer.params;
            let mut gate = |w: &Variable, b: &Variable, sig: bool| {
                let z = tape.matvec(w, &hx).unwrap();
                let z = tape.add(&z, b).unwrap();
                if sig {
                    tape.sigmoid(&z).unwrap()
                } else {
                    tape.tanh(&z).unwrap()
                }
            };
            let f = gate(&p.w_f, &p.b_f, true);
            let i = gate(&p.w_i, &p.b_i, true);
            let g = gate(&p.w_g, &p.b_g, false);
            let o = gate(&p.w_o, &p.b_o, true);
            let fc = tape.mul(&f, &c).unwrap();
            let ig = tape.mul(&i, &g).unwrap();
            let c1 = tape.add(&fc, &ig).unwrap();
            let tc = tape.tanh(&c1).unwrap();
            let h1 = tape.mul(&o, &tc).unwrap();
            let mix = Variable::leaf(Tensor::vector(
                (0..hidden).map(|i| 0.5 + i as f64).collect(),
            ));
            let hw = tape.mul(&h1, &mix).unwrap();
            let cw = tape.mul(&c1, &mix).unwrap();
            let hs = tape.sum(&hw).unwrap();
            let cs = tape.sum(&cw).unwrap();
            let loss = tape.add(&hs, &cs).unwrap();
            let params = gate_params(&layer);
            crate::autodiff::zero_grads(&params);
            tape.backward(&loss).unwrap();
            let h_out = h1.value().data().to_vec();
            let c_out = c1.value().data().to_vec();
            let grads = params.iter().map(|p| p.grad().data().to_vec()).collect();
            (h_out, c_out, grads)
        };

        let (h_fused, c_fused, g_fused) = run_fused();
        let (h_comp, c_comp, g_comp) = run_composed();
        for (a, b) in h_fused.iter().zip(&h_comp) {
            assert!((a - b).abs() < 1e-12, "h: {a} vs {b}");
        }
        for (a, b) in c_fused.iter().zip(&c_comp) {
            assert!((a - b).abs() < 1e-12, "c: {a} vs {b}");
        }
        for (ga, gb) in g_fused.iter().zip(&g_comp) {
            for (a, b) in ga.iter().zip(gb) {
                assert!((a - b).abs() < 1e-10, "grad: {a} vs {b}");
            }
        }
    }

    fn gate_params(layer: &LstmLayer) -> Vec<Variable> {
        let p = &layer.params;
        vec![
            p.w_f.clone(),
            p.b_f.clone(),
            p.w_i.clone(),
            p.b_i.clone(),
            p.w_g.clone(),
            p.b_g.clone(),
            p.w_o.clone(),
            p.b_o.clone(),
        ]
    }

    #[test]
    fn stack_output_size_and_single_step_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stack = LstmStack::new(5, &[10, 20], &mut rng).unwrap();
        assert_eq!(stack.output_size(), 20);
        let inputs: Vec<Variable> = (0..26)
            .map(|t| {
                Variable::leaf(Tensor::vector(
                    (0..5).map(|d| ((t * 5 + d) as f64 * 0.07).sin()).collect(),
                ))
            })
            .collect();
        let mut tape = Tape::new();
        let out = stack.forward(&mut tape, &inputs).unwrap();
        assert_eq!(out.value().shape(), &[20]);

        // A one-step sequence equals a manual single step from zero state.
        let single = LstmStack::new(3, &[4], &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let x = Variable::leaf(Tensor::vector(vec![0.2, -0.4, 0.9]));
        let mut t1 = Tape::new();
        let via_forward = single.forward(&mut t1, &[x.clone()]).unwrap();
        let mut t2 = Tape::new();
        let h0 = Variable::leaf(Tensor::zeros(vec![4]));
        let c0 = Variable::leaf(Tensor::zeros(vec![4]));
        let (via_step, _) = single.layers[0].step(&mut t2, &x, &h0, &c0).unwrap();
        assert_eq!(via_forward.value().data(), via_step.value().data());
    }

    #[test]
    fn stack_rejects_empty_sequence() {
        let stack = LstmStack::new(3, &[4], &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let mut tape = Tape::new();
        assert!(stack.forward(&mut tape, &[]).is_err());
    }

    #[test]
    fn hidden_state_is_strictly_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let stack = LstmStack::new(4, &[6], &mut rng).unwrap();
            let inputs: Vec<Variable> = (0..15)
                .map(|_| {
                    Variable::leaf(Tensor::vector(
                        (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    ))
                })
                .collect();
            let mut tape = Tape::new();
            let h = stack.forward(&mut tape, &inputs).unwrap();
            assert!(h.value().data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn stack_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let stack = LstmStack::new(2, &[3, 2], &mut rng).unwrap();
        let inputs: Vec<Variable> = (0..4)
            .map(|_| {
                Variable::leaf(Tensor::vector(
                    (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                ))
            })
            .collect();
        let params: Vec<Variable> = stack.layers.iter().flat_map(gate_params).collect();
        let rel = grad_check(
            |tape| {
                let h = stack.forward(tape, &inputs)?;
                tape.sum(&h)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(rel < 1e-6, "rel err {rel}");
    }

    #[test]
    fn parse_arch_strings() {
        assert_eq!(parse_lstm_arch("30").unwrap(), vec![30]);
        assert_eq!(parse_lstm_arch("10:20").unwrap(), vec![10, 20]);
        assert_eq!(parse_lstm_arch("30:20").unwrap(), vec![30, 20]);
        assert!(parse_lstm_arch("").is_err());
        assert!(parse_lstm_arch("10:x").is_err());
        assert!(parse_lstm_arch("0").is_err());
    }

    #[test]
    fn dropout_zero_rate_and_eval_are_identity() {
        let x = Variable::leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let mut tape = Tape::new();
        let d0 = Dropout::new(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut train = Mode::Train { dropout_rng: &mut rng };
        let y = d0.apply(&mut tape, &x, &mut train).unwrap();
        assert!(Variable::same_storage(&x, &y));

        let d5 = Dropout::new(0.5).unwrap();
        let y = d5.apply(&mut tape, &x, &mut Mode::Eval).unwrap();
        assert!(Variable::same_storage(&x, &y));
    }

    #[test]
    fn dropout_mask_mean_approaches_identity() {
        let d = Dropout::new(0.4).unwrap();
        let x = Variable::leaf(Tensor::vector(vec![2.0; 8]));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let trials = 4000;
        let mut sums = vec![0.0; 8];
        for _ in 0..trials {
            let mut tape = Tape::new();
            let mut mode = Mode::Train { dropout_rng: &mut rng };
            let y = d.apply(&mut tape, &x, &mut mode).unwrap();
            for (s, v) in sums.iter_mut().zip(y.value().data()) {
                *s += v;
            }
        }
        for s in sums {
            let mean = s / trials as f64;
            assert!((mean - 2.0).abs() < 0.15, "mean {mean}");
        }
    }

    #[test]
    fn dropout_rejects_rate_one() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }
}
