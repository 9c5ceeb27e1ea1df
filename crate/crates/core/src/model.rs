use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Padding, Tape, Variable};
use crate::encoding::{one_hot, DnaSequence, BASE_ORDER};
use crate::error::{Error, Result};
use crate::layers::{
    global_max_pool, parse_lstm_arch, rect, ConvLayer, DenseLayer, Dropout, LstmStack, Mode,
};
use crate::seeding::{stream_rng, STREAM_MODEL_INIT};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// The two model families: a purely convolutional baseline (same-padded
/// convolution, thresholded rectification, global max pooling) and the
/// convolutional-recurrent variant (valid convolution, ReLU, stacked LSTM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "deepbind")]
    DeepBind,
    #[serde(rename = "deeperbind")]
    DeeperBind,
}

impl ModelKind {
    pub fn padding(self) -> Padding {
        match self {
            ModelKind::DeepBind => Padding::Same,
            ModelKind::DeeperBind => Padding::Valid,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::DeepBind => "deepbind",
            ModelKind::DeeperBind => "deeperbind",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deepbind" => Ok(ModelKind::DeepBind),
            "deeperbind" => Ok(ModelKind::DeeperBind),
            other => Err(Error::arg(
                "ModelKind::from_str",
                format!("unknown model kind {other:?} (expected deepbind or deeperbind)"),
            )),
        }
    }
}

/// Architecture description: everything needed to build a model except the
/// weights themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub filters: usize,
    pub motif_len: usize,
    /// Stacked LSTM hidden sizes as a colon-separated string, e.g. "30:20".
    /// Required for DeeperBind, rejected for the baseline.
    pub lstm_arch: Option<String>,
    /// Hidden layer width of the readout; `None` is a direct linear readout.
    pub fc_hidden: Option<usize>,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn deepbind() -> Self {
        ModelSpec {
            kind: ModelKind::DeepBind,
            filters: 5,
            motif_len: 11,
            lstm_arch: None,
            fc_hidden: Some(32),
            dropout: 0.0,
        }
    }

    pub fn deeperbind(arch: &str) -> Self {
        ModelSpec {
            kind: ModelKind::DeeperBind,
            filters: 5,
            motif_len: 11,
            lstm_arch: Some(arch.to_string()),
            fc_hidden: Some(32),
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.motif_len == 0 {
            return Err(Error::arg(
                "ModelSpec::validate",
                format!(
                    "filters ({}) and motif_len ({}) must be positive",
                    self.filters, self.motif_len
                ),
            ));
        }
        match self.kind {
            ModelKind::DeepBind => {
                if self.lstm_arch.is_some() {
                    return Err(Error::arg(
                        "ModelSpec::validate",
                        "lstm_arch only applies to the deeperbind kind",
                    ));
                }
            }
            ModelKind::DeeperBind => {
                let arch = self.lstm_arch.as_deref().ok_or_else(|| {
                    Error::arg("ModelSpec::validate", "deeperbind requires an lstm_arch")
                })?;
                parse_lstm_arch(arch)?;
            }
        }
        if let Some(h) = self.fc_hidden {
            if h == 0 {
                return Err(Error::arg("ModelSpec::validate", "fc_hidden must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::arg(
                "ModelSpec::validate",
                format!("dropout must be in [0, 1), got {}", self.dropout),
            ));
        }
        Ok(())
    }
}

struct DeepBindBody {
    conv: ConvLayer,
    thresholds: Variable,
    hidden: Option<DenseLayer>,
    output: DenseLayer,
    dropout: Dropout,
}

struct DeeperBindBody {
    conv: ConvLayer,
    lstm: LstmStack,
    hidden: Option<DenseLayer>,
    output: DenseLayer,
    dropout: Dropout,
}

enum Body {
    DeepBind(DeepBindBody),
    DeeperBind(DeeperBindBody),
}

/// A built model: spec plus parameters. Predictions are deterministic;
/// dropout only acts when a forward pass runs in training mode.
pub struct Model {
    spec: ModelSpec,
    body: Body,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("param_count", &self.param_count())
            .finish()
    }
}

impl Model {
    /// Builds a model with freshly initialized parameters. All draws come
    /// from the model-init stream of `seed`, in declaration order (convolution
    /// kernels, then LSTM gates layer by layer, then readout weights), so a
    /// seed fully determines the starting point.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut rng = stream_rng(seed, STREAM_MODEL_INIT);
        let dropout = Dropout::new(spec.dropout)?;
        let body = match spec.kind {
            ModelKind::DeepBind => {
                let conv = ConvLayer::new(spec.filters, spec.motif_len, &mut rng)?;
                let thresholds = Variable::param(Tensor::zeros(vec![spec.filters]));
                let (hidden, output) =
                    readout(spec.filters, spec.fc_hidden, &mut rng)?;
                Body::DeepBind(DeepBindBody { conv, thresholds, hidden, output, dropout })
            }
            ModelKind::DeeperBind => {
                let arch = parse_lstm_arch(spec.lstm_arch.as_deref().expect("validated"))?;
                let conv = ConvLayer::new(spec.filters, spec.motif_len, &mut rng)?;
                let lstm = LstmStack::new(spec.filters, &arch, &mut rng)?;
                let (hidden, output) =
                    readout(lstm.output_size(), spec.fc_hidden, &mut rng)?;
                Body::DeeperBind(DeeperBindBody { conv, lstm, hidden, output, dropout })
            }
        };
        Ok(Model { spec: spec.clone(), body })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Shortest probe the model accepts. The recurrent variant needs at least
    /// one fully covered convolution window.
    pub fn min_probe_len(&self) -> usize {
        match self.spec.kind {
            ModelKind::DeepBind => 1,
            ModelKind::DeeperBind => self.spec.motif_len,
        }
    }

    /// Scalar prediction for a one-hot probe; `input` must be `[4, L]`.
    pub fn forward(&self, tape: &mut Tape, input: &Variable, mode: &mut Mode) -> Result<Variable> {
        match &self.body {
            Body::DeepBind(b) => {
                let fm = b.conv.forward(tape, input, Padding::Same)?;
                let rectified = rect(tape, &fm, &b.thresholds)?;
                let pooled = global_max_pool(tape, &rectified)?;
                let features = b.dropout.apply(tape, &pooled, mode)?;
                let features = match &b.hidden {
                    Some(hid) => hid.forward(tape, &features)?,
                    None => features,
                };
                b.output.forward(tape, &features)
            }
            Body::DeeperBind(b) => {
                let fm = b.conv.forward(tape, input, Padding::Valid)?;
                let activated = tape.relu(&fm)?;
                let steps = activated.value().shape()[1];
                let cols: Vec<Variable> = (0..steps)
                    .map(|t| tape.col(&activated, t))
                    .collect::<Result<_>>()?;
                let summary = b.lstm.forward(tape, &cols)?;
                let features = b.dropout.apply(tape, &summary, mode)?;
                let features = match &b.hidden {
                    Some(hid) => hid.forward(tape, &features)?,
                    None => features,
                };
                b.output.forward(tape, &features)
            }
        }
    }

    /// Deterministic evaluation-mode prediction for one probe.
    pub fn predict(&self, seq: &DnaSequence) -> Result<f64> {
        self.predict_tensor(&one_hot(seq))
    }

    /// Evaluation-mode prediction on an already-encoded `[4, L]` input.
    pub fn predict_tensor(&self, x: &Tensor) -> Result<f64> {
        let input = Variable::leaf(x.clone());
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &input, &mut Mode::Eval)?;
        out.item()
    }

    pub fn predict_batch(&self, seqs: &[DnaSequence]) -> Result<Vec<f64>> {
        seqs.iter().map(|s| self.predict(s)).collect()
    }

    /// Trainable parameters in a fixed order (matches `named_params`).
    pub fn params(&self) -> Vec<Variable> {
        self.named_params().into_iter().map(|(_, v)| v).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Stable (name, variable) listing used for checkpointing.
    pub fn named_params(&self) -> Vec<(String, Variable)> {
        let mut out: Vec<(String, Variable)> = Vec::new();
        match &self.body {
            Body::DeepBind(b) => {
                out.push(("conv.kernels".into(), b.conv.kernels.clone()));
                out.push(("conv.biases".into(), b.conv.biases.clone()));
                out.push(("thresholds".into(), b.thresholds.clone()));
                push_readout(&mut out, &b.hidden, &b.output);
            }
            Body::DeeperBind(b) => {
                out.push(("conv.kernels".into(), b.conv.kernels.clone()));
                out.push(("conv.biases".into(), b.conv.biases.clone()));
                for (l, layer) in b.lstm.layers.iter().enumerate() {
                    let p = &layer.params;
                    for (tag, var) in [
                        ("w_f", &p.w_f),
                        ("b_f", &p.b_f),
                        ("w_i", &p.w_i),
                        ("b_i", &p.b_i),
                        ("w_g", &p.w_g),
                        ("b_g", &p.b_g),
                        ("w_o", &p.w_o),
                        ("b_o", &p.b_o),
                    ] {
                        out.push((format!("lstm.{l}.{tag}"), var.clone()));
                    }
                }
                push_readout(&mut out, &b.hidden, &b.output);
            }
        }
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            kind: self.spec.kind,
            filters: self.spec.filters,
            motif_len: self.spec.motif_len,
            lstm_arch: self.spec.lstm_arch.clone(),
            fc_hidden: self.spec.fc_hidden,
            dropout: self.spec.dropout,
            row_order: BASE_ORDER.to_string(),
            tensors: self
                .named_params()
                .into_iter()
                .map(|(name, var)| NamedTensor { name, tensor: var.value().clone() })
                .collect(),
        }
    }

    /// Rebuilds a model from a checkpoint, validating version, row order, and
    /// the exact set of tensor names and shapes.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Model> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint {
                details: format!(
                    "format version {} unsupported (expected {})",
                    ck.format_version, CHECKPOINT_VERSION
                ),
            });
        }
        if ck.row_order != BASE_ORDER {
            return Err(Error::Checkpoint {
                details: format!(
                    "row order {:?} does not match this build's {:?}",
                    ck.row_order, BASE_ORDER
                ),
            });
        }
        let spec = ModelSpec {
            kind: ck.kind,
            filters: ck.filters,
            motif_len: ck.motif_len,
            lstm_arch: ck.lstm_arch.clone(),
            fc_hidden: ck.fc_hidden,
            dropout: ck.dropout,
        };
        let model = Model::init(&spec, 0)?;
        let expected = model.named_params();
        if expected.len() != ck.tensors.len() {
            return Err(Error::Checkpoint {
                details: format!(
                    "expected {} tensors for this architecture, found {}",
                    expected.len(),
                    ck.tensors.len()
                ),
            });
        }
        for ((name, var), stored) in expected.iter().zip(&ck.tensors) {
            if *name != stored.name {
                return Err(Error::Checkpoint {
                    details: format!("expected tensor {:?}, found {:?}", name, stored.name),
                });
            }
            var.set_value(stored.tensor.clone()).map_err(|e| Error::Checkpoint {
                details: format!("tensor {name:?}: {e}"),
            })?;
        }
        Ok(model)
    }
}

fn readout<R: rand::Rng>(
    features: usize,
    fc_hidden: Option<usize>,
    rng: &mut R,
) -> Result<(Option<DenseLayer>, DenseLayer)> {
    match fc_hidden {
        Some(h) => Ok((
            Some(DenseLayer::new(features, h, true, rng)?),
            DenseLayer::new(h, 1, false, rng)?,
        )),
        None => Ok((None, DenseLayer::new(features, 1, false, rng)?)),
    }
}

fn push_readout(
    out: &mut Vec<(String, Variable)>,
    hidden: &Option<DenseLayer>,
    output: &DenseLayer,
) {
    if let Some(h) = hidden {
        out.push(("fc_hidden.weights".into(), h.weights.clone()));
        out.push(("fc_hidden.bias".into(), h.bias.clone()));
    }
    out.push(("fc_out.weights".into(), output.weights.clone()));
    out.push(("fc_out.bias".into(), output.bias.clone()));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Serialized model: architecture fields plus every parameter tensor in the
/// order `named_params` declares. JSON round-trips `f64` exactly, so a saved
/// and reloaded model reproduces predictions bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub filters: usize,
    pub motif_len: usize,
    pub lstm_arch: Option<String>,
    pub fc_hidden: Option<usize>,
    pub dropout: f64,
    pub row_order: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            details: format!("{}: {e}", path.display()),
        })
    }
}
