//! The dual-head classifier: an MLP trunk whose last (penultimate) layer
//! feeds two linear heads over the shared embedding S — W_l producing logits
//! and W_t producing either a full smoothing distribution (sigmoid then
//! row-softmax) or a single smoothing coefficient (sigmoid of a scalar).
//!
//! Forward passes record everything the hand-derived backward pass in
//! [`loss`] needs; no autograd is involved anywhere.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod optimizer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use gradcheck::{fd_gradients, gradient_check, GradCheckReport, TensorCheck};
pub use loss::{compute_loss, cross_entropy_mean, effective_target, loss_and_backward, Gradients};
pub use optimizer::{sgd_step, OptimizerState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One fully connected trunk layer (ReLU activation throughout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out×in weight.
    pub weight: Matrix,
    /// out×1 bias.
    pub bias: Matrix,
}

/// Shape of the smoothing head: a full K×m distribution head, or the 1×m
/// scalar-coefficient head of the coefficient ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Distribution,
    Coefficient,
}

/// Architecture block of the experiment config. The input dimension comes
/// from the dataset, not the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    pub num_classes: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![128]
}

fn default_embed() -> usize {
    128
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.embed_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    /// Hidden layers plus the final embedding layer, input side first.
    pub trunk: Vec<DenseLayer>,
    /// K×m logit head.
    pub logit_head: Matrix,
    /// K×m (distribution) or 1×m (coefficient) smoothing head.
    pub smoothing_head: Matrix,
    pub head_mode: HeadMode,
}

/// Smoothing-head outputs recorded during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothingTrace {
    Distribution {
        /// a = S·W_tᵀ, B×K.
        pre: Matrix,
        /// v = sigmoid(a); every entry in (0,1).
        squashed: Matrix,
        /// u′ = softmax over each row of v.
        dist: Matrix,
    },
    Coefficient {
        /// S·W_tᵀ, B×1.
        pre: Matrix,
        /// s = sigmoid of the scalar pre-activation, B×1.
        coeff: Matrix,
    },
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub inputs: Matrix,
    /// Pre-activations per trunk layer.
    pub pres: Vec<Matrix>,
    /// Post-ReLU activations per trunk layer; the last one is S.
    pub acts: Vec<Matrix>,
    /// z = S·W_lᵀ, B×K.
    pub logits: Matrix,
    /// p = softmax(z) per row.
    pub probs: Matrix,
    /// log p, computed stably from the logits.
    pub log_probs: Matrix,
    pub smoothing: SmoothingTrace,
}

impl ForwardTrace {
    pub fn embedding(&self) -> &Matrix {
        self.acts.last().expect("trunk is never empty")
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.rows()
    }

    /// The learned smoothing distribution, when the head produces one.
    pub fn smoothing_dist(&self) -> Option<&Matrix> {
        match &self.smoothing {
            SmoothingTrace::Distribution { dist, .. } => Some(dist),
            SmoothingTrace::Coefficient { .. } => None,
        }
    }

    pub fn smoothing_coeff(&self) -> Option<&Matrix> {
        match &self.smoothing {
            SmoothingTrace::Coefficient { coeff, .. } => Some(coeff),
            SmoothingTrace::Distribution { .. } => None,
        }
    }
}

/// x·Wᵀ + bias (bias broadcast across rows).
fn affine(x: &Matrix, layer: &DenseLayer) -> Result<Matrix> {
    let mut out = x.matmul(&layer.weight.transpose())?;
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v += layer.bias.get(c, 0);
        }
    }
    Ok(out)
}

impl Model {
    /// Random initialization: every weight uniform in ±1/√fan_in, biases
    /// zero. The smoothing head uses the same scheme as the logit head.
    pub fn init(cfg: &ModelConfig, input_dim: usize, head_mode: HeadMode, rng: &mut impl Rng) -> Result<Model> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend(&cfg.hidden_widths);
        widths.push(cfg.embed_dim);
        let mut trunk = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            trunk.push(DenseLayer {
                weight: uniform_matrix(fan_out, fan_in, rng),
                bias: Matrix::zeros(fan_out, 1),
            });
        }
        let logit_head = uniform_matrix(cfg.num_classes, cfg.embed_dim, rng);
        let smoothing_rows = match head_mode {
            HeadMode::Distribution => cfg.num_classes,
            HeadMode::Coefficient => 1,
        };
        let smoothing_head = uniform_matrix(smoothing_rows, cfg.embed_dim, rng);
        Ok(Model {
            trunk,
            logit_head,
            smoothing_head,
            head_mode,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk[0].weight.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.logit_head.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.logit_head.rows()
    }

    /// Validates the internal shape chain; used when reassembling a model
    /// from a checkpoint.
    pub fn check_shapes(&self) -> Result<()> {
        if self.trunk.is_empty() {
            return Err(Error::Consistency("model has no trunk layers".into()));
        }
        let mut width = self.input_dim();
        for (i, layer) in self.trunk.iter().enumerate() {
            if layer.weight.cols() != width {
                return Err(Error::Consistency(format!(
                    "trunk layer {i} expects {} inputs, previous width is {width}",
                    layer.weight.cols()
                )));
            }
            if layer.bias.rows() != layer.weight.rows() || layer.bias.cols() != 1 {
                return Err(Error::Consistency(format!("trunk layer {i} bias shape mismatch")));
            }
            width = layer.weight.rows();
        }
        if self.logit_head.cols() != width || self.smoothing_head.cols() != width {
            return Err(Error::Consistency("head width does not match embedding width".into()));
        }
        let expected_rows = match self.head_mode {
            HeadMode::Distribution => self.num_classes(),
            HeadMode::Coefficient => 1,
        };
        if self.smoothing_head.rows() != expected_rows {
            return Err(Error::Consistency(format!(
                "smoothing head has {} rows, expected {expected_rows}",
                self.smoothing_head.rows()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<ForwardTrace> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::dimension(
                "forward",
                format!("model input dim {}", self.input_dim()),
                format!("batch dim {}", inputs.cols()),
            ));
        }
        let mut pres = Vec::with_capacity(self.trunk.len());
        let mut acts = Vec::with_capacity(self.trunk.len());
        let mut current = inputs;
        for layer in &self.trunk {
            let pre = affine(current, layer)?;
            let act = pre.relu();
            pres.push(pre);
            acts.push(act);
            current = acts.last().unwrap();
        }
        let s = acts.last().unwrap();
        let logits = s.matmul(&self.logit_head.transpose())?;
        let probs = logits.softmax_rows();
        let log_probs = logits.log_softmax_rows();
        let smoothing_pre = s.matmul(&self.smoothing_head.transpose())?;
        let smoothing = match self.head_mode {
            HeadMode::Distribution => {
                let squashed = smoothing_pre.sigmoid();
                let dist = squashed.softmax_rows();
                SmoothingTrace::Distribution {
                    pre: smoothing_pre,
                    squashed,
                    dist,
                }
            }
            HeadMode::Coefficient => {
                let coeff = smoothing_pre.sigmoid();
                SmoothingTrace::Coefficient {
                    pre: smoothing_pre,
                    coeff,
                }
            }
        };
        Ok(ForwardTrace {
            inputs: inputs.clone(),
            pres,
            acts,
            logits,
            probs,
            log_probs,
            smoothing,
        })
    }

    /// Number of parameter tensors, in the fixed traversal order
    /// weight0, bias0, weight1, bias1, …, logit head, smoothing head.
    pub fn num_tensors(&self) -> usize {
        2 * self.trunk.len() + 2
    }

    pub fn tensor(&self, idx: usize) -> &Matrix {
        let n = self.trunk.len();
        match idx {
            i if i < 2 * n && i % 2 == 0 => &self.trunk[i / 2].weight,
            i if i < 2 * n => &self.trunk[i / 2].bias,
            i if i == 2 * n => &self.logit_head,
            i if i == 2 * n + 1 => &self.smoothing_head,
            _ => panic!("tensor index {idx} out of range"),
        }
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Matrix {
        let n = self.trunk.len();
        match idx {
            i if i < 2 * n && i % 2 == 0 => &mut self.trunk[i / 2].weight,
            i if i < 2 * n => &mut self.trunk[i / 2].bias,
            i if i == 2 * n => &mut self.logit_head,
            i if i == 2 * n + 1 => &mut self.smoothing_head,
            _ => panic!("tensor index {idx} out of range"),
        }
    }

    pub fn tensor_name(&self, idx: usize) -> String {
        let n = self.trunk.len();
        match idx {
            i if i < 2 * n && i % 2 == 0 => format!("trunk{}.weight", i / 2),
            i if i < 2 * n => format!("trunk{}.bias", i / 2),
            i if i == 2 * n => "logit_head".into(),
            i if i == 2 * n + 1 => "smoothing_head".into(),
            _ => panic!("tensor index {idx} out of range"),
        }
    }

    /// Zero matrices mirroring every parameter tensor.
    pub fn zeros_like_params(&self) -> Vec<Matrix> {
        (0..self.num_tensors())
            .map(|i| {
                let t = self.tensor(i);
                Matrix::zeros(t.rows(), t.cols())
            })
            .collect()
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Matrix::new(rows, cols, data).expect("bounded init values are finite")
}
