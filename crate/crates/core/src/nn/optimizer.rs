//! SGD with classical momentum:
//! velocity ← momentum·velocity − lr·grad, parameter ← parameter + velocity.

use crate::error::{Error, Result};
use crate::nn::loss::Gradients;
use crate::nn::Model;
use crate::tensor::Matrix;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(model: &Model, learning_rate: f64, momentum: f64) -> Result<OptimizerState> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0,1), got {momentum}")));
        }
        Ok(OptimizerState {
            learning_rate,
            momentum,
            velocity: model.zeros_like_params(),
        })
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }
}

/// One parameter update in place. Errors if gradient shapes do not mirror the
/// model or if any parameter leaves the finite range (diverging run).
pub fn sgd_step(model: &mut Model, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    if grads.tensors.len() != model.num_tensors() || state.velocity.len() != model.num_tensors() {
        return Err(Error::Consistency(format!(
            "gradient/velocity count {} vs {} model tensors",
            grads.tensors.len(),
            model.num_tensors()
        )));
    }
    let (momentum, lr) = (state.momentum, state.learning_rate);
    for i in 0..model.num_tensors() {
        let g = &grads.tensors[i];
        if g.shape() != state.velocity[i].shape() {
            return Err(Error::dimension(
                "sgd_step",
                format!("{}x{}", state.velocity[i].rows(), state.velocity[i].cols()),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
        let name = model.tensor_name(i);
        let v = state.velocity[i].data_mut();
        let p = model.tensor_mut(i).data_mut();
        for ((pj, vj), &gj) in p.iter_mut().zip(v.iter_mut()).zip(g.data()) {
            let v_new = momentum * *vj - lr * gj;
            let p_new = *pj + v_new;
            // Checked before writing, so matrices never hold non-finite
            // values; a failing run leaves earlier tensors updated, which is
            // fine because the model is unusable after this error anyway.
            if !v_new.is_finite() || !p_new.is_finite() {
                return Err(Error::Contract(format!(
                    "parameter tensor {name} became non-finite (diverging run)"
                )));
            }
            *vj = v_new;
            *pj = p_new;
        }
    }
    Ok(())
}
