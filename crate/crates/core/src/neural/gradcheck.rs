use serde::Serialize;

use super::mlp::MlpModel;
use super::tape::{Tape, Var};
use super::NeuralError;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradients with magnitude at or below this are compared absolutely.
pub const SMALL_GRADIENT: f64 = 1e-8;

/// Comparison of reverse-mode gradients against central differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub n_params: usize,
    /// Parameters whose gradient exceeds [`SMALL_GRADIENT`].
    pub n_compared: usize,
    pub max_rel_error: f64,
    /// Flat index (layer order) of the worst parameter.
    pub argmax: usize,
    /// Largest absolute error over the small-gradient parameters.
    pub max_abs_error_small: f64,
}

/// Builds a scalar loss on a tape from the model's parameter leaves.
///
/// Returns the root node and the loss value. The root's value need not equal
/// the loss (an [`Tape::external`] node may carry only the gradient), so
/// both are reported.
pub trait LossBuilder {
    fn build(
        &self,
        model: &MlpModel,
        tape: &mut Tape,
        params: &[Var],
    ) -> Result<(Var, f64), NeuralError>;
}

impl<F> LossBuilder for F
where
    F: Fn(&MlpModel, &mut Tape, &[Var]) -> Result<(Var, f64), NeuralError>,
{
    fn build(
        &self,
        model: &MlpModel,
        tape: &mut Tape,
        params: &[Var],
    ) -> Result<(Var, f64), NeuralError> {
        self(model, tape, params)
    }
}

fn loss_value(model: &MlpModel, builder: &impl LossBuilder) -> Result<f64, NeuralError> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    Ok(builder.build(model, &mut tape, &params)?.1)
}

/// Reverse-mode gradient of the built loss, one vector per parameter tensor.
pub fn loss_gradient(
    model: &MlpModel,
    builder: &impl LossBuilder,
) -> Result<(f64, Vec<Vec<f64>>), NeuralError> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    let (root, value) = builder.build(model, &mut tape, &params)?;
    let mut grads = tape.backward(root)?;
    let out = params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| {
            grads
                .take(v)
                .map_or_else(|| vec![0.0; p.len()], |g| g.into_data())
        })
        .collect();
    Ok((value, out))
}

/// Checks every parameter by central differences with step [`FD_STEP`].
pub fn gradcheck(
    model: &MlpModel,
    builder: &impl LossBuilder,
) -> Result<GradcheckReport, NeuralError> {
    let (_, analytic) = loss_gradient(model, builder)?;
    let mut probe = model.clone();
    let mut report = GradcheckReport {
        n_params: 0,
        n_compared: 0,
        max_rel_error: 0.0,
        argmax: 0,
        max_abs_error_small: 0.0,
    };
    let mut flat = 0;
    for (t, grads) in analytic.iter().enumerate() {
        for (k, &ga) in grads.iter().enumerate() {
            let orig = probe.params[t].data()[k];
            probe.params[t].data_mut()[k] = orig + FD_STEP;
            let plus = loss_value(&probe, builder)?;
            probe.params[t].data_mut()[k] = orig - FD_STEP;
            let minus = loss_value(&probe, builder)?;
            probe.params[t].data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let err = (ga - fd).abs();
            let scale = ga.abs().max(fd.abs());
            if scale > SMALL_GRADIENT {
                report.n_compared += 1;
                let rel = err / scale;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.argmax = flat;
                }
            } else {
                report.max_abs_error_small = report.max_abs_error_small.max(err);
            }
            flat += 1;
        }
    }
    report.n_params = flat;
    Ok(report)
}
