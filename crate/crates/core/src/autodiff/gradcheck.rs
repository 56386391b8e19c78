use serde::Serialize;

use crate::error::Result;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Largest deviation between analytic and central-difference gradients.
#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(input, element, analytic, numeric)` of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn record(&mut self, input: usize, element: usize, analytic: f64, numeric: f64, floor: f64) {
        let err = relative_error(analytic, numeric, floor);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((input, element, analytic, numeric));
        }
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compare the tape's gradient of a scalar function against central
/// differences with step `h`, perturbing every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, floor: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_gradients_perturbed(inputs, h, floor, None, f)
}

/// [`check_gradients`] with an optional offset added to one analytic
/// gradient element, `(input, element, delta)`, to confirm the check notices.
pub fn check_gradients_perturbed<F>(
    inputs: &[Tensor],
    h: f64,
    floor: f64,
    perturb: Option<(usize, usize, f64)>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let mut analytic = grads.wrt(*var);
        if let Some((pi, pe, delta)) = perturb {
            if pi == i && pe < analytic.numel() {
                analytic.data_mut()[pe] += delta;
            }
        }
        for e in 0..inputs[i].numel() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[e] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            report.record(i, e, analytic.data()[e], numeric, floor);
        }
    }
    Ok(report)
}
