use super::{EngineError, ParamId, ParamSet, Tape, Var};

/// Denominator floor for the relative error, so that two gradients that are
/// both near zero do not produce a huge ratio from rounding noise.
const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Largest analytic gradient magnitude, to spot vacuous checks.
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of the scalar built by `f` with central
/// finite differences of step `h`, entry by entry.
///
/// `f` receives a fresh tape and the parameters registered on it, in id
/// order. Parameters that get no analytic gradient are compared against zero.
pub fn gradient_check<E: From<EngineError>>(
    params: &ParamSet<f64>,
    h: f64,
    f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
) -> Result<GradCheckReport, E> {
    let eval = |p: &ParamSet<f64>| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars = tape.params(p, false);
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut tape = Tape::new();
    let vars = tape.params(params, true);
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = Vec::with_capacity(params.len());
    let mut probe = params.clone();
    for id in params.ids() {
        let n = params.get(id).numel();
        let analytic: Vec<f64> = grads.get(id).map_or(vec![0.0; n], |g| g.data().to_vec());
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let x = params.get(id).data()[i];
            set(&mut probe, id, i, x + h);
            let plus = eval(&probe)?;
            set(&mut probe, id, i, x - h);
            let minus = eval(&probe)?;
            set(&mut probe, id, i, x);
            let numeric = (plus - minus) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
        }
        report.push(ParamCheck {
            name: params.name(id).to_string(),
            max_rel_error: worst,
            max_abs_grad: analytic.iter().fold(0.0, |m, g| m.max(g.abs())),
        });
    }
    Ok(GradCheckReport { params: report })
}

fn set(params: &mut ParamSet<f64>, id: ParamId, i: usize, value: f64) {
    params.get_mut(id).data_mut()[i] = value;
}
