use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    /// Largest relative error per input, in input order.
    pub max_rel_error: Vec<f64>,
    pub tol: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error.iter().all(|&e| e <= self.tol)
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Magnitudes below this are compared absolutely rather than relatively.
pub const GRADCHECK_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, GRADCHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Checks `f`'s gradient with respect to every element of every input
/// against central differences with step `eps`.
///
/// `f` receives the inputs as trainable leaves and must return a scalar.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64, tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out).item().ok_or_else(|| {
            Error::Contract(format!("gradcheck: function output has shape {:?}, not scalar", g.value(out).shape()))
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("gradcheck probe produced {v}")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut probe: Vec<Tensor> = inputs.to_vec();
    let mut max_rel_error = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..input.len() {
            let base = input.data()[i];
            let set = |probe: &mut [Tensor], v: f64| {
                let mut d = probe[k].clone().into_data();
                d[i] = v;
                probe[k] = Tensor::from_raw(input.shape().to_vec(), d);
            };
            set(&mut probe, base + eps);
            let plus = eval(&probe)?;
            set(&mut probe, base - eps);
            let minus = eval(&probe)?;
            set(&mut probe, base);
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[k].data()[i], numeric));
        }
        max_rel_error.push(worst);
    }
    Ok(GradcheckReport { max_rel_error, tol })
}
