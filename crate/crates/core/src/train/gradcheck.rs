//! Central finite-difference checks of the analytic loss gradients.
//!
//! The loss is only piecewise smooth: hash-grid cells, ReLUs and the L1
//! terms all have creases. A difference stencil that straddles one measures
//! an average of two one-sided slopes, not the derivative. Each probe
//! therefore evaluates the central difference at `h` and `h/2`; if the two
//! disagree the stencil is not in a smooth patch and the probe is redrawn.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::Fields;
use crate::scene::ViewSet;
use crate::train::loss::{evaluate, Batch, LossWeights};

/// Stencils whose `h` and `h/2` estimates differ by more than this (relative)
/// are treated as crossing a crease.
pub const CREASE_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Probe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub probes: Vec<Probe>,
    /// Draws rejected because their stencil crossed a crease.
    pub redrawn: usize,
}

/// Compares analytic and central-difference derivatives of the weighted
/// loss at `probes` parameters. Each draw picks a tensor uniformly, then an
/// entry with a nonzero analytic gradient when the tensor has one, so sparse
/// hash tables are not dominated by trivially-zero entries.
pub fn gradient_check<R: Rng>(
    fields: &Fields<f64>,
    data: &ViewSet,
    batch: &Batch,
    weights: &LossWeights,
    probes: usize,
    step: f64,
    rng: &mut R,
) -> Result<GradCheck> {
    let mut grads = fields.zeros_like();
    evaluate(fields, data, batch, weights, Some(&mut grads))?;
    let grad_tensors: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, _, t)| t.to_vec()).collect();
    let mut probe_fields = fields.clone();
    let mut out = GradCheck {
        probes: Vec::with_capacity(probes),
        redrawn: 0,
    };
    let max_draws = 20 * probes.max(1);
    while out.probes.len() < probes {
        if out.probes.len() + out.redrawn >= max_draws {
            return Err(Error::Numeric(format!(
                "only {} of {probes} probes landed in smooth patches after {max_draws} draws",
                out.probes.len()
            )));
        }
        let tensor = rng.gen_range(0..grad_tensors.len());
        let g = &grad_tensors[tensor];
        let nonzero: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        let index = if nonzero.is_empty() {
            rng.gen_range(0..g.len())
        } else {
            nonzero[rng.gen_range(0..nonzero.len())]
        };
        let mut at = |delta: f64| -> Result<f64> {
            let original = {
                let mut t = probe_fields.tensors_mut();
                let v = t[tensor].2[index];
                t[tensor].2[index] = v + delta;
                v
            };
            let r = evaluate(&probe_fields, data, batch, weights, None);
            probe_fields.tensors_mut()[tensor].2[index] = original;
            Ok(r?.total)
        };
        let numeric = (at(step)? - at(-step)?) / (2.0 * step);
        let half = (at(step / 2.0)? - at(-step / 2.0)?) / step;
        let scale = numeric.abs().max(half.abs()).max(1e-6);
        if (numeric - half).abs() > CREASE_TOLERANCE * scale {
            out.redrawn += 1;
            continue;
        }
        out.probes.push(Probe {
            tensor,
            index,
            analytic: g[index],
            numeric,
        });
    }
    Ok(out)
}
