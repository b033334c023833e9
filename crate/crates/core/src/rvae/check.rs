use rand::Rng;

use super::{loss_and_gradient, NetworkParams, OutputGeometry, Sample, TrainingConfig};
use crate::error::Result;

/// Largest gradient discrepancy found in one parameter tensor.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the analytic gradient with central differences of step `h`,
/// entry by entry. Every loss evaluation reuses a clone of `rng`, so the
/// dropout masks and noise are the same throughout. The relative error of
/// an entry is `|a − f| / max(|a|, |f|, floor)`.
pub fn finite_difference_check<R: Rng + Clone>(
    params: &NetworkParams,
    batch: &[Sample],
    geometry: &OutputGeometry,
    cfg: &TrainingConfig,
    rng: &R,
    h: f64,
    floor: f64,
) -> Result<Vec<TensorCheck>> {
    let (_, grad) = loss_and_gradient(params, batch, geometry, cfg, &mut rng.clone())?;
    let loss_at = |p: &NetworkParams| -> Result<f64> {
        Ok(loss_and_gradient(p, batch, geometry, cfg, &mut rng.clone())?.0.total)
    };
    let mut out = Vec::new();
    let mut probe = params.clone();
    for (ti, (name, g)) in grad.tensors().into_iter().enumerate() {
        let mut worst = TensorCheck {
            name,
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..g.len() {
            let orig = probe.tensors()[ti].1[i];
            probe.tensors_mut()[ti].1[i] = orig + h;
            let up = loss_at(&probe)?;
            probe.tensors_mut()[ti].1[i] = orig - h;
            let down = loss_at(&probe)?;
            probe.tensors_mut()[ti].1[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = g[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.max_relative_error || i == 0 {
                worst = TensorCheck {
                    name,
                    max_relative_error: rel.max(worst.max_relative_error),
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
        out.push(worst);
    }
    Ok(out)
}
