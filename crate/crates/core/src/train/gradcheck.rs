use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{batch_loss, loss_and_grad};
use crate::error::Result;
use crate::model::{GradientSet, MeshContext, MignModel, PreparedSample};
use crate::par::Execution;

/// Smallest number of scalars [`grad_check`] probes.
pub const MIN_PROBES: usize = 200;
const DENOMINATOR_FLOOR: f64 = 1e-8;

/// Analytic and numeric derivative of the loss for one scalar parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradProbe {
    pub tensor: String,
    pub offset: usize,
    pub flat: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<GradProbe>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradProbe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Compares `grads` against central differences at the flat parameter
/// indices `flat`.
pub fn probe_gradients(
    model: &MignModel,
    sample: &PreparedSample,
    mesh: &MeshContext,
    eps: f64,
    grads: &GradientSet,
    flat: &[usize],
) -> Result<Vec<GradProbe>> {
    let mut work = model.clone();
    let batch = [sample];
    let mut out = Vec::with_capacity(flat.len());
    for &f in flat {
        let (ti, offset) = model
            .params()
            .locate(f)
            .expect("index within parameter count");
        let original = model.params().tensors()[ti].data()[offset];
        let mut loss_at = |value: f64| -> Result<f64> {
            work.params_mut().tensors_mut()[ti].data_mut()[offset] = value;
            batch_loss(&work, &batch, mesh, Execution::Sequential)
        };
        let plus = loss_at(original + eps)?;
        let minus = loss_at(original - eps)?;
        loss_at(original)?;
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads.tensors()[ti].data()[offset];
        out.push(GradProbe {
            tensor: model.params().tensors()[ti].name().to_string(),
            offset,
            flat: f,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(out)
}

/// Seeded choice of at least `n` flat indices, with at least one from every
/// tensor.
pub fn choose_probes(model: &MignModel, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = 0;
    let mut chosen = Vec::new();
    for t in model.params().tensors() {
        chosen.push(start + sample_indices(&mut rng, t.len(), 1).index(0));
        start += t.len();
    }
    let total = model.params().num_scalars();
    let extra = n.saturating_sub(chosen.len()).min(total);
    chosen.extend(sample_indices(&mut rng, total, extra).iter());
    chosen.sort_unstable();
    chosen.dedup();
    chosen
}

/// Worst relative error between backpropagated and central-difference
/// gradients over [`MIN_PROBES`] or more parameters spanning every tensor.
pub fn grad_check(
    model: &MignModel,
    sample: &PreparedSample,
    mesh: &MeshContext,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_grad(model, &[sample], mesh, Execution::Sequential)?;
    let mut flat = choose_probes(model, MIN_PROBES, 0x67c4);
    let mut extra_seed = 1;
    while flat.len() < MIN_PROBES.min(model.params().num_scalars()) {
        flat.extend(choose_probes(model, MIN_PROBES, extra_seed));
        flat.sort_unstable();
        flat.dedup();
        extra_seed += 1;
    }
    let probes = probe_gradients(model, sample, mesh, eps, &grads, &flat)?;
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        probes,
    })
}
