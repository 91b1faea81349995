use crate::error::{Error, Result};
use crate::model::{GradientSet, MeshContext, MignModel, PreparedSample};
use crate::par::{map_slice, tree_reduce, Execution};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            context: "metric inputs",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("metric over zero predictions".into()));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(sse(pred, truth) / pred.len() as f64)
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// Sum of squared errors.
pub fn sse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum()
}

fn check_batch(batch: &[&PreparedSample]) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::Empty("batch has no samples".into()));
    }
    let mut total = 0;
    for (i, s) in batch.iter().enumerate() {
        if s.truth.iter().any(Vec::is_empty) {
            return Err(Error::Empty(format!(
                "batch element {i} has an empty target day"
            )));
        }
        total += s.n_predictions();
    }
    Ok(total)
}

fn element_sse(
    model: &MignModel,
    sample: &PreparedSample,
    mesh: &MeshContext,
    i: usize,
) -> Result<f64> {
    let pred = model.predict(sample, mesh)?;
    let total: f64 = pred.iter().zip(&sample.truth).map(|(p, t)| sse(p, t)).sum();
    finite_or_report(total, i)
}

fn finite_or_report(total: f64, i: usize) -> Result<f64> {
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::NonFinite(format!(
            "loss of batch element {i} is {total}"
        )))
    }
}

/// Training loss: squared error summed over every prediction in the batch,
/// divided by the number of predictions.
pub fn batch_loss(
    model: &MignModel,
    batch: &[&PreparedSample],
    mesh: &MeshContext,
    exec: Execution,
) -> Result<f64> {
    let n = check_batch(batch)?;
    let indexed: Vec<(usize, &PreparedSample)> = batch.iter().copied().enumerate().collect();
    let parts = map_slice(exec, &indexed, |&(i, s)| element_sse(model, s, mesh, i));
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let total = tree_reduce(parts, |a, b| a + b).unwrap_or(0.0);
    Ok(total / n as f64)
}

/// [`batch_loss`] and its gradient with respect to every parameter tensor.
///
/// Elements are differentiated independently and their gradients summed in a
/// fixed pairwise order, so the result does not depend on `exec`.
pub fn loss_and_grad(
    model: &MignModel,
    batch: &[&PreparedSample],
    mesh: &MeshContext,
    exec: Execution,
) -> Result<(f64, GradientSet)> {
    let n = check_batch(batch)?;
    let scale = 2.0 / n as f64;
    let indexed: Vec<(usize, &PreparedSample)> = batch.iter().copied().enumerate().collect();
    let parts = map_slice(
        exec,
        &indexed,
        |&(i, sample)| -> Result<(f64, GradientSet)> {
            let trace = model.forward_trace(sample, mesh)?;
            let mut total = 0.0;
            let mut d_pred = Vec::with_capacity(trace.predictions.len());
            for (p, t) in trace.predictions.iter().zip(&sample.truth) {
                total += sse(p, t);
                d_pred.push(
                    p.iter()
                        .zip(t)
                        .map(|(p, t)| scale * (p - t))
                        .collect::<Vec<_>>(),
                );
            }
            let total = finite_or_report(total, i)?;
            let mut grads = model.params().zeros_like();
            model.backward(sample, mesh, &trace, &d_pred, &mut grads);
            if let Some((name, offset)) = grads.first_non_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of batch element {i} is non-finite at {name}[{offset}]"
                )));
            }
            Ok((total, grads))
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let (total, grads) = tree_reduce(parts, |(la, mut ga), (lb, gb)| {
        ga.add_assign(&gb);
        (la + lb, ga)
    })
    .expect("nonempty batch");
    Ok((total / n as f64, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        assert_eq!(mse(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(mse(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 2.5);
        assert_eq!(mae(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0], &[2.0]).unwrap(), 2.0);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 1.5);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(matches!(mae(&[], &[]), Err(Error::Empty(_))));
    }
}
