use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eventlog::{Event, History};
use crate::model::Model;
use crate::numerics::{Gradients, NodeId, Tape, Tensor};

/// One training example: an event with both participants' histories at its
/// timestamp, excluding the event itself.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub user_history: History,
    pub item_history: History,
    pub event: Event,
}

/// `|u - i|^2 + gamma * |V^T V - I|_F^2` with `V = [u i]`, recorded on the tape.
pub fn pair_loss(tape: &mut Tape, u: NodeId, i: NodeId, gamma: f64) -> Result<NodeId> {
    let diff = tape.sub(u, i)?;
    let distance = tape.sum_squares(diff)?;
    if gamma == 0.0 {
        return Ok(distance);
    }
    let v = tape.concat_cols(&[u, i])?;
    let vt = tape.transpose(v)?;
    let gram = tape.matmul(vt, v)?;
    let eye = tape.constant(Tensor::identity(2))?;
    let off = tape.sub(gram, eye)?;
    let reg = tape.sum_squares(off)?;
    let reg = tape.affine(reg, gamma, 0.0)?;
    tape.add(distance, reg)
}

/// Plain-value version of [`pair_loss`].
pub fn pair_loss_value(u: &[f64], i: &[f64], gamma: f64) -> Result<f64> {
    if u.len() != i.len() {
        return Err(Error::Shape { op: "pair_loss", left: (u.len(), 1), right: (i.len(), 1) });
    }
    if u.iter().chain(i).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pair_loss"));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let distance: f64 = u.iter().zip(i).map(|(a, b)| (a - b) * (a - b)).sum();
    let (uu, ii, ui) = (dot(u, u), dot(i, i), dot(u, i));
    let reg = (uu - 1.0).powi(2) + (ii - 1.0).powi(2) + 2.0 * ui * ui;
    Ok(distance + gamma * reg)
}

/// Records the loss of one sample on `tape`.
pub fn sample_loss(model: &Model, tape: &mut Tape, sample: &TrainSample, gamma: f64) -> Result<NodeId> {
    let out = model.forward(tape, &sample.user_history, &sample.item_history)?;
    pair_loss(tape, out.user, out.item, gamma)
}

/// Loss and gradients of a single sample on a private tape.
pub fn sample_gradients(model: &Model, sample: &TrainSample, gamma: f64) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(model.params());
    let loss = sample_loss(model, &mut tape, sample, gamma)?;
    let value = tape.value(loss).scalar_value();
    Ok((value, tape.backward(loss)?))
}

/// Per-sample losses, in sample order.
pub fn sample_losses(model: &Model, samples: &[TrainSample], gamma: f64) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(model.params());
            let loss = sample_loss(model, &mut tape, s, gamma)?;
            Ok(tape.value(loss).scalar_value())
        })
        .collect()
}

/// Mean pair loss over the batch, summed in index order.
pub fn batch_loss(model: &Model, samples: &[TrainSample], gamma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let losses = sample_losses(model, samples, gamma)?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Batch loss and its gradient from a single tape holding every sample.
pub fn batch_gradients_joint(model: &Model, samples: &[TrainSample], gamma: f64) -> Result<(f64, Gradients)> {
    if samples.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut tape = Tape::new(model.params());
    let terms = samples
        .iter()
        .map(|s| sample_loss(model, &mut tape, s, gamma))
        .collect::<Result<Vec<_>>>()?;
    let total = tape.sum(&terms)?;
    let mean = tape.affine(total, 1.0 / samples.len() as f64, 0.0)?;
    let value = tape.value(mean).scalar_value();
    Ok((value, tape.backward(mean)?))
}

/// Batch loss and gradient computed per sample in parallel, then reduced in
/// index order so the result does not depend on thread scheduling.
pub fn batch_gradients(model: &Model, samples: &[TrainSample], gamma: f64) -> Result<(f64, Gradients)> {
    if samples.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let parts = samples
        .par_iter()
        .map(|s| sample_gradients(model, s, gamma))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    let mut grads = Gradients::default();
    for (l, g) in &parts {
        loss += l;
        grads.merge(g);
    }
    grads.scale(scale);
    Ok((loss * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(pair_loss_value(&[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap(), 2.0);
        assert_eq!(pair_loss_value(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(), 2.0);
        assert_eq!(pair_loss_value(&[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap(), 2.0);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(pair_loss_value(&[f64::NAN], &[0.0], 1.0), Err(Error::NonFinite(_))));
        assert!(pair_loss_value(&[1.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn tape_matches_value() {
        let store = crate::numerics::ParamStore::new();
        let mut tape = Tape::new(&store);
        let (a, b) = (vec![0.3, -1.2, 0.5], vec![0.9, 0.1, -0.4]);
        let u = tape.constant(Tensor::vector(a.clone())).unwrap();
        let i = tape.constant(Tensor::vector(b.clone())).unwrap();
        let loss = pair_loss(&mut tape, u, i, 0.25).unwrap();
        let expected = pair_loss_value(&a, &b, 0.25).unwrap();
        assert!((tape.value(loss).scalar_value() - expected).abs() < 1e-12);
    }
}
