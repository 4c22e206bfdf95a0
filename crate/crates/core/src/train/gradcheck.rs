use fmn_autodiff::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trainer::sample_losses;
use super::weights::{total_loss_var, TaskWeights};
use crate::dataset::Sample;
use crate::error::Result;
use crate::model::Network;

/// Gradients below this magnitude on both sides compare absolutely.
pub const GRAD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// `count` distinct (tensor, element) positions drawn uniformly over all
/// parameters.
pub fn sample_parameters<T: fmn_autodiff::Scalar>(net: &Network<T>, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat: Vec<usize> = Vec::with_capacity(count.min(total));
    while flat.len() < count.min(total) {
        let k = rng.random_range(0..total);
        if !flat.contains(&k) {
            flat.push(k);
        }
    }
    flat.sort_unstable();
    flat.into_iter()
        .map(|mut k| {
            let mut t = 0;
            while k >= sizes[t] {
                k -= sizes[t];
                t += 1;
            }
            (t, k)
        })
        .collect()
}

fn weighted_loss(net: &Network<f64>, sample: &Sample, weights: &TaskWeights, lambda_box: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let (_, losses) = sample_losses(&mut tape, net, sample, lambda_box, false)?;
    let total = total_loss_var(&mut tape, losses, weights)?;
    Ok(tape.values(total)[0])
}

/// Compares backpropagated gradients of the weighted task loss with central
/// differences of step `step` at the given positions.
pub fn gradient_check(
    net: &Network<f64>,
    sample: &Sample,
    weights: &TaskWeights,
    lambda_box: f64,
    positions: &[(usize, usize)],
    step: f64,
) -> Result<Vec<GradCheckEntry>> {
    let mut tape = Tape::new();
    let (params, losses) = sample_losses(&mut tape, net, sample, lambda_box, true)?;
    let total = total_loss_var(&mut tape, losses, weights)?;
    tape.backward(total)?;
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(positions.len());
    for &(t, i) in positions {
        let analytic = tape.grad(params[t]).map_or(0.0, |g| g[i]);
        let orig = probe.params()[t].values()[i];
        probe.params_mut()[t].values_mut()[i] = orig + step;
        let plus = weighted_loss(&probe, sample, weights, lambda_box)?;
        probe.params_mut()[t].values_mut()[i] = orig - step;
        let minus = weighted_loss(&probe, sample, weights, lambda_box)?;
        probe.params_mut()[t].values_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        out.push(GradCheckEntry {
            tensor: t,
            index: i,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    Ok(out)
}
