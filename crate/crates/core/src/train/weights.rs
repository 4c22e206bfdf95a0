use fmn_autodiff::{Scalar, Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::TaskSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMode {
    #[serde(rename = "STL_seg")]
    StlSeg,
    #[serde(rename = "STL_det")]
    StlDet,
    #[serde(rename = "STL_soil")]
    StlSoil,
    #[serde(rename = "MTL")]
    Mtl,
    #[serde(rename = "MTL_10")]
    Mtl10,
    #[serde(rename = "MTL_100")]
    Mtl100,
    #[serde(rename = "MTL_gradnorm")]
    MtlGradnorm,
}

impl TrainMode {
    pub const ALL: [TrainMode; 7] = [
        TrainMode::StlSeg,
        TrainMode::StlDet,
        TrainMode::StlSoil,
        TrainMode::Mtl,
        TrainMode::Mtl10,
        TrainMode::Mtl100,
        TrainMode::MtlGradnorm,
    ];

    pub fn tasks(self) -> TaskSet {
        match self {
            TrainMode::StlSeg => TaskSet::SEG,
            TrainMode::StlDet => TaskSet::DET,
            TrainMode::StlSoil => TaskSet::SOIL,
            _ => TaskSet::ALL,
        }
    }

    /// Initial (and, except for GradNorm, fixed) weights.
    pub fn initial_weights(self) -> TaskWeights {
        match self {
            TrainMode::Mtl10 => TaskWeights::new(10.0, 1.0, 1.0),
            TrainMode::Mtl100 => TaskWeights::new(100.0, 1.0, 1.0),
            _ => TaskWeights::new(1.0, 1.0, 1.0),
        }
    }

    pub fn is_adaptive(self) -> bool {
        self == TrainMode::MtlGradnorm
    }

    /// Column label used in comparison reports.
    pub fn label(self) -> &'static str {
        match self {
            TrainMode::StlSeg => "STL Seg",
            TrainMode::StlDet => "STL Det",
            TrainMode::StlSoil => "STL Soil",
            TrainMode::Mtl => "MTL",
            TrainMode::Mtl10 => "MTL w_seg=10",
            TrainMode::Mtl100 => "MTL w_seg=100",
            TrainMode::MtlGradnorm => "MTL GradNorm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub seg: f64,
    pub det: f64,
    pub soil: f64,
}

impl TaskWeights {
    pub fn new(seg: f64, det: f64, soil: f64) -> Self {
        Self { seg, det, soil }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.seg, self.det, self.soil]
    }

    pub fn from_array(w: [f64; 3]) -> Self {
        Self::new(w[0], w[1], w[2])
    }
}

/// Per-task scalars in the order (seg, det, soil); `None` for inactive tasks.
pub type PerTask<T> = [Option<T>; 3];

/// Σ w_i · L_i over the active tasks.
pub fn total_loss(losses: PerTask<f64>, weights: &TaskWeights) -> f64 {
    losses
        .iter()
        .zip(weights.as_array())
        .filter_map(|(l, w)| l.map(|l| w * l))
        .sum()
}

/// Records Σ w_i · L_i on a tape.
pub fn total_loss_var<T: Scalar>(
    tape: &mut Tape<T>,
    losses: PerTask<Var>,
    weights: &TaskWeights,
) -> Result<Var> {
    let terms: Vec<(Var, T)> = losses
        .iter()
        .zip(weights.as_array())
        .filter_map(|(l, w)| l.map(|l| (l, T::lit(w))))
        .collect();
    Ok(tape.weighted_sum(&terms)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradNormConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub floor: f64,
}

impl Default for GradNormConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            learning_rate: 0.025,
            floor: 0.01,
        }
    }
}

/// One epoch-level balancing step over the active tasks.
///
/// With G_i = w_i·g_i and relative training rates
/// r_i = (L_i / L_i(0)) / mean_j(L_j / L_j(0)), each weight moves by
/// η·g_i against the sign of G_i − mean(G)·r_i^α, is floored, and the set is
/// rescaled to sum to the number of tasks.
pub fn gradnorm_update(
    weights: &[f64],
    losses: &[f64],
    initial_losses: &[f64],
    grad_norms: &[f64],
    config: &GradNormConfig,
) -> Vec<f64> {
    let n = weights.len();
    assert!(
        losses.len() == n && initial_losses.len() == n && grad_norms.len() == n,
        "per-task inputs must align"
    );
    if grad_norms.iter().all(|&g| g == 0.0) {
        return weights.to_vec();
    }
    let ratios: Vec<f64> = losses
        .iter()
        .zip(initial_losses)
        .map(|(l, l0)| l / l0)
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / n as f64;
    let weighted: Vec<f64> = weights.iter().zip(grad_norms).map(|(w, g)| w * g).collect();
    let mean_weighted = weighted.iter().sum::<f64>() / n as f64;
    let mut updated: Vec<f64> = (0..n)
        .map(|i| {
            let target = mean_weighted * (ratios[i] / mean_ratio).powf(config.alpha);
            let step = config.learning_rate * sign(weighted[i] - target) * grad_norms[i];
            (weights[i] - step).max(config.floor)
        })
        .collect();
    let sum: f64 = updated.iter().sum();
    for w in &mut updated {
        *w *= n as f64 / sum;
    }
    updated
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_totals() {
        let l = [Some(0.5), Some(0.2), Some(0.3)];
        assert_eq!(total_loss(l, &TrainMode::Mtl.initial_weights()), 1.0);
        assert_eq!(total_loss(l, &TrainMode::Mtl10.initial_weights()), 5.5);
        assert_eq!(total_loss(l, &TrainMode::Mtl100.initial_weights()), 50.5);
    }

    #[test]
    fn symmetric_tasks_are_a_fixed_point() {
        let w = gradnorm_update(
            &[1.0; 3],
            &[0.7; 3],
            &[0.7; 3],
            &[1.0; 3],
            &GradNormConfig::default(),
        );
        assert_eq!(w, vec![1.0; 3]);
    }

    #[test]
    fn worked_two_task_update() {
        let w = gradnorm_update(
            &[1.0, 1.0],
            &[1.0, 1.0],
            &[1.0, 1.0],
            &[2.0, 1.0],
            &GradNormConfig::default(),
        );
        // (0.95, 1.025) rescaled by 2 / 1.975
        assert!((w[0] - 0.96203).abs() < 1e-4 && (w[1] - 1.03797).abs() < 1e-4);
        assert!((w[0] - 0.95 * 2.0 / 1.975).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_leave_weights() {
        let w = gradnorm_update(
            &[0.5, 2.5],
            &[1.0, 3.0],
            &[2.0, 1.0],
            &[0.0, 0.0],
            &GradNormConfig::default(),
        );
        assert_eq!(w, vec![0.5, 2.5]);
    }

    #[test]
    fn modes_parse_from_names() {
        assert_eq!(TrainMode::parse("MTL_100"), Some(TrainMode::Mtl100));
        assert_eq!(TrainMode::parse("STL_soil"), Some(TrainMode::StlSoil));
        assert_eq!(TrainMode::parse("mtl"), None);
    }
}
