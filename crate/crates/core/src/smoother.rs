//! Fixed-window backward smoother over sub-frame nodes and the
//! constraint-integrity gate applied before mapping.

use nalgebra::{Matrix6, SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{propagate_covariance, step_nominal, TransitionRecord};
use crate::state::{block, symmetrize, Covariance, ErrorState, NominalState, STATE_DIM};

/// Filter output at the end of one sub-frame, plus the propagation to the next node.
#[derive(Clone, Debug)]
pub struct SmootherNode {
    pub timestamp: f64,
    pub filtered_state: NominalState,
    pub filtered_cov: Covariance,
    /// Steps from this node to the next one.
    pub transitions: Vec<TransitionRecord>,
}

#[derive(Clone, Debug)]
pub struct SmoothedEstimate {
    pub state: NominalState,
    pub covariance: Covariance,
    pub gain: Covariance,
}

/// A state space with a retraction and its local inverse.
pub trait Manifold<const N: usize>: Clone {
    fn retract(&self, dx: &SVector<f64, N>) -> Self;
    /// `self ⊟ base`.
    fn local(&self, base: &Self) -> SVector<f64, N>;
}

impl<const N: usize> Manifold<N> for SVector<f64, N> {
    fn retract(&self, dx: &SVector<f64, N>) -> Self {
        self + dx
    }

    fn local(&self, base: &Self) -> SVector<f64, N> {
        self - base
    }
}

impl Manifold<STATE_DIM> for NominalState {
    fn retract(&self, dx: &ErrorState) -> Self {
        NominalState::retract(self, dx)
    }

    fn local(&self, base: &Self) -> ErrorState {
        self.boxminus(base)
    }
}

/// Forward step from node `k` used by the backward pass.
#[derive(Clone, Debug)]
pub struct Prediction<S, const N: usize> {
    pub state: S,
    pub covariance: SMatrix<f64, N, N>,
    /// Composed transition of the whole chain.
    pub transition: SMatrix<f64, N, N>,
}

/// Re-propagates a node's corrected state and covariance to the next node.
pub fn predict_node(node: &SmootherNode) -> Prediction<NominalState, STATE_DIM> {
    let mut state = node.filtered_state.clone();
    let mut covariance = node.filtered_cov;
    let mut transition = Covariance::identity();
    for tr in &node.transitions {
        state = step_nominal(&state, &tr.input, tr.dt);
        covariance = propagate_covariance(&covariance, tr);
        transition = tr.phi * transition;
    }
    Prediction {
        state,
        covariance,
        transition,
    }
}

/// `G = P Φᵀ P_pred⁻¹`.
pub fn smooth_gain<const N: usize>(
    p: &SMatrix<f64, N, N>,
    phi: &SMatrix<f64, N, N>,
    p_pred: &SMatrix<f64, N, N>,
) -> Result<SMatrix<f64, N, N>> {
    let rhs = phi * p;
    let chol = match p_pred.cholesky() {
        Some(c) => c,
        None => {
            log::warn!("predicted covariance not positive definite, regularizing");
            (p_pred + SMatrix::<f64, N, N>::identity() * 1e-12)
                .cholesky()
                .ok_or(Error::Singular("predicted covariance"))?
        }
    };
    Ok(chol.solve(&rhs).transpose())
}

/// Rauch–Tung–Striebel backward pass.
///
/// `filtered[k]` is the filter output at node `k`; `predicted[k]` is the
/// forward prediction from node `k` to node `k + 1`.
pub fn rts_smooth<S: Manifold<N>, const N: usize>(
    filtered: &[(S, SMatrix<f64, N, N>)],
    predicted: &[Prediction<S, N>],
) -> Result<Vec<(S, SMatrix<f64, N, N>, SMatrix<f64, N, N>)>> {
    let Some(last) = filtered.last() else {
        return Err(Error::EmptyWindow);
    };
    if predicted.len() + 1 != filtered.len() {
        return Err(Error::MissingTransitions {
            index: predicted.len(),
        });
    }
    let n = filtered.len();
    let mut out = Vec::with_capacity(n);
    out.push((last.0.clone(), last.1, SMatrix::zeros()));
    for k in (0..n - 1).rev() {
        let (x, p) = &filtered[k];
        let pred = &predicted[k];
        let g = smooth_gain(p, &pred.transition, &pred.covariance)?;
        let (xs_next, ps_next, _) = out.last().unwrap();
        let xs = x.retract(&(g * xs_next.local(&pred.state)));
        let mut ps = p + g * (ps_next - pred.covariance) * g.transpose();
        symmetrize(&mut ps);
        out.push((xs, ps, g));
    }
    out.reverse();
    Ok(out)
}

fn check_chain(nodes: &[SmootherNode]) -> Result<()> {
    for (k, pair) in nodes.windows(2).enumerate() {
        let span: f64 = pair[0].transitions.iter().map(|t| t.dt).sum();
        let gap = pair[1].timestamp - pair[0].timestamp;
        if (span - gap).abs() > 1e-6 {
            return Err(Error::MissingTransitions { index: k });
        }
    }
    Ok(())
}

/// Smooths every node of the window; the last node keeps its filtered estimate.
pub fn backward_smooth(nodes: &[SmootherNode]) -> Result<Vec<SmoothedEstimate>> {
    if nodes.is_empty() {
        return Err(Error::EmptyWindow);
    }
    check_chain(nodes)?;
    let filtered: Vec<_> = nodes
        .iter()
        .map(|n| (n.filtered_state.clone(), n.filtered_cov))
        .collect();
    let predicted: Vec<_> = nodes[..nodes.len() - 1].iter().map(predict_node).collect();
    Ok(rts_smooth(&filtered, &predicted)?
        .into_iter()
        .map(|(state, covariance, gain)| SmoothedEstimate {
            state,
            covariance,
            gain,
        })
        .collect())
}

/// Which eigenvalue test decides that a pose is well constrained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrityMode {
    /// Smallest eigenvalue of the pose information matrix `P_pose⁻¹` exceeds the threshold.
    #[default]
    InformationMinEigenAbove,
    /// Smallest eigenvalue of `P_pose` exceeds the threshold.
    CovarianceMinEigenAbove,
    /// Smallest eigenvalue of `P_pose` is below the threshold.
    CovarianceMinEigenBelow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrityConfig {
    pub mode: IntegrityMode,
    pub threshold: f64,
}

impl Default for IntegrityConfig {
    fn default() -> Self {
        Self {
            mode: IntegrityMode::InformationMinEigenAbove,
            threshold: 2.0e4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrityVerdict {
    pub sufficient: bool,
    /// Smallest eigenvalue of the matrix the configured mode inspects.
    pub min_eigenvalue: f64,
    pub threshold: f64,
}

/// Position and attitude block of `P`.
pub fn pose_block(p: &Covariance) -> Matrix6<f64> {
    let idx = [
        block::POS,
        block::POS + 1,
        block::POS + 2,
        block::ROT,
        block::ROT + 1,
        block::ROT + 2,
    ];
    Matrix6::from_fn(|i, j| p[(idx[i], idx[j])])
}

pub fn check_integrity(p: &Covariance, cfg: &IntegrityConfig) -> IntegrityVerdict {
    let mut pose = pose_block(p);
    symmetrize(&mut pose);
    let eig = SymmetricEigen::new(pose).eigenvalues;
    let (min_eigenvalue, sufficient) = match cfg.mode {
        IntegrityMode::InformationMinEigenAbove => {
            let info_min = 1.0 / eig.max();
            (info_min, info_min > cfg.threshold)
        }
        IntegrityMode::CovarianceMinEigenAbove => (eig.min(), eig.min() > cfg.threshold),
        IntegrityMode::CovarianceMinEigenBelow => (eig.min(), eig.min() < cfg.threshold),
    };
    IntegrityVerdict {
        sufficient,
        min_eigenvalue,
        threshold: cfg.threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::build_transition;
    use crate::state::{so3_exp, ImuNoiseParams, ImuSample};
    use nalgebra::{Matrix1, Vector1, Vector3};

    fn node_with_chain(steps: usize) -> SmootherNode {
        let x = NominalState {
            velocity: Vector3::new(1.0, 0.5, 0.0),
            attitude: so3_exp(&Vector3::new(0.1, 0.2, 0.3)),
            ..Default::default()
        };
        let u = ImuSample::new(
            0.0,
            Vector3::new(0.3, -0.2, 9.9),
            Vector3::new(0.5, 0.1, -0.2),
        );
        let noise = ImuNoiseParams::default();
        let mut transitions = Vec::new();
        let mut s = x.clone();
        for _ in 0..steps {
            let tr = build_transition(&s, &u, 0.005, &noise).unwrap();
            s = step_nominal(&s, &u, 0.005);
            transitions.push(tr);
        }
        SmootherNode {
            timestamp: 0.0,
            filtered_state: x,
            filtered_cov: Covariance::identity() * 1e-3,
            transitions,
        }
    }

    #[test]
    fn empty_chain_is_identity() {
        let node = node_with_chain(0);
        let pred = predict_node(&node);
        assert_eq!(pred.state, node.filtered_state);
        assert_eq!(pred.covariance, node.filtered_cov);
        assert_eq!(pred.transition, Covariance::identity());
    }

    #[test]
    fn chain_matches_stepwise_composition() {
        let node = node_with_chain(7);
        let pred = predict_node(&node);
        let mut x = node.filtered_state.clone();
        let mut p = node.filtered_cov;
        for tr in &node.transitions {
            x = crate::propagation::propagate_nominal(&x, &tr.input, tr.dt).unwrap();
            p = propagate_covariance(&p, tr);
        }
        assert!(pred.state.boxminus(&x).norm() < 1e-12);
        assert!((pred.covariance - p).amax() < 1e-12);
    }

    #[test]
    fn gain_examples() {
        let i = Covariance::identity();
        assert!((smooth_gain(&i, &i, &i).unwrap() - i).amax() < 1e-15);
        let g = smooth_gain(&Matrix1::new(1.0), &Matrix1::new(1.0), &Matrix1::new(2.0)).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_prediction_regularized() {
        let z = Matrix1::new(0.0);
        let g = smooth_gain(&z, &Matrix1::new(1.0), &z).unwrap();
        assert_eq!(g[0], 0.0);
        assert!(smooth_gain(&z, &Matrix1::new(1.0), &Matrix1::new(-1.0)).is_err());
    }

    #[test]
    fn terminal_node_unchanged() {
        let mut a = node_with_chain(4);
        let pred = predict_node(&a);
        let b = SmootherNode {
            timestamp: 0.02,
            filtered_state: pred.state.clone(),
            filtered_cov: pred.covariance,
            transitions: Vec::new(),
        };
        a.timestamp = 0.0;
        let out = backward_smooth(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(out[1].state, b.filtered_state);
        assert_eq!(out[1].covariance, b.filtered_cov);
        // No information added after node 0: smoothing leaves it untouched.
        assert!(out[0].state.boxminus(&a.filtered_state).norm() < 1e-12);
        assert!((out[0].covariance - a.filtered_cov).amax() < 1e-12);
    }

    #[test]
    fn broken_chain_rejected() {
        let a = node_with_chain(4);
        let b = SmootherNode {
            timestamp: 0.5,
            ..node_with_chain(0)
        };
        assert!(matches!(
            backward_smooth(&[a, b]),
            Err(Error::MissingTransitions { index: 0 })
        ));
        assert!(matches!(backward_smooth(&[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn scalar_rts() {
        let filtered = vec![
            (Vector1::new(0.0), Matrix1::new(1.0)),
            (Vector1::new(2.0), Matrix1::new(0.5)),
        ];
        let predicted = vec![Prediction {
            state: Vector1::new(0.0),
            covariance: Matrix1::new(2.0),
            transition: Matrix1::new(1.0),
        }];
        let out = rts_smooth(&filtered, &predicted).unwrap();
        assert!((out[0].2[0] - 0.5).abs() < 1e-15);
        assert!((out[0].0[0] - 1.0).abs() < 1e-15);
        assert!((out[0].1[0] - (1.0 + 0.25 * (0.5 - 2.0))).abs() < 1e-15);
    }

    #[test]
    fn integrity_examples() {
        let cfg = IntegrityConfig::default();
        assert!(check_integrity(&(Covariance::identity() * 1e-8), &cfg).sufficient);
        let mut degenerate = Covariance::identity() * 1e-6;
        degenerate[(0, 0)] = 10.0;
        assert!(!check_integrity(&degenerate, &cfg).sufficient);
        let vacuous = IntegrityConfig {
            threshold: 0.0,
            ..cfg
        };
        assert!(check_integrity(&degenerate, &vacuous).sufficient);
        // Bias blocks do not influence the verdict.
        let mut biased = Covariance::identity() * 1e-8;
        biased[(block::BIAS_ACC, block::BIAS_ACC)] = 1e6;
        assert!(check_integrity(&biased, &cfg).sufficient);
        let below = IntegrityConfig {
            mode: IntegrityMode::CovarianceMinEigenBelow,
            threshold: 1e-4,
        };
        assert!(check_integrity(&degenerate, &below).sufficient);
        let above = IntegrityConfig {
            mode: IntegrityMode::CovarianceMinEigenAbove,
            threshold: 1e-4,
        };
        assert!(!check_integrity(&degenerate, &above).sufficient);
    }
}
