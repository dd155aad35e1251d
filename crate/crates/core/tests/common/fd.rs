use nalgebra::Vector3;
use rcvox_lio::propagation::propagate_nominal;
use rcvox_lio::state::{
    Covariance, ErrorState, ExtrinsicCalib, ImuSample, NominalState, STATE_DIM,
};
use rcvox_lio::update::{residual_and_jacobian, JacobianRow, PlanePatch};

const H: f64 = 1e-6;

/// Central differences of one propagation step through `boxplus`/`boxminus`.
pub fn transition_jacobian(x: &NominalState, u: &ImuSample, dt: f64) -> Covariance {
    let base = propagate_nominal(x, u, dt).unwrap();
    let mut j = Covariance::zeros();
    for c in 0..STATE_DIM {
        let mut d = ErrorState::zeros();
        d[c] = H;
        let plus = propagate_nominal(&x.boxplus(&d).unwrap(), u, dt)
            .unwrap()
            .boxminus(&base);
        let minus = propagate_nominal(&x.boxplus(&-d).unwrap(), u, dt)
            .unwrap()
            .boxminus(&base);
        j.set_column(c, &((plus - minus) / (2.0 * H)));
    }
    j
}

pub fn residual_jacobian(
    x: &NominalState,
    point: &Vector3<f64>,
    plane: &PlanePatch,
    calib: &ExtrinsicCalib,
) -> JacobianRow {
    let mut j = JacobianRow::zeros();
    for c in 0..STATE_DIM {
        let mut d = ErrorState::zeros();
        d[c] = H;
        let (rp, _) = residual_and_jacobian(&x.boxplus(&d).unwrap(), point, plane, calib);
        let (rm, _) = residual_and_jacobian(&x.boxplus(&-d).unwrap(), point, plane, calib);
        j[c] = (rp - rm) / (2.0 * H);
    }
    j
}
