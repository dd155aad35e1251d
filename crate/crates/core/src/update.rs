//! Iterated error-state measurement update with point-to-plane residuals.

use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, SMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::RcVoxMap;
use crate::state::{
    block, skew, symmetrize, Covariance, ErrorState, ExtrinsicCalib, NominalState, STATE_DIM,
};

pub type JacobianRow = SMatrix<f64, 1, STATE_DIM>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePatch {
    pub normal: Vector3<f64>,
    pub centroid: Vector3<f64>,
    pub valid: bool,
}

impl PlanePatch {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(&(p - self.centroid))
    }
}

/// Scatter eigenvalue ratio `λ_mid/λ_max` below which a neighbourhood counts as collinear.
pub const MIN_SPREAD_RATIO: f64 = 1e-2;

/// Fits a plane through `neighbors` by the smallest-eigenvalue direction of their scatter.
pub fn fit_plane(neighbors: &[Vector3<f64>], tolerance: f64) -> PlanePatch {
    let invalid = |centroid| PlanePatch {
        normal: Vector3::z(),
        centroid,
        valid: false,
    };
    if neighbors.len() < 3 {
        return invalid(Vector3::zeros());
    }
    let centroid = neighbors.iter().sum::<Vector3<f64>>() / neighbors.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in neighbors {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l_mid, l_max) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(l_max > 0.0) || l_mid < MIN_SPREAD_RATIO * l_max {
        return invalid(centroid);
    }
    let normal = eig.eigenvectors.column(order[0]).normalize();
    let plane = PlanePatch {
        normal,
        centroid,
        valid: true,
    };
    if neighbors
        .iter()
        .any(|p| plane.distance(p).abs() >= tolerance)
    {
        return invalid(centroid);
    }
    plane
}

/// Point-to-plane residual of a lidar-frame point and its row of `∂h/∂δx`.
pub fn residual_and_jacobian(
    x: &NominalState,
    point: &Vector3<f64>,
    plane: &PlanePatch,
    calib: &ExtrinsicCalib,
) -> (f64, JacobianRow) {
    let q = calib.lidar_to_body(point);
    let r = x.rotation();
    let world = r * q + x.position;
    let residual = plane.distance(&world);
    let mut row = JacobianRow::zeros();
    let n: RowVector3<f64> = plane.normal.transpose();
    row.fixed_view_mut::<1, 3>(0, block::POS).copy_from(&n);
    row.fixed_view_mut::<1, 3>(0, block::ROT)
        .copy_from(&(-n * r * skew(&q)));
    (residual, row)
}

/// Stacked measurement model for one iteration.
#[derive(Clone, Debug)]
pub struct ResidualSet {
    pub residuals: DVector<f64>,
    /// `m × 18`.
    pub jacobian: DMatrix<f64>,
    /// Per-residual variance.
    pub noise: DVector<f64>,
    pub point_refs: Vec<usize>,
}

impl ResidualSet {
    pub fn from_rows(rows: &[(usize, f64, JacobianRow, f64)]) -> Self {
        let m = rows.len();
        let mut out = Self {
            residuals: DVector::zeros(m),
            jacobian: DMatrix::zeros(m, STATE_DIM),
            noise: DVector::zeros(m),
            point_refs: Vec::with_capacity(m),
        };
        for (i, (idx, h, row, var)) in rows.iter().enumerate() {
            out.residuals[i] = *h;
            out.jacobian.row_mut(i).copy_from(row);
            out.noise[i] = *var;
            out.point_refs.push(*idx);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// `HᵀR⁻¹H` and `HᵀR⁻¹h`.
    fn information(&self) -> (Covariance, ErrorState) {
        let mut hth = Covariance::zeros();
        let mut htr = ErrorState::zeros();
        for i in 0..self.len() {
            let w = 1.0 / self.noise[i];
            let row = self.jacobian.row(i);
            for a in 0..STATE_DIM {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                htr[a] += w * ra * self.residuals[i];
                for b in 0..STATE_DIM {
                    hth[(a, b)] += w * ra * row[b];
                }
            }
        }
        (hth, htr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IekfConfig {
    pub max_iterations: usize,
    /// Stop once `max(|δp|, |δθ|)` of a correction drops below this.
    pub convergence_eps: f64,
    pub measurement_std: f64,
    pub plane_tolerance: f64,
    pub max_residual: f64,
    pub knn: usize,
    /// Residual variance grows by this times the mean squared neighbour distance to the fitted plane.
    pub plane_variance_gain: f64,
}

impl Default for IekfConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            convergence_eps: 1e-4,
            measurement_std: 0.05,
            plane_tolerance: 0.1,
            max_residual: 1.0,
            knn: 5,
            plane_variance_gain: 10.0,
        }
    }
}

impl IekfConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations >= 1
            && self.convergence_eps > 0.0
            && self.measurement_std > 0.0
            && self.plane_tolerance > 0.0
            && self.max_residual > 0.0
            && self.knn >= 3
            && self.plane_variance_gain >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "iekf tunables must be positive, with at least 1 iteration and 3 neighbours".into(),
            ))
        }
    }
}

#[derive(Clone, Debug)]
pub struct UpdateResult {
    pub state: NominalState,
    pub covariance: Covariance,
    pub iterations: usize,
    pub converged: bool,
    pub match_count: usize,
    /// Composite norm of each applied correction.
    pub corrections: Vec<f64>,
}

fn inverse_spd(m: &Covariance, what: &'static str) -> Result<Covariance> {
    if let Some(c) = m.cholesky() {
        return Ok(c.inverse());
    }
    let reg = m + Covariance::identity() * 1e-12 * m.diagonal().amax().max(1.0);
    reg.cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular(what))
}

/// Gain `(HᵀR⁻¹H + P⁻¹)⁻¹HᵀR⁻¹`, sized in the state dimension.
pub fn gain_information_form(
    p: &Covariance,
    h: &DMatrix<f64>,
    noise: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let set = ResidualSet {
        residuals: DVector::zeros(h.nrows()),
        jacobian: h.clone(),
        noise: noise.clone(),
        point_refs: Vec::new(),
    };
    let (hth, _) = set.information();
    let s = inverse_spd(
        &(hth + inverse_spd(p, "prior covariance")?),
        "information matrix",
    )?;
    let mut ht_rinv = h.transpose();
    for (j, mut col) in ht_rinv.column_iter_mut().enumerate() {
        col /= noise[j];
    }
    Ok(DMatrix::from_column_slice(STATE_DIM, STATE_DIM, s.as_slice()) * ht_rinv)
}

/// Textbook gain `PHᵀ(HPHᵀ + R)⁻¹`, sized in the measurement dimension.
pub fn gain_covariance_form(
    p: &Covariance,
    h: &DMatrix<f64>,
    noise: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let pd = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, p.as_slice());
    let s = h * &pd * h.transpose() + DMatrix::from_diagonal(noise);
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular("innovation covariance"))?;
    Ok(pd * h.transpose() * s_inv)
}

/// `(I − KH)P`, symmetrized.
pub fn update_covariance(p: &Covariance, k: &DMatrix<f64>, h: &DMatrix<f64>) -> Covariance {
    let kh = k * h;
    covariance_from_kh(p, &Covariance::from_column_slice(kh.as_slice()))
}

fn covariance_from_kh(p: &Covariance, kh: &Covariance) -> Covariance {
    let mut out = (Covariance::identity() - kh) * p;
    symmetrize(&mut out);
    out
}

fn composite_norm(dx: &ErrorState) -> f64 {
    dx.fixed_rows::<3>(block::POS)
        .norm()
        .max(dx.fixed_rows::<3>(block::ROT).norm())
}

/// Fixed-prior iterated update with a caller-supplied association step.
///
/// `associate` is invoked at every iterate and returns the stacked residuals there.
pub fn iterate_with<F>(
    x0: &NominalState,
    p: &Covariance,
    cfg: &IekfConfig,
    mut associate: F,
) -> Result<UpdateResult>
where
    F: FnMut(&NominalState) -> ResidualSet,
{
    let unchanged = |iterations| UpdateResult {
        state: x0.clone(),
        covariance: *p,
        iterations,
        converged: false,
        match_count: 0,
        corrections: Vec::new(),
    };
    let p_inv = inverse_spd(p, "prior covariance")?;
    let mut x = x0.clone();
    let mut kh = Covariance::zeros();
    let mut corrections = Vec::new();
    let mut converged = false;
    let mut match_count = 0;
    for _ in 0..cfg.max_iterations {
        let set = associate(&x);
        if set.is_empty() {
            return Ok(unchanged(corrections.len()));
        }
        match_count = set.len();
        let (hth, htr) = set.information();
        let s = inverse_spd(&(hth + p_inv), "information matrix")?;
        kh = s * hth;
        let prior_offset = x.boxminus(x0);
        let dx = -(s * htr) - (Covariance::identity() - kh) * prior_offset;
        x = x.boxplus(&dx)?;
        let norm = composite_norm(&dx);
        corrections.push(norm);
        if norm < cfg.convergence_eps {
            converged = true;
            break;
        }
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("updated state"));
    }
    Ok(UpdateResult {
        state: x,
        covariance: covariance_from_kh(p, &kh),
        iterations: corrections.len(),
        converged,
        match_count,
        corrections,
    })
}

/// Associates each lidar-frame point with a plane fitted to its map neighbours.
pub fn associate(
    x: &NominalState,
    points: &[Vector3<f64>],
    map: &RcVoxMap,
    calib: &ExtrinsicCalib,
    cfg: &IekfConfig,
) -> ResidualSet {
    let var = cfg.measurement_std * cfg.measurement_std;
    let r = x.rotation();
    let mut rows = Vec::with_capacity(points.len());
    let mut nbrs = Vec::with_capacity(cfg.knn);
    for (i, p) in points.iter().enumerate() {
        let world = r * calib.lidar_to_body(p) + x.position;
        let Ok(found) = map.knn(&world, cfg.knn) else {
            continue;
        };
        if found.len() < cfg.knn {
            continue;
        }
        nbrs.clear();
        nbrs.extend(found.iter().map(|n| n.p));
        let plane = fit_plane(&nbrs, cfg.plane_tolerance);
        if !plane.valid {
            continue;
        }
        let (h, row) = residual_and_jacobian(x, p, &plane, calib);
        if h.abs() > cfg.max_residual {
            continue;
        }
        let thickness =
            nbrs.iter().map(|q| plane.distance(q).powi(2)).sum::<f64>() / nbrs.len() as f64;
        rows.push((i, h, row, var + cfg.plane_variance_gain * thickness));
    }
    ResidualSet::from_rows(&rows)
}

/// Iterated update of `(x0, P)` against the map using undistorted lidar-frame points.
pub fn iterated_update(
    x0: &NominalState,
    p: &Covariance,
    points: &[Vector3<f64>],
    map: &RcVoxMap,
    calib: &ExtrinsicCalib,
    cfg: &IekfConfig,
) -> Result<UpdateResult> {
    iterate_with(x0, p, cfg, |x| associate(x, points, map, calib, cfg))
}
