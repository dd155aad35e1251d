use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rcvox_lio::smoother::Prediction;

pub type M4 = SMatrix<f64, 4, 4>;
pub type V4 = SVector<f64, 4>;
pub type M24 = SMatrix<f64, 2, 4>;

/// Planar constant-velocity model with position fixes.
pub struct CvSystem {
    pub f: M4,
    pub q: M4,
    pub h: M24,
    pub r: SMatrix<f64, 2, 2>,
    pub m0: V4,
    pub p0: M4,
    pub z: Vec<SVector<f64, 2>>,
}

impl CvSystem {
    pub fn random(rng: &mut ChaCha8Rng, nodes: usize) -> Self {
        let dt = rng.random_range(0.05..0.5);
        let mut f = M4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let qa = rng.random_range(0.01..1.0);
        let mut q = M4::zeros();
        for (p, v) in [(0, 2), (1, 3)] {
            q[(p, p)] = qa * dt.powi(3) / 3.0;
            q[(p, v)] = qa * dt.powi(2) / 2.0;
            q[(v, p)] = q[(p, v)];
            q[(v, v)] = qa * dt;
        }
        let h = M24::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let r = SMatrix::<f64, 2, 2>::identity() * rng.random_range(0.01..1.0);
        let z = (0..nodes)
            .map(|k| {
                SVector::<f64, 2>::new(k as f64, 0.5 * k as f64)
                    + SVector::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        Self {
            f,
            q,
            h,
            r,
            m0: V4::new(0.0, 0.0, 1.0, 0.5),
            p0: super::random_spd::<4>(rng, 1.0),
            z,
        }
    }

    /// Kalman filter; node 0 is the prior updated with `z[0]`.
    pub fn filter(&self) -> (Vec<(V4, M4)>, Vec<Prediction<V4, 4>>) {
        let mut filtered = Vec::new();
        let mut predicted = Vec::new();
        let (mut x, mut p) = (self.m0, self.p0);
        for (k, z) in self.z.iter().enumerate() {
            if k > 0 {
                x = self.f * x;
                p = self.f * p * self.f.transpose() + self.q;
            }
            let s = self.h * p * self.h.transpose() + self.r;
            let gain = p * self.h.transpose() * s.try_inverse().unwrap();
            x += gain * (z - self.h * x);
            p = (M4::identity() - gain * self.h) * p;
            p = (p + p.transpose()) * 0.5;
            filtered.push((x, p));
            if k + 1 < self.z.len() {
                predicted.push(Prediction {
                    state: self.f * x,
                    covariance: self.f * p * self.f.transpose() + self.q,
                    transition: self.f,
                });
            }
        }
        (filtered, predicted)
    }

    /// Dense maximum a posteriori solve over every node at once.
    pub fn batch(&self) -> (Vec<V4>, Vec<M4>) {
        let n = self.z.len();
        let dim = 4 * n;
        let mut info = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        let mut add = |rows: &DMatrix<f64>, w: &DMatrix<f64>, target: &DVector<f64>| {
            info += rows.transpose() * w * rows;
            rhs += rows.transpose() * w * target;
        };
        let embed = |k: usize, m: &DMatrix<f64>, out: &mut DMatrix<f64>| {
            out.view_mut((0, 4 * k), (m.nrows(), 4)).copy_from(m);
        };
        let dyn4 = |m: &M4| DMatrix::from_column_slice(4, 4, m.as_slice());
        let h = DMatrix::from_column_slice(2, 4, self.h.as_slice());
        let r_inv = DMatrix::from_column_slice(2, 2, self.r.try_inverse().unwrap().as_slice());

        let mut rows = DMatrix::zeros(4, dim);
        embed(0, &DMatrix::identity(4, 4), &mut rows);
        add(
            &rows,
            &dyn4(&self.p0.try_inverse().unwrap()),
            &DVector::from_column_slice(self.m0.as_slice()),
        );
        let q_inv = dyn4(&self.q.try_inverse().unwrap());
        for k in 0..n {
            let mut rows = DMatrix::zeros(2, dim);
            embed(k, &h, &mut rows);
            add(
                &rows,
                &r_inv,
                &DVector::from_column_slice(self.z[k].as_slice()),
            );
            if k + 1 < n {
                let mut rows = DMatrix::zeros(4, dim);
                embed(k, &(-dyn4(&self.f)), &mut rows);
                embed(k + 1, &DMatrix::identity(4, 4), &mut rows);
                add(&rows, &q_inv, &DVector::zeros(4));
            }
        }
        let cov = info.clone().cholesky().unwrap().inverse();
        let mean = &cov * rhs;
        let means = (0..n)
            .map(|k| V4::from_column_slice(mean.rows(4 * k, 4).as_slice()))
            .collect();
        let covs = (0..n)
            .map(|k| M4::from_fn(|i, j| cov[(4 * k + i, 4 * k + j)]))
            .collect();
        (means, covs)
    }
}
