//! Brute-force joint-Gaussian conditioning for a discount DLM.
//!
//! Builds the joint covariance of all states and observations directly from
//! the model equations and conditions with dense solves. `W_t` is obtained
//! from the oracle's own conditional covariance of the previous state.

use dlmix::dlm::TimeObs;
use nalgebra::{DMatrix, DVector};

pub struct OracleMoments {
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub smoothed_means: Vec<DVector<f64>>,
    pub smoothed_covs: Vec<DMatrix<f64>>,
}

struct Joint {
    p: usize,
    // state means and covariance blocks, states 1..=t
    means: Vec<DVector<f64>>,
    cov: Vec<Vec<DMatrix<f64>>>,
}

fn condition(
    joint: &Joint,
    obs: &[TimeObs],
    upto: usize,
    target: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = joint.p;
    // observation stacking for times 0..upto
    let sizes: Vec<usize> = obs[..upto].iter().map(|o| o.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut syy = DMatrix::zeros(total, total);
    let mut sxy = DMatrix::zeros(p, total);
    let mut resid = DVector::zeros(total);
    let mut off_s = 0;
    for s in 0..upto {
        let fs = &obs[s].f;
        let mut off_r = 0;
        for r in 0..upto {
            let fr = &obs[r].f;
            if sizes[s] > 0 && sizes[r] > 0 {
                let block = fs * &joint.cov[s][r] * fr.transpose();
                syy.view_mut((off_s, off_r), (sizes[s], sizes[r])).copy_from(&block);
            }
            off_r += sizes[r];
        }
        for k in 0..sizes[s] {
            syy[(off_s + k, off_s + k)] += obs[s].var[k];
        }
        if sizes[s] > 0 {
            let cxy = &joint.cov[target][s] * fs.transpose();
            sxy.view_mut((0, off_s), (p, sizes[s])).copy_from(&cxy);
            let pred = fs * &joint.means[s];
            for k in 0..sizes[s] {
                resid[off_s + k] = obs[s].y[k] - pred[k];
            }
        }
        off_s += sizes[s];
    }
    if total == 0 {
        return (joint.means[target].clone(), joint.cov[target][target].clone());
    }
    let lu = syy.lu();
    let gain_t = lu.solve(&sxy.transpose()).expect("oracle solve");
    let mean = &joint.means[target] + gain_t.transpose() * resid;
    let cov = &joint.cov[target][target] - sxy * gain_t;
    (mean, (&cov + cov.transpose()) * 0.5)
}

pub fn joint_gaussian_oracle(
    g: &DMatrix<f64>,
    discount: f64,
    obs: &[TimeObs],
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
) -> OracleMoments {
    let p = m0.len();
    let n = obs.len();
    let mut joint = Joint {
        p,
        means: Vec::new(),
        cov: Vec::new(),
    };
    let mut prev_mean = m0.clone();
    let mut prev_var = c0.clone();
    // cross covariances of the previous state with states 0..t-1
    let mut filtered_means = Vec::new();
    let mut filtered_covs = Vec::new();
    let mut c_prev = c0.clone();
    for t in 0..n {
        let w = g * &c_prev * g.transpose() * ((1.0 - discount) / discount);
        let mean = g * &prev_mean;
        let var = g * &prev_var * g.transpose() + &w;
        // Cov(θ_t, θ_s) = G Cov(θ_{t-1}, θ_s)
        let mut row = Vec::with_capacity(t + 1);
        for s in 0..t {
            row.push(g * &joint.cov[t - 1][s]);
        }
        row.push(var.clone());
        for s in 0..t {
            let c = row[s].transpose();
            joint.cov[s].push(c);
        }
        joint.cov.push(row);
        joint.means.push(mean.clone());
        prev_mean = mean;
        prev_var = var;
        let (fm, fc) = condition(&joint, obs, t + 1, t);
        c_prev = fc.clone();
        filtered_means.push(fm);
        filtered_covs.push(fc);
    }
    let mut smoothed_means = Vec::new();
    let mut smoothed_covs = Vec::new();
    for t in 0..n {
        let (sm, sc) = condition(&joint, obs, n, t);
        smoothed_means.push(sm);
        smoothed_covs.push(sc);
    }
    OracleMoments {
        filtered_means,
        filtered_covs,
        smoothed_means,
        smoothed_covs,
    }
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-6)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-6)
}
