//! Evolutional Dirichlet process for one series' membership weights:
//! conjugate forward filter, backward sampler and backward mode, and the
//! marginal likelihood of the discount given the labels.

use rand::Rng;
use rand_distr::Open01;

use crate::error::{Error, Result};
use crate::random::{beta_draw, categorical_draw, dirichlet_draw};

/// Dirichlet parameters after each observed label.
#[derive(Debug, Clone, PartialEq)]
pub struct EdpState {
    pub c0: Vec<f64>,
    pub delta: f64,
    /// `c[t]` for `t = 1..T` (stored 0-based).
    pub c: Vec<Vec<f64>>,
}

impl EdpState {
    pub fn k(&self) -> usize {
        self.c0.len()
    }

    /// Parameters before observation `t` (0-based), i.e. `c_{t-1}`.
    pub fn previous(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.c0
        } else {
            &self.c[t - 1]
        }
    }
}

/// Membership weights over time, one simplex row per time.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPath {
    pub eta: Vec<Vec<f64>>,
}

/// One backward step of the sampler: `η_{t-1} = s η_t + (1 - s) u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardStep {
    pub s: f64,
    pub u: Vec<f64>,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("discount {delta} outside (0, 1]")));
    }
    Ok(())
}

fn check_inputs(c0: &[f64], z: &[usize]) -> Result<()> {
    if c0.is_empty() || c0.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::invalid("c0 must have positive finite entries"));
    }
    if let Some(bad) = z.iter().find(|&&j| j >= c0.len()) {
        return Err(Error::invalid(format!("label {} outside 1..{}", bad + 1, c0.len())));
    }
    Ok(())
}

/// `c_t = δ c_{t-1} + e_{z_t}`.
pub fn edp_forward_filter(c0: &[f64], delta: f64, z: &[usize]) -> Result<EdpState> {
    check_inputs(c0, z)?;
    check_delta(delta)?;
    let mut c = Vec::with_capacity(z.len());
    let mut prev = c0.to_vec();
    for &zt in z {
        let mut next: Vec<f64> = prev.iter().map(|v| delta * v).collect();
        next[zt] += 1.0;
        c.push(next.clone());
        prev = next;
    }
    Ok(EdpState {
        c0: c0.to_vec(),
        delta,
        c,
    })
}

/// Joint draw of the weight path, together with the `(S_t, u)` used at
/// each backward step (ordered by time, `t = 2..T`).
pub fn edp_backward_sample_steps<R: Rng + ?Sized>(state: &EdpState, rng: &mut R) -> (WeightPath, Vec<BackwardStep>) {
    let t_len = state.c.len();
    if t_len == 0 {
        return (WeightPath { eta: Vec::new() }, Vec::new());
    }
    let delta = state.delta;
    let mut eta = vec![Vec::new(); t_len];
    let mut steps = vec![
        BackwardStep {
            s: 1.0,
            u: Vec::new()
        };
        t_len - 1
    ];
    eta[t_len - 1] = dirichlet_draw(rng, &state.c[t_len - 1]);
    for t in (1..t_len).rev() {
        let prev = &state.c[t - 1];
        let step = if delta == 1.0 {
            BackwardStep {
                s: 1.0,
                u: eta[t].clone(),
            }
        } else {
            let total: f64 = prev.iter().sum();
            let s = beta_draw(rng, delta * total, (1.0 - delta) * total);
            let alpha: Vec<f64> = prev.iter().map(|c| (1.0 - delta) * c).collect();
            BackwardStep {
                s,
                u: dirichlet_draw(rng, &alpha),
            }
        };
        eta[t - 1] = combine(&eta[t], &step);
        steps[t - 1] = step;
    }
    (WeightPath { eta }, steps)
}

fn combine(next: &[f64], step: &BackwardStep) -> Vec<f64> {
    let mut out: Vec<f64> = next
        .iter()
        .zip(&step.u)
        .map(|(e, u)| step.s * e + (1.0 - step.s) * u)
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

pub fn edp_backward_sample<R: Rng + ?Sized>(state: &EdpState, rng: &mut R) -> WeightPath {
    edp_backward_sample_steps(state, rng).0
}

/// Mode of `Dirichlet(alpha)`, or its mean when some parameter is at most one.
pub fn dirichlet_mode_or_mean(alpha: &[f64]) -> Vec<f64> {
    let total: f64 = alpha.iter().sum();
    if alpha.iter().all(|&a| a > 1.0) {
        let denom = total - alpha.len() as f64;
        alpha.iter().map(|a| (a - 1.0) / denom).collect()
    } else {
        alpha.iter().map(|a| a / total).collect()
    }
}

fn beta_mode_or_mean(a: f64, b: f64) -> f64 {
    if a > 1.0 && b > 1.0 {
        (a - 1.0) / (a + b - 2.0)
    } else {
        a / (a + b)
    }
}

/// Backward recursion with every draw replaced by the mode of its
/// distribution.
pub fn edp_backward_mode(state: &EdpState) -> WeightPath {
    let t_len = state.c.len();
    if t_len == 0 {
        return WeightPath { eta: Vec::new() };
    }
    let delta = state.delta;
    let mut eta = vec![Vec::new(); t_len];
    eta[t_len - 1] = dirichlet_mode_or_mean(&state.c[t_len - 1]);
    for t in (1..t_len).rev() {
        if delta == 1.0 {
            eta[t - 1] = eta[t].clone();
            continue;
        }
        let prev = &state.c[t - 1];
        let total: f64 = prev.iter().sum();
        let s = beta_mode_or_mean(delta * total, (1.0 - delta) * total);
        let alpha: Vec<f64> = prev.iter().map(|c| (1.0 - delta) * c).collect();
        let step = BackwardStep {
            s,
            u: dirichlet_mode_or_mean(&alpha),
        };
        eta[t - 1] = combine(&eta[t], &step);
    }
    WeightPath { eta }
}

/// `ln p(z_{1:T} | c0, δ)`, the product over `t` of
/// `(δ^{t-1} c0_{z_t} + Σ_{l=0}^{t-2} δ^l 1[z_{t-1-l} = z_t]) /
///  (δ^{t-1} Σ c0 + (1 - δ^{t-1}) / (1 - δ))`.
///
/// At `δ = 1` the geometric sum is replaced by its limit `t - 1`.
pub fn delta_marginal_loglik(c0: &[f64], delta: f64, z: &[usize]) -> Result<f64> {
    check_inputs(c0, z)?;
    check_delta(delta)?;
    let c_total: f64 = c0.iter().sum();
    let mut out = 0.0;
    for t in 1..=z.len() {
        let zt = z[t - 1];
        let lead = delta.powi(t as i32 - 1);
        let mut num = lead * c0[zt];
        let mut pow = 1.0;
        for l in 0..t.saturating_sub(1) {
            if z[t - 2 - l] == zt {
                num += pow;
            }
            pow *= delta;
        }
        let geometric = if delta == 1.0 {
            (t - 1) as f64
        } else {
            (1.0 - lead) / (1.0 - delta)
        };
        out += num.ln() - (lead * c_total + geometric).ln();
    }
    Ok(out)
}

/// Sampling-importance-resampling draw of `δ` with uniform proposals.
pub fn delta_sir_draw<R: Rng + ?Sized>(c0: &[f64], z: &[usize], n_proposals: usize, rng: &mut R) -> Result<f64> {
    if n_proposals == 0 {
        return Err(Error::invalid("SIR needs at least one proposal"));
    }
    let proposals: Vec<f64> = (0..n_proposals).map(|_| rng.sample::<f64, _>(Open01)).collect();
    let logw = proposals
        .iter()
        .map(|&d| delta_marginal_loglik(c0, d, z))
        .collect::<Result<Vec<_>>>()?;
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|v| v / total).collect();
    Ok(proposals[categorical_draw(rng, &probs)])
}

/// `{0.05, 0.10, …, 1.00}`.
pub fn default_delta_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

/// Grid maximizer of the marginal likelihood; ties go to the larger value.
pub fn delta_grid_optimize(c0: &[f64], z: &[usize], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("empty discount grid"));
    }
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &d in grid {
        let v = delta_marginal_loglik(c0, d, z)?;
        let tie = (v - best.1).abs() <= 1e-12 * v.abs().max(1.0);
        if v > best.1 || (tie && d > best.0) {
            best = (d, v);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::stream;

    #[test]
    fn static_counting_at_unit_discount() {
        let s = edp_forward_filter(&[1.0, 1.0], 1.0, &[0, 0, 1]).unwrap();
        assert_eq!(s.c[2], vec![3.0, 2.0]);
    }

    #[test]
    fn hand_recursion() {
        let s = edp_forward_filter(&[1.0, 1.0], 0.5, &[0, 1]).unwrap();
        assert_eq!(s.c, vec![vec![1.5, 0.5], vec![0.75, 1.25]]);
        let mode = edp_backward_mode(&s);
        assert_eq!(mode.eta[1], vec![0.375, 0.625]);
        assert!((mode.eta[0][0] - 0.5625).abs() < 1e-15 && (mode.eta[0][1] - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn symmetric_mode() {
        assert_eq!(dirichlet_mode_or_mean(&[2.0, 2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn unit_discount_sample_is_constant() {
        let s = edp_forward_filter(&[1.0, 1.0], 1.0, &[0, 1, 1, 0]).unwrap();
        let path = edp_backward_sample(&s, &mut stream(3, 0));
        for row in &path.eta {
            assert_eq!(row, &path.eta[3]);
        }
    }

    #[test]
    fn two_step_marginal() {
        let v = delta_marginal_loglik(&[1.0, 1.0], 0.5, &[0, 0]).unwrap();
        assert!((v - (0.5f64.ln() + 0.75f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn single_time_is_flat() {
        let grid = default_delta_grid();
        assert_eq!(delta_grid_optimize(&[1.0, 2.0], &[1], &grid).unwrap(), 1.0);
        let a = delta_marginal_loglik(&[1.0, 2.0], 0.3, &[1]).unwrap();
        assert!((a - (2.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn single_proposal_is_returned() {
        let mut a = stream(9, 1);
        let mut b = stream(9, 1);
        let d = delta_sir_draw(&[1.0, 1.0], &[0, 1, 0], 1, &mut a).unwrap();
        let expected: f64 = b.sample(Open01);
        assert_eq!(d, expected);
    }
}
