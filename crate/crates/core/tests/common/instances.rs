//! Random small DLM instances for oracle comparisons.

use dlmix::dlm::{DlmSpec, StatePrior, TimeObs};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub spec: DlmSpec,
    pub obs: Vec<TimeObs>,
    pub prior: StatePrior,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// T <= 4, p <= 2, m <= 2, one or two replicates per step, occasionally none.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_len = rng.random_range(1..=4);
    let p = rng.random_range(1..=2);
    let m = rng.random_range(1..=2);
    let f = DMatrix::from_fn(m, p, |_, _| normal(&mut rng));
    let g = DMatrix::from_fn(p, p, |r, c| if r == c { 1.0 } else { 0.0 } + 0.3 * normal(&mut rng));
    let discount = rng.random_range(0.5..=1.0);
    let spec = DlmSpec::new(f.clone(), g, discount).unwrap();
    let a = DMatrix::from_fn(p, p, |_, _| normal(&mut rng));
    let c0 = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
    let m0 = DVector::from_fn(p, |_, _| normal(&mut rng));
    let prior = StatePrior::new(m0, c0).unwrap();
    let obs = (0..t_len)
        .map(|t| {
            let reps = if t > 0 && rng.random_bool(0.15) { 0 } else { rng.random_range(1..=2) };
            let rows = reps * m;
            let mut ft = DMatrix::zeros(rows, p);
            for r in 0..reps {
                ft.view_mut((r * m, 0), (m, p)).copy_from(&f);
            }
            let y = DVector::from_fn(rows, |_, _| 2.0 * normal(&mut rng));
            let var = DVector::from_fn(rows, |_, _| rng.random_range(0.2..2.0));
            TimeObs::new(ft, y, var).unwrap()
        })
        .collect();
    Instance { spec, obs, prior }
}
