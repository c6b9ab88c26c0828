//! Small synthetic panels with known memberships.

use dlmix::io::cluster_mean;
use dlmix::TimeSeriesPanel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `per` series around each of the two generator mean paths with a small
/// noise SD, so the clusters are separated by many noise SDs at every time.
pub fn separable_panel(per: usize, noise_sd: f64, seed: u64) -> (TimeSeriesPanel, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_len = 60;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * per {
        let j = i / per;
        labels.push(j);
        values.push(
            (1..=t_len)
                .map(|t| cluster_mean(j, t) + noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect::<Vec<f64>>(),
        );
    }
    let ids = (0..2 * per).map(|i| format!("s{i:02}")).collect();
    (TimeSeriesPanel::from_univariate(ids, &values).unwrap(), labels)
}
