//! Central-difference verification of the analytic gradient.

use rand::seq::index::sample;

use crate::core::Experience;
use crate::error::Result;
use crate::nn::{td_loss, QNetwork};
use crate::seeding;

/// Parameter-count threshold above which only a random subset is checked.
const FULL_CHECK_LIMIT: usize = 10_000;
const SUBSET_SIZE: usize = 200;

/// Compares the analytic TD-loss gradient against central differences with
/// the given probe step and returns the worst relative error.
///
/// Networks with more than 10,000 parameters are probed on a fixed seeded
/// 200-parameter subset; smaller ones are checked exhaustively. The relative
/// error for one parameter is `|a - n| / max(|a| + |n|, 1e-12)`.
pub fn gradient_check(net: &mut QNetwork, batch: &[Experience], step: f64) -> Result<f64> {
    let (_, analytic) = td_loss(net, batch)?;
    let count = net.param_count();
    let indices: Vec<usize> = if count > FULL_CHECK_LIMIT {
        let mut rng = seeding::stream(count as u64, "gradcheck-subset");
        sample(&mut rng, count, SUBSET_SIZE).into_iter().collect()
    } else {
        (0..count).collect()
    };
    let mut worst = 0.0f64;
    for i in indices {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + step;
        let (lp, _) = td_loss(net, batch)?;
        net.params_mut()[i] = orig - step;
        let (lm, _) = td_loss(net, batch)?;
        net.params_mut()[i] = orig;
        let numeric = (lp - lm) / (2.0 * step);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
