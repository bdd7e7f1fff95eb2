//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::QNetwork;

/// Update rule applied to the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    /// theta -= lr * g / sqrt(acc + eps) with acc = rho * acc + (1 - rho) * g^2.
    RmsProp { lr: f64, rho: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::RmsProp {
            lr: 2.5e-4,
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

/// Applies one update in place. RMSProp owns the network's per-parameter
/// accumulator; SGD leaves it untouched.
pub fn optimizer_step(net: &mut QNetwork, gradient: &[f64], cfg: &OptimizerConfig) -> Result<()> {
    if gradient.len() != net.param_count() {
        return Err(Error::LengthMismatch {
            left: gradient.len(),
            right: net.param_count(),
        });
    }
    match *cfg {
        OptimizerConfig::Sgd { lr } => {
            for (p, g) in net.params_mut().iter_mut().zip(gradient) {
                *p -= lr * g;
            }
        }
        OptimizerConfig::RmsProp { lr, rho, eps } => {
            let n = net.param_count();
            for i in 0..n {
                let g = gradient[i];
                let acc = {
                    let a = &mut net.optimizer_state_mut()[i];
                    *a = rho * *a + (1.0 - rho) * g * g;
                    *a
                };
                net.params_mut()[i] -= lr * g / (acc + eps).sqrt();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn unit_net() -> QNetwork {
        let mut net =
            QNetwork::new((1, 1, 1), vec![LayerSpec::Output { width: 1 }], 0.01, 1).unwrap();
        net.params_mut().fill(1.0);
        net
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut net = unit_net();
        optimizer_step(&mut net, &[1.0, 1.0], &OptimizerConfig::Sgd { lr: 0.1 }).unwrap();
        assert!((net.params()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = unit_net();
        for cfg in [OptimizerConfig::default(), OptimizerConfig::Sgd { lr: 0.1 }] {
            optimizer_step(&mut net, &[0.0, 0.0], &cfg).unwrap();
            assert_eq!(net.params(), &[1.0, 1.0]);
        }
    }

    #[test]
    fn rmsprop_first_step_matches_hand_computation() {
        // g = 2, rho = 0.9: acc = 0.1 * 4 = 0.4,
        // delta = -0.01 * 2 / sqrt(0.4 + 1e-8) ~ -0.0316.
        let mut net = unit_net();
        let cfg = OptimizerConfig::RmsProp {
            lr: 0.01,
            rho: 0.9,
            eps: 1e-8,
        };
        optimizer_step(&mut net, &[2.0, 0.0], &cfg).unwrap();
        let expected_delta = -0.01 * 2.0 / (0.4f64 + 1e-8).sqrt();
        assert!((net.params()[0] - (1.0 + expected_delta)).abs() < 1e-15);
        assert!((net.params()[0] - (1.0 - 0.0316)).abs() < 1e-4);
        assert!((net.optimizer_state()[0] - 0.4).abs() < 1e-15);
        // Untouched parameter keeps a zero accumulator.
        assert_eq!(net.params()[1], 1.0);
        assert_eq!(net.optimizer_state()[1], 0.0);
    }

    #[test]
    fn wrong_gradient_length_rejected() {
        let mut net = unit_net();
        assert!(matches!(
            optimizer_step(&mut net, &[1.0], &OptimizerConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
