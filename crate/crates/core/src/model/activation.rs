use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
    Sigmoid,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Softplus,
        Activation::Sigmoid,
        Activation::Relu,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Softplus => softplus(z),
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// `σ′(z)`; relu uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => sigmoid(z),
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Lipschitz constant ℓ = sup |σ′|.
    pub fn lipschitz_bound(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    /// Smoothness constant β = sup |σ″|; infinite for relu.
    pub fn smoothness_bound(self) -> f64 {
        match self {
            Activation::Identity => 0.0,
            // |tanh″| peaks at tanh z = 1/√3
            Activation::Tanh => 4.0 / (3.0 * 3f64.sqrt()),
            Activation::Softplus => 0.25,
            // |s(1−s)(1−2s)| peaks at s = 1/2 ± 1/(2√3)
            Activation::Sigmoid => 1.0 / (6.0 * 3f64.sqrt()),
            Activation::Relu => f64::INFINITY,
        }
    }

    pub fn is_smooth(self) -> bool {
        self.smoothness_bound().is_finite()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ModelError::UnsupportedActivation(s.to_string()))
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    // log(1 + e^z) without overflow
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in Activation::ALL {
            for _ in 0..100 {
                let z: f64 = rng.random_range(-4.0..4.0);
                if act == Activation::Relu && z.abs() < 1e-3 {
                    continue;
                }
                let h = 1e-6 * (1.0 + z.abs());
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!(
                    (fd - act.derivative(z)).abs() < 1e-6,
                    "{act} at {z}: {fd} vs {}",
                    act.derivative(z)
                );
            }
        }
    }

    #[test]
    fn derivative_bounded_by_lipschitz() {
        for act in Activation::ALL {
            for i in -400..=400 {
                let z = i as f64 * 0.02;
                assert!(act.derivative(z).abs() <= act.lipschitz_bound() + 1e-15);
            }
        }
    }

    #[test]
    fn smoothness_bound_is_tight_numerically() {
        for act in [Activation::Tanh, Activation::Softplus, Activation::Sigmoid] {
            let mut peak: f64 = 0.0;
            for i in -40000..=40000 {
                let z = i as f64 * 2e-4;
                let h = 1e-5;
                let second = (act.derivative(z + h) - act.derivative(z - h)) / (2.0 * h);
                peak = peak.max(second.abs());
            }
            assert!((peak - act.smoothness_bound()).abs() < 1e-6, "{act}: {peak}");
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("gelu".parse::<Activation>().is_err());
        assert!(!Activation::Relu.is_smooth());
    }

    #[test]
    fn softplus_extremes() {
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
