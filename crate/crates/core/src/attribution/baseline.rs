use log::warn;
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// Damage-free images drawn for a baseline unless configured otherwise.
pub const DEFAULT_BASELINE_SAMPLES: usize = 10;

fn default_samples() -> usize {
    DEFAULT_BASELINE_SAMPLES
}

/// Reference input(s) for path and difference-based methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSpec {
    Zero,
    /// Mean of `n_samples` damage-free images.
    MeanDamageFree {
        #[serde(default = "default_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `n_samples` damage-free images used as a set.
    DamageFreeDistribution {
        #[serde(default = "default_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
    },
    /// One image of i.i.d. `N(0, σ²)` pixels.
    RandomNormal {
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec::MeanDamageFree {
            n_samples: DEFAULT_BASELINE_SAMPLES,
            seed: 0,
        }
    }
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineSpec::MeanDamageFree { n_samples, .. } | BaselineSpec::DamageFreeDistribution { n_samples, .. }
                if n_samples == 0 =>
            {
                Err(invalid("baseline n_samples must be at least 1"))
            }
            BaselineSpec::RandomNormal { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(invalid("baseline sigma must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_pool(&self) -> bool {
        matches!(
            self,
            BaselineSpec::MeanDamageFree { .. } | BaselineSpec::DamageFreeDistribution { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineSpec::Zero => "zero",
            BaselineSpec::MeanDamageFree { .. } => "mean_damage_free",
            BaselineSpec::DamageFreeDistribution { .. } => "damage_free_distribution",
            BaselineSpec::RandomNormal { .. } => "random_normal",
        }
    }

    /// The baseline set; `pool` holds damage-free images of the input's shape.
    pub fn samples(&self, shape: &[usize], pool: &[Tensor]) -> Result<Vec<Tensor>> {
        self.validate()?;
        match *self {
            BaselineSpec::Zero => Ok(vec![Tensor::zeros(shape)]),
            BaselineSpec::RandomNormal { sigma, seed } => {
                let mut rng = rng_for(seed, &[]);
                let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
                Ok(vec![Tensor::from_fn(shape, |_| normal.sample(&mut rng) as f32)])
            }
            BaselineSpec::MeanDamageFree { n_samples, seed } => {
                let drawn = draw(pool, shape, n_samples, seed)?;
                Ok(vec![Tensor::mean_of(&drawn)?])
            }
            BaselineSpec::DamageFreeDistribution { n_samples, seed } => draw(pool, shape, n_samples, seed),
        }
    }

    /// A single reference image: the mean of [`BaselineSpec::samples`].
    pub fn reference(&self, shape: &[usize], pool: &[Tensor]) -> Result<Tensor> {
        let s = self.samples(shape, pool)?;
        if s.len() == 1 {
            return Ok(s.into_iter().next().expect("one sample"));
        }
        Tensor::mean_of(&s)
    }
}

/// `n` images drawn without replacement, in draw order.
fn draw(pool: &[Tensor], shape: &[usize], n: usize, seed: u64) -> Result<Vec<Tensor>> {
    if pool.is_empty() {
        return Err(Error::Empty("damage-free baseline pool"));
    }
    if let Some(bad) = pool.iter().find(|t| t.shape() != shape) {
        return Err(Error::Shape {
            expected: shape.to_vec(),
            actual: bad.shape().to_vec(),
        });
    }
    let n = if n > pool.len() {
        warn!(
            "baseline asks for {n} samples but the pool has {}; using all",
            pool.len()
        );
        pool.len()
    } else {
        n
    };
    let mut rng = rng_for(seed, &[]);
    Ok(sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution() {
        let pool: Vec<Tensor> = (0..4).map(|i| Tensor::full(&[1, 2, 2], i as f32)).collect();
        let mean = BaselineSpec::MeanDamageFree { n_samples: 4, seed: 1 }
            .reference(&[1, 2, 2], &pool)
            .unwrap();
        assert_eq!(mean.data(), &[1.5; 4]);
        let set = BaselineSpec::DamageFreeDistribution { n_samples: 2, seed: 1 }
            .samples(&[1, 2, 2], &pool)
            .unwrap();
        assert_eq!(set.len(), 2);
        assert_ne!(set[0], set[1]);
        assert!(BaselineSpec::MeanDamageFree { n_samples: 1, seed: 0 }
            .samples(&[1, 2, 2], &[])
            .is_err());
        assert!(BaselineSpec::DamageFreeDistribution { n_samples: 0, seed: 0 }
            .validate()
            .is_err());
        assert_eq!(BaselineSpec::Zero.reference(&[2], &[]).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn serde_defaults() {
        let b: BaselineSpec = serde_json::from_str(r#"{"kind": "mean_damage_free"}"#).unwrap();
        assert_eq!(b, BaselineSpec::default());
        assert!(serde_json::from_str::<BaselineSpec>(r#"{"kind": "mean_damage_free", "n": 1}"#).is_err());
    }
}
