use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::AttributionMap;
use crate::error::{invalid, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// Test-time augmentations: `combinations` distinct draws from the product of
/// `flips` and `intensity_factors`. When the product is no larger than
/// `combinations`, all of it is used in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugSmoothConfig {
    /// `(horizontal, vertical)` flip pairs.
    pub flips: Vec<(bool, bool)>,
    pub intensity_factors: Vec<f32>,
    pub combinations: usize,
    pub seed: u64,
}

impl Default for AugSmoothConfig {
    fn default() -> Self {
        Self {
            flips: vec![(false, false), (true, false), (false, true), (true, true)],
            intensity_factors: vec![0.9, 1.0, 1.1],
            combinations: 6,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    pub h_flip: bool,
    pub v_flip: bool,
    pub factor: f32,
}

impl AugSmoothConfig {
    pub fn identity() -> Self {
        Self {
            flips: vec![(false, false)],
            intensity_factors: vec![1.0],
            combinations: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.flips.is_empty() || self.intensity_factors.is_empty() || self.combinations == 0 {
            return Err(invalid("augmentation set is empty"));
        }
        if self.intensity_factors.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(invalid("intensity factors must be positive"));
        }
        Ok(())
    }

    pub fn augmentations(&self) -> Result<Vec<Augmentation>> {
        self.validate()?;
        let all: Vec<Augmentation> = self
            .flips
            .iter()
            .flat_map(|&(h_flip, v_flip)| {
                self.intensity_factors
                    .iter()
                    .map(move |&factor| Augmentation { h_flip, v_flip, factor })
            })
            .collect();
        if all.len() <= self.combinations {
            return Ok(all);
        }
        let mut rng = rng_for(self.seed, &[]);
        let mut idx = sample(&mut rng, all.len(), self.combinations).into_vec();
        idx.sort_unstable();
        Ok(idx.into_iter().map(|i| all[i]).collect())
    }
}

/// Averages `base` over augmented copies of `x`, undoing each flip on its map.
pub fn aug_smooth(
    x: &Tensor,
    cfg: &AugSmoothConfig,
    mut base: impl FnMut(&Tensor) -> Result<AttributionMap>,
) -> Result<AttributionMap> {
    let augs = cfg.augmentations()?;
    let mut acc: Option<(Vec<f64>, AttributionMap)> = None;
    for a in &augs {
        let mut xa = x.flip(a.h_flip, a.v_flip)?;
        if a.factor != 1.0 {
            xa = xa.map(|v| v * a.factor);
        }
        let map = base(&xa)?;
        let back = map.values.flip(a.h_flip, a.v_flip)?;
        match &mut acc {
            None => acc = Some((back.data().iter().map(|&v| v as f64).collect(), map)),
            Some((sum, _)) => {
                for (s, &v) in sum.iter_mut().zip(back.data()) {
                    *s += v as f64;
                }
            }
        }
    }
    let (sum, first) = acc.expect("at least one augmentation");
    let n = augs.len() as f64;
    let values = Tensor::new(
        first.values.shape().to_vec(),
        sum.iter().map(|&s| (s / n) as f32).collect(),
    )
    .expect("map shape");
    AttributionMap::new(values, &format!("{}+augsmooth", first.method), first.class_index)
}
