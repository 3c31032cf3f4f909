use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SizeComponent {
    pub weight: f64,
    pub lower_mm3: f64,
    pub upper_mm3: f64,
}

/// Mixture of uniform distributions over lesion volume in mm^3.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<SizeComponent>", into = "Vec<SizeComponent>"))]
pub struct SizeDistribution {
    components: Vec<SizeComponent>,
}

impl SizeDistribution {
    pub fn new(components: Vec<SizeComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("size_dist", "needs at least one component"));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::param("size_dist", "weights must be > 0"));
            }
            if !(c.lower_mm3 > 0.0 && c.lower_mm3 < c.upper_mm3 && c.upper_mm3.is_finite()) {
                return Err(Error::param("size_dist", "each component needs 0 < lower < upper"));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("size_dist", "weights must sum to 1"));
        }
        Ok(Self { components })
    }

    pub fn uniform(lower_mm3: f64, upper_mm3: f64) -> Result<Self> {
        Self::new(vec![SizeComponent { weight: 1.0, lower_mm3, upper_mm3 }])
    }

    /// U(20000, 80000) mm^3, the tumour setting.
    pub fn tumor() -> Self {
        Self::uniform(20_000.0, 80_000.0).expect("valid constant")
    }

    /// 1/2 U(200, 300) + 1/2 U(5000, 30000) mm^3, the stroke setting.
    pub fn stroke() -> Self {
        Self::new(vec![
            SizeComponent { weight: 0.5, lower_mm3: 200.0, upper_mm3: 300.0 },
            SizeComponent { weight: 0.5, lower_mm3: 5_000.0, upper_mm3: 30_000.0 },
        ])
        .expect("valid constant")
    }

    pub fn components(&self) -> &[SizeComponent] {
        &self.components
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("nonempty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        rng.random_range(chosen.lower_mm3..chosen.upper_mm3)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.components.iter().any(|c| v >= c.lower_mm3 && v <= c.upper_mm3)
    }
}

impl TryFrom<Vec<SizeComponent>> for SizeDistribution {
    type Error = Error;
    fn try_from(v: Vec<SizeComponent>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SizeDistribution> for Vec<SizeComponent> {
    fn from(d: SizeDistribution) -> Self {
        d.components
    }
}
