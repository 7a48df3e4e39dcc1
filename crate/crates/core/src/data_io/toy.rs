use rand::Rng;
use rand_distr::StandardNormal;

use super::{Label, LabeledDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::rng;

/// Mean of the blue (label -1) blob.
pub const BLUE_MEAN: [f64; 2] = [-2.0, 0.0];
/// Mean of the larger red (label +1) blob.
pub const RED_MAJOR_MEAN: [f64; 2] = [2.0, 0.0];
/// Mean of the upper red blob that receives the minority share of red mass.
/// It sits above the blue side, so a separator fitted without any of its
/// points (the vertical line between the two lower blobs) cuts it off.
pub const RED_MINOR_MEAN: [f64; 2] = [-6.0, 12.0];
/// Per-coordinate standard deviation shared by all blobs.
pub const BLOB_STD: f64 = 1.0;
/// Probability that a point is red.
pub const RED_FRACTION: f64 = 0.5;

const TOY_STREAM: u64 = 0x544f_5900;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyComponent {
    Blue,
    RedMajor,
    RedMinor,
}

/// Three isotropic Gaussian blobs in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyMixture {
    pub blue_mean: [f64; 2],
    pub red_major_mean: [f64; 2],
    pub red_minor_mean: [f64; 2],
    pub std: f64,
    pub red_fraction: f64,
    pub minority_fraction: f64,
}

/// A drawn sample together with the blob each point came from.
#[derive(Clone, Debug)]
pub struct ToySample {
    pub dataset: LabeledDataset,
    pub components: Vec<ToyComponent>,
}

impl ToyMixture {
    /// The named constants with 20% of red mass in the upper blob.
    pub fn standard() -> Self {
        Self::new(0.2).expect("0.2 lies in (0, 1)")
    }

    pub fn new(minority_fraction: f64) -> Result<Self> {
        if !(minority_fraction > 0.0 && minority_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "minority fraction {minority_fraction} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            blue_mean: BLUE_MEAN,
            red_major_mean: RED_MAJOR_MEAN,
            red_minor_mean: RED_MINOR_MEAN,
            std: BLOB_STD,
            red_fraction: RED_FRACTION,
            minority_fraction,
        })
    }

    /// Draws `n` points from stream `stream_id` of `seed`.
    pub fn sample(&self, n: usize, seed: u64, stream_id: u64) -> ToySample {
        let mut rng = rng::stream(seed, TOY_STREAM ^ stream_id);
        let mut examples = Vec::with_capacity(n);
        let mut components = Vec::with_capacity(n);
        for _ in 0..n {
            let (component, example) = self.draw(&mut rng);
            examples.push(example);
            components.push(component);
        }
        ToySample {
            dataset: LabeledDataset::from_parts(examples, 2, None),
            components,
        }
    }

    /// One point from an existing generator.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (ToyComponent, LabeledExample) {
        let component = if rng.random::<f64>() < self.red_fraction {
            if rng.random::<f64>() < self.minority_fraction {
                ToyComponent::RedMinor
            } else {
                ToyComponent::RedMajor
            }
        } else {
            ToyComponent::Blue
        };
        let (mean, label) = match component {
            ToyComponent::Blue => (self.blue_mean, Label::Negative),
            ToyComponent::RedMajor => (self.red_major_mean, Label::Positive),
            ToyComponent::RedMinor => (self.red_minor_mean, Label::Positive),
        };
        let x = mean[0] + self.std * rng.sample::<f64, _>(StandardNormal);
        let y = mean[1] + self.std * rng.sample::<f64, _>(StandardNormal);
        (component, LabeledExample::from_dense(&[x, y], label))
    }
}

/// `n` two-dimensional points (not bias-augmented) from the standard toy
/// mixture with the given upper-blob share of red mass.
pub fn toy_gaussian_mixture(n: usize, minority_fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 4 {
        return Err(Error::invalid(format!("toy sample size {n} is below 4")));
    }
    Ok(ToyMixture::new(minority_fraction)?.sample(n, seed, 0).dataset)
}
