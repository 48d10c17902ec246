use crate::error::{Error, Result};

/// The radial sampling law `Pr(r) = S / (r + 1)` over integer radii
/// `r = 1..=R`, with `S` the normalizer `1 / sum_{r=1..R} 1/(r+1)`.
/// Low radii are favored, mimicking natural-image statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPdf {
    pub max_radius: u32,
    /// `probs[r - 1] = Pr(r)`.
    pub probs: Vec<f64>,
    /// The normalizer `S`.
    pub normalizer: f64,
}

/// Build the radial law for radii `1..=max_radius`.
pub fn radial_pdf(max_radius: u32) -> Result<RadialPdf> {
    if max_radius < 1 {
        return Err(Error::InvalidMaxRadius { r: max_radius });
    }
    let sum: f64 = (1..=max_radius).map(|r| 1.0 / (r as f64 + 1.0)).sum();
    let normalizer = 1.0 / sum;
    let probs = (1..=max_radius)
        .map(|r| normalizer / (r as f64 + 1.0))
        .collect();
    Ok(RadialPdf {
        max_radius,
        probs,
        normalizer,
    })
}

impl RadialPdf {
    /// `Pr(r)`; zero outside `1..=max_radius`.
    pub fn prob(&self, r: u32) -> f64 {
        if r >= 1 && r <= self.max_radius {
            self.probs[(r - 1) as usize]
        } else {
            0.0
        }
    }

    /// Draw a radius by inverse CDF from a uniform sample in `[0, 1)`.
    pub fn sample(&self, uniform: f64) -> u32 {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if uniform < acc {
                return i as u32 + 1;
            }
        }
        self.max_radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_matches_hand_computation() {
        // sum = 1/2 + 1/3 = 5/6, S = 6/5, Pr(1) = 0.6, Pr(2) = 0.4
        let pdf = radial_pdf(2).unwrap();
        assert!((pdf.normalizer - 1.2).abs() < 1e-15);
        assert!((pdf.prob(1) - 0.6).abs() < 1e-15);
        assert!((pdf.prob(2) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn single_radius_is_certain() {
        let pdf = radial_pdf(1).unwrap();
        assert!((pdf.prob(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_and_monotonicity() {
        for r_max in [1u32, 2, 5, 16, 23, 100] {
            let pdf = radial_pdf(r_max).unwrap();
            let total: f64 = pdf.probs.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "R={r_max}: sum={total}");
            for w in pdf.probs.windows(2) {
                assert!(w[0] > w[1]);
            }
        }
    }

    #[test]
    fn zero_radius_rejected() {
        assert!(matches!(radial_pdf(0), Err(Error::InvalidMaxRadius { .. })));
    }

    #[test]
    fn inverse_cdf_hits_every_radius() {
        let pdf = radial_pdf(3).unwrap();
        assert_eq!(pdf.sample(0.0), 1);
        assert_eq!(pdf.sample(pdf.prob(1) + 1e-9), 2);
        assert_eq!(pdf.sample(0.999_999), 3);
    }
}
