//! One-dimensional gray-level profiles and their Gaussian smoothing.

use crate::error::{Error, Result};

/// Sequence of gray levels with per-entry validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile1D {
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl Profile1D {
    pub fn new(values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("profile must have at least one entry"));
        }
        if values.len() != valid.len() {
            return Err(Error::BufferSize {
                expected: values.len(),
                found: valid.len(),
            });
        }
        Ok(Self { values, valid })
    }

    /// Profile with every entry valid.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![true; n])
    }

    /// Builds a profile from optional entries; `None` becomes an invalid entry.
    pub fn from_options(entries: &[Option<f64>]) -> Result<Self> {
        let values = entries.iter().map(|e| e.unwrap_or(0.0)).collect();
        let valid = entries.iter().map(Option::is_some).collect();
        Self::new(values, valid)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Normalized 1D Gaussian weights, `size` taps centered on the middle one.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Gaussian smoothing of the valid entries.
///
/// Near the ends and next to invalid entries the kernel is truncated and
/// re-normalized over the valid samples it still covers; invalid entries stay
/// invalid.
pub fn smooth_profile(profile: &Profile1D, kernel_size: usize, sigma: f64) -> Result<Profile1D> {
    if kernel_size % 2 == 0 {
        return Err(Error::param(format!("kernel size must be odd, got {kernel_size}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::param(format!("kernel sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel(kernel_size, sigma);
    let half = (kernel_size / 2) as i64;
    let n = profile.len() as i64;
    let values = (0..n)
        .map(|i| {
            if !profile.valid[i as usize] {
                return profile.values[i as usize];
            }
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (k, &w) in kernel.iter().enumerate() {
                let j = i + k as i64 - half;
                if (0..n).contains(&j) && profile.valid[j as usize] {
                    acc += w * profile.values[j as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect();
    Ok(Profile1D {
        values,
        valid: profile.valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_profile_is_fixed() {
        let p = Profile1D::from_values(vec![3.25; 12]).unwrap();
        let s = smooth_profile(&p, 7, 1.0).unwrap();
        for &v in s.values() {
            assert_abs_diff_eq!(v, 3.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let mut v = vec![0.0; 7];
        v[3] = 1.0;
        let s = smooth_profile(&Profile1D::from_values(v).unwrap(), 7, 1.0).unwrap();
        // Center entry sees the full kernel; the others see truncated kernels
        // whose re-normalization is checked separately.
        let k = gaussian_kernel(7, 1.0);
        assert_abs_diff_eq!(s.values()[3], k[3], epsilon = 1e-15);
        let mut long = vec![0.0; 21];
        long[10] = 1.0;
        let s = smooth_profile(&Profile1D::from_values(long).unwrap(), 7, 1.0).unwrap();
        for (i, &w) in k.iter().enumerate() {
            assert_abs_diff_eq!(s.values()[7 + i], w, epsilon = 1e-15);
        }
    }

    #[test]
    fn kernel_weights() {
        let k = gaussian_kernel(7, 1.0);
        let total: f64 = (-3..=3).map(|d: i32| (-(d * d) as f64 / 2.0).exp()).sum();
        assert_abs_diff_eq!(k[3], 1.0 / total, epsilon = 1e-15);
        assert_abs_diff_eq!(k[0], (-4.5f64).exp() / total, epsilon = 1e-15);
        assert_abs_diff_eq!(k.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn boundary_renormalizes_over_valid_samples() {
        let p = Profile1D::new(vec![1.0, 2.0, 100.0, 4.0], vec![true, true, false, true]).unwrap();
        let s = smooth_profile(&p, 7, 1.0).unwrap();
        assert!(!s.validity()[2]);
        // Entry 0 mixes only entries 0, 1 and 3.
        let k = gaussian_kernel(7, 1.0);
        let e0 = (k[3] * 1.0 + k[4] * 2.0 + k[6] * 4.0) / (k[3] + k[4] + k[6]);
        assert_abs_diff_eq!(s.values()[0], e0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_even_kernel() {
        let p = Profile1D::from_values(vec![1.0; 3]).unwrap();
        assert!(smooth_profile(&p, 6, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn smoothing_is_a_convex_combination(values in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
            let p = Profile1D::from_values(values.clone()).unwrap();
            let s = smooth_profile(&p, 7, 1.0).unwrap();
            proptest::prop_assert_eq!(s.len(), p.len());
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &v in s.values() {
                proptest::prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
