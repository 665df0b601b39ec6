//! Mergeable sample moments.

use serde::Serialize;

use crate::real::Real;

/// Count, mean and centered second moment of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments<T> {
    pub count: u64,
    pub mean: T,
    pub m2: T,
}

impl<T: Real> Default for Moments<T> {
    fn default() -> Self {
        Self {
            count: 0,
            mean: T::zero(),
            m2: T::zero(),
        }
    }
}

impl<T: Real> Moments<T> {
    pub fn push(&mut self, v: T) {
        self.count += 1;
        let n = T::from_u64(self.count).unwrap();
        let delta = v - self.mean;
        self.mean += delta / n;
        self.m2 += delta * (v - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let na = T::from_u64(self.count).unwrap();
        let nb = T::from_u64(other.count).unwrap();
        let n = na + nb;
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> T {
        if self.count < 2 {
            T::zero()
        } else {
            self.m2 / T::from_u64(self.count - 1).unwrap()
        }
    }

    pub fn std_error(&self) -> T {
        if self.count == 0 {
            T::zero()
        } else {
            (self.variance() / T::from_u64(self.count).unwrap()).sqrt()
        }
    }
}

/// Reduces a sequence with a fixed balanced binary tree, so the result depends
/// only on the order of `parts`.
pub fn reduce_pairwise<T: Real>(parts: &[Moments<T>]) -> Moments<T> {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            reduce_pairwise(l).merge(&reduce_pairwise(r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merged_moments_match_direct(v in prop::collection::vec(-10.0f64..10.0, 2..200), split in 0usize..200) {
            let split = split.min(v.len());
            let mut all = Moments::default();
            v.iter().for_each(|x| all.push(*x));
            let mut a = Moments::default();
            let mut b = Moments::default();
            v[..split].iter().for_each(|x| a.push(*x));
            v[split..].iter().for_each(|x| b.push(*x));
            let m = a.merge(&b);
            prop_assert_eq!(m.count, all.count);
            prop_assert!((m.mean - all.mean).abs() < 1e-10);
            prop_assert!((m.variance() - all.variance()).abs() < 1e-8 * (1.0 + all.variance()));
        }
    }

    #[test]
    fn std_error_of_known_sample() {
        let mut m = Moments::<f64>::default();
        [1.0, 2.0, 3.0, 4.0].iter().for_each(|x| m.push(*x));
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.std_error() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
