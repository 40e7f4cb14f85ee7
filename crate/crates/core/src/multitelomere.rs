//! Combinatorics of the 2k-telomere model.
//!
//! At each division every chromosome i shortens exactly one of its two
//! telomeres, with index i or i+k. The set of shortened indices is drawn
//! uniformly among the 2^k possibilities, and each shortened telomere loses
//! an independent amount drawn from g.

use crate::distributions::ShorteningLaw;
use crate::error::{domain, Error, Result};
use rand::Rng;
use std::num::NonZeroU32;

/// Largest k for which the shortening sets are materialized.
pub const MAX_ENUMERATION_K: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChromosomeCount(NonZeroU32);

impl ChromosomeCount {
    pub fn new(k: u32) -> Result<Self> {
        NonZeroU32::new(k)
            .map(ChromosomeCount)
            .ok_or_else(|| Error::Domain("chromosome count must be at least 1".into()))
    }

    pub fn get(&self) -> u32 {
        self.0.get()
    }

    /// Number of telomeres, 2k.
    pub fn telomeres(&self) -> usize {
        2 * self.get() as usize
    }
}

/// Indices (1-based, sorted) of the telomeres shortened at one division.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShorteningSet {
    indices: Vec<u32>,
}

impl ShorteningSet {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn contains(&self, i: u32) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Set obtained from a choice bit per chromosome (bit i-1 set means
    /// index i+k is shortened).
    fn from_choices(k: u32, choices: u64) -> Self {
        let mut indices: Vec<u32> = (1..=k)
            .map(|i| if choices >> (i - 1) & 1 == 1 { i + k } else { i })
            .collect();
        indices.sort_unstable();
        ShorteningSet { indices }
    }
}

/// All shortening sets for k chromosomes, in lexicographic order.
pub fn enumerate_ik(k: ChromosomeCount) -> Result<Vec<ShorteningSet>> {
    let k = k.get();
    if k > MAX_ENUMERATION_K {
        return Err(Error::Capacity(format!(
            "enumerating 2^{k} shortening sets is capped at k = {MAX_ENUMERATION_K}; sample with MuMeasure instead"
        )));
    }
    let mut sets: Vec<ShorteningSet> = (0..1u64 << k).map(|c| ShorteningSet::from_choices(k, c)).collect();
    sets.sort_unstable();
    Ok(sets)
}

/// Number of shortening sets containing all the given indices (one or two).
pub fn count_sets_containing(k: ChromosomeCount, indices: &[u32]) -> Result<u64> {
    let kk = k.get();
    if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > 2 * kk) {
        return domain(format!("index {bad} is outside 1..={}", 2 * kk));
    }
    match *indices {
        [_] => Ok(1u64 << (kk - 1)),
        [a, b] => {
            if a == b {
                return domain("the two indices must be distinct");
            }
            if a % kk == b % kk || kk == 1 {
                Ok(0)
            } else {
                Ok(1u64 << (kk - 2))
            }
        }
        _ => domain("pass one or two indices"),
    }
}

/// Law of the shortening vector of one division in the 2k model.
#[derive(Debug, Clone, PartialEq)]
pub struct MuMeasure {
    k: ChromosomeCount,
    law: ShorteningLaw,
}

impl MuMeasure {
    pub fn new(k: ChromosomeCount, law: ShorteningLaw) -> Self {
        MuMeasure { k, law }
    }

    pub fn k(&self) -> ChromosomeCount {
        self.k
    }

    pub fn law(&self) -> &ShorteningLaw {
        &self.law
    }

    /// First moment of each coordinate and `Σ_{ℓ,ℓ'} ∫ v_ℓ v_ℓ' dμ`.
    pub fn moments(&self) -> (f64, f64) {
        let k = self.k.get() as f64;
        let (m1, m2) = (self.law.m1(), self.law.m2());
        (0.5 * m1, m1 * m1 * k * k + (m2 - m1 * m1) * k)
    }

    /// Laplace transform at `s` in the direction (1,…,1): `L(g)(s)^k`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        Ok(self.law.laplace(s)?.powi(self.k.get() as i32))
    }

    /// Fills `out` (length 2k) with one draw from μ.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let k = self.k.get() as usize;
        assert_eq!(out.len(), 2 * k, "output must have 2k slots");
        out.fill(0.0);
        for i in 0..k {
            let j = if rng.gen::<bool>() { i + k } else { i };
            out[j] = self.law.sample(rng);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; self.k.telomeres()];
        self.sample_into(rng, &mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kc(k: u32) -> ChromosomeCount {
        ChromosomeCount::new(k).unwrap()
    }

    #[test]
    fn small_enumerations() {
        let s: Vec<Vec<u32>> = enumerate_ik(kc(2)).unwrap().iter().map(|s| s.indices().to_vec()).collect();
        assert_eq!(s, vec![vec![1, 2], vec![1, 4], vec![2, 3], vec![3, 4]]);
        let s: Vec<Vec<u32>> = enumerate_ik(kc(1)).unwrap().iter().map(|s| s.indices().to_vec()).collect();
        assert_eq!(s, vec![vec![1], vec![2]]);
        assert!(matches!(enumerate_ik(kc(21)), Err(Error::Capacity(_))));
        assert!(ChromosomeCount::new(0).is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(count_sets_containing(kc(3), &[2]).unwrap(), 4);
        assert_eq!(count_sets_containing(kc(2), &[1, 3]).unwrap(), 0);
        assert_eq!(count_sets_containing(kc(2), &[1, 2]).unwrap(), 1);
        assert_eq!(count_sets_containing(kc(1), &[1, 2]).unwrap(), 0);
        assert!(count_sets_containing(kc(2), &[5]).is_err());
        assert!(count_sets_containing(kc(2), &[0]).is_err());
    }

    #[test]
    fn moments_and_laplace() {
        let g = ShorteningLaw::uniform(1.0).unwrap();
        let (c, s) = MuMeasure::new(kc(1), g.clone()).moments();
        assert_eq!(c, 0.25);
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
        let (_, s) = MuMeasure::new(kc(3), g.clone()).moments();
        assert!((s - 2.5).abs() < 1e-14);
        let mu = MuMeasure::new(kc(2), g.clone());
        assert_eq!(mu.laplace(0.0).unwrap(), 1.0);
        assert!((mu.laplace(1.0).unwrap() - 0.399_576_400_893_728).abs() < 1e-14);
        assert_eq!(MuMeasure::new(kc(1), g.clone()).laplace(0.7).unwrap(), g.laplace(0.7).unwrap());
        assert!(mu.laplace(-1.0).is_err());
    }

    #[test]
    fn samples_have_k_nonzero_coordinates() {
        let mu = MuMeasure::new(kc(4), ShorteningLaw::uniform(1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let v = mu.sample(&mut rng);
            assert_eq!(v.iter().filter(|&&x| x > 0.0).count(), 4);
            for i in 0..4 {
                assert!(v[i] == 0.0 || v[i + 4] == 0.0);
            }
        }
    }
}
