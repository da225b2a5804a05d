use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SimError, MAX_TREATMENTS};

/// A subset of the `k` base treatments, bit `j` set when treatment `j` is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreatmentSet {
    mask: u32,
    k: u8,
}

impl TreatmentSet {
    pub fn new(mask: u32, k: usize) -> Result<Self, SimError> {
        if k == 0 || k > MAX_TREATMENTS {
            return Err(SimError::Config(format!("k must be in 1..={MAX_TREATMENTS}, got {k}")));
        }
        if mask >> k != 0 {
            return Err(SimError::MaskOutOfRange { mask, k });
        }
        Ok(Self { mask, k: k as u8 })
    }

    /// Like [`TreatmentSet::new`] but also rejects the empty set.
    pub fn non_empty(mask: u32, k: usize) -> Result<Self, SimError> {
        let t = Self::new(mask, k)?;
        if t.is_empty() {
            return Err(SimError::EmptyTreatmentSet);
        }
        Ok(t)
    }

    pub fn from_indices(indices: &[usize], k: usize) -> Result<Self, SimError> {
        let mut mask = 0u32;
        for &j in indices {
            if j >= k {
                return Err(SimError::MaskOutOfRange { mask: 1 << j.min(31), k });
            }
            mask |= 1 << j;
        }
        Self::new(mask, k)
    }

    /// The set of all `k` treatments.
    pub fn complete(k: usize) -> Result<Self, SimError> {
        Self::new(((1u64 << k) - 1) as u32, k)
    }

    /// Every non-empty subset of `k` treatments, ascending by mask.
    pub fn all_non_empty(k: usize) -> impl Iterator<Item = TreatmentSet> {
        let k8 = k as u8;
        (1u32..(1u32 << k)).map(move |mask| TreatmentSet { mask, k: k8 })
    }

    pub fn mask(self) -> u32 {
        self.mask
    }

    pub fn k(self) -> usize {
        usize::from(self.k)
    }

    pub fn len(self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.mask == 0
    }

    pub fn contains(self, j: usize) -> bool {
        j < self.k() && self.mask & (1 << j) != 0
    }

    /// Treatment indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.mask;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(j)
            }
        })
    }

    pub fn hamming(self, other: TreatmentSet) -> u32 {
        (self.mask ^ other.mask).count_ones()
    }
}

impl fmt::Display for TreatmentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterates_ascending() {
        let t = TreatmentSet::new(0b1011_0010, 8).unwrap();
        assert_eq!(t.iter().collect::<Vec<_>>(), vec![1, 4, 5, 7]);
        assert_eq!(t.len(), 4);
        assert_eq!(t.to_string(), "{1,4,5,7}");
    }

    #[test]
    fn rejects_out_of_range_and_empty() {
        assert!(TreatmentSet::new(0b100, 2).is_err());
        assert_eq!(TreatmentSet::non_empty(0, 3), Err(SimError::EmptyTreatmentSet));
        assert!(TreatmentSet::new(1, 21).is_err());
        assert!(TreatmentSet::from_indices(&[3], 3).is_err());
    }

    #[test]
    fn enumerates_all_non_empty() {
        assert_eq!(TreatmentSet::all_non_empty(3).count(), 7);
        assert_eq!(TreatmentSet::complete(20).unwrap().len(), 20);
    }
}
