use serde::{Deserialize, Serialize};

/// Dense membership flags over grid cells or state indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(len: usize) -> Self {
        Mask { bits: vec![false; len] }
    }

    pub fn full(len: usize) -> Self {
        Mask { bits: vec![true; len] }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Mask::new(len);
        for i in indices {
            m.insert(i);
        }
        m
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Returns true if the bit was newly set.
    #[inline]
    pub fn insert(&mut self, i: usize) -> bool {
        !std::mem::replace(&mut self.bits[i], true)
    }

    #[inline]
    pub fn remove(&mut self, i: usize) -> bool {
        std::mem::replace(&mut self.bits[i], false)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn none(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, b)| b.then_some(i))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert_eq!(self.len(), other.len(), "mask length mismatch");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.len() == other.len() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}
