//! Activation matrices (diagonal 0/1 masks) and per-layer patterns.
//!
//! A mask is stored as its width plus a bitset of its support. Neuron
//! indices are zero-based throughout the crate.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct ActivationMatrix {
    width: usize,
    bits: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: usize,
    support: Vec<usize>,
}

impl TryFrom<MaskRepr> for ActivationMatrix {
    type Error = crate::Error;
    fn try_from(r: MaskRepr) -> Result<Self> {
        ActivationMatrix::from_support(r.support, r.width)
    }
}

impl From<ActivationMatrix> for MaskRepr {
    fn from(m: ActivationMatrix) -> Self {
        MaskRepr {
            width: m.width,
            support: m.support(),
        }
    }
}

fn words(width: usize) -> usize {
    width.div_ceil(64)
}

impl ActivationMatrix {
    /// The unique mask of width `width` whose support is `support`.
    pub fn from_support(support: impl IntoIterator<Item = usize>, width: usize) -> Result<Self> {
        if width == 0 {
            return invalid("mask width must be positive");
        }
        let mut mask = Self::zero(width);
        for j in support {
            if j >= width {
                return invalid(format!("support index {j} outside 0..{width}"));
            }
            mask.set(j, true);
        }
        Ok(mask)
    }

    pub fn zero(width: usize) -> Self {
        ActivationMatrix {
            width,
            bits: vec![0; words(width)],
        }
    }

    pub fn identity(width: usize) -> Self {
        let mut mask = Self::zero(width);
        for j in 0..width {
            mask.set(j, true);
        }
        mask
    }

    /// Mask whose bit `j` is set iff `values[j] > 0`.
    pub fn from_positive(values: &[f64]) -> Self {
        let mut mask = Self::zero(values.len());
        for (j, &v) in values.iter().enumerate() {
            if v > 0.0 {
                mask.set(j, true);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_active(&self, j: usize) -> bool {
        j < self.width && self.bits[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, j: usize, active: bool) {
        assert!(j < self.width, "mask index out of range");
        if active {
            self.bits[j / 64] |= 1 << (j % 64);
        } else {
            self.bits[j / 64] &= !(1 << (j % 64));
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.width).filter(|&j| self.is_active(j)).collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn is_identity(&self) -> bool {
        self.count() == self.width
    }

    /// Whether `self`'s support is contained in `other`'s.
    pub fn is_subset(&self, other: &ActivationMatrix) -> bool {
        self.width == other.width && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Support intersection, i.e. the matrix product of two masks.
    pub fn and(&self, other: &ActivationMatrix) -> Result<ActivationMatrix> {
        if self.width != other.width {
            return invalid(format!("mask width mismatch: {} vs {}", self.width, other.width));
        }
        Ok(ActivationMatrix {
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect(),
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        let diag: Vec<f64> = (0..self.width)
            .map(|j| if self.is_active(j) { 1.0 } else { 0.0 })
            .collect();
        Matrix::diag(&diag)
    }

    /// `self · a`: zeroes the rows of `a` outside the support.
    pub fn apply_rows(&self, a: &Matrix) -> Matrix {
        assert_eq!(a.rows(), self.width, "mask/matrix row mismatch");
        let mut out = a.clone();
        for j in 0..self.width {
            if !self.is_active(j) {
                out.row_mut(j).fill(0.0);
            }
        }
        out
    }

    /// `self · v` in place.
    pub fn apply_vec(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.width, "mask/vector length mismatch");
        for (j, x) in v.iter_mut().enumerate() {
            if !self.is_active(j) {
                *x = 0.0;
            }
        }
    }
}

/// Canonical order: neuron by neuron from index 0, an active neuron sorts
/// before an inactive one. This is the order in which the enumerator
/// explores branches.
impl Ord for ActivationMatrix {
    fn cmp(&self, other: &Self) -> Ordering {
        self.width.cmp(&other.width).then_with(|| {
            for j in 0..self.width {
                match (self.is_active(j), other.is_active(j)) {
                    (true, false) => return Ordering::Less,
                    (false, true) => return Ordering::Greater,
                    _ => {}
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for ActivationMatrix {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for ActivationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ActivationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.width {
            f.write_str(if self.is_active(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Product of masks in list order. Its support is the intersection of the
/// supports.
pub fn activation_product(masks: &[ActivationMatrix]) -> Result<ActivationMatrix> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| crate::Error::InvalidArgument("empty mask list".into()))?;
    rest.iter().try_fold(first.clone(), |acc, m| acc.and(m))
}

/// One mask per hidden layer, all of the same width.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<ActivationMatrix>", into = "Vec<ActivationMatrix>")]
pub struct ActivationPattern {
    layers: Vec<ActivationMatrix>,
}

impl ActivationPattern {
    pub fn new(layers: Vec<ActivationMatrix>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return invalid("activation pattern needs at least one layer");
        };
        let m = first.width();
        if layers.iter().any(|l| l.width() != m) {
            return invalid("activation pattern layers have unequal widths");
        }
        Ok(ActivationPattern { layers })
    }

    pub fn layers(&self) -> &[ActivationMatrix] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn last(&self) -> &ActivationMatrix {
        self.layers.last().expect("nonempty by construction")
    }

    /// The first `depth` layers.
    pub fn prefix(&self, depth: usize) -> Result<ActivationPattern> {
        if depth == 0 || depth > self.depth() {
            return invalid(format!("prefix depth {depth} outside 1..={}", self.depth()));
        }
        Ok(ActivationPattern {
            layers: self.layers[..depth].to_vec(),
        })
    }

    pub fn supports(&self) -> Vec<Vec<usize>> {
        self.layers.iter().map(|l| l.support()).collect()
    }
}

impl TryFrom<Vec<ActivationMatrix>> for ActivationPattern {
    type Error = crate::Error;
    fn try_from(layers: Vec<ActivationMatrix>) -> Result<Self> {
        ActivationPattern::new(layers)
    }
}

impl From<ActivationPattern> for Vec<ActivationMatrix> {
    fn from(p: ActivationPattern) -> Self {
        p.layers
    }
}

impl fmt::Debug for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, l) in self.layers.iter().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(s: &[usize], m: usize) -> ActivationMatrix {
        ActivationMatrix::from_support(s.iter().copied(), m).unwrap()
    }

    #[test]
    fn construction_examples() {
        let z = mask(&[], 3);
        assert!(z.is_zero() && z.support().is_empty());
        assert!(mask(&[0, 1, 2], 3).is_identity());
        assert_eq!(mask(&[1], 3).to_matrix(), Matrix::diag(&[0.0, 1.0, 0.0]));
        assert!(matches!(
            ActivationMatrix::from_support([3], 3),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn equality_is_width_and_support() {
        assert_eq!(mask(&[0, 2], 3), mask(&[2, 0], 3));
        assert_ne!(mask(&[0], 3), mask(&[0], 4));
    }

    #[test]
    fn product_examples() {
        assert_eq!(
            activation_product(&[mask(&[0, 1], 3), mask(&[1, 2], 3)]).unwrap(),
            mask(&[1], 3)
        );
        let id = ActivationMatrix::identity(3);
        assert_eq!(activation_product(&[id.clone(), id.clone(), id.clone()]).unwrap(), id);
        assert_eq!(
            activation_product(&[mask(&[0, 1, 2], 3), mask(&[0, 1], 3), mask(&[0], 3)]).unwrap(),
            mask(&[0], 3)
        );
        assert!(activation_product(&[mask(&[0], 2), mask(&[0], 3)]).is_err());
        assert!(activation_product(&[]).is_err());
    }

    #[test]
    fn wide_masks_cross_word_boundary() {
        let m = mask(&[0, 63, 64, 99], 100);
        assert_eq!(m.support(), vec![0, 63, 64, 99]);
        assert_eq!(m.count(), 4);
    }

    #[test]
    fn pattern_rejects_mixed_widths() {
        assert!(ActivationPattern::new(vec![mask(&[0], 2), mask(&[0], 3)]).is_err());
        assert!(ActivationPattern::new(vec![]).is_err());
    }

    #[test]
    fn canonical_order_puts_active_first() {
        assert!(mask(&[0], 2) < mask(&[1], 2));
        assert!(mask(&[0, 1], 2) < mask(&[0], 2));
    }

    proptest! {
        #[test]
        fn product_depends_only_on_support_set(
            supports in proptest::collection::vec(proptest::collection::vec(0usize..6, 0..6), 1..8),
            rot in 0usize..8,
        ) {
            let masks: Vec<_> = supports.iter().map(|s| mask(s, 6)).collect();
            let p = activation_product(&masks).unwrap();
            let mut rotated = masks.clone();
            rotated.rotate_left(rot % masks.len());
            rotated.extend(masks.iter().cloned());
            prop_assert_eq!(activation_product(&rotated).unwrap(), p.clone());
            for j in 0..6 {
                prop_assert_eq!(p.is_active(j), masks.iter().all(|m| m.is_active(j)));
            }
        }
    }
}
