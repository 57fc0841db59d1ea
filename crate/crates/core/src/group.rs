//! Finite sign groups, i.e. subgroups of `Z_2^d` generated by the signs of `A`.
//!
//! An element is a bitmask: bit `i` is set when coordinate `i` is negated.

use serde::{Deserialize, Serialize};

pub type SignMask = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignGroup {
    dim: usize,
    elements: Vec<SignMask>,
}

impl SignGroup {
    pub fn trivial(dim: usize) -> Self {
        Self { dim, elements: vec![0] }
    }

    /// The full group `Z_2^dim`.
    pub fn full(dim: usize) -> Self {
        assert!(dim < 32);
        Self {
            dim,
            elements: (0..(1u32 << dim)).collect(),
        }
    }

    /// Closure of `generators` under coordinatewise sign multiplication (XOR).
    pub fn generated_by(dim: usize, generators: impl IntoIterator<Item = SignMask>) -> Self {
        let mut elements = vec![0u32];
        for g in generators {
            if elements.contains(&g) {
                continue;
            }
            let extra: Vec<SignMask> = elements.iter().map(|e| e ^ g).collect();
            elements.extend(extra);
        }
        elements.sort_unstable();
        Self { dim, elements }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_trivial(&self) -> bool {
        self.elements.len() == 1
    }

    pub fn elements(&self) -> &[SignMask] {
        &self.elements
    }

    pub fn contains(&self, k: SignMask) -> bool {
        self.elements.binary_search(&k).is_ok()
    }

    pub fn is_subgroup_of(&self, other: &SignGroup) -> bool {
        self.elements.iter().all(|&e| other.contains(e))
    }

    /// Index of `k` among the sorted elements.
    pub fn position(&self, k: SignMask) -> Option<usize> {
        self.elements.binary_search(&k).ok()
    }
}

pub fn mask_of_signs(values: &[f64]) -> SignMask {
    values
        .iter()
        .enumerate()
        .fold(0, |m, (i, v)| if *v < 0.0 { m | (1 << i) } else { m })
}

/// Applies `k` to `x` in place.
pub fn act(k: SignMask, x: &mut [f64]) {
    for (i, v) in x.iter_mut().enumerate() {
        if k & (1 << i) != 0 {
            *v = -*v;
        }
    }
}

/// Human-readable label such as `"+-"` (coordinate 2 negated).
pub fn label(k: SignMask, dim: usize) -> String {
    (0..dim).map(|i| if k & (1 << i) != 0 { '-' } else { '+' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure() {
        let g = SignGroup::generated_by(2, [0b01, 0b10]);
        assert_eq!(g, SignGroup::full(2));
        let g = SignGroup::generated_by(2, [0b11]);
        assert_eq!(g.elements(), &[0, 3]);
        assert!(g.is_subgroup_of(&SignGroup::full(2)));
        assert!(SignGroup::generated_by(2, []).is_trivial());
    }

    #[test]
    fn masks_and_labels() {
        assert_eq!(mask_of_signs(&[1.0, -2.0]), 0b10);
        assert_eq!(label(0b10, 2), "+-");
        let mut x = [1.0, 2.0];
        act(0b11, &mut x);
        assert_eq!(x, [-1.0, -2.0]);
    }
}
