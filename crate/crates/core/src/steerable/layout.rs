use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::Mat3;

/// Ordered list of `(degree, multiplicity)` with degrees in {0, 1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrrepsLayout {
    entries: Vec<(u8, usize)>,
}

impl IrrepsLayout {
    pub fn new(entries: Vec<(u8, usize)>) -> Result<Self> {
        for &(l, mult) in &entries {
            if l > 1 {
                return Err(Error::Layout(format!("degree {l} exceeds l_max = 1")));
            }
            if mult == 0 {
                return Err(Error::Layout("zero multiplicity entry".into()));
            }
        }
        Ok(Self { entries })
    }

    /// `n0` scalars followed by `n1` vectors; empty blocks are omitted.
    pub fn scalars_vectors(n0: usize, n1: usize) -> Self {
        let mut entries = Vec::with_capacity(2);
        if n0 > 0 {
            entries.push((0, n0));
        }
        if n1 > 0 {
            entries.push((1, n1));
        }
        Self { entries }
    }

    /// `1x0e + 1x1o`, the layout of spherical-harmonic attributes.
    pub fn sh1() -> Self {
        Self::scalars_vectors(1, 1)
    }

    pub fn entries(&self) -> &[(u8, usize)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.iter().map(|&(l, m)| m * (2 * l as usize + 1)).sum()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().filter(|e| e.0 == 0).map(|e| e.1).sum()
    }

    pub fn num_vectors(&self) -> usize {
        self.entries.iter().filter(|e| e.0 == 1).map(|e| e.1).sum()
    }

    /// Direct sum `self + other`.
    pub fn concat(&self, other: &IrrepsLayout) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self { entries }
    }

    pub fn index(&self) -> LayoutIndex {
        let mut scalars = Vec::new();
        let mut vectors = Vec::new();
        let mut offset = 0;
        for &(l, mult) in &self.entries {
            for _ in 0..mult {
                if l == 0 {
                    scalars.push(offset);
                    offset += 1;
                } else {
                    vectors.push(offset);
                    offset += 3;
                }
            }
        }
        LayoutIndex { scalars, vectors, dim: offset }
    }
}

impl std::fmt::Display for IrrepsLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|&(l, m)| format!("{m}x{l}{}", if l == 0 { 'e' } else { 'o' }))
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

/// Flat offsets of every scalar channel and every vector channel's x slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutIndex {
    pub scalars: Vec<usize>,
    pub vectors: Vec<usize>,
    pub dim: usize,
}

impl LayoutIndex {
    pub fn n0(&self) -> usize {
        self.scalars.len()
    }

    pub fn n1(&self) -> usize {
        self.vectors.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteerableTensor<T> {
    layout: IrrepsLayout,
    coeffs: Vec<T>,
}

impl<T: Real> SteerableTensor<T> {
    pub fn new(layout: IrrepsLayout, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != layout.dim() {
            return Err(Error::Layout(format!(
                "{} coefficients for layout {layout} of dimension {}",
                coeffs.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, coeffs })
    }

    pub fn zeros(layout: IrrepsLayout) -> Self {
        let coeffs = vec![T::zero(); layout.dim()];
        Self { layout, coeffs }
    }

    /// Builds a tensor with layout `[(0, scalars.len()), (1, vectors.len())]`.
    pub fn from_parts(scalars: &[T], vectors: &[[T; 3]]) -> Self {
        let layout = IrrepsLayout::scalars_vectors(scalars.len(), vectors.len());
        let mut coeffs = scalars.to_vec();
        for v in vectors {
            coeffs.extend_from_slice(v);
        }
        Self { layout, coeffs }
    }

    pub fn layout(&self) -> &IrrepsLayout {
        &self.layout
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn scalars(&self) -> Vec<T> {
        self.layout.index().scalars.iter().map(|&o| self.coeffs[o]).collect()
    }

    pub fn vectors(&self) -> Vec<[T; 3]> {
        self.layout
            .index()
            .vectors
            .iter()
            .map(|&o| [self.coeffs[o], self.coeffs[o + 1], self.coeffs[o + 2]])
            .collect()
    }

    /// Applies an orthogonal matrix to every l=1 channel.
    pub fn transform(&self, r: &Mat3) -> Self {
        let mut out = self.clone();
        let rt: [[T; 3]; 3] = r.map(|row| row.map(T::c));
        for o in self.layout.index().vectors {
            let v = [self.coeffs[o], self.coeffs[o + 1], self.coeffs[o + 2]];
            for (k, row) in rt.iter().enumerate() {
                out.coeffs[o + k] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}
