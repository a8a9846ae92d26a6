//! Named parameter storage and matching gradient buffers.

use serde::{Deserialize, Serialize};

use crate::mat::{Mat, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Start of this tensor in the flat parameter array.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    mats: Vec<Mat<F>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), mats: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Mat<F>) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.mats.push(m);
        self.mats.len() - 1
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn mat(&self, id: usize) -> &Mat<F> {
        &self.mats[id]
    }

    pub fn mat_mut(&mut self, id: usize) -> &mut Mat<F> {
        &mut self.mats[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn mats(&self) -> &[Mat<F>] {
        &self.mats
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.mats.iter().map(Mat::len).sum()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut offset = 0;
        self.names
            .iter()
            .zip(&self.mats)
            .map(|(n, m)| {
                let s = ParamSpec { name: n.clone(), rows: m.rows, cols: m.cols, offset };
                offset += m.len();
                s
            })
            .collect()
    }

    pub fn flat(&self) -> Vec<F> {
        self.mats.iter().flat_map(|m| m.data.iter().copied()).collect()
    }

    /// Overwrite all values from a flat array in declaration order.
    pub fn set_flat(&mut self, flat: &[F]) {
        assert_eq!(flat.len(), self.count(), "flat parameter length");
        let mut off = 0;
        for m in &mut self.mats {
            let n = m.len();
            m.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore { names: self.names.clone(), mats: self.mats.iter().map(Mat::cast).collect() }
    }

    /// Mutable view of scalar `index` of the flat array.
    pub fn flat_mut(&mut self, mut index: usize) -> &mut F {
        for m in &mut self.mats {
            if index < m.len() {
                return &mut m.data[index];
            }
            index -= m.len();
        }
        panic!("parameter index out of range")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub mats: Vec<Mat<F>>,
}

impl<F: Scalar> Grads<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        Grads { mats: store.mats().iter().map(|m| Mat::zeros(m.rows, m.cols)).collect() }
    }

    pub fn add_assign(&mut self, other: &Grads<F>) {
        for (a, b) in self.mats.iter_mut().zip(&other.mats) {
            a.add_assign(b);
        }
    }

    pub fn flat(&self) -> Vec<F> {
        self.mats.iter().flat_map(|m| m.data.iter().copied()).collect()
    }

    /// Pairwise sum with a fixed topology over the input order.
    pub fn tree_sum(mut parts: Vec<Grads<F>>) -> Option<Grads<F>> {
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut it = parts.into_iter();
            while let Some(mut a) = it.next() {
                if let Some(b) = it.next() {
                    a.add_assign(&b);
                }
                next.push(a);
            }
            parts = next;
        }
        parts.pop()
    }
}
