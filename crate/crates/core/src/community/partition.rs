use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Disjoint cover of `0..d` by non-empty modules with contiguous ids.
///
/// Ids are canonical: module 0 holds feature 0, and new ids appear in
/// increasing feature order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Relabels arbitrary labels to canonical ids.
    pub fn new<L: Ord + Clone>(labels: &[L]) -> Self {
        let mut seen: alloc::collections::BTreeMap<L, usize> = alloc::collections::BTreeMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        for l in labels {
            let next = seen.len();
            let id = *seen.entry(l.clone()).or_insert(next);
            assignment.push(id);
        }
        Self { k: seen.len(), assignment }
    }

    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        Self::new(&assignment)
    }

    /// Builds from explicit modules; they must cover `0..d` disjointly.
    pub fn from_modules(d: usize, modules: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; d];
        for (m, members) in modules.iter().enumerate() {
            if members.is_empty() {
                return Err(invalid(format!("module {m} is empty")));
            }
            for &i in members {
                if i >= d {
                    return Err(invalid(format!("feature {i} out of range for d = {d}")));
                }
                if labels[i] != usize::MAX {
                    return Err(Error::OverlappingModules(labels[i], m));
                }
                labels[i] = m;
            }
        }
        if let Some(i) = labels.iter().position(|l| *l == usize::MAX) {
            return Err(invalid(format!("feature {i} is not assigned to any module")));
        }
        Ok(Self::new(&labels))
    }

    pub fn singletons(d: usize) -> Self {
        Self { assignment: (0..d).collect(), k: d }
    }

    pub fn single(d: usize) -> Self {
        Self { assignment: vec![0; d], k: usize::from(d > 0) }
    }

    pub fn d(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn module_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Members of each module, ascending.
    pub fn modules(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &m) in self.assignment.iter().enumerate() {
            out[m].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &m in &self.assignment {
            out[m] += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels() {
        let p = Partition::new(&[7, 3, 7, 1]);
        assert_eq!(p.assignment(), &[0, 1, 0, 2]);
        assert_eq!(p.k(), 3);
        assert_eq!(p.modules(), vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn from_modules_validates() {
        let p = Partition::from_modules(3, &[vec![2], vec![0, 1]]).unwrap();
        assert_eq!(p.assignment(), &[0, 0, 1]);
        assert!(Partition::from_modules(3, &[vec![0, 1]]).is_err());
        assert_eq!(Partition::from_modules(2, &[vec![0, 1], vec![1]]), Err(Error::OverlappingModules(0, 1)));
        assert!(Partition::from_modules(2, &[vec![0, 1], vec![]]).is_err());
    }
}
