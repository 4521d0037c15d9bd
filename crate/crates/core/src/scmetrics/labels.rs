use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Integer labels dense in `0..K`, with a name for each label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    vocab: Vec<String>,
}

impl LabelVector {
    /// Labels already in `0..K` with every value present.
    pub fn from_dense(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label vector"));
        }
        let k = labels.iter().max().unwrap() + 1;
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("labels are not dense: {gap} is unused")));
        }
        let vocab = (0..k).map(|v| v.to_string()).collect();
        Ok(Self { labels, vocab })
    }

    /// Arbitrary integer codes, renumbered in increasing order of value.
    pub fn from_codes(codes: &[usize]) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::Empty("label vector"));
        }
        let mut map = BTreeMap::new();
        for &c in codes {
            map.entry(c).or_insert(0usize);
        }
        for (i, v) in map.values_mut().enumerate() {
            *v = i;
        }
        Ok(Self {
            labels: codes.iter().map(|c| map[c]).collect(),
            vocab: map.keys().map(|c| c.to_string()).collect(),
        })
    }

    /// Names, numbered in sorted order of the distinct names.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("label vector"));
        }
        let mut map: BTreeMap<&str, usize> = BTreeMap::new();
        for n in names {
            map.entry(n.as_ref()).or_insert(0);
        }
        for (i, v) in map.values_mut().enumerate() {
            *v = i;
        }
        Ok(Self {
            labels: names.iter().map(|n| map[n.as_ref()]).collect(),
            vocab: map.keys().map(|s| s.to_string()).collect(),
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vocab[self.labels[i]]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.len()
    }

    /// Per-class member counts.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Explicit codes against a fixed vocabulary; unused entries are kept,
    /// so the class count stays `vocab.len()`.
    pub fn with_vocab(labels: Vec<usize>, vocab: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label vector"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocab.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside a vocabulary of {}",
                vocab.len()
            )));
        }
        Ok(Self { labels, vocab })
    }

    /// Restriction to the given positions with the vocabulary unchanged.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::with_vocab(idx.iter().map(|&i| self.labels[i]).collect(), self.vocab.clone())
    }

    /// Restriction to the given positions, renumbered densely.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let names: Vec<&str> = idx.iter().map(|&i| self.name(i)).collect();
        Self::from_names(&names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors() {
        assert!(LabelVector::from_dense(vec![0, 2]).is_err());
        assert!(LabelVector::from_dense(vec![]).is_err());
        let l = LabelVector::from_codes(&[7, 3, 7, 9]).unwrap();
        assert_eq!(l.labels(), &[1, 0, 1, 2]);
        assert_eq!(l.vocab(), &["3", "7", "9"]);
        let n = LabelVector::from_names(&["b", "a", "b"]).unwrap();
        assert_eq!(n.labels(), &[1, 0, 1]);
        assert_eq!(n.name(0), "b");
        assert_eq!(n.counts(), vec![1, 2]);
        assert_eq!(n.subset(&[0, 2]).unwrap().n_classes(), 1);
    }
}
