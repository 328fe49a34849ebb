//! Lowercase word tokens and term-frequency vectors.

use std::collections::BTreeMap;

use crate::scalar::Scalar;

/// Lowercase alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse term-frequency vector keyed by token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermFreq<T> {
    counts: BTreeMap<String, T>,
}

impl<T: Scalar> TermFreq<T> {
    pub fn from_text(text: &str) -> Self {
        let mut counts = BTreeMap::new();
        for tok in tokenize(text) {
            let c = counts.entry(tok).or_insert_with(T::zero);
            *c = *c + T::one();
        }
        Self { counts }
    }

    pub fn get(&self, term: &str) -> T {
        self.counts.get(term).copied().unwrap_or_else(T::zero)
    }

    pub fn norm(&self) -> T {
        self.counts.values().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .map(|(k, &v)| v * large.get(k))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Cosine similarity; zero when either vector is empty.
    pub fn cosine(&self, other: &Self) -> T {
        let denom = self.norm() * other.norm();
        if denom == T::zero() {
            T::zero()
        } else {
            self.dot(other) / denom
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, T)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_lowercase_words() {
        assert_eq!(
            tokenize("In what year is Home-equity > 13,000?"),
            ["in", "what", "year", "is", "home", "equity", "13", "000"]
        );
    }

    #[test]
    fn cosine_of_identical_is_one() {
        let a = TermFreq::<f64>::from_text("net income rose net");
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.get("net"), 2.0);
    }

    #[test]
    fn empty_vector_has_zero_similarity() {
        let a = TermFreq::<f32>::from_text("");
        let b = TermFreq::<f32>::from_text("x");
        assert_eq!(a.cosine(&b), 0.0);
    }
}
