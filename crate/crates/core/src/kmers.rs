//! k-mer extraction and mixed-radix indexing into the `21^k` feature space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqio::{Alphabet, ALPHABET_SIZE};

pub const MAX_K: usize = 8;

/// Window shape: `k` kept residues, each followed by `gap` skipped ones
/// (no skip after the last). `gap = 0` gives contiguous k-mers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmerSpec {
    pub k: usize,
    #[serde(default)]
    pub gap: usize,
}

impl KmerSpec {
    pub fn new(k: usize, gap: usize) -> Result<Self> {
        let spec = KmerSpec { k, gap };
        spec.validate()?;
        Ok(spec)
    }

    pub fn contiguous(k: usize) -> Result<Self> {
        Self::new(k, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_K {
            return Err(Error::invalid(format!(
                "k must be in 1..={MAX_K}, got {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Number of sequence positions covered by one window.
    pub fn span(&self) -> usize {
        self.k + (self.k - 1) * self.gap
    }

    /// Number of windows in a sequence of length `len`.
    pub fn window_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.span())
    }

    /// Size of the k-mer index space, `21^k`.
    pub fn feature_dim(&self) -> usize {
        ALPHABET_SIZE.pow(self.k as u32)
    }

    /// Sequence offsets of the kept residues for the window starting at `start`.
    pub fn positions(&self, start: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).map(move |i| start + i * (self.gap + 1))
    }
}

/// All k-mers of `residues` with stride 1, in order, duplicates kept.
/// Returns an empty list when the sequence is shorter than the window span.
pub fn generate_kmers(residues: &str, spec: &KmerSpec) -> Vec<String> {
    let bytes = residues.as_bytes();
    (0..spec.window_count(bytes.len()))
        .map(|start| spec.positions(start).map(|p| bytes[p] as char).collect())
        .collect()
}

/// Mixed-radix index `sum_i idx(kmer[i]) * 21^(k-1-i)`.
pub fn kmer_index(kmer: &str, alphabet: &Alphabet) -> Result<usize> {
    if kmer.is_empty() || kmer.len() > MAX_K {
        return Err(Error::invalid(format!(
            "k-mer length must be in 1..={MAX_K}, got {}",
            kmer.len()
        )));
    }
    kmer.bytes().try_fold(0usize, |acc, b| {
        let idx = alphabet.index_of(b).ok_or_else(|| {
            Error::invalid(format!("k-mer '{kmer}' contains unknown residue '{}'", b as char))
        })?;
        Ok(acc * ALPHABET_SIZE + idx)
    })
}

pub fn index_to_kmer(index: usize, k: usize, alphabet: &Alphabet) -> Result<String> {
    KmerSpec::contiguous(k)?;
    let dim = ALPHABET_SIZE.pow(k as u32);
    if index >= dim {
        return Err(Error::invalid(format!(
            "k-mer index {index} out of range for k = {k} (max {})",
            dim - 1
        )));
    }
    let mut out = vec![b'A'; k];
    let mut rest = index;
    for slot in out.iter_mut().rev() {
        *slot = alphabet.symbols()[rest % ALPHABET_SIZE];
        rest /= ALPHABET_SIZE;
    }
    Ok(String::from_utf8(out).expect("alphabet is ascii"))
}

/// Mixed-radix indices of every window, computed from pre-resolved residue
/// indices.
pub(crate) fn window_indices<'a>(
    codes: &'a [usize],
    spec: &'a KmerSpec,
) -> impl Iterator<Item = usize> + 'a {
    (0..spec.window_count(codes.len())).map(move |start| {
        spec.positions(start)
            .fold(0usize, |acc, p| acc * ALPHABET_SIZE + codes[p])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha() -> Alphabet {
        Alphabet::standard()
    }

    #[test]
    fn contiguous_windows() {
        let spec = KmerSpec::contiguous(4).unwrap();
        assert_eq!(generate_kmers("CASSGQ", &spec), ["CASS", "ASSG", "SSGQ"]);
        assert_eq!(generate_kmers("CASSRGQYEQYF", &spec).len(), 9);
        assert!(generate_kmers("CAS", &spec).is_empty());
    }

    #[test]
    fn spaced_windows() {
        let spec = KmerSpec::new(2, 1).unwrap();
        assert_eq!(spec.span(), 3);
        assert_eq!(generate_kmers("ABCDE", &spec), ["AC", "BD", "CE"]);
    }

    #[test]
    fn spec_bounds() {
        assert!(KmerSpec::new(0, 0).is_err());
        assert!(KmerSpec::new(9, 0).is_err());
        assert!(KmerSpec::new(8, 3).is_ok());
    }

    #[test]
    fn index_examples() {
        let a = alpha();
        assert_eq!(kmer_index("AAAA", &a).unwrap(), 0);
        assert_eq!(kmer_index("CAAA", &a).unwrap(), 9261);
        assert_eq!(kmer_index("XXXX", &a).unwrap(), 194_480);
        assert!(kmer_index("AABA", &a).is_err());
        assert_eq!(index_to_kmer(0, 4, &a).unwrap(), "AAAA");
        assert_eq!(index_to_kmer(9261, 4, &a).unwrap(), "CAAA");
        assert!(index_to_kmer(194_481, 4, &a).is_err());
    }

    #[test]
    fn index_order_matches_enumeration_for_k2() {
        // Lexicographic enumeration in alphabet order is exactly index order.
        let a = alpha();
        let mut expected = 0;
        for &c1 in a.symbols() {
            for &c2 in a.symbols() {
                let s = String::from_utf8(vec![c1, c2]).unwrap();
                assert_eq!(kmer_index(&s, &a).unwrap(), expected);
                expected += 1;
            }
        }
        assert_eq!(expected, 441);
    }

    #[test]
    fn max_k_fits() {
        let spec = KmerSpec::contiguous(8).unwrap();
        assert_eq!(spec.feature_dim(), 37_822_859_361);
        assert_eq!(
            kmer_index("XXXXXXXX", &alpha()).unwrap(),
            spec.feature_dim() - 1
        );
    }

    proptest! {
        #[test]
        fn window_count_law(seq in "[ACDEFGHIKLMNPQRSTVWYX]{0,30}", k in 1usize..6, gap in 0usize..3) {
            let spec = KmerSpec::new(k, gap).unwrap();
            let kmers = generate_kmers(&seq, &spec);
            if seq.len() >= spec.span() {
                prop_assert_eq!(kmers.len(), seq.len() - spec.span() + 1);
            } else {
                prop_assert!(kmers.is_empty());
            }
        }

        #[test]
        fn zero_gap_is_contiguous(seq in "[ACDEFGHIKLMNPQRSTVWYX]{0,30}", k in 1usize..6) {
            let spaced = generate_kmers(&seq, &KmerSpec { k, gap: 0 });
            let contiguous: Vec<String> = if seq.len() >= k {
                seq.as_bytes().windows(k).map(|w| String::from_utf8(w.to_vec()).unwrap()).collect()
            } else {
                Vec::new()
            };
            prop_assert_eq!(spaced, contiguous);
        }

        #[test]
        fn fast_indices_match_string_path(seq in "[ACDEFGHIKLMNPQRSTVWYX]{0,25}", k in 1usize..5, gap in 0usize..3) {
            let a = alpha();
            let spec = KmerSpec::new(k, gap).unwrap();
            let codes: Vec<usize> = seq.bytes().map(|b| a.index_of(b).unwrap()).collect();
            let fast: Vec<usize> = window_indices(&codes, &spec).collect();
            let slow: Vec<usize> = generate_kmers(&seq, &spec).iter().map(|m| kmer_index(m, &a).unwrap()).collect();
            prop_assert_eq!(fast, slow);
        }
    }
}
