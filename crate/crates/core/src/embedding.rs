//! Per-sequence feature vectors and label-keyed domain-knowledge vectors.
//!
//! Three sequence encoders are available:
//!
//! - [`EncodingMode::BagOfKmers`]: counts of every k-mer in the `21^k` index
//!   space. Fixed length regardless of sequence length.
//! - [`EncodingMode::PositionalConcat`]: each k-mer becomes `k` concatenated
//!   21-wide one-hot blocks; the blocks of successive k-mers are concatenated
//!   and zero-padded up to `max_len`.
//! - [`EncodingMode::SequenceOhe`]: plain per-residue one-hot, zero-padded to
//!   `max_len`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmers::{window_indices, KmerSpec};
use crate::seqio::{Alphabet, SequenceRecord, ALPHABET_SIZE};
use crate::sparse::{SparseMatrix, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    #[default]
    BagOfKmers,
    PositionalConcat,
    SequenceOhe,
}

impl EncodingMode {
    pub fn is_positional(self) -> bool {
        !matches!(self, EncodingMode::BagOfKmers)
    }
}

impl std::str::FromStr for EncodingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag-of-kmers" | "bag" => Ok(EncodingMode::BagOfKmers),
            "positional-concat" | "positional" => Ok(EncodingMode::PositionalConcat),
            "sequence-ohe" | "ohe" => Ok(EncodingMode::SequenceOhe),
            other => Err(Error::invalid(format!(
                "unknown encoding mode '{other}' (expected bag-of-kmers, positional-concat or sequence-ohe)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSpec {
    pub kmer: KmerSpec,
    #[serde(default)]
    pub mode: EncodingMode,
    /// Padding bound for the positional modes.
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub use_domain_knowledge: bool,
    /// L2-normalize each sequence block before domain features are appended.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            kmer: KmerSpec { k: 4, gap: 0 },
            mode: EncodingMode::BagOfKmers,
            max_len: None,
            use_domain_knowledge: false,
            normalize: false,
        }
    }
}

impl EmbeddingSpec {
    /// Width of the sequence block (domain-knowledge columns excluded).
    pub fn sequence_dim(&self) -> Result<usize> {
        self.kmer.validate()?;
        match self.mode {
            EncodingMode::BagOfKmers => Ok(self.kmer.feature_dim()),
            EncodingMode::PositionalConcat => {
                let max_len = self.require_max_len()?;
                Ok(ALPHABET_SIZE * self.kmer.k * self.kmer.window_count(max_len))
            }
            EncodingMode::SequenceOhe => Ok(ALPHABET_SIZE * self.require_max_len()?),
        }
    }

    fn require_max_len(&self) -> Result<usize> {
        self.max_len
            .ok_or_else(|| Error::invalid("positional encodings need max_len"))
    }
}

/// Encodes one sequence (no domain-knowledge block).
pub fn encode_sequence(
    record: &SequenceRecord,
    spec: &EmbeddingSpec,
    alphabet: &Alphabet,
) -> Result<SparseVector> {
    let dim = spec.sequence_dim()?;
    let codes = residue_codes(record, alphabet)?;
    if spec.mode.is_positional() {
        let max_len = spec.require_max_len()?;
        if codes.len() > max_len {
            return Err(Error::InvalidRecord {
                id: record.id.clone(),
                msg: format!("length {} exceeds max_len {max_len}", codes.len()),
            });
        }
    }
    let pairs: Vec<(usize, f64)> = match spec.mode {
        EncodingMode::BagOfKmers => window_indices(&codes, &spec.kmer).map(|i| (i, 1.0)).collect(),
        EncodingMode::PositionalConcat => {
            let block = ALPHABET_SIZE * spec.kmer.k;
            (0..spec.kmer.window_count(codes.len()))
                .flat_map(|j| {
                    spec.kmer
                        .positions(j)
                        .enumerate()
                        .map(move |(i, p)| (j * block + i * ALPHABET_SIZE, p))
                })
                .map(|(offset, p)| (offset + codes[p], 1.0))
                .collect()
        }
        EncodingMode::SequenceOhe => codes
            .iter()
            .enumerate()
            .map(|(i, &c)| (i * ALPHABET_SIZE + c, 1.0))
            .collect(),
    };
    let mut v = SparseVector::from_unsorted(dim, pairs)?;
    if spec.normalize {
        let norm = v.norm_l2();
        if norm > 0.0 {
            v.scale(1.0 / norm);
        }
    }
    Ok(v)
}

fn residue_codes(record: &SequenceRecord, alphabet: &Alphabet) -> Result<Vec<usize>> {
    record
        .residues
        .bytes()
        .map(|b| {
            alphabet.index_of(b).ok_or(Error::UnknownResidue {
                id: record.id.clone(),
                residue: b as char,
            })
        })
        .collect()
}

/// Property categories, in the order their blocks are concatenated.
pub const DOMAIN_CATEGORIES: [&str; 5] = [
    "hla_types",
    "gene_mutations",
    "clinical_characteristics",
    "immunological_features",
    "epigenetic_modifications",
];

/// Per-label property sets over the five categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainKnowledgeTable {
    entries: BTreeMap<String, [BTreeSet<String>; 5]>,
    vocab: [Vec<String>; 5],
}

type RawTable = BTreeMap<String, BTreeMap<String, Vec<String>>>;

impl DomainKnowledgeTable {
    pub fn from_raw(raw: RawTable) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (label, cats) in raw {
            let mut sets: [BTreeSet<String>; 5] = Default::default();
            for (cat, values) in cats {
                let slot = DOMAIN_CATEGORIES
                    .iter()
                    .position(|&c| c == cat)
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "domain table: unknown category '{cat}' for label '{label}' (expected one of {DOMAIN_CATEGORIES:?})"
                        ))
                    })?;
                sets[slot].extend(values.into_iter().map(|v| v.trim().to_string()));
            }
            entries.insert(label, sets);
        }
        let mut vocab: [Vec<String>; 5] = Default::default();
        for (slot, words) in vocab.iter_mut().enumerate() {
            let union: BTreeSet<&String> = entries.values().flat_map(|s| s[slot].iter()).collect();
            *words = union.into_iter().cloned().collect();
        }
        Ok(DomainKnowledgeTable { entries, vocab })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_raw(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_raw(&self) -> RawTable {
        self.entries
            .iter()
            .map(|(label, sets)| {
                let cats = DOMAIN_CATEGORIES
                    .iter()
                    .zip(sets)
                    .filter(|(_, s)| !s.is_empty())
                    .map(|(c, s)| (c.to_string(), s.iter().cloned().collect()))
                    .collect();
                (label.clone(), cats)
            })
            .collect()
    }

    /// Properties of the four cancer types, limited to the items that the
    /// source literature names explicitly.
    pub fn default_cancer_table() -> Self {
        let raw = serde_json::json!({
            "Breast": {
                "hla_types": ["HLA-A2", "HLA-B7", "HLA-DRB1*15:01"],
                "gene_mutations": ["BRCA1", "BRCA2", "TP53", "PIK3CA"],
                "clinical_characteristics": ["tumor size", "tumor grade", "hormone receptor status", "HER2 status"],
                "immunological_features": ["TILs", "PD-1", "PD-L1", "CTLA-4"]
            },
            "Colorectal": {
                "hla_types": ["HLA-A11", "HLA-B44"],
                "gene_mutations": ["APC", "KRAS", "TP53", "BRAF"],
                "clinical_characteristics": ["tumor attributes", "lymph node involvement"],
                "immunological_features": ["TILs", "immune checkpoint molecules"]
            },
            "Liver": {
                "hla_types": ["HLA-A2", "HLA-B35"],
                "gene_mutations": ["TP53", "CTNNB1", "AXIN1", "ARID1A"],
                "epigenetic_modifications": ["CDKN2A methylation", "MGMT methylation", "GSTP1 methylation"]
            },
            "Urothelial": {
                "hla_types": ["HLA-A2", "HLA-B7"],
                "gene_mutations": ["FGFR3", "TP53", "RB1", "PIK3CA"]
            }
        });
        Self::from_raw(serde_json::from_value(raw).expect("static table")).expect("static table")
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    pub fn vocabulary(&self, category: usize) -> &[String] {
        &self.vocab[category]
    }

    pub fn dim(&self) -> usize {
        self.vocab.iter().map(Vec::len).sum()
    }

    /// Digest of the table contents, recorded in embedding sidecars.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&self.to_raw()).expect("serializable");
        crate::short_hash(text.as_bytes())
    }
}

/// Multi-hot property vector of `label`, one block per category over that
/// category's sorted vocabulary.
pub fn build_domain_vector(label: &str, table: &DomainKnowledgeTable) -> Result<SparseVector> {
    let sets = table.entries.get(label).ok_or_else(|| Error::InvalidRecord {
        id: label.to_string(),
        msg: "label has no domain-knowledge entry".into(),
    })?;
    let mut pairs = Vec::new();
    let mut offset = 0;
    for (slot, words) in table.vocab.iter().enumerate() {
        for (i, w) in words.iter().enumerate() {
            if sets[slot].contains(w) {
                pairs.push((offset + i, 1.0));
            }
        }
        offset += words.len();
    }
    SparseVector::from_unsorted(table.dim(), pairs)
}

/// Resolves `max_len` for positional modes from the data when unset.
pub fn resolve_spec(spec: &EmbeddingSpec, records: &[SequenceRecord]) -> EmbeddingSpec {
    let mut spec = spec.clone();
    if spec.mode.is_positional() && spec.max_len.is_none() {
        spec.max_len = records.iter().map(SequenceRecord::len).max();
    }
    spec
}

/// Total column count of an embedding built with `spec` and `table`.
pub fn embedding_dim(spec: &EmbeddingSpec, table: Option<&DomainKnowledgeTable>) -> Result<usize> {
    let seq = spec.sequence_dim()?;
    Ok(match (spec.use_domain_knowledge, table) {
        (true, Some(t)) => seq + t.dim(),
        _ => seq,
    })
}

/// Encodes every record (row-parallel) and assembles a CSR matrix in input order.
pub fn embed_dataset(
    records: &[SequenceRecord],
    spec: &EmbeddingSpec,
    table: Option<&DomainKnowledgeTable>,
) -> Result<SparseMatrix> {
    if records.is_empty() {
        return Err(Error::invalid("cannot embed an empty dataset"));
    }
    let table = match (spec.use_domain_knowledge, table) {
        (true, Some(t)) => Some(t),
        (true, None) => {
            return Err(Error::invalid(
                "use_domain_knowledge is set but no domain-knowledge table was given",
            ))
        }
        (false, _) => None,
    };
    let cols = embedding_dim(spec, table)?;
    let alphabet = Alphabet::standard();

    let short = records
        .iter()
        .filter(|r| r.len() < spec.kmer.span())
        .count();
    if short > 0 && spec.mode != EncodingMode::SequenceOhe {
        log::warn!(
            "{short} sequence(s) shorter than the k-mer span {}; their sequence block is all zero",
            spec.kmer.span()
        );
    }

    let rows: Vec<SparseVector> = records
        .par_iter()
        .map(|r| {
            let seq = encode_sequence(r, spec, &alphabet)?;
            match table {
                Some(t) => Ok(seq.concat(&build_domain_vector(&r.label, t)?)),
                None => Ok(seq),
            }
        })
        .collect::<Result<_>>()?;
    SparseMatrix::from_rows(cols, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmers::kmer_index;

    fn rec(id: &str, seq: &str, label: &str) -> SequenceRecord {
        SequenceRecord::new(id, seq, label, false).unwrap()
    }

    fn spec(k: usize, mode: EncodingMode, max_len: Option<usize>) -> EmbeddingSpec {
        EmbeddingSpec {
            kmer: KmerSpec { k, gap: 0 },
            mode,
            max_len,
            ..Default::default()
        }
    }

    fn gene_only_table() -> DomainKnowledgeTable {
        let full = DomainKnowledgeTable::default_cancer_table().to_raw();
        let raw = full
            .into_iter()
            .map(|(l, mut cats)| {
                cats.retain(|c, _| c == "gene_mutations");
                (l, cats)
            })
            .collect();
        DomainKnowledgeTable::from_raw(raw).unwrap()
    }

    #[test]
    fn bag_counts_repeats() {
        let v = encode_sequence(
            &rec("a", "AAAAA", "L"),
            &spec(4, EncodingMode::BagOfKmers, None),
            &Alphabet::standard(),
        )
        .unwrap();
        assert_eq!(v.dim(), 194_481);
        assert_eq!(v.entries(), &[(0, 2.0)]);
    }

    #[test]
    fn positional_layout() {
        let v = encode_sequence(
            &rec("a", "CASS", "L"),
            &spec(4, EncodingMode::PositionalConcat, Some(4)),
            &Alphabet::standard(),
        )
        .unwrap();
        assert_eq!(v.dim(), 84);
        let ones: Vec<usize> = v.entries().iter().map(|&(i, _)| i).collect();
        assert_eq!(ones, [1, 21, 57, 78]);
    }

    #[test]
    fn sequence_ohe_pads() {
        let v = encode_sequence(
            &rec("a", "CA", "L"),
            &spec(1, EncodingMode::SequenceOhe, Some(3)),
            &Alphabet::standard(),
        )
        .unwrap();
        assert_eq!(v.dim(), 63);
        assert_eq!(v.entries(), &[(1, 1.0), (21, 1.0)]);
    }

    #[test]
    fn positional_rejects_long_sequences() {
        let err = encode_sequence(
            &rec("long1", "CASSRG", "L"),
            &spec(4, EncodingMode::PositionalConcat, Some(5)),
            &Alphabet::standard(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("long1"));
    }

    #[test]
    fn normalize_flag_gives_unit_rows() {
        let mut s = spec(2, EncodingMode::BagOfKmers, None);
        s.normalize = true;
        let v = encode_sequence(&rec("a", "CASSAS", "L"), &s, &Alphabet::standard()).unwrap();
        assert!((v.norm_l2() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gene_vectors_match_table() {
        let t = gene_only_table();
        let vocab = t.vocabulary(1);
        assert_eq!(
            vocab,
            ["APC", "ARID1A", "AXIN1", "BRAF", "BRCA1", "BRCA2", "CTNNB1", "FGFR3", "KRAS", "PIK3CA", "RB1", "TP53"]
        );
        let names = |label: &str| -> Vec<&str> {
            build_domain_vector(label, &t)
                .unwrap()
                .entries()
                .iter()
                .map(|&(i, _)| vocab[i].as_str())
                .collect()
        };
        assert_eq!(names("Breast"), ["BRCA1", "BRCA2", "PIK3CA", "TP53"]);
        assert_eq!(names("Colorectal"), ["APC", "BRAF", "KRAS", "TP53"]);
        assert_eq!(
            build_domain_vector("Liver", &t).unwrap(),
            build_domain_vector("Liver", &t).unwrap()
        );
        assert!(build_domain_vector("Lung", &t).is_err());
    }

    #[test]
    fn default_table_vectors_are_distinct() {
        let t = DomainKnowledgeTable::default_cancer_table();
        let labels: Vec<&str> = t.labels().collect();
        assert_eq!(labels, ["Breast", "Colorectal", "Liver", "Urothelial"]);
        for a in &labels {
            for b in &labels {
                if a != b {
                    assert_ne!(build_domain_vector(a, &t).unwrap(), build_domain_vector(b, &t).unwrap());
                }
            }
        }
    }

    #[test]
    fn unknown_category_rejected() {
        assert!(DomainKnowledgeTable::from_json_str(r#"{"A": {"diet": ["x"]}}"#).is_err());
    }

    #[test]
    fn dataset_dimensions() {
        let records = [rec("1", "CASSRGQYEQYF", "Breast"), rec("2", "CASSLEAGRAYEQYF", "Colorectal")];
        let s = spec(4, EncodingMode::BagOfKmers, None);
        let m = embed_dataset(&records, &s, None).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 194_481));

        let mut with_dk = s.clone();
        with_dk.use_domain_knowledge = true;
        let m = embed_dataset(&records, &with_dk, Some(&gene_only_table())).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 194_493));
        assert!(embed_dataset(&[], &s, None).is_err());
        assert!(embed_dataset(&records, &with_dk, None).is_err());
    }

    #[test]
    fn short_sequence_gives_zero_row() {
        let m = embed_dataset(&[rec("1", "CAS", "A")], &spec(4, EncodingMode::BagOfKmers, None), None).unwrap();
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn bag_entry_matches_kmer_index() {
        let a = Alphabet::standard();
        let v = encode_sequence(&rec("a", "CASSRGQYEQYF", "B"), &spec(4, EncodingMode::BagOfKmers, None), &a).unwrap();
        assert_eq!(v.get(kmer_index("CASS", &a).unwrap()), 1.0);
        assert_eq!(v.sum(), 9.0);
    }
}
