//! Sequence ingestion, validation and dataset summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of symbols in the residue alphabet (20 standard residues plus `X`).
pub const ALPHABET_SIZE: usize = 21;

const STANDARD_RESIDUES: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";
const CANONICAL_SYMBOLS: &[u8; ALPHABET_SIZE] = b"ACDEFGHIKLMNPQRSTVWYX";
const NO_INDEX: u8 = u8::MAX;

/// The fixed 21-letter residue alphabet: the 20 standard amino acids in
/// ascending one-letter order, then `X` at index 20.
#[derive(Clone)]
pub struct Alphabet {
    lookup: [u8; 256],
}

impl Alphabet {
    pub fn standard() -> Self {
        let mut lookup = [NO_INDEX; 256];
        for (i, &c) in CANONICAL_SYMBOLS.iter().enumerate() {
            lookup[c as usize] = i as u8;
        }
        Alphabet { lookup }
    }

    pub fn symbols(&self) -> &'static [u8; ALPHABET_SIZE] {
        CANONICAL_SYMBOLS
    }

    pub fn len(&self) -> usize {
        ALPHABET_SIZE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index_of(&self, residue: u8) -> Option<usize> {
        match self.lookup[residue as usize] {
            NO_INDEX => None,
            i => Some(i as usize),
        }
    }

    #[inline]
    pub fn symbol(&self, index: usize) -> Option<char> {
        CANONICAL_SYMBOLS.get(index).map(|&c| c as char)
    }

    /// Short digest of the symbol order, recorded in embedding sidecars.
    pub fn fingerprint(&self) -> String {
        crate::short_hash(CANONICAL_SYMBOLS)
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::standard()
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Alphabet")
            .field(&std::str::from_utf8(CANONICAL_SYMBOLS).unwrap())
            .finish()
    }
}

/// One labeled amino-acid sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub residues: String,
    pub label: String,
}

impl SequenceRecord {
    /// Builds a record, upper-casing residues and checking them against the
    /// alphabet. With `map_unknown`, nonstandard letters become `X`.
    pub fn new(
        id: impl Into<String>,
        residues: &str,
        label: impl Into<String>,
        map_unknown: bool,
    ) -> Result<Self> {
        let id = id.into();
        let label = label.into();
        let residues = normalize_residues(&id, residues, map_unknown)?;
        if label.trim().is_empty() {
            return Err(Error::InvalidRecord {
                id,
                msg: "empty label".into(),
            });
        }
        Ok(SequenceRecord {
            id,
            residues,
            label: label.trim().to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

fn normalize_residues(id: &str, raw: &str, map_unknown: bool) -> Result<String> {
    let alphabet = Alphabet::standard();
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::InvalidRecord {
            id: id.to_string(),
            msg: "empty sequence".into(),
        });
    }
    let mut out = String::with_capacity(trimmed.len());
    for c in trimmed.chars() {
        let upper = c.to_ascii_uppercase();
        let known = upper.is_ascii() && alphabet.index_of(upper as u8).is_some();
        if known {
            out.push(upper);
        } else if map_unknown && !c.is_whitespace() {
            out.push('X');
        } else {
            return Err(Error::UnknownResidue {
                id: id.to_string(),
                residue: c,
            });
        }
    }
    Ok(out)
}

/// True when the first line of a CSV file looks like an `id,sequence,label`
/// or `sequence,label` header.
pub fn sniff_csv_header(path: &Path) -> Result<bool> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let cols: Vec<String> = first
        .trim()
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    Ok(matches!(
        cols.iter().map(String::as_str).collect::<Vec<_>>().as_slice(),
        ["id", "sequence", "label"] | ["sequence", "label"]
    ))
}

/// Reads `id,sequence,label` (or `sequence,label`) rows.
///
/// Rows without an id get their 0-based data-row index as id.
pub fn load_csv(path: &Path, has_header: bool, map_unknown: bool) -> Result<Vec<SequenceRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header, map_unknown)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    has_header: bool,
    map_unknown: bool,
) -> Result<Vec<SequenceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let (id, seq, label) = match rec.len() {
            3 => (rec[0].to_string(), &rec[1], &rec[2]),
            2 => (row.to_string(), &rec[0], &rec[1]),
            n => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 2 or 3 columns, found {n}"),
                })
            }
        };
        let record = SequenceRecord::new(id, seq, label, map_unknown).map_err(|e| match e {
            Error::InvalidRecord { msg, .. } => Error::Parse { line, msg },
            Error::UnknownResidue { residue, .. } => Error::Parse {
                line,
                msg: format!("unknown residue '{residue}' (use --map-unknown to map it to X)"),
            },
            other => other,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records as CSV with an `id,sequence,label` header.
pub fn write_csv<W: Write>(writer: W, records: &[SequenceRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Parse {
        line: 0,
        msg: e.to_string(),
    };
    wtr.write_record(["id", "sequence", "label"]).map_err(to_err)?;
    for r in records {
        wtr.write_record([&r.id, &r.residues, &r.label])
            .map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Reads FASTA entries with `>id|label` headers; sequence lines are joined.
pub fn load_fasta(path: &Path, map_unknown: bool) -> Result<Vec<SequenceRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_fasta(BufReader::new(file), map_unknown)
}

pub fn read_fasta<R: BufRead>(reader: R, map_unknown: bool) -> Result<Vec<SequenceRecord>> {
    struct Pending {
        line: u64,
        id: String,
        label: String,
        body: String,
    }

    fn finish(p: Pending, map_unknown: bool) -> Result<SequenceRecord> {
        SequenceRecord::new(&p.id, &p.body, &p.label, map_unknown).map_err(|e| match e {
            Error::InvalidRecord { msg, .. } => Error::Parse { line: p.line, msg },
            other => other,
        })
    }

    let mut records = Vec::new();
    let mut pending: Option<Pending> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io("<fasta>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = pending.take() {
                records.push(finish(p, map_unknown)?);
            }
            let (id, label) = header.split_once('|').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "missing label (expected '>id|label')".into(),
            })?;
            if label.trim().is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "missing label (expected '>id|label')".into(),
                });
            }
            pending = Some(Pending {
                line: line_no,
                id: id.trim().to_string(),
                label: label.trim().to_string(),
                body: String::new(),
            });
        } else {
            match pending.as_mut() {
                Some(p) => p.body.push_str(line),
                None => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "sequence data before first '>' header".into(),
                    })
                }
            }
        }
    }
    if let Some(p) = pending.take() {
        records.push(finish(p, map_unknown)?);
    }
    Ok(records)
}

/// Loads CSV or FASTA depending on the file extension.
pub fn load_sequences(path: &Path, map_unknown: bool) -> Result<Vec<SequenceRecord>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("fa" | "fasta" | "faa") => load_fasta(path, map_unknown),
        _ => {
            let header = sniff_csv_header(path)?;
            load_csv(path, header, map_unknown)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub classes: BTreeMap<String, ClassStats>,
    pub total: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>10} {:>6} {:>6} {:>10}",
            "class", "count", "min", "max", "mean"
        )?;
        for (label, s) in &self.classes {
            writeln!(
                f,
                "{:<16} {:>10} {:>6} {:>6} {:>10.4}",
                label, s.count, s.min_len, s.max_len, s.mean_len
            )?;
        }
        write!(f, "{:<16} {:>10}", "total", self.total)
    }
}

pub fn compute_stats(records: &[SequenceRecord]) -> Result<DatasetStats> {
    if records.is_empty() {
        return Err(Error::invalid("cannot compute statistics of an empty dataset"));
    }
    let mut acc: BTreeMap<&str, (usize, usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let len = r.len();
        let e = acc.entry(&r.label).or_insert((0, usize::MAX, 0, 0));
        e.0 += 1;
        e.1 = e.1.min(len);
        e.2 = e.2.max(len);
        e.3 += len;
    }
    let classes = acc
        .into_iter()
        .map(|(label, (count, min_len, max_len, sum))| {
            (
                label.to_string(),
                ClassStats {
                    count,
                    min_len,
                    max_len,
                    mean_len: sum as f64 / count as f64,
                },
            )
        })
        .collect();
    Ok(DatasetStats {
        classes,
        total: records.len(),
    })
}

/// Class specification for [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticClass {
    pub label: String,
    pub motif: String,
}

impl SyntheticClass {
    pub fn new(label: impl Into<String>, motif: impl Into<String>) -> Self {
        SyntheticClass {
            label: label.into(),
            motif: motif.into(),
        }
    }
}

/// Random residue strings with a class motif planted at a random offset.
///
/// Records are emitted class by class, `n_per_class` each.
pub fn generate_synthetic(
    n_per_class: usize,
    classes: &[SyntheticClass],
    len_range: (usize, usize),
    seed: u64,
) -> Result<Vec<SequenceRecord>> {
    let (min_len, max_len) = len_range;
    if min_len > max_len {
        return Err(Error::invalid(format!(
            "invalid length range ({min_len}, {max_len})"
        )));
    }
    let alphabet = Alphabet::standard();
    for c in classes {
        if c.motif.is_empty() || c.motif.len() > min_len {
            return Err(Error::invalid(format!(
                "motif '{}' must be nonempty and no longer than the minimum length {min_len}",
                c.motif
            )));
        }
        if let Some(bad) = c.motif.bytes().find(|&b| alphabet.index_of(b).is_none()) {
            return Err(Error::invalid(format!(
                "motif '{}' contains '{}' outside the alphabet",
                c.motif, bad as char
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_per_class * classes.len());
    for class in classes {
        let motif = class.motif.as_bytes();
        for _ in 0..n_per_class {
            let len = rng.random_range(min_len..=max_len);
            let mut seq: Vec<u8> = (0..len)
                .map(|_| STANDARD_RESIDUES[rng.random_range(0..STANDARD_RESIDUES.len())])
                .collect();
            let at = rng.random_range(0..=len - motif.len());
            seq[at..at + motif.len()].copy_from_slice(motif);
            out.push(SequenceRecord {
                id: format!("syn{}", out.len()),
                residues: String::from_utf8(seq).expect("ascii residues"),
                label: class.label.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn alphabet_canonical_order() {
        let a = Alphabet::standard();
        assert_eq!(a.index_of(b'A'), Some(0));
        assert_eq!(a.index_of(b'C'), Some(1));
        assert_eq!(a.index_of(b'S'), Some(15));
        assert_eq!(a.index_of(b'Y'), Some(19));
        assert_eq!(a.index_of(b'X'), Some(20));
        assert_eq!(a.index_of(b'B'), None);
        assert_eq!(a.index_of(b'a'), None);
        let mut sorted = a.symbols()[..20].to_vec();
        sorted.sort();
        assert_eq!(&sorted[..], &a.symbols()[..20]);
    }

    #[test]
    fn csv_rows_parse_and_normalize() {
        let data = "s1,CASSRGQYEQYF,Breast\ns2,cassgq,Liver\n";
        let recs = read_csv(Cursor::new(data), false, false).unwrap();
        assert_eq!(
            recs[0],
            SequenceRecord {
                id: "s1".into(),
                residues: "CASSRGQYEQYF".into(),
                label: "Breast".into()
            }
        );
        assert_eq!(recs[1].residues, "CASSGQ");
    }

    #[test]
    fn csv_unknown_residue() {
        let data = "s3,CASB,Liver\n";
        let mapped = read_csv(Cursor::new(data), false, true).unwrap();
        assert_eq!(mapped[0].residues, "CASX");
        let err = read_csv(Cursor::new(data), false, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'B'"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn csv_two_columns_get_row_ids() {
        let data = "sequence,label\nCASS,A\nCAST,B\n";
        let recs = read_csv(Cursor::new(data), true, false).unwrap();
        assert_eq!(recs[0].id, "0");
        assert_eq!(recs[1].id, "1");
    }

    #[test]
    fn csv_errors_name_line() {
        let err = read_csv(Cursor::new("a,CASS,L\nb,,L\n"), false, false).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("empty sequence"), "{err}");
        let err = read_csv(Cursor::new("a,CASS,L\nb\n"), false, false).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn fasta_multiline() {
        let recs = read_fasta(Cursor::new(">a|Breast\nCASS\nRGQYEQYF\n"), false).unwrap();
        assert_eq!(
            recs,
            vec![SequenceRecord {
                id: "a".into(),
                residues: "CASSRGQYEQYF".into(),
                label: "Breast".into()
            }]
        );
        assert!(read_fasta(Cursor::new(""), false).unwrap().is_empty());
        let err = read_fasta(Cursor::new(">a\nCASS\n"), false).unwrap_err();
        assert!(err.to_string().contains("missing label"));
    }

    #[test]
    fn stats_small_cases() {
        let recs = vec![
            SequenceRecord::new("1", "AAAA", "A", false).unwrap(),
            SequenceRecord::new("2", "AAAAAA", "A", false).unwrap(),
        ];
        let s = compute_stats(&recs).unwrap();
        let a = &s.classes["A"];
        assert_eq!((a.count, a.min_len, a.max_len), (2, 4, 6));
        assert_eq!(format!("{:.4}", a.mean_len), "5.0000");

        let one = compute_stats(&[SequenceRecord::new("x", "CASSRGQ", "B", false).unwrap()]).unwrap();
        let b = &one.classes["B"];
        assert_eq!((b.count, b.min_len, b.max_len, b.mean_len), (1, 7, 7, 7.0));
        assert!(compute_stats(&[]).is_err());
    }

    #[test]
    fn synthetic_contains_motif_and_is_deterministic() {
        let classes = [SyntheticClass::new("A", "CASS")];
        let a = generate_synthetic(2, &classes, (8, 8), 7).unwrap();
        assert_eq!(a.len(), 2);
        for r in &a {
            assert_eq!(r.len(), 8);
            assert!(r.residues.contains("CASS"));
        }
        let b = generate_synthetic(2, &classes, (8, 8), 7).unwrap();
        assert_eq!(a, b);
        assert!(generate_synthetic(0, &classes, (8, 8), 7).unwrap().is_empty());
        assert!(generate_synthetic(1, &classes, (9, 8), 7).is_err());
        assert!(generate_synthetic(1, &classes, (3, 8), 7).is_err());
    }
}
