//! Numeric dataset representations: frequency matrices with author labels,
//! the stratified 50/25/25 split and the label-last text format.
//!
//! Text format: one row per line, feature values separated by whitespace,
//! the integer author label in the last column. Values are written with
//! Rust's shortest round-trip formatting, so `read(write(m)) == m` bit for bit.
//!
//! Shuffling uses `ChaCha8Rng::seed_from_u64(seed)` with a Fisher-Yates
//! shuffle per author stratum.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{featurize, Document, FeatureSet, FeatureSetName, MAX_AUTHORS};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = MAX_AUTHORS;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Row>,
    pub feature_set_name: String,
    pub n_features: usize,
}

impl FeatureMatrix {
    pub fn new(feature_set_name: impl Into<String>, n_features: usize, rows: Vec<Row>) -> Result<Self> {
        let m = FeatureMatrix {
            rows,
            feature_set_name: feature_set_name.into(),
            n_features,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_corpus(corpus: &[Document], fs: &FeatureSet) -> Result<Self> {
        let rows = corpus
            .par_iter()
            .map(|doc| {
                Ok(Row {
                    features: featurize(doc, fs)?,
                    label: doc.author_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::new(fs.name.to_string(), fs.len(), rows)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.features.len() != self.n_features {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} features, expected {}",
                    row.features.len(),
                    self.n_features
                )));
            }
            if let Some(v) = row.features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidMatrix(format!("row {i} has value {v} outside [0, 1]")));
            }
            if row.label >= NUM_CLASSES {
                return Err(Error::InvalidMatrix(format!("row {i} has label {}", row.label)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_features != other.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                actual: other.n_features,
            });
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(FeatureMatrix {
            rows,
            feature_set_name: self.feature_set_name.clone(),
            n_features: self.n_features,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            for v in &row.features {
                out.push_str(&v.to_string());
                out.push(' ');
            }
            out.push_str(&row.label.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the label-last format. Any run of whitespace separates fields;
    /// a label written as an integral float (`3.0`) is accepted.
    pub fn parse(text: &str, feature_set_name: &str, origin: &Path) -> Result<FeatureMatrix> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut rows = Vec::new();
        let mut n_features = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < 2 {
                return Err(err(lineno, "expected at least one feature and a label".into()));
            }
            let expected = *n_features.get_or_insert(fields.len() - 1);
            if fields.len() - 1 != expected {
                return Err(err(
                    lineno,
                    format!("ragged row: {} features, expected {expected}", fields.len() - 1),
                ));
            }
            let (label_field, value_fields) = fields.split_last().expect("non-empty");
            let mut features = Vec::with_capacity(expected);
            for f in value_fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| err(lineno, format!("non-numeric field {f:?}")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(err(lineno, format!("value {v} outside [0, 1]")));
                }
                features.push(v);
            }
            let label_value: f64 = label_field
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric label {label_field:?}")))?;
            if label_value.fract() != 0.0 || !(0.0..NUM_CLASSES as f64).contains(&label_value) {
                return Err(err(lineno, format!("label {label_field} outside 0-9")));
            }
            rows.push(Row {
                features,
                label: label_value as usize,
            });
        }
        Ok(FeatureMatrix {
            rows,
            feature_set_name: feature_set_name.to_string(),
            n_features: n_features.unwrap_or(0),
        })
    }
}

pub fn write_matrix(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    matrix.validate()?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(matrix.to_text().as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// The feature-set name is taken from the file stem.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    FeatureMatrix::parse(&text, name, path)
}

/// Per-author partition sizes `(train, validation, test)`: validation and
/// test each get `floor(n / 4)` texts, training gets the rest.
pub fn split_sizes(n: usize) -> Option<(usize, usize, usize)> {
    if n < 4 {
        return None;
    }
    let quarter = n / 4;
    Some((n - 2 * quarter, quarter, quarter))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: FeatureMatrix,
    pub validation: FeatureMatrix,
    pub test: FeatureMatrix,
    pub shuffle_seed: u64,
}

impl Split {
    /// Training and validation rows together, for methods without a
    /// validation phase.
    pub fn train_with_validation(&self) -> FeatureMatrix {
        self.train
            .concat(&self.validation)
            .expect("split parts share a feature count")
    }
}

/// Stratified shuffle-and-split. Each author's rows are shuffled with the
/// seeded generator and cut into train/validation/test by [`split_sizes`].
/// Within each part rows are grouped by author in ascending label order.
pub fn split_corpus(matrix: &FeatureMatrix, seed: u64) -> Result<Split> {
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, row) in matrix.rows.iter().enumerate() {
        strata[row.label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (author, stratum) in strata.iter_mut().enumerate() {
        if stratum.is_empty() {
            continue;
        }
        let (n_train, n_val, _) = split_sizes(stratum.len()).ok_or(Error::StratumTooSmall {
            author,
            rows: stratum.len(),
        })?;
        stratum.shuffle(&mut rng);
        let pick = |ids: &[usize]| ids.iter().map(|&i| matrix.rows[i].clone()).collect::<Vec<_>>();
        train.extend(pick(&stratum[..n_train]));
        validation.extend(pick(&stratum[n_train..n_train + n_val]));
        test.extend(pick(&stratum[n_train + n_val..]));
    }
    let part = |rows| FeatureMatrix {
        rows,
        feature_set_name: matrix.feature_set_name.clone(),
        n_features: matrix.n_features,
    };
    Ok(Split {
        train: part(train),
        validation: part(validation),
        test: part(test),
        shuffle_seed: seed,
    })
}

/// Dataset representation name such as `ROST-PA-2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetId {
    pub features: FeatureSetName,
    pub shuffle: u8,
}

impl DatasetId {
    pub fn new(features: FeatureSetName, shuffle: u8) -> Self {
        DatasetId { features, shuffle }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ROST-{}-{}", self.features, self.shuffle)
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("dataset id {s:?} is not of the form ROST-<P|PA|PAC|PC>-<n>"));
        let mut parts = s.trim().split('-');
        if !parts.next().is_some_and(|p| p.eq_ignore_ascii_case("rost")) {
            return Err(bad());
        }
        let features: FeatureSetName = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let shuffle: u8 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if parts.next().is_some() || shuffle == 0 {
            return Err(bad());
        }
        Ok(DatasetId { features, shuffle })
    }
}

/// Train/validation/test matrices of one dataset representation on disk:
/// `<root>/<ROST-X-n>/{train,validation,test}.txt`.
pub fn load_split_dir(root: impl AsRef<Path>, id: DatasetId) -> Result<Split> {
    let dir = root.as_ref().join(id.to_string());
    let load = |name: &str| {
        let path = dir.join(format!("{name}.txt"));
        if !path.exists() {
            return Err(Error::MissingData(path));
        }
        read_matrix(&path)
    };
    let mut split = Split {
        train: load("train")?,
        validation: load("validation")?,
        test: load("test")?,
        shuffle_seed: u64::from(id.shuffle),
    };
    for part in [&mut split.train, &mut split.validation, &mut split.test] {
        part.feature_set_name = id.to_string();
    }
    let n = split.train.n_features;
    if split.validation.n_features != n || split.test.n_features != n {
        return Err(Error::InvalidMatrix(format!("{id}: parts disagree on feature count")));
    }
    Ok(split)
}

pub fn write_split_dir(split: &Split, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&split.train, dir.join("train.txt"))?;
    write_matrix(&split.validation, dir.join("validation.txt"))?;
    write_matrix(&split.test, dir.join("test.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_with_counts(counts: &[usize]) -> FeatureMatrix {
        let mut rows = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                rows.push(Row {
                    features: vec![i as f64 / 100.0, label as f64 / 10.0],
                    label,
                });
            }
        }
        FeatureMatrix::new("T", 2, rows).unwrap()
    }

    #[test]
    fn split_sizes_match_published_rows() {
        assert_eq!(split_sizes(28), Some((14, 7, 7)));
        assert_eq!(split_sizes(27), Some((15, 6, 6)));
        assert_eq!(split_sizes(4), Some((2, 1, 1)));
        assert_eq!(split_sizes(3), None);
    }

    #[test]
    fn small_stratum_is_rejected() {
        let m = matrix_with_counts(&[5, 3]);
        assert!(matches!(
            split_corpus(&m, 1),
            Err(Error::StratumTooSmall { author: 1, rows: 3 })
        ));
    }

    #[test]
    fn split_partitions_rows() {
        let m = matrix_with_counts(&[28, 44, 27, 34]);
        let s = split_corpus(&m, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (14 + 22 + 15 + 18, 7 + 11 + 6 + 8, 7 + 11 + 6 + 8));
        let mut all: Vec<String> = [&s.train, &s.validation, &s.test]
            .iter()
            .flat_map(|p| p.rows.iter().map(|r| format!("{:?}", r)))
            .collect();
        let mut orig: Vec<String> = m.rows.iter().map(|r| format!("{:?}", r)).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let m = matrix_with_counts(&[10, 12, 9]);
        assert_eq!(split_corpus(&m, 42).unwrap(), split_corpus(&m, 42).unwrap());
        let a = split_corpus(&m, 1).unwrap();
        let b = split_corpus(&m, 2).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        assert_eq!(a.test.len(), b.test.len());
        assert_ne!(a.train, b.train);
    }

    #[test]
    fn row_format() {
        let m = FeatureMatrix::new("T", 2, vec![Row { features: vec![0.0, 0.5], label: 3 }]).unwrap();
        assert_eq!(m.to_text(), "0 0.5 3\n");
    }

    #[test]
    fn reader_is_tolerant_of_whitespace() {
        let m = FeatureMatrix::parse("0.1   0.2\t4\n\n0 1 0.0\n", "x", Path::new("m")).unwrap();
        assert_eq!(m.n_features, 2);
        assert_eq!(m.labels(), vec![4, 0]);
    }

    #[test]
    fn reader_errors_carry_line_numbers() {
        let cases = [
            ("0.1 0.2 1\n0.3 1\n", 2, "ragged"),
            ("0.1 abc 1\n", 1, "non-numeric"),
            ("0.1 0.2 10\n", 1, "outside 0-9"),
            ("0.1 0.2 1\n0.1 0.2 -1\n", 2, "outside 0-9"),
            ("0.1 1.5 1\n", 1, "outside [0, 1]"),
        ];
        for (text, expected_line, needle) in cases {
            match FeatureMatrix::parse(text, "x", Path::new("m")) {
                Err(Error::Parse { line, message, .. }) => {
                    assert_eq!(line, expected_line, "{text:?}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn file_round_trip_and_split_dir() {
        let dir = tempfile::tempdir().unwrap();
        let m = matrix_with_counts(&[4, 6]);
        let path = dir.path().join("ROST-P-1.txt");
        write_matrix(&m, &path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.rows, m.rows);
        assert_eq!(back.feature_set_name, "ROST-P-1");

        let split = split_corpus(&m, 3).unwrap();
        let id: DatasetId = "ROST-P-1".parse().unwrap();
        write_split_dir(&split, dir.path().join(id.to_string())).unwrap();
        let loaded = load_split_dir(dir.path(), id).unwrap();
        assert_eq!(loaded.train.rows, split.train.rows);
        assert_eq!(loaded.test.rows, split.test.rows);
        assert_eq!(loaded.train_with_validation().len(), split.train.len() + split.validation.len());

        let missing: DatasetId = "ROST-PA-2".parse().unwrap();
        assert!(matches!(load_split_dir(dir.path(), missing), Err(Error::MissingData(_))));
    }

    #[test]
    fn dataset_ids() {
        let id: DatasetId = "ROST-PAC-3".parse().unwrap();
        assert_eq!(id, DatasetId::new(FeatureSetName::PAC, 3));
        assert_eq!(id.to_string(), "ROST-PAC-3");
        assert!("ROST-X-1".parse::<DatasetId>().is_err());
        assert!("ROST-P".parse::<DatasetId>().is_err());
        assert!("ROST-P-0".parse::<DatasetId>().is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            rows in proptest::collection::vec(
                (proptest::collection::vec(0.0f64..=1.0, 3), 0usize..10), 1..20)
        ) {
            let rows: Vec<Row> = rows.into_iter().map(|(features, label)| Row { features, label }).collect();
            let m = FeatureMatrix::new("T", 3, rows).unwrap();
            let back = FeatureMatrix::parse(&m.to_text(), "T", Path::new("m")).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
