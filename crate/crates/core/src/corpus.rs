//! Text ingestion, tokenization, corpus statistics and frequency features.
//!
//! A token is a maximal run of letters, optionally joined to further letter
//! runs by a single hyphen or apostrophe (`și-a`, `n'a`). Digits and
//! punctuation never appear in tokens. Every token is passed through
//! [`normalize_word`] so it can be matched against lexicon entries directly.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lexicon::{normalize_word, IposKind, Lexicon};
use crate::metrics::mean_and_sample_std;

pub const MAX_AUTHORS: usize = 10;

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '\u{2010}' | '\u{2011}')
}

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphabetic() {
            i += 1;
            continue;
        }
        let start = i;
        loop {
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            // a joiner only binds when a letter follows it
            if i + 1 < chars.len() && is_joiner(chars[i]) && chars[i + 1].is_alphabetic() {
                i += 1;
                continue;
            }
            break;
        }
        let raw: String = chars[start..i].iter().collect();
        let token = normalize_word(&raw);
        if !token.is_empty() {
            tokens.push(token);
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub author_id: usize,
    pub title: String,
    pub tokens: Vec<String>,
    pub word_count: usize,
    pub unique_word_count: usize,
}

impl Document {
    pub fn new(author_id: usize, title: impl Into<String>, text: &str) -> Result<Self> {
        Self::from_tokens(author_id, title, tokenize(text))
    }

    pub fn from_tokens(author_id: usize, title: impl Into<String>, tokens: Vec<String>) -> Result<Self> {
        if author_id >= MAX_AUTHORS {
            return Err(Error::InvalidParameter(format!(
                "author id {author_id} outside 0..{MAX_AUTHORS}"
            )));
        }
        let unique_word_count = tokens.iter().collect::<HashSet<_>>().len();
        Ok(Document {
            author_id,
            title: title.into(),
            word_count: tokens.len(),
            unique_word_count,
            tokens,
        })
    }
}

/// Reads `<dir>/<author_id>_<author_slug>/<title>.txt`. Authors and titles are
/// visited in lexicographic order so the document order is reproducible.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let mut author_dirs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            author_dirs.push(entry.path());
        }
    }
    author_dirs.sort();

    let mut docs = Vec::new();
    for author_dir in author_dirs {
        let name = author_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let id_part = name.split('_').next().unwrap_or_default();
        let author_id: usize = id_part.parse().map_err(|_| {
            Error::CorpusLayout(format!(
                "directory {name:?} does not start with `<author_id>_`"
            ))
        })?;
        let mut files = Vec::new();
        for entry in std::fs::read_dir(&author_dir).map_err(|e| Error::io(&author_dir, e))? {
            let path = entry.map_err(|e| Error::io(&author_dir, e))?.path();
            if path.extension().is_some_and(|ext| ext == "txt") {
                files.push(path);
            }
        }
        files.sort();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let title = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            docs.push(Document::new(author_id, title, &text)?);
        }
    }
    if docs.is_empty() {
        return Err(Error::CorpusLayout(format!("no documents under {}", dir.display())));
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub stddev: f64,
}

/// Per-author row of word, unique-word and words/unique ratio statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorStats {
    pub author_id: usize,
    pub documents: usize,
    pub words: MeanStd,
    pub unique_words: MeanStd,
    pub ratio: MeanStd,
    /// Only one usable document, so the standard deviations are 0 by convention.
    pub single_document: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub authors: Vec<AuthorStats>,
    /// Titles of documents left out because they contain no words.
    pub excluded: Vec<String>,
}

pub fn corpus_author_stats(corpus: &[Document]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::InvalidParameter("empty corpus".into()));
    }
    let mut excluded = Vec::new();
    let mut by_author: Vec<Vec<&Document>> = vec![Vec::new(); MAX_AUTHORS];
    for doc in corpus {
        if doc.word_count == 0 {
            log::warn!("excluding {:?}: no words, ratio undefined", doc.title);
            excluded.push(doc.title.clone());
            continue;
        }
        by_author[doc.author_id].push(doc);
    }
    let authors = by_author
        .iter()
        .enumerate()
        .filter(|(_, docs)| !docs.is_empty())
        .map(|(author_id, docs)| {
            let collect = |f: &dyn Fn(&Document) -> f64| docs.iter().map(|d| f(d)).collect::<Vec<_>>();
            let words = collect(&|d| d.word_count as f64);
            let unique = collect(&|d| d.unique_word_count as f64);
            let ratio = collect(&|d| d.word_count as f64 / d.unique_word_count as f64);
            let ms = |v: &[f64]| {
                let (mean, stddev) = mean_and_sample_std(v);
                MeanStd { mean, stddev }
            };
            AuthorStats {
                author_id,
                documents: docs.len(),
                words: ms(&words),
                unique_words: ms(&unique),
                ratio: ms(&ratio),
                single_document: docs.len() == 1,
            }
        })
        .collect();
    Ok(CorpusStats { authors, excluded })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IposStats {
    pub kind: IposKind,
    pub occurrences: usize,
    /// Share of all corpus words, in percent.
    pub percent_of_words: f64,
    pub files_with_any: usize,
    pub avg_per_file: f64,
    pub lexicon_size: usize,
}

pub fn ipos_occurrence_stats(corpus: &[Document], lexicons: &[&Lexicon]) -> Vec<IposStats> {
    let total_words: usize = corpus.iter().map(|d| d.word_count).sum();
    lexicons
        .iter()
        .map(|lex| {
            let words: HashSet<&str> = lex.words().iter().map(String::as_str).collect();
            let per_doc: Vec<usize> = corpus
                .par_iter()
                .map(|d| d.tokens.iter().filter(|t| words.contains(t.as_str())).count())
                .collect();
            let occurrences: usize = per_doc.iter().sum();
            IposStats {
                kind: lex.kind(),
                occurrences,
                percent_of_words: if total_words == 0 {
                    0.0
                } else {
                    100.0 * occurrences as f64 / total_words as f64
                },
                files_with_any: per_doc.iter().filter(|&&c| c > 0).count(),
                avg_per_file: if corpus.is_empty() {
                    0.0
                } else {
                    occurrences as f64 / corpus.len() as f64
                },
                lexicon_size: lex.len(),
            }
        })
        .collect()
}

/// Named combinations of IPoS categories used as feature spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSetName {
    P,
    PA,
    PAC,
    PC,
}

impl FeatureSetName {
    pub const ALL: [FeatureSetName; 4] = [
        FeatureSetName::P,
        FeatureSetName::PA,
        FeatureSetName::PAC,
        FeatureSetName::PC,
    ];

    /// Categories in column order.
    pub fn kinds(self) -> &'static [IposKind] {
        use IposKind::*;
        match self {
            FeatureSetName::P => &[Preposition],
            FeatureSetName::PA => &[Preposition, Adverb],
            FeatureSetName::PAC => &[Preposition, Adverb, Conjunction],
            FeatureSetName::PC => &[Preposition, Conjunction],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSetName::P => "P",
            FeatureSetName::PA => "PA",
            FeatureSetName::PAC => "PAC",
            FeatureSetName::PC => "PC",
        }
    }
}

impl fmt::Display for FeatureSetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P" => Ok(FeatureSetName::P),
            "PA" => Ok(FeatureSetName::PA),
            "PAC" => Ok(FeatureSetName::PAC),
            "PC" => Ok(FeatureSetName::PC),
            other => Err(Error::InvalidParameter(format!("unknown feature set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub name: FeatureSetName,
    pub columns: Vec<(IposKind, String)>,
    index: HashMap<String, usize>,
}

impl FeatureSet {
    pub fn new(name: FeatureSetName, columns: Vec<(IposKind, String)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyFeatureSet(name.to_string()));
        }
        let mut index = HashMap::with_capacity(columns.len());
        for (i, (_, w)) in columns.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate feature word {w:?}")));
            }
        }
        Ok(FeatureSet { name, columns, index })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// `<index>\t<kind>\t<word>` per line.
    pub fn to_columns_string(&self) -> String {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, (k, w))| format!("{i}\t{k}\t{w}\n"))
            .collect()
    }
}

/// Concatenates the lexicons in the category order of `name` and keeps only
/// words attested at least once in `corpus`. A word listed under two
/// categories keeps its first column only.
pub fn build_feature_set(
    corpus: &[Document],
    lexicons: &[&Lexicon],
    name: FeatureSetName,
) -> Result<FeatureSet> {
    let kinds: Vec<IposKind> = lexicons.iter().map(|l| l.kind()).collect();
    if kinds != name.kinds() {
        return Err(Error::LexiconOrder {
            name: name.to_string(),
            expected: name
                .kinds()
                .iter()
                .map(|k| k.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        });
    }
    let mut attested: HashSet<&str> = HashSet::new();
    for doc in corpus {
        attested.extend(doc.tokens.iter().map(String::as_str));
    }
    let mut seen = HashSet::new();
    let columns: Vec<(IposKind, String)> = lexicons
        .iter()
        .flat_map(|lex| lex.words().iter().map(move |w| (lex.kind(), w)))
        .filter(|(_, w)| attested.contains(w.as_str()))
        .filter(|(_, w)| seen.insert(w.as_str()))
        .map(|(k, w)| (k, w.clone()))
        .collect();
    FeatureSet::new(name, columns)
}

/// Relative frequency of every feature word in `doc`.
pub fn featurize(doc: &Document, fs: &FeatureSet) -> Result<Vec<f64>> {
    if doc.word_count == 0 {
        return Err(Error::EmptyDocument {
            title: doc.title.clone(),
        });
    }
    let mut counts = vec![0usize; fs.len()];
    for token in &doc.tokens {
        if let Some(i) = fs.column_of(token) {
            counts[i] += 1;
        }
    }
    let n = doc.word_count as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
