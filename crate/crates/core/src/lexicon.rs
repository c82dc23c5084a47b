//! Word lists for the inflexible parts of speech (prepositions, adverbs,
//! conjunctions, interjections) that define the feature space.
//!
//! A lexicon file is UTF-8 with one word per line. Blank lines and lines whose
//! first non-blank character is `#` are skipped. Every entry is passed through
//! [`normalize_word`], and later duplicates collapse onto the first occurrence,
//! so the position of a word in [`Lexicon::words`] is stable for a given file.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Inflexible part-of-speech category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IposKind {
    Preposition,
    Adverb,
    Conjunction,
    Interjection,
}

impl IposKind {
    pub const ALL: [IposKind; 4] = [
        IposKind::Preposition,
        IposKind::Adverb,
        IposKind::Conjunction,
        IposKind::Interjection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IposKind::Preposition => "prepositions",
            IposKind::Adverb => "adverbs",
            IposKind::Conjunction => "conjunctions",
            IposKind::Interjection => "interjections",
        }
    }
}

impl fmt::Display for IposKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IposKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "preposition" | "prepositions" | "p" => Ok(IposKind::Preposition),
            "adverb" | "adverbs" | "a" => Ok(IposKind::Adverb),
            "conjunction" | "conjunctions" | "c" => Ok(IposKind::Conjunction),
            "interjection" | "interjections" | "i" => Ok(IposKind::Interjection),
            other => Err(Error::InvalidParameter(format!("unknown IPoS kind {other:?}"))),
        }
    }
}

/// Lowercase, NFC-composed form of `raw` with Romanian cedilla letters mapped
/// to their comma-below forms and leading/trailing non-alphanumerics removed.
///
/// Idempotent: `normalize_word(&normalize_word(x)) == normalize_word(x)`.
pub fn normalize_word(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    let mapped: String = lowered
        .chars()
        .map(|c| match c {
            '\u{015F}' => '\u{0219}', // ş -> ș
            '\u{0163}' => '\u{021B}', // ţ -> ț
            other => other,
        })
        .nfc()
        .collect();
    mapped
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    kind: IposKind,
    words: Vec<String>,
    source_path: PathBuf,
}

impl Lexicon {
    /// Builds a lexicon from in-memory entries using the same rules as
    /// [`load_lexicon`]. `source_path` is only used in error messages.
    pub fn from_lines<'a, I>(kind: IposKind, lines: I, source_path: impl Into<PathBuf>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let source_path = source_path.into();
        let mut seen = HashSet::new();
        let mut words = Vec::new();
        for (idx, line) in lines.into_iter().enumerate() {
            let entry = line.trim_end_matches('\r').trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            if entry.chars().any(char::is_whitespace) {
                return Err(Error::RejectedEntry {
                    path: source_path,
                    line: idx + 1,
                    entry: entry.to_string(),
                    reason: "contains internal whitespace",
                });
            }
            let word = normalize_word(entry);
            if word.is_empty() {
                return Err(Error::RejectedEntry {
                    path: source_path,
                    line: idx + 1,
                    entry: entry.to_string(),
                    reason: "empty after normalization",
                });
            }
            if seen.insert(word.clone()) {
                words.push(word);
            }
        }
        Ok(Lexicon {
            kind,
            words,
            source_path,
        })
    }

    pub fn kind(&self) -> IposKind {
        self.kind
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source_path(&self) -> &Path {
        &self.source_path
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }

    /// One word per line, LF-terminated. Reloading this text yields the same
    /// word list.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }
}

pub fn load_lexicon(path: impl AsRef<Path>, kind: IposKind) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::from_lines(kind, text.split('\n'), path)
}
