//! Monolingual embedding sets and bilingual lexicons.
//!
//! Embeddings are read from the fastText text format: a `<n> <d>` header line
//! followed by one `<token> <f1> ... <fd>` line per word. Lexicons hold one
//! whitespace-separated `<src> <tgt>` pair per line.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Vocabulary cap used when none is given.
pub const DEFAULT_MAX_VOCAB: usize = 20_000;

/// Word vectors of one language, one row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    lang: String,
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(lang: impl Into<String>, words: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        if words.len() != matrix.nrows() {
            return Err(Error::Shape(format!(
                "{} words for a matrix with {} rows",
                words.len(),
                matrix.nrows()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token `{w}`")));
            }
        }
        Ok(Self {
            lang: lang.into(),
            words,
            index,
            matrix,
        })
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// The first `n` words (or all of them if fewer).
    pub fn head(&self, n: usize) -> EmbeddingSet {
        let n = n.min(self.len());
        EmbeddingSet {
            lang: self.lang.clone(),
            words: self.words[..n].to_vec(),
            index: self.words[..n]
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i))
                .collect(),
            matrix: self.matrix.slice(ndarray::s![..n, ..]).to_owned(),
        }
    }

    /// Writes the set in fastText text format. Floats are printed in their
    /// shortest round-trip form, so reading back is lossless.
    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "{} {}", self.len(), self.dim())?;
            for (w, row) in self.words.iter().zip(self.matrix.rows()) {
                write!(out, "{w}")?;
                for v in row {
                    write!(out, " {v}")?;
                }
                writeln!(out)?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Result of [`load_embeddings`]: the set plus how many duplicate tokens were skipped.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub set: EmbeddingSet,
    pub duplicates_skipped: usize,
}

/// Reads the first `max_vocab` distinct words of a fastText `.vec` file.
///
/// Rows are returned as stored; call [`normalize`] afterwards. The language
/// tag is taken from the file stem.
pub fn load_embeddings(path: impl AsRef<Path>, max_vocab: usize) -> Result<Loaded> {
    let path = path.as_ref();
    let lang = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_embeddings_as(path, &lang, max_vocab)
}

/// Like [`load_embeddings`] with an explicit language tag.
pub fn load_embeddings_as(path: impl AsRef<Path>, lang: &str, max_vocab: usize) -> Result<Loaded> {
    let path = path.as_ref();
    if max_vocab == 0 {
        return Err(Error::InvalidArgument("max_vocab must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "missing `<n> <d>` header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) if d > 0 => (n, d),
            _ => return Err(Error::parse(path, 1, format!("malformed header `{header}`"))),
        },
        _ => return Err(Error::parse(path, 1, format!("malformed header `{header}`"))),
    };

    let keep = count.min(max_vocab);
    let mut words = Vec::with_capacity(keep);
    let mut data = Vec::with_capacity(keep * dim);
    let mut seen = HashSet::with_capacity(keep);
    let mut duplicates_skipped = 0;

    for (offset, line) in lines.enumerate() {
        if words.len() == keep {
            break;
        }
        let lineno = offset + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a token");
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        let start = data.len();
        for v in values {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => data.push(x),
                _ => return Err(Error::parse(path, lineno, format!("invalid value `{v}`"))),
            }
        }
        if !seen.insert(token.to_string()) {
            data.truncate(start);
            duplicates_skipped += 1;
            continue;
        }
        words.push(token.to_string());
    }

    if duplicates_skipped > 0 {
        log::warn!("{}: skipped {duplicates_skipped} duplicate tokens", path.display());
    }
    let matrix = Array2::from_shape_vec((words.len(), dim), data).expect("row-major buffer");
    Ok(Loaded {
        set: EmbeddingSet::new(lang, words, matrix)?,
        duplicates_skipped,
    })
}

/// Scales every row to unit Euclidean norm.
pub fn normalize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut matrix = set.matrix.clone();
    for (word, mut row) in set.words.iter().zip(matrix.rows_mut()) {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroRow(word.clone()));
        }
        row /= norm;
    }
    Ok(EmbeddingSet {
        lang: set.lang.clone(),
        words: set.words.clone(),
        index: set.index.clone(),
        matrix,
    })
}

/// Ground-truth translation pairs between two languages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub source_lang: String,
    pub target_lang: String,
    pairs: BTreeSet<(String, String)>,
}

impl Lexicon {
    pub fn new(
        source_lang: impl Into<String>,
        target_lang: impl Into<String>,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        Self {
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            pairs: pairs.into_iter().collect(),
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, src: &str, tgt: &str) -> bool {
        self.pairs.contains(&(src.to_string(), tgt.to_string()))
    }

    /// Targets of each source token, sources in sorted order.
    pub fn grouped(&self) -> Vec<(&str, Vec<&str>)> {
        let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
        for (s, t) in self.pairs() {
            match out.last_mut() {
                Some((last, targets)) if *last == s => targets.push(t),
                _ => out.push((s, vec![t])),
            }
        }
        out
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            for (s, t) in self.pairs() {
                writeln!(out, "{s} {t}")?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconOptions {
    /// Lowercase both tokens of every pair before vocabulary lookup.
    pub lowercase: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedLexicon {
    pub lexicon: Lexicon,
    /// Fraction of well-formed lines whose pair survived the vocabulary filter.
    pub retention: f64,
}

/// Reads a lexicon and keeps only pairs present in both vocabularies.
pub fn load_lexicon(
    path: impl AsRef<Path>,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    options: LexiconOptions,
) -> Result<LoadedLexicon> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut total = 0usize;
    let mut pairs = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (s, t) = match fields.as_slice() {
            [] => continue,
            [s, t] => (*s, *t),
            _ => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected `<src> <tgt>`, found `{line}`"),
                ))
            }
        };
        total += 1;
        let (s, t) = if options.lowercase {
            (s.to_lowercase(), t.to_lowercase())
        } else {
            (s.to_string(), t.to_string())
        };
        if src.index_of(&s).is_some() && tgt.index_of(&t).is_some() {
            pairs.insert((s, t));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyLexicon {
            path: path.to_path_buf(),
        });
    }
    let kept: usize = pairs.len();
    let retention = kept as f64 / total as f64;
    if retention < 1.0 {
        log::info!(
            "{}: kept {kept} of {total} pairs ({:.1}%)",
            path.display(),
            100.0 * retention
        );
    }
    Ok(LoadedLexicon {
        lexicon: Lexicon {
            source_lang: src.lang().to_string(),
            target_lang: tgt.lang().to_string(),
            pairs,
        },
        retention,
    })
}

/// Relational join of two lexicons through their shared pivot language.
pub fn compose_lexicons(a_to_pivot: &Lexicon, pivot_to_b: &Lexicon) -> Result<Lexicon> {
    if a_to_pivot.target_lang != pivot_to_b.source_lang {
        return Err(Error::LanguageMismatch {
            expected: a_to_pivot.target_lang.clone(),
            found: pivot_to_b.source_lang.clone(),
        });
    }
    let mut by_pivot: HashMap<&str, Vec<&str>> = HashMap::new();
    for (p, b) in pivot_to_b.pairs() {
        by_pivot.entry(p).or_default().push(b);
    }
    let mut pairs = BTreeSet::new();
    for (a, p) in a_to_pivot.pairs() {
        if let Some(targets) = by_pivot.get(p) {
            for b in targets {
                pairs.insert((a.to_string(), b.to_string()));
            }
        }
    }
    Ok(Lexicon {
        source_lang: a_to_pivot.source_lang.clone(),
        target_lang: pivot_to_b.target_lang.clone(),
        pairs,
    })
}
