//! Context/target pair synthesis from an annotated corpus.
//!
//! Tokenization and part-of-speech tagging happen upstream; this module reads
//! their output (see [`CorpusRecord`]) and applies the selection rules:
//! sentences of 10 to 100 words, candidates that are neither proper nouns nor
//! out of vocabulary, and a uniformly random pick among the five rarest
//! candidates by Zipf frequency.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::IoError;
use crate::metrics::normalize;
use crate::span::CharSpan;

pub const MIN_WORDS: usize = 10;
pub const MAX_WORDS: usize = 100;
/// Size of the rare-word pool the target is drawn from.
pub const RARE_POOL: usize = 5;
pub const DEFAULT_PAIR_COUNT: usize = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub pos: String,
    pub is_word: bool,
}

impl Token {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.start, self.end)
    }

    /// Accepts the Universal Dependencies tag as well as the long form.
    pub fn is_proper_noun(&self) -> bool {
        matches!(self.pos.as_str(), "PROPN" | "PROPER_NOUN")
    }
}

/// One line of the annotated-corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub text: String,
    pub tokens: Vec<Token>,
    /// Position of the sentence inside its document.
    pub index: usize,
}

impl AnnotatedSentence {
    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word).count()
    }
}

/// A document: consecutive corpus records sharing a `doc_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<CorpusRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTargetPair {
    pub context: String,
    pub target: String,
    pub target_span: CharSpan,
    pub language: String,
    pub source_id: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("document {doc_id}, sentence {sentence}: {message}")]
    MalformedSpans {
        doc_id: String,
        sentence: usize,
        message: String,
    },
}

fn check_tokens(text: &str, tokens: &[Token]) -> Result<(), String> {
    let mut prev_end = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.start >= tok.end {
            return Err(format!("token {i} has empty span {}..{}", tok.start, tok.end));
        }
        if i > 0 && tok.start < prev_end {
            return Err(format!("token {i} overlaps or precedes token {}", i - 1));
        }
        match tok.span().slice(text) {
            Some(s) if s == tok.surface => {}
            Some(s) => return Err(format!("token {i} span covers {s:?}, surface is {:?}", tok.surface)),
            None => return Err(format!("token {i} span {}..{} is out of bounds", tok.start, tok.end)),
        }
        prev_end = tok.end;
    }
    Ok(())
}

/// Validate a document's token spans and keep the sentences with 10 to 100
/// words, in order.
pub fn extract_sentences(doc: &Document) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let mut out = Vec::new();
    for (index, rec) in doc.sentences.iter().enumerate() {
        check_tokens(&rec.text, &rec.tokens).map_err(|message| CorpusError::MalformedSpans {
            doc_id: doc.doc_id.clone(),
            sentence: index,
            message,
        })?;
        let sentence = AnnotatedSentence {
            text: rec.text.clone(),
            tokens: rec.tokens.clone(),
            index,
        };
        if (MIN_WORDS..=MAX_WORDS).contains(&sentence.word_count()) {
            out.push(sentence);
        }
    }
    Ok(out)
}

/// Word → Zipf frequency (log10 occurrences per billion words). Lookup goes
/// through [`normalize`]; a missing word is out of vocabulary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreqTable {
    pub language: String,
    entries: HashMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FreqError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl FreqTable {
    pub fn new(language: impl Into<String>) -> Self {
        Self {
            language: language.into(),
            entries: HashMap::new(),
        }
    }

    /// Insert a word. Non-finite values are ignored. When two surfaces
    /// normalize to the same key the higher frequency wins.
    pub fn insert(&mut self, word: &str, zipf: f64) {
        if !zipf.is_finite() {
            return;
        }
        let slot = self.entries.entry(normalize(word)).or_insert(zipf);
        *slot = slot.max(zipf);
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(&normalize(word)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Two-column UTF-8 text: `word<TAB or spaces>zipf`. Lines starting with
    /// `#` are comments.
    pub fn load(path: &Path, language: &str) -> Result<Self, FreqError> {
        let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
        let mut table = FreqTable::new(language);
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| IoError::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, value) = line.rsplit_once(['\t', ' ']).ok_or_else(|| FreqError::Parse {
                line: idx + 1,
                message: "expected two columns".into(),
            })?;
            let zipf: f64 = value.trim().parse().map_err(|_| FreqError::Parse {
                line: idx + 1,
                message: format!("not a number: {value:?}"),
            })?;
            if !zipf.is_finite() {
                return Err(FreqError::Parse {
                    line: idx + 1,
                    message: "frequency must be finite".into(),
                });
            }
            table.insert(word.trim(), zipf);
        }
        Ok(table)
    }
}

/// Candidate target: token index plus its Zipf value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub token: usize,
    pub zipf: f64,
}

/// Words eligible as a target: in-vocabulary, not proper nouns, first
/// occurrence of each normalized surface. Returned in token order.
pub fn candidates(sentence: &AnnotatedSentence, freq: &FreqTable) -> Vec<Candidate> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, tok) in sentence.tokens.iter().enumerate() {
        if !tok.is_word || tok.is_proper_noun() {
            continue;
        }
        let key = normalize(&tok.surface);
        if !seen.insert(key) {
            continue;
        }
        if let Some(zipf) = freq.get(&tok.surface) {
            out.push(Candidate { token: i, zipf });
        }
    }
    out
}

/// The rarest candidates, ascending by (Zipf, token index), at most five.
pub fn rare_pool(sentence: &AnnotatedSentence, freq: &FreqTable) -> Vec<Candidate> {
    let mut cands = candidates(sentence, freq);
    cands.sort_by(|a, b| a.zipf.total_cmp(&b.zipf).then(a.token.cmp(&b.token)));
    cands.truncate(RARE_POOL);
    cands
}

pub fn select_target<R: Rng>(
    sentence: &AnnotatedSentence,
    freq: &FreqTable,
    source_id: &str,
    rng: &mut R,
) -> Option<ContextTargetPair> {
    let pool = rare_pool(sentence, freq);
    if pool.is_empty() {
        return None;
    }
    let pick = pool[rng.random_range(0..pool.len())];
    let tok = &sentence.tokens[pick.token];
    Some(ContextTargetPair {
        context: sentence.text.clone(),
        target: tok.surface.clone(),
        target_span: tok.span(),
        language: freq.language.clone(),
        source_id: source_id.to_string(),
    })
}

/// Group consecutive records with the same `doc_id` into documents.
pub fn group_documents<I>(records: I) -> Vec<Document>
where
    I: IntoIterator<Item = CorpusRecord>,
{
    let mut docs: Vec<Document> = Vec::new();
    for rec in records {
        match docs.last_mut() {
            Some(doc) if doc.doc_id == rec.doc_id => doc.sentences.push(rec),
            _ => docs.push(Document {
                doc_id: rec.doc_id.clone(),
                sentences: vec![rec],
            }),
        }
    }
    docs
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub documents: usize,
    pub rejected_documents: usize,
    pub sentences: usize,
    pub length_filtered: usize,
    pub no_candidate: usize,
    pub pairs: usize,
    pub requested: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Synthesis {
    pub pairs: Vec<ContextTargetPair>,
    pub stats: SynthesisStats,
    /// Rejected documents and a short-corpus warning, when any.
    pub diagnostics: Vec<String>,
}

/// RNG for one document, derived from the run seed and the document's
/// position so that documents can be processed independently.
pub fn document_rng(seed: u64, doc_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(doc_index as u64);
    rng
}

/// Walk documents in order, emitting at most one pair per sentence until
/// `n` pairs exist. Documents with malformed spans are skipped and reported.
pub fn synthesize_pairs<I>(docs: I, freq: &FreqTable, n: usize, seed: u64) -> Synthesis
where
    I: IntoIterator<Item = Document>,
{
    let mut out = Synthesis::default();
    out.stats.requested = n;
    for (doc_index, doc) in docs.into_iter().enumerate() {
        if out.pairs.len() >= n {
            break;
        }
        out.stats.documents += 1;
        out.stats.sentences += doc.sentences.len();
        let sentences = match extract_sentences(&doc) {
            Ok(s) => s,
            Err(e) => {
                out.stats.rejected_documents += 1;
                out.diagnostics.push(e.to_string());
                continue;
            }
        };
        out.stats.length_filtered += doc.sentences.len() - sentences.len();
        let mut rng = document_rng(seed, doc_index);
        for sentence in &sentences {
            if out.pairs.len() >= n {
                break;
            }
            let source_id = format!("{}:{}", doc.doc_id, sentence.index);
            match select_target(sentence, freq, &source_id, &mut rng) {
                Some(pair) => out.pairs.push(pair),
                None => out.stats.no_candidate += 1,
            }
        }
    }
    out.stats.pairs = out.pairs.len();
    if out.pairs.len() < n {
        out.diagnostics.push(format!(
            "corpus exhausted: {} of {} requested pairs",
            out.pairs.len(),
            n
        ));
    }
    out
}
