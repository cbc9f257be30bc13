//! Clinical-note preprocessing: PHI masking, section extraction, sentence
//! filtering, token chunking and a hashed bag-of-tokens featurizer.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::ingest::NoteRow;

const DEFAULT_NOTES: &str = include_str!("../data/notes.toml");
pub const MIN_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotesConfig {
    pub headings: Vec<String>,
    pub terminators: Vec<String>,
    pub abbreviations: Vec<String>,
    pub min_words: usize,
    pub max_tokens: usize,
    pub min_overflow_tokens: usize,
    pub dim: usize,
    pub max_offset_h: f64,
}

impl Default for NotesConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_NOTES).expect("bundled notes config is valid")
    }
}

impl NotesConfig {
    pub fn parse(doc: &str) -> Result<Self> {
        let cfg: NotesConfig = toml::from_str(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return Err(Error::Config(format!("note feature dim must be at least {MIN_DIM}, got {}", self.dim)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if let Some(a) = self.abbreviations.iter().find(|a| a.chars().count() < 3) {
            return Err(Error::Config(format!("abbreviation `{a}` is shorter than three characters")));
        }
        Ok(())
    }
}

/// Compiled form of [`NotesConfig`].
#[derive(Debug, Clone)]
pub struct NotePipeline {
    pub config: NotesConfig,
    abbreviations: BTreeSet<String>,
    headings: Option<Regex>,
    terminators: Option<Regex>,
    phi: Regex,
}

fn is_punct(c: char) -> bool {
    c.is_ascii() && !c.is_ascii_alphanumeric() && !c.is_ascii_whitespace()
}

impl NotePipeline {
    pub fn new(config: NotesConfig) -> Result<Self> {
        config.validate()?;
        let headings = if config.headings.is_empty() {
            None
        } else {
            let alt: Vec<String> = config.headings.iter().map(|h| regex::escape(h)).collect();
            Some(Regex::new(&format!(r"\b({})\s*:", alt.join("|"))).map_err(|e| Error::Config(e.to_string()))?)
        };
        let terminators = if config.terminators.is_empty() {
            None
        } else {
            // Words of a terminator may be separated by any non-alphanumeric run,
            // so stripping punctuation can never expose a new terminator.
            let alt: Vec<String> = config
                .terminators
                .iter()
                .map(|t| t.split_whitespace().map(regex::escape).collect::<Vec<_>>().join("[^A-Za-z0-9]+"))
                .collect();
            Some(Regex::new(&format!(r"(?i)\b(?:{})\b", alt.join("|"))).map_err(|e| Error::Config(e.to_string()))?)
        };
        let abbreviations = config.abbreviations.iter().map(|a| a.to_lowercase()).collect();
        Ok(Self {
            config,
            abbreviations,
            headings,
            terminators,
            phi: Regex::new(r"(?s)\[\*\*.*?\*\*\]").expect("static regex"),
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(NotesConfig::default()).expect("bundled notes config is valid")
    }

    fn protected_core<'a>(&self, token: &'a str) -> Option<&'a str> {
        let core = token.trim_matches(|c: char| is_punct(c) && c != '.');
        self.abbreviations.contains(&core.to_lowercase()).then_some(core)
    }

    /// Fold to ASCII, mask PHI placeholders and cut at the first terminator.
    pub fn prepare(&self, text: &str) -> String {
        let folded: String = text
            .nfkd()
            .filter(|c| !is_combining_mark(*c))
            .map(|c| if c.is_ascii() { c } else { ' ' })
            .collect();
        let masked = self.phi.replace_all(&folded, " ");
        match self.terminators.as_ref().and_then(|t| t.find(&masked)) {
            Some(m) => masked[..m.start()].to_string(),
            None => masked.into_owned(),
        }
    }

    /// Remove punctuation (except inside protected abbreviations) and condense whitespace.
    pub fn strip_punctuation(&self, text: &str) -> String {
        let mut out: Vec<String> = Vec::new();
        for token in text.split_whitespace() {
            if let Some(core) = self.protected_core(token) {
                out.push(core.to_string());
                continue;
            }
            let replaced: String = token.chars().map(|c| if is_punct(c) { ' ' } else { c }).collect();
            out.extend(replaced.split_whitespace().map(str::to_string));
        }
        out.join(" ")
    }

    pub fn clean_note(&self, text: &str) -> String {
        self.strip_punctuation(&self.prepare(text))
    }

    /// Split on configured headings. Each heading owns the text up to the next
    /// one; whitespace-only bodies are dropped. Without any heading the whole
    /// text is one unnamed section.
    pub fn extract_sections(&self, text: &str) -> Vec<(Option<String>, String)> {
        let matches: Vec<_> = match &self.headings {
            Some(re) => re.captures_iter(text).collect(),
            None => Vec::new(),
        };
        if matches.is_empty() {
            return if text.trim().is_empty() {
                Vec::new()
            } else {
                vec![(None, text.to_string())]
            };
        }
        let mut out = Vec::new();
        for (i, cap) in matches.iter().enumerate() {
            let whole = cap.get(0).unwrap();
            let end = matches.get(i + 1).map(|c| c.get(0).unwrap().start()).unwrap_or(text.len());
            let body = &text[whole.end()..end];
            if !body.trim().is_empty() {
                out.push((Some(cap[1].to_string()), body.trim().to_string()));
            }
        }
        out
    }

    /// Split into sentences at `.`, `!` or `?` followed by whitespace, unless
    /// the token is a protected abbreviation.
    pub fn sentences<'a>(&self, text: &'a str) -> Vec<Vec<&'a str>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        for token in text.split_whitespace() {
            cur.push(token);
            let ends = token.ends_with(['.', '!', '?']);
            if ends && self.protected_core(token).is_none() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    /// Drop sentences with fewer than `min_words` whitespace tokens.
    pub fn filter_sentences(&self, text: &str) -> String {
        self.sentences(text)
            .into_iter()
            .filter(|s| s.len() >= self.config.min_words)
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Full text path for one note: the cleaned, filtered token stream.
    pub fn note_tokens(&self, text: &str) -> Vec<String> {
        let prepared = self.prepare(text);
        let mut tokens = Vec::new();
        for (_, body) in self.extract_sections(&prepared) {
            let kept = self.filter_sentences(&body);
            tokens.extend(self.strip_punctuation(&kept).split_whitespace().map(str::to_string));
        }
        tokens
    }

    pub fn chunk_tokens(&self, stay_id: &str, note_index: usize, tokens: &[String]) -> ChunkOutcome {
        chunk_tokens(stay_id, note_index, tokens, self.config.max_tokens, self.config.min_overflow_tokens)
    }

    /// Chunks for every note of one stay inside the observation window, in input order.
    pub fn stay_chunks<'a>(&self, stay_id: &str, notes: impl IntoIterator<Item = &'a NoteRow>) -> Vec<NoteChunk> {
        notes
            .into_iter()
            .filter(|n| n.stay_id == stay_id && n.note_time_offset_h <= self.config.max_offset_h)
            .enumerate()
            .flat_map(|(i, n)| self.chunk_tokens(stay_id, i, &self.note_tokens(&n.text)).chunks)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteChunk {
    pub stay_id: String,
    pub note_index: usize,
    pub chunk_index: usize,
    pub tokens: Vec<String>,
}

impl NoteChunk {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkOutcome {
    pub chunks: Vec<NoteChunk>,
    pub dropped_tokens: usize,
}

/// Contiguous chunks of at most `max` tokens. Overflow chunks shorter than
/// `min_overflow` are dropped; the first chunk is always kept.
pub fn chunk_tokens(stay_id: &str, note_index: usize, tokens: &[String], max: usize, min_overflow: usize) -> ChunkOutcome {
    let mut chunks = Vec::new();
    let mut dropped = 0;
    for (i, piece) in tokens.chunks(max).enumerate() {
        if i > 0 && piece.len() < min_overflow {
            dropped += piece.len();
            continue;
        }
        chunks.push(NoteChunk {
            stay_id: stay_id.to_string(),
            note_index,
            chunk_index: chunks.len(),
            tokens: piece.to_vec(),
        });
    }
    ChunkOutcome {
        chunks,
        dropped_tokens: dropped,
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteFeatures {
    pub values: Vec<f64>,
    pub absent: bool,
}

impl NoteFeatures {
    /// Bag values followed by the absent indicator.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.push(if self.absent { 1.0 } else { 0.0 });
        v
    }

    pub fn columns(dim: usize) -> Vec<String> {
        let mut c: Vec<String> = (0..dim).map(|i| format!("note_bag_{i:03}")).collect();
        c.push("notes__absent".into());
        c
    }
}

/// Hashed token counts, L2-normalized. No tokens gives a zero vector flagged absent.
pub fn note_bag_features(chunks: &[NoteChunk], dim: usize) -> Result<NoteFeatures> {
    if dim < MIN_DIM {
        return Err(Error::Config(format!("note feature dim must be at least {MIN_DIM}, got {dim}")));
    }
    let mut values = vec![0.0; dim];
    for tok in chunks.iter().flat_map(|c| &c.tokens) {
        let slot = (fnv1a64(tok.to_lowercase().as_bytes()) % dim as u64) as usize;
        values[slot] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(NoteFeatures { values, absent: true });
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(NoteFeatures { values, absent: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> NotePipeline {
        NotePipeline::with_defaults()
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn clean_examples() {
        assert_eq!(p().clean_note("Seen by [**Name**] today."), "Seen by today");
        assert_eq!(p().clean_note("Stable. Electronically signed by X"), "Stable");
        assert_eq!(p().clean_note("Café  naïve\t résumé!"), "Cafe naive resume");
        assert_eq!(p().clean_note("Give 5 mg p.o. b.i.d., then stop."), "Give 5 mg p.o. b.i.d. then stop");
        assert_eq!(p().clean_note("ok DICTATED-BY someone"), "ok");
    }

    #[test]
    fn section_examples() {
        let s = p().extract_sections("FINDINGS: a. IMPRESSION: b.");
        assert_eq!(s, vec![(Some("FINDINGS".into()), "a.".into()), (Some("IMPRESSION".into()), "b.".into())]);
        assert!(p().extract_sections("FINDINGS:   ").is_empty());
        assert_eq!(p().extract_sections("just text"), vec![(None, "just text".into())]);
    }

    #[test]
    fn sentence_filter_boundary() {
        let five = "one two three four five.";
        let ten = "one two three four five six seven eight nine ten.";
        assert_eq!(p().filter_sentences(five), "");
        assert_eq!(p().filter_sentences(ten), ten);
        assert_eq!(p().filter_sentences(&format!("{five} {ten}")), ten);
        assert_eq!(p().filter_sentences(""), "");
        // The abbreviation does not end the sentence.
        let abbr = "Take one tablet p.o. with water each morning for ten days.";
        assert_eq!(p().filter_sentences(abbr), abbr);
    }

    #[test]
    fn chunk_examples() {
        let lens = |n: usize| -> Vec<usize> { p().chunk_tokens("S", 0, &words(n)).chunks.iter().map(|c| c.token_count()).collect() };
        assert_eq!(lens(600), vec![512, 88]);
        assert_eq!(lens(560), vec![512]);
        assert_eq!(lens(100), vec![100]);
        assert_eq!(lens(0), Vec::<usize>::new());
        assert_eq!(lens(512 * 2 + 75), vec![512, 512, 75]);
    }

    #[test]
    fn bag_examples() {
        let empty = note_bag_features(&[], 64).unwrap();
        assert!(empty.absent && empty.values.iter().all(|v| *v == 0.0));
        let chunks = p().chunk_tokens("S", 0, &words(30)).chunks;
        let a = note_bag_features(&chunks, 64).unwrap();
        let b = note_bag_features(&chunks, 64).unwrap();
        assert_eq!(a, b);
        let mut doubled = chunks.clone();
        doubled.extend(chunks.clone());
        let d = note_bag_features(&doubled, 64).unwrap();
        for (x, y) in a.values.iter().zip(&d.values) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(note_bag_features(&chunks, 32).is_err());
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn short_abbreviations_rejected() {
        let mut cfg = NotesConfig::default();
        cfg.abbreviations.push("q.".into());
        assert!(NotePipeline::new(cfg).is_err());
    }

    #[test]
    fn full_note_path() {
        let text = "Seen by [**Dr**].\nHISTORY: Patient remains intubated and sedated with escalating pressor needs overnight. Short one.\nINDICATION:   \nIMPRESSION: Will continue current plan of care and reassess the patient later today.\nElectronically signed by Dr. [**Doctor**].";
        let toks = p().note_tokens(text);
        assert_eq!(
            toks.join(" "),
            "Patient remains intubated and sedated with escalating pressor needs overnight Will continue current plan of care and reassess the patient later today"
        );
    }

    fn note_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                "[a-zA-Z]{1,8}",
                Just("[**Name**]".to_string()),
                Just("b.i.d.".to_string()),
                Just("(p.o.)".to_string()),
                Just("électronically".to_string()),
                Just("signed".to_string()),
                Just("Dictated".to_string()),
                Just("by".to_string()),
                Just("FINDINGS:".to_string()),
                "[.,;:!?()/-]{1,3}",
                Just("naïve".to_string()),
                Just("\n".to_string()),
            ],
            0..80,
        )
        .prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(text in note_text()) {
            let once = p().clean_note(&text);
            prop_assert_eq!(p().clean_note(&once), once.clone());
            prop_assert!(!once.contains("[**"));
            prop_assert!(once.is_ascii());
        }

        #[test]
        fn chunks_respect_limits_and_conserve_tokens(n in 0usize..3000) {
            let toks = words(n);
            let out = p().chunk_tokens("S", 0, &toks);
            let kept: usize = out.chunks.iter().map(|c| c.token_count()).sum();
            prop_assert_eq!(kept + out.dropped_tokens, n);
            for (i, c) in out.chunks.iter().enumerate() {
                prop_assert!(c.token_count() <= 512);
                if i > 0 { prop_assert!(c.token_count() >= 75); }
                prop_assert_eq!(c.chunk_index, i);
            }
            let flat: Vec<String> = out.chunks.iter().flat_map(|c| c.tokens.clone()).collect();
            prop_assert_eq!(&flat[..], &toks[..kept]);
        }

        #[test]
        fn pipeline_is_deterministic(text in note_text()) {
            let a = p().chunk_tokens("S", 0, &p().note_tokens(&text));
            let b = p().chunk_tokens("S", 0, &p().note_tokens(&text));
            prop_assert_eq!(a, b);
        }
    }
}
