//! Pronunciation and synonym resources, phoneme edit distance and the
//! construction of the four word-pair settings.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::WordSegment;
use crate::error::{ProbeError, Result};

pub type Phoneme = String;

/// Word to pronunciations; keys are uppercase, stress digits stripped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PronLexicon {
    entries: BTreeMap<String, Vec<Vec<Phoneme>>>,
}

impl PronLexicon {
    pub fn lookup(&self, word: &str) -> Option<&[Vec<Phoneme>]> {
        self.entries.get(&word.to_uppercase()).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a pronunciation; identical duplicates are ignored.
    pub fn insert(&mut self, word: &str, pron: Vec<Phoneme>) -> Result<()> {
        if pron.is_empty() {
            return Err(ProbeError::Validation(format!("empty pronunciation for {word}")));
        }
        let prons = self.entries.entry(word.to_uppercase()).or_default();
        if !prons.contains(&pron) {
            prons.push(pron);
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Vec<Phoneme>])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    /// Renders in CMUdict plain format, alternates as `WORD(2)`.
    pub fn to_cmudict(&self) -> String {
        let mut out = String::new();
        for (word, prons) in &self.entries {
            for (i, pron) in prons.iter().enumerate() {
                if i == 0 {
                    out.push_str(word);
                } else {
                    out.push_str(&format!("{word}({})", i + 1));
                }
                out.push_str("  ");
                out.push_str(&pron.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

fn strip_stress(symbol: &str) -> &str {
    symbol.trim_end_matches(|c: char| c.is_ascii_digit())
}

/// Parses CMUdict plain text. `;;;` lines are comments, `WORD(n)` lines are
/// alternates and a `#` token starts a trailing comment.
pub fn parse_cmudict(text: &str) -> Result<PronLexicon> {
    let mut lexicon = PronLexicon::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(";;;") {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let head = tokens.next().unwrap();
        let word = match head.find('(') {
            Some(p) if head.ends_with(')') && head[p + 1..head.len() - 1].parse::<u32>().is_ok() => &head[..p],
            _ => head,
        };
        let pron: Vec<Phoneme> = tokens
            .take_while(|t| !t.starts_with('#'))
            .map(|t| strip_stress(t).to_string())
            .collect();
        if word.is_empty() || pron.is_empty() {
            return Err(ProbeError::parse(line_no, format!("{head:?} has no phonemes")));
        }
        if pron.iter().any(String::is_empty) {
            return Err(ProbeError::parse(line_no, "malformed phoneme symbol"));
        }
        lexicon.insert(word, pron)?;
    }
    Ok(lexicon)
}

/// Unordered synonym pairs, stored as `(min, max)` uppercase words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymTable {
    pairs: BTreeSet<(String, String)>,
    /// Self-pairs dropped while parsing.
    pub dropped_self_pairs: usize,
}

impl SynonymTable {
    fn key(a: &str, b: &str) -> (String, String) {
        let (a, b) = (a.to_uppercase(), b.to_uppercase());
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Returns false for self-pairs, which are never stored.
    pub fn insert(&mut self, a: &str, b: &str) -> bool {
        let key = Self::key(a, b);
        if key.0 == key.1 {
            return false;
        }
        self.pairs.insert(key);
        true
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&Self::key(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
    }
}

/// Parses `WORD<TAB>SYNONYM` lines; `#` lines and blank lines are skipped.
pub fn parse_synonyms_tsv(text: &str) -> Result<SynonymTable> {
    let mut table = SynonymTable::default();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| ProbeError::parse(idx as u64 + 1, "expected WORD<TAB>SYNONYM"))?;
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() || b.contains('\t') {
            return Err(ProbeError::parse(
                idx as u64 + 1,
                "expected exactly two non-empty columns",
            ));
        }
        if !table.insert(a, b) {
            table.dropped_self_pairs += 1;
        }
    }
    Ok(table)
}

/// Unit-cost edit distance over phoneme symbols.
pub fn phoneme_levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length, in `[0, 1]`.
pub fn normalized_levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    let denom = a.len().max(b.len());
    if denom == 0 {
        return Err(ProbeError::Validation(
            "normalized distance undefined for two empty sequences".into(),
        ));
    }
    Ok(phoneme_levenshtein(a, b) as f64 / denom as f64)
}

/// Minimum normalized distance over all pronunciation pairs of two words.
pub fn word_phonetic_distance(lexicon: &PronLexicon, a: &str, b: &str) -> Option<f64> {
    let pa = lexicon.lookup(a)?;
    let pb = lexicon.lookup(b)?;
    pa.iter()
        .flat_map(|x| pb.iter().map(move |y| normalized_levenshtein(x, y).ok()))
        .flatten()
        .min_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Synonym,
    NearHomophone,
    Speaker,
    Random,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::Synonym,
        Setting::NearHomophone,
        Setting::Speaker,
        Setting::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Synonym => "synonym",
            Setting::NearHomophone => "near_homophone",
            Setting::Speaker => "speaker",
            Setting::Random => "random",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Setting {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ProbeError::Validation(format!("unknown setting {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairConfig {
    pub homophone_threshold: f64,
    pub max_pairs_per_setting: usize,
    pub random_seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            homophone_threshold: 0.4,
            max_pairs_per_setting: 1000,
            random_seed: 0,
        }
    }
}

impl PairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.homophone_threshold > 0.0 && self.homophone_threshold < 1.0) {
            return Err(ProbeError::Validation(format!(
                "homophone threshold must lie in (0, 1), got {}",
                self.homophone_threshold
            )));
        }
        if self.max_pairs_per_setting == 0 {
            return Err(ProbeError::Validation("max_pairs_per_setting must be positive".into()));
        }
        Ok(())
    }
}

/// Pairs of segment indices for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub setting: Setting,
    pub pairs: Vec<(usize, usize)>,
    /// Eligible pairs before subsampling (a lower bound when the random
    /// setting was rejection-sampled).
    pub candidates: usize,
}

impl PairSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Output of [`build_pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairSets {
    pub sets: BTreeMap<Setting, PairSet>,
    /// Distinct words with no lexicon entry.
    pub excluded_words: usize,
    pub excluded_segments: usize,
}

impl PairSets {
    pub fn get(&self, setting: Setting) -> Option<&PairSet> {
        self.sets.get(&setting)
    }

    /// Settings that ended up with no pairs.
    pub fn empty_settings(&self) -> Vec<Setting> {
        self.sets.values().filter(|s| s.is_empty()).map(|s| s.setting).collect()
    }
}

// Above this many segment pairs the random setting is rejection-sampled
// instead of enumerated.
const RANDOM_ENUMERATION_LIMIT: usize = 4_000_000;

fn setting_seed(seed: u64, setting: Setting) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(setting as u64 + 1))
}

fn subsample(mut pairs: Vec<(usize, usize)>, max: usize, seed: u64) -> Vec<(usize, usize)> {
    if pairs.len() <= max {
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = index::sample(&mut rng, pairs.len(), max).into_vec();
    keep.sort_unstable();
    let picked = keep.iter().map(|&i| pairs[i]).collect();
    pairs.clear();
    picked
}

/// Builds the synonym, near-homophone, speaker and random settings.
///
/// Segments whose word has no lexicon entry are excluded from every setting.
/// Each setting is subsampled to `max_pairs_per_setting` with its own seeded
/// generator, so the result depends only on the inputs and the seed.
pub fn build_pairs(
    lexicon: &PronLexicon,
    synonyms: &SynonymTable,
    segments: &[WordSegment],
    config: &PairConfig,
) -> Result<PairSets> {
    config.validate()?;
    if segments.is_empty() {
        return Err(ProbeError::Validation("no segments".into()));
    }

    let mut excluded_words = BTreeSet::new();
    let mut excluded_segments = 0;
    let mut by_word: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        if lexicon.contains(&s.word) {
            by_word.entry(s.word.as_str()).or_default().push(i);
        } else {
            excluded_words.insert(s.word.as_str());
            excluded_segments += 1;
        }
    }
    let words: Vec<&str> = by_word.keys().copied().collect();
    let word_index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (*w, i)).collect();

    let threshold = config.homophone_threshold;
    let prons: Vec<&[Vec<Phoneme>]> = words.iter().map(|w| lexicon.lookup(w).unwrap()).collect();
    let homophones: Vec<(usize, usize)> = (0..words.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let prons = &prons;
            (i + 1..words.len())
                .filter(move |&j| near_homophone(prons[i], prons[j], threshold))
                .map(move |j| (i, j))
        })
        .collect();
    let synonym_words: Vec<(usize, usize)> = synonyms
        .iter()
        .filter_map(|(a, b)| {
            let (i, j) = (*word_index.get(a)?, *word_index.get(b)?);
            Some((i.min(j), i.max(j)))
        })
        .collect();
    let related: HashSet<(usize, usize)> = homophones.iter().chain(&synonym_words).copied().collect();

    let cross = |word_pairs: &[(usize, usize)]| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &(i, j) in word_pairs {
            for &a in &by_word[words[i]] {
                for &b in &by_word[words[j]] {
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
        out.sort_unstable();
        out
    };

    let mut sets = BTreeMap::new();
    let max = config.max_pairs_per_setting;
    let seed = config.random_seed;

    for (setting, word_pairs) in [
        (Setting::Synonym, &synonym_words),
        (Setting::NearHomophone, &homophones),
    ] {
        let all = cross(word_pairs);
        let candidates = all.len();
        let pairs = subsample(all, max, setting_seed(seed, setting));
        sets.insert(
            setting,
            PairSet {
                setting,
                pairs,
                candidates,
            },
        );
    }

    let mut speaker = Vec::new();
    for occurrences in by_word.values() {
        for (x, &a) in occurrences.iter().enumerate() {
            for &b in &occurrences[x + 1..] {
                if segments[a].speaker_id != segments[b].speaker_id {
                    speaker.push((a, b));
                }
            }
        }
    }
    speaker.sort_unstable();
    let candidates = speaker.len();
    sets.insert(
        Setting::Speaker,
        PairSet {
            setting: Setting::Speaker,
            pairs: subsample(speaker, max, setting_seed(seed, Setting::Speaker)),
            candidates,
        },
    );

    let word_of: Vec<Option<usize>> = segments
        .iter()
        .map(|s| word_index.get(s.word.as_str()).copied())
        .collect();
    let is_random = |a: usize, b: usize| -> bool {
        match (word_of[a], word_of[b]) {
            (Some(i), Some(j)) if i != j => !related.contains(&(i.min(j), i.max(j))),
            _ => false,
        }
    };
    let n = segments.len();
    let total = n * (n - 1) / 2;
    let random_seed = setting_seed(seed, Setting::Random);
    let random = if total <= RANDOM_ENUMERATION_LIMIT {
        let mut all = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if is_random(a, b) {
                    all.push((a, b));
                }
            }
        }
        let candidates = all.len();
        PairSet {
            setting: Setting::Random,
            pairs: subsample(all, max, random_seed),
            candidates,
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(random_seed);
        let mut seen = HashSet::new();
        let mut attempts = 0usize;
        while seen.len() < max && attempts < max.saturating_mul(100) {
            attempts += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && is_random(a, b) {
                seen.insert((a.min(b), a.max(b)));
            }
        }
        let mut pairs: Vec<_> = seen.into_iter().collect();
        pairs.sort_unstable();
        PairSet {
            setting: Setting::Random,
            candidates: pairs.len(),
            pairs,
        }
    };
    sets.insert(Setting::Random, random);

    Ok(PairSets {
        sets,
        excluded_words: excluded_words.len(),
        excluded_segments,
    })
}

fn near_homophone(a: &[Vec<Phoneme>], b: &[Vec<Phoneme>], threshold: f64) -> bool {
    a.iter().any(|x| {
        b.iter().any(|y| {
            let longest = x.len().max(y.len());
            // Length difference is a lower bound on the edit distance.
            let gap = x.len().abs_diff(y.len());
            if gap as f64 / longest as f64 >= threshold {
                return false;
            }
            (phoneme_levenshtein(x, y) as f64 / longest as f64) < threshold
        })
    })
}
