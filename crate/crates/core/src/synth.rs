//! Seeded synthetic language for offline end-to-end runs.
//!
//! Affix meanings are fixed by rule sentences embedded in a generated
//! grammar, so a mock LLM that knows the rule table can only use a rule
//! when retrieval put its sentence in the prompt.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_corpus, Corpus, GlossLabel, IgtSentence};
use crate::correction::{CorrectionRecord, OracleRule, RetrievedChunk, Retriever};
use crate::glosser::PredictionSet;
use crate::grammar::{ChunkIndex, GrammarDoc, GrammarError};
use crate::rerank::{FeedbackRecord, Features, NUM_FEATURES};

pub const LANGUAGE: &str = "syn";

const TAGS: [&str; 40] = [
    "PL", "SG", "DU", "PST", "PRS", "FUT", "PFV", "IPFV", "NEG", "Q", "COM", "INC", "CAUS", "PASS", "APPL", "REFL",
    "RECP", "NMLZ", "DIM", "AUG", "LOC", "ALL", "ABL", "DAT", "ERG", "ABS", "GEN", "INS", "A1S", "A2S", "A3S", "A1P",
    "A2P", "A3P", "E1S", "E2S", "E3S", "E1P", "E2P", "E3P",
];

const MEANINGS: [&str; 60] = [
    "walk", "eat", "see", "house", "water", "dog", "tree", "stone", "sleep", "run", "fire", "road", "child", "woman",
    "man", "hand", "eye", "sun", "moon", "rain", "corn", "bean", "fish", "bird", "sing", "cut", "give", "take", "come",
    "go", "hear", "speak", "know", "make", "carry", "wash", "cook", "sit", "stand", "fall", "hill", "river", "night",
    "day", "path", "friend", "mother", "father", "good", "big", "small", "old", "new", "red", "white", "black", "cold",
    "hot", "long", "short",
];

const FILLER: [&str; 12] = [
    "Speakers often reduce unstressed vowels in rapid speech.",
    "The data in this section come from recorded narratives.",
    "Word order is flexible but verb-initial clauses are common.",
    "Several consultants preferred a slower speaking style.",
    "Loanwords are adapted to the native syllable structure.",
    "Stress usually falls on the final syllable of the word.",
    "Dialects differ mainly in vocabulary rather than grammar.",
    "Examples are given in the practical orthography.",
    "Long vowels are written with a doubled vowel letter.",
    "Some older speakers use a more conservative pronunciation.",
    "Texts were transcribed with the help of native speakers.",
    "Questions are marked by intonation as well as by particles.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffixPosition {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRule {
    pub morpheme: String,
    pub tag: String,
    pub position: AffixPosition,
    /// The rule sentence as it appears in the grammar.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub rules: usize,
    pub stems: usize,
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub affix_probability: f64,
    pub noise_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            rules: 40,
            stems: 60,
            train_sentences: 500,
            test_sentences: 100,
            affix_probability: 0.7,
            noise_rate: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLanguage {
    pub config: SynthConfig,
    pub rules: Vec<SynthRule>,
    /// (surface, meaning)
    pub stems: Vec<(String, String)>,
    pub grammar: GrammarDoc,
    pub train: Corpus,
    pub test: Corpus,
}

fn affix_candidates() -> Vec<String> {
    let (cons, vowels) = (["q", "x", "z", "k", "j"], ["a", "e", "i", "o", "u"]);
    let mut out = Vec::new();
    for c in cons {
        for v in vowels {
            out.push(format!("{c}{v}"));
            for f in ["q", "x", "k"] {
                out.push(format!("{c}{v}{f}"));
            }
        }
    }
    out
}

fn stem_surface(rng: &mut ChaCha8Rng) -> String {
    let (cons, vowels) = (["b", "d", "l", "m", "n", "p", "r", "s", "t", "w"], ["a", "e", "i", "o", "u"]);
    let syllables = rng.gen_range(2..=3);
    (0..syllables).map(|_| format!("{}{}", cons.choose(rng).unwrap(), vowels.choose(rng).unwrap())).collect()
}

/// Builds the language, its grammar and the train/test corpora.
pub fn generate(config: &SynthConfig) -> SyntheticLanguage {
    assert!(config.rules <= TAGS.len() && config.rules >= 2, "between 2 and {} rules", TAGS.len());
    assert!(config.stems <= MEANINGS.len() && config.stems >= 1, "between 1 and {} stems", MEANINGS.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut affixes = affix_candidates();
    affixes.shuffle(&mut rng);
    let mut tags: Vec<&str> = TAGS.to_vec();
    tags.shuffle(&mut rng);
    let rules: Vec<SynthRule> = (0..config.rules)
        .map(|i| {
            let morpheme = affixes[i].clone();
            let tag = tags[i].to_string();
            let (position, text) = if i % 2 == 0 {
                (AffixPosition::Prefix, format!("The prefix {morpheme}- marks {tag}."))
            } else {
                (AffixPosition::Suffix, format!("The suffix -{morpheme} marks {tag}."))
            };
            SynthRule { morpheme, tag, position, text }
        })
        .collect();

    let mut seen = BTreeSet::new();
    let mut stems = Vec::with_capacity(config.stems);
    while stems.len() < config.stems {
        let s = stem_surface(&mut rng);
        if seen.insert(s.clone()) {
            stems.push((s, MEANINGS[stems.len()].to_string()));
        }
    }

    let grammar = grammar_doc(&rules, &stems, &mut rng);
    let prefixes: Vec<&SynthRule> = rules.iter().filter(|r| r.position == AffixPosition::Prefix).collect();
    let suffixes: Vec<&SynthRule> = rules.iter().filter(|r| r.position == AffixPosition::Suffix).collect();
    let sentence = |rng: &mut ChaCha8Rng| {
        let words = rng.gen_range(2..=6);
        let (mut t, mut m, mut g, mut l) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..words {
            let (stem, meaning) = stems.choose(rng).unwrap();
            let (mut seg, mut gl) = (vec![stem.clone()], vec![meaning.clone()]);
            if rng.gen_bool(config.affix_probability) {
                let r = prefixes.choose(rng).unwrap();
                seg.insert(0, r.morpheme.clone());
                gl.insert(0, r.tag.clone());
            }
            if rng.gen_bool(config.affix_probability) {
                let r = suffixes.choose(rng).unwrap();
                seg.push(r.morpheme.clone());
                gl.push(r.tag.clone());
            }
            t.push(seg.concat());
            m.push(seg.join("-"));
            g.push(gl.join("-"));
            l.push(meaning.clone());
        }
        format!("\\t {}\n\\m {}\n\\g {}\n\\l {}\n", t.join(" "), m.join(" "), g.join(" "), l.join(" "))
    };
    let train_text: Vec<String> = (0..config.train_sentences).map(|_| sentence(&mut rng)).collect();
    let test_text: Vec<String> = (0..config.test_sentences).map(|_| sentence(&mut rng)).collect();
    let with_ids = |prefix: &str, entries: &[String]| {
        entries.iter().enumerate().map(|(i, e)| format!("\\id {prefix}-{:04}\n{e}\n", i + 1)).collect::<String>()
    };
    let train = parse_corpus(&with_ids("train", &train_text), LANGUAGE).expect("generated corpus parses");
    let test = parse_corpus(&with_ids("test", &test_text), LANGUAGE).expect("generated corpus parses");
    debug_assert!(train.rejected.is_empty() && test.rejected.is_empty());

    SyntheticLanguage { config: config.clone(), rules, stems, grammar, train, test }
}

fn grammar_doc(rules: &[SynthRule], stems: &[(String, String)], rng: &mut ChaCha8Rng) -> GrammarDoc {
    let mut text = String::from("# A sketch grammar of Synthetic\n\n");
    let filler = |rng: &mut ChaCha8Rng, n: usize| -> String {
        (0..n).map(|_| *FILLER.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    text.push_str(&filler(rng, 4));
    text.push_str("\n\n");
    for (heading, position) in [("Prefixes", AffixPosition::Prefix), ("Suffixes", AffixPosition::Suffix)] {
        text.push_str(&format!("## {heading}\n\n"));
        let mut section: Vec<&SynthRule> = rules.iter().filter(|r| r.position == position).collect();
        section.shuffle(rng);
        for r in section {
            let (stem, meaning) = stems.choose(rng).unwrap();
            let example = match position {
                AffixPosition::Prefix => format!("For example, {}-{stem} is glossed {}-{meaning}.", r.morpheme, r.tag),
                AffixPosition::Suffix => format!("For example, {stem}-{} is glossed {meaning}-{}.", r.morpheme, r.tag),
            };
            let n = rng.gen_bool(0.25) as usize;
            text.push_str(&format!("{} {example} {}\n\n", r.text, filler(rng, n)));
        }
    }
    text.push_str("## Notes\n\n");
    text.push_str(&filler(rng, 6));
    text.push('\n');
    GrammarDoc::new("synthetic-grammar", "A sketch grammar of Synthetic", LANGUAGE, text).expect("non-empty grammar")
}

impl SyntheticLanguage {
    pub fn oracle_rules(&self) -> Vec<OracleRule> {
        self.rules
            .iter()
            .map(|r| OracleRule { morpheme: r.morpheme.clone(), tag: r.tag.clone(), text: r.text.clone() })
            .collect()
    }

    pub fn rule_for(&self, morpheme: &str) -> Option<&SynthRule> {
        self.rules.iter().find(|r| r.morpheme == morpheme)
    }

    /// Replaces the label of each rule-governed morpheme with a wrong tag
    /// with probability `config.noise_rate`.
    pub fn add_label_noise(&self, predictions: &PredictionSet, sentences: &[IgtSentence]) -> PredictionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x6e6f697365);
        let mut out = predictions.clone();
        for s in sentences {
            let Some(p) = out.predictions.get_mut(&s.id) else { continue };
            for (word, seg) in p.gloss.iter_mut().zip(&s.segmentation) {
                for (label, morpheme) in word.labels.iter_mut().zip(&seg.morphemes) {
                    let Some(rule) = self.rule_for(morpheme) else { continue };
                    if rng.gen_bool(self.config.noise_rate) {
                        let wrong: Vec<&SynthRule> = self.rules.iter().filter(|r| r.tag != rule.tag).collect();
                        *label = GlossLabel::tag(wrong.choose(&mut rng).unwrap().tag.clone());
                    }
                }
            }
            p.scores = None;
        }
        out
    }

    /// Accuracy over rule-governed morphemes only: (accuracy, correct, total).
    pub fn rule_morpheme_accuracy(&self, records: &[CorrectionRecord], sentences: &[IgtSentence]) -> (f64, usize, usize) {
        let by_id: BTreeMap<&str, &CorrectionRecord> = records.iter().map(|r| (r.sentence_id.as_str(), r)).collect();
        let (mut correct, mut total) = (0, 0);
        for s in sentences {
            let (Some(gold), Some(r)) = (s.gloss.as_ref(), by_id.get(s.id.as_str())) else { continue };
            for (w, seg) in s.segmentation.iter().enumerate() {
                for (m, morpheme) in seg.morphemes.iter().enumerate() {
                    if self.rule_for(morpheme).is_none() {
                        continue;
                    }
                    total += 1;
                    let got = r.g_c.get(w).and_then(|x| x.labels.get(m)).map(|l| &l.text);
                    if got == Some(&gold[w].labels[m].text) {
                        correct += 1;
                    }
                }
            }
        }
        (if total == 0 { 0.0 } else { correct as f64 / total as f64 }, correct, total)
    }
}

/// Retrieval with perfect recall: for every rule-governed morpheme of the
/// sentence, the first chunk containing its whole rule sentence. Ignores `k`.
pub struct OracleRetriever<'a> {
    pub index: &'a ChunkIndex,
    pub rules: BTreeMap<String, String>,
}

impl<'a> OracleRetriever<'a> {
    pub fn new(index: &'a ChunkIndex, language: &SyntheticLanguage) -> Self {
        OracleRetriever { index, rules: language.rules.iter().map(|r| (r.morpheme.clone(), r.text.clone())).collect() }
    }
}

impl Retriever for OracleRetriever<'_> {
    fn retrieve(
        &self,
        sentence: &IgtSentence,
        _g_s: &[crate::corpus::GlossedWord],
        _k: usize,
    ) -> Result<Vec<RetrievedChunk>, GrammarError> {
        let mut out: Vec<RetrievedChunk> = Vec::new();
        for m in sentence.segmentation.iter().flat_map(|w| &w.morphemes) {
            let Some(text) = self.rules.get(m) else { continue };
            let chunk = self
                .index
                .chunks()
                .iter()
                .find(|c| c.text.contains(text.as_str()))
                .ok_or_else(|| GrammarError::Corrupt(format!("no chunk contains {text:?}")))?;
            if !out.iter().any(|r| r.chunk.reference() == chunk.reference()) {
                out.push(RetrievedChunk { chunk: chunk.clone(), similarity: 1.0 });
            }
        }
        Ok(out)
    }
}

/// Feedback where relevance is decided by the lexical-overlap feature
/// alone: 1 or 2 planted chunks per record have overlap in [0.55, 1], the
/// decoys in [0, 0.45]. Cosine and the other features are noise, so the
/// planted chunks are often not the top retrieval hits.
pub fn separable_feedback(records: usize, k: usize, seed: u64) -> Vec<FeedbackRecord> {
    assert!(k >= 3, "need room for positives and decoys");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..records)
        .map(|i| {
            let planted = rng.gen_range(1..=2);
            let mut positives: Vec<usize> = (0..k).collect::<Vec<_>>().choose_multiple(&mut rng, planted).copied().collect();
            positives.sort_unstable();
            let mut cosines: Vec<f64> = (0..k).map(|_| rng.gen_range(0.55..0.95)).collect();
            cosines.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let features = (0..k)
                .map(|j| {
                    let overlap = if positives.contains(&j) { rng.gen_range(0.55..=1.0) } else { rng.gen_range(0.0..=0.45) };
                    let mut f: Features = [0.0; NUM_FEATURES];
                    f[0] = cosines[j];
                    f[1] = 1.0 - j as f64 / (k - 1) as f64;
                    f[2] = overlap;
                    f[3] = rng.gen_range(0.5..=1.0);
                    f[4] = rng.gen_range(0.0..=1.0);
                    f
                })
                .collect();
            FeedbackRecord {
                sentence_id: format!("fb-{i:04}"),
                candidates: (0..k).map(|j| crate::grammar::ChunkRef { doc_id: format!("fb-{i:04}"), index: j }).collect(),
                features,
                positives,
                morpheme_accuracy: 1.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let cfg = SynthConfig { train_sentences: 50, test_sentences: 10, ..SynthConfig::default() };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        assert_eq!(a.rules.len(), 40);
        assert_eq!(a.rules.iter().map(|r| &r.morpheme).collect::<BTreeSet<_>>().len(), 40);
        assert_eq!(a.rules.iter().map(|r| &r.tag).collect::<BTreeSet<_>>().len(), 40);
        assert!(a.rules.iter().all(|r| r.text.chars().count() <= 50 && a.grammar.text.contains(&r.text)));
        assert_eq!(a.train.len(), 50);
        assert_eq!(a.test.len(), 10);
        for s in a.train.sentences.iter().chain(&a.test.sentences) {
            assert_eq!(s.transcription_mismatches(), Some(vec![]));
        }
    }

    #[test]
    fn separable_feedback_is_separable() {
        for f in separable_feedback(50, 6, 3) {
            let min_pos = f.positives.iter().map(|&p| f.features[p][2]).fold(f64::INFINITY, f64::min);
            let max_neg = (0..6).filter(|j| !f.positives.contains(j)).map(|j| f.features[j][2]).fold(0.0, f64::max);
            assert!(min_pos > max_neg);
        }
    }
}
