use serde::{Deserialize, Serialize};

use crate::corpus::{render_gloss, render_segmentation, GlossedWord, IgtSentence};
use crate::grammar::ChunkRef;

const DEFAULT_INSTRUCTION: &str = include_str!("instruction.txt");
pub const INSTRUCTION_VERSION: &str = "1";

pub const SENTENCE_LABEL: &str = "Sentence: ";
pub const SEGMENTATION_LABEL: &str = "Segmentation: ";
pub const GLOSS_LABEL: &str = "Initial gloss: ";
pub const EXCERPTS_HEADER: &str = "Grammar excerpts:";
pub const SCHEMA_HEADER: &str = "Respond with a single JSON object and nothing else:";

/// Output format every backend is asked for.
pub const RESPONSE_SCHEMA: &str = r#"{
  "corrected_gloss": "<full gloss line: one word per segmented word, morphemes joined with - or = as in the segmentation>",
  "explanations": [
    {"word": <1-based word number>, "morpheme": <1-based morpheme number, or null for the whole word>,
     "surface": "<morpheme or word>", "gloss": "<its gloss>",
     "justification": "<why>", "confidence": <number between 0 and 1>}
  ],
  "rag_usage": [
    {"chunks": [<excerpt numbers used>], "morphemes": [[<word>, <morpheme>]], "explanation": "<how the excerpts were used>"}
  ]
}"#;

/// Task instruction, versioned and optionally specialised per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub language: String,
    pub version: String,
    pub text: String,
}

impl InstructionTemplate {
    /// The built-in template with `{language}` filled in.
    pub fn builtin(language_name: &str) -> Self {
        InstructionTemplate {
            language: language_name.to_string(),
            version: INSTRUCTION_VERSION.to_string(),
            text: DEFAULT_INSTRUCTION.replace("{language}", language_name).trim_end().to_string(),
        }
    }

    /// A template read from a file; `{language}` is substituted the same way.
    pub fn from_text(language_name: &str, version: &str, text: &str) -> Self {
        InstructionTemplate {
            language: language_name.to_string(),
            version: version.to_string(),
            text: text.replace("{language}", language_name).trim_end().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptChunk {
    pub source: ChunkRef,
    pub text: String,
}

/// Instruction, query and ranked excerpts; `render` is a pure function of these fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub instruction: String,
    pub sentence: String,
    pub segmentation: String,
    pub initial_gloss: String,
    pub chunks: Vec<PromptChunk>,
}

pub fn build_prompt(
    instruction: &InstructionTemplate,
    sentence: &IgtSentence,
    g_s: &[GlossedWord],
    chunks: Vec<PromptChunk>,
) -> Prompt {
    Prompt {
        instruction: instruction.text.clone(),
        sentence: sentence.text(),
        segmentation: render_segmentation(&sentence.segmentation),
        initial_gloss: render_gloss(g_s),
        chunks,
    }
}

impl Prompt {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        out.push_str(SENTENCE_LABEL);
        out.push_str(&self.sentence);
        out.push('\n');
        out.push_str(SEGMENTATION_LABEL);
        out.push_str(&self.segmentation);
        out.push('\n');
        out.push_str(GLOSS_LABEL);
        out.push_str(&self.initial_gloss);
        out.push_str("\n\n");
        out.push_str(EXCERPTS_HEADER);
        if self.chunks.is_empty() {
            out.push_str(" none\n");
        } else {
            out.push('\n');
            for (i, c) in self.chunks.iter().enumerate() {
                out.push_str(&format!("[{}] (source: {})\n{}\n\n", i + 1, c.source, c.text));
            }
        }
        out.push('\n');
        out.push_str(SCHEMA_HEADER);
        out.push('\n');
        out.push_str(RESPONSE_SCHEMA);
        out.push('\n');
        out
    }
}

/// The query fields of a rendered prompt: (segmentation, initial gloss).
pub fn query_fields(rendered: &str) -> Option<(&str, &str)> {
    let field = |label: &str| rendered.lines().find_map(|l| l.strip_prefix(label));
    Some((field(SEGMENTATION_LABEL)?, field(GLOSS_LABEL)?))
}

/// Excerpt texts of a rendered prompt, in order.
pub fn excerpts(rendered: &str) -> Vec<String> {
    let Some(start) = rendered.find(EXCERPTS_HEADER) else { return Vec::new() };
    let end = rendered.rfind(SCHEMA_HEADER).unwrap_or(rendered.len());
    let body = &rendered[start + EXCERPTS_HEADER.len()..end.max(start + EXCERPTS_HEADER.len())];
    let mut out: Vec<String> = Vec::new();
    let mut next = 1;
    let mut current: Option<String> = None;
    for line in body.split_inclusive('\n') {
        if line.starts_with(&format!("[{next}] (source: ")) {
            if let Some(c) = current.take() {
                out.push(c);
            }
            current = Some(String::new());
            next += 1;
        } else if let Some(c) = current.as_mut() {
            c.push_str(line);
        }
    }
    out.extend(current);
    // Each excerpt is followed by a blank separator line.
    out.into_iter().map(|mut s| {
        while s.ends_with('\n') {
            s.pop();
        }
        s
    }).collect()
}
