//! Prompt templates sent to the generator and parsers for its replies.
//!
//! Context passages are rendered one per line as `[i] text` with 1-based
//! indices and internal whitespace collapsed.

use crate::error::{Error, Result};
use crate::types::{Passage, SyntheticExample, TaskSpec};

pub const NEW_DATA_BEGIN: &str = "====New data begins====";
pub const NEW_DATA_END: &str = "====New data ends====";
pub const GENERATED_PASSAGE_BEGIN: &str = "====Generated passage begins====";
pub const GENERATED_PASSAGE_END: &str = "====Generated passage ends====";
pub const RANK_PREFIX: &str = "My rank:";

pub(crate) const SYNTHESIS_HEADER: &str = "You are a strong expert of data synthesis.";
pub(crate) const FILTER_HEADER: &str = "You are tasked with checking whether the following synthetic data";
pub(crate) const NOISE_HEADER: &str = "You are a strong expert of data processing.";
pub(crate) const RANK_HEADER: &str = "Please first provide the answer based on the passages";

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn render_context<'a>(passages: impl IntoIterator<Item = &'a Passage>) -> String {
    passages
        .into_iter()
        .enumerate()
        .map(|(i, p)| format!("[{}] {}", i + 1, collapse(p.text())))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`render_context`]: the passage texts of `[i] text` lines.
pub fn parse_context_lines(block: &str) -> Vec<String> {
    block
        .lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let rest = line.strip_prefix('[')?;
            let close = rest.find(']')?;
            rest[..close].parse::<usize>().ok()?;
            Some(rest[close + 1..].trim().to_string())
        })
        .collect()
}

pub fn synthesis_prompt(context: &[Passage], task: &TaskSpec) -> String {
    format!(
        "{SYNTHESIS_HEADER} Below, I will provide the context, the description and an example of the target task. \
Your task is to generate a piece of data for the target task based on the given context. \
The sections marked with ====xxx begins==== and ====xxx ends==== indicate the start and end of each respective part. \
Please note that the data you generate must meet the following criteria:\n\
1. Correctness, which must be logically correct and factually correct.\n\
2. Faithfulness, which must be faithful to the context.\n\
3. Quality, which must be thoughtful and sophisticated, ideally based on multiple paragraphs where applicable.\n\n\
Please note that the generated data should follow this specific format:\n\
{NEW_DATA_BEGIN}\nInput:\nReference output:\n{NEW_DATA_END}\n\n\
====Context begins====\n{context}\n====Context ends====\n\n\
====Target task description begins====\n{description}\n====Target task description ends====\n\n\
====Target task example begins====\nInput: {ex_in}\nReference output: {ex_out}\n====Target task example ends====\n\n\
Please ensure that your output matches the instructions above.\n",
        context = render_context(context),
        description = task.task_instruction,
        ex_in = task.example_input,
        ex_out = task.example_output,
    )
}

pub fn filter_prompt(example: &SyntheticExample, context: &[Passage], task: &TaskSpec) -> String {
    let name = &task.task_id;
    format!(
        "{FILTER_HEADER} of {name} task is logically correct and formatted correctly. \
The data consists of five parts: task description, example, input, output, source passages. \
The input and output of the synthetic data are based on the source passages. \
And a reasonable example of {name} task is provided, note that it is not based on source passages. \
Please check the following:\n\
1. Logical Correctness: Check whether the output correctly solves the input based on the source passages.\n\
2. Format Correctness: Check whether the input and output of the synthetic data conform to the correct format presented in the task description and the example.\n\n\
Task description: {description}\n\n\
Example:\nInput: {ex_in}\nOutput: {ex_out}\n\n\
Now, please check the following synthetic data based on source passages:\n\n\
Input: {input}\nOutput: {output}\nSource passages:\n{context}\n\n\
Please note that if the above synthetic data basically meets the requirements, output \"[YES]\", otherwise output \"[NO]\".\n",
        description = task.task_instruction,
        ex_in = task.example_input,
        ex_out = task.example_output,
        input = collapse(&example.input),
        output = collapse(&example.ground_truth),
        context = render_context(context),
    )
}

pub fn noise_prompt(example: &SyntheticExample, context: &[Passage]) -> String {
    format!(
        "{NOISE_HEADER} You are tasked with data augmentation to generate noisy data to enhance training robustness. \
Below, I will provide you with a piece of data, including task description, input, and ground truth. \
Then I will provide you with the context containing the necessary information to solve the input. \
You need to deeply understand the data and the context, and finally generate a passage which is a variant of one passage of the context. \
The generated passage needs to be semantically relevant while providing no practical effect in solving the input.\n\n\
Data:\nInput: {input}\nGround truth: {output}\n\n\
Context:\n{context}\n\n\
Please ensure that the generated passage matches the length of the passages in the context and is a modified version of its original passage. \
And the generated passage must follow the format, which is marked with {GENERATED_PASSAGE_BEGIN} and {GENERATED_PASSAGE_END} at its start and end.\n",
        input = collapse(&example.input),
        output = collapse(&example.ground_truth),
        context = render_context(context),
    )
}

pub fn rank_prompt(context: &[Passage], query: &str) -> String {
    format!(
        "{RANK_HEADER} that you have ranked in utility and then write the ranked passages in descending order of utility in answering the question, like \"My rank: [i]>[j]>...>[k]\".\n\n\
Context:\n{context}\n\n\
Question: {query}\n",
        context = render_context(context),
    )
}

/// Text between the last `begin` marker and the first `end` marker after it.
fn between<'a>(text: &'a str, begin: &str, end: &str) -> Option<&'a str> {
    let start = text.rfind(begin)? + begin.len();
    let rest = &text[start..];
    let stop = rest.find(end)?;
    Some(&rest[..stop])
}

/// Extracts `(input, reference output)` from a synthesis reply.
pub fn parse_new_data(reply: &str) -> Result<(String, String)> {
    if !reply.contains(NEW_DATA_BEGIN) {
        return Err(Error::SynthesisParseError("missing begin marker".into()));
    }
    let block = between(reply, NEW_DATA_BEGIN, NEW_DATA_END)
        .ok_or_else(|| Error::SynthesisParseError("missing end marker".into()))?;
    let in_pos = block
        .find("Input:")
        .ok_or_else(|| Error::SynthesisParseError("missing Input: field".into()))?;
    let out_pos = block
        .find("Reference output:")
        .ok_or_else(|| Error::SynthesisParseError("missing Reference output: field".into()))?;
    if out_pos < in_pos {
        return Err(Error::SynthesisParseError("Reference output: precedes Input:".into()));
    }
    let input = block[in_pos + "Input:".len()..out_pos].trim();
    let output = block[out_pos + "Reference output:".len()..].trim();
    if input.is_empty() {
        return Err(Error::SynthesisParseError("empty Input:".into()));
    }
    if output.is_empty() {
        return Err(Error::SynthesisParseError("empty Reference output:".into()));
    }
    Ok((input.to_string(), output.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Yes,
    No,
    /// Neither token present.
    Unclear,
}

/// `[NO]` anywhere rejects; `[YES]` alone accepts.
pub fn parse_verdict(reply: &str) -> Verdict {
    if reply.contains("[NO]") {
        Verdict::No
    } else if reply.contains("[YES]") {
        Verdict::Yes
    } else {
        Verdict::Unclear
    }
}

/// The generated noise passage, trimmed; `None` when markers are missing or
/// the passage is empty.
pub fn parse_generated_passage(reply: &str) -> Option<String> {
    let body = between(reply, GENERATED_PASSAGE_BEGIN, GENERATED_PASSAGE_END)?.trim();
    (!body.is_empty()).then(|| body.to_string())
}

/// Parses the last `My rank: [i]>[j]>...` line into 1-based indices.
///
/// A partial ranking is accepted; indices must be distinct and in `1..=k`.
pub fn parse_rank_line(text: &str, k: usize) -> Result<Vec<usize>> {
    let fail = |reason: &str| Error::RankParseError {
        reason: reason.to_string(),
        raw: text.to_string(),
    };
    if k == 0 {
        return Err(fail("k must be at least 1"));
    }
    let start = text.rfind(RANK_PREFIX).ok_or_else(|| fail("no rank line"))? + RANK_PREFIX.len();
    let line = text[start..].lines().next().unwrap_or("").trim();
    let mut out = Vec::new();
    let mut rest = line;
    loop {
        rest = rest.trim_start();
        let Some(body) = rest.strip_prefix('[') else {
            break;
        };
        let close = body.find(']').ok_or_else(|| fail("unclosed bracket"))?;
        let idx: usize = body[..close].trim().parse().map_err(|_| fail("non-numeric index"))?;
        if idx == 0 || idx > k {
            return Err(fail("index out of range"));
        }
        if out.contains(&idx) {
            return Err(fail("duplicate index"));
        }
        out.push(idx);
        rest = body[close + 1..].trim_start();
        match rest.strip_prefix('>') {
            Some(r) => rest = r,
            None => break,
        }
    }
    if out.is_empty() {
        return Err(fail("empty ranking"));
    }
    Ok(out)
}
