//! Pairwise LLM-judge prompt for comparing two candidate questions.

use crate::error::{Error, Result};
use crate::text::normalize_ws;

pub const INSTRUCTION: &str = "This is a task to evaluate the quality of a conversational question answering dataset. You will be given [context, two candidate questions, answer], and your task is to compare the quality of the candidate questions based on four criteria: contextual relevance, well-formedness, fluency, overall quality. For each criteria, answer which question is better.";

pub const CRITERIA: [&str; 3] = [
    "1. Contextual Relevance: whether the question relevant to the answer/context",
    "2. Well-formedness: whether the question is well-formed",
    "3. Overall Quality: overall quality of the question",
];

pub const OPTIONS_LINE: &str = "options: [Question A, Equal, Question B]";

pub const QUESTIONS: [&str; 3] = [
    "Choose the question which is more relevant to the given answer.",
    "Choose the question which is more well-formed?",
    "Choose the question which has better overall-quality.",
];

/// Instantiates the judge template. Inputs are whitespace-normalized so each
/// field stays on its own line.
pub fn build_judge_prompt(
    context: &str,
    question_a: &str,
    question_b: &str,
    answer: &str,
) -> Result<String> {
    let fields = [
        ("context", normalize_ws(context)),
        ("question_a", normalize_ws(question_a)),
        ("question_b", normalize_ws(question_b)),
        ("answer", normalize_ws(answer)),
    ];
    if let Some((name, _)) = fields.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::invalid(format!("judge prompt field `{name}` is empty")));
    }
    let [(_, context), (_, a), (_, b), (_, answer)] = fields;
    let mut lines: Vec<String> = vec![INSTRUCTION.into(), String::new()];
    lines.extend(CRITERIA.iter().map(|c| c.to_string()));
    lines.push(String::new());
    lines.push(format!("• Context: {context}"));
    lines.push(format!("• Question A: {a}"));
    lines.push(format!("• Question B: {b}"));
    lines.push(format!("• Answer: {answer}"));
    lines.push(String::new());
    for q in QUESTIONS {
        lines.push(q.into());
        lines.push(OPTIONS_LINE.into());
    }
    let mut out = lines.join("\n");
    out.push('\n');
    Ok(out)
}

/// Optional HTTP client for an OpenAI-compatible chat endpoint.
///
/// The endpoint comes from `CONVQA_JUDGE_ENDPOINT`, the model from
/// `CONVQA_JUDGE_MODEL` and an optional bearer token from `CONVQA_JUDGE_API_KEY`.
#[cfg(feature = "judge-http")]
pub mod http {
    use crate::error::{Error, Result};

    pub const ENDPOINT_ENV: &str = "CONVQA_JUDGE_ENDPOINT";
    pub const MODEL_ENV: &str = "CONVQA_JUDGE_MODEL";
    pub const KEY_ENV: &str = "CONVQA_JUDGE_API_KEY";

    pub struct JudgeClient {
        endpoint: String,
        model: String,
        api_key: Option<String>,
    }

    impl JudgeClient {
        pub fn from_env() -> Result<Self> {
            let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| Error::Unavailable {
                name: "llm-judge".into(),
                advice: format!("set {ENDPOINT_ENV} to enable live judging"),
            })?;
            Ok(Self {
                endpoint,
                model: std::env::var(MODEL_ENV).unwrap_or_else(|_| "gpt-4".into()),
                api_key: std::env::var(KEY_ENV).ok(),
            })
        }

        pub fn judge(&self, prompt: &str) -> Result<String> {
            let body = serde_json::json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            });
            let mut req = ureq::post(&self.endpoint);
            if let Some(k) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {k}"));
            }
            let resp: serde_json::Value = req
                .send_json(body)
                .map_err(|e| Error::Backend(format!("judge request failed: {e}")))?
                .into_json()?;
            resp["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Backend("judge response has no message content".into()))
        }
    }
}
