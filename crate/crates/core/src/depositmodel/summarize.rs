use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{validate_model, DepositModel, CANONICAL_HEADINGS};
use crate::error::{Error, Result};

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../../assets/summarize_prompt.txt");

const PLACEHOLDERS: [&str; 3] = ["{{deposit_type}}", "{{document}}", "{{headings}}"];

/// Text completion backend.
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> std::result::Result<String, String>;
}

/// `POST {endpoint}/complete` with `{"prompt"}`, answered by
/// `{"completion"}`.
pub struct HttpLlm {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpLlm {
    pub fn new(endpoint: &str) -> Result<Self> {
        if endpoint.trim().is_empty() {
            return Err(Error::Config("LLM endpoint is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpLlm {
            url: format!("{}/complete", endpoint.trim_end_matches('/')),
            client,
        })
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompleteResponse {
    completion: String,
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        &self.url
    }

    fn complete(&self, prompt: &str) -> std::result::Result<String, String> {
        let resp = self
            .client
            .post(&self.url)
            .json(&CompleteRequest { prompt })
            .send()
            .map_err(|e| format!("request to {} failed: {e}", self.url))?;
        if !resp.status().is_success() {
            return Err(format!("{} answered {}", self.url, resp.status()));
        }
        let body: CompleteResponse = resp
            .json()
            .map_err(|e| format!("malformed response from {}: {e}", self.url))?;
        Ok(body.completion)
    }
}

pub fn instantiate_prompt(template: &str, deposit_type: &str, document: &str) -> Result<String> {
    let missing: Vec<&str> = PLACEHOLDERS.iter().copied().filter(|p| !template.contains(p)).collect();
    if !missing.is_empty() {
        return Err(Error::input(format!(
            "prompt template lacks placeholder(s) {}",
            missing.join(", ")
        )));
    }
    let headings = CANONICAL_HEADINGS.join("\n");
    Ok(template
        .replace("{{deposit_type}}", deposit_type)
        .replace("{{headings}}", &headings)
        .replace("{{document}}", document))
}

/// Match a canonical heading at the start of a line, tolerating list
/// bullets and bold markers: `Rock types: ...`, `- **Rock types**: ...`.
fn heading_line(line: &str) -> Option<(&'static str, &str)> {
    let t = line.trim_start().trim_start_matches(['-', '*', '#', ' ']);
    for h in CANONICAL_HEADINGS {
        if t.len() >= h.len() && t.is_char_boundary(h.len()) && t[..h.len()].eq_ignore_ascii_case(h) {
            let rest = t[h.len()..].trim_start_matches('*').trim_start();
            if let Some(value) = rest.strip_prefix(':') {
                return Some((h, value.trim()));
            }
        }
    }
    None
}

/// Parse `Heading: value` blocks. Lines that do not start a heading
/// continue the previous value; text before the first heading is ignored.
pub fn parse_completion(completion: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in completion.lines() {
        if let Some((h, value)) = heading_line(line) {
            if out.iter().any(|(seen, _)| seen == h) {
                return Err(Error::CompletionParse {
                    message: format!("heading {h:?} appears twice"),
                    raw: completion.to_string(),
                });
            }
            out.push((h.to_string(), value.to_string()));
        } else if let Some((_, value)) = out.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                if !value.is_empty() {
                    value.push(' ');
                }
                value.push_str(extra);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::CompletionParse {
            message: "no \"Heading: value\" lines found".into(),
            raw: completion.to_string(),
        });
    }
    Ok(out)
}

/// Distill a long document into a deposit model with an LLM.
///
/// Fails with an input error on an empty document (before any call), a
/// provider error if the call fails, a completion-parse error carrying the
/// raw completion, or a validation error if characteristics are missing or
/// empty.
pub fn summarize_document(
    text: &str,
    deposit_type: &str,
    llm: &dyn LlmProvider,
    template: &str,
) -> Result<DepositModel> {
    if text.trim().is_empty() {
        return Err(Error::input("document is empty"));
    }
    if deposit_type.trim().is_empty() {
        return Err(Error::input("deposit type is empty"));
    }
    let prompt = instantiate_prompt(template, deposit_type.trim(), text)?;
    let completion = llm.complete(&prompt).map_err(|message| Error::Provider {
        provider: llm.name().to_string(),
        batch: 0,
        message,
        completed: 0,
    })?;
    let characteristics = parse_completion(&completion)?;
    let model = DepositModel {
        deposit_type: deposit_type.trim().to_string(),
        characteristics,
        source_docs: vec![format!("summarized from a {}-character document", text.chars().count())],
        edited: false,
    };
    let blocking: Vec<String> = validate_model(&model)
        .into_iter()
        .filter(|d| d.is_blocking())
        .map(|d| d.message)
        .collect();
    if !blocking.is_empty() {
        return Err(Error::Validation(blocking.join("; ")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depositmodel::builtin_models;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Canned {
        reply: std::result::Result<String, String>,
        calls: AtomicUsize,
    }

    impl Canned {
        fn ok(s: &str) -> Self {
            Canned {
                reply: Ok(s.into()),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl LlmProvider for Canned {
        fn name(&self) -> &str {
            "canned"
        }
        fn complete(&self, _prompt: &str) -> std::result::Result<String, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.reply.clone()
        }
    }

    fn table1_completion() -> String {
        builtin_models()[0]
            .characteristics
            .iter()
            .map(|(h, v)| format!("{h}: {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn canned_round_trip() {
        let llm = Canned::ok(&table1_completion());
        let m = summarize_document("long text", "tungsten skarn", &llm, DEFAULT_PROMPT_TEMPLATE).unwrap();
        assert_eq!(m.headings(), CANONICAL_HEADINGS.to_vec());
        assert!(m
            .characteristic("Rock types")
            .unwrap()
            .contains("tonalite, granodiorite, quartz monzonite"));
    }

    #[test]
    fn empty_document_makes_no_call() {
        let llm = Canned::ok("Synonyms: x");
        let err = summarize_document("  \n", "w skarn", &llm, DEFAULT_PROMPT_TEMPLATE).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert_eq!(llm.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn errors_are_distinct() {
        let down = Canned {
            reply: Err("503".into()),
            calls: AtomicUsize::new(0),
        };
        assert!(matches!(
            summarize_document("doc", "t", &down, DEFAULT_PROMPT_TEMPLATE),
            Err(Error::Provider { .. })
        ));
        let prose = Canned::ok("I cannot help with that.");
        match summarize_document("doc", "t", &prose, DEFAULT_PROMPT_TEMPLATE) {
            Err(Error::CompletionParse { raw, .. }) => assert_eq!(raw, "I cannot help with that."),
            other => panic!("{other:?}"),
        }
        let partial = Canned::ok("Synonyms: a\nCommodities: W");
        assert!(matches!(
            summarize_document("doc", "t", &partial, DEFAULT_PROMPT_TEMPLATE),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn template_placeholders_required() {
        assert!(instantiate_prompt("no placeholders", "t", "d").is_err());
        let p = instantiate_prompt(DEFAULT_PROMPT_TEMPLATE, "tungsten skarn", "DOC").unwrap();
        assert!(p.contains("tungsten skarn") && p.contains("DOC") && p.contains("Ore controls"));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn tolerant_heading_markup() {
        let parsed = parse_completion("Here you go:\n- **Rock types**: granite\n  and more\nAge range: Cretaceous").unwrap();
        assert_eq!(
            parsed,
            vec![
                ("Rock types".to_string(), "granite and more".to_string()),
                ("Age range".to_string(), "Cretaceous".to_string())
            ]
        );
    }
}
