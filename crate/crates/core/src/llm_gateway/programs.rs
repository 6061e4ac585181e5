use std::collections::HashSet;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::prompts::{classification_prompt, disambiguation_prompt, EXTRACTION_INSTRUCTIONS};
use super::{Gateway, GatewayError};
use crate::mapper::Category;
use crate::ontology::{Relation, TermId};

pub const CLASSIFY_BATCH_LIMIT: usize = 15;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub set_id: String,
    pub indications: Vec<String>,
    pub contraindications: Vec<String>,
    pub side_effects: Vec<String>,
}

impl ExtractionResult {
    pub fn is_empty(&self) -> bool {
        self.indications.is_empty() && self.contraindications.is_empty() && self.side_effects.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationCandidate {
    pub id: TermId,
    pub name: String,
    pub score: f64,
    pub definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub id: TermId,
    pub name: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchClassification {
    pub categories: Vec<Category>,
    /// Set when the batch fell back to `Other` wholesale.
    pub warning: Option<String>,
}

/// Removes a leading ```lang fence line and a trailing ``` fence.
pub fn strip_code_fences(text: &str) -> &str {
    let mut s = text.trim();
    if let Some(rest) = s.strip_prefix("```") {
        s = match rest.find('\n') {
            Some(nl)
                if rest[..nl]
                    .trim()
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') =>
            {
                &rest[nl + 1..]
            }
            Some(_) => rest,
            None => rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric()),
        };
    }
    if let Some(rest) = s.trim_end().strip_suffix("```") {
        s = rest;
    }
    s.trim()
}

// A bare `&` that does not start an entity reference.
fn escape_bare_ampersands(xml: &str) -> String {
    let mut out = String::with_capacity(xml.len());
    for (i, c) in xml.char_indices() {
        if c == '&' {
            let tail = &xml[i + 1..];
            let entity = tail
                .find(';')
                .filter(|&end| end > 0 && end <= 10)
                .map(|end| &tail[..end])
                .is_some_and(|name| {
                    name.strip_prefix('#')
                        .map_or(name.chars().all(|c| c.is_ascii_alphanumeric()), |num| {
                            !num.is_empty() && num.chars().all(|c| c.is_ascii_alphanumeric())
                        })
                });
            out.push_str(if entity { "&" } else { "&amp;" });
        } else {
            out.push(c);
        }
    }
    out
}

fn push_unique(list: &mut Vec<String>, seen: &mut HashSet<String>, value: &str) {
    let value = value.split_whitespace().collect::<Vec<_>>().join(" ");
    if !value.is_empty() && seen.insert(value.to_lowercase()) {
        list.push(value);
    }
}

/// Parses the `<drug_information>` envelope into the three entity lists.
pub fn parse_extraction(response: &str, set_id: &str) -> Result<ExtractionResult, String> {
    let body = strip_code_fences(response);
    let start = body.find("<drug_information").ok_or("no <drug_information> element")?;
    let end = body
        .rfind("</drug_information>")
        .ok_or("unterminated <drug_information> element")?
        + "</drug_information>".len();
    if end <= start {
        return Err("unterminated <drug_information> element".into());
    }
    let xml = escape_bare_ampersands(&body[start..end]);
    let mut reader = Reader::from_str(&xml);
    let mut result = ExtractionResult {
        set_id: set_id.to_string(),
        ..Default::default()
    };
    let mut seen: [HashSet<String>; 3] = Default::default();
    let mut current: Option<usize> = None;
    let mut text = String::new();
    let mut depth = 0usize;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                depth += 1;
                current = match e.name().as_ref() {
                    b"indication_name" => Some(0),
                    b"contraindication_name" => Some(1),
                    b"side_effect_name" => Some(2),
                    _ => current,
                };
                text.clear();
            }
            Ok(Event::End(e)) => {
                depth = depth.saturating_sub(1);
                let slot = match e.name().as_ref() {
                    b"indication_name" => Some(0),
                    b"contraindication_name" => Some(1),
                    b"side_effect_name" => Some(2),
                    _ => None,
                };
                if let Some(k) = slot {
                    let list = match k {
                        0 => &mut result.indications,
                        1 => &mut result.contraindications,
                        _ => &mut result.side_effects,
                    };
                    push_unique(list, &mut seen[k], &text);
                    current = None;
                    text.clear();
                }
            }
            Ok(Event::Text(t)) if current.is_some() => {
                let s = t.unescape().map_err(|e| format!("bad text: {e}"))?;
                text.push_str(&s);
            }
            Ok(Event::CData(t)) if current.is_some() => {
                text.push_str(&String::from_utf8_lossy(&t.into_inner()));
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(format!("malformed XML at {}: {e}", reader.error_position())),
        }
    }
    if depth != 0 {
        return Err("unbalanced XML".into());
    }
    Ok(result)
}

/// Runs the extraction prompt over one flattened label.
///
/// Malformed responses and empty envelopes are retried up to `max_retries`
/// times. An envelope that is still empty after all attempts is returned as
/// an empty result; a malformed one is an error.
pub fn extract_entities(gateway: &Gateway, label_text: &str, set_id: &str) -> Result<ExtractionResult, GatewayError> {
    let attempts = gateway.config().max_retries + 1;
    let mut last_empty = None;
    let mut reason = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            gateway.clock().sleep(gateway.config().retry_delay());
        }
        let response = gateway.complete_parts(EXTRACTION_INSTRUCTIONS, label_text)?;
        match parse_extraction(&response, set_id) {
            Ok(r) if !r.is_empty() => return Ok(r),
            Ok(r) => {
                log::warn!("{set_id}: empty extraction envelope (attempt {attempt}/{attempts})");
                last_empty = Some(r);
            }
            Err(e) => {
                log::warn!("{set_id}: {e} (attempt {attempt}/{attempts})");
                reason = e;
            }
        }
    }
    last_empty.ok_or(GatewayError::Malformed { attempts, reason })
}

#[derive(Deserialize)]
struct ClassificationItem {
    index: serde_json::Value,
    category: String,
}

fn json_span(text: &str, open: char, close: char) -> Option<&str> {
    let body = strip_code_fences(text);
    let start = body.find(open)?;
    let end = body.rfind(close)?;
    (end > start).then(|| &body[start..=end])
}

/// Parses a JSON array of `{index, category}` (1-based indices) into one
/// category per term. Terms the response does not mention become `Other`.
pub fn parse_classification(response: &str, n: usize) -> Result<Vec<Category>, String> {
    let span = json_span(response, '[', ']').ok_or("no JSON array in response")?;
    let items: Vec<ClassificationItem> = serde_json::from_str(span).map_err(|e| e.to_string())?;
    let mut out = vec![Category::Other; n];
    for item in items {
        let index = match &item.index {
            serde_json::Value::Number(x) => x.as_u64(),
            serde_json::Value::String(s) => s.trim().parse().ok(),
            _ => None,
        };
        match index {
            Some(i) if (1..=n as u64).contains(&i) => out[i as usize - 1] = Category::parse_lenient(&item.category),
            _ => return Err(format!("index {} out of range", item.index)),
        }
    }
    Ok(out)
}

/// Classifies up to 15 terms in one prompt. Malformed output is retried;
/// when every attempt fails the whole batch falls back to `Other`.
pub fn classify_batch(gateway: &Gateway, terms: &[&str]) -> Result<BatchClassification, GatewayError> {
    if terms.is_empty() || terms.len() > CLASSIFY_BATCH_LIMIT {
        return Err(GatewayError::Config(format!(
            "classification batch must hold 1..={CLASSIFY_BATCH_LIMIT} terms, got {}",
            terms.len()
        )));
    }
    let (instructions, payload) = classification_prompt(terms);
    let attempts = gateway.config().max_retries + 1;
    let mut reason = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            gateway.clock().sleep(gateway.config().retry_delay());
        }
        match gateway.complete_parts(&instructions, &payload) {
            Ok(response) => match parse_classification(&response, terms.len()) {
                Ok(categories) => {
                    return Ok(BatchClassification {
                        categories,
                        warning: None,
                    })
                }
                Err(e) => reason = e,
            },
            Err(e) => {
                reason = e.to_string();
                break;
            }
        }
    }
    let warning = format!("classification failed for batch of {}: {reason}", terms.len());
    log::warn!("{warning}");
    Ok(BatchClassification {
        categories: vec![Category::Other; terms.len()],
        warning: Some(warning),
    })
}

/// Parses `{"id": ..., "name": ...}`; other keys are ignored.
pub fn parse_disambiguation(response: &str) -> Result<(TermId, String), String> {
    let span = json_span(response, '{', '}').ok_or("no JSON object in response")?;
    let value: serde_json::Value = serde_json::from_str(span).map_err(|e| e.to_string())?;
    let id = value["id"].as_str().ok_or("missing string key \"id\"")?;
    let name = value["name"].as_str().ok_or("missing string key \"name\"")?;
    let id = TermId::new(id.trim()).map_err(|e| e.to_string())?;
    Ok((id, name.trim().to_string()))
}

/// One completion and parse, no retry.
pub fn disambiguate_once(
    gateway: &Gateway,
    term: &str,
    ontology: &str,
    candidates: &[DisambiguationCandidate],
    context: &[ContextEntry],
) -> Result<(TermId, String), GatewayError> {
    if candidates.is_empty() {
        return Err(GatewayError::Config(
            "disambiguation needs at least one candidate".into(),
        ));
    }
    let (instructions, payload) = disambiguation_prompt(term, ontology, candidates, context);
    let response = gateway.complete_parts(&instructions, &payload)?;
    parse_disambiguation(&response).map_err(|reason| GatewayError::Malformed { attempts: 1, reason })
}

/// Asks the model to pick one class for `term`, retrying unparseable
/// responses up to `max_retries` times.
pub fn disambiguate(
    gateway: &Gateway,
    term: &str,
    ontology: &str,
    candidates: &[DisambiguationCandidate],
    context: &[ContextEntry],
) -> Result<(TermId, String), GatewayError> {
    let attempts = gateway.config().max_retries + 1;
    let mut reason = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            gateway.clock().sleep(gateway.config().retry_delay());
        }
        match disambiguate_once(gateway, term, ontology, candidates, context) {
            Ok(answer) => return Ok(answer),
            Err(GatewayError::Malformed { reason: r, .. }) => reason = r,
            Err(e) => return Err(e),
        }
    }
    Err(GatewayError::Malformed { attempts, reason })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm_gateway::{ChatRequest, FnTransport, GatewayConfig, ManualClock, Transport};

    #[allow(clippy::type_complexity)]
    fn canned(
        responses: Vec<&'static str>,
    ) -> (
        Gateway,
        Arc<
            FnTransport<
                impl Fn(&ChatRequest, usize) -> Result<String, crate::llm_gateway::TransportError> + Send + Sync,
            >,
        >,
    ) {
        let t = Arc::new(FnTransport::new(move |_: &ChatRequest, n| {
            Ok(responses[n.min(responses.len() - 1)].to_string())
        }));
        let g = Gateway::new(
            GatewayConfig::mapping(),
            t.clone() as Arc<dyn Transport>,
            Arc::new(ManualClock::new()),
        )
        .unwrap();
        (g, t)
    }

    const ENVELOPE: &str = "<drug_information>
  <indications><indication><indication_name>Hypertension</indication_name></indication></indications>
  <contraindications></contraindications>
  <side_effects>
    <side_effect><side_effect_name>Headache</side_effect_name></side_effect>
    <side_effect><side_effect_name>Nausea &amp; vomiting</side_effect_name></side_effect>
    <side_effect><side_effect_name>headache</side_effect_name></side_effect>
  </side_effects>
</drug_information>";

    #[test]
    fn extraction_counts() {
        let r = parse_extraction(ENVELOPE, "s1").unwrap();
        assert_eq!(r.indications, vec!["Hypertension"]);
        assert!(r.contraindications.is_empty());
        assert_eq!(r.side_effects, vec!["Headache", "Nausea & vomiting"]);
    }

    #[test]
    fn fenced_and_bare_ampersand() {
        let fenced = "```xml\n<drug_information><side_effects><side_effect><side_effect_name>Rash & itch</side_effect_name></side_effect></side_effects></drug_information>\n```";
        let r = parse_extraction(fenced, "s").unwrap();
        assert_eq!(r.side_effects, vec!["Rash & itch"]);
    }

    #[test]
    fn fences() {
        assert_eq!(strip_code_fences("```json\n{}\n```"), "{}");
        assert_eq!(strip_code_fences("```\n[1]\n```"), "[1]");
        assert_eq!(strip_code_fences("plain"), "plain");
    }

    #[test]
    fn extraction_retries_then_fails() {
        let (g, t) = canned(vec!["not xml"]);
        let err = extract_entities(&g, "label", "s").unwrap_err();
        assert!(matches!(err, GatewayError::Malformed { attempts: 4, .. }));
        assert_eq!(t.calls(), 4);
    }

    #[test]
    fn extraction_retries_empty_envelope() {
        let (g, t) = canned(vec!["<drug_information></drug_information>", ENVELOPE]);
        let r = extract_entities(&g, "label", "s").unwrap();
        assert_eq!(r.side_effects.len(), 2);
        assert_eq!(t.calls(), 2);
    }

    #[test]
    fn extraction_prompt_is_template_plus_label() {
        let t = Arc::new(FnTransport::new(|r: &ChatRequest, _| Ok(r.messages[0].content.clone())));
        let g = Gateway::new(GatewayConfig::extraction(), t, Arc::new(ManualClock::new())).unwrap();
        let sent = g.complete_parts(EXTRACTION_INSTRUCTIONS, "LABEL").unwrap();
        assert!(sent.starts_with("You are an expert in extracting information from FDA drug labels."));
        assert!(sent.ends_with("</drug_information>\n\nLABEL"));
    }

    #[test]
    fn classification() {
        assert_eq!(
            parse_classification(r#"[{"index":1,"category":"Disease"}]"#, 1).unwrap(),
            vec![Category::Disease]
        );
        assert_eq!(
            parse_classification(r#"[{"index":1,"category":"Procedure"}]"#, 1).unwrap(),
            vec![Category::Procedure]
        );
        assert_eq!(
            parse_classification(r#"[{"index":"1","category":"Foo"}]"#, 1).unwrap(),
            vec![Category::Other]
        );
        assert_eq!(
            parse_classification(r#"[{"index":2,"category":"Drug or Chemical"}]"#, 2).unwrap(),
            vec![Category::Other, Category::DrugOrChemical]
        );
        assert!(parse_classification(r#"[{"index":3,"category":"Disease"}]"#, 2).is_err());
    }

    #[test]
    fn classify_batch_falls_back() {
        let (g, t) = canned(vec!["garbage"]);
        let r = classify_batch(&g, &["a", "b"]).unwrap();
        assert_eq!(r.categories, vec![Category::Other; 2]);
        assert!(r.warning.is_some());
        assert_eq!(t.calls(), 4);
        assert!(classify_batch(&g, &[]).is_err());
        assert!(classify_batch(&g, &["x"; 16]).is_err());
    }

    #[test]
    fn disambiguation_parse() {
        let (id, name) = parse_disambiguation(r#"{"id":"HP:0002315","name":"Headache"}"#).unwrap();
        assert_eq!((id.as_str(), name.as_str()), ("HP:0002315", "Headache"));
        let (id, _) =
            parse_disambiguation("```json\n{\"id\":\"HP:1\",\"name\":\"x\",\"why\":\"because\"}\n```").unwrap();
        assert_eq!(id.as_str(), "HP:1");
        assert!(parse_disambiguation("").is_err());
    }

    #[test]
    fn disambiguate_empty_responses_fail() {
        let (g, t) = canned(vec![""]);
        let cand = DisambiguationCandidate {
            id: TermId::new("HP:1").unwrap(),
            name: "x".into(),
            score: 0.5,
            definition: None,
        };
        assert!(matches!(
            disambiguate(&g, "t", "HPO", &[cand], &[]),
            Err(GatewayError::Malformed { .. })
        ));
        assert_eq!(t.calls(), 4);
    }

    #[test]
    fn disambiguation_prompt_layout() {
        let cand = DisambiguationCandidate {
            id: TermId::new("HP:0002315").unwrap(),
            name: "Headache".into(),
            score: 0.912345,
            definition: None,
        };
        let ctx = ContextEntry {
            id: TermId::new("HP:0012638").unwrap(),
            name: "Abnormal nervous system physiology".into(),
            relation: Relation::Parent,
        };
        let (_, payload) = disambiguation_prompt("head pain", "HPO", &[cand], &[ctx]);
        assert!(payload.contains("HP:0002315 | Headache | score 0.9123 | no definition"));
        assert!(payload.contains("HP:0012638 | Abnormal nervous system physiology (parent)"));
    }
}
