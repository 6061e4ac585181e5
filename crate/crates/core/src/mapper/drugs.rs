use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::rxnav::{Ingredient, RxNavClient};

pub const DEFAULT_STOP_PHRASES: [&str; 4] = [
    "coadministration with",
    "concomitant use of",
    "use with",
    "combination with",
];

const APPROXIMATE_CANDIDATES: usize = 10;

/// Chemical-entity recognizer over free text.
pub trait EntityRecognizer: Send + Sync {
    fn recognize(&self, text: &str) -> Result<Vec<String>, String>;
}

/// Stop-phrase removal and delimiter splitting.
#[derive(Debug, Clone)]
pub struct HeuristicRecognizer {
    pub stop_phrases: Vec<String>,
}

impl Default for HeuristicRecognizer {
    fn default() -> Self {
        HeuristicRecognizer {
            stop_phrases: DEFAULT_STOP_PHRASES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl EntityRecognizer for HeuristicRecognizer {
    fn recognize(&self, text: &str) -> Result<Vec<String>, String> {
        let phrases: Vec<&str> = self.stop_phrases.iter().map(String::as_str).collect();
        Ok(heuristic_drug_entities(text, &phrases))
    }
}

/// Runs an external tagger: the text goes to stdin and a JSON array of
/// entity strings is expected on stdout.
#[derive(Debug, Clone)]
pub struct SubprocessRecognizer {
    pub program: String,
    pub args: Vec<String>,
}

impl EntityRecognizer for SubprocessRecognizer {
    fn recognize(&self, text: &str) -> Result<Vec<String>, String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("{}: {e}", self.program))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string())?;
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} exited with {}", self.program, out.status));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| format!("{} output: {e}", self.program))
    }
}

fn strip_leading_phrases<'a>(mut s: &'a str, phrases: &[&str]) -> &'a str {
    loop {
        let trimmed = s.trim_start();
        let hit = phrases.iter().find(|p| {
            trimmed.get(..p.len()).is_some_and(|head| head.eq_ignore_ascii_case(p))
                && trimmed[p.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric())
        });
        match hit {
            Some(p) => s = &trimmed[p.len()..],
            None => return trimmed,
        }
    }
}

/// Splits on `,` `;` `/` and the words `and` / `or`, dropping leading stop
/// phrases from each piece. Duplicates are removed case-insensitively.
pub fn heuristic_drug_entities(text: &str, stop_phrases: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for chunk in text.split([',', ';', '/']) {
        let mut piece: Vec<&str> = Vec::new();
        let mut pieces: Vec<String> = Vec::new();
        for word in chunk.split_whitespace() {
            if word.eq_ignore_ascii_case("and") || word.eq_ignore_ascii_case("or") {
                pieces.push(piece.join(" "));
                piece.clear();
            } else {
                piece.push(word);
            }
        }
        pieces.push(piece.join(" "));
        for p in pieces {
            let cleaned = strip_leading_phrases(&p, stop_phrases)
                .trim()
                .trim_end_matches(['.', ':'])
                .trim();
            if !cleaned.is_empty() && !out.iter().any(|o| o.eq_ignore_ascii_case(cleaned)) {
                out.push(cleaned.to_string());
            }
        }
    }
    out
}

/// Uses the recognizer when given, falling back to the heuristic if it
/// fails.
pub fn extract_drug_entities(text: &str, recognizer: Option<&dyn EntityRecognizer>) -> Vec<String> {
    if let Some(r) = recognizer {
        match r.recognize(text) {
            Ok(spans) => {
                return spans
                    .into_iter()
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            Err(e) => log::warn!("entity recognizer failed, using heuristic: {e}"),
        }
    }
    heuristic_drug_entities(text, &DEFAULT_STOP_PHRASES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrugGroup {
    Resolved,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugResolution {
    pub surface: String,
    pub entities: Vec<String>,
    /// Ingredient-level RxCUIs, first-seen order.
    pub rxcuis: Vec<String>,
    /// Ingredient names aligned with `rxcuis`.
    pub names: Vec<String>,
    pub group: DrugGroup,
}

fn ingredients_for(entity: &str, client: &dyn RxNavClient) -> Result<Vec<Ingredient>, super::RxNavError> {
    if let Some(rxcui) = client.exact_lookup(entity)? {
        return client.related_ingredients(&rxcui);
    }
    for candidate in client.approximate_lookup(entity, APPROXIMATE_CANDIDATES)? {
        let found = client.related_ingredients(&candidate)?;
        if !found.is_empty() {
            return Ok(found);
        }
    }
    Ok(Vec::new())
}

/// Resolves each drug mention in `surface` to ingredient RxCUIs: exact
/// lookup first, then the first approximate candidate with ingredients.
pub fn resolve_drug(
    surface: &str,
    client: &dyn RxNavClient,
    recognizer: Option<&dyn EntityRecognizer>,
) -> DrugResolution {
    let entities = extract_drug_entities(surface, recognizer);
    let mut rxcuis: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for entity in &entities {
        match ingredients_for(entity, client) {
            Ok(found) => {
                for ing in found {
                    if !rxcuis.contains(&ing.rxcui) {
                        rxcuis.push(ing.rxcui);
                        names.push(ing.name);
                    }
                }
            }
            Err(e) => log::warn!("skipping drug entity {entity:?}: {e}"),
        }
    }
    let group = if rxcuis.is_empty() {
        DrugGroup::Other
    } else {
        DrugGroup::Resolved
    };
    DrugResolution {
        surface: surface.to_string(),
        entities,
        rxcuis,
        names,
        group,
    }
}
