//! Shared helpers for the five-label fixture corpus.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sidekick_core::llm_gateway::{ChatRequest, TransportError};

pub fn mini_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

/// Copies the fixture corpus (minus any previous output) into `dest` and
/// returns the config path inside it.
pub fn copy_mini(dest: &Path) -> PathBuf {
    copy_tree(&mini_dir(), dest);
    dest.join("sidekick.toml")
}

fn copy_tree(src: &Path, dest: &Path) {
    std::fs::create_dir_all(dest).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let path = entry.path();
        if entry.file_name() == "out" {
            continue;
        }
        if path.is_dir() {
            copy_tree(&path, &dest.join(entry.file_name()));
        } else {
            std::fs::copy(&path, dest.join(entry.file_name())).unwrap();
        }
    }
}

fn envelope(indications: &[&str], contraindications: &[&str], side_effects: &[&str]) -> String {
    let block = |outer: &str, inner: &str, items: &[&str]| {
        let body: String = items
            .iter()
            .map(|i| format!("    <{inner}>\n      <{inner}_name>{i}</{inner}_name>\n    </{inner}>\n"))
            .collect();
        format!("  <{outer}>\n{body}  </{outer}>\n")
    };
    format!(
        "```xml\n<drug_information>\n{}{}{}</drug_information>\n```",
        block("indications", "indication", indications),
        block("contraindications", "contraindication", contraindications),
        block("side_effects", "side_effect", side_effects)
    )
}

fn extraction_for(label: &str) -> Option<String> {
    let text = label.to_lowercase();
    // Checked in this order because labels mention other drugs.
    if text.contains("amoxicillin") {
        Some(envelope(
            &["urinary tract infection"],
            &["methotrexate", "history of cholestatic jaundice", "kidney disease"],
            &["diarrhea", "nausea", "rash"],
        ))
    } else if text.contains("lisinopril") {
        Some(envelope(
            &["hypertension", "heart failure", "hydrochlorothiazide"],
            &["kidney failure", "pregnancy"],
            &["cough", "dizziness", "hyperkalemia"],
        ))
    } else if text.contains("warfarin") {
        Some(envelope(
            &["atrial fibrillation", "deep vein thrombosis"],
            &["pregnancy", "hemorrhagic tendencies", "aspirin"],
            &["bleeding", "nausea", "palpitations"],
        ))
    } else if text.contains("metoprolol") {
        Some(envelope(
            &["hypertension"],
            &["bradycardia", "hypersensitivity to metoprolol"],
            &["bradycardia", "dizziness", "fatigue"],
        ))
    } else {
        None
    }
}

fn category_for(term: &str) -> &'static str {
    match term {
        "hypertension" | "heart failure" | "urinary tract infection" | "kidney disease" | "deep vein thrombosis" => {
            "Disease"
        }
        "bradycardia"
        | "kidney failure"
        | "history of cholestatic jaundice"
        | "atrial fibrillation"
        | "hemorrhagic tendencies" => "Phenotype",
        "hydrochlorothiazide" | "methotrexate" | "aspirin" => "Drug or Chemical",
        "pregnancy" => "Patient Population",
        _ => "Other",
    }
}

/// Plays the model for the fixture corpus. "hemorrhagic tendencies" gets
/// one unparseable answer before a valid one.
pub struct ScriptedModel {
    seen: Mutex<HashMap<String, usize>>,
}

impl ScriptedModel {
    pub fn new() -> Self {
        ScriptedModel {
            seen: Mutex::new(HashMap::new()),
        }
    }

    pub fn respond(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let text: String = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let unexpected = || TransportError::Http {
            status: 400,
            body: format!("unscripted prompt: {}", &text[..text.len().min(200)]),
        };
        if text.contains("extracting information from FDA drug labels") {
            return extraction_for(&text).ok_or_else(unexpected);
        }
        if text.contains("Classify each of the following terms") {
            let terms = text.split_once("Terms:\n").ok_or_else(unexpected)?.1;
            let items: Vec<String> = terms
                .lines()
                .filter_map(|l| l.split_once(". "))
                .map(|(n, t)| format!("{{\"index\": {n}, \"category\": \"{}\"}}", category_for(t.trim())))
                .collect();
            return Ok(format!("[{}]", items.join(", ")));
        }
        if text.contains("You map clinical terms") {
            let term = text
                .lines()
                .find_map(|l| l.strip_prefix("Term: "))
                .ok_or_else(unexpected)?
                .trim()
                .to_string();
            let n = {
                let mut seen = self.seen.lock().unwrap();
                let n = seen.entry(term.clone()).or_insert(0);
                *n += 1;
                *n
            };
            return match (term.as_str(), n) {
                ("kidney failure", _) => Ok(r#"{"id": "HP:0000083", "name": "Renal insufficiency"}"#.into()),
                ("hemorrhagic tendencies", 1) => Ok("The best match is probably abnormal bleeding.".into()),
                ("hemorrhagic tendencies", _) => Ok(r#"{"id": "HP:0001892", "name": "Abnormal bleeding"}"#.into()),
                _ => Err(unexpected()),
            };
        }
        Err(unexpected())
    }
}

/// Hand-derived counts for the fixture graph; see `golden_stats.json`.
pub const GOLDEN_STATS: &str = "golden_stats.json";
