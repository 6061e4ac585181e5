use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RXNAV_BASE_URL: &str = "https://rxnav.nlm.nih.gov/REST";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RxNavError {
    #[error("RxNav HTTP {status} for {url}")]
    Http { status: u16, url: String },
    #[error("RxNav network error: {0}")]
    Network(String),
    #[error("RxNav response not understood: {0}")]
    Decode(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ingredient {
    pub rxcui: String,
    pub name: String,
}

pub trait RxNavClient: Send + Sync {
    /// `/rxcui.json?name=`
    fn exact_lookup(&self, name: &str) -> Result<Option<String>, RxNavError>;
    /// `/approximateTerm.json?term=&maxEntries=`, best first, deduplicated.
    fn approximate_lookup(&self, name: &str, max: usize) -> Result<Vec<String>, RxNavError>;
    /// Ingredient-level (`IN`) concepts related to `rxcui`, including the
    /// concept itself when it is an ingredient.
    fn related_ingredients(&self, rxcui: &str) -> Result<Vec<Ingredient>, RxNavError>;
}

/// Blocking client for the public RxNav REST API.
pub struct HttpRxNav {
    base: String,
    agent: ureq::Agent,
    max_retries: u32,
    retry_delay: Duration,
}

impl HttpRxNav {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpRxNav {
            base: base.into().trim_end_matches('/').to_string(),
            agent,
            max_retries: 3,
            retry_delay: Duration::from_secs(1),
        }
    }

    fn get(&self, path: &str, query: &[(&str, &str)]) -> Result<serde_json::Value, RxNavError> {
        let url = format!("{}{}", self.base, path);
        let mut attempt = 0;
        loop {
            let mut req = self.agent.get(&url);
            for (k, v) in query {
                req = req.query(*k, *v);
            }
            let outcome = match req.call() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    match resp.body_mut().read_to_string() {
                        Ok(body) if status == 200 => {
                            return serde_json::from_str(&body).map_err(|e| RxNavError::Decode(e.to_string()))
                        }
                        Ok(_) => RxNavError::Http {
                            status,
                            url: url.clone(),
                        },
                        Err(e) => RxNavError::Network(e.to_string()),
                    }
                }
                Err(e) => RxNavError::Network(e.to_string()),
            };
            let retryable = match &outcome {
                RxNavError::Http { status, .. } => *status == 429 || *status >= 500,
                _ => true,
            };
            attempt += 1;
            if !retryable || attempt > self.max_retries {
                return Err(outcome);
            }
            std::thread::sleep(self.retry_delay);
        }
    }
}

fn strings_at(value: &serde_json::Value) -> Vec<String> {
    value
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

impl RxNavClient for HttpRxNav {
    fn exact_lookup(&self, name: &str) -> Result<Option<String>, RxNavError> {
        let v = self.get("/rxcui.json", &[("name", name)])?;
        Ok(strings_at(&v["idGroup"]["rxnormId"]).into_iter().next())
    }

    fn approximate_lookup(&self, name: &str, max: usize) -> Result<Vec<String>, RxNavError> {
        let max_s = max.to_string();
        let v = self.get("/approximateTerm.json", &[("term", name), ("maxEntries", &max_s)])?;
        let mut out: Vec<String> = Vec::new();
        for c in v["approximateGroup"]["candidate"].as_array().into_iter().flatten() {
            if let Some(rx) = c["rxcui"].as_str() {
                if !out.iter().any(|o| o == rx) {
                    out.push(rx.to_string());
                }
            }
        }
        out.truncate(max);
        Ok(out)
    }

    fn related_ingredients(&self, rxcui: &str) -> Result<Vec<Ingredient>, RxNavError> {
        let mut out = Vec::new();
        let props = self.get(&format!("/rxcui/{rxcui}/properties.json"), &[])?;
        if props["properties"]["tty"].as_str() == Some("IN") {
            out.push(Ingredient {
                rxcui: rxcui.to_string(),
                name: props["properties"]["name"].as_str().unwrap_or_default().to_string(),
            });
        }
        let v = self.get(&format!("/rxcui/{rxcui}/related.json"), &[("tty", "IN")])?;
        for group in v["relatedGroup"]["conceptGroup"].as_array().into_iter().flatten() {
            if group["tty"].as_str() != Some("IN") {
                continue;
            }
            for c in group["conceptProperties"].as_array().into_iter().flatten() {
                if let (Some(rx), Some(name)) = (c["rxcui"].as_str(), c["name"].as_str()) {
                    if !out.iter().any(|i: &Ingredient| i.rxcui == rx) {
                        out.push(Ingredient {
                            rxcui: rx.into(),
                            name: name.into(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Recorded RxNav answers, one map per endpoint. Name keys are lowercased.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RxNavFixture {
    #[serde(default)]
    pub exact: BTreeMap<String, Option<String>>,
    #[serde(default)]
    pub approximate: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub ingredients: BTreeMap<String, Vec<Ingredient>>,
}

impl RxNavFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RxNavError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| RxNavError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RxNavError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RxNavError> {
        let body = serde_json::to_string_pretty(self).expect("fixture serializes");
        std::fs::write(path, body + "\n").map_err(|e| RxNavError::Fixture(e.to_string()))
    }
}

fn name_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Answers from a fixture; lookups missing from it come back empty.
#[derive(Debug, Default)]
pub struct ReplayRxNav {
    fixture: RxNavFixture,
    exact_calls: AtomicUsize,
    approximate_calls: AtomicUsize,
    ingredient_calls: AtomicUsize,
}

impl ReplayRxNav {
    pub fn new(fixture: RxNavFixture) -> Self {
        ReplayRxNav {
            fixture,
            ..Default::default()
        }
    }

    pub fn exact_calls(&self) -> usize {
        self.exact_calls.load(Ordering::SeqCst)
    }

    pub fn approximate_calls(&self) -> usize {
        self.approximate_calls.load(Ordering::SeqCst)
    }

    pub fn ingredient_calls(&self) -> usize {
        self.ingredient_calls.load(Ordering::SeqCst)
    }
}

impl RxNavClient for ReplayRxNav {
    fn exact_lookup(&self, name: &str) -> Result<Option<String>, RxNavError> {
        self.exact_calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.fixture.exact.get(&name_key(name)).cloned().flatten())
    }

    fn approximate_lookup(&self, name: &str, max: usize) -> Result<Vec<String>, RxNavError> {
        self.approximate_calls.fetch_add(1, Ordering::SeqCst);
        let mut out = self
            .fixture
            .approximate
            .get(&name_key(name))
            .cloned()
            .unwrap_or_default();
        out.truncate(max);
        Ok(out)
    }

    fn related_ingredients(&self, rxcui: &str) -> Result<Vec<Ingredient>, RxNavError> {
        self.ingredient_calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.fixture.ingredients.get(rxcui).cloned().unwrap_or_default())
    }
}

/// Passes calls through to another client and keeps the answers as a
/// fixture.
pub struct RecordingRxNav<C> {
    inner: C,
    fixture: Mutex<RxNavFixture>,
}

impl<C: RxNavClient> RecordingRxNav<C> {
    pub fn new(inner: C, seed: RxNavFixture) -> Self {
        RecordingRxNav {
            inner,
            fixture: Mutex::new(seed),
        }
    }

    pub fn fixture(&self) -> RxNavFixture {
        self.fixture.lock().expect("fixture lock").clone()
    }
}

impl<C: RxNavClient> RxNavClient for RecordingRxNav<C> {
    fn exact_lookup(&self, name: &str) -> Result<Option<String>, RxNavError> {
        if let Some(hit) = self.fixture.lock().expect("fixture lock").exact.get(&name_key(name)) {
            return Ok(hit.clone());
        }
        let r = self.inner.exact_lookup(name)?;
        self.fixture
            .lock()
            .expect("fixture lock")
            .exact
            .insert(name_key(name), r.clone());
        Ok(r)
    }

    fn approximate_lookup(&self, name: &str, max: usize) -> Result<Vec<String>, RxNavError> {
        if let Some(hit) = self
            .fixture
            .lock()
            .expect("fixture lock")
            .approximate
            .get(&name_key(name))
        {
            return Ok(hit.iter().take(max).cloned().collect());
        }
        let r = self.inner.approximate_lookup(name, max)?;
        self.fixture
            .lock()
            .expect("fixture lock")
            .approximate
            .insert(name_key(name), r.clone());
        Ok(r)
    }

    fn related_ingredients(&self, rxcui: &str) -> Result<Vec<Ingredient>, RxNavError> {
        if let Some(hit) = self.fixture.lock().expect("fixture lock").ingredients.get(rxcui) {
            return Ok(hit.clone());
        }
        let r = self.inner.related_ingredients(rxcui)?;
        self.fixture
            .lock()
            .expect("fixture lock")
            .ingredients
            .insert(rxcui.to_string(), r.clone());
        Ok(r)
    }
}
