//! Client for an external NER service.
//!
//! Wire protocol: `POST {endpoint}/tag` with body `{"text": "..."}`,
//! response `{"entities": [{"start": int, "end": int, "label": "PER"|...}]}`
//! with offsets in code points. Non-200 responses are retried and then
//! reported as backend-unavailable; out-of-range offsets and unparsable
//! bodies are protocol errors. Labels outside the closed PER/LOC set are
//! dropped and counted.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::anonymizer::{merge_spans, EntityLabel, EntitySpan, Tagger};
use crate::net::HttpJsonClient;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NerBackendConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub backend_name: String,
    /// Cap on concurrent in-flight requests during corpus anonymization.
    pub max_concurrent: usize,
}

impl Default for NerBackendConfig {
    fn default() -> Self {
        NerBackendConfig {
            endpoint: String::new(),
            timeout_secs: 30.0,
            retries: 2,
            backend_name: "external".to_string(),
            max_concurrent: 8,
        }
    }
}

#[derive(Serialize)]
struct TagRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct TagResponse {
    entities: Vec<RawEntity>,
}

#[derive(Deserialize)]
struct RawEntity {
    start: i64,
    end: i64,
    label: String,
}

pub struct NerClient {
    http: HttpJsonClient,
    url: String,
    name: String,
    max_concurrent: usize,
    dropped_unknown: AtomicU64,
}

impl NerClient {
    pub fn new(config: &NerBackendConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Config("external NER endpoint is empty".into()));
        }
        let url = format!("{}/tag", config.endpoint.trim_end_matches('/'));
        Ok(NerClient {
            http: HttpJsonClient::new(&config.backend_name, config.timeout_secs, config.retries),
            url,
            name: config.backend_name.clone(),
            max_concurrent: config.max_concurrent.max(1),
            dropped_unknown: AtomicU64::new(0),
        })
    }

    /// Number of entities dropped so far because their label was outside the
    /// closed PER/LOC set.
    pub fn dropped_unknown(&self) -> u64 {
        self.dropped_unknown.load(Ordering::Relaxed)
    }

    pub fn tag_text(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let response: TagResponse = self.http.post_json(&self.url, &TagRequest { text })?;
        let cp_len = text.chars().count();
        let mut spans = Vec::with_capacity(response.entities.len());
        for entity in response.entities {
            let label = match entity.label.as_str() {
                "PER" => EntityLabel::Per,
                "LOC" => EntityLabel::Loc,
                _ => {
                    self.dropped_unknown.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
            };
            if entity.start < 0 || entity.end <= entity.start || entity.end as usize > cp_len {
                return Err(Error::Protocol {
                    backend: self.name.clone(),
                    msg: format!(
                        "span {}..{} out of range for text of {cp_len} code points",
                        entity.start, entity.end
                    ),
                });
            }
            spans.push(EntitySpan::new(
                entity.start as usize,
                entity.end as usize,
                label,
            ));
        }
        Ok(merge_spans(text, spans))
    }
}

impl Tagger for NerClient {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        self.tag_text(text)
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn max_concurrent(&self) -> Option<usize> {
        Some(self.max_concurrent)
    }
}
