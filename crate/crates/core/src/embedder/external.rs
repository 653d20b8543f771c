//! Optional client for an external embedding service, sharing the wire
//! shape of the NER client: `POST {endpoint}/embed` with `{"text": "..."}`,
//! response `{"vector": [float; L]}`. A dimension mismatch is a protocol
//! error.

use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingVector;
use crate::net::HttpJsonClient;
use crate::{Error, Result};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

pub struct EmbedClient {
    http: HttpJsonClient,
    url: String,
    name: String,
    expected_dim: usize,
}

impl EmbedClient {
    pub fn new(endpoint: &str, expected_dim: usize, timeout_secs: f64, retries: u32) -> Result<Self> {
        if endpoint.is_empty() {
            return Err(Error::Config("external embedder endpoint is empty".into()));
        }
        Ok(EmbedClient {
            http: HttpJsonClient::new("embedder", timeout_secs, retries),
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            name: "embedder".to_string(),
            expected_dim,
        })
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let response: EmbedResponse = self.http.post_json(&self.url, &EmbedRequest { text })?;
        if response.vector.len() != self.expected_dim {
            return Err(Error::Protocol {
                backend: self.name.clone(),
                msg: format!(
                    "expected dimension {}, got {}",
                    self.expected_dim,
                    response.vector.len()
                ),
            });
        }
        EmbeddingVector::new(response.vector)
    }
}
