//! Minimal JSON-over-HTTP plumbing shared by the external NER and embedding
//! clients: POST with a global timeout, retry on transport or status
//! failures, protocol error on unparsable 200 bodies.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub(crate) struct HttpJsonClient {
    agent: ureq::Agent,
    backend: String,
    retries: u32,
}

impl HttpJsonClient {
    pub fn new(backend: &str, timeout_secs: f64, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout_secs.max(0.001))))
            .build()
            .into();
        HttpJsonClient {
            agent,
            backend: backend.to_string(),
            retries,
        }
    }

    pub fn post_json<Req, Resp>(&self, url: &str, request: &Req) -> Result<Resp>
    where
        Req: Serialize,
        Resp: DeserializeOwned,
    {
        let attempts = self.retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(25 * u64::from(attempt)));
            }
            match self.agent.post(url).send_json(request) {
                Ok(mut response) => {
                    // Connected and got a 2xx; a malformed body is a protocol
                    // fault, not something a retry can fix.
                    return response.body_mut().read_json::<Resp>().map_err(|e| {
                        Error::Protocol {
                            backend: self.backend.clone(),
                            msg: format!("invalid JSON response: {e}"),
                        }
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::BackendUnavailable {
            backend: self.backend.clone(),
            attempts,
            msg: last_error,
        })
    }
}
