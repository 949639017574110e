//! Blocking HTTP clients for an external generator and classifier, plus an
//! in-process mock of both services.
//!
//! Requests are split into chunks of at most `max_batch` items and sent by up
//! to `max_in_flight` workers. Each chunk carries its own `x-request-id`; the
//! id is reused on retries so a server can deduplicate them.

pub mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::latent_io::LatentVector;
use crate::scoring::{AttributeProbabilities, GroupedProbabilities, Scorer};

pub use mock::{MockOptions, MockServer};

pub const REQUEST_ID_HEADER: &str = "x-request-id";
pub const CHUNK_INDEX_HEADER: &str = "x-chunk-index";

/// Server-assigned reference to a rendered image.
pub type ImageRef = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceEndpoint {
    pub base_url: String,
    pub timeout_secs: f64,
    pub max_batch: usize,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub max_in_flight: usize,
}

impl ServiceEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        ServiceEndpoint {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout_secs: 30.0,
            max_batch: 64,
            retries: 2,
            max_in_flight: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() {
            return Err(Error::invalid("endpoint URL is empty"));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::invalid(format!("timeout must be > 0, got {}", self.timeout_secs)));
        }
        if self.max_batch == 0 {
            return Err(Error::invalid("max batch size must be ≥ 1"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::invalid("max in-flight requests must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    endpoint: ServiceEndpoint,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(endpoint: ServiceEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Remote(format!("building HTTP client: {e}")))?;
        Ok(RemoteClient { endpoint, http })
    }

    pub fn endpoint(&self) -> &ServiceEndpoint {
        &self.endpoint
    }

    /// One POST with retries; every attempt carries the same request id.
    fn post(&self, path: &str, body: &Value, chunk: usize, request_id: &str) -> Result<Value> {
        let url = format!("{}{path}", self.endpoint.base_url);
        let mut last = String::new();
        for attempt in 0..=self.endpoint.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(20 * u64::from(attempt)));
                log::debug!("retrying {path} chunk {chunk}, attempt {}", attempt + 1);
            }
            let sent = self
                .http
                .post(&url)
                .header(REQUEST_ID_HEADER, request_id)
                .header(CHUNK_INDEX_HEADER, chunk.to_string())
                .json(body)
                .send();
            match sent {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<Value>()
                        .map_err(|e| Error::Remote(format!("{path} chunk {chunk}: invalid JSON body: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    last = format!("HTTP {status}");
                    if status.is_client_error() {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Remote(format!("{path} chunk {chunk} failed: {last}")))
    }

    /// Runs `send` over every chunk with bounded concurrency; results come back in chunk order.
    fn chunked<T: Sync, R: Send>(
        &self,
        items: &[T],
        send: impl Fn(usize, &[T]) -> R + Sync,
    ) -> Vec<R> {
        let chunks: Vec<&[T]> = items.chunks(self.endpoint.max_batch).collect();
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let workers = self.endpoint.max_in_flight.min(chunks.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let out = send(i, chunks[i]);
                    slots.lock().expect("result slots poisoned")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("result slots poisoned")
            .into_iter()
            .map(|r| r.expect("every chunk produces a result"))
            .collect()
    }

    fn array_field<'a>(body: &'a Value, field: &str, expected: usize, path: &str, chunk: usize) -> Result<&'a Vec<Value>> {
        let arr = body
            .get(field)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Remote(format!("{path} chunk {chunk}: response lacks a {field:?} array")))?;
        if arr.len() != expected {
            return Err(Error::Remote(format!(
                "{path} chunk {chunk}: expected {expected} {field}, got {}",
                arr.len()
            )));
        }
        Ok(arr)
    }

    fn parse_probs(value: &Value, index: usize) -> Result<AttributeProbabilities> {
        GroupedProbabilities::deserialize(value)
            .map_err(Error::from)
            .and_then(AttributeProbabilities::try_from)
            .map_err(|e| Error::Remote(format!("schema error at index {index}: {e}")))
    }

    /// Renders vectors remotely; order-preserving, all-or-nothing.
    pub fn generate_images(&self, vectors: &[LatentVector]) -> Result<Vec<ImageRef>> {
        let per_chunk = self.chunked(vectors, |i, chunk| {
            let body = json!({ "vectors": chunk.iter().map(LatentVector::as_slice).collect::<Vec<_>>() });
            let resp = self.post("/generate", &body, i, &new_request_id())?;
            Self::array_field(&resp, "refs", chunk.len(), "/generate", i)?
                .iter()
                .map(|r| {
                    r.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::Remote(format!("/generate chunk {i}: non-string ref")))
                })
                .collect::<Result<Vec<_>>>()
        });
        Ok(per_chunk.into_iter().collect::<Result<Vec<_>>>()?.concat())
    }

    /// Classifies rendered images; order-preserving, all-or-nothing.
    pub fn classify_images(&self, refs: &[ImageRef]) -> Result<Vec<AttributeProbabilities>> {
        let batch = self.endpoint.max_batch;
        let per_chunk = self.chunked(refs, |i, chunk| {
            let resp = self.post("/classify", &json!({ "refs": chunk }), i, &new_request_id())?;
            Self::array_field(&resp, "probs", chunk.len(), "/classify", i)?
                .iter()
                .enumerate()
                .map(|(j, v)| Self::parse_probs(v, i * batch + j))
                .collect::<Result<Vec<_>>>()
        });
        Ok(per_chunk.into_iter().collect::<Result<Vec<_>>>()?.concat())
    }

    /// Scores latent vectors directly. A malformed row fails only that row;
    /// a failed request fails every row of its chunk.
    pub fn score_vectors(&self, vectors: &[&LatentVector]) -> Vec<Result<AttributeProbabilities>> {
        let batch = self.endpoint.max_batch;
        let per_chunk = self.chunked(vectors, |i, chunk| -> Vec<Result<AttributeProbabilities>> {
            let body = json!({ "vectors": chunk.iter().map(|v| v.as_slice()).collect::<Vec<_>>() });
            let parsed = self
                .post("/score", &body, i, &new_request_id())
                .and_then(|resp| Ok(Self::array_field(&resp, "probs", chunk.len(), "/score", i)?.clone()));
            match parsed {
                Ok(rows) => rows
                    .iter()
                    .enumerate()
                    .map(|(j, v)| Self::parse_probs(v, i * batch + j))
                    .collect(),
                Err(e) => chunk.iter().map(|_| Err(Error::Remote(e.to_string()))).collect(),
            }
        });
        per_chunk.into_iter().flatten().collect()
    }
}

fn new_request_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

pub fn generate_images(endpoint: &ServiceEndpoint, vectors: &[LatentVector]) -> Result<Vec<ImageRef>> {
    if vectors.is_empty() {
        return Ok(Vec::new());
    }
    RemoteClient::new(endpoint.clone())?.generate_images(vectors)
}

pub fn classify_images(endpoint: &ServiceEndpoint, refs: &[ImageRef]) -> Result<Vec<AttributeProbabilities>> {
    if refs.is_empty() {
        return Ok(Vec::new());
    }
    RemoteClient::new(endpoint.clone())?.classify_images(refs)
}

/// [`Scorer`] backed by a remote `/score` service.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: RemoteClient,
    dimension: usize,
}

impl RemoteScorer {
    pub fn new(endpoint: ServiceEndpoint, dimension: usize) -> Result<Self> {
        Ok(RemoteScorer {
            client: RemoteClient::new(endpoint)?,
            dimension,
        })
    }
}

impl Scorer for RemoteScorer {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn score_many(&self, vectors: &[&LatentVector]) -> Vec<Result<AttributeProbabilities>> {
        self.client.score_vectors(vectors)
    }
}
