//! In-process generator/classifier backed by a [`SyntheticWorld`].
//!
//! "Images" are the latent vectors themselves, stored under opaque refs.
//! Successful responses are cached by request id, so a retried request is
//! answered from the cache and has no second effect.

use std::collections::{BTreeSet, HashMap};
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::scoring::{GroupedProbabilities, SyntheticWorld};

use super::{CHUNK_INDEX_HEADER, REQUEST_ID_HEADER};

#[derive(Debug, Clone, Default)]
pub struct MockOptions {
    /// Answer the first N requests with HTTP 500.
    pub fail_first: usize,
    /// Always answer requests for this chunk index with HTTP 500.
    pub fail_chunk: Option<usize>,
    /// Scale the gender group of this response row by 0.8.
    pub malformed_row: Option<usize>,
}

#[derive(Default)]
struct Ledger {
    hits: usize,
    effects: usize,
    images: HashMap<String, Vec<f64>>,
    cache: HashMap<String, Value>,
    request_ids: Vec<String>,
}

struct Shared {
    world: SyntheticWorld,
    options: MockOptions,
    ledger: Mutex<Ledger>,
}

#[derive(Deserialize)]
struct VectorsBody {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RefsBody {
    refs: Vec<String>,
}

type Reply = (StatusCode, Json<Value>);

fn error(status: StatusCode, msg: impl Into<String>) -> Reply {
    (status, Json(json!({ "error": msg.into() })))
}

impl Shared {
    /// Bookkeeping common to every route; returns early with a failure or cached reply.
    fn admit(&self, headers: &HeaderMap) -> std::result::Result<String, Reply> {
        let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
        let id = header(REQUEST_ID_HEADER).ok_or_else(|| error(StatusCode::BAD_REQUEST, "missing request id"))?;
        let chunk = header(CHUNK_INDEX_HEADER).and_then(|c| c.parse::<usize>().ok());
        let mut ledger = self.ledger.lock().expect("mock ledger poisoned");
        ledger.hits += 1;
        ledger.request_ids.push(id.clone());
        if ledger.hits <= self.options.fail_first || (chunk.is_some() && chunk == self.options.fail_chunk) {
            return Err(error(StatusCode::INTERNAL_SERVER_ERROR, "injected failure"));
        }
        if let Some(cached) = ledger.cache.get(&id) {
            return Err((StatusCode::OK, Json(cached.clone())));
        }
        Ok(id)
    }

    fn commit(&self, id: String, body: Value) -> Reply {
        let mut ledger = self.ledger.lock().expect("mock ledger poisoned");
        ledger.effects += 1;
        ledger.cache.insert(id, body.clone());
        (StatusCode::OK, Json(body))
    }

    fn probs(&self, vectors: &[Vec<f64>]) -> std::result::Result<Vec<Value>, Reply> {
        vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = self
                    .world
                    .score(v)
                    .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, format!("row {i}: {e}")))?;
                let mut g = GroupedProbabilities::from(&p);
                if self.options.malformed_row == Some(i) {
                    g.gender.iter_mut().for_each(|x| *x *= 0.8);
                }
                Ok(serde_json::to_value(g).expect("probabilities serialize"))
            })
            .collect()
    }
}

async fn generate(State(s): State<Arc<Shared>>, headers: HeaderMap, Json(body): Json<VectorsBody>) -> Reply {
    let id = match s.admit(&headers) {
        Ok(id) => id,
        Err(reply) => return reply,
    };
    let refs: Vec<String> = {
        let mut ledger = s.ledger.lock().expect("mock ledger poisoned");
        body.vectors
            .into_iter()
            .map(|v| {
                let r = format!("img-{}", ledger.images.len());
                ledger.images.insert(r.clone(), v);
                r
            })
            .collect()
    };
    s.commit(id, json!({ "refs": refs }))
}

async fn classify(State(s): State<Arc<Shared>>, headers: HeaderMap, Json(body): Json<RefsBody>) -> Reply {
    let id = match s.admit(&headers) {
        Ok(id) => id,
        Err(reply) => return reply,
    };
    let vectors = {
        let ledger = s.ledger.lock().expect("mock ledger poisoned");
        let found: Option<Vec<Vec<f64>>> = body.refs.iter().map(|r| ledger.images.get(r).cloned()).collect();
        match found {
            Some(v) => v,
            None => return error(StatusCode::NOT_FOUND, "unknown image ref"),
        }
    };
    match s.probs(&vectors) {
        Ok(p) => s.commit(id, json!({ "probs": p })),
        Err(reply) => reply,
    }
}

async fn score(State(s): State<Arc<Shared>>, headers: HeaderMap, Json(body): Json<VectorsBody>) -> Reply {
    let id = match s.admit(&headers) {
        Ok(id) => id,
        Err(reply) => return reply,
    };
    match s.probs(&body.vectors) {
        Ok(p) => s.commit(id, json!({ "probs": p })),
        Err(reply) => reply,
    }
}

/// A running mock; shut down on drop.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves on a background thread.
    pub fn start(world: SyntheticWorld, options: MockOptions, addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
        listener.set_nonblocking(true).map_err(|e| Error::io(addr, e))?;
        let addr = listener.local_addr().map_err(|e| Error::io("mock listener", e))?;
        let shared = Arc::new(Shared {
            world,
            options,
            ledger: Mutex::new(Ledger::default()),
        });
        let app = Router::new()
            .route("/generate", post(generate))
            .route("/classify", post(classify))
            .route("/score", post(score))
            .layer(DefaultBodyLimit::max(256 << 20))
            .with_state(shared.clone());
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| Error::io("tokio runtime", e))?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener registers with tokio");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("mock server runs");
            });
        });
        Ok(MockServer {
            addr,
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// HTTP requests received, including failed and repeated ones.
    pub fn hits(&self) -> usize {
        self.shared.ledger.lock().expect("mock ledger poisoned").hits
    }

    /// Requests that were executed rather than failed or answered from cache.
    pub fn effects(&self) -> usize {
        self.shared.ledger.lock().expect("mock ledger poisoned").effects
    }

    /// Request ids in arrival order, repeats included.
    pub fn request_ids(&self) -> Vec<String> {
        self.shared.ledger.lock().expect("mock ledger poisoned").request_ids.clone()
    }

    pub fn distinct_request_ids(&self) -> BTreeSet<String> {
        self.request_ids().into_iter().collect()
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
