//! Blocking JSON-over-HTTP clients for remote retrievers, query policies and
//! answer generators.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use hopforge_core::corpus::{Corpus, Question};
use hopforge_core::policy::{extract_query, PromptSpec, QueryPolicy, QuerySample};
use hopforge_core::prompt::{context_documents, query_prompt};
use hopforge_core::retrieval::{check_query, Context, RankedDocuments, RankedEntry, Retriever};
use hopforge_core::reward::Generator;
use hopforge_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub timeout_ms: u64,
    /// Extra attempts after the first one fails with a retryable error.
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Delay before retry `n` is `retry_backoff_ms * 2^(n-1)`.
    pub retry_backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self { timeout_ms: 10_000, max_retries: 2, max_in_flight: 8, retry_backoff_ms: 100 }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self { available: Mutex::new(limit.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|p| p.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// POSTs JSON bodies to `{endpoint}{path}` with timeouts, bounded retries
/// and an in-flight limit.
pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    settings: HttpSettings,
    in_flight: InFlight,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient").field("endpoint", &self.endpoint).field("settings", &self.settings).finish()
    }
}

enum Attempt<R> {
    Done(R),
    Retry(Error),
    Fail(Error),
}

impl JsonClient {
    pub fn new(endpoint: &str, settings: HttpSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.trim_end_matches('/').to_string(),
            in_flight: InFlight::new(settings.max_in_flight),
            settings,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.endpoint, path);
        let attempts = self.settings.max_retries + 1;
        let mut last = Error::transport(None, format!("no attempt made for {url}"));
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.settings.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.attempt(&url, body)
            };
            match outcome {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("{url}: attempt {} of {attempts} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Attempt<R> {
        let mut response = match self.agent.post(url).send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(Error::transport(None, format!("{url}: {e}"))),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string();
        if !(200..300).contains(&status) {
            let err = Error::transport(Some(status), format!("{url} returned HTTP {status}"));
            return if status >= 500 || status == 429 { Attempt::Retry(err) } else { Attempt::Fail(err) };
        }
        let text = match text {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(Error::transport(Some(status), format!("{url}: {e}"))),
        };
        match serde_json::from_str(&text) {
            Ok(r) => Attempt::Done(r),
            Err(e) => Attempt::Fail(Error::Protocol(format!("{url}: unexpected response body: {e}"))),
        }
    }
}

#[derive(Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

#[derive(Deserialize)]
struct SearchResponse {
    documents: Vec<SearchHit>,
}

/// Retriever backed by a `POST {endpoint}/search` service.
#[derive(Debug)]
pub struct RemoteRetriever {
    client: JsonClient,
}

impl RemoteRetriever {
    pub fn new(client: JsonClient) -> Self {
        Self { client }
    }
}

impl Retriever for RemoteRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<RankedDocuments> {
        check_query(query, k)?;
        let response: SearchResponse = self.client.post("/search", &SearchRequest { query, k })?;
        let hits = response
            .documents
            .into_iter()
            .map(|h| RankedEntry { doc_id: h.id, score: h.score })
            .collect();
        RankedDocuments::from_server_order(hits, k)
    }
}

#[derive(Debug, Serialize)]
pub struct GenerateRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Query policy that asks a `POST {endpoint}/generate` service for a query.
///
/// Context documents are rendered from `corpus`; ids it does not contain are
/// left out of the prompt.
#[derive(Debug)]
pub struct RemotePolicy<'c> {
    client: JsonClient,
    corpus: &'c Corpus,
    max_tokens: u32,
}

impl<'c> RemotePolicy<'c> {
    pub fn new(client: JsonClient, corpus: &'c Corpus, max_tokens: u32) -> Self {
        Self { client, corpus, max_tokens }
    }
}

impl QueryPolicy for RemotePolicy<'_> {
    fn sample_query(
        &self,
        question: &Question,
        context: &Context,
        prompt: &PromptSpec,
        temperature: f64,
        seed: u64,
    ) -> Result<QuerySample> {
        let docs = context_documents(self.corpus, context);
        let text = query_prompt(&prompt.payload, &question.text, &docs);
        let request = GenerateRequest { prompt: &text, temperature, max_tokens: self.max_tokens, seed: Some(seed) };
        let response: GenerateResponse = self.client.post("/generate", &request)?;
        let query = extract_query(&response.text)
            .ok_or_else(|| Error::Protocol("generation service returned an empty completion".into()))?;
        Ok(QuerySample { query, logprob: None, prompt_id: prompt.id.clone(), temperature })
    }
}

/// Answer generator backed by the same `/generate` protocol, decoding
/// greedily and keeping the first non-empty line.
#[derive(Debug)]
pub struct RemoteGenerator {
    client: JsonClient,
    max_tokens: u32,
}

impl RemoteGenerator {
    pub fn new(client: JsonClient, max_tokens: u32) -> Self {
        Self { client, max_tokens }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        let request = GenerateRequest { prompt, temperature: 0.0, max_tokens: self.max_tokens, seed: None };
        let response: GenerateResponse = self.client.post("/generate", &request)?;
        Ok(extract_query(&response.text).unwrap_or_default())
    }
}
