//! Plugin registry and HTTP adapters for externally hosted encoders,
//! rerankers and readers.
//!
//! Wire format (JSON over `POST`):
//!
//! | plugin   | request                                         | response                                   |
//! |----------|-------------------------------------------------|--------------------------------------------|
//! | encoder  | `{"kind":"passage","texts":[..]}`               | `{"embeddings":[[..],..]}`                 |
//! | encoder  | `{"kind":"query","question":..,"prior":[..]}`   | `{"embeddings":[[..]]}`                    |
//! | reranker | `{"query":..,"passages":[..]}`                  | `{"scores":[..]}`                          |
//! | reader   | `{"question":..,"contexts":[..]}`               | `{"answer":..,"span":..,"confidence":..}`  |

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalyzerConfig;
use crate::config::{HttpPluginConfig, PluginConfig};
use crate::dense::{Embedding, Encoder, ReferenceEncoder};
use crate::error::{Error, Result};
use crate::orchestrator::{BaselineReader, BaselineReranker, Reader, ReaderOutput, Reranker};

pub const ENCODERS: &[&str] = &["reference", "http"];
pub const RERANKERS: &[&str] = &["baseline", "http"];
pub const READERS: &[&str] = &["baseline", "http"];

pub fn build_encoder(cfg: &PluginConfig) -> Result<Arc<dyn Encoder>> {
    cfg.validate()?;
    match cfg.encoder.as_str() {
        "reference" => Ok(Arc::new(ReferenceEncoder::new(cfg.encoder_dimension, cfg.encoder_seed)?)),
        "http" => Ok(Arc::new(HttpEncoder::new(
            cfg.encoder_http()?.expect("validated").clone(),
            cfg.encoder_dimension,
        )?)),
        other => Err(Error::UnknownPlugin(other.into())),
    }
}

pub fn build_reranker(cfg: &PluginConfig, analyzer: &AnalyzerConfig) -> Result<Arc<dyn Reranker>> {
    cfg.validate()?;
    match cfg.reranker.as_str() {
        "baseline" => Ok(Arc::new(BaselineReranker::new(*analyzer))),
        "http" => Ok(Arc::new(HttpReranker::new(cfg.reranker_http()?.expect("validated").clone())?)),
        other => Err(Error::UnknownPlugin(other.into())),
    }
}

pub fn build_reader(cfg: &PluginConfig) -> Result<Arc<dyn Reader>> {
    cfg.validate()?;
    match cfg.reader.as_str() {
        "baseline" => Ok(Arc::new(BaselineReader::default())),
        "http" => Ok(Arc::new(HttpReader::new(cfg.reader_http()?.expect("validated").clone())?)),
        other => Err(Error::UnknownPlugin(other.into())),
    }
}

/// Blocking JSON client with a per-request timeout and retry on transport
/// errors and 5xx responses.
#[derive(Debug, Clone)]
struct JsonClient {
    cfg: HttpPluginConfig,
    http: reqwest::blocking::Client,
}

impl JsonClient {
    fn new(cfg: HttpPluginConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::Remote(e.to_string()))?;
        Ok(Self { cfg, http })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, body: &B) -> Result<T> {
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            match self.http.post(&self.cfg.url).json(body).send() {
                Ok(resp) if resp.status().is_server_error() => {
                    last = format!("{} returned {}", self.cfg.url, resp.status());
                }
                Ok(resp) if !resp.status().is_success() => {
                    return Err(Error::Remote(format!("{} returned {}", self.cfg.url, resp.status())));
                }
                Ok(resp) => {
                    return resp
                        .json()
                        .map_err(|e| Error::Remote(format!("{}: bad response body: {e}", self.cfg.url)));
                }
                Err(e) => last = format!("{}: {e}", self.cfg.url),
            }
            log::warn!("plugin request failed (attempt {}): {last}", attempt + 1);
        }
        Err(Error::Remote(last))
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EncodeRequest<'a> {
    Passage { texts: &'a [&'a str] },
    Query { question: &'a str, prior: &'a [&'a str] },
}

#[derive(Deserialize)]
struct EncodeResponse {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct HttpEncoder {
    client: JsonClient,
    dimension: usize,
}

impl HttpEncoder {
    pub fn new(cfg: HttpPluginConfig, dimension: usize) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(cfg)?,
            dimension,
        })
    }

    fn request(&self, req: &EncodeRequest<'_>, expected: usize) -> Result<Vec<Embedding>> {
        let resp: EncodeResponse = self.client.post(req)?;
        if resp.embeddings.len() != expected {
            return Err(Error::Remote(format!(
                "encoder returned {} embeddings for {expected} inputs",
                resp.embeddings.len()
            )));
        }
        resp.embeddings
            .into_iter()
            .map(|v| {
                let e = Embedding(v);
                if e.dimension() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        actual: e.dimension(),
                    });
                }
                if !e.is_finite() {
                    return Err(Error::Remote("encoder returned a non-finite value".into()));
                }
                Ok(e)
            })
            .collect()
    }
}

impl Encoder for HttpEncoder {
    fn identifier(&self) -> String {
        format!("http:{}:d{}", self.client.cfg.url, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode_passage(&self, text: &str) -> Result<Embedding> {
        Ok(self.encode_passages(&[text])?.remove(0))
    }

    fn encode_query(&self, question: &str, prior_passages: &[&str]) -> Result<Embedding> {
        let req = EncodeRequest::Query {
            question,
            prior: prior_passages,
        };
        Ok(self.request(&req, 1)?.remove(0))
    }

    fn encode_passages(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.client.cfg.batch_size) {
            out.extend(self.request(&EncodeRequest::Passage { texts: batch }, batch.len())?);
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    passages: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HttpReranker {
    client: JsonClient,
}

impl HttpReranker {
    pub fn new(cfg: HttpPluginConfig) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(cfg)?,
        })
    }
}

impl Reranker for HttpReranker {
    fn identifier(&self) -> String {
        format!("http:{}", self.client.cfg.url)
    }

    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        Ok(self.score_batch(query, &[passage])?[0])
    }

    fn score_batch(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(passages.len());
        for batch in passages.chunks(self.client.cfg.batch_size) {
            let resp: RerankResponse = self.client.post(&RerankRequest { query, passages: batch })?;
            if resp.scores.len() != batch.len() {
                return Err(Error::Remote(format!(
                    "reranker returned {} scores for {} passages",
                    resp.scores.len(),
                    batch.len()
                )));
            }
            if let Some(bad) = resp.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::Remote(format!("reranker score {bad} outside [0, 1]")));
            }
            out.extend(resp.scores);
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct ReadRequest<'a> {
    question: &'a str,
    contexts: &'a [&'a str],
}

#[derive(Debug, Clone)]
pub struct HttpReader {
    client: JsonClient,
}

impl HttpReader {
    pub fn new(cfg: HttpPluginConfig) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(cfg)?,
        })
    }
}

impl Reader for HttpReader {
    fn identifier(&self) -> String {
        format!("http:{}", self.client.cfg.url)
    }

    fn read(&self, question: &str, contexts: &[&str]) -> Result<ReaderOutput> {
        if contexts.is_empty() {
            return Ok(ReaderOutput::empty());
        }
        let out: ReaderOutput = self.client.post(&ReadRequest { question, contexts })?;
        if !(0.0..=1.0).contains(&out.confidence) {
            return Err(Error::Remote(format!("reader confidence {} outside [0, 1]", out.confidence)));
        }
        if let Some(span) = out.span {
            if span.text(contexts) != Some(out.answer.as_str()) {
                return Err(Error::Remote("reader span does not match its answer".into()));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Serves canned responses; the n-th request gets `replies[n]`.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for (stream, (status, body)) in listener.incoming().zip(replies) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body_in = vec![0; len];
                reader.read_exact(&mut body_in).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, hits)
    }

    fn http(url: String, batch_size: usize) -> HttpPluginConfig {
        HttpPluginConfig {
            url,
            timeout_ms: 2_000,
            retries: 2,
            batch_size,
        }
    }

    #[test]
    fn registry_rejects_unknown_ids() {
        let cfg = PluginConfig {
            reranker: "colbert".into(),
            ..Default::default()
        };
        assert!(matches!(build_reranker(&cfg, &AnalyzerConfig::default()), Err(Error::UnknownPlugin(_))));
        let enc = build_encoder(&PluginConfig::default()).unwrap();
        assert_eq!(enc.identifier(), "reference-v1:d256:s42");
        assert_eq!(build_reader(&PluginConfig::default()).unwrap().identifier(), "baseline");
    }

    #[test]
    fn reranker_retries_server_errors_and_batches() {
        let (url, hits) = serve(vec![
            (503, "{}"),
            (200, r#"{"scores":[0.5,1.0]}"#),
            (200, r#"{"scores":[0.0]}"#),
        ]);
        let rr = HttpReranker::new(http(url, 2)).unwrap();
        assert_eq!(rr.score_batch("q", &["a", "b", "c"]).unwrap(), vec![0.5, 1.0, 0.0]);
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn out_of_range_scores_are_rejected() {
        let (url, _) = serve(vec![(200, r#"{"scores":[1.5]}"#)]);
        assert!(HttpReranker::new(http(url, 8)).unwrap().score("q", "p").is_err());
    }

    #[test]
    fn encoder_checks_dimension() {
        let (url, _) = serve(vec![(200, r#"{"embeddings":[[1.0,0.0]]}"#), (200, r#"{"embeddings":[[1.0]]}"#)]);
        let enc = HttpEncoder::new(http(url, 8), 2).unwrap();
        assert_eq!(enc.encode_query("q", &["p"]).unwrap(), Embedding(vec![1.0, 0.0]));
        assert!(matches!(enc.encode_passage("x"), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reader_span_is_verified() {
        let (url, _) = serve(vec![
            (200, r#"{"answer":"1200","span":{"context":0,"start":10,"end":14},"confidence":0.8}"#),
            (200, r#"{"answer":"bats","span":{"context":0,"start":0,"end":4},"confidence":0.8}"#),
        ]);
        let reader = HttpReader::new(http(url, 8)).unwrap();
        let ctx = ["There are 1200 species"];
        assert_eq!(reader.read("how many?", &ctx).unwrap().answer, "1200");
        assert!(reader.read("how many?", &ctx).is_err());
    }
}
