//! Client for external scoring services speaking the `/v1/score` protocol,
//! subword-to-word surprisal alignment, and a small in-process mock server.
//!
//! Wire format: `POST /v1/score` with `{"sentences": [...], "per_token": true}`
//! and header `X-GapLab-Proto: 1`. The reply is
//! `{"model": str, "results": [{"tokens": [...], "logprobs": [...]}]}` with
//! natural-log probabilities. The first logprob of a sentence may be `null`.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::scoring::{score_items, RegionScore, ScoringError};
use crate::stimgen::ParadigmItem;

pub const PROTO_HEADER: &str = "X-GapLab-Proto";
pub const PROTO_VERSION: &str = "1";
pub const SCORE_PATH: &str = "/v1/score";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("empty request: at least one sentence is required")]
    EmptyRequest,
    #[error("cannot reach {endpoint} after {attempts} attempts: {message}")]
    Connection {
        endpoint: String,
        attempts: usize,
        message: String,
    },
    #[error("{endpoint} answered HTTP {status} after {attempts} attempts")]
    Status {
        endpoint: String,
        status: u16,
        attempts: usize,
    },
    #[error("protocol mismatch: expected {PROTO_HEADER} {PROTO_VERSION}, got {}", got.as_deref().unwrap_or("no header"))]
    ProtocolMismatch { got: Option<String> },
    #[error("malformed response: {message}; payload starts with `{excerpt}`")]
    Malformed { message: String, excerpt: String },
    #[error("alignment failure at character {offset}: {message}")]
    Alignment { offset: usize, message: String },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub sentences: Vec<String>,
    pub per_token: bool,
}

impl ScoreRequest {
    pub fn new(sentences: Vec<String>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(ClientError::EmptyRequest);
        }
        Ok(ScoreRequest {
            sentences,
            per_token: true,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireResult {
    pub tokens: Vec<String>,
    pub logprobs: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub model: String,
    pub results: Vec<WireResult>,
}

/// Scores for one sentence. `logprobs[k]` is the natural-log probability
/// of `tokens[k]`; only `logprobs[0]` may be undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreResponse {
    pub model: String,
    pub tokens: Vec<String>,
    pub logprobs: Vec<Option<f64>>,
}

#[derive(Clone, Debug)]
pub struct ClientOptions {
    /// Sentences per HTTP request.
    pub batch_size: usize,
    /// Requests allowed in flight at once.
    pub max_in_flight: usize,
    pub attempts: usize,
    /// Delay before the second attempt; doubled for each later one.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            batch_size: 32,
            max_in_flight: 4,
            attempts: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(120),
        }
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(120).collect()
}

fn malformed(message: impl Into<String>, body: &str) -> ClientError {
    ClientError::Malformed {
        message: message.into(),
        excerpt: excerpt(body),
    }
}

/// Checks a decoded reply against the request and splits it per sentence.
pub fn parse_response(body: &str, expected: usize) -> Result<Vec<ScoreResponse>> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| malformed(e.to_string(), body))?;
    if wire.results.len() != expected {
        return Err(malformed(
            format!("{} results for {expected} sentences", wire.results.len()),
            body,
        ));
    }
    let mut out = Vec::with_capacity(expected);
    for (k, r) in wire.results.into_iter().enumerate() {
        if r.tokens.len() != r.logprobs.len() {
            return Err(malformed(
                format!("result {k}: {} tokens but {} logprobs", r.tokens.len(), r.logprobs.len()),
                body,
            ));
        }
        for (j, lp) in r.logprobs.iter().enumerate() {
            match lp {
                None if j > 0 => return Err(malformed(format!("result {k}: null logprob at token {j}"), body)),
                Some(v) if !v.is_finite() || *v > 0.0 => {
                    return Err(malformed(format!("result {k}: logprob {v} at token {j}"), body))
                }
                _ => {}
            }
        }
        out.push(ScoreResponse {
            model: wire.model.clone(),
            tokens: r.tokens,
            logprobs: r.logprobs,
        });
    }
    Ok(out)
}

enum Attempt {
    Retry(ClientError),
    Fatal(ClientError),
}

fn post_once(agent: &ureq::Agent, url: &str, payload: &str, expected: usize, attempts: usize) -> std::result::Result<Vec<ScoreResponse>, Attempt> {
    let resp = agent
        .post(url)
        .header(PROTO_HEADER, PROTO_VERSION)
        .header("Content-Type", "application/json")
        .send(payload);
    let mut resp = match resp {
        Ok(r) => r,
        Err(e) => {
            return Err(Attempt::Retry(ClientError::Connection {
                endpoint: url.to_string(),
                attempts,
                message: e.to_string(),
            }))
        }
    };
    let status = resp.status().as_u16();
    if status != 200 {
        let err = ClientError::Status {
            endpoint: url.to_string(),
            status,
            attempts,
        };
        return Err(if status >= 500 || status == 429 {
            Attempt::Retry(err)
        } else {
            Attempt::Fatal(err)
        });
    }
    let proto = resp
        .headers()
        .get(PROTO_HEADER)
        .map(|v| String::from_utf8_lossy(v.as_bytes()).into_owned());
    if proto.as_deref() != Some(PROTO_VERSION) {
        return Err(Attempt::Fatal(ClientError::ProtocolMismatch { got: proto }));
    }
    let body = resp.body_mut().read_to_string().map_err(|e| {
        Attempt::Retry(ClientError::Connection {
            endpoint: url.to_string(),
            attempts,
            message: e.to_string(),
        })
    })?;
    parse_response(&body, expected).map_err(Attempt::Fatal)
}

fn post_with_retry(agent: &ureq::Agent, url: &str, sentences: &[String], opts: &ClientOptions) -> Result<Vec<ScoreResponse>> {
    let payload = serde_json::to_string(&ScoreRequest::new(sentences.to_vec())?).expect("request serializes");
    let attempts = opts.attempts.max(1);
    let mut delay = opts.backoff;
    for k in 1..=attempts {
        match post_once(agent, url, &payload, sentences.len(), k) {
            Ok(r) => return Ok(r),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Retry(e)) if k == attempts => return Err(e),
            Err(Attempt::Retry(e)) => {
                log::warn!("attempt {k}/{attempts} to {url} failed: {e}");
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
    }
    unreachable!("loop returns on the last attempt")
}

fn score_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with(SCORE_PATH) {
        base.to_string()
    } else {
        format!("{base}{SCORE_PATH}")
    }
}

/// Scores `sentences` in batches, up to `max_in_flight` requests at once.
/// Returns one response per sentence, in input order.
pub fn score_remote(endpoint: &str, sentences: &[String], opts: &ClientOptions) -> Result<Vec<ScoreResponse>> {
    if sentences.is_empty() {
        return Err(ClientError::EmptyRequest);
    }
    let url = score_url(endpoint);
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(opts.timeout))
        .build()
        .into();
    let batches: Vec<&[String]> = sentences.chunks(opts.batch_size.max(1)).collect();
    // slot k holds the reply to request k, whatever order replies arrive in
    let slots: Vec<Mutex<Option<Result<Vec<ScoreResponse>>>>> = batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..opts.max_in_flight.max(1).min(batches.len()) {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(k) else { break };
                let r = post_with_retry(&agent, &url, batch, opts);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                *slots[k].lock().expect("slot lock") = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(sentences.len());
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(r) => out.extend(r?),
            None => {
                return Err(ClientError::Connection {
                    endpoint: url,
                    attempts: 0,
                    message: "request abandoned after an earlier failure".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Word index -> contiguous range of subword indices. The ranges partition
/// the subword sequence in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordAlignment {
    pub ranges: Vec<Range<usize>>,
}

fn normalize(token: &str) -> String {
    // byte-level BPE and sentencepiece word-boundary markers
    match token.strip_prefix('Ġ').or_else(|| token.strip_prefix('▁')) {
        Some(rest) => format!(" {rest}"),
        None => token.to_string(),
    }
}

/// Aligns subword tokens to `words`. The concatenated tokens, with a leading
/// `Ġ`/`▁` read as a space and leading whitespace dropped, must spell the
/// words joined by single spaces.
pub fn word_alignment<S: AsRef<str>>(words: &[S], tokens: &[String]) -> Result<WordAlignment> {
    let surface: Vec<char> = words.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ").chars().collect();
    // word index of each surface character (None for separating spaces)
    let mut owner = Vec::with_capacity(surface.len());
    for (w, word) in words.iter().enumerate() {
        if w > 0 {
            owner.push(None);
        }
        owner.extend(std::iter::repeat(Some(w)).take(word.as_ref().chars().count()));
    }
    let mut word_of_token: Vec<Option<usize>> = Vec::with_capacity(tokens.len());
    let mut pos = 0usize;
    for token in tokens {
        let mut assigned = None;
        for c in normalize(token).chars() {
            if pos == 0 && c.is_whitespace() {
                continue;
            }
            if pos >= surface.len() || surface[pos] != c {
                return Err(ClientError::Alignment {
                    offset: pos,
                    message: format!(
                        "expected {:?}, service token {:?} has {:?}",
                        surface.get(pos).map(|c| c.to_string()).unwrap_or_else(|| "end of sentence".into()),
                        token,
                        c
                    ),
                });
            }
            if let Some(w) = owner[pos] {
                match assigned {
                    None => assigned = Some(w),
                    Some(a) if a != w => {
                        return Err(ClientError::Alignment {
                            offset: pos,
                            message: format!("service token {token:?} spans two words"),
                        })
                    }
                    _ => {}
                }
            }
            pos += 1;
        }
        word_of_token.push(assigned);
    }
    if pos != surface.len() {
        return Err(ClientError::Alignment {
            offset: pos,
            message: "service tokens end before the sentence does".into(),
        });
    }
    // whitespace-only tokens join the following word (the last word at the end)
    let mut ranges: Vec<Range<usize>> = Vec::with_capacity(words.len());
    let mut start = 0;
    for (k, w) in word_of_token.iter().enumerate() {
        if let Some(w) = *w {
            if w == ranges.len() {
                ranges.push(start..k + 1);
            } else {
                ranges[w].end = k + 1;
            }
            start = k + 1;
        }
    }
    if let Some(last) = ranges.last_mut() {
        last.end = tokens.len();
    }
    debug_assert_eq!(ranges.len(), words.len());
    Ok(WordAlignment { ranges })
}

/// Per-word surprisal in bits: each word sums its subwords' surprisals,
/// converted from nats. An undefined first logprob contributes nothing.
pub fn align_subwords<S: AsRef<str>>(words: &[S], response: &ScoreResponse) -> Result<Vec<f64>> {
    let alignment = word_alignment(words, &response.tokens)?;
    Ok(alignment
        .ranges
        .iter()
        .map(|r| {
            response.logprobs[r.clone()]
                .iter()
                .map(|lp| lp.map_or(0.0, |v| -v))
                .sum::<f64>()
                / std::f64::consts::LN_2
        })
        .collect())
}

/// Scores every sentence of `items` through the service and sums critical
/// regions, exactly as the in-process path does. Returns the service's
/// model identifier with the scores.
pub fn score_paradigms(endpoint: &str, items: &[ParadigmItem], opts: &ClientOptions) -> Result<(String, Vec<RegionScore>)> {
    let mut texts: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for s in items.iter().flat_map(|i| &i.sentences) {
        let text = s.tokens.join(" ");
        if !index.contains_key(&text) {
            index.insert(text.clone(), texts.len());
            texts.push(text);
        }
    }
    let responses = score_remote(endpoint, &texts, opts)?;
    let model = responses.first().map(|r| r.model.clone()).unwrap_or_default();
    let scores = score_items(items, |tokens| {
        let r = &responses[index[&tokens.join(" ")]];
        align_subwords(tokens, r)
    })?;
    Ok((model, scores))
}

/// Per-word log-probabilities (nats) for a whitespace-split sentence.
pub type WordModel = dyn Fn(&[String]) -> Vec<f64> + Send + Sync;

#[derive(Clone, Debug)]
pub struct MockOptions {
    pub model: String,
    /// Value sent in the protocol header.
    pub proto: String,
    /// Answer the first this-many requests with HTTP 503.
    pub fail_first: usize,
    /// Reply with a truncated JSON body.
    pub malformed: bool,
    /// Delay before each reply.
    pub delay: Duration,
    pub workers: usize,
}

impl Default for MockOptions {
    fn default() -> Self {
        MockOptions {
            model: "mock-subword".into(),
            proto: PROTO_VERSION.into(),
            fail_first: 0,
            malformed: false,
            delay: Duration::ZERO,
            workers: 4,
        }
    }
}

/// Splits a word into subwords the way the mock tokenizer does: words of
/// five or more characters become two pieces.
pub fn mock_subwords(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < 5 {
        vec![word.to_string()]
    } else {
        let cut = chars.len() / 2;
        vec![chars[..cut].iter().collect(), chars[cut..].iter().collect()]
    }
}

/// Mock tokenization and scoring of one sentence: each word's log-prob is
/// split 2:1 over its subwords, and the sentence's first subword is sent as
/// `null`.
pub fn mock_score(sentence: &str, model: &WordModel) -> WireResult {
    let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
    let word_lp = model(&words);
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    for (w, (word, lp)) in words.iter().zip(word_lp).enumerate() {
        let pieces = mock_subwords(word);
        let shares: &[f64] = if pieces.len() == 1 { &[1.0] } else { &[2.0 / 3.0, 1.0 / 3.0] };
        for (k, (piece, share)) in pieces.iter().zip(shares).enumerate() {
            tokens.push(if w > 0 && k == 0 { format!("Ġ{piece}") } else { piece.clone() });
            logprobs.push(if tokens.len() == 1 { None } else { Some(lp * share) });
        }
    }
    WireResult { tokens, logprobs }
}

/// In-process `/v1/score` server for tests and examples.
pub struct MockScorer {
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
    requests: Arc<AtomicUsize>,
    peak_in_flight: Arc<AtomicUsize>,
    pub url: String,
}

impl MockScorer {
    pub fn start(model: Arc<WordModel>, opts: MockOptions) -> std::io::Result<MockScorer> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server.server_addr().to_ip().map(|a| a.port()).ok_or_else(|| std::io::Error::other("no port"))?;
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let workers = (0..opts.workers.max(1))
            .map(|_| {
                let (server, model, opts) = (server.clone(), model.clone(), opts.clone());
                let (requests, in_flight, peak) = (requests.clone(), in_flight.clone(), peak.clone());
                std::thread::spawn(move || {
                    while let Ok(mut req) = server.recv() {
                        let n = requests.fetch_add(1, Ordering::SeqCst);
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        std::thread::sleep(opts.delay);
                        let (status, body) = mock_reply(&mut req, n, model.as_ref(), &opts);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let header = tiny_http::Header::from_bytes(PROTO_HEADER, opts.proto.as_bytes()).expect("valid header");
                        let resp = tiny_http::Response::from_string(body).with_status_code(status).with_header(header);
                        let _ = req.respond(resp);
                    }
                })
            })
            .collect();
        Ok(MockScorer {
            server,
            workers,
            requests,
            peak_in_flight: peak,
            url: format!("http://127.0.0.1:{port}"),
        })
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for MockScorer {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn mock_reply(req: &mut tiny_http::Request, n: usize, model: &WordModel, opts: &MockOptions) -> (u16, String) {
    if n < opts.fail_first {
        return (503, "busy".into());
    }
    if req.url() != SCORE_PATH || *req.method() != tiny_http::Method::Post {
        return (404, "not found".into());
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        return (400, "unreadable body".into());
    }
    let parsed: ScoreRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return (400, e.to_string()),
    };
    let reply = WireResponse {
        model: opts.model.clone(),
        results: parsed.sentences.iter().map(|s| mock_score(s, model)).collect(),
    };
    let mut text = serde_json::to_string(&reply).expect("reply serializes");
    if opts.malformed {
        text.truncate(text.len() / 2);
    }
    (200, text)
}
