use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Oracle, OracleError, OracleRequest, OracleResponse};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token. No auth header when unset.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    /// Retries after the first attempt.
    #[serde(default = "default_max")]
    pub max: u32,
    #[serde(default = "default_base_ms")]
    pub base_ms: u64,
}

fn default_max() -> u32 {
    3
}

fn default_base_ms() -> u64 {
    500
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max: default_max(),
            base_ms: default_base_ms(),
        }
    }
}

impl RetryConfig {
    fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_ms.saturating_mul(1u64 << retry.min(20)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatCompletion {
    pub text: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

fn build_client(endpoint: &EndpointConfig) -> Result<reqwest::blocking::Client, OracleError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(endpoint.timeout_secs))
        .build()
        .map_err(|e| OracleError::Config(e.to_string()))
}

fn token(endpoint: &EndpointConfig) -> Result<Option<String>, OracleError> {
    match &endpoint.auth_env {
        None => Ok(None),
        Some(var) => std::env::var(var)
            .map(Some)
            .map_err(|_| OracleError::Config(format!("environment variable {var} is not set"))),
    }
}

/// One chat completion against an OpenAI-compatible endpoint.
///
/// Transport errors and 5xx responses are retried with exponential backoff;
/// other non-success statuses fail immediately.
pub fn chat_complete(
    endpoint: &EndpointConfig,
    retry: &RetryConfig,
    prompt: &str,
) -> Result<ChatCompletion, OracleError> {
    let client = build_client(endpoint)?;
    complete_with(&client, endpoint, token(endpoint)?.as_deref(), retry, prompt)
}

fn complete_with(
    client: &reqwest::blocking::Client,
    endpoint: &EndpointConfig,
    token: Option<&str>,
    retry: &RetryConfig,
    prompt: &str,
) -> Result<ChatCompletion, OracleError> {
    let body = json!({
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
    });
    let started = Instant::now();
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let mut req = client.post(&endpoint.url).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let retryable = match req.send() {
            Err(e) => OracleError::Transport {
                attempts,
                message: e.to_string(),
            },
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().map_err(|e| OracleError::Transport {
                    attempts,
                    message: e.to_string(),
                })?;
                if status.is_success() {
                    let text = assistant_text(&text)?;
                    let latency_ms = started.elapsed().as_millis() as u64;
                    tracing::debug!(attempts, latency_ms, "chat completion");
                    return Ok(ChatCompletion {
                        text,
                        latency_ms,
                        attempts,
                    });
                }
                let err = OracleError::NonSuccessStatus {
                    status: status.as_u16(),
                    body: text.chars().take(500).collect(),
                };
                if !status.is_server_error() {
                    return Err(err);
                }
                err
            }
        };
        if attempts > retry.max {
            return Err(match retryable {
                OracleError::Transport { message, .. } => OracleError::Transport { attempts, message },
                other => other,
            });
        }
        let delay = retry.delay(attempts - 1);
        tracing::warn!(attempt = attempts, ?delay, error = %retryable, "retrying chat completion");
        std::thread::sleep(delay);
    }
}

fn assistant_text(body: &str) -> Result<String, OracleError> {
    let value: Value = serde_json::from_str(body).map_err(|e| OracleError::MalformedResponseBody(e.to_string()))?;
    let content = &value["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // Content-part arrays: concatenate the text parts.
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(OracleError::MalformedResponseBody(
            "missing choices[0].message.content".into(),
        )),
    }
}

/// Serves any oracle role through a chat endpoint. Structured arguments
/// other than the prompt are not sent.
pub struct HttpChatOracle {
    endpoint: EndpointConfig,
    retry: RetryConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl HttpChatOracle {
    pub fn new(endpoint: EndpointConfig, retry: RetryConfig) -> Result<Self, OracleError> {
        let client = build_client(&endpoint)?;
        let token = token(&endpoint)?;
        Ok(Self {
            endpoint,
            retry,
            client,
            token,
        })
    }
}

impl Oracle for HttpChatOracle {
    fn call(&self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        let c = complete_with(
            &self.client,
            &self.endpoint,
            self.token.as_deref(),
            &self.retry,
            &request.prompt,
        )?;
        Ok(OracleResponse {
            text: c.text,
            latency_ms: Some(c.latency_ms),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    /// Serves the given (status, body) pairs in order, one per connection,
    /// and records each request body.
    fn stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let handle = thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock()
                    .unwrap()
                    .push(format!("{headers}\n{}", String::from_utf8_lossy(&buf)));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, seen, handle)
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn endpoint(url: String) -> EndpointConfig {
        EndpointConfig {
            url,
            model: "test-model".into(),
            auth_env: None,
            timeout_secs: 5,
        }
    }

    const FAST: RetryConfig = RetryConfig { max: 3, base_ms: 1 };

    #[test]
    fn echo() {
        let (url, seen, h) = stub(vec![(200, ok_body("A"))]);
        let c = chat_complete(&endpoint(url), &FAST, "pick one").unwrap();
        h.join().unwrap();
        assert_eq!(c.text, "A");
        assert_eq!(c.attempts, 1);
        let req = &seen.lock().unwrap()[0];
        assert!(req.contains("\"model\":\"test-model\""));
        assert!(req.contains("pick one"));
    }

    #[test]
    fn retries_server_errors() {
        let (url, seen, h) = stub(vec![(500, "{}".into()), (500, "{}".into()), (200, ok_body("B"))]);
        let c = chat_complete(&endpoint(url), &FAST, "q").unwrap();
        h.join().unwrap();
        assert_eq!((c.text.as_str(), c.attempts), ("B", 3));
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn gives_up_after_max() {
        let (url, _, h) = stub(vec![(503, "busy".into()), (503, "busy".into())]);
        let retry = RetryConfig { max: 1, base_ms: 1 };
        let err = chat_complete(&endpoint(url), &retry, "q").unwrap_err();
        h.join().unwrap();
        assert_eq!(
            err,
            OracleError::NonSuccessStatus {
                status: 503,
                body: "busy".into()
            }
        );
    }

    #[test]
    fn client_error_not_retried() {
        let (url, seen, h) = stub(vec![(401, "{\"error\":\"bad key\"}".into())]);
        let err = chat_complete(&endpoint(url), &FAST, "q").unwrap_err();
        h.join().unwrap();
        assert!(matches!(err, OracleError::NonSuccessStatus { status: 401, .. }));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn malformed_body() {
        let (url, _, h) = stub(vec![(200, "<html>oops</html>".into())]);
        let err = chat_complete(&endpoint(url), &FAST, "q").unwrap_err();
        h.join().unwrap();
        assert!(matches!(err, OracleError::MalformedResponseBody(_)));
    }

    #[test]
    fn transport_error_after_retries() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        drop(listener);
        let retry = RetryConfig { max: 2, base_ms: 1 };
        let err = chat_complete(&endpoint(url), &retry, "q").unwrap_err();
        assert!(matches!(err, OracleError::Transport { attempts: 3, .. }), "{err:?}");
    }

    #[test]
    fn bearer_token_from_env() {
        let (url, seen, h) = stub(vec![(200, ok_body("C"))]);
        std::env::set_var("EVGRAPH_TEST_TOKEN", "sekret");
        let mut ep = endpoint(url);
        ep.auth_env = Some("EVGRAPH_TEST_TOKEN".into());
        let oracle = HttpChatOracle::new(ep, FAST).unwrap();
        let resp = oracle
            .call(&OracleRequest::new(super::super::OracleKind::Reasoner, "q"))
            .unwrap();
        h.join().unwrap();
        assert_eq!(resp.text, "C");
        assert!(resp.latency_ms.is_some());
        assert!(seen.lock().unwrap()[0]
            .to_ascii_lowercase()
            .contains("authorization: bearer sekret"));
    }

    #[test]
    fn missing_token_env_is_config_error() {
        let mut ep = endpoint("http://127.0.0.1:1/".into());
        ep.auth_env = Some("EVGRAPH_TEST_TOKEN_UNSET".into());
        assert!(matches!(HttpChatOracle::new(ep, FAST), Err(OracleError::Config(_))));
    }

    #[test]
    fn content_parts() {
        let body = json!({"choices": [{"message": {"content": [{"type": "text", "text": "D"}]}}]}).to_string();
        assert_eq!(assistant_text(&body).unwrap(), "D");
        assert!(assistant_text("{\"choices\": []}").is_err());
    }
}
