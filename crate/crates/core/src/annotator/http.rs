//! Text-completion backend over HTTP.
//!
//! Sends `{"model", "prompt", "max_tokens", "temperature"}` as JSON and reads
//! `choices[0].text` (or `choices[0].message.content`) from the reply, which
//! covers OpenAI-compatible completion servers such as vLLM.

use std::time::Duration;

use serde_json::{json, Value};

use super::backend::{BackendError, LlmBackend};

pub struct HttpBackend {
    name: String,
    url: String,
    api_key: Option<String>,
    model: String,
    temperature: f64,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: String, api_key: Option<String>, model: &str, temperature: f64, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name: format!("http:{model}"),
            url,
            api_key,
            model: model.to_string(),
            temperature,
            agent,
        }
    }
}

fn extract_text(v: &Value) -> Option<String> {
    let choice = v.get("choices")?.get(0)?;
    if let Some(t) = choice.get("text").and_then(Value::as_str) {
        return Some(t.to_string());
    }
    choice
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, max_output_tokens: usize) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": max_output_tokens,
            "temperature": self.temperature,
        });
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Transport(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("invalid JSON reply: {e}")))?;
        extract_text(&v).ok_or_else(|| BackendError::Transport("reply has no choices[0].text".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one canned HTTP response and hands back the raw request body.
    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let response = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
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
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            reader.get_mut().write_all(response.as_bytes()).unwrap();
            format!("{headers}\n{}", String::from_utf8(buf).unwrap())
        });
        (url, handle)
    }

    #[test]
    fn completion_round_trip() {
        let (url, handle) = serve_once("200 OK", r#"{"choices":[{"text":"[2], [3]"}]}"#);
        let b = HttpBackend::new(url, Some("sekret".into()), "qwen", 0.0, Duration::from_secs(5));
        assert_eq!(b.complete("hello", 32).unwrap(), "[2], [3]");
        let request = handle.join().unwrap();
        assert!(request.to_ascii_lowercase().contains("authorization: bearer sekret"));
        assert!(request.contains("\"prompt\":\"hello\""));
        assert!(request.contains("\"max_tokens\":32"));
    }

    #[test]
    fn chat_shaped_reply_accepted() {
        let (url, handle) = serve_once("200 OK", r#"{"choices":[{"message":{"content":"Paris"}}]}"#);
        let b = HttpBackend::new(url, None, "m", 0.0, Duration::from_secs(5));
        assert_eq!(b.complete("q", 8).unwrap(), "Paris");
        handle.join().unwrap();
    }

    #[test]
    fn server_error_is_transport_failure() {
        let (url, handle) = serve_once("503 Service Unavailable", r#"{"error":"busy"}"#);
        let b = HttpBackend::new(url, None, "m", 0.0, Duration::from_secs(5));
        assert!(matches!(b.complete("q", 8), Err(BackendError::Transport(m)) if m.contains("503")));
        handle.join().unwrap();
    }

    #[test]
    fn likelihood_unsupported() {
        let b = HttpBackend::new("http://127.0.0.1:9".into(), None, "m", 0.0, Duration::from_secs(1));
        assert!(matches!(b.answer_log_likelihood("q", "p", "a"), Err(BackendError::Capability { .. })));
    }
}
