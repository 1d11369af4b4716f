//! Adapter for OpenAI-compatible HTTP APIs (`/chat/completions`,
//! `/embeddings`). Most hosted and self-hosted model servers speak this
//! dialect, so one adapter covers the supported models.

use serde_json::{json, Value};

use super::{CallContext, GenerationRequest, Provider, ProviderError};

pub struct OpenAiCompatible {
    name: String,
}

impl OpenAiCompatible {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }

    fn post(
        &self,
        call: &CallContext<'_>,
        path: &str,
        body: &Value,
    ) -> Result<Value, ProviderError> {
        let timeout = (!call.timeout.is_zero()).then_some(call.timeout);
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(timeout)
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/{}", call.endpoint.trim_end_matches('/'), path);
        let mut req = agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = call.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(transport)?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            429 => return Err(ProviderError::RateLimited),
            401 | 403 => return Err(ProviderError::Auth(format!("HTTP {status}"))),
            408 => return Err(ProviderError::Timeout),
            500..=599 => return Err(ProviderError::Server(status)),
            _ => {
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(ProviderError::Transport(format!(
                    "HTTP {status}: {}",
                    truncate(&text)
                )));
            }
        }
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

fn transport(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::Transport(other.to_string()),
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Provider for OpenAiCompatible {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(
        &self,
        req: &GenerationRequest,
        call: &CallContext<'_>,
    ) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let v = self.post(call, "chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
    }

    fn embed(
        &self,
        text: &str,
        model_id: &str,
        call: &CallContext<'_>,
    ) -> Result<Vec<f64>, ProviderError> {
        let v = self.post(
            call,
            "embeddings",
            &json!({"model": model_id, "input": text}),
        )?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Malformed("missing data[0].embedding".into()))?;
        arr.iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| ProviderError::Malformed("non-numeric embedding".into()))
            })
            .collect()
    }
}
