//! Pulling structured data out of free-form model replies.

use serde::de::DeserializeOwned;
use serde_json::Value;

/// The first JSON value in `reply`, ignoring Markdown code fences and any
/// prose around the value.
pub(crate) fn json_value(reply: &str) -> Result<Value, String> {
    let text = reply.trim();
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return Ok(v);
    }
    let start = text
        .find(['{', '['])
        .ok_or_else(|| "reply contains no JSON".to_string())?;
    let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
    match stream.next() {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(format!("invalid JSON: {e}")),
        None => Err("reply contains no JSON".to_string()),
    }
}

pub(crate) fn json<T: DeserializeOwned>(reply: &str) -> Result<T, String> {
    serde_json::from_value(json_value(reply)?).map_err(|e| format!("unexpected JSON shape: {e}"))
}
