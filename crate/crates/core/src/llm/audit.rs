//! JSONL audit log of every completion, and a provider that replays it.

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub request_hash: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    /// Unix time in milliseconds.
    pub t: u64,
}

pub struct AuditLog {
    out: Mutex<File>,
}

impl AuditLog {
    /// Opens `path` for appending.
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: Mutex::new(file) })
    }

    pub(crate) fn record(&self, request: &ChatRequest, response: &ChatResponse) {
        let t = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let rec = AuditRecord {
            request_hash: request.content_hash(),
            request: request.clone(),
            response: response.clone(),
            t,
        };
        let mut line = serde_json::to_string(&rec).expect("audit record serializes");
        line.push('\n');
        let mut out = self.out.lock().expect("audit log poisoned");
        if let Err(e) = out.write_all(line.as_bytes()) {
            log::error!("audit log write failed: {e}");
        }
    }

    pub fn read(path: &Path) -> io::Result<Vec<AuditRecord>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            out.push(rec);
        }
        Ok(out)
    }
}

/// Answers requests from a previously recorded audit log.
pub struct ReplayProvider {
    responses: HashMap<String, ChatResponse>,
}

impl ReplayProvider {
    pub fn from_log(path: &Path) -> io::Result<Self> {
        Ok(Self::from_records(AuditLog::read(path)?))
    }

    pub fn from_records(records: impl IntoIterator<Item = AuditRecord>) -> Self {
        let responses = records
            .into_iter()
            .map(|r| (r.request_hash, r.response))
            .collect();
        Self { responses }
    }
}

impl ChatProvider for ReplayProvider {
    fn id(&self) -> &str {
        "replay"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let hash = request.content_hash();
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(LlmError::NotRecorded(hash))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Gateway, MockScript, PromptClass};
    use super::*;

    #[test]
    fn replay_reproduces_logged_responses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let live = Gateway::mock(MockScript::new(3)).with_audit(AuditLog::open(&path).unwrap());
        let reqs: Vec<ChatRequest> = (0..5)
            .map(|i| ChatRequest::new(PromptClass::Generic, format!("prompt {i}")).unwrap())
            .collect();
        let originals: Vec<String> = reqs.iter().map(|r| live.complete(r).unwrap().text).collect();

        let records = AuditLog::read(&path).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(records[0].request_hash, reqs[0].content_hash());

        let replay = Gateway::new(ReplayProvider::from_log(&path).unwrap());
        for (r, orig) in reqs.iter().zip(&originals) {
            assert_eq!(&replay.complete(r).unwrap().text, orig);
        }
        let unseen = ChatRequest::new(PromptClass::Generic, "never sent").unwrap();
        assert!(matches!(replay.complete(&unseen), Err(LlmError::NotRecorded(_))));
    }
}
