use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;
use crate::normalize::NormalizedRequest;
use crate::types::{ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCall {
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Replays recorded calls in their global order. Each incoming request must
/// match the recorded one after normalization.
#[derive(Debug)]
pub struct ReplayBackend {
    calls: Vec<(NormalizedRequest, ChatResponse)>,
    next: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(calls: Vec<RecordedCall>) -> Self {
        let calls = calls.into_iter().map(|c| (NormalizedRequest::of(&c.request), c.response)).collect();
        Self { calls, next: Mutex::new(0) }
    }

    pub fn served(&self) -> usize {
        *self.next.lock().expect("replay backend poisoned")
    }

    pub fn remaining(&self) -> usize {
        self.calls.len() - self.served()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut next = self.next.lock().expect("replay backend poisoned");
        let turn = *next + 1;
        let Some((recorded, response)) = self.calls.get(*next) else {
            return Err(GatewayError::Divergence {
                turn,
                detail: format!("no recorded call left for a {} request", request.agent),
            });
        };
        if let Some(detail) = recorded.first_difference(&NormalizedRequest::of(request)) {
            return Err(GatewayError::Divergence { turn, detail });
        }
        *next += 1;
        Ok(response.clone())
    }
}
