use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Narrator, NarratorContext, NarratorError, ProviderCause, RawReply};

/// Serves previously recorded replies in order, ignoring the context.
#[derive(Debug, Default)]
pub struct ReplayNarrator {
    replies: Mutex<VecDeque<RawReply>>,
}

impl ReplayNarrator {
    pub fn new(replies: impl IntoIterator<Item = RawReply>) -> Self {
        ReplayNarrator {
            replies: Mutex::new(replies.into_iter().collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().map(|q| q.len()).unwrap_or(0)
    }
}

impl Narrator for ReplayNarrator {
    fn name(&self) -> &str {
        "replay"
    }

    fn generate_raw(&self, _ctx: &NarratorContext<'_>) -> Result<RawReply, NarratorError> {
        let mut queue = self.replies.lock().unwrap_or_else(|e| e.into_inner());
        queue.pop_front().ok_or(NarratorError::ProviderUnavailable {
            cause: ProviderCause::Exhausted,
        })
    }
}
