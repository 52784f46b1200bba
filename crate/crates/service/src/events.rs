//! Push notifications fanned out to stream subscribers.

use serde::Serialize;
use tokio::sync::broadcast;

use crate::jobs::JobState;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Event {
    Frame {
        session: String,
        frame: u64,
    },
    Selected {
        session: String,
        unit: String,
        frame: u64,
    },
    Job {
        id: String,
        state: JobState,
        step: usize,
        total: usize,
    },
}

impl Event {
    /// Session-scoped events belong to one session; job events to all.
    pub fn concerns(&self, session: Option<&str>) -> bool {
        match self {
            Event::Frame { session: s, .. } | Event::Selected { session: s, .. } => session.is_none_or(|id| id == s),
            Event::Job { .. } => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Events(broadcast::Sender<Event>);

impl Events {
    pub fn new(capacity: usize) -> Self {
        Events(broadcast::channel(capacity).0)
    }

    /// Never blocks; with no subscribers the event is dropped.
    pub fn send(&self, event: Event) {
        let _ = self.0.send(event);
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.0.subscribe()
    }
}
