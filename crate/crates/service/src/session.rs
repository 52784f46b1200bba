//! Live sessions: the latest frame and its activations, swapped as a unit.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use convis::net::ActivationMap;
use convis::{forward, Network, Tensor, UnitRef};
use serde::Serialize;

use crate::error::{Result, ServiceError};

/// One processed input. Immutable once published.
#[derive(Debug)]
pub struct Frame {
    pub counter: u64,
    pub input: Tensor,
    pub acts: ActivationMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FrameAck {
    /// Counter of the frame the session now shows.
    pub frame: u64,
    /// True when a newer submission arrived first and this one was dropped.
    pub superseded: bool,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    current: RwLock<Arc<Frame>>,
    selected: Mutex<Option<UnitRef>>,
    /// Latest preprocessed input waiting for the writer; newer frames replace it.
    pending: Mutex<Option<Tensor>>,
    writer: Mutex<()>,
    last_used: Mutex<Instant>,
}

impl Session {
    fn new(id: String, net: &Network) -> Result<Self> {
        let input = Tensor::zeros(net.input_shape())?;
        let acts = forward(net, &input)?;
        Ok(Session {
            id,
            current: RwLock::new(Arc::new(Frame {
                counter: 0,
                input,
                acts,
            })),
            selected: Mutex::new(None),
            pending: Mutex::new(None),
            writer: Mutex::new(()),
            last_used: Mutex::new(Instant::now()),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Snapshot of the current frame; input and activations always match.
    pub fn frame(&self) -> Arc<Frame> {
        self.touch();
        Arc::clone(&self.current.read().expect("frame lock"))
    }

    pub fn selected(&self) -> Option<UnitRef> {
        self.selected.lock().expect("selection lock").clone()
    }

    pub fn select(&self, unit: UnitRef) {
        self.touch();
        *self.selected.lock().expect("selection lock") = Some(unit);
    }

    fn touch(&self) {
        *self.last_used.lock().expect("clock lock") = Instant::now();
    }

    fn idle_for(&self) -> Duration {
        self.last_used.lock().expect("clock lock").elapsed()
    }

    /// Runs the forward pass for a preprocessed input and publishes it.
    ///
    /// Submissions are serialized per session. A submission that finds a
    /// newer one queued behind it yields to it: only the latest waiting
    /// input is ever computed.
    pub fn submit(&self, net: &Network, input: Tensor) -> Result<FrameAck> {
        self.touch();
        *self.pending.lock().expect("pending lock") = Some(input);
        let _writer = self.writer.lock().expect("writer lock");
        let Some(input) = self.pending.lock().expect("pending lock").take() else {
            return Ok(FrameAck {
                frame: self.current.read().expect("frame lock").counter,
                superseded: true,
            });
        };
        let acts = forward(net, &input)?;
        let mut current = self.current.write().expect("frame lock");
        let counter = current.counter + 1;
        *current = Arc::new(Frame { counter, input, acts });
        Ok(FrameAck {
            frame: counter,
            superseded: false,
        })
    }
}

#[derive(Debug, Default)]
pub struct Sessions {
    map: RwLock<HashMap<String, Arc<Session>>>,
    next: AtomicU64,
}

impl Sessions {
    pub fn create(&self, net: &Network) -> Result<Arc<Session>> {
        let n = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let session = Arc::new(Session::new(format!("s{n}"), net)?);
        self.map
            .write()
            .expect("sessions lock")
            .insert(session.id.clone(), Arc::clone(&session));
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>> {
        self.map
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("sessions lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions unused for longer than `idle`; returns how many.
    pub fn evict_idle(&self, idle: Duration) -> usize {
        let mut map = self.map.write().expect("sessions lock");
        let before = map.len();
        map.retain(|_, s| s.idle_for() <= idle);
        before - map.len()
    }
}
