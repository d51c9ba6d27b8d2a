//! In-process conflated channel: depth one, newest message wins.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("channel closed")]
pub struct Closed;

/// A message together with the instant it became readable.
#[derive(Clone, Debug, PartialEq)]
pub struct Received<M> {
    pub msg: M,
    pub at: Instant,
}

struct Slot<M> {
    value: Option<Received<M>>,
    /// Messages overwritten before anyone read them.
    conflated: u64,
    publisher_gone: bool,
    subscriber_gone: bool,
}

struct Shared<M> {
    slot: Mutex<Slot<M>>,
    ready: Condvar,
}

impl<M> Shared<M> {
    fn lock(&self) -> MutexGuard<'_, Slot<M>> {
        // a panic while holding the lock cannot leave the slot half-written
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct Publisher<M> {
    shared: Arc<Shared<M>>,
}

pub struct Subscriber<M> {
    shared: Arc<Shared<M>>,
}

/// Creates a depth-one conflated channel.
pub fn conflated<M>() -> (Publisher<M>, Subscriber<M>) {
    let shared = Arc::new(Shared {
        slot: Mutex::new(Slot {
            value: None,
            conflated: 0,
            publisher_gone: false,
            subscriber_gone: false,
        }),
        ready: Condvar::new(),
    });
    (
        Publisher {
            shared: shared.clone(),
        },
        Subscriber { shared },
    )
}

impl<M> Publisher<M> {
    /// Stores `msg`, replacing any unread message. Never waits on the reader.
    pub fn publish(&self, msg: M) -> Result<(), Closed> {
        let mut slot = self.shared.lock();
        if slot.subscriber_gone {
            return Err(Closed);
        }
        if slot.value.is_some() {
            slot.conflated += 1;
        }
        slot.value = Some(Received {
            msg,
            at: Instant::now(),
        });
        drop(slot);
        self.shared.ready.notify_one();
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.shared.lock().subscriber_gone
    }
}

impl<M> Drop for Publisher<M> {
    fn drop(&mut self) {
        self.shared.lock().publisher_gone = true;
        self.shared.ready.notify_all();
    }
}

impl<M> Subscriber<M> {
    /// Waits for the next unread message. A message published before the
    /// publisher went away is still delivered; after that the result is
    /// `Err(Closed)`.
    pub fn recv(&self) -> Result<Received<M>, Closed> {
        let mut slot = self.shared.lock();
        loop {
            if let Some(v) = slot.value.take() {
                return Ok(v);
            }
            if slot.publisher_gone {
                return Err(Closed);
            }
            slot = self
                .shared
                .ready
                .wait(slot)
                .unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Like [`Subscriber::recv`] but gives up at `deadline`.
    pub fn recv_deadline(&self, deadline: Instant) -> Result<Option<Received<M>>, Closed> {
        let mut slot = self.shared.lock();
        loop {
            if let Some(v) = slot.value.take() {
                return Ok(Some(v));
            }
            if slot.publisher_gone {
                return Err(Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            slot = self
                .shared
                .ready
                .wait_timeout(slot, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn try_recv(&self) -> Result<Option<Received<M>>, Closed> {
        let mut slot = self.shared.lock();
        match slot.value.take() {
            Some(v) => Ok(Some(v)),
            None if slot.publisher_gone => Err(Closed),
            None => Ok(None),
        }
    }

    pub fn conflated_count(&self) -> u64 {
        self.shared.lock().conflated
    }
}

impl<M> Drop for Subscriber<M> {
    fn drop(&mut self) {
        self.shared.lock().subscriber_gone = true;
    }
}

/// Conflation per key: the newest message for each key survives.
pub struct KeyedMailbox<K, M> {
    inner: Mutex<BTreeMap<K, M>>,
}

impl<K: Ord, M> Default for KeyedMailbox<K, M> {
    fn default() -> Self {
        KeyedMailbox {
            inner: Mutex::new(BTreeMap::new()),
        }
    }
}

impl<K: Ord, M> KeyedMailbox<K, M> {
    pub fn publish(&self, key: K, msg: M) {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, msg);
    }

    /// Takes every pending message in key order.
    pub fn drain_into(&self, out: &mut Vec<M>) {
        let mut map = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        out.extend(std::mem::take(&mut *map).into_values());
    }
}
