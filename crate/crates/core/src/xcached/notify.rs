use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::time::Duration;

use super::{Fetched, XcacheError};
use crate::addressing::DagAddress;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NotifEvent {
    ChunkArrived,
    ChunkEvicted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    pub event: NotifEvent,
    pub addr: DagAddress,
}

pub type NotifHandler = Arc<dyn Fn(&Notification) + Send + Sync>;

pub(crate) fn relock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Completion slot for one fetch request. The first terminal state wins.
#[derive(Default)]
pub(crate) struct TicketSlot {
    result: Mutex<Option<Result<Fetched, XcacheError>>>,
    done: Condvar,
}

impl TicketSlot {
    pub(crate) fn complete(&self, result: Result<Fetched, XcacheError>) -> bool {
        let mut slot = relock(&self.result);
        if slot.is_some() {
            return false;
        }
        *slot = Some(result);
        self.done.notify_all();
        true
    }

    fn wait(&self) -> Result<Fetched, XcacheError> {
        let mut slot = relock(&self.result);
        loop {
            if let Some(r) = slot.as_ref() {
                return r.clone();
            }
            slot = self.done.wait(slot).unwrap_or_else(|e| e.into_inner());
        }
    }
}

/// A non-blocking fetch in progress.
#[derive(Clone)]
pub struct FetchTicket {
    pub(crate) slot: Arc<TicketSlot>,
}

impl FetchTicket {
    pub fn poll(&self) -> Option<Result<Fetched, XcacheError>> {
        relock(&self.slot.result).clone()
    }

    pub fn is_done(&self) -> bool {
        relock(&self.slot.result).is_some()
    }

    pub fn wait(&self) -> Result<Fetched, XcacheError> {
        self.slot.wait()
    }
}

impl std::fmt::Debug for FetchTicket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FetchTicket").field("done", &self.is_done()).finish()
    }
}

/// Per-handle state shared with the daemon.
pub(crate) struct HandleState {
    pub(crate) id: u64,
    live: AtomicBool,
    queue: Mutex<VecDeque<Notification>>,
    ready: Condvar,
    handlers: Mutex<Vec<(NotifEvent, NotifHandler)>>,
    tickets: Mutex<Vec<Weak<TicketSlot>>>,
}

impl HandleState {
    pub(crate) fn new(id: u64) -> Self {
        Self {
            id,
            live: AtomicBool::new(true),
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            handlers: Mutex::new(Vec::new()),
            tickets: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn is_live(&self) -> bool {
        self.live.load(Ordering::SeqCst)
    }

    pub(crate) fn wants(&self, event: NotifEvent) -> bool {
        relock(&self.handlers).iter().any(|(e, _)| *e == event)
    }

    pub(crate) fn register(&self, event: NotifEvent, handler: NotifHandler) {
        relock(&self.handlers).push((event, handler));
    }

    pub(crate) fn post(&self, n: Notification) {
        if !self.is_live() || !self.wants(n.event) {
            return;
        }
        relock(&self.queue).push_back(n);
        self.ready.notify_all();
    }

    pub(crate) fn track(&self, slot: &Arc<TicketSlot>) {
        let mut tickets = relock(&self.tickets);
        tickets.retain(|w| w.upgrade().is_some_and(|t| relock(&t.result).is_none()));
        tickets.push(Arc::downgrade(slot));
    }

    /// Runs the handlers for everything queued so far, in order. Returns
    /// how many notifications were taken off the queue.
    pub(crate) fn process(&self) -> usize {
        let batch: Vec<Notification> = relock(&self.queue).drain(..).collect();
        if batch.is_empty() {
            return 0;
        }
        let handlers = relock(&self.handlers).clone();
        for n in &batch {
            for (event, handler) in &handlers {
                if *event == n.event {
                    handler(n);
                }
            }
        }
        batch.len()
    }

    pub(crate) fn pending(&self) -> usize {
        relock(&self.queue).len()
    }

    /// Blocks until something is queued or the handle dies. Returns false
    /// on timeout or death.
    pub(crate) fn wait_ready(&self, timeout: Option<Duration>) -> bool {
        let mut q = relock(&self.queue);
        loop {
            if !self.is_live() {
                return false;
            }
            if !q.is_empty() {
                return true;
            }
            match timeout {
                Some(t) => {
                    let (guard, res) = self.ready.wait_timeout(q, t).unwrap_or_else(|e| e.into_inner());
                    q = guard;
                    if res.timed_out() {
                        return !q.is_empty() && self.is_live();
                    }
                }
                None => q = self.ready.wait(q).unwrap_or_else(|e| e.into_inner()),
            }
        }
    }

    /// Invalidates the handle, cancels its outstanding fetches and drops
    /// queued notifications.
    pub(crate) fn kill(&self) {
        self.live.store(false, Ordering::SeqCst);
        for t in relock(&self.tickets).drain(..) {
            if let Some(t) = t.upgrade() {
                t.complete(Err(XcacheError::Canceled));
            }
        }
        relock(&self.queue).clear();
        self.ready.notify_all();
    }
}

/// Pollable readiness signal for a handle's notifications.
#[derive(Clone)]
pub struct NotifChannel {
    pub(crate) state: Arc<HandleState>,
}

impl NotifChannel {
    pub fn is_ready(&self) -> bool {
        self.state.pending() > 0
    }

    /// Waits up to `timeout` for a notification; false if none arrived.
    pub fn wait(&self, timeout: Duration) -> bool {
        self.state.wait_ready(Some(timeout))
    }
}

impl std::fmt::Debug for NotifChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NotifChannel").field("handle", &self.state.id).field("ready", &self.is_ready()).finish()
    }
}
