//! Bounded multi-producer experience queue that drops the oldest item when full.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueCounts {
    pub produced: u64,
    pub consumed: u64,
    pub dropped: u64,
    pub in_queue: u64,
}

impl QueueCounts {
    /// Every accepted item is consumed, dropped or still queued.
    pub fn conserved(&self) -> bool {
        self.produced == self.consumed + self.dropped + self.in_queue
    }
}

struct Inner<T> {
    items: VecDeque<T>,
    closed: bool,
    counts: QueueCounts,
}

pub struct ExperienceQueue<T> {
    capacity: usize,
    inner: Mutex<Inner<T>>,
    ready: Condvar,
}

/// Result of [`ExperienceQueue::pop`].
#[derive(Debug, PartialEq)]
pub enum Pop<T> {
    Item(T),
    TimedOut,
    Closed,
}

impl<T> ExperienceQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            capacity,
            inner: Mutex::new(Inner {
                items: VecDeque::with_capacity(capacity),
                closed: false,
                counts: QueueCounts::default(),
            }),
            ready: Condvar::new(),
        }
    }

    /// Enqueues `item`, evicting the oldest entry if full. Returns `false`
    /// (and discards the item uncounted) once the queue is closed.
    pub fn push(&self, item: T) -> bool {
        let mut inner = self.inner.lock().expect("queue lock");
        if inner.closed {
            return false;
        }
        if inner.items.len() == self.capacity {
            inner.items.pop_front();
            inner.counts.dropped += 1;
        }
        inner.items.push_back(item);
        inner.counts.produced += 1;
        drop(inner);
        self.ready.notify_one();
        true
    }

    /// Takes the oldest item, waiting up to `timeout` for one to arrive.
    pub fn pop(&self, timeout: Duration) -> Pop<T> {
        let inner = self.inner.lock().expect("queue lock");
        let (mut inner, _) = self
            .ready
            .wait_timeout_while(inner, timeout, |i| i.items.is_empty() && !i.closed)
            .expect("queue lock");
        match inner.items.pop_front() {
            Some(item) => {
                inner.counts.consumed += 1;
                Pop::Item(item)
            }
            None if inner.closed => Pop::Closed,
            None => Pop::TimedOut,
        }
    }

    /// Rejects further pushes and wakes all waiters. Queued items stay poppable.
    pub fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.ready.notify_all();
    }

    pub fn counts(&self) -> QueueCounts {
        let inner = self.inner.lock().expect("queue lock");
        QueueCounts {
            in_queue: inner.items.len() as u64,
            ..inner.counts
        }
    }
}
