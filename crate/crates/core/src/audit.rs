//! Process-wide counter of ground-truth object-field reads.
//!
//! Every path that hands out a synthetic object's field bumps the counter,
//! so a training or inference run can assert it never looked at the truth.
//! The counter is shared by all threads, worker pools included.

use std::sync::atomic::{AtomicUsize, Ordering};

static OBJECT_READS: AtomicUsize = AtomicUsize::new(0);

pub(crate) fn record_object_read() {
    OBJECT_READS.fetch_add(1, Ordering::SeqCst);
}

/// Object-field reads since process start or the last reset.
pub fn object_field_reads() -> usize {
    OBJECT_READS.load(Ordering::SeqCst)
}

pub fn reset_object_field_reads() {
    OBJECT_READS.store(0, Ordering::SeqCst);
}
