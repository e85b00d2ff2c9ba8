use std::fmt;
use std::sync::Arc;

use crate::error::Result;

/// Point-to-point delivery between ranks. Ranks are validated by the caller.
pub(crate) trait Transport: Send + Sync {
    fn send(&self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<()>;
    fn recv(&self, source: usize, tag: u32) -> Result<Vec<u8>>;
    fn abort_handle(&self) -> AbortHandle;
}

/// Tears down an endpoint from another thread; blocked operations on it
/// return [`CommError::Aborted`](crate::CommError::Aborted).
#[derive(Clone)]
pub struct AbortHandle(Arc<dyn Fn(&str) + Send + Sync>);

impl AbortHandle {
    pub(crate) fn new(f: impl Fn(&str) + Send + Sync + 'static) -> Self {
        AbortHandle(Arc::new(f))
    }

    pub fn abort(&self, reason: &str) {
        (self.0)(reason)
    }
}

impl fmt::Debug for AbortHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AbortHandle")
    }
}
