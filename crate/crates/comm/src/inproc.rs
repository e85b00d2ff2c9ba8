use std::sync::Arc;

use crate::error::Result;
use crate::mailbox::Mailbox;
use crate::transport::{AbortHandle, Transport};

#[derive(Debug)]
struct World {
    mailboxes: Vec<Mailbox>,
}

impl World {
    fn abort(&self, reason: &str) {
        for mb in &self.mailboxes {
            mb.abort(reason);
        }
    }
}

/// One rank's view of a job whose ranks are threads of this process.
#[derive(Debug)]
pub(crate) struct InProcessEndpoint {
    rank: usize,
    world: Arc<World>,
}

impl InProcessEndpoint {
    pub(crate) fn world(size: usize, buffer_cap: usize) -> Vec<InProcessEndpoint> {
        let world = Arc::new(World {
            mailboxes: (0..size).map(|_| Mailbox::new(size, buffer_cap)).collect(),
        });
        (0..size).map(|rank| InProcessEndpoint { rank, world: Arc::clone(&world) }).collect()
    }
}

impl Transport for InProcessEndpoint {
    fn send(&self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<()> {
        self.world.mailboxes[dest].deliver(self.rank, tag, payload)
    }

    fn recv(&self, source: usize, tag: u32) -> Result<Vec<u8>> {
        self.world.mailboxes[self.rank].take(source, tag)
    }

    fn abort_handle(&self) -> AbortHandle {
        let world = Arc::clone(&self.world);
        AbortHandle::new(move |reason| world.abort(reason))
    }
}

impl Drop for InProcessEndpoint {
    fn drop(&mut self) {
        for mb in &self.world.mailboxes {
            mb.close_source(self.rank);
        }
    }
}
