use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

#[derive(Debug)]
struct State<T> {
    items: VecDeque<T>,
    waiting_takers: usize,
    /// Items ever enqueued / dequeued; a rendezvous put waits for its own
    /// sequence number to be taken.
    put_seq: u64,
    taken_seq: u64,
}

/// Blocking FIFO with a fixed capacity. Capacity 0 is a rendezvous: `put`
/// returns only after a taker has received the item.
#[derive(Debug)]
pub struct BoundedQueue<T> {
    cap: usize,
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
    taken: Condvar,
}

impl<T> BoundedQueue<T> {
    pub fn new(cap: usize) -> Self {
        BoundedQueue {
            cap,
            state: Mutex::new(State { items: VecDeque::with_capacity(cap.max(1)), waiting_takers: 0, put_seq: 0, taken_seq: 0 }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            taken: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of `take` calls currently blocked on an empty queue.
    pub fn waiting_takers(&self) -> usize {
        self.state.lock().unwrap().waiting_takers
    }

    pub fn put(&self, item: T) {
        self.put_then(item, || ())
    }

    /// Enqueues `item` and runs `after_enqueue` right after it, before any
    /// taker can observe the item (the hook runs under the queue lock, so it
    /// must be short). A rendezvous put then waits until the item is taken.
    pub fn put_then(&self, item: T, after_enqueue: impl FnOnce()) {
        let slots = self.cap.max(1);
        let mut st = self.state.lock().unwrap();
        while st.items.len() >= slots {
            st = self.not_full.wait(st).unwrap();
        }
        st.items.push_back(item);
        st.put_seq += 1;
        let mine = st.put_seq;
        after_enqueue();
        drop(st);
        self.not_empty.notify_one();
        if self.cap == 0 {
            let mut st = self.state.lock().unwrap();
            while st.taken_seq < mine {
                st = self.taken.wait(st).unwrap();
            }
        }
    }

    pub fn take(&self) -> T {
        let mut st = self.state.lock().unwrap();
        st.waiting_takers += 1;
        while st.items.is_empty() {
            st = self.not_empty.wait(st).unwrap();
        }
        st.waiting_takers -= 1;
        let item = st.items.pop_front().expect("non-empty");
        st.taken_seq += 1;
        drop(st);
        self.not_full.notify_one();
        if self.cap == 0 {
            self.taken.notify_all();
        }
        item
    }

    pub fn try_take(&self) -> Option<T> {
        let mut st = self.state.lock().unwrap();
        let item = st.items.pop_front()?;
        st.taken_seq += 1;
        drop(st);
        self.not_full.notify_one();
        if self.cap == 0 {
            self.taken.notify_all();
        }
        Some(item)
    }
}

impl<T: Clone> BoundedQueue<T> {
    /// Returns a copy of the head without removing it, blocking while empty.
    pub fn fetch(&self) -> T {
        let mut st = self.state.lock().unwrap();
        while st.items.is_empty() {
            st = self.not_empty.wait(st).unwrap();
        }
        let item = st.items.front().cloned().expect("non-empty");
        drop(st);
        // a peek consumes the wakeup; pass it on to any other waiter
        self.not_empty.notify_one();
        item
    }
}
