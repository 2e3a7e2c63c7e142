use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{tags, NetError, PartyId, Transcript};

/// A party program: runs to completion or fails with its own error type.
pub type Task<'a, E> = Pin<Box<dyn Future<Output = Result<(), E>> + 'a>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub from: PartyId,
    pub to: PartyId,
    pub tag: u16,
    pub seq: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Default)]
struct NetState {
    parties: Vec<PartyId>,
    queues: BTreeMap<(PartyId, PartyId), VecDeque<Message>>,
    next_seq: BTreeMap<(PartyId, PartyId), u64>,
    waiting: BTreeMap<PartyId, PartyId>,
    transcript: Transcript,
    capture_payloads: bool,
    progressed: bool,
}

/// In-process network shared by a fixed set of parties.
///
/// Parties are polled round-robin in an order fixed by the scheduler seed;
/// sends never block and receives wait on a per-channel FIFO.
#[derive(Clone, Debug)]
pub struct Network {
    state: Rc<RefCell<NetState>>,
    seed: u64,
}

/// One party's view of the network.
#[derive(Clone, Debug)]
pub struct Endpoint {
    id: PartyId,
    state: Rc<RefCell<NetState>>,
}

impl Network {
    pub fn new(parties: &[PartyId], seed: u64) -> Self {
        let state = NetState { parties: parties.to_vec(), ..Default::default() };
        Self { state: Rc::new(RefCell::new(state)), seed }
    }

    /// Keep full payloads in the transcript for [`Transcript::dump_payloads`].
    pub fn capture_payloads(&self, on: bool) {
        self.state.borrow_mut().capture_payloads = on;
    }

    pub fn endpoint(&self, id: PartyId) -> Endpoint {
        assert!(self.state.borrow().parties.contains(&id), "{id} is not part of this network");
        Endpoint { id, state: self.state.clone() }
    }

    pub fn parties(&self) -> Vec<PartyId> {
        self.state.borrow().parties.clone()
    }

    pub fn transcript(&self) -> Transcript {
        self.state.borrow().transcript.clone()
    }

    /// Number of messages sent so far; pair with [`Transcript::since`].
    pub fn mark(&self) -> usize {
        self.state.borrow().transcript.len()
    }

    /// Drives every task to completion.
    ///
    /// Fails with the first task error, with [`NetError::Deadlock`] when no
    /// task can make progress, or with [`NetError::Undelivered`] when messages
    /// are left unread at the end.
    pub fn run<'a, E: From<NetError>>(&self, mut tasks: Vec<Task<'a, E>>) -> Result<(), E> {
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.shuffle(&mut ChaCha20Rng::seed_from_u64(self.seed));
        let mut done = vec![false; tasks.len()];
        let mut cx = Context::from_waker(Waker::noop());
        loop {
            let mut progressed = false;
            for &i in &order {
                if done[i] {
                    continue;
                }
                self.state.borrow_mut().progressed = false;
                match tasks[i].as_mut().poll(&mut cx) {
                    Poll::Ready(Ok(())) => {
                        done[i] = true;
                        progressed = true;
                    }
                    Poll::Ready(Err(e)) => return Err(e),
                    Poll::Pending => progressed |= self.state.borrow().progressed,
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
            if !progressed {
                return Err(NetError::Deadlock(self.describe_waits()).into());
            }
        }
        let st = self.state.borrow();
        let left: usize = st.queues.values().map(VecDeque::len).sum();
        if left > 0 {
            let first = st.queues.values().flatten().next().expect("non-empty");
            return Err(NetError::Undelivered { count: left, first_tag: tags::name(first.tag) }.into());
        }
        Ok(())
    }

    fn describe_waits(&self) -> String {
        let st = self.state.borrow();
        let parts: Vec<String> = st.waiting.iter().map(|(p, from)| format!("{p} waits on {from}")).collect();
        if parts.is_empty() {
            "no party is waiting on a channel".into()
        } else {
            parts.join(", ")
        }
    }
}

impl Endpoint {
    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn send(&self, to: PartyId, tag: u16, payload: Vec<u8>) -> Result<(), NetError> {
        let mut st = self.state.borrow_mut();
        if !st.parties.contains(&to) || to == self.id {
            return Err(NetError::UnknownParty(to));
        }
        if payload.len() > u32::MAX as usize {
            return Err(NetError::PayloadTooLarge(payload.len()));
        }
        let seq = {
            let s = st.next_seq.entry((self.id, to)).or_insert(0);
            *s += 1;
            *s
        };
        let keep = st.capture_payloads;
        st.transcript.record(seq, self.id, to, tag, &payload, keep);
        st.queues.entry((self.id, to)).or_default().push_back(Message { from: self.id, to, tag, seq, payload });
        st.progressed = true;
        Ok(())
    }

    /// Messages sent on the whole network so far.
    pub fn mark(&self) -> usize {
        self.state.borrow().transcript.len()
    }

    /// Next message on the channel from `from`.
    pub fn recv(&self, from: PartyId) -> Recv<'_> {
        Recv { ep: self, from }
    }

    /// Next message from `from`, which must carry `tag`.
    pub async fn expect(&self, from: PartyId, tag: u16) -> Result<Vec<u8>, NetError> {
        let m = self.recv(from).await?;
        if m.tag != tag {
            return Err(NetError::UnexpectedTag { from, expected: tags::name(tag), got: tags::name(m.tag) });
        }
        Ok(m.payload)
    }
}

pub struct Recv<'a> {
    ep: &'a Endpoint,
    from: PartyId,
}

impl Future for Recv<'_> {
    type Output = Result<Message, NetError>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Self::Output> {
        let mut st = self.ep.state.borrow_mut();
        if !st.parties.contains(&self.from) {
            return Poll::Ready(Err(NetError::UnknownParty(self.from)));
        }
        match st.queues.get_mut(&(self.from, self.ep.id)).and_then(VecDeque::pop_front) {
            Some(m) => {
                st.waiting.remove(&self.ep.id);
                st.progressed = true;
                Poll::Ready(Ok(m))
            }
            None => {
                st.waiting.insert(self.ep.id, self.from);
                Poll::Pending
            }
        }
    }
}
