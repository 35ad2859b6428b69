//! Per-process state machines for the four coordination protocols. A step is
//! a pure function of local state and the inputs delivered this unit; the
//! scheduler paces the resulting sends one event per time unit (R2), so
//! "send repeatedly to all" becomes a standing-send set drained round-robin.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::fdetect::FdReport;
use crate::model::{ActionId, PayloadKind, ProcessId};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProtocolKind {
    /// Enter nUDC(a), perform immediately, gossip the alpha-message forever.
    NUdcGossip,
    /// Send the alpha-message to all, then perform; forward on receipt.
    UdcReliable,
    /// Perform once every process has acked or has ever been suspected.
    UdcStrongFd,
    /// Perform on a generalized report (S,k) with acks from Proc - S and
    /// n - |S| > min(t, n-1) - k.
    UdcTUseful(u32),
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::NUdcGossip => "nudc-gossip",
            ProtocolKind::UdcReliable => "udc-reliable",
            ProtocolKind::UdcStrongFd => "udc-strong-fd",
            ProtocolKind::UdcTUseful(_) => "udc-t-useful",
        }
    }
}

/// A fact in a full-information log: the (process, index)-th event of the
/// run became known. Within one run this identifies the event uniquely.
pub type FipFact = (ProcessId, u32);

pub type FipLog = BTreeSet<FipFact>;

#[derive(Clone, Debug, Default)]
pub struct CoordState {
    pub in_state: bool,
    pub performed: bool,
    pub acks: BTreeSet<ProcessId>,
    /// one-shot broadcast remaining before Do (UdcReliable)
    pub broadcast_pending: VecDeque<ProcessId>,
    /// the (S, k) report that justified Do (UdcTUseful)
    pub witness: Option<(BTreeSet<ProcessId>, u32)>,
}

#[derive(Clone, Debug, Default)]
pub struct FdMemory {
    /// cumulative suspicion: "says or has said that q is faulty"
    pub ever_suspected: BTreeSet<ProcessId>,
    pub gen_reports: Vec<(BTreeSet<ProcessId>, u32)>,
    /// q covered by an exact generalized report (|S| = k)
    pub known_faulty: BTreeSet<ProcessId>,
}

#[derive(Clone, Debug)]
pub struct ProcessState {
    pub proc: ProcessId,
    n: u16,
    kind: ProtocolKind,
    fip: bool,
    /// test knob: UdcStrongFd skips waiting for this process's ack
    broken_skip_ack: Option<ProcessId>,
    pub coords: BTreeMap<ActionId, CoordState>,
    pub fd_memory: FdMemory,
    pub fip_log: FipLog,
    own_events: u32,
    oneshots: VecDeque<(ProcessId, PayloadKind)>,
    rr_cursor: usize,
}

impl ProcessState {
    pub fn new(
        proc: ProcessId,
        n: u16,
        kind: ProtocolKind,
        fip: bool,
        broken_skip_ack: Option<ProcessId>,
    ) -> Self {
        ProcessState {
            proc,
            n,
            kind,
            fip,
            broken_skip_ack,
            coords: BTreeMap::new(),
            fd_memory: FdMemory::default(),
            fip_log: FipLog::new(),
            own_events: 0,
            oneshots: VecDeque::new(),
            rr_cursor: 0,
        }
    }

    fn others(&self) -> impl Iterator<Item = ProcessId> + '_ {
        let me = self.proc;
        (0..self.n).map(ProcessId).filter(move |q| *q != me)
    }

    /// Records that an event was appended to this process's history.
    pub fn note_own_event(&mut self) {
        if self.fip {
            self.fip_log.insert((self.proc, self.own_events));
        }
        self.own_events += 1;
    }

    /// Snapshot of everything this process knows, attached to outgoing
    /// messages in full-information mode.
    pub fn fip_snapshot(&self) -> Option<FipLog> {
        if self.fip {
            Some(self.fip_log.clone())
        } else {
            None
        }
    }

    fn enter_state(&mut self, alpha: ActionId) {
        let me = self.proc;
        let others: Vec<ProcessId> = self.others().collect();
        let st = self.coords.entry(alpha).or_default();
        if st.in_state {
            return;
        }
        st.in_state = true;
        st.acks.insert(me);
        if matches!(self.kind, ProtocolKind::UdcReliable) {
            st.broadcast_pending = others.into_iter().collect();
        }
    }

    /// An Init directive for an action this process owns.
    pub fn on_init(&mut self, alpha: ActionId) -> Result<(), String> {
        if alpha.owner != self.proc {
            return Err(format!("{} cannot initiate {} owned by {}", self.proc, alpha, alpha.owner));
        }
        self.enter_state(alpha);
        Ok(())
    }

    /// A message delivered to this process this unit.
    pub fn on_deliver(&mut self, from: ProcessId, payload: PayloadKind, fip: Option<&FipLog>) {
        if let Some(log) = fip {
            if self.fip {
                self.fip_log.extend(log.iter().copied());
            }
        }
        match payload {
            PayloadKind::Alpha(alpha) => {
                self.oneshots.push_back((from, PayloadKind::Ack(alpha)));
                self.enter_state(alpha);
            }
            PayloadKind::Ack(alpha) => {
                self.coords.entry(alpha).or_default().acks.insert(from);
            }
            PayloadKind::Gossip(_) => {}
        }
    }

    /// A failure-detector report landing in this process's history.
    pub fn on_report(&mut self, report: &FdReport) {
        if let Some(set) = report.resolve_suspects(self.n) {
            self.fd_memory.ever_suspected.extend(set.iter().copied());
        }
        if let FdReport::Generalized { set, k } = report {
            if set.len() == *k as usize {
                self.fd_memory.known_faulty.extend(set.iter().copied());
            }
            self.fd_memory.gen_reports.push((set.clone(), *k));
        }
    }

    /// The action this process is ready to perform, if any (smallest first).
    pub fn next_do(&mut self) -> Option<ActionId> {
        let mut ready: Option<(ActionId, Option<(BTreeSet<ProcessId>, u32)>)> = None;
        for (alpha, st) in &self.coords {
            if !st.in_state || st.performed {
                continue;
            }
            let enabled = match self.kind {
                ProtocolKind::NUdcGossip => Some(None),
                ProtocolKind::UdcReliable => st.broadcast_pending.is_empty().then_some(None),
                ProtocolKind::UdcStrongFd => {
                    let ok = self
                        .others()
                        .filter(|q| Some(*q) != self.broken_skip_ack)
                        .all(|q| {
                            st.acks.contains(&q) || self.fd_memory.ever_suspected.contains(&q)
                        });
                    ok.then_some(None)
                }
                ProtocolKind::UdcTUseful(t) => {
                    let n = self.n as i64;
                    self.fd_memory
                        .gen_reports
                        .iter()
                        .find(|(set, k)| {
                            let clause_d = n - set.len() as i64 > (t as i64).min(n - 1) - *k as i64;
                            let acked = (0..self.n)
                                .map(ProcessId)
                                .filter(|q| !set.contains(q))
                                .all(|q| q == self.proc || st.acks.contains(&q));
                            clause_d && acked
                        })
                        .map(|w| Some(w.clone()))
                }
            };
            if let Some(witness) = enabled {
                ready = Some((*alpha, witness));
                break;
            }
        }
        let (alpha, witness) = ready?;
        let st = self.coords.get_mut(&alpha).expect("coord state exists");
        st.performed = true;
        st.witness = witness;
        Some(alpha)
    }

    /// Standing retransmission targets for one action, per protocol.
    fn standing_targets(&self, st: &CoordState) -> Vec<ProcessId> {
        if !st.in_state {
            return Vec::new();
        }
        match self.kind {
            ProtocolKind::NUdcGossip => self.others().collect(),
            ProtocolKind::UdcReliable => Vec::new(),
            ProtocolKind::UdcStrongFd => {
                self.others().filter(|q| !st.acks.contains(q)).collect()
            }
            ProtocolKind::UdcTUseful(_) => self
                .others()
                .filter(|q| {
                    !st.acks.contains(q)
                        && !(st.performed && self.fd_memory.known_faulty.contains(q))
                })
                .collect(),
        }
    }

    /// The next message to put on the wire, skipping blocked payload classes.
    /// One-shot acks and pending broadcasts go first, then the standing sends
    /// round-robin.
    pub fn next_send(
        &mut self,
        blocked: &dyn Fn(ProcessId, PayloadKind) -> bool,
    ) -> Option<(ProcessId, PayloadKind)> {
        for i in 0..self.oneshots.len() {
            let (dst, payload) = self.oneshots[i];
            if !blocked(dst, payload) {
                self.oneshots.remove(i);
                return Some((dst, payload));
            }
        }
        let broadcast = self.coords.iter().find_map(|(alpha, st)| {
            st.broadcast_pending
                .front()
                .map(|dst| (*alpha, *dst))
                .filter(|(a, dst)| !blocked(*dst, PayloadKind::Alpha(*a)))
        });
        if let Some((alpha, dst)) = broadcast {
            self.coords
                .get_mut(&alpha)
                .expect("coord state exists")
                .broadcast_pending
                .pop_front();
            return Some((dst, PayloadKind::Alpha(alpha)));
        }
        let mut candidates: Vec<(ProcessId, PayloadKind)> = Vec::new();
        for (alpha, st) in &self.coords {
            for q in self.standing_targets(st) {
                candidates.push((q, PayloadKind::Alpha(*alpha)));
            }
        }
        if candidates.is_empty() {
            return None;
        }
        for off in 0..candidates.len() {
            let pick = candidates[(self.rr_cursor + off) % candidates.len()];
            if !blocked(pick.0, pick.1) {
                self.rr_cursor = (self.rr_cursor + off + 1) % candidates.len();
                return Some(pick);
            }
        }
        None
    }

    /// Whether any send could still be produced from the current state.
    pub fn has_pending_sends(&self) -> bool {
        if !self.oneshots.is_empty() {
            return true;
        }
        self.coords.values().any(|st| {
            !st.broadcast_pending.is_empty() || !self.standing_targets(st).is_empty()
        })
    }

    /// Whether this process sits in an unperformed coordination state.
    pub fn has_pending_do(&self) -> bool {
        self.coords.values().any(|st| st.in_state && !st.performed)
    }

    pub fn in_state(&self, alpha: ActionId) -> bool {
        self.coords.get(&alpha).is_some_and(|st| st.in_state)
    }

    pub fn performed(&self, alpha: ActionId) -> bool {
        self.coords.get(&alpha).is_some_and(|st| st.performed)
    }
}
