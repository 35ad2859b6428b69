//! Core run model: events, histories, cuts, runs, points and the
//! well-formedness rules R1-R4 plus the bounded-fairness surrogate for R5.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::fdetect::FdReport;

/// Index of a process in the fixed set `Proc = {p0, .., p(n-1)}`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ProcessId(pub u16);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A coordination action. The (owner, tag) pair is globally unique, which
/// keeps the per-process action sets disjoint.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ActionId {
    pub owner: ProcessId,
    pub tag: u16,
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}.{}", self.owner.0, self.tag)
    }
}

/// Global time, i.e. an index into a run's cut sequence.
pub type Time = u32;

/// What a message says. Two transmissions with the same payload class count
/// as "the same message" for fairness purposes; the per-transmission sequence
/// number in [`MessageId`] keeps individual transmissions countable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum PayloadKind {
    /// An alpha-message: "perform this action".
    Alpha(ActionId),
    /// An acknowledgment of an alpha-message.
    Ack(ActionId),
    /// Suspicion gossip inserted by the weak-to-strong conversion.
    Gossip(u32),
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayloadKind::Alpha(a) => write!(f, "a{}.{}", a.owner.0, a.tag),
            PayloadKind::Ack(a) => write!(f, "k{}.{}", a.owner.0, a.tag),
            PayloadKind::Gossip(v) => write!(f, "g{v}"),
        }
    }
}

/// Identity of one transmission: payload class plus a per-class sequence
/// number counting repeated sends of the same message.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MessageId {
    pub src: ProcessId,
    pub dst: ProcessId,
    pub payload: PayloadKind,
    pub seq: u32,
}

/// One atomic occurrence at a process. The subject process is implied by the
/// history that holds the event.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Event {
    Send { to: ProcessId, msg: MessageId },
    Recv { from: ProcessId, msg: MessageId },
    Init(ActionId),
    Do(ActionId),
    Crash,
    FdReport(FdReport),
    FdReportPrimed(FdReport),
}

impl Event {
    pub fn is_fd_report(&self) -> bool {
        matches!(self, Event::FdReport(_) | Event::FdReportPrimed(_))
    }
}

/// An event together with the cut index at which it first appears.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TimedEvent {
    pub time: Time,
    pub event: Event,
}

/// Two history slices coincide as histories when their event sequences
/// match; landing times are bookkeeping, not part of the history.
pub fn history_eq(a: &[TimedEvent], b: &[TimedEvent]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.event == y.event)
}

pub fn history_hash(events: &[TimedEvent]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    events.len().hash(&mut h);
    for e in events {
        e.event.hash(&mut h);
    }
    h.finish()
}

/// Which continuations beyond the horizon remain possible for a run. Sound
/// FAIL verdicts for liveness need these certificates; a run loaded without
/// one stays conservatively open unless every process crashed.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Closeout {
    /// No continuation can append another Crash event.
    pub crashes: bool,
    /// No continuation can append another Init or Do event.
    pub actions: bool,
    /// No continuation can append another Send or Recv event.
    pub comm: bool,
    /// Suspicions of crashed processes persist in every future report.
    pub fd_stable: bool,
    /// The report stream is a running union (set by transforms).
    pub fd_monotone: bool,
}

impl Closeout {
    pub fn open() -> Self {
        Closeout::default()
    }

    pub fn all_closed() -> Self {
        Closeout { crashes: true, actions: true, comm: true, fd_stable: true, fd_monotone: false }
    }

    /// Permanence of suspicion is decidable at the horizon.
    pub fn fd_settled(&self) -> bool {
        self.fd_stable || self.fd_monotone
    }
}

/// A finite run: per-process event sequences with landing times, which
/// determine the full cut sequence (cut m holds each process's events with
/// time <= m).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Run {
    n: u16,
    horizon: Time,
    fairness_budget: u32,
    seed: u64,
    events: Vec<Vec<TimedEvent>>,
    pub closeout: Closeout,
}

impl Run {
    pub fn new(n: u16, horizon: Time, fairness_budget: u32, seed: u64) -> Self {
        Run {
            n,
            horizon,
            fairness_budget,
            seed,
            events: vec![Vec::new(); n as usize],
            closeout: Closeout::open(),
        }
    }

    pub fn n(&self) -> u16 {
        self.n
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn fairness_budget(&self) -> u32 {
        self.fairness_budget
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn procs(&self) -> impl Iterator<Item = ProcessId> {
        (0..self.n).map(ProcessId)
    }

    /// Appends an event at the given cut index. Times must arrive in
    /// nondecreasing order with at most one event per process per unit;
    /// violations are caught by `validate_run`, not here.
    pub fn append(&mut self, proc: ProcessId, time: Time, event: Event) {
        self.events[proc.index()].push(TimedEvent { time, event });
    }

    /// The full history of `proc` (its events through the horizon).
    pub fn full_history(&self, proc: ProcessId) -> &[TimedEvent] {
        &self.events[proc.index()]
    }

    /// `r_p(m)`: the prefix of `proc`'s history visible at cut `m`.
    pub fn history(&self, proc: ProcessId, m: Time) -> &[TimedEvent] {
        let evs = &self.events[proc.index()];
        let len = evs.partition_point(|e| e.time <= m);
        &evs[..len]
    }

    /// The cut at time `m` as a tuple of history slices.
    pub fn cut(&self, m: Time) -> Vec<&[TimedEvent]> {
        self.procs().map(|p| self.history(p, m)).collect()
    }

    pub fn crash_time(&self, proc: ProcessId) -> Option<Time> {
        self.events[proc.index()]
            .iter()
            .find(|e| matches!(e.event, Event::Crash))
            .map(|e| e.time)
    }

    pub fn crashed_by(&self, proc: ProcessId, m: Time) -> bool {
        self.crash_time(proc).is_some_and(|t| t <= m)
    }

    /// Processes with a Crash event in the cut at time `m`.
    pub fn crashed_set_at(&self, m: Time) -> BTreeSet<ProcessId> {
        self.procs().filter(|p| self.crashed_by(*p, m)).collect()
    }

    pub fn has_event_by(&self, proc: ProcessId, m: Time, wanted: &Event) -> bool {
        self.history(proc, m).iter().any(|e| &e.event == wanted)
    }

    /// Every ActionId that is initiated somewhere in this run.
    pub fn initiated_actions(&self) -> BTreeSet<ActionId> {
        let mut out = BTreeSet::new();
        for evs in &self.events {
            for e in evs {
                if let Event::Init(a) = e.event {
                    out.insert(a);
                }
            }
        }
        out
    }
}

/// `F(r)`: processes whose history contains a Crash event.
pub fn faulty_set(run: &Run) -> BTreeSet<ProcessId> {
    run.procs().filter(|p| run.crash_time(*p).is_some()).collect()
}

/// Index of a run inside a [`SystemOfRuns`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RunIdx(pub u32);

/// A point (r, m): a run within a system, at a time.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Point {
    pub run: RunIdx,
    pub time: Time,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Provenance {
    /// Every run of the generating context up to the horizon is present.
    Exhaustive,
    Sampled,
}

/// A finite set of runs sharing the same process count.
pub struct SystemOfRuns {
    pub n: u16,
    pub runs: Vec<Run>,
    pub provenance: Provenance,
    /// Crash window of the generating context, when known: crashes occur
    /// only at units < window. Bounds the branch times at which A1/A2
    /// extension instances are expressible.
    pub crash_window: Option<Time>,
    index: std::sync::OnceLock<IndistIndex>,
}

/// Groups points by (process, history) so that ~_p classes are O(1) lookups.
struct IndistIndex {
    /// per process: hash -> points whose p-history hashes there
    buckets: Vec<BTreeMap<u64, Vec<Point>>>,
}

impl SystemOfRuns {
    pub fn new(n: u16, runs: Vec<Run>, provenance: Provenance) -> Self {
        debug_assert!(runs.iter().all(|r| r.n() == n));
        SystemOfRuns { n, runs, provenance, crash_window: None, index: std::sync::OnceLock::new() }
    }

    pub fn with_crash_window(mut self, w: Time) -> Self {
        self.crash_window = Some(w);
        self
    }

    pub fn run(&self, idx: RunIdx) -> &Run {
        &self.runs[idx.0 as usize]
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.runs.iter().enumerate().flat_map(|(i, r)| {
            (0..=r.horizon()).map(move |m| Point { run: RunIdx(i as u32), time: m })
        })
    }

    pub fn point_count(&self) -> usize {
        self.runs.iter().map(|r| r.horizon() as usize + 1).sum()
    }

    pub fn history_at(&self, point: Point, p: ProcessId) -> &[TimedEvent] {
        self.run(point.run).history(p, point.time)
    }

    /// All actions initiated anywhere in the system.
    pub fn initiated_actions(&self) -> BTreeSet<ActionId> {
        let mut out = BTreeSet::new();
        for r in &self.runs {
            out.extend(r.initiated_actions());
        }
        out
    }

    fn index(&self) -> &IndistIndex {
        self.index.get_or_init(|| {
            let mut buckets: Vec<BTreeMap<u64, Vec<Point>>> =
                (0..self.n).map(|_| BTreeMap::new()).collect();
            for (i, run) in self.runs.iter().enumerate() {
                for p in run.procs() {
                    let evs = run.full_history(p);
                    // one bucket entry per distinct prefix; prefix lengths
                    // change exactly at event landing times
                    for m in 0..=run.horizon() {
                        let len = evs.partition_point(|e| e.time <= m);
                        let h = history_hash(&evs[..len]);
                        buckets[p.index()]
                            .entry(h)
                            .or_default()
                            .push(Point { run: RunIdx(i as u32), time: m });
                    }
                }
            }
            IndistIndex { buckets }
        })
    }

    /// The ~_p equivalence class of `point` within this system.
    pub fn indist_class(&self, p: ProcessId, point: Point) -> Vec<Point> {
        self.points_with_history(p, self.history_at(point, p))
    }

    /// All points whose p-history equals `hist` event-for-event.
    pub fn points_with_history(&self, p: ProcessId, hist: &[TimedEvent]) -> Vec<Point> {
        let h = history_hash(hist);
        let mut out = Vec::new();
        if let Some(cands) = self.index().buckets[p.index()].get(&h) {
            for &cand in cands {
                if history_eq(self.history_at(cand, p), hist) {
                    out.push(cand);
                }
            }
        }
        out
    }
}

/// `(r,m) ~_p (r',m')`: p's histories coincide event-for-event.
pub fn indistinguishable(sys: &SystemOfRuns, a: Point, b: Point, p: ProcessId) -> bool {
    history_eq(sys.history_at(a, p), sys.history_at(b, p))
}

/// `r2` extends `(r, m)`: the cut sequences agree at every time <= m.
/// Landing times matter here because cuts are compared, not just histories.
pub fn extends(run2: &Run, base: &Run, m: Time) -> bool {
    if run2.n() != base.n() {
        return false;
    }
    for p in base.procs() {
        let a = base.history(p, m);
        let b = run2.history(p, m);
        if a != b {
            return false;
        }
    }
    true
}

/// The well-formedness rules checked by [`validate_run`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    Fairness,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::R1 => write!(f, "R1"),
            Rule::R2 => write!(f, "R2"),
            Rule::R3 => write!(f, "R3"),
            Rule::R4 => write!(f, "R4"),
            Rule::Fairness => write!(f, "fairness"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RuleViolation {
    pub rule: Rule,
    pub proc: ProcessId,
    pub time: Time,
    pub detail: String,
}

/// Checks R1-R4 and the bounded-fairness surrogate for R5. Returns at most
/// one violation per rule, at the earliest offending (process, time); the
/// empty list means the run is well-formed.
pub fn validate_run(run: &Run) -> Vec<RuleViolation> {
    let mut out = Vec::new();

    // R1: the time-0 cut is empty.
    let mut r1: Option<(ProcessId, Time)> = None;
    for p in run.procs() {
        if let Some(e) = run.full_history(p).first() {
            if e.time == 0 && r1.is_none() {
                r1 = Some((p, 0));
            }
        }
    }
    if let Some((p, t)) = r1 {
        out.push(RuleViolation { rule: Rule::R1, proc: p, time: t, detail: "event in the empty initial cut".into() });
    }

    // R2: at most one event per process per unit, times within the horizon,
    // nondecreasing order of landing times.
    let mut r2: Option<(ProcessId, Time, String)> = None;
    for p in run.procs() {
        let evs = run.full_history(p);
        for (i, e) in evs.iter().enumerate() {
            let bad = if e.time > run.horizon() {
                Some(format!("event lands past the horizon at t={}", e.time))
            } else if i > 0 && evs[i - 1].time >= e.time {
                Some(format!("two events appended at t={}", e.time))
            } else {
                None
            };
            if let Some(d) = bad {
                if r2.as_ref().map_or(true, |(_, t, _)| e.time < *t) {
                    r2 = Some((p, e.time, d));
                }
                break;
            }
        }
    }
    if let Some((p, t, d)) = r2 {
        out.push(RuleViolation { rule: Rule::R2, proc: p, time: t, detail: d });
    }

    // R3: each Recv is matched, with multiplicity, by an earlier-or-equal Send.
    let mut sends: BTreeMap<MessageId, Vec<Time>> = BTreeMap::new();
    for p in run.procs() {
        for e in run.full_history(p) {
            if let Event::Send { msg, .. } = &e.event {
                sends.entry(*msg).or_default().push(e.time);
            }
        }
    }
    let mut r3: Option<(ProcessId, Time)> = None;
    for p in run.procs() {
        let mut taken: BTreeMap<MessageId, usize> = BTreeMap::new();
        for e in run.full_history(p) {
            if let Event::Recv { msg, .. } = &e.event {
                let k = taken.entry(*msg).or_insert(0);
                let ok = sends
                    .get(msg)
                    .is_some_and(|times| times.len() > *k && times[*k] <= e.time);
                if !ok && r3.as_ref().map_or(true, |(_, t)| e.time < *t) {
                    r3 = Some((p, e.time));
                }
                *k += 1;
            }
        }
    }
    if let Some((p, t)) = r3 {
        out.push(RuleViolation { rule: Rule::R3, proc: p, time: t, detail: "receive without a matching earlier send".into() });
    }

    // R4: a Crash event is the last event in its history.
    let mut r4: Option<(ProcessId, Time)> = None;
    for p in run.procs() {
        let evs = run.full_history(p);
        if let Some(pos) = evs.iter().position(|e| matches!(e.event, Event::Crash)) {
            if pos + 1 < evs.len() {
                let t = evs[pos + 1].time;
                if r4.as_ref().map_or(true, |(_, t0)| t < *t0) {
                    r4 = Some((p, t));
                }
            }
        }
    }
    if let Some((p, t)) = r4 {
        out.push(RuleViolation { rule: Rule::R4, proc: p, time: t, detail: "event appended after a crash".into() });
    }

    // Bounded fairness: a payload sent at least B times to a live process
    // must be received at least once by the horizon.
    let budget = run.fairness_budget() as usize;
    let mut class_sends: BTreeMap<(ProcessId, ProcessId, PayloadKind), Vec<Time>> = BTreeMap::new();
    let mut class_recvs: BTreeMap<(ProcessId, ProcessId, PayloadKind), usize> = BTreeMap::new();
    for p in run.procs() {
        for e in run.full_history(p) {
            match &e.event {
                Event::Send { msg, .. } => {
                    class_sends.entry((msg.src, msg.dst, msg.payload)).or_default().push(e.time)
                }
                Event::Recv { msg, .. } => {
                    *class_recvs.entry((msg.src, msg.dst, msg.payload)).or_default() += 1
                }
                _ => continue,
            }
        }
    }
    let faulty = faulty_set(run);
    let mut fair: Option<(ProcessId, Time)> = None;
    for (class, times) in &class_sends {
        let (_, dst, _) = class;
        if budget > 0
            && times.len() >= budget
            && !faulty.contains(dst)
            && class_recvs.get(class).copied().unwrap_or(0) == 0
        {
            let t = times[budget - 1];
            if fair.as_ref().map_or(true, |(_, t0)| t < *t0) {
                fair = Some((*dst, t));
            }
        }
    }
    if let Some((p, t)) = fair {
        out.push(RuleViolation { rule: Rule::Fairness, proc: p, time: t, detail: "budget exceeded with no delivery".into() });
    }

    out
}

/// Checks the action-initiation discipline the systems of interest assume:
/// an Init event appears only in its owner's history and at most once per run.
pub fn validate_action_discipline(run: &Run) -> Vec<(ProcessId, Time, String)> {
    let mut out = Vec::new();
    let mut seen: BTreeSet<ActionId> = BTreeSet::new();
    for p in run.procs() {
        for e in run.full_history(p) {
            if let Event::Init(a) = e.event {
                if a.owner != p {
                    out.push((p, e.time, format!("init of {a} outside its owner's history")));
                }
                if !seen.insert(a) {
                    out.push((p, e.time, format!("{a} initiated more than once")));
                }
            }
        }
    }
    out
}
