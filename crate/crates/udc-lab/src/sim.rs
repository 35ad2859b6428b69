//! Seeded deterministic scheduler. Per time unit every process appends at
//! most one event (R2); the slot goes, in fixed priority order, to a
//! scheduled crash, a scheduled init, an enabled Do, a pending delivery, or
//! alternately to a due oracle report and the next outbox send. Channel loss
//! is seeded (or fixed per link pattern in exhaustive mode) with a windowed
//! forcing rule that keeps the bounded-fairness budget unviolated by
//! construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fdetect::{build_plan, next_report, reports_settled_from, FdOracle, OracleKind};
use crate::model::{
    ActionId, Closeout, Event, MessageId, PayloadKind, ProcessId, Provenance, Run, SystemOfRuns,
    Time,
};
use crate::protocols::{FipLog, ProcessState, ProtocolKind};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum InitSchedule {
    Explicit(Vec<(Time, ActionId)>),
    /// A fresh action every `period` units, owners round-robin. The schedule
    /// conceptually continues past the horizon, so action closeout never
    /// certifies while initiators live.
    Recurring { period: Time },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ChannelKind {
    Reliable,
    FairLossy { drop_percent: u8 },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CrashPlan {
    Explicit(Vec<(Time, ProcessId)>),
    RandomUpTo(u32),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LinkMode {
    /// one schedule: all links honest-lossy by seed (no enumeration)
    Single,
    /// enumerate lossy subsets of processes; a lossy process's links drop
    PerProcess,
    /// enumerate lossy subsets of directed links
    PerLink,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ScenarioConfig {
    pub n: u16,
    pub t: u32,
    pub protocol: ProtocolKind,
    pub oracle: FdOracle,
    pub horizon: Time,
    pub budget: u32,
    pub seed: u64,
    pub init_schedule: InitSchedule,
    pub channel: ChannelKind,
    pub fip: bool,
    pub crash_plan: CrashPlan,
    pub broken_skip_ack: Option<ProcessId>,
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("bad config: {0}")]
    Invalid(String),
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("crash plan has {got} processes but the failure bound is t={bound}")]
    CrashBound { got: usize, bound: u32 },
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.budget < 2 {
            return bad("fairness budget must be at least 2".into());
        }
        if self.t > self.n as u32 {
            return bad(format!("t={} exceeds n={}", self.t, self.n));
        }
        if self.oracle.report_period == 0 {
            return bad("report_period must be at least 1".into());
        }
        match &self.init_schedule {
            InitSchedule::Explicit(entries) => {
                let mut seen = BTreeSet::new();
                let mut slots = BTreeSet::new();
                for (time, alpha) in entries {
                    if *time >= self.horizon {
                        return bad(format!("init of {alpha} at t={time} is past the horizon"));
                    }
                    if alpha.owner.0 >= self.n {
                        return bad(format!("init owner {} out of range", alpha.owner));
                    }
                    if !seen.insert(*alpha) {
                        return bad(format!("{alpha} initiated more than once"));
                    }
                    if !slots.insert((*time, alpha.owner)) {
                        return bad(format!(
                            "two inits scheduled for {} at t={time}",
                            alpha.owner
                        ));
                    }
                }
            }
            InitSchedule::Recurring { period } => {
                if *period == 0 {
                    return bad("recurring init period must be at least 1".into());
                }
            }
        }
        match &self.crash_plan {
            CrashPlan::Explicit(entries) => {
                let procs: BTreeSet<ProcessId> = entries.iter().map(|(_, p)| *p).collect();
                if procs.len() as u32 > self.t {
                    return Err(ConfigError::CrashBound { got: procs.len(), bound: self.t });
                }
                for (time, p) in entries {
                    if p.0 >= self.n {
                        return bad(format!("crash of {p} out of range"));
                    }
                    if *time >= self.horizon {
                        return bad(format!("crash of {p} at t={time} is past the horizon"));
                    }
                }
            }
            CrashPlan::RandomUpTo(k) => {
                if *k > self.t {
                    return Err(ConfigError::CrashBound { got: *k as usize, bound: self.t });
                }
            }
        }
        if let Some(p) = self.broken_skip_ack {
            if p.0 >= self.n {
                return bad(format!("broken_skip_ack {p} out of range"));
            }
        }
        if let ChannelKind::FairLossy { drop_percent } = self.channel {
            if drop_percent > 100 {
                return bad("drop_percent must be at most 100".into());
            }
        }
        Ok(())
    }

    /// Materializes the init schedule: (unit, action), sorted by unit.
    pub fn init_entries(&self) -> Vec<(Time, ActionId)> {
        match &self.init_schedule {
            InitSchedule::Explicit(entries) => {
                let mut v = entries.clone();
                v.sort();
                v
            }
            InitSchedule::Recurring { period } => {
                let mut v = Vec::new();
                let mut k: u32 = 0;
                loop {
                    let time = k * period;
                    if time >= self.horizon {
                        break;
                    }
                    v.push((time, ActionId { owner: ProcessId((k as u16) % self.n), tag: k as u16 }));
                    k += 1;
                }
                v
            }
        }
    }
}

/// Units an overdue report may wait behind deliveries before preempting.
const REPORT_PREEMPT_GAP: Time = 3;

/// One message on the wire.
#[derive(Clone, Debug)]
struct Transmission {
    id: MessageId,
    fip: Option<FipLog>,
    available_from: Time,
    forced: bool,
}

#[derive(Clone, Copy, Debug, Default)]
struct ClassState {
    total_sends: u32,
    window_sends: u32,
}

#[derive(Clone, Debug)]
enum LossPolicy {
    Reliable,
    Seeded { drop_percent: u8, rng: ChaCha8Rng },
    Links { lossy: Vec<Vec<bool>> },
}

struct Channel {
    queues: Vec<VecDeque<Transmission>>,
    classes: HashMap<(ProcessId, ProcessId, PayloadKind), ClassState>,
    cap: u32,
    policy: LossPolicy,
    drops: u32,
    forced: u32,
}

impl Channel {
    fn new(n: u16, budget: u32, policy: LossPolicy) -> Self {
        Channel {
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            classes: HashMap::new(),
            cap: budget.saturating_sub(1).max(1),
            policy,
            drops: 0,
            forced: 0,
        }
    }

    /// The fairness cap: a payload class with `cap` undelivered sends to a
    /// live destination blocks further sends until a delivery resets it.
    fn blocked(&self, src: ProcessId, dst: ProcessId, payload: PayloadKind, dst_alive: bool) -> bool {
        if !dst_alive {
            return false;
        }
        self.classes
            .get(&(src, dst, payload))
            .is_some_and(|c| c.window_sends >= self.cap)
    }

    fn on_send(
        &mut self,
        src: ProcessId,
        dst: ProcessId,
        payload: PayloadKind,
        fip: Option<FipLog>,
        now: Time,
        dst_alive: bool,
    ) -> MessageId {
        let class = self.classes.entry((src, dst, payload)).or_default();
        class.total_sends += 1;
        class.window_sends += 1;
        let id = MessageId { src, dst, payload, seq: class.total_sends };
        if !dst_alive {
            self.drops += 1;
            return id;
        }
        let forced = class.window_sends >= self.cap;
        let deliver = forced
            || match &mut self.policy {
                LossPolicy::Reliable => true,
                LossPolicy::Seeded { drop_percent, rng } => {
                    !rng.random_bool(f64::from(*drop_percent) / 100.0)
                }
                LossPolicy::Links { lossy } => !lossy[src.index()][dst.index()],
            };
        if deliver {
            if forced {
                self.forced += 1;
            }
            self.queues[dst.index()].push_back(Transmission {
                id,
                fip,
                available_from: now + 1,
                forced,
            });
        } else {
            self.drops += 1;
        }
        id
    }

    fn next_delivery(&mut self, dst: ProcessId, now: Time) -> Option<Transmission> {
        let q = &mut self.queues[dst.index()];
        // forced deliveries preempt queue order
        if let Some(pos) = q.iter().position(|t| t.forced && t.available_from <= now) {
            let tr = q.remove(pos).expect("position valid");
            self.reset_window(&tr.id);
            return Some(tr);
        }
        if q.front().is_some_and(|t| t.available_from <= now) {
            let tr = q.pop_front().expect("front exists");
            self.reset_window(&tr.id);
            return Some(tr);
        }
        None
    }

    fn reset_window(&mut self, id: &MessageId) {
        if let Some(c) = self.classes.get_mut(&(id.src, id.dst, id.payload)) {
            c.window_sends = 0;
        }
    }

    /// A crash severs both directions: pending deliveries to the process are
    /// discarded and its own in-flight messages disappear with it.
    fn purge(&mut self, crashed: ProcessId) {
        self.queues[crashed.index()].clear();
        for q in &mut self.queues {
            q.retain(|t| t.id.src != crashed);
        }
    }

    fn is_empty(&self) -> bool {
        self.queues.iter().all(|q| q.is_empty())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimStats {
    pub drops: u32,
    pub forced_deliveries: u32,
}

/// Fully resolved schedule inputs: a pure function of the config.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub crash_times: Vec<Option<Time>>,
    pub inits: Vec<(Time, ActionId)>,
}

fn resolve_crashes(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Option<Time>> {
    let mut times = vec![None; config.n as usize];
    match &config.crash_plan {
        CrashPlan::Explicit(entries) => {
            for (time, p) in entries {
                let slot = &mut times[p.index()];
                if slot.is_none() {
                    *slot = Some(*time);
                }
            }
        }
        CrashPlan::RandomUpTo(k) => {
            let count = rng.random_range(0..=*k);
            let mut pool: Vec<ProcessId> = (0..config.n).map(ProcessId).collect();
            for _ in 0..count {
                if pool.is_empty() {
                    break;
                }
                let idx = rng.random_range(0..pool.len());
                let p = pool.swap_remove(idx);
                times[p.index()] = Some(rng.random_range(0..config.horizon));
            }
        }
    }
    times
}

pub fn schedule_of(config: &ScenarioConfig) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9e3779b97f4a7c15));
    Schedule { crash_times: resolve_crashes(config, &mut rng), inits: config.init_entries() }
}

/// Runs one scenario deterministically. The same config always yields a
/// byte-identical trace.
pub fn simulate(config: &ScenarioConfig) -> Result<Run, ConfigError> {
    simulate_with_stats(config).map(|(run, _)| run)
}

pub fn simulate_with_stats(config: &ScenarioConfig) -> Result<(Run, SimStats), ConfigError> {
    config.validate()?;
    let schedule = schedule_of(config);
    let policy = match config.channel {
        ChannelKind::Reliable => LossPolicy::Reliable,
        ChannelKind::FairLossy { drop_percent } => LossPolicy::Seeded {
            drop_percent,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5bd1e995)),
        },
    };
    Ok(run_schedule(config, &schedule, policy))
}

/// Simulates one run with policy and crash schedule fixed. The core loop all
/// generation paths share.
fn run_schedule(config: &ScenarioConfig, schedule: &Schedule, policy: LossPolicy) -> (Run, SimStats) {
    let n = config.n;
    let horizon = config.horizon;
    let mut run = Run::new(n, horizon, config.budget, config.seed);
    let mut channel = Channel::new(n, config.budget, policy);
    let mut states: Vec<ProcessState> = (0..n)
        .map(|i| {
            ProcessState::new(
                ProcessId(i),
                n,
                config.protocol,
                config.fip,
                config.broken_skip_ack,
            )
        })
        .collect();
    let oracle_plan = build_plan(
        &config.oracle,
        n,
        horizon,
        &schedule.crash_times,
        config.seed,
    );
    let mut crashed: Vec<bool> = vec![false; n as usize];
    let mut last_report_land: Vec<Option<Time>> = vec![None; n as usize];
    let mut report_count: Vec<u32> = vec![0; n as usize];
    let mut last_bg_was_report: Vec<bool> = vec![false; n as usize];
    let mut init_queue: VecDeque<(Time, ActionId)> = schedule.inits.iter().copied().collect();

    for unit in 0..horizon {
        let crashing: BTreeSet<ProcessId> = (0..n)
            .map(ProcessId)
            .filter(|p| !crashed[p.index()] && schedule.crash_times[p.index()] == Some(unit))
            .collect();
        // reports landing at cut unit+1 describe that cut's crash set, so
        // crashes landing this very unit are included (the oracle is an
        // omniscient observer of the cut its report lands in)
        let crashed_at_landing: BTreeSet<ProcessId> = (0..n)
            .map(ProcessId)
            .filter(|p| crashed[p.index()] || crashing.contains(p))
            .collect();
        // init directives due this unit, one per owner slot
        let mut inits_now: BTreeMap<ProcessId, ActionId> = BTreeMap::new();
        while let Some((t, alpha)) = init_queue.front().copied() {
            if t > unit {
                break;
            }
            init_queue.pop_front();
            if t == unit && !crashed[alpha.owner.index()] && !crashing.contains(&alpha.owner) {
                inits_now.entry(alpha.owner).or_insert(alpha);
            }
        }

        for pi in 0..n {
            let p = ProcessId(pi);
            if crashed[p.index()] {
                continue;
            }
            let land = unit + 1;
            if crashing.contains(&p) {
                run.append(p, land, Event::Crash);
                continue;
            }
            let state = &mut states[p.index()];
            if let Some(alpha) = inits_now.get(&p) {
                state.on_init(*alpha).expect("schedule validated");
                run.append(p, land, Event::Init(*alpha));
                state.note_own_event();
                continue;
            }
            if let Some(alpha) = state.next_do() {
                run.append(p, land, Event::Do(alpha));
                state.note_own_event();
                continue;
            }
            // an overdue report preempts deliveries so that suspicion windows
            // cannot be starved by bursts of traffic; the staleness of any
            // live process's report stream is bounded by the preempt gap
            let report_gap = last_report_land[p.index()].map_or(land, |t| land - t);
            let report_due = report_gap >= config.oracle.report_period;
            let report_overdue = report_gap >= config.oracle.report_period + REPORT_PREEMPT_GAP;
            if !report_overdue {
                if let Some(tr) = channel.next_delivery(p, unit) {
                    state.on_deliver(tr.id.src, tr.id.payload, tr.fip.as_ref());
                    run.append(p, land, Event::Recv { from: tr.id.src, msg: tr.id });
                    state.note_own_event();
                    continue;
                }
            }
            let alive = |q: ProcessId, crashed: &[bool], crashing: &BTreeSet<ProcessId>| {
                !crashed[q.index()] && !crashing.contains(&q)
            };
            let crashed_snapshot = crashed.clone();
            let crashing_snapshot = crashing.clone();
            let blocked = |dst: ProcessId, payload: PayloadKind| {
                channel.blocked(p, dst, payload, alive(dst, &crashed_snapshot, &crashing_snapshot))
            };
            let want_send = {
                // peek: a candidate exists that the channel does not block
                let mut probe = state.clone();
                probe.next_send(&blocked).is_some()
            };
            let do_report = report_due && (!want_send || !last_bg_was_report[p.index()]);
            if do_report {
                let report = next_report(
                    &config.oracle,
                    &oracle_plan,
                    p,
                    unit,
                    &crashed_at_landing,
                    &schedule.crash_times,
                    report_count[p.index()],
                );
                report_count[p.index()] += 1;
                last_report_land[p.index()] = Some(land);
                last_bg_was_report[p.index()] = true;
                state.on_report(&report);
                run.append(p, land, Event::FdReport(report));
                state.note_own_event();
                continue;
            }
            if want_send {
                let (dst, payload) =
                    state.next_send(&blocked).expect("probe found a candidate");
                let fip = state.fip_snapshot();
                let dst_alive = alive(dst, &crashed_snapshot, &crashing_snapshot);
                let id = channel.on_send(p, dst, payload, fip, unit, dst_alive);
                last_bg_was_report[p.index()] = false;
                run.append(p, land, Event::Send { to: dst, msg: id });
                state.note_own_event();
            }
        }

        for p in crashing {
            crashed[p.index()] = true;
            channel.purge(p);
        }
    }

    let closeout = compute_closeout(
        config,
        schedule,
        &run,
        &states,
        &channel,
        &oracle_plan,
        &last_report_land,
    );
    run.closeout = closeout;
    let stats = SimStats { drops: channel.drops, forced_deliveries: channel.forced };
    (run, stats)
}

fn compute_closeout(
    config: &ScenarioConfig,
    schedule: &Schedule,
    run: &Run,
    states: &[ProcessState],
    channel: &Channel,
    oracle_plan: &crate::fdetect::OraclePlan,
    last_report_land: &[Option<Time>],
) -> Closeout {
    let n = config.n;
    let faulty = crate::model::faulty_set(run);
    let all_crashed = faulty.len() == n as usize;
    if all_crashed {
        return Closeout { crashes: true, actions: true, comm: true, fd_stable: true, fd_monotone: false };
    }
    // crash plans resolve within the horizon; the context allows no later crash
    let crashes = true;

    let live = |p: &ProcessId| !faulty.contains(p);
    let schedule_done = match &config.init_schedule {
        InitSchedule::Explicit(_) => true, // validated within horizon
        InitSchedule::Recurring { .. } => false,
    };
    let no_pending_do = (0..n)
        .map(ProcessId)
        .filter(live)
        .all(|p| !states[p.index()].has_pending_do());
    // could a live process still be pulled into a coordination state?
    let initiated = run.initiated_actions();
    let no_awakening = (0..n).map(ProcessId).filter(live).all(|p| {
        initiated.iter().all(|alpha| {
            if states[p.index()].in_state(*alpha) {
                return true;
            }
            let in_flight = channel.queues[p.index()]
                .iter()
                .any(|t| t.id.payload == PayloadKind::Alpha(*alpha));
            let sendable = (0..n).map(ProcessId).filter(live).any(|q| {
                q != p && {
                    let mut probe = states[q.index()].clone();
                    probe
                        .next_send(&|dst, payload| {
                            !(dst == p && payload == PayloadKind::Alpha(*alpha))
                        })
                        .is_some()
                }
            });
            !in_flight && !sendable
        })
    });
    let actions = schedule_done && no_pending_do && no_awakening;

    let no_sends_pending = (0..n)
        .map(ProcessId)
        .filter(live)
        .all(|p| !states[p.index()].has_pending_sends());
    let comm = actions && channel.is_empty() && no_sends_pending;

    // the streams are settled once the oracle's content is final and every
    // live process has emitted a report carrying that final content
    let fd_stable = match reports_settled_from(&config.oracle, oracle_plan, &schedule.crash_times)
    {
        Some(from) => (0..n).map(ProcessId).filter(live).all(|p| {
            last_report_land[p.index()].is_some_and(|t| t >= from)
        }),
        None => false,
    };
    Closeout { crashes, actions, comm, fd_stable, fd_monotone: false }
}

// ---------------------------------------------------------------------------
// system generation

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FamilyConfig {
    pub base: ScenarioConfig,
    pub exhaustive: bool,
    pub closure_a1: bool,
    pub closure_a2: bool,
    pub closure_a5: bool,
    pub link_mode: LinkMode,
    /// crashes may occur only at units < crash_window
    pub crash_window: Time,
    /// sampled-system size when not exhaustive
    pub sample_runs: u32,
}

impl FamilyConfig {
    pub fn sampled(base: ScenarioConfig) -> Self {
        let w = base.horizon;
        FamilyConfig {
            base,
            exhaustive: false,
            closure_a1: false,
            closure_a2: false,
            closure_a5: false,
            link_mode: LinkMode::Single,
            crash_window: w,
            sample_runs: 1,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum GenError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("exhaustive size guard exceeded: {0}")]
    TooLarge(String),
    #[error("{0} requires exhaustive generation")]
    NeedsExhaustive(String),
}

fn link_patterns(n: u16, mode: LinkMode) -> Vec<Vec<Vec<bool>>> {
    let make = |lossy_link: &dyn Fn(usize, usize) -> bool| -> Vec<Vec<bool>> {
        (0..n as usize)
            .map(|s| (0..n as usize).map(|d| s != d && lossy_link(s, d)).collect())
            .collect()
    };
    match mode {
        LinkMode::Single => vec![make(&|_, _| true)],
        LinkMode::PerProcess => {
            let mut out = Vec::new();
            for mask in 0u32..(1 << n) {
                out.push(make(&|s, d| mask & (1 << s) != 0 || mask & (1 << d) != 0));
            }
            out
        }
        LinkMode::PerLink => {
            let links: Vec<(usize, usize)> = (0..n as usize)
                .flat_map(|s| (0..n as usize).filter(move |d| *d != s).map(move |d| (s, d)))
                .collect();
            let mut out = Vec::new();
            for mask in 0u64..(1 << links.len()) {
                out.push(make(&|s, d| {
                    links
                        .iter()
                        .position(|l| *l == (s, d))
                        .is_some_and(|i| mask & (1 << i) != 0)
                }));
            }
            out
        }
    }
}

/// All crash schedules with at most t crashes, each at a unit inside the
/// crash window.
fn staged_crash_schedules(n: u16, t: u32, window: Time) -> Vec<Vec<Option<Time>>> {
    let mut out = Vec::new();
    let mut current: Vec<Option<Time>> = vec![None; n as usize];
    fn go(
        i: usize,
        n: usize,
        t: u32,
        window: Time,
        used: u32,
        current: &mut Vec<Option<Time>>,
        out: &mut Vec<Vec<Option<Time>>>,
    ) {
        if i == n {
            out.push(current.clone());
            return;
        }
        go(i + 1, n, t, window, used, current, out);
        if used < t {
            for u in 0..window {
                current[i] = Some(u);
                go(i + 1, n, t, window, used + 1, current, out);
                current[i] = None;
            }
        }
    }
    go(0, n as usize, t, window, 0, &mut current, &mut out);
    out
}

fn run_fingerprint(run: &Run) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in run.procs() {
        for e in run.full_history(p) {
            e.hash(&mut h);
        }
        u64::MAX.hash(&mut h);
    }
    h.finish()
}

/// Generates a system of runs. Exhaustive mode enumerates the product of
/// link patterns and staged crash schedules for the configured context;
/// closure flags assert (or, for A5 on sampled systems, add) the required
/// runs.
pub fn generate_system(family: &FamilyConfig) -> Result<SystemOfRuns, GenError> {
    family.base.validate()?;
    if family.crash_window == 0 || family.crash_window > family.base.horizon {
        return Err(GenError::Config(ConfigError::Invalid(
            "crash_window must be in 1..=horizon".into(),
        )));
    }
    if !family.exhaustive {
        if family.closure_a1 || family.closure_a2 {
            return Err(GenError::NeedsExhaustive("A1/A2 closure".into()));
        }
        return generate_sampled(family);
    }
    if family.base.n > 3 || family.base.horizon > 12 {
        return Err(GenError::TooLarge(format!(
            "exhaustive mode is guarded to n <= 3 and H <= 12, got n={} H={}",
            family.base.n, family.base.horizon
        )));
    }
    if !matches!(family.base.channel, ChannelKind::FairLossy { .. }) {
        return Err(GenError::Config(ConfigError::Invalid(
            "exhaustive generation models the fair-lossy channel".into(),
        )));
    }
    if family.base.oracle.needs_lookahead() {
        return Err(GenError::Config(ConfigError::Invalid(format!(
            "oracle {:?} correlates with the whole run and cannot back an exhaustive context",
            family.base.oracle.kind
        ))));
    }

    let patterns = link_patterns(family.base.n, family.link_mode);
    let schedules = staged_crash_schedules(family.base.n, family.base.t, family.crash_window);
    let total = patterns.len() * schedules.len();
    if total > 300_000 {
        return Err(GenError::TooLarge(format!("{total} schedule combinations")));
    }

    let jobs: Vec<(usize, usize)> = (0..patterns.len())
        .flat_map(|a| (0..schedules.len()).map(move |b| (a, b)))
        .collect();
    let runs: Vec<Run> = crate::par::map_indexed(jobs.len(), |j| {
        let (a, b) = jobs[j];
        let schedule = Schedule {
            crash_times: schedules[b].clone(),
            inits: family.base.init_entries(),
        };
        let policy = LossPolicy::Links { lossy: patterns[a].clone() };
        run_schedule(&family.base, &schedule, policy).0
    });

    let mut seen: HashSet<u64> = HashSet::new();
    let mut unique = Vec::new();
    for run in runs {
        if seen.insert(run_fingerprint(&run)) {
            unique.push(run);
        }
    }

    if family.closure_a5 {
        let realized: HashSet<BTreeSet<ProcessId>> =
            unique.iter().map(crate::model::faulty_set).collect();
        for mask in 0u32..(1 << family.base.n) {
            if mask.count_ones() > family.base.t {
                continue;
            }
            let s: BTreeSet<ProcessId> = (0..family.base.n)
                .filter(|i| mask & (1 << i) != 0)
                .map(ProcessId)
                .collect();
            debug_assert!(realized.contains(&s), "exhaustive enumeration realizes F={s:?}");
        }
    }

    Ok(SystemOfRuns::new(family.base.n, unique, Provenance::Exhaustive)
        .with_crash_window(family.crash_window))
}

fn generate_sampled(family: &FamilyConfig) -> Result<SystemOfRuns, GenError> {
    let mut runs = Vec::new();
    for i in 0..family.sample_runs.max(1) {
        let mut cfg = family.base.clone();
        cfg.seed = family.base.seed.wrapping_add(u64::from(i) * 0x9e3779b9);
        runs.push(simulate(&cfg)?);
    }
    if family.closure_a5 {
        // canonical runs realizing every F with |F| <= t
        for mask in 0u32..(1 << family.base.n) {
            if mask.count_ones() > family.base.t {
                continue;
            }
            let procs: Vec<ProcessId> = (0..family.base.n)
                .filter(|i| mask & (1 << i) != 0)
                .map(ProcessId)
                .collect();
            let mut cfg = family.base.clone();
            cfg.seed = family.base.seed.wrapping_add(0xa5a5_a5a5).wrapping_add(u64::from(mask));
            cfg.crash_plan = CrashPlan::Explicit(
                procs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| ((i as Time).min(family.crash_window - 1), *p))
                    .collect(),
            );
            runs.push(simulate(&cfg)?);
        }
    }
    Ok(SystemOfRuns::new(family.base.n, runs, Provenance::Sampled)
        .with_crash_window(family.crash_window))
}

// ---------------------------------------------------------------------------
// flat key=value config files

fn parse_time_action(s: &str) -> Result<(Time, ActionId), String> {
    let (t, a) = s.split_once(':').ok_or_else(|| format!("expected time:action, got {s:?}"))?;
    Ok((
        t.trim().parse().map_err(|_| format!("bad time in {s:?}"))?,
        crate::formula::parse_action(a.trim())?,
    ))
}

fn parse_time_proc(s: &str) -> Result<(Time, ProcessId), String> {
    let (t, p) = s.split_once(':').ok_or_else(|| format!("expected time:proc, got {s:?}"))?;
    Ok((
        t.trim().parse().map_err(|_| format!("bad time in {s:?}"))?,
        crate::formula::parse_process(p.trim())?,
    ))
}

fn parse_oracle(value: &str) -> Result<OracleKind, String> {
    use crate::fdetect::AdversarySpec;
    if let Some(rest) = value.strip_prefix("trivial-t-useful:") {
        return Ok(OracleKind::TrivialTUseful(
            rest.parse().map_err(|_| format!("bad t in {value:?}"))?,
        ));
    }
    if let Some(rest) = value.strip_prefix("adversarial-suspect-live:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("expected reporter,target,time in {value:?}"));
        }
        return Ok(OracleKind::AdversarialO(AdversarySpec::SuspectLive {
            reporter: crate::formula::parse_process(parts[0].trim())?,
            target: crate::formula::parse_process(parts[1].trim())?,
            at: parts[2].trim().parse().map_err(|_| format!("bad time in {value:?}"))?,
        }));
    }
    if let Some(rest) = value.strip_prefix("adversarial-never-suspect:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(format!("expected reporter,target in {value:?}"));
        }
        return Ok(OracleKind::AdversarialO(AdversarySpec::NeverSuspect {
            reporter: crate::formula::parse_process(parts[0].trim())?,
            target: crate::formula::parse_process(parts[1].trim())?,
        }));
    }
    match value {
        "perfect" => Ok(OracleKind::PerfectO),
        "strong" => Ok(OracleKind::StrongO),
        "weak" => Ok(OracleKind::WeakO),
        "impermanent-strong" => Ok(OracleKind::ImpermanentStrongO),
        "impermanent-weak" => Ok(OracleKind::ImpermanentWeakO),
        "exact-generalized" => Ok(OracleKind::ExactGeneralizedO),
        "adversarial-suspect-everyone" => {
            Ok(OracleKind::AdversarialO(AdversarySpec::SuspectEveryone))
        }
        other => Err(format!("unknown oracle {other:?}")),
    }
}

/// Parses the flat `key = value` scenario format. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<FamilyConfig, ConfigError> {
    let mut base = ScenarioConfig {
        n: 2,
        t: 0,
        protocol: ProtocolKind::NUdcGossip,
        oracle: FdOracle::new(OracleKind::PerfectO),
        horizon: 20,
        budget: 8,
        seed: 0,
        init_schedule: InitSchedule::Explicit(Vec::new()),
        channel: ChannelKind::FairLossy { drop_percent: 50 },
        fip: false,
        crash_plan: CrashPlan::Explicit(Vec::new()),
        broken_skip_ack: None,
    };
    let mut exhaustive = false;
    let mut closure_a1 = false;
    let mut closure_a2 = false;
    let mut closure_a5 = false;
    let mut link_mode = LinkMode::PerProcess;
    let mut crash_window: Option<Time> = None;
    let mut sample_runs: u32 = 1;
    let mut t_bound: Option<u32> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
            line: lineno + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let perr = |msg: String| ConfigError::Parse { line: lineno + 1, msg };
        let parse_u32 =
            |v: &str| v.parse::<u32>().map_err(|_| perr(format!("bad number {v:?}")));
        match key {
            "n" => base.n = value.parse().map_err(|_| perr(format!("bad n {value:?}")))?,
            "t" => t_bound = Some(parse_u32(value)?),
            "protocol" => {
                base.protocol = match value {
                    "nudc-gossip" => ProtocolKind::NUdcGossip,
                    "udc-reliable" => ProtocolKind::UdcReliable,
                    "udc-strong-fd" => ProtocolKind::UdcStrongFd,
                    "udc-t-useful" => ProtocolKind::UdcTUseful(0),
                    other => return Err(perr(format!("unknown protocol {other:?}"))),
                }
            }
            "oracle" => base.oracle.kind = parse_oracle(value).map_err(perr)?,
            "oracle_seed" => {
                base.oracle.seed =
                    value.parse().map_err(|_| perr(format!("bad oracle_seed {value:?}")))?
            }
            "report_period" => base.oracle.report_period = parse_u32(value)?,
            "horizon" => base.horizon = parse_u32(value)?,
            "budget" => base.budget = parse_u32(value)?,
            "seed" => {
                base.seed = value.parse().map_err(|_| perr(format!("bad seed {value:?}")))?
            }
            "channel" => {
                base.channel = match value {
                    "reliable" => ChannelKind::Reliable,
                    "fair-lossy" => ChannelKind::FairLossy { drop_percent: 50 },
                    other => return Err(perr(format!("unknown channel {other:?}"))),
                }
            }
            "drop_percent" => {
                let pct = parse_u32(value)? as u8;
                base.channel = ChannelKind::FairLossy { drop_percent: pct };
            }
            "fip" => {
                base.fip = value.parse().map_err(|_| perr(format!("bad fip {value:?}")))?
            }
            "init" => {
                if let Some(period) = value.strip_prefix("recurring:") {
                    base.init_schedule = InitSchedule::Recurring {
                        period: period
                            .parse()
                            .map_err(|_| perr(format!("bad period {period:?}")))?,
                    };
                } else if value == "none" {
                    base.init_schedule = InitSchedule::Explicit(Vec::new());
                } else {
                    let mut entries = Vec::new();
                    for part in value.split(';') {
                        entries.push(parse_time_action(part.trim()).map_err(perr)?);
                    }
                    base.init_schedule = InitSchedule::Explicit(entries);
                }
            }
            "crash" => {
                if value == "none" {
                    base.crash_plan = CrashPlan::Explicit(Vec::new());
                } else if let Some(k) = value.strip_prefix("random:") {
                    base.crash_plan = CrashPlan::RandomUpTo(
                        k.parse().map_err(|_| perr(format!("bad bound {k:?}")))?,
                    );
                } else if let Some(list) = value.strip_prefix("explicit:") {
                    let mut entries = Vec::new();
                    for part in list.split(';') {
                        entries.push(parse_time_proc(part.trim()).map_err(perr)?);
                    }
                    base.crash_plan = CrashPlan::Explicit(entries);
                } else {
                    return Err(perr(format!("unknown crash plan {value:?}")));
                }
            }
            "broken_skip_ack" => {
                base.broken_skip_ack =
                    Some(crate::formula::parse_process(value).map_err(perr)?)
            }
            "exhaustive" => {
                exhaustive =
                    value.parse().map_err(|_| perr(format!("bad exhaustive {value:?}")))?
            }
            "exhaustive_links" => {
                link_mode = match value {
                    "single" => LinkMode::Single,
                    "per-process" => LinkMode::PerProcess,
                    "per-link" => LinkMode::PerLink,
                    other => return Err(perr(format!("unknown link mode {other:?}"))),
                }
            }
            "crash_window" => crash_window = Some(parse_u32(value)?),
            "closure_a1" => {
                closure_a1 =
                    value.parse().map_err(|_| perr(format!("bad closure_a1 {value:?}")))?
            }
            "closure_a2" => {
                closure_a2 =
                    value.parse().map_err(|_| perr(format!("bad closure_a2 {value:?}")))?
            }
            "closure_a5" => {
                closure_a5 =
                    value.parse().map_err(|_| perr(format!("bad closure_a5 {value:?}")))?
            }
            "sample_runs" => sample_runs = parse_u32(value)?,
            other => {
                return Err(ConfigError::UnknownKey { line: lineno + 1, key: other.to_string() })
            }
        }
    }
    base.t = t_bound.unwrap_or(base.n as u32);
    if let ProtocolKind::UdcTUseful(_) = base.protocol {
        base.protocol = ProtocolKind::UdcTUseful(base.t);
    }
    base.validate()?;
    let crash_window = crash_window.unwrap_or(base.horizon);
    Ok(FamilyConfig {
        base,
        exhaustive,
        closure_a1,
        closure_a2,
        closure_a5,
        link_mode,
        crash_window,
        sample_runs,
    })
}

/// Renders a config back to the flat format (used by manifests).
pub fn render_config(family: &FamilyConfig) -> String {
    let b = &family.base;
    let mut out = String::new();
    out.push_str(&format!("n = {}\n", b.n));
    out.push_str(&format!("t = {}\n", b.t));
    out.push_str(&format!("protocol = {}\n", b.protocol.name()));
    let oracle = match &b.oracle.kind {
        OracleKind::PerfectO => "perfect".to_string(),
        OracleKind::StrongO => "strong".to_string(),
        OracleKind::WeakO => "weak".to_string(),
        OracleKind::ImpermanentStrongO => "impermanent-strong".to_string(),
        OracleKind::ImpermanentWeakO => "impermanent-weak".to_string(),
        OracleKind::TrivialTUseful(t) => format!("trivial-t-useful:{t}"),
        OracleKind::ExactGeneralizedO => "exact-generalized".to_string(),
        OracleKind::AdversarialO(spec) => match spec {
            crate::fdetect::AdversarySpec::SuspectLive { reporter, target, at } => {
                format!("adversarial-suspect-live:{reporter},{target},{at}")
            }
            crate::fdetect::AdversarySpec::NeverSuspect { reporter, target } => {
                format!("adversarial-never-suspect:{reporter},{target}")
            }
            crate::fdetect::AdversarySpec::SuspectEveryone => {
                "adversarial-suspect-everyone".to_string()
            }
        },
    };
    out.push_str(&format!("oracle = {oracle}\n"));
    out.push_str(&format!("oracle_seed = {}\n", b.oracle.seed));
    out.push_str(&format!("report_period = {}\n", b.oracle.report_period));
    out.push_str(&format!("horizon = {}\n", b.horizon));
    out.push_str(&format!("budget = {}\n", b.budget));
    out.push_str(&format!("seed = {}\n", b.seed));
    match b.channel {
        ChannelKind::Reliable => out.push_str("channel = reliable\n"),
        ChannelKind::FairLossy { drop_percent } => {
            out.push_str("channel = fair-lossy\n");
            out.push_str(&format!("drop_percent = {drop_percent}\n"));
        }
    }
    out.push_str(&format!("fip = {}\n", b.fip));
    match &b.init_schedule {
        InitSchedule::Explicit(entries) if entries.is_empty() => out.push_str("init = none\n"),
        InitSchedule::Explicit(entries) => {
            let parts: Vec<String> =
                entries.iter().map(|(t, a)| format!("{t}:{a}")).collect();
            out.push_str(&format!("init = {}\n", parts.join(";")));
        }
        InitSchedule::Recurring { period } => {
            out.push_str(&format!("init = recurring:{period}\n"))
        }
    }
    match &b.crash_plan {
        CrashPlan::Explicit(entries) if entries.is_empty() => out.push_str("crash = none\n"),
        CrashPlan::Explicit(entries) => {
            let parts: Vec<String> =
                entries.iter().map(|(t, p)| format!("{t}:{p}")).collect();
            out.push_str(&format!("crash = explicit:{}\n", parts.join(";")));
        }
        CrashPlan::RandomUpTo(k) => out.push_str(&format!("crash = random:{k}\n")),
    }
    if let Some(p) = b.broken_skip_ack {
        out.push_str(&format!("broken_skip_ack = {p}\n"));
    }
    out.push_str(&format!("exhaustive = {}\n", family.exhaustive));
    let links = match family.link_mode {
        LinkMode::Single => "single",
        LinkMode::PerProcess => "per-process",
        LinkMode::PerLink => "per-link",
    };
    out.push_str(&format!("exhaustive_links = {links}\n"));
    out.push_str(&format!("crash_window = {}\n", family.crash_window));
    out.push_str(&format!("closure_a1 = {}\n", family.closure_a1));
    out.push_str(&format!("closure_a2 = {}\n", family.closure_a2));
    out.push_str(&format!("closure_a5 = {}\n", family.closure_a5));
    out.push_str(&format!("sample_runs = {}\n", family.sample_runs));
    out
}
