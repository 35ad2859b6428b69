//! Failure-detector reports, per-process oracles realizing the detector
//! classes, property checkers over recorded runs, and the report-level
//! conversions between generalized and standard detectors.

use std::collections::BTreeSet;
use std::fmt;

use crate::check::{Obligation, Status, Verdict, Witness};
use crate::model::{
    faulty_set, Event, ProcessId, Run, RunIdx, SystemOfRuns, Time, TimedEvent,
};

/// Registered mappings for g-standard reports. Only the complement mapping
/// ("the processes in Proc - S are correct") ships by default.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum MappingId {
    Complement,
}

impl fmt::Display for MappingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingId::Complement => write!(f, "complement"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum FdReport {
    /// "The processes in S are faulty."
    Standard(BTreeSet<ProcessId>),
    /// "At least k processes in S are faulty."
    Generalized { set: BTreeSet<ProcessId>, k: u32 },
    /// An opaque payload resolved through a registered mapping.
    GStandard { token: String, mapping: MappingId },
}

impl FdReport {
    /// The suspicion set this report contributes to `Suspects_p`. Generalized
    /// reports do not contribute; they are queried separately.
    pub fn resolve_suspects(&self, n: u16) -> Option<BTreeSet<ProcessId>> {
        match self {
            FdReport::Standard(s) => Some(s.clone()),
            FdReport::Generalized { .. } => None,
            FdReport::GStandard { token, mapping } => match mapping {
                MappingId::Complement => {
                    let correct = parse_token_set(token, "correct")?;
                    Some((0..n).map(ProcessId).filter(|p| !correct.contains(p)).collect())
                }
            },
        }
    }
}

fn parse_token_set(token: &str, label: &str) -> Option<BTreeSet<ProcessId>> {
    let rest = token.strip_prefix(label)?.strip_prefix(':')?;
    parse_proc_set(rest)
}

pub fn parse_proc_set(s: &str) -> Option<BTreeSet<ProcessId>> {
    let inner = s.strip_prefix('{')?.strip_suffix('}')?;
    let mut out = BTreeSet::new();
    if inner.is_empty() {
        return Some(out);
    }
    for part in inner.split(',') {
        out.insert(ProcessId(part.trim().parse().ok()?));
    }
    Some(out)
}

pub fn format_proc_set(s: &BTreeSet<ProcessId>) -> String {
    let items: Vec<String> = s.iter().map(|p| p.0.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FdReport::Standard(s) => write!(f, "S:{}", format_proc_set(s)),
            FdReport::Generalized { set, k } => {
                write!(f, "G:{};k={}", format_proc_set(set), k)
            }
            FdReport::GStandard { token, mapping } => write!(f, "GS:{token};map={mapping}"),
        }
    }
}

impl std::str::FromStr for FdReport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("S:") {
            return parse_proc_set(rest)
                .map(FdReport::Standard)
                .ok_or_else(|| format!("bad standard report {s:?}"));
        }
        if let Some(rest) = s.strip_prefix("G:") {
            let (set_s, k_s) = rest
                .rsplit_once(";k=")
                .ok_or_else(|| format!("bad generalized report {s:?}"))?;
            let set = parse_proc_set(set_s).ok_or_else(|| format!("bad set in {s:?}"))?;
            let k: u32 = k_s.parse().map_err(|_| format!("bad k in {s:?}"))?;
            if (k as usize) > set.len() {
                return Err(format!("generalized report with k > |S|: {s:?}"));
            }
            return Ok(FdReport::Generalized { set, k });
        }
        if let Some(rest) = s.strip_prefix("GS:") {
            let (token, map_s) = rest
                .rsplit_once(";map=")
                .ok_or_else(|| format!("bad g-standard report {s:?}"))?;
            let mapping = match map_s {
                "complement" => MappingId::Complement,
                other => return Err(format!("unknown mapping {other:?}")),
            };
            return Ok(FdReport::GStandard { token: token.to_string(), mapping });
        }
        Err(format!("unrecognized report {s:?}"))
    }
}

/// Which failure-detector event stream a checker reads.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SuspicionSource {
    Original,
    Primed,
}

fn report_of<'a>(ev: &'a Event, source: SuspicionSource) -> Option<&'a FdReport> {
    match (ev, source) {
        (Event::FdReport(r), SuspicionSource::Original) => Some(r),
        (Event::FdReportPrimed(r), SuspicionSource::Primed) => Some(r),
        _ => None,
    }
}

/// `Suspects_p(r, m)`: the set from the most recent standard or g-standard
/// report in `r_p(m)`; empty when there has been none.
pub fn suspects_at(run: &Run, p: ProcessId, m: Time, source: SuspicionSource) -> BTreeSet<ProcessId> {
    run.history(p, m)
        .iter()
        .rev()
        .find_map(|e| report_of(&e.event, source))
        .and_then(|r| r.resolve_suspects(run.n()))
        .unwrap_or_default()
}

/// A t-useful failure-detector event: F(r) is contained in S, and the report
/// guarantees a correct process outside S whenever any process is correct.
pub fn is_t_useful_event(
    set: &BTreeSet<ProcessId>,
    k: u32,
    n: u16,
    t: u32,
    faulty: &BTreeSet<ProcessId>,
) -> bool {
    let n = n as i64;
    let s = set.len() as i64;
    let k = k as i64;
    let t = t as i64;
    faulty.is_subset(set) && n - s > t.min(n - 1) - k && k <= s
}

/// Deterministic per-process suspicion sources. The (kind, seed, run prefix)
/// triple fully determines every report.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum OracleKind {
    /// Reports the exact crashed set: strong accuracy + strong completeness.
    PerfectO,
    /// Weak accuracy + strong completeness.
    StrongO,
    /// Weak accuracy + weak completeness.
    WeakO,
    /// Weak accuracy + impermanent strong completeness.
    ImpermanentStrongO,
    /// Weak accuracy + impermanent weak completeness.
    ImpermanentWeakO,
    /// Cycles (S, 0) over all t-sized subsets; t-useful only for t < n/2.
    TrivialTUseful(u32),
    /// Emits Generalized(crashed set, |crashed set|): the n-useful image of
    /// a perfect detector, t-useful for every t.
    ExactGeneralizedO,
    /// Negative-control oracle following an explicit misbehavior.
    AdversarialO(AdversarySpec),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AdversarySpec {
    /// `reporter` suspects `target` from time `at` even while it is alive.
    SuspectLive { reporter: ProcessId, target: ProcessId, at: Time },
    /// `reporter` omits `target` from every report.
    NeverSuspect { reporter: ProcessId, target: ProcessId },
    /// Everyone suspects everyone else, always.
    SuspectEveryone,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FdOracle {
    pub kind: OracleKind,
    pub seed: u64,
    pub report_period: u32,
}

impl FdOracle {
    pub fn new(kind: OracleKind) -> Self {
        FdOracle { kind, seed: 0, report_period: 1 }
    }

    /// Whether the oracle needs the run's full crash schedule up front
    /// (oracles may correlate with the run). Such oracles are confined to sampled
    /// systems because they break prefix-determinism across crash branches.
    pub fn needs_lookahead(&self) -> bool {
        matches!(
            self.kind,
            OracleKind::StrongO
                | OracleKind::WeakO
                | OracleKind::ImpermanentStrongO
                | OracleKind::ImpermanentWeakO
        )
    }

    pub fn emits_generalized(&self) -> bool {
        matches!(self.kind, OracleKind::TrivialTUseful(_) | OracleKind::ExactGeneralizedO)
    }
}

/// Run-wide oracle data resolved before simulation: the never-suspected
/// correct process, completeness delays, watchers and spurious episodes.
#[derive(Clone, Debug, Default)]
pub struct OraclePlan {
    pub exempt: Option<ProcessId>,
    /// `delay[p][q]`: units after q's crash before p's crashed-clause fires
    pub delay: Vec<Vec<Time>>,
    /// for weak variants: the one correct process whose crashed-clause covers q
    pub watcher: Vec<Option<ProcessId>>,
    /// (reporter, suspect, onset): a spurious pre-crash suspicion episode
    pub spurious: BTreeSet<(ProcessId, ProcessId, Time)>,
    /// spurious / impermanent episode length in units
    pub window: Time,
    pub trivial_subsets: Vec<BTreeSet<ProcessId>>,
}

pub fn subsets_of_size(n: u16, size: usize) -> Vec<BTreeSet<ProcessId>> {
    let mut out = Vec::new();
    let total: u32 = 1 << n;
    for mask in 0..total {
        if (mask.count_ones() as usize) == size {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).map(ProcessId).collect());
        }
    }
    out
}

pub fn build_plan(
    oracle: &FdOracle,
    n: u16,
    horizon: Time,
    crash_sched: &[Option<Time>],
    run_seed: u64,
) -> OraclePlan {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(oracle.seed ^ run_seed);
    let mut plan = OraclePlan { window: 8, ..OraclePlan::default() };
    match &oracle.kind {
        OracleKind::TrivialTUseful(t) => {
            plan.trivial_subsets = subsets_of_size(n, *t as usize);
        }
        OracleKind::StrongO
        | OracleKind::WeakO
        | OracleKind::ImpermanentStrongO
        | OracleKind::ImpermanentWeakO => {
            let correct: Vec<ProcessId> = (0..n)
                .map(ProcessId)
                .filter(|p| crash_sched[p.index()].is_none())
                .collect();
            if !correct.is_empty() {
                plan.exempt = Some(correct[rng.random_range(0..correct.len())]);
            }
            let max_delay = (horizon / 6).clamp(1, 8);
            plan.delay = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(1..=max_delay)).collect())
                .collect();
            plan.watcher = (0..n)
                .map(|_| {
                    if correct.is_empty() {
                        None
                    } else {
                        Some(correct[rng.random_range(0..correct.len())])
                    }
                })
                .collect();
            // sparse spurious pre-crash suspicions; weak accuracy permits them
            for p in 0..n {
                for q in 0..n {
                    if p != q && Some(ProcessId(q)) != plan.exempt && rng.random_bool(0.25) {
                        let onset = rng.random_range(1..=horizon.max(2) - 1);
                        plan.spurious.insert((ProcessId(p), ProcessId(q), onset));
                    }
                }
            }
        }
        _ => {}
    }
    plan
}

/// The content of the next report for process `p` at time `m`, given the
/// omniscient crash set. `report_idx` counts reports already emitted by `p`.
pub fn next_report(
    oracle: &FdOracle,
    plan: &OraclePlan,
    p: ProcessId,
    m: Time,
    crashed_now: &BTreeSet<ProcessId>,
    crash_sched: &[Option<Time>],
    report_idx: u32,
) -> FdReport {
    match &oracle.kind {
        OracleKind::PerfectO => FdReport::Standard(crashed_now.clone()),
        OracleKind::ExactGeneralizedO => FdReport::Generalized {
            set: crashed_now.clone(),
            k: crashed_now.len() as u32,
        },
        OracleKind::TrivialTUseful(_) => {
            let subsets = &plan.trivial_subsets;
            let set = if subsets.is_empty() {
                BTreeSet::new()
            } else {
                subsets[(report_idx as usize) % subsets.len()].clone()
            };
            FdReport::Generalized { set, k: 0 }
        }
        OracleKind::StrongO
        | OracleKind::WeakO
        | OracleKind::ImpermanentStrongO
        | OracleKind::ImpermanentWeakO => {
            let weak = matches!(oracle.kind, OracleKind::WeakO | OracleKind::ImpermanentWeakO);
            let impermanent = matches!(
                oracle.kind,
                OracleKind::ImpermanentStrongO | OracleKind::ImpermanentWeakO
            );
            let mut set = BTreeSet::new();
            for q in crashed_now {
                if weak && plan.watcher[q.index()] != Some(p) {
                    continue;
                }
                let crash_at = crash_sched[q.index()].expect("crashed process has a schedule");
                let onset = crash_at + plan.delay[p.index()][q.index()];
                let active = if impermanent {
                    m >= onset && m < onset + plan.window
                } else {
                    m >= onset
                };
                if active {
                    set.insert(*q);
                }
            }
            for (rep, q, onset) in &plan.spurious {
                if *rep == p
                    && !crashed_now.contains(q)
                    && m >= *onset
                    && m < *onset + plan.window
                {
                    set.insert(*q);
                }
            }
            if let Some(c) = plan.exempt {
                set.remove(&c);
            }
            FdReport::Standard(set)
        }
        OracleKind::AdversarialO(spec) => {
            let mut set = crashed_now.clone();
            match spec {
                AdversarySpec::SuspectLive { reporter, target, at } => {
                    if p == *reporter && m >= *at {
                        set.insert(*target);
                    }
                }
                AdversarySpec::NeverSuspect { reporter, target } => {
                    if p == *reporter {
                        set.remove(target);
                    }
                }
                AdversarySpec::SuspectEveryone => {
                    set = (0..crash_sched.len() as u16)
                        .map(ProcessId)
                        .filter(|q| *q != p)
                        .collect();
                }
            }
            FdReport::Standard(set)
        }
    }
}

/// The landing time from which every report this oracle emits carries its
/// final content, or None when the content keeps changing forever. A run's
/// report streams are settled once every live process has also emitted a
/// report at or after this time.
pub fn reports_settled_from(
    oracle: &FdOracle,
    plan: &OraclePlan,
    crash_sched: &[Option<Time>],
) -> Option<Time> {
    let last_crash_land =
        crash_sched.iter().flatten().map(|at| at + 1).max().unwrap_or(0);
    match &oracle.kind {
        OracleKind::PerfectO | OracleKind::ExactGeneralizedO => Some(last_crash_land),
        OracleKind::TrivialTUseful(_) => None,
        OracleKind::AdversarialO(spec) => match spec {
            AdversarySpec::SuspectLive { at, .. } => Some(last_crash_land.max(at + 1)),
            AdversarySpec::NeverSuspect { .. } => Some(last_crash_land),
            AdversarySpec::SuspectEveryone => Some(0),
        },
        OracleKind::StrongO
        | OracleKind::WeakO
        | OracleKind::ImpermanentStrongO
        | OracleKind::ImpermanentWeakO => {
            let impermanent = matches!(
                oracle.kind,
                OracleKind::ImpermanentStrongO | OracleKind::ImpermanentWeakO
            );
            let mut from = last_crash_land;
            for (q, sched) in crash_sched.iter().enumerate() {
                if let Some(at) = sched {
                    for row in &plan.delay {
                        let matured =
                            at + row[q] + if impermanent { plan.window } else { 0 } + 1;
                        from = from.max(matured);
                    }
                }
            }
            for (_, _, onset) in &plan.spurious {
                from = from.max(onset + plan.window + 1);
            }
            Some(from)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FdProperty {
    StrongAccuracy,
    WeakAccuracy,
    StrongCompleteness,
    WeakCompleteness,
    ImpermanentStrongCompleteness,
    ImpermanentWeakCompleteness,
}

impl fmt::Display for FdProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FdProperty::StrongAccuracy => "StrongAccuracy",
            FdProperty::WeakAccuracy => "WeakAccuracy",
            FdProperty::StrongCompleteness => "StrongCompleteness",
            FdProperty::WeakCompleteness => "WeakCompleteness",
            FdProperty::ImpermanentStrongCompleteness => "ImpermanentStrongCompleteness",
            FdProperty::ImpermanentWeakCompleteness => "ImpermanentWeakCompleteness",
        };
        write!(f, "{s}")
    }
}

/// The resolved suspicion timeline of one process in one run.
struct SuspicionTimeline {
    /// (report time, resolved set), in time order
    reports: Vec<(Time, BTreeSet<ProcessId>)>,
}

impl SuspicionTimeline {
    fn build(run: &Run, p: ProcessId, source: SuspicionSource) -> Self {
        let reports = run
            .full_history(p)
            .iter()
            .filter_map(|e| {
                report_of(&e.event, source)
                    .and_then(|r| r.resolve_suspects(run.n()))
                    .map(|s| (e.time, s))
            })
            .collect();
        SuspicionTimeline { reports }
    }

    fn ever_contains(&self, q: ProcessId) -> Option<Time> {
        self.reports.iter().find(|(_, s)| s.contains(&q)).map(|(t, _)| *t)
    }

    /// q is in the latest report and in every report from some time on.
    fn permanently_contains_at_horizon(&self, q: ProcessId) -> bool {
        self.reports.last().is_some_and(|(_, s)| s.contains(&q))
    }
}

/// Checks one detector property over every run of the system. Accuracy
/// violations are decidable at the horizon; completeness verdicts depend on
/// the closeout certificates.
pub fn check_property(
    sys: &SystemOfRuns,
    property: FdProperty,
    source: SuspicionSource,
) -> Verdict {
    let mut witness: Option<Witness> = None;
    let mut obligations: Vec<Obligation> = Vec::new();
    let proc_all: Vec<ProcessId> = (0..sys.n).map(ProcessId).collect();

    for (ri, run) in sys.runs.iter().enumerate() {
        let run_idx = RunIdx(ri as u32);
        let faulty = faulty_set(run);
        let all_crashed = faulty.len() == sys.n as usize;
        let timelines: Vec<SuspicionTimeline> =
            proc_all.iter().map(|p| SuspicionTimeline::build(run, *p, source)).collect();
        let settled = run.closeout.fd_stable;
        let permanent_ok = run.closeout.fd_settled();

        match property {
            FdProperty::StrongAccuracy => {
                for p in &proc_all {
                    for (t, set) in &timelines[p.index()].reports {
                        for q in set {
                            if !run.crashed_by(*q, *t) {
                                let w = Witness {
                                    run: run_idx,
                                    time: *t,
                                    proc: Some(*p),
                                    detail: format!("{q} suspected by {p} before crashing"),
                                };
                                if witness.as_ref().map_or(true, |old| (ri as u32, *t) < (old.run.0, old.time)) {
                                    witness = Some(w);
                                }
                            }
                        }
                    }
                }
            }
            FdProperty::WeakAccuracy => {
                if !all_crashed {
                    let correct: Vec<ProcessId> =
                        proc_all.iter().copied().filter(|p| !faulty.contains(p)).collect();
                    let unsuspected = correct.iter().any(|q| {
                        timelines.iter().all(|tl| tl.ever_contains(*q).is_none())
                    });
                    if !unsuspected {
                        let w = Witness {
                            run: run_idx,
                            time: run.horizon(),
                            proc: None,
                            detail: "every correct process is suspected at some point".into(),
                        };
                        if witness.is_none() {
                            witness = Some(w);
                        }
                    }
                }
            }
            FdProperty::StrongCompleteness | FdProperty::WeakCompleteness => {
                let weak = property == FdProperty::WeakCompleteness;
                if weak && all_crashed {
                    continue; // the F(r) != Proc guard
                }
                let correct: Vec<ProcessId> =
                    proc_all.iter().copied().filter(|p| !faulty.contains(p)).collect();
                for q in &faulty {
                    let holders: Vec<bool> = correct
                        .iter()
                        .map(|p| timelines[p.index()].permanently_contains_at_horizon(*q))
                        .collect();
                    let satisfied = if weak {
                        holders.iter().any(|b| *b)
                    } else {
                        holders.iter().all(|b| *b)
                    };
                    if satisfied && permanent_ok {
                        continue;
                    }
                    if settled && !satisfied {
                        let p = if weak {
                            correct.first().copied()
                        } else {
                            correct
                                .iter()
                                .zip(&holders)
                                .find(|(_, h)| !*h)
                                .map(|(p, _)| *p)
                        };
                        let w = Witness {
                            run: run_idx,
                            time: run.horizon(),
                            proc: p,
                            detail: format!("{q} never permanently suspected"),
                        };
                        if witness.is_none() {
                            witness = Some(w);
                        }
                    } else {
                        obligations.push(Obligation {
                            run: run_idx,
                            time: run.horizon(),
                            detail: format!(
                                "permanent suspicion of {q} not certifiable at the horizon"
                            ),
                        });
                    }
                }
            }
            FdProperty::ImpermanentStrongCompleteness
            | FdProperty::ImpermanentWeakCompleteness => {
                let weak = property == FdProperty::ImpermanentWeakCompleteness;
                if weak && all_crashed {
                    continue;
                }
                let correct: Vec<ProcessId> =
                    proc_all.iter().copied().filter(|p| !faulty.contains(p)).collect();
                for q in &faulty {
                    let holders: Vec<bool> = correct
                        .iter()
                        .map(|p| timelines[p.index()].ever_contains(*q).is_some())
                        .collect();
                    let satisfied = if weak {
                        holders.iter().any(|b| *b)
                    } else {
                        holders.iter().all(|b| *b)
                    };
                    if satisfied {
                        continue;
                    }
                    if settled {
                        let w = Witness {
                            run: run_idx,
                            time: run.horizon(),
                            proc: None,
                            detail: format!("{q} never suspected"),
                        };
                        if witness.is_none() {
                            witness = Some(w);
                        }
                    } else {
                        obligations.push(Obligation {
                            run: run_idx,
                            time: run.horizon(),
                            detail: format!("suspicion of {q} not yet witnessed"),
                        });
                    }
                }
            }
        }
    }

    if let Some(w) = witness {
        Verdict { status: Status::Fail, witness: Some(w), obligations: Vec::new() }
    } else if !obligations.is_empty() {
        Verdict { status: Status::Inconclusive, witness: None, obligations }
    } else {
        Verdict::pass()
    }
}

/// Checks generalized strong accuracy and generalized impermanent strong
/// completeness (with bound t) over every run of the system.
pub fn check_generalized(sys: &SystemOfRuns, t: u32) -> Verdict {
    let mut witness: Option<Witness> = None;
    let mut obligations: Vec<Obligation> = Vec::new();

    for (ri, run) in sys.runs.iter().enumerate() {
        let run_idx = RunIdx(ri as u32);
        let faulty = faulty_set(run);
        for p in run.procs() {
            let mut latest: Option<(BTreeSet<ProcessId>, u32)> = None;
            let mut useful_seen = false;
            for e in run.full_history(p) {
                let rep = match &e.event {
                    Event::FdReport(r) | Event::FdReportPrimed(r) => r,
                    _ => continue,
                };
                if let FdReport::Generalized { set, k } = rep {
                    let crashed = set.iter().filter(|q| run.crashed_by(**q, e.time)).count();
                    if crashed < *k as usize {
                        let w = Witness {
                            run: run_idx,
                            time: e.time,
                            proc: Some(p),
                            detail: format!(
                                "report ({},{k}) with only {crashed} of the set crashed",
                                format_proc_set(set)
                            ),
                        };
                        if witness.is_none() {
                            witness = Some(w);
                        }
                    }
                    if is_t_useful_event(set, *k, sys.n, t, &faulty) {
                        useful_seen = true;
                    }
                    latest = Some((set.clone(), *k));
                }
            }
            if faulty.contains(&p) || useful_seen {
                continue;
            }
            // completeness clause for a correct process with no useful event yet
            let future_useful = run.closeout.fd_stable
                && latest
                    .as_ref()
                    .is_some_and(|(set, k)| is_t_useful_event(set, *k, sys.n, t, &faulty));
            if future_useful {
                continue;
            }
            if run.closeout.fd_stable {
                let w = Witness {
                    run: run_idx,
                    time: run.horizon(),
                    proc: Some(p),
                    detail: format!("no t-useful event for {p} and reports are settled"),
                };
                if witness.is_none() {
                    witness = Some(w);
                }
            } else {
                obligations.push(Obligation {
                    run: run_idx,
                    time: run.horizon(),
                    detail: format!("t-useful event for {p} not yet witnessed"),
                });
            }
        }
    }

    if let Some(w) = witness {
        Verdict { status: Status::Fail, witness: Some(w), obligations: Vec::new() }
    } else if !obligations.is_empty() {
        Verdict { status: Status::Inconclusive, witness: None, obligations }
    } else {
        Verdict::pass()
    }
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum ConversionError {
    #[error("conversion inapplicable: report at t={time} has k < |S|")]
    NotExact { time: Time },
    #[error("conversion inapplicable: non-generalized report at t={time}")]
    NotGeneralized { time: Time },
}

/// Converts a history with exact generalized reports (|S| = k) into one with
/// standard reports: each report becomes the union of all sets seen so far.
pub fn as_perfect(events: &[TimedEvent]) -> Result<Vec<TimedEvent>, ConversionError> {
    let mut union: BTreeSet<ProcessId> = BTreeSet::new();
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        match &e.event {
            Event::FdReport(FdReport::Generalized { set, k }) => {
                if *k as usize != set.len() {
                    return Err(ConversionError::NotExact { time: e.time });
                }
                union.extend(set.iter().copied());
                out.push(TimedEvent {
                    time: e.time,
                    event: Event::FdReport(FdReport::Standard(union.clone())),
                });
            }
            Event::FdReport(_) => return Err(ConversionError::NotGeneralized { time: e.time }),
            _ => out.push(e.clone()),
        }
    }
    Ok(out)
}

/// Converts a history with standard reports (assumed strongly accurate) into
/// an n-useful generalized history: each report becomes (S', |S'|) where S'
/// is the running union of all reported sets.
pub fn as_n_useful(events: &[TimedEvent]) -> Vec<TimedEvent> {
    let mut union: BTreeSet<ProcessId> = BTreeSet::new();
    events
        .iter()
        .map(|e| match &e.event {
            Event::FdReport(FdReport::Standard(set)) => {
                union.extend(set.iter().copied());
                TimedEvent {
                    time: e.time,
                    event: Event::FdReport(FdReport::Generalized {
                        set: union.clone(),
                        k: union.len() as u32,
                    }),
                }
            }
            _ => e.clone(),
        })
        .collect()
}

/// The running-union map on suspicion sets; permanence holds by construction.
pub fn running_union(sets: impl IntoIterator<Item = BTreeSet<ProcessId>>) -> Vec<BTreeSet<ProcessId>> {
    let mut union: BTreeSet<ProcessId> = BTreeSet::new();
    sets.into_iter()
        .map(|s| {
            union.extend(s);
            union.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Closeout, Run};

    fn p(i: u16) -> ProcessId {
        ProcessId(i)
    }

    fn set(ids: &[u16]) -> BTreeSet<ProcessId> {
        ids.iter().map(|i| ProcessId(*i)).collect()
    }

    fn report_event(r: FdReport) -> Event {
        Event::FdReport(r)
    }

    #[test]
    fn suspects_uses_the_most_recent_report() {
        let mut run = Run::new(4, 8, 8, 0);
        assert!(suspects_at(&run, p(0), 3, SuspicionSource::Original).is_empty());
        run.append(p(0), 2, report_event(FdReport::Standard(set(&[1]))));
        run.append(p(0), 5, report_event(FdReport::Standard(set(&[]))));
        // latest wins, not the union
        assert!(suspects_at(&run, p(0), 6, SuspicionSource::Original).is_empty());
        assert_eq!(suspects_at(&run, p(0), 4, SuspicionSource::Original), set(&[1]));
    }

    #[test]
    fn complement_mapping_resolves_to_the_complement() {
        let r = FdReport::GStandard { token: "correct:{1,3}".into(), mapping: MappingId::Complement };
        assert_eq!(r.resolve_suspects(4), Some(set(&[0, 2])));
    }

    #[test]
    fn report_syntax_round_trips() {
        for s in ["S:{}", "S:{1,3}", "G:{1,3};k=2", "G:{};k=0", "GS:correct:{0};map=complement"] {
            let r: FdReport = s.parse().expect(s);
            assert_eq!(r.to_string(), s);
        }
        assert!("G:{1};k=2".parse::<FdReport>().is_err()); // k > |S|
        assert!("GS:x;map=nope".parse::<FdReport>().is_err());
    }

    #[test]
    fn t_useful_spec_cases() {
        // n=5, t=2, S={p1,p2,p3}, k=1, F={p2}: 5-3 = 2 > min(2,4)-1 = 1
        assert!(is_t_useful_event(&set(&[1, 2, 3]), 1, 5, 2, &set(&[2])));
        // size-2 subsets with k=0 realize the t < n/2 trivial detector
        assert!(is_t_useful_event(&set(&[1, 2]), 0, 5, 2, &set(&[1])));
        // empty-suspicion edge: n > min(t, n-1)
        assert!(is_t_useful_event(&set(&[]), 0, 5, 2, &set(&[])));
        // F outside S disqualifies
        assert!(!is_t_useful_event(&set(&[1]), 1, 5, 2, &set(&[2])));
        // arithmetic boundary: 4-2 = 2 is not > min(2,3)-0 = 2
        assert!(!is_t_useful_event(&set(&[1, 2]), 0, 4, 2, &set(&[1])));
    }

    #[test]
    fn t_useful_is_monotone_in_k() {
        for n in 1..=6u16 {
            let all: Vec<ProcessId> = (0..n).map(ProcessId).collect();
            for smask in 0u32..(1 << n) {
                let s: BTreeSet<ProcessId> =
                    all.iter().filter(|q| smask & (1 << q.0) != 0).copied().collect();
                for fmask in 0u32..(1 << n) {
                    let f: BTreeSet<ProcessId> =
                        all.iter().filter(|q| fmask & (1 << q.0) != 0).copied().collect();
                    for t in 0..=n as u32 {
                        for k in 0..s.len() as u32 {
                            if is_t_useful_event(&s, k, n, t, &f) {
                                assert!(is_t_useful_event(&s, k + 1, n, t, &f));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn as_perfect_accumulates_unions() {
        let mut run = Run::new(4, 8, 8, 0);
        run.append(p(0), 1, report_event(FdReport::Generalized { set: set(&[1]), k: 1 }));
        run.append(p(0), 3, report_event(FdReport::Generalized { set: set(&[2]), k: 1 }));
        let out = as_perfect(run.full_history(p(0))).unwrap();
        assert_eq!(out[0].event, report_event(FdReport::Standard(set(&[1]))));
        assert_eq!(out[1].event, report_event(FdReport::Standard(set(&[1, 2]))));

        assert!(as_perfect(&[]).unwrap().is_empty());

        let mut bad = Run::new(4, 8, 8, 0);
        bad.append(p(0), 1, report_event(FdReport::Generalized { set: set(&[1, 2]), k: 1 }));
        assert!(matches!(
            as_perfect(bad.full_history(p(0))),
            Err(ConversionError::NotExact { time: 1 })
        ));
    }

    #[test]
    fn as_n_useful_and_round_trip() {
        let mut run = Run::new(4, 8, 8, 0);
        run.append(p(0), 1, report_event(FdReport::Standard(set(&[1]))));
        run.append(p(0), 2, report_event(FdReport::Standard(set(&[2]))));
        run.append(p(0), 4, report_event(FdReport::Standard(set(&[]))));
        let gen = as_n_useful(run.full_history(p(0)));
        assert_eq!(gen[0].event, report_event(FdReport::Generalized { set: set(&[1]), k: 1 }));
        assert_eq!(
            gen[1].event,
            report_event(FdReport::Generalized { set: set(&[1, 2]), k: 2 })
        );
        // round trip equals the running-union closure, computed independently
        let back = as_perfect(&gen).unwrap();
        let mut union = BTreeSet::new();
        for (i, e) in run.full_history(p(0)).iter().enumerate() {
            if let Event::FdReport(FdReport::Standard(s)) = &e.event {
                union.extend(s.iter().copied());
                assert_eq!(back[i].event, report_event(FdReport::Standard(union.clone())));
            }
        }
    }

    #[test]
    fn empty_standard_report_becomes_zero_generalized() {
        let mut run = Run::new(2, 2, 8, 0);
        run.append(p(0), 1, report_event(FdReport::Standard(set(&[]))));
        let gen = as_n_useful(run.full_history(p(0)));
        assert_eq!(gen[0].event, report_event(FdReport::Generalized { set: set(&[]), k: 0 }));
    }

    fn closed(mut run: Run) -> Run {
        run.closeout = Closeout { fd_stable: true, ..Closeout::all_closed() };
        run
    }

    #[test]
    fn pre_crash_suspicion_fails_strong_accuracy_with_witness() {
        let mut run = Run::new(3, 8, 8, 0);
        run.append(p(0), 2, report_event(FdReport::Standard(set(&[1]))));
        run.append(p(1), 5, Event::Crash);
        let sys = SystemOfRuns::new(3, vec![closed(run)], crate::model::Provenance::Sampled);
        let v = check_property(&sys, FdProperty::StrongAccuracy, SuspicionSource::Original);
        assert!(v.is_fail());
        let w = v.witness.unwrap();
        assert_eq!((w.proc, w.time), (Some(p(0)), 2));
        assert!(w.detail.contains("p1"));
    }

    #[test]
    fn all_crash_runs_satisfy_weak_properties_vacuously() {
        let mut run = Run::new(2, 4, 8, 0);
        run.append(p(0), 1, Event::Crash);
        run.append(p(1), 2, Event::Crash);
        let sys = SystemOfRuns::new(2, vec![closed(run)], crate::model::Provenance::Sampled);
        assert!(check_property(&sys, FdProperty::WeakCompleteness, SuspicionSource::Original)
            .is_pass());
        assert!(check_property(&sys, FdProperty::WeakAccuracy, SuspicionSource::Original)
            .is_pass());
    }

    #[test]
    fn permanence_requires_the_latest_report_to_hold_the_suspect() {
        // q suspected once, then dropped: impermanent completeness holds,
        // permanent completeness is refuted on a settled run
        let mut run = Run::new(2, 8, 8, 0);
        run.append(p(1), 1, Event::Crash);
        run.append(p(0), 3, report_event(FdReport::Standard(set(&[1]))));
        run.append(p(0), 5, report_event(FdReport::Standard(set(&[]))));
        let sys = SystemOfRuns::new(2, vec![closed(run)], crate::model::Provenance::Sampled);
        assert!(check_property(
            &sys,
            FdProperty::ImpermanentStrongCompleteness,
            SuspicionSource::Original
        )
        .is_pass());
        assert!(check_property(&sys, FdProperty::StrongCompleteness, SuspicionSource::Original)
            .is_fail());
    }

    #[test]
    fn open_runs_yield_obligations_not_failures() {
        let mut run = Run::new(2, 8, 8, 0);
        run.append(p(1), 1, Event::Crash);
        // no reports at all, run not settled
        let sys = SystemOfRuns::new(2, vec![run], crate::model::Provenance::Sampled);
        let v = check_property(&sys, FdProperty::StrongCompleteness, SuspicionSource::Original);
        assert_eq!(v.status, crate::check::Status::Inconclusive);
        assert!(!v.obligations.is_empty());
    }

    #[test]
    fn generalized_accuracy_counts_crashes_at_report_time() {
        let mut run = Run::new(3, 8, 8, 0);
        run.append(p(1), 1, Event::Crash);
        run.append(p(0), 3, report_event(FdReport::Generalized { set: set(&[1, 2]), k: 2 }));
        let sys = SystemOfRuns::new(3, vec![closed(run)], crate::model::Provenance::Sampled);
        let v = check_generalized(&sys, 2);
        assert!(v.is_fail());
        assert!(v.witness.unwrap().detail.contains("only 1"));

        // (S, 0) anywhere is accuracy-safe
        let mut run = Run::new(3, 8, 8, 0);
        run.append(p(0), 1, report_event(FdReport::Generalized { set: set(&[1, 2]), k: 0 }));
        run.append(p(0), 2, report_event(FdReport::Generalized { set: set(&[0, 1]), k: 0 }));
        let mut sys = SystemOfRuns::new(3, vec![run], crate::model::Provenance::Sampled);
        sys.runs[0].closeout.fd_stable = false;
        let v = check_generalized(&sys, 1);
        assert!(!v.is_fail());
    }

    #[test]
    fn deterministic_oracles_are_prefix_functions() {
        let oracle = FdOracle::new(OracleKind::PerfectO);
        let plan = build_plan(&oracle, 3, 10, &[None, Some(2), None], 7);
        let crashed = set(&[1]);
        let a = next_report(&oracle, &plan, p(0), 5, &crashed, &[None, Some(2), None], 3);
        let b = next_report(&oracle, &plan, p(0), 5, &crashed, &[None, Some(2), None], 3);
        assert_eq!(a, b);
        assert_eq!(a, FdReport::Standard(set(&[1])));
    }

    #[test]
    fn trivial_t_useful_oracle_cycles_fixed_subsets() {
        let oracle = FdOracle::new(OracleKind::TrivialTUseful(2));
        let plan = build_plan(&oracle, 5, 10, &[None; 5], 0);
        let n_subsets = plan.trivial_subsets.len();
        assert_eq!(n_subsets, 10);
        let first = next_report(&oracle, &plan, p(0), 0, &set(&[]), &[None; 5], 0);
        let wrapped =
            next_report(&oracle, &plan, p(0), 9, &set(&[]), &[None; 5], n_subsets as u32);
        assert_eq!(first, wrapped);
        assert_eq!(first, FdReport::Generalized { set: set(&[0, 1]), k: 0 });
    }

    #[test]
    fn perfect_oracle_runs_pass_both_strong_properties() {
        use crate::protocols::ProtocolKind;
        use crate::sim::{simulate, ChannelKind, CrashPlan, InitSchedule, ScenarioConfig};
        for seed in 0..15u64 {
            let cfg = ScenarioConfig {
                n: 4,
                t: 2,
                protocol: ProtocolKind::NUdcGossip,
                oracle: FdOracle { kind: OracleKind::PerfectO, seed, report_period: 1 },
                horizon: 40,
                budget: 8,
                seed,
                init_schedule: InitSchedule::Explicit(vec![(
                    0,
                    crate::model::ActionId { owner: p(0), tag: 0 },
                )]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip: false,
                crash_plan: CrashPlan::RandomUpTo(2),
                broken_skip_ack: None,
            };
            let run = simulate(&cfg).unwrap();
            let faulty = crate::model::faulty_set(&run);
            let settled = run.closeout.fd_stable;
            // brute-force oracle: scan every (p, q, m) triple directly
            for pr in run.procs() {
                for m in 0..=run.horizon() {
                    let suspects = suspects_at(&run, pr, m, SuspicionSource::Original);
                    for q in &suspects {
                        assert!(run.crashed_by(*q, m), "accuracy at ({pr},{m})");
                    }
                    if settled && m == run.horizon() && !faulty.contains(&pr) {
                        for q in &faulty {
                            assert!(suspects.contains(q), "completeness at ({pr},{m})");
                        }
                    }
                }
            }
            let sys = SystemOfRuns::new(4, vec![run], crate::model::Provenance::Sampled);
            assert!(check_property(&sys, FdProperty::StrongAccuracy, SuspicionSource::Original)
                .is_pass());
            let comp =
                check_property(&sys, FdProperty::StrongCompleteness, SuspicionSource::Original);
            if settled {
                assert!(comp.is_pass(), "seed {seed}: settled run must certify completeness");
            } else {
                // a crash landing inside the final report gap stays an
                // obligation, never a refutation
                assert!(!comp.is_fail(), "seed {seed}");
            }
        }
    }

    #[test]
    fn verdict_implications_hold_across_seeded_systems() {
        use crate::protocols::ProtocolKind;
        use crate::sim::{simulate, ChannelKind, CrashPlan, InitSchedule, ScenarioConfig};
        for seed in 0..25u64 {
            for kind in [OracleKind::PerfectO, OracleKind::StrongO, OracleKind::WeakO] {
                let cfg = ScenarioConfig {
                    n: 4,
                    t: 2,
                    protocol: ProtocolKind::NUdcGossip,
                    oracle: FdOracle { kind: kind.clone(), seed, report_period: 1 },
                    horizon: 40,
                    budget: 8,
                    seed,
                    init_schedule: InitSchedule::Explicit(vec![(
                        0,
                        crate::model::ActionId { owner: p(0), tag: 0 },
                    )]),
                    channel: ChannelKind::FairLossy { drop_percent: 50 },
                    fip: false,
                    crash_plan: CrashPlan::RandomUpTo(2),
                    broken_skip_ack: None,
                };
                let run = simulate(&cfg).unwrap();
                let sys =
                    SystemOfRuns::new(4, vec![run], crate::model::Provenance::Sampled);
                let sa = check_property(&sys, FdProperty::StrongAccuracy, SuspicionSource::Original);
                let wa = check_property(&sys, FdProperty::WeakAccuracy, SuspicionSource::Original);
                if sa.is_pass() {
                    assert!(!wa.is_fail(), "strong accuracy bounds weak accuracy");
                }
                let sc =
                    check_property(&sys, FdProperty::StrongCompleteness, SuspicionSource::Original);
                let wc =
                    check_property(&sys, FdProperty::WeakCompleteness, SuspicionSource::Original);
                if sc.is_pass() {
                    assert!(wc.is_pass(), "strong completeness implies weak completeness");
                }
            }
        }
    }

    #[test]
    fn n_useful_image_of_an_accurate_history_passes_generalized_accuracy() {
        use crate::protocols::ProtocolKind;
        use crate::sim::{simulate, ChannelKind, CrashPlan, InitSchedule, ScenarioConfig};
        for seed in 0..10u64 {
            let cfg = ScenarioConfig {
                n: 3,
                t: 2,
                protocol: ProtocolKind::NUdcGossip,
                oracle: FdOracle { kind: OracleKind::PerfectO, seed, report_period: 1 },
                horizon: 30,
                budget: 8,
                seed,
                init_schedule: InitSchedule::Explicit(vec![(
                    0,
                    crate::model::ActionId { owner: p(0), tag: 0 },
                )]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip: false,
                crash_plan: CrashPlan::RandomUpTo(2),
                broken_skip_ack: None,
            };
            let run = simulate(&cfg).unwrap();
            let mut converted = Run::new(3, run.horizon(), run.fairness_budget(), run.seed());
            for q in run.procs() {
                for e in as_n_useful(run.full_history(q)) {
                    converted.append(q, e.time, e.event);
                }
            }
            converted.closeout = run.closeout;
            let sys =
                SystemOfRuns::new(3, vec![converted], crate::model::Provenance::Sampled);
            let v = check_generalized(&sys, 2);
            assert!(!v.is_fail(), "seed {seed}: accuracy clause must hold");
        }
    }

    #[test]
    fn running_union_is_monotone_and_idempotent() {
        let input = vec![set(&[1]), set(&[]), set(&[2])];
        let once = running_union(input.clone());
        assert_eq!(once, vec![set(&[1]), set(&[1]), set(&[1, 2])]);
        assert_eq!(running_union(once.clone()), once);
    }
}
