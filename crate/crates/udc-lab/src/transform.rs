//! Run- and system-level transformations: weak-to-strong completeness
//! conversion (gossiped suspicions), impermanent-to-strong conversion
//! (running unions), and the extraction transforms that interleave primed
//! failure-detector events reporting what each process knows about crashes.

use std::collections::{BTreeSet, VecDeque};

use crate::fdetect::{check_property, FdProperty, FdReport, SuspicionSource};
use crate::model::{
    Event, PayloadKind, ProcessId, Provenance, Run, RunIdx, SystemOfRuns, Time, TimedEvent,
};

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("{0} requires an exhaustive system (knowledge on sampled systems is one-sided)")]
    NeedsExhaustive(String),
    #[error("input system fails weak completeness; conversion preconditions unmet")]
    WeakCompletenessFailed,
}

/// Replaces every resolvable report with the running union of all reported
/// sets so far. Idempotent: unions of unions are unchanged.
pub fn convert_impermanent_to_strong(events: &[TimedEvent], n: u16) -> Vec<TimedEvent> {
    let mut union: BTreeSet<ProcessId> = BTreeSet::new();
    events
        .iter()
        .map(|e| match &e.event {
            Event::FdReport(r) | Event::FdReportPrimed(r) => {
                if let Some(set) = r.resolve_suspects(n) {
                    union.extend(set);
                    TimedEvent {
                        time: e.time,
                        event: Event::FdReportPrimed(FdReport::Standard(union.clone())),
                    }
                } else {
                    e.clone()
                }
            }
            _ => e.clone(),
        })
        .collect()
}

/// System-level impermanent-to-strong conversion.
pub fn convert_impermanent_to_strong_system(sys: &SystemOfRuns) -> SystemOfRuns {
    let runs: Vec<Run> = sys
        .runs
        .iter()
        .map(|run| {
            let mut out = Run::new(run.n(), run.horizon(), run.fairness_budget(), run.seed());
            for p in run.procs() {
                for e in convert_impermanent_to_strong(run.full_history(p), run.n()) {
                    out.append(p, e.time, e.event);
                }
            }
            let mut closeout = run.closeout;
            closeout.fd_monotone = true;
            out.closeout = closeout;
            out
        })
        .collect();
    SystemOfRuns::new(sys.n, runs, sys.provenance)
}

/// Weak-to-strong completeness conversion: processes gossip the suspicions
/// their original detectors reported, and the primed report at each step is
/// the union of everything heard. Each original time unit stretches to four
/// transitions: copy, gossip send, gossip receive, primed report.
pub fn convert_weak_to_strong(sys: &SystemOfRuns) -> Result<SystemOfRuns, TransformError> {
    let pre = check_property(sys, FdProperty::WeakCompleteness, SuspicionSource::Original);
    if pre.is_fail() {
        return Err(TransformError::WeakCompletenessFailed);
    }
    let n = sys.n;
    let runs: Vec<Run> = sys
        .runs
        .iter()
        .map(|run| convert_weak_to_strong_run(run, n))
        .collect();
    let mut out = SystemOfRuns::new(n, runs, sys.provenance);
    out.crash_window = sys.crash_window;
    Ok(out)
}

fn convert_weak_to_strong_run(run: &Run, n: u16) -> Run {
    let h = run.horizon();
    let mut out = Run::new(n, 4 * h, run.fairness_budget(), run.seed());
    let mut unions: Vec<BTreeSet<ProcessId>> = vec![BTreeSet::new(); n as usize];
    let mut inboxes: Vec<VecDeque<(ProcessId, u32, BTreeSet<ProcessId>)>> =
        vec![VecDeque::new(); n as usize];
    let crash_time: Vec<Option<Time>> = run.procs().map(|p| run.crash_time(p)).collect();
    let alive_after = |p: ProcessId, m: Time| crash_time[p.index()].map_or(true, |c| c > m + 1);

    for m in 0..h {
        // copy the original events appended at time m+1
        for p in run.procs() {
            for e in run.full_history(p) {
                if e.time == m + 1 {
                    out.append(p, 4 * m + 1, e.event.clone());
                    if let Event::FdReport(r) | Event::FdReportPrimed(r) = &e.event {
                        if let Some(set) = r.resolve_suspects(n) {
                            unions[p.index()].extend(set);
                        }
                    }
                }
            }
        }
        if n >= 2 {
            // gossip sends: one target per round, rotating
            for p in run.procs() {
                if !alive_after(p, m) {
                    continue;
                }
                let offset = 1 + (m as usize % (n as usize - 1));
                let dst = ProcessId(((p.index() + offset) % n as usize) as u16);
                let msg = crate::model::MessageId {
                    src: p,
                    dst,
                    payload: PayloadKind::Gossip(m),
                    seq: 1,
                };
                out.append(p, 4 * m + 2, Event::Send { to: dst, msg });
                inboxes[dst.index()].push_back((p, m, unions[p.index()].clone()));
            }
            // gossip receipt: one message per round per process
            for p in run.procs() {
                if !alive_after(p, m) {
                    continue;
                }
                if let Some((src, ver, set)) = inboxes[p.index()].pop_front() {
                    let msg = crate::model::MessageId {
                        src,
                        dst: p,
                        payload: PayloadKind::Gossip(ver),
                        seq: 1,
                    };
                    out.append(p, 4 * m + 3, Event::Recv { from: src, msg });
                    unions[p.index()].extend(set);
                }
            }
        }
        // primed reports: the union of everything suspected or heard so far
        for p in run.procs() {
            if alive_after(p, m) {
                out.append(
                    p,
                    4 * m + 4,
                    Event::FdReportPrimed(FdReport::Standard(unions[p.index()].clone())),
                );
            }
        }
    }

    let mut closeout = run.closeout;
    closeout.fd_monotone = true;
    closeout.fd_stable = false;
    closeout.comm = crate::model::faulty_set(run).len() == n as usize;
    out.closeout = closeout;
    out
}

/// Produces the primed report content for one extraction step.
fn extraction_report(
    sys: &SystemOfRuns,
    point: crate::model::Point,
    p: ProcessId,
    generalized: Option<u16>,
) -> FdReport {
    match generalized {
        None => FdReport::Standard(crate::formula::known_crashed_set(sys, point, p)),
        Some(n) => {
            let run = sys.run(point.run);
            let len = run.history(p, point.time).len() as u32 + 1;
            let l = len % (1u32 << n);
            let subset: BTreeSet<ProcessId> =
                (0..n).filter(|i| l & (1 << i) != 0).map(ProcessId).collect();
            let k = crate::formula::known_crash_count(sys, point, p, &subset);
            FdReport::Generalized { set: subset, k }
        }
    }
}

fn extract_run(sys: &SystemOfRuns, ri: usize, generalized: Option<u16>) -> Run {
    let run = &sys.runs[ri];
    let h = run.horizon();
    let mut out = Run::new(run.n(), 2 * h + 1, run.fairness_budget(), run.seed());
    for m in 0..=h {
        // odd step 2m+1: primed report for every process still alive at m
        for p in run.procs() {
            if run.crashed_by(p, m) {
                continue;
            }
            let report = extraction_report(
                sys,
                crate::model::Point { run: RunIdx(ri as u32), time: m },
                p,
                generalized,
            );
            out.append(p, 2 * m + 1, Event::FdReportPrimed(report));
        }
        // even step 2m+2: the original event appended at m+1, with the
        // original failure-detector events deleted
        if m < h {
            for p in run.procs() {
                for e in run.full_history(p) {
                    if e.time == m + 1 && !matches!(e.event, Event::FdReport(_)) {
                        out.append(p, 2 * m + 2, e.event.clone());
                    }
                }
            }
        }
    }
    let mut closeout = run.closeout;
    closeout.fd_monotone = true;
    closeout.fd_stable = false;
    out.closeout = closeout;
    out
}

/// The perfect-detector extraction: even steps replay the run with original
/// detector events deleted; at every odd step each live process's primed
/// detector reports the processes it knows to have crashed.
pub fn f_transform(sys: &SystemOfRuns) -> Result<SystemOfRuns, TransformError> {
    if sys.provenance != Provenance::Exhaustive {
        return Err(TransformError::NeedsExhaustive("f transform".into()));
    }
    let runs: Vec<Run> =
        crate::par::map_indexed(sys.runs.len(), |ri| extract_run(sys, ri, None));
    let mut out = SystemOfRuns::new(sys.n, runs, Provenance::Exhaustive);
    out.crash_window = sys.crash_window;
    Ok(out)
}

/// The generalized extraction: the odd-step report is (S_l, k) where l is
/// the history length mod 2^n under the fixed bitmask-lex subset order, and
/// k is the largest count the process knows to have crashed within S_l.
pub fn f_prime_transform(sys: &SystemOfRuns, _t: u32) -> Result<SystemOfRuns, TransformError> {
    if sys.provenance != Provenance::Exhaustive {
        return Err(TransformError::NeedsExhaustive("f' transform".into()));
    }
    let n = sys.n;
    let runs: Vec<Run> =
        crate::par::map_indexed(sys.runs.len(), |ri| extract_run(sys, ri, Some(n)));
    let mut out = SystemOfRuns::new(sys.n, runs, Provenance::Exhaustive);
    out.crash_window = sys.crash_window;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdetect::{FdOracle, FdProperty, OracleKind};
    use crate::model::{Closeout, Point, Provenance, TimedEvent};
    use crate::protocols::ProtocolKind;
    use crate::sim::{
        generate_system, simulate, ChannelKind, CrashPlan, FamilyConfig, InitSchedule, LinkMode,
        ScenarioConfig,
    };
    use crate::{ActionId, ProcessId};
    use std::collections::BTreeSet;

    fn p(i: u16) -> ProcessId {
        ProcessId(i)
    }

    fn a(owner: u16, tag: u16) -> ActionId {
        ActionId { owner: p(owner), tag }
    }

    fn set(ids: &[u16]) -> BTreeSet<ProcessId> {
        ids.iter().map(|i| ProcessId(*i)).collect()
    }

    fn std_report(s: BTreeSet<ProcessId>) -> Event {
        Event::FdReport(FdReport::Standard(s))
    }

    #[test]
    fn impermanent_conversion_unions_prior_sets() {
        let events = vec![
            TimedEvent { time: 1, event: std_report(set(&[1])) },
            TimedEvent { time: 2, event: std_report(set(&[])) },
            TimedEvent { time: 3, event: std_report(set(&[2])) },
        ];
        let out = convert_impermanent_to_strong(&events, 3);
        let sets: Vec<BTreeSet<ProcessId>> = out
            .iter()
            .map(|e| match &e.event {
                Event::FdReportPrimed(FdReport::Standard(s)) => s.clone(),
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(sets, vec![set(&[1]), set(&[1]), set(&[1, 2])]);

        // all-empty input stays all-empty; idempotence on mixed fixtures
        let empties = vec![TimedEvent { time: 1, event: std_report(set(&[])) }];
        let out = convert_impermanent_to_strong(&empties, 3);
        assert!(matches!(
            &out[0].event,
            Event::FdReportPrimed(FdReport::Standard(s)) if s.is_empty()
        ));
        let once = convert_impermanent_to_strong(&events, 3);
        let twice = convert_impermanent_to_strong(&once, 3);
        assert_eq!(once, twice);
    }

    fn exhaustive_fixture(budget: u32, fip: bool) -> crate::model::SystemOfRuns {
        let fam = FamilyConfig {
            base: ScenarioConfig {
                n: 3,
                t: 3,
                protocol: ProtocolKind::UdcStrongFd,
                oracle: FdOracle::new(OracleKind::PerfectO),
                horizon: 8,
                budget,
                seed: 1,
                init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip,
                crash_plan: CrashPlan::RandomUpTo(3),
                broken_skip_ack: None,
            },
            exhaustive: true,
            closure_a1: true,
            closure_a2: true,
            closure_a5: true,
            link_mode: LinkMode::PerProcess,
            crash_window: 2,
            sample_runs: 1,
        };
        generate_system(&fam).unwrap()
    }

    #[test]
    fn extraction_preserves_event_order_and_doubles_time() {
        let sys = exhaustive_fixture(3, false);
        let out = f_transform(&sys).unwrap();
        assert_eq!(out.runs.len(), sys.runs.len());
        for (src, dst) in sys.runs.iter().zip(&out.runs) {
            assert_eq!(dst.horizon(), 2 * src.horizon() + 1);
            assert!(crate::model::validate_run(dst).is_empty());
            for q in src.procs() {
                // P2 index arithmetic: an event appended at source time m+1
                // lands at 2m+2, original detector events deleted
                let source: Vec<&TimedEvent> = src
                    .full_history(q)
                    .iter()
                    .filter(|e| !matches!(e.event, Event::FdReport(_)))
                    .collect();
                let copied: Vec<&TimedEvent> = dst
                    .full_history(q)
                    .iter()
                    .filter(|e| !matches!(e.event, Event::FdReportPrimed(_)))
                    .collect();
                assert_eq!(source.len(), copied.len());
                for (s, c) in source.iter().zip(&copied) {
                    assert_eq!(s.event, c.event);
                    assert_eq!(c.time, 2 * (s.time - 1) + 2);
                }
                // no original detector events survive
                assert!(!dst
                    .full_history(q)
                    .iter()
                    .any(|e| matches!(e.event, Event::FdReport(_))));
            }
        }
    }

    #[test]
    fn extracted_suspicions_grow_monotonically() {
        let sys = exhaustive_fixture(3, false);
        let out = f_transform(&sys).unwrap();
        for run in &out.runs {
            assert!(run.closeout.fd_monotone);
            for q in run.procs() {
                let mut last: BTreeSet<ProcessId> = BTreeSet::new();
                for e in run.full_history(q) {
                    if let Event::FdReportPrimed(FdReport::Standard(s)) = &e.event {
                        assert!(last.is_subset(s), "knowledge of crashes persists");
                        last = s.clone();
                    }
                }
            }
        }
    }

    #[test]
    fn crash_free_silent_run_extracts_empty_suspicions() {
        let mut run = crate::model::Run::new(2, 3, 8, 0);
        run.closeout = Closeout::all_closed();
        let sys = crate::model::SystemOfRuns::new(2, vec![run], Provenance::Exhaustive);
        let out = f_transform(&sys).unwrap();
        let run = &out.runs[0];
        for q in run.procs() {
            let odd_reports: Vec<&TimedEvent> = run.full_history(q).iter().collect();
            assert_eq!(odd_reports.len(), 4); // odd steps 1, 3, 5, 7
            for (i, e) in odd_reports.iter().enumerate() {
                assert_eq!(e.time, 2 * i as u32 + 1);
                assert!(matches!(
                    &e.event,
                    Event::FdReportPrimed(FdReport::Standard(s)) if s.is_empty()
                ));
            }
        }
    }

    #[test]
    fn extraction_refuses_sampled_systems() {
        let cfg = ScenarioConfig {
            n: 2,
            t: 2,
            protocol: ProtocolKind::NUdcGossip,
            oracle: FdOracle::new(OracleKind::PerfectO),
            horizon: 6,
            budget: 4,
            seed: 0,
            init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
            channel: ChannelKind::FairLossy { drop_percent: 50 },
            fip: false,
            crash_plan: CrashPlan::Explicit(Vec::new()),
            broken_skip_ack: None,
        };
        let sys = crate::model::SystemOfRuns::new(
            2,
            vec![simulate(&cfg).unwrap()],
            Provenance::Sampled,
        );
        assert!(matches!(f_transform(&sys), Err(TransformError::NeedsExhaustive(_))));
        assert!(matches!(f_prime_transform(&sys, 1), Err(TransformError::NeedsExhaustive(_))));
    }

    #[test]
    fn generalized_extraction_indexes_subsets_by_history_length() {
        // a live process with history length 4 at time m=4 reports
        // S_{(4+1) mod 4} = S_1 = {p0} at the odd step for n=2
        let mut run = crate::model::Run::new(2, 4, 8, 0);
        for m in 1..=4 {
            run.append(p(0), m, std_report(set(&[])));
            run.append(p(1), m, std_report(set(&[])));
        }
        run.closeout = Closeout::all_closed();
        let sys = crate::model::SystemOfRuns::new(2, vec![run], Provenance::Exhaustive);
        let out = f_prime_transform(&sys, 1).unwrap();
        let hist = out.runs[0].full_history(p(0));
        let at_9 = hist.iter().find(|e| e.time == 9).unwrap();
        match &at_9.event {
            Event::FdReportPrimed(FdReport::Generalized { set: s, k }) => {
                assert_eq!(*s, set(&[0]));
                assert_eq!(*k, 0);
            }
            other => panic!("expected a generalized primed report, got {other:?}"),
        }
        // crash-free exhaustive system: every k is zero
        for run in &out.runs {
            for q in run.procs() {
                for e in run.full_history(q) {
                    if let Event::FdReportPrimed(FdReport::Generalized { k, .. }) = &e.event {
                        assert_eq!(*k, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn max_k_is_the_least_crash_count_over_the_class() {
        // two indistinguishable runs: at least one of {p1, p2} has crashed in
        // each, neither individually in both, so p0 knows exactly k = 1
        let mut r1 = crate::model::Run::new(3, 3, 8, 0);
        r1.append(p(0), 1, std_report(set(&[])));
        let mut r2 = r1.clone();
        r1.append(p(1), 1, Event::Crash);
        r2.append(p(2), 1, Event::Crash);
        let sys = crate::model::SystemOfRuns::new(3, vec![r1, r2], Provenance::Exhaustive);
        let pt = Point { run: crate::model::RunIdx(0), time: 2 };
        let k = crate::formula::known_crash_count(&sys, pt, p(0), &set(&[1, 2]));
        assert_eq!(k, 1);
        assert_eq!(crate::formula::known_crash_count(&sys, pt, p(0), &set(&[1])), 0);
        assert_eq!(crate::formula::known_crash_count(&sys, pt, p(0), &set(&[2])), 0);
    }

    #[test]
    fn weak_to_strong_spreads_suspicions_to_everyone() {
        use crate::fdetect::{check_property, SuspicionSource};
        // only p1 ever suspects the crashed p2; after conversion every
        // correct process's primed reports eventually contain p2
        let mut run = crate::model::Run::new(3, 12, 8, 0);
        run.append(p(2), 1, Event::Crash);
        run.append(p(1), 3, std_report(set(&[2])));
        run.closeout = Closeout { fd_stable: true, ..Closeout::all_closed() };
        let sys = crate::model::SystemOfRuns::new(3, vec![run], Provenance::Sampled);
        let out = convert_weak_to_strong(&sys).unwrap();
        let run = &out.runs[0];
        assert!(crate::model::validate_run(run).is_empty());
        for q in [p(0), p(1)] {
            let last = run
                .full_history(q)
                .iter()
                .rev()
                .find_map(|e| match &e.event {
                    Event::FdReportPrimed(FdReport::Standard(s)) => Some(s.clone()),
                    _ => None,
                })
                .expect("primed reports exist");
            assert!(last.contains(&p(2)), "{q} hears about p2");
        }
        assert!(
            check_property(&out, FdProperty::StrongCompleteness, SuspicionSource::Primed)
                .is_pass()
        );
        // original events keep their order
        let orig: Vec<&Event> = sys.runs[0].full_history(p(1)).iter().map(|e| &e.event).collect();
        let kept: Vec<&Event> = run
            .full_history(p(1))
            .iter()
            .map(|e| &e.event)
            .filter(|e| match e {
                Event::FdReportPrimed(_) => false,
                Event::Send { msg, .. } | Event::Recv { msg, .. } => {
                    !matches!(msg.payload, crate::model::PayloadKind::Gossip(_))
                }
                _ => true,
            })
            .collect();
        assert_eq!(orig, kept);
    }

    #[test]
    fn no_suspicion_no_crash_converts_to_all_empty() {
        let mut run = crate::model::Run::new(2, 6, 8, 0);
        run.append(p(0), 1, std_report(set(&[])));
        run.closeout = Closeout { fd_stable: true, ..Closeout::all_closed() };
        let sys = crate::model::SystemOfRuns::new(2, vec![run], Provenance::Sampled);
        let out = convert_weak_to_strong(&sys).unwrap();
        for q in out.runs[0].procs() {
            for e in out.runs[0].full_history(q) {
                if let Event::FdReportPrimed(FdReport::Standard(s)) = &e.event {
                    assert!(s.is_empty());
                }
            }
        }
    }

    #[test]
    fn weak_to_strong_refuses_weak_incomplete_inputs() {
        // p2 crashes, nobody ever suspects it, reports settled: weak
        // completeness is refuted and the conversion must refuse
        let mut run = crate::model::Run::new(3, 8, 8, 0);
        run.append(p(2), 1, Event::Crash);
        run.append(p(0), 2, std_report(set(&[])));
        run.closeout = Closeout { fd_stable: true, ..Closeout::all_closed() };
        let sys = crate::model::SystemOfRuns::new(3, vec![run], Provenance::Sampled);
        assert!(matches!(
            convert_weak_to_strong(&sys),
            Err(TransformError::WeakCompletenessFailed)
        ));
    }
}
