//! Specification checkers: the DC1-DC3 / DC2' coordination conditions, the
//! A-condition predicates, the knowledge-precondition property for performing
//! an action, and the weak-equals-strong accuracy equivalence.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::fdetect::{check_property, FdProperty, SuspicionSource};
use crate::formula::{
    is_failure_insensitive, Evaluator, Formula, InsensitivityError, TruthValue,
};
use crate::model::{
    faulty_set, ActionId, Point, ProcessId, Provenance, RunIdx, SystemOfRuns, Time,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => write!(f, "PASS"),
            Status::Fail => write!(f, "FAIL"),
            Status::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Witness {
    pub run: RunIdx,
    pub time: Time,
    pub proc: Option<ProcessId>,
    pub detail: String,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Obligation {
    pub run: RunIdx,
    pub time: Time,
    pub detail: String,
}

/// Three-valued check result. FAIL always carries a witness; INCONCLUSIVE
/// always carries the unmet obligations.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Verdict {
    pub status: Status,
    pub witness: Option<Witness>,
    pub obligations: Vec<Obligation>,
}

impl Verdict {
    pub fn pass() -> Self {
        Verdict { status: Status::Pass, witness: None, obligations: Vec::new() }
    }

    pub fn fail(witness: Witness) -> Self {
        Verdict { status: Status::Fail, witness: Some(witness), obligations: Vec::new() }
    }

    pub fn inconclusive(obligations: Vec<Obligation>) -> Self {
        debug_assert!(!obligations.is_empty());
        Verdict { status: Status::Inconclusive, witness: None, obligations }
    }

    pub fn is_pass(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }

    /// Kleene conjunction of verdicts: any FAIL wins (earliest witness),
    /// otherwise any INCONCLUSIVE (obligations concatenated), else PASS.
    pub fn all(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut fail: Option<Witness> = None;
        let mut obligations = Vec::new();
        for v in verdicts {
            match v.status {
                Status::Fail => {
                    let w = v.witness.expect("FAIL carries a witness");
                    if fail
                        .as_ref()
                        .map_or(true, |old| (w.run.0, w.time) < (old.run.0, old.time))
                    {
                        fail = Some(w);
                    }
                }
                Status::Inconclusive => obligations.extend(v.obligations),
                Status::Pass => {}
            }
        }
        if let Some(w) = fail {
            Verdict::fail(w)
        } else if !obligations.is_empty() {
            Verdict::inconclusive(obligations)
        } else {
            Verdict::pass()
        }
    }

    /// One text block plus the machine-readable summary line.
    pub fn render(&self, name: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("check {name}\n"));
        out.push_str(&format!("  status: {}\n", self.status));
        if let Some(w) = &self.witness {
            let proc = w.proc.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "  witness: run {} time {} proc {} ({})\n",
                w.run.0, w.time, proc, w.detail
            ));
        }
        for o in &self.obligations {
            out.push_str(&format!(
                "  obligation: run {} time {} ({})\n",
                o.run.0, o.time, o.detail
            ));
        }
        out.push_str(&format!("CHECK {name} {}\n", self.status));
        out
    }
}

/// Validity of one formula instance as a verdict: the earliest refuting point
/// becomes the FAIL witness, undecided points become obligations.
pub fn validity_verdict(sys: &SystemOfRuns, f: &Formula, desc: &str) -> Verdict {
    let per_run = |ri: usize| -> (Option<Time>, Option<Time>) {
        let mut ev = match Evaluator::new(sys, f) {
            Ok(ev) => ev,
            Err(_) => return (None, Some(0)),
        };
        let run = &sys.runs[ri];
        let mut first_unknown: Option<Time> = None;
        for m in 0..=run.horizon() {
            match ev.eval(Point { run: RunIdx(ri as u32), time: m }) {
                Ok(TruthValue::False) => return (Some(m), first_unknown),
                Ok(TruthValue::Unknown) => {
                    if first_unknown.is_none() {
                        first_unknown = Some(m);
                    }
                }
                Ok(TruthValue::True) => {}
                Err(_) => return (None, Some(m)),
            }
        }
        (None, first_unknown)
    };
    let results = crate::par::map_indexed(sys.runs.len(), per_run);
    for (ri, (false_at, _)) in results.iter().enumerate() {
        if let Some(m) = false_at {
            return Verdict::fail(Witness {
                run: RunIdx(ri as u32),
                time: *m,
                proc: None,
                detail: format!("{desc} refuted"),
            });
        }
    }
    let obligations: Vec<Obligation> = results
        .iter()
        .enumerate()
        .filter_map(|(ri, (_, unknown_at))| {
            unknown_at.map(|m| Obligation {
                run: RunIdx(ri as u32),
                time: m,
                detail: format!("{desc} unwitnessed at the horizon"),
            })
        })
        .collect();
    if obligations.is_empty() {
        Verdict::pass()
    } else {
        Verdict::inconclusive(obligations)
    }
}

fn dc1(alpha: ActionId) -> Formula {
    let p = alpha.owner;
    Formula::Init(p, alpha)
        .implies(Formula::Do(p, alpha).or(Formula::Crash(p)).eventually())
}

fn dc2_instance(q1: ProcessId, q2: ProcessId, alpha: ActionId, non_uniform: bool) -> Formula {
    let mut after = Formula::Do(q2, alpha).or(Formula::Crash(q2));
    if non_uniform {
        after = after.or(Formula::Crash(q1));
    }
    Formula::Do(q1, alpha).implies(after.eventually())
}

fn dc3_instance(q2: ProcessId, alpha: ActionId) -> Formula {
    Formula::Do(q2, alpha).implies(Formula::Init(alpha.owner, alpha))
}

fn check_dc(sys: &SystemOfRuns, alpha: ActionId, non_uniform: bool) -> (Verdict, Verdict, Verdict) {
    let procs: Vec<ProcessId> = (0..sys.n).map(ProcessId).collect();
    let v1 = validity_verdict(sys, &dc1(alpha), &format!("DC1({alpha})"));
    let mut pair_verdicts = Vec::new();
    for &q1 in &procs {
        for &q2 in &procs {
            let f = dc2_instance(q1, q2, alpha, non_uniform);
            let name = if non_uniform { "DC2'" } else { "DC2" };
            pair_verdicts.push(validity_verdict(
                sys,
                &f,
                &format!("{name}({alpha}) do_{q1} => <>(do_{q2} | crash)"),
            ));
        }
    }
    let v2 = Verdict::all(pair_verdicts);
    let v3 = Verdict::all(procs.iter().map(|&q2| {
        validity_verdict(sys, &dc3_instance(q2, alpha), &format!("DC3({alpha}) at {q2}"))
    }));
    (v1, v2, v3)
}

/// UDC of alpha: DC1, DC2, DC3.
pub fn check_udc(sys: &SystemOfRuns, alpha: ActionId) -> (Verdict, Verdict, Verdict) {
    check_dc(sys, alpha, false)
}

/// nUDC of alpha: DC1, DC2', DC3.
pub fn check_nudc(sys: &SystemOfRuns, alpha: ActionId) -> (Verdict, Verdict, Verdict) {
    check_dc(sys, alpha, true)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Condition {
    A1,
    A2,
    A3,
    A5(u32),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::A1 => write!(f, "A1"),
            Condition::A2 => write!(f, "A2"),
            Condition::A3 => write!(f, "A3"),
            Condition::A5(t) => write!(f, "A5({t})"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum CheckError {
    #[error("{0} requires an exhaustive system")]
    NeedsExhaustive(String),
    #[error("precondition gate failed: {0}")]
    GateFailed(String),
}

/// Per-run, per-time hashes of the full cut prefix, for grouping runs that
/// share a prefix (extension candidates).
struct PrefixIndex {
    hashes: Vec<Vec<u64>>,
    /// per time m: prefix hash -> run indices
    classes: Vec<HashMap<u64, Vec<usize>>>,
    max_time: Time,
}

impl PrefixIndex {
    fn build(sys: &SystemOfRuns) -> Self {
        use std::hash::{Hash, Hasher};
        let max_time = sys.runs.iter().map(|r| r.horizon()).max().unwrap_or(0);
        let mut hashes = Vec::with_capacity(sys.runs.len());
        for run in &sys.runs {
            let mut per_time = Vec::with_capacity(max_time as usize + 1);
            let mut acc: u64 = 0xcbf29ce484222325;
            for m in 0..=run.horizon() {
                let mut h = std::collections::hash_map::DefaultHasher::new();
                acc.hash(&mut h);
                for p in run.procs() {
                    for e in run.history(p, m) {
                        if e.time == m {
                            p.hash(&mut h);
                            e.hash(&mut h);
                        }
                    }
                }
                acc = h.finish();
                per_time.push(acc);
            }
            hashes.push(per_time);
        }
        let mut classes: Vec<HashMap<u64, Vec<usize>>> =
            (0..=max_time).map(|_| HashMap::new()).collect();
        for (ri, per_time) in hashes.iter().enumerate() {
            for (m, h) in per_time.iter().enumerate() {
                classes[m].entry(*h).or_default().push(ri);
            }
        }
        PrefixIndex { hashes, classes, max_time }
    }

    fn class(&self, ri: usize, m: Time) -> &[usize] {
        self.classes[m as usize]
            .get(&self.hashes[ri][m as usize])
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }
}

/// The branch times at which crash-extension instances are expressible:
/// extensions crash processes at unit m, so m must fall inside the context's
/// crash window.
fn branch_limit(sys: &SystemOfRuns) -> Time {
    sys.crash_window.unwrap_or_else(|| {
        sys.runs.iter().map(|r| r.horizon()).max().unwrap_or(0)
    })
}

fn check_a1(sys: &SystemOfRuns, index: &PrefixIndex) -> Verdict {
    // candidate S sets: subsets of realized faulty sets
    let realized: Vec<BTreeSet<ProcessId>> = {
        let mut seen: BTreeSet<BTreeSet<ProcessId>> = BTreeSet::new();
        for r in &sys.runs {
            seen.insert(faulty_set(r));
        }
        let mut subsets: BTreeSet<BTreeSet<ProcessId>> = BTreeSet::new();
        for f in &seen {
            let items: Vec<ProcessId> = f.iter().copied().collect();
            for mask in 0u32..(1 << items.len()) {
                subsets.insert(
                    items
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, p)| *p)
                        .collect(),
                );
            }
        }
        subsets.into_iter().collect()
    };
    let limit = branch_limit(sys);

    // per (prefix class, m): which faulty sets are realized by extensions
    let mut class_fsets: Vec<HashMap<u64, BTreeSet<BTreeSet<ProcessId>>>> =
        (0..=index.max_time).map(|_| HashMap::new()).collect();
    for (ri, run) in sys.runs.iter().enumerate() {
        let f = faulty_set(run);
        for m in 0..=run.horizon() {
            class_fsets[m as usize]
                .entry(index.hashes[ri][m as usize])
                .or_default()
                .insert(f.clone());
        }
    }

    for (ri, run) in sys.runs.iter().enumerate() {
        for m in 0..run.horizon().min(limit) {
            let crashed = run.crashed_set_at(m);
            let available = &class_fsets[m as usize][&index.hashes[ri][m as usize]];
            for s in &realized {
                if crashed.is_subset(s) && !available.contains(s) {
                    return Verdict::fail(Witness {
                        run: RunIdx(ri as u32),
                        time: m,
                        proc: None,
                        detail: format!(
                            "no extension with F = {} from this point",
                            crate::fdetect::format_proc_set(s)
                        ),
                    });
                }
            }
        }
    }
    Verdict::pass()
}

fn survivor_signature(run: &crate::model::Run, faulty: &BTreeSet<ProcessId>) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in run.procs() {
        if !faulty.contains(&p) {
            for e in run.full_history(p) {
                e.hash(&mut h);
            }
        }
    }
    h.finish()
}

fn survivor_view_key(run: &crate::model::Run, faulty: &BTreeSet<ProcessId>, m: Time) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in run.procs() {
        if !faulty.contains(&p) {
            for e in run.history(p, m) {
                e.event.hash(&mut h);
            }
            u64::MAX.hash(&mut h);
        }
    }
    h.finish()
}

fn check_a2(sys: &SystemOfRuns, index: &PrefixIndex) -> Verdict {
    let limit = branch_limit(sys);
    // per (run, m): the set of survivor-future signatures reachable through
    // extensions that crash all of F by m+1
    let ext_sigs = |ri: usize, m: Time, faulty: &BTreeSet<ProcessId>| -> HashSet<u64> {
        index
            .class(ri, m)
            .iter()
            .filter(|&&rj| {
                let rj_run = &sys.runs[rj];
                faulty_set(rj_run) == *faulty
                    && faulty.iter().all(|q| rj_run.crashed_by(*q, m + 1))
            })
            .map(|&rj| survivor_signature(&sys.runs[rj], faulty))
            .collect()
    };

    let max_h = sys.runs.iter().map(|r| r.horizon()).max().unwrap_or(0);
    for m in 0..max_h.min(limit) {
        // group points by (F, survivor view at m)
        let mut groups: BTreeMap<(Vec<ProcessId>, u64), Vec<usize>> = BTreeMap::new();
        for (ri, run) in sys.runs.iter().enumerate() {
            if m >= run.horizon() {
                continue;
            }
            let f = faulty_set(run);
            let key = (f.iter().copied().collect(), survivor_view_key(run, &f, m));
            groups.entry(key).or_default().push(ri);
        }
        for ((f_items, _), members) in &groups {
            let faulty: BTreeSet<ProcessId> = f_items.iter().copied().collect();
            let sigsets: Vec<HashSet<u64>> =
                members.iter().map(|&ri| ext_sigs(ri, m, &faulty)).collect();
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    if sigsets[i].is_disjoint(&sigsets[j]) {
                        return Verdict::fail(Witness {
                            run: RunIdx(members[i] as u32),
                            time: m,
                            proc: None,
                            detail: format!(
                                "no matched all-crash extensions with run {} at time {m}",
                                members[j]
                            ),
                        });
                    }
                }
            }
        }
    }
    Verdict::pass()
}

fn check_a3(sys: &SystemOfRuns) -> Verdict {
    let mut obligations = Vec::new();
    for alpha in sys.initiated_actions() {
        for q in (0..sys.n).map(ProcessId) {
            let f = Formula::Init(alpha.owner, alpha).known_by(q);
            match is_failure_insensitive(sys, &f, q) {
                Ok(TruthValue::True) => {}
                Ok(TruthValue::False) => {
                    return Verdict::fail(Witness {
                        run: RunIdx(0),
                        time: 0,
                        proc: Some(q),
                        detail: format!("K_{q} init({alpha}) is sensitive to failure by {q}"),
                    });
                }
                Ok(TruthValue::Unknown) => obligations.push(Obligation {
                    run: RunIdx(0),
                    time: 0,
                    detail: format!("insensitivity of K_{q} init({alpha}) undecided"),
                }),
                Err(InsensitivityError::NotLocal { .. }) => obligations.push(Obligation {
                    run: RunIdx(0),
                    time: 0,
                    detail: format!("locality of K_{q} init({alpha}) undecided"),
                }),
                Err(InsensitivityError::Eval(e)) => obligations.push(Obligation {
                    run: RunIdx(0),
                    time: 0,
                    detail: format!("evaluation error: {e}"),
                }),
            }
        }
    }
    if obligations.is_empty() {
        Verdict::pass()
    } else {
        Verdict::inconclusive(obligations)
    }
}

fn check_a5(sys: &SystemOfRuns, t: u32) -> Verdict {
    let realized: BTreeSet<BTreeSet<ProcessId>> =
        sys.runs.iter().map(faulty_set).collect();
    let total: u32 = 1 << sys.n;
    for mask in 0..total {
        if mask.count_ones() > t {
            continue;
        }
        let s: BTreeSet<ProcessId> =
            (0..sys.n).filter(|i| mask & (1 << i) != 0).map(ProcessId).collect();
        if !realized.contains(&s) {
            return Verdict::fail(Witness {
                run: RunIdx(0),
                time: 0,
                proc: None,
                detail: format!(
                    "no run with F = {}",
                    crate::fdetect::format_proc_set(&s)
                ),
            });
        }
    }
    Verdict::pass()
}

/// Evaluates the requested A-conditions. A1 and A2 quantify over extensions
/// and need an exhaustive system.
pub fn check_conditions(
    sys: &SystemOfRuns,
    which: &[Condition],
) -> Result<Vec<(Condition, Verdict)>, CheckError> {
    let needs_exhaustive = which.iter().any(|c| matches!(c, Condition::A1 | Condition::A2));
    if needs_exhaustive && sys.provenance != Provenance::Exhaustive {
        return Err(CheckError::NeedsExhaustive("A1/A2".into()));
    }
    let index = if needs_exhaustive { Some(PrefixIndex::build(sys)) } else { None };
    let mut out = Vec::new();
    for c in which {
        let v = match c {
            Condition::A1 => check_a1(sys, index.as_ref().unwrap()),
            Condition::A2 => check_a2(sys, index.as_ref().unwrap()),
            Condition::A3 => check_a3(sys),
            Condition::A5(t) => check_a5(sys, *t),
        };
        out.push((*c, v));
    }
    Ok(out)
}

/// Outcome of the knowledge-precondition check, with its gate results.
#[derive(Clone, Debug)]
pub struct AccountOutcome {
    pub verdict: Verdict,
    pub preconditions_met: bool,
    pub notes: Vec<String>,
}

/// Builds the displayed validity of the account proposition for (p, p', alpha)
/// and evaluates it. A1 and A2 are checked first; when they fail the check
/// still runs but the outcome is tagged as unclaimed.
pub fn check_account_property(
    sys: &SystemOfRuns,
    p: ProcessId,
    p_prime: ProcessId,
    alpha: ActionId,
) -> Result<AccountOutcome, CheckError> {
    if sys.provenance != Provenance::Exhaustive {
        return Err(CheckError::NeedsExhaustive("account property".into()));
    }
    let gates = check_conditions(sys, &[Condition::A1, Condition::A2])?;
    let mut notes = Vec::new();
    let mut preconditions_met = true;
    for (c, v) in &gates {
        if !v.is_pass() {
            preconditions_met = false;
            notes.push(format!("precondition {c} not established: {}", v.status));
        }
    }

    let procs: Vec<ProcessId> = (0..sys.n).map(ProcessId).collect();
    let init = Formula::Init(p_prime, alpha);
    let antecedent = Formula::conj(
        std::iter::once(init.clone())
            .chain(procs.iter().map(|&q| {
                init.clone().known_by(q).or(Formula::Crash(q)).eventually()
            }))
            .collect(),
    )
    .known_by(p);
    let some_correct =
        Formula::disj(procs.iter().map(|&q| Formula::Crash(q).not().always()).collect());
    let known_holder = Formula::disj(
        procs
            .iter()
            .map(|&q| init.clone().known_by(q).and(Formula::Crash(q).not().always()))
            .collect(),
    );
    let consequent = some_correct.implies(known_holder).known_by(p);
    let prop = antecedent.implies(consequent);

    let verdict = validity_verdict(sys, &prop, &format!("account({p},{p_prime},{alpha})"));
    Ok(AccountOutcome { verdict, preconditions_met, notes })
}

/// In systems satisfying A1 and A5(n-1), weak accuracy holds iff strong
/// accuracy holds; this check compares the two verdicts. The gates are hard
/// preconditions: the equivalence is not claimed without them.
pub fn check_strong_eq_perfect(sys: &SystemOfRuns) -> Result<Verdict, CheckError> {
    let gates =
        check_conditions(sys, &[Condition::A1, Condition::A5(sys.n.saturating_sub(1) as u32)])?;
    for (c, v) in &gates {
        if !v.is_pass() {
            return Err(CheckError::GateFailed(format!("{c}: {}", v.status)));
        }
    }
    let weak = check_property(sys, FdProperty::WeakAccuracy, SuspicionSource::Original);
    let strong = check_property(sys, FdProperty::StrongAccuracy, SuspicionSource::Original);
    if weak.status == strong.status {
        Ok(Verdict::pass())
    } else {
        let w = strong.witness.or(weak.witness).unwrap_or(Witness {
            run: RunIdx(0),
            time: 0,
            proc: None,
            detail: String::new(),
        });
        Ok(Verdict::fail(Witness {
            run: w.run,
            time: w.time,
            proc: w.proc,
            detail: format!(
                "weak accuracy {} but strong accuracy {} ({})",
                weak.status, strong.status, w.detail
            ),
        }))
    }
}

/// Re-evaluates a DC FAIL witness against the falsified instance; used by the
/// witness self-validation tests and the negative controls.
pub fn witness_self_validates(sys: &SystemOfRuns, f: &Formula, w: &Witness) -> bool {
    Evaluator::new(sys, f)
        .and_then(|mut ev| ev.eval(Point { run: w.run, time: w.time }))
        .map(|v| v == TruthValue::False)
        .unwrap_or(false)
}

/// The DC formula instances for an action, for callers that need to re-check
/// witnesses or enumerate obligations.
pub fn dc_formulas(sys_n: u16, alpha: ActionId, non_uniform: bool) -> Vec<(String, Formula)> {
    let procs: Vec<ProcessId> = (0..sys_n).map(ProcessId).collect();
    let mut out = vec![("DC1".to_string(), dc1(alpha))];
    for &q1 in &procs {
        for &q2 in &procs {
            let name = if non_uniform { "DC2'" } else { "DC2" };
            out.push((
                format!("{name}[{q1},{q2}]"),
                dc2_instance(q1, q2, alpha, non_uniform),
            ));
        }
    }
    for &q2 in &procs {
        out.push((format!("DC3[{q2}]"), dc3_instance(q2, alpha)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdetect::{FdOracle, OracleKind};
    use crate::model::{Closeout, Event, Run};
    use crate::protocols::ProtocolKind;
    use crate::sim::{
        generate_system, simulate, ChannelKind, CrashPlan, FamilyConfig, InitSchedule, LinkMode,
        ScenarioConfig,
    };

    fn p(i: u16) -> ProcessId {
        ProcessId(i)
    }

    fn a(owner: u16, tag: u16) -> ActionId {
        ActionId { owner: p(owner), tag }
    }

    fn closed(mut run: Run) -> Run {
        run.closeout = Closeout::all_closed();
        run
    }

    fn sampled(runs: Vec<Run>, n: u16) -> SystemOfRuns {
        SystemOfRuns::new(n, runs, Provenance::Sampled)
    }

    #[test]
    fn no_init_anywhere_is_vacuously_uniform() {
        let run = closed(Run::new(3, 4, 8, 0));
        let sys = sampled(vec![run], 3);
        let (v1, v2, v3) = check_udc(&sys, a(0, 0));
        assert!(v1.is_pass() && v2.is_pass() && v3.is_pass());
    }

    #[test]
    fn do_without_init_fails_dc3_at_the_do_point() {
        let alpha = a(0, 0);
        let mut run = Run::new(2, 4, 8, 0);
        run.append(p(1), 2, Event::Do(alpha));
        let sys = sampled(vec![closed(run)], 2);
        let (v1, v2, v3) = check_udc(&sys, alpha);
        assert!(v3.is_fail());
        let w = v3.witness.as_ref().unwrap();
        assert_eq!((w.run, w.time), (RunIdx(0), 2));
        // the witness re-evaluates to a genuine violation
        let self_validating = dc_formulas(2, alpha, false)
            .into_iter()
            .any(|(name, f)| name.starts_with("DC3") && witness_self_validates(&sys, &f, w));
        assert!(self_validating);
        // DC1 holds vacuously, DC2 fails too (p0 never performs on a closed run)
        assert!(v1.is_pass());
        assert!(v2.is_fail());
    }

    #[test]
    fn crash_of_the_performer_separates_dc2_from_dc2_prime() {
        let alpha = a(0, 0);
        let mut run = Run::new(2, 6, 8, 0);
        run.append(p(0), 1, Event::Init(alpha));
        run.append(p(0), 2, Event::Do(alpha));
        run.append(p(0), 3, Event::Crash);
        let sys = sampled(vec![closed(run)], 2);
        let (_, dc2, _) = check_udc(&sys, alpha);
        assert!(dc2.is_fail(), "uniform coordination demands p1 perform");
        let (v1, dc2p, v3) = check_nudc(&sys, alpha);
        assert!(dc2p.is_pass(), "the crash of the performer excuses nUDC");
        assert!(v1.is_pass() && v3.is_pass());
    }

    #[test]
    fn dc_passes_cross_checked_with_a_direct_event_scan() {
        let cfg = ScenarioConfig {
            n: 3,
            t: 1,
            protocol: ProtocolKind::UdcStrongFd,
            oracle: FdOracle { kind: OracleKind::StrongO, seed: 3, report_period: 1 },
            horizon: 50,
            budget: 8,
            seed: 21,
            init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
            channel: ChannelKind::FairLossy { drop_percent: 40 },
            fip: false,
            crash_plan: CrashPlan::Explicit(vec![(4, p(2))]),
            broken_skip_ack: None,
        };
        let run = simulate(&cfg).unwrap();
        let alpha = a(0, 0);
        let sys = sampled(vec![run], 3);
        let (v1, v2, v3) = check_udc(&sys, alpha);
        assert!(v1.is_pass() && v2.is_pass() && v3.is_pass(), "{v1:?} {v2:?} {v3:?}");

        // independent oracle: a direct scan over the recorded events
        let run = &sys.runs[0];
        let h = run.horizon();
        for q1 in run.procs() {
            let did = run
                .full_history(q1)
                .iter()
                .any(|e| matches!(&e.event, Event::Do(x) if *x == alpha));
            // DC3: a Do is preceded by the init
            if did {
                assert!(run
                    .full_history(alpha.owner)
                    .iter()
                    .any(|e| matches!(&e.event, Event::Init(x) if *x == alpha)));
            }
            // DC2: every other process performs or crashes by the horizon
            if did {
                for q2 in run.procs() {
                    let ok = run.has_event_by(q2, h, &Event::Do(alpha))
                        || run.has_event_by(q2, h, &Event::Crash);
                    assert!(ok, "direct scan: {q2} neither performs nor crashes");
                }
            }
        }
    }

    #[test]
    fn a5_fails_with_the_missing_subset_as_witness() {
        // deliberately pruned fixture: remove every run with F = {p0}
        let fam = FamilyConfig {
            base: ScenarioConfig {
                n: 3,
                t: 2,
                protocol: ProtocolKind::NUdcGossip,
                oracle: FdOracle::new(OracleKind::PerfectO),
                horizon: 6,
                budget: 2,
                seed: 1,
                init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip: false,
                crash_plan: CrashPlan::RandomUpTo(2),
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
        let sys = generate_system(&fam).unwrap();
        let full = check_conditions(&sys, &[Condition::A5(2)]).unwrap();
        assert!(full[0].1.is_pass());

        let target: std::collections::BTreeSet<ProcessId> = [p(0)].into_iter().collect();
        let pruned: Vec<Run> = sys
            .runs
            .iter()
            .filter(|r| crate::model::faulty_set(r) != target)
            .cloned()
            .collect();
        let pruned_sys = SystemOfRuns::new(3, pruned, Provenance::Exhaustive)
            .with_crash_window(2);
        let res = check_conditions(&pruned_sys, &[Condition::A5(2)]).unwrap();
        assert!(res[0].1.is_fail());
        assert!(res[0].1.witness.as_ref().unwrap().detail.contains("{0}"));
    }

    #[test]
    fn missing_crash_extensions_fail_a1() {
        // generate the full product, then drop every run in which p1
        // crashes later than unit 0; crash-free points then lack the
        // delayed extension A1 demands inside the window
        let fam = FamilyConfig {
            base: ScenarioConfig {
                n: 2,
                t: 1,
                protocol: ProtocolKind::NUdcGossip,
                oracle: FdOracle::new(OracleKind::PerfectO),
                horizon: 6,
                budget: 2,
                seed: 1,
                init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip: false,
                crash_plan: CrashPlan::RandomUpTo(1),
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
        let sys = generate_system(&fam).unwrap();
        assert!(check_conditions(&sys, &[Condition::A1]).unwrap()[0].1.is_pass());
        let kept: Vec<Run> = sys
            .runs
            .iter()
            .filter(|r| match r.crash_time(p(1)) {
                None => true,
                Some(t) => t <= 1,
            })
            .cloned()
            .collect();
        assert!(kept.len() < sys.runs.len());
        let pruned = SystemOfRuns::new(2, kept, Provenance::Exhaustive).with_crash_window(2);
        let res = check_conditions(&pruned, &[Condition::A1]).unwrap();
        assert!(res[0].1.is_fail());
    }

    #[test]
    fn unmatched_all_crash_extensions_fail_a2() {
        // two runs whose survivor views coincide at m=1 while the faulty
        // process's hidden prefix forces diverging survivor futures
        let alpha = a(0, 0);
        let x = Event::FdReport(crate::fdetect::FdReport::Standard(Default::default()));
        let mut r1 = Run::new(2, 3, 8, 0);
        r1.append(p(0), 1, Event::Init(alpha));
        r1.append(p(0), 2, Event::Crash);
        r1.append(p(1), 1, x.clone());
        r1.append(p(1), 2, x.clone());
        let mut r2 = Run::new(2, 3, 8, 0);
        r2.append(p(0), 1, Event::Crash);
        r2.append(p(1), 1, x.clone());
        r2.append(
            p(1),
            2,
            Event::FdReport(crate::fdetect::FdReport::Standard(
                [p(0)].into_iter().collect(),
            )),
        );
        let sys = SystemOfRuns::new(2, vec![r1, r2], Provenance::Exhaustive)
            .with_crash_window(2);
        let res = check_conditions(&sys, &[Condition::A2]).unwrap();
        assert!(res[0].1.is_fail());
    }

    #[test]
    fn settled_generalized_streams_without_useful_events_fail() {
        use crate::fdetect::{check_generalized, FdReport};
        let mut run = Run::new(3, 8, 8, 0);
        run.append(p(1), 1, Event::Crash);
        // p0 only ever suspects within {p2}, which can never contain F
        run.append(
            p(0),
            3,
            Event::FdReport(FdReport::Generalized { set: [p(2)].into_iter().collect(), k: 0 }),
        );
        run.closeout = Closeout { fd_stable: true, ..Closeout::all_closed() };
        let sys = sampled(vec![run], 3);
        let v = check_generalized(&sys, 1);
        assert!(v.is_fail());
        assert!(v.witness.unwrap().detail.contains("settled"));
    }

    #[test]
    fn a_conditions_need_exhaustive_provenance() {
        let run = closed(Run::new(2, 2, 8, 0));
        let sys = sampled(vec![run], 2);
        assert!(matches!(
            check_conditions(&sys, &[Condition::A1]),
            Err(CheckError::NeedsExhaustive(_))
        ));
        // ... and so does the equivalence check built on those gates
        assert!(check_strong_eq_perfect(&sys).is_err());
    }

    #[test]
    fn account_property_is_vacuous_without_the_antecedent() {
        // no point satisfies the antecedent for a never-initiated action
        let mut run = Run::new(2, 3, 8, 0);
        run.closeout = Closeout::all_closed();
        let mut sys = SystemOfRuns::new(2, vec![run], Provenance::Exhaustive);
        sys.crash_window = Some(1);
        let out = check_account_property(&sys, p(0), p(1), a(1, 9)).unwrap();
        assert!(out.verdict.is_pass());
    }

    #[test]
    fn account_property_runs_tagged_when_gates_fail() {
        // pruning crash runs breaks A1; the checker still reports a verdict
        let fam = FamilyConfig {
            base: ScenarioConfig {
                n: 2,
                t: 2,
                protocol: ProtocolKind::UdcStrongFd,
                oracle: FdOracle::new(OracleKind::PerfectO),
                horizon: 6,
                budget: 2,
                seed: 1,
                init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip: true,
                crash_plan: CrashPlan::RandomUpTo(2),
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
        let sys = generate_system(&fam).unwrap();
        // keep F = {p1} runs only when the crash lands immediately, so the
        // late-crash extension A1 demands at crash-free points is missing
        let target: std::collections::BTreeSet<ProcessId> = [p(1)].into_iter().collect();
        let kept: Vec<Run> = sys
            .runs
            .iter()
            .filter(|r| crate::model::faulty_set(r) != target || r.crashed_by(p(1), 1))
            .cloned()
            .collect();
        assert!(kept.len() < sys.runs.len(), "the pruning removes something");
        let pruned = SystemOfRuns::new(2, kept, Provenance::Exhaustive).with_crash_window(2);
        let out = check_account_property(&pruned, p(0), p(0), a(0, 0)).unwrap();
        assert!(!out.preconditions_met);
        assert!(!out.notes.is_empty());
    }

    #[test]
    fn verdict_rendering_carries_machine_lines() {
        let v = Verdict::fail(Witness {
            run: RunIdx(3),
            time: 7,
            proc: Some(p(1)),
            detail: "boom".into(),
        });
        let text = v.render("DC2");
        assert!(text.contains("CHECK DC2 FAIL"));
        assert!(text.contains("run 3 time 7 proc p1"));
        let i = Verdict::inconclusive(vec![Obligation {
            run: RunIdx(0),
            time: 1,
            detail: "pending".into(),
        }]);
        assert!(i.render("DC1").contains("CHECK DC1 INCONCLUSIVE"));
    }

    #[test]
    fn verdict_conjunction_prefers_the_earliest_failure() {
        let w1 = Witness { run: RunIdx(1), time: 3, proc: None, detail: "late".into() };
        let w2 = Witness { run: RunIdx(0), time: 9, proc: None, detail: "early-run".into() };
        let combined = Verdict::all(vec![Verdict::fail(w1), Verdict::fail(w2.clone())]);
        assert_eq!(combined.witness.unwrap().detail, "early-run");
        let pass_and_open = Verdict::all(vec![
            Verdict::pass(),
            Verdict::inconclusive(vec![Obligation { run: RunIdx(0), time: 0, detail: "x".into() }]),
        ]);
        assert_eq!(pass_and_open.status, Status::Inconclusive);
    }

    #[test]
    fn dc2_pass_implies_dc2_prime_pass() {
        for seed in 0..10u64 {
            let cfg = ScenarioConfig {
                n: 3,
                t: 3,
                protocol: ProtocolKind::UdcStrongFd,
                oracle: FdOracle { kind: OracleKind::StrongO, seed, report_period: 1 },
                horizon: 40,
                budget: 8,
                seed,
                init_schedule: InitSchedule::Explicit(vec![(0, a(0, 0))]),
                channel: ChannelKind::FairLossy { drop_percent: 50 },
                fip: false,
                crash_plan: CrashPlan::RandomUpTo(3),
                broken_skip_ack: None,
            };
            let sys = sampled(vec![simulate(&cfg).unwrap()], 3);
            let alpha = a(0, 0);
            let (_, dc2, _) = check_udc(&sys, alpha);
            let (_, dc2p, _) = check_nudc(&sys, alpha);
            if dc2.is_pass() {
                assert!(dc2p.is_pass(), "seed {seed}: DC2 is strictly stronger");
            }
        }
    }
}
