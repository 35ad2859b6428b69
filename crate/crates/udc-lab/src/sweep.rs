//! The acceptance battery: property-based desk-scale sweeps exercising the
//! protocols, checkers and transforms end to end. Each criterion prints one
//! pass/fail line; the CLI `sweep` subcommand and the acceptance test target
//! both run through here.

use std::time::Instant;

use crate::check::{
    check_account_property, check_conditions, check_nudc, check_strong_eq_perfect, check_udc,
    dc_formulas, witness_self_validates, Condition, Status,
};
use crate::fdetect::{
    check_generalized, check_property, is_t_useful_event, AdversarySpec, FdOracle, FdProperty,
    FdReport, OracleKind, SuspicionSource,
};
use crate::model::{
    faulty_set, ActionId, Event, ProcessId, Provenance, Run, SystemOfRuns, Time,
};
use crate::protocols::ProtocolKind;
use crate::sim::{
    generate_system, simulate, ChannelKind, CrashPlan, FamilyConfig, InitSchedule, LinkMode,
    ScenarioConfig,
};

pub mod reference;

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub number: u32,
    pub name: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "CRITERION {:02} {} {}",
            self.number,
            self.name,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn single(run: Run) -> SystemOfRuns {
    let n = run.n();
    SystemOfRuns::new(n, vec![run], Provenance::Sampled)
}

fn base_config(n: u16, protocol: ProtocolKind, oracle: OracleKind, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n,
        t: n as u32,
        protocol,
        oracle: FdOracle { kind: oracle, seed, report_period: 1 },
        horizon: 60,
        budget: 8,
        seed,
        init_schedule: InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
        channel: ChannelKind::FairLossy { drop_percent: 50 },
        fip: false,
        crash_plan: CrashPlan::Explicit(Vec::new()),
        broken_skip_ack: None,
    }
}

fn crash_mix(n: u16, t: u32, seed: u64, horizon: Time) -> CrashPlan {
    match seed % 5 {
        // as many staggered crashes as the bound allows; with t = n this is
        // the all-crash plan (F(r) = Proc)
        0 => CrashPlan::Explicit(
            (0..n.min(t as u16))
                .map(|i| ((i as Time * 2).min(horizon - 1), ProcessId(i)))
                .collect(),
        ),
        1 => CrashPlan::Explicit(Vec::new()),
        _ => CrashPlan::RandomUpTo(t),
    }
}

struct DcTally {
    scenarios: usize,
    fails: usize,
    closed: usize,
    closed_pass: usize,
    inconclusive_without_obligations: usize,
    first_fail: Option<String>,
}

fn dc_sweep(configs: &[ScenarioConfig], non_uniform: bool) -> DcTally {
    let results: Vec<(bool, bool, bool, bool, Option<String>)> =
        crate::par::map_indexed(configs.len(), |i| {
            let cfg = &configs[i];
            let run = simulate(cfg).expect("sweep config is valid");
            let closed = run.closeout.actions && run.closeout.crashes;
            let sys = single(run);
            let mut any_fail = false;
            let mut all_pass = true;
            let mut bad_obligations = false;
            let mut fail_msg = None;
            for alpha in sys.initiated_actions() {
                let (v1, v2, v3) = if non_uniform {
                    check_nudc(&sys, alpha)
                } else {
                    check_udc(&sys, alpha)
                };
                for (name, v) in [("DC1", &v1), ("DC2", &v2), ("DC3", &v3)] {
                    match v.status {
                        Status::Fail => {
                            any_fail = true;
                            all_pass = false;
                            if fail_msg.is_none() {
                                fail_msg = Some(format!(
                                    "seed {} {name} FAIL: {}",
                                    cfg.seed,
                                    v.witness.as_ref().map(|w| w.detail.clone()).unwrap_or_default()
                                ));
                            }
                        }
                        Status::Inconclusive => {
                            all_pass = false;
                            if v.obligations.is_empty() {
                                bad_obligations = true;
                            }
                        }
                        Status::Pass => {}
                    }
                }
            }
            (any_fail, closed, all_pass, bad_obligations, fail_msg)
        });
    let mut tally = DcTally {
        scenarios: configs.len(),
        fails: 0,
        closed: 0,
        closed_pass: 0,
        inconclusive_without_obligations: 0,
        first_fail: None,
    };
    for (any_fail, closed, all_pass, bad_obl, fail_msg) in results {
        if any_fail {
            tally.fails += 1;
            if tally.first_fail.is_none() {
                tally.first_fail = fail_msg;
            }
        }
        if closed {
            tally.closed += 1;
            if all_pass {
                tally.closed_pass += 1;
            }
        }
        if bad_obl {
            tally.inconclusive_without_obligations += 1;
        }
    }
    tally
}

fn sweep_grid(
    protocol: ProtocolKind,
    oracle: OracleKind,
    channel: ChannelKind,
    ns: &[u16],
    seeds_per_n: u64,
    t_of: impl Fn(u16) -> u32,
) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for &n in ns {
        for seed in 0..seeds_per_n {
            let mut cfg = base_config(n, protocol, oracle.clone(), seed);
            cfg.channel = channel.clone();
            cfg.t = t_of(n);
            cfg.crash_plan = crash_mix(n, cfg.t, seed, cfg.horizon);
            cfg.init_schedule = InitSchedule::Explicit(vec![
                (0, ActionId { owner: ProcessId(0), tag: 0 }),
                (5, ActionId { owner: ProcessId(((seed as u16) % n).max(0)), tag: 7 }),
            ]);
            out.push(cfg);
        }
    }
    out
}

pub fn criterion_1() -> CriterionResult {
    let start = Instant::now();
    let configs = sweep_grid(
        ProtocolKind::NUdcGossip,
        OracleKind::PerfectO,
        ChannelKind::FairLossy { drop_percent: 50 },
        &[3, 4, 5],
        170,
        |n| n as u32,
    );
    let tally = dc_sweep(&configs, true);
    let elapsed = start.elapsed();
    let closed_ratio = if tally.closed == 0 {
        1.0
    } else {
        tally.closed_pass as f64 / tally.closed as f64
    };
    let pass = tally.scenarios >= 500
        && tally.fails == 0
        && closed_ratio >= 0.95
        && tally.inconclusive_without_obligations == 0
        && elapsed.as_secs() < 120;
    CriterionResult {
        number: 1,
        name: "nudc-gossip-fair-lossy",
        pass,
        details: vec![
            format!("scenarios={} fails={}", tally.scenarios, tally.fails),
            format!(
                "closed={} closed_pass={} ratio={closed_ratio:.3}",
                tally.closed, tally.closed_pass
            ),
            format!("elapsed={elapsed:?}"),
            tally.first_fail.unwrap_or_default(),
        ],
    }
}

pub fn criterion_2() -> CriterionResult {
    let configs = sweep_grid(
        ProtocolKind::UdcReliable,
        OracleKind::PerfectO,
        ChannelKind::Reliable,
        &[3, 4, 5],
        170,
        |n| n as u32,
    );
    let tally = dc_sweep(&configs, false);
    let pass = tally.fails == 0 && tally.closed_pass == tally.closed && tally.closed > 0;
    CriterionResult {
        number: 2,
        name: "udc-reliable-channel",
        pass,
        details: vec![
            format!("scenarios={} fails={}", tally.scenarios, tally.fails),
            format!("closed={} closed_pass={}", tally.closed, tally.closed_pass),
            tally.first_fail.unwrap_or_default(),
        ],
    }
}

pub fn criterion_3() -> CriterionResult {
    let configs = sweep_grid(
        ProtocolKind::UdcStrongFd,
        OracleKind::StrongO,
        ChannelKind::FairLossy { drop_percent: 50 },
        &[3, 4, 5],
        170,
        |n| n as u32,
    );
    let tally = dc_sweep(&configs, false);
    let pass = tally.fails == 0;
    CriterionResult {
        number: 3,
        name: "udc-strong-fd",
        pass,
        details: vec![
            format!("scenarios={} fails={}", tally.scenarios, tally.fails),
            tally.first_fail.unwrap_or_default(),
        ],
    }
}

pub fn criterion_4() -> CriterionResult {
    let trivial = sweep_grid(
        ProtocolKind::UdcTUseful(2),
        OracleKind::TrivialTUseful(2),
        ChannelKind::FairLossy { drop_percent: 50 },
        &[5],
        120,
        |_| 2,
    );
    let tally_a = dc_sweep(&trivial, false);
    let genuine = sweep_grid(
        ProtocolKind::UdcTUseful(2),
        OracleKind::ExactGeneralizedO,
        ChannelKind::FairLossy { drop_percent: 50 },
        &[4],
        120,
        |_| 2,
    );
    let tally_b = dc_sweep(&genuine, false);
    let pass = tally_a.fails == 0 && tally_b.fails == 0;
    CriterionResult {
        number: 4,
        name: "udc-t-useful",
        pass,
        details: vec![
            format!("trivial(n=5,t=2): scenarios={} fails={}", tally_a.scenarios, tally_a.fails),
            format!("genuine(n=4,t=2): scenarios={} fails={}", tally_b.scenarios, tally_b.fails),
            tally_a.first_fail.or(tally_b.first_fail).unwrap_or_default(),
        ],
    }
}

pub fn criterion_5() -> CriterionResult {
    let mut details = Vec::new();
    let mut pass = true;
    let verdicts: Vec<Option<String>> = crate::par::map_indexed(100, |i| {
        let seed = i as u64;
        let kind = if seed % 2 == 0 { OracleKind::WeakO } else { OracleKind::ImpermanentWeakO };
        let mut cfg = base_config(4, ProtocolKind::NUdcGossip, kind, seed);
        cfg.horizon = 40;
        cfg.crash_plan = CrashPlan::Explicit(match seed % 4 {
            0 => vec![],
            1 => vec![(seed as Time % 10, ProcessId(1))],
            2 => vec![(2, ProcessId(1)), (seed as Time % 12, ProcessId(3))],
            _ => vec![(seed as Time % 15, ProcessId(2))],
        });
        let run = simulate(&cfg).expect("valid config");
        let sys = single(run);
        let pre = check_property(&sys, FdProperty::WeakCompleteness, SuspicionSource::Original);
        if pre.is_fail() {
            return Some(format!("seed {seed}: input fails weak completeness"));
        }
        let strong_acc_before =
            check_property(&sys, FdProperty::StrongAccuracy, SuspicionSource::Original);
        let weak_acc_before =
            check_property(&sys, FdProperty::WeakAccuracy, SuspicionSource::Original);
        let converted = match crate::transform::convert_weak_to_strong(&sys) {
            Ok(c) => c,
            Err(e) => return Some(format!("seed {seed}: conversion refused: {e}")),
        };
        let comp =
            check_property(&converted, FdProperty::StrongCompleteness, SuspicionSource::Primed);
        if !comp.is_pass() {
            return Some(format!("seed {seed}: converted strong completeness {}", comp.status));
        }
        let strong_acc_after =
            check_property(&converted, FdProperty::StrongAccuracy, SuspicionSource::Primed);
        let weak_acc_after =
            check_property(&converted, FdProperty::WeakAccuracy, SuspicionSource::Primed);
        if strong_acc_before.is_pass() && strong_acc_after.is_fail() {
            return Some(format!("seed {seed}: strong accuracy degraded"));
        }
        if weak_acc_before.is_pass() && weak_acc_after.is_fail() {
            return Some(format!("seed {seed}: weak accuracy degraded"));
        }
        // impermanent-to-strong: permanence by construction, idempotent
        let mut cfg2 = cfg.clone();
        cfg2.oracle.kind = OracleKind::ImpermanentStrongO;
        let run2 = simulate(&cfg2).expect("valid config");
        let sys2 = single(run2);
        let once = crate::transform::convert_impermanent_to_strong_system(&sys2);
        let twice = crate::transform::convert_impermanent_to_strong_system(&once);
        for (a, b) in once.runs.iter().zip(&twice.runs) {
            if a != b {
                return Some(format!("seed {seed}: impermanent conversion not idempotent"));
            }
        }
        let comp2 =
            check_property(&once, FdProperty::StrongCompleteness, SuspicionSource::Primed);
        if comp2.is_fail() {
            return Some(format!("seed {seed}: impermanent->strong completeness FAIL"));
        }
        None
    });
    for v in verdicts.into_iter().flatten() {
        pass = false;
        if details.len() < 5 {
            details.push(v);
        }
    }
    details.insert(0, "100 seeded weak-complete systems converted".into());
    CriterionResult { number: 5, name: "convert-weak-and-impermanent", pass, details }
}

fn exhaustive_family(
    n: u16,
    protocol: ProtocolKind,
    oracle: OracleKind,
    horizon: Time,
    budget: u32,
    window: Time,
    links: LinkMode,
    fip: bool,
    inits: InitSchedule,
    t: u32,
) -> FamilyConfig {
    FamilyConfig {
        base: ScenarioConfig {
            n,
            t,
            protocol,
            oracle: FdOracle { kind: oracle, seed: 0, report_period: 1 },
            horizon,
            budget,
            seed: 1,
            init_schedule: inits,
            channel: ChannelKind::FairLossy { drop_percent: 50 },
            fip,
            crash_plan: CrashPlan::RandomUpTo(t),
            broken_skip_ack: None,
        },
        exhaustive: true,
        closure_a1: true,
        closure_a2: true,
        closure_a5: true,
        link_mode: links,
        crash_window: window,
        sample_runs: 1,
    }
}

pub fn criterion_6() -> CriterionResult {
    let mut details = Vec::new();
    let mut pass = true;
    // reporters are kept off the init owner so the lying report lands early
    // enough for crash-after-suspicion extensions inside the window
    let oracles = [
        OracleKind::PerfectO,
        OracleKind::AdversarialO(AdversarySpec::SuspectLive {
            reporter: ProcessId(1),
            target: ProcessId(0),
            at: 1,
        }),
        OracleKind::AdversarialO(AdversarySpec::SuspectLive {
            reporter: ProcessId(2),
            target: ProcessId(1),
            at: 1,
        }),
        OracleKind::AdversarialO(AdversarySpec::SuspectLive {
            reporter: ProcessId(1),
            target: ProcessId(2),
            at: 1,
        }),
        OracleKind::AdversarialO(AdversarySpec::NeverSuspect {
            reporter: ProcessId(0),
            target: ProcessId(1),
        }),
    ];
    let mut families = Vec::new();
    for &w in &[3, 4] {
        for &b in &[2, 3] {
            for oracle in &oracles {
                families.push((oracle.clone(), w, b));
            }
        }
    }
    let mut checked = 0;
    for (i, (oracle, window, budget)) in families.iter().enumerate() {
        let fam = exhaustive_family(
            3,
            ProtocolKind::NUdcGossip,
            oracle.clone(),
            6,
            *budget,
            *window,
            LinkMode::PerProcess,
            false,
            InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
            2,
        );
        let sys = match generate_system(&fam) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: generation failed: {e}"));
                continue;
            }
        };
        let gates = check_conditions(&sys, &[Condition::A1, Condition::A5(2)])
            .expect("exhaustive system");
        if !gates.iter().all(|(_, v)| v.is_pass()) {
            pass = false;
            details.push(format!("family {i}: gates did not pass"));
            continue;
        }
        checked += 1;
        match check_strong_eq_perfect(&sys) {
            Ok(v) if v.is_pass() => {}
            Ok(v) => {
                pass = false;
                details.push(format!(
                    "family {i} ({oracle:?}): verdicts disagree: {}",
                    v.witness.map(|w| w.detail).unwrap_or_default()
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: {e}"));
            }
        }
    }
    if checked < 20 {
        pass = false;
        details.push(format!("only {checked} families passed the gates"));
    }
    details.insert(0, format!("{checked} exhaustive families through A1+A5(2) gates"));
    CriterionResult { number: 6, name: "strong-equals-perfect", pass, details }
}

fn extraction_families() -> Vec<FamilyConfig> {
    let mut fams = Vec::new();
    for &(window, budget, period) in &[(2, 2, 3), (2, 3, 3), (3, 2, 4), (3, 3, 4), (2, 2, 4), (3, 2, 3)]
    {
        fams.push(exhaustive_family(
            3,
            ProtocolKind::UdcStrongFd,
            OracleKind::PerfectO,
            8,
            budget,
            window,
            LinkMode::PerProcess,
            true,
            InitSchedule::Recurring { period },
            3,
        ));
    }
    fams
}

pub fn criterion_7() -> CriterionResult {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    let families = extraction_families();
    for (i, fam) in families.iter().enumerate() {
        let fam_start = Instant::now();
        let sys = match generate_system(fam) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: {e}"));
                continue;
            }
        };
        let extracted = match crate::transform::f_transform(&sys) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: {e}"));
                continue;
            }
        };
        let acc = check_property(&extracted, FdProperty::StrongAccuracy, SuspicionSource::Primed);
        if !acc.is_pass() {
            pass = false;
            details.push(format!(
                "family {i}: extracted strong accuracy {} ({})",
                acc.status,
                acc.witness.map(|w| w.detail).unwrap_or_default()
            ));
            continue;
        }
        let comp =
            check_property(&extracted, FdProperty::StrongCompleteness, SuspicionSource::Primed);
        match comp.status {
            Status::Pass => {}
            Status::Fail => {
                pass = false;
                details.push(format!("family {i}: extracted strong completeness FAIL"));
            }
            Status::Inconclusive => {
                if comp.obligations.is_empty() {
                    pass = false;
                    details.push(format!("family {i}: inconclusive without obligations"));
                }
                // the horizon must be the only obstacle: +4 resolves it
                let mut bigger = fam.clone();
                bigger.base.horizon += 4;
                let resolved = generate_system(&bigger)
                    .ok()
                    .and_then(|s| crate::transform::f_transform(&s).ok())
                    .map(|s| {
                        check_property(&s, FdProperty::StrongCompleteness, SuspicionSource::Primed)
                    });
                match resolved {
                    Some(v) if v.is_pass() => {
                        details.push(format!(
                            "family {i}: completeness inconclusive at H={}, resolved at H+4",
                            fam.base.horizon
                        ));
                    }
                    _ => {
                        pass = false;
                        details.push(format!(
                            "family {i}: completeness did not resolve at H+4"
                        ));
                    }
                }
            }
        }
        let fam_elapsed = fam_start.elapsed();
        if fam_elapsed.as_secs() >= 300 {
            pass = false;
            details.push(format!("family {i}: runtime {fam_elapsed:?} over budget"));
        }
    }
    details.insert(
        0,
        format!("{} families, total {:?}", families.len(), start.elapsed()),
    );
    CriterionResult { number: 7, name: "perfect-detector-extraction", pass, details }
}

pub fn criterion_8() -> CriterionResult {
    let mut details = Vec::new();
    let mut pass = true;
    let mut fams = Vec::new();
    for &(budget, period) in &[(2, 3), (3, 3), (2, 4), (3, 4)] {
        fams.push(exhaustive_family(
            3,
            ProtocolKind::UdcTUseful(2),
            OracleKind::ExactGeneralizedO,
            8,
            budget,
            1,
            LinkMode::PerProcess,
            true,
            InitSchedule::Recurring { period },
            2,
        ));
    }
    for (i, fam) in fams.iter().enumerate() {
        let sys = match generate_system(fam) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: {e}"));
                continue;
            }
        };
        let extracted = match crate::transform::f_prime_transform(&sys, 2) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: {e}"));
                continue;
            }
        };
        // generalized strong accuracy is the hard requirement
        let acc = check_generalized(&extracted, 2);
        if acc.is_fail() {
            pass = false;
            details.push(format!(
                "family {i}: generalized accuracy FAIL ({})",
                acc.witness.map(|w| w.detail).unwrap_or_default()
            ));
            continue;
        }
        // completeness: every correct process sees a t-useful primed event,
        // allowing the horizon escape (resolved with H raised by 4) for runs
        // whose subset window closes before knowledge matures
        let missing = count_missing_useful(&extracted, 2);
        if missing > 0 {
            let mut bigger = fam.clone();
            bigger.base.horizon += 4;
            let resolved = generate_system(&bigger)
                .ok()
                .and_then(|s| crate::transform::f_prime_transform(&s, 2).ok())
                .map(|s| count_missing_useful(&s, 2));
            match resolved {
                Some(0) => details.push(format!(
                    "family {i}: {missing} runs missed a useful window at H={}, resolved at H+4",
                    fam.base.horizon
                )),
                _ => {
                    pass = false;
                    details.push(format!("family {i}: usefulness did not resolve at H+4"));
                }
            }
        }
    }
    details.insert(0, format!("{} exhaustive t-useful families", fams.len()));
    CriterionResult { number: 8, name: "generalized-detector-extraction", pass, details }
}

fn count_missing_useful(sys: &SystemOfRuns, t: u32) -> usize {
    let mut missing = 0;
    for run in &sys.runs {
        let faulty = faulty_set(run);
        for p in run.procs() {
            if faulty.contains(&p) {
                continue;
            }
            let seen = run.full_history(p).iter().any(|e| {
                matches!(&e.event, Event::FdReportPrimed(FdReport::Generalized { set, k })
                    if is_t_useful_event(set, *k, run.n(), t, &faulty))
            });
            if !seen {
                missing += 1;
            }
        }
    }
    missing
}

pub fn criterion_9() -> CriterionResult {
    let mut details = Vec::new();
    let mut pass = true;
    let mut fams = Vec::new();
    for &n in &[2u16, 3] {
        for &(window, budget) in &[(1, 2), (1, 3), (2, 2)] {
            for &links in &[LinkMode::PerProcess, LinkMode::Single] {
                fams.push(exhaustive_family(
                    n,
                    ProtocolKind::UdcStrongFd,
                    OracleKind::PerfectO,
                    8,
                    budget,
                    window,
                    links,
                    true,
                    InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
                    n as u32,
                ));
            }
        }
    }
    let mut checked = 0;
    for (i, fam) in fams.iter().enumerate() {
        let sys = match generate_system(fam) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                details.push(format!("family {i}: {e}"));
                continue;
            }
        };
        let alpha = ActionId { owner: ProcessId(0), tag: 0 };
        let mut family_ok = true;
        for p in (0..fam.base.n).map(ProcessId) {
            match check_account_property(&sys, p, ProcessId(0), alpha) {
                Ok(outcome) => {
                    if !outcome.preconditions_met {
                        family_ok = false;
                        details.push(format!("family {i}: gates unmet: {:?}", outcome.notes));
                    } else if !outcome.verdict.is_pass() {
                        family_ok = false;
                        details.push(format!(
                            "family {i} p={p}: account property {}",
                            outcome.verdict.status
                        ));
                    }
                }
                Err(e) => {
                    family_ok = false;
                    details.push(format!("family {i}: {e}"));
                }
            }
        }
        if family_ok {
            checked += 1;
        } else {
            pass = false;
        }
    }
    if checked < 10 {
        pass = false;
        details.push(format!("only {checked} families passed"));
    }
    details.insert(0, format!("{checked} exhaustive FIP families through A1+A2 gates"));
    CriterionResult { number: 9, name: "account-property", pass, details }
}

pub fn criterion_10() -> CriterionResult {
    let mut details = Vec::new();
    let mut pass = true;

    // suspect-a-live-process: exactly strong accuracy fails
    let mut cfg = base_config(
        3,
        ProtocolKind::NUdcGossip,
        OracleKind::AdversarialO(AdversarySpec::SuspectLive {
            reporter: ProcessId(0),
            target: ProcessId(2),
            at: 3,
        }),
        11,
    );
    cfg.horizon = 20;
    let sys = single(simulate(&cfg).expect("valid config"));
    let sa = check_property(&sys, FdProperty::StrongAccuracy, SuspicionSource::Original);
    if !sa.is_fail()
        || sa.witness.as_ref().map(|w| w.proc) != Some(Some(ProcessId(0)))
        || !sa.witness.as_ref().is_some_and(|w| w.detail.contains("p2"))
    {
        pass = false;
        details.push(format!("suspect-live: expected targeted FAIL, got {}", sa.status));
    }
    for (name, prop) in [
        ("weak-accuracy", FdProperty::WeakAccuracy),
        ("strong-completeness", FdProperty::StrongCompleteness),
        ("impermanent-strong", FdProperty::ImpermanentStrongCompleteness),
    ] {
        let v = check_property(&sys, prop, SuspicionSource::Original);
        if v.is_fail() {
            pass = false;
            details.push(format!("suspect-live: {name} unexpectedly FAILs"));
        }
    }

    // never-suspect: exactly strong completeness fails (weak passes)
    let mut cfg2 = base_config(
        3,
        ProtocolKind::NUdcGossip,
        OracleKind::AdversarialO(AdversarySpec::NeverSuspect {
            reporter: ProcessId(0),
            target: ProcessId(2),
        }),
        12,
    );
    cfg2.horizon = 20;
    cfg2.crash_plan = CrashPlan::Explicit(vec![(2, ProcessId(2))]);
    cfg2.t = 1;
    let sys2 = single(simulate(&cfg2).expect("valid config"));
    let sc = check_property(&sys2, FdProperty::StrongCompleteness, SuspicionSource::Original);
    let wc = check_property(&sys2, FdProperty::WeakCompleteness, SuspicionSource::Original);
    let sa2 = check_property(&sys2, FdProperty::StrongAccuracy, SuspicionSource::Original);
    if !sc.is_fail() || !wc.is_pass() || !sa2.is_pass() {
        pass = false;
        details.push(format!(
            "never-suspect: strong-completeness {} weak-completeness {} strong-accuracy {}",
            sc.status, wc.status, sa2.status
        ));
    }

    // broken protocol: performer skips one ack wait, crashes, leaves a
    // correct process that never performs; DC2 fails with a valid witness
    let mut cfg3 = base_config(2, ProtocolKind::UdcStrongFd, OracleKind::PerfectO, 13);
    cfg3.horizon = 20;
    cfg3.broken_skip_ack = Some(ProcessId(1));
    cfg3.crash_plan = CrashPlan::Explicit(vec![(2, ProcessId(0))]);
    cfg3.t = 1;
    let run3 = simulate(&cfg3).expect("valid config");
    let sys3 = single(run3);
    let alpha = ActionId { owner: ProcessId(0), tag: 0 };
    let (_, dc2, _) = check_udc(&sys3, alpha);
    if !dc2.is_fail() {
        pass = false;
        details.push(format!("broken protocol: DC2 {}", dc2.status));
    } else {
        let w = dc2.witness.clone().expect("FAIL carries a witness");
        let self_validating = dc_formulas(2, alpha, false).into_iter().any(|(name, f)| {
            name.starts_with("DC2") && witness_self_validates(&sys3, &f, &w)
        });
        if !self_validating {
            pass = false;
            details.push("broken protocol: witness does not self-validate".into());
        }
        // the non-uniform variant tolerates the crash of the performer
        let (_, dc2p, _) = check_nudc(&sys3, alpha);
        if dc2p.is_fail() {
            pass = false;
            details.push("broken protocol: DC2' should tolerate the performer crash".into());
        }
    }

    CriterionResult { number: 10, name: "negative-controls", pass, details }
}

fn oracle_systems() -> Vec<SystemOfRuns> {
    let mut out = Vec::new();
    let mut push = |fam: FamilyConfig| {
        let sys = generate_system(&fam).expect("oracle system generates");
        assert!(sys.point_count() <= 200, "oracle systems stay small");
        out.push(sys);
    };
    for &(budget, window) in &[(2, 1), (3, 2)] {
        push(exhaustive_family(
            2,
            ProtocolKind::NUdcGossip,
            OracleKind::PerfectO,
            4,
            budget,
            window,
            LinkMode::PerProcess,
            false,
            InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
            1,
        ));
    }
    push(exhaustive_family(
        2,
        ProtocolKind::UdcStrongFd,
        OracleKind::PerfectO,
        6,
        2,
        2,
        LinkMode::PerLink,
        true,
        InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
        1,
    ));
    push(exhaustive_family(
        3,
        ProtocolKind::NUdcGossip,
        OracleKind::PerfectO,
        4,
        2,
        1,
        LinkMode::Single,
        false,
        InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
        1,
    ));
    push(exhaustive_family(
        3,
        ProtocolKind::UdcTUseful(1),
        OracleKind::ExactGeneralizedO,
        4,
        2,
        1,
        LinkMode::Single,
        false,
        InitSchedule::Recurring { period: 2 },
        1,
    ));
    push(exhaustive_family(
        2,
        ProtocolKind::UdcStrongFd,
        OracleKind::TrivialTUseful(1),
        5,
        2,
        1,
        LinkMode::PerProcess,
        false,
        InitSchedule::Explicit(vec![(1, ActionId { owner: ProcessId(1), tag: 0 })]),
        1,
    ));
    for &seedish in &[2u16, 3] {
        push(exhaustive_family(
            seedish,
            ProtocolKind::NUdcGossip,
            OracleKind::PerfectO,
            4,
            3,
            1,
            LinkMode::Single,
            false,
            InitSchedule::Recurring { period: 3 },
            1,
        ));
    }
    push(exhaustive_family(
        2,
        ProtocolKind::UdcReliable,
        OracleKind::PerfectO,
        6,
        2,
        1,
        LinkMode::PerProcess,
        false,
        InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
        1,
    ));
    push(exhaustive_family(
        2,
        ProtocolKind::NUdcGossip,
        OracleKind::PerfectO,
        8,
        2,
        2,
        LinkMode::Single,
        false,
        InitSchedule::Explicit(vec![
            (0, ActionId { owner: ProcessId(0), tag: 0 }),
            (2, ActionId { owner: ProcessId(1), tag: 0 }),
        ]),
        2,
    ));
    out
}

pub fn criterion_11() -> CriterionResult {
    let systems = oracle_systems();
    let mut details = vec![format!("{} exhaustive systems", systems.len())];
    let actions = vec![
        ActionId { owner: ProcessId(0), tag: 0 },
        ActionId { owner: ProcessId(1), tag: 0 },
    ];
    let mismatch: Vec<Option<String>> = crate::par::map_indexed(1000, |i| {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(i as u64);
        for (si, sys) in systems.iter().enumerate() {
            let f = reference::random_formula(&mut rng, sys.n, &actions, 3);
            let mut ev = match crate::formula::Evaluator::new(sys, &f) {
                Ok(ev) => ev,
                Err(e) => return Some(format!("formula {i} rejected: {e}")),
            };
            for point in sys.points().collect::<Vec<_>>() {
                let fast = ev.eval(point).expect("point in range");
                let slow = reference::eval_ref(sys, point, &f);
                if fast != slow {
                    return Some(format!(
                        "formula {i} system {si} at run {} t={}: impl {fast} vs reference {slow}: {f}",
                        point.run.0, point.time
                    ));
                }
            }
        }
        None
    });
    let bad: Vec<String> = mismatch.into_iter().flatten().collect();
    let pass = bad.is_empty();
    details.extend(bad.into_iter().take(3));
    details.push("1000 random formulas, exact three-valued agreement".into());
    CriterionResult { number: 11, name: "evaluator-vs-reference", pass, details }
}

fn digest_str(h: &mut u64, s: &str) {
    for b in s.as_bytes() {
        *h = h.wrapping_mul(1099511628211).wrapping_add(u64::from(*b));
    }
}

fn determinism_digest() -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for seed in [3u64, 17, 99] {
        let mut cfg = base_config(4, ProtocolKind::UdcStrongFd, OracleKind::StrongO, seed);
        cfg.crash_plan = crash_mix(4, 4, seed, cfg.horizon);
        let run = simulate(&cfg).expect("valid config");
        digest_str(&mut h, &crate::trace::write_trace(&run));
        let sys = single(run);
        for alpha in sys.initiated_actions() {
            let (v1, v2, v3) = check_udc(&sys, alpha);
            for v in [v1, v2, v3] {
                digest_str(&mut h, &v.render("dc"));
            }
        }
    }
    let fam = exhaustive_family(
        3,
        ProtocolKind::UdcStrongFd,
        OracleKind::PerfectO,
        6,
        2,
        2,
        LinkMode::PerProcess,
        true,
        InitSchedule::Explicit(vec![(0, ActionId { owner: ProcessId(0), tag: 0 })]),
        2,
    );
    let sys = generate_system(&fam).expect("family generates");
    for run in &sys.runs {
        digest_str(&mut h, &crate::trace::write_trace(run));
    }
    let extracted = crate::transform::f_transform(&sys).expect("exhaustive");
    let acc = check_property(&extracted, FdProperty::StrongAccuracy, SuspicionSource::Primed);
    digest_str(&mut h, &acc.render("extracted-strong-accuracy"));
    h
}

pub fn criterion_12() -> CriterionResult {
    let first = determinism_digest();
    let second = determinism_digest();
    let pass = first == second;
    CriterionResult {
        number: 12,
        name: "determinism",
        pass,
        details: vec![format!("digest {first:016x} reproduced: {pass}")],
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    crate::par::init_thread_cap();
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
        criterion_11(),
        criterion_12(),
    ]
}
