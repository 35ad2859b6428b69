//! The brute-force reference evaluator: a direct recursive rendering of the
//! three-valued semantics with no interning, no memoization and no
//! indistinguishability index. It exists as an independent oracle for the
//! production evaluator and must stay that way; keep it naive.

use rand::Rng;

use crate::formula::{Formula, TruthValue};
use crate::model::{
    history_eq, ActionId, Event, PayloadKind, Point, ProcessId, Provenance, Run, SystemOfRuns,
};

fn propositional(f: &Formula) -> bool {
    match f {
        Formula::Send { .. }
        | Formula::Recv { .. }
        | Formula::Crash(_)
        | Formula::Do(..)
        | Formula::Init(..) => true,
        Formula::Not(x) => propositional(x),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            propositional(a) && propositional(b)
        }
        Formula::Always(_) | Formula::Eventually(_) | Formula::Knows(..) => false,
    }
}

fn stable(f: &Formula) -> bool {
    match f {
        Formula::Send { .. }
        | Formula::Recv { .. }
        | Formula::Crash(_)
        | Formula::Do(..)
        | Formula::Init(..) => true,
        Formula::And(a, b) | Formula::Or(a, b) => stable(a) && stable(b),
        Formula::Not(_) | Formula::Implies(..) => false,
        Formula::Always(_) => true,
        Formula::Eventually(x) => stable(x),
        Formula::Knows(_, x) => stable(x),
    }
}

fn frozen(f: &Formula, run: &Run) -> bool {
    match f {
        Formula::Send { .. } | Formula::Recv { .. } => run.closeout.comm,
        Formula::Crash(_) => run.closeout.crashes,
        Formula::Do(..) | Formula::Init(..) => run.closeout.actions,
        Formula::Not(x) => frozen(x, run),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            frozen(a, run) && frozen(b, run)
        }
        Formula::Always(x) | Formula::Eventually(x) => frozen(x, run),
        Formula::Knows(_, x) => frozen(x, run),
    }
}

/// Direct recursive evaluation. Panics on malformed points; test-only use.
pub fn eval_ref(sys: &SystemOfRuns, point: Point, f: &Formula) -> TruthValue {
    let run = sys.run(point.run);
    match f {
        Formula::Send { from, to, payload } => TruthValue::from_bool(
            run.history(*from, point.time).iter().any(|e| {
                matches!(&e.event, Event::Send { to: t, msg } if t == to && msg.payload == *payload)
            }),
        ),
        Formula::Recv { at, from, payload } => TruthValue::from_bool(
            run.history(*at, point.time).iter().any(|e| {
                matches!(&e.event, Event::Recv { from: g, msg } if g == from && msg.payload == *payload)
            }),
        ),
        Formula::Crash(p) => TruthValue::from_bool(
            run.history(*p, point.time).iter().any(|e| matches!(e.event, Event::Crash)),
        ),
        Formula::Do(p, a) => TruthValue::from_bool(
            run.history(*p, point.time)
                .iter()
                .any(|e| matches!(&e.event, Event::Do(x) if x == a)),
        ),
        Formula::Init(p, a) => TruthValue::from_bool(
            run.history(*p, point.time)
                .iter()
                .any(|e| matches!(&e.event, Event::Init(x) if x == a)),
        ),
        Formula::Not(x) => eval_ref(sys, point, x).not(),
        Formula::And(a, b) => eval_ref(sys, point, a).and(eval_ref(sys, point, b)),
        Formula::Or(a, b) => eval_ref(sys, point, a).or(eval_ref(sys, point, b)),
        Formula::Implies(a, b) => eval_ref(sys, point, a).implies(eval_ref(sys, point, b)),
        Formula::Eventually(x) => {
            let mut any_unknown = false;
            for m in point.time..=run.horizon() {
                match eval_ref(sys, Point { run: point.run, time: m }, x) {
                    TruthValue::True => return TruthValue::True,
                    TruthValue::Unknown => any_unknown = true,
                    TruthValue::False => {}
                }
            }
            if !any_unknown && propositional(x) && frozen(x, run) {
                TruthValue::False
            } else {
                TruthValue::Unknown
            }
        }
        Formula::Always(x) => {
            let mut any_unknown = false;
            for m in point.time..=run.horizon() {
                match eval_ref(sys, Point { run: point.run, time: m }, x) {
                    TruthValue::False => return TruthValue::False,
                    TruthValue::Unknown => any_unknown = true,
                    TruthValue::True => {}
                }
            }
            if any_unknown {
                TruthValue::Unknown
            } else if stable(x) || (propositional(x) && frozen(x, run)) {
                TruthValue::True
            } else {
                TruthValue::Unknown
            }
        }
        Formula::Knows(p, x) => {
            let here = run.history(*p, point.time);
            let mut any_unknown = false;
            for (ri, other) in sys.runs.iter().enumerate() {
                for m in 0..=other.horizon() {
                    if !history_eq(other.history(*p, m), here) {
                        continue;
                    }
                    match eval_ref(
                        sys,
                        Point { run: crate::model::RunIdx(ri as u32), time: m },
                        x,
                    ) {
                        TruthValue::False => return TruthValue::False,
                        TruthValue::Unknown => any_unknown = true,
                        TruthValue::True => {}
                    }
                }
            }
            if any_unknown || sys.provenance != Provenance::Exhaustive {
                TruthValue::Unknown
            } else {
                TruthValue::True
            }
        }
    }
}

/// A random formula over the given process count and action vocabulary.
/// Knowledge operators are bounded to one per path to keep the reference
/// evaluator's cost quadratic rather than exponential.
pub fn random_formula(
    rng: &mut impl Rng,
    n: u16,
    actions: &[ActionId],
    depth: u32,
) -> Formula {
    gen(rng, n, actions, depth, 1)
}

fn any_proc(rng: &mut impl Rng, n: u16) -> ProcessId {
    ProcessId(rng.random_range(0..n))
}

fn any_action<'a>(rng: &mut impl Rng, n: u16, actions: &'a [ActionId]) -> ActionId {
    let usable: Vec<&ActionId> = actions.iter().filter(|a| a.owner.0 < n).collect();
    if usable.is_empty() {
        ActionId { owner: ProcessId(0), tag: 0 }
    } else {
        *usable[rng.random_range(0..usable.len())]
    }
}

fn leaf(rng: &mut impl Rng, n: u16, actions: &[ActionId]) -> Formula {
    match rng.random_range(0..6) {
        0 => Formula::Crash(any_proc(rng, n)),
        1 => Formula::Do(any_proc(rng, n), any_action(rng, n, actions)),
        2 => Formula::Init(any_proc(rng, n), any_action(rng, n, actions)),
        3 => {
            let from = any_proc(rng, n);
            let mut to = any_proc(rng, n);
            if to == from {
                to = ProcessId((to.0 + 1) % n.max(1));
            }
            Formula::Send { from, to, payload: PayloadKind::Alpha(any_action(rng, n, actions)) }
        }
        4 => {
            let at = any_proc(rng, n);
            let mut from = any_proc(rng, n);
            if from == at {
                from = ProcessId((from.0 + 1) % n.max(1));
            }
            Formula::Recv { at, from, payload: PayloadKind::Alpha(any_action(rng, n, actions)) }
        }
        _ => {
            let from = any_proc(rng, n);
            let mut to = any_proc(rng, n);
            if to == from {
                to = ProcessId((to.0 + 1) % n.max(1));
            }
            Formula::Send { from, to, payload: PayloadKind::Ack(any_action(rng, n, actions)) }
        }
    }
}

fn gen(rng: &mut impl Rng, n: u16, actions: &[ActionId], depth: u32, k_budget: u32) -> Formula {
    if depth == 0 || n == 0 {
        return leaf(rng, n, actions);
    }
    match rng.random_range(0..9) {
        0 | 1 => leaf(rng, n, actions),
        2 => gen(rng, n, actions, depth - 1, k_budget).not(),
        3 => gen(rng, n, actions, depth - 1, k_budget)
            .and(gen(rng, n, actions, depth - 1, k_budget)),
        4 => gen(rng, n, actions, depth - 1, k_budget)
            .or(gen(rng, n, actions, depth - 1, k_budget)),
        5 => gen(rng, n, actions, depth - 1, k_budget)
            .implies(gen(rng, n, actions, depth - 1, k_budget)),
        6 => gen(rng, n, actions, depth - 1, k_budget).always(),
        7 => gen(rng, n, actions, depth - 1, k_budget).eventually(),
        _ => {
            if k_budget > 0 {
                gen(rng, n, actions, depth - 1, k_budget - 1).known_by(any_proc(rng, n))
            } else {
                gen(rng, n, actions, depth - 1, 0).eventually()
            }
        }
    }
}
