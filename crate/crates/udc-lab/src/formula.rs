//! The knowledge-temporal formula language: primitive event propositions,
//! Boolean connectives, box/diamond and the per-process knowledge operator,
//! with a three-valued finite-horizon evaluator.
//!
//! Truth at a point is exact for anything decided within the horizon.
//! `Unknown` marks horizon truncation (an unwitnessed eventuality, an
//! undecidable box) or knowledge claims a sampled system cannot support.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::model::{
    ActionId, Event, PayloadKind, Point, ProcessId, Provenance, Run, SystemOfRuns, Time,
};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum TruthValue {
    True,
    False,
    Unknown,
}

impl TruthValue {
    pub fn not(self) -> TruthValue {
        match self {
            TruthValue::True => TruthValue::False,
            TruthValue::False => TruthValue::True,
            TruthValue::Unknown => TruthValue::Unknown,
        }
    }

    pub fn and(self, other: TruthValue) -> TruthValue {
        use TruthValue::*;
        match (self, other) {
            (False, _) | (_, False) => False,
            (True, True) => True,
            _ => Unknown,
        }
    }

    pub fn or(self, other: TruthValue) -> TruthValue {
        use TruthValue::*;
        match (self, other) {
            (True, _) | (_, True) => True,
            (False, False) => False,
            _ => Unknown,
        }
    }

    pub fn implies(self, other: TruthValue) -> TruthValue {
        self.not().or(other)
    }

    pub fn from_bool(b: bool) -> TruthValue {
        if b {
            TruthValue::True
        } else {
            TruthValue::False
        }
    }
}

impl fmt::Display for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthValue::True => write!(f, "true"),
            TruthValue::False => write!(f, "false"),
            TruthValue::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Formula {
    Send { from: ProcessId, to: ProcessId, payload: PayloadKind },
    Recv { at: ProcessId, from: ProcessId, payload: PayloadKind },
    Crash(ProcessId),
    Do(ProcessId, ActionId),
    Init(ProcessId, ActionId),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Always(Box<Formula>),
    Eventually(Box<Formula>),
    Knows(ProcessId, Box<Formula>),
}

impl Formula {
    pub fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(other))
    }

    pub fn implies(self, other: Formula) -> Formula {
        Formula::Implies(Box::new(self), Box::new(other))
    }

    pub fn always(self) -> Formula {
        Formula::Always(Box::new(self))
    }

    pub fn eventually(self) -> Formula {
        Formula::Eventually(Box::new(self))
    }

    pub fn known_by(self, p: ProcessId) -> Formula {
        Formula::Knows(p, Box::new(self))
    }

    /// Right-nested conjunction of a nonempty list.
    pub fn conj(mut parts: Vec<Formula>) -> Formula {
        let last = parts.pop().expect("conj of empty list");
        parts.into_iter().rev().fold(last, |acc, f| f.and(acc))
    }

    /// Right-nested disjunction of a nonempty list.
    pub fn disj(mut parts: Vec<Formula>) -> Formula {
        let last = parts.pop().expect("disj of empty list");
        parts.into_iter().rev().fold(last, |acc, f| f.or(acc))
    }
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum EvalError {
    #[error("point out of range: run {run} time {time}")]
    PointOutOfRange { run: u32, time: Time },
    #[error("formula mentions {proc} but the system has n={n}")]
    BadProcess { proc: ProcessId, n: u16 },
}

const CLASS_COMM: u8 = 1;
const CLASS_CRASH: u8 = 2;
const CLASS_ACTIONS: u8 = 4;

#[derive(Clone, Debug)]
enum NodeKind {
    Send { from: ProcessId, to: ProcessId, payload: PayloadKind },
    Recv { at: ProcessId, from: ProcessId, payload: PayloadKind },
    Crash(ProcessId),
    Do(ProcessId, ActionId),
    Init(ProcessId, ActionId),
    Not(u32),
    And(u32, u32),
    Or(u32, u32),
    Implies(u32, u32),
    Always(u32),
    Eventually(u32),
    Knows(ProcessId, u32),
}

#[derive(Clone, Debug)]
struct FlatNode {
    kind: NodeKind,
    /// no temporal or knowledge operator below this node
    propositional: bool,
    /// syntactically stable: once true, stays true in any run
    stable: bool,
    /// which event classes the node's primitives mention
    classes: u8,
}

/// A formula compiled for evaluation: structurally deduplicated nodes (so
/// memoization keys are structural) plus per-node classifiers.
#[derive(Clone, Debug)]
pub struct CompiledFormula {
    nodes: Vec<FlatNode>,
    root: u32,
}

impl CompiledFormula {
    pub fn compile(f: &Formula, n: u16) -> Result<Self, EvalError> {
        let mut nodes = Vec::new();
        let mut dedup: HashMap<Formula, u32> = HashMap::new();
        let root = flatten(f, n, &mut nodes, &mut dedup)?;
        Ok(CompiledFormula { nodes, root })
    }
}

fn check_proc(p: ProcessId, n: u16) -> Result<(), EvalError> {
    if p.0 >= n {
        Err(EvalError::BadProcess { proc: p, n })
    } else {
        Ok(())
    }
}

fn flatten(
    f: &Formula,
    n: u16,
    nodes: &mut Vec<FlatNode>,
    dedup: &mut HashMap<Formula, u32>,
) -> Result<u32, EvalError> {
    if let Some(id) = dedup.get(f) {
        return Ok(*id);
    }
    let node = match f {
        Formula::Send { from, to, payload } => {
            check_proc(*from, n)?;
            check_proc(*to, n)?;
            FlatNode {
                kind: NodeKind::Send { from: *from, to: *to, payload: *payload },
                propositional: true,
                stable: true,
                classes: CLASS_COMM,
            }
        }
        Formula::Recv { at, from, payload } => {
            check_proc(*at, n)?;
            check_proc(*from, n)?;
            FlatNode {
                kind: NodeKind::Recv { at: *at, from: *from, payload: *payload },
                propositional: true,
                stable: true,
                classes: CLASS_COMM,
            }
        }
        Formula::Crash(p) => {
            check_proc(*p, n)?;
            FlatNode {
                kind: NodeKind::Crash(*p),
                propositional: true,
                stable: true,
                classes: CLASS_CRASH,
            }
        }
        Formula::Do(p, a) => {
            check_proc(*p, n)?;
            check_proc(a.owner, n)?;
            FlatNode {
                kind: NodeKind::Do(*p, *a),
                propositional: true,
                stable: true,
                classes: CLASS_ACTIONS,
            }
        }
        Formula::Init(p, a) => {
            check_proc(*p, n)?;
            check_proc(a.owner, n)?;
            FlatNode {
                kind: NodeKind::Init(*p, *a),
                propositional: true,
                stable: true,
                classes: CLASS_ACTIONS,
            }
        }
        Formula::Not(x) => {
            let c = flatten(x, n, nodes, dedup)?;
            let cn = &nodes[c as usize];
            FlatNode {
                kind: NodeKind::Not(c),
                propositional: cn.propositional,
                stable: false,
                classes: cn.classes,
            }
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let ca = flatten(a, n, nodes, dedup)?;
            let cb = flatten(b, n, nodes, dedup)?;
            let (pa, sa, la) = {
                let x = &nodes[ca as usize];
                (x.propositional, x.stable, x.classes)
            };
            let (pb, sb, lb) = {
                let x = &nodes[cb as usize];
                (x.propositional, x.stable, x.classes)
            };
            let kind = match f {
                Formula::And(..) => NodeKind::And(ca, cb),
                Formula::Or(..) => NodeKind::Or(ca, cb),
                _ => NodeKind::Implies(ca, cb),
            };
            let stable = match f {
                Formula::Implies(..) => false,
                _ => sa && sb,
            };
            FlatNode { kind, propositional: pa && pb, stable, classes: la | lb }
        }
        Formula::Always(x) => {
            let c = flatten(x, n, nodes, dedup)?;
            let classes = nodes[c as usize].classes;
            FlatNode { kind: NodeKind::Always(c), propositional: false, stable: true, classes }
        }
        Formula::Eventually(x) => {
            let c = flatten(x, n, nodes, dedup)?;
            let (s, classes) = {
                let x = &nodes[c as usize];
                (x.stable, x.classes)
            };
            FlatNode { kind: NodeKind::Eventually(c), propositional: false, stable: s, classes }
        }
        Formula::Knows(p, x) => {
            check_proc(*p, n)?;
            let c = flatten(x, n, nodes, dedup)?;
            let (s, classes) = {
                let x = &nodes[c as usize];
                (x.stable, x.classes)
            };
            FlatNode { kind: NodeKind::Knows(*p, c), propositional: false, stable: s, classes }
        }
    };
    nodes.push(node);
    let id = (nodes.len() - 1) as u32;
    dedup.insert(f.clone(), id);
    Ok(id)
}

/// Evaluates one compiled formula over one system, memoizing per (node, point).
pub struct Evaluator<'a> {
    sys: &'a SystemOfRuns,
    cf: CompiledFormula,
    memo: HashMap<(u32, Point), TruthValue>,
}

impl<'a> Evaluator<'a> {
    pub fn new(sys: &'a SystemOfRuns, f: &Formula) -> Result<Self, EvalError> {
        let cf = CompiledFormula::compile(f, sys.n)?;
        Ok(Evaluator { sys, cf, memo: HashMap::new() })
    }

    pub fn eval(&mut self, point: Point) -> Result<TruthValue, EvalError> {
        if point.run.0 as usize >= self.sys.runs.len()
            || point.time > self.sys.run(point.run).horizon()
        {
            return Err(EvalError::PointOutOfRange { run: point.run.0, time: point.time });
        }
        Ok(self.eval_node(self.cf.root, point))
    }

    /// Classes closed in this run for every primitive under `node`.
    fn frozen(&self, node: u32, run: &Run) -> bool {
        let classes = self.cf.nodes[node as usize].classes;
        let c = &run.closeout;
        (classes & CLASS_COMM == 0 || c.comm)
            && (classes & CLASS_CRASH == 0 || c.crashes)
            && (classes & CLASS_ACTIONS == 0 || c.actions)
    }

    fn eval_node(&mut self, node: u32, point: Point) -> TruthValue {
        if let Some(v) = self.memo.get(&(node, point)) {
            return *v;
        }
        let kind = self.cf.nodes[node as usize].kind.clone();
        let v = match kind {
            NodeKind::Send { from, to, payload } => {
                let hit = self.sys.history_at(point, from).iter().any(|e| {
                    matches!(&e.event, Event::Send { to: t, msg } if *t == to && msg.payload == payload)
                });
                TruthValue::from_bool(hit)
            }
            NodeKind::Recv { at, from, payload } => {
                let hit = self.sys.history_at(point, at).iter().any(|e| {
                    matches!(&e.event, Event::Recv { from: f, msg } if *f == from && msg.payload == payload)
                });
                TruthValue::from_bool(hit)
            }
            NodeKind::Crash(p) => {
                let hit =
                    self.sys.history_at(point, p).iter().any(|e| matches!(e.event, Event::Crash));
                TruthValue::from_bool(hit)
            }
            NodeKind::Do(p, a) => {
                let hit = self
                    .sys
                    .history_at(point, p)
                    .iter()
                    .any(|e| matches!(&e.event, Event::Do(x) if *x == a));
                TruthValue::from_bool(hit)
            }
            NodeKind::Init(p, a) => {
                let hit = self
                    .sys
                    .history_at(point, p)
                    .iter()
                    .any(|e| matches!(&e.event, Event::Init(x) if *x == a));
                TruthValue::from_bool(hit)
            }
            NodeKind::Not(c) => self.eval_node(c, point).not(),
            NodeKind::And(a, b) => {
                let va = self.eval_node(a, point);
                if va == TruthValue::False {
                    TruthValue::False
                } else {
                    va.and(self.eval_node(b, point))
                }
            }
            NodeKind::Or(a, b) => {
                let va = self.eval_node(a, point);
                if va == TruthValue::True {
                    TruthValue::True
                } else {
                    va.or(self.eval_node(b, point))
                }
            }
            NodeKind::Implies(a, b) => {
                let va = self.eval_node(a, point);
                if va == TruthValue::False {
                    TruthValue::True
                } else {
                    va.implies(self.eval_node(b, point))
                }
            }
            NodeKind::Eventually(c) => {
                let run = self.sys.run(point.run);
                let horizon = run.horizon();
                let mut any_unknown = false;
                let mut found = false;
                for m in point.time..=horizon {
                    match self.eval_node(c, Point { run: point.run, time: m }) {
                        TruthValue::True => {
                            found = true;
                            break;
                        }
                        TruthValue::Unknown => any_unknown = true,
                        TruthValue::False => {}
                    }
                }
                if found {
                    TruthValue::True
                } else if !any_unknown
                    && self.cf.nodes[c as usize].propositional
                    && self.frozen(c, self.sys.run(point.run))
                {
                    // no continuation can make the subformula begin to hold
                    TruthValue::False
                } else {
                    TruthValue::Unknown
                }
            }
            NodeKind::Always(c) => {
                let run_horizon = self.sys.run(point.run).horizon();
                let mut any_unknown = false;
                let mut refuted = false;
                for m in point.time..=run_horizon {
                    match self.eval_node(c, Point { run: point.run, time: m }) {
                        TruthValue::False => {
                            refuted = true;
                            break;
                        }
                        TruthValue::Unknown => any_unknown = true,
                        TruthValue::True => {}
                    }
                }
                if refuted {
                    TruthValue::False
                } else if any_unknown {
                    TruthValue::Unknown
                } else if self.cf.nodes[c as usize].stable
                    || (self.cf.nodes[c as usize].propositional
                        && self.frozen(c, self.sys.run(point.run)))
                {
                    TruthValue::True
                } else {
                    TruthValue::Unknown
                }
            }
            NodeKind::Knows(p, c) => {
                let class = self.sys.indist_class(p, point);
                let mut any_unknown = false;
                let mut refuted = false;
                for other in class {
                    match self.eval_node(c, other) {
                        TruthValue::False => {
                            refuted = true;
                            break;
                        }
                        TruthValue::Unknown => any_unknown = true,
                        TruthValue::True => {}
                    }
                }
                if refuted {
                    TruthValue::False
                } else if any_unknown {
                    TruthValue::Unknown
                } else if self.sys.provenance == Provenance::Exhaustive {
                    TruthValue::True
                } else {
                    // missing runs could only shrink the class; a True here
                    // would be unsound on a sampled system
                    TruthValue::Unknown
                }
            }
        };
        self.memo.insert((node, point), v);
        v
    }
}

/// Convenience single-point evaluation.
pub fn eval(sys: &SystemOfRuns, point: Point, f: &Formula) -> Result<TruthValue, EvalError> {
    Evaluator::new(sys, f)?.eval(point)
}

/// True iff the formula evaluates True at every point; False with the
/// earliest witness point otherwise; Unknown when undecided.
pub fn is_valid(
    sys: &SystemOfRuns,
    f: &Formula,
) -> Result<(TruthValue, Option<Point>), EvalError> {
    // compile once up front so formula errors surface before the sweep
    CompiledFormula::compile(f, sys.n)?;
    let per_run = |ri: usize| -> Result<(Option<Time>, bool), EvalError> {
        let mut ev = Evaluator::new(sys, f)?;
        let run = &sys.runs[ri];
        let mut unknown = false;
        for m in 0..=run.horizon() {
            match ev.eval(Point { run: crate::model::RunIdx(ri as u32), time: m })? {
                TruthValue::False => return Ok((Some(m), unknown)),
                TruthValue::Unknown => unknown = true,
                TruthValue::True => {}
            }
        }
        Ok((None, unknown))
    };
    let results: Vec<Result<(Option<Time>, bool), EvalError>> =
        crate::par::map_indexed(sys.runs.len(), per_run);
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    for (ri, (false_at, _)) in results.iter().enumerate() {
        if let Some(m) = false_at {
            return Ok((
                TruthValue::False,
                Some(Point { run: crate::model::RunIdx(ri as u32), time: *m }),
            ));
        }
    }
    if results.iter().any(|(_, u)| *u) {
        Ok((TruthValue::Unknown, None))
    } else {
        Ok((TruthValue::True, None))
    }
}

/// p always knows whether the formula holds: `K_p phi \/ K_p !phi` is valid.
pub fn is_local(sys: &SystemOfRuns, f: &Formula, p: ProcessId) -> Result<TruthValue, EvalError> {
    let test = f.clone().known_by(p).or(f.clone().not().known_by(p));
    Ok(is_valid(sys, &test)?.0)
}

/// Once true, remains true: `phi => []phi` is valid.
pub fn is_stable(sys: &SystemOfRuns, f: &Formula) -> Result<TruthValue, EvalError> {
    let test = f.clone().implies(f.clone().always());
    Ok(is_valid(sys, &test)?.0)
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum InsensitivityError {
    #[error("formula is not known to be local to {proc} (locality check: {locality})")]
    NotLocal { proc: ProcessId, locality: TruthValue },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Insensitive to failure by q: appending q's crash never changes the
/// formula's truth. Requires the formula to be local to q.
pub fn is_failure_insensitive(
    sys: &SystemOfRuns,
    f: &Formula,
    q: ProcessId,
) -> Result<TruthValue, InsensitivityError> {
    let locality = is_local(sys, f, q)?;
    if locality != TruthValue::True {
        return Err(InsensitivityError::NotLocal { proc: q, locality });
    }
    let mut ev = Evaluator::new(sys, f)?;
    let mut unknown = false;
    let points: Vec<Point> = sys.points().collect();
    for &point in &points {
        let hist = sys.history_at(point, q);
        let last_is_crash = hist.last().is_some_and(|e| matches!(e.event, Event::Crash));
        if !last_is_crash {
            continue;
        }
        // pair this crash-terminated point with all points holding the
        // crash-free prefix of q's history
        let mut base: Vec<crate::model::TimedEvent> = hist.to_vec();
        base.pop();
        let crashed_v = ev.eval(point)?;
        for other in sys.points_with_history(q, &base) {
            let plain_v = ev.eval(other)?;
            match (plain_v, crashed_v) {
                (TruthValue::Unknown, _) | (_, TruthValue::Unknown) => unknown = true,
                (a, b) if a != b => return Ok(TruthValue::False),
                _ => {}
            }
        }
    }
    if unknown {
        Ok(TruthValue::Unknown)
    } else {
        Ok(TruthValue::True)
    }
}

/// The knowledge-derived crash set used by the extraction transforms:
/// processes q with `K_p crash(q)` true at the point. Sound only on
/// exhaustive systems.
pub fn known_crashed_set(sys: &SystemOfRuns, point: Point, p: ProcessId) -> BTreeSet<ProcessId> {
    debug_assert_eq!(sys.provenance, Provenance::Exhaustive);
    let class = sys.indist_class(p, point);
    (0..sys.n)
        .map(ProcessId)
        .filter(|q| {
            class.iter().all(|pt| sys.run(pt.run).crashed_by(*q, pt.time))
        })
        .collect()
}

/// The largest k such that p knows at least k members of `subset` have
/// crashed: the minimum crashed-count over p's indistinguishability class.
pub fn known_crash_count(
    sys: &SystemOfRuns,
    point: Point,
    p: ProcessId,
    subset: &BTreeSet<ProcessId>,
) -> u32 {
    debug_assert_eq!(sys.provenance, Provenance::Exhaustive);
    let class = sys.indist_class(p, point);
    class
        .iter()
        .map(|pt| {
            subset.iter().filter(|q| sys.run(pt.run).crashed_by(**q, pt.time)).count() as u32
        })
        .min()
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// textual syntax (prefix notation)

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Send { from, to, payload } => write!(f, "(send {from} {to} {payload})"),
            Formula::Recv { at, from, payload } => write!(f, "(recv {at} {from} {payload})"),
            Formula::Crash(p) => write!(f, "(crash {p})"),
            Formula::Do(p, a) => write!(f, "(do {p} {a})"),
            Formula::Init(p, a) => write!(f, "(init {p} {a})"),
            Formula::Not(x) => write!(f, "(not {x})"),
            Formula::And(a, b) => write!(f, "(and {a} {b})"),
            Formula::Or(a, b) => write!(f, "(or {a} {b})"),
            Formula::Implies(a, b) => write!(f, "(implies {a} {b})"),
            Formula::Always(x) => write!(f, "(A {x})"),
            Formula::Eventually(x) => write!(f, "(E {x})"),
            Formula::Knows(p, x) => write!(f, "(K {p} {x})"),
        }
    }
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn parse_process(tok: &str) -> Result<ProcessId, String> {
    let rest = tok.strip_prefix('p').ok_or_else(|| format!("expected process, got {tok:?}"))?;
    rest.parse().map(ProcessId).map_err(|_| format!("bad process {tok:?}"))
}

pub fn parse_action(tok: &str) -> Result<ActionId, String> {
    let rest = tok.strip_prefix('a').ok_or_else(|| format!("expected action, got {tok:?}"))?;
    let (owner, tag) = match rest.split_once('.') {
        Some((o, t)) => (
            o.parse().map_err(|_| format!("bad action {tok:?}"))?,
            t.parse().map_err(|_| format!("bad action {tok:?}"))?,
        ),
        None => (rest.parse().map_err(|_| format!("bad action {tok:?}"))?, 0),
    };
    Ok(ActionId { owner: ProcessId(owner), tag })
}

pub fn parse_payload(tok: &str) -> Result<PayloadKind, String> {
    if tok.starts_with('a') {
        return Ok(PayloadKind::Alpha(parse_action(tok)?));
    }
    if let Some(rest) = tok.strip_prefix('k') {
        return Ok(PayloadKind::Ack(parse_action(&format!("a{rest}"))?));
    }
    if let Some(rest) = tok.strip_prefix('g') {
        return rest
            .parse()
            .map(PayloadKind::Gossip)
            .map_err(|_| format!("bad payload {tok:?}"));
    }
    Err(format!("bad payload {tok:?}"))
}

struct Parser {
    toks: Vec<String>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|s| s.as_str())
    }

    fn next(&mut self) -> Result<String, String> {
        let t = self.toks.get(self.pos).cloned().ok_or("unexpected end of formula")?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: &str) -> Result<(), String> {
        let t = self.next()?;
        if t == tok {
            Ok(())
        } else {
            Err(format!("expected {tok:?}, got {t:?}"))
        }
    }

    fn formula(&mut self) -> Result<Formula, String> {
        let parenthesized = self.peek() == Some("(");
        if parenthesized {
            self.expect("(")?;
        }
        let head = self.next()?;
        let out = match head.as_str() {
            "send" => Formula::Send {
                from: parse_process(&self.next()?)?,
                to: parse_process(&self.next()?)?,
                payload: parse_payload(&self.next()?)?,
            },
            "recv" => Formula::Recv {
                at: parse_process(&self.next()?)?,
                from: parse_process(&self.next()?)?,
                payload: parse_payload(&self.next()?)?,
            },
            "crash" => Formula::Crash(parse_process(&self.next()?)?),
            "do" => Formula::Do(parse_process(&self.next()?)?, parse_action(&self.next()?)?),
            "init" => Formula::Init(parse_process(&self.next()?)?, parse_action(&self.next()?)?),
            "not" => self.formula()?.not(),
            "and" => self.formula()?.and(self.formula()?),
            "or" => self.formula()?.or(self.formula()?),
            "implies" => self.formula()?.implies(self.formula()?),
            "A" => self.formula()?.always(),
            "E" => self.formula()?.eventually(),
            "K" => {
                let p = parse_process(&self.next()?)?;
                self.formula()?.known_by(p)
            }
            other => return Err(format!("unknown operator {other:?}")),
        };
        if parenthesized {
            self.expect(")")?;
        }
        Ok(out)
    }
}

pub fn parse_formula(s: &str) -> Result<Formula, String> {
    let mut p = Parser { toks: tokenize(s), pos: 0 };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(format!("trailing tokens after formula: {:?}", &p.toks[p.pos..]));
    }
    Ok(f)
}
