//! Line-delimited trace files (one record per appended event) and the
//! on-disk system layout: a directory holding a manifest, optional closeout
//! certificates, and one trace per run.
//!
//! Record fields, in fixed order: `seq|time|proc|kind|peer|msg|action|report`
//! with `-` for absent fields. The header line carries n, H, B and the seed.
//! Writing then reading a trace reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::model::{
    Closeout, Event, MessageId, ProcessId, Provenance, Run, SystemOfRuns, Time,
};
use crate::sim::FamilyConfig;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Config(#[from] crate::sim::ConfigError),
}

fn fmt_msg(msg: &MessageId) -> String {
    format!("{}#{}", msg.payload, msg.seq)
}

fn parse_msg(s: &str, src: ProcessId, dst: ProcessId) -> Result<MessageId, String> {
    let (payload_s, seq_s) =
        s.rsplit_once('#').ok_or_else(|| format!("expected payload#seq, got {s:?}"))?;
    Ok(MessageId {
        src,
        dst,
        payload: crate::formula::parse_payload(payload_s)?,
        seq: seq_s.parse().map_err(|_| format!("bad seq in {s:?}"))?,
    })
}

/// Serializes a run to the trace format.
pub fn write_trace(run: &Run) -> String {
    let mut records: Vec<(Time, ProcessId, &Event)> = Vec::new();
    for p in run.procs() {
        for e in run.full_history(p) {
            records.push((e.time, p, &e.event));
        }
    }
    records.sort_by_key(|(t, p, _)| (*t, *p));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}|{}|{}|{}",
        run.n(),
        run.horizon(),
        run.fairness_budget(),
        run.seed()
    );
    for (seq, (time, proc, event)) in records.iter().enumerate() {
        let (kind, peer, msg, action, report) = match event {
            Event::Send { to, msg } => {
                ("send", to.0.to_string(), fmt_msg(msg), "-".into(), "-".into())
            }
            Event::Recv { from, msg } => {
                ("recv", from.0.to_string(), fmt_msg(msg), "-".into(), "-".into())
            }
            Event::Init(a) => ("init", "-".into(), "-".into(), a.to_string(), "-".into()),
            Event::Do(a) => ("do", "-".into(), "-".into(), a.to_string(), "-".into()),
            Event::Crash => ("crash", "-".into(), "-".into(), "-".into(), "-".into()),
            Event::FdReport(r) => ("fd", "-".into(), "-".into(), "-".into(), r.to_string()),
            Event::FdReportPrimed(r) => {
                ("fdp", "-".into(), "-".into(), "-".into(), r.to_string())
            }
        };
        let _ = writeln!(out, "{seq}|{time}|{}|{kind}|{peer}|{msg}|{action}|{report}", proc.0);
    }
    out
}

/// Parses a trace back into a run. Closeout certificates do not travel in
/// trace files; the run is conservatively open unless every process crashed.
pub fn read_trace(text: &str) -> Result<Run, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(TraceError::Parse { line: 1, msg: "empty trace".into() })?;
    let head: Vec<&str> = header.split('|').collect();
    if head.len() != 4 {
        return Err(TraceError::Parse { line: 1, msg: format!("bad header {header:?}") });
    }
    let perr = |line: usize, msg: String| TraceError::Parse { line, msg };
    let n: u16 = head[0].parse().map_err(|_| perr(1, "bad n".into()))?;
    let horizon: Time = head[1].parse().map_err(|_| perr(1, "bad horizon".into()))?;
    let budget: u32 = head[2].parse().map_err(|_| perr(1, "bad budget".into()))?;
    let seed: u64 = head[3].parse().map_err(|_| perr(1, "bad seed".into()))?;
    let mut run = Run::new(n, horizon, budget, seed);

    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 8 {
            return Err(perr(lineno, format!("expected 8 fields, got {}", fields.len())));
        }
        let time: Time = fields[1].parse().map_err(|_| perr(lineno, "bad time".into()))?;
        let proc = ProcessId(
            fields[2].parse().map_err(|_| perr(lineno, "bad proc".into()))?,
        );
        if proc.0 >= n {
            return Err(perr(lineno, format!("proc {} out of range", proc.0)));
        }
        let peer = || -> Result<ProcessId, TraceError> {
            Ok(ProcessId(
                fields[4].parse().map_err(|_| perr(lineno, "bad peer".into()))?,
            ))
        };
        let event = match fields[3] {
            "send" => {
                let to = peer()?;
                let msg = parse_msg(fields[5], proc, to).map_err(|m| perr(lineno, m))?;
                Event::Send { to, msg }
            }
            "recv" => {
                let from = peer()?;
                let msg = parse_msg(fields[5], from, proc).map_err(|m| perr(lineno, m))?;
                Event::Recv { from, msg }
            }
            "init" => Event::Init(
                crate::formula::parse_action(fields[6]).map_err(|m| perr(lineno, m))?,
            ),
            "do" => Event::Do(
                crate::formula::parse_action(fields[6]).map_err(|m| perr(lineno, m))?,
            ),
            "crash" => Event::Crash,
            "fd" => Event::FdReport(fields[7].parse().map_err(|m| perr(lineno, m))?),
            "fdp" => Event::FdReportPrimed(fields[7].parse().map_err(|m| perr(lineno, m))?),
            other => return Err(perr(lineno, format!("unknown kind {other:?}"))),
        };
        run.append(proc, time, event);
    }

    if crate::model::faulty_set(&run).len() == n as usize {
        run.closeout = Closeout::all_closed();
    }
    Ok(run)
}

fn fmt_closeout(c: &Closeout) -> String {
    let mut flags = Vec::new();
    if c.crashes {
        flags.push("crashes");
    }
    if c.actions {
        flags.push("actions");
    }
    if c.comm {
        flags.push("comm");
    }
    if c.fd_stable {
        flags.push("fd_stable");
    }
    if c.fd_monotone {
        flags.push("fd_monotone");
    }
    if flags.is_empty() {
        "open".to_string()
    } else {
        flags.join(",")
    }
}

fn parse_closeout(s: &str) -> Closeout {
    let mut c = Closeout::open();
    for flag in s.split(',') {
        match flag.trim() {
            "crashes" => c.crashes = true,
            "actions" => c.actions = true,
            "comm" => c.comm = true,
            "fd_stable" => c.fd_stable = true,
            "fd_monotone" => c.fd_monotone = true,
            _ => {}
        }
    }
    c
}

#[derive(Clone, Debug)]
pub struct SystemMeta {
    pub family: FamilyConfig,
    pub provenance: Provenance,
    pub transform: Option<String>,
    pub run_count: usize,
}

fn read_file(path: &Path) -> Result<String, TraceError> {
    std::fs::read_to_string(path)
        .map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, content: &str) -> Result<(), TraceError> {
    std::fs::write(path, content)
        .map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

/// Writes a system directory: manifest, closeout certificates, one trace per
/// run. Subset order for generalized extractions is fixed lexicographic by
/// bitmask and recorded.
pub fn write_system(
    dir: &Path,
    family: &FamilyConfig,
    sys: &SystemOfRuns,
    transform: Option<&str>,
) -> Result<(), TraceError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| TraceError::Io { path: dir.display().to_string(), source })?;
    let mut manifest = crate::sim::render_config(family);
    manifest.push_str(&format!(
        "provenance = {}\n",
        match sys.provenance {
            Provenance::Exhaustive => "exhaustive",
            Provenance::Sampled => "sampled",
        }
    ));
    manifest.push_str(&format!("runs = {}\n", sys.runs.len()));
    manifest.push_str("subset_order = bitmask-lex\n");
    manifest.push_str(&format!("transform = {}\n", transform.unwrap_or("none")));
    write_file(&dir.join("manifest"), &manifest)?;

    let mut certs = String::new();
    for (i, run) in sys.runs.iter().enumerate() {
        let _ = writeln!(certs, "run_{i:05} = {}", fmt_closeout(&run.closeout));
    }
    write_file(&dir.join("certs"), &certs)?;

    for (i, run) in sys.runs.iter().enumerate() {
        write_file(&dir.join(format!("run_{i:05}.trace")), &write_trace(run))?;
    }
    Ok(())
}

/// Reads a system directory back. Certificates are applied when present.
pub fn read_system(dir: &Path) -> Result<(SystemMeta, SystemOfRuns), TraceError> {
    let manifest = read_file(&dir.join("manifest"))?;
    let mut config_lines = String::new();
    let mut provenance = Provenance::Sampled;
    let mut transform: Option<String> = None;
    let mut run_count: Option<usize> = None;
    for line in manifest.lines() {
        let trimmed = line.trim();
        let Some((key, value)) = trimmed.split_once('=') else {
            config_lines.push_str(line);
            config_lines.push('\n');
            continue;
        };
        match key.trim() {
            "provenance" => {
                provenance = match value.trim() {
                    "exhaustive" => Provenance::Exhaustive,
                    "sampled" => Provenance::Sampled,
                    other => {
                        return Err(TraceError::Manifest(format!("bad provenance {other:?}")))
                    }
                }
            }
            "runs" => {
                run_count = Some(
                    value
                        .trim()
                        .parse()
                        .map_err(|_| TraceError::Manifest("bad run count".into()))?,
                )
            }
            "subset_order" => {
                if value.trim() != "bitmask-lex" {
                    return Err(TraceError::Manifest(format!(
                        "unsupported subset order {}",
                        value.trim()
                    )));
                }
            }
            "transform" => {
                let v = value.trim();
                transform = (v != "none").then(|| v.to_string());
            }
            _ => {
                config_lines.push_str(line);
                config_lines.push('\n');
            }
        }
    }
    let family = crate::sim::parse_config(&config_lines)?;
    let count = run_count.ok_or_else(|| TraceError::Manifest("missing run count".into()))?;

    let certs: BTreeMap<usize, Closeout> = match std::fs::read_to_string(dir.join("certs")) {
        Ok(text) => text
            .lines()
            .filter_map(|line| {
                let (key, value) = line.split_once('=')?;
                let idx: usize = key.trim().strip_prefix("run_")?.parse().ok()?;
                Some((idx, parse_closeout(value.trim())))
            })
            .collect(),
        Err(_) => BTreeMap::new(),
    };

    let mut runs = Vec::with_capacity(count);
    for i in 0..count {
        let path = dir.join(format!("run_{i:05}.trace"));
        let mut run = read_trace(&read_file(&path)?)?;
        if let Some(c) = certs.get(&i) {
            run.closeout = *c;
        }
        runs.push(run);
    }
    let sys = SystemOfRuns::new(family.base.n, runs, provenance)
        .with_crash_window(family.crash_window);
    Ok((SystemMeta { family, provenance, transform, run_count: count }, sys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionId, Event, PayloadKind};

    #[test]
    fn header_echoes_the_run_parameters() {
        let run = Run::new(3, 60, 8, 42);
        let text = write_trace(&run);
        assert!(text.starts_with("3|60|8|42\n"));
        let back = read_trace(&text).unwrap();
        assert_eq!(back.n(), 3);
        assert_eq!(back.horizon(), 60);
        assert_eq!(back.fairness_budget(), 8);
        assert_eq!(back.seed(), 42);
    }

    #[test]
    fn every_event_kind_round_trips_bit_exactly() {
        use crate::fdetect::{FdReport, MappingId};
        let a = ActionId { owner: ProcessId(0), tag: 1 };
        let msg = crate::model::MessageId {
            src: ProcessId(0),
            dst: ProcessId(1),
            payload: PayloadKind::Alpha(a),
            seq: 3,
        };
        let ack = crate::model::MessageId {
            src: ProcessId(1),
            dst: ProcessId(0),
            payload: PayloadKind::Ack(a),
            seq: 1,
        };
        let mut run = Run::new(2, 9, 8, 7);
        run.append(ProcessId(0), 1, Event::Init(a));
        run.append(ProcessId(0), 2, Event::Send { to: ProcessId(1), msg });
        run.append(ProcessId(1), 3, Event::Recv { from: ProcessId(0), msg });
        run.append(ProcessId(1), 4, Event::Send { to: ProcessId(0), msg: ack });
        run.append(ProcessId(0), 5, Event::Do(a));
        run.append(
            ProcessId(0),
            6,
            Event::FdReport(FdReport::Generalized { set: Default::default(), k: 0 }),
        );
        run.append(
            ProcessId(1),
            6,
            Event::FdReportPrimed(FdReport::GStandard {
                token: "correct:{0}".into(),
                mapping: MappingId::Complement,
            }),
        );
        run.append(ProcessId(1), 7, Event::Crash);
        let one = write_trace(&run);
        let back = read_trace(&one).unwrap();
        let two = write_trace(&back);
        assert_eq!(one, two);
        for p in run.procs() {
            assert_eq!(run.full_history(p), back.full_history(p));
        }
    }

    #[test]
    fn malformed_traces_are_rejected_with_line_numbers() {
        assert!(read_trace("").is_err());
        assert!(read_trace("2|4|8").is_err());
        let bad_kind = "2|4|8|0\n0|1|0|zap|-|-|-|-\n";
        assert!(matches!(read_trace(bad_kind), Err(TraceError::Parse { line: 2, .. })));
        let bad_proc = "2|4|8|0\n0|1|9|crash|-|-|-|-\n";
        assert!(read_trace(bad_proc).is_err());
    }

    #[test]
    fn all_crashed_traces_come_back_closed() {
        let mut run = Run::new(1, 3, 8, 0);
        run.append(ProcessId(0), 1, Event::Crash);
        let back = read_trace(&write_trace(&run)).unwrap();
        assert!(back.closeout.crashes && back.closeout.actions && back.closeout.comm);
        // partially-live traces come back conservatively open
        let open = read_trace(&write_trace(&Run::new(1, 3, 8, 0))).unwrap();
        assert_eq!(open.closeout, Closeout::open());
    }

    #[test]
    fn system_directories_round_trip_with_certificates() {
        let dir = std::env::temp_dir().join(format!("udc-lab-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let family = crate::sim::parse_config(
            "n = 2\nhorizon = 6\nbudget = 4\ninit = 0:a0.0\ncrash = none\nseed = 5\n",
        )
        .unwrap();
        let run = crate::sim::simulate(&family.base).unwrap();
        let closeout = run.closeout;
        let sys = SystemOfRuns::new(2, vec![run], Provenance::Sampled);
        write_system(&dir, &family, &sys, None).unwrap();
        let (meta, back) = read_system(&dir).unwrap();
        assert_eq!(meta.provenance, Provenance::Sampled);
        assert_eq!(meta.run_count, 1);
        assert!(meta.transform.is_none());
        assert_eq!(back.runs[0].closeout, closeout);
        assert_eq!(back.runs[0], sys.runs[0]);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
