//! Ordered event log with text and CSV renderings.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// A frame put on the channel (and captured by the adversary).
    Tx,
    Drop,
    Inject,
    Emit,
    Accept,
    Reject,
    Queue,
    Wake,
    Refresh,
    Commit,
    Abandon,
    Desync,
    Alarm,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Tx => "tx",
            EventKind::Drop => "drop",
            EventKind::Inject => "inject",
            EventKind::Emit => "emit",
            EventKind::Accept => "accept",
            EventKind::Reject => "reject",
            EventKind::Queue => "queue",
            EventKind::Wake => "wake",
            EventKind::Refresh => "refresh",
            EventKind::Commit => "commit",
            EventKind::Abandon => "abandon",
            EventKind::Desync => "desync",
            EventKind::Alarm => "alarm",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub slot: u64,
    pub actor: String,
    pub kind: EventKind,
    pub detail: String,
}

impl Event {
    /// Value of a `key=value` token in the detail string.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail
            .split_whitespace()
            .find_map(|tok| tok.split_once('=').filter(|(k, _)| *k == key).map(|(_, v)| v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    events: Vec<Event>,
}

impl EventTrace {
    pub fn push(&mut self, slot: u64, actor: impl Into<String>, kind: EventKind, detail: String) {
        self.events.push(Event {
            slot,
            actor: actor.into(),
            kind,
            detail,
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!("{:>6} {:<4} {:<8} {}\n", e.slot, e.actor, e.kind, e.detail));
        }
        out
    }

    /// Columns: slot, actor, event, detail.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["slot", "actor", "event", "detail"])
            .expect("writing to memory");
        for e in &self.events {
            w.write_record([e.slot.to_string().as_str(), &e.actor, e.kind.as_str(), &e.detail])
                .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("input was UTF-8")
    }
}
