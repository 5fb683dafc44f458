use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    UpdateApplied,
    UpdateRejected,
    MessageSent,
    MessageDropped,
    MessageDuplicated,
    MessageDelivered,
    QueryResult,
    ConvergenceCheck,
    /// Type-specific observation, e.g. an entry entering a top-K replica's
    /// known top.
    Note,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::UpdateApplied => "update-applied",
            EventKind::UpdateRejected => "update-rejected",
            EventKind::MessageSent => "message-sent",
            EventKind::MessageDropped => "message-dropped",
            EventKind::MessageDuplicated => "message-duplicated",
            EventKind::MessageDelivered => "message-delivered",
            EventKind::QueryResult => "query-result",
            EventKind::ConvergenceCheck => "convergence-check",
            EventKind::Note => "note",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub fields: Vec<String>,
}

impl TraceEvent {
    /// Value of the first `key=value` field with this key.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find_map(|f| f.strip_prefix(key)?.strip_prefix('='))
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.tick, self.kind)?;
        for field in &self.fields {
            write!(f, "\t{field}")?;
        }
        Ok(())
    }
}

/// Ordered event log of one run. Rendered one event per line as
/// `<tick>\t<kind>\t<field>...`, fields in the order they were recorded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, tick: u64, kind: EventKind, fields: Vec<String>) {
        debug_assert!(fields.iter().all(|f| !f.contains(['\t', '\n'])));
        self.events.push(TraceEvent { tick, kind, fields });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}
