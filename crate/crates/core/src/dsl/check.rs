use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::{DelaySpec, SequenceAst, Span, StmtKind};
use crate::program::{DelayTime, Event, PhaseCycle, Pulse, PulseProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: Span,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}: {}",
            self.span.line, self.span.column, self.message
        )
    }
}

const KEYWORDS: [&str; 7] = ["seq", "cycle", "pulse", "delay", "angle", "phase", "dur"];

/// Semantic checks on a parsed sequence. Never fails; problems come back as diagnostics.
pub fn validate(ast: &SequenceAst) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |span: Span, message: String| {
        out.push(Diagnostic {
            severity: Severity::Error,
            message,
            span,
        })
    };

    let mut pulse_labels: HashMap<&str, usize> = HashMap::new();
    for st in &ast.statements {
        if let StmtKind::Pulse { label: Some(l), .. } = &st.kind {
            *pulse_labels.entry(l.as_str()).or_default() += 1;
        }
    }

    let mut cycled: HashMap<&str, Span> = HashMap::new();
    for st in &ast.statements {
        match &st.kind {
            StmtKind::Cycle { label, phases } => {
                if cycled.insert(label.as_str(), st.span).is_some() {
                    err(st.span, format!("pulse '{label}' has more than one cycle"));
                }
                if phases.is_empty() {
                    err(st.span, format!("cycle '{label}' has no phases"));
                }
                match pulse_labels.get(label.as_str()).copied().unwrap_or(0) {
                    0 => err(st.span, format!("cycle label '{label}' is never referenced by a pulse")),
                    1 => {}
                    n => err(
                        st.span,
                        format!("cycle label '{label}' is referenced by {n} pulses; expected exactly one"),
                    ),
                }
            }
            StmtKind::Pulse { angle, dur, .. } => {
                if !(*angle > 0.0 && *angle <= 360.0) {
                    err(
                        st.span,
                        format!("pulse angle {angle} is outside (0, 360] degrees"),
                    );
                }
                if let Some(d) = dur {
                    if !(d.value > 0.0) {
                        err(
                            st.span,
                            format!("pulse duration {} must be positive", d.value),
                        );
                    }
                }
            }
            StmtKind::Delay(DelaySpec::Time(t)) => {
                if !(t.value > 0.0) {
                    err(st.span, format!("delay {} must be positive", t.value));
                }
            }
            StmtKind::Delay(DelaySpec::Symbol(s)) => {
                if pulse_labels.contains_key(s.as_str()) {
                    err(
                        st.span,
                        format!("delay symbol '{s}' is also used as a pulse label"),
                    );
                }
                if KEYWORDS.contains(&s.as_str()) {
                    err(st.span, format!("delay symbol '{s}' is a reserved word"));
                }
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("program has {} error diagnostic(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error("unbound symbol '{0}'")]
    UnboundSymbol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingMode {
    /// Every symbolic delay must be bound.
    Concrete,
    /// Unbound symbols stay symbolic in the program.
    AllowSymbolic,
}

/// Lowers a validated AST to a [`PulseProgram`] (degrees → radians, time literals → seconds).
pub fn compile(
    ast: &SequenceAst,
    bindings: &HashMap<String, f64>,
    mode: BindingMode,
) -> Result<PulseProgram, CompileError> {
    let errors: Vec<Diagnostic> = validate(ast)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(CompileError::Invalid(errors));
    }

    let mut program = PulseProgram::new(ast.name.clone());
    let mut label_index: HashMap<&str, usize> = HashMap::new();
    let mut pending: Vec<(&str, &Vec<f64>)> = Vec::new();
    for st in &ast.statements {
        match &st.kind {
            StmtKind::Cycle { label, phases } => pending.push((label, phases)),
            StmtKind::Pulse {
                label,
                angle,
                phase,
                dur,
            } => {
                if let Some(l) = label {
                    label_index.insert(l, program.events.len());
                }
                program.events.push(Event::Pulse(Pulse {
                    label: label.clone(),
                    angle: angle.to_radians(),
                    phase: phase.to_radians(),
                    duration: dur.map(|d| d.seconds()),
                }));
            }
            StmtKind::Delay(DelaySpec::Time(t)) => program
                .events
                .push(Event::Delay(DelayTime::Fixed(t.seconds()))),
            StmtKind::Delay(DelaySpec::Symbol(s)) => {
                let d = match bindings.get(s) {
                    Some(v) => DelayTime::Fixed(*v),
                    None if mode == BindingMode::AllowSymbolic => DelayTime::Symbol(s.clone()),
                    None => return Err(CompileError::UnboundSymbol(s.clone())),
                };
                program.events.push(Event::Delay(d));
            }
        }
    }
    for (label, phases) in pending {
        // validate() guarantees exactly one pulse carries the label.
        let event = label_index[label];
        program.cycles.push(PhaseCycle {
            event,
            offsets: phases.iter().map(|p| p.to_radians()).collect(),
        });
    }
    Ok(program)
}
