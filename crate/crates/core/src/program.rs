//! Compiled pulse programs: pulses, delays and per-shot phase cycles.

use std::collections::HashMap;
use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("unbound symbol '{0}'")]
    UnboundSymbol(String),
    #[error("invalid program: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayTime {
    /// Seconds.
    Fixed(f64),
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub label: Option<String>,
    /// Nominal rotation angle (rad).
    pub angle: f64,
    /// RF phase (rad).
    pub phase: f64,
    /// Explicit duration (s); `None` means "derive from the Rabi frequency".
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Pulse(Pulse),
    Delay(DelayTime),
}

/// Phase offsets (rad) applied to one pulse on successive shots.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCycle {
    pub event: usize,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    pub name: String,
    pub events: Vec<Event>,
    pub cycles: Vec<PhaseCycle>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl PulseProgram {
    pub fn new(name: impl Into<String>) -> Self {
        PulseProgram {
            name: name.into(),
            events: Vec::new(),
            cycles: Vec::new(),
        }
    }

    pub fn pulse(mut self, angle: f64, phase: f64) -> Self {
        self.events.push(Event::Pulse(Pulse {
            label: None,
            angle,
            phase,
            duration: None,
        }));
        self
    }

    pub fn delay(mut self, d: DelayTime) -> Self {
        self.events.push(Event::Delay(d));
        self
    }

    pub fn delay_symbol(self, name: &str) -> Self {
        self.delay(DelayTime::Symbol(name.to_string()))
    }

    /// `±π/2 : τ : π : τ : π/2`, first pulse cycled through phases {0, π}.
    pub fn hahn_echo() -> Self {
        let mut p = PulseProgram::new("hahn")
            .pulse(PI / 2.0, 0.0)
            .delay_symbol("tau")
            .pulse(PI, 0.0)
            .delay_symbol("tau")
            .pulse(PI / 2.0, 0.0);
        p.cycles.push(PhaseCycle {
            event: 0,
            offsets: vec![0.0, PI],
        });
        p
    }

    /// `π/2 : τ : π/2`.
    pub fn ramsey() -> Self {
        PulseProgram::new("ramsey")
            .pulse(PI / 2.0, 0.0)
            .delay_symbol("tau")
            .pulse(PI / 2.0, 0.0)
    }

    /// Number of distinct shots: the least common multiple of the cycle lengths.
    pub fn shot_count(&self) -> usize {
        self.cycles
            .iter()
            .map(|c| c.offsets.len().max(1))
            .fold(1, |acc, n| acc / gcd(acc, n) * n)
    }

    /// Events of shot `k` with cycle offsets folded into the pulse phases.
    pub fn shot(&self, k: usize) -> Vec<Event> {
        let mut events = self.events.clone();
        for c in &self.cycles {
            if c.offsets.is_empty() {
                continue;
            }
            if let Some(Event::Pulse(p)) = events.get_mut(c.event) {
                p.phase += c.offsets[k % c.offsets.len()];
            }
        }
        events
    }

    pub fn symbols(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.events {
            if let Event::Delay(DelayTime::Symbol(s)) = e {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }

    pub fn is_bound(&self) -> bool {
        self.symbols().is_empty()
    }

    /// Substitutes symbol values (s); unbound symbols are left in place.
    pub fn bind(&self, bindings: &HashMap<String, f64>) -> PulseProgram {
        let mut out = self.clone();
        for e in out.events.iter_mut() {
            if let Event::Delay(DelayTime::Symbol(s)) = e {
                if let Some(v) = bindings.get(s.as_str()) {
                    *e = Event::Delay(DelayTime::Fixed(*v));
                }
            }
        }
        out
    }

    /// Binds one symbol.
    pub fn with(&self, name: &str, value: f64) -> PulseProgram {
        let mut m = HashMap::new();
        m.insert(name.to_string(), value);
        self.bind(&m)
    }

    pub fn require_bound(&self) -> Result<(), ProgramError> {
        match self.symbols().into_iter().next() {
            Some(s) => Err(ProgramError::UnboundSymbol(s)),
            None => Ok(()),
        }
    }
}
