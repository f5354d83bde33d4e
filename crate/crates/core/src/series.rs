use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid series: {0}")]
pub struct SeriesError(pub String);

/// Echo amplitude versus half-echo delay τ.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    /// Half-echo delays τ (s), strictly increasing.
    pub tau: Vec<f64>,
    /// Normalized echo signal.
    pub signal: Vec<f64>,
    /// Shots contributing to each point.
    pub shots: Vec<usize>,
}

impl DecaySeries {
    pub fn new(tau: Vec<f64>, signal: Vec<f64>, shots: Vec<usize>) -> Result<Self, SeriesError> {
        let s = DecaySeries { tau, signal, shots };
        s.validate()?;
        Ok(s)
    }

    /// Series with one shot per point.
    pub fn from_points(tau: Vec<f64>, signal: Vec<f64>) -> Result<Self, SeriesError> {
        let n = tau.len();
        DecaySeries::new(tau, signal, vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.tau.len() != self.signal.len() || self.tau.len() != self.shots.len() {
            return Err(SeriesError("column lengths differ".into()));
        }
        if self.tau.iter().chain(&self.signal).any(|v| !v.is_finite()) {
            return Err(SeriesError("non-finite value".into()));
        }
        if self.tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SeriesError("tau must be strictly increasing".into()));
        }
        Ok(())
    }
}
