use thiserror::Error;

/// Errors raised by the simulation and prediction library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent model/configuration data.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the operation's domain (NaN, negative voltage, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Text could not be parsed into the expected file format.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario classification failed: {0}")]
    Classification(String),

    /// The circuit mass matrix could not be factored.
    #[error("internal error: {0}")]
    Internal(String),

    /// Newton failed at the step-size floor. Carries the last accepted time.
    #[error("integration failed at t = {t:.6e} s: {reason}")]
    Integration { t: f64, reason: String },

    #[error("event error: {0}")]
    Event(String),

    /// The trace never shows an accepted switching-ON event.
    #[error("switch never turned on: {0}")]
    NotSwitched(String),

    #[error("window [{start:.6e}, {end:.6e}] s is outside the trace")]
    Window { start: f64, end: f64 },

    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_nan() {
        Err(Error::Input(format!("{name} is NaN")))
    } else {
        Ok(())
    }
}
